use crate::error::{reject, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Image intensities in `[-1, 1]`, stored channel-major (`[C, H, W]`).
#[derive(Clone, Debug, PartialEq)]
pub struct Image<T> {
    pub id: String,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

/// `(height, width, channels)` of an image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Extents {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Extents {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        Self { height, width, channels }
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<T: Scalar> Image<T> {
    pub fn new(id: impl Into<String>, extents: Extents, data: Vec<T>) -> Result<Self> {
        if extents.is_empty() || data.len() != extents.len() {
            return reject(format!(
                "image data length {} does not match extents {extents:?}",
                data.len()
            ));
        }
        Ok(Self {
            id: id.into(),
            channels: extents.channels,
            height: extents.height,
            width: extents.width,
            data,
        })
    }

    pub fn filled(id: impl Into<String>, extents: Extents, value: T) -> Self {
        Self::new(id, extents, vec![value; extents.len()]).expect("nonempty extents")
    }

    pub fn extents(&self) -> Extents {
        Extents::new(self.height, self.width, self.channels)
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> T {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: T) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn to_tensor(&self) -> Tensor<T> {
        Tensor::new(vec![self.channels, self.height, self.width], self.data.clone()).expect("valid extents")
    }

    pub fn from_tensor(id: impl Into<String>, t: Tensor<T>) -> Result<Self> {
        match *t.shape() {
            [c, h, w] => Self::new(id, Extents::new(h, w, c), t.into_data()),
            _ => reject(format!("expected [C, H, W] tensor, got {:?}", t.shape())),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Image<U> {
        Image {
            id: self.id.clone(),
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}
