//! Box masks: the in-box overwrite, its complement, the evaluation grid and the
//! training-time box sampler.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{reject, Error, Result};
use crate::image_data::{Extents, Image};
use crate::scalar::Scalar;

/// Axis-aligned pixel rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelBox {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl PixelBox {
    pub fn new(top: usize, left: usize, height: usize, width: usize) -> Self {
        Self { top, left, height, width }
    }

    pub fn full(extents: Extents) -> Self {
        Self::new(0, 0, extents.height, extents.width)
    }

    pub fn bottom(&self) -> usize {
        self.top + self.height
    }

    pub fn right(&self) -> usize {
        self.left + self.width
    }

    pub fn area(&self) -> usize {
        self.height * self.width
    }

    pub fn contains(&self, y: usize, x: usize) -> bool {
        (self.top..self.bottom()).contains(&y) && (self.left..self.right()).contains(&x)
    }

    pub fn check_within(&self, height: usize, width: usize) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.bottom() > height || self.right() > width {
            return reject(format!("box {self:?} is not contained in a {height}x{width} image"));
        }
        Ok(())
    }
}

/// Zero every channel inside `b`.
pub fn apply_box_mask<T: Scalar>(image: &Image<T>, b: PixelBox) -> Result<Image<T>> {
    b.check_within(image.height, image.width)?;
    let mut out = image.clone();
    for c in 0..image.channels {
        for y in b.top..b.bottom() {
            for x in b.left..b.right() {
                out.set(c, y, x, T::zero());
            }
        }
    }
    Ok(out)
}

/// Zero every channel outside `b`.
pub fn apply_complement_mask<T: Scalar>(image: &Image<T>, b: PixelBox) -> Result<Image<T>> {
    b.check_within(image.height, image.width)?;
    let mut out = Image::filled(image.id.clone(), image.extents(), T::zero());
    for c in 0..image.channels {
        for y in b.top..b.bottom() {
            for x in b.left..b.right() {
                out.set(c, y, x, image.get(c, y, x));
            }
        }
    }
    Ok(out)
}

/// Parameters of a regular grid of boxes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub image_height: usize,
    pub image_width: usize,
    pub box_height: usize,
    pub box_width: usize,
    pub stride: usize,
    pub edge_exclusion: usize,
}

impl GridSpec {
    /// Compact form `HxW:BHxBW:sS:eE`, used in feature file headers.
    pub fn label(&self) -> String {
        format!(
            "{}x{}:{}x{}:s{}:e{}",
            self.image_height, self.image_width, self.box_height, self.box_width, self.stride, self.edge_exclusion
        )
    }

    pub fn parse_label(s: &str) -> Result<Self> {
        let bad = || Error::RejectedInput(format!("malformed grid label {s:?}"));
        let parts: Vec<&str> = s.split(':').collect();
        let [img, bx, stride, excl] = parts.as_slice() else {
            return Err(bad());
        };
        let pair = |p: &str| -> Result<(usize, usize)> {
            let (a, b) = p.split_once('x').ok_or_else(bad)?;
            Ok((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?))
        };
        let (ih, iw) = pair(img)?;
        let (bh, bw) = pair(bx)?;
        let stride = stride.strip_prefix('s').ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let edge = excl.strip_prefix('e').ok_or_else(bad)?.parse().map_err(|_| bad())?;
        Ok(Self {
            image_height: ih,
            image_width: iw,
            box_height: bh,
            box_width: bw,
            stride,
            edge_exclusion: edge,
        })
    }
}

/// Row-major list of grid boxes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoxGrid {
    pub spec: GridSpec,
    pub boxes: Vec<PixelBox>,
}

impl BoxGrid {
    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }
}

fn lattice(extent: usize, size: usize, stride: usize, exclusion: usize) -> Vec<usize> {
    (0..)
        .map(|k| k * stride)
        .take_while(|&t| t + size + exclusion <= extent)
        .filter(|&t| t >= exclusion)
        .collect()
}

/// All boxes whose top-left corner lies on the stride lattice (anchored at 0)
/// and which stay at least `edge_exclusion` pixels from every image edge.
pub fn grid_boxes(spec: GridSpec) -> Result<BoxGrid> {
    if spec.stride == 0 {
        return reject("grid stride must be at least 1");
    }
    if spec.box_height == 0 || spec.box_width == 0 {
        return reject("grid boxes must have positive extents");
    }
    let rows = lattice(spec.image_height, spec.box_height, spec.stride, spec.edge_exclusion);
    let cols = lattice(spec.image_width, spec.box_width, spec.stride, spec.edge_exclusion);
    let boxes: Vec<PixelBox> = rows
        .iter()
        .flat_map(|&t| cols.iter().map(move |&l| PixelBox::new(t, l, spec.box_height, spec.box_width)))
        .collect();
    if boxes.is_empty() {
        return Err(Error::EmptyGrid);
    }
    Ok(BoxGrid { spec, boxes })
}

/// Inclusive range of box side lengths for training-time masks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxSizeRange {
    pub min: usize,
    pub max: usize,
}

impl BoxSizeRange {
    /// Sides uniform in `[extent / 4, extent / 2]`.
    pub fn default_for(extent: usize) -> Self {
        Self { min: (extent / 4).max(1), max: (extent / 2).max(1) }
    }
}

/// Box with independently uniform height and width in `sizes`, then a
/// uniform in-bounds position.
pub fn sample_random_box(extents: Extents, sizes: BoxSizeRange, rng: &mut impl Rng) -> Result<PixelBox> {
    if sizes.min == 0 || sizes.min > sizes.max || sizes.max > extents.height.min(extents.width) {
        return reject(format!(
            "box size range {}..={} infeasible for a {}x{} image",
            sizes.min, sizes.max, extents.height, extents.width
        ));
    }
    let height = rng.random_range(sizes.min..=sizes.max);
    let width = rng.random_range(sizes.min..=sizes.max);
    let top = rng.random_range(0..=extents.height - height);
    let left = rng.random_range(0..=extents.width - width);
    Ok(PixelBox::new(top, left, height, width))
}
