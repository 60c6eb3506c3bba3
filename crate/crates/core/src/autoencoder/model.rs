use rand::Rng;

use crate::autoencoder::arch::ArchConfig;
use crate::autoencoder::checkpoint::{Checkpoint, TrainingMeta};
use crate::error::{reject, Result};
use crate::image_data::Image;
use crate::layers::{Layer, Mode};
use crate::masking::{apply_box_mask, PixelBox};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Latent vector produced by the encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct Code<T>(pub Vec<T>);

/// Encoder/decoder pair.
#[derive(Clone, Debug)]
pub struct Autoencoder<T> {
    arch: ArchConfig,
    pub(crate) encoder: Vec<Layer<T>>,
    pub(crate) decoder: Vec<Layer<T>>,
}

impl<T: Scalar> Autoencoder<T> {
    pub fn init(arch: ArchConfig, rng: &mut impl Rng) -> Result<Self> {
        arch.validate()?;
        let encoder = arch.encoder_specs().into_iter().map(|s| Layer::init(s, rng)).collect::<Result<_>>()?;
        let decoder = arch.decoder_specs().into_iter().map(|s| Layer::init(s, rng)).collect::<Result<_>>()?;
        Ok(Self { arch, encoder, decoder })
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    /// Every layer with its checkpoint prefix, encoder first.
    pub(crate) fn named_layers(&self) -> impl Iterator<Item = (String, &Layer<T>)> {
        let enc = self.encoder.iter().enumerate().map(|(i, l)| (format!("encoder.{i}.{}", l.spec().kind_name()), l));
        let dec = self.decoder.iter().enumerate().map(|(i, l)| (format!("decoder.{i}.{}", l.spec().kind_name()), l));
        enc.chain(dec)
    }

    pub(crate) fn layers_mut(&mut self) -> impl DoubleEndedIterator<Item = &mut Layer<T>> {
        self.encoder.iter_mut().chain(self.decoder.iter_mut())
    }

    pub(crate) fn layers(&self) -> impl DoubleEndedIterator<Item = &Layer<T>> {
        self.encoder.iter().chain(self.decoder.iter())
    }

    pub(crate) fn from_layers(arch: ArchConfig, encoder: Vec<Layer<T>>, decoder: Vec<Layer<T>>) -> Self {
        Self { arch, encoder, decoder }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        ckpt.build_model()
    }

    pub fn to_checkpoint(&self, meta: TrainingMeta) -> Checkpoint {
        Checkpoint::from_model(self, meta)
    }

    fn check_image(&self, image: &Image<T>) -> Result<()> {
        if image.extents() != self.arch.extents() {
            return reject(format!(
                "image {} has extents {:?}, model expects {:?}",
                image.id,
                image.extents(),
                self.arch.extents()
            ));
        }
        Ok(())
    }

    /// Infer-mode encoder over a `[N, C, H, W]` batch.
    pub fn encode_batch(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        self.encoder.iter().try_fold(batch.clone(), |x, l| l.forward(&x, Mode::Infer))
    }

    /// Infer-mode decoder over a `[N, code_dim]` batch.
    pub fn decode_batch(&self, codes: &Tensor<T>) -> Result<Tensor<T>> {
        self.decoder.iter().try_fold(codes.clone(), |x, l| l.forward(&x, Mode::Infer))
    }

    pub fn reconstruct_batch(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        self.decode_batch(&self.encode_batch(batch)?)
    }

    pub fn encode(&self, image: &Image<T>) -> Result<Code<T>> {
        self.check_image(image)?;
        let batch = Tensor::stack(&[image.to_tensor()])?;
        Ok(Code(self.encode_batch(&batch)?.into_data()))
    }

    pub fn decode(&self, code: &Code<T>) -> Result<Image<T>> {
        if code.0.len() != self.arch.code_dim {
            return reject(format!("code length {} differs from code dimension {}", code.0.len(), self.arch.code_dim));
        }
        let out = self.decode_batch(&Tensor::new(vec![1, self.arch.code_dim], code.0.clone())?)?;
        Image::from_tensor("decoded", out.item(0))
    }

    /// `decode(encode(image))`.
    pub fn reconstruct(&self, image: &Image<T>) -> Result<Image<T>> {
        let mut out = self.decode(&self.encode(image)?)?;
        out.id = image.id.clone();
        Ok(out)
    }

    /// `decode(encode(apply_box_mask(image, b)))`.
    pub fn inpaint(&self, image: &Image<T>, b: PixelBox) -> Result<Image<T>> {
        self.inpaint_with_hook(image, b, |_| {})
    }

    /// As [`Autoencoder::inpaint`], handing the exact encoder input to `hook`.
    pub fn inpaint_with_hook(&self, image: &Image<T>, b: PixelBox, hook: impl FnOnce(&Image<T>)) -> Result<Image<T>> {
        self.check_image(image)?;
        let masked = apply_box_mask(image, b)?;
        hook(&masked);
        let mut out = self.reconstruct(&masked)?;
        out.id = image.id.clone();
        Ok(out)
    }

    /// Inpaint one image under each box, as a single batch.
    pub fn inpaint_many(&self, image: &Image<T>, boxes: &[PixelBox]) -> Result<Vec<Image<T>>> {
        self.check_image(image)?;
        if boxes.is_empty() {
            return Ok(Vec::new());
        }
        let masked = boxes
            .iter()
            .map(|&b| apply_box_mask(image, b).map(|m| m.to_tensor()))
            .collect::<Result<Vec<_>>>()?;
        let out = self.reconstruct_batch(&Tensor::stack(&masked)?)?;
        (0..boxes.len()).map(|i| Image::from_tensor(image.id.clone(), out.item(i))).collect()
    }
}
