use serde::{Deserialize, Serialize};

use crate::error::{reject, Result};
use crate::image_data::Extents;
use crate::layers::LayerSpec;

/// Encoder/decoder layout.
///
/// Encoder: per stage `conv -> batch-norm -> elu -> 2x avg-pool`, then a dense
/// map to the code. Decoder: dense map to a `decoder_seed_channels` feature map,
/// elu, then per stage `2x bilinear upsample -> conv -> batch-norm -> elu`, and a
/// final conv to the image channels followed by tanh.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub kernel: usize,
    pub encoder_channels: Vec<usize>,
    pub decoder_channels: Vec<usize>,
    pub decoder_seed_channels: usize,
    pub code_dim: usize,
    pub hidden_nonlinearity: String,
    pub output_nonlinearity: String,
    pub bn_eps: f64,
    pub bn_momentum: f64,
}

impl Default for ArchConfig {
    /// 64x64 grayscale, encoder stages 16/32/64/128, code 64, decoder 64/32/16.
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            channels: 1,
            kernel: 3,
            encoder_channels: vec![16, 32, 64, 128],
            decoder_channels: vec![64, 32, 16],
            decoder_seed_channels: 16,
            code_dim: 64,
            hidden_nonlinearity: "elu".into(),
            output_nonlinearity: "tanh".into(),
            bn_eps: 1e-5,
            bn_momentum: 0.9,
        }
    }
}

impl ArchConfig {
    /// A narrower variant of the default, sized for single-core training runs.
    pub fn compact(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            encoder_channels: vec![8, 16, 32, 32],
            decoder_channels: vec![16, 8, 8],
            decoder_seed_channels: 8,
            code_dim: 32,
            ..Self::default()
        }
    }

    pub fn extents(&self) -> Extents {
        Extents::new(self.height, self.width, self.channels)
    }

    pub fn encoder_specs(&self) -> Vec<LayerSpec> {
        let (mut c, mut h, mut w) = (self.channels, self.height, self.width);
        let mut specs = Vec::new();
        for &out in &self.encoder_channels {
            specs.push(LayerSpec::Conv { in_channels: c, out_channels: out, kernel: self.kernel, stride: 1, height: h, width: w });
            specs.push(LayerSpec::BatchNorm { channels: out, height: h, width: w, eps: self.bn_eps, momentum: self.bn_momentum });
            specs.push(LayerSpec::Elu { dims: vec![out, h, w] });
            specs.push(LayerSpec::AvgPool { channels: out, height: h, width: w, window: 2 });
            c = out;
            h /= 2;
            w /= 2;
        }
        specs.push(LayerSpec::FullyConnected { in_dims: vec![c, h, w], out_dims: vec![self.code_dim] });
        specs
    }

    fn seed_extents(&self) -> (usize, usize) {
        let f = 1usize << self.decoder_channels.len();
        (self.height / f, self.width / f)
    }

    pub fn decoder_specs(&self) -> Vec<LayerSpec> {
        let (mut h, mut w) = self.seed_extents();
        let mut c = self.decoder_seed_channels;
        let mut specs = vec![
            LayerSpec::FullyConnected { in_dims: vec![self.code_dim], out_dims: vec![c, h, w] },
            LayerSpec::Elu { dims: vec![c, h, w] },
        ];
        for &out in &self.decoder_channels {
            specs.push(LayerSpec::BilinearUpsample { channels: c, height: h, width: w, scale: 2 });
            h *= 2;
            w *= 2;
            specs.push(LayerSpec::Conv { in_channels: c, out_channels: out, kernel: self.kernel, stride: 1, height: h, width: w });
            specs.push(LayerSpec::BatchNorm { channels: out, height: h, width: w, eps: self.bn_eps, momentum: self.bn_momentum });
            specs.push(LayerSpec::Elu { dims: vec![out, h, w] });
            c = out;
        }
        specs.push(LayerSpec::Conv { in_channels: c, out_channels: self.channels, kernel: self.kernel, stride: 1, height: h, width: w });
        specs.push(LayerSpec::Tanh { dims: vec![self.channels, h, w] });
        specs
    }

    pub fn encoder_param_count(&self) -> usize {
        self.encoder_specs().iter().map(LayerSpec::param_count).sum()
    }

    pub fn decoder_param_count(&self) -> usize {
        self.decoder_specs().iter().map(LayerSpec::param_count).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.channels == 0 || self.code_dim == 0 {
            return reject("architecture extents and code dimension must be positive");
        }
        if self.encoder_channels.is_empty() || self.decoder_channels.is_empty() {
            return reject("encoder and decoder need at least one stage each");
        }
        if self.encoder_channels.iter().chain(&self.decoder_channels).any(|&c| c == 0) || self.decoder_seed_channels == 0 {
            return reject("stage channel counts must be positive");
        }
        if self.hidden_nonlinearity != "elu" {
            return reject(format!("unsupported hidden nonlinearity {:?}", self.hidden_nonlinearity));
        }
        if self.output_nonlinearity != "tanh" {
            return reject(format!("output nonlinearity must be tanh, got {:?}", self.output_nonlinearity));
        }
        let enc_f = 1usize << self.encoder_channels.len();
        let dec_f = 1usize << self.decoder_channels.len();
        if !self.height.is_multiple_of(enc_f) || !self.width.is_multiple_of(enc_f) {
            return reject(format!("image extents must be divisible by {enc_f} for the encoder pools"));
        }
        if !self.height.is_multiple_of(dec_f) || !self.width.is_multiple_of(dec_f) {
            return reject(format!("image extents must be divisible by {dec_f} for the decoder upsamples"));
        }
        for spec in self.encoder_specs().iter().chain(self.decoder_specs().iter()) {
            spec.validate()?;
        }
        let (enc, dec) = (self.encoder_param_count(), self.decoder_param_count());
        if enc <= dec {
            return reject(format!("encoder must have more parameters than decoder ({enc} <= {dec})"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_and_compact_are_valid() {
        ArchConfig::default().validate().unwrap();
        ArchConfig::compact(64, 64, 1).validate().unwrap();
        ArchConfig::compact(32, 32, 3).validate().unwrap();
    }

    #[test]
    fn decoder_restores_input_extents() {
        let a = ArchConfig::default();
        assert_eq!(a.decoder_specs().last().unwrap().output_shape(), vec![1, 64, 64]);
        assert_eq!(a.encoder_specs().last().unwrap().output_shape(), vec![64]);
    }

    #[test]
    fn capacity_asymmetry_enforced() {
        let mut a = ArchConfig::compact(64, 64, 1);
        a.decoder_seed_channels = 64;
        assert!(a.validate().is_err());
    }

    #[test]
    fn non_tanh_output_rejected() {
        let a = ArchConfig { output_nonlinearity: "elu".into(), ..ArchConfig::default() };
        assert!(a.validate().is_err());
    }

    #[test]
    fn indivisible_extents_rejected() {
        assert!(ArchConfig::compact(60, 64, 1).validate().is_err());
    }
}
