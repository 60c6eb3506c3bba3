//! Binary checkpoint container.
//!
//! Layout: magic `NPAE`, one version byte, a `u32` little-endian length and a
//! UTF-8 TOML block (architecture plus training metadata), then named blobs
//! (`u32` name length, name, `u64` element count, little-endian `f32` values),
//! and finally the CRC-32 of every preceding byte.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autoencoder::arch::ArchConfig;
use crate::autoencoder::model::Autoencoder;
use crate::error::{Error, Result};
use crate::layers::Layer;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"NPAE";
pub const FORMAT_VERSION: u8 = 1;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub seed: u64,
    pub loss_history: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    arch: ArchConfig,
    training: TrainingMeta,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub version: u8,
    pub arch: ArchConfig,
    pub blobs: Vec<(String, Vec<f32>)>,
    pub meta: TrainingMeta,
}

fn corrupt(field: impl Into<String>) -> Error {
    Error::CorruptCheckpoint { field: field.into() }
}

/// Names and shapes of every blob the architecture requires, in storage order.
fn expected_blobs(arch: &ArchConfig) -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    let sections = [("encoder", arch.encoder_specs()), ("decoder", arch.decoder_specs())];
    for (section, specs) in sections {
        for (i, spec) in specs.iter().enumerate() {
            for (name, shape) in spec.param_shapes().into_iter().chain(spec.buffer_shapes()) {
                out.push((format!("{section}.{i}.{}.{name}", spec.kind_name()), shape));
            }
        }
    }
    out
}

impl Checkpoint {
    pub fn from_model<T: Scalar>(model: &Autoencoder<T>, meta: TrainingMeta) -> Self {
        let mut blobs = Vec::new();
        for (prefix, layer) in model.named_layers() {
            let names = layer.param_names().into_iter().chain(layer.buffer_names());
            for (name, t) in names.zip(layer.params().iter().chain(layer.buffers())) {
                blobs.push((format!("{prefix}.{name}"), t.data().iter().map(|v| v.as_f64() as f32).collect()));
            }
        }
        Self { version: FORMAT_VERSION, arch: model.arch().clone(), blobs, meta }
    }

    pub(crate) fn build_model<T: Scalar>(&self) -> Result<Autoencoder<T>> {
        self.arch.validate().map_err(|e| corrupt(format!("arch ({e})")))?;
        let expected = expected_blobs(&self.arch);
        for (i, (name, _)) in self.blobs.iter().enumerate() {
            if self.blobs[..i].iter().any(|(n, _)| n == name) {
                return Err(corrupt(format!("blob {name} (duplicate)")));
            }
            if !expected.iter().any(|(n, _)| n == name) {
                return Err(corrupt(format!("blob {name} (unexpected)")));
            }
        }
        let lookup = |name: &str, shape: &[usize]| -> Result<Tensor<T>> {
            let (_, data) = self
                .blobs
                .iter()
                .find(|(n, _)| n == name)
                .ok_or_else(|| corrupt(format!("blob {name} (missing)")))?;
            Tensor::new(shape.to_vec(), data.iter().map(|&v| T::lit(v as f64)).collect())
                .map_err(|_| corrupt(format!("blob {name} (length)")))
        };
        let build = |section: &str, specs: Vec<crate::layers::LayerSpec>| -> Result<Vec<Layer<T>>> {
            specs
                .into_iter()
                .enumerate()
                .map(|(i, spec)| {
                    let prefix = format!("{section}.{i}.{}", spec.kind_name());
                    let params = spec
                        .param_shapes()
                        .iter()
                        .map(|(n, s)| lookup(&format!("{prefix}.{n}"), s))
                        .collect::<Result<Vec<_>>>()?;
                    let buffers = spec
                        .buffer_shapes()
                        .iter()
                        .map(|(n, s)| lookup(&format!("{prefix}.{n}"), s))
                        .collect::<Result<Vec<_>>>()?;
                    Layer::from_parts(spec, params, buffers)
                })
                .collect()
        };
        let encoder = build("encoder", self.arch.encoder_specs())?;
        let decoder = build("decoder", self.arch.decoder_specs())?;
        Ok(Autoencoder::from_layers(self.arch.clone(), encoder, decoder))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header { arch: self.arch.clone(), training: self.meta.clone() };
        let text = toml::to_string(&header).expect("checkpoint header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(self.version);
        out.extend_from_slice(&(text.len() as u32).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        for (name, data) in &self.blobs {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(data.len() as u64).to_le_bytes());
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(corrupt("magic"));
        }
        let version = r.take(1, "version")?[0];
        if version != FORMAT_VERSION {
            return Err(corrupt(format!("version (found {version})")));
        }
        if bytes.len() < 4 + 1 + 4 + 4 {
            return Err(corrupt("length (truncated)"));
        }
        let body_end = bytes.len() - 4;
        let stored = u32::from_le_bytes(bytes[body_end..].try_into().unwrap());
        if crc32fast::hash(&bytes[..body_end]) != stored {
            return Err(corrupt("crc32"));
        }
        let text_len = r.u32("config length")? as usize;
        if r.pos + text_len > body_end {
            return Err(corrupt("config length (truncated)"));
        }
        let text = std::str::from_utf8(r.take(text_len, "config")?).map_err(|_| corrupt("config (utf-8)"))?;
        let header: Header = toml::from_str(text).map_err(|e| corrupt(format!("config ({})", e.message())))?;
        let mut blobs = Vec::new();
        while r.pos < body_end {
            let name_len = r.u32("blob name length")? as usize;
            if r.pos + name_len > body_end {
                return Err(corrupt("blob name (truncated)"));
            }
            let name = String::from_utf8(r.take(name_len, "blob name")?.to_vec())
                .map_err(|_| corrupt("blob name (utf-8)"))?;
            let count = r.u64(&format!("blob {name} count"))? as usize;
            if count.checked_mul(4).is_none_or(|n| r.pos + n > body_end) {
                return Err(corrupt(format!("blob {name} (truncated)")));
            }
            let raw = r.take(count * 4, &name)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            blobs.push((name, data));
        }
        if r.pos != body_end {
            return Err(corrupt("blob table (truncated)"));
        }
        let ckpt = Self { version, arch: header.arch, blobs, meta: header.training };
        // Structural check: every required blob present exactly once with the right length.
        ckpt.build_model::<f32>()?;
        Ok(ckpt)
    }

    /// Write atomically: readers see either the old file or the complete new one.
    pub fn save(&self, path: &Path) -> Result<()> {
        crate::dataset::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(corrupt(format!("{field} (truncated)")));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, field: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }

    fn u64(&mut self, field: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }
}
