//! Run configuration: TOML with nested sections, unknown keys rejected.

use std::path::{Path, PathBuf};

use npae_core::experiments::DEFAULT_SET_SIZES;
use npae_core::masking::{grid_boxes, GridSpec};
use npae_core::scoring::Method;
use npae_core::{ArchConfig, FeatureKind};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const OUT_ENV: &str = "NPAE_OUT";
pub const DEFAULT_OUT: &str = "npae-out";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub data: DataConfig,
    /// Defaults to the compact architecture for the data extents.
    pub arch: Option<ArchConfig>,
    pub train: TrainSection,
    pub grid: GridSection,
    pub scoring: ScoringSection,
    pub experiment: ExperimentSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            out: None,
            threads: None,
            data: DataConfig::default(),
            arch: None,
            train: TrainSection::default(),
            grid: GridSection::default(),
            scoring: ScoringSection::default(),
            experiment: ExperimentSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub train: usize,
    pub holdout: usize,
    pub anomalies: usize,
    pub controls: usize,
    pub attribute_negatives: usize,
    pub attribute_positives: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            channels: 1,
            train: 2000,
            holdout: 500,
            anomalies: 100,
            controls: 100,
            attribute_negatives: 500,
            attribute_positives: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub step_size: f64,
    pub box_min: Option<usize>,
    pub box_max: Option<usize>,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self { epochs: 15, batch_size: 32, step_size: 2e-3, box_min: None, box_max: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub box_size: usize,
    pub stride: usize,
    pub edge_exclusion: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { box_size: 16, stride: 8, edge_exclusion: 8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScoringSection {
    pub methods: Vec<String>,
    pub feature_kind: String,
    pub trim: usize,
    pub shrinkage: f64,
}

impl Default for ScoringSection {
    fn default() -> Self {
        Self {
            methods: Method::ALL.iter().map(|m| m.as_str().to_string()).collect(),
            feature_kind: FeatureKind::InpaintResidual.as_str().to_string(),
            trim: 1,
            shrinkage: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub set_sizes: Vec<usize>,
    pub trials: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self { set_sizes: DEFAULT_SET_SIZES.to_vec(), trials: 2000 }
    }
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| bad(format!("invalid config: {}", e.message())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn arch(&self) -> ArchConfig {
        self.arch.clone().unwrap_or_else(|| ArchConfig::compact(self.data.height, self.data.width, self.data.channels))
    }

    pub fn grid_spec(&self) -> GridSpec {
        GridSpec {
            image_height: self.data.height,
            image_width: self.data.width,
            box_height: self.grid.box_size,
            box_width: self.grid.box_size,
            stride: self.grid.stride,
            edge_exclusion: self.grid.edge_exclusion,
        }
    }

    pub fn methods(&self) -> CliResult<Vec<Method>> {
        self.scoring.methods.iter().map(|m| Method::parse(m).map_err(|_| bad(format!("scoring.methods: unknown method {m:?}")))).collect()
    }

    pub fn feature_kind(&self) -> CliResult<FeatureKind> {
        FeatureKind::parse(&self.scoring.feature_kind).map_err(|_| bad(format!("scoring.feature_kind: unknown kind {:?}", self.scoring.feature_kind)))
    }

    /// Checks everything that can be checked before work starts.
    pub fn validate(&self) -> CliResult<()> {
        let d = &self.data;
        if d.height == 0 || d.width == 0 || !(d.channels == 1 || d.channels == 3) {
            return Err(bad("data: extents must be positive with 1 or 3 channels"));
        }
        let arch = self.arch();
        if (arch.height, arch.width, arch.channels) != (d.height, d.width, d.channels) {
            return Err(bad("arch: extents differ from data extents"));
        }
        arch.validate().map_err(|e| bad(format!("arch: {e}")))?;
        grid_boxes(self.grid_spec()).map_err(|e| bad(format!("grid: {e}")))?;
        if self.train.epochs == 0 || self.train.batch_size == 0 || !(self.train.step_size > 0.0) {
            return Err(bad("train: epochs, batch_size and step_size must be positive"));
        }
        if let (Some(lo), Some(hi)) = (self.train.box_min, self.train.box_max) {
            if lo == 0 || lo > hi || hi > d.height.min(d.width) {
                return Err(bad("train: box_min..box_max must lie within the image"));
            }
        } else if self.train.box_min.is_some() != self.train.box_max.is_some() {
            return Err(bad("train: set both box_min and box_max or neither"));
        }
        if self.methods()?.is_empty() {
            return Err(bad("scoring.methods: empty"));
        }
        self.feature_kind()?;
        if !(0.0..=1.0).contains(&self.scoring.shrinkage) {
            return Err(bad("scoring.shrinkage must lie in [0, 1]"));
        }
        if d.holdout <= 2 * self.scoring.trim + 1 {
            return Err(bad("data.holdout too small for scoring.trim"));
        }
        if self.experiment.trials == 0 || self.experiment.set_sizes.is_empty() {
            return Err(bad("experiment: need at least one set size and one trial"));
        }
        if let Some(&s) = self.experiment.set_sizes.iter().find(|&&s| s < 2 || s - 1 > d.holdout) {
            return Err(bad(format!("experiment.set_sizes: {s} needs {} holdout images, data.holdout is {}", s.saturating_sub(1), d.holdout)));
        }
        if [d.train, d.holdout, d.anomalies, d.controls].contains(&0) {
            return Err(bad("data: train, holdout, anomalies and controls must be positive"));
        }
        if (d.attribute_negatives == 0) != (d.attribute_positives == 0) {
            return Err(bad("data: attribute_negatives and attribute_positives must both be zero or both positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
        let round = RunConfig::parse(&RunConfig::default().to_toml()).unwrap();
        assert_eq!(round, RunConfig::default());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::parse("[train]\nepoch = 3\n").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("epoch"), "{err}");
    }

    #[test]
    fn bad_values_rejected() {
        let mut c = RunConfig::default();
        c.scoring.methods = vec!["nope".into()];
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.experiment.set_sizes = vec![1000];
        assert!(c.validate().is_err());
    }
}
