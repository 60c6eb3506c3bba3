//! Image anomaly detection from inpainting-autoencoder residuals.
//!
//! An autoencoder is trained to fill in randomly concealed boxes of typical
//! images. At test time each box of a regular grid is concealed in turn and the
//! mean absolute difference between the inpainted content and the true content
//! becomes one feature entry. Simple unsupervised statistics over those
//! features (L-infinity norm, robust Mahalanobis distance, an equivariant set
//! transform, local false discovery rate) score how anomalous an image is.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision used by the pipeline.

pub mod autoencoder;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod features;
pub mod gradcheck;
pub mod image_data;
pub mod layers;
pub mod linalg;
pub mod loss;
pub mod masking;
pub mod optim;
pub mod scalar;
pub mod scoring;
pub mod seeding;
pub mod supervised;
pub mod synth;
pub mod tensor;

pub use autoencoder::{ArchConfig, Autoencoder, Checkpoint};
pub use error::{Error, Result};
pub use features::{FeatureKind, FeatureTable, FeatureVector};
pub use image_data::{Extents, Image};
pub use masking::{BoxGrid, GridSpec, PixelBox};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Image32 = Image<f32>;
pub type Image64 = Image<f64>;
pub type Autoencoder32 = Autoencoder<f32>;
pub type Autoencoder64 = Autoencoder<f64>;
