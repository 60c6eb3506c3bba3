use rand::seq::SliceRandom;

use crate::autoencoder::arch::ArchConfig;
use crate::autoencoder::checkpoint::{Checkpoint, TrainingMeta};
use crate::autoencoder::model::Autoencoder;
use crate::error::{reject, Error, Result};
use crate::image_data::Image;
use crate::loss::l1_loss;
use crate::masking::{apply_box_mask, sample_random_box, BoxSizeRange};
use crate::optim::{adam_step, AdamConfig, AdamState};
use crate::scalar::Scalar;
use crate::seeding::{indexed_rng, stage_rng};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Side lengths of the concealed boxes; `None` means a quarter to a half of the shorter side.
    pub box_sizes: Option<BoxSizeRange>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 20, batch_size: 32, seed: 0, adam: AdamConfig::default(), box_sizes: None }
    }
}

/// Train an inpainting autoencoder on typical images.
///
/// Every sample gets a fresh random box each epoch; the loss is the mean
/// absolute error of the reconstruction of the masked input against the
/// unmasked image, over all pixels.
pub fn train<T: Scalar>(corpus: &[Image<T>], arch: &ArchConfig, cfg: &TrainConfig) -> Result<Checkpoint> {
    train_with_progress(corpus, arch, cfg, |_, _| {})
}

/// As [`train`], calling `progress(epoch, mean_loss)` after every epoch.
pub fn train_with_progress<T: Scalar>(
    corpus: &[Image<T>],
    arch: &ArchConfig,
    cfg: &TrainConfig,
    mut progress: impl FnMut(usize, f64),
) -> Result<Checkpoint> {
    if corpus.is_empty() {
        return reject("training corpus is empty");
    }
    if cfg.batch_size == 0 {
        return reject("batch size must be positive");
    }
    arch.validate()?;
    let extents = arch.extents();
    if let Some(bad) = corpus.iter().find(|im| im.extents() != extents) {
        return reject(format!("image {} has extents {:?}, architecture expects {extents:?}", bad.id, bad.extents()));
    }
    let sizes = cfg.box_sizes.unwrap_or_else(|| BoxSizeRange::default_for(arch.height.min(arch.width)));

    let mut model = Autoencoder::<T>::init(arch.clone(), &mut stage_rng(cfg.seed, "init"))?;
    let mut state = AdamState::new();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..corpus.len()).collect();

    for epoch in 0..cfg.epochs {
        let mut rng = indexed_rng(cfg.seed, "epoch", epoch as u64);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut inputs = Vec::with_capacity(chunk.len());
            let mut targets = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let b = sample_random_box(extents, sizes, &mut rng)?;
                inputs.push(apply_box_mask(&corpus[i], b)?.to_tensor());
                targets.push(corpus[i].to_tensor());
            }
            let loss = step(&mut model, &Tensor::stack(&inputs)?, &Tensor::stack(&targets)?, &mut state, &cfg.adam, epoch)?;
            total += loss * chunk.len() as f64;
        }
        let mean = total / corpus.len() as f64;
        if !mean.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        history.push(mean);
        progress(epoch, mean);
    }
    Ok(model.to_checkpoint(TrainingMeta { epochs: cfg.epochs, seed: cfg.seed, loss_history: history }))
}

/// One forward/backward/update on a batch; returns the batch loss.
fn step<T: Scalar>(
    model: &mut Autoencoder<T>,
    input: &Tensor<T>,
    target: &Tensor<T>,
    state: &mut AdamState<T>,
    adam: &AdamConfig,
    epoch: usize,
) -> Result<f64> {
    let mut activations = Vec::new();
    let mut x = input.clone();
    for layer in model.layers_mut() {
        let next = layer.forward_train(&x)?;
        activations.push(std::mem::replace(&mut x, next));
    }
    let (loss, mut grad) = l1_loss(&x, target)?;
    let loss = loss.as_f64();
    if !loss.is_finite() {
        return Err(Error::TrainingDiverged { epoch });
    }

    let mut grads: Vec<Vec<Tensor<T>>> = Vec::new();
    for (layer, act) in model.layers().rev().zip(activations.iter().rev()) {
        let g = layer.backward(act, &grad)?;
        grad = g.input;
        grads.push(g.params);
    }
    grads.reverse();

    let names: Vec<(String, Vec<&'static str>)> =
        model.named_layers().map(|(prefix, l)| (prefix, l.param_names())).collect();
    let mut named_grads = Vec::new();
    for ((prefix, pnames), gs) in names.iter().zip(grads) {
        for (n, g) in pnames.iter().zip(gs) {
            named_grads.push((format!("{prefix}.{n}"), g));
        }
    }
    let mut params: Vec<(String, &mut Tensor<T>)> = Vec::new();
    for ((prefix, pnames), layer) in names.iter().zip(model.layers_mut()) {
        for (n, p) in pnames.iter().zip(layer.params_mut().iter_mut()) {
            params.push((format!("{prefix}.{n}"), p));
        }
    }
    adam_step(&mut params, &named_grads, state, adam, epoch)?;
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image_data::Extents;

    fn tiny_arch() -> ArchConfig {
        ArchConfig {
            encoder_channels: vec![4, 8],
            decoder_channels: vec![4],
            decoder_seed_channels: 2,
            code_dim: 8,
            ..ArchConfig::compact(8, 8, 1)
        }
    }

    fn blob(id: &str) -> Image<f32> {
        let e = Extents::new(8, 8, 1);
        let data = (0..64).map(|i| if (i / 8 + i % 8) % 3 == 0 { 0.6 } else { -0.4 }).collect();
        Image::new(id, e, data).unwrap()
    }

    #[test]
    fn rejects_empty_corpus_and_mismatched_extents() {
        let cfg = TrainConfig { epochs: 1, ..TrainConfig::default() };
        assert!(train::<f32>(&[], &tiny_arch(), &cfg).is_err());
        let wrong = Image::<f32>::filled("w", Extents::new(16, 16, 1), 0.0);
        assert!(train(&[wrong], &tiny_arch(), &cfg).is_err());
    }

    #[test]
    fn records_finite_loss_from_epoch_zero() {
        let cfg = TrainConfig { epochs: 2, batch_size: 2, seed: 1, ..TrainConfig::default() };
        let c = train(&[blob("a"), blob("b"), blob("c")], &tiny_arch(), &cfg).unwrap();
        assert_eq!(c.meta.loss_history.len(), 2);
        assert!(c.meta.loss_history[0].is_finite());
    }

    #[test]
    fn same_seed_gives_identical_checkpoints() {
        let cfg = TrainConfig { epochs: 3, batch_size: 2, seed: 7, ..TrainConfig::default() };
        let corpus = [blob("a"), blob("b"), blob("c")];
        let a = train(&corpus, &tiny_arch(), &cfg).unwrap();
        let b = train(&corpus, &tiny_arch(), &cfg).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        let c = train(&corpus, &tiny_arch(), &TrainConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a.to_bytes(), c.to_bytes());
    }

    #[test]
    fn exploding_step_size_reports_divergence() {
        let cfg = TrainConfig {
            epochs: 50,
            batch_size: 1,
            seed: 1,
            adam: AdamConfig { step_size: 1e30, ..AdamConfig::default() },
            box_sizes: None,
        };
        match train(&[blob("a"), blob("b")], &tiny_arch(), &cfg) {
            Err(Error::TrainingDiverged { .. }) => {}
            Err(other) => panic!("unexpected error {other}"),
            // Saturated tanh can keep the loss finite; that is acceptable as long as it is finite.
            Ok(c) => assert!(c.meta.loss_history.iter().all(|l| l.is_finite())),
        }
    }
}
