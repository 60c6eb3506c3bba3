//! Central finite-difference checks of layer and loss gradients (64-bit).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::layers::{Layer, LayerSpec, Mode};
use crate::loss::l1_loss;
use crate::tensor::Tensor;

pub const STEP: f64 = 1e-5;

/// `||a - b|| / max(||a||, ||b||)`, with an absolute floor for all-zero vectors.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale < 1e-10 {
        diff
    } else {
        diff / scale
    }
}

/// Scalar probe objective `sum(forward(x) * weights)` in train mode.
fn objective(layer: &Layer<f64>, x: &Tensor<f64>, weights: &[f64]) -> f64 {
    let y = layer.forward(x, Mode::Train).expect("shape checked by caller");
    y.data().iter().zip(weights).map(|(a, b)| a * b).sum()
}

/// Central-difference gradients of the probe objective with respect to the
/// input and to every parameter tensor.
pub fn numeric_gradients(layer: &Layer<f64>, x: &Tensor<f64>, weights: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut dx = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += STEP;
        let mut minus = x.clone();
        minus.data_mut()[i] -= STEP;
        dx.push((objective(layer, &plus, weights) - objective(layer, &minus, weights)) / (2.0 * STEP));
    }
    let mut dparams = Vec::new();
    for p in 0..layer.params().len() {
        let mut g = Vec::new();
        for i in 0..layer.params()[p].len() {
            let mut plus = layer.clone();
            plus.params_mut()[p].data_mut()[i] += STEP;
            let mut minus = layer.clone();
            minus.params_mut()[p].data_mut()[i] -= STEP;
            g.push((objective(&plus, x, weights) - objective(&minus, x, weights)) / (2.0 * STEP));
        }
        dparams.push(g);
    }
    (dx, dparams)
}

/// Worst relative error between analytic and numeric gradients for one draw.
pub fn check_layer(layer: &Layer<f64>, x: &Tensor<f64>, rng: &mut impl Rng) -> f64 {
    let y = layer.forward(x, Mode::Train).expect("input shape matches layer");
    let weights: Vec<f64> = (0..y.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let upstream = Tensor::new(y.shape().to_vec(), weights.clone()).expect("same shape as output");
    let grads = layer.backward(x, &upstream).expect("shapes match");
    let (ndx, nparams) = numeric_gradients(layer, x, &weights);
    let mut worst = relative_error(grads.input.data(), &ndx);
    for (a, n) in grads.params.iter().zip(&nparams) {
        worst = worst.max(relative_error(a.data(), n));
    }
    worst
}

pub fn random_tensor(shape: Vec<usize>, rng: &mut impl Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-2.0..2.0))
}

/// Worst error over `trials` random layers drawn by `draw`, each with
/// perturbed parameters and a batch of 1 to 3.
pub fn layer_trials(seed: u64, trials: usize, mut draw: impl FnMut(&mut ChaCha8Rng) -> LayerSpec) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let spec = draw(&mut rng);
        let n = rng.random_range(1..=3);
        let mut layer = Layer::<f64>::init(spec.clone(), &mut rng).expect("drawn specs are valid");
        // Move batch-norm scale and shift away from their trivial initial values.
        for p in layer.params_mut() {
            for v in p.data_mut() {
                *v += rng.random_range(-0.5..0.5);
            }
        }
        let mut shape = vec![n];
        shape.extend(spec.input_shape());
        let x = random_tensor(shape, &mut rng);
        worst = worst.max(check_layer(&layer, &x, &mut rng));
    }
    worst
}

/// Worst error of the L1 loss gradient, with predictions kept away from ties.
pub fn l1_loss_trials(seed: u64, trials: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let len = rng.random_range(1..=20);
        let target = random_tensor(vec![len], &mut rng);
        let pred = Tensor::from_fn(vec![len], |i| {
            let offset: f64 = rng.random_range(0.01..1.0);
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            target.data()[i] + sign * offset
        });
        let loss = |p: &Tensor<f64>| l1_loss(p, &target).expect("same shape").0;
        let (_, grad) = l1_loss(&pred, &target).expect("same shape");
        let numeric: Vec<f64> = (0..len)
            .map(|i| {
                let mut plus = pred.clone();
                plus.data_mut()[i] += STEP;
                let mut minus = pred.clone();
                minus.data_mut()[i] -= STEP;
                (loss(&plus) - loss(&minus)) / (2.0 * STEP)
            })
            .collect();
        worst = worst.max(relative_error(grad.data(), &numeric));
    }
    worst
}

/// Standard randomized draw for each layer kind.
pub fn draw_layer(kind: &str, rng: &mut ChaCha8Rng) -> LayerSpec {
    match kind {
        "conv" => LayerSpec::Conv {
            in_channels: rng.random_range(1..=3),
            out_channels: rng.random_range(1..=3),
            kernel: [1, 3, 5][rng.random_range(0..3)],
            stride: rng.random_range(1..=2),
            height: rng.random_range(5..=7),
            width: rng.random_range(5..=7),
        },
        "fc" => LayerSpec::FullyConnected {
            in_dims: vec![rng.random_range(1..=3), rng.random_range(1..=4)],
            out_dims: vec![rng.random_range(1..=6)],
        },
        "avgpool" => {
            let window = rng.random_range(1..=3);
            LayerSpec::AvgPool {
                channels: rng.random_range(1..=3),
                height: window * rng.random_range(1..=3),
                width: window * rng.random_range(1..=3),
                window,
            }
        }
        "upsample" => LayerSpec::BilinearUpsample {
            channels: rng.random_range(1..=2),
            height: rng.random_range(1..=4),
            width: rng.random_range(1..=4),
            scale: rng.random_range(1..=3),
        },
        "bn" => LayerSpec::BatchNorm {
            channels: rng.random_range(1..=3),
            height: rng.random_range(2..=4),
            width: rng.random_range(2..=4),
            eps: 1e-5,
            momentum: 0.9,
        },
        "elu" => LayerSpec::Elu { dims: vec![rng.random_range(1..=4), rng.random_range(1..=5)] },
        "tanh" => LayerSpec::Tanh { dims: vec![rng.random_range(1..=10)] },
        other => panic!("no gradient draw for layer kind {other:?}"),
    }
}

pub const LAYER_KINDS: [&str; 7] = ["conv", "fc", "avgpool", "upsample", "bn", "elu", "tanh"];

/// `(name, worst relative error)` for every layer kind and the L1 loss.
pub fn suite(trials: usize) -> Vec<(String, f64)> {
    let mut out: Vec<(String, f64)> = LAYER_KINDS
        .iter()
        .enumerate()
        .map(|(i, &k)| (k.to_string(), layer_trials(i as u64 + 1, trials, |rng| draw_layer(k, rng))))
        .collect();
    out.push(("l1-loss".to_string(), l1_loss_trials(99, trials)));
    out
}
