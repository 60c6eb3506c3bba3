//! Layer kinds used by the encoder and decoder, with forward and reverse-mode
//! evaluation. Activations are laid out `[batch, channels, height, width]`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{reject, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Declarative description of one layer. Extents are per sample (no batch axis).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LayerSpec {
    /// Square-kernel convolution with zero padding `(kernel - 1) / 2`.
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        height: usize,
        width: usize,
    },
    /// Dense map from a flattened input to a (possibly multi-axis) output.
    FullyConnected { in_dims: Vec<usize>, out_dims: Vec<usize> },
    AvgPool { channels: usize, height: usize, width: usize, window: usize },
    BilinearUpsample { channels: usize, height: usize, width: usize, scale: usize },
    BatchNorm { channels: usize, height: usize, width: usize, eps: f64, momentum: f64 },
    Elu { dims: Vec<usize> },
    Tanh { dims: Vec<usize> },
}

impl LayerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::FullyConnected { .. } => "fc",
            LayerSpec::AvgPool { .. } => "avgpool",
            LayerSpec::BilinearUpsample { .. } => "upsample",
            LayerSpec::BatchNorm { .. } => "bn",
            LayerSpec::Elu { .. } => "elu",
            LayerSpec::Tanh { .. } => "tanh",
        }
    }

    pub fn input_shape(&self) -> Vec<usize> {
        match self {
            LayerSpec::Conv { in_channels, height, width, .. } => vec![*in_channels, *height, *width],
            LayerSpec::FullyConnected { in_dims, .. } => in_dims.clone(),
            LayerSpec::AvgPool { channels, height, width, .. }
            | LayerSpec::BilinearUpsample { channels, height, width, .. }
            | LayerSpec::BatchNorm { channels, height, width, .. } => vec![*channels, *height, *width],
            LayerSpec::Elu { dims } | LayerSpec::Tanh { dims } => dims.clone(),
        }
    }

    pub fn output_shape(&self) -> Vec<usize> {
        match self {
            LayerSpec::Conv { out_channels, kernel, stride, height, width, .. } => {
                let pad = (kernel - 1) / 2;
                vec![
                    *out_channels,
                    (height + 2 * pad - kernel) / stride + 1,
                    (width + 2 * pad - kernel) / stride + 1,
                ]
            }
            LayerSpec::FullyConnected { out_dims, .. } => out_dims.clone(),
            LayerSpec::AvgPool { channels, height, width, window } => {
                vec![*channels, height / window, width / window]
            }
            LayerSpec::BilinearUpsample { channels, height, width, scale } => {
                vec![*channels, height * scale, width * scale]
            }
            _ => self.input_shape(),
        }
    }

    /// Names and shapes of the trainable parameters, in storage order.
    pub fn param_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        match self {
            LayerSpec::Conv { in_channels, out_channels, kernel, .. } => vec![
                ("weight", vec![*out_channels, *in_channels, *kernel, *kernel]),
                ("bias", vec![*out_channels]),
            ],
            LayerSpec::FullyConnected { in_dims, out_dims } => {
                let fan_in: usize = in_dims.iter().product();
                let fan_out: usize = out_dims.iter().product();
                vec![("weight", vec![fan_out, fan_in]), ("bias", vec![fan_out])]
            }
            LayerSpec::BatchNorm { channels, .. } => {
                vec![("gamma", vec![*channels]), ("beta", vec![*channels])]
            }
            _ => Vec::new(),
        }
    }

    /// Non-trainable state carried in checkpoints (batch-norm running statistics).
    pub fn buffer_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        match self {
            LayerSpec::BatchNorm { channels, .. } => {
                vec![("running_mean", vec![*channels]), ("running_var", vec![*channels])]
            }
            _ => Vec::new(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_shape().contains(&0) {
            return reject(format!("{}: zero extent in input shape", self.kind_name()));
        }
        match self {
            LayerSpec::Conv { out_channels, kernel, stride, height, width, .. } => {
                if *out_channels == 0 || *stride == 0 || kernel % 2 == 0 {
                    return reject("conv: kernel must be odd, stride and channels positive");
                }
                if kernel > height || kernel > width {
                    return reject("conv: kernel larger than input");
                }
            }
            LayerSpec::FullyConnected { out_dims, .. } => {
                if out_dims.is_empty() || out_dims.contains(&0) {
                    return reject("fc: output extents must be positive");
                }
            }
            LayerSpec::AvgPool { height, width, window, .. } => {
                if *window == 0 || height % window != 0 || width % window != 0 {
                    return reject("avgpool: window must divide the input extents");
                }
            }
            LayerSpec::BilinearUpsample { scale, .. } => {
                if *scale == 0 {
                    return reject("upsample: scale must be positive");
                }
            }
            LayerSpec::BatchNorm { eps, momentum, .. } => {
                if !(*eps > 0.0) || !(0.0..=1.0).contains(momentum) {
                    return reject("batch-norm: eps must be > 0 and momentum in [0, 1]");
                }
            }
            LayerSpec::Elu { .. } | LayerSpec::Tanh { .. } => {}
        }
        Ok(())
    }
}

/// Gradients produced by one backward pass.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    pub input: Tensor<T>,
    /// Aligned with [`Layer::param_names`].
    pub params: Vec<Tensor<T>>,
}

/// A layer with its parameters and buffers.
#[derive(Clone, Debug)]
pub struct Layer<T> {
    spec: LayerSpec,
    params: Vec<Tensor<T>>,
    buffers: Vec<Tensor<T>>,
}

impl<T: Scalar> Layer<T> {
    /// Fresh layer: uniform fan-in scaled weights, zero biases, unit batch-norm scale.
    pub fn init(spec: LayerSpec, rng: &mut impl Rng) -> Result<Self> {
        spec.validate()?;
        let params = spec
            .param_shapes()
            .into_iter()
            .map(|(name, shape)| match name {
                "weight" => {
                    let fan_in: usize = shape[1..].iter().product();
                    let bound = (3.0 / fan_in as f64).sqrt();
                    Tensor::from_fn(shape, |_| T::lit(rng.random_range(-bound..bound)))
                }
                "gamma" => Tensor::full(shape, T::one()),
                _ => Tensor::zeros(shape),
            })
            .collect();
        let buffers = spec
            .buffer_shapes()
            .into_iter()
            .map(|(name, shape)| match name {
                "running_var" => Tensor::full(shape, T::one()),
                _ => Tensor::zeros(shape),
            })
            .collect();
        Ok(Self { spec, params, buffers })
    }

    /// Layer from explicit parameter and buffer tensors (checked against the spec).
    pub fn from_parts(spec: LayerSpec, params: Vec<Tensor<T>>, buffers: Vec<Tensor<T>>) -> Result<Self> {
        spec.validate()?;
        let expect = spec.param_shapes();
        let expect_buf = spec.buffer_shapes();
        if expect.len() != params.len() || expect_buf.len() != buffers.len() {
            return reject(format!("{}: wrong number of parameter tensors", spec.kind_name()));
        }
        for ((name, shape), t) in expect.iter().chain(expect_buf.iter()).zip(params.iter().chain(buffers.iter())) {
            t.expect_shape(shape, name)?;
        }
        Ok(Self { spec, params, buffers })
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn param_names(&self) -> Vec<&'static str> {
        self.spec.param_shapes().into_iter().map(|(n, _)| n).collect()
    }

    pub fn buffer_names(&self) -> Vec<&'static str> {
        self.spec.buffer_shapes().into_iter().map(|(n, _)| n).collect()
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn buffers(&self) -> &[Tensor<T>] {
        &self.buffers
    }

    fn batched_shape(&self, input: &Tensor<T>, per_sample: &[usize], what: &str) -> Result<usize> {
        let shape = input.shape();
        if shape.len() != per_sample.len() + 1 || &shape[1..] != per_sample {
            return reject(format!(
                "{} {what}: expected [batch, {:?}], got {:?}",
                self.spec.kind_name(),
                per_sample,
                shape
            ));
        }
        Ok(shape[0])
    }

    /// Forward pass. Pure: batch-norm running statistics are not touched here
    /// (see [`Layer::forward_train`]).
    pub fn forward(&self, input: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let n = self.batched_shape(input, &self.spec.input_shape(), "input")?;
        let mut out_shape = vec![n];
        out_shape.extend(self.spec.output_shape());
        let data = match &self.spec {
            LayerSpec::Conv { .. } => self.conv_forward(input, n),
            LayerSpec::FullyConnected { .. } => self.fc_forward(input, n),
            LayerSpec::AvgPool { channels, height, width, window } => {
                avgpool_forward(input.data(), n * channels, *height, *width, *window)
            }
            LayerSpec::BilinearUpsample { channels, height, width, scale } => {
                upsample_forward(input.data(), n * channels, *height, *width, *scale)
            }
            LayerSpec::BatchNorm { channels, height, width, eps, .. } => {
                let plane = height * width;
                let (mean, var) = match mode {
                    Mode::Train => batch_stats(input.data(), n, *channels, plane),
                    Mode::Infer => (self.buffers[0].data().to_vec(), self.buffers[1].data().to_vec()),
                };
                let eps = T::lit(*eps);
                let gamma = self.params[0].data();
                let beta = self.params[1].data();
                let mut out = input.data().to_vec();
                for (idx, chunk) in out.chunks_mut(plane).enumerate() {
                    let c = idx % channels;
                    let inv = T::one() / (var[c] + eps).sqrt();
                    for v in chunk {
                        *v = gamma[c] * ((*v - mean[c]) * inv) + beta[c];
                    }
                }
                out
            }
            LayerSpec::Elu { .. } => input.data().iter().map(|&x| elu(x)).collect(),
            LayerSpec::Tanh { .. } => input.data().iter().map(|&x| x.tanh()).collect(),
        };
        Tensor::new(out_shape, data)
    }

    /// Train-mode forward that also folds the batch statistics into the
    /// running statistics of a batch-norm layer.
    pub fn forward_train(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let out = self.forward(input, Mode::Train)?;
        if let LayerSpec::BatchNorm { channels, height, width, momentum, .. } = &self.spec {
            let (mean, var) = batch_stats(input.data(), input.batch(), *channels, height * width);
            let m = T::lit(*momentum);
            let keep = T::one() - m;
            for (r, b) in self.buffers[0].data_mut().iter_mut().zip(mean) {
                *r = m * *r + keep * b;
            }
            for (r, b) in self.buffers[1].data_mut().iter_mut().zip(var) {
                *r = m * *r + keep * b;
            }
        }
        Ok(out)
    }

    /// Reverse-mode pass of the train-mode forward at `input`.
    pub fn backward(&self, input: &Tensor<T>, upstream: &Tensor<T>) -> Result<Gradients<T>> {
        let n = self.batched_shape(input, &self.spec.input_shape(), "input")?;
        let m = self.batched_shape(upstream, &self.spec.output_shape(), "upstream gradient")?;
        if n != m {
            return reject("backward: batch extents of input and upstream gradient differ");
        }
        let (dx, params) = match &self.spec {
            LayerSpec::Conv { .. } => self.conv_backward(input, upstream, n),
            LayerSpec::FullyConnected { .. } => self.fc_backward(input, upstream, n),
            LayerSpec::AvgPool { channels, height, width, window } => (
                avgpool_backward(upstream.data(), n * channels, *height, *width, *window),
                Vec::new(),
            ),
            LayerSpec::BilinearUpsample { channels, height, width, scale } => (
                upsample_backward(upstream.data(), n * channels, *height, *width, *scale),
                Vec::new(),
            ),
            LayerSpec::BatchNorm { channels, height, width, eps, .. } => {
                self.bn_backward(input, upstream, n, *channels, height * width, *eps)
            }
            LayerSpec::Elu { .. } => (
                input
                    .data()
                    .iter()
                    .zip(upstream.data())
                    .map(|(&x, &g)| if x > T::zero() { g } else { g * x.exp() })
                    .collect(),
                Vec::new(),
            ),
            LayerSpec::Tanh { .. } => (
                input
                    .data()
                    .iter()
                    .zip(upstream.data())
                    .map(|(&x, &g)| {
                        let t = x.tanh();
                        g * (T::one() - t * t)
                    })
                    .collect(),
                Vec::new(),
            ),
        };
        let params = params
            .into_iter()
            .zip(self.spec.param_shapes())
            .map(|(d, (_, shape))| Tensor::new(shape, d))
            .collect::<Result<Vec<_>>>()?;
        Ok(Gradients { input: Tensor::new(input.shape().to_vec(), dx)?, params })
    }

    fn conv_geometry(&self) -> ConvGeometry {
        match &self.spec {
            LayerSpec::Conv { in_channels, out_channels, kernel, stride, height, width } => {
                let out = self.spec.output_shape();
                ConvGeometry {
                    cin: *in_channels,
                    cout: *out_channels,
                    k: *kernel,
                    stride: *stride,
                    pad: (kernel - 1) / 2,
                    h: *height,
                    w: *width,
                    ho: out[1],
                    wo: out[2],
                }
            }
            _ => unreachable!("conv geometry requested for non-conv layer"),
        }
    }

    fn conv_forward(&self, input: &Tensor<T>, n: usize) -> Vec<T> {
        let g = self.conv_geometry();
        let in_len = g.cin * g.h * g.w;
        let out_len = g.cout * g.ho * g.wo;
        let rows = g.cin * g.k * g.k;
        let cols = g.ho * g.wo;
        let weight = self.params[0].data();
        let bias = self.params[1].data();
        let mut out = vec![T::zero(); n * out_len];
        out.par_chunks_mut(out_len)
            .zip(input.data().par_chunks(in_len))
            .for_each(|(y, x)| {
                let col = im2col(x, &g);
                for (oc, row) in y.chunks_mut(cols).enumerate() {
                    row.iter_mut().for_each(|v| *v = bias[oc]);
                }
                T::gemm(
                    g.cout, rows, cols, T::one(), weight, rows as isize, 1, &col, cols as isize, 1,
                    T::one(), y, cols as isize, 1,
                );
            });
        out
    }

    fn conv_backward(&self, input: &Tensor<T>, upstream: &Tensor<T>, n: usize) -> (Vec<T>, Vec<Vec<T>>) {
        let g = self.conv_geometry();
        let in_len = g.cin * g.h * g.w;
        let out_len = g.cout * g.ho * g.wo;
        let rows = g.cin * g.k * g.k;
        let cols = g.ho * g.wo;
        let weight = self.params[0].data();
        let mut dx = vec![T::zero(); n * in_len];
        let per_sample: Vec<(Vec<T>, Vec<T>)> = dx
            .par_chunks_mut(in_len)
            .zip(input.data().par_chunks(in_len))
            .zip(upstream.data().par_chunks(out_len))
            .map(|((dxs, x), dy)| {
                let col = im2col(x, &g);
                let mut dw = vec![T::zero(); g.cout * rows];
                // dW = dY * col^T
                T::gemm(
                    g.cout, cols, rows, T::one(), dy, cols as isize, 1, &col, 1, cols as isize,
                    T::zero(), &mut dw, rows as isize, 1,
                );
                let db: Vec<T> = dy.chunks(cols).map(|r| r.iter().copied().sum()).collect();
                // dcol = W^T * dY
                let mut dcol = vec![T::zero(); rows * cols];
                T::gemm(
                    rows, g.cout, cols, T::one(), weight, 1, rows as isize, dy, cols as isize, 1,
                    T::zero(), &mut dcol, cols as isize, 1,
                );
                col2im(&dcol, &g, dxs);
                (dw, db)
            })
            .collect();
        let mut dw = vec![T::zero(); g.cout * rows];
        let mut db = vec![T::zero(); g.cout];
        for (w, b) in per_sample {
            dw.iter_mut().zip(w).for_each(|(a, v)| *a = *a + v);
            db.iter_mut().zip(b).for_each(|(a, v)| *a = *a + v);
        }
        (dx, vec![dw, db])
    }

    fn fc_dims(&self) -> (usize, usize) {
        let shape = &self.params[0].shape();
        (shape[1], shape[0])
    }

    fn fc_forward(&self, input: &Tensor<T>, n: usize) -> Vec<T> {
        let (fin, fout) = self.fc_dims();
        let bias = self.params[1].data();
        let mut out: Vec<T> = (0..n).flat_map(|_| bias.iter().copied()).collect();
        T::gemm(
            n, fin, fout, T::one(), input.data(), fin as isize, 1, self.params[0].data(), 1,
            fin as isize, T::one(), &mut out, fout as isize, 1,
        );
        out
    }

    fn fc_backward(&self, input: &Tensor<T>, upstream: &Tensor<T>, n: usize) -> (Vec<T>, Vec<Vec<T>>) {
        let (fin, fout) = self.fc_dims();
        let dy = upstream.data();
        let mut dw = vec![T::zero(); fout * fin];
        T::gemm(
            fout, n, fin, T::one(), dy, 1, fout as isize, input.data(), fin as isize, 1, T::zero(),
            &mut dw, fin as isize, 1,
        );
        let mut db = vec![T::zero(); fout];
        for row in dy.chunks(fout) {
            db.iter_mut().zip(row).for_each(|(a, &v)| *a = *a + v);
        }
        let mut dx = vec![T::zero(); n * fin];
        T::gemm(
            n, fout, fin, T::one(), dy, fout as isize, 1, self.params[0].data(), fin as isize, 1,
            T::zero(), &mut dx, fin as isize, 1,
        );
        (dx, vec![dw, db])
    }

    fn bn_backward(
        &self,
        input: &Tensor<T>,
        upstream: &Tensor<T>,
        n: usize,
        channels: usize,
        plane: usize,
        eps: f64,
    ) -> (Vec<T>, Vec<Vec<T>>) {
        let (mean, var) = batch_stats(input.data(), n, channels, plane);
        let eps = T::lit(eps);
        let gamma = self.params[0].data();
        let count = T::from_usize(n * plane).unwrap();
        let inv: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut sum_dy = vec![T::zero(); channels];
        let mut sum_dy_xhat = vec![T::zero(); channels];
        for (idx, (xs, gs)) in input.data().chunks(plane).zip(upstream.data().chunks(plane)).enumerate() {
            let c = idx % channels;
            for (&x, &g) in xs.iter().zip(gs) {
                sum_dy[c] = sum_dy[c] + g;
                sum_dy_xhat[c] = sum_dy_xhat[c] + g * (x - mean[c]) * inv[c];
            }
        }
        let mut dx = vec![T::zero(); input.len()];
        for (idx, ((xs, gs), out)) in input
            .data()
            .chunks(plane)
            .zip(upstream.data().chunks(plane))
            .zip(dx.chunks_mut(plane))
            .enumerate()
        {
            let c = idx % channels;
            let scale = gamma[c] * inv[c] / count;
            for ((&x, &g), o) in xs.iter().zip(gs).zip(out) {
                let xhat = (x - mean[c]) * inv[c];
                *o = scale * (count * g - sum_dy[c] - xhat * sum_dy_xhat[c]);
            }
        }
        (dx, vec![sum_dy_xhat, sum_dy])
    }
}

fn elu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        x.exp_m1()
    }
}

/// Per-channel mean and biased variance over batch and spatial axes.
fn batch_stats<T: Scalar>(data: &[T], n: usize, channels: usize, plane: usize) -> (Vec<T>, Vec<T>) {
    let count = T::from_usize(n * plane).unwrap();
    let mut mean = vec![T::zero(); channels];
    for (idx, chunk) in data.chunks(plane).enumerate() {
        let c = idx % channels;
        mean[c] = mean[c] + chunk.iter().copied().sum::<T>();
    }
    mean.iter_mut().for_each(|m| *m = *m / count);
    let mut var = vec![T::zero(); channels];
    for (idx, chunk) in data.chunks(plane).enumerate() {
        let c = idx % channels;
        var[c] = var[c] + chunk.iter().map(|&v| (v - mean[c]) * (v - mean[c])).sum::<T>();
    }
    var.iter_mut().for_each(|v| *v = *v / count);
    (mean, var)
}

struct ConvGeometry {
    cin: usize,
    cout: usize,
    k: usize,
    stride: usize,
    pad: usize,
    h: usize,
    w: usize,
    ho: usize,
    wo: usize,
}

fn im2col<T: Scalar>(x: &[T], g: &ConvGeometry) -> Vec<T> {
    let cols = g.ho * g.wo;
    let mut col = vec![T::zero(); g.cin * g.k * g.k * cols];
    for c in 0..g.cin {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let dst = &mut col[row * cols..(row + 1) * cols];
                for oi in 0..g.ho {
                    let si = (oi * g.stride + ki) as isize - g.pad as isize;
                    if si < 0 || si >= g.h as isize {
                        continue;
                    }
                    let src_row = &plane[si as usize * g.w..(si as usize + 1) * g.w];
                    let dst_row = &mut dst[oi * g.wo..(oi + 1) * g.wo];
                    for (oj, d) in dst_row.iter_mut().enumerate() {
                        let sj = (oj * g.stride + kj) as isize - g.pad as isize;
                        if sj >= 0 && sj < g.w as isize {
                            *d = src_row[sj as usize];
                        }
                    }
                }
            }
        }
    }
    col
}

fn col2im<T: Scalar>(col: &[T], g: &ConvGeometry, dx: &mut [T]) {
    let cols = g.ho * g.wo;
    for c in 0..g.cin {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let src = &col[row * cols..(row + 1) * cols];
                for oi in 0..g.ho {
                    let si = (oi * g.stride + ki) as isize - g.pad as isize;
                    if si < 0 || si >= g.h as isize {
                        continue;
                    }
                    let dst_row = &mut plane[si as usize * g.w..(si as usize + 1) * g.w];
                    for oj in 0..g.wo {
                        let sj = (oj * g.stride + kj) as isize - g.pad as isize;
                        if sj >= 0 && sj < g.w as isize {
                            let d = &mut dst_row[sj as usize];
                            *d = *d + src[oi * g.wo + oj];
                        }
                    }
                }
            }
        }
    }
}

fn avgpool_forward<T: Scalar>(x: &[T], planes: usize, h: usize, w: usize, win: usize) -> Vec<T> {
    let (ho, wo) = (h / win, w / win);
    let norm = T::from_usize(win * win).unwrap();
    let mut out = vec![T::zero(); planes * ho * wo];
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * ho * wo..(p + 1) * ho * wo];
        for i in 0..ho {
            for j in 0..wo {
                let mut acc = T::zero();
                for di in 0..win {
                    let r = &src[(i * win + di) * w + j * win..(i * win + di) * w + (j + 1) * win];
                    acc = acc + r.iter().copied().sum::<T>();
                }
                dst[i * wo + j] = acc / norm;
            }
        }
    }
    out
}

fn avgpool_backward<T: Scalar>(dy: &[T], planes: usize, h: usize, w: usize, win: usize) -> Vec<T> {
    let (ho, wo) = (h / win, w / win);
    let norm = T::from_usize(win * win).unwrap();
    let mut dx = vec![T::zero(); planes * h * w];
    for p in 0..planes {
        for i in 0..h {
            for j in 0..w {
                dx[p * h * w + i * w + j] = dy[p * ho * wo + (i / win) * wo + j / win] / norm;
            }
        }
    }
    dx
}

/// Source index pair and interpolation weight for each output coordinate
/// (half-pixel centres, edge-clamped).
fn upsample_taps<T: Scalar>(len: usize, scale: usize) -> Vec<(usize, usize, T)> {
    let s = scale as f64;
    (0..len * scale)
        .map(|o| {
            let src = ((o as f64 + 0.5) / s - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(len - 1);
            let i1 = (i0 + 1).min(len - 1);
            (i0, i1, T::lit(src - i0 as f64))
        })
        .collect()
}

fn upsample_forward<T: Scalar>(x: &[T], planes: usize, h: usize, w: usize, scale: usize) -> Vec<T> {
    let rows = upsample_taps::<T>(h, scale);
    let cols = upsample_taps::<T>(w, scale);
    let (ho, wo) = (h * scale, w * scale);
    let mut out = vec![T::zero(); planes * ho * wo];
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * ho * wo..(p + 1) * ho * wo];
        for (i, &(r0, r1, ty)) in rows.iter().enumerate() {
            for (j, &(c0, c1, tx)) in cols.iter().enumerate() {
                let top = lerp(src[r0 * w + c0], src[r0 * w + c1], tx);
                let bottom = lerp(src[r1 * w + c0], src[r1 * w + c1], tx);
                dst[i * wo + j] = lerp(top, bottom, ty);
            }
        }
    }
    out
}

fn upsample_backward<T: Scalar>(dy: &[T], planes: usize, h: usize, w: usize, scale: usize) -> Vec<T> {
    let rows = upsample_taps::<T>(h, scale);
    let cols = upsample_taps::<T>(w, scale);
    let (ho, wo) = (h * scale, w * scale);
    let mut dx = vec![T::zero(); planes * h * w];
    for p in 0..planes {
        let g = &dy[p * ho * wo..(p + 1) * ho * wo];
        let d = &mut dx[p * h * w..(p + 1) * h * w];
        for (i, &(r0, r1, ty)) in rows.iter().enumerate() {
            for (j, &(c0, c1, tx)) in cols.iter().enumerate() {
                let v = g[i * wo + j];
                let (uy, ux) = (T::one() - ty, T::one() - tx);
                d[r0 * w + c0] = d[r0 * w + c0] + v * uy * ux;
                d[r0 * w + c1] = d[r0 * w + c1] + v * uy * tx;
                d[r1 * w + c0] = d[r1 * w + c0] + v * ty * ux;
                d[r1 * w + c1] = d[r1 * w + c1] + v * ty * tx;
            }
        }
    }
    dx
}

// a + t (b - a) reproduces a constant exactly when a == b.
fn lerp<T: Scalar>(a: T, b: T, t: T) -> T {
    a + t * (b - a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layer(spec: LayerSpec) -> Layer<f64> {
        Layer::init(spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap()
    }

    #[test]
    fn identity_conv_passes_input_through() {
        let spec = LayerSpec::Conv { in_channels: 2, out_channels: 2, kernel: 1, stride: 1, height: 3, width: 3 };
        let w = Tensor::new(vec![2, 2, 1, 1], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let l = Layer::from_parts(spec, vec![w, Tensor::zeros(vec![2])], vec![]).unwrap();
        let x = Tensor::from_fn(vec![2, 2, 3, 3], |i| (i as f64).sin());
        assert_eq!(l.forward(&x, Mode::Infer).unwrap(), x);
    }

    #[test]
    fn avgpool_of_two_by_two() {
        let l = layer(LayerSpec::AvgPool { channels: 1, height: 2, width: 2, window: 2 });
        let x = Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(l.forward(&x, Mode::Infer).unwrap().data(), &[2.5]);
    }

    #[test]
    fn upsample_of_constant_is_constant() {
        let l = layer(LayerSpec::BilinearUpsample { channels: 1, height: 3, width: 5, scale: 2 });
        let x = Tensor::full(vec![1, 1, 3, 5], 0.3712);
        let y = l.forward(&x, Mode::Infer).unwrap();
        assert_eq!(y.shape(), &[1, 1, 6, 10]);
        assert!(y.data().iter().all(|&v| v == 0.3712));
    }

    #[test]
    fn elu_and_tanh_unit_slopes() {
        let e = layer(LayerSpec::Elu { dims: vec![1] });
        let x = Tensor::new(vec![1, 1], vec![1.0]).unwrap();
        let g = e.backward(&x, &Tensor::full(vec![1, 1], 1.0)).unwrap();
        assert_eq!(g.input.data(), &[1.0]);
        let t = layer(LayerSpec::Tanh { dims: vec![1] });
        let x = Tensor::new(vec![1, 1], vec![0.0]).unwrap();
        let g = t.backward(&x, &Tensor::full(vec![1, 1], 1.0)).unwrap();
        assert_eq!(g.input.data(), &[1.0]);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let l = layer(LayerSpec::AvgPool { channels: 1, height: 4, width: 4, window: 2 });
        let x = Tensor::<f64>::zeros(vec![1, 1, 2, 2]);
        assert!(l.forward(&x, Mode::Infer).is_err());
        let x = Tensor::<f64>::zeros(vec![1, 1, 4, 4]);
        assert!(l.backward(&x, &Tensor::zeros(vec![1, 1, 4, 4])).is_err());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let bad = LayerSpec::BatchNorm { channels: 1, height: 1, width: 1, eps: 0.0, momentum: 0.9 };
        assert!(bad.validate().is_err());
        let even = LayerSpec::Conv { in_channels: 1, out_channels: 1, kernel: 2, stride: 1, height: 4, width: 4 };
        assert!(even.validate().is_err());
        let pool = LayerSpec::AvgPool { channels: 1, height: 5, width: 4, window: 2 };
        assert!(pool.validate().is_err());
    }

    #[test]
    fn strided_conv_output_extent() {
        let spec = LayerSpec::Conv { in_channels: 1, out_channels: 1, kernel: 3, stride: 2, height: 8, width: 7 };
        assert_eq!(spec.output_shape(), vec![1, 4, 4]);
    }

    #[test]
    fn batchnorm_train_mode_standardizes() {
        let l = layer(LayerSpec::BatchNorm { channels: 3, height: 4, width: 4, eps: 1e-5, momentum: 0.9 });
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Tensor::from_fn(vec![8, 3, 4, 4], |i| rng.random_range(-3.0..5.0) + (i % 3) as f64);
        let y = l.forward(&x, Mode::Train).unwrap();
        let (mean, var) = batch_stats(y.data(), 8, 3, 16);
        for c in 0..3 {
            assert!(mean[c].abs() < 1e-6);
            assert!((var[c] - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn running_stats_follow_momentum() {
        let mut l = layer(LayerSpec::BatchNorm { channels: 1, height: 1, width: 2, eps: 1e-5, momentum: 0.9 });
        let x = Tensor::new(vec![1, 1, 1, 2], vec![1.0, 3.0]).unwrap();
        l.forward_train(&x).unwrap();
        assert!((l.buffers()[0].data()[0] - 0.2).abs() < 1e-12);
        assert!((l.buffers()[1].data()[0] - (0.9 + 0.1)).abs() < 1e-12);
    }
}
