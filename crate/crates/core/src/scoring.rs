//! Unsupervised anomaly scores over feature vectors.
//!
//! Every score is oriented so that larger means more anomalous.

use std::fmt;

use crate::error::{reject, Error, Result};
use crate::features::FeatureVector;
use crate::linalg::Matrix;
use crate::scalar::Scalar;

pub const VARIANCE_FLOOR: f64 = 1e-12;
pub const DEFAULT_TRIM: usize = 1;
pub const DEFAULT_SHRINKAGE: f64 = 0.1;

/// Largest entry; largest magnitude when entries may be negative.
pub fn linf<T: Scalar>(values: &[T], nonnegative: bool) -> Result<T> {
    if values.is_empty() {
        return reject("L-infinity score of an empty vector");
    }
    let it = values.iter().copied();
    Ok(if nonnegative {
        it.fold(T::neg_infinity(), T::max)
    } else {
        it.map(T::abs).fold(T::zero(), T::max)
    })
}

pub fn linf_score(features: &FeatureVector) -> Result<f64> {
    linf(&features.values, features.kind.is_residual())
}

#[derive(Clone, Debug, PartialEq)]
pub enum Covariance<T> {
    Diagonal(Vec<T>),
    /// Shrunk covariance with its lower Cholesky factor.
    Full { matrix: Matrix<T>, cholesky: Matrix<T> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RobustMoments<T> {
    pub mean: Vec<T>,
    pub covariance: Covariance<T>,
    pub trim: usize,
}

fn check_rows<T>(rows: &[Vec<T>], trim: usize) -> Result<usize> {
    if rows.len() <= 2 * trim + 1 {
        return reject(format!("need more than {} vectors to trim {trim} per tail, got {}", 2 * trim + 1, rows.len()));
    }
    let dim = rows[0].len();
    if dim == 0 || rows.iter().any(|r| r.len() != dim) {
        return reject("moment rows must share a nonzero dimension");
    }
    Ok(dim)
}

/// Indices of the rows kept in column `d` after dropping `trim` from each tail.
fn kept_in_column<T: Scalar>(rows: &[Vec<T>], d: usize, trim: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..rows.len()).collect();
    idx.sort_by(|&a, &b| rows[a][d].partial_cmp(&rows[b][d]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    idx[trim..rows.len() - trim].to_vec()
}

fn mean_var<T: Scalar>(values: impl Iterator<Item = T> + Clone) -> (T, T) {
    let n = T::lit(values.clone().count() as f64);
    let mean = values.clone().sum::<T>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<T>() / (n - T::one());
    (mean, var.max(T::lit(VARIANCE_FLOOR)))
}

/// Per-dimension trimmed mean and sample variance (diagonal covariance).
pub fn robust_moments<T: Scalar>(rows: &[Vec<T>], trim: usize) -> Result<RobustMoments<T>> {
    let dim = check_rows(rows, trim)?;
    let (mean, var) = (0..dim)
        .map(|d| {
            let kept = kept_in_column(rows, d, trim);
            mean_var(kept.iter().map(|&i| rows[i][d]))
        })
        .unzip();
    Ok(RobustMoments { mean, covariance: Covariance::Diagonal(var), trim })
}

/// Full covariance over the rows that survive trimming in every dimension,
/// shrunk towards its diagonal.
pub fn robust_moments_full<T: Scalar>(rows: &[Vec<T>], trim: usize, shrinkage: f64) -> Result<RobustMoments<T>> {
    let dim = check_rows(rows, trim)?;
    if !(0.0..=1.0).contains(&shrinkage) {
        return reject(format!("shrinkage {shrinkage} outside [0, 1]"));
    }
    let mut keep = vec![true; rows.len()];
    for d in 0..dim {
        let kept = kept_in_column(rows, d, trim);
        let mut in_col = vec![false; rows.len()];
        kept.into_iter().for_each(|i| in_col[i] = true);
        keep.iter_mut().zip(in_col).for_each(|(k, c)| *k &= c);
    }
    let kept: Vec<&Vec<T>> = rows.iter().zip(&keep).filter(|(_, &k)| k).map(|(r, _)| r).collect();
    if kept.len() < 2 {
        return reject("too few vectors survive trimming for a full covariance");
    }
    let n = T::lit(kept.len() as f64);
    let mean: Vec<T> = (0..dim).map(|d| kept.iter().map(|r| r[d]).sum::<T>() / n).collect();
    let mut cov = Matrix::zeros(dim);
    for i in 0..dim {
        for j in 0..=i {
            let s = kept.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<T>() / (n - T::one());
            cov.set(i, j, s);
            cov.set(j, i, s);
        }
    }
    let a = T::lit(shrinkage);
    for i in 0..dim {
        for j in 0..dim {
            let v = cov.get(i, j);
            cov.set(i, j, if i == j { v.max(T::lit(VARIANCE_FLOOR)) } else { (T::one() - a) * v });
        }
    }
    let cholesky = cov.cholesky()?;
    Ok(RobustMoments { mean, covariance: Covariance::Full { matrix: cov, cholesky }, trim })
}

impl<T: Scalar> RobustMoments<T> {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `sqrt((x - mean)^T Sigma^-1 (x - mean))`.
    pub fn mahalanobis(&self, x: &[T]) -> Result<T> {
        if x.len() != self.dim() {
            return reject(format!("feature dimension {} does not match moments dimension {}", x.len(), self.dim()));
        }
        let centered: Vec<T> = x.iter().zip(&self.mean).map(|(&a, &m)| a - m).collect();
        let sq = match &self.covariance {
            Covariance::Diagonal(var) => centered.iter().zip(var).map(|(&c, &v)| c * c / v).sum::<T>(),
            Covariance::Full { cholesky, .. } => cholesky.forward_substitute(&centered).iter().map(|&y| y * y).sum(),
        };
        Ok(sq.sqrt())
    }

    /// `Sigma^(-1/2)`.
    pub fn whitening(&self) -> Result<Matrix<T>> {
        match &self.covariance {
            Covariance::Diagonal(var) => Ok(Matrix::diagonal(&var.iter().map(|v| v.sqrt().recip()).collect::<Vec<_>>())),
            Covariance::Full { matrix, .. } => matrix.inverse_sqrt(),
        }
    }
}

pub fn mahalanobis_score(features: &FeatureVector, moments: &RobustMoments<f64>) -> Result<f64> {
    moments.mahalanobis(&features.values)
}

/// Set-level linear map `x_i -> lambda x_i + gamma sum_j x_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct EquivariantParams<T> {
    pub lambda: Matrix<T>,
    pub gamma: Matrix<T>,
}

impl<T: Scalar> EquivariantParams<T> {
    /// `lambda = Sigma^(-1/2)`, `gamma = -Sigma^(-1/2) / n`.
    pub fn from_moments(moments: &RobustMoments<T>, set_size: usize) -> Result<Self> {
        if set_size == 0 {
            return reject("equivariant transform of an empty set");
        }
        let lambda = moments.whitening()?;
        let gamma = lambda.scale(-T::lit(set_size as f64).recip());
        Ok(Self { lambda, gamma })
    }

    pub fn identity(dim: usize) -> Self {
        Self { lambda: Matrix::identity(dim), gamma: Matrix::zeros(dim) }
    }

    pub fn apply(&self, set: &[Vec<T>]) -> Result<Vec<Vec<T>>> {
        let dim = self.lambda.n;
        if set.is_empty() || set.iter().any(|x| x.len() != dim) {
            return reject(format!("equivariant transform expects a nonempty set of {dim}-vectors"));
        }
        let total: Vec<T> = (0..dim).map(|d| set.iter().map(|x| x[d]).sum()).collect();
        let shift = self.gamma.mul_vec(&total);
        Ok(set.iter().map(|x| self.lambda.mul_vec(x).into_iter().zip(&shift).map(|(a, &b)| a + b).collect()).collect())
    }
}

pub fn equivariant_transform<T: Scalar>(set: &[Vec<T>], moments: &RobustMoments<T>) -> Result<Vec<Vec<T>>> {
    EquivariantParams::from_moments(moments, set.len())?.apply(set)
}

pub const LFDR_MIN_SCORES: usize = 200;
pub const DENSITY_FLOOR: f64 = 1e-12;
const GRID_POINTS: usize = 1024;

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Local false discovery rate model with a standard-normal null.
#[derive(Clone, Debug, PartialEq)]
pub struct LfdrModel {
    pub use_log: bool,
    pub location: f64,
    pub scale: f64,
    pub pi0: f64,
    pub bandwidth: f64,
    /// Evaluation grid in standardized units, ascending.
    pub grid: Vec<f64>,
    /// Estimated marginal density on `grid`.
    pub density: Vec<f64>,
    /// lfdr on `grid`, non-increasing away from the density mode.
    pub lfdr: Vec<f64>,
}

pub fn fit_lfdr(scores: &[f64], use_log: bool) -> Result<LfdrModel> {
    if scores.len() < LFDR_MIN_SCORES {
        return reject(format!("lfdr fit needs at least {LFDR_MIN_SCORES} scores, got {}", scores.len()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return reject("lfdr fit given a non-finite score");
    }
    if use_log && scores.iter().any(|&s| s <= 0.0) {
        return reject("log-standardized lfdr needs positive scores");
    }
    let mut t: Vec<f64> = scores.iter().map(|&s| if use_log { s.ln() } else { s }).collect();
    t.sort_by(f64::total_cmp);
    let location = quantile(&t, 0.5);
    let scale = (quantile(&t, 0.75) - quantile(&t, 0.25)) / 1.349;
    if !(scale > 0.0) {
        return Err(Error::Numeric("scores have zero interquartile range".into()));
    }
    let z: Vec<f64> = t.iter().map(|v| (v - location) / scale).collect();
    let n = z.len() as f64;
    let mean = z.iter().sum::<f64>() / n;
    let sd = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let iqr = quantile(&z, 0.75) - quantile(&z, 0.25);
    let bandwidth = 0.9 * sd.min(iqr / 1.34) * n.powf(-0.2);

    let (lo, hi) = (z[0] - 5.0 * bandwidth, z[z.len() - 1] + 5.0 * bandwidth);
    let grid: Vec<f64> = (0..GRID_POINTS).map(|i| lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64).collect();
    let reach = 8.0 * bandwidth;
    let density: Vec<f64> = grid
        .iter()
        .map(|&g| {
            let start = z.partition_point(|&v| v < g - reach);
            let end = z.partition_point(|&v| v <= g + reach);
            z[start..end].iter().map(|&v| std_normal_pdf((g - v) / bandwidth)).sum::<f64>() / (n * bandwidth)
        })
        .collect();

    let mode = (0..grid.len()).max_by(|&a, &b| density[a].total_cmp(&density[b]).then(b.cmp(&a))).unwrap_or(0);
    let pi0 = (density[mode] / std_normal_pdf(grid[mode])).min(1.0);
    let mut model = LfdrModel { use_log, location, scale, pi0, bandwidth, grid, density, lfdr: Vec::new() };
    model.lfdr = envelope(&model.grid.iter().zip(&model.density).map(|(&g, &f)| raw_lfdr(pi0, g, f)).collect::<Vec<_>>(), mode);
    Ok(model)
}

fn raw_lfdr(pi0: f64, z: f64, f: f64) -> f64 {
    (pi0 * std_normal_pdf(z) / f.max(DENSITY_FLOOR)).min(1.0)
}

/// Running minimum outward from `mode` in both directions.
fn envelope(raw: &[f64], mode: usize) -> Vec<f64> {
    let mut out = raw.to_vec();
    for i in mode + 1..out.len() {
        out[i] = out[i].min(out[i - 1]);
    }
    for i in (0..mode).rev() {
        out[i] = out[i].min(out[i + 1]);
    }
    out
}

impl LfdrModel {
    /// Model whose marginal equals the null, so every lfdr is 1.
    pub fn null(use_log: bool) -> Self {
        let grid: Vec<f64> = (0..GRID_POINTS).map(|i| -10.0 + 20.0 * i as f64 / (GRID_POINTS - 1) as f64).collect();
        let density: Vec<f64> = grid.iter().map(|&g| std_normal_pdf(g)).collect();
        let lfdr = vec![1.0; GRID_POINTS];
        Self { use_log, location: 0.0, scale: 1.0, pi0: 1.0, bandwidth: 0.0, grid, density, lfdr }
    }

    pub fn standardize(&self, score: f64) -> f64 {
        let t = if self.use_log { score.max(f64::MIN_POSITIVE).ln() } else { score };
        (t - self.location) / self.scale
    }

    fn interpolate(&self, values: &[f64], z: f64) -> f64 {
        let last = self.grid.len() - 1;
        if z.is_nan() {
            return values[0];
        }
        if z <= self.grid[0] {
            return values[0];
        }
        if z >= self.grid[last] {
            return values[last];
        }
        let i = self.grid.partition_point(|&g| g <= z) - 1;
        let w = (z - self.grid[i]) / (self.grid[i + 1] - self.grid[i]);
        values[i] + w * (values[i + 1] - values[i])
    }

    pub fn density_at(&self, z: f64) -> f64 {
        self.interpolate(&self.density, z).max(DENSITY_FLOOR)
    }

    /// lfdr at standardized position `z`, in [0, 1].
    pub fn lfdr_at(&self, z: f64) -> f64 {
        self.interpolate(&self.lfdr, z).clamp(0.0, 1.0)
    }

    /// `1 - lfdr` of a raw score.
    pub fn score(&self, score: f64) -> f64 {
        1.0 - self.lfdr_at(self.standardize(score))
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "# npae-lfdr v1 use_log={} location={:.9e} scale={:.9e} pi0={:.9e} bandwidth={:.9e} orientation=one-minus-lfdr\n",
            self.use_log, self.location, self.scale, self.pi0, self.bandwidth
        );
        s.push_str("z\tdensity\tlfdr\n");
        for ((z, f), l) in self.grid.iter().zip(&self.density).zip(&self.lfdr) {
            s.push_str(&format!("{z:.6e}\t{f:.6e}\t{l:.6e}\n"));
        }
        s
    }
}

pub fn lfdr_score(model: &LfdrModel, score: f64) -> f64 {
    model.score(score)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Linf,
    Mahalanobis,
    /// L-infinity norm of the equivariant transform of the evaluation set.
    EquivariantLinf,
    Lfdr,
    LfdrLog,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Linf, Method::Mahalanobis, Method::EquivariantLinf, Method::Lfdr, Method::LfdrLog];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Linf => "linf",
            Method::Mahalanobis => "mahalanobis",
            Method::EquivariantLinf => "equivariant-linf",
            Method::Lfdr => "lfdr",
            Method::LfdrLog => "lfdr-log",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| Error::RejectedInput(format!("unknown scoring method {s:?}")))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub const SCORE_HEADER: &str = "# npae-scores v1";

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreVector {
    pub method: String,
    pub ids: Vec<String>,
    pub scores: Vec<f64>,
}

impl ScoreVector {
    pub fn new(method: impl Into<String>, ids: Vec<String>, scores: Vec<f64>) -> Result<Self> {
        if ids.len() != scores.len() {
            return reject("score ids and values differ in count");
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::Numeric(format!("non-finite score for {}", ids[i])));
        }
        Ok(Self { method: method.into(), ids, scores })
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{SCORE_HEADER} orientation=larger-is-more-anomalous\n");
        for (id, v) in self.ids.iter().zip(&self.scores) {
            s.push_str(&format!("{id}\t{}\t{v:.8e}\n", self.method));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if !lines.next().unwrap_or_default().starts_with(SCORE_HEADER) {
            return reject("score file header missing");
        }
        let (mut method, mut ids, mut scores) = (None::<String>, Vec::new(), Vec::new());
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
            let bad = || Error::RejectedInput(format!("score line {}: malformed", n + 2));
            let mut parts = line.split('\t');
            let (Some(id), Some(m), Some(v), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
                return Err(bad());
            };
            match &method {
                Some(prev) if prev != m => return reject(format!("score file mixes methods {prev} and {m}")),
                _ => method = Some(m.to_string()),
            }
            ids.push(id.to_string());
            scores.push(v.parse::<f64>().map_err(|_| bad())?);
        }
        Self::new(method.unwrap_or_default(), ids, scores)
    }
}
