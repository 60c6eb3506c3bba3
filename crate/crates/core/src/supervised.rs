//! L1-regularized logistic regression and the shared classification metrics.

use crate::error::{reject, Error, Result};

/// Probability that a random positive outscores a random negative, ties counted half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return reject("auc: scores and labels differ in length");
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return reject("auc needs both classes");
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numeric("auc given a NaN score".into()));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += idx[i..=j].iter().filter(|&&k| labels[k]).count() as f64 * avg;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Per-column affine map to zero mean and unit variance.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = check_matrix(rows)?;
        let n = rows.len() as f64;
        let mean: Vec<f64> = (0..dim).map(|d| rows.iter().map(|r| r[d]).sum::<f64>() / n).collect();
        let scale = (0..dim)
            .map(|d| {
                let v = rows.iter().map(|r| (r[d] - mean[d]).powi(2)).sum::<f64>() / n;
                if v > 1e-24 { v.sqrt() } else { 1.0 }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn apply(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| r.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s).collect()).collect()
    }
}

fn check_matrix(rows: &[Vec<f64>]) -> Result<usize> {
    let Some(first) = rows.first() else {
        return reject("empty feature matrix");
    };
    let dim = first.len();
    if rows.iter().any(|r| r.len() != dim) {
        return reject("feature rows differ in dimension");
    }
    Ok(dim)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub lambda: f64,
    pub iterations: usize,
    /// Objective after each accepted step, starting with the initial value.
    pub objective_history: Vec<f64>,
}

impl LinearModel {
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    pub fn probability(&self, x: &[f64]) -> f64 {
        sigmoid(self.margin(x))
    }

    pub fn nonzero(&self) -> usize {
        self.weights.iter().filter(|&&w| w != 0.0).count()
    }

    pub fn final_objective(&self) -> f64 {
        *self.objective_history.last().unwrap_or(&f64::NAN)
    }

    /// Dimension, bias and the nonzero weights as `index value` lines.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "# npae-linear v1\ndim {}\nbias {:.17e}\nlambda {:.17e}\niterations {}\nobjective {:.17e}\n",
            self.weights.len(),
            self.bias,
            self.lambda,
            self.iterations,
            self.final_objective()
        );
        for (i, w) in self.weights.iter().enumerate().filter(|(_, &w)| w != 0.0) {
            s.push_str(&format!("w {i} {w:.17e}\n"));
        }
        s
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 { 1.0 / (1.0 + (-t).exp()) } else { t.exp() / (1.0 + t.exp()) }
}

/// `log(1 + exp(t))` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 { t + (-t).exp().ln_1p() } else { t.exp().ln_1p() }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

struct Problem<'a> {
    x: &'a [Vec<f64>],
    y: &'a [bool],
}

impl Problem<'_> {
    fn loss(&self, w: &[f64], b: f64) -> f64 {
        let n = self.x.len() as f64;
        self.x
            .iter()
            .zip(self.y)
            .map(|(r, &y)| {
                let m = b + w.iter().zip(r).map(|(a, v)| a * v).sum::<f64>();
                if y { softplus(-m) } else { softplus(m) }
            })
            .sum::<f64>()
            / n
    }

    fn gradient(&self, w: &[f64], b: f64) -> (Vec<f64>, f64) {
        let n = self.x.len() as f64;
        let mut gw = vec![0.0; w.len()];
        let mut gb = 0.0;
        for (r, &y) in self.x.iter().zip(self.y) {
            let m = b + w.iter().zip(r).map(|(a, v)| a * v).sum::<f64>();
            let e = sigmoid(m) - if y { 1.0 } else { 0.0 };
            gw.iter_mut().zip(r).for_each(|(g, v)| *g += e * v);
            gb += e;
        }
        gw.iter_mut().for_each(|g| *g /= n);
        (gw, gb / n)
    }
}

/// Mean logistic loss plus `lambda * |w|_1` by proximal gradient with backtracking.
/// The bias is not penalized.
pub fn fit_l1_logistic(x: &[Vec<f64>], y: &[bool], lambda: f64, tol: f64, max_iter: usize) -> Result<LinearModel> {
    let dim = check_matrix(x)?;
    if x.len() != y.len() {
        return reject("features and labels differ in count");
    }
    let pos = y.iter().filter(|&&l| l).count();
    if pos < 2 || y.len() - pos < 2 {
        return reject("logistic fit needs at least two examples of each class");
    }
    if !(lambda >= 0.0) {
        return reject(format!("regularization strength {lambda} must be nonnegative"));
    }
    let prob = Problem { x, y };
    let l1 = |w: &[f64]| lambda * w.iter().map(|v| v.abs()).sum::<f64>();
    let mut w = vec![0.0; dim];
    let rate = pos as f64 / y.len() as f64;
    let mut b = (rate / (1.0 - rate)).ln();
    let mut f = prob.loss(&w, b);
    let mut history = vec![f + l1(&w)];
    let mut step = 1.0;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let (gw, gb) = prob.gradient(&w, b);
        let (w_new, b_new, f_new) = loop {
            let wn: Vec<f64> = w.iter().zip(&gw).map(|(a, g)| soft_threshold(a - step * g, step * lambda)).collect();
            let bn = b - step * gb;
            let fn_ = prob.loss(&wn, bn);
            let dw: Vec<f64> = wn.iter().zip(&w).map(|(a, c)| a - c).collect();
            let db = bn - b;
            let lin = dw.iter().zip(&gw).map(|(d, g)| d * g).sum::<f64>() + db * gb;
            let quad = (dw.iter().map(|d| d * d).sum::<f64>() + db * db) / (2.0 * step);
            if fn_ <= f + lin + quad + 1e-15 * f.abs() || step < 1e-12 {
                break (wn, bn, fn_);
            }
            step *= 0.5;
        };
        let obj = f_new + l1(&w_new);
        let prev = *history.last().unwrap_or(&f64::INFINITY);
        if !obj.is_finite() {
            return Err(Error::Numeric("logistic objective became non-finite".into()));
        }
        if obj > prev {
            break;
        }
        w = w_new;
        b = b_new;
        f = f_new;
        history.push(obj);
        step *= 1.25;
        if prev - obj < tol {
            break;
        }
    }
    Ok(LinearModel { weights: w, bias: b, lambda, iterations, objective_history: history })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricReport {
    pub accuracy: f64,
    pub auc: f64,
    pub positives: usize,
    pub negatives: usize,
}

pub fn evaluate(model: &LinearModel, x: &[Vec<f64>], y: &[bool]) -> Result<MetricReport> {
    if x.iter().any(|r| r.len() != model.weights.len()) {
        return reject(format!("model expects {} features", model.weights.len()));
    }
    let scores: Vec<f64> = x.iter().map(|r| model.margin(r)).collect();
    report_from_scores(&scores, y, Some(0.0))
}

/// Metrics for a real-valued score. Accuracy uses `threshold` when given,
/// otherwise it is reported as NaN.
pub fn report_from_scores(scores: &[f64], y: &[bool], threshold: Option<f64>) -> Result<MetricReport> {
    let auc = auc(scores, y)?;
    let accuracy = threshold.map_or(f64::NAN, |t| scores.iter().zip(y).filter(|(&s, &l)| (s >= t) == l).count() as f64 / y.len() as f64);
    let positives = y.iter().filter(|&&l| l).count();
    Ok(MetricReport { accuracy, auc, positives, negatives: y.len() - positives })
}

/// Logarithmic grid of `count` strengths from the smallest all-zero strength down by `ratio`.
pub fn lambda_grid(x: &[Vec<f64>], y: &[bool], count: usize, ratio: f64) -> Result<Vec<f64>> {
    let dim = check_matrix(x)?;
    let n = x.len() as f64;
    let ybar = y.iter().filter(|&&l| l).count() as f64 / n;
    let max = (0..dim)
        .map(|d| (x.iter().zip(y).map(|(r, &l)| r[d] * (if l { 1.0 } else { 0.0 } - ybar)).sum::<f64>() / n).abs())
        .fold(0.0, f64::max)
        .max(1e-8);
    if count < 2 {
        return Ok(vec![max]);
    }
    Ok((0..count).map(|i| max * ratio.powf(i as f64 / (count - 1) as f64)).collect())
}

pub const LAMBDA_GRID_SIZE: usize = 20;
pub const LAMBDA_RATIO: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct SelectedModel {
    pub standardizer: Standardizer,
    pub model: LinearModel,
    pub validation: MetricReport,
}

impl SelectedModel {
    pub fn evaluate(&self, x: &[Vec<f64>], y: &[bool]) -> Result<MetricReport> {
        evaluate(&self.model, &self.standardizer.apply(x), y)
    }
}

/// Standardize on the training split, sweep the strength grid, keep the
/// strength with the best validation accuracy (AUC, then the larger strength, break ties).
pub fn fit_with_validation(
    train_x: &[Vec<f64>],
    train_y: &[bool],
    val_x: &[Vec<f64>],
    val_y: &[bool],
) -> Result<SelectedModel> {
    let standardizer = Standardizer::fit(train_x)?;
    let tx = standardizer.apply(train_x);
    let vx = standardizer.apply(val_x);
    let mut best: Option<(LinearModel, MetricReport)> = None;
    for lambda in lambda_grid(&tx, train_y, LAMBDA_GRID_SIZE, LAMBDA_RATIO)? {
        let model = fit_l1_logistic(&tx, train_y, lambda, 1e-9, 5000)?;
        let rep = evaluate(&model, &vx, val_y)?;
        let better = best.as_ref().is_none_or(|(_, b)| (rep.accuracy, rep.auc) > (b.accuracy, b.auc));
        if better {
            best = Some((model, rep));
        }
    }
    let (model, validation) = best.expect("lambda grid is nonempty");
    Ok(SelectedModel { standardizer, model, validation })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_examples() {
        let y = [true, true, false, false];
        assert_eq!(auc(&[0.9, 0.4, 0.6, 0.1], &y).unwrap(), 0.75);
        assert_eq!(auc(&[2.0, 3.0, 0.0, 1.0], &y).unwrap(), 1.0);
        assert_eq!(auc(&[0.0, 1.0, 2.0, 3.0], &y).unwrap(), 0.0);
        assert_eq!(auc(&[1.0; 4], &y).unwrap(), 0.5);
        assert!(auc(&[1.0, 2.0], &[true, true]).is_err());
    }

    #[test]
    fn huge_lambda_zeroes_weights() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 10.0 - 1.0, (i % 3) as f64 - 1.0]).collect();
        let y: Vec<bool> = (0..20).map(|i| i >= 10).collect();
        let m = fit_l1_logistic(&x, &y, 1e3, 1e-12, 500).unwrap();
        assert!(m.weights.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn separable_line_is_learned() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![if i % 2 == 0 { -1.0 } else { 1.0 }]).collect();
        let y: Vec<bool> = (0..40).map(|i| i % 2 == 1).collect();
        let m = fit_l1_logistic(&x, &y, 1e-3, 1e-12, 2000).unwrap();
        assert_eq!(evaluate(&m, &x, &y).unwrap().accuracy, 1.0);
        assert!(m.objective_history.windows(2).all(|w| w[1] <= w[0]));
        assert!(m.to_text().contains("dim 1"));
    }

    #[test]
    fn single_class_rejected() {
        let x = vec![vec![0.0]; 5];
        assert!(fit_l1_logistic(&x, &[true; 5], 0.1, 1e-9, 10).is_err());
    }
}
