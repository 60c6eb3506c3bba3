use npae_core::supervised::{auc, fit_l1_logistic, lambda_grid, Standardizer};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn noisy_data(seed: u64, n: usize) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = [1.5, -1.0, 0.5, 0.0, 0.0, 0.25];
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..truth.len()).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
    let y = x
        .iter()
        .map(|r| {
            let m: f64 = r.iter().zip(truth).map(|(a, b)| a * b).sum();
            rng.random::<f64>() < 1.0 / (1.0 + (-m).exp())
        })
        .collect();
    (x, y)
}

/// Unregularized logistic regression by Newton iterations with a dense solve.
fn newton_reference(x: &[Vec<f64>], y: &[bool]) -> Vec<f64> {
    let d = x[0].len() + 1;
    let rows: Vec<Vec<f64>> = x.iter().map(|r| std::iter::once(1.0).chain(r.iter().copied()).collect()).collect();
    let mut beta = vec![0.0; d];
    for _ in 0..50 {
        let mut h = vec![vec![0.0; d]; d];
        let mut g = vec![0.0; d];
        for (r, &l) in rows.iter().zip(y) {
            let p = 1.0 / (1.0 + (-r.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>()).exp());
            for i in 0..d {
                g[i] += (p - if l { 1.0 } else { 0.0 }) * r[i];
                for j in 0..d {
                    h[i][j] += p * (1.0 - p) * r[i] * r[j];
                }
            }
        }
        // Gaussian elimination on h * step = g.
        for c in 0..d {
            let piv = (c..d).max_by(|&a, &b| h[a][c].abs().total_cmp(&h[b][c].abs())).unwrap();
            h.swap(c, piv);
            g.swap(c, piv);
            for r in c + 1..d {
                let f = h[r][c] / h[c][c];
                for k in c..d {
                    h[r][k] -= f * h[c][k];
                }
                g[r] -= f * g[c];
            }
        }
        let mut step = vec![0.0; d];
        for c in (0..d).rev() {
            step[c] = (g[c] - (c + 1..d).map(|k| h[c][k] * step[k]).sum::<f64>()) / h[c][c];
        }
        beta.iter_mut().zip(&step).for_each(|(b, s)| *b -= s);
    }
    rows.iter().map(|r| r.iter().zip(&beta).map(|(a, b)| a * b).sum()).collect()
}

#[test]
fn unregularized_fit_agrees_with_newton() {
    let (x, y) = noisy_data(1, 400);
    let model = fit_l1_logistic(&x, &y, 0.0, 1e-14, 20_000).unwrap();
    let reference = newton_reference(&x, &y);
    let agree = x.iter().zip(&reference).filter(|(r, &m)| (model.margin(r) >= 0.0) == (m >= 0.0)).count();
    assert!(agree as f64 >= 0.99 * x.len() as f64, "agreement {agree}/{}", x.len());
}

#[test]
fn sparsity_shrinks_along_lambda_path() {
    let (x, y) = noisy_data(2, 300);
    let x = Standardizer::fit(&x).unwrap().apply(&x);
    let grid = lambda_grid(&x, &y, 20, 1e-3).unwrap();
    assert!(grid.windows(2).all(|w| w[1] < w[0]));
    let counts: Vec<usize> = grid.iter().map(|&l| fit_l1_logistic(&x, &y, l, 1e-12, 5000).unwrap().nonzero()).collect();
    assert_eq!(counts[0], 0);
    // Larger strength first: counts must not decrease as strength falls.
    assert!(counts.windows(2).all(|w| w[1] >= w[0]), "{counts:?}");
}

#[test]
fn objective_never_increases() {
    for seed in 0..10 {
        let (x, y) = noisy_data(100 + seed, 120);
        let m = fit_l1_logistic(&x, &y, 0.01 * seed as f64, 1e-12, 500).unwrap();
        assert!(m.objective_history.windows(2).all(|w| w[1] <= w[0]));
        assert!(m.weights.iter().all(|w| w.is_finite()));
    }
}

proptest! {
    #[test]
    fn auc_ignores_monotone_transforms(
        data in prop::collection::vec((-5.0f64..5.0, any::<bool>()), 4..60),
    ) {
        let (scores, labels): (Vec<f64>, Vec<bool>) = data.into_iter().unzip();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let a = auc(&scores, &labels).unwrap();
        let b = auc(&scores.iter().map(|s| (s * 0.7).exp() + 3.0).collect::<Vec<_>>(), &labels).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }
}
