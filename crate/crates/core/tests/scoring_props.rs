use npae_core::scoring::{
    equivariant_transform, fit_lfdr, linf, robust_moments, robust_moments_full, Covariance, LfdrModel,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

fn random_set(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect()).collect()
}

#[test]
fn equivariant_norm_equals_mahalanobis() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..1000 {
        let trim = trial / 2 % 2;
        let set = random_set(&mut rng, 12, 3);
        let mut moments =
            if trial % 2 == 0 { robust_moments(&set, trim) } else { robust_moments_full(&set, trim, 0.1) }.unwrap();
        let out = equivariant_transform(&set, &moments).unwrap();
        moments.mean = (0..3).map(|j| set.iter().map(|r| r[j]).sum::<f64>() / 12.0).collect();
        for (x, xh) in set.iter().zip(&out) {
            let norm = xh.iter().map(|v| v * v).sum::<f64>().sqrt();
            let m = moments.mahalanobis(x).unwrap();
            assert!((norm - m).abs() < 1e-10, "trial {trial}: {norm} vs {m}");
        }
    }
}

#[test]
fn zero_trim_matches_textbook_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let n = rng.random_range(3..40);
        let set = random_set(&mut rng, n, 3);
        let m = robust_moments(&set, 0).unwrap();
        let Covariance::Diagonal(var) = &m.covariance else { unreachable!() };
        for d in 0..3 {
            let mean = set.iter().map(|r| r[d]).sum::<f64>() / n as f64;
            let v = set.iter().map(|r| (r[d] - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            assert!((m.mean[d] - mean).abs() < 1e-12);
            assert!((var[d] - v).abs() < 1e-12);
        }
    }
}

proptest! {
    #[test]
    fn rankings_survive_positive_scaling(
        rows in prop::collection::vec(prop::collection::vec(0.0f64..5.0, 4), 6..20),
        c in 0.01f64..100.0,
    ) {
        let scaled: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v * c).collect()).collect();
        let rank = |xs: &[f64]| {
            let mut idx: Vec<usize> = (0..xs.len()).collect();
            idx.sort_by(|&a, &b| xs[b].total_cmp(&xs[a]).then(a.cmp(&b)));
            idx
        };
        let score_all = |set: &[Vec<f64>]| {
            let m = robust_moments(set, 1).unwrap();
            let maha: Vec<f64> = set.iter().map(|x| m.mahalanobis(x).unwrap()).collect();
            let inf: Vec<f64> = set.iter().map(|x| linf(x, true).unwrap()).collect();
            (maha, inf)
        };
        let (m0, l0) = score_all(&rows);
        let (m1, l1) = score_all(&scaled);
        // Floored variances break exact scale invariance; skip near-constant draws.
        let m = robust_moments(&rows, 1).unwrap();
        let Covariance::Diagonal(var) = &m.covariance else { unreachable!() };
        prop_assume!(var.iter().all(|&v| v * c.min(1.0).powi(2) > 1e-9));
        let distinct = |v: &[f64]| {
            let mut s = v.to_vec();
            s.sort_by(f64::total_cmp);
            s.windows(2).all(|w| w[1] - w[0] > 1e-9 * w[1].abs().max(1.0))
        };
        prop_assume!(distinct(&m0) && distinct(&l0));
        prop_assert_eq!(rank(&m0), rank(&m1));
        prop_assert_eq!(rank(&l0), rank(&l1));
    }
}

fn normal_sample(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn lfdr_standard_normal_is_mostly_null() {
    let s = normal_sample(3, 30_000);
    let model = fit_lfdr(&s, false).unwrap();
    assert!(model.pi0 > 0.0 && model.pi0 <= 1.0);
    let lf: Vec<f64> = s.iter().map(|&x| model.lfdr_at(model.standardize(x))).collect();
    assert!(lf.iter().all(|v| (0.0..=1.0).contains(v)));
    assert!(median(lf) >= 0.9);
    let step = model.grid[1] - model.grid[0];
    let mass: f64 = model.density.iter().sum::<f64>() * step;
    assert!((mass - 1.0).abs() < 1e-2, "density mass {mass}");
}

#[test]
fn lfdr_flags_planted_outliers() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let planted = Normal::new(5.0, 0.1).unwrap();
    let mut s = normal_sample(4, 29_700);
    let outliers: Vec<f64> = (0..300).map(|_| planted.sample(&mut rng)).collect();
    s.extend(&outliers);
    let model = fit_lfdr(&s, false).unwrap();
    for &x in &outliers {
        let l = model.lfdr_at(model.standardize(x));
        assert!(l <= 0.2, "outlier {x}: lfdr {l}");
        assert!(model.score(x) >= 0.8);
    }
    assert!(model.score(model.location) < 0.05);
}

#[test]
fn lfdr_grid_is_monotone_away_from_mode() {
    for (seed, use_log) in [(1, false), (2, true)] {
        let s: Vec<f64> = normal_sample(seed, 5_000).into_iter().map(|x| if use_log { (0.3 * x).exp() } else { x }).collect();
        let m = fit_lfdr(&s, use_log).unwrap();
        let mode = (0..m.grid.len()).max_by(|&a, &b| m.density[a].total_cmp(&m.density[b])).unwrap();
        for i in mode + 1..m.grid.len() {
            assert!(1.0 - m.lfdr[i] >= 1.0 - m.lfdr[i - 1]);
        }
        for i in 0..mode {
            assert!(1.0 - m.lfdr[i] >= 1.0 - m.lfdr[i + 1]);
        }
        assert!(m.lfdr.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn null_model_min_cap() {
    let m = LfdrModel::null(false);
    assert!(m.lfdr.iter().all(|&v| v == 1.0));
}
