//! Acceptance suite. Each criterion prints one `criterion N: PASS|FAIL ...`
//! line; the process exits non-zero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use npae_core::experiments::{parse_recall_table, run_set_trials, ProbeKind, RandomScorer, RecallCurve};
use npae_core::gradcheck;
use npae_core::masking::{apply_box_mask, apply_complement_mask};
use npae_core::scoring::{equivariant_transform, fit_lfdr, robust_moments, robust_moments_full};
use npae_core::{ArchConfig, Autoencoder64, Extents, Image64, PixelBox};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

const GRAD_TOLERANCE: f64 = 1e-4;
const GRAD_TRIALS: usize = 100;
const GRAD_BUDGET: Duration = Duration::from_secs(120);
const MASK_TRIALS: usize = 1000;
const PEEK_TRIALS: usize = 100;
const IDENTITY_TOLERANCE: f64 = 1e-10;
const IDENTITY_SETS: usize = 1000;
const CHANCE_TRIALS: usize = 10_000;
const CHANCE_SIGMAS: f64 = 3.0;
const CHANCE_BUDGET: Duration = Duration::from_secs(60);
const PEEK_GAP: f64 = 0.05;
const ATTRIBUTE_BUDGET: Duration = Duration::from_secs(30 * 60);
const SET_BUDGET: Duration = Duration::from_secs(45 * 60);
const RECALL_FLOOR_16: f64 = 3.0 / 16.0;
const CONTROL_RATIO: f64 = 1.5;
const SET_SIZES: [usize; 3] = [16, 64, 128];
const LFDR_NULL_MEDIAN: f64 = 0.9;
const LFDR_OUTLIER_MAX: f64 = 0.2;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn random_image(rng: &mut ChaCha8Rng, e: Extents) -> Image64 {
    let data = (0..e.len()).map(|_| rng.random_range(-1.0..=1.0)).collect();
    Image64::new("q", e, data).unwrap()
}

fn random_box(rng: &mut ChaCha8Rng, e: Extents) -> PixelBox {
    let h = rng.random_range(1..=e.height);
    let w = rng.random_range(1..=e.width);
    PixelBox::new(rng.random_range(0..=e.height - h), rng.random_range(0..=e.width - w), h, w)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let results = gradcheck::suite(GRAD_TRIALS);
    let elapsed = start.elapsed();
    let worst = results.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    let failing: Vec<&str> = results.iter().filter(|(_, e)| *e >= GRAD_TOLERANCE).map(|(n, _)| n.as_str()).collect();
    outcome(
        failing.is_empty() && elapsed < GRAD_BUDGET,
        format!(
            "{} checks x {GRAD_TRIALS} trials, worst relative error {worst:.2e} (< {GRAD_TOLERANCE:e}), failing {failing:?}, {:.1}s",
            results.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut bad = 0;
    for _ in 0..MASK_TRIALS {
        let e = Extents::new(rng.random_range(1..=24), rng.random_range(1..=24), rng.random_range(1..=3));
        let q = random_image(&mut rng, e);
        let b = random_box(&mut rng, e);
        let inside = apply_box_mask(&q, b).unwrap();
        let outside = apply_complement_mask(&q, b).unwrap();
        let sum_ok = inside.data.iter().zip(&outside.data).zip(&q.data).all(|((a, c), v)| a + c == *v);
        let annihilate = apply_complement_mask(&inside, b).unwrap().data.iter().all(|&v| v == 0.0);
        let idem_in = apply_box_mask(&inside, b).unwrap().data == inside.data;
        let idem_out = apply_complement_mask(&outside, b).unwrap().data == outside.data;
        if !(sum_ok && annihilate && idem_in && idem_out) {
            bad += 1;
        }
    }
    outcome(bad == 0, format!("{MASK_TRIALS} random (Q, b), {bad} violations of the exact identities"))
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let arch = ArchConfig::compact(32, 32, 1);
    let model = Autoencoder64::init(arch, &mut rng).unwrap();
    let e = Extents::new(32, 32, 1);
    let mut changed = 0;
    let mut sensitive = 0;
    for _ in 0..PEEK_TRIALS {
        let q = random_image(&mut rng, e);
        let b = random_box(&mut rng, e);
        let base = model.inpaint(&q, b).unwrap();
        let mut scrambled = q.clone();
        let mut outside = q.clone();
        for y in 0..e.height {
            for x in 0..e.width {
                if b.contains(y, x) {
                    scrambled.set(0, y, x, rng.random_range(-1.0..=1.0));
                } else {
                    outside.set(0, y, x, rng.random_range(-1.0..=1.0));
                }
            }
        }
        let again = model.inpaint(&scrambled, b).unwrap();
        if base.data.iter().zip(&again.data).any(|(a, c)| a.to_bits() != c.to_bits()) {
            changed += 1;
        }
        if b.area() < e.height * e.width && model.inpaint(&outside, b).unwrap().data != base.data {
            sensitive += 1;
        }
    }
    outcome(
        changed == 0 && sensitive > 0,
        format!("{PEEK_TRIALS} trials, {changed} outputs changed by in-box pixels; {sensitive} responded to out-of-box pixels"),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for i in 0..IDENTITY_SETS {
        let n = rng.random_range(12..=40);
        let d = rng.random_range(1..=6);
        let set: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let mut moments = if i % 2 == 0 { robust_moments(&set, 1) } else { robust_moments_full(&set, 1, 0.1) }.unwrap();
        let out = equivariant_transform(&set, &moments).unwrap();
        // distance is measured from the set's own mean
        moments.mean = (0..d).map(|j| set.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
        for (x, xh) in set.iter().zip(&out) {
            let norm = xh.iter().map(|v| v * v).sum::<f64>().sqrt();
            let m = moments.mahalanobis(x).unwrap();
            worst = worst.max((norm - m).abs());
        }
    }
    outcome(
        worst < IDENTITY_TOLERANCE,
        format!("{IDENTITY_SETS} sets (diagonal and full covariance), max |norm - mahalanobis| {worst:.2e}"),
    )
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let holdout: Vec<String> = (0..500).map(|i| format!("h{i:04}")).collect();
    let probes: Vec<String> = (0..100).map(|i| format!("p{i:04}")).collect();
    let scorer = RandomScorer { seed: 5 };
    let run = run_set_trials(&scorer, &holdout, &probes, ProbeKind::Anomaly, &[16, 64], CHANCE_TRIALS, 55).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for n in [16usize, 64] {
        let r = run.curve.at(n, 1).unwrap();
        let p = 1.0 / n as f64;
        let bound = CHANCE_SIGMAS * (p * (1.0 - p) / CHANCE_TRIALS as f64).sqrt();
        pass &= (r - p).abs() <= bound;
        parts.push(format!("n={n} recall@1 {r:.4} vs {p:.4} +/- {bound:.4}"));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < CHANCE_BUDGET;
    outcome(pass, format!("{}, {:.1}s", parts.join("; "), elapsed.as_secs_f64()))
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let null: Vec<f64> = (0..20_000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let model = fit_lfdr(&null, false).unwrap();
    let mut lf: Vec<f64> = null.iter().map(|&x| model.lfdr_at(model.standardize(x))).collect();
    let in_range = lf.iter().all(|v| (0.0..=1.0).contains(v));
    lf.sort_by(f64::total_cmp);
    let median = lf[lf.len() / 2];

    let planted = Normal::new(5.0, 0.1).unwrap();
    let mut mixed: Vec<f64> = null[..19_800].to_vec();
    let outliers: Vec<f64> = (0..200).map(|_| planted.sample(&mut rng)).collect();
    mixed.extend(&outliers);
    let model = fit_lfdr(&mixed, false).unwrap();
    let worst = outliers.iter().map(|&x| model.lfdr_at(model.standardize(x))).fold(0.0, f64::max);
    let all_in_range = in_range && mixed.iter().all(|&x| (0.0..=1.0).contains(&model.lfdr_at(model.standardize(x))));
    outcome(
        median >= LFDR_NULL_MEDIAN && worst <= LFDR_OUTLIER_MAX && all_in_range,
        format!("null median lfdr {median:.3} (>= {LFDR_NULL_MEDIAN}); max outlier lfdr {worst:.3} (<= {LFDR_OUTLIER_MAX}); outputs in [0,1]: {all_in_range}"),
    )
}

const PIPELINE: [&str; 7] = ["gen-data", "train", "features", "score", "eval-sets", "eval-attr", "report"];

fn npae(out: &Path, config: Option<&Path>, extra: &[&str], command: &str) -> Duration {
    let start = Instant::now();
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_npae"));
    cmd.arg(command).arg("--out").arg(out).args(extra);
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    let run = cmd.output().expect("spawn npae");
    assert!(run.status.success(), "npae {command} failed: {}", String::from_utf8_lossy(&run.stderr));
    start.elapsed()
}

struct AttributeRow {
    method: String,
    feature: String,
    accuracy: Option<f64>,
    auc: f64,
}

fn read_attribute(path: &Path) -> Vec<AttributeRow> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            AttributeRow {
                method: f[0].to_string(),
                feature: f[1].to_string(),
                accuracy: f[2].parse().ok(),
                auc: f[3].parse().unwrap(),
            }
        })
        .collect()
}

fn lookup<'a>(rows: &'a [AttributeRow], method: &str, feature: &str) -> &'a AttributeRow {
    rows.iter().find(|r| r.method == method && r.feature == feature).expect("attribute row")
}

fn curve<'a>(curves: &'a [RecallCurve], method: &str, kind: ProbeKind) -> &'a RecallCurve {
    curves.iter().find(|c| c.method == method && c.probe_kind == kind).expect("recall curve")
}

/// Criteria 6, 7 and 8 share one run of the default configuration.
fn full_pipeline() -> [Outcome; 3] {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let config = dir.path().join("run.toml");
    std::fs::write(&config, "[experiment]\nset_sizes = [16, 64, 128]\ntrials = 2000\n").unwrap();
    let mut time = std::collections::HashMap::new();
    for c in PIPELINE {
        time.insert(c, npae(&out, Some(&config), &[], c));
    }
    let shared = time["gen-data"] + time["train"] + time["features"];

    let rows = read_attribute(&out.join("results/attribute.tsv"));
    let inpaint = lookup(&rows, "mahalanobis", "inpaint-residual").auc;
    let raw = lookup(&rows, "mahalanobis", "raw-residual").auc;
    let code = lookup(&rows, "mahalanobis", "code").auc;
    let t6 = shared + time["eval-attr"];
    let c6 = outcome(
        inpaint - raw >= PEEK_GAP && inpaint > code && t6 < ATTRIBUTE_BUDGET,
        format!(
            "mahalanobis AUC inpaint {inpaint:.3} raw {raw:.3} code {code:.3} (gap {:.3} >= {PEEK_GAP}), {:.0}s",
            inpaint - raw,
            t6.as_secs_f64()
        ),
    );

    let acc = |f| lookup(&rows, "l1-logistic", f).accuracy.expect("supervised accuracy");
    let (acc_inpaint, acc_code) = (acc("inpaint-residual"), acc("code"));
    let c7 = outcome(acc_inpaint >= acc_code, format!("l1-logistic accuracy inpaint {acc_inpaint:.3} code {acc_code:.3}"));

    let curves = parse_recall_table(&std::fs::read_to_string(out.join("results/recall.tsv")).unwrap()).unwrap();
    let anomaly = curve(&curves, "linf", ProbeKind::Anomaly);
    let control = curve(&curves, "linf", ProbeKind::ControlTypical);
    let r16 = anomaly.at(16, 1).unwrap();
    let mut pass = r16 >= RECALL_FLOOR_16 && anomaly.trials == 2000;
    let mut parts = vec![format!("size-16 anomaly recall@1 {r16:.3} (>= {RECALL_FLOOR_16:.4})")];
    for n in SET_SIZES {
        let (a, c) = (anomaly.at(n, 1).unwrap(), control.at(n, 1).unwrap());
        pass &= a >= CONTROL_RATIO * c;
        parts.push(format!("n={n} anomaly {a:.3} control {c:.3}"));
    }
    let t8 = shared + time["score"] + time["eval-sets"];
    pass &= t8 < SET_BUDGET;
    parts.push(format!("{:.0}s", t8.as_secs_f64()));
    let c8 = outcome(pass, parts.join("; "));
    [c6, c7, c8]
}

const TINY: &str = r#"seed = 23

[data]
height = 32
width = 32
train = 200
holdout = 300
anomalies = 30
controls = 30
attribute_negatives = 40
attribute_positives = 40

[train]
epochs = 2

[grid]
box_size = 8
stride = 8
edge_exclusion = 4

[experiment]
set_sizes = [16, 64]
trials = 300
"#;

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("tiny.toml");
    std::fs::write(&config, TINY).unwrap();
    let mut tables = Vec::new();
    for threads in ["1", "2"] {
        let out = dir.path().join(format!("threads-{threads}"));
        for c in PIPELINE {
            npae(&out, Some(&config), &["--threads", threads], c);
        }
        tables.push(std::fs::read(out.join("results/recall.tsv")).unwrap());
    }
    let same = tables[0] == tables[1] && !tables[0].is_empty();
    outcome(same, format!("recall table with --threads 1 vs 2: {} ({} bytes)", if same { "byte-identical" } else { "differs" }, tables[0].len()))
}

fn main() {
    let mut results: Vec<(u32, Outcome)> = Vec::new();
    let mut report = |n: u32, o: Outcome| {
        println!("criterion {n}: {} {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, o));
    };
    report(1, criterion_1());
    report(2, criterion_2());
    report(3, criterion_3());
    report(4, criterion_4());
    report(5, criterion_5());
    let [c6, c7, c8] = full_pipeline();
    report(6, c6);
    report(7, c7);
    report(8, c8);
    report(9, criterion_9());
    report(10, criterion_10());
    let failed: Vec<u32> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", results.len());
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
