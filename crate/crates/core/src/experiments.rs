//! Evaluation protocols: set-based recall trials, the paired typical-probe
//! control, the proxy-attribute table and the decile montage report.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{reject, Error, Result};
use crate::features::FeatureKind;
use crate::linalg::Matrix;
use crate::scoring::{linf, robust_moments, robust_moments_full, RobustMoments, DEFAULT_SHRINKAGE, DEFAULT_TRIM};
use crate::seeding::{derive_seed, indexed_rng};
use crate::supervised::{fit_with_validation, report_from_scores, MetricReport};

pub const RECALL_LEVELS: [usize; 3] = [1, 5, 10];
pub const DEFAULT_SET_SIZES: [usize; 4] = [16, 64, 128, 256];
pub const DEFAULT_TRIALS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pool {
    Holdout,
    Probe,
}

/// One member of an evaluation set: an index into one of the two pools.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Member {
    pub pool: Pool,
    pub index: usize,
}

/// Assigns an anomaly score to every member of an evaluation set.
pub trait SetScorer: Sync {
    fn name(&self) -> &str;
    fn score_set(&self, trial: u64, members: &[Member]) -> Vec<f64>;
}

/// Precomputed per-item scores; set context is ignored.
pub struct ItemScorer {
    pub name: String,
    pub holdout: Vec<f64>,
    pub probes: Vec<f64>,
}

impl SetScorer for ItemScorer {
    fn name(&self) -> &str {
        &self.name
    }

    fn score_set(&self, _trial: u64, members: &[Member]) -> Vec<f64> {
        members
            .iter()
            .map(|m| match m.pool {
                Pool::Holdout => self.holdout[m.index],
                Pool::Probe => self.probes[m.index],
            })
            .collect()
    }
}

/// Fresh uniform scores for every trial, independent of the images.
pub struct RandomScorer {
    pub seed: u64,
}

impl SetScorer for RandomScorer {
    fn name(&self) -> &str {
        "random"
    }

    fn score_set(&self, trial: u64, members: &[Member]) -> Vec<f64> {
        let mut rng = indexed_rng(self.seed, "random-scorer", trial);
        members.iter().map(|_| rng.random()).collect()
    }
}

/// L-infinity norm of the set whitened about its own mean.
pub struct EquivariantScorer {
    pub name: String,
    pub whitening: Matrix<f64>,
    pub holdout: Vec<Vec<f64>>,
    pub probes: Vec<Vec<f64>>,
}

impl EquivariantScorer {
    pub fn new(name: impl Into<String>, moments: &RobustMoments<f64>, holdout: Vec<Vec<f64>>, probes: Vec<Vec<f64>>) -> Result<Self> {
        Ok(Self { name: name.into(), whitening: moments.whitening()?, holdout, probes })
    }
}

impl SetScorer for EquivariantScorer {
    fn name(&self) -> &str {
        &self.name
    }

    fn score_set(&self, _trial: u64, members: &[Member]) -> Vec<f64> {
        let rows: Vec<&Vec<f64>> = members
            .iter()
            .map(|m| match m.pool {
                Pool::Holdout => &self.holdout[m.index],
                Pool::Probe => &self.probes[m.index],
            })
            .collect();
        let n = rows.len() as f64;
        let dim = self.whitening.n;
        let mean: Vec<f64> = (0..dim).map(|d| rows.iter().map(|r| r[d]).sum::<f64>() / n).collect();
        rows.iter()
            .map(|r| {
                let centered: Vec<f64> = r.iter().zip(&mean).map(|(a, b)| a - b).collect();
                linf(&self.whitening.mul_vec(&centered), false).unwrap_or(0.0)
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProbeKind {
    Anomaly,
    ControlTypical,
}

impl ProbeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProbeKind::Anomaly => "anomaly",
            ProbeKind::ControlTypical => "control-typical",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "anomaly" => Ok(ProbeKind::Anomaly),
            "control-typical" => Ok(ProbeKind::ControlTypical),
            _ => reject(format!("unknown probe kind {s:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub trial: u64,
    pub set_size: usize,
    pub probe_id: String,
    pub probe_kind: ProbeKind,
    pub distractor_ids: Vec<String>,
    /// 1 is the most anomalous position.
    pub rank: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecallCurve {
    pub method: String,
    pub probe_kind: ProbeKind,
    pub sizes: Vec<usize>,
    /// Recall at 1, 5 and 10 for each size.
    pub recall: Vec<[f64; 3]>,
    pub trials: usize,
}

impl RecallCurve {
    pub fn at(&self, size: usize, level: usize) -> Option<f64> {
        let i = self.sizes.iter().position(|&s| s == size)?;
        let j = RECALL_LEVELS.iter().position(|&l| l == level)?;
        Some(self.recall[i][j])
    }
}

#[derive(Clone, Debug)]
pub struct SetRun {
    pub curve: RecallCurve,
    pub records: Vec<TrialRecord>,
}

/// Distractor indices and probe index of one trial. Distractors are drawn
/// before the probe so paired runs over different probe pools share them.
pub fn draw_trial(seed: u64, size: usize, trial: u64, holdout_len: usize, probe_len: usize) -> (Vec<usize>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(indexed_trial_seed(seed, size, trial));
    let distractors = sample(&mut rng, holdout_len, size - 1).into_vec();
    let probe = rng.random_range(0..probe_len);
    (distractors, probe)
}

fn indexed_trial_seed(seed: u64, size: usize, trial: u64) -> u64 {
    crate::seeding::indexed_seed(derive_seed(seed, &format!("trials/size-{size}")), "trial", trial)
}

/// 1-based position of `target` when sorting by score descending, then id ascending.
fn rank_of(scores: &[f64], ids: &[&str], target: usize) -> usize {
    let (ts, tid) = (scores[target], ids[target]);
    1 + scores
        .iter()
        .zip(ids)
        .enumerate()
        .filter(|&(i, (&s, &id))| i != target && (s > ts || (s == ts && id < tid)))
        .count()
}

pub fn run_set_trials(
    scorer: &dyn SetScorer,
    holdout_ids: &[String],
    probe_ids: &[String],
    probe_kind: ProbeKind,
    sizes: &[usize],
    trials: usize,
    seed: u64,
) -> Result<SetRun> {
    if probe_ids.is_empty() {
        return reject("probe pool is empty");
    }
    if trials == 0 || sizes.is_empty() {
        return reject("need at least one set size and one trial");
    }
    if let Some(&s) = sizes.iter().find(|&&s| s < 2 || s - 1 > holdout_ids.len()) {
        return reject(format!("set size {s} needs {} distractors but the holdout pool has {}", s.saturating_sub(1), holdout_ids.len()));
    }
    let holdout_set: HashSet<&str> = holdout_ids.iter().map(String::as_str).collect();
    if let Some(id) = probe_ids.iter().find(|id| holdout_set.contains(id.as_str())) {
        return reject(format!("image {id} is in both the holdout and probe pools"));
    }
    let mut records = Vec::with_capacity(sizes.len() * trials);
    let mut recall = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let batch: Vec<TrialRecord> = (0..trials as u64)
            .into_par_iter()
            .map(|trial| {
                let (distractors, probe) = draw_trial(seed, size, trial, holdout_ids.len(), probe_ids.len());
                let mut members: Vec<Member> = distractors.iter().map(|&index| Member { pool: Pool::Holdout, index }).collect();
                members.push(Member { pool: Pool::Probe, index: probe });
                let ids: Vec<&str> = distractors.iter().map(|&i| holdout_ids[i].as_str()).chain([probe_ids[probe].as_str()]).collect();
                let scores = scorer.score_set(trial, &members);
                TrialRecord {
                    trial,
                    set_size: size,
                    probe_id: probe_ids[probe].clone(),
                    probe_kind,
                    distractor_ids: distractors.iter().map(|&i| holdout_ids[i].clone()).collect(),
                    rank: rank_of(&scores, &ids, size - 1),
                }
            })
            .collect();
        if let Some(r) = batch.iter().find(|r| r.rank == 0 || r.rank > size) {
            return Err(Error::Numeric(format!("trial {} produced rank {}", r.trial, r.rank)));
        }
        let levels = RECALL_LEVELS.map(|k| batch.iter().filter(|r| r.rank <= k).count() as f64 / trials as f64);
        recall.push(levels);
        records.extend(batch);
    }
    let curve = RecallCurve { method: scorer.name().to_string(), probe_kind, sizes: sizes.to_vec(), recall, trials };
    Ok(SetRun { curve, records })
}

/// Same trial schedule as [`run_set_trials`], with typical probes.
pub fn run_control(
    scorer: &dyn SetScorer,
    holdout_ids: &[String],
    control_ids: &[String],
    sizes: &[usize],
    trials: usize,
    seed: u64,
) -> Result<SetRun> {
    run_set_trials(scorer, holdout_ids, control_ids, ProbeKind::ControlTypical, sizes, trials, seed)
}

/// Tab-separated recall table, one row per method, probe kind, size and level.
pub fn recall_table(curves: &[RecallCurve]) -> String {
    let mut s = String::from("method\tprobe_kind\tset_size\tlevel\trecall\ttrials\n");
    for c in curves {
        for (size, rec) in c.sizes.iter().zip(&c.recall) {
            for (level, r) in RECALL_LEVELS.iter().zip(rec) {
                s.push_str(&format!("{}\t{}\t{size}\t{level}\t{r:.6}\t{}\n", c.method, c.probe_kind.as_str(), c.trials));
            }
        }
    }
    s
}

pub fn parse_recall_table(text: &str) -> Result<Vec<RecallCurve>> {
    let mut curves: Vec<RecallCurve> = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1).filter(|(_, l)| !l.is_empty()) {
        let bad = || Error::RejectedInput(format!("recall table line {}: malformed", n + 1));
        let f: Vec<&str> = line.split('\t').collect();
        let [method, kind, size, level, recall, trials] = f[..] else {
            return Err(bad());
        };
        let kind = ProbeKind::parse(kind)?;
        let size: usize = size.parse().map_err(|_| bad())?;
        let level = RECALL_LEVELS.iter().position(|l| l.to_string() == level).ok_or_else(bad)?;
        let recall: f64 = recall.parse().map_err(|_| bad())?;
        let trials: usize = trials.parse().map_err(|_| bad())?;
        let idx = match curves.iter().position(|c| c.method == method && c.probe_kind == kind) {
            Some(i) => i,
            None => {
                curves.push(RecallCurve { method: method.to_string(), probe_kind: kind, sizes: Vec::new(), recall: Vec::new(), trials });
                curves.len() - 1
            }
        };
        let c = &mut curves[idx];
        let si = match c.sizes.iter().position(|&s| s == size) {
            Some(i) => i,
            None => {
                c.sizes.push(size);
                c.recall.push([f64::NAN; 3]);
                c.sizes.len() - 1
            }
        };
        c.recall[si][level] = recall;
    }
    if curves.iter().any(|c| c.recall.iter().flatten().any(|v| v.is_nan())) {
        return reject("recall table is missing levels");
    }
    Ok(curves)
}

/// Trial records without distractor lists, one per line.
pub fn trial_records_text(records: &[TrialRecord]) -> String {
    let mut s = String::from("trial\tset_size\tprobe_kind\tprobe_id\trank\n");
    for r in records {
        s.push_str(&format!("{}\t{}\t{}\t{}\t{}\n", r.trial, r.set_size, r.probe_kind.as_str(), r.probe_id, r.rank));
    }
    s
}

pub fn parse_trial_records(text: &str) -> Result<Vec<TrialRecord>> {
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.is_empty())
        .map(|(n, line)| {
            let bad = || Error::RejectedInput(format!("trial record line {}: malformed", n + 1));
            let f: Vec<&str> = line.split('\t').collect();
            let [trial, size, kind, id, rank] = f[..] else {
                return Err(bad());
            };
            Ok(TrialRecord {
                trial: trial.parse().map_err(|_| bad())?,
                set_size: size.parse().map_err(|_| bad())?,
                probe_id: id.to_string(),
                probe_kind: ProbeKind::parse(kind)?,
                distractor_ids: Vec::new(),
                rank: rank.parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AttributeMethod {
    L1Logistic,
    Mahalanobis,
    Linf,
}

impl AttributeMethod {
    pub const ALL: [AttributeMethod; 3] = [AttributeMethod::L1Logistic, AttributeMethod::Mahalanobis, AttributeMethod::Linf];

    pub fn as_str(&self) -> &'static str {
        match self {
            AttributeMethod::L1Logistic => "l1-logistic",
            AttributeMethod::Mahalanobis => "mahalanobis",
            AttributeMethod::Linf => "linf",
        }
    }
}

impl fmt::Display for AttributeMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Features of one kind for the attribute experiment.
#[derive(Clone, Debug)]
pub struct AttributeData {
    pub kind: FeatureKind,
    /// Attribute-negative images unseen in training; used for moments.
    pub holdout: Vec<Vec<f64>>,
    pub negatives: Vec<Vec<f64>>,
    pub positives: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttributeRow {
    pub method: AttributeMethod,
    pub kind: FeatureKind,
    pub report: MetricReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttributeTable {
    pub rows: Vec<AttributeRow>,
}

impl AttributeTable {
    pub fn get(&self, method: AttributeMethod, kind: FeatureKind) -> Option<&MetricReport> {
        self.rows.iter().find(|r| r.method == method && r.kind == kind).map(|r| &r.report)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("method\tfeature\taccuracy\tauc\tpositives\tnegatives\n");
        for r in &self.rows {
            let acc = if r.report.accuracy.is_nan() { "-".to_string() } else { format!("{:.6}", r.report.accuracy) };
            s.push_str(&format!(
                "{}\t{}\t{acc}\t{:.6}\t{}\t{}\n",
                r.method,
                r.kind.as_str(),
                r.report.auc,
                r.report.positives,
                r.report.negatives
            ));
        }
        s
    }
}

/// Shuffled split of `n` indices into halves for training, then quarters for validation and test.
fn split_indices(n: usize, seed: u64, label: &str) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut rng = crate::seeding::stage_rng(seed, label);
    let mut idx: Vec<usize> = (0..n).collect();
    rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut rng);
    let (a, b) = (n / 2, n / 2 + n / 4);
    (idx[..a].to_vec(), idx[a..b].to_vec(), idx[b..].to_vec())
}

/// Unsupervised methods are scored on every test image; the supervised
/// method trains on half of each class, picks its strength on a quarter and
/// reports on the remaining quarter.
pub fn run_attribute_experiment(data: &[AttributeData], methods: &[AttributeMethod], split_seed: u64) -> Result<AttributeTable> {
    let mut rows = Vec::new();
    for d in data {
        if d.positives.is_empty() || d.negatives.is_empty() {
            return reject(format!("{} features lack attribute-positive or attribute-negative images", d.kind.as_str()));
        }
        let all: Vec<&Vec<f64>> = d.negatives.iter().chain(&d.positives).collect();
        let labels: Vec<bool> = (0..all.len()).map(|i| i >= d.negatives.len()).collect();
        for &method in methods {
            let report = match method {
                AttributeMethod::Linf => {
                    let s = all.iter().map(|x| linf(x, d.kind.is_residual())).collect::<Result<Vec<_>>>()?;
                    report_from_scores(&s, &labels, None)?
                }
                AttributeMethod::Mahalanobis => {
                    let m = if d.kind.is_residual() {
                        robust_moments(&d.holdout, DEFAULT_TRIM)?
                    } else {
                        robust_moments_full(&d.holdout, DEFAULT_TRIM, DEFAULT_SHRINKAGE)?
                    };
                    let s = all.iter().map(|x| m.mahalanobis(x)).collect::<Result<Vec<_>>>()?;
                    report_from_scores(&s, &labels, None)?
                }
                AttributeMethod::L1Logistic => {
                    let (nt, nv, ne) = split_indices(d.negatives.len(), split_seed, "attribute/negatives");
                    let (pt, pv, pe) = split_indices(d.positives.len(), split_seed, "attribute/positives");
                    let gather = |neg: &[usize], pos: &[usize]| {
                        let x: Vec<Vec<f64>> = neg.iter().map(|&i| d.negatives[i].clone()).chain(pos.iter().map(|&i| d.positives[i].clone())).collect();
                        let y: Vec<bool> = (0..x.len()).map(|i| i >= neg.len()).collect();
                        (x, y)
                    };
                    let (tx, ty) = gather(&nt, &pt);
                    let (vx, vy) = gather(&nv, &pv);
                    let (ex, ey) = gather(&ne, &pe);
                    fit_with_validation(&tx, &ty, &vx, &vy)?.evaluate(&ex, &ey)?
                }
            };
            rows.push(AttributeRow { method, kind: d.kind, report });
        }
    }
    Ok(AttributeTable { rows })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeFrequency {
    pub id: String,
    pub set_size: usize,
    pub appearances: usize,
    /// Fraction of this image's trials that ranked it within 1, 5 and 10.
    pub found: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecileReport {
    /// Median member of each score decile, lowest decile first.
    pub deciles: Vec<(String, f64)>,
    pub frequencies: Vec<ProbeFrequency>,
}

impl DecileReport {
    pub fn to_text(&self, path_of: impl Fn(&str) -> String) -> String {
        let mut s = String::from("decile\tid\tscore\tpath\n");
        for (i, (id, score)) in self.deciles.iter().enumerate() {
            s.push_str(&format!("{}\t{id}\t{score:.8e}\t{}\n", i + 1, path_of(id)));
        }
        s.push_str("\nid\tset_size\ttrials\tat1\tat5\tat10\n");
        for f in &self.frequencies {
            s.push_str(&format!("{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\n", f.id, f.set_size, f.appearances, f.found[0], f.found[1], f.found[2]));
        }
        s
    }
}

pub fn decile_report(ids: &[String], scores: &[f64], records: &[TrialRecord]) -> Result<DecileReport> {
    if ids.len() != scores.len() {
        return reject("decile report ids and scores differ in count");
    }
    if ids.len() < 10 {
        return reject(format!("decile report needs at least 10 images, got {}", ids.len()));
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then_with(|| ids[a].cmp(&ids[b])));
    let n = order.len();
    let deciles = (0..10)
        .map(|d| {
            let (lo, hi) = (d * n / 10, (d + 1) * n / 10);
            let i = order[lo + (hi - lo - 1) / 2];
            (ids[i].clone(), scores[i])
        })
        .collect();
    let mut tally: BTreeMap<(String, usize), (usize, [usize; 3])> = BTreeMap::new();
    for r in records {
        let e = tally.entry((r.probe_id.clone(), r.set_size)).or_default();
        e.0 += 1;
        for (k, level) in RECALL_LEVELS.iter().enumerate() {
            e.1[k] += (r.rank <= *level) as usize;
        }
    }
    let frequencies = tally
        .into_iter()
        .map(|((id, set_size), (appearances, hits))| ProbeFrequency {
            id,
            set_size,
            appearances,
            found: hits.map(|h| h as f64 / appearances as f64),
        })
        .collect();
    Ok(DecileReport { deciles, frequencies })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}-{i:05}")).collect()
    }

    struct Oracle;
    impl SetScorer for Oracle {
        fn name(&self) -> &str {
            "oracle"
        }
        fn score_set(&self, _: u64, members: &[Member]) -> Vec<f64> {
            members.iter().map(|m| if m.pool == Pool::Probe { f64::INFINITY } else { 0.0 }).collect()
        }
    }

    #[test]
    fn oracle_always_first() {
        let run = run_set_trials(&Oracle, &ids("h", 300), &ids("p", 5), ProbeKind::Anomaly, &[16, 64, 256], 200, 1).unwrap();
        assert!(run.curve.recall.iter().all(|r| r[0] == 1.0));
    }

    #[test]
    fn ties_rank_by_id() {
        let s = [1.0, 1.0, 1.0];
        assert_eq!(rank_of(&s, &["b", "a", "c"], 0), 2);
        assert_eq!(rank_of(&s, &["b", "a", "c"], 1), 1);
        assert_eq!(rank_of(&[0.0, 2.0, 1.0], &["a", "b", "c"], 2), 2);
    }

    #[test]
    fn paired_runs_share_distractors() {
        let h = ids("h", 100);
        let r = RandomScorer { seed: 3 };
        let a = run_set_trials(&r, &h, &ids("a", 10), ProbeKind::Anomaly, &[16], 50, 9).unwrap();
        let c = run_control(&r, &h, &ids("c", 10), &[16], 50, 9).unwrap();
        for (x, y) in a.records.iter().zip(&c.records) {
            assert_eq!(x.distractor_ids, y.distractor_ids);
        }
    }

    #[test]
    fn bad_pools_rejected() {
        let h = ids("h", 10);
        let r = RandomScorer { seed: 3 };
        assert!(run_set_trials(&r, &h, &ids("p", 2), ProbeKind::Anomaly, &[16], 5, 0).is_err());
        assert!(run_set_trials(&r, &h, &[], ProbeKind::Anomaly, &[4], 5, 0).is_err());
        assert!(run_set_trials(&r, &h, &h[..1], ProbeKind::Anomaly, &[4], 5, 0).is_err());
    }

    #[test]
    fn recall_levels_nested() {
        let run = run_set_trials(&RandomScorer { seed: 1 }, &ids("h", 200), &ids("p", 20), ProbeKind::Anomaly, &[16, 64], 300, 2).unwrap();
        for r in &run.curve.recall {
            assert!(r[0] <= r[1] && r[1] <= r[2]);
        }
        let text = recall_table(std::slice::from_ref(&run.curve));
        assert_eq!(text.lines().count(), 1 + 6);
        let back = parse_recall_table(&text).unwrap();
        assert_eq!(back[0].sizes, run.curve.sizes);
        for (a, b) in back[0].recall.iter().flatten().zip(run.curve.recall.iter().flatten()) {
            assert!((a - b).abs() < 1e-6);
        }
        let recs = parse_trial_records(&trial_records_text(&run.records)).unwrap();
        assert_eq!(recs.len(), run.records.len());
        assert_eq!(recs[7].rank, run.records[7].rank);
    }

    #[test]
    fn deciles() {
        let i = ids("x", 10);
        let s: Vec<f64> = (0..10).rev().map(|v| v as f64).collect();
        let rep = decile_report(&i, &s, &[]).unwrap();
        let got: Vec<&str> = rep.deciles.iter().map(|(id, _)| id.as_str()).collect();
        assert_eq!(got, i.iter().rev().map(String::as_str).collect::<Vec<_>>());
        let flat = decile_report(&i, &[0.5; 10], &[]).unwrap();
        assert_eq!(flat.deciles[0].0, "x-00000");
        assert!(decile_report(&i[..9], &s[..9], &[]).is_err());
    }

    #[test]
    fn frequencies_in_unit_interval() {
        let h = ids("h", 64);
        let p = ids("p", 4);
        let run = run_set_trials(&RandomScorer { seed: 5 }, &h, &p, ProbeKind::Anomaly, &[16], 100, 4).unwrap();
        let rep = decile_report(&h[..10], &[0.0; 10], &run.records).unwrap();
        assert_eq!(rep.frequencies.iter().map(|f| f.appearances).sum::<usize>(), 100);
        assert!(rep.frequencies.iter().all(|f| f.found.iter().all(|v| (0.0..=1.0).contains(v))));
    }

    #[test]
    fn attribute_table_shape() {
        let mk = |off: f64, n: usize| -> Vec<Vec<f64>> { (0..n).map(|i| vec![off + (i % 7) as f64 * 0.1, (i % 5) as f64 * 0.2]).collect() };
        let data = vec![AttributeData { kind: FeatureKind::InpaintResidual, holdout: mk(0.0, 40), negatives: mk(0.0, 40), positives: mk(1.0, 40) }];
        let t = run_attribute_experiment(&data, &AttributeMethod::ALL, 7).unwrap();
        assert_eq!(t.rows.len(), 3);
        assert_eq!(t.get(AttributeMethod::Linf, FeatureKind::InpaintResidual).unwrap().auc, 1.0);
        let empty = vec![AttributeData { positives: vec![], ..data[0].clone() }];
        assert!(run_attribute_experiment(&empty, &AttributeMethod::ALL, 7).is_err());
    }
}
