//! The commands behind the `npae` binary, callable from tests.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use npae_core::autoencoder::{train_with_progress, TrainConfig};
use npae_core::dataset::{write_atomic, write_corpus, Manifest, ManifestRecord, Split};
use npae_core::experiments::{
    decile_report, parse_recall_table, parse_trial_records, recall_table, run_attribute_experiment, run_control, run_set_trials,
    trial_records_text, AttributeData, AttributeMethod, EquivariantScorer, ItemScorer, ProbeKind, RecallCurve, SetScorer,
};
use npae_core::features::{extract, FeatureTable};
use npae_core::masking::{grid_boxes, BoxSizeRange};
use npae_core::optim::AdamConfig;
use npae_core::scoring::{fit_lfdr, linf, robust_moments, robust_moments_full, EquivariantParams, LfdrModel, Method, RobustMoments, ScoreVector};
use npae_core::seeding::derive_seed;
use npae_core::synth::{CorpusRequest, SampleKind};
use npae_core::{Autoencoder, Checkpoint, Extents, FeatureKind};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const ATTRIBUTE_TAG: &str = "attribute-test";
pub const GLASSES: &str = "glasses";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    GenData,
    Train,
    Features,
    Score,
    EvalSets,
    EvalAttr,
    Report,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenData => "gen-data",
            Command::Train => "train",
            Command::Features => "features",
            Command::Score => "score",
            Command::EvalSets => "eval-sets",
            Command::EvalAttr => "eval-attr",
            Command::Report => "report",
        }
    }
}

/// File locations under the output root.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn data_dir(&self) -> PathBuf {
        self.root.join("data")
    }
    pub fn manifest(&self) -> PathBuf {
        self.data_dir().join("manifest.tsv")
    }
    pub fn checkpoint(&self) -> PathBuf {
        self.root.join("model/checkpoint.npae")
    }
    pub fn loss(&self) -> PathBuf {
        self.root.join("model/loss.tsv")
    }
    pub fn features(&self, kind: FeatureKind) -> PathBuf {
        self.root.join(format!("features/{}.csv", kind.as_str()))
    }
    pub fn scores(&self, kind: FeatureKind, name: &str) -> PathBuf {
        self.root.join(format!("scores/{}/{name}.tsv", kind.as_str()))
    }
    pub fn recall(&self) -> PathBuf {
        self.root.join("results/recall.tsv")
    }
    pub fn trials(&self, method: &str, probe: ProbeKind) -> PathBuf {
        self.root.join(format!("results/trials/{method}-{}.tsv", probe.as_str()))
    }
    pub fn attribute(&self) -> PathBuf {
        self.root.join("results/attribute.tsv")
    }
    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }
    pub fn provenance(&self, cmd: Command) -> PathBuf {
        self.root.join(format!("provenance/{}.toml", cmd.name()))
    }
}

pub struct Invocation {
    pub command: Command,
    pub config: RunConfig,
    pub out: PathBuf,
    /// Restrict `features` to one kind.
    pub feature_kind: Option<FeatureKind>,
}

/// Validate, run one command on a pool of `config.threads` workers, then
/// record provenance.
pub fn run(inv: &Invocation) -> CliResult<()> {
    inv.config.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = inv.config.threads.filter(|&n| n > 0) {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Config(format!("threads: {e}")))?;
    let layout = Layout { root: inv.out.clone() };
    let outputs = pool.install(|| match inv.command {
        Command::GenData => gen_data(&inv.config, &layout),
        Command::Train => train(&inv.config, &layout),
        Command::Features => features(&inv.config, &layout, inv.feature_kind),
        Command::Score => score(&inv.config, &layout),
        Command::EvalSets => eval_sets(&inv.config, &layout),
        Command::EvalAttr => eval_attr(&inv.config, &layout),
        Command::Report => report(&inv.config, &layout),
    })?;
    write_provenance(inv, &layout, pool.current_num_threads(), &outputs)
}

fn log(msg: impl AsRef<str>) {
    eprintln!("npae: {}", msg.as_ref());
}

fn require(path: PathBuf, producer: &'static str) -> CliResult<PathBuf> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(CliError::MissingArtifact { path, producer })
    }
}

fn write(path: &Path, text: &str) -> CliResult<PathBuf> {
    write_atomic(path, text.as_bytes())?;
    Ok(path.to_path_buf())
}

pub fn config_hash(cfg: &RunConfig) -> String {
    let digest = Sha256::digest(cfg.to_toml().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn write_provenance(inv: &Invocation, layout: &Layout, threads: usize, outputs: &[PathBuf]) -> CliResult<()> {
    let rel = |p: &PathBuf| p.strip_prefix(&layout.root).unwrap_or(p).display().to_string();
    let mut s = format!(
        "command = \"{}\"\nconfig_sha256 = \"{}\"\nseed = {}\nthreads = {threads}\nnpae_version = \"{}\"\ncheckpoint_format = {}\noutputs = [",
        inv.command.name(),
        config_hash(&inv.config),
        inv.config.seed,
        env!("CARGO_PKG_VERSION"),
        npae_core::autoencoder::checkpoint::FORMAT_VERSION,
    );
    s.push_str(&outputs.iter().map(|p| format!("\"{}\"", rel(p))).collect::<Vec<_>>().join(", "));
    s.push_str("]\n\n[config]\n");
    s.push_str(&inv.config.to_toml());
    write(&layout.provenance(inv.command), &s)?;
    Ok(())
}

fn gen_data(cfg: &RunConfig, layout: &Layout) -> CliResult<Vec<PathBuf>> {
    let d = &cfg.data;
    let extents = Extents::new(d.height, d.width, d.channels);
    let dir = layout.data_dir();
    let populations: [(&str, usize, SampleKind, bool, Split); 6] = [
        ("train", d.train, SampleKind::Typical, false, Split::Train),
        ("holdout", d.holdout, SampleKind::Typical, false, Split::Holdout),
        ("anomaly", d.anomalies, SampleKind::Anomaly, false, Split::Probe),
        ("control", d.controls, SampleKind::ControlTypical, false, Split::Probe),
        ("attr-neg", d.attribute_negatives, SampleKind::Typical, false, Split::Probe),
        ("attr-pos", d.attribute_positives, SampleKind::Typical, true, Split::Probe),
    ];
    let mut records: Vec<ManifestRecord> = Vec::new();
    for (name, count, kind, glasses, split) in populations {
        if count == 0 {
            continue;
        }
        let req = CorpusRequest { count, seed: derive_seed(cfg.seed, &format!("data/{name}")), kind, glasses, id_prefix: name.to_string(), extents };
        let mut recs = write_corpus(&dir, &req, split)?;
        if name.starts_with("attr-") {
            recs.iter_mut().for_each(|r| r.attributes.insert(0, ATTRIBUTE_TAG.to_string()));
        }
        log(format!("gen-data: {count} {name} images"));
        records.extend(recs);
    }
    let manifest = Manifest { records };
    manifest.validate()?;
    Ok(vec![write(&layout.manifest(), &manifest.to_text())?])
}

fn load_manifest(layout: &Layout) -> CliResult<Manifest> {
    Ok(Manifest::load(&require(layout.manifest(), "gen-data")?)?)
}

fn train(cfg: &RunConfig, layout: &Layout) -> CliResult<Vec<PathBuf>> {
    let manifest = load_manifest(layout)?;
    let recs = manifest.select(|r| r.split == Split::Train);
    if recs.is_empty() {
        return Err(CliError::EmptyResults("manifest has no training images".into()));
    }
    let images = Manifest::load_images(&layout.data_dir(), &recs)?;
    let tc = TrainConfig {
        epochs: cfg.train.epochs,
        batch_size: cfg.train.batch_size,
        seed: derive_seed(cfg.seed, "train"),
        adam: AdamConfig { step_size: cfg.train.step_size, ..AdamConfig::default() },
        box_sizes: cfg.train.box_min.zip(cfg.train.box_max).map(|(min, max)| BoxSizeRange { min, max }),
    };
    let ckpt = train_with_progress(&images, &cfg.arch(), &tc, |e, l| log(format!("train: epoch {e} loss {l:.6}")))?;
    ckpt.save(&layout.checkpoint())?;
    let mut loss = String::from("epoch\tloss\n");
    for (e, l) in ckpt.meta.loss_history.iter().enumerate() {
        loss.push_str(&format!("{e}\t{l:.8e}\n"));
    }
    Ok(vec![layout.checkpoint(), write(&layout.loss(), &loss)?])
}

fn features(cfg: &RunConfig, layout: &Layout, only: Option<FeatureKind>) -> CliResult<Vec<PathBuf>> {
    let manifest = load_manifest(layout)?;
    let ckpt = Checkpoint::load(&require(layout.checkpoint(), "train")?)?;
    let model: Autoencoder<f32> = Autoencoder::from_checkpoint(&ckpt)?;
    let grid = grid_boxes(cfg.grid_spec())?;
    let recs = manifest.select(|r| r.split != Split::Train);
    let images = Manifest::load_images(&layout.data_dir(), &recs)?;
    let ids: Vec<String> = recs.iter().map(|r| r.id.clone()).collect();
    let kinds: Vec<FeatureKind> = only.map_or_else(|| FeatureKind::ALL.to_vec(), |k| vec![k]);
    let mut out = Vec::new();
    for kind in kinds {
        let vectors = extract(&model, &images, kind, &grid)?;
        let table = FeatureTable::new(ids.clone(), vectors)?;
        out.push(write(&layout.features(kind), &table.to_text())?);
        log(format!("features: {} x {} {}", table.ids.len(), table.dim, kind.as_str()));
    }
    Ok(out)
}

fn load_features(layout: &Layout, kind: FeatureKind) -> CliResult<FeatureTable> {
    let path = require(layout.features(kind), "features")?;
    Ok(FeatureTable::parse(&fs::read_to_string(path)?)?)
}

/// Rows of `table` for `records`, in record order.
fn rows_for(table: &FeatureTable, records: &[&ManifestRecord]) -> CliResult<Vec<Vec<f64>>> {
    let index: HashMap<&str, usize> = table.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    records
        .iter()
        .map(|r| {
            index
                .get(r.id.as_str())
                .map(|&i| table.rows[i].clone())
                .ok_or_else(|| CliError::MissingArtifact { path: PathBuf::from(format!("features for {}", r.id)), producer: "features" })
        })
        .collect()
}

fn moments(cfg: &RunConfig, kind: FeatureKind, holdout: &[Vec<f64>]) -> CliResult<RobustMoments<f64>> {
    Ok(if kind.is_residual() {
        robust_moments(holdout, cfg.scoring.trim)?
    } else {
        robust_moments_full(holdout, cfg.scoring.trim, cfg.scoring.shrinkage)?
    })
}

fn linf_all(kind: FeatureKind, rows: &[Vec<f64>]) -> CliResult<Vec<f64>> {
    Ok(rows.iter().map(|r| linf(r, kind.is_residual())).collect::<npae_core::Result<Vec<_>>>()?)
}

/// Item scores for every method except the set-level one; `fit` supplies
/// the holdout rows the statistics are estimated on.
struct ItemModels {
    kind: FeatureKind,
    moments: RobustMoments<f64>,
    lfdr: Option<LfdrModel>,
    lfdr_log: Option<LfdrModel>,
}

impl ItemModels {
    fn fit(cfg: &RunConfig, kind: FeatureKind, holdout: &[Vec<f64>], methods: &[Method]) -> CliResult<Self> {
        let base = linf_all(kind, holdout)?;
        let lfdr = if methods.contains(&Method::Lfdr) { Some(fit_lfdr(&base, false)?) } else { None };
        let lfdr_log = if methods.contains(&Method::LfdrLog) { Some(fit_lfdr(&base, true)?) } else { None };
        Ok(Self { kind, moments: moments(cfg, kind, holdout)?, lfdr, lfdr_log })
    }

    fn scores(&self, method: Method, rows: &[Vec<f64>]) -> CliResult<Vec<f64>> {
        let base = || linf_all(self.kind, rows);
        Ok(match method {
            Method::Linf => base()?,
            Method::Mahalanobis => rows.iter().map(|r| self.moments.mahalanobis(r)).collect::<npae_core::Result<Vec<_>>>()?,
            Method::Lfdr => base()?.into_iter().map(|s| self.lfdr.as_ref().expect("fitted").score(s)).collect(),
            Method::LfdrLog => base()?.into_iter().map(|s| self.lfdr_log.as_ref().expect("fitted").score(s)).collect(),
            Method::EquivariantLinf => unreachable!("set-level method"),
        })
    }
}

fn score(cfg: &RunConfig, layout: &Layout) -> CliResult<Vec<PathBuf>> {
    let kind = cfg.feature_kind()?;
    let table = load_features(layout, kind)?;
    let manifest = load_manifest(layout)?;
    let holdout = rows_for(&table, &manifest.select(|r| r.split == Split::Holdout))?;
    let methods = cfg.methods()?;
    let models = ItemModels::fit(cfg, kind, &holdout, &methods)?;
    let mut out = Vec::new();
    for &method in &methods {
        let scores = if method == Method::EquivariantLinf {
            let params = EquivariantParams::from_moments(&models.moments, table.rows.len())?;
            params.apply(&table.rows)?.iter().map(|r| linf(r, false)).collect::<npae_core::Result<Vec<_>>>()?
        } else {
            models.scores(method, &table.rows)?
        };
        let sv = ScoreVector::new(method.as_str(), table.ids.clone(), scores)?;
        out.push(write(&layout.scores(kind, method.as_str()), &sv.to_text())?);
    }
    for (name, m) in [("lfdr-model", &models.lfdr), ("lfdr-log-model", &models.lfdr_log)] {
        if let Some(m) = m {
            out.push(write(&layout.scores(kind, name), &m.to_text())?);
        }
    }
    log(format!("score: {} methods over {} images", methods.len(), table.ids.len()));
    Ok(out)
}

struct Pools {
    holdout_ids: Vec<String>,
    anomaly_ids: Vec<String>,
    control_ids: Vec<String>,
    holdout: Vec<Vec<f64>>,
    anomalies: Vec<Vec<f64>>,
    controls: Vec<Vec<f64>>,
}

fn pools(manifest: &Manifest, table: &FeatureTable) -> CliResult<Pools> {
    let h = manifest.select(|r| r.split == Split::Holdout);
    let a = manifest.select(|r| r.kind == SampleKind::Anomaly);
    let c = manifest.select(|r| r.kind == SampleKind::ControlTypical);
    let ids = |v: &[&ManifestRecord]| v.iter().map(|r| r.id.clone()).collect::<Vec<_>>();
    Ok(Pools {
        holdout_ids: ids(&h),
        anomaly_ids: ids(&a),
        control_ids: ids(&c),
        holdout: rows_for(table, &h)?,
        anomalies: rows_for(table, &a)?,
        controls: rows_for(table, &c)?,
    })
}

fn eval_sets(cfg: &RunConfig, layout: &Layout) -> CliResult<Vec<PathBuf>> {
    let kind = cfg.feature_kind()?;
    let table = load_features(layout, kind)?;
    let manifest = load_manifest(layout)?;
    let p = pools(&manifest, &table)?;
    let methods = cfg.methods()?;
    let models = ItemModels::fit(cfg, kind, &p.holdout, &methods)?;
    let seed = derive_seed(cfg.seed, "eval-sets");
    let (sizes, trials) = (&cfg.experiment.set_sizes, cfg.experiment.trials);
    let mut curves: Vec<RecallCurve> = Vec::new();
    let mut out = Vec::new();
    for &method in &methods {
        for (probe, probe_ids, probe_rows) in
            [(ProbeKind::Anomaly, &p.anomaly_ids, &p.anomalies), (ProbeKind::ControlTypical, &p.control_ids, &p.controls)]
        {
            let scorer: Box<dyn SetScorer> = if method == Method::EquivariantLinf {
                Box::new(EquivariantScorer::new(method.as_str(), &models.moments, p.holdout.clone(), probe_rows.clone())?)
            } else {
                Box::new(ItemScorer {
                    name: method.as_str().to_string(),
                    holdout: models.scores(method, &p.holdout)?,
                    probes: models.scores(method, probe_rows)?,
                })
            };
            let run = match probe {
                ProbeKind::Anomaly => run_set_trials(scorer.as_ref(), &p.holdout_ids, probe_ids, probe, sizes, trials, seed)?,
                ProbeKind::ControlTypical => run_control(scorer.as_ref(), &p.holdout_ids, probe_ids, sizes, trials, seed)?,
            };
            out.push(write(&layout.trials(method.as_str(), probe), &trial_records_text(&run.records))?);
            let r1: Vec<String> = run.curve.recall.iter().map(|r| format!("{:.3}", r[0])).collect();
            log(format!("eval-sets: {method} {} recall@1 {}", probe.as_str(), r1.join(" ")));
            curves.push(run.curve);
        }
    }
    out.push(write(&layout.recall(), &recall_table(&curves))?);
    Ok(out)
}

fn eval_attr(cfg: &RunConfig, layout: &Layout) -> CliResult<Vec<PathBuf>> {
    let manifest = load_manifest(layout)?;
    let neg = manifest.select(|r| r.has_attribute(ATTRIBUTE_TAG) && !r.has_attribute(GLASSES));
    let pos = manifest.select(|r| r.has_attribute(ATTRIBUTE_TAG) && r.has_attribute(GLASSES));
    if neg.is_empty() || pos.is_empty() {
        return Err(CliError::Core(npae_core::Error::RejectedInput("manifest has no attribute-labeled test images".into())));
    }
    let holdout = manifest.select(|r| r.split == Split::Holdout);
    let mut data = Vec::new();
    for kind in FeatureKind::ALL {
        let table = load_features(layout, kind)?;
        data.push(AttributeData { kind, holdout: rows_for(&table, &holdout)?, negatives: rows_for(&table, &neg)?, positives: rows_for(&table, &pos)? });
    }
    let result = run_attribute_experiment(&data, &AttributeMethod::ALL, derive_seed(cfg.seed, "eval-attr"))?;
    for r in &result.rows {
        log(format!("eval-attr: {} {} auc {:.3}", r.method, r.kind.as_str(), r.report.auc));
    }
    Ok(vec![write(&layout.attribute(), &result.to_text())?])
}

fn report(cfg: &RunConfig, layout: &Layout) -> CliResult<Vec<PathBuf>> {
    let path = require(layout.recall(), "eval-sets")?;
    let curves = parse_recall_table(&fs::read_to_string(path)?)?;
    if curves.is_empty() {
        return Err(CliError::EmptyResults("recall table has no rows".into()));
    }
    let dir = layout.report_dir();
    let mut out = Vec::new();
    let mut methods: Vec<&str> = curves.iter().map(|c| c.method.as_str()).collect();
    methods.dedup();
    for method in methods {
        let mine: Vec<&RecallCurve> = curves.iter().filter(|c| c.method == method).collect();
        let mut s = String::from("set_size");
        for c in &mine {
            for level in npae_core::experiments::RECALL_LEVELS {
                s.push_str(&format!("\t{}@{level}", c.probe_kind.as_str()));
            }
        }
        s.push('\n');
        for (i, size) in mine[0].sizes.iter().enumerate() {
            s.push_str(&size.to_string());
            for c in &mine {
                for v in c.recall.get(i).into_iter().flatten() {
                    s.push_str(&format!("\t{v:.6}"));
                }
            }
            s.push('\n');
        }
        out.push(write(&dir.join(format!("recall-{method}.tsv")), &s)?);
    }

    // Decile montage over the anomaly pool, ordered by the L-infinity score.
    let kind = cfg.feature_kind()?;
    let table = load_features(layout, kind)?;
    let manifest = load_manifest(layout)?;
    let anomalies = manifest.select(|r| r.kind == SampleKind::Anomaly);
    let rows = rows_for(&table, &anomalies)?;
    let ids: Vec<String> = anomalies.iter().map(|r| r.id.clone()).collect();
    let trials_path = layout.trials(Method::Linf.as_str(), ProbeKind::Anomaly);
    let records = if trials_path.is_file() { parse_trial_records(&fs::read_to_string(trials_path)?)? } else { Vec::new() };
    let deciles = decile_report(&ids, &linf_all(kind, &rows)?, &records)?;
    let paths: HashMap<&str, String> =
        anomalies.iter().map(|r| (r.id.as_str(), Path::new("data").join(&r.path).display().to_string())).collect();
    let text = deciles.to_text(|id| paths.get(id).cloned().unwrap_or_default());
    out.push(write(&dir.join("deciles.tsv"), &text)?);
    Ok(out)
}
