//! Experiment orchestration: the seven-method comparison roster,
//! multi-trial runs with mean and t-based 95% confidence intervals, and
//! every file format the command-line tool reads or writes.
//!
//! Trial seeds are `base_seed + trial_index` so any single trial can be
//! reproduced in isolation. Result files are rewritten atomically after
//! each trial; a diverged trial aborts the run but leaves the completed
//! rows on disk.

use std::env;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data::{
    gen_synthetic, parse_svmlight_path, Dataset, PreparedDataset, SyntheticSpec,
};
use crate::error::{Error, Result};
use crate::loss::{compat_probe, DistillConfig, DistillKind, ProbeReport};
use crate::metrics::{evaluate, ListScores, MetricsReport, UserAssignment};
use crate::model::{ModelBundle, ModelConfig, ModelKind};
use crate::net::RankerParams;
use crate::train::{
    evaluate_params, init_teacher, train_student, train_teacher, train_two_tower, DataSplits,
    Protocol, TrainConfig, TrainLog, ECE_BINS, METRIC_K,
};

/// Environment variable naming the root directory that relative output
/// paths are resolved against.
pub const OUT_ROOT_ENV: &str = "CLID_OUT_ROOT";

/// Ratio grid used by the sweep when none is given.
pub const DEFAULT_RATIO_GRID: [f64; 8] =
    [0.001, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0, 10000.0];

/// Query-split fractions used everywhere: 60% train, 20% validation,
/// 20% test.
pub const SPLIT_FRACTIONS: (f64, f64) = (0.6, 0.2);

/// One comparison-table row: a serving model and how it is trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Method {
    /// Own features only, label loss only.
    #[serde(rename = "base")]
    Base,
    /// Base plus a shallow context tower with dropout on its logit.
    #[serde(rename = "pridropout")]
    PriDropout,
    /// Base times a shallow context tower's probability at training time.
    #[serde(rename = "pal")]
    Pal,
    /// Distillation from a context teacher with the pointwise loss.
    #[serde(rename = "base+pointwise")]
    BasePointwise,
    /// Distillation with the permutation-likelihood listwise loss.
    #[serde(rename = "base+listmle")]
    BaseListMle,
    /// Distillation with the top-one softmax listwise loss.
    #[serde(rename = "base+listnet")]
    BaseListNet,
    /// Distillation with the calibration-compatible listwise loss.
    #[serde(rename = "clid")]
    Clid,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Base,
        Method::PriDropout,
        Method::Pal,
        Method::BasePointwise,
        Method::BaseListMle,
        Method::BaseListNet,
        Method::Clid,
    ];

    /// The distillation loss this method trains with, if any.
    pub fn distill_kind(self) -> Option<DistillKind> {
        match self {
            Method::Base | Method::PriDropout | Method::Pal => None,
            Method::BasePointwise => Some(DistillKind::Pointwise),
            Method::BaseListMle => Some(DistillKind::ListMle),
            Method::BaseListNet => Some(DistillKind::ListNet),
            Method::Clid => Some(DistillKind::Clid),
        }
    }

    /// Default distillation mix per method. Pointwise distillation wants a
    /// much stronger distillation term than the listwise losses; these are
    /// the crate's tuned desk-scale defaults, overridable per run.
    pub fn default_distill(self) -> Option<DistillConfig> {
        self.distill_kind().map(|kind| {
            let ratio = match kind {
                DistillKind::Pointwise => 10.0,
                _ => 1.0,
            };
            DistillConfig::from_weight_ratio(kind, ratio, 1.0).expect("valid default")
        })
    }

    /// Kind tag recorded in the saved serving bundle.
    pub fn model_kind(self) -> ModelKind {
        match self {
            Method::Base => ModelKind::Base,
            Method::PriDropout => ModelKind::PriDropout,
            Method::Pal => ModelKind::Pal,
            _ => ModelKind::Student,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Base => "base",
            Method::PriDropout => "pridropout",
            Method::Pal => "pal",
            Method::BasePointwise => "base+pointwise",
            Method::BaseListMle => "base+listmle",
            Method::BaseListNet => "base+listnet",
            Method::Clid => "clid",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "base" => Ok(Method::Base),
            "pridropout" => Ok(Method::PriDropout),
            "pal" => Ok(Method::Pal),
            "base+pointwise" => Ok(Method::BasePointwise),
            "base+listmle" => Ok(Method::BaseListMle),
            "base+listnet" => Ok(Method::BaseListNet),
            "clid" => Ok(Method::Clid),
            other => Err(Error::InvalidConfig(format!(
                "unknown method {other:?} (expected base|pridropout|pal|base+pointwise|base+listmle|base+listnet|clid)"
            ))),
        }
    }
}

fn default_true() -> bool {
    true
}

/// Where the experiment's data comes from.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    /// Generate data in memory from a synthetic spec.
    Synthetic {
        #[serde(flatten)]
        spec: SyntheticSpec,
    },
    /// Read pre-split files in the qid-annotated sparse text format.
    /// Explicit per-split paths override the conventional names under
    /// `dir` (train.svmlight, valid.svmlight, test.svmlight).
    Files {
        #[serde(default)]
        dir: Option<PathBuf>,
        #[serde(default)]
        train: Option<PathBuf>,
        #[serde(default)]
        valid: Option<PathBuf>,
        #[serde(default)]
        test: Option<PathBuf>,
        /// Apply the signed log transform to raw features.
        #[serde(default = "default_true")]
        transform: bool,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic { spec: SyntheticSpec::default() }
    }
}

/// Conventional split file names written by generation and read back by
/// the files source.
pub const SPLIT_FILE_NAMES: [&str; 3] = ["train.svmlight", "valid.svmlight", "test.svmlight"];
/// Conventional name of the generation metadata sidecar.
pub const SIDECAR_FILE_NAME: &str = "spec.txt";

impl DataSource {
    fn split_path(dir: &Option<PathBuf>, explicit: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
        match (explicit, dir) {
            (Some(p), _) => Ok(p.clone()),
            (None, Some(d)) => Ok(d.join(name)),
            (None, None) => Err(Error::InvalidConfig(format!(
                "files source needs either dir or an explicit {name} path"
            ))),
        }
    }

    /// Load, split, and prepare the three datasets.
    pub fn load(&self) -> Result<DataSplits> {
        match self {
            DataSource::Synthetic { spec } => {
                let data = gen_synthetic(spec)?;
                let (train, valid, test) =
                    data.dataset.split_three(SPLIT_FRACTIONS.0, SPLIT_FRACTIONS.1)?;
                Ok(DataSplits {
                    train: PreparedDataset::prepare(&train, true),
                    valid: PreparedDataset::prepare(&valid, true),
                    test: PreparedDataset::prepare(&test, true),
                })
            }
            DataSource::Files { dir, train, valid, test, transform } => {
                let mut prepared = Vec::with_capacity(3);
                for (explicit, name) in
                    [(train, SPLIT_FILE_NAMES[0]), (valid, SPLIT_FILE_NAMES[1]), (test, SPLIT_FILE_NAMES[2])]
                {
                    let path = Self::split_path(dir, explicit, name)?;
                    let samples = parse_svmlight_path(&path)?;
                    let ds = Dataset::from_samples(samples);
                    prepared.push(PreparedDataset::prepare(&ds, *transform));
                }
                let mut it = prepared.into_iter();
                Ok(DataSplits {
                    train: it.next().unwrap(),
                    valid: it.next().unwrap(),
                    test: it.next().unwrap(),
                })
            }
        }
    }
}

fn default_trials() -> usize {
    5
}

/// A complete description of one multi-trial training run, loadable from a
/// hierarchical config file with every field overridable by flags.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ExperimentSpec {
    pub method: Method,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Directory for result files; None keeps results in memory only.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub data: DataSource,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default = "unset_train")]
    pub train: TrainConfig,
}

/// `TrainConfig::default()` is normalized (epochs filled in); specs keep the
/// budget unset instead so a later protocol choice resolves it.
fn unset_train() -> TrainConfig {
    TrainConfig { epochs: 0, ..TrainConfig::default() }
}

impl ExperimentSpec {
    pub fn new(method: Method) -> Self {
        ExperimentSpec {
            method,
            trials: default_trials(),
            out_dir: None,
            data: DataSource::default(),
            model: ModelConfig::default(),
            train: unset_train(),
        }
    }

    /// Parse a config file. An unset epoch count stays unset here and
    /// resolves to the protocol default in [`Self::resolved_train`], so
    /// later protocol overrides pick the right budget.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(format!("bad experiment config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    /// The train config with the method's distillation defaults filled in.
    /// An explicit distill section must agree with the method's loss; the
    /// non-distilling methods reject one outright.
    pub fn resolved_train(&self) -> Result<TrainConfig> {
        let mut cfg = self.train.clone().normalized();
        match (self.method.distill_kind(), &cfg.distill) {
            (None, Some(_)) => {
                return Err(Error::InvalidConfig(format!(
                    "method {} does not take a distillation loss",
                    self.method
                )))
            }
            (None, None) => {}
            (Some(kind), Some(d)) => {
                if d.kind != kind {
                    return Err(Error::InvalidConfig(format!(
                        "method {} distills with {kind}, config says {}",
                        self.method, d.kind
                    )));
                }
            }
            (Some(_), None) => cfg.distill = self.method.default_distill(),
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be >= 1".into()));
        }
        self.model.validate()?;
        self.resolved_train()?;
        if let DataSource::Synthetic { spec } = &self.data {
            spec.validate()?;
        }
        Ok(())
    }
}

/// Resolve a possibly relative output path against the output-root
/// environment variable.
pub fn resolve_out_dir(dir: &Path) -> PathBuf {
    if dir.is_absolute() {
        return dir.to_path_buf();
    }
    match env::var_os(OUT_ROOT_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(dir),
        _ => dir.to_path_buf(),
    }
}

/// Write a file atomically: the content lands under a temporary name in
/// the destination directory and is renamed into place.
pub fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(d) = dir {
        fs::create_dir_all(d)?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidConfig(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, content)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Everything produced by training one method once.
pub struct MethodOutcome {
    /// The serving model, tagged with its method kind.
    pub bundle: ModelBundle,
    /// The teacher that produced the distillation targets, if any.
    pub teacher: Option<RankerParams>,
    pub log: TrainLog,
    /// Serve-mode metrics on the test split.
    pub report: MetricsReport,
}

/// Train one method end to end on prepared splits and evaluate it on the
/// test split. Distilling methods run the configured protocol: teacher
/// first (train, freeze, distill) or simultaneous (joint updates from a
/// fresh teacher).
pub fn run_method(
    splits: &DataSplits,
    model: &ModelConfig,
    cfg: &TrainConfig,
    method: Method,
) -> Result<MethodOutcome> {
    let (bundle, teacher, log) = match method {
        Method::Base => {
            let out = train_student(splits, model, cfg, None)?;
            (ModelBundle::new(ModelKind::Base, out.student, None)?, None, out.log)
        }
        Method::Pal | Method::PriDropout => {
            let (bundle, log) = train_two_tower(splits, model, cfg, method.model_kind())?;
            (bundle, None, log)
        }
        _ => {
            if cfg.distill.is_none() {
                return Err(Error::InvalidConfig(format!(
                    "method {method} needs a distillation loss configured"
                )));
            }
            match cfg.protocol {
                Protocol::TeacherFirst => {
                    let (teacher, _teacher_log) = train_teacher(splits, model, cfg)?;
                    let out = train_student(splits, model, cfg, Some(&teacher))?;
                    (
                        ModelBundle::new(ModelKind::Student, out.student, None)?,
                        Some(teacher),
                        out.log,
                    )
                }
                Protocol::Simultaneous => {
                    let start = init_teacher(model, splits, cfg.seed)?;
                    let out = train_student(splits, model, cfg, Some(&start))?;
                    let teacher = out.teacher.expect("simultaneous returns the teacher");
                    (
                        ModelBundle::new(ModelKind::Student, out.student, None)?,
                        Some(teacher),
                        out.log,
                    )
                }
            }
        }
    };
    let report = evaluate_params(&bundle.main, &splits.test, bundle.kind.serves_on_combined())?;
    Ok(MethodOutcome { bundle, teacher, log, report })
}

/// Test-split metrics of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub report: MetricsReport,
}

/// Mean and 95% confidence half-width of one metric across trials. The
/// half-width is Student-t based: t(0.975, trials-1) * sd / sqrt(trials),
/// and absent for a single trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricStat {
    pub mean: f64,
    pub ci95: Option<f64>,
}

fn metric_stat(values: &[f64]) -> MetricStat {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return MetricStat { mean, ci95: None };
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("valid t distribution")
        .inverse_cdf(0.975);
    MetricStat { mean, ci95: Some(t * (var.sqrt() / (n as f64).sqrt())) }
}

/// Cross-trial aggregate of the four metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub trials: usize,
    pub ndcg10: MetricStat,
    pub logloss: MetricStat,
    pub ece: MetricStat,
    /// Absent when any trial lacked user groups.
    pub gauc: Option<MetricStat>,
}

pub fn aggregate(trials: &[TrialResult]) -> Result<Aggregate> {
    if trials.is_empty() {
        return Err(Error::Data("no trials to aggregate".into()));
    }
    let col = |f: fn(&MetricsReport) -> f64| -> Vec<f64> {
        trials.iter().map(|t| f(&t.report)).collect()
    };
    let gauc: Option<Vec<f64>> = trials.iter().map(|t| t.report.gauc).collect();
    Ok(Aggregate {
        trials: trials.len(),
        ndcg10: metric_stat(&col(|r| r.ndcg_at_k)),
        logloss: metric_stat(&col(|r| r.logloss)),
        ece: metric_stat(&col(|r| r.ece)),
        gauc: gauc.map(|v| metric_stat(&v)),
    })
}

/// Header of the per-trial results file: trial bookkeeping plus one full
/// metrics row.
pub const TRIALS_CSV_HEADER: &str = "trial,seed,k,ndcg_at_k,logloss,ece,gauc,queries,samples,users";

pub fn trials_to_csv(trials: &[TrialResult]) -> String {
    let mut out = String::from(TRIALS_CSV_HEADER);
    out.push('\n');
    for t in trials {
        out.push_str(&format!("{},{},{}\n", t.trial, t.seed, t.report.to_csv_row()));
    }
    out
}

pub fn parse_trials_csv(text: &str) -> Result<Vec<TrialResult>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == TRIALS_CSV_HEADER => {}
        other => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header {TRIALS_CSV_HEADER:?}, got {other:?}"),
            })
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse { line: i + 2, message };
        let mut parts = line.splitn(3, ',');
        let trial = parts
            .next()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| err("bad trial index".into()))?;
        let seed = parts
            .next()
            .and_then(|s| s.parse::<u64>().ok())
            .ok_or_else(|| err("bad seed".into()))?;
        let rest = parts.next().ok_or_else(|| err("missing metrics columns".into()))?;
        let report = MetricsReport::from_csv_row(rest).map_err(|e| err(e.to_string()))?;
        out.push(TrialResult { trial, seed, report });
    }
    Ok(out)
}

/// Header of the aggregate file. ci95 is the Student-t half-width,
/// t(0.975, trials-1) * sd / sqrt(trials); empty for one trial or for a
/// metric with no data.
pub const AGGREGATE_CSV_HEADER: &str = "metric,trials,mean,ci95_t_halfwidth";

pub fn aggregate_to_csv(agg: &Aggregate) -> String {
    let mut out = String::from(AGGREGATE_CSV_HEADER);
    out.push('\n');
    let mut push = |name: &str, stat: &MetricStat| {
        let ci = stat.ci95.map(|c| c.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{},{}\n", name, agg.trials, stat.mean, ci));
    };
    push("ndcg10", &agg.ndcg10);
    push("logloss", &agg.logloss);
    push("ece", &agg.ece);
    if let Some(g) = &agg.gauc {
        push("gauc", g);
    }
    out
}

pub fn parse_aggregate_csv(text: &str) -> Result<Aggregate> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == AGGREGATE_CSV_HEADER => {}
        other => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header {AGGREGATE_CSV_HEADER:?}, got {other:?}"),
            })
        }
    }
    let mut trials = None;
    let mut stats: Vec<(String, MetricStat)> = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse { line: i + 2, message };
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(err(format!("expected 4 columns, got {}", parts.len())));
        }
        let n: usize = parts[1].parse().map_err(|_| err("bad trial count".into()))?;
        if *trials.get_or_insert(n) != n {
            return Err(err("inconsistent trial counts".into()));
        }
        let mean: f64 = parts[2].parse().map_err(|_| err("bad mean".into()))?;
        let ci95 = if parts[3].is_empty() {
            None
        } else {
            Some(parts[3].parse::<f64>().map_err(|_| err("bad ci95".into()))?)
        };
        stats.push((parts[0].to_string(), MetricStat { mean, ci95 }));
    }
    let trials = trials.ok_or_else(|| Error::Data("empty aggregate file".into()))?;
    let take = |name: &str| -> Result<MetricStat> {
        stats
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, s)| *s)
            .ok_or_else(|| Error::Data(format!("aggregate file lacks metric {name}")))
    };
    Ok(Aggregate {
        trials,
        ndcg10: take("ndcg10")?,
        logloss: take("logloss")?,
        ece: take("ece")?,
        gauc: stats.iter().find(|(n, _)| n == "gauc").map(|(_, s)| *s),
    })
}

/// All results of one multi-trial run.
pub struct RunSummary {
    pub method: Method,
    pub trials: Vec<TrialResult>,
    pub aggregate: Aggregate,
    /// Resolved directory the result files were written to, if any.
    pub out_dir: Option<PathBuf>,
}

/// Run `spec.trials` independently seeded trainings of `spec.method` and
/// aggregate their test metrics. With an output directory set, writes
/// trials.csv (after every trial), aggregate.csv, the final trial's
/// train_log.csv, and its serving model under model/ (plus the teacher
/// under teacher/ for distilling methods).
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunSummary> {
    spec.validate()?;
    let cfg = spec.resolved_train()?;
    let splits = spec.data.load()?;
    let out_dir = spec.out_dir.as_deref().map(resolve_out_dir);

    let mut trials = Vec::with_capacity(spec.trials);
    let mut last: Option<MethodOutcome> = None;
    for trial in 0..spec.trials {
        let mut cfg_t = cfg.clone();
        cfg_t.seed = cfg.seed.wrapping_add(trial as u64);
        let outcome = run_method(&splits, &spec.model, &cfg_t, spec.method)?;
        trials.push(TrialResult { trial, seed: cfg_t.seed, report: outcome.report.clone() });
        if let Some(dir) = &out_dir {
            write_atomic(&dir.join("trials.csv"), &trials_to_csv(&trials))?;
        }
        last = Some(outcome);
    }
    let agg = aggregate(&trials)?;
    if let Some(dir) = &out_dir {
        write_atomic(&dir.join("aggregate.csv"), &aggregate_to_csv(&agg))?;
        let last = last.as_ref().expect("at least one trial");
        write_atomic(&dir.join("train_log.csv"), &last.log.to_csv())?;
        last.bundle.save(&dir.join("model"))?;
        if let Some(teacher) = &last.teacher {
            ModelBundle::new(ModelKind::Teacher, teacher.clone(), None)?.save(&dir.join("teacher"))?;
        }
    }
    Ok(RunSummary { method: spec.method, trials, aggregate: agg, out_dir })
}

/// Compatibility probe over every distillation loss, in roster order.
pub fn probe_all(n_min: usize, n_max: usize, trials: usize, seed: u64) -> Result<Vec<ProbeReport>> {
    DistillKind::ALL
        .iter()
        .map(|&k| compat_probe(k, n_min, n_max, trials, seed))
        .collect()
}

/// Fixed-width text table of probe results: the gradient norm at the
/// label-loss optimum, and the fraction of instances where doubling the
/// logits strictly reduced the loss.
pub fn render_probe_table(reports: &[ProbeReport]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<10} {:>8} {:>20} {:>22}\n",
        "loss", "trials", "max_grad_inf_norm", "scale_descent_fraction"
    ));
    for r in reports {
        let descent = r
            .scale_descent_fraction
            .map(|f| format!("{f:.4}"))
            .unwrap_or_else(|| "-".into());
        out.push_str(&format!(
            "{:<10} {:>8} {:>20.3e} {:>22}\n",
            r.kind.to_string(),
            r.trials,
            r.max_grad_inf_norm,
            descent
        ));
    }
    out
}

/// Header of the sweep file; the columns are the sweep's two quality axes,
/// both higher-is-better.
pub const SWEEP_CSV_HEADER: &str = "ratio,ndcg10,neg_logloss";

/// One row of the sweep file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub ratio: f64,
    pub ndcg10: f64,
    pub neg_logloss: f64,
}

pub fn sweep_rows(results: &[(f64, MetricsReport)]) -> Vec<SweepRow> {
    results
        .iter()
        .map(|(ratio, r)| SweepRow { ratio: *ratio, ndcg10: r.ndcg_at_k, neg_logloss: -r.logloss })
        .collect()
}

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.ratio, r.ndcg10, r.neg_logloss));
    }
    out
}

pub fn parse_sweep_csv(text: &str) -> Result<Vec<SweepRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == SWEEP_CSV_HEADER => {}
        other => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header {SWEEP_CSV_HEADER:?}, got {other:?}"),
            })
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse { line: i + 2, message };
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(err(format!("expected 3 columns, got {}", parts.len())));
        }
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.parse().map_err(|_| err(format!("bad {what}: {s:?}")))
        };
        out.push(SweepRow {
            ratio: parse(parts[0], "ratio")?,
            ndcg10: parse(parts[1], "ndcg10")?,
            neg_logloss: parse(parts[2], "neg_logloss")?,
        });
    }
    Ok(out)
}

/// Score a predictions file: a CSV of `qid,label,prediction` or
/// `qid,user_id,label,prediction` (header required). Rows group into lists
/// by qid in first-appearance order; with a user_id column GAUC groups by
/// it, otherwise each query counts as one user.
pub fn eval_predictions_csv(text: &str) -> Result<MetricsReport> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Data("empty predictions file".into()))?;
    let with_users = match header.trim() {
        "qid,label,prediction" => false,
        "qid,user_id,label,prediction" => true,
        other => {
            return Err(Error::Parse {
                line: 1,
                message: format!(
                    "expected header qid,label,prediction or qid,user_id,label,prediction, got {other:?}"
                ),
            })
        }
    };
    let mut order: Vec<u64> = Vec::new();
    let mut by_qid: std::collections::HashMap<u64, (Vec<f64>, Vec<f64>, Vec<u64>)> =
        std::collections::HashMap::new();
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse { line: i + 1, message };
        let parts: Vec<&str> = line.split(',').collect();
        let expect = if with_users { 4 } else { 3 };
        if parts.len() != expect {
            return Err(err(format!("expected {expect} columns, got {}", parts.len())));
        }
        let qid: u64 = parts[0].parse().map_err(|_| err(format!("bad qid {:?}", parts[0])))?;
        let user: u64 = if with_users {
            parts[1].parse().map_err(|_| err(format!("bad user_id {:?}", parts[1])))?
        } else {
            qid
        };
        let label: f64 = parts[expect - 2]
            .parse()
            .map_err(|_| err(format!("bad label {:?}", parts[expect - 2])))?;
        let pred: f64 = parts[expect - 1]
            .parse()
            .map_err(|_| err(format!("bad prediction {:?}", parts[expect - 1])))?;
        if !by_qid.contains_key(&qid) {
            order.push(qid);
        }
        let entry = by_qid.entry(qid).or_default();
        entry.0.push(pred);
        entry.1.push(label);
        entry.2.push(user);
    }
    if order.is_empty() {
        return Err(Error::Data("predictions file has no rows".into()));
    }
    let mut lists = Vec::with_capacity(order.len());
    let mut users = Vec::new();
    for qid in &order {
        let (preds, labels, us) = by_qid.remove(qid).unwrap();
        users.extend_from_slice(&us);
        lists.push(ListScores { qid: *qid, predictions: preds, labels });
    }
    let assignment = if with_users {
        UserAssignment::PerSample(&users)
    } else {
        UserAssignment::QueryAsUser
    };
    evaluate(&lists, METRIC_K, ECE_BINS, assignment)
}

pub fn eval_predictions_path(path: &Path) -> Result<MetricsReport> {
    eval_predictions_csv(&fs::read_to_string(path)?)
}

/// Column layout for a predictions file produced from a trained bundle,
/// consumable by [`eval_predictions_csv`].
pub fn predictions_to_csv(splits: &PreparedDataset, bundle: &ModelBundle) -> Result<String> {
    let mut out = String::from("qid,label,prediction\n");
    for list in &splits.lists {
        let probs = bundle.serve_probs(list.reps.own.view(), list.reps.combined.view())?;
        for (&y, p) in list.labels.iter().zip(probs.iter()) {
            out.push_str(&format!("{},{},{}\n", list.qid, y, p));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::Protocol;
    use tempfile::tempdir;

    fn tiny_spec(method: Method) -> ExperimentSpec {
        let mut spec = ExperimentSpec::new(method);
        spec.trials = 2;
        spec.data = DataSource::Synthetic {
            spec: SyntheticSpec {
                num_queries: 20,
                docs_min: 3,
                docs_max: 6,
                feat_dim: 4,
                context_strength: 1.5,
                seed: 11,
            },
        };
        spec.model = ModelConfig { hidden_dims: vec![8], shallow_hidden: 4, shallow_dropout: 0.5 };
        spec.train = TrainConfig { epochs: 2, eval_every: 2, lr: 0.3, ..TrainConfig::default() };
        spec
    }

    #[test]
    fn method_strings_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert!("teacher".parse::<Method>().is_err());
    }

    #[test]
    fn method_distill_defaults() {
        assert!(Method::Base.default_distill().is_none());
        assert!(Method::Pal.default_distill().is_none());
        let pw = Method::BasePointwise.default_distill().unwrap();
        assert_eq!(pw.kind, DistillKind::Pointwise);
        assert_relative_eq(pw.weight_ratio(), 10.0);
        let clid = Method::Clid.default_distill().unwrap();
        assert_eq!(clid.kind, DistillKind::Clid);
        assert_relative_eq(clid.weight_ratio(), 1.0);
    }

    fn assert_relative_eq(a: f64, b: f64) {
        assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "{a} vs {b}");
    }

    #[test]
    fn spec_toml_round_trip_and_defaults() {
        let text = r#"
method = "clid"
out_dir = "runs/clid"

[data]
source = "synthetic"
num_queries = 40
seed = 3

[model]
hidden_dims = [16, 8]

[train]
epochs = 5
lr = 0.2
"#;
        let spec = ExperimentSpec::from_toml_str(text).unwrap();
        assert_eq!(spec.method, Method::Clid);
        assert_eq!(spec.trials, 5, "trials defaults");
        assert_eq!(spec.train.epochs, 5);
        assert_eq!(spec.train.protocol, Protocol::TeacherFirst);
        match &spec.data {
            DataSource::Synthetic { spec: s } => {
                assert_eq!(s.num_queries, 40);
                assert_eq!(s.seed, 3);
                assert_eq!(s.docs_min, SyntheticSpec::default().docs_min);
            }
            other => panic!("wrong source {other:?}"),
        }
        let cfg = spec.resolved_train().unwrap();
        assert_eq!(cfg.distill.unwrap().kind, DistillKind::Clid);

        let omitted = ExperimentSpec::from_toml_str("method = \"base\"").unwrap();
        assert_eq!(omitted.train.epochs, 0, "unset until resolution");
        assert_eq!(omitted.resolved_train().unwrap().epochs, 100, "protocol default fills in");
        assert!(matches!(omitted.data, DataSource::Synthetic { .. }));
    }

    #[test]
    fn resolved_train_enforces_method_loss_agreement() {
        let mut spec = tiny_spec(Method::Base);
        spec.train.distill =
            Some(DistillConfig::new(DistillKind::Clid, 0.5, 1.0).unwrap());
        assert!(spec.resolved_train().is_err());

        let mut spec = tiny_spec(Method::Clid);
        spec.train.distill =
            Some(DistillConfig::new(DistillKind::ListNet, 0.5, 1.0).unwrap());
        assert!(spec.resolved_train().is_err());
        spec.train.distill = Some(DistillConfig::new(DistillKind::Clid, 0.3, 1.0).unwrap());
        assert_eq!(spec.resolved_train().unwrap().distill.unwrap().alpha, 0.3);
    }

    #[test]
    fn metric_stat_matches_hand_t_interval() {
        // Five values with known sd; t(0.975, 4) = 2.7764451...
        let vals = [1.0, 2.0, 3.0, 4.0, 5.0];
        let s = metric_stat(&vals);
        assert_relative_eq(s.mean, 3.0);
        let sd = (2.5_f64).sqrt();
        let expect = 2.7764451051977987 * sd / 5.0_f64.sqrt();
        assert!((s.ci95.unwrap() - expect).abs() < 1e-9, "{} vs {expect}", s.ci95.unwrap());
        assert!(metric_stat(&[1.5]).ci95.is_none());
    }

    #[test]
    fn run_experiment_writes_round_trippable_results() {
        let dir = tempdir().unwrap();
        let mut spec = tiny_spec(Method::Clid);
        spec.out_dir = Some(dir.path().join("out"));
        let summary = run_experiment(&spec).unwrap();
        assert_eq!(summary.trials.len(), 2);
        assert_eq!(summary.trials[0].seed + 1, summary.trials[1].seed);

        let trials_text = fs::read_to_string(dir.path().join("out/trials.csv")).unwrap();
        let parsed = parse_trials_csv(&trials_text).unwrap();
        assert_eq!(parsed, summary.trials, "trials file round-trips exactly");

        let agg_text = fs::read_to_string(dir.path().join("out/aggregate.csv")).unwrap();
        let agg = parse_aggregate_csv(&agg_text).unwrap();
        assert_eq!(agg, summary.aggregate, "aggregate file round-trips exactly");

        let log_text = fs::read_to_string(dir.path().join("out/train_log.csv")).unwrap();
        assert!(log_text.starts_with(TrainLog::CSV_HEADER));

        let bundle = ModelBundle::load(&dir.path().join("out/model")).unwrap();
        assert_eq!(bundle.kind, ModelKind::Student);
        let teacher = ModelBundle::load(&dir.path().join("out/teacher")).unwrap();
        assert_eq!(teacher.kind, ModelKind::Teacher);
    }

    #[test]
    fn run_experiment_is_deterministic_per_seed() {
        let spec = tiny_spec(Method::Base);
        let a = run_experiment(&spec).unwrap();
        let b = run_experiment(&spec).unwrap();
        assert_eq!(a.trials, b.trials);
    }

    #[test]
    fn all_methods_smoke() {
        for method in Method::ALL {
            let mut spec = tiny_spec(method);
            spec.trials = 1;
            let summary = run_experiment(&spec).unwrap();
            assert!(
                summary.trials[0].report.logloss.is_finite(),
                "{method} produced bad metrics"
            );
            assert!(summary.aggregate.ndcg10.ci95.is_none(), "one trial has no interval");
        }
    }

    #[test]
    fn simultaneous_protocol_runs_through_experiment() {
        let mut spec = tiny_spec(Method::Clid);
        spec.trials = 1;
        spec.train.protocol = Protocol::Simultaneous;
        spec.train.epochs = 1;
        let summary = run_experiment(&spec).unwrap();
        assert!(summary.trials[0].report.logloss.is_finite());
    }

    #[test]
    fn probe_table_covers_all_losses() {
        let reports = probe_all(2, 6, 50, 5).unwrap();
        assert_eq!(reports.len(), 4);
        let table = render_probe_table(&reports);
        for kind in DistillKind::ALL {
            assert!(table.contains(&kind.to_string()), "missing {kind} row");
        }
        assert!(table.lines().count() == 5);
    }

    #[test]
    fn sweep_csv_round_trips_and_negates_logloss() {
        let mut spec = tiny_spec(Method::Clid);
        spec.trials = 1;
        let cfg = spec.resolved_train().unwrap();
        let splits = spec.data.load().unwrap();
        let results =
            crate::train::weight_ratio_sweep(&splits, &spec.model, &cfg, &[0.1, 1.0]).unwrap();
        let rows = sweep_rows(&results);
        assert_eq!(rows[0].neg_logloss, -results[0].1.logloss);
        let text = sweep_to_csv(&rows);
        assert_eq!(parse_sweep_csv(&text).unwrap(), rows);
    }

    #[test]
    fn predictions_csv_round_trip_through_eval() {
        let text = "qid,label,prediction\n1,1,0.9\n1,0,0.1\n2,0,0.4\n2,1,0.6\n";
        let report = eval_predictions_csv(text).unwrap();
        assert_eq!(report.queries, 2);
        assert_eq!(report.samples, 4);
        assert_eq!(report.gauc, Some(1.0));

        let with_users = "qid,user_id,label,prediction\n1,7,1,0.9\n1,7,0,0.1\n2,7,0,0.4\n2,7,1,0.6\n";
        let r2 = eval_predictions_csv(with_users).unwrap();
        assert_eq!(r2.users, 1, "explicit user ids merge queries");

        assert!(eval_predictions_csv("bad,header\n").is_err());
        assert!(eval_predictions_csv("qid,label,prediction\n1,2,oops\n").is_err());
    }

    #[test]
    fn predictions_writer_feeds_evaluator() {
        let mut spec = tiny_spec(Method::Base);
        spec.trials = 1;
        let splits = spec.data.load().unwrap();
        let cfg = spec.resolved_train().unwrap();
        let outcome = run_method(&splits, &spec.model, &cfg, Method::Base).unwrap();
        let csv = predictions_to_csv(&splits.test, &outcome.bundle).unwrap();
        let report = eval_predictions_csv(&csv).unwrap();
        assert_eq!(report.queries, outcome.report.queries);
        assert_eq!(report.samples, outcome.report.samples);
        assert!((report.ndcg_at_k - outcome.report.ndcg_at_k).abs() < 1e-12);
    }

    #[test]
    fn files_source_round_trips_generated_data() {
        let dir = tempdir().unwrap();
        let spec = SyntheticSpec { num_queries: 15, docs_min: 3, docs_max: 5, feat_dim: 4, context_strength: 1.0, seed: 2 };
        let data = gen_synthetic(&spec).unwrap();
        let (train, valid, test) = data.dataset.split_three(0.6, 0.2).unwrap();
        for (ds, name) in [(&train, SPLIT_FILE_NAMES[0]), (&valid, SPLIT_FILE_NAMES[1]), (&test, SPLIT_FILE_NAMES[2])] {
            let mut f = fs::File::create(dir.path().join(name)).unwrap();
            ds.write_svmlight(&mut f).unwrap();
        }
        let source = DataSource::Files {
            dir: Some(dir.path().to_path_buf()),
            train: None,
            valid: None,
            test: None,
            transform: true,
        };
        let loaded = source.load().unwrap();
        let direct = DataSplits {
            train: PreparedDataset::prepare(&train, true),
            valid: PreparedDataset::prepare(&valid, true),
            test: PreparedDataset::prepare(&test, true),
        };
        assert_eq!(loaded.train.lists.len(), direct.train.lists.len());
        assert_eq!(loaded.train.own_dim, direct.train.own_dim);
        for (a, b) in loaded.test.lists.iter().zip(&direct.test.lists) {
            assert_eq!(a.qid, b.qid);
            assert_eq!(a.labels, b.labels);
            assert_eq!(a.reps.own, b.reps.own);
        }
        let missing = DataSource::Files { dir: None, train: None, valid: None, test: None, transform: true };
        assert!(missing.load().is_err());
    }

    #[test]
    fn write_atomic_replaces_contents() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("x.csv");
        write_atomic(&path, "one").unwrap();
        write_atomic(&path, "two").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "two");
        assert!(fs::read_dir(dir.path()).unwrap().count() == 1, "no temp files left behind");
    }

    #[test]
    fn out_dir_resolution_honors_env_root() {
        // Absolute paths pass through untouched regardless of the env var.
        let abs = Path::new("/tmp/abs/x");
        assert_eq!(resolve_out_dir(abs), abs);
    }
}
