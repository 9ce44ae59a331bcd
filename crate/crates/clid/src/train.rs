//! Training orchestration: the teacher-first and simultaneous protocols,
//! the non-distilled Base arm, the two-tower baselines, and the weight-ratio
//! sweep.
//!
//! Determinism contract: every random stream (initialization, epoch
//! shuffles, dropout masks) is derived from TrainConfig::seed through a
//! fixed per-role salt, and optimizer steps run sequentially in shuffle
//! order. Two runs with equal data and config produce bit-identical
//! parameters. The Base arm and any distilling arm share the same
//! main-tower derivation, so their initializations match exactly.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{PreparedDataset, PreparedList};
use crate::error::{Error, Result};
use crate::loss::{distill_for, point_ce, point_ce_mean, student_loss, DistillConfig, LossOutput};
use crate::metrics::{evaluate, ListScores, MetricsReport, UserAssignment};
use crate::model::{pridropout_masks, ModelBundle, ModelConfig, ModelKind};
use crate::net::{sigmoid, ForwardOptions, RankerParams};

/// NDCG cutoff used by every evaluation in this crate.
pub const METRIC_K: usize = 10;
/// ECE bin count used by every evaluation in this crate.
pub const ECE_BINS: usize = 10;

/// Which training protocol drives teacher and student updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Train the teacher to convergence, freeze it, then distill.
    TeacherFirst,
    /// Alternate one teacher step and one student step per batch, with the
    /// student reading the teacher's post-update predictions.
    Simultaneous,
}

impl Protocol {
    /// Epoch budget used when a config leaves epochs unset.
    pub fn default_epochs(self) -> usize {
        match self {
            Protocol::TeacherFirst => 100,
            Protocol::Simultaneous => 1,
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::TeacherFirst => "teacher_first",
            Protocol::Simultaneous => "simultaneous",
        })
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "teacher_first" => Ok(Protocol::TeacherFirst),
            "simultaneous" => Ok(Protocol::Simultaneous),
            other => Err(Error::InvalidConfig(format!(
                "unknown protocol {other:?} (expected teacher_first|simultaneous)"
            ))),
        }
    }
}

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_protocol")]
    pub protocol: Protocol,
    /// 0 (or omitted in a config file) means the protocol's default budget.
    #[serde(default)]
    pub epochs: usize,
    #[serde(default = "default_batch_lists")]
    pub batch_lists: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Validation is evaluated every this many epochs and always at the
    /// final epoch.
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    /// None trains the plain Base arm (pure label loss, no teacher).
    #[serde(default)]
    pub distill: Option<DistillConfig>,
    /// Training-time dropout on hidden activations of deep towers.
    #[serde(default)]
    pub dropout_rate: f64,
    /// Training-time per-batch standardization of hidden pre-activations.
    #[serde(default)]
    pub batch_norm: bool,
}

fn default_protocol() -> Protocol {
    Protocol::TeacherFirst
}

fn default_batch_lists() -> usize {
    16
}

fn default_lr() -> f64 {
    0.5
}

fn default_weight_decay() -> f64 {
    0.001
}

fn default_seed() -> u64 {
    7
}

fn default_eval_every() -> usize {
    10
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            protocol: default_protocol(),
            epochs: 0,
            batch_lists: default_batch_lists(),
            lr: default_lr(),
            weight_decay: default_weight_decay(),
            seed: default_seed(),
            eval_every: default_eval_every(),
            distill: None,
            dropout_rate: 0.0,
            batch_norm: false,
        }
        .normalized()
    }
}

impl TrainConfig {
    /// Resolve an unset epoch budget to the protocol default.
    pub fn normalized(mut self) -> Self {
        if self.epochs == 0 {
            self.epochs = self.protocol.default_epochs();
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch_lists == 0 {
            return Err(Error::InvalidConfig("batch_lists must be >= 1".into()));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::InvalidConfig(format!("lr must be positive, got {}", self.lr)));
        }
        if self.weight_decay < 0.0 || !self.weight_decay.is_finite() {
            return Err(Error::InvalidConfig("weight_decay must be non-negative".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::InvalidConfig("eval_every must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidConfig(format!(
                "dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if let Some(d) = &self.distill {
            d.validate()?;
        }
        Ok(())
    }

    fn forward_options(&self) -> ForwardOptions {
        ForwardOptions { dropout_rate: self.dropout_rate, batch_norm: self.batch_norm }
    }
}

/// Train/validation/test datasets with privileged vectors built.
#[derive(Debug, Clone)]
pub struct DataSplits {
    pub train: PreparedDataset,
    pub valid: PreparedDataset,
    pub test: PreparedDataset,
}

impl DataSplits {
    fn validate(&self) -> Result<()> {
        for (name, d) in [("train", &self.train), ("valid", &self.valid), ("test", &self.test)] {
            if d.lists.is_empty() {
                return Err(Error::Data(format!("{name} split has no query lists")));
            }
            if d.own_dim != self.train.own_dim {
                return Err(Error::Shape(format!(
                    "{name} split width {} differs from train width {}",
                    d.own_dim, self.train.own_dim
                )));
            }
        }
        Ok(())
    }
}

/// Which split an evaluation record describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        })
    }
}

/// One periodic evaluation during training.
#[derive(Debug, Clone)]
pub struct EvalRecord {
    pub epoch: usize,
    pub split: Split,
    pub report: MetricsReport,
}

/// Evaluation history of one training run, in epoch order.
#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    pub records: Vec<EvalRecord>,
}

impl TrainLog {
    pub const CSV_HEADER: &'static str = "epoch,split,ndcg10,logloss,ece,gauc";

    fn push(&mut self, epoch: usize, split: Split, report: MetricsReport) {
        self.records.push(EvalRecord { epoch, split, report });
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let gauc = r.report.gauc.map(|g| g.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.epoch, r.split, r.report.ndcg_at_k, r.report.logloss, r.report.ece, gauc
            ));
        }
        out
    }
}

// Per-role seed derivation: a splitmix64 scramble of the base seed and a
// role salt. The Base arm and every distilling student share MAIN so their
// trajectories can be compared (and proven identical at alpha = 1).
#[derive(Debug, Clone, Copy)]
enum Role {
    MainInit,
    TeacherInit,
    ShallowInit,
    MainShuffle,
    TeacherShuffle,
    MainDropout,
    TeacherDropout,
    ShallowDropout,
}

fn role_seed(base: u64, role: Role) -> u64 {
    let salt: u64 = match role {
        Role::MainInit => 0x11,
        Role::TeacherInit => 0x22,
        Role::ShallowInit => 0x33,
        Role::MainShuffle => 0x44,
        Role::TeacherShuffle => 0x55,
        Role::MainDropout => 0x66,
        Role::TeacherDropout => 0x77,
        Role::ShallowDropout => 0x88,
    };
    let mut z = base ^ salt.wrapping_mul(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Rows of several lists stacked into one matrix pair, with per-list spans.
struct StepBatch {
    own: Array2<f64>,
    combined: Array2<f64>,
    ys: Vec<f64>,
    spans: Vec<(usize, usize)>,
}

fn assemble(lists: &[&PreparedList], own_dim: usize) -> StepBatch {
    let rows: usize = lists.iter().map(|l| l.labels.len()).sum();
    let mut own = Array2::zeros((rows, own_dim));
    let mut combined = Array2::zeros((rows, 2 * own_dim));
    let mut ys = Vec::with_capacity(rows);
    let mut spans = Vec::with_capacity(lists.len());
    let mut at = 0usize;
    for l in lists {
        let n = l.labels.len();
        own.slice_mut(ndarray::s![at..at + n, ..]).assign(&l.reps.own);
        combined.slice_mut(ndarray::s![at..at + n, ..]).assign(&l.reps.combined);
        ys.extend_from_slice(&l.labels);
        spans.push((at, at + n));
        at += n;
    }
    StepBatch { own, combined, ys, spans }
}

fn diverged(epoch: usize, detail: impl Into<String>) -> Error {
    Error::Diverged { epoch, detail: detail.into() }
}

fn check_step(epoch: usize, value: f64, params: &mut RankerParams, grads: &crate::net::ParamGrads, lr: f64, wd: f64) -> Result<()> {
    if !value.is_finite() {
        return Err(diverged(epoch, format!("non-finite batch loss {value}")));
    }
    if !grads.is_finite() {
        return Err(diverged(epoch, "non-finite gradient"));
    }
    params.sgd_step(grads, lr, wd)
}

/// Serve-mode metrics of a single network over one split. Teacher networks
/// read the combined matrix, everything else reads own features.
pub fn evaluate_params(
    params: &RankerParams,
    split: &PreparedDataset,
    on_combined: bool,
) -> Result<MetricsReport> {
    let all: Vec<&PreparedList> = split.lists.iter().collect();
    let batch = assemble(&all, split.own_dim);
    let input = if on_combined { &batch.combined } else { &batch.own };
    let probs = params.forward(input.view())?.probs;
    let lists: Vec<ListScores> = split
        .lists
        .iter()
        .zip(&batch.spans)
        .map(|(l, &(s, e))| ListScores {
            qid: l.qid,
            predictions: probs.as_slice().unwrap()[s..e].to_vec(),
            labels: l.labels.clone(),
        })
        .collect();
    evaluate(&lists, METRIC_K, ECE_BINS, UserAssignment::QueryAsUser)
}

/// Serve-mode metrics of a saved model bundle over one split.
pub fn evaluate_bundle(bundle: &ModelBundle, split: &PreparedDataset) -> Result<MetricsReport> {
    evaluate_params(&bundle.main, split, bundle.kind.serves_on_combined())
}

/// Fresh teacher parameters for the given data widths, derived from the
/// config seed. The simultaneous protocol starts from exactly this state.
pub fn init_teacher(model: &ModelConfig, splits: &DataSplits, seed: u64) -> Result<RankerParams> {
    RankerParams::init(&model.teacher_dims(2 * splits.train.own_dim), role_seed(seed, Role::TeacherInit))
}

/// Train a teacher on pointwise cross-entropy over combined own + context
/// features. Returns the parameters with the best validation LogLoss seen
/// at any evaluation point (the operational meaning of "converged"), plus
/// the evaluation log.
pub fn train_teacher(
    splits: &DataSplits,
    model: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<(RankerParams, TrainLog)> {
    cfg.validate()?;
    model.validate()?;
    splits.validate()?;
    let mut params = init_teacher(model, splits, cfg.seed)?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(role_seed(cfg.seed, Role::TeacherShuffle));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(role_seed(cfg.seed, Role::TeacherDropout));
    let opts = cfg.forward_options();
    let mut log = TrainLog::default();
    let mut best: Option<(f64, RankerParams)> = None;

    let mut order: Vec<usize> = (0..splits.train.lists.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(cfg.batch_lists) {
            let lists: Vec<&PreparedList> = chunk.iter().map(|&i| &splits.train.lists[i]).collect();
            let batch = assemble(&lists, splits.train.own_dim);
            let trace = params.forward_with(batch.combined.view(), &opts, &mut dropout_rng)?;
            let probs = trace.probs.as_slice().unwrap();
            let b = lists.len() as f64;
            let mut value = 0.0;
            let mut dl = vec![0.0; batch.ys.len()];
            for &(s, e) in &batch.spans {
                let ce = point_ce_mean(&batch.ys[s..e], &probs[s..e])?;
                value += ce.value / b;
                for (slot, g) in dl[s..e].iter_mut().zip(&ce.grad) {
                    *slot = g / b;
                }
            }
            let grads = params.backward(&trace, &dl)?;
            check_step(epoch, value, &mut params, &grads, cfg.lr, cfg.weight_decay)?;
        }
        if epoch % cfg.eval_every == 0 || epoch == cfg.epochs {
            let report = evaluate_params(&params, &splits.valid, true)?;
            if best.as_ref().map_or(true, |(l, _)| report.logloss < *l) {
                best = Some((report.logloss, params.clone()));
            }
            log.push(epoch, Split::Valid, report);
        }
    }
    Ok((best.expect("at least one evaluation").1, log))
}

/// Outcome of a student training run.
pub struct StudentOutcome {
    pub student: RankerParams,
    /// The trained teacher under the simultaneous protocol; None otherwise.
    pub teacher: Option<RankerParams>,
    pub log: TrainLog,
}

/// Train a student (or, with `cfg.distill == None`, the Base arm) on the
/// convex combination of label loss and distillation loss.
///
/// Teacher-first: `teacher` must hold the frozen, pre-trained teacher; it is
/// only read. Simultaneous: `teacher` holds the teacher's starting
/// parameters; each batch applies one teacher step on label loss, then one
/// student step distilling from the updated teacher's (gradient-blocked)
/// predictions. Teacher targets are always computed in serve mode.
///
/// The returned student carries the final-epoch parameters: no early
/// stopping, so all methods see an identical optimization budget.
pub fn train_student(
    splits: &DataSplits,
    model: &ModelConfig,
    cfg: &TrainConfig,
    teacher: Option<&RankerParams>,
) -> Result<StudentOutcome> {
    cfg.validate()?;
    model.validate()?;
    splits.validate()?;
    if cfg.distill.is_some() != teacher.is_some() {
        return Err(Error::InvalidConfig(
            "teacher parameters must be present exactly when distillation is configured".into(),
        ));
    }
    let own_dim = splits.train.own_dim;
    if let Some(t) = teacher {
        if t.input_dim() != 2 * own_dim {
            return Err(Error::Shape(format!(
                "teacher reads {} features, data provides {}",
                t.input_dim(),
                2 * own_dim
            )));
        }
    }

    let mut student = RankerParams::init(&model.student_dims(own_dim), role_seed(cfg.seed, Role::MainInit))?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(role_seed(cfg.seed, Role::MainShuffle));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(role_seed(cfg.seed, Role::MainDropout));
    let mut teacher_dropout_rng = ChaCha8Rng::seed_from_u64(role_seed(cfg.seed, Role::TeacherDropout));
    let opts = cfg.forward_options();
    let mut log = TrainLog::default();

    let simultaneous = cfg.protocol == Protocol::Simultaneous && cfg.distill.is_some();
    let mut live_teacher: Option<RankerParams> = simultaneous.then(|| teacher.unwrap().clone());
    // Alpha = 1 skips every distillation computation, which is what makes
    // the Base equivalence exact rather than approximate.
    let distill_active = cfg.distill.as_ref().map_or(false, |d| d.alpha < 1.0);
    let alpha = cfg.distill.as_ref().map_or(1.0, |d| d.alpha);

    let mut order: Vec<usize> = (0..splits.train.lists.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(cfg.batch_lists) {
            let lists: Vec<&PreparedList> = chunk.iter().map(|&i| &splits.train.lists[i]).collect();
            let batch = assemble(&lists, own_dim);
            let b = lists.len() as f64;

            if let Some(t) = live_teacher.as_mut() {
                let trace = t.forward_with(batch.combined.view(), &opts, &mut teacher_dropout_rng)?;
                let probs = trace.probs.as_slice().unwrap();
                let mut value = 0.0;
                let mut dl = vec![0.0; batch.ys.len()];
                for &(s, e) in &batch.spans {
                    let ce = point_ce_mean(&batch.ys[s..e], &probs[s..e])?;
                    value += ce.value / b;
                    for (slot, g) in dl[s..e].iter_mut().zip(&ce.grad) {
                        *slot = g / b;
                    }
                }
                let grads = t.backward(&trace, &dl)?;
                check_step(epoch, value, t, &grads, cfg.lr, cfg.weight_decay)?;
            }

            let teacher_preds = if distill_active {
                let current: &RankerParams = live_teacher.as_ref().unwrap_or_else(|| teacher.unwrap());
                let trace = current.forward(batch.combined.view())?;
                Some((trace.logits.to_vec(), trace.probs.to_vec()))
            } else {
                None
            };

            let trace = student.forward_with(batch.own.view(), &opts, &mut dropout_rng)?;
            let s_logits = trace.logits.to_vec();
            let s_probs = trace.probs.to_vec();
            let mut value = 0.0;
            let mut dl = vec![0.0; batch.ys.len()];
            for &(s, e) in &batch.spans {
                let d_out = match (&teacher_preds, &cfg.distill) {
                    (Some((t_logits, t_probs)), Some(dcfg)) => distill_for(
                        dcfg,
                        &t_logits[s..e],
                        &t_probs[s..e],
                        &s_logits[s..e],
                        &s_probs[s..e],
                    )?,
                    _ => LossOutput::zero(e - s),
                };
                let combined = student_loss(&batch.ys[s..e], &s_probs[s..e], &d_out, alpha)?;
                value += combined.value / b;
                for (slot, g) in dl[s..e].iter_mut().zip(&combined.grad) {
                    *slot = g / b;
                }
            }
            let grads = student.backward(&trace, &dl)?;
            check_step(epoch, value, &mut student, &grads, cfg.lr, cfg.weight_decay)?;
        }
        if epoch % cfg.eval_every == 0 || epoch == cfg.epochs {
            log.push(epoch, Split::Valid, evaluate_params(&student, &splits.valid, false)?);
        }
    }
    Ok(StudentOutcome { student, teacher: live_teacher, log })
}

/// Per-list PAL training gradients: label loss on the product probability
/// p = shallow * main, with gradients written in complement form so they
/// stay stable as either factor saturates. Returns (value, d/d main logits,
/// d/d shallow logits), each already averaged over the list.
pub(crate) fn pal_list_grads(
    ys: &[f64],
    main_probs: &[f64],
    shallow_probs: &[f64],
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let n = ys.len() as f64;
    let mut value = 0.0;
    let mut d_main = Vec::with_capacity(ys.len());
    let mut d_shallow = Vec::with_capacity(ys.len());
    for ((&y, &b), &a) in ys.iter().zip(main_probs).zip(shallow_probs) {
        let p = (a * b).max(f64::MIN_POSITIVE);
        value += point_ce(y, p)?.value / n;
        // 1 - ab computed from the complements: (1-b) + b(1-a).
        let (qa, qb) = (1.0 - a, 1.0 - b);
        let denom = qb + b * qa;
        let g = p - y;
        d_main.push(g * qb / denom / n);
        d_shallow.push(g * qa / denom / n);
    }
    Ok((value, d_main, d_shallow))
}

/// Per-list PriDropOut training gradients: label loss on
/// sigma(main + mask * shallow) with per-sample inverted-scaling masks.
pub(crate) fn pridropout_list_grads(
    ys: &[f64],
    main_logits: &[f64],
    shallow_logits: &[f64],
    masks: &[f64],
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let n = ys.len() as f64;
    let mut value = 0.0;
    let mut d_main = Vec::with_capacity(ys.len());
    let mut d_shallow = Vec::with_capacity(ys.len());
    for i in 0..ys.len() {
        let p = sigmoid(main_logits[i] + masks[i] * shallow_logits[i]);
        value += point_ce(ys[i], p)?.value / n;
        let g = (p - ys[i]) / n;
        d_main.push(g);
        d_shallow.push(masks[i] * g);
    }
    Ok((value, d_main, d_shallow))
}

/// Train a PAL or PriDropOut baseline: a main tower over own features and a
/// shallow tower over context features, jointly optimized on label loss
/// through the kind's training-time combination. Serving (and every
/// evaluation here) uses the main tower alone.
pub fn train_two_tower(
    splits: &DataSplits,
    model: &ModelConfig,
    cfg: &TrainConfig,
    kind: ModelKind,
) -> Result<(ModelBundle, TrainLog)> {
    cfg.validate()?;
    model.validate()?;
    splits.validate()?;
    if !matches!(kind, ModelKind::Pal | ModelKind::PriDropout) {
        return Err(Error::InvalidConfig(format!("{kind} is not a two-tower baseline")));
    }
    if cfg.distill.is_some() {
        return Err(Error::InvalidConfig(format!("{kind} does not take a distillation loss")));
    }
    let own_dim = splits.train.own_dim;
    let mut main = RankerParams::init(&model.student_dims(own_dim), role_seed(cfg.seed, Role::MainInit))?;
    let mut shallow =
        RankerParams::init(&model.shallow_dims(own_dim), role_seed(cfg.seed, Role::ShallowInit))?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(role_seed(cfg.seed, Role::MainShuffle));
    let mut main_dropout_rng = ChaCha8Rng::seed_from_u64(role_seed(cfg.seed, Role::MainDropout));
    let mut shallow_dropout_rng = ChaCha8Rng::seed_from_u64(role_seed(cfg.seed, Role::ShallowDropout));
    // Per-step seed stream for the PriDropOut logit masks.
    let mut mask_seed_rng = ChaCha8Rng::seed_from_u64(role_seed(cfg.seed, Role::ShallowDropout).wrapping_add(1));
    let opts = cfg.forward_options();
    let mut log = TrainLog::default();

    let mut order: Vec<usize> = (0..splits.train.lists.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(cfg.batch_lists) {
            let lists: Vec<&PreparedList> = chunk.iter().map(|&i| &splits.train.lists[i]).collect();
            let batch = assemble(&lists, own_dim);
            let context = batch.combined.slice(ndarray::s![.., own_dim..]);
            let b = lists.len() as f64;

            let main_trace = main.forward_with(batch.own.view(), &opts, &mut main_dropout_rng)?;
            let shallow_trace = shallow.forward_with(context, &opts, &mut shallow_dropout_rng)?;

            let masks = match kind {
                ModelKind::PriDropout => {
                    use rand::Rng as _;
                    pridropout_masks(batch.ys.len(), model.shallow_dropout, mask_seed_rng.random())
                }
                _ => Vec::new(),
            };

            let mut value = 0.0;
            let mut dl_main = vec![0.0; batch.ys.len()];
            let mut dl_shallow = vec![0.0; batch.ys.len()];
            for &(s, e) in &batch.spans {
                let (v, dm, dsh) = match kind {
                    ModelKind::Pal => pal_list_grads(
                        &batch.ys[s..e],
                        &main_trace.probs.as_slice().unwrap()[s..e],
                        &shallow_trace.probs.as_slice().unwrap()[s..e],
                    )?,
                    _ => pridropout_list_grads(
                        &batch.ys[s..e],
                        &main_trace.logits.as_slice().unwrap()[s..e],
                        &shallow_trace.logits.as_slice().unwrap()[s..e],
                        &masks[s..e],
                    )?,
                };
                value += v / b;
                for (i, (gm, gs)) in dm.iter().zip(&dsh).enumerate() {
                    dl_main[s + i] = gm / b;
                    dl_shallow[s + i] = gs / b;
                }
            }
            let main_grads = main.backward(&main_trace, &dl_main)?;
            let shallow_grads = shallow.backward(&shallow_trace, &dl_shallow)?;
            check_step(epoch, value, &mut main, &main_grads, cfg.lr, cfg.weight_decay)?;
            check_step(epoch, value, &mut shallow, &shallow_grads, cfg.lr, cfg.weight_decay)?;
        }
        if epoch % cfg.eval_every == 0 || epoch == cfg.epochs {
            log.push(epoch, Split::Valid, evaluate_params(&main, &splits.valid, false)?);
        }
    }
    Ok((ModelBundle::new(kind, main, Some(shallow))?, log))
}

/// Train one student per weight ratio against a single shared teacher and
/// report test-split metrics per ratio, in grid order. Requires the
/// teacher-first protocol (a shared converged teacher is what makes the
/// ratios comparable).
pub fn weight_ratio_sweep(
    splits: &DataSplits,
    model: &ModelConfig,
    cfg: &TrainConfig,
    grid: &[f64],
) -> Result<Vec<(f64, MetricsReport)>> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("ratio grid must be nonempty".into()));
    }
    if grid.iter().any(|&r| !(r >= 0.0) || !r.is_finite()) {
        return Err(Error::InvalidConfig("ratio grid entries must be finite and >= 0".into()));
    }
    if cfg.protocol != Protocol::TeacherFirst {
        return Err(Error::InvalidConfig(
            "the weight-ratio sweep shares one frozen teacher and needs the teacher_first protocol"
                .into(),
        ));
    }
    let base_distill = cfg
        .distill
        .clone()
        .ok_or_else(|| Error::InvalidConfig("the sweep needs a distillation loss configured".into()))?;

    let (teacher, _) = train_teacher(splits, model, cfg)?;
    let mut out = Vec::with_capacity(grid.len());
    for &ratio in grid {
        let mut cfg_r = cfg.clone();
        cfg_r.distill = Some(DistillConfig::from_weight_ratio(
            base_distill.kind,
            ratio,
            base_distill.temperature,
        )?);
        let outcome = train_student(splits, model, &cfg_r, Some(&teacher))?;
        let report = evaluate_params(&outcome.student, &splits.test, false)?;
        out.push((ratio, report));
    }
    Ok(out)
}
