//! Training losses: pointwise cross-entropy, four distillation losses
//! (pointwise, ListNet, ListMLE, CLID), and their convex combination.
//!
//! Every loss returns its value together with the analytic gradient with
//! respect to the student logits, so trainers never need autodiff. All
//! softmax-like expressions are max-subtracted; probabilities are clamped to
//! [1e-7, 1-1e-7] only inside logarithms, never in gradients.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::net::sigmoid;

/// Clamp bound used inside log terms.
const LOG_CLAMP: f64 = 1e-7;

pub(crate) fn ln_clamped(p: f64) -> f64 {
    p.clamp(LOG_CLAMP, 1.0 - LOG_CLAMP).ln()
}

/// ln(1 + e^x) without overflow on either side.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Loss value plus gradient with respect to each contributing student logit.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub grad: Vec<f64>,
}

impl LossOutput {
    pub fn zero(n: usize) -> Self {
        LossOutput { value: 0.0, grad: vec![0.0; n] }
    }

    pub fn grad_inf_norm(&self) -> f64 {
        self.grad.iter().fold(0.0f64, |m, g| m.max(g.abs()))
    }
}

/// Which distillation loss the student trains against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistillKind {
    Pointwise,
    ListNet,
    ListMle,
    Clid,
}

impl DistillKind {
    pub const ALL: [DistillKind; 4] =
        [DistillKind::Pointwise, DistillKind::ListNet, DistillKind::ListMle, DistillKind::Clid];
}

impl fmt::Display for DistillKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DistillKind::Pointwise => "pointwise",
            DistillKind::ListNet => "listnet",
            DistillKind::ListMle => "listmle",
            DistillKind::Clid => "clid",
        };
        f.write_str(s)
    }
}

impl FromStr for DistillKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pointwise" => Ok(DistillKind::Pointwise),
            "listnet" => Ok(DistillKind::ListNet),
            "listmle" => Ok(DistillKind::ListMle),
            "clid" => Ok(DistillKind::Clid),
            other => Err(Error::InvalidConfig(format!(
                "unknown distillation loss {other:?} (expected pointwise|listnet|listmle|clid)"
            ))),
        }
    }
}

/// Distillation hyperparameters: the loss, the label-vs-distillation mix
/// alpha, and the temperature (used by the pointwise loss only).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DistillConfig {
    pub kind: DistillKind,
    /// Weight on the label term; the distillation term gets 1 - alpha.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
}

fn default_alpha() -> f64 {
    0.5
}

fn default_temperature() -> f64 {
    1.0
}

impl DistillConfig {
    pub fn new(kind: DistillKind, alpha: f64, temperature: f64) -> Result<Self> {
        let cfg = DistillConfig { kind, alpha, temperature };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Build from the weight ratio (1 - alpha) / alpha.
    pub fn from_weight_ratio(kind: DistillKind, ratio: f64, temperature: f64) -> Result<Self> {
        if !(ratio >= 0.0) || !ratio.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "weight ratio must be finite and >= 0, got {ratio}"
            )));
        }
        Self::new(kind, 1.0 / (1.0 + ratio), temperature)
    }

    /// (1 - alpha) / alpha; requires alpha > 0.
    pub fn weight_ratio(&self) -> f64 {
        (1.0 - self.alpha) / self.alpha
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!("alpha must be in [0,1], got {}", self.alpha)));
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Pointwise cross-entropy of one prediction against a binary label.
/// Gradient is with respect to the logit behind p: p - y.
pub fn point_ce(y: f64, p: f64) -> Result<LossOutput> {
    if y != 0.0 && y != 1.0 {
        return Err(Error::Data(format!("label must be 0 or 1, got {y}")));
    }
    let value = -y * ln_clamped(p) - (1.0 - y) * ln_clamped(1.0 - p);
    Ok(LossOutput { value, grad: vec![p - y] })
}

/// Mean pointwise cross-entropy over a list; gradient per logit is
/// (p_i - y_i) / n.
pub fn point_ce_mean(ys: &[f64], ps: &[f64]) -> Result<LossOutput> {
    if ys.len() != ps.len() {
        return Err(Error::Shape(format!("{} labels vs {} predictions", ys.len(), ps.len())));
    }
    if ys.is_empty() {
        return Err(Error::Data("empty list".into()));
    }
    let n = ys.len() as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(ys.len());
    for (&y, &p) in ys.iter().zip(ps) {
        let one = point_ce(y, p)?;
        value += one.value / n;
        grad.push(one.grad[0] / n);
    }
    Ok(LossOutput { value, grad })
}

/// Temperature-scaled pointwise distillation: cross-entropy between
/// sigma(s_t / tau) and sigma(s_s / tau). Gradient with respect to s_s is
/// (sigma(s_s/tau) - sigma(s_t/tau)) / tau.
pub fn pointwise_distill(s_t: f64, s_s: f64, tau: f64) -> Result<LossOutput> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidConfig(format!("temperature must be positive, got {tau}")));
    }
    let a = sigmoid(s_t / tau);
    let u = s_s / tau;
    // -a ln sigma(u) - (1-a) ln(1 - sigma(u)), written with softplus so the
    // value stays finite for any logit.
    let value = a * softplus(-u) + (1.0 - a) * softplus(u);
    let grad = (sigmoid(u) - a) / tau;
    Ok(LossOutput { value, grad: vec![grad] })
}

fn check_probs(name: &str, ps: &[f64]) -> Result<()> {
    if ps.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
        return Err(Error::Data(format!("{name} must lie strictly inside (0,1)")));
    }
    Ok(())
}

/// ListNet-style distillation: cross-entropy from the teacher's normalized
/// probabilities to softmax(student logits). Gradient per logit is
/// softmax_i - target_i, which sums to zero over the list.
pub fn listnet_distill(teacher_probs: &[f64], student_logits: &[f64]) -> Result<LossOutput> {
    let n = teacher_probs.len();
    if student_logits.len() != n {
        return Err(Error::Shape(format!(
            "{} teacher probs vs {} student logits",
            n,
            student_logits.len()
        )));
    }
    if n < 2 {
        return Ok(LossOutput::zero(n));
    }
    check_probs("teacher probabilities", teacher_probs)?;
    let t_sum: f64 = teacher_probs.iter().sum();
    let max = student_logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = student_logits.iter().map(|&s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    let ln_z = z.ln();
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(n);
    for i in 0..n {
        let target = teacher_probs[i] / t_sum;
        let ln_softmax = (student_logits[i] - max) - ln_z;
        value -= target * ln_softmax;
        grad.push(exps[i] / z - target);
    }
    Ok(LossOutput { value, grad })
}

/// ListMLE distillation: negative Plackett-Luce log-likelihood of the
/// teacher's ranking under the student logits. The permutation sorts
/// teacher probabilities descending, ties broken by ascending original
/// index. Suffix log-sum-exps are max-subtracted.
pub fn listmle_distill(teacher_probs: &[f64], student_logits: &[f64]) -> Result<LossOutput> {
    let n = teacher_probs.len();
    if student_logits.len() != n {
        return Err(Error::Shape(format!(
            "{} teacher probs vs {} student logits",
            n,
            student_logits.len()
        )));
    }
    if n < 2 {
        return Ok(LossOutput::zero(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        teacher_probs[b].partial_cmp(&teacher_probs[a]).unwrap().then(a.cmp(&b))
    });
    let s: Vec<f64> = order.iter().map(|&i| student_logits[i]).collect();

    // lse[i] = log sum_{j >= i} exp(s_j); O(n^2) suffix scans are fine at
    // list sizes this crate targets.
    let mut lse = vec![0.0; n];
    for i in 0..n {
        let m = s[i..].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = s[i..].iter().map(|&v| (v - m).exp()).sum();
        lse[i] = m + sum.ln();
    }
    let value: f64 = (0..n).map(|i| lse[i] - s[i]).sum();

    // d value / d s_k = sum_{i <= k} exp(s_k - lse[i]) - 1; the exponent is
    // never positive because s_k <= lse[i] for every i <= k.
    let mut grad = vec![0.0; n];
    for k in 0..n {
        let g: f64 = (0..=k).map(|i| (s[k] - lse[i]).exp()).sum::<f64>() - 1.0;
        grad[order[k]] = g;
    }
    Ok(LossOutput { value, grad })
}

/// Calibration-compatible listwise distillation: cross-entropy between the
/// teacher's and student's within-list normalized probability distributions.
/// Gradient per student logit is (1 - p_s,i) * (P_s,i - P_t,i), which
/// vanishes exactly when the student matches the teacher pointwise.
pub fn clid_distill(teacher_probs: &[f64], student_probs: &[f64]) -> Result<LossOutput> {
    let n = teacher_probs.len();
    if student_probs.len() != n {
        return Err(Error::Shape(format!(
            "{} teacher probs vs {} student probs",
            n,
            student_probs.len()
        )));
    }
    if n < 2 {
        return Ok(LossOutput::zero(n));
    }
    check_probs("teacher probabilities", teacher_probs)?;
    check_probs("student probabilities", student_probs)?;
    let t_sum: f64 = teacher_probs.iter().sum();
    let s_sum: f64 = student_probs.iter().sum();
    let ln_s_sum = s_sum.ln();
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(n);
    for i in 0..n {
        let p_t = teacher_probs[i] / t_sum;
        let p_s = student_probs[i] / s_sum;
        value -= p_t * (ln_clamped(student_probs[i]) - ln_s_sum);
        grad.push((1.0 - student_probs[i]) * (p_s - p_t));
    }
    Ok(LossOutput { value, grad })
}

/// Combined per-list student loss: alpha * mean PointCE + (1 - alpha) *
/// distillation. With alpha = 1 the distillation output is ignored entirely
/// and the result equals the PointCE term bit for bit.
pub fn student_loss(ys: &[f64], student_probs: &[f64], distill: &LossOutput, alpha: f64) -> Result<LossOutput> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidConfig(format!("alpha must be in [0,1], got {alpha}")));
    }
    let ce = point_ce_mean(ys, student_probs)?;
    if alpha == 1.0 {
        return Ok(ce);
    }
    if distill.grad.len() != ys.len() {
        return Err(Error::Shape(format!(
            "distillation gradient covers {} logits, list has {}",
            distill.grad.len(),
            ys.len()
        )));
    }
    let value = alpha * ce.value + (1.0 - alpha) * distill.value;
    let grad = ce
        .grad
        .iter()
        .zip(&distill.grad)
        .map(|(c, d)| alpha * c + (1.0 - alpha) * d)
        .collect();
    Ok(LossOutput { value, grad })
}

/// Evaluate the configured distillation loss for one list. The pointwise
/// loss is averaged over the list's samples so every kind contributes one
/// value per list.
pub fn distill_for(
    cfg: &DistillConfig,
    teacher_logits: &[f64],
    teacher_probs: &[f64],
    student_logits: &[f64],
    student_probs: &[f64],
) -> Result<LossOutput> {
    cfg.validate()?;
    match cfg.kind {
        DistillKind::Pointwise => {
            let n = teacher_logits.len();
            if student_logits.len() != n {
                return Err(Error::Shape(format!(
                    "{} teacher logits vs {} student logits",
                    n,
                    student_logits.len()
                )));
            }
            if n == 0 {
                return Err(Error::Data("empty list".into()));
            }
            let mut value = 0.0;
            let mut grad = Vec::with_capacity(n);
            for i in 0..n {
                let one = pointwise_distill(teacher_logits[i], student_logits[i], cfg.temperature)?;
                value += one.value / n as f64;
                grad.push(one.grad[0] / n as f64);
            }
            Ok(LossOutput { value, grad })
        }
        DistillKind::ListNet => listnet_distill(teacher_probs, student_logits),
        DistillKind::ListMle => listmle_distill(teacher_probs, student_logits),
        DistillKind::Clid => clid_distill(teacher_probs, student_probs),
    }
}

/// Result of probing one distillation loss at the pointwise-optimal
/// configuration p_s = p_t = P.
#[derive(Debug, Clone)]
pub struct ProbeReport {
    pub kind: DistillKind,
    pub n_min: usize,
    pub n_max: usize,
    pub trials: usize,
    /// Largest gradient infinity-norm seen across trials.
    pub max_grad_inf_norm: f64,
    /// ListMLE only: fraction of trials where doubling the student logits
    /// strictly decreased the loss (evidence of no finite minimizer).
    pub scale_descent_fraction: Option<f64>,
}

/// Probe whether a distillation loss is minimized where pointwise
/// cross-entropy is: per trial, draw P uniform in (0.05, 0.95)^n, set
/// student = teacher = P, and measure the gradient with respect to the
/// student logits. For ListMLE the probe also checks whether scaling the
/// (teacher-aligned) student logits by 2 strictly decreases the loss.
pub fn compat_probe(
    kind: DistillKind,
    n_min: usize,
    n_max: usize,
    trials: usize,
    seed: u64,
) -> Result<ProbeReport> {
    if n_min < 2 || n_max < n_min {
        return Err(Error::InvalidConfig(format!(
            "list size range must satisfy 2 <= min <= max, got {n_min}..={n_max}"
        )));
    }
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_norm = 0.0f64;
    let mut descents = 0usize;
    for _ in 0..trials {
        let n = rng.random_range(n_min..=n_max);
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.95)).collect();
        let s: Vec<f64> = p.iter().map(|&v| (v / (1.0 - v)).ln()).collect();
        let out = match kind {
            DistillKind::Pointwise => {
                let grads: Result<Vec<f64>> = s
                    .iter()
                    .map(|&si| Ok(pointwise_distill(si, si, 1.0)?.grad[0]))
                    .collect();
                LossOutput { value: 0.0, grad: grads? }
            }
            DistillKind::ListNet => listnet_distill(&p, &s)?,
            DistillKind::ListMle => {
                let base = listmle_distill(&p, &s)?;
                let doubled: Vec<f64> = s.iter().map(|&v| 2.0 * v).collect();
                let scaled = listmle_distill(&p, &doubled)?;
                if scaled.value < base.value {
                    descents += 1;
                }
                base
            }
            DistillKind::Clid => clid_distill(&p, &p)?,
        };
        max_norm = max_norm.max(out.grad_inf_norm());
    }
    Ok(ProbeReport {
        kind,
        n_min,
        n_max,
        trials,
        max_grad_inf_norm: max_norm,
        scale_descent_fraction: (kind == DistillKind::ListMle)
            .then(|| descents as f64 / trials as f64),
    })
}
