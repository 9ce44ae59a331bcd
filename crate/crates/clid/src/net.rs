//! Feed-forward scoring network: fully connected layers with PReLU hidden
//! activations, a scalar logit output, and a sigmoid head.
//!
//! All math is `f64`. Forward passes record a trace so that `backward` can
//! return exact analytic gradients for every parameter, including the
//! learnable PReLU slopes.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Checkpoint file magic.
const MAGIC: &[u8; 4] = b"PFDR";
/// Checkpoint format version.
const VERSION: u8 = 1;
/// Initial PReLU slope for every hidden layer.
const INIT_SLOPE: f64 = 0.25;
/// Epsilon inside the batch-standardization denominator.
const BN_EPS: f64 = 1e-5;

/// Numerically stable logistic function.
///
/// The result is clamped to `[f64::MIN_POSITIVE, 1 - 2^-53]`: for |x| large
/// enough, f64 rounding would otherwise produce exactly 0.0 or 1.0, and every
/// consumer in this crate relies on probabilities staying inside the open
/// interval (0, 1). The clamp moves saturated values by at most one ulp.
pub fn sigmoid(x: f64) -> f64 {
    let p = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Options that change the forward pass during training only.
///
/// Both default to off; evaluation and serving always run with the defaults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardOptions {
    /// Probability of zeroing each hidden activation. Surviving activations
    /// are scaled by 1/(1-rate) so expectations match the plain forward pass.
    pub dropout_rate: f64,
    /// Standardize each hidden pre-activation across the batch (zero mean,
    /// unit variance per unit). Parameter-free, so checkpoints are unaffected.
    pub batch_norm: bool,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        ForwardOptions { dropout_rate: 0.0, batch_norm: false }
    }
}

impl ForwardOptions {
    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidConfig(format!(
                "dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

/// All learnable state of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct RankerParams {
    /// Layer widths, input first; the last entry is always 1.
    dims: Vec<usize>,
    /// One weight matrix per layer, shaped (out, in).
    weights: Vec<Array2<f64>>,
    /// One bias vector per layer, shaped (out,).
    biases: Vec<Array1<f64>>,
    /// One PReLU slope per hidden layer.
    slopes: Vec<f64>,
}

/// Per-hidden-layer part of a forward trace.
#[derive(Debug, Clone)]
struct LayerTrace {
    /// Input to the PReLU: the pre-activation, standardized when batch_norm
    /// was on (in which case this is exactly the normalized value x_hat).
    act_in: Array2<f64>,
    /// Layer output after PReLU and dropout; input to the next layer.
    out: Array2<f64>,
    /// Dropout mask holding 0 or 1/(1-rate) per entry; None without dropout.
    mask: Option<Array2<f64>>,
    /// 1/sqrt(var + eps) per unit; None without batch norm.
    bn_inv_std: Option<Array1<f64>>,
}

/// Everything `backward` needs, captured during a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    input: Array2<f64>,
    hidden: Vec<LayerTrace>,
    /// Scalar pre-sigmoid output per row.
    pub logits: Array1<f64>,
    /// sigmoid(logits), strictly inside (0, 1).
    pub probs: Array1<f64>,
}

/// Gradients mirroring `RankerParams` shapes.
#[derive(Debug, Clone)]
pub struct ParamGrads {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub slopes: Vec<f64>,
}

impl ParamGrads {
    /// Largest absolute entry across all gradients.
    pub fn inf_norm(&self) -> f64 {
        let mut m: f64 = 0.0;
        for w in &self.weights {
            for v in w.iter() {
                m = m.max(v.abs());
            }
        }
        for b in &self.biases {
            for v in b.iter() {
                m = m.max(v.abs());
            }
        }
        for s in &self.slopes {
            m = m.max(s.abs());
        }
        m
    }

    /// True when every gradient entry is finite.
    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
            && self.slopes.iter().all(|s| s.is_finite())
    }
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least input and output dims, got {:?}",
            dims
        )));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::InvalidConfig(format!("zero-width layer in {:?}", dims)));
    }
    if *dims.last().unwrap() != 1 {
        return Err(Error::InvalidConfig(format!(
            "output layer must have width 1, got {:?}",
            dims
        )));
    }
    Ok(())
}

impl RankerParams {
    /// Fresh parameters: weights ~ Normal(0, 1/fan_in) drawn row-major layer
    /// by layer from a ChaCha8 stream, biases zero, slopes 0.25. The draw
    /// order is fixed so a (dims, seed) pair always yields identical bytes.
    pub fn init(dims: &[usize], seed: u64) -> Result<Self> {
        validate_dims(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(dims.len() - 1);
        let mut biases = Vec::with_capacity(dims.len() - 1);
        for l in 0..dims.len() - 1 {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let normal = Normal::new(0.0, (1.0 / fan_in as f64).sqrt())
                .expect("positive std");
            let data: Vec<f64> = (0..fan_out * fan_in)
                .map(|_| normal.sample(&mut rng))
                .collect();
            weights.push(Array2::from_shape_vec((fan_out, fan_in), data).unwrap());
            biases.push(Array1::zeros(fan_out));
        }
        let slopes = vec![INIT_SLOPE; dims.len().saturating_sub(2)];
        Ok(RankerParams { dims: dims.to_vec(), weights, biases, slopes })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    /// Deterministic forward pass (no dropout, no batch norm).
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<ForwardTrace> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        self.forward_with(x, &ForwardOptions::default(), &mut rng)
    }

    /// Forward pass with training-time options. Dropout draws come from
    /// `rng`; with `dropout_rate == 0` the rng is never touched.
    pub fn forward_with(
        &self,
        x: ArrayView2<f64>,
        opts: &ForwardOptions,
        rng: &mut impl Rng,
    ) -> Result<ForwardTrace> {
        opts.validate()?;
        if x.ncols() != self.dims[0] {
            return Err(Error::Shape(format!(
                "input has {} features, network expects {}",
                x.ncols(),
                self.dims[0]
            )));
        }
        if x.nrows() == 0 {
            return Err(Error::Data("empty batch".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite input feature".into()));
        }

        let mut hidden = Vec::with_capacity(self.num_layers() - 1);
        let mut cur = x.to_owned();
        for l in 0..self.num_layers() - 1 {
            let z = cur.dot(&self.weights[l].t()) + &self.biases[l];
            let (act_in, bn_inv_std) = if opts.batch_norm {
                let mean = z.mean_axis(Axis(0)).unwrap();
                let centered = &z - &mean;
                let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).unwrap();
                let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
                (&centered * &inv_std, Some(inv_std))
            } else {
                (z, None)
            };
            let slope = self.slopes[l];
            let mut a = act_in.mapv(|v| if v > 0.0 { v } else { slope * v });
            let mask = if opts.dropout_rate > 0.0 {
                let keep = 1.0 - opts.dropout_rate;
                let scale = 1.0 / keep;
                let mask = Array2::from_shape_fn(a.dim(), |_| {
                    if rng.random::<f64>() < keep {
                        scale
                    } else {
                        0.0
                    }
                });
                a = &a * &mask;
                Some(mask)
            } else {
                None
            };
            hidden.push(LayerTrace { act_in, out: a.clone(), mask, bn_inv_std });
            cur = a;
        }

        let last = self.num_layers() - 1;
        let z = cur.dot(&self.weights[last].t()) + &self.biases[last];
        let logits = z.column(0).to_owned();
        let probs = logits.mapv(sigmoid);
        Ok(ForwardTrace { input: x.to_owned(), hidden, logits, probs })
    }

    /// Backpropagate `dl_dlogit` (dL/dlogit per row) through a trace captured
    /// on these parameters. Dropout masks and batch statistics recorded in
    /// the trace are reused, so the gradients match that exact forward pass.
    pub fn backward(&self, trace: &ForwardTrace, dl_dlogit: &[f64]) -> Result<ParamGrads> {
        let m = trace.input.nrows();
        if dl_dlogit.len() != m {
            return Err(Error::Shape(format!(
                "dl_dlogit has {} entries for a batch of {}",
                dl_dlogit.len(),
                m
            )));
        }
        if trace.hidden.len() != self.num_layers() - 1 {
            return Err(Error::Shape("trace does not match network depth".into()));
        }

        let mut gw: Vec<Array2<f64>> = Vec::with_capacity(self.num_layers());
        let mut gb: Vec<Array1<f64>> = Vec::with_capacity(self.num_layers());
        let mut gs = vec![0.0; self.slopes.len()];

        // Final layer: delta is dl_dlogit as a column.
        let last = self.num_layers() - 1;
        let delta = Array2::from_shape_vec((m, 1), dl_dlogit.to_vec()).unwrap();
        let last_in: ArrayView2<f64> = if last == 0 {
            trace.input.view()
        } else {
            trace.hidden[last - 1].out.view()
        };
        gw.push(delta.t().dot(&last_in));
        gb.push(delta.sum_axis(Axis(0)));
        let mut upstream = delta.dot(&self.weights[last]);

        for l in (0..self.num_layers() - 1).rev() {
            let lt = &trace.hidden[l];
            let mut da = upstream;
            if let Some(mask) = &lt.mask {
                da = &da * mask;
            }
            // PReLU: slope gradient collects da * act_in over non-positive
            // pre-activations; da itself scales by 1 or slope.
            let slope = self.slopes[l];
            let mut dz = da.clone();
            let mut slope_grad = 0.0;
            ndarray::Zip::from(&mut dz).and(&lt.act_in).for_each(|g, &z| {
                if z <= 0.0 {
                    slope_grad += *g * z;
                    *g *= slope;
                }
            });
            gs[l] = slope_grad;
            let dz = if let Some(inv_std) = &lt.bn_inv_std {
                // Backward through x_hat = (z - mean) / sqrt(var + eps):
                // dz = inv_std * (dy - mean(dy) - x_hat * mean(dy * x_hat)).
                let rows = dz.nrows() as f64;
                let dy_mean = dz.sum_axis(Axis(0)) / rows;
                let proj = (&dz * &lt.act_in).sum_axis(Axis(0)) / rows;
                ((&dz - &dy_mean) - &(&lt.act_in * &proj)) * inv_std
            } else {
                dz
            };
            let layer_in: ArrayView2<f64> = if l == 0 {
                trace.input.view()
            } else {
                trace.hidden[l - 1].out.view()
            };
            gw.push(dz.t().dot(&layer_in));
            gb.push(dz.sum_axis(Axis(0)));
            upstream = dz.dot(&self.weights[l]);
        }

        gw.reverse();
        gb.reverse();
        Ok(ParamGrads { weights: gw, biases: gb, slopes: gs })
    }

    /// One SGD step: p <- p - lr * (g + weight_decay * p). Decay applies to
    /// weight matrices only, never to biases or PReLU slopes.
    pub fn sgd_step(&mut self, grads: &ParamGrads, lr: f64, weight_decay: f64) -> Result<()> {
        if lr <= 0.0 || !lr.is_finite() {
            return Err(Error::InvalidConfig(format!("learning rate must be positive, got {lr}")));
        }
        if weight_decay < 0.0 || !weight_decay.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "weight decay must be non-negative, got {weight_decay}"
            )));
        }
        if grads.weights.len() != self.weights.len() || grads.slopes.len() != self.slopes.len() {
            return Err(Error::Shape("gradient layout does not match parameters".into()));
        }
        if !grads.is_finite() {
            return Err(Error::Data("non-finite gradient in sgd step".into()));
        }
        for (w, g) in self.weights.iter_mut().zip(&grads.weights) {
            if w.dim() != g.dim() {
                return Err(Error::Shape("weight gradient shape mismatch".into()));
            }
            ndarray::Zip::from(w).and(g).for_each(|p, &gv| {
                *p -= lr * (gv + weight_decay * *p);
            });
        }
        for (b, g) in self.biases.iter_mut().zip(&grads.biases) {
            if b.len() != g.len() {
                return Err(Error::Shape("bias gradient shape mismatch".into()));
            }
            ndarray::Zip::from(b).and(g).for_each(|p, &gv| {
                *p -= lr * gv;
            });
        }
        for (s, g) in self.slopes.iter_mut().zip(&grads.slopes) {
            *s -= lr * g;
        }
        Ok(())
    }

    /// Serialize to the binary checkpoint layout: magic "PFDR", version byte,
    /// u32-LE dim count and dims, all weight matrices row-major as f64 LE in
    /// layer order, then all biases, then all PReLU slopes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for w in &self.weights {
            for v in w.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        for b in &self.biases {
            for v in b.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        for s in &self.slopes {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out
    }

    /// Inverse of `to_bytes`, validating magic, version, and total length.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fail = |msg: &str| Error::Checkpoint(msg.to_string());
        if bytes.len() < 9 {
            return Err(fail("file too short"));
        }
        if &bytes[0..4] != MAGIC {
            return Err(fail("bad magic, not a ranker checkpoint"));
        }
        if bytes[4] != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {} (expected {})",
                bytes[4], VERSION
            )));
        }
        let n_dims = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let mut off = 9;
        if bytes.len() < off + 4 * n_dims {
            return Err(fail("truncated dim table"));
        }
        let mut dims = Vec::with_capacity(n_dims);
        for _ in 0..n_dims {
            dims.push(u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize);
            off += 4;
        }
        validate_dims(&dims).map_err(|e| Error::Checkpoint(e.to_string()))?;

        let n_weights: usize = (0..dims.len() - 1).map(|l| dims[l] * dims[l + 1]).sum();
        let n_biases: usize = dims[1..].iter().sum();
        let n_slopes = dims.len() - 2;
        let expect = off + 8 * (n_weights + n_biases + n_slopes);
        if bytes.len() != expect {
            return Err(Error::Checkpoint(format!(
                "expected {} bytes for dims {:?}, got {}",
                expect,
                dims,
                bytes.len()
            )));
        }
        let read_f64 = |off: &mut usize| {
            let v = f64::from_le_bytes(bytes[*off..*off + 8].try_into().unwrap());
            *off += 8;
            v
        };
        let mut weights = Vec::with_capacity(dims.len() - 1);
        for l in 0..dims.len() - 1 {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let data: Vec<f64> = (0..fan_out * fan_in).map(|_| read_f64(&mut off)).collect();
            weights.push(Array2::from_shape_vec((fan_out, fan_in), data).unwrap());
        }
        let mut biases = Vec::with_capacity(dims.len() - 1);
        for l in 0..dims.len() - 1 {
            let data: Vec<f64> = (0..dims[l + 1]).map(|_| read_f64(&mut off)).collect();
            biases.push(Array1::from_vec(data));
        }
        let slopes: Vec<f64> = (0..n_slopes).map(|_| read_f64(&mut off)).collect();
        if weights.iter().any(|w| w.iter().any(|v| !v.is_finite()))
            || biases.iter().any(|b| b.iter().any(|v| !v.is_finite()))
            || slopes.iter().any(|s| !s.is_finite())
        {
            return Err(fail("non-finite parameter value"));
        }
        Ok(RankerParams { dims, weights, biases, slopes })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::from_bytes(&bytes)
    }

    #[cfg(test)]
    pub(crate) fn set_layer(&mut self, l: usize, weights: Array2<f64>, bias: Array1<f64>) {
        self.weights[l] = weights;
        self.biases[l] = bias;
    }

    #[cfg(test)]
    pub(crate) fn weight(&self, l: usize, r: usize, c: usize) -> f64 {
        self.weights[l][[r, c]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    #[test]
    fn sigmoid_anchors() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_relative_eq!(sigmoid(1.0), 0.7310585786300049, max_relative = 1e-15);
        assert_relative_eq!(sigmoid(-1.0), 1.0 - 0.7310585786300049, max_relative = 1e-15);
    }

    #[test]
    fn sigmoid_stays_inside_open_interval() {
        for x in [-1e6, -745.0, -40.0, 0.0, 37.0, 745.0, 1e6] {
            let p = sigmoid(x);
            assert!(p > 0.0 && p < 1.0, "sigmoid({x}) = {p} escaped (0,1)");
        }
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let a = RankerParams::init(&[8, 16, 1], 42).unwrap();
        let b = RankerParams::init(&[8, 16, 1], 42).unwrap();
        let c = RankerParams::init(&[8, 16, 1], 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn init_statistics_match_fan_in_scaling() {
        let p = RankerParams::init(&[50, 40, 1], 7).unwrap();
        let w = &p.weights[0];
        let n = w.len() as f64;
        let mean = w.sum() / n;
        let var = w.mapv(|v| (v - mean) * (v - mean)).sum() / n;
        let target = 1.0 / 50.0;
        assert!(var > 0.5 * target && var < 2.0 * target, "var {var} vs target {target}");
        assert!(p.biases.iter().all(|b| b.iter().all(|&v| v == 0.0)));
        assert_eq!(p.slopes, vec![INIT_SLOPE]);
    }

    #[test]
    fn init_rejects_bad_dims() {
        assert!(RankerParams::init(&[4], 0).is_err());
        assert!(RankerParams::init(&[4, 0, 1], 0).is_err());
        assert!(RankerParams::init(&[4, 3, 2], 0).is_err());
    }

    #[test]
    fn forward_matches_hand_computation() {
        // Single linear layer: logit = x . [1, 1] - 1.
        let mut p = RankerParams::init(&[2, 1], 0).unwrap();
        p.set_layer(0, array![[1.0, 1.0]], array![-1.0]);
        let t = p.forward(array![[1.0, 1.0], [0.5, 0.0]].view()).unwrap();
        assert_eq!(t.logits[0], 1.0);
        assert_relative_eq!(t.probs[0], 0.7310585786300049, max_relative = 1e-15);
        assert_eq!(t.logits[1], -0.5);
    }

    #[test]
    fn prelu_uses_learned_slope_on_negative_side() {
        // dims [1,1,1], weights 1, biases 0, slope 0.25:
        // x = -2 -> z = -2 -> a = -0.5 -> logit = -0.5.
        let mut p = RankerParams::init(&[1, 1, 1], 0).unwrap();
        p.set_layer(0, array![[1.0]], array![0.0]);
        p.set_layer(1, array![[1.0]], array![0.0]);
        let t = p.forward(array![[-2.0]].view()).unwrap();
        assert_eq!(t.logits[0], -0.5);
        assert_relative_eq!(t.probs[0], sigmoid(-0.5), max_relative = 1e-15);
    }

    #[test]
    fn forward_rejects_bad_input() {
        let p = RankerParams::init(&[3, 1], 0).unwrap();
        assert!(p.forward(Array2::zeros((2, 2)).view()).is_err());
        assert!(p.forward(Array2::zeros((0, 3)).view()).is_err());
        assert!(p.forward(array![[1.0, f64::NAN, 0.0]].view()).is_err());
    }

    /// Finite-difference check of `backward` against the scalar objective
    /// L = sum_i c_i * logit_i, whose parameter gradient is exactly what
    /// backward(c) returns.
    fn fd_check(opts: ForwardOptions, batch: usize, tol: f64) {
        let dims = [3, 4, 2, 1];
        let params = RankerParams::init(&dims, 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Array2::from_shape_fn((batch, 3), |_| rng.random::<f64>() * 2.0 - 1.0);
        let c: Vec<f64> = (0..batch).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();

        let objective = |p: &RankerParams| -> f64 {
            let mut r = ChaCha8Rng::seed_from_u64(99);
            let t = p.forward_with(x.view(), &opts, &mut r).unwrap();
            t.logits.iter().zip(&c).map(|(l, ci)| l * ci).sum()
        };

        let mut r = ChaCha8Rng::seed_from_u64(99);
        let trace = params.forward_with(x.view(), &opts, &mut r).unwrap();
        let grads = params.backward(&trace, &c).unwrap();

        let h = 1e-6;
        let check = |get: &dyn Fn(&RankerParams) -> f64,
                         set: &dyn Fn(&mut RankerParams, f64),
                         analytic: f64,
                         what: &str| {
            let base = get(&params);
            let mut p_hi = params.clone();
            set(&mut p_hi, base + h);
            let mut p_lo = params.clone();
            set(&mut p_lo, base - h);
            let fd = (objective(&p_hi) - objective(&p_lo)) / (2.0 * h);
            // Near-zero gradients (e.g. hidden biases cancelled by batch
            // standardization) sit below central-difference noise; accept
            // them on absolute error.
            if (fd - analytic).abs() < 1e-8 {
                return;
            }
            let denom = fd.abs().max(analytic.abs());
            assert!(
                ((fd - analytic) / denom).abs() < tol,
                "{what}: fd {fd} vs analytic {analytic}"
            );
        };

        for l in 0..dims.len() - 1 {
            for r0 in 0..dims[l + 1] {
                for c0 in 0..dims[l] {
                    check(
                        &|p| p.weights[l][[r0, c0]],
                        &|p, v| p.weights[l][[r0, c0]] = v,
                        grads.weights[l][[r0, c0]],
                        &format!("w[{l}][{r0},{c0}]"),
                    );
                }
            }
            for r0 in 0..dims[l + 1] {
                check(
                    &|p| p.biases[l][r0],
                    &|p, v| p.biases[l][r0] = v,
                    grads.biases[l][r0],
                    &format!("b[{l}][{r0}]"),
                );
            }
        }
        for l in 0..dims.len() - 2 {
            check(
                &|p| p.slopes[l],
                &|p, v| p.slopes[l] = v,
                grads.slopes[l],
                &format!("slope[{l}]"),
            );
        }
    }

    #[test]
    fn backward_matches_finite_differences_plain() {
        fd_check(ForwardOptions::default(), 5, 1e-5);
    }

    #[test]
    fn backward_matches_finite_differences_with_dropout() {
        // The fd objective reseeds the dropout stream on every call, so the
        // masks are identical across perturbations.
        fd_check(ForwardOptions { dropout_rate: 0.4, batch_norm: false }, 6, 1e-5);
    }

    #[test]
    fn backward_matches_finite_differences_with_batch_norm() {
        fd_check(ForwardOptions { dropout_rate: 0.0, batch_norm: true }, 6, 1e-4);
    }

    #[test]
    fn dropout_zeroes_and_rescales() {
        let p = RankerParams::init(&[4, 64, 1], 3).unwrap();
        let x = Array2::from_elem((1, 4), 0.5);
        let opts = ForwardOptions { dropout_rate: 0.5, batch_norm: false };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = p.forward_with(x.view(), &opts, &mut rng).unwrap();
        let mask = t.hidden[0].mask.as_ref().unwrap();
        assert!(mask.iter().all(|&m| m == 0.0 || m == 2.0));
        assert!(mask.iter().any(|&m| m == 0.0));
        assert!(mask.iter().any(|&m| m == 2.0));
    }

    #[test]
    fn batch_norm_standardizes_preactivations() {
        let p = RankerParams::init(&[3, 8, 1], 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Array2::from_shape_fn((32, 3), |_| rng.random::<f64>() * 4.0);
        let opts = ForwardOptions { dropout_rate: 0.0, batch_norm: true };
        let t = p.forward_with(x.view(), &opts, &mut rng).unwrap();
        let h = &t.hidden[0].act_in;
        for col in h.axis_iter(Axis(1)) {
            let mean = col.sum() / col.len() as f64;
            let var = col.mapv(|v| (v - mean) * (v - mean)).sum() / col.len() as f64;
            assert!(mean.abs() < 1e-12);
            assert_relative_eq!(var, 1.0, epsilon = 1e-3);
        }
    }

    #[test]
    fn sgd_step_anchors() {
        // w=1, g=0.05, lr=1, wd=0 -> 0.95; then w=1, g=0, lr=0.01, wd=0.01 -> 0.9999.
        let mut p = RankerParams::init(&[1, 1], 0).unwrap();
        p.set_layer(0, array![[1.0]], array![0.0]);
        let g = ParamGrads {
            weights: vec![array![[0.05]]],
            biases: vec![array![0.0]],
            slopes: vec![],
        };
        p.sgd_step(&g, 1.0, 0.0).unwrap();
        assert_eq!(p.weight(0, 0, 0), 0.95);

        p.set_layer(0, array![[1.0]], array![0.0]);
        let g0 = ParamGrads {
            weights: vec![array![[0.0]]],
            biases: vec![array![0.0]],
            slopes: vec![],
        };
        p.sgd_step(&g0, 0.01, 0.01).unwrap();
        assert_relative_eq!(p.weight(0, 0, 0), 0.9999, max_relative = 1e-15);
    }

    #[test]
    fn sgd_step_decay_skips_biases_and_slopes() {
        let mut p = RankerParams::init(&[1, 1, 1], 0).unwrap();
        p.set_layer(0, array![[0.0]], array![2.0]);
        p.set_layer(1, array![[0.0]], array![0.0]);
        let g = ParamGrads {
            weights: vec![array![[0.0]], array![[0.0]]],
            biases: vec![array![0.0], array![0.0]],
            slopes: vec![0.0],
        };
        p.sgd_step(&g, 0.5, 0.1).unwrap();
        assert_eq!(p.biases[0][0], 2.0);
        assert_eq!(p.slopes[0], INIT_SLOPE);
    }

    #[test]
    fn sgd_step_rejects_non_finite_gradients() {
        let mut p = RankerParams::init(&[2, 1], 0).unwrap();
        let g = ParamGrads {
            weights: vec![array![[f64::NAN, 0.0]]],
            biases: vec![array![0.0]],
            slopes: vec![],
        };
        assert!(p.sgd_step(&g, 0.1, 0.0).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let p = RankerParams::init(&[7, 16, 8, 1], 1234).unwrap();
        let q = RankerParams::from_bytes(&p.to_bytes()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let p = RankerParams::init(&[3, 4, 1], 5).unwrap();
        let good = p.to_bytes();

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(RankerParams::from_bytes(&bad_magic), Err(Error::Checkpoint(_))));

        let mut bad_version = good.clone();
        bad_version[4] = 9;
        assert!(matches!(RankerParams::from_bytes(&bad_version), Err(Error::Checkpoint(_))));

        let truncated = &good[..good.len() - 3];
        assert!(matches!(RankerParams::from_bytes(truncated), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn checkpoint_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ranker.pfdr");
        let p = RankerParams::init(&[5, 8, 1], 77).unwrap();
        p.save(&path).unwrap();
        let q = RankerParams::load(&path).unwrap();
        assert_eq!(p, q);
    }
}
