//! Ranking data: SVMLight-with-qid ingest, label binarization, the log1p
//! feature transform, query grouping, privileged contextual vectors, and a
//! synthetic contextual-click generator with a recoverable latent model.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};

/// One document impression.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub qid: u64,
    /// Graded relevance as read (0..=4).
    pub raw_grade: u32,
    /// Binarized click label: 1.0 iff raw_grade >= 1.
    pub label: f64,
    /// Dense feature vector; width is uniform across a dataset.
    pub features: Vec<f64>,
}

/// All samples of one query, in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryList {
    pub qid: u64,
    pub samples: Vec<Sample>,
}

impl QueryList {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Row-major feature matrix, one row per sample.
    pub fn feature_matrix(&self) -> Array2<f64> {
        let n = self.samples.len();
        let d = self.samples.first().map_or(0, |s| s.features.len());
        let mut m = Array2::zeros((n, d));
        for (i, s) in self.samples.iter().enumerate() {
            for (j, &v) in s.features.iter().enumerate() {
                m[[i, j]] = v;
            }
        }
        m
    }
}

/// A full dataset: query lists in first-appearance order, uniform width.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub lists: Vec<QueryList>,
    pub feat_dim: usize,
}

impl Dataset {
    pub fn from_samples(samples: Vec<Sample>) -> Self {
        let feat_dim = samples.first().map_or(0, |s| s.features.len());
        Dataset { lists: group_by_qid(samples), feat_dim }
    }

    pub fn num_queries(&self) -> usize {
        self.lists.len()
    }

    pub fn num_samples(&self) -> usize {
        self.lists.iter().map(|l| l.len()).sum()
    }

    pub fn samples(&self) -> impl Iterator<Item = &Sample> {
        self.lists.iter().flat_map(|l| l.samples.iter())
    }

    /// Serialize in the same text format `parse_svmlight` reads. Features
    /// are written densely (every 1-based id) with `{}` float formatting,
    /// so parsing the output reproduces the samples exactly.
    pub fn write_svmlight<W: Write>(&self, w: &mut W) -> Result<()> {
        for s in self.samples() {
            write!(w, "{} qid:{}", s.raw_grade, s.qid)?;
            for (j, v) in s.features.iter().enumerate() {
                write!(w, " {}:{}", j + 1, v)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Keep the first `count` lists, then the next, then the rest, in order;
    /// query-disjoint by construction. Counts come from largest-remainder
    /// rounding of the fractions (train, valid, rest = test).
    pub fn split_three(&self, frac_train: f64, frac_valid: f64) -> Result<(Dataset, Dataset, Dataset)> {
        let frac_test = 1.0 - frac_train - frac_valid;
        if frac_train <= 0.0 || frac_valid <= 0.0 || frac_test <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "split fractions must be positive and sum below 1, got {frac_train}/{frac_valid}"
            )));
        }
        let q = self.num_queries();
        let fracs = [frac_train, frac_valid, frac_test];
        let ideal: Vec<f64> = fracs.iter().map(|f| f * q as f64).collect();
        let mut counts: Vec<usize> = ideal.iter().map(|v| v.floor() as usize).collect();
        let mut order: Vec<usize> = (0..3).collect();
        order.sort_by(|&a, &b| {
            let ra = ideal[a] - ideal[a].floor();
            let rb = ideal[b] - ideal[b].floor();
            rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
        });
        let mut leftover = q - counts.iter().sum::<usize>();
        for &i in &order {
            if leftover == 0 {
                break;
            }
            counts[i] += 1;
            leftover -= 1;
        }
        let take = |lists: &[QueryList]| Dataset { lists: lists.to_vec(), feat_dim: self.feat_dim };
        let a = counts[0];
        let b = counts[0] + counts[1];
        Ok((take(&self.lists[..a]), take(&self.lists[a..b]), take(&self.lists[b..])))
    }
}

/// Parse SVMLight-with-qid text: `<grade> qid:<int> <fid>:<float> ...` per
/// line, `#` starts a comment, feature ids 1-based and possibly sparse.
/// Missing ids densify to 0.0 at the dataset-wide maximum width.
pub fn parse_svmlight<R: BufRead>(reader: R) -> Result<Vec<Sample>> {
    let mut sparse: Vec<(u64, u32, Vec<(usize, f64)>)> = Vec::new();
    let mut width = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let fail = |msg: String| Error::Parse { line: lineno, message: msg };
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let grade_tok = tokens.next().unwrap();
        let raw_grade: u32 = grade_tok
            .parse()
            .map_err(|_| fail(format!("bad grade {grade_tok:?}")))?;
        if raw_grade > 4 {
            return Err(fail(format!("grade {raw_grade} outside 0..=4")));
        }
        let qid_tok = tokens.next().ok_or_else(|| fail("missing qid field".into()))?;
        let qid: u64 = qid_tok
            .strip_prefix("qid:")
            .ok_or_else(|| fail(format!("expected qid:<int>, got {qid_tok:?}")))?
            .parse()
            .map_err(|_| fail(format!("bad qid in {qid_tok:?}")))?;
        let mut feats = Vec::new();
        for tok in tokens {
            let (fid, val) = tok
                .split_once(':')
                .ok_or_else(|| fail(format!("expected <fid>:<float>, got {tok:?}")))?;
            let fid: usize = fid.parse().map_err(|_| fail(format!("bad feature id in {tok:?}")))?;
            if fid == 0 {
                return Err(fail("feature ids are 1-based".into()));
            }
            let val: f64 = val.parse().map_err(|_| fail(format!("bad feature value in {tok:?}")))?;
            width = width.max(fid);
            feats.push((fid, val));
        }
        sparse.push((qid, raw_grade, feats));
    }

    Ok(sparse
        .into_iter()
        .map(|(qid, raw_grade, feats)| {
            let mut features = vec![0.0; width];
            for (fid, val) in feats {
                features[fid - 1] = val;
            }
            Sample { qid, raw_grade, label: if raw_grade >= 1 { 1.0 } else { 0.0 }, features }
        })
        .collect())
}

pub fn parse_svmlight_path(path: &Path) -> Result<Vec<Sample>> {
    parse_svmlight(BufReader::new(fs::File::open(path)?))
}

/// Elementwise sign(x) * ln(1 + |x|): monotone, odd, zero-preserving.
pub fn log1p_transform(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.signum() * v.abs().ln_1p()).collect()
}

/// One QueryList per distinct qid, in order of first appearance; within-list
/// sample order preserved from the input.
pub fn group_by_qid(samples: Vec<Sample>) -> Vec<QueryList> {
    let mut lists: Vec<QueryList> = Vec::new();
    for s in samples {
        match lists.iter_mut().find(|l| l.qid == s.qid) {
            Some(l) => l.samples.push(s),
            None => lists.push(QueryList { qid: s.qid, samples: vec![s] }),
        }
    }
    lists
}

/// Per-sample model inputs for one list: each row i of `context` is the mean
/// of the OTHER rows of `own` (zero for singleton lists), and `combined` is
/// the row-wise concatenation [own, context].
#[derive(Debug, Clone)]
pub struct RepresentationVectors {
    pub own: Array2<f64>,
    pub context: Array2<f64>,
    pub combined: Array2<f64>,
}

/// Build privileged context vectors from a list's (already transformed)
/// feature matrix.
pub fn build_privileged(features: ArrayView2<f64>) -> RepresentationVectors {
    let (n, d) = features.dim();
    let mut context = Array2::zeros((n, d));
    if n >= 2 {
        let total = features.sum_axis(Axis(0));
        let denom = (n - 1) as f64;
        for i in 0..n {
            let row = features.row(i);
            for j in 0..d {
                context[[i, j]] = (total[j] - row[j]) / denom;
            }
        }
    }
    let mut combined = Array2::zeros((n, 2 * d));
    combined.slice_mut(ndarray::s![.., ..d]).assign(&features);
    combined.slice_mut(ndarray::s![.., d..]).assign(&context);
    RepresentationVectors { own: features.to_owned(), context, combined }
}

/// One list ready for training: labels plus model input matrices.
#[derive(Debug, Clone)]
pub struct PreparedList {
    pub qid: u64,
    pub labels: Vec<f64>,
    pub reps: RepresentationVectors,
}

/// A dataset with privileged vectors built for every list.
#[derive(Debug, Clone)]
pub struct PreparedDataset {
    pub lists: Vec<PreparedList>,
    pub own_dim: usize,
}

impl PreparedDataset {
    /// Optionally apply log1p to raw features, then build per-list context
    /// vectors. Transform-before-pooling keeps own and context features on
    /// the same scale.
    pub fn prepare(data: &Dataset, transform: bool) -> Self {
        let lists = data
            .lists
            .iter()
            .map(|l| {
                let mut feats = l.feature_matrix();
                if transform {
                    feats.mapv_inplace(|v| v.signum() * v.abs().ln_1p());
                }
                PreparedList {
                    qid: l.qid,
                    labels: l.labels(),
                    reps: build_privileged(feats.view()),
                }
            })
            .collect();
        PreparedDataset { lists, own_dim: data.feat_dim }
    }

    pub fn combined_dim(&self) -> usize {
        2 * self.own_dim
    }

    pub fn num_samples(&self) -> usize {
        self.lists.iter().map(|l| l.labels.len()).sum()
    }
}

/// Parameters of the synthetic contextual-click generator.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SyntheticSpec {
    #[serde(default = "default_num_queries")]
    pub num_queries: usize,
    /// Inclusive range of documents per query.
    #[serde(default = "default_docs_min")]
    pub docs_min: usize,
    #[serde(default = "default_docs_max")]
    pub docs_max: usize,
    #[serde(default = "default_feat_dim")]
    pub feat_dim: usize,
    /// Multiplier on the contextual term of the latent click model.
    #[serde(default = "default_context_strength")]
    pub context_strength: f64,
    #[serde(default = "default_gen_seed")]
    pub seed: u64,
}

fn default_num_queries() -> usize {
    200
}

fn default_docs_min() -> usize {
    5
}

fn default_docs_max() -> usize {
    15
}

fn default_feat_dim() -> usize {
    8
}

fn default_context_strength() -> f64 {
    2.0
}

fn default_gen_seed() -> u64 {
    17
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_queries: default_num_queries(),
            docs_min: default_docs_min(),
            docs_max: default_docs_max(),
            feat_dim: default_feat_dim(),
            context_strength: default_context_strength(),
            seed: default_gen_seed(),
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_queries == 0 {
            return Err(Error::InvalidConfig("num_queries must be >= 1".into()));
        }
        if self.feat_dim < 2 {
            return Err(Error::InvalidConfig(format!(
                "feat_dim must be >= 2, got {}",
                self.feat_dim
            )));
        }
        if self.docs_min < 2 || self.docs_max < self.docs_min {
            return Err(Error::InvalidConfig(format!(
                "docs range must satisfy 2 <= min <= max, got {}..={}",
                self.docs_min, self.docs_max
            )));
        }
        if !self.context_strength.is_finite() {
            return Err(Error::InvalidConfig("context_strength must be finite".into()));
        }
        Ok(())
    }
}

/// Latent click model recorded alongside generated data so the true click
/// probability of any document is recoverable.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentModel {
    pub weights: Vec<f64>,
    pub context_weights: Vec<f64>,
    pub bias: f64,
}

/// A generated dataset together with its generator parameters.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub spec: SyntheticSpec,
    pub latent: LatentModel,
    pub dataset: Dataset,
}

impl SyntheticData {
    /// True click probabilities per list, recomputed from raw features.
    pub fn true_probs(&self) -> Vec<Vec<f64>> {
        self.dataset
            .lists
            .iter()
            .map(|l| {
                let feats = l.feature_matrix();
                let reps = build_privileged(feats.view());
                (0..l.len())
                    .map(|i| {
                        latent_prob(
                            &self.latent,
                            self.spec.context_strength,
                            reps.own.row(i).as_slice().unwrap(),
                            reps.context.row(i).as_slice().unwrap(),
                        )
                    })
                    .collect()
            })
            .collect()
    }
}

fn latent_prob(latent: &LatentModel, strength: f64, own: &[f64], ctx: &[f64]) -> f64 {
    let dot = |w: &[f64], x: &[f64]| w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    crate::net::sigmoid(dot(&latent.weights, own) + strength * dot(&latent.context_weights, ctx) + latent.bias)
}

/// Generate a contextual-click dataset. Per document, features are i.i.d.
/// standard normal and the click probability is
/// sigma(w . x_i + context_strength * w_c . mean_{j != i}(x_j) + b) with
/// w_j ~ N(0, 1/d), w_c,j ~ N(0, 9/d), b ~ U(-0.5, 0.5), all fixed by the
/// seed. The draw order (latents, then per query: list size, features,
/// label uniforms) is part of the format: a seed always reproduces the
/// dataset bit for bit.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.feat_dim;
    let own_scale = Normal::new(0.0, (1.0 / d as f64).sqrt()).expect("positive std");
    let ctx_scale = Normal::new(0.0, (9.0 / d as f64).sqrt()).expect("positive std");
    let weights: Vec<f64> = (0..d).map(|_| own_scale.sample(&mut rng)).collect();
    let context_weights: Vec<f64> = (0..d).map(|_| ctx_scale.sample(&mut rng)).collect();
    let bias: f64 = rng.random_range(-0.5..0.5);
    let latent = LatentModel { weights, context_weights, bias };

    let mut samples = Vec::new();
    for q in 0..spec.num_queries {
        let qid = q as u64 + 1;
        let n = rng.random_range(spec.docs_min..=spec.docs_max);
        let mut feats = Array2::zeros((n, d));
        for i in 0..n {
            for j in 0..d {
                feats[[i, j]] = StandardNormal.sample(&mut rng);
            }
        }
        let reps = build_privileged(feats.view());
        for i in 0..n {
            let p = latent_prob(
                &latent,
                spec.context_strength,
                reps.own.row(i).as_slice().unwrap(),
                reps.context.row(i).as_slice().unwrap(),
            );
            let y = if rng.random::<f64>() < p { 1u32 } else { 0u32 };
            samples.push(Sample {
                qid,
                raw_grade: y,
                label: y as f64,
                features: feats.row(i).to_vec(),
            });
        }
    }
    Ok(SyntheticData { spec: spec.clone(), latent, dataset: Dataset::from_samples(samples) })
}

/// Write generator metadata as key=value text. Floats use `{}` formatting,
/// which round-trips f64 exactly.
pub fn write_sidecar<W: Write>(data: &SyntheticData, w: &mut W) -> Result<()> {
    let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    writeln!(w, "seed={}", data.spec.seed)?;
    writeln!(w, "num_queries={}", data.spec.num_queries)?;
    writeln!(w, "docs_min={}", data.spec.docs_min)?;
    writeln!(w, "docs_max={}", data.spec.docs_max)?;
    writeln!(w, "feat_dim={}", data.spec.feat_dim)?;
    writeln!(w, "context_strength={}", data.spec.context_strength)?;
    writeln!(w, "bias={}", data.latent.bias)?;
    writeln!(w, "weights={}", join(&data.latent.weights))?;
    writeln!(w, "context_weights={}", join(&data.latent.context_weights))?;
    Ok(())
}

/// Parse a sidecar written by `write_sidecar`.
pub fn parse_sidecar<R: BufRead>(reader: R) -> Result<(SyntheticSpec, LatentModel)> {
    let mut kv = std::collections::HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let (k, v) = t.split_once('=').ok_or(Error::Parse {
            line: idx + 1,
            message: "expected key=value".into(),
        })?;
        kv.insert(k.to_string(), v.to_string());
    }
    let get = |k: &str| {
        kv.get(k).cloned().ok_or_else(|| Error::Data(format!("sidecar missing key {k}")))
    };
    let parse_f = |k: &str| -> Result<f64> {
        get(k)?.parse().map_err(|_| Error::Data(format!("sidecar key {k} is not a float")))
    };
    let parse_u = |k: &str| -> Result<u64> {
        get(k)?.parse().map_err(|_| Error::Data(format!("sidecar key {k} is not an integer")))
    };
    let parse_vec = |k: &str| -> Result<Vec<f64>> {
        get(k)?
            .split(',')
            .map(|t| t.parse().map_err(|_| Error::Data(format!("sidecar key {k} has a bad entry"))))
            .collect()
    };
    let spec = SyntheticSpec {
        num_queries: parse_u("num_queries")? as usize,
        docs_min: parse_u("docs_min")? as usize,
        docs_max: parse_u("docs_max")? as usize,
        feat_dim: parse_u("feat_dim")? as usize,
        context_strength: parse_f("context_strength")?,
        seed: parse_u("seed")?,
    };
    let latent = LatentModel {
        weights: parse_vec("weights")?,
        context_weights: parse_vec("context_weights")?,
        bias: parse_f("bias")?,
    };
    Ok((spec, latent))
}
