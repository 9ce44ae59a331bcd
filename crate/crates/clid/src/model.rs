//! Model configurations: the teacher (own + context input), the student
//! (own input only), and the two-tower baselines PAL and PriDropOut that
//! consume context through a shallow tower at training time only.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::net::{sigmoid, RankerParams};

/// Network widths shared by every model of one experiment.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    /// Hidden-layer widths of the main tower; teacher and student share them.
    #[serde(default = "default_hidden_dims")]
    pub hidden_dims: Vec<usize>,
    /// Width of the single hidden layer in the baselines' shallow tower.
    #[serde(default = "default_shallow_hidden")]
    pub shallow_hidden: usize,
    /// Dropout rate on the PriDropOut shallow logit.
    #[serde(default = "default_shallow_dropout")]
    pub shallow_dropout: f64,
}

fn default_hidden_dims() -> Vec<usize> {
    vec![32, 16]
}

fn default_shallow_hidden() -> usize {
    32
}

fn default_shallow_dropout() -> f64 {
    0.5
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden_dims: default_hidden_dims(),
            shallow_hidden: default_shallow_hidden(),
            shallow_dropout: default_shallow_dropout(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidConfig("hidden layer widths must be >= 1".into()));
        }
        if self.shallow_hidden == 0 {
            return Err(Error::InvalidConfig("shallow tower width must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.shallow_dropout) {
            return Err(Error::InvalidConfig(format!(
                "shallow dropout must be in [0, 1), got {}",
                self.shallow_dropout
            )));
        }
        Ok(())
    }

    /// Student and Base network dims over the own-feature width.
    pub fn student_dims(&self, own_dim: usize) -> Vec<usize> {
        let mut dims = vec![own_dim];
        dims.extend_from_slice(&self.hidden_dims);
        dims.push(1);
        dims
    }

    /// Teacher dims over the concatenated own + context width; hidden layers
    /// match the student's so the comparison is architecture-controlled.
    pub fn teacher_dims(&self, combined_dim: usize) -> Vec<usize> {
        let mut dims = vec![combined_dim];
        dims.extend_from_slice(&self.hidden_dims);
        dims.push(1);
        dims
    }

    /// Shallow context tower: one hidden layer then a scalar logit.
    pub fn shallow_dims(&self, context_dim: usize) -> Vec<usize> {
        vec![context_dim, self.shallow_hidden, 1]
    }
}

/// Probabilities of a teacher network over combined own + context inputs.
pub fn score_teacher(params: &RankerParams, combined: ArrayView2<f64>) -> Result<Array1<f64>> {
    if combined.ncols() != params.input_dim() {
        return Err(Error::Shape(format!(
            "teacher expects {} input features (own + context), got {}",
            params.input_dim(),
            combined.ncols()
        )));
    }
    Ok(params.forward(combined)?.probs)
}

/// Probabilities of a student (or Base) network over own features only.
pub fn score_student(params: &RankerParams, own: ArrayView2<f64>) -> Result<Array1<f64>> {
    if own.ncols() != params.input_dim() {
        return Err(Error::Shape(format!(
            "student expects {} input features, got {}",
            params.input_dim(),
            own.ncols()
        )));
    }
    Ok(params.forward(own)?.probs)
}

/// Whether a privileged-context tower participates in scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Serve,
}

/// PAL scoring: training multiplies the shallow tower's probability into the
/// main tower's; serving drops the shallow tower entirely.
pub fn score_pal(
    main: &RankerParams,
    shallow: &RankerParams,
    own: ArrayView2<f64>,
    context: ArrayView2<f64>,
    mode: Mode,
) -> Result<Array1<f64>> {
    let main_probs = score_student(main, own)?;
    match mode {
        Mode::Serve => Ok(main_probs),
        Mode::Train => {
            let shallow_probs = shallow.forward(context)?.probs;
            if shallow_probs.len() != main_probs.len() {
                return Err(Error::Shape("own and context batches differ in length".into()));
            }
            Ok((&main_probs * &shallow_probs).mapv(|p| p.max(f64::MIN_POSITIVE)))
        }
    }
}

/// PriDropOut scoring: training adds a dropped-out shallow logit (inverted
/// scaling, so kept logits are divided by 1 - rate) to the main logit;
/// serving uses the main logit alone. Mask draws are fixed by `seed`; with
/// rate 0 the rng is never consulted and the sum is exact.
pub fn score_pridropout(
    main: &RankerParams,
    shallow: &RankerParams,
    own: ArrayView2<f64>,
    context: ArrayView2<f64>,
    mode: Mode,
    dropout_rate: f64,
    seed: u64,
) -> Result<Array1<f64>> {
    if !(0.0..1.0).contains(&dropout_rate) {
        return Err(Error::InvalidConfig(format!(
            "dropout rate must be in [0, 1), got {dropout_rate}"
        )));
    }
    let main_trace = main.forward(own)?;
    match mode {
        Mode::Serve => Ok(main_trace.probs),
        Mode::Train => {
            let shallow_logits = shallow.forward(context)?.logits;
            if shallow_logits.len() != main_trace.logits.len() {
                return Err(Error::Shape("own and context batches differ in length".into()));
            }
            let masks = pridropout_masks(shallow_logits.len(), dropout_rate, seed);
            Ok(Array1::from_iter(
                main_trace
                    .logits
                    .iter()
                    .zip(shallow_logits.iter())
                    .zip(masks)
                    .map(|((&m, &s), mask)| sigmoid(m + mask * s)),
            ))
        }
    }
}

/// Per-sample dropout factors for the shallow logit: 0 or 1/(1 - rate).
pub(crate) fn pridropout_masks(n: usize, rate: f64, seed: u64) -> Vec<f64> {
    if rate == 0.0 {
        return vec![1.0; n];
    }
    let keep = 1.0 - rate;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect()
}

/// Which composition a saved model bundle holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Base,
    Teacher,
    Student,
    Pal,
    PriDropout,
}

impl ModelKind {
    fn has_shallow(self) -> bool {
        matches!(self, ModelKind::Pal | ModelKind::PriDropout)
    }

    /// Teacher networks read combined own + context features; everything
    /// else serves from own features alone.
    pub fn serves_on_combined(self) -> bool {
        matches!(self, ModelKind::Teacher)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ModelKind::Base => "base",
            ModelKind::Teacher => "teacher",
            ModelKind::Student => "student",
            ModelKind::Pal => "pal",
            ModelKind::PriDropout => "pridropout",
        };
        f.write_str(s)
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "base" => Ok(ModelKind::Base),
            "teacher" => Ok(ModelKind::Teacher),
            "student" => Ok(ModelKind::Student),
            "pal" => Ok(ModelKind::Pal),
            "pridropout" => Ok(ModelKind::PriDropout),
            other => Err(Error::InvalidConfig(format!("unknown model kind {other:?}"))),
        }
    }
}

/// A trained model on disk: one checkpoint per tower plus a manifest naming
/// the composition.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub kind: ModelKind,
    pub main: RankerParams,
    pub shallow: Option<RankerParams>,
}

const MANIFEST: &str = "manifest.txt";
const MAIN_FILE: &str = "main.pfdr";
const SHALLOW_FILE: &str = "shallow.pfdr";

impl ModelBundle {
    pub fn new(kind: ModelKind, main: RankerParams, shallow: Option<RankerParams>) -> Result<Self> {
        if kind.has_shallow() != shallow.is_some() {
            return Err(Error::InvalidConfig(format!(
                "model kind {kind} {} a shallow tower",
                if kind.has_shallow() { "requires" } else { "does not take" }
            )));
        }
        Ok(ModelBundle { kind, main, shallow })
    }

    /// Serve-time probabilities. Teacher bundles read the combined matrix;
    /// all other kinds read own features only.
    pub fn serve_probs(&self, own: ArrayView2<f64>, combined: ArrayView2<f64>) -> Result<Array1<f64>> {
        if self.kind.serves_on_combined() {
            score_teacher(&self.main, combined)
        } else {
            score_student(&self.main, own)
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut manifest = format!("kind={}\nmain={MAIN_FILE}\n", self.kind);
        self.main.save(&dir.join(MAIN_FILE))?;
        if let Some(shallow) = &self.shallow {
            shallow.save(&dir.join(SHALLOW_FILE))?;
            manifest.push_str(&format!("shallow={SHALLOW_FILE}\n"));
        }
        fs::write(dir.join(MANIFEST), manifest)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = fs::read_to_string(dir.join(MANIFEST))
            .map_err(|e| Error::Checkpoint(format!("cannot read model manifest: {e}")))?;
        let mut kind = None;
        let mut main_file = None;
        let mut shallow_file = None;
        for line in manifest.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            match line.split_once('=') {
                Some(("kind", v)) => kind = Some(v.parse::<ModelKind>()?),
                Some(("main", v)) => main_file = Some(v.to_string()),
                Some(("shallow", v)) => shallow_file = Some(v.to_string()),
                _ => return Err(Error::Checkpoint(format!("bad manifest line {line:?}"))),
            }
        }
        let kind = kind.ok_or_else(|| Error::Checkpoint("manifest missing kind".into()))?;
        let main_file =
            main_file.ok_or_else(|| Error::Checkpoint("manifest missing main tower".into()))?;
        let main = RankerParams::load(&dir.join(main_file))?;
        let shallow = shallow_file.map(|f| RankerParams::load(&dir.join(f))).transpose()?;
        Self::new(kind, main, shallow)
    }
}
