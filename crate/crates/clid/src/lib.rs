//! Privileged-feature distillation for calibrated CTR ranking.
//!
//! Ranking models that serve click predictions usually cannot see the most
//! informative signals at inference time: position, surrounding results, and
//! other context of the original impression. This crate trains a teacher on
//! those privileged features plus the ordinary ones, then distills it into a
//! student that serves on the ordinary features alone. Its centerpiece is a
//! listwise distillation loss whose gradient vanishes exactly when the student
//! matches the teacher's click probabilities, so the transfer of ranking
//! knowledge never fights the calibration of the student's outputs. Pointwise,
//! ListNet, and ListMLE distillation plus two non-distillation baselines are
//! included for comparison, along with ranking and calibration metrics,
//! deterministic synthetic data, and an experiment runner behind the `clid`
//! binary.
//!
//! ## Examples
//!
//! The examples directory is the guided tour; each file is self-contained and
//! runs in under a second.
//!
//! ```text
//! examples/
//! ├── synthetic_data.rs       # Contextual-click generator and split files
//! ├── metrics_report.rs       # NDCG, LogLoss, ECE, grouped AUC by hand
//! ├── gradient_check.rs       # Finite-difference checks, loss and network
//! ├── compat_probe.rs         # Which losses keep a calibrated student calibrated
//! ├── distill_pipeline.rs     # Teacher, student, and checkpoint round trip
//! ├── baseline_zoo.rs         # All seven methods on one dataset
//! ├── weight_ratio_sweep.rs   # Trading distillation weight against accuracy
//! └── production_protocol.rs  # Single-pass simultaneous training
//! ```
//!
//! Start with the data and the scoreboard:
//!
//! - **`synthetic_data`** - Generate clicks with a planted context effect and
//!   write the three split files the binary consumes
//! - **`metrics_report`** - Compute every metric on a small hand-checkable
//!   batch of lists
//! - **`gradient_check`** - Verify analytic gradients of all four distillation
//!   losses and of the network itself against finite differences
//!
//! ```bash
//! cargo run -p clid --example synthetic_data
//! cargo run -p clid --example metrics_report
//! cargo run -p clid --example gradient_check
//! ```
//!
//! Then the core idea:
//!
//! - **`compat_probe`** - Feed each distillation loss a student that already
//!   matches the teacher and measure the gradient that would push it away
//! - **`distill_pipeline`** - Train a privileged teacher, distill a student,
//!   compare both against the undistilled baseline, save and reload bundles
//!
//! ```bash
//! cargo run -p clid --example compat_probe
//! cargo run -p clid --example distill_pipeline
//! ```
//!
//! And the studies:
//!
//! - **`baseline_zoo`** - Seven methods, one table
//! - **`weight_ratio_sweep`** - How the accuracy/calibration trade moves with
//!   the distillation weight
//! - **`production_protocol`** - Teacher and student trained together in one
//!   pass over the data, the way a continuously refreshed system would
//!
//! ```bash
//! cargo run -p clid --example baseline_zoo
//! cargo run -p clid --example weight_ratio_sweep
//! cargo run -p clid --example production_protocol
//! ```
//!
//! ## Quick start
//!
//! ```
//! use clid::data::SyntheticSpec;
//! use clid::experiment::DataSource;
//! use clid::loss::{DistillConfig, DistillKind};
//! use clid::model::ModelConfig;
//! use clid::train::{evaluate_params, train_student, train_teacher, TrainConfig};
//!
//! let splits = DataSource::Synthetic {
//!     spec: SyntheticSpec { num_queries: 40, ..SyntheticSpec::default() },
//! }
//! .load()?;
//!
//! let model = ModelConfig::default();
//! let cfg = TrainConfig {
//!     epochs: 3,
//!     distill: Some(DistillConfig::from_weight_ratio(DistillKind::Clid, 1.0, 1.0)?),
//!     ..TrainConfig::default()
//! };
//!
//! let (teacher, _log) = train_teacher(&splits, &model, &cfg)?;
//! let out = train_student(&splits, &model, &cfg, Some(&teacher))?;
//! let report = evaluate_params(&out.student, &splits.test, false)?;
//! println!("test NDCG@10 {:.3}, LogLoss {:.3}", report.ndcg_at_k, report.logloss);
//! # Ok::<(), clid::Error>(())
//! ```
//!
//! ## Modules
//!
//! - [`data`]: synthetic contextual-click generation, svmlight-style split
//!   files, privileged context vectors
//! - [`net`]: the small feed-forward scorer, its backward pass, and the
//!   checkpoint byte format
//! - [`loss`]: pointwise and listwise distillation losses, the mixed student
//!   objective, the calibration-compatibility probe
//! - [`metrics`]: NDCG@K, LogLoss, expected calibration error, user-grouped
//!   AUC
//! - [`model`]: model kinds and saved bundles
//! - [`train`]: training loops for every method and protocol
//! - [`experiment`]: multi-trial runs, aggregate statistics, CSV formats, the
//!   ratio sweep
//! - [`error`]: one error type for the whole crate

pub mod data;
pub mod error;
pub mod experiment;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod net;
pub mod train;

pub use error::{Error, Result};
