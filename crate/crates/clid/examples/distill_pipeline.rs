//! The full teacher-first distillation pipeline on synthetic data: train a
//! teacher on own + context features, freeze it, distill a context-free
//! student, compare both against the plain baseline, and round-trip the
//! student through its on-disk bundle.
//!
//! ```bash
//! cargo run -p clid --example distill_pipeline
//! ```

use clid::data::SyntheticSpec;
use clid::experiment::DataSource;
use clid::loss::{DistillConfig, DistillKind};
use clid::model::{ModelBundle, ModelConfig, ModelKind};
use clid::train::{
    evaluate_params, train_student, train_teacher, TrainConfig,
};
use tempfile::tempdir;

fn main() -> anyhow::Result<()> {
    let source = DataSource::Synthetic {
        spec: SyntheticSpec {
            num_queries: 150,
            docs_min: 5,
            docs_max: 12,
            feat_dim: 8,
            context_strength: 2.0,
            seed: 9,
        },
    };
    let splits = source.load()?;
    let model = ModelConfig::default();
    let mut cfg = TrainConfig { epochs: 25, eval_every: 25, ..TrainConfig::default() };

    // The teacher sees the privileged context summary; its validation
    // LogLoss is the ceiling the student is distilled toward.
    let (teacher, teacher_log) = train_teacher(&splits, &model, &cfg)?;
    let teacher_test = evaluate_params(&teacher, &splits.test, true)?;
    println!(
        "teacher  (own+context): ndcg10 {:.4}  logloss {:.4}  ece {:.4}",
        teacher_test.ndcg_at_k, teacher_test.logloss, teacher_test.ece
    );
    println!(
        "teacher validation logloss over training: {:?}",
        teacher_log.records.iter().map(|r| (r.epoch, round4(r.report.logloss))).collect::<Vec<_>>()
    );

    let base = train_student(&splits, &model, &cfg, None)?;
    let base_test = evaluate_params(&base.student, &splits.test, false)?;
    println!(
        "base     (own only):    ndcg10 {:.4}  logloss {:.4}  ece {:.4}",
        base_test.ndcg_at_k, base_test.logloss, base_test.ece
    );

    cfg.distill = Some(DistillConfig::from_weight_ratio(DistillKind::Clid, 1.0, 1.0)?);
    let distilled = train_student(&splits, &model, &cfg, Some(&teacher))?;
    let student_test = evaluate_params(&distilled.student, &splits.test, false)?;
    println!(
        "distilled (own only):   ndcg10 {:.4}  logloss {:.4}  ece {:.4}",
        student_test.ndcg_at_k, student_test.logloss, student_test.ece
    );

    // Serving bundle round-trip: what goes to disk is what serves.
    let dir = tempdir()?;
    let bundle = ModelBundle::new(ModelKind::Student, distilled.student, None)?;
    bundle.save(dir.path())?;
    let loaded = ModelBundle::load(dir.path())?;
    assert_eq!(loaded, bundle);
    let reloaded_test = evaluate_params(&loaded.main, &splits.test, false)?;
    assert_eq!(reloaded_test, student_test);
    println!("bundle save/load round-trip: parameters and metrics identical");
    Ok(())
}

fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}
