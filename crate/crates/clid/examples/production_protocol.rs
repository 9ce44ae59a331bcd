//! The simultaneous training protocol: teacher and student update together,
//! one batch at a time, with the student distilling from the teacher's
//! just-updated predictions. This is the single-pass regime of systems that
//! cannot afford a separate teacher convergence phase.
//!
//! ```bash
//! cargo run -p clid --example production_protocol
//! ```

use clid::data::SyntheticSpec;
use clid::experiment::DataSource;
use clid::loss::{DistillConfig, DistillKind};
use clid::model::ModelConfig;
use clid::train::{
    evaluate_params, init_teacher, train_student, Protocol, TrainConfig,
};

fn main() -> anyhow::Result<()> {
    let source = DataSource::Synthetic {
        spec: SyntheticSpec {
            num_queries: 300,
            docs_min: 5,
            docs_max: 12,
            feat_dim: 8,
            context_strength: 2.0,
            seed: 31,
        },
    };
    let splits = source.load()?;
    let model = ModelConfig::default();

    // One epoch, as a streaming system would see the data roughly once.
    let cfg = TrainConfig {
        protocol: Protocol::Simultaneous,
        epochs: 1,
        batch_lists: 8,
        distill: Some(DistillConfig::from_weight_ratio(DistillKind::Clid, 1.0, 1.0)?),
        eval_every: 1,
        ..TrainConfig::default()
    };

    let start = init_teacher(&model, &splits, cfg.seed)?;
    let outcome = train_student(&splits, &model, &cfg, Some(&start))?;
    let teacher = outcome.teacher.expect("simultaneous training returns the teacher");

    let student_test = evaluate_params(&outcome.student, &splits.test, false)?;
    let teacher_test = evaluate_params(&teacher, &splits.test, true)?;
    println!(
        "after one joint epoch ({} train lists, batches of {}):",
        splits.train.lists.len(),
        cfg.batch_lists
    );
    println!(
        "  teacher (own+context): ndcg10 {:.4}  logloss {:.4}",
        teacher_test.ndcg_at_k, teacher_test.logloss
    );
    println!(
        "  student (own only):    ndcg10 {:.4}  logloss {:.4}",
        student_test.ndcg_at_k, student_test.logloss
    );

    // Against the same budget without a teacher.
    let base_cfg = TrainConfig {
        protocol: Protocol::Simultaneous,
        epochs: 1,
        batch_lists: 8,
        eval_every: 1,
        ..TrainConfig::default()
    };
    let base = train_student(&splits, &model, &base_cfg, None)?;
    let base_test = evaluate_params(&base.student, &splits.test, false)?;
    println!(
        "  base, same budget:     ndcg10 {:.4}  logloss {:.4}",
        base_test.ndcg_at_k, base_test.logloss
    );
    Ok(())
}
