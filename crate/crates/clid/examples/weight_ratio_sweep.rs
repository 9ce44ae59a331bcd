//! Sweep the distillation weight ratio (1-alpha)/alpha for the
//! calibration-compatible loss against one shared teacher and print both
//! quality axes per ratio. Quality typically rises and then falls as the
//! distillation term goes from negligible to overwhelming.
//!
//! ```bash
//! cargo run -p clid --example weight_ratio_sweep
//! ```

use clid::data::SyntheticSpec;
use clid::experiment::{sweep_rows, sweep_to_csv, DataSource};
use clid::loss::{DistillConfig, DistillKind};
use clid::model::ModelConfig;
use clid::train::{weight_ratio_sweep, TrainConfig};

fn main() -> anyhow::Result<()> {
    let source = DataSource::Synthetic {
        spec: SyntheticSpec {
            num_queries: 120,
            docs_min: 5,
            docs_max: 12,
            feat_dim: 8,
            context_strength: 2.0,
            seed: 23,
        },
    };
    let splits = source.load()?;
    let model = ModelConfig::default();
    let cfg = TrainConfig {
        epochs: 20,
        eval_every: 20,
        distill: Some(DistillConfig::from_weight_ratio(DistillKind::Clid, 1.0, 1.0)?),
        ..TrainConfig::default()
    };

    let grid = [0.01, 0.1, 1.0, 10.0, 100.0];
    let results = weight_ratio_sweep(&splits, &model, &cfg, &grid)?;
    let rows = sweep_rows(&results);
    print!("{}", sweep_to_csv(&rows));

    let best = rows
        .iter()
        .max_by(|a, b| a.ndcg10.total_cmp(&b.ndcg10))
        .unwrap();
    println!();
    println!("best ndcg10 {:.4} at ratio {}", best.ndcg10, best.ratio);
    Ok(())
}
