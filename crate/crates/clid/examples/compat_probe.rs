//! Probe each distillation loss for calibration compatibility: place the
//! student exactly at the teacher's probabilities (the label-loss optimum
//! in the infinite-data limit) and measure whether the distillation term
//! still pushes it somewhere else.
//!
//! ```bash
//! cargo run -p clid --example compat_probe
//! ```

use clid::experiment::{probe_all, render_probe_table};

fn main() -> anyhow::Result<()> {
    let reports = probe_all(2, 20, 1000, 7)?;
    print!("{}", render_probe_table(&reports));
    println!();
    println!("reading the table:");
    println!("- max_grad_inf_norm is the largest gradient entry over 1000 random");
    println!("  lists with the student placed exactly at the teacher's probabilities.");
    println!("  A compatible loss is already at its minimum there, so the column is");
    println!("  zero for the calibration-compatible losses and large for listnet,");
    println!("  whose softmax target ignores the absolute probability scale.");
    println!("- scale_descent_fraction (listmle only) is how often doubling all");
    println!("  student logits strictly reduced the loss: its minimum runs away to");
    println!("  infinite logits, so matched probabilities are never a resting point.");

    let by_kind = |k: &str| reports.iter().find(|r| r.kind.to_string() == k).unwrap();
    assert!(by_kind("clid").max_grad_inf_norm < 1e-8);
    assert!(by_kind("pointwise").max_grad_inf_norm < 1e-8);
    assert!(by_kind("listnet").max_grad_inf_norm > 1e-3);
    assert!(by_kind("listmle").scale_descent_fraction.unwrap() > 0.99);
    println!();
    println!("probe confirms: clid and pointwise rest at the optimum, the others do not");
    Ok(())
}
