//! Verify analytic gradients against central finite differences: first for
//! each distillation loss on a random list, then through the whole ranking
//! network.
//!
//! ```bash
//! cargo run -p clid --example gradient_check
//! ```

use clid::loss::{clid_distill, listmle_distill, listnet_distill, pointwise_distill};
use clid::net::{sigmoid, ForwardOptions, RankerParams};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-6;

/// Max relative error between an analytic gradient and a central
/// difference of `value_at` over each coordinate.
fn max_rel_err(logits: &[f64], grad: &[f64], value_at: &dyn Fn(&[f64]) -> f64) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..logits.len() {
        let mut hi = logits.to_vec();
        hi[i] += H;
        let mut lo = logits.to_vec();
        lo[i] -= H;
        let fd = (value_at(&hi) - value_at(&lo)) / (2.0 * H);
        let denom = fd.abs().max(grad[i].abs()).max(1e-8);
        worst = worst.max((fd - grad[i]).abs() / denom);
    }
    worst
}

fn main() -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 6;
    let teacher_logits: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let teacher_probs: Vec<f64> = teacher_logits.iter().map(|&s| sigmoid(s)).collect();
    let student_logits: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();

    let probs_of = |s: &[f64]| -> Vec<f64> { s.iter().map(|&v| sigmoid(v)).collect() };

    let cd = clid_distill(&teacher_probs, &probs_of(&student_logits))?;
    let err = max_rel_err(&student_logits, &cd.grad, &|s| {
        clid_distill(&teacher_probs, &probs_of(s)).unwrap().value
    });
    println!("clid      max rel err {err:.2e}");

    let ln = listnet_distill(&teacher_probs, &student_logits)?;
    let err = max_rel_err(&student_logits, &ln.grad, &|s| {
        listnet_distill(&teacher_probs, s).unwrap().value
    });
    println!("listnet   max rel err {err:.2e}");

    let lm = listmle_distill(&teacher_probs, &student_logits)?;
    let err = max_rel_err(&student_logits, &lm.grad, &|s| {
        listmle_distill(&teacher_probs, s).unwrap().value
    });
    println!("listmle   max rel err {err:.2e}");

    // The pointwise loss is per-sample; check one pair at temperature 2.
    let pw = pointwise_distill(teacher_logits[0], student_logits[0], 2.0)?;
    let err = max_rel_err(&student_logits[..1], &pw.grad, &|s| {
        pointwise_distill(teacher_logits[0], s[0], 2.0).unwrap().value
    });
    println!("pointwise max rel err {err:.2e}");

    // End to end through the network: differentiate a weighted sum of
    // logits with respect to the first-layer weights. Parameters are
    // nudged through the checkpoint byte format, whose layout (dim table,
    // then all weights row-major, then biases, then slopes) gives every
    // parameter a stable external address.
    let dims = [4usize, 5, 1];
    let params = RankerParams::init(&dims, 11)?;
    let x = Array2::from_shape_fn((3, 4), |_| rng.random_range(-1.0..1.0));
    let coeffs = [0.7, -0.3, 0.2];

    let trace = params.forward_with(x.view(), &ForwardOptions::default(), &mut rng)?;
    let grads = params.backward(&trace, &coeffs)?;

    let bytes = params.to_bytes();
    let header = 4 + 1 + 4 + 4 * dims.len();
    let objective_at = |bytes: &[u8]| -> f64 {
        let p = RankerParams::from_bytes(bytes).unwrap();
        let t = p.forward(x.view()).unwrap();
        t.logits.iter().zip(&coeffs).map(|(l, c)| l * c).sum()
    };

    let mut worst: f64 = 0.0;
    for slot in 0..dims[0] * dims[1] {
        let off = header + 8 * slot;
        let v = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        let mut hi = bytes.clone();
        hi[off..off + 8].copy_from_slice(&(v + H).to_le_bytes());
        let mut lo = bytes.clone();
        lo[off..off + 8].copy_from_slice(&(v - H).to_le_bytes());
        let fd = (objective_at(&hi) - objective_at(&lo)) / (2.0 * H);
        let analytic = grads.weights[0][[slot / dims[0], slot % dims[0]]];
        let denom = fd.abs().max(analytic.abs()).max(1e-8);
        worst = worst.max((fd - analytic).abs() / denom);
    }
    println!("network weights max rel err {worst:.2e}");
    assert!(worst < 1e-4);
    println!("all gradients agree with finite differences");
    Ok(())
}
