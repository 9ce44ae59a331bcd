//! Generate a synthetic contextual-click dataset, inspect its latent
//! model, split it by query, and round-trip it through the on-disk format.
//!
//! ```bash
//! cargo run -p clid --example synthetic_data
//! ```

use clid::data::{gen_synthetic, parse_sidecar, write_sidecar, SyntheticSpec};

fn main() -> anyhow::Result<()> {
    let spec = SyntheticSpec {
        num_queries: 50,
        docs_min: 4,
        docs_max: 10,
        feat_dim: 6,
        context_strength: 2.0,
        seed: 42,
    };
    let data = gen_synthetic(&spec)?;
    println!(
        "generated {} queries / {} samples, feature width {}",
        data.dataset.num_queries(),
        data.dataset.num_samples(),
        data.dataset.feat_dim
    );
    println!("latent bias: {:.4}", data.latent.bias);
    println!("latent own weights:     {:?}", rounded(&data.latent.weights));
    println!("latent context weights: {:?}", rounded(&data.latent.context_weights));

    // The latent click probabilities exist only at generation time; a model
    // that serves without context features can never read the contextual
    // term, which is the whole point of distilling it.
    let probs = data.true_probs();
    let first = &probs[0];
    println!("true click probabilities of query 1: {:?}", rounded(first));

    let (train, valid, test) = data.dataset.split_three(0.6, 0.2)?;
    println!(
        "split by query: {} train / {} valid / {} test",
        train.num_queries(),
        valid.num_queries(),
        test.num_queries()
    );

    // Everything needed to regenerate or audit the data fits in a small
    // key=value sidecar.
    let mut sidecar = Vec::new();
    write_sidecar(&data, &mut sidecar)?;
    let (spec_back, latent_back) = parse_sidecar(&sidecar[..])?;
    assert_eq!(spec_back, spec);
    assert_eq!(latent_back.bias, data.latent.bias);
    println!("sidecar round-trip: ok ({} bytes)", sidecar.len());

    let mut svm = Vec::new();
    train.write_svmlight(&mut svm)?;
    let line = String::from_utf8_lossy(&svm);
    println!("first data line: {}", line.lines().next().unwrap());
    Ok(())
}

fn rounded(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 1e4).round() / 1e4).collect()
}
