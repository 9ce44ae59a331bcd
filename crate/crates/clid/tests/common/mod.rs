//! Shared helpers for the integration suites: independently written
//! reference implementations of every metric, a finite-difference harness,
//! and random instance generators. Nothing here calls into the library's
//! metric or loss code.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;

/// Max relative error between `grad` and central differences of `f` at
/// `x`. Errors below `abs_floor` in absolute terms pass outright, which
/// keeps exact-zero gradients from tripping the relative test on FD noise.
pub fn fd_max_rel_err(x: &[f64], grad: &[f64], f: &dyn Fn(&[f64]) -> f64) -> f64 {
    let abs_floor = 1e-8;
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let mut hi = x.to_vec();
        hi[i] += FD_STEP;
        let mut lo = x.to_vec();
        lo[i] -= FD_STEP;
        let fd = (f(&hi) - f(&lo)) / (2.0 * FD_STEP);
        if (fd - grad[i]).abs() < abs_floor {
            continue;
        }
        let denom = fd.abs().max(grad[i].abs()).max(abs_floor);
        worst = worst.max((fd - grad[i]).abs() / denom);
    }
    worst
}

/// Discounted gain of one ordering, top `k` positions.
fn dcg_of_order(labels: &[f64], order: &[usize], k: usize) -> f64 {
    order
        .iter()
        .take(k)
        .enumerate()
        .map(|(pos, &idx)| (2f64.powf(labels[idx]) - 1.0) / ((pos as f64 + 2.0).log2()))
        .sum()
}

/// Best DCG over every permutation of the list, by exhaustive search
/// (Heap's algorithm); the reason this oracle exists is to validate the
/// library's sorted-labels shortcut.
fn ideal_dcg_exhaustive(labels: &[f64], k: usize) -> f64 {
    fn heaps(arr: &mut Vec<usize>, size: usize, labels: &[f64], k: usize, best: &mut f64) {
        if size == 1 {
            let d = dcg_of_order(labels, arr, k);
            if d > *best {
                *best = d;
            }
            return;
        }
        for i in 0..size {
            heaps(arr, size - 1, labels, k, best);
            if size % 2 == 1 {
                arr.swap(0, size - 1);
            } else {
                arr.swap(i, size - 1);
            }
        }
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    let mut best = f64::NEG_INFINITY;
    let n = order.len();
    heaps(&mut order, n, labels, k, &mut best);
    best
}

/// Reference NDCG@k: mean over lists with at least one positive label;
/// None when no list qualifies. Prediction ties break by original index.
pub fn brute_ndcg_at_k(lists: &[(Vec<f64>, Vec<f64>)], k: usize) -> Option<f64> {
    let mut total = 0.0;
    let mut counted = 0usize;
    for (preds, labels) in lists {
        if labels.iter().all(|&y| y == 0.0) {
            continue;
        }
        let mut order: Vec<usize> = (0..preds.len()).collect();
        order.sort_by(|&a, &b| preds[b].total_cmp(&preds[a]).then(a.cmp(&b)));
        let dcg = dcg_of_order(labels, &order, k);
        let idcg = ideal_dcg_exhaustive(labels, k);
        total += dcg / idcg;
        counted += 1;
    }
    (counted > 0).then(|| total / counted as f64)
}

/// Reference GAUC by explicit pair counting: every (positive, negative)
/// pair within a user scores 1, 1/2 on a prediction tie; users without
/// both classes are excluded; weighting is by the user's impression count.
/// None when no user has both classes.
pub fn brute_gauc(preds: &[f64], labels: &[f64], users: &[u64]) -> Option<f64> {
    let mut seen: Vec<u64> = Vec::new();
    for &u in users {
        if !seen.contains(&u) {
            seen.push(u);
        }
    }
    let mut weighted = 0.0;
    let mut weight = 0.0;
    for u in seen {
        let idx: Vec<usize> = (0..users.len()).filter(|&i| users[i] == u).collect();
        let pos: Vec<usize> = idx.iter().copied().filter(|&i| labels[i] == 1.0).collect();
        let neg: Vec<usize> = idx.iter().copied().filter(|&i| labels[i] == 0.0).collect();
        if pos.is_empty() || neg.is_empty() {
            continue;
        }
        let mut score = 0.0;
        for &p in &pos {
            for &n in &neg {
                score += if preds[p] > preds[n] {
                    1.0
                } else if preds[p] == preds[n] {
                    0.5
                } else {
                    0.0
                };
            }
        }
        let auc = score / (pos.len() * neg.len()) as f64;
        weighted += idx.len() as f64 * auc;
        weight += idx.len() as f64;
    }
    (weight > 0.0).then(|| weighted / weight)
}

/// Reference ECE: per list, samples sorted by prediction descending (ties
/// by index), split into min(k, n) contiguous bins whose first n mod k
/// bins carry one extra sample; per-bin contribution |sum(y) - sum(p)|;
/// list score is the bin sum over n; result is the mean over lists.
pub fn brute_ece(lists: &[(Vec<f64>, Vec<f64>)], k: usize) -> f64 {
    let mut total = 0.0;
    for (preds, labels) in lists {
        let n = preds.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| preds[b].total_cmp(&preds[a]).then(a.cmp(&b)));
        let bins = k.min(n);
        let base = n / bins;
        let extra = n % bins;
        let mut list_sum = 0.0;
        let mut at = 0usize;
        for b in 0..bins {
            let size = base + usize::from(b < extra);
            let mut gap = 0.0;
            for &i in &order[at..at + size] {
                gap += labels[i] - preds[i];
            }
            list_sum += gap.abs();
            at += size;
        }
        total += list_sum / n as f64;
    }
    total / lists.len() as f64
}

/// Reference LogLoss with the same probability clamp policy as the
/// library's logs: predictions straight into ln, labels binary.
pub fn brute_logloss(preds: &[f64], labels: &[f64]) -> f64 {
    let n = preds.len() as f64;
    preds
        .iter()
        .zip(labels)
        .map(|(&p, &y)| -(y * p.ln() + (1.0 - y) * (1.0 - p).ln()))
        .sum::<f64>()
        / n
}

/// Deterministic RNG for a test, salted by name hash so suites can share
/// seeds without correlating streams.
pub fn test_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random list: continuous predictions in (0.02, 0.98) with occasional
/// exact duplicates (tie coverage), labels Bernoulli with at least the
/// possibility of all-zero.
pub fn random_list(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut preds: Vec<f64> = (0..n).map(|_| rng.random_range(0.02..0.98)).collect();
    if n >= 2 && rng.random_range(0..4) == 0 {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        preds[i] = preds[j];
    }
    let labels: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 }).collect();
    (preds, labels)
}
