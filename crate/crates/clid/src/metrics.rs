//! Ranking and calibration metrics: NDCG@k, LogLoss, ECE, GAUC, plus a
//! combined report with key=value and CSV serializations.
//!
//! Determinism rules shared by all metrics: prediction sorts break ties by
//! ascending original index, and reductions run in input order.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::loss::ln_clamped;

/// Predictions and labels of one query's documents, in original order.
#[derive(Debug, Clone)]
pub struct ListScores {
    pub qid: u64,
    pub predictions: Vec<f64>,
    pub labels: Vec<f64>,
}

impl ListScores {
    fn validate(&self) -> Result<()> {
        if self.predictions.len() != self.labels.len() {
            return Err(Error::Shape(format!(
                "list {}: {} predictions vs {} labels",
                self.qid,
                self.predictions.len(),
                self.labels.len()
            )));
        }
        if self.predictions.is_empty() {
            return Err(Error::Data(format!("list {} is empty", self.qid)));
        }
        Ok(())
    }
}

/// Indices 0..n sorted by descending value, ties by ascending index.
fn rank_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap().then(a.cmp(&b)));
    idx
}

fn dcg_at_k(labels_in_rank_order: impl Iterator<Item = f64>, k: usize) -> f64 {
    labels_in_rank_order
        .take(k)
        .enumerate()
        .map(|(i, y)| (y.exp2() - 1.0) / ((i + 2) as f64).log2())
        .sum()
}

/// Mean NDCG@k over lists. Per list, documents are ranked by prediction
/// (gain 2^y - 1, discount log2(rank + 1)); the ideal ranking sorts labels
/// descending. Lists whose labels are all zero have no ideal DCG and are
/// excluded from the mean.
pub fn ndcg_at_k(lists: &[ListScores], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidConfig("ndcg k must be >= 1".into()));
    }
    let mut total = 0.0;
    let mut included = 0usize;
    for list in lists {
        list.validate()?;
        let order = rank_order(&list.predictions);
        let dcg = dcg_at_k(order.iter().map(|&i| list.labels[i]), k);
        let mut ideal = list.labels.clone();
        ideal.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let idcg = dcg_at_k(ideal.into_iter(), k);
        if idcg > 0.0 {
            total += dcg / idcg;
            included += 1;
        }
    }
    if included == 0 {
        return Err(Error::UndefinedMetric(
            "ndcg needs at least one list with a positive label".into(),
        ));
    }
    Ok(total / included as f64)
}

/// Mean negative log-likelihood of binary labels under the predictions.
/// Predictions are clamped inside the logs only.
pub fn logloss(predictions: &[f64], labels: &[f64]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Data("empty prediction vector".into()));
    }
    let mut total = 0.0;
    for (&p, &y) in predictions.iter().zip(labels) {
        if y != 0.0 && y != 1.0 {
            return Err(Error::Data(format!("label must be 0 or 1, got {y}")));
        }
        total -= y * ln_clamped(p) + (1.0 - y) * ln_clamped(1.0 - p);
    }
    Ok(total / predictions.len() as f64)
}

/// Expected calibration error with per-list equal-size binning: per list,
/// sort by prediction descending, split into k contiguous bins whose sizes
/// differ by at most one (the first n mod k bins take the extra sample;
/// lists shorter than k use singleton bins), and average
/// (1/n) * sum_bins |sum_in_bin (y - p)| over lists.
pub fn ece(lists: &[ListScores], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidConfig("ece bin count must be >= 1".into()));
    }
    if lists.is_empty() {
        return Err(Error::Data("no lists".into()));
    }
    let mut total = 0.0;
    for list in lists {
        list.validate()?;
        let n = list.predictions.len();
        let order = rank_order(&list.predictions);
        let bins = k.min(n);
        let base = n / bins;
        let extra = n % bins;
        let mut pos = 0usize;
        let mut list_err = 0.0;
        for b in 0..bins {
            let size = base + usize::from(b < extra);
            let mut gap = 0.0;
            for &i in &order[pos..pos + size] {
                gap += list.labels[i] - list.predictions[i];
            }
            list_err += gap.abs();
            pos += size;
        }
        total += list_err / n as f64;
    }
    Ok(total / lists.len() as f64)
}

/// Impression-weighted mean per-user AUC. Per user, AUC uses the rank
/// statistic with tied predictions contributing 1/2; users whose labels are
/// all positive or all negative have no defined AUC and are excluded from
/// numerator and denominator alike.
pub fn gauc(predictions: &[f64], labels: &[f64], user_ids: &[u64]) -> Result<f64> {
    if predictions.len() != labels.len() || predictions.len() != user_ids.len() {
        return Err(Error::Shape(format!(
            "{} predictions vs {} labels vs {} user ids",
            predictions.len(),
            labels.len(),
            user_ids.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Data("empty prediction vector".into()));
    }
    // Group indexes by user in first-appearance order so the weighted sum
    // is reduced deterministically.
    let mut users: Vec<(u64, Vec<usize>)> = Vec::new();
    for (i, &u) in user_ids.iter().enumerate() {
        match users.iter_mut().find(|(id, _)| *id == u) {
            Some((_, v)) => v.push(i),
            None => users.push((u, vec![i])),
        }
    }
    let mut weighted = 0.0;
    let mut weight_total = 0.0;
    for (_, idx) in &users {
        let n_pos = idx.iter().filter(|&&i| labels[i] == 1.0).count();
        let n_neg = idx.len() - n_pos;
        if n_pos == 0 || n_neg == 0 {
            continue;
        }
        // Ascending ranks with ties averaged; AUC from the rank sum of the
        // positive class.
        let mut order: Vec<usize> = idx.clone();
        order.sort_by(|&a, &b| predictions[a].partial_cmp(&predictions[b]).unwrap().then(a.cmp(&b)));
        let mut ranks = vec![0.0; order.len()];
        let mut start = 0;
        while start < order.len() {
            let mut end = start + 1;
            while end < order.len() && predictions[order[end]] == predictions[order[start]] {
                end += 1;
            }
            let mean_rank = ((start + 1 + end) as f64) / 2.0;
            for r in ranks.iter_mut().take(end).skip(start) {
                *r = mean_rank;
            }
            start = end;
        }
        let pos_rank_sum: f64 = order
            .iter()
            .enumerate()
            .filter(|&(_, &i)| labels[i] == 1.0)
            .map(|(pos, _)| ranks[pos])
            .sum();
        let auc = (pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0) / (n_pos * n_neg) as f64;
        let w = idx.len() as f64;
        weighted += w * auc;
        weight_total += w;
    }
    if weight_total == 0.0 {
        return Err(Error::UndefinedMetric(
            "gauc needs at least one user with both a positive and a negative label".into(),
        ));
    }
    Ok(weighted / weight_total)
}

/// How to assign user ids when computing GAUC.
#[derive(Debug, Clone, Copy)]
pub enum UserAssignment<'a> {
    /// Skip GAUC entirely.
    None,
    /// Treat each query as one user.
    QueryAsUser,
    /// Explicit per-sample user ids, flattened in list order.
    PerSample(&'a [u64]),
}

/// All metrics of one evaluation pass.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub k: usize,
    pub ndcg_at_k: f64,
    pub logloss: f64,
    pub ece: f64,
    /// None when no user ids were available or no user had mixed labels.
    pub gauc: Option<f64>,
    pub queries: usize,
    pub samples: usize,
    /// Distinct users seen (0 when GAUC was skipped).
    pub users: usize,
}

/// Evaluate every metric over per-list scores. GAUC degrades to None (rather
/// than erroring) when no user has mixed labels, since that is a property of
/// the data rather than a caller mistake.
pub fn evaluate(
    lists: &[ListScores],
    k: usize,
    ece_bins: usize,
    users: UserAssignment,
) -> Result<MetricsReport> {
    if lists.is_empty() {
        return Err(Error::Data("no lists to evaluate".into()));
    }
    let mut preds = Vec::new();
    let mut labels = Vec::new();
    for l in lists {
        l.validate()?;
        preds.extend_from_slice(&l.predictions);
        labels.extend_from_slice(&l.labels);
    }
    let flat_users: Option<Vec<u64>> = match users {
        UserAssignment::None => None,
        UserAssignment::QueryAsUser => Some(
            lists
                .iter()
                .flat_map(|l| std::iter::repeat(l.qid).take(l.predictions.len()))
                .collect(),
        ),
        UserAssignment::PerSample(ids) => {
            if ids.len() != preds.len() {
                return Err(Error::Shape(format!(
                    "{} user ids vs {} samples",
                    ids.len(),
                    preds.len()
                )));
            }
            Some(ids.to_vec())
        }
    };
    let (gauc_value, user_count) = match &flat_users {
        None => (None, 0),
        Some(ids) => {
            let mut distinct: Vec<u64> = ids.clone();
            distinct.sort_unstable();
            distinct.dedup();
            let value = match gauc(&preds, &labels, ids) {
                Ok(v) => Some(v),
                Err(Error::UndefinedMetric(_)) => None,
                Err(e) => return Err(e),
            };
            (value, distinct.len())
        }
    };
    Ok(MetricsReport {
        k,
        ndcg_at_k: ndcg_at_k(lists, k)?,
        logloss: logloss(&preds, &labels)?,
        ece: ece(lists, ece_bins)?,
        gauc: gauc_value,
        queries: lists.len(),
        samples: preds.len(),
        users: user_count,
    })
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "k,ndcg_at_k,logloss,ece,gauc,queries,samples,users";

    /// Flat key=value rendering; floats use `{}` so values are exact.
    pub fn to_kv_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "k={}", self.k);
        let _ = writeln!(out, "ndcg_at_k={}", self.ndcg_at_k);
        let _ = writeln!(out, "logloss={}", self.logloss);
        let _ = writeln!(out, "ece={}", self.ece);
        match self.gauc {
            Some(g) => {
                let _ = writeln!(out, "gauc={g}");
            }
            None => {
                let _ = writeln!(out, "gauc=");
            }
        }
        let _ = writeln!(out, "queries={}", self.queries);
        let _ = writeln!(out, "samples={}", self.samples);
        let _ = writeln!(out, "users={}", self.users);
        out
    }

    /// One CSV row matching `CSV_HEADER`; an absent GAUC is an empty field.
    pub fn to_csv_row(&self) -> String {
        let gauc = self.gauc.map(|g| g.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.k, self.ndcg_at_k, self.logloss, self.ece, gauc, self.queries, self.samples, self.users
        )
    }

    /// Parse a row produced by `to_csv_row`; exact inverse.
    pub fn from_csv_row(row: &str) -> Result<Self> {
        let fields: Vec<&str> = row.trim_end().split(',').collect();
        if fields.len() != 8 {
            return Err(Error::Data(format!(
                "metrics row needs 8 fields, got {}",
                fields.len()
            )));
        }
        let f = |s: &str, what: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Data(format!("bad {what} value {s:?}")))
        };
        let u = |s: &str, what: &str| -> Result<usize> {
            s.parse().map_err(|_| Error::Data(format!("bad {what} value {s:?}")))
        };
        Ok(MetricsReport {
            k: u(fields[0], "k")?,
            ndcg_at_k: f(fields[1], "ndcg")?,
            logloss: f(fields[2], "logloss")?,
            ece: f(fields[3], "ece")?,
            gauc: if fields[4].is_empty() { None } else { Some(f(fields[4], "gauc")?) },
            queries: u(fields[5], "queries")?,
            samples: u(fields[6], "samples")?,
            users: u(fields[7], "users")?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn list(qid: u64, preds: &[f64], labels: &[f64]) -> ListScores {
        ListScores { qid, predictions: preds.to_vec(), labels: labels.to_vec() }
    }

    #[test]
    fn ndcg_perfect_ranking_is_one() {
        let lists = [list(1, &[0.9, 0.8, 0.1], &[1.0, 1.0, 0.0])];
        assert_relative_eq!(ndcg_at_k(&lists, 10).unwrap(), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn ndcg_hand_anchor() {
        // Positive ranked second: DCG = 1/log2(3), IDCG = 1.
        let lists = [list(1, &[0.9, 0.1], &[0.0, 1.0])];
        assert_relative_eq!(
            ndcg_at_k(&lists, 10).unwrap(),
            0.6309297535714575,
            max_relative = 1e-12
        );
    }

    #[test]
    fn ndcg_ties_keep_original_order() {
        // Equal predictions: document 0 stays first, so the positive at
        // index 1 lands at rank 2.
        let lists = [list(1, &[0.5, 0.5], &[0.0, 1.0])];
        assert_relative_eq!(
            ndcg_at_k(&lists, 10).unwrap(),
            0.6309297535714575,
            max_relative = 1e-12
        );
    }

    #[test]
    fn ndcg_excludes_all_zero_lists() {
        let lists = [
            list(1, &[0.9, 0.1], &[1.0, 0.0]),
            list(2, &[0.4, 0.6], &[0.0, 0.0]),
        ];
        assert_relative_eq!(ndcg_at_k(&lists, 10).unwrap(), 1.0, max_relative = 1e-15);
        let only_zero = [list(2, &[0.4, 0.6], &[0.0, 0.0])];
        assert!(matches!(ndcg_at_k(&only_zero, 10), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn ndcg_respects_k_cutoff() {
        // Positive at rank 3 with k=2 contributes nothing.
        let lists = [list(1, &[0.9, 0.8, 0.7], &[0.0, 0.0, 1.0])];
        assert_relative_eq!(ndcg_at_k(&lists, 2).unwrap(), 0.0, max_relative = 1e-15);
        assert!(ndcg_at_k(&lists, 0).is_err());
        assert!(ndcg_at_k(&[list(1, &[], &[])], 10).is_err());
    }

    #[test]
    fn logloss_anchors() {
        assert_relative_eq!(
            logloss(&[0.5, 0.5], &[1.0, 0.0]).unwrap(),
            std::f64::consts::LN_2,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            logloss(&[0.9, 0.1], &[1.0, 0.0]).unwrap(),
            -(0.9f64.ln()),
            max_relative = 1e-12
        );
        assert!(logloss(&[0.5], &[0.5]).is_err());
        assert!(logloss(&[], &[]).is_err());
    }

    #[test]
    fn logloss_constant_predictor_minimized_at_label_mean() {
        let labels = [1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0];
        let mean = labels.iter().sum::<f64>() / labels.len() as f64;
        let at_mean = logloss(&vec![mean; labels.len()], &labels).unwrap();
        for c in [0.1, 0.3, 0.5, 0.8, 0.9] {
            let at_c = logloss(&vec![c; labels.len()], &labels).unwrap();
            assert!(at_mean <= at_c + 1e-12, "constant {c} beat the label mean");
        }
    }

    #[test]
    fn ece_hand_anchor() {
        // Sorted bins {0.9, 0.8} and {0.2, 0.1} vs labels {1,1} and {0,1}:
        // (1/4) * (|0.3| + |0.7|) = 0.25.
        let lists = [list(1, &[0.9, 0.8, 0.2, 0.1], &[1.0, 1.0, 0.0, 1.0])];
        assert_relative_eq!(ece(&lists, 2).unwrap(), 0.25, max_relative = 1e-15);
    }

    #[test]
    fn ece_one_bin_equals_mean_gap() {
        let lists = [list(1, &[0.2, 0.6, 0.7], &[0.0, 1.0, 0.0])];
        let mean_y: f64 = 1.0 / 3.0;
        let mean_p: f64 = 1.5 / 3.0;
        assert_relative_eq!(
            ece(&lists, 1).unwrap(),
            (mean_y - mean_p).abs(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn ece_short_lists_use_singleton_bins() {
        let lists = [list(1, &[0.7, 0.4], &[1.0, 0.0])];
        // Two singleton bins: (|1-0.7| + |0-0.4|) / 2.
        assert_relative_eq!(ece(&lists, 10).unwrap(), 0.35, max_relative = 1e-12);
    }

    #[test]
    fn ece_perfectly_calibrated_constant_list_is_zero() {
        let lists = [list(1, &[0.5, 0.5, 0.5, 0.5], &[1.0, 0.0, 1.0, 0.0])];
        assert_relative_eq!(ece(&lists, 1).unwrap(), 0.0, max_relative = 1e-15);
        assert!(ece(&lists, 0).is_err());
    }

    #[test]
    fn ece_remainder_goes_to_leading_bins() {
        // n=5, k=2: bins of 3 then 2.
        let lists = [list(1, &[0.9, 0.8, 0.7, 0.2, 0.1], &[0.0, 1.0, 1.0, 0.0, 0.0])];
        let expect = ((0.0 - 0.9 + 1.0 - 0.8 + 1.0 - 0.7f64).abs()
            + (0.0 - 0.2 + 0.0 - 0.1f64).abs())
            / 5.0;
        assert_relative_eq!(ece(&lists, 2).unwrap(), expect, max_relative = 1e-12);
    }

    #[test]
    fn gauc_anchors() {
        assert_relative_eq!(
            gauc(&[0.9, 0.1], &[1.0, 0.0], &[1, 1]).unwrap(),
            1.0,
            max_relative = 1e-15
        );
        // User 1: 2 impressions, AUC 1; user 2: 4 impressions all tied, AUC 0.5.
        let preds = [0.9, 0.1, 0.5, 0.5, 0.5, 0.5];
        let labels = [1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let users = [1, 1, 2, 2, 2, 2];
        let v = gauc(&preds, &labels, &users).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn gauc_tied_predictions_count_half() {
        assert_relative_eq!(
            gauc(&[0.7, 0.7], &[1.0, 0.0], &[1, 1]).unwrap(),
            0.5,
            max_relative = 1e-15
        );
    }

    #[test]
    fn gauc_excludes_single_class_users() {
        let with_pure = gauc(
            &[0.9, 0.1, 0.3, 0.4],
            &[1.0, 0.0, 1.0, 1.0],
            &[1, 1, 2, 2],
        )
        .unwrap();
        assert_relative_eq!(with_pure, 1.0, max_relative = 1e-15);
        assert!(matches!(
            gauc(&[0.9, 0.1], &[1.0, 1.0], &[1, 1]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn logit_scaling_changes_calibration_but_not_rank_metrics() {
        let preds: Vec<f64> = vec![0.8, 0.3, 0.6, 0.2];
        let labels: Vec<f64> = vec![1.0, 0.0, 1.0, 0.0];
        let scaled: Vec<f64> = preds
            .iter()
            .map(|&p| crate::net::sigmoid(2.0 * (p / (1.0 - p)).ln()))
            .collect();
        let a = [list(1, &preds, &labels)];
        let b = [list(1, &scaled, &labels)];
        assert_relative_eq!(
            ndcg_at_k(&a, 10).unwrap(),
            ndcg_at_k(&b, 10).unwrap(),
            max_relative = 1e-15
        );
        assert!(
            (logloss(&preds, &labels).unwrap() - logloss(&scaled, &labels).unwrap()).abs() > 1e-3
        );
        assert!((ece(&a, 2).unwrap() - ece(&b, 2).unwrap()).abs() > 1e-3);
    }

    #[test]
    fn evaluate_combines_all_metrics() {
        let lists = vec![
            list(1, &[0.9, 0.2], &[1.0, 0.0]),
            list(2, &[0.4, 0.6, 0.5], &[0.0, 1.0, 0.0]),
        ];
        let r = evaluate(&lists, 10, 10, UserAssignment::QueryAsUser).unwrap();
        assert_eq!(r.queries, 2);
        assert_eq!(r.samples, 5);
        assert_eq!(r.users, 2);
        assert!(r.gauc.is_some());
        let flat_p = [0.9, 0.2, 0.4, 0.6, 0.5];
        let flat_y = [1.0, 0.0, 0.0, 1.0, 0.0];
        assert_relative_eq!(r.logloss, logloss(&flat_p, &flat_y).unwrap(), max_relative = 1e-15);
        assert_relative_eq!(r.ndcg_at_k, ndcg_at_k(&lists, 10).unwrap(), max_relative = 1e-15);

        let no_users = evaluate(&lists, 10, 10, UserAssignment::None).unwrap();
        assert_eq!(no_users.gauc, None);
        assert_eq!(no_users.users, 0);

        // All-positive users: GAUC degrades to None instead of erroring.
        let pure = vec![list(1, &[0.9, 0.2], &[1.0, 1.0])];
        let r = evaluate(&pure, 10, 10, UserAssignment::QueryAsUser).unwrap();
        assert_eq!(r.gauc, None);
        assert_eq!(r.users, 1);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let lists = vec![
            list(1, &[0.91234567891234, 0.2], &[1.0, 0.0]),
            list(2, &[0.4, 0.6, 1.0 / 3.0], &[0.0, 1.0, 0.0]),
        ];
        for users in [UserAssignment::QueryAsUser, UserAssignment::None] {
            let r = evaluate(&lists, 10, 10, users).unwrap();
            let row = r.to_csv_row();
            assert_eq!(MetricsReport::from_csv_row(&row).unwrap(), r);
        }
        assert!(MetricsReport::from_csv_row("1,2,3").is_err());
    }

    #[test]
    fn kv_text_lists_every_field() {
        let lists = vec![list(1, &[0.9, 0.2], &[1.0, 0.0])];
        let r = evaluate(&lists, 10, 10, UserAssignment::QueryAsUser).unwrap();
        let kv = r.to_kv_text();
        for key in ["k=", "ndcg_at_k=", "logloss=", "ece=", "gauc=", "queries=", "samples=", "users="] {
            assert!(kv.contains(key), "missing {key} in {kv}");
        }
    }

    proptest! {
        #[test]
        fn ndcg_is_invariant_under_monotone_transforms(
            preds in proptest::collection::vec(0.01f64..0.99, 2..9),
            bits in proptest::collection::vec(proptest::bool::ANY, 2..9),
        ) {
            let n = preds.len().min(bits.len());
            let labels: Vec<f64> = bits[..n].iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
            prop_assume!(labels.iter().any(|&y| y == 1.0));
            let a = [list(1, &preds[..n], &labels)];
            let transformed: Vec<f64> = preds[..n].iter().map(|&p| 3.0 * p + 1.0).collect();
            let b = [list(1, &transformed, &labels)];
            let va = ndcg_at_k(&a, 10).unwrap();
            let vb = ndcg_at_k(&b, 10).unwrap();
            prop_assert!((va - vb).abs() < 1e-12);
        }

        #[test]
        fn gauc_is_invariant_under_per_user_monotone_transforms(
            preds in proptest::collection::vec(0.01f64..0.99, 4..10),
            bits in proptest::collection::vec(proptest::bool::ANY, 4..10),
        ) {
            let n = preds.len().min(bits.len());
            let labels: Vec<f64> = bits[..n].iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
            let users: Vec<u64> = (0..n).map(|i| (i % 2) as u64).collect();
            prop_assume!(gauc(&preds[..n], &labels, &users).is_ok());
            // Different strictly monotone map per user.
            let transformed: Vec<f64> = preds[..n]
                .iter()
                .zip(&users)
                .map(|(&p, &u)| if u == 0 { p * 0.5 } else { p.powi(3) })
                .collect();
            let a = gauc(&preds[..n], &labels, &users).unwrap();
            let b = gauc(&transformed, &labels, &users).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn ece_bounded_by_sample_level_error(
            preds in proptest::collection::vec(0.01f64..0.99, 1..12),
            bits in proptest::collection::vec(proptest::bool::ANY, 1..12),
            k in 1usize..12,
        ) {
            let n = preds.len().min(bits.len());
            let labels: Vec<f64> = bits[..n].iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
            let lists = [list(1, &preds[..n], &labels)];
            let v = ece(&lists, k).unwrap();
            let bound: f64 = preds[..n]
                .iter()
                .zip(&labels)
                .map(|(&p, &y)| (y - p).abs())
                .sum::<f64>() / n as f64;
            prop_assert!(v <= bound + 1e-12);
        }
    }
}
