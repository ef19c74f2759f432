//! Ranking and classification metrics: AUC, F1, group-averaged AUC, and a
//! degree-bucket sparsity report comparing two scoring models.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One scored evaluation example, with the interaction-graph degrees of the
/// user and the news item for sparsity bucketing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRecord {
    pub user_id: u32,
    pub news_id: u32,
    pub score: f32,
    pub label: u8,
    pub user_degree: u32,
    pub news_degree: u32,
}

/// Which endpoint's degree the sparsity report buckets on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DegreeAxis {
    News,
    User,
}

/// One row of [`sparsity_report`]. Metric fields are `None` when the bucket
/// is empty or the metric is undefined on it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SparsityRow {
    pub threshold: u32,
    pub records: usize,
    pub gauc_model: Option<f64>,
    pub gauc_baseline: Option<f64>,
    pub relative_improvement: Option<f64>,
}

/// Area under the ROC curve over parallel score/label slices, or `None`
/// when only one class is present.
///
/// Computed by rank-sum with average ranks for tied scores, which equals the
/// pairwise count (ties worth 0.5) exactly: both reduce to the same integer
/// numerator over `positives * negatives`.
pub fn auc_from_slices(scores: &[f32], labels: &[u8]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "scores and labels length mismatch");
    let pos = labels.iter().filter(|&&y| y != 0).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());

    // Sum average ranks (1-based) of the positives, resolving tied runs.
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] != 0 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let p = pos as f64;
    Some((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * neg as f64))
}

/// AUC over evaluation records; single-class input is an error.
pub fn auc(records: &[EvalRecord]) -> Result<f64> {
    let scores: Vec<f32> = records.iter().map(|r| r.score).collect();
    let labels: Vec<u8> = records.iter().map(|r| r.label).collect();
    auc_from_slices(&scores, &labels)
        .ok_or_else(|| Error::Data("AUC undefined: input has a single label class".into()))
}

/// F1 at a decision threshold (score >= threshold predicts positive); any
/// zero denominator yields 0.
pub fn f1_from_slices(scores: &[f32], labels: &[u8], threshold: f32) -> f64 {
    assert_eq!(scores.len(), labels.len(), "scores and labels length mismatch");
    let (mut tp, mut fp, mut fnn) = (0u64, 0u64, 0u64);
    for (&s, &y) in scores.iter().zip(labels) {
        let pred = s >= threshold;
        match (pred, y != 0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fnn += 1,
            (false, false) => {}
        }
    }
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fnn == 0 { 0.0 } else { tp as f64 / (tp + fnn) as f64 };
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn f1(records: &[EvalRecord], threshold: f32) -> f64 {
    let scores: Vec<f32> = records.iter().map(|r| r.score).collect();
    let labels: Vec<u8> = records.iter().map(|r| r.label).collect();
    f1_from_slices(&scores, &labels, threshold)
}

/// Group AUC: per-user AUC averaged with weights equal to each user's record
/// count. Users whose records hold a single class are excluded; if no user
/// qualifies the metric is undefined.
pub fn gauc(records: &[EvalRecord]) -> Result<f64> {
    let mut by_user: BTreeMap<u32, (Vec<f32>, Vec<u8>)> = BTreeMap::new();
    for r in records {
        let e = by_user.entry(r.user_id).or_default();
        e.0.push(r.score);
        e.1.push(r.label);
    }
    let mut weighted = 0.0f64;
    let mut weight = 0.0f64;
    for (scores, labels) in by_user.values() {
        if let Some(a) = auc_from_slices(scores, labels) {
            weighted += a * scores.len() as f64;
            weight += scores.len() as f64;
        }
    }
    if weight == 0.0 {
        Err(Error::Data(
            "gAUC undefined: no user has records of both classes".into(),
        ))
    } else {
        Ok(weighted / weight)
    }
}

/// For each degree threshold, restrict to records whose news (or user)
/// degree is at most the threshold and compare the two models' gAUC.
/// `baseline_scores[i]` rescopes `records[i]` for the baseline model.
pub fn sparsity_report(
    records: &[EvalRecord],
    baseline_scores: &[f32],
    axis: DegreeAxis,
    thresholds: &[u32],
) -> Vec<SparsityRow> {
    assert_eq!(
        records.len(),
        baseline_scores.len(),
        "baseline scores must cover the same records"
    );
    thresholds
        .iter()
        .map(|&t| {
            let mut bucket = Vec::new();
            let mut base = Vec::new();
            for (r, &bs) in records.iter().zip(baseline_scores) {
                let degree = match axis {
                    DegreeAxis::News => r.news_degree,
                    DegreeAxis::User => r.user_degree,
                };
                if degree <= t {
                    bucket.push(r.clone());
                    let mut b = r.clone();
                    b.score = bs;
                    base.push(b);
                }
            }
            let gm = gauc(&bucket).ok();
            let gb = gauc(&base).ok();
            let rel = match (gm, gb) {
                (Some(m), Some(b)) if b != 0.0 => Some((m - b) / b),
                _ => None,
            };
            SparsityRow {
                threshold: t,
                records: bucket.len(),
                gauc_model: gm,
                gauc_baseline: gb,
                relative_improvement: rel,
            }
        })
        .collect()
}

/// Render a sparsity report as a tab-delimited table with a header row.
pub fn render_sparsity_table(rows: &[SparsityRow]) -> String {
    let mut out = String::from("threshold\trecords\tgauc_model\tgauc_baseline\trel_improvement\n");
    for r in rows {
        let fmt = |v: Option<f64>| match v {
            Some(x) => format!("{x:.6}"),
            None => "-".to_string(),
        };
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            r.threshold,
            r.records,
            fmt(r.gauc_model),
            fmt(r.gauc_baseline),
            fmt(r.relative_improvement)
        ));
    }
    out
}
