//! Empirical ROC curves, trapezoidal AUC, and FNR-targeted thresholds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One operating point: units with `score >= threshold` are predicted positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub fnr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Roc {
    /// Ordered by decreasing threshold; the first point has threshold `+inf`.
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// ROC points at every distinct score plus the all-negative endpoint.
pub fn roc_points(scores: &[f64], labels: &[bool]) -> Result<Roc> {
    if scores.len() != labels.len() {
        return Err(Error::Schema("scores and labels differ in length".into()));
    }
    let pos = labels.iter().filter(|l| **l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClassLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let (p, n) = (pos as f64, neg as f64);
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        fnr: 1.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let prev = *points.last().expect("non-empty");
        let pt = RocPoint {
            threshold: s,
            fpr: fp as f64 / n,
            fnr: 1.0 - tp as f64 / p,
            tpr: tp as f64 / p,
        };
        auc += (pt.fpr - prev.fpr) * (pt.tpr + prev.tpr) / 2.0;
        points.push(pt);
    }
    Ok(Roc { points, auc })
}

/// Area under the ROC curve.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    Ok(roc_points(scores, labels)?.auc)
}

/// Largest ROC threshold whose empirical FNR does not exceed `target_fnr`.
///
/// Target 0 yields the lowest positive score (every positive kept);
/// target 1 yields `+inf` (nothing predicted positive).
pub fn threshold_for_fnr(roc: &Roc, target_fnr: f64) -> f64 {
    const SLACK: f64 = 1e-12;
    roc.points
        .iter()
        .find(|p| p.fnr <= target_fnr + SLACK)
        .map(|p| p.threshold)
        .unwrap_or(f64::NEG_INFINITY)
}
