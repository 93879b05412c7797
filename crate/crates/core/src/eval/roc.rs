use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clean records are the positive class, noisy records the negative one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// Descending; the first point (0, 0) sits at +inf.
    pub thresholds: Vec<f64>,
    pub tpr: Vec<f64>,
    pub fpr: Vec<f64>,
    pub auc: f64,
}

fn counts(noise_mask: &[bool]) -> (usize, usize) {
    let neg = noise_mask.iter().filter(|&&n| n).count();
    (noise_mask.len() - neg, neg)
}

fn check(values: &[f64], noise_mask: &[bool]) -> Result<(usize, usize)> {
    if values.len() != noise_mask.len() {
        return Err(Error::ShapeMismatch {
            op: "roc_auc",
            lhs: vec![values.len()],
            rhs: vec![noise_mask.len()],
        });
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("value of record {i}")));
    }
    let (pos, neg) = counts(noise_mask);
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    Ok((pos, neg))
}

/// ROC over every distinct value, AUC by the trapezoid rule (tied scores
/// therefore earn half credit).
pub fn roc_auc(values: &[f64], noise_mask: &[bool]) -> Result<RocCurve> {
    let (pos, neg) = check(values, noise_mask)?;
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut thresholds = vec![f64::INFINITY];
    let mut tpr = vec![0.0];
    let mut fpr = vec![0.0];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let t = values[order[k]];
        while k < order.len() && values[order[k]] == t {
            if noise_mask[order[k]] {
                fp += 1;
            } else {
                tp += 1;
            }
            k += 1;
        }
        thresholds.push(t);
        tpr.push(tp as f64 / pos as f64);
        fpr.push(fp as f64 / neg as f64);
    }
    let auc = (1..tpr.len())
        .map(|i| (fpr[i] - fpr[i - 1]) * (tpr[i] + tpr[i - 1]) / 2.0)
        .sum();
    Ok(RocCurve {
        thresholds,
        tpr,
        fpr,
        auc,
    })
}

/// `(wins + ties / 2) / (P * N)` by enumerating every clean/noisy pair.
pub fn mann_whitney_auc(values: &[f64], noise_mask: &[bool]) -> Result<f64> {
    let (pos, neg) = check(values, noise_mask)?;
    let mut score = 0.0;
    for (i, &vi) in values.iter().enumerate() {
        if noise_mask[i] {
            continue;
        }
        for (j, &vj) in values.iter().enumerate() {
            if noise_mask[j] {
                if vi > vj {
                    score += 1.0;
                } else if vi == vj {
                    score += 0.5;
                }
            }
        }
    }
    Ok(score / (pos * neg) as f64)
}
