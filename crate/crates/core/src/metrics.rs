//! Confusion-matrix metrics: balanced accuracy, multiclass MCC (Gorodkin),
//! macro F1 and the geometric mean of recalls.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, RcsError, Result};

/// `counts[true][predicted]`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = counts.len();
        if counts.iter().any(|r| r.len() != k) {
            return Err(shape("confusion matrix must be square"));
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn true_counts(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn predicted_counts(&self) -> Vec<u64> {
        (0..self.n_classes()).map(|j| self.counts.iter().map(|r| r[j]).sum()).collect()
    }

    /// Per-class recall; errors when a class has no true samples.
    pub fn recalls(&self) -> Result<Vec<f64>> {
        self.counts
            .iter()
            .enumerate()
            .map(|(c, row)| {
                let t: u64 = row.iter().sum();
                if t == 0 {
                    Err(RcsError::AbsentClass(c))
                } else {
                    Ok(row[c] as f64 / t as f64)
                }
            })
            .collect()
    }

    /// Relabel classes: new class `perm[c]` takes old class `c`.
    pub fn permuted(&self, perm: &[usize]) -> ConfusionMatrix {
        let k = self.n_classes();
        let mut counts = vec![vec![0; k]; k];
        for i in 0..k {
            for j in 0..k {
                counts[perm[i]][perm[j]] = self.counts[i][j];
            }
        }
        ConfusionMatrix { counts }
    }
}

pub fn confusion_matrix(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(shape(format!("{} labels vs {} predictions", y_true.len(), y_pred.len())));
    }
    let mut counts = vec![vec![0u64; k]; k];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= k || p >= k {
            return Err(invalid(format!("label ({t}, {p}) out of range for {k} classes")));
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

/// Mean of per-class recalls.
pub fn bacc(cm: &ConfusionMatrix) -> Result<f64> {
    let r = cm.recalls()?;
    Ok(r.iter().sum::<f64>() / r.len() as f64)
}

/// `(c·s − Σ p_k t_k) / √((s² − Σ p_k²)(s² − Σ t_k²))`, 0 when the denominator vanishes.
pub fn mcc(cm: &ConfusionMatrix) -> f64 {
    let c: f64 = (0..cm.n_classes()).map(|i| cm.counts[i][i] as f64).sum();
    let s = cm.total() as f64;
    let p: Vec<f64> = cm.predicted_counts().into_iter().map(|v| v as f64).collect();
    let t: Vec<f64> = cm.true_counts().into_iter().map(|v| v as f64).collect();
    let pt: f64 = p.iter().zip(&t).map(|(a, b)| a * b).sum();
    let pp: f64 = p.iter().map(|v| v * v).sum();
    let tt: f64 = t.iter().map(|v| v * v).sum();
    let denom = ((s * s - pp) * (s * s - tt)).sqrt();
    if denom == 0.0 || !denom.is_finite() {
        0.0
    } else {
        (c * s - pt) / denom
    }
}

/// Per-class F1 (0 when precision + recall is 0), averaged over all classes.
pub fn macro_f1(cm: &ConfusionMatrix) -> f64 {
    let k = cm.n_classes();
    if k == 0 {
        return 0.0;
    }
    let p = cm.predicted_counts();
    let t = cm.true_counts();
    let f1: f64 = (0..k)
        .map(|c| {
            let tp = cm.counts[c][c] as f64;
            let precision = if p[c] == 0 { 0.0 } else { tp / p[c] as f64 };
            let recall = if t[c] == 0 { 0.0 } else { tp / t[c] as f64 };
            if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            }
        })
        .sum();
    f1 / k as f64
}

/// `(Π recall_c)^(1/K)`
pub fn gmean(cm: &ConfusionMatrix) -> Result<f64> {
    let r = cm.recalls()?;
    let prod: f64 = r.iter().product();
    Ok(prod.powf(1.0 / r.len() as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub bacc: f64,
    pub mcc: f64,
    pub f1_macro: f64,
    pub gmean: f64,
    pub per_class_recall: Vec<f64>,
    pub confusion_matrix: Vec<Vec<u64>>,
}

impl MetricsReport {
    pub fn from_confusion(cm: &ConfusionMatrix) -> Result<Self> {
        Ok(MetricsReport {
            bacc: bacc(cm)?,
            mcc: mcc(cm),
            f1_macro: macro_f1(cm),
            gmean: gmean(cm)?,
            per_class_recall: cm.recalls()?,
            confusion_matrix: cm.counts.clone(),
        })
    }

    pub fn evaluate(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<Self> {
        Self::from_confusion(&confusion_matrix(y_true, y_pred, k)?)
    }
}
