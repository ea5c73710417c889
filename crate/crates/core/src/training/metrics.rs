use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check(labels: &[bool], scores: &[f64]) -> Result<()> {
    if labels.len() != scores.len() {
        return Err(Error::input(format!(
            "{} labels but {} scores",
            labels.len(),
            scores.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::input(format!("score {i} is NaN")));
    }
    Ok(())
}

/// Indices sorted by descending score; equal scores keep input order.
fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Area under the ROC curve, `P(s⁺ > s⁻) + ½ P(s⁺ = s⁻)`, from exact pair
/// counts.
pub fn roc_auc(labels: &[bool], scores: &[f64]) -> Result<f64> {
    check(labels, scores)?;
    let n_pos = labels.iter().filter(|&&l| l).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::input("AUC needs both positive and negative labels"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // concordant pairs count 2, ties 1, so the total stays integral
    let mut twice_wins: u128 = 0;
    let mut neg_below: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut p, mut q) = (0u64, 0u64);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                p += 1;
            } else {
                q += 1;
            }
            j += 1;
        }
        twice_wins += 2 * u128::from(p) * u128::from(neg_below) + u128::from(p) * u128::from(q);
        neg_below += q;
        i = j;
    }
    Ok(twice_wins as f64 / (2 * u128::from(n_pos) * u128::from(n_neg)) as f64)
}

/// Average precision `Σ_k (R_k − R_{k−1})·P_k` over the ranking by
/// descending score. Tied scores are ranked in input order.
pub fn average_precision(labels: &[bool], scores: &[f64]) -> Result<f64> {
    check(labels, scores)?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 {
        return Err(Error::input(
            "average precision needs at least one positive label",
        ));
    }
    let mut hits = 0usize;
    let mut total = 0.0;
    for (rank, &i) in ranking(scores).iter().enumerate() {
        if labels[i] {
            hits += 1;
            total += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(total / n_pos as f64)
}

/// AUC and AP of positive pairs against negative pairs.
pub fn link_metrics(pos_scores: &[f64], neg_scores: &[f64]) -> Result<(f64, f64)> {
    let labels: Vec<bool> = std::iter::repeat_n(true, pos_scores.len())
        .chain(std::iter::repeat_n(false, neg_scores.len()))
        .collect();
    let scores: Vec<f64> = pos_scores.iter().chain(neg_scores).copied().collect();
    Ok((
        roc_auc(&labels, &scores)?,
        average_precision(&labels, &scores)?,
    ))
}

/// Mean and standard error `s / √k` with the sample standard deviation `s`.
/// A single value has standard error 0.
pub fn mean_and_standard_error(values: &[f64]) -> (f64, f64) {
    let k = values.len();
    if k == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    if k == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    (mean, (var / k as f64).sqrt())
}

/// One point of the training trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub iteration: usize,
    pub elbo: f64,
    pub recon: f64,
    pub kl: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_auc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_ap: Option<f64>,
}

/// Test metrics of one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub auc: f64,
    pub ap: f64,
    #[serde(default)]
    pub history: Vec<HistoryRecord>,
}

/// Per-seed test metrics with their means and standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_seed: Vec<SeedMetrics>,
    pub auc_mean: f64,
    pub auc_se: f64,
    pub ap_mean: f64,
    pub ap_se: f64,
}

impl MetricsReport {
    pub fn from_seeds(per_seed: Vec<SeedMetrics>) -> Self {
        let aucs: Vec<f64> = per_seed.iter().map(|s| s.auc).collect();
        let aps: Vec<f64> = per_seed.iter().map(|s| s.ap).collect();
        let (auc_mean, auc_se) = mean_and_standard_error(&aucs);
        let (ap_mean, ap_se) = mean_and_standard_error(&aps);
        MetricsReport {
            per_seed,
            auc_mean,
            auc_se,
            ap_mean,
            ap_se,
        }
    }

    pub fn runs(&self) -> usize {
        self.per_seed.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[true, false], &[0.9, 0.1]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[true, false], &[0.1, 0.9]).unwrap(), 0.0);
        let l = [true, true, false, false];
        assert_eq!(roc_auc(&l, &[0.8, 0.4, 0.6, 0.2]).unwrap(), 0.75);
        assert_eq!(roc_auc(&l, &[0.5; 4]).unwrap(), 0.5);
        assert!(roc_auc(&[true, true], &[0.1, 0.2]).is_err());
        assert!(roc_auc(&[true, false], &[0.1]).is_err());
        assert!(roc_auc(&[true, false], &[f64::NAN, 0.1]).is_err());
    }

    #[test]
    fn ap_examples() {
        let l = [true, true, false, false];
        assert_eq!(average_precision(&l, &[0.9, 0.8, 0.2, 0.1]).unwrap(), 1.0);
        let ap = average_precision(&l, &[0.8, 0.4, 0.6, 0.2]).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-15);
        assert!(average_precision(&[false, false], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn ap_ties_follow_input_order() {
        assert_eq!(average_precision(&[true, false], &[0.5, 0.5]).unwrap(), 1.0);
        assert_eq!(average_precision(&[false, true], &[0.5, 0.5]).unwrap(), 0.5);
    }

    #[test]
    fn standard_error() {
        assert_eq!(mean_and_standard_error(&[0.7]), (0.7, 0.0));
        let (m, se) = mean_and_standard_error(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn report_of_one_seed() {
        let r = MetricsReport::from_seeds(vec![SeedMetrics {
            seed: 3,
            auc: 0.9,
            ap: 0.8,
            history: vec![],
        }]);
        assert_eq!(
            (r.auc_mean, r.auc_se, r.ap_mean, r.ap_se),
            (0.9, 0.0, 0.8, 0.0)
        );
    }
}
