//! Quality criteria: relative jump distance, normalized infinite distance
//! of change-point locations, misclassification rate, and confusion
//! proportions.

use std::collections::BTreeMap;

use crate::ecm::FitResult;
use crate::error::{Error, Result};
use crate::model::Cluster;
use crate::simulate::GroundTruth;

/// Evaluation summary of one fit against the ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Signed relative jump error, when the truth carries a nonzero jump.
    pub d_r: Option<f64>,
    /// Per-cluster mean normalized infinite distance, keyed by cluster
    /// number; clusters with no true members are absent.
    pub d_inf: BTreeMap<u8, f64>,
    pub misclass_rate: f64,
    /// Row `k` is the distribution of assigned clusters among profiles
    /// truly in cluster `k+1`.
    pub confusion: [[f64; 4]; 4],
    /// Which confusion rows correspond to nonempty true clusters.
    pub row_present: [bool; 4],
}

/// Signed relative distance between the estimated and the true jump:
/// `(delta_hat - delta) / |delta|`.
pub fn relative_jump_distance(delta_hat: f64, delta: f64) -> Result<f64> {
    if delta == 0.0 {
        return Err(Error::Domain(
            "relative jump distance undefined for a zero true jump".into(),
        ));
    }
    Ok((delta_hat - delta) / delta.abs())
}

fn check_lengths(truth: &GroundTruth, fit: &FitResult) -> Result<()> {
    if truth.labels.len() != fit.hard_assignment.len()
        || truth.labels.len() != fit.params.n_profiles()
    {
        return Err(Error::InvalidParams(format!(
            "truth covers {} profiles, fit covers {}",
            truth.labels.len(),
            fit.hard_assignment.len()
        )));
    }
    Ok(())
}

/// Largest absolute change-point gap between two same-shape segmentations.
fn d_infinity(truth_cps: &[usize], fitted_cps: &[usize]) -> f64 {
    truth_cps
        .iter()
        .zip(fitted_cps)
        .map(|(&a, &b)| a.abs_diff(b) as f64)
        .fold(0.0, f64::max)
}

/// Per-cluster mean of the normalized infinite distance between true and
/// fitted change-point locations, computed in the true cluster: a profile
/// truly in cluster `k` is compared against the fitted cluster-`k`
/// segmentation whatever cluster the profile was assigned to.
pub fn normalized_infinite_distance(
    truth: &GroundTruth,
    fit: &FitResult,
) -> Result<BTreeMap<u8, f64>> {
    check_lengths(truth, fit)?;
    let mut sums: BTreeMap<u8, (f64, usize)> = BTreeMap::new();
    for (s, (&label, true_seg)) in truth.labels.iter().zip(&truth.segmentations).enumerate() {
        if label == Cluster::Flat {
            continue;
        }
        let fitted = &fit.params.params(s, label).seg;
        let d = d_infinity(true_seg.change_points(), fitted.change_points());
        let entry = sums.entry(label.number()).or_insert((0.0, 0));
        entry.0 += d / truth.lengths[s] as f64;
        entry.1 += 1;
    }
    Ok(sums.into_iter().map(|(k, (total, count))| (k, total / count as f64)).collect())
}

/// Fraction of profiles whose hard assignment differs from the true label.
/// Cluster identities are structural, so no label permutation is applied.
pub fn misclassification_rate(truth: &GroundTruth, fit: &FitResult) -> Result<f64> {
    check_lengths(truth, fit)?;
    let wrong = truth
        .labels
        .iter()
        .zip(&fit.hard_assignment)
        .filter(|(a, b)| a != b)
        .count();
    Ok(wrong as f64 / truth.labels.len() as f64)
}

/// Confusion proportions: row `k` distributes the profiles truly in
/// cluster `k+1` over their assigned clusters. Empty true clusters are
/// flagged absent.
pub fn confusion_proportions(
    truth: &GroundTruth,
    fit: &FitResult,
) -> Result<([[f64; 4]; 4], [bool; 4])> {
    check_lengths(truth, fit)?;
    let mut counts = [[0usize; 4]; 4];
    for (&label, &assigned) in truth.labels.iter().zip(&fit.hard_assignment) {
        counts[label.index()][assigned.index()] += 1;
    }
    let mut matrix = [[0.0; 4]; 4];
    let mut present = [false; 4];
    for k in 0..4 {
        let row_total: usize = counts[k].iter().sum();
        if row_total == 0 {
            continue;
        }
        present[k] = true;
        for j in 0..4 {
            matrix[k][j] = counts[k][j] as f64 / row_total as f64;
        }
    }
    Ok((matrix, present))
}

/// Bundle all criteria into one report.
pub fn evaluate(truth: &GroundTruth, fit: &FitResult) -> Result<EvalReport> {
    let d_r = if truth.delta != 0.0 {
        Some(relative_jump_distance(fit.params.delta, truth.delta)?)
    } else {
        None
    };
    let d_inf = normalized_infinite_distance(truth, fit)?;
    let misclass_rate = misclassification_rate(truth, fit)?;
    let (confusion, row_present) = confusion_proportions(truth, fit)?;
    Ok(EvalReport { d_r, d_inf, misclass_rate, confusion, row_present })
}
