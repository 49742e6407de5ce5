use serde::{Deserialize, Serialize};

use crate::error::{DoaError, Result};

/// Largest source count handled by the exhaustive assignment search.
pub const MAX_MATCHED_ANGLES: usize = 4;

/// Per-angle absolute errors (degrees) under the assignment of predictions to
/// true angles that minimizes the total absolute error.
///
/// `errors[i]` belongs to `true_deg[i]`. Among equally good assignments the
/// first in lexicographic order wins.
pub fn matched_error(true_deg: &[f64], predicted_deg: &[f64]) -> Result<Vec<f64>> {
    let k = true_deg.len();
    if k != predicted_deg.len() {
        return Err(DoaError::Domain(format!(
            "{k} true angles but {} predictions",
            predicted_deg.len()
        )));
    }
    if k == 0 || k > MAX_MATCHED_ANGLES {
        return Err(DoaError::Domain(format!(
            "matching supports 1 to {MAX_MATCHED_ANGLES} angles, got {k}"
        )));
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for perm in permutations(k) {
        let cost: f64 = perm.iter().enumerate().map(|(i, &j)| (true_deg[i] - predicted_deg[j]).abs()).sum();
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, perm));
        }
    }
    let (_, perm) = best.expect("at least one permutation");
    Ok(perm
        .iter()
        .enumerate()
        .map(|(i, &j)| (true_deg[i] - predicted_deg[j]).abs())
        .collect())
}

/// All permutations of `0..k` in lexicographic order.
fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for first in 0..k {
        for rest in permutations(k - 1) {
            let mut p = vec![first];
            p.extend(rest.into_iter().map(|r| if r >= first { r + 1 } else { r }));
            out.push(p);
        }
    }
    out
}

/// One step of an empirical CDF: `fraction` of the errors are `<= error`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcdfPoint {
    pub error: f64,
    pub fraction: f64,
}

/// Empirical CDF with one point per distinct error value.
pub fn ecdf(errors: &[f64]) -> Result<Vec<EcdfPoint>> {
    if errors.is_empty() {
        return Err(DoaError::Domain("ECDF of an empty error list".into()));
    }
    if errors.iter().any(|e| e.is_nan()) {
        return Err(DoaError::Domain("ECDF input contains NaN".into()));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut points: Vec<EcdfPoint> = Vec::new();
    for (i, &e) in sorted.iter().enumerate() {
        if i + 1 < n && sorted[i + 1] == e {
            continue;
        }
        points.push(EcdfPoint {
            error: e,
            fraction: (i + 1) as f64 / n as f64,
        });
    }
    Ok(points)
}

/// Evaluates an ECDF at `x`.
pub fn ecdf_at(points: &[EcdfPoint], x: f64) -> f64 {
    points
        .iter()
        .take_while(|p| p.error <= x)
        .last()
        .map_or(0.0, |p| p.fraction)
}

/// Linear-interpolation quantile of sorted data, `q` in `[0, 1]`.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Location and spread of a pooled set of per-angle errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub count: usize,
    pub median: f64,
    pub mean: f64,
    pub p90: f64,
    pub rmse: f64,
    pub max: f64,
}

impl ErrorSummary {
    pub fn from_errors(errors: &[f64]) -> Result<Self> {
        if errors.is_empty() {
            return Err(DoaError::Domain("summary of an empty error list".into()));
        }
        let mut sorted = errors.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        Ok(ErrorSummary {
            count: sorted.len(),
            median: quantile_sorted(&sorted, 0.5),
            mean: sorted.iter().sum::<f64>() / n,
            p90: quantile_sorted(&sorted, 0.9),
            rmse: (sorted.iter().map(|e| e * e).sum::<f64>() / n).sqrt(),
            max: sorted[sorted.len() - 1],
        })
    }
}

/// Estimates for one test sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub true_deg: Vec<f64>,
    pub predicted_deg: Vec<f64>,
    /// Matched per-angle errors, aligned with `true_deg`.
    pub errors: Vec<f64>,
    /// MUSIC found fewer peaks than sources and padded its answer.
    pub merged: bool,
    /// Predictive spread, for estimators that report one.
    pub std_deg: Option<Vec<f64>>,
}

/// Evaluation of one estimator on one test set.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub estimator: String,
    pub samples: Vec<SampleResult>,
}

impl ErrorReport {
    pub fn new(estimator: impl Into<String>, samples: Vec<SampleResult>) -> Self {
        ErrorReport {
            estimator: estimator.into(),
            samples,
        }
    }

    /// Every per-angle error, sample by sample.
    pub fn pooled_errors(&self) -> Vec<f64> {
        self.samples.iter().flat_map(|s| s.errors.iter().copied()).collect()
    }

    pub fn summary(&self) -> Result<ErrorSummary> {
        ErrorSummary::from_errors(&self.pooled_errors())
    }

    pub fn ecdf(&self) -> Result<Vec<EcdfPoint>> {
        ecdf(&self.pooled_errors())
    }

    pub fn merged_count(&self) -> usize {
        self.samples.iter().filter(|s| s.merged).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matching_examples() {
        assert_eq!(matched_error(&[10.0, 20.0], &[20.0, 10.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(matched_error(&[0.0], &[1.5]).unwrap(), vec![1.5]);
        assert!(matched_error(&[0.0], &[1.0, 2.0]).is_err());
        assert!(matched_error(&[0.0; 5], &[0.0; 5]).is_err());
    }

    #[test]
    fn three_angle_matching_is_the_minimum() {
        let t = [-40.0, 5.0, 33.0];
        let p = [31.0, -38.5, 9.0];
        let e = matched_error(&t, &p).unwrap();
        assert_eq!(e, vec![1.5, 4.0, 2.0]);
        let best = permutations(3)
            .iter()
            .map(|perm| perm.iter().enumerate().map(|(i, &j)| (t[i] - p[j]).abs()).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        assert_eq!(e.iter().sum::<f64>(), best);
        assert_eq!(permutations(4).len(), 24);
    }

    #[test]
    fn ecdf_examples() {
        let f = ecdf(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(ecdf_at(&f, 2.0), 2.0 / 3.0);
        assert_eq!(ecdf_at(&f, 0.5), 0.0);
        assert_eq!(ecdf_at(&f, 3.0), 1.0);
        let flat = ecdf(&[0.7; 4]).unwrap();
        assert_eq!(flat, vec![EcdfPoint { error: 0.7, fraction: 1.0 }]);
        assert!(ecdf(&[]).is_err());
    }

    #[test]
    fn summary_statistics() {
        let s = ErrorSummary::from_errors(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(s.median, 2.5);
        assert_eq!(s.mean, 2.5);
        assert!((s.p90 - 3.7).abs() < 1e-12);
        assert!((s.rmse - 7.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(s.max, 4.0);
    }
}
