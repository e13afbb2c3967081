//! Evaluation metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::joint::IdentificationResult;

/// Relative parameter error `||est - truth|| / ||truth||`.
pub fn delta_theta(est: &[f64], truth: &[f64]) -> Result<f64> {
    if est.len() != truth.len() {
        return Err(Error::Dimension {
            what: "parameter estimate",
            expected: truth.len(),
            got: est.len(),
        });
    }
    let norm = truth.iter().map(|t| t * t).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::InvalidArgument("true parameter vector has zero norm".into()));
    }
    let err = est.iter().zip(truth).map(|(e, t)| (e - t).powi(2)).sum::<f64>().sqrt();
    Ok(err / norm)
}

fn component_errors(est: &[Vec<f64>], truth: &[Vec<f64>], component: usize) -> Result<Vec<f64>> {
    if est.len() != truth.len() {
        return Err(Error::Dimension {
            what: "state history",
            expected: truth.len(),
            got: est.len(),
        });
    }
    est.iter()
        .zip(truth)
        .map(|(e, t)| match (e.get(component), t.get(component)) {
            (Some(a), Some(b)) => Ok(a - b),
            _ => Err(Error::InvalidArgument(format!(
                "state component {component} out of range"
            ))),
        })
        .collect()
}

/// RMSE of one state component over the whole history.
pub fn state_rmse(est: &[Vec<f64>], truth: &[Vec<f64>], component: usize) -> Result<f64> {
    let errs = component_errors(est, truth, component)?;
    if errs.is_empty() {
        return Ok(0.0);
    }
    Ok((errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt())
}

/// Running RMSE: entry `t` is the RMSE over samples `0..=t`.
pub fn running_state_rmse(est: &[Vec<f64>], truth: &[Vec<f64>], component: usize) -> Result<Vec<f64>> {
    let errs = component_errors(est, truth, component)?;
    let mut acc = 0.0;
    Ok(errs
        .iter()
        .enumerate()
        .map(|(t, e)| {
            acc += e * e;
            (acc / (t + 1) as f64).sqrt()
        })
        .collect())
}

/// Reference point for the mean absolute deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MadCenter {
    /// Deviation around the cross-run mean.
    #[default]
    Mean,
    /// Deviation around the true value.
    Truth,
}

/// Per-parameter statistics of the final estimates over Monte Carlo runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub truth: Vec<f64>,
    pub mean: Vec<f64>,
    pub mad: Vec<f64>,
    pub rmsd: Vec<f64>,
    pub final_delta: Vec<f64>,
    pub runs: usize,
}

/// Summarises final parameter estimates, one vector per run.
pub fn monte_carlo_summary(finals: &[Vec<f64>], truth: &[f64], center: MadCenter) -> Result<RunSummary> {
    if finals.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "a Monte Carlo summary needs at least 2 runs, got {}",
            finals.len()
        )));
    }
    if let Some(bad) = finals.iter().find(|f| f.len() != truth.len()) {
        return Err(Error::Dimension {
            what: "final parameter estimate",
            expected: truth.len(),
            got: bad.len(),
        });
    }
    let runs = finals.len() as f64;
    let d = truth.len();
    let mean: Vec<f64> = (0..d)
        .map(|j| finals.iter().map(|f| f[j]).sum::<f64>() / runs)
        .collect();
    let mad = (0..d)
        .map(|j| {
            let c = match center {
                MadCenter::Mean => mean[j],
                MadCenter::Truth => truth[j],
            };
            finals.iter().map(|f| (f[j] - c).abs()).sum::<f64>() / runs
        })
        .collect();
    let rmsd = (0..d)
        .map(|j| (finals.iter().map(|f| (f[j] - truth[j]).powi(2)).sum::<f64>() / runs).sqrt())
        .collect();
    let final_delta = finals
        .iter()
        .map(|f| delta_theta(f, truth))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunSummary {
        truth: truth.to_vec(),
        mean,
        mad,
        rmsd,
        final_delta,
        runs: finals.len(),
    })
}

impl RunSummary {
    pub fn from_results(results: &[IdentificationResult], truth: &[f64], center: MadCenter) -> Result<Self> {
        let finals: Vec<Vec<f64>> = results.iter().map(|r| r.final_theta().to_vec()).collect();
        monte_carlo_summary(&finals, truth, center)
    }
}

/// Median of a non-empty slice (mean of the middle pair for even lengths).
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty slice");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len().is_multiple_of(2) {
        0.5 * (v[mid - 1] + v[mid])
    } else {
        v[mid]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn delta_theta_basics() {
        let theta = [0.3, -0.25, 1.15];
        assert_eq!(delta_theta(&theta, &theta).unwrap(), 0.0);
        let doubled: Vec<f64> = theta.iter().map(|t| 2.0 * t).collect();
        assert_abs_diff_eq!(delta_theta(&doubled, &theta).unwrap(), 1.0, epsilon = 1e-15);
        assert!(delta_theta(&[0.0; 3], &[0.0; 3]).is_err());
        assert!(delta_theta(&[0.0; 2], &theta).is_err());
    }

    #[test]
    fn delta_theta_first_example_table_row() {
        // Reference final estimate at sigma_v = 0.45 against the tabulated true
        // values; the quoted 1.8143 % agrees up to the 4-digit rounding.
        let est = [
            0.2904, -0.2508, 0.1098, 0.1320, 0.2979, 0.1948, 1.1603, 1.5341, -0.1394, 0.0268,
        ];
        let truth = [0.3, -0.25, 0.1, 0.14, 0.3, 0.2, 1.15, 1.56, -0.14, 0.01];
        assert_abs_diff_eq!(delta_theta(&est, &truth).unwrap(), 0.018143, epsilon = 5e-5);
    }

    #[test]
    fn rmse_cases() {
        let x: Vec<Vec<f64>> = (0..10).map(|t| vec![t as f64, 1.0]).collect();
        assert_eq!(state_rmse(&x, &x, 0).unwrap(), 0.0);
        let shifted: Vec<Vec<f64>> = x.iter().map(|v| vec![v[0] - 0.7, v[1]]).collect();
        assert_abs_diff_eq!(state_rmse(&shifted, &x, 0).unwrap(), 0.7, epsilon = 1e-12);
        assert!(state_rmse(&x[..3], &x, 0).is_err());
        assert!(state_rmse(&x, &x, 5).is_err());
    }

    #[test]
    fn rmse_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a: Vec<Vec<f64>> = (0..500).map(|_| vec![rng.random_range(-3.0..3.0)]).collect();
        let b: Vec<Vec<f64>> = (0..500).map(|_| vec![rng.random_range(-3.0..3.0)]).collect();
        let mut sq = 0.0;
        for i in 0..500 {
            sq += (a[i][0] - b[i][0]) * (a[i][0] - b[i][0]);
        }
        let direct = (sq / 500.0f64).sqrt();
        assert!((state_rmse(&a, &b, 0).unwrap() - direct).abs() <= 1e-12);
        let running = running_state_rmse(&a, &b, 0).unwrap();
        assert!((running[499] - direct).abs() <= 1e-12);
        assert_abs_diff_eq!(running[0], (a[0][0] - b[0][0]).abs(), epsilon = 1e-15);
    }

    #[test]
    fn summary_of_exact_runs() {
        let truth = vec![0.4, -0.2, 1.0];
        let s = monte_carlo_summary(&[truth.clone(), truth.clone(), truth.clone()], &truth, MadCenter::Mean).unwrap();
        for j in 0..3 {
            assert_abs_diff_eq!(s.mean[j], truth[j], epsilon = 1e-15);
        }
        assert!(s.mad.iter().all(|&m| m <= 1e-15));
        assert!(s.rmsd.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn summary_of_symmetric_pair() {
        let truth = vec![1.0, 2.0];
        let delta = 0.3;
        let runs = vec![vec![1.0 + delta, 2.0 + delta], vec![1.0 - delta, 2.0 - delta]];
        let s = monte_carlo_summary(&runs, &truth, MadCenter::Mean).unwrap();
        for j in 0..2 {
            assert_abs_diff_eq!(s.mean[j], truth[j], epsilon = 1e-15);
            assert_abs_diff_eq!(s.mad[j], delta, epsilon = 1e-15);
            assert_abs_diff_eq!(s.rmsd[j], delta, epsilon = 1e-15);
        }
    }

    #[test]
    fn summary_needs_two_runs() {
        assert!(monte_carlo_summary(&[vec![1.0]], &[1.0], MadCenter::Mean).is_err());
    }

    #[test]
    fn mad_around_truth() {
        let s = monte_carlo_summary(&[vec![1.0], vec![3.0]], &[0.5], MadCenter::Truth).unwrap();
        assert_eq!(s.mad, vec![1.5]);
        let s = monte_carlo_summary(&[vec![1.0], vec![3.0]], &[0.5], MadCenter::Mean).unwrap();
        assert_eq!(s.mad, vec![1.0]);
    }

    #[test]
    fn median_cases() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    proptest! {
        #[test]
        fn delta_theta_scale_covariant(
            truth in prop::collection::vec(0.1..2.0f64, 1..20),
            noise in prop::collection::vec(-1.0..1.0f64, 20),
            c in prop_oneof![-5.0..-0.1f64, 0.1..5.0f64],
        ) {
            let est: Vec<f64> = truth.iter().zip(&noise).map(|(t, e)| t + e).collect();
            let scaled_est: Vec<f64> = est.iter().map(|v| c * v).collect();
            let scaled_truth: Vec<f64> = truth.iter().map(|v| c * v).collect();
            let a = delta_theta(&est, &truth).unwrap();
            let b = delta_theta(&scaled_est, &scaled_truth).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }

        #[test]
        fn summary_permutation_invariant(
            runs in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 3), 2..10),
            rot in 0usize..10,
        ) {
            let truth = vec![0.5, -0.5, 0.25];
            let mut permuted = runs.clone();
            let len = permuted.len();
            permuted.rotate_left(rot % len);
            permuted.reverse();
            let a = monte_carlo_summary(&runs, &truth, MadCenter::Mean).unwrap();
            let b = monte_carlo_summary(&permuted, &truth, MadCenter::Mean).unwrap();
            for j in 0..3 {
                prop_assert!((a.mean[j] - b.mean[j]).abs() <= 1e-12);
                prop_assert!((a.mad[j] - b.mad[j]).abs() <= 1e-12);
                prop_assert!((a.rmsd[j] - b.rmsd[j]).abs() <= 1e-12);
                prop_assert!(a.mad[j] >= 0.0 && a.rmsd[j] >= 0.0);
            }
        }
    }
}
