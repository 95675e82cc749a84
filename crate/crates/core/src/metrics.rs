//! Evaluation metrics.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricReport {
    pub r2: Option<f64>,
    pub rmse: Option<f64>,
    pub accuracy: Option<f64>,
    /// Keyed by the level in parts per thousand so the map orders cleanly.
    pub coverage: BTreeMap<u32, f64>,
}

fn check_lengths(op: &'static str, a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            op,
            left: vec![a.len()],
            right: vec![b.len()],
        });
    }
    if a.is_empty() {
        return Err(Error::InvalidArgument(format!("{op} of empty input")));
    }
    Ok(())
}

/// Coefficient of determination on the flattened values with a pooled mean.
pub fn r2(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    check_lengths("r2", y_true, y_pred)?;
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let ss_tot: f64 = y_true.iter().map(|y| (y - mean) * (y - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::UndefinedMetric("r2 of constant targets"));
    }
    let ss_res: f64 = y_true
        .iter()
        .zip(y_pred)
        .map(|(y, p)| (y - p) * (y - p))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn rmse(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    check_lengths("rmse", y_true, y_pred)?;
    let ss: f64 = y_true
        .iter()
        .zip(y_pred)
        .map(|(y, p)| (y - p) * (y - p))
        .sum();
    Ok((ss / y_true.len() as f64).sqrt())
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Fraction of rows whose most probable class equals the label.
pub fn accuracy(labels: &[usize], probs: &Tensor) -> Result<f64> {
    if probs.shape().len() != 2 || probs.rows() != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "accuracy",
            left: probs.shape().to_vec(),
            right: vec![labels.len()],
        });
    }
    if labels.is_empty() {
        return Err(Error::InvalidArgument("accuracy of empty input".into()));
    }
    let mut correct = 0usize;
    for (i, &label) in labels.iter().enumerate() {
        let row = probs.row(i);
        let total: f64 = row.iter().sum();
        if row.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "row {i} is not a probability vector (sum {total})"
            )));
        }
        if argmax(row) == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / labels.len() as f64)
}

/// Fraction of truths with `lo <= y <= hi`.
pub fn coverage(y_true: &[f64], intervals: &[(f64, f64)]) -> Result<f64> {
    if y_true.len() != intervals.len() {
        return Err(Error::ShapeMismatch {
            op: "coverage",
            left: vec![y_true.len()],
            right: vec![intervals.len()],
        });
    }
    if y_true.is_empty() {
        return Err(Error::InvalidArgument("coverage of empty input".into()));
    }
    let inside = y_true
        .iter()
        .zip(intervals)
        .filter(|&(&y, &(lo, hi))| lo <= y && y <= hi)
        .count();
    Ok(inside as f64 / y_true.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use hbdl_oracles::stats;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn r2_examples() {
        assert_eq!(r2(&[1.0, 2.0, 4.0], &[1.0, 2.0, 4.0]).unwrap(), 1.0);
        assert_eq!(r2(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap(), 0.0);
        assert!((r2(&[0.0, 1.0, 2.0], &[0.0, 1.0, 1.0]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(
            r2(&[3.0, 3.0], &[1.0, 2.0]).unwrap_err(),
            Error::UndefinedMetric("r2 of constant targets")
        );
        assert!(r2(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[3.0, 4.0], &[0.0, 0.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert!(rmse(&[], &[]).is_err());
    }

    #[test]
    fn accuracy_examples() {
        let one_hot = Tensor::matrix(3, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0]).unwrap();
        assert_eq!(accuracy(&[0, 1, 0], &one_hot).unwrap(), 1.0);
        let uniform = Tensor::full(&[4, 2], 0.5);
        assert_eq!(accuracy(&[0, 0, 0, 0], &uniform).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 1, 0, 1], &uniform).unwrap(), 0.5);
        let bad = Tensor::matrix(1, 2, vec![0.7, 0.7]).unwrap();
        assert!(accuracy(&[0], &bad).is_err());
    }

    #[test]
    fn coverage_examples() {
        let y = [0.3, -2.0, 5.0];
        let wide = vec![(-1e300, 1e300); 3];
        assert_eq!(coverage(&y, &wide).unwrap(), 1.0);
        let exact: Vec<(f64, f64)> = y.iter().map(|&v| (v, v)).collect();
        assert_eq!(coverage(&y, &exact).unwrap(), 1.0);
    }

    #[test]
    fn coverage_of_calibrated_gaussians() {
        // z for a central 97% interval
        let z = 2.170_090_377_584_56;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut truths = Vec::new();
        let mut intervals = Vec::new();
        for i in 0..10_000 {
            let mu = (i as f64 * 0.37).sin() * 3.0;
            let sd = 0.5 + (i % 7) as f64 * 0.2;
            let e: f64 = StandardNormal.sample(&mut rng);
            truths.push(mu + sd * e);
            intervals.push((mu - z * sd, mu + z * sd));
        }
        assert!((stats::standard_normal_cdf(z) - stats::standard_normal_cdf(-z) - 0.97).abs() < 1e-9);
        let c = coverage(&truths, &intervals).unwrap();
        assert!((c - 0.97).abs() <= 0.02, "{c}");
    }

    proptest! {
        #[test]
        fn agrees_with_two_pass_oracle(pairs in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 2..60)) {
            let y: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let p: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            prop_assume!(y.iter().any(|v| *v != y[0]));
            prop_assert!((r2(&y, &p).unwrap() - stats::r2(&y, &p)).abs() <= 1e-12 * (1.0 + stats::r2(&y, &p).abs()));
            prop_assert!((rmse(&y, &p).unwrap() - stats::rmse(&y, &p)).abs() <= 1e-12);
        }

        #[test]
        fn r2_permutation_invariant(pairs in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 2..40), rot in 0usize..40) {
            let y: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            prop_assume!(y.iter().any(|v| *v != y[0]));
            let p: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let k = rot % pairs.len();
            let mut yr = y.clone();
            let mut pr = p.clone();
            yr.rotate_left(k);
            pr.rotate_left(k);
            yr.reverse();
            pr.reverse();
            prop_assert!((r2(&y, &p).unwrap() - r2(&yr, &pr).unwrap()).abs() <= 1e-10);
        }

        #[test]
        fn argmax_scale_invariant(row in prop::collection::vec(0.0f64..1.0, 1..8), c in 1e-3f64..1e3) {
            let scaled: Vec<f64> = row.iter().map(|v| v * c).collect();
            prop_assert_eq!(argmax(&row), argmax(&scaled));
        }
    }
}
