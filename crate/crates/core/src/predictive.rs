//! Monte Carlo predictive distribution: samples, moments and credible intervals.

use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};
use crate::network::{forward_flat, NetworkSpec};
use crate::random::standard_normal_tensor;
use crate::tensor::Tensor;
use crate::variational::{sample_weights, VariationalState};

/// Default number of weight draws used for prediction.
pub const DEFAULT_DRAWS: usize = 1000;

/// Network outputs at `x` for `k` independent weight draws, shaped
/// `[k, points, n_out]`.
pub fn predict_samples<R: Rng + ?Sized>(
    spec: &NetworkSpec,
    vs: &VariationalState,
    x: &Tensor,
    k: usize,
    rng: &mut R,
) -> Result<Tensor> {
    if k < 1 {
        return Err(Error::InvalidArgument("need at least one draw".into()));
    }
    let (points, n_out) = (x.rows(), spec.output_dim());
    let mut data = Vec::with_capacity(k * points * n_out);
    for _ in 0..k {
        let eps = standard_normal_tensor(rng, &[vs.len()]);
        let omega = sample_weights(vs, &eps)?;
        data.extend_from_slice(forward_flat(spec, &omega, x)?.data());
    }
    Tensor::new(vec![k, points, n_out], data)
}

fn check_block(samples: &Tensor) -> Result<(usize, usize)> {
    if samples.shape().len() != 2 {
        return Err(Error::ShapeMismatch {
            op: "predictive",
            left: samples.shape().to_vec(),
            right: vec![0, 0],
        });
    }
    Ok((samples.rows(), samples.cols()))
}

/// Per-output mean of a `k x n_out` block of draws.
pub fn predictive_mean(samples: &Tensor) -> Result<Vec<f64>> {
    let (k, d) = check_block(samples)?;
    let mut mean = vec![0.0; d];
    for i in 0..k {
        for (m, v) in mean.iter_mut().zip(samples.row(i)) {
            *m += v;
        }
    }
    Ok(mean.into_iter().map(|m| m / k as f64).collect())
}

/// `tau^-1 I` plus the 1/k sample covariance of a `k x n_out` block. Without a
/// precision (classification) only the covariance is returned.
pub fn predictive_variance(samples: &Tensor, tau_eps: Option<f64>) -> Result<Tensor> {
    let (k, d) = check_block(samples)?;
    let mean = predictive_mean(samples)?;
    let mut cov = vec![0.0; d * d];
    for i in 0..k {
        let row = samples.row(i);
        for a in 0..d {
            let ca = row[a] - mean[a];
            for b in a..d {
                cov[a * d + b] += ca * (row[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            cov[a * d + b] /= k as f64;
            cov[b * d + a] = cov[a * d + b];
        }
    }
    if let Some(tau) = tau_eps {
        if !(tau > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "noise precision must be positive, got {tau}"
            )));
        }
        for a in 0..d {
            cov[a * d + a] += 1.0 / tau;
        }
    }
    Tensor::matrix(d, d, cov)
}

/// Linear interpolation between order statistics of sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Central interval per output containing `level` of the draws. A single
/// draw gives the degenerate interval at that draw.
pub fn credible_interval(samples: &Tensor, level: f64) -> Result<Vec<(f64, f64)>> {
    let (k, d) = check_block(samples)?;
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "credible level must be in (0, 1), got {level}"
        )));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("credible interval of no draws".into()));
    }
    let mut out = Vec::with_capacity(d);
    let mut column = vec![0.0; k];
    for j in 0..d {
        for (i, c) in column.iter_mut().enumerate() {
            *c = samples.row(i)[j];
        }
        column.sort_by(f64::total_cmp);
        out.push((
            quantile_sorted(&column, 0.5 * (1.0 - level)),
            quantile_sorted(&column, 0.5 * (1.0 + level)),
        ));
    }
    Ok(out)
}

/// `(level, per point, per output (lo, hi))`.
pub type LevelIntervals = (f64, Vec<Vec<(f64, f64)>>);

/// Summary of the predictive distribution at a set of points.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveSummary {
    /// `[k, points, n_out]`.
    pub samples: Tensor,
    /// `[points, n_out]`.
    pub mean: Tensor,
    /// One `n_out x n_out` matrix per point.
    pub variance: Vec<Tensor>,
    pub tau_eps: Option<f64>,
    pub intervals: Vec<LevelIntervals>,
}

impl PredictiveSummary {
    pub fn from_samples(samples: Tensor, tau_eps: Option<f64>, levels: &[f64]) -> Result<Self> {
        if samples.shape().len() != 3 {
            return Err(Error::ShapeMismatch {
                op: "predictive summary",
                left: samples.shape().to_vec(),
                right: vec![0, 0, 0],
            });
        }
        let (k, points, d) = (samples.shape()[0], samples.shape()[1], samples.shape()[2]);
        let mut mean = Vec::with_capacity(points * d);
        let mut variance = Vec::with_capacity(points);
        let mut intervals: Vec<LevelIntervals> =
            levels.iter().map(|&l| (l, Vec::with_capacity(points))).collect();
        for p in 0..points {
            let block = point_block(&samples, k, points, d, p)?;
            mean.extend(predictive_mean(&block)?);
            variance.push(predictive_variance(&block, tau_eps)?);
            for (level, per_point) in intervals.iter_mut() {
                per_point.push(credible_interval(&block, *level)?);
            }
        }
        Ok(PredictiveSummary {
            mean: Tensor::matrix(points, d, mean)?,
            samples,
            variance,
            tau_eps,
            intervals,
        })
    }

    pub fn points(&self) -> usize {
        self.mean.rows()
    }

    pub fn outputs(&self) -> usize {
        self.mean.cols()
    }

    /// Diagonal of the variance at every point, `[points, n_out]`.
    pub fn variance_diagonal(&self) -> Tensor {
        let d = self.outputs();
        let data = self
            .variance
            .iter()
            .flat_map(|v| (0..d).map(move |j| v.data()[j * d + j]))
            .collect();
        Tensor::matrix(self.points(), d, data).expect("consistent shapes")
    }

    /// CSV rows of `x`, means, variances and interval bounds per level.
    pub fn to_csv(&self, x: &Tensor) -> Result<String> {
        if x.rows() != self.points() {
            return Err(Error::ShapeMismatch {
                op: "prediction csv",
                left: x.shape().to_vec(),
                right: vec![self.points()],
            });
        }
        let d = self.outputs();
        let mut header: Vec<String> = (0..x.cols()).map(|j| format!("x{j}")).collect();
        header.extend((0..d).map(|j| format!("mean{j}")));
        header.extend((0..d).map(|j| format!("var{j}")));
        for (level, _) in &self.intervals {
            for j in 0..d {
                header.push(format!("lo{j}_{level}"));
                header.push(format!("hi{j}_{level}"));
            }
        }
        let diag = self.variance_diagonal();
        let mut out = header.join(",");
        out.push('\n');
        for p in 0..self.points() {
            let mut fields: Vec<String> = x.row(p).iter().map(|v| format!("{v:?}")).collect();
            fields.extend(self.mean.row(p).iter().map(|v| format!("{v:?}")));
            fields.extend(diag.row(p).iter().map(|v| format!("{v:?}")));
            for (_, per_point) in &self.intervals {
                for (lo, hi) in &per_point[p] {
                    fields.push(format!("{lo:?}"));
                    fields.push(format!("{hi:?}"));
                }
            }
            let _ = writeln!(out, "{}", fields.join(","));
        }
        Ok(out)
    }
}

fn point_block(samples: &Tensor, k: usize, points: usize, d: usize, p: usize) -> Result<Tensor> {
    let mut data = Vec::with_capacity(k * d);
    for i in 0..k {
        let start = (i * points + p) * d;
        data.extend_from_slice(&samples.data()[start..start + d]);
    }
    Tensor::matrix(k, d, data)
}

/// Draw `k` samples at `x` and summarize them. The noise precision is used
/// only for networks without a softmax output.
pub fn predict<R: Rng + ?Sized>(
    spec: &NetworkSpec,
    vs: &VariationalState,
    x: &Tensor,
    k: usize,
    levels: &[f64],
    rng: &mut R,
) -> Result<PredictiveSummary> {
    let samples = predict_samples(spec, vs, x, k, rng)?;
    let tau = (!spec.has_softmax_output()).then_some(vs.tau_eps());
    PredictiveSummary::from_samples(samples, tau, levels)
}
