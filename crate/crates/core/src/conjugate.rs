//! A linear-Gaussian model with closed-form posterior and evidence.
//!
//! `y = b + w x + e`, `e ~ N(0, 1/tau)`, independent `N(0, s^2)` priors on
//! `b` and `w`. The inputs are centered, which makes the posterior over
//! `(b, w)` factorize, so the mean-field Gaussian family contains it exactly.

use crate::data::{Dataset, Targets};
use crate::error::{Error, Result};
use crate::network::{Activation, NetworkSpec};
use crate::priors::PriorSpec;
use crate::random::{seeded, standard_normal};
use crate::tensor::Tensor;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq)]
pub struct ConjugateToy {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub prior_std: f64,
    pub tau: f64,
}

/// Gaussian posterior marginal of one coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Marginal {
    pub mean: f64,
    pub std: f64,
}

impl ConjugateToy {
    pub fn new(x: Vec<f64>, y: Vec<f64>, prior_std: f64, tau: f64) -> Result<Self> {
        if x.len() != y.len() || x.is_empty() {
            return Err(Error::InvalidArgument("x and y need equal nonzero length".into()));
        }
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let scale = x.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
        if mean.abs() > 1e-12 * scale {
            return Err(Error::InvalidArgument("inputs must be centered".into()));
        }
        if !(prior_std > 0.0) || !(tau > 0.0) {
            return Err(Error::InvalidArgument("prior std and tau must be positive".into()));
        }
        Ok(ConjugateToy { x, y, prior_std, tau })
    }

    /// Draw `n` centered inputs and responses from the model with the given
    /// true coefficients.
    pub fn generate(n: usize, bias: f64, slope: f64, prior_std: f64, tau: f64, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument("need at least two points".into()));
        }
        let mut rng = seeded(seed);
        let mut x: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
        let m = x.iter().sum::<f64>() / n as f64;
        x.iter_mut().for_each(|v| *v -= m);
        // exact centering after rounding
        let residual = x.iter().sum::<f64>() / n as f64;
        x.iter_mut().for_each(|v| *v -= residual);
        let noise = 1.0 / tau.sqrt();
        let y = x
            .iter()
            .map(|xi| bias + slope * xi + noise * standard_normal(&mut rng))
            .collect();
        Self::new(x, y, prior_std, tau)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// The single affine layer `[1, 1]` whose flat parameters are `[b, w]`.
    pub fn spec(&self) -> NetworkSpec {
        NetworkSpec::new(vec![1, 1], vec![Activation::Identity]).expect("valid spec")
    }

    pub fn prior(&self) -> PriorSpec {
        PriorSpec::Gaussian {
            mean: 0.0,
            std: self.prior_std,
        }
    }

    pub fn dataset(&self) -> Dataset {
        let n = self.len();
        Dataset::new(
            Tensor::matrix(n, 1, self.x.clone()).expect("n x 1"),
            Targets::Real(Tensor::matrix(n, 1, self.y.clone()).expect("n x 1")),
        )
        .expect("consistent rows")
    }

    /// Exact posterior marginals of `[b, w]`.
    pub fn posterior(&self) -> [Marginal; 2] {
        let prior_prec = 1.0 / (self.prior_std * self.prior_std);
        let sxx: f64 = self.x.iter().map(|v| v * v).sum();
        let sy: f64 = self.y.iter().sum();
        let sxy: f64 = self.x.iter().zip(&self.y).map(|(a, b)| a * b).sum();
        let lb = prior_prec + self.tau * self.len() as f64;
        let lw = prior_prec + self.tau * sxx;
        [
            Marginal {
                mean: self.tau * sy / lb,
                std: lb.sqrt().recip(),
            },
            Marginal {
                mean: self.tau * sxy / lw,
                std: lw.sqrt().recip(),
            },
        ]
    }

    /// `ln p(y)`, from `ln p(y|t) + ln p(t) - ln p(t|y)` at the posterior mean.
    pub fn log_evidence(&self) -> f64 {
        let [b, w] = self.posterior();
        let n = self.len() as f64;
        let ss: f64 = self
            .x
            .iter()
            .zip(&self.y)
            .map(|(xi, yi)| (yi - b.mean - w.mean * xi).powi(2))
            .sum();
        let log_lik = 0.5 * n * (self.tau.ln() - LN_2PI) - 0.5 * self.tau * ss;
        let s2 = self.prior_std * self.prior_std;
        let log_prior = -LN_2PI - s2.ln() - 0.5 * (b.mean * b.mean + w.mean * w.mean) / s2;
        let log_post = -LN_2PI - b.std.ln() - w.std.ln();
        log_lik + log_prior - log_post
    }
}
