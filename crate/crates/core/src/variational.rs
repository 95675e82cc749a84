//! Mean-field Gaussian proxy posterior and stochastic ELBO estimation.

use rand::Rng;

use crate::data::{Dataset, Targets};
use crate::error::{Error, Result};
use crate::network::NetworkSpec;
use crate::priors::PriorSpec;
use crate::random::{standard_normal, standard_normal_tensor};
use crate::tape::{Tape, Var};
use crate::tensor::{sigmoid, softplus, softplus_inv, ElementwiseOp, Tensor};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Initial posterior standard deviation of every weight.
pub const INIT_SIGMA: f64 = 0.05;

/// Per-weight means `mu`, unconstrained scales `rho` (`sigma = softplus(rho)`)
/// and the observation noise precision `tau_eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalState {
    mu: Tensor,
    rho: Tensor,
    tau_eps: f64,
}

impl VariationalState {
    pub fn new(mu: Tensor, rho: Tensor, tau_eps: f64) -> Result<Self> {
        if mu.len() != rho.len() {
            return Err(Error::ShapeMismatch {
                op: "variational state",
                left: mu.shape().to_vec(),
                right: rho.shape().to_vec(),
            });
        }
        if !mu.is_finite() || !rho.is_finite() {
            return Err(Error::InvalidArgument(
                "variational parameters must be finite".into(),
            ));
        }
        if !(tau_eps > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "noise precision must be positive, got {tau_eps}"
            )));
        }
        let n = mu.len();
        Ok(VariationalState {
            mu: mu.reshape(vec![n])?,
            rho: rho.reshape(vec![n])?,
            tau_eps,
        })
    }

    /// Means drawn from `N(0, 1/fan_in)` per layer, all scales at [`INIT_SIGMA`].
    pub fn init<R: Rng + ?Sized>(spec: &NetworkSpec, tau_eps: f64, rng: &mut R) -> Result<Self> {
        let mut mu = vec![0.0; spec.param_count()];
        for block in spec.blocks() {
            let sd = 1.0 / ((block.rows - 1) as f64).sqrt();
            for m in &mut mu[block.offset..block.offset + block.len()] {
                *m = sd * standard_normal(rng);
            }
        }
        let rho = vec![softplus_inv(INIT_SIGMA); mu.len()];
        Self::new(Tensor::vector(mu), Tensor::vector(rho), tau_eps)
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn mu(&self) -> &Tensor {
        &self.mu
    }

    pub fn rho(&self) -> &Tensor {
        &self.rho
    }

    pub fn sigma(&self) -> Tensor {
        self.rho.map(softplus)
    }

    pub fn tau_eps(&self) -> f64 {
        self.tau_eps
    }

    pub fn set_tau_eps(&mut self, tau: f64) -> Result<()> {
        if !(tau > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "noise precision must be positive, got {tau}"
            )));
        }
        self.tau_eps = tau;
        Ok(())
    }

    /// `(mu, rho)` concatenated.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = self.mu.data().to_vec();
        out.extend_from_slice(self.rho.data());
        out
    }

    /// Add `delta` (laid out as in [`VariationalState::to_flat`]) to the parameters.
    pub fn apply_delta(&mut self, delta: &[f64]) -> Result<()> {
        let n = self.len();
        if delta.len() != 2 * n {
            return Err(Error::ShapeMismatch {
                op: "apply_delta",
                left: vec![delta.len()],
                right: vec![2 * n],
            });
        }
        for (m, d) in self.mu.data_mut().iter_mut().zip(&delta[..n]) {
            *m += d;
        }
        for (r, d) in self.rho.data_mut().iter_mut().zip(&delta[n..]) {
            *r += d;
        }
        if !self.mu.is_finite() || !self.rho.is_finite() {
            return Err(Error::NumericOverflow { op: "apply_delta" });
        }
        Ok(())
    }
}

fn check_noise(vs: &VariationalState, eps: &Tensor) -> Result<()> {
    if eps.len() != vs.len() {
        return Err(Error::ShapeMismatch {
            op: "sample_weights",
            left: eps.shape().to_vec(),
            right: vec![vs.len()],
        });
    }
    Ok(())
}

/// `omega = mu + softplus(rho) * eps`.
pub fn sample_weights(vs: &VariationalState, eps: &Tensor) -> Result<Tensor> {
    check_noise(vs, eps)?;
    let data = vs
        .mu
        .data()
        .iter()
        .zip(vs.rho.data())
        .zip(eps.data())
        .map(|((m, r), e)| m + softplus(*r) * e)
        .collect();
    Ok(Tensor::vector(data))
}

/// Record the reparameterized draw on `tape`. Returns `(omega, sigma)`.
pub fn sample_weights_on_tape(tape: &mut Tape, mu: Var, rho: Var, eps: &Tensor) -> Result<(Var, Var)> {
    if eps.len() != tape.value(mu).len() {
        return Err(Error::ShapeMismatch {
            op: "sample_weights",
            left: eps.shape().to_vec(),
            right: tape.value(mu).shape().to_vec(),
        });
    }
    let e = tape.constant(eps.clone().reshape(vec![eps.len()])?);
    let sigma = tape.unary(ElementwiseOp::Softplus, rho)?;
    let scaled = tape.mul(sigma, e)?;
    Ok((tape.add(mu, scaled)?, sigma))
}

/// `sum_i log N(omega_i | mu_i, sigma_i^2)`.
pub fn log_q(vs: &VariationalState, omega: &Tensor) -> Result<f64> {
    check_noise(vs, omega)?;
    Ok(vs
        .mu
        .data()
        .iter()
        .zip(vs.rho.data())
        .zip(omega.data())
        .map(|((m, r), w)| {
            let s = softplus(*r);
            let z = (w - m) / s;
            -0.5 * LN_2PI - s.ln() - 0.5 * z * z
        })
        .sum())
}

fn log_q_on_tape(tape: &mut Tape, omega: Var, mu: Var, sigma: Var) -> Result<Var> {
    let n = tape.value(omega).len() as f64;
    let diff = tape.sub(omega, mu)?;
    let z = tape.div(diff, sigma)?;
    let z2 = tape.unary(ElementwiseOp::Square, z)?;
    let quad = tape.sum(z2)?;
    let ln_sigma = tape.unary(ElementwiseOp::Ln, sigma)?;
    let ln_sum = tape.sum(ln_sigma)?;
    let half_quad = tape.affine(quad, -0.5, -0.5 * LN_2PI * n)?;
    tape.sub(half_quad, ln_sum)
}

/// Data log-likelihood of `targets` at inputs `x` under weights `omega`.
///
/// Regression: Gaussian with precision `tau_eps` on every output.
/// Classification: categorical over the softmax of the network's logits.
pub fn log_likelihood_on_tape(
    tape: &mut Tape,
    spec: &NetworkSpec,
    omega: Var,
    x: &Tensor,
    targets: &Targets,
    tau_eps: f64,
) -> Result<Var> {
    if targets.len() != x.rows() {
        return Err(Error::ShapeMismatch {
            op: "log_likelihood",
            left: x.shape().to_vec(),
            right: vec![targets.len()],
        });
    }
    if targets.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let xv = tape.constant(x.clone());
    match targets {
        Targets::Real(y) => {
            if !(tau_eps > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "noise precision must be positive, got {tau_eps}"
                )));
            }
            let out = spec.forward_on_tape(tape, omega, xv)?;
            if tape.value(out).shape() != y.shape() {
                return Err(Error::ShapeMismatch {
                    op: "log_likelihood",
                    left: tape.value(out).shape().to_vec(),
                    right: y.shape().to_vec(),
                });
            }
            let yv = tape.constant(y.clone());
            let r = tape.sub(out, yv)?;
            let r2 = tape.unary(ElementwiseOp::Square, r)?;
            let ss = tape.sum(r2)?;
            let count = y.len() as f64;
            tape.affine(ss, -0.5 * tau_eps, 0.5 * count * (tau_eps.ln() - LN_2PI))
        }
        Targets::Labels { labels, .. } => {
            let logits = if spec.has_softmax_output() {
                spec.pre_activation_on_tape(tape, omega, xv)?.0
            } else {
                spec.forward_on_tape(tape, omega, xv)?
            };
            let ls = tape.log_softmax_rows(logits)?;
            let picked = tape.pick(ls, labels)?;
            tape.sum(picked)
        }
    }
}

pub fn log_likelihood(
    spec: &NetworkSpec,
    omega: &Tensor,
    x: &Tensor,
    targets: &Targets,
    tau_eps: f64,
) -> Result<f64> {
    let mut tape = Tape::new();
    let w = tape.constant(omega.clone());
    let ll = log_likelihood_on_tape(&mut tape, spec, w, x, targets, tau_eps)?;
    tape.value(ll).item()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElboEstimate {
    pub elbo: f64,
    /// Mean of `(N/M) * log_likelihood`.
    pub data_term: f64,
    /// Mean of `log_q - log_prior`.
    pub kl_term: f64,
    pub samples_used: usize,
    /// Standard error of the per-sample ELBO values (needs two or more samples).
    pub std_error: Option<f64>,
}

impl ElboEstimate {
    fn from_samples(data: &[f64], kl: &[f64]) -> Self {
        let s = data.len() as f64;
        let data_term = data.iter().sum::<f64>() / s;
        let kl_term = kl.iter().sum::<f64>() / s;
        let elbo = data_term - kl_term;
        let std_error = (data.len() > 1).then(|| {
            let var = data
                .iter()
                .zip(kl)
                .map(|(d, k)| (d - k - elbo).powi(2))
                .sum::<f64>()
                / (s - 1.0);
            (var / s).sqrt()
        });
        ElboEstimate {
            elbo,
            data_term,
            kl_term,
            samples_used: data.len(),
            std_error,
        }
    }
}

/// Gradient of the ELBO with respect to `(mu, rho)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ElboGradient {
    pub mu: Tensor,
    pub rho: Tensor,
}

impl ElboGradient {
    fn zeros(n: usize) -> Self {
        ElboGradient {
            mu: Tensor::zeros(&[n]),
            rho: Tensor::zeros(&[n]),
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = self.mu.data().to_vec();
        out.extend_from_slice(self.rho.data());
        out
    }

    fn add_scaled(&mut self, mu: &[f64], rho: &[f64], c: f64) {
        for (a, b) in self.mu.data_mut().iter_mut().zip(mu) {
            *a += c * b;
        }
        for (a, b) in self.rho.data_mut().iter_mut().zip(rho) {
            *a += c * b;
        }
    }
}

/// The mini-batch ELBO of a network, prior and batch drawn from a training
/// set of `n_total` rows.
#[derive(Debug, Clone, Copy)]
pub struct Objective<'a> {
    pub spec: &'a NetworkSpec,
    pub prior: &'a PriorSpec,
    pub batch: &'a Dataset,
    pub n_total: usize,
}

impl Objective<'_> {
    fn check(&self, vs: &VariationalState, samples: usize) -> Result<()> {
        let m = self.batch.len();
        if m == 0 {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        if m > self.n_total {
            return Err(Error::InvalidArgument(format!(
                "batch size {m} exceeds data size {}",
                self.n_total
            )));
        }
        if samples < 1 {
            return Err(Error::InvalidArgument(
                "need at least one Monte Carlo sample".into(),
            ));
        }
        if vs.len() != self.spec.param_count() {
            return Err(Error::ShapeMismatch {
                op: "elbo",
                left: vec![vs.len()],
                right: vec![self.spec.param_count()],
            });
        }
        Ok(())
    }

    fn scale(&self) -> f64 {
        self.n_total as f64 / self.batch.len() as f64
    }

    fn draw_noise<R: Rng + ?Sized>(&self, vs: &VariationalState, samples: usize, rng: &mut R) -> Vec<Tensor> {
        (0..samples)
            .map(|_| standard_normal_tensor(rng, &[vs.len()]))
            .collect()
    }

    /// Record one sample's terms. Returns `(mu, rho, scaled loglik, log_prior - log_q)`.
    fn record(&self, tape: &mut Tape, vs: &VariationalState, eps: &Tensor) -> Result<(Var, Var, Var, Var)> {
        let mu = tape.leaf(vs.mu.clone());
        let rho = tape.leaf(vs.rho.clone());
        let (omega, sigma) = sample_weights_on_tape(tape, mu, rho, eps)?;
        let ll = log_likelihood_on_tape(
            tape,
            self.spec,
            omega,
            &self.batch.x,
            &self.batch.targets,
            vs.tau_eps,
        )?;
        let data = tape.affine(ll, self.scale(), 0.0)?;
        let lp = self.prior.log_prior_on_tape(tape, omega)?;
        let lq = log_q_on_tape(tape, omega, mu, sigma)?;
        let neg_kl = tape.sub(lp, lq)?;
        Ok((mu, rho, data, neg_kl))
    }

    pub fn elbo<R: Rng + ?Sized>(&self, vs: &VariationalState, samples: usize, rng: &mut R) -> Result<ElboEstimate> {
        self.check(vs, samples)?;
        let noise = self.draw_noise(vs, samples, rng);
        self.elbo_with_noise(vs, &noise)
    }

    /// ELBO estimate with the standard-normal draws supplied by the caller.
    pub fn elbo_with_noise(&self, vs: &VariationalState, noise: &[Tensor]) -> Result<ElboEstimate> {
        self.check(vs, noise.len())?;
        let mut data = Vec::with_capacity(noise.len());
        let mut kl = Vec::with_capacity(noise.len());
        for eps in noise {
            let omega = sample_weights(vs, eps)?;
            let ll = log_likelihood(
                self.spec,
                &omega,
                &self.batch.x,
                &self.batch.targets,
                vs.tau_eps,
            )?;
            let lp = self.prior.log_prior(&omega)?;
            let lq = log_q(vs, &omega)?;
            data.push(self.scale() * ll);
            kl.push(lq - lp);
        }
        let est = ElboEstimate::from_samples(&data, &kl);
        if !est.elbo.is_finite() {
            return Err(Error::NumericOverflow { op: "elbo" });
        }
        Ok(est)
    }

    /// Reparameterization gradient of the `samples`-sample ELBO estimate.
    pub fn grad_pathwise<R: Rng + ?Sized>(
        &self,
        vs: &VariationalState,
        samples: usize,
        rng: &mut R,
    ) -> Result<(ElboEstimate, ElboGradient)> {
        self.check(vs, samples)?;
        let noise = self.draw_noise(vs, samples, rng);
        self.grad_pathwise_with_noise(vs, &noise)
    }

    pub fn grad_pathwise_with_noise(
        &self,
        vs: &VariationalState,
        noise: &[Tensor],
    ) -> Result<(ElboEstimate, ElboGradient)> {
        self.check(vs, noise.len())?;
        let inv_s = 1.0 / noise.len() as f64;
        let mut grad = ElboGradient::zeros(vs.len());
        let mut data = Vec::with_capacity(noise.len());
        let mut kl = Vec::with_capacity(noise.len());
        for eps in noise {
            let mut tape = Tape::new();
            let (mu, rho, d, neg_kl) = self.record(&mut tape, vs, eps)?;
            data.push(tape.value(d).item()?);
            kl.push(-tape.value(neg_kl).item()?);
            let total = tape.add(d, neg_kl)?;
            let g = tape.backward(total)?;
            let gm = g.wrt(mu).expect("mu is a leaf");
            let gr = g.wrt(rho).expect("rho is a leaf");
            grad.add_scaled(gm.data(), gr.data(), inv_s);
        }
        let est = ElboEstimate::from_samples(&data, &kl);
        if !est.elbo.is_finite() || !grad.mu.is_finite() || !grad.rho.is_finite() {
            return Err(Error::NumericOverflow { op: "elbo gradient" });
        }
        Ok((est, grad))
    }

    /// Score-function (log-derivative) gradient estimate.
    pub fn grad_score<R: Rng + ?Sized>(&self, vs: &VariationalState, samples: usize, rng: &mut R) -> Result<ElboGradient> {
        self.check(vs, samples)?;
        let noise = self.draw_noise(vs, samples, rng);
        self.grad_score_with_noise(vs, &noise)
    }

    pub fn grad_score_with_noise(&self, vs: &VariationalState, noise: &[Tensor]) -> Result<ElboGradient> {
        self.check(vs, noise.len())?;
        let inv_s = 1.0 / noise.len() as f64;
        let n = vs.len();
        let mut grad = ElboGradient::zeros(n);
        let mut g_mu = vec![0.0; n];
        let mut g_rho = vec![0.0; n];
        for eps in noise {
            let omega = sample_weights(vs, eps)?;
            let ll = log_likelihood(
                self.spec,
                &omega,
                &self.batch.x,
                &self.batch.targets,
                vs.tau_eps,
            )?;
            let a = self.scale() * ll + self.prior.log_prior(&omega)? - log_q(vs, &omega)?;
            // gradient of log q at fixed omega
            for i in 0..n {
                let r = vs.rho.data()[i];
                let s = softplus(r);
                let z = (omega.data()[i] - vs.mu.data()[i]) / s;
                g_mu[i] = z / s;
                g_rho[i] = (z * z - 1.0) / s * sigmoid(r);
            }
            // score term g * A plus the explicit dependence of A on the
            // parameters, which is -g
            grad.add_scaled(&g_mu, &g_rho, inv_s * (a - 1.0));
        }
        if !grad.mu.is_finite() || !grad.rho.is_finite() {
            return Err(Error::NumericOverflow { op: "score gradient" });
        }
        Ok(grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Activation;
    use crate::random::seeded;
    use hbdl_oracles::stats;
    use proptest::prelude::*;

    fn rho_for(sigma: f64) -> f64 {
        softplus_inv(sigma)
    }

    fn tiny_regression() -> (NetworkSpec, Dataset) {
        let spec = NetworkSpec::tanh_hidden(vec![1, 3, 1], Activation::Identity).unwrap();
        let ds = crate::data::gen_xsinx(6, 0.1, -2.0, 2.0, 4).unwrap();
        (spec, ds)
    }

    #[test]
    fn sample_weights_examples() {
        let vs = VariationalState::new(
            Tensor::vector(vec![0.0]),
            Tensor::vector(vec![rho_for(1.0)]),
            1.0,
        )
        .unwrap();
        let w = sample_weights(&vs, &Tensor::vector(vec![0.5])).unwrap();
        assert!((w.data()[0] - 0.5).abs() < 1e-15);

        let vs = VariationalState::new(
            Tensor::vector(vec![1.5, -2.0]),
            Tensor::vector(vec![0.3, -4.0]),
            1.0,
        )
        .unwrap();
        let w = sample_weights(&vs, &Tensor::vector(vec![0.0, 0.0])).unwrap();
        assert_eq!(w.data(), vs.mu().data());
        assert!(sample_weights(&vs, &Tensor::vector(vec![0.0])).is_err());
    }

    #[test]
    fn reparameterized_draws_have_the_right_moments() {
        let (mu, sigma) = (0.7, 1.3);
        let vs = VariationalState::new(
            Tensor::vector(vec![mu]),
            Tensor::vector(vec![rho_for(sigma)]),
            1.0,
        )
        .unwrap();
        let mut rng = seeded(8);
        let draws: Vec<f64> = (0..100_000)
            .map(|_| {
                let e = Tensor::vector(vec![standard_normal(&mut rng)]);
                sample_weights(&vs, &e).unwrap().data()[0]
            })
            .collect();
        let n = draws.len() as f64;
        let m = stats::mean(&draws);
        let sd = stats::variance(&draws).sqrt();
        assert!((m - mu).abs() < 3.0 * sigma / n.sqrt(), "{m}");
        // standard error of the sample std is about sigma / sqrt(2n)
        assert!((sd - sigma).abs() < 3.0 * sigma / (2.0 * n).sqrt(), "{sd}");

        let standardized: Vec<f64> = draws[..10_000].iter().map(|w| (w - mu) / sigma).collect();
        // 1% critical value of the one-sample KS statistic
        let crit = 1.628 / (10_000f64).sqrt();
        assert!(stats::ks_standard_normal(&standardized) < crit);
    }

    #[test]
    fn log_q_examples() {
        let d = 4;
        let vs = VariationalState::new(
            Tensor::vector(vec![0.3; d]),
            Tensor::vector(vec![rho_for(1.0); d]),
            1.0,
        )
        .unwrap();
        let lq = log_q(&vs, vs.mu()).unwrap();
        assert!((lq + 0.5 * d as f64 * LN_2PI).abs() < 1e-12);

        let vs = VariationalState::new(
            Tensor::vector(vec![0.0]),
            Tensor::vector(vec![rho_for(2.0)]),
            1.0,
        )
        .unwrap();
        let lq = log_q(&vs, &Tensor::vector(vec![2.0])).unwrap();
        let expected = -(2f64.ln()) - 0.5 * LN_2PI - 0.5;
        assert!((lq - expected).abs() < 1e-12);
    }

    #[test]
    fn log_likelihood_examples() {
        let spec = NetworkSpec::new(vec![1, 1], vec![Activation::Identity]).unwrap();
        // omega = [bias, weight] = [0, 1] is the identity map
        let omega = Tensor::vector(vec![0.0, 1.0]);
        let x = Tensor::matrix(1, 1, vec![0.4]).unwrap();
        let perfect = Targets::Real(x.clone());
        let ll = log_likelihood(&spec, &omega, &x, &perfect, 1.0).unwrap();
        assert!((ll + 0.5 * LN_2PI).abs() < 1e-12);

        let x2 = Tensor::matrix(2, 1, vec![0.0, 1.0]).unwrap();
        let y2 = Targets::Real(Tensor::matrix(2, 1, vec![1.0, 2.0]).unwrap());
        let ll = log_likelihood(&spec, &omega, &x2, &y2, 1.0).unwrap();
        assert!((ll - (-1.0 - LN_2PI)).abs() < 1e-12);

        let cls = NetworkSpec::new(vec![1, 2], vec![Activation::Softmax]).unwrap();
        let zeros = Tensor::zeros(&[4]);
        let labels = Targets::Labels {
            labels: vec![0],
            classes: 2,
        };
        let ll = log_likelihood(&cls, &zeros, &x, &labels, 1.0).unwrap();
        assert!((ll - 0.5f64.ln()).abs() < 1e-12);

        let bad = Targets::Labels {
            labels: vec![2],
            classes: 3,
        };
        assert!(log_likelihood(&cls, &zeros, &x, &bad, 1.0).is_err());
        assert!(log_likelihood(&spec, &omega, &x, &perfect, 0.0).is_err());
    }

    #[test]
    fn minibatch_scaling() {
        let (spec, ds) = tiny_regression();
        let prior = PriorSpec::Gaussian { mean: 0.0, std: 1.0 };
        let vs = VariationalState::init(&spec, 4.0, &mut seeded(1)).unwrap();
        let batch = ds.select(&[0, 1]);
        let noise = vec![standard_normal_tensor(&mut seeded(2), &[vs.len()])];
        let omega = sample_weights(&vs, &noise[0]).unwrap();
        let ll = log_likelihood(&spec, &omega, &batch.x, &batch.targets, 4.0).unwrap();
        let est = Objective {
            spec: &spec,
            prior: &prior,
            batch: &batch,
            n_total: 20,
        }
        .elbo_with_noise(&vs, &noise)
        .unwrap();
        assert!((est.data_term - 10.0 * ll).abs() < 1e-9 * ll.abs().max(1.0));
        assert_eq!(est.elbo, est.data_term - est.kl_term);
        assert_eq!(est.samples_used, 1);
        assert!(est.std_error.is_none());

        let bad = Objective {
            spec: &spec,
            prior: &prior,
            batch: &ds,
            n_total: 3,
        };
        assert!(bad.elbo(&vs, 1, &mut seeded(0)).is_err());
        let ok = Objective { n_total: 6, ..bad };
        assert!(ok.elbo(&vs, 0, &mut seeded(0)).is_err());
    }

    #[test]
    fn kl_vanishes_when_prior_equals_q() {
        let (spec, ds) = tiny_regression();
        let n = spec.param_count();
        let vs = VariationalState::new(
            Tensor::zeros(&[n]),
            Tensor::full(&[n], rho_for(0.4)),
            1.0,
        )
        .unwrap();
        let prior = PriorSpec::Gaussian { mean: 0.0, std: 0.4 };
        let obj = Objective {
            spec: &spec,
            prior: &prior,
            batch: &ds,
            n_total: ds.len(),
        };
        let mut rng = seeded(3);
        let kls: Vec<f64> = (0..10_000)
            .map(|_| obj.elbo(&vs, 1, &mut rng).unwrap().kl_term)
            .collect();
        let m = stats::mean(&kls);
        // identical densities make every term vanish up to rounding
        assert!(m.abs() <= 3.0 * stats::std_error(&kls) + 1e-12, "{m}");
    }

    fn fd_grad(obj: &Objective, vs: &VariationalState, noise: &[Tensor], h: f64) -> Vec<f64> {
        let flat = vs.to_flat();
        let n = vs.len();
        (0..flat.len())
            .map(|i| {
                let eval = |delta: f64| {
                    let mut p = flat.clone();
                    p[i] += delta;
                    let s = VariationalState::new(
                        Tensor::vector(p[..n].to_vec()),
                        Tensor::vector(p[n..].to_vec()),
                        vs.tau_eps(),
                    )
                    .unwrap();
                    obj.elbo_with_noise(&s, noise).unwrap().elbo
                };
                (eval(h) - eval(-h)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn pathwise_matches_common_noise_finite_differences() {
        let (spec, ds) = tiny_regression();
        for prior in [
            PriorSpec::Gaussian { mean: 0.0, std: 1.0 },
            PriorSpec::Laplace { loc: 0.0, scale: 1.0 },
            "hier(gaussian,ig(1,1))".parse().unwrap(),
        ] {
            let obj = Objective {
                spec: &spec,
                prior: &prior,
                batch: &ds,
                n_total: 12,
            };
            let mut rng = seeded(5);
            let vs = VariationalState::init(&spec, 2.0, &mut rng).unwrap();
            let noise: Vec<Tensor> = (0..3)
                .map(|_| standard_normal_tensor(&mut rng, &[vs.len()]))
                .collect();
            let (_, g) = obj.grad_pathwise_with_noise(&vs, &noise).unwrap();
            let g = g.to_flat();
            assert_eq!(g.len(), 2 * spec.param_count());
            let fd = fd_grad(&obj, &vs, &noise, 1e-5);
            for (a, b) in g.iter().zip(&fd) {
                let err = (a - b).abs() / a.abs().max(b.abs()).max(1.0);
                assert!(err < 1e-5, "{prior}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn classification_gradient_matches_finite_differences() {
        let spec = NetworkSpec::tanh_hidden(vec![2, 3, 2], Activation::Softmax).unwrap();
        let ds = crate::data::gen_two_moons(10, 0.1, 2).unwrap();
        let prior = PriorSpec::Cauchy { loc: 1.0, scale: 1.0 };
        let obj = Objective {
            spec: &spec,
            prior: &prior,
            batch: &ds,
            n_total: 10,
        };
        let mut rng = seeded(9);
        let vs = VariationalState::init(&spec, 1.0, &mut rng).unwrap();
        let noise = vec![standard_normal_tensor(&mut rng, &[vs.len()])];
        let (_, g) = obj.grad_pathwise_with_noise(&vs, &noise).unwrap();
        let fd = fd_grad(&obj, &vs, &noise, 1e-5);
        for (a, b) in g.to_flat().iter().zip(&fd) {
            assert!((a - b).abs() / a.abs().max(b.abs()).max(1.0) < 1e-5);
        }
    }

    #[test]
    fn kl_gradient_vanishes_at_prior_without_data() {
        // a vanishing noise precision switches the likelihood off
        let spec = NetworkSpec::new(vec![1, 1], vec![Activation::Identity]).unwrap();
        let ds = Dataset::new(
            Tensor::matrix(1, 1, vec![0.0]).unwrap(),
            Targets::Real(Tensor::matrix(1, 1, vec![0.0]).unwrap()),
        )
        .unwrap();
        let vs = VariationalState::new(
            Tensor::zeros(&[2]),
            Tensor::full(&[2], rho_for(1.0)),
            1e-300,
        )
        .unwrap();
        let prior = PriorSpec::Gaussian { mean: 0.0, std: 1.0 };
        let obj = Objective {
            spec: &spec,
            prior: &prior,
            batch: &ds,
            n_total: 1,
        };
        let mut rng = seeded(4);
        let mut coords = vec![Vec::new(); 4];
        for _ in 0..4000 {
            let (_, g) = obj.grad_pathwise(&vs, 1, &mut rng).unwrap();
            for (c, v) in coords.iter_mut().zip(g.to_flat()) {
                c.push(v);
            }
        }
        for c in &coords {
            assert!(stats::mean(c).abs() < 3.0 * stats::std_error(c));
        }
    }

    #[test]
    fn score_and_pathwise_agree_in_expectation() {
        let spec = NetworkSpec::new(vec![1, 1], vec![Activation::Identity]).unwrap();
        let ds = Dataset::new(
            Tensor::matrix(3, 1, vec![-1.0, 0.0, 1.0]).unwrap(),
            Targets::Real(Tensor::matrix(3, 1, vec![-0.8, 0.1, 1.2]).unwrap()),
        )
        .unwrap();
        let prior = PriorSpec::Gaussian { mean: 0.0, std: 1.0 };
        let obj = Objective {
            spec: &spec,
            prior: &prior,
            batch: &ds,
            n_total: 3,
        };
        let vs = VariationalState::new(
            Tensor::vector(vec![0.2, 0.5]),
            Tensor::vector(vec![rho_for(0.3), rho_for(0.4)]),
            2.0,
        )
        .unwrap();
        let mut rng = seeded(12);
        let reps = 100_000;
        let mut sf: Vec<Vec<f64>> = (0..4).map(|_| Vec::with_capacity(reps)).collect();
        let mut pw: Vec<Vec<f64>> = (0..4).map(|_| Vec::with_capacity(reps)).collect();
        for _ in 0..reps {
            let a = obj.grad_score(&vs, 1, &mut rng).unwrap().to_flat();
            let b = obj.grad_pathwise(&vs, 1, &mut rng).unwrap().1.to_flat();
            for j in 0..4 {
                sf[j].push(a[j]);
                pw[j].push(b[j]);
            }
        }
        for j in 0..4 {
            let diff = stats::mean(&sf[j]) - stats::mean(&pw[j]);
            let se = (stats::std_error(&sf[j]).powi(2) + stats::std_error(&pw[j]).powi(2)).sqrt();
            assert!(diff.abs() < 3.0 * se, "coordinate {j}: {diff} vs {se}");
            assert!(stats::variance(&sf[j]) >= stats::variance(&pw[j]));
        }
    }

    #[test]
    fn score_estimator_error_shrinks_with_samples() {
        let spec = NetworkSpec::new(vec![1, 1], vec![Activation::Identity]).unwrap();
        let ds = Dataset::new(
            Tensor::matrix(2, 1, vec![-1.0, 1.0]).unwrap(),
            Targets::Real(Tensor::matrix(2, 1, vec![-1.0, 1.0]).unwrap()),
        )
        .unwrap();
        let prior = PriorSpec::Gaussian { mean: 0.0, std: 1.0 };
        let obj = Objective {
            spec: &spec,
            prior: &prior,
            batch: &ds,
            n_total: 2,
        };
        let vs = VariationalState::new(
            Tensor::vector(vec![0.0, 0.5]),
            Tensor::vector(vec![rho_for(0.5); 2]),
            1.0,
        )
        .unwrap();
        let spread = |s: usize| {
            let mut rng = seeded(s as u64);
            let v: Vec<f64> = (0..400)
                .map(|_| obj.grad_score(&vs, s, &mut rng).unwrap().mu.data()[1])
                .collect();
            stats::variance(&v).sqrt()
        };
        let ratio = spread(4) / spread(64);
        // the standard error falls like 1/sqrt(S): 4x here
        assert!((2.8..5.6).contains(&ratio), "{ratio}");
    }

    proptest! {
        #[test]
        fn log_q_permutation_invariant(
            entries in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0), 1..12),
            k in 0usize..12,
        ) {
            let mu: Vec<f64> = entries.iter().map(|e| e.0).collect();
            let rho: Vec<f64> = entries.iter().map(|e| e.1).collect();
            let w: Vec<f64> = entries.iter().map(|e| e.2).collect();
            let vs = VariationalState::new(Tensor::vector(mu.clone()), Tensor::vector(rho.clone()), 1.0).unwrap();
            let a = log_q(&vs, &Tensor::vector(w.clone())).unwrap();
            let r = k % entries.len();
            let rot = |mut v: Vec<f64>| { v.rotate_left(r); v };
            let vs2 = VariationalState::new(Tensor::vector(rot(mu)), Tensor::vector(rot(rho)), 1.0).unwrap();
            let b = log_q(&vs2, &Tensor::vector(rot(w))).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }

        #[test]
        fn elbo_decomposes_exactly(seed in 0u64..500, samples in 1usize..5) {
            let (spec, ds) = tiny_regression();
            let prior = PriorSpec::Laplace { loc: 0.0, scale: 1.0 };
            let mut rng = seeded(seed);
            let vs = VariationalState::init(&spec, 3.0, &mut rng).unwrap();
            let est = Objective { spec: &spec, prior: &prior, batch: &ds, n_total: 6 }
                .elbo(&vs, samples, &mut rng)
                .unwrap();
            prop_assert_eq!(est.elbo, est.data_term - est.kl_term);
            prop_assert!(vs.sigma().data().iter().all(|s| *s > 0.0));
        }
    }
}
