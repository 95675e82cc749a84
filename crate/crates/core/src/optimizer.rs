//! Adam, the step-decay learning-rate schedule and the two training loops.

use std::fmt::Write as _;

use rand::Rng;

use crate::data::{Dataset, Targets};
use crate::error::{Error, Result};
use crate::network::{forward_flat, FlatParams, NetworkSpec};
use crate::priors::PriorSpec;
use crate::random::{permutation, standard_normal, standard_normal_tensor};
use crate::tape::Tape;
use crate::tensor::{ElementwiseOp, Tensor};
use crate::variational::{sample_weights, Objective, VariationalState};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self::with_rates(len, 0.9, 0.999, 1e-8)
    }

    pub fn with_rates(len: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            beta1,
            beta2,
            eps,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// Update the moment estimates with `grad` and return the parameter delta
    /// that descends the loss whose gradient is `grad`.
    pub fn step(&mut self, grad: &[f64], lr: f64) -> Result<Vec<f64>> {
        if grad.len() != self.m.len() {
            return Err(Error::ShapeMismatch {
                op: "adam_step",
                left: vec![grad.len()],
                right: vec![self.m.len()],
            });
        }
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let mut delta = Vec::with_capacity(grad.len());
        for ((m, v), &g) in self.m.iter_mut().zip(self.v.iter_mut()).zip(grad) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            delta.push(-lr * m_hat / (v_hat.sqrt() + self.eps));
        }
        Ok(delta)
    }
}

/// `base * factor^floor(epoch / interval)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub base: f64,
    pub factor: f64,
    pub interval: usize,
}

impl LrSchedule {
    pub fn constant(base: f64) -> Self {
        LrSchedule {
            base,
            factor: 1.0,
            interval: 1,
        }
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.base * self.factor.powi((epoch / self.interval.max(1)) as i32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Monte Carlo samples per gradient estimate.
    pub samples: usize,
    pub schedule: LrSchedule,
    /// Initial (or fixed) observation noise precision.
    pub tau_eps: f64,
    /// Re-estimate `tau_eps` after every epoch from the predictive mean.
    pub tau_refresh: bool,
    /// Weight draws used for the predictive mean in a refresh.
    pub refresh_draws: usize,
    /// Upper bound applied to refreshed precisions.
    pub tau_max: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1000,
            batch_size: 30,
            samples: 1,
            schedule: LrSchedule::constant(0.01),
            tau_eps: 1.0,
            tau_refresh: false,
            refresh_draws: 10,
            tau_max: 1e4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.batch_size == 0 || self.batch_size > n {
            return Err(Error::InvalidArgument(format!(
                "batch size {} must be in 1..={n}",
                self.batch_size
            )));
        }
        if self.samples == 0 {
            return Err(Error::InvalidArgument("samples must be at least 1".into()));
        }
        if !(self.schedule.base > 0.0) || !(self.schedule.factor > 0.0) || self.schedule.interval == 0 {
            return Err(Error::InvalidArgument(format!(
                "invalid learning-rate schedule {:?}",
                self.schedule
            )));
        }
        if !(self.tau_eps > 0.0) || !(self.tau_max > 0.0) {
            return Err(Error::InvalidArgument("noise precision must be positive".into()));
        }
        if self.tau_refresh && self.refresh_draws == 0 {
            return Err(Error::InvalidArgument("refresh_draws must be at least 1".into()));
        }
        Ok(())
    }
}

/// One row of a training trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub elbo: f64,
    pub data_term: f64,
    pub kl_term: f64,
    pub lr: f64,
    pub tau_eps: f64,
}

pub fn trace_to_csv(trace: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,elbo,data_term,kl_term,lr,tau_eps\n");
    for r in trace {
        let _ = writeln!(
            out,
            "{},{:?},{:?},{:?},{:?},{:?}",
            r.epoch, r.elbo, r.data_term, r.kl_term, r.lr, r.tau_eps
        );
    }
    out
}

/// Mini-batch index sets for one epoch; the final batch may be short.
fn epoch_batches<R: Rng + ?Sized>(rng: &mut R, n: usize, m: usize) -> Vec<Vec<usize>> {
    permutation(rng, n).chunks(m).map(<[usize]>::to_vec).collect()
}

/// Result of point-estimate training.
#[derive(Debug, Clone, PartialEq)]
pub struct DeterministicFit {
    pub params: FlatParams,
    /// Maximum-likelihood noise precision; `+inf` when every residual is zero.
    pub tau_eps: f64,
    pub zero_residual: bool,
    /// Mean squared error on the full training set after each epoch.
    pub trace: Vec<f64>,
}

fn real_targets(data: &Dataset) -> Result<&Tensor> {
    match &data.targets {
        Targets::Real(y) => Ok(y),
        Targets::Labels { .. } => Err(Error::InvalidArgument(
            "this operation needs a regression dataset".into(),
        )),
    }
}

/// Mean squared residual per scalar output.
fn mean_squared_residual(pred: &Tensor, y: &Tensor) -> Result<f64> {
    let r = pred.sub(y)?;
    Ok(r.data().iter().map(|v| v * v).sum::<f64>() / r.len() as f64)
}

/// Precision estimate `1 / mean squared residual`, `+inf` for a perfect fit.
pub fn tau_mle(pred: &Tensor, y: &Tensor) -> Result<f64> {
    let mse = mean_squared_residual(pred, y)?;
    Ok(if mse == 0.0 { f64::INFINITY } else { 1.0 / mse })
}

/// Minimize the squared error with mini-batch Adam.
pub fn train_deterministic<R: Rng + ?Sized>(
    spec: &NetworkSpec,
    data: &Dataset,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<DeterministicFit> {
    let y = real_targets(data)?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    config.validate(data.len())?;
    let mut params = init_params(spec, rng);
    let mut adam = AdamState::new(params.len());
    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let lr = config.schedule.lr_at(epoch);
        for (b, idx) in epoch_batches(rng, data.len(), config.batch_size).into_iter().enumerate() {
            let batch = data.select(&idx);
            let by = real_targets(&batch)?;
            let mut tape = Tape::new();
            let p = tape.leaf(params.clone());
            let xv = tape.constant(batch.x.clone());
            let out = spec.forward_on_tape(&mut tape, p, xv)?;
            let yv = tape.constant(by.clone());
            let r = tape.sub(out, yv)?;
            let r2 = tape.unary(ElementwiseOp::Square, r)?;
            let ss = tape.sum(r2)?;
            let loss = tape.affine(ss, 1.0 / by.len() as f64, 0.0)?;
            let grads = tape.backward(loss).map_err(|e| {
                Error::Numeric(format!("epoch {epoch}, batch {b}: {e}"))
            })?;
            let g = grads.wrt(p).expect("params are a leaf");
            let delta = adam.step(g.data(), lr)?;
            for (w, d) in params.data_mut().iter_mut().zip(&delta) {
                *w += d;
            }
            if !params.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite weights at epoch {epoch}, batch {b}"
                )));
            }
        }
        let pred = forward_flat(spec, &params, &data.x)?;
        trace.push(mean_squared_residual(&pred, y)?);
    }
    let pred = forward_flat(spec, &params, &data.x)?;
    let tau = tau_mle(&pred, y)?;
    Ok(DeterministicFit {
        params: FlatParams::new(spec, params)?,
        tau_eps: tau,
        zero_residual: tau.is_infinite(),
        trace,
    })
}

fn init_params<R: Rng + ?Sized>(spec: &NetworkSpec, rng: &mut R) -> Tensor {
    let mut w = vec![0.0; spec.param_count()];
    for block in spec.blocks() {
        let sd = 1.0 / ((block.rows - 1) as f64).sqrt();
        for v in &mut w[block.offset..block.offset + block.len()] {
            *v = sd * standard_normal(rng);
        }
    }
    Tensor::vector(w)
}

/// Monte Carlo predictive mean at `x` from `draws` weight samples.
fn mc_mean<R: Rng + ?Sized>(
    spec: &NetworkSpec,
    vs: &VariationalState,
    x: &Tensor,
    draws: usize,
    rng: &mut R,
) -> Result<Tensor> {
    let mut acc: Option<Tensor> = None;
    for _ in 0..draws {
        let eps = standard_normal_tensor(rng, &[vs.len()]);
        let out = forward_flat(spec, &sample_weights(vs, &eps)?, x)?;
        acc = Some(match acc {
            None => out,
            Some(a) => a.add(&out)?,
        });
    }
    Ok(acc.expect("at least one draw").scale(1.0 / draws as f64))
}

/// Variational training: per epoch, shuffle, take pathwise ELBO gradients on
/// each mini-batch and descend the negative ELBO with Adam.
pub fn train_variational<R: Rng + ?Sized>(
    spec: &NetworkSpec,
    data: &Dataset,
    config: &TrainConfig,
    prior: &PriorSpec,
    rng: &mut R,
) -> Result<(VariationalState, Vec<EpochRecord>)> {
    let vs = VariationalState::init(spec, config.tau_eps, rng)?;
    train_variational_from(spec, data, config, prior, vs, rng)
}

/// As [`train_variational`], starting from a given state.
pub fn train_variational_from<R: Rng + ?Sized>(
    spec: &NetworkSpec,
    data: &Dataset,
    config: &TrainConfig,
    prior: &PriorSpec,
    mut vs: VariationalState,
    rng: &mut R,
) -> Result<(VariationalState, Vec<EpochRecord>)> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    config.validate(data.len())?;
    prior.validate()?;
    let mut adam = AdamState::new(2 * vs.len());
    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let lr = config.schedule.lr_at(epoch);
        let batches = epoch_batches(rng, data.len(), config.batch_size);
        let (mut elbo, mut data_term, mut kl_term) = (0.0, 0.0, 0.0);
        for (b, idx) in batches.iter().enumerate() {
            let batch = data.select(idx);
            let obj = Objective {
                spec,
                prior,
                batch: &batch,
                n_total: data.len(),
            };
            let (est, grad) = obj
                .grad_pathwise(&vs, config.samples, rng)
                .map_err(|e| Error::Numeric(format!("epoch {epoch}, batch {b}: {e}")))?;
            let neg: Vec<f64> = grad.to_flat().iter().map(|g| -g).collect();
            let delta = adam.step(&neg, lr)?;
            vs.apply_delta(&delta)
                .map_err(|e| Error::Numeric(format!("epoch {epoch}, batch {b}: {e}")))?;
            elbo += est.elbo;
            data_term += est.data_term;
            kl_term += est.kl_term;
        }
        let nb = batches.len() as f64;
        if config.tau_refresh {
            if let Targets::Real(y) = &data.targets {
                let mean = mc_mean(spec, &vs, &data.x, config.refresh_draws, rng)?;
                let tau = tau_mle(&mean, y)?.min(config.tau_max);
                vs.set_tau_eps(tau)?;
            }
        }
        trace.push(EpochRecord {
            epoch,
            elbo: elbo / nb,
            data_term: data_term / nb,
            kl_term: kl_term / nb,
            lr,
            tau_eps: vs.tau_eps(),
        });
    }
    Ok((vs, trace))
}
