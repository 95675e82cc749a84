//! The generate, train, predict and inspect commands. Each returns the text
//! it produces; the binary decides where it goes.

use std::path::Path;

use hbdl::data::{self, CsvSchema, TargetColumns};
use hbdl::metrics;
use hbdl::optimizer::{trace_to_csv, train_deterministic, train_variational};
use hbdl::predictive::predict as predictive;
use hbdl::random::{derived, seeded};
use hbdl::{Dataset, Targets, Task, Tensor};
use rand::Rng;

use crate::config::{DatasetKind, RunConfig};
use crate::error::{CliError, CliResult};
use crate::grid::GridSpec;
use crate::model::{ModelFile, ModelKind};

pub fn generate(cfg: &RunConfig, kind: DatasetKind) -> CliResult<Dataset> {
    let ds = match kind {
        DatasetKind::Xsinx => data::gen_xsinx_design(cfg.n, cfg.noise, cfg.lo, cfg.hi, cfg.design, cfg.seed)?,
        DatasetKind::TwoMoons => data::gen_two_moons(cfg.n, cfg.noise, cfg.seed)?,
    };
    Ok(ds)
}

/// Column layout the configured network expects in a data file.
pub fn schema(cfg: &RunConfig) -> CsvSchema {
    let out = *cfg.widths.last().expect("validated widths");
    CsvSchema {
        features: cfg.widths[0],
        targets: match cfg.task {
            Task::Regression => TargetColumns::Real(out),
            Task::Classification => TargetColumns::Label(out),
        },
    }
}

/// Held-out scores reported after training with `train_fraction < 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Validation {
    pub rows: usize,
    pub r2: Option<f64>,
    pub rmse: Option<f64>,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: ModelFile,
    pub trace_csv: String,
    pub validation: Option<Validation>,
}

pub fn train(cfg: &RunConfig, data_path: &Path) -> CliResult<Trained> {
    let spec = cfg.network()?;
    let ds = data::load_csv(data_path, schema(cfg))?;
    let mut rng = seeded(cfg.seed);
    let (train, held_out) = if cfg.train_fraction < 1.0 {
        let (t, v) = data::split(&ds, cfg.train_fraction, derived(cfg.seed, 1).random())?;
        (t, Some(v))
    } else {
        (ds, None)
    };
    let (train, record) = if cfg.standardize {
        let (t, r) = data::standardize(&train);
        (t, Some(r))
    } else {
        (train, None)
    };
    let tc = cfg.train_config();
    let (kind, state, trace_csv) = match &cfg.prior {
        None => {
            let fit = train_deterministic(&spec, &train, &tc, &mut rng)?;
            let mut csv = String::from("epoch,mse\n");
            for (e, mse) in fit.trace.iter().enumerate() {
                csv.push_str(&format!("{e},{mse:?}\n"));
            }
            let state = ModelFile::point_state(fit.params.tensor(), fit.tau_eps)?;
            (ModelKind::Deterministic, state, csv)
        }
        Some(prior) => {
            let (vs, trace) = train_variational(&spec, &train, &tc, prior, &mut rng)?;
            (ModelKind::Variational, vs, trace_to_csv(&trace))
        }
    };
    let model = ModelFile {
        kind,
        task: cfg.task,
        spec,
        prior: cfg.prior,
        state,
        standardization: record,
        config: cfg.clone(),
        seed: cfg.seed,
    };
    let validation = match held_out {
        Some(v) => Some(validate(&model, &v, cfg.draws, &mut rng)?),
        None => None,
    };
    Ok(Trained {
        model,
        trace_csv,
        validation,
    })
}

fn validate(model: &ModelFile, held_out: &Dataset, draws: usize, rng: &mut impl Rng) -> CliResult<Validation> {
    let x = match &model.standardization {
        Some(r) => r.apply(&held_out.x)?,
        None => held_out.x.clone(),
    };
    let summary = predictive(&model.spec, &model.state, &x, draws, &[], rng)?;
    let mut v = Validation {
        rows: held_out.len(),
        r2: None,
        rmse: None,
        accuracy: None,
    };
    match &held_out.targets {
        Targets::Real(y) => {
            // A constant validation target leaves R² undefined; report RMSE only.
            v.r2 = metrics::r2(y.data(), summary.mean.data()).ok();
            v.rmse = Some(metrics::rmse(y.data(), summary.mean.data())?);
        }
        Targets::Labels { labels, .. } => v.accuracy = Some(metrics::accuracy(labels, &summary.mean)?),
    }
    Ok(v)
}

/// Prediction inputs: a CSV path, or a grid spec when the text starts with `(`.
pub fn prediction_inputs(inputs: &str, features: usize) -> CliResult<Tensor> {
    if inputs.trim_start().starts_with('(') {
        let grid: GridSpec = inputs.parse()?;
        if grid.dim() != features {
            return Err(CliError::Data(format!(
                "grid has {} axes but the model takes {features} inputs",
                grid.dim()
            )));
        }
        Ok(grid.points())
    } else {
        Ok(data::load_inputs(inputs, features)?)
    }
}

pub fn predict(cfg: &RunConfig, model: &ModelFile, inputs: &str) -> CliResult<String> {
    let x_raw = prediction_inputs(inputs, model.spec.input_dim())?;
    let x = match &model.standardization {
        Some(r) => r.apply(&x_raw)?,
        None => x_raw.clone(),
    };
    let mut rng = seeded(cfg.seed);
    let summary = predictive(&model.spec, &model.state, &x, cfg.draws, &cfg.levels, &mut rng)?;
    Ok(summary.to_csv(&x_raw)?)
}

/// Per-parameter dump and pooled histograms of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Inspection {
    /// `slice,row,col,mu,sigma`; row 0 is the bias row.
    pub params_csv: String,
    /// `slice,bin,lo,hi,count,density`.
    pub histogram_csv: String,
}

/// `layer` counts from 1 (the first weight matrix).
pub fn inspect(cfg: &RunConfig, model: &ModelFile, layer: usize, bins: usize) -> CliResult<Inspection> {
    let blocks = model.spec.blocks();
    if layer == 0 || layer > blocks.len() {
        return Err(CliError::Usage(format!(
            "layer {layer} does not exist; the model has layers 1..={}",
            blocks.len()
        )));
    }
    if bins == 0 {
        return Err(CliError::Usage("bins must be at least 1".into()));
    }
    let block = blocks[layer - 1];
    let mu = model.state.mu().data();
    let sigma = model.state.sigma();
    let sigma = sigma.data();
    let mut rng = seeded(cfg.seed);
    let mut params_csv = String::from("slice,row,col,mu,sigma\n");
    let mut histogram_csv = String::from("slice,bin,lo,hi,count,density\n");
    for (name, range) in [("bias", block.bias_range()), ("weight", block.weight_range())] {
        let mut pooled = Vec::with_capacity(range.len() * cfg.draws);
        for k in range {
            let local = k - block.offset;
            params_csv.push_str(&format!(
                "{name},{},{},{:?},{:?}\n",
                local / block.cols,
                local % block.cols,
                mu[k],
                sigma[k]
            ));
            for _ in 0..cfg.draws {
                pooled.push(mu[k] + sigma[k] * hbdl::random::standard_normal(&mut rng));
            }
        }
        for (b, (lo, hi, count)) in histogram(&pooled, bins).into_iter().enumerate() {
            let density = count as f64 / (pooled.len() as f64 * (hi - lo));
            histogram_csv.push_str(&format!("{name},{b},{lo:?},{hi:?},{count},{density:?}\n"));
        }
    }
    Ok(Inspection {
        params_csv,
        histogram_csv,
    })
}

/// Equal-width bins spanning the sample range; the last bin is closed.
fn histogram(values: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if max > min { (min, max) } else { (min - 0.5, min + 0.5) };
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(b, c)| {
            let right = if b + 1 == bins { hi } else { lo + width * (b + 1) as f64 };
            (lo + width * b as f64, right, c)
        })
        .collect()
}
