//! Run configuration: flat `key=value` text whose keys are exactly the
//! field names of [`RunConfig`], layered over a named preset.

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use hbdl::data::InputDesign;
use hbdl::optimizer::{LrSchedule, TrainConfig};
use hbdl::{Activation, NetworkSpec, PriorSpec, Task};

use crate::error::{CliError, CliResult};
use crate::grid::GridSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Xsinx,
    TwoMoons,
}

/// How the xsinx benchmark picks the noise precision of each cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TauPolicy {
    /// Use `tau_eps` as given.
    Fixed,
    /// Match the generating noise: `1 / max(noise, tau_floor)^2`, capped at `tau_max`.
    Noise,
}

/// Model families compared by the xsinx benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum BenchModel {
    /// Point-estimate network.
    Nn,
    /// Variational network under `prior`.
    Direct,
    /// Variational network under `hier_prior`.
    Hier,
}

macro_rules! keyword_enum {
    ($ty:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$variant => $text),+ })
            }
        }
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s.trim() {
                    $($text => Ok($ty::$variant),)+
                    other => Err(format!(
                        "unknown value '{other}' (expected one of: {})",
                        [$($text),+].join(", ")
                    )),
                }
            }
        }
    };
}

keyword_enum!(DatasetKind { Xsinx => "xsinx", TwoMoons => "two-moons" });
keyword_enum!(TauPolicy { Fixed => "fixed", Noise => "noise" });
keyword_enum!(BenchModel { Nn => "nn", Direct => "direct", Hier => "hier" });

pub const PRESETS: [&str; 3] = ["xsinx-paper", "moons-paper", "membrane-style"];

/// Every configuration key, in the order they are written out.
pub const KEYS: [&str; 41] = [
    "task",
    "widths",
    "activations",
    "prior",
    "epochs",
    "batch_size",
    "samples",
    "lr",
    "lr_factor",
    "lr_interval",
    "tau_eps",
    "tau_refresh",
    "refresh_draws",
    "tau_max",
    "standardize",
    "train_fraction",
    "draws",
    "levels",
    "seed",
    "dataset",
    "n",
    "noise",
    "lo",
    "hi",
    "design",
    "seeds",
    "noise_levels",
    "models",
    "hier_prior",
    "tau_policy",
    "tau_floor",
    "eval_points",
    "moons_priors",
    "band",
    "grid",
    "estimator_draws",
    "data",
    "model",
    "inputs",
    "out",
    "label",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: Task,
    pub widths: Vec<usize>,
    /// `None` means tanh hidden layers and an output matched to the task.
    pub activations: Option<Vec<Activation>>,
    /// `None` trains a point-estimate network.
    pub prior: Option<PriorSpec>,
    pub epochs: usize,
    pub batch_size: usize,
    pub samples: usize,
    pub lr: f64,
    pub lr_factor: f64,
    pub lr_interval: usize,
    pub tau_eps: f64,
    pub tau_refresh: bool,
    pub refresh_draws: usize,
    pub tau_max: f64,
    /// Standardize input features with statistics of the training set.
    pub standardize: bool,
    /// Fraction used for training; the rest is held out. 1 uses everything.
    pub train_fraction: f64,
    /// Monte Carlo draws for predictions and histograms.
    pub draws: usize,
    pub levels: Vec<f64>,
    pub seed: u64,
    pub dataset: DatasetKind,
    pub n: usize,
    pub noise: f64,
    pub lo: f64,
    pub hi: f64,
    pub design: InputDesign,
    /// Repetitions per benchmark cell.
    pub seeds: usize,
    pub noise_levels: Vec<f64>,
    pub models: Vec<BenchModel>,
    pub hier_prior: PriorSpec,
    pub tau_policy: TauPolicy,
    pub tau_floor: f64,
    pub eval_points: usize,
    pub moons_priors: Vec<PriorSpec>,
    /// Half-width of the band around the noiseless moons.
    pub band: f64,
    pub grid: GridSpec,
    pub estimator_draws: usize,
    pub data: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub inputs: Option<String>,
    pub out: Option<PathBuf>,
    /// Free-form tag carried into model files.
    pub label: String,
}

fn prior(s: &str) -> PriorSpec {
    s.parse().expect("built-in prior")
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: Task::Regression,
            widths: vec![1, 20, 1],
            activations: None,
            prior: Some(prior("gaussian(0,1)")),
            epochs: 1000,
            batch_size: 30,
            samples: 1,
            lr: 0.001,
            lr_factor: 1.0,
            lr_interval: 1000,
            tau_eps: 1.0,
            tau_refresh: false,
            refresh_draws: 10,
            tau_max: 1e4,
            standardize: false,
            train_fraction: 1.0,
            draws: hbdl::predictive::DEFAULT_DRAWS,
            levels: vec![0.95],
            seed: 0,
            dataset: DatasetKind::Xsinx,
            n: 30,
            noise: 0.0,
            lo: -10.0,
            hi: 10.0,
            design: InputDesign::Iid,
            seeds: 5,
            noise_levels: vec![0.0, 0.1, 0.3, 0.5, 0.7, 0.9],
            models: vec![BenchModel::Nn, BenchModel::Direct, BenchModel::Hier],
            hier_prior: prior("hier(gaussian,ig(1,1))"),
            tau_policy: TauPolicy::Fixed,
            tau_floor: 0.05,
            eval_points: 500,
            moons_priors: [
                "laplace(0,1)",
                "gaussian(0,1)",
                "cauchy(1,1)",
                "hier(laplace,ig(1,1))",
                "hier(gaussian,ig(1,1))",
                "hier(cauchy,ig(1,1))",
            ]
            .iter()
            .map(|s| prior(s))
            .collect(),
            band: 0.2,
            grid: "(-3,3)x(-3,3)@100".parse().expect("built-in grid"),
            estimator_draws: 10_000,
            data: None,
            model: None,
            inputs: None,
            out: None,
            label: String::new(),
        }
    }
}

impl RunConfig {
    /// One of [`PRESETS`].
    pub fn preset(name: &str) -> CliResult<Self> {
        let base = RunConfig::default();
        let cfg = match name {
            // Stratified inputs and a large fixed noise precision; see README.
            "xsinx-paper" => RunConfig {
                prior: Some(prior("gaussian(0,0.1)")),
                epochs: 8000,
                lr: 0.02,
                lr_factor: 0.5,
                lr_interval: 2000,
                tau_eps: 1e4,
                design: InputDesign::Stratified,
                noise: 0.3,
                draws: 200,
                ..base
            },
            "moons-paper" => RunConfig {
                task: Task::Classification,
                widths: vec![2, 5, 5, 2],
                prior: Some(prior("laplace(0,1)")),
                epochs: 4000,
                lr: 0.001,
                standardize: true,
                train_fraction: 0.7,
                dataset: DatasetKind::TwoMoons,
                n: 900,
                noise: 0.1,
                draws: 200,
                seeds: 1,
                ..base
            },
            "membrane-style" => RunConfig {
                widths: vec![5, 30, 15, 10, 3],
                prior: Some(prior("hier(gaussian,ig(1,1))")),
                epochs: 1000,
                batch_size: 16,
                samples: 200,
                lr: 0.005,
                lr_factor: 0.75,
                lr_interval: 100,
                tau_refresh: true,
                standardize: true,
                ..base
            },
            other => {
                return Err(CliError::Usage(format!(
                    "unknown preset '{other}' (expected one of: {})",
                    PRESETS.join(", ")
                )))
            }
        };
        Ok(cfg)
    }

    /// Build a configuration from optional config-file text, an optional
    /// preset name and `key=value` overrides (applied last, in order). A
    /// `preset` line in the file selects the base unless `preset` is given.
    pub fn load(text: Option<&str>, preset: Option<&str>, overrides: &[(String, String)]) -> CliResult<Self> {
        let mut pairs = match text {
            Some(t) => parse_pairs(t)?,
            None => Vec::new(),
        };
        let file_preset = pairs
            .iter()
            .position(|(k, _)| k == "preset")
            .map(|i| pairs.remove(i).1);
        let mut cfg = match preset.or(file_preset.as_deref()) {
            Some(name) => RunConfig::preset(name)?,
            None => RunConfig::default(),
        };
        for (k, v) in pairs.iter().chain(overrides) {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply `key=value` pairs on top of `self` without validation.
    pub fn with_pairs(mut self, pairs: &[(String, String)]) -> CliResult<Self> {
        for (k, v) in pairs {
            self.set(k, v)?;
        }
        Ok(self)
    }

    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let v = value.trim();
        let err = |why: String| CliError::Usage(format!("config key '{key}': {why}"));
        match key {
            "task" => self.task = v.parse().map_err(|e: hbdl::Error| err(e.to_string()))?,
            "widths" => self.widths = list(v, ',').map_err(err)?,
            "activations" => {
                self.activations = if v == "auto" {
                    None
                } else {
                    Some(
                        v.split(',')
                            .map(|a| a.parse::<Activation>().map_err(|e| err(e.to_string())))
                            .collect::<CliResult<_>>()?,
                    )
                }
            }
            "prior" => {
                self.prior = if v == "none" {
                    None
                } else {
                    Some(v.parse().map_err(|e: hbdl::Error| err(e.to_string()))?)
                }
            }
            "epochs" => self.epochs = num(v).map_err(err)?,
            "batch_size" => self.batch_size = num(v).map_err(err)?,
            "samples" => self.samples = num(v).map_err(err)?,
            "lr" => self.lr = num(v).map_err(err)?,
            "lr_factor" => self.lr_factor = num(v).map_err(err)?,
            "lr_interval" => self.lr_interval = num(v).map_err(err)?,
            "tau_eps" => self.tau_eps = num(v).map_err(err)?,
            "tau_refresh" => self.tau_refresh = flag(v).map_err(err)?,
            "refresh_draws" => self.refresh_draws = num(v).map_err(err)?,
            "tau_max" => self.tau_max = num(v).map_err(err)?,
            "standardize" => self.standardize = flag(v).map_err(err)?,
            "train_fraction" => self.train_fraction = num(v).map_err(err)?,
            "draws" => self.draws = num(v).map_err(err)?,
            "levels" => self.levels = list(v, ',').map_err(err)?,
            "seed" => self.seed = num(v).map_err(err)?,
            "dataset" => self.dataset = v.parse().map_err(err)?,
            "n" => self.n = num(v).map_err(err)?,
            "noise" => self.noise = num(v).map_err(err)?,
            "lo" => self.lo = num(v).map_err(err)?,
            "hi" => self.hi = num(v).map_err(err)?,
            "design" => self.design = v.parse().map_err(|e: hbdl::Error| err(e.to_string()))?,
            "seeds" => self.seeds = num(v).map_err(err)?,
            "noise_levels" => self.noise_levels = list(v, ',').map_err(err)?,
            "models" => self.models = list(v, ',').map_err(err)?,
            "hier_prior" => self.hier_prior = v.parse().map_err(|e: hbdl::Error| err(e.to_string()))?,
            "tau_policy" => self.tau_policy = v.parse().map_err(err)?,
            "tau_floor" => self.tau_floor = num(v).map_err(err)?,
            "eval_points" => self.eval_points = num(v).map_err(err)?,
            "moons_priors" => {
                self.moons_priors = v
                    .split(';')
                    .map(|p| p.parse::<PriorSpec>().map_err(|e| err(e.to_string())))
                    .collect::<CliResult<_>>()?
            }
            "band" => self.band = num(v).map_err(err)?,
            "grid" => self.grid = v.parse().map_err(|e: CliError| err(e.to_string()))?,
            "estimator_draws" => self.estimator_draws = num(v).map_err(err)?,
            "data" => self.data = path(v),
            "model" => self.model = path(v),
            "inputs" => self.inputs = (!v.is_empty()).then(|| v.to_string()),
            "out" => self.out = path(v),
            "label" => self.label = v.to_string(),
            _ => {
                return Err(CliError::Usage(format!(
                    "unknown config key '{key}'"
                )))
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        fn join<T: fmt::Display>(items: &[T], sep: &str) -> String {
            items.iter().map(T::to_string).collect::<Vec<_>>().join(sep)
        }
        let opt_path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        Some(match key {
            "task" => self.task.to_string(),
            "widths" => join(&self.widths, ","),
            "activations" => self.activations.as_ref().map_or("auto".into(), |a| join(a, ",")),
            "prior" => self.prior.as_ref().map_or("none".into(), PriorSpec::to_string),
            "epochs" => self.epochs.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "samples" => self.samples.to_string(),
            "lr" => self.lr.to_string(),
            "lr_factor" => self.lr_factor.to_string(),
            "lr_interval" => self.lr_interval.to_string(),
            "tau_eps" => self.tau_eps.to_string(),
            "tau_refresh" => self.tau_refresh.to_string(),
            "refresh_draws" => self.refresh_draws.to_string(),
            "tau_max" => self.tau_max.to_string(),
            "standardize" => self.standardize.to_string(),
            "train_fraction" => self.train_fraction.to_string(),
            "draws" => self.draws.to_string(),
            "levels" => join(&self.levels, ","),
            "seed" => self.seed.to_string(),
            "dataset" => self.dataset.to_string(),
            "n" => self.n.to_string(),
            "noise" => self.noise.to_string(),
            "lo" => self.lo.to_string(),
            "hi" => self.hi.to_string(),
            "design" => self.design.to_string(),
            "seeds" => self.seeds.to_string(),
            "noise_levels" => join(&self.noise_levels, ","),
            "models" => join(&self.models, ","),
            "hier_prior" => self.hier_prior.to_string(),
            "tau_policy" => self.tau_policy.to_string(),
            "tau_floor" => self.tau_floor.to_string(),
            "eval_points" => self.eval_points.to_string(),
            "moons_priors" => join(&self.moons_priors, ";"),
            "band" => self.band.to_string(),
            "grid" => self.grid.to_string(),
            "estimator_draws" => self.estimator_draws.to_string(),
            "data" => opt_path(&self.data),
            "model" => opt_path(&self.model),
            "inputs" => self.inputs.clone().unwrap_or_default(),
            "out" => opt_path(&self.out),
            "label" => self.label.clone(),
            _ => return None,
        })
    }

    /// All keys with their values, in [`KEYS`] order.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        KEYS.iter()
            .map(|&k| (k.to_string(), self.get(k).expect("every key is readable")))
            .collect()
    }

    pub fn to_text(&self) -> String {
        self.to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    pub fn network(&self) -> CliResult<NetworkSpec> {
        let spec = match &self.activations {
            Some(acts) => NetworkSpec::new(self.widths.clone(), acts.clone()),
            None => {
                let output = match self.task {
                    Task::Regression => Activation::Identity,
                    Task::Classification => Activation::Softmax,
                };
                NetworkSpec::tanh_hidden(self.widths.clone(), output)
            }
        };
        spec.map_err(|e| CliError::Usage(format!("network: {e}")))
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            samples: self.samples,
            schedule: LrSchedule {
                base: self.lr,
                factor: self.lr_factor,
                interval: self.lr_interval,
            },
            tau_eps: self.tau_eps,
            tau_refresh: self.tau_refresh,
            refresh_draws: self.refresh_draws,
            tau_max: self.tau_max,
        }
    }

    /// Check every field; nothing is run on an invalid configuration.
    pub fn validate(&self) -> CliResult<()> {
        let usage = |msg: String| Err(CliError::Usage(msg));
        let spec = self.network()?;
        match self.task {
            Task::Regression if spec.has_softmax_output() => {
                return usage("regression needs a non-softmax output layer".into())
            }
            Task::Classification if !spec.has_softmax_output() || spec.output_dim() < 2 => {
                return usage("classification needs a softmax output with at least 2 classes".into())
            }
            _ => {}
        }
        if self.prior.is_none() && self.task == Task::Classification {
            return usage("prior=none (point estimate) is only available for regression".into());
        }
        // `usize::MAX` defers the batch-size bound until the data is known.
        self.train_config()
            .validate(usize::MAX)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        if !(self.lr_factor <= 1.0) {
            return usage(format!("lr_factor must be at most 1, got {}", self.lr_factor));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return usage(format!("train_fraction must be in (0, 1], got {}", self.train_fraction));
        }
        if self.draws == 0 {
            return usage("draws must be at least 1".into());
        }
        if let Some(l) = self.levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
            return usage(format!("credible levels must be in (0, 1), got {l}"));
        }
        let min_n = match self.dataset {
            DatasetKind::Xsinx => 1,
            DatasetKind::TwoMoons => 2,
        };
        if self.n < min_n {
            return usage(format!("n must be at least {min_n}"));
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return usage(format!("noise must be a finite non-negative number, got {}", self.noise));
        }
        if !(self.lo < self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            return usage(format!("need finite lo < hi, got ({}, {})", self.lo, self.hi));
        }
        if self.seeds == 0 {
            return usage("seeds must be at least 1".into());
        }
        if self.noise_levels.is_empty() || self.noise_levels.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return usage("noise_levels must be a non-empty list of non-negative numbers".into());
        }
        if self.models.is_empty() {
            return usage("models must name at least one of nn, direct, hier".into());
        }
        if !(self.tau_floor > 0.0) {
            return usage("tau_floor must be positive".into());
        }
        if self.eval_points < 2 {
            return usage("eval_points must be at least 2".into());
        }
        if self.moons_priors.is_empty() {
            return usage("moons_priors must list at least one prior".into());
        }
        if !(self.band > 0.0) {
            return usage("band must be positive".into());
        }
        if self.grid.dim() != 2 {
            return usage("grid must be two-dimensional".into());
        }
        if self.estimator_draws < 2 {
            return usage("estimator_draws must be at least 2".into());
        }
        Ok(())
    }
}

fn num<T: FromStr>(v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse '{v}'"))
}

fn flag(v: &str) -> Result<bool, String> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got '{v}'")),
    }
}

fn list<T: FromStr>(v: &str, sep: char) -> Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(sep)
        .map(|s| s.trim().parse::<T>().map_err(|e| format!("cannot parse '{s}': {e}")))
        .collect()
}

fn path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

/// Split config text into `(key, value)` pairs. Blank lines and `#`
/// comments are skipped; repeated keys are rejected.
pub fn parse_pairs(text: &str) -> CliResult<Vec<(String, String)>> {
    let mut seen = BTreeSet::new();
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key=value", i + 1)))?;
        let k = k.trim();
        if k != "preset" && !KEYS.contains(&k) {
            return Err(CliError::Usage(format!("config line {}: unknown key '{k}'", i + 1)));
        }
        if !seen.insert(k.to_string()) {
            return Err(CliError::Usage(format!("config line {}: key '{k}' repeated", i + 1)));
        }
        pairs.push((k.to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

/// Parse a `key=value` command-line override.
pub fn parse_override(s: &str) -> CliResult<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("expected key=value, got '{s}'")))?;
    let k = k.trim();
    if !KEYS.contains(&k) {
        return Err(CliError::Usage(format!("unknown config key '{k}'")));
    }
    Ok((k.to_string(), v.trim().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in PRESETS {
            RunConfig::preset(name).unwrap().validate().unwrap();
        }
        RunConfig::default().validate().unwrap();
        assert!(RunConfig::preset("nope").is_err());
    }

    #[test]
    fn text_round_trip_for_every_preset() {
        for name in PRESETS {
            let cfg = RunConfig::preset(name).unwrap();
            let back = RunConfig::load(Some(&cfg.to_text()), None, &[]).unwrap();
            assert_eq!(back, cfg, "{name}");
            assert_eq!(back.to_text(), cfg.to_text());
        }
    }

    #[test]
    fn every_key_is_settable_and_readable() {
        let cfg = RunConfig::default();
        for key in KEYS {
            let value = cfg.get(key).unwrap();
            let mut copy = cfg.clone();
            copy.set(key, &value).unwrap();
            assert_eq!(copy, cfg, "{key}");
        }
        assert!(cfg.get("bogus").is_none());
    }

    #[test]
    fn unknown_and_repeated_keys_are_rejected() {
        let err = RunConfig::load(Some("epochs=3\nlearning_rate=0.1\n"), None, &[]).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(RunConfig::load(Some("epochs=3\nepochs=4"), None, &[]).is_err());
        assert!(RunConfig::load(Some("epochs"), None, &[]).is_err());
        assert!(parse_override("foo=1").is_err());
    }

    #[test]
    fn preset_line_and_overrides_layer_in_order() {
        let text = "# moons run\npreset = moons-paper\nepochs = 50\n";
        let cfg = RunConfig::load(Some(text), None, &[("epochs".into(), "7".into())]).unwrap();
        assert_eq!(cfg.task, Task::Classification);
        assert_eq!(cfg.epochs, 7);
        let flag = RunConfig::load(Some(text), Some("xsinx-paper"), &[]).unwrap();
        assert_eq!(flag.task, Task::Regression);
        assert_eq!(flag.epochs, 50);
    }

    #[test]
    fn validation_catches_bad_values_before_work() {
        let cases = [
            ("widths", "1"),
            ("batch_size", "0"),
            ("lr", "-1"),
            ("levels", "1.5"),
            ("train_fraction", "0"),
            ("draws", "0"),
            ("lo", "20"),
            ("task", "classification"),
            ("grid", "(0,1)@5"),
        ];
        for (k, v) in cases {
            let r = RunConfig::load(None, None, &[(k.into(), v.into())]);
            assert!(matches!(r, Err(CliError::Usage(_))), "{k}={v}");
        }
        assert!(RunConfig::load(None, None, &[("prior".into(), "gaussian(0,-1)".into())]).is_err());
        assert!(RunConfig::load(None, None, &[("models".into(), "nn,tree".into())]).is_err());
    }

    #[test]
    fn auto_activations_follow_the_task() {
        let moons = RunConfig::preset("moons-paper").unwrap();
        assert!(moons.network().unwrap().has_softmax_output());
        let reg = RunConfig::default();
        assert_eq!(
            reg.network().unwrap().activations(),
            &[Activation::Tanh, Activation::Identity]
        );
    }
}
