//! Self-describing model files.
//!
//! Plain text: a format tag and version, the network, the prior, the noise
//! precision, the input standardization, the full run configuration and the
//! variational parameters, one decimal per line. Floats are written in their
//! shortest round-trip form so save, load and save reproduce the same bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use hbdl::{Activation, NetworkSpec, PriorSpec, Standardization, Task, Tensor, VariationalState};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const FORMAT_TAG: &str = "hbdl-model";
pub const FORMAT_VERSION: u32 = 1;

/// Scale parameter that makes `softplus(rho)` exactly zero, so a point
/// estimate can be stored and evaluated as a degenerate variational state.
pub const POINT_MASS_RHO: f64 = -1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Variational,
    /// Point estimate; `tau_eps` holds the maximum-likelihood precision.
    Deterministic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub kind: ModelKind,
    pub task: Task,
    pub spec: NetworkSpec,
    pub prior: Option<PriorSpec>,
    pub state: VariationalState,
    pub standardization: Option<Standardization>,
    pub config: RunConfig,
    pub seed: u64,
}

impl ModelFile {
    /// Wrap point-estimate weights as a degenerate state.
    pub fn point_state(params: &Tensor, tau_eps: f64) -> CliResult<VariationalState> {
        let rho = Tensor::full(&[params.len()], POINT_MASS_RHO);
        Ok(VariationalState::new(params.clone(), rho, tau_eps)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let floats = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
        let _ = writeln!(s, "{FORMAT_TAG} {FORMAT_VERSION}");
        let _ = writeln!(
            s,
            "kind {}",
            match self.kind {
                ModelKind::Variational => "variational",
                ModelKind::Deterministic => "deterministic",
            }
        );
        let _ = writeln!(s, "task {}", self.task);
        let widths: Vec<String> = self.spec.widths().iter().map(usize::to_string).collect();
        let _ = writeln!(s, "widths {}", widths.join(","));
        let acts: Vec<String> = self.spec.activations().iter().map(Activation::to_string).collect();
        let _ = writeln!(s, "activations {}", acts.join(","));
        let _ = writeln!(s, "prior {}", self.prior.as_ref().map_or("none".into(), PriorSpec::to_string));
        let _ = writeln!(s, "seed {}", self.seed);
        let _ = writeln!(s, "tau_eps {:?}", self.state.tau_eps());
        match &self.standardization {
            None => {
                let _ = writeln!(s, "standardization none");
            }
            Some(r) => {
                let _ = writeln!(s, "standardization {}", r.dim());
                let _ = writeln!(s, "mean {}", floats(&r.mean));
                let _ = writeln!(s, "std {}", floats(&r.std));
                let flags: Vec<&str> = r.constant.iter().map(|&c| if c { "1" } else { "0" }).collect();
                let _ = writeln!(s, "constant {}", flags.join(","));
            }
        }
        let pairs = self.config.to_pairs();
        let _ = writeln!(s, "config {}", pairs.len());
        for (k, v) in pairs {
            let _ = writeln!(s, "{k}={v}");
        }
        for (name, t) in [("mu", self.state.mu()), ("rho", self.state.rho())] {
            let _ = writeln!(s, "{name} {}", t.len());
            for v in t.data() {
                let _ = writeln!(s, "{v:?}");
            }
        }
        s.push_str("end\n");
        s
    }

    pub fn from_text(text: &str) -> CliResult<Self> {
        let mut lines = Lines {
            inner: text.lines().enumerate(),
        };
        let header = lines.field(FORMAT_TAG)?;
        let version: u32 = parse(&header, "format version")?;
        if version != FORMAT_VERSION {
            return Err(CliError::Data(format!(
                "model format version {version} is not supported (expected {FORMAT_VERSION})"
            )));
        }
        let kind = match lines.field("kind")?.as_str() {
            "variational" => ModelKind::Variational,
            "deterministic" => ModelKind::Deterministic,
            other => return Err(CliError::Data(format!("unknown model kind '{other}'"))),
        };
        let task: Task = lines.field("task")?.parse()?;
        let widths: Vec<usize> = parse_list(&lines.field("widths")?, "widths")?;
        let acts: Vec<Activation> = lines
            .field("activations")?
            .split(',')
            .map(|a| a.parse::<Activation>().map_err(CliError::from))
            .collect::<CliResult<_>>()?;
        let spec = NetworkSpec::new(widths, acts)?;
        let prior = match lines.field("prior")?.as_str() {
            "none" => None,
            p => Some(p.parse::<PriorSpec>()?),
        };
        let seed: u64 = parse(&lines.field("seed")?, "seed")?;
        let tau_eps: f64 = parse(&lines.field("tau_eps")?, "tau_eps")?;
        let standardization = match lines.field("standardization")?.as_str() {
            "none" => None,
            d => {
                let d: usize = parse(d, "standardization width")?;
                let mean: Vec<f64> = parse_list(&lines.field("mean")?, "mean")?;
                let std: Vec<f64> = parse_list(&lines.field("std")?, "std")?;
                let constant: Vec<bool> = parse_list::<u8>(&lines.field("constant")?, "constant")?
                    .into_iter()
                    .map(|c| c == 1)
                    .collect();
                if mean.len() != d || std.len() != d || constant.len() != d {
                    return Err(CliError::Data("standardization record has the wrong width".into()));
                }
                Some(Standardization { mean, std, constant })
            }
        };
        let count: usize = parse(&lines.field("config")?, "config size")?;
        let mut pairs = Vec::with_capacity(count);
        for _ in 0..count {
            let (line, no) = lines.next_line()?;
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Data(format!("model line {no}: expected key=value")))?;
            pairs.push((k.to_string(), v.to_string()));
        }
        let config = RunConfig::default()
            .with_pairs(&pairs)
            .map_err(|e| CliError::Data(format!("embedded config: {e}")))?;
        let mu = lines.block("mu")?;
        let rho = lines.block("rho")?;
        if lines.field("end").is_err() {
            return Err(CliError::Data("model file is truncated".into()));
        }
        if mu.len() != spec.param_count() {
            return Err(CliError::Data(format!(
                "model has {} parameters but the network needs {}",
                mu.len(),
                spec.param_count()
            )));
        }
        let state = VariationalState::new(Tensor::vector(mu), Tensor::vector(rho), tau_eps)?;
        Ok(ModelFile {
            kind,
            task,
            spec,
            prior,
            state,
            standardization,
            config,
            seed,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> CliResult<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text())
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
    }

    pub fn load(path: impl AsRef<Path>) -> CliResult<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
        Self::from_text(&text).map_err(|e| match e {
            CliError::Data(m) => CliError::Data(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl Lines<'_> {
    fn next_line(&mut self) -> CliResult<(String, usize)> {
        self.inner
            .next()
            .map(|(i, l)| (l.to_string(), i + 1))
            .ok_or_else(|| CliError::Data("model file is truncated".into()))
    }

    /// The value of a `name value` line; `end` carries no value.
    fn field(&mut self, name: &str) -> CliResult<String> {
        let (line, no) = self.next_line()?;
        if line == name {
            return Ok(String::new());
        }
        match line.split_once(' ') {
            Some((k, v)) if k == name => Ok(v.to_string()),
            _ => Err(CliError::Data(format!("model line {no}: expected '{name}'"))),
        }
    }

    fn block(&mut self, name: &str) -> CliResult<Vec<f64>> {
        let n: usize = parse(&self.field(name)?, name)?;
        (0..n)
            .map(|_| {
                let (line, no) = self.next_line()?;
                line.parse()
                    .map_err(|_| CliError::Data(format!("model line {no}: bad number '{line}'")))
            })
            .collect()
    }
}

fn parse<T: std::str::FromStr>(s: &str, what: &str) -> CliResult<T> {
    s.trim()
        .parse()
        .map_err(|_| CliError::Data(format!("cannot parse {what} from '{s}'")))
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> CliResult<Vec<T>> {
    s.split(',').map(|v| parse(v, what)).collect()
}
