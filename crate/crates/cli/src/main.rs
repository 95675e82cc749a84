use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hbdl_cli::benchmark::{self, Suite};
use hbdl_cli::commands;
use hbdl_cli::config::{parse_override, DatasetKind};
use hbdl_cli::{CliError, CliResult, ModelFile, RunConfig};

#[derive(Parser)]
#[command(name = "hbdl", version, about = "Bayesian deep learning with hierarchical priors")]
struct Cli {
    /// Flat key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Named defaults: xsinx-paper, moons-paper or membrane-style.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Master seed for data, initialization and sampling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Suppress progress messages.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset (xsinx or two-moons) as CSV.
    Generate {
        kind: String,
        /// KEY=VALUE overrides.
        args: Vec<String>,
    },
    /// Train a model on a CSV file; writes the model to --out and a trace
    /// next to it.
    Train {
        /// Data file, then KEY=VALUE overrides.
        args: Vec<String>,
    },
    /// Predictive mean, variance and credible intervals.
    Predict {
        model: PathBuf,
        /// Input CSV or grid such as "(-3,3)x(-3,3)@100", then KEY=VALUE overrides.
        args: Vec<String>,
    },
    /// Dump a layer's variational marginals and histograms of sampled weights.
    Inspect {
        model: PathBuf,
        /// Layer number, counting the first weight matrix as 1.
        #[arg(long, default_value_t = 1)]
        layer: usize,
        #[arg(long, default_value_t = 30)]
        bins: usize,
        args: Vec<String>,
    },
    /// Run a benchmark suite: xsinx-grid, two-moons or estimator-variance.
    Benchmark {
        suite: String,
        /// Repetitions per cell.
        #[arg(long)]
        seeds: Option<usize>,
        args: Vec<String>,
    },
}

/// Split positional arguments into plain values and KEY=VALUE overrides.
fn split_args(args: &[String]) -> CliResult<(Vec<String>, Vec<(String, String)>)> {
    let mut plain = Vec::new();
    let mut pairs = Vec::new();
    for a in args {
        if a.contains('=') && !a.starts_with('(') {
            pairs.push(parse_override(a)?);
        } else {
            plain.push(a.clone());
        }
    }
    Ok((plain, pairs))
}

fn at_most_one(plain: Vec<String>, what: &str) -> CliResult<Option<String>> {
    match plain.len() {
        0 => Ok(None),
        1 => Ok(plain.into_iter().next()),
        _ => Err(CliError::Usage(format!("expected at most one {what}, got {plain:?}"))),
    }
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Data(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let text = match &cli.config {
        Some(p) => Some(
            fs::read_to_string(p).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?,
        ),
        None => None,
    };
    let mut overrides = cli.set.iter().map(|s| parse_override(s)).collect::<CliResult<Vec<_>>>()?;
    let args = match &cli.command {
        Command::Generate { args, .. }
        | Command::Train { args }
        | Command::Predict { args, .. }
        | Command::Inspect { args, .. }
        | Command::Benchmark { args, .. } => args,
    };
    let (plain, pairs) = split_args(args)?;
    overrides.extend(pairs);
    if let Some(seed) = cli.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    if let Some(out) = &cli.out {
        overrides.push(("out".into(), out.display().to_string()));
    }
    if let Command::Benchmark { seeds: Some(s), .. } = &cli.command {
        overrides.push(("seeds".into(), s.to_string()));
    }
    let cfg = RunConfig::load(text.as_deref(), cli.preset.as_deref(), &overrides)?;
    let out = cfg.out.as_deref();
    let say = |msg: String| {
        if !cli.quiet {
            eprintln!("{msg}");
        }
    };

    match cli.command {
        Command::Generate { kind, .. } => {
            if !plain.is_empty() {
                return Err(CliError::Usage(format!("unexpected arguments {plain:?}")));
            }
            let kind: DatasetKind = kind.parse().map_err(CliError::Usage)?;
            let ds = commands::generate(&cfg, kind)?;
            emit(out, &hbdl::data::to_csv(&ds))?;
            say(format!("generated {} rows of {kind} (seed {})", ds.len(), cfg.seed));
        }
        Command::Train { .. } => {
            let data = at_most_one(plain, "data file")?
                .map(PathBuf::from)
                .or_else(|| cfg.data.clone())
                .ok_or_else(|| CliError::Usage("train needs a data file".into()))?;
            let model_path = cfg
                .out
                .clone()
                .or_else(|| cfg.model.clone())
                .ok_or_else(|| CliError::Usage("train needs --out for the model file".into()))?;
            let trained = commands::train(&cfg, &data)?;
            trained.model.save(&model_path)?;
            let trace_path = model_path.with_extension("trace.csv");
            emit(Some(&trace_path), &trained.trace_csv)?;
            say(format!(
                "trained {} on {} (seed {}); model {}, trace {}",
                trained.model.spec,
                data.display(),
                cfg.seed,
                model_path.display(),
                trace_path.display()
            ));
            if let Some(v) = trained.validation {
                let mut parts = vec![format!("{} held-out rows", v.rows)];
                if let Some(r2) = v.r2 {
                    parts.push(format!("r2 {r2:.4}"));
                }
                if let Some(rmse) = v.rmse {
                    parts.push(format!("rmse {rmse:.4}"));
                }
                if let Some(acc) = v.accuracy {
                    parts.push(format!("accuracy {acc:.4}"));
                }
                say(parts.join(", "));
            }
        }
        Command::Predict { model, .. } => {
            let inputs = at_most_one(plain, "input")?
                .or_else(|| cfg.inputs.clone())
                .ok_or_else(|| CliError::Usage("predict needs an input file or grid".into()))?;
            let m = ModelFile::load(&model)?;
            let csv = commands::predict(&cfg, &m, &inputs)?;
            emit(out, &csv)?;
            say(format!("predicted {} rows", csv.lines().count() - 1));
        }
        Command::Inspect { model, layer, bins, .. } => {
            if !plain.is_empty() {
                return Err(CliError::Usage(format!("unexpected arguments {plain:?}")));
            }
            let m = ModelFile::load(&model)?;
            let report = commands::inspect(&cfg, &m, layer, bins)?;
            match out {
                Some(p) => {
                    emit(Some(p), &report.histogram_csv)?;
                    let params = p.with_extension("params.csv");
                    emit(Some(&params), &report.params_csv)?;
                    say(format!("histograms {}, parameters {}", p.display(), params.display()));
                }
                None => emit(None, &format!("{}\n{}", report.params_csv, report.histogram_csv))?,
            }
        }
        Command::Benchmark { suite, .. } => {
            if !plain.is_empty() {
                return Err(CliError::Usage(format!("unexpected arguments {plain:?}")));
            }
            let suite: Suite = suite.parse()?;
            let table = benchmark::run(&cfg, suite)?;
            emit(out, &table)?;
            say(format!("{suite}: {} rows (master seed {})", table.lines().count() - 1, cfg.seed));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hbdl: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
