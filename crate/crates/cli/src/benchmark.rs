//! Benchmark suites. Every cell is an independent training run with its own
//! random stream derived from the master seed and the cell index; cells run
//! on the rayon pool and rows come back in cell order.

use std::fmt;
use std::str::FromStr;

use hbdl::conjugate::ConjugateToy;
use hbdl::data::{self, distance_to_moons};
use hbdl::metrics;
use hbdl::optimizer::{train_deterministic, train_variational};
use hbdl::predictive::predict;
use hbdl::random::{derived, RunRng};
use hbdl::tensor::softplus_inv;
use hbdl::variational::Objective;
use hbdl::{Dataset, NetworkSpec, PriorSpec, Targets, Task, Tensor, VariationalState};
use rand::Rng;
use rayon::prelude::*;

use crate::config::{BenchModel, RunConfig, TauPolicy};
use crate::error::{CliError, CliResult};
use crate::model::ModelFile;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    XsinxGrid,
    TwoMoons,
    EstimatorVariance,
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::XsinxGrid => "xsinx-grid",
            Suite::TwoMoons => "two-moons",
            Suite::EstimatorVariance => "estimator-variance",
        })
    }
}

impl FromStr for Suite {
    type Err = CliError;
    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "xsinx-grid" => Ok(Suite::XsinxGrid),
            "two-moons" => Ok(Suite::TwoMoons),
            "estimator-variance" => Ok(Suite::EstimatorVariance),
            other => Err(CliError::Usage(format!(
                "unknown suite '{other}' (expected xsinx-grid, two-moons or estimator-variance)"
            ))),
        }
    }
}

/// Streams at or above this index seed datasets shared by paired cells.
const DATA_STREAMS: u64 = 1 << 32;

fn data_seed(master: u64, pair: usize) -> u64 {
    derived(master, DATA_STREAMS + pair as u64).random()
}

fn cell_rng(master: u64, cell: usize) -> RunRng {
    derived(master, cell as u64)
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub const XSINX_HEADER: &str = "cell,noise,model,prior,seed,tau_eps,r2,rmse,min_variance";

#[derive(Debug, Clone, PartialEq)]
pub struct XsinxRow {
    pub cell: usize,
    pub noise: f64,
    pub model: BenchModel,
    /// `none` for the point-estimate network.
    pub prior: String,
    pub seed: usize,
    pub tau_eps: f64,
    pub r2: f64,
    pub rmse: f64,
    /// Smallest predictive variance on the evaluation grid.
    pub min_variance: f64,
}

impl XsinxRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{:?},{},{},{},{:?},{:?},{:?},{:?}",
            self.cell,
            self.noise,
            self.model,
            csv_field(&self.prior),
            self.seed,
            self.tau_eps,
            self.r2,
            self.rmse,
            self.min_variance
        )
    }
}

/// Midpoints of `points` equal cells over `(lo, hi)` and the noiseless targets.
pub fn xsinx_eval_grid(lo: f64, hi: f64, points: usize) -> (Tensor, Vec<f64>) {
    let h = (hi - lo) / points as f64;
    let x: Vec<f64> = (0..points).map(|i| lo + h * (i as f64 + 0.5)).collect();
    let y = x.iter().map(|v| v * v.sin()).collect();
    (Tensor::matrix(points, 1, x).expect("column"), y)
}

fn cell_tau(cfg: &RunConfig, noise: f64) -> f64 {
    match cfg.tau_policy {
        TauPolicy::Fixed => cfg.tau_eps,
        TauPolicy::Noise => (1.0 / noise.max(cfg.tau_floor).powi(2)).min(cfg.tau_max),
    }
}

pub fn xsinx_grid(cfg: &RunConfig) -> CliResult<Vec<XsinxRow>> {
    let spec = cfg.network()?;
    if spec.input_dim() != 1 || spec.output_dim() != 1 || cfg.task != Task::Regression {
        return Err(CliError::Usage("xsinx-grid needs a 1-input, 1-output regression network".into()));
    }
    cfg.train_config()
        .validate(cfg.n)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let direct_prior = match (&cfg.prior, cfg.models.contains(&BenchModel::Direct)) {
        (None, true) => return Err(CliError::Usage("the direct benchmark model needs a prior".into())),
        (p, _) => *p,
    };
    let mut cells = Vec::new();
    for (i, &noise) in cfg.noise_levels.iter().enumerate() {
        for &model in &cfg.models {
            for s in 0..cfg.seeds {
                cells.push((noise, model, s, i * cfg.seeds + s));
            }
        }
    }
    let (x_eval, y_eval) = xsinx_eval_grid(cfg.lo, cfg.hi, cfg.eval_points);
    cells
        .into_par_iter()
        .enumerate()
        .map(|(cell, (noise, model, seed, pair))| {
            let ds = data::gen_xsinx_design(cfg.n, noise, cfg.lo, cfg.hi, cfg.design, data_seed(cfg.seed, pair))?;
            let mut rng = cell_rng(cfg.seed, cell);
            let (ds, x_eval) = if cfg.standardize {
                let (d, r) = data::standardize(&ds);
                let xe = r.apply(&x_eval)?;
                (d, xe)
            } else {
                (ds, x_eval.clone())
            };
            let mut tc = cfg.train_config();
            tc.tau_eps = cell_tau(cfg, noise);
            let (state, prior) = match model {
                BenchModel::Nn => {
                    let fit = train_deterministic(&spec, &ds, &tc, &mut rng)?;
                    (ModelFile::point_state(fit.params.tensor(), fit.tau_eps)?, "none".to_string())
                }
                BenchModel::Direct | BenchModel::Hier => {
                    let prior = if model == BenchModel::Direct {
                        direct_prior.expect("checked above")
                    } else {
                        cfg.hier_prior
                    };
                    let (vs, _) = train_variational(&spec, &ds, &tc, &prior, &mut rng)?;
                    (vs, prior.to_string())
                }
            };
            let summary = predict(&spec, &state, &x_eval, cfg.draws, &[], &mut rng)?;
            let mean = summary.mean.data();
            let min_variance = summary
                .variance_diagonal()
                .data()
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            Ok(XsinxRow {
                cell,
                noise,
                model,
                prior,
                seed,
                tau_eps: state.tau_eps(),
                r2: metrics::r2(&y_eval, mean)?,
                rmse: metrics::rmse(&y_eval, mean)?,
                min_variance,
            })
        })
        .collect()
}

pub const MOONS_HEADER: &str = "cell,prior,seed,accuracy,band_variance,else_variance,band_points,else_points";

#[derive(Debug, Clone, PartialEq)]
pub struct MoonsRow {
    pub cell: usize,
    pub prior: String,
    pub seed: usize,
    pub accuracy: f64,
    /// Mean predictive variance (averaged over classes) within `band` of the
    /// noiseless moons.
    pub band_variance: f64,
    pub else_variance: f64,
    pub band_points: usize,
    pub else_points: usize,
}

impl MoonsRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{:?},{:?},{:?},{},{}",
            self.cell,
            csv_field(&self.prior),
            self.seed,
            self.accuracy,
            self.band_variance,
            self.else_variance,
            self.band_points,
            self.else_points
        )
    }
}

fn moons_data(cfg: &RunConfig, seed: usize) -> CliResult<(Dataset, Dataset)> {
    let mut r = derived(cfg.seed, DATA_STREAMS + seed as u64);
    let ds = data::gen_two_moons(cfg.n, cfg.noise, r.random())?;
    Ok(data::split(&ds, cfg.train_fraction, r.random())?)
}

pub fn two_moons(cfg: &RunConfig) -> CliResult<Vec<MoonsRow>> {
    let spec = cfg.network()?;
    if spec.input_dim() != 2 || cfg.task != Task::Classification {
        return Err(CliError::Usage("two-moons needs a 2-input classification network".into()));
    }
    if cfg.train_fraction >= 1.0 {
        return Err(CliError::Usage("two-moons needs train_fraction < 1 for validation".into()));
    }
    let grid = cfg.grid.points();
    let in_band: Vec<bool> = (0..grid.rows())
        .map(|k| {
            let r = grid.row(k);
            distance_to_moons([r[0], r[1]]) <= cfg.band
        })
        .collect();
    let mut cells = Vec::new();
    for prior in &cfg.moons_priors {
        for s in 0..cfg.seeds {
            cells.push((*prior, s));
        }
    }
    cells
        .into_par_iter()
        .enumerate()
        .map(|(cell, (prior, seed))| {
            let (train, held_out) = moons_data(cfg, seed)?;
            let mut rng = cell_rng(cfg.seed, cell);
            let (train, xv, xg) = if cfg.standardize {
                let (t, r) = data::standardize(&train);
                (t, r.apply(&held_out.x)?, r.apply(&grid)?)
            } else {
                (train, held_out.x.clone(), grid.clone())
            };
            cfg.train_config()
                .validate(train.len())
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let (vs, _) = train_variational(&spec, &train, &cfg.train_config(), &prior, &mut rng)?;
            let Targets::Labels { labels, .. } = &held_out.targets else {
                unreachable!("two-moons data is labelled")
            };
            let val = predict(&spec, &vs, &xv, cfg.draws, &[], &mut rng)?;
            let accuracy = metrics::accuracy(labels, &val.mean)?;
            let on_grid = predict(&spec, &vs, &xg, cfg.draws, &[], &mut rng)?;
            let diag = on_grid.variance_diagonal();
            let (mut band, mut band_n, mut other, mut other_n) = (0.0, 0, 0.0, 0);
            for (k, &b) in in_band.iter().enumerate() {
                let row = diag.row(k);
                let v = row.iter().sum::<f64>() / row.len() as f64;
                if b {
                    band += v;
                    band_n += 1;
                } else {
                    other += v;
                    other_n += 1;
                }
            }
            Ok(MoonsRow {
                cell,
                prior: prior.to_string(),
                seed,
                accuracy,
                band_variance: band / band_n.max(1) as f64,
                else_variance: other / other_n.max(1) as f64,
                band_points: band_n,
                else_points: other_n,
            })
        })
        .collect()
}

pub const ESTIMATOR_HEADER: &str = "cell,seed,coordinate,parameter,score_variance,pathwise_variance,ratio";

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorRow {
    pub cell: usize,
    pub seed: usize,
    pub coordinate: usize,
    /// `mu[i]` or `rho[i]`; index 0 is the bias, 1 the slope.
    pub parameter: String,
    pub score_variance: f64,
    pub pathwise_variance: f64,
    /// `score_variance / pathwise_variance`.
    pub ratio: f64,
}

impl EstimatorRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{:?},{:?},{:?}",
            self.cell,
            self.seed,
            self.coordinate,
            self.parameter,
            self.score_variance,
            self.pathwise_variance,
            self.ratio
        )
    }
}

/// Toy used by the estimator suite: 20 centered points, unit prior scale,
/// noise precision 4.
pub fn estimator_toy(data_seed: u64) -> CliResult<ConjugateToy> {
    Ok(ConjugateToy::generate(20, 0.5, -1.0, 1.0, 4.0, data_seed)?)
}

/// The state at which the estimators are compared: exact posterior scales,
/// means displaced by one posterior standard deviation.
pub fn estimator_state(toy: &ConjugateToy) -> CliResult<VariationalState> {
    let post = toy.posterior();
    let mu = Tensor::vector(post.iter().map(|m| m.mean + m.std).collect());
    let rho = Tensor::vector(post.iter().map(|m| softplus_inv(m.std)).collect());
    Ok(VariationalState::new(mu, rho, toy.tau)?)
}

fn sample_variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)
}

pub fn estimator_variance(cfg: &RunConfig) -> CliResult<Vec<EstimatorRow>> {
    let rows: Vec<Vec<EstimatorRow>> = (0..cfg.seeds)
        .into_par_iter()
        .map(|seed| {
            let toy = estimator_toy(data_seed(cfg.seed, seed))?;
            let vs = estimator_state(&toy)?;
            let ds = toy.dataset();
            let spec: NetworkSpec = toy.spec();
            let prior: PriorSpec = toy.prior();
            let objective = Objective {
                spec: &spec,
                prior: &prior,
                batch: &ds,
                n_total: ds.len(),
            };
            let mut rng = cell_rng(cfg.seed, seed);
            let dims = 2 * vs.len();
            let mut score = vec![Vec::with_capacity(cfg.estimator_draws); dims];
            let mut path = vec![Vec::with_capacity(cfg.estimator_draws); dims];
            for _ in 0..cfg.estimator_draws {
                let g = objective.grad_score(&vs, 1, &mut rng)?.to_flat();
                for (c, v) in g.into_iter().enumerate() {
                    score[c].push(v);
                }
                let g = objective.grad_pathwise(&vs, 1, &mut rng)?.1.to_flat();
                for (c, v) in g.into_iter().enumerate() {
                    path[c].push(v);
                }
            }
            let n = vs.len();
            Ok((0..dims)
                .map(|c| {
                    let sv = sample_variance(&score[c]);
                    let pv = sample_variance(&path[c]);
                    EstimatorRow {
                        cell: seed * dims + c,
                        seed,
                        coordinate: c,
                        parameter: if c < n { format!("mu[{c}]") } else { format!("rho[{}]", c - n) },
                        score_variance: sv,
                        pathwise_variance: pv,
                        ratio: sv / pv,
                    }
                })
                .collect())
        })
        .collect::<CliResult<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// Run a suite and render its table.
pub fn run(cfg: &RunConfig, suite: Suite) -> CliResult<String> {
    let (header, rows): (&str, Vec<String>) = match suite {
        Suite::XsinxGrid => (XSINX_HEADER, xsinx_grid(cfg)?.iter().map(XsinxRow::to_csv).collect()),
        Suite::TwoMoons => (MOONS_HEADER, two_moons(cfg)?.iter().map(MoonsRow::to_csv).collect()),
        Suite::EstimatorVariance => (
            ESTIMATOR_HEADER,
            estimator_variance(cfg)?.iter().map(EstimatorRow::to_csv).collect(),
        ),
    };
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(header);
    out.push('\n');
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_xsinx() -> RunConfig {
        RunConfig {
            epochs: 20,
            noise_levels: vec![0.0, 0.5],
            seeds: 2,
            draws: 5,
            eval_points: 50,
            ..RunConfig::preset("xsinx-paper").unwrap()
        }
    }

    #[test]
    fn xsinx_rows_cover_levels_models_and_seeds() {
        let cfg = tiny_xsinx();
        let rows = xsinx_grid(&cfg).unwrap();
        assert_eq!(rows.len(), 2 * 3 * 2);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.cell, i);
            assert!(r.min_variance >= 1.0 / r.tau_eps - 1e-12);
        }
        assert_eq!(rows[0].model, BenchModel::Nn);
        assert_eq!(rows[0].prior, "none");
        assert_eq!(rows[2].model, BenchModel::Direct);
        let csv = run(&cfg, Suite::XsinxGrid).unwrap();
        assert_eq!(csv.lines().next(), Some(XSINX_HEADER));
        assert!(csv.contains("\"gaussian(0,0.1)\""));
    }

    #[test]
    fn noise_policy_matches_the_generating_precision() {
        let cfg = RunConfig {
            tau_policy: TauPolicy::Noise,
            ..tiny_xsinx()
        };
        assert_eq!(cell_tau(&cfg, 0.5), 4.0);
        assert!((cell_tau(&cfg, 0.0) - 400.0).abs() < 1e-9);
        assert_eq!(cell_tau(&RunConfig { tau_max: 100.0, ..cfg }, 0.0), 100.0);
    }

    #[test]
    fn paired_cells_share_their_dataset() {
        let cfg = tiny_xsinx();
        assert_eq!(data_seed(cfg.seed, 3), data_seed(cfg.seed, 3));
        assert_ne!(data_seed(cfg.seed, 3), data_seed(cfg.seed, 4));
        assert_ne!(data_seed(1, 3), data_seed(2, 3));
    }

    #[test]
    fn estimator_rows_per_coordinate() {
        let cfg = RunConfig {
            seeds: 2,
            estimator_draws: 500,
            ..RunConfig::default()
        };
        let rows = estimator_variance(&cfg).unwrap();
        assert_eq!(rows.len(), 8);
        assert_eq!(rows[5].parameter, "mu[1]");
        assert!(rows.iter().all(|r| r.ratio > 1.0));
    }

    #[test]
    fn suite_names_parse() {
        for s in [Suite::XsinxGrid, Suite::TwoMoons, Suite::EstimatorVariance] {
            assert_eq!(s.to_string().parse::<Suite>().unwrap(), s);
        }
        assert!("grid".parse::<Suite>().is_err());
    }
}
