//! Datasets: synthetic generators, CSV ingestion, splitting and feature
//! standardization.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::random::{permutation, seeded, standard_normal};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Regression,
    Classification,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Regression => "regression",
            Task::Classification => "classification",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "regression" => Ok(Task::Regression),
            "classification" => Ok(Task::Classification),
            other => Err(Error::InvalidArgument(format!("unknown task '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    /// `[N, n_out]` real-valued targets.
    Real(Tensor),
    /// Class indices in `0..classes`.
    Labels { labels: Vec<usize>, classes: usize },
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Real(t) => t.rows(),
            Targets::Labels { labels, .. } => labels.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn task(&self) -> Task {
        match self {
            Targets::Real(_) => Task::Regression,
            Targets::Labels { .. } => Task::Classification,
        }
    }

    pub fn select(&self, indices: &[usize]) -> Targets {
        match self {
            Targets::Real(t) => Targets::Real(t.select_rows(indices)),
            Targets::Labels { labels, classes } => Targets::Labels {
                labels: indices.iter().map(|&i| labels[i]).collect(),
                classes: *classes,
            },
        }
    }
}

/// Per-feature shift and scale fitted on a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Features with zero spread are left unscaled (shift only is skipped too).
    pub constant: Vec<bool>,
}

impl Standardization {
    pub fn fit(x: &Tensor) -> Self {
        let (n, d) = (x.rows(), x.cols());
        let mut mean = vec![0.0; d];
        for i in 0..n {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for i in 0..n {
            for j in 0..d {
                let c = x.row(i)[j] - mean[j];
                var[j] += c * c;
            }
        }
        let std: Vec<f64> = var.iter().map(|v| (v / n as f64).sqrt()).collect();
        let constant: Vec<bool> = std.iter().map(|&s| s <= f64::EPSILON).collect();
        Standardization {
            mean,
            std,
            constant,
        }
    }

    pub fn identity(d: usize) -> Self {
        Standardization {
            mean: vec![0.0; d],
            std: vec![1.0; d],
            constant: vec![false; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, x: &Tensor) -> Result<()> {
        if x.cols() != self.dim() {
            return Err(Error::ShapeMismatch {
                op: "standardize",
                left: x.shape().to_vec(),
                right: vec![x.rows(), self.dim()],
            });
        }
        Ok(())
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        let d = self.dim();
        let mut out = x.clone();
        for (k, v) in out.data_mut().iter_mut().enumerate() {
            let j = k % d;
            if !self.constant[j] {
                *v = (*v - self.mean[j]) / self.std[j];
            }
        }
        Ok(out)
    }

    /// Inverse of [`Standardization::apply`].
    pub fn invert(&self, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        let d = self.dim();
        let mut out = x.clone();
        for (k, v) in out.data_mut().iter_mut().enumerate() {
            let j = k % d;
            if !self.constant[j] {
                *v = *v * self.std[j] + self.mean[j];
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Tensor,
    pub targets: Targets,
    pub standardization: Option<Standardization>,
}

impl Dataset {
    pub fn new(x: Tensor, targets: Targets) -> Result<Self> {
        if x.shape().len() != 2 {
            return Err(Error::InvalidArgument(format!(
                "features must be a 2-D tensor, got shape {:?}",
                x.shape()
            )));
        }
        if x.rows() != targets.len() {
            return Err(Error::ShapeMismatch {
                op: "dataset",
                left: x.shape().to_vec(),
                right: vec![targets.len()],
            });
        }
        if let Targets::Labels { labels, classes } = &targets {
            if let Some(bad) = labels.iter().find(|&&l| l >= *classes) {
                return Err(Error::InvalidArgument(format!(
                    "label {bad} out of range for {classes} classes"
                )));
            }
        }
        Ok(Dataset {
            x,
            targets,
            standardization: None,
        })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.x.cols()
    }

    pub fn task(&self) -> Task {
        self.targets.task()
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(indices),
            targets: self.targets.select(indices),
            standardization: self.standardization.clone(),
        }
    }
}

/// `y = x sin(x) + ε` with `x ~ U(lo, hi)` and `ε ~ N(0, noise_std²)`.
/// How the inputs of [`gen_xsinx_design`] are placed in `(lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InputDesign {
    /// Independent uniform draws.
    #[default]
    Iid,
    /// One uniform draw in each of `n` equal-width strata, so every input is
    /// still marginally uniform but no stretch of the interval is left empty.
    Stratified,
}

impl fmt::Display for InputDesign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputDesign::Iid => "iid",
            InputDesign::Stratified => "stratified",
        })
    }
}

impl FromStr for InputDesign {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "iid" => Ok(InputDesign::Iid),
            "stratified" => Ok(InputDesign::Stratified),
            other => Err(Error::InvalidArgument(format!("unknown input design '{other}'"))),
        }
    }
}

pub fn gen_xsinx(n: usize, noise_std: f64, lo: f64, hi: f64, seed: u64) -> Result<Dataset> {
    gen_xsinx_design(n, noise_std, lo, hi, InputDesign::Iid, seed)
}

pub fn gen_xsinx_design(
    n: usize,
    noise_std: f64,
    lo: f64,
    hi: f64,
    design: InputDesign,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "invalid interval ({lo}, {hi})"
        )));
    }
    if !(noise_std >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise std must be non-negative, got {noise_std}"
        )));
    }
    let mut rng = seeded(seed);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    let width = (hi - lo) / n as f64;
    for i in 0..n {
        let x = match design {
            InputDesign::Iid => rng.random_range(lo..hi),
            InputDesign::Stratified => {
                let u: f64 = rng.random();
                (lo + width * (i as f64 + u)).min(hi)
            }
        };
        let eps = if noise_std > 0.0 {
            noise_std * standard_normal(&mut rng)
        } else {
            0.0
        };
        xs.push(x);
        ys.push(x * x.sin() + eps);
    }
    Dataset::new(
        Tensor::matrix(n, 1, xs)?,
        Targets::Real(Tensor::matrix(n, 1, ys)?),
    )
}

/// Two interleaving half circles. Class 0 lies on `(cos t, sin t)`, class 1
/// on `(1 - cos t, 0.5 - sin t)`, `t ~ U(0, π)`, plus isotropic noise.
pub fn gen_two_moons(n: usize, noise_std: f64, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::InvalidArgument("two moons needs n >= 2".into()));
    }
    if !(noise_std >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise std must be non-negative, got {noise_std}"
        )));
    }
    let mut rng = seeded(seed);
    let n_upper = n - n / 2;
    let mut xs = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let t = rng.random_range(0.0..std::f64::consts::PI);
        let (mut a, mut b, label) = if i < n_upper {
            (t.cos(), t.sin(), 0)
        } else {
            (1.0 - t.cos(), 0.5 - t.sin(), 1)
        };
        if noise_std > 0.0 {
            a += noise_std * standard_normal(&mut rng);
            b += noise_std * standard_normal(&mut rng);
        }
        xs.push(a);
        xs.push(b);
        labels.push(label);
    }
    Dataset::new(
        Tensor::matrix(n, 2, xs)?,
        Targets::Labels { labels, classes: 2 },
    )
}

/// Euclidean distance from `p` to the noiseless two-moons curves.
pub fn distance_to_moons(p: [f64; 2]) -> f64 {
    fn arc(p: [f64; 2], center: [f64; 2], upper: bool) -> f64 {
        let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
        let on_arc_side = if upper { dy >= 0.0 } else { dy <= 0.0 };
        if on_arc_side {
            ((dx * dx + dy * dy).sqrt() - 1.0).abs()
        } else {
            let e1 = ((dx - 1.0).powi(2) + dy * dy).sqrt();
            let e2 = ((dx + 1.0).powi(2) + dy * dy).sqrt();
            e1.min(e2)
        }
    }
    arc(p, [0.0, 0.0], true).min(arc(p, [1.0, 0.5], false))
}

/// Shuffle, then cut after `ceil(fraction * N)` rows.
pub fn split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let n = ds.len();
    let n_train = (train_fraction * n as f64).ceil() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::InvalidArgument(format!(
            "fraction {train_fraction} of {n} rows leaves an empty part"
        )));
    }
    let perm = permutation(&mut seeded(seed), n);
    Ok((ds.select(&perm[..n_train]), ds.select(&perm[n_train..])))
}

/// Standardize the features of a training set; the returned record is also
/// stored on the dataset so it can be reapplied to new inputs.
pub fn standardize(ds: &Dataset) -> (Dataset, Standardization) {
    let record = Standardization::fit(&ds.x);
    let x = record.apply(&ds.x).expect("record fitted on these features");
    (
        Dataset {
            x,
            targets: ds.targets.clone(),
            standardization: Some(record.clone()),
        },
        record,
    )
}

pub fn destandardize(record: &Standardization, values: &Tensor) -> Result<Tensor> {
    record.invert(values)
}

/// Column layout of a CSV file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsvSchema {
    pub features: usize,
    pub targets: TargetColumns,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetColumns {
    /// No target columns (prediction inputs).
    None,
    Real(usize),
    /// One integer label column with this many classes.
    Label(usize),
}

impl TargetColumns {
    fn width(self) -> usize {
        match self {
            TargetColumns::None => 0,
            TargetColumns::Real(n) => n,
            TargetColumns::Label(_) => 1,
        }
    }
}

/// Parse CSV text. A first row containing any non-numeric field is a header.
pub fn parse_csv(text: &str, schema: CsvSchema) -> Result<(Tensor, Option<Targets>)> {
    let width = schema.features + schema.targets.width();
    let mut features = Vec::new();
    let mut real = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0usize;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: Vec<Option<f64>> = fields.iter().map(|f| f.parse::<f64>().ok()).collect();
        if rows == 0 && idx == first_nonempty(text) && parsed.iter().any(Option::is_none) {
            continue;
        }
        if fields.len() != width {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {width} columns, found {}", fields.len()),
            });
        }
        for (col, (value, raw_field)) in parsed.iter().zip(&fields).enumerate() {
            let Some(v) = value else {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("column {} is not a number: '{raw_field}'", col + 1),
                });
            };
            if col < schema.features {
                features.push(*v);
            } else {
                match schema.targets {
                    TargetColumns::Real(_) => real.push(*v),
                    TargetColumns::Label(classes) => {
                        if v.fract() != 0.0 || *v < 0.0 || *v >= classes as f64 {
                            return Err(Error::Parse {
                                line: line_no,
                                message: format!(
                                    "label '{raw_field}' is not an integer in 0..{classes}"
                                ),
                            });
                        }
                        labels.push(*v as usize);
                    }
                    TargetColumns::None => unreachable!("no target columns"),
                }
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Parse {
            line: 0,
            message: "no data rows".into(),
        });
    }
    let x = Tensor::matrix(rows, schema.features, features)?;
    let targets = match schema.targets {
        TargetColumns::None => None,
        TargetColumns::Real(n) => Some(Targets::Real(Tensor::matrix(rows, n, real)?)),
        TargetColumns::Label(classes) => Some(Targets::Labels { labels, classes }),
    };
    Ok((x, targets))
}

fn first_nonempty(text: &str) -> usize {
    text.lines()
        .position(|l| !l.trim().is_empty())
        .unwrap_or(0)
}

pub fn load_csv(path: impl AsRef<Path>, schema: CsvSchema) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    let (x, targets) = parse_csv(&text, schema)?;
    let targets = targets.ok_or_else(|| {
        Error::InvalidArgument("a dataset schema needs target columns".into())
    })?;
    Dataset::new(x, targets)
}

pub fn load_inputs(path: impl AsRef<Path>, features: usize) -> Result<Tensor> {
    let text = fs::read_to_string(path)?;
    let schema = CsvSchema {
        features,
        targets: TargetColumns::None,
    };
    Ok(parse_csv(&text, schema)?.0)
}

/// Render a dataset as CSV with a header row. Reals use the shortest
/// representation that parses back to the same `f64`.
pub fn to_csv(ds: &Dataset) -> String {
    let d = ds.input_dim();
    let mut header: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    match &ds.targets {
        Targets::Real(t) => header.extend((0..t.cols()).map(|j| format!("y{j}"))),
        Targets::Labels { .. } => header.push("label".into()),
    }
    let mut out = header.join(",");
    out.push('\n');
    for i in 0..ds.len() {
        let mut fields: Vec<String> = ds.x.row(i).iter().map(|v| format!("{v:?}")).collect();
        match &ds.targets {
            Targets::Real(t) => fields.extend(t.row(i).iter().map(|v| format!("{v:?}"))),
            Targets::Labels { labels, .. } => fields.push(labels[i].to_string()),
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn save_csv(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    fs::write(path, to_csv(ds))?;
    Ok(())
}
