//! Rectangular evaluation grids written as `(lo,hi)x(lo,hi)@steps`.

use std::fmt;
use std::str::FromStr;

use hbdl::Tensor;

use crate::error::CliError;

/// A tensor-product grid with `steps` evenly spaced points (ends included)
/// along every axis.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub ranges: Vec<(f64, f64)>,
    pub steps: usize,
}

impl GridSpec {
    pub fn dim(&self) -> usize {
        self.ranges.len()
    }

    pub fn len(&self) -> usize {
        self.steps.pow(self.ranges.len() as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn axis(&self, a: usize) -> Vec<f64> {
        let (lo, hi) = self.ranges[a];
        let h = (hi - lo) / (self.steps - 1) as f64;
        (0..self.steps)
            .map(|i| if i + 1 == self.steps { hi } else { lo + h * i as f64 })
            .collect()
    }

    /// All points, first axis varying slowest.
    pub fn points(&self) -> Tensor {
        let d = self.dim();
        let axes: Vec<Vec<f64>> = (0..d).map(|a| self.axis(a)).collect();
        let n = self.len();
        let mut data = Vec::with_capacity(n * d);
        for k in 0..n {
            let mut rem = k;
            let mut idx = vec![0; d];
            for a in (0..d).rev() {
                idx[a] = rem % self.steps;
                rem /= self.steps;
            }
            data.extend(idx.iter().enumerate().map(|(a, &i)| axes[a][i]));
        }
        Tensor::matrix(n, d, data).expect("grid shape")
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.ranges.iter().map(|(lo, hi)| format!("({lo},{hi})")).collect();
        write!(f, "{}@{}", parts.join("x"), self.steps)
    }
}

impl FromStr for GridSpec {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        let bad = |why: &str| CliError::Usage(format!("bad grid '{s}': {why}"));
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let (axes, steps) = compact.rsplit_once('@').ok_or_else(|| bad("missing @steps"))?;
        let steps: usize = steps.parse().map_err(|_| bad("steps is not a count"))?;
        if steps < 2 {
            return Err(bad("need at least 2 steps per axis"));
        }
        let mut ranges = Vec::new();
        for part in axes.replace('×', "x").split('x') {
            let inner = part
                .strip_prefix('(')
                .and_then(|p| p.strip_suffix(')'))
                .ok_or_else(|| bad("each axis is written (lo,hi)"))?;
            let (lo, hi) = inner.split_once(',').ok_or_else(|| bad("each axis is written (lo,hi)"))?;
            let lo: f64 = lo.parse().map_err(|_| bad("bound is not a number"))?;
            let hi: f64 = hi.parse().map_err(|_| bad("bound is not a number"))?;
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(bad("need finite lo < hi"));
            }
            ranges.push((lo, hi));
        }
        Ok(GridSpec { ranges, steps })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_grid_has_steps_squared_rows() {
        let g: GridSpec = "(-3,3)x(-3,3)@100".parse().unwrap();
        let p = g.points();
        assert_eq!(p.shape(), &[10_000, 2]);
        assert_eq!(p.row(0), &[-3.0, -3.0]);
        assert_eq!(p.row(1)[0], -3.0);
        assert_eq!(p.row(9_999), &[3.0, 3.0]);
    }

    #[test]
    fn parses_unicode_times_and_round_trips() {
        let g: GridSpec = "(0,1) × (2,4)@3".parse().unwrap();
        assert_eq!(g.ranges, vec![(0.0, 1.0), (2.0, 4.0)]);
        assert_eq!(g.to_string().parse::<GridSpec>().unwrap(), g);
        let line: GridSpec = "(-10,10)@5".parse().unwrap();
        assert_eq!(line.points().data(), &[-10.0, -5.0, 0.0, 5.0, 10.0]);
    }

    #[test]
    fn rejects_malformed_specs() {
        for bad in ["(0,1)x(0,1)", "(1,0)@4", "(0,1)@1", "0,1@4", "(0,a)@3"] {
            assert!(bad.parse::<GridSpec>().is_err(), "{bad}");
        }
    }
}
