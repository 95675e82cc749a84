//! Direct and hierarchical priors over the flat weight vector.
//!
//! Every prior is applied i.i.d. to each entry of the weight vector. The
//! hierarchical variants are evaluated through their marginal density over
//! the hyperparameter:
//!
//! * a zero-mean Gaussian with a `Gamma(shape, rate)` precision marginalizes
//!   to a Student-t with location 0, precision `shape / rate` and
//!   `2 * shape` degrees of freedom;
//! * an Inverse-Gamma on the Gaussian *variance* gives the same Student-t;
//! * an Inverse-Gamma on the Laplace scale has the closed form
//!   `a b^a / (2 (|w| + b)^(a + 1))`;
//! * an Inverse-Gamma on the Cauchy scale has no closed form and is
//!   integrated numerically by [`log_marginal_numeric`].

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::{sigmoid, softplus, ElementwiseOp, Tensor};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Base family of a scale-mixture prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleBase {
    Gaussian,
    Laplace,
    Cauchy,
}

impl fmt::Display for ScaleBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScaleBase::Gaussian => "gaussian",
            ScaleBase::Laplace => "laplace",
            ScaleBase::Cauchy => "cauchy",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriorSpec {
    Gaussian { mean: f64, std: f64 },
    Laplace { loc: f64, scale: f64 },
    Cauchy { loc: f64, scale: f64 },
    /// Zero-mean Gaussian whose precision is `Gamma(shape, rate)`.
    HierGaussianGamma { shape: f64, rate: f64 },
    /// Zero-centered base whose variance (Gaussian) or scale (Laplace,
    /// Cauchy) is `InverseGamma(shape, scale)`.
    HierScaleIg {
        base: ScaleBase,
        shape: f64,
        scale: f64,
    },
}

/// Student-t with location, precision and degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudentT {
    pub loc: f64,
    pub precision: f64,
    pub dof: f64,
}

impl StudentT {
    pub fn new(loc: f64, precision: f64, dof: f64) -> Result<Self> {
        if !(precision > 0.0 && dof > 0.0 && loc.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "Student-t needs precision > 0 and dof > 0, got {precision}, {dof}"
            )));
        }
        Ok(StudentT {
            loc,
            precision,
            dof,
        })
    }

    fn log_norm(&self) -> f64 {
        let nu = self.dof;
        ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) + 0.5 * (self.precision / (PI * nu)).ln()
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        let d = x - self.loc;
        self.log_norm()
            - 0.5 * (self.dof + 1.0) * (self.precision * d * d / self.dof).ln_1p()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.log_pdf(x).exp()
    }
}

/// Marginalize a Gamma(`shape`, `rate`) precision out of a zero-mean Gaussian.
pub fn marginalize_gamma(shape: f64, rate: f64) -> Result<StudentT> {
    if !(shape > 0.0 && rate > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "Gamma parameters must be positive, got ({shape}, {rate})"
        )));
    }
    StudentT::new(0.0, shape / rate, 2.0 * shape)
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        let ok = match *self {
            PriorSpec::Gaussian { mean, std } => mean.is_finite() && positive(std),
            PriorSpec::Laplace { loc, scale } | PriorSpec::Cauchy { loc, scale } => {
                loc.is_finite() && positive(scale)
            }
            PriorSpec::HierGaussianGamma { shape, rate } => positive(shape) && positive(rate),
            PriorSpec::HierScaleIg { shape, scale, .. } => positive(shape) && positive(scale),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "prior {self} needs finite location and strictly positive scale/shape parameters"
            )))
        }
    }

    /// The Student-t equivalent of a Gaussian-scale hierarchy, if any.
    pub fn student_t(&self) -> Option<StudentT> {
        match *self {
            PriorSpec::HierGaussianGamma { shape, rate }
            | PriorSpec::HierScaleIg {
                base: ScaleBase::Gaussian,
                shape,
                scale: rate,
            } => marginalize_gamma(shape, rate).ok(),
            _ => None,
        }
    }

    /// Log density of a single weight.
    pub fn log_density(&self, w: f64) -> Result<f64> {
        let value = match *self {
            PriorSpec::Gaussian { mean, std } => {
                let z = (w - mean) / std;
                -0.5 * LN_2PI - std.ln() - 0.5 * z * z
            }
            PriorSpec::Laplace { loc, scale } => -(2.0 * scale).ln() - (w - loc).abs() / scale,
            PriorSpec::Cauchy { loc, scale } => {
                let z = (w - loc) / scale;
                -(PI * scale).ln() - z.mul_add(z, 0.0).ln_1p()
            }
            PriorSpec::HierGaussianGamma { .. }
            | PriorSpec::HierScaleIg {
                base: ScaleBase::Gaussian,
                ..
            } => self.student_t().expect("validated").log_pdf(w),
            PriorSpec::HierScaleIg {
                base: ScaleBase::Laplace,
                shape,
                scale,
            } => laplace_ig_log_const(shape, scale) - (shape + 1.0) * (w.abs() + scale).ln(),
            PriorSpec::HierScaleIg {
                base: ScaleBase::Cauchy,
                shape,
                scale,
            } => log_marginal_numeric(ScaleBase::Cauchy, shape, scale, w)?,
        };
        Ok(value)
    }

    /// Sum of per-entry log densities over `omega`. Terms are added in sorted
    /// order, so any permutation of `omega` gives a bit-identical result.
    pub fn log_prior(&self, omega: &Tensor) -> Result<f64> {
        let mut terms = omega
            .data()
            .iter()
            .map(|&w| self.log_density(w))
            .collect::<Result<Vec<f64>>>()?;
        terms.sort_by(f64::total_cmp);
        Ok(terms.iter().sum())
    }

    /// Record `log_prior(omega)` on `tape` so it can be differentiated.
    pub fn log_prior_on_tape(&self, tape: &mut Tape, omega: Var) -> Result<Var> {
        let n = tape.value(omega).len() as f64;
        match *self {
            PriorSpec::Gaussian { mean, std } => {
                let z = tape.affine(omega, 1.0 / std, -mean / std)?;
                let z2 = tape.unary(ElementwiseOp::Square, z)?;
                let s = tape.sum(z2)?;
                tape.affine(s, -0.5, n * (-0.5 * LN_2PI - std.ln()))
            }
            PriorSpec::Laplace { loc, scale } => {
                let z = tape.affine(omega, 1.0 / scale, -loc / scale)?;
                let a = tape.unary(ElementwiseOp::Abs, z)?;
                let s = tape.sum(a)?;
                tape.affine(s, -1.0, -n * (2.0 * scale).ln())
            }
            PriorSpec::Cauchy { loc, scale } => {
                let z = tape.affine(omega, 1.0 / scale, -loc / scale)?;
                let z2 = tape.unary(ElementwiseOp::Square, z)?;
                let one_plus = tape.affine(z2, 1.0, 1.0)?;
                let l = tape.unary(ElementwiseOp::Ln, one_plus)?;
                let s = tape.sum(l)?;
                tape.affine(s, -1.0, -n * (PI * scale).ln())
            }
            PriorSpec::HierGaussianGamma { .. }
            | PriorSpec::HierScaleIg {
                base: ScaleBase::Gaussian,
                ..
            } => {
                let t = self.student_t().expect("validated");
                let centered = tape.affine(omega, 1.0, -t.loc)?;
                let z2 = tape.unary(ElementwiseOp::Square, centered)?;
                let inner = tape.affine(z2, t.precision / t.dof, 1.0)?;
                let l = tape.unary(ElementwiseOp::Ln, inner)?;
                let s = tape.sum(l)?;
                tape.affine(s, -0.5 * (t.dof + 1.0), n * t.log_norm())
            }
            PriorSpec::HierScaleIg {
                base: ScaleBase::Laplace,
                shape,
                scale,
            } => {
                let a = tape.unary(ElementwiseOp::Abs, omega)?;
                let shifted = tape.affine(a, 1.0, scale)?;
                let l = tape.unary(ElementwiseOp::Ln, shifted)?;
                let s = tape.sum(l)?;
                tape.affine(s, -(shape + 1.0), n * laplace_ig_log_const(shape, scale))
            }
            PriorSpec::HierScaleIg {
                base: ScaleBase::Cauchy,
                shape,
                scale,
            } => {
                let w = tape.value(omega).clone();
                let mut values = Vec::with_capacity(w.len());
                let mut grads = Vec::with_capacity(w.len());
                for &wi in w.data() {
                    let (v, g) = log_marginal_with_grad(ScaleBase::Cauchy, shape, scale, wi)?;
                    values.push(v);
                    grads.push(g);
                }
                let shape_vec = w.shape().to_vec();
                let node = tape.custom_unary(
                    omega,
                    Tensor::new(shape_vec.clone(), values)?,
                    Tensor::new(shape_vec, grads)?,
                )?;
                tape.sum(node)
            }
        }
    }
}

fn laplace_ig_log_const(shape: f64, scale: f64) -> f64 {
    shape.ln() + shape * scale.ln() - std::f64::consts::LN_2
}

impl fmt::Display for PriorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            PriorSpec::Gaussian { mean, std } => write!(f, "gaussian({mean},{std})"),
            PriorSpec::Laplace { loc, scale } => write!(f, "laplace({loc},{scale})"),
            PriorSpec::Cauchy { loc, scale } => write!(f, "cauchy({loc},{scale})"),
            PriorSpec::HierGaussianGamma { shape, rate } => {
                write!(f, "hier-gauss-gamma({shape},{rate})")
            }
            PriorSpec::HierScaleIg { base, shape, scale } => {
                write!(f, "hier({base},ig({shape},{scale}))")
            }
        }
    }
}

impl FromStr for PriorSpec {
    type Err = Error;

    /// Parses `gaussian(0,1)`, `laplace(0,1)`, `cauchy(1,1)`,
    /// `hier-gauss-gamma(1,1)` and `hier(<base>,ig(a,b))`.
    fn from_str(s: &str) -> Result<Self> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let bad = || Error::InvalidArgument(format!("cannot parse prior '{s}'"));
        let (name, args) = split_call(&compact).ok_or_else(bad)?;
        let spec = match name {
            "hier" => {
                let (base, hyper) = args.split_once(',').ok_or_else(bad)?;
                let base = match base {
                    "gaussian" | "normal" => ScaleBase::Gaussian,
                    "laplace" => ScaleBase::Laplace,
                    "cauchy" => ScaleBase::Cauchy,
                    _ => return Err(bad()),
                };
                let (ig, ig_args) = split_call(hyper).ok_or_else(bad)?;
                if ig != "ig" {
                    return Err(bad());
                }
                let (shape, scale) = two_numbers(ig_args).ok_or_else(bad)?;
                PriorSpec::HierScaleIg { base, shape, scale }
            }
            _ => {
                let (a, b) = two_numbers(args).ok_or_else(bad)?;
                match name {
                    "gaussian" | "normal" => PriorSpec::Gaussian { mean: a, std: b },
                    "laplace" => PriorSpec::Laplace { loc: a, scale: b },
                    "cauchy" => PriorSpec::Cauchy { loc: a, scale: b },
                    "hier-gauss-gamma" => PriorSpec::HierGaussianGamma { shape: a, rate: b },
                    _ => return Err(bad()),
                }
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn split_call(s: &str) -> Option<(&str, &str)> {
    let open = s.find('(')?;
    let inner = s[open + 1..].strip_suffix(')')?;
    Some((&s[..open], inner))
}

fn two_numbers(s: &str) -> Option<(f64, f64)> {
    let (a, b) = s.split_once(',')?;
    Some((a.parse().ok()?, b.parse().ok()?))
}

// ---------------------------------------------------------------------------
// Numerical marginalization over the scale hyperparameter.

const GL_NODES: usize = 64;
/// Integrand mass below `peak - LOG_CUTOFF` is dropped.
const LOG_CUTOFF: f64 = 42.0;

fn gauss_legendre() -> &'static [(f64, f64); GL_NODES] {
    static TABLE: OnceLock<[(f64, f64); GL_NODES]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = GL_NODES;
        let mut table = [(0.0, 0.0); GL_NODES];
        for i in 0..n / 2 {
            // Newton iteration on P_n from the Chebyshev-like initial guess.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let k = k as f64;
                    let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            table[i] = (-x, w);
            table[n - 1 - i] = (x, w);
        }
        table
    })
}

/// Log of the integrand over `t = ln s` (scale or variance), together with
/// its derivative in `w` and its first two derivatives in `t`.
struct Integrand {
    base: ScaleBase,
    shape: f64,
    scale: f64,
    w: f64,
    log_const: f64,
}

impl Integrand {
    fn new(base: ScaleBase, shape: f64, scale: f64, w: f64) -> Self {
        let base_const = match base {
            ScaleBase::Gaussian => -0.5 * LN_2PI,
            ScaleBase::Laplace => -std::f64::consts::LN_2,
            ScaleBase::Cauchy => -PI.ln(),
        };
        Integrand {
            base,
            shape,
            scale,
            w,
            log_const: shape * scale.ln() - ln_gamma(shape) + base_const,
        }
    }

    fn log_value(&self, t: f64) -> f64 {
        let e = (-t).exp();
        let ig = -self.shape * t - self.scale * e;
        let w = self.w;
        let base = match self.base {
            ScaleBase::Gaussian => -0.5 * t - 0.5 * w * w * e,
            ScaleBase::Laplace => -t - w.abs() * e,
            ScaleBase::Cauchy => -t - softplus(cauchy_log_ratio(w, t)),
        };
        self.log_const + ig + base
    }

    /// d/dw of `log_value`.
    fn dlog_dw(&self, t: f64) -> f64 {
        let e = (-t).exp();
        let w = self.w;
        match self.base {
            ScaleBase::Gaussian => -w * e,
            ScaleBase::Laplace => {
                if w > 0.0 {
                    -e
                } else if w < 0.0 {
                    e
                } else {
                    0.0
                }
            }
            ScaleBase::Cauchy => {
                if w == 0.0 {
                    0.0
                } else {
                    -2.0 / w * sigmoid(cauchy_log_ratio(w, t))
                }
            }
        }
    }

    fn dlog_dt(&self, t: f64) -> f64 {
        let e = (-t).exp();
        let w = self.w;
        let base = match self.base {
            ScaleBase::Gaussian => -0.5 + 0.5 * w * w * e,
            ScaleBase::Laplace => -1.0 + w.abs() * e,
            ScaleBase::Cauchy => -1.0 + 2.0 * sigmoid(cauchy_log_ratio(w, t)),
        };
        -self.shape + self.scale * e + base
    }

    fn d2log_dt2(&self, t: f64) -> f64 {
        let e = (-t).exp();
        let w = self.w;
        let base = match self.base {
            ScaleBase::Gaussian => -0.5 * w * w * e,
            ScaleBase::Laplace => -w.abs() * e,
            ScaleBase::Cauchy => {
                let p = sigmoid(cauchy_log_ratio(w, t));
                -4.0 * p * (1.0 - p)
            }
        };
        -self.scale * e + base
    }

    /// The log-integrand is concave in `t`; find its maximizer by bisection
    /// on the derivative.
    fn mode(&self) -> f64 {
        let mut lo = (self.scale / (self.shape + 2.0)).ln();
        let mut hi = lo;
        let mut step = 1.0;
        while self.dlog_dt(lo) < 0.0 {
            lo -= step;
            step *= 2.0;
        }
        step = 1.0;
        while self.dlog_dt(hi) > 0.0 {
            hi += step;
            step *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.dlog_dt(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// `ln(w² / s²)` at `s = e^t`.
fn cauchy_log_ratio(w: f64, t: f64) -> f64 {
    2.0 * (w.abs().ln() - t)
}

/// Log-integral and its `w`-derivative via composite 64-node Gauss-Legendre
/// on the log-scale axis, bracketing the integrand around its mode.
fn log_marginal_with_grad(base: ScaleBase, shape: f64, scale: f64, w: f64) -> Result<(f64, f64)> {
    if !(shape > 0.0 && scale > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "Inverse-Gamma parameters must be positive, got ({shape}, {scale})"
        )));
    }
    if !w.is_finite() {
        return Err(Error::Numeric(format!("non-finite weight {w}")));
    }
    let f = Integrand::new(base, shape, scale, w);
    let mode = f.mode();
    let peak = f.log_value(mode);
    let width = 1.0 / (-f.d2log_dt2(mode)).max(1e-12).sqrt();

    let find_edge = |dir: f64| {
        let mut step = width;
        let mut t = mode + dir * step;
        while peak - f.log_value(t) < LOG_CUTOFF {
            step *= 1.5;
            t += dir * step;
        }
        t
    };
    let lo = find_edge(-1.0);
    let hi = find_edge(1.0);

    let panel_len = 6.0 * width;
    let panels = (((hi - lo) / panel_len).ceil() as usize).clamp(1, 48);
    let h = (hi - lo) / panels as f64;
    let nodes = gauss_legendre();

    // log-sum-exp relative to the peak
    let mut mass = 0.0;
    let mut dmass = 0.0;
    for p in 0..panels {
        let center = lo + (p as f64 + 0.5) * h;
        for &(x, wt) in nodes.iter() {
            let t = center + 0.5 * h * x;
            let v = (f.log_value(t) - peak).exp() * wt;
            mass += v;
            dmass += v * f.dlog_dw(t);
        }
    }
    let log_value = peak + (0.5 * h * mass).ln();
    let grad = dmass / mass;
    if log_value.is_finite() && grad.is_finite() {
        Ok((log_value, grad))
    } else {
        Err(Error::Numeric(format!(
            "quadrature for {base} base at w={w} is not finite"
        )))
    }
}

/// `log ∫ p(w | s) InverseGamma(s | shape, scale) ds` by quadrature, where `s`
/// is the variance for the Gaussian base and the scale otherwise.
pub fn log_marginal_numeric(base: ScaleBase, shape: f64, scale: f64, w: f64) -> Result<f64> {
    log_marginal_with_grad(base, shape, scale, w).map(|(v, _)| v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::finite_diff_check;
    use approx::assert_abs_diff_eq;
    use hbdl_oracles::quad::adaptive_simpson;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let nodes = gauss_legendre();
        let total: f64 = nodes.iter().map(|(_, w)| w).sum();
        assert_abs_diff_eq!(total, 2.0, epsilon = 1e-14);
        // ∫_{-1}^{1} x^126 dx = 2 / 127
        let v: f64 = nodes.iter().map(|(x, w)| w * x.powi(126)).sum();
        assert_abs_diff_eq!(v, 2.0 / 127.0, epsilon = 1e-14);
    }

    #[test]
    fn log_prior_examples() {
        let single = Tensor::scalar(0.0);
        let g = PriorSpec::Gaussian { mean: 0.0, std: 1.0 };
        assert_abs_diff_eq!(g.log_prior(&single).unwrap(), -0.918_938_533_204_672_7, epsilon = 1e-12);
        let l = PriorSpec::Laplace { loc: 0.0, scale: 1.0 };
        assert_abs_diff_eq!(l.log_prior(&single).unwrap(), -std::f64::consts::LN_2, epsilon = 1e-12);
        let c = PriorSpec::Cauchy { loc: 1.0, scale: 1.0 };
        assert_abs_diff_eq!(
            c.log_prior(&Tensor::scalar(1.0)).unwrap(),
            -1.144_729_885_849_400_2,
            epsilon = 1e-12
        );
    }

    #[test]
    fn marginalize_gamma_examples() {
        assert_eq!(
            marginalize_gamma(1.0, 1.0).unwrap(),
            StudentT { loc: 0.0, precision: 1.0, dof: 2.0 }
        );
        assert_eq!(
            marginalize_gamma(2.0, 4.0).unwrap(),
            StudentT { loc: 0.0, precision: 0.5, dof: 4.0 }
        );
        assert!(marginalize_gamma(0.0, 1.0).is_err());
        assert!(marginalize_gamma(1.0, -2.0).is_err());
        let t = marginalize_gamma(1.0, 1.0).unwrap();
        assert_abs_diff_eq!(t.pdf(0.0), 1.0 / (2.0 * 2f64.sqrt()), epsilon = 1e-14);
    }

    /// ∫ N(w | 0, 1/τ) Gamma(τ | a, b) dτ with τ = u / (1 - u).
    fn gaussian_gamma_oracle(w: f64, a: f64, b: f64) -> f64 {
        let integrand = |u: f64| {
            if u <= 0.0 || u >= 1.0 {
                return 0.0;
            }
            let tau = u / (1.0 - u);
            let jac = 1.0 / ((1.0 - u) * (1.0 - u));
            let normal = (tau / (2.0 * PI)).sqrt() * (-0.5 * tau * w * w).exp();
            let gamma = (a * b.ln() - ln_gamma(a) + (a - 1.0) * tau.ln() - b * tau).exp();
            normal * gamma * jac
        };
        adaptive_simpson(integrand, 0.0, 1.0, 1e-13)
    }

    #[test]
    fn student_t_matches_gaussian_gamma_integral() {
        let t = marginalize_gamma(1.0, 1.0).unwrap();
        assert_abs_diff_eq!(t.pdf(0.0), gaussian_gamma_oracle(0.0, 1.0, 1.0), epsilon = 1e-8);
        for &a in &[0.5, 1.0, 2.0] {
            for &b in &[0.5, 1.0, 2.0] {
                let t = marginalize_gamma(a, b).unwrap();
                for w in -3..=3 {
                    let w = w as f64;
                    let oracle = gaussian_gamma_oracle(w, a, b);
                    assert!(
                        (t.pdf(w) - oracle).abs() <= 1e-6,
                        "a={a} b={b} w={w}: {} vs {oracle}",
                        t.pdf(w)
                    );
                }
            }
        }
    }

    /// ∫ p(w | s) IG(s | a, b) ds by adaptive Simpson with s = u / (1 - u).
    fn scale_mixture_oracle(base: ScaleBase, a: f64, b: f64, w: f64) -> f64 {
        let integrand = |u: f64| {
            if u <= 0.0 || u >= 1.0 {
                return 0.0;
            }
            let s = u / (1.0 - u);
            let jac = 1.0 / ((1.0 - u) * (1.0 - u));
            let ig = (a * b.ln() - ln_gamma(a) - (a + 1.0) * s.ln() - b / s).exp();
            let p = match base {
                ScaleBase::Gaussian => (-0.5 * w * w / s).exp() / (2.0 * PI * s).sqrt(),
                ScaleBase::Laplace => (-w.abs() / s).exp() / (2.0 * s),
                ScaleBase::Cauchy => 1.0 / (PI * s * (1.0 + (w / s).powi(2))),
            };
            p * ig * jac
        };
        adaptive_simpson(integrand, 0.0, 1.0, 1e-13)
    }

    #[test]
    fn numeric_marginal_matches_closed_forms() {
        for &a in &[0.5, 1.0, 2.5, 4.0] {
            for &b in &[0.5, 1.0, 2.0, 4.0] {
                let t = marginalize_gamma(a, b).unwrap();
                for i in -20..=20 {
                    let w = i as f64 * 0.5;
                    let g = log_marginal_numeric(ScaleBase::Gaussian, a, b, w).unwrap();
                    assert!((g.exp() - t.pdf(w)).abs() <= 1e-10, "gauss a={a} b={b} w={w}");
                    let l = log_marginal_numeric(ScaleBase::Laplace, a, b, w).unwrap();
                    let closed = PriorSpec::HierScaleIg {
                        base: ScaleBase::Laplace,
                        shape: a,
                        scale: b,
                    }
                    .log_density(w)
                    .unwrap();
                    assert!((l.exp() - closed.exp()).abs() <= 1e-10, "laplace a={a} b={b} w={w}");
                    assert!((l - closed).abs() <= 1e-8);
                }
            }
        }
    }

    #[test]
    fn numeric_marginal_matches_adaptive_oracle() {
        for base in [ScaleBase::Gaussian, ScaleBase::Laplace, ScaleBase::Cauchy] {
            for &a in &[0.5, 1.0, 4.0] {
                for &b in &[0.5, 1.0, 4.0] {
                    for &w in &[0.0, 0.3, -1.0, 2.5, -6.0, 10.0] {
                        let q = log_marginal_numeric(base, a, b, w).unwrap().exp();
                        let o = scale_mixture_oracle(base, a, b, w);
                        assert!(
                            (q - o).abs() <= 1e-8,
                            "{base} a={a} b={b} w={w}: {q} vs {o}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn numeric_marginal_is_symmetric() {
        for base in [ScaleBase::Gaussian, ScaleBase::Laplace, ScaleBase::Cauchy] {
            for &w in &[0.1, 0.7, 3.0, 9.5] {
                let p = log_marginal_numeric(base, 1.0, 1.0, w).unwrap();
                let m = log_marginal_numeric(base, 1.0, 1.0, -w).unwrap();
                assert_eq!(p, m);
            }
        }
        let l0 = log_marginal_numeric(ScaleBase::Laplace, 1.0, 1.0, 0.0).unwrap();
        assert!(l0.is_finite());
        // a b^a / (2 b^(a+1)) = 1/2 at a = b = 1
        assert_abs_diff_eq!(l0, 0.5f64.ln(), epsilon = 1e-10);
    }

    #[test]
    fn parse_and_display_round_trip() {
        for s in [
            "gaussian(0,1)",
            "gaussian(0,0.1)",
            "laplace(0,1)",
            "cauchy(1,1)",
            "hier-gauss-gamma(1,1)",
            "hier(gaussian,ig(1,1))",
            "hier(laplace,ig(1,1))",
            "hier(cauchy,ig(0.5,2))",
        ] {
            let p: PriorSpec = s.parse().unwrap();
            assert_eq!(p.to_string(), s);
        }
        assert_eq!(
            " normal( 0 , 2 ) ".parse::<PriorSpec>().unwrap(),
            PriorSpec::Gaussian { mean: 0.0, std: 2.0 }
        );
        for bad in ["gaussian(0,0)", "laplace(0,-1)", "foo(1,2)", "hier(gaussian,gamma(1,1))", "cauchy(1)"] {
            assert!(bad.parse::<PriorSpec>().is_err(), "{bad}");
        }
    }

    fn all_priors() -> Vec<PriorSpec> {
        vec![
            PriorSpec::Gaussian { mean: 0.3, std: 0.7 },
            PriorSpec::Laplace { loc: -0.2, scale: 1.3 },
            PriorSpec::Cauchy { loc: 1.0, scale: 1.0 },
            PriorSpec::HierGaussianGamma { shape: 1.5, rate: 0.5 },
            PriorSpec::HierScaleIg { base: ScaleBase::Gaussian, shape: 1.0, scale: 1.0 },
            PriorSpec::HierScaleIg { base: ScaleBase::Laplace, shape: 1.0, scale: 1.0 },
            PriorSpec::HierScaleIg { base: ScaleBase::Cauchy, shape: 1.0, scale: 1.0 },
        ]
    }

    #[test]
    fn tape_log_prior_matches_direct_and_differentiates() {
        let omega = Tensor::vector(vec![0.4, -1.3, 2.2, -0.05, 0.9]);
        for prior in all_priors() {
            let mut tape = Tape::new();
            let w = tape.leaf(omega.clone());
            let lp = prior.log_prior_on_tape(&mut tape, w).unwrap();
            let direct = prior.log_prior(&omega).unwrap();
            assert!((tape.value(lp).item().unwrap() - direct).abs() <= 1e-10 * direct.abs().max(1.0));
            let err = finite_diff_check(|t, w| prior.log_prior_on_tape(t, w), &omega, 1e-5).unwrap();
            assert!(err <= 1e-6, "{prior}: {err}");
        }
    }

    #[test]
    fn densities_integrate_to_one() {
        for prior in all_priors() {
            let total = match prior {
                PriorSpec::Gaussian { .. } | PriorSpec::Laplace { .. } => {
                    adaptive_simpson(|w| prior.log_density(w).unwrap().exp(), -50.0, 50.0, 1e-10)
                }
                _ => {
                    // polynomial tails: integrate over θ with w = tan θ
                    let edge = std::f64::consts::FRAC_PI_2 - 1e-9;
                    adaptive_simpson(
                        |th: f64| {
                            let w = th.tan();
                            prior.log_density(w).unwrap().exp() * (1.0 + w * w)
                        },
                        -edge,
                        edge,
                        1e-9,
                    )
                }
            };
            assert!((total - 1.0).abs() <= 1e-4, "{prior}: {total}");
        }
    }

    #[test]
    fn direct_cauchy_integrates_over_wide_window_with_tail_correction() {
        let prior = PriorSpec::Cauchy { loc: 1.0, scale: 1.0 };
        let limit = 1e4;
        // split at the location so the peak is resolved
        let body = adaptive_simpson(|w| prior.log_density(w).unwrap().exp(), -limit, 1.0, 1e-10)
            + adaptive_simpson(|w| prior.log_density(w).unwrap().exp(), 1.0, limit, 1e-10);
        let tails = (0.5 - ((limit - 1.0).atan()) / PI) + (0.5 - ((limit + 1.0).atan()) / PI);
        assert!((body + tails - 1.0).abs() <= 1e-4, "{}", body + tails);
    }

    #[test]
    fn heavier_tails_ordering() {
        let w = 10.0;
        let cauchy = PriorSpec::Cauchy { loc: 0.0, scale: 1.0 }.log_density(w).unwrap();
        let student = marginalize_gamma(1.0, 1.0).unwrap().log_pdf(w);
        let laplace = PriorSpec::Laplace { loc: 0.0, scale: 1.0 }.log_density(w).unwrap();
        let gauss = PriorSpec::Gaussian { mean: 0.0, std: 1.0 }.log_density(w).unwrap();
        assert!(cauchy > student && student > laplace && laplace > gauss);
    }

    #[test]
    fn log_prior_is_exchangeable() {
        let a = Tensor::vector(vec![0.1, -2.0, 3.3, 0.0, 1.7]);
        let b = Tensor::vector(vec![3.3, 0.0, 0.1, 1.7, -2.0]);
        for prior in all_priors() {
            assert_eq!(
                prior.log_prior(&a).unwrap().to_bits(),
                prior.log_prior(&b).unwrap().to_bits()
            );
        }
    }
}
