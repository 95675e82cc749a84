//! Straight-line reference computations for the test suites.
//!
//! Nothing here shares code with `hbdl-core`; each routine is written the
//! obvious way so it can serve as an independent check.

pub mod quad {
    /// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
    pub fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
            (b - a) / 6.0 * (fa + 4.0 * fm + fb)
        }
        #[allow(clippy::too_many_arguments)]
        fn recurse(
            f: &dyn Fn(f64) -> f64,
            a: f64,
            b: f64,
            fa: f64,
            fm: f64,
            fb: f64,
            whole: f64,
            tol: f64,
            depth: u32,
        ) -> f64 {
            let m = 0.5 * (a + b);
            let lm = 0.5 * (a + m);
            let rm = 0.5 * (m + b);
            let flm = f(lm);
            let frm = f(rm);
            let left = simpson(fa, flm, fm, a, m);
            let right = simpson(fm, frm, fb, m, b);
            let delta = left + right - whole;
            if depth == 0 || delta.abs() <= 15.0 * tol {
                left + right + delta / 15.0
            } else {
                recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                    + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
            }
        }
        // Pre-split so narrow features are not missed by the first estimate.
        let pieces = 64;
        let h = (b - a) / pieces as f64;
        (0..pieces)
            .map(|i| {
                let lo = a + i as f64 * h;
                let hi = lo + h;
                let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
                let whole = simpson(fa, fm, fb, lo, hi);
                recurse(&f, lo, hi, fa, fm, fb, whole, tol / pieces as f64, 40)
            })
            .sum()
    }
}

pub mod stats {
    pub fn mean(xs: &[f64]) -> f64 {
        xs.iter().sum::<f64>() / xs.len() as f64
    }

    /// Unbiased sample variance.
    pub fn variance(xs: &[f64]) -> f64 {
        let m = mean(xs);
        xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
    }

    pub fn std_error(xs: &[f64]) -> f64 {
        (variance(xs) / xs.len() as f64).sqrt()
    }

    /// Covariance with 1/k normalization of k row-vectors.
    pub fn biased_covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let k = rows.len() as f64;
        let d = rows[0].len();
        let mut mu = vec![0.0; d];
        for r in rows {
            for j in 0..d {
                mu[j] += r[j];
            }
        }
        for m in mu.iter_mut() {
            *m /= k;
        }
        let mut cov = vec![vec![0.0; d]; d];
        for r in rows {
            for i in 0..d {
                for j in 0..d {
                    cov[i][j] += (r[i] - mu[i]) * (r[j] - mu[j]);
                }
            }
        }
        for row in cov.iter_mut() {
            for v in row.iter_mut() {
                *v /= k;
            }
        }
        cov
    }

    pub fn standard_normal_cdf(x: f64) -> f64 {
        0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
    }

    /// Kolmogorov-Smirnov statistic of `xs` against N(0, 1).
    pub fn ks_standard_normal(xs: &[f64]) -> f64 {
        let mut sorted = xs.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        sorted
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let c = standard_normal_cdf(x);
                (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
            })
            .fold(0.0, f64::max)
    }

    /// Two-pass R².
    pub fn r2(y: &[f64], yhat: &[f64]) -> f64 {
        let m = mean(y);
        let ss_res: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
        let ss_tot: f64 = y.iter().map(|a| (a - m) * (a - m)).sum();
        1.0 - ss_res / ss_tot
    }

    pub fn rmse(y: &[f64], yhat: &[f64]) -> f64 {
        let ss: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
        (ss / y.len() as f64).sqrt()
    }
}

pub mod linalg {
    /// Lower Cholesky factor of a symmetric positive definite matrix.
    pub fn cholesky(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = a.len();
        let mut l = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = a[i][j];
                for k in 0..j {
                    s -= l[i][k] * l[j][k];
                }
                if i == j {
                    assert!(s > 0.0, "matrix is not positive definite");
                    l[i][j] = s.sqrt();
                } else {
                    l[i][j] = s / l[j][j];
                }
            }
        }
        l
    }

    /// log N(y | 0, cov) through a Cholesky factorization.
    pub fn gaussian_log_density(y: &[f64], cov: &[Vec<f64>]) -> f64 {
        let n = y.len();
        let l = cholesky(cov);
        // forward solve L z = y
        let mut z = vec![0.0; n];
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l[i][k] * z[k];
            }
            z[i] = s / l[i][i];
        }
        let log_det: f64 = (0..n).map(|i| 2.0 * l[i][i].ln()).sum();
        let quad: f64 = z.iter().map(|v| v * v).sum();
        -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + quad)
    }

    /// Log evidence of `y = Φ θ + ε`, `θ ~ N(0, s² I)`, `ε ~ N(0, τ⁻¹ I)`,
    /// computed as the marginal Gaussian `N(y | 0, τ⁻¹ I + s² Φ Φᵀ)`.
    pub fn linear_gaussian_log_evidence(phi: &[Vec<f64>], y: &[f64], prior_std: f64, tau: f64) -> f64 {
        let n = y.len();
        let mut cov = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                let dot: f64 = phi[i].iter().zip(&phi[j]).map(|(a, b)| a * b).sum();
                cov[i][j] = prior_std * prior_std * dot + if i == j { 1.0 / tau } else { 0.0 };
            }
        }
        gaussian_log_density(y, &cov)
    }
}

pub mod adam {
    /// Literal transcription of the bias-corrected Adam recursion. Returns the
    /// sequence of parameter deltas for the gradient sequence `grads`.
    pub fn reference_deltas(
        grads: &[Vec<f64>],
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    ) -> Vec<Vec<f64>> {
        let d = grads[0].len();
        let mut m = vec![0.0; d];
        let mut v = vec![0.0; d];
        let mut out = Vec::new();
        for (step, g) in grads.iter().enumerate() {
            let t = (step + 1) as i32;
            let mut delta = vec![0.0; d];
            for i in 0..d {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / (1.0 - beta1.powi(t));
                let v_hat = v[i] / (1.0 - beta2.powi(t));
                delta[i] = -lr * m_hat / (v_hat.sqrt() + eps);
            }
            out.push(delta);
        }
        out
    }
}
