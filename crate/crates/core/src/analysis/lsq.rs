//! Damped (Levenberg-Marquardt) weighted least squares.
//!
//! Minimizes `½ Σ ((f(x_i; p) − y_i) / σ_i)²`. Each iteration solves the
//! Marquardt-scaled normal equations `(JᵀJ + λ diag JᵀJ) δ = −Jᵀr` with a
//! central-difference Jacobian. The damping starts at zero (a plain
//! Gauss-Newton step), grows tenfold on every rejected step and shrinks
//! tenfold on every accepted one. Parameters can be boxed; trial points are
//! clamped into the box.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataPoint {
    pub x: f64,
    pub y: f64,
    pub sigma: f64,
}

impl DataPoint {
    pub fn new(x: f64, y: f64, sigma: f64) -> Self {
        DataPoint { x, y, sigma }
    }
}

#[derive(Debug, Clone)]
pub struct LsqOptions {
    pub max_iterations: usize,
    /// Relative cost-change tolerance.
    pub ftol: f64,
    /// Relative step-norm tolerance.
    pub xtol: f64,
    /// Relative finite-difference step.
    pub fd_step: f64,
    /// Per-parameter `(lower, upper)`; empty for an unbounded problem.
    pub bounds: Vec<(f64, f64)>,
    /// Scale the covariance by the reduced chi-square. Use this when the
    /// `σ_i` are unit weights rather than real uncertainties.
    pub scale_covariance: bool,
}

impl Default for LsqOptions {
    fn default() -> Self {
        LsqOptions {
            max_iterations: 200,
            ftol: 1e-10,
            xtol: 1e-12,
            fd_step: 1e-6,
            bounds: Vec::new(),
            scale_covariance: false,
        }
    }
}

impl LsqOptions {
    pub fn with_bounds(mut self, bounds: Vec<(f64, f64)>) -> Self {
        self.bounds = bounds;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsqFit {
    pub params: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub covariance: DMatrix<f64>,
    /// Weighted residual sum of squares (chi-square).
    pub rss: f64,
    pub converged: bool,
    pub iterations: usize,
    pub n_points: usize,
}

struct Problem<'a, F> {
    model: F,
    data: &'a [DataPoint],
    opts: &'a LsqOptions,
}

impl<F: Fn(f64, &[f64]) -> f64> Problem<'_, F> {
    fn residuals(&self, p: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.data.len(),
            self.data.iter().map(|d| ((self.model)(d.x, p) - d.y) / d.sigma),
        )
    }

    fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(self.data.len(), p.len());
        let mut probe = p.to_vec();
        for j in 0..p.len() {
            let h = self.opts.fd_step * p[j].abs().max(1.0);
            probe[j] = p[j] + h;
            let up = self.residuals(&probe);
            probe[j] = p[j] - h;
            let down = self.residuals(&probe);
            probe[j] = p[j];
            jac.set_column(j, &((up - down) / (2.0 * h)));
        }
        jac
    }

    fn clamp(&self, p: &mut [f64]) {
        for (v, (lo, hi)) in p.iter_mut().zip(&self.opts.bounds) {
            *v = v.clamp(*lo, *hi);
        }
    }
}

fn cost(r: &DVector<f64>) -> f64 {
    0.5 * r.norm_squared()
}

/// Fits `model(x, params)` to `data` starting from `init`.
pub fn damped_least_squares<F>(model: F, data: &[DataPoint], init: &[f64], opts: &LsqOptions) -> Result<LsqFit>
where
    F: Fn(f64, &[f64]) -> f64,
{
    let m = init.len();
    if m == 0 {
        return Err(invalid("init", "no parameters"));
    }
    if data.len() < m {
        return Err(Error::InsufficientData(format!(
            "{} points for {m} parameters",
            data.len()
        )));
    }
    if data.iter().any(|d| !(d.sigma > 0.0) || !d.x.is_finite() || !d.y.is_finite()) {
        return Err(invalid("data", "points must be finite with positive sigma"));
    }
    if !opts.bounds.is_empty() && opts.bounds.len() != m {
        return Err(invalid("bounds", "one (lower, upper) pair per parameter"));
    }
    let problem = Problem { model, data, opts };
    let mut p = init.to_vec();
    problem.clamp(&mut p);
    let mut r = problem.residuals(&p);
    let mut current = cost(&r);
    if !current.is_finite() {
        return Err(invalid("init", "model is not finite at the initial parameters"));
    }

    // residuals at round-off level relative to the starting point
    let exact_floor = f64::EPSILON * f64::EPSILON * current;
    let mut lambda = 0.0f64;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iterations && !converged {
        iterations += 1;
        let jac = problem.jacobian(&p);
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        if jtj.diagonal().iter().any(|d| *d == 0.0 || !d.is_finite()) {
            return Err(Error::SingularMatrix);
        }
        loop {
            let mut damped = jtj.clone();
            for j in 0..m {
                damped[(j, j)] += lambda * jtj[(j, j)];
            }
            let Some(chol) = damped.cholesky() else {
                lambda = (lambda * 10.0).max(1e-3);
                continue;
            };
            let step = chol.solve(&(-&grad));
            let mut trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            problem.clamp(&mut trial);
            let moved: f64 = trial
                .iter()
                .zip(&p)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            let scale = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            let r_trial = problem.residuals(&trial);
            let c_trial = cost(&r_trial);
            if c_trial.is_finite() && c_trial < current {
                let reduction = current - c_trial;
                converged = reduction <= opts.ftol * current
                    || moved <= opts.xtol * (scale + opts.xtol)
                    || c_trial <= exact_floor;
                p = trial;
                r = r_trial;
                current = c_trial;
                lambda = if lambda < 1e-11 { 0.0 } else { lambda / 10.0 };
                break;
            }
            if moved <= opts.xtol * (scale + opts.xtol) || lambda > 1e20 {
                // no downhill step left: stationary to working precision
                converged = true;
                break;
            }
            lambda = (lambda * 10.0).max(1e-3);
        }
    }
    if !converged {
        return Err(Error::NonConvergence { iterations });
    }

    let jac = problem.jacobian(&p);
    let jtj = jac.transpose() * &jac;
    let mut covariance = jtj.try_inverse().ok_or(Error::SingularMatrix)?;
    let rss = 2.0 * current;
    if opts.scale_covariance && data.len() > m {
        covariance *= rss / (data.len() - m) as f64;
    }
    let std_errors: Vec<f64> = (0..m).map(|j| covariance[(j, j)].max(0.0).sqrt()).collect();
    if std_errors.iter().any(|e| !e.is_finite()) {
        return Err(Error::SingularMatrix);
    }
    Ok(LsqFit {
        params: p,
        std_errors,
        covariance,
        rss,
        converged,
        iterations,
        n_points: data.len(),
    })
}
