//! Model fits on top of [`damped_least_squares`].
//!
//! Time-like parameters are fitted in nanoseconds to keep the normal
//! equations well scaled, then converted back to picoseconds and rad/s.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::histogram::{G2Point, Histogram};
use super::lsq::{damped_least_squares, DataPoint, LsqFit, LsqOptions};
use crate::error::{invalid, Error, Result};
use crate::qfc::{conversion_rate_unchecked, ConversionCurve};
use crate::source::antibunching_curve;
use crate::stream::Picos;

/// Default lifetime used to seed the decay rate of g² fits.
pub const DEFAULT_LIFETIME_NS: f64 = 8.12;

const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

/// Reported fit: parameters with standard errors from the covariance at the
/// optimum. Only produced for converged fits.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<P> {
    pub params: P,
    pub std_errors: P,
    pub rss: f64,
    pub converged: bool,
    pub iterations: usize,
    pub n_points: usize,
}

/// Parameter sets that can be listed by name for reports.
pub trait NamedParams {
    fn named(&self) -> Vec<(&'static str, f64)>;
}

/// JSON fit report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: String,
    pub params: BTreeMap<String, f64>,
    pub std_errors: BTreeMap<String, f64>,
    pub rss: f64,
    pub converged: bool,
    pub iterations: usize,
    pub n_points: usize,
}

impl<P: NamedParams> FitResult<P> {
    pub fn report(&self, model: &str) -> FitReport {
        let to_map = |p: &P| {
            p.named()
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect()
        };
        FitReport {
            model: model.to_string(),
            params: to_map(&self.params),
            std_errors: to_map(&self.std_errors),
            rss: self.rss,
            converged: self.converged,
            iterations: self.iterations,
            n_points: self.n_points,
        }
    }
}

fn wrap<P>(fit: &LsqFit, params: P, std_errors: P) -> FitResult<P> {
    FitResult {
        params,
        std_errors,
        rss: fit.rss,
        converged: fit.converged,
        iterations: fit.iterations,
        n_points: fit.n_points,
    }
}

fn poisson_sigma(count: u64) -> f64 {
    (count.max(1) as f64).sqrt()
}

// ---------------------------------------------------------------- g2 ----

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2FitParams {
    /// Depth of the coincidence dip.
    pub g0: f64,
    /// Decay rate (1/s).
    pub gamma: f64,
    /// Oscillation frequency (rad/s); zero when overdamped.
    pub omega: f64,
    /// Signed `Ω²` (rad²/s²); negative when overdamped.
    pub omega_squared: f64,
    /// Time offset of the dip (ps).
    pub tau0_ps: f64,
}

impl G2FitParams {
    pub fn new(g0: f64, gamma: f64, omega: f64, tau0_ps: f64) -> Self {
        G2FitParams {
            g0,
            gamma,
            omega,
            omega_squared: omega * omega,
            tau0_ps,
        }
    }

    /// Model value at delay `tau_ps`.
    pub fn eval(&self, tau_ps: f64) -> f64 {
        antibunching_curve(
            self.g0,
            self.gamma,
            self.omega_squared,
            (tau_ps - self.tau0_ps) * 1e-12,
        )
    }

    pub fn g2_zero(&self) -> f64 {
        1.0 - self.g0
    }
}

impl NamedParams for G2FitParams {
    fn named(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("g0", self.g0),
            ("gamma_per_s", self.gamma),
            ("omega_rad_per_s", self.omega),
            ("omega_squared_rad2_per_s2", self.omega_squared),
            ("tau0_ps", self.tau0_ps),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct G2Fit {
    pub fit: FitResult<G2FitParams>,
    /// Fitted `g²(0) = 1 − g0`.
    pub g2_zero: f64,
    pub g2_zero_error: f64,
    /// Smallest normalized bin and its error.
    pub raw_minimum: f64,
    pub raw_minimum_error: f64,
}

/// Seeds a g² fit: γ from the default lifetime, τ₀ at the lowest bin, Ω from
/// the distance between the dip and the first maximum of the smoothed curve.
pub fn initial_guess_g2(curve: &[G2Point]) -> Result<G2FitParams> {
    if curve.len() < 5 {
        return Err(Error::InsufficientData("g2 curve needs at least 5 bins".into()));
    }
    let gamma = 1e9 / DEFAULT_LIFETIME_NS;
    let (i_min, min) = curve
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.g2.total_cmp(&b.1.g2))
        .map(|(i, p)| (i, p.g2))
        .unwrap();
    let tau0 = curve[i_min].tau_ps;
    let smooth: Vec<f64> = (0..curve.len())
        .map(|i| {
            let lo = i.saturating_sub(2);
            let hi = (i + 3).min(curve.len());
            curve[lo..hi].iter().map(|p| p.g2).sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    let first_max = (i_min + 2..curve.len().saturating_sub(2))
        .find(|&i| smooth[i] > 1.0 && smooth[i] >= smooth[i - 1] && smooth[i] >= smooth[i + 1]);
    let omega = match first_max {
        Some(i) => std::f64::consts::PI / ((curve[i].tau_ps - tau0) * 1e-12),
        None => gamma,
    };
    Ok(G2FitParams::new((1.0 - min).clamp(0.05, 1.0), gamma, omega, tau0))
}

/// Weighted fit of the antibunching curve to normalized correlation data.
pub fn fit_g2(curve: &[G2Point], init: &G2FitParams) -> Result<G2Fit> {
    if curve.len() < 5 {
        return Err(Error::InsufficientData("g2 curve needs at least 5 bins".into()));
    }
    let data: Vec<DataPoint> = curve
        .iter()
        .map(|p| DataPoint::new(p.tau_ps * 1e-3, p.g2, p.sigma))
        .collect();
    // parameters: g0, γ (1/ns), Ω² (rad²/ns²), τ₀ (ns)
    let model = |x: f64, p: &[f64]| antibunching_curve(p[0], p[1], p[2], x - p[3]);
    let start = [
        init.g0,
        init.gamma * 1e-9,
        init.omega_squared * 1e-18,
        init.tau0_ps * 1e-3,
    ];
    let span = curve
        .iter()
        .map(|p| p.tau_ps.abs())
        .fold(0.0, f64::max)
        * 1e-3;
    let opts = LsqOptions::default().with_bounds(vec![
        (0.0, 1.2),
        (1e-6, 1e3),
        (-1e4, 1e4),
        (-span, span),
    ]);
    let fit = damped_least_squares(model, &data, &start, &opts)?;
    let p = &fit.params;
    let e = &fit.std_errors;
    let omega = p[2].max(0.0).sqrt();
    let omega_err = if omega > 0.0 { e[2] / (2.0 * omega) } else { e[2].sqrt() };
    let params = G2FitParams {
        g0: p[0],
        gamma: p[1] * 1e9,
        omega: omega * 1e9,
        omega_squared: p[2] * 1e18,
        tau0_ps: p[3] * 1e3,
    };
    let std_errors = G2FitParams {
        g0: e[0],
        gamma: e[1] * 1e9,
        omega: omega_err * 1e9,
        omega_squared: e[2] * 1e18,
        tau0_ps: e[3] * 1e3,
    };
    let raw = curve
        .iter()
        .min_by(|a, b| a.g2.total_cmp(&b.g2))
        .unwrap();
    Ok(G2Fit {
        g2_zero: params.g2_zero(),
        g2_zero_error: std_errors.g0,
        raw_minimum: raw.g2,
        raw_minimum_error: raw.sigma,
        fit: wrap(&fit, params, std_errors),
    })
}

// ---------------------------------------------------------- gaussian ----

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianFitParams {
    pub amplitude: f64,
    pub mean_ps: f64,
    pub sigma_ps: f64,
}

impl GaussianFitParams {
    pub fn fwhm_ps(&self) -> f64 {
        FWHM_PER_SIGMA * self.sigma_ps
    }

    pub fn eval(&self, t_ps: f64) -> f64 {
        self.amplitude * (-0.5 * ((t_ps - self.mean_ps) / self.sigma_ps).powi(2)).exp()
    }
}

impl NamedParams for GaussianFitParams {
    fn named(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("amplitude", self.amplitude),
            ("mean_ps", self.mean_ps),
            ("sigma_ps", self.sigma_ps),
            ("fwhm_ps", self.fwhm_ps()),
        ]
    }
}

/// Gaussian fit to the bins whose centres lie in `[range.0, range.1]`.
pub fn fit_gaussian(hist: &Histogram, range: (Picos, Picos)) -> Result<FitResult<GaussianFitParams>> {
    let (lo, hi) = range;
    if hi <= lo {
        return Err(invalid("fit_range", "upper edge must exceed lower edge"));
    }
    let bins: Vec<(f64, u64)> = (0..hist.len())
        .map(|k| (hist.bin_center(k), hist.counts[k]))
        .filter(|(c, _)| *c >= lo as f64 && *c <= hi as f64)
        .collect();
    if bins.iter().filter(|(_, c)| *c > 0).count() < 3 {
        return Err(Error::Degenerate(
            "gaussian fit needs at least three populated bins".into(),
        ));
    }
    let total: f64 = bins.iter().map(|(_, c)| *c as f64).sum();
    let mean = bins.iter().map(|(t, c)| t * *c as f64).sum::<f64>() / total;
    let var = bins
        .iter()
        .map(|(t, c)| (t - mean).powi(2) * *c as f64)
        .sum::<f64>()
        / total;
    let peak = bins.iter().map(|(_, c)| *c).max().unwrap() as f64;
    let data: Vec<DataPoint> = bins
        .iter()
        .map(|(t, c)| DataPoint::new(t * 1e-3, *c as f64, poisson_sigma(*c)))
        .collect();
    let width_ns = (hi - lo) as f64 * 1e-3;
    let start = [peak, mean * 1e-3, var.sqrt().max(0.1 * hist.bin_width as f64) * 1e-3];
    let opts = LsqOptions::default().with_bounds(vec![
        (0.0, f64::INFINITY),
        (lo as f64 * 1e-3, hi as f64 * 1e-3),
        (1e-6, 10.0 * width_ns),
    ]);
    let fit = damped_least_squares(
        |x, p| p[0] * (-0.5 * ((x - p[1]) / p[2]).powi(2)).exp(),
        &data,
        &start,
        &opts,
    )?;
    let p = &fit.params;
    let e = &fit.std_errors;
    Ok(wrap(
        &fit,
        GaussianFitParams {
            amplitude: p[0],
            mean_ps: p[1] * 1e3,
            sigma_ps: p[2] * 1e3,
        },
        GaussianFitParams {
            amplitude: e[0],
            mean_ps: e[1] * 1e3,
            sigma_ps: e[2] * 1e3,
        },
    ))
}

// ------------------------------------------------------- exponential ----

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFitParams {
    /// Counts per bin above baseline at the cut-off.
    pub amplitude: f64,
    pub decay_time_ps: f64,
    /// Counts per bin.
    pub baseline: f64,
}

impl NamedParams for DecayFitParams {
    fn named(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("amplitude", self.amplitude),
            ("decay_time_ps", self.decay_time_ps),
            ("baseline", self.baseline),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExponentialTailFit {
    pub fit: FitResult<DecayFitParams>,
    pub cutoff_ps: Picos,
    /// Fraction of all histogram counts in bins left of the cut-off.
    pub discarded_fraction: f64,
}

impl ExponentialTailFit {
    /// Model counts for the bin centred at `t_ps` (valid for `t_ps ≥ cutoff`).
    pub fn eval(&self, t_ps: f64) -> f64 {
        let p = &self.fit.params;
        p.amplitude * (-(t_ps - self.cutoff_ps as f64) / p.decay_time_ps).exp() + p.baseline
    }

    /// Fraction of a single-exponential signal starting at `onset_ps` that
    /// falls before the cut-off, `1 − exp(−(cutoff − onset)/τ)`.
    pub fn model_discarded_fraction(&self, onset_ps: f64) -> f64 {
        let lead = (self.cutoff_ps as f64 - onset_ps).max(0.0);
        1.0 - (-lead / self.fit.params.decay_time_ps).exp()
    }
}

/// Fits `A e^{−(t − cutoff)/τ} + B` to the bins starting at or after
/// `cutoff`.
pub fn fit_exponential_tail(hist: &Histogram, cutoff: Picos) -> Result<ExponentialTailFit> {
    let end = hist.bin_left(hist.len());
    if cutoff < hist.origin || cutoff >= end {
        return Err(invalid("cutoff", "must lie inside the histogram"));
    }
    let tail: Vec<(f64, u64)> = (0..hist.len())
        .filter(|&k| hist.bin_left(k) >= cutoff)
        .map(|k| (hist.bin_center(k), hist.counts[k]))
        .collect();
    if tail.len() < 5 || tail.iter().filter(|(_, c)| *c > 0).count() < 5 {
        return Err(Error::InsufficientData(
            "need at least five populated bins beyond the cut-off".into(),
        ));
    }
    let total = hist.total();
    let before: u64 = (0..hist.len())
        .filter(|&k| hist.bin_left(k) < cutoff)
        .map(|k| hist.counts[k])
        .sum();

    let cut_ns = cutoff as f64 * 1e-3;
    let data: Vec<DataPoint> = tail
        .iter()
        .map(|(t, c)| DataPoint::new(t * 1e-3 - cut_ns, *c as f64, poisson_sigma(*c)))
        .collect();
    let span_ns = data.last().unwrap().x - data[0].x;
    let start = decay_initial_guess(&data, span_ns);
    let opts = LsqOptions::default().with_bounds(vec![
        (0.0, f64::INFINITY),
        (1e-3, 1e6),
        (0.0, f64::INFINITY),
    ]);
    let fit = damped_least_squares(
        |x, p| p[0] * (-x / p[1]).exp() + p[2],
        &data,
        &start,
        &opts,
    )?;
    let p = &fit.params;
    let e = &fit.std_errors;
    if p[1] > 10.0 * span_ns || !(e[1] < p[1]) || p[0] <= e[0] {
        return Err(Error::Degenerate(
            "decay time is not constrained by the data".into(),
        ));
    }
    Ok(ExponentialTailFit {
        fit: wrap(
            &fit,
            DecayFitParams {
                amplitude: p[0],
                decay_time_ps: p[1] * 1e3,
                baseline: p[2],
            },
            DecayFitParams {
                amplitude: e[0],
                decay_time_ps: e[1] * 1e3,
                baseline: e[2],
            },
        ),
        cutoff_ps: cutoff,
        discarded_fraction: if total > 0 { before as f64 / total as f64 } else { 0.0 },
    })
}

/// Baseline from the last fifth of the tail, decay time from a log-linear
/// regression over the first half.
fn decay_initial_guess(data: &[DataPoint], span_ns: f64) -> [f64; 3] {
    let n = data.len();
    let last = &data[n - (n / 5).max(1)..];
    let baseline = (last.iter().map(|d| d.y).sum::<f64>() / last.len() as f64).max(0.0);
    let head: Vec<(f64, f64)> = data[..(n / 2).max(3)]
        .iter()
        .filter(|d| d.y - baseline > 0.0)
        .map(|d| (d.x, (d.y - baseline).ln()))
        .collect();
    let tau = if head.len() >= 2 {
        let mx = head.iter().map(|v| v.0).sum::<f64>() / head.len() as f64;
        let my = head.iter().map(|v| v.1).sum::<f64>() / head.len() as f64;
        let sxy: f64 = head.iter().map(|v| (v.0 - mx) * (v.1 - my)).sum();
        let sxx: f64 = head.iter().map(|v| (v.0 - mx).powi(2)).sum();
        let slope = sxy / sxx;
        if slope < 0.0 { -1.0 / slope } else { span_ns }
    } else {
        span_ns
    };
    let amplitude = (data[0].y - baseline).max(1.0);
    [amplitude, tau.clamp(1e-2, 10.0 * span_ns), baseline]
}

// -------------------------------------------------------- conversion ----

impl NamedParams for ConversionCurve {
    fn named(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("peak_conversion", self.peak_conversion),
            ("p_max_mw", self.p_max_mw),
        ]
    }
}

/// Fits the pump-power curve to `(pump_mw, ζ)` points with unit weights;
/// errors are scaled by the residual variance.
pub fn fit_conversion_curve(points: &[(f64, f64)]) -> Result<FitResult<ConversionCurve>> {
    if points.len() < 3 {
        return Err(Error::InsufficientData(
            "conversion fit needs at least three points".into(),
        ));
    }
    if points.iter().any(|(p, z)| !p.is_finite() || !z.is_finite() || *p < 0.0) {
        return Err(invalid("points", "pump powers must be finite and non-negative"));
    }
    if points.iter().all(|(_, z)| *z == 0.0) {
        return Err(Error::Degenerate("all conversion rates are zero".into()));
    }
    let p_top = points.iter().map(|(p, _)| *p).fold(0.0, f64::max);
    // coarse scan over P_max with η solved linearly at each candidate
    let (mut best_cost, mut start) = (f64::INFINITY, [0.5, p_top]);
    for k in 0..=400 {
        let p_max = p_top * 0.3 * (40.0f64).powf(k as f64 / 400.0);
        let shape: Vec<f64> = points
            .iter()
            .map(|(p, _)| conversion_rate_unchecked(1.0, p_max, *p))
            .collect();
        let ss: f64 = shape.iter().map(|s| s * s).sum();
        if ss == 0.0 {
            continue;
        }
        let eta = (points.iter().zip(&shape).map(|((_, z), s)| z * s).sum::<f64>() / ss).clamp(0.0, 1.0);
        let cost: f64 = points
            .iter()
            .zip(&shape)
            .map(|((_, z), s)| (z - eta * s).powi(2))
            .sum();
        if cost < best_cost {
            best_cost = cost;
            start = [eta, p_max];
        }
    }
    let data: Vec<DataPoint> = points.iter().map(|(p, z)| DataPoint::new(*p, *z, 1.0)).collect();
    let opts = LsqOptions {
        scale_covariance: true,
        ..LsqOptions::default().with_bounds(vec![(0.0, 1.0), (1e-9, f64::INFINITY)])
    };
    let fit = damped_least_squares(
        |x, p| conversion_rate_unchecked(p[0], p[1], x),
        &data,
        &start,
        &opts,
    )?;
    Ok(wrap(
        &fit,
        ConversionCurve {
            peak_conversion: fit.params[0],
            p_max_mw: fit.params[1],
        },
        ConversionCurve {
            peak_conversion: fit.std_errors[0],
            p_max_mw: fit.std_errors[1],
        },
    ))
}
