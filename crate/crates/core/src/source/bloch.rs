//! Optical Bloch equations of the driven two-level atom.
//!
//! State is the real Bloch vector `(u, v, w)` with `w = ρ_ee − ρ_gg`:
//!
//! ```text
//! du/dt = −(γ/2) u + Δ v
//! dv/dt = −Δ u − (γ/2) v − Ω_R w
//! dw/dt =  Ω_R v − γ (w + 1)
//! ```
//!
//! integrated with a fixed-step classical Runge-Kutta scheme.

use super::EmitterParams;
use crate::error::{invalid, Result};

type Bloch = [f64; 3];

fn derivative(p: &EmitterParams, s: &Bloch) -> Bloch {
    let half = 0.5 * p.decay_rate;
    [
        -half * s[0] + p.detuning * s[1],
        -p.detuning * s[0] - half * s[1] - p.rabi_frequency * s[2],
        p.rabi_frequency * s[1] - p.decay_rate * (s[2] + 1.0),
    ]
}

fn rk4_step(p: &EmitterParams, s: &Bloch, h: f64) -> Bloch {
    let add = |a: &Bloch, b: &Bloch, k: f64| [a[0] + k * b[0], a[1] + k * b[1], a[2] + k * b[2]];
    let k1 = derivative(p, s);
    let k2 = derivative(p, &add(s, &k1, 0.5 * h));
    let k3 = derivative(p, &add(s, &k2, 0.5 * h));
    let k4 = derivative(p, &add(s, &k3, h));
    [
        s[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        s[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        s[2] + h / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
    ]
}

/// Largest integration step: a hundredth of the fastest time scale.
pub(crate) fn max_step(p: &EmitterParams) -> f64 {
    let fastest = p
        .rabi_frequency
        .max(p.detuning.abs())
        .max(p.decay_rate);
    (0.01 / p.decay_rate).min(0.01 * std::f64::consts::TAU / fastest)
}

const GROUND: Bloch = [0.0, 0.0, -1.0];

fn population(s: &Bloch) -> f64 {
    (0.5 * (1.0 + s[2])).clamp(0.0, 1.0)
}

/// Excited-state population at time `t` (seconds) after starting in the
/// ground state.
pub fn excited_population(params: &EmitterParams, t: f64) -> Result<f64> {
    Ok(excited_population_curve(params, &[t])?[0])
}

/// Excited-state population at each of `times` (seconds, ascending).
pub fn excited_population_curve(params: &EmitterParams, times: &[f64]) -> Result<Vec<f64>> {
    params.validate()?;
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(invalid("t", "times must be finite and non-negative"));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("t", "times must be ascending"));
    }
    let h_max = max_step(params);
    let mut state = GROUND;
    let mut now = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let span = t - now;
        if span > 0.0 {
            let n = (span / h_max).ceil().max(1.0) as usize;
            let h = span / n as f64;
            for _ in 0..n {
                state = rk4_step(params, &state, h);
            }
            now = t;
        }
        out.push(population(&state));
    }
    Ok(out)
}

/// Closed-form long-time limit `(Ω_R²/4) / (Δ² + γ²/4 + Ω_R²/2)`.
pub fn steady_state_population(params: &EmitterParams) -> f64 {
    let r2 = params.rabi_frequency.powi(2);
    0.25 * r2 / (params.detuning.powi(2) + 0.25 * params.decay_rate.powi(2) + 0.5 * r2)
}
