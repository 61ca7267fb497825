//! Photon sources: a driven two-level emitter under continuous drive, and a
//! pulsed-excitation schedule with backscattered-pulse contamination.

mod bloch;
mod cw;
mod pulsed;

pub use bloch::{excited_population, excited_population_curve, steady_state_population};
pub use cw::{simulate_cw_sharded, simulate_cw_stream, WaitingTimeDistribution};
pub use pulsed::{simulate_pulsed_decay, Backscatter, PulsedScheduleParams};

use serde::{Deserialize, Serialize};

use crate::error::{check_non_negative, check_positive, invalid, Result};

/// Drive and decay parameters of a two-level emitter.
///
/// All quantities are angular frequencies in rad/s; `decay_rate` is the
/// inverse excited-state lifetime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterParams {
    #[serde(rename = "rabi_frequency_rad_per_s")]
    pub rabi_frequency: f64,
    #[serde(rename = "detuning_rad_per_s")]
    pub detuning: f64,
    #[serde(rename = "decay_rate_per_s")]
    pub decay_rate: f64,
}

impl EmitterParams {
    pub fn new(rabi_frequency: f64, detuning: f64, decay_rate: f64) -> Result<Self> {
        let p = EmitterParams {
            rabi_frequency,
            detuning,
            decay_rate,
        };
        p.validate()?;
        Ok(p)
    }

    /// Parameters expressed in units of the decay rate `1 / lifetime`.
    pub fn from_lifetime(lifetime_s: f64, rabi_over_gamma: f64, detuning_over_gamma: f64) -> Result<Self> {
        check_positive("lifetime", lifetime_s)?;
        let gamma = 1.0 / lifetime_s;
        Self::new(rabi_over_gamma * gamma, detuning_over_gamma * gamma, gamma)
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("decay_rate", self.decay_rate)?;
        check_non_negative("rabi_frequency", self.rabi_frequency)?;
        if !self.detuning.is_finite() {
            return Err(invalid("detuning", "must be finite"));
        }
        Ok(())
    }

    /// Squared oscillation frequency `Ω_R² + Δ² − (γ/4)²` of the
    /// antibunching curve. Negative in the overdamped regime.
    pub fn oscillation_frequency_squared(&self) -> f64 {
        let q = self.decay_rate / 4.0;
        self.rabi_frequency.powi(2) + self.detuning.powi(2) - q * q
    }

    /// Steady-state photon emission rate `γ ρ_ee(∞)` in Hz.
    pub fn emission_rate(&self) -> f64 {
        self.decay_rate * steady_state_population(self)
    }
}

/// Antibunching dip `1 − g0 e^{−3γτ/4}[cos Ωτ + (3γ/4Ω) sin Ωτ]` in terms of
/// the signed `omega_sq = Ω²`.
///
/// For `omega_sq < 0` the trigonometric functions continue to their
/// hyperbolic counterparts, so the curve is real and continuous through
/// `Ω = 0`. `tau` is taken by absolute value.
pub fn antibunching_curve(g0: f64, gamma: f64, omega_sq: f64, tau: f64) -> f64 {
    let tau = tau.abs();
    let damping = 0.75 * gamma;
    let (even, odd_over_omega) = if omega_sq >= 0.0 {
        let w = omega_sq.sqrt();
        ((w * tau).cos(), tau * sinc(w * tau))
    } else {
        let k = (-omega_sq).sqrt();
        ((k * tau).cosh(), tau * sinhc(k * tau))
    };
    1.0 - g0 * (-damping * tau).exp() * (even + damping * odd_over_omega)
}

/// Ideal-source reference curve with `g0 = 1`; `tau` in seconds.
pub fn g2_theory(params: &EmitterParams, tau: f64) -> Result<f64> {
    params.validate()?;
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(invalid("tau", format!("{tau} must be finite and non-negative")));
    }
    Ok(antibunching_curve(
        1.0,
        params.decay_rate,
        params.oscillation_frequency_squared(),
        tau,
    ))
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

fn sinhc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 + x * x / 6.0
    } else {
        x.sinh() / x
    }
}
