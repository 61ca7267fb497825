//! Difference-frequency conversion stages and the efficiency budget of a
//! conversion chain.

use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{check_non_negative, check_positive, check_unit, invalid, Error, Result};
use crate::par;
use crate::rng::Seed;
use crate::stream::{merge_sorted_dedup, ps_to_seconds, Picos, TimestampStream};

/// Pump-power dependence of one conversion stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConversionCurve {
    /// Peak conversion rate.
    pub peak_conversion: f64,
    /// Pump power at which the peak is reached.
    pub p_max_mw: f64,
}

impl ConversionCurve {
    pub fn new(peak_conversion: f64, p_max_mw: f64) -> Result<Self> {
        let c = ConversionCurve {
            peak_conversion,
            p_max_mw,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        check_unit("peak_conversion", self.peak_conversion)?;
        check_positive("p_max_mw", self.p_max_mw)
    }

    /// Low-power slope `dζ/dP` at `P = 0`, in 1/W.
    pub fn low_power_slope_per_watt(&self) -> f64 {
        self.peak_conversion * FRAC_PI_2 * FRAC_PI_2 / self.p_max_mw * 1e3
    }
}

/// Power-level conversion rate `ζ = η_conv sin²[(π/2)√(P/P_max)]`.
pub fn conversion_rate(curve: &ConversionCurve, pump_mw: f64) -> Result<f64> {
    curve.validate()?;
    check_non_negative("pump_mw", pump_mw)?;
    Ok(conversion_rate_unchecked(curve.peak_conversion, curve.p_max_mw, pump_mw))
}

pub(crate) fn conversion_rate_unchecked(peak: f64, p_max: f64, pump: f64) -> f64 {
    peak * (FRAC_PI_2 * (pump / p_max).sqrt()).sin().powi(2)
}

/// Photon-number conversion rate `ζ · λ_out / λ_in`.
///
/// Each converted photon carries less energy than the input photon, so the
/// photon-number rate is larger than the power ratio.
pub fn photon_conversion_rate(zeta: f64, lambda_in_nm: f64, lambda_out_nm: f64) -> Result<f64> {
    check_unit("zeta", zeta)?;
    check_positive("lambda_in_nm", lambda_in_nm)?;
    check_positive("lambda_out_nm", lambda_out_nm)?;
    let rate = zeta * lambda_out_nm / lambda_in_nm;
    if rate > 1.0 + 1e-12 {
        return Err(Error::Unphysical(rate));
    }
    Ok(rate.min(1.0))
}

/// One conversion stage with its coupling losses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QfcStage {
    #[serde(default)]
    pub label: String,
    pub curve: ConversionCurve,
    pub pump_mw: f64,
    pub lambda_in_nm: f64,
    pub lambda_out_nm: f64,
    /// Coupling of the input light into the waveguide.
    pub coupling_in: f64,
    /// Transmission of the focusing optics.
    pub transmission: f64,
    /// Coupling of the converted light into the output fiber.
    pub coupling_out: f64,
    #[serde(default)]
    pub delay_ps: Picos,
    /// Homogeneous background added by the stage (SRS, SPDC).
    #[serde(default)]
    pub noise_rate_hz: f64,
}

impl QfcStage {
    pub fn validate(&self) -> Result<()> {
        self.curve.validate()?;
        check_non_negative("pump_mw", self.pump_mw)?;
        check_positive("lambda_in_nm", self.lambda_in_nm)?;
        check_positive("lambda_out_nm", self.lambda_out_nm)?;
        check_unit("coupling_in", self.coupling_in)?;
        check_unit("transmission", self.transmission)?;
        check_unit("coupling_out", self.coupling_out)?;
        check_non_negative("noise_rate_hz", self.noise_rate_hz)?;
        if self.delay_ps < 0 {
            return Err(invalid("delay_ps", "must be non-negative"));
        }
        Ok(())
    }

    /// Power-level conversion rate at the configured pump power.
    pub fn power_conversion_rate(&self) -> Result<f64> {
        conversion_rate(&self.curve, self.pump_mw)
    }

    /// Photon-level conversion rate at the configured pump power.
    pub fn photon_rate(&self) -> Result<f64> {
        photon_conversion_rate(self.power_conversion_rate()?, self.lambda_in_nm, self.lambda_out_nm)
    }

    /// Probability that an input photon leaves the stage.
    pub fn survival(&self) -> Result<f64> {
        self.validate()?;
        Ok(self.coupling_in * self.transmission * self.photon_rate()? * self.coupling_out)
    }

    /// Budget of this stage as `transmission × coupling_in × ζ_photon × coupling_out`.
    pub fn budget(&self) -> Result<EfficiencyBudget> {
        EfficiencyBudget::new(vec![
            BudgetFactor::new("transmission", self.transmission),
            BudgetFactor::new("coupling_in", self.coupling_in),
            BudgetFactor::new("photon_conversion", self.photon_rate()?),
            BudgetFactor::new("coupling_out", self.coupling_out),
        ])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetFactor {
    pub label: String,
    pub value: f64,
}

impl BudgetFactor {
    pub fn new(label: impl Into<String>, value: f64) -> Self {
        BudgetFactor {
            label: label.into(),
            value,
        }
    }
}

/// Multiplicative chain of survival probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EfficiencyBudget {
    factors: Vec<BudgetFactor>,
}

impl EfficiencyBudget {
    pub fn new(factors: Vec<BudgetFactor>) -> Result<Self> {
        let b = EfficiencyBudget { factors };
        b.validate()?;
        Ok(b)
    }

    pub fn from_values(values: &[f64]) -> Result<Self> {
        Self::new(
            values
                .iter()
                .enumerate()
                .map(|(i, v)| BudgetFactor::new(format!("factor_{i}"), *v))
                .collect(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.factors.is_empty() {
            return Err(invalid("factors", "must contain at least one factor"));
        }
        self.factors.iter().enumerate().try_for_each(|(i, f)| {
            check_unit("value", f.value).map_err(|e| match e {
                Error::InvalidParameter { field, reason } => Error::InvalidParameter {
                    field,
                    reason: format!("factor {i} ({}): {reason}", f.label),
                },
                other => other,
            })
        })
    }

    pub fn factors(&self) -> &[BudgetFactor] {
        &self.factors
    }
}

/// Overall efficiency of a budget and its per-factor sensitivities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainEfficiency {
    pub total: f64,
    /// `∂total/∂factor_i`, the product of all other factors.
    pub sensitivities: Vec<(String, f64)>,
}

pub fn chain_efficiency(budget: &EfficiencyBudget) -> Result<ChainEfficiency> {
    budget.validate()?;
    let values: Vec<f64> = budget.factors.iter().map(|f| f.value).collect();
    let total = values.iter().product();
    let sensitivities = budget
        .factors
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let others = values
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, v)| v)
                .product();
            (f.label.clone(), others)
        })
        .collect();
    Ok(ChainEfficiency {
        total,
        sensitivities,
    })
}

/// Uniform Poisson background over `[0, duration)` at `rate_hz`.
pub(crate) fn poisson_events<R: Rng>(rate_hz: f64, duration: Picos, rng: &mut R) -> Vec<Picos> {
    let mean = rate_hz * ps_to_seconds(duration);
    if mean <= 0.0 {
        return Vec::new();
    }
    let n = Poisson::new(mean).expect("positive mean").sample(rng) as usize;
    let mut ev: Vec<Picos> = (0..n).map(|_| rng.random_range(0..duration)).collect();
    ev.sort_unstable();
    ev.dedup();
    ev
}

/// Keeps each event independently with probability `p`, block-parallel.
pub(crate) fn thin(events: &[Picos], p: f64, seed: Seed) -> Vec<Picos> {
    if p >= 1.0 {
        return events.to_vec();
    }
    if p <= 0.0 {
        return Vec::new();
    }
    par::map_event_blocks(events, seed, |blk, s| {
        let mut rng = s.rng();
        blk.iter()
            .copied()
            .filter(|_| rng.random::<f64>() < p)
            .collect()
    })
}

/// Passes a stream through one stage: Bernoulli loss with the stage
/// survival, a constant delay, and additive Poisson background.
///
/// The output window is extended by the delay so no survivor is lost.
pub fn apply_stage(stream: &TimestampStream, stage: &QfcStage, seed: Seed) -> Result<TimestampStream> {
    let survival = stage.survival()?;
    let duration = stream.duration() + stage.delay_ps;
    let mut kept = thin(stream.events(), survival, seed.derive(0));
    kept.iter_mut().for_each(|t| *t += stage.delay_ps);
    let noise = poisson_events(stage.noise_rate_hz, duration, &mut seed.derive(1).rng());
    Ok(TimestampStream::from_sorted_unchecked(
        merge_sorted_dedup(&kept, &noise),
        duration,
    ))
}

/// Sequential application of `stages`, stage `i` seeded with `seed.derive(i)`.
pub fn cascade(stream: &TimestampStream, stages: &[QfcStage], seed: Seed) -> Result<TimestampStream> {
    let (first, rest) = stages
        .split_first()
        .ok_or_else(|| invalid("stages", "cascade needs at least one stage"))?;
    let mut out = apply_stage(stream, first, seed.derive(0))?;
    for (i, stage) in rest.iter().enumerate() {
        out = apply_stage(&out, stage, seed.derive(i as u64 + 1))?;
    }
    Ok(out)
}

/// End-to-end photon survival of a list of stages.
pub fn cascade_survival(stages: &[QfcStage]) -> Result<f64> {
    stages.iter().map(QfcStage::survival).product()
}
