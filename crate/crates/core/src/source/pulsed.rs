use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_positive, check_unit, invalid, Result};
use crate::par;
use crate::rng::Seed;
use crate::stream::{Picos, TimestampStream};

const TRIGGERS_PER_BLOCK: usize = 4096;

/// Excitation-pulse light scattered back into the collection fiber.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Backscatter {
    pub probability_per_trigger: f64,
    /// Width of the arrival-time distribution, dominated by detection jitter.
    pub sigma_ps: f64,
}

/// One excitation cycle per trigger: Doppler cooling, a pause, then a short
/// pulse at `pulse_center_ps` followed by the measurement window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulsedScheduleParams {
    pub trigger_period_ps: Picos,
    pub pulse_center_ps: Picos,
    pub measurement_window_ps: Picos,
    pub lifetime_ps: f64,
    pub excitation_probability: f64,
    pub backscatter: Backscatter,
}

impl PulsedScheduleParams {
    pub fn validate(&self) -> Result<()> {
        check_positive("lifetime_ps", self.lifetime_ps)?;
        check_unit("excitation_probability", self.excitation_probability)?;
        check_unit(
            "backscatter.probability_per_trigger",
            self.backscatter.probability_per_trigger,
        )?;
        check_positive("backscatter.sigma_ps", self.backscatter.sigma_ps)?;
        if self.measurement_window_ps <= 0 {
            return Err(invalid("measurement_window_ps", "must be positive"));
        }
        if self.trigger_period_ps <= self.measurement_window_ps {
            return Err(invalid(
                "trigger_period_ps",
                "must exceed the measurement window",
            ));
        }
        if !(0..self.measurement_window_ps).contains(&self.pulse_center_ps) {
            return Err(invalid(
                "pulse_center_ps",
                "must lie inside the measurement window",
            ));
        }
        Ok(())
    }
}

/// Simulates `n_triggers` excitation cycles.
///
/// Per trigger the ion emits at most one photon at `t₀ + Exp(τ)` (with the
/// excitation probability) and at most one backscatter photon arrives at
/// `Normal(t₀, σ)`. Returns the merged stream and the trigger times.
/// Coinciding picoseconds are merged into one event.
pub fn simulate_pulsed_decay(
    sched: &PulsedScheduleParams,
    n_triggers: usize,
    seed: Seed,
) -> Result<(TimestampStream, Vec<Picos>)> {
    sched.validate()?;
    if n_triggers == 0 {
        return Err(invalid("n_triggers", "must be positive"));
    }
    let period = sched.trigger_period_ps;
    let duration = period
        .checked_mul(n_triggers as Picos)
        .ok_or_else(|| invalid("n_triggers", "total duration overflows"))?;
    let decay = Exp::new(1.0 / sched.lifetime_ps).expect("validated lifetime");
    let jitter = Normal::new(sched.pulse_center_ps as f64, sched.backscatter.sigma_ps)
        .expect("validated sigma");

    let n_blocks = n_triggers.div_ceil(TRIGGERS_PER_BLOCK);
    let blocks = par::map_indexed(n_blocks, |b| {
        let mut rng = seed.derive(b as u64).rng();
        let first = b * TRIGGERS_PER_BLOCK;
        let last = (first + TRIGGERS_PER_BLOCK).min(n_triggers);
        let mut out = Vec::new();
        for k in first..last {
            let trigger = k as Picos * period;
            let excited = rng.random::<f64>() < sched.excitation_probability;
            let delay = decay.sample(&mut rng);
            if excited {
                out.push(trigger + sched.pulse_center_ps + delay.round() as Picos);
            }
            let scattered = rng.random::<f64>() < sched.backscatter.probability_per_trigger;
            let arrival = jitter.sample(&mut rng);
            if scattered {
                out.push(trigger + arrival.round() as Picos);
            }
        }
        out
    });
    let stream = TimestampStream::from_unsorted(blocks.concat(), duration);
    let triggers = (0..n_triggers as Picos).map(|k| k * period).collect();
    Ok((stream, triggers))
}
