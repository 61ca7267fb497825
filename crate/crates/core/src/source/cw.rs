//! Continuous-drive emission as a renewal process.
//!
//! After each emission the emitter is back in the ground state, so the
//! inter-emission intervals are i.i.d. with the waiting-time density of the
//! conditional (no-jump) evolution `c(t) = exp(−i H_eff t) |g⟩`,
//! `H_eff = −Δ|e⟩⟨e| + (Ω_R/2) σ_x − (iγ/2)|e⟩⟨e|`. The survival probability
//! `S(t) = |c(t)|²` is tabulated once and sampled by inverse CDF.

use num_complex::Complex64;
use rand::Rng;

use super::{bloch::max_step, EmitterParams};
use crate::error::{invalid, Result};
use crate::par;
use crate::rng::Seed;
use crate::stream::{Picos, TimestampStream, PS_PER_SECOND};

const SURVIVAL_FLOOR: f64 = 1e-12;
const MAX_GRID: usize = 4_000_000;

/// Tabulated waiting-time distribution between consecutive emissions.
#[derive(Debug, Clone)]
pub struct WaitingTimeDistribution {
    params: EmitterParams,
    step: f64,
    survival: Vec<f64>,
    tail_rate: f64,
}

impl WaitingTimeDistribution {
    /// Returns `None` for an undriven emitter, which never emits.
    pub fn new(params: &EmitterParams) -> Result<Option<Self>> {
        params.validate()?;
        if params.rabi_frequency == 0.0 {
            return Ok(None);
        }
        let step = max_step(params);
        let evolution = NoJump::new(params);
        let mut survival = Vec::with_capacity(4096);
        survival.push(1.0);
        let mut k = 1usize;
        loop {
            let s = evolution.survival(k as f64 * step).min(*survival.last().unwrap());
            survival.push(s);
            if s < SURVIVAL_FLOOR || survival.len() >= MAX_GRID {
                break;
            }
            k += 1;
        }
        Ok(Some(WaitingTimeDistribution {
            params: *params,
            step,
            survival,
            tail_rate: evolution.slowest_decay_rate(),
        }))
    }

    /// Grid spacing of the table, in seconds.
    pub fn time_step(&self) -> f64 {
        self.step
    }

    pub fn params(&self) -> &EmitterParams {
        &self.params
    }

    /// Probability of no emission within `t` seconds of the last one.
    pub fn survival(&self, t: f64) -> f64 {
        NoJump::new(&self.params).survival(t)
    }

    /// Waiting-time probability density (1/s).
    pub fn density(&self, t: f64) -> f64 {
        self.params.decay_rate * NoJump::new(&self.params).excited(t)
    }

    /// Inverse-CDF sample of a waiting time, in seconds.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // u in (0, 1]
        let u = 1.0 - rng.random::<f64>();
        let last = *self.survival.last().unwrap();
        if u <= last {
            let end = (self.survival.len() - 1) as f64 * self.step;
            return end + (last / u).ln() / self.tail_rate;
        }
        // first index with S <= u; S[0] = 1 >= u
        let k = self.survival.partition_point(|&s| s > u);
        let (hi, lo) = (self.survival[k - 1], self.survival[k]);
        let frac = if hi > lo { (hi - u) / (hi - lo) } else { 0.0 };
        ((k - 1) as f64 + frac) * self.step
    }
}

/// Closed-form 2×2 non-Hermitian evolution from the ground state, written
/// on the eigenmodes `μ± = m ± s` so that no term overflows at long times.
struct NoJump {
    m: Complex64,
    s: Complex64,
    half_rabi: f64,
}

impl NoJump {
    fn new(p: &EmitterParams) -> Self {
        // generator −iH_eff = [[0, −iΩ/2], [−iΩ/2, iΔ − γ/2]]
        let m = Complex64::new(-0.25 * p.decay_rate, 0.5 * p.detuning);
        let half_rabi = 0.5 * p.rabi_frequency;
        let s = (m * m - half_rabi * half_rabi).sqrt();
        NoJump { m, s, half_rabi }
    }

    fn amplitudes(&self, t: f64) -> (Complex64, Complex64) {
        let plus = ((self.m + self.s) * t).exp();
        let minus = ((self.m - self.s) * t).exp();
        let even = 0.5 * (plus + minus);
        let st = self.s * t;
        let odd = if st.norm() > 1e-6 {
            (plus - minus) / (2.0 * self.s)
        } else {
            t * (self.m * t).exp() * (1.0 + st * st / 6.0)
        };
        let ground = even - self.m * odd;
        let excited = Complex64::new(0.0, -self.half_rabi) * odd;
        (ground, excited)
    }

    fn survival(&self, t: f64) -> f64 {
        let (g, e) = self.amplitudes(t);
        g.norm_sqr() + e.norm_sqr()
    }

    fn excited(&self, t: f64) -> f64 {
        self.amplitudes(t).1.norm_sqr()
    }

    /// Asymptotic decay rate of `S(t)`.
    fn slowest_decay_rate(&self) -> f64 {
        let re = (self.m + self.s).re.max((self.m - self.s).re);
        -2.0 * re
    }
}

fn check_duration(duration: Picos) -> Result<()> {
    if duration <= 0 {
        return Err(invalid("duration", format!("{duration} ps must be positive")));
    }
    Ok(())
}

fn run_trajectory(dist: &WaitingTimeDistribution, duration: Picos, seed: Seed) -> Vec<Picos> {
    let mut rng = seed.rng();
    let expected = dist.params.emission_rate() * duration as f64 / PS_PER_SECOND;
    let mut events = Vec::with_capacity((expected * 1.05) as usize + 16);
    let mut t: Picos = 0;
    loop {
        let wait = (dist.sample(&mut rng) * PS_PER_SECOND).round().max(1.0) as Picos;
        t = t.saturating_add(wait);
        if t >= duration {
            break;
        }
        events.push(t);
    }
    events
}

/// Emission times of one quantum-jump trajectory over `[0, duration)`,
/// starting from the ground state at `t = 0`.
pub fn simulate_cw_stream(
    params: &EmitterParams,
    duration: Picos,
    seed: Seed,
) -> Result<TimestampStream> {
    check_duration(duration)?;
    let events = match WaitingTimeDistribution::new(params)? {
        Some(dist) => run_trajectory(&dist, duration, seed),
        None => Vec::new(),
    };
    Ok(TimestampStream::from_sorted_unchecked(events, duration))
}

/// Generates `[0, duration)` as `shards` consecutive windows, each an
/// independent trajectory restarted from the ground state with seed
/// `seed.derive(shard)`. Output does not depend on the thread count.
pub fn simulate_cw_sharded(
    params: &EmitterParams,
    duration: Picos,
    seed: Seed,
    shards: usize,
) -> Result<TimestampStream> {
    check_duration(duration)?;
    if shards == 0 {
        return Err(invalid("shards", "must be at least 1"));
    }
    let Some(dist) = WaitingTimeDistribution::new(params)? else {
        return Ok(TimestampStream::from_sorted_unchecked(Vec::new(), duration));
    };
    let width = (duration + shards as Picos - 1) / shards as Picos;
    let pieces = par::map_indexed(shards, |k| {
        let start = k as Picos * width;
        let len = (duration - start).min(width);
        if len <= 0 {
            return Vec::new();
        }
        let mut ev = run_trajectory(&dist, len, seed.derive(k as u64));
        ev.iter_mut().for_each(|t| *t += start);
        ev
    });
    Ok(TimestampStream::from_sorted_unchecked(
        pieces.concat(),
        duration,
    ))
}
