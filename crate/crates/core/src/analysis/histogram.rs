use serde::{Deserialize, Serialize};

use crate::detection::TimestampRecord;
use crate::error::{invalid, Error, Result};
use crate::par;
use crate::stream::{ps_to_seconds, Picos};

/// Events per work unit when histogramming in parallel.
const CHUNK: usize = 1 << 15;

/// Integer-binned counts on a uniform picosecond grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    /// Left edge of the first bin.
    pub origin: Picos,
    pub bin_width: Picos,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn zeros(origin: Picos, bin_width: Picos, n_bins: usize) -> Self {
        Histogram {
            origin,
            bin_width,
            counts: vec![0; n_bins],
        }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn bin_left(&self, k: usize) -> Picos {
        self.origin + k as Picos * self.bin_width
    }

    pub fn bin_center(&self, k: usize) -> f64 {
        self.bin_left(k) as f64 + 0.5 * self.bin_width as f64
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Index of the bin containing `t`, if any.
    pub fn bin_of(&self, t: Picos) -> Option<usize> {
        let k = (t - self.origin).div_euclid(self.bin_width);
        (k >= 0 && (k as usize) < self.counts.len()).then_some(k as usize)
    }

    fn add(mut self, other: &Histogram) -> Self {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self
    }

    /// CSV with a `bin_left_ps,count` header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_left_ps,count\n");
        for (k, c) in self.counts.iter().enumerate() {
            s.push_str(&format!("{},{}\n", self.bin_left(k), c));
        }
        s
    }
}

/// Histogram of all pair differences `t_b − t_a` within `±tau_range`.
///
/// Bins are centred on multiples of `bin_width`, so equal timestamps land in
/// the τ = 0 bin. The sweep keeps a moving start pointer into `b`, so cost
/// is linear in the number of events for a bounded range.
pub fn cross_correlation_histogram(
    a: &TimestampRecord,
    b: &TimestampRecord,
    bin_width: Picos,
    tau_range: Picos,
) -> Result<Histogram> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyRecord);
    }
    if bin_width < a.resolution().max(b.resolution()) {
        return Err(invalid("bin_width", "must not be finer than the detector resolution"));
    }
    if tau_range <= 0 {
        return Err(invalid("tau_range", "must be positive"));
    }
    let side = tau_range / bin_width;
    let n_bins = (2 * side + 1) as usize;
    let origin = -side * bin_width - bin_width / 2;
    let span = n_bins as Picos * bin_width;
    let (ta, tb) = (a.events(), b.events());

    let n_chunks = ta.len().div_ceil(CHUNK);
    let partial = par::map_indexed(n_chunks, |c| {
        let chunk = &ta[c * CHUNK..((c + 1) * CHUNK).min(ta.len())];
        let mut h = Histogram::zeros(origin, bin_width, n_bins);
        let mut start = tb.partition_point(|&t| t < chunk[0] + origin);
        for &t0 in chunk {
            let lo = t0 + origin;
            while start < tb.len() && tb[start] < lo {
                start += 1;
            }
            for &t1 in &tb[start..] {
                let offset = t1 - lo;
                if offset >= span {
                    break;
                }
                h.counts[(offset / bin_width) as usize] += 1;
            }
        }
        h
    });
    Ok(partial
        .iter()
        .fold(Histogram::zeros(origin, bin_width, n_bins), Histogram::add))
}

/// Histogram of positive-lag differences `t_j − t_i` (`j > i`) within one
/// time series, bins `[k·w, (k+1)·w)` up to `max_lag`.
pub fn auto_correlation_histogram(times: &[Picos], bin_width: Picos, max_lag: Picos) -> Result<Histogram> {
    if bin_width <= 0 || max_lag <= 0 {
        return Err(invalid("bin_width", "bin width and lag range must be positive"));
    }
    if times.windows(2).any(|w| w[0] > w[1]) {
        return Err(invalid("times", "must be sorted"));
    }
    let n_bins = ((max_lag + bin_width - 1) / bin_width) as usize;
    let span = n_bins as Picos * bin_width;
    let n_chunks = times.len().div_ceil(CHUNK);
    let partial = par::map_indexed(n_chunks, |c| {
        let lo = c * CHUNK;
        let hi = ((c + 1) * CHUNK).min(times.len());
        let mut h = Histogram::zeros(0, bin_width, n_bins);
        for i in lo..hi {
            for &t in &times[i + 1..] {
                let d = t - times[i];
                if d >= span {
                    break;
                }
                h.counts[(d / bin_width) as usize] += 1;
            }
        }
        h
    });
    Ok(partial
        .iter()
        .fold(Histogram::zeros(0, bin_width, n_bins), Histogram::add))
}

/// Arrival times relative to the most recent trigger, `[0, window)`.
pub fn arrival_histogram(
    record: &TimestampRecord,
    triggers: &[Picos],
    window: Picos,
    bin_width: Picos,
) -> Result<Histogram> {
    if record.is_empty() {
        return Err(Error::EmptyRecord);
    }
    if bin_width <= 0 || window <= 0 {
        return Err(invalid("window", "window and bin width must be positive"));
    }
    if triggers.is_empty() {
        return Err(invalid("triggers", "at least one trigger is required"));
    }
    if let Some(min_gap) = triggers.windows(2).map(|w| w[1] - w[0]).min() {
        if min_gap <= 0 {
            return Err(invalid("triggers", "must be strictly increasing"));
        }
        if window > min_gap {
            return Err(invalid("window", "must not exceed the trigger period"));
        }
    }
    let n_bins = ((window + bin_width - 1) / bin_width) as usize;
    let ev = record.events();
    let n_chunks = ev.len().div_ceil(CHUNK);
    let partial = par::map_indexed(n_chunks, |c| {
        let mut h = Histogram::zeros(0, bin_width, n_bins);
        for &t in &ev[c * CHUNK..((c + 1) * CHUNK).min(ev.len())] {
            let k = triggers.partition_point(|&tr| tr <= t);
            if k == 0 {
                continue;
            }
            let d = t - triggers[k - 1];
            if d < window {
                h.counts[(d / bin_width) as usize] += 1;
            }
        }
        h
    });
    Ok(partial
        .iter()
        .fold(Histogram::zeros(0, bin_width, n_bins), Histogram::add))
}

/// One normalized correlation bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2Point {
    /// Bin centre.
    pub tau_ps: f64,
    pub g2: f64,
    pub sigma: f64,
    pub counts: u64,
}

/// Normalizes a coincidence histogram by the accidental rate
/// `rate_a · rate_b · duration · bin_width`.
///
/// Errors use Poisson counting statistics with `√max(counts, 1)`.
pub fn normalize_g2(hist: &Histogram, rate_a: f64, rate_b: f64, duration_s: f64) -> Result<Vec<G2Point>> {
    if !(rate_a > 0.0 && rate_b > 0.0) {
        return Err(invalid("rate", "rates must be positive"));
    }
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(invalid("duration", "must be positive"));
    }
    let accidental = rate_a * rate_b * duration_s * ps_to_seconds(hist.bin_width);
    Ok(hist
        .counts
        .iter()
        .enumerate()
        .map(|(k, &c)| G2Point {
            tau_ps: hist.bin_center(k),
            g2: c as f64 / accidental,
            sigma: (c.max(1) as f64).sqrt() / accidental,
            counts: c,
        })
        .collect())
}

/// Two-column CSV `tau_ps,g2,sigma[,model]` for plotting.
pub fn g2_curve_csv(points: &[G2Point], model: Option<&dyn Fn(f64) -> f64>) -> String {
    let mut s = String::from(if model.is_some() {
        "tau_ps,g2,sigma,model\n"
    } else {
        "tau_ps,g2,sigma\n"
    });
    for p in points {
        match model {
            Some(m) => s.push_str(&format!("{},{},{},{}\n", p.tau_ps, p.g2, p.sigma, m(p.tau_ps))),
            None => s.push_str(&format!("{},{},{}\n", p.tau_ps, p.g2, p.sigma)),
        }
    }
    s
}
