//! Beam splitter, photomultiplier detection and FPGA time-stamping.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_non_negative, check_unit, invalid, Error, Result};
use crate::par;
use crate::qfc::{poisson_events, thin};
use crate::rng::Seed;
use crate::stream::{merge_sorted_dedup, ps_to_seconds, Picos, TimestampStream};

/// Default time-stamper grid.
pub const FPGA_RESOLUTION_PS: Picos = 1250;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorParams {
    pub quantum_efficiency: f64,
    pub dark_rate_hz: f64,
    /// Non-paralyzable dead time.
    #[serde(default)]
    pub dead_time_ps: Picos,
    #[serde(default = "default_resolution")]
    pub resolution_ps: Picos,
}

fn default_resolution() -> Picos {
    FPGA_RESOLUTION_PS
}

impl DetectorParams {
    pub fn ideal(resolution_ps: Picos) -> Self {
        DetectorParams {
            quantum_efficiency: 1.0,
            dark_rate_hz: 0.0,
            dead_time_ps: 0,
            resolution_ps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_unit("quantum_efficiency", self.quantum_efficiency)?;
        check_non_negative("dark_rate_hz", self.dark_rate_hz)?;
        if self.dead_time_ps < 0 {
            return Err(invalid("dead_time_ps", "must be non-negative"));
        }
        if self.resolution_ps <= 0 {
            return Err(invalid("resolution_ps", "must be positive"));
        }
        Ok(())
    }
}

/// Quantized detection times of one detector.
///
/// Unlike a [`TimestampStream`], equal timestamps are allowed: two events
/// that survive the dead time can fall into the same grid cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimestampRecord {
    events: Vec<Picos>,
    resolution: Picos,
    duration: Picos,
}

impl TimestampRecord {
    pub fn new(events: Vec<Picos>, resolution: Picos, duration: Picos) -> Result<Self> {
        if resolution <= 0 {
            return Err(invalid("resolution_ps", "must be positive"));
        }
        if duration <= 0 {
            return Err(invalid("duration_ps", "must be positive"));
        }
        if events.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidStream("record events must be sorted".into()));
        }
        if events.iter().any(|t| t % resolution != 0 || *t < 0 || *t >= duration) {
            return Err(Error::InvalidStream(format!(
                "record events must be multiples of {resolution} ps inside [0, {duration})"
            )));
        }
        Ok(TimestampRecord {
            events,
            resolution,
            duration,
        })
    }

    pub fn events(&self) -> &[Picos] {
        &self.events
    }

    pub fn resolution(&self) -> Picos {
        self.resolution
    }

    pub fn duration(&self) -> Picos {
        self.duration
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn rate_hz(&self) -> f64 {
        self.events.len() as f64 / ps_to_seconds(self.duration)
    }

    /// Re-reads the record as a photon stream; fails if two events share a
    /// timestamp.
    pub fn to_stream(&self) -> Result<TimestampStream> {
        TimestampStream::new(self.events.clone(), self.duration)
    }

    /// Text form: a `# resolution_ps=<r> duration_ps=<T>` header, then one
    /// decimal picosecond value per line.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.events.len() * 12 + 64);
        let _ = writeln!(
            s,
            "# resolution_ps={} duration_ps={}",
            self.resolution, self.duration
        );
        for t in &self.events {
            let _ = writeln!(s, "{t}");
        }
        s
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(self.to_text().as_bytes())
    }

    pub fn read_from<R: BufRead>(reader: R) -> std::result::Result<Self, ReadError> {
        let mut lines = reader.lines().enumerate();
        let (resolution, duration) = match lines.next() {
            Some((_, line)) => parse_header(&line?)?,
            None => return Err(parse_err(1, "missing header")),
        };
        let mut events = Vec::new();
        for (i, line) in lines {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let t: Picos = trimmed
                .parse()
                .map_err(|_| parse_err(i + 1, format!("`{trimmed}` is not an integer")))?;
            if let Some(&prev) = events.last() {
                if t < prev {
                    return Err(parse_err(i + 1, "events are not sorted"));
                }
            }
            if t % resolution != 0 || t < 0 || t >= duration {
                return Err(parse_err(
                    i + 1,
                    format!("{t} is not a grid time inside the record window"),
                ));
            }
            events.push(t);
        }
        Ok(TimestampRecord {
            events,
            resolution,
            duration,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::read_from(text.as_bytes()).map_err(|e| match e {
            ReadError::Format(e) => e,
            ReadError::Io(e) => Error::InvalidStream(e.to_string()),
        })
    }
}

/// Failure reading a record: either I/O or malformed content.
#[derive(Debug, thiserror::Error)]
pub enum ReadError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Format(#[from] Error),
}

fn parse_err(line: usize, reason: impl Into<String>) -> ReadError {
    ReadError::Format(Error::Parse {
        line,
        reason: reason.into(),
    })
}

fn parse_header(line: &str) -> std::result::Result<(Picos, Picos), ReadError> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| parse_err(1, "header must start with `#`"))?;
    let mut resolution = None;
    let mut duration = None;
    for field in body.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| parse_err(1, format!("malformed header field `{field}`")))?;
        let value: Picos = value
            .parse()
            .map_err(|_| parse_err(1, format!("`{value}` is not an integer")))?;
        match key {
            "resolution_ps" => resolution = Some(value),
            "duration_ps" => duration = Some(value),
            _ => return Err(parse_err(1, format!("unknown header key `{key}`"))),
        }
    }
    match (resolution, duration) {
        (Some(r), Some(d)) if r > 0 && d > 0 => Ok((r, d)),
        (Some(_), Some(_)) => Err(parse_err(1, "resolution and duration must be positive")),
        _ => Err(parse_err(1, "header needs resolution_ps and duration_ps")),
    }
}

/// Routes each event to the first output with probability `reflectance`.
pub fn beam_split(
    stream: &TimestampStream,
    reflectance: f64,
    seed: Seed,
) -> Result<(TimestampStream, TimestampStream)> {
    check_unit("reflectance", reflectance)?;
    let events = stream.events();
    let n_blocks = events.len().div_ceil(par::BLOCK_LEN);
    // same block layout and seeds as `par::map_event_blocks`
    let routed = par::map_indexed(n_blocks, |b| {
        let blk = &events[b * par::BLOCK_LEN..((b + 1) * par::BLOCK_LEN).min(events.len())];
        let mut rng = seed.derive(b as u64).rng();
        let mut out = (Vec::new(), Vec::new());
        for &t in blk {
            if rng.random::<f64>() < reflectance {
                out.0.push(t);
            } else {
                out.1.push(t);
            }
        }
        out
    });
    let (first, second): (Vec<Vec<Picos>>, Vec<Vec<Picos>>) = routed.into_iter().unzip();
    Ok((
        TimestampStream::from_sorted_unchecked(first.concat(), stream.duration()),
        TimestampStream::from_sorted_unchecked(second.concat(), stream.duration()),
    ))
}

/// Detects a photon stream: quantum-efficiency loss, dark counts,
/// non-paralyzable dead time, then floor quantization to the grid.
pub fn detect(stream: &TimestampStream, det: &DetectorParams, seed: Seed) -> Result<TimestampRecord> {
    det.validate()?;
    let duration = stream.duration();
    let photons = thin(stream.events(), det.quantum_efficiency, seed.derive(0));
    let dark = poisson_events(det.dark_rate_hz, duration, &mut seed.derive(1).rng());
    let merged = merge_sorted_dedup(&photons, &dark);

    let mut events = Vec::with_capacity(merged.len());
    let mut last_accepted: Option<Picos> = None;
    for t in merged {
        if let Some(prev) = last_accepted {
            if t - prev <= det.dead_time_ps {
                continue;
            }
        }
        last_accepted = Some(t);
        events.push(t.div_euclid(det.resolution_ps) * det.resolution_ps);
    }
    Ok(TimestampRecord {
        events,
        resolution: det.resolution_ps,
        duration,
    })
}
