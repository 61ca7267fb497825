use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Time in integer picoseconds.
pub type Picos = i64;

pub const PS_PER_SECOND: f64 = 1e12;

pub fn ps_to_seconds(t: Picos) -> f64 {
    t as f64 / PS_PER_SECOND
}

pub fn seconds_to_ps(t: f64) -> Picos {
    (t * PS_PER_SECOND).round() as Picos
}

/// Photon event times inside an observation window `[0, duration)`.
///
/// Events are strictly increasing; no two photons of one stream share the
/// same picosecond.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimestampStream {
    events: Vec<Picos>,
    duration: Picos,
}

impl TimestampStream {
    pub fn new(events: Vec<Picos>, duration: Picos) -> Result<Self> {
        if duration <= 0 {
            return Err(Error::InvalidStream(format!(
                "duration {duration} ps must be positive"
            )));
        }
        if let Some(w) = events.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidStream(format!(
                "events not strictly increasing at {} ps, {} ps",
                w[0], w[1]
            )));
        }
        if let (Some(&first), Some(&last)) = (events.first(), events.last()) {
            if first < 0 || last >= duration {
                return Err(Error::InvalidStream(format!(
                    "events must lie in [0, {duration}) ps"
                )));
            }
        }
        Ok(TimestampStream { events, duration })
    }

    pub fn empty(duration: Picos) -> Result<Self> {
        Self::new(Vec::new(), duration)
    }

    /// Sorts, removes duplicates and drops events outside `[0, duration)`.
    pub(crate) fn from_unsorted(mut events: Vec<Picos>, duration: Picos) -> Self {
        events.retain(|&t| (0..duration).contains(&t));
        events.sort_unstable();
        events.dedup();
        TimestampStream { events, duration }
    }

    pub(crate) fn from_sorted_unchecked(events: Vec<Picos>, duration: Picos) -> Self {
        debug_assert!(events.windows(2).all(|w| w[0] < w[1]));
        TimestampStream { events, duration }
    }

    pub fn events(&self) -> &[Picos] {
        &self.events
    }

    pub fn into_events(self) -> Vec<Picos> {
        self.events
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

    /// Mean event rate in Hz.
    pub fn rate_hz(&self) -> f64 {
        self.events.len() as f64 / ps_to_seconds(self.duration)
    }
}

/// Merges two sorted slices, dropping values present in both.
pub(crate) fn merge_sorted_dedup(a: &[Picos], b: &[Picos]) -> Vec<Picos> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}
