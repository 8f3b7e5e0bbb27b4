//! Sampled delay signals and random topology schedules.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Stream reserved for the switching schedule; channel delays use stream `m`.
const SCHEDULE_STREAM: u64 = 1 << 32;

/// Index of the sample interval containing `t` for period `period`, robust to
/// rounding when `t` is a multiple of the period.
pub(crate) fn sample_index(t: f64, period: f64) -> usize {
    if t <= 0.0 {
        0
    } else {
        (t / period + 1e-9).floor() as usize
    }
}

/// Piecewise-constant delay `τ(t) ∈ [0, h]`, held for `ts` seconds per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayRealization {
    pub h: f64,
    pub ts: f64,
    samples: Vec<f64>,
}

/// I.i.d. uniform samples on `[0, h)` from the ChaCha8 stream `stream` of
/// `seed`, covering `[0, horizon]`.
pub fn make_delay(
    h: f64,
    ts: f64,
    seed: u64,
    stream: u64,
    horizon: f64,
) -> Result<DelayRealization> {
    if !(h >= 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "delay bound must be >= 0, got {h}"
        )));
    }
    if !(ts > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sample period must be > 0, got {ts}"
        )));
    }
    let count = sample_index(horizon.max(0.0), ts) + 1;
    let samples = if h == 0.0 {
        vec![0.0; count]
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        (0..count).map(|_| h * rng.random::<f64>()).collect()
    };
    Ok(DelayRealization { h, ts, samples })
}

impl DelayRealization {
    /// A delay fixed at `tau`.
    pub fn constant(tau: f64) -> Self {
        Self {
            h: tau,
            ts: f64::INFINITY,
            samples: vec![tau],
        }
    }

    pub fn at(&self, t: f64) -> f64 {
        if self.ts.is_infinite() {
            return self.samples[0];
        }
        let j = sample_index(t, self.ts).min(self.samples.len() - 1);
        self.samples[j]
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }
}

/// How channel delays are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DelayPairing {
    /// Every directed channel has its own signal.
    #[default]
    Independent,
    /// Channels `2j` and `2j+1` (both directions of one link) share a signal.
    PerLink,
}

/// One signal per channel.
pub fn make_delays(
    bounds: &[f64],
    ts: f64,
    seed: u64,
    horizon: f64,
    pairing: DelayPairing,
) -> Result<Vec<DelayRealization>> {
    bounds
        .iter()
        .enumerate()
        .map(|(m, &h)| {
            let stream = match pairing {
                DelayPairing::Independent => m as u64,
                DelayPairing::PerLink => (m / 2) as u64,
            };
            make_delay(h, ts, seed, stream, horizon)
        })
        .collect()
}

/// Topology index held for `dwell` seconds at a time.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchSchedule {
    pub dwell: f64,
    sequence: Vec<usize>,
}

/// Uniform i.i.d. choice among `count` topologies per dwell interval.
pub fn make_schedule(count: usize, dwell: f64, seed: u64, horizon: f64) -> Result<SwitchSchedule> {
    if count == 0 {
        return Err(Error::InvalidParameter(
            "no topologies to switch between".into(),
        ));
    }
    if !(dwell > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "dwell must be > 0, got {dwell}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SCHEDULE_STREAM);
    let len = sample_index(horizon.max(0.0), dwell) + 1;
    Ok(SwitchSchedule {
        dwell,
        sequence: (0..len).map(|_| rng.random_range(0..count)).collect(),
    })
}

impl SwitchSchedule {
    pub fn fixed(ell: usize) -> Self {
        Self {
            dwell: f64::INFINITY,
            sequence: vec![ell],
        }
    }

    pub fn at(&self, t: f64) -> usize {
        if self.dwell.is_infinite() {
            return self.sequence[0];
        }
        self.sequence[sample_index(t, self.dwell).min(self.sequence.len() - 1)]
    }

    pub fn sequence(&self) -> &[usize] {
        &self.sequence
    }
}
