//! Plant dynamics and the random streams that drive a simulation episode.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::SystemParams;

const PROCESS_STREAM: u64 = 0;
const POLICY_STREAM: u64 = 1;
const DELAY_LINE_STREAM: u64 = 2;
const SENSOR_STREAM_BASE: u64 = 16;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Per-sensor draws: whether it observes, and the observation noise.
#[derive(Debug, Clone)]
pub struct SensorStreams {
    pub sampling: ChaCha8Rng,
    pub noise: ChaCha8Rng,
}

/// Independent random streams, one per noise source.
///
/// The policy never draws from the plant or sensor streams, so two episodes
/// with the same seed see identical process noise, sampling outcomes and
/// observation noise whatever the schedule.
#[derive(Debug, Clone)]
pub struct NoiseStreams {
    pub process: ChaCha8Rng,
    pub policy: ChaCha8Rng,
    /// Observation noise for the fixed-delay measurement line.
    pub delay_line: ChaCha8Rng,
    pub sensors: Vec<SensorStreams>,
}

impl NoiseStreams {
    pub fn new(seed: u64, n_sensors: usize) -> Self {
        let sensors = (0..n_sensors as u64)
            .map(|m| SensorStreams {
                sampling: stream(seed, SENSOR_STREAM_BASE + 2 * m),
                noise: stream(seed, SENSOR_STREAM_BASE + 2 * m + 1),
            })
            .collect();
        Self {
            process: stream(seed, PROCESS_STREAM),
            policy: stream(seed, POLICY_STREAM),
            delay_line: stream(seed, DELAY_LINE_STREAM),
            sensors,
        }
    }
}

/// Zero-mean Gaussian draw with the given variance.
#[inline]
pub fn gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> f64 {
    if variance == 0.0 {
        // keep the stream position independent of the variance
        let _: f64 = rng.sample(StandardNormal);
        return 0.0;
    }
    let z: f64 = rng.sample(StandardNormal);
    z * variance.sqrt()
}

/// True plant state with a bounded window of past states.
#[derive(Debug, Clone)]
pub struct PlantState {
    t: u64,
    x: f64,
    /// x(t−1), x(t−2), … newest first
    past: VecDeque<f64>,
    retention: usize,
}

impl PlantState {
    pub fn new(x0: f64, retention: usize) -> Self {
        Self {
            t: 0,
            x: x0,
            past: VecDeque::with_capacity(retention),
            retention,
        }
    }

    pub fn slot(&self) -> u64 {
        self.t
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    /// x(t − lag) if still retained.
    pub fn state_at_lag(&self, lag: usize) -> Option<f64> {
        if lag == 0 {
            Some(self.x)
        } else {
            self.past.get(lag - 1).copied()
        }
    }

    /// x(t+1) = a·x(t) + b·u + w with a given noise sample.
    pub fn step_with_noise(&mut self, u: f64, w: f64, params: &SystemParams) -> f64 {
        let next = params.a * self.x + params.b * u + w;
        if self.retention > 0 {
            if self.past.len() == self.retention {
                self.past.pop_back();
            }
            self.past.push_front(self.x);
        }
        self.x = next;
        self.t += 1;
        next
    }

    /// Advances one slot with w ~ N(0, σ_p²) drawn from `rng`.
    pub fn step_plant<R: Rng + ?Sized>(&mut self, u: f64, params: &SystemParams, rng: &mut R) -> f64 {
        let w = gaussian(rng, params.sigma_p2);
        self.step_with_noise(u, w, params)
    }
}
