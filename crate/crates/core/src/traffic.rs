//! Sensor sampling state and the one-packet-per-slot delayed channel.

use std::collections::VecDeque;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::config::SensorSpec;
use crate::plant::{gaussian, SensorStreams};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChannelError {
    #[error("sensor {sensor} does not exist")]
    UnknownSensor { sensor: usize },
    #[error("sensor {sensor} has no untransmitted observation at slot {slot}")]
    Ineligible { sensor: usize, slot: u64 },
    #[error("a packet was already scheduled at slot {slot}")]
    SlotBusy { slot: u64 },
}

/// A scheduled observation travelling to the controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObservationPacket {
    pub sensor: usize,
    /// Generation time G.
    pub generated: u64,
    /// y = x(G) + v(G)
    pub value: f64,
    pub noise_var: f64,
    pub delivery_slot: u64,
}

impl ObservationPacket {
    /// τ = delivery slot − G
    pub fn age(&self) -> u32 {
        (self.delivery_slot - self.generated) as u32
    }
}

/// What the controller receives in a slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Delivery {
    pub sensor: usize,
    pub value: f64,
    pub age: u32,
    pub noise_var: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorTraffic {
    pub spec: SensorSpec,
    /// G_m(t), `None` until the first observation.
    pub generated: Option<u64>,
    pub value: f64,
    /// Latest observation not yet transmitted.
    pub fresh: bool,
}

impl SensorTraffic {
    fn new(spec: SensorSpec) -> Self {
        Self {
            spec,
            generated: None,
            value: 0.0,
            fresh: false,
        }
    }
}

/// Sampling state of every sensor plus the packets in flight.
#[derive(Debug, Clone)]
pub struct TrafficState {
    t: u64,
    t_d: u32,
    age_cap: u32,
    sensors: Vec<SensorTraffic>,
    in_flight: VecDeque<ObservationPacket>,
    last_transmit: Option<u64>,
}

impl TrafficState {
    pub fn new(specs: &[SensorSpec], t_d: u32, age_cap: u32) -> Self {
        Self {
            t: 0,
            t_d,
            age_cap,
            sensors: specs.iter().copied().map(SensorTraffic::new).collect(),
            in_flight: VecDeque::new(),
            last_transmit: None,
        }
    }

    pub fn slot(&self) -> u64 {
        self.t
    }

    pub fn t_d(&self) -> u32 {
        self.t_d
    }

    pub fn age_cap(&self) -> u32 {
        self.age_cap
    }

    pub fn len(&self) -> usize {
        self.sensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensors.is_empty()
    }

    pub fn sensor(&self, m: usize) -> &SensorTraffic {
        &self.sensors[m]
    }

    pub fn sensors(&self) -> &[SensorTraffic] {
        &self.sensors
    }

    /// Uncapped age at the controller if scheduled now: t − G + t_d.
    pub fn true_age(&self, m: usize) -> Option<u64> {
        self.sensors[m]
            .generated
            .map(|g| self.t - g + u64::from(self.t_d))
    }

    /// Δ_m saturated at the age cap; `None` before the first observation.
    pub fn age(&self, m: usize) -> Option<u32> {
        self.true_age(m)
            .map(|a| a.min(u64::from(self.age_cap)) as u32)
    }

    pub fn is_eligible(&self, m: usize) -> bool {
        self.sensors
            .get(m)
            .is_some_and(|s| s.generated.is_some() && s.fresh)
    }

    pub fn eligible(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.sensors.len()).filter(|&m| self.is_eligible(m))
    }

    pub fn in_flight(&self) -> impl Iterator<Item = &ObservationPacket> {
        self.in_flight.iter()
    }

    /// Moves to slot `t` and lets every sensor observe `x_t` with its own probability.
    pub fn sample_sensors(&mut self, t: u64, x_t: f64, streams: &mut [SensorStreams]) {
        self.t = t;
        for (s, rng) in self.sensors.iter_mut().zip(streams.iter_mut()) {
            let u: f64 = rng.sampling.gen();
            if u < s.spec.p_obs {
                let v = gaussian(&mut rng.noise, s.spec.sigma_o2);
                s.generated = Some(t);
                s.value = x_t + v;
                s.fresh = true;
            }
        }
    }

    /// Sets sensor `m`'s latest observation directly.
    pub fn observe(&mut self, m: usize, t: u64, value: f64) {
        let s = &mut self.sensors[m];
        s.generated = Some(t);
        s.value = value;
        s.fresh = true;
    }

    /// Moves the clock without sampling.
    pub fn advance_to(&mut self, t: u64) {
        self.t = t;
    }

    /// Hands sensor `d`'s latest observation to the channel at slot `t`.
    pub fn channel_transmit(&mut self, d: usize, t: u64) -> Result<ObservationPacket, ChannelError> {
        if d >= self.sensors.len() {
            return Err(ChannelError::UnknownSensor { sensor: d });
        }
        if self.last_transmit == Some(t) {
            return Err(ChannelError::SlotBusy { slot: t });
        }
        if !self.is_eligible(d) {
            return Err(ChannelError::Ineligible { sensor: d, slot: t });
        }
        let s = &mut self.sensors[d];
        s.fresh = false;
        let packet = ObservationPacket {
            sensor: d,
            generated: s.generated.expect("eligible sensors have observed"),
            value: s.value,
            noise_var: s.spec.sigma_o2,
            delivery_slot: t + u64::from(self.t_d),
        };
        self.in_flight.push_back(packet);
        self.last_transmit = Some(t);
        Ok(packet)
    }

    /// Removes and returns the packet due at slot `t`, if any.
    pub fn channel_deliver(&mut self, t: u64) -> Option<Delivery> {
        while self.in_flight.front().is_some_and(|p| p.delivery_slot < t) {
            self.in_flight.pop_front();
        }
        if self.in_flight.front()?.delivery_slot != t {
            return None;
        }
        let p = self.in_flight.pop_front()?;
        Some(Delivery {
            sensor: p.sensor,
            value: p.value,
            age: p.age(),
            noise_var: p.noise_var,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::NoiseStreams;

    fn specs() -> Vec<SensorSpec> {
        vec![SensorSpec::new(0.05, 1.0), SensorSpec::new(0.02, 0.4)]
    }

    #[test]
    fn delivery_after_fixed_delay() {
        let mut tr = TrafficState::new(&specs(), 1, 64);
        tr.advance_to(10);
        tr.observe(0, 10, 0.5);
        let pkt = tr.channel_transmit(0, 10).unwrap();
        assert_eq!(pkt.delivery_slot, 11);
        assert!(tr.channel_deliver(10).is_none());
        let d = tr.channel_deliver(11).unwrap();
        assert_eq!(d.age, 1);
        assert_eq!(d.noise_var, 0.05);
    }

    #[test]
    fn zero_delay_delivers_same_slot() {
        let mut tr = TrafficState::new(&specs(), 0, 64);
        tr.advance_to(3);
        tr.observe(1, 3, 0.1);
        tr.channel_transmit(1, 3).unwrap();
        let d = tr.channel_deliver(3).unwrap();
        assert_eq!((d.sensor, d.age), (1, 0));
    }

    #[test]
    fn stale_packet_age() {
        // generated at 8, scheduled at 9, delivered at 10
        let mut tr = TrafficState::new(&specs(), 1, 64);
        tr.advance_to(8);
        tr.observe(1, 8, 0.3);
        tr.advance_to(9);
        assert_eq!(tr.age(1), Some(2));
        tr.channel_transmit(1, 9).unwrap();
        assert_eq!(tr.channel_deliver(10).unwrap().age, 2);
    }

    #[test]
    fn retransmission_is_rejected() {
        let mut tr = TrafficState::new(&specs(), 1, 64);
        tr.advance_to(1);
        tr.observe(1, 1, 0.3);
        tr.channel_transmit(1, 1).unwrap();
        tr.advance_to(2);
        assert_eq!(
            tr.channel_transmit(1, 2),
            Err(ChannelError::Ineligible { sensor: 1, slot: 2 })
        );
        assert!(!tr.is_eligible(1));
    }

    #[test]
    fn one_packet_per_slot() {
        let mut tr = TrafficState::new(&specs(), 1, 64);
        tr.advance_to(1);
        tr.observe(0, 1, 0.0);
        tr.observe(1, 1, 0.0);
        tr.channel_transmit(0, 1).unwrap();
        assert_eq!(tr.channel_transmit(1, 1), Err(ChannelError::SlotBusy { slot: 1 }));
    }

    #[test]
    fn ages_saturate() {
        let mut tr = TrafficState::new(&specs(), 1, 5);
        tr.observe(1, 0, 0.0);
        tr.advance_to(100);
        assert_eq!(tr.age(1), Some(5));
        assert_eq!(tr.true_age(1), Some(101));
    }

    #[test]
    fn sampling_rates() {
        let mut tr = TrafficState::new(&specs(), 1, 64);
        let mut streams = NoiseStreams::new(3, 2);
        assert_eq!(tr.age(1), None);
        assert!(!tr.is_eligible(1));
        let n = 10_000u64;
        let mut fresh = 0;
        for t in 0..n {
            tr.sample_sensors(t, 0.0, &mut streams.sensors);
            assert_eq!(tr.sensor(0).generated, Some(t));
            if tr.sensor(1).generated == Some(t) {
                fresh += 1;
            }
        }
        // binomial sd ≈ 0.0049; the window is about ±4 sd
        let rate = fresh as f64 / n as f64;
        assert!((0.38..=0.42).contains(&rate), "rate {rate}");
    }
}
