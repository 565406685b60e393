//! Per-slot record of what the controller received.

use std::collections::VecDeque;

/// One slot of the reception process.
///
/// Slots without a delivery are recorded with `updated == false` and a zero
/// gain, so the error recursion collapses to pure prediction there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReceptionRecord {
    pub slot: u64,
    /// Age τ(t) of the received observation.
    pub age: u32,
    /// Noise variance σ_o²(t) of the received observation.
    pub noise_var: f64,
    /// Estimator gain k(t) applied in this slot.
    pub gain: f64,
    pub updated: bool,
}

impl ReceptionRecord {
    pub fn delivered(slot: u64, age: u32, noise_var: f64, gain: f64) -> Self {
        Self {
            slot,
            age,
            noise_var,
            gain,
            updated: true,
        }
    }

    pub fn idle(slot: u64) -> Self {
        Self {
            slot,
            age: 0,
            noise_var: 0.0,
            gain: 0.0,
            updated: false,
        }
    }

    /// Gain actually applied (zero when nothing arrived).
    #[inline]
    pub fn effective_gain(&self) -> f64 {
        if self.updated {
            self.gain
        } else {
            0.0
        }
    }

    /// Coefficient of the newest process-noise sample w(t−1) in e(t).
    ///
    /// An update with a zero-age observation also filters w(t−1), leaving
    /// (1 − k); every other slot passes it through unchanged.
    #[inline]
    pub fn fresh_noise_coefficient(&self) -> f64 {
        if self.updated && self.age == 0 {
            1.0 - self.gain
        } else {
            1.0
        }
    }
}

/// Read access to the most recent records, newest first.
pub trait Lookback {
    /// Record `n` slots before the newest one (`back(0)` is the newest).
    fn back(&self, n: usize) -> Option<&ReceptionRecord>;

    fn depth(&self) -> usize;
}

impl Lookback for [ReceptionRecord] {
    #[inline]
    fn back(&self, n: usize) -> Option<&ReceptionRecord> {
        self.len().checked_sub(n + 1).map(|i| &self[i])
    }

    #[inline]
    fn depth(&self) -> usize {
        self.len()
    }
}

impl Lookback for Vec<ReceptionRecord> {
    #[inline]
    fn back(&self, n: usize) -> Option<&ReceptionRecord> {
        self.as_slice().back(n)
    }

    #[inline]
    fn depth(&self) -> usize {
        self.len()
    }
}

/// Bounded history of receptions.
///
/// Keeps at least `capacity` records; the capacity grows when a record with
/// a larger age arrives so that the lookback always covers max τ + 1 slots.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceptionHistory {
    records: VecDeque<ReceptionRecord>,
    capacity: usize,
}

impl ReceptionHistory {
    pub fn with_capacity(capacity: usize) -> Self {
        let capacity = capacity.max(1);
        Self {
            records: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, record: ReceptionRecord) {
        debug_assert!(
            self.records.back().is_none_or(|r| r.slot < record.slot),
            "records must arrive in slot order"
        );
        let needed = record.age as usize + 1;
        if needed > self.capacity {
            self.capacity = needed;
        }
        if self.records.len() == self.capacity {
            self.records.pop_front();
        }
        self.records.push_back(record);
    }

    pub fn latest(&self) -> Option<&ReceptionRecord> {
        self.records.back()
    }

    pub fn iter(&self) -> impl DoubleEndedIterator<Item = &ReceptionRecord> + ExactSizeIterator {
        self.records.iter()
    }

    /// The newest `n` records, oldest first.
    pub fn suffix(&self, n: usize) -> impl Iterator<Item = &ReceptionRecord> {
        let skip = self.records.len().saturating_sub(n);
        self.records.iter().skip(skip)
    }
}

impl Lookback for ReceptionHistory {
    #[inline]
    fn back(&self, n: usize) -> Option<&ReceptionRecord> {
        self.records
            .len()
            .checked_sub(n + 1)
            .and_then(|i| self.records.get(i))
    }

    fn depth(&self) -> usize {
        self.records.len()
    }
}

impl FromIterator<ReceptionRecord> for ReceptionHistory {
    fn from_iter<I: IntoIterator<Item = ReceptionRecord>>(iter: I) -> Self {
        let records: VecDeque<_> = iter.into_iter().collect();
        let max_age = records.iter().map(|r| r.age as usize + 1).max().unwrap_or(1);
        let capacity = records.len().max(max_age);
        Self { records, capacity }
    }
}
