//! Delayed Kalman estimator: prediction, input compensation and update.

use std::collections::VecDeque;

use thiserror::Error;

use crate::analytics::{error_recursion_step, AnalyticsError, CoreFunction, CoreFunctionBreakdown};
use crate::config::{GainMode, SystemParams};
use crate::history::{ReceptionHistory, ReceptionRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("age {age} needs {needed} past inputs, only {available} retained")]
    InsufficientInputs {
        age: u32,
        needed: usize,
        available: usize,
    },
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
}

/// A measurement handed to the estimator: y = x(t − τ) + v.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub value: f64,
    pub age: u32,
    pub noise_var: f64,
}

/// x̂⁻ = a·x̂(t−1) + b·u(t−1)
#[inline]
pub fn predict(x_prev: f64, u_prev: f64, params: &SystemParams) -> f64 {
    params.a * x_prev + params.b * u_prev
}

/// x̂* for a measurement of age `tau`.
///
/// `inputs[l]` is u(t−1−l), so `inputs[0]` is the previous input.
pub fn compensate(x_prev: f64, inputs: &[f64], tau: u32, params: &SystemParams) -> Result<f64, EstimatorError> {
    if tau == 0 {
        let u_prev = inputs.first().copied().unwrap_or(0.0);
        return Ok(predict(x_prev, u_prev, params));
    }
    let needed = tau as usize - 1;
    if needed >= inputs.len() && needed > 0 {
        return Err(EstimatorError::InsufficientInputs {
            age: tau,
            needed: needed + 1,
            available: inputs.len(),
        });
    }
    let mut s = 0.0;
    let mut al = 1.0;
    for u in inputs.iter().take(tau as usize).skip(1) {
        al *= params.a;
        s += al * params.b * u;
    }
    Ok(params.a * x_prev - s)
}

/// x̂(t) = x̂⁻ + k·(a^τ·y − x̂*)
#[inline]
pub fn update(x_minus: f64, x_star: f64, y: f64, tau: u32, k: f64, params: &SystemParams) -> f64 {
    x_minus + k * (params.a.powi(tau as i32) * y - x_star)
}

/// Gain for the current slot and whether the minimizing quadratic was degenerate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainChoice {
    pub k: f64,
    pub degenerate: bool,
}

/// Gain for a reception of `age`/`noise_var` following the records in `history`.
pub fn compute_gain(
    mode: GainMode,
    constant_gain: f64,
    core: &CoreFunction,
    history: &ReceptionHistory,
    age: u32,
    noise_var: f64,
    prev_ms_error: f64,
) -> Result<GainChoice, EstimatorError> {
    match mode {
        GainMode::Constant => Ok(GainChoice {
            k: constant_gain,
            degenerate: false,
        }),
        GainMode::Minimizing => {
            let q = core.gain_quadratic(history, age, noise_var, prev_ms_error)?;
            Ok(match q.minimizer() {
                Some(k) => GainChoice { k, degenerate: false },
                None => GainChoice { k: 0.0, degenerate: true },
            })
        }
    }
}

/// Result of one estimator slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateStep {
    pub x_hat: f64,
    pub record: ReceptionRecord,
    pub breakdown: CoreFunctionBreakdown,
    /// Analytic E[e²(t)] given the realised reception history.
    pub ms_error: f64,
    pub degenerate_gain: bool,
}

/// Estimator state carried between slots.
#[derive(Debug, Clone)]
pub struct DelayedKalman {
    params: SystemParams,
    mode: GainMode,
    constant_gain: f64,
    x_hat: f64,
    /// u(t−1), u(t−2), … newest first
    inputs: VecDeque<f64>,
    retention: usize,
    ms_error: f64,
    core: CoreFunction,
    history: ReceptionHistory,
}

impl DelayedKalman {
    pub fn new(
        params: SystemParams,
        mode: GainMode,
        constant_gain: f64,
        x_hat0: f64,
        initial_ms_error: f64,
        retention: usize,
    ) -> Self {
        let retention = retention.max(1);
        Self {
            params,
            mode,
            constant_gain,
            x_hat: x_hat0,
            inputs: VecDeque::with_capacity(retention),
            retention,
            ms_error: initial_ms_error,
            core: CoreFunction::new(params, retention.min(256) as u32),
            history: ReceptionHistory::with_capacity(retention),
        }
    }

    pub fn x_hat(&self) -> f64 {
        self.x_hat
    }

    pub fn ms_error(&self) -> f64 {
        self.ms_error
    }

    pub fn history(&self) -> &ReceptionHistory {
        &self.history
    }

    pub fn gain_mode(&self) -> GainMode {
        self.mode
    }

    /// Records the input applied in the current slot.
    pub fn push_input(&mut self, u: f64) {
        if self.inputs.len() == self.retention {
            self.inputs.pop_back();
        }
        self.inputs.push_front(u);
    }

    fn input_slice(&mut self) -> &[f64] {
        self.inputs.make_contiguous()
    }

    /// Advances x̂(t−1) → x̂(t) with the slot's measurement, if any.
    pub fn step(&mut self, t: u64, measurement: Option<Measurement>) -> Result<EstimateStep, EstimatorError> {
        let params = self.params;
        let x_prev = self.x_hat;
        let u_prev = self.inputs.front().copied().unwrap_or(0.0);
        let x_minus = predict(x_prev, u_prev, &params);

        let (x_hat, record, degenerate) = match measurement {
            None => (x_minus, ReceptionRecord::idle(t), false),
            Some(m) => {
                let gain = compute_gain(
                    self.mode,
                    self.constant_gain,
                    &self.core,
                    &self.history,
                    m.age,
                    m.noise_var,
                    self.ms_error,
                )?;
                let x_star = compensate(x_prev, self.input_slice(), m.age, &params)?;
                let x_hat = update(x_minus, x_star, m.value, m.age, gain.k, &params);
                let record = ReceptionRecord::delivered(t, m.age, m.noise_var, gain.k);
                (x_hat, record, gain.degenerate)
            }
        };
        let breakdown = self.core.evaluate_next(&self.history, record.age, record.noise_var, record.effective_gain())?;
        self.ms_error = error_recursion_step(self.ms_error, breakdown.f, record.effective_gain(), &params);
        self.history.push(record);
        self.x_hat = x_hat;
        Ok(EstimateStep {
            x_hat,
            record,
            breakdown,
            ms_error: self.ms_error,
            degenerate_gain: degenerate,
        })
    }
}
