//! Sensor scheduling policies.

mod baselines;
mod window;

use rand::Rng;
use thiserror::Error;

use crate::analytics::{AnalyticsError, CoreFunction};
use crate::config::{GainMode, PolicyKind, ScenarioConfig, SensorSpec, SystemParams};
use crate::history::Lookback;
use crate::traffic::TrafficState;

pub use baselines::{age_minimal, random_policy, variance_minimal};
pub use window::{
    dp_transition, greedy_decide, sliding_window_decide, stage_weights, window_prefix, DpSensor, DpState,
    WindowPlanner,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("sensor {sensor} is not eligible for scheduling")]
    IneligibleAction { sensor: usize },
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
}

/// Sensor chosen for the slot (`None` = idle) and, for the planning
/// policies, the expected weighted cost of that choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyDecision {
    pub choice: Option<usize>,
    pub value: Option<f64>,
}

impl PolicyDecision {
    pub fn idle() -> Self {
        Self {
            choice: None,
            value: None,
        }
    }

    pub fn pick(choice: Option<usize>) -> Self {
        Self { choice, value: None }
    }

    pub fn is_idle(&self) -> bool {
        self.choice.is_none()
    }
}

/// Everything the planning policies need besides the live traffic state.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerContext {
    pub params: SystemParams,
    pub sensors: Vec<SensorSpec>,
    pub t_d: u32,
    /// Gain assumed for every reception inside the planning window.
    pub gain: f64,
    pub dp_age_cap: u32,
    /// Whether past gains can differ from `gain` (disables decision caching).
    pub variable_gain: bool,
}

impl SchedulerContext {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        Self {
            params: cfg.system,
            sensors: cfg.sensors.clone(),
            t_d: cfg.channel.t_d,
            gain: cfg.experiment.gain,
            dp_age_cap: cfg.experiment.dp_age_cap,
            variable_gain: cfg.experiment.gain_mode != GainMode::Constant,
        }
    }

    /// a²(1−k)²
    pub fn gamma(&self) -> f64 {
        let alpha = self.params.a * (1.0 - self.gain);
        alpha * alpha
    }

    pub fn core_function(&self) -> CoreFunction {
        CoreFunction::new(self.params, self.dp_age_cap + 1)
    }
}

/// Index of the best `(sensor, value, noise variance)` candidate: lowest
/// value, ties (relative 1e−12) to the lower variance, then the lower id.
pub(crate) fn select_best<I: IntoIterator<Item = (usize, f64, f64)>>(candidates: I) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64, f64)> = None;
    for (id, v, var) in candidates {
        best = match best {
            None => Some((id, v, var)),
            Some((bid, bv, bvar)) => {
                let tol = 1e-12 * v.abs().max(bv.abs());
                let better = if v < bv - tol {
                    true
                } else if v <= bv + tol {
                    var < bvar || (var == bvar && id < bid)
                } else {
                    false
                };
                if better {
                    Some((id, v, var))
                } else {
                    Some((bid, bv, bvar))
                }
            }
        };
    }
    best.map(|(id, v, _)| (id, v))
}

/// A policy ready to be queried slot by slot.
///
/// The planning policies keep their tables (and the window decision cache)
/// here, so one `Scheduler` can be shared by every episode of a configuration.
#[derive(Debug)]
pub enum Scheduler {
    Random,
    AgeMinimal,
    VarianceMinimal,
    Greedy { ctx: SchedulerContext, core: CoreFunction },
    Window(WindowPlanner),
}

impl Scheduler {
    pub fn new(kind: PolicyKind, ctx: &SchedulerContext) -> Self {
        match kind {
            PolicyKind::Random => Scheduler::Random,
            PolicyKind::AgeMinimal => Scheduler::AgeMinimal,
            PolicyKind::VarianceMinimal => Scheduler::VarianceMinimal,
            PolicyKind::Greedy => Scheduler::Greedy {
                core: ctx.core_function(),
                ctx: ctx.clone(),
            },
            PolicyKind::SlidingWindow { window } => {
                Scheduler::Window(WindowPlanner::new(ctx.clone(), window as usize, !ctx.variable_gain))
            }
        }
    }

    pub fn decide<L: Lookback + ?Sized, R: Rng + ?Sized>(
        &self,
        traffic: &TrafficState,
        history: &L,
        rng: &mut R,
    ) -> Result<PolicyDecision, ScheduleError> {
        match self {
            Scheduler::Random => Ok(random_policy(traffic, rng)),
            Scheduler::AgeMinimal => Ok(age_minimal(traffic)),
            Scheduler::VarianceMinimal => Ok(variance_minimal(traffic)),
            Scheduler::Greedy { ctx, core } => greedy_decide(traffic, history, ctx, core),
            Scheduler::Window(planner) => planner.decide(traffic, history),
        }
    }
}
