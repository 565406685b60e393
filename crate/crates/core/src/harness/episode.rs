use std::io::Write;

use serde::Serialize;

use crate::analytics::NeumaierSum;
use crate::config::{InitialEstimate, ScenarioConfig, SystemParams};
use crate::estimator::{DelayedKalman, Measurement};
use crate::history::ReceptionRecord;
use crate::lqg::{lqg_cost_time_average, LqgSolution};
use crate::plant::{gaussian, NoiseStreams, PlantState};
use crate::scheduler::Scheduler;
use crate::traffic::TrafficState;

use super::HarnessError;

const INPUT_RETENTION: usize = 1024;

/// How measurements reach the estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeasurementSource {
    /// Sensors, policy and the one-packet channel.
    Scheduled,
    /// A single sensor whose reading of x(t − τ) arrives every slot t ≥ τ.
    ConstantDelay { tau: u32, noise_var: f64 },
}

/// One row of the per-slot trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlotTrace {
    pub t: u64,
    pub x: f64,
    pub x_hat: f64,
    pub u: f64,
    pub sensor: Option<usize>,
    pub tau: Option<u32>,
    pub sigma_o2: Option<f64>,
    pub e2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub seed: u64,
    pub horizon: u64,
    /// (1/T) Σ Q·x² + R·u²
    pub j_emp: f64,
    /// (1/T) Σ e²
    pub j_e_emp: f64,
    /// Time average of the error recursion over the realised receptions.
    pub j_e_analytic: f64,
    /// Expected time-averaged cost implied by `j_e_analytic`.
    pub j_analytic: f64,
    pub idle_slots: u64,
    pub degenerate_gains: u64,
    /// Slot at which the state became non-finite.
    pub aborted_at: Option<u64>,
    pub records: Option<Vec<ReceptionRecord>>,
    pub trace: Option<Vec<SlotTrace>>,
}

impl EpisodeResult {
    pub fn is_aborted(&self) -> bool {
        self.aborted_at.is_some()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EpisodeOptions {
    pub keep_trace: bool,
    pub keep_records: bool,
}

/// Runs one closed-loop episode of `cfg.experiment.horizon` slots.
pub fn run_episode(
    cfg: &ScenarioConfig,
    scheduler: &Scheduler,
    source: MeasurementSource,
    seed: u64,
    options: EpisodeOptions,
) -> Result<EpisodeResult, HarnessError> {
    let params: SystemParams = cfg.system;
    let exp = &cfg.experiment;
    let horizon = exp.horizon;
    let sol = LqgSolution::new(&params, exp.control_gain_form, exp.x0)?;
    let mut streams = NoiseStreams::new(seed, cfg.sensors.len());

    let (x_hat0, e0) = match exp.initial_estimate {
        InitialEstimate::TrueState => (exp.x0, 0.0),
        InitialEstimate::Zero => (0.0, exp.x0),
    };
    let plant_retention = match source {
        MeasurementSource::ConstantDelay { tau, .. } => tau as usize,
        MeasurementSource::Scheduled => 0,
    };
    let mut plant = PlantState::new(exp.x0, plant_retention);
    let mut traffic = TrafficState::new(&cfg.sensors, cfg.channel.t_d, exp.age_cap);
    let mut est = DelayedKalman::new(params, exp.gain_mode, exp.gain, x_hat0, e0 * e0, INPUT_RETENTION);

    let mut cost = NeumaierSum::default();
    let mut err = NeumaierSum::default();
    let mut analytic = NeumaierSum::default();
    analytic.add(e0 * e0);
    let mut idle_slots = 0;
    let mut degenerate_gains = 0;
    let mut aborted_at = None;
    let mut records = options.keep_records.then(|| Vec::with_capacity(horizon as usize));
    let mut trace = options.keep_trace.then(|| Vec::with_capacity(horizon as usize));

    for t in 0..horizon {
        let x = plant.x();
        let (chosen, delivery) = match source {
            MeasurementSource::Scheduled => {
                traffic.sample_sensors(t, x, &mut streams.sensors);
                let decision = scheduler.decide(&traffic, est.history(), &mut streams.policy)?;
                if let Some(d) = decision.choice {
                    traffic.channel_transmit(d, t)?;
                }
                let delivery = traffic.channel_deliver(t).map(|d| {
                    (
                        d.sensor,
                        Measurement {
                            value: d.value,
                            age: d.age,
                            noise_var: d.noise_var,
                        },
                    )
                });
                (decision.choice, delivery)
            }
            MeasurementSource::ConstantDelay { tau, noise_var } => {
                let v = gaussian(&mut streams.delay_line, noise_var);
                let delivery = (t >= u64::from(tau)).then(|| {
                    let x_old = plant.state_at_lag(tau as usize).expect("plant retains τ past states");
                    (
                        0,
                        Measurement {
                            value: x_old + v,
                            age: tau,
                            noise_var,
                        },
                    )
                });
                (delivery.map(|d| d.0), delivery)
            }
        };

        if t >= 1 {
            let step = est.step(t, delivery.map(|d| d.1))?;
            if !step.record.updated {
                idle_slots += 1;
            }
            if step.degenerate_gain {
                degenerate_gains += 1;
            }
            analytic.add(step.ms_error);
            if let Some(r) = records.as_mut() {
                r.push(step.record);
            }
        }
        let x_hat = est.x_hat();
        let u = sol.l_gain * x_hat;
        est.push_input(u);

        let e = x - x_hat;
        cost.add(params.q_weight * x * x + params.r_weight * u * u);
        err.add(e * e);
        if let Some(tr) = trace.as_mut() {
            let delivered = delivery.filter(|_| t >= 1);
            tr.push(SlotTrace {
                t,
                x,
                x_hat,
                u,
                sensor: chosen,
                tau: delivered.map(|d| d.1.age),
                sigma_o2: delivered.map(|d| d.1.noise_var),
                e2: e * e,
            });
        }

        let next = plant.step_plant(u, &params, &mut streams.process);
        if !next.is_finite() || !x_hat.is_finite() {
            aborted_at = Some(t);
            break;
        }
    }

    let n = horizon.max(1) as f64;
    let j_e_analytic = analytic.value() / n;
    Ok(EpisodeResult {
        seed,
        horizon,
        j_emp: cost.value() / n,
        j_e_emp: err.value() / n,
        j_e_analytic,
        j_analytic: lqg_cost_time_average(j_e_analytic, &sol, &params, exp.x0, horizon),
        idle_slots,
        degenerate_gains,
        aborted_at,
        records,
        trace,
    })
}

/// Writes `t,x,x_hat,u,sensor,tau,sigma_o2,e2` rows (empty fields for no delivery).
pub fn write_trace_csv<W: Write>(out: W, trace: &[SlotTrace]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in trace {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
