use std::collections::BTreeMap;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::CoreFunction;
use crate::config::{validate_scenario, PolicyKind, ScenarioConfig, SensorSpec};
use crate::history::ReceptionRecord;
use crate::scheduler::{Scheduler, SchedulerContext};

use super::episode::{run_episode, EpisodeOptions, MeasurementSource};
use super::stats::{mean, std_err};
use super::HarnessError;

pub const FIG2A_SIGMA_P2: [f64; 3] = [0.01, 0.02, 0.05];
pub const FIG2A_DELAYS: [u32; 7] = [0, 1, 2, 3, 4, 5, 6];
pub const FIG2A_NOISE_VAR: f64 = 0.05;
pub const FIG2B_SWEEP: [f64; 6] = [0.05, 0.1, 0.2, 0.4, 0.7, 1.0];
pub const FIG2C_P: [f64; 4] = [0.2, 0.4, 0.6, 0.8];
pub const FIG2C_WINDOWS: [u32; 4] = [1, 2, 3, 4];

/// Per-seed metrics of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignResult {
    pub label: String,
    pub config_hash: String,
    pub policy: String,
    pub sweep: f64,
    pub horizon: u64,
    /// Seeds of the completed episodes, in order.
    pub seeds: Vec<u64>,
    pub j_emp: Vec<f64>,
    pub j_analytic: Vec<f64>,
    pub j_e_emp: Vec<f64>,
    pub j_e_analytic: Vec<f64>,
    /// Seeds whose episode went non-finite.
    pub aborted: Vec<u64>,
}

impl CampaignResult {
    pub fn mean_j(&self) -> f64 {
        mean(&self.j_emp)
    }

    pub fn stderr_j(&self) -> f64 {
        std_err(&self.j_emp)
    }
}

/// Runs every seed of `cfg` under `source` and collects the metrics in seed order.
pub fn run_campaign(
    cfg: &ScenarioConfig,
    source: MeasurementSource,
    label: &str,
    sweep: f64,
) -> Result<CampaignResult, HarnessError> {
    let cfg = validate_scenario(cfg.clone())?;
    let scheduler = Scheduler::new(cfg.experiment.policy, &SchedulerContext::from_config(&cfg));
    let episodes: Vec<_> = cfg
        .experiment
        .seeds
        .par_iter()
        .map(|&seed| run_episode(&cfg, &scheduler, source, seed, EpisodeOptions::default()))
        .collect::<Result<_, _>>()?;

    let policy = match source {
        MeasurementSource::Scheduled => cfg.experiment.policy.to_string(),
        MeasurementSource::ConstantDelay { tau, .. } => format!("delay:{tau}"),
    };
    let mut out = CampaignResult {
        label: label.to_string(),
        config_hash: cfg.config_hash(),
        policy,
        sweep,
        horizon: cfg.experiment.horizon,
        seeds: Vec::new(),
        j_emp: Vec::new(),
        j_analytic: Vec::new(),
        j_e_emp: Vec::new(),
        j_e_analytic: Vec::new(),
        aborted: Vec::new(),
    };
    for ep in episodes {
        if ep.is_aborted() {
            out.aborted.push(ep.seed);
            continue;
        }
        out.seeds.push(ep.seed);
        out.j_emp.push(ep.j_emp);
        out.j_analytic.push(ep.j_analytic);
        out.j_e_emp.push(ep.j_e_emp);
        out.j_e_analytic.push(ep.j_e_analytic);
    }
    Ok(out)
}

/// Single always-observing sensor with noise variance 0.05 and the given σ_p².
pub fn fig2a_config(sigma_p2: f64, seeds: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::scheduling_reference([0.0; 4], 1.0, PolicyKind::VarianceMinimal);
    cfg.system.sigma_p2 = sigma_p2;
    cfg.sensors = vec![SensorSpec::new(FIG2A_NOISE_VAR, 1.0)];
    cfg.experiment.seeds = (1..=seeds).collect();
    cfg
}

/// Four sensors with variances (σ²_{o,1}, 0.02, 0.05, 0.2); sensors 2–4 observe with p = 0.4.
pub fn fig2b_config(sigma_o1: f64, policy: PolicyKind, seeds: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::scheduling_reference([sigma_o1, 0.02, 0.05, 0.2], 0.4, policy);
    cfg.experiment.seeds = (1..=seeds).collect();
    cfg
}

/// Four sensors with variances (0.8, 0.02, 0.05, 0.2); sensors 2–4 observe with probability `p`.
pub fn fig2c_config(p: f64, window: u32, seeds: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::scheduling_reference(
        [0.8, 0.02, 0.05, 0.2],
        p,
        PolicyKind::SlidingWindow { window },
    );
    cfg.experiment.seeds = (1..=seeds).collect();
    cfg
}

/// One cell of the constant-delay study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fig2aRow {
    pub sigma_p2: f64,
    pub tau: u32,
    /// Mean over seeds of (1/T) Σ e².
    pub mc_mean: f64,
    /// Error recursion over the realised (constant) reception history.
    pub theorem_mean: f64,
    pub mc_ratio: f64,
    pub mc_ratio_se: f64,
    /// Steady-state (C_p + C_s)/f.
    pub baseline_ratio: f64,
    pub seeds: usize,
}

fn steady_baseline_ratio(cfg: &ScenarioConfig, tau: u32) -> Result<f64, HarnessError> {
    let core = CoreFunction::new(cfg.system, tau);
    let before: Vec<ReceptionRecord> = (1..=u64::from(tau.max(1)))
        .map(|t| ReceptionRecord::delivered(t, tau, FIG2A_NOISE_VAR, cfg.experiment.gain))
        .collect();
    let b = core.evaluate_next(before.as_slice(), tau, FIG2A_NOISE_VAR, cfg.experiment.gain)?;
    Ok(b.without_correlation() / b.f)
}

/// Monte-Carlo error against the analytic recursion for constant delays.
pub fn run_fig2a(sigma_p2s: &[f64], delays: &[u32], seeds: u64) -> Result<Vec<Fig2aRow>, HarnessError> {
    let mut rows = Vec::new();
    for &sp in sigma_p2s {
        let cfg = fig2a_config(sp, seeds);
        for &tau in delays {
            let source = MeasurementSource::ConstantDelay {
                tau,
                noise_var: FIG2A_NOISE_VAR,
            };
            let res = run_campaign(&cfg, source, "fig2a", sp)?;
            let mc = mean(&res.j_e_emp);
            let th = mean(&res.j_e_analytic);
            rows.push(Fig2aRow {
                sigma_p2: sp,
                tau,
                mc_mean: mc,
                theorem_mean: th,
                mc_ratio: mc / th,
                mc_ratio_se: std_err(&res.j_e_emp) / th,
                baseline_ratio: steady_baseline_ratio(&cfg, tau)?,
                seeds: res.seeds.len(),
            });
        }
    }
    Ok(rows)
}

pub fn write_fig2a_csv<W: Write>(out: W, rows: &[Fig2aRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Every policy at every σ²_{o,1} of the sweep.
pub fn run_fig2b(sweep: &[f64], policies: &[PolicyKind], seeds: u64) -> Result<Vec<CampaignResult>, HarnessError> {
    let mut out = Vec::new();
    for &s in sweep {
        for &policy in policies {
            let cfg = fig2b_config(s, policy, seeds);
            out.push(run_campaign(&cfg, MeasurementSource::Scheduled, "fig2b", s)?);
        }
    }
    Ok(out)
}

/// Sliding-window policy for every window size at every observation probability.
pub fn run_fig2c(ps: &[f64], windows: &[u32], seeds: u64) -> Result<Vec<CampaignResult>, HarnessError> {
    let mut out = Vec::new();
    for &p in ps {
        for &n in windows {
            let cfg = fig2c_config(p, n, seeds);
            out.push(run_campaign(&cfg, MeasurementSource::Scheduled, "fig2c", p)?);
        }
    }
    Ok(out)
}

/// One line of the aggregate CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub label: String,
    pub config_hash: String,
    pub policy: String,
    pub sweep: f64,
    pub horizon: u64,
    pub mean_j: f64,
    pub stderr_j: f64,
    pub mean_j_analytic: f64,
    pub mean_j_e: f64,
    pub seeds: usize,
    pub aborted: usize,
}

pub fn summarize(results: &[CampaignResult]) -> Result<Vec<SummaryRow>, HarnessError> {
    let first = results.first().ok_or(HarnessError::EmptyResults)?;
    if let Some(r) = results.iter().find(|r| r.horizon != first.horizon) {
        return Err(HarnessError::MixedHorizon(first.horizon, r.horizon));
    }
    Ok(results
        .iter()
        .map(|r| SummaryRow {
            label: r.label.clone(),
            config_hash: r.config_hash.clone(),
            policy: r.policy.clone(),
            sweep: r.sweep,
            horizon: r.horizon,
            mean_j: r.mean_j(),
            stderr_j: r.stderr_j(),
            mean_j_analytic: mean(&r.j_analytic),
            mean_j_e: mean(&r.j_e_emp),
            seeds: r.seeds.len(),
            aborted: r.aborted.len(),
        })
        .collect())
}

pub fn write_summary_csv<W: Write>(out: W, rows: &[SummaryRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary_csv<R: Read>(input: R) -> Result<Vec<SummaryRow>, HarnessError> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// Gnuplot table: one line per sweep value, a mean/stderr column pair per policy.
pub fn write_gnuplot<W: Write>(mut out: W, rows: &[SummaryRow]) -> Result<(), HarnessError> {
    let mut policies: Vec<&str> = Vec::new();
    for r in rows {
        if !policies.contains(&r.policy.as_str()) {
            policies.push(&r.policy);
        }
    }
    let mut by_sweep: BTreeMap<u64, (f64, Vec<Option<(f64, f64)>>)> = BTreeMap::new();
    for r in rows {
        let entry = by_sweep
            .entry(r.sweep.to_bits())
            .or_insert_with(|| (r.sweep, vec![None; policies.len()]));
        let i = policies.iter().position(|p| *p == r.policy).expect("policy listed");
        entry.1[i] = Some((r.mean_j, r.stderr_j));
    }
    let mut sorted: Vec<_> = by_sweep.into_values().collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    write!(out, "# sweep")?;
    for p in &policies {
        write!(out, " {p} {p}_se")?;
    }
    writeln!(out)?;
    for (sweep, cols) in sorted {
        write!(out, "{sweep}")?;
        for c in cols {
            match c {
                Some((m, se)) => write!(out, " {m} {se}")?,
                None => write!(out, " NaN NaN")?,
            }
        }
        writeln!(out)?;
    }
    Ok(())
}
