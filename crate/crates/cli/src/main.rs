use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use wncs::config::{validate_scenario, ConfigError, PolicyKind, ScenarioConfig, ValidationErrors};
use wncs::harness::{
    run_campaign, run_episode, run_fig2a, run_fig2b, run_fig2c, summarize, write_fig2a_csv, write_gnuplot,
    write_summary_csv, write_trace_csv, CampaignResult, EpisodeOptions, HarnessError, MeasurementSource,
    FIG2A_DELAYS, FIG2A_SIGMA_P2, FIG2B_SWEEP, FIG2C_P, FIG2C_WINDOWS,
};
use wncs::scheduler::{Scheduler, SchedulerContext};

#[derive(Parser)]
#[command(name = "wncs", version, about = "Delayed-observation LQG simulator with sensor scheduling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario file and print its hash.
    Validate { scenario: PathBuf },
    /// Run every seed of a scenario with its configured policy.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo error against the analytic recursion for constant delays.
    Fig2a(Campaign),
    /// Policy comparison over the noise variance of the always-on sensor.
    Fig2b(Campaign),
    /// Window-size comparison over the observation probability.
    Fig2c(Campaign),
    /// Per-slot trace of one seed as CSV.
    Trace {
        scenario: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Output file (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct Campaign {
    /// Number of seeds (1..=K).
    #[arg(long)]
    seeds: Option<u64>,
    /// Output directory for CSV and gnuplot files.
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

fn load(path: &Path) -> Result<ScenarioConfig> {
    let cfg = ScenarioConfig::from_path(path)?;
    Ok(validate_scenario(cfg)?)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn emit(results: &[CampaignResult], dir: &Path, stem: &str) -> Result<()> {
    let rows = summarize(results)?;
    write_summary_csv(create(dir, &format!("{stem}.csv"))?, &rows)?;
    write_gnuplot(create(dir, &format!("{stem}.dat"))?, &rows)?;
    let mut stdout = io::stdout().lock();
    writeln!(stdout, "{:>10} {:>10} {:>12} {:>10} {:>6}", "sweep", "policy", "mean_J", "stderr", "seeds")?;
    for r in &rows {
        writeln!(
            stdout,
            "{:>10} {:>10} {:>12.6} {:>10.6} {:>6}",
            r.sweep, r.policy, r.mean_j, r.stderr_j, r.seeds
        )?;
    }
    Ok(())
}

fn check_stable(results: &[CampaignResult]) -> Result<()> {
    let aborted: usize = results.iter().map(|r| r.aborted.len()).sum();
    if aborted > 0 {
        bail!("{aborted} episode(s) became unstable");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate { scenario } => {
            let cfg = load(&scenario)?;
            println!("ok {}", cfg.config_hash());
        }
        Command::Run { scenario, out } => {
            let cfg = load(&scenario)?;
            let res = run_campaign(&cfg, MeasurementSource::Scheduled, "run", 0.0)?;
            let results = [res];
            match out {
                Some(dir) => emit(&results, &dir, "run")?,
                None => write_summary_csv(io::stdout().lock(), &summarize(&results)?)?,
            }
            check_stable(&results)?;
        }
        Command::Fig2a(c) => {
            let rows = run_fig2a(&FIG2A_SIGMA_P2, &FIG2A_DELAYS, c.seeds.unwrap_or(100))?;
            write_fig2a_csv(create(&c.out, "fig2a.csv")?, &rows)?;
            println!("{:>8} {:>4} {:>10} {:>10}", "sigma_p2", "tau", "mc_ratio", "baseline");
            for r in &rows {
                println!("{:>8} {:>4} {:>10.5} {:>10.5}", r.sigma_p2, r.tau, r.mc_ratio, r.baseline_ratio);
            }
        }
        Command::Fig2b(c) => {
            let policies = [
                PolicyKind::SlidingWindow { window: 4 },
                PolicyKind::Greedy,
                PolicyKind::AgeMinimal,
                PolicyKind::VarianceMinimal,
                PolicyKind::Random,
            ];
            let results = run_fig2b(&FIG2B_SWEEP, &policies, c.seeds.unwrap_or(200))?;
            emit(&results, &c.out, "fig2b")?;
            check_stable(&results)?;
        }
        Command::Fig2c(c) => {
            let results = run_fig2c(&FIG2C_P, &FIG2C_WINDOWS, c.seeds.unwrap_or(200))?;
            emit(&results, &c.out, "fig2c")?;
            check_stable(&results)?;
        }
        Command::Trace { scenario, seed, out } => {
            let cfg = load(&scenario)?;
            let scheduler = Scheduler::new(cfg.experiment.policy, &SchedulerContext::from_config(&cfg));
            let options = EpisodeOptions {
                keep_trace: true,
                keep_records: false,
            };
            let ep = run_episode(&cfg, &scheduler, MeasurementSource::Scheduled, seed, options)?;
            let trace = ep.trace.as_deref().unwrap_or_default();
            match out {
                Some(path) => {
                    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                    write_trace_csv(BufWriter::new(f), trace)?;
                }
                None => write_trace_csv(io::stdout().lock(), trace)?,
            }
            if let Some(t) = ep.aborted_at {
                bail!("state became non-finite at slot {t}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let invalid = e.downcast_ref::<ValidationErrors>().is_some()
                || e.downcast_ref::<ConfigError>().is_some()
                || matches!(e.downcast_ref::<HarnessError>(), Some(HarnessError::Config(_)));
            if invalid {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
