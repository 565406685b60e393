//! Seeded Monte-Carlo episodes and campaigns.

mod campaign;
mod episode;
pub mod stats;

use thiserror::Error;

use crate::analytics::AnalyticsError;
use crate::config::ValidationErrors;
use crate::estimator::EstimatorError;
use crate::lqg::LqgError;
use crate::scheduler::ScheduleError;
use crate::traffic::ChannelError;

pub use campaign::{
    fig2a_config, fig2b_config, fig2c_config, read_summary_csv, run_campaign, run_fig2a, run_fig2b, run_fig2c,
    summarize, write_fig2a_csv, write_gnuplot, write_summary_csv, CampaignResult, Fig2aRow, SummaryRow,
    FIG2A_DELAYS, FIG2A_NOISE_VAR, FIG2A_SIGMA_P2, FIG2B_SWEEP, FIG2C_P, FIG2C_WINDOWS,
};
pub use episode::{run_episode, write_trace_csv, EpisodeOptions, EpisodeResult, MeasurementSource, SlotTrace};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid scenario: {0}")]
    Config(#[from] ValidationErrors),
    #[error(transparent)]
    Lqg(#[from] LqgError),
    #[error("policy bug: {0}")]
    Schedule(#[from] ScheduleError),
    #[error("policy bug: {0}")]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error("no campaign results to summarise")]
    EmptyResults,
    #[error("cannot aggregate campaigns with horizons {0} and {1}")]
    MixedHorizon(u64, u64),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
