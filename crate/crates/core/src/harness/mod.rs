//! Scenario files, sweeps, CSV results and summaries.

mod config;
mod results;
mod summarize;
mod sweep;

pub use config::{parse_config, parse_config_str, ConfigError, EnergyConstants, Lifetime, ScenarioConfig, SWEEPABLE};
pub use results::{read_csv, write_csv, ResultsError, HEADER};
pub use summarize::{linear_fit, summarize, Flag, GroupStats, Stat, Summary};
pub use sweep::{
    point_seed, run_config, run_repetitions, run_sweep, splitmix64, SweepError, SweepRow, SweepSpec, NO_PARAMETER,
    WORKERS_ENV,
};
