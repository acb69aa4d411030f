//! Scenario configuration, the multirate runner, run logs and metrics.

pub mod config;
pub mod log;
pub mod metrics;
pub mod scenario;
pub mod trajectory;

pub use config::{ConfigError, Mode, ScenarioConfig};
pub use log::{LogRow, RunLog};
pub use metrics::{compare_runs, compute_metrics, declare_convergence, MetricReport};
pub use scenario::{run_modes, run_scenario, RunError};
