//! Configuration, run dispatch and result files.

pub mod config;
pub mod metrics;
pub mod output;
pub mod run;

pub use config::{parse_config, ResolvedRun, RunConfig, RunKind};
pub use metrics::{compare_to_exact, ErrorMetrics};
pub use output::{ResultBundle, Summary};
pub use run::{error_exit_code, run_and_write, run_command, EXIT_BUDGET, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK};
