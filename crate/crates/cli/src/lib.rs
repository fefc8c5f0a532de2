//! Batch front-end for the anosov-lab toolkit: run configurations, the
//! analysis pipeline and its JSON/CSV reports.

pub mod config;
pub mod pipeline;
pub mod report;

pub use config::{Analysis, ConfigError, ModelSpec, RunConfig};
pub use pipeline::{run_analysis, run_on_model, write_outputs, RunError, RunOutput};
pub use report::RunReport;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: u8 = 0;
    /// Reserved by clap for usage errors as well.
    pub const CONFIG: u8 = 2;
    pub const MODEL: u8 = 3;
    /// The run finished but at least one requested analysis failed.
    pub const ANALYSIS: u8 = 4;
}
