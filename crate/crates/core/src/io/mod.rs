//! Scenario files, run artifacts and plots.

mod config;
mod output;
mod plot;

pub use config::{
    canonical_config, config_digest, digest_of, load_scenario, save_scenario, CommsSection, ScenarioFile,
    SensingSection, SystemSection, TargetSection,
};
pub use output::{epochs_csv, timestamp, write_records, OutputFormat, RunManifest, CSV_HEADER};
pub use plot::{emit_plots, rate_svg, variance_svg};
