//! Scenario files, runs, verification reports and plots behind the
//! `wavefield` binary.

pub mod config;
pub mod convergence;
pub mod output;
pub mod presets;
pub mod render;
pub mod runs;
pub mod verify;

pub use config::{parse_config, parse_config_str, ScenarioConfig};
pub use convergence::{run_convergence, Study};
pub use output::RunManifest;
pub use render::render_snapshots;
pub use runs::{run_constrained, run_dequantize, run_field, run_schrodinger, run_spectrum, Scenario};
pub use verify::{run_verify, VerifyReport};
