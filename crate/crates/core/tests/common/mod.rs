#![allow(dead_code)]

use std::path::PathBuf;

use wavefield::cli::{parse_config, ScenarioConfig};

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.json"))
}

pub fn scenario(name: &str) -> ScenarioConfig {
    parse_config(&scenario_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}
