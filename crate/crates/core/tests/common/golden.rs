use std::path::PathBuf;

use hkf_core::ncs::{run_closed_loop, Scenario};
use hkf_core::scenario::ScenarioConfig;
use hkf_core::trace;

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Scripted scenarios with stored traces: `(name, config)`. Each config
/// lives next to its trace as `<name>.json`.
pub const CASES: [&str; 3] = ["scripted", "ca_blackout", "se_delays"];

pub fn load(name: &str) -> ScenarioConfig {
    ScenarioConfig::load(&golden_dir().join(format!("{name}.json"))).expect("golden config")
}

pub fn render(scenario: &Scenario) -> String {
    let out = run_closed_loop(scenario).expect("golden run");
    trace::trace_to_string(&out.records).expect("csv")
}

/// Steps at which the scripted scenarios must fall back to `u^d`.
pub fn expected_default_steps(name: &str, horizon: usize) -> Vec<usize> {
    match name {
        "scripted" => vec![6, 7, 8],
        "ca_blackout" => (0..horizon).collect(),
        "se_delays" => vec![4, 5, 6, 7, 8, 9],
        _ => unreachable!(),
    }
}
