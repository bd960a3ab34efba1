//! Stored traces of scripted scenarios. `UPDATE_GOLDEN=1` rewrites them.

mod common;

use common::golden::{expected_default_steps, golden_dir, load, render, CASES};

#[test]
fn traces_match_golden_files() {
    let update = std::env::var_os("UPDATE_GOLDEN").is_some_and(|v| v == "1");
    for name in CASES {
        let scenario = load(name).build().unwrap();
        let text = render(&scenario);
        let path = golden_dir().join(format!("{name}.csv"));
        if update {
            std::fs::write(&path, &text).unwrap();
            continue;
        }
        let stored = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing {}", path.display()));
        assert!(stored == text, "{name}: trace differs from {}", path.display());
    }
}

#[test]
fn default_input_exactly_at_scripted_steps() {
    for name in CASES {
        let scenario = load(name).build().unwrap();
        let out = hkf_core::ncs::run_closed_loop(&scenario).unwrap();
        let got: Vec<usize> = out
            .records
            .iter()
            .filter(|r| r.applied_origin.is_none())
            .map(|r| r.step)
            .collect();
        assert_eq!(got, expected_default_steps(name, scenario.horizon), "{name}");
        for r in out.records.iter().filter(|r| r.applied_origin.is_none()) {
            assert_eq!(r.u_applied, scenario.default_input, "{name} step {}", r.step);
        }
    }
}

#[test]
fn stored_traces_parse_back() {
    for name in CASES {
        let path = golden_dir().join(format!("{name}.csv"));
        let Ok(text) = std::fs::read_to_string(&path) else {
            continue;
        };
        let records = hkf_core::trace::read_trace(text.as_bytes()).unwrap();
        assert_eq!(hkf_core::trace::trace_to_string(&records).unwrap(), text);
    }
}
