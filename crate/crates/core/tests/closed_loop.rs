mod common;

use std::sync::Arc;

use hkf_core::experiment::{hgmm_sweep, monte_carlo, BatchOptions};
use hkf_core::hkf::Hgmm;
use hkf_core::linalg::Vector;
use hkf_core::model::derive_run_seed;
use hkf_core::ncs::{run_closed_loop, AckMode, Channel, ConstantLaw, InitMode};
use hkf_core::scenario::ScenarioConfig;

fn lossy(sys: &common::System, horizon: usize, seed: u64) -> hkf_core::ncs::Scenario {
    let mut s = common::scenario(sys, horizon, seed);
    s.se_channels = vec![Channel::new(0.3, &[0.6, 0.3, 0.1], AckMode::None).unwrap(); sys.sensors.len()];
    s.ca_channel = Channel::new(0.2, &[0.7, 0.3], AckMode::TcpLike).unwrap();
    s.hgmm = Hgmm::scaled_matched(&sys.sensors, 0.6).unwrap();
    s
}

#[test]
fn noise_free_estimate_is_exact_once_available() {
    for seed in 0..8 {
        let sys = common::random_sized_system(300 + seed);
        let mut s = lossy(&sys, 40, seed);
        s.noiseless = true;
        let out = run_closed_loop(&s).unwrap();
        let mut seen = 0;
        for r in &out.records {
            if let Some(e) = &r.estimate {
                seen += 1;
                assert!(common::rel(e, &r.x_true) < 1e-8, "seed {seed} step {}", r.step);
            }
        }
        assert!(seen > 20, "seed {seed}: only {seen} estimates");
    }
}

#[test]
fn prior_init_has_an_estimate_at_step_zero() {
    let sys = common::random_system(11, 2, 1, 2);
    let mut s = lossy(&sys, 10, 3);
    s.estimator.init = InitMode::Prior;
    let out = run_closed_loop(&s).unwrap();
    let est = out.records[0].estimate.as_ref().expect("prior estimate");
    assert!(common::rel(est, sys.model.x0_mean()) < 1e-12);
}

#[test]
fn total_control_loss_applies_the_default_input() {
    let sys = common::random_system(12, 3, 2, 2);
    let mut s = common::scenario(&sys, 25, 4);
    s.ca_channel = Channel::new(1.0, &[1.0], AckMode::TcpLike).unwrap();
    s.default_input = Vector::from_vec(vec![0.3, -0.2]);
    let out = run_closed_loop(&s).unwrap();
    for r in &out.records {
        assert_eq!(r.applied_origin, None);
        assert_eq!(r.u_applied, s.default_input);
    }
}

#[test]
fn constant_law_applies_its_input_over_a_perfect_network() {
    let sys = common::random_system(13, 2, 1, 1);
    let mut s = common::scenario(&sys, 10, 0);
    s.law = Some(Arc::new(ConstantLaw(Vector::from_element(1, 0.75))));
    let out = run_closed_loop(&s).unwrap();
    assert!(out.records.iter().all(|r| r.u_applied[0] == 0.75));
}

#[test]
fn single_run_batch_matches_the_derived_seed_run() {
    let sys = common::random_system(14, 2, 1, 2);
    let s = lossy(&sys, 30, 0);
    let base = 99;
    let summary = monte_carlo(
        &s,
        BatchOptions {
            runs: 1,
            base_seed: base,
            parallel: false,
        },
    )
    .unwrap();
    let out = run_closed_loop(&s.with_seed(derive_run_seed(base, 0))).unwrap();
    let errs: Vec<f64> = out
        .records
        .iter()
        .filter_map(|r| r.estimate.as_ref().map(|e| (e - &r.x_true).norm_squared()))
        .collect();
    let mse = errs.iter().sum::<f64>() / errs.len() as f64;
    assert_eq!(summary.mse.mean, mse);
    assert_eq!(summary.cost.mean, out.total_cost);
    assert_eq!(summary.mse.se, None);
}

#[test]
fn noise_free_batch_has_zero_error() {
    let mut sys = common::random_system(15, 2, 1, 2);
    sys.model = hkf_core::model::PlantModel::new(
        sys.model.a().clone(),
        sys.model.b().clone(),
        sys.model.xi().clone(),
        Vector::zeros(2),
        sys.model.p0().clone(),
    )
    .unwrap();
    let mut s = lossy(&sys, 20, 0);
    s.noiseless = true;
    let summary = monte_carlo(
        &s,
        BatchOptions {
            runs: 5,
            base_seed: 1,
            parallel: false,
        },
    )
    .unwrap();
    assert!(summary.mse.mean < 1e-20, "{}", summary.mse.mean);
    assert!(summary.mean_error.iter().all(|e| e.mean.abs() < 1e-10));
}

#[test]
fn parallel_and_serial_batches_agree() {
    let sys = common::random_system(16, 3, 1, 3);
    let s = lossy(&sys, 25, 0);
    let serial = monte_carlo(
        &s,
        BatchOptions {
            runs: 40,
            base_seed: 5,
            parallel: false,
        },
    )
    .unwrap();
    let parallel = monte_carlo(
        &s,
        BatchOptions {
            runs: 40,
            base_seed: 5,
            parallel: true,
        },
    )
    .unwrap();
    assert_eq!(serial, parallel);
}

#[test]
fn unit_sweep_matches_the_matched_batch() {
    let sys = common::random_system(17, 2, 1, 2);
    let mut s = lossy(&sys, 20, 0);
    let opts = BatchOptions {
        runs: 30,
        base_seed: 8,
        parallel: false,
    };
    let rows = hgmm_sweep(&s, &[1.0], opts).unwrap();
    s.hgmm = Hgmm::matched(&sys.sensors).unwrap();
    let direct = monte_carlo(&s, opts).unwrap();
    assert_eq!(rows[0].mse, direct.mse);
    assert_eq!(rows[0].cost, direct.cost);
}

#[test]
fn shipped_configs_build_and_run() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut count = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = ScenarioConfig::load(&path).unwrap();
        let s = cfg.build().unwrap();
        let out = run_closed_loop(&s).unwrap();
        assert_eq!(out.records.len(), s.horizon);
        count += 1;
    }
    assert!(count >= 3);
}
