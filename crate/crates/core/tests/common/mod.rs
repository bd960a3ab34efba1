#![allow(dead_code)]

use std::sync::Arc;

use hkf_core::hkf::Hgmm;
use hkf_core::linalg::{Mat, Vector};
use hkf_core::model::{PlantModel, SensorModel};
use hkf_core::ncs::{
    default_feedback_law, AckMode, Channel, EstimatorKind, EstimatorSettings, FeedbackLaw, InitMode, LqrHorizon,
    Scenario,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub struct System {
    pub model: PlantModel,
    pub sensors: Vec<SensorModel>,
}

fn randn(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn spd(rng: &mut ChaCha8Rng, n: usize, scale: f64, floor: f64) -> Mat {
    let s = randn(rng, n, n);
    (&s * s.transpose()) * (scale / n as f64) + Mat::identity(n, n) * floor
}

/// Random plant with `n` states, `m` inputs and `sensors` sensors whose
/// stacked measurement information is invertible. Every singular value of
/// `A` lies in `[0.85, 1.02]`: the `Δ` recursion propagates rounding errors
/// by `E ↦ K A E A⁻¹`, which grows when the spectrum of `A` is spread.
pub fn random_system(seed: u64, n: usize, m: usize, sensors: usize) -> System {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let u = randn(&mut rng, n, n).qr().q();
        let v = randn(&mut rng, n, n).qr().q();
        let s = Vector::from_fn(n, |_, _| rng.random_range(0.85..1.02));
        let a = &u * Mat::from_diagonal(&s) * v.transpose();
        let b = randn(&mut rng, n, m);
        let xi = spd(&mut rng, n, 0.05, 0.001);
        let p0 = spd(&mut rng, n, 1.0, 0.1);
        let x0 = Vector::from_fn(n, |_, _| rng.sample(StandardNormal));
        let model = PlantModel::new(a, b, xi, x0, p0).expect("valid plant");
        let mut dims: Vec<usize> = (0..sensors).map(|_| rng.random_range(1..=n)).collect();
        let total: usize = dims.iter().sum();
        if total < n {
            dims[0] += n - total;
        }
        let sensors: Vec<SensorModel> = dims
            .iter()
            .enumerate()
            .map(|(i, &q)| SensorModel::new(i, randn(&mut rng, q, n), spd(&mut rng, q, 0.5, 0.05)).unwrap())
            .collect();
        let info = hkf_core::model::total_information(&sensors).unwrap();
        if hkf_core::linalg::rcond(&info) < 1e-6 {
            continue;
        }
        return System { model, sensors };
    }
}

/// Random system with dimensions drawn from the seed:
/// `n ∈ 1..=4`, `m ∈ 1..=2`, `M ∈ 1..=3`.
pub fn random_sized_system(seed: u64) -> System {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xd1b5_4a32_d192_ed03);
    let n = rng.random_range(1..=4);
    let m = rng.random_range(1..=2);
    let sensors = rng.random_range(1..=3);
    random_system(seed, n, m, sensors)
}

pub fn lqr(model: &PlantModel) -> Arc<dyn FeedbackLaw> {
    let n = model.state_dim();
    let m = model.input_dim();
    Arc::new(
        default_feedback_law(
            model.a(),
            model.b(),
            &Mat::identity(n, n),
            &Mat::identity(m, m),
            LqrHorizon::Finite(200),
        )
        .unwrap(),
    )
}

/// Perfect-network, matched-HGMM scenario with an LQR law.
pub fn scenario(sys: &System, horizon: usize, seed: u64) -> Scenario {
    let n = sys.model.state_dim();
    let m = sys.model.input_dim();
    Scenario {
        model: sys.model.clone(),
        sensors: sys.sensors.clone(),
        hgmm: Hgmm::matched(&sys.sensors).unwrap(),
        horizon,
        se_channels: vec![Channel::perfect(AckMode::None); sys.sensors.len()],
        ca_channel: Channel::perfect(AckMode::TcpLike),
        n_a: 2,
        default_input: Vector::zeros(m),
        law: Some(lqr(&sys.model)),
        q: Mat::identity(n, n),
        r: Mat::identity(m, m),
        estimator: EstimatorSettings {
            kind: EstimatorKind::Hkf,
            init: InitMode::Measurement,
            min_rcond: hkf_core::hkf::fusion::DEFAULT_MIN_RCOND,
            adapt: None,
        },
        noiseless: false,
        seed,
    }
}

pub fn rel(a: &Vector, b: &Vector) -> f64 {
    hkf_core::linalg::rel_err_vec(a, b)
}
pub mod golden;
