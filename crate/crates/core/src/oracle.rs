//! Brute-force reference computations.
//!
//! Everything here is the literal, non-recursive form: ordered gain and
//! transition products, sum formulas for `x`, `Δ` and `x^u`, the noise-free
//! measurement mean and a centralized information-form Kalman filter. The
//! sums are O(k²) and meant for test-scale horizons.
//!
//! Index convention, used throughout the crate:
//!
//! * `Φ(l,k) = A_{k-1}⋯A_l`, `Φ(k,k) = I`. For `l > k`, `Φ(l,k)` denotes
//!   `Φ(k,l)⁻¹`.
//! * `G(l,k) = K_k A_{k-1} K_{k-1} A_{k-2} ⋯ K_{l+1} A_l`, `G(k,k) = I`: it
//!   consumes the gains of steps `l+1..=k` and the dynamics of steps
//!   `l..k`. For `l > k`, `G(l,k)` denotes `G(k,l)⁻¹`.

use crate::error::{Error, Result};
use crate::hkf::schedule::HypothesizedSchedule;
use crate::linalg::{self, Mat, Vector};
use crate::model::{rollout_true_state, PlantModel, SensorModel};

/// `Φ(l,k)` with the reverse convention for `l > k`.
pub fn transition_product(a: &Mat, a_inv: &Mat, l: usize, k: usize) -> Mat {
    let n = a.nrows();
    let mut out = Mat::identity(n, n);
    if l <= k {
        for _ in l..k {
            out = a * out;
        }
    } else {
        for _ in k..l {
            out = a_inv * out;
        }
    }
    out
}

/// `Φ(l,k)⁻¹ = A_l⁻¹ ⋯ A_{k-1}⁻¹` for `l ≤ k`.
pub fn transition_inverse(a_inv: &Mat, l: usize, k: usize) -> Mat {
    let n = a_inv.nrows();
    let mut out = Mat::identity(n, n);
    for _ in l..k {
        out *= a_inv;
    }
    out
}

/// `G(l,k)` for `0 ≤ l ≤ k ≤ horizon`.
pub fn gain_product(schedule: &HypothesizedSchedule, l: usize, k: usize) -> Result<Mat> {
    if l > k || k > schedule.horizon() {
        return Err(Error::Index(format!(
            "gain product G({l},{k}) outside 0 ≤ l ≤ k ≤ {}",
            schedule.horizon()
        )));
    }
    let n = schedule.state_dim();
    let a = schedule.transition();
    let mut out = Mat::identity(n, n);
    for t in l..k {
        out = schedule.gain(t + 1)? * a * out;
    }
    Ok(out)
}

/// `G(l,k)` including the reverse convention `G(l,k) = G(k,l)⁻¹` for `l > k`.
pub fn gain_product_signed(schedule: &HypothesizedSchedule, l: usize, k: usize) -> Result<Mat> {
    if l <= k {
        return gain_product(schedule, l, k);
    }
    let g = gain_product(schedule, k, l)?;
    linalg::checked_inverse(&g, 1e-14).ok_or_else(|| Error::Singular(format!("G({k},{l}) is not invertible")))
}

/// Which measurement terms enter a sum: `included(sensor, t)`.
pub type Inclusion<'a> = &'a dyn Fn(usize, usize) -> bool;

/// Every measurement of every sensor.
pub fn all_measurements(_: usize, _: usize) -> bool {
    true
}

/// Step-0 variables entering the sums; zero under measurement initialization.
#[derive(Debug, Clone)]
pub enum InitialTerms {
    Measurement,
    Prior { x: Vec<Vector>, delta: Vec<Mat> },
}

impl InitialTerms {
    fn x(&self, i: usize) -> Option<&Vector> {
        match self {
            InitialTerms::Measurement => None,
            InitialTerms::Prior { x, .. } => x.get(i),
        }
    }

    fn delta(&self, i: usize) -> Option<&Mat> {
        match self {
            InitialTerms::Measurement => None,
            InitialTerms::Prior { delta, .. } => delta.get(i),
        }
    }
}

/// `Σ_{i∈G} [G(0,k) x_i(0)] + Σ_{t=1}^{k} G(t,k) Σ_{i∈G} L^i_t z^i_t`.
///
/// `measurements[i][t-1]` is `z^i_t`.
pub fn x_sum_formula(
    schedule: &HypothesizedSchedule,
    init: &InitialTerms,
    measurements: &[Vec<Vector>],
    group: &[usize],
    included: Inclusion<'_>,
    k: usize,
) -> Result<Vector> {
    let n = schedule.state_dim();
    let mut out = Vector::zeros(n);
    for &i in group {
        if let Some(x0) = init.x(i) {
            out += gain_product(schedule, 0, k)? * x0;
        }
    }
    for t in 1..=k {
        let mut inner = Vector::zeros(n);
        for &i in group {
            if included(i, t) {
                let z = measurements
                    .get(i)
                    .and_then(|m| m.get(t - 1))
                    .ok_or_else(|| Error::Index(format!("measurement of sensor {i} at step {t}")))?;
                inner += schedule.sensor_gain(i, t)? * z;
            }
        }
        out += gain_product(schedule, t, k)? * inner;
    }
    Ok(out)
}

/// `Σ_{i∈G} [G(0,k) Δ_i(0) Φ(0,k)⁻¹] + Σ_{t=1}^{k} G(t,k) (Σ_{i∈G} L^i_t Hᵢ) Φ(t,k)⁻¹`.
pub fn delta_sum_formula(
    schedule: &HypothesizedSchedule,
    init: &InitialTerms,
    group: &[usize],
    included: Inclusion<'_>,
    k: usize,
) -> Result<Mat> {
    let n = schedule.state_dim();
    let a_inv = schedule.transition_inv();
    let mut out = Mat::zeros(n, n);
    for &i in group {
        if let Some(d0) = init.delta(i) {
            out += gain_product(schedule, 0, k)? * d0 * transition_inverse(a_inv, 0, k);
        }
    }
    for t in 1..=k {
        let mut inner = Mat::zeros(n, n);
        for &i in group {
            if included(i, t) {
                inner += schedule.sensor_gain_h(i, t)?;
            }
        }
        out += gain_product(schedule, t, k)? * inner * transition_inverse(a_inv, t, k);
    }
    Ok(out)
}

/// `Σ_{t=0}^{k-1} G(t,k) Δ(t) A⁻¹ B u_t` with `deltas[t] = Δ(t)`.
pub fn xu_sum_formula(schedule: &HypothesizedSchedule, deltas: &[Mat], inputs: &[Vector], k: usize) -> Result<Vector> {
    if deltas.len() < k || inputs.len() < k {
        return Err(Error::Index(format!(
            "x^u sum to step {k} needs {k} correction matrices and inputs"
        )));
    }
    let n = schedule.state_dim();
    let a_inv = schedule.transition_inv();
    let b = schedule.input_matrix();
    let mut out = Vector::zeros(n);
    for t in 0..k {
        out += gain_product(schedule, t, k)? * &deltas[t] * a_inv * b * &inputs[t];
    }
    Ok(out)
}

/// Correction matrices `Δ(0..k)` of a group, evaluated from the sum formula.
pub fn delta_history(
    schedule: &HypothesizedSchedule,
    init: &InitialTerms,
    group: &[usize],
    included: Inclusion<'_>,
    k: usize,
) -> Result<Vec<Mat>> {
    (0..k)
        .map(|t| delta_sum_formula(schedule, init, group, included, t))
        .collect()
}

/// Both sides of the inner-term identity
/// `G(l,k) Δ_f(l) A⁻¹ = Σ_{t=1}^{l} G(t,k) (Σ_i L^i_t Hᵢ) Φ(t,l+1)⁻¹`
/// (measurement initialization), with `delta_l` supplied by the caller.
pub fn inner_term_identity(
    schedule: &HypothesizedSchedule,
    delta_l: &Mat,
    group: &[usize],
    l: usize,
    k: usize,
) -> Result<(Mat, Mat)> {
    let a_inv = schedule.transition_inv();
    let lhs = gain_product(schedule, l, k)? * delta_l * a_inv;
    let n = schedule.state_dim();
    let mut rhs = Mat::zeros(n, n);
    for t in 1..=l {
        let mut inner = Mat::zeros(n, n);
        for &i in group {
            inner += schedule.sensor_gain_h(i, t)?;
        }
        rhs += gain_product(schedule, t, k)? * inner * transition_inverse(a_inv, t, l + 1);
    }
    Ok((lhs, rhs))
}

/// Noise-free measurement mean `H (Σ_{l<k} Φ(l+1,k) B u_l + Φ(0,k) x̄₀)`.
pub fn measurement_mean(
    model: &PlantModel,
    sensor: &SensorModel,
    x0_mean: &Vector,
    inputs: &[Vector],
    k: usize,
) -> Result<Vector> {
    Ok(sensor.h() * rollout_true_state(model, x0_mean, inputs, None, k)?)
}

/// Mean and covariance of a centralized Kalman filter.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralEstimate {
    pub mean: Vector,
    pub cov: Mat,
}

/// Initializes from the first measurements alone (zero prior information):
/// `C = (Σ Hᵀ Θ⁻¹ H)⁻¹`, `mean = C Σ Hᵀ Θ⁻¹ z`.
pub fn central_kf_init(n: usize, measurements: &[(&SensorModel, &Vector)]) -> Result<CentralEstimate> {
    let (info, vec) = information_terms(n, measurements);
    let cov = linalg::checked_inverse(&info, 1e-14)
        .ok_or_else(|| Error::Singular("initial measurement information".into()))?;
    Ok(CentralEstimate {
        mean: &cov * vec,
        cov: linalg::symmetrize(&cov),
    })
}

/// Predict with `u_{k-1}`, then update with every measurement of step `k`
/// in information form:
/// `C_k = (C_{k|k-1}⁻¹ + Σ Hᵀ Θ⁻¹ H)⁻¹`,
/// `mean = C_k (Σ Hᵀ Θ⁻¹ z + C_{k|k-1}⁻¹ (A mean + B u))`.
pub fn central_kf_step(
    prior: &CentralEstimate,
    measurements: &[(&SensorModel, &Vector)],
    u_prev: &Vector,
    model: &PlantModel,
) -> Result<CentralEstimate> {
    let n = model.state_dim();
    let pred_mean = model.a() * &prior.mean + model.b() * u_prev;
    let pred_cov = model.a() * &prior.cov * model.a().transpose() + model.xi();
    if measurements.is_empty() {
        return Ok(CentralEstimate {
            mean: pred_mean,
            cov: pred_cov,
        });
    }
    let pred_info =
        linalg::checked_inverse(&pred_cov, 1e-14).ok_or_else(|| Error::Singular("predicted covariance".into()))?;
    let (info, vec) = information_terms(n, measurements);
    let cov = linalg::checked_inverse(&(&pred_info + info), 1e-14)
        .ok_or_else(|| Error::Singular("posterior information".into()))?;
    let mean = &cov * (vec + pred_info * pred_mean);
    Ok(CentralEstimate {
        mean,
        cov: linalg::symmetrize(&cov),
    })
}

/// Same step in covariance form with the stacked measurement model.
pub fn central_kf_step_covariance_form(
    prior: &CentralEstimate,
    measurements: &[(&SensorModel, &Vector)],
    u_prev: &Vector,
    model: &PlantModel,
) -> Result<CentralEstimate> {
    let n = model.state_dim();
    let pred_mean = model.a() * &prior.mean + model.b() * u_prev;
    let pred_cov = model.a() * &prior.cov * model.a().transpose() + model.xi();
    if measurements.is_empty() {
        return Ok(CentralEstimate {
            mean: pred_mean,
            cov: pred_cov,
        });
    }
    let q: usize = measurements.iter().map(|(s, _)| s.output_dim()).sum();
    let mut h = Mat::zeros(q, n);
    let mut r = Mat::zeros(q, q);
    let mut z = Vector::zeros(q);
    let mut row = 0;
    for (s, y) in measurements {
        let qi = s.output_dim();
        h.view_mut((row, 0), (qi, n)).copy_from(s.h());
        r.view_mut((row, row), (qi, qi)).copy_from(s.theta());
        z.rows_mut(row, qi).copy_from(y);
        row += qi;
    }
    let innovation_cov = &h * &pred_cov * h.transpose() + r;
    let s_inv = linalg::checked_inverse(&innovation_cov, 1e-14)
        .ok_or_else(|| Error::Singular("innovation covariance".into()))?;
    let gain = &pred_cov * h.transpose() * s_inv;
    let mean = &pred_mean + &gain * (z - &h * &pred_mean);
    let cov = (Mat::identity(n, n) - &gain * &h) * &pred_cov;
    Ok(CentralEstimate {
        mean,
        cov: linalg::symmetrize(&cov),
    })
}

fn information_terms(n: usize, measurements: &[(&SensorModel, &Vector)]) -> (Mat, Vector) {
    let mut info = Mat::zeros(n, n);
    let mut vec = Vector::zeros(n);
    for (s, z) in measurements {
        let ht_rinv = s.h().transpose() * s.theta_inv();
        info += &ht_rinv * s.h();
        vec += ht_rinv * *z;
    }
    (info, vec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hkf::schedule::{build_schedule, Hgmm, ScheduleInit};

    fn m1(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    fn v1(v: f64) -> Vector {
        Vector::from_element(1, v)
    }

    fn scalar_schedule(horizon: usize) -> (PlantModel, HypothesizedSchedule) {
        let plant = PlantModel::new(m1(1.0), m1(1.0), m1(1.0), Vector::zeros(1), m1(1.0)).unwrap();
        let sensors = vec![SensorModel::new(0, m1(1.0), m1(1.0)).unwrap()];
        let s = build_schedule(
            &plant,
            &sensors,
            &Hgmm::constant(m1(1.0)).unwrap(),
            ScheduleInit::Measurement,
            horizon,
        )
        .unwrap();
        (plant, s)
    }

    fn two_dim(horizon: usize) -> (PlantModel, HypothesizedSchedule) {
        let plant = PlantModel::new(
            Mat::from_row_slice(2, 2, &[1.0, 0.1, -0.05, 0.95]),
            Mat::from_row_slice(2, 1, &[0.0, 1.0]),
            Mat::from_row_slice(2, 2, &[0.1, 0.0, 0.0, 0.2]),
            Vector::zeros(2),
            Mat::identity(2, 2),
        )
        .unwrap();
        let sensors = vec![
            SensorModel::new(0, Mat::from_row_slice(1, 2, &[1.0, 0.0]), m1(0.5)).unwrap(),
            SensorModel::new(1, Mat::from_row_slice(1, 2, &[0.3, 1.0]), m1(2.0)).unwrap(),
        ];
        let hgmm = Hgmm::scaled_matched(&sensors, 0.7).unwrap();
        let s = build_schedule(&plant, &sensors, &hgmm, ScheduleInit::Measurement, horizon).unwrap();
        (plant, s)
    }

    #[test]
    fn gain_product_examples() {
        let (_, s) = two_dim(8);
        assert_eq!(gain_product(&s, 4, 4).unwrap(), Mat::identity(2, 2));
        let single = gain_product(&s, 4, 5).unwrap();
        assert!((single - s.gain(5).unwrap() * s.transition()).amax() < 1e-15);
        let composed = gain_product(&s, 3, 5).unwrap() * gain_product(&s, 1, 3).unwrap();
        assert!(linalg::rel_err_mat(&gain_product(&s, 1, 5).unwrap(), &composed) < 1e-12);
        assert!(gain_product(&s, 5, 4).is_err());
        assert!(gain_product(&s, 1, 9).is_err());
    }

    #[test]
    fn reverse_gain_convention() {
        let (_, s) = two_dim(8);
        let fwd = gain_product(&s, 2, 6).unwrap();
        let rev = gain_product_signed(&s, 6, 2).unwrap();
        assert!((fwd * rev - Mat::identity(2, 2)).amax() < 1e-10);
    }

    #[test]
    fn transition_index_algebra() {
        let a = Mat::from_row_slice(2, 2, &[1.1, 0.3, -0.2, 0.9]);
        let a_inv = a.clone().try_inverse().unwrap();
        let k: usize = 9;
        for t in 0..=k {
            for l in t.saturating_sub(1)..k {
                if t > l + 1 {
                    continue;
                }
                let lhs = transition_inverse(&a_inv, t, k) * transition_product(&a, &a_inv, l + 1, k);
                let rhs = transition_inverse(&a_inv, t, l + 1);
                assert!(linalg::rel_err_mat(&lhs, &rhs) < 1e-12, "t={t} l={l}");
            }
        }
        assert!(linalg::rel_err_mat(&transition_product(&a, &a_inv, 5, 2), &transition_inverse(&a_inv, 2, 5)) < 1e-14);
    }

    #[test]
    fn x_sum_trivial_cases() {
        let (_, s) = scalar_schedule(4);
        let zeros = vec![vec![v1(0.0); 4]];
        assert_eq!(
            x_sum_formula(&s, &InitialTerms::Measurement, &zeros, &[0], &all_measurements, 4).unwrap()[0],
            0.0
        );
        let z = vec![vec![v1(4.0), v1(1.0)]];
        let x1 = x_sum_formula(&s, &InitialTerms::Measurement, &z, &[0], &all_measurements, 1).unwrap();
        assert!((x1[0] - 4.0).abs() < 1e-15);
        let x2 = x_sum_formula(&s, &InitialTerms::Measurement, &z, &[0], &all_measurements, 2).unwrap();
        assert!((x2[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn delta_sum_first_step_and_matched_identity() {
        let (_, s) = two_dim(5);
        let d1 = delta_sum_formula(&s, &InitialTerms::Measurement, &[0, 1], &all_measurements, 1).unwrap();
        let want = s.sensor_gain_h(0, 1).unwrap() + s.sensor_gain_h(1, 1).unwrap();
        assert!((d1 - want).amax() < 1e-15);

        let plant = PlantModel::new(
            Mat::from_row_slice(2, 2, &[1.0, 0.1, -0.05, 0.95]),
            Mat::from_row_slice(2, 1, &[0.0, 1.0]),
            Mat::from_row_slice(2, 2, &[0.1, 0.0, 0.0, 0.2]),
            Vector::zeros(2),
            Mat::identity(2, 2),
        )
        .unwrap();
        let matched = build_schedule(
            &plant,
            s.sensors(),
            &Hgmm::matched(s.sensors()).unwrap(),
            ScheduleInit::Measurement,
            30,
        )
        .unwrap();
        for k in 1..=30 {
            let d = delta_sum_formula(&matched, &InitialTerms::Measurement, &[0, 1], &all_measurements, k).unwrap();
            assert!((d - Mat::identity(2, 2)).amax() < 1e-9, "k={k}");
        }
    }

    #[test]
    fn xu_sum_zero_inputs() {
        let (_, s) = two_dim(6);
        let deltas = delta_history(&s, &InitialTerms::Measurement, &[0, 1], &all_measurements, 6).unwrap();
        let u = vec![v1(0.0); 6];
        assert_eq!(xu_sum_formula(&s, &deltas, &u, 6).unwrap(), Vector::zeros(2));
        assert!(xu_sum_formula(&s, &deltas, &u, 7).is_err());
    }

    #[test]
    fn measurement_mean_examples() {
        let plant = PlantModel::new(m1(2.0), m1(1.0), m1(0.0), Vector::zeros(1), m1(1.0)).unwrap();
        let sensor = SensorModel::new(0, m1(1.0), m1(1.0)).unwrap();
        let ones = vec![v1(1.0); 3];
        assert_eq!(measurement_mean(&plant, &sensor, &v1(0.0), &ones, 3).unwrap()[0], 7.0);
        let zeros = vec![v1(0.0); 3];
        assert_eq!(measurement_mean(&plant, &sensor, &v1(0.0), &zeros, 3).unwrap()[0], 0.0);
    }

    #[test]
    fn central_kf_scalar_hand_values() {
        let plant = PlantModel::new(m1(1.0), m1(1.0), m1(1.0), Vector::zeros(1), m1(1.0)).unwrap();
        let sensor = SensorModel::new(0, m1(1.0), m1(1.0)).unwrap();
        let z1 = v1(4.0);
        let e1 = central_kf_init(1, &[(&sensor, &z1)]).unwrap();
        assert!((e1.cov[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((e1.mean[0] - 4.0).abs() < 1e-15);
        let z2 = v1(1.0);
        let e2 = central_kf_step(&e1, &[(&sensor, &z2)], &v1(0.0), &plant).unwrap();
        assert!((e2.cov[(0, 0)] - 2.0 / 3.0).abs() < 1e-15);
        assert!((e2.mean[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn central_kf_no_sensors_is_prediction() {
        let (plant, _) = two_dim(1);
        let prior = CentralEstimate {
            mean: Vector::from_vec(vec![1.0, 2.0]),
            cov: Mat::identity(2, 2),
        };
        let u = v1(0.5);
        let e = central_kf_step(&prior, &[], &u, &plant).unwrap();
        assert_eq!(e.mean, plant.a() * &prior.mean + plant.b() * &u);
        assert_eq!(e.cov, plant.a() * &prior.cov * plant.a().transpose() + plant.xi());
    }

    #[test]
    fn central_kf_forms_agree_and_sequential_equals_stacked() {
        let (plant, s) = two_dim(1);
        let prior = CentralEstimate {
            mean: Vector::from_vec(vec![0.3, -0.4]),
            cov: Mat::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]),
        };
        let za = v1(0.7);
        let zb = v1(-1.3);
        let meas = [(&s.sensors()[0], &za), (&s.sensors()[1], &zb)];
        let u = v1(0.2);
        let info = central_kf_step(&prior, &meas, &u, &plant).unwrap();
        let cov = central_kf_step_covariance_form(&prior, &meas, &u, &plant).unwrap();
        assert!(linalg::rel_err_vec(&info.mean, &cov.mean) < 1e-10);
        assert!(linalg::rel_err_mat(&info.cov, &cov.cov) < 1e-10);

        // Sequential: predict+first sensor, then a zero-dynamics update with the second.
        let ident = PlantModel::new(
            Mat::identity(2, 2),
            Mat::zeros(2, 1),
            Mat::zeros(2, 2),
            Vector::zeros(2),
            Mat::identity(2, 2),
        )
        .unwrap();
        let first = central_kf_step(&prior, &meas[..1], &u, &plant).unwrap();
        let second = central_kf_step(&first, &meas[1..], &v1(0.0), &ident).unwrap();
        assert!(linalg::rel_err_vec(&info.mean, &second.mean) < 1e-10);
    }
}
