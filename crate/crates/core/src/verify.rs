//! Oracle equivalence suite for a configured system.
//!
//! Every identity compares the recursive implementation against the
//! brute-force forms in [`crate::oracle`] and reports its worst relative
//! residual `‖a − b‖ / max(‖a‖, ‖b‖, 1)`.

use std::fmt;

use rand_distr::StandardNormal;

use crate::error::Result;
use crate::hkf::{
    build_schedule, FusionCenter, Hgmm, HypothesizedSchedule, LocalEstimateState, NodeVars, ScheduleInit,
};
use crate::linalg::{self, Mat, Vector};
use crate::model::{measure, substream, StreamId};
use crate::ncs::{run_closed_loop, AckMode, Channel, EstimatorKind, InitMode, Scenario};
use crate::oracle::{self, InitialTerms};

/// Longest horizon the O(k³) sum formulas are evaluated on.
pub const MAX_VERIFY_HORIZON: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Adds `1e-6·I` to every recursively computed local `Δ`.
    CorruptDelta,
}

#[derive(Debug, Clone, Default)]
pub struct VerifyOptions {
    pub fault: Option<Fault>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityResult {
    pub name: &'static str,
    pub worst: f64,
    pub tolerance: f64,
    pub checked: usize,
    /// Reason the identity does not apply to this system.
    pub skipped: Option<String>,
}

impl IdentityResult {
    pub fn passed(&self) -> bool {
        self.skipped.is_some() || self.worst <= self.tolerance
    }
}

impl fmt::Display for IdentityResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.skipped {
            Some(why) => write!(f, "SKIP {:<22} {why}", self.name),
            None => write!(
                f,
                "{} {:<22} worst {:.3e} tol {:.0e} ({} checks)",
                if self.passed() { "PASS" } else { "FAIL" },
                self.name,
                self.worst,
                self.tolerance,
                self.checked
            ),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct VerifyReport {
    pub results: Vec<IdentityResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(IdentityResult::passed)
    }

    pub fn failures(&self) -> Vec<&'static str> {
        self.results.iter().filter(|r| !r.passed()).map(|r| r.name).collect()
    }

    pub fn get(&self, name: &str) -> Option<&IdentityResult> {
        self.results.iter().find(|r| r.name == name)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.results {
            writeln!(f, "{r}")?;
        }
        write!(
            f,
            "{}",
            if self.passed() {
                "all identities hold"
            } else {
                "verification FAILED"
            }
        )
    }
}

struct Tracker {
    name: &'static str,
    tolerance: f64,
    worst: f64,
    checked: usize,
}

impl Tracker {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            tolerance,
            worst: 0.0,
            checked: 0,
        }
    }

    fn mat(&mut self, a: &Mat, b: &Mat) {
        self.push(linalg::rel_err_mat(a, b));
    }

    fn vec(&mut self, a: &Vector, b: &Vector) {
        self.push(linalg::rel_err_vec(a, b));
    }

    fn push(&mut self, e: f64) {
        self.checked += 1;
        // NaN residuals count as failures.
        if e.is_nan() || e > self.worst {
            self.worst = if e.is_nan() { f64::INFINITY } else { e };
        }
    }

    fn done(self) -> IdentityResult {
        IdentityResult {
            name: self.name,
            worst: self.worst,
            tolerance: self.tolerance,
            checked: self.checked,
            skipped: None,
        }
    }
}

fn skipped(name: &'static str, tolerance: f64, why: impl Into<String>) -> IdentityResult {
    IdentityResult {
        name,
        worst: 0.0,
        tolerance,
        checked: 0,
        skipped: Some(why.into()),
    }
}

/// Open-loop data: excitation inputs, noisy states and measurements, and the
/// recursive local variables of every sensor.
pub struct VerifyData {
    pub horizon: usize,
    pub schedule: HypothesizedSchedule,
    pub init: InitialTerms,
    /// `inputs[t] = u_t`, `t = 0..K`.
    pub inputs: Vec<Vector>,
    /// `states[k] = x_k`, `k = 0..=K`.
    pub states: Vec<Vector>,
    /// `measurements[i][t-1] = z^i_t`.
    pub measurements: Vec<Vec<Vector>>,
    /// `locals[i][k]`, `None` before initialization.
    pub locals: Vec<Vec<Option<LocalEstimateState>>>,
    /// `ledger[k][i]`: controller-side variables of sensor `i` at step `k`.
    pub ledger: Vec<Vec<NodeVars>>,
}

fn initial_states(schedule: &HypothesizedSchedule, scenario: &Scenario) -> Result<Vec<LocalEstimateState>> {
    let m = scenario.sensors.len();
    let share = scenario.model.p0() * m as f64;
    (0..m)
        .map(|i| LocalEstimateState::init_from_prior(schedule, i, scenario.model.x0_mean(), &share))
        .collect()
}

fn fusion_center(data_schedule: &HypothesizedSchedule, priors: Option<&[LocalEstimateState]>) -> FusionCenter {
    match priors {
        Some(p) => FusionCenter::with_priors(p, crate::hkf::fusion::DEFAULT_MIN_RCOND),
        None => FusionCenter::new(data_schedule, crate::hkf::fusion::DEFAULT_MIN_RCOND),
    }
}

impl VerifyData {
    pub fn generate(scenario: &Scenario, horizon: usize, fault: Option<Fault>) -> Result<Self> {
        let model = &scenario.model;
        let n = model.state_dim();
        let m_sensors = scenario.sensors.len();
        let seed = scenario.seed;
        let init_mode = scenario.estimator.init;
        let schedule_init = match init_mode {
            InitMode::Measurement => ScheduleInit::Measurement,
            InitMode::Prior => ScheduleInit::Prior(model.p0().clone()),
        };
        let schedule = build_schedule(model, &scenario.sensors, &scenario.hgmm, schedule_init, horizon)?;

        let mut excitation = substream(seed, StreamId::Excitation);
        let inputs: Vec<Vector> = (0..horizon)
            .map(|_| {
                Vector::from_fn(model.input_dim(), |_, _| {
                    rand::Rng::sample(&mut excitation, StandardNormal)
                })
            })
            .collect();
        let mut plant_rng = substream(seed, StreamId::Plant);
        let mut states = vec![model.sample_initial(&mut substream(seed, StreamId::InitialState))];
        for u in &inputs {
            let next = crate::model::step_plant(model, states.last().unwrap(), u, &mut plant_rng)?;
            states.push(next);
        }
        let measurements: Vec<Vec<Vector>> = scenario
            .sensors
            .iter()
            .map(|s| {
                let mut rng = substream(seed, StreamId::Sensor(s.id()));
                (1..=horizon)
                    .map(|t| measure(s, &states[t], &mut rng))
                    .collect::<Result<_>>()
            })
            .collect::<Result<_>>()?;

        let priors = match init_mode {
            InitMode::Prior => Some(initial_states(&schedule, scenario)?),
            InitMode::Measurement => None,
        };
        let init = match &priors {
            Some(p) => InitialTerms::Prior {
                x: p.iter().map(|s| s.x_info.clone()).collect(),
                delta: p.iter().map(|s| s.delta.clone()).collect(),
            },
            None => InitialTerms::Measurement,
        };

        let corrupt = |mut s: LocalEstimateState| {
            if fault == Some(Fault::CorruptDelta) {
                s.delta += Mat::identity(n, n) * 1e-6;
            }
            s
        };
        let mut locals = Vec::with_capacity(m_sensors);
        for (i, sensor) in scenario.sensors.iter().enumerate() {
            let mut hist = vec![priors.as_ref().map(|p| p[i].clone())];
            for t in 1..=horizon {
                let z = &measurements[i][t - 1];
                let next = match hist[t - 1].as_ref() {
                    None => LocalEstimateState::init_from_measurement(&schedule, sensor, z)?,
                    Some(s) => s.predict(model)?.filter(&schedule, sensor, z)?,
                };
                hist.push(Some(corrupt(next)));
            }
            locals.push(hist);
        }

        let mut center = fusion_center(&schedule, priors.as_deref());
        let mut ledger = vec![center.nodes().iter().map(|nd| nd.current().clone()).collect::<Vec<_>>()];
        for u in &inputs {
            center.advance(&schedule, u)?;
            ledger.push(center.nodes().iter().map(|nd| nd.current().clone()).collect());
        }

        Ok(Self {
            horizon,
            schedule,
            init,
            inputs,
            states,
            measurements,
            locals,
            ledger,
        })
    }

    fn local_delta(&self, i: usize, k: usize) -> Mat {
        let n = self.schedule.state_dim();
        self.locals[i][k]
            .as_ref()
            .map_or_else(|| Mat::zeros(n, n), |s| s.delta.clone())
    }

    fn local_x(&self, i: usize, k: usize) -> Vector {
        let n = self.schedule.state_dim();
        self.locals[i][k]
            .as_ref()
            .map_or_else(|| Vector::zeros(n), |s| s.x_info.clone())
    }
}

/// Runs the whole suite.
pub fn verify(scenario: &Scenario, opts: &VerifyOptions) -> Result<VerifyReport> {
    let horizon = scenario.horizon.min(MAX_VERIFY_HORIZON);
    let data = VerifyData::generate(scenario, horizon, opts.fault)?;
    let mut results = vec![
        check_schedule(scenario, &data),
        check_gain_composition(&data)?,
        check_transition_algebra(&data),
    ];
    results.extend(check_sums(&data)?);
    results.push(check_additivity(&data)?);
    results.push(check_inner_term(scenario, &data)?);
    results.push(check_noise_free(scenario)?);
    results.push(check_central(scenario)?);
    results.push(check_catch_up(scenario, &data)?);
    results.push(check_constant_transfer(scenario, &data)?);
    Ok(VerifyReport { results })
}

fn check_schedule(scenario: &Scenario, data: &VerifyData) -> IdentityResult {
    let s = &data.schedule;
    let n = s.state_dim();
    let mut t = Tracker::new("schedule", 1e-9);
    let eye = Mat::identity(n, n);
    for k in 1..=data.horizon {
        let (Ok(cx), Ok(gain), Ok(pred)) = (s.cx(k), s.gain(k), s.cx_pred(k)) else {
            t.push(f64::INFINITY);
            continue;
        };
        let info = s.hgmm().at(k);
        t.mat(&(gain + cx * info), &eye);
        let prev = if k == 1 { s.cx(0).ok() } else { s.cx(k - 1).ok() };
        match (prev, pred) {
            (Some(prev), Some(pred)) => {
                let want_pred = s.transition() * prev * s.transition().transpose() + scenario.model.xi();
                t.mat(pred, &want_pred);
                match linalg::checked_inverse(pred, 1e-14) {
                    Some(pred_inv) => {
                        match linalg::checked_inverse(&(&pred_inv + info), 1e-14) {
                            Some(c) => t.mat(cx, &c),
                            None => t.push(f64::INFINITY),
                        }
                        t.mat(gain, &(cx * pred_inv));
                    }
                    None => t.push(f64::INFINITY),
                }
            }
            (None, None) => match linalg::checked_inverse(info, 1e-14) {
                Some(c) => t.mat(cx, &c),
                None => t.push(f64::INFINITY),
            },
            _ => t.push(f64::INFINITY),
        }
        for (i, sensor) in scenario.sensors.iter().enumerate() {
            match s.sensor_gain(i, k) {
                Ok(l) => t.mat(l, &(cx * sensor.h().transpose() * sensor.theta_inv())),
                Err(_) => t.push(f64::INFINITY),
            }
        }
    }
    t.done()
}

fn check_gain_composition(data: &VerifyData) -> Result<IdentityResult> {
    let s = &data.schedule;
    let mut t = Tracker::new("gain_composition", 1e-9);
    let k_max = data.horizon;
    let stride = (k_max / 10).max(1);
    for l in (0..=k_max).step_by(stride) {
        for m in (l..=k_max).step_by(stride) {
            for k in (m..=k_max).step_by(stride) {
                let lhs = oracle::gain_product(s, m, k)? * oracle::gain_product(s, l, m)?;
                t.mat(&lhs, &oracle::gain_product(s, l, k)?);
            }
        }
        if l < k_max {
            let one = s.gain(l + 1)? * s.transition();
            t.mat(&oracle::gain_product(s, l, l + 1)?, &one);
        }
    }
    Ok(t.done())
}

fn check_transition_algebra(data: &VerifyData) -> IdentityResult {
    let s = &data.schedule;
    let a = s.transition();
    let a_inv = s.transition_inv();
    let n = s.state_dim();
    let mut tr = Tracker::new("transition_algebra", 1e-9);
    let k = data.horizon.min(20);
    for t in 0..=k {
        tr.mat(
            &(oracle::transition_product(a, a_inv, t, k) * oracle::transition_inverse(a_inv, t, k)),
            &Mat::identity(n, n),
        );
        for l in t..k {
            let lhs = oracle::transition_inverse(a_inv, t, k) * oracle::transition_product(a, a_inv, l + 1, k);
            tr.mat(&lhs, &oracle::transition_inverse(a_inv, t, l + 1));
        }
        tr.mat(
            &oracle::transition_product(a, a_inv, k, t),
            &oracle::transition_inverse(a_inv, t, k),
        );
    }
    tr.done()
}

fn check_sums(data: &VerifyData) -> Result<Vec<IdentityResult>> {
    let s = &data.schedule;
    let m = s.num_sensors();
    let mut tx = Tracker::new("x_sum", 1e-8);
    let mut td = Tracker::new("delta_sum", 1e-8);
    let mut tu = Tracker::new("xu_sum", 1e-8);
    for i in 0..m {
        let group = [i];
        let deltas = oracle::delta_history(s, &data.init, &group, &oracle::all_measurements, data.horizon)?;
        for k in 1..=data.horizon {
            let want_x =
                oracle::x_sum_formula(s, &data.init, &data.measurements, &group, &oracle::all_measurements, k)?;
            tx.vec(&data.local_x(i, k), &want_x);
            let want_d = oracle::delta_sum_formula(s, &data.init, &group, &oracle::all_measurements, k)?;
            td.mat(&data.local_delta(i, k), &want_d);
            td.mat(&data.ledger[k][i].delta, &want_d);
            let want_u = oracle::xu_sum_formula(s, &deltas, &data.inputs, k)?;
            tu.vec(&data.ledger[k][i].xu, &want_u);
        }
    }
    Ok(vec![tx.done(), td.done(), tu.done()])
}

fn check_additivity(data: &VerifyData) -> Result<IdentityResult> {
    let s = &data.schedule;
    let group: Vec<usize> = (0..s.num_sensors()).collect();
    let n = s.state_dim();
    let mut t = Tracker::new("xu_additivity", 1e-10);
    let deltas = oracle::delta_history(s, &data.init, &group, &oracle::all_measurements, data.horizon)?;
    for k in 1..=data.horizon {
        let sum = data.ledger[k].iter().fold(Vector::zeros(n), |acc, v| acc + &v.xu);
        t.vec(&sum, &oracle::xu_sum_formula(s, &deltas, &data.inputs, k)?);
    }
    Ok(t.done())
}

fn check_inner_term(scenario: &Scenario, data: &VerifyData) -> Result<IdentityResult> {
    const NAME: &str = "inner_term";
    if scenario.estimator.init != InitMode::Measurement {
        return Ok(skipped(NAME, 1e-9, "stated for measurement initialization"));
    }
    let s = &data.schedule;
    let m = s.num_sensors();
    let n = s.state_dim();
    let group: Vec<usize> = (0..m).collect();
    let mut t = Tracker::new(NAME, 1e-9);
    for k in 1..=data.horizon {
        for l in 0..k {
            let delta_l = (0..m).fold(Mat::zeros(n, n), |acc, i| acc + data.local_delta(i, l));
            let (lhs, rhs) = oracle::inner_term_identity(s, &delta_l, &group, l, k)?;
            t.mat(&lhs, &rhs);
        }
    }
    Ok(t.done())
}

/// Noise-free closed loop through the configured channels:
/// `x_f + x^u_f = Δ_f x_k` wherever a fusion group exists.
fn check_noise_free(scenario: &Scenario) -> Result<IdentityResult> {
    const NAME: &str = "noise_free_exactness";
    if scenario.estimator.kind != EstimatorKind::Hkf {
        return Ok(skipped(NAME, 1e-8, "needs the hkf estimator"));
    }
    let mut s = scenario.clone();
    s.noiseless = true;
    let out = run_closed_loop(&s)?;
    let mut t = Tracker::new(NAME, 1e-8);
    for (k, f) in out.fused.iter().enumerate() {
        if let Some(f) = f {
            t.vec(&(&f.x + &f.xu), &(&f.delta * &out.states[k]));
        }
    }
    Ok(t.done())
}

/// Matched hypothesis and perfect channels: the de-biased estimate equals
/// the central Kalman filter mean.
fn check_central(scenario: &Scenario) -> Result<IdentityResult> {
    const NAME: &str = "central_equivalence";
    let mut s = scenario.clone();
    s.hgmm = Hgmm::matched(&s.sensors)?;
    s.se_channels = vec![Channel::perfect(AckMode::None); s.sensors.len()];
    s.ca_channel = Channel::perfect(AckMode::TcpLike);
    s.estimator.adapt = None;
    if s.estimator.init == InitMode::Measurement && linalg::checked_inverse(s.hgmm.at(1), 1e-14).is_none() {
        return Ok(skipped(NAME, 1e-9, "total measurement information is singular"));
    }
    s.estimator.kind = EstimatorKind::Hkf;
    let hkf = run_closed_loop(&s)?;
    s.estimator.kind = EstimatorKind::Central;
    let central = run_closed_loop(&s)?;
    let mut t = Tracker::new(NAME, 1e-9);
    for (a, b) in hkf.records.iter().zip(&central.records) {
        match (&a.estimate, &b.estimate) {
            (Some(x), Some(y)) => t.vec(x, y),
            (None, None) => {}
            _ => t.push(f64::INFINITY),
        }
    }
    Ok(t.done())
}

/// Seeded loss/delay pattern on the SE links; at every step the fused,
/// caught-up variables equal the truncated sum formulas.
fn check_catch_up(scenario: &Scenario, data: &VerifyData) -> Result<IdentityResult> {
    let channel = Channel::new(0.4, &[0.5, 0.3, 0.2], AckMode::None)?;
    catch_up_residual("catch_up", data, &channel, scenario.seed)
}

/// Worst residual of catch-up + fuse + debias against the truncated-sum
/// oracle under one seeded channel pattern.
pub fn catch_up_residual(
    name: &'static str,
    data: &VerifyData,
    channel: &Channel,
    pattern_seed: u64,
) -> Result<IdentityResult> {
    let s = &data.schedule;
    let m = s.num_sensors();
    let n = s.state_dim();
    let priors = match &data.init {
        InitialTerms::Prior { .. } => Some(
            (0..m)
                .map(|i| data.locals[i][0].clone().expect("prior state"))
                .collect::<Vec<_>>(),
        ),
        InitialTerms::Measurement => None,
    };
    let mut center = fusion_center(s, priors.as_deref());
    let mut arrivals: Vec<Vec<(usize, usize)>> = vec![Vec::new(); data.horizon + 1];
    let mut rngs: Vec<_> = (0..m)
        .map(|i| substream(pattern_seed, StreamId::SensorChannel(i)))
        .collect();
    for k in 1..=data.horizon {
        for (i, rng) in rngs.iter_mut().enumerate() {
            if let Some(at) = channel.send(k, rng).delivered_at() {
                if at <= data.horizon {
                    arrivals[at].push((i, k));
                }
            }
        }
    }
    let mut t = Tracker::new(name, 1e-8);
    for (k, due) in arrivals.iter().enumerate() {
        if k >= 1 {
            center.advance(s, &data.inputs[k - 1])?;
        }
        for &(i, origin) in due {
            center.receive(i, origin, data.local_x(i, origin))?;
        }
        let Some(fused) = center.fused(s)? else {
            continue;
        };
        let mut x = Vector::zeros(n);
        let mut delta = Mat::zeros(n, n);
        let mut xu = Vector::zeros(n);
        for &i in &fused.members {
            let last = center.node(i).last_received().expect("member has data").step;
            let included = move |_: usize, tt: usize| tt <= last;
            x += oracle::x_sum_formula(s, &data.init, &data.measurements, &[i], &included, k)?;
            delta += oracle::delta_sum_formula(s, &data.init, &[i], &included, k)?;
            let deltas = oracle::delta_history(s, &data.init, &[i], &included, k)?;
            xu += oracle::xu_sum_formula(s, &deltas, &data.inputs, k)?;
        }
        t.vec(&fused.x, &x);
        t.mat(&fused.delta, &delta);
        t.vec(&fused.xu, &xu);
        if let (Some(est), Some(inv)) = (
            fused.debias(crate::hkf::fusion::DEFAULT_MIN_RCOND),
            linalg::checked_inverse(&delta, crate::hkf::fusion::DEFAULT_MIN_RCOND),
        ) {
            t.vec(&est, &(inv * (&x + &xu)));
        }
    }
    Ok(t.done())
}

/// `M_i(k) B b` against the input-correction recursion driven by `u ≡ b`.
fn check_constant_transfer(scenario: &Scenario, data: &VerifyData) -> Result<IdentityResult> {
    let s = &data.schedule;
    let mut excitation = substream(scenario.seed ^ 0x5eed, StreamId::Excitation);
    let b_vec = Vector::from_fn(scenario.model.input_dim(), |_, _| {
        rand::Rng::sample::<f64, _>(&mut excitation, StandardNormal)
    });
    let priors = match &data.init {
        InitialTerms::Prior { .. } => Some(
            (0..s.num_sensors())
                .map(|i| data.locals[i][0].clone().expect("prior state"))
                .collect::<Vec<_>>(),
        ),
        InitialTerms::Measurement => None,
    };
    let mut center = fusion_center(s, priors.as_deref());
    let mut t = Tracker::new("constant_transfer", 1e-10);
    let bb = s.input_matrix() * &b_vec;
    for _ in 1..=data.horizon {
        center.advance(s, &b_vec)?;
        for node in center.nodes() {
            let vars = node.current();
            t.vec(&(&vars.transfer * &bb), &vars.xu);
        }
    }
    Ok(t.done())
}
