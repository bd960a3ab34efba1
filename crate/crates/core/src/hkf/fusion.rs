//! Controller-side processing of the received local variables.
//!
//! The controller keeps one [`NodeLedger`] per sensor. Every step it advances
//! each node's correction matrix `Δ_i(k)` and input correction `x^u_i(k)`
//! with the known applied input. Neither depends on measurement values, so
//! the controller can track them for every sensor. When a packet carrying
//! `x_i(t)` arrives, it is stored. At fusion time each node's last received
//! variables are caught up to the current step and summed, and the result
//! is de-biased with `Δ_f⁻¹`.

use std::collections::{BTreeMap, VecDeque};

use crate::error::{Error, Result};
use crate::hkf::local::LocalEstimateState;
use crate::hkf::schedule::HypothesizedSchedule;
use crate::linalg::{self, Mat, Vector};

/// Default lower bound on `rcond(Δ_f)` for a de-biased estimate.
pub const DEFAULT_MIN_RCOND: f64 = 1e-10;

/// `x_f = Σ x_i`, `Δ_f = Σ Δ_i` over states of one step and stage.
pub fn fuse(states: &[LocalEstimateState]) -> Result<(Vector, Mat)> {
    let first = states
        .first()
        .ok_or_else(|| Error::Fusion("empty fusion group".into()))?;
    let mut x = Vector::zeros(first.x_info.len());
    let mut delta = Mat::zeros(first.delta.nrows(), first.delta.ncols());
    for s in states {
        if s.step != first.step || s.stage != first.stage {
            return Err(Error::Fusion(format!(
                "sensor {} at step {} ({:?}) cannot be fused with sensor {} at step {} ({:?})",
                s.sensor_id, s.step, s.stage, first.sensor_id, first.step, first.stage
            )));
        }
        x += &s.x_info;
        delta += &s.delta;
    }
    Ok((x, delta))
}

/// `Δ_f⁻¹ (x_f + x^u_f)`, or `None` while `Δ_f` is too ill-conditioned.
pub fn debias(x_f: &Vector, delta_f: &Mat, xu_f: &Vector, min_rcond: f64) -> Option<Vector> {
    let inv = linalg::checked_inverse(delta_f, min_rcond)?;
    Some(inv * (x_f + xu_f))
}

/// Controller-side per-node variables at one step, computed as if every
/// measurement of the node had been processed.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeVars {
    /// `Δ_i(t)`.
    pub delta: Mat,
    /// `x^u_i(t)`.
    pub xu: Vector,
    /// `M_i(t) = Σ_{s<t} G(s,t) Δ_i(s) A⁻¹`; for constant inputs `u ≡ b`,
    /// `x^u_i(t) = M_i(t) B b`.
    pub transfer: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedEstimate {
    pub step: usize,
    pub x_info: Vector,
}

/// Caught-up variables `(x̆_i(k), Δ̆_i(k), x̆^u_i(k))`.
#[derive(Debug, Clone, PartialEq)]
pub struct CaughtUp {
    pub sensor_id: usize,
    pub from_step: usize,
    pub x_info: Vector,
    pub delta: Mat,
    pub xu: Vector,
}

/// Applied inputs kept for catch-up, `u_t` for `t ≥ first_step`.
#[derive(Debug, Clone, Default)]
pub struct InputLog {
    first_step: usize,
    inputs: VecDeque<Vector>,
}

impl InputLog {
    pub fn push(&mut self, u: Vector) {
        self.inputs.push_back(u);
    }

    /// Number of the next input to be recorded.
    pub fn end(&self) -> usize {
        self.first_step + self.inputs.len()
    }

    pub fn get(&self, t: usize) -> Result<&Vector> {
        t.checked_sub(self.first_step)
            .and_then(|i| self.inputs.get(i))
            .ok_or_else(|| Error::Bookkeeping(format!("input u_{t} is not buffered")))
    }

    /// Drops inputs before `step`.
    pub fn prune_before(&mut self, step: usize) {
        while self.first_step < step && !self.inputs.is_empty() {
            self.inputs.pop_front();
            self.first_step += 1;
        }
    }
}

/// Controller bookkeeping for one sensor.
#[derive(Debug, Clone)]
pub struct NodeLedger {
    sensor_id: usize,
    step: usize,
    history: BTreeMap<usize, NodeVars>,
    last: Option<ReceivedEstimate>,
}

impl NodeLedger {
    /// Ledger for a sensor initialized from its first measurement:
    /// `Δ_i(0) = 0`, `x^u_i(0) = 0`.
    pub fn for_measurement_init(sensor_id: usize, n: usize) -> Self {
        let mut history = BTreeMap::new();
        history.insert(
            0,
            NodeVars {
                delta: Mat::zeros(n, n),
                xu: Vector::zeros(n),
                transfer: Mat::zeros(n, n),
            },
        );
        Self {
            sensor_id,
            step: 0,
            history,
            last: None,
        }
    }

    /// Ledger for a sensor whose step-0 variables follow from a prior known
    /// to the controller.
    pub fn for_prior_init(initial: &LocalEstimateState) -> Self {
        let n = initial.x_info.len();
        let mut history = BTreeMap::new();
        history.insert(
            0,
            NodeVars {
                delta: initial.delta.clone(),
                xu: Vector::zeros(n),
                transfer: Mat::zeros(n, n),
            },
        );
        Self {
            sensor_id: initial.sensor_id,
            step: 0,
            history,
            last: Some(ReceivedEstimate {
                step: 0,
                x_info: initial.x_info.clone(),
            }),
        }
    }

    pub fn sensor_id(&self) -> usize {
        self.sensor_id
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn last_received(&self) -> Option<&ReceivedEstimate> {
        self.last.as_ref()
    }

    pub fn vars(&self, t: usize) -> Option<&NodeVars> {
        self.history.get(&t)
    }

    pub fn current(&self) -> &NodeVars {
        self.history.get(&self.step).expect("ledger keeps the current step")
    }

    /// Advances to the next step with the input applied at the current one:
    ///
    /// * `Δ_i(k) = K_k A Δ_i(k-1) A⁻¹ + L^i_k Hᵢ`
    /// * `x^u_i(k) = K_k A (x^u_i(k-1) + Δ_i(k-1) A⁻¹ B u_{k-1})`
    /// * `M_i(k) = K_k A (M_i(k-1) + Δ_i(k-1) A⁻¹)`
    pub fn update_input_correction(&mut self, schedule: &HypothesizedSchedule, u_prev: &Vector) -> Result<&NodeVars> {
        let k = self.step + 1;
        let b = schedule.input_matrix();
        if u_prev.len() != b.ncols() {
            return Err(Error::dim("input", b.ncols(), u_prev.len()));
        }
        let a = schedule.transition();
        let a_inv = schedule.transition_inv();
        let ka = schedule.gain(k)? * a;
        let prev = self.current();
        let delta_a_inv = &prev.delta * a_inv;
        let next = NodeVars {
            delta: &ka * &delta_a_inv + schedule.sensor_gain_h(self.sensor_id, k)?,
            xu: &ka * (&prev.xu + &delta_a_inv * b * u_prev),
            transfer: &ka * (&prev.transfer + &delta_a_inv),
        };
        self.step = k;
        self.history.insert(k, next);
        Ok(self.current())
    }

    /// Stores `x_i(origin)` if it is newer than what was received before.
    /// Returns whether the packet was accepted.
    pub fn receive(&mut self, origin: usize, x_info: Vector) -> Result<bool> {
        if origin > self.step {
            return Err(Error::Bookkeeping(format!(
                "packet of sensor {} from step {origin} arrived before the controller reached it (step {})",
                self.sensor_id, self.step
            )));
        }
        if self.last.as_ref().is_some_and(|l| l.step >= origin) {
            return Ok(false);
        }
        if !self.history.contains_key(&origin) {
            return Err(Error::Bookkeeping(format!(
                "no stored correction variables for sensor {} at step {origin}",
                self.sensor_id
            )));
        }
        self.last = Some(ReceivedEstimate { step: origin, x_info });
        // Older entries can no longer be referenced.
        self.history = self.history.split_off(&origin);
        Ok(true)
    }

    /// Forward-maps the last received variables from step `t` to step `k`:
    ///
    /// * `x̆_i(k) = G(t,k) x_i(t)`
    /// * `Δ̆_i(k) = G(t,k) Δ_i(t) Φ(t,k)⁻¹`
    /// * `x̆^u_i(k) = G(t,k) (x^u_i(t) + Δ_i(t) Σ_{l=t}^{k-1} Φ(t,l+1)⁻¹ B u_l)`
    ///
    /// `None` when nothing has been received from this node yet.
    pub fn catch_up(&self, schedule: &HypothesizedSchedule, inputs: &InputLog, k: usize) -> Result<Option<CaughtUp>> {
        let Some(last) = &self.last else {
            return Ok(None);
        };
        let t = last.step;
        if k < t {
            return Err(Error::Bookkeeping(format!(
                "catch-up of sensor {} from step {t} back to step {k}",
                self.sensor_id
            )));
        }
        let vars = self
            .vars(t)
            .ok_or_else(|| Error::Bookkeeping(format!("sensor {} has no variables for step {t}", self.sensor_id)))?;
        let n = schedule.state_dim();
        let a = schedule.transition();
        let a_inv = schedule.transition_inv();
        let b = schedule.input_matrix();
        let mut gain_prod = Mat::identity(n, n);
        let mut phi_inv = Mat::identity(n, n);
        let mut input_sum = Vector::zeros(n);
        for l in t..k {
            phi_inv *= a_inv;
            input_sum += &phi_inv * b * inputs.get(l)?;
            gain_prod = schedule.gain(l + 1)? * a * gain_prod;
        }
        Ok(Some(CaughtUp {
            sensor_id: self.sensor_id,
            from_step: t,
            x_info: &gain_prod * &last.x_info,
            delta: &gain_prod * &vars.delta * phi_inv,
            xu: &gain_prod * (&vars.xu + &vars.delta * input_sum),
        }))
    }

    /// `M_i(k)` if step `k` is still stored.
    pub fn constant_input_transfer(&self, k: usize) -> Option<&Mat> {
        self.vars(k).map(|v| &v.transfer)
    }
}

/// Fused variables of the current fusion group.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedVariables {
    pub step: usize,
    pub members: Vec<usize>,
    pub x: Vector,
    pub delta: Mat,
    pub xu: Vector,
}

impl FusedVariables {
    pub fn debias(&self, min_rcond: f64) -> Option<Vector> {
        debias(&self.x, &self.delta, &self.xu, min_rcond)
    }

    /// `‖Δ_f − I‖_F`.
    pub fn delta_deviation(&self) -> f64 {
        let n = self.delta.nrows();
        (&self.delta - Mat::identity(n, n)).norm()
    }
}

/// Controller-side estimator state.
#[derive(Debug, Clone)]
pub struct FusionCenter {
    nodes: Vec<NodeLedger>,
    inputs: InputLog,
    min_rcond: f64,
}

impl FusionCenter {
    /// Fusion center for measurement-initialized sensors.
    pub fn new(schedule: &HypothesizedSchedule, min_rcond: f64) -> Self {
        let n = schedule.state_dim();
        Self {
            nodes: (0..schedule.num_sensors())
                .map(|i| NodeLedger::for_measurement_init(i, n))
                .collect(),
            inputs: InputLog::default(),
            min_rcond,
        }
    }

    /// Fusion center whose nodes start from known step-0 prior variables.
    pub fn with_priors(initial: &[LocalEstimateState], min_rcond: f64) -> Self {
        Self {
            nodes: initial.iter().map(NodeLedger::for_prior_init).collect(),
            inputs: InputLog::default(),
            min_rcond,
        }
    }

    pub fn step(&self) -> usize {
        self.nodes.first().map_or(0, NodeLedger::step)
    }

    pub fn min_rcond(&self) -> f64 {
        self.min_rcond
    }

    pub fn nodes(&self) -> &[NodeLedger] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &NodeLedger {
        &self.nodes[i]
    }

    /// Moves to the next step given the input applied at the current one.
    pub fn advance(&mut self, schedule: &HypothesizedSchedule, u_prev: &Vector) -> Result<()> {
        for node in &mut self.nodes {
            node.update_input_correction(schedule, u_prev)?;
        }
        self.inputs.push(u_prev.clone());
        Ok(())
    }

    /// Accepts `x_i(origin)` unless a packet at least as recent was seen.
    pub fn receive(&mut self, sensor_id: usize, origin: usize, x_info: Vector) -> Result<bool> {
        let node = self
            .nodes
            .get_mut(sensor_id)
            .ok_or_else(|| Error::Bookkeeping(format!("unknown sensor {sensor_id}")))?;
        let accepted = node.receive(origin, x_info)?;
        if accepted {
            self.prune_inputs();
        }
        Ok(accepted)
    }

    fn prune_inputs(&mut self) {
        let oldest = self
            .nodes
            .iter()
            .map(|n| n.last_received().map_or(0, |l| l.step))
            .min()
            .unwrap_or(0);
        self.inputs.prune_before(oldest);
    }

    /// Catches up every node heard from and sums the results. `None` while
    /// the fusion group is empty.
    pub fn fused(&self, schedule: &HypothesizedSchedule) -> Result<Option<FusedVariables>> {
        let k = self.step();
        let n = schedule.state_dim();
        let mut members = Vec::new();
        let mut x = Vector::zeros(n);
        let mut delta = Mat::zeros(n, n);
        let mut xu = Vector::zeros(n);
        for node in &self.nodes {
            if let Some(c) = node.catch_up(schedule, &self.inputs, k)? {
                members.push(c.sensor_id);
                x += c.x_info;
                delta += c.delta;
                xu += c.xu;
            }
        }
        if members.is_empty() {
            return Ok(None);
        }
        Ok(Some(FusedVariables {
            step: k,
            members,
            x,
            delta,
            xu,
        }))
    }

    /// Fused variables and, when `Δ_f` is well-conditioned, the de-biased
    /// estimate.
    pub fn estimate(&self, schedule: &HypothesizedSchedule) -> Result<(Option<FusedVariables>, Option<Vector>)> {
        let fused = self.fused(schedule)?;
        let estimate = fused.as_ref().and_then(|f| f.debias(self.min_rcond));
        Ok((fused, estimate))
    }

    /// `Σ_i M_i(k)` over all nodes at the current step.
    pub fn fused_transfer(&self) -> Option<Mat> {
        let k = self.step();
        let mut it = self.nodes.iter().map(|n| n.constant_input_transfer(k));
        let first = it.next()??.clone();
        it.try_fold(first, |acc, m| Some(acc + m?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hkf::local::Stage;
    use crate::hkf::schedule::{build_schedule, Hgmm, ScheduleInit};
    use crate::model::{PlantModel, SensorModel};

    fn m1(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    fn v1(v: f64) -> Vector {
        Vector::from_element(1, v)
    }

    fn state(id: usize, x: f64, d: f64) -> LocalEstimateState {
        LocalEstimateState {
            sensor_id: id,
            step: 3,
            stage: Stage::Filtered,
            x_info: v1(x),
            delta: m1(d),
        }
    }

    fn scalar_schedule() -> HypothesizedSchedule {
        let plant = PlantModel::new(m1(1.0), m1(1.0), m1(1.0), Vector::zeros(1), m1(1.0)).unwrap();
        let sensors = vec![SensorModel::new(0, m1(1.0), m1(1.0)).unwrap()];
        build_schedule(
            &plant,
            &sensors,
            &Hgmm::constant(m1(1.0)).unwrap(),
            ScheduleInit::Measurement,
            6,
        )
        .unwrap()
    }

    #[test]
    fn fuse_examples() {
        let single = state(0, 2.0, 0.5);
        let (x, d) = fuse(std::slice::from_ref(&single)).unwrap();
        assert_eq!((x[0], d[(0, 0)]), (2.0, 0.5));
        let (x, d) = fuse(&[state(0, 2.0, 0.5), state(1, 3.0, 0.5)]).unwrap();
        assert_eq!((x[0], d[(0, 0)]), (5.0, 1.0));
        let mut late = state(1, 3.0, 0.5);
        late.step = 4;
        assert!(matches!(fuse(&[state(0, 2.0, 0.5), late]), Err(Error::Fusion(_))));
        assert!(fuse(&[]).is_err());
    }

    #[test]
    fn debias_examples() {
        let x = Vector::from_vec(vec![1.0, 2.0]);
        let xu = Vector::from_vec(vec![0.5, -1.0]);
        assert_eq!(
            debias(&x, &Mat::identity(2, 2), &xu, DEFAULT_MIN_RCOND).unwrap(),
            &x + &xu
        );
        let singular = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(debias(&x, &singular, &xu, DEFAULT_MIN_RCOND).is_none());
    }

    #[test]
    fn input_correction_scalar_hand_values() {
        let s = scalar_schedule();
        let mut node = NodeLedger::for_measurement_init(0, 1);
        // k = 1: Δ_0 = 0 and K_1 = 0 force x^u(1) = 0 whatever u_0 is.
        let v = node.update_input_correction(&s, &v1(5.0)).unwrap();
        assert_eq!(v.xu[0], 0.0);
        assert!((v.delta[(0, 0)] - 1.0).abs() < 1e-15);
        // k = 2 with u_1 = 1: K_2 Δ_1 B u_1 = 1/3.
        let v = node.update_input_correction(&s, &v1(1.0)).unwrap();
        assert!((v.xu[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((v.delta[(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_inputs_give_zero_correction() {
        let s = scalar_schedule();
        let mut node = NodeLedger::for_measurement_init(0, 1);
        for _ in 0..6 {
            assert_eq!(node.update_input_correction(&s, &v1(0.0)).unwrap().xu[0], 0.0);
        }
        assert!(node.update_input_correction(&s, &v1(0.0)).is_err(), "beyond horizon");
    }

    #[test]
    fn transfer_starts_at_zero_and_matches_constant_input() {
        let s = scalar_schedule();
        let mut node = NodeLedger::for_measurement_init(0, 1);
        let b = 0.8;
        node.update_input_correction(&s, &v1(b)).unwrap();
        assert_eq!(node.constant_input_transfer(1).unwrap()[(0, 0)], 0.0);
        for k in 2..=6 {
            node.update_input_correction(&s, &v1(b)).unwrap();
            let v = node.vars(k).unwrap();
            assert!(((&v.transfer * s.input_matrix() * v1(b))[0] - v.xu[0]).abs() < 1e-14);
        }
    }

    #[test]
    fn receive_keeps_most_recent_only() {
        let s = scalar_schedule();
        let mut node = NodeLedger::for_measurement_init(0, 1);
        for _ in 0..4 {
            node.update_input_correction(&s, &v1(0.0)).unwrap();
        }
        assert!(node.receive(3, v1(1.0)).unwrap());
        assert!(!node.receive(2, v1(9.0)).unwrap());
        assert!(!node.receive(3, v1(9.0)).unwrap());
        assert_eq!(node.last_received().unwrap().x_info[0], 1.0);
        assert!(node.vars(2).is_none(), "pruned below last received");
        assert!(node.receive(5, v1(0.0)).is_err(), "future packet");
        assert!(node.receive(4, v1(2.0)).unwrap());
    }

    #[test]
    fn catch_up_without_gap_is_identity() {
        let s = scalar_schedule();
        let mut fc = FusionCenter::new(&s, DEFAULT_MIN_RCOND);
        fc.advance(&s, &v1(0.3)).unwrap();
        fc.advance(&s, &v1(0.1)).unwrap();
        fc.receive(0, 2, v1(1.7)).unwrap();
        let c = fc.node(0).catch_up(&s, &fc.inputs, 2).unwrap().unwrap();
        assert_eq!(c.x_info[0], 1.7);
        assert_eq!(c.delta, fc.node(0).vars(2).unwrap().delta);
        assert_eq!(c.xu, fc.node(0).vars(2).unwrap().xu);
    }

    #[test]
    fn missing_inputs_are_a_bookkeeping_error() {
        let s = scalar_schedule();
        let node = {
            let mut n = NodeLedger::for_measurement_init(0, 1);
            n.update_input_correction(&s, &v1(0.0)).unwrap();
            n.update_input_correction(&s, &v1(0.0)).unwrap();
            n.receive(1, v1(1.0)).unwrap();
            n
        };
        let empty = InputLog::default();
        assert!(matches!(node.catch_up(&s, &empty, 2), Err(Error::Bookkeeping(_))));
    }

    #[test]
    fn empty_group_has_no_estimate() {
        let s = scalar_schedule();
        let mut fc = FusionCenter::new(&s, DEFAULT_MIN_RCOND);
        fc.advance(&s, &v1(0.0)).unwrap();
        let (fused, est) = fc.estimate(&s).unwrap();
        assert!(fused.is_none() && est.is_none());
    }
}
