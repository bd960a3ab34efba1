//! Time-triggered closed loop: sensors → SE channels → controller →
//! CA channel → actuator → plant.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::hkf::{
    adapt_hgmm, build_schedule, AdaptConfig, FusedVariables, FusionCenter, Hgmm, LocalEstimateState, ScheduleInit,
};
use crate::linalg::{Mat, Vector};
use crate::model::{substream, PlantModel, SensorModel, StreamId};
use crate::ncs::actuator::ActuatorBuffer;
use crate::ncs::channel::{Channel, InFlight};
use crate::ncs::controller::{FeedbackLaw, SequenceController};
use crate::ncs::cost::CostAccumulator;
use crate::ncs::packets::{ControlPacket, MeasurementPacket};
use crate::oracle::{central_kf_init, central_kf_step, CentralEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    /// Distributed sensors, fusion at the controller.
    Hkf,
    /// Every measurement reaches a central Kalman filter at its own step;
    /// the SE channels are bypassed.
    Central,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    /// Sensors start from their first measurement at step 1.
    Measurement,
    /// Every sensor starts at step 0 from `(x̄₀, M·P̄₀)`.
    Prior,
}

#[derive(Debug, Clone)]
pub struct EstimatorSettings {
    pub kind: EstimatorKind,
    pub init: InitMode,
    pub min_rcond: f64,
    pub adapt: Option<AdaptConfig>,
}

/// Fully built, validated closed-loop scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub model: PlantModel,
    pub sensors: Vec<SensorModel>,
    pub hgmm: Hgmm,
    pub horizon: usize,
    pub se_channels: Vec<Channel>,
    pub ca_channel: Channel,
    pub n_a: usize,
    pub default_input: Vector,
    pub law: Option<Arc<dyn FeedbackLaw>>,
    pub q: Mat,
    pub r: Mat,
    pub estimator: EstimatorSettings,
    /// Skips every random draw of initial state, process and measurement
    /// noise; channel draws still happen.
    pub noiseless: bool,
    pub seed: u64,
}

/// One step of a closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub step: usize,
    pub x_true: Vector,
    pub u_applied: Vector,
    pub estimate: Option<Vector>,
    /// Whether a packet of sensor `i` was accepted at this step.
    pub received: Vec<bool>,
    /// Origin step of the newest packet of sensor `i` held by the controller.
    pub origin: Vec<Option<usize>>,
    /// Origin step of the sequence the applied input came from.
    pub applied_origin: Option<usize>,
    /// `‖Δ_f − I‖_F` when a fusion group exists.
    pub delta_dev: Option<f64>,
    pub running_cost: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<TraceRecord>,
    /// Fused variables per step (HKF runs only).
    pub fused: Vec<Option<FusedVariables>>,
    /// `x_0 … x_K`.
    pub states: Vec<Vector>,
    /// Cost including the terminal term.
    pub total_cost: f64,
}

enum Estimator {
    Hkf {
        schedule: Box<crate::hkf::HypothesizedSchedule>,
        locals: Vec<Option<LocalEstimateState>>,
        fusion: FusionCenter,
        adapt_history: Vec<Mat>,
    },
    Central(Option<CentralEstimate>),
}

impl Scenario {
    pub fn state_dim(&self) -> usize {
        self.model.state_dim()
    }

    pub fn num_sensors(&self) -> usize {
        self.sensors.len()
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    fn check(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::config("horizon", "must be at least 1"));
        }
        if self.se_channels.len() != self.sensors.len() {
            return Err(Error::config(
                "network.se",
                format!("{} channels for {} sensors", self.se_channels.len(), self.sensors.len()),
            ));
        }
        if self.default_input.len() != self.model.input_dim() {
            return Err(Error::dim(
                "controller.u_default",
                self.model.input_dim(),
                self.default_input.len(),
            ));
        }
        Ok(())
    }
}

/// Runs the loop for steps `0..K` and returns one record per step.
pub fn run_closed_loop(scenario: &Scenario) -> Result<RunOutput> {
    scenario.check()?;
    let model = &scenario.model;
    let seed = scenario.seed;
    let n = model.state_dim();
    let m_sensors = scenario.sensors.len();
    let k_end = scenario.horizon;

    let mut init_rng = substream(seed, StreamId::InitialState);
    let mut plant_rng = substream(seed, StreamId::Plant);
    let mut sensor_rngs: Vec<_> = (0..m_sensors).map(|i| substream(seed, StreamId::Sensor(i))).collect();
    let mut se_rngs: Vec<_> = (0..m_sensors)
        .map(|i| substream(seed, StreamId::SensorChannel(i)))
        .collect();
    let mut ca_rng = substream(seed, StreamId::ControlChannel);

    let mut x = if scenario.noiseless {
        model.x0_mean().clone()
    } else {
        model.sample_initial(&mut init_rng)
    };

    let mut estimator = match scenario.estimator.kind {
        EstimatorKind::Central => Estimator::Central(match scenario.estimator.init {
            InitMode::Measurement => None,
            InitMode::Prior => Some(CentralEstimate {
                mean: model.x0_mean().clone(),
                cov: model.p0().clone(),
            }),
        }),
        EstimatorKind::Hkf => {
            let init = match scenario.estimator.init {
                InitMode::Measurement => ScheduleInit::Measurement,
                InitMode::Prior => ScheduleInit::Prior(model.p0().clone()),
            };
            let schedule = build_schedule(model, &scenario.sensors, &scenario.hgmm, init, k_end.max(1))?;
            let (locals, fusion) = match scenario.estimator.init {
                InitMode::Measurement => (
                    vec![None; m_sensors],
                    FusionCenter::new(&schedule, scenario.estimator.min_rcond),
                ),
                InitMode::Prior => {
                    let share = model.p0() * m_sensors as f64;
                    let init: Vec<_> = (0..m_sensors)
                        .map(|i| LocalEstimateState::init_from_prior(&schedule, i, model.x0_mean(), &share))
                        .collect::<Result<_>>()?;
                    let fusion = FusionCenter::with_priors(&init, scenario.estimator.min_rcond);
                    (init.into_iter().map(Some).collect(), fusion)
                }
            };
            Estimator::Hkf {
                schedule: Box::new(schedule),
                locals,
                fusion,
                adapt_history: Vec::new(),
            }
        }
    };

    let mut se_flight: Vec<InFlight<MeasurementPacket>> = (0..m_sensors).map(|_| InFlight::default()).collect();
    let mut ca_flight: InFlight<ControlPacket> = InFlight::default();
    let mut controller = SequenceController::new(scenario.n_a, scenario.default_input.clone(), scenario.law.clone());
    let mut actuator = ActuatorBuffer::new(scenario.default_input.clone());
    let mut cost = CostAccumulator::new(scenario.q.clone(), scenario.r.clone())?;

    let mut records = Vec::with_capacity(k_end);
    let mut fused_log = Vec::with_capacity(k_end);
    let mut states = Vec::with_capacity(k_end + 1);
    states.push(x.clone());
    let mut last_estimate = model.x0_mean().clone();
    let mut u_prev: Option<Vector> = None;

    for k in 0..k_end {
        let mut received = vec![false; m_sensors];
        let mut fused_now = None;

        let measurements: Vec<Vector> = if k >= 1 {
            scenario
                .sensors
                .iter()
                .zip(&mut sensor_rngs)
                .map(|(s, rng)| {
                    if scenario.noiseless {
                        Ok(s.h() * &x)
                    } else {
                        crate::model::measure(s, &x, rng)
                    }
                })
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };

        let estimate = match &mut estimator {
            Estimator::Central(state) => {
                if k >= 1 {
                    let pairs: Vec<_> = scenario.sensors.iter().zip(&measurements).collect();
                    let u = u_prev.as_ref().expect("input of previous step");
                    *state = Some(match state.as_ref() {
                        None => central_kf_init(n, &pairs)?,
                        Some(prior) => central_kf_step(prior, &pairs, u, model)?,
                    });
                }
                state.as_ref().map(|s| s.mean.clone())
            }
            Estimator::Hkf {
                schedule,
                locals,
                fusion,
                adapt_history,
            } => {
                if k >= 1 {
                    for (i, z) in measurements.iter().enumerate() {
                        let sensor = &scenario.sensors[i];
                        let next = match &locals[i] {
                            None => LocalEstimateState::init_from_measurement(schedule, sensor, z)?,
                            Some(s) => s.predict(model)?.filter(schedule, sensor, z)?,
                        };
                        let packet = MeasurementPacket {
                            sensor_id: i,
                            origin_step: k,
                            payload: next.x_info.clone(),
                        };
                        locals[i] = Some(next);
                        if let Some(at) = scenario.se_channels[i].send(k, &mut se_rngs[i]).delivered_at() {
                            se_flight[i].schedule(at, packet);
                        }
                    }
                    fusion.advance(schedule, u_prev.as_ref().expect("input of previous step"))?;
                }
                for (i, flight) in se_flight.iter_mut().enumerate() {
                    for p in flight.take_due(k) {
                        if fusion.receive(p.sensor_id, p.origin_step, p.payload)? {
                            received[i] = true;
                        }
                    }
                }
                let (fused, est) = fusion.estimate(schedule)?;
                if let (Some(cfg), Some(f)) = (&scenario.estimator.adapt, &fused) {
                    adapt_history.push(f.delta.clone());
                    if adapt_history.len() >= cfg.window && k < schedule.horizon() {
                        let current = schedule.hgmm().at(k + 1).clone();
                        let info = adapt_hgmm(adapt_history, &current, cfg);
                        if info != current {
                            schedule.rebuild_from(k + 1, info)?;
                        }
                        adapt_history.clear();
                    }
                }
                fused_now = fused;
                est
            }
        };

        let x_hat = match &estimate {
            Some(e) => e.clone(),
            None if k == 0 => model.x0_mean().clone(),
            None => model.a() * &last_estimate + model.b() * u_prev.as_ref().expect("input of previous step"),
        };
        last_estimate = x_hat.clone();

        if let Some(packet) = controller.controller_step(k, &x_hat) {
            if let Some(at) = scenario.ca_channel.send(k, &mut ca_rng).delivered_at() {
                ca_flight.schedule(at, packet);
            }
        }
        // Same-step acknowledgments let the controller replicate the buffer,
        // so the applied input is known to it from here on.
        let applied = actuator.actuator_step(&ca_flight.take_due(k), k);
        let running_cost = cost.accumulate_cost(&x, &applied.input);

        let origin = match &estimator {
            Estimator::Hkf { fusion, .. } => fusion
                .nodes()
                .iter()
                .map(|nd| nd.last_received().map(|l| l.step))
                .collect(),
            Estimator::Central(s) => vec![s.as_ref().map(|_| k); m_sensors],
        };
        if let Estimator::Central(_) = estimator {
            received = vec![k >= 1; m_sensors];
        }
        records.push(TraceRecord {
            step: k,
            x_true: x.clone(),
            u_applied: applied.input.clone(),
            estimate,
            received,
            origin,
            applied_origin: applied.origin,
            delta_dev: fused_now.as_ref().map(FusedVariables::delta_deviation),
            running_cost,
        });
        fused_log.push(fused_now);

        x = if scenario.noiseless {
            model.a() * &x + model.b() * &applied.input
        } else {
            crate::model::step_plant(model, &x, &applied.input, &mut plant_rng)?
        };
        states.push(x.clone());
        u_prev = Some(applied.input);
    }

    let total_cost = cost.finalize(&x);
    Ok(RunOutput {
        records,
        fused: fused_log,
        states,
        total_cost,
    })
}
