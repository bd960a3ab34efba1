//! Sensor-side processing: the information-like vector `x_i(k)` and its
//! correction matrix `Δ_i(k)`.
//!
//! Sensors never see control inputs. The controller restores the input
//! contribution later, see [`crate::hkf::fusion`].

use crate::error::{Error, Result};
use crate::hkf::schedule::HypothesizedSchedule;
use crate::linalg::{self, Mat, Vector};
use crate::model::{PlantModel, SensorModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Predicted,
    Filtered,
}

/// Local variables of one sensor at one step.
///
/// The de-biased local estimate is `Δ⁻¹ x` whenever `Δ` is invertible
/// and the plant has no inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalEstimateState {
    pub sensor_id: usize,
    pub step: usize,
    pub stage: Stage,
    pub x_info: Vector,
    pub delta: Mat,
}

impl LocalEstimateState {
    /// `x_i(1) = L^i_1 z_1`, `Δ_i(1) = L^i_1 Hᵢ`. `Δ` is singular when `Hᵢ`
    /// does not observe the full state; the state is built regardless.
    pub fn init_from_measurement(schedule: &HypothesizedSchedule, sensor: &SensorModel, z1: &Vector) -> Result<Self> {
        check_measurement(sensor, z1)?;
        let gain = schedule.sensor_gain(sensor.id(), 1)?;
        Ok(Self {
            sensor_id: sensor.id(),
            step: 1,
            stage: Stage::Filtered,
            x_info: gain * z1,
            delta: gain * sensor.h(),
        })
    }

    /// Step-0 variables from a local prior `(x̂, Ĉ)`:
    /// `x_i(0) = C^x_0 Ĉ⁻¹ x̂` and `Δ_i(0) = C^x_0 Ĉ⁻¹`.
    pub fn init_from_prior(
        schedule: &HypothesizedSchedule,
        sensor_id: usize,
        prior_mean: &Vector,
        prior_cov: &Mat,
    ) -> Result<Self> {
        let n = schedule.state_dim();
        if prior_mean.len() != n {
            return Err(Error::dim("prior mean", n, prior_mean.len()));
        }
        let prior_inv = linalg::checked_inverse(prior_cov, 1e-14)
            .ok_or_else(|| Error::config("estimator.prior", "prior covariance is singular"))?;
        let c0 = schedule.cx(0)?;
        let delta = c0 * prior_inv;
        Ok(Self {
            sensor_id,
            step: 0,
            stage: Stage::Filtered,
            x_info: &delta * prior_mean,
            delta,
        })
    }

    /// `x ← A x`, `Δ ← A Δ A⁻¹`; advances to the next step in predicted stage.
    pub fn predict(&self, model: &PlantModel) -> Result<Self> {
        if self.stage != Stage::Filtered {
            return Err(Error::Stage(format!(
                "sensor {} predicted twice at step {}",
                self.sensor_id, self.step
            )));
        }
        let a = model.transition(self.step);
        let a_inv = model.transition_inv(self.step);
        Ok(Self {
            sensor_id: self.sensor_id,
            step: self.step + 1,
            stage: Stage::Predicted,
            x_info: a * &self.x_info,
            delta: a * &self.delta * a_inv,
        })
    }

    /// `x ← K_k x + L^i_k z`, `Δ ← K_k Δ + L^i_k Hᵢ`.
    pub fn filter(&self, schedule: &HypothesizedSchedule, sensor: &SensorModel, z: &Vector) -> Result<Self> {
        if self.stage != Stage::Predicted {
            return Err(Error::Stage(format!(
                "sensor {} filtered without prediction at step {}",
                self.sensor_id, self.step
            )));
        }
        check_measurement(sensor, z)?;
        let k = self.step;
        let gain = schedule.gain(k)?;
        let sensor_gain = schedule.sensor_gain(sensor.id(), k)?;
        Ok(Self {
            sensor_id: self.sensor_id,
            step: k,
            stage: Stage::Filtered,
            x_info: gain * &self.x_info + sensor_gain * z,
            delta: gain * &self.delta + sensor_gain * sensor.h(),
        })
    }

    /// Filter step in which the sensor has no measurement: only the gain `K_k`
    /// is applied.
    pub fn skip_measurement(&self, schedule: &HypothesizedSchedule) -> Result<Self> {
        if self.stage != Stage::Predicted {
            return Err(Error::Stage(format!(
                "sensor {} filtered without prediction at step {}",
                self.sensor_id, self.step
            )));
        }
        let gain = schedule.gain(self.step)?;
        Ok(Self {
            stage: Stage::Filtered,
            x_info: gain * &self.x_info,
            delta: gain * &self.delta,
            ..self.clone()
        })
    }
}

fn check_measurement(sensor: &SensorModel, z: &Vector) -> Result<()> {
    if z.len() != sensor.output_dim() {
        return Err(Error::dim(
            format!("measurement of sensor {}", sensor.id()),
            sensor.output_dim(),
            z.len(),
        ));
    }
    Ok(())
}

/// One sensor's processing chain: initializes on the first measurement (or
/// from a prior) and then alternates predict/filter.
#[derive(Debug, Clone)]
pub struct LocalFilter {
    sensor_id: usize,
    state: Option<LocalEstimateState>,
}

impl LocalFilter {
    pub fn new(sensor_id: usize) -> Self {
        Self { sensor_id, state: None }
    }

    pub fn with_prior(
        schedule: &HypothesizedSchedule,
        sensor_id: usize,
        prior_mean: &Vector,
        prior_cov: &Mat,
    ) -> Result<Self> {
        Ok(Self {
            sensor_id,
            state: Some(LocalEstimateState::init_from_prior(
                schedule, sensor_id, prior_mean, prior_cov,
            )?),
        })
    }

    pub fn state(&self) -> Option<&LocalEstimateState> {
        self.state.as_ref()
    }

    /// Processes the measurement of the next step and returns the new state.
    pub fn process(
        &mut self,
        schedule: &HypothesizedSchedule,
        model: &PlantModel,
        z: &Vector,
    ) -> Result<&LocalEstimateState> {
        let sensor = schedule.sensor(self.sensor_id);
        let next = match &self.state {
            None => LocalEstimateState::init_from_measurement(schedule, sensor, z)?,
            Some(s) => s.predict(model)?.filter(schedule, sensor, z)?,
        };
        Ok(self.state.insert(next))
    }
}
