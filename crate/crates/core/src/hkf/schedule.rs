//! Hypothesized covariance and gain schedule shared by every node.
//!
//! The schedule is driven only by the hypothesis about the global
//! measurement information (HGMM), the plant and the sensors' `H`/`Θ`; it
//! never sees a measurement value. All nodes therefore compute the same
//! sequence, and it is built once and shared read-only.

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::model::{self, PlantModel, SensorModel};

/// Hypothesis about the global measurement information `(C^z_k)⁻¹`.
///
/// Holds one matrix per step starting at step 1; steps past the end reuse
/// the last entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Hgmm {
    per_step: Vec<Mat>,
}

impl Hgmm {
    pub fn constant(info: Mat) -> Result<Self> {
        Self::per_step(vec![info])
    }

    pub fn per_step(per_step: Vec<Mat>) -> Result<Self> {
        if per_step.is_empty() {
            return Err(Error::config("hgmm", "at least one matrix required"));
        }
        let n = per_step[0].nrows();
        for (i, m) in per_step.iter().enumerate() {
            if m.shape() != (n, n) {
                return Err(Error::dim(
                    format!("hgmm[{i}]"),
                    format!("{n}x{n}"),
                    format!("{}x{}", m.nrows(), m.ncols()),
                ));
            }
            if !linalg::is_psd(m, 1e-12) {
                return Err(Error::config(
                    "hgmm",
                    format!("entry {i} is not symmetric positive semi-definite"),
                ));
            }
        }
        Ok(Self { per_step })
    }

    /// `Σ_i Hᵢᵀ Θᵢ⁻¹ Hᵢ` over all sensors: the hypothesis that every
    /// measurement arrives.
    pub fn matched(sensors: &[SensorModel]) -> Result<Self> {
        let info = model::total_information(sensors)
            .ok_or_else(|| Error::config("sensors", "at least one sensor required"))?;
        Self::constant(info)
    }

    pub fn scaled_matched(sensors: &[SensorModel], alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::config("hgmm.scaled", "scale must be positive and finite"));
        }
        let m = Self::matched(sensors)?;
        Self::constant(&m.per_step[0] * alpha)
    }

    pub fn dim(&self) -> usize {
        self.per_step[0].nrows()
    }

    /// Information hypothesized at step `k ≥ 1`.
    pub fn at(&self, k: usize) -> &Mat {
        let idx = k.saturating_sub(1).min(self.per_step.len() - 1);
        &self.per_step[idx]
    }

    /// Copy whose steps from `from_step` onward use `info`.
    pub fn with_tail(&self, from_step: usize, info: Mat) -> Self {
        let keep = from_step.saturating_sub(1);
        let mut per_step: Vec<Mat> = (1..=keep).map(|k| self.at(k).clone()).collect();
        per_step.push(info);
        Self { per_step }
    }
}

/// How the local variables are started.
#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleInit {
    /// From the first measurement at step 1: `C^x_1 = C^z_1`.
    Measurement,
    /// From a prior at step 0 with the given (hypothesized) covariance
    /// `C^x_0`, followed by a regular predict into step 1.
    Prior(Mat),
}

#[derive(Debug, Clone)]
struct ScheduleStep {
    cx: Mat,
    cx_pred: Option<Mat>,
    gain: Mat,
    sensor_gains: Vec<Mat>,
}

/// `C^x_k`, `C^x_{k|k-1}`, `K_k` and `L^i_k` for `k = 1..=horizon`.
///
/// Under measurement initialization there is no predicted covariance at
/// step 1 and `K_1 = 0`, which is the limit of zero prior information; the
/// filter and sum formulas then need no special case for the first step.
#[derive(Debug, Clone)]
pub struct HypothesizedSchedule {
    init: ScheduleInit,
    steps: Vec<ScheduleStep>,
    transition: Mat,
    transition_inv: Mat,
    input: Mat,
    process: Mat,
    sensors: Vec<SensorModel>,
    hgmm: Hgmm,
}

pub fn build_schedule(
    model: &PlantModel,
    sensors: &[SensorModel],
    hgmm: &Hgmm,
    init: ScheduleInit,
    horizon: usize,
) -> Result<HypothesizedSchedule> {
    let n = model.state_dim();
    if horizon == 0 {
        return Err(Error::config("horizon", "must be at least 1"));
    }
    if hgmm.dim() != n {
        return Err(Error::dim("hgmm", format!("{n}x{n}"), format!("{0}x{0}", hgmm.dim())));
    }
    if sensors.is_empty() {
        return Err(Error::config("sensors", "at least one sensor required"));
    }
    for s in sensors {
        if s.state_dim() != n {
            return Err(Error::dim(format!("sensor {} H columns", s.id()), n, s.state_dim()));
        }
    }
    if let ScheduleInit::Prior(c0) = &init {
        if c0.shape() != (n, n) {
            return Err(Error::dim(
                "prior covariance",
                format!("{n}x{n}"),
                format!("{}x{}", c0.nrows(), c0.ncols()),
            ));
        }
    }
    let mut schedule = HypothesizedSchedule {
        init,
        steps: Vec::with_capacity(horizon),
        transition: model.a().clone(),
        transition_inv: model.transition_inv(0).clone(),
        input: model.b().clone(),
        process: model.xi().clone(),
        sensors: sensors.to_vec(),
        hgmm: hgmm.clone(),
    };
    schedule.extend_to(horizon)?;
    Ok(schedule)
}

impl HypothesizedSchedule {
    fn extend_to(&mut self, horizon: usize) -> Result<()> {
        while self.steps.len() < horizon {
            let k = self.steps.len() + 1;
            let step = self.compute_step(k)?;
            self.steps.push(step);
        }
        Ok(())
    }

    fn compute_step(&self, k: usize) -> Result<ScheduleStep> {
        let n = self.state_dim();
        let info = self.hgmm.at(k);
        let prev_cx = if k == 1 {
            match &self.init {
                ScheduleInit::Measurement => None,
                ScheduleInit::Prior(c0) => Some(c0),
            }
        } else {
            Some(&self.steps[k - 2].cx)
        };
        let (cx, cx_pred, gain) = match prev_cx {
            None => {
                let cx = linalg::checked_inverse(info, 1e-14).ok_or_else(|| Error::Schedule {
                    step: k,
                    msg: "hypothesized measurement information is singular at initialization".into(),
                })?;
                (cx, None, Mat::zeros(n, n))
            }
            Some(prev) => {
                let pred = &self.transition * prev * self.transition.transpose() + &self.process;
                let pred_inv = linalg::checked_inverse(&pred, 1e-14).ok_or_else(|| Error::Schedule {
                    step: k,
                    msg: "predicted covariance is singular".into(),
                })?;
                let cx = linalg::checked_inverse(&(&pred_inv + info), 1e-14).ok_or_else(|| Error::Schedule {
                    step: k,
                    msg: "posterior information is singular".into(),
                })?;
                let cx = linalg::symmetrize(&cx);
                let gain = &cx * &pred_inv;
                (cx, Some(pred), gain)
            }
        };
        let sensor_gains = self
            .sensors
            .iter()
            .map(|s| &cx * s.h().transpose() * s.theta_inv())
            .collect();
        Ok(ScheduleStep {
            cx,
            cx_pred,
            gain,
            sensor_gains,
        })
    }

    /// Replaces the hypothesis from `from_step` on and recomputes those steps.
    pub fn rebuild_from(&mut self, from_step: usize, info: Mat) -> Result<()> {
        let horizon = self.horizon();
        let from_step = from_step.max(1);
        self.hgmm = Hgmm::per_step(self.hgmm.with_tail(from_step, info).per_step)?;
        self.steps.truncate(from_step - 1);
        self.extend_to(horizon)
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn state_dim(&self) -> usize {
        self.transition.nrows()
    }

    pub fn init(&self) -> &ScheduleInit {
        &self.init
    }

    pub fn hgmm(&self) -> &Hgmm {
        &self.hgmm
    }

    pub fn sensors(&self) -> &[SensorModel] {
        &self.sensors
    }

    pub fn sensor(&self, i: usize) -> &SensorModel {
        &self.sensors[i]
    }

    pub fn num_sensors(&self) -> usize {
        self.sensors.len()
    }

    pub fn transition(&self) -> &Mat {
        &self.transition
    }

    pub fn transition_inv(&self) -> &Mat {
        &self.transition_inv
    }

    pub fn input_matrix(&self) -> &Mat {
        &self.input
    }

    fn step(&self, k: usize) -> Result<&ScheduleStep> {
        if k == 0 || k > self.steps.len() {
            return Err(Error::Schedule {
                step: k,
                msg: format!("outside schedule range 1..={}", self.steps.len()),
            });
        }
        Ok(&self.steps[k - 1])
    }

    /// `C^x_k`; at `k = 0` only defined for prior initialization.
    pub fn cx(&self, k: usize) -> Result<&Mat> {
        if k == 0 {
            return match &self.init {
                ScheduleInit::Prior(c0) => Ok(c0),
                ScheduleInit::Measurement => Err(Error::Schedule {
                    step: 0,
                    msg: "no step-0 covariance under measurement initialization".into(),
                }),
            };
        }
        Ok(&self.step(k)?.cx)
    }

    /// `C^x_{k|k-1}`; `None` at the measurement-initialized first step.
    pub fn cx_pred(&self, k: usize) -> Result<Option<&Mat>> {
        Ok(self.step(k)?.cx_pred.as_ref())
    }

    /// `K_k = C^x_k (C^x_{k|k-1})⁻¹`.
    pub fn gain(&self, k: usize) -> Result<&Mat> {
        Ok(&self.step(k)?.gain)
    }

    /// `L^i_k = C^x_k Hᵢᵀ Θᵢ⁻¹`.
    pub fn sensor_gain(&self, i: usize, k: usize) -> Result<&Mat> {
        self.step(k)?
            .sensor_gains
            .get(i)
            .ok_or_else(|| Error::Index(format!("sensor {i}")))
    }

    /// `L^i_k Hᵢ`.
    pub fn sensor_gain_h(&self, i: usize, k: usize) -> Result<Mat> {
        Ok(self.sensor_gain(i, k)? * self.sensors[i].h())
    }
}
