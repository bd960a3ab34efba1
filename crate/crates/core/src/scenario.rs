//! JSON scenario configuration and its validation into a runnable
//! [`Scenario`]. Matrices are row-major nested arrays.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hkf::{AdaptConfig, Hgmm};
use crate::linalg::{self, Mat, Vector};
use crate::model::{PlantModel, SensorModel};
use crate::ncs::{
    default_feedback_law, AckMode, Channel, ChannelScript, ConstantLaw, EstimatorKind, EstimatorSettings, FeedbackLaw,
    InitMode, LqrHorizon, Scenario,
};

pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub horizon: usize,
    #[serde(default)]
    pub seed: u64,
    pub plant: PlantConfig,
    pub sensors: Vec<SensorConfig>,
    #[serde(default)]
    pub hgmm: HgmmSpec,
    #[serde(default)]
    pub network: NetworkConfig,
    pub controller: ControllerConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    /// Disables initial-state, process and measurement noise.
    #[serde(default)]
    pub noiseless: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B")]
    pub b: Rows,
    #[serde(rename = "Xi")]
    pub xi: Rows,
    pub x0_mean: Vec<f64>,
    #[serde(rename = "P0")]
    pub p0: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    #[serde(rename = "H")]
    pub h: Rows,
    #[serde(rename = "Theta")]
    pub theta: Rows,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HgmmName {
    Matched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HgmmSpec {
    Named(HgmmName),
    Scaled { scaled: f64 },
    Matrix(Rows),
}

impl Default for HgmmSpec {
    fn default() -> Self {
        HgmmSpec::Named(HgmmName::Matched)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    #[serde(default)]
    pub loss_prob: f64,
    #[serde(default = "default_pmf")]
    pub delay_pmf: Vec<f64>,
    #[serde(default, skip_serializing_if = "is_empty_script")]
    pub script: ChannelScript,
}

fn default_pmf() -> Vec<f64> {
    vec![1.0]
}

fn is_empty_script(s: &ChannelScript) -> bool {
    s.0.is_empty()
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            loss_prob: 0.0,
            delay_pmf: default_pmf(),
            script: ChannelScript::default(),
        }
    }
}

impl ChannelConfig {
    fn build(&self, field: &str, ack: AckMode) -> Result<Channel> {
        let ch = Channel::new(self.loss_prob, &self.delay_pmf, ack).map_err(|e| match e {
            Error::Config { field: f, msg } => Error::config(format!("{field}.{f}"), msg),
            other => other,
        })?;
        Ok(ch.with_script(self.script.clone()))
    }
}

/// Shared SE-channel settings plus optional per-sensor replacements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeConfig {
    #[serde(default)]
    pub loss_prob: f64,
    #[serde(default = "default_pmf")]
    pub delay_pmf: Vec<f64>,
    #[serde(default, skip_serializing_if = "is_empty_script")]
    pub script: ChannelScript,
    /// `null` entries use the shared settings.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_sensor: Vec<Option<ChannelConfig>>,
}

impl Default for SeConfig {
    fn default() -> Self {
        Self {
            loss_prob: 0.0,
            delay_pmf: default_pmf(),
            script: ChannelScript::default(),
            per_sensor: Vec::new(),
        }
    }
}

impl SeConfig {
    pub fn shared(&self) -> ChannelConfig {
        ChannelConfig {
            loss_prob: self.loss_prob,
            delay_pmf: self.delay_pmf.clone(),
            script: self.script.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    #[serde(default)]
    pub se: SeConfig,
    #[serde(default)]
    pub ca: ChannelConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackName {
    Lqr,
    /// Every sequence repeats `u_default`.
    Constant,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeedbackSpec {
    Named(FeedbackName),
    Constant { constant: Vec<f64> },
}

impl Default for FeedbackSpec {
    fn default() -> Self {
        FeedbackSpec::Named(FeedbackName::Lqr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LqrHorizonSpec {
    #[default]
    Infinite,
    Finite(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    #[serde(rename = "N_A", default)]
    pub n_a: usize,
    #[serde(rename = "Q")]
    pub q: Rows,
    #[serde(rename = "R")]
    pub r: Rows,
    pub u_default: Vec<f64>,
    #[serde(default)]
    pub feedback: FeedbackSpec,
    #[serde(default)]
    pub lqr_horizon: LqrHorizonSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitSpec {
    #[default]
    Measurement,
    Prior,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KindSpec {
    #[default]
    Hkf,
    Central,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    #[serde(default)]
    pub init: InitSpec,
    #[serde(default)]
    pub kind: KindSpec,
    #[serde(default)]
    pub adapt_hgmm: bool,
    #[serde(default)]
    pub adapt: AdaptConfig,
    /// Minimum reciprocal condition number of `Δ_f` for de-biasing.
    #[serde(default = "default_cond_threshold")]
    pub cond_threshold: f64,
}

fn default_cond_threshold() -> f64 {
    crate::hkf::fusion::DEFAULT_MIN_RCOND
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            init: InitSpec::default(),
            kind: KindSpec::default(),
            adapt_hgmm: false,
            adapt: AdaptConfig::default(),
            cond_threshold: default_cond_threshold(),
        }
    }
}

fn matrix(field: &str, rows: &Rows, shape: Option<(usize, usize)>) -> Result<Mat> {
    let m = linalg::from_rows(rows).ok_or_else(|| Error::config(field, "rows have different lengths"))?;
    if rows.is_empty() || m.ncols() == 0 {
        return Err(Error::config(field, "matrix is empty"));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::config(field, "entries must be finite"));
    }
    if let Some((r, c)) = shape {
        if m.shape() != (r, c) {
            return Err(Error::config(
                field,
                format!("expected {r}x{c}, got {}x{}", m.nrows(), m.ncols()),
            ));
        }
    }
    Ok(m)
}

fn vector(field: &str, v: &[f64], len: usize) -> Result<Vector> {
    if v.len() != len {
        return Err(Error::config(field, format!("expected length {len}, got {}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::config(field, "entries must be finite"));
    }
    Ok(Vector::from_column_slice(v))
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config("config", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn plant_model(&self) -> Result<PlantModel> {
        let p = &self.plant;
        let a = matrix("plant.A", &p.a, None)?;
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::config(
                "plant.A",
                format!("must be square, got {}x{}", n, a.ncols()),
            ));
        }
        let b = matrix("plant.B", &p.b, None)?;
        if b.nrows() != n {
            return Err(Error::config(
                "plant.B",
                format!("expected {n} rows, got {}", b.nrows()),
            ));
        }
        let xi = matrix("plant.Xi", &p.xi, Some((n, n)))?;
        let x0 = vector("plant.x0_mean", &p.x0_mean, n)?;
        let p0 = matrix("plant.P0", &p.p0, Some((n, n)))?;
        PlantModel::new(a, b, xi, x0, p0)
    }

    pub fn sensor_models(&self, n: usize) -> Result<Vec<SensorModel>> {
        if self.sensors.is_empty() {
            return Err(Error::config("sensors", "at least one sensor required"));
        }
        self.sensors
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let h = matrix(&format!("sensors[{i}].H"), &s.h, None)?;
                if h.ncols() != n {
                    return Err(Error::config(
                        format!("sensors[{i}].H"),
                        format!("expected {n} columns, got {}", h.ncols()),
                    ));
                }
                let q = h.nrows();
                let theta = matrix(&format!("sensors[{i}].Theta"), &s.theta, Some((q, q)))?;
                SensorModel::new(i, h, theta)
            })
            .collect()
    }

    pub fn hgmm_for(&self, sensors: &[SensorModel], n: usize) -> Result<Hgmm> {
        match &self.hgmm {
            HgmmSpec::Named(HgmmName::Matched) => Hgmm::matched(sensors),
            HgmmSpec::Scaled { scaled } => Hgmm::scaled_matched(sensors, *scaled),
            HgmmSpec::Matrix(rows) => {
                let m = matrix("hgmm", rows, Some((n, n)))?;
                Hgmm::constant(m)
            }
        }
    }

    /// Validates every field and builds the runnable scenario.
    pub fn build(&self) -> Result<Scenario> {
        if self.horizon == 0 {
            return Err(Error::config("horizon", "must be at least 1"));
        }
        let model = self.plant_model()?;
        let n = model.state_dim();
        let m = model.input_dim();
        let sensors = self.sensor_models(n)?;
        let hgmm = self.hgmm_for(&sensors, n)?;

        let se = &self.network.se;
        if !se.per_sensor.is_empty() && se.per_sensor.len() != sensors.len() {
            return Err(Error::config(
                "network.se.per_sensor",
                format!("expected {} entries, got {}", sensors.len(), se.per_sensor.len()),
            ));
        }
        let se_channels = (0..sensors.len())
            .map(|i| match se.per_sensor.get(i).and_then(Option::as_ref) {
                Some(c) => c.build(&format!("network.se.per_sensor[{i}]"), AckMode::None),
                None => se.shared().build("network.se", AckMode::None),
            })
            .collect::<Result<Vec<_>>>()?;
        let ca_channel = self.network.ca.build("network.ca", AckMode::TcpLike)?;

        let c = &self.controller;
        let q = matrix("controller.Q", &c.q, Some((n, n)))?;
        let r = matrix("controller.R", &c.r, Some((m, m)))?;
        if !linalg::is_psd(&q, 1e-12) {
            return Err(Error::config(
                "controller.Q",
                "must be symmetric positive semi-definite",
            ));
        }
        if !linalg::is_pd(&r) {
            return Err(Error::config("controller.R", "must be symmetric positive definite"));
        }
        let default_input = vector("controller.u_default", &c.u_default, m)?;
        let law: Option<Arc<dyn FeedbackLaw>> = match &c.feedback {
            FeedbackSpec::Named(FeedbackName::None) => None,
            FeedbackSpec::Named(FeedbackName::Constant) => Some(Arc::new(ConstantLaw(default_input.clone()))),
            FeedbackSpec::Constant { constant } => Some(Arc::new(ConstantLaw(vector(
                "controller.feedback.constant",
                constant,
                m,
            )?))),
            FeedbackSpec::Named(FeedbackName::Lqr) => {
                let horizon = match c.lqr_horizon {
                    LqrHorizonSpec::Infinite => LqrHorizon::Infinite,
                    LqrHorizonSpec::Finite(len) => LqrHorizon::Finite(len),
                };
                Some(Arc::new(default_feedback_law(model.a(), model.b(), &q, &r, horizon)?))
            }
        };

        let e = &self.estimator;
        if !(e.cond_threshold.is_finite() && e.cond_threshold >= 0.0 && e.cond_threshold < 1.0) {
            return Err(Error::config("estimator.cond_threshold", "must lie in [0, 1)"));
        }
        if e.adapt_hgmm {
            let a = &e.adapt;
            let finite = a.max_factor.is_finite() && a.rate.is_finite() && a.margin.is_finite();
            if a.window == 0 || !finite || a.max_factor < 1.0 || a.rate <= 0.0 || a.margin < 0.0 {
                return Err(Error::config(
                    "estimator.adapt",
                    "window must be positive, max_factor ≥ 1, rate > 0, margin ≥ 0",
                ));
            }
            if e.kind == KindSpec::Central {
                return Err(Error::config(
                    "estimator.adapt_hgmm",
                    "only applies to the hkf estimator",
                ));
            }
        }
        let estimator = EstimatorSettings {
            kind: match e.kind {
                KindSpec::Hkf => EstimatorKind::Hkf,
                KindSpec::Central => EstimatorKind::Central,
            },
            init: match e.init {
                InitSpec::Measurement => InitMode::Measurement,
                InitSpec::Prior => InitMode::Prior,
            },
            min_rcond: e.cond_threshold,
            adapt: e.adapt_hgmm.then(|| e.adapt.clone()),
        };
        if estimator.init == InitMode::Prior && !linalg::is_pd(model.p0()) {
            return Err(Error::config(
                "plant.P0",
                "prior initialization needs a positive definite P0",
            ));
        }

        Ok(Scenario {
            model,
            sensors,
            hgmm,
            horizon: self.horizon,
            se_channels,
            ca_channel,
            n_a: c.n_a,
            default_input,
            law,
            q,
            r,
            estimator,
            noiseless: self.noiseless,
            seed: self.seed,
        })
    }

    /// Scalar plant `x' = x + u + w` with one sensor; the default config.
    pub fn scalar_example() -> Self {
        Self {
            horizon: 50,
            seed: 1,
            plant: PlantConfig {
                a: vec![vec![1.0]],
                b: vec![vec![1.0]],
                xi: vec![vec![0.1]],
                x0_mean: vec![0.0],
                p0: vec![vec![1.0]],
            },
            sensors: vec![SensorConfig {
                h: vec![vec![1.0]],
                theta: vec![vec![0.5]],
            }],
            hgmm: HgmmSpec::default(),
            network: NetworkConfig::default(),
            controller: ControllerConfig {
                n_a: 2,
                q: vec![vec![1.0]],
                r: vec![vec![1.0]],
                u_default: vec![0.0],
                feedback: FeedbackSpec::default(),
                lqr_horizon: LqrHorizonSpec::default(),
            },
            estimator: EstimatorConfig::default(),
            noiseless: false,
        }
    }
}
