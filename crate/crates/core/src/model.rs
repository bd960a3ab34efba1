//! Linear plant and sensor models, ground-truth simulation and seeded noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};

/// Plant matrices are rejected when `rcond(A)` falls below this.
pub const MIN_TRANSITION_RCOND: f64 = 1e-12;

/// Zero-mean Gaussian source `S·ε`, `ε ~ N(0, I)`, with `S·Sᵀ` equal to the
/// covariance. Always consumes `dim` normals per draw, also for zero
/// covariance, so streams stay aligned across configurations.
#[derive(Debug, Clone)]
pub struct GaussianNoise {
    cov: Mat,
    shape: Mat,
}

impl GaussianNoise {
    pub fn new(cov: Mat) -> Self {
        let shape = linalg::psd_sqrt(&cov);
        Self { cov, shape }
    }

    pub fn dim(&self) -> usize {
        self.cov.nrows()
    }

    pub fn cov(&self) -> &Mat {
        &self.cov
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        let eps = Vector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.shape * eps
    }
}

/// Linear time-invariant plant `x_{k+1} = A x_k + B u_k + w_k`.
#[derive(Debug, Clone)]
pub struct PlantModel {
    a: Mat,
    a_inv: Mat,
    b: Mat,
    process_noise: GaussianNoise,
    x0_mean: Vector,
    p0: Mat,
}

impl PlantModel {
    pub fn new(a: Mat, b: Mat, xi: Mat, x0_mean: Vector, p0: Mat) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() {
            return Err(Error::dim("A", format!("{n}x{n}"), shape(&a)));
        }
        if b.nrows() != n {
            return Err(Error::dim("B rows", n, b.nrows()));
        }
        if xi.shape() != (n, n) {
            return Err(Error::dim("Xi", format!("{n}x{n}"), shape(&xi)));
        }
        if p0.shape() != (n, n) {
            return Err(Error::dim("P0", format!("{n}x{n}"), shape(&p0)));
        }
        if x0_mean.len() != n {
            return Err(Error::dim("x0_mean", n, x0_mean.len()));
        }
        if !linalg::is_psd(&xi, 1e-12) {
            return Err(Error::config("plant.Xi", "must be symmetric positive semi-definite"));
        }
        if !linalg::is_psd(&p0, 1e-12) {
            return Err(Error::config("plant.P0", "must be symmetric positive semi-definite"));
        }
        let rc = linalg::rcond(&a);
        if rc < MIN_TRANSITION_RCOND {
            return Err(Error::config(
                "plant.A",
                format!("must be invertible (reciprocal condition {rc:.3e} < {MIN_TRANSITION_RCOND:e})"),
            ));
        }
        let a_inv = a
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::config("plant.A", "inversion failed"))?;
        Ok(Self {
            a,
            a_inv,
            b,
            process_noise: GaussianNoise::new(xi),
            x0_mean,
            p0,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    /// Transition matrix used from step `k` to `k + 1`.
    pub fn transition(&self, _k: usize) -> &Mat {
        &self.a
    }

    pub fn transition_inv(&self, _k: usize) -> &Mat {
        &self.a_inv
    }

    pub fn input_matrix(&self, _k: usize) -> &Mat {
        &self.b
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn b(&self) -> &Mat {
        &self.b
    }

    pub fn xi(&self) -> &Mat {
        self.process_noise.cov()
    }

    pub fn x0_mean(&self) -> &Vector {
        &self.x0_mean
    }

    pub fn p0(&self) -> &Mat {
        &self.p0
    }

    pub fn process_noise(&self) -> &GaussianNoise {
        &self.process_noise
    }

    /// Draws an initial state from `N(x̄₀, P̄₀)`.
    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        &self.x0_mean + GaussianNoise::new(self.p0.clone()).sample(rng)
    }

    fn check_state(&self, x: &Vector) -> Result<()> {
        if x.len() != self.state_dim() {
            return Err(Error::dim("state", self.state_dim(), x.len()));
        }
        Ok(())
    }

    fn check_input(&self, u: &Vector) -> Result<()> {
        if u.len() != self.input_dim() {
            return Err(Error::dim("input", self.input_dim(), u.len()));
        }
        Ok(())
    }
}

/// Measurement model `y = H x + v`, `v ~ N(0, Θ)`.
#[derive(Debug, Clone)]
pub struct SensorModel {
    id: usize,
    h: Mat,
    theta_inv: Mat,
    noise: GaussianNoise,
}

impl SensorModel {
    pub fn new(id: usize, h: Mat, theta: Mat) -> Result<Self> {
        let q = h.nrows();
        if theta.shape() != (q, q) {
            return Err(Error::dim(
                format!("sensor {id} Theta"),
                format!("{q}x{q}"),
                shape(&theta),
            ));
        }
        if !linalg::is_pd(&theta) {
            return Err(Error::config(
                format!("sensors[{id}].Theta"),
                "must be symmetric positive definite",
            ));
        }
        let theta_inv = theta
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::config(format!("sensors[{id}].Theta"), "not invertible"))?;
        Ok(Self {
            id,
            h,
            theta_inv,
            noise: GaussianNoise::new(theta),
        })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn h(&self) -> &Mat {
        &self.h
    }

    pub fn theta(&self) -> &Mat {
        self.noise.cov()
    }

    pub fn theta_inv(&self) -> &Mat {
        &self.theta_inv
    }

    pub fn output_dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.h.ncols()
    }

    /// Measurement information `Hᵀ Θ⁻¹ H`.
    pub fn information(&self) -> Mat {
        self.h.transpose() * &self.theta_inv * &self.h
    }
}

/// Sum of measurement information over a set of sensors.
pub fn total_information(sensors: &[SensorModel]) -> Option<Mat> {
    let n = sensors.first()?.state_dim();
    Some(sensors.iter().fold(Mat::zeros(n, n), |acc, s| acc + s.information()))
}

pub fn step_plant<R: Rng + ?Sized>(model: &PlantModel, x: &Vector, u: &Vector, rng: &mut R) -> Result<Vector> {
    model.check_state(x)?;
    model.check_input(u)?;
    let w = model.process_noise.sample(rng);
    Ok(model.a() * x + model.b() * u + w)
}

pub fn measure<R: Rng + ?Sized>(sensor: &SensorModel, x: &Vector, rng: &mut R) -> Result<Vector> {
    if x.len() != sensor.state_dim() {
        return Err(Error::dim(
            format!("state for sensor {}", sensor.id),
            sensor.state_dim(),
            x.len(),
        ));
    }
    Ok(sensor.h() * x + sensor.noise.sample(rng))
}

/// Closed-form state at step `k` from the input sequence:
/// `Σ_{t<k} Φ(t+1,k)(B u_t + w_t) + Φ(0,k) x₀` with `Φ(a,k) = A^{k-a}`.
pub fn rollout_true_state(
    model: &PlantModel,
    x0: &Vector,
    inputs: &[Vector],
    noise: Option<&[Vector]>,
    k: usize,
) -> Result<Vector> {
    if k > inputs.len() {
        return Err(Error::Index(format!(
            "rollout to step {k} with only {} inputs",
            inputs.len()
        )));
    }
    if let Some(w) = noise {
        if w.len() < k {
            return Err(Error::Index(format!(
                "rollout to step {k} with only {} noise samples",
                w.len()
            )));
        }
    }
    model.check_state(x0)?;
    let n = model.state_dim();
    // Accumulate from t = k-1 downward so Φ(t+1,k) grows by one factor per term.
    let mut phi = Mat::identity(n, n);
    let mut x = Vector::zeros(n);
    for t in (0..k).rev() {
        model.check_input(&inputs[t])?;
        let mut drive = model.input_matrix(t) * &inputs[t];
        if let Some(w) = noise {
            drive += &w[t];
        }
        x += &phi * drive;
        phi *= model.transition(t);
    }
    Ok(x + phi * x0)
}

/// A simulated ground-truth trajectory: `states[k]` for `k = 0..=K`.
#[derive(Debug, Clone, Default)]
pub struct TrueTrajectory {
    pub states: Vec<Vector>,
    pub inputs_applied: Vec<Vector>,
    pub process_noise: Vec<Vector>,
}

impl TrueTrajectory {
    pub fn start(x0: Vector) -> Self {
        Self {
            states: vec![x0],
            ..Self::default()
        }
    }

    pub fn current(&self) -> &Vector {
        self.states.last().expect("trajectory has an initial state")
    }

    /// Advances by one step, recording the applied input and drawn noise.
    pub fn advance<R: Rng + ?Sized>(&mut self, model: &PlantModel, u: Vector, rng: &mut R) -> Result<()> {
        let x = self.current().clone();
        model.check_input(&u)?;
        let w = model.process_noise.sample(rng);
        let next = model.a() * x + model.b() * &u + &w;
        self.states.push(next);
        self.inputs_applied.push(u);
        self.process_noise.push(w);
        Ok(())
    }
}

/// Identifies an independent random substream within one simulation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamId {
    InitialState,
    Plant,
    Sensor(usize),
    SensorChannel(usize),
    ControlChannel,
    Excitation,
}

impl StreamId {
    fn index(self) -> u64 {
        match self {
            StreamId::InitialState => 1,
            StreamId::Plant => 2,
            StreamId::ControlChannel => 3,
            StreamId::Excitation => 4,
            StreamId::Sensor(i) => 1_000 + i as u64,
            StreamId::SensorChannel(i) => 1_000_000 + i as u64,
        }
    }
}

/// ChaCha12 generator for one substream of a run seed. Substreams use the
/// ChaCha stream counter so draws on one never shift another.
pub fn substream(seed: u64, id: StreamId) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(id.index());
    rng
}

/// Per-run seed derived from a base seed: the first word of the ChaCha12
/// stream numbered `run_index` under `base`. Independent of evaluation order.
pub fn derive_run_seed(base: u64, run_index: u64) -> u64 {
    let mut rng = ChaCha12Rng::seed_from_u64(base);
    rng.set_stream(u64::MAX - run_index);
    rng.random()
}

fn shape(m: &Mat) -> String {
    format!("{}x{}", m.nrows(), m.ncols())
}
