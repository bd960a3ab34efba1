//! Sequence-based controller: augmented state, feedback laws and the
//! per-step control packet.

use std::collections::VecDeque;
use std::fmt::Debug;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::ncs::packets::ControlPacket;

/// `ξ_k`: plant-state estimate, the still applicable entries of the last
/// `N_A` sent sequences and the default input.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState {
    pub estimate: Vector,
    /// `pending[j-1]` holds `u_{k|k-j}, …, u_{k+N_A-j|k-j}` for `j = 1..=N_A`
    /// (zeros for sequences that were never sent).
    pub pending: Vec<Vec<Vector>>,
    pub default_input: Vector,
}

impl AugmentedState {
    /// Stacked vector `[x; u_{k|k-1} … u_{k+N_A-1|k-1}; …; u_{k|k-N_A}; u^d]`
    /// of length `n + m·N_A(N_A+1)/2 + m`.
    pub fn to_vector(&self) -> Vector {
        let parts: Vec<&Vector> = std::iter::once(&self.estimate)
            .chain(self.pending.iter().flatten())
            .chain(std::iter::once(&self.default_input))
            .collect();
        let len = parts.iter().map(|p| p.len()).sum();
        let mut out = Vector::zeros(len);
        let mut at = 0;
        for p in parts {
            out.rows_mut(at, p.len()).copy_from(p);
            at += p.len();
        }
        out
    }

    pub fn dim(n: usize, m: usize, n_a: usize) -> usize {
        n + m * n_a * (n_a + 1) / 2 + m
    }
}

/// Maps the augmented-state estimate to a sequence of `N_A + 1` inputs.
pub trait FeedbackLaw: Debug + Send + Sync {
    fn sequence(&self, step: usize, xi: &AugmentedState, len: usize) -> Vec<Vector>;
}

/// Every entry of every sequence is the same input.
#[derive(Debug, Clone)]
pub struct ConstantLaw(pub Vector);

impl FeedbackLaw for ConstantLaw {
    fn sequence(&self, _step: usize, _xi: &AugmentedState, len: usize) -> Vec<Vector> {
        vec![self.0.clone(); len]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LqrHorizon {
    Infinite,
    Finite(usize),
}

/// Certainty-equivalent receding-horizon LQR:
/// `u_{k+j|k} = −L_{k+j} x̂_{k+j|k}` with `x̂_{k+j+1|k} = A x̂_{k+j|k} + B u_{k+j|k}`.
#[derive(Debug, Clone)]
pub struct LqrLaw {
    gains: Vec<Mat>,
    a: Mat,
    b: Mat,
}

impl LqrLaw {
    pub fn gain(&self, step: usize) -> &Mat {
        &self.gains[step.min(self.gains.len() - 1)]
    }
}

impl FeedbackLaw for LqrLaw {
    fn sequence(&self, step: usize, xi: &AugmentedState, len: usize) -> Vec<Vector> {
        let mut x = xi.estimate.clone();
        (0..len)
            .map(|j| {
                let u = -(self.gain(step + j) * &x);
                x = &self.a * &x + &self.b * &u;
                u
            })
            .collect()
    }
}

const RICCATI_MAX_ITERS: usize = 100_000;
const RICCATI_TOL: f64 = 1e-12;

/// LQR gains from the Riccati recursion on `(A, B, Q, R)`.
pub fn default_feedback_law(a: &Mat, b: &Mat, q: &Mat, r: &Mat, horizon: LqrHorizon) -> Result<LqrLaw> {
    let n = a.nrows();
    let m = b.ncols();
    if q.shape() != (n, n) {
        return Err(Error::dim(
            "controller.Q",
            format!("{n}x{n}"),
            format!("{}x{}", q.nrows(), q.ncols()),
        ));
    }
    if r.shape() != (m, m) {
        return Err(Error::dim(
            "controller.R",
            format!("{m}x{m}"),
            format!("{}x{}", r.nrows(), r.ncols()),
        ));
    }
    let step = |p: &Mat| -> Result<(Mat, Mat)> {
        let bt_p = b.transpose() * p;
        let s = r + &bt_p * b;
        let s_inv =
            linalg::checked_inverse(&s, 1e-14).ok_or_else(|| Error::config("controller.R", "R + BᵀPB is singular"))?;
        let gain = s_inv * bt_p * a;
        let next = q + a.transpose() * p * (a - b * &gain);
        Ok((gain, linalg::symmetrize(&next)))
    };
    let gains = match horizon {
        LqrHorizon::Infinite => {
            let mut p = q.clone();
            let mut converged = None;
            for _ in 0..RICCATI_MAX_ITERS {
                let (gain, next) = step(&p)?;
                if !next.iter().all(|v| v.is_finite()) {
                    break;
                }
                let change = (&next - &p).amax() / next.amax().max(1.0);
                p = next;
                if change < RICCATI_TOL {
                    converged = Some(step(&p)?.0);
                    break;
                }
                let _ = gain;
            }
            vec![converged.ok_or_else(|| {
                Error::config(
                    "controller.riccati",
                    "infinite-horizon Riccati recursion diverged; (A, B) may not be stabilizable",
                )
            })?]
        }
        LqrHorizon::Finite(len) => {
            if len == 0 {
                return Err(Error::config("controller.riccati", "finite horizon must be positive"));
            }
            let mut p = q.clone();
            let mut gains = vec![Mat::zeros(m, n); len];
            for k in (0..len).rev() {
                let (gain, next) = step(&p)?;
                gains[k] = gain;
                p = next;
            }
            gains
        }
    };
    Ok(LqrLaw {
        gains,
        a: a.clone(),
        b: b.clone(),
    })
}

/// Controller-side sequence generation and pending-input bookkeeping.
#[derive(Debug, Clone)]
pub struct SequenceController {
    n_a: usize,
    input_dim: usize,
    default_input: Vector,
    law: Option<Arc<dyn FeedbackLaw>>,
    sent: VecDeque<ControlPacket>,
}

impl SequenceController {
    /// `law = None` sends nothing; the actuator then runs on the default input.
    pub fn new(n_a: usize, default_input: Vector, law: Option<Arc<dyn FeedbackLaw>>) -> Self {
        Self {
            n_a,
            input_dim: default_input.len(),
            default_input,
            law,
            sent: VecDeque::new(),
        }
    }

    pub fn sequence_len(&self) -> usize {
        self.n_a + 1
    }

    pub fn augmented_state(&self, step: usize, estimate: &Vector) -> AugmentedState {
        let pending = (1..=self.n_a)
            .map(|j| {
                let origin = step.checked_sub(j);
                let packet = origin.and_then(|o| self.sent.iter().find(|p| p.origin_step == o));
                (0..=self.n_a - j)
                    .map(|i| {
                        packet
                            .and_then(|p| p.input_for(step + i))
                            .cloned()
                            .unwrap_or_else(|| Vector::zeros(self.input_dim))
                    })
                    .collect()
            })
            .collect();
        AugmentedState {
            estimate: estimate.clone(),
            pending,
            default_input: self.default_input.clone(),
        }
    }

    /// `U_k = law(ξ̂_k)`; also records the packet for later augmented states.
    pub fn controller_step(&mut self, step: usize, estimate: &Vector) -> Option<ControlPacket> {
        let law = self.law.as_ref()?;
        let xi = self.augmented_state(step, estimate);
        let packet = ControlPacket {
            origin_step: step,
            inputs: law.sequence(step, &xi, self.sequence_len()),
        };
        self.sent.push_back(packet.clone());
        while self.sent.len() > self.n_a {
            self.sent.pop_front();
        }
        Some(packet)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m1(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    #[test]
    fn scalar_riccati_golden_ratio() {
        let law = default_feedback_law(&m1(1.0), &m1(1.0), &m1(1.0), &m1(1.0), LqrHorizon::Infinite).unwrap();
        let p = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((law.gain(0)[(0, 0)] - p / (1.0 + p)).abs() < 1e-10);
    }

    #[test]
    fn no_input_authority_gives_zero_gain() {
        let law = default_feedback_law(&m1(1.2), &m1(0.0), &m1(1.0), &m1(1.0), LqrHorizon::Finite(20)).unwrap();
        for k in 0..20 {
            assert_eq!(law.gain(k)[(0, 0)], 0.0);
        }
        let diverged = default_feedback_law(&m1(1.2), &m1(0.0), &m1(1.0), &m1(1.0), LqrHorizon::Infinite);
        assert!(matches!(diverged, Err(Error::Config { ref field, .. }) if field == "controller.riccati"));
    }

    #[test]
    fn finite_horizon_converges_to_infinite() {
        let a = Mat::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        let b = Mat::from_row_slice(2, 1, &[0.0, 0.1]);
        let q = Mat::identity(2, 2);
        let r = m1(0.5);
        let inf = default_feedback_law(&a, &b, &q, &r, LqrHorizon::Infinite).unwrap();
        let fin = default_feedback_law(&a, &b, &q, &r, LqrHorizon::Finite(2000)).unwrap();
        assert!((inf.gain(0) - fin.gain(0)).amax() < 1e-8);
    }

    #[test]
    fn law_is_linear_in_state() {
        let a = Mat::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        let b = Mat::from_row_slice(2, 1, &[0.0, 0.1]);
        let law = default_feedback_law(&a, &b, &Mat::identity(2, 2), &m1(1.0), LqrHorizon::Infinite).unwrap();
        let xi = |x: Vector| AugmentedState {
            estimate: x,
            pending: vec![],
            default_input: Vector::zeros(1),
        };
        let x = Vector::from_vec(vec![0.4, -1.1]);
        let base = law.sequence(0, &xi(x.clone()), 4);
        let scaled = law.sequence(0, &xi(&x * 2.5), 4);
        for (u, v) in base.iter().zip(&scaled) {
            assert!((u * 2.5 - v).amax() < 1e-12);
        }
        let zero = law.sequence(0, &xi(Vector::zeros(2)), 4);
        assert!(zero.iter().all(|u| u.amax() == 0.0));
    }

    #[test]
    fn constant_law_plumbing() {
        let law: Arc<dyn FeedbackLaw> = Arc::new(ConstantLaw(Vector::from_element(1, 0.25)));
        let mut ctl = SequenceController::new(2, Vector::zeros(1), Some(law));
        let p = ctl.controller_step(3, &Vector::zeros(1)).unwrap();
        assert_eq!(p.origin_step, 3);
        assert_eq!(p.inputs.len(), 3);
        assert!(p.inputs.iter().all(|u| u[0] == 0.25));
        let mut silent = SequenceController::new(2, Vector::zeros(1), None);
        assert!(silent.controller_step(0, &Vector::zeros(1)).is_none());
    }

    #[test]
    fn augmented_state_layout() {
        let law: Arc<dyn FeedbackLaw> = Arc::new(ConstantLaw(Vector::from_element(1, 1.0)));
        let n_a = 3;
        let mut ctl = SequenceController::new(n_a, Vector::from_element(1, -5.0), Some(law));
        for k in 0..5 {
            ctl.controller_step(k, &Vector::zeros(2));
        }
        let xi = ctl.augmented_state(5, &Vector::from_vec(vec![7.0, 8.0]));
        assert_eq!(xi.pending.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 2, 1]);
        let v = xi.to_vector();
        assert_eq!(v.len(), AugmentedState::dim(2, 1, n_a));
        assert_eq!(v[0], 7.0);
        assert_eq!(v[v.len() - 1], -5.0);
        assert!(v.rows(2, 6).iter().all(|&u| u == 1.0));

        let fresh = SequenceController::new(n_a, Vector::zeros(1), None).augmented_state(0, &Vector::zeros(2));
        assert!(fresh.pending.iter().flatten().all(|u| u[0] == 0.0));
    }
}
