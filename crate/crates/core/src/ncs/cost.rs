use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};

/// Running quadratic cost `Σ xᵀQx + uᵀRu`, plus `x_Kᵀ Q x_K` on finalization.
#[derive(Debug, Clone)]
pub struct CostAccumulator {
    q: Mat,
    r: Mat,
    total: f64,
}

impl CostAccumulator {
    pub fn new(q: Mat, r: Mat) -> Result<Self> {
        if !linalg::is_psd(&q, 1e-12) {
            return Err(Error::config(
                "controller.Q",
                "must be symmetric positive semi-definite",
            ));
        }
        if !linalg::is_pd(&r) {
            return Err(Error::config("controller.R", "must be symmetric positive definite"));
        }
        Ok(Self { q, r, total: 0.0 })
    }

    pub fn accumulate_cost(&mut self, x: &Vector, u: &Vector) -> f64 {
        self.total += x.dot(&(&self.q * x)) + u.dot(&(&self.r * u));
        self.total
    }

    pub fn finalize(mut self, x_final: &Vector) -> f64 {
        self.total += x_final.dot(&(&self.q * x_final));
        self.total
    }

    pub fn total(&self) -> f64 {
        self.total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_term() {
        let mut acc = CostAccumulator::new(Mat::identity(2, 2), Mat::identity(1, 1)).unwrap();
        assert_eq!(
            acc.accumulate_cost(&Vector::from_vec(vec![1.0, 1.0]), &Vector::from_element(1, 1.0)),
            3.0
        );
    }

    #[test]
    fn zero_trajectory() {
        let mut acc = CostAccumulator::new(Mat::identity(2, 2), Mat::identity(1, 1)).unwrap();
        for _ in 0..5 {
            acc.accumulate_cost(&Vector::zeros(2), &Vector::zeros(1));
        }
        assert_eq!(acc.finalize(&Vector::zeros(2)), 0.0);
    }

    #[test]
    fn scalar_three_step_run() {
        // x_{k+1} = 2 x_k + u_k, x_0 = 1, u = (1, -1, 0.5), Q = 3, R = 2.
        let mut acc = CostAccumulator::new(Mat::from_element(1, 1, 3.0), Mat::from_element(1, 1, 2.0)).unwrap();
        let mut x = 1.0;
        for u in [1.0, -1.0, 0.5] {
            acc.accumulate_cost(&Vector::from_element(1, x), &Vector::from_element(1, u));
            x = 2.0 * x + u;
        }
        // states 1, 3, 5, 10.5
        let want = 3.0 * (1.0 + 9.0 + 25.0) + 2.0 * (1.0 + 1.0 + 0.25) + 3.0 * 10.5 * 10.5;
        assert_eq!(acc.finalize(&Vector::from_element(1, x)), want);
    }

    #[test]
    fn weights_validated() {
        assert!(CostAccumulator::new(Mat::from_element(1, 1, -1.0), Mat::identity(1, 1)).is_err());
        assert!(CostAccumulator::new(Mat::identity(1, 1), Mat::zeros(1, 1)).is_err());
    }
}
