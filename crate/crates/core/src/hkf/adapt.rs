//! Heuristic HGMM adaptation from the fused correction matrix.
//!
//! When the hypothesis matches the information that actually reaches the
//! controller, `Δ_f` stays at the identity. A persistent deviation means
//! the hypothesis is off: directions where the averaged `Δ_f` is below the
//! identity received less information than hypothesized and are scaled
//! down, directions above it are scaled up.

use serde::{Deserialize, Serialize};

use crate::linalg::{self, Mat};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptConfig {
    /// Number of consecutive fused steps averaged before adapting.
    pub window: usize,
    /// Eigenvalue deviation from 1 tolerated without change.
    pub margin: f64,
    /// Exponent applied to the per-direction factor; 1 jumps to the
    /// observed ratio, smaller values damp the update.
    pub rate: f64,
    /// Per-update factor bound, `[1/max_factor, max_factor]`.
    pub max_factor: f64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            window: 10,
            margin: 0.1,
            rate: 1.0,
            max_factor: 4.0,
        }
    }
}

/// New hypothesis information from the last `cfg.window` fused correction
/// matrices; returns `hgmm` unchanged when the history is too short.
pub fn adapt_hgmm(history: &[Mat], hgmm: &Mat, cfg: &AdaptConfig) -> Mat {
    if cfg.window == 0 || history.len() < cfg.window {
        return hgmm.clone();
    }
    let window = &history[history.len() - cfg.window..];
    let n = hgmm.nrows();
    let avg = window.iter().fold(Mat::zeros(n, n), |acc, d| acc + d) / cfg.window as f64;
    let eig = linalg::symmetrize(&avg).symmetric_eigen();
    let lo = 1.0 / cfg.max_factor;
    let factors = eig.eigenvalues.map(|d| {
        if (d - 1.0).abs() <= cfg.margin {
            1.0
        } else {
            d.clamp(lo, cfg.max_factor).powf(cfg.rate)
        }
    });
    if factors.iter().all(|&f| f == 1.0) {
        return hgmm.clone();
    }
    let root = &eig.eigenvectors * Mat::from_diagonal(&factors.map(f64::sqrt)) * eig.eigenvectors.transpose();
    linalg::symmetrize(&(&root * hgmm * &root))
}
