//! Anchor factors: spectral initialisation, ground-truth anchors and their
//! convex interpolation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{compact_svd, spectral_norm, truncated_svd, CompactSvd, ComplexMatrix, RANK_TOL};
use crate::operator::{backproject, FactorPair, MeasurementVector};
use crate::sketch::SketchEnsemble;

/// Relative floor for the r-th singular value of an anchor matrix.
pub const ANCHOR_RANK_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AnchorSource {
    Spectral,
    Oracle,
    Interpolated { alpha: f64 },
    Matrix,
}

/// Balanced anchor `(X~0, Y~0) = (U S^{1/2}, V S^{1/2})` of a rank-r matrix.
#[derive(Clone, Debug)]
pub struct AnchorEstimate {
    pub factors: FactorPair,
    pub sigma: Vec<f64>,
    pub source: AnchorSource,
}

impl AnchorEstimate {
    pub fn x(&self) -> &ComplexMatrix {
        &self.factors.x
    }

    pub fn y(&self) -> &ComplexMatrix {
        &self.factors.y
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// `X~0 Y~0^*`.
    pub fn product(&self) -> ComplexMatrix {
        self.factors.product()
    }

    /// `||X~0^* X~0 - Y~0^* Y~0||_F`.
    pub fn imbalance(&self) -> f64 {
        let gx = self.x().adjoint_mul(self.x());
        let gy = self.y().adjoint_mul(self.y());
        (&gx - &gy).frobenius_norm()
    }
}

fn balanced(svd: &CompactSvd, source: AnchorSource) -> AnchorEstimate {
    let mut x = svd.u.clone();
    let mut y = svd.v.clone();
    for (k, &s) in svd.sigma.iter().enumerate() {
        let h = s.sqrt();
        for i in 0..x.rows() {
            x[(i, k)] *= h;
        }
        for i in 0..y.rows() {
            y[(i, k)] *= h;
        }
    }
    AnchorEstimate {
        factors: FactorPair { x, y },
        sigma: svd.sigma.clone(),
        source,
    }
}

/// Best rank-`r` approximation of `m`, factored in balanced form.
pub fn anchor_from_matrix(m: &ComplexMatrix, r: usize, source: AnchorSource) -> Result<AnchorEstimate> {
    let svd = truncated_svd(m, r)?;
    let available = svd
        .sigma
        .iter()
        .filter(|&&s| s >= ANCHOR_RANK_TOL * svd.sigma[0])
        .count();
    if available < r {
        return Err(Error::RankDeficient {
            requested: r,
            available,
        });
    }
    Ok(balanced(&svd, source))
}

/// Rank-`r` truncation of the backprojection `(1/n) sum_i m_i a_i b_i^*`.
pub fn spectral_init(e: &SketchEnsemble, m: &MeasurementVector, r: usize) -> Result<AnchorEstimate> {
    if r == 0 || r > e.d1().min(e.d2()) {
        return Err(Error::invalid(format!(
            "anchor rank {r} outside 1..={}",
            e.d1().min(e.d2())
        )));
    }
    let g = backproject(m, e)?;
    anchor_from_matrix(&g, r, AnchorSource::Spectral)
}

/// Rebalance ground-truth factors so that `X^* X = Y^* Y`.
pub fn oracle_anchor(truth: &FactorPair) -> Result<AnchorEstimate> {
    let r = truth.rank();
    let svd = compact_svd(&truth.product(), RANK_TOL)?;
    if svd.rank() < r || svd.sigma.last().is_some_and(|&s| s < ANCHOR_RANK_TOL * svd.sigma[0]) {
        return Err(Error::RankDeficient {
            requested: r,
            available: svd.rank(),
        });
    }
    Ok(balanced(&svd.truncate(r), AnchorSource::Oracle))
}

/// Rank-`r` balanced factors of `alpha * spectral + (1 - alpha) * M0`.
pub fn interpolate_anchor(
    spectral: &AnchorEstimate,
    truth: &FactorPair,
    alpha: f64,
    r: usize,
) -> Result<AnchorEstimate> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha {alpha} outside [0, 1]")));
    }
    let mut mix = truth.product().scale(1.0 - alpha);
    mix.axpy(crate::linalg::C64::new(alpha, 0.0), &spectral.product());
    anchor_from_matrix(&mix, r, AnchorSource::Interpolated { alpha })
}

/// Spectral-norm anchor error `||X~0 Y~0^* - M0||`.
pub fn anchor_error(anchor: &AnchorEstimate, m0: &ComplexMatrix) -> Result<f64> {
    spectral_norm(&(&anchor.product() - m0))
}
