use crate::error::{Error, Result};
use crate::linalg::{orthonormal_columns, ComplexMatrix, C64};
use crate::operator::FactorPair;
use crate::rng::{self, stream, stream_rng};

/// Singular values log-linearly spaced from 1 down to `1 / kappa`.
pub fn spectrum(r: usize, kappa: f64) -> Vec<f64> {
    if r == 1 {
        return vec![1.0];
    }
    (0..r).map(|k| kappa.powf(-(k as f64) / (r - 1) as f64)).collect()
}

/// Random rank-`r` matrix `M0 = U diag(sigma) V^*` with Haar-like orthonormal
/// `U`, `V` (Gram-Schmidt of Gaussian matrices), `||M0|| = 1` and condition
/// number `kappa`. Returns balanced factors `(U S^{1/2}, V S^{1/2})` and `M0`.
///
/// With `real = true` the factors have zero imaginary part.
pub fn make_ground_truth_with(
    d1: usize,
    d2: usize,
    r: usize,
    kappa: f64,
    seed: u64,
    real: bool,
) -> Result<(FactorPair, ComplexMatrix)> {
    if r == 0 || r > d1.min(d2) {
        return Err(Error::invalid(format!("rank {r} outside 1..={}", d1.min(d2))));
    }
    if !(kappa >= 1.0) || !kappa.is_finite() {
        return Err(Error::invalid(format!("kappa {kappa} must be >= 1")));
    }
    let mut rng = stream_rng(seed, &[stream::GROUND_TRUTH]);
    let mut draw = |rows: usize| {
        if real {
            ComplexMatrix::from_fn(rows, r, |_, _| C64::new(rng::normal(&mut rng), 0.0))
        } else {
            rng::complex_gaussian_matrix(&mut rng, rows, r)
        }
    };
    let g1 = draw(d1);
    let g2 = draw(d2);
    let u = orthonormal_columns(&g1)?;
    let v = orthonormal_columns(&g2)?;
    let sigma = spectrum(r, kappa);
    let root: Vec<f64> = sigma.iter().map(|s| s.sqrt()).collect();
    let scale = |q: &ComplexMatrix| ComplexMatrix::from_fn(q.rows(), r, |i, k| q[(i, k)] * root[k]);
    let factors = FactorPair::new(scale(&u), scale(&v))?;
    let m0 = factors.product();
    Ok((factors, m0))
}

/// Complex ground truth; see [`make_ground_truth_with`].
pub fn make_ground_truth(d1: usize, d2: usize, r: usize, kappa: f64, seed: u64) -> Result<(FactorPair, ComplexMatrix)> {
    make_ground_truth_with(d1, d2, r, kappa, seed, false)
}
