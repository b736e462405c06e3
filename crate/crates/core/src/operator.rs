//! The sketching operator, the per-sample loss and the anchored objective.
//!
//! Normalisation convention: `A(M)_i = n^{-1/2} a_i^* M b_i` and its true
//! adjoint under the real inner product is `A^*(y) = n^{-1/2} sum_i y_i a_i b_i^*`.
//! The composition `A^* A(M) = (1/n) sum_i a_i a_i^* M b_i b_i^*` is available
//! as [`gram_map`], computed as [`backproject`] of [`forward_raw`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot_c, real_inner, real_inner_slices, ComplexMatrix, C64, ZERO};
use crate::rng::{self, stream};
use crate::sketch::SketchEnsemble;

/// Factor pair `(X, Y)` with `X: d1 x r`, `Y: d2 x r`.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorPair {
    pub x: ComplexMatrix,
    pub y: ComplexMatrix,
}

impl FactorPair {
    pub fn new(x: ComplexMatrix, y: ComplexMatrix) -> Result<Self> {
        if x.cols() != y.cols() {
            return Err(Error::ShapeMismatch {
                op: "factor pair",
                expected: (y.rows(), x.cols()),
                found: y.shape(),
            });
        }
        Ok(Self { x, y })
    }

    pub fn zeros(d1: usize, d2: usize, r: usize) -> Self {
        Self {
            x: ComplexMatrix::zeros(d1, r),
            y: ComplexMatrix::zeros(d2, r),
        }
    }

    pub fn rank(&self) -> usize {
        self.x.cols()
    }

    pub fn d1(&self) -> usize {
        self.x.rows()
    }

    pub fn d2(&self) -> usize {
        self.y.rows()
    }

    /// `X Y^*`.
    pub fn product(&self) -> ComplexMatrix {
        self.x.mul_adjoint(&self.y)
    }

    /// `[X; Y]`.
    pub fn stacked(&self) -> ComplexMatrix {
        ComplexMatrix::vstack(&self.x, &self.y).expect("factor columns agree")
    }

    pub fn from_stacked(z: &ComplexMatrix, d1: usize) -> Self {
        let (x, y) = z.split_rows(d1);
        Self { x, y }
    }

    /// `Re tr(X1^* X2) + Re tr(Y1^* Y2)`.
    pub fn inner(&self, other: &Self) -> f64 {
        real_inner_slices(self.x.as_slice(), other.x.as_slice())
            + real_inner_slices(self.y.as_slice(), other.y.as_slice())
    }

    /// `self + s * dir`.
    pub fn step(&self, s: f64, dir: &Self) -> Self {
        let mut out = self.clone();
        out.x.axpy(C64::new(s, 0.0), &dir.x);
        out.y.axpy(C64::new(s, 0.0), &dir.y);
        out
    }

    pub fn norm(&self) -> f64 {
        (self.x.norm_sq() + self.y.norm_sq()).sqrt()
    }

    fn check_against(&self, e: &SketchEnsemble, op: &'static str) -> Result<()> {
        if self.x.rows() != e.d1() || self.y.rows() != e.d2() {
            return Err(Error::ShapeMismatch {
                op,
                expected: (e.d1(), e.d2()),
                found: (self.x.rows(), self.y.rows()),
            });
        }
        Ok(())
    }
}

/// Measurements `m_i`, possibly noisy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementVector {
    pub values: Vec<C64>,
    /// Standard deviation of added noise (0 for noiseless data).
    pub noise_sigma: f64,
}

impl MeasurementVector {
    pub fn noiseless(values: Vec<C64>) -> Self {
        Self {
            values,
            noise_sigma: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `sum_i |m_i|^2`.
    pub fn energy(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum()
    }
}

fn check_matrix(m: &ComplexMatrix, e: &SketchEnsemble, op: &'static str) -> Result<()> {
    if m.shape() != (e.d1(), e.d2()) {
        return Err(Error::ShapeMismatch {
            op,
            expected: (e.d1(), e.d2()),
            found: m.shape(),
        });
    }
    Ok(())
}

fn check_len(len: usize, e: &SketchEnsemble, op: &'static str) -> Result<()> {
    if len != e.n() {
        return Err(Error::ShapeMismatch {
            op,
            expected: (e.n(), 1),
            found: (len, 1),
        });
    }
    Ok(())
}

fn raw_values(m: &ComplexMatrix, e: &SketchEnsemble) -> Vec<C64> {
    (0..e.n()).map(|i| dot_c(e.a(i), &m.mul_vec(e.b(i)))).collect()
}

/// `m_i = a_i^* M b_i` without normalisation.
pub fn forward_raw(m: &ComplexMatrix, e: &SketchEnsemble) -> Result<MeasurementVector> {
    check_matrix(m, e, "forward_raw")?;
    Ok(MeasurementVector::noiseless(raw_values(m, e)))
}

/// `A(M)_i = n^{-1/2} a_i^* M b_i`.
pub fn forward_normalized(m: &ComplexMatrix, e: &SketchEnsemble) -> Result<Vec<C64>> {
    check_matrix(m, e, "forward_normalized")?;
    let s = 1.0 / (e.n() as f64).sqrt();
    Ok(raw_values(m, e).into_iter().map(|z| z * s).collect())
}

/// `sum_i w_i a_i b_i^*` scaled by `scale`.
fn weighted_dyads(w: &[C64], e: &SketchEnsemble, scale: f64) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(e.d1(), e.d2());
    for (i, &wi) in w.iter().enumerate() {
        let b = e.b(i);
        for (j, &aj) in e.a(i).iter().enumerate() {
            let c = wi * aj;
            for (o, &bk) in out.row_mut(j).iter_mut().zip(b) {
                *o += c * bk.conj();
            }
        }
    }
    out.scale(scale)
}

/// Adjoint of [`forward_normalized`]: `n^{-1/2} sum_i y_i a_i b_i^*`.
pub fn adjoint_normalized(y: &[C64], e: &SketchEnsemble) -> Result<ComplexMatrix> {
    check_len(y.len(), e, "adjoint_normalized")?;
    Ok(weighted_dyads(y, e, 1.0 / (e.n() as f64).sqrt()))
}

/// Backprojection `(1/n) sum_i m_i a_i b_i^*`.
pub fn backproject(m: &MeasurementVector, e: &SketchEnsemble) -> Result<ComplexMatrix> {
    check_len(m.len(), e, "backproject")?;
    Ok(weighted_dyads(&m.values, e, 1.0 / e.n() as f64))
}

/// `A^* A(M) = (1/n) sum_i a_i a_i^* M b_i b_i^*`.
pub fn gram_map(m: &ComplexMatrix, e: &SketchEnsemble) -> Result<ComplexMatrix> {
    backproject(&forward_raw(m, e)?, e)
}

/// How the noise level is tied to a requested SNR.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnrMode {
    /// `SNR = 10 log10(sum_i |m_i|^2 / sigma^2)`.
    #[default]
    Aggregate,
    /// `SNR = 10 log10((1/n) sum_i |m_i|^2 / sigma^2)`.
    PerSample,
}

/// Signal-to-noise ratio in dB for clean measurements `m` and noise level `sigma`.
pub fn snr_db(m: &MeasurementVector, sigma: f64, mode: SnrMode) -> f64 {
    let power = match mode {
        SnrMode::Aggregate => m.energy(),
        SnrMode::PerSample => m.energy() / m.len() as f64,
    };
    10.0 * (power / (sigma * sigma)).log10()
}

/// Noise level that achieves `snr` dB on clean measurements `m`.
pub fn sigma_for_snr(m: &MeasurementVector, snr: f64, mode: SnrMode) -> f64 {
    let power = match mode {
        SnrMode::Aggregate => m.energy(),
        SnrMode::PerSample => m.energy() / m.len() as f64,
    };
    (power / 10f64.powf(snr / 10.0)).sqrt()
}

/// Add i.i.d. real `N(0, sigma^2)` noise to each measurement.
pub fn add_noise(m: &MeasurementVector, sigma: f64, seed: u64) -> Result<MeasurementVector> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("noise level {sigma} must be >= 0")));
    }
    if sigma == 0.0 {
        return Ok(m.clone());
    }
    let mut rng = rng::stream_rng(seed, &[stream::NOISE]);
    let values = m
        .values
        .iter()
        .map(|&z| z + C64::new(sigma * rng::normal(&mut rng), 0.0))
        .collect();
    Ok(MeasurementVector {
        values,
        noise_sigma: sigma,
    })
}

/// Per-sample quantities `u_i = X^* a_i`, `v_i = Y^* b_i` and residual
/// `z_i = a_i^* X Y^* b_i - m_i`, stored flat.
struct SampleTerms {
    r: usize,
    u: Vec<C64>,
    v: Vec<C64>,
    z: Vec<C64>,
}

impl SampleTerms {
    fn compute(z: &FactorPair, e: &SketchEnsemble, m: &[C64]) -> Self {
        let r = z.rank();
        let n = e.n();
        let mut u = vec![ZERO; n * r];
        let mut v = vec![ZERO; n * r];
        let mut res = Vec::with_capacity(n);
        for i in 0..n {
            let ui = &mut u[i * r..(i + 1) * r];
            project_conj(&z.x, e.a(i), ui);
            let vi = &mut v[i * r..(i + 1) * r];
            project_conj(&z.y, e.b(i), vi);
            // a^* X Y^* b = (X^* a)^* (Y^* b)
            res.push(dot_c(ui, vi) - m[i]);
        }
        Self { r, u, v, z: res }
    }

    #[inline]
    fn u(&self, i: usize) -> &[C64] {
        &self.u[i * self.r..(i + 1) * self.r]
    }

    #[inline]
    fn v(&self, i: usize) -> &[C64] {
        &self.v[i * self.r..(i + 1) * self.r]
    }

    fn loss(&self, i: usize) -> f64 {
        let qu: f64 = self.u(i).iter().map(|x| x.norm_sqr()).sum();
        let qv: f64 = self.v(i).iter().map(|x| x.norm_sqr()).sum();
        0.5 * qu + 0.5 * qv + self.z[i].norm()
    }

    fn mean_loss(&self) -> f64 {
        let n = self.z.len();
        (0..n).map(|i| self.loss(i)).sum::<f64>() / n as f64
    }
}

/// `out = F^* x` for `F: d x r`, `x in C^d`.
#[inline]
fn project_conj(f: &ComplexMatrix, x: &[C64], out: &mut [C64]) {
    out.fill(ZERO);
    for (j, &xj) in x.iter().enumerate() {
        if xj == ZERO {
            continue;
        }
        for (o, &fjk) in out.iter_mut().zip(f.row(j)) {
            *o += fjk.conj() * xj;
        }
    }
}

fn check_problem(z: &FactorPair, e: &SketchEnsemble, m: &MeasurementVector, op: &'static str) -> Result<()> {
    z.check_against(e, op)?;
    check_len(m.len(), e, op)
}

/// `l_i(X, Y) = |X^* a_i|^2 / 2 + |Y^* b_i|^2 / 2 + |a_i^* X Y^* b_i - m_i|`.
pub fn loss_i(z: &FactorPair, e: &SketchEnsemble, m: &MeasurementVector, i: usize) -> Result<f64> {
    check_problem(z, e, m, "loss_i")?;
    if i >= e.n() {
        return Err(Error::invalid(format!("sample index {i} out of range 0..{}", e.n())));
    }
    let r = z.rank();
    let mut u = vec![ZERO; r];
    let mut v = vec![ZERO; r];
    project_conj(&z.x, e.a(i), &mut u);
    project_conj(&z.y, e.b(i), &mut v);
    let resid = dot_c(&u, &v) - m.values[i];
    let qu: f64 = u.iter().map(|x| x.norm_sqr()).sum();
    let qv: f64 = v.iter().map(|x| x.norm_sqr()).sum();
    Ok(0.5 * qu + 0.5 * qv + resid.norm())
}

/// The residual `a_i^* X Y^* b_i - m_i`.
pub fn residual_i(z: &FactorPair, e: &SketchEnsemble, m: &MeasurementVector, i: usize) -> Result<C64> {
    check_problem(z, e, m, "residual_i")?;
    if i >= e.n() {
        return Err(Error::invalid(format!("sample index {i} out of range 0..{}", e.n())));
    }
    let xa = e.a(i);
    let yb = e.b(i);
    let mut u = vec![ZERO; z.rank()];
    let mut v = vec![ZERO; z.rank()];
    project_conj(&z.x, xa, &mut u);
    project_conj(&z.y, yb, &mut v);
    Ok(dot_c(&u, &v) - m.values[i])
}

fn anchor_term(z: &FactorPair, anchor: &FactorPair) -> Result<f64> {
    Ok(real_inner(&anchor.x, &z.x)? + real_inner(&anchor.y, &z.y)?)
}

/// `f(X, Y) = -<X~0, X> - <Y~0, Y> + (1/n) sum_i l_i(X, Y)`.
pub fn objective(z: &FactorPair, anchor: &FactorPair, e: &SketchEnsemble, m: &MeasurementVector) -> Result<f64> {
    check_problem(z, e, m, "objective")?;
    let lin = anchor_term(z, anchor)?;
    Ok(-lin + SampleTerms::compute(z, e, &m.values).mean_loss())
}

/// Default relative gate below which a residual is treated as zero.
pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-12;

/// Objective value and a subgradient at the same point.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub objective: f64,
    pub gradient: FactorPair,
    /// Samples whose residual fell under the gate.
    pub gated: usize,
}

/// Evaluate `f` and a subgradient `G` at `z`.
///
/// With `phi_i = z_i / |z_i|` for the residual `z_i = a_i^* X Y^* b_i - m_i`,
///
/// ```text
/// G_X = -X~0 + (1/n) sum_i a_i (a_i^* X + phi_i b_i^* Y)
/// G_Y = -Y~0 + (1/n) sum_i b_i (b_i^* Y + conj(phi_i) a_i^* X)
/// ```
///
/// which is the gradient under `<U, V> = Re tr(U^* V)` wherever every residual
/// is nonzero. Samples with `|z_i| < residual_tol (1 + |m_i|)` use `phi_i = 0`.
pub fn evaluate(
    z: &FactorPair,
    anchor: &FactorPair,
    e: &SketchEnsemble,
    m: &MeasurementVector,
    residual_tol: f64,
) -> Result<Evaluation> {
    check_problem(z, e, m, "subgradient")?;
    anchor.check_against(e, "subgradient")?;
    if anchor.rank() != z.rank() {
        return Err(Error::ShapeMismatch {
            op: "subgradient",
            expected: (z.d1(), z.rank()),
            found: anchor.x.shape(),
        });
    }
    let terms = SampleTerms::compute(z, e, &m.values);
    let n = e.n();
    let r = z.rank();
    let inv_n = 1.0 / n as f64;
    let mut gx = anchor.x.scale(-1.0);
    let mut gy = anchor.y.scale(-1.0);
    let mut cx = vec![ZERO; r];
    let mut cy = vec![ZERO; r];
    let mut gated = 0;
    for i in 0..n {
        let zi = terms.z[i];
        let mag = zi.norm();
        let phi = if mag < residual_tol * (1.0 + m.values[i].norm()) {
            gated += 1;
            ZERO
        } else {
            zi / mag
        };
        let ui = terms.u(i);
        let vi = terms.v(i);
        // a^* X = u^*, b^* Y = v^*
        for k in 0..r {
            cx[k] = (ui[k].conj() + phi * vi[k].conj()) * inv_n;
            cy[k] = (vi[k].conj() + phi.conj() * ui[k].conj()) * inv_n;
        }
        for (j, &aj) in e.a(i).iter().enumerate() {
            for (g, &c) in gx.row_mut(j).iter_mut().zip(&cx) {
                *g += aj * c;
            }
        }
        for (j, &bj) in e.b(i).iter().enumerate() {
            for (g, &c) in gy.row_mut(j).iter_mut().zip(&cy) {
                *g += bj * c;
            }
        }
    }
    let objective = -anchor_term(z, anchor)? + terms.mean_loss();
    Ok(Evaluation {
        objective,
        gradient: FactorPair { x: gx, y: gy },
        gated,
    })
}

/// Stacked `(d1 + d2) x r` subgradient `[G_X; G_Y]` of the objective.
pub fn subgradient(
    z: &FactorPair,
    anchor: &FactorPair,
    e: &SketchEnsemble,
    m: &MeasurementVector,
    residual_tol: f64,
) -> Result<ComplexMatrix> {
    if !(residual_tol >= 0.0) {
        return Err(Error::invalid("residual tolerance must be >= 0"));
    }
    Ok(evaluate(z, anchor, e, m, residual_tol)?.gradient.stacked())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ONE;
    use crate::rng::complex_gaussian_matrix;
    use crate::sketch::{sample_complex_gaussian, SketchModel};

    fn basis(d: usize, k: usize) -> Vec<C64> {
        let mut v = vec![ZERO; d];
        v[k] = ONE;
        v
    }

    fn random_pair(d1: usize, d2: usize, r: usize, seed: u64) -> FactorPair {
        let mut rng = crate::rng::stream_rng(seed, &[99]);
        FactorPair::new(
            complex_gaussian_matrix(&mut rng, d1, r),
            complex_gaussian_matrix(&mut rng, d2, r),
        )
        .unwrap()
    }

    #[test]
    fn forward_zero_and_pickoff() {
        let e = sample_complex_gaussian(3, 4, 7, 1).unwrap();
        let m = forward_raw(&ComplexMatrix::zeros(3, 4), &e).unwrap();
        assert!(m.values.iter().all(|&z| z == ZERO));

        let a = ComplexMatrix::from_vec(1, 2, basis(2, 0)).unwrap();
        let b = ComplexMatrix::from_vec(1, 2, basis(2, 1)).unwrap();
        let e = SketchEnsemble::from_vectors(a, b, SketchModel::ComplexGaussian, 0).unwrap();
        let mut m0 = ComplexMatrix::zeros(2, 2);
        m0[(0, 1)] = C64::new(5.0, 0.0);
        let y = forward_raw(&m0, &e).unwrap();
        assert_eq!(y.values, vec![C64::new(5.0, 0.0)]);
        let back = adjoint_normalized(&[ONE], &e).unwrap();
        assert_eq!(back, ComplexMatrix::outer(&basis(2, 0), &basis(2, 1)));
    }

    #[test]
    fn forward_matches_double_sum() {
        let e = sample_complex_gaussian(3, 3, 5, 2).unwrap();
        let mut rng = crate::rng::stream_rng(3, &[]);
        let m = complex_gaussian_matrix(&mut rng, 3, 3);
        let y = forward_raw(&m, &e).unwrap();
        for i in 0..5 {
            let mut s = ZERO;
            for j in 0..3 {
                for k in 0..3 {
                    s += e.a(i)[j].conj() * m[(j, k)] * e.b(i)[k];
                }
            }
            assert!((s - y.values[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn forward_shape_errors() {
        let e = sample_complex_gaussian(3, 3, 5, 2).unwrap();
        assert!(forward_raw(&ComplexMatrix::zeros(2, 3), &e).is_err());
        assert!(adjoint_normalized(&[ONE; 4], &e).is_err());
    }

    #[test]
    fn adjoint_identity() {
        let e = sample_complex_gaussian(5, 4, 9, 4).unwrap();
        let mut rng = crate::rng::stream_rng(5, &[]);
        let m = complex_gaussian_matrix(&mut rng, 5, 4);
        let y: Vec<C64> = (0..9).map(|_| crate::rng::complex_normal(&mut rng)).collect();
        let lhs = real_inner_slices(&forward_normalized(&m, &e).unwrap(), &y);
        let rhs = real_inner(&m, &adjoint_normalized(&y, &e).unwrap()).unwrap();
        assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn noise_behaviour() {
        let m = MeasurementVector::noiseless(vec![C64::new(1.0, 2.0); 100_000]);
        assert_eq!(add_noise(&m, 0.0, 1).unwrap(), m);
        let noisy = add_noise(&m, 0.3, 1).unwrap();
        assert_eq!(noisy.noise_sigma, 0.3);
        let diffs: Vec<C64> = noisy.values.iter().zip(&m.values).map(|(a, b)| a - b).collect();
        assert!(diffs.iter().all(|d| d.im == 0.0));
        let n = diffs.len() as f64;
        let mean: f64 = diffs.iter().map(|d| d.re).sum::<f64>() / n;
        let var: f64 = diffs.iter().map(|d| (d.re - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var / 0.09 - 1.0).abs() < 0.05);
        assert!(add_noise(&m, -1.0, 1).is_err());
    }

    #[test]
    fn snr_round_trip() {
        let m = MeasurementVector::noiseless(vec![C64::new(3.0, 0.0), C64::new(0.0, 4.0)]);
        // sum |m|^2 = 25
        assert!((snr_db(&m, 0.5, SnrMode::Aggregate) - 10.0 * (25.0f64 / 0.25).log10()).abs() < 1e-12);
        assert!((snr_db(&m, 0.5, SnrMode::PerSample) - 10.0 * (12.5f64 / 0.25).log10()).abs() < 1e-12);
        for mode in [SnrMode::Aggregate, SnrMode::PerSample] {
            let s = sigma_for_snr(&m, 17.0, mode);
            assert!((snr_db(&m, s, mode) - 17.0).abs() < 1e-10);
        }
    }

    #[test]
    fn loss_at_zero_and_exact_fit() {
        let e = sample_complex_gaussian(4, 3, 6, 7).unwrap();
        let truth = random_pair(4, 3, 2, 1);
        let m = forward_raw(&truth.product(), &e).unwrap();
        let zero = FactorPair::zeros(4, 3, 2);
        for i in 0..6 {
            assert!((loss_i(&zero, &e, &m, i).unwrap() - m.values[i].norm()).abs() < 1e-14);
            let l = loss_i(&truth, &e, &m, i).unwrap();
            let mut u = vec![ZERO; 2];
            let mut v = vec![ZERO; 2];
            project_conj(&truth.x, e.a(i), &mut u);
            project_conj(&truth.y, e.b(i), &mut v);
            let quad = 0.5 * crate::linalg::vec_norm(&u).powi(2) + 0.5 * crate::linalg::vec_norm(&v).powi(2);
            assert!((l - quad).abs() < 1e-10 * (1.0 + quad));
        }
        assert!(loss_i(&zero, &e, &m, 6).is_err());
    }

    #[test]
    fn objective_without_anchor_is_mean_loss() {
        let e = sample_complex_gaussian(4, 3, 6, 7).unwrap();
        let m = forward_raw(&random_pair(4, 3, 1, 2).product(), &e).unwrap();
        let z = random_pair(4, 3, 1, 3);
        let f = objective(&z, &FactorPair::zeros(4, 3, 1), &e, &m).unwrap();
        let mean: f64 = (0..6).map(|i| loss_i(&z, &e, &m, i).unwrap()).sum::<f64>() / 6.0;
        assert!((f - mean).abs() < 1e-12);
    }

    #[test]
    fn subgradient_zero_point() {
        let e = sample_complex_gaussian(4, 3, 6, 7).unwrap();
        let m = forward_raw(&random_pair(4, 3, 1, 2).product(), &e).unwrap();
        let zero = FactorPair::zeros(4, 3, 1);
        let g = subgradient(&zero, &zero, &e, &m, DEFAULT_RESIDUAL_TOL).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn residual_invariant_under_gauge() {
        let e = sample_complex_gaussian(4, 3, 6, 8).unwrap();
        let m = forward_raw(&random_pair(4, 3, 2, 2).product(), &e).unwrap();
        let z = random_pair(4, 3, 2, 4);
        let q = ComplexMatrix::from_vec(
            2,
            2,
            vec![
                C64::new(2.0, 0.5),
                C64::new(0.3, -1.0),
                C64::new(0.0, 0.7),
                C64::new(1.5, 0.0),
            ],
        )
        .unwrap();
        // Q^{-*} for a 2x2 matrix.
        let det = q[(0, 0)] * q[(1, 1)] - q[(0, 1)] * q[(1, 0)];
        let qinv = ComplexMatrix::from_vec(
            2,
            2,
            vec![q[(1, 1)] / det, -q[(0, 1)] / det, -q[(1, 0)] / det, q[(0, 0)] / det],
        )
        .unwrap();
        let moved = FactorPair::new(&z.x * &q, &z.y * &qinv.adjoint()).unwrap();
        for i in 0..6 {
            let a = residual_i(&z, &e, &m, i).unwrap();
            let b = residual_i(&moved, &e, &m, i).unwrap();
            assert!((a - b).norm() < 1e-10 * (1.0 + a.norm()));
        }
    }
}

#[cfg(test)]
mod gradient_tests {
    use super::*;
    use crate::rng::complex_gaussian_matrix;
    use crate::sketch::sample_complex_gaussian;

    fn random_pair(rng: &mut rand_chacha::ChaCha8Rng) -> FactorPair {
        FactorPair::new(complex_gaussian_matrix(rng, 5, 2), complex_gaussian_matrix(rng, 4, 2)).unwrap()
    }

    #[test]
    fn central_difference_matches() {
        let e = sample_complex_gaussian(5, 4, 30, 1).unwrap();
        let mut rng = crate::rng::stream_rng(2, &[]);
        let truth = random_pair(&mut rng);
        let m = forward_raw(&truth.product(), &e).unwrap();
        let anchor = random_pair(&mut rng);
        let z = random_pair(&mut rng);
        let g = evaluate(&z, &anchor, &e, &m, 1e-12).unwrap().gradient;
        for _ in 0..10 {
            let d = random_pair(&mut rng);
            let h = 1e-6;
            let fp = objective(&z.step(h, &d), &anchor, &e, &m).unwrap();
            let fm = objective(&z.step(-h, &d), &anchor, &e, &m).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            assert!(
                (fd - g.inner(&d)).abs() <= 1e-5 * fd.abs().max(1.0),
                "fd {fd} vs {}",
                g.inner(&d)
            );
        }
    }
}
