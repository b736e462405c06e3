//! Numerical checks of the recovery conditions: small-ball infimum over the
//! support space, isotropy of the sketches, anchor accuracy, Rademacher
//! complexity and moment identities of the sketch distributions.
//!
//! The small-ball estimate samples finitely many directions and can only
//! falsify the condition, never certify it.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::anchor::AnchorEstimate;
use crate::error::{Error, Result};
use crate::linalg::{dot_c, schatten_norm, singular_values, spectral_norm, truncated_svd, ComplexMatrix, C64};
use crate::rng::{self, derive_seed, stream, stream_rng};
use crate::sketch::{SketchEnsemble, SketchModel, WeightedDesign};

pub const DEFAULT_SMALLBALL_TRIALS: usize = 512;
pub const DEFAULT_C1: f64 = 10.0;
pub const DEFAULT_C2: f64 = 10.0;
pub const DEFAULT_RHO: f64 = 0.1;
/// Largest number of atom pairs enumerated by exact design moments.
pub const MAX_ENUMERATION: usize = 1_000_000;
const ORTHO_TOL: f64 = 1e-10;
const DEGENERATE_NORM: f64 = 1e-14;
/// Monte Carlo loops are split into this many independent streams.
const MC_CHUNKS: usize = 64;

/// Orthonormal bases of the column and row spaces of `M0`; the support space
/// is `T = { D1 V0^* + U0 D2^* }`.
#[derive(Clone, Debug)]
pub struct SupportSpaceBasis {
    pub u0: ComplexMatrix,
    pub v0: ComplexMatrix,
}

fn orthonormality_error(q: &ComplexMatrix) -> f64 {
    (&q.adjoint_mul(q) - &ComplexMatrix::identity(q.cols())).max_abs()
}

impl SupportSpaceBasis {
    pub fn new(u0: ComplexMatrix, v0: ComplexMatrix) -> Result<Self> {
        if u0.cols() != v0.cols() || u0.cols() == 0 {
            return Err(Error::invalid(format!(
                "basis ranks differ or vanish ({} vs {})",
                u0.cols(),
                v0.cols()
            )));
        }
        let dev = orthonormality_error(&u0).max(orthonormality_error(&v0));
        if dev > ORTHO_TOL {
            return Err(Error::invalid(format!("basis not orthonormal (deviation {dev:.3e})")));
        }
        Ok(Self { u0, v0 })
    }

    /// Leading `r` singular subspaces of `m0`.
    pub fn from_matrix(m0: &ComplexMatrix, r: usize) -> Result<Self> {
        let svd = truncated_svd(m0, r)?;
        if svd.rank() < r {
            return Err(Error::RankDeficient {
                requested: r,
                available: svd.rank(),
            });
        }
        Self::new(svd.u, svd.v)
    }

    pub fn d1(&self) -> usize {
        self.u0.rows()
    }

    pub fn d2(&self) -> usize {
        self.v0.rows()
    }

    pub fn rank(&self) -> usize {
        self.u0.cols()
    }
}

/// `P_T(Z) = U0 U0^* Z + Z V0 V0^* - U0 U0^* Z V0 V0^*`.
pub fn project_onto_t(z: &ComplexMatrix, b: &SupportSpaceBasis) -> Result<ComplexMatrix> {
    if z.shape() != (b.d1(), b.d2()) {
        return Err(Error::ShapeMismatch {
            op: "project_onto_t",
            expected: (b.d1(), b.d2()),
            found: z.shape(),
        });
    }
    // U0 (U0^* Z) + (Z - U0 U0^* Z) V0 V0^*
    let uz = b.u0.adjoint_mul(z);
    let left = b.u0.matmul(&uz)?;
    let rest = z - &left;
    let zv = rest.matmul(&b.v0)?;
    Ok(&left + &zv.mul_adjoint(&b.v0))
}

/// `P_T` of a complex Gaussian matrix, scaled to unit Frobenius norm.
pub fn sample_unit_t(b: &SupportSpaceBasis, seed: u64) -> ComplexMatrix {
    let mut rng = stream_rng(seed, &[stream::PROBE]);
    loop {
        let g = rng::complex_gaussian_matrix(&mut rng, b.d1(), b.d2());
        let h = project_onto_t(&g, b).expect("shape fixed by basis");
        let norm = h.frobenius_norm();
        if norm >= DEGENERATE_NORM {
            return h.scale(1.0 / norm);
        }
    }
}

fn check_basis(e: &SketchEnsemble, b: &SupportSpaceBasis, op: &'static str) -> Result<()> {
    if (e.d1(), e.d2()) != (b.d1(), b.d2()) {
        return Err(Error::ShapeMismatch {
            op,
            expected: (e.d1(), e.d2()),
            found: (b.d1(), b.d2()),
        });
    }
    Ok(())
}

fn mean_abs_sketch(e: &SketchEnsemble, h: &ComplexMatrix) -> f64 {
    let total: f64 = (0..e.n()).map(|i| dot_c(e.a(i), &h.mul_vec(e.b(i))).norm()).sum();
    total / e.n() as f64
}

fn map_indexed<T: Send>(count: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..count).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..count).map(f).collect()
    }
}

/// Minimum of `(1/n) sum_i |a_i^* H b_i|` over `trials` random unit `H` in `T`.
///
/// An upper estimate of the infimum; it can only decrease as `trials` grows.
pub fn estimate_smallball(e: &SketchEnsemble, b: &SupportSpaceBasis, trials: usize, seed: u64) -> Result<f64> {
    check_basis(e, b, "estimate_smallball")?;
    if trials == 0 {
        return Err(Error::invalid("small-ball estimate needs trials >= 1"));
    }
    let values = map_indexed(trials, |k| {
        let h = sample_unit_t(b, derive_seed(seed, &[k as u64]));
        mean_abs_sketch(e, &h)
    });
    Ok(values.into_iter().fold(f64::INFINITY, f64::min))
}

fn empirical_covariance(m: &ComplexMatrix) -> ComplexMatrix {
    // rows are the vectors; returns (1/n) sum_i v_i v_i^*
    let (n, d) = m.shape();
    let mut out = ComplexMatrix::zeros(d, d);
    for i in 0..n {
        let v = m.row(i);
        for (j, &vj) in v.iter().enumerate() {
            for (o, &vk) in out.row_mut(j).iter_mut().zip(v) {
                *o += vj * vk.conj();
            }
        }
    }
    out.scale(1.0 / n as f64)
}

/// Spectral norms of `I - (1/n) sum a_i a_i^*` and `I - (1/n) sum b_i b_i^*`.
pub fn isotropy_deviation(e: &SketchEnsemble) -> Result<(f64, f64)> {
    let dev = |m: &ComplexMatrix| {
        let c = empirical_covariance(m);
        spectral_norm(&(&ComplexMatrix::identity(c.rows()) - &c))
    };
    Ok((dev(e.a_matrix())?, dev(e.b_matrix())?))
}

/// `||I - E a a^*||` for a scaled design atom `a = sqrt(d) w`, evaluated exactly.
pub fn design_isotropy_deviation(design: &WeightedDesign) -> Result<f64> {
    let cov = crate::sketch::design_isotropy(design);
    spectral_norm(&(&ComplexMatrix::identity(design.dim) - &cov))
}

/// Gaussian isotropy envelope `3 max(sqrt(4d/n), 4d/n)`.
pub fn wishart_envelope(d: usize, n: usize) -> f64 {
    let q = 4.0 * d as f64 / n as f64;
    3.0 * q.sqrt().max(q)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnchorCheck {
    /// `||X~0 Y~0^* - M0|| C2 sqrt(r) kappa^2 / (rho ||M0||)`; passes when `<= 1`.
    pub ratio: f64,
    pub passed: bool,
}

/// Compare the anchor error with `rho ||M0|| / (C2 sqrt(r) kappa^2)`.
pub fn anchor_condition(
    anchor_product: &ComplexMatrix,
    m0: &ComplexMatrix,
    rho: f64,
    c2: f64,
    kappa: f64,
    r: usize,
) -> Result<AnchorCheck> {
    if !(rho > 0.0 && c2 > 0.0 && kappa > 0.0 && r > 0) {
        return Err(Error::invalid("anchor condition parameters must be positive"));
    }
    if anchor_product.shape() != m0.shape() {
        return Err(Error::ShapeMismatch {
            op: "anchor_condition",
            expected: m0.shape(),
            found: anchor_product.shape(),
        });
    }
    let norm = spectral_norm(m0)?;
    if norm == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let err = spectral_norm(&(anchor_product - m0))?;
    let ratio = err * c2 * (r as f64).sqrt() * kappa * kappa / (rho * norm);
    Ok(AnchorCheck {
        ratio,
        passed: ratio <= 1.0,
    })
}

/// `sigma_1 / sigma_r` of `m0`.
pub fn condition_number(m0: &ComplexMatrix, r: usize) -> Result<f64> {
    let s = singular_values(m0)?;
    if r == 0 || r > s.len() {
        return Err(Error::invalid(format!("rank {r} outside 1..={}", s.len())));
    }
    if s[r - 1] <= 0.0 {
        return Err(Error::RankDeficient {
            requested: r,
            available: s.iter().filter(|&&x| x > 0.0).count(),
        });
    }
    Ok(s[0] / s[r - 1])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl MonteCarloEstimate {
    fn from_values(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            mean,
            stderr: (var / n).sqrt(),
            samples: values.len(),
        }
    }
}

/// Mean over Rademacher draws of `||P_T(n^{-1/2} sum_i eps_i a_i b_i^*)||_F`,
/// the supremum over unit `H` in `T` evaluated through the projector.
pub fn estimate_rademacher(
    e: &SketchEnsemble,
    b: &SupportSpaceBasis,
    trials: usize,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    check_basis(e, b, "estimate_rademacher")?;
    if trials == 0 {
        return Err(Error::invalid("Rademacher estimate needs trials >= 1"));
    }
    let results = map_indexed(trials, |k| {
        let mut rng = stream_rng(seed, &[stream::RADEMACHER, k as u64]);
        let eps: Vec<C64> = (0..e.n()).map(|_| C64::new(rng::rademacher(&mut rng), 0.0)).collect();
        rademacher_value(e, b, &eps)
    });
    let values = results.into_iter().collect::<Result<Vec<f64>>>()?;
    Ok(MonteCarloEstimate::from_values(&values))
}

/// `||P_T(n^{-1/2} sum_i eps_i a_i b_i^*)||_F` for one sign vector.
pub fn rademacher_value(e: &SketchEnsemble, b: &SupportSpaceBasis, eps: &[C64]) -> Result<f64> {
    let s = crate::operator::adjoint_normalized(eps, e)?;
    Ok(project_onto_t(&s, b)?.frobenius_norm())
}

// ---------------------------------------------------------------------------
// Moment identities

/// How [`verify_moments`] evaluates expectations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum MomentMethod {
    MonteCarlo {
        samples: usize,
        seed: u64,
    },
    /// Enumerate all atom pairs (design models only).
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub name: String,
    pub measured: f64,
    pub predicted: f64,
    /// Relative deviation; for matrix identities the Frobenius distance over
    /// the Frobenius norm of the prediction.
    pub rel_deviation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub model: String,
    pub method: MomentMethod,
    pub checks: Vec<MomentCheck>,
}

impl MomentReport {
    pub fn max_deviation(&self) -> f64 {
        self.checks.iter().map(|c| c.rel_deviation).fold(0.0, f64::max)
    }

    pub fn check(&self, name: &str) -> Option<&MomentCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Raw moment sums accumulated over samples or atoms.
#[derive(Clone, Debug)]
struct MomentSums {
    weight: f64,
    second: f64,
    fourth: f64,
    /// `E Z Z^*` and `E Z^* Z` for `Z = a a^* M b b^*` (unnormalised by `n`).
    zz_left: ComplexMatrix,
    zz_right: ComplexMatrix,
}

impl MomentSums {
    fn new(d1: usize, d2: usize) -> Self {
        Self {
            weight: 0.0,
            second: 0.0,
            fourth: 0.0,
            zz_left: ComplexMatrix::zeros(d1, d1),
            zz_right: ComplexMatrix::zeros(d2, d2),
        }
    }

    fn add(&mut self, w: f64, a: &[C64], b: &[C64], h: &ComplexMatrix) {
        let s = dot_c(a, &h.mul_vec(b));
        let p = s.norm_sqr();
        self.weight += w;
        self.second += w * p;
        self.fourth += w * p * p;
        // Z = s a b^*, so Z Z^* = |s|^2 ||b||^2 a a^* and Z^* Z = |s|^2 ||a||^2 b b^*.
        let na: f64 = a.iter().map(|z| z.norm_sqr()).sum();
        let nb: f64 = b.iter().map(|z| z.norm_sqr()).sum();
        rank_one_update(&mut self.zz_left, w * p * nb, a);
        rank_one_update(&mut self.zz_right, w * p * na, b);
    }

    fn merge(&mut self, other: &Self) {
        self.weight += other.weight;
        self.second += other.second;
        self.fourth += other.fourth;
        self.zz_left += &other.zz_left;
        self.zz_right += &other.zz_right;
    }
}

fn rank_one_update(m: &mut ComplexMatrix, s: f64, v: &[C64]) {
    for (j, &vj) in v.iter().enumerate() {
        let c = vj * s;
        for (o, &vk) in m.row_mut(j).iter_mut().zip(v) {
            *o += c * vk.conj();
        }
    }
}

fn draw_side<R: Rng + ?Sized>(
    model: &SketchModel,
    first: bool,
    d: usize,
    picker: Option<&WeightedIndex<f64>>,
    rng: &mut R,
) -> Vec<C64> {
    match model {
        SketchModel::RealGaussian => (0..d).map(|_| C64::new(rng::normal(rng), 0.0)).collect(),
        SketchModel::ComplexGaussian => (0..d).map(|_| rng::complex_normal(rng)).collect(),
        SketchModel::Design { a, b } => {
            let des = if first { a.design() } else { b.design() };
            let k = picker.expect("design picker").sample(rng);
            let s = (des.dim as f64).sqrt();
            des.vectors[k].iter().map(|w| w * s).collect()
        }
    }
}

fn design_pickers(model: &SketchModel) -> Result<Option<(WeightedIndex<f64>, WeightedIndex<f64>)>> {
    match model {
        SketchModel::Design { a, b } => {
            let wi = |d: &WeightedDesign| {
                WeightedIndex::new(&d.weights).map_err(|e| Error::invalid(format!("design weights: {e}")))
            };
            Ok(Some((wi(a.design())?, wi(b.design())?)))
        }
        _ => Ok(None),
    }
}

fn monte_carlo_sums(model: &SketchModel, h: &ComplexMatrix, samples: usize, seed: u64) -> Result<MomentSums> {
    let (d1, d2) = h.shape();
    let pickers = design_pickers(model)?;
    let chunks = MC_CHUNKS.min(samples);
    let parts = map_indexed(chunks, |c| {
        let count = samples / chunks + usize::from(c < samples % chunks);
        let mut rng = stream_rng(seed, &[stream::PROBE, c as u64]);
        let mut sums = MomentSums::new(d1, d2);
        for _ in 0..count {
            let a = draw_side(model, true, d1, pickers.as_ref().map(|p| &p.0), &mut rng);
            let b = draw_side(model, false, d2, pickers.as_ref().map(|p| &p.1), &mut rng);
            sums.add(1.0, &a, &b, h);
        }
        sums
    });
    let mut total = MomentSums::new(d1, d2);
    for p in &parts {
        total.merge(p);
    }
    Ok(total)
}

fn exact_design_sums(da: &WeightedDesign, db: &WeightedDesign, h: &ComplexMatrix) -> Result<MomentSums> {
    let pairs = da.len().saturating_mul(db.len());
    if pairs > MAX_ENUMERATION {
        return Err(Error::DimensionOverflow(format!(
            "{pairs} atom pairs exceed the enumeration limit {MAX_ENUMERATION}"
        )));
    }
    let scale = |d: &WeightedDesign, k: usize| -> Vec<C64> {
        let s = (d.dim as f64).sqrt();
        d.vectors[k].iter().map(|w| w * s).collect()
    };
    let bs: Vec<Vec<C64>> = (0..db.len()).map(|l| scale(db, l)).collect();
    let mut sums = MomentSums::new(da.dim, db.dim);
    for k in 0..da.len() {
        let a = scale(da, k);
        for (l, b) in bs.iter().enumerate() {
            sums.add(da.weights[k] * db.weights[l], &a, b, h);
        }
    }
    Ok(sums)
}

fn rel(measured: f64, predicted: f64) -> f64 {
    (measured - predicted).abs() / predicted.abs().max(f64::MIN_POSITIVE)
}

fn matrix_check(name: &str, measured: &ComplexMatrix, predicted: &ComplexMatrix) -> MomentCheck {
    let p = predicted.frobenius_norm();
    MomentCheck {
        name: name.to_string(),
        measured: measured.frobenius_norm(),
        predicted: p,
        rel_deviation: (measured - predicted).frobenius_norm() / p.max(f64::MIN_POSITIVE),
    }
}

/// Predicted `E |a^* H b|^4` and the coefficients `(c_I, c_M)` of
/// `E (Z - EZ)(Z - EZ)^* = c_I ||M||_F^2 I + c_M M M^*` (with `n = 1`) for
/// sketch dimension `d_other` on the `b` side.
struct Predictions {
    fourth: f64,
    left: (f64, f64),
    right: (f64, f64),
}

fn predictions(model: &SketchModel, h: &ComplexMatrix) -> Result<Predictions> {
    let f2 = h.norm_sq();
    let s4 = schatten_norm(h, 4.0)?.powi(4);
    let (d1, d2) = (h.rows() as f64, h.cols() as f64);
    Ok(match model {
        SketchModel::RealGaussian => {
            if h.as_slice().iter().any(|z| z.im != 0.0) {
                return Err(Error::invalid(
                    "real Gaussian fourth-moment identity requires a real test matrix",
                ));
            }
            Predictions {
                fourth: 3.0 * f2 * f2 + 6.0 * s4,
                left: (d2 + 2.0, 2.0 * d2 + 3.0),
                right: (d1 + 2.0, 2.0 * d1 + 3.0),
            }
        }
        // E a a^* S a a^* = tr(S) I + S and E ||b||^2 b b^* = (d + 1) I for CN(0, I).
        SketchModel::ComplexGaussian => Predictions {
            fourth: 2.0 * (f2 * f2 + s4),
            left: (d2 + 1.0, d2),
            right: (d1 + 1.0, d1),
        },
        SketchModel::Design { .. } => Predictions {
            fourth: 2.0 * d1 * d2 / ((d1 + 1.0) * (d2 + 1.0)) * (f2 * f2 + s4),
            left: (d1 * d2 / (d1 + 1.0), d1 * d2 / (d1 + 1.0) - 1.0),
            right: (d1 * d2 / (d2 + 1.0), d1 * d2 / (d2 + 1.0) - 1.0),
        },
    })
}

/// Check the second and fourth moments of `a^* H b` and the covariance of
/// `Z = a a^* H b b^*` (taken with `n = 1`; the `1/n^2` factor cancels in the
/// relative deviation).
pub fn verify_moments(model: &SketchModel, h: &ComplexMatrix, method: MomentMethod) -> Result<MomentReport> {
    if let SketchModel::Design { a, b } = model {
        if h.shape() != (a.dim(), b.dim()) {
            return Err(Error::ShapeMismatch {
                op: "verify_moments",
                expected: (a.dim(), b.dim()),
                found: h.shape(),
            });
        }
    }
    if h.norm_sq() == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let pred = predictions(model, h)?;
    let sums = match (method, model) {
        (MomentMethod::Exact, SketchModel::Design { a, b }) => exact_design_sums(a.design(), b.design(), h)?,
        (MomentMethod::Exact, _) => {
            return Err(Error::Unsupported(format!(
                "exact moments need a design model, got {}",
                model.name()
            )))
        }
        (MomentMethod::MonteCarlo { samples, seed }, _) => {
            if samples == 0 {
                return Err(Error::invalid("Monte Carlo needs samples >= 1"));
            }
            monte_carlo_sums(model, h, samples, seed)?
        }
    };
    let w = sums.weight;
    let f2 = h.norm_sq();
    let hh = h.mul_adjoint(h);
    let hh_r = h.adjoint_mul(h);
    let cov = |zz: &ComplexMatrix, outer: &ComplexMatrix| {
        let mut m = zz.scale(1.0 / w);
        m -= outer;
        m
    };
    let expected = |(ci, cm): (f64, f64), outer: &ComplexMatrix| {
        let mut m = ComplexMatrix::identity(outer.rows()).scale(ci * f2);
        m.axpy(C64::new(cm, 0.0), outer);
        m
    };
    let checks = vec![
        MomentCheck {
            name: "second".into(),
            measured: sums.second / w,
            predicted: f2,
            rel_deviation: rel(sums.second / w, f2),
        },
        MomentCheck {
            name: "fourth".into(),
            measured: sums.fourth / w,
            predicted: pred.fourth,
            rel_deviation: rel(sums.fourth / w, pred.fourth),
        },
        matrix_check("z-covariance-left", &cov(&sums.zz_left, &hh), &expected(pred.left, &hh)),
        matrix_check(
            "z-covariance-right",
            &cov(&sums.zz_right, &hh_r),
            &expected(pred.right, &hh_r),
        ),
    ];
    Ok(MomentReport {
        model: model.name().to_string(),
        method,
        checks,
    })
}

/// Empirical `P{|a^* H b| >= tau ||H||_F}` against its lower bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailCheck {
    pub tau: f64,
    pub empirical: f64,
    pub bound: f64,
    /// Binomial standard error of `empirical`.
    pub stderr: f64,
    pub passed: bool,
}

/// Absolute constant of the tail lower bound `c (1 - tau^2)^2`.
pub fn tail_constant(model: &SketchModel) -> f64 {
    match model {
        SketchModel::RealGaussian | SketchModel::ComplexGaussian => 1.0 / 18.0,
        SketchModel::Design { .. } => 1.0 / 8.0,
    }
}

pub fn tail_probability(
    model: &SketchModel,
    h: &ComplexMatrix,
    tau: f64,
    samples: usize,
    seed: u64,
) -> Result<TailCheck> {
    if !(0.0..1.0).contains(&tau) || samples == 0 {
        return Err(Error::invalid("tail check needs tau in [0, 1) and samples >= 1"));
    }
    let f = h.frobenius_norm();
    if f == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let (d1, d2) = h.shape();
    let pickers = design_pickers(model)?;
    let chunks = MC_CHUNKS.min(samples);
    let hits: usize = map_indexed(chunks, |c| {
        let count = samples / chunks + usize::from(c < samples % chunks);
        let mut rng = stream_rng(seed, &[stream::PROBE, c as u64]);
        (0..count)
            .filter(|_| {
                let a = draw_side(model, true, d1, pickers.as_ref().map(|p| &p.0), &mut rng);
                let b = draw_side(model, false, d2, pickers.as_ref().map(|p| &p.1), &mut rng);
                dot_c(&a, &h.mul_vec(&b)).norm() >= tau * f
            })
            .count()
    })
    .into_iter()
    .sum();
    let p = hits as f64 / samples as f64;
    let stderr = (p * (1.0 - p) / samples as f64).sqrt();
    let bound = tail_constant(model) * (1.0 - tau * tau).powi(2);
    Ok(TailCheck {
        tau,
        empirical: p,
        bound,
        stderr,
        passed: p >= bound - 3.0 * stderr,
    })
}

// ---------------------------------------------------------------------------
// Combined report

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionParams {
    pub rho: f64,
    pub c1: f64,
    pub c2: f64,
    pub smallball_trials: usize,
    pub seed: u64,
}

impl Default for ConditionParams {
    fn default() -> Self {
        Self {
            rho: DEFAULT_RHO,
            c1: DEFAULT_C1,
            c2: DEFAULT_C2,
            smallball_trials: DEFAULT_SMALLBALL_TRIALS,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub smallball_rho: f64,
    pub isotropy_a: f64,
    pub isotropy_b: f64,
    pub anchor_ratio: f64,
    pub kappa: f64,
    pub rank: usize,
    pub params: ConditionParams,
    /// `rho / (C1 sqrt(r kappa))`.
    pub isotropy_threshold: f64,
    pub smallball_pass: bool,
    pub isotropy_a_pass: bool,
    pub isotropy_b_pass: bool,
    pub anchor_pass: bool,
    pub note: String,
}

impl ConditionReport {
    pub fn all_pass(&self) -> bool {
        self.smallball_pass && self.isotropy_a_pass && self.isotropy_b_pass && self.anchor_pass
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Evaluate every sufficient condition for one ensemble, anchor and ground truth.
pub fn condition_report(
    e: &SketchEnsemble,
    anchor: &AnchorEstimate,
    m0: &ComplexMatrix,
    params: ConditionParams,
) -> Result<ConditionReport> {
    let r = anchor.rank();
    let basis = SupportSpaceBasis::from_matrix(m0, r)?;
    let kappa = condition_number(m0, r)?;
    let rho_hat = estimate_smallball(e, &basis, params.smallball_trials, params.seed)?;
    let (iso_a, iso_b) = isotropy_deviation(e)?;
    let anchor_check = anchor_condition(&anchor.product(), m0, params.rho, params.c2, kappa, r)?;
    let eta = params.rho / (params.c1 * (r as f64 * kappa).sqrt());
    Ok(ConditionReport {
        smallball_rho: rho_hat,
        isotropy_a: iso_a,
        isotropy_b: iso_b,
        anchor_ratio: anchor_check.ratio,
        kappa,
        rank: r,
        params,
        isotropy_threshold: eta,
        smallball_pass: rho_hat >= params.rho,
        isotropy_a_pass: iso_a <= eta,
        isotropy_b_pass: iso_b <= eta,
        anchor_pass: anchor_check.passed,
        note: format!(
            "small-ball value is a minimum over {} sampled directions: an upper estimate that can falsify but not certify the condition",
            params.smallball_trials
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{orthonormal_columns, real_inner};
    use crate::sketch::{build_mub_design, into_certified, sample_complex_gaussian, sample_real_gaussian};
    use std::sync::Arc;

    fn basis(d1: usize, d2: usize, r: usize, seed: u64) -> SupportSpaceBasis {
        let mut rng = stream_rng(seed, &[1]);
        let u = orthonormal_columns(&rng::complex_gaussian_matrix(&mut rng, d1, r)).unwrap();
        let v = orthonormal_columns(&rng::complex_gaussian_matrix(&mut rng, d2, r)).unwrap();
        SupportSpaceBasis::new(u, v).unwrap()
    }

    fn gaussian(rows: usize, cols: usize, seed: u64) -> ComplexMatrix {
        rng::complex_gaussian_matrix(&mut stream_rng(seed, &[2]), rows, cols)
    }

    fn design_model(d: usize) -> SketchModel {
        let c = Arc::new(into_certified(build_mub_design(d).unwrap()).unwrap());
        SketchModel::Design { a: c.clone(), b: c }
    }

    #[test]
    fn projector_fixes_t_and_kills_complement() {
        let b = basis(6, 5, 2, 3);
        let t = &b.u0.mul_adjoint(&gaussian(5, 2, 4)) + &gaussian(6, 2, 5).mul_adjoint(&b.v0);
        let p = project_onto_t(&t, &b).unwrap();
        assert!((&p - &t).max_abs() < 1e-12);

        let pu = &ComplexMatrix::identity(6) - &b.u0.mul_adjoint(&b.u0);
        let pv = &ComplexMatrix::identity(5) - &b.v0.mul_adjoint(&b.v0);
        let perp = pu.matmul(&gaussian(6, 5, 6)).unwrap().matmul(&pv).unwrap();
        assert!(project_onto_t(&perp, &b).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn projector_is_idempotent_and_self_adjoint() {
        let b = basis(7, 4, 2, 8);
        let z = gaussian(7, 4, 9);
        let w = gaussian(7, 4, 10);
        let pz = project_onto_t(&z, &b).unwrap();
        assert!((&project_onto_t(&pz, &b).unwrap() - &pz).max_abs() < 1e-12);
        let pw = project_onto_t(&w, &b).unwrap();
        let lhs = real_inner(&pz, &w).unwrap();
        let rhs = real_inner(&z, &pw).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
        assert!(pz.frobenius_norm() <= z.frobenius_norm());
        assert!(project_onto_t(&gaussian(4, 7, 1), &b).is_err());
    }

    #[test]
    fn unit_samples_in_t() {
        let b = basis(5, 5, 1, 11);
        let h = sample_unit_t(&b, 1);
        assert!((h.frobenius_norm() - 1.0).abs() < 1e-12);
        assert!((&project_onto_t(&h, &b).unwrap() - &h).max_abs() < 1e-12);
        assert_ne!(h, sample_unit_t(&b, 2));
    }

    #[test]
    fn basis_rejects_non_orthonormal() {
        let u = ComplexMatrix::from_diag(3, 1, &[2.0]);
        let v = ComplexMatrix::from_diag(3, 1, &[1.0]);
        assert!(SupportSpaceBasis::new(u, v).is_err());
    }

    #[test]
    fn smallball_nonnegative_and_monotone_in_trials() {
        let b = basis(4, 4, 1, 12);
        let e = sample_complex_gaussian(4, 4, 1, 13).unwrap();
        assert!(estimate_smallball(&e, &b, 8, 0).unwrap() >= 0.0);
        let e = sample_complex_gaussian(4, 4, 40, 13).unwrap();
        let few = estimate_smallball(&e, &b, 16, 5).unwrap();
        let many = estimate_smallball(&e, &b, 64, 5).unwrap();
        assert!(many <= few);
        assert!(estimate_smallball(&e, &b, 0, 5).is_err());
    }

    #[test]
    fn exact_design_isotropy() {
        for d in [2, 3, 5] {
            let dev = design_isotropy_deviation(&build_mub_design(d).unwrap()).unwrap();
            assert!(dev <= 1e-12, "d={d}: {dev}");
        }
    }

    #[test]
    fn isotropy_matches_direct_sum() {
        let e = sample_complex_gaussian(3, 2, 50, 14).unwrap();
        let mut cov = ComplexMatrix::zeros(3, 3);
        for i in 0..e.n() {
            cov += &ComplexMatrix::outer(e.a(i), e.a(i));
        }
        let cov = cov.scale(1.0 / 50.0);
        let direct = spectral_norm(&(&ComplexMatrix::identity(3) - &cov)).unwrap();
        let (a, _) = isotropy_deviation(&e).unwrap();
        assert!((a - direct).abs() < 1e-12);
    }

    #[test]
    fn anchor_condition_cases() {
        let m0 = ComplexMatrix::from_diag(4, 4, &[1.0, 0.5]);
        let (rho, c2, kappa, r) = (0.1, 10.0, 2.0, 2);
        let exact = anchor_condition(&m0, &m0, rho, c2, kappa, r).unwrap();
        assert_eq!(exact.ratio, 0.0);
        assert!(exact.passed);

        let budget = rho / (c2 * (r as f64).sqrt() * kappa * kappa);
        let mut pert = m0.clone();
        pert[(3, 3)] = C64::new(budget, 0.0);
        let edge = anchor_condition(&pert, &m0, rho, c2, kappa, r).unwrap();
        assert!((edge.ratio - 1.0).abs() < 1e-12);

        let zero = anchor_condition(&ComplexMatrix::zeros(4, 4), &m0, rho, c2, kappa, r).unwrap();
        assert!((zero.ratio - 1.0 / budget).abs() < 1e-9);
        assert!(!zero.passed);
        assert!(matches!(
            anchor_condition(&m0, &ComplexMatrix::zeros(4, 4), rho, c2, kappa, r),
            Err(Error::ZeroMatrix)
        ));
    }

    #[test]
    fn rademacher_single_dyad() {
        let b = basis(4, 3, 1, 15);
        let e = sample_complex_gaussian(4, 3, 1, 16).unwrap();
        let est = estimate_rademacher(&e, &b, 10, 0).unwrap();
        let direct = project_onto_t(&ComplexMatrix::outer(e.a(0), e.b(0)), &b)
            .unwrap()
            .frobenius_norm();
        assert!((est.mean - direct).abs() < 1e-12);
        assert!(est.stderr < 1e-12);
    }

    #[test]
    fn rademacher_antithetic_pair() {
        let b = basis(6, 6, 1, 17);
        let e = sample_complex_gaussian(6, 6, 30, 18).unwrap();
        let mut rng = stream_rng(3, &[]);
        for _ in 0..5 {
            let eps: Vec<C64> = (0..30).map(|_| C64::new(rng::rademacher(&mut rng), 0.0)).collect();
            let flipped: Vec<C64> = eps.iter().map(|z| -z).collect();
            let x = rademacher_value(&e, &b, &eps).unwrap();
            let y = rademacher_value(&e, &b, &flipped).unwrap();
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_design_moments_at_two() {
        let model = design_model(2);
        let h = gaussian(2, 2, 19);
        let rep = verify_moments(&model, &h, MomentMethod::Exact).unwrap();
        assert!(rep.max_deviation() < 1e-10, "{rep:?}");
    }

    #[test]
    fn exact_moments_need_design() {
        let h = gaussian(2, 2, 19);
        assert!(verify_moments(&SketchModel::ComplexGaussian, &h, MomentMethod::Exact).is_err());
        assert!(verify_moments(
            &SketchModel::RealGaussian,
            &h,
            MomentMethod::MonteCarlo { samples: 10, seed: 0 }
        )
        .is_err());
    }

    #[test]
    fn gaussian_single_entry_fourth_moment() {
        let h = ComplexMatrix::from_diag(3, 3, &[1.0]);
        let p = predictions(&SketchModel::RealGaussian, &h).unwrap();
        assert!((p.fourth - 9.0).abs() < 1e-12);
    }

    #[test]
    fn moment_monte_carlo_is_deterministic() {
        let h = ComplexMatrix::from_diag(2, 2, &[1.0, 0.3]);
        let m = MomentMethod::MonteCarlo { samples: 1000, seed: 4 };
        let a = verify_moments(&SketchModel::RealGaussian, &h, m).unwrap();
        let b = verify_moments(&SketchModel::RealGaussian, &h, m).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn condition_report_serialises() {
        let e = sample_real_gaussian(6, 6, 200, 20).unwrap();
        let m0 = ComplexMatrix::from_diag(6, 6, &[1.0]);
        let anchor = crate::anchor::anchor_from_matrix(&m0, 1, crate::anchor::AnchorSource::Matrix).unwrap();
        let params = ConditionParams {
            smallball_trials: 16,
            ..Default::default()
        };
        let rep = condition_report(&e, &anchor, &m0, params).unwrap();
        assert_eq!(rep.anchor_ratio, 0.0);
        assert!(rep.smallball_rho >= 0.0 && rep.isotropy_a >= 0.0 && rep.isotropy_b >= 0.0);
        let back: ConditionReport = serde_json::from_str(&rep.to_json().unwrap()).unwrap();
        assert_eq!(back, rep);
    }
}
