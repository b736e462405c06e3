//! Sketch ensembles: pairs `(a_i, b_i)` drawn from a Gaussian model or from
//! weighted complex projective 2-designs.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, C64, ONE, ZERO};
use crate::rng::{self, stream};

/// Tolerance for unit norms and weight sums of a design.
pub const DESIGN_NORM_TOL: f64 = 1e-12;
/// Entrywise tolerance of the 2-design moment condition.
pub const DESIGN_MOMENT_TOL: f64 = 1e-10;
/// Largest `d^2` for which the moment matrix is materialised.
pub const MAX_MOMENT_DIM: usize = 4096;

/// Finite weighted set of unit vectors in `C^dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedDesign {
    pub dim: usize,
    pub vectors: Vec<Vec<C64>>,
    pub weights: Vec<f64>,
    pub strength: u32,
}

/// Outcome of checking the 2-design moment condition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignCertificate {
    /// `max |S - binom(d+1,2)^{-1} P_Sym2|` over all entries.
    pub max_deviation: f64,
    /// Worst `| ||w_i|| - 1 |`.
    pub norm_deviation: f64,
    /// `| sum p_i - 1 |`.
    pub weight_sum_deviation: f64,
    pub passed: bool,
}

/// A design whose second moment condition has been verified.
#[derive(Clone, Debug)]
pub struct CertifiedDesign {
    design: WeightedDesign,
    certificate: DesignCertificate,
}

impl CertifiedDesign {
    pub fn design(&self) -> &WeightedDesign {
        &self.design
    }

    pub fn certificate(&self) -> &DesignCertificate {
        &self.certificate
    }

    pub fn dim(&self) -> usize {
        self.design.dim
    }
}

impl WeightedDesign {
    pub fn new(dim: usize, vectors: Vec<Vec<C64>>, weights: Vec<f64>, strength: u32) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("design dimension must be positive"));
        }
        if vectors.is_empty() || vectors.len() != weights.len() {
            return Err(Error::invalid(format!(
                "design has {} vectors and {} weights",
                vectors.len(),
                weights.len()
            )));
        }
        if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
            return Err(Error::invalid(format!(
                "design vector of length {} in dimension {dim}",
                v.len()
            )));
        }
        if weights.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::invalid("design weights must be finite and nonnegative"));
        }
        if strength < 1 {
            return Err(Error::invalid("design strength must be at least 1"));
        }
        Ok(Self {
            dim,
            vectors,
            weights,
            strength,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// `sum_i p_i w_i w_i^*`, which equals `I/d` for any 1-design.
    pub fn first_moment(&self) -> ComplexMatrix {
        let d = self.dim;
        let mut s = ComplexMatrix::zeros(d, d);
        for (w, &p) in self.vectors.iter().zip(&self.weights) {
            for i in 0..d {
                for j in 0..d {
                    s[(i, j)] += w[i] * w[j].conj() * p;
                }
            }
        }
        s
    }

    /// `sum_i p_i (w_i w_i^*)^{(x)2}` as a `d^2 x d^2` matrix indexed by `(i*d + j, k*d + l)`.
    pub fn second_moment(&self) -> Result<ComplexMatrix> {
        let d = self.dim;
        let dd = d
            .checked_mul(d)
            .filter(|&x| x <= MAX_MOMENT_DIM)
            .ok_or_else(|| Error::DimensionOverflow(format!("d^2 = {} exceeds {MAX_MOMENT_DIM}", d * d)))?;
        let mut s = ComplexMatrix::zeros(dd, dd);
        let mut ww = vec![ZERO; dd];
        for (w, &p) in self.vectors.iter().zip(&self.weights) {
            for i in 0..d {
                for j in 0..d {
                    ww[i * d + j] = w[i] * w[j];
                }
            }
            for (row, &x) in ww.iter().enumerate() {
                let px = x * p;
                let out = s.row_mut(row);
                for (o, &y) in out.iter_mut().zip(&ww) {
                    *o += px * y.conj();
                }
            }
        }
        Ok(s)
    }
}

/// `P_Sym2 = (I + SWAP) / 2` on `C^d (x) C^d`.
pub fn symmetric_projector(d: usize) -> ComplexMatrix {
    let dd = d * d;
    ComplexMatrix::from_fn(dd, dd, |row, col| {
        let (i, j) = (row / d, row % d);
        let (k, l) = (col / d, col % d);
        let id = if i == k && j == l { 0.5 } else { 0.0 };
        let swap = if i == l && j == k { 0.5 } else { 0.0 };
        C64::new(id + swap, 0.0)
    })
}

/// Check the weighted 2-design condition
/// `sum_i p_i (w_i w_i^*)^{(x)2} = binom(d+1, 2)^{-1} P_Sym2`.
///
/// Designs of higher strength are checked at order 2 only (any t-design is a
/// 2-design); a warning notes that the stated strength itself is unverified.
pub fn certify_design(design: &WeightedDesign) -> Result<DesignCertificate> {
    match design.strength {
        2 => {}
        t if t > 2 => log::warn!("design claims strength {t}; only the order-2 moment condition is checked"),
        t => {
            return Err(Error::Unsupported(format!(
                "certification requires strength >= 2, got {t}"
            )))
        }
    }
    let d = design.dim;
    let s = design.second_moment()?;
    let scale = 2.0 / (d as f64 * (d as f64 + 1.0));
    let target = symmetric_projector(d).scale(scale);
    let max_deviation = (&s - &target).max_abs();
    let norm_deviation = design
        .vectors
        .iter()
        .map(|w| (crate::linalg::vec_norm(w) - 1.0).abs())
        .fold(0.0, f64::max);
    let weight_sum_deviation = (design.weights.iter().sum::<f64>() - 1.0).abs();
    let passed = max_deviation <= DESIGN_MOMENT_TOL
        && norm_deviation <= DESIGN_NORM_TOL
        && weight_sum_deviation <= DESIGN_NORM_TOL;
    Ok(DesignCertificate {
        max_deviation,
        norm_deviation,
        weight_sum_deviation,
        passed,
    })
}

/// Certify and wrap a design, failing if the moment condition does not hold.
pub fn into_certified(design: WeightedDesign) -> Result<CertifiedDesign> {
    let certificate = certify_design(&design)?;
    if !certificate.passed {
        return Err(Error::UncertifiedDesign {
            deviation: certificate
                .max_deviation
                .max(certificate.norm_deviation)
                .max(certificate.weight_sum_deviation),
        });
    }
    Ok(CertifiedDesign { design, certificate })
}

pub fn is_prime(d: usize) -> bool {
    if d < 2 {
        return false;
    }
    let mut k = 2;
    while k * k <= d {
        if d.is_multiple_of(k) {
            return false;
        }
        k += 1;
    }
    true
}

/// Union of `d + 1` mutually unbiased bases in prime dimension `d`, uniformly weighted.
///
/// For odd `d` the non-standard bases have entries `w^(k l^2 + j l) / sqrt(d)`
/// with `w = exp(2 pi i / d)`; for `d = 2` the quadratic phase uses the fourth
/// root of unity, giving the eigenbases of the Pauli X and Y operators.
pub fn build_mub_design(d: usize) -> Result<WeightedDesign> {
    if !is_prime(d) {
        return Err(Error::NotPrime(d));
    }
    let mut vectors = Vec::with_capacity(d * (d + 1));
    for j in 0..d {
        let mut e = vec![ZERO; d];
        e[j] = ONE;
        vectors.push(e);
    }
    let norm = 1.0 / (d as f64).sqrt();
    let tau = 2.0 * std::f64::consts::PI;
    for k in 0..d {
        for j in 0..d {
            let v = (0..d)
                .map(|l| {
                    let angle = if d == 2 {
                        // i^(k l^2) (-1)^(j l)
                        tau * ((k * l * l) as f64 / 4.0 + (j * l) as f64 / 2.0)
                    } else {
                        tau * (((k * l * l + j * l) % d) as f64) / d as f64
                    };
                    C64::from_polar(norm, angle)
                })
                .collect();
            vectors.push(v);
        }
    }
    let n = vectors.len();
    WeightedDesign::new(d, vectors, vec![1.0 / n as f64; n], 2)
}

#[derive(Serialize, Deserialize)]
struct ComplexEntry {
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct DesignFile {
    dim: usize,
    strength: u32,
    weights: Vec<f64>,
    vectors: Vec<Vec<ComplexEntry>>,
}

impl WeightedDesign {
    pub fn to_json(&self) -> Result<String> {
        let file = DesignFile {
            dim: self.dim,
            strength: self.strength,
            weights: self.weights.clone(),
            vectors: self
                .vectors
                .iter()
                .map(|v| v.iter().map(|z| ComplexEntry { re: z.re, im: z.im }).collect())
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: DesignFile = serde_json::from_str(text)?;
        let vectors = file
            .vectors
            .into_iter()
            .map(|v| v.into_iter().map(|e| C64::new(e.re, e.im)).collect())
            .collect();
        Self::new(file.dim, vectors, file.weights, file.strength)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// A design read from disk together with its freshly computed certificate.
#[derive(Clone, Debug)]
pub struct LoadedDesign {
    pub design: WeightedDesign,
    pub certificate: DesignCertificate,
}

/// Load a design file and recompute its certificate.
pub fn load_design(path: impl AsRef<Path>) -> Result<LoadedDesign> {
    let design = WeightedDesign::from_json(&std::fs::read_to_string(path)?)?;
    let certificate = certify_design(&design)?;
    Ok(LoadedDesign { design, certificate })
}

/// Distribution of the sketch vectors.
#[derive(Clone, Debug)]
pub enum SketchModel {
    /// `[a; b] ~ N(0, I)` with real entries.
    RealGaussian,
    /// Entries `CN(0, 1)`.
    ComplexGaussian,
    /// `a = sqrt(d1) w` with `w` drawn from a certified design (and likewise for `b`).
    Design {
        a: Arc<CertifiedDesign>,
        b: Arc<CertifiedDesign>,
    },
}

impl SketchModel {
    pub fn name(&self) -> &'static str {
        match self {
            SketchModel::RealGaussian => "real-gaussian",
            SketchModel::ComplexGaussian => "complex-gaussian",
            SketchModel::Design { .. } => "design",
        }
    }
}

impl fmt::Display for SketchModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `n` sketch pairs. Row `i` of `a` holds `a_i`, row `i` of `b` holds `b_i`.
#[derive(Clone, Debug)]
pub struct SketchEnsemble {
    d1: usize,
    d2: usize,
    a: ComplexMatrix,
    b: ComplexMatrix,
    model: SketchModel,
    seed: u64,
    atoms: Option<(Vec<usize>, Vec<usize>)>,
}

impl SketchEnsemble {
    /// Assemble an ensemble from explicit vectors (rows of `a` and `b`).
    pub fn from_vectors(a: ComplexMatrix, b: ComplexMatrix, model: SketchModel, seed: u64) -> Result<Self> {
        if a.rows() != b.rows() || a.rows() == 0 {
            return Err(Error::invalid(format!(
                "sketch sides have {} and {} vectors",
                a.rows(),
                b.rows()
            )));
        }
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::invalid("sketch vectors must be finite"));
        }
        Ok(Self {
            d1: a.cols(),
            d2: b.cols(),
            a,
            b,
            model,
            seed,
            atoms: None,
        })
    }

    #[inline]
    pub fn d1(&self) -> usize {
        self.d1
    }
    #[inline]
    pub fn d2(&self) -> usize {
        self.d2
    }
    #[inline]
    pub fn n(&self) -> usize {
        self.a.rows()
    }
    #[inline]
    pub fn a(&self, i: usize) -> &[C64] {
        self.a.row(i)
    }
    #[inline]
    pub fn b(&self, i: usize) -> &[C64] {
        self.b.row(i)
    }
    /// All `a_i` as rows of an `n x d1` matrix.
    pub fn a_matrix(&self) -> &ComplexMatrix {
        &self.a
    }
    pub fn b_matrix(&self) -> &ComplexMatrix {
        &self.b
    }
    pub fn model(&self) -> &SketchModel {
        &self.model
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    /// Design atom indices `(for a, for b)` when sampled from designs.
    pub fn atoms(&self) -> Option<(&[usize], &[usize])> {
        self.atoms.as_ref().map(|(a, b)| (a.as_slice(), b.as_slice()))
    }
}

fn check_sizes(d1: usize, d2: usize, n: usize) -> Result<()> {
    if d1 == 0 || d2 == 0 || n == 0 {
        return Err(Error::invalid(format!(
            "sketch sizes must be positive (d1={d1}, d2={d2}, n={n})"
        )));
    }
    Ok(())
}

fn gaussian_side(seed: u64, side: u64, n: usize, d: usize, complex: bool) -> ComplexMatrix {
    let mut rng = rng::stream_rng(seed, &[side]);
    ComplexMatrix::from_fn(n, d, |_, _| {
        if complex {
            rng::complex_normal(&mut rng)
        } else {
            C64::new(rng::normal(&mut rng), 0.0)
        }
    })
}

/// Real Gaussian sketches; imaginary parts are exactly zero.
pub fn sample_real_gaussian(d1: usize, d2: usize, n: usize, seed: u64) -> Result<SketchEnsemble> {
    check_sizes(d1, d2, n)?;
    let a = gaussian_side(seed, stream::SIDE_A, n, d1, false);
    let b = gaussian_side(seed, stream::SIDE_B, n, d2, false);
    SketchEnsemble::from_vectors(a, b, SketchModel::RealGaussian, seed)
}

/// Standard complex Gaussian sketches.
pub fn sample_complex_gaussian(d1: usize, d2: usize, n: usize, seed: u64) -> Result<SketchEnsemble> {
    check_sizes(d1, d2, n)?;
    let a = gaussian_side(seed, stream::SIDE_A, n, d1, true);
    let b = gaussian_side(seed, stream::SIDE_B, n, d2, true);
    SketchEnsemble::from_vectors(a, b, SketchModel::ComplexGaussian, seed)
}

fn design_side(design: &WeightedDesign, seed: u64, side: u64, n: usize) -> Result<(ComplexMatrix, Vec<usize>)> {
    let picker = WeightedIndex::new(&design.weights).map_err(|e| Error::invalid(format!("design weights: {e}")))?;
    let mut rng = rng::stream_rng(seed, &[side]);
    let scale = (design.dim as f64).sqrt();
    let atoms: Vec<usize> = (0..n).map(|_| picker.sample(&mut rng)).collect();
    let mut m = ComplexMatrix::zeros(n, design.dim);
    for (i, &k) in atoms.iter().enumerate() {
        for (dst, &w) in m.row_mut(i).iter_mut().zip(&design.vectors[k]) {
            *dst = w * scale;
        }
    }
    Ok((m, atoms))
}

/// Partially derandomised sketches: `P{a = sqrt(d1) w_k} = p_k`, independently on each side.
pub fn sample_design(
    design_a: Arc<CertifiedDesign>,
    design_b: Arc<CertifiedDesign>,
    n: usize,
    seed: u64,
) -> Result<SketchEnsemble> {
    for d in [&design_a, &design_b] {
        if !d.certificate.passed {
            return Err(Error::UncertifiedDesign {
                deviation: d.certificate.max_deviation,
            });
        }
    }
    check_sizes(design_a.dim(), design_b.dim(), n)?;
    let (a, atoms_a) = design_side(design_a.design(), seed, stream::SIDE_A, n)?;
    let (b, atoms_b) = design_side(design_b.design(), seed, stream::SIDE_B, n)?;
    let mut e = SketchEnsemble::from_vectors(
        a,
        b,
        SketchModel::Design {
            a: design_a,
            b: design_b,
        },
        seed,
    )?;
    e.atoms = Some((atoms_a, atoms_b));
    Ok(e)
}

/// Exact expectation `E[a a^*]` of a scaled design atom, `d * sum_k p_k w_k w_k^*`.
pub fn design_isotropy(design: &WeightedDesign) -> ComplexMatrix {
    design.first_moment().scale(design.dim as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::spectral_norm;

    fn certified(d: usize) -> Arc<CertifiedDesign> {
        Arc::new(into_certified(build_mub_design(d).unwrap()).unwrap())
    }

    #[test]
    fn mub_sizes_and_weights() {
        for &(d, n) in &[(2usize, 6usize), (3, 12), (5, 30)] {
            let des = build_mub_design(d).unwrap();
            assert_eq!(des.len(), n);
            assert!(des.weights.iter().all(|&p| (p - 1.0 / n as f64).abs() < 1e-15));
            let cert = certify_design(&des).unwrap();
            assert!(cert.passed, "d={d}: {cert:?}");
            assert!(cert.max_deviation <= 1e-12);
        }
    }

    #[test]
    fn mub_first_moment_is_maximally_mixed() {
        for d in [2, 3, 5, 7] {
            let des = build_mub_design(d).unwrap();
            let dev = (&des.first_moment() - &ComplexMatrix::identity(d).scale(1.0 / d as f64)).max_abs();
            assert!(dev <= 1e-12, "d={d}: {dev}");
        }
    }

    #[test]
    fn mub_requires_prime() {
        assert!(matches!(build_mub_design(4), Err(Error::NotPrime(4))));
        assert!(matches!(build_mub_design(1), Err(Error::NotPrime(1))));
    }

    #[test]
    fn perturbed_weight_fails() {
        let mut des = build_mub_design(2).unwrap();
        des.weights[0] += 1e-3;
        let cert = certify_design(&des).unwrap();
        assert!(!cert.passed);
        assert!(cert.max_deviation >= 1e-5);
    }

    #[test]
    fn single_vector_fails() {
        let des = WeightedDesign::new(2, vec![vec![ONE, ZERO]], vec![1.0], 2).unwrap();
        assert!(!certify_design(&des).unwrap().passed);
        assert!(matches!(into_certified(des), Err(Error::UncertifiedDesign { .. })));
    }

    #[test]
    fn certification_guards() {
        let mut des = build_mub_design(2).unwrap();
        des.strength = 1;
        assert!(matches!(certify_design(&des), Err(Error::Unsupported(_))));
        let big = WeightedDesign::new(67, vec![vec![ONE; 67]], vec![1.0], 2).unwrap();
        assert!(matches!(certify_design(&big), Err(Error::DimensionOverflow(_))));
    }

    #[test]
    fn higher_strength_checked_at_order_two() {
        let mut des = build_mub_design(2).unwrap();
        des.strength = 3;
        assert!(certify_design(&des).unwrap().passed);
    }

    #[test]
    fn design_json_round_trip() {
        let des = build_mub_design(3).unwrap();
        let back = WeightedDesign::from_json(&des.to_json().unwrap()).unwrap();
        assert_eq!(back, des);
        assert!(certify_design(&back).unwrap().passed);
    }

    #[test]
    fn design_json_rejects_malformed() {
        let text = r#"{"dim": 2, "strength": 2, "weights": [1.0], "vectors": [[{"re": 1.0, "im": 0.0}]]}"#;
        assert!(WeightedDesign::from_json(text).is_err());
    }

    #[test]
    fn gaussian_determinism() {
        let e1 = sample_complex_gaussian(4, 3, 20, 11).unwrap();
        let e2 = sample_complex_gaussian(4, 3, 20, 11).unwrap();
        assert_eq!(e1.a_matrix(), e2.a_matrix());
        assert_eq!(e1.b_matrix(), e2.b_matrix());
        let e3 = sample_complex_gaussian(4, 3, 20, 12).unwrap();
        assert_ne!(e1.a_matrix(), e3.a_matrix());
        let r1 = sample_real_gaussian(4, 3, 20, 11).unwrap();
        let r2 = sample_real_gaussian(4, 3, 20, 11).unwrap();
        assert_eq!(r1.a_matrix(), r2.a_matrix());
        assert!(r1.a_matrix().as_slice().iter().all(|z| z.im == 0.0));
    }

    #[test]
    fn gaussian_sides_independent_streams() {
        let e = sample_real_gaussian(4, 4, 10, 5).unwrap();
        assert_ne!(e.a_matrix(), e.b_matrix());
    }

    #[test]
    fn invalid_sizes() {
        assert!(sample_real_gaussian(0, 3, 10, 1).is_err());
        assert!(sample_complex_gaussian(3, 3, 0, 1).is_err());
    }

    #[test]
    fn real_gaussian_mean_and_isotropy() {
        let (d1, n) = (4, 10_000);
        let e = sample_real_gaussian(d1, 2, n, 3).unwrap();
        for j in 0..d1 {
            let mean: f64 = (0..n).map(|i| e.a(i)[j].re).sum::<f64>() / n as f64;
            assert!(mean.abs() < 4.0 / (n as f64).sqrt());
        }
    }

    #[test]
    fn real_gaussian_wishart_envelope() {
        let (d1, n) = (4usize, 2000usize);
        let bound = 3.0 * (4.0 * d1 as f64 / n as f64).sqrt().max(4.0 * d1 as f64 / n as f64);
        let mut ok = 0;
        for seed in 0..40 {
            let e = sample_real_gaussian(d1, 1, n, seed).unwrap();
            let gram = e.a_matrix().adjoint_mul(e.a_matrix()).scale(1.0 / n as f64);
            // rows are a_i^T, so A^T conj(A) = sum a_i a_i^* up to conjugation (real here)
            let dev = spectral_norm(&(&ComplexMatrix::identity(d1) - &gram)).unwrap();
            if dev <= bound {
                ok += 1;
            }
        }
        assert!(ok >= 38, "{ok}/40 within envelope");
    }

    #[test]
    fn complex_gaussian_moments() {
        let e = sample_complex_gaussian(10, 1, 10_000, 8).unwrap();
        let vals = e.a_matrix().as_slice();
        let m = vals.len() as f64;
        let second: f64 = vals.iter().map(|z| z.norm_sqr()).sum::<f64>() / m;
        let pseudo: C64 = vals.iter().map(|z| z * z).sum::<C64>() / m;
        assert!((second - 1.0).abs() < 0.05);
        assert!(pseudo.norm() < 0.05);
    }

    #[test]
    fn design_sampling_norms_and_frequencies() {
        let des = certified(2);
        let n = 100_000;
        let e = sample_design(des.clone(), des, n, 21).unwrap();
        for i in 0..n {
            let na: f64 = e.a(i).iter().map(|z| z.norm_sqr()).sum();
            assert!((na - 2.0).abs() < 1e-12);
        }
        let (atoms_a, _) = e.atoms().unwrap();
        let mut counts = [0usize; 6];
        for &k in atoms_a {
            counts[k] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 1.0 / 6.0).abs() < 0.01);
        }
    }

    #[test]
    fn design_exact_isotropy() {
        for d in [2, 3, 5] {
            let des = build_mub_design(d).unwrap();
            let dev = (&design_isotropy(&des) - &ComplexMatrix::identity(d)).max_abs();
            assert!(dev < 1e-12);
        }
    }

    #[test]
    fn uncertified_design_rejected_for_sampling() {
        let des = build_mub_design(2).unwrap();
        let mut cert = into_certified(des).unwrap();
        cert.certificate.passed = false;
        let c = Arc::new(cert);
        assert!(matches!(
            sample_design(c.clone(), c, 10, 1),
            Err(Error::UncertifiedDesign { .. })
        ));
    }
}
