//! Dense complex linear algebra.
//!
//! [`ComplexMatrix`] is a row-major matrix of `Complex64` entries. Arithmetic
//! operators panic on shape mismatch (like most dense matrix crates); the
//! named operations used across the crate return [`Result`] instead.
//!
//! The SVD is a one-sided (Hestenes) Jacobi iteration applied to the side with
//! the smaller Gram matrix. It is deterministic for a fixed input and
//! computes small singular values to high relative accuracy.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Dense complex matrix stored in row-major order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    /// Rectangular matrix with `diag` on the main diagonal.
    pub fn from_diag(rows: usize, cols: usize, diag: &[f64]) -> Self {
        let mut m = Self::zeros(rows, cols);
        for (i, &d) in diag.iter().enumerate().take(rows.min(cols)) {
            m[(i, i)] = C64::new(d, 0.0);
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "{} entries cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("matrix entries must be finite"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Outer product `u v*`.
    pub fn outer(u: &[C64], v: &[C64]) -> Self {
        Self::from_fn(u.len(), v.len(), |i, j| u[i] * v[j].conj())
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(rows: usize, columns: &[Vec<C64>]) -> Self {
        let cols = columns.len();
        let mut m = Self::zeros(rows, cols);
        for (j, c) in columns.iter().enumerate() {
            assert_eq!(c.len(), rows, "column length mismatch");
            for i in 0..rows {
                m[(i, j)] = c[i];
            }
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [C64] {
        let c = self.cols;
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|z| z * s)
    }

    pub fn scale_c(&self, s: C64) -> Self {
        self.map(|z| z * s)
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: C64, other: &Self) {
        assert_eq!(self.shape(), other.shape(), "axpy shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Checked matrix product.
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                expected: (self.cols, rhs.cols),
                found: rhs.shape(),
            });
        }
        Ok(self.mul_unchecked(rhs))
    }

    fn mul_unchecked(&self, rhs: &Self) -> Self {
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let o_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &a) in a_row.iter().enumerate() {
                if a == ZERO {
                    continue;
                }
                let b_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self * rhs^*` without materialising the adjoint.
    pub fn mul_adjoint(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.cols, "mul_adjoint shape mismatch");
        Self::from_fn(self.rows, rhs.rows, |i, j| {
            self.row(i).iter().zip(rhs.row(j)).map(|(&a, &b)| a * b.conj()).sum()
        })
    }

    /// `self^* * rhs` without materialising the adjoint.
    pub fn adjoint_mul(&self, rhs: &Self) -> Self {
        assert_eq!(self.rows, rhs.rows, "adjoint_mul shape mismatch");
        let mut out = Self::zeros(self.cols, rhs.cols);
        for k in 0..self.rows {
            let a_row = self.row(k);
            let b_row = rhs.row(k);
            for (i, &a) in a_row.iter().enumerate() {
                let ac = a.conj();
                let o_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += ac * b;
                }
            }
        }
        out
    }

    /// Matrix-vector product.
    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, x.len(), "mul_vec shape mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    /// Stack `top` over `bottom`.
    pub fn vstack(top: &Self, bottom: &Self) -> Result<Self> {
        if top.cols != bottom.cols {
            return Err(Error::ShapeMismatch {
                op: "vstack",
                expected: (bottom.rows, top.cols),
                found: bottom.shape(),
            });
        }
        let mut data = top.data.clone();
        data.extend_from_slice(&bottom.data);
        Ok(Self {
            rows: top.rows + bottom.rows,
            cols: top.cols,
            data,
        })
    }

    /// Split into the first `k` rows and the remainder.
    pub fn split_rows(&self, k: usize) -> (Self, Self) {
        assert!(k <= self.rows);
        let (a, b) = self.data.split_at(k * self.cols);
        (
            Self {
                rows: k,
                cols: self.cols,
                data: a.to_vec(),
            },
            Self {
                rows: self.rows - k,
                cols: self.cols,
                data: b.to_vec(),
            },
        )
    }

    /// Keep the first `k` columns.
    pub fn leading_columns(&self, k: usize) -> Self {
        assert!(k <= self.cols);
        Self::from_fn(self.rows, k, |i, j| self[(i, j)])
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(
            self.cols,
            rhs.rows,
            "matrix product: {:?} * {:?}",
            self.shape(),
            rhs.shape()
        );
        self.mul_unchecked(rhs)
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        let mut out = self.clone();
        out -= rhs;
        out
    }
}

impl AddAssign<&ComplexMatrix> for ComplexMatrix {
    fn add_assign(&mut self, rhs: &ComplexMatrix) {
        assert_eq!(self.shape(), rhs.shape(), "matrix sum shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }
}

impl SubAssign<&ComplexMatrix> for ComplexMatrix {
    fn sub_assign(&mut self, rhs: &ComplexMatrix) {
        assert_eq!(self.shape(), rhs.shape(), "matrix difference shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&rhs.data) {
            *a -= b;
        }
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn neg(self) -> ComplexMatrix {
        self.map(|z| -z)
    }
}

/// Real inner product `Re tr(U^* V)`.
pub fn real_inner(u: &ComplexMatrix, v: &ComplexMatrix) -> Result<f64> {
    if u.shape() != v.shape() {
        return Err(Error::ShapeMismatch {
            op: "real_inner",
            expected: u.shape(),
            found: v.shape(),
        });
    }
    Ok(real_inner_slices(u.as_slice(), v.as_slice()))
}

#[inline]
pub(crate) fn real_inner_slices(u: &[C64], v: &[C64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a.re * b.re + a.im * b.im).sum()
}

/// Hermitian inner product `x^* y` of two vectors.
#[inline]
pub fn dot_c(x: &[C64], y: &[C64]) -> C64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

pub fn vec_norm(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Compact SVD `M = U diag(sigma) V^*` restricted to the retained singular triples.
#[derive(Clone, Debug)]
pub struct CompactSvd {
    pub u: ComplexMatrix,
    pub sigma: Vec<f64>,
    pub v: ComplexMatrix,
}

impl CompactSvd {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (k, &s) in self.sigma.iter().enumerate() {
                us[(i, k)] *= s;
            }
        }
        us.mul_adjoint(&self.v)
    }

    /// Keep the leading `k` triples.
    pub fn truncate(&self, k: usize) -> Self {
        let k = k.min(self.rank());
        Self {
            u: self.u.leading_columns(k),
            sigma: self.sigma[..k].to_vec(),
            v: self.v.leading_columns(k),
        }
    }
}

const JACOBI_MAX_SWEEPS: usize = 80;

/// Full set of Jacobi columns: singular values (unsorted), the rotated
/// columns of the tall side and the accumulated rotation.
struct JacobiResult {
    columns: Vec<Vec<C64>>,
    rotation: Vec<Vec<C64>>,
}

/// One-sided Jacobi on the columns of a tall matrix (rows >= cols), given
/// column-major.
fn jacobi_columns(mut columns: Vec<Vec<C64>>, rows: usize) -> Result<JacobiResult> {
    let q = columns.len();
    let mut rotation: Vec<Vec<C64>> = (0..q)
        .map(|j| {
            let mut e = vec![ZERO; q];
            e[j] = ONE;
            e
        })
        .collect();
    let threshold = f64::EPSILON * (rows.max(1) as f64);

    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..q {
            for r in (p + 1)..q {
                let alpha: f64 = columns[p].iter().map(|z| z.norm_sqr()).sum();
                let beta: f64 = columns[r].iter().map(|z| z.norm_sqr()).sum();
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let gamma = dot_c(&columns[p], &columns[r]);
                let g = gamma.norm();
                if g <= threshold * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                // Align the phase of column r so that the 2x2 Gram block is real.
                let phase = gamma / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let pc = phase.conj();
                rotate_pair(&mut columns, p, r, c, s, pc);
                rotate_pair(&mut rotation, p, r, c, s, pc);
            }
        }
        if !rotated {
            return Ok(JacobiResult { columns, rotation });
        }
    }
    Err(Error::NonConvergence {
        what: "jacobi svd",
        iterations: JACOBI_MAX_SWEEPS,
    })
}

#[inline]
fn rotate_pair(cols: &mut [Vec<C64>], p: usize, r: usize, c: f64, s: f64, pc: C64) {
    let (lo, hi) = cols.split_at_mut(r);
    let cp = &mut lo[p];
    let cr = &mut hi[0];
    for (x, y) in cp.iter_mut().zip(cr.iter_mut()) {
        let yr = *y * pc;
        let nx = *x * c - yr * s;
        let ny = *x * s + yr * c;
        *x = nx;
        *y = ny;
    }
}

/// Every singular value of `m`, sorted nonincreasing (length `min(rows, cols)`).
pub fn singular_values(m: &ComplexMatrix) -> Result<Vec<f64>> {
    let (tall, rows) = tall_columns(m);
    let res = jacobi_columns(tall, rows)?;
    let mut s: Vec<f64> = res.columns.iter().map(|c| vec_norm(c)).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// Columns of `m` if it is tall, otherwise columns of `m^*`.
fn tall_columns(m: &ComplexMatrix) -> (Vec<Vec<C64>>, usize) {
    if m.rows() >= m.cols() {
        ((0..m.cols()).map(|j| m.column(j)).collect(), m.rows())
    } else {
        (
            (0..m.rows())
                .map(|i| m.row(i).iter().map(|z| z.conj()).collect())
                .collect(),
            m.cols(),
        )
    }
}

/// Compact SVD keeping the singular values `sigma_k > tol * sigma_1`.
///
/// Each column of `U` is rotated so that its largest-magnitude entry is real
/// and positive, with `V` adjusted to match.
pub fn compact_svd(m: &ComplexMatrix, tol: f64) -> Result<CompactSvd> {
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::invalid("svd tolerance must be positive"));
    }
    if !m.is_finite() {
        return Err(Error::invalid("svd input has non-finite entries"));
    }
    let transposed = m.rows() < m.cols();
    let (tall, rows) = tall_columns(m);
    let other = if transposed { m.rows() } else { m.cols() };
    let res = jacobi_columns(tall, rows)?;

    let norms: Vec<f64> = res.columns.iter().map(|c| vec_norm(c)).collect();
    let mut order: Vec<usize> = (0..norms.len()).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));

    let sigma1 = order.first().map(|&j| norms[j]).unwrap_or(0.0);
    let keep: Vec<usize> = order
        .into_iter()
        .filter(|&j| sigma1 > 0.0 && norms[j] > tol * sigma1)
        .collect();

    let mut left = Vec::with_capacity(keep.len());
    let mut right = Vec::with_capacity(keep.len());
    let mut sigma = Vec::with_capacity(keep.len());
    for &j in &keep {
        let s = norms[j];
        left.push(res.columns[j].iter().map(|z| z / s).collect::<Vec<_>>());
        right.push(res.rotation[j].clone());
        sigma.push(s);
    }
    // For a wide input we decomposed M^* = U' S V'^*, so M = V' S U'^*.
    let (mut u_cols, mut v_cols, u_rows, v_rows) = if transposed {
        (right, left, other, rows)
    } else {
        (left, right, rows, other)
    };
    for (uc, vc) in u_cols.iter_mut().zip(v_cols.iter_mut()) {
        let pivot = uc
            .iter()
            .enumerate()
            .fold((0usize, -1.0f64), |best, (i, z)| {
                let a = z.norm();
                if a > best.1 {
                    (i, a)
                } else {
                    best
                }
            })
            .0;
        let z = uc[pivot];
        if z.norm() > 0.0 {
            let ph = (z / z.norm()).conj();
            uc.iter_mut().for_each(|x| *x *= ph);
            vc.iter_mut().for_each(|x| *x *= ph);
            uc[pivot] = C64::new(uc[pivot].norm(), 0.0);
        }
    }
    Ok(CompactSvd {
        u: ComplexMatrix::from_columns(u_rows, &u_cols),
        sigma,
        v: ComplexMatrix::from_columns(v_rows, &v_cols),
    })
}

/// Relative cutoff used when a decomposition should keep every numerically
/// nonzero singular value.
pub const RANK_TOL: f64 = 1e-14;

/// Leading `r` singular triples of `m`.
///
/// If `m` has numerical rank below `r` the result has fewer than `r`
/// triples; callers that need exactly `r` must check [`CompactSvd::rank`].
pub fn truncated_svd(m: &ComplexMatrix, r: usize) -> Result<CompactSvd> {
    let max = m.rows().min(m.cols());
    if r == 0 || r > max {
        return Err(Error::invalid(format!("truncation rank {r} outside 1..={max}")));
    }
    Ok(compact_svd(m, RANK_TOL)?.truncate(r))
}

/// Schatten-`p` norm; `p = f64::INFINITY` gives the spectral norm.
pub fn schatten_norm(m: &ComplexMatrix, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::invalid(format!("schatten order {p} must be >= 1")));
    }
    let s = singular_values(m)?;
    if p.is_infinite() {
        return Ok(s.first().copied().unwrap_or(0.0));
    }
    if p == 2.0 {
        return Ok(m.frobenius_norm());
    }
    let scale = s.first().copied().unwrap_or(0.0);
    if scale == 0.0 {
        return Ok(0.0);
    }
    let sum: f64 = s.iter().map(|x| (x / scale).powf(p)).sum();
    Ok(scale * sum.powf(1.0 / p))
}

pub fn spectral_norm(m: &ComplexMatrix) -> Result<f64> {
    schatten_norm(m, f64::INFINITY)
}

/// Orthonormalise the columns of `m` (modified Gram-Schmidt, two passes).
pub fn orthonormal_columns(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    let mut cols: Vec<Vec<C64>> = (0..m.cols()).map(|j| m.column(j)).collect();
    for j in 0..cols.len() {
        for _pass in 0..2 {
            for k in 0..j {
                let (lo, hi) = cols.split_at_mut(j);
                let proj = dot_c(&lo[k], &hi[0]);
                for (x, y) in hi[0].iter_mut().zip(&lo[k]) {
                    *x -= proj * y;
                }
            }
        }
        let n = vec_norm(&cols[j]);
        if n < 1e-12 {
            return Err(Error::RankDeficient {
                requested: m.cols(),
                available: j,
            });
        }
        cols[j].iter_mut().for_each(|x| *x /= n);
    }
    Ok(ComplexMatrix::from_columns(m.rows(), &cols))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn pseudo_random(rows: usize, cols: usize, seed: u64) -> ComplexMatrix {
        // Small LCG keeps these unit tests free of the sampling module.
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        let mut next = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        ComplexMatrix::from_fn(rows, cols, |_, _| c(next(), next()))
    }

    #[test]
    fn real_inner_examples() {
        let i2 = ComplexMatrix::identity(2);
        assert_eq!(real_inner(&i2, &i2).unwrap(), 2.0);
        let u = ComplexMatrix::from_vec(1, 1, vec![c(0.0, 1.0)]).unwrap();
        assert_eq!(real_inner(&u, &u).unwrap(), 1.0);
        let a = pseudo_random(3, 2, 1);
        let b = pseudo_random(3, 2, 2);
        let oracle: f64 = a
            .as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| (x.conj() * y).re)
            .sum();
        assert!((real_inner(&a, &b).unwrap() - oracle).abs() < 1e-14);
        // Via the trace definition.
        let tr = (&a.adjoint() * &b).trace().re;
        assert!((real_inner(&a, &b).unwrap() - tr).abs() < 1e-13);
    }

    #[test]
    fn real_inner_shape_mismatch() {
        let a = ComplexMatrix::zeros(2, 3);
        let b = ComplexMatrix::zeros(3, 2);
        assert!(matches!(real_inner(&a, &b), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn svd_of_zero_is_empty() {
        let s = compact_svd(&ComplexMatrix::zeros(3, 4), 1e-12).unwrap();
        assert_eq!(s.rank(), 0);
        assert_eq!(s.u.shape(), (3, 0));
        assert_eq!(s.v.shape(), (4, 0));
    }

    #[test]
    fn svd_of_diagonal() {
        let m = ComplexMatrix::from_diag(2, 2, &[3.0, 1.0]);
        let s = compact_svd(&m, 1e-12).unwrap();
        assert_eq!(s.sigma.len(), 2);
        assert!((s.sigma[0] - 3.0).abs() < 1e-14);
        assert!((s.sigma[1] - 1.0).abs() < 1e-14);
        // Phase convention makes U exactly the identity here.
        assert!((&s.u - &ComplexMatrix::identity(2)).max_abs() < 1e-14);
        assert!((&s.v - &ComplexMatrix::identity(2)).max_abs() < 1e-14);
    }

    #[test]
    fn svd_wide_and_tall_reconstruct() {
        for &(r, cc) in &[(5, 4), (4, 5), (1, 6), (6, 1), (7, 7)] {
            let m = pseudo_random(r, cc, (r * 10 + cc) as u64);
            let s = compact_svd(&m, 1e-14).unwrap();
            let err = (&s.reconstruct() - &m).frobenius_norm();
            assert!(err <= 1e-12 * m.frobenius_norm(), "{r}x{cc}: {err}");
            let utu = s.u.adjoint_mul(&s.u);
            let vtv = s.v.adjoint_mul(&s.v);
            let k = s.rank();
            assert!((&utu - &ComplexMatrix::identity(k)).max_abs() < 1e-12);
            assert!((&vtv - &ComplexMatrix::identity(k)).max_abs() < 1e-12);
            assert!(s.sigma.windows(2).all(|w| w[0] >= w[1]));
            for j in 0..k {
                let col = s.u.column(j);
                let piv = col.iter().map(|z| z.norm()).fold(0.0, f64::max);
                let z = col.iter().find(|z| z.norm() == piv).unwrap();
                assert!(z.im == 0.0 && z.re > 0.0);
            }
        }
    }

    #[test]
    fn svd_rejects_bad_tolerance() {
        assert!(compact_svd(&ComplexMatrix::identity(2), 0.0).is_err());
        assert!(compact_svd(&ComplexMatrix::identity(2), f64::NAN).is_err());
    }

    #[test]
    fn truncated_diagonal() {
        let m = ComplexMatrix::from_diag(3, 3, &[3.0, 2.0, 1.0]);
        let s = truncated_svd(&m, 2).unwrap();
        assert_eq!(s.sigma.len(), 2);
        assert!((s.sigma[0] - 3.0).abs() < 1e-14 && (s.sigma[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn truncated_rank_one_exact() {
        let u: Vec<C64> = (0..4).map(|i| c(i as f64 + 1.0, -0.5)).collect();
        let v: Vec<C64> = (0..3).map(|i| c(0.3, i as f64)).collect();
        let m = ComplexMatrix::outer(&u, &v);
        let s = truncated_svd(&m, 1).unwrap();
        assert!((&s.reconstruct() - &m).frobenius_norm() <= 1e-10);
    }

    #[test]
    fn truncated_tail_matches_full() {
        let m = pseudo_random(8, 6, 77);
        let full = compact_svd(&m, 1e-15).unwrap();
        let t = truncated_svd(&m, 3).unwrap();
        let err = (&t.reconstruct() - &m).frobenius_norm();
        let tail: f64 = full.sigma[3..].iter().map(|s| s * s).sum::<f64>().sqrt();
        assert!((err - tail).abs() < 1e-8);
    }

    #[test]
    fn truncated_rank_out_of_range() {
        let m = ComplexMatrix::identity(3);
        assert!(truncated_svd(&m, 0).is_err());
        assert!(truncated_svd(&m, 4).is_err());
    }

    #[test]
    fn schatten_examples() {
        let i3 = ComplexMatrix::identity(3);
        assert!((schatten_norm(&i3, 4.0).unwrap() - 3f64.powf(0.25)).abs() < 1e-14);
        let d = ComplexMatrix::from_diag(2, 2, &[2.0, 1.0]);
        assert!((schatten_norm(&d, f64::INFINITY).unwrap() - 2.0).abs() < 1e-14);
        let m = pseudo_random(4, 5, 3);
        let fro: f64 = m.as_slice().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!((schatten_norm(&m, 2.0).unwrap() - fro).abs() < 1e-10);
        assert!(schatten_norm(&m, 0.5).is_err());
        assert!(schatten_norm(&m, f64::NAN).is_err());
    }

    #[test]
    fn schatten_general_p_matches_singular_values() {
        let m = pseudo_random(5, 3, 9);
        let s = singular_values(&m).unwrap();
        let s3: f64 = s.iter().map(|x| x.powi(3)).sum::<f64>().powf(1.0 / 3.0);
        assert!((schatten_norm(&m, 3.0).unwrap() - s3).abs() < 1e-12);
    }

    #[test]
    fn orthonormalise() {
        let m = pseudo_random(6, 3, 4);
        let q = orthonormal_columns(&m).unwrap();
        assert!((&q.adjoint_mul(&q) - &ComplexMatrix::identity(3)).max_abs() < 1e-13);
        let rank_def = ComplexMatrix::from_columns(3, &[vec![ONE, ZERO, ZERO], vec![ONE, ZERO, ZERO]]);
        assert!(orthonormal_columns(&rank_def).is_err());
    }

    #[test]
    fn products_agree() {
        let a = pseudo_random(4, 3, 5);
        let b = pseudo_random(5, 3, 6);
        let direct = &a * &b.adjoint();
        assert!((&direct - &a.mul_adjoint(&b)).max_abs() < 1e-14);
        let c2 = pseudo_random(4, 2, 7);
        assert!((&(&a.adjoint() * &c2) - &a.adjoint_mul(&c2)).max_abs() < 1e-14);
        assert!(a.matmul(&b).is_err());
    }
}
