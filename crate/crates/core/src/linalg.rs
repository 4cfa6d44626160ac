//! Dense complex Hermitian linear algebra.
//!
//! Matrices are `nalgebra` dense complex matrices. [`HermitianMatrix`] is a
//! validated newtype used wherever an operator must be self-adjoint (states,
//! Choi matrices, witnesses, POVM effects). Multi-partite operators are laid
//! out in row-major tensor order: for factor dimensions `[d0, d1, ...]` the
//! first factor is the most significant digit of the index.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, invalid, Error, Result};

pub type C64 = Complex64;
pub type ComplexMatrix = DMatrix<C64>;

/// Max absolute entry deviation from the adjoint accepted as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Smallest eigenvalue accepted as positive semidefinite.
pub const PSD_TOL: f64 = 1e-9;

const EIG_MAX_ITER: usize = 10_000;

pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Largest absolute entry.
pub fn max_abs(m: &ComplexMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Largest absolute entry of `a - b`.
pub fn max_abs_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape(), "max_abs_diff: shape mismatch");
    a.iter()
        .zip(b.iter())
        .fold(0.0, |acc, (x, y)| acc.max((x - y).norm()))
}

/// Dimension-checked product.
pub fn matmul(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if a.ncols() != b.nrows() {
        return Err(dim_err(format!(
            "cannot multiply {}x{} by {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    Ok(a * b)
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

/// `I_left ⊗ op ⊗ I_right` where `op` acts on factor `factor` of `dims`.
pub fn embed_factor(dims: &[usize], factor: usize, op: &ComplexMatrix) -> ComplexMatrix {
    let left: usize = dims[..factor].iter().product();
    let right: usize = dims[factor + 1..].iter().product();
    let l = ComplexMatrix::identity(left, left);
    let r = ComplexMatrix::identity(right, right);
    kron(&kron(&l, op), &r)
}

fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for f in (0..dims.len().saturating_sub(1)).rev() {
        s[f] = s[f + 1] * dims[f + 1];
    }
    s
}

fn check_factors(dim: usize, dims: &[usize]) -> Result<()> {
    let prod: usize = dims.iter().product();
    if prod != dim || dims.is_empty() {
        return Err(dim_err(format!(
            "factor dimensions {dims:?} do not multiply to {dim}"
        )));
    }
    Ok(())
}

/// Partial trace of a square matrix over every factor not listed in `keep`.
///
/// Kept factors stay in their original order.
pub fn partial_trace_matrix(m: &ComplexMatrix, dims: &[usize], keep: &[usize]) -> Result<ComplexMatrix> {
    check_factors(m.nrows(), dims)?;
    if m.nrows() != m.ncols() {
        return Err(dim_err("partial trace needs a square matrix"));
    }
    let mut keep_sorted = keep.to_vec();
    keep_sorted.sort_unstable();
    keep_sorted.dedup();
    if keep_sorted.is_empty() || keep_sorted.iter().any(|&k| k >= dims.len()) {
        return Err(dim_err(format!(
            "keep set {keep:?} invalid for {} factors",
            dims.len()
        )));
    }
    let st = strides(dims);
    let kept_dims: Vec<usize> = keep_sorted.iter().map(|&f| dims[f]).collect();
    let kst = strides(&kept_dims);
    let traced: Vec<usize> = (0..dims.len()).filter(|f| !keep_sorted.contains(f)).collect();
    let traced_dims: Vec<usize> = traced.iter().map(|&f| dims[f]).collect();
    let tst = strides(&traced_dims);
    let dk: usize = kept_dims.iter().product();
    let dt: usize = traced_dims.iter().product::<usize>().max(1);

    // groups[t][k] = full index with traced digits t and kept digits k
    let mut groups = vec![vec![0usize; dk]; dt];
    for i in 0..m.nrows() {
        let mut k = 0;
        for (n, &f) in keep_sorted.iter().enumerate() {
            k += ((i / st[f]) % dims[f]) * kst[n];
        }
        let mut t = 0;
        for (n, &f) in traced.iter().enumerate() {
            t += ((i / st[f]) % dims[f]) * tst[n];
        }
        groups[t][k] = i;
    }
    let mut out = ComplexMatrix::zeros(dk, dk);
    for g in &groups {
        for (k2, &i2) in g.iter().enumerate() {
            for (k1, &i1) in g.iter().enumerate() {
                out[(k1, k2)] += m[(i1, i2)];
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`partial_trace_matrix`]: places `m` on the kept factors and
/// the identity on the traced ones.
pub fn partial_trace_adjoint(m: &ComplexMatrix, dims: &[usize], keep: &[usize]) -> Result<ComplexMatrix> {
    let mut keep_sorted = keep.to_vec();
    keep_sorted.sort_unstable();
    keep_sorted.dedup();
    let kept_dims: Vec<usize> = keep_sorted.iter().map(|&f| dims[f]).collect();
    check_factors(m.nrows(), &kept_dims)?;
    let d: usize = dims.iter().product();
    let st = strides(dims);
    let kst = strides(&kept_dims);
    let traced: Vec<usize> = (0..dims.len()).filter(|f| !keep_sorted.contains(f)).collect();
    let key = |i: usize| -> (usize, usize) {
        let mut k = 0;
        for (n, &f) in keep_sorted.iter().enumerate() {
            k += ((i / st[f]) % dims[f]) * kst[n];
        }
        let mut t = 0;
        for &f in &traced {
            t = t * dims[f] + (i / st[f]) % dims[f];
        }
        (k, t)
    };
    let keys: Vec<(usize, usize)> = (0..d).map(key).collect();
    let mut out = ComplexMatrix::zeros(d, d);
    for j in 0..d {
        let (kj, tj) = keys[j];
        for i in 0..d {
            let (ki, ti) = keys[i];
            if ti == tj {
                out[(i, j)] = m[(ki, kj)];
            }
        }
    }
    Ok(out)
}

/// Partial transpose on the factors listed in `on`.
pub fn partial_transpose_matrix(m: &ComplexMatrix, dims: &[usize], on: &[usize]) -> Result<ComplexMatrix> {
    check_factors(m.nrows(), dims)?;
    if on.iter().any(|&f| f >= dims.len()) {
        return Err(dim_err(format!("factor set {on:?} out of range")));
    }
    let st = strides(dims);
    let d = m.nrows();
    let mut out = ComplexMatrix::zeros(d, d);
    for j in 0..d {
        for i in 0..d {
            let (mut ii, mut jj) = (i, j);
            for &f in on {
                let di = (i / st[f]) % dims[f];
                let dj = (j / st[f]) % dims[f];
                ii = ii - di * st[f] + dj * st[f];
                jj = jj - dj * st[f] + di * st[f];
            }
            out[(i, j)] = m[(ii, jj)];
        }
    }
    Ok(out)
}

/// Reorders tensor factors: output factor `n` is input factor `perm[n]`.
pub fn permute_factors(m: &ComplexMatrix, dims: &[usize], perm: &[usize]) -> Result<ComplexMatrix> {
    check_factors(m.nrows(), dims)?;
    let mut seen = perm.to_vec();
    seen.sort_unstable();
    if seen != (0..dims.len()).collect::<Vec<_>>() {
        return Err(dim_err(format!("{perm:?} is not a permutation")));
    }
    let st = strides(dims);
    let new_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
    let nst = strides(&new_dims);
    let d = m.nrows();
    let map: Vec<usize> = (0..d)
        .map(|i_new| {
            let mut i_old = 0;
            for (n, &p) in perm.iter().enumerate() {
                i_old += ((i_new / nst[n]) % new_dims[n]) * st[p];
            }
            i_old
        })
        .collect();
    Ok(ComplexMatrix::from_fn(d, d, |i, j| m[(map[i], map[j])]))
}

/// Eigendecomposition of a Hermitian matrix with ascending eigenvalues.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: DVector<f64>,
    pub vectors: ComplexMatrix,
}

impl HermitianEigen {
    /// `V diag(f(λ)) V†`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> HermitianMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let s = f(self.values[j]);
            for i in 0..n {
                scaled[(i, j)] *= s;
            }
        }
        HermitianMatrix::from_hermitian_part(&(scaled * self.vectors.adjoint()))
    }
}

fn eig_raw(m: &ComplexMatrix) -> Result<HermitianEigen> {
    let n = m.nrows();
    if n == 0 {
        return Ok(HermitianEigen {
            values: DVector::zeros(0),
            vectors: ComplexMatrix::zeros(0, 0),
        });
    }
    let se = SymmetricEigen::try_new(m.clone(), f64::EPSILON, EIG_MAX_ITER)
        .ok_or(Error::NoConvergence { iterations: EIG_MAX_ITER })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| se.eigenvalues[k]));
    let mut vectors = ComplexMatrix::zeros(n, n);
    for (j, &k) in order.iter().enumerate() {
        vectors.set_column(j, &se.eigenvectors.column(k));
    }
    Ok(HermitianEigen { values, vectors })
}

/// A square complex matrix equal to its adjoint.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix {
    m: ComplexMatrix,
}

impl HermitianMatrix {
    /// Validates squareness and Hermiticity within [`HERMITIAN_TOL`].
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        Self::with_tolerance(m, HERMITIAN_TOL)
    }

    pub fn with_tolerance(m: ComplexMatrix, tol: f64) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(dim_err(format!("{}x{} matrix is not square", m.nrows(), m.ncols())));
        }
        let dev = max_abs_diff(&m, &m.adjoint());
        if dev > tol {
            return Err(invalid(format!("matrix is not Hermitian (deviation {dev:.3e})")));
        }
        Ok(Self::from_hermitian_part(&m))
    }

    /// `(m + m†)/2`, no validation.
    pub fn from_hermitian_part(m: &ComplexMatrix) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "from_hermitian_part: not square");
        let mut h = (m + m.adjoint()) * c64(0.5, 0.0);
        for i in 0..h.nrows() {
            h[(i, i)].im = 0.0;
        }
        Self { m: h }
    }

    pub fn zeros(d: usize) -> Self {
        Self { m: ComplexMatrix::zeros(d, d) }
    }

    pub fn identity(d: usize) -> Self {
        Self { m: ComplexMatrix::identity(d, d) }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let d = diag.len();
        Self { m: ComplexMatrix::from_fn(d, d, |i, j| if i == j { c64(diag[i], 0.0) } else { C64::default() }) }
    }

    /// Rank-one projector `|v⟩⟨v|` (not normalised).
    pub fn projector(v: &DVector<C64>) -> Self {
        Self::from_hermitian_part(&(v * v.adjoint()))
    }

    /// From real and imaginary row arrays.
    pub fn from_parts(re: &[Vec<f64>], im: Option<&[Vec<f64>]>) -> Result<Self> {
        let d = re.len();
        if re.iter().any(|r| r.len() != d) {
            return Err(dim_err("real part rows have inconsistent length"));
        }
        if let Some(im) = im {
            if im.len() != d || im.iter().any(|r| r.len() != d) {
                return Err(dim_err("imaginary part shape differs from real part"));
            }
        }
        let m = ComplexMatrix::from_fn(d, d, |i, j| {
            c64(re[i][j], im.map(|x| x[i][j]).unwrap_or(0.0))
        });
        Self::new(m)
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn as_matrix(&self) -> &ComplexMatrix {
        &self.m
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.m
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.m[(i, i)].re).sum()
    }

    /// Hilbert–Schmidt inner product `tr(self · other)` (real for Hermitian pairs).
    pub fn inner(&self, other: &HermitianMatrix) -> f64 {
        assert_eq!(self.dim(), other.dim(), "inner: dimension mismatch");
        self.m.iter().zip(other.m.transpose().iter()).map(|(a, b)| (a * b).re).sum()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { m: &self.m * c64(s, 0.0) }
    }

    pub fn kron(&self, other: &HermitianMatrix) -> Self {
        Self { m: kron(&self.m, &other.m) }
    }

    /// `u · self · u†`.
    pub fn conjugate_by(&self, u: &ComplexMatrix) -> Result<Self> {
        if u.ncols() != self.dim() {
            return Err(dim_err("conjugating matrix has wrong column count"));
        }
        Ok(Self::from_hermitian_part(&(u * &self.m * u.adjoint())))
    }

    /// Entrywise complex conjugate, equal to the transpose for Hermitian matrices.
    pub fn transpose(&self) -> Self {
        Self { m: self.m.transpose() }
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.m)
    }

    pub fn max_abs_diff(&self, other: &HermitianMatrix) -> f64 {
        max_abs_diff(&self.m, &other.m)
    }

    pub fn eig(&self) -> Result<HermitianEigen> {
        eig_raw(&self.m)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.eig()?.values.iter().copied().fold(f64::INFINITY, f64::min))
    }

    pub fn max_eigenvalue(&self) -> Result<f64> {
        Ok(self.eig()?.values.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }

    pub fn is_psd(&self, tol: f64) -> Result<bool> {
        Ok(self.dim() == 0 || self.min_eigenvalue()? >= -tol)
    }

    pub fn trace_norm(&self) -> Result<f64> {
        Ok(self.eig()?.values.iter().map(|v| v.abs()).sum())
    }

    pub fn partial_trace(&self, dims: &[usize], keep: &[usize]) -> Result<Self> {
        Ok(Self::from_hermitian_part(&partial_trace_matrix(&self.m, dims, keep)?))
    }

    pub fn partial_transpose(&self, dims: &[usize], on: &[usize]) -> Result<Self> {
        Ok(Self { m: partial_transpose_matrix(&self.m, dims, on)? })
    }

    /// Hermitian projection of `(m + m†)/2` onto the PSD cone, clipping
    /// eigenvalues below `floor` to zero.
    pub fn clip_negative(&self, floor: f64) -> Result<Self> {
        let e = self.eig()?;
        Ok(e.map_spectrum(|v| if v < floor { 0.0 } else { v }))
    }

    /// Compression onto the first `n` basis vectors of each factor in `modes`.
    pub fn compress(&self, dims: &[usize], keep_levels: &[usize]) -> Result<Self> {
        check_factors(self.dim(), dims)?;
        if keep_levels.len() != dims.len() || keep_levels.iter().zip(dims).any(|(k, d)| k > d) {
            return Err(dim_err("compression levels do not match factor dimensions"));
        }
        let idx = subspace_indices(dims, keep_levels);
        Ok(Self { m: ComplexMatrix::from_fn(idx.len(), idx.len(), |i, j| self.m[(idx[i], idx[j])]) })
    }

    /// Inverse of [`HermitianMatrix::compress`]: zero-padding into the larger space.
    pub fn embed(&self, dims: &[usize], levels: &[usize]) -> Result<Self> {
        check_factors(self.dim(), levels)?;
        let d: usize = dims.iter().product();
        let idx = subspace_indices(dims, levels);
        let mut m = ComplexMatrix::zeros(d, d);
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                m[(i, j)] = self.m[(a, b)];
            }
        }
        Ok(Self { m })
    }
}

/// Full indices (ascending) whose digit in factor `f` is below `levels[f]`.
pub fn subspace_indices(dims: &[usize], levels: &[usize]) -> Vec<usize> {
    let st = strides(dims);
    let d: usize = dims.iter().product();
    (0..d)
        .filter(|&i| (0..dims.len()).all(|f| (i / st[f]) % dims[f] < levels[f]))
        .collect()
}

impl fmt::Display for HermitianMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.dim() {
            let row: Vec<String> = (0..self.dim())
                .map(|j| {
                    let z = self.m[(i, j)];
                    format!("{:+.4}{:+.4}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "[{}]", row.join(", "))?;
        }
        Ok(())
    }
}

impl Add for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn add(self, rhs: &HermitianMatrix) -> HermitianMatrix {
        assert_eq!(self.dim(), rhs.dim(), "add: dimension mismatch");
        HermitianMatrix { m: &self.m + &rhs.m }
    }
}

impl Sub for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn sub(self, rhs: &HermitianMatrix) -> HermitianMatrix {
        assert_eq!(self.dim(), rhs.dim(), "sub: dimension mismatch");
        HermitianMatrix { m: &self.m - &rhs.m }
    }
}

impl Mul<f64> for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn mul(self, s: f64) -> HermitianMatrix {
        self.scale(s)
    }
}

impl Neg for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn neg(self) -> HermitianMatrix {
        self.scale(-1.0)
    }
}

/// Eigenvalues ascending and a unitary of eigenvectors.
pub fn eig_hermitian(m: &HermitianMatrix) -> Result<HermitianEigen> {
    m.eig()
}

pub fn min_eigenvalue(m: &HermitianMatrix) -> Result<f64> {
    m.min_eigenvalue()
}

pub fn partial_trace(m: &HermitianMatrix, dims: &[usize], keep: &[usize]) -> Result<HermitianMatrix> {
    m.partial_trace(dims, keep)
}

/// Bipartite partial transpose on factor `on` (0 or 1).
pub fn partial_transpose(m: &HermitianMatrix, dims: (usize, usize), on: usize) -> Result<HermitianMatrix> {
    if on > 1 {
        return Err(dim_err("bipartite partial transpose factor must be 0 or 1"));
    }
    m.partial_transpose(&[dims.0, dims.1], &[on])
}

pub fn trace_norm(m: &HermitianMatrix) -> Result<f64> {
    m.trace_norm()
}

/// Square matrix with i.i.d. complex Gaussian entries.
pub fn random_ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        c64(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

pub fn random_hermitian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> HermitianMatrix {
    HermitianMatrix::from_hermitian_part(&random_ginibre(d, d, rng))
}

/// Haar-random unitary from the QR decomposition of a Ginibre matrix.
pub fn random_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> ComplexMatrix {
    let qr = random_ginibre(d, d, rng).qr();
    let (q, r) = qr.unpack();
    let mut q = q;
    for j in 0..d {
        let z = r[(j, j)];
        let phase = if z.norm() > 0.0 { z / z.norm() } else { c64(1.0, 0.0) };
        for i in 0..d {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// JSON wire form of a square complex matrix.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MatrixJson {
    pub dim: usize,
    pub re: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<Vec<f64>>>,
}

impl MatrixJson {
    pub fn from_matrix(m: &ComplexMatrix) -> Self {
        let d = m.nrows();
        let re = (0..d).map(|i| (0..d).map(|j| m[(i, j)].re).collect()).collect();
        let im = (0..d).map(|i| (0..d).map(|j| m[(i, j)].im).collect()).collect();
        Self { dim: d, re, im: Some(im) }
    }

    pub fn to_matrix(&self) -> Result<ComplexMatrix> {
        let d = self.dim;
        if self.re.len() != d || self.re.iter().any(|r| r.len() != d) {
            return Err(dim_err(format!("\"re\" is not {d}x{d}")));
        }
        if let Some(im) = &self.im {
            if im.len() != d || im.iter().any(|r| r.len() != d) {
                return Err(dim_err(format!("\"im\" is not {d}x{d}")));
            }
        }
        Ok(ComplexMatrix::from_fn(d, d, |i, j| {
            c64(self.re[i][j], self.im.as_ref().map(|x| x[i][j]).unwrap_or(0.0))
        }))
    }
}

impl Serialize for HermitianMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixJson::from_matrix(&self.m).serialize(s)
    }
}

impl<'de> Deserialize<'de> for HermitianMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = MatrixJson::deserialize(d)?;
        let m = j.to_matrix().map_err(serde::de::Error::custom)?;
        HermitianMatrix::new(m).map_err(serde::de::Error::custom)
    }
}
