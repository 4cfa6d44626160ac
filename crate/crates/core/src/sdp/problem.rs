//! Problem representation and builder.
//!
//! Variables are complex Hermitian PSD blocks. Every constraint is a real
//! affine equality `Σ_j Re tr(A_ij X_j) = b_i`. Matrix-valued equalities
//! `Σ_j c_j L_j(X_j) = R` are expanded against an orthonormal Hermitian basis
//! of the output space; the basis element of each row is kept so the matrix
//! multiplier of the whole group can be reassembled after the solve.

use serde_json::json;

use crate::error::{dim_err, Result};
use crate::linalg::{
    c64, partial_trace_adjoint, partial_trace_matrix, partial_transpose_matrix, ComplexMatrix, HermitianMatrix, C64,
};

const SPARSE_DROP: f64 = 1e-15;
/// Relative pivot threshold of the Gram-matrix rank check.
const RANK_TOL: f64 = 1e-11;
/// Relative rhs mismatch that marks a dependent row as inconsistent.
const CONSISTENCY_TOL: f64 = 1e-9;

pub type BlockId = usize;
pub type GroupId = usize;

/// Hermitian matrix stored as its nonzero entries (both triangles).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseHermitian {
    pub entries: Vec<(usize, usize, C64)>,
}

impl SparseHermitian {
    pub fn from_dense(m: &ComplexMatrix) -> Self {
        let scale = m.iter().fold(0.0f64, |a, z| a.max(z.norm()));
        let cut = SPARSE_DROP * scale.max(1.0);
        let mut entries = Vec::new();
        for c in 0..m.ncols() {
            for r in 0..m.nrows() {
                let v = m[(r, c)];
                if v.norm() > cut {
                    entries.push((r, c, v));
                }
            }
        }
        Self { entries }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// `Re tr(A X)`.
    pub fn inner(&self, x: &ComplexMatrix) -> f64 {
        self.entries.iter().map(|&(r, c, v)| (v * x[(c, r)]).re).sum()
    }

    /// Adds `s·A` into a dense matrix.
    pub fn add_to(&self, out: &mut ComplexMatrix, s: f64) {
        for &(r, c, v) in &self.entries {
            out[(r, c)] += v * s;
        }
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.entries.iter().map(|e| e.2.norm_sqr()).sum()
    }

    pub fn to_dense(&self, d: usize) -> ComplexMatrix {
        let mut m = ComplexMatrix::zeros(d, d);
        self.add_to(&mut m, 1.0);
        m
    }
}

/// Linear maps between operator spaces used in constraints.
#[derive(Clone, Debug, PartialEq)]
pub enum LinearMap {
    Identity,
    /// Partial transpose on the listed factors.
    PartialTranspose { dims: Vec<usize>, on: Vec<usize> },
    /// Partial trace keeping the listed factors.
    PartialTrace { dims: Vec<usize>, keep: Vec<usize> },
    /// `X ↦ K X K†` with `K` of shape `out x in`.
    Conjugation(ComplexMatrix),
    /// `X ↦ tr(X)·C`.
    TraceTimes(HermitianMatrix),
}

impl LinearMap {
    pub fn output_dim(&self, input_dim: usize) -> Result<usize> {
        match self {
            LinearMap::Identity => Ok(input_dim),
            LinearMap::PartialTranspose { dims, .. } => {
                if dims.iter().product::<usize>() != input_dim {
                    return Err(dim_err("partial transpose dims do not match block"));
                }
                Ok(input_dim)
            }
            LinearMap::PartialTrace { dims, keep } => {
                if dims.iter().product::<usize>() != input_dim {
                    return Err(dim_err("partial trace dims do not match block"));
                }
                Ok(keep.iter().map(|&k| dims[k]).product())
            }
            LinearMap::Conjugation(k) => {
                if k.ncols() != input_dim {
                    return Err(dim_err("conjugation matrix does not match block"));
                }
                Ok(k.nrows())
            }
            LinearMap::TraceTimes(c) => Ok(c.dim()),
        }
    }

    pub fn apply(&self, x: &ComplexMatrix) -> Result<ComplexMatrix> {
        match self {
            LinearMap::Identity => Ok(x.clone()),
            LinearMap::PartialTranspose { dims, on } => partial_transpose_matrix(x, dims, on),
            LinearMap::PartialTrace { dims, keep } => partial_trace_matrix(x, dims, keep),
            LinearMap::Conjugation(k) => Ok(k * x * k.adjoint()),
            LinearMap::TraceTimes(c) => Ok(c.as_matrix() * x.trace()),
        }
    }

    pub fn adjoint(&self, e: &ComplexMatrix, input_dim: usize) -> Result<ComplexMatrix> {
        match self {
            LinearMap::Identity => Ok(e.clone()),
            LinearMap::PartialTranspose { dims, on } => partial_transpose_matrix(e, dims, on),
            LinearMap::PartialTrace { dims, keep } => partial_trace_adjoint(e, dims, keep),
            LinearMap::Conjugation(k) => Ok(k.adjoint() * e * k),
            LinearMap::TraceTimes(c) => {
                let s: C64 = (c.as_matrix() * e).trace();
                Ok(ComplexMatrix::identity(input_dim, input_dim) * s)
            }
        }
    }
}

/// One summand `coef · map(X_block)` of a matrix equality.
#[derive(Clone, Debug)]
pub struct Term {
    pub block: BlockId,
    pub coef: f64,
    pub map: LinearMap,
}

impl Term {
    pub fn new(block: BlockId, coef: f64, map: LinearMap) -> Self {
        Self { block, coef, map }
    }

    pub fn id(block: BlockId, coef: f64) -> Self {
        Self::new(block, coef, LinearMap::Identity)
    }
}

#[derive(Clone, Debug)]
pub struct BlockSpec {
    pub name: String,
    pub dim: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct Row {
    pub terms: Vec<(BlockId, SparseHermitian)>,
    pub rhs: f64,
    /// Group and basis element for matrix-equality rows.
    pub basis: Option<(GroupId, SparseHermitian)>,
}

#[derive(Clone, Debug)]
pub(crate) struct Group {
    pub name: String,
    pub dim: usize,
}

/// Minimisation or maximisation of the objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Incrementally assembles an [`SdpProblem`].
#[derive(Debug)]
pub struct SdpBuilder {
    blocks: Vec<BlockSpec>,
    objective: Vec<ComplexMatrix>,
    constant: f64,
    sense: Sense,
    rows: Vec<Row>,
    groups: Vec<Group>,
    /// Rows that vanish identically but carry a nonzero rhs.
    contradictions: Vec<(usize, f64)>,
}

impl SdpBuilder {
    pub fn new(sense: Sense) -> Self {
        Self {
            blocks: Vec::new(),
            objective: Vec::new(),
            constant: 0.0,
            sense,
            rows: Vec::new(),
            groups: Vec::new(),
            contradictions: Vec::new(),
        }
    }

    pub fn add_block(&mut self, name: impl Into<String>, dim: usize) -> BlockId {
        assert!(dim > 0, "blocks must have positive dimension");
        self.blocks.push(BlockSpec { name: name.into(), dim });
        self.objective.push(ComplexMatrix::zeros(dim, dim));
        self.blocks.len() - 1
    }

    pub fn block_dim(&self, b: BlockId) -> usize {
        self.blocks[b].dim
    }

    /// Adds `Re tr(c X_block)` to the objective.
    pub fn add_objective(&mut self, block: BlockId, c: &HermitianMatrix) -> Result<()> {
        if c.dim() != self.blocks[block].dim {
            return Err(dim_err(format!("objective term does not match block {}", self.blocks[block].name)));
        }
        self.objective[block] += c.as_matrix();
        Ok(())
    }

    pub fn add_objective_constant(&mut self, c: f64) {
        self.constant += c;
    }

    /// Scalar equality `Σ tr(A_j X_j) = rhs`.
    pub fn add_scalar_equality(&mut self, terms: &[(BlockId, HermitianMatrix)], rhs: f64) -> Result<()> {
        let mut sparse = Vec::new();
        for (b, a) in terms {
            if a.dim() != self.blocks[*b].dim {
                return Err(dim_err("scalar constraint term does not match block"));
            }
            let s = SparseHermitian::from_dense(a.as_matrix());
            if !s.is_empty() {
                sparse.push((*b, s));
            }
        }
        self.push_row(Row { terms: sparse, rhs, basis: None });
        Ok(())
    }

    /// Matrix equality `Σ coef_j · map_j(X_j) = rhs`, expanded into real rows.
    pub fn add_matrix_equality(
        &mut self,
        name: impl Into<String>,
        terms: &[Term],
        rhs: &HermitianMatrix,
    ) -> Result<GroupId> {
        let out = rhs.dim();
        for t in terms {
            let d_out = t.map.output_dim(self.blocks[t.block].dim)?;
            if d_out != out {
                return Err(dim_err(format!(
                    "term on block {} maps to dimension {d_out}, expected {out}",
                    self.blocks[t.block].name
                )));
            }
        }
        let gid = self.groups.len();
        self.groups.push(Group { name: name.into(), dim: out });
        for basis in hermitian_basis(out) {
            let dense_basis = basis.to_dense(out);
            let mut acc: Vec<(BlockId, ComplexMatrix)> = Vec::new();
            for t in terms {
                let adj = t.map.adjoint(&dense_basis, self.blocks[t.block].dim)? * c64(t.coef, 0.0);
                match acc.iter_mut().find(|(b, _)| *b == t.block) {
                    Some((_, m)) => *m += adj,
                    None => acc.push((t.block, adj)),
                }
            }
            let terms_sparse: Vec<(BlockId, SparseHermitian)> = acc
                .into_iter()
                .map(|(b, m)| (b, SparseHermitian::from_dense(&m)))
                .filter(|(_, s)| !s.is_empty())
                .collect();
            let rhs_val = basis.inner(rhs.as_matrix());
            self.push_row(Row { terms: terms_sparse, rhs: rhs_val, basis: Some((gid, basis)) });
        }
        Ok(gid)
    }

    /// Substitutes `X_b = U X' U†` for an isometry `U` (`d x r`) in every row
    /// and objective term added so far; the block becomes `r x r`. With
    /// `r = 0` the block is decoupled instead: its terms are dropped and a
    /// row `tr X_b = 1` keeps it bounded, so its solved value must be read
    /// as zero.
    pub fn restrict_block(&mut self, b: BlockId, u: &ComplexMatrix) -> Result<()> {
        let d = self.blocks[b].dim;
        if u.nrows() != d || u.ncols() > d {
            return Err(dim_err(format!("restriction does not match block {}", self.blocks[b].name)));
        }
        let r = u.ncols();
        let mut emptied = Vec::new();
        for (i, row) in self.rows.iter_mut().enumerate() {
            let before = row.terms.len();
            for t in row.terms.iter_mut().filter(|t| t.0 == b) {
                t.1 = if r == 0 {
                    SparseHermitian::default()
                } else {
                    SparseHermitian::from_dense(&(u.adjoint() * t.1.to_dense(d) * u))
                };
            }
            row.terms.retain(|t| !t.1.is_empty());
            if before > 0 && row.terms.is_empty() && row.rhs.abs() > CONSISTENCY_TOL {
                emptied.push((i, row.rhs));
            }
        }
        self.contradictions.extend(emptied);
        if r == 0 {
            self.objective[b] = ComplexMatrix::zeros(d, d);
            self.add_scalar_equality(&[(b, HermitianMatrix::identity(d))], 1.0)?;
        } else {
            self.objective[b] = u.adjoint() * &self.objective[b] * u;
            self.blocks[b].dim = r;
        }
        Ok(())
    }

    fn push_row(&mut self, row: Row) {
        if row.terms.is_empty() {
            if row.rhs.abs() > CONSISTENCY_TOL {
                self.contradictions.push((self.rows.len(), row.rhs));
            }
            // identically satisfied or contradictory, either way not a solver row
            self.rows.push(Row { terms: Vec::new(), ..row });
            return;
        }
        self.rows.push(row);
    }

    /// Drops dependent rows and detects inconsistent equality systems.
    pub fn build(self) -> Result<SdpProblem> {
        let SdpBuilder { blocks, objective, constant, sense, rows, groups, contradictions } = self;
        let candidates: Vec<usize> = (0..rows.len()).filter(|&i| !rows[i].terms.is_empty()).collect();
        let (kept, inconsistency) = reduce_rows(&rows, &candidates);
        let mut inconsistency = inconsistency;
        if inconsistency.is_none() {
            if let Some(&(i, rhs)) = contradictions.first() {
                let mut y = vec![0.0; rows.len()];
                y[i] = rhs.signum();
                inconsistency = Some(y);
            }
        }
        let objective = objective.iter().map(SparseHermitian::from_dense).collect();
        Ok(SdpProblem { blocks, objective, constant, sense, rows, groups, kept, inconsistency })
    }
}

/// Orthonormal basis of `d x d` Hermitian matrices: diagonal units, then
/// `(E_pq + E_qp)/√2` and `i(E_pq - E_qp)/√2` for `p < q`.
pub fn hermitian_basis(d: usize) -> Vec<SparseHermitian> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(d * d);
    for p in 0..d {
        out.push(SparseHermitian { entries: vec![(p, p, c64(1.0, 0.0))] });
    }
    for p in 0..d {
        for q in p + 1..d {
            out.push(SparseHermitian { entries: vec![(p, q, c64(s, 0.0)), (q, p, c64(s, 0.0))] });
            out.push(SparseHermitian { entries: vec![(p, q, c64(0.0, s)), (q, p, c64(0.0, -s))] });
        }
    }
    out
}

fn row_gram(rows: &[Row], idx: &[usize]) -> Vec<Vec<f64>> {
    // (block, r, c, position-in-idx, value), sorted for deterministic summation
    let mut entries: Vec<(usize, usize, usize, usize, C64)> = Vec::new();
    for (pos, &i) in idx.iter().enumerate() {
        for (b, s) in &rows[i].terms {
            for &(r, c, v) in &s.entries {
                entries.push((*b, r, c, pos, v));
            }
        }
    }
    entries.sort_by(|a, b| (a.0, a.1, a.2, a.3).cmp(&(b.0, b.1, b.2, b.3)));
    let m = idx.len();
    let mut g = vec![vec![0.0; m]; m];
    let mut start = 0;
    while start < entries.len() {
        let key = (entries[start].0, entries[start].1, entries[start].2);
        let mut end = start;
        while end < entries.len() && (entries[end].0, entries[end].1, entries[end].2) == key {
            end += 1;
        }
        for a in start..end {
            for b in start..end {
                let (pa, va) = (entries[a].3, entries[a].4);
                let (pb, vb) = (entries[b].3, entries[b].4);
                g[pa][pb] += (va * vb.conj()).re;
            }
        }
        start = end;
    }
    g
}

/// Pivoted Cholesky on the row Gram matrix. Returns the independent rows
/// (in original order) and, if a dependent row contradicts the others, a
/// Farkas vector `y` with `Aᵀy ≈ 0` and `bᵀy > 0`.
fn reduce_rows(rows: &[Row], candidates: &[usize]) -> (Vec<usize>, Option<Vec<f64>>) {
    let m = candidates.len();
    if m == 0 {
        return (Vec::new(), None);
    }
    let g = row_gram(rows, candidates);
    let max_diag = (0..m).map(|i| g[i][i]).fold(0.0, f64::max);
    let tol = RANK_TOL * max_diag.max(1e-300);
    // L stored column by column for the pivots chosen so far
    let mut l: Vec<Vec<f64>> = Vec::new();
    let mut pivots: Vec<usize> = Vec::new();
    let mut resid: Vec<f64> = (0..m).map(|i| g[i][i]).collect();
    let mut active = vec![true; m];
    loop {
        let (best, val) = (0..m)
            .filter(|&i| active[i])
            .map(|i| (i, resid[i]))
            .fold((usize::MAX, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best == usize::MAX || val <= tol {
            break;
        }
        active[best] = false;
        let piv = val.sqrt();
        let mut col = vec![0.0; m];
        for i in 0..m {
            if !active[i] {
                continue;
            }
            let mut s = g[i][best];
            for lk in &l {
                s -= lk[i] * lk[best];
            }
            col[i] = s / piv;
        }
        col[best] = piv;
        for i in 0..m {
            if active[i] {
                resid[i] -= col[i] * col[i];
            }
        }
        l.push(col);
        pivots.push(best);
    }
    let mut kept: Vec<usize> = pivots.iter().map(|&p| candidates[p]).collect();
    kept.sort_unstable();

    // consistency of dependent rows: solve G_PP c = G_P,r and compare rhs
    let dependents: Vec<usize> = (0..m).filter(|&i| active[i]).collect();
    if dependents.is_empty() {
        return (kept, None);
    }
    let k = pivots.len();
    let gpp = nalgebra::DMatrix::from_fn(k, k, |a, b| g[pivots[a]][pivots[b]]);
    let chol = nalgebra::Cholesky::new(gpp);
    let bscale = 1.0 + candidates.iter().map(|&i| rows[i].rhs.abs()).fold(0.0, f64::max);
    for &dep in &dependents {
        let rhs_vec = nalgebra::DVector::from_fn(k, |a, _| g[pivots[a]][dep]);
        let coeffs = match &chol {
            Some(c) => c.solve(&rhs_vec),
            None => continue,
        };
        let predicted: f64 = (0..k).map(|a| coeffs[a] * rows[candidates[pivots[a]]].rhs).sum();
        let mismatch = rows[candidates[dep]].rhs - predicted;
        if mismatch.abs() > CONSISTENCY_TOL * bscale {
            let mut y = vec![0.0; rows.len()];
            let s = mismatch.signum();
            y[candidates[dep]] = s;
            for a in 0..k {
                y[candidates[pivots[a]]] = -s * coeffs[a];
            }
            return (kept, Some(y));
        }
    }
    (kept, None)
}

/// A conic program over Hermitian PSD blocks with real affine equalities.
#[derive(Clone, Debug)]
pub struct SdpProblem {
    pub(crate) blocks: Vec<BlockSpec>,
    pub(crate) objective: Vec<SparseHermitian>,
    pub(crate) constant: f64,
    pub(crate) sense: Sense,
    pub(crate) rows: Vec<Row>,
    pub(crate) groups: Vec<Group>,
    /// Indices into `rows` that enter the solver.
    pub(crate) kept: Vec<usize>,
    pub(crate) inconsistency: Option<Vec<f64>>,
}

impl SdpProblem {
    pub fn blocks(&self) -> &[BlockSpec] {
        &self.blocks
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    /// Number of independent equality rows passed to the solver.
    pub fn num_constraints(&self) -> usize {
        self.kept.len()
    }

    /// Total number of generated rows, including dropped ones.
    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// True when the equality system alone has no solution.
    pub fn is_inconsistent(&self) -> bool {
        self.inconsistency.is_some()
    }

    /// Objective value `Σ tr(C_j X_j) + constant` in the caller's sense.
    pub fn objective_value(&self, x: &[HermitianMatrix]) -> f64 {
        self.objective.iter().zip(x).map(|(c, xb)| c.inner(xb.as_matrix())).sum::<f64>() + self.constant
    }

    /// Max absolute residual of all (kept and dropped) equality rows.
    pub fn equality_residual(&self, x: &[HermitianMatrix]) -> f64 {
        self.rows
            .iter()
            .map(|r| {
                let lhs: f64 = r.terms.iter().map(|(b, s)| s.inner(x[*b].as_matrix())).sum();
                (lhs - r.rhs).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Reassembles the matrix multiplier `Σ y_i B_i` of a matrix-equality
    /// group from per-row multipliers indexed like the generated rows.
    pub fn group_multiplier(&self, group: GroupId, row_multipliers: &[f64]) -> HermitianMatrix {
        let d = self.groups[group].dim;
        let mut q = ComplexMatrix::zeros(d, d);
        for (i, row) in self.rows.iter().enumerate() {
            if let Some((g, basis)) = &row.basis {
                if *g == group {
                    basis.add_to(&mut q, row_multipliers[i]);
                }
            }
        }
        HermitianMatrix::from_hermitian_part(&q)
    }

    pub fn group_name(&self, group: GroupId) -> &str {
        &self.groups[group].name
    }

    /// JSON dump for cross-checking with external solvers.
    pub fn to_debug_json(&self) -> serde_json::Value {
        let sparse = |s: &SparseHermitian| -> serde_json::Value {
            s.entries.iter().map(|&(r, c, v)| json!([r, c, v.re, v.im])).collect()
        };
        json!({
            "sense": self.sense,
            "blocks": self.blocks.iter().map(|b| json!({"name": b.name, "dim": b.dim})).collect::<Vec<_>>(),
            "objective": self.objective.iter().map(sparse).collect::<Vec<_>>(),
            "objective_constant": self.constant,
            "constraints": self.kept.iter().map(|&i| {
                let r = &self.rows[i];
                json!({
                    "terms": r.terms.iter().map(|(b, s)| json!({"block": b, "entries": sparse(s)})).collect::<Vec<_>>(),
                    "rhs": r.rhs,
                })
            }).collect::<Vec<_>>(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_is_orthonormal() {
        let b = hermitian_basis(3);
        assert_eq!(b.len(), 9);
        for (i, x) in b.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                let ip = x.inner(&y.to_dense(3));
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((ip - expect).abs() < 1e-14, "{i} {j} {ip}");
            }
        }
    }

    #[test]
    fn duplicate_rows_are_dropped() {
        let mut b = SdpBuilder::new(Sense::Minimize);
        let x = b.add_block("x", 2);
        let id = HermitianMatrix::identity(2);
        b.add_scalar_equality(&[(x, id.clone())], 1.0).unwrap();
        b.add_scalar_equality(&[(x, id.scale(2.0))], 2.0).unwrap();
        let p = b.build().unwrap();
        assert_eq!(p.num_constraints(), 1);
        assert!(!p.is_inconsistent());
    }

    #[test]
    fn contradictory_rows_yield_farkas_vector() {
        let mut b = SdpBuilder::new(Sense::Minimize);
        let x = b.add_block("x", 2);
        let id = HermitianMatrix::identity(2);
        b.add_scalar_equality(&[(x, id.clone())], 1.0).unwrap();
        b.add_scalar_equality(&[(x, id.scale(2.0))], 3.0).unwrap();
        let p = b.build().unwrap();
        let y = p.inconsistency.clone().unwrap();
        let by: f64 = p.rows.iter().zip(&y).map(|(r, yi)| r.rhs * yi).sum();
        assert!(by > 0.0);
    }

    #[test]
    fn combinations_of_random_rows_are_detected() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let a: Vec<HermitianMatrix> = (0..4).map(|_| crate::linalg::random_hermitian(3, &mut rng)).collect();
        let rhs = [0.3, -1.2, 0.7, 2.0];
        let combos = [(&a[0] + &a[2].scale(2.0), rhs[0] + 2.0 * rhs[2]), (&a[1] - &a[3], rhs[1] - rhs[3])];
        for shift in [0.0, 1e-3] {
            let mut b = SdpBuilder::new(Sense::Minimize);
            let x = b.add_block("x", 3);
            for (m, r) in a.iter().zip(rhs) {
                b.add_scalar_equality(&[(x, m.clone())], r).unwrap();
            }
            for (m, r) in &combos {
                b.add_scalar_equality(&[(x, m.clone())], r + shift).unwrap();
            }
            let p = b.build().unwrap();
            assert_eq!(p.num_constraints(), 4);
            assert_eq!(p.is_inconsistent(), shift > 0.0);
        }
    }

    #[test]
    fn identically_zero_group_rows_are_skipped() {
        // tr_out X - tr(X)/2 I = 0 has a vanishing trace component
        let mut b = SdpBuilder::new(Sense::Minimize);
        let x = b.add_block("x", 4);
        b.add_matrix_equality(
            "tp",
            &[
                Term::new(x, 1.0, LinearMap::PartialTrace { dims: vec![2, 2], keep: vec![0] }),
                Term::new(x, -0.5, LinearMap::TraceTimes(HermitianMatrix::identity(2))),
            ],
            &HermitianMatrix::zeros(2),
        )
        .unwrap();
        let p = b.build().unwrap();
        assert_eq!(p.num_constraints(), 3);
        assert!(!p.is_inconsistent());
    }

    #[test]
    fn adjoints_match_forward_maps() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let maps = vec![
            (LinearMap::PartialTranspose { dims: vec![2, 3], on: vec![1] }, 6),
            (LinearMap::PartialTrace { dims: vec![2, 3], keep: vec![1] }, 6),
            (LinearMap::Conjugation(crate::linalg::random_ginibre(2, 3, &mut rng)), 3),
            (LinearMap::TraceTimes(crate::linalg::random_hermitian(2, &mut rng)), 3),
        ];
        for (map, din) in maps {
            let x = crate::linalg::random_hermitian(din, &mut rng);
            let dout = map.output_dim(din).unwrap();
            let e = crate::linalg::random_hermitian(dout, &mut rng);
            let lhs = e.inner(&HermitianMatrix::from_hermitian_part(&map.apply(x.as_matrix()).unwrap()));
            let rhs = HermitianMatrix::from_hermitian_part(&map.adjoint(e.as_matrix(), din).unwrap()).inner(&x);
            assert!((lhs - rhs).abs() < 1e-10, "{map:?}");
        }
    }
}
