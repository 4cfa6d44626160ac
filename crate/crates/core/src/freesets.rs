//! Free sets and their conic encodings.
//!
//! Every object is handled as a list of components, each a normalised Choi
//! matrix (`dim_in = 1` for states). Single-object kinds have one component.
//! The cone `{λσ : λ ≥ 0, σ ∈ F}` is encoded into an [`SdpBuilder`] as a set of
//! PSD blocks plus affine constraints, and each component of a cone element is
//! exposed as a linear expression over those blocks.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, invalid, Error, Result};
use crate::linalg::{
    c64, kron, max_abs_diff, ComplexMatrix, HermitianMatrix, MatrixJson,
};
use crate::quantum::{random_channel, random_density_matrix, random_pure_state, ChoiChannel, DensityMatrix};
use crate::sdp::{self, BlockId, LinearMap, SdpBuilder, Sense, SolveStatus, SolverOptions, Term};

/// Default tolerance for membership decisions on solver output.
pub const MEMBERSHIP_TOL: f64 = 1e-8;
/// Largest group generated from the supplied generators.
const MAX_GROUP_ORDER: usize = 4096;
const UNITARY_TOL: f64 = 1e-10;

/// Finite group given by unitary generators.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupRepresentation {
    dim: usize,
    generators: Vec<ComplexMatrix>,
}

impl GroupRepresentation {
    pub fn new(dim: usize, generators: Vec<ComplexMatrix>) -> Result<Self> {
        for (k, u) in generators.iter().enumerate() {
            if u.nrows() != dim || u.ncols() != dim {
                return Err(dim_err(format!("generator {k} is not {dim}x{dim}")));
            }
            let dev = max_abs_diff(&(u.adjoint() * u), &ComplexMatrix::identity(dim, dim));
            if dev > UNITARY_TOL {
                return Err(invalid(format!("generator {k} is not unitary (deviation {dev:.3e})")));
            }
        }
        Ok(Self { dim, generators })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn generators(&self) -> &[ComplexMatrix] {
        &self.generators
    }

    /// All group elements, by closure under multiplication with the generators.
    pub fn elements(&self) -> Result<Vec<ComplexMatrix>> {
        let mut elems = vec![ComplexMatrix::identity(self.dim, self.dim)];
        let mut frontier = elems.clone();
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for g in &frontier {
                for u in &self.generators {
                    let h = u * g;
                    if !elems.iter().any(|e| max_abs_diff(e, &h) < 1e-8) {
                        elems.push(h.clone());
                        next.push(h);
                        if elems.len() > MAX_GROUP_ORDER {
                            return Err(Error::Unsupported(format!(
                                "generators produce more than {MAX_GROUP_ORDER} elements"
                            )));
                        }
                    }
                }
            }
            frontier = next;
        }
        Ok(elems)
    }

    /// Group average `(1/|G|) Σ U ρ U†`.
    pub fn twirl(&self, m: &HermitianMatrix) -> Result<HermitianMatrix> {
        let elems = self.elements()?;
        let mut acc = ComplexMatrix::zeros(self.dim, self.dim);
        for u in &elems {
            acc += u * m.as_matrix() * u.adjoint();
        }
        Ok(HermitianMatrix::from_hermitian_part(&(acc / c64(elems.len() as f64, 0.0))))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupJson {
    dim: usize,
    generators: Vec<MatrixJson>,
}

impl Serialize for GroupRepresentation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GroupJson { dim: self.dim, generators: self.generators.iter().map(MatrixJson::from_matrix).collect() }
            .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GroupRepresentation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = GroupJson::deserialize(d)?;
        let gens = j
            .generators
            .iter()
            .map(|g| g.to_matrix())
            .collect::<Result<Vec<_>>>()
            .map_err(serde::de::Error::custom)?;
        GroupRepresentation::new(j.dim, gens).map_err(serde::de::Error::custom)
    }
}

/// Whether the SDP cone coincides with the free cone or strictly contains it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exactness {
    Exact,
    OuterRelaxation,
}

/// Noise set used by robustness.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSet {
    All,
    Free,
}

/// Supported free sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FreeSetSpec {
    /// Diagonal states in a fixed basis.
    Incoherent { dim: usize },
    /// Bipartite states with positive partial transpose.
    PptSeparable { dim_a: usize, dim_b: usize },
    /// States commuting with a finite unitary group.
    GroupSymmetric { representation: GroupRepresentation },
    /// Channels whose Choi state has positive partial transpose.
    EntanglementBreakingPpt { dim_in: usize, dim_out: usize },
    /// Channel tuples that are marginals of one joint channel.
    CompatibleTuple { dim_in: usize, dims_out: Vec<usize> },
    /// State tuples on `shared ⊗ env_i` that are marginals of one global state.
    MarginalCompatible { dim_shared: usize, dims_env: Vec<usize> },
}

/// Outcome of a membership query.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    Free,
    NotFree,
    /// Passes the relaxed constraints of an outer-relaxation set.
    RelaxationMember,
}

impl Membership {
    /// True for `Free` and `RelaxationMember`.
    pub fn passes(self) -> bool {
        self != Membership::NotFree
    }
}

/// A cone element encoded in a builder.
#[derive(Clone, Debug)]
pub struct ConeEncoding {
    /// Each component as `Σ coef · map(block)`.
    pub components: Vec<Vec<Term>>,
    /// `λ = Σ Re tr(A · block)`.
    pub scale: Vec<(BlockId, HermitianMatrix)>,
    /// Block values of `λ` times the interior free point.
    interior: Vec<(BlockId, HermitianMatrix)>,
}

impl ConeEncoding {
    /// Values of every encoding block at `λ · interior_free_point`.
    pub fn interior_blocks(&self, lambda: f64) -> Vec<(BlockId, HermitianMatrix)> {
        self.interior.iter().map(|(b, m)| (*b, m.scale(lambda))).collect()
    }

    /// Evaluates the components from solved block values.
    pub fn evaluate(&self, blocks: &[HermitianMatrix]) -> Result<Vec<HermitianMatrix>> {
        self.components
            .iter()
            .map(|terms| {
                let mut acc: Option<ComplexMatrix> = None;
                for t in terms {
                    let v = t.map.apply(blocks[t.block].as_matrix())? * c64(t.coef, 0.0);
                    acc = Some(match acc {
                        Some(a) => a + v,
                        None => v,
                    });
                }
                Ok(HermitianMatrix::from_hermitian_part(&acc.expect("components have at least one term")))
            })
            .collect()
    }

    pub fn scale_value(&self, blocks: &[HermitianMatrix]) -> f64 {
        self.scale.iter().map(|(b, a)| a.inner(&blocks[*b])).sum()
    }

    /// Confines every block to the face on which each component vanishes on
    /// the columns of `kernels[i]`: a block is restricted to the kernel of
    /// `Σ coef·map†(V_i V_i†)` over the terms that use it. Call after every
    /// row touching the blocks has been added. Returns `(block, isometry)`
    /// for each restricted block; an isometry without columns marks a block
    /// forced to zero.
    pub fn restrict_to_face(&self, b: &mut SdpBuilder, kernels: &[ComplexMatrix]) -> Result<Vec<(BlockId, ComplexMatrix)>> {
        let mut pressure: Vec<(BlockId, ComplexMatrix)> = Vec::new();
        for (terms, v) in self.components.iter().zip(kernels) {
            if v.ncols() == 0 {
                continue;
            }
            let outside = v * v.adjoint();
            for t in terms {
                let m = t.map.adjoint(&outside, b.block_dim(t.block))? * c64(t.coef, 0.0);
                match pressure.iter_mut().find(|(blk, _)| *blk == t.block) {
                    Some((_, acc)) => *acc += m,
                    None => pressure.push((t.block, m)),
                }
            }
        }
        let mut lifts = Vec::new();
        for (blk, m) in pressure {
            let u = support_split(&HermitianMatrix::from_hermitian_part(&m))?.1;
            if u.ncols() < b.block_dim(blk) {
                b.restrict_block(blk, &u)?;
                lifts.push((blk, u));
            }
        }
        Ok(lifts)
    }
}

/// Primal infeasibility below which a stalled extension solve is accepted.
const STALLED_FEASIBILITY: f64 = 1e-7;

/// Relative eigenvalue cutoff separating a support from its kernel.
const SUPPORT_TOL: f64 = 1e-12;

/// Orthonormal bases `(U, V)` of the support and kernel of a PSD matrix.
pub fn support_split(c: &HermitianMatrix) -> Result<(ComplexMatrix, ComplexMatrix)> {
    let e = c.eig()?;
    let cut = SUPPORT_TOL * e.values.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let (range, kernel): (Vec<usize>, Vec<usize>) = (0..e.values.len()).partition(|&k| e.values[k] > cut);
    Ok((e.vectors.select_columns(&range), e.vectors.select_columns(&kernel)))
}

fn unit(d: usize, k: usize) -> ComplexMatrix {
    let mut v = ComplexMatrix::zeros(d, 1);
    v[(k, 0)] = c64(1.0, 0.0);
    v
}

impl FreeSetSpec {
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: usize| {
            if v == 0 {
                Err(invalid(format!("{name} must be positive")))
            } else {
                Ok(())
            }
        };
        match self {
            FreeSetSpec::Incoherent { dim } => pos("dim", *dim),
            FreeSetSpec::PptSeparable { dim_a, dim_b } => {
                pos("dim_a", *dim_a)?;
                pos("dim_b", *dim_b)
            }
            FreeSetSpec::GroupSymmetric { representation } => pos("dim", representation.dim),
            FreeSetSpec::EntanglementBreakingPpt { dim_in, dim_out } => {
                pos("dim_in", *dim_in)?;
                pos("dim_out", *dim_out)
            }
            FreeSetSpec::CompatibleTuple { dim_in, dims_out } => {
                pos("dim_in", *dim_in)?;
                if dims_out.is_empty() {
                    return Err(invalid("dims_out must not be empty"));
                }
                dims_out.iter().try_for_each(|&d| pos("dims_out entry", d))
            }
            FreeSetSpec::MarginalCompatible { dim_shared, dims_env } => {
                pos("dim_shared", *dim_shared)?;
                if dims_env.is_empty() {
                    return Err(invalid("dims_env must not be empty"));
                }
                dims_env.iter().try_for_each(|&d| pos("dims_env entry", d))
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FreeSetSpec::Incoherent { .. } => "incoherent",
            FreeSetSpec::PptSeparable { .. } => "ppt_separable",
            FreeSetSpec::GroupSymmetric { .. } => "group_symmetric",
            FreeSetSpec::EntanglementBreakingPpt { .. } => "entanglement_breaking_ppt",
            FreeSetSpec::CompatibleTuple { .. } => "compatible_tuple",
            FreeSetSpec::MarginalCompatible { .. } => "marginal_compatible",
        }
    }

    pub fn exactness(&self) -> Exactness {
        match self {
            FreeSetSpec::PptSeparable { dim_a, dim_b } if dim_a * dim_b > 6 => Exactness::OuterRelaxation,
            FreeSetSpec::EntanglementBreakingPpt { dim_in, dim_out } if dim_in * dim_out > 6 => {
                Exactness::OuterRelaxation
            }
            _ => Exactness::Exact,
        }
    }

    pub fn is_tuple(&self) -> bool {
        matches!(self, FreeSetSpec::CompatibleTuple { .. } | FreeSetSpec::MarginalCompatible { .. })
    }

    /// `(dim_in, dim_out)` of every component.
    pub fn component_shapes(&self) -> Vec<(usize, usize)> {
        match self {
            FreeSetSpec::Incoherent { dim } => vec![(1, *dim)],
            FreeSetSpec::PptSeparable { dim_a, dim_b } => vec![(1, dim_a * dim_b)],
            FreeSetSpec::GroupSymmetric { representation } => vec![(1, representation.dim)],
            FreeSetSpec::EntanglementBreakingPpt { dim_in, dim_out } => vec![(*dim_in, *dim_out)],
            FreeSetSpec::CompatibleTuple { dim_in, dims_out } => dims_out.iter().map(|&d| (*dim_in, d)).collect(),
            FreeSetSpec::MarginalCompatible { dim_shared, dims_env } => {
                dims_env.iter().map(|&d| (1, dim_shared * d)).collect()
            }
        }
    }

    /// Side length of each component's matrix.
    pub fn component_dims(&self) -> Vec<usize> {
        self.component_shapes().iter().map(|(a, b)| a * b).collect()
    }

    /// Checks that the components match the free set's shapes.
    pub fn check_object(&self, xs: &[ChoiChannel]) -> Result<()> {
        let shapes = self.component_shapes();
        if xs.len() != shapes.len() {
            return Err(dim_err(format!("{} expects {} components, got {}", self.name(), shapes.len(), xs.len())));
        }
        for (k, (x, &(din, dout))) in xs.iter().zip(&shapes).enumerate() {
            if x.dim_in() != din || x.dim_out() != dout {
                return Err(dim_err(format!(
                    "component {k} is {}->{}, expected {din}->{dout}",
                    x.dim_in(),
                    x.dim_out()
                )));
            }
        }
        Ok(())
    }

    /// Adds blocks and constraints describing `cone(F)` to the builder.
    pub fn encode_cone(&self, b: &mut SdpBuilder, tag: &str) -> Result<ConeEncoding> {
        self.validate()?;
        match self {
            FreeSetSpec::Incoherent { dim } => {
                let d = *dim;
                let mut comp = Vec::new();
                let mut scale = Vec::new();
                let mut interior = Vec::new();
                for k in 0..d {
                    let blk = b.add_block(format!("{tag}.diag{k}"), 1);
                    comp.push(Term::new(blk, 1.0, LinearMap::Conjugation(unit(d, k))));
                    scale.push((blk, HermitianMatrix::identity(1)));
                    interior.push((blk, HermitianMatrix::identity(1).scale(1.0 / d as f64)));
                }
                Ok(ConeEncoding { components: vec![comp], scale, interior })
            }
            FreeSetSpec::PptSeparable { dim_a, dim_b } => {
                let d = dim_a * dim_b;
                let x = b.add_block(format!("{tag}.x"), d);
                let p = b.add_block(format!("{tag}.pt"), d);
                let dims = vec![*dim_a, *dim_b];
                b.add_matrix_equality(
                    format!("{tag}.ppt"),
                    &[Term::new(x, 1.0, LinearMap::PartialTranspose { dims, on: vec![1] }), Term::id(p, -1.0)],
                    &HermitianMatrix::zeros(d),
                )?;
                let mm = HermitianMatrix::identity(d).scale(1.0 / d as f64);
                Ok(ConeEncoding {
                    components: vec![vec![Term::id(x, 1.0)]],
                    scale: vec![(x, HermitianMatrix::identity(d))],
                    interior: vec![(x, mm.clone()), (p, mm)],
                })
            }
            FreeSetSpec::GroupSymmetric { representation } => {
                let d = representation.dim;
                let x = b.add_block(format!("{tag}.x"), d);
                for (k, u) in representation.generators.iter().enumerate() {
                    b.add_matrix_equality(
                        format!("{tag}.sym{k}"),
                        &[Term::new(x, 1.0, LinearMap::Conjugation(u.clone())), Term::id(x, -1.0)],
                        &HermitianMatrix::zeros(d),
                    )?;
                }
                Ok(ConeEncoding {
                    components: vec![vec![Term::id(x, 1.0)]],
                    scale: vec![(x, HermitianMatrix::identity(d))],
                    interior: vec![(x, HermitianMatrix::identity(d).scale(1.0 / d as f64))],
                })
            }
            FreeSetSpec::EntanglementBreakingPpt { dim_in, dim_out } => {
                let (din, dout) = (*dim_in, *dim_out);
                let d = din * dout;
                let x = b.add_block(format!("{tag}.x"), d);
                let p = b.add_block(format!("{tag}.pt"), d);
                let dims = vec![din, dout];
                b.add_matrix_equality(
                    format!("{tag}.ppt"),
                    &[Term::new(x, 1.0, LinearMap::PartialTranspose { dims: dims.clone(), on: vec![1] }), Term::id(p, -1.0)],
                    &HermitianMatrix::zeros(d),
                )?;
                b.add_matrix_equality(
                    format!("{tag}.tp"),
                    &[
                        Term::new(x, 1.0, LinearMap::PartialTrace { dims, keep: vec![0] }),
                        Term::new(x, -1.0 / din as f64, LinearMap::TraceTimes(HermitianMatrix::identity(din))),
                    ],
                    &HermitianMatrix::zeros(din),
                )?;
                let mm = HermitianMatrix::identity(d).scale(1.0 / d as f64);
                Ok(ConeEncoding {
                    components: vec![vec![Term::id(x, 1.0)]],
                    scale: vec![(x, HermitianMatrix::identity(d))],
                    interior: vec![(x, mm.clone()), (p, mm)],
                })
            }
            FreeSetSpec::CompatibleTuple { dim_in, dims_out } => {
                let din = *dim_in;
                let mut dims = vec![din];
                dims.extend(dims_out);
                let d: usize = dims.iter().product();
                let g = b.add_block(format!("{tag}.joint"), d);
                let all_out: Vec<usize> = vec![0];
                b.add_matrix_equality(
                    format!("{tag}.tp"),
                    &[
                        Term::new(g, 1.0, LinearMap::PartialTrace { dims: dims.clone(), keep: all_out }),
                        Term::new(g, -1.0 / din as f64, LinearMap::TraceTimes(HermitianMatrix::identity(din))),
                    ],
                    &HermitianMatrix::zeros(din),
                )?;
                let components = (0..dims_out.len())
                    .map(|i| vec![Term::new(g, 1.0, LinearMap::PartialTrace { dims: dims.clone(), keep: vec![0, i + 1] })])
                    .collect();
                Ok(ConeEncoding {
                    components,
                    scale: vec![(g, HermitianMatrix::identity(d))],
                    interior: vec![(g, HermitianMatrix::identity(d).scale(1.0 / d as f64))],
                })
            }
            FreeSetSpec::MarginalCompatible { dim_shared, dims_env } => {
                let mut dims = vec![*dim_shared];
                dims.extend(dims_env);
                let d: usize = dims.iter().product();
                let q = b.add_block(format!("{tag}.global"), d);
                let components = (0..dims_env.len())
                    .map(|i| vec![Term::new(q, 1.0, LinearMap::PartialTrace { dims: dims.clone(), keep: vec![0, i + 1] })])
                    .collect();
                Ok(ConeEncoding {
                    components,
                    scale: vec![(q, HermitianMatrix::identity(d))],
                    interior: vec![(q, HermitianMatrix::identity(d).scale(1.0 / d as f64))],
                })
            }
        }
    }

    /// Full-rank member: maximally mixed states and fully depolarizing channels.
    pub fn interior_free_point(&self) -> Vec<ChoiChannel> {
        self.component_shapes()
            .into_iter()
            .map(|(din, dout)| crate::quantum::fully_depolarizing(din, dout))
            .collect()
    }

    /// Membership of a unit-trace object with the default tolerance.
    pub fn membership(&self, xs: &[ChoiChannel]) -> Result<Membership> {
        self.check_object(xs)?;
        let comps: Vec<HermitianMatrix> = xs.iter().map(|x| x.choi().clone()).collect();
        self.membership_of_matrices(&comps, MEMBERSHIP_TOL)
    }

    /// Membership of component matrices normalised to the cone slice `λ = 1`.
    pub fn membership_of_matrices(&self, comps: &[HermitianMatrix], tol: f64) -> Result<Membership> {
        let dims = self.component_dims();
        if comps.len() != dims.len() || comps.iter().zip(&dims).any(|(c, &d)| c.dim() != d) {
            return Err(dim_err(format!("object does not match {}", self.name())));
        }
        let pass = match self {
            FreeSetSpec::Incoherent { .. } => {
                let x = &comps[0];
                let off = (0..x.dim())
                    .flat_map(|i| (0..x.dim()).map(move |j| (i, j)))
                    .filter(|(i, j)| i != j)
                    .map(|(i, j)| x.as_matrix()[(i, j)].norm())
                    .fold(0.0, f64::max);
                off <= tol && x.min_eigenvalue()? >= -tol
            }
            FreeSetSpec::PptSeparable { dim_a, dim_b } => {
                let x = &comps[0];
                x.min_eigenvalue()? >= -tol && x.partial_transpose(&[*dim_a, *dim_b], &[1])?.min_eigenvalue()? >= -tol
            }
            FreeSetSpec::GroupSymmetric { representation } => {
                let x = &comps[0];
                x.min_eigenvalue()? >= -tol
                    && representation
                        .generators
                        .iter()
                        .all(|u| max_abs_diff(&(u * x.as_matrix() * u.adjoint()), x.as_matrix()) <= tol)
            }
            FreeSetSpec::EntanglementBreakingPpt { dim_in, dim_out } => {
                let x = &comps[0];
                let dims = [*dim_in, *dim_out];
                let marg = x.partial_trace(&dims, &[0])?;
                let target = HermitianMatrix::identity(*dim_in).scale(x.trace() / *dim_in as f64);
                x.min_eigenvalue()? >= -tol
                    && x.partial_transpose(&dims, &[1])?.min_eigenvalue()? >= -tol
                    && marg.max_abs_diff(&target) <= tol.max(1e-9)
            }
            FreeSetSpec::CompatibleTuple { .. } | FreeSetSpec::MarginalCompatible { .. } => {
                comps.iter().all(|c| c.min_eigenvalue().map(|v| v >= -tol).unwrap_or(false))
                    && self.extension_distance(comps)? <= tol.max(1e-7)
            }
        };
        Ok(match (pass, self.exactness()) {
            (false, _) => Membership::NotFree,
            (true, Exactness::Exact) => Membership::Free,
            (true, Exactness::OuterRelaxation) => Membership::RelaxationMember,
        })
    }

    /// Smallest `t ≥ 0` such that `x_i + t·I/d_i` are the marginals of one
    /// cone element; zero exactly on `cone(F)`.
    pub fn extension_distance(&self, comps: &[HermitianMatrix]) -> Result<f64> {
        // on rank-deficient components the shift stays inside their support,
        // so the program can be posed on the face where it has an interior
        let faces = comps.iter().map(support_split).collect::<Result<Vec<_>>>()?;
        let mut b = SdpBuilder::new(Sense::Minimize);
        let enc = self.encode_cone(&mut b, "f")?;
        let t = b.add_block("t", 1);
        b.add_objective(t, &HermitianMatrix::identity(1))?;
        for (i, ((terms, x), (u, _))) in enc.components.iter().zip(comps).zip(&faces).enumerate() {
            let r = u.ncols().max(1);
            let p = u * u.adjoint();
            let mut all = terms.clone();
            all.push(Term::new(t, -1.0 / r as f64, LinearMap::TraceTimes(HermitianMatrix::from_hermitian_part(&p))));
            b.add_matrix_equality(format!("marginal{i}"), &all, &HermitianMatrix::from_hermitian_part(&(&p * x.as_matrix() * &p)))?;
        }
        let kernels: Vec<ComplexMatrix> = faces.into_iter().map(|f| f.1).collect();
        enc.restrict_to_face(&mut b, &kernels)?;
        let problem = b.build()?;
        let sol = sdp::solve(&problem, &SolverOptions { record_history: false, ..Default::default() })?;
        match sol.status {
            SolveStatus::Optimal => Ok(sol.primal_value.max(0.0)),
            // a stalled but primal-feasible iterate still bounds the distance
            SolveStatus::MaxIterations if sol.primal_infeasibility <= STALLED_FEASIBILITY => Ok(sol.primal_value.max(0.0)),
            SolveStatus::Infeasible => Ok(f64::INFINITY),
            status => Err(Error::Solver { status, detail: "extension feasibility problem".into() }),
        }
    }

    /// A random member of `F` (not necessarily full rank).
    pub fn random_member<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<ChoiChannel>> {
        self.validate()?;
        match self {
            FreeSetSpec::Incoherent { dim } => {
                let w: Vec<f64> = (0..*dim).map(|_| rng.random::<f64>()).collect();
                let s: f64 = w.iter().sum();
                let rho = HermitianMatrix::from_diagonal(&w.iter().map(|v| v / s).collect::<Vec<_>>());
                Ok(vec![ChoiChannel::from_state(&DensityMatrix::new(rho)?)])
            }
            FreeSetSpec::PptSeparable { dim_a, dim_b } => {
                let rho = random_separable(*dim_a, *dim_b, 1 + rng.random_range(0..4), rng)?;
                Ok(vec![ChoiChannel::from_state(&rho)])
            }
            FreeSetSpec::GroupSymmetric { representation } => {
                let rank = 1 + rng.random_range(0..representation.dim);
                let rho = random_density_matrix(representation.dim, rank, rng);
                let tw = representation.twirl(rho.matrix())?;
                Ok(vec![ChoiChannel::from_state(&DensityMatrix::new(tw)?)])
            }
            FreeSetSpec::EntanglementBreakingPpt { dim_in, dim_out } => {
                Ok(vec![random_measure_prepare(*dim_in, *dim_out, 1 + rng.random_range(0..4), rng)?])
            }
            FreeSetSpec::CompatibleTuple { dim_in, dims_out } => {
                let total: usize = dims_out.iter().product();
                let joint = random_channel(*dim_in, total, 1 + rng.random_range(0..3), rng);
                let mut dims = vec![*dim_in];
                dims.extend(dims_out);
                (0..dims_out.len())
                    .map(|i| {
                        let m = joint.choi().partial_trace(&dims, &[0, i + 1])?;
                        ChoiChannel::new_unchecked(*dim_in, dims_out[i], m)
                    })
                    .collect()
            }
            FreeSetSpec::MarginalCompatible { dim_shared, dims_env } => {
                let mut dims = vec![*dim_shared];
                dims.extend(dims_env);
                let d: usize = dims.iter().product();
                let global = random_density_matrix(d, 1 + rng.random_range(0..d), rng);
                (0..dims_env.len())
                    .map(|i| {
                        let m = global.matrix().partial_trace(&dims, &[0, i + 1])?;
                        Ok(ChoiChannel::from_state(&DensityMatrix::new(m)?))
                    })
                    .collect()
            }
        }
    }
}

/// Mixture of `terms` random product pure states.
pub fn random_separable<R: Rng + ?Sized>(da: usize, db: usize, terms: usize, rng: &mut R) -> Result<DensityMatrix> {
    let mut acc = HermitianMatrix::zeros(da * db);
    let mut total = 0.0;
    for _ in 0..terms.max(1) {
        let w: f64 = rng.random::<f64>() + 1e-3;
        let p = random_pure_state(da, rng).kron(&random_pure_state(db, rng));
        acc = &acc + &p.matrix().scale(w);
        total += w;
    }
    DensityMatrix::new(acc.scale(1.0 / total))
}

/// Measure-and-prepare channel `ρ ↦ Σ_k tr(M_k ρ) σ_k` with `outcomes` outcomes.
pub fn random_measure_prepare<R: Rng + ?Sized>(
    dim_in: usize,
    dim_out: usize,
    outcomes: usize,
    rng: &mut R,
) -> Result<ChoiChannel> {
    let k = outcomes.max(1);
    // POVM from the Heisenberg picture of a random channel into k classical outcomes
    let meas = random_channel(dim_in, k, 2, rng);
    let mut choi = ComplexMatrix::zeros(dim_in * dim_out, dim_in * dim_out);
    for j in 0..k {
        let e = HermitianMatrix::from_diagonal(&(0..k).map(|i| if i == j { 1.0 } else { 0.0 }).collect::<Vec<_>>());
        let m = crate::quantum::heisenberg_apply(&meas, &e)?;
        let sigma = random_density_matrix(dim_out, 1 + rng.random_range(0..dim_out), rng);
        choi += kron(&m.transpose().into_matrix(), sigma.matrix().as_matrix());
    }
    ChoiChannel::new_unchecked(dim_in, dim_out, HermitianMatrix::from_hermitian_part(&(choi / c64(dim_in as f64, 0.0))))
}

/// Bisection for the largest `η` such that `copies` copies of the
/// depolarizing channel `D_η` on `dim` are compatible, to interval `width`.
/// Returns the final bracket `(compatible, incompatible)`.
pub fn depolarizing_compatibility_threshold(dim: usize, copies: usize, width: f64) -> Result<(f64, f64)> {
    if copies < 2 {
        return Err(invalid("at least two copies are needed"));
    }
    if !(width > 0.0) {
        return Err(invalid("bisection width must be positive"));
    }
    let f = FreeSetSpec::CompatibleTuple { dim_in: dim, dims_out: vec![dim; copies] };
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > width {
        let mid = 0.5 * (lo + hi);
        let d = crate::quantum::depolarizing(dim, mid)?;
        if f.membership(&vec![d; copies])?.passes() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{depolarizing, fully_depolarizing, identity_channel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bell() -> DensityMatrix {
        let mut v = nalgebra::DVector::zeros(4);
        v[0] = c64(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        v[3] = c64(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        DensityMatrix::pure(&v).unwrap()
    }

    fn pauli_x() -> ComplexMatrix {
        ComplexMatrix::from_row_slice(2, 2, &[c64(0.0, 0.0), c64(1.0, 0.0), c64(1.0, 0.0), c64(0.0, 0.0)])
    }

    fn specs() -> Vec<FreeSetSpec> {
        vec![
            FreeSetSpec::Incoherent { dim: 3 },
            FreeSetSpec::PptSeparable { dim_a: 2, dim_b: 2 },
            FreeSetSpec::PptSeparable { dim_a: 2, dim_b: 4 },
            FreeSetSpec::GroupSymmetric { representation: GroupRepresentation::new(2, vec![pauli_x()]).unwrap() },
            FreeSetSpec::EntanglementBreakingPpt { dim_in: 2, dim_out: 2 },
            FreeSetSpec::CompatibleTuple { dim_in: 2, dims_out: vec![2, 2] },
            FreeSetSpec::MarginalCompatible { dim_shared: 2, dims_env: vec![2, 2] },
        ]
    }

    #[test]
    fn diagonal_state_is_incoherent() {
        let f = FreeSetSpec::Incoherent { dim: 2 };
        let x = DensityMatrix::new(HermitianMatrix::from_diagonal(&[0.3, 0.7])).unwrap();
        assert_eq!(f.membership(&[ChoiChannel::from_state(&x)]).unwrap(), Membership::Free);
        let mm = DensityMatrix::maximally_mixed(2);
        assert_eq!(f.membership(&[ChoiChannel::from_state(&mm)]).unwrap(), Membership::Free);
    }

    #[test]
    fn bell_state_is_not_ppt() {
        let f = FreeSetSpec::PptSeparable { dim_a: 2, dim_b: 2 };
        assert_eq!(f.membership(&[ChoiChannel::from_state(&bell())]).unwrap(), Membership::NotFree);
        let pt = bell().matrix().partial_transpose(&[2, 2], &[1]).unwrap();
        assert!((pt.min_eigenvalue().unwrap() + 0.5).abs() < 1e-12);
    }

    #[test]
    fn exactness_flags() {
        assert_eq!(FreeSetSpec::PptSeparable { dim_a: 2, dim_b: 3 }.exactness(), Exactness::Exact);
        assert_eq!(FreeSetSpec::PptSeparable { dim_a: 2, dim_b: 4 }.exactness(), Exactness::OuterRelaxation);
        assert_eq!(FreeSetSpec::EntanglementBreakingPpt { dim_in: 3, dim_out: 3 }.exactness(), Exactness::OuterRelaxation);
        assert_eq!(FreeSetSpec::Incoherent { dim: 50 }.exactness(), Exactness::Exact);
    }

    #[test]
    fn constant_channels_are_broadcastable() {
        let f = FreeSetSpec::CompatibleTuple { dim_in: 2, dims_out: vec![2, 2] };
        let dep = fully_depolarizing(2, 2);
        assert_eq!(f.membership(&[dep.clone(), dep]).unwrap(), Membership::Free);
    }

    #[test]
    fn identity_pair_is_not_broadcastable() {
        let f = FreeSetSpec::CompatibleTuple { dim_in: 2, dims_out: vec![2, 2] };
        let id = identity_channel(2);
        assert_eq!(f.membership(&[id.clone(), id]).unwrap(), Membership::NotFree);
    }

    #[test]
    fn depolarized_pair_threshold_brackets_two_thirds() {
        let f = FreeSetSpec::CompatibleTuple { dim_in: 2, dims_out: vec![2, 2] };
        let pair = |eta: f64| {
            let d = depolarizing(2, eta).unwrap();
            f.membership(&[d.clone(), d]).unwrap()
        };
        assert_eq!(pair(0.65), Membership::Free);
        assert_eq!(pair(0.68), Membership::NotFree);
        let (lo, hi) = depolarizing_compatibility_threshold(2, 2, 1e-2).unwrap();
        assert!(lo <= 2.0 / 3.0 + 1e-6 && hi >= 2.0 / 3.0 - 1e-6, "{lo} {hi}");
    }

    #[test]
    fn product_marginals_are_compatible() {
        let f = FreeSetSpec::MarginalCompatible { dim_shared: 2, dims_env: vec![2, 2] };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_density_matrix(2, 2, &mut rng);
        let b = random_density_matrix(2, 2, &mut rng);
        let c = random_density_matrix(2, 2, &mut rng);
        let xs = [ChoiChannel::from_state(&a.kron(&b)), ChoiChannel::from_state(&a.kron(&c))];
        assert_eq!(f.membership(&xs).unwrap(), Membership::Free);
        let bb = [ChoiChannel::from_state(&bell()), ChoiChannel::from_state(&bell())];
        assert_eq!(f.membership(&bb).unwrap(), Membership::NotFree);
    }

    #[test]
    fn interior_points_are_full_rank_members() {
        for f in specs() {
            let p = f.interior_free_point();
            assert!(f.membership(&p).unwrap().passes(), "{}", f.name());
            for c in &p {
                assert!(c.choi().min_eigenvalue().unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn random_members_and_mixtures_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for f in specs() {
            for _ in 0..4 {
                let x = f.random_member(&mut rng).unwrap();
                let y = f.random_member(&mut rng).unwrap();
                assert!(f.membership(&x).unwrap().passes(), "{}", f.name());
                let t = rng.random::<f64>();
                let mix: Vec<ChoiChannel> = x.iter().zip(&y).map(|(a, b)| a.mix(b, t).unwrap()).collect();
                assert!(f.membership(&mix).unwrap().passes(), "{} mixture", f.name());
            }
        }
    }

    #[test]
    fn group_closure_of_pauli_x() {
        let g = GroupRepresentation::new(2, vec![pauli_x()]).unwrap();
        assert_eq!(g.elements().unwrap().len(), 2);
        let rho = HermitianMatrix::from_diagonal(&[1.0, 0.0]);
        let tw = g.twirl(&rho).unwrap();
        assert!(tw.max_abs_diff(&HermitianMatrix::identity(2).scale(0.5)) < 1e-14);
    }

    #[test]
    fn non_unitary_generator_rejected() {
        let m = ComplexMatrix::identity(2, 2) * c64(2.0, 0.0);
        assert!(GroupRepresentation::new(2, vec![m]).is_err());
    }

    #[test]
    fn json_round_trip() {
        for f in specs() {
            let s = serde_json::to_string(&f).unwrap();
            let back: FreeSetSpec = serde_json::from_str(&s).unwrap();
            assert_eq!(back, f);
        }
        let bad = r#"{"kind": "incoherent", "dim": 2, "extra": 1}"#;
        assert!(serde_json::from_str::<FreeSetSpec>(bad).is_err());
    }

    #[test]
    fn cone_constraints_match_membership() {
        // the interior point satisfies every generated constraint
        for f in specs() {
            let mut b = SdpBuilder::new(Sense::Minimize);
            let enc = f.encode_cone(&mut b, "f").unwrap();
            let p = b.build().unwrap();
            let mut blocks: Vec<HermitianMatrix> = p.blocks().iter().map(|s| HermitianMatrix::zeros(s.dim)).collect();
            for (id, m) in enc.interior_blocks(1.0) {
                blocks[id] = m;
            }
            assert!(p.equality_residual(&blocks) < 1e-12, "{}", f.name());
            assert!((enc.scale_value(&blocks) - 1.0).abs() < 1e-12);
            let comps = enc.evaluate(&blocks).unwrap();
            assert!(f.membership_of_matrices(&comps, 1e-9).unwrap().passes());
        }
    }
}
