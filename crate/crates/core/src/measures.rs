//! Robustness, weight and max-relative entropy.
//!
//! All quantifiers take a list of components (one for single objects) and
//! solve a standard-form SDP built from the free set's cone encoding:
//!
//! * robustness: minimise `λ(X)` with `X ∈ cone(F)`, `X_i - S_i = J_i`, where
//!   `S` is PSD (`N = all`) or another cone element (`N = free`); `R = λ - 1`.
//! * weight: maximise `λ(Z)` with `Z ∈ cone(F)`, `J_i - Z_i ⪰ 0`; `W = 1 - λ`.
//!
//! Witnesses are the matrix multipliers of the equality `X_i - S_i = J_i`
//! (negated for weight), rescaled so that `Σ_i tr(Y_i σ_i) = 1` at the optimal
//! free point.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::freesets::{support_split, ConeEncoding, Exactness, FreeSetSpec, NoiseSet};
use crate::linalg::{c64, ComplexMatrix, HermitianMatrix, PSD_TOL};
use crate::quantum::{ChoiChannel, DensityMatrix};
use crate::sdp::{
    self, slater_check, GroupId, SdpBuilder, SdpProblem, Sense, SlaterStatus, SolveStatus, SolverOptions, Term,
};

/// Threshold below which a rescaling denominator is treated as zero.
const DEGENERATE: f64 = 1e-9;

/// Result of a robustness computation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RobustnessResult {
    /// `R ≥ 0`, or `+∞` (serialised as `null`) when no mixture reaches `F`.
    pub value: f64,
    pub status: SolveStatus,
    pub noise: NoiseSet,
    pub exactness: Exactness,
    /// Normalised free components `σ_i`.
    pub free_point: Option<Vec<HermitianMatrix>>,
    /// Normalised noise components, absent when `R` is zero.
    pub noise_point: Option<Vec<HermitianMatrix>>,
    pub witness: Option<Vec<HermitianMatrix>>,
    pub primal_value: f64,
    pub dual_value: f64,
    pub gap: f64,
    pub iterations: usize,
    pub slater: Option<SlaterStatus>,
}

impl RobustnessResult {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }
}

/// Result of a weight computation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeightResult {
    /// `W ∈ [0, 1]`.
    pub value: f64,
    pub status: SolveStatus,
    pub exactness: Exactness,
    /// Normalised free components, absent when `W = 1`.
    pub free_point: Option<Vec<HermitianMatrix>>,
    /// Normalised resource components `Γ_i`, absent when `W = 0`.
    pub residual: Option<Vec<HermitianMatrix>>,
    pub witness: Option<Vec<HermitianMatrix>>,
    pub primal_value: f64,
    pub dual_value: f64,
    pub gap: f64,
    pub iterations: usize,
    pub slater: Option<SlaterStatus>,
}

fn components(xs: &[ChoiChannel]) -> Vec<HermitianMatrix> {
    xs.iter().map(|x| x.choi().clone()).collect()
}

fn scaled(ms: &[HermitianMatrix], s: f64) -> Vec<HermitianMatrix> {
    ms.iter().map(|m| m.scale(s)).collect()
}

fn pairing(ys: &[HermitianMatrix], xs: &[HermitianMatrix]) -> f64 {
    ys.iter().zip(xs).map(|(y, x)| y.inner(x)).sum()
}

fn solver_error(status: SolveStatus, what: &str) -> Error {
    Error::Solver { status, detail: format!("{what} program") }
}

struct Built {
    problem: SdpProblem,
    free: ConeEncoding,
    noise_blocks: Vec<usize>,
    noise_cone: Option<ConeEncoding>,
    groups: Vec<GroupId>,
}

fn build_robustness(comps: &[HermitianMatrix], f: &FreeSetSpec, noise: NoiseSet) -> Result<Built> {
    let mut b = SdpBuilder::new(Sense::Minimize);
    let free = f.encode_cone(&mut b, "free")?;
    let mut noise_blocks = Vec::new();
    let noise_cone = match noise {
        NoiseSet::All => {
            for (i, c) in comps.iter().enumerate() {
                noise_blocks.push(b.add_block(format!("noise{i}"), c.dim()));
            }
            None
        }
        NoiseSet::Free => Some(f.encode_cone(&mut b, "noise")?),
    };
    let mut groups = Vec::new();
    for (i, c) in comps.iter().enumerate() {
        let mut terms = free.components[i].clone();
        match &noise_cone {
            None => terms.push(Term::id(noise_blocks[i], -1.0)),
            Some(enc) => {
                terms.extend(enc.components[i].iter().map(|t| Term::new(t.block, -t.coef, t.map.clone())))
            }
        }
        groups.push(b.add_matrix_equality(format!("mix{i}"), &terms, c)?);
    }
    for (blk, a) in &free.scale {
        b.add_objective(*blk, a)?;
    }
    Ok(Built { problem: b.build()?, free, noise_blocks, noise_cone, groups })
}

fn robustness_slater(built: &Built, comps: &[HermitianMatrix]) -> Result<SlaterStatus> {
    let mut lambda: f64 = 1.0;
    for c in comps {
        lambda = lambda.max(2.0 * c.max_eigenvalue()? * c.dim() as f64 + 1.0);
    }
    let mut blocks: Vec<HermitianMatrix> =
        built.problem.blocks().iter().map(|s| HermitianMatrix::zeros(s.dim)).collect();
    for (id, m) in built.free.interior_blocks(lambda) {
        blocks[id] = m;
    }
    let x = built.free.evaluate(&blocks)?;
    for (i, &s) in built.noise_blocks.iter().enumerate() {
        blocks[s] = &x[i] - &comps[i];
    }
    Ok(slater_check(&built.problem, &blocks))
}

/// Robustness of a single object (states are channels with `dim_in = 1`).
pub fn robustness(x: &ChoiChannel, f: &FreeSetSpec, noise: NoiseSet) -> Result<RobustnessResult> {
    robustness_with(std::slice::from_ref(x), f, noise, &SolverOptions::default())
}

/// Robustness of a tuple with respect to a tuple free set.
pub fn tuple_robustness(xs: &[ChoiChannel], f: &FreeSetSpec, noise: NoiseSet) -> Result<RobustnessResult> {
    if !f.is_tuple() {
        return Err(invalid(format!("{} is not a tuple free set", f.name())));
    }
    robustness_with(xs, f, noise, &SolverOptions::default())
}

pub fn robustness_with(
    xs: &[ChoiChannel],
    f: &FreeSetSpec,
    noise: NoiseSet,
    opts: &SolverOptions,
) -> Result<RobustnessResult> {
    f.check_object(xs)?;
    robustness_of_matrices(&components(xs), f, noise, opts)
}

/// Robustness of unit-trace component matrices already shaped for `f`.
pub fn robustness_of_matrices(
    comps: &[HermitianMatrix],
    f: &FreeSetSpec,
    noise: NoiseSet,
    opts: &SolverOptions,
) -> Result<RobustnessResult> {
    let built = build_robustness(comps, f, noise)?;
    let slater = match noise {
        NoiseSet::All => Some(robustness_slater(&built, comps)?),
        NoiseSet::Free => None,
    };
    let sol = sdp::solve(&built.problem, opts)?;
    let infinite = RobustnessResult {
        value: f64::INFINITY,
        status: SolveStatus::Infeasible,
        noise,
        exactness: f.exactness(),
        free_point: None,
        noise_point: None,
        witness: None,
        primal_value: f64::INFINITY,
        dual_value: sol.dual_value,
        gap: f64::NAN,
        iterations: sol.iterations,
        slater: slater.clone(),
    };
    match sol.status {
        SolveStatus::Infeasible => return Ok(infinite),
        SolveStatus::Unbounded => return Err(solver_error(sol.status, "robustness")),
        SolveStatus::Optimal | SolveStatus::MaxIterations => {}
    }
    let lambda = sol.primal_value;
    let value = (lambda - 1.0).max(0.0);
    let x = built.free.evaluate(&sol.primal_blocks)?;
    let free_point = scaled(&x, 1.0 / lambda);
    let noise_raw = match &built.noise_cone {
        None => built.noise_blocks.iter().map(|&s| sol.primal_blocks[s].clone()).collect(),
        Some(enc) => enc.evaluate(&sol.primal_blocks)?,
    };
    let noise_point = (value > DEGENERATE).then(|| scaled(&noise_raw, 1.0 / value));
    let mut witness: Vec<HermitianMatrix> =
        built.groups.iter().map(|&g| built.problem.group_multiplier(g, &sol.row_multipliers)).collect();
    let binding = pairing(&witness, &free_point);
    if binding > DEGENERATE {
        witness = scaled(&witness, 1.0 / binding);
    }
    Ok(RobustnessResult {
        value,
        status: sol.status,
        noise,
        exactness: f.exactness(),
        free_point: Some(free_point),
        noise_point,
        witness: Some(witness),
        primal_value: sol.primal_value,
        dual_value: sol.dual_value,
        gap: sol.gap(),
        iterations: sol.iterations,
        slater,
    })
}

/// Convex weight of a single object.
pub fn weight(x: &ChoiChannel, f: &FreeSetSpec) -> Result<WeightResult> {
    weight_with(std::slice::from_ref(x), f, &SolverOptions::default())
}

/// Convex weight of a tuple with respect to a tuple free set.
pub fn tuple_weight(xs: &[ChoiChannel], f: &FreeSetSpec) -> Result<WeightResult> {
    if !f.is_tuple() {
        return Err(invalid(format!("{} is not a tuple free set", f.name())));
    }
    weight_with(xs, f, &SolverOptions::default())
}

pub fn weight_with(xs: &[ChoiChannel], f: &FreeSetSpec, opts: &SolverOptions) -> Result<WeightResult> {
    f.check_object(xs)?;
    weight_of_matrices(&components(xs), f, opts)
}

/// Weight of unit-trace component matrices already shaped for `f`.
///
/// When some component is (numerically) rank deficient the split
/// `J = Z + S` has no strictly feasible point and the dual optimum is
/// unbounded along the kernel. The program is then relaxed to
/// `J = Z + S - T` with `T ⪰ 0` penalised by `M tr T`, which bounds the dual
/// by `Y ⪯ M I`. The penalty is exact once `M` exceeds the norm of some
/// optimal witness; `M` grows until the optimal `T` vanishes.
pub fn weight_of_matrices(comps: &[HermitianMatrix], f: &FreeSetSpec, opts: &SolverOptions) -> Result<WeightResult> {
    let faces = comps.iter().map(support_split).collect::<Result<Vec<_>>>()?;
    if faces.iter().all(|(_, k)| k.ncols() == 0) {
        // strictly feasible point: a small multiple of the interior free point
        let mut eps = f64::INFINITY;
        for c in comps {
            eps = eps.min(0.5 * c.min_eigenvalue()? * c.dim() as f64);
        }
        return solve_weight(comps, f, opts, eps, None);
    }
    solve_weight(comps, f, opts, 0.0, Some(&faces))
}

/// Largest kernel coefficient tried when extending a face witness.
const WITNESS_EXTENSION_MAX: f64 = 1e5;
/// Accepted shortfall of `min_F Σ_i tr(Y_i σ_i)` below one for an extended
/// witness. The shortfall decays like `1/c` and the dual optimum is not
/// attained on rank-deficient objects, so the witness is only near-optimal.
const WITNESS_EXTENSION_SLACK: f64 = 1e-4;

/// Weight program. With `faces`, every free component and residual is
/// confined to the support of its object, since `0 ⪯ Z_i ⪯ J_i` forces
/// `range Z_i ⊆ range J_i`; the face has an interior where the full cone
/// does not.
fn solve_weight(
    comps: &[HermitianMatrix],
    f: &FreeSetSpec,
    opts: &SolverOptions,
    eps: f64,
    faces: Option<&[(ComplexMatrix, ComplexMatrix)]>,
) -> Result<WeightResult> {
    let rhs: Vec<HermitianMatrix> = match faces {
        Some(fs) => comps
            .iter()
            .zip(fs)
            .map(|(c, (u, _))| HermitianMatrix::from_hermitian_part(&(u * u.adjoint() * c.as_matrix() * u * u.adjoint())))
            .collect(),
        None => comps.to_vec(),
    };
    let mut b = SdpBuilder::new(Sense::Minimize);
    let free = f.encode_cone(&mut b, "free")?;
    let mut slack = Vec::new();
    let mut groups = Vec::new();
    for (i, c) in rhs.iter().enumerate() {
        let s = b.add_block(format!("residual{i}"), c.dim());
        slack.push(s);
        let mut terms = free.components[i].clone();
        terms.push(Term::id(s, 1.0));
        groups.push(b.add_matrix_equality(format!("split{i}"), &terms, c)?);
    }
    for (blk, a) in &free.scale {
        b.add_objective(*blk, &a.scale(-1.0))?;
    }

    // (block, isometry) pairs of every restricted block
    let mut lifts: Vec<(usize, ComplexMatrix)> = Vec::new();
    if let Some(fs) = faces {
        for (i, &s) in slack.iter().enumerate() {
            lifts.push((s, fs[i].0.clone()));
        }
        for (blk, u) in &lifts {
            b.restrict_block(*blk, u)?;
        }
        let kernels: Vec<ComplexMatrix> = fs.iter().map(|f| f.1.clone()).collect();
        lifts.extend(free.restrict_to_face(&mut b, &kernels)?);
    }
    let problem = b.build()?;

    let slater = match faces {
        None => {
            let mut blocks: Vec<HermitianMatrix> =
                problem.blocks().iter().map(|s| HermitianMatrix::zeros(s.dim)).collect();
            for (id, m) in free.interior_blocks(eps) {
                blocks[id] = m;
            }
            let z = free.evaluate(&blocks)?;
            for (i, &s) in slack.iter().enumerate() {
                blocks[s] = &comps[i] - &z[i];
            }
            slater_check(&problem, &blocks)
        }
        Some(_) => SlaterStatus::NotStrictlyFeasible {
            reason: "object is rank deficient; solved on the face of its support".into(),
        },
    };

    let sol = sdp::solve(&problem, opts)?;
    match sol.status {
        SolveStatus::Optimal | SolveStatus::MaxIterations => {}
        s => return Err(solver_error(s, "weight")),
    }
    let mut blocks = sol.primal_blocks.clone();
    for (blk, u) in &lifts {
        blocks[*blk] = if u.ncols() == 0 {
            HermitianMatrix::zeros(u.nrows())
        } else {
            HermitianMatrix::from_hermitian_part(&(u * blocks[*blk].as_matrix() * u.adjoint()))
        };
    }
    let z = free.evaluate(&blocks)?;
    let lambda = -sol.primal_value;
    let value = (1.0 - lambda).clamp(0.0, 1.0);
    let free_point = (lambda > DEGENERATE).then(|| scaled(&z, 1.0 / lambda));
    let residual =
        (value > DEGENERATE).then(|| slack.iter().map(|&s| blocks[s].scale(1.0 / value)).collect::<Vec<_>>());
    let mut witness: Vec<HermitianMatrix> =
        groups.iter().map(|&g| problem.group_multiplier(g, &sol.row_multipliers).scale(-1.0)).collect();
    if let Some(fs) = faces {
        // only the compression onto the support is determined by the solve
        for (y, (u, _)) in witness.iter_mut().zip(fs) {
            *y = HermitianMatrix::from_hermitian_part(&(u * u.adjoint() * y.as_matrix() * u * u.adjoint()));
        }
    }
    if let Some(fp) = &free_point {
        let binding = pairing(&witness, fp);
        if binding > DEGENERATE {
            witness = scaled(&witness, 1.0 / binding);
        }
    }
    if let Some(fs) = faces {
        witness = match free_point {
            Some(_) => extend_face_witness(&witness, fs, f)?,
            None => kernel_witness(fs, f)?.unwrap_or(witness),
        };
    }
    Ok(WeightResult {
        value,
        status: sol.status,
        exactness: f.exactness(),
        free_point,
        residual,
        witness: Some(witness),
        primal_value: 1.0 + sol.primal_value,
        dual_value: 1.0 + sol.dual_value,
        gap: sol.gap(),
        iterations: sol.iterations,
        slater: Some(slater),
    })
}

/// Adds `c·V_i V_i†` on the kernels of the object, growing `c` until the
/// witness pays at least one on every free point (up to the slack).
fn extend_face_witness(
    witness: &[HermitianMatrix],
    faces: &[(ComplexMatrix, ComplexMatrix)],
    f: &FreeSetSpec,
) -> Result<Vec<HermitianMatrix>> {
    let mut c = witness.iter().map(|y| y.max_eigenvalue()).try_fold(1.0f64, |a, v| v.map(|v| a.max(v)))?;
    loop {
        let ext: Vec<HermitianMatrix> = witness
            .iter()
            .zip(faces)
            .map(|(y, (_, v))| HermitianMatrix::from_hermitian_part(&(y.as_matrix() + v * v.adjoint() * c64(c, 0.0))))
            .collect();
        let m = free_minimum(f, &ext)?;
        if c >= WITNESS_EXTENSION_MAX || m >= 1.0 - WITNESS_EXTENSION_SLACK {
            return Ok(ext);
        }
        c = (c * 10.0).min(WITNESS_EXTENSION_MAX);
    }
}

/// Witness of a zero free part: the kernel projectors scaled to pay one on
/// every free point, `None` when some free point lies inside the support.
fn kernel_witness(faces: &[(ComplexMatrix, ComplexMatrix)], f: &FreeSetSpec) -> Result<Option<Vec<HermitianMatrix>>> {
    let ys: Vec<HermitianMatrix> =
        faces.iter().map(|(_, v)| HermitianMatrix::from_hermitian_part(&(v * v.adjoint()))).collect();
    let m = free_minimum(f, &ys)?;
    Ok((m > DEGENERATE).then(|| scaled(&ys, 1.0 / m)))
}

/// `min_{σ ∈ F} Σ_i tr(Y_i σ_i)`.
fn free_minimum(f: &FreeSetSpec, ys: &[HermitianMatrix]) -> Result<f64> {
    let mut b = SdpBuilder::new(Sense::Minimize);
    let enc = f.encode_cone(&mut b, "free")?;
    for (terms, y) in enc.components.iter().zip(ys) {
        for t in terms {
            let adj = t.map.adjoint(y.as_matrix(), b.block_dim(t.block))?;
            b.add_objective(t.block, &HermitianMatrix::from_hermitian_part(&adj).scale(t.coef))?;
        }
    }
    b.add_scalar_equality(&enc.scale, 1.0)?;
    let sol = sdp::solve(&b.build()?, &SolverOptions { record_history: false, ..Default::default() })?;
    match sol.status {
        SolveStatus::Optimal | SolveStatus::MaxIterations => Ok(sol.primal_value),
        s => Err(solver_error(s, "witness extension")),
    }
}

/// `D_max(ρ‖σ)` in bits together with its support diagnostics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MaxRelativeEntropy {
    /// `log₂ λ`, `+∞` on a support violation.
    pub bits: f64,
    /// Smallest `λ` with `λσ - ρ ⪰ 0`.
    pub lambda: f64,
    /// Weight of `ρ` outside the support of `σ`.
    pub support_leak: f64,
}

/// Relative rank cutoff for the support of `σ`.
const SUPPORT_TOL: f64 = 1e-12;

pub fn max_relative_entropy(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<MaxRelativeEntropy> {
    if rho.dim() != sigma.dim() {
        return Err(crate::error::dim_err("states of different dimensions"));
    }
    let e = sigma.matrix().eig()?;
    let top = e.values.max();
    let cut = SUPPORT_TOL * top.max(1.0);
    let support: Vec<usize> = (0..e.values.len()).filter(|&k| e.values[k] > cut).collect();
    let kernel: Vec<usize> = (0..e.values.len()).filter(|&k| e.values[k] <= cut).collect();
    let r = e.vectors.adjoint() * rho.matrix().as_matrix() * &e.vectors;
    let leak: f64 = kernel.iter().map(|&k| r[(k, k)].re).sum();
    if leak > 1e-10 {
        return Ok(MaxRelativeEntropy { bits: f64::INFINITY, lambda: f64::INFINITY, support_leak: leak });
    }
    let n = support.len();
    let m = crate::linalg::ComplexMatrix::from_fn(n, n, |a, b| {
        let (i, j) = (support[a], support[b]);
        r[(i, j)] / (e.values[i].sqrt() * e.values[j].sqrt())
    });
    let lambda = HermitianMatrix::from_hermitian_part(&m).max_eigenvalue()?;
    Ok(MaxRelativeEntropy { bits: lambda.log2(), lambda, support_leak: leak.max(0.0) })
}

/// `log₂(1 + R_{F,all}(ρ))` in bits.
pub fn e_max(rho: &DensityMatrix, f: &FreeSetSpec) -> Result<f64> {
    if f.component_shapes() != vec![(1, rho.dim())] {
        return Err(invalid(format!("{} is not a state free set of dimension {}", f.name(), rho.dim())));
    }
    let r = robustness(&ChoiChannel::from_state(rho), f, NoiseSet::All)?;
    Ok((1.0 + r.value).log2())
}

/// Range of `Σ_i tr(Y_i σ_i)` over random free members, `(min, max)`.
pub fn witness_range_on_free<R: Rng + ?Sized>(
    witness: &[HermitianMatrix],
    f: &FreeSetSpec,
    samples: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for _ in 0..samples {
        let m = f.random_member(rng)?;
        let v = pairing(witness, &components(&m));
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok((lo, hi))
}

/// `Σ_i tr(Y_i J_i)`.
pub fn witness_value(witness: &[HermitianMatrix], xs: &[ChoiChannel]) -> f64 {
    pairing(witness, &components(xs))
}

/// Smallest eigenvalue over the witness components.
pub fn witness_min_eigenvalue(witness: &[HermitianMatrix]) -> Result<f64> {
    let mut lo = f64::INFINITY;
    for y in witness {
        lo = lo.min(y.min_eigenvalue()?);
    }
    Ok(lo)
}

/// True when every component is PSD within the default tolerance.
pub fn witness_is_psd(witness: &[HermitianMatrix]) -> Result<bool> {
    Ok(witness_min_eigenvalue(witness)? >= -PSD_TOL.max(1e-7))
}
