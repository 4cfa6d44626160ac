//! Truncation-based approximation of quantifiers on large (stand-in for
//! infinite-dimensional) systems.
//!
//! A [`TruncationScheme`] acts on one mode of ambient dimension `D` through
//! `α_n(ρ) = P_n ρ P_n + tr[ρ P_n^⊥] ρ₀`, where `P_n` projects onto the first
//! `n` basis vectors. A [`TruncationPlan`] assigns schemes to the modes of a
//! free set (one shared input mode, one scheme per output factor). At level
//! `k` the truncated object `β ∘ Λ ∘ α` is compressed to the level subspace
//! and quantified against the free set of the same kind on the reduced modes.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, invalid, Error, Result};
use crate::freesets::{FreeSetSpec, GroupRepresentation, NoiseSet};
use crate::games::{witness_to_tuple_game, QuantumGame, TupleGame};
use crate::linalg::{ComplexMatrix, HermitianMatrix, C64};
use crate::measures::{robustness_of_matrices, weight_of_matrices};
use crate::quantum::{ChoiChannel, DensityMatrix, Povm};
use crate::sdp::{SolveStatus, SolverOptions};

/// Largest admissible entry of the anchor outside the first level block.
pub const ANCHOR_SUPPORT_TOL: f64 = 1e-12;
/// Weight of the maximally mixed first-level state in a faithful anchor.
pub const FAITHFUL_EPSILON: f64 = 1e-6;
/// Allowed decrease between consecutive level values.
pub const MONOTONE_TOL: f64 = 1e-7;
/// Allowed excess of a level value over the ambient value.
pub const UPPER_BOUND_TOL: f64 = 1e-6;
/// Maximal leakage of a group generator out of a level subspace.
const INVARIANCE_TOL: f64 = 1e-10;

/// Which side of a channel a scheme acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Input,
    Output,
}

/// Nested truncations of one mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SchemeJson", into = "SchemeJson")]
pub struct TruncationScheme {
    ambient_dim: usize,
    levels: Vec<usize>,
    anchor: DensityMatrix,
    side: Side,
    faithful: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemeJson {
    ambient_dim: usize,
    levels: Vec<usize>,
    #[serde(default)]
    anchor: Option<DensityMatrix>,
    #[serde(default = "default_side")]
    side: Side,
    #[serde(default)]
    faithful: bool,
}

fn default_side() -> Side {
    Side::Output
}

impl TryFrom<SchemeJson> for TruncationScheme {
    type Error = Error;
    fn try_from(j: SchemeJson) -> Result<Self> {
        let anchor = match j.anchor {
            Some(a) => a,
            None => DensityMatrix::basis(j.ambient_dim.max(1), 0)?,
        };
        let mut s = Self::new(j.ambient_dim, j.levels, anchor, j.side)?;
        s.faithful = j.faithful;
        Ok(s)
    }
}

impl From<TruncationScheme> for SchemeJson {
    fn from(s: TruncationScheme) -> Self {
        Self { ambient_dim: s.ambient_dim, levels: s.levels, anchor: Some(s.anchor), side: s.side, faithful: s.faithful }
    }
}

impl TruncationScheme {
    pub fn new(ambient_dim: usize, levels: Vec<usize>, anchor: DensityMatrix, side: Side) -> Result<Self> {
        if ambient_dim == 0 {
            return Err(invalid("ambient dimension must be positive"));
        }
        if levels.is_empty() {
            return Err(invalid("a truncation scheme needs at least one level"));
        }
        if levels[0] == 0 || levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid(format!("levels {levels:?} must be positive and strictly increasing")));
        }
        if *levels.last().unwrap() > ambient_dim {
            return Err(invalid(format!("level {} exceeds ambient dimension {ambient_dim}", levels.last().unwrap())));
        }
        if anchor.dim() != ambient_dim {
            return Err(dim_err(format!("anchor has dimension {}, ambient is {ambient_dim}", anchor.dim())));
        }
        let n0 = levels[0];
        let a = anchor.matrix().as_matrix();
        for i in 0..ambient_dim {
            for j in 0..ambient_dim {
                if (i >= n0 || j >= n0) && a[(i, j)].norm() >= ANCHOR_SUPPORT_TOL {
                    return Err(invalid(format!("anchor is not supported in the first level ({n0})")));
                }
            }
        }
        Ok(Self { ambient_dim, levels, anchor, side, faithful: false })
    }

    /// Scheme anchored at `|0⟩⟨0|`.
    pub fn vacuum(ambient_dim: usize, levels: Vec<usize>, side: Side) -> Result<Self> {
        Self::new(ambient_dim, levels, DensityMatrix::basis(ambient_dim.max(1), 0)?, side)
    }

    /// Mixes `ε·I/n₀` on the first level into the anchor so that faithful
    /// inputs stay full rank on every level.
    pub fn with_faithful_anchor(mut self, on: bool) -> Self {
        self.faithful = on;
        self
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn is_faithful(&self) -> bool {
        self.faithful
    }

    /// The anchor as used by the channels (including the faithful mixing).
    pub fn anchor(&self) -> HermitianMatrix {
        if !self.faithful {
            return self.anchor.matrix().clone();
        }
        let n0 = self.levels[0];
        let mut diag = vec![0.0; self.ambient_dim];
        for v in diag.iter_mut().take(n0) {
            *v = FAITHFUL_EPSILON / n0 as f64;
        }
        &self.anchor.matrix().scale(1.0 - FAITHFUL_EPSILON) + &HermitianMatrix::from_diagonal(&diag)
    }

    fn check_level(&self, n: usize) -> Result<()> {
        if self.levels.contains(&n) {
            Ok(())
        } else {
            Err(invalid(format!("level {n} is not one of {:?}", self.levels)))
        }
    }

    /// `P_n`.
    pub fn projector(&self, n: usize) -> Result<HermitianMatrix> {
        self.check_level(n)?;
        let diag: Vec<f64> = (0..self.ambient_dim).map(|i| if i < n { 1.0 } else { 0.0 }).collect();
        Ok(HermitianMatrix::from_diagonal(&diag))
    }

    /// `P_n ρ P_n + tr[ρ P_n^⊥] ρ₀`.
    pub fn apply(&self, rho: &HermitianMatrix, n: usize) -> Result<HermitianMatrix> {
        self.check_level(n)?;
        if rho.dim() != self.ambient_dim {
            return Err(dim_err(format!("operator has dimension {}, ambient is {}", rho.dim(), self.ambient_dim)));
        }
        let m = truncate_factor(rho.as_matrix(), &[self.ambient_dim], 0, n, self.anchor().as_matrix());
        Ok(HermitianMatrix::from_hermitian_part(&m))
    }

    /// Heisenberg picture `P_n M P_n + tr[ρ₀ M] P_n^⊥`.
    pub fn adjoint(&self, m: &HermitianMatrix, n: usize) -> Result<HermitianMatrix> {
        self.check_level(n)?;
        if m.dim() != self.ambient_dim {
            return Err(dim_err(format!("operator has dimension {}, ambient is {}", m.dim(), self.ambient_dim)));
        }
        let out = truncate_factor_adjoint(m.as_matrix(), &[self.ambient_dim], 0, n, self.anchor().as_matrix());
        Ok(HermitianMatrix::from_hermitian_part(&out))
    }
}

/// The channel `α_n` on the ambient mode, in normalised Choi form.
pub fn truncation_channel(s: &TruncationScheme, n: usize) -> Result<ChoiChannel> {
    s.check_level(n)?;
    let d = s.ambient_dim;
    let anchor = s.anchor();
    let mut j = ComplexMatrix::zeros(d * d, d * d);
    let w = 1.0 / d as f64;
    for a in 0..n {
        for b in 0..n {
            j[(a * d + a, b * d + b)] = C64::new(w, 0.0);
        }
    }
    for i in n..d {
        for p in 0..d {
            for q in 0..d {
                j[(i * d + p, i * d + q)] = anchor.as_matrix()[(p, q)] * w;
            }
        }
    }
    ChoiChannel::new(d, d, HermitianMatrix::from_hermitian_part(&j))
}

fn stride(dims: &[usize], f: usize) -> usize {
    dims[f + 1..].iter().product()
}

/// `P ρ P + tr_f[P^⊥ ρ] ⊗ anchor` on factor `f` of a multi-factor operator.
fn truncate_factor(m: &ComplexMatrix, dims: &[usize], f: usize, n: usize, anchor: &ComplexMatrix) -> ComplexMatrix {
    let d = m.nrows();
    let (df, st) = (dims[f], stride(dims, f));
    let digit = |i: usize| (i / st) % df;
    let mut out = ComplexMatrix::from_fn(d, d, |i, j| if digit(i) < n && digit(j) < n { m[(i, j)] } else { C64::default() });
    let rest: Vec<usize> = (0..d).filter(|&i| digit(i) == 0).collect();
    for &r in &rest {
        for &c in &rest {
            let leak: C64 = (n..df).map(|a| m[(r + a * st, c + a * st)]).sum();
            if leak == C64::default() {
                continue;
            }
            for a in 0..df {
                for b in 0..df {
                    let w = anchor[(a, b)];
                    if w != C64::default() {
                        out[(r + a * st, c + b * st)] += leak * w;
                    }
                }
            }
        }
    }
    out
}

/// `P M P + tr_f[(I ⊗ anchor) M] ⊗ P^⊥` on factor `f`.
fn truncate_factor_adjoint(m: &ComplexMatrix, dims: &[usize], f: usize, n: usize, anchor: &ComplexMatrix) -> ComplexMatrix {
    let d = m.nrows();
    let (df, st) = (dims[f], stride(dims, f));
    let digit = |i: usize| (i / st) % df;
    let mut out = ComplexMatrix::from_fn(d, d, |i, j| if digit(i) < n && digit(j) < n { m[(i, j)] } else { C64::default() });
    let rest: Vec<usize> = (0..d).filter(|&i| digit(i) == 0).collect();
    for &r in &rest {
        for &c in &rest {
            let mut k = C64::default();
            for a in 0..df {
                for b in 0..df {
                    let w = anchor[(a, b)];
                    if w != C64::default() {
                        k += w * m[(r + b * st, c + a * st)];
                    }
                }
            }
            if k == C64::default() {
                continue;
            }
            for a in n..df {
                out[(r + a * st, c + a * st)] += k;
            }
        }
    }
    out
}

/// Mode structure of the objects of a free set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModeLayout {
    /// Dimension of the shared input mode, `None` for states.
    pub input: Option<usize>,
    /// Dimensions of the output modes.
    pub outputs: Vec<usize>,
    /// Output modes making up each component, in tensor order.
    pub components: Vec<Vec<usize>>,
}

pub fn mode_layout(f: &FreeSetSpec) -> ModeLayout {
    match f {
        FreeSetSpec::Incoherent { dim } => ModeLayout { input: None, outputs: vec![*dim], components: vec![vec![0]] },
        FreeSetSpec::GroupSymmetric { representation } => {
            ModeLayout { input: None, outputs: vec![representation.dim()], components: vec![vec![0]] }
        }
        FreeSetSpec::PptSeparable { dim_a, dim_b } => {
            ModeLayout { input: None, outputs: vec![*dim_a, *dim_b], components: vec![vec![0, 1]] }
        }
        FreeSetSpec::EntanglementBreakingPpt { dim_in, dim_out } => {
            ModeLayout { input: Some(*dim_in), outputs: vec![*dim_out], components: vec![vec![0]] }
        }
        FreeSetSpec::CompatibleTuple { dim_in, dims_out } => ModeLayout {
            input: Some(*dim_in),
            outputs: dims_out.clone(),
            components: (0..dims_out.len()).map(|i| vec![i]).collect(),
        },
        FreeSetSpec::MarginalCompatible { dim_shared, dims_env } => {
            let mut outputs = vec![*dim_shared];
            outputs.extend(dims_env);
            ModeLayout { input: None, outputs, components: (0..dims_env.len()).map(|i| vec![0, i + 1]).collect() }
        }
    }
}

/// Truncation schemes for the modes of a free set; untruncated modes are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationPlan {
    #[serde(default)]
    pub input: Option<TruncationScheme>,
    pub outputs: Vec<Option<TruncationScheme>>,
}

impl TruncationPlan {
    /// Vacuum-anchored schemes on every mode whose dimension is at least the
    /// largest level.
    pub fn for_free_set(f: &FreeSetSpec, levels: &[usize]) -> Result<Self> {
        f.validate()?;
        let top = *levels.iter().max().ok_or_else(|| invalid("no levels given"))?;
        let lay = mode_layout(f);
        let pick = |d: usize, side: Side| -> Result<Option<TruncationScheme>> {
            if d >= top {
                Ok(Some(TruncationScheme::vacuum(d, levels.to_vec(), side)?))
            } else {
                Ok(None)
            }
        };
        let input = match lay.input {
            Some(d) => pick(d, Side::Input)?,
            None => None,
        };
        let outputs = lay.outputs.iter().map(|&d| pick(d, Side::Output)).collect::<Result<Vec<_>>>()?;
        let plan = Self { input, outputs };
        plan.validate(f)?;
        Ok(plan)
    }

    /// Same plan with every anchor replaced by `anchor` (resized per mode by
    /// zero padding).
    pub fn with_anchor(&self, anchor: &DensityMatrix) -> Result<Self> {
        let swap = |s: &TruncationScheme| -> Result<TruncationScheme> {
            let a = if anchor.dim() == s.ambient_dim {
                anchor.clone()
            } else if anchor.dim() < s.ambient_dim {
                DensityMatrix::new(anchor.matrix().embed(&[s.ambient_dim], &[anchor.dim()])?)?
            } else {
                return Err(dim_err(format!("anchor of dimension {} exceeds mode dimension {}", anchor.dim(), s.ambient_dim)));
            };
            Ok(TruncationScheme::new(s.ambient_dim, s.levels.clone(), a, s.side)?.with_faithful_anchor(s.faithful))
        };
        Ok(Self {
            input: self.input.as_ref().map(swap).transpose()?,
            outputs: self.outputs.iter().map(|o| o.as_ref().map(swap).transpose()).collect::<Result<_>>()?,
        })
    }

    /// Sets the faithfulness flag on every scheme.
    pub fn with_faithful_anchor(mut self, on: bool) -> Self {
        if let Some(s) = self.input.take() {
            self.input = Some(s.with_faithful_anchor(on));
        }
        self.outputs = self.outputs.into_iter().map(|o| o.map(|s| s.with_faithful_anchor(on))).collect();
        self
    }

    fn schemes(&self) -> impl Iterator<Item = &TruncationScheme> {
        self.input.iter().chain(self.outputs.iter().flatten())
    }

    /// Number of levels shared by all schemes.
    pub fn num_levels(&self) -> usize {
        self.schemes().next().map_or(0, |s| s.levels.len())
    }

    /// Level labels, taken from the first truncated mode.
    pub fn level_labels(&self) -> Vec<usize> {
        self.schemes().next().map(|s| s.levels.clone()).unwrap_or_default()
    }

    pub fn validate(&self, f: &FreeSetSpec) -> Result<()> {
        let lay = mode_layout(f);
        if self.outputs.len() != lay.outputs.len() {
            return Err(dim_err(format!("{} output modes, plan has {}", lay.outputs.len(), self.outputs.len())));
        }
        match (&self.input, lay.input) {
            (Some(_), None) => return Err(invalid("states take output-side schemes only")),
            (Some(s), Some(d)) => {
                if s.ambient_dim != d || s.side != Side::Input {
                    return Err(dim_err(format!("input scheme must be an input-side scheme on dimension {d}")));
                }
            }
            _ => {}
        }
        for (k, (s, &d)) in self.outputs.iter().zip(&lay.outputs).enumerate() {
            if let Some(s) = s {
                if s.ambient_dim != d || s.side != Side::Output {
                    return Err(dim_err(format!("output mode {k} needs an output-side scheme on dimension {d}")));
                }
            }
        }
        let counts: Vec<usize> = self.schemes().map(|s| s.levels.len()).collect();
        if counts.is_empty() {
            return Err(invalid("plan truncates no mode"));
        }
        if counts.iter().any(|&c| c != counts[0]) {
            return Err(invalid("all schemes of a plan need the same number of levels"));
        }
        Ok(())
    }

    fn input_level(&self, lay: &ModeLayout, k: usize) -> usize {
        match (&self.input, lay.input) {
            (Some(s), _) => s.levels[k],
            (None, Some(d)) => d,
            (None, None) => 1,
        }
    }

    fn output_levels(&self, lay: &ModeLayout, k: usize) -> Vec<usize> {
        self.outputs.iter().zip(&lay.outputs).map(|(s, &d)| s.as_ref().map_or(d, |s| s.levels[k])).collect()
    }

    fn check_index(&self, k: usize) -> Result<()> {
        if k < self.num_levels() {
            Ok(())
        } else {
            Err(invalid(format!("level index {k} out of range ({} levels)", self.num_levels())))
        }
    }
}

/// Free set of the same kind on the level-`k` modes.
pub fn level_free_set(f: &FreeSetSpec, plan: &TruncationPlan, k: usize) -> Result<FreeSetSpec> {
    plan.validate(f)?;
    plan.check_index(k)?;
    let lay = mode_layout(f);
    let nin = plan.input_level(&lay, k);
    let nout = plan.output_levels(&lay, k);
    let spec = match f {
        FreeSetSpec::Incoherent { .. } => FreeSetSpec::Incoherent { dim: nout[0] },
        FreeSetSpec::PptSeparable { .. } => FreeSetSpec::PptSeparable { dim_a: nout[0], dim_b: nout[1] },
        FreeSetSpec::GroupSymmetric { representation } => {
            FreeSetSpec::GroupSymmetric { representation: compress_representation(representation, nout[0])? }
        }
        FreeSetSpec::EntanglementBreakingPpt { .. } => FreeSetSpec::EntanglementBreakingPpt { dim_in: nin, dim_out: nout[0] },
        FreeSetSpec::CompatibleTuple { .. } => FreeSetSpec::CompatibleTuple { dim_in: nin, dims_out: nout },
        FreeSetSpec::MarginalCompatible { .. } => {
            FreeSetSpec::MarginalCompatible { dim_shared: nout[0], dims_env: nout[1..].to_vec() }
        }
    };
    spec.validate()?;
    Ok(spec)
}

/// Restriction of a representation to the span of the first `n` basis
/// vectors, which must be invariant.
pub fn compress_representation(rep: &GroupRepresentation, n: usize) -> Result<GroupRepresentation> {
    let d = rep.dim();
    if n == d {
        return Ok(rep.clone());
    }
    let mut gens = Vec::with_capacity(rep.generators().len());
    for (g, u) in rep.generators().iter().enumerate() {
        let leak = (n..d).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| u[(i, j)].norm()).fold(0.0, f64::max);
        if leak > INVARIANCE_TOL {
            return Err(Error::Unsupported(format!(
                "level {n} is not invariant under generator {g} (leakage {leak:.2e})"
            )));
        }
        gens.push(u.view((0, 0), (n, n)).into_owned());
    }
    GroupRepresentation::new(n, gens)
}

/// `β ∘ Λ ∘ α` on the ambient modes, component-wise.
pub fn truncate_object(xs: &[ChoiChannel], f: &FreeSetSpec, plan: &TruncationPlan, k: usize) -> Result<Vec<ChoiChannel>> {
    f.check_object(xs)?;
    plan.validate(f)?;
    plan.check_index(k)?;
    let lay = mode_layout(f);
    xs.iter()
        .zip(&lay.components)
        .map(|(x, modes)| {
            let mut dims = vec![x.dim_in()];
            dims.extend(modes.iter().map(|&m| lay.outputs[m]));
            let mut j = x.choi().as_matrix().clone();
            if let Some(s) = &plan.input {
                // on the Choi input factor, α acts through its transposed adjoint
                j = truncate_factor_adjoint(&j, &dims, 0, s.levels[k], &s.anchor().transpose().into_matrix());
            }
            for (pos, &m) in modes.iter().enumerate() {
                if let Some(s) = &plan.outputs[m] {
                    j = truncate_factor(&j, &dims, pos + 1, s.levels[k], s.anchor().as_matrix());
                }
            }
            ChoiChannel::new_unchecked(x.dim_in(), x.dim_out(), HermitianMatrix::from_hermitian_part(&j))
        })
        .collect()
}

/// The level-`k` object: `β ∘ Λ` restricted to the level input subspace and
/// compressed to the level output subspace.
pub fn level_object(xs: &[ChoiChannel], f: &FreeSetSpec, plan: &TruncationPlan, k: usize) -> Result<Vec<ChoiChannel>> {
    f.check_object(xs)?;
    plan.validate(f)?;
    plan.check_index(k)?;
    let lay = mode_layout(f);
    let nin = plan.input_level(&lay, k);
    let nout = plan.output_levels(&lay, k);
    xs.iter()
        .zip(&lay.components)
        .map(|(x, modes)| {
            let mut dims = vec![x.dim_in()];
            dims.extend(modes.iter().map(|&m| lay.outputs[m]));
            let mut keep = dims.clone();
            keep[0] = nin;
            let mut j = x.choi().compress(&dims, &keep)?.scale(x.dim_in() as f64 / nin as f64).into_matrix();
            let cdims = keep;
            for (pos, &m) in modes.iter().enumerate() {
                if let Some(s) = &plan.outputs[m] {
                    j = truncate_factor(&j, &cdims, pos + 1, s.levels[k], s.anchor().as_matrix());
                }
            }
            let mut lvl = cdims.clone();
            for (pos, &m) in modes.iter().enumerate() {
                lvl[pos + 1] = nout[m];
            }
            let h = HermitianMatrix::from_hermitian_part(&j).compress(&cdims, &lvl)?;
            let dout: usize = lvl[1..].iter().product();
            ChoiChannel::new_unchecked(nin, dout, h)
        })
        .collect()
}

/// Quantifier evaluated along a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantifierKind {
    Robustness,
    Weight,
}

/// Settings of a sweep.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepOptions {
    pub solver: SolverOptions,
    /// Upper bound on concurrently solved levels.
    pub jobs: usize,
    /// Also solve the untruncated problem for the upper-bound check.
    pub compute_ambient: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions { record_history: false, ..SolverOptions::default() },
            jobs: 1,
            compute_ambient: true,
        }
    }
}

/// One level of a sweep.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LevelResult {
    pub level: usize,
    /// Quantifier value; `+∞` for an infinite robustness, NaN on failure.
    pub value: f64,
    pub status: Option<SolveStatus>,
    pub gap: f64,
    pub witness: Option<Vec<HermitianMatrix>>,
    pub error: Option<String>,
    pub monotone_ok: bool,
}

/// A decrease between two consecutive solved levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotoneViolation {
    pub from_level: usize,
    pub to_level: usize,
    pub decrease: f64,
}

/// Per-level values of a truncated quantifier.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ApproxSweepResult {
    pub kind: QuantifierKind,
    pub noise: NoiseSet,
    pub free_set: FreeSetSpec,
    pub plan: TruncationPlan,
    pub levels: Vec<usize>,
    pub results: Vec<LevelResult>,
    pub monotone_violations: Vec<MonotoneViolation>,
    /// Value of the untruncated problem, when computed.
    pub ambient_value: Option<f64>,
    /// Levels whose value exceeds the ambient value.
    pub upper_bound_violations: Vec<usize>,
    /// Value at the last solved level.
    pub limit_estimate: f64,
}

impl ApproxSweepResult {
    pub fn values(&self) -> Vec<f64> {
        self.results.iter().map(|r| r.value).collect()
    }

    /// Set when a monotonicity or upper-bound check failed.
    pub fn hard_failure(&self) -> bool {
        !self.monotone_violations.is_empty() || !self.upper_bound_violations.is_empty()
    }

    pub fn failed_levels(&self) -> Vec<usize> {
        self.results.iter().filter(|r| r.error.is_some()).map(|r| r.level).collect()
    }

    /// Columns `level,value,status,gap,monotone_ok`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("level,value,status,gap,monotone_ok\n");
        for r in &self.results {
            let status = match (&r.status, &r.error) {
                (Some(st), _) => serde_json::to_value(st).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default(),
                (None, Some(_)) => "error".into(),
                (None, None) => String::new(),
            };
            s.push_str(&format!("{},{},{},{},{}\n", r.level, fmt_num(r.value), status, fmt_num(r.gap), r.monotone_ok));
        }
        s
    }
}

fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{:.9}", v)
    }
}

struct LevelOutcome {
    value: f64,
    status: SolveStatus,
    gap: f64,
    witness: Option<Vec<HermitianMatrix>>,
}

fn solve_level(
    comps: &[HermitianMatrix],
    f: &FreeSetSpec,
    noise: NoiseSet,
    kind: QuantifierKind,
    opts: &SolverOptions,
) -> Result<LevelOutcome> {
    match kind {
        QuantifierKind::Robustness => {
            let r = robustness_of_matrices(comps, f, noise, opts)?;
            Ok(LevelOutcome { value: r.value, status: r.status, gap: r.gap, witness: r.witness })
        }
        QuantifierKind::Weight => {
            let w = weight_of_matrices(comps, f, opts)?;
            Ok(LevelOutcome { value: w.value, status: w.status, gap: w.gap, witness: w.witness })
        }
    }
}

/// Runs `work(i)` for `i < n` on at most `jobs` threads; results keep index order.
fn run_indexed<T: Send>(n: usize, jobs: usize, work: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let jobs = jobs.clamp(1, n.max(1));
    if jobs == 1 {
        return (0..n).map(work).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let out = work(i);
                slots.lock().expect("result slots poisoned")[i] = Some(out);
            });
        }
    });
    slots.into_inner().expect("result slots poisoned").into_iter().map(|s| s.expect("every level solved")).collect()
}

/// Quantifies the truncated object at every level of `plan`.
///
/// Solve failures are recorded per level and do not stop the sweep. Both
/// robustness and weight sequences are checked to be non-decreasing in the
/// level and bounded by the ambient value.
pub fn approximate_quantifier(
    xs: &[ChoiChannel],
    f: &FreeSetSpec,
    noise: NoiseSet,
    plan: &TruncationPlan,
    kind: QuantifierKind,
    opts: &SweepOptions,
) -> Result<ApproxSweepResult> {
    f.check_object(xs)?;
    plan.validate(f)?;
    let labels = plan.level_labels();
    let n = labels.len();
    let lay = mode_layout(f);
    let top_is_ambient = plan.input_level(&lay, n - 1) == lay.input.unwrap_or(1)
        && plan.output_levels(&lay, n - 1) == lay.outputs;

    let outcomes = run_indexed(n + usize::from(opts.compute_ambient && !top_is_ambient), opts.jobs, |k| {
        if k == n {
            let comps: Vec<HermitianMatrix> = xs.iter().map(|x| x.choi().clone()).collect();
            return solve_level(&comps, f, noise, kind, &opts.solver);
        }
        let spec = level_free_set(f, plan, k)?;
        let objs = level_object(xs, f, plan, k)?;
        let comps: Vec<HermitianMatrix> = objs.iter().map(|x| x.choi().clone()).collect();
        solve_level(&comps, &spec, noise, kind, &opts.solver)
    });

    let mut results: Vec<LevelResult> = Vec::with_capacity(n);
    for (k, out) in outcomes.iter().take(n).enumerate() {
        results.push(match out {
            Ok(o) => LevelResult {
                level: labels[k],
                value: o.value,
                status: Some(o.status),
                gap: o.gap,
                witness: o.witness.clone(),
                error: None,
                monotone_ok: true,
            },
            Err(e) => LevelResult {
                level: labels[k],
                value: f64::NAN,
                status: None,
                gap: f64::NAN,
                witness: None,
                error: Some(e.to_string()),
                monotone_ok: true,
            },
        });
    }
    let ambient_value = if !opts.compute_ambient {
        None
    } else if top_is_ambient {
        results.last().filter(|r| r.error.is_none()).map(|r| r.value)
    } else {
        outcomes[n].as_ref().ok().map(|o| o.value)
    };

    let mut monotone_violations = Vec::new();
    let mut prev: Option<usize> = None;
    for k in 0..n {
        if results[k].error.is_some() {
            continue;
        }
        if let Some(p) = prev {
            let (a, b) = (results[p].value, results[k].value);
            let decrease = if a.is_infinite() && b.is_infinite() { 0.0 } else { a - b };
            if decrease > MONOTONE_TOL {
                results[k].monotone_ok = false;
                monotone_violations.push(MonotoneViolation { from_level: labels[p], to_level: labels[k], decrease });
            }
        }
        prev = Some(k);
    }
    let upper_bound_violations = match ambient_value {
        Some(amb) => results
            .iter()
            .filter(|r| r.error.is_none() && r.value > amb + UPPER_BOUND_TOL)
            .map(|r| r.level)
            .collect(),
        None => Vec::new(),
    };
    let limit_estimate = results.iter().rev().find(|r| r.error.is_none()).map_or(f64::NAN, |r| r.value);
    Ok(ApproxSweepResult {
        kind,
        noise,
        free_set: f.clone(),
        plan: plan.clone(),
        levels: labels,
        results,
        monotone_violations,
        ambient_value,
        upper_bound_violations,
        limit_estimate,
    })
}

/// Lifts the game extracted from the level-`level` witness to the ambient
/// modes: inputs are embedded (`α` fixes them) and effects are mapped by the
/// Heisenberg picture of the output truncations.
pub fn game_certificate_lift(sweep: &ApproxSweepResult, level: usize) -> Result<TupleGame> {
    let k = sweep
        .levels
        .iter()
        .position(|&l| l == level)
        .ok_or_else(|| invalid(format!("level {level} is not part of the sweep")))?;
    let witness = sweep.results[k]
        .witness
        .as_ref()
        .ok_or_else(|| invalid(format!("level {level} has no witness")))?;
    let f = &sweep.free_set;
    let plan = &sweep.plan;
    let lay = mode_layout(f);
    let spec = level_free_set(f, plan, k)?;
    let level_game = witness_to_tuple_game(witness, &spec.component_shapes())?;
    let nin = plan.input_level(&lay, k);
    let nout = plan.output_levels(&lay, k);
    let din = lay.input.unwrap_or(1);
    let components = level_game
        .components
        .iter()
        .zip(&lay.components)
        .map(|(g, modes)| {
            let inputs = g
                .inputs()
                .iter()
                .map(|rho| DensityMatrix::new(rho.matrix().embed(&[din], &[nin])?))
                .collect::<Result<Vec<_>>>()?;
            let dims: Vec<usize> = modes.iter().map(|&m| lay.outputs[m]).collect();
            let lvl: Vec<usize> = modes.iter().map(|&m| nout[m]).collect();
            let effects = g
                .povm()
                .effects()
                .iter()
                .map(|e| {
                    let mut m = e.embed(&dims, &lvl)?.into_matrix();
                    for (pos, &mode) in modes.iter().enumerate() {
                        if let Some(s) = &plan.outputs[mode] {
                            m = truncate_factor_adjoint(&m, &dims, pos, s.levels[k], s.anchor().as_matrix());
                        }
                    }
                    Ok(HermitianMatrix::from_hermitian_part(&m))
                })
                .collect::<Result<Vec<_>>>()?;
            QuantumGame::new(inputs, Povm::new(effects)?, g.scores().to_vec())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TupleGame { components })
}
