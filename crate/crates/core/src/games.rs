//! Input-output games and their relation to witnesses.
//!
//! A game is an input ensemble `{ρ_a}`, a POVM `{M_b}` and scores `ω_ab`.
//! Its payoff on a channel is `Σ ω_ab tr[Λ(ρ_a) M_b] = d_in tr[Y_G J_Λ]` with
//! `Y_G = Σ ω_ab ρ_aᵀ ⊗ M_b`. Any Hermitian `Y` decomposes this way over an
//! informationally complete ensemble and POVM.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, invalid, Error, Result};
use crate::freesets::{FreeSetSpec, NoiseSet};
use crate::linalg::{c64, kron, ComplexMatrix, HermitianMatrix};
use crate::measures::{witness_min_eigenvalue, RobustnessResult, WeightResult};
use crate::quantum::{apply_operator, random_channel, random_density_matrix, ChoiChannel, DensityMatrix, Povm};
use crate::sdp::{self, SdpBuilder, Sense, SolveStatus, SolverOptions};

/// Denominators at or below this are treated as excluded games.
pub const EXCLUDED_DENOMINATOR: f64 = 1e-10;
/// Agreement required between the witness game ratio and its target.
pub const RATIO_TOL: f64 = 1e-4;

/// A finite input-output game.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GameJson", into = "GameJson")]
pub struct QuantumGame {
    inputs: Vec<DensityMatrix>,
    povm: Povm,
    scores: Vec<Vec<f64>>,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GameJson {
    inputs: Vec<DensityMatrix>,
    povm: Povm,
    scores: Vec<Vec<f64>>,
}

impl TryFrom<GameJson> for QuantumGame {
    type Error = Error;
    fn try_from(j: GameJson) -> Result<Self> {
        QuantumGame::new(j.inputs, j.povm, j.scores)
    }
}

impl From<QuantumGame> for GameJson {
    fn from(g: QuantumGame) -> Self {
        GameJson { inputs: g.inputs, povm: g.povm, scores: g.scores }
    }
}

impl QuantumGame {
    pub fn new(inputs: Vec<DensityMatrix>, povm: Povm, scores: Vec<Vec<f64>>) -> Result<Self> {
        let din = inputs.first().ok_or_else(|| invalid("game without inputs"))?.dim();
        if inputs.iter().any(|r| r.dim() != din) {
            return Err(dim_err("game inputs have different dimensions"));
        }
        if scores.len() != inputs.len() || scores.iter().any(|row| row.len() != povm.len()) {
            return Err(dim_err(format!("scores must be {}x{}", inputs.len(), povm.len())));
        }
        if scores.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("scores must be finite"));
        }
        Ok(Self { inputs, povm, scores })
    }

    pub fn dim_in(&self) -> usize {
        self.inputs[0].dim()
    }

    pub fn dim_out(&self) -> usize {
        self.povm.dim()
    }

    pub fn inputs(&self) -> &[DensityMatrix] {
        &self.inputs
    }

    pub fn povm(&self) -> &Povm {
        &self.povm
    }

    pub fn scores(&self) -> &[Vec<f64>] {
        &self.scores
    }

    /// `Y_G = Σ ω_ab ρ_aᵀ ⊗ M_b`.
    pub fn operator(&self) -> HermitianMatrix {
        let d = self.dim_in() * self.dim_out();
        let mut y = ComplexMatrix::zeros(d, d);
        for (a, rho) in self.inputs.iter().enumerate() {
            let rt = rho.matrix().transpose().into_matrix();
            for (b, m) in self.povm.effects().iter().enumerate() {
                let w = self.scores[a][b];
                if w != 0.0 {
                    y += kron(&rt, m.as_matrix()) * c64(w, 0.0);
                }
            }
        }
        HermitianMatrix::from_hermitian_part(&y)
    }
}

/// One game per tuple component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TupleGame {
    pub components: Vec<QuantumGame>,
}

/// `P(Λ, G) = Σ ω_ab tr[Λ(ρ_a) M_b]`.
pub fn payoff(ch: &ChoiChannel, g: &QuantumGame) -> Result<f64> {
    if ch.dim_in() != g.dim_in() || ch.dim_out() != g.dim_out() {
        return Err(dim_err(format!(
            "game is {}->{}, channel is {}->{}",
            g.dim_in(),
            g.dim_out(),
            ch.dim_in(),
            ch.dim_out()
        )));
    }
    let mut total = 0.0;
    for (a, rho) in g.inputs.iter().enumerate() {
        let out = apply_operator(ch, rho.matrix().as_matrix())?;
        for (b, m) in g.povm.effects().iter().enumerate() {
            let w = g.scores[a][b];
            if w != 0.0 {
                total += w * (m.as_matrix() * &out).trace().re;
            }
        }
    }
    Ok(total)
}

/// Sum of component payoffs.
pub fn tuple_payoff(chs: &[ChoiChannel], g: &TupleGame) -> Result<f64> {
    if chs.len() != g.components.len() {
        return Err(dim_err(format!("{} channels for {} games", chs.len(), g.components.len())));
    }
    chs.iter().zip(&g.components).map(|(c, gi)| payoff(c, gi)).sum()
}

/// The `d²` pure states `|i⟩`, `(|i⟩+|j⟩)/√2`, `(|i⟩+i|j⟩)/√2`.
pub fn informationally_complete_states(d: usize) -> Vec<HermitianMatrix> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(d * d);
    let proj = |v: DVector<crate::C64>| HermitianMatrix::projector(&v);
    for i in 0..d {
        let mut v = DVector::zeros(d);
        v[i] = c64(1.0, 0.0);
        out.push(proj(v));
    }
    for i in 0..d {
        for j in i + 1..d {
            let mut v = DVector::zeros(d);
            v[i] = c64(s, 0.0);
            v[j] = c64(s, 0.0);
            out.push(proj(v));
            let mut w = DVector::zeros(d);
            w[i] = c64(s, 0.0);
            w[j] = c64(0.0, s);
            out.push(proj(w));
        }
    }
    out
}

/// Dual frame `{D_a}` with `tr(D_a B_b) = δ_ab` for a basis of Hermitian matrices.
fn dual_frame(basis: &[HermitianMatrix]) -> Result<Vec<HermitianMatrix>> {
    let n = basis.len();
    let gram = DMatrix::from_fn(n, n, |a, b| basis[a].inner(&basis[b]));
    let inv = gram.try_inverse().ok_or_else(|| Error::Numerical("operator basis is singular".into()))?;
    Ok((0..n)
        .map(|a| {
            let mut acc = HermitianMatrix::zeros(basis[0].dim());
            for b in 0..n {
                acc = &acc + &basis[b].scale(inv[(a, b)]);
            }
            acc
        })
        .collect())
}

/// The informationally complete POVM `M_b = T^{-1/2} S_b T^{-1/2}` with `T = Σ S_b`.
pub fn informationally_complete_povm(d: usize) -> Result<Povm> {
    let states = informationally_complete_states(d);
    let mut t = HermitianMatrix::zeros(d);
    for s in &states {
        t = &t + s;
    }
    let t_isqrt = t.eig()?.map_spectrum(|v| 1.0 / v.sqrt());
    let effects: Vec<HermitianMatrix> = states
        .iter()
        .map(|s| HermitianMatrix::from_hermitian_part(&(t_isqrt.as_matrix() * s.as_matrix() * t_isqrt.as_matrix())))
        .collect();
    Povm::new(effects)
}

/// Decomposes `Y` on `dim_in ⊗ dim_out` into `Σ ω_ab ρ_aᵀ ⊗ M_b`.
pub fn witness_to_game(y: &HermitianMatrix, dim_in: usize, dim_out: usize) -> Result<QuantumGame> {
    if y.dim() != dim_in * dim_out {
        return Err(dim_err(format!("witness has dimension {}, expected {}", y.dim(), dim_in * dim_out)));
    }
    let states = informationally_complete_states(dim_in);
    let transposed: Vec<HermitianMatrix> = states.iter().map(|s| s.transpose()).collect();
    let duals_in = dual_frame(&transposed)?;
    let povm = informationally_complete_povm(dim_out)?;
    let duals_out = dual_frame(povm.effects())?;
    let mut scores = Vec::with_capacity(states.len());
    for d in &duals_in {
        // O_a = tr_in[(D_a ⊗ I) Y]
        let lifted = kron(d.as_matrix(), &ComplexMatrix::identity(dim_out, dim_out));
        let o = HermitianMatrix::from_hermitian_part(&crate::linalg::partial_trace_matrix(
            &(lifted * y.as_matrix()),
            &[dim_in, dim_out],
            &[1],
        )?);
        scores.push(duals_out.iter().map(|e| e.inner(&o)).collect());
    }
    let inputs = states.into_iter().map(DensityMatrix::new).collect::<Result<Vec<_>>>()?;
    QuantumGame::new(inputs, povm, scores)
}

/// Component-wise [`witness_to_game`] for a tuple witness.
pub fn witness_to_tuple_game(ys: &[HermitianMatrix], shapes: &[(usize, usize)]) -> Result<TupleGame> {
    if ys.len() != shapes.len() {
        return Err(dim_err("witness and shapes differ in length"));
    }
    let components =
        ys.iter().zip(shapes).map(|(y, &(din, dout))| witness_to_game(y, din, dout)).collect::<Result<_>>()?;
    Ok(TupleGame { components })
}

/// Optimum of `Σ_i P(σ_i, G_i)` over unit-scale members of `cone(F)`.
pub fn free_payoff_extremum(f: &FreeSetSpec, g: &TupleGame, sense: Sense) -> Result<f64> {
    let shapes = f.component_shapes();
    if g.components.len() != shapes.len() {
        return Err(dim_err("game arity does not match free set"));
    }
    let mut b = SdpBuilder::new(sense);
    let enc = f.encode_cone(&mut b, "free")?;
    for (i, (gi, &(din, dout))) in g.components.iter().zip(&shapes).enumerate() {
        if gi.dim_in() != din || gi.dim_out() != dout {
            return Err(dim_err(format!("game component {i} does not match free set")));
        }
        let y = gi.operator().scale(din as f64);
        for t in &enc.components[i] {
            let adj = t.map.adjoint(y.as_matrix(), b.block_dim(t.block))?;
            b.add_objective(t.block, &HermitianMatrix::from_hermitian_part(&adj).scale(t.coef))?;
        }
    }
    b.add_scalar_equality(&enc.scale, 1.0)?;
    let sol = sdp::solve(&b.build()?, &SolverOptions { record_history: false, ..Default::default() })?;
    match sol.status {
        SolveStatus::Optimal => Ok(sol.primal_value),
        s => Err(Error::Solver { status: s, detail: "free payoff program".into() }),
    }
}

/// Outcome of comparing a witness game's advantage ratio with its target.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdvantageReport {
    pub numerator: f64,
    pub denominator: f64,
    pub ratio: f64,
    pub target: f64,
    pub deviation: f64,
    pub excluded: bool,
    pub passed: bool,
    /// Largest reconstruction error `‖Σ ω ρᵀ⊗M - Y‖_max` over components.
    pub reconstruction_error: f64,
    /// Smallest payoff over sampled noise points (free noise only).
    pub min_noise_payoff: Option<f64>,
    /// Smallest witness eigenvalue.
    pub witness_min_eigenvalue: f64,
}

fn build_report(
    xs: &[ChoiChannel],
    f: &FreeSetSpec,
    witness: &[HermitianMatrix],
    sense: Sense,
    target: f64,
) -> Result<(AdvantageReport, TupleGame)> {
    f.check_object(xs)?;
    let shapes = f.component_shapes();
    let game = witness_to_tuple_game(witness, &shapes)?;
    let reconstruction_error = game
        .components
        .iter()
        .zip(witness)
        .map(|(g, y)| g.operator().max_abs_diff(y))
        .fold(0.0, f64::max);
    let numerator = tuple_payoff(xs, &game)?;
    let denominator = free_payoff_extremum(f, &game, sense)?;
    let excluded = denominator.abs() <= EXCLUDED_DENOMINATOR;
    let ratio = if excluded { f64::NAN } else { numerator / denominator };
    let deviation = (ratio - target).abs();
    Ok((
        AdvantageReport {
            numerator,
            denominator,
            ratio,
            target,
            deviation,
            excluded,
            passed: !excluded && deviation <= RATIO_TOL,
            reconstruction_error,
            min_noise_payoff: None,
            witness_min_eigenvalue: witness_min_eigenvalue(witness)?,
        },
        game,
    ))
}

/// Checks that the witness game of a robustness result achieves `1 + R`.
pub fn verify_advantage<R: Rng + ?Sized>(
    xs: &[ChoiChannel],
    f: &FreeSetSpec,
    noise: NoiseSet,
    result: &RobustnessResult,
    rng: &mut R,
) -> Result<AdvantageReport> {
    let witness = result.witness.as_ref().ok_or_else(|| invalid("robustness result has no witness"))?;
    if !result.value.is_finite() {
        return Err(invalid("robustness is infinite; no witness game exists"));
    }
    let (mut report, game) = build_report(xs, f, witness, Sense::Maximize, 1.0 + result.value)?;
    if noise == NoiseSet::Free {
        let mut lo = f64::INFINITY;
        for _ in 0..200 {
            let t = f.random_member(rng)?;
            lo = lo.min(tuple_payoff(&t, &game)?);
        }
        report.passed &= lo >= -1e-8;
        report.min_noise_payoff = Some(lo);
    }
    Ok(report)
}

/// Checks that the witness game of a weight result achieves `1 - W`.
pub fn verify_weight_advantage(xs: &[ChoiChannel], f: &FreeSetSpec, result: &WeightResult) -> Result<AdvantageReport> {
    let witness = result.witness.as_ref().ok_or_else(|| invalid("weight result has no witness"))?;
    let (mut report, _) = build_report(xs, f, witness, Sense::Minimize, 1.0 - result.value)?;
    report.passed &= report.witness_min_eigenvalue >= -1e-7;
    Ok(report)
}

/// Random game with nonnegative scores, hence nonnegative payoff on every channel.
pub fn random_nonnegative_game<R: Rng + ?Sized>(
    dim_in: usize,
    dim_out: usize,
    n_inputs: usize,
    n_outcomes: usize,
    rng: &mut R,
) -> Result<QuantumGame> {
    let inputs: Vec<DensityMatrix> =
        (0..n_inputs.max(1)).map(|_| random_density_matrix(dim_in, 1 + rng.random_range(0..dim_in), rng)).collect();
    let meas = random_channel(dim_out, n_outcomes.max(1), 2, rng);
    let effects = (0..n_outcomes.max(1))
        .map(|k| {
            let mut diag = vec![0.0; n_outcomes.max(1)];
            diag[k] = 1.0;
            crate::quantum::heisenberg_apply(&meas, &HermitianMatrix::from_diagonal(&diag))
        })
        .collect::<Result<Vec<_>>>()?;
    let povm = Povm::new(effects)?;
    let scores = (0..inputs.len()).map(|_| (0..povm.len()).map(|_| rng.random::<f64>()).collect()).collect();
    QuantumGame::new(inputs, povm, scores)
}

/// `P(x, G) / ext_{σ ∈ F} P(σ, G)`, `None` for excluded games.
pub fn advantage_ratio(xs: &[ChoiChannel], f: &FreeSetSpec, g: &TupleGame, sense: Sense) -> Result<Option<f64>> {
    let num = tuple_payoff(xs, g)?;
    let den = free_payoff_extremum(f, g, sense)?;
    Ok((den.abs() > EXCLUDED_DENOMINATOR).then(|| num / den))
}
