//! States, measurements and channels in normalised Choi form.
//!
//! A channel `Λ: L(C^n) → L(C^m)` is stored as
//! `J = (1/n) Σ_ij |i⟩⟨j| ⊗ Λ(|i⟩⟨j|)` on `C^n ⊗ C^m` (input factor first),
//! so `tr J = 1` and a state is the channel with a one-dimensional input.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, invalid, Result};
use crate::linalg::{
    c64, kron, max_abs_diff, permute_factors, random_ginibre, ComplexMatrix, HermitianMatrix, C64, PSD_TOL,
};

/// Allowed deviation of `tr ρ` from one.
pub const TRACE_TOL: f64 = 1e-10;
/// Allowed max-entry deviation in completeness relations.
pub const COMPLETENESS_TOL: f64 = 1e-9;
/// Eigenvalue noise removed from channel outputs.
const OUTPUT_CLIP: f64 = 1e-12;

/// Unit-trace positive semidefinite matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    rho: HermitianMatrix,
}

impl DensityMatrix {
    pub fn new(rho: HermitianMatrix) -> Result<Self> {
        let tr = rho.trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(invalid(format!("state has trace {tr}")));
        }
        let min = rho.min_eigenvalue()?;
        if min < -PSD_TOL {
            return Err(invalid(format!("state has negative eigenvalue {min:.3e}")));
        }
        Ok(Self { rho })
    }

    /// Normalises a nonzero PSD matrix.
    pub fn from_unnormalized(m: &HermitianMatrix) -> Result<Self> {
        let tr = m.trace();
        if tr <= 0.0 {
            return Err(invalid("cannot normalise an operator with non-positive trace"));
        }
        Self::new(m.scale(1.0 / tr))
    }

    pub fn pure(v: &DVector<C64>) -> Result<Self> {
        let n = v.norm();
        if n == 0.0 {
            return Err(invalid("zero state vector"));
        }
        Self::new(HermitianMatrix::projector(&(v / c64(n, 0.0))))
    }

    /// Computational basis state `|k⟩⟨k|`.
    pub fn basis(d: usize, k: usize) -> Result<Self> {
        if k >= d {
            return Err(dim_err(format!("basis index {k} out of range for dimension {d}")));
        }
        let mut diag = vec![0.0; d];
        diag[k] = 1.0;
        Ok(Self { rho: HermitianMatrix::from_diagonal(&diag) })
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self { rho: HermitianMatrix::identity(d).scale(1.0 / d as f64) }
    }

    pub fn dim(&self) -> usize {
        self.rho.dim()
    }

    pub fn matrix(&self) -> &HermitianMatrix {
        &self.rho
    }

    pub fn into_matrix(self) -> HermitianMatrix {
        self.rho
    }

    pub fn kron(&self, other: &DensityMatrix) -> DensityMatrix {
        DensityMatrix { rho: self.rho.kron(&other.rho) }
    }

    /// Convex combination `t·self + (1-t)·other`.
    pub fn mix(&self, other: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
        if self.dim() != other.dim() {
            return Err(dim_err("mixing states of different dimension"));
        }
        Ok(DensityMatrix { rho: &self.rho.scale(t) + &other.rho.scale(1.0 - t) })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateJson {
    dim: usize,
    rho: HermitianMatrix,
}

impl Serialize for DensityMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        StateJson { dim: self.dim(), rho: self.rho.clone() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for DensityMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = StateJson::deserialize(d)?;
        if j.rho.dim() != j.dim {
            return Err(serde::de::Error::custom(format!(
                "\"dim\" is {} but \"rho\" is {}x{}",
                j.dim,
                j.rho.dim(),
                j.rho.dim()
            )));
        }
        DensityMatrix::new(j.rho).map_err(serde::de::Error::custom)
    }
}

/// Finite-outcome POVM.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Povm {
    effects: Vec<HermitianMatrix>,
}

impl Povm {
    pub fn new(effects: Vec<HermitianMatrix>) -> Result<Self> {
        let d = effects.first().ok_or_else(|| invalid("POVM without effects"))?.dim();
        let mut sum = HermitianMatrix::zeros(d);
        for (b, e) in effects.iter().enumerate() {
            if e.dim() != d {
                return Err(dim_err(format!("effect {b} has dimension {} instead of {d}", e.dim())));
            }
            let min = e.min_eigenvalue()?;
            if min < -PSD_TOL {
                return Err(invalid(format!("effect {b} has negative eigenvalue {min:.3e}")));
            }
            sum = &sum + e;
        }
        let dev = sum.max_abs_diff(&HermitianMatrix::identity(d));
        if dev > COMPLETENESS_TOL {
            return Err(invalid(format!("effects sum to identity only within {dev:.3e}")));
        }
        Ok(Self { effects })
    }

    pub fn dim(&self) -> usize {
        self.effects[0].dim()
    }

    pub fn effects(&self) -> &[HermitianMatrix] {
        &self.effects
    }

    pub fn len(&self) -> usize {
        self.effects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.effects.is_empty()
    }
}

impl<'de> Deserialize<'de> for Povm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let effects = Vec::<HermitianMatrix>::deserialize(d)?;
        Povm::new(effects).map_err(serde::de::Error::custom)
    }
}

/// Channel in normalised Choi form.
#[derive(Clone, Debug, PartialEq)]
pub struct ChoiChannel {
    dim_in: usize,
    dim_out: usize,
    choi: HermitianMatrix,
}

impl ChoiChannel {
    /// Validates positivity, unit trace and trace preservation.
    pub fn new(dim_in: usize, dim_out: usize, choi: HermitianMatrix) -> Result<Self> {
        Self::with_tolerance(dim_in, dim_out, choi, PSD_TOL)
    }

    pub fn with_tolerance(dim_in: usize, dim_out: usize, choi: HermitianMatrix, tol: f64) -> Result<Self> {
        let ch = Self::new_unchecked(dim_in, dim_out, choi)?;
        let tr = ch.choi.trace();
        if (tr - 1.0).abs() > TRACE_TOL.max(tol) {
            return Err(invalid(format!("Choi matrix has trace {tr}")));
        }
        let min = ch.choi.min_eigenvalue()?;
        if min < -tol {
            return Err(invalid(format!("Choi matrix has negative eigenvalue {min:.3e}")));
        }
        let dev = ch.trace_preservation_error()?;
        if dev > COMPLETENESS_TOL.max(tol) {
            return Err(invalid(format!("map is not trace preserving (deviation {dev:.3e})")));
        }
        Ok(ch)
    }

    /// Checks only the dimensions.
    pub fn new_unchecked(dim_in: usize, dim_out: usize, choi: HermitianMatrix) -> Result<Self> {
        if dim_in == 0 || dim_out == 0 || choi.dim() != dim_in * dim_out {
            return Err(dim_err(format!(
                "Choi matrix of dimension {} does not match {dim_in} x {dim_out}",
                choi.dim()
            )));
        }
        Ok(Self { dim_in, dim_out, choi })
    }

    /// A state as a channel with trivial input.
    pub fn from_state(rho: &DensityMatrix) -> Self {
        Self { dim_in: 1, dim_out: rho.dim(), choi: rho.matrix().clone() }
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn choi(&self) -> &HermitianMatrix {
        &self.choi
    }

    pub fn is_state(&self) -> bool {
        self.dim_in == 1
    }

    /// Max-entry deviation of `tr_out J` from `I/dim_in`.
    pub fn trace_preservation_error(&self) -> Result<f64> {
        let red = self.choi.partial_trace(&[self.dim_in, self.dim_out], &[0])?;
        Ok(red.max_abs_diff(&HermitianMatrix::identity(self.dim_in).scale(1.0 / self.dim_in as f64)))
    }

    /// Output state when the input is a state (`dim_in == 1`).
    pub fn as_state(&self) -> Result<DensityMatrix> {
        if !self.is_state() {
            return Err(dim_err("channel has a nontrivial input"));
        }
        DensityMatrix::new(self.choi.clone())
    }

    /// `t·self + (1-t)·other`.
    pub fn mix(&self, other: &ChoiChannel, t: f64) -> Result<ChoiChannel> {
        if self.dim_in != other.dim_in || self.dim_out != other.dim_out {
            return Err(dim_err("mixing channels of different dimensions"));
        }
        Ok(Self { choi: &self.choi.scale(t) + &other.choi.scale(1.0 - t), ..*self })
    }

    /// Kraus operators (`dim_out x dim_in`) from the spectral decomposition.
    pub fn kraus(&self) -> Result<Vec<ComplexMatrix>> {
        let e = self.choi.eig()?;
        let (din, dout) = (self.dim_in, self.dim_out);
        let mut out = Vec::new();
        for k in 0..e.values.len() {
            let lam = e.values[k];
            if lam <= 1e-14 {
                continue;
            }
            let s = (din as f64 * lam).sqrt();
            out.push(ComplexMatrix::from_fn(dout, din, |a, i| e.vectors[(i * dout + a, k)] * s));
        }
        Ok(out)
    }

    /// Tensor product channel on `(in_a ⊗ in_b) → (out_a ⊗ out_b)`.
    pub fn tensor(&self, other: &ChoiChannel) -> ChoiChannel {
        let dims = [self.dim_in, self.dim_out, other.dim_in, other.dim_out];
        let m = permute_factors(&kron(self.choi.as_matrix(), other.choi.as_matrix()), &dims, &[0, 2, 1, 3])
            .expect("factor dimensions consistent by construction");
        ChoiChannel {
            dim_in: self.dim_in * other.dim_in,
            dim_out: self.dim_out * other.dim_out,
            choi: HermitianMatrix::from_hermitian_part(&m),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelJson {
    dim_in: usize,
    dim_out: usize,
    choi: HermitianMatrix,
}

impl Serialize for ChoiChannel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ChannelJson { dim_in: self.dim_in, dim_out: self.dim_out, choi: self.choi.clone() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ChoiChannel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = ChannelJson::deserialize(d)?;
        ChoiChannel::new(j.dim_in, j.dim_out, j.choi).map_err(serde::de::Error::custom)
    }
}

/// Builds the normalised Choi matrix of `ρ ↦ Σ K ρ K†`.
pub fn channel_from_kraus(kraus: &[ComplexMatrix]) -> Result<ChoiChannel> {
    let first = kraus.first().ok_or_else(|| invalid("empty Kraus set"))?;
    let (dout, din) = first.shape();
    let mut completeness = ComplexMatrix::zeros(din, din);
    for (n, k) in kraus.iter().enumerate() {
        if k.shape() != (dout, din) {
            return Err(dim_err(format!("Kraus operator {n} has shape {:?}", k.shape())));
        }
        completeness += k.adjoint() * k;
    }
    let dev = max_abs_diff(&completeness, &ComplexMatrix::identity(din, din));
    if !(dev <= COMPLETENESS_TOL) {
        return Err(invalid(format!("Kraus operators are not trace preserving (deviation {dev:.3e})")));
    }
    let d = din * dout;
    let mut j = ComplexMatrix::zeros(d, d);
    for k in kraus {
        let v = DVector::from_fn(d, |r, _| k[(r % dout, r / dout)]);
        j += &v * v.adjoint();
    }
    j /= c64(din as f64, 0.0);
    Ok(ChoiChannel { dim_in: din, dim_out: dout, choi: HermitianMatrix::from_hermitian_part(&j) })
}

pub fn identity_channel(d: usize) -> ChoiChannel {
    channel_from_kraus(&[ComplexMatrix::identity(d, d)]).expect("identity is trace preserving")
}

/// `ρ ↦ tr(ρ) I/dim_out`.
pub fn fully_depolarizing(dim_in: usize, dim_out: usize) -> ChoiChannel {
    let d = dim_in * dim_out;
    ChoiChannel { dim_in, dim_out, choi: HermitianMatrix::identity(d).scale(1.0 / d as f64) }
}

/// `ρ ↦ η ρ + (1-η) tr(ρ) I/d`.
pub fn depolarizing(d: usize, eta: f64) -> Result<ChoiChannel> {
    let lower = -1.0 / (d as f64 * d as f64 - 1.0);
    if !(lower - 1e-12..=1.0 + 1e-12).contains(&eta) {
        return Err(invalid(format!("depolarizing parameter {eta} outside the CP range")));
    }
    let id = identity_channel(d);
    let full = fully_depolarizing(d, d);
    Ok(ChoiChannel { dim_in: d, dim_out: d, choi: &id.choi.scale(eta) + &full.choi.scale(1.0 - eta) })
}

/// Applies the channel to an arbitrary operator: `Λ(M) = n tr_in[(Mᵀ ⊗ I) J]`.
pub fn apply_operator(ch: &ChoiChannel, m: &ComplexMatrix) -> Result<ComplexMatrix> {
    let (din, dout) = (ch.dim_in, ch.dim_out);
    if m.nrows() != din || m.ncols() != din {
        return Err(dim_err(format!("operator is {}x{}, channel input is {din}", m.nrows(), m.ncols())));
    }
    let j = ch.choi.as_matrix();
    let mut out = ComplexMatrix::zeros(dout, dout);
    for i in 0..din {
        for k in 0..din {
            let mki = m[(k, i)];
            if mki == C64::default() {
                continue;
            }
            for b in 0..dout {
                for a in 0..dout {
                    out[(a, b)] += mki * j[(k * dout + a, i * dout + b)];
                }
            }
        }
    }
    Ok(out * c64(din as f64, 0.0))
}

/// `Λ(ρ)`, re-Hermitised and cleaned of eigenvalue noise.
pub fn apply(ch: &ChoiChannel, rho: &DensityMatrix) -> Result<DensityMatrix> {
    let out = HermitianMatrix::from_hermitian_part(&apply_operator(ch, rho.matrix().as_matrix())?);
    let out = out.clip_negative(OUTPUT_CLIP)?;
    let tr = out.trace();
    DensityMatrix::new(out.scale(1.0 / tr))
}

/// Choi matrix of `after ∘ before`.
pub fn compose(after: &ChoiChannel, before: &ChoiChannel) -> Result<ChoiChannel> {
    if before.dim_out != after.dim_in {
        return Err(dim_err(format!(
            "cannot compose: inner output {} vs outer input {}",
            before.dim_out, after.dim_in
        )));
    }
    let (din, dout) = (before.dim_in, after.dim_out);
    let dmid = before.dim_out;
    let jb = before.choi.as_matrix();
    let mut j = ComplexMatrix::zeros(din * dout, din * dout);
    for i in 0..din {
        for k in 0..din {
            // before(|i⟩⟨k|) = din · block (i,k) of J_before
            let mid = ComplexMatrix::from_fn(dmid, dmid, |a, b| jb[(i * dmid + a, k * dmid + b)] * c64(din as f64, 0.0));
            let o = apply_operator(after, &mid)?;
            for a in 0..dout {
                for b in 0..dout {
                    j[(i * dout + a, k * dout + b)] = o[(a, b)] / c64(din as f64, 0.0);
                }
            }
        }
    }
    Ok(ChoiChannel { dim_in: din, dim_out: dout, choi: HermitianMatrix::from_hermitian_part(&j) })
}

/// Heisenberg-picture dual: `tr[Λ*(B) ρ] = tr[B Λ(ρ)]`.
pub fn heisenberg_apply(ch: &ChoiChannel, effect: &HermitianMatrix) -> Result<HermitianMatrix> {
    let (din, dout) = (ch.dim_in, ch.dim_out);
    if effect.dim() != dout {
        return Err(dim_err(format!("effect has dimension {}, channel output is {dout}", effect.dim())));
    }
    let j = ch.choi.as_matrix();
    let b = effect.as_matrix();
    let mut out = ComplexMatrix::zeros(din, din);
    for i in 0..din {
        for k in 0..din {
            let mut s = C64::default();
            for a in 0..dout {
                for bb in 0..dout {
                    s += b[(bb, a)] * j[(k * dout + a, i * dout + bb)];
                }
            }
            out[(i, k)] = s * c64(din as f64, 0.0);
        }
    }
    Ok(HermitianMatrix::from_hermitian_part(&out))
}

/// Continuous-variable states cut off in the Fock basis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CvState {
    /// Coherent state `|α⟩` with complex amplitude `(re, im)`.
    Coherent { re: f64, im: f64 },
    /// Two-mode squeezed vacuum `Σ λ^k |kk⟩`.
    TwoModeSqueezed { lambda: f64 },
}

/// Truncated and renormalised CV state. Coherent states live on `cutoff`
/// levels, two-mode squeezed states on `cutoff x cutoff`.
pub fn truncated_cv_state(kind: CvState, cutoff: usize) -> Result<DensityMatrix> {
    if cutoff < 2 {
        return Err(invalid("cutoff must be at least 2"));
    }
    match kind {
        CvState::Coherent { re, im } => {
            if !re.is_finite() || !im.is_finite() {
                return Err(invalid("coherent amplitude must be finite"));
            }
            let alpha = c64(re, im);
            let mut amps = Vec::with_capacity(cutoff);
            let mut c = c64(1.0, 0.0);
            for k in 0..cutoff {
                if k > 0 {
                    c = c * alpha / c64((k as f64).sqrt(), 0.0);
                }
                amps.push(c);
            }
            DensityMatrix::pure(&DVector::from_vec(amps))
        }
        CvState::TwoModeSqueezed { lambda } => {
            if !(lambda.abs() < 1.0) {
                return Err(invalid(format!("squeezing parameter {lambda} must satisfy |λ| < 1")));
            }
            let mut v = DVector::from_element(cutoff * cutoff, C64::default());
            for k in 0..cutoff {
                v[k * cutoff + k] = c64(lambda.powi(k as i32), 0.0);
            }
            DensityMatrix::pure(&v)
        }
    }
}

/// Random mixed state `G G† / tr` with `G` Ginibre of shape `d x rank`.
pub fn random_density_matrix<R: Rng + ?Sized>(d: usize, rank: usize, rng: &mut R) -> DensityMatrix {
    let g = random_ginibre(d, rank.max(1), rng);
    let m = HermitianMatrix::from_hermitian_part(&(&g * g.adjoint()));
    DensityMatrix::from_unnormalized(&m).expect("Ginibre product is PSD with positive trace")
}

pub fn random_pure_state<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DensityMatrix {
    random_density_matrix(d, 1, rng)
}

/// Random channel with `n_kraus` Kraus operators (Stinespring isometry from a
/// Ginibre matrix), raised to `⌈dim_in / dim_out⌉` when fewer cannot form an isometry.
pub fn random_channel<R: Rng + ?Sized>(dim_in: usize, dim_out: usize, n_kraus: usize, rng: &mut R) -> ChoiChannel {
    let n = n_kraus.max(dim_in.div_ceil(dim_out)).max(1);
    let g = random_ginibre(dim_out * n, dim_in, rng);
    let s = HermitianMatrix::from_hermitian_part(&(g.adjoint() * &g));
    let inv_sqrt = s.eig().expect("Gram matrix is Hermitian").map_spectrum(|v| 1.0 / v.sqrt());
    let v = g * inv_sqrt.as_matrix();
    let kraus: Vec<ComplexMatrix> = (0..n).map(|k| v.rows(k * dim_out, dim_out).into_owned()).collect();
    channel_from_kraus(&kraus).expect("isometry blocks form a Kraus set")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_channel_is_maximally_entangled() {
        let id = identity_channel(3);
        assert!((id.choi().trace() - 1.0).abs() < 1e-14);
        let e = id.choi().eig().unwrap();
        assert!((e.values[8] - 1.0).abs() < 1e-12);
        assert!(e.values[7].abs() < 1e-12);
    }

    #[test]
    fn depolarizing_extremes() {
        let d0 = depolarizing(2, 0.0).unwrap();
        assert!(d0.choi().max_abs_diff(&HermitianMatrix::identity(4).scale(0.25)) < 1e-15);
        let out = apply(&depolarizing(2, 0.5).unwrap(), &DensityMatrix::basis(2, 0).unwrap()).unwrap();
        assert!(out.matrix().max_abs_diff(&HermitianMatrix::from_diagonal(&[0.75, 0.25])) < 1e-12);
    }

    #[test]
    fn non_trace_preserving_kraus_rejected() {
        let k = ComplexMatrix::identity(2, 2) * c64(0.5, 0.0);
        assert!(channel_from_kraus(&[k]).is_err());
    }

    #[test]
    fn kraus_and_choi_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let ch = random_channel(2, 2, 2, &mut rng);
        let kraus = ch.kraus().unwrap();
        let rebuilt = channel_from_kraus(&kraus).unwrap();
        assert!(rebuilt.choi().max_abs_diff(ch.choi()) < 1e-12);
        for _ in 0..20 {
            let rho = random_density_matrix(2, 2, &mut rng);
            let via_choi = apply(&ch, &rho).unwrap();
            let mut via_kraus = ComplexMatrix::zeros(2, 2);
            for k in &kraus {
                via_kraus += k * rho.matrix().as_matrix() * k.adjoint();
            }
            assert!(max_abs_diff(via_choi.matrix().as_matrix(), &via_kraus) < 1e-10);
        }
    }

    #[test]
    fn compose_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ch = random_channel(2, 3, 2, &mut rng);
        let c = compose(&identity_channel(3), &ch).unwrap();
        assert!(c.choi().max_abs_diff(ch.choi()) < 1e-12);
        let c = compose(&fully_depolarizing(3, 2), &ch).unwrap();
        assert!(c.choi().max_abs_diff(fully_depolarizing(2, 2).choi()) < 1e-12);
        assert!(compose(&ch, &ch).is_err());
    }

    #[test]
    fn heisenberg_unital_and_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let ch = random_channel(3, 2, 3, &mut rng);
        let u = heisenberg_apply(&ch, &HermitianMatrix::identity(2)).unwrap();
        assert!(u.max_abs_diff(&HermitianMatrix::identity(3)) < 1e-12);
        let b = crate::linalg::random_hermitian(3, &mut rng);
        assert!(heisenberg_apply(&identity_channel(3), &b).unwrap().max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn cv_states() {
        let vac = truncated_cv_state(CvState::Coherent { re: 0.0, im: 0.0 }, 5).unwrap();
        assert!(vac.matrix().max_abs_diff(DensityMatrix::basis(5, 0).unwrap().matrix()) < 1e-15);
        let t0 = truncated_cv_state(CvState::TwoModeSqueezed { lambda: 0.0 }, 2).unwrap();
        assert!(t0.matrix().max_abs_diff(DensityMatrix::basis(4, 0).unwrap().matrix()) < 1e-15);
        // Schmidt coefficients (1, 0.5)/sqrt(1.25): populations 0.8 and 0.2
        let t = truncated_cv_state(CvState::TwoModeSqueezed { lambda: 0.5 }, 2).unwrap();
        let m = t.matrix().as_matrix();
        assert!((m[(0, 0)].re - 0.8).abs() < 1e-14);
        assert!((m[(3, 3)].re - 0.2).abs() < 1e-14);
        assert!((m[(0, 3)].re - 0.4).abs() < 1e-14);
        assert!(truncated_cv_state(CvState::TwoModeSqueezed { lambda: 1.0 }, 3).is_err());
        assert!(truncated_cv_state(CvState::Coherent { re: 1.0, im: 0.0 }, 1).is_err());
    }

    #[test]
    fn json_roundtrip_state_and_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rho = random_density_matrix(3, 3, &mut rng);
        let s = serde_json::to_string(&rho).unwrap();
        let back: DensityMatrix = serde_json::from_str(&s).unwrap();
        assert!(back.matrix().max_abs_diff(rho.matrix()) < 1e-12);
        let ch = random_channel(2, 2, 2, &mut rng);
        let back: ChoiChannel = serde_json::from_str(&serde_json::to_string(&ch).unwrap()).unwrap();
        assert!(back.choi().max_abs_diff(ch.choi()) < 1e-12);
        let bad = r#"{"dim":2,"rho":{"dim":2,"re":[[1,0],[0,1]]}}"#;
        assert!(serde_json::from_str::<DensityMatrix>(bad).is_err());
    }
}
