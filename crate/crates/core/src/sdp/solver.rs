//! Infeasible-start primal-dual interior-point method.
//!
//! Nesterov-Todd scaling with a Mehrotra predictor-corrector step. The
//! Schur complement `M_ik = tr(A_i W A_k W)` is assembled from the sparse
//! constraint matrices and factored by dense Cholesky.

use nalgebra::{DMatrix, DVector};

use super::problem::{Sense, SdpProblem, SparseHermitian};
use super::{IterationRecord, SdpSolution, SolveStatus, SolverOptions};
use crate::error::{Error, Result};
use crate::linalg::{c64, ComplexMatrix, HermitianMatrix, C64};

/// Certificate ratio `‖Aᵀy + Z‖ / bᵀy` below which the primal is declared infeasible.
const INFEAS_RATIO: f64 = 1e-8;
const STALL_STEP: f64 = 1e-9;

struct Data {
    dims: Vec<usize>,
    c: Vec<ComplexMatrix>,
    b: DVector<f64>,
    /// Per block: (solver row, A_ij).
    a: Vec<Vec<(usize, SparseHermitian)>>,
    m: usize,
}

impl Data {
    fn new(p: &SdpProblem) -> Self {
        let sign = match p.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let dims: Vec<usize> = p.blocks.iter().map(|b| b.dim).collect();
        let c = p
            .objective
            .iter()
            .zip(&dims)
            .map(|(s, &d)| s.to_dense(d) * c64(sign, 0.0))
            .collect();
        let m = p.kept.len();
        let mut a: Vec<Vec<(usize, SparseHermitian)>> = vec![Vec::new(); dims.len()];
        let mut b = DVector::zeros(m);
        for (k, &ri) in p.kept.iter().enumerate() {
            let row = &p.rows[ri];
            b[k] = row.rhs;
            for (blk, s) in &row.terms {
                a[*blk].push((k, s.clone()));
            }
        }
        Self { dims, c, b, a, m }
    }

    fn a_op(&self, x: &[ComplexMatrix]) -> DVector<f64> {
        let mut out = DVector::zeros(self.m);
        for (j, rows) in self.a.iter().enumerate() {
            for (i, s) in rows {
                out[*i] += s.inner(&x[j]);
            }
        }
        out
    }

    fn a_adj(&self, y: &DVector<f64>) -> Vec<ComplexMatrix> {
        self.dims
            .iter()
            .enumerate()
            .map(|(j, &d)| {
                let mut out = ComplexMatrix::zeros(d, d);
                for (i, s) in &self.a[j] {
                    s.add_to(&mut out, y[*i]);
                }
                out
            })
            .collect()
    }
}

fn inner(a: &[ComplexMatrix], b: &[ComplexMatrix]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y.iter()).map(|(u, v)| (u * v.conj()).re).sum::<f64>())
        .sum()
}

fn fro(a: &[ComplexMatrix]) -> f64 {
    inner(a, a).sqrt()
}

fn herm(m: &ComplexMatrix) -> ComplexMatrix {
    (m + m.adjoint()) * c64(0.5, 0.0)
}

fn eig(m: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    let e = HermitianMatrix::from_hermitian_part(m).eig()?;
    Ok((e.values.iter().copied().collect(), e.vectors))
}

fn scale_cols(v: &ComplexMatrix, s: &[f64]) -> ComplexMatrix {
    let mut out = v.clone();
    for (j, &sj) in s.iter().enumerate() {
        out.column_mut(j).scale_mut(sj);
    }
    out
}

fn scale_rows(v: &ComplexMatrix, s: &[f64]) -> ComplexMatrix {
    let mut out = v.clone();
    for (i, &si) in s.iter().enumerate() {
        out.row_mut(i).scale_mut(si);
    }
    out
}

/// NT scaling of one block: `W = G G†`, `G⁻¹ X G⁻† = G† Z G = diag(d)`.
struct Scaling {
    g: ComplexMatrix,
    g_inv: ComplexMatrix,
    d: Vec<f64>,
    w: ComplexMatrix,
}

impl Scaling {
    fn new(x: &ComplexMatrix, z: &ComplexMatrix) -> Result<Self> {
        let (lx, vx) = eig(x)?;
        let top = lx.iter().cloned().fold(0.0, f64::max).max(1e-300);
        let lx: Vec<f64> = lx.iter().map(|&v| v.max(top * 1e-30)).collect();
        let sq: Vec<f64> = lx.iter().map(|v| v.sqrt()).collect();
        let isq: Vec<f64> = sq.iter().map(|v| 1.0 / v).collect();
        let s = scale_cols(&vx, &sq) * vx.adjoint();
        let s_inv = scale_cols(&vx, &isq) * vx.adjoint();
        let k = herm(&(&s * z * &s));
        let (kappa, q) = eig(&k)?;
        let ktop = kappa.iter().cloned().fold(0.0, f64::max).max(1e-300);
        let kappa: Vec<f64> = kappa.iter().map(|&v| v.max(ktop * 1e-30)).collect();
        let qm14: Vec<f64> = kappa.iter().map(|v| v.powf(-0.25)).collect();
        let qp14: Vec<f64> = kappa.iter().map(|v| v.powf(0.25)).collect();
        let g = &s * scale_cols(&q, &qm14);
        let g_inv = scale_rows(&q.adjoint(), &qp14) * &s_inv;
        let d: Vec<f64> = kappa.iter().map(|v| v.sqrt()).collect();
        let w = herm(&(&g * g.adjoint()));
        Ok(Self { g, g_inv, d, w })
    }

    /// Largest step keeping `X + αΔX ⪰ 0` (`primal`) or `Z + αΔZ ⪰ 0`.
    fn max_step(&self, delta: &ComplexMatrix, primal: bool) -> Result<f64> {
        let t = if primal { &self.g_inv * delta * self.g_inv.adjoint() } else { self.g.adjoint() * delta * &self.g };
        let isd: Vec<f64> = self.d.iter().map(|v| 1.0 / v.sqrt()).collect();
        let t = scale_rows(&scale_cols(&t, &isd), &isd);
        let (vals, _) = eig(&t)?;
        let lo = vals.first().copied().unwrap_or(0.0);
        Ok(if lo < 0.0 { -1.0 / lo } else { f64::INFINITY })
    }
}

/// `W A W` for sparse Hermitian `A`.
fn sandwich(w: &ComplexMatrix, a: &SparseHermitian) -> ComplexMatrix {
    let d = w.nrows();
    if a.nnz() < 2 * d {
        let mut out = ComplexMatrix::zeros(d, d);
        for &(r, c, v) in &a.entries {
            let wr = w.column(r);
            let wc = w.row(c);
            for q in 0..d {
                let f = wc[q] * v;
                if f == C64::new(0.0, 0.0) {
                    continue;
                }
                for p in 0..d {
                    out[(p, q)] += wr[p] * f;
                }
            }
        }
        out
    } else {
        w * a.to_dense(d) * w
    }
}

struct Direction {
    dx: Vec<ComplexMatrix>,
    dy: DVector<f64>,
    dz: Vec<ComplexMatrix>,
}

#[derive(Clone)]
struct Iterate {
    x: Vec<ComplexMatrix>,
    y: DVector<f64>,
    z: Vec<ComplexMatrix>,
}

fn factor_schur(data: &Data, sc: &[Scaling]) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let m = data.m;
    let mut mat = DMatrix::<f64>::zeros(m, m);
    for (j, rows) in data.a.iter().enumerate() {
        for (pos_k, (k, ak)) in rows.iter().enumerate() {
            let wakw = sandwich(&sc[j].w, ak);
            for (i, ai) in rows[..=pos_k].iter() {
                let v = ai.inner(&wakw);
                mat[(*i, *k)] += v;
                if i != k {
                    mat[(*k, *i)] += v;
                }
            }
        }
    }
    let scale = (0..m).map(|i| mat[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut shift = 0.0;
    for _ in 0..8 {
        let mut trial = mat.clone();
        for i in 0..m {
            trial[(i, i)] += shift;
        }
        if let Some(ch) = nalgebra::Cholesky::new(trial) {
            return Ok(ch);
        }
        shift = if shift == 0.0 { 1e-14 * scale } else { shift * 100.0 };
    }
    Err(Error::Numerical("Schur complement is not positive definite".into()))
}

#[allow(clippy::too_many_arguments)]
fn direction(
    data: &Data,
    sc: &[Scaling],
    chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>,
    rprime: &[ComplexMatrix],
    rp: &DVector<f64>,
    rd: &[ComplexMatrix],
    wrw: &[ComplexMatrix],
) -> Direction {
    let h: Vec<ComplexMatrix> = sc.iter().zip(rprime).map(|(s, r)| herm(&(&s.g * r * s.g.adjoint()))).collect();
    let rhs = rp - data.a_op(&h) + data.a_op(wrw);
    let dy = chol.solve(&rhs);
    let aty = data.a_adj(&dy);
    let dz: Vec<ComplexMatrix> = rd.iter().zip(&aty).map(|(r, a)| herm(&(r - a))).collect();
    let dx: Vec<ComplexMatrix> =
        h.iter().zip(&dz).zip(sc).map(|((hj, dzj), s)| herm(&(hj - &s.w * dzj * &s.w))).collect();
    Direction { dx, dy, dz }
}

/// `R'_pq = 2 R_pq / (d_p + d_q)`.
fn scaled_rhs(r: &ComplexMatrix, d: &[f64]) -> ComplexMatrix {
    ComplexMatrix::from_fn(r.nrows(), r.ncols(), |p, q| r[(p, q)] * (2.0 / (d[p] + d[q])))
}

fn max_steps(sc: &[Scaling], dir: &Direction) -> Result<(f64, f64)> {
    let mut ap = f64::INFINITY;
    let mut ad = f64::INFINITY;
    for (j, s) in sc.iter().enumerate() {
        ap = ap.min(s.max_step(&dir.dx[j], true)?);
        ad = ad.min(s.max_step(&dir.dz[j], false)?);
    }
    Ok((ap, ad))
}

fn initial_point(data: &Data) -> Iterate {
    let mut x = Vec::new();
    let mut z = Vec::new();
    for (j, &d) in data.dims.iter().enumerate() {
        let df = d as f64;
        let mut xi: f64 = 10.0f64.max(df.sqrt());
        let mut eta: f64 = 10.0f64.max(df.sqrt());
        let cn = data.c[j].iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        eta = eta.max(cn);
        for (i, s) in &data.a[j] {
            let an = s.frobenius_sq().sqrt();
            xi = xi.max(df * (1.0 + data.b[*i].abs()) / (1.0 + an));
            eta = eta.max(an);
        }
        x.push(ComplexMatrix::identity(d, d) * c64(xi, 0.0));
        z.push(ComplexMatrix::identity(d, d) * c64(eta, 0.0));
    }
    Iterate { x, y: DVector::zeros(data.m), z }
}

pub(super) fn solve(problem: &SdpProblem, opts: &SolverOptions) -> Result<SdpSolution> {
    let data = Data::new(problem);
    let sign = match problem.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let n_total: f64 = data.dims.iter().map(|&d| d as f64).sum();
    let bnorm = data.b.norm();
    let cnorm = fro(&data.c);
    let mut it = initial_point(&data);
    let mut history = Vec::new();
    let mut status = SolveStatus::MaxIterations;
    let mut certificate: Option<Vec<f64>> = None;
    let mut iterations = 0;
    let mut stalled = 0;
    let mut last = (0.0, 0.0, 0.0, 0.0, 0.0);
    // best iterate by the largest relative residual, returned when the loop
    // ends without convergence
    let mut best: Option<(f64, Iterate, (f64, f64, f64, f64, f64))> = None;

    for iter in 0..=opts.max_iterations {
        iterations = iter;
        let rp = &data.b - data.a_op(&it.x);
        let aty = data.a_adj(&it.y);
        let rd: Vec<ComplexMatrix> =
            data.c.iter().zip(&aty).zip(&it.z).map(|((c, a), z)| herm(&(c - a - z))).collect();
        let pobj = inner(&data.c, &it.x);
        let dobj = data.b.dot(&it.y);
        let xz = inner(&it.x, &it.z);
        let mu = xz / n_total;
        let pinf = rp.norm() / (1.0 + bnorm);
        let dinf = fro(&rd) / (1.0 + cnorm);
        let scale = 1.0 + pobj.abs().max(dobj.abs());
        let gap = pobj - dobj;
        last = (pobj, dobj, pinf, dinf, xz);
        let merit = pinf.max(dinf).max(gap.abs() / scale).max(xz / scale);
        if best.as_ref().is_none_or(|(m, _, _)| merit < *m) {
            best = Some((merit, it.clone(), last));
        }

        if opts.record_history {
            let correction = inner(&rd, &it.x) - it.y.dot(&rp);
            history.push(IterationRecord {
                iteration: iter,
                primal_objective: sign * pobj + problem.constant,
                dual_objective: sign * dobj + problem.constant,
                primal_infeasibility: pinf,
                dual_infeasibility: dinf,
                complementarity: xz,
                infeasibility_correction: correction,
            });
        }

        if pinf <= opts.feas_tol && dinf <= opts.feas_tol && gap.abs() <= opts.gap_tol * scale && xz <= opts.gap_tol * scale
        {
            status = SolveStatus::Optimal;
            break;
        }
        // improving rays
        let ray_dual = fro(&aty.iter().zip(&it.z).map(|(a, z)| a + z).collect::<Vec<_>>());
        if dobj > 0.0 && ray_dual <= INFEAS_RATIO * dobj {
            status = SolveStatus::Infeasible;
            certificate = Some(it.y.iter().map(|v| v / dobj).collect());
            break;
        }
        let ax = data.a_op(&it.x);
        if pobj < 0.0 && ax.norm() <= INFEAS_RATIO * (-pobj) {
            status = SolveStatus::Unbounded;
            break;
        }
        if iter == opts.max_iterations || stalled >= 3 {
            break;
        }

        let sc: Vec<Scaling> = it.x.iter().zip(&it.z).map(|(x, z)| Scaling::new(x, z)).collect::<Result<_>>()?;
        let chol = match factor_schur(&data, &sc) {
            Ok(c) => c,
            Err(_) => break,
        };
        let wrw: Vec<ComplexMatrix> = sc.iter().zip(&rd).map(|(s, r)| &s.w * r * &s.w).collect();

        // predictor
        let pred_rhs: Vec<ComplexMatrix> = sc
            .iter()
            .map(|s| ComplexMatrix::from_diagonal(&DVector::from_iterator(s.d.len(), s.d.iter().map(|v| c64(-v, 0.0)))))
            .collect();
        let pred = direction(&data, &sc, &chol, &pred_rhs, &rp, &rd, &wrw);
        let (ap_max, ad_max) = max_steps(&sc, &pred)?;
        let ap_a = ap_max.min(1.0);
        let ad_a = ad_max.min(1.0);
        let x_aff: Vec<ComplexMatrix> = it.x.iter().zip(&pred.dx).map(|(x, d)| x + d * c64(ap_a, 0.0)).collect();
        let z_aff: Vec<ComplexMatrix> = it.z.iter().zip(&pred.dz).map(|(z, d)| z + d * c64(ad_a, 0.0)).collect();
        let mu_aff = inner(&x_aff, &z_aff) / n_total;
        let expon = 1.0f64.max(3.0 * ap_a.min(ad_a).powi(2));
        let sigma = if mu > 0.0 { (mu_aff.max(0.0) / mu).powf(expon).min(1.0) } else { 0.0 };

        // corrector
        let corr_rhs: Vec<ComplexMatrix> = sc
            .iter()
            .enumerate()
            .map(|(j, s)| {
                let dxt = &s.g_inv * &pred.dx[j] * s.g_inv.adjoint();
                let dzt = s.g.adjoint() * &pred.dz[j] * &s.g;
                let mut r = herm(&(&dxt * &dzt)) * c64(-1.0, 0.0);
                for p in 0..s.d.len() {
                    r[(p, p)] += c64(sigma * mu - s.d[p] * s.d[p], 0.0);
                }
                scaled_rhs(&r, &s.d)
            })
            .collect();
        let dir = direction(&data, &sc, &chol, &corr_rhs, &rp, &rd, &wrw);
        let (ap_max, ad_max) = max_steps(&sc, &dir)?;
        let gamma = 0.9 + 0.09 * ap_a.min(ad_a);
        let ap = (gamma * ap_max).min(1.0);
        let ad = (gamma * ad_max).min(1.0);
        if ap < STALL_STEP && ad < STALL_STEP {
            stalled += 1;
        } else {
            stalled = 0;
        }
        for j in 0..it.x.len() {
            it.x[j] = herm(&(&it.x[j] + &dir.dx[j] * c64(ap, 0.0)));
            it.z[j] = herm(&(&it.z[j] + &dir.dz[j] * c64(ad, 0.0)));
        }
        it.y += &dir.dy * ad;
    }

    if status == SolveStatus::MaxIterations {
        if let Some((_, b, vals)) = best {
            it = b;
            last = vals;
        }
    }
    let (pobj, dobj, pinf, dinf, xz) = last;
    let mut row_multipliers = vec![0.0; problem.rows.len()];
    for (k, &ri) in problem.kept.iter().enumerate() {
        row_multipliers[ri] = it.y[k];
    }
    let certificate = certificate.map(|c| {
        let mut full = vec![0.0; problem.rows.len()];
        for (k, &ri) in problem.kept.iter().enumerate() {
            full[ri] = c[k];
        }
        full
    });
    Ok(SdpSolution {
        status,
        primal_value: sign * pobj + problem.constant,
        dual_value: sign * dobj + problem.constant,
        primal_blocks: it.x.iter().map(HermitianMatrix::from_hermitian_part).collect(),
        dual_slacks: it.z.iter().map(HermitianMatrix::from_hermitian_part).collect(),
        row_multipliers,
        iterations,
        primal_infeasibility: pinf,
        dual_infeasibility: dinf,
        complementarity: xz,
        infeasibility_certificate: certificate,
        history,
    })
}
