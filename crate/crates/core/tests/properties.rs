//! Randomised invariants of the public API.

use nalgebra::DVector;
use proptest::prelude::*;
use qres::approx::{level_free_set, level_object, truncate_object, TruncationPlan, TruncationScheme, Side};
use qres::freesets::{FreeSetSpec, GroupRepresentation, NoiseSet};
use qres::games::{payoff, random_nonnegative_game, tuple_payoff, witness_to_game, witness_to_tuple_game};
use qres::linalg::{c64, kron, partial_trace, partial_transpose, random_ginibre, random_hermitian, trace_norm};
use qres::measures::{robustness, robustness_with, weight, weight_with};
use qres::quantum::{apply, channel_from_kraus, compose, random_channel, random_density_matrix, random_pure_state};
use qres::sdp::{solve, SdpBuilder, Sense, SolverOptions};
use qres::{ChoiChannel, ComplexMatrix, DensityMatrix, HermitianMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn phase_group(d: usize) -> GroupRepresentation {
    let u = ComplexMatrix::from_diagonal(&DVector::from_fn(d, |j, _| {
        let t = std::f64::consts::FRAC_PI_2 * j as f64;
        c64(t.cos(), t.sin())
    }));
    GroupRepresentation::new(d, vec![u]).unwrap()
}

fn all_specs() -> Vec<FreeSetSpec> {
    vec![
        FreeSetSpec::Incoherent { dim: 3 },
        FreeSetSpec::PptSeparable { dim_a: 2, dim_b: 2 },
        FreeSetSpec::GroupSymmetric { representation: phase_group(4) },
        FreeSetSpec::EntanglementBreakingPpt { dim_in: 2, dim_out: 2 },
        FreeSetSpec::CompatibleTuple { dim_in: 2, dims_out: vec![2, 2] },
        FreeSetSpec::MarginalCompatible { dim_shared: 2, dims_env: vec![2, 2] },
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn eig_reconstructs(seed in any::<u64>(), d in 1usize..9) {
        let m = random_hermitian(d, &mut rng(seed));
        let e = m.eig().unwrap();
        let diag = ComplexMatrix::from_diagonal(&e.values.map(|v| c64(v, 0.0)));
        let back = &e.vectors * diag * e.vectors.adjoint();
        prop_assert!(qres::linalg::max_abs_diff(&back, m.as_matrix()) < 1e-10);
    }

    #[test]
    fn partial_trace_of_products(seed in any::<u64>(), da in 1usize..5, db in 1usize..5) {
        let mut r = rng(seed);
        let a = random_hermitian(da, &mut r);
        let b = random_hermitian(db, &mut r);
        let ab = a.kron(&b);
        let ta = partial_trace(&ab, &[da, db], &[0]).unwrap();
        let tb = partial_trace(&ab, &[da, db], &[1]).unwrap();
        prop_assert!(ta.max_abs_diff(&a.scale(b.trace())) < 1e-10);
        prop_assert!(tb.max_abs_diff(&b.scale(a.trace())) < 1e-10);
    }

    #[test]
    fn partial_transpose_is_trace_preserving_involution(seed in any::<u64>(), da in 1usize..4, db in 1usize..4) {
        let m = random_hermitian(da * db, &mut rng(seed));
        for on in 0..2 {
            let t = partial_transpose(&m, (da, db), on).unwrap();
            prop_assert!((t.trace() - m.trace()).abs() < 1e-10);
            let back = partial_transpose(&t, (da, db), on).unwrap();
            prop_assert!(back.max_abs_diff(&m) < 1e-12);
        }
    }

    #[test]
    fn trace_norm_bounds_trace(seed in any::<u64>(), d in 1usize..7) {
        let mut r = rng(seed);
        let m = random_hermitian(d, &mut r);
        prop_assert!(trace_norm(&m).unwrap() >= m.trace().abs() - 1e-12);
        let rho = random_density_matrix(d, 1 + r.random_range(0..d), &mut r);
        prop_assert!((trace_norm(rho.matrix()).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn kraus_channels_are_valid(seed in any::<u64>(), din in 1usize..4, dout in 1usize..4, n in 1usize..4) {
        let mut r = rng(seed);
        // normalise a random stack of operators into a Kraus set
        let n = n.max(din.div_ceil(dout));
        let g = random_ginibre(n * dout, din, &mut r);
        let h = g.adjoint() * &g;
        let e = HermitianMatrix::from_hermitian_part(&h).eig().unwrap();
        let inv_sqrt = &e.vectors * ComplexMatrix::from_diagonal(&e.values.map(|v| c64(1.0 / v.sqrt(), 0.0))) * e.vectors.adjoint();
        let v = g * inv_sqrt;
        let kraus: Vec<ComplexMatrix> = (0..n).map(|k| v.rows(k * dout, dout).into_owned()).collect();
        let ch = channel_from_kraus(&kraus).unwrap();
        prop_assert!(ch.trace_preservation_error().unwrap() < 1e-10);
        prop_assert!(ch.choi().min_eigenvalue().unwrap() > -1e-10);
        prop_assert!((ch.choi().trace() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn apply_preserves_states(seed in any::<u64>(), din in 1usize..5, dout in 1usize..5) {
        let mut r = rng(seed);
        let ch = random_channel(din, dout, 1 + r.random_range(0..3), &mut r);
        let rho = random_density_matrix(din, 1 + r.random_range(0..din), &mut r);
        let out = apply(&ch, &rho).unwrap();
        prop_assert!((out.matrix().trace() - 1.0).abs() < 1e-10);
        prop_assert!(out.matrix().min_eigenvalue().unwrap() > -1e-10);
    }

    #[test]
    fn compose_is_associative(seed in any::<u64>(), d1 in 1usize..4, d2 in 1usize..4, d3 in 1usize..4, d4 in 1usize..4) {
        let mut r = rng(seed);
        let a = random_channel(d1, d2, 2, &mut r);
        let b = random_channel(d2, d3, 2, &mut r);
        let c = random_channel(d3, d4, 2, &mut r);
        let left = compose(&c, &compose(&b, &a).unwrap()).unwrap();
        let right = compose(&compose(&c, &b).unwrap(), &a).unwrap();
        prop_assert!(left.choi().max_abs_diff(right.choi()) < 1e-10);
    }

    #[test]
    fn witness_game_reconstruction(seed in any::<u64>(), din in 1usize..4, dout in 1usize..4) {
        let mut r = rng(seed);
        let y = random_hermitian(din * dout, &mut r);
        let g = witness_to_game(&y, din, dout).unwrap();
        prop_assert!(g.operator().max_abs_diff(&y) < 1e-8);
        let ch = random_channel(din, dout, 2, &mut r);
        prop_assert!((payoff(&ch, &g).unwrap() - din as f64 * y.inner(ch.choi())).abs() < 1e-10);
    }

    #[test]
    fn tuple_game_reconstruction(seed in any::<u64>()) {
        let mut r = rng(seed);
        let shapes = [(2, 2), (2, 3)];
        let ys: Vec<HermitianMatrix> = shapes.iter().map(|(a, b)| random_hermitian(a * b, &mut r)).collect();
        let g = witness_to_tuple_game(&ys, &shapes).unwrap();
        let chs: Vec<ChoiChannel> = shapes.iter().map(|(a, b)| random_channel(*a, *b, 2, &mut r)).collect();
        let expect: f64 = ys.iter().zip(&chs).map(|(y, c)| c.dim_in() as f64 * y.inner(c.choi())).sum();
        for (gc, y) in g.components.iter().zip(&ys) {
            prop_assert!(gc.operator().max_abs_diff(y) < 1e-8);
        }
        prop_assert!((tuple_payoff(&chs, &g).unwrap() - expect).abs() < 1e-10);
    }

    #[test]
    fn nonnegative_games_pay_nonnegatively(seed in any::<u64>(), din in 1usize..4, dout in 1usize..4) {
        let mut r = rng(seed);
        let g = random_nonnegative_game(din, dout, 3, 3, &mut r).unwrap();
        let ch = random_channel(din, dout, 2, &mut r);
        prop_assert!(payoff(&ch, &g).unwrap() >= -1e-12);
    }

    #[test]
    fn truncation_idempotent_nested_fixing(seed in any::<u64>(), n in 1usize..6, m in 1usize..6) {
        let mut r = rng(seed);
        let (n, m) = (n.min(m), n.max(m));
        let anchor = DensityMatrix::basis(6, 0).unwrap();
        let s = TruncationScheme::new(6, (1..=6).collect(), anchor, Side::Output).unwrap();
        let rho = random_density_matrix(6, 1 + r.random_range(0..6), &mut r);
        let t = s.apply(rho.matrix(), n).unwrap();
        prop_assert!(s.apply(&t, n).unwrap().max_abs_diff(&t) < 1e-12);
        prop_assert!(s.apply(&t, m).unwrap().max_abs_diff(&t) < 1e-12);
        prop_assert!((t.trace() - 1.0).abs() < 1e-12);
        let p_n = s.projector(n).unwrap();
        let p_m = s.projector(m).unwrap();
        prop_assert!((&p_m - &p_n).min_eigenvalue().unwrap() > -1e-12);
        // states supported in the level subspace are untouched
        let inside = HermitianMatrix::from_hermitian_part(&(p_n.as_matrix() * rho.matrix().as_matrix() * p_n.as_matrix()));
        if inside.trace() > 1e-6 {
            let inside = inside.scale(1.0 / inside.trace());
            prop_assert!(s.apply(&inside, n).unwrap().max_abs_diff(&inside) < 1e-12);
        }
        let e = random_hermitian(6, &mut r);
        prop_assert!((s.adjoint(&e, n).unwrap().inner(rho.matrix()) - e.inner(&t)).abs() < 1e-10);
        prop_assert!(s.adjoint(&HermitianMatrix::identity(6), n).unwrap().max_abs_diff(&HermitianMatrix::identity(6)) < 1e-12);
    }

    #[test]
    fn interior_points_and_mixtures(seed in any::<u64>(), t in 0.0f64..1.0) {
        let mut r = rng(seed);
        for f in all_specs() {
            let p = f.interior_free_point();
            prop_assert!(f.membership(&p).unwrap().passes());
            for c in &p {
                prop_assert!(c.choi().min_eigenvalue().unwrap() > 0.0);
            }
            let x = f.random_member(&mut r).unwrap();
            let y = f.random_member(&mut r).unwrap();
            let mix: Vec<ChoiChannel> = x.iter().zip(&y).map(|(a, b)| a.mix(b, t).unwrap()).collect();
            prop_assert!(f.membership(&mix).unwrap().passes(), "{}", f.name());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn truncated_members_stay_free(seed in any::<u64>()) {
        let mut r = rng(seed);
        let cases = [
            FreeSetSpec::PptSeparable { dim_a: 3, dim_b: 4 },
            FreeSetSpec::EntanglementBreakingPpt { dim_in: 4, dim_out: 3 },
            FreeSetSpec::CompatibleTuple { dim_in: 3, dims_out: vec![3, 2] },
            FreeSetSpec::MarginalCompatible { dim_shared: 3, dims_env: vec![3, 2] },
        ];
        for f in cases {
            let plan = TruncationPlan::for_free_set(&f, &[2, 3]).unwrap();
            let x = f.random_member(&mut r).unwrap();
            for k in 0..plan.num_levels() {
                let t = truncate_object(&x, &f, &plan, k).unwrap();
                prop_assert!(f.membership(&t).unwrap().passes(), "{} level {k}", f.name());
                let spec = level_free_set(&f, &plan, k).unwrap();
                let l = level_object(&x, &f, &plan, k).unwrap();
                prop_assert!(spec.membership(&l).unwrap().passes(), "{} compressed level {k}", f.name());
            }
        }
    }

    #[test]
    fn solver_is_deterministic(seed in any::<u64>(), d in 2usize..5) {
        let c = random_hermitian(d, &mut rng(seed));
        let mut b = SdpBuilder::new(Sense::Minimize);
        let x = b.add_block("x", d);
        b.add_objective(x, &c).unwrap();
        b.add_scalar_equality(&[(x, HermitianMatrix::identity(d))], 1.0).unwrap();
        let p = b.build().unwrap();
        let opts = SolverOptions::default();
        let s1 = solve(&p, &opts).unwrap();
        let s2 = solve(&p, &opts).unwrap();
        prop_assert_eq!(s1.primal_value.to_bits(), s2.primal_value.to_bits());
        prop_assert_eq!(s1.iterations, s2.iterations);
        prop_assert!((s1.primal_value - c.min_eigenvalue().unwrap()).abs() < 1e-7);
        for h in &s1.history {
            prop_assert!(h.dual_objective <= h.primal_objective + 1e-9 * (1.0 + h.primal_objective.abs()) + h.infeasibility_correction.abs());
        }
    }

    #[test]
    fn quantifiers_vanish_on_members(seed in any::<u64>()) {
        let mut r = rng(seed);
        for f in all_specs() {
            let x = f.random_member(&mut r).unwrap();
            let rr = robustness_with(&x, &f, NoiseSet::All, &SolverOptions::default()).unwrap();
            let w = weight_with(&x, &f, &SolverOptions::default()).unwrap();
            prop_assert!(rr.value <= 1e-7, "{} R = {}", f.name(), rr.value);
            prop_assert!(w.value <= 1e-7, "{} W = {}", f.name(), w.value);
        }
    }

    #[test]
    fn coherence_is_invariant_under_permutations_and_phases(seed in any::<u64>()) {
        let mut r = rng(seed);
        let f = FreeSetSpec::Incoherent { dim: 3 };
        let rho = random_density_matrix(3, 1 + r.random_range(0..2), &mut r);
        let mut perm: Vec<usize> = vec![0, 1, 2];
        let k = r.random_range(0..3);
        perm.rotate_left(k);
        if r.random::<bool>() {
            perm.swap(0, 1);
        }
        let u = ComplexMatrix::from_fn(3, 3, |i, j| {
            if perm[j] == i {
                let t: f64 = 2.0 * std::f64::consts::PI * (i as f64 * 0.37 + seed as f64 % 7.0 * 0.11);
                c64(t.cos(), t.sin())
            } else {
                c64(0.0, 0.0)
            }
        });
        let moved = DensityMatrix::new(rho.matrix().conjugate_by(&u).unwrap()).unwrap();
        let (a, b) = (ChoiChannel::from_state(&rho), ChoiChannel::from_state(&moved));
        prop_assert!((robustness(&a, &f, NoiseSet::All).unwrap().value - robustness(&b, &f, NoiseSet::All).unwrap().value).abs() < 1e-6);
        prop_assert!((weight(&a, &f).unwrap().value - weight(&b, &f).unwrap().value).abs() < 1e-6);
    }

    #[test]
    fn entanglement_does_not_grow_under_local_channels(seed in any::<u64>()) {
        let mut r = rng(seed);
        let f = FreeSetSpec::PptSeparable { dim_a: 2, dim_b: 2 };
        let rho = random_pure_state(4, &mut r);
        let local = random_channel(2, 2, 2, &mut r).tensor(&random_channel(2, 2, 2, &mut r));
        let out = apply(&local, &rho).unwrap();
        let (a, b) = (ChoiChannel::from_state(&rho), ChoiChannel::from_state(&out));
        prop_assert!(robustness(&b, &f, NoiseSet::All).unwrap().value <= robustness(&a, &f, NoiseSet::All).unwrap().value + 1e-6);
        prop_assert!(weight(&b, &f).unwrap().value <= weight(&a, &f).unwrap().value + 1e-6);
    }

    #[test]
    fn free_noise_robustness_dominates(seed in any::<u64>()) {
        let mut r = rng(seed);
        let f = FreeSetSpec::PptSeparable { dim_a: 2, dim_b: 2 };
        let x = ChoiChannel::from_state(&random_density_matrix(4, 2, &mut r));
        let all = robustness(&x, &f, NoiseSet::All).unwrap();
        let free = robustness(&x, &f, NoiseSet::Free).unwrap();
        prop_assert!(free.value.is_finite());
        prop_assert!(all.value <= free.value + 1e-6);
    }
}

#[test]
fn product_kron_matches_linalg_kron() {
    let mut r = rng(3);
    let a = random_pure_state(2, &mut r);
    let b = random_pure_state(3, &mut r);
    let ab = a.kron(&b);
    let direct = kron(a.matrix().as_matrix(), b.matrix().as_matrix());
    assert!(qres::linalg::max_abs_diff(ab.matrix().as_matrix(), &direct) < 1e-15);
}
