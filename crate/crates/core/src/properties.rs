//! Randomised invariants spanning several modules.

use proptest::prelude::*;

use crate::contour::{build_contour, dunford_apply, dunford_fixed, Integrand};
use crate::evolution::{build_family, EvolutionFamily, GeneratorSpec};
use crate::linalg::{
    c, eigenvalues, matrix_exp_oracle, matrix_log_oracle, operator_norm, re, resolvent, spectral_radius_upper, CMatrix,
};
use crate::logrep::{dt_log, log_representation, select_kappa, shifted_propagator, KappaShift};
use crate::scalar::ScalarFn;

fn matrix(max_dim: usize, scale: f64) -> impl Strategy<Value = CMatrix> {
    (1..=max_dim).prop_flat_map(move |n| {
        prop::collection::vec((-scale..scale, -scale..scale), n * n)
            .prop_map(move |v| CMatrix::new(n, v.into_iter().map(|(a, b)| c(a, b)).collect()).unwrap())
    })
}

fn pair(max_dim: usize) -> impl Strategy<Value = (CMatrix, CMatrix)> {
    (1..=max_dim).prop_flat_map(|n| {
        let one = prop::collection::vec((-2.0..2.0, -2.0..2.0), n * n)
            .prop_map(move |v| CMatrix::new(n, v.into_iter().map(|(a, b)| c(a, b)).collect()).unwrap());
        (one.clone(), one)
    })
}

fn fixtures() -> Vec<EvolutionFamily> {
    let rot = CMatrix::from_real_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]).unwrap();
    vec![
        build_family(GeneratorSpec::constant(CMatrix::identity(1)), 1.0).unwrap(),
        build_family(GeneratorSpec::constant(rot), std::f64::consts::PI).unwrap(),
        build_family(GeneratorSpec::separable(CMatrix::real_diag(&[1.0, 2.0]), ScalarFn::Cos), 1.0).unwrap(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn resolvent_inverts_shifted_matrix(m in matrix(8, 2.0), angle in 0.0..std::f64::consts::TAU, extra in 0.1..3.0) {
        let bound = spectral_radius_upper(&m).radius_upper;
        let lambda = c(0.0, angle).exp() * (bound + extra);
        let r = resolvent(&m, lambda).unwrap();
        let resid = (&(&CMatrix::identity(m.dim()).scale(lambda) - &m) * &r).shift(re(-1.0));
        prop_assert!(operator_norm(&resid) <= 1e-10 * operator_norm(&r).max(1.0));
    }

    #[test]
    fn exp_inverts_log(m in matrix(8, 1.0)) {
        // Push the spectrum into the right half plane, away from the cut.
        let rho = spectral_radius_upper(&m).radius_upper;
        let m = m.shift(re(rho + 0.5));
        let back = matrix_exp_oracle(&matrix_log_oracle(&m).unwrap());
        prop_assert!(operator_norm(&(&back - &m)) <= 1e-9 * operator_norm(&m));
    }

    #[test]
    fn operator_norm_is_submultiplicative((a, b) in pair(10)) {
        prop_assert!(operator_norm(&(&a * &b)) <= operator_norm(&a) * operator_norm(&b) + 1e-10);
    }

    #[test]
    fn spectral_bound_dominates_eigenvalues(m in matrix(16, 3.0)) {
        let bound = spectral_radius_upper(&m).radius_upper;
        for z in eigenvalues(&m).unwrap() {
            prop_assert!(z.norm() <= bound * (1.0 + 1e-12) + 1e-12, "{} > {}", z.norm(), bound);
        }
    }

    #[test]
    fn selected_shift_clears_bound(m in 0.5..5.0f64, beta in 0.0..3.0f64, horizon in 0.1..4.0f64, margin in 1.0001..20.0f64) {
        let k = select_kappa(m, beta, horizon, margin).unwrap();
        prop_assert!(k.kappa.norm() > k.growth_bound);
        prop_assert!(build_contour(k.kappa, k.growth_bound).unwrap().excludes_origin());
    }

    #[test]
    fn cocycle_holds_for_random_separable(m in matrix(4, 1.0), t in -1.0..1.0f64, r in -1.0..1.0f64, s in -1.0..1.0f64) {
        let fam = build_family(GeneratorSpec::separable(m, ScalarFn::Sin), 1.0).unwrap();
        let lhs = &fam.evaluate(t, r).unwrap() * &fam.evaluate(r, s).unwrap();
        prop_assert!(operator_norm(&(&lhs - &fam.evaluate(t, s).unwrap())) <= 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // Spectrum strictly inside the disk of radius `bound` about κ.
    #[test]
    fn contour_log_agrees_with_oracle(m in matrix(6, 1.0), bound in 0.5..4.0f64, margin in 1.2..10.0f64) {
        let norm = operator_norm(&m);
        let m = m.scale_re(0.9 * bound / norm.max(1e-12));
        let shift = select_kappa(1.0, 0.0, 1.0, margin).unwrap();
        let kappa = shift.kappa.scale(bound);
        let c = build_contour(kappa, bound).unwrap();
        let shifted = m.shift(kappa);
        let tol = 1e-11;
        let got = dunford_apply(Integrand::PrincipalLog, &shifted, &c, tol).unwrap().value;
        let want = matrix_log_oracle(&shifted).unwrap();
        prop_assert!(operator_norm(&(&got - &want)) <= 10.0 * tol, "{}", operator_norm(&(&got - &want)));
    }

    #[test]
    fn similarity_identity(which in 0usize..3, t in -0.9..0.9f64, s in -0.9..0.9f64) {
        let fam = &fixtures()[which];
        let (t, s) = (t * fam.horizon, s * fam.horizon);
        let shift = KappaShift::for_family(fam, 1.5).unwrap();
        let da = dt_log(fam, &shift, t, s, 1e-3 * fam.horizon, 1e-12).unwrap();
        let lhs = &da * &shifted_propagator(fam, &shift, t, s).unwrap();
        let rhs = &fam.evaluate(t, s).unwrap() * &fam.generator_at(t);
        prop_assert!(operator_norm(&(&lhs - &rhs)) <= 1e-6);
    }

    #[test]
    fn log_representation_is_bounded(which in 0usize..3, t in -1.0..1.0f64, s in -1.0..1.0f64, margin in 1.2..10.0f64) {
        let fam = &fixtures()[which];
        let shift = KappaShift::for_family(fam, margin).unwrap();
        let rep = log_representation(fam, &shift, t * fam.horizon, s * fam.horizon, 1e-12).unwrap();
        let (norm, bound) = rep.boundedness(fam).unwrap();
        prop_assert!(norm.is_finite() && norm <= bound, "{norm} > {bound}");
    }
}

/// Once the rule resolves the integrand, each doubling at least halves the
/// gap until it reaches the roundoff floor.
#[test]
fn trapezoid_gap_decays_geometrically() {
    for fam in fixtures() {
        for margin in [1.2, 1.5, 3.0, 10.0] {
            let shift = KappaShift::for_family(&fam, margin).unwrap();
            let contour = shift.contour().unwrap();
            for (t, s) in [(0.9, -0.9), (0.3, 0.1), (-0.7, 0.8)] {
                let m = shifted_propagator(&fam, &shift, t * fam.horizon, s * fam.horizon).unwrap();
                let mut prev = dunford_fixed(Integrand::PrincipalLog, &m, &contour, 32).unwrap();
                let mut gaps = Vec::new();
                for n in [64, 128, 256, 512, 1024, 2048] {
                    let cur = dunford_fixed(Integrand::PrincipalLog, &m, &contour, n).unwrap();
                    gaps.push((n, operator_norm(&(&cur - &prev))));
                    prev = cur;
                }
                let floor = 1e-13 * operator_norm(&prev).max(1.0);
                for w in gaps.windows(2) {
                    let ((_, g0), (n1, g1)) = (w[0], w[1]);
                    if g0 > floor {
                        assert!(g1 <= 0.5 * g0 || g1 <= floor, "margin {margin}, N={n1}: {g1:e} vs {g0:e}");
                    }
                }
            }
        }
    }
}
