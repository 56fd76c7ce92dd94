use kp_rankone::matkernel::{det, eigenvalues};
use kp_rankone::sample::ComplexSampler;
use kp_rankone::tau::{tau, TauEvaluator};
use kp_rankone::verify::{gauge_link_residual, hbde_residual};
use kp_rankone::{random_admissible, CMatrix, RankOneTriple, ScaledComplex, TimeVector};
use proptest::prelude::*;

fn setup(seed: u64, n: usize, extra: usize) -> (RankOneTriple, TimeVector, [num_complex::Complex64; 3], ComplexSampler) {
    let tr = random_admissible(n, n + extra, seed).unwrap();
    let mut s = ComplexSampler::new(seed ^ 0x5eed);
    let t = TimeVector::new((0..3).map(|_| s.disc(1.0)).collect()).unwrap();
    let spectrum = eigenvalues(tr.b()).unwrap();
    let c = s.annulus_avoiding(3, 1.0, 3.0, &spectrum, 0.1).unwrap();
    (tr, t, [c[0], c[1], c[2]], s)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lattice_equation_holds(seed in any::<u64>(), n in 1usize..4, extra in 1usize..5, l in 0i32..2, m in -1i32..2, k in 0i32..2) {
        let (tr, t, c, _) = setup(seed, n, extra);
        let r = hbde_residual(&tr, &t, c, [l, m, k]).unwrap();
        prop_assert!(r.residual < 1e-8, "residual {}", r.residual);
    }

    #[test]
    fn discrete_and_miwa_forms_differ_by_gauge(seed in any::<u64>(), n in 1usize..4, extra in 1usize..5) {
        let (tr, t, c, _) = setup(seed, n, extra);
        let ev = TauEvaluator::new(&tr).unwrap();
        let r = gauge_link_residual(&ev, &t, c, [1, -1, 2]).unwrap();
        prop_assert!(r.residual < 1e-10, "residual {}", r.residual);
    }

    /// `C → M·C` multiplies `τ` by `det M`.
    #[test]
    fn left_gauge(seed in any::<u64>(), n in 1usize..4, extra in 1usize..4) {
        let (tr, t, _, mut s) = setup(seed, n, extra);
        let m = s.centered_matrix(n, n, 1.0).add_identity(num_complex::Complex64::new(2.0, 0.0));
        let moved = RankOneTriple::new(tr.a().clone(), tr.b().clone(), &m * tr.c()).unwrap();
        let lhs = tau(&moved, &t).unwrap();
        let rhs = tau(&tr, &t).unwrap() * ScaledComplex::from_complex(det(&m).unwrap());
        prop_assert!(ScaledComplex::relative_difference(lhs, rhs) < 1e-10);
    }

    /// Time translation along `t₁` composes: τ evaluated at `t + s·e₁` from
    /// the triple equals τ at `t` of the triple with `A → A·e^{sB}`.
    #[test]
    fn time_translation(seed in any::<u64>(), n in 1usize..3, extra in 1usize..4, shift in -0.5f64..0.5) {
        let (tr, t, _, _) = setup(seed, n, extra);
        let e = kp_rankone::matkernel::matexp(&tr.b().scale(num_complex::Complex64::new(shift, 0.0))).unwrap();
        let moved = RankOneTriple::new_unchecked(tr.a() * &e, tr.b().clone(), tr.c().clone()).unwrap();
        let lhs = tau(&tr, &t.offset(1, num_complex::Complex64::new(shift, 0.0))).unwrap();
        let rhs = tau(&moved, &t).unwrap();
        prop_assert!(ScaledComplex::relative_difference(lhs, rhs) < 1e-10);
    }
}

#[test]
fn identity_b_gives_pure_exponential() {
    // B = I: τ = det(A·Cᵀ)·e^{n·Σtᵢ}
    let a = CMatrix::from_real(1, 2, &[1.0, 2.0]).unwrap();
    let c = CMatrix::from_real(1, 2, &[3.0, 1.0]).unwrap();
    let tr = RankOneTriple::new(a, CMatrix::identity(2), c).unwrap();
    let t = TimeVector::from_real(&[0.5, -0.25, 1.0]).unwrap();
    let v = tau(&tr, &t).unwrap();
    let want = ScaledComplex::exp(num_complex::Complex64::new(1.25, 0.0)).scale_complex(num_complex::Complex64::new(5.0, 0.0));
    assert!(ScaledComplex::relative_difference(v, want) < 1e-14);
}
