use dunkl_an_core::factorization::{factor_integral, factorization_ratio, master_integral, FactorInput};
use dunkl_an_core::heat::{heat_flat, HeatContext};
use dunkl_an_core::root_system::{pi, ChamberPoint, RootSystem, WeylElement};
use dunkl_an_core::spherical::{psi_envelope, psi_stable, psi_stable_normalized};
use proptest::prelude::*;

const TARGET: f64 = 1e-10;

fn gaps(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((lo.ln()..hi.ln()).prop_map(f64::exp), n)
}

fn point(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = ChamberPoint> {
    (-2.0..2.0f64, gaps(n, lo, hi)).prop_map(|(b, g)| ChamberPoint::from_gaps(b, &g).unwrap())
}

fn pair(lo: f64, hi: f64) -> impl Strategy<Value = (ChamberPoint, ChamberPoint)> {
    (1usize..=3).prop_flat_map(move |n| (point(n, lo, hi), point(n, lo, hi)))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn psi_is_symmetric((l, x) in pair(0.01, 10.0)) {
        let a = psi_stable(&l, &x, TARGET).unwrap().log_value;
        let b = psi_stable(&x, &l, TARGET).unwrap().log_value;
        prop_assert_eq!(a, b);
    }

    #[test]
    fn psi_below_leading_exponential((l, x) in pair(0.01, 30.0)) {
        let r = psi_stable_normalized(&l, &x, TARGET).unwrap();
        prop_assert!(r.log_value <= r.abs_log_error + 1e-12);
    }

    #[test]
    fn psi_dual_scaling((l, x) in pair(0.05, 5.0), c in 0.2..5.0f64) {
        let a = psi_stable(&l.scaled(c).unwrap(), &x, TARGET).unwrap().log_value;
        let b = psi_stable(&l, &x.scaled(c).unwrap(), TARGET).unwrap().log_value;
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn psi_translation((l, x) in pair(0.05, 5.0), c in -3.0..3.0f64) {
        let shifted = ChamberPoint::new(x.coords().iter().map(|v| v + c).collect()).unwrap();
        let a = psi_stable(&l, &shifted, TARGET).unwrap().log_value;
        let b = psi_stable(&l, &x, TARGET).unwrap().log_value + c * l.coords().iter().sum::<f64>();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn envelope_is_finite((l, x) in pair(1e-3, 1e3)) {
        prop_assert!(psi_envelope(&l, &x).is_finite());
    }

    #[test]
    fn weyl_action_inverts(perm in Just((0..4).collect::<Vec<usize>>()).prop_shuffle(), x in prop::collection::vec(-5.0..5.0f64, 4)) {
        let w = WeylElement::from_perm(perm).unwrap();
        prop_assert_eq!(w.inverse().act(&w.act(&x)), x.clone());
        let sign = pi(&w.act(&x)) / pi(&x);
        prop_assert!((sign.abs() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn factors_bounded_by_gaps(l in point(3, 0.01, 100.0), x in point(3, 0.01, 100.0)) {
        let input = FactorInput::new(l, x.clone()).unwrap();
        let g = x.gaps();
        for k in 1..=3 {
            let v = factor_integral(&input, k, 1e-9).unwrap();
            prop_assert!(v <= g[k - 1].ln() + 1e-9);
        }
    }

    #[test]
    fn factorization_ratio_positive((l, x) in (2usize..=3).prop_flat_map(|n| (point(n, 0.01, 100.0), point(n, 0.01, 100.0)))) {
        let r = factorization_ratio(&FactorInput::new(l, x).unwrap(), 1e-8).unwrap().ratio;
        prop_assert!(r > 0.0 && r <= 1.0 + 1e-7);
    }

    #[test]
    fn master_integral_grows_with_gaps(l in gaps(2, 0.01, 100.0), x in gaps(2, 0.01, 100.0), k in 0usize..2, f in 1.1..3.0f64) {
        let mut wider = x.clone();
        wider[k] *= f;
        let base = ChamberPoint::from_gaps(0.0, &l).unwrap();
        let a = master_integral(&FactorInput::new(base.clone(), ChamberPoint::from_gaps(0.0, &x).unwrap()).unwrap(), 1e-9).unwrap();
        let b = master_integral(&FactorInput::new(base, ChamberPoint::from_gaps(0.0, &wider).unwrap()).unwrap(), 1e-9).unwrap();
        prop_assert!(b >= a - 1e-9);
    }

    #[test]
    fn heat_symmetric_and_parabolic((x, y) in (1usize..=3).prop_flat_map(|n| (point(n, 0.1, 3.0), point(n, 0.1, 3.0))), t in 0.1..5.0f64, c in 0.3..3.0f64) {
        let n = x.rank();
        let ctx = HeatContext::mms(n).unwrap();
        let rs = RootSystem::new(n).unwrap();
        let p = heat_flat(&ctx, t, &x, &y).unwrap().log_value;
        prop_assert!((heat_flat(&ctx, t, &y, &x).unwrap().log_value - p).abs() <= 1e-12);
        let scaled = heat_flat(&ctx, c * c * t, &x.scaled(c).unwrap(), &y.scaled(c).unwrap()).unwrap().log_value;
        let homogeneity = (rs.dim() + 2 * rs.gamma()) as f64;
        prop_assert!((scaled + homogeneity * c.ln() - p).abs() <= 1e-10);
    }
}
