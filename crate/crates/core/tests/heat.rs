use dunkl_an_core::heat::{
    calibrate_constant, fourier_integrand, images_oracle, mms_constant, semigroup_check,
    FourierOracle, HeatContext,
};
use dunkl_an_core::ChamberPoint;

fn cp(v: &[f64]) -> ChamberPoint {
    ChamberPoint::new(v.to_vec()).unwrap()
}

#[test]
fn calibration_agrees_with_mms() {
    for n in [1, 2] {
        let cal = calibrate_constant(n, 1.0, 1e-8).unwrap();
        let mms = mms_constant(n).unwrap();
        assert!((cal.c_k / mms - 1.0).abs() < 1e-6, "n={n}: {} vs {mms}", cal.c_k);
        assert!((cal.mass_at_double - 1.0).abs() < 1e-6);
    }
}

#[test]
fn semigroup_rank_one_and_two() {
    let ctx = HeatContext::mms(1).unwrap();
    let r = semigroup_check(&ctx, 0.4, 0.6, &cp(&[1.0, 0.0]), &cp(&[0.3, -0.8]), 1e-8).unwrap();
    assert!(r < 1e-6, "{r}");
    let ctx = HeatContext::mms(2).unwrap();
    let r = semigroup_check(&ctx, 0.5, 0.5, &cp(&[1.0, 0.0, -1.0]), &cp(&[0.5, 0.2, -0.6]), 1e-7).unwrap();
    assert!(r < 1e-5, "{r}");
}

#[test]
fn fourier_oracle_tracks_flat_kernel() {
    for n in [1, 2] {
        let ctx = HeatContext::mms(n).unwrap();
        let x0 = cp(&[1.0, 0.3, -0.4][..n + 1]);
        let y0 = cp(&[0.8, -0.1, -0.5][..n + 1]);
        let oracle = FourierOracle::calibrate(&ctx, 1.0, &x0, &y0, 1e-9).unwrap();
        let y = cp(&[0.2, -0.6, -1.1][..n + 1]);
        for t in [0.5, 2.0] {
            let a = oracle.evaluate(t, &x0, &y).unwrap().log_value;
            let b = images_oracle(&ctx, t, &x0, &y).unwrap().log_value;
            assert!((a - b).abs() < 1e-7, "n={n} t={t}: {a} {b}");
        }
    }
}

#[test]
fn fourier_integrand_pairs_conjugate() {
    let (x, y) = (cp(&[1.0, 0.2, -0.7]), cp(&[0.4, 0.0, -0.3]));
    let l = cp(&[1.3, 0.1, -0.9]);
    let a = fourier_integrand(0.5, &l, &x, &y).unwrap();
    let b = fourier_integrand(0.5, &l.reversed_negated(), &x, &y).unwrap();
    assert!((a - b.conj()).norm() < 1e-12 * a.norm().max(1e-300));
}
