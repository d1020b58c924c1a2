use dunkl_an::verify::{sweep_psi_ratio, AxisRange, Sampling, SweepConfig};
use proptest::prelude::*;

fn gaps(coords: &[f64]) -> Vec<f64> {
    coords.windows(2).map(|w| w[0] - w[1]).collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn random_sweeps_stay_in_range(n in 1usize..=2, seed in any::<u64>(), lo in 0.01..1.0f64, span in 2.0..100.0f64, count in 1usize..24) {
        let range = AxisRange::new(lo, lo * span, 2);
        let mut cfg = SweepConfig::psi(n, range, range, Sampling::Random).with_seed(seed);
        cfg.samples = Some(count);
        let report = sweep_psi_ratio(&cfg, Some(1)).unwrap();
        prop_assert_eq!(report.records.len(), count);
        for (i, r) in report.records.iter().enumerate() {
            prop_assert_eq!(r.index, i);
            prop_assert!(r.ratio > 0.0 && r.ratio.is_finite());
            for g in gaps(r.lambda.as_ref().unwrap()).into_iter().chain(gaps(&r.x)) {
                prop_assert!(g >= lo * (1.0 - 1e-12) && g <= lo * span * (1.0 + 1e-12));
            }
        }
        let threaded = sweep_psi_ratio(&cfg, Some(3)).unwrap();
        prop_assert_eq!(serde_json::to_string(&threaded).unwrap(), serde_json::to_string(&report).unwrap());
    }

    #[test]
    fn grid_sweeps_cover_every_node(points in 2usize..5, lo in 0.01..1.0f64, span in 2.0..100.0f64) {
        let range = AxisRange::new(lo, lo * span, points);
        let cfg = SweepConfig::psi(1, range, range, Sampling::LogGrid);
        let report = sweep_psi_ratio(&cfg, None).unwrap();
        prop_assert_eq!(report.records.len(), points * points);
        let mut nodes: Vec<f64> = report.records.iter().map(|r| gaps(&r.x)[0]).collect();
        nodes.sort_by(f64::total_cmp);
        nodes.dedup_by(|a, b| (*a / *b - 1.0).abs() < 1e-12);
        prop_assert_eq!(nodes.len(), points);
        prop_assert!((nodes[0] / lo - 1.0).abs() < 1e-12);
        prop_assert!((nodes[points - 1] / (lo * span) - 1.0).abs() < 1e-12);
    }
}
