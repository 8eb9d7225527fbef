use proptest::prelude::*;
use tailgauge::tail::TailModel;
use tailgauge::{
    estimate_parent_quantile, parent_quantile_from_tail_quantile, select_tail, ConfidenceLevel, GpdParams, Sample,
    TailFit,
};

fn model() -> impl Strategy<Value = (TailModel, ConfidenceLevel)> {
    (100usize..100_000, 0.0..1.0f64, -5.0..-0.5f64, 0.1..10.0f64, -0.45..1.0f64, 0.0..10.0f64).prop_filter_map(
        "quantile outside the tail",
        |(big_n, share, log_tail, sigma, xi, u)| {
            let n_hat = 10 + ((big_n / 2 - 10) as f64 * share) as usize;
            let level = ConfidenceLevel::new(1.0 - 10f64.powf(log_tail)).ok()?;
            let m = TailModel { u_hat: u, n_hat, n_total: big_n, params: GpdParams::new(sigma, xi).ok()? };
            (m.tail_ratio(level) < 1.0).then_some((m, level))
        },
    )
}

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, failure_persistence: None, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(config(1000))]

    #[test]
    fn direct_and_two_step_parent_quantiles_agree((m, level) in model()) {
        let q_hat = m.params.quantile(level);
        let direct = estimate_parent_quantile(&m, level).unwrap();
        let two_step = parent_quantile_from_tail_quantile(&m, q_hat, level).unwrap();
        prop_assert!((direct - two_step).abs() <= 1e-10 * direct.abs().max(1.0), "{direct} vs {two_step}");
    }

    #[test]
    fn tail_quantile_power_identity((m, level) in model()) {
        let (sigma, xi) = (m.params.sigma(), m.params.xi());
        let q_hat = m.params.quantile(level);
        let lhs = (-xi * (1.0 - level.value()).ln()).exp();
        prop_assert!((lhs - (1.0 + xi / sigma * q_hat)).abs() <= 1e-12 * lhs);
    }

    #[test]
    fn parent_quantile_increases_with_level((m, level) in model(), bump in 1e-4..0.5f64) {
        let higher = ConfidenceLevel::new(level.value() + bump * (1.0 - level.value())).unwrap();
        prop_assert!(estimate_parent_quantile(&m, higher).unwrap() > estimate_parent_quantile(&m, level).unwrap());
    }
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn tail_selection_ignores_order(mut values in prop::collection::vec(-1e3..1e3f64, 100..400), seed in any::<u64>()) {
        let a = select_tail(&Sample::new(values.clone()).unwrap(), 0.1).unwrap();
        // Deterministic shuffle driven by the seed.
        let mut s = seed | 1;
        for i in (1..values.len()).rev() {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            values.swap(i, (s % (i as u64 + 1)) as usize);
        }
        let b = select_tail(&Sample::new(values).unwrap(), 0.1).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn whole_sample_as_tail_reduces_to_gpd_quantile() {
    let p = GpdParams::new(1.7, 0.3).unwrap();
    let level = ConfidenceLevel::new(0.99).unwrap();
    let m = TailModel { u_hat: 0.0, n_hat: 500, n_total: 500, params: p };
    let q = estimate_parent_quantile(&m, level).unwrap();
    assert!((q - p.quantile(level)).abs() < 1e-12 * q);
    assert_eq!(parent_quantile_from_tail_quantile(&m, 0.0, level).unwrap(), 0.0);
}

#[test]
fn fitted_models_satisfy_power_identity() {
    let mut rng = tailgauge::simulation::stream_rng(5, 0);
    let level = ConfidenceLevel::new(0.999).unwrap();
    for xi in [0.0, 0.1, 0.25, 0.45] {
        let xs = tailgauge::gpd::sample(&GpdParams::new(2.0, xi).unwrap(), &mut rng, 5000).unwrap();
        let tf = TailFit::fit(&Sample::new(xs).unwrap(), 0.1).unwrap();
        let (s, x) = (tf.estimate.sigma_hat, tf.estimate.xi_hat);
        let q = tf.tail_quantile(level);
        let lhs = (-x * (1.0 - level.value()).ln()).exp();
        assert!((lhs - (1.0 + x / s * q)).abs() <= 1e-12 * lhs);
        let q4 = tf.parent_quantile(level).unwrap();
        let q7 = parent_quantile_from_tail_quantile(&tf.model(), q, level).unwrap();
        assert!((q4 - q7).abs() <= 1e-10 * q4.abs());
    }
}
