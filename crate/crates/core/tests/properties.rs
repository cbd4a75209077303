mod common;

use proptest::prelude::*;

use common::*;
use subboot::engines::{HyperParams, Method};
use subboot::moments::TildeConstants;

fn estimator_name() -> impl Strategy<Value = &'static str> {
    prop::sample::select(ESTIMATORS.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn weights_match_duplicated_rows(name in estimator_name(), seed in 0u64..1000, counts in prop::collection::vec(0u32..4, 40)) {
        let c = case(name, counts.len(), seed);
        duplication_equivalence(&c, &counts).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn engine_output_is_symmetric_psd(
        name in estimator_name(),
        method in prop::sample::select(vec![Method::Tb, Method::Blb, Method::Sb, Method::Sdb]),
        seed in 0u64..1000,
        n in 20usize..120,
        r in 1usize..6,
        b in 1usize..6,
    ) {
        let c = case(name, 150, seed);
        engine_psd(&c, method, HyperParams::new(n, r, b), seed).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn sdb_equals_blb_with_b_one(name in estimator_name(), seed in 0u64..1000, n in 10usize..100, r in 1usize..150) {
        let c = case(name, 120, seed);
        sdb_is_blb_with_one_resample(&c, n, r, seed).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn mse_is_monotone(p in 1usize..4, seed in 0u64..1000, big_n in 100usize..100_000, frac in 0.01f64..0.99, r in 1usize..500, b in 1usize..500) {
        let n = ((big_n as f64 * frac) as usize).max(1);
        mse_monotone(&random_constants(p, seed), big_n, n, r, b).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn tuner_ignores_common_scale(
        c1 in 0.1f64..10.0,
        c2 in 0.1f64..10.0,
        c3 in 0.0f64..10.0,
        alpha1 in 1e-9f64..1e-6,
        ratio in 0.1f64..100.0,
        c_max in 0.5f64..50.0,
        big_n in 10_000usize..1_000_000,
        gamma in prop::sample::select(vec![1.0, 1.5, 2.0]),
        lambda in 1e-3f64..1e3,
    ) {
        let t = TildeConstants { c1, c2, c3 };
        tuner_scale_invariant(&t, c1, c2 + c3, alpha1, alpha1 * ratio, c_max, big_n, gamma, lambda).map_err(TestCaseError::fail)?;
    }
}
