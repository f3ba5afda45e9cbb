mod common;

use common::{converging_point, model_and_point};
use greenkam::green::GreenConfig;
use greenkam::lyapunov::{lyapunov_spectrum, verify_theorem_two, LyapunovConfig, TheoremTwoVerdict};
use greenkam::model::Hamiltonian;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn exponents_pair_and_sum_to_zero((model, x) in model_and_point(2.0)) {
        let spec = lyapunov_spectrum(&model, &x, &LyapunovConfig::default()).unwrap();
        let n = model.dim() as f64;
        prop_assert!(spec.pairing_defect() <= 2.0 * spec.zero_tol,
            "{}: exponents {:?}, zero_tol {}", model.name(), spec.exponents, spec.zero_tol);
        prop_assert!(spec.sum().abs() <= 2.0 * n * spec.zero_tol);
        prop_assert!(spec.exponents.windows(2).all(|w| w[0] >= w[1]));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn zero_exponents_cover_the_green_kernel((model, x) in converging_point()) {
        let lcfg = LyapunovConfig { horizon: 50.0, ..Default::default() };
        let r = verify_theorem_two(&model, &x, &lcfg, &GreenConfig::default()).unwrap();
        prop_assert!(r.zero_count >= 2 * r.p_from_green);
        prop_assert!(matches!(r.verdict, TheoremTwoVerdict::Consistent | TheoremTwoVerdict::ConsistentWithCaveat),
            "{}: {:?} {:?}", model.name(), r.verdict, r.caveats);
    }
}
