use membrane_core::cases;
use membrane_core::mc_oracle::{skew_density, SkewParams};
use membrane_core::problem::InitialFunction;
use membrane_core::semigroup::SemigroupOperator;
use proptest::prelude::*;
use std::sync::OnceLock;

fn skew_op() -> &'static SemigroupOperator {
    static OP: OnceLock<SemigroupOperator> = OnceLock::new();
    OP.get_or_init(|| SemigroupOperator::with_defaults(cases::skew()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn constants_are_preserved(s in 0.0f64..0.9, dt in 0.01f64..0.1, x in -3.0f64..3.0) {
        let one = InitialFunction::constant_one();
        let u = skew_op().apply(s, s + dt, &one).unwrap().eval(x).unwrap();
        prop_assert!((u - 1.0).abs() <= 1e-3, "u = {}", u);
    }

    #[test]
    fn positive_data_give_values_in_range(
        center in -1.0f64..1.0,
        width in 0.3f64..1.5,
        x in -2.0f64..2.0,
    ) {
        let phi = InitialFunction::gaussian(1.0, center, width);
        let u = skew_op().apply(0.5, 1.0, &phi).unwrap().eval(x).unwrap();
        prop_assert!(u >= -1e-4 && u <= 1.0 + 1e-3, "u = {}", u);
    }

    #[test]
    fn skew_density_is_nonnegative(alpha in 0.01f64..0.99, dt in 1e-3f64..2.0, x in -3.0f64..3.0, y in -3.0f64..3.0) {
        let p = SkewParams { alpha, sigma: 1.0 };
        prop_assert!(skew_density(p, dt, x, y) >= 0.0);
    }
}
