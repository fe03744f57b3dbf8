use nalgebra::DMatrix;
use proptest::prelude::*;

use ofbmlab::approx::step_index;
use ofbmlab::linop::{mat_pow, rel_frobenius};
use ofbmlab::{covariance, energy_distance, ofgn_model, rng, whiten, Band, LinearOperator, QuadConfig, SpectralSpec};

fn samples(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    proptest::collection::vec(-3.0f64..3.0, rows * cols).prop_map(move |v| DMatrix::from_row_slice(rows, cols, &v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn energy_is_nonnegative_and_zero_on_identical(a in samples(12, 2), b in samples(9, 2), seed in any::<u64>()) {
        let t = energy_distance(&a, &b, 200, seed).unwrap();
        prop_assert!(t.statistic >= 0.0);
        prop_assert!(t.p_value > 0.0 && t.p_value <= 1.0);
        prop_assert_eq!(energy_distance(&a, &a, 200, seed).unwrap().statistic, 0.0);
    }

    #[test]
    fn whitening_is_idempotent(s in samples(10, 2), l in samples(2, 2)) {
        let c = &l * l.transpose() + DMatrix::identity(2, 2) * 0.1;
        let once = whiten(&s, &c).unwrap();
        let twice = whiten(&once, &DMatrix::identity(2, 2)).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn band_names_round_trip(m in 0usize..40, kind in 0u8..3) {
        let band = match kind {
            0 => Band::Full,
            1 => Band::Head(m),
            _ => Band::Tail(m),
        };
        prop_assert_eq!(band.to_string().parse::<Band>().unwrap(), band);
    }

    #[test]
    fn step_index_is_monotone(n in 1usize..5000, t1 in 0.0f64..=1.0, t2 in 0.0f64..=1.0) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let (a, b) = (step_index(n, lo).unwrap(), step_index(n, hi).unwrap());
        prop_assert!(a <= b && b <= n);
    }

    #[test]
    fn derived_seeds_separate_indices(master in any::<u64>(), i in 0u64..1000, j in 0u64..1000) {
        prop_assume!(i != j);
        prop_assert_ne!(
            rng::derive_seed(master, rng::DOMAIN_SEQUENCE, i),
            rng::derive_seed(master, rng::DOMAIN_SEQUENCE, j)
        );
    }

    #[test]
    fn telescoping_holds_for_random_exponents(h1 in 0.52f64..0.98, h2 in 0.52f64..0.98, off in -0.2f64..0.2, n in 1usize..3000) {
        let d = LinearOperator::from_row_slice(2, &[h1, off, 0.0, h2]).unwrap();
        let gamma = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]);
        let model = ofgn_model(&d, &gamma).unwrap();
        let p = mat_pow(n as f64, &d).unwrap();
        let target = p.matrix() * &gamma * p.matrix().transpose();
        prop_assert!(rel_frobenius(&model.double_sum(n).unwrap(), &target) < 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn reversible_specs_have_symmetric_covariance(
        a in samples(2, 2),
        k in -1.0f64..1.0,
        h1 in 0.2f64..0.9,
        h2 in 0.2f64..0.9,
        t in 0.1f64..1.0,
        s in 0.1f64..1.0,
    ) {
        // A2 = k A1 gives A2 A1^T = A1 A2^T
        let a1 = a + DMatrix::identity(2, 2) * 4.0;
        let a2 = &a1 * k;
        let spec = SpectralSpec::new(a1, a2, LinearOperator::diagonal(&[h1, h2]).unwrap()).unwrap();
        prop_assert!(spec.is_time_reversible());
        let c = covariance(&spec, t, s, &QuadConfig::default()).unwrap();
        prop_assert!((&c - c.transpose()).norm() <= 1e-8 * c.norm());
    }
}
