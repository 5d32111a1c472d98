//! Property tests of structural invariants across modules.

use atfbm::density::{caputo_half_of, subordinated_density};
use atfbm::fbm::{conditional_variance, fbm_covariance, sample_fbm_at};
use atfbm::rng::derive_seed;
use atfbm::scaling_limit::{LinearProcessSpec, VarianceModel};
use atfbm::special_integrals::{
    conditional_identity_quadrature, conditional_identity_rhs, min_distance_integral, simplex_dirichlet_closed,
    simplex_dirichlet_quadrature, SimplexIntegralSpec,
};
use atfbm::stable::sample_stable_path;
use atfbm::stats::ks_two_sample;
use atfbm::{FbmSpec, StableKind, StableSpec};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn symmetric_density_is_even_and_self_similar(alpha in 0.6f64..2.0, t in 0.2f64..4.0, x in 0.05f64..4.0) {
        let law = StableSpec::new(alpha, 1.0, StableKind::Symmetric).unwrap();
        let p = law.density(t, x).unwrap();
        prop_assert!(p > 0.0);
        prop_assert!(close(p, law.density(t, -x).unwrap(), 1e-10));
        let s = t.powf(1.0 / alpha);
        prop_assert!(close(p, law.density(1.0, x / s).unwrap() / s, 1e-7));
    }

    #[test]
    fn cdf_is_monotone_and_bounded(alpha in 0.5f64..2.0, x in -5.0f64..5.0, dx in 0.01f64..2.0) {
        let law = StableSpec::new(alpha, 1.0, StableKind::Symmetric).unwrap();
        let (a, b) = (law.cdf(1.0, x).unwrap(), law.cdf(1.0, x + dx).unwrap());
        prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
        prop_assert!(a <= b + 1e-12);
    }

    #[test]
    fn subordinator_paths_start_at_zero_and_never_decrease(alpha in 0.2f64..0.95, seed in any::<u64>()) {
        let law = StableSpec::new(alpha, 1.0, StableKind::Subordinator).unwrap();
        let times: Vec<f64> = (0..=32).map(|k| k as f64 / 32.0).collect();
        let path = sample_stable_path(&law, &times, seed).unwrap();
        prop_assert_eq!(path.values[0], 0.0);
        prop_assert!(path.values.windows(2).all(|w| w[1] >= w[0]));
        prop_assert_eq!(path, sample_stable_path(&law, &times, seed).unwrap());
    }

    #[test]
    fn fbm_covariance_is_symmetric_and_cauchy_schwarz(h in 0.05f64..0.95, t in 0.01f64..10.0, s in 0.01f64..10.0) {
        let spec = FbmSpec::new(h).unwrap();
        let c = fbm_covariance(&spec, t, s);
        prop_assert_eq!(c, fbm_covariance(&spec, s, t));
        prop_assert!(close(fbm_covariance(&spec, t, t), t.powf(2.0 * h), 1e-12));
        prop_assert!(c.abs() <= (t.powf(2.0 * h) * s.powf(2.0 * h)).sqrt() * (1.0 + 1e-12));
    }

    #[test]
    fn conditioning_never_increases_variance(h in 0.1f64..0.9, target in 0.1f64..1.0, ys in prop::collection::vec(1.1f64..3.0, 1..5)) {
        let spec = FbmSpec::new(h).unwrap();
        let mut prev = conditional_variance(&spec, target, &[]).unwrap();
        for k in 1..=ys.len() {
            let v = conditional_variance(&spec, target, &ys[..k]).unwrap();
            prop_assert!(v >= 0.0 && v <= prev * (1.0 + 1e-9));
            prev = v;
        }
    }

    #[test]
    fn fbm_samples_are_reproducible(h in 0.1f64..0.9, seed in any::<u64>()) {
        let spec = FbmSpec::new(h).unwrap();
        let pts = [0.1, 0.35, 0.7, 1.0];
        prop_assert_eq!(sample_fbm_at(&spec, &pts, seed).unwrap().values, sample_fbm_at(&spec, &pts, seed).unwrap().values);
    }

    #[test]
    fn derived_seeds_are_deterministic_and_key_sensitive(master in any::<u64>(), a in any::<u64>(), b in any::<u64>()) {
        prop_assume!(a != b);
        prop_assert_eq!(derive_seed(master, &[a]), derive_seed(master, &[a]));
        prop_assert_ne!(derive_seed(master, &[a]), derive_seed(master, &[b]));
        prop_assert_ne!(derive_seed(master, &[a, b]), derive_seed(master, &[b, a]));
    }

    #[test]
    fn ks_distance_is_a_symmetric_fraction(a in prop::collection::vec(-10.0f64..10.0, 1..40), b in prop::collection::vec(-10.0f64..10.0, 1..40)) {
        let d = ks_two_sample(&a, &b);
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, ks_two_sample(&b, &a));
        prop_assert_eq!(ks_two_sample(&a, &a), 0.0);
    }

    #[test]
    fn composed_density_is_even_and_self_similar(h in 0.3f64..0.7, alpha in 0.8f64..2.0, t in 0.3f64..3.0, x in 0.1f64..3.0) {
        let law = StableSpec::new(alpha, 1.0, StableKind::Symmetric).unwrap();
        let q = subordinated_density(h, &law, t, x).unwrap();
        prop_assert!(q > 0.0);
        prop_assert!(close(q, subordinated_density(h, &law, t, -x).unwrap(), 1e-10));
        let s = t.powf(h / alpha);
        prop_assert!(close(q, subordinated_density(h, &law, 1.0, x / s).unwrap() / s, 1e-6));
    }

    #[test]
    fn caputo_half_derivative_of_powers(p in 0.5f64..3.0, t in 0.2f64..3.0) {
        let exact = libm::tgamma(p + 1.0) / libm::tgamma(p + 0.5) * t.powf(p - 0.5);
        let value = caputo_half_of(|s| s.powf(p), t, 512, 3.0).unwrap();
        prop_assert!(close(value, exact, 1e-5), "{} vs {}", value, exact);
    }

    #[test]
    fn linear_process_variance_grows(gamma in 0.55f64..0.95, n in 2.0f64..1e6) {
        let model = VarianceModel::new(LinearProcessSpec::new(1.0, gamma).unwrap());
        let (a, b) = (model.variance(n), model.variance(n * 1.5));
        prop_assert!(a > 0.0 && b > a);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn simplex_quadrature_matches_closed_form(h in 0.2f64..3.0, betas in prop::collection::vec(0.05f64..0.9, 1..3)) {
        let spec = SimplexIntegralSpec::new(h, betas).unwrap();
        let closed = simplex_dirichlet_closed(&spec);
        let quad = simplex_dirichlet_quadrature(&spec).unwrap();
        prop_assert!(close(quad.value, closed, 1e-8), "{} vs {}", quad.value, closed);
    }

    #[test]
    fn single_increment_simplex_is_elementary(h in 0.1f64..5.0, beta in 0.01f64..0.99) {
        let spec = SimplexIntegralSpec::new(h, vec![beta]).unwrap();
        prop_assert!(close(simplex_dirichlet_closed(&spec), h.powf(1.0 - beta) / (1.0 - beta), 1e-12));
    }

    #[test]
    fn extra_points_raise_the_nearest_point_integral(gamma in 0.0f64..0.95, pts in prop::collection::vec(0.0f64..1.0, 1..8), extra in 0.0f64..1.0) {
        let base = min_distance_integral(&pts, gamma).unwrap();
        let mut more = pts.clone();
        more.push(extra);
        prop_assert!(min_distance_integral(&more, gamma).unwrap() >= base * (1.0 - 1e-12));
        prop_assert!(close(min_distance_integral(&pts, 0.0).unwrap(), 1.0, 1e-12));
    }

    #[test]
    fn conditioning_identity_holds_for_random_pairs(a in 0.3f64..2.0, b in 0.3f64..2.0, rho in -0.8f64..0.8, gamma in 0.1f64..0.9) {
        let off = rho * (a * b).sqrt();
        let cov = DMatrix::from_row_slice(2, 2, &[a, off, off, b]);
        let rhs = conditional_identity_rhs(&cov, gamma).unwrap();
        let lhs = conditional_identity_quadrature(&cov, gamma).unwrap();
        prop_assert!(close(lhs.lhs.value, rhs, 1e-7), "{} vs {}", lhs.lhs.value, rhs);
    }
}
