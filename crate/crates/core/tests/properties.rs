use binverse::energy::{i_eps_terms, perimeter_estimate, psi};
use binverse::grid::GridField;
use binverse::observation::{apply_k, ObservationLayout, ObservationSet};
use binverse::posterior::{neg_log_density, threshold, TargetKind, TargetSpec};
use binverse::spectral::{PriorParams, PriorSpectrum};
use proptest::prelude::*;

const N: usize = 16;

fn field() -> impl Strategy<Value = GridField> {
    prop::collection::vec(-3.0f64..3.0, N * N).prop_map(|v| GridField::from_values(N, v).unwrap())
}

fn binary_field() -> impl Strategy<Value = GridField> {
    prop::collection::vec(prop::bool::ANY, N * N).prop_map(|v| {
        GridField::binary_from_values(N, v.into_iter().map(|b| if b { 1.0 } else { -1.0 }).collect()).unwrap()
    })
}

fn observations(y: Vec<f64>) -> ObservationSet {
    ObservationSet::with_identity(ObservationLayout::uniform(3, N), y, 0.1).unwrap()
}

fn data_for(u: &GridField) -> ObservationSet {
    let empty = observations(vec![0.0; 9]);
    observations(apply_k(u, &empty).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn forward_map_is_linear(u in field(), v in field(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let obs = observations(vec![0.0; 9]);
        let mix = u.lin_comb(a, &v, b).unwrap();
        let lhs = apply_k(&mix, &obs).unwrap();
        let ku = apply_k(&u, &obs).unwrap();
        let kv = apply_k(&v, &obs).unwrap();
        for j in 0..lhs.len() {
            prop_assert!((lhs[j] - (a * ku[j] + b * kv[j])).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_map_is_bounded(u in field()) {
        let obs = observations(vec![0.0; 9]);
        let bound = u.max_abs();
        for k in apply_k(&u, &obs).unwrap() {
            prop_assert!(k.abs() <= bound + 1e-12);
        }
    }

    #[test]
    fn psi_vanishes_exactly_on_binary_fields(u in binary_field(), idx in 0..N * N, x in -0.99f64..0.99) {
        let p = PriorParams::phase_field_small_noise();
        prop_assert_eq!(psi(&u, &p), 0.0);
        let mut v = u.values().to_vec();
        v[idx] = x;
        prop_assert!(psi(&GridField::from_values(N, v).unwrap(), &p) > 0.0);
    }

    #[test]
    fn perimeter_translation_and_flip(u in binary_field(), di in -8isize..8, dj in -8isize..8) {
        let base = perimeter_estimate(&u).unwrap();
        let flipped = GridField::binary_from_values(N, u.values().iter().map(|x| -x).collect()).unwrap();
        prop_assert_eq!(perimeter_estimate(&flipped).unwrap(), base);
        prop_assert!((perimeter_estimate(&u.translated(di, dj)).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn neg_log_density_nonnegative_and_zero_on_exact_fit(u in binary_field(), v in field()) {
        let obs = data_for(&u);
        let pf = TargetSpec::new(TargetKind::PhaseField, PriorParams::phase_field_small_noise(), obs.clone()).unwrap();
        let ls = TargetSpec::new(TargetKind::LevelSet, PriorParams::level_set(1.5), obs).unwrap();
        prop_assert_eq!(neg_log_density(&u, &pf).unwrap(), 0.0);
        prop_assert_eq!(neg_log_density(&u, &ls).unwrap(), 0.0);
        prop_assert!(neg_log_density(&v, &pf).unwrap() >= 0.0);
        prop_assert!(neg_log_density(&v, &ls).unwrap() >= 0.0);
    }

    #[test]
    fn level_set_sees_only_the_sign(v in field(), y in prop::collection::vec(-1.0f64..1.0, 9)) {
        let target = TargetSpec::new(TargetKind::LevelSet, PriorParams::level_set(1.5), observations(y)).unwrap();
        let base = neg_log_density(&v, &target).unwrap();
        prop_assert_eq!(neg_log_density(&v.map(|x| x * x * x), &target).unwrap(), base);
        prop_assert_eq!(neg_log_density(&v.scaled(2.0), &target).unwrap(), base);
        prop_assert_eq!(neg_log_density(&threshold(&v), &target).unwrap(), base);
    }

    #[test]
    fn i_eps_regulariser_bounds_total_from_below(u in field(), y in prop::collection::vec(-1.0f64..1.0, 9)) {
        let p = PriorParams::phase_field_small_noise();
        let terms = i_eps_terms(&u, &observations(y), &p).unwrap();
        prop_assert!(terms.regulariser() >= 0.0);
        prop_assert!(terms.total() >= terms.regulariser());
        let exact = i_eps_terms(&u, &data_for(&u), &p).unwrap();
        prop_assert!(exact.total() >= 0.0);
    }

    #[test]
    fn prior_samples_are_real_and_nested(seed in any::<u64>(), alpha in 1.2f64..4.0) {
        let p = PriorParams { alpha, ..PriorParams::level_set(1.5) };
        let fine = PriorSpectrum::new(&p, 2 * N).unwrap().nested_coeffs(seed);
        let coarse = PriorSpectrum::new(&p, N).unwrap().nested_coeffs(seed);
        let truncated = fine.truncated(N).unwrap();
        prop_assert_eq!(truncated.coeffs(), coarse.coeffs());
        prop_assert_eq!(coarse.hermitian_defect(), 0.0);
    }

    #[test]
    fn spectrum_decreases_with_wavenumber(q in 0.0f64..10.0, tau in 0.1f64..100.0, delta in 0.01f64..10.0) {
        let p = PriorParams { q, tau, delta, ..PriorParams::phase_field_small_noise() };
        let radial: Vec<f64> = (0..20).map(|k| p.eigenvalue((k, 0))).collect();
        prop_assert!(radial.windows(2).all(|w| w[1] < w[0]));
        prop_assert!(p.eigenvalue((3, 4)) < p.eigenvalue((4, 2)));
    }
}
