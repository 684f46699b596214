use diffmap::atoms::{project_atomicity, AtomTemplate, AtomicityConfig};
use diffmap::dynamics::DifferenceMap;
use diffmap::fourier::{fft_forward, fft_inverse, registered_distance};
use diffmap::projections::*;
use diffmap::synth::modulus_of;
use diffmap::{Grid, ObjectField};
use proptest::prelude::*;

fn field(n: usize) -> impl Strategy<Value = ObjectField> {
    prop::collection::vec(-1.0f64..1.0, n * n)
        .prop_map(move |v| ObjectField::new(Grid::square(n).unwrap(), v).unwrap())
}

fn positive_field(n: usize) -> impl Strategy<Value = ObjectField> {
    prop::collection::vec(0.0f64..1.0, n * n)
        .prop_map(move |v| ObjectField::new(Grid::square(n).unwrap(), v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fourier_round_trip(x in field(8)) {
        let back = fft_inverse(&fft_forward(&x)).unwrap();
        prop_assert!(back.distance(&x) <= 1e-12 * (1.0 + x.norm()));
        prop_assert!((fft_forward(&x).norm() - x.norm()).abs() <= 1e-12 * (1.0 + x.norm()));
    }

    #[test]
    fn modulus_projection_is_idempotent(x in field(8), y in field(8)) {
        let m = modulus_of(&y);
        let p = project_modulus(&x, &m).unwrap();
        prop_assert!(project_modulus(&p, &m).unwrap().distance(&p) <= 1e-10 * (1.0 + p.norm()));
        for (a, b) in modulus_of(&p).magnitudes().iter().zip(m.magnitudes()) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn histogram_projection_is_idempotent(x in field(6), y in field(6)) {
        let h = Histogram::of(&y);
        let p = project_histogram(&x, &h).unwrap();
        prop_assert_eq!(Histogram::of(&p), h.clone());
        prop_assert!(project_histogram(&p, &h).unwrap().distance(&p) <= 1e-10);
    }

    #[test]
    fn support_positive_projection_is_idempotent(x in field(8), m in prop::collection::vec(any::<bool>(), 64)) {
        let mask = SupportMask::new(Grid::square(8).unwrap(), m).unwrap();
        let p = project_support_positive(&x, &mask).unwrap();
        prop_assert!(p.values().iter().all(|&v| v >= 0.0));
        prop_assert_eq!(project_support_positive(&p, &mask).unwrap(), p);
    }

    #[test]
    fn atomicity_projection_is_idempotent(x in positive_field(16)) {
        let cfg = AtomicityConfig::normalized(5, AtomTemplate::standard(2).unwrap());
        let (p, placements) = project_atomicity(&x, &cfg).unwrap();
        prop_assert_eq!(placements.len(), 5);
        prop_assert!(placements.iter().all(|a| a.translation.iter().all(|t| t.abs() <= 0.5)));
        let (pp, _) = project_atomicity(&p, &cfg).unwrap();
        prop_assert!(pp.distance(&p) <= 1e-6 * p.norm());
    }

    #[test]
    fn registration_ignores_translation_and_inversion(x in field(8), dx in -8i64..8, dy in -8i64..8, flip in any::<bool>()) {
        let moved = if flip { x.inverted() } else { x.clone() }.translated(&[dx, dy]);
        prop_assert!(registered_distance(&moved, &x).unwrap() <= 1e-10 * (1.0 + x.norm()));
    }

    #[test]
    fn fixed_point_error_vanishes(x in positive_field(8), beta in prop_oneof![-1.0..-0.05f64, 0.05..1.0f64]) {
        // Any object is a solution of its own histogram and modulus.
        let pi1 = HistogramProjection(Histogram::of(&x));
        let pi2 = ModulusProjection(modulus_of(&x));
        let map = DifferenceMap::new(beta).unwrap();
        let (next, e) = map.step(&pi1, &pi2, &x).unwrap();
        prop_assert!(e <= 1e-10);
        prop_assert!(next.distance(&x) <= 1e-10);
    }
}
