use std::f64::consts::PI;

use proptest::prelude::*;
use thomas_lab::cluster::hurwitz_zeta;
use thomas_lab::cross_section::{BoundaryCondition, CrossSectionSpec};
use thomas_lab::free_operator::QuasiMomentum;
use thomas_lab::galerkin::{assemble, assemble_thomas, band_functions, resolvent_norm, Model, Truncation};
use thomas_lab::lattice::Lattice;
use thomas_lab::potential::{split_by_level, PotentialSpec};
use thomas_lab::Complex64;

fn layer(bc: BoundaryCondition) -> CrossSectionSpec {
    CrossSectionSpec::Interval { length: PI, bc }
}

fn mathieu(amplitude: f64) -> Model {
    let v = PotentialSpec::cosine(1, 0, amplitude).unwrap();
    Model::new(Lattice::integer(1), layer(BoundaryCondition::Neumann), v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn free_resolvent_obeys_line_bound(tau in 1.0f64..40.0, dirichlet in any::<bool>()) {
        let bc = if dirichlet { BoundaryCondition::Dirichlet } else { BoundaryCondition::Neumann };
        let model = Model::free(Lattice::integer(1), layer(bc)).unwrap();
        let qm = QuasiMomentum::new(&model.lattice, &[0.0], tau).unwrap();
        let tr = Truncation::new(&model.lattice, &model.cross_section, &qm, 4.0 * tau * tau + 100.0).unwrap();
        let mat = assemble_thomas(&model, &tr, &qm, Complex64::new(0.0, 0.0)).unwrap();
        let norm = resolvent_norm(&mat).unwrap();
        prop_assert!(norm * 2.0 * PI * tau <= 1.0 + 1e-12, "norm·2πτ = {}", norm * 2.0 * PI * tau);
    }

    #[test]
    fn real_fiber_is_hermitian(shift in -PI..PI, amplitude in -3.0f64..3.0) {
        let model = mathieu(amplitude);
        let qm = QuasiMomentum::real(&model.lattice, &[0.0], shift).unwrap();
        let tr = Truncation::new(&model.lattice, &model.cross_section, &qm, 200.0).unwrap();
        let mat = assemble(&model, &tr, &qm).unwrap();
        prop_assert!(mat.hermiticity_defect() < 1e-12);
    }

    #[test]
    fn bands_are_even_and_periodic_in_shift(shift in 0.0f64..PI, amplitude in 0.1f64..3.0) {
        let model = mathieu(amplitude);
        let t = band_functions(&model, &[0.0], &[shift, -shift, shift + 2.0 * PI], 4, 300.0).unwrap();
        for b in 0..4 {
            let v = t.band(b);
            prop_assert!((v[0] - v[1]).abs() < 1e-9, "band {b}: {v:?}");
            prop_assert!((v[0] - v[2]).abs() < 1e-9, "band {b}: {v:?}");
        }
    }

    #[test]
    fn level_split_reconstructs(values in prop::collection::vec(-5.0f64..5.0, 1..64), delta in 0.01f64..2.0) {
        let weights = vec![1.0 / values.len() as f64; values.len()];
        let s = split_by_level(&weights, &values, 2.0, delta).unwrap();
        for i in 0..values.len() {
            prop_assert_eq!(s.v1[i] + s.v2[i], values[i]);
            prop_assert!(s.v2[i].abs() <= s.level);
        }
        prop_assert!(s.norm_v1 <= delta * (1.0 + 1e-12));
    }

    #[test]
    fn hurwitz_recurrence(s in 1.5f64..6.0, a in 0.2f64..20.0) {
        let lhs = hurwitz_zeta(s, a) - hurwitz_zeta(s, a + 1.0);
        let rhs = a.powf(-s);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1e-300) + 1e-15, "{lhs} vs {rhs}");
    }
}

#[test]
fn zeta_two_is_basel() {
    assert!((hurwitz_zeta(2.0, 1.0) - PI * PI / 6.0).abs() < 1e-14);
}
