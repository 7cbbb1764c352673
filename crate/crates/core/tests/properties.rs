use std::f64::consts::PI;
use std::sync::Arc;

use proptest::prelude::*;

use oldroyd::monitor::{detect_stop, EnergyRecord};
use oldroyd::spectral::random::{random_scalar, random_solenoidal};
use oldroyd::spectral::{hs_norm, hs_norm_sq, leray_project, truncate, Field, SpectralGrid, VectorField};

fn grid() -> Arc<SpectralGrid> {
    SpectralGrid::new(2, 16, 2.0 * PI, 5.0).unwrap()
}

fn coeff_bits<F: Field>(f: &F) -> Vec<u64> {
    f.components().iter().flatten().flat_map(|z| [z.re.to_bits(), z.im.to_bits()]).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn truncation_is_an_exact_projection(seed in any::<u64>(), alpha in 1.0f64..4.0, n in 0.5f64..8.0, m in 0.5f64..8.0, s in -1.0f64..3.0) {
        let f = random_scalar(&grid(), alpha, seed);
        let tn = truncate(&f, n);
        prop_assert_eq!(coeff_bits(&truncate(&tn, n)), coeff_bits(&tn));
        prop_assert_eq!(coeff_bits(&truncate(&truncate(&f, m), n)), coeff_bits(&truncate(&f, n.min(m))));
        prop_assert!(hs_norm_sq(&tn, s) <= hs_norm_sq(&f, s));
    }

    #[test]
    fn leray_output_is_solenoidal_and_idempotent(seed in any::<u64>(), alpha in 1.0f64..4.0) {
        let g = grid();
        let comps = (0..2).map(|a| random_scalar(&g, alpha, seed ^ a).coeffs().to_vec()).collect();
        let w = VectorField::from_components(&g, comps).unwrap();
        let p = leray_project(&w);
        prop_assert!(p.divergence_defect() <= 1e-12 * hs_norm(&w, 0.0).max(1.0));
        let pp = leray_project(&p);
        prop_assert!(hs_norm(&pp.sub(&p), 0.0) <= 1e-14 * hs_norm(&p, 0.0));
        prop_assert!(hs_norm(&p, 0.0) <= hs_norm(&w, 0.0) * (1.0 + 1e-15));
    }

    #[test]
    fn interpolation_with_unit_constant(seed in any::<u64>(), alpha in 2.0f64..5.0, s in 0.1f64..2.5, frac in 0.0f64..1.0) {
        let f = random_solenoidal(&grid(), alpha, seed);
        let sp = s * frac;
        let th = sp / s;
        let lhs = hs_norm(&f, sp);
        let rhs = hs_norm(&f, 0.0).powf(1.0 - th) * hs_norm(&f, s).powf(th);
        prop_assert!(lhs <= rhs * (1.0 + 1e-12), "{} > {}", lhs, rhs);
    }

    #[test]
    fn lower_threshold_never_stops_later(es in prop::collection::vec(0.0f64..10.0, 1..40), n1 in 0.0f64..10.0, dn in 0.0f64..5.0) {
        let records: Vec<EnergyRecord> = es
            .iter()
            .enumerate()
            .map(|(i, &e)| EnergyRecord { t: i as f64 * 0.1, v_hs2: 0.0, tau_hs2: 0.0, gradv_hs2: 0.0, cum_diss: 0.0, e_n: e, sym_defect: 0.0 })
            .collect();
        let t = |n: f64| detect_stop(&records, n).map(|e| e.t_stop).unwrap_or(f64::INFINITY);
        prop_assert!(t(n1) <= t(n1 + dn));
    }
}
