use num_complex::Complex64;
use proptest::prelude::*;

use polyloc::decomposition::{partition_residual, psi_j, CutoffFamily};
use polyloc::expansion::partial_integral;
use polyloc::field::{direct_transform_reference, FourierEngine, GridSpec, SpatialField};
use polyloc::symbols::SymbolParams;

fn field_strategy() -> impl Strategy<Value = SpatialField> {
    (1usize..=2, prop::sample::select(vec![8usize, 16, 32]))
        .prop_flat_map(|(dims, n)| {
            let len = n.pow(dims as u32);
            (
                Just((dims, n)),
                prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), len),
            )
        })
        .prop_map(|((dims, n), parts)| {
            let grid = GridSpec::new(dims, n, 8.0).unwrap();
            let samples = parts.into_iter().map(|(a, b)| Complex64::new(a, b)).collect();
            SpatialField::new(grid, samples).unwrap()
        })
}

fn max_diff(a: &SpatialField, b: &SpatialField) -> f64 {
    a.samples()
        .iter()
        .zip(b.samples())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn parseval_roundtrip_and_direct(f in field_strategy()) {
        let engine = FourierEngine::new(*f.spec());
        let c = engine.forward(&f).unwrap();
        let norm = f.l2_norm();
        prop_assert!((c.l2_norm() - norm).abs() <= 1e-12 * norm);
        let back = engine.inverse(&c).unwrap();
        prop_assert!(max_diff(&back, &f) <= 1e-12);
        let direct = direct_transform_reference(&f).unwrap();
        let worst = c.coeffs().iter().zip(direct.coeffs()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!(worst <= 1e-10);
    }

    #[test]
    fn means_contract_and_projections_are_idempotent(
        f in field_strategy(),
        lambda in 0.1f64..200.0,
        tau in -5.0f64..5.0,
        m in 1u32..=2,
    ) {
        let p = SymbolParams::new(m, lambda, tau).unwrap();
        let e = partial_integral(&f, &p).unwrap();
        prop_assert!(e.l2_norm() <= f.l2_norm() * (1.0 + 1e-12));

        let q = SymbolParams::new(m, lambda, 0.0).unwrap();
        let once = partial_integral(&f, &q).unwrap();
        let twice = partial_integral(&once, &q).unwrap();
        prop_assert!(max_diff(&once, &twice) <= 1e-12);
    }

    #[test]
    fn translation_covariance(f in field_strategy(), s0 in -5i64..5, s1 in -5i64..5, lambda in 0.5f64..50.0) {
        let shift: Vec<i64> = [s0, s1][..f.spec().dims()].to_vec();
        let p = SymbolParams::new(1, lambda, 1.0).unwrap();
        let a = partial_integral(&f.shifted(&shift).unwrap(), &p).unwrap();
        let b = partial_integral(&f, &p).unwrap().shifted(&shift).unwrap();
        prop_assert!(max_diff(&a, &b) <= 1e-12);
    }

    #[test]
    fn partition_telescopes(r in 0.05f64..2.95, x in -3000.0f64..3000.0, y in -3000.0f64..3000.0, levels in 1u32..=20) {
        let fam = CutoffFamily::new(r).unwrap();
        prop_assert!(partition_residual(&fam, &[x, y], levels).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn psi_j_lives_on_its_annulus(r in 0.05f64..2.95, rho in 0.0f64..200.0, j in 1u32..=6) {
        let fam = CutoffFamily::new(r).unwrap();
        let v = psi_j(&fam, j, &[rho]).unwrap();
        let scale = 2f64.powi(j as i32 - 1);
        let inside = rho > fam.inner() * scale && rho < fam.outer() * 2.0 * scale;
        prop_assert!((0.0..=1.0).contains(&v));
        if !inside {
            prop_assert_eq!(v, 0.0);
        }
    }
}
