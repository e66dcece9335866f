//! Property tests over randomly drawn parameter points.

use num_complex::Complex64;
use proptest::prelude::*;

use seqar::polyroots::{
    char_roots, classify_region, factor_unit_roots, theta_from_roots, ParamVector, RegionClass,
    DEFAULT_UNIT_TOL,
};

/// Real or conjugate-pair roots safely inside the unit disk.
fn stable_roots(p: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((0.05f64..0.85, 0.05f64..3.0, any::<bool>(), any::<bool>()), p)
        .prop_map(move |seeds| {
            let mut roots = Vec::with_capacity(p);
            for (r, angle, real, neg) in seeds {
                let left = p - roots.len();
                if left == 0 {
                    break;
                }
                if real || left < 2 {
                    roots.push(Complex64::new(if neg { -r } else { r }, 0.0));
                } else {
                    roots.push(Complex64::from_polar(r, angle));
                    roots.push(Complex64::from_polar(r, -angle));
                }
            }
            while roots.len() < p {
                roots.push(Complex64::new(0.1, 0.0));
            }
            roots
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stable_roots_classify_stable(roots in stable_roots(4)) {
        let theta = theta_from_roots(&roots).unwrap();
        let rs = char_roots(&theta, DEFAULT_UNIT_TOL).unwrap();
        prop_assert!(matches!(classify_region(&rs), RegionClass::Stable));
    }

    #[test]
    fn factorization_reexpands_to_char_poly(
        roots in stable_roots(3),
        unit_neg in any::<bool>(),
        phi in 0.3f64..2.8,
        with_pair in any::<bool>(),
    ) {
        let mut all = roots;
        if unit_neg {
            all.push(Complex64::new(-1.0, 0.0));
        } else {
            all.push(Complex64::new(1.0, 0.0));
        }
        if with_pair {
            all.push(Complex64::from_polar(1.0, phi));
            all.push(Complex64::from_polar(1.0, -phi));
        }
        let theta = theta_from_roots(&all).unwrap();
        let fac = factor_unit_roots(&theta, 1e-6).unwrap();
        let rebuilt = fac.expand();
        let want = theta.char_poly();
        prop_assert_eq!(rebuilt.len(), want.len());
        for (a, b) in rebuilt.iter().zip(want.iter()) {
            prop_assert!((a - b).abs() < 1e-10, "coefficient {a} vs {b}");
        }
    }

    #[test]
    fn root_finder_agrees_with_companion_eigenvalues(roots in stable_roots(5)) {
        let theta = theta_from_roots(&roots).unwrap();
        let rs = char_roots(&theta, DEFAULT_UNIT_TOL).unwrap();
        let comp = seqar::polyroots::companion_matrix(&theta);
        let mut eig: Vec<Complex64> = comp.complex_eigenvalues().iter().copied().collect();
        let mut mine = rs.expanded();
        let key = |z: &Complex64| (z.re, z.im);
        eig.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        mine.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        for (a, b) in mine.iter().zip(eig.iter()) {
            prop_assert!((a - b).norm() < 1e-6, "{a} vs {b}");
        }
    }
}
