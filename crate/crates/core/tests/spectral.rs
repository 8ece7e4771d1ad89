use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;

use shockstab_core::spectral::{
    fourier_symbol_spectrum, hf_expansion, spatial_projectors, symbol_abscissa_sup, symbol_eigenvalues, SpectralDecomposition,
};
use shockstab_core::system_model::{appendix_3x3_convection, appendix_3x3_source};
use shockstab_core::Error;

fn pair(speeds: &[f64], p: &[f64], g: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = speeds.len();
    let p = DMatrix::from_row_slice(n, n, p) + DMatrix::identity(n, n);
    let a = p.clone().try_inverse().unwrap() * DMatrix::from_diagonal(&DVector::from_vec(speeds.to_vec())) * p;
    (a, DMatrix::from_row_slice(n, n, g))
}

fn distinct(speeds: &[f64]) -> bool {
    speeds.iter().all(|s| s.abs() > 0.1) && speeds.iter().enumerate().all(|(i, s)| speeds[..i].iter().all(|t| (t - s).abs() > 0.1))
}

#[test]
fn decoupled_symbol_is_explicit() {
    let d = [1.0, -2.0, 0.5];
    let rho = [0.3, 0.7, 1.0];
    let a = DMatrix::from_diagonal(&DVector::from_vec(d.to_vec()));
    let g = -DMatrix::from_diagonal(&DVector::from_vec(rho.to_vec()));
    for xi in [-7.0, -0.3, 0.0, 2.5] {
        let mut ev = symbol_eigenvalues(&a, &g, xi).unwrap();
        ev.sort_by(|x, y| x.re.partial_cmp(&y.re).unwrap());
        let mut want: Vec<Complex64> = (0..3).map(|j| Complex64::new(-rho[j], -d[j] * xi)).collect();
        want.sort_by(|x, y| x.re.partial_cmp(&y.re).unwrap());
        for (e, w) in ev.iter().zip(&want) {
            assert!((e - w).norm() < 1e-12, "{e} vs {w}");
        }
    }
}

#[test]
fn appendix_symbol_is_stable_with_unit_high_frequency_damping() {
    let a = appendix_3x3_convection();
    let g = appendix_3x3_source(0.0);
    let xi: Vec<f64> = (-400..=400).map(|k| k as f64 * 0.05).collect();
    let s = fourier_symbol_spectrum(&a, &g, &xi).unwrap();
    assert!((s.hf_limit + 1.0).abs() < 1e-14);
    assert!(s.max_re < 0.0 && s.max_re > -1.0, "{}", s.max_re);
    assert!(s.below(0.3) && !s.below(0.4));
    let sup = symbol_abscissa_sup(&a, &g, 2000).unwrap();
    assert!(sup >= s.max_re - 1e-9);
}

#[test]
fn repeated_speeds_are_rejected() {
    let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0]));
    let g = -DMatrix::identity(2, 2);
    assert!(matches!(SpectralDecomposition::new(&a, &g), Err(Error::NotStrictlyHyperbolic(_))));
    let rot = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
    assert!(matches!(SpectralDecomposition::new(&rot, &g), Err(Error::NotStrictlyHyperbolic(_))));
}

#[test]
fn dichotomy_fails_on_the_essential_spectrum() {
    // -rho - i d xi hits lambda = -0.5 at xi = 0
    let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
    let g = DMatrix::from_diagonal(&DVector::from_vec(vec![-0.5, -2.0]));
    assert!(matches!(spatial_projectors(&a, &g, Complex64::new(-0.5, 0.0)), Err(Error::NoDichotomy { .. })));
}

#[test]
fn high_frequency_remainder_is_second_order() {
    let dec = SpectralDecomposition::new(&appendix_3x3_convection(), &appendix_3x3_source(0.0)).unwrap();
    let hf = hf_expansion(&dec).unwrap();
    assert!((hf.first_order_slope + 1.0).abs() < 0.05, "{}", hf.first_order_slope);
    assert!(hf.remainder_slope < -1.9, "{}", hf.remainder_slope);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn compensator_identities(
        speeds in prop::collection::vec(-4.0..4.0_f64, 3).prop_filter("distinct", |s| distinct(s)),
        p in prop::collection::vec(-0.3..0.3_f64, 9),
        g in prop::collection::vec(-2.0..2.0_f64, 9),
    ) {
        let (a, g) = pair(&speeds, &p, &g);
        let dec = SpectralDecomposition::new(&a, &g).unwrap();
        prop_assert!(dec.reconstruction_error(&a) < 1e-12);
        prop_assert!(dec.compensator_residual() <= 1e-12);
        prop_assert!(dec.q_identity_residual() < 1e-12);
        prop_assert!(dec.d.windows(2).all(|w| w[0] < w[1]));
        for j in 0..3 {
            prop_assert!((dec.gamma[j] + dec.rho[j]).abs() == 0.0);
            prop_assert!(dec.q_comp[(j, j)] == 0.0);
        }
    }

    #[test]
    fn spatial_projectors_split_the_space(
        speeds in prop::collection::vec(-3.0..3.0_f64, 3).prop_filter("distinct", |s| distinct(s)),
        re in 0.1..3.0_f64,
        im in -5.0..5.0_f64,
    ) {
        let a = DMatrix::from_diagonal(&DVector::from_vec(speeds.clone()));
        let g = -DMatrix::identity(3, 3) * 0.5 + DMatrix::from_fn(3, 3, |i, j| if i == j { 0.0 } else { 0.1 });
        let d = spatial_projectors(&a, &g, Complex64::new(re, im)).unwrap();
        let id = DMatrix::<Complex64>::identity(3, 3);
        prop_assert!((&d.pi_s + &d.pi_u - &id).norm() < 1e-9);
        prop_assert!((&d.pi_s * &d.pi_s - &d.pi_s).norm() < 1e-9);
        // to the right of the essential spectrum, decaying modes are the positive speeds
        prop_assert_eq!(d.k_s(), speeds.iter().filter(|s| **s > 0.0).count());
    }

    #[test]
    fn abscissa_tends_to_max_gamma(
        speeds in prop::collection::vec(-3.0..3.0_f64, 2).prop_filter("distinct", |s| distinct(s)),
        g in prop::collection::vec(-2.0..2.0_f64, 4),
    ) {
        let a = DMatrix::from_diagonal(&DVector::from_vec(speeds));
        let g = DMatrix::from_row_slice(2, 2, &g);
        let dec = SpectralDecomposition::new(&a, &g).unwrap();
        let gmax = dec.gamma.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let far = symbol_eigenvalues(&a, &g, 1e6).unwrap().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!((far - gmax).abs() < 1e-5, "{} vs {}", far, gmax);
        prop_assert!(symbol_abscissa_sup(&a, &g, 500).unwrap() >= gmax - 1e-9);
    }
}
