use nalgebra::DVector;
use num_complex::Complex64;
use proptest::prelude::*;

use shockstab_core::lopatinskii::{
    best_certificate_ibvp, best_certificate_shock, certify_gap, certify_gap_constant, count_roots, evans_shock, lax_check, lattice_alpha,
    lopatinskii_det_shock, rectangle, ContourPolicy, ShockSpectral,
};
use shockstab_core::system_model::{appendix_3x3_convection, appendix_3x3_source, burgers_bistable, evaluate_linearization, ibvp_2x2, linearize_constant};
use shockstab_core::Error;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[test]
fn burgers_shock_is_lax_with_no_free_modes() {
    let (sys, shock) = burgers_bistable(0.25);
    let lin = evaluate_linearization(&sys, &shock).unwrap();
    let lax = lax_check(&lin).unwrap();
    assert_eq!((lax.k_plus, lax.k_minus, lax.incoming_left, lax.incoming_right), (0, 0, 1, 1));
    assert!(lax.is_lax);
}

#[test]
fn burgers_gap_matches_the_smaller_rate() {
    let (sys, shock) = burgers_bistable(0.25);
    let lin = evaluate_linearization(&sys, &shock).unwrap();
    let policy = ContourPolicy::default();
    let ok = certify_gap(&lin, 0.2, &policy).unwrap();
    assert!(ok.granted && ok.winding == 0);
    assert!(matches!(certify_gap(&lin, 0.3, &policy), Err(Error::EssentialSpectrumIntrusion { .. })));
    let best = best_certificate_shock(&lin, &policy).unwrap();
    assert!((best.alpha - 0.24).abs() < 1e-12, "{}", best.alpha);
}

#[test]
fn scalar_shock_determinant_does_not_depend_on_lambda() {
    // n = 1: no decaying modes, the map reduces to -[U] psi
    let (sys, shock) = burgers_bistable(0.25);
    let lin = evaluate_linearization(&sys, &shock).unwrap();
    let sp = ShockSpectral::new(&lin).unwrap();
    let d0 = lopatinskii_det_shock(&lin, c(0.5, 0.0)).unwrap().det;
    let e0 = evans_shock(&sp, c(0.5, 0.0)).unwrap();
    assert!(d0.norm() > 0.1 && e0.norm() > 0.1);
    for lam in [c(-0.1, 3.0), c(2.0, -7.0), c(40.0, 1.0)] {
        assert!((lopatinskii_det_shock(&lin, lam).unwrap().det - d0).norm() < 1e-12);
        assert!((evans_shock(&sp, lam).unwrap() - e0).norm() < 1e-12);
    }
}

#[test]
fn ibvp_certificate() {
    let lin = linearize_constant(&ibvp_2x2(), &DVector::zeros(2)).unwrap();
    let cert = best_certificate_ibvp(&lin, &ContourPolicy::default()).unwrap();
    assert!(cert.granted);
    assert!((cert.alpha - 0.49).abs() < 1e-12, "{}", cert.alpha);
}

#[test]
fn appendix_whole_line_certificate() {
    let a = appendix_3x3_convection();
    let g = appendix_3x3_source(0.0);
    assert!(certify_gap_constant(&a, &g, 0.33).unwrap().granted);
    assert!(certify_gap_constant(&a, &g, 0.4).is_err());
}

#[test]
fn lattice_keeps_a_safety_margin() {
    assert!((lattice_alpha(0.25) - 0.24).abs() < 1e-12);
    assert!((lattice_alpha(0.2551) - 0.25).abs() < 1e-12);
    assert!(lattice_alpha(0.336) <= 0.336 - 0.005);
}

#[test]
fn zero_on_the_contour_is_an_error() {
    let r = count_roots(|z| Ok(z - c(1.0, 0.0)), &rectangle(1.0, 2.0, -1.0, 1.0), &ContourPolicy::default());
    assert!(matches!(r, Err(Error::ZeroOnContour { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn winding_counts_roots_inside(roots in prop::collection::vec((-3.0..3.0_f64, -3.0..3.0_f64), 1..5)) {
        let (re0, re1, im0, im1) = (-1.5, 1.7, -1.2, 2.1);
        let near_edge = roots.iter().any(|&(x, y)| {
            ((x - re0).abs() < 0.05 || (x - re1).abs() < 0.05) && y > im0 - 0.05 && y < im1 + 0.05
                || ((y - im0).abs() < 0.05 || (y - im1).abs() < 0.05) && x > re0 - 0.05 && x < re1 + 0.05
        });
        prop_assume!(!near_edge);
        let inside = roots.iter().filter(|&&(x, y)| x > re0 && x < re1 && y > im0 && y < im1).count() as i64;
        let zs: Vec<Complex64> = roots.iter().map(|&(x, y)| c(x, y)).collect();
        let f = move |z: Complex64| Ok(zs.iter().fold(c(1.0, 0.0), |acc, r| acc * (z - r)));
        let w = count_roots(f, &rectangle(re0, re1, im0, im1), &ContourPolicy::default()).unwrap();
        prop_assert_eq!(w.winding, inside);
    }

    #[test]
    fn bistable_gaps_below_the_essential_bound(theta in 0.1..0.45_f64) {
        let (sys, shock) = burgers_bistable(theta);
        let lin = evaluate_linearization(&sys, &shock).unwrap();
        // rates theta at u = 0 and 1 - theta at u = 1
        let bound = theta.min(1.0 - theta);
        let cert = certify_gap(&lin, 0.9 * bound, &ContourPolicy::default()).unwrap();
        prop_assert!(cert.granted);
        prop_assert!(certify_gap(&lin, 1.05 * bound, &ContourPolicy::default()).is_err());
    }
}
