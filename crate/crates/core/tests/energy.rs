use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use shockstab_core::energy::{
    dissipation_monitor, functional_boundary_split, functional_e1, functional_e2, monitored_energy, theta_prime_min, EnergyConfig, EnergyFrame,
    InterfaceSide,
};
use shockstab_core::green::{simpson, Grid, SideField};
use shockstab_core::simulate::{derivative, simulate_constant, SimConfig};
use shockstab_core::system_model::{appendix_3x3, appendix_3x3_quadratic, burgers_bistable, decoupled, ibvp_2x2};
use shockstab_core::Error;

fn grid() -> Grid {
    Grid::spanning(-5.0, 5.0, 0.01).unwrap()
}

fn field(coef: &[f64]) -> SideField {
    let c = coef.to_vec();
    SideField::from_fn(grid(), c.len(), move |x| {
        DVector::from_iterator(c.len(), c.iter().enumerate().map(|(i, a)| a * (-(x - 0.3 * i as f64).powi(2)).exp()))
    })
}

fn linear_cfg() -> EnergyConfig {
    EnergyConfig { nonlinear: false, ..Default::default() }
}

fn appendix_frame() -> EnergyFrame {
    EnergyFrame::of_system(&appendix_3x3(), &DVector::zeros(3), 0.0, InterfaceSide::None).unwrap()
}

#[test]
fn zero_field_has_zero_energy() {
    let f = appendix_frame();
    let z = SideField::zeros(grid(), 3);
    let frames = std::slice::from_ref(&f);
    let cfg = EnergyConfig::default();
    assert_eq!(functional_e1(frames, std::slice::from_ref(&z), &cfg).unwrap(), 0.0);
    assert_eq!(functional_e2(frames, std::slice::from_ref(&z), &cfg).unwrap(), 0.0);
}

#[test]
fn decoupled_energy_collapses_to_weighted_norms() {
    let sys = decoupled(&[1.0, -2.0], &[0.5, 0.5]);
    let f = EnergyFrame::of_system(&sys, &DVector::zeros(2), 0.0, InterfaceSide::None).unwrap();
    assert_eq!(f.q_norm(), 0.0);
    assert_eq!(f.vartheta_min(), 1.0);
    let v = field(&[1.0, -0.4]);
    let dv = derivative(&v);
    let e1 = functional_e1(std::slice::from_ref(&f), std::slice::from_ref(&v), &linear_cfg()).unwrap();
    let dens = |g: &SideField| -> Vec<f64> { (0..g.grid.len).map(|k| g.at(k).norm_squared()).collect() };
    let want = 0.5 * simpson(&dens(&dv), v.grid.h) + 0.5 * simpson(&dens(&v), v.grid.h);
    assert!((e1 - want).abs() < 1e-8 * want, "{e1} vs {want}");
}

#[test]
fn vartheta_below_the_minimum_is_rejected() {
    let f = appendix_frame();
    assert!(f.q_norm() > 0.0);
    let cfg = EnergyConfig { vartheta: Some(0.5 * f.vartheta_min()), ..linear_cfg() };
    let v = field(&[1.0, 0.0, 0.0]);
    assert!(matches!(functional_e1(&[f], &[v], &cfg), Err(Error::Config(_))));
}

#[test]
fn large_states_leave_the_chart() {
    let f = EnergyFrame::of_system(&appendix_3x3_quadratic(1.0), &DVector::zeros(3), 0.0, InterfaceSide::None).unwrap();
    assert!(f.chart(&DVector::from_vec(vec![1e-3, 0.0, 0.0])).is_ok());
    // speeds 1 + u1, 3 + u2, 2 + u3 collide
    assert!(matches!(f.chart(&DVector::from_vec(vec![0.0, -0.9, 0.0])), Err(Error::OutOfChart(_))));
}

#[test]
fn split_functional_with_unit_weight_is_e1() {
    let sys = ibvp_2x2();
    let f = EnergyFrame::of_system(&sys, &DVector::zeros(2), 0.0, InterfaceSide::Left).unwrap();
    assert_eq!(f.outgoing, vec![0]);
    let v = SideField::from_fn(Grid::spanning(0.0, 6.0, 0.01).unwrap(), 2, |x| DVector::from_vec(vec![(-x).exp(), x * (-x).exp()]));
    let frames = std::slice::from_ref(&f);
    let fields = std::slice::from_ref(&v);
    let e1 = functional_e1(frames, fields, &linear_cfg()).unwrap();
    let s1 = functional_boundary_split(frames, fields, 1.0, &linear_cfg()).unwrap();
    assert!((e1 - s1).abs() < 1e-14 * e1.abs());
    let s4 = functional_boundary_split(frames, fields, 4.0, &linear_cfg()).unwrap();
    assert!(s4 > s1);
    assert!(functional_boundary_split(frames, fields, 0.5, &linear_cfg()).is_err());
}

#[test]
fn theta_prime_for_the_half_line() {
    let f = EnergyFrame::of_system(&ibvp_2x2(), &DVector::zeros(2), 0.0, InterfaceSide::Left).unwrap();
    let b = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
    // u1 = phi does not involve the outgoing field: no coupling
    assert_eq!(theta_prime_min(&f, &b).unwrap(), 1.0);
    let coupled = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
    // 2 |d_in| |K|^2 / c = 2 * 1 * 4 / 1
    assert!((theta_prime_min(&f, &coupled).unwrap() - 8.0).abs() < 1e-12);
    assert!(theta_prime_min(&f, &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0])).is_err());
}

#[test]
fn decoupled_monitor_needs_no_constant() {
    let sys = decoupled(&[1.0, -1.5], &[0.6, 0.9]);
    let cfg = SimConfig { length: 10.0, h: 0.02, t_final: 3.0, snapshot_stride: 5, ..Default::default() };
    let traj = simulate_constant(&sys, &DVector::zeros(2), &|x| DVector::from_vec(vec![(-x * x).exp(), 0.5 * (-(x - 1.0).powi(2)).exp()]), &cfg).unwrap();
    let frames = [EnergyFrame::of_system(&sys, &DVector::zeros(2), 0.0, InterfaceSide::None).unwrap()];
    let rep = dissipation_monitor(&traj, &frames, &EnergyConfig { alpha_prime: 0.55, ..linear_cfg() }).unwrap();
    assert!(rep.pass && rep.c_fit == 0.0);
    // the second-order part alone decays at least at 2 alpha'
    let cfg2 = EnergyConfig { alpha_prime: 0.55, ..linear_cfg() };
    let e2: Vec<f64> = traj.snapshots.iter().map(|s| functional_e2(&frames, &s.fields, &cfg2).unwrap()).collect();
    for (k, s) in traj.snapshots.iter().enumerate() {
        assert!(e2[k] <= e2[0] * (-1.1 * s.t).exp() * (1.0 + 1e-6), "t = {}", s.t);
    }
    // too few snapshots
    let short = SimConfig { t_final: 0.05, ..cfg };
    let traj = simulate_constant(&sys, &DVector::zeros(2), &|x| DVector::from_vec(vec![(-x * x).exp(), 0.0]), &short).unwrap();
    assert!(matches!(dissipation_monitor(&traj, &frames, &cfg2), Err(Error::InsufficientSampling(_))));
}

#[test]
fn shock_frames_mark_outgoing_characteristics() {
    let (sys, shock) = burgers_bistable(0.25);
    let plus = EnergyFrame::of_system(&sys, &shock.up(), shock.sigma, InterfaceSide::Left).unwrap();
    let minus = EnergyFrame::of_system(&sys, &shock.um(), shock.sigma, InterfaceSide::Right).unwrap();
    // both sides move into the shock
    assert_eq!(plus.outgoing, vec![0]);
    assert_eq!(minus.outgoing, vec![0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn linear_functionals_are_quadratic(coef in prop::collection::vec(-2.0..2.0_f64, 3), s in -3.0..3.0_f64) {
        let f = appendix_frame();
        let v = field(&coef);
        let sv = field(&coef.iter().map(|c| c * s).collect::<Vec<_>>());
        let frames = std::slice::from_ref(&f);
        for func in [functional_e1, functional_e2] {
            let a = func(frames, std::slice::from_ref(&v), &linear_cfg()).unwrap();
            let b = func(frames, std::slice::from_ref(&sv), &linear_cfg()).unwrap();
            prop_assert!((b - s * s * a).abs() <= 1e-10 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn energy_is_equivalent_to_the_h2_norm(coef in prop::collection::vec(-2.0..2.0_f64, 3)) {
        prop_assume!(coef.iter().any(|c| c.abs() > 0.1));
        let f = appendix_frame();
        let v = field(&coef);
        let frames = std::slice::from_ref(&f);
        let e = monitored_energy(frames, std::slice::from_ref(&v), &linear_cfg()).unwrap();
        let dv = derivative(&v);
        let ddv = derivative(&dv);
        let h = v.grid.h;
        let sq = |g: &SideField| simpson(&(0..g.grid.len).map(|k| g.at(k).norm_squared()).collect::<Vec<_>>(), h);
        let norm = sq(&v) + sq(&dv) + sq(&ddv);
        // coercive at vartheta = 1 + 2|Q|^2 and bounded by the form's largest weight
        let p = &f.decomp.p;
        let pn = p.norm().powi(2);
        let pinv = f.decomp.p_inv.norm().powi(2);
        prop_assert!(e > 0.0);
        prop_assert!(e >= 0.25 * norm / pinv * 0.99, "{} vs {}", e, norm);
        prop_assert!(e <= (f.vartheta_min() + 1.0 + 2.0 * f.q_norm()) * pn * norm);
    }
}
