//! Balance laws `U_t + A(U)_x = g(U)`, candidate waves and their linearizations.
//!
//! A Riemann shock is a pair of equilibria `g(U_-) = g(U_+) = 0` joined by
//! the Rankine–Hugoniot relation at speed `sigma`. Writing the perturbed
//! solution in the moving frame `x - sigma t - psi(t)`, the jump condition
//! becomes the map
//!
//! ```text
//!   B(Phi, W+, W-) = -Phi (W+ - W-) + A(W+) - A(W-)
//! ```
//!
//! whose linearization at `(sigma, U+, U-)` is
//! `-Phi [U] + A+ W+ - A- W-` with `A± = DA(U±) - sigma I`.

use std::fmt::Debug;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{RMat, RVec};

/// Flux and source of a system of balance laws with their Jacobians.
pub trait BalanceLaw: Send + Sync + Debug {
    fn dim(&self) -> usize;
    fn flux(&self, u: &RVec) -> RVec;
    fn flux_jacobian(&self, u: &RVec) -> RMat;
    fn source(&self, u: &RVec) -> RVec;
    fn source_jacobian(&self, u: &RVec) -> RMat;
}

/// Boundary operator `U -> B[U]` of an initial boundary value problem.
pub trait BoundaryMap: Send + Sync + Debug {
    fn rows(&self) -> usize;
    fn eval(&self, u: &RVec) -> RVec;
    fn jacobian(&self, u: &RVec) -> RMat;
}

/// The model under study: a balance law and, for half-line problems, a boundary map.
#[derive(Debug, Clone)]
pub struct SystemDescriptor {
    pub name: String,
    pub law: Arc<dyn BalanceLaw>,
    pub boundary: Option<Arc<dyn BoundaryMap>>,
}

impl SystemDescriptor {
    pub fn new(name: impl Into<String>, law: Arc<dyn BalanceLaw>) -> Self {
        SystemDescriptor { name: name.into(), law, boundary: None }
    }

    pub fn with_boundary(mut self, b: Arc<dyn BoundaryMap>) -> Self {
        self.boundary = Some(b);
        self
    }

    pub fn n(&self) -> usize {
        self.law.dim()
    }

    pub fn flux(&self, u: &RVec) -> RVec {
        self.law.flux(u)
    }

    pub fn flux_jacobian(&self, u: &RVec) -> RMat {
        self.law.flux_jacobian(u)
    }

    pub fn source(&self, u: &RVec) -> RVec {
        self.law.source(u)
    }

    pub fn source_jacobian(&self, u: &RVec) -> RMat {
        self.law.source_jacobian(u)
    }

    fn check_dim(&self, u: &RVec, what: &str) -> Result<()> {
        if u.len() != self.n() {
            return Err(Error::InvalidModel(format!(
                "{what} has dimension {} but the system has n = {}",
                u.len(),
                self.n()
            )));
        }
        Ok(())
    }

    /// Largest relative deviation between the analytic Jacobians and centered
    /// differences of step `step`, over the given states.
    pub fn jacobian_fd_error(&self, states: &[RVec], step: f64) -> f64 {
        let mut worst = 0.0_f64;
        for u in states {
            worst = worst.max(fd_rel_error(|v| self.flux(v), &self.flux_jacobian(u), u, step));
            worst = worst.max(fd_rel_error(|v| self.source(v), &self.source_jacobian(u), u, step));
            if let Some(b) = &self.boundary {
                worst = worst.max(fd_rel_error(|v| b.eval(v), &b.jacobian(u), u, step));
            }
        }
        worst
    }
}

/// Relative error of `jac` against a centered difference of `f` at `u`.
pub fn fd_rel_error<F: Fn(&RVec) -> RVec>(f: F, jac: &RMat, u: &RVec, step: f64) -> f64 {
    let fd = fd_jacobian(f, u, step);
    let scale = jac.norm().max(fd.norm()).max(1.0);
    (fd - jac).norm() / scale
}

pub fn fd_jacobian<F: Fn(&RVec) -> RVec>(f: F, u: &RVec, step: f64) -> RMat {
    let n = u.len();
    let f0 = f(u);
    let mut jac = RMat::zeros(f0.len(), n);
    for k in 0..n {
        let mut up = u.clone();
        let mut um = u.clone();
        up[k] += step;
        um[k] -= step;
        let col = (f(&up) - f(&um)) / (2.0 * step);
        jac.set_column(k, &col);
    }
    jac
}

// ---------------------------------------------------------------------------
// polynomial systems

/// One monomial `c * prod_k u_k^{e_k}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub c: f64,
    pub e: Vec<u32>,
}

/// A map `R^n -> R^m` with polynomial components.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyField {
    pub n: usize,
    pub comps: Vec<Vec<Monomial>>,
}

pub const MAX_POLY_DEGREE: u32 = 4;

impl PolyField {
    pub fn new(n: usize, comps: Vec<Vec<Monomial>>) -> Result<Self> {
        for (i, comp) in comps.iter().enumerate() {
            for m in comp {
                if m.e.len() != n {
                    return Err(Error::InvalidModel(format!(
                        "monomial in component {i} has {} exponents, expected {n}",
                        m.e.len()
                    )));
                }
                let deg: u32 = m.e.iter().sum();
                if deg > MAX_POLY_DEGREE {
                    return Err(Error::InvalidModel(format!(
                        "monomial of total degree {deg} in component {i} exceeds {MAX_POLY_DEGREE}"
                    )));
                }
                if !m.c.is_finite() {
                    return Err(Error::InvalidModel(format!("non-finite coefficient in component {i}")));
                }
            }
        }
        Ok(PolyField { n, comps })
    }

    pub fn zero(n: usize, m: usize) -> Self {
        PolyField { n, comps: vec![vec![]; m] }
    }

    pub fn eval(&self, u: &RVec) -> RVec {
        RVec::from_iterator(
            self.comps.len(),
            self.comps.iter().map(|comp| comp.iter().map(|m| m.c * monomial(u, &m.e, None)).sum()),
        )
    }

    pub fn jacobian(&self, u: &RVec) -> RMat {
        let mut jac = RMat::zeros(self.comps.len(), self.n);
        for (i, comp) in self.comps.iter().enumerate() {
            for m in comp {
                for k in 0..self.n {
                    if m.e[k] > 0 {
                        jac[(i, k)] += m.c * f64::from(m.e[k]) * monomial(u, &m.e, Some(k));
                    }
                }
            }
        }
        jac
    }
}

/// `prod u_k^{e_k}`, with the exponent of `drop` lowered by one.
fn monomial(u: &RVec, e: &[u32], drop: Option<usize>) -> f64 {
    let mut p = 1.0;
    for (k, &ek) in e.iter().enumerate() {
        let ek = if Some(k) == drop { ek - 1 } else { ek };
        for _ in 0..ek {
            p *= u[k];
        }
    }
    p
}

/// Balance law with polynomial flux and source, as read from system files.
#[derive(Debug, Clone)]
pub struct PolynomialSystem {
    pub flux: PolyField,
    pub source: PolyField,
}

impl BalanceLaw for PolynomialSystem {
    fn dim(&self) -> usize {
        self.flux.n
    }
    fn flux(&self, u: &RVec) -> RVec {
        self.flux.eval(u)
    }
    fn flux_jacobian(&self, u: &RVec) -> RMat {
        self.flux.jacobian(u)
    }
    fn source(&self, u: &RVec) -> RVec {
        self.source.eval(u)
    }
    fn source_jacobian(&self, u: &RVec) -> RMat {
        self.source.jacobian(u)
    }
}

/// Boundary map with polynomial components.
#[derive(Debug, Clone)]
pub struct PolyBoundary(pub PolyField);

impl BoundaryMap for PolyBoundary {
    fn rows(&self) -> usize {
        self.0.comps.len()
    }
    fn eval(&self, u: &RVec) -> RVec {
        self.0.eval(u)
    }
    fn jacobian(&self, u: &RVec) -> RMat {
        self.0.jacobian(u)
    }
}

/// Linear boundary map `U -> B (U - U_ref)`.
#[derive(Debug, Clone)]
pub struct LinearBoundary {
    pub b: RMat,
    pub u_ref: RVec,
}

impl BoundaryMap for LinearBoundary {
    fn rows(&self) -> usize {
        self.b.nrows()
    }
    fn eval(&self, u: &RVec) -> RVec {
        &self.b * (u - &self.u_ref)
    }
    fn jacobian(&self, _u: &RVec) -> RMat {
        self.b.clone()
    }
}

/// `A(U) = A U + (1/2) (U^T H_i U)_i`, `g(U) = G U`.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub a: RMat,
    pub g: RMat,
    /// Symmetric Hessians of the flux components; empty for a linear flux.
    pub hessians: Vec<RMat>,
}

impl LinearSystem {
    pub fn new(a: RMat, g: RMat) -> Self {
        LinearSystem { a, g, hessians: vec![] }
    }
}

impl BalanceLaw for LinearSystem {
    fn dim(&self) -> usize {
        self.a.nrows()
    }
    fn flux(&self, u: &RVec) -> RVec {
        let mut f = &self.a * u;
        for (i, h) in self.hessians.iter().enumerate() {
            f[i] += 0.5 * u.dot(&(h * u));
        }
        f
    }
    fn flux_jacobian(&self, u: &RVec) -> RMat {
        let mut j = self.a.clone();
        for (i, h) in self.hessians.iter().enumerate() {
            let row = (h * u).transpose();
            for k in 0..j.ncols() {
                j[(i, k)] += row[k];
            }
        }
        j
    }
    fn source(&self, u: &RVec) -> RVec {
        &self.g * u
    }
    fn source_jacobian(&self, _u: &RVec) -> RMat {
        self.g.clone()
    }
}

/// Scalar `u_t + (u^2/2)_x = u (1 - u)(u - theta)`.
#[derive(Debug, Clone)]
pub struct BurgersBistable {
    pub theta: f64,
}

impl BalanceLaw for BurgersBistable {
    fn dim(&self) -> usize {
        1
    }
    fn flux(&self, u: &RVec) -> RVec {
        RVec::from_element(1, 0.5 * u[0] * u[0])
    }
    fn flux_jacobian(&self, u: &RVec) -> RMat {
        RMat::from_element(1, 1, u[0])
    }
    fn source(&self, u: &RVec) -> RVec {
        let x = u[0];
        RVec::from_element(1, x * (1.0 - x) * (x - self.theta))
    }
    fn source_jacobian(&self, u: &RVec) -> RMat {
        // d/du [ -u^3 + (1+theta) u^2 - theta u ]
        let x = u[0];
        RMat::from_element(1, 1, -3.0 * x * x + 2.0 * (1.0 + self.theta) * x - self.theta)
    }
}

// ---------------------------------------------------------------------------
// waves

/// Riemann shock `U(x) = U- (x<0), U+ (x>0)` moving at speed `sigma`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ShockProfile {
    pub u_minus: Vec<f64>,
    pub u_plus: Vec<f64>,
    pub sigma: f64,
    #[serde(default)]
    pub psi0: f64,
}

impl ShockProfile {
    pub fn new(u_minus: &[f64], u_plus: &[f64], sigma: f64) -> Self {
        ShockProfile { u_minus: u_minus.to_vec(), u_plus: u_plus.to_vec(), sigma, psi0: 0.0 }
    }

    pub fn um(&self) -> RVec {
        RVec::from_column_slice(&self.u_minus)
    }

    pub fn up(&self) -> RVec {
        RVec::from_column_slice(&self.u_plus)
    }

    pub fn jump(&self) -> RVec {
        self.up() - self.um()
    }

    /// Checks equilibria and the Rankine–Hugoniot relation to `tol` (relative to the jump).
    pub fn validate(&self, sys: &SystemDescriptor, tol: f64) -> Result<()> {
        let (um, up) = (self.um(), self.up());
        sys.check_dim(&um, "u_minus")?;
        sys.check_dim(&up, "u_plus")?;
        let scale = 1.0 + sys.flux(&up).norm() + sys.flux(&um).norm();
        let gm = sys.source(&um).norm();
        let gp = sys.source(&up).norm();
        if gm > tol * scale || gp > tol * scale {
            return Err(Error::InvalidModel(format!("end states are not equilibria: |g(U-)| = {gm:e}, |g(U+)| = {gp:e}")));
        }
        let rh = rankine_hugoniot_residual(sys, &um, &up, self.sigma)?.norm();
        if rh > tol * scale {
            return Err(Error::InvalidModel(format!("Rankine-Hugoniot residual {rh:e}")));
        }
        Ok(())
    }
}

/// `A(u+) - A(u-) - sigma (u+ - u-)`.
pub fn rankine_hugoniot_residual(sys: &SystemDescriptor, u_minus: &RVec, u_plus: &RVec, sigma: f64) -> Result<RVec> {
    sys.check_dim(u_minus, "u_minus")?;
    sys.check_dim(u_plus, "u_plus")?;
    Ok(sys.flux(u_plus) - sys.flux(u_minus) - (u_plus - u_minus) * sigma)
}

/// The nonlinear jump map and its linearization at the reference shock.
#[derive(Debug, Clone)]
pub struct ShockBoundaryMap {
    pub sys: SystemDescriptor,
    pub n: usize,
    pub sigma: f64,
    pub u_minus: RVec,
    pub u_plus: RVec,
}

impl ShockBoundaryMap {
    /// `-Phi (W+ - W-) + A(W+) - A(W-)`.
    pub fn eval(&self, phi: f64, w_plus: &RVec, w_minus: &RVec) -> RVec {
        self.sys.flux(w_plus) - self.sys.flux(w_minus) - (w_plus - w_minus) * phi
    }

    /// Jacobian of `eval` with respect to `(Phi, W+, W-)` at an arbitrary point, `n x (1+2n)`.
    pub fn jacobian_at(&self, phi: f64, w_plus: &RVec, w_minus: &RVec) -> RMat {
        let n = self.n;
        let mut m = RMat::zeros(n, 1 + 2 * n);
        let jump = w_plus - w_minus;
        for i in 0..n {
            m[(i, 0)] = -jump[i];
        }
        let ap = self.sys.flux_jacobian(w_plus) - RMat::identity(n, n) * phi;
        let am = self.sys.flux_jacobian(w_minus) - RMat::identity(n, n) * phi;
        m.view_mut((0, 1), (n, n)).copy_from(&ap);
        m.view_mut((0, 1 + n), (n, n)).copy_from(&(-am));
        m
    }

    /// The linearized map at `(sigma, U+, U-)`.
    pub fn linearization(&self) -> RMat {
        self.jacobian_at(self.sigma, &self.u_plus, &self.u_minus)
    }

    /// Canonical projection onto the `Phi` slot, `1 x (1+2n)`.
    pub fn proj0(&self) -> RMat {
        let mut m = RMat::zeros(1, 1 + 2 * self.n);
        m[(0, 0)] = 1.0;
        m
    }

    pub fn proj_plus(&self) -> RMat {
        let n = self.n;
        let mut m = RMat::zeros(n, 1 + 2 * n);
        m.view_mut((0, 1), (n, n)).fill_with_identity();
        m
    }

    pub fn proj_minus(&self) -> RMat {
        let n = self.n;
        let mut m = RMat::zeros(n, 1 + 2 * n);
        m.view_mut((0, 1 + n), (n, n)).fill_with_identity();
        m
    }

    pub fn sect0(&self) -> RMat {
        self.proj0().transpose()
    }

    pub fn sect_plus(&self) -> RMat {
        self.proj_plus().transpose()
    }

    pub fn sect_minus(&self) -> RMat {
        self.proj_minus().transpose()
    }
}

/// Constant-coefficient data of the linearized shock problem.
#[derive(Debug, Clone)]
pub struct ShockLinearization {
    pub n: usize,
    pub a_plus: RMat,
    pub a_minus: RMat,
    pub g_plus: RMat,
    pub g_minus: RMat,
    /// `[U]_0 = U+ - U-`.
    pub jump: RVec,
}

impl ShockLinearization {
    pub fn from_matrices(a_plus: RMat, a_minus: RMat, g_plus: RMat, g_minus: RMat, jump: RVec) -> Result<Self> {
        let n = a_plus.nrows();
        for (m, name) in [(&a_plus, "A+"), (&a_minus, "A-"), (&g_plus, "G+"), (&g_minus, "G-")] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::InvalidModel(format!("{name} is {}x{}, expected {n}x{n}", m.nrows(), m.ncols())));
            }
        }
        if jump.len() != n {
            return Err(Error::InvalidModel(format!("jump has length {}, expected {n}", jump.len())));
        }
        Ok(ShockLinearization { n, a_plus, a_minus, g_plus, g_minus, jump })
    }

    /// Matrix of `B(Phi, W+, W-) = -Phi [U] + A+ W+ - A- W-`, `n x (1+2n)`.
    pub fn b_matrix(&self) -> RMat {
        let n = self.n;
        let mut m = RMat::zeros(n, 1 + 2 * n);
        for i in 0..n {
            m[(i, 0)] = -self.jump[i];
        }
        m.view_mut((0, 1), (n, n)).copy_from(&self.a_plus);
        m.view_mut((0, 1 + n), (n, n)).copy_from(&(-&self.a_minus));
        m
    }
}

/// Linearization `(A+, A-, G+, G-, B)` at a shock.
pub fn evaluate_linearization(sys: &SystemDescriptor, shock: &ShockProfile) -> Result<ShockLinearization> {
    let (um, up) = (shock.um(), shock.up());
    sys.check_dim(&um, "u_minus")?;
    sys.check_dim(&up, "u_plus")?;
    let n = sys.n();
    let id = RMat::identity(n, n);
    ShockLinearization::from_matrices(
        sys.flux_jacobian(&up) - &id * shock.sigma,
        sys.flux_jacobian(&um) - &id * shock.sigma,
        sys.source_jacobian(&up),
        sys.source_jacobian(&um),
        up - um,
    )
}

pub fn shock_boundary_map(sys: &SystemDescriptor, shock: &ShockProfile) -> ShockBoundaryMap {
    ShockBoundaryMap { sys: sys.clone(), n: sys.n(), sigma: shock.sigma, u_minus: shock.um(), u_plus: shock.up() }
}

/// Linearization of a constant equilibrium, optionally with a boundary (half-line problem).
#[derive(Debug, Clone)]
pub struct ConstantLinearization {
    pub a: RMat,
    pub g: RMat,
    /// `DB(U0)`, `p x n`, for half-line problems.
    pub b: Option<RMat>,
}

pub fn linearize_constant(sys: &SystemDescriptor, u0: &RVec) -> Result<ConstantLinearization> {
    sys.check_dim(u0, "equilibrium")?;
    Ok(ConstantLinearization {
        a: sys.flux_jacobian(u0),
        g: sys.source_jacobian(u0),
        b: sys.boundary.as_ref().map(|b| b.jacobian(u0)),
    })
}

// ---------------------------------------------------------------------------
// grid functions on the two sides of the shock

/// Values on a uniform half grid `x_i = ± i h`, index 0 at the interface.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfGrid {
    pub h: f64,
    pub values: Vec<RVec>,
}

impl HalfGrid {
    pub fn zeros(n: usize, h: f64, len: usize) -> Self {
        HalfGrid { h, values: vec![RVec::zeros(n); len] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn trace(&self) -> &RVec {
        &self.values[0]
    }

    /// Third-order one-sided derivative at index 0 with respect to the index direction.
    pub fn outward_derivative(&self) -> RVec {
        let v = &self.values;
        (&v[0] * -11.0 + &v[1] * 18.0 - &v[2] * 9.0 + &v[3] * 2.0) / (6.0 * self.h)
    }
}

/// Piecewise grid function: `plus[i]` at `x = i h`, `minus[i]` at `x = -i h`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitField {
    pub plus: HalfGrid,
    pub minus: HalfGrid,
}

impl SplitField {
    pub fn zeros(n: usize, h: f64, len: usize) -> Self {
        SplitField { plus: HalfGrid::zeros(n, h, len), minus: HalfGrid::zeros(n, h, len) }
    }

    /// Samples `f` on both sides, `f(x, side)` with `side = +1` or `-1`.
    pub fn from_fn<F: Fn(f64, i32) -> RVec>(h: f64, len: usize, f: F) -> Self {
        let plus = HalfGrid { h, values: (0..len).map(|i| f(i as f64 * h, 1)).collect() };
        let minus = HalfGrid { h, values: (0..len).map(|i| f(-(i as f64) * h, -1)).collect() };
        SplitField { plus, minus }
    }

    /// `d/dx` at `0+` and `0-`.
    pub fn one_sided_dx(&self) -> (RVec, RVec) {
        (self.plus.outward_derivative(), -self.minus.outward_derivative())
    }
}

/// Output of the order-two compatibility check of initial data with the shock.
#[derive(Debug, Clone, PartialEq)]
pub struct CompatibilityResiduals {
    /// Least-squares speed correction: `[A(U)] ≈ (sigma + psi1) [U]`.
    pub psi1: f64,
    /// Least-squares phase acceleration from the time-differentiated jump condition.
    pub psi2: f64,
    pub r1: RVec,
    pub r2: RVec,
}

/// Compatibility residuals of perturbation `v0` with the shock.
///
/// With `Phi1 = sigma + psi1` and `U = Ubar + V0`, the first bracket is
/// `[A(U)] - Phi1 [U]`; the second differentiates the jump condition in time,
/// `[(DA(U) - Phi1)(-(DA(U) - Phi1) V0_x + g(U))] - psi2 [U]`, so that
/// `psi2` approximates `psi''(0)` and vanishes for unperturbed traces.
pub fn compatibility_residuals(sys: &SystemDescriptor, shock: &ShockProfile, v0: &SplitField) -> Result<CompatibilityResiduals> {
    let n = sys.n();
    if v0.plus.len() < 4 || v0.minus.len() < 4 {
        return Err(Error::InvalidModel("compatibility needs at least 4 points per side".into()));
    }
    let (ubm, ubp) = (shock.um(), shock.up());
    let vp = v0.plus.trace();
    let vm = v0.minus.trace();
    if vp.len() != n || vm.len() != n {
        return Err(Error::InvalidModel("perturbation has the wrong dimension".into()));
    }
    let up = &ubp + vp;
    let um = &ubm + vm;
    let jump = &up - &um;
    let scale = (&ubp - &ubm).norm().max(1.0);
    let jj = jump.norm_squared();
    if jump.norm() <= 1e-12 * scale {
        return Err(Error::DegenerateJump(format!("|[U+V0]| = {:e}", jump.norm())));
    }
    // deviations from the profile, so unperturbed traces give exact zeros
    let d_flux = (sys.flux(&up) - sys.flux(&ubp)) - (sys.flux(&um) - sys.flux(&ubm));
    let d_jump = vp - vm;
    let rh_profile = sys.flux(&ubp) - sys.flux(&ubm) - (&ubp - &ubm) * shock.sigma;
    let lhs1 = &d_flux - &d_jump * shock.sigma;
    let psi1 = jump.dot(&lhs1) / jj;
    let r1 = &lhs1 - &jump * psi1 + rh_profile;

    let phi1 = shock.sigma + psi1;
    let (dxp, dxm) = v0.one_sided_dx();
    let id = RMat::identity(n, n);
    let ap = sys.flux_jacobian(&up) - &id * phi1;
    let am = sys.flux_jacobian(&um) - &id * phi1;
    let kp = &ap * (-(&ap * &dxp) + sys.source(&up));
    let km = &am * (-(&am * &dxm) + sys.source(&um));
    let k = kp - km;
    let psi2 = jump.dot(&k) / jj;
    let r2 = &k - &jump * psi2;
    Ok(CompatibilityResiduals { psi1, psi2, r1, r2 })
}

// ---------------------------------------------------------------------------
// system files

/// JSON description of a polynomial system.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemFile {
    pub n: usize,
    pub flux_poly: Vec<Vec<Monomial>>,
    #[serde(default)]
    pub source_poly: Vec<Vec<Monomial>>,
    #[serde(default)]
    pub boundary: Option<Vec<Vec<Monomial>>>,
    #[serde(default)]
    pub shock: Option<ShockProfile>,
    #[serde(default)]
    pub equilibrium: Option<Vec<f64>>,
}

impl SystemFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("system file: {e}")))
    }

    pub fn build(&self, name: &str) -> Result<SystemDescriptor> {
        let n = self.n;
        if self.flux_poly.len() != n {
            return Err(Error::InvalidModel(format!("flux_poly has {} components, expected {n}", self.flux_poly.len())));
        }
        let flux = PolyField::new(n, self.flux_poly.clone())?;
        let source = if self.source_poly.is_empty() {
            PolyField::zero(n, n)
        } else {
            if self.source_poly.len() != n {
                return Err(Error::InvalidModel(format!(
                    "source_poly has {} components, expected {n}",
                    self.source_poly.len()
                )));
            }
            PolyField::new(n, self.source_poly.clone())?
        };
        let mut sys = SystemDescriptor::new(name, Arc::new(PolynomialSystem { flux, source }));
        if let Some(b) = &self.boundary {
            sys = sys.with_boundary(Arc::new(PolyBoundary(PolyField::new(n, b.clone())?)));
        }
        Ok(sys)
    }
}

// ---------------------------------------------------------------------------
// built-in systems

/// Linear 3x3 system with `A = diag(1,3,2)` and the stable, non-symmetrizable source.
pub fn appendix_3x3() -> SystemDescriptor {
    appendix_3x3_eps(0.0)
}

pub fn appendix_3x3_source(eps: f64) -> RMat {
    RMat::from_row_slice(3, 3, &[-1.0, 1.0, 1.0, -1.0, -1.0, -1.0, 1.0 + eps, 1.0, -1.0])
}

pub fn appendix_3x3_convection() -> RMat {
    crate::linalg::diag(&[1.0, 3.0, 2.0])
}

/// Variant with entry `(3,1)` of the source replaced by `1 + eps`.
pub fn appendix_3x3_eps(eps: f64) -> SystemDescriptor {
    let law = LinearSystem::new(appendix_3x3_convection(), appendix_3x3_source(eps));
    SystemDescriptor::new(if eps == 0.0 { "appendix_3x3".to_string() } else { format!("appendix_3x3_eps_{eps}") }, Arc::new(law))
}

/// Appendix system with the weakly nonlinear flux `A(U) = diag(1,3,2) U + kappa (u1^2, u2^2, u3^2)/2`.
pub fn appendix_3x3_quadratic(kappa: f64) -> SystemDescriptor {
    let mut law = LinearSystem::new(appendix_3x3_convection(), appendix_3x3_source(0.0));
    law.hessians = (0..3)
        .map(|i| {
            let mut h = RMat::zeros(3, 3);
            h[(i, i)] = kappa;
            h
        })
        .collect();
    SystemDescriptor::new(format!("appendix_3x3_quadratic_{kappa}"), Arc::new(law))
}

/// `A = diag(d1, d2)`, `G = [[a, b], [c, d]]`.
pub fn family_2x2(d1: f64, d2: f64, a: f64, b: f64, c: f64, d: f64) -> SystemDescriptor {
    let law = LinearSystem::new(crate::linalg::diag(&[d1, d2]), RMat::from_row_slice(2, 2, &[a, b, c, d]));
    SystemDescriptor::new("family_2x2", Arc::new(law))
}

/// Scalar bistable Burgers law and its shock `u- = 1`, `u+ = 0`, `sigma = 1/2`.
pub fn burgers_bistable(theta: f64) -> (SystemDescriptor, ShockProfile) {
    let sys = SystemDescriptor::new(format!("burgers_bistable_{theta}"), Arc::new(BurgersBistable { theta }));
    (sys, ShockProfile::new(&[1.0], &[0.0], 0.5))
}

/// Diagonal system `A = diag(speeds)`, `G = -diag(rates)`.
pub fn decoupled(speeds: &[f64], rates: &[f64]) -> SystemDescriptor {
    let g: Vec<f64> = rates.iter().map(|r| -r).collect();
    let law = LinearSystem::new(crate::linalg::diag(speeds), crate::linalg::diag(&g));
    SystemDescriptor::new("decoupled", Arc::new(law))
}

/// Half-line system `A = diag(1, -1)` with a coupling source and boundary `u1(t, 0) = phi(t)`.
pub fn ibvp_2x2() -> SystemDescriptor {
    let law = LinearSystem::new(crate::linalg::diag(&[1.0, -1.0]), RMat::from_row_slice(2, 2, &[-1.0, 0.8, -0.6, -0.5]));
    let b = LinearBoundary { b: RMat::from_row_slice(1, 2, &[1.0, 0.0]), u_ref: RVec::zeros(2) };
    SystemDescriptor::new("ibvp_2x2", Arc::new(law)).with_boundary(Arc::new(b))
}

/// Looks up a built-in system by name.
pub fn builtin(name: &str) -> Result<SystemDescriptor> {
    match name {
        "appendix_3x3" => Ok(appendix_3x3()),
        "appendix_3x3_eps" => Ok(appendix_3x3_eps(1e-2)),
        "appendix_3x3_quadratic" => Ok(appendix_3x3_quadratic(0.1)),
        "burgers_bistable" => Ok(burgers_bistable(0.25).0),
        "decoupled" => Ok(decoupled(&[-1.0, 1.0, 2.0], &[1.0, 1.0, 1.0])),
        "ibvp_2x2" => Ok(ibvp_2x2()),
        _ => Err(Error::Config(format!("unknown built-in system '{name}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn burgers() -> SystemDescriptor {
        SystemDescriptor::new("burgers", Arc::new(BurgersBistable { theta: 0.25 }))
    }

    #[test]
    fn burgers_linearization() {
        let shock = ShockProfile::new(&[1.0], &[0.0], 0.5);
        let lin = evaluate_linearization(&burgers(), &shock).unwrap();
        assert_eq!(lin.a_minus[(0, 0)], 0.5);
        assert_eq!(lin.a_plus[(0, 0)], -0.5);
        assert_eq!(lin.g_plus[(0, 0)], -0.25);
        assert_eq!(lin.g_minus[(0, 0)], -0.75);
    }

    #[test]
    fn burgers_rh() {
        let s = burgers();
        let um = RVec::from_element(1, 1.0);
        let up = RVec::from_element(1, 0.0);
        assert_eq!(rankine_hugoniot_residual(&s, &um, &up, 0.5).unwrap()[0], 0.0);
        assert_eq!(rankine_hugoniot_residual(&s, &um, &up, 1.0).unwrap()[0], 0.5);
    }

    #[test]
    fn dimension_mismatch_is_invalid_model() {
        let shock = ShockProfile::new(&[1.0, 0.0], &[0.0, 0.0], 0.5);
        assert!(matches!(evaluate_linearization(&burgers(), &shock), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn polynomial_jacobian_matches_fd() {
        // A(u,v) = (u v + u^2/2, v^3 - u), g = (-u + u v^2, -v)
        let m = |c: f64, e: [u32; 2]| Monomial { c, e: e.to_vec() };
        let flux = PolyField::new(2, vec![vec![m(1.0, [1, 1]), m(0.5, [2, 0])], vec![m(1.0, [0, 3]), m(-1.0, [1, 0])]]).unwrap();
        let source = PolyField::new(2, vec![vec![m(-1.0, [1, 0]), m(1.0, [1, 2])], vec![m(-1.0, [0, 1])]]).unwrap();
        let sys = SystemDescriptor::new("poly", Arc::new(PolynomialSystem { flux, source }));
        let states = vec![RVec::from_vec(vec![0.3, -0.7]), RVec::from_vec(vec![1.1, 0.4])];
        assert!(sys.jacobian_fd_error(&states, 1e-6) < 1e-8);
    }

    #[test]
    fn degree_above_four_rejected() {
        let m = Monomial { c: 1.0, e: vec![5] };
        assert!(PolyField::new(1, vec![vec![m]]).is_err());
    }

    #[test]
    fn linearized_jump_map_matches_jacobian() {
        let s = burgers();
        let shock = ShockProfile::new(&[1.0], &[0.0], 0.5);
        let bm = shock_boundary_map(&s, &shock);
        let lin = evaluate_linearization(&s, &shock).unwrap();
        assert!((bm.linearization() - lin.b_matrix()).norm() < 1e-15);
        let id0 = bm.proj0() * bm.sect0();
        assert_eq!(id0[(0, 0)], 1.0);
    }
}
