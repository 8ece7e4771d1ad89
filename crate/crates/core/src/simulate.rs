//! Method-of-lines solvers for constant equilibria, half-line problems and
//! shock-fitted Riemann shocks, with norm measurement and decay fitting.
//!
//! In the frame `xi = x - sigma t - psi(t)` attached to the discontinuity the
//! perturbed solution `U = Ubar + V` solves on each side
//!
//! ```text
//!   U_t + (DA(U) - (sigma + psi') I) U_xi = g(U)
//!   -(sigma + psi') [U] + [A(U)] = 0               at xi = 0
//! ```
//!
//! Spatial derivatives are split along the frozen characteristic basis `P` of
//! the reference state and upwinded with third-order stencils; time stepping
//! is classical RK4. Interface traces are projected at every stage by a Newton
//! solve of the jump (or boundary) relations with the characteristic
//! components that arrive from the interior held fixed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green::{Forcing, Geometry, Grid, SideField};
use crate::linalg::{RMat, RVec};
use crate::spectral::diagonalize_convection;
use crate::system_model::{shock_boundary_map, ShockProfile, SystemDescriptor};

/// Run parameters shared by the three solvers.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Extent `L` of each side (whole line: `[x_min, L]`).
    pub length: f64,
    /// Left end of the whole-line domain; `-length` when absent.
    pub x_min: Option<f64>,
    pub h: f64,
    /// Courant number `dt max|d| / h`.
    pub cfl: f64,
    pub t_final: f64,
    /// Order of the polynomial extrapolation used for ghost values.
    pub extrapolation_order: usize,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub snapshot_stride: usize,
    /// Abort when `|V|_{W^{1,inf}} + |psi'| + |psi''|` exceeds this.
    pub eps_run: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            length: 10.0,
            x_min: None,
            h: 0.01,
            cfl: 0.5,
            t_final: 1.0,
            extrapolation_order: 3,
            newton_tol: 1e-12,
            newton_max_iter: 10,
            snapshot_stride: 10,
            eps_run: 1.0,
        }
    }
}

impl SimConfig {
    fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) || !(self.length > 4.0 * self.h) || !(self.t_final >= 0.0) {
            return Err(Error::Config(format!("bad grid: h = {}, L = {}, T = {}", self.h, self.length, self.t_final)));
        }
        if !(self.cfl > 0.0 && self.cfl <= 0.9) {
            return Err(Error::Config(format!("CFL number {} outside (0, 0.9]", self.cfl)));
        }
        if self.extrapolation_order != 3 {
            return Err(Error::Config("only third-order extrapolation is implemented".into()));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::Config("snapshot_stride must be positive".into()));
        }
        Ok(())
    }
}

/// Discrete norms of a perturbation.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq)]
pub struct Norms {
    pub l2: f64,
    pub linf: f64,
    pub w1inf: f64,
    pub h2: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Snapshot {
    pub t: f64,
    pub psi: f64,
    pub psi_rate: f64,
    /// `|phi(t)|` for half-line runs.
    pub forcing: f64,
    pub fields: Vec<SideField>,
}

/// Time series of a run.
#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub geometry: Geometry,
    pub times: Vec<f64>,
    pub norms: Vec<Norms>,
    /// Shock position correction and its derivatives (empty without a shock).
    pub psi: Vec<f64>,
    pub psi_rate: Vec<f64>,
    pub psi_accel: Vec<f64>,
    /// `|V(t, 0)|` at the boundary or `|V+(t,0)| + |V-(t,0)|` at the shock.
    pub trace: Vec<f64>,
    /// Jump (or boundary) relation residual after each accepted step.
    pub interface_residual: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    pub psi_inf: Option<f64>,
    pub max_w1inf: f64,
    pub dt: f64,
    pub rejected_steps: usize,
}

impl Trajectory {
    /// `psi''` by centered differences of `psi'`, for cross-checking.
    pub fn psi_accel_differenced(&self) -> Vec<f64> {
        let m = self.psi_rate.len();
        (0..m)
            .map(|k| {
                let (a, b) = (k.saturating_sub(1), (k + 1).min(m - 1));
                if a == b {
                    0.0
                } else {
                    (self.psi_rate[b] - self.psi_rate[a]) / (self.times[b] - self.times[a])
                }
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// norms and fits

fn d1(f: &[f64], h: f64, i: usize) -> f64 {
    let n = f.len();
    if i >= 2 && i + 2 < n {
        (-f[i + 2] + 8.0 * f[i + 1] - 8.0 * f[i - 1] + f[i - 2]) / (12.0 * h)
    } else if i < 2 {
        (-11.0 * f[i] + 18.0 * f[i + 1] - 9.0 * f[i + 2] + 2.0 * f[i + 3]) / (6.0 * h)
    } else {
        (11.0 * f[i] - 18.0 * f[i - 1] + 9.0 * f[i - 2] - 2.0 * f[i - 3]) / (6.0 * h)
    }
}

fn d2(f: &[f64], h: f64, i: usize) -> f64 {
    let n = f.len();
    let h2 = 12.0 * h * h;
    if i >= 2 && i + 2 < n {
        (-f[i + 2] + 16.0 * f[i + 1] - 30.0 * f[i] + 16.0 * f[i - 1] - f[i - 2]) / h2
    } else if i < 2 {
        (35.0 * f[i] - 104.0 * f[i + 1] + 114.0 * f[i + 2] - 56.0 * f[i + 3] + 11.0 * f[i + 4]) / h2
    } else {
        (35.0 * f[i] - 104.0 * f[i - 1] + 114.0 * f[i - 2] - 56.0 * f[i - 3] + 11.0 * f[i - 4]) / h2
    }
}

fn trapezoid(f: &[f64], h: f64) -> f64 {
    if f.len() < 2 {
        return 0.0;
    }
    h * (f.iter().sum::<f64>() - 0.5 * (f[0] + f[f.len() - 1]))
}

/// `x`-derivative of every component (fourth order inside, third order at the ends).
pub fn derivative(field: &SideField) -> SideField {
    let h = field.grid.h;
    SideField { grid: field.grid, comps: field.comps.iter().map(|c| (0..c.len()).map(|i| d1(c, h, i)).collect()).collect() }
}

/// `L^2`, `L^inf`, `W^{1,inf}` and `H^2` norms over all sides.
pub fn measure_norms(fields: &[SideField]) -> Norms {
    let mut l2 = 0.0;
    let mut h2 = 0.0;
    let mut linf = 0.0_f64;
    let mut dinf = 0.0_f64;
    for f in fields {
        let h = f.grid.h;
        let len = f.grid.len;
        if len < 5 {
            continue;
        }
        let mut v2 = vec![0.0; len];
        let mut dv2 = vec![0.0; len];
        let mut ddv2 = vec![0.0; len];
        for c in &f.comps {
            for i in 0..len {
                let a = d1(c, h, i);
                let b = d2(c, h, i);
                v2[i] += c[i] * c[i];
                dv2[i] += a * a;
                ddv2[i] += b * b;
                linf = linf.max(c[i].abs());
                dinf = dinf.max(a.abs());
            }
        }
        let i0 = trapezoid(&v2, h);
        l2 += i0;
        h2 += i0 + trapezoid(&dv2, h) + trapezoid(&ddv2, h);
    }
    Norms { l2: l2.sqrt(), linf, w1inf: linf.max(dinf), h2: h2.sqrt() }
}

/// Least-squares decay rate `alpha` of `y ~ C e^{-alpha t}`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct DecayFit {
    pub alpha: f64,
    pub r2: f64,
    pub points: usize,
}

/// Values below this are treated as numerical zero by [`fit_decay_rate`].
pub const FIT_FLOOR: f64 = 1e-14;

/// Fits `log y` against `t` on `window`; needs at least three points above `10 * FIT_FLOOR`.
pub fn fit_decay_rate(t: &[f64], y: &[f64], window: (f64, f64)) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = t.iter().zip(y).filter(|(ti, _)| **ti >= window.0 && **ti <= window.1).map(|(a, b)| (*a, *b)).collect();
    if pts.len() < 3 {
        return Err(Error::FitUnreliable(format!("{} points in [{}, {}]", pts.len(), window.0, window.1)));
    }
    if let Some((ti, yi)) = pts.iter().find(|(_, yi)| !(*yi > 10.0 * FIT_FLOOR)) {
        return Err(Error::FitUnreliable(format!("value {yi:e} at t = {ti} is at the numerical floor")));
    }
    let m = pts.len() as f64;
    let (st, sy): (f64, f64) = pts.iter().fold((0.0, 0.0), |(a, b), (ti, yi)| (a + ti, b + yi.ln()));
    let (mt, my) = (st / m, sy / m);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (ti, yi) in &pts {
        let (dx, dy) = (ti - mt, yi.ln() - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx <= 0.0 {
        return Err(Error::FitUnreliable("degenerate time window".into()));
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok(DecayFit { alpha: -slope, r2, points: pts.len() })
}

/// `C^inf` bump `exp(-1/((x-a)(b-x)) + 4/(b-a))`, equal to 1 at the centre, supported in `[a, b]`.
pub fn smooth_bump(x: f64, a: f64, b: f64) -> f64 {
    if x <= a || x >= b {
        0.0
    } else {
        (-1.0 / ((x - a) * (b - x)) + 4.0 / ((b - a) * (b - a))).exp()
    }
}

/// Initial perturbation profiles for configuration files.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    /// `direction * smooth_bump(x, a, b)`.
    Bump { a: f64, b: f64, direction: Vec<f64> },
    /// `direction * exp(-((x - center)/width)^2)`.
    Gaussian { center: f64, width: f64, direction: Vec<f64> },
}

impl Profile {
    pub fn eval(&self, x: f64) -> RVec {
        match self {
            Profile::Bump { a, b, direction } => RVec::from_column_slice(direction) * smooth_bump(x, *a, *b),
            Profile::Gaussian { center, width, direction } => {
                RVec::from_column_slice(direction) * (-((x - center) / width).powi(2)).exp()
            }
        }
    }

    fn dim(&self) -> usize {
        match self {
            Profile::Bump { direction, .. } | Profile::Gaussian { direction, .. } => direction.len(),
        }
    }
}

/// Sum of profiles rescaled so that its discrete `H^2` norm on `grids` equals `h2`.
pub fn scaled_profile(profiles: &[Profile], grids: &[Grid], h2: Option<f64>) -> Result<impl Fn(f64) -> RVec + Clone> {
    let n = profiles.first().map(|p| p.dim()).ok_or_else(|| Error::Config("empty initial profile".into()))?;
    if profiles.iter().any(|p| p.dim() != n) {
        return Err(Error::DimensionMismatch("profiles have different dimensions".into()));
    }
    let ps = profiles.to_vec();
    let raw = move |x: f64| ps.iter().fold(RVec::zeros(n), |acc, p| acc + p.eval(x));
    let scale = match h2 {
        Some(target) => {
            let fields: Vec<SideField> = grids.iter().map(|g| SideField::from_fn(*g, n, &raw)).collect();
            let cur = measure_norms(&fields).h2;
            if cur <= 0.0 {
                return Err(Error::Config("initial profile vanishes on the grid".into()));
            }
            target / cur
        }
        None => 1.0,
    };
    Ok(move |x: f64| raw(x) * scale)
}

// ---------------------------------------------------------------------------
// solver internals

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Interface {
    None,
    Left,
    Right,
}

struct Side {
    grid: Grid,
    interface: Interface,
    ubar: RVec,
    p: RMat,
    p_inv: RMat,
    /// Frozen characteristic speeds in the computational frame.
    speeds: Vec<f64>,
    wbar: RVec,
}

impl Side {
    fn new(sys: &SystemDescriptor, ubar: RVec, frame: f64, grid: Grid, interface: Interface) -> Result<Self> {
        let n = sys.n();
        let a = sys.flux_jacobian(&ubar) - RMat::identity(n, n) * frame;
        let (p, speeds) = diagonalize_convection(&a)?;
        let p_inv = crate::linalg::inv_r(&p).ok_or_else(|| Error::NotStrictlyHyperbolic("singular diagonalizer".into()))?;
        let wbar = &p * &ubar;
        Ok(Side { grid, interface, ubar, p, p_inv, speeds, wbar })
    }

    fn trace_index(&self) -> usize {
        match self.interface {
            Interface::Right => self.grid.len - 1,
            _ => 0,
        }
    }

    /// Modes whose trace value is carried from the interior to the interface.
    fn arriving(&self) -> Vec<usize> {
        (0..self.speeds.len())
            .filter(|&m| match self.interface {
                Interface::Left => self.speeds[m] < 0.0,
                Interface::Right => self.speeds[m] > 0.0,
                Interface::None => false,
            })
            .collect()
    }

    fn state(&self, u: &[f64], k: usize) -> RVec {
        let n = self.ubar.len();
        RVec::from_column_slice(&u[k * n..(k + 1) * n])
    }

    fn perturbation(&self, u: &[f64]) -> SideField {
        let n = self.ubar.len();
        let mut f = SideField::zeros(self.grid, n);
        for k in 0..self.grid.len {
            for i in 0..n {
                f.comps[i][k] = u[k * n + i] - self.ubar[i];
            }
        }
        f
    }

    /// Semi-discrete right-hand side with frame speed `frame`.
    fn rhs(&self, sys: &SystemDescriptor, u: &[f64], frame: f64, out: &mut [f64], bound: bool) -> f64 {
        let n = self.ubar.len();
        let len = self.grid.len;
        let h = self.grid.h;
        let mut ext = vec![vec![0.0; len + 4]; n];
        for k in 0..len {
            for m in 0..n {
                let mut s = 0.0;
                for i in 0..n {
                    s += self.p[(m, i)] * u[k * n + i];
                }
                ext[m][k + 2] = s;
            }
        }
        for m in 0..n {
            let e = &mut ext[m];
            let upstream_left = self.interface != Interface::Left && self.speeds[m] > 0.0;
            let upstream_right = self.interface != Interface::Right && self.speeds[m] < 0.0;
            if upstream_left {
                e[1] = self.wbar[m];
                e[0] = self.wbar[m];
            } else {
                e[1] = 4.0 * e[2] - 6.0 * e[3] + 4.0 * e[4] - e[5];
                e[0] = 4.0 * e[1] - 6.0 * e[2] + 4.0 * e[3] - e[4];
            }
            let r = len + 1;
            if upstream_right {
                e[r + 1] = self.wbar[m];
                e[r + 2] = self.wbar[m];
            } else {
                e[r + 1] = 4.0 * e[r] - 6.0 * e[r - 1] + 4.0 * e[r - 2] - e[r - 3];
                e[r + 2] = 4.0 * e[r + 1] - 6.0 * e[r] + 4.0 * e[r - 1] - e[r - 2];
            }
        }
        let id = RMat::identity(n, n);
        out.par_chunks_mut(n)
            .enumerate()
            .with_min_len(64)
            .map(|(k, o)| {
                let c = k + 2;
                let dw = RVec::from_fn(n, |m, _| {
                    let e = &ext[m];
                    if self.speeds[m] > 0.0 {
                        (2.0 * e[c + 1] + 3.0 * e[c] - 6.0 * e[c - 1] + e[c - 2]) / (6.0 * h)
                    } else {
                        (-e[c + 2] + 6.0 * e[c + 1] - 3.0 * e[c] - 2.0 * e[c - 1]) / (6.0 * h)
                    }
                });
                let uk = self.state(u, k);
                let jac = sys.flux_jacobian(&uk) - &id * frame;
                let f = sys.source(&uk) - &jac * (&self.p_inv * dw);
                o.copy_from_slice(f.as_slice());
                if !bound {
                    return 0.0;
                }
                // row-sum bound on the characteristic speeds
                let mj = &self.p * &jac * &self.p_inv;
                (0..n).map(|r| mj.row(r).iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    }

    fn one_sided_dx(&self, u: &[f64]) -> RVec {
        let n = self.ubar.len();
        let h = self.grid.h;
        let s = |k: usize| self.state(u, k);
        match self.interface {
            Interface::Right => {
                let l = self.grid.len - 1;
                (s(l) * 11.0 - s(l - 1) * 18.0 + s(l - 2) * 9.0 - s(l - 3) * 2.0) / (6.0 * h)
            }
            _ if n > 0 => (s(0) * -11.0 + s(1) * 18.0 - s(2) * 9.0 + s(3) * 2.0) / (6.0 * h),
            _ => RVec::zeros(0),
        }
    }
}

/// Interface relation: boundary map, jump relation or nothing.
enum Closure {
    Open,
    Boundary { forcing: Forcing, b0: RVec },
    Shock { sigma: f64 },
}

struct Solver<'a> {
    sys: &'a SystemDescriptor,
    sides: Vec<Side>,
    closure: Closure,
    cfg: &'a SimConfig,
}

struct Projected {
    frame_rate: f64,
    residual: f64,
}

fn newton_solve<F: Fn(&RVec) -> (RVec, RMat)>(f: F, mut z: RVec, tol: f64, max_iter: usize) -> std::result::Result<(RVec, f64), f64> {
    let mut last = f64::INFINITY;
    for it in 0..=max_iter {
        let (r, j) = f(&z);
        let res = r.amax();
        // one correction is always applied so that an already small defect is not frozen in
        if res <= tol && (it > 0 || res == 0.0) {
            return Ok((z, res));
        }
        last = res;
        match j.lu().solve(&r) {
            Some(dz) => z -= dz,
            None => return Err(res),
        }
    }
    Err(last)
}

impl<'a> Solver<'a> {
    fn n(&self) -> usize {
        self.sys.n()
    }

    /// Sets the interface traces of `u` (per side) consistently with the closure at time `t`.
    fn project(&self, t: f64, u: &mut [Vec<f64>], frame_guess: f64) -> Result<Projected> {
        let n = self.n();
        let tol = self.cfg.newton_tol;
        match &self.closure {
            Closure::Open => Ok(Projected { frame_rate: 0.0, residual: 0.0 }),
            Closure::Boundary { forcing, b0 } => {
                let side = &self.sides[0];
                let b = self.sys.boundary.as_ref().expect("checked at setup");
                let arriving = side.arriving();
                let u0 = side.state(&u[0], 0);
                let known: Vec<f64> = arriving.iter().map(|&m| side.p.row(m).dot(&u0.transpose())).collect();
                let phi = forcing.at(t, b.rows());
                let target = b0 + phi;
                let system = |z: &RVec| {
                    let mut r = RVec::zeros(n);
                    let mut j = RMat::zeros(n, n);
                    let bz = b.eval(z) - &target;
                    let bj = b.jacobian(z);
                    for i in 0..b.rows() {
                        r[i] = bz[i];
                        j.set_row(i, &bj.row(i));
                    }
                    for (c, &m) in arriving.iter().enumerate() {
                        r[b.rows() + c] = side.p.row(m).dot(&z.transpose()) - known[c];
                        j.set_row(b.rows() + c, &side.p.row(m));
                    }
                    (r, j)
                };
                let (z, res) = newton_solve(system, u0, tol, self.cfg.newton_max_iter)
                    .map_err(|r| Error::BoundaryTraceFailure(format!("Newton residual {r:e} at t = {t}")))?;
                u[0][..n].copy_from_slice(z.as_slice());
                Ok(Projected { frame_rate: 0.0, residual: res })
            }
            Closure::Shock { sigma } => {
                let (sp, sm) = (&self.sides[0], &self.sides[1]);
                let (ip, im) = (sp.trace_index(), sm.trace_index());
                let up = sp.state(&u[0], ip);
                let um = sm.state(&u[1], im);
                let ap = sp.arriving();
                let am = sm.arriving();
                let kp: Vec<f64> = ap.iter().map(|&m| sp.p.row(m).dot(&up.transpose())).collect();
                let km: Vec<f64> = am.iter().map(|&m| sm.p.row(m).dot(&um.transpose())).collect();
                if ap.len() + am.len() != n + 1 {
                    return Err(Error::ShockDisintegration(format!("{} arriving characteristics, expected {}", ap.len() + am.len(), n + 1)));
                }
                let bmap = shock_boundary_map(self.sys, &ShockProfile::new(sm.ubar.as_slice(), sp.ubar.as_slice(), *sigma));
                let system = |z: &RVec| {
                    let phi = z[0];
                    let wp = z.rows(1, n).into_owned();
                    let wm = z.rows(1 + n, n).into_owned();
                    let mut r = RVec::zeros(2 * n + 1);
                    let mut j = RMat::zeros(2 * n + 1, 2 * n + 1);
                    let bz = bmap.eval(phi, &wp, &wm);
                    let bj = bmap.jacobian_at(phi, &wp, &wm);
                    for i in 0..n {
                        r[i] = bz[i];
                        j.set_row(i, &bj.row(i));
                    }
                    let mut row = n;
                    for (c, &m) in ap.iter().enumerate() {
                        r[row] = sp.p.row(m).dot(&wp.transpose()) - kp[c];
                        for q in 0..n {
                            j[(row, 1 + q)] = sp.p[(m, q)];
                        }
                        row += 1;
                    }
                    for (c, &m) in am.iter().enumerate() {
                        r[row] = sm.p.row(m).dot(&wm.transpose()) - km[c];
                        for q in 0..n {
                            j[(row, 1 + n + q)] = sm.p[(m, q)];
                        }
                        row += 1;
                    }
                    (r, j)
                };
                let mut z0 = RVec::zeros(2 * n + 1);
                z0[0] = frame_guess;
                z0.rows_mut(1, n).copy_from(&up);
                z0.rows_mut(1 + n, n).copy_from(&um);
                let (z, _) = newton_solve(system, z0, tol, self.cfg.newton_max_iter)
                    .map_err(|r| Error::ShockTraceFailure(format!("Newton residual {r:e} at t = {t}")))?;
                let phi = z[0];
                let wp = z.rows(1, n).into_owned();
                let wm = z.rows(1 + n, n).into_owned();
                // Lax structure at the perturbed traces
                let id = RMat::identity(n, n);
                let count = |w: &RVec, positive: bool| -> Result<usize> {
                    let (_, d) = diagonalize_convection(&(self.sys.flux_jacobian(w) - &id * phi))
                        .map_err(|e| Error::ShockDisintegration(format!("trace lost strict hyperbolicity: {e}")))?;
                    Ok(d.iter().filter(|&&x| if positive { x > 0.0 } else { x < 0.0 }).count())
                };
                if count(&wp, false)? != ap.len() || count(&wm, true)? != am.len() {
                    return Err(Error::ShockDisintegration(format!("Lax counts changed at t = {t}")));
                }
                u[0][ip * n..(ip + 1) * n].copy_from_slice(wp.as_slice());
                u[1][im * n..(im + 1) * n].copy_from_slice(wm.as_slice());
                let residual = bmap.eval(phi, &wp, &wm).amax();
                Ok(Projected { frame_rate: phi - sigma, residual })
            }
        }
    }

    fn frame(&self, rate: f64) -> f64 {
        match self.closure {
            Closure::Shock { sigma } => sigma + rate,
            _ => 0.0,
        }
    }

    fn eval(&self, u: &[Vec<f64>], rate: f64, k: &mut [Vec<f64>], bound: bool) -> f64 {
        let frame = self.frame(rate);
        let mut s = 0.0_f64;
        for (side, (ui, ki)) in self.sides.iter().zip(u.iter().zip(k.iter_mut())) {
            s = s.max(side.rhs(self.sys, ui, frame, ki, bound));
        }
        s
    }

    fn psi_accel(&self, u: &[Vec<f64>], rate: f64) -> f64 {
        let Closure::Shock { sigma } = self.closure else { return 0.0 };
        let n = self.n();
        let phi = sigma + rate;
        let id = RMat::identity(n, n);
        let k = |side: &Side, ui: &[f64]| {
            let w = side.state(ui, side.trace_index());
            let j = self.sys.flux_jacobian(&w) - &id * phi;
            let dx = side.one_sided_dx(ui);
            &j * (-(&j * dx) + self.sys.source(&w))
        };
        let up = self.sides[0].state(&u[0], self.sides[0].trace_index());
        let um = self.sides[1].state(&u[1], self.sides[1].trace_index());
        let jump = up - um;
        let kk = k(&self.sides[0], &u[0]) - k(&self.sides[1], &u[1]);
        jump.dot(&kk) / jump.norm_squared()
    }

    fn trace_size(&self, u: &[Vec<f64>]) -> f64 {
        match self.closure {
            Closure::Open => 0.0,
            _ => self
                .sides
                .iter()
                .zip(u)
                .map(|(s, ui)| (s.state(ui, s.trace_index()) - &s.ubar).norm())
                .sum(),
        }
    }

    fn forcing_size(&self, t: f64) -> f64 {
        match &self.closure {
            Closure::Boundary { forcing, b0 } => forcing.at(t, b0.len()).norm(),
            _ => 0.0,
        }
    }

    fn run(&self, mut u: Vec<Vec<f64>>, psi0: f64, geometry: Geometry) -> Result<Trajectory> {
        let cfg = self.cfg;
        let vmax = self.sides.iter().flat_map(|s| s.speeds.iter()).fold(0.0_f64, |m, d| m.max(d.abs()));
        let mut dt = cfg.cfl * cfg.h / vmax.max(1e-12);
        let mut rejected = 0;
        let first = self.project(0.0, &mut u, self.frame(0.0))?;
        let mut rate = first.frame_rate;
        let mut psi = psi0;
        let mut t = 0.0;
        let mut traj = Trajectory {
            geometry,
            times: vec![],
            norms: vec![],
            psi: vec![],
            psi_rate: vec![],
            psi_accel: vec![],
            trace: vec![],
            interface_residual: vec![],
            snapshots: vec![],
            psi_inf: None,
            max_w1inf: 0.0,
            dt,
            rejected_steps: 0,
        };
        let shock = matches!(self.closure, Closure::Shock { .. });
        let mut step = 0usize;
        let record = |traj: &mut Trajectory, t: f64, u: &[Vec<f64>], rate: f64, psi: f64, res: f64, step: usize, last: bool| -> Result<()> {
            let fields: Vec<SideField> = self.sides.iter().zip(u).map(|(s, ui)| s.perturbation(ui)).collect();
            let norms = measure_norms(&fields);
            let accel = if shock { self.psi_accel(u, rate) } else { 0.0 };
            traj.times.push(t);
            traj.norms.push(norms);
            traj.trace.push(self.trace_size(u));
            traj.interface_residual.push(res);
            traj.max_w1inf = traj.max_w1inf.max(norms.w1inf);
            if shock {
                traj.psi.push(psi);
                traj.psi_rate.push(rate);
                traj.psi_accel.push(accel);
            }
            if !norms.h2.is_finite() {
                return Err(Error::AmplitudeEscape { t, value: f64::NAN, bound: cfg.eps_run });
            }
            let amp = norms.w1inf + rate.abs() + accel.abs();
            if amp > cfg.eps_run {
                return Err(Error::AmplitudeEscape { t, value: amp, bound: cfg.eps_run });
            }
            if step % cfg.snapshot_stride == 0 || last {
                traj.snapshots.push(Snapshot { t, psi, psi_rate: rate, forcing: self.forcing_size(t), fields });
            }
            Ok(())
        };
        record(&mut traj, t, &u, rate, psi, first.residual, 0, cfg.t_final <= 0.0)?;
        let sizes: Vec<usize> = u.iter().map(|v| v.len()).collect();
        let zeros = || sizes.iter().map(|&s| vec![0.0; s]).collect::<Vec<Vec<f64>>>();
        let (mut k1, mut k2, mut k3, mut k4) = (zeros(), zeros(), zeros(), zeros());
        let combine = |base: &[Vec<f64>], parts: &[(&Vec<Vec<f64>>, f64)]| -> Vec<Vec<f64>> {
            let mut out = base.to_vec();
            for (k, w) in parts {
                for (o, ki) in out.iter_mut().zip(k.iter()) {
                    for (a, b) in o.iter_mut().zip(ki) {
                        *a += w * b;
                    }
                }
            }
            out
        };
        while t < cfg.t_final - 1e-12 {
            let remaining = cfg.t_final - t;
            let steps_left = (remaining / dt).ceil().max(1.0);
            let h = remaining / steps_left;
            let s1 = self.eval(&u, rate, &mut k1, true);
            if s1 * h / cfg.h > 0.9 {
                dt *= 0.5;
                rejected += 1;
                log::warn!("step rejected at t = {t}: Courant number {:.3}, halving dt", s1 * h / cfg.h);
                if rejected > 30 {
                    return Err(Error::StepRejected(format!("Courant number stays above 0.9 at t = {t}")));
                }
                continue;
            }
            let mut y = combine(&u, &[(&k1, 0.5 * h)]);
            let p2 = self.project(t + 0.5 * h, &mut y, self.frame(rate))?;
            self.eval(&y, p2.frame_rate, &mut k2, false);
            let mut y = combine(&u, &[(&k2, 0.5 * h)]);
            let p3 = self.project(t + 0.5 * h, &mut y, self.frame(p2.frame_rate))?;
            self.eval(&y, p3.frame_rate, &mut k3, false);
            let mut y = combine(&u, &[(&k3, h)]);
            let p4 = self.project(t + h, &mut y, self.frame(p3.frame_rate))?;
            self.eval(&y, p4.frame_rate, &mut k4, false);
            let mut next = combine(&u, &[(&k1, h / 6.0), (&k2, h / 3.0), (&k3, h / 3.0), (&k4, h / 6.0)]);
            let pn = self.project(t + h, &mut next, self.frame(p4.frame_rate))?;
            psi += h / 6.0 * (rate + 2.0 * p2.frame_rate + 2.0 * p3.frame_rate + p4.frame_rate);
            u = next;
            rate = pn.frame_rate;
            t += h;
            step += 1;
            let last = t >= cfg.t_final - 1e-12;
            record(&mut traj, t, &u, rate, psi, pn.residual, step, last)?;
        }
        traj.dt = dt;
        traj.rejected_steps = rejected;
        if shock {
            traj.psi_inf = Some(psi);
        }
        Ok(traj)
    }
}

fn sample(side: &Side, v0: &dyn Fn(f64) -> RVec) -> Result<Vec<f64>> {
    let n = side.ubar.len();
    let mut u = Vec::with_capacity(n * side.grid.len);
    for k in 0..side.grid.len {
        let v = v0(side.grid.x(k));
        if v.len() != n {
            return Err(Error::DimensionMismatch(format!("initial perturbation has {} components, n = {n}", v.len())));
        }
        u.extend((&side.ubar + v).iter());
    }
    Ok(u)
}

/// Constant equilibrium `ubar` on `[x_min, L]`.
pub fn simulate_constant(sys: &SystemDescriptor, ubar: &RVec, v0: &dyn Fn(f64) -> RVec, cfg: &SimConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let grid = Grid::spanning(cfg.x_min.unwrap_or(-cfg.length), cfg.length, cfg.h)?;
    let side = Side::new(sys, ubar.clone(), 0.0, grid, Interface::None)?;
    let u = vec![sample(&side, v0)?];
    let solver = Solver { sys, sides: vec![side], closure: Closure::Open, cfg };
    solver.run(u, 0.0, Geometry::WholeLine)
}

/// Half-line problem on `[0, L]` with `B[U(t,0)] - B[ubar] = phi(t)`.
pub fn simulate_ibvp(
    sys: &SystemDescriptor,
    ubar: &RVec,
    forcing: &Forcing,
    v0: &dyn Fn(f64) -> RVec,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    let b = sys.boundary.as_ref().ok_or_else(|| Error::Precondition("system has no boundary map".into()))?;
    let grid = Grid::spanning(0.0, cfg.length, cfg.h)?;
    let side = Side::new(sys, ubar.clone(), 0.0, grid, Interface::Left)?;
    let incoming = side.speeds.iter().filter(|&&d| d > 0.0).count();
    if b.rows() != incoming {
        return Err(Error::IllPosedBoundary(format!("{} boundary conditions for {incoming} incoming characteristics", b.rows())));
    }
    if let Forcing::Exponential { phi0, .. } = forcing {
        if phi0.len() != b.rows() {
            return Err(Error::DimensionMismatch(format!("phi0 has {} entries, expected {}", phi0.len(), b.rows())));
        }
    }
    let u = vec![sample(&side, v0)?];
    let b0 = b.eval(ubar);
    let solver = Solver { sys, sides: vec![side], closure: Closure::Boundary { forcing: forcing.clone(), b0 }, cfg };
    solver.run(u, 0.0, Geometry::HalfLine)
}

/// Shock-fitted run on `[-L, 0] U [0, L]` in the frame of the shock.
/// `v0(x, side)` receives `side = 1` for `x >= 0` and `-1` for `x <= 0`.
pub fn simulate_shock(
    sys: &SystemDescriptor,
    shock: &ShockProfile,
    v0: &dyn Fn(f64, i32) -> RVec,
    psi0: f64,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    shock.validate(sys, 1e-10)?;
    let plus = Side::new(sys, shock.up(), shock.sigma, Grid::spanning(0.0, cfg.length, cfg.h)?, Interface::Left)?;
    let minus = Side::new(sys, shock.um(), shock.sigma, Grid::spanning(-cfg.length, 0.0, cfg.h)?, Interface::Right)?;
    let k_plus = plus.speeds.iter().filter(|&&d| d > 0.0).count();
    let k_minus = minus.speeds.iter().filter(|&&d| d < 0.0).count();
    if 1 + k_plus + k_minus != sys.n() {
        return Err(Error::ShockDisintegration(format!("not a Lax shock: 1 + {k_plus} + {k_minus} != {}", sys.n())));
    }
    let u = vec![sample(&plus, &|x| v0(x, 1))?, sample(&minus, &|x| v0(x, -1))?];
    let solver = Solver { sys, sides: vec![plus, minus], closure: Closure::Shock { sigma: shock.sigma }, cfg };
    solver.run(u, psi0, Geometry::Shock)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_exponentials() {
        let t: Vec<f64> = (0..50).map(|k| k as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|t| 5.0 * (-0.3 * t).exp()).collect();
        let f = fit_decay_rate(&t, &y, (0.0, 5.0)).unwrap();
        assert!((f.alpha - 0.3).abs() < 1e-12 && (f.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bump_is_smooth_and_compact() {
        assert_eq!(smooth_bump(1.0, 1.0, 2.0), 0.0);
        assert!((smooth_bump(1.5, 1.0, 2.0) - 1.0).abs() < 1e-15);
        assert!(smooth_bump(1.01, 1.0, 2.0) < 1e-40);
    }
}
