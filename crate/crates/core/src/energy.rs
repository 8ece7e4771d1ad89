//! Kawashima-compensated energies and dissipation monitoring.
//!
//! With `Q = Q_comp D^{-1}` so that `P G P^{-1} + [D, Q] = Gamma`, the
//! functionals are
//!
//! ```text
//!   E1(V) = 1/2 |P(U+V) V_x|^2 + <Q P V, P V_x> + theta/2 |P V|^2
//!   E2(V) = 1/2 |P(U+V) V_xx|^2 + <Q P V_x, P V_xx> + theta/2 |P V_x|^2
//! ```
//!
//! and along a trajectory the monitor checks, for every pair `s < t` of samples,
//!
//! ```text
//!   E(t) <= e^{-2a'(t-s)} E(s) + C int_s^t e^{-2a'(t-r)} (|V|_2^2 + |phi|^2 + |psi'|^2) dr
//! ```
//!
//! reporting the smallest admissible `C`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green::SideField;
use crate::linalg::{self, RMat, RVec};
use crate::simulate::{derivative, Trajectory};
use crate::spectral::{diagonalize_convection, SpectralDecomposition};
use crate::system_model::SystemDescriptor;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyConfig {
    /// Zeroth-order weight; `1 + 2|Q|^2` when absent.
    pub vartheta: Option<f64>,
    /// Weight of the outgoing block in the split functional; computed when absent.
    pub theta_prime: Option<f64>,
    pub alpha_prime: f64,
    /// Use `P(U + V)` in the leading term instead of the frozen `P`.
    pub nonlinear: bool,
    /// Include the second-order functional (H^2 level).
    pub second_order: bool,
    /// Relative tolerance on pointwise violations of the fitted inequality.
    pub tolerance: f64,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        EnergyConfig { vartheta: None, theta_prime: None, alpha_prime: 0.0, nonlinear: true, second_order: true, tolerance: 0.05 }
    }
}

/// Frozen data of one side: diagonalizer, compensator and, for the nonlinear
/// functionals, the system used to rediagonalize at `U + V`.
#[derive(Debug, Clone)]
pub struct EnergyFrame {
    pub ubar: RVec,
    pub decomp: SpectralDecomposition,
    /// `Q D^{-1}` of the compensator construction.
    pub q: RMat,
    /// Indices of characteristics leaving the domain through the interface.
    pub outgoing: Vec<usize>,
    sys: Option<(SystemDescriptor, f64)>,
    gap: f64,
}

/// Where the interface sits relative to the side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterfaceSide {
    None,
    Left,
    Right,
}

fn min_gap(d: &[f64]) -> f64 {
    d.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

impl EnergyFrame {
    /// Frame of the frozen pair `(A, G)`; the functionals then use `P` throughout.
    pub fn linear(a: &RMat, g: &RMat, ubar: RVec, interface: InterfaceSide) -> Result<Self> {
        let decomp = SpectralDecomposition::new(a, g)?;
        let outgoing = match interface {
            InterfaceSide::None => vec![],
            InterfaceSide::Left => decomp.unstable.clone(),
            InterfaceSide::Right => decomp.stable.clone(),
        };
        Ok(EnergyFrame { q: decomp.q.clone(), gap: min_gap(&decomp.d), ubar, decomp, outgoing, sys: None })
    }

    /// Frame of the linearization of `sys` at `ubar` in a frame moving at `speed`.
    pub fn of_system(sys: &SystemDescriptor, ubar: &RVec, speed: f64, interface: InterfaceSide) -> Result<Self> {
        let n = sys.n();
        let a = sys.flux_jacobian(ubar) - RMat::identity(n, n) * speed;
        let g = sys.source_jacobian(ubar);
        let mut f = Self::linear(&a, &g, ubar.clone(), interface)?;
        f.sys = Some((sys.clone(), speed));
        Ok(f)
    }

    pub fn n(&self) -> usize {
        self.decomp.n
    }

    pub fn q_norm(&self) -> f64 {
        linalg::op_norm(&self.q)
    }

    /// Smallest weight making the form coercive: `1 + 2 |Q|^2`.
    pub fn vartheta_min(&self) -> f64 {
        1.0 + 2.0 * self.q_norm().powi(2)
    }

    /// `P(ubar + v)`, or `OutOfChart` when the diagonalizer leaves its smooth branch.
    pub fn chart(&self, v: &RVec) -> Result<RMat> {
        let Some((sys, speed)) = &self.sys else { return Ok(self.decomp.p.clone()) };
        let n = self.n();
        let u = &self.ubar + v;
        let a = sys.flux_jacobian(&u) - RMat::identity(n, n) * *speed;
        let (p, d) = diagonalize_convection(&a).map_err(|e| Error::OutOfChart(format!("{e}")))?;
        if n > 1 && min_gap(&d) < 0.5 * self.gap {
            return Err(Error::OutOfChart(format!("speed gap {:.3e} below half of {:.3e}", min_gap(&d), self.gap)));
        }
        if linalg::max_abs(&(&p - &self.decomp.p)) > 0.5 {
            return Err(Error::OutOfChart("diagonalizer left the branch through ubar".into()));
        }
        Ok(p)
    }

    /// Coercivity constant of `-P^T D P` on the outgoing range, from its smallest eigenvalue.
    pub fn boundary_coercivity(&self) -> f64 {
        if self.outgoing.is_empty() {
            return 0.0;
        }
        let k = self.outgoing.len();
        let block = RMat::from_fn(k, k, |i, j| if i == j { -self.decomp.d[self.outgoing[i]] } else { 0.0 });
        let sign = if self.outgoing.iter().all(|&j| self.decomp.d[j] < 0.0) { 1.0 } else { -1.0 };
        linalg::sym_min_eig(&(block * sign))
    }
}

/// `theta'` for a half-line frame with boundary matrix `b`: twice the ratio of
/// `max_{incoming} |d| |K|^2` to the coercivity constant, where `K` maps the
/// outgoing trace to the incoming one through the boundary relation.
pub fn theta_prime_min(frame: &EnergyFrame, b: &RMat) -> Result<f64> {
    let dec = &frame.decomp;
    let incoming: Vec<usize> = (0..dec.n).filter(|j| !frame.outgoing.contains(j)).collect();
    if b.nrows() != incoming.len() {
        return Err(Error::InvalidBoundaryMap(format!("{} rows for {} incoming modes", b.nrows(), incoming.len())));
    }
    if incoming.is_empty() || frame.outgoing.is_empty() {
        return Ok(1.0);
    }
    let bp = b * &dec.p_inv;
    let bs = RMat::from_fn(incoming.len(), incoming.len(), |i, j| bp[(i, incoming[j])]);
    let bu = RMat::from_fn(incoming.len(), frame.outgoing.len(), |i, j| bp[(i, frame.outgoing[j])]);
    let m = linalg::inv_r(&bs).ok_or_else(|| Error::SingularBoundaryMatrix("B restricted to incoming modes".into()))?;
    let coupling = linalg::op_norm(&(m * bu));
    let dmax = incoming.iter().map(|&j| dec.d[j].abs()).fold(0.0, f64::max);
    let c = frame.boundary_coercivity();
    Ok((2.0 * dmax * coupling * coupling / c).max(1.0))
}

fn trapezoid(f: &[f64], h: f64) -> f64 {
    if f.len() < 2 {
        return 0.0;
    }
    h * (f.iter().sum::<f64>() - 0.5 * (f[0] + f[f.len() - 1]))
}

fn column(field: &SideField, k: usize) -> RVec {
    RVec::from_iterator(field.n(), field.comps.iter().map(|c| c[k]))
}

/// Per-point weights of the compensated form on `(a, b) = (lower, higher)` derivative levels.
/// `blocks` selects diagonal characteristic blocks with their weights.
fn form(
    frame: &EnergyFrame,
    v: &SideField,
    a: &SideField,
    b: &SideField,
    vartheta: f64,
    nonlinear: bool,
    blocks: &[(Vec<usize>, f64)],
) -> Result<f64> {
    let n = frame.n();
    let p = &frame.decomp.p;
    let len = v.grid.len;
    let mut dens = vec![0.0; len];
    for k in 0..len {
        let pk = if nonlinear { frame.chart(&column(v, k))? } else { p.clone() };
        let wa = p * column(a, k);
        let wb = p * column(b, k);
        let wbl = &pk * column(b, k);
        let qa = &frame.q * &wa;
        let mut s = 0.0;
        for (idx, weight) in blocks {
            let mut part = 0.0;
            for &j in idx {
                part += 0.5 * wbl[j] * wbl[j] + qa[j] * wb[j] + 0.5 * vartheta * wa[j] * wa[j];
            }
            s += weight * part;
        }
        debug_assert_eq!(wa.len(), n);
        dens[k] = s;
    }
    Ok(trapezoid(&dens, v.grid.h))
}

fn vartheta_of(frames: &[EnergyFrame], cfg: &EnergyConfig) -> Result<f64> {
    let min = frames.iter().map(|f| f.vartheta_min()).fold(1.0, f64::max);
    match cfg.vartheta {
        None => Ok(min),
        Some(v) if v >= min - 1e-12 => Ok(v),
        Some(v) => Err(Error::Config(format!("vartheta = {v} below 1 + 2|Q|^2 = {min}"))),
    }
}

fn check_sides(frames: &[EnergyFrame], fields: &[SideField]) -> Result<()> {
    if frames.len() != fields.len() {
        return Err(Error::DimensionMismatch(format!("{} frames for {} sides", frames.len(), fields.len())));
    }
    for (f, v) in frames.iter().zip(fields) {
        if f.n() != v.n() {
            return Err(Error::DimensionMismatch(format!("frame of size {} for a field with {} components", f.n(), v.n())));
        }
    }
    Ok(())
}

fn whole(frame: &EnergyFrame) -> Vec<(Vec<usize>, f64)> {
    vec![((0..frame.n()).collect(), 1.0)]
}

/// First-order functional summed over sides.
pub fn functional_e1(frames: &[EnergyFrame], fields: &[SideField], cfg: &EnergyConfig) -> Result<f64> {
    check_sides(frames, fields)?;
    let vt = vartheta_of(frames, cfg)?;
    let mut e = 0.0;
    for (f, v) in frames.iter().zip(fields) {
        let dv = derivative(v);
        e += form(f, v, v, &dv, vt, cfg.nonlinear, &whole(f))?;
    }
    Ok(e)
}

/// Second-order functional summed over sides.
pub fn functional_e2(frames: &[EnergyFrame], fields: &[SideField], cfg: &EnergyConfig) -> Result<f64> {
    check_sides(frames, fields)?;
    let vt = vartheta_of(frames, cfg)?;
    let mut e = 0.0;
    for (f, v) in frames.iter().zip(fields) {
        let dv = derivative(v);
        let ddv = derivative(&dv);
        e += form(f, v, &dv, &ddv, vt, cfg.nonlinear, &whole(f))?;
    }
    Ok(e)
}

/// Split first-order functional: the outgoing block weighted by `theta'`.
pub fn functional_boundary_split(frames: &[EnergyFrame], fields: &[SideField], theta_prime: f64, cfg: &EnergyConfig) -> Result<f64> {
    check_sides(frames, fields)?;
    if !(theta_prime >= 1.0) {
        return Err(Error::Config(format!("theta' = {theta_prime} must be at least 1")));
    }
    let vt = vartheta_of(frames, cfg)?;
    let mut e = 0.0;
    for (f, v) in frames.iter().zip(fields) {
        let incoming: Vec<usize> = (0..f.n()).filter(|j| !f.outgoing.contains(j)).collect();
        let blocks = vec![(f.outgoing.clone(), theta_prime), (incoming, 1.0)];
        let dv = derivative(v);
        e += form(f, v, v, &dv, vt, cfg.nonlinear, &blocks)?;
    }
    Ok(e)
}

/// Energy used by the monitor: `E1 (+ E2)`, split on half lines when `theta'` is set.
pub fn monitored_energy(frames: &[EnergyFrame], fields: &[SideField], cfg: &EnergyConfig) -> Result<f64> {
    let e1 = match cfg.theta_prime {
        Some(tp) => functional_boundary_split(frames, fields, tp, cfg)?,
        None => functional_e1(frames, fields, cfg)?,
    };
    let e2 = if cfg.second_order { functional_e2(frames, fields, cfg)? } else { 0.0 };
    Ok(e1 + e2)
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyReport {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub e1: Vec<f64>,
    pub e2: Vec<f64>,
    /// `|V|_2^2 + |phi|^2 + |psi'|^2`.
    pub remainder: Vec<f64>,
    /// `dE/dt + 2a'E - C R` by centered differences (zero at the ends).
    pub residual: Vec<f64>,
    pub alpha_prime: f64,
    pub vartheta: f64,
    pub theta_prime: Option<f64>,
    /// Smallest `C` making the integrated inequality hold on all sample pairs.
    pub c_fit: f64,
    /// Largest pointwise residual relative to `max E`.
    pub max_violation: f64,
    pub pass: bool,
}

/// Evaluates the energy along the trajectory snapshots and fits the constant.
pub fn dissipation_monitor(traj: &Trajectory, frames: &[EnergyFrame], cfg: &EnergyConfig) -> Result<EnergyReport> {
    let snaps = &traj.snapshots;
    if snaps.len() < 5 {
        return Err(Error::InsufficientSampling(format!("{} snapshots", snaps.len())));
    }
    let a2 = 2.0 * cfg.alpha_prime;
    let vt = vartheta_of(frames, cfg)?;
    let rows: Vec<(f64, f64, f64)> = snaps
        .par_iter()
        .map(|s| -> Result<(f64, f64, f64)> {
            let e1 = match cfg.theta_prime {
                Some(tp) => functional_boundary_split(frames, &s.fields, tp, cfg)?,
                None => functional_e1(frames, &s.fields, cfg)?,
            };
            let e2 = if cfg.second_order { functional_e2(frames, &s.fields, cfg)? } else { 0.0 };
            let l2: f64 = s.fields.iter().map(|f| f.l2().powi(2)).sum();
            Ok((e1, e2, l2 + s.forcing * s.forcing + s.psi_rate * s.psi_rate))
        })
        .collect::<Result<_>>()?;
    let times: Vec<f64> = snaps.iter().map(|s| s.t).collect();
    let e1: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let e2: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let remainder: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let energy: Vec<f64> = e1.iter().zip(&e2).map(|(a, b)| a + b).collect();
    let m = times.len();
    let scale = energy.iter().cloned().fold(0.0, f64::max);
    if !(scale > 0.0) {
        return Ok(EnergyReport {
            residual: vec![0.0; m],
            times,
            energy,
            e1,
            e2,
            remainder,
            alpha_prime: cfg.alpha_prime,
            vartheta: vt,
            theta_prime: cfg.theta_prime,
            c_fit: 0.0,
            max_violation: 0.0,
            pass: true,
        });
    }
    // growth between consecutive samples must be resolved; fast decay only helps the bound
    for k in 1..m {
        let (a, b) = (energy[k - 1], energy[k]);
        if b > 1e-6 * scale && b - a > 0.25 * b {
            return Err(Error::InsufficientSampling(format!(
                "energy grows by {:.0}% between t = {} and t = {}",
                100.0 * (b - a) / b,
                times[k - 1],
                times[k]
            )));
        }
    }
    // S(t) = int_0^t e^{2a'(r - t0)} R(r) dr, so that int_s^t e^{-2a'(t-r)} R = e^{-2a'(t-t0)} (S(t) - S(s))
    let t0 = times[0];
    let mut cum = vec![0.0; m];
    for k in 1..m {
        let f = |j: usize| (a2 * (times[j] - t0)).exp() * remainder[j];
        cum[k] = cum[k - 1] + 0.5 * (times[k] - times[k - 1]) * (f(k) + f(k - 1));
    }
    let floor = 1e-13 * scale;
    let (c_fit, unbounded) = (1..m)
        .into_par_iter()
        .map(|k| {
            let mut c = 0.0_f64;
            let mut bad = false;
            for s in 0..k {
                let excess = energy[k] - (-a2 * (times[k] - times[s])).exp() * energy[s];
                if excess <= floor {
                    continue;
                }
                let integral = (-a2 * (times[k] - t0)).exp() * (cum[k] - cum[s]);
                if integral <= 1e-300 {
                    bad = true;
                } else {
                    c = c.max(excess / integral);
                }
            }
            (c, bad)
        })
        .reduce(|| (0.0, false), |a, b| (a.0.max(b.0), a.1 || b.1));
    let c_fit = if unbounded { f64::INFINITY } else { c_fit };
    let mut residual = vec![0.0; m];
    let mut max_violation = 0.0_f64;
    if c_fit.is_finite() {
        for k in 1..m - 1 {
            let de = (energy[k + 1] - energy[k - 1]) / (times[k + 1] - times[k - 1]);
            residual[k] = de + a2 * energy[k] - c_fit * remainder[k];
            max_violation = max_violation.max(residual[k] / scale);
        }
    }
    let pass = c_fit.is_finite() && max_violation <= cfg.tolerance;
    Ok(EnergyReport {
        times,
        energy,
        e1,
        e2,
        remainder,
        residual,
        alpha_prime: cfg.alpha_prime,
        vartheta: vt,
        theta_prime: cfg.theta_prime,
        c_fit,
        max_violation: if c_fit.is_finite() { max_violation } else { f64::INFINITY },
        pass,
    })
}
