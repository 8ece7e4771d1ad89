//! Evans–Lopatinskii determinants, root counting and gap certificates.
//!
//! For the shock the spectral problem at `lambda` is solvable iff
//!
//! ```text
//!   E(lambda) = [ -[U]  |  A+ W+(lambda)  |  -A- W-(lambda) ]
//! ```
//!
//! is invertible, where the columns of `W+` span `Ran Pi_{s,+}(lambda)` and those of
//! `W-` span `Ran Pi_{u,-}(lambda)`. For the half-line problem the matrix is
//! `B_bc W_s(lambda)`. Winding numbers use the analytic frames
//! `W(lambda) = Pi(lambda) R` with `R` a fixed basis of the high-frequency range,
//! so that `det E` is holomorphic and its zeros are counted by the argument principle.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, det_c, inv_c, orthonormal_columns, to_complex, CMat, C64, RMat};
use crate::spectral::{spatial_projectors, symbol_abscissa_sup, SpectralDecomposition};
use crate::system_model::{ConstantLinearization, ShockLinearization};

/// Samples of the compactified frequency line used for essential-spectrum checks.
pub const ESSENTIAL_SAMPLES: usize = 4000;

/// Spectral data of both sides of a shock.
#[derive(Debug, Clone)]
pub struct ShockSpectral {
    pub lin: ShockLinearization,
    pub plus: SpectralDecomposition,
    pub minus: SpectralDecomposition,
}

impl ShockSpectral {
    pub fn new(lin: &ShockLinearization) -> Result<Self> {
        Ok(ShockSpectral {
            lin: lin.clone(),
            plus: SpectralDecomposition::new(&lin.a_plus, &lin.g_plus)?,
            minus: SpectralDecomposition::new(&lin.a_minus, &lin.g_minus)?,
        })
    }

    pub fn n(&self) -> usize {
        self.lin.n
    }

    /// Fixed basis of `Ran Pi_{s,+}^inf`: columns `P+^{-1} e_j`, `d_{j,+} > 0`.
    pub fn frame_plus(&self) -> RMat {
        columns(&self.plus.p_inv, &self.plus.stable)
    }

    /// Fixed basis of `Ran Pi_{u,-}^inf`: columns `P-^{-1} e_j`, `d_{j,-} < 0`.
    pub fn frame_minus(&self) -> RMat {
        columns(&self.minus.p_inv, &self.minus.unstable)
    }

    /// `E_inf = [-[U] | A+ R+ | -A- R-]`.
    pub fn e_inf(&self) -> Result<RMat> {
        let rp = self.frame_plus();
        let rm = self.frame_minus();
        let n = self.n();
        if 1 + rp.ncols() + rm.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "1 + k+ + k- = {} but n = {n}",
                1 + rp.ncols() + rm.ncols()
            )));
        }
        let mut e = RMat::zeros(n, n);
        e.set_column(0, &(-&self.lin.jump));
        let ap = &self.lin.a_plus * &rp;
        let am = -(&self.lin.a_minus * &rm);
        for k in 0..rp.ncols() {
            e.set_column(1 + k, &ap.column(k));
        }
        for k in 0..rm.ncols() {
            e.set_column(1 + rp.ncols() + k, &am.column(k));
        }
        Ok(e)
    }

    /// `B_inf^dagger`: `(1+2n) x n`, inverse of `B` restricted to `C x Ran Pi_{s,+}^inf x Ran Pi_{u,-}^inf`.
    pub fn b_dagger_inf(&self) -> Result<RMat> {
        let e = self.e_inf()?;
        let einv = linalg::inv_r(&e).ok_or_else(|| Error::SingularBoundaryMatrix("E_inf is singular".into()))?;
        Ok(lift(&self.frame_plus(), &self.frame_minus(), &einv.map(|x| C64::new(x, 0.0))).map(|z| z.re))
    }
}

/// Sections `(1, R+, R-)` applied to the rows of `coef` (`(1+k+ +k-) x m`), giving `(1+2n) x m`.
fn lift(rp: &RMat, rm: &RMat, coef: &CMat) -> CMat {
    let n = rp.nrows();
    let kp = rp.ncols();
    let km = rm.ncols();
    let m = coef.ncols();
    let mut out = CMat::zeros(1 + 2 * n, m);
    for c in 0..m {
        out[(0, c)] = coef[(0, c)];
        for i in 0..n {
            let mut s = C64::new(0.0, 0.0);
            for k in 0..kp {
                s += coef[(1 + k, c)] * rp[(i, k)];
            }
            out[(1 + i, c)] = s;
            let mut t = C64::new(0.0, 0.0);
            for k in 0..km {
                t += coef[(1 + kp + k, c)] * rm[(i, k)];
            }
            out[(1 + n + i, c)] = t;
        }
    }
    out
}

fn lift_frames(wp: &CMat, wm: &CMat, coef: &CMat) -> CMat {
    let n = wp.nrows();
    let kp = wp.ncols();
    let m = coef.ncols();
    let mut out = CMat::zeros(1 + 2 * n, m);
    for c in 0..m {
        out[(0, c)] = coef[(0, c)];
        let cp = coef.view((1, c), (kp, 1));
        let cm = coef.view((1 + kp, c), (wm.ncols(), 1));
        let vp = wp * cp;
        let vm = wm * cm;
        for i in 0..n {
            out[(1 + i, c)] = vp[(i, 0)];
            out[(1 + n + i, c)] = vm[(i, 0)];
        }
    }
    out
}

pub fn columns(m: &RMat, idx: &[usize]) -> RMat {
    let mut out = RMat::zeros(m.nrows(), idx.len());
    for (c, &k) in idx.iter().enumerate() {
        out.set_column(c, &m.column(k));
    }
    out
}

#[derive(Debug, Clone)]
pub struct LopatinskiiSample {
    pub lambda: C64,
    /// Orthonormal basis of the decaying subspace on the right (shock) or of `Ran Pi_s` (IBVP).
    pub basis_plus: CMat,
    /// Orthonormal basis of `Ran Pi_{u,-}` (shock only; empty otherwise).
    pub basis_minus: CMat,
    pub e: CMat,
    pub det: C64,
    pub cond: f64,
    /// `(1+2n) x n` inverse of the restricted map (shock) or `n x p` (IBVP), when well conditioned.
    pub b_dagger: Option<CMat>,
}

/// Condition number beyond which the inverse is not returned.
pub const COND_LIMIT: f64 = 1e12;

/// Determinant with orthonormal bases of the decaying subspaces.
pub fn lopatinskii_det_shock(lin: &ShockLinearization, lambda: C64) -> Result<LopatinskiiSample> {
    let dp = spatial_projectors(&lin.a_plus, &lin.g_plus, lambda)?;
    let dm = spatial_projectors(&lin.a_minus, &lin.g_minus, lambda)?;
    let n = lin.n;
    let kp = dp.stable_idx.len();
    let km = dm.unstable_idx.len();
    if 1 + kp + km != n {
        return Err(Error::DimensionMismatch(format!("1 + k+ + k- = {} at lambda = {lambda}, n = {n}", 1 + kp + km)));
    }
    let wp = orthonormal_columns(&dp.eig.columns(&dp.stable_idx));
    let wm = orthonormal_columns(&dm.eig.columns(&dm.unstable_idx));
    let e = assemble_shock(lin, &wp, &wm);
    let det = det_c(&e);
    let cond = linalg::cond_c(&e);
    let b_dagger = if cond < COND_LIMIT { inv_c(&e).map(|ei| lift_frames(&wp, &wm, &ei)) } else { None };
    Ok(LopatinskiiSample { lambda, basis_plus: wp, basis_minus: wm, e, det, cond, b_dagger })
}

fn assemble_shock(lin: &ShockLinearization, wp: &CMat, wm: &CMat) -> CMat {
    let n = lin.n;
    let mut e = CMat::zeros(n, 1 + wp.ncols() + wm.ncols());
    for i in 0..n {
        e[(i, 0)] = C64::new(-lin.jump[i], 0.0);
    }
    let ap = to_complex(&lin.a_plus) * wp;
    let am = -(to_complex(&lin.a_minus) * wm);
    for k in 0..wp.ncols() {
        e.set_column(1 + k, &ap.column(k));
    }
    for k in 0..wm.ncols() {
        e.set_column(1 + wp.ncols() + k, &am.column(k));
    }
    e
}

/// Holomorphic Evans function of the shock, with frames `Pi(lambda) R`.
pub fn evans_shock(sp: &ShockSpectral, lambda: C64) -> Result<C64> {
    Ok(det_c(&evans_shock_matrix(sp, lambda)?.0))
}

/// `E(lambda)` on analytic frames, with the frames.
pub fn evans_shock_matrix(sp: &ShockSpectral, lambda: C64) -> Result<(CMat, CMat, CMat)> {
    let lin = &sp.lin;
    let dp = spatial_projectors(&lin.a_plus, &lin.g_plus, lambda)?;
    let dm = spatial_projectors(&lin.a_minus, &lin.g_minus, lambda)?;
    let rp = to_complex(&sp.frame_plus());
    let rm = to_complex(&sp.frame_minus());
    if dp.stable_idx.len() != rp.ncols() || dm.unstable_idx.len() != rm.ncols() {
        return Err(Error::DimensionMismatch(format!("decaying dimensions change at lambda = {lambda}")));
    }
    let wp = &dp.pi_s * rp;
    let wm = &dm.pi_u * rm;
    Ok((assemble_shock(lin, &wp, &wm), wp, wm))
}

/// `B^dagger(lambda)` on analytic frames, `(1+2n) x n`.
pub fn b_dagger_shock(sp: &ShockSpectral, lambda: C64) -> Result<CMat> {
    let (e, wp, wm) = evans_shock_matrix(sp, lambda)?;
    let ei = inv_c(&e).ok_or_else(|| Error::SingularBoundaryMatrix(format!("E({lambda}) is singular")))?;
    Ok(lift_frames(&wp, &wm, &ei))
}

/// Half-line determinant `det(B_bc W_s(lambda))` with an orthonormal basis `W_s`.
pub fn lopatinskii_det_ibvp(a: &RMat, g: &RMat, b_bc: &RMat, lambda: C64) -> Result<LopatinskiiSample> {
    let p = b_bc.nrows();
    let rank = b_bc.rank(1e-12 * linalg::max_abs(b_bc).max(1e-300));
    if rank < p {
        return Err(Error::InvalidBoundaryMap(format!("boundary map has rank {rank} < {p}")));
    }
    let d = spatial_projectors(a, g, lambda)?;
    if d.stable_idx.len() != p {
        return Err(Error::DimensionMismatch(format!("k_s = {} but p = {p}", d.stable_idx.len())));
    }
    let ws = orthonormal_columns(&d.eig.columns(&d.stable_idx));
    let e = to_complex(b_bc) * &ws;
    let det = det_c(&e);
    let cond = linalg::cond_c(&e);
    let b_dagger = if cond < COND_LIMIT { inv_c(&e).map(|ei| &ws * ei) } else { None };
    Ok(LopatinskiiSample { lambda, basis_plus: ws, basis_minus: CMat::zeros(a.nrows(), 0), e, det, cond, b_dagger })
}

/// Holomorphic half-line Evans function `det(B_bc Pi_s(lambda) R)`.
pub fn evans_ibvp(dec: &SpectralDecomposition, a: &RMat, g: &RMat, b_bc: &RMat, lambda: C64) -> Result<C64> {
    let d = spatial_projectors(a, g, lambda)?;
    let r = to_complex(&columns(&dec.p_inv, &dec.stable));
    if d.stable_idx.len() != r.ncols() {
        return Err(Error::DimensionMismatch(format!("k_s changes at lambda = {lambda}")));
    }
    Ok(det_c(&(to_complex(b_bc) * &d.pi_s * r)))
}

// ---------------------------------------------------------------------------
// argument principle

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContourPolicy {
    pub initial_per_edge: usize,
    pub max_evals: usize,
    pub min_abs: f64,
    pub max_dphase: f64,
    pub max_rel_jump: f64,
}

impl Default for ContourPolicy {
    fn default() -> Self {
        ContourPolicy {
            initial_per_edge: 64,
            max_evals: 50_000,
            min_abs: 1e-8,
            max_dphase: std::f64::consts::FRAC_PI_2,
            max_rel_jump: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Winding {
    pub winding: i64,
    pub total_phase: f64,
    pub evals: usize,
    pub min_abs: f64,
}

/// Counter-clockwise rectangle corners.
pub fn rectangle(re0: f64, re1: f64, im0: f64, im1: f64) -> Vec<C64> {
    vec![C64::new(re0, im0), C64::new(re1, im0), C64::new(re1, im1), C64::new(re0, im1)]
}

/// Winding number of `f` along the closed polygon through `corners`.
pub fn count_roots<F>(f: F, corners: &[C64], policy: &ContourPolicy) -> Result<Winding>
where
    F: Fn(C64) -> Result<C64> + Sync,
{
    let m = policy.initial_per_edge.max(2);
    let nc = corners.len();
    let mut pts: Vec<C64> = Vec::with_capacity(nc * m + 1);
    for e in 0..nc {
        let (a, b) = (corners[e], corners[(e + 1) % nc]);
        for k in 0..m {
            pts.push(a + (b - a) * (k as f64 / m as f64));
        }
    }
    pts.push(corners[0]);
    let vals: Vec<C64> = pts.par_iter().map(|&z| f(z)).collect::<Result<_>>()?;
    let mut evals = vals.len();
    let mut samples: Vec<(C64, C64)> = pts.into_iter().zip(vals).collect();
    let check = |z: C64, v: C64| -> Result<()> {
        if v.norm() < policy.min_abs || !v.norm().is_finite() {
            return Err(Error::ZeroOnContour { re: z.re, im: z.im });
        }
        Ok(())
    };
    for &(z, v) in &samples {
        check(z, v)?;
    }
    let mut total = 0.0;
    let mut min_abs = f64::INFINITY;
    let mut out: Vec<(C64, C64)> = vec![samples[0]];
    let mut stack: Vec<(C64, C64)> = samples.drain(1..).rev().collect();
    while let Some(next) = stack.pop() {
        let cur = *out.last().unwrap();
        let ratio = next.1 / cur.1;
        let dphi = ratio.arg();
        let jump = (next.1 - cur.1).norm() / cur.1.norm().max(next.1.norm());
        if dphi.abs() > policy.max_dphase || jump > policy.max_rel_jump {
            if evals >= policy.max_evals {
                return Err(Error::RefinementBudgetExceeded(evals));
            }
            let mid = (cur.0 + next.0) * 0.5;
            let v = f(mid)?;
            evals += 1;
            check(mid, v)?;
            stack.push(next);
            stack.push((mid, v));
            continue;
        }
        total += dphi;
        min_abs = min_abs.min(next.1.norm());
        out.push(next);
    }
    let w = total / std::f64::consts::TAU;
    let winding = w.round() as i64;
    if (w - winding as f64).abs() > 1e-6 {
        return Err(Error::QuadratureFailure(format!("non-integer winding {w}")));
    }
    Ok(Winding { winding, total_phase: total, evals, min_abs: min_abs.min(samples.first().map(|s| s.1.norm()).unwrap_or(f64::INFINITY)) })
}

// ---------------------------------------------------------------------------
// Lax structure and certificates

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct LaxCounts {
    /// `dim Ran Pi_{s,+}^inf = #{d_{j,+} > 0}`.
    pub k_plus: usize,
    /// `dim Ran Pi_{u,-}^inf = #{d_{j,-} < 0}`.
    pub k_minus: usize,
    /// Characteristics entering the shock from the right, `#{d_{j,+} < 0}`.
    pub incoming_right: usize,
    /// Characteristics entering the shock from the left, `#{d_{j,-} > 0}`.
    pub incoming_left: usize,
    pub n: usize,
    /// `1 + k+ + k- = n`, equivalently `incoming_left + incoming_right = n + 1`.
    pub is_lax: bool,
}

pub fn lax_check(lin: &ShockLinearization) -> Result<LaxCounts> {
    let sp = ShockSpectral::new(lin)?;
    let n = lin.n;
    let k_plus = sp.plus.stable.len();
    let k_minus = sp.minus.unstable.len();
    Ok(LaxCounts {
        k_plus,
        k_minus,
        incoming_right: n - k_plus,
        incoming_left: n - k_minus,
        n,
        is_lax: 1 + k_plus + k_minus == n,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GapCertificate {
    pub alpha: f64,
    /// `-alpha - abscissa` on each side (right, left); positive when the essential spectrum clears the line.
    pub margins: [f64; 2],
    pub abscissa: [f64; 2],
    pub contour: [f64; 4],
    pub winding: i64,
    #[serde(rename = "R")]
    pub r: f64,
    pub k_plus: usize,
    pub k_minus: usize,
    pub is_lax: bool,
    pub det_at_zero: [f64; 2],
    pub det_inf: f64,
    pub evals: usize,
    pub granted: bool,
}

/// High-frequency radius: smallest `R = R0 2^k` such that `|f - f_inf| < |f_inf|/2`
/// on the far edges of `[-alpha, R] x [-R, R]` and on the vertical line up to `4R`.
pub fn hf_radius<F>(f: &F, f_inf: C64, alpha: f64, r0: f64) -> Result<f64>
where
    F: Fn(C64) -> Result<C64> + Sync,
{
    let mut r = r0;
    for _ in 0..16 {
        let mut pts = vec![];
        let m = 128;
        for k in 0..=m {
            let t = k as f64 / m as f64;
            pts.push(C64::new(-alpha + (r + alpha) * t, r));
            pts.push(C64::new(-alpha + (r + alpha) * t, -r));
            pts.push(C64::new(r, -r + 2.0 * r * t));
            pts.push(C64::new(-alpha, r + 3.0 * r * t));
            pts.push(C64::new(-alpha, -r - 3.0 * r * t));
        }
        let ok = pts
            .par_iter()
            .map(|&z| f(z).map(|v| (v - f_inf).norm() < 0.5 * f_inf.norm()))
            .collect::<Result<Vec<bool>>>()?
            .into_iter()
            .all(|b| b);
        if ok {
            return Ok(r);
        }
        r *= 2.0;
    }
    Err(Error::ExpansionFailure("high-frequency dominance not reached".into()))
}

/// Supremum of the symbol abscissa for `(A, G)`.
pub fn essential_abscissa(a: &RMat, g: &RMat) -> Result<f64> {
    symbol_abscissa_sup(a, g, ESSENTIAL_SAMPLES)
}

/// Checks the spectral hypotheses of the shock with gap `alpha`.
pub fn certify_gap(lin: &ShockLinearization, alpha: f64, policy: &ContourPolicy) -> Result<GapCertificate> {
    if alpha <= 0.0 {
        return Err(Error::Precondition("alpha must be positive".into()));
    }
    let lax = lax_check(lin)?;
    let sp = ShockSpectral::new(lin)?;
    let ap = essential_abscissa(&lin.a_plus, &lin.g_plus)?;
    let am = essential_abscissa(&lin.a_minus, &lin.g_minus)?;
    let worst = ap.max(am);
    if worst >= -alpha {
        return Err(Error::EssentialSpectrumIntrusion { alpha, abscissa: worst });
    }
    if !lax.is_lax {
        return Err(Error::DimensionMismatch(format!("1 + k+ + k- = {} != n = {}", 1 + lax.k_plus + lax.k_minus, lax.n)));
    }
    let e_inf = sp.e_inf()?;
    let det_inf = e_inf.determinant();
    if det_inf.abs() < 1e-12 {
        return Err(Error::SingularBoundaryMatrix("B restricted to the high-frequency ranges is singular".into()));
    }
    let f = |z: C64| evans_shock(&sp, z);
    let r = hf_radius(&f, C64::new(det_inf, 0.0), alpha, 4.0)?;
    let w = count_roots(f, &rectangle(-alpha, r, -r, r), policy)?;
    let d0 = evans_shock(&sp, C64::new(0.0, 0.0))?;
    let granted = w.winding == 0 && d0.norm() > policy.min_abs;
    Ok(GapCertificate {
        alpha,
        margins: [-alpha - ap, -alpha - am],
        abscissa: [ap, am],
        contour: [-alpha, r, -r, r],
        winding: w.winding,
        r,
        k_plus: lax.k_plus,
        k_minus: lax.k_minus,
        is_lax: lax.is_lax,
        det_at_zero: [d0.re, d0.im],
        det_inf,
        evals: w.evals,
        granted,
    })
}

/// Half-line analogue of [`certify_gap`].
pub fn certify_gap_ibvp(lin: &ConstantLinearization, alpha: f64, policy: &ContourPolicy) -> Result<GapCertificate> {
    let b = lin.b.as_ref().ok_or_else(|| Error::InvalidBoundaryMap("no boundary map".into()))?;
    let dec = SpectralDecomposition::new(&lin.a, &lin.g)?;
    if dec.stable.len() != b.nrows() {
        return Err(Error::IllPosedBoundary(format!("{} incoming characteristics but {} boundary conditions", dec.stable.len(), b.nrows())));
    }
    let ab = essential_abscissa(&lin.a, &lin.g)?;
    if ab >= -alpha {
        return Err(Error::EssentialSpectrumIntrusion { alpha, abscissa: ab });
    }
    let r_inf = columns(&dec.p_inv, &dec.stable);
    let det_inf = if b.nrows() == 0 { 1.0 } else { (b * &r_inf).determinant() };
    if det_inf.abs() < 1e-12 {
        return Err(Error::SingularBoundaryMatrix("B restricted to Ran Pi_s^inf is singular".into()));
    }
    let f = |z: C64| evans_ibvp(&dec, &lin.a, &lin.g, b, z);
    let r = hf_radius(&f, C64::new(det_inf, 0.0), alpha, 4.0)?;
    let w = count_roots(f, &rectangle(-alpha, r, -r, r), policy)?;
    let d0 = evans_ibvp(&dec, &lin.a, &lin.g, b, C64::new(0.0, 0.0))?;
    Ok(GapCertificate {
        alpha,
        margins: [-alpha - ab, f64::INFINITY],
        abscissa: [ab, f64::NEG_INFINITY],
        contour: [-alpha, r, -r, r],
        winding: w.winding,
        r,
        k_plus: dec.stable.len(),
        k_minus: 0,
        is_lax: true,
        det_at_zero: [d0.re, d0.im],
        det_inf,
        evals: w.evals,
        granted: w.winding == 0,
    })
}

/// Whole-line analogue: only the essential spectrum matters.
pub fn certify_gap_constant(a: &RMat, g: &RMat, alpha: f64) -> Result<GapCertificate> {
    let ab = essential_abscissa(a, g)?;
    if ab >= -alpha {
        return Err(Error::EssentialSpectrumIntrusion { alpha, abscissa: ab });
    }
    Ok(GapCertificate {
        alpha,
        margins: [-alpha - ab, -alpha - ab],
        abscissa: [ab, ab],
        contour: [0.0; 4],
        winding: 0,
        r: 0.0,
        k_plus: 0,
        k_minus: 0,
        is_lax: true,
        det_at_zero: [1.0, 0.0],
        det_inf: 1.0,
        evals: 0,
        granted: true,
    })
}

/// Lattice spacing and safety margin used to pick a certified gap below the essential abscissa.
pub const ALPHA_LATTICE: f64 = 0.01;
pub const ALPHA_SAFETY: f64 = 0.005;

/// Largest `alpha` on the lattice, at least `ALPHA_SAFETY` below `alpha0`.
pub fn lattice_alpha(alpha0: f64) -> f64 {
    ((alpha0 - ALPHA_SAFETY) / ALPHA_LATTICE + 1e-9).floor() * ALPHA_LATTICE
}

/// Largest lattice gap granted by `certify`, scanning down from the essential bound.
pub fn best_certificate<F>(alpha0: f64, certify: F) -> Result<GapCertificate>
where
    F: Fn(f64) -> Result<GapCertificate>,
{
    let mut alpha = lattice_alpha(alpha0);
    let mut last_err = Error::EssentialSpectrumIntrusion { alpha, abscissa: -alpha0 };
    while alpha > 1e-9 {
        match certify(alpha) {
            Ok(c) if c.granted => return Ok(c),
            Ok(_) => {}
            Err(e) => last_err = e,
        }
        alpha -= ALPHA_LATTICE;
        alpha = (alpha / ALPHA_LATTICE).round() * ALPHA_LATTICE;
    }
    Err(last_err)
}

pub fn best_certificate_shock(lin: &ShockLinearization, policy: &ContourPolicy) -> Result<GapCertificate> {
    let a0 = -essential_abscissa(&lin.a_plus, &lin.g_plus)?.max(essential_abscissa(&lin.a_minus, &lin.g_minus)?);
    best_certificate(a0, |a| certify_gap(lin, a, policy))
}

pub fn best_certificate_constant(a: &RMat, g: &RMat) -> Result<GapCertificate> {
    let a0 = -essential_abscissa(a, g)?;
    best_certificate(a0, |al| certify_gap_constant(a, g, al))
}

pub fn best_certificate_ibvp(lin: &ConstantLinearization, policy: &ContourPolicy) -> Result<GapCertificate> {
    let a0 = -essential_abscissa(&lin.a, &lin.g)?;
    best_certificate(a0, |al| certify_gap_ibvp(lin, al, policy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{diag, RVec};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn winding_of_simple_functions() {
        let p = ContourPolicy::default();
        let rect = rectangle(-1.0, 1.0, -1.0, 1.0);
        assert_eq!(count_roots(|z| Ok(z - c(0.2, 0.1)), &rect, &p).unwrap().winding, 1);
        assert_eq!(count_roots(|_| Ok(c(1.0, 0.0)), &rect, &p).unwrap().winding, 0);
        assert_eq!(count_roots(|z| Ok((z - c(0.5, 0.0)) * (z + c(0.3, 0.4))), &rect, &p).unwrap().winding, 2);
        assert_eq!(count_roots(|z| Ok(z - c(3.0, 0.0)), &rect, &p).unwrap().winding, 0);
        assert!(matches!(count_roots(|z| Ok(z - c(1.0, 0.0)), &rect, &p), Err(Error::ZeroOnContour { .. })));
    }

    #[test]
    fn ibvp_scalar_det_is_one() {
        let s = lopatinskii_det_ibvp(&diag(&[2.0]), &diag(&[-0.5]), &diag(&[1.0]), c(0.7, 3.0)).unwrap();
        assert!((s.det.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn ibvp_rank_and_dimension_errors() {
        let a = diag(&[-1.0, 1.0]);
        let g = -RMat::identity(2, 2);
        let zero = RMat::zeros(1, 2);
        assert!(matches!(lopatinskii_det_ibvp(&a, &g, &zero, c(1.0, 0.0)), Err(Error::InvalidBoundaryMap(_))));
        let two = RMat::identity(2, 2);
        assert!(matches!(lopatinskii_det_ibvp(&a, &g, &two, c(1.0, 0.0)), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn lax_counts_for_three_speed_patterns() {
        let mk = |dp: &[f64], dm: &[f64]| {
            ShockLinearization::from_matrices(diag(dp), diag(dm), -RMat::identity(3, 3), -RMat::identity(3, 3), RVec::from_vec(vec![1.0, 1.0, 1.0])).unwrap()
        };
        let a = lax_check(&mk(&[-1.0, -2.0, 1.0], &[1.0, 2.0, -1.0])).unwrap();
        assert_eq!((a.k_plus, a.k_minus, a.incoming_right, a.incoming_left, a.is_lax), (1, 1, 2, 2, true));
        let b = lax_check(&mk(&[-1.0, 1.0, 2.0], &[-1.0, -2.0, 1.0])).unwrap();
        assert_eq!((b.k_plus, b.k_minus, b.is_lax), (2, 2, false));
    }
}
