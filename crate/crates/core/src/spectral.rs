//! Eigenstructure of constant-coefficient linearizations.
//!
//! With `A = P^{-1} D P`, `D = diag(d_1 < ... < d_n)` and `G~ = P G P^{-1}`,
//! the compensator `Q` removes the off-diagonal part of `D^{-1} G~`:
//!
//! ```text
//!   Q_jk = G~_jk d_k / (d_k - d_j)  (j != k),   Q_jj = 0
//!   D^{-1} G~ - [D^{-1}, Q] = D^{-1} Gamma,   Gamma = diag(G~)
//!   G~ + [D, Q D^{-1}] = Gamma
//! ```
//!
//! Spatial eigenvalues of `L(lambda) = A^{-1}(G - lambda)` behave at high
//! frequency like
//!
//! ```text
//!   mu_j(lambda) = -(lambda + rho_j)/d_j + mu_j^1/lambda + O(lambda^-2),  rho_j = -gamma_j
//! ```

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, eigen, to_complex, Eigen, CMat, C64, RMat};

/// Tolerance on `|Re mu|` below which a spatial eigenvalue counts as neutral.
pub const DICHOTOMY_TOL: f64 = 1e-8;

/// Output of the diagonalization and compensator construction.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub n: usize,
    /// Rows are left eigenvectors of `A`.
    pub p: RMat,
    pub p_inv: RMat,
    pub d: Vec<f64>,
    /// `P G P^{-1}`.
    pub g_tilde: RMat,
    pub gamma: Vec<f64>,
    pub rho: Vec<f64>,
    /// Compensator `Q` (calligraphic in the text).
    pub q_comp: RMat,
    /// `Q D^{-1}`.
    pub q: RMat,
    /// `{j : d_j > 0}`.
    pub stable: Vec<usize>,
    /// `{j : d_j < 0}`.
    pub unstable: Vec<usize>,
}

impl SpectralDecomposition {
    pub fn new(a: &RMat, g: &RMat) -> Result<Self> {
        let (p, d) = diagonalize_convection(a)?;
        let p_inv = linalg::inv_r(&p).ok_or_else(|| Error::NotStrictlyHyperbolic("singular diagonalizer".into()))?;
        if g.nrows() != a.nrows() || g.ncols() != a.ncols() {
            return Err(Error::DimensionMismatch("A and G differ in size".into()));
        }
        let g_tilde = &p * g * &p_inv;
        let comp = kawashima_compensator(&d, &g_tilde)?;
        let n = d.len();
        Ok(SpectralDecomposition {
            n,
            p,
            p_inv,
            stable: (0..n).filter(|&j| d[j] > 0.0).collect(),
            unstable: (0..n).filter(|&j| d[j] < 0.0).collect(),
            d,
            g_tilde,
            gamma: comp.gamma,
            rho: comp.rho,
            q_comp: comp.q_comp,
            q: comp.q,
        })
    }

    pub fn d_mat(&self) -> RMat {
        linalg::diag(&self.d)
    }

    /// `e_j e_j^T`.
    pub fn pi0(&self, j: usize) -> RMat {
        let mut m = RMat::zeros(self.n, self.n);
        m[(j, j)] = 1.0;
        m
    }

    /// `P^{-1} (sum_{j in idx} e_j e_j^T) P`.
    pub fn projector(&self, idx: &[usize]) -> RMat {
        let mut m = RMat::zeros(self.n, self.n);
        for &j in idx {
            m[(j, j)] = 1.0;
        }
        &self.p_inv * m * &self.p
    }

    /// Projection on incoming characteristics at `x = 0` for the right half line.
    pub fn pi_s_inf(&self) -> RMat {
        self.projector(&self.stable)
    }

    pub fn pi_u_inf(&self) -> RMat {
        self.projector(&self.unstable)
    }

    /// `mu_j^inf(lambda) = -(lambda + rho_j)/d_j`.
    pub fn mu_inf(&self, j: usize, lambda: C64) -> C64 {
        -(lambda + self.rho[j]) / self.d[j]
    }

    /// Residual `||offdiag(D^{-1} G~ - [D^{-1}, Q])||_F`.
    pub fn compensator_residual(&self) -> f64 {
        let dinv = linalg::diag(&self.d.iter().map(|x| 1.0 / x).collect::<Vec<_>>());
        let comm = &dinv * &self.q_comp - &self.q_comp * &dinv;
        linalg::offdiag_fro(&(&dinv * &self.g_tilde - comm))
    }

    /// `max |G~ + [D, QD^{-1}] - Gamma|`.
    pub fn q_identity_residual(&self) -> f64 {
        let d = self.d_mat();
        let r = &self.g_tilde + (&d * &self.q - &self.q * &d) - linalg::diag(&self.gamma);
        linalg::max_abs(&r)
    }

    pub fn reconstruction_error(&self, a: &RMat) -> f64 {
        linalg::max_abs(&(&self.p_inv * self.d_mat() * &self.p - a)) / linalg::max_abs(a).max(1.0)
    }
}

/// `A = P^{-1} D P` with ascending speeds, unit rows and first nonzero entry of each row positive.
pub fn diagonalize_convection(a: &RMat) -> Result<(RMat, Vec<f64>)> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(Error::DimensionMismatch(format!("convection matrix is {}x{}", n, a.ncols())));
    }
    let scale = linalg::max_abs(a).max(1e-300);
    let e = eigen(&to_complex(a)).map_err(|_| Error::NotStrictlyHyperbolic("convection matrix is defective".into()))?;
    let mut d = Vec::with_capacity(n);
    for z in &e.values {
        if z.im.abs() > 1e-9 * scale {
            return Err(Error::NotStrictlyHyperbolic(format!("complex speed {} + {}i", z.re, z.im)));
        }
        d.push(z.re);
    }
    d.sort_by(|x, y| x.partial_cmp(y).unwrap());
    for w in d.windows(2) {
        if (w[1] - w[0]).abs() <= 1e-9 * scale {
            return Err(Error::NotStrictlyHyperbolic(format!("repeated speed {}", w[0])));
        }
    }
    if let Some(z) = d.iter().find(|x| x.abs() <= 1e-12 * scale) {
        return Err(Error::Characteristic(format!("zero characteristic speed {z:e}")));
    }
    let mut p = RMat::zeros(n, n);
    for (j, &dj) in d.iter().enumerate() {
        // left null vector of A - d_j, refined by one inverse-iteration pass
        let m = (a - RMat::identity(n, n) * dj).transpose();
        let svd = m.clone().svd(false, true);
        let vt = svd.v_t.ok_or_else(|| Error::NotStrictlyHyperbolic("SVD failed".into()))?;
        let (kmin, _) = svd.singular_values.iter().enumerate().fold((0, f64::INFINITY), |acc, (k, &s)| if s < acc.1 { (k, s) } else { acc });
        let mut row: Vec<f64> = (0..n).map(|c| vt[(kmin, c)]).collect();
        let nrm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        row.iter_mut().for_each(|x| *x /= nrm);
        let first = row.iter().copied().find(|x| x.abs() > 1e-12).unwrap_or(1.0);
        if first < 0.0 {
            row.iter_mut().for_each(|x| *x = -*x);
        }
        for c in 0..n {
            p[(j, c)] = row[c];
        }
    }
    // snap exact zeros for permutation-like diagonalizers
    p.iter_mut().for_each(|x| {
        if x.abs() < 1e-15 {
            *x = 0.0
        }
    });
    Ok((p, d))
}

/// Compensator pieces from the speeds and `G~ = P G P^{-1}`.
#[derive(Debug, Clone)]
pub struct Compensator {
    pub q_comp: RMat,
    pub gamma: Vec<f64>,
    pub rho: Vec<f64>,
    pub q: RMat,
}

pub fn kawashima_compensator(d: &[f64], g_tilde: &RMat) -> Result<Compensator> {
    let n = d.len();
    let mut q_comp = RMat::zeros(n, n);
    for j in 0..n {
        for k in 0..n {
            if j == k {
                continue;
            }
            if d[k] == d[j] {
                return Err(Error::NotStrictlyHyperbolic(format!("d_{j} = d_{k}")));
            }
            q_comp[(j, k)] = g_tilde[(j, k)] * d[k] / (d[k] - d[j]);
        }
    }
    let gamma: Vec<f64> = (0..n).map(|j| g_tilde[(j, j)]).collect();
    let rho = gamma.iter().map(|g| -g).collect();
    let dinv = linalg::diag(&d.iter().map(|x| 1.0 / x).collect::<Vec<_>>());
    let q = &q_comp * dinv;
    Ok(Compensator { q_comp, gamma, rho, q })
}

// ---------------------------------------------------------------------------
// Fourier symbol

#[derive(Debug, Clone, Serialize)]
pub struct SymbolCurve {
    pub xi: f64,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FourierSpectrum {
    pub curves: Vec<SymbolCurve>,
    /// Max over the grid of the spectral abscissa of `-i xi A + G`.
    pub max_re: f64,
    pub argmax_xi: f64,
    /// Largest deviation of the outermost grid points from `-rho_j - i d_j xi`, scaled by `|xi|`.
    pub asymptote_defect: f64,
    /// `max_j gamma_j`, the limit of the abscissa as `|xi| -> inf`.
    pub hf_limit: f64,
}

impl FourierSpectrum {
    pub fn below(&self, alpha: f64) -> bool {
        self.max_re < -alpha
    }
}

/// Eigenvalues of `-i xi A + G`.
pub fn symbol_eigenvalues(a: &RMat, g: &RMat, xi: f64) -> Result<Vec<C64>> {
    let m = to_complex(g) - to_complex(a) * C64::new(0.0, xi);
    Ok(eigen(&m)?.values)
}

fn abscissa(a: &RMat, g: &RMat, xi: f64) -> f64 {
    match symbol_eigenvalues(a, g, xi) {
        Ok(v) => v.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max),
        Err(_) => f64::INFINITY,
    }
}

/// Eigenvalue curves of the Fourier symbol on the given grid.
pub fn fourier_symbol_spectrum(a: &RMat, g: &RMat, xi_grid: &[f64]) -> Result<FourierSpectrum> {
    let dec = SpectralDecomposition::new(a, g)?;
    let curves: Vec<SymbolCurve> = xi_grid
        .par_iter()
        .map(|&xi| {
            let mut v = symbol_eigenvalues(a, g, xi)?;
            v.sort_by(|x, y| x.im.partial_cmp(&y.im).unwrap());
            Ok(SymbolCurve { xi, re: v.iter().map(|z| z.re).collect(), im: v.iter().map(|z| z.im).collect() })
        })
        .collect::<Result<_>>()?;
    let mut max_re = f64::NEG_INFINITY;
    let mut argmax_xi = 0.0;
    for c in &curves {
        let m = c.re.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if m > max_re {
            max_re = m;
            argmax_xi = c.xi;
        }
    }
    let mut asymptote_defect = 0.0_f64;
    let xmax = xi_grid.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    for c in curves.iter().filter(|c| c.xi.abs() == xmax && xmax > 0.0) {
        for (re, im) in c.re.iter().zip(&c.im) {
            let best = (0..dec.n)
                .map(|j| (C64::new(*re, *im) - C64::new(-dec.rho[j], -dec.d[j] * c.xi)).norm())
                .fold(f64::INFINITY, f64::min);
            asymptote_defect = asymptote_defect.max(best * c.xi.abs());
        }
    }
    let hf_limit = dec.gamma.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(FourierSpectrum { curves, max_re, argmax_xi, asymptote_defect, hf_limit })
}

/// `sup_{xi in R}` of the spectral abscissa of `-i xi A + G`.
///
/// The line is compactified by `xi = tan s`; the endpoint value is the exact
/// limit `max_j gamma_j`, and local maxima of a dense grid are polished by
/// golden-section search.
pub fn symbol_abscissa_sup(a: &RMat, g: &RMat, samples: usize) -> Result<f64> {
    let dec = SpectralDecomposition::new(a, g)?;
    let hf = dec.gamma.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let half = std::f64::consts::FRAC_PI_2;
    let s_grid: Vec<f64> = (1..samples).map(|k| -half + std::f64::consts::PI * k as f64 / samples as f64).collect();
    let vals: Vec<f64> = s_grid.par_iter().map(|&s| abscissa(a, g, s.tan())).collect();
    let mut best = hf;
    for k in 0..vals.len() {
        best = best.max(vals[k]);
        let left = if k == 0 { hf } else { vals[k - 1] };
        let right = if k + 1 == vals.len() { hf } else { vals[k + 1] };
        if vals[k] >= left && vals[k] >= right {
            let lo = if k == 0 { -half } else { s_grid[k - 1] };
            let hi = if k + 1 == vals.len() { half } else { s_grid[k + 1] };
            best = best.max(golden_max(|s| abscissa(a, g, s.tan()), lo, hi, 60));
        }
    }
    Ok(best)
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..iters {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        }
    }
    f1.max(f2)
}

// ---------------------------------------------------------------------------
// spatial dichotomy

#[derive(Debug, Clone)]
pub struct DichotomyData {
    pub lambda: C64,
    /// `A^{-1}(G - lambda)`.
    pub l: CMat,
    pub eig: Eigen,
    pub stable_idx: Vec<usize>,
    pub unstable_idx: Vec<usize>,
    pub pi_s: CMat,
    pub pi_u: CMat,
    pub margin: f64,
}

impl DichotomyData {
    pub fn mu(&self) -> &[C64] {
        &self.eig.values
    }

    pub fn k_s(&self) -> usize {
        self.stable_idx.len()
    }
}

/// `L(lambda) = A^{-1}(G - lambda)`.
pub fn spatial_matrix(a: &RMat, g: &RMat, lambda: C64) -> Result<CMat> {
    let ainv = linalg::inv_r(a).ok_or_else(|| Error::Characteristic("A is singular".into()))?;
    let n = a.nrows();
    Ok(to_complex(&ainv) * (to_complex(g) - CMat::identity(n, n) * lambda))
}

/// Stable and unstable spectral projectors of `L(lambda)`.
pub fn spatial_projectors(a: &RMat, g: &RMat, lambda: C64) -> Result<DichotomyData> {
    let l = spatial_matrix(a, g, lambda)?;
    let eig = eigen(&l)?;
    let margin = eig.values.iter().map(|z| z.re.abs()).fold(f64::INFINITY, f64::min);
    if margin < DICHOTOMY_TOL {
        return Err(Error::NoDichotomy { re: lambda.re, im: lambda.im, margin });
    }
    let stable_idx: Vec<usize> = (0..eig.dim()).filter(|&k| eig.values[k].re < 0.0).collect();
    let unstable_idx: Vec<usize> = (0..eig.dim()).filter(|&k| eig.values[k].re > 0.0).collect();
    let pi_s = eig.projector(&stable_idx);
    let pi_u = eig.projector(&unstable_idx);
    Ok(DichotomyData { lambda, l, eig, stable_idx, unstable_idx, pi_s, pi_u, margin })
}

// ---------------------------------------------------------------------------
// high-frequency expansion

/// Real ladder used for Richardson extrapolation.
pub const HF_LADDER: [f64; 3] = [1e2, 1e3, 1e4];

#[derive(Debug, Clone)]
pub struct HFExpansion {
    pub rho: Vec<f64>,
    pub d: Vec<f64>,
    pub mu1: Vec<f64>,
    /// Corrector of the spectral projectors in `P` coordinates:
    /// `P Pi_j(lambda) P^{-1} = e_j e_j^T + Pi_j^1/lambda + O(lambda^-2)`.
    pub pi1: Vec<RMat>,
    /// `|mu_j - mu_j^inf - mu_j^1/lambda|` on the ladder, per `j`.
    pub remainders: Vec<Vec<f64>>,
    /// Fitted log-log slope of the worst remainder against `lambda`.
    pub remainder_slope: f64,
    /// Fitted log-log slope of `max_j |mu_j - mu_j^inf|`.
    pub first_order_slope: f64,
}

/// Eigen-decomposition of `D^{-1}(G~ - lambda)` with modes ordered by the
/// high-frequency labels `j` (nearest `mu_j^inf`). Valid for large `|lambda|`.
pub fn labeled_modes(dec: &SpectralDecomposition, lambda: C64) -> Result<(Vec<C64>, CMat, CMat)> {
    let n = dec.n;
    let dinv = linalg::diag(&dec.d.iter().map(|x| 1.0 / x).collect::<Vec<_>>());
    let m = to_complex(&dinv) * (to_complex(&dec.g_tilde) - CMat::identity(n, n) * lambda);
    let e = eigen(&m)?;
    let mut used = vec![false; n];
    let mut order = vec![usize::MAX; n];
    for j in 0..n {
        let target = dec.mu_inf(j, lambda);
        let mut best = (usize::MAX, f64::INFINITY);
        for k in 0..n {
            let dist = (e.values[k] - target).norm();
            if !used[k] && dist < best.1 {
                best = (k, dist);
            }
        }
        used[best.0] = true;
        order[j] = best.0;
    }
    let mut vals = Vec::with_capacity(n);
    let mut right = CMat::zeros(n, n);
    let mut left = CMat::zeros(n, n);
    for (j, &k) in order.iter().enumerate() {
        vals.push(e.values[k]);
        right.set_column(j, &e.vectors.column(k));
        left.set_row(j, &e.left.row(k));
    }
    Ok((vals, right, left))
}

/// Quadratic extrapolation to `h = 0` through three samples `(h_i, f_i)`.
pub fn richardson3(h: [f64; 3], f: [f64; 3]) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        let mut w = 1.0;
        for k in 0..3 {
            if k != i {
                w *= (0.0 - h[k]) / (h[i] - h[k]);
            }
        }
        s += w * f[i];
    }
    s
}

pub fn richardson3_c(h: [f64; 3], f: [C64; 3]) -> C64 {
    C64::new(richardson3(h, [f[0].re, f[1].re, f[2].re]), richardson3(h, [f[0].im, f[1].im, f[2].im]))
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).filter(|(_, &v)| v > 0.0).map(|(&a, &b)| (a.ln(), b.ln())).collect();
    let m = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Correctors `mu_j^1` and `Pi_j^1` by Richardson extrapolation along [`HF_LADDER`].
pub fn hf_expansion(dec: &SpectralDecomposition) -> Result<HFExpansion> {
    let n = dec.n;
    let samples: Vec<(Vec<C64>, CMat, CMat)> =
        HF_LADDER.iter().map(|&lam| labeled_modes(dec, C64::new(lam, 0.0))).collect::<Result<_>>()?;
    let h = [1.0 / HF_LADDER[0], 1.0 / HF_LADDER[1], 1.0 / HF_LADDER[2]];
    let mut mu1 = vec![0.0; n];
    let mut pi1 = Vec::with_capacity(n);
    for j in 0..n {
        let f: Vec<C64> = (0..3)
            .map(|i| {
                let lam = C64::new(HF_LADDER[i], 0.0);
                lam * (samples[i].0[j] - dec.mu_inf(j, lam))
            })
            .collect();
        let est = richardson3_c(h, [f[0], f[1], f[2]]);
        if est.im.abs() > 1e-6 * (1.0 + est.re.abs()) {
            return Err(Error::ExpansionFailure(format!("complex corrector for mode {j}: {est}")));
        }
        mu1[j] = est.re;
        let pj: Vec<CMat> = (0..3)
            .map(|i| {
                let (_, r, l) = &samples[i];
                let proj = r.column(j) * l.row(j);
                (proj - to_complex(&dec.pi0(j))) * C64::new(HF_LADDER[i], 0.0)
            })
            .collect();
        let mut m = RMat::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                m[(a, b)] = richardson3(h, [pj[0][(a, b)].re, pj[1][(a, b)].re, pj[2][(a, b)].re]);
            }
        }
        pi1.push(m);
    }
    // consistency: the first two ladder differences must agree with the extrapolant
    for j in 0..n {
        let f1 = HF_LADDER[1] * (samples[1].0[j] - dec.mu_inf(j, C64::new(HF_LADDER[1], 0.0))).re;
        let f2 = HF_LADDER[2] * (samples[2].0[j] - dec.mu_inf(j, C64::new(HF_LADDER[2], 0.0))).re;
        let scale = 1.0 + mu1[j].abs();
        if (f2 - mu1[j]).abs() > 10.0 * (f1 - mu1[j]).abs() + 1e-6 * scale {
            return Err(Error::ExpansionFailure(format!("ladder not converging for mode {j}")));
        }
    }
    let mut remainders = vec![vec![0.0; 3]; n];
    let mut worst = [0.0_f64; 3];
    let mut first = [0.0_f64; 3];
    for i in 0..3 {
        let lam = C64::new(HF_LADDER[i], 0.0);
        for j in 0..n {
            let diff = samples[i].0[j] - dec.mu_inf(j, lam);
            let r = (diff - mu1[j] / lam).norm();
            remainders[j][i] = r;
            worst[i] = worst[i].max(r);
            first[i] = first[i].max(diff.norm());
        }
    }
    Ok(HFExpansion {
        rho: dec.rho.clone(),
        d: dec.d.clone(),
        mu1,
        pi1,
        remainders,
        remainder_slope: loglog_slope(&HF_LADDER, &worst),
        first_order_slope: loglog_slope(&HF_LADDER, &first),
    })
}

/// `mu_j^1 = sum_{k != j} G~_jk G~_kj / (d_j - d_k)`.
pub fn mu1_closed_form(dec: &SpectralDecomposition) -> Vec<f64> {
    (0..dec.n)
        .map(|j| {
            (0..dec.n).filter(|&k| k != j).map(|k| dec.g_tilde[(j, k)] * dec.g_tilde[(k, j)] / (dec.d[j] - dec.d[k])).sum()
        })
        .collect()
}

/// `[Q, e_j e_j^T]`.
pub fn pi1_closed_form(dec: &SpectralDecomposition, j: usize) -> RMat {
    let p0 = dec.pi0(j);
    &dec.q_comp * &p0 - &p0 * &dec.q_comp
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system_model::{appendix_3x3_convection, appendix_3x3_source};

    #[test]
    fn appendix_diagonalizer_is_signed_permutation() {
        let (p, d) = diagonalize_convection(&appendix_3x3_convection()).unwrap();
        assert_eq!(d, vec![1.0, 2.0, 3.0]);
        for i in 0..3 {
            let nz: Vec<f64> = p.row(i).iter().copied().filter(|x| *x != 0.0).collect();
            assert_eq!(nz, vec![1.0]);
        }
    }

    #[test]
    fn involution_speeds() {
        let a = RMat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let (p, d) = diagonalize_convection(&a).unwrap();
        assert!((d[0] + 1.0).abs() < 1e-14 && (d[1] - 1.0).abs() < 1e-14);
        let dec = SpectralDecomposition::new(&a, &RMat::zeros(2, 2)).unwrap();
        assert!(dec.reconstruction_error(&a) < 1e-14);
        assert!(p[(0, 0)] > 0.0 && p[(1, 0)] > 0.0);
    }

    #[test]
    fn rejects_complex_repeated_and_zero_speeds() {
        let rot = RMat::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!(matches!(diagonalize_convection(&rot), Err(Error::NotStrictlyHyperbolic(_))));
        assert!(matches!(diagonalize_convection(&linalg::diag(&[1.0, 1.0])), Err(Error::NotStrictlyHyperbolic(_))));
        assert!(matches!(diagonalize_convection(&linalg::diag(&[0.0, 1.0])), Err(Error::Characteristic(_))));
    }

    #[test]
    fn appendix_gamma_is_minus_identity() {
        let dec = SpectralDecomposition::new(&appendix_3x3_convection(), &appendix_3x3_source(0.0)).unwrap();
        assert_eq!(dec.gamma, vec![-1.0, -1.0, -1.0]);
        assert_eq!(dec.rho, vec![1.0, 1.0, 1.0]);
        assert!(dec.compensator_residual() < 1e-12);
        assert!(dec.q_identity_residual() < 1e-12);
    }

    #[test]
    fn two_speed_compensator_entry() {
        let g = RMat::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, -1.0]);
        let dec = SpectralDecomposition::new(&linalg::diag(&[1.0, 3.0]), &g).unwrap();
        assert!((dec.q_comp[(0, 1)] - 1.5).abs() < 1e-15);
        assert!(dec.compensator_residual() < 1e-12);
    }

    #[test]
    fn symbol_with_minus_identity_source() {
        let a = RMat::from_row_slice(2, 2, &[0.3, 1.0, 1.0, -0.5]);
        let g = -RMat::identity(2, 2);
        let grid: Vec<f64> = (-20..=20).map(|k| k as f64 * 0.5).collect();
        let s = fourier_symbol_spectrum(&a, &g, &grid).unwrap();
        for c in &s.curves {
            for re in &c.re {
                assert!((re + 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unstable_2x2_detected() {
        let a = linalg::diag(&[1.0, 2.0]);
        let g = RMat::from_row_slice(2, 2, &[-1.0, 2.0, 1.0, -1.0]);
        let grid: Vec<f64> = (-100..=100).map(|k| k as f64 * 0.1).collect();
        assert!(fourier_symbol_spectrum(&a, &g, &grid).unwrap().max_re > 0.0);
    }

    #[test]
    fn scalar_projector_sign() {
        let theta = 0.25;
        let d = spatial_projectors(&RMat::from_element(1, 1, -0.5), &RMat::from_element(1, 1, -theta), C64::new(1.0, 0.0)).unwrap();
        assert!((d.mu()[0].re - 2.5).abs() < 1e-14);
        assert_eq!(d.pi_s[(0, 0)].norm(), 0.0);
        assert!((d.pi_u[(0, 0)].re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn hf_correctors_match_closed_form() {
        let dec = SpectralDecomposition::new(&appendix_3x3_convection(), &appendix_3x3_source(0.0)).unwrap();
        let hf = hf_expansion(&dec).unwrap();
        let oracle = mu1_closed_form(&dec);
        for j in 0..3 {
            assert!((hf.mu1[j] - oracle[j]).abs() < 1e-6, "{} vs {}", hf.mu1[j], oracle[j]);
            assert!(linalg::max_abs(&(&hf.pi1[j] - pi1_closed_form(&dec, j))) < 1e-6);
        }
        assert!((hf.remainder_slope + 2.0).abs() < 0.1, "slope {}", hf.remainder_slope);
        assert!((hf.first_order_slope + 1.0).abs() < 0.1);
    }
}
