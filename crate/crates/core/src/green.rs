//! Green kernels of the resolvent, their singular parts and the linear propagator.
//!
//! For `lambda` to the right of the essential spectrum the resolvent acts through
//! the modes `(mu_k, r_k, l_k)` of `L(lambda) = A^{-1}(G - lambda)`:
//!
//! ```text
//!   K_lambda(x) =  sum_{Re mu_k < 0} e^{mu_k x} r_k l_k A^{-1}     x > 0
//!               = -sum_{Re mu_k > 0} e^{mu_k x} r_k l_k A^{-1}     x < 0
//! ```
//!
//! and on bounded geometries the boundary map is inverted on the decaying modes.
//! Each kernel term is modelled at high frequency by
//!
//! ```text
//!   e^{mu_j^inf x - mu_l^inf y} [ M0 + (M1 + (x mu_j^1 - y mu_l^1) M0) / (lambda + rho*) ]
//! ```
//!
//! whose time-domain counterpart is a transported Dirac mass plus a bounded
//! windowed integral. The remainder is `O(|lambda|^-2)` and is inverted by the
//! trapezoidal rule on `Re lambda = eta`.
//!
//! Data are piecewise cubic on uniform grids (four-point Lagrange cells). The
//! resolvent sweeps integrate these cells exactly against exponentials, and the
//! Dirac shifts evaluate the same cells, so both halves of the split see the
//! same interpolant.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, to_complex, CMat, CVec, C64, RMat, RVec};
use crate::spectral::{labeled_modes, richardson3, spatial_projectors, SpectralDecomposition, HF_LADDER};
use crate::system_model::{ConstantLinearization, ShockLinearization};

// ---------------------------------------------------------------------------
// grids and piecewise cubic cells

/// Uniform grid `x_k = x0 + k h`, `k = 0..len`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x0: f64,
    pub h: f64,
    pub len: usize,
}

impl Grid {
    pub fn new(x0: f64, x1: f64, len: usize) -> Result<Self> {
        if len < 4 || !(x1 > x0) {
            return Err(Error::Precondition(format!("grid [{x0}, {x1}] with {len} points")));
        }
        Ok(Grid { x0, h: (x1 - x0) / (len - 1) as f64, len })
    }

    /// Grid on `[a, b]` with spacing close to `h` (rounded so that both ends are nodes).
    pub fn spanning(a: f64, b: f64, h: f64) -> Result<Self> {
        let cells = ((b - a) / h).round().max(3.0) as usize;
        Grid::new(a, b, cells + 1)
    }

    pub fn x(&self, k: usize) -> f64 {
        self.x0 + k as f64 * self.h
    }

    pub fn end(&self) -> f64 {
        self.x(self.len - 1)
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len).map(|k| self.x(k)).collect()
    }

    fn contains(&self, x: f64) -> bool {
        let tol = 1e-12 * (1.0 + self.h);
        x >= self.x0 - tol && x <= self.end() + tol
    }
}

const STENCIL_OFFSETS: [[f64; 4]; 3] = [[-1.0, 0.0, 1.0, 2.0], [0.0, 1.0, 2.0, 3.0], [-2.0, -1.0, 0.0, 1.0]];

/// `coef[s][i][m]`: monomial coefficients in `r` of the `i`-th Lagrange basis
/// polynomial of stencil `s` on the cell `r in [0, 1]`.
fn stencil_table() -> &'static [[[f64; 4]; 4]; 3] {
    static TABLE: OnceLock<[[[f64; 4]; 4]; 3]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [[[0.0; 4]; 4]; 3];
        for (s, o) in STENCIL_OFFSETS.iter().enumerate() {
            for i in 0..4 {
                let mut poly = [1.0, 0.0, 0.0, 0.0];
                let mut denom = 1.0;
                for k in 0..4 {
                    if k == i {
                        continue;
                    }
                    // multiply by (r - o_k)
                    let mut next = [0.0; 4];
                    for m in 0..4 {
                        if m + 1 < 4 {
                            next[m + 1] += poly[m];
                        }
                        next[m] -= o[k] * poly[m];
                    }
                    poly = next;
                    denom *= o[i] - o[k];
                }
                for m in 0..4 {
                    t[s][i][m] = poly[m] / denom;
                }
            }
        }
        t
    })
}

/// Stencil index and first node of cell `k` (between `x_k` and `x_{k+1}`).
fn cell_stencil(k: usize, len: usize) -> (usize, usize) {
    if k == 0 {
        (1, 0)
    } else if k + 2 >= len {
        (2, len - 4)
    } else {
        (0, k - 1)
    }
}

trait Sample: Copy + Default + std::ops::Add<Output = Self> + std::ops::Mul<f64, Output = Self> {}
impl Sample for f64 {}
impl Sample for C64 {}

/// Piecewise-cubic interpolant of nodal values; zero outside the grid.
fn interp<T: Sample>(f: &[T], grid: &Grid, x: f64) -> T {
    if !grid.contains(x) {
        return T::default();
    }
    let s = ((x - grid.x0) / grid.h).max(0.0);
    let k = (s.floor() as usize).min(grid.len - 2);
    let r = s - k as f64;
    let (st, first) = cell_stencil(k, grid.len);
    let tab = &stencil_table()[st];
    let mut acc = T::default();
    for i in 0..4 {
        let c = &tab[i];
        let w = c[0] + r * (c[1] + r * (c[2] + r * c[3]));
        acc = acc + f[first + i] * w;
    }
    acc
}

/// Interpolant evaluated at `x` clamped into the grid.
fn interp_clamped(f: &[f64], grid: &Grid, x: f64) -> f64 {
    interp(f, grid, x.clamp(grid.x0, grid.end()))
}

/// Piecewise-cubic interpolation of a real nodal field at `x` (zero outside the grid).
pub fn interpolate(f: &[f64], grid: &Grid, x: f64) -> f64 {
    interp(f, grid, x)
}

// ---------------------------------------------------------------------------
// exponential sweeps

/// Direction of integration of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `w(x) = int_{x0}^x e^{mu (x - y)} f(y) dy`.
    Forward,
    /// `w(x) = int_x^{end} e^{mu (x - y)} f(y) dy`.
    Backward,
}

/// `int_0^1 e^{w r} r^m dr`, `m = 0..3`.
fn moments(w: C64) -> [C64; 4] {
    let mut out = [C64::new(0.0, 0.0); 4];
    if w.norm() < 1.0 {
        // sum_k w^k / (k! (m + k + 1))
        let mut term = C64::new(1.0, 0.0);
        for k in 0..30 {
            for (m, o) in out.iter_mut().enumerate() {
                *o += term / (m + k + 1) as f64;
            }
            term = term * w / (k + 1) as f64;
        }
        out
    } else {
        let e = w.exp();
        out[0] = (e - 1.0) / w;
        for m in 1..4 {
            out[m] = (e - out[m - 1] * m as f64) / w;
        }
        out
    }
}

/// `int_0^1 e^{z (1 - r)} r^m dr`, `m = 0..3`, for `Re z <= 0` or small `|z|`.
fn moments_reversed(z: C64) -> [C64; 4] {
    let mut out = [C64::new(0.0, 0.0); 4];
    if z.norm() < 1.0 {
        // sum_k z^k m! / (m + k + 1)!
        for m in 0..4 {
            let mut term = C64::new(1.0, 0.0);
            let mut fact = 1.0;
            for j in 1..=(m + 1) {
                fact *= j as f64;
            }
            let mfact: f64 = (1..=m).map(|j| j as f64).product();
            term *= mfact / fact;
            let mut s = C64::new(0.0, 0.0);
            for k in 0..30 {
                s += term;
                term = term * z / (m + k + 2) as f64;
            }
            out[m] = s;
        }
        out
    } else {
        out[0] = (z.exp() - 1.0) / z;
        for m in 1..4 {
            out[m] = (out[m - 1] * m as f64 - 1.0) / z;
        }
        out
    }
}

/// Cell weights for each stencil: `int_cell kernel * interpolant = h sum_i W[s][i] f_i`.
fn cell_weights(mom: &[C64; 4]) -> [[C64; 4]; 3] {
    let tab = stencil_table();
    let mut w = [[C64::new(0.0, 0.0); 4]; 3];
    for s in 0..3 {
        for i in 0..4 {
            let mut acc = C64::new(0.0, 0.0);
            for m in 0..4 {
                acc += mom[m] * tab[s][i][m];
            }
            w[s][i] = acc;
        }
    }
    w
}

struct SweepPlan {
    step: C64,
    weights: [[C64; 4]; 3],
    h: f64,
    dir: Direction,
}

impl SweepPlan {
    fn new(grid: &Grid, mu: C64, dir: Direction) -> Self {
        let z = mu * grid.h;
        match dir {
            Direction::Forward => SweepPlan { step: z.exp(), weights: cell_weights(&moments_reversed(z)), h: grid.h, dir },
            Direction::Backward => SweepPlan { step: (-z).exp(), weights: cell_weights(&moments(-z)), h: grid.h, dir },
        }
    }

    #[inline]
    fn cell(&self, f: &[C64], k: usize, len: usize) -> C64 {
        let (st, first) = cell_stencil(k, len);
        let w = &self.weights[st];
        (w[0] * f[first] + w[1] * f[first + 1] + w[2] * f[first + 2] + w[3] * f[first + 3]) * self.h
    }

    fn run(&self, f: &[C64]) -> Vec<C64> {
        let len = f.len();
        let mut w = vec![C64::new(0.0, 0.0); len];
        match self.dir {
            Direction::Forward => {
                for k in 0..len - 1 {
                    w[k + 1] = self.step * w[k] + self.cell(f, k, len);
                }
            }
            Direction::Backward => {
                for k in (0..len - 1).rev() {
                    w[k] = self.step * w[k + 1] + self.cell(f, k, len);
                }
            }
        }
        w
    }

    /// Value of the sweep at its far end only.
    fn end_value(&self, f: &[C64]) -> C64 {
        let len = f.len();
        let mut acc = C64::new(0.0, 0.0);
        match self.dir {
            Direction::Forward => {
                for k in 0..len - 1 {
                    acc = self.step * acc + self.cell(f, k, len);
                }
            }
            Direction::Backward => {
                for k in (0..len - 1).rev() {
                    acc = self.step * acc + self.cell(f, k, len);
                }
            }
        }
        acc
    }
}

/// Exact exponential integral of the piecewise-cubic interpolant of `f`.
pub fn sweep(f: &[C64], grid: &Grid, mu: C64, dir: Direction) -> Vec<C64> {
    SweepPlan::new(grid, mu, dir).run(f)
}

fn sweep_real(f: &[f64], grid: &Grid, mu: f64, dir: Direction) -> Vec<f64> {
    let fc: Vec<C64> = f.iter().map(|&v| C64::new(v, 0.0)).collect();
    SweepPlan::new(grid, C64::new(mu, 0.0), dir).run(&fc).into_iter().map(|z| z.re).collect()
}

// ---------------------------------------------------------------------------
// fields and data

/// Vector field sampled on a grid: `comps[i][k]` is component `i` at `x_k`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SideField {
    pub grid: Grid,
    pub comps: Vec<Vec<f64>>,
}

impl SideField {
    pub fn zeros(grid: Grid, n: usize) -> Self {
        SideField { grid, comps: vec![vec![0.0; grid.len]; n] }
    }

    pub fn from_fn<F: Fn(f64) -> RVec>(grid: Grid, n: usize, f: F) -> Self {
        let mut out = SideField::zeros(grid, n);
        for k in 0..grid.len {
            let v = f(grid.x(k));
            for i in 0..n {
                out.comps[i][k] = v[i];
            }
        }
        out
    }

    pub fn n(&self) -> usize {
        self.comps.len()
    }

    pub fn at(&self, k: usize) -> RVec {
        RVec::from_iterator(self.n(), self.comps.iter().map(|c| c[k]))
    }

    /// Interpolated value at `x` (zero outside the grid).
    pub fn eval(&self, x: f64) -> RVec {
        RVec::from_iterator(self.n(), self.comps.iter().map(|c| interp(c, &self.grid, x)))
    }

    /// Composite-Simpson `L^2` norm of the Euclidean magnitude.
    pub fn l2(&self) -> f64 {
        let sq: Vec<f64> = (0..self.grid.len).map(|k| self.comps.iter().map(|c| c[k] * c[k]).sum()).collect();
        simpson(&sq, self.grid.h).max(0.0).sqrt()
    }

    pub fn l1(&self) -> f64 {
        let ab: Vec<f64> =
            (0..self.grid.len).map(|k| self.comps.iter().map(|c| c[k] * c[k]).sum::<f64>().sqrt()).collect();
        simpson(&ab, self.grid.h)
    }

    pub fn sup(&self) -> f64 {
        self.comps.iter().flat_map(|c| c.iter()).fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    fn axpy(&mut self, a: f64, other: &SideField) {
        for (c, o) in self.comps.iter_mut().zip(&other.comps) {
            for (x, y) in c.iter_mut().zip(o) {
                *x += a * y;
            }
        }
    }
}

/// Simpson's rule on uniform samples (trapezoid on a trailing odd cell).
pub fn simpson(f: &[f64], h: f64) -> f64 {
    let n = f.len();
    if n < 2 {
        return 0.0;
    }
    let cells = n - 1;
    let even = cells - cells % 2;
    let mut s = 0.0;
    let mut k = 0;
    while k < even {
        s += f[k] + 4.0 * f[k + 1] + f[k + 2];
        k += 2;
    }
    s *= h / 3.0;
    if even < cells {
        s += 0.5 * h * (f[cells - 1] + f[cells]);
    }
    s
}

pub fn fields_l2(fields: &[SideField]) -> f64 {
    fields.iter().map(|f| f.l2().powi(2)).sum::<f64>().sqrt()
}

pub fn fields_l1(fields: &[SideField]) -> f64 {
    fields.iter().map(|f| f.l1()).sum()
}

/// Boundary forcing `phi(t)` for the half-line and shock geometries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Forcing {
    #[default]
    None,
    /// `phi(t) = e^{-beta t} phi0`.
    Exponential { phi0: Vec<f64>, beta: f64 },
}

impl Forcing {
    pub fn at(&self, t: f64, dim: usize) -> RVec {
        match self {
            Forcing::None => RVec::zeros(dim),
            Forcing::Exponential { phi0, beta } => RVec::from_iterator(dim, phi0.iter().map(|p| p * (-beta * t).exp())),
        }
    }

    /// Laplace transform.
    pub fn hat(&self, lambda: C64, dim: usize) -> CVec {
        match self {
            Forcing::None => CVec::zeros(dim),
            Forcing::Exponential { phi0, beta } => {
                CVec::from_iterator(dim, phi0.iter().map(|p| C64::new(*p, 0.0) / (lambda + beta)))
            }
        }
    }

    fn is_none(&self) -> bool {
        matches!(self, Forcing::None)
    }
}

/// Initial data and boundary forcing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearData {
    /// One field per side: whole line and half line use one, the shock uses `[plus, minus]`.
    pub fields: Vec<SideField>,
    #[serde(default)]
    pub forcing: Forcing,
}

// ---------------------------------------------------------------------------
// kernel set

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Geometry {
    WholeLine,
    HalfLine,
    Shock,
}

/// Output slot of a boundary-mediated kernel term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Out {
    Field { side: usize, j: usize },
    Phase,
}

/// Input slot of a boundary-mediated kernel term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Inp {
    Field { side: usize, l: usize },
    Forcing,
}

/// High-frequency model of one direct transport term on a side.
#[derive(Debug, Clone)]
struct DirTerm {
    j: usize,
    d: f64,
    rho: f64,
    mu1: f64,
    /// `M0 = u v^T`.
    u: RVec,
    v: RVec,
    m1: RMat,
}

/// Constant-coefficient data of one side.
#[derive(Debug, Clone)]
pub struct SideOperator {
    pub a: RMat,
    pub g: RMat,
    pub a_inv: RMat,
    pub dec: SpectralDecomposition,
    pub mu1: Vec<f64>,
    dir: Vec<DirTerm>,
}

/// Boundary-mediated term `e^{mu_j x - mu_l y} N(lambda)` with `N = M0 + M1/lambda + ...`.
#[derive(Debug, Clone, Serialize)]
pub struct CrossTerm {
    pub out: Out,
    pub inp: Inp,
    pub m0: RMat,
    pub m1: RMat,
}

/// Spectral Green kernels of one geometry, with their high-frequency models.
#[derive(Debug, Clone)]
pub struct GreenKernelSet {
    pub geometry: Geometry,
    /// Whole/half line: one side. Shock: `[plus, minus]`.
    pub sides: Vec<SideOperator>,
    /// Half-line boundary matrix `B`.
    pub boundary: Option<RMat>,
    /// Shock jump `[U]_0`.
    pub jump: Option<RVec>,
    pub cross: Vec<CrossTerm>,
}

/// Complex frame `(r_j columns, l_j rows)` in original coordinates, ordered by label.
type Frame = (CMat, CMat);

fn frame_at(dec: &SpectralDecomposition, lambda: C64) -> Result<Frame> {
    let (_, rp, lp) = labeled_modes(dec, lambda)?;
    Ok((to_complex(&dec.p_inv) * rp, lp * to_complex(&dec.p)))
}

fn frame_inf(dec: &SpectralDecomposition) -> Frame {
    (to_complex(&dec.p_inv), to_complex(&dec.p))
}

fn rank_one(fr: &Frame, j: usize) -> CMat {
    fr.0.column(j) * fr.1.row(j)
}

fn side_operator(a: &RMat, g: &RMat) -> Result<SideOperator> {
    let dec = SpectralDecomposition::new(a, g)?;
    let a_inv = linalg::inv_r(a).ok_or_else(|| Error::Characteristic("singular convection matrix".into()))?;
    let n = dec.n;
    let mut dir = Vec::with_capacity(n);
    for j in 0..n {
        let d = dec.d[j];
        dir.push(DirTerm {
            j,
            d,
            rho: dec.rho[j],
            mu1: 0.0,
            u: dec.p_inv.column(j).into_owned(),
            v: dec.p.row(j).transpose() / d.abs(),
            m1: RMat::zeros(n, n),
        });
    }
    Ok(SideOperator { a: a.clone(), g: g.clone(), a_inv, dec, mu1: vec![0.0; n], dir })
}

/// `lambda (N(lambda) - M0)` extrapolated to `lambda = inf` on the real ladder.
fn extrapolate_first_order(m0: &CMat, samples: &[CMat; 3]) -> RMat {
    let h = [1.0 / HF_LADDER[0], 1.0 / HF_LADDER[1], 1.0 / HF_LADDER[2]];
    let mut out = RMat::zeros(m0.nrows(), m0.ncols());
    for a in 0..m0.nrows() {
        for b in 0..m0.ncols() {
            let f = [0, 1, 2].map(|i| ((samples[i][(a, b)] - m0[(a, b)]) * HF_LADDER[i]).re);
            out[(a, b)] = richardson3(h, f);
        }
    }
    out
}

impl GreenKernelSet {
    pub fn whole_line(a: &RMat, g: &RMat) -> Result<Self> {
        let side = side_operator(a, g)?;
        let mut k = GreenKernelSet { geometry: Geometry::WholeLine, sides: vec![side], boundary: None, jump: None, cross: vec![] };
        k.build_models()?;
        Ok(k)
    }

    pub fn half_line(a: &RMat, g: &RMat, b: &RMat) -> Result<Self> {
        let side = side_operator(a, g)?;
        let n = side.dec.n;
        if b.ncols() != n {
            return Err(Error::DimensionMismatch(format!("B has {} columns, n = {n}", b.ncols())));
        }
        if b.nrows() != side.dec.stable.len() {
            return Err(Error::InvalidBoundaryMap(format!(
                "B has {} rows but there are {} incoming characteristics",
                b.nrows(),
                side.dec.stable.len()
            )));
        }
        let mut k = GreenKernelSet {
            geometry: Geometry::HalfLine,
            sides: vec![side],
            boundary: Some(b.clone()),
            jump: None,
            cross: vec![],
        };
        k.build_models()?;
        Ok(k)
    }

    pub fn constant(lin: &ConstantLinearization) -> Result<Self> {
        match &lin.b {
            Some(b) => GreenKernelSet::half_line(&lin.a, &lin.g, b),
            None => GreenKernelSet::whole_line(&lin.a, &lin.g),
        }
    }

    pub fn shock(lin: &ShockLinearization) -> Result<Self> {
        let plus = side_operator(&lin.a_plus, &lin.g_plus)?;
        let minus = side_operator(&lin.a_minus, &lin.g_minus)?;
        let k_plus = plus.dec.stable.len();
        let k_minus = minus.dec.unstable.len();
        if 1 + k_plus + k_minus != lin.n {
            return Err(Error::DimensionMismatch(format!("1 + k+ + k- = {} but n = {}", 1 + k_plus + k_minus, lin.n)));
        }
        let mut k = GreenKernelSet {
            geometry: Geometry::Shock,
            sides: vec![plus, minus],
            boundary: None,
            jump: Some(lin.jump.clone()),
            cross: vec![],
        };
        k.build_models()?;
        Ok(k)
    }

    pub fn n(&self) -> usize {
        self.sides[0].dec.n
    }

    /// Dimension of the boundary data `F0` (`phi`).
    pub fn forcing_dim(&self) -> usize {
        match self.geometry {
            Geometry::WholeLine => 0,
            Geometry::HalfLine => self.boundary.as_ref().map_or(0, |b| b.nrows()),
            Geometry::Shock => self.n(),
        }
    }

    /// Sign of the side: `+1` for `x >= 0`, `-1` for `x <= 0`, `0` for the whole line.
    pub fn side_sign(&self, side: usize) -> i32 {
        match (self.geometry, side) {
            (Geometry::WholeLine, _) => 0,
            (_, 0) => 1,
            _ => -1,
        }
    }

    /// Labels of outgoing-from-boundary modes (decaying away from the boundary).
    fn out_labels(&self, side: usize) -> Vec<usize> {
        let dec = &self.sides[side].dec;
        if self.side_sign(side) > 0 {
            dec.stable.clone()
        } else {
            dec.unstable.clone()
        }
    }

    /// Labels of modes travelling into the boundary.
    fn in_labels(&self, side: usize) -> Vec<usize> {
        let dec = &self.sides[side].dec;
        if self.side_sign(side) > 0 {
            dec.unstable.clone()
        } else {
            dec.stable.clone()
        }
    }

    /// Output and input operators of the boundary-mediated terms for given frames.
    fn cross_ops(&self, frames: &[Frame]) -> Result<(Vec<(Out, CMat)>, Vec<(Inp, CMat)>)> {
        let n = self.n();
        let mut outs = Vec::new();
        let mut inps = Vec::new();
        match self.geometry {
            Geometry::WholeLine => {}
            Geometry::HalfLine => {
                let b = to_complex(self.boundary.as_ref().expect("half line has B"));
                let fr = &frames[0];
                let s = self.out_labels(0);
                let mut rs = CMat::zeros(n, s.len());
                for (c, &j) in s.iter().enumerate() {
                    rs.set_column(c, &fr.0.column(j));
                }
                let brs = &b * &rs;
                let inv = linalg::inv_c(&brs)
                    .ok_or_else(|| Error::SingularBoundaryMatrix("B restricted to the incoming modes".into()))?;
                let binv = &rs * inv;
                for &j in &s {
                    outs.push((Out::Field { side: 0, j }, rank_one(fr, j) * &binv));
                }
                let ainv = to_complex(&self.sides[0].a_inv);
                for l in self.in_labels(0) {
                    inps.push((Inp::Field { side: 0, l }, &b * rank_one(fr, l) * &ainv));
                }
                inps.push((Inp::Forcing, CMat::identity(b.nrows(), b.nrows())));
            }
            Geometry::Shock => {
                let jump = self.jump.as_ref().expect("shock has a jump");
                let sp = self.out_labels(0);
                let sm = self.out_labels(1);
                let ap = to_complex(&self.sides[0].a);
                let am = to_complex(&self.sides[1].a);
                let mut e = CMat::zeros(n, n);
                for i in 0..n {
                    e[(i, 0)] = C64::new(-jump[i], 0.0);
                }
                for (c, &j) in sp.iter().enumerate() {
                    e.set_column(1 + c, &(&ap * frames[0].0.column(j)));
                }
                for (c, &j) in sm.iter().enumerate() {
                    e.set_column(1 + sp.len() + c, &(-(&am * frames[1].0.column(j))));
                }
                let ei = linalg::inv_c(&e).ok_or_else(|| Error::SingularBoundaryMatrix("shock matrix E".into()))?;
                for (c, &j) in sp.iter().enumerate() {
                    outs.push((Out::Field { side: 0, j }, frames[0].0.column(j) * ei.row(1 + c)));
                }
                for (c, &j) in sm.iter().enumerate() {
                    outs.push((Out::Field { side: 1, j }, frames[1].0.column(j) * ei.row(1 + sp.len() + c)));
                }
                outs.push((Out::Phase, CMat::from_fn(1, n, |_, c| ei[(0, c)])));
                for side in 0..2 {
                    let a = to_complex(&self.sides[side].a);
                    let ainv = to_complex(&self.sides[side].a_inv);
                    for l in self.in_labels(side) {
                        inps.push((Inp::Field { side, l }, &a * rank_one(&frames[side], l) * &ainv));
                    }
                }
                inps.push((Inp::Forcing, CMat::identity(n, n)));
            }
        }
        Ok((outs, inps))
    }

    fn cross_products(&self, frames: &[Frame]) -> Result<Vec<(Out, Inp, CMat)>> {
        let (outs, inps) = self.cross_ops(frames)?;
        let mut v = Vec::with_capacity(outs.len() * inps.len());
        for (o, om) in &outs {
            for (i, im) in &inps {
                v.push((*o, *i, om * im));
            }
        }
        Ok(v)
    }

    fn build_models(&mut self) -> Result<()> {
        let ladder: Vec<Vec<Frame>> = HF_LADDER
            .iter()
            .map(|&lam| self.sides.iter().map(|s| frame_at(&s.dec, C64::new(lam, 0.0))).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?;
        let inf: Vec<Frame> = self.sides.iter().map(|s| frame_inf(&s.dec)).collect();
        let h = [1.0 / HF_LADDER[0], 1.0 / HF_LADDER[1], 1.0 / HF_LADDER[2]];
        for (si, side) in self.sides.iter_mut().enumerate() {
            let ainv = to_complex(&side.a_inv);
            for j in 0..side.dec.n {
                let s = side.dec.d[j].signum();
                let m0 = rank_one(&inf[si], j) * &ainv * C64::new(s, 0.0);
                let samples = [0, 1, 2].map(|i| rank_one(&ladder[i][si], j) * &ainv * C64::new(s, 0.0));
                side.dir[j].m1 = extrapolate_first_order(&m0, &samples);
                // mu_j^1 from the eigenvalues on the ladder
                let f = [0, 1, 2].map(|i| {
                    let lam = C64::new(HF_LADDER[i], 0.0);
                    let (vals, _, _) = labeled_modes(&side.dec, lam).expect("ladder already decomposed");
                    (lam * (vals[j] - side.dec.mu_inf(j, lam))).re
                });
                let mu1 = richardson3(h, f);
                side.dir[j].mu1 = mu1;
                side.mu1[j] = mu1;
            }
        }
        let m0s = self.cross_products(&inf)?;
        let samples: Vec<Vec<(Out, Inp, CMat)>> = ladder.iter().map(|fr| self.cross_products(fr)).collect::<Result<_>>()?;
        self.cross = m0s
            .into_iter()
            .enumerate()
            .map(|(k, (out, inp, m0))| {
                let m1 = extrapolate_first_order(&m0, &[samples[0][k].2.clone(), samples[1][k].2.clone(), samples[2][k].2.clone()]);
                CrossTerm { out, inp, m0: m0.map(|z| z.re), m1 }
            })
            .collect();
        Ok(())
    }

    fn out_param(&self, out: Out) -> (f64, f64, f64) {
        match out {
            Out::Field { side, j } => {
                let s = &self.sides[side];
                (s.dec.d[j], s.dec.rho[j], s.mu1[j])
            }
            Out::Phase => (f64::INFINITY, 0.0, 0.0),
        }
    }
}

// ---------------------------------------------------------------------------
// singular parts

/// `d e^{-rho t} W delta_{d t}`: transported Dirac mass of the direct kernel.
#[derive(Debug, Clone, Serialize)]
pub struct TransportTerm {
    pub side: usize,
    pub label: usize,
    pub speed: f64,
    pub rate: f64,
    pub weight: RMat,
}

/// Boundary echo: delay `x/d_out + |y|/|d_in|`, weight `|d_in| e^{-rho_out x/d_out} e^{-rho_in (t - x/d_out)} W`.
/// For boundary forcing the input speed is absent and the echo reads `e^{-rho_out x/d_out} W phi(t - x/d_out)`.
#[derive(Debug, Clone, Serialize)]
pub struct EchoTerm {
    pub out: Out,
    pub inp: Inp,
    pub speed_out: Option<f64>,
    pub rate_out: f64,
    pub speed_in: Option<f64>,
    pub rate_in: f64,
    pub weight: RMat,
}

/// Explicit most-singular part of the temporal Green kernels.
#[derive(Debug, Clone, Serialize)]
pub struct SingularPart {
    pub geometry: Geometry,
    pub transport: Vec<TransportTerm>,
    pub echoes: Vec<EchoTerm>,
    /// `I_0 B_inf^dagger` for the shock: `psi'(t)` picks up `W phi(t)`.
    pub phase: Option<RMat>,
}

impl GreenKernelSet {
    pub fn singular_part(&self) -> SingularPart {
        let mut transport = Vec::new();
        for (si, s) in self.sides.iter().enumerate() {
            for t in &s.dir {
                let weight = &t.u * t.v.transpose() * t.d.signum();
                transport.push(TransportTerm { side: si, label: t.j, speed: t.d, rate: t.rho, weight });
            }
        }
        let mut echoes = Vec::new();
        let mut phase = None;
        for c in &self.cross {
            if c.out == Out::Phase && c.inp == Inp::Forcing {
                phase = Some(c.m0.clone());
                continue;
            }
            let (d_out, r_out, _) = self.out_param(c.out);
            let (speed_in, rate_in) = match c.inp {
                Inp::Field { side, l } => (Some(self.sides[side].dec.d[l]), self.sides[side].dec.rho[l]),
                Inp::Forcing => (None, 0.0),
            };
            echoes.push(EchoTerm {
                out: c.out,
                inp: c.inp,
                speed_out: if d_out.is_finite() { Some(d_out) } else { None },
                rate_out: r_out,
                speed_in,
                rate_in,
                weight: c.m0.clone(),
            });
        }
        SingularPart { geometry: self.geometry, transport, echoes, phase }
    }
}

// ---------------------------------------------------------------------------
// exact resolvent action

/// Modes of `L(lambda)` on one side with rows `l_k A^{-1}`.
struct SideModes {
    mu: Vec<C64>,
    r: CMat,
    la: CMat,
    stable: Vec<usize>,
    unstable: Vec<usize>,
}

fn side_modes(side: &SideOperator, lambda: C64) -> Result<SideModes> {
    let dd = spatial_projectors(&side.a, &side.g, lambda)?;
    let la = &dd.eig.left * to_complex(&side.a_inv);
    Ok(SideModes { mu: dd.eig.values.clone(), r: dd.eig.vectors.clone(), la, stable: dd.stable_idx, unstable: dd.unstable_idx })
}

fn combine(row: &[C64], f: &[Vec<C64>]) -> Vec<C64> {
    let len = f[0].len();
    let mut out = vec![C64::new(0.0, 0.0); len];
    for (i, &w) in row.iter().enumerate() {
        if w == C64::new(0.0, 0.0) {
            continue;
        }
        for (o, v) in out.iter_mut().zip(&f[i]) {
            *o += w * v;
        }
    }
    out
}

fn complexify(f: &SideField) -> Vec<Vec<C64>> {
    f.comps.iter().map(|c| c.iter().map(|&v| C64::new(v, 0.0)).collect()).collect()
}

/// Complex field on a side: `comps[i][k]`.
type CField = Vec<Vec<C64>>;

/// Resolvent output: one field per side and, for the shock, `lambda psi~`.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub fields: Vec<CField>,
    pub phase: Option<C64>,
}

fn direct_action(m: &SideModes, grid: &Grid, f: &CField) -> CField {
    let n = f.len();
    let mut out = vec![vec![C64::new(0.0, 0.0); grid.len]; n];
    for k in 0..m.mu.len() {
        let row: Vec<C64> = m.la.row(k).iter().copied().collect();
        let g = combine(&row, f);
        let (w, sign) = if m.stable.contains(&k) {
            (sweep(&g, grid, m.mu[k], Direction::Forward), 1.0)
        } else {
            (sweep(&g, grid, m.mu[k], Direction::Backward), -1.0)
        };
        for i in 0..n {
            let ri = m.r[(i, k)] * sign;
            for (o, wv) in out[i].iter_mut().zip(&w) {
                *o += ri * wv;
            }
        }
    }
    out
}

fn add_modes(out: &mut CField, m: &SideModes, idx: &[usize], coef: &[C64], grid: &Grid) {
    for (c, &k) in idx.iter().enumerate() {
        for p in 0..grid.len {
            let e = (m.mu[k] * grid.x(p)).exp() * coef[c];
            for (i, o) in out.iter_mut().enumerate() {
                o[p] += m.r[(i, k)] * e;
            }
        }
    }
}

fn trace(f: &CField, idx: usize) -> CVec {
    CVec::from_iterator(f.len(), f.iter().map(|c| c[idx]))
}

impl GreenKernelSet {
    fn check_fields(&self, fields: &[CField], grids: &[Grid]) -> Result<()> {
        if fields.len() != self.sides.len() || grids.len() != self.sides.len() {
            return Err(Error::DimensionMismatch(format!("{} fields for {} sides", fields.len(), self.sides.len())));
        }
        for (si, (f, g)) in fields.iter().zip(grids).enumerate() {
            if f.len() != self.n() || f.iter().any(|c| c.len() != g.len) {
                return Err(Error::DimensionMismatch(format!("field on side {si} has the wrong shape")));
            }
            match self.side_sign(si) {
                1 if g.x0.abs() > 1e-12 => return Err(Error::Precondition("plus-side grid must start at 0".into())),
                -1 if g.end().abs() > 1e-9 => return Err(Error::Precondition("minus-side grid must end at 0".into())),
                _ => {}
            }
        }
        Ok(())
    }

    /// Exact action of the resolvent (through its kernel representation) on
    /// piecewise-cubic data `F` and boundary data `F0`.
    pub fn resolve(&self, lambda: C64, grids: &[Grid], f: &[CField], f0: Option<&CVec>) -> Result<Resolved> {
        self.check_fields(f, grids)?;
        let n = self.n();
        let modes: Vec<SideModes> = self.sides.iter().map(|s| side_modes(s, lambda)).collect::<Result<_>>()?;
        let mut fields: Vec<CField> = modes.iter().zip(grids).zip(f).map(|((m, g), fi)| direct_action(m, g, fi)).collect();
        let mut phase = None;
        match self.geometry {
            Geometry::WholeLine => {}
            Geometry::HalfLine => {
                let b = to_complex(self.boundary.as_ref().expect("half line has B"));
                let m = &modes[0];
                let rs = m.r.select_columns(&m.stable);
                let brs = &b * &rs;
                if brs.nrows() != brs.ncols() {
                    return Err(Error::DimensionMismatch(format!("incoming dimension changes at lambda = {lambda}")));
                }
                let inv = linalg::inv_c(&brs)
                    .ok_or_else(|| Error::SingularBoundaryMatrix(format!("B|Ran Pi_s singular at lambda = {lambda}")))?;
                let k = b.nrows();
                let rhs = f0.cloned().unwrap_or_else(|| CVec::zeros(k)) - &b * trace(&fields[0], 0);
                let c = inv * rhs;
                let coef: Vec<C64> = c.iter().copied().collect();
                add_modes(&mut fields[0], m, &m.stable, &coef, &grids[0]);
            }
            Geometry::Shock => {
                let jump = self.jump.as_ref().expect("shock has a jump");
                let (mp, mm) = (&modes[0], &modes[1]);
                let ap = to_complex(&self.sides[0].a);
                let am = to_complex(&self.sides[1].a);
                let kp = mp.stable.len();
                let km = mm.unstable.len();
                if 1 + kp + km != n {
                    return Err(Error::DimensionMismatch(format!("decaying dimensions change at lambda = {lambda}")));
                }
                let mut e = CMat::zeros(n, n);
                for i in 0..n {
                    e[(i, 0)] = C64::new(-jump[i], 0.0);
                }
                for (c, &k) in mp.stable.iter().enumerate() {
                    e.set_column(1 + c, &(&ap * mp.r.column(k)));
                }
                for (c, &k) in mm.unstable.iter().enumerate() {
                    e.set_column(1 + kp + c, &(-(&am * mm.r.column(k))));
                }
                let ei = linalg::inv_c(&e).ok_or_else(|| Error::SingularBoundaryMatrix(format!("E singular at lambda = {lambda}")))?;
                let up = trace(&fields[0], 0);
                let sm = trace(&fields[1], grids[1].len - 1);
                let rhs = f0.cloned().unwrap_or_else(|| CVec::zeros(n)) - &ap * up + &am * sm;
                let sol = ei * rhs;
                phase = Some(sol[0]);
                let cp: Vec<C64> = (0..kp).map(|c| sol[1 + c]).collect();
                let cm: Vec<C64> = (0..km).map(|c| sol[1 + kp + c]).collect();
                add_modes(&mut fields[0], mp, &mp.stable, &cp, &grids[0]);
                add_modes(&mut fields[1], mm, &mm.unstable, &cm, &grids[1]);
            }
        }
        Ok(Resolved { fields, phase })
    }

    /// Laplace-domain high-frequency model applied to the same data.
    pub fn model(&self, lambda: C64, grids: &[Grid], f: &[CField], f0: Option<&CVec>) -> Result<Resolved> {
        self.check_fields(f, grids)?;
        let n = self.n();
        let zero = C64::new(0.0, 0.0);
        let mut fields: Vec<CField> = grids.iter().map(|g| vec![vec![zero; g.len]; n]).collect();
        // y f on every side
        let yf: Vec<CField> = f
            .iter()
            .zip(grids)
            .map(|(fi, g)| fi.iter().map(|c| c.iter().enumerate().map(|(k, v)| v * g.x(k)).collect()).collect())
            .collect();
        for (si, side) in self.sides.iter().enumerate() {
            let grid = &grids[si];
            for t in &side.dir {
                let mu = -(lambda + t.rho) / t.d;
                let dir = if t.d > 0.0 { Direction::Forward } else { Direction::Backward };
                let plan = SweepPlan::new(grid, mu, dir);
                let vrow: Vec<C64> = t.v.iter().map(|&v| C64::new(v, 0.0)).collect();
                let sigma = combine(&vrow, &f[si]);
                let ysigma = combine(&vrow, &yf[si]);
                let a0 = plan.run(&sigma);
                let a1 = plan.run(&ysigma);
                let inv = 1.0 / (lambda + t.rho);
                for i in 0..n {
                    let m1row: Vec<C64> = t.m1.row(i).iter().map(|&v| C64::new(v, 0.0)).collect();
                    let b = plan.run(&combine(&m1row, &f[si]));
                    let ui = t.u[i];
                    for p in 0..grid.len {
                        let x = grid.x(p);
                        fields[si][i][p] += a0[p] * ui + (b[p] + (a0[p] * x - a1[p]) * (t.mu1 * ui)) * inv;
                    }
                }
            }
        }
        let mut phase = if self.geometry == Geometry::Shock { Some(zero) } else { None };
        // boundary moments per input label
        let mut moments = Vec::new();
        for (si, side) in self.sides.iter().enumerate() {
            if self.geometry == Geometry::WholeLine {
                break;
            }
            for l in self.in_labels(si) {
                let d = side.dec.d[l];
                let mu = -(lambda + side.dec.rho[l]) / d;
                let dir = if self.side_sign(si) > 0 { Direction::Backward } else { Direction::Forward };
                let plan = SweepPlan::new(&grids[si], mu, dir);
                let c0 = CVec::from_iterator(n, f[si].iter().map(|c| plan.end_value(c)));
                let c1 = CVec::from_iterator(n, yf[si].iter().map(|c| plan.end_value(c)));
                moments.push(((si, l), c0, c1));
            }
        }
        let fhat = f0.cloned();
        for c in &self.cross {
            let (d_out, rho_out, mu1_out) = self.out_param(c.out);
            let m0 = to_complex(&c.m0);
            let m1 = to_complex(&c.m1);
            // vector multiplying e^{mu_j x}, affine in x: base + x * slope
            let (base, slope) = match c.inp {
                Inp::Field { side, l } => {
                    let (_, c0, c1) = moments.iter().find(|(key, _, _)| *key == (side, l)).expect("moment computed");
                    let s = &self.sides[side];
                    let inv = 1.0 / (lambda + s.dec.rho[l]);
                    let m0c0 = &m0 * c0;
                    let base = &m0c0 + (&m1 * c0 - &m0 * c1 * C64::new(s.mu1[l], 0.0)) * inv;
                    let slope = m0c0 * (mu1_out * inv);
                    (base, slope)
                }
                Inp::Forcing => match &fhat {
                    Some(fh) => (&m0 * fh, CVec::zeros(m0.nrows())),
                    None => continue,
                },
            };
            match c.out {
                Out::Field { side, .. } => {
                    let grid = &grids[side];
                    let mu = -(lambda + rho_out) / d_out;
                    for p in 0..grid.len {
                        let x = grid.x(p);
                        let e = (mu * x).exp();
                        for i in 0..n {
                            fields[side][i][p] += e * (base[i] + slope[i] * x);
                        }
                    }
                }
                Out::Phase => {
                    if let Some(ph) = phase.as_mut() {
                        *ph += base[0];
                    }
                }
            }
        }
        Ok(Resolved { fields, phase })
    }
}

// ---------------------------------------------------------------------------
// time-domain singular action

/// Time-independent data used by [`GreenKernelSet::singular_action`].
pub struct PreparedData {
    grids: Vec<Grid>,
    fields: Vec<SideField>,
    /// `sigma_j = v_j . f` per side and label.
    sigma: Vec<Vec<Vec<f64>>>,
    /// `int_{x0}^x f` and `int_{x0}^x y f` per side.
    cum_f: Vec<Vec<Vec<f64>>>,
    cum_yf: Vec<Vec<Vec<f64>>>,
    forcing: Forcing,
}

impl PreparedData {
    fn cumulative(&self, side: usize, x: f64) -> (RVec, RVec) {
        let g = &self.grids[side];
        let n = self.cum_f[side].len();
        (
            RVec::from_iterator(n, self.cum_f[side].iter().map(|c| interp_clamped(c, g, x))),
            RVec::from_iterator(n, self.cum_yf[side].iter().map(|c| interp_clamped(c, g, x))),
        )
    }

    /// Integrals of `f` and `y f` between the boundary and `y`.
    fn from_boundary(&self, side: usize, sign: i32, y: f64) -> (RVec, RVec) {
        let (cf, cy) = self.cumulative(side, y);
        if sign < 0 {
            let last = self.grids[side].len - 1;
            let tf = RVec::from_iterator(cf.len(), self.cum_f[side].iter().map(|c| c[last]));
            let ty = RVec::from_iterator(cy.len(), self.cum_yf[side].iter().map(|c| c[last]));
            (tf - cf, ty - cy)
        } else {
            (cf, cy)
        }
    }
}

impl GreenKernelSet {
    pub fn prepare(&self, data: &LinearData) -> Result<PreparedData> {
        let grids: Vec<Grid> = data.fields.iter().map(|f| f.grid).collect();
        let cf: Vec<CField> = data.fields.iter().map(complexify).collect();
        self.check_fields(&cf, &grids)?;
        if !data.forcing.is_none() {
            if self.geometry == Geometry::WholeLine {
                return Err(Error::Precondition("boundary forcing on the whole line".into()));
            }
            if let Forcing::Exponential { phi0, .. } = &data.forcing {
                if phi0.len() != self.forcing_dim() {
                    return Err(Error::DimensionMismatch(format!("phi0 has {} entries, expected {}", phi0.len(), self.forcing_dim())));
                }
            }
        }
        let mut sigma = Vec::new();
        let mut cum_f = Vec::new();
        let mut cum_yf = Vec::new();
        for (si, side) in self.sides.iter().enumerate() {
            let grid = &grids[si];
            let f = &data.fields[si];
            let yf: Vec<Vec<f64>> = f.comps.iter().map(|c| c.iter().enumerate().map(|(k, v)| v * grid.x(k)).collect()).collect();
            sigma.push(
                side.dir
                    .iter()
                    .map(|t| {
                        let mut out = vec![0.0; grid.len];
                        for (i, &w) in t.v.iter().enumerate() {
                            for (o, v) in out.iter_mut().zip(&f.comps[i]) {
                                *o += w * v;
                            }
                        }
                        out
                    })
                    .collect(),
            );
            cum_f.push(f.comps.iter().map(|c| sweep_real(c, grid, 0.0, Direction::Forward)).collect());
            cum_yf.push(yf.iter().map(|c| sweep_real(c, grid, 0.0, Direction::Forward)).collect());
        }
        Ok(PreparedData { grids, fields: data.fields.clone(), sigma, cum_f, cum_yf, forcing: data.forcing.clone() })
    }

    /// Exact time-domain action of the high-frequency model at time `t > 0`:
    /// transported Dirac masses, boundary echoes and their bounded correctors.
    pub fn singular_action(&self, prep: &PreparedData, t: f64) -> (Vec<SideField>, Option<f64>) {
        let n = self.n();
        let mut out: Vec<SideField> = prep.grids.iter().map(|g| SideField::zeros(*g, n)).collect();
        for (si, side) in self.sides.iter().enumerate() {
            let grid = &prep.grids[si];
            for (term, sigma) in side.dir.iter().zip(&prep.sigma[si]) {
                let decay = (-term.rho * t).exp();
                let shift = term.d * t;
                let sgn = term.d.signum();
                for p in 0..grid.len {
                    let x = grid.x(p);
                    let xs = x - shift;
                    let dirac = decay * term.d.abs() * interp(sigma, grid, xs);
                    // window between x - d t and x, oriented along d
                    let (f1, y1) = prep.cumulative(si, x);
                    let (f0, y0) = prep.cumulative(si, xs);
                    let df = (f1 - f0) * (sgn * decay);
                    let dy = (y1 - y0) * (sgn * decay);
                    let win = x * term.v.dot(&df) - term.v.dot(&dy);
                    let bounded = &term.m1 * &df;
                    for i in 0..n {
                        out[si].comps[i][p] += term.u[i] * (dirac + term.mu1 * win) + bounded[i];
                    }
                }
            }
        }
        let mut phase = if self.geometry == Geometry::Shock { Some(0.0) } else { None };
        for c in &self.cross {
            let (d_out, rho_out, mu1_out) = self.out_param(c.out);
            let eval = |x: f64| -> RVec {
                let tau = if d_out.is_finite() { x / d_out } else { 0.0 };
                if t <= tau {
                    return RVec::zeros(c.m0.nrows());
                }
                match c.inp {
                    Inp::Field { side, l } => {
                        let s = &self.sides[side];
                        let (d_in, rho_in, mu1_in) = (s.dec.d[l], s.dec.rho[l], s.mu1[l]);
                        let ystar = d_in * (tau - t);
                        let fy = prep.fields[side].eval(ystar);
                        let (cf, cy) = prep.from_boundary(side, self.side_sign(side), ystar);
                        let dirac = &c.m0 * fy * (d_in.abs() * (-rho_out * tau - rho_in * (t - tau)).exp());
                        let bounded = (&c.m1 * &cf + &c.m0 * cf * (mu1_out * x) - &c.m0 * cy * mu1_in)
                            * (-rho_in * t + (rho_in - rho_out) * tau).exp();
                        dirac + bounded
                    }
                    Inp::Forcing => &c.m0 * prep.forcing.at(t - tau, c.m0.ncols()) * (-rho_out * tau).exp(),
                }
            };
            match c.out {
                Out::Field { side, .. } => {
                    let grid = prep.grids[side];
                    for p in 0..grid.len {
                        let v = eval(grid.x(p));
                        for i in 0..n {
                            out[side].comps[i][p] += v[i];
                        }
                    }
                }
                Out::Phase => {
                    if let Some(ph) = phase.as_mut() {
                        *ph += eval(0.0)[0];
                    }
                }
            }
        }
        (out, phase)
    }
}

// ---------------------------------------------------------------------------
// inverse Laplace of the remainder

/// Trapezoidal rule on `eta + i [0, omega_max]` with step `d_omega`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    pub eta: f64,
    pub omega_max: f64,
    pub d_omega: f64,
}

impl QuadratureConfig {
    /// Contour `eta = -alpha/2`, step resolving decay at rate `alpha/2` over the
    /// transit window, and cut-off `omega_max`.
    pub fn for_run(alpha: f64, t_max: f64, transit: f64, omega_max: f64) -> Self {
        let eta = -0.5 * alpha;
        let window = 4.0 * (t_max + transit + 1.0);
        let decay_window = 40.0 / (alpha + eta).max(0.02);
        QuadratureConfig { eta, omega_max, d_omega: 2.0 * PI / window.max(decay_window) }
    }

    fn nodes(&self) -> usize {
        let n = (self.omega_max / self.d_omega).ceil() as usize;
        n.div_ceil(4).max(1) * 4
    }
}

/// Quadrature remainder at the requested times.
#[derive(Debug, Clone, Serialize)]
pub struct RemainderResult {
    pub times: Vec<f64>,
    pub fields: Vec<Vec<SideField>>,
    pub phase: Vec<Option<f64>>,
    /// `|S_N - S_{N/2}|_inf + tail` per time.
    pub error_estimate: Vec<f64>,
    pub nodes: usize,
}

const QUAD_CHUNKS: usize = 16;

fn flatten(r: &Resolved) -> Vec<C64> {
    let mut v: Vec<C64> = r.fields.iter().flat_map(|f| f.iter().flat_map(|c| c.iter().copied())).collect();
    if let Some(p) = r.phase {
        v.push(p);
    }
    v
}

impl GreenKernelSet {
    /// `(1/2 pi i) int e^{lambda t} (K_lambda - K_lambda^model) dlambda` applied to the data.
    pub fn invert_laplace_remainder(&self, data: &LinearData, times: &[f64], cfg: &QuadratureConfig) -> Result<RemainderResult> {
        if times.iter().any(|&t| !(t > 0.0)) {
            return Err(Error::Precondition("remainder times must be positive".into()));
        }
        let grids: Vec<Grid> = data.fields.iter().map(|f| f.grid).collect();
        let cf: Vec<CField> = data.fields.iter().map(complexify).collect();
        self.check_fields(&cf, &grids)?;
        let fdim = self.forcing_dim();
        let nodes = cfg.nodes();
        let dw = cfg.d_omega;
        let remainder_at = |k: usize| -> Result<Vec<C64>> {
            let lambda = C64::new(cfg.eta, k as f64 * dw);
            let f0 = if fdim > 0 { Some(data.forcing.hat(lambda, fdim)) } else { None };
            let exact = self.resolve(lambda, &grids, &cf, f0.as_ref())?;
            let model = self.model(lambda, &grids, &cf, f0.as_ref())?;
            Ok(flatten(&exact).into_iter().zip(flatten(&model)).map(|(a, b)| a - b).collect())
        };
        let size = remainder_at(0)?.len();
        let nt = times.len();
        let chunk = (nodes + 1).div_ceil(QUAD_CHUNKS);
        // per chunk: [level][t] accumulators, levels = step dw, 2dw, 4dw
        type Acc = Vec<Vec<Vec<C64>>>;
        let partial: Vec<Result<(Acc, Option<f64>)>> = (0..QUAD_CHUNKS)
            .into_par_iter()
            .map(|c| {
                let mut acc: Acc = vec![vec![vec![C64::new(0.0, 0.0); size]; nt]; 3];
                let mut last = None;
                let lo = c * chunk;
                let hi = ((c + 1) * chunk).min(nodes + 1);
                for k in lo..hi {
                    let r = remainder_at(k)?;
                    if k == nodes {
                        last = Some(r.iter().fold(0.0_f64, |m, z| m.max(z.norm())));
                    }
                    let end = if k == 0 || k == nodes { 0.5 } else { 1.0 };
                    for (lev, stride) in [1usize, 2, 4].iter().enumerate() {
                        if k % stride != 0 {
                            continue;
                        }
                        let w = end * dw * *stride as f64;
                        for (ti, &t) in times.iter().enumerate() {
                            let ph = C64::new(0.0, k as f64 * dw * t).exp() * w;
                            for (a, z) in acc[lev][ti].iter_mut().zip(&r) {
                                *a += ph * z;
                            }
                        }
                    }
                }
                Ok((acc, last))
            })
            .collect();
        let mut total: Acc = vec![vec![vec![C64::new(0.0, 0.0); size]; nt]; 3];
        let mut last = 0.0;
        for p in partial {
            let (acc, l) = p?;
            if let Some(l) = l {
                last = l;
            }
            for lev in 0..3 {
                for ti in 0..nt {
                    for (a, z) in total[lev][ti].iter_mut().zip(&acc[lev][ti]) {
                        *a += z;
                    }
                }
            }
        }
        let n = self.n();
        let mut fields_out = Vec::with_capacity(nt);
        let mut phases = Vec::with_capacity(nt);
        let mut errs = Vec::with_capacity(nt);
        for (ti, &t) in times.iter().enumerate() {
            let scale = (cfg.eta * t).exp() / PI;
            let vals: Vec<f64> = total[0][ti].iter().map(|z| z.re * scale).collect();
            let e1 = total[0][ti].iter().zip(&total[1][ti]).fold(0.0_f64, |m, (a, b)| m.max((a - b).re.abs())) * scale;
            let e2 = total[1][ti].iter().zip(&total[2][ti]).fold(0.0_f64, |m, (a, b)| m.max((a - b).re.abs())) * scale;
            let vmax = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            if e1 > e2 && e1 > 1e-8 * (1.0 + vmax) {
                return Err(Error::QuadratureFailure(format!("step halving does not reduce the error at t = {t}: {e1:e} vs {e2:e}")));
            }
            let tail = scale * last / t;
            errs.push(e1 + tail);
            let mut off = 0;
            let mut fs = Vec::with_capacity(grids.len());
            for g in &grids {
                let mut sf = SideField::zeros(*g, n);
                for i in 0..n {
                    sf.comps[i].copy_from_slice(&vals[off..off + g.len]);
                    off += g.len;
                }
                fs.push(sf);
            }
            phases.push(if off < vals.len() { Some(vals[off]) } else { None });
            fields_out.push(fs);
        }
        Ok(RemainderResult { times: times.to_vec(), fields: fields_out, phase: phases, error_estimate: errs, nodes })
    }
}

// ---------------------------------------------------------------------------
// propagator

/// Linear solution at one time, split into its two parts.
#[derive(Debug, Clone, Serialize)]
pub struct LinearState {
    pub t: f64,
    pub fields: Vec<SideField>,
    /// `psi'(t)` for the shock.
    pub phase_rate: Option<f64>,
    pub singular_l2: f64,
    pub remainder_l1: f64,
    pub remainder_l2: f64,
    pub error_estimate: f64,
}

/// `V(t)` (and `psi'(t)`) from the singular action plus the quadrature remainder.
pub fn apply_linear_propagator(
    kernels: &GreenKernelSet,
    data: &LinearData,
    times: &[f64],
    cfg: &QuadratureConfig,
) -> Result<Vec<LinearState>> {
    let prep = kernels.prepare(data)?;
    let rem = kernels.invert_laplace_remainder(data, times, cfg)?;
    let mut out = Vec::with_capacity(times.len());
    for (ti, &t) in times.iter().enumerate() {
        let (mut fields, phase) = kernels.singular_action(&prep, t);
        let singular_l2 = fields_l2(&fields);
        for (f, r) in fields.iter_mut().zip(&rem.fields[ti]) {
            f.axpy(1.0, r);
        }
        let phase_rate = match (phase, rem.phase[ti]) {
            (Some(a), Some(b)) => Some(a + b),
            (a, _) => a,
        };
        out.push(LinearState {
            t,
            fields,
            phase_rate,
            singular_l2,
            remainder_l1: fields_l1(&rem.fields[ti]),
            remainder_l2: fields_l2(&rem.fields[ti]),
            error_estimate: rem.error_estimate[ti],
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// pointwise kernels

/// Named pieces of the spectral kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelPart {
    /// Whole-line `K_lambda(x - y)`, or the direct kernel of a side.
    Direct { side: usize },
    /// `K^bc` (half line, `n x p`) or `K^{bc+-}` (shock, `n x n`).
    Boundary { side: usize },
    /// `K^ref` from side `inp` to side `out`.
    Reflected { out: usize, inp: usize },
    /// `K^{trap+-}`, `1 x n`.
    Trapped { inp: usize },
    /// `K^{bc_0}`, `1 x n`.
    Phase,
}

impl GreenKernelSet {
    /// Boundary inverse at `lambda`: per side, `(mode index, coefficient row)` pairs,
    /// plus the phase row for the shock. `V_side(x) = sum e^{mu_k x} r_k row_k . G0`.
    fn boundary_inverse(&self, modes: &[SideModes], lambda: C64) -> Result<(Vec<Vec<(usize, CVec)>>, Option<CVec>)> {
        let n = self.n();
        match self.geometry {
            Geometry::WholeLine => Ok((vec![vec![]], None)),
            Geometry::HalfLine => {
                let b = to_complex(self.boundary.as_ref().expect("half line has B"));
                let m = &modes[0];
                let brs = &b * m.r.select_columns(&m.stable);
                let inv = linalg::inv_c(&brs)
                    .ok_or_else(|| Error::SingularBoundaryMatrix(format!("B|Ran Pi_s singular at lambda = {lambda}")))?;
                let rows = m.stable.iter().enumerate().map(|(c, &k)| (k, inv.row(c).transpose())).collect();
                Ok((vec![rows], None))
            }
            Geometry::Shock => {
                let jump = self.jump.as_ref().expect("shock has a jump");
                let (mp, mm) = (&modes[0], &modes[1]);
                let kp = mp.stable.len();
                let mut e = CMat::zeros(n, n);
                for i in 0..n {
                    e[(i, 0)] = C64::new(-jump[i], 0.0);
                }
                let ap = to_complex(&self.sides[0].a);
                let am = to_complex(&self.sides[1].a);
                for (c, &k) in mp.stable.iter().enumerate() {
                    e.set_column(1 + c, &(&ap * mp.r.column(k)));
                }
                for (c, &k) in mm.unstable.iter().enumerate() {
                    e.set_column(1 + kp + c, &(-(&am * mm.r.column(k))));
                }
                let ei = linalg::inv_c(&e).ok_or_else(|| Error::SingularBoundaryMatrix(format!("E singular at lambda = {lambda}")))?;
                let plus = mp.stable.iter().enumerate().map(|(c, &k)| (k, ei.row(1 + c).transpose())).collect();
                let minus = mm.unstable.iter().enumerate().map(|(c, &k)| (k, ei.row(1 + kp + c).transpose())).collect();
                Ok((vec![plus, minus], Some(ei.row(0).transpose())))
            }
        }
    }

    /// Pointwise value of a kernel piece at `(x, y)`; `x` is ignored for the phase
    /// and trapped pieces, `y` for the boundary and phase pieces. For the direct
    /// piece the argument is `x - y`.
    pub fn spectral_kernel(&self, part: KernelPart, lambda: C64, x: f64, y: f64) -> Result<CMat> {
        let n = self.n();
        let modes: Vec<SideModes> = self.sides.iter().map(|s| side_modes(s, lambda)).collect::<Result<_>>()?;
        let zero = C64::new(0.0, 0.0);
        // input operator: y -> e^{-L y} Pi_in A^{-1}, mapped into boundary data space
        let incoming = |side: usize, y: f64| -> CMat {
            let m = &modes[side];
            let idx = if self.side_sign(side) > 0 { &m.unstable } else { &m.stable };
            let mut acc = CMat::zeros(n, n);
            for &k in idx {
                acc += m.r.column(k) * m.la.row(k) * (-m.mu[k] * y).exp();
            }
            match self.geometry {
                Geometry::HalfLine => to_complex(self.boundary.as_ref().expect("B")) * acc,
                _ => to_complex(&self.sides[side].a) * acc,
            }
        };
        match part {
            KernelPart::Direct { side } => {
                let m = &modes[side];
                let mut acc = CMat::zeros(n, n);
                let (idx, sign) = if x > 0.0 { (&m.stable, 1.0) } else { (&m.unstable, -1.0) };
                for &k in idx {
                    acc += m.r.column(k) * m.la.row(k) * ((m.mu[k] * x).exp() * sign);
                }
                Ok(acc)
            }
            KernelPart::Boundary { side } => {
                let (rows, _) = self.boundary_inverse(&modes, lambda)?;
                let m = &modes[side];
                let dim = self.forcing_dim();
                let mut acc = CMat::from_element(n, dim, zero);
                for (k, row) in &rows[side] {
                    acc += m.r.column(*k) * row.transpose() * (m.mu[*k] * x).exp();
                }
                Ok(acc)
            }
            KernelPart::Reflected { out, inp } => {
                let bc = self.spectral_kernel(KernelPart::Boundary { side: out }, lambda, x, 0.0)?;
                Ok(bc * incoming(inp, y))
            }
            KernelPart::Trapped { inp } => {
                let ph = self.spectral_kernel(KernelPart::Phase, lambda, 0.0, 0.0)?;
                Ok(ph * incoming(inp, y))
            }
            KernelPart::Phase => {
                let (_, ph) = self.boundary_inverse(&modes, lambda)?;
                let ph = ph.ok_or_else(|| Error::Precondition("phase kernel exists only for the shock".into()))?;
                Ok(CMat::from_fn(1, n, |_, c| ph[c]))
            }
        }
    }
}

// ---------------------------------------------------------------------------
// residual oracle

/// Relative defect of the kernel representation against a manufactured solution
/// `V*` with `F = (lambda + A d/dx - G) V*` and `F0` from the traces of `V*`.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualSample {
    pub re: f64,
    pub im: f64,
    pub field_defect: f64,
    /// Boundary/jump equation residual of the returned traces.
    pub boundary_residual: f64,
    pub phase_defect: f64,
}

/// Gaussian test profile `V*_i(x) = a_i exp(-(x - c_i)^2 / w^2)` and its derivative.
fn manufactured(n: usize, x: f64, side_sign: i32) -> (RVec, RVec) {
    let mut v = RVec::zeros(n);
    let mut dv = RVec::zeros(n);
    for i in 0..n {
        let c = match side_sign {
            0 => -1.0 + 0.7 * i as f64,
            s => s as f64 * (0.4 + 0.6 * i as f64),
        };
        let a = 1.0 + 0.3 * i as f64 * if i % 2 == 0 { 1.0 } else { -1.0 };
        let w = 1.0 + 0.2 * i as f64;
        let e = (-(x - c) * (x - c) / (w * w)).exp();
        v[i] = a * e;
        dv[i] = -2.0 * (x - c) / (w * w) * a * e;
    }
    (v, dv)
}

impl GreenKernelSet {
    /// Manufactured-solution check at one `lambda` on grids of extent `half_width`
    /// and spacing `h`.
    pub fn resolvent_residual(&self, lambda: C64, half_width: f64, h: f64) -> Result<ResidualSample> {
        let n = self.n();
        let grids: Vec<Grid> = (0..self.sides.len())
            .map(|si| match self.side_sign(si) {
                0 => Grid::spanning(-half_width, half_width, h),
                1 => Grid::spanning(0.0, half_width, h),
                _ => Grid::spanning(-half_width, 0.0, h),
            })
            .collect::<Result<_>>()?;
        let mut f = Vec::new();
        let mut vstar = Vec::new();
        for (si, g) in grids.iter().enumerate() {
            let side = &self.sides[si];
            let mut fc = vec![vec![C64::new(0.0, 0.0); g.len]; n];
            let mut vc = vec![vec![C64::new(0.0, 0.0); g.len]; n];
            for p in 0..g.len {
                let (v, dv) = manufactured(n, g.x(p), self.side_sign(si));
                let vc_ = to_complex_vec(&v);
                let fv = &vc_ * lambda + to_complex_vec(&(&side.a * &dv - &side.g * &v));
                for i in 0..n {
                    fc[i][p] = fv[i];
                    vc[i][p] = vc_[i];
                }
            }
            f.push(fc);
            vstar.push(vc);
        }
        let phase_star = C64::new(0.7, -0.2);
        let f0 = match self.geometry {
            Geometry::WholeLine => None,
            Geometry::HalfLine => Some(to_complex(self.boundary.as_ref().expect("B")) * trace(&vstar[0], 0)),
            Geometry::Shock => {
                let jump = to_complex_vec(self.jump.as_ref().expect("jump"));
                let ap = to_complex(&self.sides[0].a);
                let am = to_complex(&self.sides[1].a);
                Some(-jump * phase_star + ap * trace(&vstar[0], 0) - am * trace(&vstar[1], grids[1].len - 1))
            }
        };
        let res = self.resolve(lambda, &grids, &f, f0.as_ref())?;
        let mut num = 0.0_f64;
        let mut den = 0.0_f64;
        for (a, b) in res.fields.iter().zip(&vstar) {
            for (ca, cb) in a.iter().zip(b) {
                for (x, y) in ca.iter().zip(cb) {
                    num = num.max((x - y).norm());
                    den = den.max(y.norm());
                }
            }
        }
        let boundary_residual = match self.geometry {
            Geometry::WholeLine => 0.0,
            Geometry::HalfLine => {
                let b = to_complex(self.boundary.as_ref().expect("B"));
                let r = b * trace(&res.fields[0], 0) - f0.as_ref().expect("f0");
                r.norm() / f0.as_ref().expect("f0").norm().max(1e-300)
            }
            Geometry::Shock => {
                let jump = to_complex_vec(self.jump.as_ref().expect("jump"));
                let ap = to_complex(&self.sides[0].a);
                let am = to_complex(&self.sides[1].a);
                let p = res.phase.expect("phase");
                let r = -jump * p + ap * trace(&res.fields[0], 0) - am * trace(&res.fields[1], grids[1].len - 1)
                    - f0.as_ref().expect("f0");
                r.norm() / f0.as_ref().expect("f0").norm().max(1e-300)
            }
        };
        let phase_defect = res.phase.map_or(0.0, |p| (p - phase_star).norm() / phase_star.norm());
        Ok(ResidualSample { re: lambda.re, im: lambda.im, field_defect: num / den, boundary_residual, phase_defect })
    }
}

fn to_complex_vec(v: &RVec) -> CVec {
    linalg::to_complex_vec(v)
}
