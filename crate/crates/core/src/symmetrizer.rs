//! Spectral stability versus strict dissipative symmetrizability for
//! `V_t + A V_x = G V` with `A` diagonal.
//!
//! For `n = 2` the two notions coincide. For `n = 3` with
//!
//! ```text
//!       | d1  0  0 |        | a1 b3 c2 |
//!   A = |  0 d2  0 |,   G = | c3 a2 b1 |
//!       |  0  0 d3 |        | b2 c1 a3 |
//! ```
//!
//! a transition `i tau in sp(-i xi A + G)` is a real solution of
//!
//! ```text
//!   x1 x2 a3 + x1 x3 a2 + x2 x3 a1 = T3 - S = -K
//!   x1 x2 x3 = x1 M1 + x2 M2 + x3 M3
//!   x_i = xi d_i + tau,   S = a1 b1 c1 + a2 b2 c2 + a3 b3 c3,   T3 = a1 a2 a3 + b1 b2 b3 + c1 c2 c3
//!   M1 = a2 a3 - b1 c1,   M2 = a1 a3 - b2 c2,   M3 = a1 a2 - b3 c3
//! ```
//!
//! With `X = x1`, `Y = x2`, `x3 = (1-theta) X + theta Y`, `u = X^2` and
//! `Z = X Y`, the system becomes two quadratics in `Z` whose resultant is a
//! polynomial in `u`; positive roots are isolated exactly by Sturm sequences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, RMat, C64};
use crate::ratpoly::{isolate_roots_above, q_f64, q_frac, q_int, resultant_z, Poly, QuadZ, Q};
use crate::spectral::symbol_abscissa_sup;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Samples of the compactified frequency line used for stability verdicts.
pub const SYMBOL_SAMPLES: usize = 2000;

// ---------------------------------------------------------------------------
// 2x2

/// `a < 0`, `d < 0`, `ad - bc > 0`.
pub fn stability_2x2(a: f64, b: f64, c: f64, d: f64) -> bool {
    a < 0.0 && d < 0.0 && a * d - b * c > 0.0
}

/// The two conditions `alpha1 a < 0` and `alpha1 alpha2 a d > (alpha1 b + alpha2 c)^2 / 4`.
pub fn conditions_2x2(a: f64, b: f64, c: f64, d: f64, alpha1: f64, alpha2: f64) -> (bool, bool) {
    let s = alpha1 * b + alpha2 * c;
    (alpha1 * a < 0.0, alpha1 * alpha2 * a * d > 0.25 * s * s)
}

/// Explicit diagonal symmetrizer `(alpha1, alpha2)` for a stable pair.
///
/// `(|c|, |b|)` when `bc != 0`; otherwise one weight is 1 and the other is
/// taken small enough for the determinant condition.
pub fn symmetrizer_2x2(a: f64, b: f64, c: f64, d: f64) -> Result<(f64, f64)> {
    if !stability_2x2(a, b, c, d) {
        return Err(Error::Precondition(format!("unstable 2x2 source (a={a}, b={b}, c={c}, d={d})")));
    }
    let ad = a * d;
    let w = if b * c != 0.0 {
        (c.abs(), b.abs())
    } else if b == 0.0 {
        let small = if c == 0.0 { 0.5 } else { 0.5 * (2.0 * ad / (c * c)).min(1.0) };
        (1.0, small)
    } else {
        (0.5 * (2.0 * ad / (b * b)).min(1.0), 1.0)
    };
    let (c1, c2) = conditions_2x2(a, b, c, d, w.0, w.1);
    if !(c1 && c2) {
        return Err(Error::Degenerate(format!("witness {w:?} fails the symmetrizer inequalities")));
    }
    Ok(w)
}

/// Whether some `alpha2/alpha1 = r > 0` satisfies both conditions, decided by
/// minimizing `c^2 r^2 + (2bc - 4ad) r + b^2` over `r > 0`.
pub fn symmetrizer_feasible_2x2(a: f64, b: f64, c: f64, d: f64) -> bool {
    if a >= 0.0 {
        return false;
    }
    let ad = a * d;
    let lin = 2.0 * b * c - 4.0 * ad;
    if c == 0.0 {
        // lin r + b^2 < 0 for r large iff lin < 0
        return lin < 0.0;
    }
    let r = -lin / (2.0 * c * c);
    if r <= 0.0 {
        return false;
    }
    c * c * r * r + lin * r + b * b < 0.0
}

// ---------------------------------------------------------------------------
// 3x3 transition analysis

/// Entries `(a_i, b_i, c_i)` of the source in the layout of the module docs.
#[derive(Debug, Clone, PartialEq)]
pub struct Entries3<T> {
    pub a: [T; 3],
    pub b: [T; 3],
    pub c: [T; 3],
}

pub fn entries_of<T: Clone>(g: &[[T; 3]; 3]) -> Entries3<T> {
    Entries3 {
        a: [g[0][0].clone(), g[1][1].clone(), g[2][2].clone()],
        b: [g[1][2].clone(), g[2][0].clone(), g[0][1].clone()],
        c: [g[2][1].clone(), g[0][2].clone(), g[1][0].clone()],
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TransitionPoint {
    pub u: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub xi: f64,
    pub tau: f64,
    /// Smallest singular value of `i tau - (-i xi A + G)`.
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TransitionReport {
    pub has_transition: bool,
    /// Coordinate order used so that the third speed lies between the first two.
    pub permutation: [usize; 3],
    pub theta: String,
    pub s: String,
    pub t3: String,
    /// `S - T3`, the constant of the symbol's real equation.
    pub k: String,
    pub m: [String; 3],
    /// Monic eliminant in `u = X^2` after removing powers of `u`, highest degree first.
    pub eliminant: String,
    pub eliminant_coefficients: Vec<String>,
    pub eliminant_all_positive: bool,
    /// Same elimination with the constant `S` in place of `S - T3`.
    pub literal_eliminant: String,
    pub literal_eliminant_coefficients: Vec<String>,
    pub literal_all_positive: bool,
    pub positive_roots: Vec<f64>,
    pub x0_branch_solution: bool,
    pub transitions: Vec<TransitionPoint>,
    #[serde(skip)]
    pub eliminant_poly: Poly,
    #[serde(skip)]
    pub literal_poly: Poly,
}

/// Pair of quadratics in `Z` for a given constant `kk` of the real equation.
fn transition_quadratics(e: &Entries3<Q>, theta: &Q, kk: &Q) -> (QuadZ, QuadZ) {
    let one = Q::one();
    let omt = &one - theta;
    let [a1, a2, a3] = &e.a;
    let m1 = a2 * a3 - &e.b[0] * &e.c[0];
    let m2 = a1 * a3 - &e.b[1] * &e.c[1];
    let m3 = a1 * a2 - &e.b[2] * &e.c[2];
    let u = |k: usize, v: Q| Poly::monomial(v, k);
    let p1 = QuadZ {
        c0: &u(1, kk.clone()) + &u(2, a2 * &omt),
        c1: u(1, a3 + a2 * theta + a1 * &omt),
        c2: Poly::constant(a1 * theta),
    };
    let p2 = QuadZ {
        c0: u(1, -(&m1) - &m3 * &omt),
        c1: &u(1, omt.clone()) - &Poly::constant(&m2 + &m3 * theta),
        c2: Poly::constant(theta.clone()),
    };
    (p1, p2)
}

fn real_roots_quadratic(c: [f64; 3]) -> Option<Vec<f64>> {
    let scale = c.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return None; // every Z
    }
    let [c0, c1, c2] = c.map(|x| x / scale);
    if c2.abs() < 1e-13 {
        if c1.abs() < 1e-13 {
            return Some(vec![]);
        }
        return Some(vec![-c0 / c1]);
    }
    let disc = c1 * c1 - 4.0 * c2 * c0;
    if disc < -1e-10 {
        return Some(vec![]);
    }
    let s = disc.max(0.0).sqrt();
    Some(vec![(-c1 + s) / (2.0 * c2), (-c1 - s) / (2.0 * c2)])
}

fn common_real_z(p: [f64; 3], q: [f64; 3]) -> Option<f64> {
    match (real_roots_quadratic(p), real_roots_quadratic(q)) {
        (None, None) => Some(0.0),
        (None, Some(r)) | (Some(r), None) => r.first().copied(),
        (Some(rp), Some(rq)) => {
            for zp in &rp {
                for zq in &rq {
                    if (zp - zq).abs() <= 1e-6 * (1.0 + zp.abs()) {
                        return Some(0.5 * (zp + zq));
                    }
                }
            }
            None
        }
    }
}

fn monic_strings(p: &Poly) -> (String, Vec<String>, bool) {
    let m = p.monic();
    (m.render("u"), m.to_strings(), m.all_positive())
}

/// Exact decision of whether `-i xi A + G` has a purely imaginary eigenvalue for some real `xi`.
pub fn transition_check_3x3(d: [f64; 3], g: &RMat) -> Result<TransitionReport> {
    if g.nrows() != 3 || g.ncols() != 3 {
        return Err(Error::DimensionMismatch("transition check needs a 3x3 source".into()));
    }
    if d[0] == d[1] || d[1] == d[2] || d[0] == d[2] {
        return Err(Error::NotStrictlyHyperbolic(format!("speeds {d:?} are not distinct")));
    }
    // order so that the third speed is the middle one
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&i, &j| d[i].partial_cmp(&d[j]).unwrap());
    let perm = [idx[0], idx[2], idx[1]];
    let dp = perm.map(|i| d[i]);
    let gp: [[f64; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| g[(perm[i], perm[j])]));
    let e = entries_of(&gp.map(|r| r.map(q_f64)));
    if e.a.iter().any(|x| !x.is_negative()) {
        return Err(Error::Precondition("diagonal entries of G must be negative (high-frequency damping)".into()));
    }
    let dq = dp.map(q_f64);
    let theta = (&dq[2] - &dq[0]) / (&dq[1] - &dq[0]);
    let [a1, a2, a3] = &e.a;
    let [b1, b2, b3] = &e.b;
    let [c1, c2, c3] = &e.c;
    let s = a1 * b1 * c1 + a2 * b2 * c2 + a3 * b3 * c3;
    let t3 = a1 * a2 * a3 + b1 * b2 * b3 + c1 * c2 * c3;
    let kk = &s - &t3;
    let m = [a2 * a3 - b1 * c1, a1 * a3 - b2 * c2, a1 * a2 - b3 * c3];

    let (p1, p2) = transition_quadratics(&e, &theta, &kk);
    let res = resultant_z(&p1, &p2);
    if res.is_zero() {
        return Err(Error::Degenerate("resultant in Z vanishes identically".into()));
    }
    let (elim, _) = res.strip_u();
    let (lp1, lp2) = transition_quadratics(&e, &theta, &s);
    let lres = resultant_z(&lp1, &lp2);
    let (lit, _) = lres.strip_u();

    // X = 0: -theta a1 Y^2 = K and Y (M2 + theta M3) = 0
    let x0 = kk.is_zero() || (kk.is_positive() && (&m[1] + &m[2] * &theta).is_zero());

    let roots = isolate_roots_above(&elim, &Q::zero(), &q_frac(1, 1_000_000_000_000));
    let a_mat = linalg::diag(&dp);
    let g_mat = RMat::from_fn(3, 3, |i, j| gp[i][j]);
    let mut positive_roots = vec![];
    let mut transitions = vec![];
    for (lo, hi) in roots {
        let mut lo = lo;
        let mut hi = hi;
        // refine exactly to about 1e-15 relative width
        for _ in 0..200 {
            let mid = (&lo + &hi) / q_int(2);
            let width = (&hi - &lo).to_f64().unwrap_or(0.0);
            if width <= 1e-15 * hi.to_f64().unwrap_or(1.0) {
                break;
            }
            let sl = crate::ratpoly::sign(&elim.eval(&lo));
            let sm = crate::ratpoly::sign(&elim.eval(&mid));
            if sm == 0 {
                lo = mid.clone();
                hi = mid;
                break;
            }
            if sl == 0 || sl != sm {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let u = ((&lo + &hi) / q_int(2)).to_f64().unwrap();
        positive_roots.push(u);
        if let Some(z) = common_real_z(p1.eval_u(u), p2.eval_u(u)) {
            let x = u.sqrt();
            let y = z / x;
            let xi = (y - x) / (dp[1] - dp[0]);
            let tau = x - xi * dp[0];
            let m = linalg::to_complex(&g_mat) * C64::new(-1.0, 0.0)
                + linalg::to_complex(&a_mat) * C64::new(0.0, xi)
                + crate::linalg::CMat::identity(3, 3) * C64::new(0.0, tau);
            let residual = linalg::singular_values_c(&m).last().copied().unwrap_or(0.0);
            let scale = 1.0 + linalg::max_abs(&g_mat) + xi.abs() * linalg::max_abs(&a_mat) + tau.abs();
            if residual <= 1e-6 * scale {
                transitions.push(TransitionPoint { u, x, y, z, xi, tau, residual });
            }
        }
    }
    let (el_s, el_c, el_pos) = monic_strings(&elim);
    let (li_s, li_c, li_pos) = monic_strings(&lit);
    Ok(TransitionReport {
        has_transition: x0 || !transitions.is_empty(),
        permutation: perm,
        theta: theta.to_string(),
        s: s.to_string(),
        t3: t3.to_string(),
        k: kk.to_string(),
        m: m.map(|x| x.to_string()),
        eliminant: el_s,
        eliminant_coefficients: el_c,
        eliminant_all_positive: el_pos,
        literal_eliminant: li_s,
        literal_eliminant_coefficients: li_c,
        literal_all_positive: li_pos,
        positive_roots,
        x0_branch_solution: x0,
        transitions,
        eliminant_poly: elim,
        literal_poly: lit,
    })
}

/// `1/4 X^6 + 27/4 X^4 + 9/2 X^2 + 1` as a polynomial in `u = X^2`.
pub fn quoted_counterexample_eliminant() -> Poly {
    Poly::new(vec![q_int(1), q_frac(9, 2), q_frac(27, 4), q_frac(1, 4)])
}

// ---------------------------------------------------------------------------
// 3x3 diagonal symmetrizers

/// `(S G + G^T S)/2` for `S = diag(alpha)`.
pub fn sym_sg(g: &RMat, alpha: &[f64]) -> RMat {
    let s = linalg::diag(alpha);
    let sg = &s * g;
    (&sg + sg.transpose()) * 0.5
}

/// Largest eigenvalue of `sym(S G)` divided by `sum(alpha)`; negative means `S` works.
pub fn normalized_max_eig(g: &RMat, alpha: &[f64]) -> f64 {
    linalg::sym_max_eig(&sym_sg(g, alpha)) / alpha.iter().sum::<f64>()
}

/// The three Sylvester-type conditions for negativity of `sym(S G)`:
/// values `(-alpha1 a1, minor_13, -det)`; all must be positive.
///
/// The last one is `det sym(S G) < 0`, as required for a negative definite 3x3 matrix.
pub fn closed_form_conditions(g: &RMat, alpha: &[f64; 3]) -> [f64; 3] {
    let e = entries_of(&std::array::from_fn(|i| std::array::from_fn(|j| g[(i, j)])));
    let [a1, a2, a3] = e.a;
    let [b1, b2, b3] = e.b;
    let [c1, c2, c3] = e.c;
    let [x1, x2, x3] = *alpha;
    let (m11, m22, m33) = (x1 * a1, x2 * a2, x3 * a3);
    let ee = 0.5 * (x1 * b3 + x2 * c3);
    let ff = 0.5 * (x1 * c2 + x3 * b2);
    let gg = 0.5 * (x2 * b1 + x3 * c1);
    let minor13 = m11 * m33 - ff * ff;
    let det = m11 * m22 * m33 + 2.0 * ee * ff * gg - m11 * gg * gg - m22 * ff * ff - m33 * ee * ee;
    [-m11, minor13, -det]
}

/// A condition that fails for every positive weight.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Obstruction {
    pub pair: (usize, usize),
    /// `q(alpha_i, alpha_k) = A alpha_i^2 + B alpha_i alpha_k + C alpha_k^2`, with the
    /// pair minor equal to `-q/4`.
    pub quadratic: [f64; 3],
    pub inequality: String,
}

fn fmt_coef(x: f64) -> String {
    if (x - x.round()).abs() < 1e-12 {
        format!("{}", x.round() as i64)
    } else {
        format!("{x}")
    }
}

/// Searches for a pair `(i, k)` whose 2x2 principal minor of `sym(S G)` cannot be positive.
///
/// The minor is `alpha_i alpha_k a_i a_k - (alpha_i G_ik + alpha_k G_ki)^2/4 = -q/4`, and
/// it is nonpositive on the whole quadrant iff `q` is copositive:
/// `A >= 0`, `C >= 0`, `B >= -2 sqrt(AC)`.
pub fn pair_obstruction(g: &RMat) -> Option<Obstruction> {
    let n = g.nrows();
    for i in 0..n {
        if g[(i, i)] >= 0.0 {
            let name = format!("alpha{}", i + 1);
            return Some(Obstruction {
                pair: (i, i),
                quadratic: [0.0; 3],
                inequality: format!("0 > {name} * {}", fmt_coef(g[(i, i)])),
            });
        }
    }
    for i in 0..n {
        for k in (i + 1)..n {
            let (gik, gki) = (g[(i, k)], g[(k, i)]);
            let qa = gik * gik;
            let qb = 2.0 * gik * gki - 4.0 * g[(i, i)] * g[(k, k)];
            let qc = gki * gki;
            let root = 2.0 * (qa * qc).sqrt();
            let tol = 1e-12 * (qa + qb.abs() + qc).max(1.0);
            if qb < -root - tol {
                continue;
            }
            let (vi, vk) = (format!("alpha{}", i + 1), format!("alpha{}", k + 1));
            let inequality = if (qb + root).abs() <= tol {
                let (si, sk) = (qa.sqrt(), qc.sqrt());
                let ti = if (si - 1.0).abs() < 1e-12 { vi.clone() } else { format!("{} {vi}", fmt_coef(si)) };
                let tk = if (sk - 1.0).abs() < 1e-12 { vk.clone() } else { format!("{} {vk}", fmt_coef(sk)) };
                format!("0 > 1/4 ({ti} - {tk})^2")
            } else {
                format!("0 > 1/4 ({} {vi}^2 + {} {vi} {vk} + {} {vk}^2)", fmt_coef(qa), fmt_coef(qb), fmt_coef(qc))
            };
            return Some(Obstruction { pair: (i, k), quadratic: [qa, qb, qc], inequality });
        }
    }
    None
}

#[derive(Debug, Clone, Serialize)]
pub struct SymmetrizerVerdict {
    pub spectrally_stable: bool,
    /// `-sup_xi` of the spectral abscissa of the symbol.
    pub stability_margin: f64,
    pub symmetrizable: bool,
    pub witness: Option<[f64; 3]>,
    /// Best weights found by the search (normalized `alpha1 = 1`).
    pub best_alpha: [f64; 3],
    /// `max eig sym(S G) / sum(alpha)` at `best_alpha`.
    pub best_max_eig: f64,
    /// Largest eigenvalue of `sym(S G)` at the best weights (unnormalized).
    pub best_max_eig_raw: f64,
    pub closed_form: [f64; 3],
    pub obstruction: Option<Obstruction>,
}

/// Required margin of a returned witness.
pub const WITNESS_MARGIN: f64 = 1e-6;

/// Grid-then-polish search for diagonal `S` with `sym(S G)` negative definite.
pub fn diagonal_symmetrizer_search_3x3(d: [f64; 3], g: &RMat) -> Result<SymmetrizerVerdict> {
    let sup = symbol_abscissa_sup(&linalg::diag(&d), g, SYMBOL_SAMPLES)?;
    let m = 201;
    let logs: Vec<f64> = (0..m).map(|k| -4.0 + 8.0 * k as f64 / (m - 1) as f64).collect();
    let f = |l2: f64, l3: f64| normalized_max_eig(g, &[1.0, 10f64.powf(l2), 10f64.powf(l3)]);
    let (mut b2, mut b3, mut best) = logs
        .par_iter()
        .map(|&l2| {
            logs.iter().fold((l2, 0.0, f64::INFINITY), |acc, &l3| {
                let v = f(l2, l3);
                if v < acc.2 {
                    (l2, l3, v)
                } else {
                    acc
                }
            })
        })
        .reduce(|| (0.0, 0.0, f64::INFINITY), |x, y| if y.2 < x.2 || (y.2 == x.2 && (y.0, y.1) < (x.0, x.1)) { y } else { x });
    // pattern search in log coordinates
    let mut step = 8.0 / (m - 1) as f64;
    while step > 1e-10 {
        let mut moved = false;
        for (dx, dy) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step), (step, step), (-step, -step), (step, -step), (-step, step)] {
            let v = f(b2 + dx, b3 + dy);
            if v < best {
                best = v;
                b2 += dx;
                b3 += dy;
                moved = true;
                break;
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    let alpha = [1.0, 10f64.powf(b2), 10f64.powf(b3)];
    // independent re-verification of the witness
    let raw = linalg::sym_max_eig(&sym_sg(g, &alpha));
    let symmetrizable = raw < -WITNESS_MARGIN;
    let obstruction = pair_obstruction(g);
    Ok(SymmetrizerVerdict {
        spectrally_stable: sup < 0.0,
        stability_margin: -sup,
        symmetrizable,
        witness: if symmetrizable { Some(alpha) } else { None },
        best_alpha: alpha,
        best_max_eig: best,
        best_max_eig_raw: raw,
        closed_form: closed_form_conditions(g, &alpha),
        obstruction: if symmetrizable { None } else { obstruction },
    })
}

// ---------------------------------------------------------------------------
// epsilon variant

/// `G_eps`: entry `(3,1)` of the counterexample source replaced by `1 + eps`.
pub fn counterexample_source(eps: f64) -> RMat {
    crate::system_model::appendix_3x3_source(eps)
}

pub const COUNTEREXAMPLE_SPEEDS: [f64; 3] = [1.0, 3.0, 2.0];

/// Smallest `eps > 0` at which the variant acquires a transition, located by a
/// scan with step `scan_step` up to `eps_max` and exact bisection on the first crossing.
pub fn eps_stability_threshold(scan_step: f64, eps_max: f64) -> Result<Option<f64>> {
    let has = |eps: f64| -> Result<bool> { Ok(transition_check_3x3(COUNTEREXAMPLE_SPEEDS, &counterexample_source(eps))?.has_transition) };
    let mut lo = 0.0;
    let steps = (eps_max / scan_step).ceil() as usize;
    for k in 1..=steps {
        let e = k as f64 * scan_step;
        if has(e)? {
            let mut hi = e;
            for _ in 0..50 {
                let mid = 0.5 * (lo + hi);
                if has(mid)? {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(Some(0.5 * (lo + hi)));
        }
        lo = e;
    }
    Ok(None)
}

// ---------------------------------------------------------------------------
// report

#[derive(Debug, Clone, Serialize)]
pub struct TwoByTwoSummary {
    pub samples: usize,
    pub agree_fourier: usize,
    pub agree_symmetrizer: usize,
    pub agree_witness: usize,
    pub stable_count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpsSummary {
    pub eps: f64,
    pub transition: bool,
    pub stability_margin: f64,
    pub best_max_eig_raw: f64,
    pub obstruction: Option<Obstruction>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeparationReport {
    pub seed: u64,
    pub two_by_two: TwoByTwoSummary,
    pub counterexample_transition: TransitionReport,
    pub counterexample_verdict: SymmetrizerVerdict,
    pub literal_matches_quoted: bool,
    pub eps_variant: EpsSummary,
    pub eps_threshold: Option<f64>,
    pub pass: bool,
}

/// Random 2x2 sample bounded `gap` away from the stability boundaries.
pub fn sample_2x2(rng: &mut ChaCha8Rng, gap: f64) -> (f64, f64, [f64; 4]) {
    loop {
        let v: [f64; 4] = std::array::from_fn(|_| rng.random_range(-5.0..5.0));
        let d2: f64 = rng.random_range(-3.0..3.0);
        let [a, b, c, d] = v;
        if a.abs() < gap || d.abs() < gap || (a * d - b * c).abs() < gap {
            continue;
        }
        if d2.abs() < 0.1 || (d2 - 1.0).abs() < 0.1 {
            continue;
        }
        return (1.0, d2, v);
    }
}

/// Runs the 2x2 equivalence checks on `samples` seeded random matrices.
pub fn two_by_two_equivalence(seed: u64, samples: usize) -> Result<TwoByTwoSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cases: Vec<(f64, f64, [f64; 4])> = (0..samples).map(|_| sample_2x2(&mut rng, 1e-6)).collect();
    let rows: Vec<(bool, bool, bool, bool)> = cases
        .par_iter()
        .map(|&(d1, d2, [a, b, c, d])| {
            let st = stability_2x2(a, b, c, d);
            let g = RMat::from_row_slice(2, 2, &[a, b, c, d]);
            let sup = symbol_abscissa_sup(&linalg::diag(&[d1, d2]), &g, SYMBOL_SAMPLES)?;
            let four = sup < 0.0;
            let feas = symmetrizer_feasible_2x2(a, b, c, d);
            let wit = match symmetrizer_2x2(a, b, c, d) {
                Ok((x1, x2)) => linalg::sym_max_eig(&sym_sg(&g, &[x1, x2])) < 0.0,
                Err(_) => false,
            };
            Ok((st, st == four, st == feas, st == wit))
        })
        .collect::<Result<_>>()?;
    Ok(TwoByTwoSummary {
        samples,
        agree_fourier: rows.iter().filter(|r| r.1).count(),
        agree_symmetrizer: rows.iter().filter(|r| r.2).count(),
        agree_witness: rows.iter().filter(|r| r.3).count(),
        stable_count: rows.iter().filter(|r| r.0).count(),
    })
}

pub fn separation_report(seed: u64) -> Result<SeparationReport> {
    let two = two_by_two_equivalence(seed, 1000)?;
    let g = counterexample_source(0.0);
    let tr = transition_check_3x3(COUNTEREXAMPLE_SPEEDS, &g)?;
    let verdict = diagonal_symmetrizer_search_3x3(COUNTEREXAMPLE_SPEEDS, &g)?;
    let literal_matches_quoted = tr.literal_poly.monic() == quoted_counterexample_eliminant().monic();
    let eps = 1e-2;
    let ge = counterexample_source(eps);
    let tre = transition_check_3x3(COUNTEREXAMPLE_SPEEDS, &ge)?;
    let ve = diagonal_symmetrizer_search_3x3(COUNTEREXAMPLE_SPEEDS, &ge)?;
    let eps_variant = EpsSummary {
        eps,
        transition: tre.has_transition,
        stability_margin: ve.stability_margin,
        best_max_eig_raw: ve.best_max_eig_raw,
        obstruction: pair_obstruction(&ge),
    };
    let eps_threshold = eps_stability_threshold(0.05, 5.0)?;
    let pass = two.agree_fourier == two.samples
        && two.agree_symmetrizer == two.samples
        && !tr.has_transition
        && tr.eliminant_all_positive
        && verdict.spectrally_stable
        && !verdict.symmetrizable
        && verdict.obstruction.is_some()
        && !eps_variant.transition
        && eps_variant.stability_margin > 0.0
        && eps_variant.best_max_eig_raw > 0.0;
    Ok(SeparationReport {
        seed,
        two_by_two: two,
        counterexample_transition: tr,
        counterexample_verdict: verdict,
        literal_matches_quoted,
        eps_variant,
        eps_threshold,
        pass,
    })
}

impl SeparationReport {
    pub fn to_markdown(&self) -> String {
        let t = &self.counterexample_transition;
        let v = &self.counterexample_verdict;
        let mut s = String::new();
        s.push_str("# Stability versus dissipative symmetrizability\n\n");
        s.push_str(&format!("Verdict: **{}**\n\n", if self.pass { "PASS" } else { "FAIL" }));
        s.push_str("## 2x2 systems\n\n");
        let two = &self.two_by_two;
        s.push_str(&format!(
            "- samples: {} (seed {}), stable: {}\n- agreement with the Fourier sweep: {}/{}\n- agreement with symmetrizer feasibility: {}/{}\n- explicit witness verified: {}/{}\n\n",
            two.samples, self.seed, two.stable_count, two.agree_fourier, two.samples, two.agree_symmetrizer, two.samples, two.agree_witness, two.samples
        ));
        s.push_str("## 3x3 counterexample\n\n");
        s.push_str("A = diag(1, 3, 2), G = [[-1, 1, 1], [-1, -1, -1], [1, 1, -1]]\n\n");
        s.push_str(&format!("- theta = {}, S = {}, T3 = {}, K = S - T3 = {}\n", t.theta, t.s, t.t3, t.k));
        s.push_str(&format!("- eliminant in u = X^2 (monic): {}\n", t.eliminant));
        s.push_str(&format!("- eliminant with S in place of K (monic): {}\n", t.literal_eliminant));
        s.push_str(&format!("- literal form matches 1/4 X^6 + 27/4 X^4 + 9/2 X^2 + 1: {}\n", self.literal_matches_quoted));
        s.push_str(&format!("- positive roots: {:?}, X = 0 branch: {}, transition: {}\n", t.positive_roots, t.x0_branch_solution, t.has_transition));
        s.push_str(&format!("- spectral margin: {:.6}\n", v.stability_margin));
        s.push_str(&format!("- symmetrizable: {}\n", v.symmetrizable));
        if let Some(o) = &v.obstruction {
            s.push_str(&format!("- obstruction: {}\n", o.inequality));
        }
        s.push_str(&format!("- best weights {:?}, max eig sym(SG) = {:.3e}\n\n", v.best_alpha, v.best_max_eig_raw));
        s.push_str("## epsilon variant\n\n");
        let e = &self.eps_variant;
        s.push_str(&format!(
            "- eps = {}: transition {}, spectral margin {:.6}, max eig sym(SG) at best S = {:.3e}\n",
            e.eps, e.transition, e.stability_margin, e.best_max_eig_raw
        ));
        if let Some(o) = &e.obstruction {
            s.push_str(&format!("- pair obstruction: {}\n", o.inequality));
        }
        match self.eps_threshold {
            Some(x) => s.push_str(&format!("- empirical stability threshold: eps* = {x:.9}\n")),
            None => s.push_str("- no transition found on the scanned range\n"),
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stability_2x2_examples() {
        assert!(stability_2x2(-1.0, 0.0, 0.0, -1.0));
        assert!(!stability_2x2(-1.0, 2.0, 1.0, -1.0));
    }

    #[test]
    fn witness_2x2() {
        assert_eq!(symmetrizer_2x2(-1.0, 1.0, -1.0, -1.0).unwrap(), (1.0, 1.0));
        let (x1, x2) = symmetrizer_2x2(-1.0, 0.0, 3.0, -2.0).unwrap();
        assert_eq!(x1, 1.0);
        assert!((x2 - 0.5 * (4.0 / 9.0)).abs() < 1e-15);
        assert!(matches!(symmetrizer_2x2(-1.0, 2.0, 1.0, -1.0), Err(Error::Precondition(_))));
    }

    #[test]
    fn minus_identity_is_symmetrizable() {
        let v = diagonal_symmetrizer_search_3x3([1.0, 3.0, 2.0], &(-RMat::identity(3, 3))).unwrap();
        assert!(v.symmetrizable && v.spectrally_stable);
        let w = v.witness.unwrap();
        assert!(linalg::sym_max_eig(&sym_sg(&-RMat::identity(3, 3), &w)) < -WITNESS_MARGIN);
        // det sym(SG) < 0 for negative definite
        assert!(closed_form_conditions(&-RMat::identity(3, 3), &[1.0, 1.0, 1.0]).iter().all(|x| *x > 0.0));
    }

    #[test]
    fn diagonal_source_has_no_transition() {
        let g = linalg::diag(&[-1.0, -2.0, -0.5]);
        let r = transition_check_3x3([1.0, 3.0, 2.0], &g).unwrap();
        assert!(!r.has_transition);
    }
}
