//! Univariate polynomials over the rationals, with Sturm sequences.
//!
//! Coefficients are stored in increasing degree; the zero polynomial is the
//! empty vector. Floating-point inputs are converted exactly.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Q = BigRational;

pub fn q_int(v: i64) -> Q {
    Q::from_integer(BigInt::from(v))
}

pub fn q_frac(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

/// Exact rational value of a finite float.
pub fn q_f64(x: f64) -> Q {
    Q::from_float(x).expect("finite float")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Poly {
    pub c: Vec<Q>,
}

impl Poly {
    pub fn new(mut c: Vec<Q>) -> Self {
        while c.last().is_some_and(|x| x.is_zero()) {
            c.pop();
        }
        Poly { c }
    }

    pub fn zero() -> Self {
        Poly { c: vec![] }
    }

    pub fn constant(v: Q) -> Self {
        Poly::new(vec![v])
    }

    /// The monomial `v u^k`.
    pub fn monomial(v: Q, k: usize) -> Self {
        let mut c = vec![Q::zero(); k + 1];
        c[k] = v;
        Poly::new(c)
    }

    pub fn from_ints(v: &[i64]) -> Self {
        Poly::new(v.iter().map(|&x| q_int(x)).collect())
    }

    pub fn is_zero(&self) -> bool {
        self.c.is_empty()
    }

    /// Degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.c.len().checked_sub(1)
    }

    pub fn lead(&self) -> Q {
        self.c.last().cloned().unwrap_or_else(Q::zero)
    }

    pub fn scale(&self, s: &Q) -> Self {
        Poly::new(self.c.iter().map(|x| x * s).collect())
    }

    pub fn eval(&self, x: &Q) -> Q {
        let mut acc = Q::zero();
        for a in self.c.iter().rev() {
            acc = acc * x + a;
        }
        acc
    }

    pub fn eval_f64(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for a in self.c.iter().rev() {
            acc = acc * x + a.to_f64().unwrap_or(f64::NAN);
        }
        acc
    }

    pub fn derivative(&self) -> Self {
        Poly::new(self.c.iter().enumerate().skip(1).map(|(k, a)| a * q_int(k as i64)).collect())
    }

    /// Removes the largest power of `u` dividing the polynomial; returns it and the power.
    pub fn strip_u(&self) -> (Self, usize) {
        let k = self.c.iter().take_while(|x| x.is_zero()).count();
        (Poly::new(self.c[k.min(self.c.len())..].to_vec()), k)
    }

    /// Euclidean division.
    pub fn div_rem(&self, d: &Poly) -> (Poly, Poly) {
        assert!(!d.is_zero(), "division by the zero polynomial");
        let dd = d.degree().unwrap();
        let mut r = self.c.clone();
        let mut quo = vec![Q::zero(); self.c.len().saturating_sub(dd).max(1)];
        let lead = d.lead();
        while r.len() > dd && !r.is_empty() {
            let k = r.len() - 1 - dd;
            let f = r.last().unwrap() / &lead;
            for (i, a) in d.c.iter().enumerate() {
                r[k + i] -= &f * a;
            }
            quo[k] = f;
            r.pop();
            while r.last().is_some_and(|x| x.is_zero()) {
                r.pop();
            }
        }
        (Poly::new(quo), Poly::new(r))
    }

    /// Monic copy (or zero).
    pub fn monic(&self) -> Self {
        if self.is_zero() {
            return self.clone();
        }
        let l = self.lead();
        self.scale(&(Q::one() / l))
    }

    /// True when every coefficient is strictly positive.
    pub fn all_positive(&self) -> bool {
        !self.c.is_empty() && self.c.iter().all(|x| x.is_positive())
    }

    /// Sign of the polynomial as the argument tends to `+inf`.
    pub fn sign_at_inf(&self) -> i32 {
        sign(&self.lead())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.c.iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect()
    }

    /// Coefficients as `"p/q"` strings.
    pub fn to_strings(&self) -> Vec<String> {
        self.c.iter().map(|x| x.to_string()).collect()
    }

    /// Pretty form in the variable `var`, highest degree first.
    pub fn render(&self, var: &str) -> String {
        if self.is_zero() {
            return "0".into();
        }
        let mut out = String::new();
        for (k, a) in self.c.iter().enumerate().rev() {
            if a.is_zero() {
                continue;
            }
            let neg = a.is_negative();
            let mag = a.abs();
            if out.is_empty() {
                if neg {
                    out.push('-');
                }
            } else {
                out.push_str(if neg { " - " } else { " + " });
            }
            let coef = if mag.is_one() && k > 0 { String::new() } else { mag.to_string() };
            let mon = match k {
                0 => String::new(),
                1 => var.to_string(),
                _ => format!("{var}^{k}"),
            };
            if !coef.is_empty() && !mon.is_empty() {
                out.push_str(&format!("{coef} {mon}"));
            } else {
                out.push_str(&coef);
                out.push_str(&mon);
            }
        }
        out
    }
}

pub fn sign(x: &Q) -> i32 {
    if x.is_positive() {
        1
    } else if x.is_negative() {
        -1
    } else {
        0
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.render("u"))
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, o: &Poly) -> Poly {
        let n = self.c.len().max(o.c.len());
        Poly::new(
            (0..n)
                .map(|k| self.c.get(k).cloned().unwrap_or_else(Q::zero) + o.c.get(k).cloned().unwrap_or_else(Q::zero))
                .collect(),
        )
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, o: &Poly) -> Poly {
        self + &(-o)
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        Poly::new(self.c.iter().map(|x| -x).collect())
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, o: &Poly) -> Poly {
        if self.is_zero() || o.is_zero() {
            return Poly::zero();
        }
        let mut c = vec![Q::zero(); self.c.len() + o.c.len() - 1];
        for (i, a) in self.c.iter().enumerate() {
            for (j, b) in o.c.iter().enumerate() {
                c[i + j] += a * b;
            }
        }
        Poly::new(c)
    }
}

/// Sturm sequence `p, p', -rem(p, p'), ...`.
pub fn sturm_sequence(p: &Poly) -> Vec<Poly> {
    let mut seq = vec![p.clone()];
    if p.is_zero() {
        return seq;
    }
    let mut a = p.clone();
    let mut b = p.derivative();
    while !b.is_zero() {
        seq.push(b.clone());
        let (_, r) = a.div_rem(&b);
        a = b;
        b = (-&r).monic_keep_sign();
    }
    seq
}

impl Poly {
    /// Scales by `1/|lead|`, preserving the sign pattern of the Sturm chain.
    fn monic_keep_sign(&self) -> Poly {
        if self.is_zero() {
            return self.clone();
        }
        let l = self.lead().abs();
        self.scale(&(Q::one() / l))
    }
}

fn sign_changes(signs: impl Iterator<Item = i32>) -> usize {
    let mut last = 0;
    let mut n = 0;
    for s in signs {
        if s == 0 {
            continue;
        }
        if last != 0 && s != last {
            n += 1;
        }
        last = s;
    }
    n
}

fn changes_at(seq: &[Poly], x: &Q) -> usize {
    sign_changes(seq.iter().map(|p| sign(&p.eval(x))))
}

fn changes_at_inf(seq: &[Poly]) -> usize {
    sign_changes(seq.iter().map(|p| p.sign_at_inf()))
}

/// Number of distinct real roots in `(a, b]`.
pub fn count_roots_in(seq: &[Poly], a: &Q, b: &Q) -> usize {
    changes_at(seq, a).saturating_sub(changes_at(seq, b))
}

/// Number of distinct real roots in `(a, +inf)`.
pub fn count_roots_above(seq: &[Poly], a: &Q) -> usize {
    changes_at(seq, a).saturating_sub(changes_at_inf(seq))
}

/// Cauchy bound: every root has modulus below the returned value.
pub fn cauchy_bound(p: &Poly) -> Q {
    let l = p.lead().abs();
    let m = p.c.iter().take(p.c.len().saturating_sub(1)).map(|x| x.abs() / &l).fold(Q::zero(), |a, b| if b > a { b } else { a });
    m + Q::one()
}

/// Isolating intervals `(lo, hi]` of the distinct roots in `(a, +inf)`, each narrowed below `width`.
pub fn isolate_roots_above(p: &Poly, a: &Q, width: &Q) -> Vec<(Q, Q)> {
    let seq = sturm_sequence(p);
    let total = count_roots_above(&seq, a);
    if total == 0 {
        return vec![];
    }
    let hi = cauchy_bound(p).max(a.clone() + Q::one());
    let mut out = vec![];
    let mut stack = vec![(a.clone(), hi)];
    while let Some((lo, hi)) = stack.pop() {
        let n = count_roots_in(&seq, &lo, &hi);
        if n == 0 {
            continue;
        }
        if n == 1 && &hi - &lo < *width {
            out.push((lo, hi));
            continue;
        }
        let mid = (&lo + &hi) / q_int(2);
        stack.push((mid.clone(), hi));
        stack.push((lo, mid));
    }
    out.sort_by(|x, y| x.0.cmp(&y.0));
    out
}

/// Quadratic in `Z` with polynomial coefficients in `u`: `c0 + c1 Z + c2 Z^2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuadZ {
    pub c0: Poly,
    pub c1: Poly,
    pub c2: Poly,
}

impl QuadZ {
    pub fn eval_u(&self, u: f64) -> [f64; 3] {
        [self.c0.eval_f64(u), self.c1.eval_f64(u), self.c2.eval_f64(u)]
    }
}

/// Resultant in `Z` of two quadratics:
/// `(a2 b0 - a0 b2)^2 - (a2 b1 - a1 b2)(a1 b0 - a0 b1)`.
pub fn resultant_z(p: &QuadZ, q: &QuadZ) -> Poly {
    let (a0, a1, a2) = (&p.c0, &p.c1, &p.c2);
    let (b0, b1, b2) = (&q.c0, &q.c1, &q.c2);
    let t1 = &(a2 * b0) - &(a0 * b2);
    let t2 = &(a2 * b1) - &(a1 * b2);
    let t3 = &(a1 * b0) - &(a0 * b1);
    &(&t1 * &t1) - &(&t2 * &t3)
}
