use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::mathcore::Matrix;

/// Highest derivative order supported by jets.
pub const MAX_ORDER: usize = 4;

/// The smooth unary primitives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Elementary {
    Tanh,
    Sin,
    Cos,
    Exp,
}

impl Elementary {
    pub fn name(self) -> &'static str {
        match self {
            Elementary::Tanh => "tanh",
            Elementary::Sin => "sin",
            Elementary::Cos => "cos",
            Elementary::Exp => "exp",
        }
    }
}

/// Scalar-like arithmetic shared by `f64`, dense matrices (elementwise),
/// tape variables and jets over any of these.
pub trait Real:
    Clone
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn scale(&self, c: f64) -> Self;
    fn add_scalar(&self, c: f64) -> Self;
    fn tanh(&self) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn exp(&self) -> Self;
    fn powi(&self, n: i32) -> Self;
    fn zeros_like(&self) -> Self;
    /// True when some component of the value is exactly zero.
    fn any_zero(&self) -> bool;

    fn apply(&self, kind: Elementary) -> Self {
        match kind {
            Elementary::Tanh => self.tanh(),
            Elementary::Sin => self.sin(),
            Elementary::Cos => self.cos(),
            Elementary::Exp => self.exp(),
        }
    }

    /// Raw derivatives `d⁰..dᴷ` of `f(u(s))` given the raw derivatives
    /// `u = [u⁰..uᴷ]` of the inner function, `K ≤ 4`.
    fn compose(kind: Elementary, u: &[Self]) -> Vec<Self> {
        let g = elementary_derivs(kind, &u[0], u.len() - 1);
        faa_di_bruno(&g, u)
    }
}

/// `[f(u), f'(u), …, f⁽ᵏ⁾(u)]` for an elementary `f`.
pub fn elementary_derivs<T: Real>(kind: Elementary, u: &T, k: usize) -> Vec<T> {
    assert!(
        k <= MAX_ORDER + 1,
        "derivative order {k} exceeds supported range"
    );
    match kind {
        Elementary::Tanh => {
            let t = u.tanh();
            let mut out = vec![t.clone()];
            if k == 0 {
                return out;
            }
            let t2 = t.clone() * t.clone();
            let p = t2.scale(-1.0).add_scalar(1.0);
            out.push(p.clone());
            if k >= 2 {
                out.push((t.clone() * p.clone()).scale(-2.0));
            }
            if k >= 3 {
                out.push(p.clone() * t2.scale(6.0).add_scalar(-2.0));
            }
            if k >= 4 {
                out.push(t.clone() * p.clone() * t2.scale(-24.0).add_scalar(16.0));
            }
            if k >= 5 {
                out.push(p * (t2.clone() * t2.scale(120.0).add_scalar(-120.0)).add_scalar(16.0));
            }
            out
        }
        Elementary::Sin | Elementary::Cos => {
            let s = u.sin();
            let c = u.cos();
            let cycle = [s.clone(), c.clone(), -s, -c];
            let offset = if kind == Elementary::Sin { 0 } else { 1 };
            (0..=k).map(|j| cycle[(j + offset) % 4].clone()).collect()
        }
        Elementary::Exp => vec![u.exp(); k + 1],
    }
}

/// Faà di Bruno for orders up to four: combines outer derivatives
/// `g = [g⁰..]` (at least `u.len()` entries) with inner raw derivatives `u`.
pub fn faa_di_bruno<T: Real>(g: &[T], u: &[T]) -> Vec<T> {
    let k = u.len() - 1;
    assert!(k <= MAX_ORDER, "derivative order {k} exceeds {MAX_ORDER}");
    let mut out = vec![g[0].clone()];
    if k >= 1 {
        out.push(g[1].clone() * u[1].clone());
    }
    if k >= 2 {
        let u1s = u[1].clone() * u[1].clone();
        out.push(g[2].clone() * u1s + g[1].clone() * u[2].clone());
    }
    if k >= 3 {
        let u1 = &u[1];
        let u1c = u1.clone() * u1.clone() * u1.clone();
        out.push(
            g[3].clone() * u1c
                + (g[2].clone() * u1.clone() * u[2].clone()).scale(3.0)
                + g[1].clone() * u[3].clone(),
        );
    }
    if k >= 4 {
        let u1 = &u[1];
        let u1s = u1.clone() * u1.clone();
        out.push(
            g[4].clone() * u1s.clone() * u1s.clone()
                + (g[3].clone() * u1s * u[2].clone()).scale(6.0)
                + g[2].clone()
                    * ((u1.clone() * u[3].clone()).scale(4.0)
                        + (u[2].clone() * u[2].clone()).scale(3.0))
                + g[1].clone() * u[4].clone(),
        );
    }
    out
}

/// Elementwise compose over matrices without intermediate allocations.
/// Returns the outer derivatives up to order `u.len() - 1 + extra` and the
/// composite raw derivatives `d⁰..dᴷ`; same polynomials as
/// [`elementary_derivs`] and [`faa_di_bruno`].
pub fn compose_matrices(
    kind: Elementary,
    u: &[&Matrix],
    extra: usize,
) -> (Vec<Matrix>, Vec<Matrix>) {
    let k = u.len() - 1;
    let kg = k + extra;
    assert!(
        k <= MAX_ORDER && kg <= MAX_ORDER + 1,
        "derivative order {k} exceeds {MAX_ORDER}"
    );
    let (r, c) = u[0].shape();
    let n = r * c;
    let x = u[0].as_slice();
    let mut gs: Vec<Vec<f64>> = Vec::with_capacity(kg + 1);
    match kind {
        Elementary::Tanh => {
            let t: Vec<f64> = x.iter().map(|v| v.tanh()).collect();
            let p: Vec<f64> = t.iter().map(|t| 1.0 - t * t).collect();
            let poly = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
                t.iter().zip(&p).map(|(&t, &p)| f(t, p)).collect()
            };
            if kg >= 2 {
                gs.push(Vec::new());
                gs.push(Vec::new());
                gs.push(poly(&|t, p| -2.0 * (t * p)));
            }
            if kg >= 3 {
                gs.push(poly(&|t, p| p * (6.0 * (t * t) - 2.0)));
            }
            if kg >= 4 {
                gs.push(poly(&|t, p| t * p * (-24.0 * (t * t) + 16.0)));
            }
            if kg >= 5 {
                gs.push(poly(&|t, p| {
                    let t2 = t * t;
                    p * (t2 * (120.0 * t2 - 120.0) + 16.0)
                }));
            }
            if gs.is_empty() {
                gs.push(t);
                if kg >= 1 {
                    gs.push(p);
                }
            } else {
                gs[0] = t;
                gs[1] = p;
            }
        }
        Elementary::Sin | Elementary::Cos => {
            let s: Vec<f64> = x.iter().map(|v| v.sin()).collect();
            let co: Vec<f64> = x.iter().map(|v| v.cos()).collect();
            let offset = if kind == Elementary::Sin { 0 } else { 1 };
            for j in 0..=kg {
                gs.push(match (j + offset) % 4 {
                    0 => s.clone(),
                    1 => co.clone(),
                    2 => s.iter().map(|v| -v).collect(),
                    _ => co.iter().map(|v| -v).collect(),
                });
            }
        }
        Elementary::Exp => {
            let e: Vec<f64> = x.iter().map(|v| v.exp()).collect();
            gs = vec![e; kg + 1];
        }
    }
    let empty: &[f64] = &[];
    let mut us = [empty; MAX_ORDER + 1];
    for (k, m) in u.iter().enumerate() {
        us[k] = &m.as_slice()[..n];
    }
    let g: Vec<&[f64]> = gs.iter().map(|v| &v[..n]).collect();
    let u = us;
    let mut ds = vec![gs[0].clone()];
    for j in 1..=k {
        let mut d = vec![0.0; n];
        macro_rules! kern {
            (|$e:ident| $body:expr) => {
                for $e in 0..n {
                    d[$e] = $body;
                }
            };
        }
        match j {
            1 => kern!(|e| g[1][e] * u[1][e]),
            2 => kern!(|e| g[2][e] * (u[1][e] * u[1][e]) + g[1][e] * u[2][e]),
            3 => kern!(|e| {
                g[3][e] * (u[1][e] * u[1][e] * u[1][e])
                    + 3.0 * (g[2][e] * u[1][e] * u[2][e])
                    + g[1][e] * u[3][e]
            }),
            _ => kern!(|e| {
                let u1s = u[1][e] * u[1][e];
                g[4][e] * u1s * u1s
                    + 6.0 * (g[3][e] * u1s * u[2][e])
                    + g[2][e] * (4.0 * (u[1][e] * u[3][e]) + 3.0 * (u[2][e] * u[2][e]))
                    + g[1][e] * u[4][e]
            }),
        }
        ds.push(d);
    }
    let wrap = |v: Vec<Vec<f64>>| v.into_iter().map(|d| Matrix::from_raw(r, c, d)).collect();
    (wrap(gs), wrap(ds))
}

/// `x^n` by repeated squaring; negative powers go through one division.
pub fn powi_by_squaring<T: Real>(x: &T, n: i32) -> T {
    let mut e = n.unsigned_abs();
    let one = x.zeros_like().add_scalar(1.0);
    let mut acc: Option<T> = None;
    let mut base = x.clone();
    while e > 0 {
        if e & 1 == 1 {
            acc = Some(match acc {
                None => base.clone(),
                Some(a) => a * base.clone(),
            });
        }
        e >>= 1;
        if e > 0 {
            base = base.clone() * base;
        }
    }
    let pos = acc.unwrap_or_else(|| one.clone());
    if n < 0 {
        one / pos
    } else {
        pos
    }
}

impl Real for f64 {
    fn scale(&self, c: f64) -> Self {
        c * self
    }
    fn add_scalar(&self, c: f64) -> Self {
        self + c
    }
    fn tanh(&self) -> Self {
        f64::tanh(*self)
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn powi(&self, n: i32) -> Self {
        f64::powi(*self, n)
    }
    fn zeros_like(&self) -> Self {
        0.0
    }
    fn any_zero(&self) -> bool {
        *self == 0.0
    }
}

impl Real for Matrix {
    fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }
    fn add_scalar(&self, c: f64) -> Self {
        self.map(|v| v + c)
    }
    fn tanh(&self) -> Self {
        self.map(f64::tanh)
    }
    fn sin(&self) -> Self {
        self.map(f64::sin)
    }
    fn cos(&self) -> Self {
        self.map(f64::cos)
    }
    fn exp(&self) -> Self {
        self.map(f64::exp)
    }
    fn powi(&self, n: i32) -> Self {
        self.map(|v| v.powi(n))
    }
    fn zeros_like(&self) -> Self {
        Matrix::zeros(self.rows(), self.cols())
    }
    fn any_zero(&self) -> bool {
        self.as_slice().contains(&0.0)
    }
    fn compose(kind: Elementary, u: &[Self]) -> Vec<Self> {
        let refs: Vec<&Matrix> = u.iter().collect();
        compose_matrices(kind, &refs, 0).1
    }
}

/// Batched values: rows are sample points, columns are features. Weights
/// enter through [`Tensor::linear`] and [`Tensor::add_bias`].
pub trait Tensor: Real {
    /// Parameter handle used by layers (a matrix, or a tape variable).
    type Weight: Clone;

    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `self · wᵀ` for `w` of shape out×in.
    fn linear(&self, w: &Self::Weight) -> Self;
    /// Adds the 1×n row `b` to every row.
    fn add_bias(&self, b: &Self::Weight) -> Self;
    fn col(&self, j: usize) -> Self;
    fn concat_cols(parts: &[Self]) -> Self;
    fn slice_rows(&self, start: usize, count: usize) -> Self;
}

impl Tensor for Matrix {
    type Weight = Matrix;

    fn nrows(&self) -> usize {
        self.rows()
    }
    fn ncols(&self) -> usize {
        self.cols()
    }
    fn linear(&self, w: &Matrix) -> Self {
        self.matmul_nt(w)
    }
    fn add_bias(&self, b: &Matrix) -> Self {
        assert_eq!(
            (b.rows(), b.cols()),
            (1, self.cols()),
            "bias shape mismatch"
        );
        let bias = b.as_slice();
        let mut out = self.clone();
        for row in out.as_mut_slice().chunks_mut(bias.len().max(1)) {
            for (v, bj) in row.iter_mut().zip(bias) {
                *v += bj;
            }
        }
        out
    }
    fn col(&self, j: usize) -> Self {
        self.column(j)
    }
    fn concat_cols(parts: &[Self]) -> Self {
        let refs: Vec<&Matrix> = parts.iter().collect();
        Matrix::hstack(&refs)
    }
    fn slice_rows(&self, start: usize, count: usize) -> Self {
        Matrix::slice_rows(self, start, count)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tanh_derivative_polynomials_match_finite_differences() {
        let x = 0.37;
        let g = elementary_derivs(Elementary::Tanh, &x, 5);
        let h = 1e-4;
        for k in 1..=5 {
            let fd = (g[k - 1].clone()
                - elementary_derivs(Elementary::Tanh, &(x - h), k - 1)[k - 1])
                / h;
            let fwd = (elementary_derivs(Elementary::Tanh, &(x + h), k - 1)[k - 1] - g[k - 1]) / h;
            let central = 0.5 * (fd + fwd);
            assert!(
                (central - g[k]).abs() < 1e-6,
                "order {k}: {central} vs {}",
                g[k]
            );
        }
    }

    #[test]
    fn fused_matrix_compose_matches_generic() {
        let u: Vec<Matrix> = (0..5)
            .map(|j| {
                Matrix::from_fn(3, 2, |r, c| {
                    0.3 * (r as f64) - 0.2 * c as f64 + 0.1 * j as f64
                })
            })
            .collect();
        for kind in [
            Elementary::Tanh,
            Elementary::Sin,
            Elementary::Cos,
            Elementary::Exp,
        ] {
            for k in 0..=MAX_ORDER {
                let fused = Matrix::compose(kind, &u[..=k]);
                let g = elementary_derivs(kind, &u[0], k);
                let generic = faa_di_bruno(&g, &u[..=k]);
                for (a, b) in fused.iter().zip(&generic) {
                    assert!(
                        (a - b).max_abs() <= 1e-14 * (1.0 + b.max_abs()),
                        "{kind:?} order {k}"
                    );
                }
            }
        }
    }

    #[test]
    fn powi_matches_std() {
        for n in [-3, -1, 0, 1, 2, 5] {
            assert!((powi_by_squaring(&1.7, n) - 1.7f64.powi(n)).abs() < 1e-14);
        }
    }

    #[test]
    fn degree_zero_compose_is_plain_op() {
        for kind in [
            Elementary::Tanh,
            Elementary::Sin,
            Elementary::Cos,
            Elementary::Exp,
        ] {
            assert_eq!(f64::compose(kind, &[0.3])[0], 0.3.apply(kind));
        }
    }
}
