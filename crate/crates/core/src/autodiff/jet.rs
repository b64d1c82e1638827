use std::ops::{Add, Div, Mul, Neg, Sub};

use super::real::{powi_by_squaring, Elementary, Real, Tensor, MAX_ORDER};
use crate::{Error, Result};

const BINOM: [[f64; MAX_ORDER + 1]; MAX_ORDER + 1] = [
    [1.0, 0.0, 0.0, 0.0, 0.0],
    [1.0, 1.0, 0.0, 0.0, 0.0],
    [1.0, 2.0, 1.0, 0.0, 0.0],
    [1.0, 3.0, 3.0, 1.0, 0.0],
    [1.0, 4.0, 6.0, 4.0, 1.0],
];

/// Truncated Taylor object in one seed direction.
///
/// `coeffs[j]` is the raw `j`-th derivative (no `1/j!` factor). The scalar
/// type may itself be a jet, which is how mixed partials are formed, or a
/// tape variable, which keeps every coefficient differentiable with respect
/// to parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet<T> {
    coeffs: Vec<T>,
    singular: bool,
}

impl<T: Real> Jet<T> {
    pub fn new(coeffs: Vec<T>) -> Self {
        assert!(
            !coeffs.is_empty() && coeffs.len() <= MAX_ORDER + 1,
            "jet degree must be in 0..={MAX_ORDER}"
        );
        Self {
            coeffs,
            singular: false,
        }
    }

    /// Constant: derivatives all zero.
    pub fn constant(value: T, degree: usize) -> Self {
        let zero = value.zeros_like();
        let mut coeffs = vec![value];
        coeffs.extend(std::iter::repeat_n(zero, degree));
        Self::new(coeffs)
    }

    /// Independent variable: first derivative one.
    pub fn variable(value: T, degree: usize) -> Self {
        let mut jet = Self::constant(value, degree);
        if degree >= 1 {
            jet.coeffs[1] = jet.coeffs[1].add_scalar(1.0);
        }
        jet
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<T> {
        self.coeffs
    }

    pub fn value(&self) -> &T {
        &self.coeffs[0]
    }

    /// Set once a division by a jet with a zero value has occurred.
    pub fn is_singular(&self) -> bool {
        self.singular
    }

    fn map(&self, f: impl Fn(&T) -> T) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(f).collect(),
            singular: self.singular,
        }
    }

    fn zip(self, rhs: Self, f: impl Fn(T, T) -> T) -> Self {
        let singular = self.singular || rhs.singular;
        let coeffs = self
            .coeffs
            .into_iter()
            .zip(rhs.coeffs)
            .map(|(a, b)| f(a, b))
            .collect();
        Self { coeffs, singular }
    }
}

impl<T: Real> Add for Jet<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.zip(rhs, |a, b| a + b)
    }
}

impl<T: Real> Sub for Jet<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.zip(rhs, |a, b| a - b)
    }
}

impl<T: Real> Neg for Jet<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self {
            coeffs: self.coeffs.into_iter().map(|c| -c).collect(),
            singular: self.singular,
        }
    }
}

impl<T: Real> Mul for Jet<T> {
    type Output = Self;
    /// Leibniz rule on raw derivatives.
    fn mul(self, rhs: Self) -> Self {
        let k = self.degree().min(rhs.degree());
        let coeffs = (0..=k)
            .map(|n| {
                let mut acc = self.coeffs[0].clone() * rhs.coeffs[n].clone();
                for j in 1..=n {
                    let term = self.coeffs[j].clone() * rhs.coeffs[n - j].clone();
                    acc = acc
                        + if BINOM[n][j] == 1.0 {
                            term
                        } else {
                            term.scale(BINOM[n][j])
                        };
                }
                acc
            })
            .collect();
        Self {
            coeffs,
            singular: self.singular || rhs.singular,
        }
    }
}

impl<T: Real> Div for Jet<T> {
    type Output = Self;
    /// `h = f/g` from `f⁽ⁿ⁾ = Σ C(n,j) g⁽ʲ⁾ h⁽ⁿ⁻ʲ⁾`.
    fn div(self, rhs: Self) -> Self {
        let k = self.degree().min(rhs.degree());
        let singular = self.singular || rhs.singular || rhs.coeffs[0].any_zero();
        let g0 = rhs.coeffs[0].clone();
        let mut h: Vec<T> = Vec::with_capacity(k + 1);
        for n in 0..=k {
            let mut num = self.coeffs[n].clone();
            for j in 1..=n {
                let term = rhs.coeffs[j].clone() * h[n - j].clone();
                num = num
                    - if BINOM[n][j] == 1.0 {
                        term
                    } else {
                        term.scale(BINOM[n][j])
                    };
            }
            h.push(num / g0.clone());
        }
        Self {
            coeffs: h,
            singular,
        }
    }
}

impl<T: Real> Real for Jet<T> {
    fn scale(&self, c: f64) -> Self {
        self.map(|v| v.scale(c))
    }
    fn add_scalar(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.coeffs[0] = out.coeffs[0].add_scalar(c);
        out
    }
    fn tanh(&self) -> Self {
        self.elementary(Elementary::Tanh)
    }
    fn sin(&self) -> Self {
        self.elementary(Elementary::Sin)
    }
    fn cos(&self) -> Self {
        self.elementary(Elementary::Cos)
    }
    fn exp(&self) -> Self {
        self.elementary(Elementary::Exp)
    }
    fn powi(&self, n: i32) -> Self {
        powi_by_squaring(self, n)
    }
    fn zeros_like(&self) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c.zeros_like()).collect(),
            singular: false,
        }
    }
    fn any_zero(&self) -> bool {
        self.coeffs[0].any_zero()
    }
}

impl<T: Real> Jet<T> {
    fn elementary(&self, kind: Elementary) -> Self {
        Self {
            coeffs: T::compose(kind, &self.coeffs),
            singular: self.singular,
        }
    }
}

impl<T: Tensor> Tensor for Jet<T> {
    type Weight = T::Weight;

    fn nrows(&self) -> usize {
        self.coeffs[0].nrows()
    }
    fn ncols(&self) -> usize {
        self.coeffs[0].ncols()
    }
    fn linear(&self, w: &Self::Weight) -> Self {
        self.map(|c| c.linear(w))
    }
    /// The bias is constant, so it only shifts the value.
    fn add_bias(&self, b: &Self::Weight) -> Self {
        let mut out = self.clone();
        out.coeffs[0] = out.coeffs[0].add_bias(b);
        out
    }
    fn col(&self, j: usize) -> Self {
        self.map(|c| c.col(j))
    }
    fn concat_cols(parts: &[Self]) -> Self {
        let k = parts.iter().map(|p| p.degree()).min().expect("no parts");
        let coeffs = (0..=k)
            .map(|j| {
                T::concat_cols(
                    &parts
                        .iter()
                        .map(|p| p.coeffs[j].clone())
                        .collect::<Vec<_>>(),
                )
            })
            .collect();
        Self {
            coeffs,
            singular: parts.iter().any(|p| p.singular),
        }
    }
    fn slice_rows(&self, start: usize, count: usize) -> Self {
        self.map(|c| c.slice_rows(start, count))
    }
}

/// Derivatives `f(x0), f'(x0), …, f⁽ᴷ⁾(x0)` of a univariate function.
pub fn jet_eval<T, F>(f: F, x0: T, degree: usize) -> Result<Jet<T>>
where
    T: Real,
    F: FnOnce(Jet<T>) -> Jet<T>,
{
    if degree > MAX_ORDER {
        return Err(Error::UnsupportedOrder(format!(
            "degree {degree} exceeds {MAX_ORDER}"
        )));
    }
    let out = f(Jet::variable(x0, degree));
    if out.is_singular() {
        return Err(Error::SingularPoint(
            "division by a jet whose value is zero".into(),
        ));
    }
    Ok(out)
}

/// A scalar function that can be evaluated on any [`Real`] type. Used where
/// the same function must run at several jet nesting depths.
pub trait ScalarFn {
    fn eval<R: Real>(&self, x: &[R]) -> R;
}

/// Scalar types that can be seeded at a chosen jet nesting level.
pub trait Nest: Real {
    /// Constant at every level. `degrees` lists nesting degrees outermost
    /// first.
    fn lift(v: f64, degrees: &[usize]) -> Self;
    /// Variable seeded at nesting `level` (0 = outermost), constant elsewhere.
    fn seed(v: f64, degrees: &[usize], level: usize) -> Self;
    /// Coefficient selected by one order per nesting level.
    fn coeff_at(&self, orders: &[usize]) -> f64;
    fn nested_singular(&self) -> bool;
}

impl Nest for f64 {
    fn lift(v: f64, _: &[usize]) -> Self {
        v
    }
    fn seed(_: f64, _: &[usize], _: usize) -> Self {
        unreachable!("seeding below the innermost jet level")
    }
    fn coeff_at(&self, _: &[usize]) -> f64 {
        *self
    }
    fn nested_singular(&self) -> bool {
        false
    }
}

impl<T: Nest> Nest for Jet<T> {
    fn lift(v: f64, degrees: &[usize]) -> Self {
        let rest = &degrees[1..];
        let mut coeffs = vec![T::lift(v, rest)];
        coeffs.extend((0..degrees[0]).map(|_| T::lift(0.0, rest)));
        Jet::new(coeffs)
    }
    fn seed(v: f64, degrees: &[usize], level: usize) -> Self {
        let rest = &degrees[1..];
        let mut jet = Self::lift(v, degrees);
        if level == 0 {
            if degrees[0] >= 1 {
                jet.coeffs[1] = T::lift(1.0, rest);
            }
        } else {
            jet.coeffs[0] = T::seed(v, rest, level - 1);
        }
        jet
    }
    fn coeff_at(&self, orders: &[usize]) -> f64 {
        self.coeffs[orders[0]].coeff_at(&orders[1..])
    }
    fn nested_singular(&self) -> bool {
        self.singular || self.coeffs.iter().any(|c| c.nested_singular())
    }
}

fn nested_eval<R: Nest, F: ScalarFn>(
    f: &F,
    point: &[f64],
    orders: &[usize],
    active: &[usize],
) -> Result<f64> {
    let degrees: Vec<usize> = active.iter().map(|&i| orders[i]).collect();
    let inputs: Vec<R> = point
        .iter()
        .enumerate()
        .map(|(i, &v)| match active.iter().position(|&a| a == i) {
            Some(level) => R::seed(v, &degrees, level),
            None => R::lift(v, &degrees),
        })
        .collect();
    let out = f.eval(&inputs);
    if out.nested_singular() {
        return Err(Error::SingularPoint(
            "division by a jet whose value is zero".into(),
        ));
    }
    Ok(out.coeff_at(&degrees))
}

/// `∂^|orders| f / ∂x₁^{o₁}⋯∂xₙ^{oₙ}` at `point`, one jet nesting level per
/// variable with nonzero order.
pub fn mixed_partial<F: ScalarFn>(f: &F, point: &[f64], orders: &[usize]) -> Result<f64> {
    if orders.len() != point.len() {
        return Err(Error::Dimension(format!(
            "{} orders for a point of dimension {}",
            orders.len(),
            point.len()
        )));
    }
    let total: usize = orders.iter().sum();
    if total > MAX_ORDER {
        return Err(Error::UnsupportedOrder(format!(
            "total order {total} exceeds {MAX_ORDER}"
        )));
    }
    let active: Vec<usize> = (0..orders.len()).filter(|&i| orders[i] > 0).collect();
    match active.len() {
        0 => Ok(f.eval(point)),
        1 => nested_eval::<Jet<f64>, F>(f, point, orders, &active),
        2 => nested_eval::<Jet<Jet<f64>>, F>(f, point, orders, &active),
        3 => nested_eval::<Jet<Jet<Jet<f64>>>, F>(f, point, orders, &active),
        _ => nested_eval::<Jet<Jet<Jet<Jet<f64>>>>, F>(f, point, orders, &active),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let j = jet_eval(|x| x.clone() * x, 3.0, 2).unwrap();
        assert_eq!(j.coeffs(), &[9.0, 6.0, 2.0]);
    }

    #[test]
    fn sine_at_zero() {
        let j = jet_eval(|x| x.sin(), 0.0, 4).unwrap();
        assert_eq!(j.coeffs(), &[0.0, 1.0, 0.0, -1.0, 0.0]);
    }

    #[test]
    fn degree_zero_is_plain_evaluation() {
        let f = |x: Jet<f64>| (x.clone() * x.clone()).add_scalar(1.0).tanh() / x.exp();
        let j = jet_eval(f, 0.7, 0).unwrap();
        let plain = (0.7f64 * 0.7 + 1.0).tanh() / 0.7f64.exp();
        assert_eq!(j.coeffs()[0], plain);
    }

    #[test]
    fn singular_division() {
        let err = jet_eval(|x| x.zeros_like().add_scalar(1.0) / x, 0.0, 2).unwrap_err();
        assert!(matches!(err, Error::SingularPoint(_)));
        assert!(jet_eval(|x| x.powi(-2), 0.0, 1).is_err());
        assert!(jet_eval(|x| x.sin(), 0.0, 5).is_err());
    }

    #[test]
    fn quotient_rule() {
        // (x / (1 + x²)) derivatives at 0.5 against closed form.
        let j = jet_eval(|x| x.clone() / (x.clone() * x).add_scalar(1.0), 0.5, 2).unwrap();
        let x = 0.5f64;
        let d1 = (1.0 - x * x) / (1.0 + x * x).powi(2);
        let d2 = (2.0 * x * x * x - 6.0 * x) / (1.0 + x * x).powi(3);
        assert!((j.coeffs()[1] - d1).abs() < 1e-14);
        assert!((j.coeffs()[2] - d2).abs() < 1e-14);
    }

    struct Monomial;
    impl ScalarFn for Monomial {
        fn eval<R: Real>(&self, x: &[R]) -> R {
            x[0].powi(2) * x[1].powi(3)
        }
    }

    struct SinCos;
    impl ScalarFn for SinCos {
        fn eval<R: Real>(&self, x: &[R]) -> R {
            x[0].sin() * x[1].cos()
        }
    }

    #[test]
    fn mixed_partials() {
        assert_eq!(
            mixed_partial(&Monomial, &[2.0, 1.0], &[2, 2]).unwrap(),
            12.0
        );
        assert_eq!(mixed_partial(&SinCos, &[0.0, 0.0], &[1, 1]).unwrap(), 0.0);
        assert_eq!(mixed_partial(&Monomial, &[2.0, 1.0], &[0, 0]).unwrap(), 4.0);
        // ∂³/∂x∂y² of x²y³ = 2x·6y = 24 at (2,1)
        assert_eq!(
            mixed_partial(&Monomial, &[2.0, 1.0], &[1, 2]).unwrap(),
            24.0
        );
        assert!(matches!(
            mixed_partial(&Monomial, &[2.0, 1.0], &[3, 2]),
            Err(Error::UnsupportedOrder(_))
        ));
    }
}
