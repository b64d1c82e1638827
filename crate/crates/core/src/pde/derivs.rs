use std::collections::BTreeMap;

use crate::autodiff::{Jet, Tensor, MAX_ORDER};
use crate::mathcore::Matrix;
use crate::{Error, Result};

use super::Field;

/// Derivatives a residual operator reads. Columns of the input are spatial
/// axes followed by time.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Needs {
    /// `(axis, highest order)` pairs.
    pub axes: Vec<(usize, usize)>,
    /// `∂²_a ∂²_b` for the pair `(a, b)`.
    pub mixed: Option<(usize, usize)>,
}

/// Field values and the requested derivatives at a batch of points. Each
/// entry has one row per point and one column per output component.
#[derive(Clone, Debug)]
pub struct Derivs<T> {
    value: T,
    /// `[axis][order - 1]`, empty for axes that were not requested.
    per_axis: Vec<Vec<T>>,
    mixed: Option<T>,
}

impl<T: Tensor> Derivs<T> {
    pub fn value(&self) -> &T {
        &self.value
    }

    /// `∂ᵏu/∂x_axisᵏ`; panics if it was not requested.
    pub fn d(&self, axis: usize, order: usize) -> &T {
        match order {
            0 => &self.value,
            _ => self
                .per_axis
                .get(axis)
                .and_then(|v| v.get(order - 1))
                .unwrap_or_else(|| {
                    panic!("derivative of order {order} along axis {axis} not requested")
                }),
        }
    }

    pub fn mixed(&self) -> &T {
        self.mixed.as_ref().expect("mixed derivative not requested")
    }
}

fn seed_matrix(rows: usize, cols: usize, blocks: &[usize]) -> Matrix {
    let mut e = Matrix::zeros(rows * blocks.len(), cols);
    for (b, &axis) in blocks.iter().enumerate() {
        for r in 0..rows {
            e.set(b * rows + r, axis, 1.0);
        }
    }
    e
}

/// Evaluates `field` and the derivatives in `needs` at the rows of `x`.
///
/// Axes that need the same order share one jet pass: the point batch is
/// repeated once per axis and each copy is seeded along its own axis. The
/// mixed fourth derivative runs one nested pass.
pub fn derivatives<W, T, F, L>(field: &F, x: &Matrix, needs: &Needs, lift: &L) -> Result<Derivs<T>>
where
    T: Tensor<Weight = W>,
    F: Field<W>,
    L: Fn(Matrix) -> T,
{
    let (n, dim) = x.shape();
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &(axis, order) in &needs.axes {
        if axis >= dim {
            return Err(Error::Dimension(format!(
                "axis {axis} out of range for {dim} inputs"
            )));
        }
        if order > MAX_ORDER {
            return Err(Error::UnsupportedOrder(format!(
                "order {order} exceeds {MAX_ORDER}"
            )));
        }
        if order > 0 {
            groups.entry(order).or_default().push(axis);
        }
    }
    let mut per_axis: Vec<Vec<T>> = vec![Vec::new(); dim];
    let mut value = None;
    for (&degree, axes) in &groups {
        let stacked = if axes.len() == 1 {
            x.clone()
        } else {
            Matrix::vstack(&vec![x; axes.len()])
        };
        let zero = lift(Matrix::zeros(stacked.rows(), dim));
        let mut coeffs = vec![lift(stacked.clone()), lift(seed_matrix(n, dim, axes))];
        coeffs.extend(std::iter::repeat_n(zero, degree - 1));
        let out = field.eval(&Jet::new(coeffs))?;
        let block = |t: &T, b: usize| {
            if axes.len() == 1 {
                t.clone()
            } else {
                t.slice_rows(b * n, n)
            }
        };
        for (b, &axis) in axes.iter().enumerate() {
            per_axis[axis] = (1..=degree).map(|k| block(&out.coeffs()[k], b)).collect();
        }
        value.get_or_insert_with(|| block(out.value(), 0));
    }
    let value = match value {
        Some(v) => v,
        None => field.eval(&lift(x.clone()))?,
    };
    let mixed = match needs.mixed {
        Some((a, b)) => {
            if a >= dim || b >= dim || a == b {
                return Err(Error::Dimension(format!("bad mixed pair ({a}, {b})")));
            }
            let zero = lift(Matrix::zeros(n, dim));
            let inner_x = Jet::new(vec![
                lift(x.clone()),
                lift(seed_matrix(n, dim, &[a])),
                zero.clone(),
            ]);
            let inner_e = Jet::new(vec![
                lift(seed_matrix(n, dim, &[b])),
                zero.clone(),
                zero.clone(),
            ]);
            let inner_0 = Jet::new(vec![zero.clone(), zero.clone(), zero]);
            let out = field.eval(&Jet::new(vec![inner_x, inner_e, inner_0]))?;
            Some(out.coeffs()[2].coeffs()[2].clone())
        }
        None => None,
    };
    Ok(Derivs {
        value,
        per_axis,
        mixed,
    })
}
