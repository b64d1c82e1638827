use std::cell::{Ref, RefCell};
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::rc::Rc;

use super::real::{compose_matrices, Elementary, Real, Tensor, MAX_ORDER};
use crate::mathcore::Matrix;
use crate::{Error, Result};

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    AddScalar(usize),
    Powi(usize, i32),
    /// `x · wᵀ`
    Linear(usize, usize),
    AddBias(usize, usize),
    Col(usize, usize),
    Concat(Vec<usize>),
    SliceRows(usize, usize),
    SumSquares(usize),
    Sum(usize),
    /// Order-`order` raw derivative of `kind ∘ u`; `args` are `u⁰..u^order`
    /// and `g` holds `kind⁽ʲ⁾(u⁰)` for `j = 0..=order + 1`.
    Compose {
        kind: Elementary,
        order: usize,
        args: [usize; MAX_ORDER + 1],
        g: Rc<Vec<Matrix>>,
    },
}

impl Op {
    fn parents(&self) -> Vec<usize> {
        match self {
            Op::Leaf => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) => vec![*a, *b],
            Op::Linear(a, b) | Op::AddBias(a, b) => vec![*a, *b],
            Op::Neg(a)
            | Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::Powi(a, _)
            | Op::Col(a, _)
            | Op::SliceRows(a, _)
            | Op::SumSquares(a)
            | Op::Sum(a) => vec![*a],
            Op::Concat(parts) => parts.clone(),
            Op::Compose { order, args, .. } => args[..=*order].to_vec(),
        }
    }

    fn name(&self) -> String {
        match self {
            Op::Leaf => "leaf".into(),
            Op::Add(..) => "add".into(),
            Op::Sub(..) => "sub".into(),
            Op::Mul(..) => "mul".into(),
            Op::Div(..) => "div".into(),
            Op::Neg(_) => "neg".into(),
            Op::Scale(..) => "scale".into(),
            Op::AddScalar(_) => "add_scalar".into(),
            Op::Powi(_, n) => format!("powi({n})"),
            Op::Linear(..) => "linear".into(),
            Op::AddBias(..) => "add_bias".into(),
            Op::Col(..) => "col".into(),
            Op::Concat(_) => "concat_cols".into(),
            Op::SliceRows(..) => "slice_rows".into(),
            Op::SumSquares(_) => "sum_squares".into(),
            Op::Sum(_) => "sum".into(),
            Op::Compose { kind, order, .. } if *order == 0 => kind.name().into(),
            Op::Compose { kind, order, .. } => format!("{}[d{order}]", kind.name()),
        }
    }
}

struct Node {
    op: Op,
    value: Matrix,
    needs_grad: bool,
}

/// Append-only record of matrix-valued operations. Parents always precede
/// children, so the backward pass is a single reverse sweep.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{} {:?}", self.idx, &*self.value())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A leaf that gradients flow into.
    pub fn param(&self, value: Matrix) -> Var<'_> {
        self.push(Op::Leaf, value, true)
    }

    /// A leaf that is held fixed.
    pub fn constant(&self, value: Matrix) -> Var<'_> {
        self.push(Op::Leaf, value, false)
    }

    fn push(&self, op: Op, value: Matrix, needs_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        Var {
            tape: self,
            idx: nodes.len() - 1,
        }
    }

    fn needs(&self, idx: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        idx.iter().any(|&i| nodes[i].needs_grad)
    }

    fn unary(&self, a: usize, op: Op, f: impl FnOnce(&Matrix) -> Matrix) -> Var<'_> {
        let value = f(&self.nodes.borrow()[a].value);
        let needs = self.needs(&[a]);
        self.push(op, value, needs)
    }

    fn binary(
        &self,
        a: usize,
        b: usize,
        op: Op,
        f: impl FnOnce(&Matrix, &Matrix) -> Matrix,
    ) -> Var<'_> {
        let value = {
            let nodes = self.nodes.borrow();
            f(&nodes[a].value, &nodes[b].value)
        };
        let needs = self.needs(&[a, b]);
        self.push(op, value, needs)
    }

    /// Reverse sweep from a 1×1 root.
    pub fn backward(&self, root: Var<'_>) -> Gradients {
        self.sweep(root, false).0
    }

    /// Like [`Tape::backward`], but also names the operation whose local
    /// derivative first turned finite upstream gradients non-finite.
    pub fn backward_diagnose(&self, root: Var<'_>) -> (Gradients, Option<String>) {
        self.sweep(root, true)
    }

    fn sweep(&self, root: Var<'_>, diagnose: bool) -> (Gradients, Option<String>) {
        assert!(
            std::ptr::eq(self, root.tape),
            "root belongs to another tape"
        );
        let nodes = self.nodes.borrow();
        assert_eq!(
            nodes[root.idx].value.shape(),
            (1, 1),
            "backward needs a scalar root"
        );
        let mut grads: Vec<Option<Matrix>> = vec![None; nodes.len()];
        grads[root.idx] = Some(Matrix::scalar(1.0));
        let mut culprit = None;
        for idx in (0..=root.idx).rev() {
            let node = &nodes[idx];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let finite = !diagnose || g.is_finite();
            propagate(&nodes, idx, g, &mut grads);
            if diagnose && culprit.is_none() && finite {
                let bad = node
                    .op
                    .parents()
                    .iter()
                    .any(|&p| grads[p].as_ref().is_some_and(|m| !m.is_finite()));
                if bad {
                    culprit = Some(node.op.name());
                }
            }
        }
        (Gradients { grads }, culprit)
    }

    /// Name of the operation that produced the first non-finite value, if any.
    pub fn first_non_finite(&self) -> Option<String> {
        self.nodes
            .borrow()
            .iter()
            .find(|n| !n.value.is_finite())
            .map(|n| n.op.name())
    }
}

fn accumulate(nodes: &[Node], grads: &mut [Option<Matrix>], i: usize, g: Matrix) {
    if !nodes[i].needs_grad {
        return;
    }
    match &mut grads[i] {
        Some(acc) => acc.add_in_place(&g),
        slot => *slot = Some(g),
    }
}

fn accumulate_ref(nodes: &[Node], grads: &mut [Option<Matrix>], i: usize, g: &Matrix) {
    if !nodes[i].needs_grad {
        return;
    }
    match &mut grads[i] {
        Some(acc) => acc.add_in_place(g),
        slot => *slot = Some(g.clone()),
    }
}

fn propagate(nodes: &[Node], idx: usize, g: Matrix, grads: &mut [Option<Matrix>]) {
    let val = |i: usize| &nodes[i].value;
    let g = &g;
    match &nodes[idx].op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            accumulate_ref(nodes, grads, *a, g);
            accumulate_ref(nodes, grads, *b, g);
        }
        Op::Sub(a, b) => {
            accumulate_ref(nodes, grads, *a, g);
            if nodes[*b].needs_grad {
                accumulate(nodes, grads, *b, -g);
            }
        }
        Op::Mul(a, b) => {
            if nodes[*a].needs_grad {
                accumulate(nodes, grads, *a, g * val(*b));
            }
            if nodes[*b].needs_grad {
                accumulate(nodes, grads, *b, g * val(*a));
            }
        }
        Op::Div(a, b) => {
            let gb = g / val(*b);
            if nodes[*b].needs_grad {
                accumulate(nodes, grads, *b, -(&gb * &nodes[idx].value));
            }
            accumulate(nodes, grads, *a, gb);
        }
        Op::Neg(a) => accumulate(nodes, grads, *a, -g),
        Op::Scale(a, c) => accumulate(nodes, grads, *a, g.scale(*c)),
        Op::AddScalar(a) => accumulate_ref(nodes, grads, *a, g),
        Op::Powi(a, n) => {
            let n = *n;
            let d = val(*a).map(|x| {
                if n == 0 {
                    0.0
                } else {
                    n as f64 * x.powi(n - 1)
                }
            });
            accumulate(nodes, grads, *a, g * &d);
        }
        Op::Linear(x, w) => {
            if nodes[*x].needs_grad {
                accumulate(nodes, grads, *x, g.matmul(val(*w)));
            }
            if nodes[*w].needs_grad {
                accumulate(nodes, grads, *w, g.matmul_tn(val(*x)));
            }
        }
        Op::AddBias(x, b) => {
            if nodes[*b].needs_grad {
                let mut sums = vec![0.0; g.cols()];
                for r in 0..g.rows() {
                    for (s, v) in sums.iter_mut().zip(g.row(r)) {
                        *s += v;
                    }
                }
                accumulate(nodes, grads, *b, Matrix::from_raw(1, sums.len(), sums));
            }
            accumulate_ref(nodes, grads, *x, g);
        }
        Op::Col(x, j) => {
            let (r, c) = val(*x).shape();
            let j = *j;
            let d = Matrix::from_fn(r, c, |i, k| if k == j { g.get(i, 0) } else { 0.0 });
            accumulate(nodes, grads, *x, d);
        }
        Op::Concat(parts) => {
            let mut offset = 0;
            for &p in parts {
                let w = val(p).cols();
                if nodes[p].needs_grad {
                    let d = Matrix::from_fn(g.rows(), w, |i, k| g.get(i, offset + k));
                    accumulate(nodes, grads, p, d);
                }
                offset += w;
            }
        }
        Op::SliceRows(x, start) => {
            if nodes[*x].needs_grad {
                let (r, c) = val(*x).shape();
                let acc = grads[*x].get_or_insert_with(|| Matrix::zeros(r, c));
                for (a, v) in acc.as_mut_slice()[start * c..start * c + g.len()]
                    .iter_mut()
                    .zip(g.as_slice())
                {
                    *a += v;
                }
            }
        }
        Op::SumSquares(x) => {
            let s = 2.0 * g.item();
            accumulate(nodes, grads, *x, val(*x).scale(s));
        }
        Op::Sum(x) => {
            let (r, c) = val(*x).shape();
            accumulate(nodes, grads, *x, Matrix::filled(r, c, g.item()));
        }
        Op::Compose {
            order,
            args,
            g: derivs,
            ..
        } => {
            compose_backward(nodes, grads, *order, &args[..=*order], derivs, g);
        }
    }
}

fn compose_backward(
    nodes: &[Node],
    grads: &mut [Option<Matrix>],
    order: usize,
    args: &[usize],
    derivs: &[Matrix],
    upstream: &Matrix,
) {
    match order {
        0 => compose_backward_n::<0>(nodes, grads, args, derivs, upstream),
        1 => compose_backward_n::<1>(nodes, grads, args, derivs, upstream),
        2 => compose_backward_n::<2>(nodes, grads, args, derivs, upstream),
        3 => compose_backward_n::<3>(nodes, grads, args, derivs, upstream),
        4 => compose_backward_n::<4>(nodes, grads, args, derivs, upstream),
        _ => unreachable!("order above {MAX_ORDER}"),
    }
}

// Monomorphised per order so every kernel below is a straight loop over
// equal-length slices.
fn compose_backward_n<const O: usize>(
    nodes: &[Node],
    grads: &mut [Option<Matrix>],
    args: &[usize],
    derivs: &[Matrix],
    upstream: &Matrix,
) {
    let (r, c) = upstream.shape();
    let n = upstream.len();
    let up = &upstream.as_slice()[..n];
    let empty: &[f64] = &[];
    let mut u = [empty; MAX_ORDER + 1];
    for k in 0..=O {
        u[k] = &nodes[args[k]].value.as_slice()[..n];
    }
    let mut g = [empty; MAX_ORDER + 2];
    for (k, m) in derivs.iter().enumerate().take(O + 2) {
        g[k] = &m.as_slice()[..n];
    }
    for i in 0..=O {
        if !nodes[args[i]].needs_grad {
            continue;
        }
        let mut out = vec![0.0; n];
        macro_rules! kern {
            (|$e:ident| $body:expr) => {
                for $e in 0..n {
                    out[$e] = up[$e] * $body;
                }
            };
        }
        match (O, i) {
            (_, i) if i == O && i > 0 => kern!(|e| g[1][e]),
            // Through u⁰ every outer derivative shifts up by one.
            (0, 0) => kern!(|e| g[1][e]),
            (1, 0) => kern!(|e| g[2][e] * u[1][e]),
            (2, 0) => kern!(|e| g[3][e] * u[1][e] * u[1][e] + g[2][e] * u[2][e]),
            (3, 0) => kern!(|e| {
                g[4][e] * u[1][e] * u[1][e] * u[1][e]
                    + 3.0 * g[3][e] * u[1][e] * u[2][e]
                    + g[2][e] * u[3][e]
            }),
            (4, 0) => kern!(|e| {
                let u1s = u[1][e] * u[1][e];
                g[5][e] * u1s * u1s
                    + 6.0 * g[4][e] * u1s * u[2][e]
                    + g[3][e] * (4.0 * u[1][e] * u[3][e] + 3.0 * u[2][e] * u[2][e])
                    + g[2][e] * u[4][e]
            }),
            (2, 1) => kern!(|e| 2.0 * g[2][e] * u[1][e]),
            (3, 1) => kern!(|e| 3.0 * g[3][e] * u[1][e] * u[1][e] + 3.0 * g[2][e] * u[2][e]),
            (3, 2) => kern!(|e| 3.0 * g[2][e] * u[1][e]),
            (4, 1) => kern!(|e| {
                4.0 * g[4][e] * u[1][e] * u[1][e] * u[1][e]
                    + 12.0 * g[3][e] * u[1][e] * u[2][e]
                    + 4.0 * g[2][e] * u[3][e]
            }),
            (4, 2) => kern!(|e| 6.0 * g[3][e] * u[1][e] * u[1][e] + 6.0 * g[2][e] * u[2][e]),
            (4, 3) => kern!(|e| 4.0 * g[2][e] * u[1][e]),
            _ => unreachable!("no partial for order {O}, argument {i}"),
        }
        accumulate(nodes, grads, args[i], Matrix::from_raw(r, c, out));
    }
}

/// Result of a backward sweep; holds gradients of leaves only.
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient with respect to `v`, zeros if nothing flowed into it.
    pub fn wrt(&self, v: Var<'_>) -> Matrix {
        match &self.grads[v.idx] {
            Some(g) => g.clone(),
            None => v.value().zeros_like(),
        }
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Ref<'t, Matrix> {
        Ref::map(self.tape.nodes.borrow(), |n| &n[self.idx].value)
    }

    pub fn item(&self) -> f64 {
        self.value().item()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value().shape()
    }

    pub fn sum_squares(&self) -> Var<'t> {
        self.tape.unary(self.idx, Op::SumSquares(self.idx), |m| {
            Matrix::scalar(m.sum_squares())
        })
    }

    pub fn sum(&self) -> Var<'t> {
        self.tape.unary(self.idx, Op::Sum(self.idx), |m| {
            Matrix::scalar(m.as_slice().iter().sum())
        })
    }

    fn same_tape(&self, other: &Var<'t>) {
        assert!(
            std::ptr::eq(self.tape, other.tape),
            "variables from different tapes"
        );
    }
}

fn same_shape(a: &Matrix, b: &Matrix, what: &str) {
    assert_eq!(a.shape(), b.shape(), "{what}: shape mismatch");
}

macro_rules! var_binop {
    ($trait:ident, $method:ident, $variant:ident, $op:tt) => {
        impl<'t> $trait for Var<'t> {
            type Output = Var<'t>;
            fn $method(self, rhs: Var<'t>) -> Var<'t> {
                self.same_tape(&rhs);
                self.tape.binary(self.idx, rhs.idx, Op::$variant(self.idx, rhs.idx), |a, b| {
                    same_shape(a, b, stringify!($method));
                    a $op b
                })
            }
        }
    };
}

var_binop!(Add, add, Add, +);
var_binop!(Sub, sub, Sub, -);
var_binop!(Mul, mul, Mul, *);
var_binop!(Div, div, Div, /);

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.tape.unary(self.idx, Op::Neg(self.idx), |m| -m)
    }
}

impl Real for Var<'_> {
    fn scale(&self, c: f64) -> Self {
        self.tape
            .unary(self.idx, Op::Scale(self.idx, c), |m| m.scale(c))
    }
    fn add_scalar(&self, c: f64) -> Self {
        self.tape
            .unary(self.idx, Op::AddScalar(self.idx), |m| m.add_scalar(c))
    }
    fn tanh(&self) -> Self {
        Self::compose(Elementary::Tanh, &[*self])[0]
    }
    fn sin(&self) -> Self {
        Self::compose(Elementary::Sin, &[*self])[0]
    }
    fn cos(&self) -> Self {
        Self::compose(Elementary::Cos, &[*self])[0]
    }
    fn exp(&self) -> Self {
        Self::compose(Elementary::Exp, &[*self])[0]
    }
    fn powi(&self, n: i32) -> Self {
        self.tape
            .unary(self.idx, Op::Powi(self.idx, n), |m| m.powi(n))
    }
    fn zeros_like(&self) -> Self {
        let z = self.value().zeros_like();
        self.tape.constant(z)
    }
    fn any_zero(&self) -> bool {
        self.value().any_zero()
    }

    /// One fused node per output order; the backward pass evaluates the
    /// closed-form partials of each order instead of unrolling the chain rule
    /// through dozens of elementwise nodes.
    fn compose(kind: Elementary, u: &[Self]) -> Vec<Self> {
        let order = u.len() - 1;
        assert!(
            order <= MAX_ORDER,
            "derivative order {order} exceeds {MAX_ORDER}"
        );
        let tape = u[0].tape;
        let mut args = [0usize; MAX_ORDER + 1];
        for (slot, v) in args.iter_mut().zip(u) {
            u[0].same_tape(v);
            *slot = v.idx;
        }
        let (derivs, values) = {
            let nodes = tape.nodes.borrow();
            let vals: Vec<&Matrix> = u.iter().map(|v| &nodes[v.idx].value).collect();
            let (derivs, values) = compose_matrices(kind, &vals, 1);
            (Rc::new(derivs), values)
        };
        values
            .into_iter()
            .enumerate()
            .map(|(j, value)| {
                let needs = tape.needs(&args[..=j]);
                tape.push(
                    Op::Compose {
                        kind,
                        order: j,
                        args,
                        g: Rc::clone(&derivs),
                    },
                    value,
                    needs,
                )
            })
            .collect()
    }
}

impl<'t> Tensor for Var<'t> {
    type Weight = Var<'t>;

    fn nrows(&self) -> usize {
        self.value().rows()
    }
    fn ncols(&self) -> usize {
        self.value().cols()
    }
    fn linear(&self, w: &Var<'t>) -> Self {
        self.same_tape(w);
        self.tape
            .binary(self.idx, w.idx, Op::Linear(self.idx, w.idx), |x, w| {
                x.matmul_nt(w)
            })
    }
    fn add_bias(&self, b: &Var<'t>) -> Self {
        self.same_tape(b);
        self.tape
            .binary(self.idx, b.idx, Op::AddBias(self.idx, b.idx), |x, b| {
                x.add_bias(b)
            })
    }
    fn col(&self, j: usize) -> Self {
        self.tape
            .unary(self.idx, Op::Col(self.idx, j), |m| m.column(j))
    }
    fn concat_cols(parts: &[Self]) -> Self {
        let tape = parts[0].tape;
        let idx: Vec<usize> = parts.iter().map(|p| p.idx).collect();
        let value = {
            let nodes = tape.nodes.borrow();
            let refs: Vec<&Matrix> = idx.iter().map(|&i| &nodes[i].value).collect();
            Matrix::hstack(&refs)
        };
        let needs = tape.needs(&idx);
        tape.push(Op::Concat(idx), value, needs)
    }
    fn slice_rows(&self, start: usize, count: usize) -> Self {
        self.tape
            .unary(self.idx, Op::SliceRows(self.idx, start), |m| {
                m.slice_rows(start, count)
            })
    }
}

/// Value and gradient of a scalar function of several parameter tensors.
///
/// `f` receives the parameters as tape leaves and returns a 1×1 variable.
/// Non-finite values in the forward or backward sweep are reported with the
/// name of the operation that produced them.
pub fn grad<F>(params: &[Matrix], f: F) -> Result<(f64, Vec<Matrix>)>
where
    F: for<'t> FnOnce(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&tape, &vars);
    let value = out.item();
    if !value.is_finite() {
        return Err(Error::non_finite(
            tape.first_non_finite().unwrap_or_else(|| "output".into()),
        ));
    }
    let grads = tape.backward(out);
    let g: Vec<Matrix> = vars.iter().map(|&v| grads.wrt(v)).collect();
    if g.iter().any(|m| !m.is_finite()) {
        let (_, culprit) = tape.backward_diagnose(out);
        return Err(Error::non_finite(
            culprit.unwrap_or_else(|| "backward".into()),
        ));
    }
    Ok((value, g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{elementary_derivs, faa_di_bruno};

    fn col(values: &[f64]) -> Matrix {
        Matrix::from_raw(values.len(), 1, values.to_vec())
    }

    #[test]
    fn half_squared_norm() {
        let (v, g) = grad(&[col(&[1.0, -2.0, 3.0])], |_, p| {
            p[0].sum_squares().scale(0.5)
        })
        .unwrap();
        assert_eq!(v, 7.0);
        assert_eq!(g[0].as_slice(), &[1.0, -2.0, 3.0]);
    }

    #[test]
    fn product_plus_sine() {
        let params = [Matrix::scalar(0.0), Matrix::scalar(5.0)];
        let (_, g) = grad(&params, |_, p| p[0] * p[1] + p[0].sin()).unwrap();
        assert_eq!((g[0].item(), g[1].item()), (6.0, 0.0));
    }

    #[test]
    fn non_finite_is_attributed() {
        let err = grad(&[Matrix::scalar(0.0)], |t, p| {
            t.constant(Matrix::scalar(1.0)) / p[0]
        })
        .unwrap_err();
        assert!(
            matches!(err, Error::NonFinite { ref op } if op == "div"),
            "{err}"
        );
    }

    #[test]
    fn non_finite_gradient_is_attributed() {
        // Finite forward value 1e8, but d/dx (c/x) = -c/x² overflows.
        let (v, g) = {
            let tape = Tape::new();
            let x = tape.param(Matrix::scalar(1e-301));
            let y = tape.constant(Matrix::scalar(1e-293)) / x;
            let v = y.item();
            let (grads, culprit) = tape.backward_diagnose(y);
            assert_eq!(culprit.as_deref(), Some("div"));
            (v, grads.wrt(x))
        };
        assert!(v.is_finite() && !g.is_finite());
        let err = grad(&[Matrix::scalar(1e-301)], |t, p| {
            t.constant(Matrix::scalar(1e-293)) / p[0]
        })
        .unwrap_err();
        assert!(
            matches!(err, Error::NonFinite { ref op } if op == "div"),
            "{err}"
        );
    }

    #[test]
    fn fused_compose_matches_unrolled_chain_rule() {
        // d⁴/ds⁴ tanh(u(s)) with u given through its raw derivatives; the
        // fused nodes and the generic arithmetic expansion must agree in
        // value and in gradient with respect to every uᵢ.
        let u0 = [0.3, -0.2, 1.1, 0.4, -0.7];
        for kind in [
            Elementary::Tanh,
            Elementary::Sin,
            Elementary::Cos,
            Elementary::Exp,
        ] {
            for order in 0..=4 {
                let params: Vec<Matrix> = u0[..=order].iter().map(|&v| Matrix::scalar(v)).collect();
                let (fv, fg) = grad(&params, |_, p| Var::compose(kind, p)[order]).unwrap();
                let (uv, ug) = grad(&params, |_, p| {
                    let g = elementary_derivs(kind, &p[0], order);
                    faa_di_bruno(&g, p)[order]
                })
                .unwrap();
                assert!((fv - uv).abs() < 1e-14);
                for (a, b) in fg.iter().zip(&ug) {
                    assert!(
                        (a.item() - b.item()).abs() < 1e-12,
                        "{kind:?} order {order}"
                    );
                }
            }
        }
    }
}
