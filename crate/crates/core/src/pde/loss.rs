use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{derivatives, Field, Network, Problem, Samples};
use crate::autodiff::{Real, Tape, Tensor, Var};
use crate::mathcore::Matrix;
use crate::network::{MlpSpec, ParamSet};
use crate::{Error, Result};

/// Loss components: mean squared residual, boundary misfit and initial
/// misfit, and their weighted sum.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub f: f64,
    pub b: f64,
    pub i: f64,
}

impl LossParts {
    fn add(&mut self, o: &LossParts) {
        self.f += o.f;
        self.b += o.b;
        self.i += o.i;
    }

    fn weighted(mut self, p: &Problem) -> Self {
        let w = p.weights;
        self.total = w.f * self.f + w.b * self.b + w.i * self.i;
        self
    }
}

fn d_shard() -> usize {
    256
}
fn d_parallel() -> bool {
    true
}

/// How the collocation set is split for the tape. Shards are summed in a
/// fixed order, so the thread count never changes the result.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossOptions {
    #[serde(default = "d_shard")]
    pub shard_rows: usize,
    #[serde(default = "d_parallel")]
    pub parallel: bool,
}

impl Default for LossOptions {
    fn default() -> Self {
        Self {
            shard_rows: d_shard(),
            parallel: d_parallel(),
        }
    }
}

/// Scalar reductions the loss needs beyond [`Tensor`].
trait Reduce: Tensor {
    fn sum_sq(&self) -> Self;
    fn value_of(&self) -> f64;
}

impl Reduce for Matrix {
    fn sum_sq(&self) -> Self {
        Matrix::scalar(self.sum_squares())
    }
    fn value_of(&self) -> f64 {
        self.item()
    }
}

impl Reduce for Var<'_> {
    fn sum_sq(&self) -> Self {
        self.sum_squares()
    }
    fn value_of(&self) -> f64 {
        self.item()
    }
}

fn check_sets(p: &Problem, s: &Samples) -> Result<()> {
    let w = p.weights;
    let empty = |name: &str| {
        Err(Error::Config(format!(
            "{name} point set is empty but its weight is positive"
        )))
    };
    if w.f > 0.0 && s.interior.rows() == 0 {
        return empty("interior");
    }
    if w.b > 0.0 && !p.periodic() && s.boundary.rows() == 0 {
        return empty("boundary");
    }
    if w.i > 0.0 && s.initial.rows() == 0 {
        return empty("initial");
    }
    if s.boundary_target.rows() != s.boundary.rows() || s.initial_target.rows() != s.initial.rows()
    {
        return Err(Error::Dimension(
            "data targets do not match their point sets".into(),
        ));
    }
    Ok(())
}

/// Unweighted components for `rows` of the interior set; the data terms are
/// included when `data` is set. Each is already divided by its set size.
fn terms<W, T, F, L>(
    p: &Problem,
    field: &F,
    s: &Samples,
    rows: Range<usize>,
    data: bool,
    lift: &L,
) -> Result<[Option<T>; 3]>
where
    T: Reduce<Weight = W>,
    F: Field<W>,
    L: Fn(Matrix) -> T,
{
    let w = p.weights;
    let mut out: [Option<T>; 3] = [None, None, None];
    if w.f > 0.0 && !rows.is_empty() {
        let x = s.interior.slice_rows(rows.start, rows.len());
        let d = derivatives(field, &x, &p.needs(), lift)?;
        let mut acc: Option<T> = None;
        for r in p.residual(&d, &x, lift) {
            let sq = r.sum_sq();
            acc = Some(match acc {
                Some(a) => a + sq,
                None => sq,
            });
        }
        out[0] = acc.map(|a| a.scale(1.0 / s.interior.rows() as f64));
    }
    if data {
        let misfit = |x: &Matrix, target: &Matrix| -> Result<T> {
            let pred = field.eval(&lift(x.clone()))?;
            Ok((pred - lift(target.clone()))
                .sum_sq()
                .scale(1.0 / x.rows() as f64))
        };
        if w.b > 0.0 && s.boundary.rows() > 0 {
            out[1] = Some(misfit(&s.boundary, &s.boundary_target)?);
        }
        if w.i > 0.0 && s.initial.rows() > 0 {
            out[2] = Some(misfit(&s.initial, &s.initial_target)?);
        }
    }
    Ok(out)
}

fn parts_of<T: Reduce>(t: &[Option<T>; 3]) -> LossParts {
    let v = |o: &Option<T>| o.as_ref().map_or(0.0, |t| t.value_of());
    LossParts {
        total: 0.0,
        f: v(&t[0]),
        b: v(&t[1]),
        i: v(&t[2]),
    }
}

/// Loss of an arbitrary field, evaluated without a tape.
pub fn pinn_loss_field<F: Field<Matrix>>(field: &F, p: &Problem, s: &Samples) -> Result<LossParts> {
    check_sets(p, s)?;
    let t = terms(p, field, s, 0..s.interior.rows(), true, &|m| m)?;
    Ok(parts_of(&t).weighted(p))
}

/// Loss of the network at `params`. Non-finite values are returned, not
/// reported as errors.
pub fn pinn_loss(spec: &MlpSpec, params: &ParamSet, p: &Problem, s: &Samples) -> Result<LossParts> {
    pinn_loss_field(
        &Network {
            spec,
            weights: params.tensors(),
        },
        p,
        s,
    )
}

/// Loss and its gradient with respect to every parameter tensor.
pub fn pinn_loss_grad(
    spec: &MlpSpec,
    params: &ParamSet,
    p: &Problem,
    s: &Samples,
    opts: &LossOptions,
) -> Result<(LossParts, ParamSet)> {
    check_sets(p, s)?;
    let n = s.interior.rows();
    let step = opts.shard_rows.max(1);
    let mut shards: Vec<Range<usize>> =
        (0..n).step_by(step).map(|a| a..(a + step).min(n)).collect();
    if shards.is_empty() || p.weights.f == 0.0 {
        shards = vec![0..0];
    }
    let weights = [p.weights.f, p.weights.b, p.weights.i];
    let run = |k: usize, rows: &Range<usize>| -> Result<(LossParts, Vec<Matrix>)> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = params
            .tensors()
            .iter()
            .map(|m| tape.param(m.clone()))
            .collect();
        let net = Network {
            spec,
            weights: &vars,
        };
        let lift = |m: Matrix| tape.constant(m);
        let t = terms(p, &net, s, rows.clone(), k == 0, &lift)?;
        let mut root: Option<Var<'_>> = None;
        for (term, w) in t.iter().zip(weights) {
            if let Some(term) = term {
                let wt = term.scale(w);
                root = Some(match root {
                    Some(r) => r + wt,
                    None => wt,
                });
            }
        }
        let Some(root) = root else {
            return Ok((LossParts::default(), params.zeros_like().tensors().to_vec()));
        };
        if !root.item().is_finite() {
            return Err(Error::non_finite(
                tape.first_non_finite().unwrap_or_else(|| "loss".into()),
            ));
        }
        let grads = tape.backward(root);
        let g: Vec<Matrix> = vars.iter().map(|&v| grads.wrt(v)).collect();
        if g.iter().any(|m| !m.is_finite()) {
            let (_, culprit) = tape.backward_diagnose(root);
            return Err(Error::non_finite(
                culprit.unwrap_or_else(|| "loss gradient".into()),
            ));
        }
        Ok((parts_of(&t), g))
    };
    let results: Vec<Result<(LossParts, Vec<Matrix>)>> = if opts.parallel && shards.len() > 1 {
        shards
            .par_iter()
            .enumerate()
            .map(|(k, r)| run(k, r))
            .collect()
    } else {
        shards.iter().enumerate().map(|(k, r)| run(k, r)).collect()
    };
    let mut parts = LossParts::default();
    let mut grad = params.zeros_like();
    for r in results {
        let (pp, g) = r?;
        parts.add(&pp);
        for (acc, gi) in grad.tensors_mut().iter_mut().zip(&g) {
            acc.add_in_place(gi);
        }
    }
    Ok((parts.weighted(p), grad))
}

fn check_pair(pred: &[f64], exact: &[f64]) -> Result<()> {
    if pred.len() != exact.len() || pred.is_empty() {
        return Err(Error::Dimension(format!(
            "prediction has {} values, reference has {}",
            pred.len(),
            exact.len()
        )));
    }
    Ok(())
}

/// `‖pred − exact‖₂ / ‖exact‖₂`.
pub fn relative_l2(pred: &[f64], exact: &[f64]) -> Result<f64> {
    check_pair(pred, exact)?;
    let den: f64 = exact.iter().map(|e| e * e).sum::<f64>().sqrt();
    if den == 0.0 {
        return Err(Error::DivisionByZero(
            "relative L2 against a zero reference".into(),
        ));
    }
    let num: f64 = pred
        .iter()
        .zip(exact)
        .map(|(p, e)| (p - e) * (p - e))
        .sum::<f64>()
        .sqrt();
    Ok(num / den)
}

/// `max |pred − exact|`.
pub fn linf(pred: &[f64], exact: &[f64]) -> Result<f64> {
    check_pair(pred, exact)?;
    Ok(pred
        .iter()
        .zip(exact)
        .fold(0.0, |m, (p, e)| m.max((p - e).abs())))
}
