//! Benchmark problems, collocation sampling, the composite PINN loss and
//! error metrics.
//!
//! Inputs are laid out as spatial coordinates followed by time. A residual
//! operator sees the network output and its derivatives through [`Derivs`],
//! which is produced by pushing jets through any [`Field`].

mod derivs;
mod loss;
mod reference;
mod sampling;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

pub use derivs::{derivatives, Derivs, Needs};
pub use loss::{
    linf, pinn_loss, pinn_loss_field, pinn_loss_grad, relative_l2, LossOptions, LossParts,
};
pub use reference::{mol_reference, Reference};
pub use sampling::{sample_domain, test_set, write_points_csv, SamplePlan, Samples, TestSet};

use crate::autodiff::Tensor;
use crate::mathcore::Matrix;
use crate::network::{forward, EmbeddedAxis, FourierEmbedding, MlpSpec};
use crate::{Error, Result};

pub const GS_EPS1: f64 = 1.0;
pub const GS_EPS2: f64 = 0.01;
pub const GS_B: f64 = 0.02;
pub const GS_K: f64 = 0.0562;
pub const BZ_EPS1: f64 = 1e-5;
pub const BZ_EPS2: f64 = 2e-5;
pub const KS_LAMBDA: f64 = 0.01;
pub const BURGERS_NU: f64 = 0.01 / PI;

/// Something that maps a batch of inputs to outputs, generic over the value
/// type so it can be pushed through jets and tapes.
pub trait Field<W> {
    fn eval<T: Tensor<Weight = W>>(&self, x: &T) -> Result<T>;
}

/// The network as a field.
pub struct Network<'a, W> {
    pub spec: &'a MlpSpec,
    pub weights: &'a [W],
}

impl<W: Clone> Field<W> for Network<'_, W> {
    fn eval<T: Tensor<Weight = W>>(&self, x: &T) -> Result<T> {
        forward(self.spec, self.weights, x)
    }
}

/// Closed-form exact solutions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Analytic {
    /// `cos(mean x) e^{−t}` in `dim` spatial dimensions.
    Heat { dim: usize },
    /// The decaying cellular pair for 2D KS.
    Ks,
}

impl<W> Field<W> for Analytic {
    fn eval<T: Tensor<Weight = W>>(&self, x: &T) -> Result<T> {
        match *self {
            Analytic::Heat { dim } => {
                let mut s = x.col(0);
                for i in 1..dim {
                    s = s + x.col(i);
                }
                Ok(s.scale(1.0 / dim as f64).cos() * x.col(dim).scale(-1.0).exp())
            }
            Analytic::Ks => {
                let (px, py) = (x.col(0).scale(PI), x.col(1).scale(PI));
                let e = x.col(2).scale(-PI * PI * KS_LAMBDA / 4.0).exp();
                let u = -(px.cos() * py.sin() * e.clone());
                let v = px.sin() * py.cos() * e;
                Ok(T::concat_cols(&[u, v]))
            }
        }
    }
}

impl Analytic {
    pub fn values(&self, x: &Matrix) -> Matrix {
        Field::<Matrix>::eval(self, x).expect("analytic fields do not fail")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemId {
    Heat,
    GrayScott,
    Bz,
    Ks,
    Burgers,
}

/// λ_F, λ_B, λ_I.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub f: f64,
    pub b: f64,
    pub i: f64,
}

/// User-facing problem selection; omitted fields take the benchmark
/// defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub id: ProblemId,
    /// Spatial dimension (heat only).
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub t_end: Option<f64>,
    #[serde(default)]
    pub weights: Option<LossWeights>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Problem {
    pub id: ProblemId,
    /// Spatial dimension.
    pub dim: usize,
    /// Spatial box, one interval per axis.
    pub bounds: Vec<(f64, f64)>,
    pub t_range: (f64, f64),
    pub weights: LossWeights,
}

impl Problem {
    pub fn new(id: ProblemId) -> Self {
        let w = |f, b, i| LossWeights { f, b, i };
        match id {
            ProblemId::Heat => Self::heat(10),
            ProblemId::GrayScott => Self {
                id,
                dim: 1,
                bounds: vec![(-50.0, 50.0)],
                t_range: (0.0, 20.0),
                weights: w(1.0, 0.0, 100.0),
            },
            ProblemId::Bz => Self {
                id,
                dim: 1,
                bounds: vec![(-1.0, 1.0)],
                t_range: (0.0, 3.0),
                weights: w(1.0, 0.0, 100.0),
            },
            ProblemId::Ks => Self {
                id,
                dim: 2,
                bounds: vec![(0.0, 2.0); 2],
                t_range: (0.0, 1.0),
                weights: w(1.0, 20.0, 20.0),
            },
            ProblemId::Burgers => Self {
                id,
                dim: 1,
                bounds: vec![(-1.0, 1.0)],
                t_range: (0.0, 1.0),
                weights: w(1.0, 1.0, 1.0),
            },
        }
    }

    pub fn heat(dim: usize) -> Self {
        Self {
            id: ProblemId::Heat,
            dim,
            bounds: vec![(-1.0, 1.0); dim],
            t_range: (0.0, 1.0),
            weights: LossWeights {
                f: 1.0,
                b: 10.0,
                i: 10.0,
            },
        }
    }

    pub fn from_config(cfg: &ProblemConfig) -> Result<Self> {
        let mut p = match (cfg.id, cfg.dim) {
            (ProblemId::Heat, Some(d)) => {
                if d == 0 {
                    return Err(Error::Config("heat dimension must be >= 1".into()));
                }
                Self::heat(d)
            }
            (ProblemId::Heat, None) => Self::heat(10),
            (id, Some(d)) if d != Self::new(id).dim => {
                return Err(Error::Config(format!(
                    "{id:?} has a fixed spatial dimension"
                )))
            }
            (id, _) => Self::new(id),
        };
        if let Some(t) = cfg.t_end {
            if !(t > p.t_range.0) {
                return Err(Error::Config(format!("t_end must exceed {}", p.t_range.0)));
            }
            p.t_range.1 = t;
        }
        if let Some(w) = cfg.weights {
            if [w.f, w.b, w.i].iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::Config("loss weights must be >= 0".into()));
            }
            p.weights = w;
        }
        if p.periodic() {
            p.weights.b = 0.0;
        }
        Ok(p)
    }

    pub fn name(&self) -> String {
        match self.id {
            ProblemId::Heat => format!("heat{}d", self.dim),
            ProblemId::GrayScott => "gray-scott".into(),
            ProblemId::Bz => "bz".into(),
            ProblemId::Ks => "ks2d".into(),
            ProblemId::Burgers => "burgers".into(),
        }
    }

    /// Spatial axes plus time.
    pub fn input_dim(&self) -> usize {
        self.dim + 1
    }

    pub fn output_names(&self) -> &'static [&'static str] {
        match self.id {
            ProblemId::Heat | ProblemId::Burgers => &["u"],
            ProblemId::GrayScott | ProblemId::Ks => &["u", "v"],
            ProblemId::Bz => &["u", "v", "w"],
        }
    }

    pub fn n_outputs(&self) -> usize {
        self.output_names().len()
    }

    /// Periodic in space, enforced by the Fourier embedding rather than a
    /// boundary loss.
    pub fn periodic(&self) -> bool {
        matches!(self.id, ProblemId::GrayScott | ProblemId::Bz)
    }

    /// The hard periodic constraint for this problem, if any.
    pub fn embedding(&self, modes: usize) -> Option<FourierEmbedding> {
        self.periodic().then(|| FourierEmbedding {
            modes,
            axes: vec![EmbeddedAxis {
                axis: 0,
                period: self.bounds[0].1 - self.bounds[0].0,
            }],
        })
    }

    pub fn mlp_spec(&self, hidden_width: usize, hidden_depth: usize, modes: usize) -> MlpSpec {
        let spec = MlpSpec::new(
            self.input_dim(),
            hidden_width,
            hidden_depth,
            self.n_outputs(),
        );
        match self.embedding(modes) {
            Some(e) => spec.with_embedding(e),
            None => spec,
        }
    }

    /// The same problem restricted to `[t0, t1]`.
    pub fn window(&self, t0: f64, t1: f64) -> Self {
        Self {
            t_range: (t0, t1),
            ..self.clone()
        }
    }

    pub fn exact(&self) -> Option<Analytic> {
        match self.id {
            ProblemId::Heat => Some(Analytic::Heat { dim: self.dim }),
            ProblemId::Ks => Some(Analytic::Ks),
            _ => None,
        }
    }

    pub fn needs(&self) -> Needs {
        let t = self.dim;
        match self.id {
            ProblemId::Heat => {
                let mut axes: Vec<_> = (0..self.dim).map(|i| (i, 2)).collect();
                axes.push((t, 1));
                Needs { axes, mixed: None }
            }
            ProblemId::GrayScott | ProblemId::Bz | ProblemId::Burgers => Needs {
                axes: vec![(0, 2), (t, 1)],
                mixed: None,
            },
            ProblemId::Ks => Needs {
                axes: vec![(0, 4), (1, 4), (t, 1)],
                mixed: Some((0, 1)),
            },
        }
    }

    /// Initial values at the spatial part of `x` (rows are points).
    pub fn initial_values(&self, x: &Matrix) -> Matrix {
        if let Some(exact) = self.exact() {
            let mut at0 = x.clone();
            for r in 0..at0.rows() {
                at0.set(r, self.dim, 0.0);
            }
            return exact.values(&at0);
        }
        let n = x.rows();
        Matrix::from_fn(n, self.n_outputs(), |r, c| {
            let xi = x.get(r, 0);
            match self.id {
                ProblemId::GrayScott => {
                    let s4 = (PI * (xi - 50.0) / 100.0).sin().powi(4);
                    if c == 0 {
                        1.0 - s4 / 2.0
                    } else {
                        s4 / 4.0
                    }
                }
                ProblemId::Bz => {
                    let centre = [-0.5, 0.0, 0.5][c];
                    (-100.0 * (xi - centre) * (xi - centre)).exp()
                }
                ProblemId::Burgers => -(PI * xi).sin(),
                ProblemId::Heat | ProblemId::Ks => unreachable!(),
            }
        })
    }

    /// Dirichlet data on the spatial boundary, `None` when periodic.
    pub fn boundary_values(&self, x: &Matrix) -> Option<Matrix> {
        match self.id {
            ProblemId::Heat | ProblemId::Ks => Some(self.exact().expect("exact").values(x)),
            ProblemId::Burgers => Some(Matrix::zeros(x.rows(), 1)),
            ProblemId::GrayScott | ProblemId::Bz => None,
        }
    }

    /// Manufactured source terms, one column per equation.
    pub fn source(&self, x: &Matrix) -> Option<Matrix> {
        match self.id {
            ProblemId::Heat => {
                let u = Analytic::Heat { dim: self.dim }.values(x);
                Some(u.scaled(1.0 / self.dim as f64 - 1.0))
            }
            ProblemId::Ks => {
                let uv = Analytic::Ks.values(x);
                let lam = KS_LAMBDA;
                let linear = -PI * PI * lam / 4.0 - 2.0 * PI * PI * lam + 4.0 * PI.powi(4);
                Some(Matrix::from_fn(x.rows(), 2, |r, c| {
                    let e = (-PI * PI * lam * x.get(r, 2) / 4.0).exp();
                    let z = PI * x.get(r, c);
                    uv.get(r, c) * linear - PI * z.sin() * z.cos() * e * e
                }))
            }
            _ => None,
        }
    }

    /// Residual of each equation, as one column per equation.
    pub fn residual<T: Tensor>(
        &self,
        d: &Derivs<T>,
        x: &Matrix,
        lift: &impl Fn(Matrix) -> T,
    ) -> Vec<T> {
        let t = self.dim;
        let comp = |m: &T, j: usize| {
            if self.n_outputs() == 1 {
                m.clone()
            } else {
                m.col(j)
            }
        };
        match self.id {
            ProblemId::Heat => {
                let mut r = d.d(t, 1).clone();
                for i in 0..self.dim {
                    r = r - d.d(i, 2).clone();
                }
                vec![r - lift(self.source(x).expect("heat source"))]
            }
            ProblemId::GrayScott => {
                let (u, v) = (comp(d.value(), 0), comp(d.value(), 1));
                let uv2 = u.clone() * v.clone() * v.clone();
                let ru = comp(d.d(t, 1), 0) - comp(d.d(0, 2), 0).scale(GS_EPS1)
                    + u.scale(GS_B).add_scalar(-GS_B)
                    + uv2.clone();
                let rv = comp(d.d(t, 1), 1) - comp(d.d(0, 2), 1).scale(GS_EPS2)
                    + v.scale(GS_B + GS_K)
                    + uv2;
                vec![ru, rv]
            }
            ProblemId::Bz => {
                let (u, v, w) = (comp(d.value(), 0), comp(d.value(), 1), comp(d.value(), 2));
                let uv = u.clone() * v.clone();
                let ru =
                    comp(d.d(t, 1), 0) - comp(d.d(0, 2), 0).scale(BZ_EPS1) + u.clone() + v.clone()
                        - uv.clone()
                        - u.clone() * u.clone();
                let rv =
                    comp(d.d(t, 1), 1) - comp(d.d(0, 2), 1).scale(BZ_EPS2) + w.clone() - v - uv;
                let rw = comp(d.d(t, 1), 2) - comp(d.d(0, 2), 2).scale(BZ_EPS1) + u - w;
                vec![ru, rv, rw]
            }
            ProblemId::Ks => {
                let f = self.source(x).expect("ks source");
                let (u, v) = (comp(d.value(), 0), comp(d.value(), 1));
                let mixed = d.mixed();
                (0..2)
                    .map(|j| {
                        let c = |axis, order| comp(d.d(axis, order), j);
                        c(t, 1)
                            + u.clone() * c(0, 1)
                            + v.clone() * c(1, 1)
                            + (c(0, 2) + c(1, 2)).scale(KS_LAMBDA)
                            + c(0, 4)
                            + comp(mixed, j).scale(2.0)
                            + c(1, 4)
                            - lift(f.column(j))
                    })
                    .collect()
            }
            ProblemId::Burgers => {
                let u = d.value().clone();
                vec![d.d(t, 1).clone() + u * d.d(0, 1).clone() - d.d(0, 2).scale(BURGERS_NU)]
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mathcore::Rng;

    fn random_points(p: &Problem, n: usize, seed: u64) -> Matrix {
        let mut rng = Rng::new(seed);
        Matrix::from_fn(n, p.input_dim(), |_, c| {
            let (lo, hi) = if c < p.dim { p.bounds[c] } else { p.t_range };
            rng.uniform(lo, hi)
        })
    }

    fn exact_residual_max(p: &Problem, n: usize) -> f64 {
        let x = random_points(p, n, 3);
        let exact = p.exact().unwrap();
        let lift = |m: Matrix| m;
        let d = derivatives(&exact, &x, &p.needs(), &lift).unwrap();
        p.residual(&d, &x, &lift)
            .iter()
            .fold(0.0, |m, r| m.max(r.max_abs()))
    }

    #[test]
    fn exact_solutions_have_zero_residual() {
        for p in [
            Problem::heat(2),
            Problem::heat(10),
            Problem::new(ProblemId::Ks),
        ] {
            let r = exact_residual_max(&p, 256);
            assert!(r <= 1e-8, "{}: residual {r}", p.name());
        }
    }

    #[test]
    fn point_values_from_the_closed_forms() {
        let heat = Analytic::Heat { dim: 10 }.values(&Matrix::zeros(1, 11));
        assert_eq!(heat.item(), 1.0);
        let ks = Analytic::Ks.values(&Matrix::from_rows(&[&[0.5, 0.5, 0.0]]).unwrap());
        assert!(ks.get(0, 0).abs() < 1e-16);
    }

    #[test]
    fn homogeneous_steady_states() {
        // Gray–Scott (1, 0) and BZ (0, 0, 0) are fixed points.
        struct Const(Vec<f64>);
        impl<W> Field<W> for Const {
            fn eval<T: Tensor<Weight = W>>(&self, x: &T) -> Result<T> {
                let z = x.col(0).scale(0.0);
                Ok(T::concat_cols(
                    &self.0.iter().map(|&c| z.add_scalar(c)).collect::<Vec<_>>(),
                ))
            }
        }
        for (id, c) in [
            (ProblemId::GrayScott, vec![1.0, 0.0]),
            (ProblemId::Bz, vec![0.0; 3]),
        ] {
            let p = Problem::new(id);
            let x = random_points(&p, 8, 1);
            let lift = |m: Matrix| m;
            let d = derivatives(&Const(c), &x, &p.needs(), &lift).unwrap();
            for r in p.residual(&d, &x, &lift) {
                assert_eq!(r.max_abs(), 0.0);
            }
        }
    }

    #[test]
    fn periodic_problems_drop_the_boundary_weight() {
        let cfg = ProblemConfig {
            id: ProblemId::GrayScott,
            dim: None,
            t_end: Some(2.0),
            weights: Some(LossWeights {
                f: 1.0,
                b: 5.0,
                i: 100.0,
            }),
        };
        let p = Problem::from_config(&cfg).unwrap();
        assert_eq!(p.weights.b, 0.0);
        assert_eq!(p.t_range, (0.0, 2.0));
        assert!(p.embedding(10).is_some());
        let bad = ProblemConfig {
            dim: Some(3),
            ..cfg
        };
        assert!(Problem::from_config(&bad).is_err());
    }

    #[test]
    fn initial_conditions_match_their_formulas() {
        let p = Problem::new(ProblemId::GrayScott);
        let x = Matrix::from_rows(&[&[0.0, 0.0]]).unwrap();
        let v = p.initial_values(&x);
        // sin(−π/2)⁴ = 1
        assert!((v.get(0, 0) - 0.5).abs() < 1e-15 && (v.get(0, 1) - 0.25).abs() < 1e-15);
        let b =
            Problem::new(ProblemId::Bz).initial_values(&Matrix::from_rows(&[&[0.0, 0.0]]).unwrap());
        assert_eq!(b.get(0, 1), 1.0);
        let u = Problem::new(ProblemId::Burgers)
            .initial_values(&Matrix::from_rows(&[&[0.5, 0.0]]).unwrap());
        assert_eq!(u.item(), -1.0);
    }

    #[test]
    fn order_above_four_is_rejected() {
        let needs = Needs {
            axes: vec![(0, 5)],
            mixed: None,
        };
        let lift = |m: Matrix| m;
        let err = derivatives(
            &Analytic::Heat { dim: 1 },
            &Matrix::zeros(2, 2),
            &needs,
            &lift,
        );
        assert!(matches!(err, Err(Error::UnsupportedOrder(_))));
    }
}
