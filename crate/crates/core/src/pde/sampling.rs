use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{mol_reference, Problem, ProblemId};
use crate::mathcore::{Matrix, Rng};
use crate::{Error, Result};

const STREAM_TRAIN: u64 = 1;
const STREAM_TEST: u64 = 2;

fn d_test_seed() -> u64 {
    20_240_901
}
fn d_n_test() -> usize {
    4096
}

/// Point counts and seeds for the collocation sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplePlan {
    pub n_f: usize,
    #[serde(default)]
    pub n_b: usize,
    pub n_0: usize,
    /// Random test points for problems with an exact solution.
    #[serde(default = "d_n_test")]
    pub n_test: usize,
    /// Mixed with the run seed to pick the training points.
    #[serde(default)]
    pub seed: u64,
    /// Fixed across runs so every configuration is scored on the same set.
    #[serde(default = "d_test_seed")]
    pub test_seed: u64,
    #[serde(default)]
    pub resample_each_iter: bool,
}

impl SamplePlan {
    pub fn new(n_f: usize, n_b: usize, n_0: usize) -> Self {
        Self {
            n_f,
            n_b,
            n_0,
            n_test: d_n_test(),
            seed: 0,
            test_seed: d_test_seed(),
            resample_each_iter: false,
        }
    }

    /// Generator for the training points of one run.
    pub fn train_rng(&self, run_seed: u64) -> Rng {
        Rng::new(self.seed).split(STREAM_TRAIN).split(run_seed)
    }
}

/// Training point sets with their data targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Samples {
    pub interior: Matrix,
    pub boundary: Matrix,
    pub boundary_target: Matrix,
    pub initial: Matrix,
    pub initial_target: Matrix,
}

/// Fixed evaluation points with reference values.
#[derive(Clone, Debug, PartialEq)]
pub struct TestSet {
    pub x: Matrix,
    pub exact: Matrix,
}

fn interior(p: &Problem, n: usize, rng: &mut Rng) -> Matrix {
    let (t0, t1) = p.t_range;
    Matrix::from_fn(n, p.input_dim(), |_, c| {
        let (lo, hi) = if c < p.dim { p.bounds[c] } else { (t0, t1) };
        rng.uniform(lo, hi)
    })
}

/// Uniform on the faces of the spatial box times the time window.
fn boundary(p: &Problem, n: usize, rng: &mut Rng) -> Matrix {
    let mut x = interior(p, n, rng);
    for r in 0..n {
        let axis = ((rng.uniform01() * p.dim as f64) as usize).min(p.dim - 1);
        let (lo, hi) = p.bounds[axis];
        x.set(r, axis, if rng.uniform01() < 0.5 { lo } else { hi });
    }
    x
}

fn initial(p: &Problem, n: usize, rng: &mut Rng) -> Matrix {
    let mut x = interior(p, n, rng);
    for r in 0..n {
        x.set(r, p.dim, p.t_range.0);
    }
    x
}

/// Interior, boundary and initial points for one run, with targets taken
/// from the problem data. Periodic problems get an empty boundary set.
pub fn sample_domain(p: &Problem, plan: &SamplePlan, rng: &mut Rng) -> Samples {
    let x_f = interior(p, plan.n_f, rng);
    let (x_b, g) = if p.periodic() {
        (
            Matrix::zeros(0, p.input_dim()),
            Matrix::zeros(0, p.n_outputs()),
        )
    } else {
        let x_b = boundary(p, plan.n_b, rng);
        let g = p
            .boundary_values(&x_b)
            .expect("non-periodic problems have boundary data");
        (x_b, g)
    };
    let x_0 = initial(p, plan.n_0, rng);
    let h = p.initial_values(&x_0);
    Samples {
        interior: x_f,
        boundary: x_b,
        boundary_target: g,
        initial: x_0,
        initial_target: h,
    }
}

/// Evaluation set: random points scored against the exact solution where
/// one exists, otherwise a space-time grid of the method-of-lines
/// reference. `None` for problems without either.
pub fn test_set(p: &Problem, plan: &SamplePlan) -> Result<Option<TestSet>> {
    if let Some(exact) = p.exact() {
        let mut rng = Rng::new(plan.test_seed).split(STREAM_TEST);
        let x = interior(p, plan.n_test, &mut rng);
        let exact = exact.values(&x);
        return Ok(Some(TestSet { x, exact }));
    }
    match p.id {
        ProblemId::GrayScott | ProblemId::Bz => {
            let reference = mol_reference(p, 512, 41)?;
            Ok(Some(reference.grid(4)))
        }
        _ => Ok(None),
    }
}

/// One point per row: coordinates, then reference values if given.
pub fn write_points_csv(
    path: &Path,
    p: &Problem,
    x: &Matrix,
    values: Option<&Matrix>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
    let mut header: Vec<String> = (0..p.dim).map(|i| format!("x{i}")).collect();
    header.push("t".into());
    if values.is_some() {
        header.extend(p.output_names().iter().map(|s| s.to_string()));
    }
    w.write_record(&header)
        .map_err(|e| Error::Format(e.to_string()))?;
    for r in 0..x.rows() {
        let mut rec: Vec<String> = x.row(r).iter().map(|v| format!("{v:e}")).collect();
        if let Some(v) = values {
            rec.extend(v.row(r).iter().map(|v| format!("{v:e}")));
        }
        w.write_record(&rec)
            .map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_lie_in_their_sets() {
        let p = Problem::heat(10);
        let plan = SamplePlan::new(200, 50, 30);
        let s = sample_domain(&p, &plan, &mut plan.train_rng(0));
        assert!(s
            .interior
            .as_slice()
            .iter()
            .all(|v| (-1.0..=1.0).contains(v)));
        for r in 0..s.interior.rows() {
            assert!((0.0..=1.0).contains(&s.interior.get(r, 10)));
        }
        for r in 0..s.boundary.rows() {
            assert_eq!(
                s.boundary.row(r)[..10]
                    .iter()
                    .filter(|v| v.abs() == 1.0)
                    .count(),
                1
            );
        }
        assert!((0..30).all(|r| s.initial.get(r, 10) == 0.0));
        assert_eq!(s.boundary_target.shape(), (50, 1));
    }

    #[test]
    fn periodic_problems_have_no_boundary_set() {
        let p = Problem::new(ProblemId::GrayScott);
        let s = sample_domain(&p, &SamplePlan::new(10, 10, 10), &mut Rng::new(0));
        assert_eq!(s.boundary.rows(), 0);
    }

    #[test]
    fn fixed_seed_gives_identical_sets() {
        let p = Problem::new(ProblemId::Ks);
        let plan = SamplePlan::new(64, 16, 16);
        let a = sample_domain(&p, &plan, &mut plan.train_rng(3));
        let b = sample_domain(&p, &plan, &mut plan.train_rng(3));
        let c = sample_domain(&p, &plan, &mut plan.train_rng(4));
        assert_eq!(a, b);
        assert_ne!(a.interior, c.interior);
        let t1 = test_set(&p, &plan).unwrap().unwrap();
        let t2 = test_set(&p, &SamplePlan { seed: 99, ..plan })
            .unwrap()
            .unwrap();
        assert_eq!(t1, t2);
    }
}
