use super::{Problem, ProblemId, TestSet, BZ_EPS1, BZ_EPS2, GS_B, GS_EPS1, GS_EPS2, GS_K};
use crate::mathcore::Matrix;
use crate::{Error, Result};

/// Reference solution on a periodic grid: `fields[c]` has one row per
/// snapshot time and one column per grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct Reference {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    pub fields: Vec<Matrix>,
}

impl Reference {
    /// Every `stride`-th grid point at every snapshot, as a test set.
    pub fn grid(&self, stride: usize) -> TestSet {
        let cols: Vec<usize> = (0..self.x.len()).step_by(stride.max(1)).collect();
        let n = cols.len() * self.t.len();
        let mut x = Matrix::zeros(n, 2);
        let mut exact = Matrix::zeros(n, self.fields.len());
        let mut r = 0;
        for (k, &t) in self.t.iter().enumerate() {
            for &j in &cols {
                x.set(r, 0, self.x[j]);
                x.set(r, 1, t);
                for (c, f) in self.fields.iter().enumerate() {
                    exact.set(r, c, f.get(k, j));
                }
                r += 1;
            }
        }
        TestSet { x, exact }
    }
}

/// Fourth-order periodic second difference.
fn laplacian(u: &[f64], inv_dx2: f64, out: &mut [f64]) {
    let n = u.len();
    for j in 0..n {
        let at = |o: isize| u[(j as isize + o).rem_euclid(n as isize) as usize];
        out[j] = (-at(-2) + 16.0 * at(-1) - 30.0 * u[j] + 16.0 * at(1) - at(2)) * inv_dx2 / 12.0;
    }
}

fn rhs(id: ProblemId, s: &[Vec<f64>], inv_dx2: f64, out: &mut [Vec<f64>]) {
    let mut lap: Vec<Vec<f64>> = s.iter().map(|c| vec![0.0; c.len()]).collect();
    for (c, l) in s.iter().zip(&mut lap) {
        laplacian(c, inv_dx2, l);
    }
    for j in 0..s[0].len() {
        match id {
            ProblemId::GrayScott => {
                let (u, v) = (s[0][j], s[1][j]);
                out[0][j] = GS_EPS1 * lap[0][j] + GS_B * (1.0 - u) - u * v * v;
                out[1][j] = GS_EPS2 * lap[1][j] - (GS_B + GS_K) * v - u * v * v;
            }
            ProblemId::Bz => {
                let (u, v, w) = (s[0][j], s[1][j], s[2][j]);
                out[0][j] = BZ_EPS1 * lap[0][j] - u - v + u * v + u * u;
                out[1][j] = BZ_EPS2 * lap[1][j] - w + v + u * v;
                out[2][j] = BZ_EPS1 * lap[2][j] - u + w;
            }
            _ => unreachable!(),
        }
    }
}

/// Method-of-lines reference for the periodic 1D systems: fourth-order
/// finite differences on `nx` points, classical RK4 in time, `n_snap`
/// uniformly spaced snapshots over the problem's time range.
pub fn mol_reference(p: &Problem, nx: usize, n_snap: usize) -> Result<Reference> {
    let eps = match p.id {
        ProblemId::GrayScott => GS_EPS1.max(GS_EPS2),
        ProblemId::Bz => BZ_EPS1.max(BZ_EPS2),
        _ => {
            return Err(Error::Config(format!(
                "no method-of-lines reference for {}",
                p.name()
            )))
        }
    };
    if nx < 5 || n_snap < 2 {
        return Err(Error::Config(
            "reference grid needs nx >= 5 and n_snap >= 2".into(),
        ));
    }
    let (a, b) = p.bounds[0];
    let dx = (b - a) / nx as f64;
    let x: Vec<f64> = (0..nx).map(|j| a + j as f64 * dx).collect();
    let (t0, t1) = p.t_range;
    let t: Vec<f64> = (0..n_snap)
        .map(|k| t0 + (t1 - t0) * k as f64 / (n_snap - 1) as f64)
        .collect();

    // Largest decay rate of the stencil is 64/12 eps/dx²; RK4 is stable up
    // to about 2.78 on the negative axis. Reaction rates are O(1).
    let rate = eps * 64.0 / 12.0 / (dx * dx) + 4.0;
    let dt_max = (1.0 / rate).min(1e-2);
    let interval = (t1 - t0) / (n_snap - 1) as f64;
    let substeps = (interval / dt_max).ceil() as usize;
    let dt = interval / substeps as f64;

    let pts = Matrix::from_fn(nx, 2, |r, c| if c == 0 { x[r] } else { t0 });
    let init = p.initial_values(&pts);
    let nc = init.cols();
    let mut s: Vec<Vec<f64>> = (0..nc).map(|c| init.column(c).into_vec()).collect();
    let mut fields = vec![Matrix::zeros(n_snap, nx); nc];
    let record = |fields: &mut [Matrix], k: usize, s: &[Vec<f64>]| {
        for (f, c) in fields.iter_mut().zip(s) {
            for (j, v) in c.iter().enumerate() {
                f.set(k, j, *v);
            }
        }
    };
    record(&mut fields, 0, &s);
    let inv_dx2 = 1.0 / (dx * dx);
    let zeros = || vec![vec![0.0; nx]; nc];
    let (mut k1, mut k2, mut k3, mut k4) = (zeros(), zeros(), zeros(), zeros());
    let mut tmp = zeros();
    let stage = |s: &[Vec<f64>], k: &[Vec<f64>], h: f64, tmp: &mut [Vec<f64>]| {
        for ((t, a), b) in tmp.iter_mut().zip(s).zip(k) {
            for j in 0..a.len() {
                t[j] = a[j] + h * b[j];
            }
        }
    };
    for snap in 1..n_snap {
        for _ in 0..substeps {
            rhs(p.id, &s, inv_dx2, &mut k1);
            stage(&s, &k1, 0.5 * dt, &mut tmp);
            rhs(p.id, &tmp, inv_dx2, &mut k2);
            stage(&s, &k2, 0.5 * dt, &mut tmp);
            rhs(p.id, &tmp, inv_dx2, &mut k3);
            stage(&s, &k3, dt, &mut tmp);
            rhs(p.id, &tmp, inv_dx2, &mut k4);
            for c in 0..nc {
                for j in 0..nx {
                    s[c][j] += dt / 6.0 * (k1[c][j] + 2.0 * k2[c][j] + 2.0 * k3[c][j] + k4[c][j]);
                }
            }
        }
        if s.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("method-of-lines integration"));
        }
        record(&mut fields, snap, &s);
    }
    Ok(Reference { x, t, fields })
}
