use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::mathcore::{Matrix, Rng};
use crate::network::ParamSet;
use crate::{Error, Result};

/// Denominators below this are treated as zero.
pub const RATIO_GUARD: f64 = 1e-30;

/// `R = ‖g_next − (g + τ y)‖ / ‖g_next − g‖`, with a flag set when the
/// denominator fell under [`RATIO_GUARD`] and was floored.
pub fn secant_error_ratio(
    g_next: &ParamSet,
    g: &ParamSet,
    y: &ParamSet,
    tau: f64,
) -> Result<(f64, bool)> {
    g_next.check_layout(g, "secant ratio")?;
    g.check_layout(y, "secant ratio")?;
    let mut num = 0.0;
    let mut den = 0.0;
    for ((a, b), c) in g_next.tensors().iter().zip(g.tensors()).zip(y.tensors()) {
        for ((an, bn), cn) in a.as_slice().iter().zip(b.as_slice()).zip(c.as_slice()) {
            let d = an - bn;
            let e = d - tau * cn;
            num += e * e;
            den += d * d;
        }
    }
    let den = den.sqrt();
    let guarded = den < RATIO_GUARD;
    Ok((num.sqrt() / den.max(RATIO_GUARD), guarded))
}

/// Least-squares coefficient of `d_next` along `s`, flagged (and zero) when
/// `s` vanishes.
pub fn estimate_tau(d_next: &ParamSet, s: &ParamSet) -> Result<(f64, bool)> {
    d_next.check_layout(s, "tau estimate")?;
    let ss = s.norm_sq();
    if ss == 0.0 {
        return Ok((0.0, true));
    }
    Ok((d_next.dot(s) / ss, false))
}

fn d_filter() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeConfig {
    pub n: usize,
    pub extent: f64,
    #[serde(default)]
    pub seed: u64,
    /// Rescale each direction tensor to the norm of the matching centre
    /// tensor; off gives raw Gaussian directions.
    #[serde(default = "d_filter")]
    pub filter_normalize: bool,
}

/// `values[i][j]` is log₁₀ of the loss at `centre + a_i d₁ + b_j d₂`; NaN
/// marks nodes where the loss was not finite.
#[derive(Clone, Debug, PartialEq)]
pub struct LandscapeGrid {
    pub n: usize,
    pub extent: f64,
    pub values: Vec<Vec<f64>>,
}

impl LandscapeGrid {
    /// Max minus min over the finite nodes.
    pub fn range(&self) -> f64 {
        let finite = self.values.iter().flatten().filter(|v| v.is_finite());
        let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
        hi - lo
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "{} {:e}", self.n, self.extent)?;
        for row in &self.values {
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(f, "{}", line.join(" "))?;
        }
        f.flush()?;
        Ok(())
    }
}

/// Two random directions matched to the layout of `centre`.
pub fn landscape_directions(centre: &ParamSet, cfg: &LandscapeConfig) -> (ParamSet, ParamSet) {
    let mut rng = Rng::new(cfg.seed);
    let mut draw = || {
        let mut d = centre.zeros_like();
        for (t, c) in d.tensors_mut().iter_mut().zip(centre.tensors()) {
            *t = Matrix::from_fn(c.rows(), c.cols(), |_, _| rng.normal());
            if cfg.filter_normalize {
                let n = t.frobenius_norm();
                if n > 0.0 {
                    t.scale_in_place(c.frobenius_norm() / n);
                }
            }
        }
        d
    };
    let d1 = draw();
    let d2 = draw();
    (d1, d2)
}

/// Log-loss over the plane spanned by two random directions through
/// `centre`. With `n = 1` the single node is the centre itself.
pub fn landscape_project(
    centre: &ParamSet,
    dirs: &(ParamSet, ParamSet),
    cfg: &LandscapeConfig,
    loss: impl Fn(&ParamSet) -> Result<f64>,
) -> Result<LandscapeGrid> {
    if cfg.n == 0 || !(cfg.extent > 0.0) {
        return Err(Error::Config(
            "landscape needs n >= 1 and extent > 0".into(),
        ));
    }
    let coord = |i: usize| {
        if cfg.n == 1 {
            0.0
        } else {
            -cfg.extent + 2.0 * cfg.extent * i as f64 / (cfg.n - 1) as f64
        }
    };
    let mut values = vec![vec![f64::NAN; cfg.n]; cfg.n];
    for (i, row) in values.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let mut p = centre.clone();
            p.axpy(coord(i), &dirs.0);
            p.axpy(coord(j), &dirs.1);
            let l = match loss(&p) {
                Ok(l) => l,
                Err(Error::NonFinite { .. }) => f64::NAN,
                Err(e) => return Err(e),
            };
            *v = if l.is_finite() && l > 0.0 {
                l.log10()
            } else {
                f64::NAN
            };
        }
    }
    Ok(LandscapeGrid {
        n: cfg.n,
        extent: cfg.extent,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> ParamSet {
        ParamSet::from_vector(x)
    }

    #[test]
    fn perfect_prediction_and_zero_tau() {
        let g = v(&[1.0, -2.0]);
        let y = v(&[0.5, 0.25]);
        let g_next = v(&[1.0 + 2.0 * 0.5, -2.0 + 2.0 * 0.25]);
        assert_eq!(
            secant_error_ratio(&g_next, &g, &y, 2.0).unwrap(),
            (0.0, false)
        );
        assert_eq!(
            secant_error_ratio(&g_next, &g, &y, 0.0).unwrap(),
            (1.0, false)
        );
        let (r, guarded) = secant_error_ratio(&g, &g, &y, 1.0).unwrap();
        assert!(guarded && r.is_finite());
    }

    #[test]
    fn quadratic_hand_trace() {
        // F = ½(θ₁² + 4θ₂²), three gradient steps with η = 0.1 from (1, 1).
        let grad = |t: &[f64]| vec![t[0], 4.0 * t[1]];
        let mut th = vec![vec![1.0, 1.0]];
        for _ in 0..3 {
            let t = th.last().unwrap();
            let g = grad(t);
            th.push(vec![t[0] - 0.1 * g[0], t[1] - 0.1 * g[1]]);
        }
        // θ = (1,1), (0.9,0.6), (0.81,0.36), (0.729,0.216)
        // k = 1: s = (−0.1,−0.4), y = (−0.1,−1.6), d = (−0.09,−0.24)
        let tau: f64 = (0.009 + 0.096) / (0.01 + 0.16);
        let g1 = [0.9, 2.4];
        let y = [-0.1, -1.6];
        let g2 = [0.81, 1.44];
        let num =
            ((g2[0] - g1[0] - tau * y[0]).powi(2) + (g2[1] - g1[1] - tau * y[1]).powi(2)).sqrt();
        let den = ((g2[0] - g1[0]).powi(2) + (g2[1] - g1[1]).powi(2)).sqrt();
        let s = v(&[th[1][0] - th[0][0], th[1][1] - th[0][1]]);
        let d = v(&[th[2][0] - th[1][0], th[2][1] - th[1][1]]);
        let (t, _) = estimate_tau(&d, &s).unwrap();
        assert!((t - tau).abs() < 1e-12);
        let gy = v(&[
            grad(&th[1])[0] - grad(&th[0])[0],
            grad(&th[1])[1] - grad(&th[0])[1],
        ]);
        let (r, _) = secant_error_ratio(&v(&grad(&th[2])), &v(&grad(&th[1])), &gy, t).unwrap();
        assert!((r - num / den).abs() < 1e-12, "{r} vs {}", num / den);
    }

    #[test]
    fn tau_cases() {
        let s = v(&[1.0, 2.0]);
        assert_eq!(estimate_tau(&v(&[2.0, 4.0]), &s).unwrap(), (2.0, false));
        assert_eq!(estimate_tau(&v(&[-2.0, 1.0]), &s).unwrap(), (0.0, false));
        assert_eq!(estimate_tau(&s, &v(&[0.0, 0.0])).unwrap(), (0.0, true));
    }

    proptest! {
        #[test]
        fn least_squares_residual_is_orthogonal(
            d in prop::collection::vec(-5.0f64..5.0, 8),
            s in prop::collection::vec(-5.0f64..5.0, 8),
        ) {
            let (d, s) = (v(&d), v(&s));
            prop_assume!(s.norm() > 1e-3);
            let (tau, _) = estimate_tau(&d, &s).unwrap();
            let mut r = d.clone();
            r.axpy(-tau, &s);
            prop_assert!(r.dot(&s).abs() <= 1e-12 * d.norm().max(1.0) * s.norm());
        }
    }

    #[test]
    fn landscape_of_a_symmetric_quadratic() {
        let centre = ParamSet::from_vector(&[0.0, 0.0, 0.0]);
        let cfg = LandscapeConfig {
            n: 3,
            extent: 1.0,
            seed: 4,
            filter_normalize: false,
        };
        let dirs = landscape_directions(&centre, &cfg);
        let grid = landscape_project(&centre, &dirs, &cfg, |p| Ok(1.0 + p.norm_sq())).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((grid.values[i][j] - grid.values[2 - i][2 - j]).abs() < 1e-14);
            }
        }
        assert_eq!(grid.values[1][1], 0.0);
        let one = LandscapeConfig { n: 1, ..cfg };
        let g1 = landscape_project(&centre, &dirs, &one, |_| Ok(100.0)).unwrap();
        assert_eq!(g1.values, vec![vec![2.0]]);
    }

    #[test]
    fn non_finite_nodes_become_nan() {
        let centre = ParamSet::from_vector(&[1.0]);
        let cfg = LandscapeConfig {
            n: 2,
            extent: 1.0,
            seed: 0,
            filter_normalize: true,
        };
        let dirs = landscape_directions(&centre, &cfg);
        assert!((dirs.0.norm() - 1.0).abs() < 1e-12);
        let grid =
            landscape_project(&centre, &dirs, &cfg, |_| Err(Error::non_finite("x"))).unwrap();
        assert!(grid.values.iter().flatten().all(|v| v.is_nan()));
    }
}
