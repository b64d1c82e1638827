use super::{MathError, Matrix};

pub const DEFAULT_MAX_SWEEPS: usize = 100;

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching orthonormal
/// eigenvectors as columns. Iteration stops once the off-diagonal Frobenius
/// mass drops to `tol·‖S‖_F`.
pub fn jacobi_eigh(s: &Matrix, tol: f64) -> Result<(Vec<f64>, Matrix), MathError> {
    jacobi_eigh_with(s, tol, DEFAULT_MAX_SWEEPS)
}

pub fn jacobi_eigh_with(
    s: &Matrix,
    tol: f64,
    max_sweeps: usize,
) -> Result<(Vec<f64>, Matrix), MathError> {
    let n = s.rows();
    if s.cols() != n {
        return Err(MathError::Dimension(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            s.rows(),
            s.cols()
        )));
    }
    if !(tol > 0.0) {
        return Err(MathError::Dimension(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    if !s.is_finite() {
        return Err(MathError::NonFinite("eigendecomposition input".into()));
    }
    let norm = s.frobenius_norm();
    let asym = s.asymmetry().unwrap_or(0.0);
    if asym > 1e-12 * norm {
        return Err(MathError::Dimension(format!(
            "matrix is not symmetric (max |a_ij - a_ji| = {asym:e})"
        )));
    }

    // Work on the symmetrized copy so rounding-level asymmetry cannot leak in.
    let mut a: Vec<f64> = (0..n * n)
        .map(|k| {
            let (i, j) = (k / n, k % n);
            0.5 * (s.get(i, j) + s.get(j, i))
        })
        .collect();
    let mut v = Matrix::identity(n);
    let target = tol * norm;

    let off = |a: &[f64]| -> f64 {
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    acc += a[i * n + j] * a[i * n + j];
                }
            }
        }
        acc.sqrt()
    };

    let mut sweeps = 0;
    loop {
        let current = off(&a);
        if current <= target {
            break;
        }
        if sweeps == max_sweeps {
            return Err(MathError::Convergence {
                sweeps,
                off: current,
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - sn * akq;
                    a[k * n + q] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - sn * aqk;
                    a[q * n + k] = sn * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                let vd = v.as_mut_slice();
                for k in 0..n {
                    let vkp = vd[k * n + p];
                    let vkq = vd[k * n + q];
                    vd[k * n + p] = c * vkp - sn * vkq;
                    vd[k * n + q] = sn * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v.get(r, order[c]));
    Ok((values, vectors))
}
