use super::Matrix;

/// Approximate orthogonal polar factor of `m` with the cubic iteration
/// `X ← 1.5·X − 0.5·(X·Xᵀ)·X`, starting from `m/‖m‖_F`.
///
/// A zero matrix maps to zero. Tall inputs are iterated in transposed form so
/// the Gram matrix is the smaller of the two; the iteration commutes with
/// transposition, so the result is the same up to rounding.
pub fn newton_schulz(m: &Matrix, iters: usize) -> Matrix {
    let norm = m.frobenius_norm();
    if norm == 0.0 {
        return Matrix::zeros(m.rows(), m.cols());
    }
    let tall = m.rows() > m.cols();
    let mut x = if tall { m.transpose() } else { m.clone() };
    x.scale_in_place(1.0 / norm);
    for _ in 0..iters {
        let a = x.matmul_nt(&x);
        let ax = a.matmul(&x);
        x = x.zip_map(&ax, |xi, axi| 1.5 * xi - 0.5 * axi);
    }
    if tall {
        x.transpose()
    } else {
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mathcore::{jacobi_eigh, Rng};
    use proptest::prelude::*;
    use std::ops::Sub;

    /// Polar factor `M (MᵀM)^{-1/2}` through a symmetric eigendecomposition.
    fn polar(m: &Matrix) -> Matrix {
        let (vals, vecs) = jacobi_eigh(&m.matmul_tn(m), 1e-15).unwrap();
        let n = vals.len();
        let scaled = Matrix::from_fn(n, n, |i, j| vecs.get(i, j) / vals[j].sqrt());
        m.matmul(&scaled.matmul_nt(&vecs))
    }

    #[test]
    fn scalar_fixed_point() {
        let x = newton_schulz(&Matrix::scalar(3.7), 5);
        assert_eq!(x.item(), 1.0);
        assert_eq!(newton_schulz(&Matrix::scalar(-0.2), 3).item(), -1.0);
    }

    #[test]
    fn zero_maps_to_zero() {
        assert_eq!(newton_schulz(&Matrix::zeros(2, 3), 5), Matrix::zeros(2, 3));
    }

    #[test]
    fn rotation_stays_orthogonal() {
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let q = Matrix::from_rows(&[&[c, -s, 0.0], &[s, c, 0.0], &[0.0, 0.0, 1.0]]).unwrap();
        let x = newton_schulz(&q.scaled(4.0), 5);
        let defect = x.matmul_nt(&x).sub(&Matrix::identity(3)).frobenius_norm();
        assert!(defect < 1e-3, "{defect}");
    }

    #[test]
    fn diagonal_approaches_polar_factor() {
        let m = Matrix::from_rows(&[&[3.0, 0.0], &[0.0, 1.0]]).unwrap();
        let oracle = polar(&m);
        let mut prev = f64::INFINITY;
        for k in 1..=5 {
            let err = newton_schulz(&m, k).sub(&oracle).frobenius_norm();
            assert!(err < prev, "iteration {k} did not improve");
            prev = err;
        }
        let x = newton_schulz(&m, 5);
        assert!(x.get(0, 1) == 0.0 && x.get(1, 0) == 0.0);
        assert!(x.get(0, 0) > 0.9 && x.get(1, 1) > 0.5);
    }

    #[test]
    fn orthogonality_defect_decreases() {
        let mut rng = Rng::new(3);
        let m = Matrix::from_fn(
            4,
            4,
            |i, j| if i == j { 1.0 } else { 0.0 } + 0.2 * rng.normal(),
        );
        let defect = |x: &Matrix| x.matmul_nt(x).sub(&Matrix::identity(4)).frobenius_norm();
        let mut prev = defect(&m.scaled(1.0 / m.frobenius_norm()));
        for k in 1..=8 {
            let d = defect(&newton_schulz(&m, k));
            assert!(d < prev);
            prev = d;
        }
    }

    #[test]
    fn tall_matches_wide() {
        let mut rng = Rng::new(8);
        let m = Matrix::from_fn(5, 3, |_, _| rng.normal());
        let a = newton_schulz(&m, 5);
        let b = newton_schulz(&m.transpose(), 5).transpose();
        assert!(a.sub(&b).max_abs() < 1e-13);
    }

    proptest! {
        #[test]
        fn scale_invariant(seed in any::<u64>(), c in 1e-3f64..1e3, r in 1usize..6, k in 1usize..6) {
            let mut rng = Rng::new(seed);
            let m = Matrix::from_fn(r, 4, |_, _| rng.normal());
            let d = newton_schulz(&m.scaled(c), k).sub(&newton_schulz(&m, k)).max_abs();
            prop_assert!(d <= 1e-12);
        }
    }
}
