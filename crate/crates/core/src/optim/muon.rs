use crate::mathcore::{newton_schulz, Matrix};

/// Momentum buffer for one matrix tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct MuonBuffer {
    pub momentum: Matrix,
}

impl MuonBuffer {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            momentum: Matrix::zeros(rows, cols),
        }
    }

    /// Nesterov-style momentum, Newton–Schulz orthogonalization and the
    /// aspect-ratio scale. A zero lookahead gives a zero direction.
    pub fn direction(&mut self, g: &Matrix, mu: f64, ns_iters: usize) -> Matrix {
        self.momentum = self.momentum.zip_map(g, |m, gi| mu * m + gi);
        let lookahead = self.momentum.zip_map(g, |m, gi| mu * m + gi);
        let mut x = newton_schulz(&lookahead, ns_iters);
        x.scale_in_place(aspect_scale(g.rows(), g.cols()));
        x
    }
}

/// `max(1, √(n/m))` for an m×n matrix with `m ≤ n`; the ratio is taken
/// long side over short side so the value does not depend on whether
/// weights are stored out×in or in×out.
pub fn aspect_scale(rows: usize, cols: usize) -> f64 {
    let (short, long) = if rows <= cols {
        (rows, cols)
    } else {
        (cols, rows)
    };
    (long as f64 / short as f64).sqrt().max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mathcore::{jacobi_eigh, Rng};

    #[test]
    fn scalar_direction_is_sign() {
        let mut b = MuonBuffer::zeros(1, 1);
        assert_eq!(b.direction(&Matrix::scalar(5.0), 0.0, 5).item(), 1.0);
        let mut b = MuonBuffer::zeros(1, 1);
        assert_eq!(b.direction(&Matrix::scalar(-0.3), 0.0, 5).item(), -1.0);
    }

    #[test]
    fn aspect_ratio_scale() {
        assert_eq!(aspect_scale(2, 8), 2.0);
        assert_eq!(aspect_scale(8, 2), 2.0);
        assert_eq!(aspect_scale(3, 3), 1.0);
    }

    #[test]
    fn wide_step_is_scaled_orthogonal_rows() {
        // Orthonormal rows after enough iterations; norm of each row → scale.
        let mut rng = Rng::new(2);
        let g = Matrix::from_fn(2, 8, |_, _| rng.normal());
        let mut b = MuonBuffer::zeros(2, 8);
        let d = b.direction(&g, 0.0, 5);
        let x = newton_schulz(&g, 5);
        assert_eq!(d, x.scaled(2.0));
    }

    #[test]
    fn zero_momentum_gives_zero_direction() {
        let mut b = MuonBuffer::zeros(2, 3);
        assert_eq!(
            b.direction(&Matrix::zeros(2, 3), 0.9, 5),
            Matrix::zeros(2, 3)
        );
    }

    #[test]
    fn close_to_exact_polar_factor() {
        let mut rng = Rng::new(17);
        // Well-conditioned 3×3 input so five cubic iterations suffice.
        let g = Matrix::from_fn(3, 3, |i, j| {
            if i == j {
                2.0 + 0.3 * i as f64
            } else {
                0.4 * rng.normal()
            }
        });
        let mut b = MuonBuffer::zeros(3, 3);
        let d = b.direction(&g, 0.0, 5);
        let (vals, vecs) = jacobi_eigh(&g.matmul_tn(&g), 1e-15).unwrap();
        let inv_sqrt = Matrix::from_fn(3, 3, |i, j| vecs.get(i, j) / vals[j].sqrt());
        let polar = g.matmul(&inv_sqrt.matmul_nt(&vecs));
        let cos = d.dot(&polar) / (d.frobenius_norm() * polar.frobenius_norm());
        let angle = cos.clamp(-1.0, 1.0).acos();
        assert!(angle <= 0.02, "angle {angle}");
    }
}
