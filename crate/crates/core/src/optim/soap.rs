use super::adamw::{AdamHyper, Moments, PrecondStats};
use crate::mathcore::{jacobi_eigh, Matrix};

/// Kronecker-factor statistics, eigenbases and rotated moments for one
/// matrix tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct SoapBlock {
    pub l: Matrix,
    pub r: Matrix,
    pub u_l: Matrix,
    pub u_r: Matrix,
    /// Adam moments in the rotated basis. They are not re-rotated when the
    /// bases are refreshed.
    pub moments: Moments,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SoapHyper {
    pub beta_p: f64,
    pub freq: u64,
    pub eig_tol: f64,
    /// Initial diagonal of `L` and `R`.
    pub init_eps: f64,
}

fn symmetrize(m: &Matrix) -> Matrix {
    let n = m.rows();
    Matrix::from_fn(n, n, |i, j| 0.5 * (m.get(i, j) + m.get(j, i)))
}

impl SoapBlock {
    pub fn new(rows: usize, cols: usize, init_eps: f64) -> Self {
        Self {
            l: Matrix::identity(rows).scaled(init_eps),
            r: Matrix::identity(cols).scaled(init_eps),
            u_l: Matrix::identity(rows),
            u_r: Matrix::identity(cols),
            moments: Moments::zeros(rows, cols),
        }
    }

    /// Returns the update direction `U_L P U_Rᵀ`, the rotated-space
    /// preconditioner range, and whether an eigenbasis refresh failed (in
    /// which case the previous bases are kept).
    pub fn direction(
        &mut self,
        g: &Matrix,
        k: u64,
        adam: &AdamHyper,
        hp: &SoapHyper,
    ) -> (Matrix, PrecondStats, bool) {
        let (bp, cp) = (hp.beta_p, 1.0 - hp.beta_p);
        let ggt = g.matmul_nt(g);
        let gtg = g.matmul_tn(g);
        self.l = symmetrize(&self.l.zip_map(&ggt, |a, b| bp * a + cp * b));
        self.r = symmetrize(&self.r.zip_map(&gtg, |a, b| bp * a + cp * b));
        let mut fallback = false;
        if k % hp.freq == 0 {
            match (
                jacobi_eigh(&self.l, hp.eig_tol),
                jacobi_eigh(&self.r, hp.eig_tol),
            ) {
                (Ok((_, ul)), Ok((_, ur))) => {
                    self.u_l = ul;
                    self.u_r = ur;
                }
                _ => fallback = true,
            }
        }
        let rotated = self.u_l.matmul_tn(g).matmul(&self.u_r);
        let (p, stats) = self.moments.direction(&rotated, k, adam);
        let delta = self.u_l.matmul(&p).matmul_nt(&self.u_r);
        (delta, stats, fallback)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mathcore::Rng;

    fn adam() -> AdamHyper {
        AdamHyper {
            beta1: 0.9,
            beta2: 0.999,
            delta: 1e-8,
            weight_decay: 0.0,
        }
    }

    fn soap(freq: u64) -> SoapHyper {
        SoapHyper {
            beta_p: 0.95,
            freq,
            eig_tol: 1e-12,
            init_eps: 1e-8,
        }
    }

    #[test]
    fn identity_bases_reduce_to_adam() {
        let mut rng = Rng::new(1);
        let mut block = SoapBlock::new(3, 4, 1e-8);
        let mut plain = Moments::zeros(3, 4);
        for k in 1..10 {
            let g = Matrix::from_fn(3, 4, |_, _| rng.normal());
            let (d, _, _) = block.direction(&g, k, &adam(), &soap(10));
            let (e, _) = plain.direction(&g, k, &adam());
            assert!((&d - &e).max_abs() <= 1e-12 * (1.0 + e.max_abs()));
        }
    }

    #[test]
    fn diagonal_stream_keeps_axis_aligned_bases() {
        let mut rng = Rng::new(4);
        let mut block = SoapBlock::new(3, 3, 1e-8);
        for k in 1..=20 {
            let g = Matrix::from_fn(3, 3, |i, j| if i == j { rng.normal() } else { 0.0 });
            block.direction(&g, k, &adam(), &soap(5));
            for m in [&block.l, &block.r] {
                for i in 0..3 {
                    for j in 0..3 {
                        if i != j {
                            assert_eq!(m.get(i, j), 0.0);
                        }
                    }
                }
            }
        }
        for u in [&block.u_l, &block.u_r] {
            for j in 0..3 {
                let col: Vec<f64> = (0..3).map(|i| u.get(i, j).abs()).collect();
                assert_eq!(col.iter().filter(|&&v| v == 1.0).count(), 1);
                assert_eq!(col.iter().filter(|&&v| v == 0.0).count(), 2);
            }
        }
    }

    #[test]
    fn statistics_stay_symmetric_psd() {
        let mut rng = Rng::new(9);
        let mut block = SoapBlock::new(4, 4, 1e-8);
        for k in 1..=50 {
            let g = Matrix::from_fn(4, 4, |_, _| rng.normal());
            block.direction(&g, k, &adam(), &soap(10));
            assert!(block.moments.v.as_slice().iter().all(|&v| v >= 0.0));
            for m in [&block.l, &block.r] {
                assert_eq!(m.asymmetry(), Some(0.0));
                let (vals, _) = jacobi_eigh(m, 1e-12).unwrap();
                assert!(vals.iter().all(|&v| v >= -1e-10), "{vals:?}");
            }
        }
    }
}
