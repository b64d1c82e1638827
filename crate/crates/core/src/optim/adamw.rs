use crate::mathcore::Matrix;

/// Hyperparameters shared by the Adam-style updates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub delta: f64,
    pub weight_decay: f64,
}

/// Range of the diagonal preconditioner `1/(√v̂ + δ)` over the entries
/// touched by an update, plus the running max `|g̃|` that bounds it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrecondStats {
    pub d_min: f64,
    pub d_max: f64,
    pub g_run: f64,
}

impl PrecondStats {
    pub fn merge(a: Option<Self>, b: Option<Self>) -> Option<Self> {
        match (a, b) {
            (Some(a), Some(b)) => Some(Self {
                d_min: a.d_min.min(b.d_min),
                d_max: a.d_max.max(b.d_max),
                g_run: a.g_run.max(b.g_run),
            }),
            (a, None) => a,
            (None, b) => b,
        }
    }
}

/// First and second moments for one tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub m: Matrix,
    pub v: Matrix,
    /// Running max of `|g̃|` over all entries fed into `v`.
    pub g_run: f64,
}

impl Moments {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            m: Matrix::zeros(rows, cols),
            v: Matrix::zeros(rows, cols),
            g_run: 0.0,
        }
    }

    /// Moment update with input `g` at step `k ≥ 1`; returns the
    /// bias-corrected preconditioned direction `m̂/(√v̂+δ)` and the
    /// preconditioner range.
    pub fn direction(&mut self, g: &Matrix, k: u64, hp: &AdamHyper) -> (Matrix, PrecondStats) {
        let (b1, b2) = (hp.beta1, hp.beta2);
        let c1 = 1.0 - b1.powi(k as i32);
        let c2 = 1.0 - b2.powi(k as i32);
        let mut dir = Vec::with_capacity(g.len());
        let (mut d_min, mut d_max) = (f64::INFINITY, 0.0f64);
        let m = self.m.as_mut_slice();
        let v = self.v.as_mut_slice();
        for (i, &gi) in g.as_slice().iter().enumerate() {
            m[i] = b1 * m[i] + (1.0 - b1) * gi;
            v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
            let m_hat = m[i] / c1;
            let denom = (v[i] / c2).sqrt() + hp.delta;
            dir.push(m_hat / denom);
            let d = 1.0 / denom;
            d_min = d_min.min(d);
            d_max = d_max.max(d);
            self.g_run = self.g_run.max(gi.abs());
        }
        (
            Matrix::from_raw(g.rows(), g.cols(), dir),
            PrecondStats {
                d_min,
                d_max,
                g_run: self.g_run,
            },
        )
    }
}

/// `θ ← θ − η (Δ + λ θ)`.
pub fn apply_decoupled(theta: &mut Matrix, delta: &Matrix, lr: f64, weight_decay: f64) {
    for (t, d) in theta.as_mut_slice().iter_mut().zip(delta.as_slice()) {
        *t -= lr * (d + weight_decay * *t);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hp(weight_decay: f64) -> AdamHyper {
        AdamHyper {
            beta1: 0.9,
            beta2: 0.999,
            delta: 1e-8,
            weight_decay,
        }
    }

    #[test]
    fn first_step_is_sign_like() {
        let mut mo = Moments::zeros(1, 1);
        let mut theta = Matrix::scalar(1.0);
        let (d, _) = mo.direction(&Matrix::scalar(2.0), 1, &hp(0.0));
        apply_decoupled(&mut theta, &d, 0.1, 0.0);
        assert!((theta.item() - 0.9).abs() < 1e-9);
        assert_eq!(theta.item(), 1.0 - 0.1 * (2.0 / (2.0 + 1e-8)));
    }

    #[test]
    fn zero_gradient_is_pure_decay() {
        let mut mo = Moments::zeros(1, 2);
        let mut theta = Matrix::row_vector(&[2.0, -4.0]);
        let (d, _) = mo.direction(&Matrix::zeros(1, 2), 1, &hp(0.01));
        apply_decoupled(&mut theta, &d, 0.1, 0.01);
        let expected = [2.0 * (1.0 - 0.001), -4.0 * (1.0 - 0.001)];
        for (a, b) in theta.as_slice().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn scripted_quadratic_run_matches_reference_recursion() {
        // Independent restatement of the recursion on scalars.
        let (b1, b2, eps, lr) = (0.9f64, 0.999f64, 1e-8, 0.015);
        let (mut m, mut v, mut x) = (0.0f64, 0.0f64, 1.0f64);
        let mut mo = Moments::zeros(1, 1);
        let mut theta = Matrix::scalar(1.0);
        let mut prev = 1.0f64;
        for k in 1..=100u64 {
            let g = 2.0 * x;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(k as i32));
            let vh = v / (1.0 - b2.powi(k as i32));
            x -= lr * (mh / (vh.sqrt() + eps));

            let (d, _) = mo.direction(&Matrix::scalar(2.0 * theta.item()), k, &hp(0.0));
            apply_decoupled(&mut theta, &d, lr, 0.0);
            assert_eq!(theta.item(), x);
            assert!(x.abs() < prev, "step {k} did not shrink |θ|");
            prev = x.abs();
        }
        assert!(x.abs() < 0.05, "final |θ| = {}", x.abs());
    }
}
