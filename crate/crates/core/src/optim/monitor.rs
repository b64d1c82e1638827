use serde::{Deserialize, Serialize};

use super::StepInfo;

/// Relative slack that absorbs floating-point rounding in bound checks.
pub const MONITOR_SLACK: f64 = 1e-9;

/// Which bounds were violated at one step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Violations {
    pub gate_range: bool,
    pub boosted_norm: bool,
    pub preconditioner: bool,
    pub displacement: bool,
}

impl Violations {
    pub fn any(&self) -> bool {
        self.gate_range || self.boosted_norm || self.preconditioner || self.displacement
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationCounts {
    pub gate_range: usize,
    pub boosted_norm: usize,
    pub preconditioner: usize,
    pub displacement: usize,
}

impl ViolationCounts {
    pub fn total(&self) -> usize {
        self.gate_range + self.boosted_norm + self.preconditioner + self.displacement
    }

    pub fn add(&mut self, other: &ViolationCounts) {
        self.gate_range += other.gate_range;
        self.boosted_norm += other.boosted_norm;
        self.preconditioner += other.preconditioner;
        self.displacement += other.displacement;
    }
}

/// Runtime checks of the boundedness properties of the boosted gradient,
/// the diagonal preconditioner and the per-step displacement. `G` is the
/// running maximum of the raw gradient norm.
#[derive(Clone, Debug)]
pub struct LemmaMonitor {
    alpha_base: f64,
    delta: f64,
    g_run: f64,
    counts: ViolationCounts,
}

impl LemmaMonitor {
    /// `alpha_base = 0` for plain base optimizers.
    pub fn new(alpha_base: f64, delta: f64) -> Self {
        Self {
            alpha_base,
            delta,
            g_run: 0.0,
            counts: ViolationCounts::default(),
        }
    }

    pub fn counts(&self) -> ViolationCounts {
        self.counts
    }

    pub fn g_run(&self) -> f64 {
        self.g_run
    }

    /// `C_α = 2 α_base`.
    pub fn c_alpha(&self) -> f64 {
        2.0 * self.alpha_base
    }

    /// Check one step. `theta_norm` is `‖θ‖` before the update.
    pub fn observe(
        &mut self,
        info: &StepInfo,
        lr: f64,
        weight_decay: f64,
        theta_norm: f64,
    ) -> Violations {
        let up = 1.0 + MONITOR_SLACK;
        let down = 1.0 - MONITOR_SLACK;
        self.g_run = self.g_run.max(info.raw_norm);
        let c_alpha = self.c_alpha();
        let growth = 1.0 + 2.0 * c_alpha;
        let mut v = Violations {
            gate_range: info.alphas.iter().any(|&a| !(0.0..=c_alpha).contains(&a)),
            boosted_norm: info.boosted_norm > growth * self.g_run * up,
            ..Violations::default()
        };
        if let Some(p) = info.precond {
            let c0 = 1.0 / (growth * self.g_run + self.delta);
            let elementwise = 1.0 / (p.g_run + self.delta);
            v.preconditioner =
                p.d_min < c0 * down || p.d_min < elementwise * down || p.d_max > up / self.delta;
        }
        let bound = lr * growth * self.g_run / self.delta + lr * weight_decay * theta_norm;
        v.displacement = info.step_norm > bound * up;

        self.counts.gate_range += v.gate_range as usize;
        self.counts.boosted_norm += v.boosted_norm as usize;
        self.counts.preconditioner += v.preconditioner as usize;
        self.counts.displacement += v.displacement as usize;
        v
    }
}
