use serde::{Deserialize, Serialize};

use crate::network::ParamSet;
use crate::{Error, Result};

/// How secant curvature is aggregated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scope {
    /// One κ over the flat parameter vector.
    Global,
    /// One κ per tensor, Frobenius inner products.
    PerTensor,
}

/// How the correction gain is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateMode {
    /// `α = α_base (1 + tanh(−κ))`.
    Curvature,
    /// `α ≡ α_base`, ignoring κ (ablation).
    Fixed,
}

fn default_alpha_base() -> f64 {
    0.1
}
fn default_s_guard() -> f64 {
    1e-12
}
fn default_gate() -> GateMode {
    GateMode::Curvature
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaConfig {
    #[serde(default = "default_alpha_base")]
    pub alpha_base: f64,
    /// EMA decay of gradient differences; defaults depend on the base
    /// optimizer (0.9, or the momentum μ for Muon).
    #[serde(default)]
    pub beta_a: Option<f64>,
    #[serde(default = "default_s_guard")]
    pub s_guard: f64,
    /// Defaults to global for AdamW, per-tensor for Muon and SOAP.
    #[serde(default)]
    pub scope: Option<Scope>,
    #[serde(default = "default_gate")]
    pub gate: GateMode,
}

impl Default for CaConfig {
    fn default() -> Self {
        Self {
            alpha_base: default_alpha_base(),
            beta_a: None,
            s_guard: default_s_guard(),
            scope: None,
            gate: default_gate(),
        }
    }
}

impl CaConfig {
    pub fn with_alpha_base(alpha_base: f64) -> Self {
        Self {
            alpha_base,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_base >= 0.0 && self.alpha_base.is_finite()) {
            return Err(Error::Config(format!(
                "alpha_base must be >= 0, got {}",
                self.alpha_base
            )));
        }
        if let Some(b) = self.beta_a {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("beta_a must be in [0, 1), got {b}")));
            }
        }
        if !(self.s_guard > 0.0) {
            return Err(Error::Config(format!(
                "s_guard must be positive, got {}",
                self.s_guard
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gate {
    pub kappa: f64,
    pub alpha: f64,
    /// `‖s‖ < s_guard`: the denominator was floored.
    pub guarded: bool,
}

/// Gate from the secant inner products `⟨s,y⟩` and `‖s‖²`.
pub fn gate_from_products(sy: f64, ss: f64, alpha_base: f64, s_guard: f64, mode: GateMode) -> Gate {
    let floor = s_guard * s_guard;
    let guarded = ss < floor;
    let kappa = sy / ss.max(floor);
    let alpha = match mode {
        GateMode::Curvature => alpha_base * (1.0 + (-kappa).tanh()),
        GateMode::Fixed => alpha_base,
    };
    Gate {
        kappa,
        alpha,
        guarded,
    }
}

/// `κ = ⟨s,y⟩ / max(‖s‖², s_guard²)` and `α = α_base (1 + tanh(−κ))`.
pub fn curvature_gate(s: &[f64], y: &[f64], alpha_base: f64, s_guard: f64) -> Result<Gate> {
    if s.len() != y.len() {
        return Err(Error::Dimension(format!(
            "s has {} entries, y has {}",
            s.len(),
            y.len()
        )));
    }
    let sy = s.iter().zip(y).map(|(a, b)| a * b).sum();
    let ss = s.iter().map(|a| a * a).sum();
    Ok(gate_from_products(
        sy,
        ss,
        alpha_base,
        s_guard,
        GateMode::Curvature,
    ))
}

/// Memory of the secant correction.
#[derive(Clone, Debug)]
pub struct CaState {
    pub(crate) alpha_base: f64,
    pub(crate) beta_a: f64,
    pub(crate) s_guard: f64,
    pub(crate) scope: Scope,
    pub(crate) mode: GateMode,
    pub(crate) step: u64,
    pub(crate) prev_grad: Option<ParamSet>,
    pub(crate) prev_params: Option<ParamSet>,
    pub(crate) a: Option<ParamSet>,
    pub(crate) last_kappa: Vec<f64>,
    pub(crate) last_alpha: Vec<f64>,
}

/// What one transform did.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GateReport {
    /// One entry per scope group; empty on the first step.
    pub kappas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub guarded: bool,
}

impl CaState {
    pub fn new(alpha_base: f64, beta_a: f64, s_guard: f64, scope: Scope, mode: GateMode) -> Self {
        Self {
            alpha_base,
            beta_a,
            s_guard,
            scope,
            mode,
            step: 0,
            prev_grad: None,
            prev_params: None,
            a: None,
            last_kappa: Vec::new(),
            last_alpha: Vec::new(),
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn last_kappa(&self) -> &[f64] {
        &self.last_kappa
    }

    pub fn last_alpha(&self) -> &[f64] {
        &self.last_alpha
    }

    /// EMA of gradient differences.
    pub fn a(&self) -> Option<&ParamSet> {
        self.a.as_ref()
    }

    fn groups(&self, params: &ParamSet) -> Vec<Vec<usize>> {
        let n = params.tensors().len();
        match self.scope {
            Scope::Global => vec![(0..n).collect()],
            Scope::PerTensor => (0..n).map(|i| vec![i]).collect(),
        }
    }

    /// Boosted gradient `g̃ = g + α a` for gradient `g` observed at `theta`.
    pub fn transform(&mut self, g: &ParamSet, theta: &ParamSet) -> Result<(ParamSet, GateReport)> {
        g.check_layout(theta, "gradient vs parameters")?;
        if let Some(prev) = &self.prev_grad {
            prev.check_layout(g, "curvature-aware state")?;
        }
        self.step += 1;
        let (Some(prev_g), Some(prev_theta)) = (self.prev_grad.take(), self.prev_params.take())
        else {
            self.a = Some(g.zeros_like());
            self.prev_grad = Some(g.clone());
            self.prev_params = Some(theta.clone());
            self.last_kappa.clear();
            self.last_alpha = vec![0.0; self.groups(g).len()];
            return Ok((g.clone(), GateReport::default()));
        };

        let y = g.sub(&prev_g);
        let s = theta.sub(&prev_theta);
        let groups = self.groups(g);
        let a = self.a.get_or_insert_with(|| g.zeros_like());
        let (ba, bb) = (self.beta_a, 1.0 - self.beta_a);
        *a = a.zip(&y, |ai, yi| ba * ai + bb * yi);

        let mut report = GateReport::default();
        let mut alpha_of = vec![0.0; g.tensors().len()];
        for group in groups {
            let (mut sy, mut ss) = (0.0, 0.0);
            for &i in &group {
                sy += s.tensors()[i].dot(&y.tensors()[i]);
                ss += s.tensors()[i].sum_squares();
            }
            let gate = gate_from_products(sy, ss, self.alpha_base, self.s_guard, self.mode);
            report.kappas.push(gate.kappa);
            report.alphas.push(gate.alpha);
            report.guarded |= gate.guarded;
            for &i in &group {
                alpha_of[i] = gate.alpha;
            }
        }

        let boosted = if self.alpha_base == 0.0 {
            g.clone()
        } else {
            let mut out = g.clone();
            for ((t, ai), alpha) in out.tensors_mut().iter_mut().zip(a.tensors()).zip(&alpha_of) {
                t.axpy(*alpha, ai);
            }
            out
        };
        self.last_kappa = report.kappas.clone();
        self.last_alpha = report.alphas.clone();
        self.prev_grad = Some(g.clone());
        self.prev_params = Some(theta.clone());
        Ok((boosted, report))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn state(alpha_base: f64, beta_a: f64) -> CaState {
        CaState::new(
            alpha_base,
            beta_a,
            1e-12,
            Scope::Global,
            GateMode::Curvature,
        )
    }

    #[test]
    fn textbook_gate_value() {
        let g = curvature_gate(&[1.0, 0.0], &[2.0, 0.0], 0.1, 1e-12).unwrap();
        assert_eq!(g.kappa, 2.0);
        let expected = 0.1 * (1.0 + (-2.0f64).tanh());
        assert_eq!(g.alpha, expected);
        assert!((g.alpha - 0.003597).abs() < 1e-6);
    }

    #[test]
    fn orthogonal_secant_gives_base_gain() {
        let g = curvature_gate(&[1.0, 0.0], &[0.0, 3.0], 0.25, 1e-12).unwrap();
        assert_eq!((g.kappa, g.alpha), (0.0, 0.25));
    }

    #[test]
    fn guard_flags_stalled_iterate() {
        let g = curvature_gate(&[1e-14], &[1.0], 0.1, 1e-12).unwrap();
        assert!(g.guarded);
        assert_eq!(g.kappa, 1e-14 / 1e-24);
        assert!(curvature_gate(&[1.0], &[1.0, 2.0], 0.1, 1e-12).is_err());
    }

    #[test]
    fn first_step_passes_gradient_through() {
        let mut st = state(0.1, 0.9);
        let g = ParamSet::from_vector(&[1.0, 2.0]);
        let (gt, rep) = st
            .transform(&g, &ParamSet::from_vector(&[0.0, 0.0]))
            .unwrap();
        assert_eq!(gt, g);
        assert!(rep.kappas.is_empty());
        assert_eq!(st.last_alpha(), &[0.0]);
    }

    #[test]
    fn two_step_hand_trace() {
        let alpha_base = 0.1;
        let mut st = state(alpha_base, 0.0);
        let theta0 = ParamSet::from_vector(&[1.0, 1.0]);
        let g0 = ParamSet::from_vector(&[0.3, -0.2]);
        st.transform(&g0, &theta0).unwrap();
        let theta1 = ParamSet::from_vector(&[0.9, 1.0]);
        let g1 = ParamSet::from_vector(&[0.35, -0.2]);
        let (gt, rep) = st.transform(&g1, &theta1).unwrap();
        let kappa = (-0.1 * 0.05) / (0.1 * 0.1);
        assert!((rep.kappas[0] - kappa).abs() < 1e-12 && (kappa + 0.5).abs() < 1e-12);
        let alpha = alpha_base * (1.0 + (0.5f64).tanh());
        assert!((rep.alphas[0] - alpha).abs() < 1e-12);
        let a = st.a().unwrap().to_flat();
        assert!((a[0] - 0.05).abs() < 1e-15 && a[1] == 0.0);
        let gt = gt.to_flat();
        assert!((gt[0] - (0.35 + alpha * 0.05)).abs() < 1e-12);
        assert_eq!(gt[1], -0.2);
    }

    #[test]
    fn zero_base_gain_is_identity_but_tracks_a() {
        let mut st = state(0.0, 0.5);
        let mut theta = ParamSet::from_vector(&[1.0, -1.0]);
        for k in 0..5 {
            let g = ParamSet::from_vector(&[0.1 * k as f64, (k * k) as f64]);
            let (gt, rep) = st.transform(&g, &theta).unwrap();
            assert_eq!(gt, g);
            if k > 0 {
                assert_eq!(rep.alphas, vec![0.0]);
            }
            theta.axpy(-0.1, &g);
        }
        assert!(st.a().unwrap().norm() > 0.0);
    }

    #[test]
    fn per_tensor_scope_uses_separate_gains() {
        use crate::mathcore::Matrix;
        use crate::network::TensorKind;
        let mk = |a: f64, b: f64| {
            ParamSet::from_named(vec![
                ("w", TensorKind::Matrix, Matrix::scalar(a)),
                ("b", TensorKind::Vector, Matrix::scalar(b)),
            ])
        };
        let mut st = CaState::new(0.1, 0.0, 1e-12, Scope::PerTensor, GateMode::Curvature);
        st.transform(&mk(0.0, 0.0), &mk(0.0, 0.0)).unwrap();
        // s = (1, 1); y = (2, −2): curvatures +2 and −2.
        let (_, rep) = st.transform(&mk(2.0, -2.0), &mk(1.0, 1.0)).unwrap();
        assert_eq!(rep.kappas, vec![2.0, -2.0]);
        assert!(rep.alphas[0] < 0.1 && rep.alphas[1] > 0.1);
    }

    #[test]
    fn layout_mismatch_is_a_state_error() {
        let mut st = state(0.1, 0.9);
        st.transform(
            &ParamSet::from_vector(&[1.0]),
            &ParamSet::from_vector(&[1.0]),
        )
        .unwrap();
        let err = st
            .transform(
                &ParamSet::from_vector(&[1.0, 2.0]),
                &ParamSet::from_vector(&[1.0, 2.0]),
            )
            .unwrap_err();
        assert!(matches!(err, Error::State(_)));
    }

    proptest! {
        #[test]
        fn gate_range_and_monotonicity(k1 in -50.0f64..50.0, dk in 1e-3f64..10.0, base in 1e-3f64..1.0) {
            let a1 = gate_from_products(k1, 1.0, base, 1e-12, GateMode::Curvature).alpha;
            let a2 = gate_from_products(k1 + dk, 1.0, base, 1e-12, GateMode::Curvature).alpha;
            prop_assert!((0.0..=2.0 * base).contains(&a1));
            prop_assert!(a1 >= a2);
            if k1.abs() < 15.0 && (k1 + dk).abs() < 15.0 {
                prop_assert!(a1 > a2);
                prop_assert!(a1 > 0.0 && a1 < 2.0 * base);
            }
        }
    }
}
