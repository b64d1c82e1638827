//! AdamW, Muon and SOAP, each optionally wrapped by the secant-gated
//! gradient correction.
//!
//! With the wrapper enabled the base optimizer sees `g̃ = g + α a` instead of
//! `g`, where `a` is an EMA of consecutive gradient differences and
//! `α = α_base (1 + tanh(−κ))` is driven by the secant curvature
//! `κ = ⟨s, y⟩ / ‖s‖²`. Nothing else about the base update changes.

mod adamw;
mod gate;
mod monitor;
mod muon;
mod soap;

use serde::{Deserialize, Serialize};
use serde_json::json;

pub use adamw::{apply_decoupled, AdamHyper, Moments, PrecondStats};
pub use gate::{
    curvature_gate, gate_from_products, CaConfig, CaState, Gate, GateMode, GateReport, Scope,
};
pub use monitor::{LemmaMonitor, ViolationCounts, Violations, MONITOR_SLACK};
pub use muon::{aspect_scale, MuonBuffer};
pub use soap::{SoapBlock, SoapHyper};

use crate::container::Container;
use crate::mathcore::Matrix;
use crate::network::{ParamSet, TensorInfo, TensorKind};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseKind {
    Adamw,
    Muon,
    Soap,
}

impl BaseKind {
    pub fn name(self) -> &'static str {
        match self {
            BaseKind::Adamw => "AdamW",
            BaseKind::Muon => "Muon",
            BaseKind::Soap => "SOAP",
        }
    }
}

fn d_beta1() -> f64 {
    0.9
}
fn d_beta2() -> f64 {
    0.999
}
fn d_delta() -> f64 {
    1e-8
}
fn d_beta_p() -> f64 {
    0.95
}
fn d_freq() -> u64 {
    10
}
fn d_momentum() -> f64 {
    0.95
}
fn d_ns() -> usize {
    5
}
fn d_eig_tol() -> f64 {
    1e-10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimConfig {
    pub kind: BaseKind,
    #[serde(default = "d_beta1")]
    pub beta1: f64,
    #[serde(default = "d_beta2")]
    pub beta2: f64,
    /// Denominator floor δ (SOAP's ε; also the initial diagonal of its
    /// Kronecker factors).
    #[serde(default = "d_delta")]
    pub delta: f64,
    #[serde(default)]
    pub weight_decay: f64,
    /// SOAP factor decay β_P.
    #[serde(default = "d_beta_p")]
    pub beta_p: f64,
    /// SOAP eigenbasis refresh period f.
    #[serde(default = "d_freq")]
    pub precond_freq: u64,
    /// Muon momentum μ.
    #[serde(default = "d_momentum")]
    pub momentum: f64,
    #[serde(default = "d_ns")]
    pub ns_iters: usize,
    #[serde(default = "d_eig_tol")]
    pub eig_tol: f64,
    /// Curvature-aware wrapper; absent for the plain base optimizer.
    #[serde(default)]
    pub ca: Option<CaConfig>,
}

impl OptimConfig {
    pub fn new(kind: BaseKind) -> Self {
        Self {
            kind,
            beta1: d_beta1(),
            beta2: d_beta2(),
            delta: d_delta(),
            weight_decay: 0.0,
            beta_p: d_beta_p(),
            precond_freq: d_freq(),
            momentum: d_momentum(),
            ns_iters: d_ns(),
            eig_tol: d_eig_tol(),
            ca: None,
        }
    }

    pub fn with_ca(mut self, ca: CaConfig) -> Self {
        self.ca = Some(ca);
        self
    }

    pub fn with_weight_decay(mut self, wd: f64) -> Self {
        self.weight_decay = wd;
        self
    }

    /// Fills the kind-dependent CA defaults.
    pub fn resolved(&self) -> Self {
        let mut out = self.clone();
        if let Some(ca) = &mut out.ca {
            ca.beta_a.get_or_insert(match self.kind {
                BaseKind::Muon => self.momentum,
                _ => 0.9,
            });
            ca.scope.get_or_insert(match self.kind {
                BaseKind::Adamw => Scope::Global,
                _ => Scope::PerTensor,
            });
        }
        out
    }

    pub fn display_name(&self) -> String {
        match &self.ca {
            Some(_) => format!("CA-{}", self.kind.name()),
            None => self.kind.name().to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be in [0, 1), got {v}")))
            }
        };
        unit("beta1", self.beta1)?;
        unit("beta2", self.beta2)?;
        unit("beta_p", self.beta_p)?;
        unit("momentum", self.momentum)?;
        if !(self.delta > 0.0) {
            return Err(Error::Config(format!(
                "delta must be positive, got {}",
                self.delta
            )));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("weight_decay must be >= 0".into()));
        }
        if self.precond_freq == 0 || self.ns_iters == 0 {
            return Err(Error::Config(
                "precond_freq and ns_iters must be >= 1".into(),
            ));
        }
        if !(self.eig_tol > 0.0) {
            return Err(Error::Config("eig_tol must be positive".into()));
        }
        if let Some(ca) = &self.ca {
            ca.validate()?;
        }
        Ok(())
    }

    fn adam_hyper(&self) -> AdamHyper {
        AdamHyper {
            beta1: self.beta1,
            beta2: self.beta2,
            delta: self.delta,
            weight_decay: self.weight_decay,
        }
    }

    fn soap_hyper(&self) -> SoapHyper {
        SoapHyper {
            beta_p: self.beta_p,
            freq: self.precond_freq,
            eig_tol: self.eig_tol,
            init_eps: self.delta,
        }
    }
}

/// Everything the trainer records about one optimizer step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepInfo {
    /// Per scope group; empty without the wrapper or on the first step.
    pub kappas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub guarded: bool,
    pub raw_norm: f64,
    pub boosted_norm: f64,
    pub step_norm: f64,
    pub precond: Option<PrecondStats>,
    pub eig_fallback: bool,
}

impl StepInfo {
    /// Mean applied gain, if the wrapper is active past its first step.
    pub fn mean_alpha(&self) -> Option<f64> {
        (!self.alphas.is_empty())
            .then(|| self.alphas.iter().sum::<f64>() / self.alphas.len() as f64)
    }
}

#[derive(Clone, Debug)]
enum Slot {
    Adam(Moments),
    Muon(MuonBuffer),
    Soap(Box<SoapBlock>),
}

/// A base optimizer with optional curvature-aware wrapper.
#[derive(Clone, Debug)]
pub struct Optimizer {
    cfg: OptimConfig,
    step: u64,
    ca: Option<CaState>,
    layout: Option<Vec<TensorInfo>>,
    slots: Vec<Slot>,
}

impl Optimizer {
    pub fn new(cfg: &OptimConfig) -> Result<Self> {
        cfg.validate()?;
        let cfg = cfg.resolved();
        let ca = cfg.ca.as_ref().map(|c| {
            CaState::new(
                c.alpha_base,
                c.beta_a.expect("resolved"),
                c.s_guard,
                c.scope.expect("resolved"),
                c.gate,
            )
        });
        Ok(Self {
            cfg,
            step: 0,
            ca,
            layout: None,
            slots: Vec::new(),
        })
    }

    pub fn config(&self) -> &OptimConfig {
        &self.cfg
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn ca_state(&self) -> Option<&CaState> {
        self.ca.as_ref()
    }

    /// α_base of the wrapper, zero when absent.
    pub fn alpha_base(&self) -> f64 {
        self.cfg.ca.as_ref().map_or(0.0, |c| c.alpha_base)
    }

    fn make_slots(&self, layout: &[TensorInfo]) -> Vec<Slot> {
        layout
            .iter()
            .map(|t| match (self.cfg.kind, t.kind) {
                (BaseKind::Muon, TensorKind::Matrix) => {
                    Slot::Muon(MuonBuffer::zeros(t.rows, t.cols))
                }
                (BaseKind::Soap, TensorKind::Matrix) => {
                    Slot::Soap(Box::new(SoapBlock::new(t.rows, t.cols, self.cfg.delta)))
                }
                _ => Slot::Adam(Moments::zeros(t.rows, t.cols)),
            })
            .collect()
    }

    fn ensure_layout(&mut self, params: &ParamSet) -> Result<()> {
        match &self.layout {
            Some(l) if l.as_slice() == params.layout() => Ok(()),
            Some(_) => Err(Error::State(
                "parameter layout differs from optimizer state".into(),
            )),
            None => {
                self.slots = self.make_slots(params.layout());
                self.layout = Some(params.layout().to_vec());
                Ok(())
            }
        }
    }

    /// One transaction: gate, transform, base update.
    pub fn step(&mut self, params: &mut ParamSet, grad: &ParamSet, lr: f64) -> Result<StepInfo> {
        grad.check_layout(params, "gradient vs parameters")?;
        self.ensure_layout(params)?;
        if !grad.is_finite() {
            return Err(Error::non_finite("optimizer gradient input"));
        }
        let (boosted, report) = match &mut self.ca {
            Some(ca) => ca.transform(grad, params)?,
            None => (grad.clone(), GateReport::default()),
        };
        if !boosted.is_finite() {
            return Err(Error::non_finite("boosted gradient"));
        }
        self.step += 1;
        let k = self.step;
        let adam = self.cfg.adam_hyper();
        let soap = self.cfg.soap_hyper();
        let (mu, ns, wd) = (self.cfg.momentum, self.cfg.ns_iters, self.cfg.weight_decay);

        let before = params.clone();
        let mut precond = None;
        let mut eig_fallback = false;
        for ((slot, theta), g) in self
            .slots
            .iter_mut()
            .zip(params.tensors_mut())
            .zip(boosted.tensors())
        {
            let dir = match slot {
                Slot::Adam(m) => {
                    let (d, stats) = m.direction(g, k, &adam);
                    precond = PrecondStats::merge(precond, Some(stats));
                    d
                }
                Slot::Muon(b) => b.direction(g, mu, ns),
                Slot::Soap(b) => {
                    let (d, stats, failed) = b.direction(g, k, &adam, &soap);
                    precond = PrecondStats::merge(precond, Some(stats));
                    eig_fallback |= failed;
                    d
                }
            };
            apply_decoupled(theta, &dir, lr, wd);
        }
        Ok(StepInfo {
            kappas: report.kappas,
            alphas: report.alphas,
            guarded: report.guarded,
            raw_norm: grad.norm(),
            boosted_norm: boosted.norm(),
            step_norm: params.sub(&before).norm(),
            precond,
            eig_fallback,
        })
    }

    /// Write state into `c` under the `opt.` prefix.
    pub fn save_state(&self, c: &mut Container) {
        let mut g_runs = Vec::new();
        for (i, slot) in self.slots.iter().enumerate() {
            match slot {
                Slot::Adam(m) => {
                    c.push(format!("opt.{i}.m"), m.m.as_slice().to_vec());
                    c.push(format!("opt.{i}.v"), m.v.as_slice().to_vec());
                    g_runs.push(m.g_run);
                }
                Slot::Muon(b) => {
                    c.push(format!("opt.{i}.momentum"), b.momentum.as_slice().to_vec());
                    g_runs.push(0.0);
                }
                Slot::Soap(b) => {
                    for (name, m) in [
                        ("l", &b.l),
                        ("r", &b.r),
                        ("u_l", &b.u_l),
                        ("u_r", &b.u_r),
                        ("m", &b.moments.m),
                        ("v", &b.moments.v),
                    ] {
                        c.push(format!("opt.{i}.{name}"), m.as_slice().to_vec());
                    }
                    g_runs.push(b.moments.g_run);
                }
            }
        }
        let mut ca_meta = serde_json::Value::Null;
        if let Some(ca) = &self.ca {
            for (name, p) in [
                ("prev_grad", &ca.prev_grad),
                ("prev_params", &ca.prev_params),
                ("a", &ca.a),
            ] {
                if let Some(p) = p {
                    c.push(format!("opt.ca.{name}"), p.to_flat());
                }
            }
            ca_meta = json!({
                "step": ca.step,
                "last_kappa": ca.last_kappa,
                "last_alpha": ca.last_alpha,
            });
        }
        if let serde_json::Value::Object(map) = &mut c.meta {
            map.insert(
                "optimizer".into(),
                json!({
                    "config": self.cfg,
                    "step": self.step,
                    "initialized": self.layout.is_some(),
                    "g_run": g_runs,
                    "ca": ca_meta,
                }),
            );
        }
    }

    /// Restore an optimizer saved by [`Optimizer::save_state`] for
    /// parameters with `layout`.
    pub fn load_state(c: &Container, layout: &[TensorInfo]) -> Result<Self> {
        let meta = &c.meta["optimizer"];
        let fmt = |what: &str| Error::Format(format!("optimizer state: {what}"));
        let cfg: OptimConfig =
            serde_json::from_value(meta["config"].clone()).map_err(|e| fmt(&e.to_string()))?;
        let mut opt = Optimizer::new(&cfg)?;
        opt.step = meta["step"].as_u64().ok_or_else(|| fmt("step"))?;
        if !meta["initialized"].as_bool().unwrap_or(false) {
            return Ok(opt);
        }
        opt.layout = Some(layout.to_vec());
        opt.slots = opt.make_slots(layout);
        let g_runs: Vec<f64> =
            serde_json::from_value(meta["g_run"].clone()).map_err(|e| fmt(&e.to_string()))?;
        let load = |name: String, rows: usize, cols: usize| -> Result<Matrix> {
            let data = c.section(&name)?;
            Matrix::from_vec(rows, cols, data.to_vec()).map_err(Error::from)
        };
        for (i, (slot, t)) in opt.slots.iter_mut().zip(layout).enumerate() {
            let g_run = *g_runs.get(i).ok_or_else(|| fmt("g_run"))?;
            match slot {
                Slot::Adam(m) => {
                    m.m = load(format!("opt.{i}.m"), t.rows, t.cols)?;
                    m.v = load(format!("opt.{i}.v"), t.rows, t.cols)?;
                    m.g_run = g_run;
                }
                Slot::Muon(b) => b.momentum = load(format!("opt.{i}.momentum"), t.rows, t.cols)?,
                Slot::Soap(b) => {
                    b.l = load(format!("opt.{i}.l"), t.rows, t.rows)?;
                    b.r = load(format!("opt.{i}.r"), t.cols, t.cols)?;
                    b.u_l = load(format!("opt.{i}.u_l"), t.rows, t.rows)?;
                    b.u_r = load(format!("opt.{i}.u_r"), t.cols, t.cols)?;
                    b.moments.m = load(format!("opt.{i}.m"), t.rows, t.cols)?;
                    b.moments.v = load(format!("opt.{i}.v"), t.rows, t.cols)?;
                    b.moments.g_run = g_run;
                }
            }
        }
        if let Some(ca) = &mut opt.ca {
            let cm = &meta["ca"];
            ca.step = cm["step"].as_u64().ok_or_else(|| fmt("ca.step"))?;
            ca.last_kappa = serde_json::from_value(cm["last_kappa"].clone())
                .map_err(|e| fmt(&e.to_string()))?;
            ca.last_alpha = serde_json::from_value(cm["last_alpha"].clone())
                .map_err(|e| fmt(&e.to_string()))?;
            let restore = |name: &str| -> Result<Option<ParamSet>> {
                match c.section(&format!("opt.ca.{name}")) {
                    Ok(flat) => Ok(Some(ParamSet::from_flat(layout.to_vec(), flat)?)),
                    Err(_) => Ok(None),
                }
            };
            ca.prev_grad = restore("prev_grad")?;
            ca.prev_params = restore("prev_params")?;
            ca.a = restore("a")?;
        }
        Ok(opt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mathcore::Rng;

    fn params(rng: &mut Rng) -> ParamSet {
        ParamSet::from_named(vec![
            (
                "w",
                TensorKind::Matrix,
                Matrix::from_fn(3, 4, |_, _| rng.normal()),
            ),
            (
                "b",
                TensorKind::Vector,
                Matrix::from_fn(1, 3, |_, _| rng.normal()),
            ),
        ])
    }

    /// Gradient of a fixed smooth test loss Σ sin(θ)² + θ⁴/4.
    fn test_grad(p: &ParamSet) -> ParamSet {
        let mut g = p.clone();
        for t in g.tensors_mut() {
            *t = t.map(|x| 2.0 * x.sin() * x.cos() + x * x * x);
        }
        g
    }

    fn run(cfg: &OptimConfig, steps: usize) -> Vec<ParamSet> {
        let mut rng = Rng::new(5);
        let mut p = params(&mut rng);
        let mut opt = Optimizer::new(cfg).unwrap();
        let mut traj = Vec::new();
        for _ in 0..steps {
            let g = test_grad(&p);
            opt.step(&mut p, &g, 0.01).unwrap();
            traj.push(p.clone());
        }
        traj
    }

    #[test]
    fn zero_gain_wrapper_is_bitwise_identity() {
        for kind in [BaseKind::Adamw, BaseKind::Muon, BaseKind::Soap] {
            let base = OptimConfig::new(kind).with_weight_decay(1e-3);
            let ca = base.clone().with_ca(CaConfig::with_alpha_base(0.0));
            assert_eq!(run(&base, 40), run(&ca, 40), "{kind:?}");
        }
    }

    #[test]
    fn muon_scalar_step_is_lr() {
        let mut cfg = OptimConfig::new(BaseKind::Muon);
        cfg.momentum = 0.0;
        let mut opt = Optimizer::new(&cfg).unwrap();
        let mut p = ParamSet::from_named(vec![("w", TensorKind::Matrix, Matrix::scalar(2.0))]);
        let g = ParamSet::from_named(vec![("w", TensorKind::Matrix, Matrix::scalar(5.0))]);
        opt.step(&mut p, &g, 0.1).unwrap();
        assert_eq!(p.tensors()[0].item(), 2.0 - 0.1);
    }

    #[test]
    fn resume_from_saved_state_is_bitwise() {
        for kind in [BaseKind::Adamw, BaseKind::Muon, BaseKind::Soap] {
            let cfg = OptimConfig::new(kind).with_ca(CaConfig::default());
            let mut rng = Rng::new(8);
            let mut p = params(&mut rng);
            let mut opt = Optimizer::new(&cfg).unwrap();
            for _ in 0..13 {
                let g = test_grad(&p);
                opt.step(&mut p, &g, 0.02).unwrap();
            }
            let mut c = Container::new(json!({}));
            opt.save_state(&mut c);
            let c = Container::from_bytes(&c.to_bytes()).unwrap();
            let mut resumed = Optimizer::load_state(&c, p.layout()).unwrap();
            let mut q = p.clone();
            for _ in 0..13 {
                let g = test_grad(&p);
                let a = opt.step(&mut p, &g, 0.02).unwrap();
                let gq = test_grad(&q);
                let b = resumed.step(&mut q, &gq, 0.02).unwrap();
                assert_eq!(a, b);
            }
            assert_eq!(p, q, "{kind:?}");
        }
    }

    #[test]
    fn rejects_non_finite_and_mismatched_input() {
        let mut opt = Optimizer::new(&OptimConfig::new(BaseKind::Adamw)).unwrap();
        let mut p = ParamSet::from_vector(&[1.0]);
        let bad = ParamSet::from_vector(&[f64::NAN]);
        assert!(matches!(
            opt.step(&mut p, &bad, 0.1),
            Err(Error::NonFinite { .. })
        ));
        let mut q = ParamSet::from_vector(&[1.0, 2.0]);
        opt.step(&mut p, &ParamSet::from_vector(&[1.0]), 0.1)
            .unwrap();
        let g = ParamSet::from_vector(&[1.0, 2.0]);
        assert!(matches!(opt.step(&mut q, &g, 0.1), Err(Error::State(_))));
    }

    #[test]
    fn monitor_is_clean_on_a_run() {
        for kind in [BaseKind::Adamw, BaseKind::Muon, BaseKind::Soap] {
            let cfg = OptimConfig::new(kind)
                .with_weight_decay(1e-2)
                .with_ca(CaConfig {
                    beta_a: Some(0.0),
                    ..CaConfig::default()
                });
            let mut rng = Rng::new(1);
            let mut p = params(&mut rng);
            let mut opt = Optimizer::new(&cfg).unwrap();
            let mut mon = LemmaMonitor::new(opt.alpha_base(), cfg.delta);
            for _ in 0..200 {
                let g = test_grad(&p);
                let theta_norm = p.norm();
                let info = opt.step(&mut p, &g, 0.05).unwrap();
                let v = mon.observe(&info, 0.05, 1e-2, theta_norm);
                assert!(!v.any(), "{kind:?}: {v:?} {info:?}");
            }
        }
    }
}
