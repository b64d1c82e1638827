//! Training loop, learning-rate schedule, time marching and the secant
//! diagnostics.

mod diagnostics;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use diagnostics::{
    estimate_tau, landscape_directions, landscape_project, secant_error_ratio, LandscapeConfig,
    LandscapeGrid, RATIO_GUARD,
};

use crate::container::Container;
use crate::mathcore::{Matrix, Rng};
use crate::network::{init_glorot, predict, MlpSpec, ParamSet};
use crate::optim::{LemmaMonitor, OptimConfig, Optimizer, StepInfo, ViolationCounts, Violations};
use crate::pde::{
    linf, pinn_loss_grad, relative_l2, sample_domain, LossOptions, LossParts, Problem, SamplePlan,
    TestSet,
};
use crate::{Error, Result};

/// Loss above which a run is treated as diverged.
pub const DIVERGENCE_LOSS: f64 = 1e12;
/// Floor on `‖s‖` for the trainer's own curvature column.
pub const KAPPA_GUARD: f64 = 1e-12;

const STREAM_INIT: u64 = 11;

fn d_warmup() -> f64 {
    0.05
}
fn d_final() -> f64 {
    0.01
}

/// Linear warmup to `peak_lr`, then exponential decay to
/// `final_frac · peak_lr` at the last iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub peak_lr: f64,
    #[serde(default = "d_warmup")]
    pub warmup_frac: f64,
    #[serde(default = "d_final")]
    pub final_frac: f64,
}

impl Schedule {
    pub fn new(peak_lr: f64) -> Self {
        Self {
            peak_lr,
            warmup_frac: d_warmup(),
            final_frac: d_final(),
        }
    }

    /// Rate for iteration `k` in `1..=total`.
    pub fn lr(&self, k: usize, total: usize) -> f64 {
        let warm = (self.warmup_frac * total as f64).ceil() as usize;
        if k <= warm {
            return self.peak_lr * k as f64 / warm as f64;
        }
        let span = (total - warm).max(1) as f64;
        self.peak_lr * self.final_frac.powf((k - warm) as f64 / span)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.peak_lr > 0.0)
            || !(0.0..1.0).contains(&self.warmup_frac)
            || !(self.final_frac > 0.0)
        {
            return Err(Error::Config(format!("invalid schedule {self:?}")));
        }
        Ok(())
    }
}

fn d_windows() -> usize {
    1
}
fn d_seeds() -> Vec<u64> {
    vec![0]
}
fn d_eval() -> usize {
    100
}
fn d_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Iterations per time window.
    pub iterations: usize,
    #[serde(default = "d_windows")]
    pub windows: usize,
    pub schedule: Schedule,
    pub optimizer: OptimConfig,
    #[serde(default = "d_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "d_eval")]
    pub eval_every: usize,
    #[serde(default = "d_true")]
    pub record_r: bool,
    #[serde(default)]
    pub loss: LossOptions,
}

impl TrainConfig {
    pub fn new(iterations: usize, peak_lr: f64, optimizer: OptimConfig) -> Self {
        Self {
            iterations,
            windows: 1,
            schedule: Schedule::new(peak_lr),
            optimizer,
            seeds: d_seeds(),
            eval_every: d_eval(),
            record_r: true,
            loss: LossOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.windows == 0 || self.eval_every == 0 {
            return Err(Error::Config(
                "iterations, windows and eval_every must be >= 1".into(),
            ));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        self.schedule.validate()?;
        self.optimizer.validate()
    }
}

/// One iteration of the metrics history.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsRow {
    /// Global iteration, starting at 1.
    pub iter: usize,
    pub window: usize,
    pub loss: LossParts,
    /// Secant curvature from the raw gradient, from the second iteration of
    /// each window on.
    pub kappa: Option<f64>,
    /// Mean gain applied by the wrapper.
    pub alpha: Option<f64>,
    pub grad_norm: f64,
    pub boosted_norm: f64,
    pub step_norm: f64,
    pub r: Option<f64>,
    /// Per output component, filled on evaluation iterations.
    pub rel_l2: Vec<f64>,
    pub linf: Vec<f64>,
    pub flags: Vec<&'static str>,
}

impl MetricsRow {
    pub fn header(components: &[&str]) -> Vec<String> {
        let mut h: Vec<String> = [
            "iter",
            "window",
            "loss",
            "loss_f",
            "loss_b",
            "loss_i",
            "kappa",
            "alpha",
            "grad_norm",
            "boosted_norm",
            "step_norm",
            "R",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        h.extend(components.iter().map(|c| format!("rel_l2_{c}")));
        h.extend(components.iter().map(|c| format!("linf_{c}")));
        h.push("flags".into());
        h
    }

    pub fn record(&self, components: usize) -> Vec<String> {
        let f = |v: f64| format!("{v:e}");
        let o = |v: Option<f64>| v.map(f).unwrap_or_default();
        let mut r = vec![
            self.iter.to_string(),
            self.window.to_string(),
            f(self.loss.total),
            f(self.loss.f),
            f(self.loss.b),
            f(self.loss.i),
            o(self.kappa),
            o(self.alpha),
            f(self.grad_norm),
            f(self.boosted_norm),
            f(self.step_norm),
            o(self.r),
        ];
        for vals in [&self.rel_l2, &self.linf] {
            for c in 0..components {
                r.push(vals.get(c).map(|v| f(*v)).unwrap_or_default());
            }
        }
        r.push(self.flags.join("|"));
        r
    }
}

/// Metrics CSV writer.
pub struct MetricsWriter {
    inner: csv::Writer<std::fs::File>,
    components: usize,
}

impl MetricsWriter {
    pub fn create(path: &Path, components: &[&str]) -> Result<Self> {
        let mut inner = csv::Writer::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
        inner
            .write_record(MetricsRow::header(components))
            .map_err(|e| Error::Format(e.to_string()))?;
        Ok(Self {
            inner,
            components: components.len(),
        })
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<()> {
        self.inner
            .write_record(row.record(self.components))
            .map_err(|e| Error::Format(e.to_string()))
    }

    pub fn flush(&mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

/// Hooks for streaming output during a run.
pub trait Observer {
    /// Called once a row is final (the secant ratio lags one iteration).
    fn row(&mut self, _row: &MetricsRow) -> Result<()> {
        Ok(())
    }
    fn window_end(&mut self, _window: usize, _params: &ParamSet, _opt: &Optimizer) -> Result<()> {
        Ok(())
    }
}

impl Observer for () {}

#[derive(Clone, Debug, PartialEq)]
pub enum RunStatus {
    Completed,
    Diverged {
        window: usize,
        iter: usize,
        loss: f64,
    },
}

/// Relative L² and L∞ per output component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub rel_l2: Vec<f64>,
    pub linf: Vec<f64>,
}

/// Scores `pred` against a test set, column by column.
pub fn evaluate(pred: &Matrix, exact: &Matrix) -> Result<EvalMetrics> {
    let mut m = EvalMetrics {
        rel_l2: Vec::new(),
        linf: Vec::new(),
    };
    for c in 0..exact.cols() {
        let (p, e) = (pred.column(c).into_vec(), exact.column(c).into_vec());
        m.rel_l2.push(relative_l2(&p, &e)?);
        m.linf.push(linf(&p, &e)?);
    }
    Ok(m)
}

/// Outcome of optimizing one window.
pub struct WindowRun {
    pub params: ParamSet,
    pub optimizer: Optimizer,
    pub violations: ViolationCounts,
    pub status: RunStatus,
}

fn flags_of(v: &Violations, info: &StepInfo) -> Vec<&'static str> {
    let mut f = Vec::new();
    if v.gate_range {
        f.push("gate-range");
    }
    if v.boosted_norm {
        f.push("boosted-norm");
    }
    if v.preconditioner {
        f.push("preconditioner");
    }
    if v.displacement {
        f.push("displacement");
    }
    if info.guarded {
        f.push("s-guard");
    }
    if info.eig_fallback {
        f.push("eig-fallback");
    }
    f
}

/// Runs `cfg.iterations` optimizer steps on `objective` from `params`.
///
/// `iter_offset` shifts the global iteration count; `eval` is called with
/// the current parameters on the first and last iteration and every
/// `eval_every` in between.
#[allow(clippy::too_many_arguments)]
pub fn optimize(
    mut params: ParamSet,
    cfg: &TrainConfig,
    window: usize,
    iter_offset: usize,
    objective: &mut dyn FnMut(usize, &ParamSet) -> Result<(LossParts, ParamSet)>,
    eval: &mut dyn FnMut(&ParamSet) -> Result<Option<EvalMetrics>>,
    history: &mut Vec<MetricsRow>,
    observer: &mut dyn Observer,
) -> Result<WindowRun> {
    let mut opt = Optimizer::new(&cfg.optimizer)?;
    let mut monitor = LemmaMonitor::new(opt.alpha_base(), cfg.optimizer.delta);
    let wd = cfg.optimizer.weight_decay;
    let n = cfg.iterations;
    // θ_{k−1}, g_{k−1}, and (s_{k−1}, y_{k−1}) for the lagged ratio.
    let mut prev: Option<(ParamSet, ParamSet)> = None;
    let mut prev_pair: Option<(ParamSet, ParamSet)> = None;
    let mut pending: Option<MetricsRow> = None;
    let mut status = RunStatus::Completed;

    for k in 1..=n {
        let iter = iter_offset + k;
        let loss_grad = objective(k, &params);
        let (loss, g) = match loss_grad {
            Ok((l, g)) if l.total.is_finite() && l.total <= DIVERGENCE_LOSS => (l, g),
            Ok((l, _)) => {
                status = RunStatus::Diverged {
                    window,
                    iter,
                    loss: l.total,
                };
                break;
            }
            Err(Error::NonFinite { .. }) => {
                status = RunStatus::Diverged {
                    window,
                    iter,
                    loss: f64::NAN,
                };
                break;
            }
            Err(e) => return Err(e),
        };

        let mut row = MetricsRow {
            iter,
            window,
            loss,
            ..MetricsRow::default()
        };
        let mut pair = None;
        if let Some((theta_prev, g_prev)) = &prev {
            let s = params.sub(theta_prev);
            let y = g.sub(g_prev);
            row.kappa = Some(s.dot(&y) / s.norm_sq().max(KAPPA_GUARD * KAPPA_GUARD));
            if let (Some(last), Some((s_prev, y_prev))) = (pending.as_mut(), prev_pair.take()) {
                if cfg.record_r {
                    let (tau, tau_flag) = estimate_tau(&s, &s_prev)?;
                    let (r, guarded) = secant_error_ratio(&g, g_prev, &y_prev, tau)?;
                    last.r = Some(r);
                    if guarded || tau_flag {
                        last.flags.push("r-unreliable");
                    }
                }
            }
            pair = Some((s, y));
        }
        if let Some(last) = pending.take() {
            observer.row(&last)?;
            history.push(last);
        }
        if k == 1 || k % cfg.eval_every == 0 || k == n {
            if let Some(m) = eval(&params)? {
                row.rel_l2 = m.rel_l2;
                row.linf = m.linf;
            }
        }

        let theta_before = params.clone();
        let lr = cfg.schedule.lr(k, n);
        let info = opt.step(&mut params, &g, lr)?;
        let v = monitor.observe(&info, lr, wd, theta_before.norm());
        row.alpha = info.mean_alpha();
        row.grad_norm = info.raw_norm;
        row.boosted_norm = info.boosted_norm;
        row.step_norm = info.step_norm;
        row.flags = flags_of(&v, &info);
        pending = Some(row);
        prev = Some((theta_before, g));
        prev_pair = pair;
    }
    if let Some(last) = pending.take() {
        observer.row(&last)?;
        history.push(last);
    }
    observer.window_end(window, &params, &opt)?;
    Ok(WindowRun {
        params,
        optimizer: opt,
        violations: monitor.counts(),
        status,
    })
}

/// Everything a PINN run produces.
pub struct RunResult {
    /// Final parameters of each completed window.
    pub window_params: Vec<ParamSet>,
    pub history: Vec<MetricsRow>,
    pub violations: ViolationCounts,
    pub status: RunStatus,
    /// Stitched prediction scored on the full test set.
    pub final_metrics: Option<EvalMetrics>,
    /// Initial-condition targets used by each window.
    pub ic_targets: Vec<Matrix>,
    /// Initial-condition points of each window.
    pub ic_points: Vec<Matrix>,
}

impl RunResult {
    pub fn final_params(&self) -> &ParamSet {
        self.window_params.last().expect("at least one window")
    }
}

/// Index of the window containing time `t`.
fn window_of(t: f64, t0: f64, width: f64, windows: usize) -> usize {
    (((t - t0) / width).floor().max(0.0) as usize).min(windows - 1)
}

/// Evaluates per-window parameters on the points of their windows.
pub fn stitched_prediction(
    spec: &MlpSpec,
    window_params: &[ParamSet],
    problem: &Problem,
    windows: usize,
    x: &Matrix,
) -> Result<Matrix> {
    let (t0, t1) = problem.t_range;
    let width = (t1 - t0) / windows as f64;
    let mut out = Matrix::zeros(x.rows(), problem.n_outputs());
    for (w, params) in window_params.iter().enumerate() {
        let rows: Vec<usize> = (0..x.rows())
            .filter(|&r| window_of(x.get(r, problem.dim), t0, width, windows) == w)
            .collect();
        if rows.is_empty() {
            continue;
        }
        let sub = Matrix::from_fn(rows.len(), x.cols(), |i, c| x.get(rows[i], c));
        let pred = predict(spec, params, &sub)?;
        for (i, &r) in rows.iter().enumerate() {
            for c in 0..pred.cols() {
                out.set(r, c, pred.get(i, c));
            }
        }
    }
    Ok(out)
}

/// Trains a PINN with `cfg.windows` time windows (one window is plain
/// training).
///
/// Each window samples its own points in its time slab, takes its initial
/// targets from the previous window's network at the shared boundary time,
/// warm-starts the parameters and starts a fresh optimizer.
pub fn train(
    spec: &MlpSpec,
    problem: &Problem,
    plan: &SamplePlan,
    cfg: &TrainConfig,
    seed: u64,
    test: Option<&TestSet>,
    observer: &mut dyn Observer,
) -> Result<RunResult> {
    cfg.validate()?;
    spec.validate()?;
    if spec.input_dim != problem.input_dim() || spec.output_dim != problem.n_outputs() {
        return Err(Error::Config(
            "network shape does not match the problem".into(),
        ));
    }
    let mut params = init_glorot(spec, &mut Rng::new(seed).split(STREAM_INIT));
    let mut rng = plan.train_rng(seed);
    let (t0, t1) = problem.t_range;
    let width = (t1 - t0) / cfg.windows as f64;
    let mut result = RunResult {
        window_params: Vec::new(),
        history: Vec::new(),
        violations: ViolationCounts::default(),
        status: RunStatus::Completed,
        final_metrics: None,
        ic_targets: Vec::new(),
        ic_points: Vec::new(),
    };
    for w in 0..cfg.windows {
        let pw = problem.window(t0 + w as f64 * width, t0 + (w + 1) as f64 * width);
        let mut samples = sample_domain(&pw, plan, &mut rng);
        if w > 0 {
            samples.initial_target = predict(spec, &params, &samples.initial)?;
        }
        result.ic_points.push(samples.initial.clone());
        result.ic_targets.push(samples.initial_target.clone());
        let window_test = test.map(|ts| {
            let rows: Vec<usize> = (0..ts.x.rows())
                .filter(|&r| window_of(ts.x.get(r, pw.dim), t0, width, cfg.windows) == w)
                .collect();
            TestSet {
                x: Matrix::from_fn(rows.len(), ts.x.cols(), |i, c| ts.x.get(rows[i], c)),
                exact: Matrix::from_fn(rows.len(), ts.exact.cols(), |i, c| {
                    ts.exact.get(rows[i], c)
                }),
            }
        });
        let mut objective = |k: usize, theta: &ParamSet| {
            if plan.resample_each_iter && k > 1 {
                let fresh = sample_domain(
                    &pw,
                    &SamplePlan {
                        n_b: 0,
                        n_0: 0,
                        ..plan.clone()
                    },
                    &mut rng,
                );
                samples.interior = fresh.interior;
            }
            pinn_loss_grad(spec, theta, &pw, &samples, &cfg.loss)
        };
        let mut eval = |theta: &ParamSet| -> Result<Option<EvalMetrics>> {
            match &window_test {
                Some(ts) if ts.x.rows() > 0 => {
                    Ok(Some(evaluate(&predict(spec, theta, &ts.x)?, &ts.exact)?))
                }
                _ => Ok(None),
            }
        };
        let run = optimize(
            params,
            cfg,
            w,
            w * cfg.iterations,
            &mut objective,
            &mut eval,
            &mut result.history,
            observer,
        )?;
        result.violations.add(&run.violations);
        params = run.params;
        result.window_params.push(params.clone());
        if run.status != RunStatus::Completed {
            result.status = run.status;
            return Ok(result);
        }
    }
    if let Some(ts) = test {
        let pred = stitched_prediction(spec, &result.window_params, problem, cfg.windows, &ts.x)?;
        result.final_metrics = Some(evaluate(&pred, &ts.exact)?);
    }
    Ok(result)
}

/// Sequential training over `cfg.windows` time windows; see [`train`].
pub fn time_march(
    spec: &MlpSpec,
    problem: &Problem,
    plan: &SamplePlan,
    cfg: &TrainConfig,
    test: Option<&TestSet>,
) -> Result<RunResult> {
    let seed = *cfg
        .seeds
        .first()
        .ok_or_else(|| Error::Config("no seed".into()))?;
    train(spec, problem, plan, cfg, seed, test, &mut ())
}

/// Parameters and optimizer state at a window boundary.
pub fn checkpoint(spec: &MlpSpec, params: &ParamSet, opt: &Optimizer, window: usize) -> Container {
    let mut c = params.to_container(spec);
    if let serde_json::Value::Object(m) = &mut c.meta {
        m.insert("window".into(), window.into());
    }
    opt.save_state(&mut c);
    c
}

/// Writes `rows` as a metrics CSV.
pub fn write_metrics(path: &Path, components: &[&str], rows: &[MetricsRow]) -> Result<()> {
    let mut w = MetricsWriter::create(path, components)?;
    for r in rows {
        w.write(r)?;
    }
    w.flush()
}

/// Writes a JSON value with a trailing newline.
pub fn write_json(path: &Path, v: &serde_json::Value) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, v).map_err(|e| Error::Format(e.to_string()))?;
    writeln!(f)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::{BaseKind, CaConfig};
    use crate::pde::ProblemId;

    #[test]
    fn schedule_shape() {
        let s = Schedule::new(1e-2);
        assert!((s.lr(1, 100) - 2e-3).abs() < 1e-15);
        assert_eq!(s.lr(5, 100), 1e-2);
        assert!((s.lr(100, 100) - 1e-4).abs() < 1e-15);
        assert!(s.lr(50, 100) < s.lr(49, 100));
    }

    fn quadratic_objective(
        target: Vec<f64>,
    ) -> impl FnMut(usize, &ParamSet) -> Result<(LossParts, ParamSet)> {
        move |_, theta: &ParamSet| {
            let t = ParamSet::from_vector(&target);
            let diff = theta.sub(&t);
            let l = diff.norm_sq();
            Ok((
                LossParts {
                    total: l,
                    f: l,
                    b: 0.0,
                    i: 0.0,
                },
                diff.scaled(2.0),
            ))
        }
    }

    #[test]
    fn convex_quadratic_converges() {
        let target = vec![1.0, -2.0, 0.5, 3.0];
        let mut cfg = TrainConfig::new(2000, 1e-2, OptimConfig::new(BaseKind::Adamw));
        cfg.schedule = Schedule {
            peak_lr: 1e-2,
            warmup_frac: 0.0,
            final_frac: 1.0,
        };
        let mut obj = quadratic_objective(target.clone());
        let mut hist = Vec::new();
        let run = optimize(
            ParamSet::from_vector(&[0.0; 4]),
            &cfg,
            0,
            0,
            &mut obj,
            &mut |_| Ok(None),
            &mut hist,
            &mut (),
        )
        .unwrap();
        let (_, g) = obj(0, &run.params).unwrap();
        assert!(g.norm() < 1e-3, "final gradient norm {}", g.norm());
        assert_eq!(hist.len(), 2000);
        assert_eq!(run.violations.total(), 0);
        assert!(hist[0].kappa.is_none() && hist[1].kappa.is_some());
        assert!(
            hist[0].r.is_none()
                && hist[1].r.is_some()
                && hist[1998].r.is_some()
                && hist[1999].r.is_none()
        );
    }

    #[test]
    fn single_iteration_is_one_step() {
        let cfg = TrainConfig::new(1, 0.1, OptimConfig::new(BaseKind::Adamw));
        let start = ParamSet::from_vector(&[0.0, 0.0]);
        let mut hist = Vec::new();
        let run = optimize(
            start.clone(),
            &cfg,
            0,
            0,
            &mut quadratic_objective(vec![1.0, 1.0]),
            &mut |_| Ok(None),
            &mut hist,
            &mut (),
        )
        .unwrap();
        let mut opt = Optimizer::new(&cfg.optimizer).unwrap();
        let mut manual = start.clone();
        let g = ParamSet::from_vector(&[-2.0, -2.0]);
        opt.step(&mut manual, &g, cfg.schedule.lr(1, 1)).unwrap();
        assert_eq!(run.params, manual);
        assert_eq!(hist.len(), 1);
    }

    #[test]
    fn divergence_is_reported_with_the_iteration() {
        let cfg = TrainConfig::new(10, 0.1, OptimConfig::new(BaseKind::Adamw));
        let mut obj = |k: usize, t: &ParamSet| {
            let l = if k == 4 { 1e13 } else { 1.0 };
            Ok((
                LossParts {
                    total: l,
                    ..LossParts::default()
                },
                t.zeros_like(),
            ))
        };
        let mut hist = Vec::new();
        let run = optimize(
            ParamSet::from_vector(&[1.0]),
            &cfg,
            2,
            20,
            &mut obj,
            &mut |_| Ok(None),
            &mut hist,
            &mut (),
        )
        .unwrap();
        assert_eq!(
            run.status,
            RunStatus::Diverged {
                window: 2,
                iter: 24,
                loss: 1e13
            }
        );
        assert_eq!(hist.len(), 3);
    }

    #[test]
    fn zero_gain_matches_the_base_run_bitwise() {
        let problem = Problem::heat(2);
        let spec = problem.mlp_spec(8, 2, 0);
        let plan = SamplePlan::new(24, 8, 8);
        let base = TrainConfig::new(30, 5e-3, OptimConfig::new(BaseKind::Adamw));
        let mut ca = base.clone();
        ca.optimizer.ca = Some(CaConfig::with_alpha_base(0.0));
        let a = train(&spec, &problem, &plan, &base, 1, None, &mut ()).unwrap();
        let b = train(&spec, &problem, &plan, &ca, 1, None, &mut ()).unwrap();
        assert_eq!(a.final_params(), b.final_params());
        let la: Vec<f64> = a.history.iter().map(|r| r.loss.total).collect();
        let lb: Vec<f64> = b.history.iter().map(|r| r.loss.total).collect();
        assert_eq!(la, lb);
    }

    #[test]
    fn time_march_hands_off_exactly() {
        let problem = Problem::new(ProblemId::GrayScott).window(0.0, 2.0);
        let spec = problem.mlp_spec(8, 1, 3);
        let plan = SamplePlan::new(32, 0, 16);
        let mut cfg = TrainConfig::new(5, 1e-3, OptimConfig::new(BaseKind::Adamw));
        cfg.windows = 2;
        let run = time_march(&spec, &problem, &plan, &cfg, None).unwrap();
        assert_eq!(run.history.len(), 10);
        assert_eq!(run.history[5].window, 1);
        assert_eq!(run.history[5].iter, 6);
        let ic = &run.ic_points[1];
        assert!((0..ic.rows()).all(|r| ic.get(r, 1) == 1.0));
        let from_first = predict(&spec, &run.window_params[0], ic).unwrap();
        assert_eq!(from_first, run.ic_targets[1]);
        // One window is plain training.
        cfg.windows = 1;
        let single = time_march(&spec, &problem, &plan, &cfg, None).unwrap();
        let plain = train(&spec, &problem, &plan, &cfg, 0, None, &mut ()).unwrap();
        assert_eq!(single.final_params(), plain.final_params());
    }

    #[test]
    fn metrics_rows_have_the_documented_columns() {
        let h = MetricsRow::header(&["u", "v"]);
        assert_eq!(
            h.join(","),
            "iter,window,loss,loss_f,loss_b,loss_i,kappa,alpha,grad_norm,boosted_norm,step_norm,R,\
             rel_l2_u,rel_l2_v,linf_u,linf_v,flags"
        );
        let row = MetricsRow {
            iter: 3,
            flags: vec!["s-guard"],
            ..MetricsRow::default()
        };
        let rec = row.record(2);
        assert_eq!(rec.len(), h.len());
        assert_eq!(rec[6], "");
        assert_eq!(rec[16], "s-guard");
    }
}
