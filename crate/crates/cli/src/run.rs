use std::path::{Path, PathBuf};

use capinn::network::{MlpSpec, ParamSet};
use capinn::optim::{Optimizer, ViolationCounts};
use capinn::pde::{pinn_loss, sample_domain, test_set, write_points_csv, Problem};
use capinn::trainer::{
    checkpoint, landscape_directions, landscape_project, train, write_json, LandscapeGrid,
    MetricsRow, MetricsWriter, Observer, RunResult, RunStatus,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::{CliError, ExperimentConfig};

/// Command-line overrides applied on top of a config.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub seeds: Option<Vec<u64>>,
    pub out: Option<PathBuf>,
    /// Seeds run concurrently on this many threads; sequential when unset.
    pub threads: Option<usize>,
}

impl RunOptions {
    fn apply(&self, cfg: &ExperimentConfig) -> Result<ExperimentConfig, CliError> {
        let mut cfg = cfg.clone();
        if let Some(s) = &self.seeds {
            cfg.train.seeds = s.clone();
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        cfg.validate()?;
        Ok(cfg.resolved()?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub status: String,
    /// `(window, iteration, loss)` of a divergence abort.
    #[serde(default)]
    pub diverged_at: Option<(usize, usize, f64)>,
    pub iterations: usize,
    pub final_loss: Option<f64>,
    /// Stitched prediction against the full test set, per component.
    pub rel_l2: Option<Vec<f64>>,
    pub linf: Option<Vec<f64>>,
    pub violations: ViolationCounts,
}

/// Contents of `summary.json` at the experiment root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub experiment: String,
    pub problem: String,
    pub optimizer: String,
    pub components: Vec<String>,
    pub seeds: Vec<u64>,
    pub runs: Vec<SeedSummary>,
    /// Over seeds that completed with a test score; empty otherwise.
    pub mean_rel_l2: Vec<f64>,
    pub best_rel_l2: Vec<f64>,
    pub mean_linf: Vec<f64>,
    pub best_linf: Vec<f64>,
    pub diverged: usize,
    pub violations: ViolationCounts,
}

impl Summary {
    fn build(cfg: &ExperimentConfig, p: &Problem, runs: Vec<SeedSummary>) -> Self {
        let comps = p.n_outputs();
        let scored: Vec<&SeedSummary> = runs
            .iter()
            .filter(|r| r.status == "completed" && r.rel_l2.is_some())
            .collect();
        let agg = |pick: &dyn Fn(&SeedSummary) -> &Vec<f64>| {
            let mut mean = Vec::new();
            let mut best = Vec::new();
            if !scored.is_empty() {
                for c in 0..comps {
                    let v: Vec<f64> = scored.iter().map(|r| pick(r)[c]).collect();
                    mean.push(v.iter().sum::<f64>() / v.len() as f64);
                    best.push(v.iter().cloned().fold(f64::INFINITY, f64::min));
                }
            }
            (mean, best)
        };
        let (mean_rel_l2, best_rel_l2) = agg(&|r| r.rel_l2.as_ref().unwrap());
        let (mean_linf, best_linf) = agg(&|r| r.linf.as_ref().unwrap());
        let mut violations = ViolationCounts::default();
        for r in &runs {
            violations.add(&r.violations);
        }
        Summary {
            experiment: cfg.name.clone(),
            problem: p.name().to_string(),
            optimizer: cfg.train.optimizer.display_name(),
            components: p.output_names().iter().map(|s| s.to_string()).collect(),
            seeds: cfg.train.seeds.clone(),
            diverged: runs.iter().filter(|r| r.status == "diverged").count(),
            runs,
            mean_rel_l2,
            best_rel_l2,
            mean_linf,
            best_linf,
            violations,
        }
    }

    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(dir.join("summary.json"))?;
        serde_json::from_str(&text).map_err(|e| CliError::Other(format!("{}: {e}", dir.display())))
    }
}

/// Summary plus the in-memory result of every seed, in seed order.
pub struct ExperimentOutcome {
    pub dir: PathBuf,
    pub summary: Summary,
    pub results: Vec<(u64, RunResult)>,
}

struct SeedObserver<'a> {
    metrics: MetricsWriter,
    dir: &'a Path,
    spec: &'a MlpSpec,
}

impl Observer for SeedObserver<'_> {
    fn row(&mut self, row: &MetricsRow) -> capinn::Result<()> {
        self.metrics.write(row)
    }

    fn window_end(
        &mut self,
        window: usize,
        params: &ParamSet,
        opt: &Optimizer,
    ) -> capinn::Result<()> {
        checkpoint(self.spec, params, opt, window)
            .save(self.dir.join(format!("window_{window}.ckpt")))?;
        self.metrics.flush()
    }
}

fn seed_dir(exp: &Path, seed: u64) -> PathBuf {
    exp.join(seed.to_string())
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)?;
    Ok(())
}

/// Runs every seed of `cfg` and writes `out/<name>/<seed>/` plus
/// `out/<name>/summary.json`. A diverged seed is reported in the summary,
/// not as an error.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    opts: &RunOptions,
) -> Result<ExperimentOutcome, CliError> {
    let cfg = opts.apply(cfg)?;
    let p = cfg.problem()?;
    let spec = cfg.spec()?;
    let dir = cfg.experiment_dir();
    std::fs::create_dir_all(&dir)?;
    write_text(&dir.join("resolved.toml"), &cfg.to_toml()?)?;
    let test = test_set(&p, &cfg.samples)?;

    let one = |seed: u64| -> Result<(SeedSummary, RunResult), CliError> {
        let sd = seed_dir(&dir, seed);
        std::fs::create_dir_all(&sd)?;
        let mut own = cfg.clone();
        own.train.seeds = vec![seed];
        write_text(&sd.join("resolved.toml"), &own.to_toml()?)?;
        let mut obs = SeedObserver {
            metrics: MetricsWriter::create(&sd.join("metrics.csv"), p.output_names())?,
            dir: &sd,
            spec: &spec,
        };
        let res = train(
            &spec,
            &p,
            &cfg.samples,
            &cfg.train,
            seed,
            test.as_ref(),
            &mut obs,
        );
        obs.metrics.flush()?;
        let res = res?;
        let (status, diverged_at) = match res.status {
            RunStatus::Completed => ("completed", None),
            RunStatus::Diverged { window, iter, loss } => ("diverged", Some((window, iter, loss))),
        };
        let s = SeedSummary {
            seed,
            status: status.into(),
            diverged_at,
            iterations: res.history.len(),
            final_loss: res.history.last().map(|r| r.loss.total),
            rel_l2: res.final_metrics.as_ref().map(|m| m.rel_l2.clone()),
            linf: res.final_metrics.as_ref().map(|m| m.linf.clone()),
            violations: res.violations,
        };
        let v = serde_json::to_value(&s).map_err(|e| CliError::Other(e.to_string()))?;
        write_json(&sd.join("final.json"), &v)?;
        Ok((s, res))
    };

    let seeds = cfg.train.seeds.clone();
    let outcomes: Vec<Result<(SeedSummary, RunResult), CliError>> = match opts.threads {
        Some(n) if n > 1 && seeds.len() > 1 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Other(e.to_string()))?;
            pool.install(|| seeds.par_iter().map(|&s| one(s)).collect())
        }
        _ => seeds.iter().map(|&s| one(s)).collect(),
    };
    let mut runs = Vec::new();
    let mut results = Vec::new();
    for (seed, o) in seeds.iter().zip(outcomes) {
        let (s, r) = o?;
        runs.push(s);
        results.push((*seed, r));
    }
    let summary = Summary::build(&cfg, &p, runs);
    let v = serde_json::to_value(&summary).map_err(|e| CliError::Other(e.to_string()))?;
    write_json(&dir.join("summary.json"), &v)?;
    Ok(ExperimentOutcome {
        dir,
        summary,
        results,
    })
}

pub struct LandscapeOutcome {
    pub dir: PathBuf,
    pub centre: ParamSet,
    /// Full weighted loss.
    pub full: LandscapeGrid,
    /// Same samples and directions with the residual weight set to zero.
    pub data_only: LandscapeGrid,
}

/// Trains the first seed, then projects the full and the data-only loss
/// around the final parameters along the same two directions. Writes
/// `out/<name>/landscape/`.
pub fn run_landscape(
    cfg: &ExperimentConfig,
    opts: &RunOptions,
) -> Result<LandscapeOutcome, CliError> {
    let cfg = opts.apply(cfg)?;
    let lc = cfg
        .landscape
        .clone()
        .ok_or_else(|| capinn::Error::Config("config has no [landscape] section".into()))?;
    if cfg.train.windows != 1 {
        return Err(capinn::Error::Config("landscape needs a single time window".into()).into());
    }
    let p = cfg.problem()?;
    let spec = cfg.spec()?;
    let seed = cfg.train.seeds[0];
    let res = train(&spec, &p, &cfg.samples, &cfg.train, seed, None, &mut ())?;
    if let RunStatus::Diverged { window, iter, loss } = res.status {
        return Err(capinn::Error::Divergence { window, iter, loss }.into());
    }
    let centre = res.final_params().clone();
    // Same draw as the first window of the training run.
    let samples = sample_domain(&p, &cfg.samples, &mut cfg.samples.train_rng(seed));
    let mut data_only = p.clone();
    data_only.weights.f = 0.0;
    let dirs = landscape_directions(&centre, &lc);
    let full = landscape_project(&centre, &dirs, &lc, |t| {
        Ok(pinn_loss(&spec, t, &p, &samples)?.total)
    })?;
    let data = landscape_project(&centre, &dirs, &lc, |t| {
        Ok(pinn_loss(&spec, t, &data_only, &samples)?.total)
    })?;

    let dir = cfg.experiment_dir().join("landscape");
    std::fs::create_dir_all(&dir)?;
    write_text(&dir.join("resolved.toml"), &cfg.to_toml()?)?;
    centre.to_container(&spec).save(dir.join("centre.ckpt"))?;
    full.write(&dir.join("full.txt"))?;
    data.write(&dir.join("data_only.txt"))?;
    write_json(
        &dir.join("landscape.json"),
        &json!({
            "seed": seed,
            "n": lc.n,
            "extent": lc.extent,
            "range_full": full.range(),
            "range_data_only": data.range(),
        }),
    )?;
    Ok(LandscapeOutcome {
        dir,
        centre,
        full,
        data_only: data,
    })
}

/// Writes the first-window training points of every seed and the test set
/// as CSV under `out/<name>/samples/`.
pub fn dump_samples(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<PathBuf, CliError> {
    let cfg = opts.apply(cfg)?;
    let p = cfg.problem()?;
    let (t0, t1) = p.t_range;
    let first = p.window(t0, t0 + (t1 - t0) / cfg.train.windows as f64);
    let dir = cfg.experiment_dir().join("samples");
    for &seed in &cfg.train.seeds {
        let sd = dir.join(seed.to_string());
        std::fs::create_dir_all(&sd)?;
        let s = sample_domain(&first, &cfg.samples, &mut cfg.samples.train_rng(seed));
        write_points_csv(&sd.join("interior.csv"), &p, &s.interior, None)?;
        if s.boundary.rows() > 0 {
            write_points_csv(
                &sd.join("boundary.csv"),
                &p,
                &s.boundary,
                Some(&s.boundary_target),
            )?;
        }
        write_points_csv(
            &sd.join("initial.csv"),
            &p,
            &s.initial,
            Some(&s.initial_target),
        )?;
    }
    if let Some(ts) = test_set(&p, &cfg.samples)? {
        write_points_csv(&dir.join("test.csv"), &p, &ts.x, Some(&ts.exact))?;
    }
    Ok(dir)
}
