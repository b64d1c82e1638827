use std::path::{Path, PathBuf};

use capinn::network::MlpSpec;
use capinn::pde::{Problem, ProblemConfig, SamplePlan};
use capinn::trainer::{LandscapeConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

fn d_out() -> PathBuf {
    PathBuf::from("out")
}
fn d_modes() -> usize {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub hidden_width: usize,
    pub hidden_depth: usize,
    /// Harmonics per periodic axis; ignored by problems without one.
    #[serde(default = "d_modes")]
    pub fourier_modes: usize,
}

/// One experiment: a problem, a network, a sampling plan and a training
/// setup, run once per seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    #[serde(default = "d_out")]
    pub out_dir: PathBuf,
    pub problem: ProblemConfig,
    pub network: NetworkConfig,
    pub samples: SamplePlan,
    pub train: TrainConfig,
    #[serde(default)]
    pub landscape: Option<LandscapeConfig>,
}

/// 1-based line and column of a byte offset.
fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

impl ExperimentConfig {
    pub fn parse(src: &str, origin: &Path) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(src).map_err(|e| {
            let (line, col) = e.span().map_or((0, 0), |s| line_col(src, s.start));
            CliError::Config {
                path: origin.to_path_buf(),
                line,
                col,
                msg: e.message().to_string(),
            }
        })?;
        cfg.validate().map_err(|e| CliError::Config {
            path: origin.to_path_buf(),
            line: 0,
            col: 0,
            msg: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let src = std::fs::read_to_string(path)?;
        Self::parse(&src, path)
    }

    pub fn validate(&self) -> capinn::Result<()> {
        use capinn::Error;
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let name_ok = !self.name.is_empty()
            && self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c));
        if !name_ok || self.name.starts_with('.') {
            return Err(Error::Config(format!(
                "name {:?} must be a plain directory name",
                self.name
            )));
        }
        self.problem()?;
        self.spec()?.validate()?;
        self.train.validate()?;
        if self.samples.n_f == 0 || self.samples.n_0 == 0 {
            return Err(Error::Config("n_f and n_0 must be >= 1".into()));
        }
        if !self.problem()?.periodic() && self.samples.n_b == 0 {
            return Err(Error::Config("this problem needs n_b >= 1".into()));
        }
        if let Some(l) = &self.landscape {
            if l.n < 2 || !(l.extent > 0.0) {
                return Err(Error::Config(
                    "landscape needs n >= 2 and extent > 0".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn problem(&self) -> capinn::Result<Problem> {
        Problem::from_config(&self.problem)
    }

    pub fn spec(&self) -> capinn::Result<MlpSpec> {
        let n = &self.network;
        Ok(self
            .problem()?
            .mlp_spec(n.hidden_width, n.hidden_depth, n.fourier_modes))
    }

    /// Copy with every default written out, so a run directory describes
    /// itself completely.
    pub fn resolved(&self) -> capinn::Result<Self> {
        let p = self.problem()?;
        let mut out = self.clone();
        out.problem = ProblemConfig {
            id: p.id,
            dim: Some(p.dim),
            t_end: Some(p.t_range.1),
            weights: Some(p.weights),
        };
        out.train.optimizer = self.train.optimizer.resolved();
        Ok(out)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Other(e.to_string()))
    }

    pub fn experiment_dir(&self) -> PathBuf {
        self.out_dir.join(&self.name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
name = "t"

[problem]
id = "heat"
dim = 2

[network]
hidden_width = 8
hidden_depth = 2

[samples]
n_f = 16
n_b = 8
n_0 = 8

[train]
iterations = 3

[train.schedule]
peak_lr = 1e-3

[train.optimizer]
kind = "adamw"

[train.optimizer.ca]
"#;

    #[test]
    fn minimal_config_resolves_and_round_trips() {
        let cfg = ExperimentConfig::parse(MINIMAL, Path::new("x.toml")).unwrap();
        let r = cfg.resolved().unwrap();
        assert_eq!(r.problem.t_end, Some(1.0));
        assert_eq!(r.train.optimizer.ca.as_ref().unwrap().beta_a, Some(0.9));
        let text = r.to_toml().unwrap();
        let back = ExperimentConfig::parse(&text, Path::new("r.toml")).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.resolved().unwrap(), r);
    }

    #[test]
    fn unknown_key_reports_position() {
        let src = MINIMAL.replace("hidden_depth = 2", "hidden_depth = 2\nhiden = 3");
        match ExperimentConfig::parse(&src, Path::new("x.toml")) {
            Err(CliError::Config { line, col, msg, .. }) => {
                assert_eq!((line, col), (12, 1), "{msg}");
                assert!(msg.contains("hiden"));
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn semantic_errors_are_config_errors() {
        let src = MINIMAL.replace("schema_version = 1", "schema_version = 7");
        assert!(matches!(
            ExperimentConfig::parse(&src, Path::new("x.toml")),
            Err(CliError::Config { .. })
        ));
        let src = MINIMAL.replace("n_b = 8", "n_b = 0");
        assert!(ExperimentConfig::parse(&src, Path::new("x.toml")).is_err());
    }

    #[test]
    fn line_col_counts_from_one() {
        assert_eq!(line_col("ab\ncd", 0), (1, 1));
        assert_eq!(line_col("ab\ncd", 4), (2, 2));
    }
}
