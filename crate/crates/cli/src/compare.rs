use std::fmt::Write as _;
use std::path::Path;

use crate::run::Summary;
use crate::CliError;

/// Percentage decrease from `a` to `b`.
pub fn reduction(a: f64, b: f64) -> f64 {
    (1.0 - b / a) * 100.0
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub metric: String,
    pub mean_a: f64,
    pub mean_b: f64,
    pub reduction: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub name_a: String,
    pub name_b: String,
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    /// Rows from two summaries; refuses runs over different seed lists or
    /// different problems.
    pub fn from_summaries(a: &Summary, b: &Summary) -> Result<Self, CliError> {
        let (mut sa, mut sb) = (a.seeds.clone(), b.seeds.clone());
        sa.sort_unstable();
        sb.sort_unstable();
        if sa != sb {
            return Err(CliError::Other(format!(
                "seed lists differ ({:?} vs {:?}); refusing to compare",
                a.seeds, b.seeds
            )));
        }
        if a.problem != b.problem || a.components != b.components {
            return Err(CliError::Other(format!(
                "different problems ({} vs {})",
                a.problem, b.problem
            )));
        }
        for s in [a, b] {
            if s.mean_rel_l2.is_empty() {
                return Err(CliError::Other(format!(
                    "{} has no scored seeds",
                    s.experiment
                )));
            }
        }
        let mut rows = Vec::new();
        for (kind, ma, mb) in [
            ("rel_l2", &a.mean_rel_l2, &b.mean_rel_l2),
            ("linf", &a.mean_linf, &b.mean_linf),
        ] {
            for (c, name) in a.components.iter().enumerate() {
                rows.push(ComparisonRow {
                    metric: format!("{kind}_{name}"),
                    mean_a: ma[c],
                    mean_b: mb[c],
                    reduction: reduction(ma[c], mb[c]),
                });
            }
        }
        Ok(Comparison {
            name_a: a.experiment.clone(),
            name_b: b.experiment.clone(),
            rows,
        })
    }

    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| CliError::Other(e.to_string());
        w.write_record(["metric", &self.name_a, &self.name_b, "reduction_pct"])
            .map_err(err)?;
        for r in &self.rows {
            w.write_record([
                r.metric.clone(),
                format!("{:e}", r.mean_a),
                format!("{:e}", r.mean_b),
                format!("{:.2}", r.reduction),
            ])
            .map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Other(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Aligned text table in the layout of an error-reduction row.
    pub fn to_text(&self) -> String {
        let wa = self.name_a.len().max(10);
        let wb = self.name_b.len().max(10);
        let wm = self
            .rows
            .iter()
            .map(|r| r.metric.len())
            .max()
            .unwrap_or(6)
            .max(6);
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<wm$}  {:>wa$}  {:>wb$}  {:>13}",
            "metric", self.name_a, self.name_b, "reduction (%)"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<wm$}  {:>wa$.3e}  {:>wb$.3e}  {:>13.2}",
                r.metric, r.mean_a, r.mean_b, r.reduction
            );
        }
        s
    }
}

/// Compares the `summary.json` of two experiment directories.
pub fn compare_dirs(a: &Path, b: &Path) -> Result<Comparison, CliError> {
    Comparison::from_summaries(&Summary::load(a)?, &Summary::load(b)?)
}
