//! Evaluation reports and their CSV renderings.
//!
//! Rendering is deterministic: fixed column order, `{:.6}` numbers, empty
//! fields for metrics that do not apply.

use std::io::Write;

use serde::Serialize;

use super::experiment::{ExperimentConfig, GridCell, Method};
use crate::error::Result;
use crate::playlog::ContextSegment;
use crate::ratings::RatingVariant;

pub const CSV_HEADER: &str =
    "method,context,variant,lambda,k,N,mae,rmse,nmae,auc,ndcg,map,prec5,prec10,prec15,fallback_count,skipped_users";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Skipped {
    pub metric: String,
    pub user: String,
    pub reason: String,
}

impl Skipped {
    pub fn new(metric: &str, user: &str, reason: &str) -> Self {
        Skipped {
            metric: metric.into(),
            user: user.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub method: Method,
    pub context: ContextSegment,
    pub variant: RatingVariant,
    /// Effective decay rate of the ratings; 0 for plain ratings.
    pub lambda: f64,
    pub k: usize,
    pub n: usize,
    pub mae: Option<f64>,
    pub rmse: Option<f64>,
    pub nmae: Option<f64>,
    pub auc: Option<f64>,
    pub ndcg: Option<f64>,
    pub map: Option<f64>,
    pub prec5: Option<f64>,
    pub prec10: Option<f64>,
    pub prec15: Option<f64>,
    pub fallback_count: usize,
    pub predictions: usize,
    pub evaluated_users: usize,
    pub skipped: Vec<Skipped>,
}

impl EvalReport {
    pub(crate) fn new(
        method: Method,
        context: ContextSegment,
        variant: RatingVariant,
        lambda: f64,
        cfg: &ExperimentConfig,
    ) -> Self {
        EvalReport {
            method,
            context,
            variant,
            lambda,
            k: cfg.neighbors.k,
            n: cfg.top_n,
            mae: None,
            rmse: None,
            nmae: None,
            auc: None,
            ndcg: None,
            map: None,
            prec5: None,
            prec10: None,
            prec15: None,
            fallback_count: 0,
            predictions: 0,
            evaluated_users: 0,
            skipped: Vec::new(),
        }
    }

    /// Metric name and value for every metric that was computed.
    pub fn metrics(&self) -> Vec<(&'static str, f64)> {
        [
            ("mae", self.mae),
            ("rmse", self.rmse),
            ("nmae", self.nmae),
            ("auc", self.auc),
            ("ndcg", self.ndcg),
            ("map", self.map),
            ("prec5", self.prec5),
            ("prec10", self.prec10),
            ("prec15", self.prec15),
        ]
        .into_iter()
        .filter_map(|(name, v)| v.map(|v| (name, v)))
        .collect()
    }

    fn distinct_skipped_users(&self) -> usize {
        let mut users: Vec<&str> = self.skipped.iter().map(|s| s.user.as_str()).collect();
        users.sort_unstable();
        users.dedup();
        users.len()
    }

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        format!(
            "{},{},{},{:.6},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.method,
            self.context,
            self.variant,
            self.lambda,
            self.k,
            self.n,
            opt(self.mae),
            opt(self.rmse),
            opt(self.nmae),
            opt(self.auc),
            opt(self.ndcg),
            opt(self.map),
            opt(self.prec5),
            opt(self.prec10),
            opt(self.prec15),
            self.fallback_count,
            self.distinct_skipped_users()
        )
    }
}

fn cell_key(method: Method, context: ContextSegment, variant: RatingVariant) -> String {
    format!("method={method} context={context} variant={variant}")
}

/// Header, one row per successful cell, then `#` footer lines listing failed
/// cells and skipped users. Failed cells get a row with empty metrics.
pub fn write_cells_csv<W: Write>(mut out: W, cells: &[&GridCell], cfg: &ExperimentConfig) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for cell in cells {
        match &cell.outcome {
            Ok(r) => writeln!(out, "{}", r.csv_row())?,
            Err(_) => {
                let lambda = match cell.variant {
                    RatingVariant::Plain => 0.0,
                    RatingVariant::Decay => cfg.decay.lambda,
                };
                let failed = EvalReport::new(cell.method, cell.context, cell.variant, lambda, cfg);
                writeln!(out, "{}", failed.csv_row())?;
            }
        }
    }
    for cell in cells {
        let key = cell_key(cell.method, cell.context, cell.variant);
        match &cell.outcome {
            Err(e) => writeln!(out, "# failed {key} error={e}")?,
            Ok(r) => write_skipped(&mut out, &key, r)?,
        }
    }
    Ok(())
}

pub fn write_reports_csv<W: Write>(mut out: W, reports: &[EvalReport]) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in reports {
        writeln!(out, "{}", r.csv_row())?;
    }
    for r in reports {
        write_skipped(&mut out, &cell_key(r.method, r.context, r.variant), r)?;
    }
    Ok(())
}

fn write_skipped<W: Write>(out: &mut W, key: &str, r: &EvalReport) -> Result<()> {
    for s in &r.skipped {
        writeln!(
            out,
            "# skipped {key} metric={} user={} reason={}",
            s.metric, s.user, s.reason
        )?;
    }
    Ok(())
}

/// Long format for plotting: `metric,value,method,context,variant`.
pub fn write_plot_csv<'a, W: Write>(mut out: W, reports: impl IntoIterator<Item = &'a EvalReport>) -> Result<()> {
    writeln!(out, "metric,value,method,context,variant")?;
    for r in reports {
        for (name, v) in r.metrics() {
            writeln!(out, "{name},{v:.6},{},{},{}", r.method, r.context, r.variant)?;
        }
    }
    Ok(())
}
