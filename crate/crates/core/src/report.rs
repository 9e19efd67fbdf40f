//! Solve metrics: per-iteration records emitted as CSV rows
//! `iter,seconds,metric,value`.

use std::io::{self, Write};

/// Metric names are a fixed vocabulary so downstream tooling can rely on
/// them.
pub const METRIC_EXPLOITABILITY: &str = "exploitability";
pub const METRIC_MATCH_MEAN: &str = "match_mean";
pub const METRIC_MATCH_SE: &str = "match_se";
pub const METRIC_LOSS_REGRET: &str = "loss_regret";
pub const METRIC_LOSS_STRATEGY: &str = "loss_strategy";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub iter: u64,
    pub seconds: f64,
    pub metric: String,
    pub value: f64,
}

/// Per-iteration solve records. Iterations are non-decreasing in row order.
#[derive(Debug, Clone, Default)]
pub struct SolveReport {
    pub rows: Vec<MetricRow>,
    pub iterations_completed: u64,
    /// Set when the wall-clock budget stopped the run early.
    pub budget_exceeded: bool,
}

impl SolveReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, iter: u64, seconds: f64, metric: &str, value: f64) {
        debug_assert!(
            self.rows.last().map_or(true, |r| r.iter <= iter),
            "iterations must be non-decreasing"
        );
        self.rows.push(MetricRow {
            iter,
            seconds,
            metric: metric.to_string(),
            value,
        });
    }

    /// Latest value of a metric, if any was recorded.
    pub fn last_value(&self, metric: &str) -> Option<f64> {
        self.rows
            .iter()
            .rev()
            .find(|r| r.metric == metric)
            .map(|r| r.value)
    }

    /// Fixed-format CSV with the `iter,seconds,metric,value` header. The
    /// formatting is deterministic so identical reports serialize to
    /// identical bytes.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "iter,seconds,metric,value")?;
        for row in &self.rows {
            writeln!(
                w,
                "{},{:.6},{},{:.12e}",
                row.iter, row.seconds, row.metric, row.value
            )?;
        }
        Ok(())
    }
}
