//! Tabular records: metrics, selection grid, training logs and curves.
//!
//! Every table starts with `config_hash,seed`; floats use the shortest exact decimal form.

use osp_core::eval::CurvePoint;
use osp_core::select::{Selection, SelectionGrid};
use osp_core::train::TrainLog;
use osp_core::Metrics;
use serde::{Deserialize, Serialize};

use crate::io::Table;

pub const METRICS_COLUMNS: [&str; 11] = [
    "criterion",
    "target",
    "val_coverage",
    "val_error",
    "coverage",
    "error",
    "mu",
    "t",
    "overlap",
    "feasible",
    "n_test",
];

/// The one-per-run result: the selected `(μ*, t*)` and its test behaviour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub config_hash: String,
    pub seed: u64,
    pub criterion: String,
    pub target: f64,
    pub val_coverage: f64,
    pub val_error: f64,
    pub coverage: f64,
    pub error: f64,
    pub mu: f64,
    pub t: f64,
    /// Test mass lying in two or more raw sets `{f_k > t*}`.
    pub overlap: f64,
    pub feasible: bool,
    pub n_test: usize,
}

impl MetricsRecord {
    pub fn new(config_hash: &str, seed: u64, selection: &Selection, test: &Metrics, overlap: f64) -> Self {
        Self {
            config_hash: config_hash.to_string(),
            seed,
            criterion: selection.criterion.name().to_string(),
            target: selection.criterion.target(),
            val_coverage: selection.cell.coverage,
            val_error: selection.cell.error,
            coverage: test.coverage,
            error: test.raw_error,
            mu: selection.cell.mu,
            t: selection.cell.t,
            overlap,
            feasible: selection.feasible,
            n_test: test.n,
        }
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut t = Table::new(&self.config_hash, self.seed, &METRICS_COLUMNS);
        t.row([
            self.criterion.clone(),
            self.target.to_string(),
            self.val_coverage.to_string(),
            self.val_error.to_string(),
            self.coverage.to_string(),
            self.error.to_string(),
            self.mu.to_string(),
            self.t.to_string(),
            self.overlap.to_string(),
            self.feasible.to_string(),
            self.n_test.to_string(),
        ]);
        t.into_bytes()
    }

    /// Reads the single record written by [`MetricsRecord::to_csv`].
    pub fn from_csv(bytes: &[u8]) -> Result<Self, csv::Error> {
        let mut r = csv::Reader::from_reader(bytes);
        match r.deserialize().next() {
            Some(rec) => rec,
            None => Err(csv::Error::from(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                "no metrics row",
            ))),
        }
    }
}

/// One row per `(μ, t)`, `μ`-major.
pub fn grid_table(config_hash: &str, seed: u64, grid: &SelectionGrid) -> Vec<u8> {
    let mut t = Table::new(config_hash, seed, &["mu", "t", "coverage", "error"]);
    for c in &grid.cells {
        t.row([c.mu, c.t, c.coverage, c.error]);
    }
    t.into_bytes()
}

/// One row per epoch; per-class columns are suffixed with the class index.
pub fn log_table(config_hash: &str, seed: u64, mu: f64, log: &TrainLog) -> Vec<u8> {
    let k = log.first().map_or(0, |r| r.constraints.len());
    let mut cols: Vec<String> = ["mu", "epoch", "restricted_sum", "lagrangian"].map(String::from).to_vec();
    for prefix in ["constraint", "lambda", "phi", "absent_positive", "absent_negative"] {
        cols.extend((0..k).map(|i| format!("{prefix}_{i}")));
    }
    let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut t = Table::new(config_hash, seed, &col_refs);
    for r in log {
        let mut row = vec![mu.to_string(), r.epoch.to_string(), r.restricted_sum.to_string(), r.lagrangian.to_string()];
        for v in r.constraints.iter().chain(&r.lambdas).chain(&r.phis) {
            row.push(v.to_string());
        }
        for c in r.absent_positive.iter().chain(&r.absent_negative) {
            row.push(c.to_string());
        }
        t.row(row);
    }
    t.into_bytes()
}

pub fn curve_table(config_hash: &str, seed: u64, points: &[CurvePoint]) -> Vec<u8> {
    let mut t = Table::new(
        config_hash,
        seed,
        &["method", "target_error", "achieved_error", "achieved_coverage", "feasible", "param", "t"],
    );
    for p in points {
        t.row([
            p.method.clone(),
            p.target_error.to_string(),
            p.achieved_error.to_string(),
            p.achieved_coverage.to_string(),
            p.feasible.to_string(),
            p.mu.to_string(),
            p.t.to_string(),
        ]);
    }
    t.into_bytes()
}
