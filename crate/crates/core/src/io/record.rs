//! Run records: everything needed to inspect or replay an inversion.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::ContrastMap;
use crate::inversion::{CostBreakdown, InversionState, StageSeconds};
use crate::io::config::Config;
use crate::io::render::trace_csv;
use crate::linalg::KpMap;
use crate::{Complex64, Error, Result};

pub const RECORD_FORMAT: &str = "scatlab-run/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_seconds: f64,
    pub iteration_seconds: Vec<f64>,
    pub stage_seconds: Vec<StageSeconds>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub format: String,
    /// Config exactly as used, including every override.
    pub config: Config,
    /// Where the measurements came from: a bundle path or `synthetic`.
    pub data_source: String,
    pub initial_cost: CostBreakdown,
    pub initial_lambda: KpMap<Complex64>,
    /// One entry per outer iteration.
    pub cost_history: Vec<CostBreakdown>,
    pub lambda_history: Vec<KpMap<Complex64>>,
    /// Empty without ground truth.
    pub nse_history: Vec<f64>,
    pub nse: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub chi: ContrastMap,
    pub timing: Timing,
}

impl RunRecord {
    pub fn from_state(config: &Config, data_source: &str, state: &InversionState, total_seconds: f64) -> Self {
        let nse_history = state.nse_history.iter().skip(1).copied().collect();
        Self {
            format: RECORD_FORMAT.into(),
            config: config.clone(),
            data_source: data_source.into(),
            initial_cost: state.history[0],
            initial_lambda: state.lambda_history[0].clone(),
            cost_history: state.history[1..].to_vec(),
            lambda_history: state.lambda_history[1..].to_vec(),
            nse_history,
            nse: state.nse_history.last().copied(),
            iterations: state.iteration,
            converged: state.converged,
            chi: state.chi.clone(),
            timing: Timing {
                total_seconds,
                iteration_seconds: state.iteration_seconds.clone(),
                stage_seconds: state.stage_seconds.clone(),
            },
        }
    }

    pub fn trace_csv(&self) -> Result<String> {
        trace_csv(&self.cost_history, &self.lambda_history, &self.nse_history)
    }

    /// Largest relative difference over every numeric result, ignoring
    /// timing. Shape mismatches count as infinite.
    pub fn max_deviation(&self, other: &RunRecord) -> f64 {
        fn rel(a: f64, b: f64) -> f64 {
            if a == b {
                0.0
            } else {
                (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
            }
        }
        fn cost(a: &CostBreakdown, b: &CostBreakdown) -> f64 {
            [
                rel(a.total, b.total),
                rel(a.data_term, b.data_term),
                rel(a.state_term, b.state_term),
                rel(a.calib_term, b.calib_term),
                rel(a.reg_term, b.reg_term),
            ]
            .into_iter()
            .fold(0.0, f64::max)
        }
        fn complex(a: &[Complex64], b: &[Complex64]) -> f64 {
            if a.len() != b.len() {
                return f64::INFINITY;
            }
            let scale = a.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
            a.iter().zip(b).map(|(x, y)| (x - y).norm() / scale).fold(0.0, f64::max)
        }
        if self.cost_history.len() != other.cost_history.len()
            || self.nse_history.len() != other.nse_history.len()
            || self.iterations != other.iterations
            || self.converged != other.converged
        {
            return f64::INFINITY;
        }
        let mut worst = cost(&self.initial_cost, &other.initial_cost);
        worst = worst.max(complex(self.initial_lambda.values(), other.initial_lambda.values()));
        for (a, b) in self.cost_history.iter().zip(&other.cost_history) {
            worst = worst.max(cost(a, b));
        }
        for (a, b) in self.lambda_history.iter().zip(&other.lambda_history) {
            worst = worst.max(complex(a.values(), b.values()));
        }
        for (a, b) in self.nse_history.iter().zip(&other.nse_history) {
            worst = worst.max(rel(*a, *b));
        }
        worst.max(complex(self.chi.values(), other.chi.values()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Data(format!("cannot encode record: {e}")))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let record: RunRecord =
            serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        if record.format != RECORD_FORMAT {
            return Err(Error::Data(format!("unsupported run record format `{}`", record.format)));
        }
        Ok(record)
    }
}
