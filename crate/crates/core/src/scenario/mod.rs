//! The five applications assembled as closed loops, plus the experiments run
//! on them.

mod closed_loop;
mod config;
mod experiments;
mod run;

pub use closed_loop::{build_family, ClosedLoop, SYNERGY};
pub use config::{Law, PerturbationSpec, Scenario, ScenarioConfig, Target};
pub use experiments::{
    compare_average, grid_points, p_deviation, sample_p, sweep, verify_gap, AverageRow,
    SweepGrid, SweepPoint, SweepReport, SweepRow,
};
pub use run::{
    arc_hash, arc_metadata, emit_plot_data, run, summarize, write_run, PlotKind, RunRecord,
    Summary,
};

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::hybrid::{ArcIoError, SolveError};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Arc(#[from] ArcIoError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

impl ScenarioError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit code: 2 for configuration and I/O problems, 1 for a
    /// failed run.
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::Solve(SolveError::InvalidConfig(_)) => 2,
            ScenarioError::Solve(_) => 1,
            _ => 2,
        }
    }
}
