//! Orchestration and presentation: run configuration, the model registry,
//! coefficient tables, the combined text report and plot data.

mod config;
mod pipeline;
mod plot;
mod registry;
mod table;

pub use config::{
    DiagnosticOptions, FitSection, OutputSection, PanelOptions, RunConfig, SimulateSection,
    Sources, Window,
};
pub use pipeline::{
    ar1_residuals, build_run_panel, fit_specs, read_panel, run_diagnostics, run_fit, run_ingest,
    run_pipeline, run_report, run_simulate, run_tests, write_fit_outputs, RunOutcome, SpecFit,
    FAILED_MARKER, PANEL_FILE,
};
pub use plot::{emit_plot_data, PRICE_PLOT_FILE, RETURNS_PLOT_FILE};
pub use registry::{family_ids, registry, registry_with, select, validate_registry, SpecEntry};
pub use table::{
    coefficient_file, format_sig6, render_report, sort_by_spec_id, stars, CoefficientRow,
    DiagnosticRow, FitStatus, FitSummary, ReportBundle, SpecOutcome, DIAGNOSTICS_FILE,
    PANEL_SUMMARY_FILE, REPORT_FILE, SUMMARY_FILE,
};

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::diagnostics::DiagnosticError;
use crate::engine::EngineError;
use crate::ingest::IngestError;
use crate::panel::PanelError;
use crate::simulation::SimError;

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ExitStatus {
    Success = 0,
    InputError = 2,
    ConvergenceFailure = 3,
    InvariantViolation = 4,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }

    /// The more serious of two outcomes; invariant violations dominate input
    /// errors, which dominate convergence failures.
    pub fn worst(self, other: ExitStatus) -> ExitStatus {
        let rank = |s: ExitStatus| match s {
            ExitStatus::Success => 0,
            ExitStatus::ConvergenceFailure => 1,
            ExitStatus::InputError => 2,
            ExitStatus::InvariantViolation => 3,
        };
        if rank(other) > rank(self) {
            other
        } else {
            self
        }
    }
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Diagnostic(#[from] DiagnosticError),
    #[error(transparent)]
    Simulation(#[from] SimError),
}

impl ReportError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn csv(path: &Path, e: impl std::fmt::Display) -> Self {
        Self::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }

    pub fn exit_status(&self) -> ExitStatus {
        match self {
            ReportError::Engine(e) => engine_status(e),
            _ => ExitStatus::InputError,
        }
    }
}

pub(crate) fn engine_status(e: &EngineError) -> ExitStatus {
    match e {
        EngineError::NoConvergence { .. } => ExitStatus::ConvergenceFailure,
        EngineError::InvariantViolation(_)
        | EngineError::NonPositiveVariance(_)
        | EngineError::LengthMismatch => ExitStatus::InvariantViolation,
        _ => ExitStatus::InputError,
    }
}
