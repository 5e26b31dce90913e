//! Seeded data-generating processes: GARCH(p,q)-X return series, synthetic
//! source files with a known price mechanism, and a Monte Carlo harness.

mod garch;
mod monte_carlo;
mod price_panel;
mod rng;

pub use garch::{simulate_garch, RegressorModel, SimConfig, SimOutput};
pub use monte_carlo::{monte_carlo, monte_carlo_seeds, MonteCarloSummary};
pub use price_panel::{
    fundamental_price, simulate_price_panel, AffineLiquidity, GroundTruth, Manifest, PriceFixture,
    PriceNoise, PricePanelConfig, VarianceLoadings, CHAIN_FILE, DAILY_FILE, MANIFEST_FILE,
    TRADES_FILE,
};
pub use rng::{NormalStream, RNG_ALGORITHM};

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::ingest::IngestError;
use crate::panel::PanelError;
use crate::series::SeriesError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("at least two replications are required, got {0}")]
    TooFewReplications(usize),
    #[error("all {0} replications failed")]
    AllReplicationsFailed(usize),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv output: {0}")]
    Csv(String),
    #[error("manifest: {0}")]
    Manifest(String),
}

impl SimError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
