//! Dataset ingestion, training runs, sweeps and plots for smoothgnn.

pub mod config;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod metrics;
pub mod plot;
pub mod sweep;
pub mod synthetic;
pub mod train;
pub mod tu;

pub use config::{DatasetSource, LossKind, RunConfig};
pub use error::{HarnessError, Result};
pub use sweep::{sweep, SweepAxis, SweepSummary};
pub use synthetic::{gen_synthetic, SyntheticSpec};
pub use train::{train, RunResult};
pub use tu::load_tu_dataset;
