//! One-axis experiment sweeps.
//!
//! Each value of the swept axis becomes a sub-run in `<out>/<axis>_<value>`,
//! trained from the base configuration with only that key changed. Every
//! sub-run keeps the base seed, so runs differ only in the swept quantity and a
//! single-value sweep reproduces a plain run exactly. A failing sub-run is
//! logged and recorded in `summary.csv`; the remaining values still run.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::config::{DatasetSource, RunConfig};
use crate::error::{HarnessError, Result};
use crate::metrics::RunRecord;
use crate::train::train;

pub const SUMMARY_COLUMNS: [&str; 8] = [
    "axis",
    "value",
    "run_dir",
    "status",
    "final_train_acc",
    "final_test_acc",
    "final_energy",
    "peak_memorization",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    NoiseRate,
    DatasetSize,
    Hidden,
    Epochs,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::NoiseRate => "noise_rate",
            SweepAxis::DatasetSize => "dataset_size",
            SweepAxis::Hidden => "hidden",
            SweepAxis::Epochs => "epochs",
        }
    }

    /// The configuration key the axis overrides.
    pub fn config_key(self) -> &'static str {
        match self {
            SweepAxis::NoiseRate => "noise.rate",
            SweepAxis::DatasetSize => "synthetic.num_graphs",
            SweepAxis::Hidden => "hidden",
            SweepAxis::Epochs => "epochs",
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        [SweepAxis::NoiseRate, SweepAxis::DatasetSize, SweepAxis::Hidden, SweepAxis::Epochs]
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                HarnessError::Config(format!("unknown sweep axis `{s}` (noise_rate|dataset_size|hidden|epochs)"))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub value: String,
    pub run_dir: PathBuf,
    /// `Ok(final record)` (`None` for zero-epoch runs) or the error message.
    pub outcome: std::result::Result<Option<RunRecord>, String>,
    /// Largest `noisy_acc_vs_assigned` over all epochs.
    pub peak_memorization: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub axis: SweepAxis,
    pub entries: Vec<SweepEntry>,
    pub summary_path: PathBuf,
}

/// Builds the configuration of every sub-run, validating all of them before
/// anything is trained.
pub fn sub_configs(base: &RunConfig, axis: SweepAxis, values: &[String]) -> Result<Vec<RunConfig>> {
    if values.is_empty() {
        return Err(HarnessError::Config("sweep needs at least one value".into()));
    }
    if axis == SweepAxis::DatasetSize && base.dataset != DatasetSource::Synthetic {
        return Err(HarnessError::Config(
            "dataset_size sweeps need the synthetic dataset; use subsample_fraction for directories".into(),
        ));
    }
    let base_text = base.to_text();
    values
        .iter()
        .map(|v| RunConfig::parse_with_overrides(&base_text, &[format!("{} = {v}", axis.config_key())]))
        .collect()
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn sweep(base: &RunConfig, axis: SweepAxis, values: &[String], out_dir: &Path) -> Result<SweepSummary> {
    let configs = sub_configs(base, axis, values)?;
    std::fs::create_dir_all(out_dir).map_err(HarnessError::io("creating", out_dir))?;
    let mut entries = Vec::with_capacity(values.len());
    for (value, config) in values.iter().zip(&configs) {
        let run_dir = out_dir.join(format!("{}_{}", axis.name(), value));
        log::info!("sweep {axis}={value} -> {}", run_dir.display());
        let entry = match train(config, &run_dir) {
            Ok(result) => SweepEntry {
                value: value.clone(),
                run_dir,
                peak_memorization: result
                    .records
                    .iter()
                    .filter_map(|r| r.noisy_acc_vs_assigned)
                    .reduce(f64::max),
                outcome: Ok(result.records.last().cloned()),
            },
            Err(e) => {
                log::error!("sweep {axis}={value} failed: {e}");
                SweepEntry {
                    value: value.clone(),
                    run_dir,
                    peak_memorization: None,
                    outcome: Err(e.to_string()),
                }
            }
        };
        entries.push(entry);
    }
    let summary_path = out_dir.join("summary.csv");
    write_summary(&summary_path, axis, &entries)?;
    Ok(SweepSummary {
        axis,
        entries,
        summary_path,
    })
}

fn write_summary(path: &Path, axis: SweepAxis, entries: &[SweepEntry]) -> Result<()> {
    let csv_err = |source| HarnessError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(SUMMARY_COLUMNS).map_err(csv_err)?;
    for e in entries {
        let (status, last) = match &e.outcome {
            Ok(last) => ("ok".to_string(), last.as_ref()),
            Err(msg) => (format!("failed: {msg}"), None),
        };
        w.write_record([
            axis.name().to_string(),
            e.value.clone(),
            e.run_dir.display().to_string(),
            status,
            cell(last.map(|r| r.train_acc)),
            cell(last.and_then(|r| r.test_acc)),
            cell(last.map(|r| r.dirichlet_energy)),
            cell(e.peak_memorization),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(HarnessError::io("writing", path))
}
