//! Per-epoch records and the frozen metrics CSV schema.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{HarnessError, Result};

/// First line of every metrics file; bump the version when columns change.
pub const SCHEMA_LINE: &str = "# smoothgnn metrics v1";

pub const COLUMNS: [&str; 9] = [
    "epoch",
    "train_loss",
    "train_acc",
    "test_acc",
    "clean_train_acc",
    "noisy_acc_vs_assigned",
    "noisy_acc_vs_true",
    "dirichlet_energy",
    "wallclock_ms",
];

/// One epoch of a run. Accuracies over empty subsets are `None` and written
/// as empty cells.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: Option<f64>,
    pub clean_train_acc: Option<f64>,
    pub noisy_acc_vs_assigned: Option<f64>,
    pub noisy_acc_vs_true: Option<f64>,
    pub dirichlet_energy: f64,
    pub wallclock_ms: u64,
    /// Sizes of the clean and noisy training subsets (not written to CSV).
    pub clean_count: usize,
    pub noisy_count: usize,
    /// Smallest eigenvalue over projected matrices after the epoch, if any.
    pub projected_min_eigenvalue: Option<f64>,
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

impl RunRecord {
    pub fn to_fields(&self) -> [String; 9] {
        [
            self.epoch.to_string(),
            self.train_loss.to_string(),
            self.train_acc.to_string(),
            cell(self.test_acc),
            cell(self.clean_train_acc),
            cell(self.noisy_acc_vs_assigned),
            cell(self.noisy_acc_vs_true),
            self.dirichlet_energy.to_string(),
            self.wallclock_ms.to_string(),
        ]
    }
}

/// Appends rows to `metrics.csv`, flushing after each so an interrupted run
/// keeps every completed epoch.
pub struct MetricsWriter {
    path: PathBuf,
    writer: csv::Writer<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut file = File::create(path).map_err(HarnessError::io("creating", path))?;
        writeln!(file, "{SCHEMA_LINE}").map_err(HarnessError::io("writing", path))?;
        let mut writer = csv::Writer::from_writer(file);
        let csv_err = |source| HarnessError::Csv {
            path: path.to_path_buf(),
            source,
        };
        writer.write_record(COLUMNS).map_err(csv_err)?;
        writer.flush().map_err(HarnessError::io("writing", path))?;
        Ok(Self {
            path: path.to_path_buf(),
            writer,
        })
    }

    pub fn append(&mut self, record: &RunRecord) -> Result<()> {
        self.writer
            .write_record(record.to_fields())
            .map_err(|source| HarnessError::Csv {
                path: self.path.clone(),
                source,
            })?;
        self.writer.flush().map_err(HarnessError::io("writing", &self.path))
    }
}

/// One parsed metrics row; empty cells are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub values: [Option<f64>; 9],
}

impl MetricsRow {
    pub fn get(&self, column: &str) -> Option<f64> {
        COLUMNS.iter().position(|c| *c == column).and_then(|i| self.values[i])
    }
}

/// Reads a metrics file. Rows with the wrong arity or unparsable cells are
/// skipped with a warning; the number skipped is returned alongside.
pub fn read_metrics(path: &Path) -> Result<(Vec<MetricsRow>, usize)> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .from_path(path)
        .map_err(|source| HarnessError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
    let headers = reader
        .headers()
        .map_err(|source| HarnessError::Csv {
            path: path.to_path_buf(),
            source,
        })?
        .clone();
    if headers.iter().ne(COLUMNS.iter().copied()) {
        return Err(HarnessError::Data(format!(
            "{}: unexpected columns {:?}",
            path.display(),
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let (mut rows, mut skipped) = (Vec::new(), 0);
    for (n, record) in reader.records().enumerate() {
        let parsed = record.ok().filter(|r| r.len() == COLUMNS.len()).and_then(|r| {
            let mut values = [None; 9];
            for (slot, field) in values.iter_mut().zip(r.iter()) {
                let field = field.trim();
                if !field.is_empty() {
                    *slot = Some(field.parse::<f64>().ok().filter(|v| v.is_finite())?);
                }
            }
            values[0].map(|_| MetricsRow { values })
        });
        match parsed {
            Some(row) => rows.push(row),
            None => {
                skipped += 1;
                log::warn!("{}: skipping malformed row {}", path.display(), n + 1);
            }
        }
    }
    Ok((rows, skipped))
}
