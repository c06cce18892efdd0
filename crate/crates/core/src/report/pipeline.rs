//! Raw CSV files to clean incidents, shared by the CLI stages and the benchmark.

use std::fs::File;
use std::path::{Path, PathBuf};

use std::io::BufWriter;

use crate::cube::{read_dataset_csv, write_dataset_csv, Dataset, DatasetSidecar, MonthWindow, NormalizeScope, YearMonth};
use crate::ingest::{clean, parse_incidents, CleanIncident, CleaningReport, IngestConfig, Reject};
use crate::Scalar;

use super::ReportError;

#[derive(Debug, Clone)]
pub struct IngestOutcome {
    pub incidents: Vec<CleanIncident>,
    pub report: CleaningReport,
    /// Rejected rows, tagged with their source file.
    pub rejects: Vec<(PathBuf, Reject)>,
}

/// Parse and clean every file, then clean the union once more so duplicates
/// spanning files collapse too.
pub fn ingest_files(paths: &[PathBuf], config: &IngestConfig) -> Result<IngestOutcome, ReportError> {
    let schema = config.schema();
    let rules = config.rules().map_err(|e| ReportError::Config(e.to_string()))?;
    let mut raw = Vec::new();
    let mut rejects = Vec::new();
    for path in paths {
        let file = File::open(path).map_err(|e| ReportError::Data(format!("{}: {e}", path.display())))?;
        let parsed = parse_incidents(file, &schema).map_err(|e| match e {
            crate::ingest::IngestError::MissingColumn { .. } => ReportError::Config(format!("{}: {e}", path.display())),
            other => ReportError::Data(format!("{}: {other}", path.display())),
        })?;
        raw.extend(parsed.incidents);
        rejects.extend(parsed.rejects.into_iter().map(|r| (path.clone(), r)));
    }
    let (incidents, report) = clean(&raw, &rules).map_err(|e| ReportError::Config(e.to_string()))?;
    Ok(IngestOutcome { incidents, report, rejects })
}

/// Month window implied by the configured study window, when both ends are set.
pub fn month_window(config: &IngestConfig) -> Result<Option<MonthWindow>, ReportError> {
    if config.window_start.is_none() || config.window_end.is_none() {
        return Ok(None);
    }
    let w = config.study_window().map_err(|e| ReportError::Config(e.to_string()))?;
    Ok(match w {
        Some(w) => Some(
            MonthWindow::new(YearMonth::of_date(w.start), YearMonth::of_date(w.end))
                .map_err(|e| ReportError::Config(e.to_string()))?,
        ),
        None => None,
    })
}

pub fn create_dir(path: &Path) -> Result<(), ReportError> {
    std::fs::create_dir_all(path).map_err(|e| ReportError::output(path, e))
}

/// `data.csv` keeps its sidecar in `data.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// Write the dataset CSV and its sidecar.
pub fn write_dataset<T: Scalar>(path: &Path, dataset: &Dataset<T>, scope: NormalizeScope) -> Result<(), ReportError> {
    let file = File::create(path).map_err(|e| ReportError::output(path, e))?;
    write_dataset_csv(BufWriter::new(file), dataset).map_err(|e| ReportError::output(path, e))?;
    super::write_json(&sidecar_path(path), &DatasetSidecar::describe(dataset, scope))
}

/// Read a dataset CSV, using its sidecar when one exists.
pub fn read_dataset<T: Scalar>(path: &Path) -> Result<Dataset<T>, ReportError> {
    let data_err = |e: &dyn std::fmt::Display| ReportError::Data(format!("{}: {e}", path.display()));
    let side = sidecar_path(path);
    let sidecar: Option<DatasetSidecar<T>> = if side.is_file() {
        let text = std::fs::read_to_string(&side).map_err(|e| data_err(&e))?;
        Some(serde_json::from_str(&text).map_err(|e| ReportError::Data(format!("{}: {e}", side.display())))?)
    } else {
        None
    };
    let file = File::open(path).map_err(|e| data_err(&e))?;
    read_dataset_csv(file, sidecar.as_ref()).map_err(|e| data_err(&e))
}

/// Reject log across several inputs: `file,row,reason`.
pub fn write_tagged_rejects(path: &Path, rejects: &[(PathBuf, Reject)]) -> Result<(), ReportError> {
    let file = File::create(path).map_err(|e| ReportError::output(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["file", "row", "reason"]).map_err(|e| ReportError::output(path, e))?;
    for (source, r) in rejects {
        w.write_record([source.display().to_string(), r.row.to_string(), r.reason.clone()])
            .map_err(|e| ReportError::output(path, e))?;
    }
    w.flush().map_err(|e| ReportError::output(path, e))
}
