//! Report serialization: JSON, flat CSV tables and a Markdown summary.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::models::format_params;

use super::{EvalReport, ReportError, REPORT_FORMAT_VERSION};

pub fn write_json<S: Serialize + ?Sized>(path: &Path, value: &S) -> Result<(), ReportError> {
    let file = File::create(path).map_err(|e| ReportError::output(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| ReportError::output(path, e))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| ReportError::output(path, e))
}

pub fn read_report(path: &Path) -> Result<EvalReport, ReportError> {
    let text = std::fs::read_to_string(path).map_err(|e| ReportError::Data(format!("{}: {e}", path.display())))?;
    let report: EvalReport =
        serde_json::from_str(&text).map_err(|e| ReportError::Data(format!("{}: {e}", path.display())))?;
    if report.format_version != REPORT_FORMAT_VERSION {
        return Err(ReportError::Data(format!(
            "{}: report format {} is not supported (expected {REPORT_FORMAT_VERSION})",
            path.display(),
            report.format_version
        )));
    }
    Ok(report)
}

fn write_csv<F>(path: &Path, header: &[&str], fill: F) -> Result<(), ReportError>
where
    F: FnOnce(&mut csv::Writer<BufWriter<File>>) -> csv::Result<()>,
{
    let file = File::create(path).map_err(|e| ReportError::output(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(header).map_err(|e| ReportError::output(path, e))?;
    fill(&mut w).map_err(|e| ReportError::output(path, e))?;
    w.flush().map_err(|e| ReportError::output(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Write `report.json`, the CSV tables and `report.md` into `dir`.
pub fn emit_all(report: &EvalReport, dir: &Path) -> Result<(), ReportError> {
    write_json(&dir.join("report.json"), report)?;

    write_csv(&dir.join("accuracy.csv"), &["model", "accuracy", "test_auc", "cv_auc_mean", "control_accuracy"], |w| {
        for m in &report.models {
            w.write_record([
                m.family.name().to_string(),
                m.accuracy.to_string(),
                opt(m.test_auc),
                crate::resample::mean(&m.cv_auc).to_string(),
                opt(m.control_accuracy),
            ])?;
        }
        Ok(())
    })?;

    write_csv(&dir.join("confusion.csv"), &["model", "true_class", "pred_0_frac", "pred_1_frac", "count"], |w| {
        for m in &report.models {
            for class in 0..2u8 {
                let [a, b] = match m.confusion.row_fractions(class) {
                    Some([a, b]) => [a.to_string(), b.to_string()],
                    None => [String::new(), String::new()],
                };
                w.write_record([m.family.name().to_string(), class.to_string(), a, b, m.confusion.support(class).to_string()])?;
            }
        }
        Ok(())
    })?;

    let f = &report.friedman;
    write_csv(&dir.join("friedman.csv"), &["model_a", "model_b", "statistic", "p_value", "significant"], |w| {
        for i in 0..f.models.len() {
            for j in i + 1..f.models.len() {
                w.write_record([
                    f.models[i].clone(),
                    f.models[j].clone(),
                    f.statistics[i][j].to_string(),
                    f.p_values[i][j].to_string(),
                    f.significant(i, j).to_string(),
                ])?;
            }
        }
        Ok(())
    })?;

    write_csv(&dir.join("kde.csv"), &["model", "x", "density"], |w| {
        for (name, curve) in &report.kde {
            for (x, d) in curve.grid.iter().zip(&curve.density) {
                w.write_record([name.clone(), x.to_string(), d.to_string()])?;
            }
        }
        Ok(())
    })?;

    write_csv(&dir.join("tallies.csv"), &["model", "neighborhood", "hits", "misses", "lat", "lon"], |w| {
        for (name, rows) in &report.tallies {
            for t in rows {
                w.write_record([
                    name.clone(),
                    t.neighborhood.clone(),
                    t.hits.to_string(),
                    t.misses.to_string(),
                    opt(t.lat),
                    opt(t.lon),
                ])?;
            }
        }
        Ok(())
    })?;

    let md = render_markdown(report);
    let path = dir.join("report.md");
    std::fs::write(&path, md).map_err(|e| ReportError::output(&path, e))
}

fn pct(x: f64) -> String {
    format!("{:.0}%", x * 100.0)
}

/// Human-readable summary. Deterministic for a given report.
pub fn render_markdown(report: &EvalReport) -> String {
    let mut s = String::new();
    let d = &report.dataset;
    let sp = &report.split;
    let _ = writeln!(s, "# Homicide prediction benchmark\n");
    let _ = writeln!(
        s,
        "{} rows from {} neighborhoods ({} class 0, {} class 1). Seed {}, {}-fold CV, normalization `{}`, threshold {}.\n",
        d.rows,
        d.neighborhoods,
        d.class_counts[0],
        d.class_counts[1],
        report.seed,
        report.k,
        report.normalization,
        report.threshold
    );
    let _ = writeln!(
        s,
        "Split: {} train / {} test (test classes: {} class 0, {} class 1).",
        sp.train, sp.test, sp.test_class_counts[0], sp.test_class_counts[1]
    );
    if !sp.flagged_neighborhoods.is_empty() {
        let _ = writeln!(s, "Neighborhoods missing from one side: {}.", sp.flagged_neighborhoods.join(", "));
    }
    if !d.removed_neighborhoods.is_empty() {
        let _ = writeln!(s, "Neighborhoods removed as incomplete: {}.", d.removed_neighborhoods.len());
    }

    let _ = writeln!(s, "\n## Accuracy\n");
    let _ = writeln!(s, "| Model | Accuracy | Test AUC | Mean CV AUC | Shuffled-label accuracy |");
    let _ = writeln!(s, "|---|---|---|---|---|");
    for m in &report.models {
        let _ = writeln!(
            s,
            "| {} | {:.2} | {} | {:.3} | {} |",
            m.family,
            m.accuracy,
            m.test_auc.map(|v| format!("{v:.3}")).unwrap_or_else(|| "n/a".into()),
            crate::resample::mean(&m.cv_auc),
            m.control_accuracy.map(|v| format!("{v:.2}")).unwrap_or_else(|| "n/a".into()),
        );
    }

    let _ = writeln!(s, "\n## Confusion matrices (row-normalized)\n");
    let _ = writeln!(s, "| Model | True class | Predicted 0 | Predicted 1 | Rows |");
    let _ = writeln!(s, "|---|---|---|---|---|");
    for m in &report.models {
        for class in 0..2u8 {
            let [a, b] = match m.confusion.row_fractions(class) {
                Some([a, b]) => [pct(a), pct(b)],
                None => ["n/a".into(), "n/a".into()],
            };
            let _ = writeln!(s, "| {} | {class} | {a} | {b} | {} |", m.family, m.confusion.support(class));
        }
    }

    let _ = writeln!(s, "\n## Tuned parameters\n");
    let _ = writeln!(s, "| Model | Candidates | Mean CV AUC | Parameters |");
    let _ = writeln!(s, "|---|---|---|---|");
    for m in &report.models {
        let shown = if m.best_params.is_empty() { "defaults".to_string() } else { format_params(&m.best_params) };
        let _ = writeln!(s, "| {} | {} | {:.3} | {shown} |", m.family, m.tune_candidates, m.tune_mean_auc);
    }

    let f = &report.friedman;
    if f.models.len() > 1 {
        let _ = writeln!(s, "\n## Pairwise Friedman p-values\n");
        let _ = writeln!(s, "| | {} |", f.models.join(" | "));
        let _ = writeln!(s, "|---|{}", "---|".repeat(f.models.len()));
        for (i, name) in f.models.iter().enumerate() {
            let cells: Vec<String> = (0..f.models.len())
                .map(|j| {
                    if i == j {
                        "-".to_string()
                    } else {
                        let mark = if f.significant(i, j) { "*" } else { "" };
                        format!("{:.4}{mark}", f.p_values[i][j])
                    }
                })
                .collect();
            let _ = writeln!(s, "| {name} | {} |", cells.join(" | "));
        }
        let _ = writeln!(s, "\n`*` marks p <= {}.", crate::metrics::SIGNIFICANCE);
    }
    if !report.foreign_grids.is_empty() {
        let _ = writeln!(s, "\nGrids without a built-in model: {}.", report.foreign_grids.join(", "));
    }
    s
}
