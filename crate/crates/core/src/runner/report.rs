use super::{proportions_total, RunRecord};
use crate::error::{Error, Result};
use crate::evalx::{aggregate, format_metric, EvalReport};
use crate::label::TopicLabel;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Aligned text table: first column left-aligned, the rest right-aligned.
pub fn render_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let cols = headers.len();
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut out = String::new();
        for (i, cell) in cells.iter().enumerate().take(cols) {
            let pad = widths[i] - cell.chars().count();
            if i > 0 {
                out.push_str("  ");
            }
            if i == 0 {
                out.push_str(cell);
                out.extend(std::iter::repeat_n(' ', pad));
            } else {
                out.extend(std::iter::repeat_n(' ', pad));
                out.push_str(cell);
            }
        }
        out.truncate(out.trim_end().len());
        out.push('\n');
        out
    };
    let mut out = line(headers.to_vec());
    let total: usize = widths.iter().sum::<usize>() + 2 * cols.saturating_sub(1);
    out.push_str(&"-".repeat(total));
    out.push('\n');
    for row in rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    out
}

fn performance_table(records: &[RunRecord]) -> String {
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            let (acc, f1) = match &r.delta {
                Some(d) => (d.accuracy.to_string(), d.macro_f1.to_string()),
                None => (format_metric(r.test.accuracy), format_metric(r.test.macro_f1)),
            };
            vec![
                r.config.name.clone(),
                r.prediction_source.clone(),
                r.split_sizes.test.to_string(),
                acc,
                f1,
            ]
        })
        .collect();
    render_table(&["Scenario", "Model", "n_test", "Accuracy", "Macro-F1"], &rows)
}

fn per_class_table(record: &RunRecord) -> String {
    let rows: Vec<Vec<String>> = record
        .test
        .per_class
        .iter()
        .map(|m| {
            vec![
                m.label.display_name().to_string(),
                format_metric(m.precision),
                format_metric(m.recall),
                format_metric(m.f1),
                m.support.to_string(),
            ]
        })
        .collect();
    render_table(&["Class", "P", "R", "F1", "Support"], &rows)
}

fn loco_table(records: &[&RunRecord]) -> Result<String> {
    let mut rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            vec![
                r.held_out_country().unwrap_or("").to_string(),
                r.split_sizes.test.to_string(),
                (r.split_sizes.train + r.split_sizes.val).to_string(),
                format_metric(r.test.accuracy),
                format_metric(r.test.macro_f1),
            ]
        })
        .collect();
    let reports: Vec<EvalReport> = records.iter().map(|r| r.test.clone()).collect();
    let avg = aggregate(&reports)?;
    rows.push(vec![
        "Average".into(),
        String::new(),
        String::new(),
        format_metric(avg.accuracy),
        format_metric(avg.macro_f1),
    ]);
    Ok(render_table(
        &["Held-out country", "n_country", "n_source", "Accuracy", "Macro-F1"],
        &rows,
    ))
}

fn distribution_table(records: &[RunRecord]) -> String {
    let mut headers = vec!["Run", "Set", "n"];
    headers.extend(TopicLabel::ALL.iter().map(|l| l.as_str()));
    headers.push("total");
    let mut rows = Vec::new();
    for r in records {
        for d in &r.distributions {
            let mut row = vec![r.run_id.clone(), d.key.clone(), d.n.to_string()];
            row.extend(d.proportions.iter().map(|p| format_metric(*p)));
            let total = if d.n == 0 { 0.0 } else { proportions_total(&d.proportions) };
            row.push(format_metric(total));
            rows.push(row);
        }
    }
    render_table(&headers, &rows)
}

fn write(path: PathBuf, text: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(())
}

/// Writes `performance.txt`, `per_class.txt`, `label_distribution.txt`,
/// `loco.txt` (when any run is leave-one-country-out) and one
/// `confusion_<run id>.csv` per run. Output depends only on `records`.
pub fn emit_reports(records: &[RunRecord], out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let out_dir = out_dir.as_ref();
    if records.is_empty() {
        return Err(Error::Run("no runs to report".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    write(out_dir.join("performance.txt"), &performance_table(records), &mut written)?;

    let mut per_class = String::new();
    for (i, r) in records.iter().enumerate() {
        if i > 0 {
            per_class.push('\n');
        }
        let _ = writeln!(per_class, "{} (n = {})", r.run_id, r.test.n);
        per_class.push_str(&per_class_table(r));
    }
    write(out_dir.join("per_class.txt"), &per_class, &mut written)?;

    let loco: Vec<&RunRecord> = records.iter().filter(|r| r.held_out_country().is_some()).collect();
    if !loco.is_empty() {
        write(out_dir.join("loco.txt"), &loco_table(&loco)?, &mut written)?;
    }
    write(out_dir.join("label_distribution.txt"), &distribution_table(records), &mut written)?;
    for r in records {
        write(
            out_dir.join(format!("confusion_{}.csv", r.run_id)),
            &r.test.confusion.to_csv(),
            &mut written,
        )?;
    }
    Ok(written)
}
