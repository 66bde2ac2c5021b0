use std::fmt::Write as _;
use std::path::Path;

use super::output::{read_metrics_csv, MetricsRow};
use super::write_file;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub text: String,
    pub tables: usize,
}

fn opt<T: std::fmt::Display>(v: Option<T>, f: impl Fn(T) -> String) -> String {
    v.map(f).unwrap_or_else(|| "-".into())
}

fn render(title: &str, headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = format!("{title}\n");
    let line =
        |cells: Vec<String>| cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect::<Vec<_>>().join("  ");
    let _ = writeln!(out, "{}", line(headers.iter().map(|s| s.to_string()).collect()));
    let _ = writeln!(out, "{}", widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().join("  "));
    for r in rows {
        let _ = writeln!(out, "{}", line(r.clone()));
    }
    out
}

fn table(kind: &str, rows: &[MetricsRow]) -> String {
    let (title, first, last_header): (&str, &str, &str) = match kind {
        "baseline" => ("Baseline results", "Scenario", "Average Load Factor"),
        "demand_scale" => ("Effects of varying demand", "Demand Scale", "Average Load Factor"),
        "headway_bounds" => ("Effects of headway constraints", "Headway Bounds (min:max)", "Average Load Factor"),
        "l_max" => ("Sensitivity to maximum train length", "Max Train Length", "Average Load Factor"),
        "fleet_size" => ("Sensitivity to maximum fleet size", "Fleet Size", "Seat Utilization Index"),
        other => (other, "Value", "Average Load Factor"),
    };
    let headers = [first, "Average Headway (min)", "Total Pods Dispatched", last_header, "Objective", "Status"];
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let label = if kind == "baseline" { r.scenario.clone() } else { r.value.clone() };
            let last = if kind == "fleet_size" {
                opt(r.seat_util, |v| v.to_string())
            } else {
                opt(r.load_factor, |v| format!("{:.0}%", v * 100.0))
            };
            vec![
                label,
                opt(r.avg_headway, |v| format!("{v:.2}")),
                opt(r.total_pods, |v| v.to_string()),
                last,
                opt(r.objective, |v| format!("{v:.1}")),
                r.status.clone(),
            ]
        })
        .collect();
    render(title, &headers, &body)
}

/// Prints every `metrics.csv` and `sweep_*.csv` in `dir` as aligned tables
/// and writes them to `summary.txt`.
pub fn report(dir: &Path) -> Result<Report> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<(String, std::path::PathBuf)> = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        if name == "metrics.csv" {
            files.push(("baseline".into(), path.clone()));
        } else if let Some(kind) = name.strip_prefix("sweep_").and_then(|n| n.strip_suffix(".csv")) {
            files.push((kind.to_string(), path.clone()));
        }
    }
    if files.is_empty() {
        return Err(Error::NoRuns(dir.to_path_buf()));
    }
    let order =
        |k: &str| ["baseline", "demand_scale", "headway_bounds", "l_max", "fleet_size"].iter().position(|&x| x == k);
    files.sort_by(|a, b| (order(&a.0), &a.0).cmp(&(order(&b.0), &b.0)));
    let mut text = String::new();
    for (kind, path) in &files {
        let rows = read_metrics_csv(path)?;
        if !text.is_empty() {
            text.push('\n');
        }
        text.push_str(&table(kind, &rows));
    }
    write_file(&dir.join("summary.txt"), text.as_bytes())?;
    Ok(Report { text, tables: files.len() })
}
