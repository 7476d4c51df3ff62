//! Report rendering: turns a finished experiment directory into tidy
//! plot-data CSVs (iteration vs mean and standard deviation per cell) and a
//! results table.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::experiment::{cell_stem, write_atomic, AggregateReport, CellReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    /// Plot-data CSVs only.
    Csv,
    /// Plot-data CSVs plus a rendered text table.
    Table,
}

/// Output of [`emit`]: where the plot data went and the rendered table.
#[derive(Debug)]
pub struct Rendered {
    pub plot_files: Vec<PathBuf>,
    pub table: String,
}

/// Reads `report.json` under `in_dir`, writes one plot-data CSV per cell
/// with at least one successful run, and renders the summary table.
pub fn emit(in_dir: &Path, format: ReportFormat) -> Result<Rendered> {
    let report_path = in_dir.join("report.json");
    let text = std::fs::read_to_string(&report_path)
        .map_err(|e| Error::io(&report_path, e))?;
    let report: AggregateReport =
        serde_json::from_str(&text).map_err(|e| Error::parse(&report_path, e))?;

    let mut plot_files = Vec::new();
    for cell in &report.cells {
        if cell.successes == 0 {
            continue;
        }
        let path = in_dir.join(format!("plot_{}.csv", cell_stem(cell.strategy, cell.delta)));
        write_atomic(&path, plot_csv(cell).as_bytes())?;
        plot_files.push(path);
    }

    let table = render_table(&report);
    let _ = format; // both formats emit the same files; the CLI decides what to print
    Ok(Rendered { plot_files, table })
}

fn plot_csv(cell: &CellReport) -> String {
    let mut out = String::from(
        "iter,accuracy_mean,accuracy_std,mean_rho_mean,mean_rho_std,set_size_mean,set_size_std\n",
    );
    for t in 0..cell.accuracy.mean.len() {
        out.push_str(&format!(
            "{t},{},{},{},{},{},{}\n",
            cell.accuracy.mean[t],
            cell.accuracy.std[t],
            cell.mean_rho.mean[t],
            cell.mean_rho.std[t],
            cell.set_size.mean[t],
            cell.set_size.std[t],
        ));
    }
    out
}

fn stat(pair: Option<&crate::experiment::StatPair>) -> String {
    match pair {
        Some(p) => format!("{:.4} ± {:.4}", p.mean, p.std),
        None => "-".into(),
    }
}

/// Plain-text table: one row per (strategy, delta) cell, then the
/// operational points.
pub fn render_table(report: &AggregateReport) -> String {
    let mut rows: Vec<[String; 6]> = vec![[
        "strategy".into(),
        "delta".into(),
        "ok".into(),
        "accuracy".into(),
        "conv".into(),
        "eff".into(),
    ]];
    for cell in &report.cells {
        rows.push([
            cell.strategy.to_string(),
            format!("{:e}", cell.delta),
            format!("{}/{}", cell.successes, cell.successes + cell.failures),
            if cell.successes == 0 {
                "-".into()
            } else {
                format!("{:.4} ± {:.4}", cell.final_accuracy.mean, cell.final_accuracy.std)
            },
            stat(cell.conv.as_ref()),
            stat(cell.eff.as_ref()),
        ]);
    }
    let widths: Vec<usize> = (0..6)
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();

    let mut out = format!(
        "dataset: {}   master seed: {}   repetitions: {}\n\n",
        report.dataset, report.master_seed, report.repetitions
    );
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, cell)| format!("{cell:<width$}", width = widths[c]))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }

    out.push('\n');
    match &report.operational {
        Some(block) => {
            out.push_str(&format!(
                "operational points (accuracy within 5% of single-pass {:.4}; qualifying deltas: {})\n",
                block.single_pass_accuracy,
                block
                    .qualifying_deltas
                    .iter()
                    .map(|d| format!("{d:e}"))
                    .collect::<Vec<_>>()
                    .join(", ")
            ));
            for (label, w) in [
                ("best accuracy", &block.best_accuracy),
                ("best efficiency", &block.best_efficiency),
                ("best convergence", &block.best_convergence),
            ] {
                out.push_str(&format!(
                    "  {label:<16} delta={:<8} accuracy={:.4} conv={:.4} eff={:.4} expected sample fraction={:.4}\n",
                    format!("{:e}", w.delta),
                    w.accuracy,
                    w.conv,
                    w.eff,
                    w.expected_sample_fraction
                ));
            }
        }
        None => out.push_str("operational points: no qualifying configuration\n"),
    }
    if !report.warnings.is_empty() {
        out.push_str(&format!("\nwarnings ({}):\n", report.warnings.len()));
        for w in &report.warnings {
            out.push_str(&format!("  {w}\n"));
        }
    }
    out
}
