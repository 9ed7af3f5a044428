use std::fmt::Write as _;

use super::MetricsRow;
use crate::error::{config, Result};

fn column(row: &MetricsRow, name: &str) -> Option<f64> {
    Some(match name {
        "loss" => row.loss,
        "supervised" => row.breakdown.supervised,
        "unlabeled" => row.breakdown.unlabeled,
        "premix" => row.breakdown.premix,
        "rotation" => row.breakdown.rotation,
        "test_error" => row.test_error,
        "kl" => row.kl,
        "fairness" => row.fairness,
        "confidence" => row.confidence,
        "mutual_information" => row.mutual_information,
        _ => return None,
    })
}

/// Renders one metrics column against step as a `height`-line text chart.
pub fn plot_metrics(rows: &[MetricsRow], name: &str, width: usize, height: usize) -> Result<String> {
    if rows.is_empty() {
        return Err(config("no metrics rows to plot"));
    }
    let values: Vec<f64> = rows
        .iter()
        .map(|r| column(r, name).ok_or_else(|| config(format!("unknown metrics column {name:?}"))))
        .collect::<Result<_>>()?;
    let (width, height) = (width.max(2), height.max(2));
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut grid = vec![vec![' '; width]; height];
    for (i, v) in values.iter().enumerate() {
        let x = if values.len() == 1 { 0 } else { i * (width - 1) / (values.len() - 1) };
        let y = ((v - lo) / span * (height - 1) as f64).round() as usize;
        grid[height - 1 - y][x] = '*';
    }
    let mut out = format!("{name} vs step ({} to {})\n", rows[0].step, rows[rows.len() - 1].step);
    for (r, line) in grid.iter().enumerate() {
        let label = match r {
            0 => format!("{hi:>10.4}"),
            _ if r == height - 1 => format!("{lo:>10.4}"),
            _ => " ".repeat(10),
        };
        let _ = writeln!(out, "{label} |{}", line.iter().collect::<String>());
    }
    let _ = writeln!(out, "{} +{}", " ".repeat(10), "-".repeat(width));
    Ok(out)
}
