//! Regression metrics and the per-model report files.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

fn check_pair(y: &[f64], y_hat: &[f64]) -> Result<()> {
    if y.is_empty() {
        return Err(Error::Empty("metric input".into()));
    }
    if y.len() != y_hat.len() {
        return Err(Error::DimensionMismatch { expected: y.len(), found: y_hat.len() });
    }
    Ok(())
}

pub fn mae(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_pair(y, y_hat)?;
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

/// Coefficient of determination; negative when worse than the mean.
pub fn r2(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_pair(y, y_hat)?;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::UndefinedR2);
    }
    let ss_res: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Signed errors `y − ŷ`.
pub fn residuals(y: &[f64], y_hat: &[f64]) -> Result<Vec<f64>> {
    check_pair(y, y_hat)?;
    Ok(y.iter().zip(y_hat).map(|(a, b)| a - b).collect())
}

/// Fraction of rows with `|y − ŷ| ≤ τ` for each τ.
pub fn tolerance_curve(y: &[f64], y_hat: &[f64], taus: &[f64]) -> Result<Vec<(f64, f64)>> {
    check_pair(y, y_hat)?;
    if taus.iter().any(|t| !(*t >= 0.0)) || taus.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Config("tolerances must be non-negative and ascending".into()));
    }
    let mut abs: Vec<f64> = y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).collect();
    abs.sort_by(f64::total_cmp);
    let n = abs.len() as f64;
    Ok(taus
        .iter()
        .map(|&tau| {
            let within = abs.partition_point(|&e| e <= tau);
            (tau, within as f64 / n)
        })
        .collect())
}

pub const DEFAULT_TAUS: [f64; 12] = [0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0, 7.5, 10.0, 15.0, 20.0];
pub const HISTOGRAM_BINS: usize = 30;

/// Equal-width bins over `[min e, max e]` as `(left, right, count)`; the last
/// bin is closed on the right.
pub fn residual_histogram(residuals: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    if residuals.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = residuals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = residuals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &e in residuals {
        let b = if width > 0.0 { (((e - lo) / width) as usize).min(bins - 1) } else { 0 };
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let right = if i + 1 == bins { hi } else { lo + width * (i + 1) as f64 };
            (lo + width * i as f64, right, c)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub model_name: String,
    pub mae: f64,
    /// `None` when the target is constant.
    pub r2: Option<f64>,
    pub residuals: Vec<f64>,
    pub tolerance_curve: Vec<(f64, f64)>,
}

impl EvalReport {
    pub fn compute(model_name: &str, y: &[f64], y_hat: &[f64], taus: &[f64]) -> Result<Self> {
        let r2 = match r2(y, y_hat) {
            Ok(v) => Some(v),
            Err(Error::UndefinedR2) => None,
            Err(e) => return Err(e),
        };
        Ok(EvalReport {
            model_name: model_name.to_string(),
            mae: mae(y, y_hat)?,
            r2,
            residuals: residuals(y, y_hat)?,
            tolerance_curve: tolerance_curve(y, y_hat, taus)?,
        })
    }

    /// Writes `residuals_<model>.csv`, `tolerance_<model>.csv` and
    /// `residual_hist_<model>.csv` into `dir`.
    pub fn write_files(&self, dir: &Path) -> Result<()> {
        let mut res = String::from("residual\n");
        for e in &self.residuals {
            writeln!(res, "{e}").unwrap();
        }
        write_text(&dir.join(format!("residuals_{}.csv", self.model_name)), &res)?;

        let mut tol = String::from("tau,fraction\n");
        for (t, f) in &self.tolerance_curve {
            writeln!(tol, "{t},{f}").unwrap();
        }
        write_text(&dir.join(format!("tolerance_{}.csv", self.model_name)), &tol)?;

        let mut hist = String::from("bin_left,bin_right,count\n");
        for (l, r, c) in residual_histogram(&self.residuals, HISTOGRAM_BINS) {
            writeln!(hist, "{l},{r},{c}").unwrap();
        }
        write_text(&dir.join(format!("residual_hist_{}.csv", self.model_name)), &hist)
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `report.csv` with one row per model. An undefined R² is written as `nan`.
pub fn write_report(path: &Path, reports: &[EvalReport]) -> Result<()> {
    let mut out = String::from("model,mae,r2,n_rows\n");
    for r in reports {
        let r2 = r.r2.map_or_else(|| "nan".to_string(), |v| v.to_string());
        writeln!(out, "{},{},{},{}", r.model_name, r.mae, r2, r.residuals.len()).unwrap();
    }
    write_text(path, &out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub model: String,
    pub mae: f64,
    pub r2: f64,
    pub n_rows: usize,
}

pub fn read_report(path: &Path) -> Result<Vec<ReportRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some("model,mae,r2,n_rows") {
        return Err(Error::format(path, "unexpected report header"));
    }
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::format(path, format!("malformed report row `{line}`"));
            if f.len() != 4 {
                return Err(bad());
            }
            Ok(ReportRow {
                model: f[0].to_string(),
                mae: f[1].parse().map_err(|_| bad())?,
                r2: f[2].parse().map_err(|_| bad())?,
                n_rows: f[3].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}
