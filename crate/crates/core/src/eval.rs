//! Error statistics for tracker output against ground truth, and the CSV
//! tables the experiments emit.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::trajectory::SampledTrajectory;

/// Quantile rows in a CDF: 0%, 1%, ..., 100%.
pub const CDF_ROWS: usize = 101;

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub per_timestamp: Vec<f64>,
    pub median: f64,
    pub mean: f64,
    /// `(error, quantile)` at 1% steps.
    pub cdf: Vec<(f64, f64)>,
    pub per_lap_median: Vec<f64>,
}

/// Lower of the two middle values for even counts. NaN for empty input.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v[(v.len() - 1) / 2]
}

/// Order statistic at quantile `q`: the smallest error with at least a
/// fraction `q` of samples at or below it.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let idx = ((q * n as f64).ceil() as usize).clamp(1, n) - 1;
    sorted[idx]
}

impl ErrorReport {
    /// Statistics over a raw error sequence. `lap_boundaries` are the sample
    /// indices closing each lap; trailing samples join the last lap.
    pub fn from_errors(errors: Vec<f64>, lap_boundaries: &[usize]) -> Result<Self> {
        if errors.is_empty() {
            return Err(Error::InvalidInput("no errors to summarize".into()));
        }
        if errors.iter().any(|e| !e.is_finite() || *e < 0.0) {
            return Err(Error::InvalidInput("errors must be finite and nonnegative".into()));
        }
        let mut sorted = errors.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let mean = errors.iter().sum::<f64>() / n as f64;
        let cdf = (0..CDF_ROWS)
            .map(|i| {
                let q = i as f64 / (CDF_ROWS - 1) as f64;
                (quantile_sorted(&sorted, q), q)
            })
            .collect();

        let mut per_lap_median = Vec::with_capacity(lap_boundaries.len());
        let mut start = 0;
        for (i, &b) in lap_boundaries.iter().enumerate() {
            let end = if i + 1 == lap_boundaries.len() { n } else { (b + 1).min(n) };
            if start >= end {
                break;
            }
            per_lap_median.push(median(&errors[start..end]));
            start = end;
        }
        Ok(Self {
            median: sorted[(n - 1) / 2],
            mean,
            cdf,
            per_lap_median,
            per_timestamp: errors,
        })
    }

    pub fn laps(&self) -> usize {
        self.per_lap_median.len()
    }
}

/// Per-step Euclidean error of `est` against `truth`, with laps taken from
/// the truth. Timestamps must agree within half a sample.
pub fn compute_errors(est: &SampledTrajectory, truth: &SampledTrajectory) -> Result<ErrorReport> {
    if est.len() != truth.len() {
        return Err(Error::LengthMismatch {
            what: "estimate vs truth",
            got: est.len(),
            expected: truth.len(),
        });
    }
    let tol = truth.dt / 2.0;
    for (i, (&a, &b)) in est.timestamps.iter().zip(&truth.timestamps).enumerate() {
        if (a - b).abs() > tol {
            return Err(Error::Misaligned { index: i, a, b });
        }
    }
    let errors = est
        .positions
        .iter()
        .zip(&truth.positions)
        .map(|(a, b)| a.distance(*b))
        .collect();
    ErrorReport::from_errors(errors, &truth.lap_boundaries)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftRatio {
    pub value: f64,
    /// First-lap median was zero; `value` is `+inf`.
    pub degenerate: bool,
}

/// Last-lap median over first-lap median.
pub fn drift_ratio(report: &ErrorReport) -> Result<DriftRatio> {
    drift_ratio_of(&report.per_lap_median)
}

pub fn drift_ratio_of(per_lap_median: &[f64]) -> Result<DriftRatio> {
    if per_lap_median.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "drift ratio needs at least 2 laps, got {}",
            per_lap_median.len()
        )));
    }
    let first = per_lap_median[0];
    let last = per_lap_median[per_lap_median.len() - 1];
    if first == 0.0 {
        return Ok(DriftRatio {
            value: f64::INFINITY,
            degenerate: true,
        });
    }
    Ok(DriftRatio {
        value: last / first,
        degenerate: false,
    })
}

/// Mean over seeds of each seed's drift ratio. Degenerate seeds make the
/// mean infinite.
pub fn seed_averaged_drift(reports: &[ErrorReport]) -> Result<f64> {
    if reports.is_empty() {
        return Err(Error::InvalidInput("no reports to average".into()));
    }
    let mut sum = 0.0;
    for r in reports {
        sum += drift_ratio(r)?.value;
    }
    Ok(sum / reports.len() as f64)
}

/// Lap-by-lap mean of the per-lap medians across seeds.
pub fn mean_lap_medians(reports: &[ErrorReport]) -> Result<Vec<f64>> {
    let Some(first) = reports.first() else {
        return Err(Error::InvalidInput("no reports to average".into()));
    };
    let laps = first.laps();
    if let Some(r) = reports.iter().find(|r| r.laps() != laps) {
        return Err(Error::LengthMismatch {
            what: "laps per report",
            got: r.laps(),
            expected: laps,
        });
    }
    Ok((0..laps)
        .map(|i| reports.iter().map(|r| r.per_lap_median[i]).sum::<f64>() / reports.len() as f64)
        .collect())
}

/// Median reduction of `a` relative to `b` in percent. `None` when `b` is zero.
pub fn reduction_percent(median_a: f64, median_b: f64) -> Option<f64> {
    if median_b == 0.0 {
        None
    } else {
        Some(100.0 * (1.0 - median_a / median_b))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub method: String,
    pub against: String,
    pub median: f64,
    pub against_median: f64,
    /// `None` flags a zero denominator.
    pub reduction_percent: Option<f64>,
}

/// Every ordered pair of distinct methods.
pub fn compare_methods(reports: &[(String, ErrorReport)]) -> Result<Vec<Comparison>> {
    if reports.len() < 2 {
        return Err(Error::InvalidInput("comparison needs at least 2 reports".into()));
    }
    let mut out = Vec::with_capacity(reports.len() * (reports.len() - 1));
    for (i, (a, ra)) in reports.iter().enumerate() {
        for (j, (b, rb)) in reports.iter().enumerate() {
            if i == j {
                continue;
            }
            out.push(Comparison {
                method: a.clone(),
                against: b.clone(),
                median: ra.median,
                against_median: rb.median,
                reduction_percent: reduction_percent(ra.median, rb.median),
            });
        }
    }
    Ok(out)
}

fn fmt_ratio(report: &ErrorReport) -> String {
    match drift_ratio(report) {
        Ok(d) if d.degenerate => "inf".into(),
        Ok(d) => format!("{:.6}", d.value),
        Err(_) => "nan".into(),
    }
}

pub const SUMMARY_HEADER: &str = "method,median_m,mean_m,drift_ratio,laps";

/// `method,median_m,mean_m,drift_ratio,laps` without a trailing newline.
/// The drift ratio is `nan` with fewer than two laps and `inf` when the
/// first lap is error-free.
pub fn summary_line(method: &str, report: &ErrorReport) -> String {
    format!(
        "{method},{:.6},{:.6},{},{}",
        report.median,
        report.mean,
        fmt_ratio(report),
        report.laps()
    )
}

pub fn summary_csv(reports: &[(String, ErrorReport)]) -> String {
    let mut s = format!("{SUMMARY_HEADER}\n");
    for (m, r) in reports {
        s.push_str(&summary_line(m, r));
        s.push('\n');
    }
    s
}

/// `method,quantile,error_m`, 101 rows per method.
pub fn cdf_csv(reports: &[(String, ErrorReport)]) -> String {
    let mut s = String::from("method,quantile,error_m\n");
    for (m, r) in reports {
        for &(e, q) in &r.cdf {
            let _ = writeln!(s, "{m},{q:.2},{e:.6}");
        }
    }
    s
}

/// `method,lap,median_m`, laps numbered from 1.
pub fn lap_csv(reports: &[(String, ErrorReport)]) -> String {
    let mut s = String::from("method,lap,median_m\n");
    for (m, r) in reports {
        for (i, e) in r.per_lap_median.iter().enumerate() {
            let _ = writeln!(s, "{m},{},{e:.6}", i + 1);
        }
    }
    s
}

/// `method,against,median_m,against_median_m,reduction_pct`; a zero
/// denominator leaves the reduction empty.
pub fn comparison_csv(rows: &[Comparison]) -> String {
    let mut s = String::from("method,against,median_m,against_median_m,reduction_pct\n");
    for c in rows {
        let red = c.reduction_percent.map(|r| format!("{r:.2}")).unwrap_or_default();
        let _ = writeln!(s, "{},{},{:.6},{:.6},{red}", c.method, c.against, c.median, c.against_median);
    }
    s
}
