//! Trace reduction to the headline statistics: settling time, force-error
//! moments, centroid deviation, lateral tracking, and per-episode lumen
//! minima.
//!
//! Settling is the first instant after contact establishment (alpha
//! crossing 0.5) from which `|e_f| < 0.3 N` holds continuously for at
//! least 0.2 s. Force and lateral statistics are taken from that instant
//! onward — the settled-contact interval the error bands refer to — and
//! fall back to the alpha crossing when a trace never settles.

use crate::simworld::TraceRecord;
use serde::Serialize;
use thiserror::Error;

/// Sustained-error threshold of the settling definition (N).
pub const SETTLE_BAND_N: f64 = 0.3;
/// Required sustained duration (s).
pub const SETTLE_HOLD_S: f64 = 0.2;
/// Establishment threshold on the contact indicator.
pub const ALPHA_ESTABLISHED: f64 = 0.5;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("trace is empty")]
    EmptyTrace,
    #[error("trace never establishes contact (alpha stays below {ALPHA_ESTABLISHED})")]
    NoContact,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub run_id: String,
    pub config_hash: String,
    /// Seconds from establishment to sustained small force error; absent
    /// when the trace never settles.
    pub settling_time: Option<f64>,
    pub mean_abs_ef: f64,
    pub std_abs_ef: f64,
    pub max_abs_ef: f64,
    /// Vessel-centroid deviation statistics over imaging events (mm).
    pub deviation_mean: f64,
    pub deviation_std: f64,
    pub deviation_max: f64,
    /// RMS path-normal deviation over the settled interval (mm).
    pub lateral_rms: f64,
    /// Minimum lumen area (mm^2) per pedal-pressed episode, in order.
    pub episode_lumen_minima: Vec<f64>,
}

impl MetricsReport {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("serialize metrics report")
    }
}

impl std::fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "run:            {}", self.run_id)?;
        writeln!(f, "config hash:    {}", self.config_hash)?;
        match self.settling_time {
            Some(t) => writeln!(f, "settling time:  {t:.3} s")?,
            None => writeln!(f, "settling time:  (never settled)")?,
        }
        writeln!(
            f,
            "|e_f|:          {:.4} +- {:.4} N (max {:.4})",
            self.mean_abs_ef, self.std_abs_ef, self.max_abs_ef
        )?;
        if !self.deviation_mean.is_nan() {
            writeln!(
                f,
                "centroid dev:   {:.3} +- {:.3} mm (max {:.3})",
                self.deviation_mean, self.deviation_std, self.deviation_max
            )?;
        }
        writeln!(f, "lateral rms:    {:.4} mm", self.lateral_rms)?;
        if !self.episode_lumen_minima.is_empty() {
            let minima: Vec<String> = self
                .episode_lumen_minima
                .iter()
                .map(|v| format!("{v:.2}"))
                .collect();
            writeln!(f, "episode lumen minima (mm^2): {}", minima.join(", "))?;
        }
        Ok(())
    }
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let mut n = 0usize;
    let mut sum = 0.0;
    for v in values.clone() {
        n += 1;
        sum += v;
    }
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = sum / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

/// Index right after which `|e_f| < SETTLE_BAND_N` holds for
/// `SETTLE_HOLD_S`, searching from `start`.
fn settle_index(trace: &[TraceRecord], start: usize) -> Option<usize> {
    let mut candidate = None;
    for i in start..trace.len() {
        if trace[i].e_f.abs() < SETTLE_BAND_N {
            let c = *candidate.get_or_insert(i);
            if trace[i].t - trace[c].t >= SETTLE_HOLD_S {
                return Some(c);
            }
        } else {
            candidate = None;
        }
    }
    None
}

pub fn compute_metrics(
    trace: &[TraceRecord],
    run_id: &str,
    config_hash: &str,
) -> Result<MetricsReport, MetricsError> {
    if trace.is_empty() {
        return Err(MetricsError::EmptyTrace);
    }
    let alpha_idx = trace
        .iter()
        .position(|r| r.alpha >= ALPHA_ESTABLISHED)
        .ok_or(MetricsError::NoContact)?;
    let settle = settle_index(trace, alpha_idx);
    let settling_time = settle.map(|i| trace[i].t - trace[alpha_idx].t);
    let window_start = settle.unwrap_or(alpha_idx);
    let window = &trace[window_start..];

    let (mean_abs_ef, std_abs_ef) = mean_std(window.iter().map(|r| r.e_f.abs()));
    let max_abs_ef = window.iter().map(|r| r.e_f.abs()).fold(0.0, f64::max);

    let deviations = || {
        window
            .iter()
            .map(|r| r.centroid_dev_mm)
            .filter(|d| !d.is_nan())
    };
    let (deviation_mean, deviation_std) = mean_std(deviations());
    let deviation_max =
        deviations().fold(f64::NAN, |acc, d| if acc.is_nan() { d } else { acc.max(d) });

    let lateral_ms = window
        .iter()
        .map(|r| r.lateral_dev_mm * r.lateral_dev_mm)
        .sum::<f64>()
        / window.len() as f64;

    // Compression episodes: maximal pedal-pressed runs over the full trace.
    let mut episode_lumen_minima = Vec::new();
    let mut current: Option<f64> = None;
    for r in trace {
        match (r.pedal, current) {
            (true, Some(min)) => current = Some(min.min(r.lumen_mm2)),
            (true, None) => current = Some(r.lumen_mm2),
            (false, Some(min)) => {
                episode_lumen_minima.push(min);
                current = None;
            }
            (false, None) => {}
        }
    }
    if let Some(min) = current {
        episode_lumen_minima.push(min);
    }

    Ok(MetricsReport {
        run_id: run_id.to_string(),
        config_hash: config_hash.to_string(),
        settling_time,
        mean_abs_ef,
        std_abs_ef,
        max_abs_ef,
        deviation_mean,
        deviation_std,
        deviation_max,
        lateral_rms: lateral_ms.sqrt(),
        episode_lumen_minima,
    })
}
