//! Merges per-run QoR reports into one CSV summary.

use std::path::Path;

use crate::error::Result;
use crate::qor::QoRReport;

const COLUMNS: &[&str] = &[
    "file",
    "shedder",
    "rate_pct",
    "window_size",
    "seed",
    "events",
    "truth",
    "detected",
    "fp_weighted",
    "fn_weighted",
    "drop_ratio",
    "mean_latency_ms",
    "p99_latency_ms",
    "max_latency_ms",
];

fn field(report: &QoRReport, key: &str) -> String {
    report
        .config
        .get(key)
        .map(|v| match v {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        })
        .unwrap_or_default()
}

/// Writes one CSV row per report, sorted by (shedder, rate) for stable
/// output.
pub fn merge_reports(inputs: &[(String, QoRReport)], out: &Path) -> Result<usize> {
    let mut rows: Vec<&(String, QoRReport)> = inputs.iter().collect();
    rows.sort_by(|a, b| {
        let key = |r: &QoRReport| {
            (
                field(r, "shedder"),
                r.config
                    .get("rate_pct")
                    .and_then(|v| v.as_f64())
                    .unwrap_or(0.0)
                    .to_bits(),
            )
        };
        key(&a.1).cmp(&key(&b.1)).then(a.0.cmp(&b.0))
    });
    let mut writer = csv::Writer::from_path(out)?;
    writer.write_record(COLUMNS)?;
    for (name, report) in rows {
        let window_size = report
            .config
            .get("window")
            .and_then(|w| w.get("size"))
            .map(|v| v.to_string())
            .unwrap_or_default();
        writer.write_record([
            name.clone(),
            field(report, "shedder"),
            field(report, "rate_pct"),
            window_size,
            field(report, "seed"),
            field(report, "events"),
            report.truth_total.to_string(),
            report.detected_total.to_string(),
            format!("{:.4}", report.fp_weighted),
            format!("{:.4}", report.fn_weighted),
            format!("{:.6}", report.drop_ratio),
            format!("{:.3}", report.latency.mean_ns / 1e6),
            format!("{:.3}", report.latency.p99_ns as f64 / 1e6),
            format!("{:.3}", report.latency.max_ns as f64 / 1e6),
        ])?;
    }
    writer.flush()?;
    Ok(inputs.len())
}
