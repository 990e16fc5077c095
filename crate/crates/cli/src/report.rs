//! Human-readable tables, JSON-lines records and static SVG plots.

use std::fmt::Write as _;

use clap::ValueEnum;
use mvmot::metrics::MetricsReport;
use serde::Serialize;

use crate::experiments::{AblationRow, ReconfigReport, SweepRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum ReportFormat {
    #[default]
    Text,
    Records,
}

fn record<T: Serialize>(kind: &str, value: &T) -> String {
    let mut v = serde_json::to_value(value).expect("serializable record");
    if let serde_json::Value::Object(map) = &mut v {
        map.insert("record".into(), kind.into());
    }
    format!("{v}\n")
}

pub fn metrics(report: &MetricsReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Records => {
            let mut s = record("clear_mot", &report.clear);
            s += &record("identity", &report.identity);
            s += &record("ospa2", &serde_json::json!({ "final": report.ospa2, "series": report.ospa2_series }));
            if let Some(pose) = &report.pose {
                s += &record("pose", pose);
            }
            s
        }
        ReportFormat::Text => {
            let c = &report.clear;
            let mut s = String::new();
            let _ = writeln!(s, "{:<12} {:>10}", "metric", "value");
            let _ = writeln!(s, "{:<12} {:>10}", "FP", c.false_positives);
            let _ = writeln!(s, "{:<12} {:>10}", "FN", c.false_negatives);
            let _ = writeln!(s, "{:<12} {:>10}", "IDS", c.id_switches);
            let _ = writeln!(s, "{:<12} {:>10.4}", "MOTA", c.mota);
            let _ = writeln!(s, "{:<12} {:>10.4}", "RMSE [m]", c.rmse);
            let _ = writeln!(s, "{:<12} {:>10.4}", "IDF1", report.identity.idf1);
            let _ = writeln!(s, "{:<12} {:>10.4}", "OSPA2", report.ospa2);
            if let Some(p) = &report.pose {
                let _ = writeln!(s, "{:<12} {:>10.2}", "MPJPE [mm]", p.mpjpe_mm);
                let _ = writeln!(s, "{:<12} {:>10.2}", "PCK [%]", p.pck);
            }
            s
        }
    }
}

pub fn sweep(rows: &[SweepRow], format: ReportFormat) -> String {
    match format {
        ReportFormat::Records => rows.iter().map(|r| record("sweep", r)).collect(),
        ReportFormat::Text => {
            let mut s = format!("{:>8} {:>8} {:>8} {:>8}\n", "tau_c", "MOTA", "IDF1", "OSPA2");
            for r in rows {
                let _ = writeln!(s, "{:>8.2} {:>8.4} {:>8.4} {:>8.4}", r.tau_c, r.mota, r.idf1, r.ospa2);
            }
            s
        }
    }
}

pub fn reconfig(report: &ReconfigReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Records => {
            let mut s: String = report.segments.iter().map(|seg| record("segment", seg)).collect();
            s += &record(
                "reconfig",
                &serde_json::json!({
                    "baseline_final": report.final_baseline(),
                    "final": report.final_reconfigured(),
                    "baseline_id_switches": report.baseline_id_switches,
                    "id_switches": report.id_switches,
                    "baseline_series": report.baseline,
                    "series": report.reconfigured,
                }),
            );
            s
        }
        ReportFormat::Text => {
            let mut s = format!("{:>6} {:>6} {:<12} {:>10} {:>10}\n", "start", "end", "cameras", "baseline", "scheduled");
            for seg in &report.segments {
                let cams = seg.cameras.iter().map(u32::to_string).collect::<Vec<_>>().join(",");
                let _ = writeln!(s, "{:>6} {:>6} {:<12} {:>10.4} {:>10.4}", seg.start, seg.end, cams, seg.baseline_ospa2, seg.ospa2);
            }
            let _ = writeln!(
                s,
                "final OSPA2 {:.4} (baseline {:.4}), id switches {} (baseline {})",
                report.final_reconfigured(),
                report.final_baseline(),
                report.id_switches,
                report.baseline_id_switches
            );
            s
        }
    }
}

pub fn ablation(rows: &[AblationRow], format: ReportFormat) -> String {
    match format {
        ReportFormat::Records => rows.iter().map(|r| record("ablation", r)).collect(),
        ReportFormat::Text => {
            let mut s = format!("{:>6} {:>6} {:>12} {:>10} {:>8}\n", "rate", "runs", "MPJPE [mm]", "std", "MOTA");
            for r in rows {
                let _ = writeln!(
                    s,
                    "{:>6.2} {:>6} {:>12.2} {:>10.2} {:>8.4}",
                    r.rate, r.runs, r.mean_mpjpe_mm, r.std_mpjpe_mm, r.mean_mota
                );
            }
            s
        }
    }
}

/// Line plot of one or more `(frame, value)` series as a standalone SVG.
pub fn svg_plot(title: &str, y_label: &str, series: &[(&str, &[(u64, f64)])]) -> String {
    const W: f64 = 720.0;
    const H: f64 = 360.0;
    const M: f64 = 48.0;
    const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    let x_max = series.iter().flat_map(|(_, s)| s.iter().map(|p| p.0)).max().unwrap_or(1).max(1) as f64;
    let y_max = series.iter().flat_map(|(_, s)| s.iter().map(|p| p.1)).fold(0.0_f64, f64::max).max(1e-9);
    let px = |x: f64| M + (W - 2.0 * M) * x / x_max;
    let py = |y: f64| H - M - (H - 2.0 * M) * y / y_max;

    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    let _ = writeln!(s, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
    let _ = writeln!(s, "<text x=\"{}\" y=\"20\" text-anchor=\"middle\">{title}</text>", W / 2.0);
    let _ = writeln!(
        s,
        "<path d=\"M{M},{M} V{} H{}\" fill=\"none\" stroke=\"black\"/>",
        H - M,
        W - M
    );
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">frame</text>", W / 2.0, H - 12.0);
    let _ = writeln!(s, "<text x=\"14\" y=\"{}\" transform=\"rotate(-90 14 {})\" text-anchor=\"middle\">{y_label}</text>", H / 2.0, H / 2.0);
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{y_max:.2}</text>", M - 4.0, M + 4.0);
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">0</text>", M - 4.0, H - M + 4.0);
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_max}</text>", W - M, H - M + 16.0);
    for (k, (name, points)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let path: Vec<String> = points.iter().map(|(x, y)| format!("{:.1},{:.1}", px(*x as f64), py(*y))).collect();
        if !path.is_empty() {
            let _ = writeln!(s, "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>", path.join(" "));
        }
        let ly = M + 16.0 * k as f64;
        let _ = writeln!(s, "<text x=\"{}\" y=\"{ly}\" fill=\"{color}\" text-anchor=\"end\">{name}</text>", W - M);
    }
    s.push_str("</svg>\n");
    s
}
