//! Hand-written SVG; every number is printed with fixed precision so the same
//! inputs always give the same bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{CellSummary, RocCurve};
use crate::error::{Error, Result};

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];
const W: f64 = 520.0;
const H: f64 = 440.0;
const LEFT: f64 = 60.0;
const TOP: f64 = 30.0;
const PLOT_W: f64 = 300.0;
const PLOT_H: f64 = 340.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="18" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + PLOT_W / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, xlabel: &str, ylabel: &str, ymin: f64, ymax: f64) {
    let bottom = TOP + PLOT_H;
    let _ = writeln!(
        out,
        r#"<rect x="{LEFT}" y="{TOP}" width="{PLOT_W}" height="{PLOT_H}" fill="none" stroke="black"/>"#
    );
    for k in 0..=5 {
        let f = k as f64 / 5.0;
        let y = bottom - f * PLOT_H;
        let _ = writeln!(
            out,
            r##"<line x1="{:.1}" y1="{y:.1}" x2="{LEFT}" y2="{y:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{:.2}</text>"##,
            LEFT - 4.0,
            LEFT - 6.0,
            y + 4.0,
            ymin + f * (ymax - ymin)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        LEFT + PLOT_W / 2.0,
        bottom + 36.0,
        escape(xlabel)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        TOP + PLOT_H / 2.0,
        TOP + PLOT_H / 2.0,
        escape(ylabel)
    );
}

fn legend(out: &mut String, entries: &[(String, &str)]) {
    for (k, (label, color)) in entries.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * k as f64;
        let x = LEFT + PLOT_W + 14.0;
        let _ = writeln!(
            out,
            r#"<rect x="{x:.1}" y="{:.1}" width="12" height="12" fill="{color}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            y - 10.0,
            x + 17.0,
            y,
            escape(label)
        );
    }
}

/// ROC curves with the chance diagonal; `None` for an empty list.
pub fn roc_svg(curves: &[(String, RocCurve)]) -> Option<String> {
    if curves.is_empty() {
        return None;
    }
    let mut out = String::new();
    header(&mut out, "Clean vs noisy ROC");
    axes(&mut out, "false positive rate", "true positive rate", 0.0, 1.0);
    let px = |f: f64| LEFT + f * PLOT_W;
    let py = |t: f64| TOP + PLOT_H - t * PLOT_H;
    let _ = writeln!(
        out,
        r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#888888" stroke-dasharray="4 4"/>"##,
        px(0.0),
        py(0.0),
        px(1.0),
        py(1.0)
    );
    let mut entries = Vec::new();
    for (k, (name, c)) in curves.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = c
            .fpr
            .iter()
            .zip(&c.tpr)
            .map(|(&f, &t)| format!("{:.2},{:.2}", px(f), py(t)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        entries.push((format!("{name} (AUC {:.3})", c.auc), color));
    }
    legend(&mut out, &entries);
    out.push_str("</svg>\n");
    Some(out)
}

/// Mean test accuracy per method, grouped by noise rate, with ±1 std whiskers.
pub fn score_bars_svg(cells: &[CellSummary]) -> Option<String> {
    if cells.is_empty() {
        return None;
    }
    let mut methods: Vec<&str> = cells.iter().map(|c| c.method.as_str()).collect();
    methods.dedup();
    methods.sort_unstable();
    methods.dedup();
    let mut noises: Vec<f64> = cells.iter().map(|c| c.noise_rate).collect();
    noises.sort_by(f64::total_cmp);
    noises.dedup();
    let lo = cells
        .iter()
        .map(|c| c.mean_accuracy - c.std_accuracy)
        .fold(f64::INFINITY, f64::min);
    let ymin = ((lo - 0.02) * 20.0).floor() / 20.0;
    let ymin = ymin.clamp(0.0, 0.95);
    let ymax = 1.0;
    let mut out = String::new();
    header(&mut out, "Test accuracy after filtering");
    axes(&mut out, "noise rate", "test accuracy", ymin, ymax);
    let group_w = PLOT_W / noises.len() as f64;
    let bar_w = group_w * 0.8 / methods.len() as f64;
    let py = |a: f64| TOP + PLOT_H - ((a - ymin) / (ymax - ymin)).clamp(0.0, 1.0) * PLOT_H;
    for (g, &noise) in noises.iter().enumerate() {
        let gx = LEFT + g as f64 * group_w;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{:.0}%</text>"#,
            gx + group_w / 2.0,
            TOP + PLOT_H + 16.0,
            noise * 100.0
        );
        for (m, method) in methods.iter().enumerate() {
            let Some(c) = cells.iter().find(|c| c.method == *method && c.noise_rate == noise) else {
                continue;
            };
            let x = gx + group_w * 0.1 + m as f64 * bar_w;
            let top = py(c.mean_accuracy);
            let color = PALETTE[m % PALETTE.len()];
            let _ = writeln!(
                out,
                r#"<rect x="{x:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{color}"/>"#,
                bar_w * 0.9,
                TOP + PLOT_H - top
            );
            let cx = x + bar_w * 0.45;
            let _ = writeln!(
                out,
                r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
                py(c.mean_accuracy - c.std_accuracy),
                py(c.mean_accuracy + c.std_accuracy)
            );
        }
    }
    let entries: Vec<(String, &str)> = methods
        .iter()
        .enumerate()
        .map(|(m, name)| (name.to_string(), PALETTE[m % PALETTE.len()]))
        .collect();
    legend(&mut out, &entries);
    out.push_str("</svg>\n");
    Some(out)
}

/// Writes `roc.svg` and `scores.svg` into `out_dir`; empty inputs are
/// skipped with a warning. Returns the files written.
pub fn render_plots(curves: &[(String, RocCurve)], cells: &[CellSummary], out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut emit = |name: &str, svg: Option<String>| -> Result<()> {
        match svg {
            Some(text) => {
                let path = out_dir.join(name);
                std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
                written.push(path);
            }
            None => log::warn!("nothing to plot for {name}; skipped"),
        }
        Ok(())
    };
    emit("roc.svg", roc_svg(curves))?;
    emit("scores.svg", score_bars_svg(cells))?;
    Ok(written)
}
