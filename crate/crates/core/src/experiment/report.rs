//! `results.csv` and `plot.svg` output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::sweep::{Method, ResultsTable};
use crate::{Error, Result};

pub const CSV_HEADER: [&str; 6] = ["epsilon", "method", "seed", "test_loss", "train_objective", "rho_used"];

/// 17 significant digits, enough to round-trip any f64.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v:.16e}")
    }
}

/// Mean test-loss curve per method present in the table.
pub fn mean_curves(table: &ResultsTable) -> Vec<(Method, Vec<(f64, f64)>)> {
    Method::ALL
        .into_iter()
        .filter(|m| table.rows.iter().any(|r| r.method == *m))
        .map(|m| (m, table.mean_test_loss(m)))
        .filter(|(_, c)| !c.is_empty())
        .collect()
}

#[derive(Debug, Clone)]
pub struct ReportPaths {
    pub csv: PathBuf,
    pub svg: PathBuf,
}

pub fn emit_report(table: &ResultsTable, out_dir: &Path) -> Result<ReportPaths> {
    if table.rows.is_empty() {
        return Err(Error::Config("cannot report an empty results table".into()));
    }
    fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join("results.csv");
    fs::write(&csv_path, render_csv(table)?)?;
    let svg_path = out_dir.join("plot.svg");
    fs::write(&svg_path, render_svg(table))?;
    Ok(ReportPaths { csv: csv_path, svg: svg_path })
}

pub fn render_csv(table: &ResultsTable) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in &table.rows {
        w.write_record([
            format_float(r.epsilon),
            r.method.name().to_string(),
            r.seed.to_string(),
            format_float(r.test_loss),
            format_float(r.train_objective),
            format_float(r.rho_used),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 20.0;
const MARGIN_B: f64 = 50.0;

fn dash(method: Method) -> &'static str {
    match method {
        Method::GaussDro => "",
        Method::LipschitzReg => " stroke-dasharray=\"8 4\"",
        Method::PlainErm => " stroke-dasharray=\"2 3\"",
    }
}

/// Mean test loss against epsilon on a log-x axis, one line style per method.
///
/// Every plotted point carries `data-method`, `data-epsilon` and `data-mean`
/// attributes holding the exact values.
pub fn render_svg(table: &ResultsTable) -> String {
    let curves = mean_curves(table);
    let points = curves.iter().flat_map(|(_, c)| c.iter());
    let (mut x_lo, mut x_hi, mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(e, m) in points {
        x_lo = x_lo.min(e.log10());
        x_hi = x_hi.max(e.log10());
        y_lo = y_lo.min(m);
        y_hi = y_hi.max(m);
    }
    if !x_lo.is_finite() {
        (x_lo, x_hi, y_lo, y_hi) = (0.0, 1.0, 0.0, 1.0);
    }
    if x_hi - x_lo < 1e-12 {
        x_lo -= 0.5;
        x_hi += 0.5;
    }
    let pad = ((y_hi - y_lo) * 0.05).max(y_hi.abs() * 1e-6).max(1e-12);
    y_lo -= pad;
    y_hi += pad;
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let sx = |e: f64| MARGIN_L + (e.log10() - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = |v: f64| MARGIN_T + (y_hi - v) / (y_hi - y_lo) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let _ = writeln!(
        s,
        "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{plot_w}\" height=\"{plot_h}\" fill=\"none\" stroke=\"black\"/>"
    );
    for decade in (x_lo.ceil() as i32)..=(x_hi.floor() as i32) {
        let x = sx(10f64.powi(decade));
        let _ = writeln!(
            s,
            "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"black\"/><text x=\"{x:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\">1e{decade}</text>",
            MARGIN_T + plot_h,
            MARGIN_T + plot_h + 5.0,
            MARGIN_T + plot_h + 20.0
        );
    }
    for k in 0..=4 {
        let v = y_lo + (y_hi - y_lo) * k as f64 / 4.0;
        let y = sy(v);
        let _ = writeln!(
            s,
            "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{MARGIN_L}\" y2=\"{y:.2}\" stroke=\"black\"/><text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"end\">{v:.4}</text>",
            MARGIN_L - 5.0,
            MARGIN_L - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"13\" text-anchor=\"middle\">epsilon</text>",
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        s,
        "<text x=\"15\" y=\"{:.2}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 15 {:.2})\">mean test loss</text>",
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0
    );

    for (idx, (method, curve)) in curves.iter().enumerate() {
        let pts: Vec<String> = curve.iter().map(|&(e, m)| format!("{:.2},{:.2}", sx(e), sy(m))).collect();
        let _ = writeln!(
            s,
            "<polyline fill=\"none\" stroke=\"black\" stroke-width=\"1.5\"{} points=\"{}\"/>",
            dash(*method),
            pts.join(" ")
        );
        for &(e, m) in curve {
            let _ = writeln!(
                s,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" data-method=\"{}\" data-epsilon=\"{}\" data-mean=\"{}\"/>",
                sx(e),
                sy(m),
                method.name(),
                format_float(e),
                format_float(m)
            );
        }
        let ly = MARGIN_T + 20.0 + 20.0 * idx as f64;
        let lx = WIDTH - MARGIN_R + 10.0;
        let _ = writeln!(
            s,
            "<line x1=\"{lx:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" stroke=\"black\" stroke-width=\"1.5\"{}/><text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\">{}</text>",
            lx + 30.0,
            dash(*method),
            lx + 36.0,
            ly + 4.0,
            method.name()
        );
    }
    s.push_str("</svg>\n");
    s
}
