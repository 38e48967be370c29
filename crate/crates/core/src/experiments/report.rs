//! Deterministic CSV tables and SVG plots for experiment results. Byte-stable
//! for a given result: no timestamps, fixed float formatting.

use std::fmt::Write as _;

use super::montage::MontageStressResult;
use super::scaling::{ScalingRunResult, TrialMetrics};

pub const SCALING_CSV_HEADER: &str =
    "axis,label,x,subset_len,trial,seed,auc,mcc,cross_entropy,final_loss,diverged";
pub const MONTAGE_CSV_HEADER: &str = "fraction,affected,auc_degradation_pct,mcc_degradation_pct";

/// One row per (grid point, trial).
pub fn scaling_csv(result: &ScalingRunResult) -> String {
    let mut out = String::from(SCALING_CSV_HEADER);
    out.push('\n');
    let cell = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for point in &result.points {
        for (t, trial) in point.trials.iter().enumerate() {
            let TrialMetrics { seed, auc, mcc, cross_entropy, final_loss, diverged } = trial;
            let _ = writeln!(
                out,
                "{},{},{:.6},{},{},{},{},{},{},{},{}",
                result.axis.name(),
                point.label,
                point.x,
                point.subset_len,
                t,
                seed,
                cell(*auc),
                cell(*mcc),
                cell(*cross_entropy),
                cell(*final_loss),
                u8::from(*diverged),
            );
        }
    }
    out
}

/// One row per (fraction, affected-channel count) cell.
pub fn montage_csv(result: &MontageStressResult) -> String {
    let mut out = String::from(MONTAGE_CSV_HEADER);
    out.push('\n');
    for cell in &result.cells {
        let _ = writeln!(
            out,
            "{:.2},{},{:.6},{:.6}",
            cell.fraction, cell.affected, cell.auc_degradation_pct, cell.mcc_degradation_pct
        );
    }
    out
}

const PLOT_W: f64 = 640.0;
const PLOT_H: f64 = 420.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 28.0;
const MARGIN_B: f64 = 48.0;

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        let t = (v - self.x_min) / (self.x_max - self.x_min);
        MARGIN_L + t * (PLOT_W - MARGIN_L - MARGIN_R)
    }

    fn y(&self, v: f64) -> f64 {
        let t = (v - self.y_min) / (self.y_max - self.y_min);
        PLOT_H - MARGIN_B - t * (PLOT_H - MARGIN_T - MARGIN_B)
    }
}

fn svg_open(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{PLOT_W}\" height=\"{PLOT_H}\" \
         viewBox=\"0 0 {PLOT_W} {PLOT_H}\" font-family=\"monospace\" font-size=\"12\">"
    );
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"18\" text-anchor=\"middle\">{title}</text>",
        PLOT_W / 2.0
    );
}

fn svg_axes(out: &mut String, x_label: &str, y_label: &str) {
    let x0 = MARGIN_L;
    let x1 = PLOT_W - MARGIN_R;
    let y0 = PLOT_H - MARGIN_B;
    let y1 = MARGIN_T;
    let _ = writeln!(
        out,
        "<path d=\"M {x0:.1} {y1:.1} L {x0:.1} {y0:.1} L {x1:.1} {y0:.1}\" fill=\"none\" \
         stroke=\"black\"/>"
    );
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{x_label}</text>",
        (x0 + x1) / 2.0,
        PLOT_H - 12.0
    );
    let _ = writeln!(
        out,
        "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">\
         {y_label}</text>",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
}

/// Log-x scatter of per-point metric bands with the fitted power laws.
pub fn scaling_svg(result: &ScalingRunResult) -> String {
    let mut out = String::new();
    svg_open(&mut out, &format!("scaling ({} axis)", result.axis.name()));
    if result.points.is_empty() {
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">no points</text>",
            PLOT_W / 2.0,
            PLOT_H / 2.0
        );
        out.push_str("</svg>\n");
        return out;
    }
    let xs: Vec<f64> = result.points.iter().map(|p| p.x.log10()).collect();
    let lows: Vec<f64> = result
        .points
        .iter()
        .flat_map(|p| [p.auc, p.mcc])
        .flatten()
        .map(|b| b.min)
        .collect();
    let x_min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let x_max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let pad = if x_max > x_min { 0.05 * (x_max - x_min) } else { 0.5 };
    let y_min = lows.iter().cloned().fold(0.0, f64::min);
    let frame = Frame {
        x_min: x_min - pad,
        x_max: x_max + pad,
        y_min: y_min - 0.05,
        y_max: 1.05,
    };
    svg_axes(&mut out, &format!("log10({})", result.axis.name()), "metric");

    for (metric, color) in [("auc", "#1f77b4"), ("mcc", "#d62728")] {
        let fit = if metric == "auc" { &result.auc_fit } else { &result.mcc_fit };
        if let Some(f) = fit {
            let gx0 = result.points.first().unwrap().x;
            let gx1 = result.points.last().unwrap().x;
            let fy = |x: f64| (f.coefficient * x.powf(f.exponent)).clamp(frame.y_min, frame.y_max);
            let _ = writeln!(
                out,
                "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"{color}\" \
                 stroke-dasharray=\"4 3\"/>",
                frame.x(gx0.log10()),
                frame.y(fy(gx0)),
                frame.x(gx1.log10()),
                frame.y(fy(gx1)),
            );
        }
        for point in &result.points {
            let Some(band) = (if metric == "auc" { point.auc } else { point.mcc }) else {
                continue;
            };
            let px = frame.x(point.x.log10());
            let _ = writeln!(
                out,
                "<line x1=\"{px:.1}\" y1=\"{:.1}\" x2=\"{px:.1}\" y2=\"{:.1}\" stroke=\"{color}\"/>",
                frame.y(band.min),
                frame.y(band.max),
            );
            let _ = writeln!(
                out,
                "<circle cx=\"{px:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"{color}\"/>",
                frame.y(band.median),
            );
        }
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" fill=\"{color}\">{metric}</text>",
            PLOT_W - MARGIN_R - 52.0,
            MARGIN_T + if metric == "auc" { 14.0 } else { 30.0 },
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Drop fraction against mean percentage degradation, one polyline per
/// (metric, affected-channel count).
pub fn montage_svg(result: &MontageStressResult) -> String {
    let mut out = String::new();
    svg_open(&mut out, "montage degradation");
    if result.cells.is_empty() {
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">no cells</text>",
            PLOT_W / 2.0,
            PLOT_H / 2.0
        );
        out.push_str("</svg>\n");
        return out;
    }
    let y_top = result
        .cells
        .iter()
        .flat_map(|c| [c.auc_degradation_pct, c.mcc_degradation_pct])
        .fold(1.0_f64, f64::max);
    let frame = Frame { x_min: 0.0, x_max: 1.0, y_min: 0.0, y_max: y_top * 1.1 };
    svg_axes(&mut out, "drop fraction", "degradation %");

    let mut affected: Vec<usize> = result.cells.iter().map(|c| c.affected).collect();
    affected.sort_unstable();
    affected.dedup();
    for (i, &a) in affected.iter().enumerate() {
        for (metric, dash) in [("auc", "none"), ("mcc", "4 3")] {
            let mut path = String::new();
            for cell in result.cells.iter().filter(|c| c.affected == a) {
                let v = if metric == "auc" {
                    cell.auc_degradation_pct
                } else {
                    cell.mcc_degradation_pct
                };
                let cmd = if path.is_empty() { 'M' } else { 'L' };
                let _ = write!(path, "{cmd} {:.1} {:.1} ", frame.x(cell.fraction), frame.y(v));
            }
            let hue = (i * 67) % 360;
            let _ = writeln!(
                out,
                "<path d=\"{}\" fill=\"none\" stroke=\"hsl({hue},70%,45%)\" \
                 stroke-dasharray=\"{dash}\"/>",
                path.trim_end(),
            );
        }
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" fill=\"hsl({},70%,45%)\">{a} ch</text>",
            PLOT_W - MARGIN_R - 48.0,
            MARGIN_T + 14.0 * (i as f64 + 1.0),
            (i * 67) % 360,
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\">solid auc, dashed mcc</text>",
        MARGIN_L + 8.0,
        MARGIN_T + 14.0
    );
    out.push_str("</svg>\n");
    out
}
