//! Minimal static SVG emitter: log-x line plots and boxplots.

use std::fmt::Write;

use kspec::stats::FiveNumber;

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 220.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

pub const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];
pub const DASHES: [&str; 4] = ["6,4", "2,3", "10,3,2,3", "1,6"];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub color: &'static str,
    pub dash: Option<&'static str>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        (LEFT + WIDTH - RIGHT) / 2.0,
        escape(title)
    );
}

fn frame(out: &mut String, x_label: &str, y_label: &str) {
    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, HEIGHT - BOTTOM, TOP);
    let _ = write!(
        out,
        "<rect x=\"{x0}\" y=\"{y1}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n\
         <text x=\"18\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{}</text>\n",
        x1 - x0,
        y0 - y1,
        (x0 + x1) / 2.0,
        HEIGHT - 18.0,
        escape(x_label),
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

fn y_axis(out: &mut String, lo: f64, hi: f64) -> impl Fn(f64) -> f64 {
    let map = move |v: f64| HEIGHT - BOTTOM - (v - lo) / (hi - lo) * (HEIGHT - BOTTOM - TOP);
    for k in 0..=5 {
        let v = lo + (hi - lo) * k as f64 / 5.0;
        let y = map(v);
        let _ = writeln!(
            out,
            "<line x1=\"{}\" y1=\"{y:.2}\" x2=\"{LEFT}\" y2=\"{y:.2}\" stroke=\"black\"/><text x=\"{}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>",
            LEFT - 5.0,
            LEFT - 8.0,
            y + 4.0,
            tick_label(v)
        );
    }
    map
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" { "0".into() } else { s.into() }
}

fn legend(out: &mut String, entries: &[(&str, &str, Option<&str>)]) {
    let x = WIDTH - RIGHT + 15.0;
    for (k, (label, color, dash)) in entries.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * k as f64;
        let dash = dash.map(|d| format!(" stroke-dasharray=\"{d}\"")).unwrap_or_default();
        let _ = writeln!(
            out,
            "<line x1=\"{x}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"{color}\" stroke-width=\"2\"{dash}/><text x=\"{}\" y=\"{}\">{}</text>",
            x + 30.0,
            x + 36.0,
            y + 4.0,
            escape(label)
        );
    }
}

/// Line plot with a base-10 logarithmic x axis and y clipped to `[0, 1]`.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let xs = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .filter(|x| *x > 0.0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for x in xs {
        lo = lo.min(x.log10());
        hi = hi.max(x.log10());
    }
    if !lo.is_finite() {
        (lo, hi) = (-4.0, 0.0);
    }
    lo = lo.floor();
    hi = hi.ceil().max(lo + 1.0);
    let mut out = String::new();
    header(&mut out, title);
    frame(&mut out, x_label, y_label);
    let map_x = |x: f64| LEFT + (x.log10() - lo) / (hi - lo) * (WIDTH - RIGHT - LEFT);
    for d in (lo as i32)..=(hi as i32) {
        let x = map_x(10f64.powi(d));
        let _ = writeln!(
            out,
            "<line x1=\"{x:.2}\" y1=\"{}\" x2=\"{x:.2}\" y2=\"{}\" stroke=\"black\"/><text x=\"{x:.2}\" y=\"{}\" text-anchor=\"middle\">1e{d}</text>",
            HEIGHT - BOTTOM,
            HEIGHT - BOTTOM + 5.0,
            HEIGHT - BOTTOM + 20.0
        );
    }
    let map_y = y_axis(&mut out, 0.0, 1.0);
    for s in series {
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| *x > 0.0 && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", map_x(x), map_y(y.clamp(0.0, 1.0))))
            .collect();
        if pts.is_empty() {
            continue;
        }
        let dash = s.dash.map(|d| format!(" stroke-dasharray=\"{d}\"")).unwrap_or_default();
        let _ = writeln!(
            out,
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.8\"{dash} points=\"{}\"/>",
            s.color,
            pts.join(" ")
        );
    }
    let entries: Vec<(&str, &str, Option<&str>)> =
        series.iter().map(|s| (s.label.as_str(), s.color, s.dash)).collect();
    legend(&mut out, &entries);
    out.push_str("</svg>\n");
    out
}

/// One box per label: whiskers at min/max, box from Q1 to Q3, median line.
pub fn boxplot(title: &str, y_label: &str, labels: &[String], boxes: &[FiveNumber]) -> String {
    let lo = boxes.iter().map(|b| b.min).fold(f64::INFINITY, f64::min);
    let hi = boxes.iter().map(|b| b.max).fold(f64::NEG_INFINITY, f64::max);
    let pad = ((hi - lo) * 0.05).max(1e-12);
    let (lo, hi) = (lo - pad, hi + pad);
    let mut out = String::new();
    header(&mut out, title);
    frame(&mut out, "eigenvalue order", y_label);
    let map_y = y_axis(&mut out, lo, hi);
    let slot = (WIDTH - RIGHT - LEFT) / boxes.len().max(1) as f64;
    let half = (slot * 0.3).min(18.0);
    for (k, (b, label)) in boxes.iter().zip(labels).enumerate() {
        let cx = LEFT + slot * (k as f64 + 0.5);
        let (ymin, yq1, ymed, yq3, ymax) =
            (map_y(b.min), map_y(b.q1), map_y(b.median), map_y(b.q3), map_y(b.max));
        let _ = write!(
            out,
            "<line x1=\"{cx:.2}\" y1=\"{ymax:.2}\" x2=\"{cx:.2}\" y2=\"{yq3:.2}\" stroke=\"black\"/>\n\
             <line x1=\"{cx:.2}\" y1=\"{yq1:.2}\" x2=\"{cx:.2}\" y2=\"{ymin:.2}\" stroke=\"black\"/>\n\
             <line x1=\"{:.2}\" y1=\"{ymax:.2}\" x2=\"{:.2}\" y2=\"{ymax:.2}\" stroke=\"black\"/>\n\
             <line x1=\"{:.2}\" y1=\"{ymin:.2}\" x2=\"{:.2}\" y2=\"{ymin:.2}\" stroke=\"black\"/>\n\
             <rect x=\"{:.2}\" y=\"{yq3:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\" fill-opacity=\"0.35\" stroke=\"black\"/>\n\
             <line x1=\"{:.2}\" y1=\"{ymed:.2}\" x2=\"{:.2}\" y2=\"{ymed:.2}\" stroke=\"black\" stroke-width=\"2\"/>\n\
             <text x=\"{cx:.2}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            cx - half / 2.0,
            cx + half / 2.0,
            cx - half / 2.0,
            cx + half / 2.0,
            cx - half,
            2.0 * half,
            (yq1 - yq3).max(0.0),
            PALETTE[0],
            cx - half,
            cx + half,
            HEIGHT - BOTTOM + 18.0,
            escape(label)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_plot_is_well_formed() {
        let s = Series {
            label: "a<b".into(),
            points: vec![(1e-3, 0.9), (1e-1, 0.2), (1.0, 2.0)],
            color: PALETTE[0],
            dash: Some(DASHES[0]),
        };
        let svg = line_plot("t", "x", "y", &[s]);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("a&lt;b"));
        assert_eq!(svg.matches("<polyline").count(), 1);
    }

    #[test]
    fn boxplot_draws_each_box() {
        let b = FiveNumber { min: 0.0, q1: 1.0, median: 2.0, q3: 3.0, max: 4.0 };
        let svg = boxplot("t", "v", &["1".into(), "2".into()], &[b, b]);
        assert_eq!(svg.matches("<rect x=").count(), 3);
    }
}
