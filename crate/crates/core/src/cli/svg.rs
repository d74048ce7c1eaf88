//! Minimal SVG output. Numbers are printed with fixed precision so that equal
//! inputs give byte-identical files.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD_L: f64 = 60.0;
const PAD_R: f64 = 20.0;
const PAD_T: f64 = 30.0;
const PAD_B: f64 = 45.0;

pub const PALETTE: [&str; 10] =
    ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];

/// Faded fill for basin regions.
const BASIN: [&str; 10] =
    ["#c6dbef", "#fdd0a2", "#c7e9c0", "#fcbba1", "#dadaeb", "#d9c2bd", "#f7c8e0", "#d9d9d9", "#ecedb0", "#b9e9ef"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Frame {
        let span = |it: &mut dyn Iterator<Item = f64>| {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for v in it.filter(|v| v.is_finite()) {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if !lo.is_finite() {
                return (0.0, 1.0);
            }
            if hi - lo < 1e-12 {
                return (lo - 0.5, hi + 0.5);
            }
            (lo, hi)
        };
        let (x0, x1) = span(&mut xs.clone());
        let (y0, y1) = span(&mut ys.clone());
        Frame { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        PAD_L + (x - self.x0) / (self.x1 - self.x0) * (W - PAD_L - PAD_R)
    }

    fn py(&self, y: f64) -> f64 {
        H - PAD_B - (y - self.y0) / (self.y1 - self.y0) * (H - PAD_T - PAD_B)
    }
}

fn open(out: &mut String, title: &str) {
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{:.1}\" y=\"18\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n",
        W / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, f: &Frame, x_label: &str, y_label: &str) {
    let (l, r, t, b) = (PAD_L, W - PAD_R, PAD_T, H - PAD_B);
    let _ = writeln!(
        out,
        "<polyline fill=\"none\" stroke=\"black\" points=\"{l:.1},{t:.1} {l:.1},{b:.1} {r:.1},{b:.1}\"/>"
    );
    for k in 0..=4 {
        let fx = f.x0 + (f.x1 - f.x0) * k as f64 / 4.0;
        let fy = f.y0 + (f.y1 - f.y0) * k as f64 / 4.0;
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">{}</text>",
            f.px(fx),
            b + 14.0,
            tick(fx)
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">{}</text>",
            l - 4.0,
            f.py(fy) + 3.0,
            tick(fy)
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{}</text>",
        (l + r) / 2.0,
        H - 8.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        "<text x=\"14\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.1})\">{}</text>",
        (t + b) / 2.0,
        (t + b) / 2.0,
        escape(y_label)
    );
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
    }
}

fn polyline(out: &mut String, f: &Frame, pts: &[(f64, f64)], color: &str, width: f64) {
    let mut s = String::new();
    for (x, y) in pts.iter().filter(|(x, y)| x.is_finite() && y.is_finite()) {
        let _ = write!(s, "{:.2},{:.2} ", f.px(*x), f.py(*y));
    }
    let _ = writeln!(
        out,
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\" points=\"{}\"/>",
        s.trim_end()
    );
}

fn legend(out: &mut String, names: &[&str]) {
    for (k, name) in names.iter().enumerate() {
        let y = PAD_T + 12.0 * k as f64 + 6.0;
        let x = W - PAD_R - 90.0;
        let _ = writeln!(
            out,
            "<rect x=\"{x:.1}\" y=\"{:.1}\" width=\"10\" height=\"3\" fill=\"{}\"/><text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\">{}</text>",
            y - 3.0,
            PALETTE[k % PALETTE.len()],
            x + 14.0,
            y + 1.0,
            escape(name)
        );
    }
}

/// One polyline per series.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let f = Frame::fit(
        series.iter().flat_map(|s| s.1.iter().map(|p| p.0)),
        series.iter().flat_map(|s| s.1.iter().map(|p| p.1)),
    );
    let mut out = String::new();
    open(&mut out, title);
    axes(&mut out, &f, x_label, y_label);
    for (k, (_, pts)) in series.iter().enumerate() {
        polyline(&mut out, &f, pts, PALETTE[k % PALETTE.len()], 1.5);
    }
    let names: Vec<&str> = series.iter().map(|s| s.0.as_str()).collect();
    legend(&mut out, &names);
    out.push_str("</svg>\n");
    out
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Box (quartiles), whiskers (range) and median per group.
pub fn box_plot(title: &str, y_label: &str, groups: &[(String, Vec<f64>)]) -> String {
    let k = groups.len().max(1) as f64;
    let f = Frame::fit([0.0, k].into_iter(), groups.iter().flat_map(|g| g.1.iter().copied()).chain([0.0]));
    let mut out = String::new();
    open(&mut out, title);
    let (l, r, t, b) = (PAD_L, W - PAD_R, PAD_T, H - PAD_B);
    let _ = writeln!(
        out,
        "<polyline fill=\"none\" stroke=\"black\" points=\"{l:.1},{t:.1} {l:.1},{b:.1} {r:.1},{b:.1}\"/>"
    );
    for j in 0..=4 {
        let fy = f.y0 + (f.y1 - f.y0) * j as f64 / 4.0;
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">{}</text>",
            l - 4.0,
            f.py(fy) + 3.0,
            tick(fy)
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"14\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.1})\">{}</text>",
        (t + b) / 2.0,
        (t + b) / 2.0,
        escape(y_label)
    );
    for (i, (name, vals)) in groups.iter().enumerate() {
        let cx = f.px(i as f64 + 0.5);
        let half = 0.25 * (f.px(1.0) - f.px(0.0));
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            out,
            "<text x=\"{cx:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{}</text>",
            b + 16.0,
            escape(name)
        );
        let mut v: Vec<f64> = vals.iter().copied().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            continue;
        }
        v.sort_by(f64::total_cmp);
        let (q0, q1, q2, q3, q4) = (v[0], quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75), v[v.len() - 1]);
        let _ = writeln!(
            out,
            "<line x1=\"{cx:.1}\" y1=\"{:.2}\" x2=\"{cx:.1}\" y2=\"{:.2}\" stroke=\"{color}\"/>",
            f.py(q0),
            f.py(q4)
        );
        let _ = writeln!(
            out,
            "<rect x=\"{:.1}\" y=\"{:.2}\" width=\"{:.1}\" height=\"{:.2}\" fill=\"white\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
            cx - half,
            f.py(q3),
            2.0 * half,
            (f.py(q1) - f.py(q3)).max(0.5)
        );
        let _ = writeln!(
            out,
            "<line x1=\"{:.1}\" y1=\"{:.2}\" x2=\"{:.1}\" y2=\"{:.2}\" stroke=\"{color}\" stroke-width=\"2.5\"/>",
            cx - half,
            f.py(q2),
            cx + half,
            f.py(q2)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Basin map in a 2-D plane with a projected trajectory on top.
///
/// `basins[row][col]` is the index of the attractor reached from that cell,
/// rows running from the bottom of the extent to the top.
pub fn projection_plot(
    title: &str,
    extent: (f64, f64, f64, f64),
    basins: &[Vec<Option<usize>>],
    trajectory: &[(f64, f64)],
    attractors: &[(f64, f64)],
) -> String {
    let (x0, x1, y0, y1) = extent;
    let f = Frame { x0, x1, y0, y1 };
    let mut out = String::new();
    open(&mut out, title);
    let rows = basins.len();
    for (i, row) in basins.iter().enumerate() {
        let cols = row.len();
        let (ya, yb) = (y0 + (y1 - y0) * i as f64 / rows as f64, y0 + (y1 - y0) * (i + 1) as f64 / rows as f64);
        let mut j = 0;
        while j < cols {
            let label = row[j];
            let mut k = j + 1;
            while k < cols && row[k] == label {
                k += 1;
            }
            if let Some(a) = label {
                let (xa, xb) = (x0 + (x1 - x0) * j as f64 / cols as f64, x0 + (x1 - x0) * k as f64 / cols as f64);
                let _ = writeln!(
                    out,
                    "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>",
                    f.px(xa),
                    f.py(yb),
                    f.px(xb) - f.px(xa),
                    f.py(ya) - f.py(yb),
                    BASIN[a % BASIN.len()]
                );
            }
            j = k;
        }
    }
    axes(&mut out, &f, "PC 1", "PC 2");
    polyline(&mut out, &f, trajectory, "black", 1.2);
    for (a, (x, y)) in attractors.iter().enumerate() {
        let _ = writeln!(
            out,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"{}\" stroke=\"black\"/>",
            f.px(*x),
            f.py(*y),
            PALETTE[a % PALETTE.len()]
        );
    }
    out.push_str("</svg>\n");
    out
}
