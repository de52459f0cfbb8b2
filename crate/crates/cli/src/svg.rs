//! Minimal SVG plots: labelled scatter, line curves and log-log fits.

use std::fmt::Write as _;
use std::path::Path;

use ne_core::Embedding;

/// Scatter plots keep at most this many marks.
pub const MAX_MARKS: usize = 50_000;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 48.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

fn color(label: i64) -> String {
    let k = label.rem_euclid(1 << 20) as usize;
    if k < PALETTE.len() {
        PALETTE[k].to_string()
    } else {
        format!("hsl({}, 60%, 45%)", (k * 137) % 360)
    }
}

/// Maps data ranges onto the plot area.
struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        let range = |v: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = v
                .filter(|x| x.is_finite())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| {
                    (a.min(x), b.max(x))
                });
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi > lo {
                (lo, hi)
            } else {
                (lo - 0.5, hi + 0.5)
            }
        };
        Self {
            x: range(&mut xs.clone()),
            y: range(&mut ys.clone()),
        }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn header(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    s
}

fn axes(s: &mut String, frame: &Frame, xlabel: &str, ylabel: &str) {
    let (x0, x1) = (MARGIN, WIDTH - MARGIN);
    let (y0, y1) = (HEIGHT - MARGIN, MARGIN);
    let _ = writeln!(
        s,
        r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" fill="none" stroke="black" stroke-width="1"/>"#
    );
    let tick = |v: f64| {
        if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
            format!("{v:.1e}")
        } else {
            format!("{v:.3}")
        }
    };
    let _ = writeln!(
        s,
        r#"<g font-family="sans-serif" font-size="10"><text x="{x0}" y="{}">{}</text><text x="{x1}" y="{}" text-anchor="end">{}</text><text x="{}" y="{y0}" text-anchor="end">{}</text><text x="{}" y="{}" text-anchor="end">{}</text></g>"#,
        y0 + 14.0,
        tick(frame.x.0),
        y0 + 14.0,
        tick(frame.x.1),
        x0 - 4.0,
        tick(frame.y.0),
        x0 - 4.0,
        y1 + 10.0,
        tick(frame.y.1)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 10.0,
        escape(xlabel)
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(ylabel)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Evenly strided subset of at most `MAX_MARKS` indices.
fn downsample(n: usize) -> Vec<usize> {
    if n <= MAX_MARKS {
        (0..n).collect()
    } else {
        (0..MAX_MARKS).map(|k| k * n / MAX_MARKS).collect()
    }
}

pub fn scatter(y: &Embedding, labels: Option<&[i64]>, title: &str) -> String {
    let c = y.coords();
    let frame = Frame::new(c.iter().map(|p| p[0]), c.iter().map(|p| p[1]));
    let mut s = header(title);
    let radius = if c.len() > 10_000 { 0.8 } else { 1.8 };
    let _ = writeln!(s, r#"<g stroke="none" fill-opacity="0.7">"#);
    for i in downsample(c.len()) {
        let fill = labels.map_or_else(|| "#333333".to_string(), |l| color(l[i]));
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="{radius}" fill="{fill}"/>"#,
            frame.px(c[i][0]),
            frame.py(c[i][1])
        );
    }
    s.push_str("</g>\n</svg>\n");
    s
}

/// One named curve.
pub struct Series<'a> {
    pub name: &'a str,
    pub points: Vec<(f64, f64)>,
}

fn polyline(s: &mut String, frame: &Frame, points: &[(f64, f64)], stroke: &str, dashed: bool) {
    let path: Vec<String> = points
        .iter()
        .filter(|p| p.0.is_finite() && p.1.is_finite())
        .map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y)))
        .collect();
    let dash = if dashed {
        r#" stroke-dasharray="6 4""#
    } else {
        ""
    };
    let _ = writeln!(
        s,
        r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="1.5"{dash}/>"#,
        path.join(" ")
    );
    for p in path {
        let (x, y) = p.split_once(',').unwrap();
        let _ = writeln!(s, r#"<circle cx="{x}" cy="{y}" r="2.5" fill="{stroke}"/>"#);
    }
}

fn legend(s: &mut String, names: &[&str]) {
    for (k, name) in names.iter().enumerate() {
        let y = MARGIN + 14.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<g font-family="sans-serif" font-size="11"><rect x="{}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}">{}</text></g>"#,
            WIDTH - MARGIN - 110.0,
            y - 9.0,
            PALETTE[k % PALETTE.len()],
            WIDTH - MARGIN - 95.0,
            y,
            escape(name)
        );
    }
}

/// Curves over a log10-scaled x axis.
pub fn curves_log_x(series: &[Series<'_>], title: &str, xlabel: &str, ylabel: &str) -> String {
    let logged: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| s.points.iter().map(|&(x, y)| (x.log10(), y)).collect())
        .collect();
    let all = logged.iter().flatten();
    let frame = Frame::new(all.clone().map(|p| p.0), all.map(|p| p.1));
    let mut s = header(title);
    axes(&mut s, &frame, &format!("log10 {xlabel}"), ylabel);
    for (k, pts) in logged.iter().enumerate() {
        polyline(&mut s, &frame, pts, PALETTE[k % PALETTE.len()], false);
    }
    legend(&mut s, &series.iter().map(|s| s.name).collect::<Vec<_>>());
    s.push_str("</svg>\n");
    s
}

/// Log-log scatter with the fitted line `log10 y = intercept + slope log10 x`.
pub fn loglog_fit(
    points: &[(f64, f64)],
    fit: Option<(f64, f64)>,
    title: &str,
    xlabel: &str,
    ylabel: &str,
) -> String {
    let logged: Vec<(f64, f64)> = points
        .iter()
        .map(|&(x, y)| (x.log10(), y.log10()))
        .collect();
    let frame = Frame::new(logged.iter().map(|p| p.0), logged.iter().map(|p| p.1));
    let mut s = header(title);
    axes(
        &mut s,
        &frame,
        &format!("log10 {xlabel}"),
        &format!("log10 {ylabel}"),
    );
    polyline(&mut s, &frame, &logged, PALETTE[0], false);
    if let Some((intercept, slope)) = fit {
        let line = [frame.x.0, frame.x.1].map(|x| (x, intercept + slope * x));
        polyline(&mut s, &frame, &line, "#7f7f7f", true);
        legend(&mut s, &["estimates", &format!("fit, slope {slope:.3}")]);
    }
    s.push_str("</svg>\n");
    s
}

pub fn write(path: &Path, svg: &str) -> std::io::Result<()> {
    std::fs::write(path, svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scatter_is_capped() {
        let coords: Vec<[f64; 2]> = (0..60_000).map(|i| [i as f64, (i % 7) as f64]).collect();
        let y = Embedding::new(coords).unwrap();
        let svg = scatter(&y, None, "big");
        assert_eq!(svg.matches("<circle").count(), MAX_MARKS);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn labels_pick_palette_colors() {
        let y = Embedding::new(vec![[0.0, 0.0], [1.0, 1.0]]).unwrap();
        let svg = scatter(&y, Some(&[0, 1]), "a < b");
        assert!(svg.contains(PALETTE[0]) && svg.contains(PALETTE[1]));
        assert!(svg.contains("a &lt; b"));
    }

    #[test]
    fn fit_line_is_drawn() {
        let svg = loglog_fit(
            &[(10.0, 1.0), (100.0, 0.1)],
            Some((1.0, -1.0)),
            "t",
            "n",
            "g",
        );
        assert!(svg.contains("stroke-dasharray") && svg.contains("slope -1.000"));
    }
}
