//! Minimal SVG charts for the report.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;

pub const PALETTE: [&str; 9] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#17becf",
];

enum Mark {
    Line {
        pts: Vec<(f64, f64)>,
        color: String,
        label: Option<String>,
    },
    Points {
        pts: Vec<(f64, f64)>,
        colors: Vec<String>,
        radius: f64,
    },
    Bars {
        edges: Vec<f64>,
        heights: Vec<f64>,
        color: String,
        label: Option<String>,
    },
    Segment {
        a: (f64, f64),
        b: (f64, f64),
        color: String,
    },
}

pub struct Chart {
    title: String,
    x_label: String,
    y_label: String,
    marks: Vec<Mark>,
}

/// Linear blend across a blue-to-yellow ramp for `t` in `[0, 1]`.
pub fn ramp(t: f64) -> String {
    const STOPS: [(f64, f64, f64); 5] = [
        (68.0, 1.0, 84.0),
        (59.0, 82.0, 139.0),
        (33.0, 145.0, 140.0),
        (94.0, 201.0, 98.0),
        (253.0, 231.0, 37.0),
    ];
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let x = t * (STOPS.len() - 1) as f64;
    let i = (x.floor() as usize).min(STOPS.len() - 2);
    let f = x - i as f64;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    let mix = |p: f64, q: f64| (p + (q - p) * f).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Colors for `values` scaled to their own range.
pub fn ramp_colors(values: &[f64]) -> Vec<String> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|&v| ramp(if hi > lo { (v - lo) / (hi - lo) } else { 0.5 }))
        .collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e5).contains(&a) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

impl Chart {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            marks: Vec::new(),
        }
    }

    pub fn line(&mut self, xs: &[f64], ys: &[f64], color: &str, label: Option<&str>) -> &mut Self {
        self.marks.push(Mark::Line {
            pts: xs.iter().copied().zip(ys.iter().copied()).collect(),
            color: color.into(),
            label: label.map(Into::into),
        });
        self
    }

    pub fn points(&mut self, pts: &[(f64, f64)], colors: Vec<String>, radius: f64) -> &mut Self {
        self.marks.push(Mark::Points {
            pts: pts.to_vec(),
            colors,
            radius,
        });
        self
    }

    pub fn uniform_points(&mut self, pts: &[(f64, f64)], color: &str, radius: f64) -> &mut Self {
        self.points(pts, vec![color.to_string(); pts.len()], radius)
    }

    pub fn bars(&mut self, edges: &[f64], heights: &[f64], color: &str, label: Option<&str>) -> &mut Self {
        self.marks.push(Mark::Bars {
            edges: edges.to_vec(),
            heights: heights.to_vec(),
            color: color.into(),
            label: label.map(Into::into),
        });
        self
    }

    pub fn segment(&mut self, a: (f64, f64), b: (f64, f64), color: &str) -> &mut Self {
        self.marks.push(Mark::Segment { a, b, color: color.into() });
        self
    }

    fn extent(&self) -> ((f64, f64), (f64, f64)) {
        let mut xs = (f64::INFINITY, f64::NEG_INFINITY);
        let mut ys = (f64::INFINITY, f64::NEG_INFINITY);
        let mut take = |x: f64, y: f64| {
            if x.is_finite() && y.is_finite() {
                xs = (xs.0.min(x), xs.1.max(x));
                ys = (ys.0.min(y), ys.1.max(y));
            }
        };
        for m in &self.marks {
            match m {
                Mark::Line { pts, .. } | Mark::Points { pts, .. } => pts.iter().for_each(|p| take(p.0, p.1)),
                Mark::Bars { edges, heights, .. } => {
                    for (w, h) in edges.windows(2).zip(heights) {
                        take(w[0], 0.0);
                        take(w[1], *h);
                    }
                }
                Mark::Segment { a, b, .. } => {
                    take(a.0, a.1);
                    take(b.0, b.1);
                }
            }
        }
        let pad = |r: (f64, f64)| {
            if !r.0.is_finite() {
                (0.0, 1.0)
            } else if r.1 - r.0 <= 0.0 {
                let d = if r.0 == 0.0 { 1.0 } else { r.0.abs() * 0.1 };
                (r.0 - d, r.1 + d)
            } else {
                let d = 0.04 * (r.1 - r.0);
                (r.0 - d, r.1 + d)
            }
        };
        (pad(xs), pad(ys))
    }

    pub fn render(&self) -> String {
        let ((x0, x1), (y0, y1)) = self.extent();
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        for k in 0..=4 {
            let fx = x0 + (x1 - x0) * k as f64 / 4.0;
            let fy = y0 + (y1 - y0) * k as f64 / 4.0;
            let _ = writeln!(
                s,
                r##"<line x1="{0:.1}" y1="{1:.1}" x2="{0:.1}" y2="{2:.1}" stroke="#eee"/><text x="{0:.1}" y="{3:.1}" text-anchor="middle">{4}</text>"##,
                sx(fx),
                TOP,
                TOP + ph,
                TOP + ph + 16.0,
                tick_label(fx)
            );
            let _ = writeln!(
                s,
                r##"<line x1="{0:.1}" y1="{1:.1}" x2="{2:.1}" y2="{1:.1}" stroke="#eee"/><text x="{3:.1}" y="{4:.1}" text-anchor="end">{5}</text>"##,
                LEFT,
                sy(fy),
                LEFT + pw,
                LEFT - 6.0,
                sy(fy) + 4.0,
                tick_label(fy)
            );
        }
        let _ = writeln!(
            s,
            r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );

        let mut legend = Vec::new();
        for m in &self.marks {
            match m {
                Mark::Bars {
                    edges,
                    heights,
                    color,
                    label,
                } => {
                    for (w, h) in edges.windows(2).zip(heights) {
                        let (top, base) = (sy(h.max(0.0)), sy(0.0f64.max(y0)));
                        let _ = writeln!(
                            s,
                            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.55"/>"#,
                            sx(w[0]),
                            top,
                            (sx(w[1]) - sx(w[0])).max(0.5),
                            (base - top).max(0.0)
                        );
                    }
                    if let Some(l) = label {
                        legend.push((l.clone(), color.clone()));
                    }
                }
                Mark::Line { pts, color, label } => {
                    let path: Vec<String> = pts
                        .iter()
                        .filter(|p| p.0.is_finite() && p.1.is_finite())
                        .map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1)))
                        .collect();
                    let _ = writeln!(
                        s,
                        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.6"/>"#,
                        path.join(" ")
                    );
                    if let Some(l) = label {
                        legend.push((l.clone(), color.clone()));
                    }
                }
                Mark::Points { pts, colors, radius } => {
                    for (p, c) in pts.iter().zip(colors) {
                        if p.0.is_finite() && p.1.is_finite() {
                            let _ = writeln!(
                                s,
                                r#"<circle cx="{:.2}" cy="{:.2}" r="{radius}" fill="{c}" fill-opacity="0.8"/>"#,
                                sx(p.0),
                                sy(p.1)
                            );
                        }
                    }
                }
                Mark::Segment { a, b, color } => {
                    let _ = writeln!(
                        s,
                        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="1.2"/>"#,
                        sx(a.0),
                        sy(a.1),
                        sx(b.0),
                        sy(b.1)
                    );
                }
            }
        }
        for (k, (label, color)) in legend.iter().enumerate() {
            let y = TOP + 14.0 + 16.0 * k as f64;
            let x = LEFT + pw - 150.0;
            let _ = writeln!(
                s,
                r#"<rect x="{x}" y="{}" width="12" height="10" fill="{color}"/><text x="{}" y="{}">{}</text>"#,
                y - 9.0,
                x + 18.0,
                y,
                escape(label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_every_mark() {
        let mut c = Chart::new("t <1>", "x", "y");
        c.line(&[0.0, 1.0], &[1.0, 2.0], PALETTE[0], Some("a"))
            .bars(&[0.0, 0.5, 1.0], &[0.2, 0.8], PALETTE[1], None)
            .uniform_points(&[(0.5, 0.5)], PALETTE[2], 3.0)
            .segment((0.0, 0.0), (1.0, 1.0), "#000");
        let s = c.render();
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert!(s.contains("polyline") && s.contains("circle") && s.contains("t &lt;1&gt;"));
    }

    #[test]
    fn empty_and_flat_charts_render() {
        assert!(Chart::new("e", "x", "y").render().contains("</svg>"));
        let mut c = Chart::new("flat", "x", "y");
        c.line(&[1.0, 1.0], &[2.0, 2.0], "#000", None);
        assert!(!c.render().contains("NaN"));
    }

    #[test]
    fn ramp_endpoints() {
        assert_eq!(ramp(0.0), "#440154");
        assert_eq!(ramp(1.0), "#fde725");
        assert_eq!(ramp(f64::NAN), "#440154");
    }
}
