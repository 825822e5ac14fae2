//! Minimal SVG emission for the report figures: line charts (risk-coverage),
//! scatter plots with an optional diagonal guide (MSE vs variance), and
//! grouped bar charts (ID -> OOD deltas). Presentation only; nothing here
//! feeds back into computation.

pub const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesKind {
    Line,
    Scatter,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub color: String,
    pub kind: SeriesKind,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct Figure {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_log: bool,
    pub y_log: bool,
    /// Draw the dashed y = x guide line.
    pub diagonal_guide: bool,
    pub series: Vec<Series>,
}

const W: f64 = 640.0;
const H: f64 = 480.0;
const ML: f64 = 64.0;
const MR: f64 = 160.0;
const MT: f64 = 40.0;
const MB: f64 = 52.0;
const LOG_FLOOR: f64 = 1e-12;

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn of(values: impl Iterator<Item = f64>, log: bool) -> Axis {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in values {
            let v = if log { v.max(LOG_FLOOR).log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() || !hi.is_finite() {
            lo = 0.0;
            hi = 1.0;
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        let pad = 0.05 * (hi - lo);
        Axis {
            lo: lo - pad,
            hi: hi + pad,
            log,
        }
    }

    fn coord(&self, v: f64) -> f64 {
        let v = if self.log { v.max(LOG_FLOOR).log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        let n = 5;
        (0..=n)
            .map(|i| {
                let t = self.lo + (self.hi - self.lo) * i as f64 / n as f64;
                let label = if self.log {
                    format_short(10f64.powf(t))
                } else {
                    format_short(t)
                };
                ((t - self.lo) / (self.hi - self.lo), label)
            })
            .collect()
    }
}

fn format_short(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if (1e-3..1e4).contains(&a) {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.1e}")
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Figure {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Figure {
        Figure {
            title: title.to_string(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            x_log: false,
            y_log: false,
            diagonal_guide: false,
            series: Vec::new(),
        }
    }

    pub fn log_log(mut self) -> Figure {
        self.x_log = true;
        self.y_log = true;
        self
    }

    pub fn with_diagonal(mut self) -> Figure {
        self.diagonal_guide = true;
        self
    }

    pub fn add(&mut self, name: &str, kind: SeriesKind, points: Vec<(f64, f64)>) {
        let color = PALETTE[self.series.len() % PALETTE.len()].to_string();
        self.series.push(Series {
            name: name.to_string(),
            color,
            kind,
            points,
        });
    }

    pub fn render(&self) -> String {
        let xs = self.series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
        let ys = self.series.iter().flat_map(|s| s.points.iter().map(|p| p.1));
        let ax = Axis::of(xs, self.x_log);
        let ay = Axis::of(ys, self.y_log);

        let pw = W - ML - MR;
        let ph = H - MT - MB;
        let px = |v: f64| ML + pw * ax.coord(v);
        let py = |v: f64| MT + ph * (1.0 - ay.coord(v));

        let mut svg = String::new();
        svg.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
        ));
        svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">{}</text>\n",
            ML + pw / 2.0,
            esc(&self.title)
        ));

        for (frac, label) in ax.ticks() {
            let x = ML + pw * frac;
            svg.push_str(&format!(
                "<line x1=\"{x:.1}\" y1=\"{}\" x2=\"{x:.1}\" y2=\"{}\" stroke=\"#eee\"/>\n",
                MT,
                MT + ph
            ));
            svg.push_str(&format!(
                "<text x=\"{x:.1}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
                MT + ph + 16.0,
                esc(&label)
            ));
        }
        for (frac, label) in ay.ticks() {
            let y = MT + ph * (1.0 - frac);
            svg.push_str(&format!(
                "<line x1=\"{}\" y1=\"{y:.1}\" x2=\"{}\" y2=\"{y:.1}\" stroke=\"#eee\"/>\n",
                ML,
                ML + pw
            ));
            svg.push_str(&format!(
                "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
                ML - 6.0,
                y + 4.0,
                esc(&label)
            ));
        }
        svg.push_str(&format!(
            "<rect x=\"{ML}\" y=\"{MT}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"#333\"/>\n"
        ));

        if self.diagonal_guide {
            // y = x across the visible overlap of both axes.
            let lo = if self.x_log || self.y_log {
                10f64.powf(ax.lo.max(ay.lo))
            } else {
                ax.lo.max(ay.lo)
            };
            let hi = if self.x_log || self.y_log {
                10f64.powf(ax.hi.min(ay.hi))
            } else {
                ax.hi.min(ay.hi)
            };
            if hi > lo {
                svg.push_str(&format!(
                    "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#555\" stroke-dasharray=\"6 4\"/>\n",
                    px(lo),
                    py(lo),
                    px(hi),
                    py(hi)
                ));
            }
        }

        for s in &self.series {
            match s.kind {
                SeriesKind::Line => {
                    let pts: Vec<String> = s
                        .points
                        .iter()
                        .map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y)))
                        .collect();
                    svg.push_str(&format!(
                        "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.8\"/>\n",
                        pts.join(" "),
                        s.color
                    ));
                }
                SeriesKind::Scatter => {
                    for &(x, y) in &s.points {
                        svg.push_str(&format!(
                            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"2.6\" fill=\"{}\" fill-opacity=\"0.65\"/>\n",
                            px(x),
                            py(y),
                            s.color
                        ));
                    }
                }
            }
        }

        for (i, s) in self.series.iter().enumerate() {
            let y = MT + 14.0 + 18.0 * i as f64;
            let x = ML + pw + 12.0;
            svg.push_str(&format!(
                "<rect x=\"{x}\" y=\"{:.1}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n",
                y - 10.0,
                s.color
            ));
            svg.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{y:.1}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
                x + 16.0,
                esc(&s.name)
            ));
        }

        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            ML + pw / 2.0,
            H - 12.0,
            esc(&self.x_label)
        ));
        svg.push_str(&format!(
            "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 16 {})\">{}</text>\n",
            MT + ph / 2.0,
            MT + ph / 2.0,
            esc(&self.y_label)
        ));
        svg.push_str("</svg>\n");
        svg
    }
}

/// Grouped bar chart: one group per category, one bar per series.
#[derive(Debug, Clone)]
pub struct BarChart {
    pub title: String,
    pub groups: Vec<String>,
    pub series: Vec<(String, Vec<f64>)>,
}

impl BarChart {
    pub fn render(&self) -> String {
        let pw = W - ML - MR;
        let ph = H - MT - MB;
        let all: Vec<f64> = self.series.iter().flat_map(|(_, v)| v.iter().copied()).collect();
        let mut lo = all.iter().cloned().fold(0.0f64, f64::min);
        let mut hi = all.iter().cloned().fold(0.0f64, f64::max);
        if hi - lo < 1e-12 {
            hi = lo + 1.0;
        }
        let pad = 0.08 * (hi - lo);
        lo -= pad;
        hi += pad;
        let py = |v: f64| MT + ph * (1.0 - (v - lo) / (hi - lo));

        let mut svg = String::new();
        svg.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
        ));
        svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">{}</text>\n",
            ML + pw / 2.0,
            esc(&self.title)
        ));

        for i in 0..=5 {
            let v = lo + (hi - lo) * i as f64 / 5.0;
            let y = py(v);
            svg.push_str(&format!(
                "<line x1=\"{ML}\" y1=\"{y:.1}\" x2=\"{}\" y2=\"{y:.1}\" stroke=\"#eee\"/>\n",
                ML + pw
            ));
            svg.push_str(&format!(
                "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
                ML - 6.0,
                y + 4.0,
                format_short(v)
            ));
        }

        let ng = self.groups.len().max(1);
        let ns = self.series.len().max(1);
        let group_w = pw / ng as f64;
        let bar_w = (group_w * 0.8) / ns as f64;
        let zero_y = py(0.0);
        for (gi, group) in self.groups.iter().enumerate() {
            let gx = ML + group_w * gi as f64 + group_w * 0.1;
            for (si, (_, values)) in self.series.iter().enumerate() {
                let v = values.get(gi).copied().unwrap_or(0.0);
                let x = gx + bar_w * si as f64;
                let (top, height) = if v >= 0.0 {
                    (py(v), zero_y - py(v))
                } else {
                    (zero_y, py(v) - zero_y)
                };
                svg.push_str(&format!(
                    "<rect x=\"{x:.1}\" y=\"{top:.1}\" width=\"{bar_w:.1}\" height=\"{:.1}\" fill=\"{}\"/>\n",
                    height.max(0.5),
                    PALETTE[si % PALETTE.len()]
                ));
            }
            svg.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">{}</text>\n",
                gx + group_w * 0.4,
                MT + ph + 16.0,
                esc(group)
            ));
        }
        svg.push_str(&format!(
            "<line x1=\"{ML}\" y1=\"{zero_y:.1}\" x2=\"{}\" y2=\"{zero_y:.1}\" stroke=\"#333\"/>\n",
            ML + pw
        ));

        for (i, (name, _)) in self.series.iter().enumerate() {
            let y = MT + 14.0 + 18.0 * i as f64;
            let x = ML + pw + 12.0;
            svg.push_str(&format!(
                "<rect x=\"{x}\" y=\"{:.1}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n",
                y - 10.0,
                PALETTE[i % PALETTE.len()]
            ));
            svg.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{y:.1}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
                x + 16.0,
                esc(name)
            ));
        }
        svg.push_str("</svg>\n");
        svg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn figures_render_wellformed_svg() {
        let mut fig = Figure::new("demo", "coverage", "risk");
        fig.add("a", SeriesKind::Line, vec![(0.1, 0.2), (0.5, 0.4), (1.0, 0.9)]);
        fig.add("b", SeriesKind::Scatter, vec![(0.2, 0.1), (0.8, 0.7)]);
        let svg = fig.render();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("polyline"));
        assert!(svg.contains("circle"));

        let scatter = Figure::new("s", "var", "mse").log_log().with_diagonal();
        let svg = scatter.render();
        assert!(svg.contains("</svg>"));

        let bars = BarChart {
            title: "deltas".into(),
            groups: vec!["m1".into(), "m2".into()],
            series: vec![("d_mse".into(), vec![0.5, -0.2]), ("d_var".into(), vec![0.1, 0.3])],
        };
        let svg = bars.render();
        assert!(svg.contains("rect"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}
