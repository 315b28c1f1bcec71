//! Minimal deterministic SVG line charts for norm trajectories and
//! scaling fits. The renderer is a pure function of the chart value —
//! no timestamps, no randomness — so identical inputs produce
//! byte-identical SVG.

use crate::error::{MochError, Result};

#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 160.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const PALETTE: [&str; 6] = [
    "#1b6ca8", "#c0392b", "#1e8449", "#7d3c98", "#b7950b", "#34495e",
];

fn axis_transform(v: f64, log: bool) -> f64 {
    if log {
        v.ln()
    } else {
        v
    }
}

fn label_value(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 {
        "0".to_string()
    } else if (1e-3..1e5).contains(&a) {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.').to_string();
        if s.is_empty() || s == "-" {
            "0".to_string()
        } else {
            s
        }
    } else {
        format!("{v:.2e}")
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl LineChart {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> LineChart {
        LineChart {
            title: title.to_string(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            log_x: false,
            log_y: false,
            series: Vec::new(),
        }
    }

    pub fn with_series(mut self, label: &str, points: Vec<(f64, f64)>) -> LineChart {
        self.series.push(Series {
            label: label.to_string(),
            points,
        });
        self
    }

    /// Render to SVG. Log axes reject nonpositive coordinates.
    pub fn render(&self) -> Result<String> {
        if self.series.iter().all(|s| s.points.is_empty()) {
            return Err(MochError::invalid("chart has no points"));
        }
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for s in &self.series {
            for &(x, y) in &s.points {
                if !x.is_finite() || !y.is_finite() {
                    return Err(MochError::NonFinite("chart point"));
                }
                if (self.log_x && x <= 0.0) || (self.log_y && y <= 0.0) {
                    return Err(MochError::invalid(
                        "log-scale chart requires positive coordinates",
                    ));
                }
                xs.push(axis_transform(x, self.log_x));
                ys.push(axis_transform(y, self.log_y));
            }
        }
        let (mut x0, mut x1) = min_max(&xs);
        let (mut y0, mut y1) = min_max(&ys);
        if x1 - x0 < 1e-300 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        if y1 - y0 < 1e-300 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let plot_w = WIDTH - MARGIN_L - MARGIN_R;
        let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
        let px = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * plot_w;
        let py = |y: f64| MARGIN_T + plot_h - (y - y0) / (y1 - y0) * plot_h;

        let mut svg = String::new();
        svg.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
             viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"monospace\">\n"
        ));
        svg.push_str(&format!(
            "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
            MARGIN_L + plot_w / 2.0,
            escape(&self.title)
        ));
        svg.push_str(&format!(
            "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{plot_w:.1}\" height=\"{plot_h:.1}\" \
             fill=\"none\" stroke=\"#444444\"/>\n"
        ));

        // Five evenly spaced ticks per axis in transformed space.
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let tx = x0 + f * (x1 - x0);
            let xpix = px(tx);
            let raw = if self.log_x { tx.exp() } else { tx };
            svg.push_str(&format!(
                "<line x1=\"{xpix:.1}\" y1=\"{:.1}\" x2=\"{xpix:.1}\" y2=\"{:.1}\" stroke=\"#bbbbbb\"/>\n",
                MARGIN_T,
                MARGIN_T + plot_h
            ));
            svg.push_str(&format!(
                "<text x=\"{xpix:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"11\">{}</text>\n",
                MARGIN_T + plot_h + 18.0,
                label_value(raw)
            ));
            let ty = y0 + f * (y1 - y0);
            let ypix = py(ty);
            let raw = if self.log_y { ty.exp() } else { ty };
            svg.push_str(&format!(
                "<line x1=\"{MARGIN_L}\" y1=\"{ypix:.1}\" x2=\"{:.1}\" y2=\"{ypix:.1}\" stroke=\"#bbbbbb\"/>\n",
                MARGIN_L + plot_w
            ));
            svg.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-size=\"11\">{}</text>\n",
                MARGIN_L - 6.0,
                ypix + 4.0,
                label_value(raw)
            ));
        }
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"13\">{}</text>\n",
            MARGIN_L + plot_w / 2.0,
            HEIGHT - 10.0,
            escape(&self.x_label)
        ));
        svg.push_str(&format!(
            "<text x=\"18\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"13\" \
             transform=\"rotate(-90 18 {:.1})\">{}</text>\n",
            MARGIN_T + plot_h / 2.0,
            MARGIN_T + plot_h / 2.0,
            escape(&self.y_label)
        ));

        for (si, s) in self.series.iter().enumerate() {
            let color = PALETTE[si % PALETTE.len()];
            let pts: Vec<String> = s
                .points
                .iter()
                .map(|&(x, y)| {
                    format!(
                        "{:.2},{:.2}",
                        px(axis_transform(x, self.log_x)),
                        py(axis_transform(y, self.log_y))
                    )
                })
                .collect();
            svg.push_str(&format!(
                "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
                pts.join(" ")
            ));
            let ly = MARGIN_T + 16.0 + 18.0 * si as f64;
            svg.push_str(&format!(
                "<line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
                MARGIN_L + plot_w + 10.0,
                MARGIN_L + plot_w + 30.0
            ));
            svg.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\">{}</text>\n",
                MARGIN_L + plot_w + 36.0,
                ly + 4.0,
                escape(&s.label)
            ));
        }
        svg.push_str("</svg>\n");
        Ok(svg)
    }
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_polylines_and_legend() {
        let chart = LineChart::new("growth", "t", "norm")
            .with_series("sum", vec![(0.0, 1.0), (0.5, 1.4), (1.0, 2.2)])
            .with_series("weighted", vec![(0.0, 3.0), (1.0, 2.0)]);
        let svg = chart.render().unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("growth"));
        assert!(svg.contains("weighted"));
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn rendering_is_deterministic() {
        let chart = LineChart::new("a", "x", "y").with_series("s", vec![(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(chart.render().unwrap(), chart.render().unwrap());
    }

    #[test]
    fn degenerate_ranges_still_render() {
        let chart = LineChart::new("flat", "x", "y").with_series("s", vec![(1.0, 2.0)]);
        let svg = chart.render().unwrap();
        assert!(svg.contains("<polyline"));
    }

    #[test]
    fn log_axes_reject_nonpositive_points() {
        let mut chart = LineChart::new("fit", "N", "norm").with_series("s", vec![(0.0, 1.0), (2.0, 4.0)]);
        chart.log_x = true;
        assert!(chart.render().is_err());
        chart.series[0].points = vec![(1.0, 1.0), (2.0, 4.0)];
        assert!(chart.render().is_ok());
    }

    #[test]
    fn empty_chart_is_rejected() {
        assert!(LineChart::new("e", "x", "y").render().is_err());
        let chart = LineChart::new("e", "x", "y").with_series("s", vec![]);
        assert!(chart.render().is_err());
    }

    #[test]
    fn nonfinite_points_are_rejected() {
        let chart =
            LineChart::new("bad", "x", "y").with_series("s", vec![(0.0, f64::NAN), (1.0, 2.0)]);
        assert!(chart.render().is_err());
    }
}
