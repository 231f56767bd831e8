//! Minimal SVG line plots.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

pub struct PlotSpec<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub log_x: bool,
    pub log_y: bool,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn axis(v: f64, log: bool) -> f64 {
    if log {
        v.log10()
    } else {
        v
    }
}

/// Renders the series as an SVG document.
pub fn render_svg(spec: &PlotSpec<'_>, series: &[Series]) -> Result<String> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter())
        .map(|(x, y)| (axis(*x, spec.log_x), axis(*y, spec.log_y)))
        .collect();
    if pts.is_empty() || pts.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::invalid("plot needs finite points (positive on log axes)"));
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for (x, y) in &pts {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut out = String::new();
    let w = |out: &mut String, s: String| out.push_str(&s);
    w(&mut out, format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    w(&mut out, format!("<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"));
    w(&mut out, format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        WIDTH / 2.0,
        escape(spec.title)
    ));
    w(&mut out, format!(
        "<line x1=\"{MARGIN}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n<line x1=\"{MARGIN}\" y1=\"{MARGIN}\" x2=\"{MARGIN}\" y2=\"{b}\" stroke=\"black\"/>\n",
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    ));
    for t in [0.0, 0.5, 1.0] {
        let xv = x0 + t * (x1 - x0);
        let yv = y0 + t * (y1 - y0);
        let xs = if spec.log_x { 10f64.powf(xv) } else { xv };
        let ys = if spec.log_y { 10f64.powf(yv) } else { yv };
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{:.3e}</text>",
            sx(xv),
            HEIGHT - MARGIN + 18.0,
            xs
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{:.3e}</text>",
            MARGIN - 6.0,
            sy(yv) + 4.0,
            ys
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
        WIDTH / 2.0,
        HEIGHT - 14.0,
        escape(spec.x_label)
    );
    let _ = writeln!(
        out,
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>",
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(spec.y_label)
    );
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = s
            .points
            .iter()
            .map(|(x, y)| {
                format!(
                    "{:.2},{:.2}",
                    sx(axis(*x, spec.log_x)),
                    sy(axis(*y, spec.log_y))
                )
            })
            .collect();
        let _ = writeln!(
            out,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>",
            path.join(" ")
        );
        for p in &path {
            let (cx, cy) = p.split_once(',').expect("formatted as x,y");
            let _ = writeln!(out, "<circle cx=\"{cx}\" cy=\"{cy}\" r=\"3\" fill=\"{color}\"/>");
        }
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{}</text>",
            WIDTH - MARGIN - 120.0,
            MARGIN + 16.0 * i as f64,
            escape(&s.name)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn write_svg(path: &Path, spec: &PlotSpec<'_>, series: &[Series]) -> Result<()> {
    std::fs::write(path, render_svg(spec, series)?)?;
    Ok(())
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_a_polyline() {
        let spec = PlotSpec {
            title: "MISE vs n",
            x_label: "n",
            y_label: "MISE",
            log_x: true,
            log_y: true,
        };
        let s = Series {
            name: "cutoff".into(),
            points: vec![(100.0, 0.1), (1000.0, 0.02)],
        };
        let svg = render_svg(&spec, &[s]).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("<polyline"));
        let bad = Series {
            name: "bad".into(),
            points: vec![(0.0, 1.0)],
        };
        assert!(render_svg(&spec, &[bad]).is_err());
    }
}
