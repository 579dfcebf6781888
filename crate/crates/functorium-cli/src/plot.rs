//! SVG scatter plots for 2-D objects: real points, generated points, and
//! cycle-mapped points in one frame.

use functorium::autodiff::Tensor;

pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    /// n × 2 row batch.
    pub points: Tensor,
}

const SIZE: f64 = 640.0;
const MARGIN: f64 = 48.0;

/// Renders series into one square frame with shared axes and a legend.
pub fn scatter_svg(title: &str, series: &[Series]) -> String {
    let (mut lo_x, mut hi_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut lo_y, mut hi_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for r in 0..s.points.rows().unwrap_or(0) {
            let row = s.points.row(r);
            lo_x = lo_x.min(row[0]);
            hi_x = hi_x.max(row[0]);
            lo_y = lo_y.min(row[1]);
            hi_y = hi_y.max(row[1]);
        }
    }
    if !lo_x.is_finite() {
        lo_x = -1.0;
        hi_x = 1.0;
        lo_y = -1.0;
        hi_y = 1.0;
    }
    let span = ((hi_x - lo_x).max(hi_y - lo_y)).max(1e-9);
    let scale = (SIZE - 2.0 * MARGIN) / span;
    let map_x = |x: f64| MARGIN + (x - lo_x) * scale;
    let map_y = |y: f64| SIZE - MARGIN - (y - lo_y) * scale;

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" \
         viewBox=\"0 0 {SIZE} {SIZE}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{MARGIN}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\">{title}</text>\n"
    );
    for (i, s) in series.iter().enumerate() {
        let ly = 24.0 + 18.0 * (i + 1) as f64;
        svg.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"4\" fill=\"{}\"/>\n\
             <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">{} ({} pts)</text>\n",
            MARGIN + 4.0,
            ly - 4.0,
            s.color,
            MARGIN + 14.0,
            ly,
            s.label,
            s.points.rows().unwrap_or(0)
        ));
    }
    for s in series {
        for r in 0..s.points.rows().unwrap_or(0) {
            let row = s.points.row(r);
            svg.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.2\" fill=\"{}\" fill-opacity=\"0.6\"/>\n",
                map_x(row[0]),
                map_y(row[1]),
                s.color
            ));
        }
    }
    svg.push_str("</svg>\n");
    svg
}
