use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub struct SvgStyle {
    pub stroke: String,
    pub stroke_width: f64,
    pub width_px: u32,
    pub height_px: u32,
}

impl Default for SvgStyle {
    fn default() -> Self {
        SvgStyle {
            stroke: "#1d3557".into(),
            stroke_width: 1.0,
            width_px: 800,
            height_px: 800,
        }
    }
}

/// One closed polyline through `points` (math orientation, y up) in a viewBox
/// fitted to the data with a 5% margin on every side.
pub fn emit_svg(points: &[(f64, f64)], style: &SvgStyle) -> String {
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(0.0 - y);
        y1 = y1.max(0.0 - y);
    }
    if points.is_empty() {
        (x0, x1, y0, y1) = (-1.0, 1.0, -1.0, 1.0);
    }
    let mx = 0.05 * (x1 - x0).max(f64::MIN_POSITIVE);
    let my = 0.05 * (y1 - y0).max(f64::MIN_POSITIVE);
    let mut pts = String::with_capacity(points.len() * 32);
    for (i, &(x, y)) in points.iter().chain(points.first()).enumerate() {
        if i > 0 {
            pts.push(' ');
        }
        let _ = write!(pts, "{:.10},{:.10}", x, 0.0 - y);
    }
    format!(
        concat!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n",
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"{vx:.10} {vy:.10} {vw:.10} {vh:.10}\">\n",
            "<polyline fill=\"none\" stroke=\"{stroke}\" stroke-width=\"{sw}\" vector-effect=\"non-scaling-stroke\" stroke-linejoin=\"round\" points=\"{pts}\"/>\n",
            "</svg>\n"
        ),
        w = style.width_px,
        h = style.height_px,
        vx = x0 - mx,
        vy = y0 - my,
        vw = x1 - x0 + 2.0 * mx,
        vh = y1 - y0 + 2.0 * my,
        stroke = style.stroke,
        sw = style.stroke_width,
        pts = pts,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn viewbox_has_five_percent_margin() {
        let svg = emit_svg(&[(0.0, 0.0), (10.0, 0.0), (10.0, 20.0)], &SvgStyle::default());
        assert!(svg.contains("viewBox=\"-0.5000000000 -21.0000000000 11.0000000000 22.0000000000\""), "{svg}");
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.contains("points=\"0.0000000000,0.0000000000 10.0000000000,0.0000000000 10.0000000000,-20.0000000000 0.0000000000,0.0000000000\""));
    }

    #[test]
    fn deterministic() {
        let pts: Vec<(f64, f64)> = (0..100).map(|i| ((i as f64).cos(), (i as f64).sin())).collect();
        assert_eq!(emit_svg(&pts, &SvgStyle::default()), emit_svg(&pts, &SvgStyle::default()));
    }
}
