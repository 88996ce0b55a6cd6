//! Self-contained SVG scatter plots with a y = x reference line. Square
//! axes on a shared range so the reference diagonal is meaningful.

const SIZE: f64 = 640.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 600.0;
const TOP: f64 = 60.0;
const BOTTOM: f64 = 560.0;
const TICKS: usize = 5;

fn tick_label(value: f64) -> String {
    let text = format!("{value:.2}");
    text.trim_end_matches('0').trim_end_matches('.').to_string()
}

pub fn scatter(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64)]) -> String {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &(x, y) in points {
        lo = lo.min(x).min(y);
        hi = hi.max(x).max(y);
    }
    if points.is_empty() {
        lo = 0.0;
        hi = 1.0;
    }
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 * hi.abs().max(1.0) };
    lo -= pad;
    hi += pad;
    let span = hi - lo;
    let to_x = |v: f64| LEFT + (v - lo) / span * (RIGHT - LEFT);
    let to_y = |v: f64| BOTTOM - (v - lo) / span * (BOTTOM - TOP);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" \
         viewBox=\"0 0 {SIZE} {SIZE}\" font-family=\"sans-serif\">\n"
    ));
    svg.push_str(&format!("  <rect width=\"{SIZE}\" height=\"{SIZE}\" fill=\"white\"/>\n"));
    svg.push_str(&format!(
        "  <text x=\"{:.0}\" y=\"32\" text-anchor=\"middle\" font-size=\"18\">{title}</text>\n",
        SIZE / 2.0
    ));
    // Axes.
    svg.push_str(&format!(
        "  <line x1=\"{LEFT}\" y1=\"{BOTTOM}\" x2=\"{RIGHT}\" y2=\"{BOTTOM}\" stroke=\"black\"/>\n"
    ));
    svg.push_str(&format!(
        "  <line x1=\"{LEFT}\" y1=\"{TOP}\" x2=\"{LEFT}\" y2=\"{BOTTOM}\" stroke=\"black\"/>\n"
    ));
    for i in 0..TICKS {
        let value = lo + span * i as f64 / (TICKS - 1) as f64;
        let x = to_x(value);
        let y = to_y(value);
        svg.push_str(&format!(
            "  <line x1=\"{x:.2}\" y1=\"{BOTTOM}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"black\"/>\n",
            BOTTOM + 6.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"12\">{}</text>\n",
            BOTTOM + 22.0,
            tick_label(value)
        ));
        svg.push_str(&format!(
            "  <line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{LEFT}\" y2=\"{y:.2}\" stroke=\"black\"/>\n",
            LEFT - 6.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" font-size=\"12\">{}</text>\n",
            LEFT - 10.0,
            y + 4.0,
            tick_label(value)
        ));
    }
    // y = x reference.
    svg.push_str(&format!(
        "  <line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#888\" \
         stroke-dasharray=\"6 4\"/>\n",
        to_x(lo),
        to_y(lo),
        to_x(hi),
        to_y(hi)
    ));
    for &(x, y) in points {
        svg.push_str(&format!(
            "  <circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"#3465a4\" fill-opacity=\"0.7\"/>\n",
            to_x(x),
            to_y(y)
        ));
    }
    svg.push_str(&format!(
        "  <text x=\"{:.0}\" y=\"{:.0}\" text-anchor=\"middle\" font-size=\"14\">{x_label}</text>\n",
        (LEFT + RIGHT) / 2.0,
        SIZE - 18.0
    ));
    svg.push_str(&format!(
        "  <text x=\"24\" y=\"{:.0}\" text-anchor=\"middle\" font-size=\"14\" \
         transform=\"rotate(-90 24 {:.0})\">{y_label}</text>\n",
        (TOP + BOTTOM) / 2.0,
        (TOP + BOTTOM) / 2.0
    ));
    svg.push_str("</svg>\n");
    svg
}
