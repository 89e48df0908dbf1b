//! Dependency-free SVG line charts for loss curves.
//!
//! One chart holds any number of training logs; each log contributes a
//! translucent raw-loss line and a solid EMA line in the same color, so
//! multiple runs (e.g. different model sizes) can be overlaid and compared.

/// One training log's curve data.
pub struct Series {
    pub name: String,
    /// (step, loss) per logged step.
    pub raw: Vec<(f64, f64)>,
    /// (step, ema_loss) per logged step.
    pub ema: Vec<(f64, f64)>,
}

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 540.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 44.0;
const MARGIN_BOTTOM: f64 = 56.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Round tick labels: trims float noise without scientific notation for the
/// magnitudes loss curves produce.
fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let magnitude = v.abs();
    let formatted = if magnitude >= 1000.0 {
        format!("{v:.0}")
    } else if magnitude >= 10.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.3}")
    };
    let trimmed = formatted.trim_end_matches('0').trim_end_matches('.');
    if trimmed.is_empty() {
        "0".to_string()
    } else {
        trimmed.to_string()
    }
}

/// Evenly spaced tick positions across [lo, hi].
fn ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..=n)
        .map(|i| lo + (hi - lo) * (i as f64 / n as f64))
        .collect()
}

struct Scale {
    x_lo: f64,
    x_hi: f64,
    y_lo: f64,
    y_hi: f64,
}

impl Scale {
    fn x(&self, v: f64) -> f64 {
        let span = (self.x_hi - self.x_lo).max(f64::MIN_POSITIVE);
        MARGIN_LEFT + (v - self.x_lo) / span * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn y(&self, v: f64) -> f64 {
        let span = (self.y_hi - self.y_lo).max(f64::MIN_POSITIVE);
        // SVG y grows downward; larger losses sit higher on the chart.
        HEIGHT - MARGIN_BOTTOM - (v - self.y_lo) / span * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

fn polyline(points: &[(f64, f64)], scale: &Scale, style: &str) -> String {
    if points.is_empty() {
        return String::new();
    }
    let coords: Vec<String> = points
        .iter()
        .map(|&(x, y)| format!("{:.2},{:.2}", scale.x(x), scale.y(y)))
        .collect();
    format!("  <polyline fill=\"none\" {style} points=\"{}\"/>\n", coords.join(" "))
}

/// Render the chart. Raw lines are translucent, EMA lines solid; the legend
/// names every series. The output is a complete standalone SVG document.
pub fn render_loss_chart(series: &[Series], title: &str) -> String {
    assert!(!series.is_empty(), "chart needs at least one series");
    let mut x_lo = f64::INFINITY;
    let mut x_hi = f64::NEG_INFINITY;
    let mut y_lo = f64::INFINITY;
    let mut y_hi = f64::NEG_INFINITY;
    for s in series {
        for &(x, y) in s.raw.iter().chain(&s.ema) {
            x_lo = x_lo.min(x);
            x_hi = x_hi.max(x);
            y_lo = y_lo.min(y);
            y_hi = y_hi.max(y);
        }
    }
    if !(x_lo.is_finite() && y_lo.is_finite()) {
        x_lo = 0.0;
        x_hi = 1.0;
        y_lo = 0.0;
        y_hi = 1.0;
    }
    if x_lo == x_hi {
        x_hi = x_lo + 1.0;
    }
    if y_lo == y_hi {
        y_hi = y_lo + 1.0;
    }
    let pad = (y_hi - y_lo) * 0.05;
    let scale = Scale {
        x_lo,
        x_hi,
        y_lo: (y_lo - pad).max(0.0_f64.min(y_lo)),
        y_hi: y_hi + pad,
    };

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">\n"
    ));
    svg.push_str(&format!(
        "  <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{:.0}\" y=\"26\" font-size=\"17\" fill=\"#222\">{}</text>\n",
        MARGIN_LEFT,
        escape(title)
    ));

    // Grid and ticks.
    for &ty in &ticks(scale.y_lo, scale.y_hi, 5) {
        let y = scale.y(ty);
        svg.push_str(&format!(
            "  <line x1=\"{MARGIN_LEFT:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" \
             stroke=\"#ddd\" stroke-width=\"1\"/>\n",
            WIDTH - MARGIN_RIGHT
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" fill=\"#444\" \
             text-anchor=\"end\">{}</text>\n",
            MARGIN_LEFT - 8.0,
            y + 4.0,
            tick_label(ty)
        ));
    }
    for &tx in &ticks(scale.x_lo, scale.x_hi, 6) {
        let x = scale.x(tx);
        svg.push_str(&format!(
            "  <line x1=\"{x:.1}\" y1=\"{MARGIN_TOP:.1}\" x2=\"{x:.1}\" y2=\"{:.1}\" \
             stroke=\"#eee\" stroke-width=\"1\"/>\n",
            HEIGHT - MARGIN_BOTTOM
        ));
        svg.push_str(&format!(
            "  <text x=\"{x:.1}\" y=\"{:.1}\" font-size=\"12\" fill=\"#444\" \
             text-anchor=\"middle\">{}</text>\n",
            HEIGHT - MARGIN_BOTTOM + 18.0,
            tick_label(tx)
        ));
    }

    // Axis labels.
    svg.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"13\" fill=\"#222\" \
         text-anchor=\"middle\">step</text>\n",
        (MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0,
        HEIGHT - 14.0
    ));
    svg.push_str(&format!(
        "  <text x=\"18\" y=\"{:.1}\" font-size=\"13\" fill=\"#222\" text-anchor=\"middle\" \
         transform=\"rotate(-90 18 {:.1})\">loss</text>\n",
        (MARGIN_TOP + HEIGHT - MARGIN_BOTTOM) / 2.0,
        (MARGIN_TOP + HEIGHT - MARGIN_BOTTOM) / 2.0
    ));

    // Axis frame.
    svg.push_str(&format!(
        "  <rect x=\"{MARGIN_LEFT:.1}\" y=\"{MARGIN_TOP:.1}\" width=\"{:.1}\" height=\"{:.1}\" \
         fill=\"none\" stroke=\"#888\" stroke-width=\"1\"/>\n",
        WIDTH - MARGIN_LEFT - MARGIN_RIGHT,
        HEIGHT - MARGIN_TOP - MARGIN_BOTTOM
    ));

    // Curves.
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        svg.push_str(&polyline(
            &s.raw,
            &scale,
            &format!("stroke=\"{color}\" stroke-width=\"1\" stroke-opacity=\"0.35\""),
        ));
        svg.push_str(&polyline(
            &s.ema,
            &scale,
            &format!("stroke=\"{color}\" stroke-width=\"2\""),
        ));
    }

    // Legend: one row per series.
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let y = MARGIN_TOP + 16.0 + 18.0 * i as f64;
        let x = WIDTH - MARGIN_RIGHT - 230.0;
        svg.push_str(&format!(
            "  <line x1=\"{x:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" \
             stroke=\"{color}\" stroke-width=\"2\"/>\n",
            x + 26.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" fill=\"#222\">{} \
             (EMA solid, raw faint)</text>\n",
            x + 32.0,
            y + 4.0,
            escape(&s.name)
        ));
    }

    svg.push_str("</svg>\n");
    svg
}
