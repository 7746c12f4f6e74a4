//! Static SVG waterfall of `ρ(·,t)`: one polyline per time sample, each
//! lifted by a constant offset, colored from blue (t = 0) to red (t = 1).

use std::f64::consts::PI;
use std::fmt::Write;

use crate::group::GroupId;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 560.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 130.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

fn color(frac: f64) -> String {
    let r = (40.0 + 200.0 * frac).round() as u8;
    let b = (220.0 - 190.0 * frac).round() as u8;
    format!("#{r:02x}40{b:02x}")
}

/// Renders `(t, ρ(·,t))` samples over the grid `nodes`.
pub fn waterfall_svg(group: GroupId, nodes: &[f64], slices: &[(f64, &[f64])]) -> String {
    let (range, ticks): (f64, &[(&str, f64)]) = match group {
        GroupId::So2 => (
            2.0 * PI,
            &[("0", 0.0), ("π/2", 0.5 * PI), ("π", PI), ("3π/2", 1.5 * PI), ("2π", 2.0 * PI)],
        ),
        GroupId::So3 => (PI, &[("0", 0.0), ("π/4", 0.25 * PI), ("π/2", 0.5 * PI), ("3π/4", 0.75 * PI), ("π", PI)]),
    };
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let peak = slices
        .iter()
        .flat_map(|(_, r)| r.iter())
        .cloned()
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    // each curve may rise to 40% of the plot; offsets share the rest
    let amp = 0.4 * plot_h;
    let lift = if slices.len() > 1 {
        (plot_h - amp) / (slices.len() - 1) as f64
    } else {
        0.0
    };
    let x_of = |th: f64| LEFT + plot_w * th / range;
    let base = TOP + plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" y1="{base}" x2="{:.2}" y2="{base}" stroke="black"/>"#,
        LEFT + plot_w
    );
    for (label, th) in ticks {
        let x = x_of(*th);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{base}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#,
            base + 5.0,
            base + 20.0
        );
    }
    let axis_label = match group {
        GroupId::So2 => "θ",
        GroupId::So3 => "rotation angle ‖ω‖",
    };
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{axis_label}</text>"#,
        LEFT + 0.5 * plot_w,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.2}" transform="rotate(-90 20 {:.2})" text-anchor="middle">ρ(·,t), offset by t</text>"#,
        TOP + 0.5 * plot_h,
        TOP + 0.5 * plot_h
    );

    let n = slices.len().max(2) - 1;
    for (k, (t, rho)) in slices.iter().enumerate() {
        let y0 = base - k as f64 * lift;
        let mut pts = String::new();
        // close the SO(2) curve across the seam so it spans [0, 2π]
        let wrap = group == GroupId::So2 && !rho.is_empty();
        let samples = nodes.iter().zip(rho.iter()).map(|(&th, &r)| (th, r));
        let tail = wrap.then(|| (range, rho[0]));
        for (th, r) in samples.chain(tail) {
            let _ = write!(pts, "{:.2},{:.2} ", x_of(th), y0 - amp * r / peak);
        }
        let c = color(k as f64 / n as f64);
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{c}" stroke-width="1.2" points="{}"/>"#,
            pts.trim_end()
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" fill="{c}">t = {t:.2}</text>"#,
            LEFT + plot_w + 10.0,
            y0 + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}
