//! Static SVG regret curves: median line plus interquartile band per method,
//! log-scale vertical axis. Output bytes are a pure function of the input.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use anyhow::{bail, Result};

use crate::report::AggregateRow;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 160.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

const REGRET_FLOOR: f64 = 1e-12;

fn fmt(v: f64) -> String {
    format!("{v:.3}")
}

/// Render one benchmark's aggregate rows. Rows must share a benchmark.
pub fn render_svg(rows: &[AggregateRow]) -> Result<String> {
    if rows.is_empty() {
        bail!("empty aggregate: nothing to plot");
    }
    let benchmark = rows[0].benchmark.clone();
    if rows.iter().any(|r| r.benchmark != benchmark) {
        bail!("plot input mixes benchmarks");
    }

    let mut methods: BTreeMap<String, Vec<&AggregateRow>> = BTreeMap::new();
    for r in rows {
        methods.entry(r.method.clone()).or_default().push(r);
    }
    for series in methods.values_mut() {
        series.sort_by_key(|r| r.iteration);
    }

    let max_iter = rows.iter().map(|r| r.iteration).max().unwrap().max(1);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for r in rows {
        lo = lo.min(r.q1.max(REGRET_FLOOR));
        hi = hi.max(r.q3.max(REGRET_FLOOR));
    }
    let (log_lo, log_hi) = {
        let a = lo.log10().floor();
        let b = hi.log10().ceil();
        if a == b {
            (a - 1.0, b + 1.0)
        } else {
            (a, b)
        }
    };

    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let x_of = |it: usize| MARGIN_L + plot_w * (it as f64) / (max_iter as f64);
    let y_of = |v: f64| {
        let lv = v.max(REGRET_FLOOR).log10().clamp(log_lo, log_hi);
        MARGIN_T + plot_h * (log_hi - lv) / (log_hi - log_lo)
    };

    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = write!(
        svg,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = write!(
        svg,
        r#"<text x="{:.1}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">simple regret on {benchmark}</text>"#,
        MARGIN_L + plot_w / 2.0
    );

    // axes and gridlines at integer powers of ten
    let mut decade = log_lo as i64;
    while decade <= log_hi as i64 {
        let y = y_of(10f64.powi(decade as i32));
        let _ = write!(
            svg,
            r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#dddddd" stroke-width="1"/>"##,
            fmt(MARGIN_L),
            fmt(y),
            fmt(MARGIN_L + plot_w),
            fmt(y)
        );
        let _ = write!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">1e{decade}</text>"#,
            fmt(MARGIN_L - 6.0),
            fmt(y + 4.0)
        );
        decade += 1;
    }
    let x_ticks = 5usize;
    for t in 0..=x_ticks {
        let it = t * max_iter / x_ticks;
        let x = x_of(it);
        let _ = write!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{it}</text>"#,
            fmt(x),
            fmt(HEIGHT - MARGIN_B + 18.0)
        );
    }
    let _ = write!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="13" text-anchor="middle">evaluations</text>"#,
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 12.0
    );
    let _ = write!(
        svg,
        r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#333333" stroke-width="1"/>"##,
        fmt(MARGIN_L),
        fmt(MARGIN_T),
        fmt(plot_w),
        fmt(plot_h)
    );

    for (mi, (name, series)) in methods.iter().enumerate() {
        let color = PALETTE[mi % PALETTE.len()];
        // interquartile band
        let mut band = String::new();
        for r in series.iter() {
            let _ = write!(band, "{},{} ", fmt(x_of(r.iteration)), fmt(y_of(r.q3)));
        }
        for r in series.iter().rev() {
            let _ = write!(band, "{},{} ", fmt(x_of(r.iteration)), fmt(y_of(r.q1)));
        }
        let _ = write!(
            svg,
            r#"<polygon points="{}" fill="{color}" opacity="0.15"/>"#,
            band.trim_end()
        );
        // median line
        let mut line = String::new();
        for r in series.iter() {
            let _ = write!(line, "{},{} ", fmt(x_of(r.iteration)), fmt(y_of(r.median)));
        }
        let _ = write!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            line.trim_end()
        );
        // legend entry
        let ly = MARGIN_T + 16.0 + 20.0 * mi as f64;
        let _ = write!(
            svg,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{color}" stroke-width="3"/>"#,
            fmt(WIDTH - MARGIN_R + 10.0),
            fmt(ly),
            fmt(WIDTH - MARGIN_R + 34.0),
            fmt(ly)
        );
        let _ = write!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">{name}</text>"#,
            fmt(WIDTH - MARGIN_R + 40.0),
            fmt(ly + 4.0)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
