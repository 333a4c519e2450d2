//! Per-station table and SVG chart.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use aquasonde_core::export::parse_csv;
use aquasonde_core::sample::PH_NORM;
use aquasonde_core::{summarize_all, Reading, Season, StationSummary};

use crate::{read_input, usage};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Service base URL (http://...) or a CSV file.
    #[arg(long)]
    from: String,
    /// Table goes here; the chart goes next to it with an .svg extension.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "summer")]
    season: Season,
}

/// Loads readings from either source at CSV precision, so both give the same report.
pub fn load(from: &str) -> anyhow::Result<Vec<Reading>> {
    let raw = if from.starts_with("http://") || from.starts_with("https://") {
        crate::client::Client::new(from, crate::token())?.all_readings()?
    } else {
        let path = Path::new(from);
        parse_csv(&read_input(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))?
    };
    Ok(raw
        .iter()
        .map(|r| {
            let mut r = r.at_export_precision();
            if r.station.is_none() {
                r.station = Some(format!("{:.4},{:.4}", r.longitude, r.latitude));
            }
            r
        })
        .collect())
}

fn flag(c: aquasonde_core::Classification) -> &'static str {
    if c.is_normal() {
        " "
    } else {
        "*"
    }
}

pub fn table(summaries: &[StationSummary], season: Season) -> String {
    let (tlo, thi) = season.temp_norm();
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<8} {:>11} {:>10} {:>3} {:>6}  {:<12} {:>7}  {:<12}",
        "station", "longitude", "latitude", "n", "ph", "ph_class", "temp_c", "temp_class"
    );
    for r in summaries {
        let _ = writeln!(
            s,
            "{:<8} {:>11.6} {:>10.6} {:>3} {:>6.2}  {:<12} {:>7.2}  {:<12}",
            r.station,
            r.longitude,
            r.latitude,
            r.count,
            r.ph_mean,
            format!("{}{}", r.ph_assessment.classification, flag(r.ph_assessment.classification)),
            r.temp_mean,
            format!("{}{}", r.temp_assessment.classification, flag(r.temp_assessment.classification)),
        );
    }
    let _ = writeln!(
        s,
        "* outside the irrigation norm: pH {}-{}, {season} temperature {tlo}-{thi} °C",
        PH_NORM.0, PH_NORM.1
    );
    s.lines().map(|l| l.trim_end().to_string() + "\n").collect()
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

const W: f64 = 800.0;
const H: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 70.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 70.0;

/// Self-contained SVG: pH on the left axis, temperature on the right.
///
/// Data points carry `data-station` and `data-value` attributes so tests can
/// compare charts structurally.
pub fn svg(summaries: &[StationSummary], season: Season) -> String {
    let pw = W - LEFT - RIGHT;
    let ph_h = H - TOP - BOTTOM;
    let n = summaries.len().max(1) as f64;
    let x = |i: usize| LEFT + pw * (i as f64 + 0.5) / n;
    let y_ph = |v: f64| TOP + ph_h * (1.0 - v / 14.0);
    let t_max = summaries.iter().map(|s| s.temp_mean).fold(40.0f64, f64::max);
    let t_hi = (t_max / 10.0).ceil() * 10.0;
    let y_t = |v: f64| TOP + ph_h * (1.0 - v / t_hi);
    let (tlo, thi) = season.temp_norm();

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" data-season="{season}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">pH and temperature by station</text>"#,
        W / 2.0
    );
    // Season band behind everything else.
    let _ = writeln!(
        s,
        r##"<rect class="temp-band" data-low="{tlo}" data-high="{thi}" x="{LEFT:.2}" y="{:.2}" width="{pw:.2}" height="{:.2}" fill="#fbe3cf" opacity="0.6"/>"##,
        y_t(thi),
        y_t(tlo) - y_t(thi)
    );
    // Axes.
    let bottom = TOP + ph_h;
    let _ = writeln!(
        s,
        r#"<path class="axes" d="M{LEFT:.2},{TOP:.2} V{bottom:.2} H{:.2} V{TOP:.2}" fill="none" stroke="black"/>"#,
        W - RIGHT
    );
    for v in (0..=14).step_by(2) {
        let y = y_ph(v as f64);
        let _ = writeln!(
            s,
            r#"<text class="tick-ph" x="{:.2}" y="{:.2}" text-anchor="end">{v}</text>"#,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let mut t = 0.0;
    while t <= t_hi + 1e-9 {
        let _ = writeln!(
            s,
            r#"<text class="tick-temp" x="{:.2}" y="{:.2}">{t}</text>"#,
            W - RIGHT + 6.0,
            y_t(t) + 4.0
        );
        t += 10.0;
    }
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" transform="rotate(-90 18 {:.2})" text-anchor="middle">pH</text>"#,
        TOP + ph_h / 2.0,
        TOP + ph_h / 2.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" transform="rotate(90 {:.2} {:.2})" text-anchor="middle">temperature (°C)</text>"#,
        W - 18.0,
        TOP + ph_h / 2.0,
        W - 18.0,
        TOP + ph_h / 2.0
    );
    for v in [PH_NORM.0, PH_NORM.1] {
        let y = y_ph(v);
        let _ = writeln!(
            s,
            r##"<line class="ref-line" data-ph="{v}" x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#2e7d32" stroke-dasharray="6 4"/>"##,
            W - RIGHT
        );
        let _ = writeln!(
            s,
            r##"<text x="{:.2}" y="{:.2}" fill="#2e7d32">pH {v}</text>"##,
            LEFT + 4.0,
            y - 4.0
        );
    }
    for (i, r) in summaries.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text class="station-label" x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            x(i),
            bottom + 20.0,
            esc(&r.station)
        );
    }
    let ph: Vec<(f64, f64)> = summaries.iter().map(|r| (r.ph_mean, y_ph(r.ph_mean))).collect();
    let temp: Vec<(f64, f64)> = summaries.iter().map(|r| (r.temp_mean, y_t(r.temp_mean))).collect();
    for (class, colour, pts) in [("ph", "#1565c0", ph), ("temp", "#c62828", temp)] {
        let line: Vec<String> = pts
            .iter()
            .enumerate()
            .map(|(i, (_, y))| format!("{:.2},{y:.2}", x(i)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="series-{class}" points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#,
            line.join(" ")
        );
        for (i, ((v, y), r)) in pts.iter().zip(summaries).enumerate() {
            let _ = writeln!(
                s,
                r#"<circle class="point {class}" data-station="{}" data-value="{v:.2}" cx="{:.2}" cy="{y:.2}" r="4" fill="{colour}"/>"#,
                esc(&r.station),
                x(i)
            );
        }
    }
    let ly = H - 18.0;
    let _ = writeln!(
        s,
        r##"<g class="legend"><circle cx="{LEFT:.2}" cy="{:.2}" r="4" fill="#1565c0"/><text x="{:.2}" y="{ly:.2}">pH</text><circle cx="{:.2}" cy="{:.2}" r="4" fill="#c62828"/><text x="{:.2}" y="{ly:.2}">temperature ({season} norm {tlo}-{thi} °C shaded)</text></g>"##,
        ly - 4.0,
        LEFT + 10.0,
        LEFT + 60.0,
        ly - 4.0,
        LEFT + 70.0
    );
    s.push_str("</svg>\n");
    s
}

fn outputs(out: &Path) -> (PathBuf, PathBuf) {
    if out.extension().is_some_and(|e| e == "svg") {
        (out.with_extension("txt"), out.to_path_buf())
    } else {
        (out.to_path_buf(), out.with_extension("svg"))
    }
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let readings = load(&args.from)?;
    let summaries = summarize_all(&readings, args.season);
    if summaries.is_empty() {
        return Err(usage(format!("EmptyInput: no readings in {}", args.from)));
    }
    let text = table(&summaries, args.season);
    let chart = svg(&summaries, args.season);
    let (table_path, svg_path) = outputs(&args.out);
    std::fs::write(&table_path, &text).with_context(|| format!("writing {}", table_path.display()))?;
    std::fs::write(&svg_path, chart).with_context(|| format!("writing {}", svg_path.display()))?;
    print!("{text}");
    println!("table: {}  chart: {}", table_path.display(), svg_path.display());
    Ok(())
}
