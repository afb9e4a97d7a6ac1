//! Static SVG plots rebuilt from an episode CSV.
//!
//! Plots only read the CSV that was already written, so they can never
//! change a numeric output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context, Result};

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

/// (time, truth xy, mean xy, trace) of one target at one step.
type TargetRow = (f64, (f64, f64), (f64, f64), f64);

#[derive(Debug, Default)]
struct Series {
    agent: Vec<(f64, f64)>,
    targets: BTreeMap<usize, Vec<TargetRow>>,
}

fn read_series(csv_path: &Path) -> Result<Series> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(csv_path)
        .with_context(|| format!("reading {}", csv_path.display()))?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("{} has no `{name}` column", csv_path.display()))
    };
    let [step, time, id, ax, ay, tx, ty, mx, my, trace] = [
        "step",
        "time_s",
        "target_id",
        "agent_x",
        "agent_y",
        "truth_x",
        "truth_y",
        "mean_x",
        "mean_y",
        "trace",
    ]
    .map(col);
    let (step, time, id, ax, ay, tx, ty, mx, my, trace) =
        (step?, time?, id?, ax?, ay?, tx?, ty?, mx?, my?, trace?);

    let mut s = Series::default();
    let mut last_step = None;
    for rec in rdr.records() {
        let rec = rec?;
        let f = |i: usize| -> Result<f64> { Ok(rec[i].parse::<f64>()?) };
        let k: usize = rec[step].parse()?;
        if last_step != Some(k) {
            s.agent.push((f(ax)?, f(ay)?));
            last_step = Some(k);
        }
        s.targets.entry(rec[id].parse()?).or_default().push((
            f(time)?,
            (f(tx)?, f(ty)?),
            (f(mx)?, f(my)?),
            f(trace)?,
        ));
    }
    if s.agent.is_empty() {
        return Err(anyhow!("{} has no rows", csv_path.display()));
    }
    Ok(s)
}

/// Maps data coordinates to pixels.
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    left: f64,
    top: f64,
    w: f64,
    h: f64,
}

impl Frame {
    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.left + (x - self.x0) / (self.x1 - self.x0) * self.w,
            self.top + (1.0 - (y - self.y0) / (self.y1 - self.y0)) * self.h,
        )
    }

    fn polyline(&self, out: &mut String, pts: impl Iterator<Item = (f64, f64)>, style: &str) {
        let mut d = String::new();
        for (x, y) in pts {
            let (u, v) = self.px(x, y);
            let _ = write!(d, "{u:.1},{v:.1} ");
        }
        let _ = writeln!(
            out,
            r#"<polyline fill="none" {style} points="{}"/>"#,
            d.trim_end()
        );
    }

    fn axes(&self, out: &mut String, xlabel: &str, ylabel: &str) {
        let _ = writeln!(
            out,
            r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
            self.left, self.top, self.w, self.h
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}</text>"#,
            self.left + self.w / 2.0,
            self.top + self.h + 40.0
        );
        let _ = writeln!(
            out,
            r#"<text transform="translate({},{}) rotate(-90)" text-anchor="middle">{ylabel}</text>"#,
            self.left - 48.0,
            self.top + self.h / 2.0
        );
    }

    fn x_tick(&self, out: &mut String, x: f64, label: &str) {
        let (u, v) = self.px(x, self.y0);
        let _ = writeln!(
            out,
            r##"<line x1="{u:.1}" y1="{v:.1}" x2="{u:.1}" y2="{:.1}" stroke="#444"/>"##,
            v + 5.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{u:.1}" y="{:.1}" text-anchor="middle">{label}</text>"#,
            v + 20.0
        );
    }

    fn y_tick(&self, out: &mut String, y: f64, label: &str) {
        let (u, v) = self.px(self.x0, y);
        let _ = writeln!(
            out,
            r##"<line x1="{:.1}" y1="{v:.1}" x2="{u:.1}" y2="{v:.1}" stroke="#444"/>"##,
            u - 5.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{label}</text>"#,
            u - 8.0,
            v + 4.0
        );
    }
}

fn svg_open(out: &mut String, w: f64, h: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
}

fn legend(out: &mut String, x: f64, y: f64, entries: &[(String, String)]) {
    for (i, (style, label)) in entries.iter().enumerate() {
        let v = y + 16.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{x}" y1="{v}" x2="{}" y2="{v}" {style}/><text x="{}" y="{}">{label}</text>"#,
            x + 24.0,
            x + 30.0,
            v + 4.0
        );
    }
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag)
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let step = nice_step(hi - lo);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

/// Top view of the agent path, true drift and estimated means.
fn trajectory_svg(s: &Series) -> String {
    let pts = s
        .agent
        .iter()
        .copied()
        .chain(s.targets.values().flatten().flat_map(|r| [r.1, r.2]));
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for (x, y) in pts.filter(|p| p.0.is_finite() && p.1.is_finite()) {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    // Equal aspect: widen the shorter side around its centre.
    let half = ((x1 - x0).max(y1 - y0) * 0.55).max(1.0);
    let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
    let f = Frame {
        x0: cx - half,
        x1: cx + half,
        y0: cy - half,
        y1: cy + half,
        left: 70.0,
        top: 20.0,
        w: 560.0,
        h: 560.0,
    };
    let mut out = String::new();
    svg_open(&mut out, 820.0, 650.0);
    f.axes(&mut out, "x (m)", "y (m)");
    for t in ticks(f.x0, f.x1) {
        f.x_tick(&mut out, t, &format!("{t}"));
    }
    for t in ticks(f.y0, f.y1) {
        f.y_tick(&mut out, t, &format!("{t}"));
    }
    let mut entries = vec![(
        r##"stroke="#000" stroke-width="1.2""##.to_string(),
        "agent".to_string(),
    )];
    f.polyline(
        &mut out,
        s.agent.iter().copied(),
        r##"stroke="#000" stroke-width="1.2""##,
    );
    for (&id, rows) in &s.targets {
        let c = PALETTE[id % PALETTE.len()];
        let truth = format!(r#"stroke="{c}" stroke-width="2""#);
        let mean = format!(r#"stroke="{c}" stroke-width="1" stroke-dasharray="4 3""#);
        f.polyline(&mut out, rows.iter().map(|r| r.1), &truth);
        f.polyline(&mut out, rows.iter().map(|r| r.2), &mean);
        if let Some(first) = rows.first() {
            let (u, v) = f.px(first.1 .0, first.1 .1);
            let _ = writeln!(out, r#"<circle cx="{u:.1}" cy="{v:.1}" r="3" fill="{c}"/>"#);
        }
        entries.push((truth, format!("castaway {id}")));
        entries.push((mean, format!("estimate {id}")));
    }
    let (u, v) = f.px(s.agent[0].0, s.agent[0].1);
    let _ = writeln!(
        out,
        r#"<rect x="{:.1}" y="{:.1}" width="6" height="6" fill="black"/>"#,
        u - 3.0,
        v - 3.0
    );
    legend(&mut out, 650.0, 40.0, &entries);
    out.push_str("</svg>\n");
    out
}

/// Covariance trace of every target against time on a log axis.
fn trace_svg(s: &Series) -> String {
    let times: Vec<f64> = s
        .targets
        .values()
        .next()
        .map_or(Vec::new(), |r| r.iter().map(|x| x.0).collect());
    let summed: Vec<f64> = (0..times.len())
        .map(|k| {
            s.targets
                .values()
                .filter_map(|r| r.get(k))
                .map(|x| x.3)
                .sum()
        })
        .collect();
    let logs = || {
        s.targets
            .values()
            .flatten()
            .map(|r| r.3)
            .chain(summed.iter().copied())
            .filter(|v| *v > 0.0 && v.is_finite())
            .map(f64::log10)
    };
    let lo = logs().fold(f64::INFINITY, f64::min);
    let hi = logs().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() {
        (lo.floor(), hi.ceil().max(lo.floor() + 1.0))
    } else {
        (0.0, 1.0)
    };
    let t1 = times.last().copied().unwrap_or(1.0);
    let t0 = times.first().copied().unwrap_or(0.0).min(t1 - 1.0);
    let f = Frame {
        x0: t0,
        x1: t1,
        y0: lo,
        y1: hi,
        left: 80.0,
        top: 20.0,
        w: 640.0,
        h: 400.0,
    };
    let mut out = String::new();
    svg_open(&mut out, 900.0, 490.0);
    f.axes(&mut out, "time (s)", "trace (m², m²/s²)");
    for t in ticks(t0, t1) {
        f.x_tick(&mut out, t, &format!("{t}"));
    }
    for d in lo as i64..=hi as i64 {
        f.y_tick(&mut out, d as f64, &format!("1e{d}"));
    }
    let clip = |v: f64| v.max(10f64.powf(lo)).log10();
    let mut entries = Vec::new();
    for (&id, rows) in &s.targets {
        let style = format!(
            r#"stroke="{}" stroke-width="1.2""#,
            PALETTE[id % PALETTE.len()]
        );
        f.polyline(&mut out, rows.iter().map(|r| (r.0, clip(r.3))), &style);
        entries.push((style, format!("target {id}")));
    }
    let style = r##"stroke="#000" stroke-width="1.5" stroke-dasharray="6 3""##.to_string();
    f.polyline(
        &mut out,
        times.iter().zip(&summed).map(|(&t, &v)| (t, clip(v))),
        &style,
    );
    entries.push((style, "sum".into()));
    legend(&mut out, 740.0, 40.0, &entries);
    out.push_str("</svg>\n");
    out
}

/// Writes `trajectory.svg` and `trace.svg` next to the episode CSV.
pub fn write_plots(csv_path: &Path, out: &Path) -> Result<()> {
    let s = read_series(csv_path)?;
    for (name, svg) in [
        ("trajectory.svg", trajectory_svg(&s)),
        ("trace.svg", trace_svg(&s)),
    ] {
        let path = out.join(name);
        fs::write(&path, svg).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
