//! Fixed CSV layouts.
//!
//! Every float is written with 9 significant digits through [`fmt_sig9`],
//! so files are byte-stable across platforms and thread counts. Each file
//! starts with `#` comment lines carrying the seed and the resolved config;
//! readers should treat `#` as a comment character.

use std::io::Write;

use crate::harness::EpisodeLog;
use crate::world::GroundTruth;

/// Columns of the episode CSV, one row per (step, target).
pub const EPISODE_COLUMNS: [&str; 22] = [
    "step",
    "time_s",
    "target_id",
    "agent_x",
    "agent_y",
    "agent_z",
    "agent_vx",
    "agent_vy",
    "agent_vz",
    "u_x",
    "u_y",
    "u_z",
    "truth_x",
    "truth_y",
    "truth_z",
    "mean_x",
    "mean_y",
    "mean_vx",
    "mean_vy",
    "trace",
    "detected",
    "in_fov",
];

/// Columns of the ground-truth CSV.
pub const TRUTH_COLUMNS: [&str; 6] = ["step", "time_s", "castaway_id", "x", "y", "z"];

/// Formats with 9 significant digits: plain decimal notation for
/// magnitudes in [1e-5, 1e9), scientific otherwise, trailing zeros trimmed.
pub fn fmt_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.8e}", x);
    let (mantissa, exp) = sci
        .split_once('e')
        .expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    let sign = if negative { "-" } else { "" };
    if !(-5..9).contains(&exp) {
        let m = trim_fraction(&format!("{}.{}", &digits[..1], &digits[1..]));
        return format!("{sign}{m}e{exp}");
    }
    let body = if exp >= 0 {
        let int_len = exp as usize + 1;
        format!("{}.{}", &digits[..int_len], &digits[int_len..])
    } else {
        format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
    };
    format!("{sign}{}", trim_fraction(&body))
}

fn trim_fraction(s: &str) -> String {
    if !s.contains('.') {
        return s.to_string();
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// `# key=value` header lines; `config_json` is written on a single line.
pub fn write_header<W: Write>(w: &mut W, seed: u64, config_json: &str) -> std::io::Result<()> {
    let compact: serde_json::Value =
        serde_json::from_str(config_json).unwrap_or(serde_json::Value::Null);
    writeln!(w, "# seed={seed}")?;
    writeln!(w, "# config={compact}")
}

pub fn write_episode_csv<W: Write>(
    mut w: W,
    log: &EpisodeLog,
    config_json: &str,
) -> crate::Result<()> {
    write_header(&mut w, log.seed, config_json)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(EPISODE_COLUMNS)?;
    for rec in &log.records {
        for (id, t) in rec.targets.iter().enumerate() {
            let a = &rec.agent;
            let mut row = vec![rec.step.to_string(), fmt_sig9(rec.time), id.to_string()];
            row.extend(
                a.position
                    .iter()
                    .chain(a.velocity.iter())
                    .chain(rec.control.iter())
                    .chain(t.truth.iter())
                    .chain(t.mean.iter())
                    .map(|&v| fmt_sig9(v)),
            );
            row.push(fmt_sig9(t.trace));
            row.push(u8::from(t.detected).to_string());
            row.push(u8::from(t.in_fov).to_string());
            out.write_record(&row)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_truth_csv<W: Write>(
    mut w: W,
    truth: &GroundTruth,
    seed: u64,
    config_json: &str,
) -> crate::Result<()> {
    write_header(&mut w, seed, config_json)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TRUTH_COLUMNS)?;
    for k in 0..truth.steps() {
        for (id, track) in truth.tracks.iter().enumerate() {
            let p = track[k];
            out.write_record([
                k.to_string(),
                fmt_sig9(k as f64 * truth.dt),
                id.to_string(),
                fmt_sig9(p.x),
                fmt_sig9(p.y),
                fmt_sig9(p.z),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}
