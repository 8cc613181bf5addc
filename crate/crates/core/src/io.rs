//! Recording and HR-series serialization.
//!
//! Recording CSV: header `time_s,site_1:<label>,...,site_n:<label>[,ecg]`,
//! one row per sample, UTF-8, LF line endings. HR CSV: `time_s,hr_bpm` with
//! empty cells for missing windows.

use crate::error::{Error, Result};
use crate::signal::{HrSeries, Signal, Site};
use std::fmt::Write as _;
use std::path::Path;

/// A recording parsed from disk plus any repairs applied during ingestion.
#[derive(Debug, Clone)]
pub struct Recording {
    pub signals: Vec<Signal>,
    pub ecg: Option<Signal>,
    pub warnings: Vec<String>,
}

fn parse_err(path: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        msg: msg.into(),
    }
}

/// Parses recording CSV text. Infers the sample rate from the timestamp
/// column; timestamp jitter beyond 1% of the mean step is rejected.
/// NaN gaps up to the ingestion limit are repaired with a warning.
pub fn parse_recording(text: &str, path: &str) -> Result<Recording> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.first() != Some(&"time_s") {
        return Err(parse_err(path, 1, "first column must be time_s"));
    }
    let mut sites = Vec::new();
    let mut has_ecg = false;
    for (i, col) in cols[1..].iter().enumerate() {
        if *col == "ecg" {
            if i + 2 != cols.len() {
                return Err(parse_err(path, 1, "ecg must be the last column"));
            }
            has_ecg = true;
        } else {
            let label = col.split_once(':').map(|(_, l)| l).unwrap_or(col);
            if has_ecg {
                return Err(parse_err(path, 1, "ecg must be the last column"));
            }
            sites.push(Site::parse(label)?);
        }
    }
    if sites.is_empty() {
        return Err(parse_err(path, 1, "no site columns in header"));
    }

    let n_cols = cols.len();
    let mut times = Vec::new();
    let mut channels: Vec<Vec<f64>> = vec![Vec::new(); n_cols - 1];
    for (idx, raw) in lines {
        let line_no = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != n_cols {
            return Err(parse_err(
                path,
                line_no,
                format!("expected {} fields, got {}", n_cols, fields.len()),
            ));
        }
        let t: f64 = fields[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad timestamp '{}'", fields[0])))?;
        if let Some(&prev) = times.last() {
            if t <= prev {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("non-monotone timestamp {t} after {prev}"),
                ));
            }
        }
        times.push(t);
        for (ch, field) in channels.iter_mut().zip(&fields[1..]) {
            let field = field.trim();
            let v = if field.is_empty() || field.eq_ignore_ascii_case("nan") {
                f64::NAN
            } else {
                field
                    .parse()
                    .map_err(|_| parse_err(path, line_no, format!("bad value '{field}'")))?
            };
            ch.push(v);
        }
    }
    if times.len() < 2 {
        return Err(parse_err(path, 1, "recording needs at least two rows"));
    }

    let n = times.len();
    let mean_dt = (times[n - 1] - times[0]) / (n - 1) as f64;
    for w in times.windows(2) {
        let dt = w[1] - w[0];
        if (dt - mean_dt).abs() > 0.01 * mean_dt {
            return Err(Error::RateInference(format!(
                "timestamp step {dt:.6} s deviates more than 1% from the mean {mean_dt:.6} s"
            )));
        }
    }
    let rate = 1.0 / mean_dt;
    let start = times[0];

    let mut warnings = Vec::new();
    let mut build = |samples: Vec<f64>, site: Site| -> Result<Signal> {
        let mut sig = Signal::new(samples, rate, site, start);
        let repaired = sig.repair_non_finite()?;
        if repaired > 0 {
            warnings.push(format!(
                "{}: repaired {} non-finite samples by interpolation",
                sig.site, repaired
            ));
        }
        Ok(sig)
    };

    let mut it = channels.into_iter();
    let mut signals = Vec::with_capacity(sites.len());
    for site in sites {
        signals.push(build(it.next().unwrap(), site)?);
    }
    let ecg = if has_ecg {
        Some(build(it.next().unwrap(), Site::Other("ecg".into()))?)
    } else {
        None
    };
    Ok(Recording {
        signals,
        ecg,
        warnings,
    })
}

pub fn load_recording(path: &Path) -> Result<Recording> {
    let text = std::fs::read_to_string(path)?;
    parse_recording(&text, &path.display().to_string())
}

/// Serializes signals (and an optional ECG channel) to the recording CSV
/// format. All channels must share rate, epoch, and length.
pub fn recording_to_csv(signals: &[Signal], ecg: Option<&Signal>) -> Result<String> {
    if signals.is_empty() {
        return Err(Error::EmptySet);
    }
    let rate = signals[0].sample_rate_hz;
    let n = signals[0].len();
    let start = signals[0].start_time_s;
    let all: Vec<&Signal> = signals.iter().chain(ecg).collect();
    for s in &all {
        if (s.sample_rate_hz - rate).abs() > 1e-9 {
            return Err(Error::RateMismatch(rate, s.sample_rate_hz));
        }
        if s.len() != n {
            return Err(Error::LengthMismatch(n, s.len()));
        }
    }
    let mut out = String::new();
    out.push_str("time_s");
    for (i, s) in signals.iter().enumerate() {
        let _ = write!(out, ",site_{}:{}", i + 1, s.site);
    }
    if ecg.is_some() {
        out.push_str(",ecg");
    }
    out.push('\n');
    for k in 0..n {
        let _ = write!(out, "{}", start + k as f64 / rate);
        for s in &all {
            let _ = write!(out, ",{}", s.samples[k]);
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn save_recording(path: &Path, signals: &[Signal], ecg: Option<&Signal>) -> Result<()> {
    std::fs::write(path, recording_to_csv(signals, ecg)?)?;
    Ok(())
}

/// HR series CSV: `time_s,hr_bpm`, one row per window, empty cell when the
/// window had too few valid beats.
pub fn hr_to_csv(hr: &HrSeries) -> String {
    let mut out = String::from("time_s,hr_bpm\n");
    for (t, v) in hr.timestamps_s.iter().zip(&hr.hr_bpm) {
        match v {
            Some(bpm) => {
                let _ = writeln!(out, "{t},{bpm}");
            }
            None => {
                let _ = writeln!(out, "{t},");
            }
        }
    }
    out
}

pub fn parse_hr_csv(text: &str, path: &str) -> Result<HrSeries> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    if header != "time_s,hr_bpm" {
        return Err(parse_err(path, 1, "expected header 'time_s,hr_bpm'"));
    }
    let mut timestamps = Vec::new();
    let mut hr = Vec::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let (t, v) = raw
            .split_once(',')
            .ok_or_else(|| parse_err(path, line_no, "expected two fields"))?;
        let t: f64 = t
            .trim()
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad timestamp '{t}'")))?;
        let v = v.trim();
        let bpm = if v.is_empty() {
            None
        } else {
            Some(
                v.parse()
                    .map_err(|_| parse_err(path, line_no, format!("bad HR value '{v}'")))?,
            )
        };
        timestamps.push(t);
        hr.push(bpm);
    }
    let step = if timestamps.len() >= 2 {
        timestamps[1] - timestamps[0]
    } else {
        5.0
    };
    Ok(HrSeries {
        timestamps_s: timestamps,
        hr_bpm: hr,
        window_len_s: 30.0,
        step_s: step,
    })
}

pub fn save_hr(path: &Path, hr: &HrSeries) -> Result<()> {
    std::fs::write(path, hr_to_csv(hr))?;
    Ok(())
}

pub fn load_hr(path: &Path) -> Result<HrSeries> {
    let text = std::fs::read_to_string(path)?;
    parse_hr_csv(&text, &path.display().to_string())
}
