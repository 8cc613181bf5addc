//! Systolic peak detection, interbeat-interval gating, and windowed HR.
//!
//! Peaks are found where the bandpassed signal crosses its moving average
//! plus an offset; the offset is chosen per one-minute window by minimizing
//! the variance of the resulting peak intervals. Implausibly fast pairs
//! (HR above the configured maximum) are pruned, and IBIs are kept only when
//! they sit inside a sufficiently regular run.

use crate::dsp;
use crate::error::{Error, Result};
use crate::signal::{BeatSeries, HrSeries, Signal};

#[derive(Debug, Clone)]
pub struct PeakDetectConfig {
    /// Moving-average window for the crossing threshold.
    pub ma_window_s: f64,
    /// Offset candidates as multiples of the optimization window's std.
    pub offset_candidates: Vec<f64>,
    /// Length of the offset-optimization window.
    pub opt_window_s: f64,
    pub max_hr_bpm: f64,
}

impl Default for PeakDetectConfig {
    fn default() -> Self {
        PeakDetectConfig {
            ma_window_s: 0.75,
            offset_candidates: (0..=20).map(|i| i as f64 * 0.05).collect(),
            opt_window_s: 60.0,
            max_hr_bpm: 185.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IbiGateConfig {
    /// Minimum run of consecutive IBIs that must stay regular together.
    pub run_length: usize,
    /// A run qualifies when min(IBI)/max(IBI) exceeds this.
    pub ratio_threshold: f64,
}

impl Default for IbiGateConfig {
    fn default() -> Self {
        IbiGateConfig {
            run_length: 5,
            ratio_threshold: 0.51,
        }
    }
}

/// Peaks within one region where `x` exceeds `threshold`: the maximum sample
/// of each contiguous above-threshold region.
fn crossing_peaks(x: &[f64], threshold: &[f64], lo: usize, hi: usize) -> Vec<usize> {
    let mut peaks = Vec::new();
    let mut i = lo;
    while i < hi {
        if x[i] > threshold[i] {
            let start = i;
            while i < hi && x[i] > threshold[i] {
                i += 1;
            }
            let region = &x[start..i];
            let (arg, _) =
                region
                    .iter()
                    .enumerate()
                    .fold(
                        (0, f64::NEG_INFINITY),
                        |acc, (k, &v)| {
                            if v > acc.1 {
                                (k, v)
                            } else {
                                acc
                            }
                        },
                    );
            peaks.push(start + arg);
        } else {
            i += 1;
        }
    }
    peaks
}

fn interval_variance(peaks: &[usize]) -> f64 {
    if peaks.len() < 4 {
        return f64::INFINITY;
    }
    let intervals: Vec<f64> = peaks.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
    let m = dsp::mean(&intervals);
    intervals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / intervals.len() as f64
}

/// Detects systolic peaks on a bandpassed signal.
pub fn detect_peaks(signal: &Signal, cfg: &PeakDetectConfig) -> Result<BeatSeries> {
    let rate = signal.sample_rate_hz;
    let opt_w = (cfg.opt_window_s * rate).round() as usize;
    let n = signal.samples.len();
    if n < opt_w {
        return Err(Error::TooShort {
            need: opt_w,
            got: n,
        });
    }
    let ma = dsp::moving_average(&signal.samples, cfg.ma_window_s, rate);
    let x = &signal.samples;

    let mut peaks: Vec<usize> = Vec::new();
    let mut any_crossing = false;
    let n_windows = (n + opt_w - 1) / opt_w;
    let mut threshold = vec![0.0; n];
    for w in 0..n_windows {
        let lo = w * opt_w;
        let mut hi = (lo + opt_w).min(n);
        // fold a short trailing remainder into the last full window
        if n - lo < opt_w && w > 0 {
            break;
        }
        if w == n_windows - 1 || (w + 2) * opt_w > n {
            hi = n;
        }
        let win = &x[lo..hi];
        let std = dsp::pop_std(win);
        let mut best: Option<(f64, Vec<usize>)> = None;
        for &c in &cfg.offset_candidates {
            for i in lo..hi {
                threshold[i] = ma[i] + c * std;
            }
            let cand = crossing_peaks(x, &threshold, lo, hi);
            if !cand.is_empty() {
                any_crossing = true;
            }
            let var = interval_variance(&cand);
            let better = match &best {
                None => true,
                Some((v, _)) => var < *v,
            };
            if better {
                best = Some((var, cand));
            }
        }
        if let Some((_, mut cand)) = best {
            peaks.append(&mut cand);
        }
        if hi == n {
            break;
        }
    }
    peaks.dedup();

    if peaks.is_empty() {
        let mut series = BeatSeries::new(Vec::new(), Some(signal.site.clone()));
        series.no_peaks = !any_crossing;
        return Ok(series);
    }

    // prune pairs implying HR above the maximum: drop the later peak
    let min_gap = (60.0 / cfg.max_hr_bpm * rate).ceil() as usize;
    let mut pruned: Vec<usize> = Vec::with_capacity(peaks.len());
    for p in peaks {
        match pruned.last() {
            Some(&prev) if p <= prev || p - prev < min_gap => {}
            _ => pruned.push(p),
        }
    }
    Ok(BeatSeries::new(pruned, Some(signal.site.clone())))
}

/// Per-IBI validity: an IBI is valid iff it belongs to at least one run of
/// `run_length` consecutive IBIs whose min/max ratio exceeds the threshold.
pub fn ibi_validity(beats: &BeatSeries, cfg: &IbiGateConfig) -> Vec<bool> {
    let ibis = beats.ibis_samples();
    let n_ibi = ibis.len();
    let mut ibi_valid = vec![false; n_ibi];
    if n_ibi >= cfg.run_length {
        for start in 0..=(n_ibi - cfg.run_length) {
            let run = &ibis[start..start + cfg.run_length];
            let min = *run.iter().min().unwrap() as f64;
            let max = *run.iter().max().unwrap() as f64;
            if max > 0.0 && min / max > cfg.ratio_threshold {
                for v in ibi_valid[start..start + cfg.run_length].iter_mut() {
                    *v = true;
                }
            }
        }
    }
    ibi_valid
}

/// Marks peaks valid when they bound at least one valid IBI.
pub fn gate_ibis(beats: &BeatSeries, cfg: &IbiGateConfig) -> BeatSeries {
    let n_peaks = beats.peak_indices.len();
    let mut out = beats.clone();
    if n_peaks < 2 {
        out.valid = vec![false; n_peaks];
        return out;
    }
    let ibi_valid = ibi_validity(beats, cfg);
    let mut peak_valid = vec![false; n_peaks];
    for (i, &v) in ibi_valid.iter().enumerate() {
        if v {
            peak_valid[i] = true;
            peak_valid[i + 1] = true;
        }
    }
    out.valid = peak_valid;
    out
}

/// Valid IBIs as (start_time_s, end_time_s, duration_s) on the shared epoch.
fn valid_ibi_spans(
    beats: &BeatSeries,
    rate: f64,
    start_time_s: f64,
    cfg: &IbiGateConfig,
) -> Vec<(f64, f64, f64)> {
    let ibi_valid = ibi_validity(beats, cfg);
    let mut spans = Vec::new();
    for (w, &ok) in ibi_valid.iter().enumerate() {
        if ok {
            let t0 = start_time_s + beats.peak_indices[w] as f64 / rate;
            let t1 = start_time_s + beats.peak_indices[w + 1] as f64 / rate;
            spans.push((t0, t1, t1 - t0));
        }
    }
    spans
}

#[derive(Debug, Clone)]
pub struct HrWindowConfig {
    pub window_len_s: f64,
    pub step_s: f64,
    /// Windows with fewer valid IBIs than this are flagged missing.
    pub min_ibis: usize,
}

impl Default for HrWindowConfig {
    fn default() -> Self {
        HrWindowConfig {
            window_len_s: 30.0,
            step_s: 5.0,
            min_ibis: 3,
        }
    }
}

/// Windowed HR from gated beats: per window, 60 / mean(valid IBIs
/// overlapping the window, in seconds).
pub fn hr_from_beats(
    beats: &BeatSeries,
    rate: f64,
    start_time_s: f64,
    duration_s: f64,
    gate_cfg: &IbiGateConfig,
    win_cfg: &HrWindowConfig,
) -> HrSeries {
    let spans = valid_ibi_spans(beats, rate, start_time_s, gate_cfg);
    let mut timestamps = Vec::new();
    let mut hr = Vec::new();
    if duration_s >= win_cfg.window_len_s {
        let n_windows = ((duration_s - win_cfg.window_len_s) / win_cfg.step_s).floor() as usize + 1;
        for w in 0..n_windows {
            let lo = start_time_s + w as f64 * win_cfg.step_s;
            let hi = lo + win_cfg.window_len_s;
            timestamps.push(lo + win_cfg.window_len_s / 2.0);
            let overlapping: Vec<f64> = spans
                .iter()
                .filter(|(t0, t1, _)| *t1 > lo && *t0 < hi)
                .map(|(_, _, d)| *d)
                .collect();
            if overlapping.len() < win_cfg.min_ibis {
                hr.push(None);
            } else {
                hr.push(Some(60.0 / dsp::mean(&overlapping)));
            }
        }
    }
    HrSeries {
        timestamps_s: timestamps,
        hr_bpm: hr,
        window_len_s: win_cfg.window_len_s,
        step_s: win_cfg.step_s,
    }
}
