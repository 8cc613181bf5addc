//! Cross-site alignment, per-sample quality traces, and quality-weighted
//! signal fusion.
//!
//! The fused output is a per-sample convex combination of the input
//! channels. Weights are per-beat template correlations averaged over 30 s
//! windows, interpolated between window centers, floored at delta, raised
//! to a configurable power, and normalized to sum to one.

use crate::dsp;
use crate::error::{Error, Result};
use crate::signal::{AlignedSet, BeatSeries, HrSeries, QualityTrace, Signal};
use crate::sqi::BeatQuality;

#[derive(Debug, Clone)]
pub struct FusionConfig {
    /// Half-window for peak alignment across sites.
    pub align_window_ms: f64,
    /// Window length for quality aggregation.
    pub quality_window_s: f64,
    /// Exponent sharpening the quality weights.
    pub power: u32,
    /// Lower bound on the quality estimate.
    pub delta: f64,
    /// Estimate the alignment lag per window instead of per recording.
    pub per_window_lag: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            align_window_ms: 150.0,
            quality_window_s: 30.0,
            power: 6,
            delta: 1e-3,
            per_window_lag: false,
        }
    }
}

/// Fusion output with the per-site weight summaries used for diagnostics.
#[derive(Debug, Clone)]
pub struct FusedSignal {
    pub signal: Signal,
    /// Mean normalized weight per site over the recording.
    pub contributors: Vec<(crate::signal::Site, f64)>,
    /// Channels whose best lag hit the alignment window bound.
    pub clamped_lags: Vec<crate::signal::Site>,
}

/// Constant per-channel lags (in samples, applied to non-reference
/// channels) that best align detected peaks to the reference channel.
#[derive(Debug, Clone)]
pub struct AlignmentResult {
    pub set: AlignedSet,
    pub beats: Vec<BeatSeries>,
    /// Lag applied to each channel, in samples (reference gets 0).
    pub lags: Vec<i64>,
    pub reference: usize,
    pub clamped: Vec<bool>,
}

fn shift_samples(x: &[f64], lag: i64) -> Vec<f64> {
    // new[t] = old[t - lag]; edges padded with the first/last value
    let n = x.len() as i64;
    (0..n)
        .map(|t| {
            let src = (t - lag).clamp(0, n - 1) as usize;
            x[src]
        })
        .collect()
}

fn shift_beats(beats: &BeatSeries, lag: i64, len: usize) -> BeatSeries {
    let mut out = beats.clone();
    let shifted: Vec<(usize, bool)> = beats
        .peak_indices
        .iter()
        .zip(&beats.valid)
        .filter_map(|(&p, &v)| {
            let q = p as i64 + lag;
            if q >= 0 && (q as usize) < len {
                Some((q as usize, v))
            } else {
                None
            }
        })
        .collect();
    out.peak_indices = shifted.iter().map(|(p, _)| *p).collect();
    out.valid = shifted.iter().map(|(_, v)| *v).collect();
    out
}

/// Count of channel peaks landing within `tol` samples of a reference peak
/// after shifting by `lag`, plus the mean |distance| of the matches (used
/// to break count ties before preferring smaller |lag|).
fn match_score(reference: &[usize], peaks: &[usize], lag: i64, tol: i64) -> (usize, f64) {
    let mut count = 0usize;
    let mut dist_sum = 0.0;
    let mut j = 0usize;
    for &p in peaks {
        let q = p as i64 + lag;
        while j < reference.len() && (reference[j] as i64) < q - tol {
            j += 1;
        }
        let mut best: Option<i64> = None;
        if j < reference.len() {
            let d = ((reference[j] as i64) - q).abs();
            if d <= tol {
                best = Some(d);
            }
        }
        if j > 0 {
            let d = ((reference[j - 1] as i64) - q).abs();
            if d <= tol && best.map_or(true, |b| d < b) {
                best = Some(d);
            }
        }
        if let Some(d) = best {
            count += 1;
            dist_sum += d as f64;
        }
    }
    let mean_dist = if count > 0 {
        dist_sum / count as f64
    } else {
        f64::INFINITY
    };
    (count, mean_dist)
}

/// Aligns each channel to the reference (the site with the highest mean
/// beat quality) by the constant lag maximizing peak coincidence within
/// the alignment window. Ties break toward smaller |lag|.
pub fn align_channels(
    set: &AlignedSet,
    beats: &[BeatSeries],
    scores: &[Vec<BeatQuality>],
    cfg: &FusionConfig,
) -> Result<AlignmentResult> {
    assert_eq!(set.len(), beats.len());
    let rate = set.sample_rate_hz();
    let reference = scores
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let m = if s.is_empty() {
                f64::NEG_INFINITY
            } else {
                s.iter().map(|b| b.r).sum::<f64>() / s.len() as f64
            };
            (i, m)
        })
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .map(|(i, _)| i)
        .ok_or(Error::EmptySet)?;
    if beats[reference].is_empty() {
        return Err(Error::NoReferenceBeats);
    }
    let max_lag = (cfg.align_window_ms / 1000.0 * rate).round() as i64;
    let tol = (cfg.align_window_ms / 2.0 / 1000.0 * rate).round() as i64;
    let ref_peaks = &beats[reference].peak_indices;
    let n = set.n_samples();

    let mut lags = vec![0i64; set.len()];
    let mut clamped = vec![false; set.len()];
    for (i, b) in beats.iter().enumerate() {
        if i == reference || b.is_empty() {
            continue;
        }
        let mut best_lag = 0i64;
        let mut best_count = usize::MIN;
        let mut best_dist = f64::INFINITY;
        for lag in -max_lag..=max_lag {
            let (c, d) = match_score(ref_peaks, &b.peak_indices, lag, tol);
            let better = c > best_count
                || (c == best_count && d < best_dist - 1e-12)
                || (c == best_count
                    && (d - best_dist).abs() <= 1e-12
                    && lag.abs() < best_lag.abs());
            if better {
                best_count = c;
                best_dist = d;
                best_lag = lag;
            }
        }
        lags[i] = best_lag;
        // a lag pinned at the bound suggests the true offset exceeds the window
        clamped[i] = best_lag.abs() == max_lag;
    }

    let shifted_signals: Vec<Signal> = set
        .signals()
        .iter()
        .zip(&lags)
        .map(|(s, &lag)| Signal {
            samples: shift_samples(&s.samples, lag),
            sample_rate_hz: s.sample_rate_hz,
            site: s.site.clone(),
            start_time_s: s.start_time_s,
        })
        .collect();
    let shifted_beats: Vec<BeatSeries> = beats
        .iter()
        .zip(&lags)
        .map(|(b, &lag)| shift_beats(b, lag, n))
        .collect();
    Ok(AlignmentResult {
        set: AlignedSet::from_aligned(shifted_signals),
        beats: shifted_beats,
        lags,
        reference,
        clamped,
    })
}

/// Builds the per-sample quality trace: per 30 s window, mean beat
/// correlation clamped to [delta, 1]; piecewise-linear between window
/// centers, constant beyond the first and last center.
pub fn window_quality(
    scores: &[BeatQuality],
    signal_len: usize,
    rate: f64,
    cfg: &FusionConfig,
) -> QualityTrace {
    let win = (cfg.quality_window_s * rate).round() as usize;
    if signal_len == 0 {
        return QualityTrace {
            q: Vec::new(),
            delta: cfg.delta,
        };
    }
    if win == 0 || signal_len < 2 {
        return QualityTrace::constant(cfg.delta, signal_len, cfg.delta);
    }
    let n_windows = (signal_len + win - 1) / win;
    let mut centers = Vec::with_capacity(n_windows);
    let mut values = Vec::with_capacity(n_windows);
    for w in 0..n_windows {
        let lo = w * win;
        let hi = ((w + 1) * win).min(signal_len);
        let in_window: Vec<f64> = scores
            .iter()
            .filter(|s| s.peak_index >= lo && s.peak_index < hi)
            .map(|s| s.r)
            .collect();
        let q = if in_window.is_empty() {
            cfg.delta
        } else {
            dsp::mean(&in_window).clamp(cfg.delta, 1.0)
        };
        centers.push((lo + hi) as f64 / 2.0);
        values.push(q);
    }
    let q = (0..signal_len)
        .map(|t| dsp::interp_linear(&centers, &values, t as f64))
        .collect();
    QualityTrace {
        q,
        delta: cfg.delta,
    }
}

/// Evaluates the fusion equation per sample: weights are the quality
/// traces floored at delta and raised to `cfg.power`, normalized across
/// sites.
pub fn fuse(set: &AlignedSet, traces: &[QualityTrace], cfg: &FusionConfig) -> Result<FusedSignal> {
    let n = set.n_samples();
    if traces.len() != set.len() {
        return Err(Error::LengthMismatch(traces.len(), set.len()));
    }
    for t in traces {
        if t.q.len() != n {
            return Err(Error::LengthMismatch(t.q.len(), n));
        }
    }
    let mut samples = vec![0.0; n];
    let mut weight_sums = vec![0.0; set.len()];
    for t in 0..n {
        let mut denom = 0.0;
        let mut num = 0.0;
        for (i, sig) in set.signals().iter().enumerate() {
            let w = traces[i].q[t].max(cfg.delta).powi(cfg.power as i32);
            denom += w;
            num += sig.samples[t] * w;
        }
        samples[t] = num / denom;
        for (i, _) in set.signals().iter().enumerate() {
            let w = traces[i].q[t].max(cfg.delta).powi(cfg.power as i32) / denom;
            weight_sums[i] += w;
        }
    }
    let contributors = set
        .signals()
        .iter()
        .zip(&weight_sums)
        .map(|(s, &w)| (s.site.clone(), w / n as f64))
        .collect();
    Ok(FusedSignal {
        signal: Signal {
            samples,
            sample_rate_hz: set.sample_rate_hz(),
            site: crate::signal::Site::Other("fused".into()),
            start_time_s: set.start_time_s(),
        },
        contributors,
        clamped_lags: Vec::new(),
    })
}

/// Per-window amplitude normalization applied before mixing: subtract the
/// moving mean and divide by the moving std over the quality window, so
/// site gain differences do not override the quality weights.
pub fn normalize_windows(signal: &Signal, window_s: f64) -> Signal {
    let w = ((window_s * signal.sample_rate_hz).round() as usize).max(2);
    let m = dsp::moving_mean_samples(&signal.samples, w);
    let s = dsp::moving_std_samples(&signal.samples, w);
    let samples = signal
        .samples
        .iter()
        .zip(m.iter().zip(&s))
        .map(|(x, (mu, sd))| if *sd > 1e-12 { (x - mu) / sd } else { 0.0 })
        .collect();
    Signal {
        samples,
        sample_rate_hz: signal.sample_rate_hz,
        site: signal.site.clone(),
        start_time_s: signal.start_time_s,
    }
}

/// Runs the beat pipeline (detect, gate, windowed HR) on a fused signal.
pub fn fused_hr(
    fused: &FusedSignal,
    peak_cfg: &crate::beats::PeakDetectConfig,
    gate_cfg: &crate::beats::IbiGateConfig,
    win_cfg: &crate::beats::HrWindowConfig,
) -> Result<HrSeries> {
    let beats = crate::beats::detect_peaks(&fused.signal, peak_cfg)?;
    let gated = crate::beats::gate_ibis(&beats, gate_cfg);
    Ok(crate::beats::hr_from_beats(
        &gated,
        fused.signal.sample_rate_hz,
        fused.signal.start_time_s,
        fused.signal.duration_s(),
        gate_cfg,
        win_cfg,
    ))
}
