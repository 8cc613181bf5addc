//! Shared data model: waveforms, beat series, quality traces, HR series.

use crate::error::{Error, Result};

/// Minimum usable overlap for a fusion run. Offset optimization during peak
/// detection needs a full one-minute window.
pub const MIN_OVERLAP_S: f64 = 60.0;

/// Longest NaN gap (seconds) repaired by linear interpolation at ingestion.
pub const MAX_NAN_GAP_S: f64 = 0.25;

/// Body location of a PPG sensor.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Site {
    Head,
    Sternum,
    Wrist,
    Ankle,
    Other(String),
}

impl Site {
    pub fn parse(label: &str) -> Result<Site> {
        match label.to_ascii_lowercase().as_str() {
            "head" => Ok(Site::Head),
            "sternum" => Ok(Site::Sternum),
            "wrist" => Ok(Site::Wrist),
            "ankle" => Ok(Site::Ankle),
            "" => Err(Error::UnknownSite(label.to_string())),
            other => Ok(Site::Other(other.to_string())),
        }
    }

    pub fn label(&self) -> &str {
        match self {
            Site::Head => "head",
            Site::Sternum => "sternum",
            Site::Wrist => "wrist",
            Site::Ankle => "ankle",
            Site::Other(name) => name,
        }
    }
}

impl std::fmt::Display for Site {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// A uniformly sampled single-channel waveform on a shared epoch.
#[derive(Debug, Clone)]
pub struct Signal {
    pub samples: Vec<f64>,
    pub sample_rate_hz: f64,
    pub site: Site,
    pub start_time_s: f64,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64, site: Site, start_time_s: f64) -> Signal {
        assert!(sample_rate_hz > 0.0, "sample rate must be positive");
        Signal {
            samples,
            sample_rate_hz,
            site,
            start_time_s,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    pub fn end_time_s(&self) -> f64 {
        self.start_time_s + self.duration_s()
    }

    /// Time of sample `idx` on the shared epoch.
    pub fn time_at(&self, idx: usize) -> f64 {
        self.start_time_s + idx as f64 / self.sample_rate_hz
    }

    /// Repairs NaN/Inf runs by linear interpolation across gaps no longer
    /// than [`MAX_NAN_GAP_S`]. Longer gaps (or non-finite edges that cannot
    /// be bridged) reject the signal. Returns the number of repaired samples.
    pub fn repair_non_finite(&mut self) -> Result<usize> {
        let max_gap = (MAX_NAN_GAP_S * self.sample_rate_hz).floor() as usize;
        let n = self.samples.len();
        let mut repaired = 0usize;
        let mut i = 0;
        while i < n {
            if self.samples[i].is_finite() {
                i += 1;
                continue;
            }
            let gap_start = i;
            while i < n && !self.samples[i].is_finite() {
                i += 1;
            }
            let gap_len = i - gap_start;
            if gap_len > max_gap || gap_start == 0 || i == n {
                return Err(Error::NanGap {
                    gap_s: gap_len as f64 / self.sample_rate_hz,
                    limit_s: MAX_NAN_GAP_S,
                });
            }
            let left = self.samples[gap_start - 1];
            let right = self.samples[i];
            for (k, s) in self.samples[gap_start..i].iter_mut().enumerate() {
                let frac = (k + 1) as f64 / (gap_len + 1) as f64;
                *s = left + (right - left) * frac;
            }
            repaired += gap_len;
        }
        Ok(repaired)
    }

    /// Linearly resamples to `rate_hz`, keeping epoch and duration.
    pub fn resample(&self, rate_hz: f64) -> Signal {
        if (rate_hz - self.sample_rate_hz).abs() < 1e-12 {
            return self.clone();
        }
        let n_out = (self.duration_s() * rate_hz).round() as usize;
        let mut out = Vec::with_capacity(n_out);
        let n = self.samples.len();
        for k in 0..n_out {
            let x = k as f64 * self.sample_rate_hz / rate_hz;
            let i = (x.floor() as usize).min(n - 1);
            let j = (i + 1).min(n - 1);
            let frac = x - i as f64;
            out.push(self.samples[i] * (1.0 - frac) + self.samples[j] * frac);
        }
        Signal {
            samples: out,
            sample_rate_hz: rate_hz,
            site: self.site.clone(),
            start_time_s: self.start_time_s,
        }
    }
}

/// Detected systolic peaks with per-peak validity from IBI gating.
#[derive(Debug, Clone, Default)]
pub struct BeatSeries {
    /// Strictly increasing sample indices of systolic peaks.
    pub peak_indices: Vec<usize>,
    /// One flag per peak; set by [`crate::beats::gate_ibis`].
    pub valid: Vec<bool>,
    pub source_site: Option<Site>,
    /// Set when detection found no crossings anywhere.
    pub no_peaks: bool,
}

impl BeatSeries {
    pub fn new(peak_indices: Vec<usize>, source_site: Option<Site>) -> BeatSeries {
        debug_assert!(peak_indices.windows(2).all(|w| w[0] < w[1]));
        let n = peak_indices.len();
        BeatSeries {
            peak_indices,
            valid: vec![true; n],
            source_site,
            no_peaks: n == 0,
        }
    }

    pub fn len(&self) -> usize {
        self.peak_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peak_indices.is_empty()
    }

    /// Interbeat intervals in samples between consecutive peaks.
    pub fn ibis_samples(&self) -> Vec<usize> {
        self.peak_indices.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// Per-sample quality weight, bounded to (delta, 1].
#[derive(Debug, Clone)]
pub struct QualityTrace {
    pub q: Vec<f64>,
    pub delta: f64,
}

impl QualityTrace {
    pub fn constant(value: f64, len: usize, delta: f64) -> QualityTrace {
        QualityTrace {
            q: vec![value.clamp(delta, 1.0); len],
            delta,
        }
    }
}

/// Windowed HR estimates on a fixed 30 s / 5 s grid. Missing windows are
/// `None` rather than dropped so that grids from different pipelines stay
/// comparable.
#[derive(Debug, Clone)]
pub struct HrSeries {
    /// Window-center times on the shared epoch.
    pub timestamps_s: Vec<f64>,
    pub hr_bpm: Vec<Option<f64>>,
    pub window_len_s: f64,
    pub step_s: f64,
}

impl HrSeries {
    pub fn len(&self) -> usize {
        self.timestamps_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps_s.is_empty()
    }

    pub fn n_present(&self) -> usize {
        self.hr_bpm.iter().filter(|h| h.is_some()).count()
    }
}

/// A 40-sample z-scored reference beat waveform for one site.
#[derive(Debug, Clone)]
pub struct BeatTemplate {
    pub values: Vec<f64>,
    pub site: Site,
    pub n_contributing: usize,
}

/// A set of signals guaranteed to share epoch, duration, and sample rate.
#[derive(Debug, Clone)]
pub struct AlignedSet {
    signals: Vec<Signal>,
}

impl AlignedSet {
    pub fn signals(&self) -> &[Signal] {
        &self.signals
    }

    pub fn into_signals(self) -> Vec<Signal> {
        self.signals
    }

    pub fn len(&self) -> usize {
        self.signals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signals.is_empty()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.signals[0].sample_rate_hz
    }

    pub fn n_samples(&self) -> usize {
        self.signals[0].samples.len()
    }

    pub fn start_time_s(&self) -> f64 {
        self.signals[0].start_time_s
    }

    /// Rebuilds the set from already-aligned signals (same epoch, rate,
    /// length). Used by transforms that preserve alignment.
    pub(crate) fn from_aligned(signals: Vec<Signal>) -> AlignedSet {
        debug_assert!(!signals.is_empty());
        debug_assert!(signals
            .windows(2)
            .all(|w| w[0].samples.len() == w[1].samples.len()
                && (w[0].sample_rate_hz - w[1].sample_rate_hz).abs() < 1e-9
                && (w[0].start_time_s - w[1].start_time_s).abs() < 1e-9));
        AlignedSet { signals }
    }
}

/// Trims a signal list to the common time overlap and checks rate/epoch
/// consistency. Requires at least [`MIN_OVERLAP_S`] of shared coverage.
pub fn validate_aligned_set(signals: Vec<Signal>) -> Result<AlignedSet> {
    validate_aligned_set_min(signals, MIN_OVERLAP_S)
}

pub fn validate_aligned_set_min(signals: Vec<Signal>, min_overlap_s: f64) -> Result<AlignedSet> {
    if signals.is_empty() {
        return Err(Error::EmptySet);
    }
    let rate = signals[0].sample_rate_hz;
    for s in &signals {
        if (s.sample_rate_hz - rate).abs() > 1e-9 {
            return Err(Error::RateMismatch(rate, s.sample_rate_hz));
        }
    }
    let start = signals
        .iter()
        .map(|s| s.start_time_s)
        .fold(f64::NEG_INFINITY, f64::max);
    let end = signals
        .iter()
        .map(|s| s.end_time_s())
        .fold(f64::INFINITY, f64::min);
    let overlap = end - start;
    if overlap < min_overlap_s {
        return Err(Error::NoOverlap {
            overlap_s: overlap.max(0.0),
            min_s: min_overlap_s,
        });
    }
    let n_common = (overlap * rate).floor() as usize;
    let trimmed = signals
        .into_iter()
        .map(|s| {
            let skip = ((start - s.start_time_s) * rate).round() as usize;
            Signal {
                samples: s.samples[skip..skip + n_common].to_vec(),
                sample_rate_hz: rate,
                site: s.site,
                start_time_s: start,
            }
        })
        .collect();
    Ok(AlignedSet { signals: trimmed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(start: f64, dur: f64, site: Site) -> Signal {
        let n = (dur * 128.0) as usize;
        Signal::new(vec![0.0; n], 128.0, site, start)
    }

    #[test]
    fn identical_signals_full_length() {
        let a = sig(0.0, 120.0, Site::Head);
        let b = sig(0.0, 120.0, Site::Wrist);
        let set = validate_aligned_set(vec![a.clone(), b]).unwrap();
        assert_eq!(set.n_samples(), a.len());
        assert_eq!(set.start_time_s(), 0.0);
    }

    #[test]
    fn short_overlap_rejected() {
        let a = sig(0.0, 60.0, Site::Head);
        let b = sig(10.0, 60.0, Site::Wrist);
        // 50 s of overlap, below the 60 s floor
        match validate_aligned_set(vec![a, b]) {
            Err(Error::NoOverlap { overlap_s, .. }) => assert!((overlap_s - 50.0).abs() < 1e-6),
            other => panic!("expected NoOverlap, got {other:?}"),
        }
    }

    #[test]
    fn overlap_matches_brute_force_interval_intersection() {
        let starts = [0.0, 3.5, 1.25, 2.0];
        let durs = [46_800.0, 46_810.0, 46_805.0, 46_802.0]; // ~13 h
        let sites = [Site::Head, Site::Sternum, Site::Wrist, Site::Ankle];
        let signals: Vec<Signal> = starts
            .iter()
            .zip(&durs)
            .zip(&sites)
            .map(|((&st, &d), site)| sig(st, d, site.clone()))
            .collect();
        // brute-force interval intersection
        let lo = starts.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let hi = starts
            .iter()
            .zip(&durs)
            .map(|(s, d)| s + d)
            .fold(f64::INFINITY, f64::min);
        let set = validate_aligned_set(signals).unwrap();
        let expect = ((hi - lo) * 128.0).floor() as usize;
        assert_eq!(set.n_samples(), expect);
        assert!((set.start_time_s() - lo).abs() < 1e-9);
    }

    #[test]
    fn trimming_is_idempotent() {
        let a = sig(0.0, 100.0, Site::Head);
        let b = sig(5.0, 100.0, Site::Wrist);
        let once = validate_aligned_set(vec![a, b]).unwrap();
        let n = once.n_samples();
        let t0 = once.start_time_s();
        let twice = validate_aligned_set(once.into_signals()).unwrap();
        assert_eq!(twice.n_samples(), n);
        assert_eq!(twice.start_time_s(), t0);
    }

    #[test]
    fn empty_set_rejected() {
        assert!(matches!(validate_aligned_set(vec![]), Err(Error::EmptySet)));
    }

    #[test]
    fn rate_mismatch_rejected() {
        let a = sig(0.0, 120.0, Site::Head);
        let b = Signal::new(vec![0.0; 6400], 64.0, Site::Wrist, 0.0);
        assert!(matches!(
            validate_aligned_set(vec![a, b]),
            Err(Error::RateMismatch(..))
        ));
    }

    #[test]
    fn nan_gap_repaired_within_limit() {
        let mut s = sig(0.0, 60.0, Site::Head);
        for v in s.samples.iter_mut() {
            *v = 1.0;
        }
        // 0.1 s gap = 12 samples within the 0.25 s limit
        for v in s.samples[100..112].iter_mut() {
            *v = f64::NAN;
        }
        let repaired = s.repair_non_finite().unwrap();
        assert_eq!(repaired, 12);
        assert!(s.samples.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn long_nan_gap_rejected() {
        let mut s = sig(0.0, 60.0, Site::Head);
        for v in s.samples[100..180].iter_mut() {
            *v = f64::NAN; // 0.625 s
        }
        assert!(matches!(s.repair_non_finite(), Err(Error::NanGap { .. })));
    }
}
