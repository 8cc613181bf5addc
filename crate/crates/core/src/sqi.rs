//! Per-site beat templates and per-beat signal quality.
//!
//! A candidate segment spans two interbeat intervals, delimited by the
//! neighboring systolic peaks of the scored beat, downsampled to a fixed
//! length and z-scored. Template formation gates candidates against a
//! leaning triangle wave, then iteratively prunes the worst-matching
//! segments. Quality of a beat is its segment's Pearson correlation with
//! the site template.

use crate::dsp;
use crate::error::{Error, Result};
use crate::signal::{BeatSeries, BeatTemplate, Signal};

#[derive(Debug, Clone)]
pub struct TemplateConfig {
    pub n_samples: usize,
    /// Segments must correlate above this with the triangle wave.
    pub triangle_gate_r: f64,
    /// Pruning stops once this many segments remain.
    pub target_pool: usize,
    /// Fraction of each half spent on the systolic rise; the rest is decay.
    pub rise_fraction: f64,
    pub min_hr: f64,
    pub max_hr: f64,
}

impl Default for TemplateConfig {
    fn default() -> Self {
        TemplateConfig {
            n_samples: 40,
            triangle_gate_r: 0.8,
            target_pool: 500,
            rise_fraction: 0.3,
            min_hr: 40.0,
            max_hr: 185.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BeatQuality {
    pub peak_index: usize,
    /// Correlation with the site template; 0 for rejected extractions.
    pub r: f64,
}

/// Outcome of segment extraction; rejection is a value, not a failure.
#[derive(Debug, Clone)]
pub enum Extraction {
    Segment(Vec<f64>),
    Rejected(Rejection),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    /// A half-interval implies an HR outside [min_hr, max_hr].
    ImplausibleLength,
    /// Flat segment; z-scoring is undefined.
    ZeroVariance,
    /// The peak has no predecessor or successor.
    NoNeighbors,
}

/// Extracts the two-interval segment around the peak at `peak_ordinal`,
/// resampled to `cfg.n_samples` and z-scored.
pub fn extract_segment(
    signal: &Signal,
    beats: &BeatSeries,
    peak_ordinal: usize,
    cfg: &TemplateConfig,
) -> Extraction {
    if peak_ordinal == 0 || peak_ordinal + 1 >= beats.peak_indices.len() {
        return Extraction::Rejected(Rejection::NoNeighbors);
    }
    let prev = beats.peak_indices[peak_ordinal - 1];
    let mid = beats.peak_indices[peak_ordinal];
    let next = beats.peak_indices[peak_ordinal + 1];
    let rate = signal.sample_rate_hz;
    for interval in [mid - prev, next - mid] {
        let hr = 60.0 * rate / interval as f64;
        if hr < cfg.min_hr || hr > cfg.max_hr {
            return Extraction::Rejected(Rejection::ImplausibleLength);
        }
    }
    let raw = &signal.samples[prev..=next];
    let resampled = match dsp::resample_to_n(raw, cfg.n_samples) {
        Ok(v) => v,
        Err(_) => return Extraction::Rejected(Rejection::ImplausibleLength),
    };
    match dsp::zscore(&resampled) {
        Ok(z) => Extraction::Segment(z),
        Err(_) => Extraction::Rejected(Rejection::ZeroVariance),
    }
}

/// Deterministic z-scored leaning triangle reference of length `n`: two
/// concatenated asymmetric triangles, one per interbeat interval. Each half
/// decays from an apex at its start and rises back over the trailing
/// `rise_fraction`, so apexes sit at the half boundaries where the
/// delimiting systolic peaks fall.
pub fn leaning_triangle(n: usize, rise_fraction: f64) -> Vec<f64> {
    assert!(n >= 8, "triangle needs at least 8 samples");
    let half = n / 2;
    let rise = ((rise_fraction * half as f64).round() as usize).clamp(1, half - 1);
    let fall = half - rise;
    let mut v = Vec::with_capacity(n);
    for _ in 0..2 {
        for i in 0..half {
            if i < fall {
                // decay from just below the apex down to zero
                v.push(1.0 - (i + 1) as f64 / fall as f64);
            } else {
                // systolic upstroke back to the apex at the boundary
                v.push((i - fall + 1) as f64 / rise as f64);
            }
        }
    }
    while v.len() < n {
        v.push(1.0);
    }
    dsp::zscore(&v).expect("triangle wave is never constant")
}

fn average_zscored(segments: &[&Vec<f64>], n: usize) -> Result<Vec<f64>> {
    let mut avg = vec![0.0; n];
    for seg in segments {
        for (a, s) in avg.iter_mut().zip(seg.iter()) {
            *a += s;
        }
    }
    for a in avg.iter_mut() {
        *a /= segments.len() as f64;
    }
    dsp::zscore(&avg)
}

/// Builds the site template: triangle-gate, average, then iteratively drop
/// the segment with the lowest correlation to the current template
/// (recomputed after every removal) until `target_pool` remain.
pub fn build_template(
    segments: &[Vec<f64>],
    site: crate::signal::Site,
    cfg: &TemplateConfig,
) -> Result<BeatTemplate> {
    let triangle = leaning_triangle(cfg.n_samples, cfg.rise_fraction);
    let mut pool: Vec<&Vec<f64>> = segments
        .iter()
        .filter(|s| {
            s.len() == cfg.n_samples
                && dsp::pearson(s, &triangle).map_or(false, |r| r > cfg.triangle_gate_r)
        })
        .collect();
    if pool.len() < 2 {
        return Err(Error::NoCleanSegments);
    }
    while pool.len() > cfg.target_pool.max(2) {
        let template = average_zscored(&pool, cfg.n_samples)?;
        let (worst, _) = pool
            .iter()
            .enumerate()
            .map(|(i, s)| (i, dsp::pearson(s, &template).unwrap_or(-1.0)))
            .fold(
                (0, f64::INFINITY),
                |acc, (i, r)| {
                    if r < acc.1 {
                        (i, r)
                    } else {
                        acc
                    }
                },
            );
        pool.swap_remove(worst);
    }
    let values = average_zscored(&pool, cfg.n_samples)?;
    Ok(BeatTemplate {
        values,
        site,
        n_contributing: pool.len(),
    })
}

/// Collects every extractable segment for the beat series, in peak order.
pub fn collect_segments(
    signal: &Signal,
    beats: &BeatSeries,
    cfg: &TemplateConfig,
) -> Vec<Vec<f64>> {
    (1..beats.peak_indices.len().saturating_sub(1).max(1))
        .filter_map(|k| match extract_segment(signal, beats, k, cfg) {
            Extraction::Segment(s) => Some(s),
            Extraction::Rejected(_) => None,
        })
        .collect()
}

/// Scores every interior peak against the site template. Rejected
/// extractions score r = 0.
pub fn score_beats(
    signal: &Signal,
    beats: &BeatSeries,
    template: &BeatTemplate,
    cfg: &TemplateConfig,
) -> Vec<BeatQuality> {
    if beats.peak_indices.len() < 3 {
        return Vec::new();
    }
    (1..beats.peak_indices.len() - 1)
        .map(|k| {
            let r = match extract_segment(signal, beats, k, cfg) {
                Extraction::Segment(s) => dsp::pearson(&s, &template.values).unwrap_or(0.0),
                Extraction::Rejected(_) => 0.0,
            };
            BeatQuality {
                peak_index: beats.peak_indices[k],
                r,
            }
        })
        .collect()
}

/// Template serialization: one line of metadata, then one value per line.
pub fn template_to_text(t: &BeatTemplate) -> String {
    let mut out = format!(
        "site={} n={} contributing={}\n",
        t.site,
        t.values.len(),
        t.n_contributing
    );
    for v in &t.values {
        out.push_str(&format!("{v:.12}\n"));
    }
    out
}

pub fn template_from_text(text: &str) -> Result<BeatTemplate> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse {
        path: "<template>".into(),
        line: 1,
        msg: "empty template record".into(),
    })?;
    let mut site = None;
    let mut n_contributing = 0usize;
    for field in header.split_whitespace() {
        let (key, value) = field.split_once('=').ok_or_else(|| Error::Parse {
            path: "<template>".into(),
            line: 1,
            msg: format!("bad header field '{field}'"),
        })?;
        match key {
            "site" => site = Some(crate::signal::Site::parse(value)?),
            "contributing" => {
                n_contributing = value.parse().map_err(|_| Error::Parse {
                    path: "<template>".into(),
                    line: 1,
                    msg: format!("bad count '{value}'"),
                })?
            }
            _ => {}
        }
    }
    let values: Vec<f64> = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse {
            path: "<template>".into(),
            line: 0,
            msg: e.to_string(),
        })?;
    Ok(BeatTemplate {
        values,
        site: site.unwrap_or(crate::signal::Site::Other("unknown".into())),
        n_contributing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{mean, pearson, pop_std};
    use crate::signal::{BeatSeries, Signal, Site};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    const FS: f64 = 128.0;

    fn clean_shape(n: usize, rng_phase: f64) -> Vec<f64> {
        // two-period asymmetric pulse resembling a filtered PPG beat
        let tri = leaning_triangle(n, 0.3);
        tri.iter()
            .enumerate()
            .map(|(i, v)| v + 0.05 * ((i as f64 * 0.7) + rng_phase).sin())
            .collect()
    }

    fn periodic_signal(hr_bpm: f64, dur_s: f64) -> (Signal, BeatSeries) {
        let period = 60.0 / hr_bpm;
        let n = (dur_s * FS) as usize;
        let mut x = vec![0.0; n];
        let mut peaks = Vec::new();
        let mut tk = 0.5;
        while tk < dur_s - 0.5 {
            let sigma = 0.12 * period;
            let lo = ((tk - 4.0 * sigma) * FS).max(0.0) as usize;
            let hi = (((tk + 4.0 * sigma) * FS) as usize).min(n);
            for i in lo..hi {
                let t = i as f64 / FS;
                x[i] += (-(t - tk) * (t - tk) / (2.0 * sigma * sigma)).exp();
            }
            peaks.push((tk * FS).round() as usize);
            tk += period;
        }
        let sig = Signal::new(x, FS, Site::Head, 0.0);
        (sig, BeatSeries::new(peaks, Some(Site::Head)))
    }

    #[test]
    fn periodic_signal_segments_self_consistent() {
        let (sig, beats) = periodic_signal(60.0, 60.0);
        let cfg = TemplateConfig::default();
        let segs = collect_segments(&sig, &beats, &cfg);
        assert!(segs.len() >= beats.len() - 2);
        for pair in segs.windows(2) {
            assert!(pearson(&pair[0], &pair[1]).unwrap() > 0.999);
        }
    }

    #[test]
    fn slow_half_interval_rejected() {
        // neighbor interval of 2 s implies 30 bpm on one half
        let n = (10.0 * FS) as usize;
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let sig = Signal::new(x, FS, Site::Head, 0.0);
        let peaks = vec![128, 128 + 256, 128 + 256 + 128];
        let beats = BeatSeries::new(peaks, None);
        match extract_segment(&sig, &beats, 1, &TemplateConfig::default()) {
            Extraction::Rejected(Rejection::ImplausibleLength) => {}
            other => panic!("expected ImplausibleLength, got {other:?}"),
        }
    }

    #[test]
    fn flat_line_rejected_zero_variance() {
        let sig = Signal::new(vec![1.0; 1000], FS, Site::Head, 0.0);
        let beats = BeatSeries::new(vec![100, 228, 356], None);
        match extract_segment(&sig, &beats, 1, &TemplateConfig::default()) {
            Extraction::Rejected(Rejection::ZeroVariance) => {}
            other => panic!("expected ZeroVariance, got {other:?}"),
        }
    }

    #[test]
    fn triangle_is_zscored_with_boundary_apexes() {
        let tri = leaning_triangle(40, 0.3);
        assert_eq!(tri.len(), 40);
        assert!(mean(&tri).abs() < 1e-9);
        assert!((pop_std(&tri) - 1.0).abs() < 1e-9);
        assert!((pearson(&tri, &tri).unwrap() - 1.0).abs() < 1e-12);
        // apexes at the ends of each 20-sample half
        let argmaxes: Vec<usize> = {
            let max = tri.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            tri.iter()
                .enumerate()
                .filter(|(_, &v)| (v - max).abs() < 1e-12)
                .map(|(i, _)| i)
                .collect()
        };
        assert_eq!(argmaxes, vec![19, 39]);
    }

    #[test]
    fn template_from_identical_segments() {
        let shape = clean_shape(40, 0.0);
        let z = crate::dsp::zscore(&shape).unwrap();
        let segments: Vec<Vec<f64>> = vec![z.clone(); 600];
        let cfg = TemplateConfig::default();
        let t = build_template(&segments, Site::Head, &cfg).unwrap();
        assert_eq!(t.n_contributing, 500);
        assert!(pearson(&t.values, &z).unwrap() > 0.9999);
        assert!(mean(&t.values).abs() < 1e-9);
        assert!((pop_std(&t.values) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn noise_segments_mostly_eliminated() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let shape = crate::dsp::zscore(&clean_shape(40, 0.0)).unwrap();
        let mut segments = Vec::new();
        for k in 0..400 {
            let jitter: Vec<f64> = shape
                .iter()
                .enumerate()
                .map(|(i, v)| v + 0.05 * ((i + k) as f64 * 1.3).sin())
                .collect();
            segments.push(crate::dsp::zscore(&jitter).unwrap());
        }
        for _ in 0..200 {
            let noise: Vec<f64> = (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect();
            segments.push(crate::dsp::zscore(&noise).unwrap());
        }
        let cfg = TemplateConfig::default();
        let t = build_template(&segments, Site::Head, &cfg).unwrap();
        assert!(pearson(&t.values, &shape).unwrap() > 0.99);
        // with 400 clean segments the pool never exceeds 500 after the gate
        // unless noise sneaks through; check that the gate dropped nearly all
        let triangle = leaning_triangle(40, 0.3);
        let passed_noise = segments[400..]
            .iter()
            .filter(|s| pearson(s, &triangle).unwrap() > cfg.triangle_gate_r)
            .count();
        assert!(passed_noise <= 10, "{passed_noise} noise segments passed");
    }

    #[test]
    fn no_clean_segments_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let segments: Vec<Vec<f64>> = (0..50)
            .map(|_| {
                let noise: Vec<f64> = (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect();
                crate::dsp::zscore(&noise).unwrap()
            })
            .collect();
        assert!(matches!(
            build_template(&segments, Site::Head, &TemplateConfig::default()),
            Err(Error::NoCleanSegments)
        ));
    }

    #[test]
    fn template_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let shape = crate::dsp::zscore(&clean_shape(40, 0.0)).unwrap();
        let mut segments: Vec<Vec<f64>> = (0..60)
            .map(|k| {
                let jitter: Vec<f64> = shape
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v + 0.08 * ((i * (k + 1)) as f64).sin())
                    .collect();
                crate::dsp::zscore(&jitter).unwrap()
            })
            .collect();
        let cfg = TemplateConfig {
            target_pool: 40,
            ..TemplateConfig::default()
        };
        let a = build_template(&segments, Site::Head, &cfg).unwrap();
        segments.shuffle(&mut rng);
        let b = build_template(&segments, Site::Head, &cfg).unwrap();
        assert!(pearson(&a.values, &b.values).unwrap() > 0.9999);
    }

    #[test]
    fn score_beats_self_consistency_and_affine_invariance() {
        let (sig, beats) = periodic_signal(72.0, 120.0);
        let cfg = TemplateConfig::default();
        let segs = collect_segments(&sig, &beats, &cfg);
        let t = build_template(&segs, Site::Head, &cfg).unwrap();
        let scores = score_beats(&sig, &beats, &t, &cfg);
        assert_eq!(scores.len(), beats.len() - 2);
        for s in &scores {
            assert!(s.r > 0.99, "beat at {} scored {}", s.peak_index, s.r);
        }
        // positive affine transform of the raw signal leaves scores unchanged
        let scaled = Signal::new(
            sig.samples.iter().map(|v| 3.0 * v + 10.0).collect(),
            FS,
            Site::Head,
            0.0,
        );
        let scores2 = score_beats(&scaled, &beats, &t, &cfg);
        for (a, b) in scores.iter().zip(&scores2) {
            assert!((a.r - b.r).abs() < 1e-9);
        }
    }

    #[test]
    fn fewer_than_three_peaks_empty_scores() {
        let sig = Signal::new(vec![0.0; 1000], FS, Site::Head, 0.0);
        let beats = BeatSeries::new(vec![100, 300], None);
        let t = BeatTemplate {
            values: leaning_triangle(40, 0.3),
            site: Site::Head,
            n_contributing: 1,
        };
        assert!(score_beats(&sig, &beats, &t, &TemplateConfig::default()).is_empty());
    }

    #[test]
    fn template_text_roundtrip() {
        let t = BeatTemplate {
            values: leaning_triangle(40, 0.3),
            site: Site::Ankle,
            n_contributing: 123,
        };
        let text = template_to_text(&t);
        let back = template_from_text(&text).unwrap();
        assert_eq!(back.site, Site::Ankle);
        assert_eq!(back.n_contributing, 123);
        assert_eq!(back.values.len(), 40);
        for (a, b) in t.values.iter().zip(&back.values) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
