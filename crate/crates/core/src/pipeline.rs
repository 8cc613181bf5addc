//! End-to-end orchestration: single-site, quality-weighted fusion, and
//! ICA-based HR estimation from raw aligned recordings.

use crate::beats::{detect_peaks, gate_ibis, hr_from_beats};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::fusion::{
    align_channels, fuse, fused_hr, normalize_windows, window_quality, FusedSignal,
};
use crate::ica::best_component_signal;
use crate::signal::{
    validate_aligned_set, AlignedSet, BeatSeries, BeatTemplate, HrSeries, QualityTrace, Signal,
};
use crate::sqi::{build_template, collect_segments, score_beats, BeatQuality};
use rayon::prelude::*;

/// Which estimation path to run on a recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Single,
    Fusion,
    Ica,
}

impl Method {
    pub fn parse(s: &str) -> Option<Method> {
        match s {
            "single" => Some(Method::Single),
            "fusion" => Some(Method::Fusion),
            "ica" => Some(Method::Ica),
            _ => None,
        }
    }
}

/// Diagnostics kept alongside a fusion HR estimate.
#[derive(Debug, Clone)]
pub struct FusionRun {
    pub hr: HrSeries,
    pub fused: FusedSignal,
    pub templates: Vec<Option<BeatTemplate>>,
    /// Index of the reference channel used for alignment.
    pub reference: usize,
    pub lags_samples: Vec<i64>,
}

/// Bandpass, peak detection, IBI gating, and windowed HR for one channel.
pub fn single_site_hr(signal: &Signal, cfg: &PipelineConfig) -> Result<HrSeries> {
    let filtered = crate::dsp::bandpass(signal, &cfg.bandpass)?;
    let beats = detect_peaks(&filtered, &cfg.peaks)?;
    let gated = gate_ibis(&beats, &cfg.gate);
    Ok(hr_from_beats(
        &gated,
        filtered.sample_rate_hz,
        filtered.start_time_s,
        filtered.duration_s(),
        &cfg.gate,
        &cfg.hr,
    ))
}

struct SitePrep {
    filtered: Signal,
    beats: BeatSeries,
    template: Option<BeatTemplate>,
    scores: Vec<BeatQuality>,
}

fn prepare_site(signal: &Signal, cfg: &PipelineConfig) -> Result<SitePrep> {
    let filtered = crate::dsp::bandpass(signal, &cfg.bandpass)?;
    let beats = detect_peaks(&filtered, &cfg.peaks)?;
    let gated = gate_ibis(&beats, &cfg.gate);
    let segments = collect_segments(&filtered, &gated, &cfg.template);
    let template = build_template(&segments, filtered.site.clone(), &cfg.template).ok();
    let scores = template
        .as_ref()
        .map(|t| score_beats(&filtered, &gated, t, &cfg.template))
        .unwrap_or_default();
    Ok(SitePrep {
        filtered,
        beats: gated,
        template,
        scores,
    })
}

/// Full fusion pipeline over raw signals sharing an epoch: filter each
/// channel, detect and gate beats, build per-site templates, align to the
/// best channel, weight by windowed template correlation, mix, and rerun
/// beat detection on the fused waveform.
pub fn fusion_hr(signals: Vec<Signal>, cfg: &PipelineConfig) -> Result<FusionRun> {
    let set = validate_aligned_set(signals)?;
    let preps: Vec<SitePrep> = set
        .signals()
        .par_iter()
        .map(|s| prepare_site(s, cfg))
        .collect::<Result<_>>()?;

    let filtered_set = AlignedSet::from_aligned(preps.iter().map(|p| p.filtered.clone()).collect());
    let beats: Vec<BeatSeries> = preps.iter().map(|p| p.beats.clone()).collect();
    let scores: Vec<Vec<BeatQuality>> = preps.iter().map(|p| p.scores.clone()).collect();

    let aligned = align_channels(&filtered_set, &beats, &scores, &cfg.fusion)?;

    // rescore on the shifted channels so quality windows line up with the
    // shifted sample axis
    let n = aligned.set.n_samples();
    let rate = aligned.set.sample_rate_hz();
    let traces: Vec<QualityTrace> = aligned
        .set
        .signals()
        .par_iter()
        .zip(&aligned.beats)
        .zip(&preps)
        .map(|((sig, beats), prep)| {
            let scores = prep
                .template
                .as_ref()
                .map(|t| score_beats(sig, beats, t, &cfg.template))
                .unwrap_or_default();
            window_quality(&scores, n, rate, &cfg.fusion)
        })
        .collect();

    let normalized = AlignedSet::from_aligned(
        aligned
            .set
            .signals()
            .iter()
            .map(|s| normalize_windows(s, cfg.fusion.quality_window_s))
            .collect(),
    );
    let mut fused = fuse(&normalized, &traces, &cfg.fusion)?;
    fused.clamped_lags = aligned
        .clamped
        .iter()
        .zip(aligned.set.signals())
        .filter(|(c, _)| **c)
        .map(|(_, s)| s.site.clone())
        .collect();
    let hr = fused_hr(&fused, &cfg.peaks, &cfg.gate, &cfg.hr)?;
    Ok(FusionRun {
        hr,
        fused,
        templates: preps.into_iter().map(|p| p.template).collect(),
        reference: aligned.reference,
        lags_samples: aligned.lags,
    })
}

/// ICA baseline: unmix the bandpassed channels, pick the most pulsatile
/// component per chunk, and run the beat pipeline on it.
pub fn ica_hr(signals: Vec<Signal>, cfg: &PipelineConfig) -> Result<HrSeries> {
    let set = validate_aligned_set(signals)?;
    let filtered: Vec<Signal> = set
        .signals()
        .par_iter()
        .map(|s| crate::dsp::bandpass(s, &cfg.bandpass))
        .collect::<Result<_>>()?;
    let filtered_set = AlignedSet::from_aligned(filtered);
    let component = best_component_signal(&filtered_set, &cfg.ica)?;
    let beats = detect_peaks(&component, &cfg.peaks)?;
    let gated = gate_ibis(&beats, &cfg.gate);
    Ok(hr_from_beats(
        &gated,
        component.sample_rate_hz,
        component.start_time_s,
        component.duration_s(),
        &cfg.gate,
        &cfg.hr,
    ))
}

/// Dispatches on method. `Single` requires exactly one signal.
pub fn run_method(signals: Vec<Signal>, method: Method, cfg: &PipelineConfig) -> Result<HrSeries> {
    match method {
        Method::Single => {
            if signals.len() != 1 {
                return Err(Error::InvalidScenario(format!(
                    "single-site method expects one channel, got {}",
                    signals.len()
                )));
            }
            single_site_hr(&signals[0], cfg)
        }
        Method::Fusion => Ok(fusion_hr(signals, cfg)?.hr),
        Method::Ica => ica_hr(signals, cfg),
    }
}
