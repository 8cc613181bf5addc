//! Ground-truth HR from a Lead I ECG channel via Pan-Tompkins R-peak
//! detection, windowed with the same aggregation as the PPG path.

use crate::beats::{hr_from_beats, HrWindowConfig, IbiGateConfig};
use crate::dsp::{self, BandpassSpec};
use crate::error::{Error, Result};
use crate::signal::{BeatSeries, HrSeries, Signal, Site};

/// Classic Pan-Tompkins constants (1985 formulation).
const QRS_BAND_LOW_HZ: f64 = 5.0;
const QRS_BAND_HIGH_HZ: f64 = 15.0;
const INTEGRATION_WINDOW_S: f64 = 0.150;
const REFRACTORY_S: f64 = 0.200;
const REFINE_WINDOW_S: f64 = 0.025;
/// Search-back triggers when no QRS is found within this multiple of the
/// running average RR interval.
const SEARCHBACK_RR_FACTOR: f64 = 1.66;

/// R-peak detection: bandpass, derivative, squaring, moving-window
/// integration, adaptive dual thresholds with search-back. Returned
/// indices are refined to the raw-signal local maximum within ±25 ms.
pub fn pan_tompkins_rpeaks(ecg: &Signal) -> Result<BeatSeries> {
    let rate = ecg.sample_rate_hz;
    let n = ecg.samples.len();
    if ecg.duration_s() < 10.0 {
        return Err(Error::TooShort {
            need: (10.0 * rate) as usize,
            got: n,
        });
    }
    let spec = BandpassSpec {
        low_hz: QRS_BAND_LOW_HZ,
        high_hz: QRS_BAND_HIGH_HZ,
        order: 2,
    };
    let sections = dsp::butter_bandpass(&spec, rate)?;
    let pad = (3.0 * rate / QRS_BAND_LOW_HZ).ceil() as usize;
    let filtered = dsp::filtfilt(&sections, &ecg.samples, pad)?;

    // five-point derivative
    let mut deriv = vec![0.0; n];
    for i in 2..n.saturating_sub(2) {
        deriv[i] =
            (2.0 * filtered[i + 2] + filtered[i + 1] - filtered[i - 1] - 2.0 * filtered[i - 2])
                / 8.0;
    }
    let squared: Vec<f64> = deriv.iter().map(|v| v * v).collect();
    let win = ((INTEGRATION_WINDOW_S * rate).round() as usize).max(1);
    let integrated = dsp::moving_mean_samples(&squared, win);

    // candidate peaks: local maxima of the integrated waveform
    let mut candidates: Vec<usize> = Vec::new();
    for i in 1..n - 1 {
        if integrated[i] > integrated[i - 1] && integrated[i] >= integrated[i + 1] {
            candidates.push(i);
        }
    }
    if candidates.is_empty() {
        return Ok(BeatSeries::new(Vec::new(), Some(ecg.site.clone())));
    }

    // learning phase over the first two seconds
    let learn = ((2.0 * rate) as usize).min(n);
    let learn_max = integrated[..learn].iter().cloned().fold(0.0, f64::max);
    let learn_mean = dsp::mean(&integrated[..learn]);
    let mut spki = 0.25 * learn_max;
    let mut npki = 0.5 * learn_mean;

    let refractory = (REFRACTORY_S * rate).round() as usize;
    let mut detections: Vec<usize> = Vec::new();
    let mut recent_rr: Vec<usize> = Vec::new();
    let mut last_checked = 0usize;

    let mut i = 0usize;
    while i < candidates.len() {
        let c = candidates[i];
        let peak = integrated[c];
        let threshold1 = npki + 0.25 * (spki - npki);
        if detections
            .last()
            .map_or(false, |&d| c <= d || c - d < refractory)
        {
            i += 1;
            continue;
        }
        if peak > threshold1 {
            spki = 0.125 * peak + 0.875 * spki;
            if let Some(&d) = detections.last() {
                recent_rr.push(c - d);
                if recent_rr.len() > 8 {
                    recent_rr.remove(0);
                }
            }
            detections.push(c);
            last_checked = i;
        } else {
            npki = 0.125 * peak + 0.875 * npki;
            // search-back when the expected beat is overdue
            if let (Some(&d), false) = (detections.last(), recent_rr.is_empty()) {
                let avg_rr = recent_rr.iter().sum::<usize>() as f64 / recent_rr.len() as f64;
                if (c - d) as f64 > SEARCHBACK_RR_FACTOR * avg_rr {
                    let threshold2 = 0.5 * threshold1;
                    let found = candidates[last_checked + 1..=i]
                        .iter()
                        .filter(|&&k| k > d + refractory && integrated[k] > threshold2)
                        .max_by(|&&a, &&b| integrated[a].partial_cmp(&integrated[b]).unwrap())
                        .copied();
                    if let Some(k) = found {
                        spki = 0.25 * integrated[k] + 0.75 * spki;
                        recent_rr.push(k - d);
                        if recent_rr.len() > 8 {
                            recent_rr.remove(0);
                        }
                        detections.push(k);
                        last_checked = i;
                        continue; // re-examine candidates after the recovered beat
                    }
                }
            }
        }
        i += 1;
    }

    // the integrated peak lags the QRS by up to the integration window;
    // locate the R in the bandpassed signal first, then refine to the
    // raw-signal local maximum within ±25 ms
    let refine = (REFINE_WINDOW_S * rate).round() as usize;
    let mut refined: Vec<usize> = detections
        .iter()
        .map(|&c| {
            let lo = c.saturating_sub(win);
            let hi = (c + win / 2 + 1).min(n);
            let r = (lo..hi)
                .max_by(|&a, &b| filtered[a].abs().partial_cmp(&filtered[b].abs()).unwrap())
                .unwrap();
            let lo = r.saturating_sub(refine);
            let hi = (r + refine + 1).min(n);
            (lo..hi)
                .max_by(|&a, &b| ecg.samples[a].partial_cmp(&ecg.samples[b]).unwrap())
                .unwrap()
        })
        .collect();
    refined.sort_unstable();
    refined.dedup();
    Ok(BeatSeries::new(refined, Some(ecg.site.clone())))
}

/// Ground-truth HR series: R peaks, then the same windowed aggregation
/// used by the PPG path (single implementation, reused here).
pub fn ground_truth_hr(
    ecg: &Signal,
    gate_cfg: &IbiGateConfig,
    win_cfg: &HrWindowConfig,
) -> Result<HrSeries> {
    let beats = pan_tompkins_rpeaks(ecg)?;
    Ok(hr_from_beats(
        &beats,
        ecg.sample_rate_hz,
        ecg.start_time_s,
        ecg.duration_s(),
        gate_cfg,
        win_cfg,
    ))
}

/// Convenience constructor for ECG channels parsed out of recordings.
pub fn ecg_signal(samples: Vec<f64>, rate_hz: f64, start_time_s: f64) -> Signal {
    Signal::new(samples, rate_hz, Site::Other("ecg".into()), start_time_s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    const FS: f64 = 128.0;

    /// Gaussian-QRS synthetic ECG with known R times.
    fn synth_ecg(hr_bpm: f64, dur_s: f64, noise_amp: f64, seed: u64) -> (Signal, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let period = 60.0 / hr_bpm;
        let n = (dur_s * FS) as usize;
        let mut x = vec![0.0; n];
        let mut truth = Vec::new();
        let mut tk = 0.4;
        while tk < dur_s - 0.4 {
            truth.push(tk);
            for (offset, amp, sigma) in [
                (-0.035, -0.12, 0.012), // Q
                (0.0, 1.0, 0.011),      // R
                (0.035, -0.20, 0.013),  // S
                (0.25, 0.18, 0.045),    // T
            ] {
                let center = tk + offset;
                let lo = ((center - 5.0 * sigma) * FS).max(0.0) as usize;
                let hi = (((center + 5.0 * sigma) * FS) as usize).min(n);
                for i in lo..hi {
                    let t = i as f64 / FS;
                    x[i] += amp * (-(t - center) * (t - center) / (2.0 * sigma * sigma)).exp();
                }
            }
            tk += period;
        }
        if noise_amp > 0.0 {
            for v in x.iter_mut() {
                *v += noise_amp * rng.gen_range(-1.0..1.0);
            }
        }
        (ecg_signal(x, FS, 0.0), truth)
    }

    fn match_stats(detected: &BeatSeries, truth: &[f64], tol_s: f64) -> (f64, f64) {
        let times: Vec<f64> = detected
            .peak_indices
            .iter()
            .map(|&i| i as f64 / FS)
            .collect();
        let mut hits = 0usize;
        for &t in truth {
            if times.iter().any(|&d| (d - t).abs() <= tol_s) {
                hits += 1;
            }
        }
        let mut true_dets = 0usize;
        for &d in &times {
            if truth.iter().any(|&t| (d - t).abs() <= tol_s) {
                true_dets += 1;
            }
        }
        let sensitivity = hits as f64 / truth.len() as f64;
        let ppv = if times.is_empty() {
            0.0
        } else {
            true_dets as f64 / times.len() as f64
        };
        (sensitivity, ppv)
    }

    #[test]
    fn clean_60_bpm_all_beats_found() {
        let (ecg, truth) = synth_ecg(60.0, 120.0, 0.0, 1);
        let beats = pan_tompkins_rpeaks(&ecg).unwrap();
        assert!(beats.len() >= 118, "only {} peaks", beats.len());
        let (sens, ppv) = match_stats(&beats, &truth, 0.05);
        assert!(sens >= 0.99, "sensitivity {sens}");
        assert!(ppv >= 0.999, "ppv {ppv}");
    }

    #[test]
    fn clean_rr_matches_truth_within_one_sample() {
        let (ecg, truth) = synth_ecg(75.0, 120.0, 0.0, 2);
        let beats = pan_tompkins_rpeaks(&ecg).unwrap();
        let true_rr = 60.0 / 75.0;
        let skip = 1; // edge beats may miss their neighbors
        for w in beats.peak_indices[skip..beats.len() - skip].windows(2) {
            let rr = (w[1] - w[0]) as f64 / FS;
            assert!(
                (rr - true_rr).abs() <= 1.0 / FS + 1e-9,
                "RR {rr} vs {true_rr}"
            );
        }
        assert!(beats.len() + 2 >= truth.len());
    }

    #[test]
    fn noisy_ecg_sensitivity() {
        // 10 dB SNR: noise amplitude ~ sqrt(P_signal / 10)
        let (clean, _) = synth_ecg(80.0, 120.0, 0.0, 3);
        let p_signal = clean.samples.iter().map(|v| v * v).sum::<f64>() / clean.len() as f64;
        let noise_amp = (p_signal / 10.0_f64).sqrt() * (3.0_f64).sqrt(); // uniform has var a^2/3
        let (ecg, truth) = synth_ecg(80.0, 120.0, noise_amp, 3);
        let beats = pan_tompkins_rpeaks(&ecg).unwrap();
        let (sens, ppv) = match_stats(&beats, &truth, 0.05);
        assert!(sens >= 0.95, "sensitivity {sens}");
        assert!(ppv >= 0.95, "ppv {ppv}");
    }

    #[test]
    fn flat_line_no_beats() {
        let ecg = ecg_signal(vec![0.0; (60.0 * FS) as usize], FS, 0.0);
        let beats = pan_tompkins_rpeaks(&ecg).unwrap();
        assert!(beats.is_empty());
    }

    #[test]
    fn too_short_rejected() {
        let ecg = ecg_signal(vec![0.0; (5.0 * FS) as usize], FS, 0.0);
        assert!(matches!(
            pan_tompkins_rpeaks(&ecg),
            Err(Error::TooShort { .. })
        ));
    }

    #[test]
    fn ground_truth_hr_constant_rate() {
        // R peaks every 750 ms -> 80 bpm in every window
        let (ecg, _) = synth_ecg(80.0, 180.0, 0.0, 4);
        let hr =
            ground_truth_hr(&ecg, &IbiGateConfig::default(), &HrWindowConfig::default()).unwrap();
        assert!(hr.n_present() > 0);
        for v in hr.hr_bpm.iter().flatten() {
            assert!((v - 80.0).abs() < 0.5, "got {v}");
        }
    }

    #[test]
    fn ground_truth_hr_empty_when_no_beats() {
        let ecg = ecg_signal(vec![0.0; (60.0 * FS) as usize], FS, 0.0);
        let hr =
            ground_truth_hr(&ecg, &IbiGateConfig::default(), &HrWindowConfig::default()).unwrap();
        assert_eq!(hr.n_present(), 0);
    }

    #[test]
    fn hr_sweep_tracked_within_tolerance() {
        // 60 -> 120 bpm over 5 minutes
        let dur = 300.0;
        let n = (dur * FS) as usize;
        let mut x = vec![0.0; n];
        let mut truth_times = Vec::new();
        let mut t = 0.4;
        while t < dur - 0.4 {
            truth_times.push(t);
            let sigma = 0.011;
            let lo = ((t - 5.0 * sigma) * FS).max(0.0) as usize;
            let hi = (((t + 5.0 * sigma) * FS) as usize).min(n);
            for i in lo..hi {
                let ti = i as f64 / FS;
                x[i] += (-(ti - t) * (ti - t) / (2.0 * sigma * sigma)).exp();
            }
            let hr_now = 60.0 + 60.0 * t / dur;
            t += 60.0 / hr_now;
        }
        let ecg = ecg_signal(x, FS, 0.0);
        let hr =
            ground_truth_hr(&ecg, &IbiGateConfig::default(), &HrWindowConfig::default()).unwrap();
        for (ts, v) in hr.timestamps_s.iter().zip(hr.hr_bpm.iter()) {
            if let Some(bpm) = v {
                let expect = 60.0 + 60.0 * ts / dur;
                assert!((bpm - expect).abs() < 2.0, "at {ts}s: {bpm} vs {expect}");
            }
        }
    }
}
