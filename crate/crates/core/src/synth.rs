//! Deterministic synthetic multi-site PPG + ECG generator with ground-truth
//! beat times and scripted per-channel noise bursts.

use crate::beats::{hr_from_beats, HrWindowConfig, IbiGateConfig};
use crate::config::parse_sections;
use crate::error::{Error, Result};
use crate::signal::{BeatSeries, HrSeries, Signal, Site};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct PulseShape {
    /// Systolic Gaussian width as a fraction of the beat period.
    pub systolic_width: f64,
    /// Dicrotic bump delay as a fraction of the beat period.
    pub dicrotic_delay: f64,
    /// Dicrotic Gaussian width as a fraction of the beat period.
    pub dicrotic_width: f64,
    /// Dicrotic amplitude relative to the systolic peak.
    pub dicrotic_amp: f64,
}

impl Default for PulseShape {
    fn default() -> Self {
        PulseShape {
            systolic_width: 0.12,
            dicrotic_delay: 0.35,
            dicrotic_width: 0.18,
            dicrotic_amp: 0.35,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SiteSpec {
    pub site: Site,
    pub shape: PulseShape,
    pub amplitude: f64,
    /// Pulse-arrival lag relative to the true beat time.
    pub lag_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    White,
    MotionSine,
    Dropout,
}

impl NoiseKind {
    pub fn parse(s: &str) -> Option<NoiseKind> {
        match s {
            "white" => Some(NoiseKind::White),
            "motion_sine" => Some(NoiseKind::MotionSine),
            "dropout" => Some(NoiseKind::Dropout),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            NoiseKind::White => "white",
            NoiseKind::MotionSine => "motion_sine",
            NoiseKind::Dropout => "dropout",
        }
    }
}

#[derive(Debug, Clone)]
pub struct NoiseEvent {
    pub site: Site,
    pub start_s: f64,
    pub end_s: f64,
    pub kind: NoiseKind,
    /// In-burst signal-to-noise ratio; ignored for dropouts.
    pub snr_db: f64,
}

#[derive(Debug, Clone)]
pub struct SynthScenario {
    pub duration_s: f64,
    pub rate_hz: f64,
    /// Piecewise-linear (time_s, bpm) control points.
    pub hr_profile: Vec<(f64, f64)>,
    pub sites: Vec<SiteSpec>,
    pub noise_events: Vec<NoiseEvent>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub signals: Vec<Signal>,
    pub ecg: Signal,
    /// True beat sample indices per site (including the site's lag).
    pub truth_beats: Vec<BeatSeries>,
    /// HR ground truth on the standard 30 s / 5 s grid.
    pub truth_hr: HrSeries,
    /// True beat times (seconds, before per-site lag).
    pub beat_times_s: Vec<f64>,
}

impl SynthScenario {
    /// Standard 4-site scenario with per-site pulse-arrival lags.
    pub fn four_site(duration_s: f64, hr_profile: Vec<(f64, f64)>, seed: u64) -> SynthScenario {
        let site = |site: Site, amplitude: f64, lag_ms: f64, width: f64| SiteSpec {
            site,
            shape: PulseShape {
                systolic_width: width,
                ..PulseShape::default()
            },
            amplitude,
            lag_ms,
        };
        SynthScenario {
            duration_s,
            rate_hz: 128.0,
            hr_profile,
            sites: vec![
                site(Site::Head, 1.0, 0.0, 0.12),
                site(Site::Sternum, 0.9, 10.0, 0.13),
                site(Site::Wrist, 0.8, 60.0, 0.11),
                site(Site::Ankle, 0.85, 90.0, 0.12),
            ],
            noise_events: Vec::new(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidScenario(msg));
        if self.duration_s <= 0.0 || self.rate_hz <= 0.0 {
            return fail("duration and rate must be positive".into());
        }
        if self.sites.is_empty() {
            return fail("at least one site is required".into());
        }
        if self.hr_profile.is_empty() {
            return fail("hr_profile must have at least one point".into());
        }
        for (t, bpm) in &self.hr_profile {
            if !(40.0..=185.0).contains(bpm) {
                return fail(format!("hr {bpm} bpm at t={t} outside [40, 185]"));
            }
        }
        for w in self.hr_profile.windows(2) {
            if w[1].0 <= w[0].0 {
                return fail("hr_profile times must be strictly increasing".into());
            }
        }
        for s in &self.sites {
            if s.lag_ms.abs() > 150.0 {
                return fail(format!("site {} lag {} ms outside ±150", s.site, s.lag_ms));
            }
        }
        for e in &self.noise_events {
            if e.start_s < 0.0 || e.end_s > self.duration_s || e.end_s <= e.start_s {
                return fail(format!(
                    "noise window [{}, {}] outside recording",
                    e.start_s, e.end_s
                ));
            }
            if !self.sites.iter().any(|s| s.site == e.site) {
                return fail(format!("noise event for unknown site {}", e.site));
            }
        }
        Ok(())
    }

    fn hr_at(&self, t: f64) -> f64 {
        let xs: Vec<f64> = self.hr_profile.iter().map(|(x, _)| *x).collect();
        let ys: Vec<f64> = self.hr_profile.iter().map(|(_, y)| *y).collect();
        crate::dsp::interp_linear(&xs, &ys, t)
    }
}

fn add_gaussian(x: &mut [f64], rate: f64, center_s: f64, amp: f64, sigma_s: f64) {
    let n = x.len();
    let lo = ((center_s - 5.0 * sigma_s) * rate).max(0.0) as usize;
    let hi = (((center_s + 5.0 * sigma_s) * rate).ceil() as usize).min(n);
    for i in lo..hi {
        let t = i as f64 / rate;
        x[i] += amp * (-(t - center_s) * (t - center_s) / (2.0 * sigma_s * sigma_s)).exp();
    }
}

/// Renders the scenario. Beat times integrate the instantaneous HR
/// profile; each site renders its pulse shape at its lag; noise events are
/// superimposed at the requested SNR. Fully deterministic given the seed.
pub fn generate(scenario: &SynthScenario) -> Result<SynthOutput> {
    scenario.validate()?;
    let rate = scenario.rate_hz;
    let n = (scenario.duration_s * rate).round() as usize;
    let dt = 1.0 / rate;

    // integrate the HR profile; a beat fires at every integer phase crossing
    let mut beat_times = Vec::new();
    let mut phase = 0.75; // first beat lands shortly after the start
    let mut t = 0.0;
    while t < scenario.duration_s {
        let next = phase + scenario.hr_at(t) / 60.0 * dt;
        if next >= 1.0 {
            // linear interpolation of the crossing instant
            let frac = (1.0 - phase) / (next - phase);
            let tb = t + frac * dt;
            if tb < scenario.duration_s - 0.3 && tb > 0.3 {
                beat_times.push(tb);
            }
            phase = next - 1.0;
        } else {
            phase = next;
        }
        t += dt;
    }

    // per-beat local period (to scale pulse widths)
    let period_at = |k: usize| -> f64 {
        if beat_times.len() < 2 {
            return 1.0;
        }
        if k + 1 < beat_times.len() {
            beat_times[k + 1] - beat_times[k]
        } else {
            beat_times[k] - beat_times[k - 1]
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut signals = Vec::with_capacity(scenario.sites.len());
    let mut truth_beats = Vec::with_capacity(scenario.sites.len());

    for spec in &scenario.sites {
        let lag_s = spec.lag_ms / 1000.0;
        let mut x = vec![0.0; n];
        let mut peaks = Vec::new();
        for (k, &tb) in beat_times.iter().enumerate() {
            let period = period_at(k);
            let center = tb + lag_s;
            add_gaussian(
                &mut x,
                rate,
                center,
                spec.amplitude,
                spec.shape.systolic_width * period,
            );
            add_gaussian(
                &mut x,
                rate,
                center + spec.shape.dicrotic_delay * period,
                spec.amplitude * spec.shape.dicrotic_amp,
                spec.shape.dicrotic_width * period,
            );
            let idx = (center * rate).round() as i64;
            if idx >= 0 && (idx as usize) < n {
                peaks.push(idx as usize);
            }
        }
        peaks.dedup();

        for event in scenario.noise_events.iter().filter(|e| e.site == spec.site) {
            let lo = (event.start_s * rate).round() as usize;
            let hi = ((event.end_s * rate).round() as usize).min(n);
            if lo >= hi {
                continue;
            }
            let burst = &x[lo..hi];
            let p_signal = burst.iter().map(|v| v * v).sum::<f64>() / burst.len() as f64;
            match event.kind {
                NoiseKind::Dropout => {
                    for v in x[lo..hi].iter_mut() {
                        *v = 0.0;
                    }
                }
                NoiseKind::White => {
                    let p_noise = p_signal / 10f64.powf(event.snr_db / 10.0);
                    let amp = (3.0 * p_noise).sqrt(); // uniform [-a, a] has power a^2/3
                    for v in x[lo..hi].iter_mut() {
                        *v += amp * rng.gen_range(-1.0..1.0);
                    }
                }
                NoiseKind::MotionSine => {
                    // two in-band sinusoids with drifting frequency plus an
                    // amplitude modulation of the underlying pulse
                    let f1 = rng.gen_range(0.5..1.8);
                    let f2 = rng.gen_range(1.8..3.0);
                    let drift = rng.gen_range(-0.15..0.15);
                    let phi1 = rng.gen_range(0.0..std::f64::consts::TAU);
                    let phi2 = rng.gen_range(0.0..std::f64::consts::TAU);
                    let fm = rng.gen_range(0.1..0.4);
                    let p_noise = p_signal / 10f64.powf(event.snr_db / 10.0);
                    // unit-power mix: sin + 0.6 sin has power (1 + 0.36)/2
                    let amp = (p_noise / 0.68).sqrt();
                    for i in lo..hi {
                        let tt = (i - lo) as f64 / rate;
                        let f1_t = f1 + drift * tt / (hi - lo) as f64 * rate * dt;
                        let carrier = (std::f64::consts::TAU * f1_t * tt + phi1).sin()
                            + 0.6 * (std::f64::consts::TAU * f2 * tt + phi2).sin();
                        let am = 1.0 + 0.6 * (std::f64::consts::TAU * fm * tt).sin();
                        x[i] = x[i] * am + amp * carrier;
                    }
                }
            }
        }

        signals.push(Signal::new(x, rate, spec.site.clone(), 0.0));
        truth_beats.push(BeatSeries::new(peaks, Some(spec.site.clone())));
    }

    // ECG rendered at the true beat times (no pulse-arrival lag)
    let mut ecg = vec![0.0; n];
    for &tb in &beat_times {
        for (offset, amp, sigma) in [
            (-0.035, -0.12, 0.012),
            (0.0, 1.0, 0.011),
            (0.035, -0.20, 0.013),
            (0.25, 0.18, 0.045),
        ] {
            add_gaussian(&mut ecg, rate, tb + offset, amp, sigma);
        }
    }
    let ecg = Signal::new(ecg, rate, Site::Other("ecg".into()), 0.0);

    // ground-truth HR via the shared windowed aggregation
    let truth_series = BeatSeries::new(
        beat_times
            .iter()
            .map(|&tb| (tb * rate).round() as usize)
            .collect::<Vec<_>>()
            .into_iter()
            .scan(None, |prev: &mut Option<usize>, idx| {
                // drop duplicates from rounding at very high rates
                let keep = prev.map_or(true, |p| idx > p);
                *prev = Some(idx);
                Some(if keep { Some(idx) } else { None })
            })
            .flatten()
            .collect(),
        None,
    );
    let truth_hr = hr_from_beats(
        &truth_series,
        rate,
        0.0,
        scenario.duration_s,
        &IbiGateConfig::default(),
        &HrWindowConfig::default(),
    );

    Ok(SynthOutput {
        signals,
        ecg,
        truth_beats,
        truth_hr,
        beat_times_s: beat_times,
    })
}

/// Parses a scenario file: one `[scenario]` section, then repeated
/// `[site]` and `[noise]` sections.
pub fn parse_scenario(text: &str, path: &str) -> Result<SynthScenario> {
    let sections = parse_sections(text, path)?;
    let mut scenario = SynthScenario {
        duration_s: 0.0,
        rate_hz: 128.0,
        hr_profile: Vec::new(),
        sites: Vec::new(),
        noise_events: Vec::new(),
        seed: 0,
    };
    let mut saw_scenario = false;
    for s in &sections {
        match s.name.as_str() {
            "scenario" => {
                saw_scenario = true;
                if let Some(v) = s.parse_f64("duration_s", path)? {
                    scenario.duration_s = v;
                }
                if let Some(v) = s.parse_f64("rate_hz", path)? {
                    scenario.rate_hz = v;
                }
                if let Some(v) = s.parse_u64("seed", path)? {
                    scenario.seed = v;
                }
                if let Some(profile) = s.get("hr_profile") {
                    scenario.hr_profile = profile
                        .split(',')
                        .map(|pair| {
                            let (t, bpm) =
                                pair.trim().split_once(':').ok_or_else(|| Error::Parse {
                                    path: path.to_string(),
                                    line: s.line,
                                    msg: format!("hr_profile entry '{pair}' wants time:bpm"),
                                })?;
                            let parse = |v: &str| {
                                v.trim().parse::<f64>().map_err(|_| Error::Parse {
                                    path: path.to_string(),
                                    line: s.line,
                                    msg: format!("bad number '{v}' in hr_profile"),
                                })
                            };
                            Ok((parse(t)?, parse(bpm)?))
                        })
                        .collect::<Result<Vec<_>>>()?;
                }
            }
            "site" => {
                let name = s.get("name").ok_or_else(|| Error::Parse {
                    path: path.to_string(),
                    line: s.line,
                    msg: "[site] section needs a name".into(),
                })?;
                let mut spec = SiteSpec {
                    site: Site::parse(name)?,
                    shape: PulseShape::default(),
                    amplitude: 1.0,
                    lag_ms: 0.0,
                };
                if let Some(v) = s.parse_f64("amplitude", path)? {
                    spec.amplitude = v;
                }
                if let Some(v) = s.parse_f64("lag_ms", path)? {
                    spec.lag_ms = v;
                }
                if let Some(v) = s.parse_f64("systolic_width", path)? {
                    spec.shape.systolic_width = v;
                }
                if let Some(v) = s.parse_f64("dicrotic_delay", path)? {
                    spec.shape.dicrotic_delay = v;
                }
                if let Some(v) = s.parse_f64("dicrotic_width", path)? {
                    spec.shape.dicrotic_width = v;
                }
                if let Some(v) = s.parse_f64("dicrotic_amp", path)? {
                    spec.shape.dicrotic_amp = v;
                }
                scenario.sites.push(spec);
            }
            "noise" => {
                let site = Site::parse(s.get("site").ok_or_else(|| Error::Parse {
                    path: path.to_string(),
                    line: s.line,
                    msg: "[noise] section needs a site".into(),
                })?)?;
                let kind_str = s.get("kind").unwrap_or("white");
                let kind = NoiseKind::parse(kind_str).ok_or_else(|| Error::Parse {
                    path: path.to_string(),
                    line: s.line,
                    msg: format!("unknown noise kind '{kind_str}'"),
                })?;
                scenario.noise_events.push(NoiseEvent {
                    site,
                    start_s: s.parse_f64("start_s", path)?.unwrap_or(0.0),
                    end_s: s.parse_f64("end_s", path)?.unwrap_or(0.0),
                    kind,
                    snr_db: s.parse_f64("snr_db", path)?.unwrap_or(0.0),
                });
            }
            other => {
                return Err(Error::Parse {
                    path: path.to_string(),
                    line: s.line,
                    msg: format!("unknown section '[{other}]' in scenario"),
                })
            }
        }
    }
    if !saw_scenario {
        return Err(Error::Parse {
            path: path.to_string(),
            line: 1,
            msg: "missing [scenario] section".into(),
        });
    }
    Ok(scenario)
}

/// Serializes a scenario in the same flat key-value format.
pub fn scenario_to_text(s: &SynthScenario) -> String {
    let mut out = String::new();
    out.push_str("[scenario]\n");
    out.push_str(&format!("duration_s = {}\n", s.duration_s));
    out.push_str(&format!("rate_hz = {}\n", s.rate_hz));
    out.push_str(&format!("seed = {}\n", s.seed));
    let profile: Vec<String> = s
        .hr_profile
        .iter()
        .map(|(t, bpm)| format!("{t}:{bpm}"))
        .collect();
    out.push_str(&format!("hr_profile = {}\n", profile.join(", ")));
    for site in &s.sites {
        out.push_str(&format!(
            "\n[site]\nname = {}\namplitude = {}\nlag_ms = {}\nsystolic_width = {}\ndicrotic_delay = {}\ndicrotic_width = {}\ndicrotic_amp = {}\n",
            site.site, site.amplitude, site.lag_ms, site.shape.systolic_width,
            site.shape.dicrotic_delay, site.shape.dicrotic_width, site.shape.dicrotic_amp,
        ));
    }
    for e in &s.noise_events {
        out.push_str(&format!(
            "\n[noise]\nsite = {}\nstart_s = {}\nend_s = {}\nkind = {}\nsnr_db = {}\n",
            e.site,
            e.start_s,
            e.end_s,
            e.kind.label(),
            e.snr_db,
        ));
    }
    out
}
