//! ICA baseline: fixed-point negentropy-maximizing unmixing of the
//! multi-site PPG matrix, with HR extracted from the component whose
//! spectrum concentrates best inside the pulse band.

use crate::error::{Error, Result};
use crate::signal::{AlignedSet, Signal, Site};
use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rustfft::{num_complex::Complex64, FftPlanner};

#[derive(Debug, Clone)]
pub struct IcaConfig {
    /// Recording is unmixed in chunks of this length; sign and permutation
    /// indeterminacy make one full-recording unmixing brittle under drift.
    pub chunk_s: f64,
    pub seed: u64,
    pub max_iter: usize,
    pub tolerance: f64,
}

impl Default for IcaConfig {
    fn default() -> Self {
        IcaConfig {
            chunk_s: 300.0,
            seed: 0x1ca,
            max_iter: 500,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IcaResult {
    /// Unmixed source sequences, one per component.
    pub components: Vec<Vec<f64>>,
    /// Estimated mixing matrix (pseudo-inverse of the unmixing transform).
    pub mixing: DMatrix<f64>,
    /// Index of the component picked by the selection rule.
    pub chosen: usize,
    /// Spectral concentration score of the chosen component.
    pub score: f64,
    pub converged: bool,
}

/// Fixed-point FastICA with tanh contrast and symmetric decorrelation.
/// Channels are centered and whitened internally; initialization is
/// deterministic for a given seed.
pub fn ica_unmix(set: &AlignedSet, n_components: usize, seed: u64) -> Result<IcaResult> {
    ica_unmix_cfg(
        set,
        n_components,
        &IcaConfig {
            seed,
            ..IcaConfig::default()
        },
    )
}

pub fn ica_unmix_cfg(set: &AlignedSet, n_components: usize, cfg: &IcaConfig) -> Result<IcaResult> {
    let n_chan = set.len();
    let n_samp = set.n_samples();
    if n_chan < 2 || n_components < 1 || n_components > n_chan {
        return Err(Error::EmptySet);
    }
    // center
    let mut x = DMatrix::<f64>::zeros(n_chan, n_samp);
    for (i, sig) in set.signals().iter().enumerate() {
        let m = crate::dsp::mean(&sig.samples);
        for (j, &v) in sig.samples.iter().enumerate() {
            x[(i, j)] = v - m;
        }
    }
    // whiten via eigen-decomposition of the channel covariance
    let cov = &x * x.transpose() / n_samp as f64;
    let eig = cov.symmetric_eigen();
    let max_ev = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    if max_ev <= 0.0 || eig.eigenvalues.iter().any(|&ev| ev < 1e-10 * max_ev) {
        return Err(Error::SingularWhitening);
    }
    // order eigenpairs by descending eigenvalue, keep n_components
    let mut order: Vec<usize> = (0..n_chan).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let mut whitener = DMatrix::<f64>::zeros(n_components, n_chan);
    for (row, &k) in order.iter().take(n_components).enumerate() {
        let scale = 1.0 / eig.eigenvalues[k].sqrt();
        for c in 0..n_chan {
            whitener[(row, c)] = eig.eigenvectors[(c, k)] * scale;
        }
    }
    let z = &whitener * &x; // n_components x n_samp, identity covariance

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w =
        DMatrix::<f64>::from_fn(n_components, n_components, |_, _| rng.gen_range(-1.0..1.0));
    symmetric_decorrelate(&mut w);

    let mut converged = false;
    for _ in 0..cfg.max_iter {
        let prev = w.clone();
        // one fixed-point step for all rows: w <- E[z g(w'z)] - E[g'(w'z)] w
        let proj = &w * &z; // n_components x n_samp
        let mut new_w = DMatrix::<f64>::zeros(n_components, n_components);
        for r in 0..n_components {
            let mut g_mean = DVector::<f64>::zeros(n_components);
            let mut gprime_mean = 0.0;
            for t in 0..n_samp {
                let u = proj[(r, t)];
                let g = u.tanh();
                gprime_mean += 1.0 - g * g;
                for c in 0..n_components {
                    g_mean[c] += z[(c, t)] * g;
                }
            }
            g_mean /= n_samp as f64;
            gprime_mean /= n_samp as f64;
            for c in 0..n_components {
                new_w[(r, c)] = g_mean[c] - gprime_mean * w[(r, c)];
            }
        }
        w = new_w;
        symmetric_decorrelate(&mut w);
        // convergence: every row nearly parallel to its previous self
        let delta = (0..n_components)
            .map(|r| {
                let dot: f64 = (0..n_components).map(|c| w[(r, c)] * prev[(r, c)]).sum();
                (dot.abs() - 1.0).abs()
            })
            .fold(0.0, f64::max);
        if delta < cfg.tolerance {
            converged = true;
            break;
        }
    }

    let unmix = &w * &whitener; // n_components x n_chan
    let sources = &unmix * &x;
    let mut components: Vec<Vec<f64>> = (0..n_components)
        .map(|r| (0..n_samp).map(|t| sources[(r, t)]).collect())
        .collect();
    // resolve sign so systolic peaks point upward (positive skew)
    for comp in components.iter_mut() {
        if skewness(comp) < 0.0 {
            for v in comp.iter_mut() {
                *v = -*v;
            }
        }
    }
    let mixing = unmix
        .clone()
        .pseudo_inverse(1e-12)
        .unwrap_or_else(|_| DMatrix::zeros(n_chan, n_components));
    let rate = set.sample_rate_hz();
    let (chosen, score) = select_best_component_of(&components, rate);
    Ok(IcaResult {
        components,
        mixing,
        chosen,
        score,
        converged,
    })
}

fn symmetric_decorrelate(w: &mut DMatrix<f64>) {
    // W <- (W W')^{-1/2} W
    let wwt = &*w * w.transpose();
    let eig = wwt.symmetric_eigen();
    let n = w.nrows();
    let mut inv_sqrt = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let ev = eig.eigenvalues[i].max(1e-300);
        let s = 1.0 / ev.sqrt();
        for r in 0..n {
            for c in 0..n {
                inv_sqrt[(r, c)] += eig.eigenvectors[(r, i)] * s * eig.eigenvectors[(c, i)];
            }
        }
    }
    *w = &inv_sqrt * &*w;
}

fn skewness(x: &[f64]) -> f64 {
    let m = crate::dsp::mean(x);
    let sd = crate::dsp::pop_std(x);
    if sd <= 0.0 {
        return 0.0;
    }
    x.iter().map(|v| ((v - m) / sd).powi(3)).sum::<f64>() / x.len() as f64
}

/// Picks the component maximizing spectral concentration: power within
/// ±0.1 Hz of the best fundamental candidate inside the 0.6-3.3 Hz pulse
/// band, plus the same window around its second harmonic when that still
/// falls inside the band, divided by the total band power. Counting the
/// harmonic separates true pulse components from components that carry
/// only the doubled frequency. Scale invariant by construction.
pub fn select_best_component(result: &IcaResult, rate_hz: f64) -> usize {
    select_best_component_of(&result.components, rate_hz).0
}

fn select_best_component_of(components: &[Vec<f64>], rate_hz: f64) -> (usize, f64) {
    if components.len() == 1 {
        return (0, windowed_concentration(&components[0], rate_hz));
    }
    components
        .iter()
        .enumerate()
        .map(|(i, c)| (i, windowed_concentration(c, rate_hz)))
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap_or((0, 0.0))
}

/// Mean spectral concentration over 30 s windows. HR drifts over a long
/// chunk, smearing the fundamental across bins; a transient artifact tone
/// is concentrated only while it lasts. Short-window averaging keeps the
/// metric high for a drifting pulse and low for a burst-limited tone.
fn windowed_concentration(x: &[f64], rate_hz: f64) -> f64 {
    let w = (30.0 * rate_hz).round() as usize;
    if x.len() < 2 * w {
        return spectral_concentration(x, rate_hz);
    }
    let n_windows = x.len() / w;
    let mut sum = 0.0;
    for k in 0..n_windows {
        let hi = if k + 1 == n_windows {
            x.len()
        } else {
            (k + 1) * w
        };
        sum += spectral_concentration(&x[k * w..hi], rate_hz);
    }
    sum / n_windows as f64
}

pub fn spectral_concentration(x: &[f64], rate_hz: f64) -> f64 {
    let n = x.len();
    if n < 16 {
        return 0.0;
    }
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft.process(&mut buf);
    let df = rate_hz / n as f64;
    let lo = (0.6 / df).ceil() as usize;
    let hi = ((3.3 / df).floor() as usize).min(n / 2);
    if lo >= hi {
        return 0.0;
    }
    let power: Vec<f64> = (lo..=hi).map(|k| buf[k].norm_sqr()).collect();
    let total: f64 = power.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let halfwidth = (0.1 / df).ceil() as usize;
    let window_sum = |center: usize| -> f64 {
        power[center.saturating_sub(halfwidth)..(center + halfwidth + 1).min(power.len())]
            .iter()
            .sum()
    };
    // candidate fundamentals are the in-band bins; a second harmonic that
    // is still in band counts toward its fundamental
    let mut best = 0.0f64;
    for k in 0..power.len() {
        let mut s = window_sum(k);
        let harmonic = 2 * (k + lo);
        if harmonic <= hi {
            let h = harmonic - lo;
            // only credit the harmonic when the fundamental itself is
            // present, otherwise a pure doubled-frequency component would
            // claim a fictitious fundamental below it
            if h > k + 2 * halfwidth && s >= 0.2 * window_sum(h) {
                s += window_sum(h);
            }
        }
        best = best.max(s);
    }
    best / total
}

/// Full-recording best-component signal: unmix in chunks, pick the best
/// component per chunk, concatenate. The result feeds the beat pipeline.
pub fn best_component_signal(set: &AlignedSet, cfg: &IcaConfig) -> Result<Signal> {
    let rate = set.sample_rate_hz();
    let chunk = ((cfg.chunk_s * rate).round() as usize).max(16);
    let n = set.n_samples();
    let n_chan = set.len();
    let mut out = Vec::with_capacity(n);
    let mut lo = 0;
    while lo < n {
        let hi = (lo + chunk).min(n);
        // fold a trailing remainder shorter than half a chunk into the last one
        let hi = if n - hi < chunk / 2 { n } else { hi };
        let sub: Vec<Signal> = set
            .signals()
            .iter()
            .map(|s| Signal {
                samples: s.samples[lo..hi].to_vec(),
                sample_rate_hz: rate,
                site: s.site.clone(),
                start_time_s: s.start_time_s + lo as f64 / rate,
            })
            .collect();
        let sub_set = crate::signal::validate_aligned_set_min(sub, 0.0)?;
        match ica_unmix_cfg(&sub_set, n_chan, cfg) {
            Ok(result) => {
                let comp = &result.components[result.chosen];
                out.extend(crate::dsp::zscore(comp).unwrap_or_else(|_| comp.clone()));
            }
            Err(Error::SingularWhitening) => {
                // degenerate chunk (e.g. identical channels); fall back to
                // the first channel so the output stays continuous
                out.extend(set.signals()[0].samples[lo..hi].iter().cloned());
            }
            Err(e) => return Err(e),
        }
        lo = hi;
    }
    Ok(Signal {
        samples: out,
        sample_rate_hz: rate,
        site: Site::Other("ica".into()),
        start_time_s: set.start_time_s(),
    })
}
