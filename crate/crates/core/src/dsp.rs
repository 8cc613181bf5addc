//! Numerical primitives shared across the pipeline: zero-phase Butterworth
//! bandpass, moving statistics, resampling, z-scoring, Pearson correlation.

use crate::error::{Error, Result};
use crate::signal::Signal;
use rustfft::num_complex::Complex64;

/// Passband for PPG pulse content.
#[derive(Debug, Clone, PartialEq)]
pub struct BandpassSpec {
    pub low_hz: f64,
    pub high_hz: f64,
    /// Analog prototype order. Applied forward-backward, so the effective
    /// rolloff order is twice this.
    pub order: usize,
}

impl Default for BandpassSpec {
    fn default() -> Self {
        BandpassSpec {
            low_hz: 0.6,
            high_hz: 3.3,
            order: 2,
        }
    }
}

/// One second-order section, direct form II transposed.
#[derive(Debug, Clone)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3], // a[0] == 1
}

impl Biquad {
    fn filter_in_place(&self, x: &mut [f64]) {
        let (b0, b1, b2) = (self.b[0], self.b[1], self.b[2]);
        let (a1, a2) = (self.a[1], self.a[2]);
        // start from the steady state for a constant input equal to the
        // first sample, so the startup transient vanishes
        let x0 = x.first().copied().unwrap_or(0.0);
        let y_ss = (b0 + b1 + b2) / (1.0 + a1 + a2) * x0;
        let mut z1 = (b1 + b2) * x0 - (a1 + a2) * y_ss;
        let mut z2 = b2 * x0 - a2 * y_ss;
        for v in x.iter_mut() {
            let xi = *v;
            let y = b0 * xi + z1;
            z1 = b1 * xi - a1 * y + z2;
            z2 = b2 * xi - a2 * y;
            *v = y;
        }
    }
}

/// Designs a digital Butterworth bandpass as cascaded biquads
/// (bilinear transform of the lowpass-to-bandpass analog prototype).
pub fn butter_bandpass(spec: &BandpassSpec, sample_rate_hz: f64) -> Result<Vec<Biquad>> {
    let nyq = sample_rate_hz / 2.0;
    if !(spec.low_hz > 0.0 && spec.low_hz < spec.high_hz && spec.high_hz < nyq) || spec.order == 0 {
        return Err(Error::UnstableDesign {
            low_hz: spec.low_hz,
            high_hz: spec.high_hz,
            rate_hz: sample_rate_hz,
        });
    }
    let n = spec.order;
    let fs2 = 2.0 * sample_rate_hz;
    // prewarped analog edge frequencies
    let wl = fs2 * (std::f64::consts::PI * spec.low_hz / sample_rate_hz).tan();
    let wh = fs2 * (std::f64::consts::PI * spec.high_hz / sample_rate_hz).tan();
    let bw = wh - wl;
    let w0_sq = wl * wh;

    // Butterworth prototype poles on the unit circle, left half plane
    let mut analog_poles: Vec<Complex64> = Vec::with_capacity(2 * n);
    for k in 0..n {
        let theta = std::f64::consts::PI * (2 * k + 1) as f64 / (2 * n) as f64
            + std::f64::consts::FRAC_PI_2;
        let p = Complex64::new(theta.cos(), theta.sin());
        // lowpass -> bandpass: each pole splits into a pair
        let s = p * (bw / 2.0);
        let d = (s * s - Complex64::new(w0_sq, 0.0)).sqrt();
        analog_poles.push(s + d);
        analog_poles.push(s - d);
    }
    let gain_analog = bw.powi(n as i32); // n analog zeros at s = 0

    // bilinear transform; analog zeros at 0 map to z = 1, zeros at
    // infinity map to z = -1
    let mut digital_poles: Vec<Complex64> = Vec::with_capacity(2 * n);
    let mut denom = Complex64::new(1.0, 0.0);
    for &s in &analog_poles {
        digital_poles.push((Complex64::new(fs2, 0.0) + s) / (Complex64::new(fs2, 0.0) - s));
        denom *= Complex64::new(fs2, 0.0) - s;
    }
    let gain = gain_analog * (Complex64::new(fs2.powi(n as i32), 0.0) / denom).re;

    // pair conjugate poles into second-order sections
    let mut pool = digital_poles;
    let mut sections = Vec::with_capacity(n);
    while let Some(p) = pool.pop() {
        let target = p.conj();
        let (j, _) = pool
            .iter()
            .enumerate()
            .min_by(|a, b| {
                (a.1 - target)
                    .norm()
                    .partial_cmp(&(b.1 - target).norm())
                    .unwrap()
            })
            .expect("poles come in pairs");
        let q = pool.swap_remove(j);
        // each section gets one zero at +1 and one at -1: b = [1, 0, -1]
        sections.push(Biquad {
            b: [1.0, 0.0, -1.0],
            a: [1.0, -(p + q).re, (p * q).re],
        });
    }
    for b in sections[0].b.iter_mut() {
        *b *= gain;
    }
    Ok(sections)
}

/// Padding used by [`filtfilt`]: three characteristic lengths of the
/// low cutoff.
pub fn warmup_len(spec: &BandpassSpec, sample_rate_hz: f64) -> usize {
    (3.0 * sample_rate_hz / spec.low_hz).ceil() as usize
}

/// Forward-backward filtering with odd-reflection padding. Zero phase,
/// same length as the input.
pub fn filtfilt(sections: &[Biquad], x: &[f64], pad: usize) -> Result<Vec<f64>> {
    let n = x.len();
    if n <= pad {
        return Err(Error::TooShort {
            need: pad + 1,
            got: n,
        });
    }
    let mut ext = Vec::with_capacity(n + 2 * pad);
    let first = x[0];
    let last = x[n - 1];
    for i in (1..=pad).rev() {
        ext.push(2.0 * first - x[i]);
    }
    ext.extend_from_slice(x);
    for i in 1..=pad {
        ext.push(2.0 * last - x[n - 1 - i]);
    }
    for s in sections {
        s.filter_in_place(&mut ext);
    }
    ext.reverse();
    for s in sections {
        s.filter_in_place(&mut ext);
    }
    ext.reverse();
    Ok(ext[pad..pad + n].to_vec())
}

/// Zero-phase bandpass of a whole signal.
pub fn bandpass(signal: &Signal, spec: &BandpassSpec) -> Result<Signal> {
    let sections = butter_bandpass(spec, signal.sample_rate_hz)?;
    let pad = warmup_len(spec, signal.sample_rate_hz);
    let samples = filtfilt(&sections, &signal.samples, pad)?;
    Ok(Signal {
        samples,
        sample_rate_hz: signal.sample_rate_hz,
        site: signal.site.clone(),
        start_time_s: signal.start_time_s,
    })
}

/// Centered moving mean with shrinking windows at the edges.
pub fn moving_average(x: &[f64], window_s: f64, rate_hz: f64) -> Vec<f64> {
    let w = ((window_s * rate_hz).round() as usize).max(1);
    moving_mean_samples(x, w)
}

pub fn moving_mean_samples(x: &[f64], w: usize) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &v in x {
        acc += v;
        prefix.push(acc);
    }
    let left = (w - 1) / 2;
    let right = w / 2;
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(left);
            let hi = (i + right).min(n - 1);
            (prefix[hi + 1] - prefix[lo]) / (hi + 1 - lo) as f64
        })
        .collect()
}

/// Centered moving population standard deviation, shrinking edges.
pub fn moving_std_samples(x: &[f64], w: usize) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut p1 = Vec::with_capacity(n + 1);
    let mut p2 = Vec::with_capacity(n + 1);
    p1.push(0.0);
    p2.push(0.0);
    let (mut a1, mut a2) = (0.0, 0.0);
    for &v in x {
        a1 += v;
        a2 += v * v;
        p1.push(a1);
        p2.push(a2);
    }
    let left = (w - 1) / 2;
    let right = w / 2;
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(left);
            let hi = (i + right).min(n - 1);
            let cnt = (hi + 1 - lo) as f64;
            let m = (p1[hi + 1] - p1[lo]) / cnt;
            let v = (p2[hi + 1] - p2[lo]) / cnt - m * m;
            v.max(0.0).sqrt()
        })
        .collect()
}

/// Linear resampling to exactly `n` points on the normalized index axis.
/// Endpoints are preserved.
pub fn resample_to_n(x: &[f64], n: usize) -> Result<Vec<f64>> {
    if x.len() < 2 || n < 2 {
        return Err(Error::TooShort {
            need: 2,
            got: x.len().min(n),
        });
    }
    let scale = (x.len() - 1) as f64 / (n - 1) as f64;
    Ok((0..n)
        .map(|k| {
            let pos = k as f64 * scale;
            let i = (pos.floor() as usize).min(x.len() - 2);
            let frac = pos - i as f64;
            x[i] * (1.0 - frac) + x[i + 1] * frac
        })
        .collect())
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population standard deviation (divide by N).
pub fn pop_std(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64).sqrt()
}

/// Standardizes to zero mean and unit population standard deviation.
pub fn zscore(x: &[f64]) -> Result<Vec<f64>> {
    if x.len() < 2 {
        return Err(Error::TooShort {
            need: 2,
            got: x.len(),
        });
    }
    let m = mean(x);
    let s = pop_std(x);
    if !(s > 0.0) || s < 1e-13 * (m.abs() + 1.0) {
        return Err(Error::ZeroVariance);
    }
    Ok(x.iter().map(|v| (v - m) / s).collect())
}

/// Pearson correlation coefficient.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(Error::TooShort {
            need: 2,
            got: a.len(),
        });
    }
    let ma = mean(a);
    let mb = mean(b);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Piecewise-linear interpolation of (xs, ys) control points evaluated at
/// `t`, constant before the first and after the last point.
pub fn interp_linear(xs: &[f64], ys: &[f64], t: f64) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    debug_assert!(!xs.is_empty());
    if t <= xs[0] {
        return ys[0];
    }
    if t >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    let j = xs.partition_point(|&x| x <= t);
    let (x0, x1) = (xs[j - 1], xs[j]);
    let (y0, y1) = (ys[j - 1], ys[j]);
    y0 + (y1 - y0) * (t - x0) / (x1 - x0)
}
