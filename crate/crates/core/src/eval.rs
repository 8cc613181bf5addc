//! Evaluation harness: per-window HR error, error tables across
//! recordings, percentile curves, and their CSV/SVG renderings.

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::pipeline::{run_method, Method};
use crate::signal::{HrSeries, Signal, Site};
use rayon::prelude::*;
use std::fmt::Write as _;

/// One pipeline configuration to evaluate: a site subset plus a method.
#[derive(Debug, Clone)]
pub struct EvalCase {
    pub name: String,
    pub sites: Vec<Site>,
    pub method: Method,
}

impl EvalCase {
    pub fn single(site: Site) -> EvalCase {
        EvalCase {
            name: site.label().to_string(),
            sites: vec![site],
            method: Method::Single,
        }
    }
}

/// The standard comparison set: each site alone, fusion over all sites,
/// and the ICA baseline over all sites.
pub fn default_cases(sites: &[Site]) -> Vec<EvalCase> {
    let mut cases: Vec<EvalCase> = sites.iter().cloned().map(EvalCase::single).collect();
    cases.push(EvalCase {
        name: "fusion-all".into(),
        sites: sites.to_vec(),
        method: Method::Fusion,
    });
    cases.push(EvalCase {
        name: "ica-all".into(),
        sites: sites.to_vec(),
        method: Method::Ica,
    });
    cases
}

/// A recording together with its HR ground truth.
#[derive(Debug, Clone)]
pub struct EvalRecording {
    pub name: String,
    pub signals: Vec<Signal>,
    pub truth: HrSeries,
}

/// Per-window absolute HR error over the windows present in both series.
/// Grids must share the step and window length; windows are matched by
/// timestamp, and windows missing in either series are excluded.
pub fn hr_error(est: &HrSeries, truth: &HrSeries) -> Result<Vec<f64>> {
    if (est.step_s - truth.step_s).abs() > 1e-9
        || (est.window_len_s - truth.window_len_s).abs() > 1e-9
    {
        return Err(Error::GridMismatch);
    }
    let mut j = 0;
    let mut errors = Vec::new();
    for (t, e) in est.timestamps_s.iter().zip(&est.hr_bpm) {
        while j < truth.timestamps_s.len() && truth.timestamps_s[j] < t - 1e-6 {
            j += 1;
        }
        if j >= truth.timestamps_s.len() {
            break;
        }
        if (truth.timestamps_s[j] - t).abs() > 1e-6 {
            continue;
        }
        if let (Some(e), Some(tr)) = (e, truth.hr_bpm[j]) {
            errors.push((e - tr).abs());
        }
    }
    Ok(errors)
}

/// Percentiles 0-100 (step 1) of a pooled error sample, linearly
/// interpolated between order statistics. Monotone by construction.
#[derive(Debug, Clone)]
pub struct PercentileCurve {
    pub name: String,
    pub values: Vec<f64>,
}

pub fn percentile_curve(name: &str, errors: &[f64]) -> Option<PercentileCurve> {
    if errors.is_empty() {
        return None;
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let values = (0..=100)
        .map(|p| {
            let x = p as f64 / 100.0 * (n - 1) as f64;
            let i = x.floor() as usize;
            let j = (i + 1).min(n - 1);
            sorted[i] + (sorted[j] - sorted[i]) * (x - i as f64)
        })
        .collect();
    Some(PercentileCurve {
        name: name.to_string(),
        values,
    })
}

/// One table row: per-recording mean/median errors aggregated across
/// recordings. `None` statistics mark a failed cell (no recording of this
/// configuration produced comparable windows).
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub name: String,
    pub sites: Vec<Site>,
    pub mean_abs_err_bpm: Option<f64>,
    pub std_of_mean: Option<f64>,
    pub median_abs_err_bpm: Option<f64>,
    pub std_of_median: Option<f64>,
    pub recordings_ok: usize,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ErrorReport {
    pub rows: Vec<ReportRow>,
    pub curves: Vec<PercentileCurve>,
}

fn median(sorted: &mut Vec<f64>) -> f64 {
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

fn pick_signals(recording: &EvalRecording, sites: &[Site]) -> Result<Vec<Signal>> {
    sites
        .iter()
        .map(|site| {
            recording
                .signals
                .iter()
                .find(|s| &s.site == site)
                .cloned()
                .ok_or_else(|| Error::UnknownSite(site.label().to_string()))
        })
        .collect()
}

/// Runs every case on every recording in parallel and aggregates Table-1
/// style statistics: per-recording mean/median absolute error, then mean
/// and std across recordings, plus pooled percentile curves. Per-recording
/// failures are recorded on the row instead of aborting the report.
pub fn build_report(
    recordings: &[EvalRecording],
    cases: &[EvalCase],
    cfg: &PipelineConfig,
) -> Result<ErrorReport> {
    if recordings.is_empty() || cases.is_empty() {
        return Err(Error::EmptySet);
    }
    let cells: Vec<Vec<std::result::Result<Vec<f64>, String>>> = cases
        .par_iter()
        .map(|case| {
            recordings
                .par_iter()
                .map(|rec| {
                    let run = pick_signals(rec, &case.sites)
                        .and_then(|signals| run_method(signals, case.method, cfg))
                        .and_then(|hr| hr_error(&hr, &rec.truth));
                    match run {
                        Ok(errs) if !errs.is_empty() => Ok(errs),
                        Ok(_) => Err(format!("{}: no comparable windows", rec.name)),
                        Err(e) => Err(format!("{}: {e}", rec.name)),
                    }
                })
                .collect()
        })
        .collect();

    let mut rows = Vec::with_capacity(cases.len());
    let mut curves = Vec::new();
    for (case, per_recording) in cases.iter().zip(cells) {
        let mut means = Vec::new();
        let mut medians = Vec::new();
        let mut pooled = Vec::new();
        let mut failures = Vec::new();
        for cell in per_recording {
            match cell {
                Ok(mut errs) => {
                    means.push(errs.iter().sum::<f64>() / errs.len() as f64);
                    medians.push(median(&mut errs));
                    pooled.extend(errs);
                }
                Err(msg) => failures.push(msg),
            }
        }
        let agg = |v: &[f64]| {
            if v.is_empty() {
                (None, None)
            } else {
                let m = v.iter().sum::<f64>() / v.len() as f64;
                let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64;
                (Some(m), Some(var.sqrt()))
            }
        };
        let (mean, std_mean) = agg(&means);
        let (med_mean, std_med) = {
            let (m, s) = agg(&medians);
            (m, s)
        };
        rows.push(ReportRow {
            name: case.name.clone(),
            sites: case.sites.clone(),
            mean_abs_err_bpm: mean,
            std_of_mean: std_mean,
            median_abs_err_bpm: med_mean,
            std_of_median: std_med,
            recordings_ok: means.len(),
            failures,
        });
        if let Some(curve) = percentile_curve(&case.name, &pooled) {
            curves.push(curve);
        }
    }
    Ok(ErrorReport { rows, curves })
}

/// Report CSV: one row per configuration, `failed` in the statistic
/// columns when no recording produced comparable windows.
pub fn report_to_csv(report: &ErrorReport) -> String {
    let mut out = String::from(
        "config,sites,mean_abs_err_bpm,std_of_mean,median_abs_err_bpm,std_of_median,recordings_ok,recordings_failed\n",
    );
    for row in &report.rows {
        let sites: Vec<&str> = row.sites.iter().map(|s| s.label()).collect();
        let cell = |v: Option<f64>| match v {
            Some(v) => format!("{v:.4}"),
            None => "failed".to_string(),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            row.name,
            sites.join("+"),
            cell(row.mean_abs_err_bpm),
            cell(row.std_of_mean),
            cell(row.median_abs_err_bpm),
            cell(row.std_of_median),
            row.recordings_ok,
            row.failures.len(),
        );
    }
    out
}

const PLOT_COLORS: &[&str] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
]
.as_slice();

/// Renders all percentile curves into one standalone SVG plot.
pub fn curves_to_svg(curves: &[PercentileCurve]) -> String {
    let (w, h) = (720.0, 480.0);
    let (ml, mr, mt, mb) = (60.0, 160.0, 20.0, 50.0);
    let (pw, ph) = (w - ml - mr, h - mt - mb);
    let y_max = curves
        .iter()
        .flat_map(|c| c.values.iter())
        .fold(1.0f64, |a, &b| a.max(b))
        .ceil();
    let x_of = |p: f64| ml + p / 100.0 * pw;
    let y_of = |v: f64| mt + ph - (v / y_max) * ph;

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    );
    // axes
    let _ = writeln!(
        svg,
        "<line x1=\"{ml}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>",
        mt + ph,
        ml + pw
    );
    let _ = writeln!(
        svg,
        "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>",
        mt + ph
    );
    for p in (0..=100).step_by(20) {
        let x = x_of(p as f64);
        let _ = writeln!(
            svg,
            "<line x1=\"{x}\" y1=\"{0}\" x2=\"{x}\" y2=\"{1}\" stroke=\"black\"/>\n\
             <text x=\"{x}\" y=\"{2}\" font-size=\"12\" text-anchor=\"middle\">{p}</text>",
            mt + ph,
            mt + ph + 5.0,
            mt + ph + 20.0
        );
    }
    let n_ticks = 5;
    for k in 0..=n_ticks {
        let v = y_max * k as f64 / n_ticks as f64;
        let y = y_of(v);
        let _ = writeln!(
            svg,
            "<line x1=\"{0}\" y1=\"{y}\" x2=\"{ml}\" y2=\"{y}\" stroke=\"black\"/>\n\
             <text x=\"{1}\" y=\"{2}\" font-size=\"12\" text-anchor=\"end\">{v:.1}</text>",
            ml - 5.0,
            ml - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{0}\" y=\"{1}\" font-size=\"13\" text-anchor=\"middle\">percentile</text>",
        ml + pw / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"16\" y=\"{0}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 {0})\">absolute HR error (bpm)</text>",
        mt + ph / 2.0
    );
    for (i, curve) in curves.iter().enumerate() {
        let color = PLOT_COLORS[i % PLOT_COLORS.len()];
        let points: Vec<String> = curve
            .values
            .iter()
            .enumerate()
            .map(|(p, &v)| format!("{:.2},{:.2}", x_of(p as f64), y_of(v.min(y_max))))
            .collect();
        let _ = writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            points.join(" ")
        );
        let ly = mt + 16.0 + 18.0 * i as f64;
        let _ = writeln!(
            svg,
            "<line x1=\"{0}\" y1=\"{ly}\" x2=\"{1}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>\n\
             <text x=\"{2}\" y=\"{3}\" font-size=\"12\">{4}</text>",
            ml + pw + 12.0,
            ml + pw + 36.0,
            ml + pw + 42.0,
            ly + 4.0,
            curve.name
        );
    }
    svg.push_str("</svg>\n");
    svg
}
