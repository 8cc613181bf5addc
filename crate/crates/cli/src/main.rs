//! `ppgfuse`: synthetic data generation, HR estimation, and evaluation
//! reports for the multi-site PPG fusion pipeline.

use anyhow::Context;
use clap::{Parser, Subcommand};
use ppgfuse_core::beats::{detect_peaks, gate_ibis};
use ppgfuse_core::eval::{
    build_report, curves_to_svg, default_cases, report_to_csv, EvalRecording,
};
use ppgfuse_core::io as pio;
use ppgfuse_core::pipeline::{run_method, Method};
use ppgfuse_core::sqi::{build_template, collect_segments, template_to_text};
use ppgfuse_core::synth::{generate, parse_scenario};
use ppgfuse_core::{Error, PipelineConfig, Signal, Site};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "ppgfuse", version, about = "Multi-site PPG fusion pipeline")]
struct Cli {
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Pipeline configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic recording with ground truth from a scenario file.
    Synth {
        /// Scenario description file.
        scenario: PathBuf,
        /// Output directory (created if missing).
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Estimate HR from a recording CSV.
    Hr {
        recording: PathBuf,
        /// Comma-separated site labels to use.
        #[arg(long)]
        sites: String,
        /// Estimation method.
        #[arg(long, default_value = "fusion")]
        method: String,
        /// Output HR CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate configurations across recordings and emit report + plots.
    Eval {
        /// List file: one `recording.csv,truth_hr.csv` pair per line.
        recordings: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Build and save a per-site beat template from a recording.
    Template {
        recording: PathBuf,
        #[arg(long)]
        site: String,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Exit code taxonomy: 2 for usage or bad input, 1 for internal failures.
fn exit_code_for(err: &anyhow::Error) -> u8 {
    if let Some(core) = err.downcast_ref::<Error>() {
        return match core {
            Error::Parse { .. }
            | Error::Io(_)
            | Error::InvalidScenario(_)
            | Error::UnknownSite(_)
            | Error::RateInference(_)
            | Error::NanGap { .. }
            | Error::EmptySet
            | Error::NoOverlap { .. }
            | Error::RateMismatch(..) => 2,
            _ => 1,
        };
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return 2;
    }
    1
}

fn atomic_write(path: &Path, contents: &str) -> anyhow::Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("out")
    ));
    std::fs::write(&tmp, contents).with_context(|| format!("cannot write {}", tmp.display()))?;
    std::fs::rename(&tmp, path)
        .with_context(|| format!("cannot move {} into place", path.display()))?;
    Ok(())
}

struct Manifest {
    command: String,
    config: Option<PathBuf>,
    inputs: Vec<PathBuf>,
    seed: Option<u64>,
    outputs: Vec<PathBuf>,
    started: Instant,
}

impl Manifest {
    fn new(command: &str, config: Option<&PathBuf>) -> Manifest {
        Manifest {
            command: command.to_string(),
            config: config.cloned(),
            inputs: Vec::new(),
            seed: None,
            outputs: Vec::new(),
            started: Instant::now(),
        }
    }

    fn write(&self, path: &Path) -> anyhow::Result<()> {
        let mut out = String::from("[manifest]\n");
        let _ = writeln!(out, "command = {}", self.command);
        let _ = writeln!(out, "tool_version = {}", env!("CARGO_PKG_VERSION"));
        if let Some(cfg) = &self.config {
            let _ = writeln!(out, "config = {}", cfg.display());
        }
        for input in &self.inputs {
            let _ = writeln!(out, "input = {}", input.display());
        }
        if let Some(seed) = self.seed {
            let _ = writeln!(out, "seed = {seed}");
        }
        for output in &self.outputs {
            let _ = writeln!(out, "output = {}", output.display());
        }
        let _ = writeln!(out, "wall_ms = {}", self.started.elapsed().as_millis());
        atomic_write(path, &out)
    }
}

fn load_config(path: Option<&PathBuf>) -> anyhow::Result<PipelineConfig> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("cannot read config {}", p.display()))?;
            Ok(PipelineConfig::parse(&text, &p.display().to_string())?)
        }
        None => Ok(PipelineConfig::default()),
    }
}

fn select_sites(signals: &[Signal], labels: &str) -> anyhow::Result<Vec<Signal>> {
    let available: Vec<&str> = signals.iter().map(|s| s.site.label()).collect();
    labels
        .split(',')
        .map(|l| {
            let label = l.trim();
            signals
                .iter()
                .find(|s| s.site.label() == label)
                .cloned()
                .ok_or_else(|| {
                    anyhow::Error::new(Error::UnknownSite(label.to_string())).context(format!(
                        "site '{}' not in recording; valid labels: {}",
                        label,
                        available.join(", ")
                    ))
                })
        })
        .collect()
}

fn cmd_synth(
    scenario_path: &Path,
    out_dir: &Path,
    cfg_path: Option<&PathBuf>,
) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(scenario_path)
        .with_context(|| format!("cannot read scenario {}", scenario_path.display()))?;
    let scenario = parse_scenario(&text, &scenario_path.display().to_string())?;
    let out = generate(&scenario)?;
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create {}", out_dir.display()))?;

    let mut manifest = Manifest::new("synth", cfg_path);
    manifest.inputs.push(scenario_path.to_path_buf());
    manifest.seed = Some(scenario.seed);

    let rec_path = out_dir.join("recording.csv");
    atomic_write(
        &rec_path,
        &pio::recording_to_csv(&out.signals, Some(&out.ecg))?,
    )?;
    manifest.outputs.push(rec_path);

    let truth_path = out_dir.join("truth_hr.csv");
    atomic_write(&truth_path, &pio::hr_to_csv(&out.truth_hr))?;
    manifest.outputs.push(truth_path);

    let mut beats_csv = String::from("site,sample_index\n");
    for beats in &out.truth_beats {
        let site = beats.source_site.as_ref().map(|s| s.label()).unwrap_or("?");
        for &idx in &beats.peak_indices {
            let _ = writeln!(beats_csv, "{site},{idx}");
        }
    }
    let beats_path = out_dir.join("truth_beats.csv");
    atomic_write(&beats_path, &beats_csv)?;
    manifest.outputs.push(beats_path);

    manifest.write(&out_dir.join("manifest.txt"))?;
    Ok(())
}

fn cmd_hr(
    recording: &Path,
    sites: &str,
    method: &str,
    out: &Path,
    cfg_path: Option<&PathBuf>,
) -> anyhow::Result<()> {
    let method = Method::parse(method).ok_or_else(|| {
        anyhow::Error::new(Error::InvalidScenario(format!(
            "unknown method '{method}'; expected single, fusion, or ica"
        )))
    })?;
    let cfg = load_config(cfg_path)?;
    let rec = pio::load_recording(recording)?;
    for w in &rec.warnings {
        eprintln!("warning: {w}");
    }
    let selected = select_sites(&rec.signals, sites)?;
    let hr = run_method(selected, method, &cfg)?;

    let mut manifest = Manifest::new("hr", cfg_path);
    manifest.inputs.push(recording.to_path_buf());
    atomic_write(out, &pio::hr_to_csv(&hr))?;
    manifest.outputs.push(out.to_path_buf());
    manifest.write(&manifest_sibling(out))?;
    Ok(())
}

fn manifest_sibling(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("output");
    out.with_file_name(format!("{stem}.manifest.txt"))
}

fn cmd_eval(list_path: &Path, out_dir: &Path, cfg_path: Option<&PathBuf>) -> anyhow::Result<()> {
    let cfg = load_config(cfg_path)?;
    let list = std::fs::read_to_string(list_path)
        .with_context(|| format!("cannot read recording list {}", list_path.display()))?;
    let base = list_path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &str| {
        let p = Path::new(p.trim());
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };

    let mut recordings = Vec::new();
    let mut inputs = Vec::new();
    for (idx, line) in list.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (rec_file, truth_file) = line.split_once(',').ok_or_else(|| {
            anyhow::Error::new(Error::Parse {
                path: list_path.display().to_string(),
                line: idx + 1,
                msg: "expected 'recording.csv,truth_hr.csv'".into(),
            })
        })?;
        let rec_path = resolve(rec_file);
        let truth_path = resolve(truth_file);
        let rec = pio::load_recording(&rec_path)?;
        for w in &rec.warnings {
            eprintln!("warning: {}: {w}", rec_path.display());
        }
        let truth = pio::load_hr(&truth_path)?;
        inputs.push(rec_path.clone());
        inputs.push(truth_path);
        recordings.push(EvalRecording {
            name: rec_path.display().to_string(),
            signals: rec.signals,
            truth,
        });
    }
    if recordings.is_empty() {
        anyhow::bail!(Error::EmptySet);
    }

    let sites: Vec<Site> = recordings[0]
        .signals
        .iter()
        .map(|s| s.site.clone())
        .collect();
    let cases = default_cases(&sites);
    let report = build_report(&recordings, &cases, &cfg)?;
    for row in &report.rows {
        for failure in &row.failures {
            eprintln!("warning: {}: {failure}", row.name);
        }
    }

    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create {}", out_dir.display()))?;
    let mut manifest = Manifest::new("eval", cfg_path);
    manifest.inputs = inputs;

    let report_path = out_dir.join("report.csv");
    atomic_write(&report_path, &report_to_csv(&report))?;
    manifest.outputs.push(report_path);

    let combined = out_dir.join("percentiles.svg");
    atomic_write(&combined, &curves_to_svg(&report.curves))?;
    manifest.outputs.push(combined);
    for curve in &report.curves {
        let path = out_dir.join(format!("percentile_{}.svg", curve.name));
        atomic_write(&path, &curves_to_svg(std::slice::from_ref(curve)))?;
        manifest.outputs.push(path);
    }

    manifest.write(&out_dir.join("manifest.txt"))?;
    Ok(())
}

fn cmd_template(
    recording: &Path,
    site: &str,
    out: &Path,
    cfg_path: Option<&PathBuf>,
) -> anyhow::Result<()> {
    let cfg = load_config(cfg_path)?;
    let rec = pio::load_recording(recording)?;
    let signal = select_sites(&rec.signals, site)?.remove(0);
    let filtered = ppgfuse_core::dsp::bandpass(&signal, &cfg.bandpass)?;
    let beats = detect_peaks(&filtered, &cfg.peaks)?;
    let gated = gate_ibis(&beats, &cfg.gate);
    let segments = collect_segments(&filtered, &gated, &cfg.template);
    let template = build_template(&segments, filtered.site.clone(), &cfg.template)?;

    let mut manifest = Manifest::new("template", cfg_path);
    manifest.inputs.push(recording.to_path_buf());
    atomic_write(out, &template_to_text(&template))?;
    manifest.outputs.push(out.to_path_buf());
    manifest.write(&manifest_sibling(out))?;
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("cannot configure the worker pool")?;
    }
    match &cli.cmd {
        Cmd::Synth { scenario, out_dir } => cmd_synth(scenario, out_dir, cli.config.as_ref()),
        Cmd::Hr {
            recording,
            sites,
            method,
            out,
        } => cmd_hr(recording, sites, method, out, cli.config.as_ref()),
        Cmd::Eval {
            recordings,
            out_dir,
        } => cmd_eval(recordings, out_dir, cli.config.as_ref()),
        Cmd::Template {
            recording,
            site,
            out,
        } => cmd_template(recording, site, out, cli.config.as_ref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
