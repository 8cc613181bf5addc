//! Flat `key = value` configuration files with bracketed section headers,
//! mirroring the pipeline's per-stage config types.

use crate::beats::{HrWindowConfig, IbiGateConfig, PeakDetectConfig};
use crate::dsp::BandpassSpec;
use crate::error::{Error, Result};
use crate::fusion::FusionConfig;
use crate::ica::IcaConfig;
use crate::sqi::TemplateConfig;

/// One parsed section: header name plus key/value pairs with line numbers.
#[derive(Debug, Clone)]
pub struct Section {
    pub name: String,
    pub line: usize,
    pub entries: Vec<(String, String, usize)>,
}

impl Section {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _, _)| k == key)
            .map(|(_, v, _)| v.as_str())
    }

    pub fn parse_f64(&self, key: &str, path: &str) -> Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| Error::Parse {
                path: path.to_string(),
                line: self.line_of(key),
                msg: format!("'{key}' expects a number, got '{v}'"),
            }),
        }
    }

    pub fn parse_usize(&self, key: &str, path: &str) -> Result<Option<usize>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| Error::Parse {
                path: path.to_string(),
                line: self.line_of(key),
                msg: format!("'{key}' expects a count, got '{v}'"),
            }),
        }
    }

    pub fn parse_u64(&self, key: &str, path: &str) -> Result<Option<u64>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| Error::Parse {
                path: path.to_string(),
                line: self.line_of(key),
                msg: format!("'{key}' expects an integer, got '{v}'"),
            }),
        }
    }

    pub fn parse_bool(&self, key: &str, path: &str) -> Result<Option<bool>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => match v {
                "true" | "1" | "yes" => Ok(Some(true)),
                "false" | "0" | "no" => Ok(Some(false)),
                other => Err(Error::Parse {
                    path: path.to_string(),
                    line: self.line_of(key),
                    msg: format!("'{key}' expects true/false, got '{other}'"),
                }),
            },
        }
    }

    fn line_of(&self, key: &str) -> usize {
        self.entries
            .iter()
            .find(|(k, _, _)| k == key)
            .map(|(_, _, l)| *l)
            .unwrap_or(self.line)
    }
}

/// Parses section-headed `key = value` text. Repeated section names are
/// preserved in order. Lines starting with `#` are comments.
pub fn parse_sections(text: &str, path: &str) -> Result<Vec<Section>> {
    let mut sections: Vec<Section> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or_else(|| Error::Parse {
                path: path.to_string(),
                line: line_no,
                msg: "unterminated section header".into(),
            })?;
            sections.push(Section {
                name: name.trim().to_string(),
                line: line_no,
                entries: Vec::new(),
            });
        } else {
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: path.to_string(),
                line: line_no,
                msg: format!("expected 'key = value', got '{line}'"),
            })?;
            let section = sections.last_mut().ok_or_else(|| Error::Parse {
                path: path.to_string(),
                line: line_no,
                msg: "entry before any [section] header".into(),
            })?;
            section
                .entries
                .push((key.trim().to_string(), value.trim().to_string(), line_no));
        }
    }
    Ok(sections)
}

/// All per-stage configuration with the pipeline defaults.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub bandpass: BandpassSpec,
    pub peaks: PeakDetectConfig,
    pub gate: IbiGateConfig,
    pub template: TemplateConfig,
    pub fusion: FusionConfig,
    pub hr: HrWindowConfig,
    pub ica: IcaConfig,
    /// Common sample rate fixed at ingestion.
    pub sample_rate_hz: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            bandpass: BandpassSpec::default(),
            peaks: PeakDetectConfig::default(),
            gate: IbiGateConfig::default(),
            template: TemplateConfig::default(),
            fusion: FusionConfig::default(),
            hr: HrWindowConfig::default(),
            ica: IcaConfig::default(),
            sample_rate_hz: 128.0,
        }
    }
}

impl PipelineConfig {
    pub fn parse(text: &str, path: &str) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::default();
        for s in parse_sections(text, path)? {
            match s.name.as_str() {
                "bandpass" => {
                    if let Some(v) = s.parse_f64("low_hz", path)? {
                        cfg.bandpass.low_hz = v;
                    }
                    if let Some(v) = s.parse_f64("high_hz", path)? {
                        cfg.bandpass.high_hz = v;
                    }
                    if let Some(v) = s.parse_usize("order", path)? {
                        cfg.bandpass.order = v;
                    }
                }
                "peaks" => {
                    if let Some(v) = s.parse_f64("ma_window_s", path)? {
                        cfg.peaks.ma_window_s = v;
                    }
                    if let Some(v) = s.parse_f64("opt_window_s", path)? {
                        cfg.peaks.opt_window_s = v;
                    }
                    if let Some(v) = s.parse_f64("max_hr_bpm", path)? {
                        cfg.peaks.max_hr_bpm = v;
                    }
                    if let Some(list) = s.get("offset_candidates") {
                        cfg.peaks.offset_candidates = list
                            .split(',')
                            .map(|v| v.trim().parse::<f64>())
                            .collect::<std::result::Result<_, _>>()
                            .map_err(|_| Error::Parse {
                                path: path.to_string(),
                                line: s.line,
                                msg: "offset_candidates expects comma-separated numbers".into(),
                            })?;
                    }
                }
                "gate" => {
                    if let Some(v) = s.parse_usize("run_length", path)? {
                        cfg.gate.run_length = v;
                    }
                    if let Some(v) = s.parse_f64("ratio_threshold", path)? {
                        cfg.gate.ratio_threshold = v;
                    }
                }
                "template" => {
                    if let Some(v) = s.parse_usize("n_samples", path)? {
                        cfg.template.n_samples = v;
                    }
                    if let Some(v) = s.parse_f64("triangle_gate_r", path)? {
                        cfg.template.triangle_gate_r = v;
                    }
                    if let Some(v) = s.parse_usize("target_pool", path)? {
                        cfg.template.target_pool = v;
                    }
                    if let Some(v) = s.parse_f64("rise_fraction", path)? {
                        cfg.template.rise_fraction = v;
                    }
                    if let Some(v) = s.parse_f64("min_hr", path)? {
                        cfg.template.min_hr = v;
                    }
                    if let Some(v) = s.parse_f64("max_hr", path)? {
                        cfg.template.max_hr = v;
                    }
                }
                "fusion" => {
                    if let Some(v) = s.parse_f64("align_window_ms", path)? {
                        cfg.fusion.align_window_ms = v;
                    }
                    if let Some(v) = s.parse_f64("quality_window_s", path)? {
                        cfg.fusion.quality_window_s = v;
                    }
                    if let Some(v) = s.parse_usize("power", path)? {
                        cfg.fusion.power = v as u32;
                    }
                    if let Some(v) = s.parse_f64("delta", path)? {
                        cfg.fusion.delta = v;
                    }
                    if let Some(v) = s.parse_bool("per_window_lag", path)? {
                        cfg.fusion.per_window_lag = v;
                    }
                }
                "hr" => {
                    if let Some(v) = s.parse_f64("window_len_s", path)? {
                        cfg.hr.window_len_s = v;
                    }
                    if let Some(v) = s.parse_f64("step_s", path)? {
                        cfg.hr.step_s = v;
                    }
                    if let Some(v) = s.parse_usize("min_ibis", path)? {
                        cfg.hr.min_ibis = v;
                    }
                }
                "ica" => {
                    if let Some(v) = s.parse_f64("chunk_s", path)? {
                        cfg.ica.chunk_s = v;
                    }
                    if let Some(v) = s.parse_u64("seed", path)? {
                        cfg.ica.seed = v;
                    }
                    if let Some(v) = s.parse_usize("max_iter", path)? {
                        cfg.ica.max_iter = v;
                    }
                    if let Some(v) = s.parse_f64("tolerance", path)? {
                        cfg.ica.tolerance = v;
                    }
                }
                "ingest" => {
                    if let Some(v) = s.parse_f64("sample_rate_hz", path)? {
                        cfg.sample_rate_hz = v;
                    }
                }
                other => {
                    return Err(Error::Parse {
                        path: path.to_string(),
                        line: s.line,
                        msg: format!("unknown section '[{other}]'"),
                    })
                }
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path)?;
        PipelineConfig::parse(&text, &path.display().to_string())
    }
}
