//! Quality-weighted fusion of multi-site photoplethysmography (PPG) signals
//! for robust heart-rate estimation.
//!
//! The pipeline runs per body site: bandpass filter, systolic peak detection
//! with interbeat-interval gating, template-based per-beat quality scoring,
//! then cross-site alignment and quality-weighted fusion into a single output
//! signal from which heart rate is estimated. An ECG reference path
//! (Pan-Tompkins) and an ICA baseline are included for evaluation.

pub mod beats;
pub mod config;
pub mod dsp;
pub mod ecg;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod ica;
pub mod io;
pub mod pipeline;
pub mod signal;
pub mod sqi;
pub mod synth;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use signal::{AlignedSet, BeatSeries, BeatTemplate, HrSeries, QualityTrace, Signal, Site};
