//! Experiment configuration file (TOML). Every key has a default; unknown keys are
//! rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::{Family, SweepSettings, REFERENCE_SIGMAS};
use crate::models::IdentConfig;
use crate::plantlab::{ExcitationKind, DEFAULT_DT, DEFAULT_DWELL, DEFAULT_SAMPLES, PLANT_INPUT_RANGE};

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_PLANT_SEED: u64 = 42;
pub const DEFAULT_SIGMA: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Seeds the excitation and noise streams of every command.
    pub seed: u64,
    pub plant: PlantSection,
    pub excitation: ExcitationSection,
    pub noise: NoiseSection,
    pub identify: IdentConfig,
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantSection {
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExcitationSection {
    pub kind: ExcitationKind,
    pub samples: usize,
    pub dwell: usize,
    /// Input interval; the plant's CSS range when absent.
    pub range: Option<[f64; 2]>,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub sigmas: Vec<f64>,
    pub families: Vec<Family>,
    pub repeats: usize,
    pub dispersion_max_sigma: f64,
    pub validation_samples: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            plant: PlantSection::default(),
            excitation: ExcitationSection::default(),
            noise: NoiseSection::default(),
            identify: IdentConfig::default(),
            sweep: SweepSection::default(),
        }
    }
}

impl Default for PlantSection {
    fn default() -> Self {
        Self { seed: DEFAULT_PLANT_SEED }
    }
}

impl Default for ExcitationSection {
    fn default() -> Self {
        Self {
            kind: ExcitationKind::PrbsSteps,
            samples: DEFAULT_SAMPLES,
            dwell: DEFAULT_DWELL,
            range: None,
            dt: DEFAULT_DT,
        }
    }
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self { sigma: DEFAULT_SIGMA }
    }
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            sigmas: REFERENCE_SIGMAS.to_vec(),
            families: Family::ALL.to_vec(),
            repeats: 1,
            dispersion_max_sigma: 1.0,
            validation_samples: DEFAULT_SAMPLES,
        }
    }
}

fn field_err(field: &str, message: impl std::fmt::Display) -> Error {
    Error::Config(format!("`{field}`: {message}"))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            match line {
                Some(line) => Error::Config(format!("{origin}:{line}: {}", e.message())),
                None => Error::Config(format!("{origin}: {}", e.message())),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn input_range(&self) -> (f64, f64) {
        self.excitation
            .range
            .map_or(PLANT_INPUT_RANGE, |[lo, hi]| (lo, hi))
    }

    pub fn sweep_settings(&self) -> SweepSettings {
        SweepSettings {
            seed: self.seed,
            samples: self.excitation.samples,
            validation_samples: self.sweep.validation_samples,
            dwell: self.excitation.dwell,
            excitation: self.excitation.kind,
            repeats: self.sweep.repeats,
            dispersion_max_sigma: self.sweep.dispersion_max_sigma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise.sigma >= 0.0 && self.noise.sigma.is_finite()) {
            return Err(field_err("noise.sigma", format!("must be non-negative, got {}", self.noise.sigma)));
        }
        if self.excitation.samples == 0 {
            return Err(field_err("excitation.samples", "must be at least 1"));
        }
        if self.excitation.dwell == 0 {
            return Err(field_err("excitation.dwell", "must be at least 1"));
        }
        if !(self.excitation.dt > 0.0 && self.excitation.dt.is_finite()) {
            return Err(field_err("excitation.dt", "must be positive"));
        }
        if let Some([lo, hi]) = self.excitation.range {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(field_err("excitation.range", format!("[{lo}, {hi}] is empty")));
            }
        }
        if self.sweep.sigmas.is_empty() {
            return Err(field_err("sweep.sigmas", "must not be empty"));
        }
        if let Some(s) = self.sweep.sigmas.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
            return Err(field_err("sweep.sigmas", format!("entries must be non-negative, got {s}")));
        }
        if self.sweep.families.is_empty() {
            return Err(field_err("sweep.families", "must not be empty"));
        }
        if self.sweep.repeats == 0 {
            return Err(field_err("sweep.repeats", "must be at least 1"));
        }
        if self.sweep.validation_samples == 0 {
            return Err(field_err("sweep.validation_samples", "must be at least 1"));
        }
        self.identify
            .validate()
            .map_err(|e| match e {
                Error::InvalidArgument(m) => field_err("identify", m),
                other => other,
            })
    }
}
