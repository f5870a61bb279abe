//! Versioned pipeline configuration and the shipped presets.

use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::battery::BatteryConfig;
use crate::digitizer::DEFAULT_RANGE_SIGMAS;
use crate::entropy::EntropyMode;
use crate::error::{Error, Result};
use crate::extractor::LfsrConfig;
use crate::signal::{DetectorModel, NoiseModel, SourceKind, SourceModel};

pub const SCHEMA_VERSION: u32 = 1;

/// Below this many samples the entropy stages warn.
pub const ENTROPY_SAMPLE_FLOOR: usize = 10_000;

/// Mean photons per 25 ps window shared by all presets.
pub const PRESET_MEAN_RATE: f64 = 9500.0;
/// Receiver low-pass corner shared by all presets.
pub const PRESET_BANDWIDTH_HZ: f64 = 350e6;
/// DC-block corner shared by all presets.
pub const PRESET_AC_COUPLING_HZ: f64 = 44e6;
/// High-pass corner of the thermal intensity excess in the scattered presets.
pub const PRESET_DECORRELATION_HZ: f64 = 700e6;
/// Electronic noise: a quarter of the coherent quantum variance.
pub const PRESET_ELECTRONIC_SIGMA_MV: f64 = 0.0759;
/// Calibrated to a scattered/coherent FWHM ratio of 1.675.
pub const SILVER_MODE_COUNT: f64 = 1387.0;
/// Calibrated to a scattered/coherent FWHM ratio of 4.175.
pub const ALUMINUM_MODE_COUNT: f64 = 152.0;

pub const DEFAULT_SOURCE_SEED: u64 = 1;
pub const DEFAULT_NOISE_SEED: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Coherent,
    Silver,
    Aluminum,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Coherent, Preset::Silver, Preset::Aluminum];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Coherent => "coherent",
            Preset::Silver => "silver",
            Preset::Aluminum => "aluminum",
        }
    }

    /// Scattered/coherent FWHM ratio the mode count was calibrated against.
    pub fn target_fwhm_ratio(self) -> Option<f64> {
        match self {
            Preset::Coherent => None,
            Preset::Silver => Some(0.67 / 0.40),
            Preset::Aluminum => Some(1.67 / 0.40),
        }
    }

    pub fn mode_count(self) -> Option<f64> {
        match self {
            Preset::Coherent => None,
            Preset::Silver => Some(SILVER_MODE_COUNT),
            Preset::Aluminum => Some(ALUMINUM_MODE_COUNT),
        }
    }

    pub fn source(self, seed: u64) -> SourceModel {
        match self.mode_count() {
            None => SourceModel::coherent(PRESET_MEAN_RATE, seed),
            Some(m) => SourceModel::scattered(PRESET_MEAN_RATE, m, seed)
                .with_decorrelation(PRESET_DECORRELATION_HZ),
        }
    }

    pub fn config(self) -> PipelineConfig {
        PipelineConfig {
            schema_version: SCHEMA_VERSION,
            preset: Some(self.name().to_string()),
            n_samples: 2_000_000,
            source: self.source(DEFAULT_SOURCE_SEED),
            detector: preset_detector(),
            noise: NoiseModel::new(PRESET_ELECTRONIC_SIGMA_MV, DEFAULT_NOISE_SEED),
            adc: AdcSettings::default(),
            analysis: AnalysisSettings::default(),
            entropy: EntropySettings::default(),
            extractor: ExtractorSettings::default(),
            tests: BatteryConfig::default(),
            output_dir: None,
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown preset {s:?}")))
    }
}

pub fn preset_detector() -> DetectorModel {
    DetectorModel {
        bandwidth_hz: PRESET_BANDWIDTH_HZ,
        ac_coupling_hz: PRESET_AC_COUPLING_HZ,
        ..DetectorModel::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdcSettings {
    pub n_bits: u32,
    /// Explicit full-scale range; fitted to the trace as mean ± `range_sigmas` σ when absent.
    #[serde(rename = "v_min_mV", default, skip_serializing_if = "Option::is_none")]
    pub v_min_mv: Option<f64>,
    #[serde(rename = "v_max_mV", default, skip_serializing_if = "Option::is_none")]
    pub v_max_mv: Option<f64>,
    pub range_sigmas: f64,
    /// Fixed undersample factor; derived from the autocorrelation when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub undersample_factor: Option<usize>,
}

impl Default for AdcSettings {
    fn default() -> Self {
        Self {
            n_bits: 16,
            v_min_mv: None,
            v_max_mv: None,
            range_sigmas: DEFAULT_RANGE_SIGMAS,
            undersample_factor: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSettings {
    pub max_lag: usize,
    pub n_bins: usize,
    pub psd_segment_length: usize,
    pub psd_overlap: f64,
    /// Optical power for the shot-noise reference line; omitted line when absent.
    #[serde(rename = "optical_power_W", default, skip_serializing_if = "Option::is_none")]
    pub optical_power_w: Option<f64>,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        Self {
            max_lag: 128,
            n_bins: 256,
            psd_segment_length: 4096,
            psd_overlap: 0.5,
            optical_power_w: Some(1e-3),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntropySettings {
    /// Which estimate sets the extraction rate.
    pub mode: EntropyMode,
}

impl Default for EntropySettings {
    fn default() -> Self {
        Self {
            mode: EntropyMode::ModelQuantumOnly,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractorSettings {
    pub lfsr: LfsrConfig,
    /// Input bits per whitening block; one ADC sample when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_bits: Option<usize>,
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub n_samples: usize,
    pub source: SourceModel,
    pub detector: DetectorModel,
    pub noise: NoiseModel,
    pub adc: AdcSettings,
    pub analysis: AnalysisSettings,
    pub entropy: EntropySettings,
    pub extractor: ExtractorSettings,
    pub tests: BatteryConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    /// The silver preset.
    fn default() -> Self {
        Preset::Silver.config()
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::InvalidConfig(m) => Error::InvalidConfig(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises") + "\n"
    }

    /// Replaces both seeds; the noise seed is derived so the two streams differ.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.source.seed = seed;
        self.noise.seed = seed ^ 0x9E37_79B9_7F4A_7C15;
        self
    }

    pub fn block_bits(&self) -> usize {
        self.extractor.block_bits.unwrap_or(self.adc.n_bits as usize)
    }

    pub fn is_scattered(&self) -> bool {
        self.source.kind == SourceKind::Scattered
    }

    /// Non-fatal observations about the configuration.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.n_samples < ENTROPY_SAMPLE_FLOOR {
            w.push(format!(
                "n_samples {} is below {ENTROPY_SAMPLE_FLOOR}; entropy estimates are unreliable",
                self.n_samples
            ));
        }
        w
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let invalid = |e: Error| match e {
            Error::InvalidArgument(m) => Error::InvalidConfig(m),
            other => other,
        };
        self.source.validate().map_err(invalid)?;
        self.detector.validate()?;
        self.noise.validate().map_err(invalid)?;
        if let Some(hz) = self.source.decorrelation_hz {
            if hz >= self.detector.sample_rate_hz / 2.0 {
                return Err(Error::InvalidConfig("decorrelation_hz must be below Nyquist".into()));
            }
        }
        if self.n_samples < 2 {
            return Err(Error::InvalidConfig("n_samples must be ≥ 2".into()));
        }
        let adc = &self.adc;
        if !(1..=24).contains(&adc.n_bits) {
            return Err(Error::InvalidConfig(format!("adc.n_bits must lie in [1, 24], got {}", adc.n_bits)));
        }
        match (adc.v_min_mv, adc.v_max_mv) {
            (None, None) => {}
            (Some(lo), Some(hi)) if lo.is_finite() && hi.is_finite() && lo < hi => {}
            _ => {
                return Err(Error::InvalidConfig(
                    "adc.v_min_mV and adc.v_max_mV must be given together with v_min < v_max".into(),
                ))
            }
        }
        if !(adc.range_sigmas.is_finite() && adc.range_sigmas > 0.0) {
            return Err(Error::InvalidConfig("adc.range_sigmas must be positive".into()));
        }
        if adc.undersample_factor == Some(0) {
            return Err(Error::InvalidConfig("adc.undersample_factor must be ≥ 1".into()));
        }
        let an = &self.analysis;
        if an.max_lag == 0 || 4 * an.max_lag >= self.n_samples {
            return Err(Error::InvalidConfig(format!(
                "analysis.max_lag must satisfy 1 ≤ max_lag < n_samples/4, got {}",
                an.max_lag
            )));
        }
        if an.n_bins < 2 || an.n_bins > self.n_samples {
            return Err(Error::InvalidConfig("analysis.n_bins must lie in [2, n_samples]".into()));
        }
        if !an.psd_segment_length.is_power_of_two()
            || an.psd_segment_length < 2
            || an.psd_segment_length > self.n_samples
        {
            return Err(Error::InvalidConfig(
                "analysis.psd_segment_length must be a power of two ≤ n_samples".into(),
            ));
        }
        if !(0.0..1.0).contains(&an.psd_overlap) {
            return Err(Error::InvalidConfig("analysis.psd_overlap must lie in [0, 1)".into()));
        }
        if let Some(p) = an.optical_power_w {
            if !(p.is_finite() && p > 0.0) {
                return Err(Error::InvalidConfig("analysis.optical_power_W must be positive".into()));
            }
        }
        self.extractor.lfsr.validate()?;
        if self.block_bits() == 0 {
            return Err(Error::InvalidConfig("extractor.block_bits must be ≥ 1".into()));
        }
        self.tests.validate()?;
        Ok(())
    }
}
