//! End-to-end chain: simulate → analyse → undersample → digitise → min-entropy
//! → extraction ratio → whiten → test, plus the file-writing commands.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{
    autocorrelation, histogram, psd_welch, shot_noise_density_dbm_per_hz, shot_noise_power, AcfReport,
    HistogramReport, PsdReport, ShotNoiseParams, ShotNoisePower,
};
use crate::battery::{run_battery, TestReport};
use crate::bits::BitStream;
use crate::config::PipelineConfig;
use crate::digitizer::{digitize, select_undersample_factor, to_bits, AdcConfig};
use crate::entropy::{extraction_ratio, min_entropy_with_mode, EntropyMode, EntropyReport, ExtractionRatio};
use crate::error::{Error, Result};
use crate::extractor::{lfsr_whiten, Whitened};
use crate::io::{
    acf_csv_bytes, atomic_write, histogram_csv_bytes, psd_csv_bytes, sha256_hex, sidecar_path,
    to_json_bytes, trace_csv_bytes, BitFileMeta, TraceMeta,
};
use crate::signal::{synthesize, variance_decomposition, SignalTrace, VarianceDecomposition};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const BITS_FILE: &str = "bits.bin";

/// Optional plot outputs of the analysis stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    Hist,
    Acf,
    Psd,
}

impl Analysis {
    pub const ALL: [Analysis; 3] = [Analysis::Hist, Analysis::Acf, Analysis::Psd];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotNoiseLine {
    pub params: ShotNoiseParams,
    pub power: ShotNoisePower,
    #[serde(rename = "density_dBm_per_Hz")]
    pub density_dbm_per_hz: f64,
}

impl ShotNoiseLine {
    pub fn new(params: ShotNoiseParams) -> Self {
        Self {
            power: shot_noise_power(&params),
            density_dbm_per_hz: shot_noise_density_dbm_per_hz(&params),
            params,
        }
    }
}

/// Scalar results of analysing one trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub label: String,
    pub n_samples: usize,
    pub sample_rate_hz: f64,
    #[serde(rename = "mean_mV")]
    pub mean_mv: f64,
    #[serde(rename = "variance_mV2")]
    pub variance_mv2: f64,
    #[serde(rename = "fwhm_mV", skip_serializing_if = "Option::is_none")]
    pub fwhm_mv: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode_bin_prob: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_nonpositive_lag: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_lag: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psd_segments: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shot_noise: Option<ShotNoiseLine>,
}

#[derive(Debug, Clone)]
pub struct AnalysisOutput {
    pub summary: AnalysisSummary,
    pub histogram: Option<HistogramReport>,
    pub acf: Option<AcfReport>,
    pub psd: Option<PsdReport>,
}

/// Histogram/FWHM, ACF and PSD as requested; a degenerate trace is an error.
pub fn analyze_trace(
    trace: &SignalTrace,
    which: &[Analysis],
    settings: &crate::config::AnalysisSettings,
    shot_noise: Option<ShotNoiseParams>,
) -> Result<AnalysisOutput> {
    let histogram = if which.contains(&Analysis::Hist) {
        let h = histogram(trace, settings.n_bins)?;
        if h.fwhm_mv.is_none() {
            crate::analysis::fwhm(&h)?;
        }
        Some(h)
    } else {
        None
    };
    let acf = which
        .contains(&Analysis::Acf)
        .then(|| autocorrelation(trace, settings.max_lag))
        .transpose()?;
    let shot = shot_noise.map(ShotNoiseLine::new);
    let psd = which
        .contains(&Analysis::Psd)
        .then(|| -> Result<PsdReport> {
            let mut p = psd_welch(trace, settings.psd_segment_length, settings.psd_overlap)?;
            p.shot_noise_line_dbm = shot.as_ref().map(|s| s.density_dbm_per_hz);
            Ok(p)
        })
        .transpose()?;
    let summary = AnalysisSummary {
        label: trace.label.clone(),
        n_samples: trace.len(),
        sample_rate_hz: trace.sample_rate_hz(),
        mean_mv: trace.mean(),
        variance_mv2: trace.variance(),
        fwhm_mv: histogram.as_ref().and_then(|h| h.fwhm_mv),
        mode_bin_prob: histogram.as_ref().map(|h| h.mode_bin_prob),
        first_nonpositive_lag: acf.as_ref().and_then(|a| a.first_nonpositive_lag),
        max_lag: acf.as_ref().map(|a| a.max_lag()),
        psd_segments: psd.as_ref().map(|p| p.segments),
        shot_noise: shot,
    };
    Ok(AnalysisOutput {
        summary,
        histogram,
        acf,
        psd,
    })
}

/// Shot-noise parameters implied by the configured optical power and detector.
pub fn config_shot_noise(cfg: &PipelineConfig) -> Result<Option<ShotNoiseParams>> {
    cfg.analysis
        .optical_power_w
        .map(|p| {
            ShotNoiseParams::from_optical_power(
                p,
                cfg.detector.responsivity_a_per_w,
                cfg.detector.load_resistance_ohm,
                cfg.detector.bandwidth_hz,
            )
        })
        .transpose()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub analysis: AnalysisSummary,
    #[serde(rename = "coherent_fwhm_mV", skip_serializing_if = "Option::is_none")]
    pub coherent_fwhm_mv: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fwhm_ratio: Option<f64>,
    pub variance: VarianceDecomposition,
    pub undersample_factor: usize,
    pub undersample_from_acf: bool,
    pub effective_rate_hz: f64,
    pub adc: AdcConfig,
    pub clip_fraction: f64,
    pub entropy_total: EntropyReport,
    pub entropy_quantum: EntropyReport,
    pub entropy_mode: EntropyMode,
    pub extraction: ExtractionRatio,
    pub raw_bits: usize,
    pub whitened_bits: usize,
    pub blocks: usize,
    pub block_bits: usize,
    pub discarded_bits: usize,
    pub bit_rate_hz: f64,
    pub tests_passed: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub summary: PipelineSummary,
    pub histogram: HistogramReport,
    pub acf: AcfReport,
    pub psd: PsdReport,
    pub raw_bits: BitStream,
    pub whitened: Whitened,
    pub tests: TestReport,
}

/// Runs every stage in memory; errors carry the failing stage's name.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    cfg.validate().map_err(|e| e.in_stage("config"))?;
    let mut warnings = cfg.warnings();

    let pair = synthesize(&cfg.source, &cfg.detector, &cfg.noise, cfg.n_samples)
        .map_err(|e| e.in_stage("simulate"))?;
    let variance = variance_decomposition(&pair.quantum, &pair.total).map_err(|e| e.in_stage("simulate"))?;
    let coherent_fwhm_mv = if cfg.is_scattered() {
        let coherent = synthesize(&cfg.source.coherent_baseline(), &cfg.detector, &cfg.noise, cfg.n_samples)
            .map_err(|e| e.in_stage("simulate"))?;
        let h = histogram(&coherent.total, cfg.analysis.n_bins).map_err(|e| e.in_stage("analyze"))?;
        Some(crate::analysis::fwhm(&h).map_err(|e| e.in_stage("analyze"))?)
    } else {
        None
    };

    let analysis = analyze_trace(&pair.total, &Analysis::ALL, &cfg.analysis, config_shot_noise(cfg).map_err(|e| e.in_stage("analyze"))?)
        .map_err(|e| e.in_stage("analyze"))?;
    let (histogram, acf, psd) = (
        analysis.histogram.expect("requested"),
        analysis.acf.expect("requested"),
        analysis.psd.expect("requested"),
    );
    let fwhm_ratio = coherent_fwhm_mv.and_then(|c| histogram.fwhm_mv.map(|f| f / c));

    let (undersample_factor, undersample_from_acf) = match cfg.adc.undersample_factor {
        Some(k) => (k, false),
        None => (select_undersample_factor(&acf).map_err(|e| e.in_stage("undersample"))?, true),
    };
    let adc = match (cfg.adc.v_min_mv, cfg.adc.v_max_mv) {
        (Some(lo), Some(hi)) => AdcConfig::new(cfg.adc.n_bits, lo, hi, undersample_factor),
        _ => AdcConfig::fitted(&pair.total, cfg.adc.n_bits, cfg.adc.range_sigmas, undersample_factor),
    }
    .map_err(|e| e.in_stage("digitize"))?;
    let total_us = pair.total.undersample(undersample_factor).map_err(|e| e.in_stage("undersample"))?;
    let quantum_us = pair.quantum.undersample(undersample_factor).map_err(|e| e.in_stage("undersample"))?;
    let digital = digitize(&total_us, &adc).map_err(|e| e.in_stage("digitize"))?;
    let digital_quantum = digitize(&quantum_us, &adc).map_err(|e| e.in_stage("digitize"))?;
    if digital.clip_fraction() > 1e-3 {
        warnings.push(format!("clip fraction {:.3e} exceeds 1e-3", digital.clip_fraction()));
    }

    let entropy_total =
        min_entropy_with_mode(&digital, EntropyMode::EmpiricalTotal).map_err(|e| e.in_stage("min_entropy"))?;
    let entropy_quantum = min_entropy_with_mode(&digital_quantum, EntropyMode::ModelQuantumOnly)
        .map_err(|e| e.in_stage("min_entropy"))?;
    let chosen = match cfg.entropy.mode {
        EntropyMode::EmpiricalTotal => &entropy_total,
        EntropyMode::ModelQuantumOnly => &entropy_quantum,
    };
    let extraction = extraction_ratio(chosen);
    if extraction.keep_bits == 0 {
        return Err(Error::ZeroEntropy.in_stage("extraction_ratio"));
    }

    let raw_bits = to_bits(&digital);
    let block_bits = cfg.block_bits();
    let whitened = lfsr_whiten(&raw_bits, &cfg.extractor.lfsr, extraction.keep_bits as usize, block_bits)
        .map_err(|e| e.in_stage("whiten"))?;
    let tests = run_battery(&whitened.bits, &cfg.tests).map_err(|e| e.in_stage("test"))?;

    let effective_rate_hz = digital.effective_rate_hz();
    let bit_rate_hz = effective_rate_hz * adc.n_bits as f64 / block_bits as f64 * whitened.keep_bits as f64;
    let summary = PipelineSummary {
        analysis: analysis.summary,
        coherent_fwhm_mv,
        fwhm_ratio,
        variance,
        undersample_factor,
        undersample_from_acf,
        effective_rate_hz,
        clip_fraction: digital.clip_fraction(),
        adc,
        entropy_total,
        entropy_quantum,
        entropy_mode: cfg.entropy.mode,
        extraction,
        raw_bits: raw_bits.len(),
        whitened_bits: whitened.bits.len(),
        blocks: whitened.blocks,
        block_bits,
        discarded_bits: whitened.discarded_bits,
        bit_rate_hz,
        tests_passed: tests.all_passed(),
        warnings,
    };
    Ok(PipelineOutcome {
        summary,
        histogram,
        acf,
        psd,
        raw_bits,
        whitened,
        tests,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub config: PipelineConfig,
    pub summary: PipelineSummary,
    pub artifacts: Vec<Artifact>,
}

/// Writes `files` under `out`, removing any already written if one fails.
fn write_bundle(out: &Path, files: &[(String, Vec<u8>)]) -> Result<Vec<PathBuf>> {
    let mut written = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        let path = out.join(name);
        if let Err(e) = atomic_write(&path, bytes) {
            for p in &written {
                let _ = std::fs::remove_file(p);
            }
            return Err(e);
        }
        written.push(path);
    }
    Ok(written)
}

fn artifact(name: &str, bytes: &[u8]) -> Artifact {
    Artifact {
        path: name.to_string(),
        sha256: sha256_hex(bytes),
        bytes: bytes.len(),
    }
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub outcome: PipelineOutcome,
    pub manifest: Manifest,
    pub files: Vec<PathBuf>,
}

/// Runs the pipeline and writes the bit file, reports, plot data and manifest to `out`.
///
/// Nothing is written unless every stage succeeds; the manifest is written last.
pub fn cmd_pipeline(cfg: &PipelineConfig, out: &Path) -> Result<PipelineRun> {
    let outcome = run_pipeline(cfg)?;
    let bits_meta = BitFileMeta {
        adc_config: Some(outcome.summary.adc.clone()),
        lfsr: Some(cfg.extractor.lfsr.clone()),
        keep_bits: Some(outcome.whitened.keep_bits),
        block_bits: Some(outcome.whitened.block_bits),
        discarded_bits: Some(outcome.whitened.discarded_bits),
        ..BitFileMeta::for_bits(&outcome.whitened.bits)
    };
    let raw_meta = BitFileMeta {
        adc_config: Some(outcome.summary.adc.clone()),
        ..BitFileMeta::for_bits(&outcome.raw_bits)
    };
    let entropy = serde_json::json!({
        "empirical_total": outcome.summary.entropy_total,
        "model_quantum_only": outcome.summary.entropy_quantum,
        "used": outcome.summary.entropy_mode,
        "extraction": outcome.summary.extraction,
    });
    let files: Vec<(String, Vec<u8>)> = vec![
        (BITS_FILE.into(), outcome.whitened.bits.bytes().to_vec()),
        ("bits.json".into(), to_json_bytes(&bits_meta)),
        ("raw_bits.bin".into(), outcome.raw_bits.bytes().to_vec()),
        ("raw_bits.json".into(), to_json_bytes(&raw_meta)),
        ("histogram.csv".into(), histogram_csv_bytes(&outcome.histogram)),
        ("acf.csv".into(), acf_csv_bytes(&outcome.acf)),
        ("psd.csv".into(), psd_csv_bytes(&outcome.psd)),
        ("entropy.json".into(), to_json_bytes(&entropy)),
        ("tests.json".into(), to_json_bytes(&outcome.tests)),
        ("summary.json".into(), to_json_bytes(&outcome.summary)),
    ];
    let manifest = Manifest {
        schema_version: crate::config::SCHEMA_VERSION,
        config: cfg.clone(),
        summary: outcome.summary.clone(),
        artifacts: files.iter().map(|(n, b)| artifact(n, b)).collect(),
    };
    let mut all = files;
    all.push((MANIFEST_FILE.into(), to_json_bytes(&manifest)));
    let files = write_bundle(out, &all)?;
    Ok(PipelineRun {
        outcome,
        manifest,
        files,
    })
}

/// Writes the coherent trace and, for a scattered source, the scattered trace.
pub fn cmd_simulate(cfg: &PipelineConfig, out: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let mut sources = vec![("coherent", if cfg.is_scattered() { cfg.source.coherent_baseline() } else { cfg.source.clone() })];
    if cfg.is_scattered() {
        sources.push(("scattered", cfg.source.clone()));
    }
    let mut files = Vec::new();
    for (name, source) in sources {
        let mut pair = synthesize(&source, &cfg.detector, &cfg.noise, cfg.n_samples)?;
        pair.total.label = name.to_string();
        let meta = TraceMeta {
            source: Some(source),
            detector: Some(cfg.detector.clone()),
            noise: Some(cfg.noise.clone()),
            ..TraceMeta::bare(&pair.total)
        };
        let csv = format!("{name}.csv");
        files.push((csv.clone(), trace_csv_bytes(&pair.total)));
        files.push((
            sidecar_path(Path::new(&csv)).display().to_string(),
            to_json_bytes(&meta),
        ));
    }
    write_bundle(out, &files)
}

/// Writes the requested plot CSVs and `analysis.json` for `trace`.
pub fn cmd_analyze(
    trace: &SignalTrace,
    which: &[Analysis],
    settings: &crate::config::AnalysisSettings,
    shot_noise: Option<ShotNoiseParams>,
    out: &Path,
) -> Result<(AnalysisSummary, Vec<PathBuf>)> {
    let a = analyze_trace(trace, which, settings, shot_noise)?;
    let mut files = Vec::new();
    if let Some(h) = &a.histogram {
        files.push(("histogram.csv".to_string(), histogram_csv_bytes(h)));
    }
    if let Some(acf) = &a.acf {
        files.push(("acf.csv".to_string(), acf_csv_bytes(acf)));
    }
    if let Some(psd) = &a.psd {
        files.push(("psd.csv".to_string(), psd_csv_bytes(psd)));
    }
    files.push(("analysis.json".to_string(), to_json_bytes(&a.summary)));
    let written = write_bundle(out, &files)?;
    Ok((a.summary, written))
}
