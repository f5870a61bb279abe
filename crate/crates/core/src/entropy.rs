//! Plug-in min-entropy of ADC codes and the extraction ratio derived from it.

use serde::{Deserialize, Serialize};

use crate::digitizer::{acquire, AdcConfig, DigitalTrace};
use crate::error::{Error, Result};
use crate::signal::{synthesize_quantum, DetectorModel, SourceModel};

/// Below this many samples the plug-in estimate carries a warning.
pub const MIN_SAMPLES_FLOOR: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntropyMode {
    /// Measured on the full signal including electronic noise.
    EmpiricalTotal,
    /// Measured on the simulated quantum-only signal.
    ModelQuantumOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub min_entropy_bits: f64,
    pub max_prob: f64,
    pub shannon_bits: f64,
    pub n_bits: u32,
    pub samples_used: usize,
    pub mode: EntropyMode,
    pub warnings: Vec<String>,
}

/// Exact per-code tallies; partial histograms merge without loss.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeHistogram {
    n_bits: u32,
    counts: Vec<u64>,
    total: u64,
}

impl CodeHistogram {
    pub fn new(n_bits: u32) -> Result<Self> {
        if !(1..=24).contains(&n_bits) {
            return Err(Error::InvalidArgument(format!("n_bits must lie in [1, 24], got {n_bits}")));
        }
        Ok(Self {
            n_bits,
            counts: vec![0; 1 << n_bits],
            total: 0,
        })
    }

    pub fn from_codes(codes: &[u32], n_bits: u32) -> Result<Self> {
        let mut h = Self::new(n_bits)?;
        for &c in codes {
            h.add(c)?;
        }
        Ok(h)
    }

    pub fn add(&mut self, code: u32) -> Result<()> {
        let slot = self.counts.get_mut(code as usize).ok_or_else(|| {
            Error::InvalidArgument(format!("code {code} exceeds {}-bit range", self.n_bits))
        })?;
        *slot += 1;
        self.total += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &CodeHistogram) -> Result<()> {
        if other.n_bits != self.n_bits {
            return Err(Error::InvalidArgument(format!(
                "cannot merge {}-bit and {}-bit histograms",
                self.n_bits, other.n_bits
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
        Ok(())
    }

    pub fn n_bits(&self) -> u32 {
        self.n_bits
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn max_prob(&self) -> f64 {
        *self.counts.iter().max().expect("non-empty") as f64 / self.total as f64
    }

    pub fn shannon_bits(&self) -> f64 {
        let n = self.total as f64;
        -self
            .counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                p * p.log2()
            })
            .sum::<f64>()
    }

    pub fn report(&self, mode: EntropyMode) -> Result<EntropyReport> {
        if self.total == 0 {
            return Err(Error::InvalidArgument("min-entropy of an empty trace".into()));
        }
        let samples_used = self.total as usize;
        let max_prob = self.max_prob();
        let mut warnings = Vec::new();
        if samples_used < MIN_SAMPLES_FLOOR {
            warnings.push(format!(
                "{samples_used} samples is below the {MIN_SAMPLES_FLOOR}-sample floor"
            ));
        }
        let recommended = 100 * (1usize << self.n_bits) / 16;
        if samples_used < recommended {
            warnings.push(format!(
                "{samples_used} samples is below the recommended {recommended} for {} bits; the plug-in estimate is biased low",
                self.n_bits
            ));
        }
        Ok(EntropyReport {
            min_entropy_bits: -max_prob.log2(),
            max_prob,
            shannon_bits: self.shannon_bits(),
            n_bits: self.n_bits,
            samples_used,
            mode,
            warnings,
        })
    }
}

/// `H∞ = -log2 max_x P̂[X = x]` over the trace's codes.
pub fn min_entropy(dt: &DigitalTrace) -> Result<EntropyReport> {
    min_entropy_with_mode(dt, EntropyMode::EmpiricalTotal)
}

pub fn min_entropy_with_mode(dt: &DigitalTrace, mode: EntropyMode) -> Result<EntropyReport> {
    if dt.is_empty() {
        return Err(Error::InvalidArgument("min-entropy of an empty trace".into()));
    }
    CodeHistogram::from_codes(dt.codes(), dt.adc().n_bits)?.report(mode)
}

/// Min-entropy of the quantum-only signal `X_q` over `n` raw samples, undersampled
/// and digitised with `adc`. Electronic noise never enters.
pub fn quantum_min_entropy(
    source: &SourceModel,
    detector: &DetectorModel,
    adc: &AdcConfig,
    n: usize,
) -> Result<EntropyReport> {
    let quantum = synthesize_quantum(source, detector, n)?;
    min_entropy_with_mode(&acquire(&quantum, adc)?, EntropyMode::ModelQuantumOnly)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractionRatio {
    pub keep_bits: u32,
    pub ratio: f64,
}

/// `keep_bits = floor(H∞)`, `ratio = keep_bits / n_bits`.
pub fn extraction_ratio(er: &EntropyReport) -> ExtractionRatio {
    // guard against -log2 landing a hair under an exact integer
    let keep_bits = ((er.min_entropy_bits + 1e-9).floor().max(0.0) as u32).min(er.n_bits);
    ExtractionRatio {
        keep_bits,
        ratio: keep_bits as f64 / er.n_bits as f64,
    }
}
