//! Five frequency/correlation tests for bit streams.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_ur;

use crate::analysis::{autocorrelation_of, AcfReport};
use crate::bits::BitStream;
use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 0.01;

/// Production length floor; [`Mode::Testing`] lifts it.
pub const MIN_BITS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Production,
    /// Accepts inputs shorter than the production floor.
    Testing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRecord {
    pub name: String,
    pub statistic: f64,
    pub p_value: f64,
    pub pass: bool,
    /// `false` when a precondition gate failed; such records are neither passes nor failures.
    pub applicable: bool,
}

impl TestRecord {
    fn new(name: &str, statistic: f64, p_value: f64, alpha: f64) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        Self {
            name: name.into(),
            statistic,
            p_value,
            pass: p_value >= alpha,
            applicable: true,
        }
    }

    fn not_applicable(name: &str, statistic: f64) -> Self {
        Self {
            name: name.into(),
            statistic,
            p_value: 0.0,
            pass: false,
            applicable: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub alpha: f64,
    pub bit_length: usize,
    pub records: Vec<TestRecord>,
}

impl TestReport {
    /// True when every applicable test passed.
    pub fn all_passed(&self) -> bool {
        self.records.iter().all(|r| r.pass || !r.applicable)
    }

    pub fn failures(&self) -> impl Iterator<Item = &TestRecord> {
        self.records.iter().filter(|r| r.applicable && !r.pass)
    }

    pub fn record(&self, name: &str) -> Option<&TestRecord> {
        self.records.iter().find(|r| r.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatteryConfig {
    pub alpha: f64,
    /// Block length for the block-frequency test; chosen from the stream length when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_len: Option<usize>,
    /// Lags analysed by the bit autocorrelation.
    pub max_lag: usize,
    #[serde(default)]
    pub mode: Mode,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            block_len: None,
            max_lag: 16,
            mode: Mode::Production,
        }
    }
}

impl BatteryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.block_len == Some(0) || self.max_lag == 0 {
            return Err(Error::InvalidConfig("block_len and max_lag must be ≥ 1".into()));
        }
        Ok(())
    }
}

fn check_length(bits: &BitStream, mode: Mode, what: &'static str, testing_min: usize) -> Result<usize> {
    let needed = match mode {
        Mode::Production => MIN_BITS.max(testing_min),
        Mode::Testing => testing_min,
    };
    if bits.len() < needed {
        return Err(Error::InsufficientData {
            what,
            needed,
            got: bits.len(),
        });
    }
    Ok(bits.len())
}

/// `s_obs = |#1 - #0| / √n`, `p = erfc(s_obs / √2)`.
pub fn monobit(bits: &BitStream, mode: Mode) -> Result<f64> {
    Ok(monobit_record(bits, mode, DEFAULT_ALPHA)?.p_value)
}

fn monobit_record(bits: &BitStream, mode: Mode, alpha: f64) -> Result<TestRecord> {
    let n = check_length(bits, mode, "monobit bits", 1)?;
    let ones = bits.count_ones() as f64;
    let s_obs = (2.0 * ones - n as f64).abs() / (n as f64).sqrt();
    Ok(TestRecord::new("monobit", s_obs, erfc(s_obs / std::f64::consts::SQRT_2), alpha))
}

/// Total-runs test gated on `|π - ½| < 2/√n`; a closed gate yields `None`.
pub fn runs_test(bits: &BitStream, mode: Mode) -> Result<Option<f64>> {
    let r = runs_record(bits, mode, DEFAULT_ALPHA)?;
    Ok(r.applicable.then_some(r.p_value))
}

fn runs_record(bits: &BitStream, mode: Mode, alpha: f64) -> Result<TestRecord> {
    let n = check_length(bits, mode, "runs bits", 2)?;
    let nf = n as f64;
    let pi = bits.count_ones() as f64 / nf;
    if (pi - 0.5).abs() >= 2.0 / nf.sqrt() {
        return Ok(TestRecord::not_applicable("runs", pi));
    }
    let mut prev = None;
    let mut v = 0u64;
    for b in bits.iter() {
        if prev != Some(b) {
            v += 1;
        }
        prev = Some(b);
    }
    let v = v as f64;
    let q = pi * (1.0 - pi);
    let p = erfc((v - 2.0 * nf * q).abs() / (2.0 * (2.0 * nf).sqrt() * q));
    Ok(TestRecord::new("runs", v, p, alpha))
}

/// Block length used when none is configured: keeps the block count below 100
/// and each block at least 20 bits.
pub fn auto_block_len(n: usize) -> usize {
    (n / 99 + 1).max(20)
}

/// χ² over per-block ones fractions, `p = Q(N/2, χ²/2)`.
pub fn block_frequency(bits: &BitStream, block_len: usize, mode: Mode) -> Result<f64> {
    Ok(block_frequency_record(bits, block_len, mode, DEFAULT_ALPHA)?.p_value)
}

fn block_frequency_record(bits: &BitStream, block_len: usize, mode: Mode, alpha: f64) -> Result<TestRecord> {
    if block_len == 0 {
        return Err(Error::InvalidArgument("block_len must be ≥ 1".into()));
    }
    let n = check_length(bits, mode, "block-frequency bits", block_len)?;
    let blocks = n / block_len;
    let bools = bits.to_bools();
    let chi2 = 4.0
        * block_len as f64
        * bools
            .chunks_exact(block_len)
            .map(|c| {
                let pi = c.iter().filter(|&&b| b).count() as f64 / block_len as f64;
                (pi - 0.5) * (pi - 0.5)
            })
            .sum::<f64>();
    Ok(TestRecord::new(
        "block_frequency",
        chi2,
        gamma_ur(blocks as f64 / 2.0, chi2 / 2.0),
        alpha,
    ))
}

/// χ² uniformity of non-overlapping 2-bit patterns, 3 degrees of freedom.
pub fn serial2(bits: &BitStream, mode: Mode) -> Result<f64> {
    Ok(serial2_record(bits, mode, DEFAULT_ALPHA)?.p_value)
}

fn serial2_record(bits: &BitStream, mode: Mode, alpha: f64) -> Result<TestRecord> {
    check_length(bits, mode, "serial bits", 8)?;
    let bools = bits.to_bools();
    let mut counts = [0u64; 4];
    for pair in bools.chunks_exact(2) {
        counts[(pair[0] as usize) << 1 | pair[1] as usize] += 1;
    }
    let expected = (bools.len() / 2) as f64 / 4.0;
    let chi2 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum::<f64>();
    Ok(TestRecord::new("serial2", chi2, gamma_ur(1.5, chi2 / 2.0), alpha))
}

/// Autocorrelation of the bits mapped to ±1.
pub fn bit_acf(bits: &BitStream, max_lag: usize) -> Result<AcfReport> {
    let xs: Vec<f64> = bits.iter().map(|b| if b { 1.0 } else { -1.0 }).collect();
    autocorrelation_of(&xs, max_lag)
}

/// Lag-1 correlation test: `z = r(1)√n`, `p = erfc(|z|/√2)`.
fn bit_acf_record(bits: &BitStream, max_lag: usize, mode: Mode, alpha: f64) -> Result<TestRecord> {
    let n = check_length(bits, mode, "bit-autocorrelation bits", 4 * max_lag + 1)?;
    let acf = match bit_acf(bits, max_lag) {
        Ok(acf) => acf,
        // a constant stream is maximally correlated
        Err(Error::DegenerateData(_)) => return Ok(TestRecord::new("bit_acf", f64::INFINITY, 0.0, alpha)),
        Err(e) => return Err(e),
    };
    let z = acf.coefficients[1] * (n as f64).sqrt();
    Ok(TestRecord::new("bit_acf", z, erfc(z.abs() / std::f64::consts::SQRT_2), alpha))
}

pub fn run_battery(bits: &BitStream, cfg: &BatteryConfig) -> Result<TestReport> {
    cfg.validate()?;
    let (alpha, mode) = (cfg.alpha, cfg.mode);
    let block_len = cfg.block_len.unwrap_or_else(|| auto_block_len(bits.len()));
    let records = vec![
        monobit_record(bits, mode, alpha)?,
        runs_record(bits, mode, alpha)?,
        block_frequency_record(bits, block_len, mode, alpha)?,
        serial2_record(bits, mode, alpha)?,
        bit_acf_record(bits, cfg.max_lag, mode, alpha)?,
    ];
    Ok(TestReport {
        alpha,
        bit_length: bits.len(),
        records,
    })
}
