//! ADC quantisation, undersampling and code-to-bit unpacking.

use serde::{Deserialize, Serialize};

use crate::analysis::{first_nonpositive_lag, AcfReport};
use crate::bits::BitStream;
use crate::error::{Error, Result};
use crate::signal::SignalTrace;

/// Undersample factor when none is derived from the autocorrelation: 40 GS/s down to 20 GS/s.
pub const DEFAULT_UNDERSAMPLE_FACTOR: usize = 2;

/// Full-scale half-width, in total standard deviations, when the range is fitted to a trace.
pub const DEFAULT_RANGE_SIGMAS: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdcConfig {
    pub n_bits: u32,
    #[serde(rename = "v_min_mV")]
    pub v_min_mv: f64,
    #[serde(rename = "v_max_mV")]
    pub v_max_mv: f64,
    pub undersample_factor: usize,
}

impl AdcConfig {
    pub fn new(n_bits: u32, v_min_mv: f64, v_max_mv: f64, undersample_factor: usize) -> Result<Self> {
        let adc = Self {
            n_bits,
            v_min_mv,
            v_max_mv,
            undersample_factor,
        };
        adc.validate()?;
        Ok(adc)
    }

    /// Range `mean ± sigmas × σ` of `trace`.
    pub fn fitted(trace: &SignalTrace, n_bits: u32, sigmas: f64, undersample_factor: usize) -> Result<Self> {
        let sd = trace.variance().sqrt();
        if !(sd > 0.0) {
            return Err(Error::DegenerateData("cannot fit ADC range to a constant trace".into()));
        }
        if !(sigmas.is_finite() && sigmas > 0.0) {
            return Err(Error::InvalidConfig(format!("range sigmas must be positive, got {sigmas}")));
        }
        let m = trace.mean();
        Self::new(n_bits, m - sigmas * sd, m + sigmas * sd, undersample_factor)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=24).contains(&self.n_bits) {
            return Err(Error::InvalidConfig(format!("n_bits must lie in [1, 24], got {}", self.n_bits)));
        }
        if !(self.v_min_mv.is_finite() && self.v_max_mv.is_finite() && self.v_min_mv < self.v_max_mv) {
            return Err(Error::InvalidConfig(format!(
                "ADC range needs v_min < v_max, got [{}, {}]",
                self.v_min_mv, self.v_max_mv
            )));
        }
        if self.undersample_factor < 1 {
            return Err(Error::InvalidConfig("undersample_factor must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn levels(&self) -> u64 {
        1u64 << self.n_bits
    }

    pub fn max_code(&self) -> u32 {
        (self.levels() - 1) as u32
    }

    /// Width of one code in mV.
    pub fn lsb_mv(&self) -> f64 {
        (self.v_max_mv - self.v_min_mv) / self.levels() as f64
    }

    /// `floor((v - v_min) / (v_max - v_min) × 2^n)`, clamped to the code range.
    pub fn quantize(&self, v: f64) -> u32 {
        let x = (v - self.v_min_mv) / (self.v_max_mv - self.v_min_mv) * self.levels() as f64;
        if x <= 0.0 {
            0
        } else {
            (x.floor() as u64).min(self.levels() - 1) as u32
        }
    }

    /// Centre of the voltage interval mapped to `code`.
    pub fn dequantize(&self, code: u32) -> f64 {
        self.v_min_mv + (code as f64 + 0.5) * self.lsb_mv()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DigitalTrace {
    codes: Vec<u32>,
    effective_rate_hz: f64,
    adc: AdcConfig,
    /// Indices of saturated samples, ascending.
    clipped: Vec<usize>,
}

impl DigitalTrace {
    pub fn new(codes: Vec<u32>, effective_rate_hz: f64, adc: AdcConfig) -> Result<Self> {
        adc.validate()?;
        if !(effective_rate_hz.is_finite() && effective_rate_hz > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "effective rate must be positive, got {effective_rate_hz}"
            )));
        }
        if let Some(c) = codes.iter().find(|&&c| c > adc.max_code()) {
            return Err(Error::InvalidArgument(format!(
                "code {c} exceeds {}-bit range",
                adc.n_bits
            )));
        }
        Ok(Self {
            codes,
            effective_rate_hz,
            adc,
            clipped: Vec::new(),
        })
    }

    pub fn codes(&self) -> &[u32] {
        &self.codes
    }

    pub fn effective_rate_hz(&self) -> f64 {
        self.effective_rate_hz
    }

    pub fn adc(&self) -> &AdcConfig {
        &self.adc
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    /// Fraction of samples that fell outside `[v_min, v_max)` and were saturated.
    pub fn clip_fraction(&self) -> f64 {
        if self.codes.is_empty() {
            0.0
        } else {
            self.clipped.len() as f64 / self.codes.len() as f64
        }
    }
}

/// Quantises every sample of `trace`; the ADC's undersample factor is not applied here.
pub fn digitize(trace: &SignalTrace, adc: &AdcConfig) -> Result<DigitalTrace> {
    adc.validate()?;
    let mut clipped = Vec::new();
    let codes = trace
        .samples()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if v < adc.v_min_mv || v >= adc.v_max_mv {
                clipped.push(i);
            }
            adc.quantize(v)
        })
        .collect();
    Ok(DigitalTrace {
        codes,
        effective_rate_hz: trace.sample_rate_hz(),
        adc: adc.clone(),
        clipped,
    })
}

/// Undersamples by the ADC's factor, then quantises.
pub fn acquire(trace: &SignalTrace, adc: &AdcConfig) -> Result<DigitalTrace> {
    adc.validate()?;
    digitize(&trace.undersample(adc.undersample_factor)?, adc)
}

/// Keeps indices `0, k, 2k, …` and divides the rate by `k`.
pub trait Undersample: Sized {
    fn undersample(&self, k: usize) -> Result<Self>;
}

impl Undersample for SignalTrace {
    fn undersample(&self, k: usize) -> Result<Self> {
        SignalTrace::undersample(self, k)
    }
}

impl Undersample for DigitalTrace {
    fn undersample(&self, k: usize) -> Result<Self> {
        if k < 1 {
            return Err(Error::InvalidArgument("undersample factor must be ≥ 1".into()));
        }
        let codes: Vec<u32> = self.codes.iter().step_by(k).copied().collect();
        let clipped = self
            .clipped
            .iter()
            .filter(|&&i| i % k == 0)
            .map(|&i| i / k)
            .collect();
        Ok(Self {
            codes,
            effective_rate_hz: self.effective_rate_hz / k as f64,
            adc: self.adc.clone(),
            clipped,
        })
    }
}

pub fn undersample<T: Undersample>(x: &T, k: usize) -> Result<T> {
    x.undersample(k)
}

/// `k = 2 × first nonpositive lag`.
pub fn select_undersample_factor(acf: &AcfReport) -> Result<usize> {
    Ok(2 * first_nonpositive_lag(acf)?)
}

/// `n_bits` bits per code, most significant first.
pub fn to_bits(dt: &DigitalTrace) -> BitStream {
    let n = dt.adc.n_bits;
    let mut out = BitStream::with_capacity(dt.codes.len() * n as usize, format!("adc{n}"));
    for &c in &dt.codes {
        out.push_word(c as u64, n);
    }
    out
}
