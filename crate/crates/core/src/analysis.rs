//! Histogram/FWHM, autocorrelation, Welch PSD, Fano factor and the shot-noise level.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::SignalTrace;

/// Magnitude of the electron charge in coulombs.
pub const ELECTRON_CHARGE_C: f64 = 1.602_176_634e-19;

/// Reference load for dBm conversions of voltage spectra.
pub const REFERENCE_LOAD_OHM: f64 = 50.0;

/// Width of the moving average applied to histograms before the FWHM search.
pub const FWHM_SMOOTHING_BINS: usize = 3;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (`n - 1` denominator).
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramReport {
    #[serde(rename = "bin_edges_mV")]
    pub bin_edges_mv: Vec<f64>,
    pub counts: Vec<u64>,
    pub total_n: u64,
    #[serde(rename = "fwhm_mV")]
    pub fwhm_mv: Option<f64>,
    pub mode_bin_prob: f64,
    pub smoothing_bins: usize,
}

impl HistogramReport {
    pub fn bin_width(&self) -> f64 {
        self.bin_edges_mv[1] - self.bin_edges_mv[0]
    }

    pub fn bin_centers(&self) -> Vec<f64> {
        self.bin_edges_mv
            .windows(2)
            .map(|w| 0.5 * (w[0] + w[1]))
            .collect()
    }
}

/// Equal-width histogram spanning `[min, max]` of the trace.
pub fn histogram(trace: &SignalTrace, n_bins: usize) -> Result<HistogramReport> {
    if n_bins < 2 {
        return Err(Error::InvalidArgument(format!("n_bins must be ≥ 2, got {n_bins}")));
    }
    let xs = trace.samples();
    if xs.len() < n_bins {
        return Err(Error::InsufficientData {
            what: "histogram samples",
            needed: n_bins,
            got: xs.len(),
        });
    }
    let (lo, hi) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if hi <= lo {
        return Err(Error::DegenerateData(format!("constant trace at {lo} mV")));
    }
    let width = (hi - lo) / n_bins as f64;
    let mut counts = vec![0u64; n_bins];
    for &x in xs {
        let i = (((x - lo) / width) as usize).min(n_bins - 1);
        counts[i] += 1;
    }
    let bin_edges_mv = (0..=n_bins).map(|i| lo + i as f64 * width).collect();
    let total_n = xs.len() as u64;
    let mode_bin_prob = *counts.iter().max().expect("n_bins ≥ 2") as f64 / total_n as f64;
    let mut report = HistogramReport {
        bin_edges_mv,
        counts,
        total_n,
        fwhm_mv: None,
        mode_bin_prob,
        smoothing_bins: FWHM_SMOOTHING_BINS,
    };
    report.fwhm_mv = fwhm(&report).ok();
    Ok(report)
}

/// Centred moving average; edge bins average over the neighbours that exist.
fn smooth(counts: &[u64], width: usize) -> Vec<f64> {
    let half = width / 2;
    (0..counts.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(counts.len() - 1);
            counts[lo..=hi].iter().sum::<u64>() as f64 / (hi - lo + 1) as f64
        })
        .collect()
}

/// Full width at half maximum of the smoothed histogram.
///
/// The outermost bins at or above half the peak are located and the crossing is
/// interpolated linearly against the neighbouring bin centre outside them. The
/// density is zero beyond the data range, so a flat-topped histogram yields the
/// full data width.
pub fn fwhm(h: &HistogramReport) -> Result<f64> {
    let n = h.counts.len();
    if n < 2 || h.bin_edges_mv.len() != n + 1 {
        return Err(Error::FwhmUndefined("malformed histogram".into()));
    }
    let s = smooth(&h.counts, h.smoothing_bins.max(1));
    let peak = s.iter().cloned().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Err(Error::FwhmUndefined("empty histogram".into()));
    }
    let half = 0.5 * peak;
    let width = h.bin_width();
    let centre = |i: isize| h.bin_edges_mv[0] + (i as f64 + 0.5) * width;
    let at = |i: isize| {
        if i < 0 || i >= n as isize {
            0.0
        } else {
            s[i as usize]
        }
    };

    let left = s.iter().position(|&v| v >= half).expect("peak exists") as isize;
    let right = s.iter().rposition(|&v| v >= half).expect("peak exists") as isize;
    let cross = |inside: isize, outside: isize| {
        let (a, b) = (at(outside), at(inside));
        let frac = (half - a) / (b - a);
        centre(outside) + frac * (centre(inside) - centre(outside))
    };
    let x_left = cross(left, left - 1);
    let x_right = cross(right, right + 1);
    let w = x_right - x_left;
    if !(w.is_finite() && w > 0.0) {
        return Err(Error::FwhmUndefined(format!("non-positive width {w}")));
    }
    Ok(w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcfReport {
    /// `r(0..=max_lag)`, with `r(0) = 1`.
    pub coefficients: Vec<f64>,
    pub first_nonpositive_lag: Option<usize>,
    pub n_samples: usize,
}

impl AcfReport {
    pub fn max_lag(&self) -> usize {
        self.coefficients.len() - 1
    }

    /// Smallest `k ≥ 1` with `r(k) ≤ 0`.
    pub fn first_nonpositive(coefficients: &[f64]) -> Option<usize> {
        coefficients
            .iter()
            .enumerate()
            .skip(1)
            .find(|(_, &r)| r <= 0.0)
            .map(|(k, _)| k)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let tail: f64 = a[4 * chunks..]
        .iter()
        .zip(&b[4 * chunks..])
        .map(|(x, y)| x * y)
        .sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Biased normalised autocorrelation of raw samples.
pub fn autocorrelation_of(xs: &[f64], max_lag: usize) -> Result<AcfReport> {
    let n = xs.len();
    if max_lag == 0 || 4 * max_lag >= n {
        return Err(Error::InvalidArgument(format!(
            "max_lag must satisfy 1 ≤ max_lag < n/4 (n = {n}, max_lag = {max_lag})"
        )));
    }
    let m = mean(xs);
    let centred: Vec<f64> = xs.iter().map(|x| x - m).collect();
    let c0 = dot(&centred, &centred);
    if !(c0 > 0.0) {
        return Err(Error::DegenerateData("zero-variance series".into()));
    }
    let mut coefficients = Vec::with_capacity(max_lag + 1);
    coefficients.push(1.0);
    for k in 1..=max_lag {
        coefficients.push(dot(&centred[..n - k], &centred[k..]) / c0);
    }
    let first_nonpositive_lag = AcfReport::first_nonpositive(&coefficients);
    Ok(AcfReport {
        coefficients,
        first_nonpositive_lag,
        n_samples: n,
    })
}

/// `r(k) = Σ (x_i - x̄)(x_{i+k} - x̄) / Σ (x_i - x̄)²` for `k = 0..=max_lag`.
pub fn autocorrelation(trace: &SignalTrace, max_lag: usize) -> Result<AcfReport> {
    autocorrelation_of(trace.samples(), max_lag)
}

pub fn first_nonpositive_lag(acf: &AcfReport) -> Result<usize> {
    acf.first_nonpositive_lag
        .or_else(|| AcfReport::first_nonpositive(&acf.coefficients))
        .ok_or(Error::NoDecorrelation {
            max_lag: acf.max_lag(),
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdReport {
    pub frequencies_hz: Vec<f64>,
    #[serde(rename = "power_dBm_per_Hz")]
    pub power_dbm_per_hz: Vec<f64>,
    pub segment_length: usize,
    pub overlap_fraction: f64,
    pub segments: usize,
    pub load_ohm: f64,
    #[serde(rename = "shot_noise_line_dBm", skip_serializing_if = "Option::is_none", default)]
    pub shot_noise_line_dbm: Option<f64>,
}

impl PsdReport {
    /// One-sided voltage spectral density in mV²/Hz.
    pub fn power_mv2_per_hz(&self) -> Vec<f64> {
        self.power_dbm_per_hz
            .iter()
            .map(|dbm| 10f64.powf(dbm / 10.0) * 1e-3 * self.load_ohm * 1e6)
            .collect()
    }

    /// `Σ PSD · Δf` in mV², which equals the variance for a correctly scaled estimate.
    pub fn integrated_power_mv2(&self) -> f64 {
        let df = if self.frequencies_hz.len() > 1 {
            self.frequencies_hz[1] - self.frequencies_hz[0]
        } else {
            0.0
        };
        self.power_mv2_per_hz().iter().sum::<f64>() * df
    }
}

fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| {
            let s = (std::f64::consts::PI * i as f64 / len as f64).sin();
            s * s
        })
        .collect()
}

/// Welch estimate: Hann-windowed, mean-removed, overlapped segments; one-sided
/// density referenced to a 50 Ω load in dBm/Hz.
pub fn psd_welch(
    trace: &SignalTrace,
    segment_length: usize,
    overlap_fraction: f64,
) -> Result<PsdReport> {
    if segment_length < 2 || !segment_length.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "segment_length must be a power of two ≥ 2, got {segment_length}"
        )));
    }
    if !(0.0..1.0).contains(&overlap_fraction) {
        return Err(Error::InvalidArgument(format!(
            "overlap_fraction must lie in [0, 1), got {overlap_fraction}"
        )));
    }
    let xs = trace.samples();
    if segment_length > xs.len() {
        return Err(Error::InvalidArgument(format!(
            "segment_length {segment_length} exceeds trace length {}",
            xs.len()
        )));
    }
    let fs = trace.sample_rate_hz();
    let step = ((segment_length as f64 * (1.0 - overlap_fraction)).round() as usize).max(1);
    let window = hann(segment_length);
    let window_power: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(segment_length);

    let bins = segment_length / 2 + 1;
    let mut accum = vec![0.0f64; bins];
    let mut buffer = vec![Complex::new(0.0, 0.0); segment_length];
    let mut segments = 0usize;
    let mut start = 0usize;
    while start + segment_length <= xs.len() {
        let seg = &xs[start..start + segment_length];
        let m = mean(seg);
        for ((b, &x), &w) in buffer.iter_mut().zip(seg).zip(&window) {
            *b = Complex::new((x - m) * w, 0.0);
        }
        fft.process(&mut buffer);
        for (a, b) in accum.iter_mut().zip(&buffer) {
            *a += b.norm_sqr();
        }
        segments += 1;
        start += step;
    }

    let scale = 1.0 / (fs * window_power * segments as f64);
    let mv2_to_watts = 1e-6 / REFERENCE_LOAD_OHM;
    let power_dbm_per_hz = accum
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let one_sided = if k == 0 || k == segment_length / 2 { 1.0 } else { 2.0 };
            let watts = (a * scale * one_sided * mv2_to_watts).max(f64::MIN_POSITIVE);
            10.0 * (watts / 1e-3).log10()
        })
        .collect();
    let frequencies_hz = (0..bins)
        .map(|k| k as f64 * fs / segment_length as f64)
        .collect();
    Ok(PsdReport {
        frequencies_hz,
        power_dbm_per_hz,
        segment_length,
        overlap_fraction,
        segments,
        load_ohm: REFERENCE_LOAD_OHM,
        shot_noise_line_dbm: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotNoiseParams {
    #[serde(rename = "photocurrent_A")]
    pub photocurrent_a: f64,
    pub load_resistance_ohm: f64,
    pub bandwidth_hz: f64,
}

impl ShotNoiseParams {
    pub fn new(photocurrent_a: f64, load_resistance_ohm: f64, bandwidth_hz: f64) -> Result<Self> {
        let p = Self {
            photocurrent_a,
            load_resistance_ohm,
            bandwidth_hz,
        };
        for (name, v) in [
            ("photocurrent", photocurrent_a),
            ("load resistance", load_resistance_ohm),
            ("bandwidth", bandwidth_hz),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(p)
    }

    /// Photocurrent from optical power through the detector responsivity.
    pub fn from_optical_power(
        optical_power_w: f64,
        responsivity_a_per_w: f64,
        load_resistance_ohm: f64,
        bandwidth_hz: f64,
    ) -> Result<Self> {
        Self::new(optical_power_w * responsivity_a_per_w, load_resistance_ohm, bandwidth_hz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotNoisePower {
    pub watts: f64,
    #[serde(rename = "dBm")]
    pub dbm: f64,
}

fn watts_to_dbm(w: f64) -> f64 {
    10.0 * (w / 1e-3).log10()
}

/// `P = 2 e R_L i Δf`.
pub fn shot_noise_power(p: &ShotNoiseParams) -> ShotNoisePower {
    let watts = 2.0 * ELECTRON_CHARGE_C * p.load_resistance_ohm * p.photocurrent_a * p.bandwidth_hz;
    ShotNoisePower {
        watts,
        dbm: watts_to_dbm(watts),
    }
}

/// Shot-noise density `2 e R_L i` in dBm/Hz, comparable with a [`PsdReport`].
pub fn shot_noise_density_dbm_per_hz(p: &ShotNoiseParams) -> f64 {
    watts_to_dbm(2.0 * ELECTRON_CHARGE_C * p.load_resistance_ohm * p.photocurrent_a)
}

/// `R_L · i` that reproduces a target shot-noise power over `bandwidth_hz`.
pub fn back_solve_resistance_current(target_dbm: f64, bandwidth_hz: f64) -> f64 {
    let watts = 1e-3 * 10f64.powf(target_dbm / 10.0);
    watts / (2.0 * ELECTRON_CHARGE_C * bandwidth_hz)
}

/// Sample variance over sample mean.
pub fn fano_factor(counts: &[u64]) -> Result<f64> {
    if counts.len() < 2 {
        return Err(Error::InvalidArgument("Fano factor needs at least two counts".into()));
    }
    let xs: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let m = mean(&xs);
    if m <= 0.0 {
        return Err(Error::InvalidArgument("Fano factor undefined for zero mean".into()));
    }
    Ok(variance(&xs) / m)
}
