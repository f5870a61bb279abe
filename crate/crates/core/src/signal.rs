//! Seeded synthesis of detector voltage traces for coherent and scattered light.
//!
//! Photon counts per raw sample window are drawn from a Poisson law (coherent
//! light) or from the multimode-thermal negative-binomial law (scattered
//! light, mean `λ`, variance `λ(1 + λ/M)`), converted to millivolts, passed
//! through a band-limited photoreceiver and summed with white Gaussian
//! electronic noise: `X_t = X_q + X_e`.
//!
//! Scattered light is generated as a Gamma-Poisson mixture. The per-sample
//! thermal intensity excess can optionally be high-passed at a decorrelation
//! cutoff before it reaches the detector, which models speckle intensity
//! fluctuations that carry no slow components. With the cutoff disabled the
//! drive is exactly the negative-binomial count stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::analysis::{fwhm, histogram, variance};
use crate::error::{Error, Result};

/// Mode counts at or above this are treated as the coherent limit during calibration.
pub const COHERENT_LIMIT_MODES: f64 = 1e9;

/// Photon statistics of the light reaching the detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Coherent,
    Scattered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceModel {
    pub kind: SourceKind,
    /// Mean photon count per raw sample window.
    pub mean_rate: f64,
    /// Effective speckle mode number `M`; scattered light only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode_count: Option<f64>,
    /// High-pass cutoff applied to the thermal intensity excess; scattered light only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decorrelation_hz: Option<f64>,
    pub seed: u64,
}

impl SourceModel {
    pub fn coherent(mean_rate: f64, seed: u64) -> Self {
        Self {
            kind: SourceKind::Coherent,
            mean_rate,
            mode_count: None,
            decorrelation_hz: None,
            seed,
        }
    }

    pub fn scattered(mean_rate: f64, mode_count: f64, seed: u64) -> Self {
        Self {
            kind: SourceKind::Scattered,
            mean_rate,
            mode_count: Some(mode_count),
            decorrelation_hz: None,
            seed,
        }
    }

    pub fn with_decorrelation(mut self, hz: f64) -> Self {
        self.decorrelation_hz = Some(hz);
        self
    }

    /// The coherent source with the same mean rate and seed.
    pub fn coherent_baseline(&self) -> Self {
        Self::coherent(self.mean_rate, self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mean_rate.is_finite() && self.mean_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "mean_rate must be positive and finite, got {}",
                self.mean_rate
            )));
        }
        match self.kind {
            SourceKind::Coherent => {
                if self.mode_count.is_some() || self.decorrelation_hz.is_some() {
                    return Err(Error::InvalidArgument(
                        "mode_count and decorrelation_hz apply to scattered sources only".into(),
                    ));
                }
            }
            SourceKind::Scattered => match self.mode_count {
                Some(m) if m.is_finite() && m > 0.0 => {}
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "scattered source needs a positive mode_count, got {other:?}"
                    )))
                }
            },
        }
        if let Some(hz) = self.decorrelation_hz {
            if !(hz.is_finite() && hz >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "decorrelation_hz must be non-negative, got {hz}"
                )));
            }
        }
        Ok(())
    }
}

/// Band-limited photoreceiver with an optional AC-coupling stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorModel {
    pub bandwidth_hz: f64,
    pub sample_rate_hz: f64,
    #[serde(rename = "gain_mV_per_photon")]
    pub gain_mv_per_photon: f64,
    #[serde(rename = "responsivity_A_per_W")]
    pub responsivity_a_per_w: f64,
    pub load_resistance_ohm: f64,
    /// DC-block corner frequency; `0` means DC-coupled.
    #[serde(default)]
    pub ac_coupling_hz: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self {
            bandwidth_hz: 5e9,
            sample_rate_hz: 40e9,
            gain_mv_per_photon: 0.01,
            responsivity_a_per_w: 1.0,
            load_resistance_ohm: 50.0,
            ac_coupling_hz: 0.0,
        }
    }
}

impl DetectorModel {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("bandwidth_hz", self.bandwidth_hz),
            ("sample_rate_hz", self.sample_rate_hz),
            ("gain_mV_per_photon", self.gain_mv_per_photon),
            ("responsivity_A_per_W", self.responsivity_a_per_w),
            ("load_resistance_ohm", self.load_resistance_ohm),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "detector {name} must be positive, got {value}"
                )));
            }
        }
        if self.bandwidth_hz >= self.sample_rate_hz / 2.0 {
            return Err(Error::InvalidConfig(format!(
                "detector bandwidth {} Hz must be below Nyquist ({} Hz)",
                self.bandwidth_hz,
                self.sample_rate_hz / 2.0
            )));
        }
        if !(self.ac_coupling_hz.is_finite() && self.ac_coupling_hz >= 0.0)
            || self.ac_coupling_hz >= self.bandwidth_hz
        {
            return Err(Error::InvalidConfig(format!(
                "ac_coupling_hz must lie in [0, bandwidth), got {}",
                self.ac_coupling_hz
            )));
        }
        Ok(())
    }

    /// Pole of the single-pole low-pass: `exp(-2π f_c / f_s)`.
    pub fn lowpass_pole(&self) -> f64 {
        pole(self.bandwidth_hz, self.sample_rate_hz)
    }
}

fn pole(corner_hz: f64, sample_rate_hz: f64) -> f64 {
    (-2.0 * std::f64::consts::PI * corner_hz / sample_rate_hz).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    #[serde(rename = "electronic_sigma_mV")]
    pub electronic_sigma_mv: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(electronic_sigma_mv: f64, seed: u64) -> Self {
        Self {
            electronic_sigma_mv,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.electronic_sigma_mv.is_finite() && self.electronic_sigma_mv >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "electronic_sigma_mV must be non-negative, got {}",
                self.electronic_sigma_mv
            )));
        }
        Ok(())
    }
}

/// Uniformly sampled voltage record in millivolts.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalTrace {
    samples: Vec<f64>,
    sample_rate_hz: f64,
    pub label: String,
}

impl SignalTrace {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64, label: impl Into<String>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("trace must hold at least one sample".into()));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            label: label.into(),
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean(&self) -> f64 {
        crate::analysis::mean(&self.samples)
    }

    pub fn variance(&self) -> f64 {
        variance(&self.samples)
    }

    /// Every `k`-th sample starting at index 0, at `sample_rate / k`.
    pub fn undersample(&self, k: usize) -> Result<Self> {
        if k < 1 {
            return Err(Error::InvalidArgument("undersample factor must be ≥ 1".into()));
        }
        Ok(Self {
            samples: self.samples.iter().step_by(k).copied().collect(),
            sample_rate_hz: self.sample_rate_hz / k as f64,
            label: self.label.clone(),
        })
    }
}

/// `σ² = σ_e² + σ_q²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceDecomposition {
    pub total_var: f64,
    pub electronic_var: f64,
    pub quantum_var: f64,
    /// Set when the inferred electronic variance is negative beyond statistical tolerance.
    pub inconsistent: bool,
}

impl VarianceDecomposition {
    /// Exact decomposition from model variances.
    pub fn from_parts(quantum_var: f64, electronic_var: f64) -> Self {
        Self {
            total_var: quantum_var + electronic_var,
            electronic_var,
            quantum_var,
            inconsistent: false,
        }
    }

    /// Closed-form variances of the stationary model output.
    pub fn predicted(
        source: &SourceModel,
        detector: &DetectorModel,
        noise: &NoiseModel,
    ) -> Result<Self> {
        source.validate()?;
        detector.validate()?;
        noise.validate()?;
        let gain = detector.gain_mv_per_photon;
        let response = Response::new(detector, 0.0);
        let shot = source.mean_rate * response.noise_gain(None);
        let thermal = match (source.kind, source.mode_count) {
            (SourceKind::Scattered, Some(m)) => {
                let decor = source
                    .decorrelation_hz
                    .filter(|hz| *hz > 0.0)
                    .map(|hz| pole(hz, detector.sample_rate_hz));
                source.mean_rate * source.mean_rate / m * response.noise_gain(decor)
            }
            _ => 0.0,
        };
        Ok(Self::from_parts(
            gain * gain * (shot + thermal),
            noise.electronic_sigma_mv * noise.electronic_sigma_mv,
        ))
    }
}

/// Photon count per raw sample window.
pub fn gen_photon_counts(model: &SourceModel, n: usize) -> Result<Vec<u64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("photon count length must be ≥ 1".into()));
    }
    let mut photons = PhotonStream::new(model)?;
    Ok((0..n).map(|_| photons.next_draw().count as u64).collect())
}

#[derive(Debug, Clone, Copy)]
struct PhotonDraw {
    intensity: f64,
    count: f64,
}

/// Gamma-Poisson photon generator; the coherent case uses a fixed intensity.
struct PhotonStream {
    rng: ChaCha8Rng,
    mean_rate: f64,
    coherent: Poisson<f64>,
    thermal: Option<Gamma<f64>>,
}

impl PhotonStream {
    fn new(model: &SourceModel) -> Result<Self> {
        model.validate()?;
        let coherent = Poisson::new(model.mean_rate)
            .map_err(|e| Error::InvalidArgument(format!("mean_rate: {e}")))?;
        let thermal = match model.kind {
            SourceKind::Coherent => None,
            SourceKind::Scattered => {
                let m = model.mode_count.expect("validated");
                Some(
                    Gamma::new(m, model.mean_rate / m)
                        .map_err(|e| Error::InvalidArgument(format!("mode_count: {e}")))?,
                )
            }
        };
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(model.seed),
            mean_rate: model.mean_rate,
            coherent,
            thermal,
        })
    }

    fn next_draw(&mut self) -> PhotonDraw {
        match &self.thermal {
            None => PhotonDraw {
                intensity: self.mean_rate,
                count: self.coherent.sample(&mut self.rng),
            },
            Some(gamma) => {
                let intensity = gamma.sample(&mut self.rng);
                let count = match Poisson::new(intensity) {
                    Ok(p) => p.sample(&mut self.rng),
                    // Gamma draws can underflow to zero for tiny mode counts.
                    Err(_) => 0.0,
                };
                PhotonDraw { intensity, count }
            }
        }
    }
}

/// Single-pole IIR low-pass with unity DC gain: `y[i] = (1-α)x[i] + α y[i-1]`.
#[derive(Debug, Clone, Copy)]
struct LowPass {
    pole: f64,
    state: f64,
}

impl LowPass {
    fn step(&mut self, x: f64) -> f64 {
        self.state = (1.0 - self.pole) * x + self.pole * self.state;
        self.state
    }
}

/// First-order DC block: `y[i] = β (y[i-1] + x[i] - x[i-1])`.
#[derive(Debug, Clone, Copy)]
struct HighPass {
    pole: f64,
    prev_in: f64,
    state: f64,
}

impl HighPass {
    fn step(&mut self, x: f64) -> f64 {
        self.state = self.pole * (self.state + x - self.prev_in);
        self.prev_in = x;
        self.state
    }
}

/// Low-pass followed by the optional AC-coupling stage.
#[derive(Debug, Clone, Copy)]
struct Response {
    lowpass: LowPass,
    dc_block: Option<HighPass>,
}

impl Response {
    /// Filters initialised at the steady state of a constant input `level`.
    fn new(detector: &DetectorModel, level: f64) -> Self {
        let dc_block = (detector.ac_coupling_hz > 0.0).then(|| HighPass {
            pole: pole(detector.ac_coupling_hz, detector.sample_rate_hz),
            prev_in: level,
            state: 0.0,
        });
        Self {
            lowpass: LowPass {
                pole: detector.lowpass_pole(),
                state: level,
            },
            dc_block,
        }
    }

    fn step(&mut self, x: f64) -> f64 {
        let y = self.lowpass.step(x);
        match &mut self.dc_block {
            Some(hp) => hp.step(y),
            None => y,
        }
    }

    /// `Σ h[k]²` of the impulse response, optionally preceded by an extra high-pass.
    fn noise_gain(mut self, pre_highpass: Option<f64>) -> f64 {
        self.lowpass.state = 0.0;
        if let Some(hp) = &mut self.dc_block {
            hp.prev_in = 0.0;
            hp.state = 0.0;
        }
        let mut pre = pre_highpass.map(|pole| HighPass {
            pole,
            prev_in: 0.0,
            state: 0.0,
        });
        let mut sum = 0.0;
        let mut quiet = 0usize;
        for i in 0..50_000_000usize {
            let x = if i == 0 { 1.0 } else { 0.0 };
            let x = match &mut pre {
                Some(hp) => hp.step(x),
                None => x,
            };
            let h = self.step(x);
            sum += h * h;
            quiet = if h * h < 1e-18 * sum { quiet + 1 } else { 0 };
            if quiet > 64 {
                break;
            }
        }
        sum
    }
}

/// `gain × counts` through the detector's low-pass (and AC coupling), zero initial state.
pub fn counts_to_voltage(counts: &[u64], detector: &DetectorModel) -> Result<SignalTrace> {
    if counts.is_empty() {
        return Err(Error::InvalidArgument("counts must be non-empty".into()));
    }
    detector.validate()?;
    let mut response = Response::new(detector, 0.0);
    let gain = detector.gain_mv_per_photon;
    let samples = counts
        .iter()
        .map(|&c| response.step(gain * c as f64))
        .collect();
    SignalTrace::new(samples, detector.sample_rate_hz, "counts")
}

/// `out[i] = in[i] + g[i]`, `g ~ N(0, σ²)` i.i.d. from the noise seed.
pub fn add_electronic_noise(trace: &SignalTrace, noise: &NoiseModel) -> Result<SignalTrace> {
    noise.validate()?;
    if noise.electronic_sigma_mv == 0.0 {
        return Ok(trace.clone());
    }
    let normal = Normal::new(0.0, noise.electronic_sigma_mv)
        .map_err(|e| Error::InvalidArgument(format!("electronic noise: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let samples = trace
        .samples
        .iter()
        .map(|v| v + normal.sample(&mut rng))
        .collect();
    SignalTrace::new(samples, trace.sample_rate_hz, trace.label.clone())
}

fn source_label(source: &SourceModel) -> String {
    match source.kind {
        SourceKind::Coherent => "coherent".to_string(),
        SourceKind::Scattered => format!("scattered(M={})", source.mode_count.unwrap_or(f64::NAN)),
    }
}

/// Quantum-only detector output `X_q` for `n` raw samples.
///
/// Filters start at the steady state of the mean photon drive, so the trace
/// has no switch-on transient.
pub fn synthesize_quantum(
    source: &SourceModel,
    detector: &DetectorModel,
    n: usize,
) -> Result<SignalTrace> {
    if n == 0 {
        return Err(Error::InvalidArgument("trace length must be ≥ 1".into()));
    }
    detector.validate()?;
    let mut photons = PhotonStream::new(source)?;
    let gain = detector.gain_mv_per_photon;
    let level = gain * source.mean_rate;
    let mut response = Response::new(detector, level);
    let mut decorrelation = source
        .decorrelation_hz
        .filter(|hz| *hz > 0.0)
        .map(|hz| HighPass {
            pole: pole(hz, detector.sample_rate_hz),
            prev_in: 0.0,
            state: 0.0,
        });
    let lambda = source.mean_rate;
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let draw = photons.next_draw();
        let drive = match &mut decorrelation {
            // shot residual around the intensity plus the filtered thermal excess
            Some(hp) => lambda + (draw.count - draw.intensity) + hp.step(draw.intensity - lambda),
            None => draw.count,
        };
        samples.push(response.step(gain * drive));
    }
    SignalTrace::new(samples, detector.sample_rate_hz, source_label(source))
}

/// Matched quantum-only and total (`X_q + X_e`) traces.
#[derive(Debug, Clone)]
pub struct TracePair {
    pub quantum: SignalTrace,
    pub total: SignalTrace,
}

pub fn synthesize(
    source: &SourceModel,
    detector: &DetectorModel,
    noise: &NoiseModel,
    n: usize,
) -> Result<TracePair> {
    let quantum = synthesize_quantum(source, detector, n)?;
    let total = add_electronic_noise(&quantum, noise)?;
    Ok(TracePair { quantum, total })
}

/// `σ_q² = var(quantum)`, `σ² = var(noisy)`, `σ_e² = σ² - σ_q²`.
pub fn variance_decomposition(
    quantum_trace: &SignalTrace,
    noisy_trace: &SignalTrace,
) -> Result<VarianceDecomposition> {
    if quantum_trace.len() != noisy_trace.len() {
        return Err(Error::InvalidArgument(format!(
            "trace lengths differ: {} vs {}",
            quantum_trace.len(),
            noisy_trace.len()
        )));
    }
    if quantum_trace.sample_rate_hz != noisy_trace.sample_rate_hz {
        return Err(Error::InvalidArgument("trace sample rates differ".into()));
    }
    let quantum_var = quantum_trace.variance();
    let total_var = noisy_trace.variance();
    let electronic_var = total_var - quantum_var;
    let n = quantum_trace.len().max(2) as f64;
    let tolerance = 3.0 * total_var.max(quantum_var) * (2.0 / (n - 1.0)).sqrt();
    Ok(VarianceDecomposition {
        total_var,
        electronic_var,
        quantum_var,
        inconsistent: electronic_var < -tolerance,
    })
}

/// Inputs shared by every simulation run during mode-count calibration.
#[derive(Debug, Clone)]
pub struct CalibrationBase {
    /// Scattered template; its `mode_count` is ignored.
    pub source: SourceModel,
    pub detector: DetectorModel,
    pub noise: NoiseModel,
    pub n_samples: usize,
    pub n_bins: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub mode_count: f64,
    pub achieved_ratio: f64,
    #[serde(rename = "coherent_fwhm_mV")]
    pub coherent_fwhm_mv: f64,
    pub iterations: usize,
}

/// FWHM of the total (noisy) trace in mV.
pub fn trace_fwhm(
    source: &SourceModel,
    detector: &DetectorModel,
    noise: &NoiseModel,
    n: usize,
    n_bins: usize,
) -> Result<f64> {
    let pair = synthesize(source, detector, noise, n)?;
    fwhm(&histogram(&pair.total, n_bins)?)
}

/// Bisection (in `log M`) for the mode count whose simulated FWHM ratio
/// scattered/coherent matches `target_ratio` within 2 %.
pub fn calibrate_mode_count(target_ratio: f64, base: &CalibrationBase) -> Result<Calibration> {
    const MIN_MODES: f64 = 1.0;
    const RELATIVE_TOLERANCE: f64 = 0.002;
    const MAX_ITERATIONS: usize = 60;

    if !(target_ratio.is_finite() && target_ratio > 1.0) {
        return Err(Error::InvalidArgument(format!(
            "target FWHM ratio must exceed 1, got {target_ratio}"
        )));
    }
    let template = SourceModel {
        kind: SourceKind::Scattered,
        mode_count: Some(MIN_MODES),
        ..base.source.clone()
    };
    template.validate()?;

    let coherent_fwhm = trace_fwhm(
        &template.coherent_baseline(),
        &base.detector,
        &base.noise,
        base.n_samples,
        base.n_bins,
    )?;
    let ratio_at = |m: f64| -> Result<f64> {
        let source = SourceModel {
            mode_count: Some(m),
            ..template.clone()
        };
        Ok(trace_fwhm(&source, &base.detector, &base.noise, base.n_samples, base.n_bins)?
            / coherent_fwhm)
    };

    let max_ratio = ratio_at(MIN_MODES)?;
    if target_ratio > max_ratio {
        return Err(Error::CalibrationInfeasible {
            target: target_ratio,
            max_ratio,
        });
    }
    let limit_ratio = ratio_at(COHERENT_LIMIT_MODES)?;
    if target_ratio <= limit_ratio {
        return Ok(Calibration {
            mode_count: COHERENT_LIMIT_MODES,
            achieved_ratio: limit_ratio,
            coherent_fwhm_mv: coherent_fwhm,
            iterations: 0,
        });
    }

    // ratio decreases with M: lo has the larger ratio
    let (mut lo, mut hi) = (MIN_MODES.ln(), COHERENT_LIMIT_MODES.ln());
    let mut best = (MIN_MODES, max_ratio);
    for iteration in 1..=MAX_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        let m = mid.exp();
        let ratio = ratio_at(m)?;
        if (ratio / target_ratio - 1.0).abs() < (best.1 / target_ratio - 1.0).abs() {
            best = (m, ratio);
        }
        if (ratio / target_ratio - 1.0).abs() < RELATIVE_TOLERANCE || hi - lo < 1e-6 {
            return Ok(Calibration {
                mode_count: m,
                achieved_ratio: ratio,
                coherent_fwhm_mv: coherent_fwhm,
                iterations: iteration,
            });
        }
        if ratio > target_ratio {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Calibration {
        mode_count: best.0,
        achieved_ratio: best.1,
        coherent_fwhm_mv: coherent_fwhm,
        iterations: MAX_ITERATIONS,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fano(counts: &[u64]) -> f64 {
        let xs: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        variance(&xs) / crate::analysis::mean(&xs)
    }

    #[test]
    fn coherent_counts_are_poissonian() {
        let counts = gen_photon_counts(&SourceModel::coherent(100.0, 7), 1_000_000).unwrap();
        let f = fano(&counts);
        assert!((f - 1.0).abs() < 0.01, "fano {f}");
    }

    #[test]
    fn scattered_counts_follow_mandel_variance() {
        let counts = gen_photon_counts(&SourceModel::scattered(100.0, 10.0, 7), 1_000_000).unwrap();
        let f = fano(&counts);
        assert!((f - 11.0).abs() < 0.3, "fano {f}");
    }

    #[test]
    fn huge_mode_count_is_the_coherent_limit() {
        let counts = gen_photon_counts(&SourceModel::scattered(100.0, 1e9, 3), 200_000).unwrap();
        let f = fano(&counts);
        assert!((f - 1.0).abs() < 0.02, "fano {f}");
    }

    #[test]
    fn counts_are_deterministic_in_the_seed() {
        let m = SourceModel::scattered(50.0, 4.0, 99);
        assert_eq!(gen_photon_counts(&m, 1000).unwrap(), gen_photon_counts(&m, 1000).unwrap());
        let other = SourceModel { seed: 100, ..m.clone() };
        assert_ne!(gen_photon_counts(&m, 1000).unwrap(), gen_photon_counts(&other, 1000).unwrap());
    }

    #[test]
    fn invalid_sources_are_rejected() {
        assert!(gen_photon_counts(&SourceModel::coherent(0.0, 1), 10).is_err());
        assert!(gen_photon_counts(&SourceModel::coherent(-3.0, 1), 10).is_err());
        assert!(gen_photon_counts(&SourceModel::coherent(3.0, 1), 0).is_err());
        assert!(gen_photon_counts(&SourceModel::scattered(3.0, 0.0, 1), 10).is_err());
        let mut bad = SourceModel::coherent(3.0, 1);
        bad.mode_count = Some(2.0);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn constant_counts_settle_to_gain_times_count() {
        let det = DetectorModel::default();
        let trace = counts_to_voltage(&vec![40; 400], &det).unwrap();
        let tail = &trace.samples()[300..];
        assert!(tail.iter().all(|v| (v - 0.4).abs() < 1e-12));
    }

    #[test]
    fn impulse_response_is_geometric() {
        let det = DetectorModel::default();
        let alpha = det.lowpass_pole();
        let mut counts = vec![0u64; 20];
        counts[0] = 1;
        let trace = counts_to_voltage(&counts, &det).unwrap();
        // hand-unrolled: y0 = (1-α)g, y1 = α y0, y2 = α y1, ...
        let mut expected = det.gain_mv_per_photon * (1.0 - alpha);
        for v in trace.samples() {
            assert!((v - expected).abs() < 1e-15);
            expected *= alpha;
        }
    }

    #[test]
    fn lowpass_reduces_white_variance() {
        let det = DetectorModel {
            bandwidth_hz: 5e9,
            sample_rate_hz: 40e9,
            ..Default::default()
        };
        let counts = gen_photon_counts(&SourceModel::coherent(100.0, 1), 200_000).unwrap();
        let raw: Vec<f64> = counts.iter().map(|&c| det.gain_mv_per_photon * c as f64).collect();
        let out = counts_to_voltage(&counts, &det).unwrap();
        let alpha = det.lowpass_pole();
        let predicted = (1.0 - alpha) / (1.0 + alpha);
        let ratio = variance(&out.samples()[100..]) / variance(&raw);
        assert!(ratio < 1.0);
        assert!((ratio / predicted - 1.0).abs() < 0.05, "{ratio} vs {predicted}");
    }

    #[test]
    fn zero_sigma_noise_is_identity() {
        let t = SignalTrace::new(vec![1.0, 2.0, 3.0], 1.0, "x").unwrap();
        let out = add_electronic_noise(&t, &NoiseModel::new(0.0, 5)).unwrap();
        assert_eq!(out, t);
    }

    #[test]
    fn electronic_noise_variance_adds() {
        let base = add_electronic_noise(
            &SignalTrace::new(vec![0.0; 1_000_000], 1.0, "zero").unwrap(),
            &NoiseModel::new(1.0, 1),
        )
        .unwrap();
        let out = add_electronic_noise(&base, &NoiseModel::new(2.0, 2)).unwrap();
        assert!((out.variance() - 5.0).abs() < 0.05, "{}", out.variance());
        let again = add_electronic_noise(&base, &NoiseModel::new(2.0, 2)).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn decomposition_recovers_added_noise() {
        let q = add_electronic_noise(
            &SignalTrace::new(vec![0.0; 200_000], 1.0, "q").unwrap(),
            &NoiseModel::new(1.0, 11),
        )
        .unwrap();
        let same = variance_decomposition(&q, &q).unwrap();
        assert_eq!(same.electronic_var, 0.0);
        assert!(!same.inconsistent);

        let noisy = add_electronic_noise(&q, &NoiseModel::new(1.0, 12)).unwrap();
        let d = variance_decomposition(&q, &noisy).unwrap();
        assert!((d.total_var - 2.0).abs() < 0.03);
        assert!((d.electronic_var - 1.0).abs() < 0.03);
        assert!(!d.inconsistent);

        let halved =
            SignalTrace::new(q.samples().iter().map(|v| 0.5 * v).collect(), 1.0, "h").unwrap();
        assert!(variance_decomposition(&q, &halved).unwrap().inconsistent);
    }

    #[test]
    fn decomposition_rejects_mismatched_traces() {
        let a = SignalTrace::new(vec![0.0, 1.0], 1.0, "a").unwrap();
        let b = SignalTrace::new(vec![0.0, 1.0, 2.0], 1.0, "b").unwrap();
        assert!(variance_decomposition(&a, &b).is_err());
    }

    #[test]
    fn predicted_variance_matches_simulation() {
        let det = DetectorModel {
            bandwidth_hz: 350e6,
            ac_coupling_hz: 44e6,
            ..Default::default()
        };
        let noise = NoiseModel::new(0.05, 3);
        let src = SourceModel::scattered(2000.0, 200.0, 4).with_decorrelation(700e6);
        let model = VarianceDecomposition::predicted(&src, &det, &noise).unwrap();
        assert!((model.total_var - model.quantum_var - model.electronic_var).abs() < 1e-12);
        let pair = synthesize(&src, &det, &noise, 1_000_000).unwrap();
        let d = variance_decomposition(&pair.quantum, &pair.total).unwrap();
        assert!((d.quantum_var / model.quantum_var - 1.0).abs() < 0.05);
        assert!((d.total_var / model.total_var - 1.0).abs() < 0.05);
    }

    #[test]
    fn decorrelation_off_reproduces_the_count_drive() {
        let det = DetectorModel::default();
        let src = SourceModel::scattered(30.0, 5.0, 8);
        let counts = gen_photon_counts(&src, 500).unwrap();
        let direct = synthesize_quantum(&src, &det, 500).unwrap();
        let mut response = Response::new(&det, det.gain_mv_per_photon * 30.0);
        for (c, v) in counts.iter().zip(direct.samples()) {
            let expected = response.step(det.gain_mv_per_photon * *c as f64);
            assert!((expected - v).abs() < 1e-12);
        }
    }

    #[test]
    fn detector_validation() {
        let mut det = DetectorModel::default();
        assert!(det.validate().is_ok());
        det.bandwidth_hz = 25e9;
        assert!(det.validate().is_err());
        det = DetectorModel {
            gain_mv_per_photon: 0.0,
            ..Default::default()
        };
        assert!(det.validate().is_err());
    }

    #[test]
    fn undersample_keeps_every_kth() {
        let t = SignalTrace::new((0..10).map(f64::from).collect(), 40.0, "t").unwrap();
        let u = t.undersample(3).unwrap();
        assert_eq!(u.samples(), &[0.0, 3.0, 6.0, 9.0]);
        assert_eq!(u.sample_rate_hz(), 40.0 / 3.0);
        assert_eq!(t.undersample(1).unwrap(), t);
        assert!(t.undersample(0).is_err());
    }
}
