use scatter_qrng::analysis::{fano_factor, mean};
use scatter_qrng::config::{preset_detector, Preset};
use scatter_qrng::error::Error;
use scatter_qrng::signal::{
    calibrate_mode_count, gen_photon_counts, synthesize, trace_fwhm, variance_decomposition, CalibrationBase,
    NoiseModel, SourceModel, VarianceDecomposition,
};

const N: usize = 200_000;

fn base(seed: u64) -> CalibrationBase {
    let cfg = Preset::Silver.config().with_seed(seed);
    CalibrationBase {
        source: cfg.source,
        detector: cfg.detector,
        noise: cfg.noise,
        n_samples: N,
        n_bins: cfg.analysis.n_bins,
    }
}

#[test]
fn coherent_counts_are_poissonian() {
    let counts = gen_photon_counts(&SourceModel::coherent(500.0, 3), 200_000).unwrap();
    let f = fano_factor(&counts).unwrap();
    assert!((f - 1.0).abs() < 0.02, "fano {f}");
}

#[test]
fn scattered_counts_carry_thermal_excess() {
    let (lambda, m) = (500.0, 10.0);
    let counts = gen_photon_counts(&SourceModel::scattered(lambda, m, 3), 200_000).unwrap();
    let f = fano_factor(&counts).unwrap();
    let expected = 1.0 + lambda / m;
    assert!((f / expected - 1.0).abs() < 0.05, "fano {f}, expected {expected}");
}

#[test]
fn fwhm_decreases_with_mode_count() {
    let b = base(1);
    let widths: Vec<f64> = [20.0, 200.0, 2000.0, 20000.0]
        .iter()
        .map(|&m| {
            let s = SourceModel { mode_count: Some(m), ..b.source.clone() };
            trace_fwhm(&s, &b.detector, &b.noise, N, b.n_bins).unwrap()
        })
        .collect();
    assert!(widths.windows(2).all(|w| w[0] > w[1]), "{widths:?}");
}

#[test]
fn coherent_and_scattered_share_the_mean_level() {
    let cfg = Preset::Silver.config();
    let s = synthesize(&cfg.source, &cfg.detector, &cfg.noise, N).unwrap();
    let c = synthesize(&cfg.source.coherent_baseline(), &cfg.detector, &cfg.noise, N).unwrap();
    let sd = s.total.variance().sqrt();
    assert!((mean(s.total.samples()) - mean(c.total.samples())).abs() < 0.1 * sd);
}

#[test]
fn calibration_round_trip() {
    let cal = calibrate_mode_count(1.675, &base(5)).unwrap();
    assert!((cal.achieved_ratio / 1.675 - 1.0).abs() < 0.02, "{cal:?}");
    let b = base(5);
    let s = SourceModel { mode_count: Some(cal.mode_count), ..b.source.clone() };
    let ratio = trace_fwhm(&s, &b.detector, &b.noise, N, b.n_bins).unwrap() / cal.coherent_fwhm_mv;
    assert!((ratio / 1.675 - 1.0).abs() < 0.02);
}

#[test]
fn unreachable_ratio_is_infeasible() {
    let err = calibrate_mode_count(500.0, &base(1)).unwrap_err();
    assert!(matches!(err, Error::CalibrationInfeasible { .. }), "{err}");
}

#[test]
fn noise_variance_separates() {
    let cfg = Preset::Aluminum.config();
    let pair = synthesize(&cfg.source, &cfg.detector, &cfg.noise, N).unwrap();
    let d = variance_decomposition(&pair.quantum, &pair.total).unwrap();
    let sigma2 = cfg.noise.electronic_sigma_mv.powi(2);
    assert!(!d.inconsistent);
    assert!((d.electronic_var / sigma2 - 1.0).abs() < 0.1, "{d:?}");
    let predicted = VarianceDecomposition::predicted(&cfg.source, &cfg.detector, &cfg.noise).unwrap();
    assert!((d.quantum_var / predicted.quantum_var - 1.0).abs() < 0.1, "{d:?} vs {predicted:?}");
}

#[test]
fn noise_seed_changes_only_the_noise() {
    let cfg = Preset::Coherent.config();
    let a = synthesize(&cfg.source, &preset_detector(), &NoiseModel::new(0.05, 1), 1000).unwrap();
    let b = synthesize(&cfg.source, &preset_detector(), &NoiseModel::new(0.05, 2), 1000).unwrap();
    assert_eq!(a.quantum.samples(), b.quantum.samples());
    assert_ne!(a.total.samples(), b.total.samples());
}

#[test]
fn invalid_models_are_rejected() {
    assert!(gen_photon_counts(&SourceModel::coherent(-1.0, 1), 10).is_err());
    assert!(gen_photon_counts(&SourceModel::scattered(10.0, 0.0, 1), 10).is_err());
    let cfg = Preset::Coherent.config();
    assert!(synthesize(&cfg.source, &cfg.detector, &cfg.noise, 0).is_err());
}
