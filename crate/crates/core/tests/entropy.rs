use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use scatter_qrng::config::Preset;
use scatter_qrng::digitizer::{digitize, AdcConfig, DigitalTrace};
use scatter_qrng::entropy::{
    extraction_ratio, min_entropy, quantum_min_entropy, CodeHistogram, EntropyMode, EntropyReport,
};
use scatter_qrng::signal::{synthesize_quantum, SignalTrace, SourceModel};

// -log2 erf(0.5 / (40 √2)): the central code of a Gaussian 40 LSB wide
const GAUSSIAN_40_LSB_H: f64 = 6.647_713_729;

fn gaussian_codes(sigma_lsb: f64, n: usize, seed: u64) -> DigitalTrace {
    let adc = AdcConfig::new(16, -32768.0, 32768.0, 1).unwrap();
    let centre = adc.dequantize(1 << 15);
    let normal = Normal::new(centre, sigma_lsb).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs = (0..n).map(|_| normal.sample(&mut rng)).collect();
    digitize(&SignalTrace::new(xs, 1e9, "gauss").unwrap(), &adc).unwrap()
}

fn report(codes: &[u32], n_bits: u32) -> EntropyReport {
    CodeHistogram::from_codes(codes, n_bits)
        .unwrap()
        .report(EntropyMode::EmpiricalTotal)
        .unwrap()
}

#[test]
fn gaussian_min_entropy_matches_closed_form() {
    let r = min_entropy(&gaussian_codes(40.0, 2_000_000, 9)).unwrap();
    assert!((r.min_entropy_bits - GAUSSIAN_40_LSB_H).abs() < 0.03, "{}", r.min_entropy_bits);
    assert!(r.min_entropy_bits <= r.shannon_bits);
}

#[test]
fn permutation_invariant() {
    let dt = gaussian_codes(10.0, 50_000, 1);
    let mut codes = dt.codes().to_vec();
    let a = report(&codes, 16);
    codes.shuffle(&mut ChaCha8Rng::seed_from_u64(2));
    let b = report(&codes, 16);
    assert_eq!(a.min_entropy_bits, b.min_entropy_bits);
    assert_eq!(a.shannon_bits, b.shannon_bits);
}

#[test]
fn merge_equals_concatenation() {
    let dt = gaussian_codes(25.0, 40_000, 3);
    let (l, r) = dt.codes().split_at(15_000);
    let mut h = CodeHistogram::from_codes(l, 16).unwrap();
    h.merge(&CodeHistogram::from_codes(r, 16).unwrap()).unwrap();
    let whole = CodeHistogram::from_codes(dt.codes(), 16).unwrap();
    assert_eq!(h.counts(), whole.counts());
    assert!(h.merge(&CodeHistogram::new(8).unwrap()).is_err());
}

#[test]
fn constant_codes_have_zero_entropy() {
    let r = report(&vec![7u32; 20_000], 8);
    assert_eq!(r.min_entropy_bits, 0.0);
    assert_eq!(extraction_ratio(&r).keep_bits, 0);
}

#[test]
fn small_samples_warn() {
    let r = report(&[1, 2, 3, 4], 8);
    assert!(!r.warnings.is_empty());
}

#[test]
fn out_of_range_code_is_rejected() {
    assert!(CodeHistogram::from_codes(&[256], 8).is_err());
}

#[test]
fn extraction_ratio_floors() {
    let mut r = report(&(0..1024u32).collect::<Vec<_>>(), 10);
    assert_eq!(extraction_ratio(&r).keep_bits, 10);
    r.min_entropy_bits = 11.999;
    assert_eq!(extraction_ratio(&r).keep_bits, 10);
    r.n_bits = 16;
    let e = extraction_ratio(&r);
    assert_eq!((e.keep_bits, e.ratio), (11, 11.0 / 16.0));
}

#[test]
fn entropy_grows_with_mean_photon_number() {
    let cfg = Preset::Coherent.config();
    let hs: Vec<f64> = [2000.0, 8000.0, 32000.0]
        .iter()
        .map(|&l| {
            let src = SourceModel::coherent(l, 1);
            let adc = AdcConfig::new(12, -3.0, 3.0, 2).unwrap();
            let q = synthesize_quantum(&src, &cfg.detector, 200_000).unwrap();
            let d = digitize(&q.undersample(2).unwrap(), &adc).unwrap();
            min_entropy(&d).unwrap().min_entropy_bits
        })
        .collect();
    assert!(hs.windows(2).all(|w| w[0] < w[1]), "{hs:?}");
}

#[test]
fn quantum_estimate_ignores_electronic_noise() {
    let mut a = Preset::Silver.config();
    let mut b = a.clone();
    a.noise.electronic_sigma_mv = 0.01;
    b.noise.electronic_sigma_mv = 1.0;
    let adc = AdcConfig::new(12, -1.0, 1.0, 2).unwrap();
    let ha = quantum_min_entropy(&a.source, &a.detector, &adc, 100_000).unwrap();
    let hb = quantum_min_entropy(&b.source, &b.detector, &adc, 100_000).unwrap();
    assert_eq!(ha.min_entropy_bits, hb.min_entropy_bits);
    assert!(ha.min_entropy_bits > 5.0);
    assert_eq!(ha.mode, EntropyMode::ModelQuantumOnly);
}
