use proptest::prelude::*;

use scatter_qrng::analysis::{
    autocorrelation, autocorrelation_of, back_solve_resistance_current, histogram, psd_welch, shot_noise_power,
    ShotNoiseParams,
};
use scatter_qrng::config::Preset;
use scatter_qrng::error::Error;
use scatter_qrng::signal::{synthesize, SignalTrace};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn acf_is_scale_and_shift_invariant(
        xs in prop::collection::vec(-100.0f64..100.0, 40..200),
        a in prop_oneof![0.01f64..100.0, -100.0f64..-0.01],
        b in -1e3f64..1e3,
    ) {
        let var = scatter_qrng::analysis::variance(&xs);
        prop_assume!(var > 1e-6);
        let ys: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
        let r = autocorrelation_of(&xs, 10).unwrap();
        let s = autocorrelation_of(&ys, 10).unwrap();
        prop_assert!((r.coefficients[0] - 1.0).abs() < 1e-12);
        for (p, q) in r.coefficients.iter().zip(&s.coefficients) {
            prop_assert!((p - q).abs() < 1e-6, "{p} vs {q}");
        }
    }

    #[test]
    fn acf_is_bounded(xs in prop::collection::vec(-10.0f64..10.0, 40..100)) {
        prop_assume!(scatter_qrng::analysis::variance(&xs) > 1e-6);
        let r = autocorrelation_of(&xs, 8).unwrap();
        prop_assert!(r.coefficients.iter().all(|c| c.abs() <= 1.0 + 1e-12));
    }
}

#[test]
fn coherent_preset_decorrelates_near_lag_44() {
    let cfg = Preset::Coherent.config();
    let pair = synthesize(&cfg.source, &cfg.detector, &cfg.noise, 500_000).unwrap();
    let lag = autocorrelation(&pair.total, 128).unwrap().first_nonpositive_lag.unwrap();
    assert!((34..=54).contains(&lag), "lag {lag}");
}

#[test]
fn signal_plus_noise_psd_dominates_noise() {
    let cfg = Preset::Silver.config();
    let n = 1 << 18;
    let pair = synthesize(&cfg.source, &cfg.detector, &cfg.noise, n).unwrap();
    let noise: Vec<f64> = pair
        .total
        .samples()
        .iter()
        .zip(pair.quantum.samples())
        .map(|(t, q)| t - q)
        .collect();
    let noise = SignalTrace::new(noise, cfg.detector.sample_rate_hz, "noise").unwrap();
    let total = psd_welch(&pair.total, 4096, 0.5).unwrap();
    let floor = psd_welch(&noise, 4096, 0.5).unwrap();
    assert!(total.integrated_power_mv2() > floor.integrated_power_mv2());
    let band = total
        .frequencies_hz
        .iter()
        .position(|&f| f > cfg.detector.bandwidth_hz)
        .unwrap();
    // inside the detector band the signal sits well above the electronic floor
    for i in 2..band {
        assert!(total.power_dbm_per_hz[i] > floor.power_dbm_per_hz[i], "bin {i}");
    }
}

#[test]
fn white_psd_is_flat() {
    let n = 1 << 16;
    let mut state = 1u64;
    let xs: Vec<f64> = (0..n)
        .map(|_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect();
    let trace = SignalTrace::new(xs, 1e9, "white").unwrap();
    let psd = psd_welch(&trace, 1024, 0.5).unwrap();
    let p = psd.power_mv2_per_hz();
    let inner = &p[1..p.len() - 1];
    let avg = inner.iter().sum::<f64>() / inner.len() as f64;
    assert!(inner.iter().all(|v| (v / avg - 1.0).abs() < 0.5));
    assert!((psd.integrated_power_mv2() / trace.variance() - 1.0).abs() < 0.05);
}

#[test]
fn shot_noise_is_linear_in_each_factor() {
    let base = ShotNoiseParams::new(2e-3, 50.0, 1e9).unwrap();
    let p = shot_noise_power(&base).watts;
    let twice = [
        ShotNoiseParams::new(4e-3, 50.0, 1e9).unwrap(),
        ShotNoiseParams::new(2e-3, 100.0, 1e9).unwrap(),
        ShotNoiseParams::new(2e-3, 50.0, 2e9).unwrap(),
    ];
    for t in twice {
        assert_eq!(shot_noise_power(&t).watts, 2.0 * p);
    }
}

#[test]
fn back_solved_product_hits_target() {
    let ri = back_solve_resistance_current(-70.96, 5e9);
    let p = shot_noise_power(&ShotNoiseParams::new(ri / 50.0, 50.0, 5e9).unwrap());
    assert!((p.dbm + 70.96).abs() < 1e-9);
}

#[test]
fn constant_trace_has_no_histogram() {
    let t = SignalTrace::new(vec![3.0; 1000], 1e9, "flat").unwrap();
    assert!(matches!(histogram(&t, 64), Err(Error::DegenerateData(_))));
}
