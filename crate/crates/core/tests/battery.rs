mod common;

use scatter_qrng::battery::{
    block_frequency, monobit, run_battery, runs_test, serial2, BatteryConfig, Mode, MIN_BITS,
};
use scatter_qrng::BitStream;

use common::{biased_coin, fair_coin};

#[test]
fn heavy_bias_fails_monobit() {
    let p = monobit(&biased_coin(100_000, 0.7, 1), Mode::Production).unwrap();
    assert!(p < 1e-6, "{p}");
}

#[test]
fn null_pass_rates_match_alpha() {
    let seeds = 1000u64;
    let mut passes = [0u32; 5];
    let mut names = Vec::new();
    for seed in 0..seeds {
        let report = run_battery(&fair_coin(10_000, 10_000 + seed), &BatteryConfig::default()).unwrap();
        names = report.records.iter().map(|r| r.name.clone()).collect();
        for (p, r) in passes.iter_mut().zip(&report.records) {
            *p += r.pass as u32;
        }
    }
    for (name, p) in names.iter().zip(passes) {
        let rate = p as f64 / seeds as f64;
        assert!((0.98..=1.0).contains(&rate), "{name}: {rate}");
    }
}

#[test]
fn fair_coin_runs_test_passes_mostly() {
    let passes = (0..100u64)
        .filter(|&s| runs_test(&fair_coin(100_000, s), Mode::Production).unwrap().unwrap() >= 0.01)
        .count();
    assert!(passes >= 95, "{passes}");
}

#[test]
fn complement_leaves_p_values_unchanged() {
    let bits = fair_coin(20_000, 3);
    let comp = bits.complement();
    let cfg = BatteryConfig::default();
    let a = run_battery(&bits, &cfg).unwrap();
    let b = run_battery(&comp, &cfg).unwrap();
    for (x, y) in a.records.iter().zip(&b.records) {
        assert!((x.p_value - y.p_value).abs() < 1e-12, "{}", x.name);
    }
}

#[test]
fn short_streams_need_testing_mode() {
    let bits = BitStream::parse("1011010101100111010010110001011100101101").unwrap();
    assert!(bits.len() < MIN_BITS);
    assert!(run_battery(&bits, &BatteryConfig::default()).is_err());
    let cfg = BatteryConfig {
        mode: Mode::Testing,
        ..BatteryConfig::default()
    };
    let report = run_battery(&bits, &BatteryConfig { max_lag: 2, block_len: Some(10), ..cfg }).unwrap();
    assert_eq!(report.records.len(), 5);
}

#[test]
fn periodic_pattern_fails_serial() {
    let bits = BitStream::from_bools((0..10_000).map(|i| i % 4 < 2), "0011");
    assert!(serial2(&bits, Mode::Production).unwrap() < 1e-6);
    assert!(monobit(&bits, Mode::Production).unwrap() > 0.99);
}

#[test]
fn clustered_ones_fail_block_frequency() {
    let bits = BitStream::from_bools((0..10_000).map(|i| (i / 500) % 2 == 0), "blocks");
    assert!(block_frequency(&bits, 100, Mode::Production).unwrap() < 1e-6);
}
