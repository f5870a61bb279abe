use scatter_qrng::config::{PipelineConfig, Preset};
use scatter_qrng::io::{read_bitstream, read_json, read_trace, sha256_hex};
use scatter_qrng::pipeline::{cmd_pipeline, cmd_simulate, run_pipeline, Manifest, BITS_FILE, MANIFEST_FILE};
use scatter_qrng::Error;

fn small(preset: Preset) -> PipelineConfig {
    let mut cfg = preset.config();
    cfg.n_samples = 400_000;
    cfg
}

#[test]
fn same_seed_same_bits() {
    let a = run_pipeline(&small(Preset::Silver)).unwrap();
    let b = run_pipeline(&small(Preset::Silver)).unwrap();
    assert_eq!(a.whitened.bits, b.whitened.bits);
    let c = run_pipeline(&small(Preset::Silver).with_seed(99)).unwrap();
    assert_ne!(a.whitened.bits, c.whitened.bits);
}

#[test]
fn bit_rate_is_rate_times_keep_bits() {
    let s = run_pipeline(&small(Preset::Silver)).unwrap().summary;
    assert_eq!(s.bit_rate_hz, s.effective_rate_hz * s.extraction.keep_bits as f64);
    assert_eq!(s.block_bits, s.adc.n_bits as usize);
    assert!(s.extraction.keep_bits >= 1);
}

#[test]
fn adc_above_the_signal_halts_at_extraction() {
    let mut cfg = small(Preset::Coherent);
    cfg.adc.v_min_mv = Some(100.0);
    cfg.adc.v_max_mv = Some(200.0);
    let err = run_pipeline(&cfg).unwrap_err();
    assert!(matches!(err, Error::Stage { stage: "extraction_ratio", .. }), "{err}");
    assert!(matches!(err.root(), Error::ZeroEntropy));
}

#[test]
fn failed_run_leaves_no_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(Preset::Coherent);
    cfg.adc.v_min_mv = Some(100.0);
    cfg.adc.v_max_mv = Some(200.0);
    assert!(cmd_pipeline(&cfg, dir.path()).is_err());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn bad_configs_are_rejected() {
    assert!(PipelineConfig::from_json("{\"n_samples\": 10, \"bogus\": 1}").is_err());
    let mut cfg = small(Preset::Silver);
    cfg.adc.n_bits = 0;
    assert!(matches!(run_pipeline(&cfg), Err(Error::Stage { stage: "config", .. })));
    let mut cfg = small(Preset::Silver);
    cfg.source.mean_rate = -3.0;
    assert!(run_pipeline(&cfg).is_err());
}

#[test]
fn config_round_trips_through_json() {
    let cfg = Preset::Aluminum.config();
    assert_eq!(PipelineConfig::from_json(&cfg.to_json()).unwrap(), cfg);
}

#[test]
fn manifest_hashes_match_files() {
    let dir = tempfile::tempdir().unwrap();
    let run = cmd_pipeline(&small(Preset::Silver), dir.path()).unwrap();
    let manifest: Manifest = read_json(&dir.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(manifest.artifacts.len(), run.files.len() - 1);
    for a in &manifest.artifacts {
        let bytes = std::fs::read(dir.path().join(&a.path)).unwrap();
        assert_eq!(a.bytes, bytes.len());
        assert_eq!(a.sha256, sha256_hex(&bytes));
    }
    let (bits, meta) = read_bitstream(&dir.path().join(BITS_FILE)).unwrap();
    assert_eq!(bits.to_bools(), run.outcome.whitened.bits.to_bools());
    assert_eq!(meta.keep_bits, Some(run.outcome.summary.extraction.keep_bits as usize));
}

#[test]
fn simulate_writes_both_traces() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(Preset::Silver);
    cfg.n_samples = 5000;
    let files = cmd_simulate(&cfg, dir.path()).unwrap();
    assert_eq!(files.len(), 4);
    let (trace, meta) = read_trace(&dir.path().join("scattered.csv"), None).unwrap();
    assert_eq!(trace.len(), 5000);
    assert_eq!(meta.unwrap().sample_rate_hz, cfg.detector.sample_rate_hz);
}
