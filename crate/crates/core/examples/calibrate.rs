//! Re-derives the preset mode counts by bisection on the simulated FWHM ratio.
//!
//! `cargo run --release -p scatter-qrng --example calibrate`

use scatter_qrng::config::{Preset, PipelineConfig};
use scatter_qrng::signal::{calibrate_mode_count, CalibrationBase};

fn main() -> scatter_qrng::Result<()> {
    let base_cfg = PipelineConfig::default();
    for preset in [Preset::Silver, Preset::Aluminum] {
        let target = preset.target_fwhm_ratio().expect("scattered preset");
        let base = CalibrationBase {
            source: preset.source(base_cfg.source.seed),
            detector: base_cfg.detector.clone(),
            noise: base_cfg.noise.clone(),
            n_samples: base_cfg.n_samples,
            n_bins: base_cfg.analysis.n_bins,
        };
        let cal = calibrate_mode_count(target, &base)?;
        println!(
            "{:<9} target {:.4}  M = {:.1}  ratio {:.4}  coherent FWHM {:.4} mV  ({} steps)",
            preset.name(),
            target,
            cal.mode_count,
            cal.achieved_ratio,
            cal.coherent_fwhm_mv,
            cal.iterations
        );
    }
    Ok(())
}
