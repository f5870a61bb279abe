use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use scatter_qrng::analysis::{autocorrelation, ShotNoiseParams};
use scatter_qrng::battery::{run_battery, Mode};
use scatter_qrng::config::{PipelineConfig, Preset};
use scatter_qrng::digitizer::{acquire, select_undersample_factor, AdcConfig};
use scatter_qrng::entropy::{extraction_ratio, min_entropy};
use scatter_qrng::extractor::lfsr_whiten;
use scatter_qrng::io::{read_bitstream, read_trace, to_json_bytes, write_bitstream, write_json, BitFileMeta};
use scatter_qrng::pipeline::{cmd_analyze, cmd_pipeline, cmd_simulate, Analysis};
use scatter_qrng::Result;

const EXIT_TEST_FAILURE: u8 = 1;
const EXIT_DATA_ERROR: u8 = 2;

#[derive(Parser)]
#[command(name = "scatter-qrng", version, about = "Scattering-based QRNG simulation and post-processing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// JSON pipeline configuration.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration.
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
    /// Overrides the source and noise seeds.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Coherent,
    Silver,
    Aluminum,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Coherent => Preset::Coherent,
            PresetArg::Silver => Preset::Silver,
            PresetArg::Aluminum => Preset::Aluminum,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WhichArg {
    Hist,
    Acf,
    Psd,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Write coherent and scattered voltage traces.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Histogram/FWHM, autocorrelation and PSD plot data for a trace CSV.
    Analyze {
        trace: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        which: Vec<WhichArg>,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Sample rate when the trace has no sidecar.
        #[arg(long)]
        sample_rate_hz: Option<f64>,
        /// Photocurrent for the shot-noise line; load and bandwidth come from the configuration.
        #[arg(long)]
        photocurrent_a: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Digitise a trace and report its min-entropy.
    Entropy {
        trace: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        sample_rate_hz: Option<f64>,
        /// Fixed undersample factor; otherwise twice the first nonpositive ACF lag.
        #[arg(long)]
        undersample: Option<usize>,
        /// Report file; printed to stdout either way.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// LFSR-whiten a bit file.
    Extract {
        bits: PathBuf,
        #[arg(long)]
        keep_bits: usize,
        #[arg(long)]
        block_bits: usize,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the randomness battery on a bit file; exits 1 if any applicable test fails.
    Test {
        bits: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
        /// Lift the 100-bit minimum.
        #[arg(long)]
        testing_mode: bool,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full chain from simulation to tested bits with a manifest.
    Pipeline {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(args: &ConfigArgs) -> Result<PipelineConfig> {
    let cfg = match (&args.config, args.preset) {
        (Some(path), _) => PipelineConfig::load(path)?,
        (None, Some(p)) => Preset::from(p).config(),
        (None, None) => PipelineConfig::default(),
    };
    Ok(match args.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

fn out_dir(flag: &Option<PathBuf>, cfg: &PipelineConfig) -> PathBuf {
    flag.clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn print_json<T: serde::Serialize>(value: &T) {
    print!("{}", String::from_utf8(to_json_bytes(value)).expect("json is utf-8"));
}

fn print_files(files: &[PathBuf]) {
    for f in files {
        println!("{}", f.display());
    }
}

fn load_trace(path: &Path, rate: Option<f64>) -> Result<scatter_qrng::signal::SignalTrace> {
    Ok(read_trace(path, rate)?.0)
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Simulate { cfg, out } => {
            let cfg = load_config(&cfg)?;
            for w in cfg.warnings() {
                eprintln!("warning: {w}");
            }
            print_files(&cmd_simulate(&cfg, &out_dir(&out, &cfg))?);
            Ok(0)
        }
        Command::Analyze {
            trace,
            which,
            cfg,
            sample_rate_hz,
            photocurrent_a,
            out,
        } => {
            let cfg = load_config(&cfg)?;
            let trace = load_trace(&trace, sample_rate_hz)?;
            let which: Vec<Analysis> = if which.contains(&WhichArg::All) {
                Analysis::ALL.to_vec()
            } else {
                which
                    .iter()
                    .map(|w| match w {
                        WhichArg::Hist => Analysis::Hist,
                        WhichArg::Acf => Analysis::Acf,
                        WhichArg::Psd => Analysis::Psd,
                        WhichArg::All => unreachable!(),
                    })
                    .collect()
            };
            let shot = photocurrent_a
                .map(|i| ShotNoiseParams::new(i, cfg.detector.load_resistance_ohm, cfg.detector.bandwidth_hz))
                .transpose()?;
            let mut settings = cfg.analysis.clone();
            settings.max_lag = settings.max_lag.min(trace.len().saturating_sub(1) / 4).max(1);
            let (summary, files) = cmd_analyze(&trace, &which, &settings, shot, &out_dir(&out, &cfg))?;
            print_json(&summary);
            print_files(&files);
            Ok(0)
        }
        Command::Entropy {
            trace,
            cfg,
            sample_rate_hz,
            undersample,
            out,
        } => {
            let cfg = load_config(&cfg)?;
            let trace = load_trace(&trace, sample_rate_hz)?;
            let k = match undersample.or(cfg.adc.undersample_factor) {
                Some(k) => k,
                None => select_undersample_factor(&autocorrelation(&trace, cfg.analysis.max_lag)?)?,
            };
            let adc = match (cfg.adc.v_min_mv, cfg.adc.v_max_mv) {
                (Some(lo), Some(hi)) => AdcConfig::new(cfg.adc.n_bits, lo, hi, k)?,
                _ => AdcConfig::fitted(&trace, cfg.adc.n_bits, cfg.adc.range_sigmas, k)?,
            };
            let report = min_entropy(&acquire(&trace, &adc)?)?;
            let body = serde_json::json!({
                "report": report,
                "extraction": extraction_ratio(&report),
                "adc": adc,
            });
            if let Some(path) = out {
                write_json(&path, &body)?;
            }
            print_json(&body);
            Ok(0)
        }
        Command::Extract {
            bits,
            keep_bits,
            block_bits,
            cfg,
            out,
        } => {
            let cfg = load_config(&cfg)?;
            let (raw, _) = read_bitstream(&bits)?;
            let w = lfsr_whiten(&raw, &cfg.extractor.lfsr, keep_bits, block_bits)?;
            let meta = BitFileMeta {
                lfsr: Some(cfg.extractor.lfsr.clone()),
                keep_bits: Some(keep_bits),
                block_bits: Some(block_bits),
                discarded_bits: Some(w.discarded_bits),
                ..BitFileMeta::for_bits(&w.bits)
            };
            write_bitstream(&out, &w.bits, &meta)?;
            print_json(&meta);
            Ok(0)
        }
        Command::Test {
            bits,
            alpha,
            testing_mode,
            cfg,
            out,
        } => {
            let cfg = load_config(&cfg)?;
            let (bits, _) = read_bitstream(&bits)?;
            let mut battery = cfg.tests.clone();
            if let Some(a) = alpha {
                battery.alpha = a;
            }
            if testing_mode {
                battery.mode = Mode::Testing;
            }
            let report = run_battery(&bits, &battery)?;
            if let Some(path) = out {
                write_json(&path, &report)?;
            }
            print_json(&report);
            Ok(if report.all_passed() { 0 } else { EXIT_TEST_FAILURE })
        }
        Command::Pipeline { cfg, out } => {
            let cfg = load_config(&cfg)?;
            let run = cmd_pipeline(&cfg, &out_dir(&out, &cfg))?;
            for w in &run.outcome.summary.warnings {
                eprintln!("warning: {w}");
            }
            print_json(&run.outcome.summary);
            print_files(&run.files);
            Ok(if run.outcome.tests.all_passed() { 0 } else { EXIT_TEST_FAILURE })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_DATA_ERROR)
        }
    }
}
