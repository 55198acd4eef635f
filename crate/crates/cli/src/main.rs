use clap::{Parser, Subcommand};
use eegmix_core::checkpoint::{load_checkpoint, save_checkpoint};
use eegmix_core::datagen::{Dataset, Split, SynthConfig, View};
use eegmix_core::error::{Error, Result};
use eegmix_core::gradcheck::{gradcheck_all, Fault};
use eegmix_core::matrix::run_matrix;
use eegmix_core::stats::welch_t_test;
use eegmix_core::train::{evaluate, train, TrainConfig};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "eegmix",
    about = "Train and evaluate montage-harmonized EEG classifiers on synthetic data",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory
    Synth {
        /// Number of subjects (labels alternate, so counts stay balanced)
        #[arg(long, default_value_t = SynthConfig::default().subjects)]
        subjects: usize,
        /// Dense montage channel count
        #[arg(long, default_value_t = SynthConfig::default().dense_channels)]
        dense: usize,
        /// Sparse montage channel count (subset of the dense montage)
        #[arg(long, default_value_t = SynthConfig::default().sparse_channels)]
        sparse: usize,
        /// Epochs recorded per subject
        #[arg(long, default_value_t = SynthConfig::default().epochs_per_subject)]
        epochs_per_subject: usize,
        /// Raw generation rate in Hz; preprocessed data is always 128 Hz
        #[arg(long, default_value_t = SynthConfig::default().generation_rate)]
        rate: f64,
        /// Per-channel SNR of the class signal in dB
        #[arg(long, default_value_t = SynthConfig::default().snr_db, allow_negative_numbers = true)]
        snr_db: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify every analytic gradient against finite differences
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train one model from a JSON config
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on a dataset split
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// dense | sparse | mixed; defaults to mixed for attention models,
        /// otherwise the view matching the model input
        #[arg(long)]
        view: Option<String>,
        /// train | validation | test
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Train the full experiment grid over several seeds
    Matrix {
        #[arg(long)]
        config: PathBuf,
        /// Number of seeds (base config seed, incrementing)
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Welch's t-test between two JSON arrays of numbers
    Stats {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn parse_split(s: &str) -> Result<Split> {
    match s {
        "train" => Ok(Split::Train),
        "validation" => Ok(Split::Validation),
        "test" => Ok(Split::Test),
        other => Err(Error::Config(format!("unknown split `{other}`"))),
    }
}

fn load_numbers(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let values: Vec<f64> = serde_json::from_str(&text)?;
    Ok(values)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            subjects,
            dense,
            sparse,
            epochs_per_subject,
            rate,
            snr_db,
            seed,
            out,
        } => {
            let cfg = SynthConfig {
                subjects,
                dense_channels: dense,
                sparse_channels: sparse,
                epochs_per_subject,
                generation_rate: rate,
                snr_db,
                seed,
            };
            let started = std::time::Instant::now();
            let ds = Dataset::generate(&cfg)?;
            ds.save(&out)?;
            log::info!(
                "wrote {} samples ({} subjects x {} epochs, {} dense / {} sparse channels) to {} in {:.1}s",
                ds.sample_count(),
                subjects,
                epochs_per_subject,
                dense,
                sparse,
                out.display(),
                started.elapsed().as_secs_f64()
            );
            Ok(())
        }
        Command::Gradcheck { seed } => {
            let report = gradcheck_all(seed, Fault::None);
            print!("{}", report.render());
            if report.all_pass() {
                Ok(())
            } else {
                Err(Error::Data("gradient check failed".to_string()))
            }
        }
        Command::Train { config, out } => {
            let cfg: TrainConfig = serde_json::from_str(&std::fs::read_to_string(&config)?)?;
            let ds = Dataset::load(Path::new(&cfg.data_dir))?;
            let (model, metrics) = train(&cfg, &ds)?;
            std::fs::create_dir_all(&out)?;
            save_checkpoint(&out.join("model.ckpt"), &model)?;
            write_atomic(
                &out.join("metrics.json"),
                serde_json::to_string_pretty(&metrics)?.as_bytes(),
            )?;
            log::info!(
                "trained {} steps in {:.1}s; metrics and checkpoint in {}",
                metrics.steps,
                metrics.wall_clock_secs,
                out.display()
            );
            println!("{}", serde_json::to_string(&metrics.test_accuracy)?);
            Ok(())
        }
        Command::Eval {
            checkpoint,
            data,
            view,
            split,
        } => {
            let model = load_checkpoint(&checkpoint)?;
            let ds = Dataset::load(&data)?;
            let view = match view {
                Some(v) => View::parse(&v)?,
                None => {
                    if model.attention.is_some() {
                        View::Mixed
                    } else if model.spec.input_channels == ds.dense.len() {
                        View::Dense
                    } else if model.spec.input_channels == ds.sparse.len() {
                        View::Sparse
                    } else {
                        return Err(Error::Config(format!(
                            "no dataset view has {} channels",
                            model.spec.input_channels
                        )));
                    }
                }
            };
            let result = evaluate(&model, &ds, view, parse_split(&split)?)?;
            println!("{}", serde_json::to_string(&result)?);
            Ok(())
        }
        Command::Matrix { config, seeds, out } => {
            if seeds < 2 {
                return Err(Error::Config("matrix needs at least 2 seeds".to_string()));
            }
            let base: TrainConfig = serde_json::from_str(&std::fs::read_to_string(&config)?)?;
            let ds = Dataset::load(Path::new(&base.data_dir))?;
            let seed_list: Vec<u64> = (base.seed..base.seed + seeds).collect();
            let started = std::time::Instant::now();
            let outcome = run_matrix(&base, &ds, &seed_list)?;
            std::fs::create_dir_all(out.join("runs"))?;
            for run in &outcome.runs {
                let name = format!(
                    "{}_{}_seed{}.json",
                    if run.attention { "attn" } else { "noattn" },
                    run.train_view,
                    run.seed
                );
                write_atomic(
                    &out.join("runs").join(name),
                    serde_json::to_string_pretty(run)?.as_bytes(),
                )?;
            }
            write_atomic(
                &out.join("matrix.json"),
                serde_json::to_string_pretty(&outcome.report)?.as_bytes(),
            )?;
            log::info!(
                "matrix of {} runs finished in {:.1}s",
                outcome.runs.len(),
                started.elapsed().as_secs_f64()
            );
            print!("{}", outcome.report.render());
            Ok(())
        }
        Command::Stats { a, b } => {
            let result = welch_t_test(&load_numbers(&a)?, &load_numbers(&b)?)?;
            println!(
                "{}",
                serde_json::json!({ "t": result.t, "p": result.p, "dof": result.dof })
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
