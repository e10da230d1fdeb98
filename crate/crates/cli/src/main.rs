//! `eve`: encode videos, train the caption model, caption, evaluate, and
//! generate synthetic data.
//!
//! Exit status: 0 on success, 2 for bad input or configuration, 3 for an
//! internal error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use eve_core::config::PipelineConfig;
use eve_core::pipeline::{caption_dir, encode_to_dir, eval_files, train_from_dir, EncodeInputs, FINAL_CHECKPOINT};
use eve_core::synth::{generate, SynthConfig};
use eve_core::Error;

#[derive(Parser)]
#[command(name = "eve", version, about = "Enriched visual encoding and GRU captioning pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Pipeline configuration (key = value lines); omitted keys use defaults
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct Workers {
    /// Worker threads; 0 uses every logical core
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Fuse activations, detections and actions into one code per video
    Encode {
        /// Directory of <video_id>.tensor files from the 2D network
        #[arg(long = "activations-2d", value_name = "DIR")]
        activations_2d: PathBuf,
        /// Directory of <video_id>.tensor files from the 3D network
        #[arg(long = "activations-3d", value_name = "DIR")]
        activations_3d: PathBuf,
        /// Detections, JSON Lines, one frame per line
        #[arg(long, value_name = "FILE")]
        detections: PathBuf,
        /// Action distributions, JSON Lines; without it the action code is left out
        #[arg(long, value_name = "FILE")]
        actions: Option<PathBuf>,
        /// Dictionary, one token per line, reserved tokens first
        #[arg(long, value_name = "FILE")]
        dict: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
        /// Output directory for <video_id>.code files and manifest.json
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[command(flatten)]
        workers: Workers,
    },
    /// Train the language model; writes a checkpoint per epoch and loss.csv
    Train {
        /// Directory written by `encode`
        #[arg(long, value_name = "DIR")]
        codes: PathBuf,
        /// Reference captions, JSON Lines
        #[arg(long, value_name = "FILE")]
        corpus: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
        /// Output directory for checkpoints and the loss log
        #[arg(long = "ckpt-out", value_name = "DIR")]
        ckpt_out: PathBuf,
        #[command(flatten)]
        workers: Workers,
    },
    /// Caption every code in a directory (beam width from the config)
    Caption {
        /// Model checkpoint
        #[arg(long, value_name = "FILE")]
        ckpt: PathBuf,
        /// Directory written by `encode`
        #[arg(long, value_name = "DIR")]
        codes: PathBuf,
        /// Predictions, JSON Lines
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        workers: Workers,
    },
    /// Score predictions against references; prints BLEU-4, ROUGE-L and CIDEr-D as JSON
    Eval {
        /// Predictions, JSON Lines of {"video_id", "caption"}
        #[arg(long, value_name = "FILE")]
        pred: PathBuf,
        /// References, JSON Lines of {"video_id", "captions"}
        #[arg(long, value_name = "FILE")]
        refs: PathBuf,
        /// Also write the scores here
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic dataset
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Number of videos
        #[arg(long, default_value_t = 20)]
        videos: usize,
    },
}

fn load_config(arg: &ConfigArg) -> eve_core::Result<PipelineConfig> {
    match &arg.config {
        Some(path) => PipelineConfig::read(path),
        None => Ok(PipelineConfig::default()),
    }
}

fn set_workers(w: &Workers) -> eve_core::Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(w.workers)
        .build_global()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))
}

fn write_file(path: &Path, body: &str) -> eve_core::Result<()> {
    fs::write(path, body).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })
}

fn run(cli: Cli) -> eve_core::Result<()> {
    match cli.command {
        Command::Encode {
            activations_2d,
            activations_3d,
            detections,
            actions,
            dict,
            config,
            out,
            workers,
        } => {
            set_workers(&workers)?;
            let cfg = load_config(&config)?;
            let inputs = EncodeInputs {
                activations_2d,
                activations_3d,
                detections,
                actions,
                dictionary: dict,
            };
            let m = encode_to_dir(&inputs, &cfg, &out)?;
            eprintln!(
                "encoded {} videos: d = {}, {} object labels, {} action labels -> {}",
                m.videos.len(),
                m.d,
                m.object_labels.len(),
                m.action_labels.len(),
                out.display()
            );
        }
        Command::Train {
            codes,
            corpus,
            config,
            ckpt_out,
            workers,
        } => {
            set_workers(&workers)?;
            let cfg = load_config(&config)?;
            let reports = train_from_dir(&codes, &corpus, &cfg, &ckpt_out)?;
            for r in &reports {
                eprintln!("epoch {:>3}  loss {:.6}  ({} batches)", r.epoch, r.loss, r.batches);
            }
            eprintln!("checkpoint: {}", ckpt_out.join(FINAL_CHECKPOINT).display());
        }
        Command::Caption {
            ckpt,
            codes,
            out,
            config,
            workers,
        } => {
            set_workers(&workers)?;
            let cfg = load_config(&config)?;
            let preds = caption_dir(&ckpt, &codes, cfg.beam, &out)?;
            eprintln!("captioned {} videos -> {}", preds.len(), out.display());
        }
        Command::Eval { pred, refs, out } => {
            let scores = eval_files(&pred, &refs)?;
            let json = serde_json::to_string(&scores).expect("scores serialize");
            println!("{json}");
            if let Some(out) = out {
                write_file(&out, &format!("{json}\n"))?;
            }
        }
        Command::Synth { seed, out, videos } => {
            let cfg = SynthConfig {
                seed,
                n_videos: videos,
                ..SynthConfig::default()
            };
            let m = generate(&cfg, &out)?;
            eprintln!("wrote {} synthetic videos -> {}", m.videos.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 3 })
        }
    }
}
