use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use hed_core::corpus::{Emotion, SegmentLevel};
use hed_core::hed::{EditTarget, DEFAULT_SWEEP};

use crate::api::{self, AppState};
use crate::config::JobConfig;
use crate::error::ServiceError;
use crate::manifest::RunManifest;
use crate::pipeline::{self, EvalArgs, SweepArgs, SynthArgs};
use crate::workspace::Workspace;

#[derive(Debug, Parser)]
#[command(
    name = "hed",
    version,
    about = "Hierarchical emotion distribution extraction, editing and synthesis"
)]
pub struct Cli {
    /// TOML job configuration.
    #[arg(short, long, global = true, default_value = "hed.toml")]
    pub config: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the intensity extractor(s) on the training split.
    TrainExtractor,
    /// Pick the softmax temperature base on the training segments.
    CalibrateAlpha,
    /// Write a HED file for every utterance.
    ExtractHed,
    /// Train the acoustic model.
    TrainTts,
    /// Synthesize one utterance.
    Synthesize {
        #[arg(long, conflicts_with = "phones")]
        text: Option<String>,
        /// Space-separated phone symbols.
        #[arg(long)]
        phones: Option<String>,
        /// HED JSON file.
        #[arg(long)]
        hed: Option<PathBuf>,
        /// Utterance id or speaker id giving the speaker embedding.
        #[arg(long, conflicts_with = "speaker_embedding")]
        speaker: Option<String>,
        /// JSON array with a speaker embedding.
        #[arg(long)]
        speaker_embedding: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n_ode_steps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep one emotion's intensity on an utterance.
    Sweep {
        #[arg(long)]
        utterance: String,
        #[arg(long, default_value = "utterance")]
        level: SegmentLevel,
        #[arg(long)]
        emotion: Emotion,
        /// `all`, an index `3`, or a half-open span `2..5`.
        #[arg(long, default_value = "all", value_parser = parse_target)]
        target: EditTarget,
        /// Comma-separated intensities.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long)]
        seed: Option<u64>,
        /// Defaults to `<work_dir>/sweeps/<utterance>-<level>-<emotion>`.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Objective metrics on the test split.
    Evaluate {
        /// JSON map utterance id -> embedding of the synthesized version.
        #[arg(long)]
        synth_embeddings: Option<PathBuf>,
    },
    /// CSV tables and plots from the evaluation outputs.
    Report,
    /// Run the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
}

fn parse_target(s: &str) -> Result<EditTarget, String> {
    if s == "all" {
        return Ok(EditTarget::All);
    }
    if let Some((a, b)) = s.split_once("..") {
        let a = a.parse().map_err(|e| format!("{e}"))?;
        let b = b.parse().map_err(|e| format!("{e}"))?;
        return Ok(EditTarget::Span(a, b));
    }
    s.parse()
        .map(EditTarget::Index)
        .map_err(|_| format!("bad target {s:?}"))
}

pub fn run(cli: Cli) -> Result<Option<RunManifest>, ServiceError> {
    let config = JobConfig::load(&cli.config)?;
    let ws = Workspace::open(config)?;
    let manifest = match cli.command {
        Command::TrainExtractor => pipeline::train_extractor(&ws)?,
        Command::CalibrateAlpha => pipeline::calibrate_alpha(&ws)?,
        Command::ExtractHed => pipeline::extract_hed(&ws)?,
        Command::TrainTts => pipeline::train_tts_command(&ws)?,
        Command::Synthesize {
            text,
            phones,
            hed,
            speaker,
            speaker_embedding,
            seed,
            n_ode_steps,
            out,
        } => pipeline::synthesize(
            &ws,
            &SynthArgs {
                text,
                phones,
                hed,
                speaker,
                speaker_embedding,
                seed,
                n_ode_steps,
                out,
            },
        )?,
        Command::Sweep {
            utterance,
            level,
            emotion,
            target,
            values,
            seed,
            out_dir,
        } => {
            let out_dir = out_dir.unwrap_or_else(|| {
                ws.work().join("sweeps").join(format!(
                    "{utterance}-{}-{}",
                    level.name(),
                    emotion.name().to_lowercase()
                ))
            });
            let mut args = SweepArgs::new(&utterance, level, emotion, out_dir);
            args.target = target;
            args.values = values.unwrap_or_else(|| DEFAULT_SWEEP.to_vec());
            args.seed = seed;
            pipeline::sweep(&ws, &args)?
        }
        Command::Evaluate { synth_embeddings } => {
            pipeline::evaluate(&ws, &EvalArgs { synth_embeddings })?
        }
        Command::Report => pipeline::report(&ws)?,
        Command::Serve { addr } => {
            let state = AppState::open(ws)?;
            let rt = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()?;
            rt.block_on(api::serve(state, &addr))?;
            return Ok(None);
        }
    };
    Ok(Some(manifest))
}

/// Parses arguments, runs the command and returns the process exit code.
/// Usage errors exit with 2, failures print error JSON on stderr and exit 1.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(Some(m)) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&m).expect("manifest serializes")
            );
            0
        }
        Ok(None) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            1
        }
    }
}
