//! `wgpt`: featurize → tokenize → train → eval → sample → compare.
//!
//! Exit status is 0 on success, 1 when an input or configuration is
//! invalid and 2 when a run fails for any other reason.

mod commands;
mod config;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wgpt_core::evaluation::SamplerConfig;
use wgpt_core::model::Variant;
use wgpt_core::synth::Profile;
use wgpt_core::Error;

use commands::Split;
use pipeline::{FeaturizeOptions, TokenizeOptions};

#[derive(Parser)]
#[command(
    name = "wgpt",
    version,
    about = "Hybrid spectrogram + acoustic-token language models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Causal log-mel features for every WAV in a directory.
    Featurize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Normalization statistics to apply, or to write with --fit-stats.
        #[arg(long)]
        stats: Option<PathBuf>,
        #[arg(long)]
        fit_stats: bool,
    },
    /// Quantize mel files to token files with a k-means codebook.
    Tokenize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        codebook: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        train_codebook: bool,
        #[arg(long, default_value_t = 1024)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write a training manifest pairing tokens with their mels.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Continue from an epoch-end checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Only write the freshly initialized checkpoint.
        #[arg(long)]
        init_only: bool,
    },
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "val")]
        split: Split,
        /// Metrics CSV destination (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Continue a token prompt with a token-only model.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        prompt: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
        #[arg(long)]
        top_k: Option<usize>,
        /// Number of tokens to generate.
        #[arg(long, default_value_t = 750)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parameter breakdown of a config or preset.
    Params {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_parser = parse_variant)]
        variant: Option<Variant>,
    },
    /// Train every compared model under several seeds and report.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 3)]
        seeds: usize,
    },
    /// Write a synthetic corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_profile)]
        profile: Profile,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    match s.to_ascii_uppercase().replace('-', "_").as_str() {
        "GPT_S" => Ok(Variant::GptS),
        "GPT_L" => Ok(Variant::GptL),
        "HYBRID" => Ok(Variant::Hybrid),
        _ => Err(format!("unknown variant {s:?}; expected GPT_S, GPT_L or HYBRID")),
    }
}

fn parse_profile(s: &str) -> Result<Profile, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Featurize {
            input,
            out,
            stats,
            fit_stats,
        } => {
            let s = pipeline::featurize(&FeaturizeOptions {
                input: &input,
                output: &out,
                stats: stats.as_deref(),
                fit_stats,
            })?;
            println!(
                "featurize: {} written, {} up to date, {} failed",
                s.written, s.skipped, s.failed
            );
            if s.failed > 0 {
                anyhow::bail!("{} file(s) could not be featurized", s.failed);
            }
            Ok(())
        }
        Command::Tokenize {
            input,
            codebook,
            out,
            train_codebook,
            k,
            seed,
            manifest,
        } => {
            let n = pipeline::tokenize(&TokenizeOptions {
                input: &input,
                codebook: &codebook,
                output: &out,
                train_codebook,
                k,
                seed,
                manifest: manifest.as_deref(),
            })?;
            println!("tokenize: {n} token files in {}", out.display());
            Ok(())
        }
        Command::Train {
            config,
            resume,
            init_only,
        } => commands::train(&config, resume.as_deref(), init_only),
        Command::Eval {
            checkpoint,
            manifest,
            split,
            out,
        } => commands::eval(&checkpoint, &manifest, split, out.as_deref()),
        Command::Sample {
            checkpoint,
            prompt,
            temperature,
            top_k,
            n,
            seed,
            out,
        } => {
            let sc = SamplerConfig {
                temperature,
                top_k: top_k.unwrap_or(usize::MAX),
                max_new_tokens: n,
                seed,
            };
            commands::sample_cmd(&checkpoint, &prompt, sc, &out)
        }
        Command::Params { config, variant } => commands::params(config.as_deref(), variant),
        Command::Compare { config, seeds } => commands::compare(&config, seeds),
        Command::Synth { out, profile, n, seed } => commands::synth(&out, profile, n, seed),
    }
}

/// 1 for invalid input or configuration, 2 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(mut e) = cause.downcast_ref::<Error>() {
            while let Error::File { source, .. } = e {
                e = source;
            }
            return match e {
                Error::Io(_) | Error::NonFinite(_) | Error::BackwardTwice | Error::StateCorruption(_) => 2,
                _ => 1,
            };
        }
    }
    2
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status.
fn run_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Some(n) = std::env::var("WGPT_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("could not cap worker threads: {e}");
        }
    }
    ExitCode::from(run_args(std::env::args_os()))
}

#[cfg(test)]
mod tests;
