use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use fgp_core::pipeline::{Manifest, Pipeline, PipelineConfig, Stage};
use fgp_core::synth::{write_desk_dataset, DeskSpec};

#[derive(Parser)]
#[command(name = "fgp", version, about = "Fine-grained breed classification pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// CSV with columns path,class,split,x,y,w,h
    #[arg(long)]
    manifest: PathBuf,
    /// key=value config file; omitted keys keep their defaults
    #[arg(long)]
    config: Option<PathBuf>,
    /// Cache directory shared by all stages
    #[arg(long)]
    cache: PathBuf,
    /// Worker threads, 0 = one per core
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Write annotated masks and head detections under <cache>/debug
    #[arg(long)]
    debug_images: bool,
    /// Rebuild stages whose cached fingerprint no longer matches
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// GrabCut foreground masks
    Segment(RunArgs),
    /// Head detection
    Heads(RunArgs),
    /// Visual vocabularies from training descriptors
    Vocab(RunArgs),
    /// Per-image feature vectors
    Extract(RunArgs),
    /// One-vs-all linear SVMs
    Train(RunArgs),
    /// Scores for validation and test images
    Predict(RunArgs),
    /// AP, mAP and confusion on the validation split
    Evaluate(RunArgs),
    /// Ranked tables and confusion heatmap
    Report(RunArgs),
    /// Every stage in order
    All(RunArgs),
    /// Write the synthetic desk dataset
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Print the default configuration
    DefaultConfig,
}

fn run_stages(args: &RunArgs, stage: Option<Stage>) -> anyhow::Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.workers)
        .build()
        .context("building worker pool")?;
    pool.install(|| {
        let config = match &args.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        let manifest = Manifest::load(&args.manifest, config.bbox_policy)?;
        let mut p = Pipeline::new(&manifest, &config, &args.cache);
        p.debug_images = args.debug_images;
        p.force = args.force;
        let summaries = match stage {
            Some(s) => vec![p.run(s)?],
            None => p.run_all()?,
        };
        for s in summaries {
            println!("{s}");
        }
        Ok(())
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (args, stage) = match &cli.command {
        Command::Segment(a) => (a, Some(Stage::Segment)),
        Command::Heads(a) => (a, Some(Stage::Heads)),
        Command::Vocab(a) => (a, Some(Stage::Vocab)),
        Command::Extract(a) => (a, Some(Stage::Extract)),
        Command::Train(a) => (a, Some(Stage::Train)),
        Command::Predict(a) => (a, Some(Stage::Predict)),
        Command::Evaluate(a) => (a, Some(Stage::Evaluate)),
        Command::Report(a) => (a, Some(Stage::Report)),
        Command::All(a) => (a, None),
        Command::Synth { out, seed } => {
            let m = write_desk_dataset(out, &DeskSpec::default(), *seed)?;
            println!("wrote {}", m.display());
            return Ok(());
        }
        Command::DefaultConfig => {
            print!("{}", PipelineConfig::default().to_text());
            return Ok(());
        }
    };
    run_stages(args, stage)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e.downcast_ref::<fgp_core::Error>().map_or("other", |e| e.kind());
            eprintln!("error[{kind}]: {e:#}");
            ExitCode::FAILURE
        }
    }
}
