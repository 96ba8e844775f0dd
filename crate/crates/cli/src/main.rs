use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use citemap::pipeline::{
    run_pipeline, run_stage, PipelineConfig, PipelineError, Stage, StageOutcome,
};

/// Citation-importance embeddings and science maps, one stage at a time.
#[derive(Debug, Parser)]
#[command(name = "citemap", version)]
struct Cli {
    /// TOML pipeline configuration. Relative paths inside it are resolved
    /// against its directory. Without it, defaults apply relative to the
    /// current directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Treat corpus warnings as errors and reject unknown record fields.
    #[arg(long, global = true)]
    strict: bool,
    /// Only log errors. Stage results still go to stdout.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic corpus at `paths.corpus`.
    Synth,
    /// Entropy weights and per-citation importance scores.
    Score,
    /// Importance-aware triplets, split into train and validation sets.
    Sample,
    /// Train the projection head on the training triplets.
    Train,
    /// Embed every corpus document with the trained model.
    Embed,
    /// k-NN similarity graph and citation graph.
    Graph,
    /// Structural statistics against a density-matched random graph.
    Stats,
    /// Edge overlap between the k-NN, citation and random graphs.
    Overlap,
    /// Leiden communities at `cluster.resolution`.
    Cluster,
    /// Clustering accuracy over `cluster.resolutions`, trained vs base.
    Accuracy,
    /// Topic map table and SVG.
    Map,
    /// Ranking metrics, triplet satisfaction and label classification.
    Eval,
    /// Grid over margins and hard-negative counts.
    Sweep {
        /// Comma-separated margins, replacing `sweep.margins`.
        #[arg(long, value_delimiter = ',')]
        margins: Option<Vec<f64>>,
        /// Comma-separated hard-negative counts, replacing `sweep.h_values`.
        #[arg(long = "h", value_delimiter = ',')]
        h_values: Option<Vec<usize>>,
    },
    /// Run score through eval in order, skipping up-to-date stages.
    Run,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.set_seed(s);
    }
    if cli.strict {
        cfg.strict = true;
    }
    if let Command::Sweep { margins, h_values } = &cli.command {
        if let Some(m) = margins {
            cfg.sweep.margins.clone_from(m);
        }
        if let Some(h) = h_values {
            cfg.sweep.h_values.clone_from(h);
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report(o: &StageOutcome) {
    let names: Vec<String> = o.outputs.iter().map(|p| p.display().to_string()).collect();
    if o.skipped {
        println!("{}: up to date", o.stage);
    } else {
        println!("{}: wrote {}", o.stage, names.join(", "));
    }
}

fn execute(cli: &Cli) -> Result<(), PipelineError> {
    let cfg = load_config(cli)?;
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| PipelineError::Config(format!("--threads: {e}")))?;
    }
    let stage = match &cli.command {
        Command::Run => {
            for o in run_pipeline(&cfg)? {
                report(&o);
            }
            return Ok(());
        }
        Command::Synth => Stage::Synth,
        Command::Score => Stage::Score,
        Command::Sample => Stage::Sample,
        Command::Train => Stage::Train,
        Command::Embed => Stage::Embed,
        Command::Graph => Stage::Graph,
        Command::Stats => Stage::Stats,
        Command::Overlap => Stage::Overlap,
        Command::Cluster => Stage::Cluster,
        Command::Accuracy => Stage::Accuracy,
        Command::Map => Stage::Map,
        Command::Eval => Stage::Eval,
        Command::Sweep { .. } => Stage::Sweep,
    };
    report(&run_stage(stage, &cfg)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.quiet {
        "error"
    } else {
        "info"
    }))
    .format_timestamp(None)
    .init();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
