use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use orbitpool::pipeline::{
    cmd_distance, cmd_eval, cmd_extract, cmd_hash, cmd_pool, RunConfig, StageOptions, StageSummary,
};
use orbitpool::retrieval::Metric;
use orbitpool::Error;

#[derive(Parser)]
#[command(name = "orbitpool", version, about = "Orbit moment pooling descriptors and retrieval evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Pooling sequence, overriding the config, e.g. `A:scale,S:trans,M:rot`.
    #[arg(long)]
    sequence: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate orbits and write one FOT1 feature file per image.
    Extract {
        #[command(flatten)]
        common: Common,
        /// Rewrite feature files that already exist.
        #[arg(long)]
        force: bool,
        /// Also write every orbit image as PNG.
        #[arg(long)]
        debug_images: bool,
    },
    /// Pool feature orbits into descriptors.
    Pool {
        #[command(flatten)]
        common: Common,
    },
    /// Binarize descriptors at the database mean into a BHI1 index.
    Hash {
        #[command(flatten)]
        common: Common,
    },
    /// Rank queries and compute a retrieval metric.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = ["map", "recall4x4"])]
        metric: Option<String>,
    },
    /// Pairwise normalized descriptor distances as CSV.
    Distance {
        #[command(flatten)]
        common: Common,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidSequence(_) | Error::InvalidOrbitSpec(_) => 2,
        _ => 1,
    }
}

fn report(summary: &StageSummary) -> u8 {
    for (id, err) in &summary.failed {
        eprintln!("{}: {id}: {err}", summary.stage);
    }
    println!(
        "{}: {} written, {} skipped, {} failed",
        summary.stage,
        summary.written,
        summary.skipped,
        summary.failed.len()
    );
    for path in &summary.outputs {
        println!("  {}", path.display());
    }
    u8::from(!summary.is_success())
}

fn run(cli: Cli) -> Result<u8, Error> {
    let (common, mut opts) = match &cli.command {
        Command::Extract { common, force, debug_images } => {
            (common, StageOptions { force: *force, debug_images: *debug_images, ..StageOptions::default() })
        }
        Command::Pool { common } | Command::Hash { common } | Command::Distance { common } => {
            (common, StageOptions::default())
        }
        Command::Eval { common, metric } => {
            let metric = metric.as_deref().map(str::parse::<Metric>).transpose()?;
            (common, StageOptions { metric, ..StageOptions::default() })
        }
    };
    opts.sequence = common.sequence.clone();
    let mut cfg = RunConfig::load(&common.config)?;
    cfg.apply_env()?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = common.jobs {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Error::Config(e.to_string()))?;

    pool.install(|| match cli.command {
        Command::Extract { .. } => cmd_extract(&cfg, &opts).map(|s| report(&s)),
        Command::Pool { .. } => cmd_pool(&cfg, &opts).map(|s| report(&s)),
        Command::Hash { .. } => cmd_hash(&cfg, &opts).map(|s| report(&s)),
        Command::Eval { .. } => cmd_eval(&cfg, &opts).map(|(s, r)| {
            println!("{} = {:.4}", r.metric, r.value);
            report(&s)
        }),
        Command::Distance { .. } => cmd_distance(&cfg, &opts).map(|s| report(&s)),
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
