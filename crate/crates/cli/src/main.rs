//! `snack`: build kernels, sample triplets, embed, evaluate and serve.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use snack_core::{EmbedConfig, Lambda};

#[derive(Debug, Parser)]
#[command(name = "snack", version, about = "Concept embeddings from a machine kernel plus triplet constraints")]
struct Cli {
    /// Worker threads for the numeric kernels (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a distance kernel.
    #[command(subcommand)]
    Kernel(KernelCmd),
    /// Optimize an embedding of a kernel, optionally with triplets.
    Embed(EmbedCmd),
    /// Produce triplets from labels or selection screens.
    #[command(subcommand)]
    Sample(SampleCmd),
    /// Score embeddings and protocols.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Run the HTTP session service.
    Serve(ServeCmd),
}

#[derive(Debug, Subcommand)]
enum KernelCmd {
    /// Euclidean distances between feature rows.
    Euclidean {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value = "kernel.csv")]
        out: PathBuf,
    },
    /// Maximum-weight assignment distances between token lists.
    Assignment {
        /// `id,tok1;tok2;…` rows.
        #[arg(long)]
        tokens: PathBuf,
        /// Whitespace-separated `token v1 … vE` lines.
        #[arg(long)]
        vectors: PathBuf,
        #[arg(long, default_value = "kernel.csv")]
        out: PathBuf,
    },
}

/// Optimizer settings shared by every command that embeds.
#[derive(Debug, Clone, Args)]
struct EmbedArgs {
    /// Mixing weight in [0, 1] or `auto`; defaults to `auto` with triplets, 0 without.
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 30.0)]
    perplexity: f64,
    #[arg(long, default_value_t = 2)]
    dims: usize,
    #[arg(long, default_value_t = 300)]
    iters: usize,
    #[arg(long, default_value_t = 100)]
    exaggeration_iters: usize,
    #[arg(long, default_value_t = 4.0)]
    exaggeration_factor: f64,
    #[arg(long, default_value_t = 200.0)]
    learning_rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl EmbedArgs {
    fn config(&self, lambda: Lambda) -> EmbedConfig {
        EmbedConfig {
            lambda,
            alpha: self.alpha,
            perplexity: self.perplexity,
            dims: self.dims,
            total_iters: self.iters,
            exaggeration_iters: self.exaggeration_iters,
            exaggeration_factor: self.exaggeration_factor,
            learning_rate: self.learning_rate,
            seed: self.seed,
            ..EmbedConfig::default()
        }
    }
}

#[derive(Debug, Args)]
struct EmbedCmd {
    #[arg(long)]
    kernel: PathBuf,
    #[arg(long)]
    triplets: Option<PathBuf>,
    #[command(flatten)]
    embed: EmbedArgs,
    #[arg(long, default_value = "embedding.csv")]
    out: PathBuf,
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum SampleCmd {
    /// All label triplets among the first `n` objects.
    Labels {
        /// `id,label` rows; row order is the reveal order unless `--ids` is given.
        #[arg(long)]
        labels: PathBuf,
        /// Take the object order from this kernel, features or embedding file.
        #[arg(long)]
        ids: Option<PathBuf>,
        #[arg(long)]
        n: usize,
        /// Uniform subsample size.
        #[arg(long)]
        cap: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "triplets.csv")]
        out: PathBuf,
    },
    /// Expand a JSON log of selection screens.
    Screens {
        /// JSON array of `{"reference", "selected", "shown"}` screens.
        #[arg(long)]
        log: PathBuf,
        /// Validate ids against this kernel, features or embedding file.
        #[arg(long)]
        ids: Option<PathBuf>,
        #[arg(long, default_value = "triplets.csv")]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum EvalCmd {
    /// Fraction of triplets an embedding violates.
    TripletError {
        #[arg(long)]
        embedding: PathBuf,
        #[arg(long)]
        triplets: PathBuf,
    },
    /// Labeling accuracy against the number of revealed labels.
    Labeling {
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Comma-separated revealed-label counts.
        #[arg(long, value_delimiter = ',', default_value = "0,10,50,200")]
        n_grid: Vec<usize>,
        /// Runs per grid point.
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        #[arg(long)]
        cap: Option<usize>,
        #[arg(long, default_value_t = 10)]
        restarts: usize,
        /// Reveal labels in file order instead of a seeded shuffle.
        #[arg(long)]
        in_order: bool,
        #[command(flatten)]
        embed: EmbedArgs,
        /// Curve CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Held-out triplet error for each λ on a grid.
    LambdaSweep {
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long)]
        triplets: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.3,0.5,0.7,0.9")]
        grid: Vec<f64>,
        /// Fraction of triplets held out.
        #[arg(long, default_value_t = 0.2)]
        holdout: f64,
        #[command(flatten)]
        embed: EmbedArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct ServeCmd {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Features for a Euclidean kernel.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Precomputed kernel; takes precedence over `--features`.
    #[arg(long)]
    kernel: Option<PathBuf>,
    /// Directory of static assets served at `/`.
    #[arg(long)]
    static_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let mut stdout = std::io::stdout().lock();
    match commands::run(cli.command, &mut stdout) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
