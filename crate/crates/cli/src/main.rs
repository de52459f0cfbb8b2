//! `ne`: command-line front end for the neighbor-embedding engine.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical
//! divergence.

mod commands;
mod data;
mod manifest;
mod settings;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use settings::Settings;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Diverged(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Diverged(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Diverged(m) => write!(f, "diverged: {m}"),
        }
    }
}

impl From<ne_core::Error> for CliError {
    fn from(e: ne_core::Error) -> Self {
        use ne_core::Error as E;
        match &e {
            E::Diverged { .. } => CliError::Diverged(e.to_string()),
            E::InvalidInput(_) | E::EtaTooLarge { .. } => CliError::Usage(e.to_string()),
            E::Io(io) if io.kind() == std::io::ErrorKind::NotFound => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "ne",
    version,
    about = "Neighbor embeddings on the attraction-repulsion spectrum"
)]
struct Cli {
    /// Log progress (repeat for more detail). RUST_LOG takes precedence.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Embed a dataset with one method.
    Embed(EmbedArgs),
    /// Run t-SNE over a grid of exaggeration values and score each layout.
    Sweep(SweepArgs),
    /// Estimate the effective repulsion of negative-sampling UMAP by size.
    MatchGamma(MatchGammaArgs),
    /// Score an existing layout: kNN recall and distance correlation.
    Metrics(MetricsArgs),
    /// Generate the Gaussian-chain toy dataset.
    Gen(GenArgs),
}

/// Dataset selection shared by the data-consuming commands.
#[derive(Args, Debug, Default)]
struct DataFlags {
    /// Input matrix (csv, raw-f32 or IDX).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Input format; guessed from the file name when absent.
    #[arg(long)]
    input_format: Option<String>,
    /// Reduce the input to this many principal components first.
    #[arg(long)]
    pca: Option<usize>,
    /// Integer labels (IDX or one per line), used to color plots.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// `key = value` config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Method hyperparameters; every one may also come from the config file.
#[derive(Args, Debug, Default)]
struct PipelineFlags {
    /// tsne, umap-ns, umap-bh, fa2 or le.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    perplexity: Option<f64>,
    /// Neighbors per point.
    #[arg(long)]
    k: Option<usize>,
    /// gaussian-perplexity or binary-knn.
    #[arg(long)]
    affinity: Option<String>,
    /// auto, exact or vp-tree.
    #[arg(long)]
    knn: Option<String>,
    /// Exaggeration.
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    early_exaggeration: Option<bool>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Iterations, or epochs for negative sampling.
    #[arg(long, alias = "epochs")]
    iters: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Negative samples per positive edge.
    #[arg(long)]
    nu: Option<usize>,
    /// Barnes-Hut opening threshold; 0 is exact.
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    edge_repulsion: Option<bool>,
    /// pca, random, or a 2-column embedding file.
    #[arg(long)]
    init: Option<String>,
    /// Scale the initialization to this standard deviation.
    #[arg(long)]
    init_std: Option<f64>,
    /// Scale the initialization to the range `lo,hi`.
    #[arg(long)]
    init_range: Option<String>,
    /// Eigenvectors to compute for Laplacian eigenmaps.
    #[arg(long)]
    components: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct EmbedArgs {
    #[command(flatten)]
    data: DataFlags,
    #[command(flatten)]
    pipeline: PipelineFlags,
    /// Re-run the settings recorded in a manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// csv or raw-f32.
    #[arg(long)]
    output_format: Option<String>,
    /// Also write a scatter plot.
    #[arg(long)]
    svg: Option<bool>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    data: DataFlags,
    #[command(flatten)]
    pipeline: PipelineFlags,
    /// Comma-separated exaggeration values; defaults to 52 log-spaced
    /// values in [1, 100] including 4 and 30.
    #[arg(long)]
    rhos: Option<String>,
    /// Reference layout file for distance correlation.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Method run on the same data to produce the reference layout.
    #[arg(long)]
    reference_method: Option<String>,
    #[arg(long)]
    recall_k: Option<usize>,
    #[arg(long)]
    recall_samples: Option<usize>,
    #[arg(long)]
    dcor_samples: Option<usize>,
}

#[derive(Args, Debug)]
struct MatchGammaArgs {
    #[command(flatten)]
    data: DataFlags,
    /// Comma-separated subset sizes, ascending.
    #[arg(long)]
    sizes: Option<String>,
    /// Largest gamma in the log-spaced grid.
    #[arg(long)]
    gamma_hi: Option<f64>,
    /// Smallest gamma in the grid.
    #[arg(long)]
    gamma_lo: Option<f64>,
    #[arg(long)]
    gamma_count: Option<usize>,
    /// Neighbors for the binary kNN graph.
    #[arg(long)]
    k: Option<usize>,
    /// Negative samples per edge in the reference runs.
    #[arg(long)]
    nu: Option<usize>,
    /// Epochs of the negative-sampling reference.
    #[arg(long)]
    epochs: Option<usize>,
    /// Iterations of each full-gradient grid run.
    #[arg(long)]
    iters: Option<usize>,
    /// Use full-gradient UMAP at this gamma as the reference instead.
    #[arg(long)]
    reference_gamma: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct MetricsArgs {
    #[command(flatten)]
    data: DataFlags,
    /// Layout to score, two columns.
    #[arg(long)]
    embedding: Option<PathBuf>,
    /// Second layout for distance correlation.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Perplexity of the high-dimensional affinities recall is measured on.
    #[arg(long)]
    perplexity: Option<f64>,
    #[arg(long)]
    affinity: Option<String>,
    #[arg(long)]
    knn: Option<String>,
    #[arg(long)]
    recall_k: Option<usize>,
    #[arg(long)]
    recall_samples: Option<usize>,
    #[arg(long)]
    dcor_samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long)]
    clusters: Option<usize>,
    /// Points per cluster.
    #[arg(long)]
    per: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    /// Distance between consecutive cluster means along the first axis.
    #[arg(long)]
    spacing: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output matrix; `.csv` or `.f32`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where to write the labels; defaults to `<out>.labels.txt`.
    #[arg(long)]
    labels_out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn path_str(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

impl DataFlags {
    fn settings(&self) -> Settings {
        let mut s = Settings::new();
        s.set_opt("input", path_str(&self.input));
        s.set_opt("input-format", self.input_format.clone());
        s.set_opt("pca", self.pca);
        s.set_opt("labels", path_str(&self.labels));
        s.set_opt("out", path_str(&self.out));
        s
    }
}

impl PipelineFlags {
    fn settings(&self) -> Settings {
        let mut s = Settings::new();
        s.set_opt("method", self.method.clone());
        s.set_opt("perplexity", self.perplexity);
        s.set_opt("k", self.k);
        s.set_opt("affinity", self.affinity.clone());
        s.set_opt("knn", self.knn.clone());
        s.set_opt("rho", self.rho);
        s.set_opt("early-exaggeration", self.early_exaggeration);
        s.set_opt("learning-rate", self.learning_rate);
        s.set_opt("iters", self.iters);
        s.set_opt("gamma", self.gamma);
        s.set_opt("epsilon", self.epsilon);
        s.set_opt("nu", self.nu);
        s.set_opt("theta", self.theta);
        s.set_opt("edge-repulsion", self.edge_repulsion);
        s.set_opt("init", self.init.clone());
        s.set_opt("init-std", self.init_std);
        s.set_opt("init-range", self.init_range.clone());
        s.set_opt("components", self.components);
        s.set_opt("seed", self.seed);
        s
    }
}

/// Config file (if any) overlaid by `flags`.
fn layered(config: &Option<PathBuf>, flags: Settings) -> Result<Settings, CliError> {
    let file = match config {
        Some(p) => Settings::load(p)?,
        None => Settings::new(),
    };
    Ok(file.overlay(&flags))
}

fn configure_threads() -> Result<(), CliError> {
    let Some(v) = std::env::var_os("NE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .to_str()
        .and_then(|s| s.trim().parse().ok())
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            CliError::Usage(format!("NE_THREADS must be a positive integer, got {v:?}"))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size the thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Embed(a) => {
            let mut flags = a.data.settings().overlay(&a.pipeline.settings());
            flags.set_opt("output-format", a.output_format);
            flags.set_opt("svg", a.svg);
            let base = layered(&a.data.config, Settings::new())?;
            let base = match &a.manifest {
                Some(p) => base.overlay(&manifest::RunManifest::load(p)?.settings()),
                None => base,
            };
            commands::embed(&base.overlay(&flags))
        }
        Command::Sweep(a) => {
            let mut flags = a.data.settings().overlay(&a.pipeline.settings());
            flags.set_opt("rhos", a.rhos);
            flags.set_opt("reference", path_str(&a.reference));
            flags.set_opt("reference-method", a.reference_method);
            flags.set_opt("recall-k", a.recall_k);
            flags.set_opt("recall-samples", a.recall_samples);
            flags.set_opt("dcor-samples", a.dcor_samples);
            commands::sweep(&layered(&a.data.config, flags)?)
        }
        Command::MatchGamma(a) => {
            let mut flags = a.data.settings();
            flags.set_opt("sizes", a.sizes);
            flags.set_opt("gamma-hi", a.gamma_hi);
            flags.set_opt("gamma-lo", a.gamma_lo);
            flags.set_opt("gamma-count", a.gamma_count);
            flags.set_opt("k", a.k);
            flags.set_opt("nu", a.nu);
            flags.set_opt("epochs", a.epochs);
            flags.set_opt("iters", a.iters);
            flags.set_opt("reference-gamma", a.reference_gamma);
            flags.set_opt("theta", a.theta);
            flags.set_opt("seed", a.seed);
            commands::match_gamma(&layered(&a.data.config, flags)?)
        }
        Command::Metrics(a) => {
            let mut flags = a.data.settings();
            flags.set_opt("embedding", path_str(&a.embedding));
            flags.set_opt("reference", path_str(&a.reference));
            flags.set_opt("perplexity", a.perplexity);
            flags.set_opt("affinity", a.affinity);
            flags.set_opt("knn", a.knn);
            flags.set_opt("recall-k", a.recall_k);
            flags.set_opt("recall-samples", a.recall_samples);
            flags.set_opt("dcor-samples", a.dcor_samples);
            flags.set_opt("seed", a.seed);
            commands::metrics(&layered(&a.data.config, flags)?)
        }
        Command::Gen(a) => {
            let mut flags = Settings::new();
            flags.set_opt("clusters", a.clusters);
            flags.set_opt("per", a.per);
            flags.set_opt("dim", a.dim);
            flags.set_opt("spacing", a.spacing);
            flags.set_opt("seed", a.seed);
            flags.set_opt("out", path_str(&a.out));
            flags.set_opt("labels-out", path_str(&a.labels_out));
            commands::gen(&layered(&a.config, flags)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        // Help and version exit 0, parse errors exit 2.
        Err(e) => e.exit(),
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ne: {e}");
            ExitCode::from(e.code())
        }
    }
}
