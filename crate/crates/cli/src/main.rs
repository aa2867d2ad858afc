//! `deepspectral` command-line front end.
//!
//! Errors print as `error[Code]: message` on stderr with exit code 1.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use deepspectral::descriptors::DescriptorKind;

use commands::Context;
use config::{set, ModeName, RunConfig};

/// An error with a stable machine-readable code outside the library's own.
#[derive(Debug)]
pub struct Coded {
    code: &'static str,
    message: String,
}

impl Coded {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl fmt::Display for Coded {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Coded {}

fn error_code(e: &anyhow::Error) -> &'static str {
    for cause in e.chain() {
        if let Some(c) = cause.downcast_ref::<Coded>() {
            return c.code;
        }
        if let Some(c) = cause.downcast_ref::<deepspectral::Error>() {
            return c.code();
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return "IoError";
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return "JsonError";
        }
    }
    "Error"
}

#[derive(Parser)]
#[command(name = "deepspectral", version, about = "Spectral descriptors and learned correspondence embeddings for triangle meshes")]
struct Cli {
    /// JSON configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker thread cap.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for relative output paths.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Increase log detail (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute per-vertex descriptor fields (written as `<mesh>.<kind>.dsc`).
    Descriptors(DescriptorsCmd),
    /// Compute and store the Laplace-Beltrami spectrum of a mesh.
    Spectrum(SpectrumCmd),
    /// Estimate the intrinsic dimension of descriptor rows.
    IntrinsicDim(IntrinsicDimCmd),
    /// Train a Siamese embedding network on a registered corpus.
    Train(TrainCmd),
    /// Map descriptor fields through a trained network.
    Embed(EmbedCmd),
    /// Nearest-neighbour matching between two shapes.
    Match(MatchCmd),
    /// Pair classification metrics on a registered corpus.
    Eval(EvalCmd),
    /// Generate a registered synthetic corpus.
    SynthCorpus(SynthCmd),
}

#[derive(Args)]
struct SolverFlags {
    /// Eigensolver: auto, dense or lanczos.
    #[arg(long)]
    solver: Option<String>,
    /// Directory for cached spectra and descriptor fields.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Args)]
struct DescriptorsCmd {
    #[arg(required = true)]
    meshes: Vec<PathBuf>,
    #[arg(long, default_value = "hks")]
    kind: DescriptorKind,
    /// GPS components.
    #[arg(long)]
    n: Option<usize>,
    /// HKS time samples.
    #[arg(long)]
    times: Option<usize>,
    /// WKS energy samples.
    #[arg(long)]
    energies: Option<usize>,
    /// Eigenpairs used by HKS or WKS.
    #[arg(long)]
    k_modes: Option<usize>,
    /// WKS bandwidth as a multiple of the energy step.
    #[arg(long)]
    sigma_factor: Option<f64>,
    /// Skip the WKS per-energy normalization.
    #[arg(long)]
    wks_unnormalized: bool,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Args)]
struct SpectrumCmd {
    mesh: PathBuf,
    #[arg(long, default_value_t = 300)]
    modes: usize,
    /// Output LBS1 file (default `<mesh>.lbs`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    eigenvalues_csv: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Args)]
struct IntrinsicDimCmd {
    /// DSC1 descriptor files pooled into one population.
    #[arg(required = true)]
    fields: Vec<PathBuf>,
    /// Rows drawn from the pooled fields.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long = "k")]
    k_neighbors: Option<usize>,
    #[arg(long)]
    variance_threshold: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Residual-variance curves as `trial,component,residual`.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct CorpusFlags {
    /// Manifest of `path subject pose` lines.
    #[arg(long)]
    manifest: PathBuf,
    /// Base directory for manifest paths (default: the manifest's directory).
    #[arg(long)]
    root: Option<PathBuf>,
    /// Vertex indices excluded from sampling and evaluation.
    #[arg(long)]
    mask: Option<PathBuf>,
}

#[derive(Args)]
struct TrainCmd {
    #[command(flatten)]
    corpus: CorpusFlags,
    #[arg(long, default_value = "hks")]
    kind: DescriptorKind,
    /// Held-out manifest for periodic validation metrics.
    #[arg(long)]
    validation_manifest: Option<PathBuf>,
    #[arg(long, default_value = "model.smn")]
    out: PathBuf,
    /// Loss history (default `<out>.loss.csv`).
    #[arg(long)]
    loss_csv: Option<PathBuf>,
    /// Validation history (default `<out>.validation.csv`).
    #[arg(long)]
    validation_csv: Option<PathBuf>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr0: Option<f64>,
    #[arg(long)]
    lr_decay: Option<f64>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    soft_label_max: Option<f64>,
    /// Hidden widths as `H1,H2`.
    #[arg(long, value_parser = parse_pair)]
    hidden: Option<(usize, usize)>,
    #[arg(long)]
    output_dim: Option<usize>,
    /// Feed raw descriptors to the network.
    #[arg(long)]
    no_standardize: bool,
    #[arg(long)]
    validation_every: Option<usize>,
    #[arg(long)]
    validation_pairs: Option<usize>,
    #[arg(long)]
    threshold_on_distance: bool,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Args)]
struct EmbedCmd {
    #[arg(long)]
    model: PathBuf,
    /// DSC1 files; each is written as `<name>.emb.dsc`.
    #[arg(required = true)]
    fields: Vec<PathBuf>,
}

#[derive(Args)]
struct ModelChoice {
    /// Trained SMN1 network.
    #[arg(long, required_unless_present = "raw", conflicts_with = "raw")]
    model: Option<PathBuf>,
    /// Compare raw descriptors without an embedding.
    #[arg(long)]
    raw: bool,
}

#[derive(Args)]
struct MatchCmd {
    #[command(flatten)]
    model: ModelChoice,
    /// Descriptor kind for `--raw`.
    #[arg(long, default_value = "hks")]
    kind: DescriptorKind,
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    /// Source descriptor file (default: sidecar, else computed).
    #[arg(long)]
    source_desc: Option<PathBuf>,
    #[arg(long)]
    target_desc: Option<PathBuf>,
    /// True target vertex per source vertex (default: identity).
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    /// Source vertices excluded from evaluation.
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<ModeName>,
    /// Sampled fraction in accuracy mode.
    #[arg(long)]
    fraction: Option<f64>,
    /// Geodesic tolerance as a fraction of the target diameter.
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    threshold_on_distance: bool,
    /// Report file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// OBJ with both shapes side by side and a line per correct match.
    #[arg(long)]
    export_vis: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Args)]
struct EvalCmd {
    #[command(flatten)]
    model: ModelChoice,
    #[arg(long, default_value = "hks")]
    kind: DescriptorKind,
    #[command(flatten)]
    corpus: CorpusFlags,
    #[arg(long)]
    pairs: Option<usize>,
    #[arg(long)]
    chunk: Option<usize>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    threshold_on_distance: bool,
    /// Metrics as a one-row `lss,tnr,fpr,err` CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Args)]
struct SynthCmd {
    /// Output directory.
    out: PathBuf,
    #[arg(long)]
    subjects: Option<usize>,
    #[arg(long)]
    poses: Option<usize>,
    #[arg(long)]
    held_out: Option<usize>,
    #[arg(long)]
    subdivisions: Option<u32>,
    #[arg(long)]
    subject_spread: Option<f64>,
    #[arg(long)]
    held_out_spread: Option<f64>,
    #[arg(long)]
    max_bend: Option<f64>,
    #[arg(long)]
    max_twist: Option<f64>,
    /// Keep each subject's own surface area.
    #[arg(long)]
    no_preserve_area: bool,
}

fn parse_pair(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `H1,H2`, got `{s}`"))?;
    let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("`{t}`: {e}"));
    Ok((parse(a)?, parse(b)?))
}

fn apply_solver(config: &mut RunConfig, flags: &SolverFlags) {
    set(&mut config.descriptors.solver, flags.solver.clone());
    set(&mut config.descriptors.cache_dir, flags.cache_dir.clone().map(Some));
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    set(&mut config.seed, cli.seed.map(Some));
    set(&mut config.threads, cli.threads.map(Some));
    set(&mut config.out_dir, cli.out_dir.clone().map(Some));
    if cli.verbose > 0 {
        config.verbosity = Some(cli.verbose);
    }
    if let Some(seed) = config.seed {
        config.train.seed = seed;
        config.synth.seed = seed;
    }

    let level = match config.verbosity.unwrap_or(0) {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    if let Some(n) = config.threads {
        if n == 0 {
            return Err(Coded::new("InvalidConfig", "--threads must be positive").into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }

    match cli.command {
        Command::Descriptors(c) => {
            let d = &mut config.descriptors;
            set(&mut d.gps_n, c.n);
            set(&mut d.hks_times, c.times);
            set(&mut d.wks_energies, c.energies);
            set(&mut d.hks_k_modes, c.k_modes);
            set(&mut d.wks_k_modes, c.k_modes);
            set(&mut d.wks_sigma_factor, c.sigma_factor);
            if c.wks_unnormalized {
                d.wks_normalized = false;
            }
            apply_solver(&mut config, &c.solver);
            let args = commands::DescriptorsArgs {
                meshes: c.meshes,
                kind: c.kind,
            };
            commands::descriptors(&context(config), &args)
        }
        Command::Spectrum(c) => {
            apply_solver(&mut config, &c.solver);
            let args = commands::SpectrumArgs {
                mesh: c.mesh,
                modes: c.modes,
                out: c.out,
                eigenvalues_csv: c.eigenvalues_csv,
            };
            commands::spectrum(&context(config), &args)
        }
        Command::IntrinsicDim(c) => {
            let d = &mut config.intrinsic_dim;
            set(&mut d.samples, c.samples);
            set(&mut d.k_neighbors, c.k_neighbors);
            set(&mut d.variance_threshold, c.variance_threshold);
            set(&mut d.trials, c.trials);
            let args = commands::IntrinsicDimArgs {
                fields: c.fields,
                csv: c.csv,
            };
            commands::intrinsic_dim(&context(config), &args)
        }
        Command::Train(c) => {
            let t = &mut config.train;
            set(&mut t.iterations, c.iterations);
            set(&mut t.batch_size, c.batch_size);
            set(&mut t.lr0, c.lr0);
            set(&mut t.lr_decay, c.lr_decay);
            set(&mut t.margin, c.margin);
            set(&mut t.soft_label_max, c.soft_label_max);
            set(&mut t.hidden, c.hidden.map(Some));
            set(&mut t.output_dim, c.output_dim);
            set(&mut t.validation_every, c.validation_every);
            set(&mut t.validation_pairs, c.validation_pairs);
            if c.no_standardize {
                t.standardize = false;
            }
            if c.threshold_on_distance {
                t.threshold_on_distance = true;
            }
            apply_solver(&mut config, &c.solver);
            let args = commands::TrainArgs {
                manifest: c.corpus.manifest,
                root: c.corpus.root,
                mask: c.corpus.mask,
                kind: c.kind,
                validation_manifest: c.validation_manifest,
                out: c.out,
                loss_csv: c.loss_csv,
                validation_csv: c.validation_csv,
            };
            commands::train(&context(config), &args)
        }
        Command::Embed(c) => {
            let args = commands::EmbedArgs {
                model: c.model,
                fields: c.fields,
            };
            commands::embed(&context(config), &args)
        }
        Command::Match(c) => {
            let m = &mut config.matching;
            set(&mut m.mode, c.mode);
            set(&mut m.fraction, c.fraction);
            set(&mut m.tolerance, c.tolerance);
            set(&mut m.margin, c.margin);
            if c.threshold_on_distance {
                m.threshold_on_distance = true;
            }
            apply_solver(&mut config, &c.solver);
            let args = commands::MatchArgs {
                model: c.model.model,
                kind: c.kind,
                source: c.source,
                target: c.target,
                source_desc: c.source_desc,
                target_desc: c.target_desc,
                ground_truth: c.ground_truth,
                mask: c.mask,
                out: c.out,
                export_vis: c.export_vis,
            };
            commands::matching(&context(config), &args)
        }
        Command::Eval(c) => {
            let e = &mut config.eval;
            set(&mut e.pairs, c.pairs);
            set(&mut e.chunk, c.chunk);
            set(&mut e.margin, c.margin);
            if c.threshold_on_distance {
                e.threshold_on_distance = true;
            }
            apply_solver(&mut config, &c.solver);
            let args = commands::EvalArgs {
                model: c.model.model,
                kind: c.kind,
                manifest: c.corpus.manifest,
                root: c.corpus.root,
                mask: c.corpus.mask,
                csv: c.csv,
            };
            commands::eval(&context(config), &args)
        }
        Command::SynthCorpus(c) => {
            let s = &mut config.synth;
            set(&mut s.subjects, c.subjects);
            set(&mut s.poses, c.poses);
            set(&mut s.held_out_subjects, c.held_out);
            set(&mut s.subdivisions, c.subdivisions);
            set(&mut s.subject_spread, c.subject_spread);
            set(&mut s.held_out_spread, c.held_out_spread);
            set(&mut s.max_bend, c.max_bend);
            set(&mut s.max_twist, c.max_twist);
            if c.no_preserve_area {
                s.preserve_area = false;
            }
            commands::synth_corpus(&context(config), &commands::SynthArgs { out: c.out })
        }
    }
}

fn context(config: RunConfig) -> Context {
    Context {
        seed: config.seed.unwrap_or(0),
        out_dir: config.out_dir.clone(),
        config,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e:#}", error_code(&e));
            ExitCode::FAILURE
        }
    }
}
