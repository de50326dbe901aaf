//! `spright` command-line harness.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use spright::analysis::{min_eta, ETA_TABLE};
use spright::experiment::{
    recover, run_scaling_sweep, run_snr_sweep, trial_rng, write_csv, ExperimentConfig, ExperimentError,
};
use spright::frontend::Variant;
use spright::fwht::{fwht, DenseSignal};
use spright::gf2::BitIndex;
use spright::peeling::verify_support;
use spright::signal::{draw_spectrum_with, AmplitudeMode, SparseSpectrum};
use spright::sketch::{analytic_spectrum, cut_value, sketch_recover, Hypergraph, SketchOptions};

/// Marks failures that should exit with status 2.
#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Parser)]
#[command(
    name = "spright",
    version,
    about = "Sparse Walsh-Hadamard transforms from noisy samples"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random K-sparse spectrum.
    Synth(SynthArgs),
    /// Orthonormal WHT of whitespace-separated values.
    Wht(WhtArgs),
    /// Recover one spectrum from noisy samples.
    Recover(RecoverArgs),
    /// Monte-Carlo sweeps written as CSV.
    #[command(subcommand)]
    Bench(Bench),
    /// Density-evolution thresholds eta_min(C).
    DeTable(DeTableArgs),
    /// Learn a hypergraph from cut queries.
    Sketch(SketchArgs),
}

#[derive(Subcommand)]
enum Bench {
    /// Success rate against SNR.
    Snr(SweepArgs),
    /// Success rate, samples and runtime against n.
    Scaling(SweepArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    n: u32,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    /// Magnitudes uniform in [rho/2, 3 rho/2] instead of exactly rho.
    #[arg(long)]
    continuous: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct WhtArgs {
    /// Input file; standard input when absent.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RecoverArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Spectrum file from `synth`; drawn from `--n`, `--k` and `--seed` when absent.
    #[arg(long)]
    spectrum: Option<PathBuf>,
    #[arg(long)]
    n: Option<u32>,
    /// Sparsity used to size the plan; defaults to the true sparsity.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    algo: Option<Variant>,
    #[arg(long, allow_hyphen_values = true, default_value_t = 10.0)]
    snr_db: f64,
    /// Recovered spectrum destination.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON experiment configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    algo: Option<Variant>,
    /// Comma-separated SNR grid; the first value is used by `scaling`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr_db: Vec<f64>,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    n_min: Option<u32>,
    #[arg(long)]
    n_max: Option<u32>,
    /// Comma-separated sparsity list.
    #[arg(long, value_delimiter = ',')]
    k: Vec<usize>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct DeTableArgs {
    #[arg(long, default_value_t = 8)]
    max_c: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

#[derive(Args)]
struct SketchArgs {
    /// Hypergraph file: `n=<n>` then one edge of 1-based vertices per line.
    #[arg(long)]
    graph: PathBuf,
    /// Upper bound on the number of nonzero cut coefficients.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long, default_value_t = 16)]
    max_edge_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn read_to_string(path: Option<&Path>) -> Result<String> {
    match path {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display())),
        None => {
            let mut s = String::new();
            io::stdin().read_to_string(&mut s)?;
            Ok(s)
        }
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(
            fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    let Some(path) = path else {
        return Ok(ExperimentConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| ConfigError(format!("reading {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| ConfigError(format!("parsing {}: {e}", path.display())).into())
}

fn sweep_config(args: &SweepArgs, scaling: bool) -> Result<ExperimentConfig> {
    let mut c = load_config(args.config.as_deref())?;
    if let Some(v) = args.seed {
        c.seed = v;
    }
    if let Some(v) = args.trials {
        c.trials = v;
    }
    if let Some(v) = args.algo {
        c.algorithm = v;
    }
    if let Some(v) = args.n {
        c.n = v;
    }
    if let Some(v) = args.n_min {
        c.n_min = v;
    }
    if let Some(v) = args.n_max {
        c.n_max = v;
    }
    if let Some(v) = args.workers {
        c.workers = v;
    }
    if !args.k.is_empty() {
        c.k.clone_from(&args.k);
    }
    if !args.snr_db.is_empty() {
        if scaling {
            c.scaling_snr_db = args.snr_db[0];
        } else {
            c.snr_db.clone_from(&args.snr_db);
        }
    }
    Ok(c)
}

fn config_error(e: ExperimentError) -> anyhow::Error {
    if e.is_config() {
        ConfigError(e.to_string()).into()
    } else {
        e.into()
    }
}

fn synth(args: SynthArgs) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mode = if args.continuous {
        AmplitudeMode::Continuous
    } else {
        AmplitudeMode::Constellation
    };
    let spectrum =
        draw_spectrum_with(args.n, args.k, args.rho, mode, &mut rng).map_err(|e| ConfigError(e.to_string()))?;
    output(args.out.as_deref())?.write_all(spectrum.to_text().as_bytes())?;
    Ok(())
}

fn wht(args: WhtArgs) -> Result<()> {
    let text = read_to_string(args.input.as_deref())?;
    let values = text
        .split_whitespace()
        .map(|t| t.parse::<f64>().with_context(|| format!("bad number {t:?}")))
        .collect::<Result<Vec<_>>>()?;
    let signal = DenseSignal::new(values)?;
    let mut out = output(args.out.as_deref())?;
    for v in fwht(&signal).values() {
        writeln!(out, "{v}")?;
    }
    Ok(())
}

fn recover_cmd(args: RecoverArgs) -> Result<()> {
    let mut config = load_config(args.config.as_deref())?;
    if let Some(v) = args.algo {
        config.algorithm = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    let mut rng = trial_rng(config.seed, 0);
    let truth = match &args.spectrum {
        Some(p) => SparseSpectrum::from_text(&read_to_string(Some(p))?)?,
        None => {
            let n = args.n.unwrap_or(config.n);
            let k = args.k.or(config.k.first().copied()).unwrap_or(1);
            config.n = n;
            draw_spectrum_with(n, k, config.rho, AmplitudeMode::Constellation, &mut rng)
                .map_err(|e| ConfigError(e.to_string()))?
        }
    };
    config.n = truth.n();
    config.n_min = truth.n();
    config.n_max = truth.n();
    config.validate().map_err(config_error)?;
    let k = args.k.unwrap_or(truth.len()).max(1);
    let result = recover(&config, &truth, k, args.snr_db, &mut rng).map_err(config_error)?;
    let check = verify_support(&result.spectrum, &truth);
    if let Some(p) = &args.out {
        fs::write(p, result.spectrum.to_text())?;
    }
    let summary = json!({
        "algorithm": config.algorithm,
        "n": truth.n(),
        "K": truth.len(),
        "snr_db": args.snr_db,
        "support_equal": check.support_equal,
        "values_equal": check.values_equal,
        "samples": result.samples,
        "nominal_samples": result.nominal_samples,
        "runtime_ns": result.runtime_ns as u64,
        "report": result.report,
    });
    println!("{summary}");
    Ok(())
}

fn bench(cmd: Bench) -> Result<()> {
    match cmd {
        Bench::Snr(args) => {
            let config = sweep_config(&args, false)?;
            let rows = run_snr_sweep(&config).map_err(config_error)?;
            write_csv(&rows, output(args.out.as_deref())?)?;
        }
        Bench::Scaling(args) => {
            let config = sweep_config(&args, true)?;
            let rows = run_scaling_sweep(&config).map_err(config_error)?;
            write_csv(&rows, output(args.out.as_deref())?)?;
        }
    }
    Ok(())
}

fn de_table(args: DeTableArgs) -> Result<()> {
    if args.max_c < 2 || args.tol.is_nan() || args.tol <= 0.0 {
        return Err(ConfigError("need --max-c >= 2 and --tol > 0".into()).into());
    }
    let mut out = io::stdout().lock();
    writeln!(out, "C,eta_min,table")?;
    for c in 2..=args.max_c {
        let eta = min_eta(c, args.tol);
        let table = ETA_TABLE.iter().find(|&&(tc, _)| tc == c).map(|&(_, e)| e);
        match table {
            Some(t) => writeln!(out, "{c},{eta:.6},{t:.4}")?,
            None => writeln!(out, "{c},{eta:.6},")?,
        }
    }
    Ok(())
}

fn sketch(args: SketchArgs) -> Result<()> {
    let graph = Hypergraph::from_text(&read_to_string(Some(&args.graph))?)?;
    let truth = analytic_spectrum(&graph);
    let budget = args.budget.unwrap_or(truth.len()).max(1);
    let n = graph.n();
    let options = SketchOptions {
        max_edge_size: args.max_edge_size,
        seed: args.seed,
        ..SketchOptions::default()
    };
    let oracle = |m: u64| cut_value(&graph, BitIndex::masked(m, n));
    let result = sketch_recover(oracle, n, budget, options)?;
    let exact = result.spectrum == truth;
    let mut want = graph.edges();
    want.sort();
    let edges_match = result.edges.as_ref().map(|e| {
        let mut got = e.clone();
        got.sort();
        got == want
    });
    let summary = json!({
        "n": n,
        "budget": budget,
        "queries": result.queries,
        "groups": result.groups,
        "complete": result.complete,
        "spectrum_exact": exact,
        "edges_match": edges_match,
        "edges": result.edges,
    });
    println!("{summary}");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Wht(a) => wht(a),
        Command::Recover(a) => recover_cmd(a),
        Command::Bench(b) => bench(b),
        Command::DeTable(a) => de_table(a),
        Command::Sketch(a) => sketch(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
