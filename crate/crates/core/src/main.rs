use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use diffmap::atoms::{AtomTemplate, AtomicityConfig};
use diffmap::harness::{self, ConstraintSpec, ExperimentSpec, SweepConfig};
use diffmap::io::{read_pgf, write_pgm};
use diffmap::synth::{self, ClusterSpec};
use diffmap::{Grid, Result};

#[derive(Parser)]
#[command(name = "diffmap", version, about = "Phase retrieval with the difference map")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic object (PGF plus a JSON sidecar).
    Gen(GenArgs),
    /// Run an experiment over one or more seeds.
    Run(RunArgs),
    /// Success fraction versus beta.
    Sweep(SweepArgs),
    /// Attractor section for data fabricated from two binary sequences.
    Portrait(PortraitArgs),
    /// Optimal atom widths and sampling errors.
    Table1 {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert a 2-d PGF file to an 8-bit PGM image.
    ExportPgm { input: PathBuf, output: PathBuf },
}

#[derive(Args)]
struct GenArgs {
    /// disk, atoms, clustered or binary
    #[arg(long, default_value = "disk")]
    kind: String,
    #[arg(long, default_value = "64x64")]
    extents: String,
    #[arg(long)]
    diameter: Option<f64>,
    #[arg(long, default_value_t = 60)]
    atoms: usize,
    #[arg(long, default_value_t = 0.0)]
    xi: f64,
    /// Number of ones for binary sequences.
    #[arg(long, default_value_t = 16)]
    ones: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Every field mirrors a config file key.
#[derive(Args)]
struct RunArgs {
    /// Flat `key = value` file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    instance: Option<String>,
    #[arg(long)]
    extents: Option<String>,
    #[arg(long)]
    diameter: Option<String>,
    #[arg(long)]
    atoms: Option<String>,
    #[arg(long)]
    xi: Option<String>,
    #[arg(long)]
    input: Option<String>,
    #[arg(long)]
    constraint: Option<String>,
    #[arg(long)]
    sigma: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<String>,
    #[arg(long)]
    budget: Option<String>,
    #[arg(long)]
    tolerance: Option<String>,
    #[arg(long)]
    threshold: Option<String>,
    #[arg(long)]
    settle: Option<String>,
    #[arg(long)]
    snapshot_every: Option<String>,
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    out: Option<String>,
}

impl RunArgs {
    fn pairs(&self) -> Result<BTreeMap<String, String>> {
        let mut map = match &self.config {
            Some(path) => harness::parse_config(&fs::read_to_string(path)?)?,
            None => BTreeMap::new(),
        };
        let flags = [
            ("instance", &self.instance),
            ("extents", &self.extents),
            ("diameter", &self.diameter),
            ("atoms", &self.atoms),
            ("xi", &self.xi),
            ("input", &self.input),
            ("constraint", &self.constraint),
            ("sigma", &self.sigma),
            ("alpha", &self.alpha),
            ("k", &self.k),
            ("beta", &self.beta),
            ("budget", &self.budget),
            ("tolerance", &self.tolerance),
            ("threshold", &self.threshold),
            ("settle", &self.settle),
            ("snapshot-every", &self.snapshot_every),
            ("seeds", &self.seeds),
            ("out", &self.out),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                map.insert(key.to_string(), v.clone());
            }
        }
        Ok(map)
    }
}

#[derive(Args)]
struct SweepArgs {
    /// hist, atom or sayre
    #[arg(long, default_value = "hist")]
    constraint: String,
    /// Comma separated list.
    #[arg(long, allow_hyphen_values = true, default_value = "-1,-0.7,-0.5,-0.3,-0.1,0.1,0.3,0.5,0.7,1")]
    betas: String,
    #[arg(long, default_value = "0..20")]
    seeds: String,
    #[arg(long, default_value_t = 64)]
    extent: usize,
    #[arg(long)]
    atoms: Option<usize>,
    #[arg(long, default_value_t = 100)]
    iterations: usize,
    #[arg(long, default_value_t = 1e-3)]
    threshold: f64,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 0.37)]
    alpha: f64,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value = "sweep.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct PortraitArgs {
    /// First object (PGF); a random binary sequence when absent.
    #[arg(long)]
    a: Option<PathBuf>,
    #[arg(long)]
    b: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    length: usize,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.7)]
    beta: f64,
    #[arg(long, default_value_t = 100_000)]
    iterations: usize,
    #[arg(long, default_value_t = 0.3)]
    window: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "portrait")]
    out: PathBuf,
}

fn gen(args: &GenArgs) -> Result<()> {
    let extents = harness::parse_extents(&args.extents)?;
    let grid = Grid::new(&extents)?;
    let field = match args.kind.as_str() {
        "disk" => {
            let d = args.diameter.unwrap_or(*extents.iter().min().unwrap_or(&1) as f64 / 2.0);
            synth::random_disk(&grid, d, args.seed)?.0
        }
        "atoms" => {
            let cfg = AtomicityConfig::normalized(args.atoms, AtomTemplate::standard(grid.dims())?);
            synth::make_atomic_object(&grid, &cfg, &ClusterSpec::new(args.xi, args.seed)?)?.0
        }
        "clustered" => synth::clustered_random(&grid, &ClusterSpec::new(args.xi, args.seed)?)?,
        "binary" => synth::binary_sequence(grid.len(), args.ones, args.seed)?,
        other => {
            return Err(diffmap::Error::InvalidParameter(format!("unknown kind `{other}`")));
        }
    };
    let sidecar = json!({
        "kind": args.kind,
        "extents": extents,
        "diameter": args.diameter,
        "atoms": args.atoms,
        "xi": args.xi,
        "ones": args.ones,
        "seed": args.seed,
        "version": env!("CARGO_PKG_VERSION"),
    });
    harness::write_generated(&args.out, &field, &sidecar)
}

fn run(args: &RunArgs) -> Result<()> {
    let spec = ExperimentSpec::from_pairs(&args.pairs()?)?;
    let summaries = harness::run_experiment(&spec)?;
    for s in &summaries {
        println!(
            "seed {}: success {} iterations {} final e {:.3e} distance {:.3e}",
            s.seed, s.success, s.iterations, s.final_error, s.registered_distance
        );
    }
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<()> {
    let constraint = match args.constraint.as_str() {
        "hist" => ConstraintSpec::Hist,
        "atom" => ConstraintSpec::Atom,
        "sayre" => ConstraintSpec::Sayre {
            sigma: args.sigma,
            alpha: args.alpha,
            k: args.k,
        },
        other => {
            return Err(diffmap::Error::InvalidParameter(format!("unknown constraint `{other}`")));
        }
    };
    let betas = args
        .betas
        .split(',')
        .map(|b| {
            b.trim()
                .parse()
                .map_err(|_| diffmap::Error::Format(format!("bad beta `{b}`")))
        })
        .collect::<Result<Vec<f64>>>()?;
    let cfg = SweepConfig {
        betas,
        seeds: harness::parse_seeds(&args.seeds)?,
        extent: args.extent,
        atoms: args.atoms,
        iterations: args.iterations,
        threshold: args.threshold,
        ..SweepConfig::new(constraint)
    };
    let result = harness::sweep_beta(&cfg)?;
    let csv = result.to_csv();
    fs::write(&args.out, &csv)?;
    print!("{csv}");
    Ok(())
}

fn portrait(args: &PortraitArgs) -> Result<()> {
    let load = |path: &Option<PathBuf>, seed: u64| match path {
        Some(p) => read_pgf(p),
        None => synth::binary_sequence(args.length, args.length / 2, seed),
    };
    let a = load(&args.a, 2 * args.seed + 1)?;
    let b = load(&args.b, 2 * args.seed + 2)?;
    let p = harness::attractor_portrait(&a, &b, args.beta, args.iterations, args.window, args.seed)?;
    harness::write_portrait(&args.out, &p)?;
    println!(
        "beta {}: {} points in section, {} occupied cells, min e {:.3e}",
        p.beta,
        p.points.len(),
        p.occupied_cells(),
        p.min_error
    );
    Ok(())
}

fn table1(out: &Option<PathBuf>) -> Result<()> {
    let (_, csv) = harness::table1_report()?;
    match out {
        Some(path) => fs::write(path, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen(a) => gen(a),
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Portrait(a) => portrait(a),
        Command::Table1 { out } => table1(out),
        Command::ExportPgm { input, output } => read_pgf(input).and_then(|f| write_pgm(output, &f)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
