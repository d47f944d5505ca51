use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crystal_relax::exec::configure_threads;
use crystal_relax::harness::{self, ArtifactWriter, ExperimentKind, RunOptions};
use crystal_relax::tension::{TensionKind, TensionSpec, TensionTable};
use crystal_relax::{Error, Potential};

const EXIT_IO: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "crystal-relax", version, about = "Crystal surface relaxation: lattice simulations and their continuum limits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run any experiment described by a spec file.
    Run(RunArgs),
    /// Tabulate a surface tension to CSV.
    SigmaTable(TableArgs),
    /// Run a self_similar spec.
    SelfSimilar(RunArgs),
    /// Run a wetting spec.
    Wetting(RunArgs),
    /// Run a generator_test spec.
    GeneratorTest(RunArgs),
}

#[derive(Args)]
struct Common {
    /// Output directory (overrides $CRYSTAL_RELAX_OUT_DIR and the spec).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment spec (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// Replaces the seed in the spec.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Discrete,
    Continuous,
    Asymptotic,
}

impl From<KindArg> for TensionKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Discrete => TensionKind::Discrete,
            KindArg::Continuous => TensionKind::Continuous,
            KindArg::Asymptotic => TensionKind::Asymptotic,
        }
    }
}

#[derive(Args)]
struct TableArgs {
    /// Take K, p and the tension kind from this spec.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Accepted for symmetry with the other subcommands; tables are deterministic.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short = 'K', long = "K")]
    k: Option<f64>,
    #[arg(short, long)]
    p: Option<f64>,
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    /// Tabulate on [-u_max, u_max].
    #[arg(long, default_value_t = 5.0)]
    u_max: f64,
    #[arg(long, default_value_t = 1001)]
    points: usize,
    #[command(flatten)]
    common: Common,
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if e.is_config() {
        EXIT_CONFIG
    } else if matches!(e, Error::Io(_) | Error::Csv(_)) {
        EXIT_IO
    } else {
        EXIT_NUMERICAL
    })
}

fn run(args: &RunArgs, expect: Option<ExperimentKind>) -> Result<ExitCode, Error> {
    let spec = harness::load_spec(&args.spec, args.seed)?;
    if let Some(kind) = expect {
        if spec.experiment != kind {
            return Err(Error::Config {
                field: "experiment".into(),
                reason: format!("this subcommand runs `{}` specs, got `{}`", kind.name(), spec.experiment.name()),
            });
        }
    }
    let opts = RunOptions { out: args.common.out.clone(), threads: args.common.threads };
    let art = harness::run_experiment(&spec, &opts)?;
    println!("{}", art.dir.join("manifest.json").display());
    match art.failure {
        None => Ok(ExitCode::SUCCESS),
        Some(e) => {
            eprintln!("error: {e}");
            eprintln!("partial results kept in {}", art.dir.display());
            Ok(ExitCode::from(EXIT_NUMERICAL))
        }
    }
}

fn sigma_table(args: &TableArgs) -> Result<ExitCode, Error> {
    let spec = args.spec.as_deref().map(|p| harness::load_spec(p, args.seed)).transpose()?;
    let k = args.k.or(spec.as_ref().map(|s| s.k)).ok_or_else(|| Error::Config {
        field: "K".into(),
        reason: "pass --K or --spec".into(),
    })?;
    let p = args.p.or(spec.as_ref().map(|s| s.p)).ok_or_else(|| Error::Config {
        field: "p".into(),
        reason: "pass --p or --spec".into(),
    })?;
    let kind = args
        .kind
        .map(TensionKind::from)
        .or(spec.as_ref().map(|s| s.pde.tension))
        .unwrap_or(TensionKind::Discrete);
    let tspec = TensionSpec::new(k, Potential::new(p)?, kind)?;
    let table = TensionTable::tabulate(&tspec, -args.u_max, args.u_max, args.points)?;
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;

    let dir = args
        .common
        .out
        .clone()
        .or_else(|| std::env::var_os(harness::OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out/sigma_table"));
    let mut w = ArtifactWriter::create(&dir)?;
    let name = format!("sigma_{}.csv", serde_json::to_value(kind)?.as_str().unwrap_or("table"));
    w.write(&name, &["u", "sigma"], &buf)?;
    let params = json!({ "K": k, "p": p, "kind": kind, "u_max": args.u_max, "points": args.points });
    let threads = if args.common.threads == 0 { 1 } else { args.common.threads };
    w.finish("sigma_table", params, args.seed.unwrap_or(0), threads, Ok(json!({ "file": name })))?;
    println!("{}", dir.join("manifest.json").display());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = match &cli.command {
        Command::SigmaTable(a) => a.common.threads,
        Command::Run(a) | Command::SelfSimilar(a) | Command::Wetting(a) | Command::GeneratorTest(a) => a.common.threads,
    };
    if let Err(msg) = configure_threads(threads) {
        eprintln!("error: {msg}");
        return ExitCode::from(EXIT_CONFIG);
    }
    let outcome = match &cli.command {
        Command::Run(a) => run(a, None),
        Command::SelfSimilar(a) => run(a, Some(ExperimentKind::SelfSimilar)),
        Command::Wetting(a) => run(a, Some(ExperimentKind::Wetting)),
        Command::GeneratorTest(a) => run(a, Some(ExperimentKind::GeneratorTest)),
        Command::SigmaTable(a) => sigma_table(a),
    };
    outcome.unwrap_or_else(|e| fail(&e))
}
