use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use ergolab::Overrides;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "ergolab",
    version,
    about = "Transfer-operator laboratory for piecewise partially hyperbolic skew products"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Intra-experiment parallelism; defaults to the machine width
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides the config's output.seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; ERGOLAB_OUT overrides this flag
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Leading eigendata of the base transfer operator
    Spectrum(RunArgs),
    /// Equilibrium state by leafwise fixed-point iteration
    Equilibrium(RunArgs),
    /// Decay of correlations via operator duality, with optional Monte Carlo
    Decay(RunArgs),
    /// Central limit theorem harness on normalized Birkhoff sums
    Clt(RunArgs),
    /// Statistical stability sweep against the perturbation envelope
    Stability(RunArgs),
    /// Hypothesis dossier: every checkable condition with its margin
    Verify(RunArgs),
    /// Birkhoff-average merging for fiber-reduced potentials
    Cohomology(RunArgs),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            std::process::exit(0);
        }
        Err(e) => {
            eprint!("{e}");
            std::process::exit(1);
        }
    };
    let (kind, args) = match &cli.cmd {
        Cmd::Spectrum(a) => ("spectrum", a),
        Cmd::Equilibrium(a) => ("equilibrium", a),
        Cmd::Decay(a) => ("decay", a),
        Cmd::Clt(a) => ("clt", a),
        Cmd::Stability(a) => ("stability", a),
        Cmd::Verify(a) => ("verify", a),
        Cmd::Cohomology(a) => ("cohomology", a),
    };
    let ov = Overrides { workers: args.workers, seed: args.seed, out: args.out.clone() };
    match ergolab::execute(kind, &args.config, &ov) {
        Ok(outcome) => {
            let rec = &outcome.record;
            for (flag, ok) in &rec.flags {
                println!("{} {flag}", if *ok { "PASS" } else { "FAIL" });
            }
            for v in &rec.violations {
                println!("VIOLATION {v}");
            }
            println!("summary: {}", outcome.out_dir.join("summary.json").display());
            std::process::exit(rec.exit_code());
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
