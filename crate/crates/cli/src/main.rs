//! Command-line runner for multitime differential game solvers.
//!
//! Exit codes: 0 success, 1 configuration error, 2 solver error,
//! 3 verification failure (a report missed its tolerance under --strict).

use clap::{Args, Parser, Subcommand};
use multigame_cli::{config, run};
use run::Stage;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "multigame", version, about = "Solvers for two-team multitime differential games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for the result bundle; must not exist yet.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed in the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for the data-parallel sweeps (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Exit with code 3 when any report misses its tolerance.
    #[arg(long)]
    strict: bool,
    /// Emit gnuplot tables of the exported grids, slicing with
    /// comma-separated axis=value pairs (e.g. "t1=0,t2=0").
    #[arg(long)]
    plot: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the complete-integrability conditions of the dynamics.
    Cic(CommonArgs),
    /// Solve the lower value function.
    Lower(CommonArgs),
    /// Solve the upper value function.
    Upper(CommonArgs),
    /// Solve the divergence-type PDEs for both generating fields.
    Pde(CommonArgs),
    /// Scan the upper/lower Hamiltonians over random costates.
    Hamiltonian(CommonArgs),
    /// Verify the max-min representation constructions.
    Repr(CommonArgs),
    /// Certify the declared bound constants empirically.
    Bounds(CommonArgs),
    /// Run every stage in dependency order.
    All(CommonArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (stage, args) = match &cli.command {
        Command::Cic(a) => (Stage::Cic, a),
        Command::Lower(a) => (Stage::Lower, a),
        Command::Upper(a) => (Stage::Upper, a),
        Command::Pde(a) => (Stage::Pde, a),
        Command::Hamiltonian(a) => (Stage::Hamiltonian, a),
        Command::Repr(a) => (Stage::Repr, a),
        Command::Bounds(a) => (Stage::Bounds, a),
        Command::All(a) => (Stage::All, a),
    };

    if let Some(threads) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("multigame: failed to configure {threads} threads: {e}");
            return ExitCode::from(1);
        }
    }

    let loaded = match config::load_config(&args.config, args.seed) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("multigame: {e:#}");
            return ExitCode::from(1);
        }
    };
    for w in &loaded.warnings {
        eprintln!("multigame: warning: {w}");
    }

    let mut bundle = match run::execute(&loaded, stage, args.threads) {
        Ok(b) => b,
        Err(e) => {
            let msg = format!("{e:#}");
            eprintln!("multigame: {msg}");
            return ExitCode::from(if msg.contains("config error") { 1 } else { 2 });
        }
    };

    if let Some(slices) = &args.plot {
        let emitted = parse_slice_spec(slices).and_then(|fixed| {
            bundle
                .grids
                .iter()
                .map(|(name, table)| Ok((format!("{name}.dat"), table.plotdata(&fixed)?)))
                .collect::<anyhow::Result<Vec<_>>>()
        });
        match emitted {
            Ok(tables) => bundle.extra_files.extend(tables),
            Err(e) => {
                eprintln!("multigame: {e:#}");
                return ExitCode::from(1);
            }
        }
    }

    if let Err(e) = run::write_bundle(&bundle, &args.out) {
        let msg = format!("{e:#}");
        eprintln!("multigame: {msg}");
        return ExitCode::from(if msg.contains("config error") { 1 } else { 2 });
    }

    println!("multigame: wrote {}", args.out.display());
    if args.strict && run::verification_failed(&bundle, &loaded.config.tolerances) {
        eprintln!("multigame: verification failure (see reports.json)");
        return ExitCode::from(3);
    }
    ExitCode::SUCCESS
}

fn parse_slice_spec(spec: &str) -> anyhow::Result<Vec<(String, f64)>> {
    spec.split(',')
        .filter(|s| !s.is_empty())
        .map(|pair| {
            let (name, value) = pair
                .split_once('=')
                .ok_or_else(|| anyhow::anyhow!("config error: slice entry `{pair}` needs axis=value"))?;
            Ok((name.trim().to_string(), value.trim().parse::<f64>()?))
        })
        .collect()
}
