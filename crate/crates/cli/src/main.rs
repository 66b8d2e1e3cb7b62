use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod error;
mod isaacs;
mod output;

use config::{Experiment, LoadedConfig};
use error::CliError;
use output::OutDir;

/// Solver and estimate checker for nonconvex mean field games on the torus.
#[derive(Parser)]
#[command(name = "mfglab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config's `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for multi-start branches and sweep rows.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Seed for random initial guesses (overrides the config's `seed`).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the coupled system and export the solution.
    Solve(RunArgs),
    /// Check exported solutions against the estimates.
    Verify {
        #[command(flatten)]
        run: RunArgs,
        /// Solution file written by `solve`.
        #[arg(long)]
        solution: PathBuf,
        /// Second solution, compared with the first through φ and the energy inequalities.
        #[arg(long)]
        pair_solution: Option<PathBuf>,
        /// Configuration of the second solution (defaults to `--config`).
        #[arg(long, requires = "pair_solution")]
        pair_config: Option<PathBuf>,
    },
    /// Multi-start uniqueness probe.
    Probe(RunArgs),
    /// Convergence and multi-start dispersion across a range of c0.
    Sweep(RunArgs),
    /// Lower and upper values of a discrete game on a p lattice.
    Isaacs {
        /// Game JSON with `dim`, `f` and `h` tables.
        #[arg(long)]
        game: PathBuf,
        #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
        p_min: f64,
        #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
        p_max: f64,
        /// Lattice points per axis.
        #[arg(long, default_value_t = 21)]
        points: usize,
        #[arg(long, default_value = "mfglab-out")]
        out: PathBuf,
        /// Also write the game Hamiltonian sampled on the lattice.
        #[arg(long)]
        export_hamiltonian: bool,
    },
}

struct Prepared {
    config: LoadedConfig,
    out: OutDir,
    seed: u64,
    pool: rayon::ThreadPool,
}

fn prepare(args: &RunArgs, kind: Experiment) -> Result<Prepared, CliError> {
    let config = config::load(&args.config)?;
    if let Some(e) = config.config.experiment {
        // a solution is verified against the config that produced it
        if e != kind && !(kind == Experiment::Verify && e == Experiment::Solve) {
            return Err(CliError::Config {
                key: "experiment".into(),
                msg: format!("config is for {e:?}, not {kind:?}"),
            });
        }
    }
    if args.jobs == 0 {
        return Err(CliError::Config { key: "--jobs".into(), msg: "needs at least one worker".into() });
    }
    let out = match (&args.out, &config.config.out) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) if p.is_relative() => config.base.join(p),
        (None, Some(p)) => p.clone(),
        (None, None) => PathBuf::from("mfglab-out"),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .map_err(|e| CliError::Io(e.to_string()))?;
    let seed = args.seed.or(config.config.seed).unwrap_or(0);
    Ok(Prepared { config, out: OutDir::create(&out)?, seed, pool })
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve(a) => {
            let p = prepare(&a, Experiment::Solve)?;
            commands::solve(&p.config, &p.out, p.seed)
        }
        Command::Verify { run, solution, pair_solution, pair_config } => {
            let p = prepare(&run, Experiment::Verify)?;
            let pair_cfg = match (&pair_solution, pair_config) {
                (Some(_), Some(path)) => Some(config::load(&path)?),
                (Some(_), None) => Some(p.config.clone()),
                (None, _) => None,
            };
            let pair = match (&pair_cfg, &pair_solution) {
                (Some(c), Some(s)) => Some(commands::PairInput { config: c, solution: s.as_path() }),
                _ => None,
            };
            commands::verify(&p.config, &solution, pair, &p.out)
        }
        Command::Probe(a) => {
            let p = prepare(&a, Experiment::Probe)?;
            commands::probe(&p.config, &p.out, &p.pool, p.seed)
        }
        Command::Sweep(a) => {
            let p = prepare(&a, Experiment::Sweep)?;
            commands::sweep(&p.config, &p.out, &p.pool, p.seed)
        }
        Command::Isaacs { game, p_min, p_max, points, out, export_hamiltonian } => {
            let lattice = isaacs::Lattice { min: p_min, max: p_max, points };
            isaacs::run(Path::new(&game), &lattice, export_hamiltonian, &OutDir::create(&out)?)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MFGLAB_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // clap's own usage errors map onto the config exit code
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mfglab: {e}");
            e.exit_code()
        }
    }
}
