use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rwc::optimize::Method;
use rwc::pipeline::{run, Command, ModelKind, RunConfig};

#[derive(Parser)]
#[command(name = "rwc", version, about = "School redistricting with student choice")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    district: Option<PathBuf>,
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (also RWC_WORKERS).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Print the effective configuration as TOML and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Synthesize a district with enrollment history.
    Generate {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        blocks: Option<usize>,
        #[arg(long)]
        schools: Option<usize>,
        #[arg(long)]
        students: Option<usize>,
    },
    /// Fit the multinomial logit choice model on the full history.
    Train {
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Cross-validate the follow, frequency and logit models.
    Evaluate {
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Sample and save a scenario table.
    Scenarios {
        #[arg(long, value_parser = parse_kind)]
        choice_model: Option<ModelKind>,
        #[arg(long)]
        table: Option<PathBuf>,
        #[command(flatten)]
        sampling: Sampling,
    },
    /// Search for a zoning and report it against the status quo.
    Optimize {
        #[command(flatten)]
        solve: Solve,
        #[command(flatten)]
        sampling: Sampling,
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Report a saved zoning.
    Report {
        #[arg(long)]
        zoning: Option<PathBuf>,
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long)]
        method: Option<Method>,
        #[command(flatten)]
        sampling: Sampling,
    },
    /// Write a zoning as GeoJSON.
    ExportMap {
        #[arg(long)]
        zoning: Option<PathBuf>,
        /// none, opt-out-rate or ses.
        #[arg(long)]
        overlay: Option<String>,
        #[arg(long)]
        method: Option<Method>,
        #[arg(long)]
        table: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Sampling {
    #[arg(long)]
    scenarios: Option<usize>,
    #[arg(long)]
    scenario_seed: Option<u64>,
}

#[derive(Args)]
struct Solve {
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    time_limit: Option<f64>,
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: rwc::Error| e.to_string())
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn configure(cli: Cli) -> rwc::Result<(Command, RunConfig, bool)> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    set(&mut cfg.paths.district, cli.district);
    set(&mut cfg.paths.model, cli.model);
    set(&mut cfg.paths.out, cli.out);
    if cli.workers.is_some() {
        cfg.workers = cli.workers;
    }
    let sampling = |cfg: &mut RunConfig, s: Sampling| {
        set(&mut cfg.solver.n_scenarios, s.scenarios);
        set(&mut cfg.scenario_seed, s.scenario_seed);
    };
    let command = match cli.command {
        Sub::Generate { seed, blocks, schools, students } => {
            set(&mut cfg.generate.seed, seed);
            set(&mut cfg.generate.n_blocks, blocks);
            set(&mut cfg.generate.n_schools, schools);
            set(&mut cfg.generate.n_students, students);
            Command::Generate
        }
        Sub::Train { epochs } => {
            set(&mut cfg.train.epochs, epochs);
            Command::Train
        }
        Sub::Evaluate { folds, seed } => {
            set(&mut cfg.folds, folds);
            set(&mut cfg.eval_seed, seed);
            Command::Evaluate
        }
        Sub::Scenarios { choice_model, table, sampling: s } => {
            set(&mut cfg.choice_model, choice_model);
            if table.is_some() {
                cfg.paths.table = table;
            }
            sampling(&mut cfg, s);
            Command::Scenarios
        }
        Sub::Optimize { solve, sampling: s, table } => {
            set(&mut cfg.solver.method, solve.method);
            set(&mut cfg.solver.alpha, solve.alpha);
            set(&mut cfg.solver.tau, solve.tau);
            set(&mut cfg.solver.seed, solve.seed);
            set(&mut cfg.solver.restarts, solve.restarts);
            set(&mut cfg.solver.time_limit_secs, solve.time_limit);
            if table.is_some() {
                cfg.paths.table = table;
            }
            sampling(&mut cfg, s);
            Command::Optimize
        }
        Sub::Report { zoning, table, method, sampling: s } => {
            if zoning.is_some() {
                cfg.paths.zoning = zoning;
            }
            if table.is_some() {
                cfg.paths.table = table;
            }
            set(&mut cfg.solver.method, method);
            sampling(&mut cfg, s);
            Command::Report
        }
        Sub::ExportMap { zoning, overlay, method, table } => {
            if zoning.is_some() {
                cfg.paths.zoning = zoning;
            }
            if table.is_some() {
                cfg.paths.table = table;
            }
            set(&mut cfg.overlay, overlay);
            set(&mut cfg.solver.method, method);
            Command::ExportMap
        }
    };
    Ok((command, cfg, cli.print_config))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure(cli).and_then(|(command, cfg, print)| {
        if print {
            print!("{}", cfg.to_toml());
            return Ok(());
        }
        let outcome = run(command, &cfg)?;
        println!("{}", outcome.summary);
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rwc: {}", e.to_string().replace('\n', " "));
            ExitCode::from(e.exit_code())
        }
    }
}
