use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use clap::{Parser, Subcommand};
use pmelab_cli::{parse_config_list, run_experiment, CliError, ExperimentConfig, ExperimentKind, Status};

/// Numerical lab for the porous medium equation with drift.
///
/// Exit status: 0 when every check passed, 1 when a check failed, 2 on a
/// configuration or runtime error.
#[derive(Parser)]
#[command(name = "pmelab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve an initial datum and write the trajectory.
    Simulate(RunArgs),
    /// Comparison, classification and touching checks.
    Verify(RunArgs),
    /// Relaxation to equilibrium with fitted rates.
    Convergence(RunArgs),
    /// Barenblatt exact-solution oracle on a grid and its refinement.
    Oracle(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// JSON config: one object, or a list of objects run as independent jobs.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; with a config list each job writes to `<out>/<index>-<kind>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for sampled checks, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of experiments run concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

impl Command {
    fn args(&self) -> &RunArgs {
        match self {
            Command::Simulate(a) | Command::Verify(a) | Command::Convergence(a) | Command::Oracle(a) => a,
        }
    }

    fn accepts(&self, kind: ExperimentKind) -> bool {
        use ExperimentKind::*;
        match self {
            Command::Simulate(_) => kind == Simulate,
            Command::Verify(_) => matches!(kind, Comparison | Classify | Touching),
            Command::Convergence(_) => kind == Convergence,
            Command::Oracle(_) => kind == BarenblattOracle,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Verify(_) => "verify",
            Command::Convergence(_) => "convergence",
            Command::Oracle(_) => "oracle",
        }
    }
}

fn prepare(cmd: &Command) -> Result<Vec<ExperimentConfig>, CliError> {
    let args = cmd.args();
    if args.jobs == 0 {
        return Err(CliError::Config {
            path: "--jobs".into(),
            reason: "must be at least 1".into(),
        });
    }
    let text = std::fs::read_to_string(&args.config).map_err(|source| CliError::Io {
        path: args.config.clone(),
        source,
    })?;
    let mut configs = parse_config_list(&text)?;
    let many = configs.len() > 1;
    for (i, cfg) in configs.iter_mut().enumerate() {
        if !cmd.accepts(cfg.kind) {
            return Err(CliError::Config {
                path: if many { format!("[{i}].kind") } else { "kind".into() },
                reason: format!("`{}` experiments are not run by `pmelab {}`", cfg.kind.as_str(), cmd.name()),
            });
        }
        if let Some(seed) = args.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &args.out {
            cfg.out = Some(if many { out.join(format!("{i}-{}", cfg.kind.as_str())) } else { out.clone() });
        }
    }
    let mut outs: Vec<&PathBuf> = Vec::new();
    for (i, cfg) in configs.iter().enumerate() {
        match &cfg.out {
            None => {
                return Err(CliError::Config {
                    path: if many { format!("[{i}].out") } else { "out".into() },
                    reason: "required (set it in the config or pass --out)".into(),
                })
            }
            Some(o) if outs.contains(&o) => {
                return Err(CliError::Config {
                    path: format!("[{i}].out"),
                    reason: format!("{} is shared with another job", o.display()),
                })
            }
            Some(o) => outs.push(o),
        }
    }
    Ok(configs)
}

fn run_one(cfg: &ExperimentConfig) -> Status {
    let out = cfg.out.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
    match run_experiment(cfg) {
        Ok(m) => {
            let failed: Vec<&str> = m.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
            match (&m.status, &m.error) {
                (Status::Error, Some(e)) => eprintln!("{out}: error: {e}"),
                (Status::Failed, _) => println!("{out}: failed ({})", failed.join(", ")),
                _ => println!("{out}: {}", serde_json::to_value(m.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()),
            }
            m.status
        }
        Err(e) => {
            eprintln!("{out}: error: {e}");
            Status::Error
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let configs = match prepare(&cli.command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("pmelab: {e}");
            return ExitCode::from(2);
        }
    };
    let jobs = cli.command.args().jobs.min(configs.len());
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel();
    std::thread::scope(|s| {
        for _ in 0..jobs {
            let tx = tx.clone();
            let (next, configs) = (&next, &configs);
            s.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cfg) = configs.get(i) else { break };
                let _ = tx.send(run_one(cfg));
            });
        }
    });
    drop(tx);
    let worst = rx.iter().map(Status::exit_code).max().unwrap_or(0);
    ExitCode::from(worst as u8)
}
