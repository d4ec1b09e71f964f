use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ira_mmc::cli::{compare, run, RunConfig};

#[derive(Parser)]
#[command(name = "ira-mmc", version, about = "MMC topology optimization with IRA reanalysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one optimization.
    Run(RunArgs),
    /// Run the full and IRA solvers on the same problem and compare.
    Compare(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    solver: Option<String>,
    #[arg(long)]
    nelx: Option<String>,
    #[arg(long)]
    nely: Option<String>,
    #[arg(long)]
    eta: Option<String>,
    #[arg(long)]
    eps_star: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    tol_x: Option<String>,
    #[arg(long)]
    max_iter: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    output_dir: Option<String>,
    #[arg(long)]
    move_limit: Option<String>,
    #[arg(long)]
    snapshot_every: Option<String>,
}

impl RunArgs {
    fn config(&self) -> ira_mmc::Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        let overrides = [
            ("problem", &self.problem),
            ("solver", &self.solver),
            ("nelx", &self.nelx),
            ("nely", &self.nely),
            ("eta", &self.eta),
            ("eps_star", &self.eps_star),
            ("delta", &self.delta),
            ("tol_x", &self.tol_x),
            ("max_iter", &self.max_iter),
            ("seed", &self.seed),
            ("output_dir", &self.output_dir),
            ("move_limit", &self.move_limit),
            ("snapshot_every", &self.snapshot_every),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => args.config().and_then(|cfg| run(&cfg)).map(|rec| {
            let s = &rec.summary;
            println!(
                "{} after {} iterations: objective {:.6e}, constraint {:.3e}, {:.2} s",
                s.stop_reason, s.iterations, s.objective, s.constraint, s.wall_s
            );
        }),
        Command::Compare(args) => args.config().and_then(|cfg| compare(&cfg)).and_then(|report| {
            print!("{}", report.render());
            if report.complete {
                Ok(())
            } else {
                Err(ira_mmc::Error::InvalidArgument("comparison incomplete".into()))
            }
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
