use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use thermotop::app;
use thermotop::config::parse_config;
use thermotop::Result;

#[derive(Parser)]
#[command(name = "thermotop", version, about = "Thermal topology optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the optimization described by a config file.
    Run { config: PathBuf },
    /// Check a config file and report every problem found.
    Validate { config: PathBuf },
    /// Run the multi-objective problem for several weights.
    SweepOmega {
        config: PathBuf,
        #[arg(long, num_args = 1.., value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Run closed-form and level-set back to back and print the iteration ratio.
    Compare { config: PathBuf },
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Validate { config } => {
            parse_config(&config)?;
            println!("{}: ok", config.display());
        }
        Command::Run { config } => {
            let cfg = parse_config(&config)?;
            let dir = app::output_dir(&cfg);
            let steps = app::run(&cfg, &dir)?;
            let flagged = steps.iter().filter(|s| !s.converged).count();
            let last = steps.last().expect("non-empty schedule");
            println!(
                "{} steps, final cost {:.6e}, {} not converged, output in {}",
                steps.len(),
                last.cost,
                flagged,
                dir.display()
            );
        }
        Command::SweepOmega { config, values } => {
            let cfg = parse_config(&config)?;
            let dir = app::output_dir(&cfg);
            println!("omega,average,variance,cost");
            for p in app::sweep_omega(&cfg, &values, &dir)? {
                println!("{},{:.6e},{:.6e},{:.6e}", p.omega, p.average, p.variance, p.cost);
            }
        }
        Command::Compare { config } => {
            let cfg = parse_config(&config)?;
            let dir = app::output_dir(&cfg);
            let c = app::compare(&cfg, &dir)?;
            println!("closed_form iterations: {}", c.closed_form_iterations());
            println!("levelset iterations: {}", c.levelset_iterations());
            println!("ratio: {:.3}", c.ratio());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
