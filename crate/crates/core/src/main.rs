use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use phasetrack::runner::{self, Overrides, RunError, SweepParam};
use phasetrack::scenario::Tier;

#[derive(Parser)]
#[command(name = "phasetrack", version, about = "Simulate simultaneous quadrature measurements on an entangled optical bench")]
struct Cli {
    /// Overrides the scenario's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for output files.
    #[arg(long, global = true, env = "PHASETRACK_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    /// Overrides the scenario's simulation tier.
    #[arg(long, global = true, value_enum)]
    tier: Option<Tier>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write records.csv and summary.json.
    Run { file: PathBuf },
    /// Repeat a scenario over a grid of one bench parameter and write sweep.csv.
    Sweep {
        #[arg(value_enum)]
        param: SweepParam,
        /// Comma-separated values, e.g. 1.0,0.9,0.7
        grid: String,
        file: PathBuf,
    },
    /// Measure the vacuum calibration for a scenario and write calibration.json.
    Calibrate { file: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let overrides = Overrides {
        seed: cli.seed,
        tier: cli.tier,
    };
    let result: Result<(), RunError> = match &cli.command {
        Command::Run { file } => runner::run(file, &overrides, &cli.out_dir).map(|out| {
            let s = &out.summary;
            println!(
                "records {}  var_u {:.4}  var_v {:.4}  product {:.4}  factor {:.2}  {:?}",
                s.n_records, s.var_u, s.var_v, s.product_inferred, s.violation_factor_eq2, s.classification
            );
        }),
        Command::Sweep { param, grid, file } => {
            runner::sweep(file, *param, grid, &overrides, &cli.out_dir).map(|points| {
                for p in points {
                    println!("{:>10.4}  product {:.4}  factor {:.2}  dB {:.2}/{:.2}", p.value, p.product, p.factor, p.db_u, p.db_v);
                }
            })
        }
        Command::Calibrate { file } => runner::calibrate_cmd(file, &overrides, &cli.out_dir)
            .map(|c| println!("scale_u {:.6}  scale_v {:.6}", c.scale_u, c.scale_v)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
