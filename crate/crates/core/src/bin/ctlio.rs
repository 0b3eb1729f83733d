use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ctlio::cli::{self, Alignment};

#[derive(Parser)]
#[command(
    name = "ctlio",
    version,
    about = "Continuous-time LiDAR-inertial odometry on B-splines"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// key = value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// RNG seed; overrides the config file
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a dataset
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Run the estimator over a dataset directory
    Odometry {
        dataset: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Record wall time per scan in the report
        #[arg(long)]
        timing: bool,
    },
    /// Two-stage loop correction of an odometry run
    LoopCorrect {
        /// Odometry output directory
        run: PathBuf,
        /// Loop constraints CSV
        #[arg(long)]
        loops: PathBuf,
        /// Ground-truth TUM file for the before/after APE summary
        #[arg(long)]
        gt: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Compare an estimated TUM file against ground truth
    Evaluate {
        est: PathBuf,
        gt: PathBuf,
        /// first-pose-align or none
        #[arg(long, default_value = "first-pose-align")]
        mode: String,
        /// Also write evaluation.txt and errors.csv here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Trajectory derivatives against IMU samples for plotting
    PlotData {
        /// Odometry output directory
        run: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn run(cli: Cli) -> ctlio::Result<()> {
    match cli.command {
        Command::Simulate { common } => {
            let data = cli::cmd_simulate(common.config.as_deref(), &common.out, common.seed)?;
            println!(
                "wrote {} scans and {} IMU samples to {}",
                data.scans.len(),
                data.imu.len(),
                common.out.display()
            );
        }
        Command::Odometry {
            dataset,
            common,
            timing,
        } => {
            let run = cli::cmd_odometry(&dataset, common.config.as_deref(), &common.out, timing)?;
            let degenerate = run.reports.iter().filter(|r| r.degenerate).count();
            println!(
                "processed {} scans, {} key-scans, {} degenerate",
                run.reports.len(),
                run.keyscans.len(),
                degenerate
            );
        }
        Command::LoopCorrect {
            run,
            loops,
            gt,
            common,
        } => {
            let res = cli::cmd_loop_correct(&run, &loops, gt.as_deref(), &common.out)?;
            if let (Some(b), Some(a)) = (&res.before, &res.after) {
                println!(
                    "APE trans RMSE {:.6} -> {:.6} m",
                    b.trans_rmse, a.trans_rmse
                );
            }
            println!("wrote {}", common.out.join(cli::CORRECTED_FILE).display());
        }
        Command::Evaluate { est, gt, mode, out } => {
            let mode: Alignment = mode.parse()?;
            print!(
                "{}",
                cli::cmd_evaluate(&est, &gt, mode, out.as_deref())?.to_text()
            );
        }
        Command::PlotData { run, common } => {
            let (accel, _) = cli::cmd_plot_data(&run, &common.out)?;
            println!("wrote {} rows per channel", accel.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
