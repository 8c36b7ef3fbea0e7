use std::path::PathBuf;
use std::process::ExitCode;

use chemotaxis_cli::commands::{self, ConditionArgs};
use chemotaxis_core::diagnostics::SpatialProfile;
use clap::{Parser, Subcommand, ValueEnum};

/// Simulate and verify the chemotaxis-consumption system with logistic source.
#[derive(Parser)]
#[command(name = "chemotaxis", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation from a config file.
    Run {
        config: PathBuf,
        /// Overrides [output].directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Report the large-mu boundedness threshold for given parameters.
    CheckCondition {
        #[arg(long)]
        chi: f64,
        #[arg(long, allow_hyphen_values = true)]
        kappa: f64,
        #[arg(long, allow_hyphen_values = true)]
        mu: f64,
        #[arg(long)]
        v0_sup: f64,
        /// Spatial dimension N.
        #[arg(long, default_value_t = 1)]
        dim: u32,
        /// Fix p instead of scanning p in {N+0.25, ..., 3N}.
        #[arg(long)]
        p: Option<f64>,
    },
    /// Run a scenario sweep from an experiment spec.
    Experiment {
        spec: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run inequality checks or the weak residual on stored data.
    Diagnose {
        #[command(subcommand)]
        check: Check,
    },
}

#[derive(Subcommand)]
enum Check {
    /// Pointwise |Δc|² <= N|D²c|² on snapshot files.
    Hessian {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Integral interpolation inequality on snapshot files.
    Interpolation {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        q: f64,
        /// Smallest acceptable rhs/lhs ratio.
        #[arg(long, default_value_t = 0.95)]
        min_ratio: f64,
    },
    /// Weak-formulation residual of a run directory written with snapshots.
    Weak {
        run_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Profile::Constant)]
        profile: Profile,
        /// Support of the time bump; defaults to the last snapshot time.
        #[arg(long)]
        horizon: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Constant,
    CosX,
    CosXy,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config, output } => commands::cmd_run(&config, output.as_deref()),
        Command::CheckCondition {
            chi,
            kappa,
            mu,
            v0_sup,
            dim,
            p,
        } => commands::cmd_check_condition(&ConditionArgs {
            chi,
            kappa,
            mu,
            v0_sup,
            dim,
            p,
        }),
        Command::Experiment { spec, output } => commands::cmd_experiment(&spec, output.as_deref()),
        Command::Diagnose { check } => match check {
            Check::Hessian { files } => commands::cmd_diagnose_hessian(&files),
            Check::Interpolation { files, q, min_ratio } => commands::cmd_diagnose_interpolation(&files, q, min_ratio),
            Check::Weak {
                run_dir,
                profile,
                horizon,
            } => {
                let profile = match profile {
                    Profile::Constant => SpatialProfile::Constant,
                    Profile::CosX => SpatialProfile::CosX,
                    Profile::CosXy => SpatialProfile::CosXY,
                };
                commands::cmd_diagnose_weak(&run_dir, profile, horizon)
            }
        },
    };
    ExitCode::from(code as u8)
}
