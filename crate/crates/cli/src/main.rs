use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fbflow_cli::commands::{execute, resolve_out_dir, RunError};
use fbflow_cli::config::{Mode, Preset, RunConfig};

/// Solvers and estimators for backward incompressible-flow problems on the
/// periodic torus, with reproducible run manifests.
#[derive(Parser)]
#[command(name = "fbflow", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo pressure-operator estimate vs the multiplier oracle.
    Leray(CommonArgs),
    /// Mild solve of the Burgers-type PDE with oracles and diagnostics.
    Burgers(CommonArgs),
    /// Mild Navier–Stokes solve (exact / truncated / monte-carlo modes).
    Ns(CommonArgs),
    /// Grid forward-backward scheme cross-validated against the mild solve.
    Scheme(CommonArgs),
    /// Magnetization-variable (Lagrangian) velocity estimate.
    Lagrangian(CommonArgs),
    /// Truncation-horizon convergence study.
    Convergence(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// TOML configuration file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Field preset.
    #[arg(long, value_enum)]
    preset: Option<Preset>,

    /// Projection mode of the solver.
    #[arg(long, value_enum)]
    mode: Option<Mode>,

    /// Grid points per axis.
    #[arg(long)]
    resolution: Option<usize>,

    /// Grid dimension (1–3).
    #[arg(long)]
    dim: Option<usize>,

    /// Torus period L.
    #[arg(long)]
    period: Option<f64>,

    /// Kinematic viscosity ν.
    #[arg(long)]
    nu: Option<f64>,

    /// Self-advection coefficient α (Burgers).
    #[arg(long)]
    alpha: Option<f64>,

    /// Backward horizon T.
    #[arg(long)]
    horizon: Option<f64>,

    /// Number of time steps.
    #[arg(long)]
    steps: Option<usize>,

    /// Truncation horizon N of the pressure kernel.
    #[arg(long = "N")]
    n_trunc: Option<f64>,

    /// Regularization ε of the one-sided operator.
    #[arg(long)]
    eps: Option<f64>,

    /// Monte Carlo sample count M.
    #[arg(long = "M")]
    samples: Option<usize>,

    /// Log-quadrature panel count K.
    #[arg(long = "K")]
    quad_panels: Option<usize>,

    /// Gauss–Hermite points per axis Q.
    #[arg(long = "Q")]
    gh_points: Option<usize>,

    /// Euler–Maruyama steps of the Lagrangian flow.
    #[arg(long)]
    flow_steps: Option<usize>,

    /// RNG seed.
    #[arg(long)]
    seed: Option<u64>,

    /// RNG stream id.
    #[arg(long)]
    stream_id: Option<u64>,

    /// Disable antithetic pairing.
    #[arg(long)]
    no_antithetic: bool,

    /// Picard tolerance.
    #[arg(long)]
    tol: Option<f64>,

    /// Picard iteration cap.
    #[arg(long)]
    max_iter: Option<usize>,

    /// Truncation horizons of the convergence study, comma-separated.
    #[arg(long, value_delimiter = ',')]
    n_list: Option<Vec<f64>>,

    /// Present results in the forward-time convention.
    #[arg(long)]
    forward: bool,

    /// Input field file (preset = file).
    #[arg(long)]
    input_field: Option<PathBuf>,

    /// Output directory (overrides config and FBFLOW_OUT_DIR).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl CommonArgs {
    /// File config (when given) with flag overrides applied.
    fn build_config(&self) -> Result<RunConfig, RunError> {
        let mut config = match &self.config {
            Some(path) => RunConfig::from_file(path).map_err(|e| RunError::Config(e.0))?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.preset {
            config.preset = v;
        }
        if let Some(v) = self.mode {
            config.mode = v;
        }
        if let Some(v) = self.resolution {
            config.grid.points_per_axis = v;
        }
        if let Some(v) = self.dim {
            config.grid.dim = v;
        }
        if let Some(v) = self.period {
            config.grid.period = v;
        }
        if let Some(v) = self.nu {
            config.physics.nu = v;
        }
        if let Some(v) = self.alpha {
            config.physics.alpha = v;
        }
        if let Some(v) = self.horizon {
            config.time.horizon = v;
        }
        if let Some(v) = self.steps {
            config.time.steps = v;
        }
        if let Some(v) = self.n_trunc {
            config.truncation.horizon_n = v;
        }
        if let Some(v) = self.eps {
            config.truncation.eps = v;
        }
        if let Some(v) = self.samples {
            config.sampling.samples = v;
        }
        if let Some(v) = self.quad_panels {
            config.sampling.quad_panels = v;
        }
        if let Some(v) = self.gh_points {
            config.sampling.gh_points = v;
        }
        if let Some(v) = self.flow_steps {
            config.sampling.flow_steps = v;
        }
        if let Some(v) = self.seed {
            config.sampling.seed = v;
        }
        if let Some(v) = self.stream_id {
            config.sampling.stream_id = v;
        }
        if self.no_antithetic {
            config.sampling.antithetic = false;
        }
        if let Some(v) = self.tol {
            config.tol = v;
        }
        if let Some(v) = self.max_iter {
            config.max_iter = v;
        }
        if let Some(v) = &self.n_list {
            config.n_list = v.clone();
        }
        if self.forward {
            config.forward = true;
        }
        if let Some(v) = &self.input_field {
            config.input_field = Some(v.clone());
            config.preset = Preset::File;
        }
        if let Some(v) = &self.out {
            config.output.dir = Some(v.clone());
        }
        Ok(config)
    }
}

fn run() -> Result<(), RunError> {
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::Leray(a) => ("leray", a),
        Command::Burgers(a) => ("burgers", a),
        Command::Ns(a) => ("ns", a),
        Command::Scheme(a) => ("scheme", a),
        Command::Lagrangian(a) => ("lagrangian", a),
        Command::Convergence(a) => ("convergence", a),
    };
    let config = args.build_config()?;
    let out_dir = resolve_out_dir(&config, args.out.as_ref());
    let manifest = execute(name, &config, &out_dir)?;
    println!(
        "{name}: ok ({:.2}s), manifest at {}",
        manifest.wall_time_seconds,
        out_dir.join("manifest.toml").display()
    );
    for (k, v) in &manifest.results {
        println!("  {k} = {v:.6e}");
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(RunError::Run(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(RunError::Config(m)) => {
            eprintln!("configuration error: {m}");
            ExitCode::from(2)
        }
    }
}
