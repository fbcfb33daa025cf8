//! Execution of each subcommand: builds the problem from the configured
//! preset, runs the solver or estimator, writes field files and CSVs, and
//! fills in the run manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fbflow::burgers::{
    cole_hopf_oracle, energy_identity_check, max_principle_check, solve_burgers, uniform_time_grid,
    BurgersProblem, SpaceTimeField,
};
use fbflow::fbscheme::{run_grid_scheme, ExpectationRule, SchemeConfig, SchemeProjection};
use fbflow::fields::{io, l2_norm, sobolev_norm, Grid, VectorField};
use fbflow::heat::heat_convolve;
use fbflow::lagrangian::webber_velocity;
use fbflow::leray::{
    leray_project, p_eps_bound_check, pressure_gradient_mc, pressure_gradient_truncated_exact,
    McOptions, TruncationSpec,
};
use fbflow::navier_stokes::{
    convergence_study, divergence_report, reynolds_monitor, solve_ns, taylor_green_solution,
    to_forward, NsProblem, ProjectionMode,
};
use fbflow::presets;
use fbflow::stochastic::{log_quadrature, RngStream};

use crate::config::{Mode, Preset, RunConfig};
use crate::manifest::RunManifest;

/// Failures separated by exit code: bad configuration (2) vs solver/run
/// failure (1).
#[derive(Debug)]
pub enum RunError {
    Config(String),
    Run(String),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(m) => write!(f, "configuration error: {m}"),
            RunError::Run(m) => write!(f, "run failed: {m}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<fbflow::Error> for RunError {
    fn from(e: fbflow::Error) -> Self {
        match &e {
            fbflow::Error::InvalidParameter { .. } | fbflow::Error::GridMismatch(_) => {
                RunError::Config(e.to_string())
            }
            fbflow::Error::SolverDiverged {
                residual_history, ..
            } => RunError::Run(format!("{e}; residual history {residual_history:?}")),
            _ => RunError::Run(e.to_string()),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Run(format!("i/o: {e}"))
    }
}

type RunResult<T> = std::result::Result<T, RunError>;

fn grid_from(config: &RunConfig) -> RunResult<Grid> {
    Ok(Grid::new(
        config.grid.dim,
        config.grid.points_per_axis,
        config.grid.period,
    )?)
}

fn stream_from(config: &RunConfig) -> RngStream {
    RngStream::with_stream(config.sampling.seed, config.sampling.stream_id)
}

fn terminal_field(config: &RunConfig, grid: &Grid) -> RunResult<VectorField> {
    match config.preset {
        Preset::TaylorGreen => Ok(presets::taylor_green(grid)?),
        Preset::RandomSolenoidal => Ok(presets::random_solenoidal(
            grid,
            grid.n() / 4,
            1.0,
            &stream_from(config).child(7001),
        )),
        Preset::RandomBandlimited => Ok(presets::random_bandlimited_vector(
            grid,
            grid.n() / 4,
            1.0,
            &stream_from(config).child(7001),
        )),
        Preset::File => {
            let path = config
                .input_field
                .as_ref()
                .ok_or_else(|| RunError::Config("input_field required for preset \"file\"".into()))?;
            let f = io::read_vector_field(path)?;
            grid.same_as(f.grid())?;
            Ok(f)
        }
        other => Err(RunError::Config(format!(
            "preset \"{}\" is not valid for this subcommand",
            other.as_str()
        ))),
    }
}

fn write_csv(path: &Path, header: &str, rows: &[Vec<f64>]) -> RunResult<()> {
    let mut text = String::with_capacity(rows.len() * 64);
    text.push_str(header);
    text.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
        writeln!(&mut text, "{}", cells.join(",")).expect("string write");
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn norm_z(gap: &VectorField, stderr: &VectorField) -> (f64, f64) {
    // pointwise z statistics over nodes and components
    let mut within = 0usize;
    let mut z2 = 0.0;
    let mut count = 0usize;
    for (gc, sc) in gap.components().iter().zip(stderr.components()) {
        for (g, s) in gc.iter().zip(sc) {
            let se = s.max(1e-14);
            let z = g.abs() / se;
            if z <= 3.0 {
                within += 1;
            }
            z2 += z * z;
            count += 1;
        }
    }
    (within as f64 / count as f64, (z2 / count as f64).sqrt())
}

/// `leray`: Monte Carlo estimate of the truncated pressure operator on the
/// configured preset against the deterministic multiplier oracle.
pub fn run_leray(config: &RunConfig, dir: &Path, manifest: &mut RunManifest) -> RunResult<()> {
    let grid = grid_from(config)?;
    let phi = terminal_field(config, &grid)?;
    let spec = TruncationSpec::new(config.truncation.horizon_n)?;
    let (lo, hi) = spec.interval();
    let quad = log_quadrature(lo, hi, config.sampling.quad_panels)?;
    let opts = McOptions {
        antithetic: config.sampling.antithetic,
        upsample: 1,
    };
    let est = pressure_gradient_mc(
        &phi,
        &phi,
        spec,
        &quad,
        config.sampling.samples,
        stream_from(config),
        opts,
    )?;
    let oracle = pressure_gradient_truncated_exact(&phi, &phi, spec)?;
    let gap = est.mean.sub(&oracle)?;
    let (within, z_rms) = norm_z(&gap, &est.stderr);

    io::write_vector_field(dir.join("mean_field.fbsd"), &est.mean)?;
    manifest.checksum_file(&dir.join("mean_field.fbsd"))?;
    let rows: Vec<Vec<f64>> = (0..grid.points())
        .map(|p| {
            let mut row = vec![p as f64];
            for a in 0..grid.dim() {
                row.push(gap.component(a)[p]);
                row.push(est.stderr.component(a)[p]);
            }
            row
        })
        .collect();
    let mut header = String::from("node");
    for a in 0..grid.dim() {
        write!(&mut header, ",err{a},stderr{a}").unwrap();
    }
    write_csv(&dir.join("error_vs_oracle.csv"), &header, &rows)?;
    manifest.checksum_file(&dir.join("error_vs_oracle.csv"))?;

    // the regularized-operator bound comes along for free
    let peps = p_eps_bound_check(&phi, &phi, config.truncation.eps)?;
    manifest.record("within_3sigma", within);
    manifest.record("z_rms", z_rms);
    manifest.record("oracle_l2", l2_norm(&oracle));
    manifest.record("gap_l2", l2_norm(&gap));
    manifest.record("stderr_l2", l2_norm(&est.stderr));
    manifest.record("p_eps_lhs", peps.lhs);
    manifest.record("p_eps_rhs", peps.rhs);
    Ok(())
}

fn emit_spacetime_diagnostics(
    u: &SpaceTimeField,
    dir: &Path,
    manifest: &mut RunManifest,
) -> RunResult<()> {
    let rows: Vec<Vec<f64>> = u
        .times()
        .iter()
        .zip(u.fields())
        .zip(divergence_report(u))
        .map(|((&t, f), (_, leak))| {
            vec![
                t,
                l2_norm(f),
                sobolev_norm(f, 1),
                sobolev_norm(f, 2),
                leak,
            ]
        })
        .collect();
    write_csv(
        &dir.join("diagnostics.csv"),
        "time,l2,h1,h2,divergence_leak",
        &rows,
    )?;
    manifest.checksum_file(&dir.join("diagnostics.csv"))?;
    Ok(())
}

/// `ns`: the mild Navier–Stokes solve in the configured projection mode.
pub fn run_ns(config: &RunConfig, dir: &Path, manifest: &mut RunManifest) -> RunResult<()> {
    let grid = grid_from(config)?;
    let g = terminal_field(config, &grid)?;
    let g = leray_project(&g); // harmless for solenoidal presets, required for files
    let times = uniform_time_grid(config.time.start, config.time.horizon, config.time.steps);
    let problem = NsProblem::new(g, config.physics.nu, times)?;
    let mode = match config.mode {
        Mode::Exact => ProjectionMode::Exact,
        Mode::Truncated => ProjectionMode::TruncatedMultiplier {
            n_trunc: config.truncation.horizon_n,
        },
        Mode::MonteCarlo => ProjectionMode::MonteCarlo {
            n_trunc: config.truncation.horizon_n,
            samples: config.sampling.samples,
            quad_panels: config.sampling.quad_panels,
            stream: stream_from(config),
            options: McOptions {
                antithetic: config.sampling.antithetic,
                upsample: 1,
            },
        },
    };
    let sol = solve_ns(&problem, &mode, config.tol, config.max_iter)?;
    manifest.record("iterations", sol.iterations as f64);

    let presented = if config.forward { to_forward(&sol.u)? } else { sol.u.clone() };
    io::write_vector_field(dir.join("velocity_initial.fbsd"), presented.snapshot(0))?;
    manifest.checksum_file(&dir.join("velocity_initial.fbsd"))?;
    io::write_vector_csv(dir.join("velocity_initial.csv"), presented.snapshot(0))?;
    manifest.checksum_file(&dir.join("velocity_initial.csv"))?;
    emit_spacetime_diagnostics(&presented, dir, manifest)?;

    if config.preset == Preset::TaylorGreen {
        let oracle = taylor_green_solution(problem.grid(), config.physics.nu, &problem.time_grid)?;
        let err = sol.u.sup_l2_distance(&oracle)? / l2_norm(&problem.g);
        manifest.record("taylor_green_rel_error", err);
    }
    if problem.f.is_none() {
        if let Ok(rep) = reynolds_monitor(&problem, &sol.u, 1, 1.0) {
            manifest.record("reynolds", rep.reynolds);
            manifest.record("norm_ratio_max", rep.max_ratio);
        }
    }
    let max_leak = divergence_report(&sol.u)
        .into_iter()
        .map(|(_, l)| l)
        .fold(0.0f64, f64::max);
    manifest.record("max_divergence_leak", max_leak);
    Ok(())
}

/// `convergence`: truncation-horizon study against the exact-mode solve.
pub fn run_convergence(config: &RunConfig, dir: &Path, manifest: &mut RunManifest) -> RunResult<()> {
    let grid = grid_from(config)?;
    let g = terminal_field(config, &grid)?;
    let times = uniform_time_grid(config.time.start, config.time.horizon, config.time.steps);
    let problem = NsProblem::new(leray_project(&g), config.physics.nu, times)?;
    if config.n_list.is_empty() {
        return Err(RunError::Config("n_list: must not be empty".into()));
    }
    let report = convergence_study(&problem, &config.n_list, config.tol, config.max_iter)?;
    let rows: Vec<Vec<f64>> = report
        .entries
        .iter()
        .map(|e| vec![e.n_trunc, e.error.unwrap_or(f64::NAN)])
        .collect();
    write_csv(&dir.join("convergence.csv"), "n_trunc,error", &rows)?;
    manifest.checksum_file(&dir.join("convergence.csv"))?;
    if let Some(s) = report.slope {
        manifest.record("slope", s);
    }
    manifest.record("partial", if report.partial { 1.0 } else { 0.0 });
    Ok(())
}

/// `burgers`: mild solve of the Burgers-type PDE with preset-specific
/// oracles and diagnostics.
pub fn run_burgers(config: &RunConfig, dir: &Path, manifest: &mut RunManifest) -> RunResult<()> {
    let times = uniform_time_grid(config.time.start, config.time.horizon, config.time.steps);
    match config.preset {
        Preset::ColeHopf1d => {
            let grid = Grid::new(1, config.grid.points_per_axis, config.grid.period)?;
            let psi_s = presets::sine_1d(&grid, 0.25, 1)?;
            let psi = VectorField::from_components(&grid, vec![psi_s.values().to_vec()])?;
            let problem = BurgersProblem::new(psi, 1.0, config.physics.nu, times.clone())?;
            let sol = solve_burgers(&problem, config.tol, config.max_iter)?;
            let oracle = cole_hopf_oracle(&psi_s, config.physics.nu, &times)?;
            let mut linf = 0.0f64;
            for k in 0..times.len() {
                let diff = sol.u.snapshot(k).sub(oracle.snapshot(k))?;
                linf = linf.max(fbflow::fields::sup_norm(&diff));
            }
            manifest.record("cole_hopf_linf_error", linf);
            manifest.record("iterations", sol.iterations as f64);
            io::write_vector_field(dir.join("u_initial.fbsd"), sol.u.snapshot(0))?;
            manifest.checksum_file(&dir.join("u_initial.fbsd"))?;
            emit_spacetime_diagnostics(&sol.u, dir, manifest)?;
            let energy = energy_identity_check(&problem, &sol.u, 0)?;
            manifest.record("energy_residual", energy.max_residual);
        }
        Preset::Heat => {
            let grid = grid_from(config)?;
            let psi = terminal_field(
                &RunConfig {
                    preset: Preset::TaylorGreen,
                    ..config.clone()
                },
                &grid,
            )?;
            let problem = BurgersProblem::new(psi.clone(), 0.0, config.physics.nu, times.clone())?;
            let sol = solve_burgers(&problem, config.tol, config.max_iter)?;
            let oracle = heat_convolve(
                &psi,
                config.time.horizon - config.time.start,
                config.physics.nu,
            )?;
            let err = l2_norm(&sol.u.snapshot(0).sub(&oracle)?);
            manifest.record("heat_l2_error", err);
            manifest.record("iterations", sol.iterations as f64);
            io::write_vector_field(dir.join("u_initial.fbsd"), sol.u.snapshot(0))?;
            manifest.checksum_file(&dir.join("u_initial.fbsd"))?;
            emit_spacetime_diagnostics(&sol.u, dir, manifest)?;
        }
        Preset::RandomBandlimited | Preset::RandomSolenoidal | Preset::TaylorGreen | Preset::File => {
            let grid = grid_from(config)?;
            let psi = terminal_field(config, &grid)?;
            let phi: Vec<VectorField> = times
                .iter()
                .map(|_| {
                    presets::random_bandlimited_vector(
                        &grid,
                        grid.n() / 8,
                        0.3,
                        &stream_from(config).child(7002),
                    )
                })
                .collect();
            let problem = BurgersProblem::new(psi, config.physics.alpha, config.physics.nu, times)?
                .with_forcing(phi)?;
            let sol = solve_burgers(&problem, config.tol, config.max_iter)?;
            manifest.record("iterations", sol.iterations as f64);
            let mp = max_principle_check(&problem, &sol.u, 1e-8)?;
            manifest.record("max_principle_ok", if mp.pass { 1.0 } else { 0.0 });
            let energy = energy_identity_check(&problem, &sol.u, 0)?;
            manifest.record("energy_residual", energy.max_residual);
            io::write_vector_field(dir.join("u_initial.fbsd"), sol.u.snapshot(0))?;
            manifest.checksum_file(&dir.join("u_initial.fbsd"))?;
            emit_spacetime_diagnostics(&sol.u, dir, manifest)?;
        }
    }
    Ok(())
}

/// `scheme`: the grid forward-backward recursion cross-validated against
/// the mild solver at the same truncation.
pub fn run_scheme(config: &RunConfig, dir: &Path, manifest: &mut RunManifest) -> RunResult<()> {
    let grid = grid_from(config)?;
    let g = leray_project(&terminal_field(config, &grid)?);
    let times = uniform_time_grid(config.time.start, config.time.horizon, config.time.steps);
    let problem = NsProblem::new(g.clone(), config.physics.nu, times)?;
    let scheme_config = SchemeConfig {
        n_trunc: config.truncation.horizon_n,
        expectation: ExpectationRule::GaussHermite {
            points: config.sampling.gh_points,
        },
        projection: SchemeProjection::TruncatedMultiplier,
        seed_stream: stream_from(config),
        suppress_nonlinearity: false,
    };
    let run = run_grid_scheme(&problem, &scheme_config)?;
    let mild = solve_ns(
        &problem,
        &ProjectionMode::TruncatedMultiplier {
            n_trunc: config.truncation.horizon_n,
        },
        config.tol,
        config.max_iter,
    )?;
    let rows: Vec<Vec<f64>> = (0..run.u.len())
        .map(|k| {
            let dist = l2_norm(&run.u.snapshot(k).sub(mild.u.snapshot(k)).unwrap());
            vec![run.u.times()[k], l2_norm(run.u.snapshot(k)), dist]
        })
        .collect();
    write_csv(&dir.join("scheme_steps.csv"), "time,l2,distance_to_mild", &rows)?;
    manifest.checksum_file(&dir.join("scheme_steps.csv"))?;
    let dist = run.u.sup_l2_distance(&mild.u)? / l2_norm(&g).max(1e-300);
    manifest.record("rel_distance_to_mild", dist);
    manifest.record("cfl_warnings", run.cfl_warnings as f64);
    io::write_vector_field(dir.join("u_initial.fbsd"), run.u.snapshot(0))?;
    manifest.checksum_file(&dir.join("u_initial.fbsd"))?;
    Ok(())
}

/// `lagrangian`: magnetization-variable estimate of the velocity against
/// the grid solution.
pub fn run_lagrangian(config: &RunConfig, dir: &Path, manifest: &mut RunManifest) -> RunResult<()> {
    let grid = grid_from(config)?;
    let g = leray_project(&terminal_field(config, &grid)?);
    let times = uniform_time_grid(config.time.start, config.time.horizon, config.time.steps);
    let problem = NsProblem::new(g.clone(), config.physics.nu, times)?;
    let sol = solve_ns(&problem, &ProjectionMode::Exact, config.tol, config.max_iter)?;
    let w = webber_velocity(
        &g,
        None,
        &sol.u,
        config.time.start,
        config.sampling.samples,
        config.sampling.flow_steps,
        config.physics.nu,
        stream_from(config),
    )?;
    let truth = sol.u.snapshot(0);
    let gap = l2_norm(&w.estimate.mean.sub(truth)?) / l2_norm(truth).max(1e-300);
    let noise = l2_norm(&w.estimate.stderr) / l2_norm(truth).max(1e-300);
    manifest.record("rel_gap", gap);
    manifest.record("rel_stderr", noise);
    io::write_vector_field(dir.join("webber_mean.fbsd"), &w.estimate.mean)?;
    manifest.checksum_file(&dir.join("webber_mean.fbsd"))?;
    io::write_vector_field(dir.join("webber_stderr.fbsd"), &w.estimate.stderr)?;
    manifest.checksum_file(&dir.join("webber_stderr.fbsd"))?;
    let rows = vec![vec![
        gap,
        noise,
        (config.time.horizon - config.time.start) / config.sampling.flow_steps as f64,
        grid.spacing() * grid.spacing(),
    ]];
    write_csv(&dir.join("self_consistency.csv"), "rel_gap,rel_stderr,dt,delta_sq", &rows)?;
    manifest.checksum_file(&dir.join("self_consistency.csv"))?;
    Ok(())
}

/// Dispatch a subcommand, producing the manifest.
pub fn execute(subcommand: &str, config: &RunConfig, out_dir: &Path) -> RunResult<RunManifest> {
    config.validate().map_err(|e| RunError::Config(e.0))?;
    std::fs::create_dir_all(out_dir)?;
    let mut manifest = RunManifest::new(subcommand, config.clone());
    let start = Instant::now();
    match subcommand {
        "leray" => run_leray(config, out_dir, &mut manifest)?,
        "ns" => run_ns(config, out_dir, &mut manifest)?,
        "convergence" => run_convergence(config, out_dir, &mut manifest)?,
        "burgers" => run_burgers(config, out_dir, &mut manifest)?,
        "scheme" => run_scheme(config, out_dir, &mut manifest)?,
        "lagrangian" => run_lagrangian(config, out_dir, &mut manifest)?,
        other => return Err(RunError::Config(format!("unknown subcommand {other}"))),
    }
    manifest.wall_time_seconds = start.elapsed().as_secs_f64();
    manifest.write(out_dir)?;
    Ok(manifest)
}

/// Output directory for a run: explicit flag, config, env var, default.
pub fn resolve_out_dir(config: &RunConfig, flag: Option<&PathBuf>) -> PathBuf {
    flag.cloned().unwrap_or_else(|| config.out_dir())
}
