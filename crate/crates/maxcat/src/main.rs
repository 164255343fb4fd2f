//! Command-line interface: scenario runs, homogeneous relaxation, and
//! the sampled verification suites.
//!
//! Exit codes: 0 on success (and when every verification check passes),
//! 1 on configuration or I/O errors and on failed checks, 2 when a run
//! aborts because a state leaves the admissible set.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use maxcat::closure;
use maxcat::config::{parse_config, Model, RunConfig};
use maxcat::convexity::{self, CheckRecord, MinorFamily, Target};
use maxcat::eos::{ElasticLaw, VolumetricEos};
use maxcat::flux;
use maxcat::kbkz::{self, ConservedStateKbkz, KbkzParams};
use maxcat::output::{self, DiagnosticsWriter};
use maxcat::solver::{self, RunParams, SolverError};
use maxcat::state::{self, ConservedState, Material};
use maxcat::tensor::SymMat3;

/// Acceptance threshold on the relative Frobenius asymmetry of `H A`
/// over the involution-compatible subspace.
const SYMMETRIZER_TOL: f64 = 1e-4;

/// Relative tolerance for closed-form vs finite-difference minors.
const MINORS_TOL: f64 = 1e-6;

/// Finite-volume simulator and verification suite for non-isothermal
/// compressible viscoelastic flow with relaxing heat conduction.
#[derive(Parser)]
#[command(name = "maxcat", version, about)]
struct Cli {
    /// Worker threads for cell loops and sampled checks (1 = sequential
    /// and bit-reproducible).
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Advance a configured 1D scenario; write snapshots and diagnostics.
    Run {
        /// Path to an INI run configuration.
        config: PathBuf,
    },
    /// Integrate the spatially homogeneous relaxation equations from the
    /// configured start; write the trajectory table.
    Relax {
        /// Path to an INI run configuration.
        config: PathBuf,
    },
    /// Sample-based verification of the structural properties.
    Verify {
        #[command(subcommand)]
        suite: Suite,
    },
}

#[derive(Subcommand)]
enum Suite {
    /// FD Hessians of the total entropy density are positive definite at
    /// sampled admissible states.
    Convexity(SuiteArgs),
    /// The entropy Hessian symmetrizes the flux Jacobian on the
    /// involution-compatible subspace.
    Symmetrizer(SuiteArgs),
    /// Closed-form Hessian minors match finite differences; the covolume
    /// bracket discriminants match their reduced forms.
    Minors(SuiteArgs),
}

#[derive(Args)]
struct SuiteArgs {
    /// Sampled points per check (default: the suite's own count).
    #[arg(long)]
    samples: Option<usize>,
    /// Seed for the state samplers.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Restrict to one model; the default checks both.
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    /// Report CSV path (default: verify_<suite>.csv).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Maxwell,
    Kbkz,
}

/// Failure channel with the exit code it maps to.
enum Failure {
    /// Unreadable or invalid configuration (exit 1).
    Config(String),
    /// I/O or suite-infrastructure failure (exit 1).
    Runtime(String),
    /// A state left the admissible set (exit 2).
    Inadmissible(String),
    /// Verification ran but at least one check failed (exit 1); the
    /// summary has already been printed.
    ChecksFailed,
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn inadmissible(e: impl std::fmt::Display) -> Failure {
    Failure::Inadmissible(e.to_string())
}

fn from_solver(e: SolverError) -> Failure {
    Failure::Inadmissible(e.to_string())
}

fn from_output(e: output::OutputError) -> Failure {
    match e {
        output::OutputError::Io(io) => Failure::Runtime(io.to_string()),
        other => Failure::Inadmissible(other.to_string()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::ChecksFailed) => ExitCode::from(1),
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Inadmissible(m)) => {
            // The wrapped errors are self-descriptive ("inadmissible
            // state: ...", "CFL collapse ...", "relaxation failed ...").
            eprintln!("aborted: {m}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config } => cmd_run(&config, cli.threads),
        Command::Relax { config } => cmd_relax(&config),
        Command::Verify { suite } => cmd_verify(suite, cli.threads),
    }
}

fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| Failure::Config(e.to_string()))
}

// =====================================================================
// run
// =====================================================================

fn cmd_run(path: &Path, threads: usize) -> Result<(), Failure> {
    let cfg = load_config(path)?;
    std::fs::create_dir_all(&cfg.output.directory).map_err(runtime)?;
    match cfg.model {
        Model::Maxwell => run_maxwell(&cfg, threads),
        Model::Kbkz => run_kbkz(&cfg, threads),
    }
}

fn run_params(cfg: &RunConfig, threads: usize) -> RunParams {
    RunParams {
        cfl: cfg.cfl,
        t_end: cfg.t_end,
        max_steps: cfg.max_steps,
        threads,
    }
}

fn run_maxwell(cfg: &RunConfig, threads: usize) -> Result<(), Failure> {
    let mut grid = cfg.initial_grid().map_err(inadmissible)?;
    let dir = cfg.output.directory.clone();
    let precision = cfg.output.precision;
    let every = cfg.output.snapshot_every;
    let mut diagnostics =
        DiagnosticsWriter::create(&dir.join("diagnostics.csv"), precision).map_err(runtime)?;
    let mut sink_err: Option<Failure> = None;
    let mut last_snapshot: Option<usize> = None;
    let summary = solver::run(
        &mut grid,
        &cfg.material,
        &run_params(cfg, threads),
        |step, g, diag| {
            if sink_err.is_some() {
                return;
            }
            if let Err(e) = diagnostics.append(step, diag) {
                sink_err = Some(runtime(e));
                return;
            }
            if step % every == 0 {
                let path = dir.join(format!("snapshot_{step}.csv"));
                match output::write_snapshot(&path, g, &cfg.material, precision) {
                    Ok(()) => last_snapshot = Some(step),
                    Err(e) => sink_err = Some(from_output(e)),
                }
            }
        },
    )
    .map_err(from_solver)?;
    if let Some(e) = sink_err {
        return Err(e);
    }
    if last_snapshot != Some(summary.steps) {
        let path = dir.join(format!("snapshot_{}.csv", summary.steps));
        output::write_snapshot(&path, &grid, &cfg.material, precision).map_err(from_output)?;
    }
    diagnostics.finish().map_err(runtime)?;
    println!(
        "run: {} steps to t = {}, output in {}",
        summary.steps,
        output::format_g(summary.time, 6),
        dir.display()
    );
    Ok(())
}

fn run_kbkz(cfg: &RunConfig, threads: usize) -> Result<(), Failure> {
    let mut grid = cfg.initial_grid_kbkz().map_err(inadmissible)?;
    let dir = cfg.output.directory.clone();
    let precision = cfg.output.precision;
    let every = cfg.output.snapshot_every;
    let params = cfg.kbkz_params;
    let mut diagnostics =
        DiagnosticsWriter::create(&dir.join("diagnostics.csv"), precision).map_err(runtime)?;
    let mut sink_err: Option<Failure> = None;
    let mut last_snapshot: Option<usize> = None;
    let summary = kbkz::run(
        &mut grid,
        &params,
        &cfg.material,
        &run_params(cfg, threads),
        |step, g, diag| {
            if sink_err.is_some() {
                return;
            }
            if let Err(e) = diagnostics.append(step, diag) {
                sink_err = Some(runtime(e));
                return;
            }
            if step % every == 0 {
                let path = dir.join(format!("snapshot_{step}.csv"));
                match output::write_snapshot_kbkz(&path, g, &params, &cfg.material, precision) {
                    Ok(()) => last_snapshot = Some(step),
                    Err(e) => sink_err = Some(from_output(e)),
                }
            }
        },
    )
    .map_err(from_solver)?;
    if let Some(e) = sink_err {
        return Err(e);
    }
    if last_snapshot != Some(summary.steps) {
        let path = dir.join(format!("snapshot_{}.csv", summary.steps));
        output::write_snapshot_kbkz(&path, &grid, &params, &cfg.material, precision)
            .map_err(from_output)?;
    }
    diagnostics.finish().map_err(runtime)?;
    println!(
        "run: {} steps to t = {}, output in {}",
        summary.steps,
        output::format_g(summary.time, 6),
        dir.display()
    );
    Ok(())
}

// =====================================================================
// relax
// =====================================================================

fn trajectory_row(u: &ConservedState, mat: &Material, t: f64) -> Result<[f64; 6], Failure> {
    let pv = state::to_primitive(u, mat).map_err(inadmissible)?;
    let sigma = closure::entropy_production(&pv, mat).map_err(inadmissible)?;
    // Elastic (network) part of the stress: the full Cauchy stress with
    // the solvent pressure added back. Decays to zero at equilibrium.
    let network = closure::cauchy_stress(&pv, mat).add(&SymMat3::scaled_identity(pv.p));
    Ok([
        t,
        pv.theta,
        pv.tr_c,
        network.frob(),
        sigma,
        pv.dety * pv.y.det(),
    ])
}

fn trajectory_row_kbkz(
    u: &ConservedStateKbkz,
    params: &KbkzParams,
    mat: &Material,
    t: f64,
) -> Result<[f64; 6], Failure> {
    let pv = kbkz::to_primitive(u, params, mat).map_err(inadmissible)?;
    let sigma = kbkz::entropy_production(&pv, params, mat).map_err(inadmissible)?;
    let network = kbkz::network_stress(&pv, params, mat);
    Ok([
        t,
        pv.theta,
        pv.tr_c1,
        network.frob(),
        sigma,
        pv.dety1 * pv.y1.det(),
    ])
}

fn cmd_relax(path: &Path) -> Result<(), Failure> {
    let cfg = load_config(path)?;
    std::fs::create_dir_all(&cfg.output.directory).map_err(runtime)?;
    let n_rows = if cfg.t_end > 0.0 {
        cfg.max_steps.min(1000)
    } else {
        0
    };
    let dt = if n_rows > 0 {
        cfg.t_end / n_rows as f64
    } else {
        0.0
    };
    let mut rows = Vec::with_capacity(n_rows + 1);
    match cfg.model {
        Model::Maxwell => {
            let mut u = cfg.initial_state().map_err(inadmissible)?;
            rows.push(trajectory_row(&u, &cfg.material, 0.0)?);
            for k in 1..=n_rows {
                u = solver::relax_substep(&u, &cfg.material, dt).map_err(from_solver)?;
                rows.push(trajectory_row(&u, &cfg.material, k as f64 * dt)?);
            }
        }
        Model::Kbkz => {
            let params = cfg.kbkz_params;
            let mut u = cfg.initial_state_kbkz().map_err(inadmissible)?;
            rows.push(trajectory_row_kbkz(&u, &params, &cfg.material, 0.0)?);
            for k in 1..=n_rows {
                u = kbkz::relax_substep(&u, &params, &cfg.material, dt).map_err(from_solver)?;
                rows.push(trajectory_row_kbkz(&u, &params, &cfg.material, k as f64 * dt)?);
            }
        }
    }
    let path = cfg.output.directory.join("trajectory.csv");
    output::write_trajectory(&path, &rows, cfg.output.precision).map_err(runtime)?;
    let last = rows.last().expect("at least the initial row");
    println!(
        "relax: {} rows to t = {}, final theta = {}, sigma = {}, trajectory in {}",
        rows.len(),
        output::format_g(last[0], 6),
        output::format_g(last[1], 6),
        output::format_g(last[4], 6),
        path.display()
    );
    Ok(())
}

// =====================================================================
// verify
// =====================================================================

#[derive(Copy, Clone)]
enum SuiteKind {
    Convexity,
    Symmetrizer,
    Minors,
}

impl SuiteKind {
    fn name(self) -> &'static str {
        match self {
            SuiteKind::Convexity => "convexity",
            SuiteKind::Symmetrizer => "symmetrizer",
            SuiteKind::Minors => "minors",
        }
    }
}

fn cmd_verify(suite: Suite, threads: usize) -> Result<(), Failure> {
    let (kind, args) = match suite {
        Suite::Convexity(a) => (SuiteKind::Convexity, a),
        Suite::Symmetrizer(a) => (SuiteKind::Symmetrizer, a),
        Suite::Minors(a) => (SuiteKind::Minors, a),
    };
    if args.samples == Some(0) {
        Cli::command()
            .error(
                clap::error::ErrorKind::InvalidValue,
                "--samples must be at least 1",
            )
            .exit();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(runtime)?;
    let records = pool.install(|| match kind {
        SuiteKind::Convexity => verify_convexity(&args),
        SuiteKind::Symmetrizer => verify_symmetrizer(&args),
        SuiteKind::Minors => verify_minors(&args),
    })?;
    for r in &records {
        println!(
            "{}  {} (samples = {}, worst margin = {})",
            if r.pass { "PASS" } else { "FAIL" },
            r.label,
            r.samples,
            output::format_g(r.worst, 6)
        );
    }
    let report_path = args
        .report
        .unwrap_or_else(|| PathBuf::from(format!("verify_{}.csv", kind.name())));
    output::write_report(&report_path, &records, 17).map_err(runtime)?;
    let failed = records.iter().filter(|r| !r.pass).count();
    if failed == 0 {
        println!(
            "verify {}: PASS ({} checks, report in {})",
            kind.name(),
            records.len(),
            report_path.display()
        );
        Ok(())
    } else {
        println!(
            "verify {}: FAIL ({failed} of {} checks, report in {})",
            kind.name(),
            records.len(),
            report_path.display()
        );
        Err(Failure::ChecksFailed)
    }
}

/// The material family matrix the convexity acceptance sweeps: the
/// single-network model under all three constitutive variations, and the
/// two-network model at the baseline.
fn material_variants() -> [(&'static str, Material); 3] {
    let base = Material::baseline();
    let mut nasg = base.clone();
    nasg.eos = VolumetricEos::Nasg {
        c_v: 1.0,
        gamma: 1.4,
        theta_ref: 1.0,
        rho_ref: 1.0,
        b: 0.1,
        q: 0.3,
        p_inf: 2.0,
    };
    let mut fene = base.clone();
    fene.elastic = ElasticLaw::FeneP {
        k0: 0.5,
        k1: 0.5,
        b_ext: 10.0,
    };
    [
        ("maxwell+polytropic", base),
        ("maxwell+nasg", nasg),
        ("maxwell+fenep", fene),
    ]
}

fn prefix_records(tag: &str, records: Vec<CheckRecord>) -> Vec<CheckRecord> {
    records
        .into_iter()
        .map(|mut r| {
            r.label = format!("{tag}: {}", r.label);
            r
        })
        .collect()
}

fn verify_convexity(args: &SuiteArgs) -> Result<Vec<CheckRecord>, Failure> {
    let samples = args.samples.unwrap_or(100);
    let mut records = Vec::new();
    if args.model != Some(ModelArg::Kbkz) {
        for (tag, mat) in material_variants() {
            let rep =
                convexity::strict_convexity_sample(Target::ConservedEntropy, &mat, samples, args.seed)
                    .map_err(runtime)?;
            records.extend(prefix_records(tag, rep.records));
        }
    }
    if args.model != Some(ModelArg::Maxwell) {
        let rep = kbkz::convexity_check(
            &KbkzParams::baseline(),
            &Material::baseline(),
            samples,
            args.seed,
        )
        .map_err(runtime)?;
        records.extend(prefix_records("kbkz+polytropic", rep.records));
    }
    Ok(records)
}

fn verify_symmetrizer(args: &SuiteArgs) -> Result<Vec<CheckRecord>, Failure> {
    let samples = args.samples.unwrap_or(50);
    let mut records = Vec::new();
    if args.model != Some(ModelArg::Kbkz) {
        let mat = Material::baseline();
        let states = convexity::sample_tempered_states(&mat, samples, args.seed).map_err(runtime)?;
        let reports = states
            .par_iter()
            .map(|u| flux::symmetrizer_check(u, &mat, 0))
            .collect::<Result<Vec<_>, _>>()
            .map_err(runtime)?;
        records.extend(symmetrizer_records("maxwell", samples, &reports));
    }
    if args.model != Some(ModelArg::Maxwell) {
        let params = KbkzParams::baseline();
        let mat = Material::baseline();
        let states = kbkz::sample_states(&params, &mat, samples, args.seed).map_err(runtime)?;
        let reports = states
            .par_iter()
            .map(|u| kbkz::symmetrizer_check(u, &params, &mat, 0))
            .collect::<Result<Vec<_>, _>>()
            .map_err(runtime)?;
        records.extend(symmetrizer_records("kbkz", samples, &reports));
    }
    Ok(records)
}

fn symmetrizer_records(
    tag: &str,
    samples: usize,
    reports: &[flux::SymmetrizerReport],
) -> Vec<CheckRecord> {
    let min_eig = reports
        .iter()
        .map(|r| r.min_eig_h)
        .fold(f64::INFINITY, f64::min);
    let worst_asym = reports.iter().map(|r| r.asym_rel).fold(0.0, f64::max);
    vec![
        CheckRecord {
            label: format!("{tag}: entropy Hessian positive definite"),
            samples,
            worst: min_eig,
            pass: min_eig > 0.0,
        },
        CheckRecord {
            label: format!("{tag}: flux symmetrization asymmetry below {SYMMETRIZER_TOL:.0e}"),
            samples,
            worst: worst_asym,
            pass: worst_asym < SYMMETRIZER_TOL,
        },
    ]
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo.ln()..hi.ln()).exp()
}

fn verify_minors(args: &SuiteArgs) -> Result<Vec<CheckRecord>, Failure> {
    let samples = args.samples.unwrap_or(100);
    let mut records = Vec::new();
    let families: &[(MinorFamily, &str)] = match args.model {
        Some(ModelArg::Maxwell) => &[
            (MinorFamily::Pg, "polytropic family"),
            (MinorFamily::Nasg, "covolume family"),
        ],
        Some(ModelArg::Kbkz) => &[(MinorFamily::Kbkz, "two-network family")],
        None => &[
            (MinorFamily::Pg, "polytropic family"),
            (MinorFamily::Nasg, "covolume family"),
            (MinorFamily::Kbkz, "two-network family"),
        ],
    };
    for &(family, label) in families {
        let reports = convexity::minor_sweep(family, samples, args.seed, MINORS_TOL)
            .map_err(runtime)?;
        let worst = reports
            .iter()
            .flat_map(|r| r.rel_err.iter().copied())
            .fold(0.0, f64::max);
        let pass = reports.iter().all(|r| r.pass);
        records.push(CheckRecord {
            label: format!("closed-form minors vs FD: {label}"),
            samples,
            worst,
            pass,
        });
    }
    if args.model != Some(ModelArg::Kbkz) {
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        let mut worst = 0.0f64;
        for _ in 0..20 {
            let p = log_uniform(&mut rng, 0.3, 3.0);
            let q = log_uniform(&mut rng, 0.3, 3.0);
            let r = log_uniform(&mut rng, 0.3, 3.0);
            let b = log_uniform(&mut rng, 0.02, 0.5);
            let (d1, d2) = convexity::nasg_discriminants(p, q, r, b);
            let (e1, e2) = convexity::nasg_discriminants_reduced(p, r, b);
            worst = worst.max(((d1 - e1) / e1).abs()).max(((d2 - e2) / e2).abs());
        }
        records.push(CheckRecord {
            label: "covolume bracket discriminants match reduced forms".into(),
            samples: 20,
            worst,
            pass: worst <= 1e-12,
        });
    }
    Ok(records)
}
