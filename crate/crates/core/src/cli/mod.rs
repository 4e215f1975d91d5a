//! Command-line front end.
//!
//! Exit codes: 0 ok, 1 internal error, 2 validation failure, 3 I/O or parse
//! error, 4 infeasible synthesis, 5 diverged simulation.

mod bundle;
mod problem;

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::dar::{DarSystem, DEFAULT_WELL_POSED_GRID};
use crate::numerics::Vector;
use crate::simulate::{
    dissipation_audit, integrate, l2_dissipation_audit, l2_report, Signal, SimConfig, SimError,
    Trajectory,
};
use crate::synthesis::{
    hurwitz_grid, kernel_dissipativity_check, synth_l2, synth_stabilize, verify_certificate,
    BetaChoice, GammaMode, LmiModel, Mode, SynthesisError, SynthesisOptions, SynthesisResult,
};

pub use bundle::{
    merge, round15, to_json15, CertificateOut, DiagnosticsOut, MonotonicityCheck, Report,
    ReportEntry, ResultBundle, SimulationSummary,
};
pub use problem::{
    AffineSpec, BoxSpec, GammaModeSpec, Matrices, ParseError, ProblemFile, RowMatrix, SignalField,
    SimulationSpec, SynthesisSpec, Upsilon, SCHEMA_VERSION,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_PARSE: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;
pub const EXIT_DIVERGED: i32 = 5;

/// Kernel samples drawn when checking a fresh certificate.
const KERNEL_SAMPLES: usize = 1000;

#[derive(Debug, Parser)]
#[command(
    name = "gssof",
    version,
    about = "Gain-scheduled static output feedback for rational LPV plants"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check matrix dimensions and invertibility of U2 over the parameter box.
    Validate {
        problem: PathBuf,
        /// Grid points per parameter axis.
        #[arg(long, default_value_t = DEFAULT_WELL_POSED_GRID)]
        grid: usize,
    },
    /// Stabilizing synthesis; the disturbance and performance channels are dropped.
    Synth {
        problem: PathBuf,
        #[command(flatten)]
        flags: SynthFlags,
    },
    /// L2-gain synthesis.
    #[command(name = "synth-l2")]
    SynthL2 {
        problem: PathBuf,
        #[command(flatten)]
        flags: SynthFlags,
        /// Check feasibility at this gain instead of minimizing it.
        #[arg(long, allow_negative_numbers = true)]
        gamma_fixed: Option<f64>,
    },
    /// Simulate the closed loop with the gains from a result file.
    Simulate {
        problem: PathBuf,
        result: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Overrides the seed of every seeded-noise signal.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Merge synthesis results and simulation summaries into one report.
    Report {
        paths: Vec<PathBuf>,
        /// Directory for report.json; the report is always printed.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct SynthFlags {
    #[arg(long, allow_negative_numbers = true, conflicts_with = "beta_grid")]
    pub beta: Option<f64>,
    /// Comma-separated list of beta values; the best feasible one is kept.
    #[arg(long, allow_negative_numbers = true, value_delimiter = ',')]
    pub beta_grid: Option<Vec<f64>>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Grid points per axis for the frozen-parameter eigenvalue check.
    #[arg(long, default_value_t = DEFAULT_WELL_POSED_GRID)]
    pub grid: usize,
    /// Seed for the kernel sampling check.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Failure carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_VALIDATION
            } else {
                EXIT_OK
            };
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn dispatch(command: &Command) -> CliResult<()> {
    match command {
        Command::Validate { problem, grid } => cmd_validate(problem, *grid),
        Command::Synth { problem, flags } => cmd_synth(problem, flags, None, Mode::Stabilize),
        Command::SynthL2 {
            problem,
            flags,
            gamma_fixed,
        } => cmd_synth(problem, flags, *gamma_fixed, Mode::L2),
        Command::Simulate {
            problem,
            result,
            out,
            seed,
        } => cmd_simulate(problem, result, out, *seed),
        Command::Report { paths, out } => cmd_report(paths, out.as_deref()),
    }
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path)
        .map_err(|e| CliError::new(EXIT_PARSE, format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| {
            CliError::new(EXIT_PARSE, format!("cannot create {}: {e}", dir.display()))
        })?;
    }
    fs::write(path, contents)
        .map_err(|e| CliError::new(EXIT_PARSE, format!("cannot write {}: {e}", path.display())))
}

fn to_json(value: &impl Serialize) -> String {
    to_json15(value)
}

struct Loaded {
    file: ProblemFile,
    dar: DarSystem,
    name: String,
    stem: String,
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "problem".into(), |s| s.to_string_lossy().into_owned())
}

/// Reads and parses a problem file and checks it against its dimensions.
fn load(path: &Path) -> CliResult<Loaded> {
    let text = read(path)?;
    let file = ProblemFile::parse(&text)
        .map_err(|e| CliError::new(EXIT_PARSE, format!("{}: {e}", path.display())))?;
    let dar = file
        .to_dar()
        .map_err(|errs| CliError::new(EXIT_VALIDATION, errs.join("\n")))?;
    let report = dar.validate();
    if !report.is_valid() {
        return Err(CliError::new(EXIT_VALIDATION, report.violations.join("\n")));
    }
    let stem = stem(path);
    Ok(Loaded {
        name: file.name.clone().unwrap_or_else(|| stem.clone()),
        file,
        dar,
        stem,
    })
}

fn cmd_validate(path: &Path, grid: usize) -> CliResult<()> {
    let text = read(path)?;
    let file = ProblemFile::parse(&text)
        .map_err(|e| CliError::new(EXIT_PARSE, format!("{}: {e}", path.display())))?;
    println!("problem: {}", path.display());
    let dar = match file.to_dar() {
        Ok(dar) => dar,
        Err(errs) => {
            for e in &errs {
                println!("  violation: {e}");
            }
            return Err(CliError::new(EXIT_VALIDATION, "problem file is malformed"));
        }
    };
    let d = dar.dims;
    println!(
        "dims: n = {}, n_pi = {}, m = {}, p = {}, q = {}, l = {}, r = {}",
        d.n, d.n_pi, d.m, d.p, d.q, d.l, d.r
    );
    let report = dar.validate();
    if !report.is_valid() {
        for v in &report.violations {
            println!("  violation: {v}");
        }
        return Err(CliError::new(
            EXIT_VALIDATION,
            format!("{} dimension violation(s)", report.violations.len()),
        ));
    }
    println!("dimensions: ok");
    let wp = dar.well_posedness(grid);
    println!(
        "well-posedness: {} points, min singular value of U2 = {:.6e}, worst condition = {:.6e} at rho = {:?}",
        wp.points_checked, wp.min_singular_value, wp.worst_condition, wp.worst_rho
    );
    let mut problems = Vec::new();
    if !wp.well_posed {
        problems.push("U2 is (nearly) singular on the parameter box".to_string());
    }
    if let Some(sim) = &file.simulation {
        for (name, field) in [("rho_signal", &sim.rho_signal), ("w_signal", &sim.w_signal)] {
            if let Some(f) = field {
                let dim = if name == "rho_signal" { d.r } else { d.q };
                if let Err(e) = f.to_signal(dim) {
                    problems.push(format!("simulation.{name}: {e}"));
                }
            }
        }
    }
    if let Err(e) = synthesis_options(&file, &SynthFlags::none(), None) {
        if file.synthesis.is_some() {
            problems.push(format!("synthesis: {}", e.message));
        }
    }
    if problems.is_empty() {
        println!("verdict: ok");
        Ok(())
    } else {
        for p in &problems {
            println!("  violation: {p}");
        }
        Err(CliError::new(EXIT_VALIDATION, problems.join("; ")))
    }
}

impl SynthFlags {
    fn none() -> Self {
        SynthFlags {
            beta: None,
            beta_grid: None,
            eps: None,
            out: PathBuf::from("."),
            grid: DEFAULT_WELL_POSED_GRID,
            seed: 0,
        }
    }
}

/// Command-line flags take precedence over the file's synthesis block.
fn synthesis_options(
    file: &ProblemFile,
    flags: &SynthFlags,
    gamma_fixed: Option<f64>,
) -> CliResult<SynthesisOptions> {
    let spec = file.synthesis.clone().unwrap_or_default();
    let beta = match (&flags.beta, &flags.beta_grid, spec.beta, &spec.beta_grid) {
        (Some(b), _, _, _) => BetaChoice::Single(*b),
        (None, Some(g), _, _) => BetaChoice::Grid(g.clone()),
        (None, None, Some(b), _) => BetaChoice::Single(b),
        (None, None, None, Some(g)) => BetaChoice::Grid(g.clone()),
        _ => {
            return Err(CliError::new(
                EXIT_VALIDATION,
                "no beta given: use --beta, --beta-grid or the synthesis block",
            ))
        }
    };
    let gamma_mode = match (gamma_fixed, spec.gamma_mode, spec.gamma) {
        (Some(g), _, _) => GammaMode::Fixed(g),
        (None, Some(GammaModeSpec::Fixed), Some(g)) => GammaMode::Fixed(g),
        (None, Some(GammaModeSpec::Fixed), None) => {
            return Err(CliError::new(
                EXIT_VALIDATION,
                "gamma_mode = fixed needs synthesis.gamma",
            ))
        }
        _ => GammaMode::Minimize,
    };
    let mut opts = SynthesisOptions {
        beta,
        gamma_mode,
        ..SynthesisOptions::with_beta(0.0)
    };
    if let Some(eps) = flags.eps.or(spec.eps) {
        opts.eps_strict = eps;
    }
    opts.validate()
        .map_err(|e| CliError::new(EXIT_VALIDATION, e.to_string()))?;
    Ok(opts)
}

fn synthesis_error(e: SynthesisError) -> CliError {
    if e.is_infeasible() {
        let detail = match &e {
            SynthesisError::AllInfeasible(outcomes) => outcomes
                .iter()
                .map(|o| format!("  beta = {}: {}", o.beta, o.status))
                .collect::<Vec<_>>()
                .join("\n"),
            other => format!("  {other}"),
        };
        CliError::new(EXIT_INFEASIBLE, format!("synthesis infeasible\n{detail}"))
    } else {
        CliError::new(EXIT_VALIDATION, e.to_string())
    }
}

/// Independent checks stored alongside a fresh result.
fn result_checks(
    dar: &DarSystem,
    result: &SynthesisResult,
    grid: usize,
    seed: u64,
) -> CliResult<Value> {
    let internal = |e: SynthesisError| CliError::new(EXIT_INTERNAL, e.to_string());
    let verification = verify_certificate(dar, result).map_err(internal)?;
    let model = match result.mode {
        Mode::Stabilize => LmiModel::stabilization(dar),
        Mode::L2 => LmiModel::l2(dar),
    }
    .map_err(internal)?;
    let kernel = kernel_dissipativity_check(&model, &result.certificate, KERNEL_SAMPLES, seed)
        .map_err(internal)?;
    let hurwitz = hurwitz_grid(dar, &result.gains, grid).map_err(internal)?;
    Ok(json!({
        "verification": verification,
        "kernel_samples": { "passed": kernel.passed(), "result": kernel },
        "hurwitz_grid": { "passed": hurwitz.passed(), "result": hurwitz },
    }))
}

fn cmd_synth(
    path: &Path,
    flags: &SynthFlags,
    gamma_fixed: Option<f64>,
    mode: Mode,
) -> CliResult<()> {
    let loaded = load(path)?;
    let opts = synthesis_options(&loaded.file, flags, gamma_fixed)?;
    let (dar, suffix) = match mode {
        Mode::Stabilize => (loaded.dar.without_performance_channel(), "synth"),
        Mode::L2 => (loaded.dar.clone(), "synth-l2"),
    };
    let result = match mode {
        Mode::Stabilize => synth_stabilize(&dar, &opts),
        Mode::L2 => synth_l2(&dar, &opts),
    }
    .map_err(synthesis_error)?;
    let checks = result_checks(&dar, &result, flags.grid, flags.seed)?;
    let vertices = (0..dar.vertex_count())
        .map(|j| dar.bounds.vertex(j))
        .collect();
    let mut bundle = ResultBundle::new(
        loaded.name,
        path.display().to_string(),
        vertices,
        &result,
        checks,
    );
    let out = flags.out.join(format!("{}.{suffix}.json", loaded.stem));
    bundle.files.push(out.display().to_string());
    write(&out, &bundle.to_json())?;

    println!("status: {:?}", result.diagnostics.status);
    println!("beta: {}", result.diagnostics.beta);
    if let Some(g) = result.gamma {
        println!("gamma: {}", crate::simulate::fmt15(g));
    }
    for (i, k) in result.gains.gains.iter().enumerate() {
        let entries: Vec<String> = k.iter().map(|v| crate::simulate::fmt15(*v)).collect();
        println!("K_{} = [{}]", i + 1, entries.join(", "));
    }
    println!("result: {}", out.display());
    Ok(())
}

fn simulation_setup(
    loaded: &Loaded,
    seed: Option<u64>,
) -> CliResult<(SimConfig, Signal, Signal, bool)> {
    let d = loaded.dar.dims;
    let spec = loaded.file.simulation.clone().unwrap_or_default();
    let mut cfg = SimConfig::new(spec.x0.clone().unwrap_or_else(|| vec![0.0; d.n]));
    if let Some(t) = spec.t_end {
        cfg.t_end = t;
    }
    if let Some(dt) = spec.dt {
        cfg.dt = dt;
    }
    if let Some(i) = spec.integrator {
        cfg.integrator = i;
    }
    let invalid = |e: String| CliError::new(EXIT_VALIDATION, e);
    let mut rho_field = spec.rho_signal.clone();
    let mut w_field = spec.w_signal.clone();
    if let Some(seed) = seed {
        rho_field
            .iter_mut()
            .chain(w_field.iter_mut())
            .for_each(|f| f.reseed(seed));
    }
    let rho = match &rho_field {
        Some(f) => f
            .to_signal(d.r)
            .map_err(|e| invalid(format!("rho_signal: {e}")))?,
        None => {
            let b = &loaded.dar.bounds;
            let centre: Vec<f64> = b
                .lower()
                .iter()
                .zip(b.upper())
                .map(|(l, u)| 0.5 * (l + u))
                .collect();
            Signal::new(d.r, "box centre", move |_| centre.clone())
        }
    };
    let w_is_zero = w_field.as_ref().is_none_or(|f| {
        f.specs()
            .iter()
            .all(|s| matches!(s, crate::simulate::SignalSpec::Zero))
    });
    let w = match &w_field {
        Some(f) => f
            .to_signal(d.q)
            .map_err(|e| invalid(format!("w_signal: {e}")))?,
        None => Signal::zero(d.q),
    };
    Ok((cfg, rho, w, w_is_zero))
}

/// Fills `V` and `t_d`. Stabilization certificates belong to the plant
/// without disturbance channel and are only audited along undisturbed runs.
fn attach(
    dar: &DarSystem,
    result: &SynthesisResult,
    traj: &mut Trajectory,
    w_is_zero: bool,
) -> Result<bool, SimError> {
    match result.mode {
        Mode::L2 => traj.attach_certificate(dar, result).map(|_| true),
        Mode::Stabilize if w_is_zero => {
            let stripped = dar.without_performance_channel();
            let mut copy = traj.clone();
            copy.w = vec![Vector::zeros(0); copy.len()];
            copy.z = vec![Vector::zeros(0); copy.len()];
            copy.attach_certificate(&stripped, result)?;
            traj.v = copy.v;
            traj.t_d = copy.t_d;
            Ok(true)
        }
        Mode::Stabilize => {
            let p = result.certificate.p_state();
            traj.v = traj
                .x
                .iter()
                .map(|x| (x.transpose() * &p * x)[(0, 0)])
                .collect();
            traj.t_d = vec![f64::NAN; traj.len()];
            Ok(false)
        }
    }
}

fn cmd_simulate(
    problem: &Path,
    result_path: &Path,
    out: &Path,
    seed: Option<u64>,
) -> CliResult<()> {
    let loaded = load(problem)?;
    let bundle = ResultBundle::parse(&read(result_path)?)
        .map_err(|e| CliError::new(EXIT_PARSE, format!("{}: {e}", result_path.display())))?;
    let result = bundle
        .to_result()
        .map_err(|e| CliError::new(EXIT_PARSE, format!("{}: {e}", result_path.display())))?;
    let dar = &loaded.dar;
    let (nv, (m, p)) = (dar.vertex_count(), (dar.dims.m, dar.dims.p));
    if result.gains.gains.len() != nv || result.gains.gains.iter().any(|k| k.shape() != (m, p)) {
        return Err(CliError::new(
            EXIT_VALIDATION,
            format!("result gains do not match the problem: expected {nv} gains of shape {m}x{p}"),
        ));
    }
    let (cfg, rho, w, w_is_zero) = simulation_setup(&loaded, seed)?;
    let csv_path = out.join(format!("{}.trajectory.csv", loaded.stem));
    let write_csv = |traj: &Trajectory| -> CliResult<()> {
        let mut buf = Vec::new();
        traj.write_csv(&mut buf)
            .map_err(|e| CliError::new(EXIT_INTERNAL, e.to_string()))?;
        write(&csv_path, &String::from_utf8_lossy(&buf))
    };
    let mut traj = match integrate(dar, &result.gains, &rho, &w, &cfg) {
        Ok(traj) => traj,
        Err(SimError::Diverged { t, partial }) => {
            let mut partial = *partial;
            partial.v = vec![f64::NAN; partial.len()];
            partial.t_d = vec![f64::NAN; partial.len()];
            write_csv(&partial)?;
            return Err(CliError::new(
                EXIT_DIVERGED,
                format!(
                    "simulation diverged at t = {t}; partial trajectory in {}",
                    csv_path.display()
                ),
            ));
        }
        Err(e @ SimError::AlgebraicLoopSingular { .. }) | Err(e @ SimError::InvalidConfig(_)) => {
            return Err(CliError::new(EXIT_VALIDATION, e.to_string()))
        }
        Err(e) => return Err(CliError::new(EXIT_VALIDATION, e.to_string())),
    };
    let internal = |e: SimError| CliError::new(EXIT_INTERNAL, e.to_string());
    let audited = attach(dar, &result, &mut traj, w_is_zero).map_err(internal)?;
    write_csv(&traj)?;

    let v_check = w_is_zero.then(|| {
        let v0 = traj.v.first().copied().unwrap_or(0.0);
        let max_increase = traj.max_v_increase();
        let tolerance = 1e-6 * v0;
        MonotonicityCheck {
            v0,
            max_increase,
            tolerance,
            passed: max_increase <= tolerance,
        }
    });
    let dissipation = if audited {
        let stripped;
        let (audit_dar, audit_traj) = if result.mode == Mode::Stabilize {
            stripped = dar.without_performance_channel();
            let mut copy = traj.clone();
            copy.w = vec![Vector::zeros(0); copy.len()];
            copy.z = vec![Vector::zeros(0); copy.len()];
            (&stripped, copy)
        } else {
            (dar, traj.clone())
        };
        Some(dissipation_audit(audit_dar, &result, &audit_traj).map_err(internal)?)
    } else {
        None
    };
    let (l2, l2_audit) = match (result.mode, result.gamma) {
        (Mode::L2, Some(gamma)) => {
            let p = result.certificate.p_state();
            let report = l2_report(&traj, gamma, &p);
            let audit =
                l2_dissipation_audit(dar, &result.gains, gamma, &p, &traj).map_err(internal)?;
            (Some(report), Some(audit))
        }
        _ => (None, None),
    };
    let passed = v_check.as_ref().is_none_or(|c| c.passed)
        && dissipation.as_ref().is_none_or(|a| a.passed)
        && l2.as_ref().is_none_or(|r| r.passed)
        && l2_audit.as_ref().is_none_or(|a| a.passed);
    let summary = SimulationSummary {
        schema_version: SCHEMA_VERSION,
        kind: SimulationSummary::KIND.into(),
        problem: loaded.name.clone(),
        problem_path: problem.display().to_string(),
        result_path: result_path.display().to_string(),
        csv: csv_path.display().to_string(),
        mode: result.mode,
        gamma: result.gamma,
        samples: traj.len(),
        t_end: cfg.t_end,
        dt: cfg.dt,
        final_state_norm: round15(traj.final_state_norm()),
        max_algebraic_residual: traj.max_algebraic_residual,
        v_non_increasing: v_check,
        dissipation_audit: dissipation,
        l2,
        l2_dissipation_audit: l2_audit,
        passed,
    };
    let summary_path = out.join(format!("{}.summary.json", loaded.stem));
    write(&summary_path, &to_json(&summary))?;

    println!(
        "final state norm: {}",
        crate::simulate::fmt15(summary.final_state_norm)
    );
    if let Some(r) = &summary.l2 {
        println!(
            "|z|_2 = {}, |w|_2 = {}, bound = {}",
            crate::simulate::fmt15(r.z_norm),
            crate::simulate::fmt15(r.w_norm),
            crate::simulate::fmt15(r.bound)
        );
    }
    println!("audits passed: {}", summary.passed);
    println!("trajectory: {}", csv_path.display());
    println!("summary: {}", summary_path.display());
    Ok(())
}

fn cmd_report(paths: &[PathBuf], out: Option<&Path>) -> CliResult<()> {
    if paths.is_empty() {
        return Err(CliError::new(
            EXIT_PARSE,
            "report needs at least one input file",
        ));
    }
    let mut docs = Vec::new();
    for path in paths {
        let text = read(path)?;
        let doc: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::new(EXIT_PARSE, format!("{}: {e}", path.display())))?;
        docs.push((path.display().to_string(), doc));
    }
    let report = merge(docs).map_err(|e| CliError::new(EXIT_PARSE, e))?;
    let text = to_json(&report);
    if let Some(dir) = out {
        write(&dir.join("report.json"), &text)?;
    }
    // a closed pipe (e.g. `| head`) is not an error
    let _ = writeln!(std::io::stdout(), "{text}");
    Ok(())
}
