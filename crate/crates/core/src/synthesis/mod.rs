//! Polytopic LMI synthesis of gain-scheduled static output feedback.
//!
//! Each vertex `i` of the parameter box carries `H_i, Q_i, S_i`; `P`, `R`
//! and the multiplier `L` are shared. Feasibility of
//!
//! ```text
//! Y_i + He{L C_di} <= -eps I,   [[Q_i + beta He{1 S_i^T}, beta 1 R], [., -R]] <= -eps I
//! ```
//!
//! at every vertex certifies the scheduled gain `K(rho) = sum_i alpha_i K_i`,
//! `K_i = -R^{-1} S_i^T`.

mod model;
mod verify;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dar::{DarError, DarSystem, ScheduledGain, DEFAULT_WELL_POSED_GRID};
use crate::numerics::{solve_linear, Mat};
use crate::sdp::{
    AffineLmi, SdpError, SdpProblem, Sense, SolveStatus, SolverStats, SolverTolerances,
};

pub use model::{
    build_gain_lmi, build_lower_bound, build_vertex_lmi, build_yi, declare_variables,
    CertificateHandles, GammaSlot, LmiModel, Mode,
};
pub use verify::{
    gain_consistency_check, hurwitz_grid, kernel_dissipativity_check, verify_certificate,
    CertificateEvaluator, CheckOutcome, HurwitzReport, SampleCheck, VerificationReport,
    INTERIOR_SAMPLES,
};

pub const DEFAULT_EPS: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthesisError {
    #[error("IllPosed: {0}")]
    IllPosed(String),
    #[error("NoPerformanceChannel: L2 synthesis needs a disturbance input or performance output")]
    NoPerformanceChannel,
    #[error("stabilization expects q = l = 0; strip the performance channel first")]
    PerformanceChannelPresent,
    #[error("invalid synthesis options: {0}")]
    InvalidOptions(String),
    #[error("Infeasible at beta = {beta}: solver status {status:?}{}", .message.as_deref().map(|m| format!(" ({m})")).unwrap_or_default())]
    Infeasible {
        beta: f64,
        status: SolveStatus,
        message: Option<String>,
    },
    #[error("AllInfeasible: {}", .0.iter().map(|o| format!("beta = {}: {}", o.beta, o.status)).collect::<Vec<_>>().join("; "))]
    AllInfeasible(Vec<BetaOutcome>),
    #[error("R is numerically singular; gains cannot be extracted")]
    SingularR,
    #[error(transparent)]
    Sdp(#[from] SdpError),
}

impl SynthesisError {
    pub(crate) fn from_dar(e: DarError) -> Self {
        match e {
            DarError::NoPerformanceChannel => SynthesisError::NoPerformanceChannel,
            other => SynthesisError::IllPosed(other.to_string()),
        }
    }

    /// True for outcomes the CLI reports as infeasible.
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            SynthesisError::Infeasible { .. } | SynthesisError::AllInfeasible(_)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaOutcome {
    pub beta: f64,
    pub status: String,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaChoice {
    Single(f64),
    Grid(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaMode {
    Minimize,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthesisOptions {
    pub beta: BetaChoice,
    pub eps_strict: f64,
    pub gamma_mode: GammaMode,
    pub tolerances: SolverTolerances,
}

impl SynthesisOptions {
    pub fn with_beta(beta: f64) -> Self {
        SynthesisOptions {
            beta: BetaChoice::Single(beta),
            eps_strict: DEFAULT_EPS,
            gamma_mode: GammaMode::Minimize,
            tolerances: SolverTolerances::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SynthesisError> {
        let bad = |m: String| Err(SynthesisError::InvalidOptions(m));
        if !(self.eps_strict > 0.0 && self.eps_strict.is_finite()) {
            return bad(format!("eps must be positive, got {}", self.eps_strict));
        }
        match &self.beta {
            BetaChoice::Single(b) if !b.is_finite() => return bad(format!("beta = {b}")),
            BetaChoice::Grid(g) if g.is_empty() => return bad("beta grid is empty".into()),
            BetaChoice::Grid(g) if g.iter().any(|b| !b.is_finite()) => {
                return bad("beta grid has non-finite entries".into())
            }
            _ => {}
        }
        if let GammaMode::Fixed(g) = self.gamma_mode {
            if !(g > 0.0 && g.is_finite()) {
                return bad(format!("fixed gamma must be positive, got {g}"));
            }
        }
        Ok(())
    }
}

/// Solved decision variables. `p` is the full storage matrix (`diag(P, I)`
/// in L2 mode); [`CertificateVars::p_state`] is the physical block.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateVars {
    pub n: usize,
    pub p: Mat,
    pub h: Vec<Mat>,
    pub q: Vec<Mat>,
    pub s: Vec<Mat>,
    pub r: Mat,
    pub l: Mat,
    pub gamma: Option<f64>,
}

impl CertificateVars {
    pub fn p_state(&self) -> Mat {
        self.p.view((0, 0), (self.n, self.n)).into_owned()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub status: SolveStatus,
    pub beta: f64,
    pub eps: f64,
    /// Largest eigenvalue over all vertex and gain LMIs at the solution.
    pub worst_lmi_eigenvalue: f64,
    pub solver: SolverStats,
    pub beta_search: Vec<BetaOutcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisResult {
    pub mode: Mode,
    pub certificate: CertificateVars,
    pub gains: ScheduledGain,
    pub gamma: Option<f64>,
    pub diagnostics: Diagnostics,
}

/// `K_i = -R^{-1} S_i^T`.
pub fn extract_gains(r: &Mat, s: &[Mat]) -> Result<ScheduledGain, SynthesisError> {
    let gains = s
        .iter()
        .map(|s_i| solve_linear(r, &s_i.transpose()).map(|k| -k))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| SynthesisError::SingularR)?;
    Ok(ScheduledGain::new(gains))
}

fn ensure_well_posed(dar: &DarSystem) -> Result<(), SynthesisError> {
    dar.ensure_valid().map_err(SynthesisError::from_dar)?;
    let report = dar.well_posedness(DEFAULT_WELL_POSED_GRID);
    if report.well_posed {
        Ok(())
    } else {
        Err(SynthesisError::IllPosed(format!(
            "U2 has condition number {:.3e} at rho = {:?}",
            report.worst_condition, report.worst_rho
        )))
    }
}

/// Assembles the full synthesis SDP for one `beta`.
pub fn assemble(
    model: &LmiModel,
    beta: f64,
    eps: f64,
    gamma_mode: GammaMode,
) -> Result<(SdpProblem, CertificateHandles), SynthesisError> {
    let fixed = match gamma_mode {
        GammaMode::Minimize => None,
        GammaMode::Fixed(g) => Some(g),
    };
    let mut problem = SdpProblem::new();
    let vars = declare_variables(&mut problem, model, fixed)?;
    problem.add_lmi(build_lower_bound(&vars.p, model.n, eps))?;
    problem.add_lmi(build_lower_bound(&vars.r, model.m, eps))?;
    if let GammaSlot::Variable(g) = &vars.gamma {
        let mut lmi = AffineLmi::new("gamma >= eps", 1, Sense::PositiveSemidefinite);
        lmi.add_scaled(g, crate::numerics::SymMat::identity(1))
            .add_constant(&crate::numerics::SymMat::identity(1).scale(-eps));
        problem.add_lmi(lmi)?;
        problem.minimize(g, Mat::identity(1, 1))?;
    }
    let per_vertex: Vec<[AffineLmi; 3]> = (0..model.vertex_count())
        .into_par_iter()
        .map(|i| {
            [
                build_lower_bound(&vars.h[i], model.n_s, eps),
                build_vertex_lmi(model, &vars, i, eps),
                build_gain_lmi(model, &vars, i, beta, eps),
            ]
        })
        .collect();
    for lmis in per_vertex {
        for lmi in lmis {
            problem.add_lmi(lmi)?;
        }
    }
    Ok((problem, vars))
}

fn solve_at(
    model: &LmiModel,
    beta: f64,
    opts: &SynthesisOptions,
) -> Result<SynthesisResult, SynthesisError> {
    let eps = opts.eps_strict;
    let (problem, vars) = assemble(model, beta, eps, opts.gamma_mode)?;
    let solution = problem.solve(&opts.tolerances)?;
    let values = match (&solution.values, solution.status.has_values()) {
        (Some(v), true) => v,
        _ => {
            return Err(SynthesisError::Infeasible {
                beta,
                status: solution.status,
                message: solution.stats.message.clone(),
            })
        }
    };
    let gamma = match &vars.gamma {
        GammaSlot::Absent => None,
        GammaSlot::Variable(g) => Some(values.scalar(g)),
        GammaSlot::Fixed(g) => Some(*g),
    };
    let certificate = CertificateVars {
        n: model.n,
        p: model.storage(&values.value(&vars.p)),
        h: vars.h.iter().map(|h| values.value(h)).collect(),
        q: vars.q.iter().map(|q| values.value(q)).collect(),
        s: vars.s.iter().map(|s| values.value(s)).collect(),
        r: values.value(&vars.r),
        l: values.value(&vars.l),
        gamma,
    };
    let gains = extract_gains(&certificate.r, &certificate.s)?;
    let worst = CertificateEvaluator::new(model, &certificate).worst_vertex_eigenvalue(beta);
    Ok(SynthesisResult {
        mode: model.mode,
        certificate,
        gains,
        gamma,
        diagnostics: Diagnostics {
            status: solution.status,
            beta,
            eps,
            worst_lmi_eigenvalue: worst,
            solver: solution.stats,
            beta_search: Vec::new(),
        },
    })
}

/// Runs every grid point and keeps the smallest `gamma`, preferring smaller
/// `|beta|` on ties. Without a performance variable every feasible point
/// ties, so the smallest feasible `|beta|` wins.
fn search(
    model: &LmiModel,
    grid: &[f64],
    opts: &SynthesisOptions,
) -> Result<SynthesisResult, SynthesisError> {
    if grid.is_empty() {
        return Err(SynthesisError::InvalidOptions("beta grid is empty".into()));
    }
    let runs: Vec<(f64, Result<SynthesisResult, SynthesisError>)> = grid
        .par_iter()
        .map(|&beta| (beta, solve_at(model, beta, opts)))
        .collect();
    let outcomes: Vec<BetaOutcome> = runs
        .iter()
        .map(|(beta, r)| BetaOutcome {
            beta: *beta,
            status: match r {
                Ok(res) => format!("{:?}", res.diagnostics.status).to_lowercase(),
                Err(e) => e.to_string(),
            },
            gamma: r.as_ref().ok().and_then(|res| res.gamma),
        })
        .collect();
    let best = runs.into_iter().filter_map(|(_, r)| r.ok()).min_by(|a, b| {
        let ga = a.gamma.unwrap_or(0.0);
        let gb = b.gamma.unwrap_or(0.0);
        let tie = (ga - gb).abs() <= 1e-9 * ga.abs().max(gb.abs()).max(1.0);
        if tie {
            a.diagnostics
                .beta
                .abs()
                .total_cmp(&b.diagnostics.beta.abs())
        } else {
            ga.total_cmp(&gb)
        }
    });
    match best {
        Some(mut res) => {
            res.diagnostics.beta_search = outcomes;
            Ok(res)
        }
        None => Err(SynthesisError::AllInfeasible(outcomes)),
    }
}

fn run(model: &LmiModel, opts: &SynthesisOptions) -> Result<SynthesisResult, SynthesisError> {
    match &opts.beta {
        BetaChoice::Single(beta) => solve_at(model, *beta, opts),
        BetaChoice::Grid(grid) => search(model, grid, opts),
    }
}

/// Feasibility synthesis for a DAR without performance channel.
pub fn synth_stabilize(
    dar: &DarSystem,
    opts: &SynthesisOptions,
) -> Result<SynthesisResult, SynthesisError> {
    opts.validate()?;
    let model = LmiModel::stabilization(dar)?;
    ensure_well_posed(dar)?;
    run(&model, opts)
}

/// L2-gain synthesis on the lifted system, minimizing `gamma` unless fixed.
pub fn synth_l2(
    dar: &DarSystem,
    opts: &SynthesisOptions,
) -> Result<SynthesisResult, SynthesisError> {
    opts.validate()?;
    let model = LmiModel::l2(dar)?;
    ensure_well_posed(dar)?;
    run(&model, opts)
}

/// L2 synthesis over a grid of `beta` values.
pub fn beta_search(
    dar: &DarSystem,
    grid: &[f64],
    opts: &SynthesisOptions,
) -> Result<SynthesisResult, SynthesisError> {
    let opts = SynthesisOptions {
        beta: BetaChoice::Grid(grid.to_vec()),
        ..opts.clone()
    };
    synth_l2(dar, &opts)
}
