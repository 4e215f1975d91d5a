//! Solver-agnostic semidefinite programs over matrix decision variables.
//!
//! A problem declares symmetric, rectangular and scalar variables, affine
//! matrix inequalities in those variables, and a linear objective. Solving
//! lowers everything to `F0 + sum_j theta_j F_j >= 0` over the flattened
//! unknown vector `theta` and hands it to an [`SdpBackend`].

mod clarabel_backend;
mod sdpa;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{sym_eig_max, sym_eig_min, Mat, SymMat};

pub use clarabel_backend::ClarabelBackend;

/// Largest eigenvalue violation tolerated in a reported solution.
pub const VIOLATION_TOLERANCE: f64 = 1e-7;
/// Relative duality gap below which a solution with an objective is optimal.
pub const OPTIMALITY_GAP: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdpError {
    #[error("variable name must not be empty")]
    EmptyName,
    #[error("duplicate variable name `{0}`")]
    DuplicateName(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("constraint `{name}`: {detail}")]
    Dimension { name: String, detail: String },
    #[error("problem has no variables")]
    NoVariables,
    #[error("value for `{name}` has shape {got:?}, expected {expected:?}")]
    ValueShape {
        name: String,
        expected: (usize, usize),
        got: (usize, usize),
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VarKind {
    Symmetric(usize),
    Rectangular(usize, usize),
    Scalar,
}

impl VarKind {
    /// Number of scalar unknowns (upper triangle for symmetric variables).
    pub fn unknowns(&self) -> usize {
        match *self {
            VarKind::Symmetric(d) => d * (d + 1) / 2,
            VarKind::Rectangular(r, c) => r * c,
            VarKind::Scalar => 1,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match *self {
            VarKind::Symmetric(d) => (d, d),
            VarKind::Rectangular(r, c) => (r, c),
            VarKind::Scalar => (1, 1),
        }
    }

    /// `(row, col)` of unknown `k`, with symmetric variables enumerated over
    /// their upper triangle row by row.
    fn position(&self, k: usize) -> (usize, usize) {
        match *self {
            VarKind::Symmetric(d) => {
                let mut k = k;
                for i in 0..d {
                    let len = d - i;
                    if k < len {
                        return (i, i + k);
                    }
                    k -= len;
                }
                unreachable!("unknown index out of range")
            }
            VarKind::Rectangular(_, c) => (k / c, k % c),
            VarKind::Scalar => (0, 0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarHandle {
    id: usize,
    offset: usize,
    kind: VarKind,
    name: String,
}

impl VarHandle {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn kind(&self) -> VarKind {
        self.kind
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn unknowns(&self) -> usize {
        self.kind.unknowns()
    }

    /// Range of this variable's unknowns inside `theta`.
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.unknowns()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sense {
    NegativeSemidefinite,
    PositiveSemidefinite,
}

/// How a variable enters an LMI.
#[derive(Debug, Clone, PartialEq)]
pub enum LinearMap {
    /// `He{left V right} = left V right + (left V right)^T`.
    He { left: Mat, right: Mat },
    /// `v M` for a scalar variable `v` and symmetric `M`.
    Scale(SymMat),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmiTerm {
    pub var: VarHandle,
    pub map: LinearMap,
}

impl LmiTerm {
    fn contribution(&self, value: &Mat) -> Mat {
        match &self.map {
            LinearMap::He { left, right } => {
                let m = left * value * right;
                &m + m.transpose()
            }
            LinearMap::Scale(s) => s.to_mat() * value[(0, 0)],
        }
    }

    /// Contribution of unknown `k` set to one, all others zero.
    fn basis_contribution(&self, k: usize) -> Mat {
        let (i, j) = self.var.kind.position(k);
        match &self.map {
            LinearMap::He { left, right } => {
                let mut m = left.column(i) * right.row(j);
                if let VarKind::Symmetric(_) = self.var.kind {
                    if i != j {
                        m += left.column(j) * right.row(i);
                    }
                }
                &m + m.transpose()
            }
            LinearMap::Scale(s) => s.to_mat(),
        }
    }
}

/// `constant + sum of terms` compared against zero in the given sense.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineLmi {
    pub name: String,
    pub constant: SymMat,
    pub terms: Vec<LmiTerm>,
    pub sense: Sense,
}

impl AffineLmi {
    pub fn new(name: impl Into<String>, dim: usize, sense: Sense) -> Self {
        AffineLmi {
            name: name.into(),
            constant: SymMat::zeros(dim),
            terms: Vec::new(),
            sense,
        }
    }

    pub fn dim(&self) -> usize {
        self.constant.dim()
    }

    pub fn add_constant(&mut self, m: &SymMat) -> &mut Self {
        self.constant = self.constant.add(m).expect("constant block dimension");
        self
    }

    /// Adds `He{left V right}`.
    pub fn add_he(&mut self, var: &VarHandle, left: Mat, right: Mat) -> &mut Self {
        self.terms.push(LmiTerm {
            var: var.clone(),
            map: LinearMap::He { left, right },
        });
        self
    }

    /// Adds `coeff * E V E^T` for a symmetric variable, `E` embedding its
    /// block into the LMI.
    pub fn add_congruence(&mut self, var: &VarHandle, embed: &Mat, coeff: f64) -> &mut Self {
        self.add_he(var, embed * (0.5 * coeff), embed.transpose())
    }

    /// Adds `v * m` for a scalar variable.
    pub fn add_scaled(&mut self, var: &VarHandle, m: SymMat) -> &mut Self {
        self.terms.push(LmiTerm {
            var: var.clone(),
            map: LinearMap::Scale(m),
        });
        self
    }

    /// Evaluates the left-hand side at the given values.
    pub fn evaluate(&self, values: &VarValues) -> SymMat {
        let mut total = self.constant.to_mat();
        for term in &self.terms {
            total += term.contribution(&values.value(&term.var));
        }
        SymMat::symmetric_part(&total).expect("square by construction")
    }

    fn check(&self, vars: &[VarHandle]) -> Result<(), SdpError> {
        let dim = self.dim();
        let err = |detail: String| SdpError::Dimension {
            name: self.name.clone(),
            detail,
        };
        for term in &self.terms {
            if vars.get(term.var.id) != Some(&term.var) {
                return Err(SdpError::UnknownVariable(term.var.name.clone()));
            }
            let (vr, vc) = term.var.kind.shape();
            match &term.map {
                LinearMap::He { left, right } => {
                    if left.nrows() != dim || right.ncols() != dim {
                        return Err(err(format!(
                            "term in `{}` maps to {}x{}, constraint is {dim}x{dim}",
                            term.var.name,
                            left.nrows(),
                            right.ncols()
                        )));
                    }
                    if left.ncols() != vr || right.nrows() != vc {
                        return Err(err(format!(
                            "factors around `{}` ({vr}x{vc}) are {}x{} and {}x{}",
                            term.var.name,
                            left.nrows(),
                            left.ncols(),
                            right.nrows(),
                            right.ncols()
                        )));
                    }
                }
                LinearMap::Scale(s) => {
                    if term.var.kind != VarKind::Scalar {
                        return Err(err(format!(
                            "`{}` is not scalar but enters through a scale map",
                            term.var.name
                        )));
                    }
                    if s.dim() != dim {
                        return Err(err(format!(
                            "scale map for `{}` is {}x{}",
                            term.var.name,
                            s.dim(),
                            s.dim()
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Numerical values for every variable of a problem, stored flattened.
#[derive(Debug, Clone, PartialEq)]
pub struct VarValues {
    theta: Vec<f64>,
}

impl VarValues {
    pub fn zeros(problem: &SdpProblem) -> Self {
        VarValues {
            theta: vec![0.0; problem.unknown_count()],
        }
    }

    pub fn from_theta(theta: Vec<f64>) -> Self {
        VarValues { theta }
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Full matrix value (symmetric variables are mirrored).
    pub fn value(&self, var: &VarHandle) -> Mat {
        let (rows, cols) = var.kind.shape();
        let mut m = Mat::zeros(rows, cols);
        for (k, &v) in self.theta[var.range()].iter().enumerate() {
            let (i, j) = var.kind.position(k);
            m[(i, j)] = v;
            if matches!(var.kind, VarKind::Symmetric(_)) {
                m[(j, i)] = v;
            }
        }
        m
    }

    pub fn scalar(&self, var: &VarHandle) -> f64 {
        self.theta[var.offset]
    }

    /// Sets a variable; symmetric values contribute their upper triangle.
    pub fn set(&mut self, var: &VarHandle, value: &Mat) -> Result<(), SdpError> {
        if value.shape() != var.kind.shape() {
            return Err(SdpError::ValueShape {
                name: var.name.clone(),
                expected: var.kind.shape(),
                got: value.shape(),
            });
        }
        for k in 0..var.unknowns() {
            let (i, j) = var.kind.position(k);
            self.theta[var.offset + k] = value[(i, j)];
        }
        Ok(())
    }

    pub fn set_scalar(&mut self, var: &VarHandle, value: f64) {
        self.theta[var.offset] = value;
    }
}

/// Solver tolerances. The rescue tolerance is used for a single retry when
/// the first attempt ends in numerical failure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverTolerances {
    pub feasibility: f64,
    pub relative_gap: f64,
    pub rescue: f64,
    pub max_iterations: u32,
}

impl Default for SolverTolerances {
    fn default() -> Self {
        SolverTolerances {
            feasibility: 1e-8,
            relative_gap: 1e-8,
            rescue: 1e-6,
            max_iterations: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Feasible,
    Infeasible,
    NumericalFailure,
}

impl SolveStatus {
    pub fn has_values(&self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::Feasible)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolverStats {
    pub backend: String,
    pub backend_status: String,
    pub iterations: u32,
    pub solve_time_s: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub relative_gap: f64,
    pub rescued: bool,
    pub max_violation: Option<f64>,
    pub message: Option<String>,
}

/// What a backend reports before status mapping and validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendStatus {
    Solved,
    /// Stopped at the solver's reduced-accuracy thresholds.
    ReducedAccuracy,
    Infeasible,
    Unbounded,
    Stalled,
}

#[derive(Debug, Clone)]
pub struct BackendResult {
    pub status: BackendStatus,
    pub theta: Vec<f64>,
    pub objective: f64,
    pub stats: SolverStats,
}

/// The single adapter boundary between assembled problems and a conic solver.
pub trait SdpBackend {
    fn solve_lowered(&self, problem: &LoweredProblem, tol: &SolverTolerances) -> BackendResult;
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub status: SolveStatus,
    pub values: Option<VarValues>,
    pub objective: Option<f64>,
    pub stats: SolverStats,
}

/// One block of the lowered problem: `f0 + sum_j theta_j F_j >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoweredBlock {
    pub name: String,
    pub f0: SymMat,
    /// Nonzero coefficient matrices keyed by unknown index, ascending.
    pub coeffs: Vec<(usize, SymMat)>,
}

impl LoweredBlock {
    pub fn dim(&self) -> usize {
        self.f0.dim()
    }

    pub fn evaluate(&self, theta: &[f64]) -> SymMat {
        let mut acc = self.f0.packed().to_vec();
        for (j, f) in &self.coeffs {
            for (a, b) in acc.iter_mut().zip(f.packed()) {
                *a += theta[*j] * b;
            }
        }
        SymMat::from_packed(self.dim(), acc).expect("packed length")
    }
}

/// `minimize c^T theta` subject to every block being PSD.
#[derive(Debug, Clone, PartialEq)]
pub struct LoweredProblem {
    pub unknowns: usize,
    pub objective: Vec<f64>,
    pub blocks: Vec<LoweredBlock>,
}

impl LoweredProblem {
    pub fn has_objective(&self) -> bool {
        self.objective.iter().any(|&c| c != 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintCheck {
    pub name: String,
    pub dim: usize,
    /// `max(0, lambda_max)` for `<= 0` constraints, `max(0, -lambda_min)` for `>= 0`.
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolutionReport {
    pub checks: Vec<ConstraintCheck>,
    pub max_violation: f64,
}

impl SolutionReport {
    pub fn within(&self, tolerance: f64) -> bool {
        self.max_violation <= tolerance
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConstraintId(pub usize);

/// Single-owner builder for one semidefinite program.
#[derive(Debug, Clone, Default)]
pub struct SdpProblem {
    vars: Vec<VarHandle>,
    names: HashSet<String>,
    constraints: Vec<AffineLmi>,
    objective: Vec<(VarHandle, Mat)>,
}

impl SdpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_variable(&mut self, kind: VarKind, name: &str) -> Result<VarHandle, SdpError> {
        if name.is_empty() {
            return Err(SdpError::EmptyName);
        }
        if !self.names.insert(name.to_string()) {
            return Err(SdpError::DuplicateName(name.to_string()));
        }
        let handle = VarHandle {
            id: self.vars.len(),
            offset: self.unknown_count(),
            kind,
            name: name.to_string(),
        };
        self.vars.push(handle.clone());
        Ok(handle)
    }

    pub fn variables(&self) -> &[VarHandle] {
        &self.vars
    }

    pub fn unknown_count(&self) -> usize {
        self.vars.last().map_or(0, |v| v.offset + v.unknowns())
    }

    pub fn add_lmi(&mut self, lmi: AffineLmi) -> Result<ConstraintId, SdpError> {
        lmi.check(&self.vars)?;
        self.constraints.push(lmi);
        Ok(ConstraintId(self.constraints.len() - 1))
    }

    pub fn constraints(&self) -> &[AffineLmi] {
        &self.constraints
    }

    /// Adds `<weight, V>` to the minimized objective.
    pub fn minimize(&mut self, var: &VarHandle, weight: Mat) -> Result<(), SdpError> {
        if self.vars.get(var.id) != Some(var) {
            return Err(SdpError::UnknownVariable(var.name.clone()));
        }
        if weight.shape() != var.kind.shape() {
            return Err(SdpError::ValueShape {
                name: var.name.clone(),
                expected: var.kind.shape(),
                got: weight.shape(),
            });
        }
        self.objective.push((var.clone(), weight));
        Ok(())
    }

    pub fn objective_value(&self, values: &VarValues) -> f64 {
        self.objective
            .iter()
            .map(|(v, w)| w.dot(&values.value(v)))
            .sum()
    }

    /// Flattens into PSD blocks over `theta`; `<= 0` constraints are negated.
    pub fn lower(&self) -> LoweredProblem {
        let mut objective = vec![0.0; self.unknown_count()];
        for (var, weight) in &self.objective {
            for k in 0..var.unknowns() {
                let (i, j) = var.kind.position(k);
                let mut c = weight[(i, j)];
                if matches!(var.kind, VarKind::Symmetric(_)) && i != j {
                    c += weight[(j, i)];
                }
                objective[var.offset + k] += c;
            }
        }
        let blocks = self
            .constraints
            .iter()
            .map(|lmi| {
                let sign = match lmi.sense {
                    Sense::PositiveSemidefinite => 1.0,
                    Sense::NegativeSemidefinite => -1.0,
                };
                let mut dense: Vec<Option<Mat>> = vec![None; self.unknown_count()];
                for term in &lmi.terms {
                    for k in 0..term.var.unknowns() {
                        let c = term.basis_contribution(k);
                        let slot = &mut dense[term.var.offset + k];
                        match slot {
                            Some(acc) => *acc += c,
                            None => *slot = Some(c),
                        }
                    }
                }
                let coeffs = dense
                    .into_iter()
                    .enumerate()
                    .filter_map(|(j, m)| {
                        let m = m?;
                        if m.iter().all(|&v| v == 0.0) {
                            return None;
                        }
                        Some((j, SymMat::symmetric_part(&(m * sign)).expect("square")))
                    })
                    .collect();
                LoweredBlock {
                    name: lmi.name.clone(),
                    f0: lmi.constant.scale(sign),
                    coeffs,
                }
            })
            .collect();
        LoweredProblem {
            unknowns: self.unknown_count(),
            objective,
            blocks,
        }
    }

    /// Re-substitutes values and reports the eigenvalue violation of every
    /// constraint.
    pub fn validate_solution(&self, values: &VarValues) -> SolutionReport {
        let checks: Vec<ConstraintCheck> = self
            .constraints
            .iter()
            .map(|lmi| {
                let m = lmi.evaluate(values);
                let violation = match lmi.sense {
                    Sense::NegativeSemidefinite => sym_eig_max(&m).map(|v| v.max(0.0)),
                    Sense::PositiveSemidefinite => sym_eig_min(&m).map(|v| (-v).max(0.0)),
                }
                .unwrap_or(f64::INFINITY);
                ConstraintCheck {
                    name: lmi.name.clone(),
                    dim: lmi.dim(),
                    violation,
                }
            })
            .collect();
        let max_violation = checks.iter().map(|c| c.violation).fold(0.0, f64::max);
        SolutionReport {
            checks,
            max_violation,
        }
    }

    /// Solves with the default interior-point backend.
    pub fn solve(&self, tol: &SolverTolerances) -> Result<SdpSolution, SdpError> {
        self.solve_with(&ClarabelBackend, tol)
    }

    pub fn solve_with(
        &self,
        backend: &dyn SdpBackend,
        tol: &SolverTolerances,
    ) -> Result<SdpSolution, SdpError> {
        if self.vars.is_empty() {
            return Err(SdpError::NoVariables);
        }
        let lowered = self.lower();
        let mut outcome = self.classify(&lowered, backend.solve_lowered(&lowered, tol));
        if outcome.status == SolveStatus::NumericalFailure {
            let first =
                outcome.stats.message.clone().unwrap_or_else(|| {
                    format!("backend ended with {}", outcome.stats.backend_status)
                });
            let loose = SolverTolerances {
                feasibility: tol.rescue,
                relative_gap: tol.rescue,
                ..*tol
            };
            outcome = self.classify(&lowered, backend.solve_lowered(&lowered, &loose));
            outcome.stats.rescued = true;
            let note = format!("retried at {:.0e} after: {first}", tol.rescue);
            outcome.stats.message = Some(match outcome.stats.message.take() {
                Some(m) => format!("{m}; {note}"),
                None => note,
            });
        }
        Ok(outcome)
    }

    /// Maps a backend result to a status, validating any returned point.
    fn classify(&self, lowered: &LoweredProblem, result: BackendResult) -> SdpSolution {
        let mut stats = result.stats;
        let status = match result.status {
            BackendStatus::Solved | BackendStatus::ReducedAccuracy => {
                let values = VarValues::from_theta(result.theta.clone());
                let report = self.validate_solution(&values);
                stats.max_violation = Some(report.max_violation);
                if !report.within(VIOLATION_TOLERANCE) {
                    let worst = report
                        .checks
                        .iter()
                        .max_by(|a, b| a.violation.total_cmp(&b.violation))
                        .map(|c| c.name.clone())
                        .unwrap_or_default();
                    stats.message = Some(format!(
                        "solver returned a point violating `{worst}` by {:.3e}",
                        report.max_violation
                    ));
                    SolveStatus::NumericalFailure
                } else if lowered.has_objective() && stats.relative_gap <= OPTIMALITY_GAP {
                    SolveStatus::Optimal
                } else {
                    SolveStatus::Feasible
                }
            }
            BackendStatus::Infeasible => SolveStatus::Infeasible,
            BackendStatus::Unbounded => {
                stats.message = Some("objective is unbounded below".into());
                SolveStatus::NumericalFailure
            }
            BackendStatus::Stalled => SolveStatus::NumericalFailure,
        };
        let (values, objective) = if status.has_values() {
            let values = VarValues::from_theta(result.theta);
            let objective = self.objective_value(&values);
            (Some(values), Some(objective))
        } else {
            (None, None)
        };
        SdpSolution {
            status,
            values,
            objective,
            stats,
        }
    }

    /// Writes the lowered problem in SDPA sparse format.
    pub fn write_sdpa(&self, out: &mut impl std::io::Write) -> std::io::Result<()> {
        sdpa::write(&self.lower(), out)
    }
}
