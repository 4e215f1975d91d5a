//! Interior-point backend built on Clarabel.
//!
//! Clarabel solves `min q^T x  s.t.  A x + s = b, s in K`. Each lowered block
//! `F0 + sum_j theta_j F_j >= 0` becomes `s = svec(F0) + sum_j theta_j svec(F_j)`,
//! i.e. `b = svec(F0)` and column `j` of `A` is `-svec(F_j)`, where `svec`
//! stacks the upper triangle column by column with off-diagonals scaled by
//! `sqrt(2)`. One-dimensional blocks go to the nonnegative cone.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};

use super::{
    BackendResult, BackendStatus, LoweredProblem, SdpBackend, SolverStats, SolverTolerances,
};
use crate::numerics::SymMat;

#[derive(Debug, Clone, Copy, Default)]
pub struct ClarabelBackend;

fn svec(m: &SymMat) -> Vec<f64> {
    let d = m.dim();
    let mut out = Vec::with_capacity(d * (d + 1) / 2);
    for j in 0..d {
        for i in 0..=j {
            let v = m.get(i, j);
            out.push(if i == j {
                v
            } else {
                v * std::f64::consts::SQRT_2
            });
        }
    }
    out
}

struct ConicData {
    a: CscMatrix<f64>,
    b: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
}

fn assemble(problem: &LoweredProblem) -> ConicData {
    let mut rows = Vec::new();
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    let mut b = Vec::new();
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
    for block in &problem.blocks {
        let start = b.len();
        b.extend(svec(&block.f0));
        for (j, f) in &block.coeffs {
            for (k, v) in svec(f).into_iter().enumerate() {
                if v != 0.0 {
                    rows.push(start + k);
                    cols.push(*j);
                    vals.push(-v);
                }
            }
        }
        let cone = if block.dim() == 1 {
            SupportedConeT::NonnegativeConeT(1)
        } else {
            SupportedConeT::PSDTriangleConeT(block.dim())
        };
        // merge runs of scalar blocks into one orthant
        match (cones.last_mut(), &cone) {
            (Some(SupportedConeT::NonnegativeConeT(n)), SupportedConeT::NonnegativeConeT(1)) => {
                *n += 1
            }
            _ => cones.push(cone),
        }
    }
    let a = CscMatrix::new_from_triplets(b.len(), problem.unknowns, rows, cols, vals);
    ConicData { a, b, cones }
}

fn settings(tol: f64, max_iter: u32) -> DefaultSettings<f64> {
    DefaultSettings {
        verbose: false,
        max_iter,
        tol_gap_abs: tol,
        tol_gap_rel: tol,
        tol_feas: tol,
        tol_infeas_abs: tol,
        tol_infeas_rel: tol,
        ..DefaultSettings::default()
    }
}

struct Attempt {
    status: SolverStatus,
    theta: Vec<f64>,
    objective: f64,
    stats: SolverStats,
}

fn attempt(problem: &LoweredProblem, data: &ConicData, tol: f64, max_iter: u32) -> Attempt {
    let p = CscMatrix::zeros((problem.unknowns, problem.unknowns));
    let mut stats = SolverStats {
        backend: "clarabel".into(),
        ..SolverStats::default()
    };
    let mut solver = match DefaultSolver::new(
        &p,
        &problem.objective,
        &data.a,
        &data.b,
        &data.cones,
        settings(tol, max_iter),
    ) {
        Ok(s) => s,
        Err(e) => {
            stats.backend_status = "SetupError".into();
            stats.message = Some(e.to_string());
            return Attempt {
                status: SolverStatus::NumericalError,
                theta: vec![0.0; problem.unknowns],
                objective: f64::NAN,
                stats,
            };
        }
    };
    solver.solve();
    let sol = &solver.solution;
    stats.backend_status = format!("{:?}", sol.status);
    stats.iterations = sol.iterations;
    stats.solve_time_s = sol.solve_time;
    stats.primal_residual = sol.r_prim;
    stats.dual_residual = sol.r_dual;
    stats.relative_gap = (sol.obj_val - sol.obj_val_dual).abs() / sol.obj_val.abs().max(1.0);
    Attempt {
        status: sol.status,
        theta: sol.x.clone(),
        objective: sol.obj_val,
        stats,
    }
}

impl SdpBackend for ClarabelBackend {
    fn solve_lowered(&self, problem: &LoweredProblem, tol: &SolverTolerances) -> BackendResult {
        let data = assemble(problem);
        let run = attempt(
            problem,
            &data,
            tol.feasibility.min(tol.relative_gap),
            tol.max_iterations,
        );
        let status = match run.status {
            SolverStatus::Solved => BackendStatus::Solved,
            SolverStatus::AlmostSolved => BackendStatus::ReducedAccuracy,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                BackendStatus::Infeasible
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                BackendStatus::Unbounded
            }
            _ => BackendStatus::Stalled,
        };
        BackendResult {
            status,
            theta: run.theta,
            objective: run.objective,
            stats: run.stats,
        }
    }
}
