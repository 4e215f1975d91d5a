//! Fixed-step closed-loop simulation of a DAR under scheduled output feedback.

mod audit;
mod signals;

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dar::{DarError, DarSystem, ScheduledGain};
use crate::numerics::{condition_number, Mat, Vector, SINGULAR_CONDITION};

pub use audit::{
    dissipation_audit, l2_dissipation_audit, l2_report, yw_matrix, yw_sample_check, AuditReport,
    L2Report, YwReport, AUDIT_TOLERANCE, L2_SLACK,
};
pub use signals::{Signal, SignalSpec};

/// States beyond this norm count as diverged.
pub const DIVERGENCE_NORM: f64 = 1e10;

#[derive(Debug, Error, Clone)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("AlgebraicLoopSingular at t = {t}, rho = {rho:?}: condition number {condition:.3e}")]
    AlgebraicLoopSingular {
        t: f64,
        rho: Vec<f64>,
        condition: f64,
        partial: Option<Box<Trajectory>>,
    },
    #[error("Diverged at t = {t}")]
    Diverged { t: f64, partial: Box<Trajectory> },
    #[error(transparent)]
    Dar(#[from] DarError),
}

impl SimError {
    pub fn partial(&self) -> Option<&Trajectory> {
        match self {
            SimError::AlgebraicLoopSingular { partial, .. } => partial.as_deref(),
            SimError::Diverged { partial, .. } => Some(partial),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    Rk4,
    Euler,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub t_end: f64,
    pub dt: f64,
    pub integrator: Integrator,
    pub x0: Vec<f64>,
}

impl SimConfig {
    pub fn new(x0: Vec<f64>) -> Self {
        SimConfig {
            t_end: 10.0,
            dt: 1e-3,
            integrator: Integrator::Rk4,
            x0,
        }
    }

    pub fn validate(&self, n: usize) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end >= self.dt && self.t_end.is_finite()) {
            return bad(format!(
                "t_end = {} must be at least dt = {}",
                self.t_end, self.dt
            ));
        }
        if self.x0.len() != n {
            return bad(format!(
                "x0 has {} entries, the state has {n}",
                self.x0.len()
            ));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return bad("x0 has non-finite entries".into());
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round().max(1.0) as usize
    }
}

/// Algebraic variables consistent with a state, disturbance and parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraicState {
    pub pi: Vector,
    pub u: Vector,
    pub y: Vector,
    pub z: Vector,
}

/// Solves `U1 x + U2 pi + U3 u + U4 w = 0` together with
/// `u = K(rho) (C1 x + C2 pi + C3 w)` as one linear system in `[pi; u]`.
pub fn step_algebraic(
    dar: &DarSystem,
    gain: &ScheduledGain,
    rho: &[f64],
    x: &Vector,
    w: &Vector,
) -> Result<AlgebraicState, SimError> {
    let k = gain.evaluate(&dar.bounds, rho)?;
    let d = dar.dims;
    let (npi, m) = (d.n_pi, d.m);
    let u2 = dar.ups2.eval(rho);
    let u3 = dar.ups3.eval(rho);
    let mut lhs = Mat::zeros(npi + m, npi + m);
    lhs.view_mut((0, 0), (npi, npi)).copy_from(&u2);
    lhs.view_mut((0, npi), (npi, m)).copy_from(&u3);
    lhs.view_mut((npi, 0), (m, npi))
        .copy_from(&(-(&k * &dar.c2)));
    lhs.view_mut((npi, npi), (m, m))
        .copy_from(&Mat::identity(m, m));
    let mut rhs = Mat::zeros(npi + m, 1);
    let alg = -(dar.ups1.eval(rho) * x + dar.ups4.eval(rho) * w);
    rhs.view_mut((0, 0), (npi, 1)).copy_from(&alg);
    let fb = &k * (&dar.c1 * x + &dar.c3 * w);
    rhs.view_mut((npi, 0), (m, 1)).copy_from(&fb);

    let condition = condition_number(&lhs);
    if !(condition <= SINGULAR_CONDITION) {
        return Err(SimError::AlgebraicLoopSingular {
            t: f64::NAN,
            rho: rho.to_vec(),
            condition,
            partial: None,
        });
    }
    let sol = lhs
        .lu()
        .solve(&rhs)
        .ok_or(SimError::AlgebraicLoopSingular {
            t: f64::NAN,
            rho: rho.to_vec(),
            condition,
            partial: None,
        })?;
    let pi: Vector = sol.rows(0, npi).column(0).into_owned();
    let u: Vector = sol.rows(npi, m).column(0).into_owned();
    let y = &dar.c1 * x + &dar.c2 * &pi + &dar.c3 * w;
    let z = &dar.b1 * x + &dar.b2 * &pi + &dar.b3 * &u + &dar.b4 * w;
    Ok(AlgebraicState { pi, u, y, z })
}

/// State derivative from the DAR right-hand side.
pub fn state_derivative(dar: &DarSystem, x: &Vector, w: &Vector, alg: &AlgebraicState) -> Vector {
    &dar.a1 * x + &dar.a2 * &alg.pi + &dar.a3 * &alg.u + &dar.a4 * w
}

/// Recorded samples; `v` and `t_d` stay NaN until
/// [`Trajectory::attach_certificate`] fills them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x: Vec<Vector>,
    pub pi: Vec<Vector>,
    pub u: Vec<Vector>,
    pub y: Vec<Vector>,
    pub z: Vec<Vector>,
    pub w: Vec<Vector>,
    pub rho: Vec<Vec<f64>>,
    pub v: Vec<f64>,
    pub t_d: Vec<f64>,
    /// Running `int z^T z dt`.
    pub int_zz: Vec<f64>,
    /// Running `int w^T w dt`.
    pub int_ww: Vec<f64>,
    /// Largest `|U1 x + U2 pi + U3 u + U4 w|` over all samples.
    pub max_algebraic_residual: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn final_state_norm(&self) -> f64 {
        self.x.last().map_or(f64::NAN, |x| x.norm())
    }

    /// `|z|_2` and `|w|_2` over the whole horizon.
    pub fn l2_norms(&self) -> (f64, f64) {
        let zz = self.int_zz.last().copied().unwrap_or(0.0);
        let ww = self.int_ww.last().copied().unwrap_or(0.0);
        (zz.max(0.0).sqrt(), ww.max(0.0).sqrt())
    }

    /// Fills `v = x^T P x` and the dissipation rate of the certificate.
    pub fn attach_certificate(
        &mut self,
        dar: &DarSystem,
        result: &crate::synthesis::SynthesisResult,
    ) -> Result<(), SimError> {
        let p = result.certificate.p_state();
        self.v = self
            .x
            .iter()
            .map(|x| (x.transpose() * &p * x)[(0, 0)])
            .collect();
        self.t_d = audit::dissipation_rates(dar, result, self)?;
        Ok(())
    }

    /// Largest sample-to-sample increase of `v`.
    pub fn max_v_increase(&self) -> f64 {
        self.v
            .windows(2)
            .map(|p| p[1] - p[0])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn push(
        &mut self,
        t: f64,
        x: &Vector,
        w: Vector,
        rho: Vec<f64>,
        alg: AlgebraicState,
        acc: (f64, f64),
        residual: f64,
    ) {
        self.t.push(t);
        self.x.push(x.clone());
        self.pi.push(alg.pi);
        self.u.push(alg.u);
        self.y.push(alg.y);
        self.z.push(alg.z);
        self.w.push(w);
        self.rho.push(rho);
        self.v.push(f64::NAN);
        self.t_d.push(f64::NAN);
        self.int_zz.push(acc.0);
        self.int_ww.push(acc.1);
        self.max_algebraic_residual = self.max_algebraic_residual.max(residual);
    }

    /// CSV with columns `t, x_*, u_*, y_*, z_*, w_*, rho_*, V, t_d`, 15
    /// significant digits.
    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        let first = |v: &[Vector]| v.first().map_or(0, |x| x.len());
        let mut header = vec!["t".to_string()];
        for (name, len) in [
            ("x", first(&self.x)),
            ("u", first(&self.u)),
            ("y", first(&self.y)),
            ("z", first(&self.z)),
            ("w", first(&self.w)),
            ("rho", self.rho.first().map_or(0, |r| r.len())),
        ] {
            header.extend((1..=len).map(|k| format!("{name}_{k}")));
        }
        header.push("V".into());
        header.push("t_d".into());
        writeln!(out, "{}", header.join(","))?;
        for k in 0..self.len() {
            let mut row = vec![fmt15(self.t[k])];
            for v in [&self.x[k], &self.u[k], &self.y[k], &self.z[k], &self.w[k]] {
                row.extend(v.iter().map(|&e| fmt15(e)));
            }
            row.extend(self.rho[k].iter().map(|&e| fmt15(e)));
            row.push(fmt15(self.v[k]));
            row.push(fmt15(self.t_d[k]));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// 15 significant digits.
pub fn fmt15(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.14e}")
    } else {
        format!("{v}")
    }
}

struct Stage {
    dx: Vector,
    zz: f64,
    ww: f64,
    w: Vector,
    rho: Vec<f64>,
    alg: AlgebraicState,
}

struct Plant<'a> {
    dar: &'a DarSystem,
    gain: &'a ScheduledGain,
    rho: &'a Signal,
    w: &'a Signal,
}

impl Plant<'_> {
    fn eval(&self, t: f64, x: &Vector) -> Result<Stage, SimError> {
        let rho = self.rho.sample(t);
        let w = Vector::from_vec(self.w.sample(t));
        let alg = step_algebraic(self.dar, self.gain, &rho, x, &w).map_err(|e| match e {
            SimError::AlgebraicLoopSingular { rho, condition, .. } => {
                SimError::AlgebraicLoopSingular {
                    t,
                    rho,
                    condition,
                    partial: None,
                }
            }
            other => other,
        })?;
        let dx = state_derivative(self.dar, x, &w, &alg);
        Ok(Stage {
            dx,
            zz: alg.z.norm_squared(),
            ww: w.norm_squared(),
            w,
            rho,
            alg,
        })
    }
}

/// Integrates the closed loop with `pi`, `u` re-solved at every stage.
pub fn integrate(
    dar: &DarSystem,
    gain: &ScheduledGain,
    rho_signal: &Signal,
    w_signal: &Signal,
    cfg: &SimConfig,
) -> Result<Trajectory, SimError> {
    let d = dar.dims;
    cfg.validate(d.n)?;
    if rho_signal.dim() != d.r {
        return Err(SimError::InvalidConfig(format!(
            "parameter signal has {} components, expected {}",
            rho_signal.dim(),
            d.r
        )));
    }
    if w_signal.dim() != d.q {
        return Err(SimError::InvalidConfig(format!(
            "disturbance signal has {} components, expected {}",
            w_signal.dim(),
            d.q
        )));
    }
    let plant = Plant {
        dar,
        gain,
        rho: rho_signal,
        w: w_signal,
    };
    let steps = cfg.steps();
    let h = cfg.dt;
    let mut traj = Trajectory::default();
    let mut x = Vector::from_vec(cfg.x0.clone());
    let mut acc = (0.0, 0.0);

    let fail = |e: SimError, traj: &Trajectory| match e {
        SimError::AlgebraicLoopSingular {
            t, rho, condition, ..
        } => SimError::AlgebraicLoopSingular {
            t,
            rho,
            condition,
            partial: Some(Box::new(traj.clone())),
        },
        other => other,
    };

    for k in 0..=steps {
        let t = k as f64 * h;
        let s1 = plant.eval(t, &x).map_err(|e| fail(e, &traj))?;
        let residual = dar
            .algebraic_residual(&s1.rho, &x, &s1.alg.pi, &s1.alg.u, &s1.w)
            .amax();
        let dx1 = s1.dx.clone();
        let (zz1, ww1) = (s1.zz, s1.ww);
        traj.push(t, &x, s1.w, s1.rho, s1.alg, acc, residual);
        if k == steps {
            break;
        }
        let (dx, dzz, dww) = match cfg.integrator {
            Integrator::Euler => (dx1, zz1, ww1),
            Integrator::Rk4 => {
                let s2 = plant
                    .eval(t + h / 2.0, &(&x + &dx1 * (h / 2.0)))
                    .map_err(|e| fail(e, &traj))?;
                let s3 = plant
                    .eval(t + h / 2.0, &(&x + &s2.dx * (h / 2.0)))
                    .map_err(|e| fail(e, &traj))?;
                let s4 = plant
                    .eval(t + h, &(&x + &s3.dx * h))
                    .map_err(|e| fail(e, &traj))?;
                (
                    (&dx1 + &s2.dx * 2.0 + &s3.dx * 2.0 + &s4.dx) / 6.0,
                    (zz1 + 2.0 * s2.zz + 2.0 * s3.zz + s4.zz) / 6.0,
                    (ww1 + 2.0 * s2.ww + 2.0 * s3.ww + s4.ww) / 6.0,
                )
            }
        };
        x += dx * h;
        acc.0 += dzz * h;
        acc.1 += dww * h;
        if x.iter().any(|v| !v.is_finite()) || x.norm() > DIVERGENCE_NORM {
            return Err(SimError::Diverged {
                t: t + h,
                partial: Box::new(traj),
            });
        }
    }
    Ok(traj)
}
