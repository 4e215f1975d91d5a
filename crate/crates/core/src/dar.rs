//! Differential-algebraic representation (DAR) of a rational LPV plant.
//!
//! ```text
//!   xdot = A1 x + A2 pi + A3 u + A4 w
//!   z    = B1 x + B2 pi + B3 u + B4 w
//!   y    = C1 x + C2 pi + C3 w
//!   0    = U1(rho) x + U2(rho) pi + U3(rho) u + U4(rho) w
//! ```
//!
//! The `U*` blocks are affine in `rho`. Setting `q = l = 0` drops the
//! disturbance `w` and performance output `z`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{
    condition_number, hstack, min_singular_value, solve_linear, vstack, Mat, NumericsError, Vector,
};
use crate::param_domain::{DomainError, ParameterBox};

/// Condition number of `U2(rho)` above which the DAR is not considered well posed.
pub const WELL_POSED_CONDITION: f64 = 1e10;
/// Default samples per parameter axis for the well-posedness sweep.
pub const DEFAULT_WELL_POSED_GRID: usize = 33;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DarError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("SingularSystem: algebraic block is singular at rho = {rho:?} ({source})")]
    SingularAt {
        rho: Vec<f64>,
        source: NumericsError,
    },
    #[error("invalid DAR: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("NoPerformanceChannel: the DAR has no disturbance input and no performance output")]
    NoPerformanceChannel,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// `M(rho) = M0 + sum_k rho_k M_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineParamMatrix {
    pub constant: Mat,
    pub coeffs: Vec<Mat>,
}

impl AffineParamMatrix {
    pub fn new(constant: Mat, coeffs: Vec<Mat>) -> Self {
        AffineParamMatrix { constant, coeffs }
    }

    /// Constant matrix (all parameter coefficients zero).
    pub fn constant(constant: Mat, r: usize) -> Self {
        let coeffs = vec![Mat::zeros(constant.nrows(), constant.ncols()); r];
        AffineParamMatrix { constant, coeffs }
    }

    pub fn zeros(rows: usize, cols: usize, r: usize) -> Self {
        Self::constant(Mat::zeros(rows, cols), r)
    }

    pub fn nrows(&self) -> usize {
        self.constant.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.constant.ncols()
    }

    pub fn param_count(&self) -> usize {
        self.coeffs.len()
    }

    pub fn eval(&self, rho: &[f64]) -> Mat {
        assert_eq!(rho.len(), self.coeffs.len(), "parameter arity");
        let mut out = self.constant.clone();
        for (m, &r) in self.coeffs.iter().zip(rho) {
            out += m * r;
        }
        out
    }

    fn shapes_consistent(&self) -> bool {
        self.coeffs
            .iter()
            .all(|m| m.shape() == self.constant.shape())
    }

    fn is_finite(&self) -> bool {
        self.constant
            .iter()
            .chain(self.coeffs.iter().flat_map(|m| m.iter()))
            .all(|v| v.is_finite())
    }

    /// Horizontal concatenation of affine matrices sharing row count and arity.
    pub fn hstack(parts: &[&AffineParamMatrix]) -> Self {
        let r = parts.first().map_or(0, |p| p.param_count());
        let constant = hstack(&parts.iter().map(|p| &p.constant).collect::<Vec<_>>());
        let coeffs = (0..r)
            .map(|k| hstack(&parts.iter().map(|p| &p.coeffs[k]).collect::<Vec<_>>()))
            .collect();
        AffineParamMatrix { constant, coeffs }
    }
}

/// Declared dimensions of a DAR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DarDims {
    pub n: usize,
    pub n_pi: usize,
    pub m: usize,
    pub p: usize,
    pub q: usize,
    pub l: usize,
    pub r: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DarSystem {
    pub dims: DarDims,
    pub a1: Mat,
    pub a2: Mat,
    pub a3: Mat,
    pub a4: Mat,
    pub b1: Mat,
    pub b2: Mat,
    pub b3: Mat,
    pub b4: Mat,
    pub c1: Mat,
    pub c2: Mat,
    pub c3: Mat,
    pub ups1: AffineParamMatrix,
    pub ups2: AffineParamMatrix,
    pub ups3: AffineParamMatrix,
    pub ups4: AffineParamMatrix,
    pub bounds: ParameterBox,
}

/// Outcome of [`DarSystem::validate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub dims: DarDims,
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Outcome of [`DarSystem::well_posedness`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WellPosednessReport {
    pub points_checked: usize,
    pub min_singular_value: f64,
    pub worst_condition: f64,
    pub worst_rho: Vec<f64>,
    pub well_posed: bool,
}

/// Frozen-parameter state-space matrices obtained by eliminating `pi`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizedPlant {
    pub a: Mat,
    pub b: Mat,
    pub bw: Mat,
    pub az: Mat,
    pub bz: Mat,
    pub dz: Mat,
    pub c: Mat,
    /// `y` feedthrough from `w`.
    pub d: Mat,
    /// `y` feedthrough from `u`; zero whenever `C2 U2^{-1} U3` vanishes.
    pub d_u: Mat,
}

/// Scheduled static output feedback `K(rho) = sum_i alpha_i K_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledGain {
    pub gains: Vec<Mat>,
}

impl ScheduledGain {
    pub fn new(gains: Vec<Mat>) -> Self {
        ScheduledGain { gains }
    }

    /// All-zero gain for an `m x p` output feedback on `vertex_count` vertices.
    pub fn zero(m: usize, p: usize, vertex_count: usize) -> Self {
        ScheduledGain {
            gains: vec![Mat::zeros(m, p); vertex_count],
        }
    }

    pub fn evaluate(&self, bounds: &ParameterBox, rho: &[f64]) -> Result<Mat, DarError> {
        let alpha = bounds.coords(rho)?;
        if self.gains.len() != alpha.alpha().len() {
            return Err(DarError::Dimension(format!(
                "{} vertex gains for {} vertices",
                self.gains.len(),
                alpha.alpha().len()
            )));
        }
        Ok(alpha.combine(&self.gains))
    }
}

/// Closed-loop DAR blocks under `u = K(rho) y`, frozen at one `rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopDar {
    pub a1: Mat,
    pub a2: Mat,
    pub a3: Mat,
    pub b1: Mat,
    pub b2: Mat,
    pub b3: Mat,
    pub ups1: Mat,
    pub ups2: Mat,
    pub ups3: Mat,
}

/// Closed loop with `pi` eliminated: `xdot = a x + bw w`, `z = cz x + dz w`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizedClosedLoop {
    pub a: Mat,
    pub bw: Mat,
    pub cz: Mat,
    pub dz: Mat,
}

/// Augmented matrices carrying the L2 performance channel in the shape of
/// the stabilization conditions. The augmented state is `[x; w; zeta]`
/// of size `n_l = n + q + l`.
#[derive(Debug, Clone, PartialEq)]
pub struct BarSystem {
    pub n: usize,
    pub q: usize,
    pub l: usize,
    pub n_pi: usize,
    pub m: usize,
    pub p: usize,
    pub a1_const: Mat,
    /// Coefficient of `gamma`: `diag(0_n, -I_q / 2, -I_l / 2)`.
    pub a1_gamma: Mat,
    pub a2: Mat,
    pub a3: Mat,
    pub c1: Mat,
    pub c2: Mat,
    pub ups1: AffineParamMatrix,
    pub ups2: AffineParamMatrix,
    pub ups3: AffineParamMatrix,
}

impl BarSystem {
    pub fn n_l(&self) -> usize {
        self.n + self.q + self.l
    }

    pub fn a1(&self, gamma: f64) -> Mat {
        &self.a1_const + &self.a1_gamma * gamma
    }
}

impl DarSystem {
    /// DAR without disturbance or performance channel (`q = l = 0`).
    #[allow(clippy::too_many_arguments)]
    pub fn undisturbed(
        a1: Mat,
        a2: Mat,
        a3: Mat,
        c1: Mat,
        c2: Mat,
        ups1: AffineParamMatrix,
        ups2: AffineParamMatrix,
        ups3: AffineParamMatrix,
        bounds: ParameterBox,
    ) -> Self {
        let dims = DarDims {
            n: a1.nrows(),
            n_pi: a2.ncols(),
            m: a3.ncols(),
            p: c1.nrows(),
            q: 0,
            l: 0,
            r: bounds.len(),
        };
        DarSystem {
            a4: Mat::zeros(dims.n, 0),
            b1: Mat::zeros(0, dims.n),
            b2: Mat::zeros(0, dims.n_pi),
            b3: Mat::zeros(0, dims.m),
            b4: Mat::zeros(0, 0),
            c3: Mat::zeros(dims.p, 0),
            ups4: AffineParamMatrix::zeros(dims.n_pi, 0, dims.r),
            dims,
            a1,
            a2,
            a3,
            c1,
            c2,
            ups1,
            ups2,
            ups3,
            bounds,
        }
    }

    /// Same plant with the disturbance input and performance output removed.
    pub fn without_performance_channel(&self) -> Self {
        DarSystem::undisturbed(
            self.a1.clone(),
            self.a2.clone(),
            self.a3.clone(),
            self.c1.clone(),
            self.c2.clone(),
            self.ups1.clone(),
            self.ups2.clone(),
            self.ups3.clone(),
            self.bounds.clone(),
        )
    }

    pub fn has_performance_channel(&self) -> bool {
        self.dims.q > 0 || self.dims.l > 0
    }

    pub fn vertex_count(&self) -> usize {
        self.bounds.vertex_count()
    }

    /// Checks every matrix against the declared dimensions. Never fails;
    /// problems are listed in the report.
    pub fn validate(&self) -> ValidationReport {
        let d = self.dims;
        let mut violations = Vec::new();
        let check = |violations: &mut Vec<String>,
                     name: &str,
                     m: &Mat,
                     rows: (usize, &str),
                     cols: (usize, &str)| {
            if m.nrows() != rows.0 {
                violations.push(format!(
                    "{name} rows ≠ {} (expected {}, found {})",
                    rows.1,
                    rows.0,
                    m.nrows()
                ));
            }
            if m.ncols() != cols.0 {
                violations.push(format!(
                    "{name} cols ≠ {} (expected {}, found {})",
                    cols.1,
                    cols.0,
                    m.ncols()
                ));
            }
            if m.iter().any(|v| !v.is_finite()) {
                violations.push(format!("{name} has non-finite entries"));
            }
        };
        check(&mut violations, "A1", &self.a1, (d.n, "n"), (d.n, "n"));
        check(
            &mut violations,
            "A2",
            &self.a2,
            (d.n, "n"),
            (d.n_pi, "n_pi"),
        );
        check(&mut violations, "A3", &self.a3, (d.n, "n"), (d.m, "m"));
        check(&mut violations, "A4", &self.a4, (d.n, "n"), (d.q, "q"));
        check(&mut violations, "B1", &self.b1, (d.l, "l"), (d.n, "n"));
        check(
            &mut violations,
            "B2",
            &self.b2,
            (d.l, "l"),
            (d.n_pi, "n_pi"),
        );
        check(&mut violations, "B3", &self.b3, (d.l, "l"), (d.m, "m"));
        check(&mut violations, "B4", &self.b4, (d.l, "l"), (d.q, "q"));
        check(&mut violations, "C1", &self.c1, (d.p, "p"), (d.n, "n"));
        check(
            &mut violations,
            "C2",
            &self.c2,
            (d.p, "p"),
            (d.n_pi, "n_pi"),
        );
        check(&mut violations, "C3", &self.c3, (d.p, "p"), (d.q, "q"));
        for (name, u, cols) in [
            ("U1", &self.ups1, (d.n, "n")),
            ("U2", &self.ups2, (d.n_pi, "n_pi")),
            ("U3", &self.ups3, (d.m, "m")),
            ("U4", &self.ups4, (d.q, "q")),
        ] {
            check(&mut violations, name, &u.constant, (d.n_pi, "n_pi"), cols);
            if u.param_count() != d.r {
                violations.push(format!(
                    "{name} has {} parameter coefficients, expected r = {}",
                    u.param_count(),
                    d.r
                ));
            }
            if !u.shapes_consistent() {
                violations.push(format!(
                    "{name} coefficient matrices differ in shape from its constant part"
                ));
            }
            if !u.is_finite() {
                violations.push(format!("{name} has non-finite entries"));
            }
        }
        if self.bounds.len() != d.r {
            violations.push(format!(
                "parameter box has {} parameters, expected r = {}",
                self.bounds.len(),
                d.r
            ));
        }
        ValidationReport {
            dims: d,
            violations,
        }
    }

    pub(crate) fn ensure_valid(&self) -> Result<(), DarError> {
        let report = self.validate();
        if report.is_valid() {
            Ok(())
        } else {
            Err(DarError::Invalid(report.violations))
        }
    }

    /// Sweeps `U2(rho)` over a uniform grid (vertices included) and flags the
    /// DAR when the condition number exceeds [`WELL_POSED_CONDITION`] anywhere.
    pub fn well_posedness(&self, grid_points_per_axis: usize) -> WellPosednessReport {
        let points = self.bounds.grid(grid_points_per_axis.max(2));
        let mut report = WellPosednessReport {
            points_checked: points.len(),
            min_singular_value: f64::INFINITY,
            worst_condition: 1.0,
            worst_rho: self.bounds.vertex(0),
            well_posed: true,
        };
        for rho in points {
            let u2 = self.ups2.eval(&rho);
            let sigma = min_singular_value(&u2);
            let cond = condition_number(&u2);
            report.min_singular_value = report.min_singular_value.min(sigma);
            if !(cond <= report.worst_condition) {
                report.worst_condition = cond;
                report.worst_rho = rho;
            }
        }
        report.well_posed = report.worst_condition <= WELL_POSED_CONDITION;
        report
    }

    fn solve_ups2(&self, rho: &[f64], rhs: &Mat) -> Result<Mat, DarError> {
        let u2 = self.ups2.eval(rho);
        solve_linear(&u2, rhs).map_err(|source| DarError::SingularAt {
            rho: rho.to_vec(),
            source,
        })
    }

    /// Eliminates `pi` at a frozen `rho`.
    pub fn realize(&self, rho: &[f64]) -> Result<RealizedPlant, DarError> {
        self.ensure_valid()?;
        self.bounds.coords(rho)?;
        // pi = -U2^{-1} (U1 x + U3 u + U4 w)
        let rhs = hstack(&[
            &self.ups1.eval(rho),
            &self.ups3.eval(rho),
            &self.ups4.eval(rho),
        ]);
        let g = -self.solve_ups2(rho, &rhs)?;
        let (n, m, q) = (self.dims.n, self.dims.m, self.dims.q);
        let gx = g.columns(0, n).into_owned();
        let gu = g.columns(n, m).into_owned();
        let gw = g.columns(n + m, q).into_owned();
        Ok(RealizedPlant {
            a: &self.a1 + &self.a2 * &gx,
            b: &self.a3 + &self.a2 * &gu,
            bw: &self.a4 + &self.a2 * &gw,
            az: &self.b1 + &self.b2 * &gx,
            bz: &self.b3 + &self.b2 * &gu,
            dz: &self.b4 + &self.b2 * &gw,
            c: &self.c1 + &self.c2 * &gx,
            d: &self.c3 + &self.c2 * &gw,
            d_u: &self.c2 * &gu,
        })
    }

    /// Unique solution `pi` of the algebraic row.
    pub fn pi_value(
        &self,
        rho: &[f64],
        x: &Vector,
        u: &Vector,
        w: &Vector,
    ) -> Result<Vector, DarError> {
        let rhs = self.ups1.eval(rho) * x + self.ups3.eval(rho) * u + self.ups4.eval(rho) * w;
        let pi = self.solve_ups2(rho, &Mat::from_column_slice(rhs.len(), 1, rhs.as_slice()))?;
        Ok(-pi.column(0).into_owned())
    }

    /// Residual `U1 x + U2 pi + U3 u + U4 w`.
    pub fn algebraic_residual(
        &self,
        rho: &[f64],
        x: &Vector,
        pi: &Vector,
        u: &Vector,
        w: &Vector,
    ) -> Vector {
        self.ups1.eval(rho) * x
            + self.ups2.eval(rho) * pi
            + self.ups3.eval(rho) * u
            + self.ups4.eval(rho) * w
    }

    /// Builds the augmented L2 matrices over the state `[x; w; zeta]`.
    pub fn lift_l2(&self) -> Result<BarSystem, DarError> {
        self.ensure_valid()?;
        if !self.has_performance_channel() {
            return Err(DarError::NoPerformanceChannel);
        }
        let DarDims {
            n,
            n_pi,
            m,
            p,
            q,
            l,
            r,
        } = self.dims;
        let a1_const = vstack(&[
            &hstack(&[&self.a1, &self.a4, &Mat::zeros(n, l)]),
            &Mat::zeros(q, n + q + l),
            &hstack(&[&self.b1, &self.b4, &Mat::zeros(l, l)]),
        ]);
        let mut a1_gamma = Mat::zeros(n + q + l, n + q + l);
        for k in n..n + q + l {
            a1_gamma[(k, k)] = -0.5;
        }
        let a2 = vstack(&[&self.a2, &Mat::zeros(q, n_pi), &self.b2]);
        let a3 = vstack(&[&self.a3, &Mat::zeros(q, m), &self.b3]);
        let c1 = hstack(&[&self.c1, &self.c3, &Mat::zeros(p, l)]);
        let ups1 = AffineParamMatrix::hstack(&[
            &self.ups1,
            &self.ups4,
            &AffineParamMatrix::zeros(n_pi, l, r),
        ]);
        Ok(BarSystem {
            n,
            q,
            l,
            n_pi,
            m,
            p,
            a1_const,
            a1_gamma,
            a2,
            a3,
            c1,
            c2: self.c2.clone(),
            ups1,
            ups2: self.ups2.clone(),
            ups3: self.ups3.clone(),
        })
    }

    /// Closed-loop DAR blocks with `u = K(rho) y`, frozen at `rho`.
    pub fn closed_loop(
        &self,
        gain: &ScheduledGain,
        rho: &[f64],
    ) -> Result<ClosedLoopDar, DarError> {
        self.ensure_valid()?;
        let k = gain.evaluate(&self.bounds, rho)?;
        if k.shape() != (self.dims.m, self.dims.p) {
            return Err(DarError::Dimension(format!(
                "gain is {}x{}, expected {}x{}",
                k.nrows(),
                k.ncols(),
                self.dims.m,
                self.dims.p
            )));
        }
        let u1 = self.ups1.eval(rho);
        let u2 = self.ups2.eval(rho);
        let u3 = self.ups3.eval(rho);
        let u4 = self.ups4.eval(rho);
        let a3k = &self.a3 * &k;
        let b3k = &self.b3 * &k;
        let u3k = &u3 * &k;
        Ok(ClosedLoopDar {
            a1: &self.a1 + &a3k * &self.c1,
            a2: &self.a2 + &a3k * &self.c2,
            a3: &self.a4 + &a3k * &self.c3,
            b1: &self.b1 + &b3k * &self.c1,
            b2: &self.b2 + &b3k * &self.c2,
            b3: &self.b4 + &b3k * &self.c3,
            ups1: &u1 + &u3k * &self.c1,
            ups2: &u2 + &u3k * &self.c2,
            ups3: &u4 + &u3k * &self.c3,
        })
    }

    /// Closed loop with `pi` eliminated at a frozen `rho`.
    pub fn realize_closed_loop(
        &self,
        gain: &ScheduledGain,
        rho: &[f64],
    ) -> Result<RealizedClosedLoop, DarError> {
        let cl = self.closed_loop(gain, rho)?;
        let rhs = hstack(&[&cl.ups1, &cl.ups3]);
        let g = solve_linear(&cl.ups2, &rhs).map_err(|source| DarError::SingularAt {
            rho: rho.to_vec(),
            source,
        })?;
        let n = self.dims.n;
        let gx = g.columns(0, n).into_owned();
        let gw = g.columns(n, self.dims.q).into_owned();
        Ok(RealizedClosedLoop {
            a: &cl.a1 - &cl.a2 * &gx,
            bw: &cl.a3 - &cl.a2 * &gw,
            cz: &cl.b1 - &cl.b2 * &gx,
            dz: &cl.b3 - &cl.b2 * &gw,
        })
    }

    /// `[U1 U2 U3]` evaluated at `rho`.
    pub fn annihilator(&self, rho: &[f64]) -> Mat {
        hstack(&[
            &self.ups1.eval(rho),
            &self.ups2.eval(rho),
            &self.ups3.eval(rho),
        ])
    }

    /// `[U1 U2 U3]` as one affine matrix.
    pub fn annihilator_affine(&self) -> AffineParamMatrix {
        AffineParamMatrix::hstack(&[&self.ups1, &self.ups2, &self.ups3])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::{example_1, example_2};
    use crate::numerics::max_abs;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn m(rows: usize, cols: usize, v: &[f64]) -> Mat {
        Mat::from_row_slice(rows, cols, v)
    }

    #[test]
    fn benchmark_dimensions_validate() {
        let r1 = example_1().validate();
        assert!(r1.is_valid(), "{:?}", r1.violations);
        assert_eq!(
            r1.dims,
            DarDims {
                n: 2,
                n_pi: 6,
                m: 1,
                p: 1,
                q: 1,
                l: 1,
                r: 1
            }
        );
        let r2 = example_2().validate();
        assert!(r2.is_valid(), "{:?}", r2.violations);
        assert_eq!((r2.dims.n, r2.dims.n_pi), (2, 4));
    }

    #[test]
    fn wrong_a2_columns_reported() {
        let mut dar = example_1();
        dar.a2 = dar.a2.columns(0, 5).into_owned();
        let report = dar.validate();
        assert!(!report.is_valid());
        assert!(report
            .violations
            .iter()
            .any(|v| v.starts_with("A2 cols ≠ n_pi")));
    }

    #[test]
    fn well_posedness_examples() {
        let r1 = example_1().well_posedness(DEFAULT_WELL_POSED_GRID);
        assert!(r1.well_posed);
        assert_eq!(r1.points_checked, 33);
        let r2 = example_2().well_posedness(DEFAULT_WELL_POSED_GRID);
        assert!(r2.well_posed);
        assert_relative_eq!(r2.worst_condition, 1.0, epsilon = 1e-12);

        // U2(rho) = rho I on [-1, 1] is singular at 0, a grid point for odd counts
        let bounds = ParameterBox::interval(-1.0, 1.0).unwrap();
        let dar = DarSystem::undisturbed(
            Mat::zeros(1, 1),
            Mat::zeros(1, 2),
            Mat::zeros(1, 1),
            Mat::zeros(1, 1),
            Mat::zeros(1, 2),
            AffineParamMatrix::zeros(2, 1, 1),
            AffineParamMatrix::new(Mat::zeros(2, 2), vec![Mat::identity(2, 2)]),
            AffineParamMatrix::zeros(2, 1, 1),
            bounds,
        );
        let report = dar.well_posedness(33);
        assert!(!report.well_posed);
        assert_eq!(report.worst_rho, vec![0.0]);
    }

    #[test]
    fn realize_example_1_at_zero() {
        let p = example_1().realize(&[0.0]).unwrap();
        assert!(max_abs(&(p.a - m(2, 2, &[0.0, 2.0, 1.0, -1.0]))) < 1e-14);
        assert!(max_abs(&(p.b - m(2, 1, &[2.0, 1.0]))) < 1e-14);
    }

    #[test]
    fn realize_example_2_at_zero() {
        let p = example_2().realize(&[0.0]).unwrap();
        assert!(max_abs(&(p.a - m(2, 2, &[1.0, 2.0, 0.0, -4.0]))) < 1e-14);
        assert!(max_abs(&(p.b - m(2, 1, &[1.0, 0.0]))) < 1e-14);
    }

    #[test]
    fn realize_without_a2_is_a1() {
        let mut dar = example_2();
        dar.a2 = Mat::zeros(2, 4);
        dar.c2 = Mat::zeros(1, 4);
        for rho in [0.0, 0.3, 1.0] {
            assert_eq!(dar.realize(&[rho]).unwrap().a, dar.a1);
        }
    }

    #[test]
    fn pi_value_examples() {
        let e2 = example_2();
        let zero1 = Vector::zeros(1);
        let pi = e2
            .pi_value(&[1.0], &Vector::from_vec(vec![1.0, 0.0]), &zero1, &zero1)
            .unwrap();
        assert!((pi - Vector::from_vec(vec![1.0, 0.0, 0.0, 0.0])).amax() < 1e-15);

        let e1 = example_1();
        let pi = e1
            .pi_value(&[0.0], &Vector::from_vec(vec![1.0, 0.0]), &zero1, &zero1)
            .unwrap();
        let expected = Vector::from_vec(vec![0.5, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!((pi - expected).amax() < 1e-15);

        let pi = e1
            .pi_value(&[0.7], &Vector::zeros(2), &zero1, &zero1)
            .unwrap();
        assert_eq!(pi, Vector::zeros(6));
    }

    #[test]
    fn lift_example_1() {
        let bar = example_1().lift_l2().unwrap();
        assert_eq!(bar.n_l(), 4);
        let expected = m(
            4,
            4,
            &[
                0.0, 0.0, 1.0, 0.0, //
                1.0, -1.0, 0.0, 0.0, //
                0.0, 0.0, 0.0, 0.0, //
                1.0, 0.0, 0.0, 0.0,
            ],
        );
        assert_eq!(bar.a1_const, expected);
        assert_eq!(
            bar.a1_gamma,
            Mat::from_diagonal(&Vector::from_vec(vec![0.0, 0.0, -0.5, -0.5]))
        );
        let e1 = example_1();
        assert_eq!(bar.a2, vstack(&[&e1.a2, &Mat::zeros(1, 6), &e1.b2]));
        assert_eq!(bar.c1, m(1, 4, &[1.0, 0.0, 1.0, 0.0]));
        assert_eq!(bar.ups1.eval(&[0.4]).ncols(), 4);
    }

    #[test]
    fn lift_requires_performance_channel() {
        let dar = example_1().without_performance_channel();
        assert_eq!(dar.lift_l2(), Err(DarError::NoPerformanceChannel));
    }

    #[test]
    fn lift_with_no_performance_output() {
        // l = 0: the third block row is empty
        let mut dar = example_1();
        dar.dims.l = 0;
        dar.b1 = Mat::zeros(0, 2);
        dar.b2 = Mat::zeros(0, 6);
        dar.b3 = Mat::zeros(0, 1);
        dar.b4 = Mat::zeros(0, 1);
        let bar = dar.lift_l2().unwrap();
        assert_eq!(bar.n_l(), 3);
        assert_eq!(bar.a1_const.nrows(), 3);
        assert_eq!(bar.a2.nrows(), 3);
    }

    #[test]
    fn zero_gain_closed_loop_is_plant() {
        let dar = example_2();
        let k0 = ScheduledGain::zero(1, 1, 2);
        for rho in [0.0, 0.25, 1.0] {
            let cl = dar.closed_loop(&k0, &[rho]).unwrap();
            assert_eq!(cl.a1, dar.a1);
            assert_eq!(cl.a2, dar.a2);
            assert_eq!(cl.a3, dar.a4);
            assert_eq!(cl.ups1, dar.ups1.eval(&[rho]));
            assert_eq!(cl.ups2, dar.ups2.eval(&[rho]));
            assert_eq!(cl.ups3, dar.ups4.eval(&[rho]));
            let realized = dar.realize_closed_loop(&k0, &[rho]).unwrap();
            let plant = dar.realize(&[rho]).unwrap();
            assert!(max_abs(&(realized.a - plant.a)) < 1e-14);
            assert!(max_abs(&(realized.bw - plant.bw)) < 1e-14);
            assert!(max_abs(&(realized.cz - plant.az)) < 1e-14);
            assert!(max_abs(&(realized.dz - plant.dz)) < 1e-14);
        }
    }

    #[test]
    fn example_1_closed_loop_blocks() {
        let dar = example_1();
        let k = -1.3;
        let gain = ScheduledGain::new(vec![m(1, 1, &[k]), m(1, 1, &[k])]);
        let cl = dar.closed_loop(&gain, &[0.2]).unwrap();
        assert!(max_abs(&(cl.a1 - m(2, 2, &[2.0 * k, 0.0, k + 1.0, -1.0]))) < 1e-15);
        // U3 = 0 so the algebraic blocks are untouched
        assert_eq!(cl.ups1, dar.ups1.eval(&[0.2]));
        assert_eq!(cl.ups2, dar.ups2.eval(&[0.2]));
        assert_eq!(cl.ups3, dar.ups4.eval(&[0.2]));
    }

    #[test]
    fn closed_loop_without_pi_coupling_is_a1() {
        let mut dar = example_2();
        dar.a2 = Mat::zeros(2, 4);
        dar.c2 = Mat::zeros(1, 4);
        let gain = ScheduledGain::new(vec![m(1, 1, &[-2.0]), m(1, 1, &[-3.0])]);
        let cl = dar.closed_loop(&gain, &[0.5]).unwrap();
        let realized = dar.realize_closed_loop(&gain, &[0.5]).unwrap();
        assert_eq!(realized.a, cl.a1);
    }

    proptest! {
        #[test]
        fn pi_value_satisfies_algebraic_row(
            rho in 0.0..1.0f64,
            v in prop::collection::vec(-10.0..10.0f64, 4),
        ) {
            let dar = example_2();
            let x = Vector::from_vec(vec![v[0], v[1]]);
            let u = Vector::from_vec(vec![v[2]]);
            let w = Vector::from_vec(vec![v[3]]);
            let pi = dar.pi_value(&[rho], &x, &u, &w).unwrap();
            let res = dar.algebraic_residual(&[rho], &x, &pi, &u, &w);
            prop_assert!(res.amax() <= 1e-9);
        }

        #[test]
        fn pi_value_example_1(rho in -1.5..1.5f64, v in prop::collection::vec(-10.0..10.0f64, 4)) {
            let dar = example_1();
            let x = Vector::from_vec(vec![v[0], v[1]]);
            let u = Vector::from_vec(vec![v[2]]);
            let w = Vector::from_vec(vec![v[3]]);
            let pi = dar.pi_value(&[rho], &x, &u, &w).unwrap();
            prop_assert!(dar.algebraic_residual(&[rho], &x, &pi, &u, &w).amax() <= 1e-9);
        }
    }
}
