//! Numeric re-validation of solved certificates.
//!
//! Everything here rebuilds the conditions from plain matrix products of the
//! solved values, independently of the symbolic assembly handed to the
//! solver.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{CertificateVars, LmiModel, Mode, SynthesisError, SynthesisResult};
use crate::dar::{DarSystem, ScheduledGain};
use crate::numerics::{null_space, spectral_abscissa, Mat, SymMat};
use crate::param_domain::ParameterBox;

/// Interior convex combinations checked by [`verify_certificate`].
pub const INTERIOR_SAMPLES: usize = 100;
const INTERIOR_SEED: u64 = 0x5eed_0001;

fn eig_max(m: &Mat) -> f64 {
    SymMat::symmetric_part(m)
        .and_then(|s| crate::numerics::sym_eig_max(&s))
        .unwrap_or(f64::INFINITY)
}

fn eig_min(m: &Mat) -> f64 {
    SymMat::symmetric_part(m)
        .and_then(|s| crate::numerics::sym_eig_min(&s))
        .unwrap_or(f64::NEG_INFINITY)
}

fn he(m: &Mat) -> Mat {
    m + m.transpose()
}

fn put(target: &mut Mat, row: usize, col: usize, block: &Mat) {
    target.view_mut((row, col), block.shape()).copy_from(block);
}

/// Uniformly distributed point of the probability simplex.
pub(crate) fn random_simplex_point(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..len).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

pub(crate) fn random_rho(rng: &mut impl Rng, bounds: &ParameterBox) -> Vec<f64> {
    bounds
        .lower()
        .iter()
        .zip(bounds.upper())
        .map(|(&lo, &hi)| rng.gen_range(lo..=hi))
        .collect()
}

fn combine(alpha: &[f64], items: &[Mat]) -> Mat {
    let mut acc = Mat::zeros(items[0].nrows(), items[0].ncols());
    for (a, m) in alpha.iter().zip(items) {
        acc += m * *a;
    }
    acc
}

/// Numeric view of the LMI conditions at a solved certificate.
pub struct CertificateEvaluator<'a> {
    model: &'a LmiModel,
    cert: &'a CertificateVars,
}

impl<'a> CertificateEvaluator<'a> {
    pub fn new(model: &'a LmiModel, cert: &'a CertificateVars) -> Self {
        CertificateEvaluator { model, cert }
    }

    /// `Y` over `[x; pi; u]` for given `H, Q, S`.
    pub fn y_matrix(&self, h: &Mat, q: &Mat, s: &Mat) -> Mat {
        let md = self.model;
        let (ns, npi) = (md.n_s, md.n_pi);
        let gamma = self.cert.gamma.unwrap_or(0.0);
        let a1 = &md.a1_const + &md.a1_gamma * gamma;
        let p = &self.cert.p;
        let (c1, c2) = (&md.c1, &md.c2);
        let y11 = he(&(p * a1)) - c1.transpose() * q * c1 + h;
        let y12 = p * &md.a2 - c1.transpose() * q * c2;
        let y13 = p * &md.a3 - c1.transpose() * s;
        let y22 = -(c2.transpose() * q * c2);
        let y23 = -(c2.transpose() * s);
        let mut y = Mat::zeros(md.dim(), md.dim());
        put(&mut y, 0, 0, &y11);
        put(&mut y, 0, ns, &y12);
        put(&mut y, ns, 0, &y12.transpose());
        put(&mut y, 0, ns + npi, &y13);
        put(&mut y, ns + npi, 0, &y13.transpose());
        put(&mut y, ns, ns, &y22);
        put(&mut y, ns, ns + npi, &y23);
        put(&mut y, ns + npi, ns, &y23.transpose());
        put(&mut y, ns + npi, ns + npi, &(-&self.cert.r));
        y
    }

    pub fn vertex_y(&self, i: usize) -> Mat {
        self.y_matrix(&self.cert.h[i], &self.cert.q[i], &self.cert.s[i])
    }

    /// `Y_i + He{L C_di}`.
    pub fn vertex_dissipation(&self, i: usize) -> Mat {
        self.vertex_y(i) + he(&(&self.cert.l * self.model.cdi(i)))
    }

    /// `[[Q_i + beta He{1 S_i^T}, beta 1 R], [., -R]]`.
    pub fn gain_matrix(&self, i: usize, beta: f64) -> Mat {
        let (p, m) = (self.model.p, self.model.m);
        let ones = Mat::from_element(p, m, 1.0);
        let q = &self.cert.q[i];
        let s = &self.cert.s[i];
        let r = &self.cert.r;
        let mut x = Mat::zeros(p + m, p + m);
        put(&mut x, 0, 0, &(q + he(&(&ones * s.transpose())) * beta));
        let off = &ones * r * beta;
        put(&mut x, 0, p, &off);
        put(&mut x, p, 0, &off.transpose());
        put(&mut x, p, p, &(-r));
        x
    }

    /// `Y(rho)` from the convex combination of the vertex variables.
    pub fn y_at(&self, rho: &[f64]) -> Result<Mat, SynthesisError> {
        let alpha = self.alpha(rho)?;
        Ok(self.y_matrix(
            &combine(&alpha, &self.cert.h),
            &combine(&alpha, &self.cert.q),
            &combine(&alpha, &self.cert.s),
        ))
    }

    /// `Y(rho) + He{L C_d(rho)}` with `C_d` evaluated directly at `rho`.
    pub fn dissipation_at(&self, rho: &[f64]) -> Result<Mat, SynthesisError> {
        Ok(self.y_at(rho)? + he(&(&self.cert.l * self.model.cd(rho))))
    }

    /// `X_d(rho) = [[Q(rho), S(rho)], [S(rho)^T, R]]` over `[y; u]`.
    pub fn supply_at(&self, rho: &[f64]) -> Result<Mat, SynthesisError> {
        let alpha = self.alpha(rho)?;
        let (p, m) = (self.model.p, self.model.m);
        let s = combine(&alpha, &self.cert.s);
        let mut x = Mat::zeros(p + m, p + m);
        put(&mut x, 0, 0, &combine(&alpha, &self.cert.q));
        put(&mut x, 0, p, &s);
        put(&mut x, p, 0, &s.transpose());
        put(&mut x, p, p, &self.cert.r);
        Ok(x)
    }

    fn alpha(&self, rho: &[f64]) -> Result<Vec<f64>, SynthesisError> {
        self.model
            .bounds
            .coords(rho)
            .map(|c| c.alpha().to_vec())
            .map_err(|e| SynthesisError::IllPosed(e.to_string()))
    }

    pub fn worst_vertex_eigenvalue(&self, beta: f64) -> f64 {
        (0..self.model.vertex_count())
            .flat_map(|i| {
                [
                    eig_max(&self.vertex_dissipation(i)),
                    eig_max(&self.gain_matrix(i, beta)),
                ]
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    /// Extreme eigenvalue (or scalar) that was tested.
    pub value: f64,
    pub bound: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub checks: Vec<CheckOutcome>,
    pub passed: bool,
}

impl VerificationReport {
    pub fn failures(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

fn at_least(name: String, value: f64, bound: f64) -> CheckOutcome {
    CheckOutcome {
        name,
        value,
        bound,
        passed: value >= bound,
    }
}

fn at_most(name: String, value: f64, bound: f64) -> CheckOutcome {
    CheckOutcome {
        name,
        value,
        bound,
        passed: value <= bound,
    }
}

/// Substitutes the solved values into every condition: positivity at
/// `eps / 2`, vertex LMIs at `-eps / 2`, and [`INTERIOR_SAMPLES`] seeded
/// interior convex combinations strictly negative.
pub fn verify_certificate(
    dar: &DarSystem,
    result: &SynthesisResult,
) -> Result<VerificationReport, SynthesisError> {
    let model = match result.mode {
        Mode::Stabilize => LmiModel::stabilization(dar)?,
        Mode::L2 => LmiModel::l2(dar)?,
    };
    let cert = &result.certificate;
    let eps = result.diagnostics.eps;
    let beta = result.diagnostics.beta;
    let half = eps / 2.0;
    let eval = CertificateEvaluator::new(&model, cert);
    let n_v = model.vertex_count();
    if cert.h.len() != n_v || cert.q.len() != n_v || cert.s.len() != n_v {
        return Err(SynthesisError::InvalidOptions(format!(
            "certificate has {} vertex blocks, the parameter box has {n_v} vertices",
            cert.h.len()
        )));
    }

    let mut checks = vec![
        at_least("P >= eps I".into(), eig_min(&cert.p_state()), half),
        at_least("R >= eps I".into(), eig_min(&cert.r), half),
    ];
    if let Some(g) = cert.gamma {
        checks.push(at_least("gamma > 0".into(), g, half));
    }
    for i in 0..n_v {
        checks.push(at_least(
            format!("H_{} >= eps I", i + 1),
            eig_min(&cert.h[i]),
            half,
        ));
        checks.push(at_most(
            format!("vertex {} dissipation", i + 1),
            eig_max(&eval.vertex_dissipation(i)),
            -half,
        ));
        checks.push(at_most(
            format!("vertex {} gain", i + 1),
            eig_max(&eval.gain_matrix(i, beta)),
            -half,
        ));
    }

    let vertex_d: Vec<Mat> = (0..n_v).map(|i| eval.vertex_dissipation(i)).collect();
    let vertex_x: Vec<Mat> = (0..n_v).map(|i| eval.gain_matrix(i, beta)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(INTERIOR_SEED);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..INTERIOR_SAMPLES {
        let alpha = random_simplex_point(&mut rng, n_v);
        worst = worst
            .max(eig_max(&combine(&alpha, &vertex_d)))
            .max(eig_max(&combine(&alpha, &vertex_x)));
    }
    checks.push(CheckOutcome {
        name: format!("{INTERIOR_SAMPLES} interior convex combinations"),
        value: worst,
        bound: 0.0,
        passed: worst < 0.0,
    });

    let passed = checks.iter().all(|c| c.passed);
    Ok(VerificationReport { checks, passed })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleCheck {
    pub samples: usize,
    pub violations: usize,
    /// Largest normalized quadratic form `v^T M v / |v|^2` seen.
    pub worst: f64,
}

impl SampleCheck {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Samples `pi_d` in the kernel of `C_d(rho)` at random `rho` and checks
/// `pi_d^T Y(rho) pi_d < 0`.
pub fn kernel_dissipativity_check(
    model: &LmiModel,
    cert: &CertificateVars,
    samples: usize,
    seed: u64,
) -> Result<SampleCheck, SynthesisError> {
    let eval = CertificateEvaluator::new(model, cert);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..samples {
        let rho = random_rho(&mut rng, &model.bounds);
        let basis = null_space(&model.cd(&rho), 1e-10);
        if basis.ncols() == 0 {
            continue;
        }
        let coeffs = Mat::from_fn(basis.ncols(), 1, |_, _| rng.gen_range(-1.0..1.0));
        let v = &basis * coeffs;
        let norm2 = v.norm_squared();
        if norm2 == 0.0 {
            continue;
        }
        let value = (v.transpose() * eval.y_at(&rho)? * &v)[(0, 0)] / norm2;
        worst = worst.max(value);
        if value >= 0.0 {
            violations += 1;
        }
    }
    Ok(SampleCheck {
        samples,
        violations,
        worst,
    })
}

/// Checks `zeta^T X_d(rho) zeta <= 0` for `zeta = [y; K(rho) y]`.
pub fn gain_consistency_check(
    model: &LmiModel,
    cert: &CertificateVars,
    gains: &ScheduledGain,
    samples: usize,
    seed: u64,
) -> Result<SampleCheck, SynthesisError> {
    let eval = CertificateEvaluator::new(model, cert);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..samples {
        let rho = random_rho(&mut rng, &model.bounds);
        let k = gains
            .evaluate(&model.bounds, &rho)
            .map_err(|e| SynthesisError::IllPosed(e.to_string()))?;
        let y = Mat::from_fn(model.p, 1, |_, _| rng.gen_range(-1.0..1.0));
        let u = &k * &y;
        let mut zeta = Mat::zeros(model.p + model.m, 1);
        put(&mut zeta, 0, 0, &y);
        put(&mut zeta, model.p, 0, &u);
        let value =
            (zeta.transpose() * eval.supply_at(&rho)? * &zeta)[(0, 0)] / zeta.norm_squared();
        worst = worst.max(value);
        if value > 1e-12 {
            violations += 1;
        }
    }
    Ok(SampleCheck {
        samples,
        violations,
        worst,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HurwitzReport {
    pub points: usize,
    pub max_real_part: f64,
    pub worst_rho: Vec<f64>,
}

impl HurwitzReport {
    pub fn passed(&self) -> bool {
        self.max_real_part < 0.0
    }
}

/// Spectral abscissa of the frozen closed loop over a uniform grid.
pub fn hurwitz_grid(
    dar: &DarSystem,
    gains: &ScheduledGain,
    points_per_axis: usize,
) -> Result<HurwitzReport, SynthesisError> {
    let mut report = HurwitzReport {
        points: 0,
        max_real_part: f64::NEG_INFINITY,
        worst_rho: Vec::new(),
    };
    for rho in dar.bounds.grid(points_per_axis) {
        let cl = dar
            .realize_closed_loop(gains, &rho)
            .map_err(SynthesisError::from_dar)?;
        let abscissa =
            spectral_abscissa(&cl.a).map_err(|e| SynthesisError::IllPosed(e.to_string()))?;
        report.points += 1;
        if abscissa > report.max_real_part {
            report.max_real_part = abscissa;
            report.worst_rho = rho;
        }
    }
    Ok(report)
}
