//! Dissipation and L2 checks along simulated trajectories.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{state_derivative, step_algebraic, SimError, Trajectory};
use crate::dar::{DarSystem, ScheduledGain};
use crate::numerics::{hstack, null_space, Mat, Vector};
use crate::synthesis::{Mode, SampleCheck, SynthesisResult};

/// Largest dissipation value an audit accepts.
pub const AUDIT_TOLERANCE: f64 = 1e-7;
/// Slack added to the L2 bound.
pub const L2_SLACK: f64 = 1e-6;

pub type YwReport = SampleCheck;

fn quad(v: &Vector, m: &Mat) -> f64 {
    (v.transpose() * m * v)[(0, 0)]
}

fn combine(alpha: &[f64], items: &[Mat]) -> Mat {
    let mut acc = Mat::zeros(items[0].nrows(), items[0].ncols());
    for (a, m) in alpha.iter().zip(items) {
        acc += m * *a;
    }
    acc
}

/// Dissipation rate of the certificate at every sample. Stabilization
/// certificates use `grad V^T xdot + x^T H x - supply(y, u)`; L2 certificates
/// use the lifted state `[x; w; z / gamma]`, for which the storage part is
/// `Vdot - gamma |w|^2 + |z|^2 / gamma`.
pub(super) fn dissipation_rates(
    dar: &DarSystem,
    result: &SynthesisResult,
    traj: &Trajectory,
) -> Result<Vec<f64>, SimError> {
    let cert = &result.certificate;
    let p = cert.p_state();
    let mut out = Vec::with_capacity(traj.len());
    for k in 0..traj.len() {
        let (x, w, u, y, z) = (&traj.x[k], &traj.w[k], &traj.u[k], &traj.y[k], &traj.z[k]);
        let alpha = dar
            .bounds
            .coords(&traj.rho[k])
            .map_err(crate::dar::DarError::from)?;
        let alpha = alpha.alpha();
        let h = combine(alpha, &cert.h);
        let q = combine(alpha, &cert.q);
        let s = combine(alpha, &cert.s);
        let xdot = &dar.a1 * x + &dar.a2 * &traj.pi[k] + &dar.a3 * u + &dar.a4 * w;
        let vdot = 2.0 * x.dot(&(&p * xdot));
        let supply = quad(y, &q) + 2.0 * y.dot(&(&s * u)) + quad(u, &cert.r);
        let value = match result.mode {
            Mode::Stabilize => vdot + quad(x, &h) - supply,
            Mode::L2 => {
                let gamma = cert.gamma.unwrap_or(f64::NAN);
                let zeta = z / gamma;
                let xbar = Vector::from_iterator(
                    x.len() + w.len() + zeta.len(),
                    x.iter().chain(w.iter()).chain(zeta.iter()).copied(),
                );
                vdot - gamma * w.norm_squared() + z.norm_squared() / gamma + quad(&xbar, &h)
                    - supply
            }
        };
        out.push(value);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub samples: usize,
    pub max_value: f64,
    pub worst_t: f64,
    pub passed: bool,
}

fn summarize(values: impl Iterator<Item = (f64, f64)>) -> AuditReport {
    let mut samples = 0;
    let mut max_value = f64::NEG_INFINITY;
    let mut worst_t = f64::NAN;
    for (t, v) in values {
        samples += 1;
        if v > max_value || v.is_nan() {
            max_value = v;
            worst_t = t;
        }
    }
    AuditReport {
        samples,
        max_value,
        worst_t,
        passed: samples == 0 || max_value <= AUDIT_TOLERANCE,
    }
}

/// Evaluates the certificate's dissipation rate along the trajectory; passes
/// when its maximum stays at or below [`AUDIT_TOLERANCE`].
pub fn dissipation_audit(
    dar: &DarSystem,
    result: &SynthesisResult,
    traj: &Trajectory,
) -> Result<AuditReport, SimError> {
    let rates = dissipation_rates(dar, result, traj)?;
    Ok(summarize(traj.t.iter().copied().zip(rates)))
}

/// `Vdot + |z|^2 / gamma - gamma |w|^2` with `pi`, `u` re-solved from the
/// gains at every sample where `(x, w) != 0`.
pub fn l2_dissipation_audit(
    dar: &DarSystem,
    gains: &ScheduledGain,
    gamma: f64,
    p: &Mat,
    traj: &Trajectory,
) -> Result<AuditReport, SimError> {
    let mut values = Vec::new();
    for k in 0..traj.len() {
        let (x, w) = (&traj.x[k], &traj.w[k]);
        if x.amax() == 0.0 && w.amax() == 0.0 {
            continue;
        }
        let alg = step_algebraic(dar, gains, &traj.rho[k], x, w)?;
        let xdot = state_derivative(dar, x, w, &alg);
        let value =
            2.0 * x.dot(&(p * xdot)) + alg.z.norm_squared() / gamma - gamma * w.norm_squared();
        values.push((traj.t[k], value));
    }
    Ok(summarize(values.into_iter()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct L2Report {
    pub z_norm: f64,
    pub w_norm: f64,
    /// `sqrt(gamma x0^T P x0)`.
    pub theta: f64,
    pub bound: f64,
    /// `|z|_2 / |w|_2`, absent when `w` has no energy.
    pub ratio: Option<f64>,
    pub passed: bool,
}

/// Checks `|z|_2 <= gamma |w|_2 + theta` (plus [`L2_SLACK`]).
pub fn l2_report(traj: &Trajectory, gamma: f64, p: &Mat) -> L2Report {
    let (z_norm, w_norm) = traj.l2_norms();
    let v0 = traj.x.first().map_or(0.0, |x0| quad(x0, p));
    let theta = (gamma * v0).max(0.0).sqrt();
    let bound = gamma * w_norm + theta;
    L2Report {
        z_norm,
        w_norm,
        theta,
        bound,
        ratio: (w_norm > 0.0).then(|| z_norm / w_norm),
        passed: z_norm <= bound + L2_SLACK,
    }
}

/// Closed-loop `Y_w` over `[x; w; pi]` at `rho`, together with the
/// annihilator `[U1 U3 U2]` of the closed-loop algebraic row.
///
/// With `xdot = A1 x + A3 w + A2 pi` and `z = B1 x + B3 w + B2 pi` (closed-loop
/// blocks), `v^T Y_w v = Vdot + |z|^2 / gamma - gamma |w|^2`.
pub fn yw_matrix(
    dar: &DarSystem,
    gains: &ScheduledGain,
    gamma: f64,
    p: &Mat,
    rho: &[f64],
) -> Result<(Mat, Mat), SimError> {
    let cl = dar.closed_loop(gains, rho)?;
    let (n, q, npi) = (dar.dims.n, dar.dims.q, dar.dims.n_pi);
    let g = 1.0 / gamma;
    let pa1 = p * &cl.a1;
    let xx = &pa1 + pa1.transpose() + cl.b1.transpose() * &cl.b1 * g;
    let wx = cl.a3.transpose() * p + cl.b3.transpose() * &cl.b1 * g;
    let ww = cl.b3.transpose() * &cl.b3 * g - Mat::identity(q, q) * gamma;
    let px = cl.a2.transpose() * p + cl.b2.transpose() * &cl.b1 * g;
    let pw = cl.b2.transpose() * &cl.b3 * g;
    let pp = cl.b2.transpose() * &cl.b2 * g;
    let dim = n + q + npi;
    let mut y = Mat::zeros(dim, dim);
    let mut put = |r: usize, c: usize, b: &Mat| {
        y.view_mut((r, c), b.shape()).copy_from(b);
        if r != c {
            y.view_mut((c, r), (b.ncols(), b.nrows()))
                .copy_from(&b.transpose());
        }
    };
    put(0, 0, &xx);
    put(n, 0, &wx);
    put(n, n, &ww);
    put(n + q, 0, &px);
    put(n + q, n, &pw);
    put(n + q, n + q, &pp);
    let annihilator = hstack(&[&cl.ups1, &cl.ups3, &cl.ups2]);
    Ok((y, annihilator))
}

/// Samples `[x; w; pi]` in the kernel of the closed-loop annihilator at
/// random `rho` and checks the quadratic form of `Y_w` is negative.
pub fn yw_sample_check(
    dar: &DarSystem,
    gains: &ScheduledGain,
    gamma: f64,
    p: &Mat,
    samples: usize,
    seed: u64,
) -> Result<YwReport, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    let mut taken = 0;
    while taken < samples {
        let rho: Vec<f64> = dar
            .bounds
            .lower()
            .iter()
            .zip(dar.bounds.upper())
            .map(|(&lo, &hi)| rng.gen_range(lo..=hi))
            .collect();
        let (y, annihilator) = yw_matrix(dar, gains, gamma, p, &rho)?;
        let basis = null_space(&annihilator, 1e-10);
        let coeffs = Vector::from_fn(basis.ncols(), |_, _| rng.gen_range(-1.0..1.0));
        let v = &basis * coeffs;
        let norm2 = v.norm_squared();
        if norm2 == 0.0 {
            continue;
        }
        taken += 1;
        let value = quad(&v, &y) / norm2;
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::example_1;
    use crate::simulate::{integrate, Signal, SignalSpec, SimConfig};
    use crate::synthesis::{synth_l2, synth_stabilize, SynthesisOptions};
    use std::sync::OnceLock;

    fn ex1() -> &'static SynthesisResult {
        static CELL: OnceLock<SynthesisResult> = OnceLock::new();
        CELL.get_or_init(|| synth_l2(&example_1(), &SynthesisOptions::with_beta(-1.3)).unwrap())
    }

    fn ex1_stab() -> &'static SynthesisResult {
        static CELL: OnceLock<SynthesisResult> = OnceLock::new();
        CELL.get_or_init(|| {
            synth_stabilize(
                &example_1().without_performance_channel(),
                &SynthesisOptions::with_beta(-1.3),
            )
            .unwrap()
        })
    }

    fn fig1_rho() -> Signal {
        Signal::from_spec(
            &SignalSpec::Sine {
                amplitude: 1.5,
                frequency: 1.6,
                phase: 0.0,
                offset: 0.0,
            },
            1,
        )
    }

    fn short(x0: Vec<f64>) -> SimConfig {
        SimConfig {
            t_end: 5.0,
            dt: 2e-3,
            ..SimConfig::new(x0)
        }
    }

    fn noise(seed: u64) -> Signal {
        Signal::from_spec(
            &SignalSpec::SeededNoise {
                band: 5.0,
                rms: 1.0,
                seed,
            },
            1,
        )
    }

    #[test]
    fn stabilization_audit_and_inflated_h() {
        let dar = example_1().without_performance_channel();
        let res = ex1_stab();
        let mut traj = integrate(
            &dar,
            &res.gains,
            &fig1_rho(),
            &Signal::zero(0),
            &short(vec![1.0, -1.0]),
        )
        .unwrap();
        traj.attach_certificate(&dar, res).unwrap();
        let report = dissipation_audit(&dar, res, &traj).unwrap();
        assert!(report.passed && report.max_value < 0.0, "{report:?}");
        assert!(traj.max_v_increase() <= 1e-6 * traj.v[0]);

        let mut inflated = res.clone();
        for h in &mut inflated.certificate.h {
            *h *= 1e6;
        }
        assert!(!dissipation_audit(&dar, &inflated, &traj).unwrap().passed);
    }

    #[test]
    fn zero_trajectory_passes_audits() {
        let dar = example_1();
        let res = ex1();
        let traj = integrate(
            &dar,
            &res.gains,
            &fig1_rho(),
            &Signal::zero(1),
            &short(vec![0.0, 0.0]),
        )
        .unwrap();
        let report = dissipation_audit(&dar, res, &traj).unwrap();
        assert!(report.passed);
        assert_eq!(report.max_value, 0.0);
        let l2 = l2_report(&traj, res.gamma.unwrap(), &res.certificate.p_state());
        assert!(l2.passed);
        assert_eq!(l2.ratio, None);
    }

    #[test]
    fn l2_mode_audits_pass_under_noise() {
        let dar = example_1();
        let res = ex1();
        let gamma = res.gamma.unwrap();
        let p = res.certificate.p_state();
        let mut traj = integrate(
            &dar,
            &res.gains,
            &fig1_rho(),
            &noise(3),
            &short(vec![0.5, 0.5]),
        )
        .unwrap();
        traj.attach_certificate(&dar, res).unwrap();
        assert!(dissipation_audit(&dar, res, &traj).unwrap().passed);
        let audit = l2_dissipation_audit(&dar, &res.gains, gamma, &p, &traj).unwrap();
        assert!(audit.passed, "{audit:?}");
        let report = l2_report(&traj, gamma, &p);
        assert!(report.passed, "{report:?}");
        assert!(l2_report(&traj, 2.0 * gamma, &p).passed);
    }

    #[test]
    fn unit_energy_pulse_ratio_below_gamma() {
        let dar = example_1();
        let res = ex1();
        let pulse = Signal::from_spec(
            &SignalSpec::Pulse {
                t0: 0.0,
                t1: 1.0,
                level: 1.0,
            },
            1,
        );
        let traj = integrate(
            &dar,
            &res.gains,
            &fig1_rho(),
            &pulse,
            &short(vec![0.0, 0.0]),
        )
        .unwrap();
        let report = l2_report(&traj, res.gamma.unwrap(), &res.certificate.p_state());
        assert!((report.w_norm - 1.0).abs() < 1e-2);
        assert!(report.ratio.unwrap() <= res.gamma.unwrap());
    }

    #[test]
    fn halved_gamma_breaks_l2_audit() {
        let dar = example_1();
        let res = ex1();
        let gamma = res.gamma.unwrap() / 2.0;
        let p = res.certificate.p_state();
        let traj = integrate(
            &dar,
            &res.gains,
            &fig1_rho(),
            &noise(5),
            &short(vec![0.0, 0.0]),
        )
        .unwrap();
        assert!(
            !l2_dissipation_audit(&dar, &res.gains, gamma, &p, &traj)
                .unwrap()
                .passed
        );
    }

    #[test]
    fn yw_samples_negative_and_fail_below_optimum() {
        let dar = example_1();
        let res = ex1();
        let gamma = res.gamma.unwrap();
        let p = res.certificate.p_state();
        let report = yw_sample_check(&dar, &res.gains, gamma, &p, 500, 21).unwrap();
        assert_eq!(report.violations, 0, "{report:?}");
        let report = yw_sample_check(&dar, &res.gains, gamma / 2.0, &p, 500, 21).unwrap();
        assert!(report.violations > 0);
    }

    #[test]
    fn yw_form_matches_trajectory_dissipation() {
        // v^T Y_w v equals Vdot + |z|^2/gamma - gamma |w|^2 at a consistent point
        let dar = example_1();
        let res = ex1();
        let gamma = res.gamma.unwrap();
        let p = res.certificate.p_state();
        let rho = [0.4];
        let x = Vector::from_row_slice(&[0.3, -0.8]);
        let w = Vector::from_row_slice(&[0.6]);
        let alg = step_algebraic(&dar, &res.gains, &rho, &x, &w).unwrap();
        let xdot = state_derivative(&dar, &x, &w, &alg);
        let direct =
            2.0 * x.dot(&(&p * xdot)) + alg.z.norm_squared() / gamma - gamma * w.norm_squared();
        let (y, ann) = yw_matrix(&dar, &res.gains, gamma, &p, &rho).unwrap();
        let v = Vector::from_iterator(9, x.iter().chain(w.iter()).chain(alg.pi.iter()).copied());
        assert!((ann * &v).amax() < 1e-12);
        assert!((quad(&v, &y) - direct).abs() < 1e-10);
    }
}
