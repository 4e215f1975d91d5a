//! Matrix data shared by both synthesis modes and the symbolic LMI builders.
//!
//! Stabilization works on the DAR as given (`q = l = 0`). The L2 mode works
//! on the lifted bar system, whose state is `[x; w; zeta]`, with
//! `Pbar = diag(P, I)` and `Abar1 = Abar1_const + gamma Abar1_gamma`. Both
//! fit one template: state dimension `n_s`, a variable `n x n` leading block
//! of the storage matrix and a fixed identity on the remaining `n_s - n`
//! coordinates.

use serde::{Deserialize, Serialize};

use super::SynthesisError;
use crate::dar::{AffineParamMatrix, DarSystem};
use crate::numerics::{hstack, selector, Mat, SymMat};
use crate::param_domain::ParameterBox;
use crate::sdp::{AffineLmi, SdpError, SdpProblem, Sense, VarHandle, VarKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Stabilize,
    L2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmiModel {
    pub mode: Mode,
    /// Dimension of the physical state (the variable block of `P`).
    pub n: usize,
    /// Dimension of the LMI state (`n`, or `n + q + l` in L2 mode).
    pub n_s: usize,
    pub n_pi: usize,
    pub m: usize,
    pub p: usize,
    pub a1_const: Mat,
    /// Coefficient of `gamma` in the state matrix; zero in stabilization mode.
    pub a1_gamma: Mat,
    pub a2: Mat,
    pub a3: Mat,
    pub c1: Mat,
    pub c2: Mat,
    pub ups1: AffineParamMatrix,
    pub ups2: AffineParamMatrix,
    pub ups3: AffineParamMatrix,
    pub bounds: ParameterBox,
}

impl LmiModel {
    pub fn stabilization(dar: &DarSystem) -> Result<Self, SynthesisError> {
        dar.ensure_valid().map_err(SynthesisError::from_dar)?;
        if dar.has_performance_channel() {
            return Err(SynthesisError::PerformanceChannelPresent);
        }
        let d = dar.dims;
        Ok(LmiModel {
            mode: Mode::Stabilize,
            n: d.n,
            n_s: d.n,
            n_pi: d.n_pi,
            m: d.m,
            p: d.p,
            a1_const: dar.a1.clone(),
            a1_gamma: Mat::zeros(d.n, d.n),
            a2: dar.a2.clone(),
            a3: dar.a3.clone(),
            c1: dar.c1.clone(),
            c2: dar.c2.clone(),
            ups1: dar.ups1.clone(),
            ups2: dar.ups2.clone(),
            ups3: dar.ups3.clone(),
            bounds: dar.bounds.clone(),
        })
    }

    pub fn l2(dar: &DarSystem) -> Result<Self, SynthesisError> {
        let bar = dar.lift_l2().map_err(SynthesisError::from_dar)?;
        Ok(LmiModel {
            mode: Mode::L2,
            n: bar.n,
            n_s: bar.n_l(),
            n_pi: bar.n_pi,
            m: bar.m,
            p: bar.p,
            a1_const: bar.a1_const,
            a1_gamma: bar.a1_gamma,
            a2: bar.a2,
            a3: bar.a3,
            c1: bar.c1,
            c2: bar.c2,
            ups1: bar.ups1,
            ups2: bar.ups2,
            ups3: bar.ups3,
            bounds: dar.bounds.clone(),
        })
    }

    /// Size of the vertex LMIs, `n_s + n_pi + m`.
    pub fn dim(&self) -> usize {
        self.n_s + self.n_pi + self.m
    }

    pub fn vertex_count(&self) -> usize {
        self.bounds.vertex_count()
    }

    /// `C_d(rho) = [U1 U2 U3](rho)`.
    pub fn cd(&self, rho: &[f64]) -> Mat {
        hstack(&[
            &self.ups1.eval(rho),
            &self.ups2.eval(rho),
            &self.ups3.eval(rho),
        ])
    }

    pub fn cdi(&self, vertex: usize) -> Mat {
        self.cd(&self.bounds.vertex(vertex))
    }

    /// `diag(0_n, I_{n_s - n})`, the constant part of the storage matrix.
    pub fn fixed_block(&self) -> Mat {
        let mut m = Mat::zeros(self.n_s, self.n_s);
        for k in self.n..self.n_s {
            m[(k, k)] = 1.0;
        }
        m
    }

    /// `diag(P, I)` for an `n x n` block `P`.
    pub fn storage(&self, p: &Mat) -> Mat {
        let mut full = self.fixed_block();
        full.view_mut((0, 0), (self.n, self.n)).copy_from(p);
        full
    }

    fn embed_state(&self) -> Mat {
        selector(0, self.n_s, self.dim()).transpose()
    }

    fn embed_pi(&self) -> Mat {
        selector(self.n_s, self.n_pi, self.dim()).transpose()
    }

    fn embed_u(&self) -> Mat {
        selector(self.n_s + self.n_pi, self.m, self.dim()).transpose()
    }

    /// `[A1 A2 A3]` spread over the LMI coordinates, `n_s x dim`.
    fn spread(&self, a1: &Mat) -> Mat {
        a1 * self.embed_state().transpose()
            + &self.a2 * self.embed_pi().transpose()
            + &self.a3 * self.embed_u().transpose()
    }

    /// `[C1 C2 0]`, `p x dim`.
    fn output_row(&self) -> Mat {
        &self.c1 * self.embed_state().transpose() + &self.c2 * self.embed_pi().transpose()
    }
}

/// How `gamma` enters the assembled conditions.
#[derive(Debug, Clone, PartialEq)]
pub enum GammaSlot {
    /// Stabilization mode: no performance variable.
    Absent,
    Variable(VarHandle),
    Fixed(f64),
}

/// Handles to every decision variable of one synthesis problem.
#[derive(Debug, Clone)]
pub struct CertificateHandles {
    pub p: VarHandle,
    pub h: Vec<VarHandle>,
    pub q: Vec<VarHandle>,
    pub s: Vec<VarHandle>,
    pub r: VarHandle,
    pub l: VarHandle,
    pub gamma: GammaSlot,
}

/// Declares `P, H_i, Q_i, S_i, R, L` (and `gamma` when `fixed_gamma` is `None`
/// in L2 mode).
pub fn declare_variables(
    problem: &mut SdpProblem,
    model: &LmiModel,
    fixed_gamma: Option<f64>,
) -> Result<CertificateHandles, SdpError> {
    let p = problem.add_variable(VarKind::Symmetric(model.n), "P")?;
    let r = problem.add_variable(VarKind::Symmetric(model.m), "R")?;
    let l = problem.add_variable(VarKind::Rectangular(model.dim(), model.n_pi), "L")?;
    let gamma = match (model.mode, fixed_gamma) {
        (Mode::Stabilize, _) => GammaSlot::Absent,
        (Mode::L2, Some(g)) => GammaSlot::Fixed(g),
        (Mode::L2, None) => GammaSlot::Variable(problem.add_variable(VarKind::Scalar, "gamma")?),
    };
    let mut h = Vec::new();
    let mut q = Vec::new();
    let mut s = Vec::new();
    for i in 0..model.vertex_count() {
        h.push(problem.add_variable(VarKind::Symmetric(model.n_s), &format!("H_{}", i + 1))?);
        q.push(problem.add_variable(VarKind::Symmetric(model.p), &format!("Q_{}", i + 1))?);
        s.push(problem.add_variable(
            VarKind::Rectangular(model.p, model.m),
            &format!("S_{}", i + 1),
        )?);
    }
    Ok(CertificateHandles {
        p,
        h,
        q,
        s,
        r,
        l,
        gamma,
    })
}

/// `Y_i` over `[x; pi; u]`, without the multiplier term and margin.
pub fn build_yi(model: &LmiModel, vars: &CertificateHandles, vertex: usize) -> AffineLmi {
    let dim = model.dim();
    let ex = model.embed_state();
    let eu = model.embed_u();
    let j = selector(0, model.n, model.n_s);
    let fixed = model.fixed_block();
    let mut lmi = AffineLmi::new(
        format!("Y_{}", vertex + 1),
        dim,
        Sense::NegativeSemidefinite,
    );

    // He{Ex Pbar [A1 A2 A3]} with Pbar = J^T P J + fixed
    let spread = model.spread(&model.a1_const);
    lmi.add_he(&vars.p, &ex * j.transpose(), &j * &spread);
    let constant = &ex * &fixed * &spread;
    lmi.add_constant(&SymMat::symmetric_part(&(&constant + constant.transpose())).expect("square"));
    let gamma_block = &ex * &fixed * &model.a1_gamma * ex.transpose();
    let gamma_block =
        SymMat::symmetric_part(&(&gamma_block + gamma_block.transpose())).expect("square");
    match &vars.gamma {
        GammaSlot::Absent => {}
        GammaSlot::Variable(g) => {
            lmi.add_scaled(g, gamma_block);
        }
        GammaSlot::Fixed(g) => {
            lmi.add_constant(&gamma_block.scale(*g));
        }
    }

    let out = model.output_row();
    lmi.add_congruence(&vars.q[vertex], &out.transpose(), -1.0);
    lmi.add_he(&vars.s[vertex], -out.transpose(), eu.transpose());
    lmi.add_congruence(&vars.h[vertex], &ex, 1.0);
    lmi.add_congruence(&vars.r, &eu, -1.0);
    lmi
}

/// `Y_i + He{L C_di} + eps I <= 0`.
pub fn build_vertex_lmi(
    model: &LmiModel,
    vars: &CertificateHandles,
    vertex: usize,
    eps: f64,
) -> AffineLmi {
    let dim = model.dim();
    let mut lmi = build_yi(model, vars, vertex);
    lmi.name = format!("vertex {} dissipation", vertex + 1);
    lmi.add_he(&vars.l, Mat::identity(dim, dim), model.cdi(vertex));
    lmi.add_constant(&SymMat::identity(dim).scale(eps));
    lmi
}

/// `[[Q_i + beta He{1 S_i^T}, beta 1 R], [., -R]] + eps I <= 0` over `[y; u]`.
pub fn build_gain_lmi(
    model: &LmiModel,
    vars: &CertificateHandles,
    vertex: usize,
    beta: f64,
    eps: f64,
) -> AffineLmi {
    let (p, m) = (model.p, model.m);
    let dim = p + m;
    let ey = selector(0, p, dim).transpose();
    let eu = selector(p, m, dim).transpose();
    let ones = Mat::from_element(p, m, 1.0);
    let mut lmi = AffineLmi::new(
        format!("vertex {} gain", vertex + 1),
        dim,
        Sense::NegativeSemidefinite,
    );
    lmi.add_congruence(&vars.q[vertex], &ey, 1.0)
        .add_he(
            &vars.s[vertex],
            ey.clone(),
            ones.transpose() * beta * ey.transpose(),
        )
        .add_he(&vars.r, &ey * &ones * beta, eu.transpose())
        .add_congruence(&vars.r, &eu, -1.0)
        .add_constant(&SymMat::identity(dim).scale(eps));
    lmi
}

/// `coeff V >= eps I` for a symmetric variable.
pub fn build_lower_bound(var: &VarHandle, dim: usize, eps: f64) -> AffineLmi {
    let mut lmi = AffineLmi::new(
        format!("{} >= eps I", var.name()),
        dim,
        Sense::PositiveSemidefinite,
    );
    lmi.add_congruence(var, &Mat::identity(dim, dim), 1.0)
        .add_constant(&SymMat::identity(dim).scale(-eps));
    lmi
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::{example_1, example_2};
    use crate::numerics::max_abs;
    use crate::sdp::VarValues;

    fn m(rows: usize, cols: usize, v: &[f64]) -> Mat {
        Mat::from_row_slice(rows, cols, v)
    }

    fn setup(model: &LmiModel) -> (SdpProblem, CertificateHandles) {
        let mut problem = SdpProblem::new();
        let vars = declare_variables(&mut problem, model, None).unwrap();
        (problem, vars)
    }

    #[test]
    fn yi_with_identity_storage_and_unit_r() {
        let dar = example_2().without_performance_channel();
        let model = LmiModel::stabilization(&dar).unwrap();
        let (problem, vars) = setup(&model);
        let mut values = VarValues::zeros(&problem);
        values.set(&vars.p, &Mat::identity(2, 2)).unwrap();
        values.set(&vars.r, &Mat::identity(1, 1)).unwrap();
        let y = build_yi(&model, &vars, 0).evaluate(&values).to_mat();
        let a1 = &dar.a1;
        let mut expected = Mat::zeros(7, 7);
        expected
            .view_mut((0, 0), (2, 2))
            .copy_from(&(a1 + a1.transpose()));
        expected.view_mut((0, 2), (2, 4)).copy_from(&dar.a2);
        expected
            .view_mut((2, 0), (4, 2))
            .copy_from(&dar.a2.transpose());
        expected.view_mut((0, 6), (2, 1)).copy_from(&dar.a3);
        expected
            .view_mut((6, 0), (1, 2))
            .copy_from(&dar.a3.transpose());
        expected[(6, 6)] = -1.0;
        assert!(max_abs(&(y - expected)) < 1e-14);
    }

    #[test]
    fn yi_ignores_q_and_confines_s_without_outputs() {
        let mut dar = example_2().without_performance_channel();
        dar.c1 = Mat::zeros(1, 2);
        dar.c2 = Mat::zeros(1, 4);
        let model = LmiModel::stabilization(&dar).unwrap();
        let (problem, vars) = setup(&model);
        let mut values = VarValues::zeros(&problem);
        values.set(&vars.q[0], &m(1, 1, &[5.0])).unwrap();
        values.set(&vars.s[0], &m(1, 1, &[3.0])).unwrap();
        let y = build_yi(&model, &vars, 0).evaluate(&values).to_mat();
        assert!(max_abs(&y) == 0.0);
    }

    #[test]
    fn yi_blocks_follow_block_formula() {
        let dar = example_2().without_performance_channel();
        let model = LmiModel::stabilization(&dar).unwrap();
        let (problem, vars) = setup(&model);
        let p = m(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let h = m(2, 2, &[0.3, 0.1, 0.1, 0.2]);
        let q = m(1, 1, &[-0.7]);
        let s = m(1, 1, &[0.4]);
        let r = m(1, 1, &[1.5]);
        let mut values = VarValues::zeros(&problem);
        values.set(&vars.p, &p).unwrap();
        values.set(&vars.h[1], &h).unwrap();
        values.set(&vars.q[1], &q).unwrap();
        values.set(&vars.s[1], &s).unwrap();
        values.set(&vars.r, &r).unwrap();
        let y = build_yi(&model, &vars, 1).evaluate(&values).to_mat();
        let (c1, c2) = (&dar.c1, &dar.c2);
        let pa1 = &p * &dar.a1;
        let y11 = &pa1 + pa1.transpose() - c1.transpose() * &q * c1 + &h;
        let y12 = &p * &dar.a2 - c1.transpose() * &q * c2;
        let y22 = -(c2.transpose() * &q * c2);
        let y13 = &p * &dar.a3 - c1.transpose() * &s;
        let y23 = -(c2.transpose() * &s);
        assert!(max_abs(&(y.view((0, 0), (2, 2)) - y11)) < 1e-13);
        assert!(max_abs(&(y.view((0, 2), (2, 4)) - y12)) < 1e-13);
        assert!(max_abs(&(y.view((2, 2), (4, 4)) - y22)) < 1e-13);
        assert!(max_abs(&(y.view((0, 6), (2, 1)) - y13)) < 1e-13);
        assert!(max_abs(&(y.view((2, 6), (4, 1)) - y23)) < 1e-13);
        assert!((y[(6, 6)] + 1.5).abs() < 1e-14);
    }

    #[test]
    fn cdi_example_2_vertices() {
        let model = LmiModel::stabilization(&example_2().without_performance_channel()).unwrap();
        let c0 = model.cdi(0);
        assert_eq!(c0.shape(), (4, 7));
        let mut expected0 = Mat::zeros(4, 7);
        expected0
            .view_mut((0, 2), (4, 4))
            .copy_from(&(-Mat::identity(4, 4)));
        assert_eq!(c0, expected0);
        let c1 = model.cdi(1);
        let mut expected1 = expected0.clone();
        expected1[(0, 0)] = 1.0;
        expected1[(1, 1)] = 1.0;
        expected1[(2, 6)] = 1.0;
        assert_eq!(c1, expected1);
    }

    #[test]
    fn gain_lmi_scalar_expansion() {
        let model = LmiModel::stabilization(&example_1().without_performance_channel()).unwrap();
        let (problem, vars) = setup(&model);
        let beta = -1.3;
        let (q, s, r) = (-0.4, 0.9, 2.0);
        let mut values = VarValues::zeros(&problem);
        values.set(&vars.q[0], &m(1, 1, &[q])).unwrap();
        values.set(&vars.s[0], &m(1, 1, &[s])).unwrap();
        values.set(&vars.r, &m(1, 1, &[r])).unwrap();
        let x = build_gain_lmi(&model, &vars, 0, beta, 0.0)
            .evaluate(&values)
            .to_mat();
        let expected = m(2, 2, &[q + 2.0 * beta * s, beta * r, beta * r, -r]);
        assert!(max_abs(&(x - expected)) < 1e-14);

        let x0 = build_gain_lmi(&model, &vars, 0, 0.0, 0.0)
            .evaluate(&values)
            .to_mat();
        assert!(max_abs(&(x0 - m(2, 2, &[q, 0.0, 0.0, -r]))) < 1e-14);
    }

    #[test]
    fn l2_storage_embeds_identity() {
        let model = LmiModel::l2(&example_1()).unwrap();
        assert_eq!(model.n_s, 4);
        assert_eq!(model.dim(), 11);
        let full = model.storage(&m(2, 2, &[3.0, 1.0, 1.0, 2.0]));
        assert_eq!(full[(2, 2)], 1.0);
        assert_eq!(full[(3, 3)], 1.0);
        assert_eq!(full[(0, 1)], 1.0);
        assert_eq!(full[(0, 2)], 0.0);
    }

    #[test]
    fn stabilization_rejects_performance_channel() {
        assert!(matches!(
            LmiModel::stabilization(&example_1()),
            Err(SynthesisError::PerformanceChannelPresent)
        ));
    }

    #[test]
    fn fixed_gamma_is_affine() {
        let model = LmiModel::l2(&example_1()).unwrap();
        let assembled = |g: f64| {
            let mut problem = SdpProblem::new();
            let vars = declare_variables(&mut problem, &model, Some(g)).unwrap();
            let values = VarValues::zeros(&problem);
            build_vertex_lmi(&model, &vars, 0, 1e-6)
                .evaluate(&values)
                .to_mat()
        };
        let (y1, y2, y3) = (assembled(1.0), assembled(2.0), assembled(4.0));
        // gamma = 1, 2, 4: the second step is twice the first
        assert!(max_abs(&(&y3 - &y2 - (&y2 - &y1) * 2.0)) < 1e-12);
        let slope = &y2 - &y1;
        assert!(max_abs(&slope) > 0.5);
    }
}
