//! The two benchmark plants used throughout the tests and shipped as JSON
//! fixtures.

use crate::dar::{AffineParamMatrix, DarDims, DarSystem};
use crate::numerics::{block_diag, Mat};
use crate::param_domain::ParameterBox;

fn m(rows: usize, cols: usize, v: &[f64]) -> Mat {
    Mat::from_row_slice(rows, cols, v)
}

/// Rational plant on `rho in [-1.5, 1.5]` with
/// `pi = [x1, rho x1, rho^2 x1, x2, rho x2, rho^2 x2] / (rho + 2)`.
pub fn example_1() -> DarSystem {
    let bounds = ParameterBox::interval(-1.5, 1.5).expect("valid interval");
    let dims = DarDims {
        n: 2,
        n_pi: 6,
        m: 1,
        p: 1,
        q: 1,
        l: 1,
        r: 1,
    };
    // U_d(rho) = [[-(rho+2), 0, 0], [-rho, 1, 0], [0, -rho, 1]]
    let ud_const = m(3, 3, &[-2.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    let ud_rho = m(3, 3, &[-1.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0]);
    let mut ups1 = Mat::zeros(6, 2);
    ups1[(0, 0)] = 1.0;
    ups1[(3, 1)] = 1.0;
    DarSystem {
        dims,
        a1: m(2, 2, &[0.0, 0.0, 1.0, -1.0]),
        a2: m(
            2,
            6,
            &[0.0, 1.0, 1.0, 4.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        ),
        a3: m(2, 1, &[2.0, 1.0]),
        a4: m(2, 1, &[1.0, 0.0]),
        b1: m(1, 2, &[1.0, 0.0]),
        b2: Mat::zeros(1, 6),
        b3: m(1, 1, &[1.0]),
        b4: m(1, 1, &[0.0]),
        c1: m(1, 2, &[1.0, 0.0]),
        c2: Mat::zeros(1, 6),
        c3: m(1, 1, &[1.0]),
        ups1: AffineParamMatrix::constant(ups1, 1),
        ups2: AffineParamMatrix::new(
            block_diag(&[&ud_const, &ud_const]),
            vec![block_diag(&[&ud_rho, &ud_rho])],
        ),
        ups3: AffineParamMatrix::zeros(6, 1, 1),
        ups4: AffineParamMatrix::zeros(6, 1, 1),
        bounds,
    }
}

/// Affine plant on `rho in [0, 1]` with `pi = rho [x1, x2, u, w]`.
pub fn example_2() -> DarSystem {
    let bounds = ParameterBox::interval(0.0, 1.0).expect("valid interval");
    let dims = DarDims {
        n: 2,
        n_pi: 4,
        m: 1,
        p: 1,
        q: 1,
        l: 1,
        r: 1,
    };
    let mut ups1_rho = Mat::zeros(4, 2);
    ups1_rho[(0, 0)] = 1.0;
    ups1_rho[(1, 1)] = 1.0;
    let mut ups3_rho = Mat::zeros(4, 1);
    ups3_rho[(2, 0)] = 1.0;
    let mut ups4_rho = Mat::zeros(4, 1);
    ups4_rho[(3, 0)] = 1.0;
    DarSystem {
        dims,
        a1: m(2, 2, &[1.0, 2.0, 0.0, -4.0]),
        a2: m(2, 4, &[1.0, -3.0, 0.0, -1.0, 0.0, -1.0, 1.0, 0.0]),
        a3: m(2, 1, &[1.0, 0.0]),
        a4: m(2, 1, &[0.0, 1.0]),
        b1: m(1, 2, &[1.0, 2.0]),
        b2: m(1, 4, &[0.0, -1.0, 1.0, 0.0]),
        b3: m(1, 1, &[1.0]),
        b4: m(1, 1, &[0.0]),
        c1: m(1, 2, &[1.0, 0.0]),
        c2: m(1, 4, &[1.0, 1.0, 0.0, 0.0]),
        c3: m(1, 1, &[0.0]),
        ups1: AffineParamMatrix::new(Mat::zeros(4, 2), vec![ups1_rho]),
        ups2: AffineParamMatrix::constant(-Mat::identity(4, 4), 1),
        ups3: AffineParamMatrix::new(Mat::zeros(4, 1), vec![ups3_rho]),
        ups4: AffineParamMatrix::new(Mat::zeros(4, 1), vec![ups4_rho]),
        bounds,
    }
}
