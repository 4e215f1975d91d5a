//! Rational plant expressions of the two benchmarks, written directly from
//! their state-space form rather than from the DAR.

#![allow(dead_code)]

use gssof::numerics::Mat;

pub struct Plant {
    pub a: Mat,
    pub b: Mat,
    pub bw: Mat,
    pub az: Mat,
    pub bz: Mat,
    pub dz: Mat,
    pub c: Mat,
    pub d: Mat,
}

fn m(rows: usize, cols: usize, v: &[f64]) -> Mat {
    Mat::from_row_slice(rows, cols, v)
}

pub fn example_1_plant(rho: f64) -> Plant {
    let den = rho + 2.0;
    Plant {
        a: m(
            2,
            2,
            &[(rho * rho + rho) / den, (3.0 * rho + 4.0) / den, 1.0, -1.0],
        ),
        b: m(2, 1, &[2.0, 1.0]),
        bw: m(2, 1, &[1.0, 0.0]),
        az: m(1, 2, &[1.0, 0.0]),
        bz: m(1, 1, &[1.0]),
        dz: m(1, 1, &[0.0]),
        c: m(1, 2, &[1.0, 0.0]),
        d: m(1, 1, &[1.0]),
    }
}

pub fn example_2_plant(rho: f64) -> Plant {
    Plant {
        a: m(2, 2, &[1.0 + rho, 2.0 - 3.0 * rho, 0.0, -4.0 - rho]),
        b: m(2, 1, &[1.0, rho]),
        bw: m(2, 1, &[2.0 - rho, 1.0]),
        az: m(1, 2, &[1.0, 2.0 - rho]),
        bz: m(1, 1, &[1.0 + rho]),
        dz: m(1, 1, &[0.0]),
        c: m(1, 2, &[1.0 + rho, rho]),
        d: m(1, 1, &[0.0]),
    }
}

pub fn max_diff(a: &Mat, b: &Mat) -> f64 {
    assert_eq!(a.shape(), b.shape());
    (a - b).amax()
}

pub fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}
