mod common;

use common::fixture;
use gssof::benchmarks::{example_1, example_2};
use gssof::cli::{ProblemFile, RowMatrix};

fn load(name: &str) -> ProblemFile {
    ProblemFile::parse(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap()
}

fn zeros(rows: usize, cols: usize) -> RowMatrix {
    vec![vec![0.0; cols]; rows]
}

/// Expands `[]` to the declared shape so fixtures can be compared entry by entry.
fn full(m: &RowMatrix, rows: usize, cols: usize) -> RowMatrix {
    if m.is_empty() {
        zeros(rows, cols)
    } else {
        m.clone()
    }
}

fn coeff(spec: &gssof::cli::AffineSpec, rows: usize, cols: usize) -> RowMatrix {
    match spec.coeffs.as_slice() {
        [] => zeros(rows, cols),
        [c] => full(c, rows, cols),
        more => panic!("expected one parameter, found {}", more.len()),
    }
}

#[test]
fn example_1_fixture_entries() {
    let f = load("ex1.json");
    let d = f.dims;
    assert_eq!(
        (d.n, d.n_pi, d.m, d.p, d.q, d.l, d.r),
        (2, 6, 1, 1, 1, 1, 1)
    );
    assert_eq!(f.parameter_box.lower, vec![-1.5]);
    assert_eq!(f.parameter_box.upper, vec![1.5]);
    let mx = &f.matrices;
    assert_eq!(full(&mx.a1, 2, 2), vec![vec![0.0, 0.0], vec![1.0, -1.0]]);
    assert_eq!(
        full(&mx.a2, 2, 6),
        vec![vec![0.0, 1.0, 1.0, 4.0, 3.0, 0.0], vec![0.0; 6]]
    );
    assert_eq!(full(&mx.a3, 2, 1), vec![vec![2.0], vec![1.0]]);
    assert_eq!(full(&mx.a4, 2, 1), vec![vec![1.0], vec![0.0]]);
    assert_eq!(full(&mx.b1, 1, 2), vec![vec![1.0, 0.0]]);
    assert_eq!(full(&mx.b2, 1, 6), zeros(1, 6));
    assert_eq!(full(&mx.b3, 1, 1), vec![vec![1.0]]);
    assert_eq!(full(&mx.b4, 1, 1), vec![vec![0.0]]);
    assert_eq!(full(&mx.c1, 1, 2), vec![vec![1.0, 0.0]]);
    assert_eq!(full(&mx.c2, 1, 6), zeros(1, 6));
    assert_eq!(full(&mx.c3, 1, 1), vec![vec![1.0]]);

    let u = &f.upsilon;
    let mut u1 = zeros(6, 2);
    u1[0][0] = 1.0;
    u1[3][1] = 1.0;
    assert_eq!(full(&u.u1.constant, 6, 2), u1);
    assert_eq!(coeff(&u.u1, 6, 2), zeros(6, 2));
    // U2 = diag(Ud, Ud), Ud = [[-(rho+2), 0, 0], [-rho, 1, 0], [0, -rho, 1]]
    let mut u2c = zeros(6, 6);
    let mut u2r = zeros(6, 6);
    for b in [0, 3] {
        u2c[b][b] = -2.0;
        u2c[b + 1][b + 1] = 1.0;
        u2c[b + 2][b + 2] = 1.0;
        u2r[b][b] = -1.0;
        u2r[b + 1][b] = -1.0;
        u2r[b + 2][b + 1] = -1.0;
    }
    assert_eq!(full(&u.u2.constant, 6, 6), u2c);
    assert_eq!(coeff(&u.u2, 6, 6), u2r);
    for spec in [&u.u3, &u.u4] {
        assert_eq!(full(&spec.constant, 6, 1), zeros(6, 1));
        assert_eq!(coeff(spec, 6, 1), zeros(6, 1));
    }
    assert_eq!(f.synthesis.as_ref().unwrap().beta, Some(-1.3));
    assert_eq!(f.simulation.as_ref().unwrap().x0, Some(vec![1.0, -1.0]));
}

#[test]
fn example_2_fixture_entries() {
    let f = load("ex2.json");
    let d = f.dims;
    assert_eq!(
        (d.n, d.n_pi, d.m, d.p, d.q, d.l, d.r),
        (2, 4, 1, 1, 1, 1, 1)
    );
    assert_eq!(f.parameter_box.lower, vec![0.0]);
    assert_eq!(f.parameter_box.upper, vec![1.0]);
    let mx = &f.matrices;
    assert_eq!(full(&mx.a1, 2, 2), vec![vec![1.0, 2.0], vec![0.0, -4.0]]);
    assert_eq!(
        full(&mx.a2, 2, 4),
        vec![vec![1.0, -3.0, 0.0, -1.0], vec![0.0, -1.0, 1.0, 0.0]]
    );
    assert_eq!(full(&mx.a3, 2, 1), vec![vec![1.0], vec![0.0]]);
    assert_eq!(full(&mx.a4, 2, 1), vec![vec![0.0], vec![1.0]]);
    assert_eq!(full(&mx.b1, 1, 2), vec![vec![1.0, 2.0]]);
    assert_eq!(full(&mx.b2, 1, 4), vec![vec![0.0, -1.0, 1.0, 0.0]]);
    assert_eq!(full(&mx.b3, 1, 1), vec![vec![1.0]]);
    assert_eq!(full(&mx.b4, 1, 1), vec![vec![0.0]]);
    assert_eq!(full(&mx.c1, 1, 2), vec![vec![1.0, 0.0]]);
    assert_eq!(full(&mx.c2, 1, 4), vec![vec![1.0, 1.0, 0.0, 0.0]]);
    assert_eq!(full(&mx.c3, 1, 1), vec![vec![0.0]]);

    let u = &f.upsilon;
    let mut u1 = zeros(4, 2);
    u1[0][0] = 1.0;
    u1[1][1] = 1.0;
    assert_eq!(full(&u.u1.constant, 4, 2), zeros(4, 2));
    assert_eq!(coeff(&u.u1, 4, 2), u1);
    let mut u2 = zeros(4, 4);
    (0..4).for_each(|k| u2[k][k] = -1.0);
    assert_eq!(full(&u.u2.constant, 4, 4), u2);
    assert_eq!(coeff(&u.u2, 4, 4), zeros(4, 4));
    assert_eq!(full(&u.u3.constant, 4, 1), zeros(4, 1));
    assert_eq!(
        coeff(&u.u3, 4, 1),
        vec![vec![0.0], vec![0.0], vec![1.0], vec![0.0]]
    );
    assert_eq!(full(&u.u4.constant, 4, 1), zeros(4, 1));
    assert_eq!(
        coeff(&u.u4, 4, 1),
        vec![vec![0.0], vec![0.0], vec![0.0], vec![1.0]]
    );
    assert_eq!(f.synthesis.as_ref().unwrap().beta, Some(-29.3));
}

#[test]
fn fixtures_build_the_benchmark_systems() {
    assert_eq!(load("ex1.json").to_dar().unwrap(), example_1());
    assert_eq!(load("ex2.json").to_dar().unwrap(), example_2());
}

#[test]
fn fixtures_round_trip() {
    for name in ["ex1.json", "ex2.json"] {
        let f = load(name);
        let again = ProblemFile::parse(&f.to_json()).unwrap();
        assert_eq!(again, f);
    }
}
