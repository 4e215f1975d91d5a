//! SDPA sparse-format dump for debugging lowered problems.
//!
//! SDPA's primal reads `min c^T x  s.t.  sum_i F_i x_i - F_0 >= 0`, so the
//! constant block is written negated.

use std::io::Write;

use super::LoweredProblem;
use crate::numerics::SymMat;

fn entries(
    out: &mut impl Write,
    matno: usize,
    blkno: usize,
    m: &SymMat,
    sign: f64,
) -> std::io::Result<()> {
    for i in 0..m.dim() {
        for j in i..m.dim() {
            let v = m.get(i, j);
            if v != 0.0 {
                writeln!(out, "{matno} {blkno} {} {} {}", i + 1, j + 1, sign * v)?;
            }
        }
    }
    Ok(())
}

pub(super) fn write(problem: &LoweredProblem, out: &mut impl Write) -> std::io::Result<()> {
    for (k, block) in problem.blocks.iter().enumerate() {
        writeln!(out, "\"block {}: {}", k + 1, block.name)?;
    }
    writeln!(out, "{}", problem.unknowns)?;
    writeln!(out, "{}", problem.blocks.len())?;
    let sizes: Vec<String> = problem.blocks.iter().map(|b| b.dim().to_string()).collect();
    writeln!(out, "{}", sizes.join(" "))?;
    let c: Vec<String> = problem.objective.iter().map(|v| v.to_string()).collect();
    writeln!(out, "{}", c.join(" "))?;
    for (k, block) in problem.blocks.iter().enumerate() {
        entries(out, 0, k + 1, &block.f0, -1.0)?;
    }
    for (k, block) in problem.blocks.iter().enumerate() {
        for (j, f) in &block.coeffs {
            entries(out, j + 1, k + 1, f, 1.0)?;
        }
    }
    Ok(())
}
