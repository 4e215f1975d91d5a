//! Gain-scheduled static output feedback for rational LPV plants written in
//! differential-algebraic form.

pub mod benchmarks;
pub mod cli;
pub mod dar;
pub mod numerics;
pub mod param_domain;
pub mod sdp;
pub mod simulate;
pub mod synthesis;

// links the system BLAS/LAPACK used by the SDP solver
extern crate openblas_src;
