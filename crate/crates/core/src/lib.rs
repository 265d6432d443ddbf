//! Lattice laboratory for the Schrödinger equation written as a real
//! two-field system, the real "Schrödinger field" `φ` whose image under
//! `Ψ = −(Δ−V)φ + iħφ̇` solves it, and the singular four-field theory in
//! which both appear as parameterizations of one constrained phase space.
//!
//! Everything lives on a 1D lattice with the symmetric operator
//! `K = Δ − V` from [`lattice`]. Brackets follow the discrete-delta
//! convention `δ(x−y) ↦ I/dx`.

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b): (f64, f64) = ($a, $b);
        let tol: f64 = $tol;
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }};
}

pub mod brackets;
pub mod cli;
pub mod constrained;
pub mod correspondence;
pub mod error;
pub mod field;
pub mod lattice;
pub mod schrodinger;
pub mod trajectory;

pub use error::{Error, Result};
pub use lattice::{Boundary, Grid, GridFn, Operator, Potential, Spectrum};
