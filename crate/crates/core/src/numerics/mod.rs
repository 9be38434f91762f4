//! Numeric kernels shared by the identification, simulation and control code.
//!
//! Dense matrices and vectors are `nalgebra` dynamic types; everything here
//! is a pure function of its inputs.

mod linalg;
mod ode;
mod riccati;
mod roots;
mod special;

pub use linalg::{spd_solve, spectral_radius, SpdFactor, SpdSolution};
pub use ode::rk4_step;
pub use riccati::{solve_dare, solve_dare_with, DareOptions, DareSolution};
pub use roots::{fd_jacobian, newton_root, NewtonOptions, DEFAULT_FD_DELTA};
pub use special::{digamma, log_gamma};

pub type Matrix = nalgebra::DMatrix<f64>;
pub type Vector = nalgebra::DVector<f64>;
