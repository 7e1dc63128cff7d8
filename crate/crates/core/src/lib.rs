//! Affine variational inequality solvers and their application to
//! constrained linear-quadratic dynamic games.
//!
//! The crate compiles an N-agent LQ game with polyhedral stage constraints
//! into an affine VI whose solution is an open-loop Nash equilibrium, solves
//! it with a Douglas–Rachford splitting iteration (or one of several
//! projection-type baselines), and runs the result in a receding-horizon
//! loop. All numerical code is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below fix the precision used by the file formats and CLI.

pub mod avi;
pub mod blockmat;
pub mod error;
pub mod game;
pub mod linalg;
pub mod qp;
pub mod rhc;
pub mod scalar;
pub mod scenario;
pub mod solvers;

pub use avi::{AviProblem, Polyhedron};
pub use blockmat::Mat;
pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Mat64 = Mat<f64>;
pub type Polyhedron64 = Polyhedron<f64>;
pub type AviProblem64 = AviProblem<f64>;
