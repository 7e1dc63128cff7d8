//! Linear-quadratic dynamic games with polyhedral stage constraints and
//! their reformulation as an affine variational inequality.

mod assumption;
mod compile;
mod model;
mod riccati;

pub use assumption::{check_spectral_condition, hamiltonian, SpectralCheck};
pub use compile::{compile_vi, compile_vi_with, CompileOptions, CompiledGameVi, TerminalSet};
pub use model::{GameDiagnostics, LqGame};
pub use riccati::{
    augmented_systems, solve_dare, solve_open_loop_riccati, AugmentedSystem, OpenLoopRiccati,
    RiccatiSettings,
};
