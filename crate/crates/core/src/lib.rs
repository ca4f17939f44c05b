#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod convolution;
pub mod error;
pub mod grid;
pub mod monotone;
pub mod noise;
pub mod oracle;
pub mod rng;
pub mod solver;
pub mod spectral;
pub mod stats;
pub mod verify;

pub use convolution::FieldPath;
pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use monotone::{MonotoneFn, RootOptions};
pub use noise::{Atom, JumpSpec, MarkLaw, Regularity, WienerSpec};
pub use solver::{
    picard_solve, solve_generalized, solve_mild, ApproximationSchedule, Formulation, InitialGuess, Problem, Regime,
    SolverOptions,
};
pub use spectral::{Field, SpectralBasis};
pub use verify::{MonteCarlo, Outcome, Table, Thresholds};
