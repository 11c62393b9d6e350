//! Spectral Galerkin simulation of monotone and locally monotone SPDEs
//! (stochastic heat, Burgers, 2-D Navier–Stokes) together with numerical
//! checks of their transportation cost inequalities.
//!
//! The crate is organised bottom-up:
//!
//! * [`spaces`] – finite spectral representations of the Gelfand triple
//!   `V ⊂ H ⊂ V*` on the unit interval and on the periodic unit torus.
//! * [`noise`] – truncated cylindrical Wiener increments and diagonal
//!   Hilbert–Schmidt noise operators with counter-based seeding.
//! * [`problem`] – model definitions, their constants and a sampled
//!   hypothesis auditor.
//! * [`solver`] – semi-implicit Euler–Maruyama time stepping.
//! * [`girsanov`] – drift-shifted coupled trajectories and the pathwise
//!   Radon–Nikodym density.
//! * [`constants`] – the T₂, T₁ and Gaussian-concentration constants.
//! * [`concentration`] – Monte Carlo estimators and Wasserstein distances.
//! * [`experiment`] – JSON experiment configuration and report generation.

pub mod concentration;
pub mod constants;
pub mod error;
pub mod experiment;
pub mod girsanov;
pub mod noise;
pub mod problem;
pub mod solver;
pub mod spaces;
pub mod stats;

pub use error::{Error, Result};
pub use noise::{NoiseOperator, SeedSpec};
pub use problem::{AssumptionConstants, ModelKind, ModelSpec};
pub use solver::{SolverConfig, Trajectory};
pub use spaces::{Field, Field1D, Field2D};
