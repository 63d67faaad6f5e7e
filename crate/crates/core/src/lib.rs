//! Diffuse-interface simulation of isothermal two-phase multi-component flow with the
//! Peng-Robinson equation of state on a staggered 2-D grid.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod diagnostics;
pub mod eos;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod output;
pub mod scalar;
pub mod scenario;
pub mod stepper;

pub use diagnostics::{compute_energy, EnergyReport};
pub use eos::{ComponentDatabase, ComponentSpec, Composition, MixtureSpec, PengRobinson};
pub use error::{Error, Result};
pub use grid::{CellField, FaceField, GridSpec};
pub use output::{run, RunSummary};
pub use scalar::{Scalar, GAS_CONSTANT};
pub use scenario::ScenarioConfig;
pub use stepper::{step, Model, SimState, SolverConfig, StepReport};

pub type Component64 = ComponentSpec<f64>;
pub type Mixture64 = MixtureSpec<f64>;
pub type Eos64 = PengRobinson<f64>;
pub type Grid64 = GridSpec<f64>;
pub type Model64 = Model<f64>;
pub type State64 = SimState<f64>;
pub type Solver64 = SolverConfig<f64>;

pub type Component32 = ComponentSpec<f32>;
pub type Mixture32 = MixtureSpec<f32>;
pub type Eos32 = PengRobinson<f32>;
pub type Grid32 = GridSpec<f32>;
pub type Model32 = Model<f32>;
pub type State32 = SimState<f32>;
pub type Solver32 = SolverConfig<f32>;
