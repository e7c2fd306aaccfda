//! Simulation and verification toolkit for critical multi-type branching
//! processes in an i.i.d. random environment.

pub mod branching;
pub mod environment;
pub mod error;
pub mod harness;
pub mod matrix;
pub mod offspring;
pub mod presets;
pub mod rng;
pub mod stats;
pub mod walk;

pub use branching::{PopulationVector, Trajectory};
pub use environment::{EnvironmentEnsemble, HypothesisReport, TiltKnob};
pub use error::{Error, Result};
pub use offspring::{MomentSummary, OffspringLaw, OffspringRow};
pub use matrix::{NormalizedProduct, PosMatrix, ProductChain, SimplexPoint};
pub use rng::{Seeder, Stream};
pub use stats::Estimate;
pub use walk::{WalkPath, ZERO_TOL};
