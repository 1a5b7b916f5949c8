//! Birth-and-growth simulation with causal-cone diagnostics.
//!
//! Nuclei are born as a marked point process in space-time, and each grows
//! with a normal speed field. The crate computes cone measures, simulated
//! ensembles, lattice estimators of volume and surface densities, and a
//! validation harness that compares the two.

pub mod causal_cone;
pub mod error;
pub mod estimators;
pub mod functions;
pub mod geom;
pub mod grid;
pub mod growth;
pub mod harness;
pub mod nucleation;
pub mod quadrature;
pub mod rng;
pub mod simulate;

pub use causal_cone::{CausalCone, ConeKernel, QuadratureOptions};
pub use error::{Error, Result};
pub use functions::{MarkDensity, MarkSpec, TemporalFn};
pub use geom::{Point, Window};
pub use grid::{Grid, ScalarField};
pub use growth::{grain_capture_time, grain_indicator, GrainFront, GrowthField};
pub use simulate::{Ensemble, Realization};
pub use nucleation::{MarkedPoint, ModelKind, NucleationModel};
