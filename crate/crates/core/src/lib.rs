//! Sparse W-random graph dynamics and their continuum and averaged limits.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod graphon;
pub mod io;
pub mod operators;
pub mod quad;
pub mod sampler;
pub mod study;

pub use analysis::{Aggregate, ErrorRecord, ErrorReport};
pub use dynamics::{InitialCondition, Model, ModelConfig, Reaction, ReferenceSpec, Trajectory};
pub use error::{Error, Result};
pub use graphon::{AssumptionReport, DensitySchedule, GraphonSpec, Integrability};
pub use operators::{Coupling, CouplingMatrix, KernelChoice, Provenance, Scaling};
pub use sampler::{EdgeVariant, Grid, SampledGraph};
pub use study::{Execution, StudyConfig, StudyKind, StudyOutput};
