//! Optimal designs for two-substance dose-response surfaces.
//!
//! The crate covers the combination response model, approximate designs and
//! their information matrices, contour (effective-dose set) extraction, the
//! contour-variance criterion with its equivalence-theorem sensitivity, a
//! particle swarm optimizer and a Monte Carlo study engine.
//!
//! Everything here is pure computation on `alloc`; file formats and the
//! command line live in the `meddesign` crate.

#![no_std]
// `!(x > 0.0)` rejects NaN along with non-positive values, and index loops
// read more naturally than iterator chains in the dense linear algebra.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
// The numeric modules import the libm-backed `Float` trait. Whenever std is
// in the build graph its inherent float methods win and the import goes
// unused, hence the `allow` on each of those imports.

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod contour;
pub mod criteria;
pub mod design;
mod error;
pub mod linalg;
pub mod lm;
pub mod model;
pub mod nelder_mead;
pub mod normal;
pub mod optimizer;
pub mod seed;
pub mod simulation;
#[cfg(test)]
mod testutil;

pub use contour::{ContourMap, ContourMeasure, Extrema, GridSpec, MedSet};
pub use criteria::{BayesianCriterion, CriterionConfig, MeasureSettings, MedCriterion, Prior, SensitivityReport};
pub use design::{ConfidenceConfig, Design, ExactDesign, InfoMatrix};
pub use error::{Error, Result};
pub use model::{DesignRegion, DoseCombination, MonoKind, MonoModel, SurfaceModel};
pub use optimizer::{Objective, OptimProblem, OptimResult, PsoConfig};
pub use simulation::{FitFailure, Scenario, SimConfig, SimResult};

