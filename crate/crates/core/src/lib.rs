//! Pairwise-trading market models.
//!
//! The crate bundles four views of the same market: an event-driven ensemble
//! simulator (`micro`), a single-variable mean-field tick process
//! (`meanfield`), a kinetic solver for the stationary quote profiles
//! (`boltzmann`), and the closed-form references they are checked against
//! (`oracle`). `estimators` turns recorded runs into comparable statistics and
//! `presets` wires canonical experiments end to end.

pub mod boltzmann;
pub mod collect;
pub mod error;
pub mod estimators;
pub mod meanfield;
pub mod micro;
pub mod model;
pub mod oracle;
pub mod output;
pub mod report;
pub mod rng;
pub mod special;

pub use error::{Error, Result};
pub use model::{
    sample_spreads, Derived, Dimensionless, EnsembleState, IntervalMode, SimConfig, SpreadLaw,
    TickSeries,
};
