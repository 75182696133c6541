//! Length-penalized principal curves for finite weighted point clouds.
//!
//! Given a discrete measure `mu = sum m_i delta_{x_i}`, an exponent `p >= 1` and a
//! length penalty `lambda > 0`, the crate fits a polyline `c` minimizing
//!
//! ```text
//! E(c) = sum_i m_i d(x_i, c)^p + lambda * length(c)
//! ```
//!
//! and audits fitted curves against the necessary conditions every minimizer
//! satisfies: containment in the convex hull of the support, bounds on total
//! turning, direction-resolved turning bounds, first-variation stationarity and,
//! in the plane, injectivity.
//!
//! The crate is `no_std` and only needs `alloc`. Floating point functions come
//! from `libm`, so results are bit-identical across targets and with or without
//! `std`.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

mod error;
mod geom;

pub mod curve;
pub mod diagnostics;
pub mod energy;
pub mod hull;
pub mod measure;
pub mod optimizer;
pub mod oracle;
pub mod projection;
pub mod search;

pub use curve::{CurveSpan, Polyline, SelfIntersection, VertexWindow};
pub use diagnostics::{full_report, Check, CheckStatus, TheoryReport};
pub use energy::{energy, gradient, stationarity_report, EnergyBreakdown, StationarityReport};
pub use error::Error;
pub use hull::ConvexPolygon;
pub use measure::{synth_measure, DiscreteMeasure, SynthFamily, SynthParams};
pub use optimizer::{fit, FitConfig, FitResult, FitStatus};
pub use oracle::{brute_force_min, certify_fit, Certification, OracleConfig, OracleResult};
pub use projection::{build_plan, PlanEntry, Target, TieRule, TransportPlan, VertexClassification};
pub use search::{conjecture_search, Candidate, SearchConfig, SearchReport};

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;
