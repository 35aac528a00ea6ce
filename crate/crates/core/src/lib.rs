//! Pseudospectral simulation of parabolic complex Monge-Ampere flows on flat
//! complex tori of dimension one and two, together with quantified checks of
//! their a priori estimates.
//!
//! The state is a potential `phi` on a periodic grid. The flow
//!
//! ```text
//! d phi / dt = log det((1 + t c) I + H(t psi_chi + phi)) - h        (CMAF)
//! d phi / dt = log det(I + H(phi)) - h + phi                        (NCMAF)
//! ```
//!
//! is integrated by the method of lines (see [`flow`]), starting from smooth
//! approximations of possibly singular data (see [`initial`]). Trajectories are
//! summarized by the functionals in [`functionals`] and checked by the
//! verifiers in [`verify`].

// `!(x > 0.0)` is used on purpose so that NaN fails the test.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod elliptic;
pub mod error;
pub mod flow;
pub mod functionals;
pub mod geometry;
pub mod grid;
pub mod herm;
pub mod initial;
pub mod io;
pub mod logfd;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
pub use flow::{
    limit_potential, run, run_from, run_levels, t_max, FlowConfig, FlowState, LimitReport,
    SignClass, StepPolicy, Stepper, TwistSpec, Trajectory, Variant,
};
pub use functionals::{FunctionalSeries, SeriesRow};
pub use geometry::{HermitianField, MetricField};
pub use grid::{PotentialField, TorusGrid, TorusPoint};
pub use herm::Herm;
pub use initial::{ApproximationSequence, DataClass, PotentialKind, PotentialSpec};
pub use verify::{Status, VerdictReport};
