//! Hierarchical models for longitudinal manifold-valued data.
//!
//! Subject-level trends are intrinsic Bézier splines fitted by least-squares
//! regression; group-level structure lives in the space of such splines,
//! where distances and means are computed with a variational time
//! discretization that reduces every step to another spline regression.
//!
//! The crate is organized bottom-up:
//!
//! - [`manifold`]: closed-form Riemannian operations on Euclidean space,
//!   spheres, SPD matrices (affine-invariant metric) and products thereof.
//! - [`bezier`]: Bézier curves via the generalized de Casteljau algorithm and
//!   C¹ splines made of them.
//! - [`regression`]: least-squares spline regression by Riemannian gradient
//!   descent with Armijo backtracking.
//! - [`hierarchy`]: discrete geodesics, distances and means in spline space.
//! - [`stats`]: Gram-matrix PGA descriptors and synthetic cohorts.
//!
//! With the default `parallel` feature, per-subject work runs on rayon's
//! thread pool; [`Execution::Sequential`] (or building without the feature)
//! gives the same results on one thread.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bezier;
pub mod error;
pub mod exec;
pub mod hierarchy;
pub mod manifold;
pub mod regression;
pub mod stats;

pub use bezier::{BezierSpline, SplineLayout, Violation};
pub use error::{Error, Result};
pub use exec::Execution;

pub use manifold::{Manifold, Point, Tangent};
pub use hierarchy::{DiscretePath, MeanResult, SplineSpace};
pub use regression::{FitOptions, RegressionProblem, RegressionResult, Sample};
