//! Extrapolation of treatment effects away from the frontier of a sharp
//! regression discontinuity design with several running variables.
//!
//! Under comonotonicity of the two conditional mean potential outcomes
//! along the frontier, the map `q` from one group's mean to the other's is
//! identified on the frontier and can be applied to units anywhere in the
//! covariate space. [`RddModel`] estimates `q` in two local linear stages,
//! imputes conditional average treatment effects, and evaluates
//! counterfactual treatment rules; [`inference`] adds bootstrap bands and a
//! comonotonicity diagnostic, and [`dgp`] generates designs with known truth.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod dgp;
pub mod error;
pub mod extrapolate;
pub mod frontier;
pub mod inference;
pub mod isotonic;
pub mod kernels;
pub mod loclin;
pub mod model;
pub mod policy;
pub mod rng;
pub mod spatial;
pub mod wls;

pub use dataset::{ColumnSchema, Dataset, Standardization};
pub use error::{Error, Result};
pub use extrapolate::{Bands, CateEstimate, CurvePair, QCurve};
pub use frontier::{cross_nn, FrontierInfo};
pub use inference::{BootstrapConfig, ComonoDiagnostic};
pub use kernels::Kernel;
pub use loclin::{cv_bandwidth, fit_at, BandwidthConfig, BandwidthMode, LocalFit};
pub use model::{EndpointSource, HChoice, ModelConfig, RddModel};
pub use policy::{PolicyEffect, PolicyRule, Side, SweepMode};
