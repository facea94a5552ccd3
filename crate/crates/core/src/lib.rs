//! Doubly penalized sparse additive regression.
//!
//! Each component `g_j` of an additive fit carries two penalties: a smoothness
//! seminorm (total variation of a derivative, or a Sobolev `L2` norm) and the
//! empirical `L2` norm, which zeroes whole components. Fitting is block
//! coordinate descent over exact univariate proximal solvers.

pub mod banded;
pub mod diffop;
mod error;
pub mod model;
pub mod report;
pub mod simlab;
pub mod solver;
pub mod spline;
pub mod tuning;
pub mod uniprox;

pub use error::{Error, Result};
pub use model::{
    empirical_norm, evaluate_component, evaluate_model, seminorm, sobolev_seminorm, tv_seminorm, AdditiveFit,
    ClassKind, ComponentClass, ComponentFit, Dataset, InterpolationRule,
};
pub use solver::{
    component_update, fit_additive, kkt_residuals, objective, predict, ComponentPenalty, FitOptions, PenaltyPlan,
    PlanSource, SweepOrder,
};
pub use tuning::{build_plan, RateParams, TuningSettings, TuningVariant};
pub use uniprox::{
    functional_prox, group_shrink, kkt_univariate, sobolev_prox, trendfilter_prox, tv1_prox, ProxCertificate,
    ProxProblem,
};
pub use report::{ModelDocument, MODEL_FORMAT};
pub use simlab::{generate, GroundTruth, Scenario};
