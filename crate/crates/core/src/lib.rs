//! Numerical core for publication-bias-aware Bayesian meta-analysis.
//!
//! The crate fits ensembles of meta-analytic models (random effects,
//! step-function selection models, PET/PEESE regressions) to effect-size
//! data, estimates marginal likelihoods, and derives posterior predictive
//! distributions of z-statistics together with their extrapolation to a
//! hypothetical bias-free literature (EDR, FDR, expected missing studies).
//!
//! All floating-point special functions route through [`libm`] so results
//! are bit-identical across platforms and build profiles. The crate is
//! `no_std` (with `alloc`); IO, file formats, and the command line live in
//! the companion `zcurve-cli` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod densities;
pub mod evidence;
pub mod histogram;
pub mod math;
pub mod mcmc;
pub mod model;
pub mod predictive;
pub mod quad;
pub mod simulate;
pub mod target;
pub mod transforms;

pub use model::{
    BiasComponent, BiasMetrics, Dataset, Direction, EffectComponent, FitResult,
    HeterogeneityComponent, Interval, ModelSpec, PosteriorDraws, PredictiveCurve, Side, Study,
    WeightFunction,
};
