//! One-model fits and ensemble assembly: the glue between sampling,
//! evidence, and the predictive summaries.
//!
//! `fit_model` is a pure function of `(spec, dataset, options)`; callers
//! may fan models out across threads and then fold the results with
//! `assemble` in spec order, which keeps the whole fit deterministic for a
//! fixed master seed regardless of scheduling.

use alloc::string::String;
use alloc::vec::Vec;

use crate::evidence::{
    conditional_probs, estimate_log_ml, inclusion_bf, model_averaged_draws,
    posterior_model_probs, Component, EvidenceError, ModelSpace,
};
use crate::math;
use crate::mcmc::{sample_posterior, SamplerConfig, SamplerError};
use crate::model::{
    Dataset, Direction, EnsembleSummary, FitResult, Interval, ModelFit, PosteriorDraws,
};
use crate::predictive::{bias_metrics, ExtrapolationScaling, PredictiveDraw, PredictiveError};

/// Substream tags for seeds derived from the master sampler seed.
pub const STREAM_ENSEMBLE_FULL: u64 = 0xE0;
pub const STREAM_ENSEMBLE_CONDITIONAL: u64 = 0xE1;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FitOptions {
    pub sampler: SamplerConfig,
    pub direction: Direction,
    /// Pooled mixture draws used for ensemble summaries and metrics.
    pub ensemble_draws: usize,
    /// Two-sided discovery threshold on the z scale.
    pub threshold: f64,
    /// Significance level backing the FDR bound.
    pub alpha: f64,
    /// Central interval coverage for summaries.
    pub band_level: f64,
    pub scaling: ExtrapolationScaling,
    /// Compute EDR/FDR/N_missing on the bias-adjusted conditional ensemble
    /// (the default) rather than the full ensemble.
    pub conditional_metrics: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            sampler: SamplerConfig::default(),
            direction: Direction::Positive,
            ensemble_draws: 5000,
            threshold: 1.96,
            alpha: 0.05,
            band_level: 0.95,
            scaling: ExtrapolationScaling::Inverse,
            conditional_metrics: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FitError {
    Sampler { model: String, source: SamplerError },
    Evidence { model: String, source: EvidenceError },
    Predictive(PredictiveError),
}

impl core::fmt::Display for FitError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            FitError::Sampler { model, source } => write!(f, "model {model}: {source}"),
            FitError::Evidence { model, source } => write!(f, "model {model}: {source}"),
            FitError::Predictive(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for FitError {}

/// Samples one model and estimates its marginal likelihood.
///
/// `model_idx` salts the sampler seed so every model draws from an
/// independent stream of the master seed.
pub fn fit_model(
    spec: &crate::model::ModelSpec,
    d: &Dataset,
    opts: &FitOptions,
    model_idx: usize,
) -> Result<ModelFit, FitError> {
    let cfg = SamplerConfig {
        seed: math::derive_seed(opts.sampler.seed, model_idx as u64),
        ..opts.sampler
    };
    let mut draws = sample_posterior(spec, d, &cfg, opts.direction).map_err(|source| {
        FitError::Sampler { model: spec.label.clone(), source }
    })?;
    let (estimate, method) =
        estimate_log_ml(spec, d, &draws, opts.direction).map_err(|source| {
            FitError::Evidence { model: spec.label.clone(), source }
        })?;
    draws
        .diagnostics
        .warnings
        .extend(estimate.warnings.iter().cloned());
    Ok(ModelFit {
        spec: spec.clone(),
        draws,
        log_ml: estimate.log_ml,
        log_ml_se: estimate.se,
        evidence_method: String::from(method),
    })
}

/// Folds per-model fits into ensemble probabilities, inclusion Bayes
/// factors, model-averaged summaries, and publication-bias metrics.
pub fn assemble(
    space: &ModelSpace,
    fits: Vec<ModelFit>,
    d: &Dataset,
    opts: &FitOptions,
) -> Result<FitResult, FitError> {
    assert_eq!(space.len(), fits.len());
    let log_mls: Vec<f64> = fits.iter().map(|f| f.log_ml).collect();
    let wrap = |source: EvidenceError| FitError::Evidence {
        model: String::from("ensemble"),
        source,
    };
    let probs = posterior_model_probs(space, &log_mls).map_err(wrap)?;
    let bf_effect = inclusion_bf(space, &probs, Component::Effect).map_err(wrap)?;
    let bf_heterogeneity =
        inclusion_bf(space, &probs, Component::Heterogeneity).map_err(wrap)?;
    let bf_bias = inclusion_bf(space, &probs, Component::Bias).map_err(wrap)?;

    let per_model: Vec<PosteriorDraws> = fits.iter().map(|f| f.draws.clone()).collect();
    let full_seed = math::derive_seed(opts.sampler.seed, STREAM_ENSEMBLE_FULL);
    let full = model_averaged_draws(space, &per_model, &probs, opts.ensemble_draws, full_seed);
    let mus: Vec<f64> = full.iter().map(|e| e.mu).collect();
    let taus: Vec<f64> = full.iter().map(|e| e.tau).collect();

    let metric_probs = if opts.conditional_metrics {
        conditional_probs(space, &probs, |s| s.bias.is_present())
    } else {
        None
    };
    let metric_draws = match metric_probs {
        Some(cond) => {
            let seed = math::derive_seed(opts.sampler.seed, STREAM_ENSEMBLE_CONDITIONAL);
            model_averaged_draws(space, &per_model, &cond, opts.ensemble_draws, seed)
        }
        None => full.clone(),
    };
    let predictive: Vec<PredictiveDraw> = metric_draws
        .iter()
        .map(|e| PredictiveDraw::from_ensemble(e, space))
        .collect();
    let metrics = bias_metrics(
        &predictive,
        d,
        opts.threshold,
        opts.alpha,
        opts.band_level,
        opts.direction,
        opts.scaling,
        false,
    )
    .map_err(FitError::Predictive)?;

    Ok(FitResult {
        models: fits,
        ensemble: EnsembleSummary {
            posterior_probs: probs,
            bf_effect,
            bf_heterogeneity,
            bf_bias,
            mu: Interval::from_draws(&mus, opts.band_level),
            tau: Interval::from_draws(&taus, opts.band_level),
        },
        metrics,
    })
}

/// Convenience single-threaded driver: fit every model in the space and
/// assemble the ensemble.
pub fn fit_space(
    space: &ModelSpace,
    d: &Dataset,
    opts: &FitOptions,
) -> Result<FitResult, FitError> {
    let mut fits = Vec::with_capacity(space.len());
    for (idx, spec) in space.specs.iter().enumerate() {
        fits.push(fit_model(spec, d, opts, idx)?);
    }
    assemble(space, fits, d, opts)
}
