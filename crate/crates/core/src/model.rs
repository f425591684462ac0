//! Shared domain types: studies, weight functions, model specifications,
//! posterior draws, and result containers.
//!
//! Everything here is immutable after construction and `Send + Sync`.

use alloc::string::String;
use alloc::vec::Vec;

use crate::math;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// One study: observed effect size, its standard error, and the derived
/// z-statistic `y / se`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Study {
    pub y: f64,
    pub se: f64,
    pub z: f64,
}

/// A single validation failure, pointing at the offending input row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StudyViolation {
    /// Zero-based index of the study in its dataset.
    pub row: usize,
    pub reason: ViolationKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    NonFiniteEffect,
    NonFiniteStandardError,
    NonPositiveStandardError,
}

impl core::fmt::Display for StudyViolation {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let what = match self.reason {
            ViolationKind::NonFiniteEffect => "effect size is not finite",
            ViolationKind::NonFiniteStandardError => "standard error is not finite",
            ViolationKind::NonPositiveStandardError => "standard error must be > 0",
        };
        write!(f, "row {}: {}", self.row, what)
    }
}

/// Errors raised by dataset construction and validation.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetError {
    Empty,
    InvalidStudies(Vec<StudyViolation>),
}

impl core::fmt::Display for DatasetError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            DatasetError::Empty => write!(f, "empty dataset"),
            DatasetError::InvalidStudies(v) => {
                write!(f, "{} invalid study row(s):", v.len())?;
                for viol in v {
                    write!(f, " [{}]", viol)?;
                }
                Ok(())
            }
        }
    }
}

impl core::error::Error for DatasetError {}

impl Study {
    /// Builds a study from `(y, se)`, recomputing the z-statistic.
    pub fn new(y: f64, se: f64) -> Result<Self, ViolationKind> {
        if !y.is_finite() {
            return Err(ViolationKind::NonFiniteEffect);
        }
        if !se.is_finite() {
            return Err(ViolationKind::NonFiniteStandardError);
        }
        if se <= 0.0 {
            return Err(ViolationKind::NonPositiveStandardError);
        }
        Ok(Study { y, se, z: y / se })
    }
}

/// z-statistic of a study (`y / se`).
pub fn zstat(study: &Study) -> f64 {
    study.y / study.se
}

/// An ordered collection of studies.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Dataset {
    pub studies: Vec<Study>,
    pub label: String,
}

impl Dataset {
    /// Builds a validated dataset from raw `(y, se)` pairs, in input order.
    pub fn from_pairs(
        pairs: impl IntoIterator<Item = (f64, f64)>,
        label: impl Into<String>,
    ) -> Result<Self, DatasetError> {
        let mut studies = Vec::new();
        let mut violations = Vec::new();
        for (row, (y, se)) in pairs.into_iter().enumerate() {
            match Study::new(y, se) {
                Ok(s) => studies.push(s),
                Err(reason) => violations.push(StudyViolation { row, reason }),
            }
        }
        if !violations.is_empty() {
            return Err(DatasetError::InvalidStudies(violations));
        }
        if studies.is_empty() {
            return Err(DatasetError::Empty);
        }
        Ok(Dataset {
            studies,
            label: label.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.studies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.studies.is_empty()
    }

    /// Standard errors in study order.
    pub fn standard_errors(&self) -> Vec<f64> {
        self.studies.iter().map(|s| s.se).collect()
    }

    /// z-statistics in study order.
    pub fn zstats(&self) -> Vec<f64> {
        self.studies.iter().map(|s| s.z).collect()
    }

    /// Fraction of studies with `|z| >= threshold` (threshold inclusive).
    pub fn observed_discovery_rate(&self, threshold: f64) -> f64 {
        let hits = self
            .studies
            .iter()
            .filter(|s| s.z.abs() >= threshold)
            .count();
        hits as f64 / self.studies.len() as f64
    }
}

/// Checks an already-built dataset, reporting every violation at once.
pub fn validate_dataset(d: &Dataset) -> Result<(), DatasetError> {
    if d.studies.is_empty() {
        return Err(DatasetError::Empty);
    }
    let mut violations = Vec::new();
    for (row, s) in d.studies.iter().enumerate() {
        if !s.y.is_finite() {
            violations.push(StudyViolation {
                row,
                reason: ViolationKind::NonFiniteEffect,
            });
        }
        if !s.se.is_finite() {
            violations.push(StudyViolation {
                row,
                reason: ViolationKind::NonFiniteStandardError,
            });
        } else if s.se <= 0.0 {
            violations.push(StudyViolation {
                row,
                reason: ViolationKind::NonPositiveStandardError,
            });
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(DatasetError::InvalidStudies(violations))
    }
}

/// Sidedness of a p-value based selection rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Side {
    OneSided,
    TwoSided,
}

/// Expected direction of the effect; one-sided selection operates on the
/// upper tail of `sign * z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Direction {
    #[default]
    Positive,
    Negative,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Positive => 1.0,
            Direction::Negative => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WeightFunctionError {
    AlphaOutOfRange(f64),
    AlphasNotDecreasing,
    OmegaOutOfRange(f64),
    OmegaCountMismatch { omegas: usize, alphas: usize },
    OmegasNotMonotone,
    LastOmegaNotOne(f64),
}

impl core::fmt::Display for WeightFunctionError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            WeightFunctionError::AlphaOutOfRange(a) => {
                write!(f, "cutpoint {a} outside (0, 1)")
            }
            WeightFunctionError::AlphasNotDecreasing => {
                write!(f, "cutpoints must be strictly decreasing")
            }
            WeightFunctionError::OmegaOutOfRange(w) => {
                write!(f, "weight {w} outside (0, 1]")
            }
            WeightFunctionError::OmegaCountMismatch { omegas, alphas } => {
                write!(f, "{omegas} weights for {alphas} cutpoints (need cutpoints + 1)")
            }
            WeightFunctionError::OmegasNotMonotone => {
                write!(f, "weights must be non-decreasing toward significance")
            }
            WeightFunctionError::LastOmegaNotOne(w) => {
                write!(f, "most-significant weight must be 1, got {w}")
            }
        }
    }
}

impl core::error::Error for WeightFunctionError {}

/// Step weight function over p-value intervals.
///
/// `alphas` are strictly decreasing cutpoints; `omegas` has one entry per
/// interval, least significant first, with the most-significant weight
/// fixed at 1. Empty `alphas` encodes the constant function w = 1.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct WeightFunction {
    pub side: Side,
    pub alphas: Vec<f64>,
    pub omegas: Vec<f64>,
}

impl WeightFunction {
    pub fn new(side: Side, alphas: Vec<f64>, omegas: Vec<f64>) -> Result<Self, WeightFunctionError> {
        for &a in &alphas {
            if !(a > 0.0 && a < 1.0) {
                return Err(WeightFunctionError::AlphaOutOfRange(a));
            }
        }
        if alphas.windows(2).any(|w| w[1] >= w[0]) {
            return Err(WeightFunctionError::AlphasNotDecreasing);
        }
        if omegas.len() != alphas.len() + 1 {
            return Err(WeightFunctionError::OmegaCountMismatch {
                omegas: omegas.len(),
                alphas: alphas.len(),
            });
        }
        for &w in &omegas {
            if !(w > 0.0 && w <= 1.0) {
                return Err(WeightFunctionError::OmegaOutOfRange(w));
            }
        }
        if omegas.windows(2).any(|w| w[1] < w[0]) {
            return Err(WeightFunctionError::OmegasNotMonotone);
        }
        let last = *omegas.last().expect("at least one weight");
        if last != 1.0 {
            return Err(WeightFunctionError::LastOmegaNotOne(last));
        }
        Ok(WeightFunction { side, alphas, omegas })
    }

    /// The constant weight function w = 1.
    pub fn constant() -> Self {
        WeightFunction {
            side: Side::TwoSided,
            alphas: Vec::new(),
            omegas: alloc::vec![1.0],
        }
    }

    /// Number of p-value intervals (= weights).
    pub fn intervals(&self) -> usize {
        self.omegas.len()
    }

    /// Replaces the weights, keeping the cutpoint structure.
    pub fn with_omegas(&self, omegas: Vec<f64>) -> Result<Self, WeightFunctionError> {
        WeightFunction::new(self.side, self.alphas.clone(), omegas)
    }
}

/// Prior on the pooled effect.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "kebab-case"))]
pub enum EffectComponent {
    /// Point mass at zero.
    Spike,
    Normal { mean: f64, sd: f64 },
}

impl EffectComponent {
    pub fn is_present(&self) -> bool {
        matches!(self, EffectComponent::Normal { .. })
    }
}

/// Prior on the between-study heterogeneity standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "kebab-case"))]
pub enum HeterogeneityComponent {
    /// Point mass at zero.
    Spike,
    InvGamma { shape: f64, scale: f64 },
}

impl HeterogeneityComponent {
    pub fn is_present(&self) -> bool {
        matches!(self, HeterogeneityComponent::InvGamma { .. })
    }
}

/// Half-Cauchy prior (Cauchy truncated to the nonnegative half line).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct HalfCauchy {
    pub scale: f64,
}

/// Publication-bias component of a model.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "kebab-case"))]
pub enum BiasComponent {
    None,
    /// Step selection on p-value intervals; the interval weights are free
    /// parameters with a cumulative-Dirichlet(1, ..., 1) prior.
    Selection { side: Side, alphas: Vec<f64> },
    /// Regression of effect on standard error with nonnegative slope.
    Pet { slope: HalfCauchy },
    /// Regression of effect on sampling variance with nonnegative slope.
    Peese { slope: HalfCauchy },
}

impl BiasComponent {
    pub fn is_present(&self) -> bool {
        !matches!(self, BiasComponent::None)
    }

    pub fn is_selection(&self) -> bool {
        matches!(self, BiasComponent::Selection { .. })
    }

    /// Number of free weight parameters for selection components.
    pub fn omega_free(&self) -> usize {
        match self {
            BiasComponent::Selection { alphas, .. } => alphas.len(),
            _ => 0,
        }
    }
}

/// One meta-analytic model: effect x heterogeneity x bias component, plus
/// its prior model probability.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ModelSpec {
    pub label: String,
    pub effect: EffectComponent,
    pub heterogeneity: HeterogeneityComponent,
    pub bias: BiasComponent,
    pub prior_prob: f64,
}

impl ModelSpec {
    /// Total number of free parameters.
    pub fn free_params(&self) -> usize {
        let mut n = 0;
        if self.effect.is_present() {
            n += 1;
        }
        if self.heterogeneity.is_present() {
            n += 1;
        }
        n += match &self.bias {
            BiasComponent::None => 0,
            BiasComponent::Selection { alphas, .. } => alphas.len(),
            BiasComponent::Pet { .. } | BiasComponent::Peese { .. } => 1,
        };
        n
    }

    /// Names of the free parameters, in sampling order.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        if self.effect.is_present() {
            names.push(String::from("mu"));
        }
        if self.heterogeneity.is_present() {
            names.push(String::from("tau"));
        }
        match &self.bias {
            BiasComponent::None => {}
            BiasComponent::Selection { alphas, .. } => {
                for i in 0..alphas.len() {
                    names.push(alloc::format!("omega{}", i + 1));
                }
            }
            BiasComponent::Pet { .. } | BiasComponent::Peese { .. } => {
                names.push(String::from("beta"));
            }
        }
        names
    }
}

/// Convergence and efficiency diagnostics for one model fit.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Diagnostics {
    /// Split R-hat per parameter; `None` with a single chain.
    pub rhat: Vec<Option<f64>>,
    /// Effective sample size per parameter (summed over chains).
    pub ess: Vec<f64>,
    /// Post-warmup acceptance rate per parameter.
    pub accept_rate: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Retained MCMC draws for one model, stored row-major
/// (`rows = chains * iterations`, grouped by chain).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct PosteriorDraws {
    pub param_names: Vec<String>,
    /// Row-major draw matrix, `rows x param_names.len()` entries.
    pub values: Vec<f64>,
    pub rows: usize,
    pub chains: usize,
    pub seed: u64,
    pub diagnostics: Diagnostics,
}

impl PosteriorDraws {
    pub fn ncols(&self) -> usize {
        self.param_names.len()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let k = self.ncols();
        &self.values[r * k..(r + 1) * k]
    }

    /// All values of one parameter, across chains.
    pub fn column(&self, c: usize) -> Vec<f64> {
        let k = self.ncols();
        (0..self.rows).map(|r| self.values[r * k + c]).collect()
    }

    /// Values of one parameter within one chain.
    pub fn chain_column(&self, chain: usize, c: usize) -> Vec<f64> {
        let k = self.ncols();
        let per_chain = self.rows / self.chains.max(1);
        let start = chain * per_chain;
        (start..start + per_chain)
            .map(|r| self.values[r * k + c])
            .collect()
    }
}

/// A central interval summary: posterior median with a 95% interval.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Interval {
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn from_draws(xs: &[f64], level: f64) -> Self {
        let (median, lower, upper) = math::median_and_interval(xs, level);
        Interval { median, lower, upper }
    }
}

/// Per-model result inside a [`FitResult`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ModelFit {
    pub spec: ModelSpec,
    pub draws: PosteriorDraws,
    /// Natural-log marginal likelihood.
    pub log_ml: f64,
    /// Monte Carlo / quadrature standard error of `log_ml`.
    pub log_ml_se: f64,
    /// Which estimator produced `log_ml`.
    pub evidence_method: String,
}

/// Ensemble-level quantities of a fitted model space.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct EnsembleSummary {
    /// Posterior model probabilities, aligned with the spec list.
    pub posterior_probs: Vec<f64>,
    pub bf_effect: f64,
    pub bf_heterogeneity: f64,
    pub bf_bias: f64,
    pub mu: Interval,
    pub tau: Interval,
}

/// Complete fit of a model space to a dataset.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct FitResult {
    pub models: Vec<ModelFit>,
    pub ensemble: EnsembleSummary,
    pub metrics: BiasMetrics,
}

/// Fitted and extrapolated posterior predictive densities of z-statistics
/// on a common grid, with pointwise bands.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct PredictiveCurve {
    pub grid: Vec<f64>,
    pub fitted: CurveBand,
    pub extrapolated: CurveBand,
    /// Numeric integral of the mean fitted density over the grid.
    pub mass_fitted: f64,
    /// Numeric integral of the mean extrapolated density over the grid.
    pub mass_extrapolated: f64,
    pub warnings: Vec<String>,
}

/// Pointwise mean and central band of a density over a grid.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct CurveBand {
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Publication-bias summaries derived from the extrapolated predictive.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct BiasMetrics {
    pub edr: Interval,
    pub fdr: Interval,
    pub n_missing: Interval,
    pub odr: f64,
    /// Per-draw (EDR, FDR, N_missing) triples, when retained.
    pub per_draw: Option<Vec<(f64, f64, f64)>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn zstat_examples() {
        assert_eq!(zstat(&Study::new(0.5, 0.25).unwrap()), 2.0);
        assert_eq!(zstat(&Study::new(0.0, 1.0).unwrap()), 0.0);
        assert!((zstat(&Study::new(-0.3, 0.1).unwrap()) + 3.0).abs() < 1e-12);
    }

    #[test]
    fn study_rejects_bad_inputs() {
        assert_eq!(
            Study::new(f64::NAN, 1.0),
            Err(ViolationKind::NonFiniteEffect)
        );
        assert_eq!(
            Study::new(0.0, 0.0),
            Err(ViolationKind::NonPositiveStandardError)
        );
        assert_eq!(
            Study::new(0.0, f64::INFINITY),
            Err(ViolationKind::NonFiniteStandardError)
        );
    }

    #[test]
    fn validate_reports_every_row() {
        let d = Dataset {
            studies: vec![
                Study { y: 0.1, se: 0.2, z: 0.5 },
                Study { y: 0.1, se: 0.0, z: f64::INFINITY },
                Study { y: f64::NAN, se: 1.0, z: f64::NAN },
            ],
            label: String::from("bad"),
        };
        match validate_dataset(&d) {
            Err(DatasetError::InvalidStudies(v)) => {
                assert_eq!(v.len(), 2);
                assert_eq!(v[0].row, 1);
                assert_eq!(v[1].row, 2);
            }
            other => panic!("expected violations, got {other:?}"),
        }
    }

    #[test]
    fn valid_dataset_passes_unchanged() {
        let d = Dataset::from_pairs([(0.5, 0.25), (0.1, 0.3), (-0.2, 0.4)], "ok").unwrap();
        assert!(validate_dataset(&d).is_ok());
        assert_eq!(d.len(), 3);
        assert_eq!(d.studies[0].z, 2.0);
    }

    #[test]
    fn empty_dataset_is_an_error() {
        assert_eq!(
            Dataset::from_pairs(core::iter::empty(), "none"),
            Err(DatasetError::Empty)
        );
    }

    #[test]
    fn odr_counts_inclusive_threshold() {
        let d = Dataset::from_pairs(
            [(2.5, 1.0), (-2.0, 1.0), (1.0, 1.0), (0.3, 1.0)],
            "odr",
        )
        .unwrap();
        assert_eq!(d.observed_discovery_rate(1.96), 0.5);
        assert_eq!(d.observed_discovery_rate(2.0), 0.5);
        assert_eq!(d.observed_discovery_rate(0.0), 1.0);
        let low = Dataset::from_pairs([(0.5, 1.0), (1.0, 1.0)], "low").unwrap();
        assert_eq!(low.observed_discovery_rate(1.96), 0.0);
    }

    #[test]
    fn weight_function_validation() {
        assert!(WeightFunction::new(Side::TwoSided, vec![0.05], vec![0.1, 1.0]).is_ok());
        assert!(WeightFunction::new(Side::OneSided, vec![0.5, 0.05], vec![0.1, 0.3, 1.0]).is_ok());
        assert!(matches!(
            WeightFunction::new(Side::TwoSided, vec![0.05, 0.05], vec![0.1, 0.2, 1.0]),
            Err(WeightFunctionError::AlphasNotDecreasing)
        ));
        assert!(matches!(
            WeightFunction::new(Side::TwoSided, vec![0.05], vec![0.3, 0.2, 1.0]),
            Err(WeightFunctionError::OmegaCountMismatch { .. })
        ));
        assert!(matches!(
            WeightFunction::new(Side::TwoSided, vec![0.05], vec![0.3, 0.9]),
            Err(WeightFunctionError::LastOmegaNotOne(_))
        ));
        assert!(matches!(
            WeightFunction::new(Side::TwoSided, vec![0.1, 0.05], vec![0.9, 0.8, 1.0]),
            Err(WeightFunctionError::OmegasNotMonotone)
        ));
    }

    #[test]
    fn free_params_and_names() {
        let spec = ModelSpec {
            label: String::from("sel"),
            effect: EffectComponent::Normal { mean: 0.0, sd: 1.0 },
            heterogeneity: HeterogeneityComponent::InvGamma { shape: 1.0, scale: 0.15 },
            bias: BiasComponent::Selection {
                side: Side::OneSided,
                alphas: vec![0.5, 0.1, 0.05],
            },
            prior_prob: 0.1,
        };
        assert_eq!(spec.free_params(), 5);
        assert_eq!(
            spec.param_names(),
            vec!["mu", "tau", "omega1", "omega2", "omega3"]
        );
        let null = ModelSpec {
            label: String::from("null"),
            effect: EffectComponent::Spike,
            heterogeneity: HeterogeneityComponent::Spike,
            bias: BiasComponent::None,
            prior_prob: 0.1,
        };
        assert_eq!(null.free_params(), 0);
    }

    proptest! {
        #[test]
        fn zstat_scale_consistent(y in -10.0f64..10.0, se in 0.01f64..10.0, c in 0.01f64..100.0) {
            let a = Study::new(y, se).unwrap();
            let b = Study::new(c * y, c * se).unwrap();
            prop_assert!((zstat(&a) - zstat(&b)).abs() <= 1e-12 * zstat(&a).abs().max(1.0));
        }
    }
}
