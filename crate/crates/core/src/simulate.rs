//! Synthetic literatures with and without publication bias.
//!
//! Each candidate study draws a true effect from `Normal(d, tau^2)`, a total
//! sample size uniform on `{n_min, ..., n_max}` split across two groups, an
//! observed standardized mean difference, and the usual two-group variance
//! approximation for its standard error. The candidate survives the
//! publication filter with probability given by a step weight function over
//! its z-statistic (absolute survival probabilities, not relative weights);
//! generation repeats until `k` studies are retained.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::densities::weight_at_dir;
use crate::math::sqrt;
use crate::mcmc::standard_normal;
use crate::model::{Dataset, Direction, Side, Study, WeightFunction};

/// Seed used for the bundled demonstration datasets.
pub const BUNDLED_SEED: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimConfig {
    /// Retained study count.
    pub k: usize,
    /// True mean effect (standardized units).
    pub d: f64,
    /// Heterogeneity standard deviation.
    pub tau: f64,
    /// Total sample size is uniform on `{n_total_min, ..., n_total_max}`,
    /// split as evenly as possible across two groups.
    pub n_total_min: u32,
    pub n_total_max: u32,
    /// Survival probabilities per p-value interval.
    pub selection: WeightFunction,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(k: usize, d: f64, tau: f64, selection: WeightFunction, seed: u64) -> Self {
        SimConfig { k, d, tau, n_total_min: 20, n_total_max: 200, selection, seed }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.k < 1 {
            return Err(SimError::InvalidConfig("k must be >= 1"));
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(SimError::InvalidConfig("tau must be nonnegative and finite"));
        }
        if self.n_total_min < 4 || self.n_total_max < self.n_total_min {
            return Err(SimError::InvalidConfig("sample-size range must be >= 4 and ordered"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimError {
    InvalidConfig(&'static str),
    /// The survival probabilities are so low that the candidate budget ran
    /// out before `k` studies were retained.
    SurvivalTooLow { generated: usize, retained: usize },
}

impl core::fmt::Display for SimError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SimError::InvalidConfig(msg) => write!(f, "invalid simulation config: {msg}"),
            SimError::SurvivalTooLow { generated, retained } => write!(
                f,
                "retained only {retained} studies after {generated} candidates; survival too low"
            ),
        }
    }
}

impl core::error::Error for SimError {}

/// A simulated dataset plus its generation log.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub dataset: Dataset,
    /// Candidates generated before `k` survived.
    pub generated: usize,
}

const MAX_CANDIDATES: usize = 1_000_000;

/// No publication filter: every candidate is retained.
pub fn survival_none() -> WeightFunction {
    WeightFunction::constant()
}

/// Moderate one-sided selection: studies significant in the expected
/// direction at p <= .05 always survive, the rest with probability 0.35.
///
/// The non-significant survival rate is calibrated so the retained
/// literature reproduces an observed discovery rate near 0.57 under the
/// bundled generating process (k = 300, d = 0.3, tau = 0.15).
pub fn survival_moderate() -> WeightFunction {
    WeightFunction::new(Side::OneSided, alloc::vec![0.05], alloc::vec![0.35, 1.0])
        .expect("valid survival function")
}

/// Simulates studies until `k` survive the publication filter.
pub fn simulate_studies(cfg: &SimConfig) -> Result<SimOutput, SimError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut studies = Vec::with_capacity(cfg.k);
    let mut generated = 0usize;
    while studies.len() < cfg.k {
        if generated >= MAX_CANDIDATES {
            return Err(SimError::SurvivalTooLow { generated, retained: studies.len() });
        }
        generated += 1;
        let theta = cfg.d + cfg.tau * standard_normal(&mut rng);
        let n_total = rng.random_range(cfg.n_total_min..=cfg.n_total_max);
        let n1 = n_total.div_ceil(2) as f64;
        let n2 = (n_total / 2) as f64;
        // Two-group Cohen's d variance approximation, first with the true
        // effect for sampling, then with the observed effect for the
        // reported standard error.
        let sd_true = sqrt((n1 + n2) / (n1 * n2) + theta * theta / (2.0 * (n1 + n2)));
        let d_obs = theta + sd_true * standard_normal(&mut rng);
        let se = sqrt((n1 + n2) / (n1 * n2) + d_obs * d_obs / (2.0 * (n1 + n2)));
        let z = d_obs / se;
        let survival = weight_at_dir(&cfg.selection, z, Direction::Positive);
        if survival >= 1.0 || rng.random::<f64>() < survival {
            studies.push(Study { y: d_obs, se, z });
        }
    }
    Ok(SimOutput {
        dataset: Dataset { studies, label: String::from("simulated") },
        generated,
    })
}

/// The bundled 300-study no-bias simulation (d = 0.3, tau = 0.15).
pub fn bundled_no_bias() -> Dataset {
    let cfg = SimConfig::new(300, 0.3, 0.15, survival_none(), BUNDLED_SEED);
    let mut out = simulate_studies(&cfg).expect("no-bias simulation cannot stall");
    out.dataset.label = String::from("bundled-no-bias");
    out.dataset
}

/// The bundled 300-study moderately biased simulation.
pub fn bundled_biased() -> Dataset {
    let cfg = SimConfig::new(300, 0.3, 0.15, survival_moderate(), BUNDLED_SEED);
    let mut out = simulate_studies(&cfg).expect("moderate survival cannot stall");
    out.dataset.label = String::from("bundled-biased");
    out.dataset
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn retained_count_is_exact_and_deterministic() {
        let cfg = SimConfig::new(120, 0.3, 0.15, survival_moderate(), 7);
        let a = simulate_studies(&cfg).unwrap();
        let b = simulate_studies(&cfg).unwrap();
        assert_eq!(a.dataset.len(), 120);
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.generated, b.generated);
        assert!(a.generated >= 120);
    }

    #[test]
    fn no_censoring_retains_every_candidate() {
        let cfg = SimConfig::new(200, 0.3, 0.15, survival_none(), 3);
        let out = simulate_studies(&cfg).unwrap();
        assert_eq!(out.generated, 200);
        assert_eq!(out.dataset.len(), 200);
    }

    #[test]
    fn hard_one_sided_selection_keeps_only_significant() {
        // Survival ~0 unless one-sided significant: all retained z above the
        // threshold, and generation rate near the test size under the null.
        let selection = WeightFunction::new(
            Side::OneSided,
            vec![0.05],
            vec![1e-12, 1.0],
        )
        .unwrap();
        let cfg = SimConfig { tau: 0.0, d: 0.0, ..SimConfig::new(150, 0.0, 0.0, selection, 11) };
        let out = simulate_studies(&cfg).unwrap();
        let threshold = crate::densities::normal_quantile(0.95).unwrap();
        for s in &out.dataset.studies {
            assert!(s.z >= threshold, "retained z {}", s.z);
        }
        // Expected survival rate is ~5%; allow generous sampling slack.
        let rate = 150.0 / out.generated as f64;
        assert!((rate - 0.05).abs() < 0.015, "survival rate {rate}");
    }

    #[test]
    fn smooth_histogram_without_censoring() {
        // No bin-pair jump across the significance threshold under no bias.
        let cfg = SimConfig::new(3000, 0.3, 0.15, survival_none(), 5);
        let out = simulate_studies(&cfg).unwrap();
        let t = 1.96;
        let width = 0.25;
        let below = out
            .dataset
            .studies
            .iter()
            .filter(|s| s.z >= t - width && s.z < t)
            .count() as f64;
        let above = out
            .dataset
            .studies
            .iter()
            .filter(|s| s.z >= t && s.z < t + width)
            .count() as f64;
        let se = sqrt(below + above);
        assert!(
            (above - below).abs() <= 4.0 * se,
            "jump {below} -> {above} exceeds 4 binomial SEs"
        );
    }

    #[test]
    fn bundled_datasets_have_expected_shape() {
        let no_bias = bundled_no_bias();
        let biased = bundled_biased();
        assert_eq!(no_bias.len(), 300);
        assert_eq!(biased.len(), 300);
        // Selection enriches significant results.
        assert!(
            biased.observed_discovery_rate(1.96) > no_bias.observed_discovery_rate(1.96)
        );
    }

    #[test]
    fn survival_budget_error() {
        let selection = WeightFunction::new(
            Side::OneSided,
            vec![1e-9],
            vec![1e-9, 1.0],
        )
        .unwrap();
        let cfg = SimConfig::new(50_000, -3.0, 0.0, selection, 2);
        match simulate_studies(&cfg) {
            Err(SimError::SurvivalTooLow { generated, .. }) => {
                assert_eq!(generated, 1_000_000);
            }
            other => panic!("expected survival error, got {other:?}"),
        }
    }
}
