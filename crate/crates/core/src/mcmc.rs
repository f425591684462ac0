//! Posterior sampling: adaptive per-coordinate random-walk Metropolis on
//! the unconstrained scale, with split R-hat and autocorrelation-based
//! effective sample sizes.
//!
//! Step sizes adapt during warmup only, by a Robbins-Monro update of the
//! log step toward the target acceptance rate over fixed windows; after
//! warmup the kernel is frozen so detailed balance holds exactly. Chains
//! draw from independent ChaCha streams derived from the master seed, so a
//! fit is a pure function of `(dataset, spec, config)` no matter how chains
//! are scheduled.

use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::math::{self, ln, sqrt};
use crate::model::{Dataset, Diagnostics, Direction, ModelSpec, PosteriorDraws};
use crate::target::{PosteriorTarget, Scratch};

/// Sampler configuration; `Default` mirrors the library's standard run.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SamplerConfig {
    pub chains: usize,
    pub warmup: usize,
    /// Retained iterations per chain.
    pub iterations: usize,
    pub seed: u64,
    pub target_accept: f64,
    /// Warmup iterations per adaptation window.
    pub adapt_window: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            chains: 4,
            warmup: 2000,
            iterations: 5000,
            seed: 1,
            target_accept: 0.3,
            adapt_window: 50,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.chains < 1 {
            return Err(SamplerError::InvalidConfig("chains must be >= 1"));
        }
        if self.iterations == 0 {
            return Err(SamplerError::InvalidConfig("iterations must be > 0"));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(SamplerError::InvalidConfig("target acceptance must be in (0,1)"));
        }
        if self.adapt_window == 0 {
            return Err(SamplerError::InvalidConfig("adaptation window must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SamplerError {
    InvalidConfig(&'static str),
    /// Every proposal was rejected during warmup.
    DegeneratePosterior { chain: usize },
    InsufficientDraws { needed: usize, got: usize },
}

impl core::fmt::Display for SamplerError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SamplerError::InvalidConfig(msg) => write!(f, "invalid sampler config: {msg}"),
            SamplerError::DegeneratePosterior { chain } => write!(
                f,
                "chain {chain}: every warmup proposal was rejected (degenerate posterior)"
            ),
            SamplerError::InsufficientDraws { needed, got } => {
                write!(f, "need at least {needed} draws, got {got}")
            }
        }
    }
}

impl core::error::Error for SamplerError {}

/// Standard normal variate via the Marsaglia polar method (kept in-crate so
/// the draw stream is identical on every platform and build profile).
pub fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let u = 2.0 * rng.random::<f64>() - 1.0;
        let v = 2.0 * rng.random::<f64>() - 1.0;
        let s = u * u + v * v;
        if s > 0.0 && s < 1.0 {
            return u * sqrt(-2.0 * ln(s) / s);
        }
    }
}

struct ChainOutput {
    /// Retained natural-space draws, row-major.
    draws: Vec<f64>,
    accepted: Vec<u64>,
    proposals: u64,
}

fn run_chain(
    target: &PosteriorTarget<'_>,
    cfg: &SamplerConfig,
    chain_idx: usize,
) -> Result<ChainOutput, SamplerError> {
    let dim = target.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(math::derive_seed(cfg.seed, chain_idx as u64));
    let mut scratch = Scratch::default();

    // Prior centers jittered per chain for overdispersed starts.
    let mut x = target.prior_center_unconstrained();
    for xi in x.iter_mut() {
        *xi += 0.5 * standard_normal(&mut rng);
    }
    let mut log_step = alloc::vec![0.0_f64; dim];
    let (mut current_lp, _) = target.log_posterior_unconstrained(&x, &mut scratch);
    // A jittered start can land outside floating-point range; fall back to
    // the prior center.
    if !current_lp.is_finite() {
        x = target.prior_center_unconstrained();
        let r = target.log_posterior_unconstrained(&x, &mut scratch);
        current_lp = r.0;
    }

    let mut warmup_accepts = 0u64;
    let mut window_accept = alloc::vec![0.0_f64; dim];
    for t in 0..cfg.warmup {
        for i in 0..dim {
            let old = x[i];
            x[i] = old + math::exp(log_step[i]) * standard_normal(&mut rng);
            let (prop_lp, _) = target.log_posterior_unconstrained(&x, &mut scratch);
            let alpha = if prop_lp.is_finite() || current_lp.is_finite() {
                math::exp((prop_lp - current_lp).min(0.0))
            } else {
                0.0
            };
            if rng.random::<f64>() < alpha {
                current_lp = prop_lp;
                warmup_accepts += 1;
            } else {
                x[i] = old;
            }
            window_accept[i] += alpha;
        }
        if (t + 1) % cfg.adapt_window == 0 {
            let window_idx = ((t + 1) / cfg.adapt_window) as f64;
            let gain = (2.0 / math::powf(window_idx, 0.55)).min(1.5);
            for i in 0..dim {
                let frac = window_accept[i] / cfg.adapt_window as f64;
                log_step[i] += gain * (frac - cfg.target_accept);
                window_accept[i] = 0.0;
            }
        }
    }
    if cfg.warmup > 0 && dim > 0 && warmup_accepts == 0 {
        return Err(SamplerError::DegeneratePosterior { chain: chain_idx });
    }

    let mut draws = Vec::with_capacity(cfg.iterations * dim);
    let mut accepted = alloc::vec![0_u64; dim];
    for _ in 0..cfg.iterations {
        for i in 0..dim {
            let old = x[i];
            x[i] = old + math::exp(log_step[i]) * standard_normal(&mut rng);
            let (prop_lp, _) = target.log_posterior_unconstrained(&x, &mut scratch);
            let alpha = math::exp((prop_lp - current_lp).min(0.0));
            if prop_lp.is_finite() && rng.random::<f64>() < alpha {
                current_lp = prop_lp;
                accepted[i] += 1;
            } else {
                x[i] = old;
            }
        }
        let (theta, _) = target.natural_from_unconstrained(&x);
        draws.extend_from_slice(&theta);
    }
    Ok(ChainOutput { draws, accepted, proposals: cfg.iterations as u64 })
}

/// Draws from the posterior of `spec` given `d`. Deterministic in
/// `(dataset, spec, cfg)`; chains are merged in index order.
pub fn sample_posterior(
    spec: &ModelSpec,
    d: &Dataset,
    cfg: &SamplerConfig,
    direction: Direction,
) -> Result<PosteriorDraws, SamplerError> {
    cfg.validate()?;
    let target = PosteriorTarget::new(spec, d, direction);
    let dim = target.dim();
    if dim == 0 {
        return Ok(PosteriorDraws {
            param_names: Vec::new(),
            values: Vec::new(),
            rows: 0,
            chains: cfg.chains,
            seed: cfg.seed,
            diagnostics: Diagnostics::default(),
        });
    }

    let mut values = Vec::with_capacity(cfg.chains * cfg.iterations * dim);
    let mut accept_rate = alloc::vec![0.0_f64; dim];
    let mut per_chain_draws: Vec<Vec<f64>> = Vec::with_capacity(cfg.chains);
    for chain in 0..cfg.chains {
        let out = run_chain(&target, cfg, chain)?;
        for i in 0..dim {
            accept_rate[i] += out.accepted[i] as f64 / out.proposals as f64 / cfg.chains as f64;
        }
        per_chain_draws.push(out.draws);
    }
    for chain in &per_chain_draws {
        values.extend_from_slice(chain);
    }

    let rows = cfg.chains * cfg.iterations;
    let mut rhat_all = Vec::with_capacity(dim);
    let mut ess_all = Vec::with_capacity(dim);
    let mut warnings = Vec::new();
    for p in 0..dim {
        let chains_col: Vec<Vec<f64>> = per_chain_draws
            .iter()
            .map(|c| c.iter().skip(p).step_by(dim).copied().collect())
            .collect();
        let r = if cfg.chains >= 2 {
            match rhat(&chains_col) {
                Ok(v) => Some(v),
                Err(_) => None,
            }
        } else {
            None
        };
        if let Some(v) = r {
            if v > 1.05 {
                warnings.push(alloc::format!(
                    "parameter {} has R-hat {:.3} > 1.05; chains may not have mixed",
                    spec.param_names()[p],
                    v
                ));
            }
        }
        rhat_all.push(r);
        ess_all.push(chains_col.iter().map(|c| ess(c)).sum());
    }

    Ok(PosteriorDraws {
        param_names: spec.param_names(),
        values,
        rows,
        chains: cfg.chains,
        seed: cfg.seed,
        diagnostics: Diagnostics {
            rhat: rhat_all,
            ess: ess_all,
            accept_rate,
            warnings,
        },
    })
}

/// Split-chain potential scale reduction factor.
///
/// Chains are halved, within- and between-sequence variances are combined,
/// and the zero-variance case returns 1 by convention.
pub fn rhat(chains: &[Vec<f64>]) -> Result<f64, SamplerError> {
    if chains.len() < 2 {
        return Err(SamplerError::InsufficientDraws { needed: 2, got: chains.len() });
    }
    let min_len = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    if min_len < 4 {
        return Err(SamplerError::InsufficientDraws { needed: 4, got: min_len });
    }
    let half = min_len / 2;
    let mut sequences: Vec<&[f64]> = Vec::with_capacity(chains.len() * 2);
    for c in chains {
        sequences.push(&c[..half]);
        sequences.push(&c[half..2 * half]);
    }
    let n = half as f64;
    let means: Vec<f64> = sequences.iter().map(|s| math::mean(s)).collect();
    let vars: Vec<f64> = sequences.iter().map(|s| math::sample_variance(s)).collect();
    let w = math::mean(&vars);
    let b_over_n = math::sample_variance(&means);
    if w == 0.0 {
        return Ok(if b_over_n == 0.0 { 1.0 } else { f64::INFINITY });
    }
    let var_plus = (n - 1.0) / n * w + b_over_n;
    Ok(sqrt(var_plus / w))
}

/// Effective sample size of one sequence via Geyer's initial monotone
/// positive sequence of autocorrelation pairs.
///
/// Constant sequences report the minimal sentinel 1; very short sequences
/// fall back to their length.
pub fn ess(x: &[f64]) -> f64 {
    let n = x.len();
    if n == 0 {
        return 0.0;
    }
    if n < 8 {
        return n as f64;
    }
    let m = math::mean(x);
    let gamma0: f64 = x.iter().map(|&v| (v - m) * (v - m)).sum::<f64>() / n as f64;
    if gamma0 == 0.0 {
        return 1.0;
    }
    let autocov = |k: usize| -> f64 {
        let mut s = 0.0;
        for t in 0..(n - k) {
            s += (x[t] - m) * (x[t + k] - m);
        }
        s / n as f64
    };
    let mut tau = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut k = 0;
    let max_lag = n - 2;
    loop {
        let rho_even = if k == 0 { 1.0 } else { autocov(k) / gamma0 };
        let rho_odd = if k + 1 <= max_lag { autocov(k + 1) / gamma0 } else { 0.0 };
        let mut pair = rho_even + rho_odd;
        if pair <= 0.0 {
            break;
        }
        // Enforce monotone non-increasing pairs.
        pair = pair.min(prev_pair);
        prev_pair = pair;
        tau += pair;
        k += 2;
        if k > max_lag {
            break;
        }
    }
    let integrated = (2.0 * tau - 1.0).max(1.0 / n as f64);
    (n as f64 / integrated).clamp(1.0, n as f64 * 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        BiasComponent, EffectComponent, HeterogeneityComponent, Side,
    };
    use alloc::string::String;
    use alloc::vec;

    fn fixed_effect_spec() -> ModelSpec {
        ModelSpec {
            label: String::from("fe"),
            effect: EffectComponent::Normal { mean: 0.0, sd: 1.0 },
            heterogeneity: HeterogeneityComponent::Spike,
            bias: BiasComponent::None,
            prior_prob: 0.5,
        }
    }

    fn cfg(seed: u64) -> SamplerConfig {
        SamplerConfig {
            chains: 4,
            warmup: 1000,
            iterations: 3000,
            seed,
            target_accept: 0.3,
            adapt_window: 50,
        }
    }

    #[test]
    fn conjugate_posterior_recovered() {
        // Single study (y=0, se=1), mu ~ N(0,1): posterior is N(0, 1/2).
        let d = Dataset::from_pairs([(0.0, 1.0)], "single").unwrap();
        let spec = fixed_effect_spec();
        let draws = sample_posterior(&spec, &d, &cfg(7), Direction::Positive).unwrap();
        let mu = draws.column(0);
        let ess_mu = draws.diagnostics.ess[0];
        let mean = math::mean(&mu);
        let var = math::sample_variance(&mu);
        let mcse_mean = sqrt(var / ess_mu);
        assert!(mean.abs() < 3.0 * mcse_mean, "mean {mean} vs mcse {mcse_mean}");
        let mcse_var = var * sqrt(2.0 / ess_mu);
        assert!((var - 0.5).abs() < 3.0 * mcse_var, "var {var} vs mcse {mcse_var}");

        // Shifted data: posterior mean (sum y/se^2)/(sum se^-2 + 1) = 0.25.
        let d = Dataset::from_pairs([(0.5, 1.0)], "single").unwrap();
        let draws = sample_posterior(&spec, &d, &cfg(8), Direction::Positive).unwrap();
        let mu = draws.column(0);
        let mean = math::mean(&mu);
        let mcse = sqrt(math::sample_variance(&mu) / draws.diagnostics.ess[0]);
        assert!((mean - 0.25).abs() < 3.0 * mcse, "mean {mean}");
    }

    #[test]
    fn null_model_returns_empty_draws() {
        let d = Dataset::from_pairs([(0.5, 1.0)], "single").unwrap();
        let spec = ModelSpec {
            label: String::from("null"),
            effect: EffectComponent::Spike,
            heterogeneity: HeterogeneityComponent::Spike,
            bias: BiasComponent::None,
            prior_prob: 0.5,
        };
        let draws = sample_posterior(&spec, &d, &cfg(1), Direction::Positive).unwrap();
        assert_eq!(draws.rows, 0);
        assert_eq!(draws.ncols(), 0);
    }

    #[test]
    fn draws_are_reproducible_and_in_support() {
        let d = Dataset::from_pairs(
            [(0.42, 0.2), (0.1, 0.3), (0.55, 0.25), (-0.1, 0.4), (0.3, 0.15)],
            "five",
        )
        .unwrap();
        let spec = ModelSpec {
            label: String::from("sel"),
            effect: EffectComponent::Normal { mean: 0.0, sd: 1.0 },
            heterogeneity: HeterogeneityComponent::InvGamma { shape: 1.0, scale: 0.15 },
            bias: BiasComponent::Selection { side: Side::OneSided, alphas: vec![0.5, 0.05] },
            prior_prob: 0.1,
        };
        let small = SamplerConfig { chains: 2, warmup: 300, iterations: 400, ..cfg(99) };
        let a = sample_posterior(&spec, &d, &small, Direction::Positive).unwrap();
        let b = sample_posterior(&spec, &d, &small, Direction::Positive).unwrap();
        assert_eq!(a.values, b.values, "identical seeds give identical draws");
        for r in 0..a.rows {
            let row = a.row(r);
            assert!(row[1] >= 0.0, "tau in support");
            assert!(row[2] > 0.0 && row[2] <= 1.0);
            assert!(row[3] >= row[2] && row[3] <= 1.0, "omegas ordered");
        }
    }

    #[test]
    fn acceptance_rate_in_window_after_adaptation() {
        let d = Dataset::from_pairs(
            [(0.42, 0.2), (0.1, 0.3), (0.55, 0.25), (-0.1, 0.4)],
            "four",
        )
        .unwrap();
        let spec = ModelSpec {
            label: String::from("re"),
            effect: EffectComponent::Normal { mean: 0.0, sd: 1.0 },
            heterogeneity: HeterogeneityComponent::InvGamma { shape: 1.0, scale: 0.15 },
            bias: BiasComponent::None,
            prior_prob: 0.5,
        };
        let draws = sample_posterior(&spec, &d, &cfg(3), Direction::Positive).unwrap();
        for (i, &rate) in draws.diagnostics.accept_rate.iter().enumerate() {
            assert!((0.1..=0.6).contains(&rate), "param {i} accept {rate}");
        }
    }

    #[test]
    fn rhat_detects_offset_chains() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a: Vec<f64> = (0..2000).map(|_| standard_normal(&mut rng)).collect();
        let b: Vec<f64> = (0..2000).map(|_| standard_normal(&mut rng)).collect();
        let same = rhat(&[a.clone(), b.clone()]).unwrap();
        assert!(same < 1.01, "same-distribution rhat {same}");
        let shifted: Vec<f64> = b.iter().map(|x| x + 10.0).collect();
        let bad = rhat(&[a, shifted]).unwrap();
        assert!(bad > 1.2, "offset rhat {bad}");
    }

    #[test]
    fn rhat_constant_chains_is_one() {
        let c = vec![vec![2.0; 100], vec![2.0; 100]];
        assert_eq!(rhat(&c).unwrap(), 1.0);
    }

    #[test]
    fn rhat_requires_enough_draws() {
        assert!(rhat(&[vec![1.0, 2.0]]).is_err());
        assert!(rhat(&[vec![1.0, 2.0], vec![1.0]]).is_err());
    }

    #[test]
    fn ess_white_noise_near_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..10000).map(|_| standard_normal(&mut rng)).collect();
        let e = ess(&x);
        assert!((e - 10000.0).abs() < 1000.0, "white-noise ess {e}");
    }

    #[test]
    fn ess_ar1_matches_theory() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rho = 0.9_f64;
        let n = 40000;
        let mut x = Vec::with_capacity(n);
        let mut prev = 0.0;
        for _ in 0..n {
            prev = rho * prev + sqrt(1.0 - rho * rho) * standard_normal(&mut rng);
            x.push(prev);
        }
        let expected = n as f64 * (1.0 - rho) / (1.0 + rho);
        let e = ess(&x);
        assert!(
            (e - expected).abs() < 0.25 * expected,
            "ess {e} vs theory {expected}"
        );
    }

    #[test]
    fn ess_constant_is_one() {
        assert_eq!(ess(&vec![3.0; 500]), 1.0);
    }
}
