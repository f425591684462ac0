//! Log-posterior evaluation for one model on one dataset, shared by the
//! sampler and both evidence estimators.
//!
//! Free parameters are laid out as `[mu?, tau?, omega_1..omega_m | beta?]`
//! in natural space, matching [`ModelSpec::param_names`]. The unconstrained
//! space applies log transforms to tau and beta and stick-breaking to the
//! weight block.
//!
//! For selection models the per-study normal terms and interval
//! probabilities depend only on `(mu, tau)`; they are cached so that
//! weight-only proposals cost a few multiplies per study instead of a CDF
//! evaluation per study and interval.

use alloc::vec::Vec;

use crate::densities::{self, normal_log_density, omega_log_prior, ZPartition};
use crate::math::{ln, sqrt};
use crate::model::{
    BiasComponent, Dataset, Direction, EffectComponent, HeterogeneityComponent, ModelSpec,
    WeightFunction,
};
use crate::transforms;

/// Natural-space view of a parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalParams {
    pub mu: f64,
    pub tau: f64,
    /// Slope on `se` (PET).
    pub slope_se: f64,
    /// Slope on `se^2` (PEESE).
    pub slope_var: f64,
    /// Free weights; empty for non-selection models.
    pub free_omegas: Vec<f64>,
}

impl NaturalParams {
    /// Full weight vector including the fixed most-significant 1.
    pub fn full_omegas(&self) -> Vec<f64> {
        let mut v = self.free_omegas.clone();
        v.push(1.0);
        v
    }
}

/// Posterior target for a `(spec, dataset)` pair.
pub struct PosteriorTarget<'a> {
    pub spec: &'a ModelSpec,
    pub dataset: &'a Dataset,
    pub direction: Direction,
    partition: Option<ZPartition>,
    /// Per-interval study counts for the weight numerator.
    interval_counts: Vec<f64>,
    intervals: usize,
}

/// Two-slot cache of `(mu, tau)`-dependent selection quantities.
#[derive(Default)]
pub struct Scratch {
    slots: [Option<ScratchSlot>; 2],
    next: usize,
}

struct ScratchSlot {
    mu_bits: u64,
    tau_bits: u64,
    /// Sum of per-study unweighted normal log-densities.
    base_loglik: f64,
    /// Row-major `n_studies x intervals` interval probabilities.
    probs: Vec<f64>,
}

impl Scratch {
    fn find(&self, mu: f64, tau: f64) -> Option<usize> {
        self.slots.iter().position(|s| {
            s.as_ref()
                .is_some_and(|s| s.mu_bits == mu.to_bits() && s.tau_bits == tau.to_bits())
        })
    }

    fn insert(&mut self, slot: ScratchSlot) -> usize {
        let idx = self.next;
        self.slots[idx] = Some(slot);
        self.next = 1 - idx;
        idx
    }
}

impl<'a> PosteriorTarget<'a> {
    pub fn new(spec: &'a ModelSpec, dataset: &'a Dataset, direction: Direction) -> Self {
        let (partition, interval_counts, intervals) = match &spec.bias {
            BiasComponent::Selection { side, alphas } => {
                let wf = WeightFunction {
                    side: *side,
                    alphas: alphas.clone(),
                    omegas: alloc::vec![1.0; alphas.len() + 1],
                };
                let part = ZPartition::new(&wf, direction);
                let k = alphas.len() + 1;
                let mut counts = alloc::vec![0.0; k];
                for s in &dataset.studies {
                    counts[part.index_at(s.z, &wf, direction)] += 1.0;
                }
                (Some(part), counts, k)
            }
            _ => (None, Vec::new(), 0),
        };
        PosteriorTarget {
            spec,
            dataset,
            direction,
            partition,
            interval_counts,
            intervals,
        }
    }

    pub fn dim(&self) -> usize {
        self.spec.free_params()
    }

    pub fn is_selection(&self) -> bool {
        self.partition.is_some()
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    /// Unpacks a flat natural parameter vector.
    pub fn unpack(&self, theta: &[f64]) -> NaturalParams {
        debug_assert_eq!(theta.len(), self.dim());
        let mut k = 0;
        let mu = if self.spec.effect.is_present() {
            k += 1;
            theta[k - 1]
        } else {
            0.0
        };
        let tau = if self.spec.heterogeneity.is_present() {
            k += 1;
            theta[k - 1]
        } else {
            0.0
        };
        let mut slope_se = 0.0;
        let mut slope_var = 0.0;
        let mut free_omegas = Vec::new();
        match &self.spec.bias {
            BiasComponent::None => {}
            BiasComponent::Selection { alphas, .. } => {
                free_omegas = theta[k..k + alphas.len()].to_vec();
            }
            BiasComponent::Pet { .. } => slope_se = theta[k],
            BiasComponent::Peese { .. } => slope_var = theta[k],
        }
        NaturalParams { mu, tau, slope_se, slope_var, free_omegas }
    }

    /// Natural parameters from unconstrained coordinates, with log-Jacobian.
    pub fn natural_from_unconstrained(&self, x: &[f64]) -> (Vec<f64>, f64) {
        debug_assert_eq!(x.len(), self.dim());
        let mut theta = Vec::with_capacity(x.len());
        let mut log_jac = 0.0;
        let mut k = 0;
        if self.spec.effect.is_present() {
            theta.push(x[k]);
            k += 1;
        }
        if self.spec.heterogeneity.is_present() {
            let (tau, j) = transforms::positive_from_unconstrained(x[k]);
            theta.push(tau);
            log_jac += j;
            k += 1;
        }
        match &self.spec.bias {
            BiasComponent::None => {}
            BiasComponent::Selection { alphas, .. } => {
                let (omegas, j) = transforms::omegas_from_unconstrained(&x[k..k + alphas.len()]);
                theta.extend_from_slice(&omegas);
                log_jac += j;
            }
            BiasComponent::Pet { .. } | BiasComponent::Peese { .. } => {
                let (beta, j) = transforms::positive_from_unconstrained(x[k]);
                theta.push(beta);
                log_jac += j;
            }
        }
        (theta, log_jac)
    }

    /// Unconstrained coordinates of a natural parameter vector.
    pub fn unconstrained_from_natural(&self, theta: &[f64]) -> Vec<f64> {
        debug_assert_eq!(theta.len(), self.dim());
        let mut x = Vec::with_capacity(theta.len());
        let mut k = 0;
        if self.spec.effect.is_present() {
            x.push(theta[k]);
            k += 1;
        }
        if self.spec.heterogeneity.is_present() {
            x.push(transforms::positive_to_unconstrained(theta[k]));
            k += 1;
        }
        match &self.spec.bias {
            BiasComponent::None => {}
            BiasComponent::Selection { alphas, .. } => {
                x.extend(transforms::omegas_to_unconstrained(&theta[k..k + alphas.len()]));
            }
            BiasComponent::Pet { .. } | BiasComponent::Peese { .. } => {
                x.push(transforms::positive_to_unconstrained(theta[k]));
            }
        }
        x
    }

    /// Center of the prior on the unconstrained scale, used to initialize
    /// chains and optimizers.
    pub fn prior_center_unconstrained(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.dim());
        if let EffectComponent::Normal { mean, .. } = self.spec.effect {
            x.push(mean);
        }
        if let HeterogeneityComponent::InvGamma { shape, scale } = self.spec.heterogeneity {
            // Median for shape 1; mode otherwise.
            let center = if shape == 1.0 {
                scale / core::f64::consts::LN_2
            } else {
                scale / (shape + 1.0)
            };
            x.push(transforms::positive_to_unconstrained(center));
        }
        match &self.spec.bias {
            BiasComponent::None => {}
            BiasComponent::Selection { alphas, .. } => {
                // Equal simplex increments 1/k.
                let k = alphas.len() + 1;
                for j in 0..alphas.len() {
                    x.push(transforms::logit(1.0 / (k - j) as f64));
                }
            }
            BiasComponent::Pet { slope } | BiasComponent::Peese { slope } => {
                // Half-Cauchy median equals its scale.
                x.push(transforms::positive_to_unconstrained(slope.scale));
            }
        }
        x
    }

    /// Per-study interval probabilities and base log-likelihood for a
    /// selection model at `(mu, tau)`, through the scratch cache.
    fn selection_slot<'s>(&self, scratch: &'s mut Scratch, mu: f64, tau: f64) -> &'s ScratchSlot {
        if let Some(idx) = scratch.find(mu, tau) {
            return scratch.slots[idx].as_ref().expect("slot present");
        }
        let part = self.partition.as_ref().expect("selection model");
        let k = self.intervals;
        let n = self.dataset.len();
        let mut probs = Vec::with_capacity(n * k);
        let mut base = 0.0;
        for s in &self.dataset.studies {
            let sd = sqrt(tau * tau + s.se * s.se);
            base += normal_log_density(s.y, mu, sd);
            let mut lo_cdf = 0.0;
            let mut row = alloc::vec![0.0; k];
            for (cell, &widx) in part.omega_idx.iter().enumerate() {
                let hi_cdf = if cell < part.breaks.len() {
                    densities::normal_cdf((part.breaks[cell] * s.se - mu) / sd)
                } else {
                    1.0
                };
                row[widx] += (hi_cdf - lo_cdf).max(0.0);
                lo_cdf = hi_cdf;
            }
            probs.extend_from_slice(&row);
        }
        let idx = scratch.insert(ScratchSlot {
            mu_bits: mu.to_bits(),
            tau_bits: tau.to_bits(),
            base_loglik: base,
            probs,
        });
        scratch.slots[idx].as_ref().expect("just inserted")
    }

    /// Log-likelihood at natural parameters. Returns `-inf` for numerically
    /// degenerate selection masses instead of erroring.
    pub fn log_likelihood(&self, theta: &[f64], scratch: &mut Scratch) -> f64 {
        let p = self.unpack(theta);
        if self.is_selection() {
            let k = self.intervals;
            let omegas = p.full_omegas();
            let slot = self.selection_slot(scratch, p.mu, p.tau);
            let mut ll = slot.base_loglik;
            for (j, &count) in self.interval_counts.iter().enumerate() {
                if count > 0.0 {
                    if omegas[j] <= 0.0 {
                        return f64::NEG_INFINITY;
                    }
                    ll += count * ln(omegas[j]);
                }
            }
            for row in slot.probs.chunks_exact(k) {
                let mut mass = 0.0;
                for (j, &pj) in row.iter().enumerate() {
                    mass += omegas[j] * pj;
                }
                if mass < 1e-300 {
                    return f64::NEG_INFINITY;
                }
                ll -= ln(mass);
            }
            ll
        } else {
            let mut ll = 0.0;
            for s in &self.dataset.studies {
                let mean = p.mu + p.slope_se * s.se + p.slope_var * s.se * s.se;
                let sd = sqrt(p.tau * p.tau + s.se * s.se);
                ll += normal_log_density(s.y, mean, sd);
            }
            ll
        }
    }

    /// Joint log prior at natural parameters (`-inf` outside support).
    pub fn log_prior(&self, theta: &[f64]) -> f64 {
        densities::log_prior(self.spec, theta)
    }

    /// Unnormalized log posterior on the unconstrained scale, including the
    /// transform Jacobian. Also returns the natural parameters.
    pub fn log_posterior_unconstrained(
        &self,
        x: &[f64],
        scratch: &mut Scratch,
    ) -> (f64, Vec<f64>) {
        let (theta, log_jac) = self.natural_from_unconstrained(x);
        let lp = self.log_prior(&theta);
        if lp == f64::NEG_INFINITY {
            return (f64::NEG_INFINITY, theta);
        }
        let ll = self.log_likelihood(&theta, scratch);
        (ll + lp + log_jac, theta)
    }

    /// Base log-likelihood and interval probabilities at `(mu, tau)` for
    /// nested evidence integration over the weight block.
    pub fn selection_parts(&self, scratch: &mut Scratch, mu: f64, tau: f64) -> (f64, Vec<f64>) {
        let slot = self.selection_slot(scratch, mu, tau);
        (slot.base_loglik, slot.probs.clone())
    }

    /// Weight-dependent log-likelihood factor given cached probabilities.
    pub fn omega_term(&self, probs: &[f64], free_omegas: &[f64]) -> f64 {
        let k = self.intervals;
        let mut omegas = free_omegas.to_vec();
        omegas.push(1.0);
        let mut t = 0.0;
        for (j, &count) in self.interval_counts.iter().enumerate() {
            if count > 0.0 {
                if omegas[j] <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                t += count * ln(omegas[j]);
            }
        }
        for row in probs.chunks_exact(k) {
            let mut mass = 0.0;
            for (j, &pj) in row.iter().enumerate() {
                mass += omegas[j] * pj;
            }
            if mass < 1e-300 {
                return f64::NEG_INFINITY;
            }
            t -= ln(mass);
        }
        t
    }

    /// Log prior of the weight block alone (constant on its support).
    pub fn omega_prior(&self, free_omegas: &[f64]) -> f64 {
        omega_log_prior(free_omegas, self.intervals)
    }
}
