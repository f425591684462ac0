//! Marginal likelihood estimation, the default model space, posterior
//! model probabilities, inclusion Bayes factors, and mixture draws.
//!
//! Two evidence routes are implemented. Deterministic quadrature integrates
//! likelihood x prior over the unbounded parameters (mode-centered through
//! an algebraic stretch) with the weight block handled by a nested
//! Gauss-Legendre rule over its ordered simplex. Importance sampling uses a
//! moment-matched multivariate Student-t proposal fitted to posterior draws
//! on the unconstrained scale. The pair cross-validates: they must agree on
//! every model, and tests enforce that.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::densities::{half_cauchy_log_density, inv_gamma_log_density, normal_log_density};
use crate::math::{self, exp, ln, log_sum_exp, sqrt};
use crate::mcmc::standard_normal;
use crate::model::{
    BiasComponent, Dataset, Direction, EffectComponent, HalfCauchy, HeterogeneityComponent,
    ModelSpec, PosteriorDraws, Side,
};
use crate::quad;
use crate::target::{PosteriorTarget, Scratch};
use crate::transforms;

/// The averaged ensemble: model specifications with prior probabilities.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelSpace {
    pub specs: Vec<ModelSpec>,
}

/// Ensemble component an inclusion Bayes factor refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Effect,
    Heterogeneity,
    Bias,
}

impl Component {
    pub fn present_in(&self, spec: &ModelSpec) -> bool {
        match self {
            Component::Effect => spec.effect.is_present(),
            Component::Heterogeneity => spec.heterogeneity.is_present(),
            Component::Bias => spec.bias.is_present(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EvidenceError {
    InvalidSpace(String),
    QuadratureNotConverged { last: f64, previous: f64 },
    /// Importance-sampling effective sample size collapsed.
    ImportanceDegenerate { ess_fraction: f64 },
    AllEvidenceVanished,
    OneSidedComponent(Component),
    MissingDraws,
}

impl core::fmt::Display for EvidenceError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            EvidenceError::InvalidSpace(msg) => write!(f, "invalid model space: {msg}"),
            EvidenceError::QuadratureNotConverged { last, previous } => write!(
                f,
                "evidence quadrature did not converge: last {last}, previous {previous} (log scale)"
            ),
            EvidenceError::ImportanceDegenerate { ess_fraction } => write!(
                f,
                "importance sample collapsed: effective fraction {:.4} < 0.005",
                ess_fraction
            ),
            EvidenceError::AllEvidenceVanished => {
                write!(f, "every model evidence is zero; cannot normalize")
            }
            EvidenceError::OneSidedComponent(c) => {
                write!(f, "component {c:?} has models on only one side")
            }
            EvidenceError::MissingDraws => write!(f, "posterior draws required but absent"),
        }
    }
}

impl core::error::Error for EvidenceError {}

impl ModelSpace {
    pub fn new(specs: Vec<ModelSpec>) -> Result<Self, EvidenceError> {
        if specs.is_empty() {
            return Err(EvidenceError::InvalidSpace(String::from("no models")));
        }
        let total: f64 = specs.iter().map(|s| s.prior_prob).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(EvidenceError::InvalidSpace(alloc::format!(
                "prior probabilities sum to {total}, expected 1"
            )));
        }
        if specs.iter().any(|s| s.prior_prob < 0.0) {
            return Err(EvidenceError::InvalidSpace(String::from(
                "negative prior probability",
            )));
        }
        Ok(ModelSpace { specs })
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    /// Prior probability that a component is present.
    pub fn prior_component_prob(&self, c: Component) -> f64 {
        self.specs
            .iter()
            .filter(|s| c.present_in(s))
            .map(|s| s.prior_prob)
            .sum()
    }
}

/// The default 36-model space: {spike, normal effect} x {spike, inv-gamma
/// heterogeneity} x {no bias, six selection functions, PET, PEESE}.
///
/// Half the prior mass is on bias being absent; the other half splits
/// equally between the selection family and the regression family.
pub fn default_model_space() -> ModelSpace {
    let effects = [
        (EffectComponent::Spike, 0.5, "mu0"),
        (EffectComponent::Normal { mean: 0.0, sd: 1.0 }, 0.5, "mu"),
    ];
    let heterogeneities = [
        (HeterogeneityComponent::Spike, 0.5, "tau0"),
        (
            HeterogeneityComponent::InvGamma { shape: 1.0, scale: 0.15 },
            0.5,
            "tau",
        ),
    ];
    let selection_prob = 0.25 / 6.0;
    let regression_prob = 0.25 / 2.0;
    let biases: Vec<(BiasComponent, f64, &str)> = alloc::vec![
        (BiasComponent::None, 0.5, "none"),
        (
            BiasComponent::Selection { side: Side::OneSided, alphas: alloc::vec![0.05] },
            selection_prob,
            "s1",
        ),
        (
            BiasComponent::Selection { side: Side::OneSided, alphas: alloc::vec![0.10, 0.05] },
            selection_prob,
            "s2",
        ),
        (
            BiasComponent::Selection { side: Side::OneSided, alphas: alloc::vec![0.50, 0.05] },
            selection_prob,
            "s3",
        ),
        (
            BiasComponent::Selection {
                side: Side::OneSided,
                alphas: alloc::vec![0.50, 0.10, 0.05],
            },
            selection_prob,
            "s4",
        ),
        (
            BiasComponent::Selection { side: Side::TwoSided, alphas: alloc::vec![0.05] },
            selection_prob,
            "s5",
        ),
        (
            BiasComponent::Selection { side: Side::TwoSided, alphas: alloc::vec![0.10, 0.05] },
            selection_prob,
            "s6",
        ),
        (
            BiasComponent::Pet { slope: HalfCauchy { scale: 1.0 } },
            regression_prob,
            "pet",
        ),
        (
            BiasComponent::Peese { slope: HalfCauchy { scale: 5.0 } },
            regression_prob,
            "peese",
        ),
    ];

    let mut specs = Vec::with_capacity(36);
    for (effect, pe, en) in &effects {
        for (het, ph, hn) in &heterogeneities {
            for (bias, pb, bn) in &biases {
                specs.push(ModelSpec {
                    label: alloc::format!("{en}+{hn}+{bn}"),
                    effect: *effect,
                    heterogeneity: *het,
                    bias: bias.clone(),
                    prior_prob: pe * ph * pb,
                });
            }
        }
    }
    ModelSpace::new(specs).expect("default space is valid")
}

/// Quadrature controls for [`log_marginal_quadrature`].
#[derive(Debug, Clone, Copy)]
pub struct QuadratureOptions {
    pub rel_tol: f64,
    pub max_regions: usize,
    /// Gauss-Legendre points per weight dimension in the nested block.
    pub omega_points: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        QuadratureOptions { rel_tol: 1e-6, max_regions: 4000, omega_points: 20 }
    }
}

/// Splits the unconstrained coordinates of a model into the unbounded block
/// (mu, tau, beta) and the weight block size.
struct DimSplit {
    unbounded: usize,
    omega_free: usize,
}

fn dim_split(spec: &ModelSpec) -> DimSplit {
    let mut unbounded = 0;
    if spec.effect.is_present() {
        unbounded += 1;
    }
    if spec.heterogeneity.is_present() {
        unbounded += 1;
    }
    let omega_free = match &spec.bias {
        BiasComponent::Selection { alphas, .. } => alphas.len(),
        BiasComponent::Pet { .. } | BiasComponent::Peese { .. } => {
            unbounded += 1;
            0
        }
        BiasComponent::None => 0,
    };
    DimSplit { unbounded, omega_free }
}

/// Log-integrand over the unbounded block: likelihood (with the weight
/// block marginalized for selection models) times prior times Jacobians,
/// as a function of unconstrained coordinates `[mu?, log tau?, log beta?]`.
struct OuterIntegrand<'a, 't> {
    target: &'t PosteriorTarget<'a>,
    spec: &'a ModelSpec,
    split: DimSplit,
    omega_nodes: usize,
    scratch: Scratch,
}

impl<'a, 't> OuterIntegrand<'a, 't> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.split.unbounded);
        let mut k = 0;
        let mut log_terms = 0.0;
        let mu = if let EffectComponent::Normal { mean, sd } = self.spec.effect {
            let mu = x[k];
            k += 1;
            log_terms += normal_log_density(mu, mean, sd);
            mu
        } else {
            0.0
        };
        let tau = if let HeterogeneityComponent::InvGamma { shape, scale } =
            self.spec.heterogeneity
        {
            let (tau, jac) = transforms::positive_from_unconstrained(x[k]);
            k += 1;
            log_terms += inv_gamma_log_density(tau, shape, scale) + jac;
            tau
        } else {
            0.0
        };

        match &self.spec.bias {
            BiasComponent::Selection { alphas, .. } => {
                let (base, probs) = self.target.selection_parts(&mut self.scratch, mu, tau);
                let m = alphas.len();
                let intervals = (m + 1) as f64;
                let inner = quad::log_integral_unit_cube(
                    |t| {
                        // Ordered weights from cube coordinates, innermost
                        // first: omega_j = t_j * omega_{j+1}.
                        let mut omegas = alloc::vec![0.0; m];
                        omegas[m - 1] = t[m - 1];
                        for j in (0..m - 1).rev() {
                            omegas[j] = omegas[j + 1] * t[j];
                        }
                        let mut log_jac = 0.0;
                        for (idx, &tv) in t.iter().enumerate().skip(1) {
                            if tv <= 0.0 {
                                return f64::NEG_INFINITY;
                            }
                            log_jac += idx as f64 * ln(tv);
                        }
                        self.target.omega_term(&probs, &omegas) + log_jac
                    },
                    m,
                    self.omega_nodes,
                );
                log_terms + base + math::ln_gamma(intervals) + inner
            }
            BiasComponent::Pet { slope } | BiasComponent::Peese { slope } => {
                let (beta, jac) = transforms::positive_from_unconstrained(x[k]);
                log_terms += half_cauchy_log_density(beta, slope.scale) + jac;
                let theta = self.natural_theta(mu, tau, beta);
                log_terms + self.target.log_likelihood(&theta, &mut self.scratch)
            }
            BiasComponent::None => {
                let theta = self.natural_theta(mu, tau, 0.0);
                log_terms + self.target.log_likelihood(&theta, &mut self.scratch)
            }
        }
    }

    fn natural_theta(&self, mu: f64, tau: f64, beta: f64) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.target.dim());
        if self.spec.effect.is_present() {
            theta.push(mu);
        }
        if self.spec.heterogeneity.is_present() {
            theta.push(tau);
        }
        if matches!(
            self.spec.bias,
            BiasComponent::Pet { .. } | BiasComponent::Peese { .. }
        ) {
            theta.push(beta);
        }
        theta
    }
}

/// Deterministic log marginal likelihood by nested adaptive quadrature.
///
/// Returns `(log evidence, error estimate on the log scale)`.
pub fn log_marginal_quadrature(
    spec: &ModelSpec,
    d: &Dataset,
    direction: Direction,
    opts: &QuadratureOptions,
) -> Result<(f64, f64), EvidenceError> {
    let target = PosteriorTarget::new(spec, d, direction);
    let split = dim_split(spec);
    let mut integrand = OuterIntegrand {
        target: &target,
        spec,
        split: DimSplit { ..dim_split(spec) },
        omega_nodes: opts.omega_points,
        scratch: Scratch::default(),
    };

    if split.unbounded == 0 {
        // Everything is either fixed or handled by the nested rule; the
        // error is bounded by comparing two nested orders.
        let value = integrand.eval(&[]);
        let error = if split.omega_free > 0 {
            let mut coarse = OuterIntegrand {
                target: &target,
                spec,
                split: DimSplit { ..dim_split(spec) },
                omega_nodes: (opts.omega_points / 2).max(8),
                scratch: Scratch::default(),
            };
            (value - coarse.eval(&[])).abs()
        } else {
            0.0
        };
        return Ok((value, error));
    }

    // Center the unbounded block on its mode and rescale by curvature.
    let center_full = target.prior_center_unconstrained();
    let start: Vec<f64> = match &spec.bias {
        // Unbounded coordinates come first for selection models ...
        BiasComponent::Selection { .. } => center_full[..split.unbounded].to_vec(),
        // ... and are the whole vector otherwise.
        _ => center_full.clone(),
    };
    let steps = alloc::vec![0.5; split.unbounded];
    let (mode, g_max) = quad::nelder_mead_max(
        |x| integrand.eval(x),
        &start,
        &steps,
        250 * split.unbounded,
    );
    if !g_max.is_finite() {
        return Err(EvidenceError::QuadratureNotConverged {
            last: g_max,
            previous: f64::NEG_INFINITY,
        });
    }
    let scales = quad::curvature_scales(|x| integrand.eval(x), &mode, 1.0);

    let map_eval = |integrand: &mut OuterIntegrand<'_, '_>, t: &[f64]| -> f64 {
        let mut x = alloc::vec![0.0; t.len()];
        let mut log_jac = 0.0;
        for (i, &ti) in t.iter().enumerate() {
            let (xi, jac) = quad::unbounded_map(ti, mode[i], 3.0 * scales[i]);
            x[i] = xi;
            log_jac += ln(jac);
        }
        let g = integrand.eval(&x);
        if g == f64::NEG_INFINITY {
            0.0
        } else {
            exp(g - g_max + log_jac)
        }
    };

    let result = if split.unbounded == 1 {
        quad::integrate_1d(
            |t| map_eval(&mut integrand, &[t]),
            -1.0,
            1.0,
            opts.rel_tol,
            0.0,
            opts.max_regions,
        )
    } else {
        let lower = alloc::vec![-1.0; split.unbounded];
        let upper = alloc::vec![1.0; split.unbounded];
        quad::integrate_nd(
            |t| map_eval(&mut integrand, t),
            &lower,
            &upper,
            opts.rel_tol,
            0.0,
            opts.max_regions,
        )
    };

    match result {
        Ok(r) => {
            if r.value <= 0.0 {
                return Err(EvidenceError::QuadratureNotConverged {
                    last: f64::NEG_INFINITY,
                    previous: g_max,
                });
            }
            Ok((g_max + ln(r.value), r.error / r.value))
        }
        Err(quad::QuadError::NotConverged { last, previous }) => {
            Err(EvidenceError::QuadratureNotConverged {
                last: if last > 0.0 { g_max + ln(last) } else { f64::NEG_INFINITY },
                previous: if previous > 0.0 {
                    g_max + ln(previous)
                } else {
                    f64::NEG_INFINITY
                },
            })
        }
    }
}

/// Importance-sampling controls.
#[derive(Debug, Clone, Copy)]
pub struct ImportanceOptions {
    pub proposal_draws: usize,
    /// Student-t degrees of freedom (integer so the chi-square mixing
    /// variable is a plain sum of squared normals).
    pub df: u32,
    /// Substream seed; derived from the draws' seed when absent.
    pub seed: Option<u64>,
}

impl Default for ImportanceOptions {
    fn default() -> Self {
        ImportanceOptions { proposal_draws: 10_000, df: 5, seed: None }
    }
}

/// Importance-sampling evidence estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceEstimate {
    pub log_ml: f64,
    /// Monte Carlo standard error on the log scale (0 for exact results).
    pub se: f64,
    pub warnings: Vec<String>,
}

/// Lower-triangular Cholesky factor with progressive ridge on failure.
fn cholesky(mut a: Vec<f64>, d: usize) -> Vec<f64> {
    let base: f64 = (0..d).map(|i| a[i * d + i]).fold(0.0, f64::max);
    let mut ridge = 1e-12 * base.max(1e-8);
    loop {
        let mut l = alloc::vec![0.0; d * d];
        let mut ok = true;
        'outer: for i in 0..d {
            for j in 0..=i {
                let mut sum = a[i * d + j];
                for k in 0..j {
                    sum -= l[i * d + k] * l[j * d + k];
                }
                if i == j {
                    if sum <= 0.0 {
                        ok = false;
                        break 'outer;
                    }
                    l[i * d + i] = sqrt(sum);
                } else {
                    l[i * d + j] = sum / l[j * d + j];
                }
            }
        }
        if ok {
            return l;
        }
        for i in 0..d {
            a[i * d + i] += ridge;
        }
        ridge *= 10.0;
    }
}

/// Solves `L v = b` for lower-triangular `L`.
fn forward_solve(l: &[f64], d: usize, b: &[f64]) -> Vec<f64> {
    let mut v = alloc::vec![0.0; d];
    for i in 0..d {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * d + k] * v[k];
        }
        v[i] = sum / l[i * d + i];
    }
    v
}

/// Log marginal likelihood by importance sampling with a moment-matched
/// multivariate Student-t proposal on the unconstrained scale.
pub fn log_marginal_importance(
    spec: &ModelSpec,
    d: &Dataset,
    draws: &PosteriorDraws,
    direction: Direction,
    opts: &ImportanceOptions,
) -> Result<EvidenceEstimate, EvidenceError> {
    let target = PosteriorTarget::new(spec, d, direction);
    let dim = target.dim();
    let mut scratch = Scratch::default();
    if dim == 0 {
        let ll = target.log_likelihood(&[], &mut scratch);
        return Ok(EvidenceEstimate { log_ml: ll, se: 0.0, warnings: Vec::new() });
    }
    if draws.rows == 0 {
        return Err(EvidenceError::MissingDraws);
    }

    // Moment-match the proposal to the draws on the unconstrained scale.
    let rows = draws.rows;
    let mut unconstrained = Vec::with_capacity(rows * dim);
    for r in 0..rows {
        let x = target.unconstrained_from_natural(draws.row(r));
        unconstrained.extend_from_slice(&x);
    }
    let mut mean = alloc::vec![0.0; dim];
    for r in 0..rows {
        for c in 0..dim {
            mean[c] += unconstrained[r * dim + c] / rows as f64;
        }
    }
    let mut cov = alloc::vec![0.0; dim * dim];
    for r in 0..rows {
        for i in 0..dim {
            let di = unconstrained[r * dim + i] - mean[i];
            for j in 0..=i {
                let dj = unconstrained[r * dim + j] - mean[j];
                cov[i * dim + j] += di * dj / (rows - 1).max(1) as f64;
            }
        }
    }
    for i in 0..dim {
        for j in 0..i {
            cov[j * dim + i] = cov[i * dim + j];
        }
    }
    // Student-t with df nu and shape Sigma has covariance Sigma * nu/(nu-2);
    // match the posterior covariance by shrinking the shape.
    let df = opts.df.max(3) as f64;
    let shrink = (df - 2.0) / df;
    for v in cov.iter_mut() {
        *v *= shrink;
    }
    let l = cholesky(cov, dim);
    let log_det_l: f64 = (0..dim).map(|i| ln(l[i * dim + i])).sum();
    let log_norm = math::ln_gamma((df + dim as f64) / 2.0)
        - math::ln_gamma(df / 2.0)
        - 0.5 * dim as f64 * ln(df * core::f64::consts::PI)
        - log_det_l;

    let seed = opts
        .seed
        .unwrap_or_else(|| math::derive_seed(draws.seed, 0xD15C_0DE5));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m_draws = opts.proposal_draws.max(100);
    let mut log_w = Vec::with_capacity(m_draws);
    let mut z = alloc::vec![0.0; dim];
    for _ in 0..m_draws {
        for zi in z.iter_mut() {
            *zi = standard_normal(&mut rng);
        }
        let mut chi2 = 0.0;
        for _ in 0..opts.df.max(3) {
            let g = standard_normal(&mut rng);
            chi2 += g * g;
        }
        let t_scale = sqrt(df / chi2);
        let mut x = mean.clone();
        for i in 0..dim {
            let mut acc = 0.0;
            for k in 0..=i {
                acc += l[i * dim + k] * z[k];
            }
            x[i] += acc * t_scale;
        }
        // Proposal log-density.
        let centered: Vec<f64> = x.iter().zip(&mean).map(|(&a, &b)| a - b).collect();
        let v = forward_solve(&l, dim, &centered);
        let quad_form: f64 = v.iter().map(|&vi| vi * vi).sum();
        let log_q = log_norm - 0.5 * (df + dim as f64) * math::ln_1p(quad_form / df);
        let (log_post, _) = target.log_posterior_unconstrained(&x, &mut scratch);
        log_w.push(if log_post.is_finite() { log_post - log_q } else { f64::NEG_INFINITY });
    }

    let lse = log_sum_exp(&log_w);
    if !lse.is_finite() {
        return Err(EvidenceError::ImportanceDegenerate { ess_fraction: 0.0 });
    }
    let log_ml = lse - ln(m_draws as f64);
    let double: Vec<f64> = log_w.iter().map(|&w| 2.0 * w).collect();
    let lse2 = log_sum_exp(&double);
    // Effective sample size of the weights and the delta-method SE of the
    // log evidence.
    let ess = exp(2.0 * lse - lse2);
    let ess_fraction = ess / m_draws as f64;
    if ess_fraction < 0.005 {
        return Err(EvidenceError::ImportanceDegenerate { ess_fraction });
    }
    let mut warnings = Vec::new();
    if ess_fraction < 0.05 {
        warnings.push(alloc::format!(
            "importance sample effective fraction {:.3} < 0.05; evidence may be noisy",
            ess_fraction
        ));
    }
    let rel_var = exp(lse2 - 2.0 * lse) - 1.0 / m_draws as f64;
    let se = sqrt(rel_var.max(0.0));
    Ok(EvidenceEstimate { log_ml, se, warnings })
}

/// Evidence strategy used by fits: quadrature when at most two parameters
/// are free, importance sampling otherwise, with an importance fallback if
/// refinement stalls.
pub fn estimate_log_ml(
    spec: &ModelSpec,
    d: &Dataset,
    draws: &PosteriorDraws,
    direction: Direction,
) -> Result<(EvidenceEstimate, &'static str), EvidenceError> {
    if spec.free_params() <= 2 {
        match log_marginal_quadrature(spec, d, direction, &QuadratureOptions::default()) {
            Ok((log_ml, err)) => {
                return Ok((
                    EvidenceEstimate { log_ml, se: err, warnings: Vec::new() },
                    "quadrature",
                ));
            }
            Err(EvidenceError::QuadratureNotConverged { last, previous }) => {
                let mut est = log_marginal_importance(
                    spec,
                    d,
                    draws,
                    direction,
                    &ImportanceOptions::default(),
                )?;
                est.warnings.push(alloc::format!(
                    "quadrature stalled (last {last:.6}, previous {previous:.6}); fell back to importance sampling"
                ));
                return Ok((est, "importance"));
            }
            Err(e) => return Err(e),
        }
    }
    let est = log_marginal_importance(spec, d, draws, direction, &ImportanceOptions::default())?;
    Ok((est, "importance"))
}

/// Posterior model probabilities from log evidences, via Bayes rule on the
/// log scale.
pub fn posterior_model_probs(
    space: &ModelSpace,
    log_mls: &[f64],
) -> Result<Vec<f64>, EvidenceError> {
    assert_eq!(space.len(), log_mls.len());
    let joint: Vec<f64> = space
        .specs
        .iter()
        .zip(log_mls)
        .map(|(s, &ml)| {
            if s.prior_prob > 0.0 {
                ln(s.prior_prob) + ml
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let norm = log_sum_exp(&joint);
    if !norm.is_finite() {
        return Err(EvidenceError::AllEvidenceVanished);
    }
    Ok(joint.iter().map(|&j| exp(j - norm)).collect())
}

/// Inclusion Bayes factor of a component: posterior odds over prior odds.
///
/// Returns `+inf` when the posterior mass on the "absent" side is exactly
/// zero and `0` in the mirrored case.
pub fn inclusion_bf(
    space: &ModelSpace,
    posterior_probs: &[f64],
    component: Component,
) -> Result<f64, EvidenceError> {
    assert_eq!(space.len(), posterior_probs.len());
    let prior_in = space.prior_component_prob(component);
    let prior_out = 1.0 - prior_in;
    if prior_in <= 0.0 || prior_out <= 0.0 {
        return Err(EvidenceError::OneSidedComponent(component));
    }
    let post_in: f64 = space
        .specs
        .iter()
        .zip(posterior_probs)
        .filter(|(s, _)| component.present_in(s))
        .map(|(_, &p)| p)
        .sum();
    let post_out = (1.0 - post_in).max(0.0);
    let prior_odds = prior_in / prior_out;
    if post_out == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((post_in / post_out) / prior_odds)
}

/// One draw from the model-averaged posterior: the originating model index
/// and its natural parameters (spikes contribute exact zeros).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnsembleDraw {
    pub model: usize,
    pub mu: f64,
    pub tau: f64,
    pub slope_se: f64,
    pub slope_var: f64,
    /// Free selection weights (empty for non-selection models).
    pub free_omegas: Vec<f64>,
}

/// Resamples `count` draws from the posterior-probability-weighted mixture
/// of per-model posteriors.
pub fn model_averaged_draws(
    space: &ModelSpace,
    fits: &[PosteriorDraws],
    probs: &[f64],
    count: usize,
    seed: u64,
) -> Vec<EnsembleDraw> {
    assert_eq!(space.len(), fits.len());
    assert_eq!(space.len(), probs.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut model = space.len() - 1;
        for (k, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                model = k;
                break;
            }
        }
        let spec = &space.specs[model];
        let draws = &fits[model];
        let theta: Vec<f64> = if draws.rows > 0 {
            let row = rng.random_range(0..draws.rows);
            draws.row(row).to_vec()
        } else {
            Vec::new()
        };
        let mut k = 0;
        let mu = if spec.effect.is_present() {
            k += 1;
            theta[k - 1]
        } else {
            0.0
        };
        let tau = if spec.heterogeneity.is_present() {
            k += 1;
            theta[k - 1]
        } else {
            0.0
        };
        let mut slope_se = 0.0;
        let mut slope_var = 0.0;
        let mut free_omegas = Vec::new();
        match &spec.bias {
            BiasComponent::None => {}
            BiasComponent::Selection { alphas, .. } => {
                free_omegas = theta[k..k + alphas.len()].to_vec();
            }
            BiasComponent::Pet { .. } => slope_se = theta[k],
            BiasComponent::Peese { .. } => slope_var = theta[k],
        }
        out.push(EnsembleDraw { model, mu, tau, slope_se, slope_var, free_omegas });
    }
    out
}

/// Renormalizes posterior probabilities over the models where `keep` holds;
/// `None` when that set carries no mass.
pub fn conditional_probs(
    space: &ModelSpace,
    probs: &[f64],
    keep: impl Fn(&ModelSpec) -> bool,
) -> Option<Vec<f64>> {
    let total: f64 = space
        .specs
        .iter()
        .zip(probs)
        .filter(|(s, _)| keep(s))
        .map(|(_, &p)| p)
        .sum();
    if total <= 0.0 {
        return None;
    }
    Some(
        space
            .specs
            .iter()
            .zip(probs)
            .map(|(s, &p)| if keep(s) { p / total } else { 0.0 })
            .collect(),
    )
}
