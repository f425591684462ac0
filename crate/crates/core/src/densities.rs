//! Log-densities, weight functions, selection normalizing constants, and
//! priors.
//!
//! The normal CDF is computed from `libm`'s erfc (rational approximation,
//! absolute error well below 1e-12); the quantile uses Acklam's rational
//! approximation polished by one Newton step, so CDF and quantile are
//! mutual inverses to ~1e-13.

use alloc::vec::Vec;

use crate::math::{self, erfc, exp, ln, sqrt, LN_SQRT_2PI, SQRT_2};
use crate::model::{
    BiasComponent, Direction, EffectComponent, HalfCauchy, HeterogeneityComponent, ModelSpec,
    Side, WeightFunction,
};

/// Mean and standard deviation of a per-study marginal normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalParams {
    pub mean: f64,
    pub sd: f64,
}

impl NormalParams {
    pub fn new(mean: f64, sd: f64) -> Result<Self, DensityError> {
        if !mean.is_finite() || !sd.is_finite() || sd <= 0.0 {
            return Err(DensityError::InvalidNormalParams { mean, sd });
        }
        Ok(NormalParams { mean, sd })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DensityError {
    InvalidNormalParams { mean: f64, sd: f64 },
    InvalidStandardError(f64),
    NegativeHeterogeneity(f64),
    QuantileDomain(f64),
    SelectionMassUnderflow { mu: f64, tau: f64, se: f64 },
}

impl core::fmt::Display for DensityError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            DensityError::InvalidNormalParams { mean, sd } => {
                write!(f, "invalid normal parameters mean={mean}, sd={sd}")
            }
            DensityError::InvalidStandardError(se) => {
                write!(f, "standard error must be positive and finite, got {se}")
            }
            DensityError::NegativeHeterogeneity(tau) => {
                write!(f, "heterogeneity must be nonnegative and finite, got {tau}")
            }
            DensityError::QuantileDomain(p) => {
                write!(f, "normal quantile requires p in (0, 1), got {p}")
            }
            DensityError::SelectionMassUnderflow { mu, tau, se } => write!(
                f,
                "selection normalizing constant underflowed at mu={mu}, tau={tau}, se={se}"
            ),
        }
    }
}

impl core::error::Error for DensityError {}

/// Standard normal density.
#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    exp(-0.5 * x * x - LN_SQRT_2PI)
}

/// Standard normal log-density.
#[inline]
pub fn normal_log_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Standard normal CDF via erfc.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal upper-tail probability.
#[inline]
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// Standard normal quantile: Acklam's rational approximation with one
/// Newton polish step against [`normal_cdf`].
pub fn normal_quantile(p: f64) -> Result<f64, DensityError> {
    if !(p.is_finite() && p > 0.0 && p < 1.0) {
        return Err(DensityError::QuantileDomain(p));
    }
    // Work on the lower half; the upper half follows by symmetry.
    if p > 0.5 {
        return Ok(-normal_quantile(1.0 - p)?);
    }

    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    let x = if p < P_LOW {
        let q = sqrt(-2.0 * ln(p));
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };

    let pdf = normal_pdf(x);
    if pdf > 0.0 {
        Ok(x - (normal_cdf(x) - p) / pdf)
    } else {
        Ok(x)
    }
}

/// Log-density of the random-effects marginal `Normal(y | mu, tau^2 + se^2)`.
pub fn re_log_density(y: f64, se: f64, mu: f64, tau: f64) -> Result<f64, DensityError> {
    if !se.is_finite() || se <= 0.0 {
        return Err(DensityError::InvalidStandardError(se));
    }
    if !tau.is_finite() || tau < 0.0 {
        return Err(DensityError::NegativeHeterogeneity(tau));
    }
    if !y.is_finite() || !mu.is_finite() {
        return Err(DensityError::InvalidNormalParams { mean: mu, sd: tau });
    }
    let var = tau * tau + se * se;
    let resid = y - mu;
    Ok(-0.5 * ln(var) - LN_SQRT_2PI - 0.5 * resid * resid / var)
}

/// Marginal distribution of one study given the effect, an optional
/// small-study slope on `se` or `se^2`, and heterogeneity.
pub fn study_marginal(
    mu: f64,
    slope_se: f64,
    slope_var: f64,
    tau: f64,
    se: f64,
) -> NormalParams {
    NormalParams {
        mean: mu + slope_se * se + slope_var * se * se,
        sd: sqrt(tau * tau + se * se),
    }
}

/// Partition of the z-axis induced by a weight function: `breaks` are the
/// ascending cell boundaries and `omega_idx[j]` is the weight index of the
/// cell between `breaks[j-1]` and `breaks[j]` (with open outer cells).
#[derive(Debug, Clone, PartialEq)]
pub struct ZPartition {
    pub breaks: Vec<f64>,
    pub omega_idx: Vec<usize>,
}

impl ZPartition {
    /// Builds the partition for a weight function, optionally flipped for a
    /// negative expected direction.
    pub fn new(wf: &WeightFunction, direction: Direction) -> Self {
        let m = wf.alphas.len();
        let mut breaks = Vec::new();
        let mut omega_idx = Vec::new();
        match wf.side {
            Side::OneSided => {
                // Threshold for p <= alpha on the upper tail.
                for &a in &wf.alphas {
                    breaks.push(normal_quantile(1.0 - a).expect("alpha in (0,1)"));
                }
                for j in 0..=m {
                    omega_idx.push(j);
                }
            }
            Side::TwoSided => {
                let uppers: Vec<f64> = wf
                    .alphas
                    .iter()
                    .map(|&a| normal_quantile(1.0 - a / 2.0).expect("alpha in (0,1)"))
                    .collect();
                for &u in uppers.iter().rev() {
                    breaks.push(-u);
                }
                breaks.extend(uppers.iter().copied());
                for j in (1..=m).rev() {
                    omega_idx.push(j);
                }
                omega_idx.push(0);
                for j in 1..=m {
                    omega_idx.push(j);
                }
            }
        }
        if matches!(direction, Direction::Negative) {
            breaks.reverse();
            for b in breaks.iter_mut() {
                *b = -*b;
            }
            omega_idx.reverse();
        }
        ZPartition { breaks, omega_idx }
    }

    /// Weight index of the cell containing `z` (boundaries belong to the
    /// cell on their significant side).
    pub fn index_at(&self, z: f64, wf: &WeightFunction, direction: Direction) -> usize {
        let zs = direction.sign() * z;
        match wf.side {
            Side::OneSided => {
                let mut count = 0;
                for &a in &wf.alphas {
                    let t = normal_quantile(1.0 - a).expect("alpha in (0,1)");
                    if zs >= t {
                        count += 1;
                    }
                }
                count
            }
            Side::TwoSided => {
                let az = zs.abs();
                let mut count = 0;
                for &a in &wf.alphas {
                    let u = normal_quantile(1.0 - a / 2.0).expect("alpha in (0,1)");
                    if az >= u {
                        count += 1;
                    }
                }
                count
            }
        }
    }
}

/// Weight assigned to a z-statistic by the step weight function.
pub fn weight_at(wf: &WeightFunction, z: f64) -> f64 {
    weight_at_dir(wf, z, Direction::Positive)
}

/// Directional variant of [`weight_at`]; the dataset-level expected
/// direction flips z before one- and two-sided interval lookup.
pub fn weight_at_dir(wf: &WeightFunction, z: f64, direction: Direction) -> f64 {
    if wf.alphas.is_empty() {
        return 1.0;
    }
    let part = ZPartition::new(wf, direction);
    wf.omegas[part.index_at(z, wf, direction)]
}

/// z thresholds induced by the cutpoints, ascending and deduplicated.
pub fn z_cutpoints(wf: &WeightFunction) -> Vec<f64> {
    let mut breaks = ZPartition::new(wf, Direction::Positive).breaks;
    breaks.sort_by(|a, b| a.total_cmp(b));
    breaks.dedup();
    breaks
}

/// Probability that a `Normal(mean, sd)` variate falls in `(a, b)`.
#[inline]
fn normal_interval_prob(a: f64, b: f64, mean: f64, sd: f64) -> f64 {
    let lo = if a == f64::NEG_INFINITY {
        0.0
    } else {
        normal_cdf((a - mean) / sd)
    };
    let hi = if b == f64::INFINITY {
        1.0
    } else {
        normal_cdf((b - mean) / sd)
    };
    (hi - lo).max(0.0)
}

/// Expected publication weight ("survival fraction") of one study under a
/// selection model: the normalizing constant of the weighted-normal density.
pub fn selection_integral_i(
    mu: f64,
    tau: f64,
    wf: &WeightFunction,
    se: f64,
) -> Result<f64, DensityError> {
    selection_integral_i_dir(mu, tau, wf, se, Direction::Positive)
}

/// Directional variant of [`selection_integral_i`].
pub fn selection_integral_i_dir(
    mu: f64,
    tau: f64,
    wf: &WeightFunction,
    se: f64,
    direction: Direction,
) -> Result<f64, DensityError> {
    if !se.is_finite() || se <= 0.0 {
        return Err(DensityError::InvalidStandardError(se));
    }
    if !tau.is_finite() || tau < 0.0 {
        return Err(DensityError::NegativeHeterogeneity(tau));
    }
    if wf.alphas.is_empty() {
        return Ok(1.0);
    }
    let part = ZPartition::new(wf, direction);
    let sd = sqrt(tau * tau + se * se);
    Ok(selection_integral_from_partition(
        mu, sd, se, &part, &wf.omegas,
    ))
}

/// Core of the selection integral given a precomputed partition; `sd` is
/// the total marginal standard deviation.
pub fn selection_integral_from_partition(
    mean: f64,
    sd: f64,
    se: f64,
    part: &ZPartition,
    omegas: &[f64],
) -> f64 {
    let mut total = 0.0;
    let mut lo = f64::NEG_INFINITY;
    for (cell, &idx) in part.omega_idx.iter().enumerate() {
        let hi = if cell < part.breaks.len() {
            part.breaks[cell] * se
        } else {
            f64::INFINITY
        };
        total += omegas[idx] * normal_interval_prob(lo, hi, mean, sd);
        lo = hi;
    }
    total.min(1.0)
}

/// Log-density of the weighted normal:
/// `Normal(y | mu, tau^2 + se^2) * w(omega, y/se) / I`.
pub fn weighted_normal_log_density(
    y: f64,
    se: f64,
    mu: f64,
    tau: f64,
    wf: &WeightFunction,
) -> Result<f64, DensityError> {
    weighted_normal_log_density_dir(y, se, mu, tau, wf, Direction::Positive)
}

/// Directional variant of [`weighted_normal_log_density`].
pub fn weighted_normal_log_density_dir(
    y: f64,
    se: f64,
    mu: f64,
    tau: f64,
    wf: &WeightFunction,
    direction: Direction,
) -> Result<f64, DensityError> {
    let base = re_log_density(y, se, mu, tau)?;
    if wf.alphas.is_empty() {
        return Ok(base);
    }
    let i = selection_integral_i_dir(mu, tau, wf, se, direction)?;
    if i < 1e-300 {
        return Err(DensityError::SelectionMassUnderflow { mu, tau, se });
    }
    let w = weight_at_dir(wf, y / se, direction);
    Ok(base + ln(w) - ln(i))
}

/// Log-density of `Normal(mean, sd)` at `x`.
pub fn normal_log_density(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - LN_SQRT_2PI - ln(sd)
}

/// Log-density of `InvGamma(shape, scale)` at `x` (zero outside support).
pub fn inv_gamma_log_density(x: f64, shape: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * ln(scale) - math::ln_gamma(shape) - (shape + 1.0) * ln(x) - scale / x
}

/// Log-density of a half-Cauchy (Cauchy truncated to `[0, inf)`).
pub fn half_cauchy_log_density(x: f64, scale: f64) -> f64 {
    if x < 0.0 {
        return f64::NEG_INFINITY;
    }
    let r = x / scale;
    ln(2.0) - ln(core::f64::consts::PI * scale) - math::ln_1p(r * r)
}

/// Log prior density of the free weight components under the cumulative
/// Dirichlet(1, ..., 1) construction: constant `ln (K-1)!` on the ordered
/// region, `-inf` outside.
pub fn omega_log_prior(free_omegas: &[f64], intervals: usize) -> f64 {
    debug_assert_eq!(free_omegas.len() + 1, intervals);
    let mut prev = 0.0;
    for &w in free_omegas {
        if !(w > 0.0 && w <= 1.0) || w < prev {
            return f64::NEG_INFINITY;
        }
        prev = w;
    }
    math::ln_gamma(intervals as f64)
}

/// Joint log prior of a model's free parameters, in [`ModelSpec::param_names`]
/// order. Out-of-support values yield `-inf` rather than an error.
pub fn log_prior(spec: &ModelSpec, theta: &[f64]) -> f64 {
    debug_assert_eq!(theta.len(), spec.free_params());
    let mut lp = 0.0;
    let mut k = 0;
    if let EffectComponent::Normal { mean, sd } = spec.effect {
        lp += normal_log_density(theta[k], mean, sd);
        k += 1;
    }
    if let HeterogeneityComponent::InvGamma { shape, scale } = spec.heterogeneity {
        lp += inv_gamma_log_density(theta[k], shape, scale);
        k += 1;
    }
    match &spec.bias {
        BiasComponent::None => {}
        BiasComponent::Selection { alphas, .. } => {
            lp += omega_log_prior(&theta[k..k + alphas.len()], alphas.len() + 1);
        }
        BiasComponent::Pet { slope: HalfCauchy { scale } }
        | BiasComponent::Peese { slope: HalfCauchy { scale } } => {
            lp += half_cauchy_log_density(theta[k], *scale);
        }
    }
    lp
}
