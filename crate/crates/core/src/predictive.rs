//! Posterior predictive z-statistic densities, their extrapolation to the
//! absence of publication bias, pointwise bands, and the derived
//! publication-bias summaries (EDR, FDR, expected missing studies).
//!
//! A fitted predictive density aggregates one predicted study per observed
//! study: for draw theta and grid point z,
//! `(1/N) sum_i se_i * pi(se_i z | theta, se_i)`, which is the change of
//! variables from effect sizes to z-statistics applied per observed
//! standard error.
//!
//! Extrapolation removes the selection step function and divides by the
//! survival fraction `I`, so the extrapolated curve dominates the fitted
//! one and integrates to `mean_i(1/I_i) >= 1`; PET/PEESE draws instead
//! zero their small-study slope. The printed-convention alternative
//! (multiplying by `I` and reporting `N(1-I)` missing studies) remains
//! available as [`ExtrapolationScaling::Direct`].

use alloc::vec::Vec;

use crate::densities::{normal_cdf, selection_integral_i_dir, DensityError};
use crate::math::{self, exp, sqrt, LN_SQRT_2PI};
use crate::evidence::{EnsembleDraw, ModelSpace};
use crate::model::{
    BiasComponent, BiasMetrics, CurveBand, Dataset, Direction, Interval, PredictiveCurve,
    WeightFunction,
};

/// Evaluation grid and band level for predictive curves.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridConfig {
    pub z_min: f64,
    pub z_max: f64,
    pub points: usize,
    pub band_level: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { z_min: -6.0, z_max: 6.0, points: 601, band_level: 0.95 }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<(), PredictiveError> {
        if !(self.z_min < self.z_max) {
            return Err(PredictiveError::InvalidGrid("z_min must be below z_max"));
        }
        if self.points < 51 {
            return Err(PredictiveError::InvalidGrid("need at least 51 grid points"));
        }
        if !(self.band_level > 0.0 && self.band_level < 1.0) {
            return Err(PredictiveError::InvalidGrid("band level must be in (0,1)"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        let step = (self.z_max - self.z_min) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.z_min + i as f64 * step).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PredictiveError {
    InvalidGrid(&'static str),
    NoDraws,
    /// A selection draw produced a survival fraction too close to zero.
    PathologicalWeights { draw: usize, survival: f64 },
    Density(DensityError),
}

impl core::fmt::Display for PredictiveError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            PredictiveError::InvalidGrid(msg) => write!(f, "invalid grid: {msg}"),
            PredictiveError::NoDraws => write!(f, "no posterior draws supplied"),
            PredictiveError::PathologicalWeights { draw, survival } => write!(
                f,
                "draw {draw}: selection survival fraction {survival:.3e} below 1e-10"
            ),
            PredictiveError::Density(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for PredictiveError {}

impl From<DensityError> for PredictiveError {
    fn from(e: DensityError) -> Self {
        PredictiveError::Density(e)
    }
}

/// Convention for undoing the selection step when extrapolating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExtrapolationScaling {
    /// Divide the unweighted density by the survival fraction and report
    /// `N (1 - I) / I` missing studies.
    #[default]
    Inverse,
    /// Multiply by the survival fraction and report `N (1 - I)`.
    Direct,
}

/// One posterior draw in predictive form, independent of which model
/// produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDraw {
    pub mu: f64,
    pub tau: f64,
    pub slope_se: f64,
    pub slope_var: f64,
    /// Concrete step weights for selection draws.
    pub weights: Option<WeightFunction>,
}

impl PredictiveDraw {
    pub fn random_effects(mu: f64, tau: f64) -> Self {
        PredictiveDraw { mu, tau, slope_se: 0.0, slope_var: 0.0, weights: None }
    }

    /// Resolves an ensemble draw against its model space.
    pub fn from_ensemble(draw: &EnsembleDraw, space: &ModelSpace) -> Self {
        let spec = &space.specs[draw.model];
        let weights = match &spec.bias {
            BiasComponent::Selection { side, alphas } => {
                let mut omegas = draw.free_omegas.clone();
                omegas.push(1.0);
                Some(WeightFunction { side: *side, alphas: alphas.clone(), omegas })
            }
            _ => None,
        };
        PredictiveDraw {
            mu: draw.mu,
            tau: draw.tau,
            slope_se: draw.slope_se,
            slope_var: draw.slope_var,
            weights,
        }
    }
}

/// Row-major per-draw density values over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub values: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl DensityMatrix {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    /// Pointwise mean over draws.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = alloc::vec![0.0; self.cols];
        for r in 0..self.rows {
            for (mi, &v) in m.iter_mut().zip(self.row(r)) {
                *mi += v / self.rows as f64;
            }
        }
        m
    }
}

/// Weight index of each grid point under a weight function, shared across
/// draws with the same cutpoints.
struct GridWeights {
    side_sig: u8,
    alphas_sig: Vec<u64>,
    idx: Vec<usize>,
}

fn grid_weight_indices<'c>(
    cache: &'c mut Vec<GridWeights>,
    wf: &WeightFunction,
    grid: &[f64],
    direction: Direction,
) -> &'c [usize] {
    let side_sig = match wf.side {
        crate::model::Side::OneSided => 0u8,
        crate::model::Side::TwoSided => 1u8,
    } | if matches!(direction, Direction::Negative) { 2 } else { 0 };
    let alphas_sig: Vec<u64> = wf.alphas.iter().map(|a| a.to_bits()).collect();
    if let Some(pos) = cache
        .iter()
        .position(|g| g.side_sig == side_sig && g.alphas_sig == alphas_sig)
    {
        return &cache[pos].idx;
    }
    let part = crate::densities::ZPartition::new(wf, direction);
    let idx: Vec<usize> = grid
        .iter()
        .map(|&z| part.index_at(z, wf, direction))
        .collect();
    cache.push(GridWeights { side_sig, alphas_sig, idx });
    &cache.last().expect("just pushed").idx
}

fn accumulate_draw_density(
    row: &mut [f64],
    grid: &[f64],
    draw: &PredictiveDraw,
    d: &Dataset,
    direction: Direction,
    extrapolate: bool,
    scaling: ExtrapolationScaling,
    weight_cache: &mut Vec<GridWeights>,
    draw_idx: usize,
) -> Result<(), PredictiveError> {
    let n = d.len() as f64;
    let windex: Option<Vec<usize>> = match (&draw.weights, extrapolate) {
        (Some(wf), false) => {
            Some(grid_weight_indices(weight_cache, wf, grid, direction).to_vec())
        }
        _ => None,
    };
    for s in &d.studies {
        let (slope_se, slope_var) = if extrapolate {
            (0.0, 0.0)
        } else {
            (draw.slope_se, draw.slope_var)
        };
        let mean_y = draw.mu + slope_se * s.se + slope_var * s.se * s.se;
        let m = mean_y / s.se;
        let sd = sqrt(draw.tau * draw.tau + s.se * s.se) / s.se;
        let scale = match &draw.weights {
            Some(wf) => {
                let i = selection_integral_i_dir(draw.mu, draw.tau, wf, s.se, direction)?;
                if i < 1e-10 {
                    return Err(PredictiveError::PathologicalWeights {
                        draw: draw_idx,
                        survival: i,
                    });
                }
                if extrapolate {
                    match scaling {
                        ExtrapolationScaling::Inverse => 1.0 / i,
                        ExtrapolationScaling::Direct => i,
                    }
                } else {
                    1.0 / i
                }
            }
            None => 1.0,
        };
        let c = scale / (sd * n);
        match (&draw.weights, &windex) {
            (Some(wf), Some(idx)) => {
                for ((ri, &z), &wi) in row.iter_mut().zip(grid).zip(idx) {
                    let t = (z - m) / sd;
                    *ri += wf.omegas[wi] * c * exp(-0.5 * t * t - LN_SQRT_2PI);
                }
            }
            _ => {
                for (ri, &z) in row.iter_mut().zip(grid) {
                    let t = (z - m) / sd;
                    *ri += c * exp(-0.5 * t * t - LN_SQRT_2PI);
                }
            }
        }
    }
    Ok(())
}

/// Per-draw fitted predictive z-density over the grid.
pub fn fitted_z_density(
    draws: &[PredictiveDraw],
    d: &Dataset,
    grid: &[f64],
    direction: Direction,
) -> Result<DensityMatrix, PredictiveError> {
    density_matrix(draws, d, grid, direction, false, ExtrapolationScaling::Inverse)
}

/// Per-draw extrapolated predictive z-density: selection weights removed
/// and rescaled by the survival fraction, PET/PEESE slopes zeroed,
/// unadjusted draws passed through unchanged.
pub fn extrapolated_z_density(
    draws: &[PredictiveDraw],
    d: &Dataset,
    grid: &[f64],
    direction: Direction,
    scaling: ExtrapolationScaling,
) -> Result<DensityMatrix, PredictiveError> {
    density_matrix(draws, d, grid, direction, true, scaling)
}

fn density_matrix(
    draws: &[PredictiveDraw],
    d: &Dataset,
    grid: &[f64],
    direction: Direction,
    extrapolate: bool,
    scaling: ExtrapolationScaling,
) -> Result<DensityMatrix, PredictiveError> {
    if draws.is_empty() {
        return Err(PredictiveError::NoDraws);
    }
    let cols = grid.len();
    let mut values = alloc::vec![0.0; draws.len() * cols];
    let mut cache: Vec<GridWeights> = Vec::new();
    for (r, draw) in draws.iter().enumerate() {
        accumulate_draw_density(
            &mut values[r * cols..(r + 1) * cols],
            grid,
            draw,
            d,
            direction,
            extrapolate,
            scaling,
            &mut cache,
            r,
        )?;
    }
    Ok(DensityMatrix { values, rows: draws.len(), cols })
}

/// Pointwise central band of the per-draw densities.
pub fn pointwise_band(matrix: &DensityMatrix, level: f64) -> (Vec<f64>, Vec<f64>) {
    let tail = (1.0 - level) / 2.0;
    let mut lower = Vec::with_capacity(matrix.cols);
    let mut upper = Vec::with_capacity(matrix.cols);
    let mut column = alloc::vec![0.0; matrix.rows];
    for c in 0..matrix.cols {
        for r in 0..matrix.rows {
            column[r] = matrix.values[r * matrix.cols + c];
        }
        column.sort_by(|a, b| a.total_cmp(b));
        lower.push(math::quantile(&column, tail));
        upper.push(math::quantile(&column, 1.0 - tail));
    }
    (lower, upper)
}

/// Trapezoid integral of a sampled function over its grid.
pub fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 1..grid.len() {
        total += 0.5 * (values[i] + values[i - 1]) * (grid[i] - grid[i - 1]);
    }
    total
}

/// Assembles fitted and extrapolated matrices into a curve with bands,
/// masses, and a warning when the grid truncates visible mass.
pub fn build_curve(
    grid: &[f64],
    fitted: &DensityMatrix,
    extrapolated: &DensityMatrix,
    level: f64,
) -> PredictiveCurve {
    let fitted_mean = fitted.mean();
    let extrapolated_mean = extrapolated.mean();
    let (flo, fhi) = pointwise_band(fitted, level);
    let (elo, ehi) = pointwise_band(extrapolated, level);
    let mass_fitted = trapezoid(grid, &fitted_mean);
    let mass_extrapolated = trapezoid(grid, &extrapolated_mean);
    let mut warnings = Vec::new();
    if mass_fitted < 0.98 {
        warnings.push(alloc::format!(
            "grid too narrow: fitted predictive mass {mass_fitted:.4} < 0.98"
        ));
    }
    PredictiveCurve {
        grid: grid.to_vec(),
        fitted: CurveBand { mean: fitted_mean, lower: flo, upper: fhi },
        extrapolated: CurveBand { mean: extrapolated_mean, lower: elo, upper: ehi },
        mass_fitted,
        mass_extrapolated,
        warnings,
    }
}

/// Grid extended so that every draw's predictive mass is covered, keeping
/// the configured step size.
pub fn extended_grid(cfg: &GridConfig, draws: &[PredictiveDraw], d: &Dataset) -> Vec<f64> {
    let step = (cfg.z_max - cfg.z_min) / (cfg.points - 1) as f64;
    let mut lo = cfg.z_min;
    let mut hi = cfg.z_max;
    for draw in draws {
        for s in &d.studies {
            let m = (draw.mu + draw.slope_se * s.se + draw.slope_var * s.se * s.se) / s.se;
            let sd = sqrt(draw.tau * draw.tau + s.se * s.se) / s.se;
            lo = lo.min(m - 8.5 * sd);
            hi = hi.max(m + 8.5 * sd);
        }
    }
    let below = ((cfg.z_min - lo) / step).max(0.0);
    let above = ((hi - cfg.z_max) / step).max(0.0);
    let n_below = math::ceil(below) as usize;
    let n_above = math::ceil(above) as usize;
    let start = cfg.z_min - n_below as f64 * step;
    let total = cfg.points + n_below + n_above;
    (0..total).map(|i| start + i as f64 * step).collect()
}

/// Exact mass of one draw's fitted predictive z-density on `[a, b]`,
/// from region-weighted normal CDF differences. This is the closed-form
/// counterpart of integrating the (possibly discontinuous) grid density.
pub fn fitted_mass_between(
    draw: &PredictiveDraw,
    d: &Dataset,
    direction: Direction,
    a: f64,
    b: f64,
) -> Result<f64, PredictiveError> {
    let n = d.len() as f64;
    let mut total = 0.0;
    for s in &d.studies {
        let m = (draw.mu + draw.slope_se * s.se + draw.slope_var * s.se * s.se) / s.se;
        let sd = sqrt(draw.tau * draw.tau + s.se * s.se) / s.se;
        match &draw.weights {
            None => {
                total += normal_cdf((b - m) / sd) - normal_cdf((a - m) / sd);
            }
            Some(wf) if wf.alphas.is_empty() => {
                total += normal_cdf((b - m) / sd) - normal_cdf((a - m) / sd);
            }
            Some(wf) => {
                let i = selection_integral_i_dir(draw.mu, draw.tau, wf, s.se, direction)?;
                if i < 1e-10 {
                    return Err(PredictiveError::PathologicalWeights { draw: 0, survival: i });
                }
                let part = crate::densities::ZPartition::new(wf, direction);
                let mut lo = f64::NEG_INFINITY;
                let mut acc = 0.0;
                for (cell, &widx) in part.omega_idx.iter().enumerate() {
                    let hi = if cell < part.breaks.len() {
                        part.breaks[cell]
                    } else {
                        f64::INFINITY
                    };
                    let left = lo.max(a);
                    let right = hi.min(b);
                    if right > left {
                        acc += wf.omegas[widx]
                            * (normal_cdf((right - m) / sd) - normal_cdf((left - m) / sd));
                    }
                    lo = hi;
                }
                total += acc / i;
            }
        }
    }
    Ok(total / n)
}

/// Per-draw expected discovery rate: model-implied probability of
/// `|z| >= threshold` with the selection process removed and small-study
/// slopes zeroed.
pub fn edr_per_draw(draws: &[PredictiveDraw], d: &Dataset, threshold: f64) -> Vec<f64> {
    draws
        .iter()
        .map(|draw| {
            let mut acc = 0.0;
            for s in &d.studies {
                let sd = sqrt(draw.tau * draw.tau + s.se * s.se);
                let upper = 1.0 - normal_cdf((threshold * s.se - draw.mu) / sd);
                let lower = normal_cdf((-threshold * s.se - draw.mu) / sd);
                acc += upper + lower;
            }
            acc / d.len() as f64
        })
        .collect()
}

/// Soric bound: the largest false discovery rate compatible with a
/// discovery rate `edr` at level `alpha`. Zero discovery reports 1.
pub fn fdr_from_edr(edr: f64, alpha: f64) -> f64 {
    if edr <= 0.0 {
        return 1.0;
    }
    if edr >= 1.0 {
        return 0.0;
    }
    ((1.0 / edr - 1.0) * alpha / (1.0 - alpha)).min(1.0)
}

/// Per-draw expected number of missing studies. Non-selection draws yield
/// exactly zero; selection draws report `N (1 - mean_i I_i) / mean_i I_i`
/// under the default scaling.
pub fn n_missing_per_draw(
    draws: &[PredictiveDraw],
    d: &Dataset,
    direction: Direction,
    scaling: ExtrapolationScaling,
) -> Result<Vec<f64>, PredictiveError> {
    let n = d.len() as f64;
    let mut out = Vec::with_capacity(draws.len());
    for (idx, draw) in draws.iter().enumerate() {
        let value = match &draw.weights {
            None => 0.0,
            Some(wf) if wf.alphas.is_empty() => 0.0,
            Some(wf) => {
                let mut mean_i = 0.0;
                for s in &d.studies {
                    mean_i +=
                        selection_integral_i_dir(draw.mu, draw.tau, wf, s.se, direction)?;
                }
                mean_i /= n;
                if mean_i < 1e-10 {
                    return Err(PredictiveError::PathologicalWeights {
                        draw: idx,
                        survival: mean_i,
                    });
                }
                match scaling {
                    ExtrapolationScaling::Inverse => n * (1.0 - mean_i) / mean_i,
                    ExtrapolationScaling::Direct => n * (1.0 - mean_i),
                }
            }
        };
        out.push(value);
    }
    Ok(out)
}

/// Publication-bias summaries over an ensemble of predictive draws.
pub fn bias_metrics(
    draws: &[PredictiveDraw],
    d: &Dataset,
    threshold: f64,
    alpha: f64,
    level: f64,
    direction: Direction,
    scaling: ExtrapolationScaling,
    keep_per_draw: bool,
) -> Result<BiasMetrics, PredictiveError> {
    if draws.is_empty() {
        return Err(PredictiveError::NoDraws);
    }
    let edr = edr_per_draw(draws, d, threshold);
    let fdr: Vec<f64> = edr.iter().map(|&e| fdr_from_edr(e, alpha)).collect();
    let missing = n_missing_per_draw(draws, d, direction, scaling)?;
    let per_draw = keep_per_draw.then(|| {
        edr.iter()
            .zip(&fdr)
            .zip(&missing)
            .map(|((&e, &f), &m)| (e, f, m))
            .collect()
    });
    Ok(BiasMetrics {
        edr: Interval::from_draws(&edr, level),
        fdr: Interval::from_draws(&fdr, level),
        n_missing: Interval::from_draws(&missing, level),
        odr: d.observed_discovery_rate(threshold),
        per_draw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::normal_pdf;
    use crate::model::Side;
    use alloc::vec;

    fn wf_two_sided_05() -> WeightFunction {
        WeightFunction::new(Side::TwoSided, vec![0.05], vec![0.1, 1.0]).unwrap()
    }

    fn grid_default() -> Vec<f64> {
        GridConfig::default().grid()
    }

    #[test]
    fn fitted_density_single_draw_standard_normal() {
        let d = Dataset::from_pairs([(0.0, 1.0)], "one").unwrap();
        let grid = grid_default();
        let draws = [PredictiveDraw::random_effects(0.0, 0.0)];
        let m = fitted_z_density(&draws, &d, &grid, Direction::Positive).unwrap();
        let at_zero = m.row(0)[300];
        assert!((grid[300]).abs() < 1e-12);
        assert!((at_zero - 0.398_942_280_401_432_7).abs() < 1e-12, "{at_zero}");
    }

    #[test]
    fn fitted_density_shifted_mean() {
        // mu = 0.3, tau = 0, se = 0.15: z-scale Normal(2, 1).
        let d = Dataset::from_pairs([(0.3, 0.15)], "one").unwrap();
        let grid = grid_default();
        let draws = [PredictiveDraw::random_effects(0.3, 0.0)];
        let m = fitted_z_density(&draws, &d, &grid, Direction::Positive).unwrap();
        let at_two = m.row(0)[400];
        assert!((grid[400] - 2.0).abs() < 1e-12);
        assert!((at_two - 0.398_942_280_401_432_7).abs() < 1e-12, "{at_two}");
    }

    #[test]
    fn constant_weights_reduce_to_random_effects() {
        let d = Dataset::from_pairs([(0.2, 0.5), (0.4, 0.25)], "two").unwrap();
        let grid = grid_default();
        let re = [PredictiveDraw::random_effects(0.1, 0.2)];
        let sel = [PredictiveDraw {
            weights: Some(WeightFunction::constant()),
            ..re[0].clone()
        }];
        let a = fitted_z_density(&re, &d, &grid, Direction::Positive).unwrap();
        let b = fitted_z_density(&sel, &d, &grid, Direction::Positive).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-15);
        }
        // And extrapolation is the identity for non-selection draws.
        let e = extrapolated_z_density(
            &re,
            &d,
            &grid,
            Direction::Positive,
            ExtrapolationScaling::Inverse,
        )
        .unwrap();
        assert_eq!(a.values, e.values);
    }

    #[test]
    fn extrapolated_selection_examples() {
        let d = Dataset::from_pairs([(0.0, 1.0)], "one").unwrap();
        let grid = grid_default();
        let draws = [PredictiveDraw {
            mu: 0.0,
            tau: 0.0,
            slope_se: 0.0,
            slope_var: 0.0,
            weights: Some(wf_two_sided_05()),
        }];
        let fitted = fitted_z_density(&draws, &d, &grid, Direction::Positive).unwrap();
        let extra = extrapolated_z_density(
            &draws,
            &d,
            &grid,
            Direction::Positive,
            ExtrapolationScaling::Inverse,
        )
        .unwrap();
        // At z = 0: fitted = phi(0) * 0.1 / 0.145, extrapolated = phi(0) / 0.145.
        let f0 = fitted.row(0)[300];
        let e0 = extra.row(0)[300];
        assert!((f0 - 0.275_132_607_173_4).abs() < 1e-10, "{f0}");
        assert!((e0 - 2.751_326_071_734_0).abs() < 1e-10, "{e0}");
        // At z = 2.5 (max-weight region) they coincide exactly.
        let idx = grid.iter().position(|&z| (z - 2.5).abs() < 1e-9).unwrap();
        let f = fitted.row(0)[idx];
        let e = extra.row(0)[idx];
        assert_eq!(f, e);
        assert!((f - normal_pdf(2.5) / 0.145).abs() < 1e-10);
        assert!((f - 0.120_885).abs() < 1e-5);
        // Extrapolated dominates everywhere.
        for (x, y) in extra.values.iter().zip(&fitted.values) {
            assert!(x + 1e-12 >= *y);
        }
    }

    #[test]
    fn direct_scaling_multiplies_by_survival() {
        let d = Dataset::from_pairs([(0.0, 1.0)], "one").unwrap();
        let grid = grid_default();
        let draws = [PredictiveDraw {
            mu: 0.0,
            tau: 0.0,
            slope_se: 0.0,
            slope_var: 0.0,
            weights: Some(wf_two_sided_05()),
        }];
        let extra = extrapolated_z_density(
            &draws,
            &d,
            &grid,
            Direction::Positive,
            ExtrapolationScaling::Direct,
        )
        .unwrap();
        let e0 = extra.row(0)[300];
        assert!((e0 - normal_pdf(0.0) * 0.145).abs() < 1e-12);
    }

    #[test]
    fn pet_extrapolation_zeroes_slope() {
        let d = Dataset::from_pairs([(0.3, 0.5)], "one").unwrap();
        let grid = grid_default();
        let draws = [PredictiveDraw {
            mu: 0.1,
            tau: 0.0,
            slope_se: 0.8,
            slope_var: 0.0,
            weights: None,
        }];
        let extra = extrapolated_z_density(
            &draws,
            &d,
            &grid,
            Direction::Positive,
            ExtrapolationScaling::Inverse,
        )
        .unwrap();
        let plain = fitted_z_density(
            &[PredictiveDraw::random_effects(0.1, 0.0)],
            &d,
            &grid,
            Direction::Positive,
        )
        .unwrap();
        assert_eq!(extra.values, plain.values);
    }

    #[test]
    fn band_examples() {
        let m = DensityMatrix { values: vec![1.0, 3.0], rows: 2, cols: 1 };
        let (lo, hi) = pointwise_band(&m, 0.95);
        assert!((lo[0] - 1.05).abs() < 1e-12);
        assert!((hi[0] - 2.95).abs() < 1e-12);

        let same = DensityMatrix { values: vec![0.7; 5], rows: 5, cols: 1 };
        let (lo, hi) = pointwise_band(&same, 0.95);
        assert_eq!(lo[0], 0.7);
        assert_eq!(hi[0], 0.7);
    }

    #[test]
    fn band_contains_mean_with_many_draws() {
        // Draws spread around a smooth curve: the 95% band straddles the mean.
        let d = Dataset::from_pairs([(0.2, 0.4)], "one").unwrap();
        let grid = grid_default();
        let mut draws = Vec::new();
        for i in 0..40 {
            let shift = -0.5 + i as f64 / 39.0;
            draws.push(PredictiveDraw::random_effects(0.2 + 0.1 * shift, 0.05));
        }
        let m = fitted_z_density(&draws, &d, &grid, Direction::Positive).unwrap();
        let mean = m.mean();
        let (lo, hi) = pointwise_band(&m, 0.95);
        for ((&l, &h), &mv) in lo.iter().zip(&hi).zip(&mean) {
            assert!(l <= mv + 1e-12 && mv <= h + 1e-12);
        }
    }

    #[test]
    fn fitted_mass_is_one_per_draw() {
        let d = Dataset::from_pairs([(0.42, 0.2), (0.1, 0.3), (0.9, 0.45)], "three").unwrap();
        let cfg = GridConfig::default();
        let draws = vec![
            PredictiveDraw::random_effects(0.3, 0.15),
            PredictiveDraw {
                mu: 0.2,
                tau: 0.1,
                slope_se: 0.0,
                slope_var: 0.0,
                weights: Some(wf_two_sided_05()),
            },
            PredictiveDraw {
                mu: 0.1,
                tau: 0.05,
                slope_se: 0.6,
                slope_var: 0.0,
                weights: None,
            },
        ];
        // The step weights make the density discontinuous at the cutpoints;
        // split the grid cells there so the trapezoid rule stays accurate.
        let mut grid = extended_grid(&cfg, &draws, &d);
        for wf in draws.iter().filter_map(|dr| dr.weights.as_ref()) {
            for t in crate::densities::z_cutpoints(wf) {
                grid.push(t - 1e-9);
                grid.push(t + 1e-9);
            }
        }
        grid.sort_by(|a, b| a.total_cmp(b));
        let m = fitted_z_density(&draws, &d, &grid, Direction::Positive).unwrap();
        for r in 0..m.rows {
            let mass = trapezoid(&grid, m.row(r));
            assert!((mass - 1.0).abs() < 1e-3, "draw {r} mass {mass}");
            let closed = fitted_mass_between(
                &draws[r],
                &d,
                Direction::Positive,
                grid[0],
                *grid.last().unwrap(),
            )
            .unwrap();
            assert!((closed - 1.0).abs() < 1e-6, "draw {r} closed-form mass {closed}");
            assert!((closed - mass).abs() < 1e-3);
        }
    }

    #[test]
    fn extrapolated_mass_matches_n_missing_for_constant_se() {
        let d = Dataset::from_pairs([(0.1, 0.3), (0.5, 0.3), (0.7, 0.3)], "const-se").unwrap();
        let cfg = GridConfig::default();
        let draws = vec![PredictiveDraw {
            mu: 0.2,
            tau: 0.1,
            slope_se: 0.0,
            slope_var: 0.0,
            weights: Some(wf_two_sided_05()),
        }];
        let grid = extended_grid(&cfg, &draws, &d);
        let m = extrapolated_z_density(
            &draws,
            &d,
            &grid,
            Direction::Positive,
            ExtrapolationScaling::Inverse,
        )
        .unwrap();
        let mass = trapezoid(&grid, m.row(0));
        assert!(mass >= 1.0 - 1e-9);
        let missing = n_missing_per_draw(
            &draws,
            &d,
            Direction::Positive,
            ExtrapolationScaling::Inverse,
        )
        .unwrap()[0];
        let n = d.len() as f64;
        assert!(
            ((mass - 1.0) * n - missing).abs() < 1e-6,
            "mass-implied {} vs direct {missing}",
            (mass - 1.0) * n
        );
    }

    #[test]
    fn edr_degenerate_and_power_examples() {
        let d = Dataset::from_pairs([(0.0, 1.0)], "one").unwrap();
        let degenerate = [PredictiveDraw::random_effects(0.0, 0.0)];
        let edr = edr_per_draw(&degenerate, &d, 1.96)[0];
        // Size of the two-sided test at the conventional threshold.
        let exact = 2.0 * normal_cdf(-1.96);
        assert!((edr - exact).abs() < 1e-12);
        assert!((edr - 0.05).abs() < 5e-6, "{edr}");

        // mu/se = 5: power of the two-sided test.
        let d = Dataset::from_pairs([(0.5, 0.1)], "one").unwrap();
        let strong = [PredictiveDraw::random_effects(0.5, 0.0)];
        let edr = edr_per_draw(&strong, &d, 1.96)[0];
        let expected = 1.0 - normal_cdf(1.96 - 5.0) + normal_cdf(-1.96 - 5.0);
        assert!((edr - expected).abs() < 1e-12);
        assert!((edr - 0.9988).abs() < 1e-4, "{edr}");
    }

    #[test]
    fn fdr_examples_and_monotonicity() {
        assert!((fdr_from_edr(0.27, 0.05) - 0.142_300).abs() < 5e-5);
        assert!((fdr_from_edr(0.18, 0.05) - 0.239_766).abs() < 5e-5);
        assert_eq!(fdr_from_edr(1.0, 0.05), 0.0);
        assert!((fdr_from_edr(0.05, 0.05) - 1.0).abs() < 1e-12);
        assert_eq!(fdr_from_edr(0.01, 0.05), 1.0);
        assert_eq!(fdr_from_edr(0.0, 0.05), 1.0);
        let mut prev = f64::INFINITY;
        for i in 1..=18 {
            let e = 0.05 + 0.05 * i as f64;
            let f = fdr_from_edr(e, 0.05);
            assert!(f < prev, "fdr not decreasing at {e}");
            assert!((0.0..=1.0).contains(&f));
            prev = f;
        }
    }

    #[test]
    fn n_missing_examples() {
        let d100: Vec<(f64, f64)> = (0..100).map(|i| (0.1 + 0.001 * i as f64, 0.25)).collect();
        let d = Dataset::from_pairs(d100, "hundred").unwrap();
        // Constant weights: exactly zero.
        let none = [PredictiveDraw::random_effects(0.2, 0.1)];
        let zeros = n_missing_per_draw(
            &none,
            &d,
            Direction::Positive,
            ExtrapolationScaling::Inverse,
        )
        .unwrap();
        assert_eq!(zeros[0], 0.0);

        // Survival one half doubles the pool: closed-form check of the
        // formula itself with mean I = 0.5 and N = 100.
        let n = 100.0_f64;
        let mean_i = 0.5_f64;
        assert_eq!(n * (1.0 - mean_i) / mean_i, 100.0);
        // And the inversion consistent with a survival of 0.2568 at N = 300.
        let n = 300.0_f64;
        let mean_i = 0.2568_f64;
        let missing = n * (1.0 - mean_i) / mean_i;
        assert!((missing - 868.224_299_065_420_6).abs() < 1e-9, "{missing}");
    }

    #[test]
    fn metrics_summaries_are_ordered() {
        let d = Dataset::from_pairs([(0.42, 0.2), (0.1, 0.3), (0.55, 0.25)], "three").unwrap();
        let mut draws = Vec::new();
        for i in 0..50 {
            let f = i as f64 / 49.0;
            draws.push(PredictiveDraw {
                mu: 0.1 + 0.3 * f,
                tau: 0.05 + 0.1 * f,
                slope_se: 0.0,
                slope_var: 0.0,
                weights: Some(
                    WeightFunction::new(
                        Side::OneSided,
                        vec![0.05],
                        vec![0.05 + 0.8 * f, 1.0],
                    )
                    .unwrap(),
                ),
            });
        }
        let m = bias_metrics(
            &draws,
            &d,
            1.96,
            0.05,
            0.95,
            Direction::Positive,
            ExtrapolationScaling::Inverse,
            true,
        )
        .unwrap();
        assert!(m.edr.lower <= m.edr.median && m.edr.median <= m.edr.upper);
        assert!(m.fdr.lower <= m.fdr.median && m.fdr.median <= m.fdr.upper);
        assert!(m.n_missing.lower <= m.n_missing.median);
        assert!(m.n_missing.median <= m.n_missing.upper);
        assert!(m.edr.lower >= 0.0 && m.edr.upper <= 1.0);
        assert!(m.fdr.lower >= 0.0 && m.fdr.upper <= 1.0);
        assert!(m.n_missing.lower >= 0.0);
        assert_eq!(m.per_draw.as_ref().map(|p| p.len()), Some(50));
        let odr_expected = d.observed_discovery_rate(1.96);
        assert_eq!(m.odr, odr_expected);
    }

    #[test]
    fn grid_config_validation() {
        assert!(GridConfig::default().validate().is_ok());
        assert!(GridConfig { z_min: 2.0, z_max: -2.0, ..GridConfig::default() }
            .validate()
            .is_err());
        assert!(GridConfig { points: 10, ..GridConfig::default() }.validate().is_err());
    }

    #[test]
    fn narrow_grid_warns() {
        let d = Dataset::from_pairs([(0.0, 0.05)], "tight").unwrap();
        // Mean z = 8: far outside the default grid.
        let draws = [PredictiveDraw::random_effects(0.4, 0.0)];
        let grid = GridConfig::default().grid();
        let fitted = fitted_z_density(&draws, &d, &grid, Direction::Positive).unwrap();
        let extra = extrapolated_z_density(
            &draws,
            &d,
            &grid,
            Direction::Positive,
            ExtrapolationScaling::Inverse,
        )
        .unwrap();
        let curve = build_curve(&grid, &fitted, &extra, 0.95);
        assert!(!curve.warnings.is_empty());
        assert!(curve.mass_fitted < 0.98);
    }
}
