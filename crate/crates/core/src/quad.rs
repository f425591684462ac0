//! Deterministic quadrature building blocks: adaptive Gauss-Kronrod in one
//! dimension, adaptive Genz-Malik cubature in two or three, Gauss-Legendre
//! tensor nodes for compact blocks, and a Nelder-Mead optimizer for
//! centering integrals on their mode.

use alloc::vec::Vec;

use crate::math::{ceil, ln, sqrt};

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    /// Absolute error estimate.
    pub error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QuadError {
    /// Refinement budget exhausted before the tolerance was met; carries the
    /// last two successive estimates.
    NotConverged { last: f64, previous: f64 },
}

impl core::fmt::Display for QuadError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            QuadError::NotConverged { last, previous } => write!(
                f,
                "quadrature did not converge: last estimate {last}, previous {previous}"
            ),
        }
    }
}

impl core::error::Error for QuadError {}

// 15-point Kronrod nodes (positive half) and weights, with the embedded
// 7-point Gauss weights on the shared nodes.
const KRONROD_NODES: [f64; 8] = [
    0.991_455_371_120_813,
    0.949_107_912_342_759,
    0.864_864_423_359_769,
    0.741_531_185_599_394,
    0.586_087_235_467_691,
    0.405_845_151_377_397,
    0.207_784_955_007_898,
    0.0,
];
const KRONROD_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529,
    0.063_092_092_629_979,
    0.104_790_010_322_250,
    0.140_653_259_715_525,
    0.169_004_726_639_267,
    0.190_350_578_064_785,
    0.204_432_940_075_298,
    0.209_482_141_084_728,
];
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_870,
    0.279_705_391_489_277,
    0.381_830_050_505_119,
    0.417_959_183_673_469,
];

/// One Gauss-Kronrod 15(7) panel on `[a, b]`: returns (estimate, error).
fn gk15_panel<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut kronrod = 0.0;
    let mut gauss = 0.0;
    for (i, (&x, &wk)) in KRONROD_NODES.iter().zip(KRONROD_WEIGHTS.iter()).enumerate() {
        let (lo, hi) = (center - half * x, center + half * x);
        let val = if x == 0.0 { f(center) } else { f(lo) + f(hi) };
        kronrod += wk * val;
        // Odd Kronrod indices (1, 3, 5, 7) are the embedded Gauss nodes.
        if i % 2 == 1 {
            gauss += GAUSS_WEIGHTS[i / 2] * val;
        }
    }
    kronrod *= half;
    gauss *= half;
    (kronrod, (kronrod - gauss).abs())
}

/// Adaptive 1-D integration on `[a, b]`: repeatedly bisects the region with
/// the largest error estimate.
pub fn integrate_1d<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
    max_regions: usize,
) -> Result<QuadResult, QuadError> {
    struct Region {
        a: f64,
        b: f64,
        value: f64,
        error: f64,
    }
    let (value, error) = gk15_panel(&mut f, a, b);
    let mut regions = alloc::vec![Region { a, b, value, error }];
    let mut evals = 15;
    let mut previous = value;
    loop {
        let total: f64 = regions.iter().map(|r| r.value).sum();
        let total_err: f64 = regions.iter().map(|r| r.error).sum();
        if total_err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(QuadResult { value: total, error: total_err, evaluations: evals });
        }
        if regions.len() >= max_regions {
            return Err(QuadError::NotConverged { last: total, previous });
        }
        previous = total;
        let worst = regions
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(i, _)| i)
            .expect("nonempty region list");
        let Region { a, b, .. } = regions.swap_remove(worst);
        let mid = 0.5 * (a + b);
        for (lo, hi) in [(a, mid), (mid, b)] {
            let (value, error) = gk15_panel(&mut f, lo, hi);
            evals += 15;
            regions.push(Region { a: lo, b: hi, value, error });
        }
    }
}

// Genz-Malik degree-7 rule constants.
const GM_LAMBDA2: f64 = 0.358_568_582_800_318_9; // sqrt(9/70)
const GM_LAMBDA3: f64 = 0.948_683_298_050_513_8; // sqrt(9/10)
const GM_LAMBDA5: f64 = 0.688_247_201_611_685_3; // sqrt(9/19)

struct GmRegion {
    center: Vec<f64>,
    half: Vec<f64>,
    value: f64,
    error: f64,
    split_dim: usize,
}

/// Degree-7 Genz-Malik rule with embedded degree-5 error estimate on a
/// hyper-rectangle; also reports the preferred split dimension.
fn genz_malik_rule<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    center: &[f64],
    half: &[f64],
    evals: &mut usize,
) -> (f64, f64, usize) {
    let d = center.len();
    let df = d as f64;
    let w1 = (12824.0 - 9120.0 * df + 400.0 * df * df) / 19683.0;
    let w2 = 980.0 / 6561.0;
    let w3 = (1820.0 - 400.0 * df) / 19683.0;
    let w4 = 200.0 / 19683.0;
    let w5 = 6859.0 / 19683.0 / libm::exp2(df);
    let w1e = (729.0 - 950.0 * df + 50.0 * df * df) / 729.0;
    let w2e = 245.0 / 486.0;
    let w3e = (265.0 - 100.0 * df) / 1458.0;
    let w4e = 25.0 / 729.0;

    let mut point = center.to_vec();
    let f0 = f(&point);
    *evals += 1;

    let mut sum2 = 0.0;
    let mut sum3 = 0.0;
    let mut divdiff = alloc::vec![0.0; d];
    for i in 0..d {
        let mut axis = |lambda: f64, point: &mut Vec<f64>, evals: &mut usize| {
            point[i] = center[i] - lambda * half[i];
            let lo = f(point);
            point[i] = center[i] + lambda * half[i];
            let hi = f(point);
            point[i] = center[i];
            *evals += 2;
            lo + hi
        };
        let s2 = axis(GM_LAMBDA2, &mut point, evals);
        let s3 = axis(GM_LAMBDA3, &mut point, evals);
        sum2 += s2;
        sum3 += s3;
        // Fourth divided difference along the axis guides splitting.
        const RATIO: f64 = (9.0 / 70.0) / (9.0 / 10.0);
        divdiff[i] = ((s2 - 2.0 * f0) - RATIO * (s3 - 2.0 * f0)).abs();
    }

    let mut sum4 = 0.0;
    for i in 0..d {
        for j in (i + 1)..d {
            for si in [-1.0, 1.0] {
                for sj in [-1.0, 1.0] {
                    point[i] = center[i] + si * GM_LAMBDA3 * half[i];
                    point[j] = center[j] + sj * GM_LAMBDA3 * half[j];
                    sum4 += f(&point);
                    *evals += 1;
                }
            }
            point[i] = center[i];
            point[j] = center[j];
        }
    }

    let mut sum5 = 0.0;
    let corners = 1_usize << d;
    for mask in 0..corners {
        for i in 0..d {
            let sign = if mask & (1 << i) == 0 { -1.0 } else { 1.0 };
            point[i] = center[i] + sign * GM_LAMBDA5 * half[i];
        }
        sum5 += f(&point);
        *evals += 1;
    }
    for i in 0..d {
        point[i] = center[i];
    }

    let volume: f64 = half.iter().map(|&h| 2.0 * h).product();
    let i7 = volume * (w1 * f0 + w2 * sum2 + w3 * sum3 + w4 * sum4 + w5 * sum5);
    let i5 = volume * (w1e * f0 + w2e * sum2 + w3e * sum3 + w4e * sum4);
    let split_dim = divdiff
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    (i7, (i7 - i5).abs(), split_dim)
}

/// Adaptive multidimensional integration over a hyper-rectangle
/// (dimension >= 2), bisecting the worst region along its most variable
/// axis.
pub fn integrate_nd<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    lower: &[f64],
    upper: &[f64],
    rel_tol: f64,
    abs_tol: f64,
    max_regions: usize,
) -> Result<QuadResult, QuadError> {
    let d = lower.len();
    assert!(d >= 2, "integrate_nd requires dimension >= 2");
    assert_eq!(lower.len(), upper.len());
    let center: Vec<f64> = lower.iter().zip(upper).map(|(&a, &b)| 0.5 * (a + b)).collect();
    let half: Vec<f64> = lower.iter().zip(upper).map(|(&a, &b)| 0.5 * (b - a)).collect();
    let mut evals = 0;
    let (value, error, split_dim) = genz_malik_rule(&mut f, &center, &half, &mut evals);
    let mut regions = alloc::vec![GmRegion { center, half, value, error, split_dim }];
    let mut previous = value;
    loop {
        let total: f64 = regions.iter().map(|r| r.value).sum();
        let total_err: f64 = regions.iter().map(|r| r.error).sum();
        if total_err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(QuadResult { value: total, error: total_err, evaluations: evals });
        }
        if regions.len() >= max_regions {
            return Err(QuadError::NotConverged { last: total, previous });
        }
        previous = total;
        let worst = regions
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(i, _)| i)
            .expect("nonempty region list");
        let region = regions.swap_remove(worst);
        let dim = region.split_dim;
        for side in [-0.5, 0.5] {
            let mut center = region.center.clone();
            let mut half = region.half.clone();
            half[dim] *= 0.5;
            center[dim] += side * region.half[dim];
            let (value, error, split_dim) = genz_malik_rule(&mut f, &center, &half, &mut evals);
            regions.push(GmRegion { center, half, value, error, split_dim });
        }
    }
}

/// Algebraic map from `t` in (-1, 1) to the whole real line, centered and
/// scaled: `x = center + scale * t / (1 - t^2)`. Returns `(x, dx/dt)`.
#[inline]
pub fn unbounded_map(t: f64, center: f64, scale: f64) -> (f64, f64) {
    let u = 1.0 - t * t;
    let x = center + scale * t / u;
    let jac = scale * (1.0 + t * t) / (u * u);
    (x, jac)
}

/// Gauss-Legendre nodes and weights on `[0, 1]`, computed by Newton
/// iteration on the Legendre recurrence.
pub fn gauss_legendre_01(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = alloc::vec![0.0; n];
    let mut weights = alloc::vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev-like initial guess on [-1, 1].
        let mut x = libm::cos(core::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let delta = p1 / dp;
            x -= delta;
            if delta.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

/// Nelder-Mead maximization of `f` from `start` with per-coordinate initial
/// steps. Returns the best point and value. Deterministic.
pub fn nelder_mead_max<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    start: &[f64],
    steps: &[f64],
    max_iter: usize,
) -> (Vec<f64>, f64) {
    let d = start.len();
    if d == 0 {
        let v = f(start);
        return (start.to_vec(), v);
    }
    // Minimize the negation.
    let mut eval = |x: &[f64]| -f(x);
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    let v0 = eval(start);
    simplex.push((start.to_vec(), v0));
    for i in 0..d {
        let mut p = start.to_vec();
        p[i] += steps[i];
        let v = eval(&p);
        simplex.push((p, v));
    }
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[d].1;
        if (worst - best).abs() <= 1e-12 * (1.0 + best.abs()) {
            break;
        }
        let mut centroid = alloc::vec![0.0; d];
        for (p, _) in simplex.iter().take(d) {
            for (c, &x) in centroid.iter_mut().zip(p) {
                *c += x / d as f64;
            }
        }
        let reflect: Vec<f64> = centroid
            .iter()
            .zip(&simplex[d].0)
            .map(|(&c, &w)| c + alpha * (c - w))
            .collect();
        let fr = eval(&reflect);
        if fr < simplex[0].1 {
            let expand: Vec<f64> = centroid
                .iter()
                .zip(&reflect)
                .map(|(&c, &r)| c + gamma * (r - c))
                .collect();
            let fe = eval(&expand);
            simplex[d] = if fe < fr { (expand, fe) } else { (reflect, fr) };
        } else if fr < simplex[d - 1].1 {
            simplex[d] = (reflect, fr);
        } else {
            let contract: Vec<f64> = centroid
                .iter()
                .zip(&simplex[d].0)
                .map(|(&c, &w)| c + rho * (w - c))
                .collect();
            let fc = eval(&contract);
            if fc < simplex[d].1 {
                simplex[d] = (contract, fc);
            } else {
                let best_point = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let shrunk: Vec<f64> = best_point
                        .iter()
                        .zip(&entry.0)
                        .map(|(&b, &x)| b + sigma * (x - b))
                        .collect();
                    let fv = eval(&shrunk);
                    *entry = (shrunk, fv);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, v) = simplex.swap_remove(0);
    (x, -v)
}

/// Curvature-based scale along each coordinate: `1 / sqrt(-d2 f / dx2)`,
/// clamped to a sane range. Used to condition unbounded integrals.
pub fn curvature_scales<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x: &[f64],
    fallback: f64,
) -> Vec<f64> {
    let fx = f(x);
    let mut scales = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let h = 1e-3 * (1.0 + x[i].abs());
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += h;
        xm[i] -= h;
        let second = (f(&xp) - 2.0 * fx + f(&xm)) / (h * h);
        let scale = if second < 0.0 && second.is_finite() {
            (1.0 / sqrt(-second)).clamp(0.02, 20.0)
        } else {
            fallback
        };
        scales.push(scale);
    }
    scales
}

/// Tensor-product Gauss-Legendre integration of `exp(log_g(t))` over the
/// unit cube in log space: returns `ln` of the integral.
///
/// `log_g` receives the node coordinates; weights are folded in stably.
pub fn log_integral_unit_cube<F: FnMut(&[f64]) -> f64>(
    mut log_g: F,
    dim: usize,
    points_per_dim: usize,
) -> f64 {
    if dim == 0 {
        return log_g(&[]);
    }
    let (nodes, weights) = gauss_legendre_01(points_per_dim);
    let total = points_per_dim.pow(dim as u32);
    let mut log_terms = Vec::with_capacity(total);
    let mut idx = alloc::vec![0_usize; dim];
    let mut point = alloc::vec![0.0; dim];
    for _ in 0..total {
        let mut log_w = 0.0;
        for (k, &i) in idx.iter().enumerate() {
            point[k] = nodes[i];
            log_w += ln(weights[i]);
        }
        log_terms.push(log_g(&point) + log_w);
        // Increment the mixed-radix counter.
        for slot in idx.iter_mut() {
            *slot += 1;
            if *slot < points_per_dim {
                break;
            }
            *slot = 0;
        }
    }
    crate::math::log_sum_exp(&log_terms)
}

/// Number of equal subdivisions needed to reach a target width.
pub fn subdivisions(length: f64, target_width: f64) -> usize {
    (ceil(length / target_width) as usize).max(1)
}
