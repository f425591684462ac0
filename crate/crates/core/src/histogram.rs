//! Threshold-aligned density histograms of z-statistics.
//!
//! Bin edges are forced through the selection thresholds so discontinuities
//! in the observed distribution land exactly on bin boundaries: each
//! segment between consecutive mandatory edges is subdivided into
//! `ceil(segment / target_width)` equal bins. Out-of-range observations
//! accumulate into flagged half-open overflow bins just outside the range.

use alloc::vec::Vec;

use crate::math::ceil;
use crate::model::Dataset;

/// Mandatory edges used by default: the two-sided significance threshold,
/// the marginal-significance threshold, and the sign boundary (display
/// convention, matching how the thresholds are labeled on plots).
pub const DEFAULT_MANDATORY_EDGES: [f64; 5] = [-1.96, -1.64, 0.0, 1.64, 1.96];
pub const DEFAULT_TARGET_WIDTH: f64 = 0.25;
pub const DEFAULT_RANGE: (f64, f64) = (-6.0, 6.0);

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    /// Density height: count / (N * width).
    pub height: f64,
    pub count: usize,
    /// True for the half-open catch-all bins outside the range.
    pub overflow: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Histogram {
    pub bins: Vec<HistogramBin>,
    pub total_count: usize,
}

impl Histogram {
    /// Sum of `height * width` over all bins.
    pub fn area(&self) -> f64 {
        self.bins.iter().map(|b| b.height * (b.hi - b.lo)).sum()
    }

    pub fn has_overflow(&self) -> bool {
        self.bins.iter().any(|b| b.overflow && b.count > 0)
    }

    /// All interior bin edges, ascending.
    pub fn edges(&self) -> Vec<f64> {
        let mut edges: Vec<f64> = self
            .bins
            .iter()
            .filter(|b| !b.overflow)
            .map(|b| b.lo)
            .collect();
        if let Some(last) = self.bins.iter().filter(|b| !b.overflow).next_back() {
            edges.push(last.hi);
        }
        edges
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum HistogramError {
    NonPositiveWidth(f64),
    EdgeOutsideRange { edge: f64, lo: f64, hi: f64 },
    EmptyRange,
}

impl core::fmt::Display for HistogramError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            HistogramError::NonPositiveWidth(w) => {
                write!(f, "target bin width must be positive, got {w}")
            }
            HistogramError::EdgeOutsideRange { edge, lo, hi } => {
                write!(f, "mandatory edge {edge} outside range [{lo}, {hi}]")
            }
            HistogramError::EmptyRange => write!(f, "range must have positive length"),
        }
    }
}

impl core::error::Error for HistogramError {}

/// Builds the threshold-aligned histogram of the dataset's z-statistics.
pub fn histogram_bins(
    d: &Dataset,
    mandatory_edges: &[f64],
    target_width: f64,
    range: (f64, f64),
) -> Result<Histogram, HistogramError> {
    if !(target_width > 0.0) {
        return Err(HistogramError::NonPositiveWidth(target_width));
    }
    let (lo, hi) = range;
    if !(lo < hi) {
        return Err(HistogramError::EmptyRange);
    }
    for &e in mandatory_edges {
        if e < lo || e > hi {
            return Err(HistogramError::EdgeOutsideRange { edge: e, lo, hi });
        }
    }

    // Segment boundaries: range ends plus interior mandatory edges.
    let mut anchors: Vec<f64> = Vec::with_capacity(mandatory_edges.len() + 2);
    anchors.push(lo);
    anchors.extend(mandatory_edges.iter().copied());
    anchors.push(hi);
    anchors.sort_by(|a, b| a.total_cmp(b));
    anchors.dedup();

    // Subdivide each segment into equal bins, keeping anchors verbatim.
    let mut edges: Vec<f64> = Vec::new();
    edges.push(anchors[0]);
    for pair in anchors.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let parts = (ceil((b - a) / target_width) as usize).max(1);
        for j in 1..parts {
            edges.push(a + (b - a) * j as f64 / parts as f64);
        }
        edges.push(b);
    }

    let n = d.len();
    let interior = edges.len() - 1;
    let mut counts = alloc::vec![0usize; interior];
    let mut under = 0usize;
    let mut over = 0usize;
    for s in &d.studies {
        let z = s.z;
        if z < lo {
            under += 1;
        } else if z >= hi {
            over += 1;
        } else {
            // Rightmost bin containing z in [edge_i, edge_{i+1}).
            let idx = match edges.binary_search_by(|e| e.total_cmp(&z)) {
                Ok(i) => i.min(interior - 1),
                Err(i) => i - 1,
            };
            counts[idx] += 1;
        }
    }

    let mut bins = Vec::with_capacity(interior + 2);
    if under > 0 {
        bins.push(HistogramBin {
            lo: lo - target_width,
            hi: lo,
            height: under as f64 / (n as f64 * target_width),
            count: under,
            overflow: true,
        });
    }
    for (i, &count) in counts.iter().enumerate() {
        let (a, b) = (edges[i], edges[i + 1]);
        bins.push(HistogramBin {
            lo: a,
            hi: b,
            height: count as f64 / (n as f64 * (b - a)),
            count,
            overflow: false,
        });
    }
    if over > 0 {
        bins.push(HistogramBin {
            lo: hi,
            hi: hi + target_width,
            height: over as f64 / (n as f64 * target_width),
            count: over,
            overflow: true,
        });
    }
    Ok(Histogram { bins, total_count: n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Dataset;

    fn dataset(zs: &[f64]) -> Dataset {
        Dataset::from_pairs(zs.iter().map(|&z| (z, 1.0)), "zs").unwrap()
    }

    #[test]
    fn segment_subdivision_counts() {
        let d = dataset(&[0.2, 0.8, 1.2, 1.5]);
        let h = histogram_bins(&d, &[0.0, 1.64], 0.5, (0.0, 1.64)).unwrap();
        let widths: Vec<f64> = h.bins.iter().map(|b| b.hi - b.lo).collect();
        assert_eq!(h.bins.len(), 4);
        for w in widths {
            assert!((w - 0.41).abs() < 1e-12, "width {w}");
        }
    }

    #[test]
    fn area_is_one_without_overflow() {
        let d = dataset(&[-2.5, -1.0, 0.3, 0.9, 1.7, 2.2, 3.4]);
        let h = histogram_bins(
            &d,
            &DEFAULT_MANDATORY_EDGES,
            DEFAULT_TARGET_WIDTH,
            DEFAULT_RANGE,
        )
        .unwrap();
        assert!(!h.has_overflow());
        assert!((h.area() - 1.0).abs() < 1e-12, "area {}", h.area());
    }

    #[test]
    fn mandatory_edges_appear_verbatim() {
        let d = dataset(&[0.5, -0.5, 2.0]);
        let h = histogram_bins(
            &d,
            &DEFAULT_MANDATORY_EDGES,
            DEFAULT_TARGET_WIDTH,
            DEFAULT_RANGE,
        )
        .unwrap();
        let edges = h.edges();
        for e in DEFAULT_MANDATORY_EDGES {
            assert!(
                edges.iter().any(|&x| x == e),
                "edge {e} missing from {edges:?}"
            );
        }
    }

    #[test]
    fn overflow_bins_are_flagged_and_area_still_one() {
        let d = dataset(&[-7.5, 0.0, 8.2, 9.9]);
        let h = histogram_bins(
            &d,
            &DEFAULT_MANDATORY_EDGES,
            DEFAULT_TARGET_WIDTH,
            DEFAULT_RANGE,
        )
        .unwrap();
        assert!(h.has_overflow());
        let over: usize = h
            .bins
            .iter()
            .filter(|b| b.overflow)
            .map(|b| b.count)
            .sum();
        assert_eq!(over, 3);
        assert!((h.area() - 1.0).abs() < 1e-12);
        // Boundary value z == hi lands in the overflow bin (half-open range).
        let d = dataset(&[6.0, 0.0]);
        let h = histogram_bins(&d, &[], 0.25, (-6.0, 6.0)).unwrap();
        assert!(h.has_overflow());
    }

    #[test]
    fn rejects_bad_configuration() {
        let d = dataset(&[0.0]);
        assert!(matches!(
            histogram_bins(&d, &[], 0.0, (-6.0, 6.0)),
            Err(HistogramError::NonPositiveWidth(_))
        ));
        assert!(matches!(
            histogram_bins(&d, &[7.0], 0.25, (-6.0, 6.0)),
            Err(HistogramError::EdgeOutsideRange { .. })
        ));
        assert!(matches!(
            histogram_bins(&d, &[], 0.25, (2.0, 2.0)),
            Err(HistogramError::EmptyRange)
        ));
    }
}
