//! Coordinate-wise median-based robust mean estimation.
//!
//! For every coordinate `j` the estimator takes the median of the `k` input
//! values, keeps the `(1 - alpha) k` values closest to it and averages them.
//! When at least `(1 - alpha) k` inputs are trustworthy and lie within an
//! l-infinity radius `r` of their mean, the estimate is within
//! [`c_alpha`]`(alpha, d) * r` of that mean, no matter what the remaining
//! inputs are.
//!
//! Ties at the cut-off distance are broken in favour of the smaller input
//! index, which makes the estimate a deterministic function of the ordered
//! batch. No epsilon is used anywhere: ties are exact floating point ties.

use crate::error::{integral_count, Error, Result};

/// Trimming parameters `(alpha, k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustMeanConfig {
    alpha: f64,
    k: usize,
    trim: usize,
}

impl RobustMeanConfig {
    pub fn new(alpha: f64, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInput("robust mean needs k >= 1".into()));
        }
        if !(0.0..0.5).contains(&alpha) {
            return Err(Error::InvalidInput(format!(
                "alpha must lie in [0, 1/2), got {alpha}"
            )));
        }
        let trim = integral_count(alpha, k).ok_or_else(|| {
            Error::InvalidInput(format!("alpha * k must be an integer (alpha = {alpha}, k = {k})"))
        })?;
        Ok(Self { alpha, k, trim })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of entries discarded per coordinate, `alpha * k`.
    pub fn trim(&self) -> usize {
        self.trim
    }

    /// Number of entries averaged per coordinate, `(1 - alpha) * k`.
    pub fn keep(&self) -> usize {
        self.k - self.trim
    }
}

/// A non-empty set of equally sized vectors.
#[derive(Debug, Clone)]
pub struct VectorBatch<'a> {
    rows: Vec<&'a [f64]>,
    dim: usize,
}

impl<'a> VectorBatch<'a> {
    pub fn new(rows: Vec<&'a [f64]>) -> Result<Self> {
        let dim = match rows.first() {
            Some(first) => first.len(),
            None => return Err(Error::InvalidInput("empty vector batch".into())),
        };
        if dim == 0 {
            return Err(Error::InvalidInput("vectors must have dimension >= 1".into()));
        }
        if let Some(bad) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::InvalidInput(format!(
                "vector {bad} has dimension {} but the batch has dimension {dim}",
                rows[bad].len()
            )));
        }
        Ok(Self { rows, dim })
    }

    pub fn from_vecs(vectors: &'a [Vec<f64>]) -> Result<Self> {
        Self::new(vectors.iter().map(Vec::as_slice).collect())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[&'a [f64]] {
        &self.rows
    }

    fn column_into(&self, j: usize, out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.rows.iter().map(|r| r[j]));
    }
}

#[inline]
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    0.5 * (lo + hi)
}

/// Median of `buf`, reordering it. Even lengths average the two middle order
/// statistics.
pub(crate) fn median_in_place(buf: &mut [f64]) -> f64 {
    let k = buf.len();
    debug_assert!(k > 0);
    let (left, upper, _) = buf.select_nth_unstable_by(k / 2, f64::total_cmp);
    let upper = *upper;
    if k % 2 == 1 {
        upper
    } else {
        let lower = left.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        midpoint(lower, upper)
    }
}

/// Coordinate-wise median of the batch.
pub fn coordinate_median(batch: &VectorBatch<'_>) -> Vec<f64> {
    let mut buf = Vec::with_capacity(batch.len());
    (0..batch.dim())
        .map(|j| {
            batch.column_into(j, &mut buf);
            median_in_place(&mut buf)
        })
        .collect()
}

struct ColumnScratch {
    values: Vec<f64>,
    sorted: Vec<f64>,
    dist: Vec<f64>,
    dist_sel: Vec<f64>,
}

impl ColumnScratch {
    fn new(k: usize) -> Self {
        Self {
            values: Vec::with_capacity(k),
            sorted: Vec::with_capacity(k),
            dist: Vec::with_capacity(k),
            dist_sel: Vec::with_capacity(k),
        }
    }

    /// Fills `dist` for the current `values` and returns the median and the
    /// cut-off radius, i.e. the `keep`-th smallest distance to the median.
    fn prepare(&mut self, keep: usize) -> (f64, f64) {
        self.sorted.clear();
        self.sorted.extend_from_slice(&self.values);
        let med = median_in_place(&mut self.sorted);
        self.dist.clear();
        self.dist.extend(self.values.iter().map(|v| (v - med).abs()));
        self.dist_sel.clear();
        self.dist_sel.extend_from_slice(&self.dist);
        let radius = *self
            .dist_sel
            .select_nth_unstable_by(keep - 1, f64::total_cmp)
            .1;
        (med, radius)
    }
}

/// Plain mean in index order; exact on constant input.
pub(crate) fn plain_mean(values: &[f64]) -> f64 {
    let first = values[0];
    if values.iter().all(|&v| v == first) {
        return first;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Trimmed mean of one column, accumulated as deviations from the median in
/// index order.
fn column_estimate(scratch: &mut ColumnScratch, keep: usize) -> f64 {
    let k = scratch.values.len();
    if keep == k {
        return plain_mean(&scratch.values);
    }
    let (med, radius) = scratch.prepare(keep);
    let below = scratch.dist.iter().filter(|&&d| d < radius).count();
    let mut ties_left = keep - below;
    let mut sum = 0.0;
    for (v, &d) in scratch.values.iter().zip(&scratch.dist) {
        if d < radius {
            sum += v - med;
        } else if d == radius && ties_left > 0 {
            sum += v - med;
            ties_left -= 1;
        }
    }
    med + sum / keep as f64
}

/// The robust mean estimate: per coordinate, the mean of the `(1 - alpha) k`
/// entries nearest to the coordinate-wise median.
pub fn robust_mean(batch: &VectorBatch<'_>, cfg: &RobustMeanConfig) -> Result<Vec<f64>> {
    if cfg.k() != batch.len() {
        return Err(Error::InvalidInput(format!(
            "robust mean configured for k = {} but batch holds {} vectors",
            cfg.k(),
            batch.len()
        )));
    }
    let keep = cfg.keep();
    let mut scratch = ColumnScratch::new(batch.len());
    Ok((0..batch.dim())
        .map(|j| {
            batch.column_into(j, &mut scratch.values);
            column_estimate(&mut scratch, keep)
        })
        .collect())
}

/// Indices selected for coordinate `j` (the set the estimator averages),
/// in increasing order.
pub fn selected_indices(batch: &VectorBatch<'_>, cfg: &RobustMeanConfig, j: usize) -> Vec<usize> {
    let keep = cfg.keep();
    let mut scratch = ColumnScratch::new(batch.len());
    batch.column_into(j, &mut scratch.values);
    if keep == batch.len() {
        return (0..keep).collect();
    }
    let (_, radius) = scratch.prepare(keep);
    let below = scratch.dist.iter().filter(|&&d| d < radius).count();
    let mut ties_left = keep - below;
    let mut out = Vec::with_capacity(keep);
    for (i, &d) in scratch.dist.iter().enumerate() {
        if d < radius {
            out.push(i);
        } else if d == radius && ties_left > 0 {
            out.push(i);
            ties_left -= 1;
        }
    }
    out
}

/// Same estimate for a single column whose values are already sorted
/// ascending. `rank[i]` is the tie-break priority of `values[i]` (smaller wins),
/// playing the role the input index plays in [`robust_mean`]. Runs in
/// `O(keep + log k)`.
pub(crate) fn sorted_column_estimate(values: &[f64], rank: &[u64], keep: usize) -> f64 {
    let k = values.len();
    debug_assert!(keep >= 1 && keep <= k);
    if keep == k {
        return plain_mean(values);
    }
    let med = if k % 2 == 1 {
        values[k / 2]
    } else {
        midpoint(values[k / 2 - 1], values[k / 2])
    };
    let dist = |i: usize| (values[i] - med).abs();

    // The kept set is a contiguous run [left, left + keep) of the sorted
    // column; slide it right while its far end is closer than its near end.
    let (mut left, mut span) = (0, k - keep);
    while span > 0 {
        let half = span / 2;
        let mid = left + half;
        if med - values[mid] > values[mid + keep] - med {
            left = mid + 1;
            span -= half + 1;
        } else {
            span = half;
        }
    }
    let right = left + keep;
    let radius = dist(left).max(dist(right - 1));

    // Entries strictly inside the radius form a contiguous block.
    let mut lo = left;
    while lo < right && dist(lo) >= radius {
        lo += 1;
    }
    let mut hi = right;
    while hi > lo && dist(hi - 1) >= radius {
        hi -= 1;
    }
    let mut sum: f64 = values[lo..hi].iter().map(|v| v - med).sum();
    let need = keep - (hi - lo);
    if need > 0 {
        let mut ties: Vec<(u64, f64)> = Vec::new();
        let mut i = lo;
        while i > 0 && dist(i - 1) == radius {
            i -= 1;
            ties.push((rank[i], values[i]));
        }
        let mut i = hi;
        while i < k && dist(i) == radius {
            ties.push((rank[i], values[i]));
            i += 1;
        }
        ties.sort_unstable_by_key(|t| t.0);
        sum += ties[..need].iter().map(|t| t.1 - med).sum::<f64>();
    }
    med + sum / keep as f64
}

/// Error constant of the estimator:
/// `(2 alpha / (1 - alpha)) (1 + sqrt((1 - alpha)^2 / (1 - 2 alpha))) sqrt(d)`.
pub fn c_alpha(alpha: f64, d: usize) -> Result<f64> {
    if !(0.0..0.5).contains(&alpha) {
        return Err(Error::Domain(format!(
            "c_alpha is only finite for alpha in [0, 1/2), got {alpha}"
        )));
    }
    let one_minus = 1.0 - alpha;
    let factor = 1.0 + (one_minus * one_minus / (1.0 - 2.0 * alpha)).sqrt();
    Ok(2.0 * alpha / one_minus * factor * (d as f64).sqrt())
}
