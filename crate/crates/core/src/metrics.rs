//! Representation diagnostics and task metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{log_sum_exp, Tensor, NORM_EPS};

/// Per-split evaluation summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub wa: f64,
    pub ua: f64,
    pub acc: f64,
    /// Only defined for binary tasks.
    pub eer: Option<f64>,
    pub alignment: f64,
    pub uniformity_audio: f64,
    pub uniformity_text: f64,
    pub uniformity_mean: f64,
    pub samples: usize,
}

/// Copy of `x` with unit-norm rows.
pub fn normalize_rows(x: &Tensor) -> Result<Tensor> {
    let n = x.cols();
    let mut data = x.data().to_vec();
    for (i, row) in data.chunks_mut(n).enumerate() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < NORM_EPS {
            return Err(Error::DegenerateRow { row: i, norm });
        }
        row.iter_mut().for_each(|v| *v /= norm);
    }
    Tensor::new(x.shape().to_vec(), data)
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `mean_i ‖a_i − t_i‖^α` over matched rows. Callers normalize first.
pub fn alignment(a: &Tensor, t: &Tensor, alpha: f64) -> Result<f64> {
    if a.shape() != t.shape() {
        return Err(Error::dim("alignment", a.shape(), t.shape()));
    }
    let n = a.rows();
    let total: f64 = (0..n)
        .map(|i| sq_dist(a.row(i), t.row(i)).sqrt().powf(alpha))
        .sum();
    Ok(total / n as f64)
}

/// `log mean_{i<j} exp(−t·‖x_i − x_j‖²)` over unordered pairs.
pub fn uniformity(x: &Tensor, t: f64) -> Result<f64> {
    let n = x.rows();
    if n < 2 {
        return Err(Error::Contract(format!(
            "uniformity needs at least 2 rows, got {n}"
        )));
    }
    let mut exponents = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            exponents.push(-t * sq_dist(x.row(i), x.row(j)));
        }
    }
    Ok(log_sum_exp(&exponents) - (exponents.len() as f64).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub wa: f64,
    pub ua: f64,
    pub acc: f64,
}

/// Overall accuracy (WA, equal to ACC) and the mean per-class recall (UA)
/// over classes present in `labels`.
pub fn classification_report(
    preds: &[usize],
    labels: &[usize],
    classes: usize,
) -> Result<ClassificationReport> {
    if labels.is_empty() || preds.len() != labels.len() {
        return Err(Error::Contract(format!(
            "need equal nonempty preds/labels, got {} and {}",
            preds.len(),
            labels.len()
        )));
    }
    if let Some(bad) = preds.iter().chain(labels).find(|&&c| c >= classes) {
        return Err(Error::Contract(format!(
            "class id {bad} out of range for {classes} classes"
        )));
    }
    let mut support = vec![0usize; classes];
    let mut hits = vec![0usize; classes];
    for (&p, &l) in preds.iter().zip(labels) {
        support[l] += 1;
        if p == l {
            hits[l] += 1;
        }
    }
    let correct: usize = hits.iter().sum();
    let wa = correct as f64 / labels.len() as f64;
    let recalls: Vec<f64> = support
        .iter()
        .zip(&hits)
        .filter(|(s, _)| **s > 0)
        .map(|(s, h)| *h as f64 / *s as f64)
        .collect();
    let ua = recalls.iter().sum::<f64>() / recalls.len() as f64;
    Ok(ClassificationReport { wa, ua, acc: wa })
}

/// Equal error rate with the convention that a higher score means the
/// positive class.
///
/// Thresholds sweep the sorted unique scores plus `+∞`; a sample is accepted
/// when `score >= threshold`. FAR falls and FRR rises along the sweep, and
/// the result is the crossing point, linearly interpolated between the two
/// sweep points that bracket it.
pub fn equal_error_rate(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Contract(format!(
            "scores and labels differ in length: {} vs {}",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("non-finite score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Contract(
            "equal error rate needs both classes present".into(),
        ));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sweep point k rejects everything below the k-th unique score.
    let mut curve = Vec::new();
    let (mut rejected_pos, mut rejected_neg) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        curve.push((
            (n_neg - rejected_neg) as f64 / n_neg as f64,
            rejected_pos as f64 / n_pos as f64,
        ));
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                rejected_pos += 1;
            } else {
                rejected_neg += 1;
            }
            i += 1;
        }
    }
    curve.push((0.0, 1.0));
    Ok(crossing(&curve).clamp(0.0, 1.0))
}

/// Crossing of FAR and FRR along a sweep of `(far, frr)` points.
pub(crate) fn crossing(curve: &[(f64, f64)]) -> f64 {
    for w in curve.windows(2) {
        let (far0, frr0) = w[0];
        let (far1, frr1) = w[1];
        let d0 = far0 - frr0;
        let d1 = far1 - frr1;
        if d0 == 0.0 {
            return far0;
        }
        if d0 > 0.0 && d1 <= 0.0 {
            let alpha = d0 / (d0 - d1);
            return far0 + alpha * (far1 - far0);
        }
    }
    let (far, frr) = curve[curve.len() - 1];
    0.5 * (far + frr)
}

/// Square evaluation grid `[-h, h]²` with `size` nodes per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KdeGrid {
    pub size: usize,
    pub half_extent: f64,
}

impl KdeGrid {
    pub fn new(size: usize) -> Self {
        KdeGrid {
            size,
            half_extent: 1.5,
        }
    }

    pub fn step(&self) -> f64 {
        2.0 * self.half_extent / (self.size - 1) as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.half_extent + i as f64 * self.step()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub grid: KdeGrid,
    pub bandwidth: f64,
    /// Row-major over `(x index, y index)`.
    pub density: Vec<f64>,
}

impl DensityField {
    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.density[ix * self.grid.size + iy]
    }

    /// `(x, y, density)` for every node.
    pub fn rows(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let g = self.grid;
        (0..g.size).flat_map(move |ix| {
            (0..g.size).map(move |iy| (g.coord(ix), g.coord(iy), self.at(ix, iy)))
        })
    }

    pub fn argmax(&self) -> (usize, usize) {
        let (best, _) =
            self.density
                .iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |acc, (i, &v)| {
                        if v > acc.1 {
                            (i, v)
                        } else {
                            acc
                        }
                    },
                );
        (best / self.grid.size, best % self.grid.size)
    }
}

/// Scott's rule `N^{-1/6}·σ̂`, with `σ̂` the root mean of the two per-axis
/// sample variances.
pub fn scott_bandwidth(points: &[[f64; 2]]) -> f64 {
    let n = points.len();
    if n < 2 {
        return 0.0;
    }
    let mut var = 0.0;
    for axis in 0..2 {
        let mean = points.iter().map(|p| p[axis]).sum::<f64>() / n as f64;
        var += points.iter().map(|p| (p[axis] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    }
    (n as f64).powf(-1.0 / 6.0) * (var / 2.0).sqrt()
}

/// Isotropic Gaussian kernel density on a grid.
pub fn kde_density_2d(
    points: &[[f64; 2]],
    grid: KdeGrid,
    bandwidth: Option<f64>,
) -> Result<DensityField> {
    if points.is_empty() {
        return Err(Error::Contract("kde needs at least one point".into()));
    }
    if grid.size < 2 || grid.half_extent <= 0.0 {
        return Err(Error::Parameter(format!(
            "grid needs >= 2 nodes and positive extent, got {} and {}",
            grid.size, grid.half_extent
        )));
    }
    let bw = bandwidth.unwrap_or_else(|| scott_bandwidth(points));
    if !(bw > 0.0 && bw.is_finite()) {
        return Err(Error::Parameter(format!(
            "bandwidth must be positive, got {bw}"
        )));
    }
    let two_var = 2.0 * bw * bw;
    let norm = 1.0 / (points.len() as f64 * std::f64::consts::PI * two_var);
    let mut density = Vec::with_capacity(grid.size * grid.size);
    for ix in 0..grid.size {
        let gx = grid.coord(ix);
        for iy in 0..grid.size {
            let gy = grid.coord(iy);
            let s: f64 = points
                .iter()
                .map(|p| (-((gx - p[0]).powi(2) + (gy - p[1]).powi(2)) / two_var).exp())
                .sum();
            density.push(norm * s);
        }
    }
    Ok(DensityField {
        grid,
        bandwidth: bw,
        density,
    })
}
