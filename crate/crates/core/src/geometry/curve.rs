use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::MetricField;
use crate::error::{Error, Result};

/// A polyline in latent space: nodes `z_0 … z_K` at strictly increasing
/// parameters `t_0 < … < t_K`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteCurve {
    params: Vec<f64>,
    /// d × (K+1), one node per column.
    points: DMatrix<f64>,
}

impl DiscreteCurve {
    pub fn new(params: Vec<f64>, points: DMatrix<f64>) -> Result<Self> {
        Error::check_dim("curve node count", params.len(), points.ncols())?;
        if params.len() < 2 {
            return Err(Error::input("a curve needs at least two nodes"));
        }
        if points.nrows() == 0 {
            return Err(Error::input("curve points need at least one coordinate"));
        }
        if params.iter().chain(points.iter()).any(|v| !v.is_finite()) {
            return Err(Error::input("curve parameters and points must be finite"));
        }
        if params.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::input("curve parameters must be strictly increasing"));
        }
        Ok(DiscreteCurve { params, points })
    }

    /// `segments` equal pieces of the chord from `from` to `to` on `[a, b]`.
    pub fn straight(from: &[f64], to: &[f64], segments: usize, a: f64, b: f64) -> Result<Self> {
        Error::check_dim("curve endpoints", from.len(), to.len())?;
        if segments == 0 {
            return Err(Error::input("a curve needs at least one segment"));
        }
        let k = segments as f64;
        let params = (0..=segments)
            .map(|i| {
                if i == segments {
                    b
                } else {
                    a + (b - a) * i as f64 / k
                }
            })
            .collect();
        let points = DMatrix::from_fn(from.len(), segments + 1, |r, i| {
            let s = i as f64 / k;
            if i == segments {
                to[r]
            } else {
                from[r] + s * (to[r] - from[r])
            }
        });
        DiscreteCurve::new(params, points)
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn point(&self, k: usize) -> &[f64] {
        let d = self.points.nrows();
        &self.points.as_slice()[k * d..(k + 1) * d]
    }

    pub fn dim(&self) -> usize {
        self.points.nrows()
    }

    /// Number of nodes, `K + 1`.
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn segments(&self) -> usize {
        self.params.len() - 1
    }

    pub fn start(&self) -> f64 {
        self.params[0]
    }

    pub fn end(&self) -> f64 {
        self.params[self.params.len() - 1]
    }

    pub(crate) fn delta(&self, k: usize) -> DVector<f64> {
        self.points.column(k + 1) - self.points.column(k)
    }

    pub(crate) fn midpoint(&self, k: usize) -> DVector<f64> {
        (self.points.column(k + 1) + self.points.column(k)) * 0.5
    }

    /// Piecewise-linear position at parameter `t` (clamped to the domain).
    pub fn eval(&self, t: f64) -> DVector<f64> {
        let t = t.clamp(self.start(), self.end());
        let k = match self
            .params
            .binary_search_by(|p| p.partial_cmp(&t).unwrap_or(core::cmp::Ordering::Less))
        {
            Ok(i) => return self.points.column(i).into_owned(),
            Err(i) => i.saturating_sub(1).min(self.segments() - 1),
        };
        let s = (t - self.params[k]) / (self.params[k + 1] - self.params[k]);
        self.points.column(k) * (1.0 - s) + self.points.column(k + 1) * s
    }
}

/// `Δz_kᵀ M(z̄_k) Δz_k` for every segment.
fn segment_quads<M: MetricField + ?Sized>(metric: &M, curve: &DiscreteCurve) -> Result<Vec<f64>> {
    Error::check_dim("curve dimension", metric.dim(), curve.dim())?;
    (0..curve.segments())
        .map(|k| {
            let dz = curve.delta(k);
            metric.quad_form(curve.midpoint(k).as_slice(), dz.as_slice())
        })
        .collect()
}

/// Composite midpoint rule for `∫ √(ċᵀ M ċ) dt`.
pub fn curve_length<M: MetricField + ?Sized>(metric: &M, curve: &DiscreteCurve) -> Result<f64> {
    Ok(segment_quads(metric, curve)?
        .iter()
        .map(|q| libm::sqrt(*q))
        .sum())
}

/// Composite midpoint rule for `½ ∫ ċᵀ M ċ dt`.
pub fn curve_energy<M: MetricField + ?Sized>(metric: &M, curve: &DiscreteCurve) -> Result<f64> {
    let quads = segment_quads(metric, curve)?;
    Ok(0.5
        * quads
            .iter()
            .enumerate()
            .map(|(k, q)| q / (curve.params[k + 1] - curve.params[k]))
            .sum::<f64>())
}

/// Metric speed of every segment.
pub fn segment_speeds<M: MetricField + ?Sized>(
    metric: &M,
    curve: &DiscreteCurve,
) -> Result<Vec<f64>> {
    let quads = segment_quads(metric, curve)?;
    Ok(quads
        .iter()
        .enumerate()
        .map(|(k, q)| libm::sqrt(*q) / (curve.params[k + 1] - curve.params[k]))
        .collect())
}

/// Coefficient of variation (population std / mean) of the segment speeds.
pub fn speed_variation(speeds: &[f64]) -> f64 {
    let n = speeds.len() as f64;
    let mean = speeds.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return 0.0;
    }
    let var = speeds.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    libm::sqrt(var) / mean
}

/// Same nodes, parameters re-spaced in proportion to metric arc length, so
/// every segment has the same metric speed. Length is unchanged.
pub fn reparametrize_constant_speed<M: MetricField + ?Sized>(
    metric: &M,
    curve: &DiscreteCurve,
) -> Result<DiscreteCurve> {
    let lengths: Vec<f64> = segment_quads(metric, curve)?
        .iter()
        .map(|q| libm::sqrt(*q))
        .collect();
    let total: f64 = lengths.iter().sum();
    if !(total > 0.0) {
        return Err(Error::input("cannot reparametrize a curve of zero length"));
    }
    if let Some(k) = lengths.iter().position(|&l| l == 0.0) {
        return Err(Error::input(alloc::format!(
            "segment {k} has zero metric length"
        )));
    }
    let (a, b) = (curve.start(), curve.end());
    let mut params = Vec::with_capacity(curve.len());
    let mut acc = 0.0;
    params.push(a);
    for l in &lengths[..lengths.len() - 1] {
        acc += l;
        params.push(a + (b - a) * acc / total);
    }
    params.push(b);
    DiscreteCurve::new(params, curve.points.clone())
}
