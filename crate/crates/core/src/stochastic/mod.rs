//! Random curve lengths under a posterior process and the expansions that
//! relate them to the expected metric.

mod balanced;
mod mc;

pub use balanced::{
    balanced_stats, balanced_stats_empirical, chi_mean, expected_norm_expansion,
    sample_squared_norm, taylor_sqrt, BalancedStats, ComponentFamily, EmpiricalBalanced,
};
pub use mc::{
    assemble_report, bound_constants, bound_report, expected_length_mc, expected_length_mc_with,
    loglog_slope, mean_curve_vs_expected_length, BoundReport, BoundRow, Estimator, LengthEstimate,
    LengthSampler, Replicate,
};

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::DiscreteCurve;
use crate::gp::{symmetrize, PosteriorGP};
use crate::linalg::min_eigenvalue;
use crate::rng::substream;
use rand::seq::SliceRandom;

/// Velocity process of a symmetric posterior along a curve: every output
/// dimension shares `node_cov`, and differs only in its mean velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveProcess {
    nodes: Vec<f64>,
    mean_velocities: DMatrix<f64>,
    node_cov: DMatrix<f64>,
}

impl CurveProcess {
    /// `mean_velocities` is m × (K+1); `node_cov` is (K+1) × (K+1) symmetric PSD.
    pub fn new(
        nodes: Vec<f64>,
        mean_velocities: DMatrix<f64>,
        node_cov: DMatrix<f64>,
    ) -> Result<Self> {
        let k = nodes.len();
        if k < 2 {
            return Err(Error::input("a curve process needs at least two nodes"));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) || nodes.iter().any(|t| !t.is_finite()) {
            return Err(Error::input(
                "process nodes must be finite and strictly increasing",
            ));
        }
        Error::check_dim("mean velocity columns", k, mean_velocities.ncols())?;
        Error::check_dim("node covariance rows", k, node_cov.nrows())?;
        Error::check_dim("node covariance columns", k, node_cov.ncols())?;
        if mean_velocities.nrows() == 0 {
            return Err(Error::input(
                "a curve process needs at least one output dimension",
            ));
        }
        if mean_velocities
            .iter()
            .chain(node_cov.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::numerical("curve process has non-finite entries"));
        }
        let scale = node_cov
            .diagonal()
            .iter()
            .fold(0.0_f64, |a, v| a.max(v.abs()));
        let asym = (&node_cov - node_cov.transpose()).amax();
        if asym > 1e-12 * scale.max(1.0) {
            return Err(Error::numerical(format!(
                "node covariance is not symmetric (max asymmetry {asym:e})"
            )));
        }
        if scale > 0.0 {
            let lo = min_eigenvalue(&node_cov);
            if lo < -1e-9 * scale {
                return Err(Error::numerical(format!(
                    "node covariance is not positive semi-definite (minimum eigenvalue {lo:e})"
                )));
            }
        }
        Ok(CurveProcess {
            nodes,
            mean_velocities,
            node_cov,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn mean_velocities(&self) -> &DMatrix<f64> {
        &self.mean_velocities
    }

    pub fn node_cov(&self) -> &DMatrix<f64> {
        &self.node_cov
    }

    /// Number of output dimensions m.
    pub fn ambient_dim(&self) -> usize {
        self.mean_velocities.nrows()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Same process with the velocity covariance multiplied by `factor`.
    pub fn scale_variance(&self, factor: f64) -> Result<Self> {
        CurveProcess::new(
            self.nodes.clone(),
            self.mean_velocities.clone(),
            &self.node_cov * factor,
        )
    }

    /// Same process with output dimension `i` taken from `order[i]` of this
    /// one. `order` must be a permutation of `0..m`.
    pub fn reorder_outputs(&self, order: &[usize]) -> Result<Self> {
        let m = self.ambient_dim();
        Error::check_dim("output order length", m, order.len())?;
        let mut seen = alloc::vec![false; m];
        for &i in order {
            if i >= m || core::mem::replace(&mut seen[i], true) {
                return Err(Error::input("output order is not a permutation"));
            }
        }
        Ok(CurveProcess {
            nodes: self.nodes.clone(),
            mean_velocities: self.mean_velocities.select_rows(order),
            node_cov: self.node_cov.clone(),
        })
    }

    /// Same process with the covariance dropped.
    pub fn mean_only(&self) -> Self {
        let k = self.len();
        CurveProcess {
            nodes: self.nodes.clone(),
            mean_velocities: self.mean_velocities.clone(),
            node_cov: DMatrix::zeros(k, k),
        }
    }

    pub(crate) fn check_n(&self, n: usize) -> Result<()> {
        if n == 0 || n > self.ambient_dim() {
            return Err(Error::input(format!(
                "slice size {n} outside [1, {}]",
                self.ambient_dim()
            )));
        }
        Ok(())
    }

    /// Per-node variance, round-off negatives clamped.
    pub(crate) fn variances(&self) -> Vec<f64> {
        self.node_cov
            .diagonal()
            .iter()
            .map(|v| v.max(0.0))
            .collect()
    }

    /// `(1/n) Σ_{i<n} μ′_i(t_k)²` for every node.
    pub(crate) fn mean_power(&self, n: usize) -> Vec<f64> {
        let mv = &self.mean_velocities;
        (0..self.len())
            .map(|k| (0..n).map(|i| mv[(i, k)] * mv[(i, k)]).sum::<f64>() / n as f64)
            .collect()
    }

    pub(crate) fn trapezoid(&self, values: &[f64]) -> f64 {
        trapezoid(&self.nodes, values)
    }
}

pub(crate) fn trapezoid(t: &[f64], v: &[f64]) -> f64 {
    t.windows(2)
        .zip(v.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

/// Seeded uniform permutation of `0..m`.
pub fn shuffled_order(m: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut substream(seed, u64::MAX));
    order
}

/// Resample `curve` at `nodes` uniform parameters and restrict the posterior
/// velocity process to it. Velocities are central differences of the
/// resampled polyline, one-sided at the ends.
pub fn restrict_to_curve(
    post: &PosteriorGP,
    curve: &DiscreteCurve,
    nodes: usize,
) -> Result<CurveProcess> {
    Error::check_dim("curve dimension", post.latent_dim(), curve.dim())?;
    if nodes < 2 {
        return Err(Error::input("restriction needs at least two nodes"));
    }
    let (a, b) = (curve.start(), curve.end());
    let k = nodes - 1;
    let t: Vec<f64> = (0..nodes)
        .map(|i| {
            if i == k {
                b
            } else {
                a + (b - a) * i as f64 / k as f64
            }
        })
        .collect();
    let points: Vec<DVector<f64>> = t.iter().map(|&s| curve.eval(s)).collect();
    let vel: Vec<DVector<f64>> = (0..nodes)
        .map(|i| {
            let (lo, hi) = (i.saturating_sub(1), (i + 1).min(k));
            (&points[hi] - &points[lo]) / (t[hi] - t[lo])
        })
        .collect();
    if vel.iter().all(|v| v.iter().all(|&x| x == 0.0)) {
        return Err(Error::input("cannot restrict to a curve of zero length"));
    }

    let m = post.ambient_dim();
    let mut mean_velocities = DMatrix::zeros(m, nodes);
    let mut whitened = DMatrix::zeros(post.len(), nodes);
    for i in 0..nodes {
        let g = post.grad_kx(points[i].as_slice()) * &vel[i];
        mean_velocities.set_column(i, &post.alpha().tr_mul(&g));
        whitened.set_column(i, &post.whiten_vec(&g));
    }
    let spec = post.spec();
    let mut node_cov = whitened.tr_mul(&whitened) * -1.0;
    for i in 0..nodes {
        for j in 0..=i {
            node_cov[(i, j)] += spec.cross_hessian_form(
                points[i].as_slice(),
                points[j].as_slice(),
                vel[i].as_slice(),
                vel[j].as_slice(),
            );
        }
    }
    for i in 0..nodes {
        for j in i + 1..nodes {
            node_cov[(i, j)] = node_cov[(j, i)];
        }
    }
    symmetrize(&mut node_cov);
    CurveProcess::new(t, mean_velocities, node_cov)
}

/// `m_n(t_k) = √(σ²(t_k) + (1/n) Σ_{i<n} μ′_i(t_k)²)`.
pub fn m_n_profile(cp: &CurveProcess, n: usize) -> Result<Vec<f64>> {
    cp.check_n(n)?;
    Ok(cp
        .variances()
        .iter()
        .zip(cp.mean_power(n))
        .map(|(s2, p)| libm::sqrt(s2 + p))
        .collect())
}

/// `Σ_n(t_k) = √(2σ⁴ + 4σ² (1/n) Σ_{i<n} μ′_i²)`.
pub fn sigma_n_profile(cp: &CurveProcess, n: usize) -> Result<Vec<f64>> {
    cp.check_n(n)?;
    Ok(cp
        .variances()
        .iter()
        .zip(cp.mean_power(n))
        .map(|(s2, p)| libm::sqrt(2.0 * s2 * s2 + 4.0 * s2 * p))
        .collect())
}

/// `L_n`: trapezoid integral of the `m_n` profile.
pub fn length_expected_metric(cp: &CurveProcess, n: usize) -> Result<f64> {
    Ok(cp.trapezoid(&m_n_profile(cp, n)?))
}

/// Trapezoid length of the mean curve, `∫ ‖E φ′_n(t)‖ dt`.
pub fn mean_curve_length(cp: &CurveProcess, n: usize) -> Result<f64> {
    cp.check_n(n)?;
    let speeds: Vec<f64> = cp.mean_power(n).iter().map(|p| libm::sqrt(*p)).collect();
    Ok(cp.trapezoid(&speeds))
}
