use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::curve::{curve_length, segment_speeds, speed_variation, DiscreteCurve};
use super::{fd_step, MetricField};
use crate::error::{Error, Result};
use crate::linalg::solve_tridiagonal;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeodesicConfig {
    /// Number of uniform segments on `[0, 1]`.
    pub nodes: usize,
    pub max_iters: usize,
    /// Relative energy decrease over `window` iterations that counts as converged.
    pub tolerance: f64,
    pub window: usize,
}

impl Default for GeodesicConfig {
    fn default() -> Self {
        GeodesicConfig {
            nodes: 64,
            max_iters: 5000,
            tolerance: 1e-10,
            window: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Geodesic {
    /// Lowest-energy curve seen.
    pub curve: DiscreteCurve,
    pub energy: f64,
    pub length: f64,
    /// Coefficient of variation of the segment speeds.
    pub speed_cv: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Interior nodes stacked as a `(K-1) × d` matrix, endpoints held fixed.
struct Problem<'m, M: ?Sized> {
    metric: &'m M,
    za: DVector<f64>,
    zb: DVector<f64>,
    segments: usize,
}

impl<M: MetricField + ?Sized> Problem<'_, M> {
    fn dt(&self) -> f64 {
        1.0 / self.segments as f64
    }

    fn node(&self, z: &DMatrix<f64>, k: usize) -> DVector<f64> {
        if k == 0 {
            self.za.clone()
        } else if k == self.segments {
            self.zb.clone()
        } else {
            z.row(k - 1).transpose()
        }
    }

    fn energy(&self, z: &DMatrix<f64>) -> Result<f64> {
        let mut e = 0.0;
        let mut prev = self.node(z, 0);
        for k in 0..self.segments {
            let next = self.node(z, k + 1);
            let mid = (&prev + &next) * 0.5;
            let dz = &next - &prev;
            e += self.metric.quad_form(mid.as_slice(), dz.as_slice())?;
            prev = next;
        }
        Ok(0.5 * e / self.dt())
    }

    /// Energy gradient plus the average metric along the curve.
    fn gradient(&self, z: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let d = self.za.len();
        let dt = self.dt();
        let mut grad = DMatrix::zeros(self.segments - 1, d);
        let mut avg = DMatrix::zeros(d, d);
        let mut prev = self.node(z, 0);
        for k in 0..self.segments {
            let next = self.node(z, k + 1);
            let mid = (&prev + &next) * 0.5;
            let dz = &next - &prev;
            let m = self.metric.metric(mid.as_slice())?;
            let mdz = &m * &dz / dt;
            avg += &m;
            let h = fd_step(mid.as_slice());
            let mut shifted = mid.clone();
            let mut dq = DVector::zeros(d);
            for a in 0..d {
                shifted[a] = mid[a] + h;
                let qp = self.metric.metric(shifted.as_slice())?;
                shifted[a] = mid[a] - h;
                let qm = self.metric.metric(shifted.as_slice())?;
                shifted[a] = mid[a];
                dq[a] = dz.dot(&((qp - qm) * &dz)) / (2.0 * h);
            }
            let shared = dq / (4.0 * dt);
            if k > 0 {
                let g = -&mdz + &shared;
                for a in 0..d {
                    grad[(k - 1, a)] += g[a];
                }
            }
            if k + 1 < self.segments {
                let g = &mdz + &shared;
                for a in 0..d {
                    grad[(k, a)] += g[a];
                }
            }
            prev = next;
        }
        avg /= self.segments as f64;
        Ok((grad, avg))
    }

    /// `T⁻¹ G M̄⁻¹` with `T` the discrete Laplacian `(2, -1) / Δt`: the
    /// Newton step for the energy of a constant metric.
    fn direction(&self, grad: &DMatrix<f64>, avg: &DMatrix<f64>) -> DMatrix<f64> {
        let d = avg.nrows();
        let tr = avg.trace();
        let reg = if tr > 0.0 {
            avg + DMatrix::identity(d, d) * (1e-12 * tr)
        } else {
            DMatrix::identity(d, d)
        };
        let inv = reg
            .clone()
            .cholesky()
            .map(|c| c.inverse())
            .or_else(|| reg.try_inverse())
            .unwrap_or_else(|| DMatrix::identity(d, d));
        let rhs = grad * inv;
        let n = grad.nrows();
        let dt = self.dt();
        let diag = alloc::vec![2.0 / dt; n];
        let off = alloc::vec![-1.0 / dt; n.saturating_sub(1)];
        let mut out = DMatrix::zeros(n, d);
        for a in 0..d {
            let col = solve_tridiagonal(&diag, &off, &rhs.column(a).into_owned());
            out.set_column(a, &col);
        }
        out
    }

    fn to_curve(&self, z: &DMatrix<f64>) -> Result<DiscreteCurve> {
        let d = self.za.len();
        let k = self.segments;
        let params = (0..=k)
            .map(|i| if i == k { 1.0 } else { i as f64 / k as f64 })
            .collect();
        let mut points = DMatrix::zeros(d, k + 1);
        for i in 0..=k {
            points.set_column(i, &self.node(z, i));
        }
        DiscreteCurve::new(params, points)
    }
}

/// Minimize the discrete energy with fixed endpoints, starting from the chord.
///
/// Non-convergence is reported through [`Geodesic::converged`] rather than as
/// an error; metric failures are errors.
pub fn geodesic<M: MetricField + ?Sized>(
    metric: &M,
    z_a: &[f64],
    z_b: &[f64],
    cfg: &GeodesicConfig,
) -> Result<Geodesic> {
    let d = metric.dim();
    Error::check_dim("geodesic start", d, z_a.len())?;
    Error::check_dim("geodesic end", d, z_b.len())?;
    if cfg.nodes == 0 {
        return Err(Error::input("geodesic needs at least one segment"));
    }
    if !(cfg.tolerance > 0.0) || cfg.window == 0 {
        return Err(Error::input(
            "geodesic tolerance and window must be positive",
        ));
    }
    if z_a.iter().chain(z_b).any(|v| !v.is_finite()) {
        return Err(Error::input("geodesic endpoints must be finite"));
    }
    if z_a == z_b {
        let curve = DiscreteCurve::straight(z_a, z_b, 1, 0.0, 1.0)?;
        return Ok(Geodesic {
            curve,
            energy: 0.0,
            length: 0.0,
            speed_cv: 0.0,
            iterations: 0,
            converged: true,
        });
    }

    let problem = Problem {
        metric,
        za: DVector::from_column_slice(z_a),
        zb: DVector::from_column_slice(z_b),
        segments: cfg.nodes,
    };
    let k = cfg.nodes;
    let mut z = DMatrix::from_fn(k - 1, d, |i, a| {
        let s = (i + 1) as f64 / k as f64;
        z_a[a] + s * (z_b[a] - z_a[a])
    });
    let mut energy = problem.energy(&z)?;
    let mut history: Vec<f64> = alloc::vec![energy];
    let mut step = 1.0;
    let mut converged = k == 1;
    let mut iterations = 0;

    while !converged && iterations < cfg.max_iters {
        let (grad, avg) = problem.gradient(&z)?;
        let dir = problem.direction(&grad, &avg);
        let slope = grad.dot(&dir);
        if !(slope > 0.0) || slope <= f64::EPSILON * energy {
            converged = true;
            break;
        }
        let mut accepted = false;
        let mut alpha = step;
        while alpha > 1e-12 {
            let trial = &z - &dir * alpha;
            let e = problem.energy(&trial)?;
            if e <= energy - 1e-4 * alpha * slope {
                z = trial;
                energy = e;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        iterations += 1;
        if !accepted {
            // No representable decrease left along a descent direction.
            converged = slope <= cfg.tolerance * energy;
            break;
        }
        step = (2.0 * alpha).min(2.0);
        history.push(energy);
        if history.len() > cfg.window {
            let old = history[history.len() - 1 - cfg.window];
            if (old - energy) <= cfg.tolerance * energy.abs() {
                converged = true;
            }
        }
        if energy == 0.0 {
            converged = true;
        }
    }

    let curve = problem.to_curve(&z)?;
    let length = curve_length(metric, &curve)?;
    let speed_cv = speed_variation(&segment_speeds(metric, &curve)?);
    Ok(Geodesic {
        curve,
        energy,
        length,
        speed_cv,
        iterations,
        converged,
    })
}
