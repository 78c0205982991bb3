//! Maximum-likelihood GPLVM fitting.
//!
//! Joint projected gradient ascent over the latent points and the
//! log-hyperparameters, with an Armijo backtracking line search. The
//! objective is the GP log marginal likelihood summed over the m output
//! dimensions, which share one kernel:
//!
//! ```text
//! log p(Y | X) = -½ tr(R⁻¹ YᵀY) - (m/2) log det R - (mN/2) log 2π
//! ```

use alloc::vec::Vec;
use alloc::{format, vec};
use core::f64::consts::PI;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use super::{Dataset, PosteriorGP};
use crate::error::{Error, Result};
use crate::kernels::{gram_sym, sq_dist, KernelFamily, KernelSpec};
use crate::linalg::cholesky_jittered;
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub latent_dim: usize,
    pub family: KernelFamily,
    pub max_iters: usize,
    /// Stop once the relative likelihood change of an accepted step drops below this.
    pub step_tolerance: f64,
    pub seed: u64,
    pub optimize_hyperparams: bool,
    /// Initial observation-noise variance; `None` picks 1% of the mean squared datum.
    pub init_noise: Option<f64>,
}

impl FitConfig {
    pub fn new(latent_dim: usize, family: KernelFamily) -> Self {
        FitConfig {
            latent_dim,
            family,
            max_iters: 500,
            step_tolerance: 1e-9,
            seed: 0,
            optimize_hyperparams: true,
            init_noise: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub latents: DMatrix<f64>,
    pub spec: KernelSpec,
    pub noise: f64,
    pub log_likelihood: f64,
    /// Log likelihood after initialization and after every accepted step.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl FitResult {
    pub fn posterior(&self, data: &Dataset) -> Result<PosteriorGP> {
        PosteriorGP::new(
            self.spec,
            self.latents.clone(),
            data.y().clone(),
            self.noise,
        )
    }
}

/// Log marginal likelihood of `data` under the prior `spec` at latents `x`.
pub fn log_marginal_likelihood(
    spec: &KernelSpec,
    x: &DMatrix<f64>,
    data: &Dataset,
    noise: f64,
) -> Result<f64> {
    Error::check_dim("latent count", data.len(), x.ncols())?;
    let problem = Problem::new(data, x.nrows(), spec.family(), false, noise > 0.0, 0.0);
    let theta = problem.pack(x, spec, noise);
    Ok(problem.evaluate(&theta, false)?.ll)
}

struct Problem {
    /// YᵀY, N × N.
    gram_y: DMatrix<f64>,
    m: usize,
    n: usize,
    d: usize,
    family: KernelFamily,
    fit_kernel: bool,
    fit_noise: bool,
    log_noise_floor: f64,
}

struct Evaluation {
    ll: f64,
    grad: Vec<f64>,
}

impl Problem {
    fn new(
        data: &Dataset,
        d: usize,
        family: KernelFamily,
        fit_kernel: bool,
        fit_noise: bool,
        noise_floor: f64,
    ) -> Self {
        let y = data.y();
        Problem {
            gram_y: y.tr_mul(y),
            m: y.nrows(),
            n: y.ncols(),
            d,
            family,
            fit_kernel: fit_kernel && family == KernelFamily::Rbf,
            fit_noise,
            log_noise_floor: if noise_floor > 0.0 {
                libm::log(noise_floor)
            } else {
                f64::NEG_INFINITY
            },
        }
    }

    fn n_latent(&self) -> usize {
        self.d * self.n
    }

    // θ = [vec(X) column-major, (log s, log l)?, (log σ₁²)?]; fixed values live
    // in `fixed` slots appended after the free ones.
    fn pack(&self, x: &DMatrix<f64>, spec: &KernelSpec, noise: f64) -> Vec<f64> {
        let mut theta: Vec<f64> = x.as_slice().to_vec();
        if let KernelSpec::Rbf {
            variance,
            length_scale,
        } = *spec
        {
            theta.push(libm::log(variance));
            theta.push(libm::log(length_scale));
        }
        theta.push(if noise > 0.0 {
            libm::log(noise)
        } else {
            f64::NEG_INFINITY
        });
        theta
    }

    fn unpack(&self, theta: &[f64]) -> (DMatrix<f64>, KernelSpec, f64) {
        let nl = self.n_latent();
        let x = DMatrix::from_column_slice(self.d, self.n, &theta[..nl]);
        let (spec, rest) = match self.family {
            KernelFamily::Rbf => (
                KernelSpec::Rbf {
                    variance: libm::exp(theta[nl]),
                    length_scale: libm::exp(theta[nl + 1]),
                },
                nl + 2,
            ),
            KernelFamily::Linear => (KernelSpec::Linear, nl),
        };
        (x, spec, libm::exp(theta[rest]))
    }

    /// Mask of coordinates the optimizer may move.
    fn free(&self) -> Vec<bool> {
        let mut free = vec![true; self.n_latent()];
        if self.family == KernelFamily::Rbf {
            free.push(self.fit_kernel);
            free.push(self.fit_kernel);
        }
        free.push(self.fit_noise);
        free
    }

    fn project(&self, theta: &mut [f64]) {
        let last = theta.len() - 1;
        if self.fit_noise && theta[last] < self.log_noise_floor {
            theta[last] = self.log_noise_floor;
        }
    }

    fn evaluate(&self, theta: &[f64], with_grad: bool) -> Result<Evaluation> {
        let (x, spec, noise) = self.unpack(theta);
        let k = gram_sym(&spec, &x);
        let mut r = k.clone();
        for i in 0..self.n {
            r[(i, i)] += noise;
        }
        let chol = cholesky_jittered(&r)?;
        let rinv = chol.chol.inverse();
        let rinv_s = &rinv * &self.gram_y;
        let m = self.m as f64;
        let ll = -0.5 * rinv_s.trace()
            - 0.5 * m * chol.log_det()
            - 0.5 * m * self.n as f64 * libm::log(2.0 * PI);
        if !ll.is_finite() {
            return Err(Error::numerical("log marginal likelihood is not finite"));
        }
        if !with_grad {
            return Ok(Evaluation {
                ll,
                grad: Vec::new(),
            });
        }

        // dLL/dR = ½ W with W = R⁻¹ S R⁻¹ - m R⁻¹.
        let w = &rinv_s * &rinv - &rinv * m;
        let mut grad = vec![0.0; theta.len()];
        let mut buf = vec![0.0; self.d];
        for j in 0..self.n {
            let xj = x.column(j);
            for kk in 0..self.n {
                spec.grad_p_into(xj.as_slice(), x.column(kk).as_slice(), &mut buf);
                let wjk = w[(j, kk)];
                for a in 0..self.d {
                    grad[j * self.d + a] += wjk * buf[a];
                }
            }
        }
        let nl = self.n_latent();
        let mut idx = nl;
        if let KernelSpec::Rbf { length_scale, .. } = spec {
            let l2 = length_scale * length_scale;
            let mut g_var = 0.0;
            let mut g_len = 0.0;
            for j in 0..self.n {
                for kk in 0..self.n {
                    let wk = w[(j, kk)] * k[(j, kk)];
                    g_var += wk;
                    g_len += wk * sq_dist(x.column(j).as_slice(), x.column(kk).as_slice()) / l2;
                }
            }
            grad[idx] = 0.5 * g_var;
            grad[idx + 1] = 0.5 * g_len;
            idx += 2;
        }
        grad[idx] = 0.5 * noise * w.trace();
        for (g, free) in grad.iter_mut().zip(self.free()) {
            if !free {
                *g = 0.0;
            }
        }
        Ok(Evaluation { ll, grad })
    }
}

/// Top-`d` principal component scores of the centered data, each latent
/// coordinate scaled to unit sample variance. Directions without variance
/// stay at zero.
pub(crate) fn pca_init(y: &DMatrix<f64>, d: usize) -> DMatrix<f64> {
    let n = y.ncols();
    let mut yc = y.clone();
    for mut row in yc.row_iter_mut() {
        let mean = row.sum() / n as f64;
        row.add_scalar_mut(-mean);
    }
    let g = yc.tr_mul(&yc);
    let eig = g.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let top = eig.eigenvalues[order[0]].max(0.0);
    let mut x = DMatrix::zeros(d, n);
    for (a, &col) in order.iter().take(d).enumerate() {
        let lambda = eig.eigenvalues[col];
        if !(top > 0.0) || lambda <= 1e-12 * top {
            continue;
        }
        let v = eig.eigenvectors.column(col);
        // Fix the sign so the largest-magnitude entry is positive.
        let pivot = v
            .iter()
            .fold(0.0f64, |acc, &e| if e.abs() > acc.abs() { e } else { acc });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        let scale = sign * libm::sqrt(n as f64);
        for j in 0..n {
            x[(a, j)] = v[j] * scale;
        }
    }
    x
}

fn min_pairwise_distance(x: &DMatrix<f64>) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..x.ncols() {
        for j in 0..i {
            best = best.min(sq_dist(x.column(i).as_slice(), x.column(j).as_slice()));
        }
    }
    libm::sqrt(best)
}

/// Fit latent points and hyperparameters by maximizing the marginal likelihood.
pub fn fit_gplvm(data: &Dataset, config: &FitConfig) -> Result<FitResult> {
    let (m, n) = (data.ambient_dim(), data.len());
    let d = config.latent_dim;
    if d == 0 || d > m.min(n) {
        return Err(Error::input(format!(
            "latent dimension {d} must lie in 1..={}",
            m.min(n)
        )));
    }
    if config.max_iters == 0 || !(config.step_tolerance > 0.0) {
        return Err(Error::input(
            "max_iters and step_tolerance must be positive",
        ));
    }
    let y = data.y();
    let power = y.iter().map(|v| v * v).sum::<f64>() / (m * n) as f64;
    let power = if power > 0.0 { power } else { 1.0 };
    let noise = config.init_noise.unwrap_or(0.01 * power);
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::input("initial noise must be finite and nonnegative"));
    }

    let mut x = pca_init(y, d);
    if noise == 0.0 {
        let scale = x.amax().max(1.0);
        match config.family {
            KernelFamily::Linear if n > d => {
                return Err(Error::Degenerate(format!(
                    "linear kernel with zero noise is singular for N = {n} > d = {d}"
                )))
            }
            KernelFamily::Rbf if min_pairwise_distance(&x) <= 1e-12 * scale => {
                return Err(Error::Degenerate(
                    "coincident initial latents make K(X,X) singular with zero noise".into(),
                ))
            }
            _ => {}
        }
    }
    let mut rng = substream(config.seed, 0);
    let amp = 1e-6 * x.amax().max(1.0);
    for v in x.iter_mut() {
        let e: f64 = StandardNormal.sample(&mut rng);
        *v += amp * e;
    }

    let spec = match config.family {
        KernelFamily::Rbf => KernelSpec::Rbf {
            variance: power,
            length_scale: 1.0,
        },
        KernelFamily::Linear => KernelSpec::Linear,
    };
    let problem = Problem::new(
        data,
        d,
        config.family,
        config.optimize_hyperparams,
        config.optimize_hyperparams && noise > 0.0,
        1e-8 * power,
    );
    let mut theta = problem.pack(&x, &spec, noise);
    let mut current = problem.evaluate(&theta, true)?;
    let mut trace = vec![current.ll];
    let mut step = {
        let gnorm = norm(&current.grad);
        if gnorm > 0.0 {
            0.1 / gnorm
        } else {
            0.0
        }
    };
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iters {
        iterations += 1;
        if norm(&current.grad) == 0.0 {
            converged = true;
            break;
        }
        let mut accepted = None;
        for _ in 0..60 {
            let mut cand: Vec<f64> = theta
                .iter()
                .zip(&current.grad)
                .map(|(t, g)| t + step * g)
                .collect();
            problem.project(&mut cand);
            let ascent: f64 = cand
                .iter()
                .zip(&theta)
                .zip(&current.grad)
                .filter(|((c, t), _)| c.is_finite() && t.is_finite())
                .map(|((c, t), g)| (c - t) * g)
                .sum();
            if let Ok(eval) = problem.evaluate(&cand, true) {
                if eval.ll >= current.ll + 1e-4 * ascent && eval.ll >= current.ll {
                    accepted = Some((cand, eval));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((cand, eval)) = accepted else {
            converged = true;
            break;
        };
        let change = (eval.ll - current.ll).abs() / current.ll.abs().max(1.0);
        theta = cand;
        current = eval;
        trace.push(current.ll);
        step *= 2.0;
        if change < config.step_tolerance {
            converged = true;
            break;
        }
    }

    let (latents, spec, noise) = problem.unpack(&theta);
    let noise =
        if problem.fit_noise || noise > 0.0 && theta.last().copied().unwrap_or(0.0).is_finite() {
            noise
        } else {
            0.0
        };
    Ok(FitResult {
        latents,
        spec,
        noise,
        log_likelihood: current.ll,
        trace,
        iterations,
        converged,
    })
}

fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = substream(seed, 99);
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let y = random_matrix(5, 6, 1);
        let data = Dataset::new(y).unwrap();
        for family in [KernelFamily::Rbf, KernelFamily::Linear] {
            let problem = Problem::new(&data, 2, family, true, true, 0.0);
            let x = random_matrix(2, 6, 2);
            let spec = match family {
                KernelFamily::Rbf => KernelSpec::rbf(1.3, 0.9).unwrap(),
                KernelFamily::Linear => KernelSpec::Linear,
            };
            let theta = problem.pack(&x, &spec, 0.2);
            let eval = problem.evaluate(&theta, true).unwrap();
            for i in 0..theta.len() {
                let h = 1e-6 * (1.0 + theta[i].abs());
                let mut tp = theta.clone();
                let mut tm = theta.clone();
                tp[i] += h;
                tm[i] -= h;
                let fd = (problem.evaluate(&tp, false).unwrap().ll
                    - problem.evaluate(&tm, false).unwrap().ll)
                    / (2.0 * h);
                let err = (fd - eval.grad[i]).abs();
                assert!(
                    err <= 1e-5 * (1.0 + fd.abs()),
                    "{family:?} coord {i}: fd {fd} vs {}",
                    eval.grad[i]
                );
            }
        }
    }

    #[test]
    fn latent_dim_bounds() {
        let data = Dataset::new(random_matrix(3, 5, 3)).unwrap();
        assert!(fit_gplvm(&data, &FitConfig::new(4, KernelFamily::Rbf)).is_err());
        assert!(fit_gplvm(&data, &FitConfig::new(0, KernelFamily::Rbf)).is_err());
    }

    #[test]
    fn trace_is_monotone_and_deterministic() {
        let data = Dataset::new(random_matrix(6, 12, 4)).unwrap();
        let mut cfg = FitConfig::new(2, KernelFamily::Rbf);
        cfg.max_iters = 60;
        cfg.seed = 11;
        let a = fit_gplvm(&data, &cfg).unwrap();
        let b = fit_gplvm(&data, &cfg).unwrap();
        assert!(a.trace.windows(2).all(|w| w[1] >= w[0]));
        assert!(a.log_likelihood >= a.trace[0]);
        assert_eq!(a.latents, b.latents);
        assert_eq!(a.spec, b.spec);
        assert_eq!(a.noise.to_bits(), b.noise.to_bits());
    }

    #[test]
    fn pca_init_has_unit_variance() {
        let y = random_matrix(4, 20, 5);
        let x = pca_init(&y, 2);
        for row in x.row_iter() {
            let mean = row.sum() / 20.0;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 20.0;
            assert!(mean.abs() < 1e-10);
            assert!((var - 1.0).abs() < 1e-10);
        }
    }
}
