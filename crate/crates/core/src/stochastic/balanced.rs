use alloc::format;

use nalgebra::DMatrix;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Cubic Taylor polynomial of `√x` at 1 and the bound `(5/16)(x-1)⁴` on
/// `P(x) - √x`, which is never negative.
pub fn taylor_sqrt(x: f64) -> Result<(f64, f64)> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::input(format!(
            "taylor_sqrt needs a finite x >= 0, got {x}"
        )));
    }
    let u = x - 1.0;
    let p = 1.0 + 0.5 * u - 0.125 * u * u + 0.0625 * u * u * u;
    Ok((p, 0.3125 * u * u * u * u))
}

/// `E(w_n) ≈ m_n - Σ_n²/(8n m_n³)`.
pub fn expected_norm_expansion(m_n: f64, sigma_n: f64, n: usize) -> Result<f64> {
    if !(m_n > 0.0) {
        return Err(Error::input(format!("expansion needs m_n > 0, got {m_n}")));
    }
    if n == 0 {
        return Err(Error::input("expansion needs n >= 1"));
    }
    Ok(m_n - sigma_n * sigma_n / (8.0 * n as f64 * m_n * m_n * m_n))
}

/// `E‖Z‖/√n` for `Z` standard normal in `ℝⁿ`.
pub fn chi_mean(n: usize) -> f64 {
    let n = n as f64;
    libm::sqrt(2.0 / n) * libm::exp(libm::lgamma(0.5 * (n + 1.0)) - libm::lgamma(0.5 * n))
}

/// Distribution of the iid components `X_i` of `W_n = (X_1, …, X_n)/√n`,
/// all scaled to `E X² = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComponentFamily {
    Gaussian,
    /// Uniform on `[-√3, √3]`.
    Uniform,
    /// `X ≡ 1`.
    Deterministic,
}

impl ComponentFamily {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "gaussian" => Ok(ComponentFamily::Gaussian),
            "uniform" => Ok(ComponentFamily::Uniform),
            "deterministic" => Ok(ComponentFamily::Deterministic),
            other => Err(Error::input(format!(
                "unknown component family '{other}' (expected gaussian, uniform or deterministic)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ComponentFamily::Gaussian => "gaussian",
            ComponentFamily::Uniform => "uniform",
            ComponentFamily::Deterministic => "deterministic",
        }
    }

    /// `E X², E X⁴, E X⁶, E X⁸`.
    pub fn even_moments(&self) -> [f64; 4] {
        match self {
            ComponentFamily::Gaussian => [1.0, 3.0, 15.0, 105.0],
            ComponentFamily::Uniform => [1.0, 9.0 / 5.0, 27.0 / 7.0, 9.0],
            ComponentFamily::Deterministic => [1.0; 4],
        }
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            ComponentFamily::Gaussian => StandardNormal.sample(rng),
            ComponentFamily::Uniform => (2.0 * rng.random::<f64>() - 1.0) * libm::sqrt(3.0),
            ComponentFamily::Deterministic => 1.0,
        }
    }
}

/// Moments of `w_n² = ‖W_n‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalancedStats {
    pub n: usize,
    /// `√E(w_n²)`.
    pub m_n: f64,
    /// `√(n · Var(w_n²))`.
    pub sigma_n: f64,
    /// Third central moment of `w_n²`.
    pub mu3: f64,
    /// Fourth central moment of `w_n²`.
    pub mu4: f64,
}

impl BalancedStats {
    pub fn mu2(&self) -> f64 {
        self.sigma_n * self.sigma_n / self.n as f64
    }

    pub fn n2_mu3(&self) -> f64 {
        let n = self.n as f64;
        n * n * self.mu3
    }

    pub fn n2_mu4(&self) -> f64 {
        let n = self.n as f64;
        n * n * self.mu4
    }
}

/// Closed-form moments for iid components, from the central moments of
/// `X²`: `μ₃(w²) = μ₃(X²)/n²` and `μ₄(w²) = (n μ₄(X²) + 3n(n-1) μ₂(X²)²)/n⁴`.
pub fn balanced_stats(family: ComponentFamily, n: usize) -> Result<BalancedStats> {
    if n == 0 {
        return Err(Error::input("balanced statistics need n >= 1"));
    }
    let [a1, a2, a3, a4] = family.even_moments();
    let c2 = a2 - a1 * a1;
    let c3 = a3 - 3.0 * a2 * a1 + 2.0 * a1 * a1 * a1;
    let c4 = a4 - 4.0 * a3 * a1 + 6.0 * a2 * a1 * a1 - 3.0 * a1 * a1 * a1 * a1;
    let nf = n as f64;
    Ok(BalancedStats {
        n,
        m_n: libm::sqrt(a1),
        sigma_n: libm::sqrt(c2),
        mu3: c3 / (nf * nf),
        mu4: (nf * c4 + 3.0 * nf * (nf - 1.0) * c2 * c2) / (nf * nf * nf * nf),
    })
}

/// `‖W_n‖²` for one draw of `n` components.
pub fn sample_squared_norm<R: RngCore + ?Sized>(
    family: ComponentFamily,
    n: usize,
    rng: &mut R,
) -> f64 {
    (0..n)
        .map(|_| {
            let x = family.sample(rng);
            x * x
        })
        .sum::<f64>()
        / n as f64
}

/// Sample moments of `w_n²` with delta-method standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalBalanced {
    pub stats: BalancedStats,
    pub se_m_n: f64,
    pub se_sigma_n: f64,
    pub se_mu3: f64,
    pub se_mu4: f64,
    /// Sample mean of `w_n` and its standard error.
    pub mean_w: f64,
    pub se_mean_w: f64,
    /// Sample variance of `w_n`.
    pub var_w: f64,
}

impl EmpiricalBalanced {
    /// From samples of `w_n²`.
    pub fn from_squared_norms(n: usize, v: &[f64]) -> Result<Self> {
        let s = v.len();
        if s < 2 {
            return Err(Error::input(
                "balanced statistics need at least two samples",
            ));
        }
        if n == 0 {
            return Err(Error::input("balanced statistics need n >= 1"));
        }
        let sf = s as f64;
        let mean = v.iter().sum::<f64>() / sf;
        let central = |p: i32| v.iter().map(|x| libm::pow(x - mean, p as f64)).sum::<f64>() / sf;
        let (c2, c3, c4) = (central(2), central(3), central(4));
        // Influence functions of the sample central moments.
        let se = |f: &dyn Fn(f64) -> f64| {
            let vals: alloc::vec::Vec<f64> = v.iter().map(|x| f(x - mean)).collect();
            let m = vals.iter().sum::<f64>() / sf;
            let var = vals.iter().map(|y| (y - m) * (y - m)).sum::<f64>() / (sf - 1.0);
            libm::sqrt(var / sf)
        };
        let se_mean = se(&|d| d);
        let se_c2 = se(&|d| d * d);
        let se_c3 = se(&|d| d * d * d - 3.0 * c2 * d);
        let se_c4 = se(&|d| d * d * d * d - 4.0 * c3 * d);
        let nf = n as f64;
        let m_n = libm::sqrt(mean.max(0.0));
        let sigma_n = libm::sqrt(nf * c2);

        let w: alloc::vec::Vec<f64> = v.iter().map(|x| libm::sqrt(x.max(0.0))).collect();
        let mean_w = w.iter().sum::<f64>() / sf;
        let var_w = w.iter().map(|x| (x - mean_w) * (x - mean_w)).sum::<f64>() / (sf - 1.0);
        Ok(EmpiricalBalanced {
            stats: BalancedStats {
                n,
                m_n,
                sigma_n,
                mu3: c3,
                mu4: c4,
            },
            se_m_n: if m_n > 0.0 {
                se_mean / (2.0 * m_n)
            } else {
                0.0
            },
            se_sigma_n: if sigma_n > 0.0 {
                nf * se_c2 / (2.0 * sigma_n)
            } else {
                0.0
            },
            se_mu3: se_c3,
            se_mu4: se_c4,
            mean_w,
            se_mean_w: libm::sqrt(var_w / sf),
            var_w,
        })
    }
}

/// Sample moments from an S × n matrix whose rows are draws of
/// `(X_1, …, X_n)`; `W_n` is each row divided by `√n`.
pub fn balanced_stats_empirical(samples: &DMatrix<f64>) -> Result<EmpiricalBalanced> {
    let n = samples.ncols();
    let v: alloc::vec::Vec<f64> = samples
        .row_iter()
        .map(|r| r.iter().map(|x| x * x).sum::<f64>() / n as f64)
        .collect();
    EmpiricalBalanced::from_squared_norms(n, &v)
}
