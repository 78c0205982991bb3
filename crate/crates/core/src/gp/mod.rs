//! Gaussian-process posterior of a latent variable model.
//!
//! With `R = K(X,X) + σ₁² I` (plus jitter) the posterior of the latent
//! function `f: ℝᵈ → ℝᵐ` has mean `μ(p) = Y R⁻¹ K(X,p)` and covariance
//! `k(p,q) = K(p,q) - K(p,X) R⁻¹ K(X,q)`, shared by every output dimension.
//! Observation noise only enters through `R`; the covariance returned here is
//! that of the noise-free latent function.

mod fit;

pub use fit::{fit_gplvm, log_marginal_likelihood, FitConfig, FitResult};

use alloc::format;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernels::{gram_sym, KernelSpec};
use crate::linalg::{cholesky_jittered, JitteredCholesky};

/// Observations stored as the columns of an `m × N` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: DMatrix<f64>,
}

impl Dataset {
    pub fn new(y: DMatrix<f64>) -> Result<Self> {
        if y.nrows() == 0 {
            return Err(Error::input("dataset needs at least one ambient dimension"));
        }
        if y.ncols() < 2 {
            return Err(Error::input("dataset needs at least two samples"));
        }
        if let Some(pos) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!(
                "dataset entry {} (row {}, column {}) is not finite",
                pos,
                pos % y.nrows(),
                pos / y.nrows()
            )));
        }
        Ok(Dataset { y })
    }

    pub fn ambient_dim(&self) -> usize {
        self.y.nrows()
    }

    pub fn len(&self) -> usize {
        self.y.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.y.ncols() == 0
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.y
    }
}

/// A fitted posterior process. Immutable after construction.
#[derive(Debug, Clone)]
pub struct PosteriorGP {
    spec: KernelSpec,
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    noise: f64,
    chol: JitteredCholesky,
    /// Lower Cholesky factor of `R`.
    l: DMatrix<f64>,
    /// `R⁻¹ Yᵀ`, N × m.
    alpha: DMatrix<f64>,
    /// `α αᵀ`, used to form `J_μᵀ J_μ` in O(N²d).
    alpha_outer: DMatrix<f64>,
}

impl PosteriorGP {
    /// Condition the prior `spec` on latents `x` (d × N) and data `y` (m × N).
    pub fn new(spec: KernelSpec, x: DMatrix<f64>, y: DMatrix<f64>, noise: f64) -> Result<Self> {
        spec.validate()?;
        Error::check_dim("posterior sample count", x.ncols(), y.ncols())?;
        if x.ncols() == 0 || x.nrows() == 0 || y.nrows() == 0 {
            return Err(Error::input("posterior needs at least one latent point"));
        }
        if !(noise >= 0.0 && noise.is_finite()) {
            return Err(Error::input(
                "noise variance must be finite and nonnegative",
            ));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::input("latents and data must be finite"));
        }
        let mut r = gram_sym(&spec, &x);
        for i in 0..r.nrows() {
            r[(i, i)] += noise;
        }
        let chol = cholesky_jittered(&r)?;
        let l = chol.l();
        let alpha = chol.chol.solve(&y.transpose());
        let alpha_outer = &alpha * alpha.transpose();
        Ok(PosteriorGP {
            spec,
            x,
            y,
            noise,
            chol,
            l,
            alpha,
            alpha_outer,
        })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn latents(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    /// Absolute jitter that was added to `R` to factor it.
    pub fn jitter(&self) -> f64 {
        self.chol.jitter
    }

    /// Lower Cholesky factor of the regularized Gram matrix.
    pub fn chol_factor(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// `R⁻¹ Yᵀ`.
    pub fn alpha(&self) -> &DMatrix<f64> {
        &self.alpha
    }

    pub fn latent_dim(&self) -> usize {
        self.x.nrows()
    }

    pub fn ambient_dim(&self) -> usize {
        self.y.nrows()
    }

    pub fn len(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.x.ncols() == 0
    }

    pub(crate) fn check_point(&self, p: &[f64]) -> Result<()> {
        Error::check_dim("latent point", self.latent_dim(), p.len())
    }

    /// `K(X, p)`.
    pub(crate) fn kx(&self, p: &[f64]) -> DVector<f64> {
        DVector::from_fn(self.len(), |j, _| {
            self.spec.eval_unchecked(self.x.column(j).as_slice(), p)
        })
    }

    /// N × d matrix whose row j is `∂K(p, x_j)/∂p`.
    pub(crate) fn grad_kx(&self, p: &[f64]) -> DMatrix<f64> {
        let d = self.latent_dim();
        let mut g = DMatrix::zeros(self.len(), d);
        let mut buf = alloc::vec![0.0; d];
        for j in 0..self.len() {
            self.spec
                .grad_p_into(p, self.x.column(j).as_slice(), &mut buf);
            for a in 0..d {
                g[(j, a)] = buf[a];
            }
        }
        g
    }

    /// `L⁻¹ b`.
    pub(crate) fn whiten(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.l
            .solve_lower_triangular(b)
            .expect("cholesky factor has a positive diagonal")
    }

    pub(crate) fn whiten_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.l
            .solve_lower_triangular(b)
            .expect("cholesky factor has a positive diagonal")
    }

    pub fn mean(&self, p: &[f64]) -> Result<DVector<f64>> {
        self.check_point(p)?;
        Ok(self.alpha.tr_mul(&self.kx(p)))
    }

    /// Latent-function covariance `k(p, q)`; exactly symmetric in its
    /// arguments. On the diagonal, round-off negatives are clamped to 0.
    pub fn cov(&self, p: &[f64], q: &[f64]) -> Result<f64> {
        self.check_point(p)?;
        self.check_point(q)?;
        let vp = self.whiten_vec(&self.kx(p));
        let vq = self.whiten_vec(&self.kx(q));
        let prior = self.spec.eval_unchecked(p, q);
        let v = prior - vp.dot(&vq);
        Ok(if p == q { v.max(0.0) } else { v })
    }

    pub fn var(&self, p: &[f64]) -> Result<f64> {
        self.cov(p, p)
    }

    /// m × d Jacobian of the posterior mean; row i is `∇μ_i(p)`.
    pub fn mean_jacobian(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        self.check_point(p)?;
        Ok(self.alpha.tr_mul(&self.grad_kx(p)))
    }

    /// d × d covariance `∂²k(p,q)/∂p_a ∂q_b` between the gradients of one
    /// output dimension at `p` and at `q`.
    pub fn grad_cov(&self, p: &[f64], q: &[f64]) -> Result<DMatrix<f64>> {
        self.check_point(p)?;
        self.check_point(q)?;
        let wp = self.whiten(&self.grad_kx(p));
        let prior = self.spec.cross_hessian(p, q)?;
        if p == q {
            Ok(prior - wp.tr_mul(&wp))
        } else {
            let wq = self.whiten(&self.grad_kx(q));
            Ok(prior - wp.tr_mul(&wq))
        }
    }

    /// Expected pullback metric `E(J_fᵀ J_f) = J_μᵀ J_μ + m · grad_cov(p, p)`.
    pub fn expected_metric(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        self.check_point(p)?;
        let g = self.grad_kx(p);
        let mean_part = g.tr_mul(&(&self.alpha_outer * &g));
        let w = self.whiten(&g);
        let var_part = self.spec.cross_hessian(p, p)? - w.tr_mul(&w);
        let mut m = mean_part + var_part * self.ambient_dim() as f64;
        symmetrize(&mut m);
        Ok(m)
    }
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Build the posterior; alias of [`PosteriorGP::new`].
pub fn make_posterior(
    spec: KernelSpec,
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    noise: f64,
) -> Result<PosteriorGP> {
    PosteriorGP::new(spec, x, y, noise)
}
