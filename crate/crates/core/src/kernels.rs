//! Prior covariance families with closed-form derivatives.
//!
//! For the RBF family `K(p,q) = s·exp(-|p-q|²/(2l²))`:
//!
//! ```text
//! ∂K/∂p_a        = -K (p_a - q_a) / l²
//! ∂²K/∂p_a ∂q_b  =  K [δ_ab / l² - (p_a - q_a)(p_b - q_b) / l⁴]
//! ```
//!
//! and for the linear family `K(p,q) = pᵀq` the gradient is `q` and the
//! cross-Hessian is the identity.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Kernel family without hyperparameters, as chosen before fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    Rbf,
    Linear,
}

/// Prior kernel family with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    Rbf { variance: f64, length_scale: f64 },
    Linear,
}

impl KernelSpec {
    pub fn rbf(variance: f64, length_scale: f64) -> Result<Self> {
        let spec = KernelSpec::Rbf {
            variance,
            length_scale,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Rbf {
                variance,
                length_scale,
            } => {
                if !(variance > 0.0 && variance.is_finite()) {
                    return Err(Error::input("RBF variance must be positive and finite"));
                }
                if !(length_scale > 0.0 && length_scale.is_finite()) {
                    return Err(Error::input("RBF length scale must be positive and finite"));
                }
                Ok(())
            }
            KernelSpec::Linear => Ok(()),
        }
    }

    pub fn family(&self) -> KernelFamily {
        match self {
            KernelSpec::Rbf { .. } => KernelFamily::Rbf,
            KernelSpec::Linear => KernelFamily::Linear,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::Rbf { .. } => "rbf",
            KernelSpec::Linear => "linear",
        }
    }

    /// Scale of the prior derivative variance: `s/l²` for RBF, 1 for linear.
    pub fn derivative_scale(&self) -> f64 {
        match *self {
            KernelSpec::Rbf {
                variance,
                length_scale,
            } => variance / (length_scale * length_scale),
            KernelSpec::Linear => 1.0,
        }
    }

    pub fn eval(&self, p: &[f64], q: &[f64]) -> Result<f64> {
        Error::check_dim("kernel arguments", p.len(), q.len())?;
        Ok(self.eval_unchecked(p, q))
    }

    pub fn grad_p(&self, p: &[f64], q: &[f64]) -> Result<DVector<f64>> {
        Error::check_dim("kernel arguments", p.len(), q.len())?;
        let mut out = DVector::zeros(p.len());
        self.grad_p_into(p, q, out.as_mut_slice());
        Ok(out)
    }

    pub fn cross_hessian(&self, p: &[f64], q: &[f64]) -> Result<DMatrix<f64>> {
        Error::check_dim("kernel arguments", p.len(), q.len())?;
        let d = p.len();
        Ok(match *self {
            KernelSpec::Linear => DMatrix::identity(d, d),
            KernelSpec::Rbf { length_scale, .. } => {
                let k = self.eval_unchecked(p, q);
                let l2 = length_scale * length_scale;
                DMatrix::from_fn(d, d, |a, b| {
                    let delta = if a == b { 1.0 / l2 } else { 0.0 };
                    k * (delta - (p[a] - q[a]) * (p[b] - q[b]) / (l2 * l2))
                })
            }
        })
    }

    /// `vᵀ [∂²K/∂p∂q] w`, without forming the matrix.
    pub(crate) fn cross_hessian_form(&self, p: &[f64], q: &[f64], v: &[f64], w: &[f64]) -> f64 {
        let vw: f64 = v.iter().zip(w).map(|(a, b)| a * b).sum();
        match *self {
            KernelSpec::Linear => vw,
            KernelSpec::Rbf { length_scale, .. } => {
                let k = self.eval_unchecked(p, q);
                let l2 = length_scale * length_scale;
                let vr: f64 = v
                    .iter()
                    .zip(p.iter().zip(q))
                    .map(|(a, (x, y))| a * (x - y))
                    .sum();
                let wr: f64 = w
                    .iter()
                    .zip(p.iter().zip(q))
                    .map(|(a, (x, y))| a * (x - y))
                    .sum();
                k * (vw / l2 - vr * wr / (l2 * l2))
            }
        }
    }

    pub(crate) fn eval_unchecked(&self, p: &[f64], q: &[f64]) -> f64 {
        match *self {
            KernelSpec::Rbf {
                variance,
                length_scale,
            } => variance * libm::exp(-0.5 * sq_dist(p, q) / (length_scale * length_scale)),
            KernelSpec::Linear => p.iter().zip(q).map(|(a, b)| a * b).sum(),
        }
    }

    pub(crate) fn grad_p_into(&self, p: &[f64], q: &[f64], out: &mut [f64]) {
        match *self {
            KernelSpec::Rbf { length_scale, .. } => {
                let k = self.eval_unchecked(p, q);
                let l2 = length_scale * length_scale;
                for ((o, a), b) in out.iter_mut().zip(p).zip(q) {
                    *o = -k * (a - b) / l2;
                }
            }
            KernelSpec::Linear => out.copy_from_slice(q),
        }
    }
}

/// Squared Euclidean distance from coordinate differences; never negative.
pub(crate) fn sq_dist(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `K(A, B)` for column-stacked point sets.
pub fn gram(spec: &KernelSpec, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Error::check_dim("gram point dimension", a.nrows(), b.nrows())?;
    let mut out = DMatrix::zeros(a.ncols(), b.ncols());
    for j in 0..b.ncols() {
        let bj = b.column(j);
        for i in 0..a.ncols() {
            out[(i, j)] = spec.eval_unchecked(a.column(i).as_slice(), bj.as_slice());
        }
    }
    Ok(out)
}

/// `K(A, A)`, filling only one triangle and mirroring, so the result is
/// exactly symmetric.
pub fn gram_sym(spec: &KernelSpec, a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.ncols();
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let v = spec.eval_unchecked(a.column(i).as_slice(), a.column(j).as_slice());
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    fn unit_rbf() -> KernelSpec {
        KernelSpec::rbf(1.0, 1.0).unwrap()
    }

    #[test]
    fn rbf_at_coincident_points_is_variance() {
        let p = [0.3, -1.7, 2.2];
        assert_eq!(unit_rbf().eval(&p, &p).unwrap(), 1.0);
        let k = KernelSpec::rbf(2.5, 0.3).unwrap();
        assert_eq!(k.eval(&p, &p).unwrap(), 2.5);
    }

    #[test]
    fn linear_is_dot_product() {
        assert_eq!(
            KernelSpec::Linear.eval(&[1.0, 2.0], &[3.0, 4.0]).unwrap(),
            11.0
        );
    }

    #[test]
    fn rbf_unit_distance() {
        let v = unit_rbf().eval(&[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!((v - 0.606_530_659_712_633_4).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        assert!(matches!(
            unit_rbf().eval(&[0.0], &[1.0, 0.0]),
            Err(Error::Dimension { .. })
        ));
        assert!(KernelSpec::Linear.grad_p(&[0.0], &[1.0, 0.0]).is_err());
        assert!(KernelSpec::Linear
            .cross_hessian(&[0.0], &[1.0, 0.0])
            .is_err());
        let a = DMatrix::zeros(2, 3);
        let b = DMatrix::zeros(3, 3);
        assert!(gram(&KernelSpec::Linear, &a, &b).is_err());
    }

    #[test]
    fn invalid_hyperparameters_rejected() {
        assert!(KernelSpec::rbf(0.0, 1.0).is_err());
        assert!(KernelSpec::rbf(1.0, -2.0).is_err());
        assert!(KernelSpec::rbf(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn linear_gradient_is_other_argument() {
        let g = KernelSpec::Linear
            .grad_p(&[5.0, -1.0], &[0.5, 2.0])
            .unwrap();
        assert_eq!(g.as_slice(), &[0.5, 2.0]);
    }

    #[test]
    fn rbf_gradient_vanishes_on_diagonal() {
        let p = [0.4, 0.9];
        assert_eq!(unit_rbf().grad_p(&p, &p).unwrap().norm(), 0.0);
    }

    #[test]
    fn cross_hessian_closed_forms() {
        let p = [0.4, 0.9];
        let q = [-1.0, 3.0];
        assert_eq!(
            KernelSpec::Linear.cross_hessian(&p, &q).unwrap(),
            DMatrix::identity(2, 2)
        );
        let k = KernelSpec::rbf(3.0, 0.5).unwrap();
        let h = k.cross_hessian(&p, &p).unwrap();
        let expect = DMatrix::identity(2, 2) * (3.0 / 0.25);
        assert!((h - expect).abs().max() < 1e-14);
    }

    #[test]
    fn cross_hessian_form_matches_matrix() {
        let k = KernelSpec::rbf(1.3, 0.7).unwrap();
        let p = [0.1, 0.2, -0.3];
        let q = [0.5, -0.1, 0.0];
        let v = [1.0, 2.0, 0.5];
        let w = [-0.3, 0.4, 1.0];
        let h = k.cross_hessian(&p, &q).unwrap();
        let direct =
            (DVector::from_column_slice(&v).transpose() * h * DVector::from_column_slice(&w))[0];
        assert!((direct - k.cross_hessian_form(&p, &q, &v, &w)).abs() < 1e-14);
    }

    #[test]
    fn gram_shapes_and_values() {
        let p = DMatrix::from_column_slice(2, 1, &[0.3, 0.4]);
        let g = gram(&unit_rbf(), &p, &p).unwrap();
        assert_eq!(g.shape(), (1, 1));
        assert_eq!(g[(0, 0)], 1.0);
        let id = DMatrix::<f64>::identity(2, 2);
        assert_eq!(gram(&KernelSpec::Linear, &id, &id).unwrap(), id);
        let a = DMatrix::from_column_slice(2, 3, &[0.0, 0.0, 1.0, 0.0, 0.0, 2.0]);
        let g = gram_sym(&unit_rbf(), &a);
        assert_eq!(g, g.transpose());
        for i in 0..3 {
            assert_eq!(g[(i, i)], 1.0);
            for j in 0..3 {
                if i != j {
                    assert!(g[(i, j)] < 1.0);
                }
            }
        }
    }
}
