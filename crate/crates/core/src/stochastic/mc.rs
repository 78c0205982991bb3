use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use super::{
    length_expected_metric, m_n_profile, mean_curve_length, sigma_n_profile, CurveProcess,
};
use crate::error::{Error, Result};
use crate::linalg::psd_factor;
use crate::rng::substream;

/// Monte Carlo estimate of an expected length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LengthEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub samples: usize,
    pub seed: u64,
}

impl LengthEstimate {
    /// Sample mean and standard error; exact when all values coincide.
    pub fn from_values(values: &[f64], seed: u64) -> Result<Self> {
        let s = values.len();
        if s < 2 {
            return Err(Error::input("an estimate needs at least two samples"));
        }
        let first = values[0];
        let mean = first + values.iter().map(|v| v - first).sum::<f64>() / s as f64;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (s - 1) as f64;
        Ok(LengthEstimate {
            mean,
            std_err: libm::sqrt(var / s as f64),
            samples: s,
            seed,
        })
    }
}

/// Which per-sample quantity is averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Estimator {
    /// The trapezoid length of the sampled velocity path.
    Plain,
    /// The sampled length minus `∫ w²/(2m_n) dt`, plus its known mean
    /// `L_n / 2`. Same expectation, and `L_n` minus it is a nonnegative
    /// integral of `(w - m_n)²/(2m_n)`, so the relative noise does not grow
    /// as the gap shrinks.
    #[default]
    ControlVariate,
}

/// Per-replicate values for every requested slice size.
#[derive(Debug, Clone, PartialEq)]
pub struct Replicate {
    pub plain: Vec<f64>,
    pub control_variate: Vec<f64>,
}

/// Draws joint velocity paths for all slice sizes at once from one factor
/// of the node covariance. Output dimension `i` always consumes the same
/// normals of its replicate stream, so the slices are nested.
#[derive(Debug, Clone)]
pub struct LengthSampler<'a> {
    cp: &'a CurveProcess,
    n_list: Vec<usize>,
    factor: DMatrix<f64>,
    m_profiles: Vec<Vec<f64>>,
    big_l: Vec<f64>,
}

impl<'a> LengthSampler<'a> {
    pub fn new(cp: &'a CurveProcess, n_list: &[usize]) -> Result<Self> {
        if n_list.is_empty() {
            return Err(Error::input("slice list is empty"));
        }
        for &n in n_list {
            cp.check_n(n)?;
        }
        let factor = psd_factor(cp.node_cov())?;
        let m_profiles = n_list
            .iter()
            .map(|&n| m_n_profile(cp, n))
            .collect::<Result<Vec<_>>>()?;
        let big_l = m_profiles.iter().map(|p| cp.trapezoid(p)).collect();
        Ok(LengthSampler {
            cp,
            n_list: n_list.to_vec(),
            factor,
            m_profiles,
            big_l,
        })
    }

    pub fn n_list(&self) -> &[usize] {
        &self.n_list
    }

    /// `L_n` for every slice size.
    pub fn expected_metric_lengths(&self) -> &[f64] {
        &self.big_l
    }

    /// Replicate `index` of the stream keyed by `seed`.
    pub fn replicate(&self, seed: u64, index: u64) -> Replicate {
        let cp = self.cp;
        let k = cp.len();
        let n_max = *self.n_list.iter().max().expect("non-empty slice list");
        let mut rng = substream(seed, index);
        let normals = DMatrix::from_fn(k, n_max, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
        let mut paths = &self.factor * normals;
        let mv = cp.mean_velocities();
        for i in 0..n_max {
            for j in 0..k {
                paths[(j, i)] += mv[(i, j)];
            }
        }

        let mut order: Vec<usize> = (0..self.n_list.len()).collect();
        order.sort_by_key(|&s| self.n_list[s]);
        let mut plain = alloc::vec![0.0; self.n_list.len()];
        let mut cv = alloc::vec![0.0; self.n_list.len()];
        let mut sum_sq = alloc::vec![0.0; k];
        let mut done = 0;
        for slot in order {
            let n = self.n_list[slot];
            for i in done..n {
                for j in 0..k {
                    let v = paths[(j, i)];
                    sum_sq[j] += v * v;
                }
            }
            done = n;
            let w2: Vec<f64> = sum_sq.iter().map(|s| s / n as f64).collect();
            let w: Vec<f64> = w2.iter().map(|v| libm::sqrt(*v)).collect();
            let len = cp.trapezoid(&w);
            let m = &self.m_profiles[slot];
            let ratio: Vec<f64> = w2
                .iter()
                .zip(m)
                .map(|(v, m)| if *m > 0.0 { v / (2.0 * m) } else { 0.0 })
                .collect();
            plain[slot] = len;
            cv[slot] = len - cp.trapezoid(&ratio) + 0.5 * self.big_l[slot];
        }
        Replicate {
            plain,
            control_variate: cv,
        }
    }

    /// One estimate per slice size from replicates `0..samples`, in order.
    pub fn summarize(
        &self,
        reps: &[Replicate],
        estimator: Estimator,
        seed: u64,
    ) -> Result<Vec<LengthEstimate>> {
        (0..self.n_list.len())
            .map(|slot| {
                let values: Vec<f64> = reps
                    .iter()
                    .map(|r| match estimator {
                        Estimator::Plain => r.plain[slot],
                        Estimator::ControlVariate => r.control_variate[slot],
                    })
                    .collect();
                LengthEstimate::from_values(&values, seed)
            })
            .collect()
    }

    pub fn run(
        &self,
        samples: usize,
        seed: u64,
        estimator: Estimator,
    ) -> Result<Vec<LengthEstimate>> {
        if samples < 2 {
            return Err(Error::input(
                "at least two Monte Carlo samples are required",
            ));
        }
        let reps: Vec<Replicate> = (0..samples as u64)
            .map(|s| self.replicate(seed, s))
            .collect();
        self.summarize(&reps, estimator, seed)
    }
}

/// `l_n = E ∫ ‖φ′_n(t)‖ dt` by plain Monte Carlo.
pub fn expected_length_mc(
    cp: &CurveProcess,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<LengthEstimate> {
    expected_length_mc_with(cp, n, samples, seed, Estimator::Plain)
}

pub fn expected_length_mc_with(
    cp: &CurveProcess,
    n: usize,
    samples: usize,
    seed: u64,
    estimator: Estimator,
) -> Result<LengthEstimate> {
    Ok(LengthSampler::new(cp, &[n])?.run(samples, seed, estimator)?[0])
}

/// Length of the mean curve and the expected length of the random curve.
pub fn mean_curve_vs_expected_length(
    cp: &CurveProcess,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<(f64, LengthEstimate)> {
    let len_of_mean = mean_curve_length(cp, n)?;
    let expected = expected_length_mc_with(cp, n, samples, seed, Estimator::ControlVariate)?;
    Ok((len_of_mean, expected))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundRow {
    pub n: usize,
    pub big_l: f64,
    pub small_l: f64,
    pub std_err: f64,
    pub rel_err: f64,
    pub h: f64,
    /// Outside `[-4·se/L_n, h(n) + 4·se/L_n]`, widened by 1e-12 for round-off.
    pub flagged: bool,
}

impl BoundRow {
    /// `rel_err - h(n)`.
    pub fn excess(&self) -> f64 {
        self.rel_err - self.h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub rows: Vec<BoundRow>,
    pub a: f64,
    pub b: f64,
    /// Smallest listed n from which no larger listed n is flagged.
    pub n0: Option<usize>,
}

/// `A = 1.05 · max Σ_n` and `b = 0.95 · min m_n` over nodes and the listed n.
pub fn bound_constants(cp: &CurveProcess, n_list: &[usize]) -> Result<(f64, f64)> {
    if n_list.is_empty() {
        return Err(Error::input("slice list is empty"));
    }
    let mut a: f64 = 0.0;
    let mut b = f64::INFINITY;
    for &n in n_list {
        a = a.max(sigma_n_profile(cp, n)?.iter().fold(0.0, |x, v| x.max(*v)));
        let m = m_n_profile(cp, n)?;
        for (k, v) in m.iter().enumerate() {
            if *v < 1e-6 {
                return Err(Error::input(format!(
                    "m_n = {v:e} at node {k} (t = {}) for n = {n}; the expected speed must stay above 1e-6",
                    cp.nodes()[k]
                )));
            }
            b = b.min(*v);
        }
    }
    Ok((1.05 * a, 0.95 * b))
}

/// Build the report from one estimate per listed n.
pub fn assemble_report(
    cp: &CurveProcess,
    n_list: &[usize],
    estimates: &[LengthEstimate],
) -> Result<BoundReport> {
    Error::check_dim("estimates per slice", n_list.len(), estimates.len())?;
    let (a, b) = bound_constants(cp, n_list)?;
    let mut rows = Vec::with_capacity(n_list.len());
    for (&n, est) in n_list.iter().zip(estimates) {
        let big_l = length_expected_metric(cp, n)?;
        let rel_err = (big_l - est.mean) / big_l;
        let h = a * a / (8.0 * n as f64 * b * b * b * b);
        // The floor absorbs summation round-off when the variance is zero.
        let pad = 4.0 * est.std_err / big_l + 1e-12;
        rows.push(BoundRow {
            n,
            big_l,
            small_l: est.mean,
            std_err: est.std_err,
            rel_err,
            h,
            flagged: rel_err < -pad || rel_err > h + pad,
        });
    }
    let mut sorted: Vec<&BoundRow> = rows.iter().collect();
    sorted.sort_by_key(|r| r.n);
    let n0 = match sorted.iter().rposition(|r| r.flagged) {
        None => sorted.first().map(|r| r.n),
        Some(i) => sorted.get(i + 1).map(|r| r.n),
    };
    Ok(BoundReport { rows, a, b, n0 })
}

/// Relative gap between `L_n` and the Monte Carlo `l_n` against `A²/(8nb⁴)`.
pub fn bound_report(
    cp: &CurveProcess,
    n_list: &[usize],
    samples: usize,
    seed: u64,
    estimator: Estimator,
) -> Result<BoundReport> {
    bound_constants(cp, n_list)?;
    let estimates = LengthSampler::new(cp, n_list)?.run(samples, seed, estimator)?;
    assemble_report(cp, n_list, &estimates)
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    Error::check_dim("slope samples", x.len(), y.len())?;
    if x.len() < 2 || x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::input(
            "log-log slope needs at least two positive points",
        ));
    }
    let lx: Vec<f64> = x.iter().map(|v| libm::log(*v)).collect();
    let ly: Vec<f64> = y.iter().map(|v| libm::log(*v)).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::input("log-log slope needs distinct abscissae"));
    }
    Ok(sxy / sxx)
}
