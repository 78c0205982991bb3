use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::gamma::ln_gamma;

use randman_core::geometry::DiscreteCurve;
use randman_core::gp::PosteriorGP;
use randman_core::kernels::KernelSpec;
use randman_core::rng::substream;
use randman_core::stochastic::*;

fn process(nodes: usize) -> CurveProcess {
    let mut rng = substream(5, 0);
    let x = DMatrix::from_fn(2, 10, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
    let y = DMatrix::from_fn(24, 10, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
    let post = PosteriorGP::new(KernelSpec::rbf(1.3, 1.0).unwrap(), x, y, 0.1).unwrap();
    let curve = DiscreteCurve::straight(&[-1.0, 0.4], &[1.2, -0.3], 1, 0.0, 1.0).unwrap();
    restrict_to_curve(&post, &curve, nodes).unwrap()
}

#[test]
fn chi_mean_matches_gamma_ratio() {
    for n in [1usize, 2, 3, 10, 100, 1000, 10_000, 100_000] {
        let nf = n as f64;
        let oracle = (2.0 / nf).sqrt() * (ln_gamma(0.5 * (nf + 1.0)) - ln_gamma(0.5 * nf)).exp();
        assert!((chi_mean(n) - oracle).abs() <= 1e-12, "n={n}");
    }
    assert!((chi_mean(1) - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-14);
}

#[test]
fn profiles_match_sampled_velocities() {
    let cp = process(9);
    let n = cp.ambient_dim();
    let k = cp.len();
    let jittered = cp.node_cov() + DMatrix::identity(k, k) * 1e-12;
    let chol = jittered.cholesky().unwrap().l();
    let draws = 40_000;
    let mut sum = vec![0.0; k];
    let mut sum_sq = vec![0.0; k];
    let mut rng = substream(6, 0);
    for _ in 0..draws {
        let e = DMatrix::from_fn(k, n, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
        let paths = &chol * e + cp.mean_velocities().transpose();
        for node in 0..k {
            let w2 = paths.row(node).iter().map(|v| v * v).sum::<f64>() / n as f64;
            sum[node] += w2;
            sum_sq[node] += w2 * w2;
        }
    }
    let m = m_n_profile(&cp, n).unwrap();
    let sig = sigma_n_profile(&cp, n).unwrap();
    let s = draws as f64;
    for node in 0..k {
        let mean = sum[node] / s;
        let var = (sum_sq[node] / s - mean * mean) * s / (s - 1.0);
        let se = (var / s).sqrt();
        assert!((mean - m[node] * m[node]).abs() <= 4.0 * se, "node {node}");
        // n·Var(w_n²) = Σ_n² holds exactly for Gaussian velocities.
        let rel = (n as f64 * var - sig[node] * sig[node]).abs() / (sig[node] * sig[node]);
        assert!(rel <= 0.05, "node {node}: {rel}");
    }
}

#[test]
fn expected_length_sits_below_metric_length() {
    let cp = process(33);
    let n = cp.ambient_dim();
    let big = length_expected_metric(&cp, n).unwrap();
    let est = expected_length_mc(&cp, n, 4000, 9).unwrap();
    assert!(est.mean <= big + 4.0 * est.std_err);
    let (mean_len, _) = mean_curve_vs_expected_length(&cp, n, 500, 9).unwrap();
    assert!(mean_len <= est.mean + 4.0 * est.std_err);
}

#[test]
fn bound_report_holds_on_a_posterior_curve() {
    let cp = process(33);
    let report =
        bound_report(&cp, &[2, 4, 8, 16, 24], 2000, 11, Estimator::ControlVariate).unwrap();
    for row in &report.rows {
        assert!(!row.flagged, "{row:?}");
    }
}

#[test]
fn squared_norm_moments_match_samples() {
    for family in [ComponentFamily::Gaussian, ComponentFamily::Uniform] {
        for n in [1usize, 2, 8, 32] {
            let analytic = balanced_stats(family, n).unwrap();
            let v: Vec<f64> = (0..100_000u64)
                .map(|i| sample_squared_norm(family, n, &mut substream(40 + n as u64, i)))
                .collect();
            let emp = EmpiricalBalanced::from_squared_norms(n, &v).unwrap();
            let close = |a: f64, b: f64, se: f64| (a - b).abs() <= 4.0 * se;
            assert!(
                close(emp.stats.m_n, analytic.m_n, emp.se_m_n),
                "{family:?} n={n} m_n"
            );
            assert!(
                close(emp.stats.sigma_n, analytic.sigma_n, emp.se_sigma_n),
                "{family:?} n={n} sigma"
            );
            assert!(
                close(emp.stats.mu3, analytic.mu3, emp.se_mu3),
                "{family:?} n={n} mu3"
            );
            assert!(
                close(emp.stats.mu4, analytic.mu4, emp.se_mu4),
                "{family:?} n={n} mu4"
            );
        }
    }
}

#[test]
fn gaussian_expansion_error_scales_as_inverse_square() {
    let scaled: Vec<f64> = [10usize, 100, 1000, 10_000]
        .iter()
        .map(|&n| {
            let st = balanced_stats(ComponentFamily::Gaussian, n).unwrap();
            let e = expected_norm_expansion(st.m_n, st.sigma_n, n).unwrap();
            (chi_mean(n) - e).abs() * (n * n) as f64
        })
        .collect();
    let (lo, hi) = scaled
        .iter()
        .fold((f64::MAX, 0.0f64), |(l, h), &x| (l.min(x), h.max(x)));
    assert!(hi < 2.0 * lo, "{scaled:?}");
}
