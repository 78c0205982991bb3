//! Closed-form derivatives against central finite differences.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use randman_core::gp::PosteriorGP;
use randman_core::kernels::KernelSpec;
use randman_core::rng::substream;

const H: f64 = 1e-5;

fn point(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()
}

fn shifted(p: &[f64], a: usize, h: f64) -> Vec<f64> {
    let mut q = p.to_vec();
    q[a] += h;
    q
}

fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-5 * scale.max(1e-3)
}

fn specs() -> [KernelSpec; 3] {
    [
        KernelSpec::rbf(1.0, 1.0).unwrap(),
        KernelSpec::rbf(2.5, 0.6).unwrap(),
        KernelSpec::Linear,
    ]
}

#[test]
fn kernel_gradient_and_cross_hessian() {
    let mut rng = substream(1, 0);
    for spec in specs() {
        for _ in 0..100 {
            let d = rng.random_range(1..4);
            let (p, q) = (point(&mut rng, d), point(&mut rng, d));
            let g = spec.grad_p(&p, &q).unwrap();
            let gs = g.amax();
            for a in 0..d {
                let fd = (spec.eval(&shifted(&p, a, H), &q).unwrap()
                    - spec.eval(&shifted(&p, a, -H), &q).unwrap())
                    / (2.0 * H);
                assert!(close(g[a], fd, gs), "{spec:?} grad {a}: {} vs {fd}", g[a]);
            }
            let hm = spec.cross_hessian(&p, &q).unwrap();
            let hs = hm.amax();
            for b in 0..d {
                let fd = (spec.grad_p(&p, &shifted(&q, b, H)).unwrap()
                    - spec.grad_p(&p, &shifted(&q, b, -H)).unwrap())
                    / (2.0 * H);
                for a in 0..d {
                    assert!(close(hm[(a, b)], fd[a], hs), "{spec:?} hess {a}{b}");
                }
            }
        }
    }
}

fn posterior(spec: KernelSpec, seed: u64) -> PosteriorGP {
    let mut rng = substream(seed, 0);
    let x = DMatrix::from_fn(2, 7, |_, _| rng.random_range(-1.5..1.5));
    let y = DMatrix::from_fn(3, 7, |_, _| rng.random_range(-1.0..1.0));
    PosteriorGP::new(spec, x, y, 0.05).unwrap()
}

#[test]
fn posterior_mean_jacobian() {
    let mut rng = substream(2, 0);
    for (s, spec) in specs().into_iter().enumerate() {
        let post = posterior(spec, 10 + s as u64);
        for _ in 0..100 {
            let p = point(&mut rng, 2);
            let j = post.mean_jacobian(&p).unwrap();
            let js = j.amax();
            for a in 0..2 {
                let fd = (post.mean(&shifted(&p, a, H)).unwrap()
                    - post.mean(&shifted(&p, a, -H)).unwrap())
                    / (2.0 * H);
                for i in 0..3 {
                    assert!(close(j[(i, a)], fd[i], js));
                }
            }
        }
    }
}

#[test]
fn posterior_gradient_covariance() {
    // Mixed second difference of k(p, q); a wider step keeps round-off at
    // the 1e-8 level.
    let h = 1e-4;
    let mut rng = substream(3, 0);
    for (s, spec) in specs().into_iter().enumerate() {
        let post = posterior(spec, 20 + s as u64);
        for _ in 0..100 {
            let (p, q) = (point(&mut rng, 2), point(&mut rng, 2));
            let gc = post.grad_cov(&p, &q).unwrap();
            let scale = gc.amax().max(spec.derivative_scale());
            for a in 0..2 {
                for b in 0..2 {
                    let k = |sa: f64, sb: f64| {
                        post.cov(&shifted(&p, a, sa), &shifted(&q, b, sb)).unwrap()
                    };
                    let fd = (k(h, h) - k(h, -h) - k(-h, h) + k(-h, -h)) / (4.0 * h * h);
                    assert!(
                        (gc[(a, b)] - fd).abs() <= 1e-5 * scale,
                        "{spec:?} {a}{b}: {} vs {fd}",
                        gc[(a, b)]
                    );
                }
            }
        }
    }
}
