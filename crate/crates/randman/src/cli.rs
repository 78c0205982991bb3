//! Argument parsing and the experiment commands.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use randman_core::data::{make_rotation_dataset, synth_image};
use randman_core::geometry::{self, DiscreteCurve, ExpectedMetric, GeodesicConfig};
use randman_core::gp::{fit_gplvm, Dataset, FitConfig, PosteriorGP};
use randman_core::kernels::KernelFamily;
use randman_core::rng::substream;
use randman_core::stochastic::{
    self, assemble_report, balanced_stats, chi_mean, expected_norm_expansion, loglog_slope,
    restrict_to_curve, sample_squared_norm, shuffled_order, ComponentFamily, EmpiricalBalanced,
    Estimator, LengthSampler,
};

use crate::error::{CliError, CliResult};
use crate::io::{self, fmt_f64, key_values, Model};
use crate::pgm::{self, PgmFormat};

#[derive(Debug, Parser)]
#[command(
    name = "randman",
    version,
    about = "Expected lengths and geodesics on GP latent spaces"
)]
#[command(args_override_self = true)]
pub struct Cli {
    /// Seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Worker threads (0 = all available).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// key=value file with defaults for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rotated-image dataset (dataset.csv, m rows by N columns).
    SynthData(SynthArgs),
    /// Fit a GPLVM and write model.txt.
    Fit(FitArgs),
    /// Geodesic under the expected metric (geodesic.csv, geodesic_report.txt).
    Geodesic(GeodesicArgs),
    /// Relative gap between expected-metric and expected length (decay.csv).
    Decay(DecayArgs),
    /// Swirl reparametrization of Gaussian samples (swirl_*.csv).
    Swirl(SwirlArgs),
    /// Norm expansion for iid component sequences (balanced.csv).
    Balanced(BalancedArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 32)]
    pub size: usize,
    #[arg(long, default_value_t = 100)]
    pub n_rotations: usize,
    /// Square grayscale PGM to rotate instead of the synthetic image.
    #[arg(long)]
    pub image: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Rbf,
    Linear,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Dataset CSV, one observation per column.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 6)]
    pub latent_dim: usize,
    #[arg(long, value_enum, default_value_t = KernelArg::Rbf)]
    pub kernel: KernelArg,
    #[arg(long, default_value_t = 500)]
    pub max_iters: usize,
    /// Initial noise variance (default: 1% of the mean squared datum).
    #[arg(long)]
    pub noise: Option<f64>,
    /// Keep kernel and noise hyperparameters at their initial values.
    #[arg(long)]
    pub fixed_hyperparams: bool,
}

#[derive(Debug, Args)]
pub struct GeodesicArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Latent index, or a comma-separated point.
    #[arg(long)]
    pub from: String,
    #[arg(long)]
    pub to: String,
    #[arg(long, default_value_t = 64)]
    pub nodes: usize,
    #[arg(long, default_value_t = 5000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    Cv,
    Plain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DimOrder {
    Shuffled,
    Natural,
}

#[derive(Debug, Args)]
pub struct DecayArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// `8,16,32` or `geom:START:END:COUNT` (default: powers of two from 8 up to m).
    #[arg(long)]
    pub n_grid: Option<String>,
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,
    #[arg(long, default_value_t = 64)]
    pub nodes: usize,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Cv)]
    pub estimator: EstimatorArg,
    /// Order in which ambient dimensions enter the slices.
    #[arg(long, value_enum, default_value_t = DimOrder::Shuffled)]
    pub dim_order: DimOrder,
    /// Drop the posterior variance (zero-variance surrogate).
    #[arg(long)]
    pub mean_only: bool,
}

#[derive(Debug, Args)]
pub struct SwirlArgs {
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    /// Pairwise distances are written among the first this-many points.
    #[arg(long, default_value_t = 100)]
    pub pairs: usize,
}

#[derive(Debug, Args)]
pub struct BalancedArgs {
    /// gaussian, uniform or deterministic.
    #[arg(long, default_value = "gaussian")]
    pub family: String,
    #[arg(long, default_value = "10,100,1000,10000")]
    pub n_grid: String,
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,
}

/// Parse arguments (after config injection) and run the command.
pub fn run<I, T>(args: I) -> CliResult<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = crate::config::apply(args)?;
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => match e.kind() {
            clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                print!("{e}");
                return Ok(());
            }
            _ => return Err(CliError::input(e.to_string().trim().to_string())),
        },
    };
    std::fs::create_dir_all(&cli.out).map_err(|e| CliError::io(&cli.out, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CliError::input(format!("cannot start {} threads: {e}", cli.threads)))?;
    let ctx = Ctx {
        seed: cli.seed,
        out: cli.out.clone(),
    };
    pool.install(|| match &cli.command {
        Command::SynthData(a) => synth_data(&ctx, a),
        Command::Fit(a) => fit(&ctx, a),
        Command::Geodesic(a) => geodesic(&ctx, a),
        Command::Decay(a) => decay(&ctx, a),
        Command::Swirl(a) => swirl(&ctx, a),
        Command::Balanced(a) => balanced(&ctx, a),
    })
}

struct Ctx {
    seed: u64,
    out: PathBuf,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write(&self, name: &str, text: &str) -> CliResult<()> {
        io::write_text(&self.path(name), text)
    }
}

fn synth_data(ctx: &Ctx, a: &SynthArgs) -> CliResult<()> {
    let (img, source) = match &a.image {
        Some(p) => (pgm::read(p)?, p.display().to_string()),
        None => (synth_image(a.size, ctx.seed)?, "synthetic".to_string()),
    };
    let ds = make_rotation_dataset(&img, a.n_rotations)?;
    io::write_matrix_csv(&ctx.path("dataset.csv"), ds.y())?;
    pgm::write(&ctx.path("image.pgm"), &img, PgmFormat::Binary)?;
    ctx.write(
        "manifest.txt",
        &key_values(&[
            ("source", source),
            ("width", img.width().to_string()),
            ("height", img.height().to_string()),
            ("rotations", a.n_rotations.to_string()),
            ("seed", ctx.seed.to_string()),
            ("rows", ds.ambient_dim().to_string()),
            ("cols", ds.len().to_string()),
        ]),
    )
}

fn fit(ctx: &Ctx, a: &FitArgs) -> CliResult<()> {
    let data = Dataset::new(io::read_matrix_csv(&a.data)?)?;
    let family = match a.kernel {
        KernelArg::Rbf => KernelFamily::Rbf,
        KernelArg::Linear => KernelFamily::Linear,
    };
    let mut cfg = FitConfig::new(a.latent_dim, family);
    cfg.max_iters = a.max_iters;
    cfg.seed = ctx.seed;
    cfg.init_noise = a.noise;
    cfg.optimize_hyperparams = !a.fixed_hyperparams;
    let result = fit_gplvm(&data, &cfg)?;
    // Fails early if the fitted model cannot be factorized.
    result.posterior(&data)?;
    let model = Model {
        spec: result.spec,
        noise: result.noise,
        latents: result.latents.clone(),
        data: data.into_inner(),
    };
    let comments = [
        ("log_likelihood".to_string(), fmt_f64(result.log_likelihood)),
        ("iterations".to_string(), result.iterations.to_string()),
        ("converged".to_string(), result.converged.to_string()),
        ("seed".to_string(), ctx.seed.to_string()),
    ];
    ctx.write("model.txt", &model.to_text(&comments))?;
    println!("log_marginal_likelihood={}", fmt_f64(result.log_likelihood));
    if !result.converged {
        eprintln!(
            "warning: optimizer stopped after {} iterations without meeting the step tolerance",
            result.iterations
        );
    }
    Ok(())
}

fn load_posterior(path: &Path) -> CliResult<PosteriorGP> {
    let m = Model::load(path)?;
    Ok(PosteriorGP::new(m.spec, m.latents, m.data, m.noise)?)
}

fn parse_endpoint(s: &str, post: &PosteriorGP) -> CliResult<Vec<f64>> {
    let s = s.trim();
    if let Ok(i) = s.parse::<usize>() {
        if i >= post.len() {
            return Err(CliError::input(format!(
                "latent index {i} out of range (model has {} points)",
                post.len()
            )));
        }
        return Ok(post.latents().column(i).iter().copied().collect());
    }
    let v: Vec<f64> = s
        .split(',')
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|_| CliError::input(format!("cannot parse endpoint '{s}'")))
        })
        .collect::<CliResult<_>>()?;
    if v.len() != post.latent_dim() {
        return Err(CliError::input(format!(
            "endpoint '{s}' has {} coordinates, latent dimension is {}",
            v.len(),
            post.latent_dim()
        )));
    }
    Ok(v)
}

fn geodesic(ctx: &Ctx, a: &GeodesicArgs) -> CliResult<()> {
    let post = load_posterior(&a.model)?;
    let za = parse_endpoint(&a.from, &post)?;
    let zb = parse_endpoint(&a.to, &post)?;
    let cfg = GeodesicConfig {
        nodes: a.nodes,
        max_iters: a.max_iters,
        tolerance: a.tol,
        ..GeodesicConfig::default()
    };
    let g = geometry::geodesic(&ExpectedMetric::new(&post), &za, &zb, &cfg)?;
    let curve = if za == zb {
        io::curve_to_csv(&[0.0], &DMatrix::from_column_slice(za.len(), 1, &za))
    } else {
        io::curve_to_csv(g.curve.params(), g.curve.points())
    };
    ctx.write("geodesic.csv", &curve)?;
    ctx.write(
        "geodesic_report.txt",
        &key_values(&[
            ("energy", fmt_f64(g.energy)),
            ("length", fmt_f64(g.length)),
            ("speed_cv", fmt_f64(g.speed_cv)),
            ("iterations", g.iterations.to_string()),
            ("converged", g.converged.to_string()),
        ]),
    )?;
    if !g.converged {
        return Err(CliError::NonConvergence(format!(
            "geodesic did not converge in {} iterations; best curve written",
            g.iterations
        )));
    }
    Ok(())
}

/// `8,16,32` or `geom:START:END:COUNT` (rounded, deduplicated).
pub fn parse_n_grid(spec: &str) -> CliResult<Vec<usize>> {
    let bad = || CliError::input(format!("cannot parse n grid '{spec}'"));
    let mut ns: Vec<usize> = if let Some(rest) = spec.strip_prefix("geom:") {
        let parts: Vec<&str> = rest.split(':').collect();
        let [start, end, count] = parts.as_slice() else {
            return Err(bad());
        };
        let start: f64 = start.parse().map_err(|_| bad())?;
        let end: f64 = end.parse().map_err(|_| bad())?;
        let count: usize = count.parse().map_err(|_| bad())?;
        if !(start >= 1.0 && end >= start) || count == 0 {
            return Err(bad());
        }
        if count == 1 {
            vec![start.round() as usize]
        } else {
            (0..count)
                .map(|i| {
                    let f = i as f64 / (count - 1) as f64;
                    (start * (end / start).powf(f)).round() as usize
                })
                .collect()
        }
    } else {
        spec.split(',')
            .map(|s| s.trim().parse::<usize>().map_err(|_| bad()))
            .collect::<CliResult<_>>()?
    };
    ns.dedup();
    if ns.is_empty() || ns.contains(&0) {
        return Err(bad());
    }
    Ok(ns)
}

fn default_n_grid(m: usize) -> Vec<usize> {
    let mut ns = Vec::new();
    let mut n = 8.min(m);
    while n < m {
        ns.push(n);
        n *= 2;
    }
    ns.push(m);
    ns
}

fn decay(ctx: &Ctx, a: &DecayArgs) -> CliResult<()> {
    let post = load_posterior(&a.model)?;
    if post.len() < 2 {
        return Err(CliError::input(
            "the model needs at least two latent points",
        ));
    }
    let m = post.ambient_dim();
    let ns = match &a.n_grid {
        Some(s) => parse_n_grid(s)?,
        None => default_n_grid(m),
    };
    if a.samples < 2 {
        return Err(CliError::input(
            "at least two Monte Carlo samples are required",
        ));
    }
    let x = post.latents();
    let za: Vec<f64> = x.column(0).iter().copied().collect();
    let zb: Vec<f64> = x.column(1).iter().copied().collect();
    let curve = DiscreteCurve::straight(&za, &zb, 1, 0.0, 1.0)?;
    let mut cp = restrict_to_curve(&post, &curve, a.nodes)?;
    if a.mean_only {
        cp = cp.mean_only();
    }
    if a.dim_order == DimOrder::Shuffled {
        cp = cp.reorder_outputs(&shuffled_order(m, ctx.seed))?;
    }
    stochastic::bound_constants(&cp, &ns)?;
    let estimator = match a.estimator {
        EstimatorArg::Cv => Estimator::ControlVariate,
        EstimatorArg::Plain => Estimator::Plain,
    };
    let sampler = LengthSampler::new(&cp, &ns)?;
    let reps: Vec<_> = (0..a.samples as u64)
        .into_par_iter()
        .map(|i| sampler.replicate(ctx.seed, i))
        .collect();
    let estimates = sampler.summarize(&reps, estimator, ctx.seed)?;
    let report = assemble_report(&cp, &ns, &estimates)?;

    let mut csv = String::from("n,L_n,l_n,stderr,rel_err,h_n,flag,diff\n");
    for r in &report.rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            r.n,
            fmt_f64(r.big_l),
            fmt_f64(r.small_l),
            fmt_f64(r.std_err),
            fmt_f64(r.rel_err),
            fmt_f64(r.h),
            u8::from(r.flagged),
            fmt_f64(r.excess())
        );
    }
    ctx.write("decay.csv", &csv)?;

    let n_max = *ns.iter().max().expect("non-empty grid");
    let top: Vec<_> = report
        .rows
        .iter()
        .filter(|r| r.n as f64 >= n_max as f64 / 10.0 && r.rel_err > 0.0)
        .collect();
    let slope = loglog_slope(
        &top.iter().map(|r| r.n as f64).collect::<Vec<_>>(),
        &top.iter().map(|r| r.rel_err).collect::<Vec<_>>(),
    )
    .map(fmt_f64)
    .unwrap_or_else(|_| "nan".into());
    let flagged = report.rows.iter().filter(|r| r.flagged).count();
    ctx.write(
        "decay_summary.txt",
        &key_values(&[
            ("A", fmt_f64(report.a)),
            ("b", fmt_f64(report.b)),
            ("n0", report.n0.map_or("none".into(), |n| n.to_string())),
            ("flagged_rows", flagged.to_string()),
            ("slope_top_decade", slope),
            ("estimator", format!("{:?}", a.estimator).to_lowercase()),
            ("dim_order", format!("{:?}", a.dim_order).to_lowercase()),
            ("samples", a.samples.to_string()),
            ("nodes", a.nodes.to_string()),
            ("seed", ctx.seed.to_string()),
        ]),
    )
}

fn swirl(ctx: &Ctx, a: &SwirlArgs) -> CliResult<()> {
    if a.samples < 2 {
        return Err(CliError::input("swirl needs at least two samples"));
    }
    let pts: Vec<([f64; 2], [f64; 2])> = (0..a.samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(ctx.seed, i);
            let z = [
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            ];
            (z, geometry::swirl(z))
        })
        .collect();
    let mut csv = String::from("z1,z2,g1,g2\n");
    for (z, g) in &pts {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            fmt_f64(z[0]),
            fmt_f64(z[1]),
            fmt_f64(g[0]),
            fmt_f64(g[1])
        );
    }
    ctx.write("swirl_points.csv", &csv)?;

    let p = a.pairs.min(pts.len());
    let mut pairs = String::from("i,j,d_before,d_after\n");
    let mut max_rel: f64 = 0.0;
    for i in 0..p {
        for j in i + 1..p {
            let (zi, gi) = pts[i];
            let (zj, gj) = pts[j];
            let before = (zi[0] - zj[0]).hypot(zi[1] - zj[1]);
            let after = (gi[0] - gj[0]).hypot(gi[1] - gj[1]);
            if before > 0.0 {
                max_rel = max_rel.max((after - before).abs() / before);
            }
            let _ = writeln!(pairs, "{i},{j},{},{}", fmt_f64(before), fmt_f64(after));
        }
    }
    ctx.write("swirl_pairs.csv", &pairs)?;

    let s = pts.len() as f64;
    let mean = |f: &dyn Fn(&[f64; 2]) -> f64| pts.iter().map(|(_, g)| f(g)).sum::<f64>() / s;
    let (m1, m2) = (mean(&|g| g[0]), mean(&|g| g[1]));
    let cov = |a: usize, b: usize, ma: f64, mb: f64| {
        pts.iter()
            .map(|(_, g)| (g[a] - ma) * (g[b] - mb))
            .sum::<f64>()
            / (s - 1.0)
    };
    let max_norm_err = pts
        .iter()
        .map(|(z, g)| {
            let n = z[0].hypot(z[1]);
            if n > 0.0 {
                (g[0].hypot(g[1]) - n).abs() / n
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);
    ctx.write(
        "swirl_summary.txt",
        &key_values(&[
            ("samples", pts.len().to_string()),
            ("pairs_from", p.to_string()),
            ("mean_g1", fmt_f64(m1)),
            ("mean_g2", fmt_f64(m2)),
            ("cov_g11", fmt_f64(cov(0, 0, m1, m1))),
            ("cov_g12", fmt_f64(cov(0, 1, m1, m2))),
            ("cov_g22", fmt_f64(cov(1, 1, m2, m2))),
            ("max_rel_distance_change", fmt_f64(max_rel)),
            ("max_rel_norm_error", fmt_f64(max_norm_err)),
            ("origin_image", format!("{:?}", geometry::swirl([0.0, 0.0]))),
        ]),
    )
}

fn balanced(ctx: &Ctx, a: &BalancedArgs) -> CliResult<()> {
    let family = ComponentFamily::parse(&a.family)?;
    let ns = parse_n_grid(&a.n_grid)?;
    if a.samples < 2 {
        return Err(CliError::input(
            "at least two Monte Carlo samples are required",
        ));
    }
    let mut csv = String::from(
        "n,m_n,Sigma_n,mu3_n2,mu4_n2,E_w_n_mc,stderr,E_w_n_ref,expansion,abs_diff_n2\n",
    );
    for (slot, &n) in ns.iter().enumerate() {
        let stats = balanced_stats(family, n)?;
        let base = slot as u64 * a.samples as u64;
        let v: Vec<f64> = (0..a.samples as u64)
            .into_par_iter()
            .map(|i| sample_squared_norm(family, n, &mut substream(ctx.seed, base + i)))
            .collect();
        let emp = EmpiricalBalanced::from_squared_norms(n, &v)?;
        let expansion = expected_norm_expansion(stats.m_n, stats.sigma_n, n)?;
        let reference = match family {
            ComponentFamily::Gaussian => chi_mean(n),
            ComponentFamily::Deterministic => 1.0,
            // No closed form; compare E_w_n_mc with the expansion instead.
            ComponentFamily::Uniform => f64::NAN,
        };
        let n2 = (n as f64) * (n as f64);
        let _ = writeln!(
            csv,
            "{n},{},{},{},{},{},{},{},{},{}",
            fmt_f64(stats.m_n),
            fmt_f64(stats.sigma_n),
            fmt_f64(stats.n2_mu3()),
            fmt_f64(stats.n2_mu4()),
            fmt_f64(emp.mean_w),
            fmt_f64(emp.se_mean_w),
            fmt_f64(reference),
            fmt_f64(expansion),
            fmt_f64((reference - expansion).abs() * n2)
        );
    }
    ctx.write("balanced.csv", &csv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn n_grid_forms() {
        assert_eq!(parse_n_grid("8,16, 32").unwrap(), vec![8, 16, 32]);
        assert_eq!(
            parse_n_grid("geom:8:1024:8").unwrap(),
            vec![8, 16, 32, 64, 128, 256, 512, 1024]
        );
        assert_eq!(
            parse_n_grid("geom:10:10000:4").unwrap(),
            vec![10, 100, 1000, 10000]
        );
        assert!(parse_n_grid("geom:0:10:3").is_err());
        assert!(parse_n_grid("8,x").is_err());
        assert!(parse_n_grid("0").is_err());
    }

    #[test]
    fn default_grid_reaches_m() {
        assert_eq!(
            default_n_grid(1024),
            vec![8, 16, 32, 64, 128, 256, 512, 1024]
        );
        assert_eq!(default_n_grid(100), vec![8, 16, 32, 64, 100]);
        assert_eq!(default_n_grid(3), vec![3]);
    }
}
