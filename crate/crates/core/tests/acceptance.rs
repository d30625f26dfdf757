//! End-to-end acceptance criteria. Every criterion runs, prints one result
//! line, and the test fails afterwards if any of them did.

mod common;

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use common::*;
use coxconv::engine::{effective_sample_size, summarize, ChainOutput, ModelKind};
use coxconv::genesis::{thin_events, GroundTruth};
use coxconv::metrics::{l2_error, predictive_loglik, Quadrature};
use coxconv::multioutput::{
    cross_cov, latent_posterior_with_jitter, CouplingParams, LatentBasis, LatentState, ProcessBlock,
};
use coxconv::gaussian::{gauss_density, CovMatrix, MvnDist};
use coxconv::sgcp::{ess_transition, sample_gamma, LogNormal, PriorConfig, ProcessInit, ProcessSampler, SamplerSettings};
use coxconv::shell::{archive_differences, cmd_fit, cmd_generate, load_events, write_events, Config};
use coxconv::thinning::{
    delete_ratio_from_gap, estimate_total, insert_ratio_from_gap, level_gap, move_ratio_from_gaps, posterior_shape, single_rate,
    BirthDeathContext, RateLadder,
};
use coxconv::{sigmoid, EventSet, Point, Region};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use statrs::distribution::{ContinuousCDF, Gamma};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn report(line: &str) {
    // Written past the test harness's capture so the lines reach the log.
    let mut err = std::io::stderr();
    let _ = writeln!(err, "{line}");
}

fn lognormal(median: f64, sd: f64) -> LogNormal {
    LogNormal::new(median.ln(), sd).unwrap()
}

fn base_config(seed: u64) -> Config {
    let mut c = Config::default();
    c.seed = seed;
    c.evaluation.split_fraction = 1.0;
    c
}

// ---------------------------------------------------------------------------
// 1. Thinned-point reduction and speed of the two-level ladder.

fn low_bump_link(x: f64) -> f64 {
    -3.0 + 6.0 * (-(x - 0.75).powi(2) / (2.0 * 0.09f64.powi(2))).exp()
}

const C1_LAMBDA: f64 = 100.0;
const C1_ITERS: usize = 1500;
const C1_BURN: usize = 500;

fn c1_fit(root: &Path, levels: Vec<f64>, name: &str) -> ChainOutput {
    let region = Region::unit_interval();
    let events_path = root.join("c1_events.csv");
    if !events_path.exists() {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let ev = thin_events(|x| C1_LAMBDA * sigmoid(low_bump_link(x[0])), C1_LAMBDA, 0, &region, &mut rng).unwrap();
        write_events(&events_path, &[ev], 1).unwrap();
    }
    let mut c = base_config(11);
    c.chain.model = ModelKind::Independent;
    c.chain.n_iters = C1_ITERS;
    c.chain.burn_in = C1_BURN;
    c.chain.rate_levels = levels;
    c.priors = PriorConfig {
        lambda_alpha: 1.0,
        lambda_beta: 0.01,
        kappa: lognormal(2.0, 0.5),
        theta: lognormal(0.003, 0.7),
        phi: LogNormal::default(),
    };
    cmd_fit(&c, &[events_path], &root.join(name)).unwrap()
}

fn mean_candidates(chain: &ChainOutput) -> f64 {
    let k = chain.data[0].len() as f64;
    let rows: Vec<f64> = chain
        .trace
        .iter()
        .filter(|r| r.iteration >= C1_BURN)
        .map(|r| r.num_thinned as f64 + k)
        .collect();
    mean(&rows)
}

fn c1_runs(root: &Path) -> (ChainOutput, ChainOutput) {
    (c1_fit(root, vec![1.0], "c1_single"), c1_fit(root, vec![0.5, 1.0], "c1_two_level"))
}

fn criterion_1(root: &Path) -> Outcome {
    let (single, two) = c1_runs(root);
    let n = 100_000;
    let low = (0..n)
        .filter(|i| sigmoid(low_bump_link((*i as f64 + 0.5) / n as f64)) <= 0.45)
        .count() as f64
        / n as f64;
    let analytic = low * 0.5 + (1.0 - low);
    let ratio = mean_candidates(&two) / mean_candidates(&single);
    let speedup = two.timing.iterations_per_sec / single.timing.iterations_per_sec;
    let pass = low >= 0.75 && (ratio / analytic - 1.0).abs() <= 0.10 && speedup >= 1.5;
    outcome(
        pass,
        format!(
            "low fraction {low:.3}, candidate ratio {ratio:.3} vs analytic {analytic:.3}, speedup {speedup:.2}x ({:.1} vs {:.1} it/s)",
            two.timing.iterations_per_sec, single.timing.iterations_per_sec
        ),
    )
}

// ---------------------------------------------------------------------------
// 2. The multi-level formulas reduce to the single-rate ones.

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        ((a - b) / b).abs()
    }
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ladder = RateLadder::single();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let g = 30.0 * rng.random::<f64>() - 15.0;
        let g2 = 30.0 * rng.random::<f64>() - 15.0;
        let m: usize = rng.random_range(1..200);
        let k: usize = rng.random_range(0..200);
        let ctx = BirthDeathContext {
            num_thinned: m,
            lambda_star: 0.01 + 500.0 * rng.random::<f64>(),
            volume: 0.01 + 10.0 * rng.random::<f64>(),
            birth_prob: 0.05 + 0.9 * rng.random::<f64>(),
        };
        let b = ctx.birth_prob;
        let ins = insert_ratio_from_gap(&ctx, level_gap(g, 1.0));
        let del = delete_ratio_from_gap(&ctx, level_gap(g, 1.0));
        let mv = move_ratio_from_gaps(level_gap(g, 1.0), level_gap(g2, 1.0));
        let alpha = 0.1 + 5.0 * rng.random::<f64>();
        let total = estimate_total(&vec![0; k], &vec![0; m], &ladder);
        worst = worst
            .max(rel_err(ins, single_rate::accept_insert(g, m, ctx.lambda_star, ctx.volume, b)))
            .max(rel_err(del, single_rate::accept_delete(g, m, ctx.lambda_star, ctx.volume, b)))
            .max(rel_err(mv, single_rate::accept_move(g, g2)))
            .max(rel_err(total, (k + m) as f64))
            .max(rel_err(posterior_shape(alpha, total), single_rate::posterior_shape(alpha, k, m)));
    }
    outcome(worst <= 1e-12, format!("worst relative error {worst:.2e} over 1000 states"))
}

// ---------------------------------------------------------------------------
// 3. Gibbs draws of λ*.

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let region = Region::new(vec![0.0], vec![2.0]).unwrap();
    let priors = PriorConfig {
        lambda_alpha: 2.0,
        lambda_beta: 0.5,
        ..PriorConfig::default()
    };
    let observed: Vec<Point> = (0..7).map(|_| region.sample_uniform(&mut rng)).collect();
    let thinned: Vec<Point> = (0..5).map(|_| region.sample_uniform(&mut rng)).collect();
    let mut s = ProcessSampler::new(
        0,
        observed.clone(),
        region,
        RateLadder::single(),
        priors,
        SamplerSettings::default(),
        Arc::new(LatentBasis::uncoupled(vec![1e-4])),
        ProcessInit {
            lambda_star: 5.0,
            kappa: 1.0,
            theta: 0.01,
        },
    )
    .unwrap();
    s.reset_points(observed, vec![0.3; 7], thinned, vec![-0.4; 5]).unwrap();
    let (shape, rate) = (2.0 + 12.0, 0.5 + 2.0);
    let n = 10_000;
    let draws: Vec<f64> = (0..n)
        .map(|_| {
            s.gibbs_lambda_star(&mut rng).unwrap();
            s.state().lambda_star()
        })
        .collect();
    let (m, v) = (mean(&draws), variance(&draws));
    let (tm, tv) = (shape / rate, shape / (rate * rate));
    let se_mean = (tv / n as f64).sqrt();
    let se_var = tv * (2.0 / (n as f64 - 1.0) + 6.0 / shape / n as f64).sqrt();
    let gamma = Gamma::new(shape, rate).unwrap();
    let bins = 20;
    let mut counts = vec![0.0; bins];
    for x in &draws {
        counts[((gamma.cdf(*x) * bins as f64) as usize).min(bins - 1)] += 1.0;
    }
    let expected = n as f64 / bins as f64;
    let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
    let p = chi2_sf(chi2, (bins - 1) as f64);
    let pass = (m - tm).abs() <= 3.0 * se_mean && (v - tv).abs() <= 3.0 * se_var && p > 0.01;
    outcome(
        pass,
        format!(
            "mean {m:.4} vs {tm:.4} (se {se_mean:.4}), var {v:.4} vs {tv:.4} (se {se_var:.4}), chi2 p {p:.3}"
        ),
    )
}

// ---------------------------------------------------------------------------
// 4. Latent posterior against dense joint-Gaussian conditioning.

fn dense_latent_posterior(
    grid: &[Point],
    phis: &[f64],
    kappas: &[f64],
    thetas: &[f64],
    xs: &[Vec<Point>],
    gs: &[Vec<f64>],
) -> (DVector<f64>, DMatrix<f64>) {
    let j = grid.len();
    let q_count = phis.len();
    let nu = j * q_count;
    // Prior blocks written out from the kernels themselves.
    let kuu = |q: usize| DMatrix::from_fn(j, j, |a, b| gauss_density(&grid[a], &grid[b], phis[q]).unwrap());
    let kug = |q: usize, d: usize, x: &[f64], a: usize| kappas[d] * gauss_density(x, &grid[a], thetas[d] + phis[q]).unwrap();
    let obs: Vec<(usize, &Point)> = xs.iter().enumerate().flat_map(|(d, v)| v.iter().map(move |x| (d, x))).collect();
    let n = obs.len();
    let mut c_ug = DMatrix::zeros(nu, n);
    for q in 0..q_count {
        for a in 0..j {
            for (i, (d, x)) in obs.iter().enumerate() {
                c_ug[(q * j + a, i)] = kug(q, *d, x, a);
            }
        }
    }
    let mut c_gg = DMatrix::zeros(n, n);
    for (i, (d, x)) in obs.iter().enumerate() {
        for (k, (d2, y)) in obs.iter().enumerate() {
            c_gg[(i, k)] = if d == d2 {
                (0..q_count)
                    .map(|q| kappas[*d].powi(2) * gauss_density(x, y, 2.0 * thetas[*d] + phis[q]).unwrap())
                    .sum()
            } else {
                (0..q_count)
                    .map(|q| {
                        let a = DVector::from_fn(j, |r, _| kug(q, *d, x, r));
                        let b = DVector::from_fn(j, |r, _| kug(q, *d2, y, r));
                        let kinv = kuu(q).try_inverse().unwrap();
                        (a.transpose() * kinv * b)[(0, 0)]
                    })
                    .sum()
            };
        }
    }
    let mut c_uu = DMatrix::zeros(nu, nu);
    for q in 0..q_count {
        c_uu.view_mut((q * j, q * j), (j, j)).copy_from(&kuu(q));
    }
    let g = DVector::from_iterator(n, gs.iter().flatten().copied());
    let inv = c_gg.clone().try_inverse().unwrap();
    let mean = &c_ug * &inv * g;
    let cov = &c_uu - &c_ug * &inv * c_ug.transpose();
    (mean, cov)
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let d_count = rng.random_range(1..=3);
        let j = rng.random_range(1..=4);
        let q_count = rng.random_range(1..=2);
        let grid: Vec<Point> = (0..j).map(|a| vec![(a as f64 + 0.5) / j as f64]).collect();
        let phis: Vec<f64> = (0..q_count).map(|_| 0.02 + 0.08 * rng.random::<f64>()).collect();
        let kappas: Vec<f64> = (0..d_count).map(|_| 0.5 + 1.5 * rng.random::<f64>()).collect();
        let thetas: Vec<f64> = (0..d_count).map(|_| 0.005 + 0.03 * rng.random::<f64>()).collect();
        let xs: Vec<Vec<Point>> = (0..d_count)
            .map(|_| {
                let n = rng.random_range(1..=5);
                (0..n).map(|i| vec![(i as f64 + rng.random::<f64>()) / n as f64]).collect()
            })
            .collect();
        let gs: Vec<Vec<f64>> = xs.iter().map(|v| v.iter().map(|_| 2.0 * rng.random::<f64>() - 1.0).collect()).collect();
        let latent = LatentState::zeros(grid.clone(), phis.clone()).unwrap();
        let params = CouplingParams::new(kappas.clone(), thetas.clone()).unwrap();
        let blocks: Vec<ProcessBlock> = (0..d_count)
            .map(|d| ProcessBlock {
                process: d,
                locations: &xs[d],
                values: &gs[d],
            })
            .collect();
        let ours = latent_posterior_with_jitter(&blocks, &latent, &params, 0.0).unwrap();
        let (mean, cov) = dense_latent_posterior(&grid, &phis, &kappas, &thetas, &xs, &gs);
        let scale = 1.0 + cov.amax().max(mean.amax());
        worst = worst
            .max((&ours.mean - &mean).amax() / scale)
            .max((ours.cov.entries() - &cov).amax() / scale);
    }
    outcome(worst <= 1e-8, format!("worst scaled deviation {worst:.2e} over 100 instances"))
}

// ---------------------------------------------------------------------------
// 5. Closed-form cross-covariance against quadrature of the convolution.

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let x: f64 = rng.random();
        let z: f64 = rng.random();
        let kappa = 0.1 + 2.9 * rng.random::<f64>();
        let theta = 0.001 + 0.099 * rng.random::<f64>();
        let phi = 0.001 + 0.099 * rng.random::<f64>();
        let sd = theta.max(phi).sqrt();
        let f = |s: f64| {
            kappa * (-(x - s).powi(2) / (2.0 * theta)).exp() / (2.0 * std::f64::consts::PI * theta).sqrt()
                * (-(s - z).powi(2) / (2.0 * phi)).exp()
                / (2.0 * std::f64::consts::PI * phi).sqrt()
        };
        // Panels narrower than the smaller kernel width so no peak is skipped.
        let (lo, hi) = (x.min(z) - 12.0 * sd, x.max(z) + 12.0 * sd);
        let panels = 400;
        let w = (hi - lo) / panels as f64;
        let quad: f64 = (0..panels)
            .map(|i| adaptive_simpson(&f, lo + i as f64 * w, lo + (i + 1) as f64 * w, 1e-14))
            .sum();
        let closed = cross_cov(&[x], &[z], kappa, theta, phi).unwrap();
        worst = worst.max((quad - closed).abs());
    }
    outcome(worst <= 1e-6, format!("worst absolute deviation {worst:.2e} over 50 configurations"))
}

// ---------------------------------------------------------------------------
// 6. Forward versus successive-conditional simulation.

struct JointDraw {
    lambda_star: f64,
    thinned: f64,
    mean_g: f64,
}

fn geweke_sampler(priors: PriorConfig) -> ProcessSampler {
    ProcessSampler::new(
        0,
        Vec::new(),
        Region::unit_interval(),
        RateLadder::single(),
        priors,
        SamplerSettings::default(),
        Arc::new(LatentBasis::uncoupled(vec![1e-4])),
        ProcessInit {
            lambda_star: 1.0,
            kappa: 1.0,
            theta: 1.0,
        },
    )
    .unwrap()
}

/// Replaces the data (and thinned points) by a fresh draw given `λ*`, the
/// hyperparameters and the current function.
fn resample_data(s: &mut ProcessSampler, rng: &mut ChaCha8Rng) {
    let region = Region::unit_interval();
    let n = if s.state().lambda_star() > 0.0 {
        Poisson::new(s.state().lambda_star()).unwrap().sample(rng) as usize
    } else {
        0
    };
    let xs: Vec<Point> = (0..n).map(|_| region.sample_uniform(rng)).collect();
    let g = s.draw_function_at(&xs, rng).unwrap();
    let (mut obs, mut obs_g, mut thin, mut thin_g) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (x, v) in xs.into_iter().zip(g) {
        if rng.random::<f64>() < sigmoid(v) {
            obs.push(x);
            obs_g.push(v);
        } else {
            thin.push(x);
            thin_g.push(v);
        }
    }
    s.reset_points(obs, obs_g, thin, thin_g).unwrap();
}

fn joint_stats(s: &ProcessSampler) -> JointDraw {
    let g = s.state().g_values();
    JointDraw {
        lambda_star: s.state().lambda_star(),
        thinned: s.state().num_thinned() as f64,
        mean_g: if g.is_empty() { 0.0 } else { mean(g) },
    }
}

fn criterion_6() -> Outcome {
    let priors = PriorConfig::default();
    let n = 2000;
    let mut rng = ChaCha8Rng::seed_from_u64(6);

    let forward: Vec<JointDraw> = (0..n)
        .map(|_| {
            let mut s = geweke_sampler(priors);
            let ls = sample_gamma(priors.lambda_alpha, priors.lambda_beta, &mut rng).unwrap().max(1e-300);
            let kappa = priors.kappa.sample(&mut rng);
            let theta = priors.theta.sample(&mut rng);
            s.set_parameters(ls, kappa, theta).unwrap();
            resample_data(&mut s, &mut rng);
            joint_stats(&s)
        })
        .collect();

    let mut s = geweke_sampler(priors);
    let ls = sample_gamma(priors.lambda_alpha, priors.lambda_beta, &mut rng).unwrap().max(1e-300);
    s.set_parameters(ls, priors.kappa.sample(&mut rng), priors.theta.sample(&mut rng)).unwrap();
    resample_data(&mut s, &mut rng);
    for _ in 0..300 {
        s.sweep(&mut rng).unwrap();
        resample_data(&mut s, &mut rng);
    }
    s.end_burn_in();
    let mut chain = Vec::with_capacity(n);
    for _ in 0..n {
        s.sweep(&mut rng).unwrap();
        chain.push(joint_stats(&s));
        resample_data(&mut s, &mut rng);
    }

    let mut pass = true;
    let mut parts = Vec::new();
    let columns: [(&str, fn(&JointDraw) -> f64); 3] = [
        ("M", |d| d.thinned),
        ("lambda*", |d| d.lambda_star),
        ("mean g", |d| d.mean_g),
    ];
    for (name, f) in columns {
        let a: Vec<f64> = forward.iter().map(f).collect();
        let b: Vec<f64> = chain.iter().map(f).collect();
        let ess = effective_sample_size(&b).max(1.0);
        let z = (mean(&a) - mean(&b)) / (variance(&a) / a.len() as f64 + variance(&b) / ess).sqrt();
        let p = z_pvalue(z);
        pass &= p > 0.01;
        parts.push(format!("{name}: {:.3} vs {:.3} (ess {ess:.0}) p {p:.3}", mean(&a), mean(&b)));
    }
    outcome(pass, parts.join("; "))
}

// ---------------------------------------------------------------------------
// 7. Recovery of dependent synthetic intensities.

fn recovery_config(seed: u64) -> Config {
    let mut c = base_config(seed);
    c.set_halving_ladder(3).unwrap();
    c.chain.model = ModelKind::Coupled;
    c.chain.num_latent = 1;
    c.priors = PriorConfig {
        lambda_alpha: 2.0,
        lambda_beta: 0.02,
        kappa: lognormal(1.0, 0.5),
        theta: lognormal(0.005, 0.7),
        phi: lognormal(0.01, 0.5),
    };
    c
}

fn c7_run(root: &Path) -> (Config, GroundTruth, ChainOutput) {
    let mut c = recovery_config(7);
    c.chain.n_iters = 3000;
    c.chain.burn_in = 1000;
    let data = root.join("c7_data");
    let gen = cmd_generate(&c, &data).unwrap();
    let chain = cmd_fit(&c, &gen.files, &root.join("c7_archive")).unwrap();
    (c, gen.truth, chain)
}

fn criterion_7(root: &Path) -> Outcome {
    let (_, truth, chain) = c7_run(root);
    let region = chain.region.clone();
    let xs = region.lattice(101);
    let summary = summarize(&chain, &xs).unwrap();
    let est: &[f64] = &summary.latent[0].mean;
    let tru: Vec<f64> = xs.iter().map(|x| truth.latent(0, x)).collect();
    let corr = pearson(est, &tru);
    let quad = Quadrature::default_for(&region);
    let s = summarize(&chain, quad.points()).unwrap();
    let mut pass = corr >= 0.8;
    let mut ratios = Vec::new();
    for d in 0..truth.num_processes() {
        let t: Vec<f64> = quad.points().iter().map(|x| truth.intensity(d, x)).collect();
        let reference = vec![truth.processes[d].lambda_star / 2.0; t.len()];
        let r = l2_error(&s.intensity[d].mean, &t, &quad).unwrap() / l2_error(&reference, &t, &quad).unwrap();
        pass &= r <= 0.5;
        ratios.push(format!("{r:.3}"));
    }
    outcome(
        pass,
        format!(
            "latent correlation {corr:.3}, L2 ratio to constant reference per process [{}], {} events",
            ratios.join(", "),
            chain.data.iter().map(|e| e.len()).sum::<usize>()
        ),
    )
}

// ---------------------------------------------------------------------------
// 8. Coupled versus independent on a sparsely observed process.

const C8_REPLICATES: u64 = 10;
const C8_KEEP: f64 = 0.25;

fn c8_replicate(root: &Path, r: u64) -> (f64, f64) {
    let mut c = recovery_config(1000 + r);
    c.chain.n_iters = 1500;
    c.chain.burn_in = 500;
    let dir = root.join(format!("c8_{r}"));
    let gen = cmd_generate(&c, &dir.join("data")).unwrap();
    let region = c.region().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5000 + r);
    let kept: Vec<Point> = gen.events[0]
        .points
        .iter()
        .filter(|_| rng.random::<f64>() < C8_KEEP)
        .cloned()
        .collect();
    write_events(&gen.files[0], &[EventSet::new(0, kept)], 1).unwrap();
    let test = thin_events(
        |x| gen.truth.intensity(0, x),
        gen.truth.processes[0].lambda_star,
        0,
        &region,
        &mut rng,
    )
    .unwrap();
    assert_eq!(load_events(&gen.files, &region).unwrap().len(), 4);
    let quad = Quadrature::default_for(&region);
    let coupled = cmd_fit(&c, &gen.files, &dir.join("coupled")).unwrap();
    c.chain.model = ModelKind::Independent;
    let independent = cmd_fit(&c, &gen.files, &dir.join("independent")).unwrap();
    let scale = 1.0 / C8_KEEP;
    (
        predictive_loglik(&coupled, 0, &test, &quad, scale).unwrap().log_mean_lik,
        predictive_loglik(&independent, 0, &test, &quad, scale).unwrap().log_mean_lik,
    )
}

fn criterion_8(root: &Path) -> Outcome {
    let scores: Vec<(f64, f64)> = (0..C8_REPLICATES).map(|r| c8_replicate(root, r)).collect();
    let wins = scores.iter().filter(|(a, b)| a > b).count();
    let diffs: Vec<String> = scores.iter().map(|(a, b)| format!("{:+.2}", a - b)).collect();
    outcome(
        wins >= 8,
        format!("coupled wins {wins}/{C8_REPLICATES}; differences [{}]", diffs.join(", ")),
    )
}

// ---------------------------------------------------------------------------
// 9. Elliptical slice sampling leaves its prior invariant.

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mean_v = DVector::from_vec(vec![1.0, -2.0, 0.5]);
    let cov = DMatrix::from_row_slice(3, 3, &[2.0, 0.8, 0.3, 0.8, 1.0, -0.2, 0.3, -0.2, 0.5]);
    let prior = MvnDist::new(mean_v.clone(), CovMatrix::new(cov.clone()).unwrap()).unwrap();
    let mut x = DVector::from_vec(vec![4.0, 1.0, -3.0]);
    let mut draws = Vec::new();
    for _ in 0..5000 {
        x = ess_transition(&x, &prior, |_| 0.0, &mut rng).unwrap();
        draws.push(x.clone());
    }
    let mut pass = true;
    let mut parts = Vec::new();
    for i in 0..3 {
        let xs: Vec<f64> = draws.iter().map(|v| v[i]).collect();
        let p = ks_one_sample(&xs, |t| normal_cdf(t, mean_v[i], cov[(i, i)].sqrt()));
        pass &= p > 0.01;
        parts.push(format!("{p:.3}"));
    }
    outcome(pass, format!("KS p-values per marginal [{}]", parts.join(", ")))
}

// ---------------------------------------------------------------------------
// 10. Reruns with equal seeds give identical archives.

fn archive_dirs(root: &Path) -> Vec<PathBuf> {
    let mut dirs = vec![root.join("c1_single"), root.join("c1_two_level"), root.join("c7_archive")];
    for r in 0..C8_REPLICATES {
        dirs.push(root.join(format!("c8_{r}/coupled")));
        dirs.push(root.join(format!("c8_{r}/independent")));
    }
    dirs
}

fn criterion_10(first: &Path, second: &Path) -> Outcome {
    c1_runs(second);
    c7_run(second);
    for r in 0..C8_REPLICATES {
        c8_replicate(second, r);
    }
    let mut differing = Vec::new();
    let a_dirs = archive_dirs(first);
    let b_dirs = archive_dirs(second);
    for (a, b) in a_dirs.iter().zip(&b_dirs) {
        assert!(a.exists(), "missing archive {}", a.display());
        for f in archive_differences(a, b).unwrap() {
            differing.push(format!("{}/{f}", a.file_name().unwrap().to_string_lossy()));
        }
    }
    outcome(
        differing.is_empty(),
        format!("{} archives compared, differing files: {:?}", a_dirs.len(), differing),
    )
}

// ---------------------------------------------------------------------------

#[test]
fn acceptance_criteria() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let (a, b) = (first.path(), second.path());
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("1 adaptive-thinning reduction", Box::new(|| criterion_1(a))),
        ("2 single-rate reduction identity", Box::new(criterion_2)),
        ("3 lambda* Gibbs draws", Box::new(criterion_3)),
        ("4 latent posterior oracle", Box::new(criterion_4)),
        ("5 convolution identity", Box::new(criterion_5)),
        ("6 joint-distribution test", Box::new(criterion_6)),
        ("7 synthetic recovery", Box::new(|| criterion_7(a))),
        ("8 coupled vs independent", Box::new(|| criterion_8(a))),
        ("9 elliptical slice invariance", Box::new(criterion_9)),
        ("10 determinism", Box::new(|| criterion_10(a, b))),
    ];
    let mut failed = Vec::new();
    for (name, run) in &criteria {
        let start = std::time::Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let status = if result.pass { "PASS" } else { "FAIL" };
        report(&format!(
            "criterion {name}: {status} ({:.1}s) {}",
            start.elapsed().as_secs_f64(),
            result.detail
        ));
        if !result.pass {
            failed.push(*name);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

