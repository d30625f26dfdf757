//! Chain orchestration.
//!
//! Each iteration advances every process sampler in parallel, then, behind a
//! barrier, draws the latent values from their joint Gaussian conditional,
//! moves them jointly with the function values by an elliptical slice step,
//! and updates the latent variances. Every process owns a ChaCha stream keyed by
//! its id and the latent step owns stream 0, so the output depends only on
//! the seed, never on the worker count.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::multioutput::{inducing_grid, LatentBasis, LatentPrecision, LatentState};
use crate::region::{EventSet, Point, Region};
use crate::sgcp::cache::PointCache;
use crate::sgcp::{elliptical_slice, BasisProposal, LogNormal, PriorConfig, ProcessInit, ProcessSampler, SamplerSettings, StepSizeAdapter};
use crate::thinning::RateLadder;
use crate::{sigmoid, Error, Result};

/// Which prior ties the processes together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Shared latent functions convolved per process.
    Coupled,
    /// One Gaussian process per process, no sharing.
    Independent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n_iters: usize,
    pub burn_in: usize,
    pub thin_every: usize,
    pub seed: u64,
    pub parallel_workers: usize,
    pub rate_ladder: RateLadder,
    /// Number of latent functions `Q`.
    pub num_latent: usize,
    /// Inducing points per axis `J`.
    pub grid_per_axis: usize,
    /// Inducing grid extension beyond the region, as a fraction of each axis.
    pub grid_margin: f64,
    pub priors: PriorConfig,
    pub sampler: SamplerSettings,
    pub model: ModelKind,
    /// Initial latent variance; the prior median when absent.
    pub initial_phi: Option<f64>,
    /// Fixed kernel variance added to `2θ` in the independent model.
    pub independent_phi: f64,
    pub phi_step: f64,
    pub phi_target_accept: f64,
    /// Joint slice moves of the latent and function values per iteration.
    pub latent_slice_steps: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n_iters: 2000,
            burn_in: 1000,
            thin_every: 1,
            seed: 0,
            parallel_workers: 1,
            rate_ladder: RateLadder::single(),
            num_latent: 1,
            grid_per_axis: 20,
            grid_margin: 0.1,
            priors: PriorConfig::default(),
            sampler: SamplerSettings::default(),
            model: ModelKind::Coupled,
            initial_phi: None,
            independent_phi: 1e-4,
            phi_step: 0.1,
            phi_target_accept: 0.3,
            latent_slice_steps: 5,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iters == 0 || self.burn_in >= self.n_iters {
            return Err(Error::Parameter(format!(
                "need burn_in < n_iters, got {} and {}",
                self.burn_in, self.n_iters
            )));
        }
        if self.thin_every == 0 || self.parallel_workers == 0 || self.num_latent == 0 || self.grid_per_axis == 0 {
            return Err(Error::Parameter(
                "thin_every, parallel_workers, num_latent and grid_per_axis must be positive".into(),
            ));
        }
        if !(self.grid_margin >= 0.0 && self.grid_margin.is_finite()) {
            return Err(Error::Parameter(format!("grid margin {}", self.grid_margin)));
        }
        if !(self.independent_phi > 0.0) || !(self.phi_step > 0.0) {
            return Err(Error::Parameter("latent variance settings must be positive".into()));
        }
        if let Some(p) = self.initial_phi {
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::Parameter(format!("initial phi {p}")));
            }
        }
        self.priors.validate()?;
        self.sampler.validate()
    }
}

/// One process's part of a retained draw. Observed points are not repeated;
/// `g` covers the observed points first, then `thinned`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessDraw {
    pub lambda_star: f64,
    pub kappa: f64,
    pub theta: f64,
    pub thinned: Vec<Point>,
    pub thinned_levels: Vec<usize>,
    pub g: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSample {
    pub iteration: usize,
    pub processes: Vec<ProcessDraw>,
    /// Latent values on the inducing grid, one vector per latent function;
    /// empty for the independent model.
    pub latent: Vec<Vec<f64>>,
    pub phis: Vec<f64>,
}

/// Per-iteration, per-process statistics (burn-in included).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub process: usize,
    pub lambda_star: f64,
    pub mean_g: f64,
    pub num_thinned: usize,
    pub kappa: f64,
    pub theta: f64,
    pub hmc_accept_prob: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_secs: f64,
    pub process_secs: f64,
    pub latent_secs: f64,
    pub iterations_per_sec: f64,
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub region: Region,
    pub model: ModelKind,
    pub data: Vec<EventSet>,
    /// Inducing grid (empty for the independent model).
    pub grid: Vec<Point>,
    pub rel_jitter: f64,
    pub samples: Vec<PosteriorSample>,
    pub trace: Vec<TraceRow>,
    pub timing: Timing,
    /// Side of the largest dense matrix factored during the run.
    pub peak_matrix_side: usize,
    pub phi_acceptance: f64,
}

fn worker_pool(n: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::Parameter(format!("cannot start {n} workers: {e}")))
}

/// Stream 0 drives the latent step; process `d` uses stream `d + 1`.
fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Runs the full sampler and returns the retained draws.
pub fn run_chain(data: &[EventSet], region: &Region, config: &RunConfig) -> Result<ChainOutput> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Precondition("at least one process is required".into()));
    }
    for (d, ev) in data.iter().enumerate() {
        if ev.process_id != d {
            return Err(Error::Validation(format!(
                "event sets must be ordered by process id; position {d} holds process {}",
                ev.process_id
            )));
        }
        ev.validate(region)?;
    }
    let coupled = config.model == ModelKind::Coupled;
    let phi0 = config.initial_phi.unwrap_or(config.priors.phi.median());
    let (mut latent, mut basis) = if coupled {
        let grid = inducing_grid(region, config.grid_per_axis, config.grid_margin);
        let latent = LatentState::zeros(grid, vec![phi0; config.num_latent])?;
        let basis = Arc::new(LatentBasis::new(&latent)?);
        (Some(latent), basis)
    } else {
        (None, Arc::new(LatentBasis::uncoupled(vec![config.independent_phi])))
    };

    let mut samplers = data
        .iter()
        .map(|ev| {
            let init = ProcessInit::from_priors(&config.priors, ev.len(), region.volume());
            ProcessSampler::new(
                ev.process_id,
                ev.points.clone(),
                region.clone(),
                config.rate_ladder.clone(),
                config.priors,
                config.sampler,
                basis.clone(),
                init,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rngs: Vec<ChaCha8Rng> = (0..data.len()).map(|d| stream(config.seed, d as u64 + 1)).collect();
    let mut latent_rng = stream(config.seed, 0);
    let mut phi_adapter = StepSizeAdapter::new(config.phi_step, config.phi_target_accept);
    let (mut phi_accepts, mut phi_tries) = (0usize, 0usize);
    let pool = worker_pool(config.parallel_workers)?;

    let mut samples = Vec::new();
    let mut trace = Vec::with_capacity(config.n_iters * data.len());
    let mut timing = Timing::default();
    let mut peak_latent = basis.feature_len();
    let start = Instant::now();

    for it in 0..config.n_iters {
        if it == config.burn_in {
            samplers.iter_mut().for_each(ProcessSampler::end_burn_in);
            phi_adapter.freeze();
        }
        let t0 = Instant::now();
        pool.install(|| {
            samplers
                .par_iter_mut()
                .zip(rngs.par_iter_mut())
                .try_for_each(|(s, rng)| s.sweep(rng).map_err(|e| e.at(it, Some(s.process_id()))))
        })?;
        timing.process_secs += t0.elapsed().as_secs_f64();

        // Barrier: every process must have completed exactly `it + 1` sweeps.
        if let Some(s) = samplers.iter().find(|s| s.sweeps() != it as u64 + 1) {
            return Err(Error::Invariant(format!(
                "process {} completed {} sweeps at iteration {it}",
                s.process_id(),
                s.sweeps()
            ))
            .at(it, None));
        }

        let t1 = Instant::now();
        if let Some(lat) = latent.as_mut() {
            let parts: Vec<LatentPrecision> = pool.install(|| samplers.par_iter().map(|s| s.latent_contribution()).collect());
            let mut acc = LatentPrecision::zeros(basis.feature_len());
            for p in &parts {
                acc.merge(p);
            }
            let values = acc.sample(&basis, &mut latent_rng).map_err(|e| e.at(it, None))?;
            lat.set_values(values);
            basis = Arc::new(LatentBasis::new(lat).map_err(|e| e.at(it, None))?);
            let b = &basis;
            pool.install(|| {
                samplers
                    .par_iter_mut()
                    .try_for_each(|s| s.set_basis(b.clone()).map_err(|e| e.at(it, Some(s.process_id()))))
            })?;
            for _ in 0..config.latent_slice_steps {
                basis = latent_slice_step(&mut samplers, &basis, lat, &pool, &mut latent_rng).map_err(|e| e.at(it, None))?;
            }
            let accepted = phi_step(
                &mut samplers,
                lat,
                &mut basis,
                &config.priors.phi,
                phi_adapter.step(),
                &pool,
                &mut latent_rng,
            )
            .map_err(|e| e.at(it, None))?;
            let hits = accepted.iter().filter(|a| **a).count();
            phi_adapter.update(hits as f64 / accepted.len() as f64);
            phi_accepts += hits;
            phi_tries += accepted.len();
            peak_latent = peak_latent.max(basis.feature_len());
        }
        timing.latent_secs += t1.elapsed().as_secs_f64();

        for s in &samplers {
            let st = s.state();
            let g = st.g_values();
            trace.push(TraceRow {
                iteration: it,
                process: s.process_id(),
                lambda_star: st.lambda_star(),
                mean_g: if g.is_empty() { 0.0 } else { g.iter().sum::<f64>() / g.len() as f64 },
                num_thinned: st.num_thinned(),
                kappa: st.kappa(),
                theta: st.theta(),
                hmc_accept_prob: s.stats().hmc_accept_prob,
            });
        }

        if it >= config.burn_in && (it - config.burn_in) % config.thin_every == 0 {
            samples.push(PosteriorSample {
                iteration: it,
                processes: samplers
                    .iter()
                    .map(|s| {
                        let st = s.state();
                        ProcessDraw {
                            lambda_star: st.lambda_star(),
                            kappa: st.kappa(),
                            theta: st.theta(),
                            thinned: st.thinned().to_vec(),
                            thinned_levels: st.rate_idx().to_vec(),
                            g: st.g_values().to_vec(),
                        }
                    })
                    .collect(),
                latent: latent
                    .as_ref()
                    .map(|l| l.values().iter().map(|v| v.iter().copied().collect()).collect())
                    .unwrap_or_default(),
                phis: basis.phis().to_vec(),
            });
        }
    }
    timing.total_secs = start.elapsed().as_secs_f64();
    timing.iterations_per_sec = config.n_iters as f64 / timing.total_secs.max(1e-12);
    let peak_points = samplers.iter().map(ProcessSampler::peak_points).max().unwrap_or(0);
    Ok(ChainOutput {
        region: region.clone(),
        model: config.model,
        data: data.to_vec(),
        grid: latent.map(|l| l.grid().to_vec()).unwrap_or_default(),
        rel_jitter: config.sampler.rel_jitter,
        samples,
        trace,
        timing,
        peak_matrix_side: peak_points.max(peak_latent),
        phi_acceptance: if phi_tries == 0 { 0.0 } else { phi_accepts as f64 / phi_tries as f64 },
    })
}

/// Elliptical slice move of the whitened latent values with every process's
/// whitened residual held fixed, so the function values move with the
/// latent. Given the grid values the residuals are tiny, so the Gaussian
/// conditional draw alone barely moves the latent.
fn latent_slice_step(
    samplers: &mut [ProcessSampler],
    basis: &Arc<LatentBasis>,
    latent: &mut LatentState,
    pool: &rayon::ThreadPool,
    rng: &mut ChaCha8Rng,
) -> Result<Arc<LatentBasis>> {
    let total = |s: &[ProcessSampler], w: &[f64]| -> f64 {
        let parts: Vec<f64> = pool.install(|| s.par_iter().map(|p| p.loglik_at_latent(w)).collect());
        parts.iter().sum()
    };
    let current = basis.whitened();
    let cur_ll = total(samplers, &current);
    let out = elliptical_slice(&current, cur_ll, |w| total(samplers, w), rng)?;
    let next = Arc::new(basis.with_whitened(&out.state));
    latent.set_values(next.unwhiten(&out.state));
    pool.install(|| samplers.par_iter_mut().for_each(|s| s.shift_latent(next.clone())));
    Ok(next)
}

/// Log-space random-walk Metropolis step for each latent variance with the
/// whitened latent values and residuals held fixed; the ratio is the prior
/// ratio times the augmented likelihood ratio over all processes.
fn phi_step(
    samplers: &mut [ProcessSampler],
    latent: &mut LatentState,
    basis: &mut Arc<LatentBasis>,
    prior: &LogNormal,
    step: f64,
    pool: &rayon::ThreadPool,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<bool>> {
    let mut accepted = Vec::with_capacity(latent.num_latent());
    for q in 0..latent.num_latent() {
        let z: f64 = rng.sample(StandardNormal);
        let u: f64 = rng.random();
        let current = latent.phis()[q];
        let proposed = current * (step * z).exp();
        if !(proposed > 0.0 && proposed.is_finite()) {
            accepted.push(false);
            continue;
        }
        let mut phis = latent.phis().to_vec();
        phis[q] = proposed;
        let whitened = basis.whitened();
        let zeros = LatentState::zeros(latent.grid().to_vec(), phis.clone())?;
        let candidate = match LatentBasis::new(&zeros) {
            Ok(b) => Arc::new(b.with_whitened(&whitened)),
            Err(Error::Numerical(_)) => {
                accepted.push(false);
                continue;
            }
            Err(e) => return Err(e),
        };
        let proposals: Vec<Option<BasisProposal>> = pool.install(|| {
            samplers
                .par_iter()
                .map(|s| s.basis_proposal(candidate.clone()))
                .collect::<Result<_>>()
        })?;
        let Some(proposals) = proposals.into_iter().collect::<Option<Vec<_>>>() else {
            accepted.push(false);
            continue;
        };
        let new_ll: f64 = proposals.iter().map(|p| p.loglik).sum();
        let cur_ll: f64 = samplers.iter().map(ProcessSampler::log_likelihood).sum();
        let log_ratio = prior.log_density_of_log(proposed.ln()) - prior.log_density_of_log(current.ln()) + new_ll - cur_ll;
        let ok = new_ll.is_finite() && u.ln() < log_ratio;
        if ok {
            for (s, p) in samplers.iter_mut().zip(proposals) {
                s.accept_basis(p);
            }
            *latent = LatentState::new(latent.grid().to_vec(), candidate.unwhiten(&whitened), phis)?;
            *basis = candidate;
        }
        accepted.push(ok);
    }
    Ok(accepted)
}

/// A single draw of one process's function, extended to arbitrary locations
/// by its conditional mean given the draw's function values and latent
/// values.
#[derive(Debug, Clone)]
pub struct FunctionSurface {
    points: Vec<Point>,
    basis: Arc<LatentBasis>,
    kappa: f64,
    theta: f64,
    lambda_star: f64,
    /// `C1^{-1}(g/κ − m1)` at the draw's points.
    alpha: Vec<f64>,
    /// Grid weights for the mean minus the feature part of the correction.
    grid_weights: Vec<f64>,
    /// Diagonal jitter of the draw's factor, added when `x` is a stored point.
    jitter1: f64,
}

impl FunctionSurface {
    pub fn g(&self, x: &[f64]) -> f64 {
        let phis = self.basis.phis();
        let mut v = self.basis.grid_sum(x, self.theta, &self.grid_weights);
        for (p, a) in self.points.iter().zip(&self.alpha) {
            v += a * crate::multioutput::self_cov(x, p, 1.0, self.theta, phis);
            if x == p.as_slice() {
                v += a * self.jitter1;
            }
        }
        self.kappa * v
    }

    pub fn intensity(&self, x: &[f64]) -> f64 {
        self.lambda_star * sigmoid(self.g(x))
    }

    pub fn lambda_star(&self) -> f64 {
        self.lambda_star
    }
}

impl ChainOutput {
    pub fn num_processes(&self) -> usize {
        self.data.len()
    }

    fn sample_basis(&self, sample: &PosteriorSample) -> Result<Arc<LatentBasis>> {
        Ok(Arc::new(match self.model {
            ModelKind::Coupled => {
                let values = sample.latent.iter().map(|v| nalgebra::DVector::from_vec(v.clone())).collect();
                LatentBasis::new(&LatentState::new(self.grid.clone(), values, sample.phis.clone())?)?
            }
            ModelKind::Independent => LatentBasis::uncoupled(sample.phis.clone()),
        }))
    }

    /// Function surfaces of every process for one retained draw.
    pub fn surfaces(&self, sample: &PosteriorSample) -> Result<Vec<FunctionSurface>> {
        let basis = self.sample_basis(sample)?;
        self.data
            .iter()
            .zip(&sample.processes)
            .map(|(ev, pd)| surface(ev, pd, basis.clone(), self.rel_jitter, self.region.dim()))
            .collect()
    }

    /// Intensity of every retained draw at `xs`: `out[s][d][i]`.
    pub fn intensities_at(&self, xs: &[Point]) -> Result<Vec<Vec<Vec<f64>>>> {
        self.samples
            .par_iter()
            .map(|s| {
                let surf = self.surfaces(s)?;
                Ok(surf.iter().map(|f| xs.iter().map(|x| f.intensity(x)).collect()).collect())
            })
            .collect()
    }

    /// Intensities of one process at `xs` for every retained draw.
    pub fn process_intensities_at(&self, d: usize, xs: &[Point]) -> Result<Vec<Vec<f64>>> {
        if d >= self.num_processes() {
            return Err(Error::Parameter(format!("process {d} out of range")));
        }
        self.samples
            .par_iter()
            .map(|s| {
                let basis = self.sample_basis(s)?;
                let f = surface(&self.data[d], &s.processes[d], basis, self.rel_jitter, self.region.dim())?;
                Ok(xs.iter().map(|x| f.intensity(x)).collect())
            })
            .collect()
    }
}

fn surface(ev: &EventSet, pd: &ProcessDraw, basis: Arc<LatentBasis>, rel_jitter: f64, dim: usize) -> Result<FunctionSurface> {
    let mut points = ev.points.clone();
    points.extend(pd.thinned.iter().cloned());
    if points.len() != pd.g.len() {
        return Err(Error::Shape(format!(
            "process {}: {} points but {} function values",
            ev.process_id,
            points.len(),
            pd.g.len()
        )));
    }
    let cache = PointCache::build(basis.clone(), pd.theta, rel_jitter, &points, &pd.g, pd.kappa, dim)?;
    let alpha = cache.factor().solve_upper_transposed(cache.nu());
    let width = basis.feature_len();
    let mut beta = vec![0.0; width];
    for (f, a) in cache.feats().iter().zip(&alpha) {
        for (b, v) in beta.iter_mut().zip(f) {
            *b += a * v;
        }
    }
    let resid: Vec<f64> = basis.whitened().iter().zip(&beta).map(|(u, b)| u - b).collect();
    let grid_weights = basis.dual_weights(&resid);
    Ok(FunctionSurface {
        points,
        basis,
        kappa: pd.kappa,
        theta: pd.theta,
        lambda_star: pd.lambda_star,
        alpha,
        grid_weights,
        jitter1: cache.jitter1(),
    })
}

/// Pointwise mean and standard deviation across draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceStats {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl SurfaceStats {
    fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len() as f64;
        let width = rows.first().map_or(0, Vec::len);
        let mut mean = vec![0.0; width];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut sd = vec![0.0; width];
        for r in rows {
            for ((s, v), m) in sd.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        sd.iter_mut().for_each(|s| *s = s.sqrt());
        SurfaceStats { mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub intensity: Vec<SurfaceStats>,
    pub latent: Vec<SurfaceStats>,
}

/// Posterior mean and standard deviation of every intensity and latent
/// function on `grid`.
pub fn summarize(chain: &ChainOutput, grid: &[Point]) -> Result<Summary> {
    if chain.samples.is_empty() {
        return Err(Error::Precondition("no posterior samples to summarize".into()));
    }
    let per_sample: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)> = chain
        .samples
        .par_iter()
        .map(|s| {
            let surf = chain.surfaces(s)?;
            let intens = surf.iter().map(|f| grid.iter().map(|x| f.intensity(x)).collect()).collect();
            let latent = if chain.model == ModelKind::Coupled {
                let basis = chain.sample_basis(s)?;
                (0..basis.phis().len())
                    .map(|q| grid.iter().map(|x| basis.latent_mean(q, x)).collect())
                    .collect()
            } else {
                Vec::new()
            };
            Ok((intens, latent))
        })
        .collect::<Result<_>>()?;
    let d = chain.num_processes();
    let intensity = (0..d)
        .map(|p| SurfaceStats::from_rows(&per_sample.iter().map(|(i, _)| i[p].clone()).collect::<Vec<_>>()))
        .collect();
    let q = per_sample[0].1.len();
    let latent = (0..q)
        .map(|k| SurfaceStats::from_rows(&per_sample.iter().map(|(_, l)| l[k].clone()).collect::<Vec<_>>()))
        .collect();
    Ok(Summary { intensity, latent })
}

/// Convergence statistics of one scalar trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceDiagnostics {
    pub name: String,
    pub mean: f64,
    pub ess: f64,
    pub psrf: f64,
}

fn autocov(x: &[f64], lag: usize, mean: f64) -> f64 {
    let n = x.len();
    (0..n - lag).map(|i| (x[i] - mean) * (x[i + lag] - mean)).sum::<f64>() / n as f64
}

/// Effective sample size by Geyer's initial positive sequence, capped at the
/// trace length. A constant trace reports the cap.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return n as f64;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let c0 = autocov(x, 0, mean);
    if !(c0 > 0.0) {
        return n as f64;
    }
    let mut tau = -1.0;
    let mut prev = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = (autocov(x, lag, mean) + autocov(x, lag + 1, mean)) / c0;
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        tau += 2.0 * pair;
        prev = pair;
        lag += 2;
    }
    (n as f64 / tau.max(1e-12)).min(n as f64)
}

/// Split-chain potential scale reduction; reported as at least 1.
pub fn split_rhat(x: &[f64]) -> f64 {
    let half = x.len() / 2;
    if half < 2 {
        return 1.0;
    }
    let chains = [&x[..half], &x[x.len() - half..]];
    let n = half as f64;
    let means: Vec<f64> = chains.iter().map(|c| c.iter().sum::<f64>() / n).collect();
    let vars: Vec<f64> = chains
        .iter()
        .zip(&means)
        .map(|(c, m)| c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0))
        .collect();
    let w = (vars[0] + vars[1]) / 2.0;
    if !(w > 0.0) {
        return 1.0;
    }
    let grand = (means[0] + means[1]) / 2.0;
    let b = n * ((means[0] - grand).powi(2) + (means[1] - grand).powi(2));
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt().max(1.0)
}

/// ESS and split-R̂ for `λ*_d` and the mean function value of each process
/// across retained draws.
pub fn diagnostics(samples: &[PosteriorSample]) -> Result<Vec<TraceDiagnostics>> {
    if samples.len() < 2 {
        return Err(Error::Precondition("diagnostics need at least two samples".into()));
    }
    let d = samples[0].processes.len();
    let mut out = Vec::with_capacity(2 * d);
    for p in 0..d {
        let lam: Vec<f64> = samples.iter().map(|s| s.processes[p].lambda_star).collect();
        let mg: Vec<f64> = samples
            .iter()
            .map(|s| {
                let g = &s.processes[p].g;
                if g.is_empty() {
                    0.0
                } else {
                    g.iter().sum::<f64>() / g.len() as f64
                }
            })
            .collect();
        for (name, tr) in [(format!("lambda_star_{p}"), lam), (format!("mean_g_{p}"), mg)] {
            out.push(TraceDiagnostics {
                name,
                mean: tr.iter().sum::<f64>() / tr.len() as f64,
                ess: effective_sample_size(&tr),
                psrf: split_rhat(&tr),
            });
        }
    }
    Ok(out)
}
