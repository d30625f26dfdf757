//! Single-process sigmoidal Gaussian Cox process sampler.
//!
//! The augmented state holds the observed points, a set of thinned points,
//! function values at all of them, the intensity bound `λ*` and the kernel
//! hyperparameters `(κ, θ)`. One sweep runs birth/death over thinned points,
//! location moves, an elliptical slice update of the function values, an HMC
//! update of `(ln κ, ln θ)` and a Gibbs draw of `λ*`.
//!
//! The prior over function values is the conditional Gaussian given the
//! current latent basis ([`LatentBasis`]); an uncoupled basis gives the plain
//! independent model.

pub(crate) mod cache;
mod ess;
mod hmc;
mod prior;

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::cholesky_with_tangent;
use crate::multioutput::{self_cov_dtheta, whiten_rows, LatentBasis, LatentPrecision};
use crate::region::{Point, Region};
use crate::thinning::{
    assign_rate, delete_ratio_from_gap, estimate_total, insert_ratio_from_gap, level_gap, move_ratio_from_gaps, posterior_shape,
    BirthDeathContext, RateLadder,
};
use crate::{sigmoid, softplus, Error, Result};

use cache::{unit_prior_var, PointCache};

pub use ess::{elliptical_slice, ess_transition, EssOutcome};
pub use hmc::{hmc_step, leapfrog, HmcOutcome, HmcTarget, StepSizeAdapter, Trajectory};
pub use prior::{sample_gamma, LogNormal, PriorConfig};

/// Tuning knobs of the per-process transitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSettings {
    /// Probability of proposing an insertion in birth/death.
    pub birth_prob: f64,
    /// Move proposal standard deviation as a fraction of each axis length.
    pub move_scale: f64,
    pub leapfrog_steps: usize,
    pub initial_step_size: f64,
    pub target_accept: f64,
    /// Diagonal jitter relative to the prior variance of `g`.
    pub rel_jitter: f64,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        SamplerSettings {
            birth_prob: 0.5,
            move_scale: 0.1,
            leapfrog_steps: 10,
            initial_step_size: 0.05,
            target_accept: 0.65,
            rel_jitter: crate::gaussian::DEFAULT_REL_JITTER,
        }
    }
}

impl SamplerSettings {
    pub fn validate(&self) -> Result<()> {
        let ok = self.birth_prob > 0.0
            && self.birth_prob < 1.0
            && self.move_scale > 0.0
            && self.move_scale.is_finite()
            && self.initial_step_size > 0.0
            && self.initial_step_size.is_finite()
            && self.target_accept > 0.0
            && self.target_accept < 1.0
            && self.rel_jitter > 0.0
            && self.rel_jitter < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!("invalid sampler settings {self:?}")))
        }
    }
}

/// Starting values for one process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessInit {
    pub lambda_star: f64,
    pub kappa: f64,
    pub theta: f64,
}

impl ProcessInit {
    /// `λ*` twice the empirical rate (so that `σ(0) = ½` matches the data),
    /// but no lower than the prior mean; hyperparameters at prior medians.
    pub fn from_priors(priors: &PriorConfig, num_observed: usize, volume: f64) -> Self {
        ProcessInit {
            lambda_star: (2.0 * num_observed as f64 / volume).max(priors.lambda_alpha / priors.lambda_beta),
            kappa: priors.kappa.median(),
            theta: priors.theta.median(),
        }
    }
}

/// Per-process MCMC state. Points are stored observed first, then thinned.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState {
    points: Vec<Point>,
    num_observed: usize,
    g_values: Vec<f64>,
    rate_idx: Vec<usize>,
    data_rate_idx: Vec<usize>,
    lambda_star: f64,
    kappa: f64,
    theta: f64,
}

impl AugmentedState {
    pub fn observed(&self) -> &[Point] {
        &self.points[..self.num_observed]
    }

    pub fn thinned(&self) -> &[Point] {
        &self.points[self.num_observed..]
    }

    /// Observed then thinned locations.
    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn num_observed(&self) -> usize {
        self.num_observed
    }

    pub fn num_thinned(&self) -> usize {
        self.points.len() - self.num_observed
    }

    /// Function values over observed then thinned points.
    pub fn g_values(&self) -> &[f64] {
        &self.g_values
    }

    pub fn rate_idx(&self) -> &[usize] {
        &self.rate_idx
    }

    pub fn data_rate_idx(&self) -> &[usize] {
        &self.data_rate_idx
    }

    pub fn lambda_star(&self) -> f64 {
        self.lambda_star
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn validate(&self, ladder: &RateLadder) -> Result<()> {
        let (k, m) = (self.num_observed, self.num_thinned());
        if self.g_values.len() != k + m || self.rate_idx.len() != m || self.data_rate_idx.len() != k {
            return Err(Error::Invariant(format!(
                "state lengths disagree: {} points ({k} observed), {} values, {} thinned levels, {} data levels",
                self.points.len(),
                self.g_values.len(),
                self.rate_idx.len(),
                self.data_rate_idx.len()
            )));
        }
        if !(self.lambda_star > 0.0 && self.lambda_star.is_finite()) {
            return Err(Error::Invariant(format!("lambda* = {}", self.lambda_star)));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite() && self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::Invariant(format!(
                "hyperparameters kappa = {}, theta = {}",
                self.kappa, self.theta
            )));
        }
        if let Some(v) = self.g_values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Invariant(format!("non-finite function value {v}")));
        }
        for (m, (&r, g)) in self.rate_idx.iter().zip(&self.g_values[k..]).enumerate() {
            if r >= ladder.len() || level_gap(*g, ladder.level(r)) < 0.0 {
                return Err(Error::Invariant(format!(
                    "thinned point {m}: sigmoid {} above its level {}",
                    sigmoid(*g),
                    ladder.levels().get(r).copied().unwrap_or(f64::NAN)
                )));
            }
        }
        Ok(())
    }
}

/// Counters from the most recent sweep.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SweepStats {
    pub births_proposed: usize,
    pub births_accepted: usize,
    pub deaths_proposed: usize,
    pub deaths_accepted: usize,
    pub moves_proposed: usize,
    pub moves_accepted: usize,
    pub ess_shrinks: usize,
    pub hmc_accept_prob: f64,
    pub hmc_accepted: bool,
}

/// Log-likelihood of the augmented points given function values:
/// `Σ_k ln σ(g_k) + Σ_m ln((l_m − σ(g_m)) / l_m)`; `−∞` if a thinned point
/// exceeds its level.
pub fn augmented_loglik(g: &[f64], num_observed: usize, rate_idx: &[usize], ladder: &RateLadder) -> f64 {
    let data: f64 = g[..num_observed].iter().map(|v| -softplus(-v)).sum();
    let mut thinned = 0.0;
    for (v, &r) in g[num_observed..].iter().zip(rate_idx) {
        let l = ladder.level(r);
        let gap = level_gap(*v, l);
        if !(gap > 0.0) {
            return f64::NEG_INFINITY;
        }
        thinned += gap.ln() - l.ln();
    }
    data + thinned
}

fn loglik_grad(g: &[f64], num_observed: usize, rate_idx: &[usize], ladder: &RateLadder) -> Vec<f64> {
    let mut out: Vec<f64> = g[..num_observed].iter().map(|v| sigmoid(-v)).collect();
    for (v, &r) in g[num_observed..].iter().zip(rate_idx) {
        let l = ladder.level(r);
        if l == 1.0 {
            out.push(-sigmoid(*v));
        } else {
            let s = sigmoid(*v);
            out.push(-s * sigmoid(-v) / (l - s));
        }
    }
    out
}

/// Log posterior of `(ln κ, ln θ)` with the whitened residual `ν` held fixed,
/// so that `g(η) = κ (m1(θ) + L1(θ) ν)`.
struct HyperTarget<'a> {
    points: &'a [Point],
    nu: &'a [f64],
    num_observed: usize,
    rate_idx: &'a [usize],
    ladder: &'a RateLadder,
    basis: &'a LatentBasis,
    priors: &'a PriorConfig,
    jitter_rel: f64,
    dim: usize,
}

impl HyperTarget<'_> {
    fn eval(&self, eta: &[f64]) -> Option<(f64, Vec<f64>, Vec<f64>)> {
        let (lk, lt) = (eta[0], eta[1]);
        let (kappa, theta) = (lk.exp(), lt.exp());
        if !(kappa > 0.0 && kappa.is_finite() && theta > 0.0 && theta.is_finite()) {
            return None;
        }
        let prior = self.priors.kappa.log_density_of_log(lk) + self.priors.theta.log_density_of_log(lt);
        let mut grad = vec![
            self.priors.kappa.grad_log_density_of_log(lk),
            self.priors.theta.grad_log_density_of_log(lt),
        ];
        let n = self.points.len();
        if n == 0 {
            return Some((prior, grad, Vec::new()));
        }
        let phis = self.basis.phis();
        let (feats, dfeats): (Vec<Vec<f64>>, Vec<Vec<f64>>) = self
            .points
            .iter()
            .map(|x| self.basis.features_dtheta(x, 1.0, theta))
            .unzip();
        let origin = vec![0.0; self.dim];
        let (pv, dpv) = self_cov_dtheta(&origin, &origin, 1.0, theta, phis);
        let (jit, djit) = (self.jitter_rel * pv, self.jitter_rel * dpv);
        let mut a = vec![0.0; n * n];
        let mut da = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let (v, dv) = self_cov_dtheta(&self.points[i], &self.points[j], 1.0, theta, phis);
                let (mut ff, mut dff) = (0.0, 0.0);
                for c in 0..feats[i].len() {
                    ff += feats[i][c] * feats[j][c];
                    dff += dfeats[i][c] * feats[j][c] + feats[i][c] * dfeats[j][c];
                }
                let (mut x, mut dx) = (v - ff, dv - dff);
                if i == j {
                    x += jit;
                    dx += djit;
                }
                a[i * n + j] = x;
                a[j * n + i] = x;
                da[i * n + j] = dx;
                da[j * n + i] = dx;
            }
        }
        let (l, dl) = cholesky_with_tangent(&a, &da, n)?;
        let lnu = l.mul_lower(self.nu);
        let mut g = Vec::with_capacity(n);
        let mut dh = Vec::with_capacity(n);
        for i in 0..n {
            let m1 = self.basis.mean_from_features(&feats[i]);
            let dm1 = self.basis.mean_from_features(&dfeats[i]);
            g.push(kappa * (m1 + lnu[i]));
            let dlnu: f64 = (0..=i).map(|j| dl[i * n + j] * self.nu[j]).sum();
            dh.push(dm1 + dlnu);
        }
        let ll = augmented_loglik(&g, self.num_observed, self.rate_idx, self.ladder);
        if !ll.is_finite() {
            return None;
        }
        let dll = loglik_grad(&g, self.num_observed, self.rate_idx, self.ladder);
        grad[0] += dll.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
        grad[1] += theta * kappa * dll.iter().zip(&dh).map(|(a, b)| a * b).sum::<f64>();
        if grad.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some((ll + prior, grad, g))
    }
}

/// A process's cache and function values under a proposed latent basis.
#[derive(Debug, Clone)]
pub(crate) struct BasisProposal {
    cache: PointCache,
    g: Vec<f64>,
    pub loglik: f64,
}

/// Sampler for one process. Owns its state and a Cholesky cache over the
/// current point set that is edited incrementally as points come and go.
#[derive(Debug, Clone)]
pub struct ProcessSampler {
    process_id: usize,
    region: Region,
    ladder: RateLadder,
    priors: PriorConfig,
    settings: SamplerSettings,
    state: AugmentedState,
    cache: PointCache,
    adapter: StepSizeAdapter,
    stats: SweepStats,
    sweeps: u64,
    attempts: BirthDeathAttempts,
}

/// Birth/death attempts per sweep: `M + 1` while adapting, then frozen at
/// one plus the rounded adaptation-phase mean of `M`. A count that tracks the
/// current `M` does not leave the posterior invariant.
#[derive(Debug, Clone, Default)]
struct BirthDeathAttempts {
    sum: f64,
    count: u64,
    frozen: Option<usize>,
}

impl BirthDeathAttempts {
    fn next(&mut self, num_thinned: usize) -> usize {
        match self.frozen {
            Some(n) => n,
            None => {
                self.sum += num_thinned as f64;
                self.count += 1;
                num_thinned + 1
            }
        }
    }

    fn freeze(&mut self, num_thinned: usize) {
        if self.frozen.is_none() {
            let m = if self.count > 0 { self.sum / self.count as f64 } else { num_thinned as f64 };
            self.frozen = Some(m.round() as usize + 1);
        }
    }
}

impl ProcessSampler {
    /// Starts with no thinned points and function values at their conditional
    /// prior mean.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        process_id: usize,
        observed: Vec<Point>,
        region: Region,
        ladder: RateLadder,
        priors: PriorConfig,
        settings: SamplerSettings,
        basis: Arc<LatentBasis>,
        init: ProcessInit,
    ) -> Result<Self> {
        priors.validate()?;
        settings.validate()?;
        for (i, x) in observed.iter().enumerate() {
            if x.len() != region.dim() || !region.contains(x) {
                return Err(Error::Validation(format!(
                    "process {process_id}: event {i} at {x:?} lies outside the region"
                )));
            }
        }
        if !(init.lambda_star > 0.0 && init.kappa > 0.0 && init.theta > 0.0) {
            return Err(Error::Parameter(format!("invalid initial values {init:?}")));
        }
        let k = observed.len();
        let zeros = vec![0.0; k];
        let mut cache = PointCache::build(
            basis,
            init.theta,
            settings.rel_jitter,
            &observed,
            &zeros,
            init.kappa,
            region.dim(),
        )?;
        cache.set_nu(vec![0.0; k]);
        let g_values = cache.values(init.kappa);
        let data_rate_idx = g_values.iter().map(|g| assign_rate(sigmoid(*g), &ladder)).collect();
        let state = AugmentedState {
            points: observed,
            num_observed: k,
            g_values,
            rate_idx: Vec::new(),
            data_rate_idx,
            lambda_star: init.lambda_star,
            kappa: init.kappa,
            theta: init.theta,
        };
        Ok(ProcessSampler {
            process_id,
            region,
            ladder,
            priors,
            adapter: StepSizeAdapter::new(settings.initial_step_size, settings.target_accept),
            settings,
            state,
            cache,
            stats: SweepStats::default(),
            sweeps: 0,
            attempts: BirthDeathAttempts::default(),
        })
    }

    pub fn process_id(&self) -> usize {
        self.process_id
    }

    pub fn state(&self) -> &AugmentedState {
        &self.state
    }

    pub fn ladder(&self) -> &RateLadder {
        &self.ladder
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn stats(&self) -> &SweepStats {
        &self.stats
    }

    /// Completed sweeps.
    pub fn sweeps(&self) -> u64 {
        self.sweeps
    }

    pub fn step_size(&self) -> f64 {
        self.adapter.step()
    }

    pub fn basis(&self) -> &Arc<LatentBasis> {
        self.cache.basis()
    }

    /// Largest point count held so far (the side of the largest matrix this
    /// sampler has factored).
    pub fn peak_points(&self) -> usize {
        self.cache.peak()
    }

    /// Stops step-size adaptation and fixes the birth/death attempt count.
    pub fn end_burn_in(&mut self) {
        self.adapter.freeze();
        self.attempts.freeze(self.state.num_thinned());
    }

    /// Birth/death attempts per sweep once adaptation has ended.
    pub fn frozen_attempts(&self) -> Option<usize> {
        self.attempts.frozen
    }

    pub fn log_likelihood(&self) -> f64 {
        augmented_loglik(
            &self.state.g_values,
            self.state.num_observed,
            &self.state.rate_idx,
            &self.ladder,
        )
    }

    fn bd_context(&self) -> BirthDeathContext {
        BirthDeathContext {
            num_thinned: self.state.num_thinned(),
            lambda_star: self.state.lambda_star,
            volume: self.region.volume(),
            birth_prob: self.settings.birth_prob,
        }
    }

    /// One birth/death proposal. Returns whether the state changed.
    pub fn birth_death_step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<bool> {
        let ctx = self.bd_context();
        if rng.random::<f64>() < self.settings.birth_prob {
            self.stats.births_proposed += 1;
            let x = self.region.sample_uniform(rng);
            let cond = self.cache.conditional(&self.state.points, &x);
            let z: f64 = rng.sample(StandardNormal);
            let g = self.state.kappa * (cond.pred1 + cond.sd1 * z);
            let r = assign_rate(sigmoid(g), &self.ladder);
            let a = insert_ratio_from_gap(&ctx, level_gap(g, self.ladder.level(r)));
            if rng.random::<f64>() < a {
                self.cache.push(cond, z);
                self.state.points.push(x);
                self.state.g_values.push(g);
                self.state.rate_idx.push(r);
                self.stats.births_accepted += 1;
                return Ok(true);
            }
            Ok(false)
        } else {
            let m = self.state.num_thinned();
            if m == 0 {
                return Ok(false);
            }
            self.stats.deaths_proposed += 1;
            let victim = rng.random_range(0..m);
            let idx = self.state.num_observed + victim;
            let gap = level_gap(self.state.g_values[idx], self.ladder.level(self.state.rate_idx[victim]));
            let a = delete_ratio_from_gap(&ctx, gap);
            if rng.random::<f64>() < a {
                self.state.points.remove(idx);
                self.state.g_values.remove(idx);
                self.state.rate_idx.remove(victim);
                self.cache.remove(idx, &self.state.g_values, self.state.kappa);
                self.stats.deaths_accepted += 1;
                return Ok(true);
            }
            Ok(false)
        }
    }

    /// `M + 1` birth/death proposals during adaptation (`M` counted at the
    /// start), a fixed number afterwards.
    pub fn birth_death_sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let n = self.attempts.next(self.state.num_thinned());
        for _ in 0..n {
            self.birth_death_step(rng)?;
        }
        Ok(())
    }

    /// Proposes a Gaussian jitter of every thinned point once. Each point is
    /// taken off the front of the thinned block and re-appended (moved or not)
    /// at the back, so after the sweep the original order is restored up to
    /// the accepted moves.
    pub fn move_step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let k = self.state.num_observed;
        let kappa = self.state.kappa;
        for _ in 0..self.state.num_thinned() {
            self.stats.moves_proposed += 1;
            let x_old = self.state.points.remove(k);
            let g_old = self.state.g_values.remove(k);
            let r_old = self.state.rate_idx.remove(0);
            self.cache.remove(k, &self.state.g_values, kappa);
            let x_new: Point = x_old
                .iter()
                .enumerate()
                .map(|(a, v)| {
                    let z: f64 = rng.sample(StandardNormal);
                    v + self.settings.move_scale * self.region.extent(a) * z
                })
                .collect();
            let mut moved = false;
            if self.region.contains(&x_new) {
                let cond = self.cache.conditional(&self.state.points, &x_new);
                let z: f64 = rng.sample(StandardNormal);
                let g_new = kappa * (cond.pred1 + cond.sd1 * z);
                let r_new = assign_rate(sigmoid(g_new), &self.ladder);
                let a = move_ratio_from_gaps(level_gap(g_old, self.ladder.level(r_old)), level_gap(g_new, self.ladder.level(r_new)));
                if rng.random::<f64>() < a {
                    self.cache.push(cond, z);
                    self.state.points.push(x_new);
                    self.state.g_values.push(g_new);
                    self.state.rate_idx.push(r_new);
                    self.stats.moves_accepted += 1;
                    moved = true;
                }
            }
            if !moved {
                let cond = self.cache.conditional(&self.state.points, &x_old);
                self.cache.push_value(cond, g_old, kappa);
                self.state.points.push(x_old);
                self.state.g_values.push(g_old);
                self.state.rate_idx.push(r_old);
            }
        }
        Ok(())
    }

    /// One elliptical slice transition of all function values.
    pub fn ess_function_update<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        if self.state.points.is_empty() {
            return Ok(());
        }
        let cur = self.log_likelihood();
        let kappa = self.state.kappa;
        let (k, rates, ladder, cache) = (self.state.num_observed, &self.state.rate_idx, &self.ladder, &self.cache);
        let out = elliptical_slice(
            cache.nu(),
            cur,
            |nu| augmented_loglik(&cache.values_for(nu, kappa), k, rates, ladder),
            rng,
        )?;
        self.stats.ess_shrinks += out.shrinks;
        self.cache.set_nu(out.state);
        self.state.g_values = self.cache.values(kappa);
        Ok(())
    }

    /// One HMC transition over `(ln κ, ln θ)` with the whitened function
    /// residual held fixed.
    pub fn hmc_hyper_update<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let target = self.hyper_target();
        let eta = [self.state.kappa.ln(), self.state.theta.ln()];
        let mut f = |q: &[f64]| target.eval(q).map(|(lp, g, _)| (lp, g));
        let out = hmc_step(&eta, self.adapter.step(), self.settings.leapfrog_steps, &mut f, rng);
        let new_g = if out.accepted { target.eval(&out.position).map(|(_, _, g)| g) } else { None };
        self.adapter.update(out.accept_prob);
        self.stats.hmc_accept_prob = out.accept_prob;
        self.stats.hmc_accepted = false;
        if let Some(g) = new_g {
            let (kappa, theta) = (out.position[0].exp(), out.position[1].exp());
            let basis = self.cache.basis().clone();
            let cache = PointCache::build(
                basis,
                theta,
                self.cache.rel_jitter(),
                &self.state.points,
                &g,
                kappa,
                self.region.dim(),
            );
            // A factor that only succeeds with escalated jitter would change
            // the model; treat it as a rejection.
            if let Ok(mut cache) = cache {
                if cache.jitter_scale() == 1.0 {
                    cache.note_peak(self.cache.peak());
                    self.cache = cache;
                    self.state.kappa = kappa;
                    self.state.theta = theta;
                    self.state.g_values = g;
                    self.stats.hmc_accepted = true;
                }
            }
        }
        Ok(())
    }

    fn hyper_target(&self) -> HyperTarget<'_> {
        HyperTarget {
            points: &self.state.points,
            nu: self.cache.nu(),
            num_observed: self.state.num_observed,
            rate_idx: &self.state.rate_idx,
            ladder: &self.ladder,
            basis: self.cache.basis(),
            priors: &self.priors,
            jitter_rel: self.cache.rel_jitter() * self.cache.jitter_scale(),
            dim: self.region.dim(),
        }
    }

    /// Log posterior of `(ln κ, ln θ)` and its gradient, holding the current
    /// whitened residual fixed.
    pub fn hyper_log_target(&self, eta: [f64; 2]) -> Option<(f64, [f64; 2])> {
        self.hyper_target().eval(&eta).map(|(lp, g, _)| (lp, [g[0], g[1]]))
    }

    /// Shape and rate of the Gamma conditional of `λ*`.
    pub fn lambda_star_posterior(&self) -> (f64, f64) {
        let total = if self.ladder.is_single() {
            self.state.points.len() as f64
        } else {
            estimate_total(&self.state.data_rate_idx, &self.state.rate_idx, &self.ladder)
        };
        (
            posterior_shape(self.priors.lambda_alpha, total),
            self.priors.lambda_beta + self.region.volume(),
        )
    }

    pub fn gibbs_lambda_star<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let (shape, rate) = self.lambda_star_posterior();
        self.state.lambda_star = sample_gamma(shape, rate, rng)?;
        Ok(())
    }

    /// Recomputes the notional levels of the observed points.
    pub fn refresh_data_levels(&mut self) {
        let k = self.state.num_observed;
        self.state.data_rate_idx = self.state.g_values[..k]
            .iter()
            .map(|g| assign_rate(sigmoid(*g), &self.ladder))
            .collect();
    }

    /// The full per-process sweep.
    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        self.stats = SweepStats::default();
        self.birth_death_sweep(rng)?;
        self.move_step(rng)?;
        self.ess_function_update(rng)?;
        self.hmc_hyper_update(rng)?;
        self.refresh_data_levels();
        self.gibbs_lambda_star(rng)?;
        self.check_invariants()?;
        self.sweeps += 1;
        Ok(())
    }

    pub fn check_invariants(&self) -> Result<()> {
        self.state.validate(&self.ladder)?;
        if self.cache.len() != self.state.points.len() {
            return Err(Error::Invariant(format!(
                "cache holds {} points, state {}",
                self.cache.len(),
                self.state.points.len()
            )));
        }
        Ok(())
    }

    /// This process's whitened contribution to the latent posterior.
    pub fn latent_contribution(&self) -> LatentPrecision {
        let width = self.cache.basis().feature_len();
        let mut acc = LatentPrecision::zeros(width);
        if width == 0 || self.state.points.is_empty() {
            return acc;
        }
        let w = whiten_rows(self.cache.factor(), self.cache.feats(), width);
        let scaled: Vec<f64> = self.state.g_values.iter().map(|g| g / self.state.kappa).collect();
        let y = self.cache.factor().solve_lower(&scaled);
        acc.add_whitened(&w, &y);
        acc
    }

    /// Augmented log-likelihood if the whitened latent values were
    /// `whitened`, with `κ`, `θ` and the whitened residual `ν` held fixed.
    pub(crate) fn loglik_at_latent(&self, whitened: &[f64]) -> f64 {
        if self.state.points.is_empty() {
            return 0.0;
        }
        let lnu = self.cache.factor().mul_lower(self.cache.nu());
        let kappa = self.state.kappa;
        let g: Vec<f64> = self
            .cache
            .mean1_for(whitened)
            .iter()
            .zip(&lnu)
            .map(|(m, l)| kappa * (m + l))
            .collect();
        augmented_loglik(&g, self.state.num_observed, &self.state.rate_idx, &self.ladder)
    }

    /// Moves to new latent values under the same variances, keeping `ν`.
    pub(crate) fn shift_latent(&mut self, basis: Arc<LatentBasis>) {
        self.cache.shift_latent(basis);
        self.state.g_values = self.cache.values(self.state.kappa);
    }

    /// Cache and function values under a different basis with `ν` held fixed,
    /// or `None` when the factor needs more than the base jitter.
    pub(crate) fn basis_proposal(&self, basis: Arc<LatentBasis>) -> Result<Option<BasisProposal>> {
        let mut cache = match PointCache::build(
            basis,
            self.state.theta,
            self.cache.rel_jitter(),
            &self.state.points,
            &self.state.g_values,
            self.state.kappa,
            self.region.dim(),
        ) {
            Ok(c) if c.jitter_scale() == 1.0 => c,
            Ok(_) | Err(Error::Numerical(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        cache.set_nu(self.cache.nu().to_vec());
        cache.note_peak(self.cache.peak());
        let g = cache.values(self.state.kappa);
        let loglik = augmented_loglik(&g, self.state.num_observed, &self.state.rate_idx, &self.ladder);
        Ok(Some(BasisProposal { cache, g, loglik }))
    }

    pub(crate) fn accept_basis(&mut self, proposal: BasisProposal) {
        self.cache = proposal.cache;
        self.state.g_values = proposal.g;
    }

    /// Switches to a new latent basis, keeping the function values.
    pub fn set_basis(&mut self, basis: Arc<LatentBasis>) -> Result<()> {
        self.cache.set_basis(
            basis,
            &self.state.points,
            &self.state.g_values,
            self.state.kappa,
            self.region.dim(),
        )
    }

    /// Joint draw of function values at `xs` from the conditional given the
    /// current state.
    pub fn draw_function_at<R: Rng + ?Sized>(&self, xs: &[Point], rng: &mut R) -> Result<Vec<f64>> {
        let mut cache = self.cache.clone();
        let mut points = self.state.points.clone();
        let kappa = self.state.kappa;
        let mut out = Vec::with_capacity(xs.len());
        for x in xs {
            let cond = cache.conditional(&points, x);
            let z: f64 = rng.sample(StandardNormal);
            out.push(kappa * (cond.pred1 + cond.sd1 * z));
            cache.push(cond, z);
            points.push(x.clone());
        }
        Ok(out)
    }

    /// Replaces the point set and function values; levels are reassigned.
    pub fn reset_points(
        &mut self,
        observed: Vec<Point>,
        observed_g: Vec<f64>,
        thinned: Vec<Point>,
        thinned_g: Vec<f64>,
    ) -> Result<()> {
        if observed.len() != observed_g.len() || thinned.len() != thinned_g.len() {
            return Err(Error::Shape("points and function values differ in length".into()));
        }
        let k = observed.len();
        let mut points = observed;
        points.extend(thinned);
        let mut g = observed_g;
        g.extend(thinned_g);
        let cache = PointCache::build(
            self.cache.basis().clone(),
            self.state.theta,
            self.cache.rel_jitter(),
            &points,
            &g,
            self.state.kappa,
            self.region.dim(),
        )?;
        self.state.rate_idx = g[k..].iter().map(|v| assign_rate(sigmoid(*v), &self.ladder)).collect();
        self.state.points = points;
        self.state.g_values = g;
        self.state.num_observed = k;
        self.cache = cache;
        self.refresh_data_levels();
        Ok(())
    }

    /// Overrides `λ*` and the hyperparameters; the function values are kept.
    pub fn set_parameters(&mut self, lambda_star: f64, kappa: f64, theta: f64) -> Result<()> {
        if !(lambda_star > 0.0 && kappa > 0.0 && theta > 0.0) {
            return Err(Error::Parameter(format!(
                "parameters must be positive: ({lambda_star}, {kappa}, {theta})"
            )));
        }
        self.state.lambda_star = lambda_star;
        self.state.kappa = kappa;
        self.state.theta = theta;
        self.cache = PointCache::build(
            self.cache.basis().clone(),
            theta,
            self.cache.rel_jitter(),
            &self.state.points,
            &self.state.g_values,
            kappa,
            self.region.dim(),
        )?;
        Ok(())
    }

    /// Prior variance of `g` at a single location under the current
    /// hyperparameters (before conditioning on the latent functions).
    pub fn prior_variance(&self) -> f64 {
        self.state.kappa.powi(2) * unit_prior_var(self.region.dim(), self.state.theta, self.cache.basis().phis())
    }

    /// Largest difference between the cached function values and a factor
    /// rebuilt from scratch; used to check that incremental edits stay exact.
    pub fn cache_drift(&self) -> Result<f64> {
        let fresh = PointCache::build(
            self.cache.basis().clone(),
            self.state.theta,
            self.cache.rel_jitter(),
            &self.state.points,
            &self.state.g_values,
            self.state.kappa,
            self.region.dim(),
        )?;
        let a = self.cache.values(self.state.kappa);
        let b = fresh.values(self.state.kappa);
        let mut drift = a
            .iter()
            .zip(&self.state.g_values)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        drift = b
            .iter()
            .zip(&self.state.g_values)
            .map(|(x, y)| (x - y).abs())
            .fold(drift, f64::max);
        let n = self.cache.len();
        for i in 0..n {
            for j in 0..=i {
                drift = drift.max((self.cache.factor().get(i, j) - fresh.factor().get(i, j)).abs());
            }
        }
        Ok(drift)
    }
}
