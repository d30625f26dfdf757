//! Convolution-process coupling between processes.
//!
//! Latent functions `u_q ~ GP(0, N(z; z', φ_q))` are smoothed by per-process
//! kernels `G_d(x, z) = κ_d N(x; z, θ_d)`, so that
//!
//! ```text
//! K_{g_d,u_q}(x, z)      = κ_d N(x; z, θ_d + φ_q)
//! K_{g_d,g_d'}(x, x')    = Σ_q κ_d κ_d' N(x; x', θ_d + θ_d' + φ_q)
//! ```
//!
//! Given the latent values on a fixed grid `Z`, each `g_d` is Gaussian with
//! mean `K_{g_d,u} K_{u,u}^{-1} u` and a per-process (block-diagonal)
//! residual covariance. Everything here works in whitened latent coordinates
//! `ũ_q = L_q^{-1} u_q`, where `L_q` is the Cholesky factor of `K_{u_q,u_q}`,
//! so no inverse of `K_{u,u}` is ever formed.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::gaussian::{
    gauss_density, gauss_density_dvar, gauss_density_unchecked, symmetrize, CovMatrix, MvnDist,
    DEFAULT_REL_JITTER,
};
use crate::linalg::{factor_jittered, LowerFactor};
use crate::region::{Point, Region};
use crate::sgcp::LogNormal;
use crate::{Error, Result};

/// Per-process convolution kernel scales `κ_d` and variances `θ_d`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingParams {
    kappas: Vec<f64>,
    thetas: Vec<f64>,
}

impl CouplingParams {
    pub fn new(kappas: Vec<f64>, thetas: Vec<f64>) -> Result<Self> {
        if kappas.len() != thetas.len() {
            return Err(Error::Shape(format!(
                "{} kappas but {} thetas",
                kappas.len(),
                thetas.len()
            )));
        }
        if kappas.iter().any(|v| !(*v >= 0.0 && v.is_finite())) || thetas.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Parameter(format!(
                "coupling parameters out of range: kappas {kappas:?}, thetas {thetas:?}"
            )));
        }
        Ok(CouplingParams { kappas, thetas })
    }

    pub fn num_processes(&self) -> usize {
        self.kappas.len()
    }

    pub fn kappa(&self, d: usize) -> f64 {
        self.kappas[d]
    }

    pub fn theta(&self, d: usize) -> f64 {
        self.thetas[d]
    }
}

/// Latent function values on the shared inducing grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    grid: Vec<Point>,
    values: Vec<DVector<f64>>,
    phis: Vec<f64>,
}

impl LatentState {
    pub fn new(grid: Vec<Point>, values: Vec<DVector<f64>>, phis: Vec<f64>) -> Result<Self> {
        if values.len() != phis.len() || phis.is_empty() {
            return Err(Error::Shape(format!(
                "{} value vectors for {} latent functions",
                values.len(),
                phis.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| v.len() != grid.len()) {
            return Err(Error::Shape(format!(
                "latent values of length {} on a grid of {} points",
                v.len(),
                grid.len()
            )));
        }
        if phis.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(Error::Parameter(format!("latent variances must be positive, got {phis:?}")));
        }
        Ok(LatentState { grid, values, phis })
    }

    /// All latent values zero.
    pub fn zeros(grid: Vec<Point>, phis: Vec<f64>) -> Result<Self> {
        let values = vec![DVector::zeros(grid.len()); phis.len()];
        Self::new(grid, values, phis)
    }

    pub fn grid(&self) -> &[Point] {
        &self.grid
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn phis(&self) -> &[f64] {
        &self.phis
    }

    pub fn num_latent(&self) -> usize {
        self.phis.len()
    }

    pub fn grid_len(&self) -> usize {
        self.grid.len()
    }

    /// Stacked `[u_1; …; u_Q]`.
    pub fn stacked(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.values.len() * self.grid.len(),
            self.values.iter().flat_map(|v| v.iter().copied()),
        )
    }

    pub(crate) fn set_values(&mut self, values: Vec<DVector<f64>>) {
        debug_assert!(values.iter().all(|v| v.len() == self.grid.len()));
        self.values = values;
    }

    pub(crate) fn set_phi(&mut self, q: usize, phi: f64) {
        self.phis[q] = phi;
    }
}

/// `J` evenly spaced points per axis over the region widened by `margin`
/// times each extent on both sides.
pub fn inducing_grid(region: &Region, per_axis: usize, margin: f64) -> Vec<Point> {
    region.widened_lattice(per_axis, margin)
}

/// `K_{g_d,u_q}(x, z) = κ N(x; z, θ + φ)`.
pub fn cross_cov(x: &[f64], z: &[f64], kappa: f64, theta: f64, phi: f64) -> Result<f64> {
    if !(theta > 0.0) || !(phi > 0.0) {
        return Err(Error::Parameter(format!(
            "kernel variances must be positive (theta {theta}, phi {phi})"
        )));
    }
    Ok(kappa * gauss_density(x, z, theta + phi)?)
}

/// `K_{g_d,g_d2}(x, x2) = Σ_q κ_d κ_d2 N(x; x2, θ_d + θ_d2 + φ_q)`.
pub fn output_cov(
    x: &[f64],
    x2: &[f64],
    d: usize,
    d2: usize,
    params: &CouplingParams,
    phis: &[f64],
) -> Result<f64> {
    let n = params.num_processes();
    if d >= n || d2 >= n {
        return Err(Error::Parameter(format!("process index out of range ({d}, {d2}) for {n}")));
    }
    let (kd, kd2) = (params.kappa(d), params.kappa(d2));
    let tsum = params.theta(d) + params.theta(d2);
    phis.iter()
        .map(|phi| gauss_density(x, x2, tsum + phi).map(|v| kd * kd2 * v))
        .sum()
}

/// `K_{u_q,u_q}` on the grid.
pub fn latent_gram(grid: &[Point], phi: f64) -> DMatrix<f64> {
    let n = grid.len();
    DMatrix::from_fn(n, n, |i, j| gauss_density_unchecked(&grid[i], &grid[j], phi))
}

/// Same-process output covariance for fixed `(κ, θ)`.
#[inline]
pub(crate) fn self_cov(x: &[f64], y: &[f64], kappa: f64, theta: f64, phis: &[f64]) -> f64 {
    kappa * kappa
        * phis
            .iter()
            .map(|p| gauss_density_unchecked(x, y, 2.0 * theta + p))
            .sum::<f64>()
}

/// `self_cov` and its derivative in `θ`.
#[inline]
pub(crate) fn self_cov_dtheta(x: &[f64], y: &[f64], kappa: f64, theta: f64, phis: &[f64]) -> (f64, f64) {
    let k2 = kappa * kappa;
    phis.iter().fold((0.0, 0.0), |(v, dv), p| {
        let (n, dn) = gauss_density_dvar(x, y, 2.0 * theta + p);
        (v + k2 * n, dv + 2.0 * k2 * dn)
    })
}

/// Whitened factorization of the latent prior, shared by all processes
/// between two latent updates.
#[derive(Debug, Clone)]
pub struct LatentBasis {
    grid: Vec<Point>,
    phis: Vec<f64>,
    factors: Vec<LowerFactor>,
    whitened: Vec<Vec<f64>>,
}

impl LatentBasis {
    pub fn new(latent: &LatentState) -> Result<Self> {
        Self::with_rel_jitter(latent, DEFAULT_REL_JITTER)
    }

    pub fn with_rel_jitter(latent: &LatentState, rel_jitter: f64) -> Result<Self> {
        let j = latent.grid_len();
        let mut factors = Vec::with_capacity(latent.num_latent());
        let mut whitened = Vec::with_capacity(latent.num_latent());
        for (q, phi) in latent.phis.iter().enumerate() {
            let gram = latent_gram(&latent.grid, *phi);
            // nalgebra is column-major; the gram is symmetric so the buffer is
            // also its row-major layout.
            let (f, _) = factor_jittered(gram.as_slice(), j, rel_jitter).ok_or_else(|| {
                Error::Numerical(format!("latent gram for q={q} (phi {phi}) is singular"))
            })?;
            whitened.push(f.solve_lower(latent.values[q].as_slice()));
            factors.push(f);
        }
        Ok(LatentBasis {
            grid: latent.grid.clone(),
            phis: latent.phis.clone(),
            factors,
            whitened,
        })
    }

    /// The same factors carrying new whitened latent values.
    pub(crate) fn with_whitened(&self, stacked: &[f64]) -> LatentBasis {
        let j = self.grid.len();
        LatentBasis {
            whitened: (0..self.factors.len()).map(|q| stacked[q * j..(q + 1) * j].to_vec()).collect(),
            ..self.clone()
        }
    }

    /// Basis for an uncoupled process: no grid, only the variances that enter
    /// the output covariance.
    pub fn uncoupled(phis: Vec<f64>) -> Self {
        LatentBasis {
            grid: Vec::new(),
            factors: Vec::new(),
            whitened: Vec::new(),
            phis,
        }
    }

    pub fn is_coupled(&self) -> bool {
        !self.factors.is_empty()
    }

    pub fn phis(&self) -> &[f64] {
        &self.phis
    }

    pub fn grid(&self) -> &[Point] {
        &self.grid
    }

    /// Length of the feature vector, `QJ` (zero when uncoupled).
    pub fn feature_len(&self) -> usize {
        self.factors.len() * self.grid.len()
    }

    /// `L_q^{-1} k_{u_q}(x)` stacked over `q`.
    pub fn features(&self, x: &[f64], kappa: f64, theta: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.feature_len());
        for (q, f) in self.factors.iter().enumerate() {
            let v = theta + self.phis[q];
            let k: Vec<f64> = self
                .grid
                .iter()
                .map(|z| kappa * gauss_density_unchecked(x, z, v))
                .collect();
            out.extend(f.solve_lower(&k));
        }
        out
    }

    /// Features and their derivative in `θ`.
    pub(crate) fn features_dtheta(&self, x: &[f64], kappa: f64, theta: f64) -> (Vec<f64>, Vec<f64>) {
        let mut out = Vec::with_capacity(self.feature_len());
        let mut dout = Vec::with_capacity(self.feature_len());
        for (q, f) in self.factors.iter().enumerate() {
            let v = theta + self.phis[q];
            let (k, dk): (Vec<f64>, Vec<f64>) = self
                .grid
                .iter()
                .map(|z| {
                    let (n, dn) = gauss_density_dvar(x, z, v);
                    (kappa * n, kappa * dn)
                })
                .unzip();
            out.extend(f.solve_lower(&k));
            dout.extend(f.solve_lower(&dk));
        }
        (out, dout)
    }

    /// Conditional prior mean `features · ũ`.
    pub fn mean_from_features(&self, features: &[f64]) -> f64 {
        features
            .iter()
            .zip(self.whitened.iter().flatten())
            .map(|(a, b)| a * b)
            .sum()
    }

    /// `E[u_q(x) | u_q(Z)] = K_q(x, Z) K_q^{-1} u_q`.
    pub fn latent_mean(&self, q: usize, x: &[f64]) -> f64 {
        let k: Vec<f64> = self
            .grid
            .iter()
            .map(|z| gauss_density_unchecked(x, z, self.phis[q]))
            .collect();
        self.factors[q]
            .solve_lower(&k)
            .iter()
            .zip(&self.whitened[q])
            .map(|(a, b)| a * b)
            .sum()
    }

    /// `L_q^{-T} v_q` for stacked whitened `v`, i.e. weights `w` with
    /// `f(x)·v = Σ_q Σ_j κ N(x; z_j, θ + φ_q) w_{q,j}`.
    pub(crate) fn dual_weights(&self, stacked: &[f64]) -> Vec<f64> {
        let j = self.grid.len();
        self.factors
            .iter()
            .enumerate()
            .flat_map(|(q, f)| f.solve_upper_transposed(&stacked[q * j..(q + 1) * j]))
            .collect()
    }

    /// `K_q^{-1} u_q` stacked over `q`.
    pub fn latent_weights(&self) -> Vec<f64> {
        let flat: Vec<f64> = self.whitened.iter().flatten().copied().collect();
        self.dual_weights(&flat)
    }

    /// Whitened latent values `ũ` stacked over `q`.
    pub(crate) fn whitened(&self) -> Vec<f64> {
        self.whitened.iter().flatten().copied().collect()
    }

    /// `Σ_q Σ_j N(x; z_j, var_offset + φ_q) w_{q,j}`.
    pub(crate) fn grid_sum(&self, x: &[f64], var_offset: f64, weights: &[f64]) -> f64 {
        let j = self.grid.len();
        let mut total = 0.0;
        for q in 0..self.factors.len() {
            let v = var_offset + self.phis[q];
            for (z, w) in self.grid.iter().zip(&weights[q * j..(q + 1) * j]) {
                total += w * gauss_density_unchecked(x, z, v);
            }
        }
        total
    }

    /// Maps stacked whitened values back to `u_q = L_q ũ_q`.
    pub(crate) fn unwhiten(&self, stacked: &[f64]) -> Vec<DVector<f64>> {
        let j = self.grid.len();
        self.factors
            .iter()
            .enumerate()
            .map(|(q, f)| DVector::from_vec(f.mul_lower(&stacked[q * j..(q + 1) * j])))
            .collect()
    }

    fn unwhiten_matrix(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        // blkdiag(L_q) * m
        let j = self.grid.len();
        let mut out = DMatrix::zeros(m.nrows(), m.ncols());
        for (q, f) in self.factors.iter().enumerate() {
            for c in 0..m.ncols() {
                let col: Vec<f64> = (0..j).map(|r| m[(q * j + r, c)]).collect();
                for (r, v) in f.mul_lower(&col).into_iter().enumerate() {
                    out[(q * j + r, c)] = v;
                }
            }
        }
        out
    }
}

/// Conditional distribution of `g_d` at `xs` given the latent values.
pub fn conditional_g_dist(
    d: usize,
    xs: &[Point],
    latent: &LatentState,
    params: &CouplingParams,
) -> Result<MvnDist> {
    if d >= params.num_processes() {
        return Err(Error::Parameter(format!("process index {d} out of range")));
    }
    if xs.is_empty() {
        return Err(Error::Precondition("conditional needs at least one location".into()));
    }
    let basis = LatentBasis::new(latent)?;
    let (kappa, theta) = (params.kappa(d), params.theta(d));
    let feats: Vec<Vec<f64>> = xs.iter().map(|x| basis.features(x, kappa, theta)).collect();
    let mean = DVector::from_iterator(xs.len(), feats.iter().map(|f| basis.mean_from_features(f)));
    let cov = residual_cov(xs, &feats, kappa, theta, latent.phis());
    MvnDist::new(mean, CovMatrix::new(cov)?)
}

fn residual_cov(xs: &[Point], feats: &[Vec<f64>], kappa: f64, theta: f64, phis: &[f64]) -> DMatrix<f64> {
    let n = xs.len();
    let mut cov = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let ff: f64 = feats[i].iter().zip(&feats[j]).map(|(a, b)| a * b).sum();
            let v = self_cov(&xs[i], &xs[j], kappa, theta, phis) - ff;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    cov
}

/// Function values of one process at its locations, the input to the latent
/// posterior.
#[derive(Debug, Clone, Copy)]
pub struct ProcessBlock<'a> {
    pub process: usize,
    pub locations: &'a [Point],
    pub values: &'a [f64],
}

/// Accumulated whitened precision `Σ_d W_dᵀ W_d` and shift `Σ_d W_dᵀ y_d`,
/// where `W_d = L_d^{-1} F_d`, `y_d = L_d^{-1} (g_d)` and `L_d` factors the
/// residual block of process `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPrecision {
    info: DMatrix<f64>,
    shift: DVector<f64>,
}

impl LatentPrecision {
    pub fn zeros(len: usize) -> Self {
        LatentPrecision {
            info: DMatrix::zeros(len, len),
            shift: DVector::zeros(len),
        }
    }

    pub fn len(&self) -> usize {
        self.shift.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shift.is_empty()
    }

    /// Adds one process given its whitened features `w` (rows = points) and
    /// whitened values `y`.
    pub(crate) fn add_whitened(&mut self, w: &[Vec<f64>], y: &[f64]) {
        let m = self.len();
        for (row, yi) in w.iter().zip(y) {
            for a in 0..m {
                let ra = row[a];
                if ra == 0.0 {
                    continue;
                }
                self.shift[a] += ra * yi;
                for b in 0..=a {
                    self.info[(a, b)] += ra * row[b];
                }
            }
        }
    }

    pub fn merge(&mut self, other: &LatentPrecision) {
        self.info += &other.info;
        self.shift += &other.shift;
    }

    fn precision(&self) -> DMatrix<f64> {
        let m = self.len();
        let mut p = DMatrix::identity(m, m);
        for a in 0..m {
            for b in 0..=a {
                p[(a, b)] += self.info[(a, b)];
                p[(b, a)] = p[(a, b)];
            }
        }
        p
    }

    /// Whitened posterior: mean and factor of the precision `I + info`.
    fn whitened_posterior(&self) -> Result<(DVector<f64>, LowerFactor)> {
        let m = self.len();
        let p = self.precision();
        let (f, _) = factor_jittered(p.as_slice(), m, 0.0)
            .ok_or_else(|| Error::Numerical("latent posterior precision is not positive definite".into()))?;
        let mean = f.solve_upper_transposed(&f.solve_lower(self.shift.as_slice()));
        Ok((DVector::from_vec(mean), f))
    }

    /// Draws latent values from the posterior.
    pub fn sample<R: Rng + ?Sized>(&self, basis: &LatentBasis, rng: &mut R) -> Result<Vec<DVector<f64>>> {
        let (mean, f) = self.whitened_posterior()?;
        let z: Vec<f64> = (0..self.len()).map(|_| rng.sample(StandardNormal)).collect();
        // P = R Rᵀ, so R^{-T} z has covariance P^{-1}.
        let noise = f.solve_upper_transposed(&z);
        let draw: Vec<f64> = mean.iter().zip(&noise).map(|(a, b)| a + b).collect();
        Ok(basis.unwhiten(&draw))
    }

    /// Posterior over stacked `u` in the original coordinates.
    pub fn distribution(&self, basis: &LatentBasis) -> Result<MvnDist> {
        let m = self.len();
        let (mean_w, f) = self.whitened_posterior()?;
        let mut cov_w = DMatrix::zeros(m, m);
        for c in 0..m {
            let mut e = vec![0.0; m];
            e[c] = 1.0;
            let col = f.solve_upper_transposed(&f.solve_lower(&e));
            for (r, v) in col.into_iter().enumerate() {
                cov_w[(r, c)] = v;
            }
        }
        let mean = basis.unwhiten(mean_w.as_slice());
        let mean = DVector::from_iterator(m, mean.iter().flat_map(|v| v.iter().copied()));
        let half = basis.unwhiten_matrix(&cov_w);
        let mut cov = basis.unwhiten_matrix(&half.transpose());
        symmetrize(&mut cov);
        MvnDist::new(mean, CovMatrix::new(cov)?)
    }
}

/// Posterior over the stacked latent values given every process's function
/// values, under the block-diagonal (per-process) residual structure.
pub fn latent_posterior(
    blocks: &[ProcessBlock<'_>],
    latent: &LatentState,
    params: &CouplingParams,
) -> Result<MvnDist> {
    latent_posterior_with_jitter(blocks, latent, params, DEFAULT_REL_JITTER)
}

/// [`latent_posterior`] with an explicit relative jitter for every
/// factorization; zero factors exactly where possible.
pub fn latent_posterior_with_jitter(
    blocks: &[ProcessBlock<'_>],
    latent: &LatentState,
    params: &CouplingParams,
    rel_jitter: f64,
) -> Result<MvnDist> {
    let basis = LatentBasis::with_rel_jitter(latent, rel_jitter)?;
    let acc = accumulate_dense(blocks, &basis, params, rel_jitter)?;
    acc.distribution(&basis)
}

fn accumulate_dense(
    blocks: &[ProcessBlock<'_>],
    basis: &LatentBasis,
    params: &CouplingParams,
    rel_jitter: f64,
) -> Result<LatentPrecision> {
    let mut acc = LatentPrecision::zeros(basis.feature_len());
    for b in blocks {
        if b.locations.len() != b.values.len() {
            return Err(Error::Shape(format!(
                "process {}: {} locations but {} values",
                b.process,
                b.locations.len(),
                b.values.len()
            )));
        }
        if b.process >= params.num_processes() {
            return Err(Error::Parameter(format!("process index {} out of range", b.process)));
        }
        let n = b.locations.len();
        if n == 0 {
            continue;
        }
        let (kappa, theta) = (params.kappa(b.process), params.theta(b.process));
        // An uncoupled process carries no information about the latents.
        if kappa == 0.0 {
            continue;
        }
        let feats: Vec<Vec<f64>> = b.locations.iter().map(|x| basis.features(x, kappa, theta)).collect();
        let resid = residual_cov(b.locations, &feats, kappa, theta, basis.phis());
        let (f, _) = factor_jittered(resid.as_slice(), n, rel_jitter).ok_or_else(|| {
            Error::Numerical(format!("residual block of process {} is singular", b.process))
        })?;
        let w = whiten_rows(&f, &feats, basis.feature_len());
        let y = f.solve_lower(b.values);
        acc.add_whitened(&w, &y);
    }
    Ok(acc)
}

/// Rows of `L^{-1} F` for row-stacked features `F`.
pub(crate) fn whiten_rows(f: &LowerFactor, feats: &[Vec<f64>], width: usize) -> Vec<Vec<f64>> {
    let n = feats.len();
    let mut w = vec![vec![0.0; width]; n];
    for c in 0..width {
        let col: Vec<f64> = feats.iter().map(|r| r[c]).collect();
        for (r, v) in f.solve_lower(&col).into_iter().enumerate() {
            w[r][c] = v;
        }
    }
    w
}

/// Log conditional target for `φ_q` in log space:
/// `log N(u_q | 0, K_q(φ)) + log prior(log φ)`.
pub fn phi_log_target(values: &DVector<f64>, grid: &[Point], phi: f64, prior: &LogNormal) -> Result<f64> {
    let cov = CovMatrix::new(latent_gram(grid, phi))?;
    let dist = MvnDist::new(DVector::zeros(grid.len()), cov)?;
    Ok(crate::gaussian::mvn_logpdf(values, &dist)? + prior.log_density_of_log(phi.ln()))
}

/// Metropolis ratio for moving `φ_q` to `proposed` under a symmetric log-space
/// proposal.
pub fn phi_accept_ratio(latent: &LatentState, q: usize, proposed: f64, prior: &LogNormal) -> Result<f64> {
    let cur = phi_log_target(&latent.values[q], &latent.grid, latent.phis[q], prior)?;
    let new = phi_log_target(&latent.values[q], &latent.grid, proposed, prior)?;
    Ok((new - cur).exp())
}

/// Outcome of one sweep of `φ` updates.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiUpdate {
    pub latent: LatentState,
    pub accepted: Vec<bool>,
}

/// One log-space random-walk Metropolis step per latent variance.
pub fn phi_mh_update<R: Rng + ?Sized>(
    latent: &LatentState,
    prior: &LogNormal,
    step: f64,
    rng: &mut R,
) -> Result<PhiUpdate> {
    let mut next = latent.clone();
    let mut accepted = Vec::with_capacity(latent.num_latent());
    for q in 0..latent.num_latent() {
        let z: f64 = rng.sample(StandardNormal);
        let proposed = latent.phis[q] * (step * z).exp();
        let u: f64 = rng.random();
        let ok = proposed.is_finite()
            && proposed > 0.0
            && match phi_accept_ratio(&next, q, proposed, prior) {
                Ok(r) if r.is_finite() || r == f64::INFINITY => u < r,
                _ => false,
            };
        if ok {
            next.set_phi(q, proposed);
        }
        accepted.push(ok);
    }
    Ok(PhiUpdate {
        latent: next,
        accepted,
    })
}
