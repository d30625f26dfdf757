//! Synthetic ground truth and exact event generation.
//!
//! Ground-truth functions use the same sparse form the model assumes: latent
//! values on a grid are interpolated by their Gaussian-process conditional
//! mean, `E[u_q | u_q(Z)](z) = Σ_j w_{q,j} N(z; z_j, φ_q)` with
//! `w_q = K_q^{-1} u_q(Z)`, and convolving with `κ_d N(·; ·, θ_d)` gives the
//! closed form `g_d(x) = c_d + κ_d Σ_q Σ_j w_{q,j} N(x; z_j, θ_d + φ_q)`.
//! A second family of sums of random bumps lies outside that form.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::gaussian::{gauss_density_unchecked, mvn_sample, CovMatrix, MvnDist};
use crate::multioutput::{inducing_grid, latent_gram, LatentBasis, LatentState};
use crate::region::{EventSet, Point, Region};
use crate::{sigmoid, Error, Result};

/// An intensity `λ(x) = λ* σ(g(x))` that can be evaluated anywhere.
pub trait Intensity: Send + Sync {
    fn lambda_star(&self) -> f64;

    /// The function `g` inside the sigmoid.
    fn link(&self, x: &[f64]) -> f64;

    fn eval(&self, x: &[f64]) -> f64 {
        self.lambda_star() * sigmoid(self.link(x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthProcess {
    pub kappa: f64,
    pub theta: f64,
    pub lambda_star: f64,
    /// Constant added to `g`.
    pub offset: f64,
}

/// Closed-form dependent intensities driven by shared latent functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub grid: Vec<Point>,
    pub phis: Vec<f64>,
    /// `u_q(Z)`.
    pub latent_values: Vec<Vec<f64>>,
    /// `K_q^{-1} u_q(Z)`.
    pub weights: Vec<Vec<f64>>,
    pub processes: Vec<TruthProcess>,
}

/// One process of a [`GroundTruth`].
#[derive(Debug, Clone, Copy)]
pub struct TruthIntensity<'a> {
    truth: &'a GroundTruth,
    process: usize,
}

impl Intensity for TruthIntensity<'_> {
    fn lambda_star(&self) -> f64 {
        self.truth.processes[self.process].lambda_star
    }

    fn link(&self, x: &[f64]) -> f64 {
        self.truth.link(self.process, x)
    }
}

impl GroundTruth {
    /// Builds a truth from latent grid values; the weights are solved here.
    pub fn from_latent(grid: Vec<Point>, phis: Vec<f64>, latent_values: Vec<Vec<f64>>, processes: Vec<TruthProcess>) -> Result<Self> {
        for p in &processes {
            if !(p.kappa >= 0.0 && p.theta > 0.0 && p.lambda_star >= 0.0 && p.offset.is_finite()) {
                return Err(Error::Parameter(format!("invalid truth parameters {p:?}")));
            }
        }
        let values = latent_values.iter().map(|v| DVector::from_vec(v.clone())).collect();
        let state = LatentState::new(grid.clone(), values, phis.clone())?;
        let basis = LatentBasis::new(&state)?;
        let flat = basis.latent_weights();
        let j = grid.len();
        let weights = (0..phis.len()).map(|q| flat[q * j..(q + 1) * j].to_vec()).collect();
        Ok(GroundTruth {
            grid,
            phis,
            latent_values,
            weights,
            processes,
        })
    }

    pub fn num_processes(&self) -> usize {
        self.processes.len()
    }

    pub fn process(&self, d: usize) -> TruthIntensity<'_> {
        TruthIntensity { truth: self, process: d }
    }

    /// `g_d(x)`.
    pub fn link(&self, d: usize, x: &[f64]) -> f64 {
        let p = &self.processes[d];
        let mut total = 0.0;
        for (q, w) in self.weights.iter().enumerate() {
            let v = p.theta + self.phis[q];
            total += self
                .grid
                .iter()
                .zip(w)
                .map(|(z, wj)| wj * gauss_density_unchecked(x, z, v))
                .sum::<f64>();
        }
        p.offset + p.kappa * total
    }

    pub fn intensity(&self, d: usize, x: &[f64]) -> f64 {
        self.process(d).eval(x)
    }

    /// `E[u_q(x) | u_q(Z)]`.
    pub fn latent(&self, q: usize, x: &[f64]) -> f64 {
        self.grid
            .iter()
            .zip(&self.weights[q])
            .map(|(z, w)| w * gauss_density_unchecked(x, z, self.phis[q]))
            .sum()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Validation(format!("cannot encode truth manifest: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Validation(format!("malformed truth manifest: {e}")))
    }
}

/// Ranges from which synthetic truths are drawn (uniformly).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TruthConfig {
    pub num_processes: usize,
    pub num_latent: usize,
    pub grid_per_axis: usize,
    pub grid_margin: f64,
    pub phi: f64,
    pub kappa: [f64; 2],
    pub theta: [f64; 2],
    pub lambda_star: [f64; 2],
    pub offset: [f64; 2],
}

impl Default for TruthConfig {
    fn default() -> Self {
        TruthConfig {
            num_processes: 4,
            num_latent: 1,
            grid_per_axis: 20,
            grid_margin: 0.1,
            phi: 0.01,
            kappa: [0.7, 1.2],
            theta: [0.001, 0.01],
            lambda_star: [50.0, 100.0],
            offset: [0.0, 0.0],
        }
    }
}

impl TruthConfig {
    pub fn validate(&self) -> Result<()> {
        let range_ok = |r: [f64; 2], lo: f64| r[0] >= lo && r[1] >= r[0] && r[1].is_finite();
        if self.num_processes == 0
            || self.num_latent == 0
            || self.grid_per_axis == 0
            || !(self.phi > 0.0)
            || !range_ok(self.kappa, 0.0)
            || !range_ok(self.theta, f64::MIN_POSITIVE)
            || !range_ok(self.lambda_star, 0.0)
            || !(self.offset[1] >= self.offset[0])
        {
            return Err(Error::Parameter(format!("invalid truth configuration {self:?}")));
        }
        Ok(())
    }
}

fn uniform_in<R: Rng + ?Sized>(r: [f64; 2], rng: &mut R) -> f64 {
    r[0] + (r[1] - r[0]) * rng.random::<f64>()
}

/// Draws latent values from their grid prior and per-process parameters from
/// the configured ranges.
pub fn sample_ground_truth<R: Rng + ?Sized>(region: &Region, config: &TruthConfig, rng: &mut R) -> Result<GroundTruth> {
    config.validate()?;
    let grid = inducing_grid(region, config.grid_per_axis, config.grid_margin);
    let j = grid.len();
    let prior = MvnDist::new(DVector::zeros(j), CovMatrix::new(latent_gram(&grid, config.phi))?)?;
    let latent_values = (0..config.num_latent)
        .map(|_| mvn_sample(&prior, rng).map(|v| v.iter().copied().collect()))
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let processes = (0..config.num_processes)
        .map(|_| TruthProcess {
            kappa: uniform_in(config.kappa, rng),
            theta: uniform_in(config.theta, rng),
            lambda_star: uniform_in(config.lambda_star, rng),
            offset: uniform_in(config.offset, rng),
        })
        .collect();
    GroundTruth::from_latent(grid, vec![config.phi; config.num_latent], latent_values, processes)
}

const BOUND_PROBES: usize = 256;

/// Exact draw from the Poisson process with intensity `intensity` by thinning
/// a homogeneous process of rate `lambda_star`. Fails if a probe or a
/// candidate shows the intensity above its bound.
pub fn thin_events<F, R>(intensity: F, lambda_star: f64, process_id: usize, region: &Region, rng: &mut R) -> Result<EventSet>
where
    F: Fn(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    if !(lambda_star >= 0.0 && lambda_star.is_finite()) {
        return Err(Error::Parameter(format!("bound must be finite and nonnegative, got {lambda_star}")));
    }
    let check = |x: &[f64]| -> Result<f64> {
        let v = intensity(x);
        if !(v >= 0.0) || v > lambda_star * (1.0 + 1e-12) {
            return Err(Error::Invariant(format!(
                "intensity {v} at {x:?} violates the bound {lambda_star}"
            )));
        }
        Ok(v)
    };
    for _ in 0..BOUND_PROBES {
        check(&region.sample_uniform(rng))?;
    }
    let mean = lambda_star * region.volume();
    if mean == 0.0 {
        return Ok(EventSet::empty(process_id));
    }
    let count = Poisson::new(mean)
        .map_err(|e| Error::Parameter(format!("Poisson({mean}): {e}")))?
        .sample(rng) as usize;
    let mut points = Vec::new();
    for _ in 0..count {
        let x = region.sample_uniform(rng);
        let keep = check(&x)? / lambda_star;
        if rng.random::<f64>() < keep {
            points.push(x);
        }
    }
    Ok(EventSet::new(process_id, points))
}

/// Fraction of the region where `λ(x) ≤ λ*/2`, measured on cell centres of a
/// `resolution`-per-axis partition.
pub fn low_intensity_fraction(f: &dyn Intensity, region: &Region, resolution: usize) -> f64 {
    let centres = cell_centres(region, resolution);
    let low = centres.iter().filter(|x| sigmoid(f.link(x)) <= 0.5).count();
    low as f64 / centres.len() as f64
}

pub(crate) fn cell_centres(region: &Region, per_axis: usize) -> Vec<Point> {
    let per_axis = per_axis.max(1);
    let half: Vec<f64> = (0..region.dim()).map(|a| 0.5 * region.extent(a) / per_axis as f64).collect();
    let lower: Vec<f64> = region.lower().iter().zip(&half).map(|(l, h)| l + h).collect();
    let upper: Vec<f64> = region.upper().iter().zip(&half).map(|(u, h)| u - h).collect();
    match Region::new(lower, upper) {
        Ok(inner) => inner.lattice(per_axis),
        Err(_) => region.lattice(1),
    }
}

/// One Gaussian bump in `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub centre: Point,
    pub height: f64,
    pub width: f64,
}

/// `g(x) = offset + Σ_i h_i exp(−|x − c_i|² / (2 w_i²))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpsIntensity {
    pub lambda_star: f64,
    pub offset: f64,
    pub bumps: Vec<Bump>,
}

impl Intensity for BumpsIntensity {
    fn lambda_star(&self) -> f64 {
        self.lambda_star
    }

    fn link(&self, x: &[f64]) -> f64 {
        self.offset
            + self
                .bumps
                .iter()
                .map(|b| {
                    let r2: f64 = x.iter().zip(&b.centre).map(|(a, c)| (a - c) * (a - c)).sum();
                    b.height * (-0.5 * r2 / (b.width * b.width)).exp()
                })
                .sum::<f64>()
    }
}

/// A benchmark intensity with its recorded low-intensity fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkFunction<T> {
    pub truth: T,
    pub low_intensity_fraction: f64,
}

/// Resolution used when recording low-intensity fractions.
pub const FRACTION_RESOLUTION: usize = 200;

/// `n` single-process sparse-basis truths with random negative offsets, so
/// that a sizeable part of each sits below half its bound. Each function is
/// drawn from its own seed taken from `rng`, which keeps the bank identical
/// whether it is built serially or in parallel.
pub fn make_benchmark_bank<R: Rng + ?Sized>(n: usize, region: &Region, rng: &mut R) -> Result<Vec<BenchmarkFunction<GroundTruth>>> {
    use rand::SeedableRng;
    if n == 0 {
        return Err(Error::Parameter("bank needs at least one function".into()));
    }
    let config = TruthConfig {
        num_processes: 1,
        grid_per_axis: if region.dim() == 1 { 20 } else { 8 },
        kappa: [1.0, 2.0],
        offset: [-2.5, -0.5],
        ..TruthConfig::default()
    };
    let seeds: Vec<u64> = (0..n).map(|_| rng.random()).collect();
    seeds
        .par_iter()
        .map(|s| {
            let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(*s);
            let truth = sample_ground_truth(region, &config, &mut r)?;
            let low = low_intensity_fraction(&truth.process(0), region, resolution_for(region));
            Ok(BenchmarkFunction {
                truth,
                low_intensity_fraction: low,
            })
        })
        .collect()
}

/// `n` sums of two to five random bumps over a negative offset; not
/// representable on the inducing grid.
pub fn make_mismatched_bank<R: Rng + ?Sized>(n: usize, region: &Region, rng: &mut R) -> Result<Vec<BenchmarkFunction<BumpsIntensity>>> {
    if n == 0 {
        return Err(Error::Parameter("bank needs at least one function".into()));
    }
    let mean_extent = (0..region.dim()).map(|a| region.extent(a)).sum::<f64>() / region.dim() as f64;
    (0..n)
        .map(|_| {
            let k = rng.random_range(2..=5);
            let bumps = (0..k)
                .map(|_| Bump {
                    centre: region.sample_uniform(rng),
                    height: 1.5 + 3.0 * rng.random::<f64>(),
                    width: mean_extent * (0.02 + 0.08 * rng.random::<f64>()),
                })
                .collect();
            let truth = BumpsIntensity {
                lambda_star: 50.0 + 50.0 * rng.random::<f64>(),
                offset: -2.5 + rng.random::<f64>(),
                bumps,
            };
            let low = low_intensity_fraction(&truth, region, resolution_for(region));
            Ok(BenchmarkFunction {
                truth,
                low_intensity_fraction: low,
            })
        })
        .collect()
}

fn resolution_for(region: &Region) -> usize {
    if region.dim() == 1 {
        FRACTION_RESOLUTION
    } else {
        64
    }
}
