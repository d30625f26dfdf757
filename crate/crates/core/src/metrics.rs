//! Likelihood scores, intensity error and the kernel density baseline.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::ChainOutput;
use crate::region::{EventSet, Point, Region};
use crate::{Error, Result};

/// Default nodes per axis in one dimension.
pub const DEFAULT_RESOLUTION_1D: usize = 512;
/// Default nodes per axis in two or more dimensions.
pub const DEFAULT_RESOLUTION_ND: usize = 64;

/// Tensor-product trapezoid rule over a box.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    points: Vec<Point>,
    weights: Vec<f64>,
    per_axis: usize,
}

impl Quadrature {
    pub fn new(region: &Region, per_axis: usize) -> Result<Self> {
        if per_axis < 2 {
            return Err(Error::Parameter(format!("quadrature needs at least 2 nodes per axis, got {per_axis}")));
        }
        let axis_weights: Vec<Vec<f64>> = (0..region.dim())
            .map(|a| {
                let h = region.extent(a) / (per_axis - 1) as f64;
                (0..per_axis)
                    .map(|i| if i == 0 || i == per_axis - 1 { 0.5 * h } else { h })
                    .collect()
            })
            .collect();
        let points = region.lattice(per_axis);
        // `Region::lattice` enumerates with the last axis fastest.
        let weights = (0..points.len())
            .map(|mut idx| {
                let mut w = 1.0;
                for aw in axis_weights.iter().rev() {
                    w *= aw[idx % per_axis];
                    idx /= per_axis;
                }
                w
            })
            .collect();
        Ok(Quadrature {
            points,
            weights,
            per_axis,
        })
    }

    /// 512 nodes in one dimension, 64 per axis otherwise.
    pub fn default_for(region: &Region) -> Self {
        let n = if region.dim() == 1 {
            DEFAULT_RESOLUTION_1D
        } else {
            DEFAULT_RESOLUTION_ND
        };
        Quadrature::new(region, n).expect("default resolution is valid")
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn per_axis(&self) -> usize {
        self.per_axis
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, values: &[f64]) -> Result<f64> {
        self.check(values.len())?;
        Ok(self.weights.iter().zip(values).map(|(w, v)| w * v).sum())
    }

    fn check(&self, n: usize) -> Result<()> {
        if n != self.len() {
            return Err(Error::Shape(format!("{n} grid values for {} quadrature nodes", self.len())));
        }
        Ok(())
    }
}

/// `−∫λ + Σ_k ln λ(x_k)` with the integral taken by quadrature. Returns `−∞`
/// when the intensity vanishes at an event.
pub fn poisson_loglik(at_events: &[f64], on_grid: &[f64], quad: &Quadrature) -> Result<f64> {
    if on_grid.iter().chain(at_events).any(|v| !(*v >= 0.0)) {
        return Err(Error::Precondition("intensity must be nonnegative".into()));
    }
    let integral = quad.integrate(on_grid)?;
    if at_events.iter().any(|v| *v == 0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(at_events.iter().map(|v| v.ln()).sum::<f64>() - integral)
}

/// [`poisson_loglik`] for an intensity given as a function.
pub fn poisson_loglik_of<F: Fn(&[f64]) -> f64>(events: &EventSet, f: F, quad: &Quadrature) -> Result<f64> {
    let at: Vec<f64> = events.points.iter().map(|x| f(x)).collect();
    let grid: Vec<f64> = quad.points().iter().map(|x| f(x)).collect();
    poisson_loglik(&at, &grid, quad)
}

/// `ln((1/S) Σ_s exp(ℓ_s))`, shifted by the maximum.
pub fn log_mean_exp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Precondition("need at least one value".into()));
    }
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return Ok(m);
    }
    let s: f64 = values.iter().map(|v| (v - m).exp()).sum();
    Ok(m + (s / values.len() as f64).ln())
}

/// Held-out scores over posterior draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveScore {
    /// Log of the average likelihood (the headline score).
    pub log_mean_lik: f64,
    /// Average of the log-likelihoods.
    pub mean_log_lik: f64,
}

impl PredictiveScore {
    pub fn from_logliks(logliks: &[f64]) -> Result<Self> {
        Ok(PredictiveScore {
            log_mean_lik: log_mean_exp(logliks)?,
            mean_log_lik: logliks.iter().sum::<f64>() / logliks.len() as f64,
        })
    }
}

/// Scores `test` under every retained draw of process `d`, each draw's
/// intensity multiplied by `scale` (the test-to-training size ratio when
/// both come from one random split).
pub fn predictive_loglik(chain: &ChainOutput, d: usize, test: &EventSet, quad: &Quadrature, scale: f64) -> Result<PredictiveScore> {
    if chain.samples.is_empty() {
        return Err(Error::Precondition("chain holds no samples".into()));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Parameter(format!("intensity scale must be positive, got {scale}")));
    }
    let mut xs: Vec<Point> = test.points.clone();
    xs.extend(quad.points().iter().cloned());
    let k = test.len();
    let values = chain.process_intensities_at(d, &xs)?;
    let logliks = values
        .par_iter()
        .map(|v| {
            let v: Vec<f64> = v.iter().map(|l| l * scale).collect();
            poisson_loglik(&v[..k], &v[k..], quad)
        })
        .collect::<Result<Vec<f64>>>()?;
    PredictiveScore::from_logliks(&logliks)
}

/// `√(Σ_i w_i (λ̂_i − λ_i)²)`.
pub fn l2_error(estimate: &[f64], truth: &[f64], quad: &Quadrature) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::Shape(format!(
            "estimate has {} values, truth {}",
            estimate.len(),
            truth.len()
        )));
    }
    let sq: Vec<f64> = estimate.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).collect();
    Ok(quad.integrate(&sq)?.sqrt())
}

/// Gaussian product-kernel estimate scaled to integrate to the event count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kde {
    pub points: Vec<Point>,
    pub bandwidths: Vec<f64>,
}

impl Kde {
    /// Diffusion fixed-point bandwidth in one dimension, per-axis plug-in
    /// bandwidths otherwise.
    pub fn fit(train: &EventSet, region: &Region) -> Result<Self> {
        if train.len() < 2 {
            return Err(Error::Precondition(format!(
                "kernel density estimate needs at least 2 events, got {}",
                train.len()
            )));
        }
        train.validate(region)?;
        let dim = region.dim();
        let bandwidths = (0..dim)
            .map(|a| {
                let xs: Vec<f64> = train.points.iter().map(|p| p[a]).collect();
                let h = if dim == 1 {
                    diffusion_bandwidth(&xs).unwrap_or_else(|| plug_in_bandwidth(&xs, dim))
                } else {
                    plug_in_bandwidth(&xs, dim)
                };
                // Degenerate samples (all coincident) fall back to a grid-cell scale.
                if h > 0.0 && h.is_finite() {
                    h
                } else {
                    region.extent(a) / 100.0
                }
            })
            .collect();
        Ok(Kde {
            points: train.points.clone(),
            bandwidths,
        })
    }

    pub fn with_bandwidths(points: Vec<Point>, bandwidths: Vec<f64>) -> Result<Self> {
        if bandwidths.iter().any(|h| !(*h > 0.0)) || points.iter().any(|p| p.len() != bandwidths.len()) {
            return Err(Error::Parameter("bandwidths must be positive, one per axis".into()));
        }
        Ok(Kde { points, bandwidths })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let norm: f64 = self
            .bandwidths
            .iter()
            .map(|h| 1.0 / (h * (2.0 * std::f64::consts::PI).sqrt()))
            .product();
        self.points
            .iter()
            .map(|p| {
                let e: f64 = p
                    .iter()
                    .zip(x)
                    .zip(&self.bandwidths)
                    .map(|((a, b), h)| {
                        let u = (a - b) / h;
                        u * u
                    })
                    .sum();
                (-0.5 * e).exp()
            })
            .sum::<f64>()
            * norm
    }
}

/// Kernel density intensity of `train` at the quadrature nodes.
pub fn kde_intensity(train: &EventSet, region: &Region, quad: &Quadrature) -> Result<Vec<f64>> {
    let kde = Kde::fit(train, region)?;
    Ok(quad.points().par_iter().map(|x| kde.eval(x)).collect())
}

fn sample_sd(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Normal-reference rule `h = min(sd, IQR/1.349) · (4/(d+2))^{1/(d+4)} · n^{-1/(d+4)}`.
pub fn plug_in_bandwidth(xs: &[f64], dim: usize) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let iqr = (quantile(&sorted, 0.75) - quantile(&sorted, 0.25)) / 1.349;
    let sd = sample_sd(xs);
    let spread = if iqr > 0.0 { sd.min(iqr) } else { sd };
    let d = dim as f64;
    spread * (4.0 / (d + 2.0)).powf(1.0 / (d + 4.0)) * (xs.len() as f64).powf(-1.0 / (d + 4.0))
}

const DIFFUSION_BINS: usize = 1 << 12;

/// Improved Sheather–Jones bandwidth by the diffusion fixed-point iteration.
/// `None` when the fixed-point equation has no root on its search range.
pub fn diffusion_bandwidth(xs: &[f64]) -> Option<f64> {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if !(range > 0.0) {
        return None;
    }
    let (min, max) = (lo - range / 2.0, hi + range / 2.0);
    let r = max - min;
    let n = DIFFUSION_BINS;
    let mut hist = vec![0.0; n];
    for x in xs {
        let b = (((x - min) / r) * (n - 1) as f64).round() as usize;
        hist[b.min(n - 1)] += 1.0;
    }
    let total: f64 = hist.iter().sum();
    hist.iter_mut().for_each(|h| *h /= total);
    let mut distinct = xs.to_vec();
    distinct.sort_by(|a, b| a.total_cmp(b));
    distinct.dedup();
    let count = distinct.len() as f64;

    // Type-II cosine transform coefficients a_k, k ≥ 1, via a cosine table.
    let table: Vec<f64> = (0..4 * n)
        .map(|m| (std::f64::consts::PI * m as f64 / (2 * n) as f64).cos())
        .collect();
    let a2: Vec<f64> = (1..n)
        .into_par_iter()
        .map(|k| {
            let mut s = 0.0;
            for (j, h) in hist.iter().enumerate() {
                if *h != 0.0 {
                    s += h * table[(k * (2 * j + 1)) % (4 * n)];
                }
            }
            let a = 2.0 * s;
            (a / 2.0) * (a / 2.0)
        })
        .collect();
    let i_sq: Vec<f64> = (1..n).map(|k| (k * k) as f64).collect();

    let fixed_point = |t: f64| -> f64 {
        let pi2 = std::f64::consts::PI.powi(2);
        let functional = |s: i32, time: f64| -> f64 {
            2.0 * std::f64::consts::PI.powi(2 * s)
                * i_sq
                    .iter()
                    .zip(&a2)
                    .map(|(i, a)| i.powi(s) * a * (-i * pi2 * time).exp())
                    .sum::<f64>()
        };
        let l = 7;
        let mut f = functional(l, t);
        for s in (2..l).rev() {
            let k0 = (1..=s).map(|m| (2 * m - 1) as f64).product::<f64>() / (2.0 * std::f64::consts::PI).sqrt();
            let c = (1.0 + 0.5f64.powf(s as f64 + 0.5)) / 3.0;
            let time = (2.0 * c * k0 / count / f).powf(2.0 / (3.0 + 2.0 * s as f64));
            f = functional(s, time);
        }
        t - (2.0 * count * std::f64::consts::PI.sqrt() * f).powf(-0.4)
    };

    let mut upper = 0.1;
    let mut found = None;
    while upper <= 1.0 {
        if fixed_point(upper) > 0.0 {
            found = Some(upper);
            break;
        }
        upper += 0.1;
    }
    let mut hi_t = found?;
    let mut lo_t = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo_t + hi_t);
        if fixed_point(mid) > 0.0 {
            hi_t = mid;
        } else {
            lo_t = mid;
        }
        if hi_t - lo_t < 1e-14 {
            break;
        }
    }
    let t = 0.5 * (lo_t + hi_t);
    if !(t > 0.0) || !t.is_finite() {
        return None;
    }
    Some(t.sqrt() * r)
}
