//! Cholesky cache over a process's current point set.
//!
//! All quantities are stored at unit kernel scale: with `C1` the residual
//! covariance for `κ = 1`, the actual covariance is `κ² C1` and the actual
//! conditional mean is `κ m1`. The whitened residual `ν = L1^{-1}(g/κ − m1)`
//! is the coordinate that elliptical slice sampling and the hyperparameter
//! updates hold fixed.

use std::sync::Arc;

use crate::linalg::LowerFactor;
use crate::multioutput::{self_cov, LatentBasis};
use crate::region::Point;
use crate::{Error, Result};

/// Prior variance of `g/κ` at any location.
pub(crate) fn unit_prior_var(dim: usize, theta: f64, phis: &[f64]) -> f64 {
    let origin = vec![0.0; dim];
    self_cov(&origin, &origin, 1.0, theta, phis)
}

/// Conditional law of `g/κ` at a new site given the cached points.
#[derive(Debug, Clone)]
pub(crate) struct SiteConditional {
    pub feat: Vec<f64>,
    pub mean1: f64,
    /// `L1^{-1} c1`, the new factor row.
    pub row: Vec<f64>,
    /// Conditional standard deviation (the new factor diagonal).
    pub sd1: f64,
    /// Conditional mean of `g/κ`.
    pub pred1: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct PointCache {
    basis: Arc<LatentBasis>,
    theta: f64,
    feats: Vec<Vec<f64>>,
    mean1: Vec<f64>,
    factor: LowerFactor,
    nu: Vec<f64>,
    prior_var1: f64,
    jitter1: f64,
    jitter_scale: f64,
    peak: usize,
}

impl PointCache {
    pub fn build(
        basis: Arc<LatentBasis>,
        theta: f64,
        rel_jitter: f64,
        points: &[Point],
        g: &[f64],
        kappa: f64,
        dim: usize,
    ) -> Result<Self> {
        let prior_var1 = unit_prior_var(dim, theta, basis.phis());
        let feats: Vec<Vec<f64>> = points.iter().map(|x| basis.features(x, 1.0, theta)).collect();
        let mean1 = feats.iter().map(|f| basis.mean_from_features(f)).collect();
        let mut cache = PointCache {
            basis,
            theta,
            feats,
            mean1,
            factor: LowerFactor::with_capacity(points.len()),
            nu: Vec::new(),
            prior_var1,
            jitter1: rel_jitter * prior_var1,
            jitter_scale: 1.0,
            peak: points.len(),
        };
        cache.refactor(points)?;
        cache.rewhiten(g, kappa);
        Ok(cache)
    }

    /// Rebuilds the factor from scratch, escalating the jitter if needed.
    pub fn refactor(&mut self, points: &[Point]) -> Result<()> {
        let n = points.len();
        let a = self.unit_matrix(points);
        for k in 0..=4 {
            let scale = f64::from(1u32 << k);
            if let Some(f) = LowerFactor::factor(&a, n, self.jitter1 * scale) {
                self.factor = f;
                self.jitter_scale = scale;
                return Ok(());
            }
        }
        Err(Error::Numerical(format!(
            "process covariance over {n} points is not positive definite after jitter"
        )))
    }

    /// Dense unit-scale residual covariance (row-major, no jitter).
    pub fn unit_matrix(&self, points: &[Point]) -> Vec<f64> {
        let n = points.len();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = self.unit_cov(&points[i], &self.feats[i], &points[j], &self.feats[j]);
                a[i * n + j] = v;
                a[j * n + i] = v;
            }
        }
        a
    }

    #[inline]
    fn unit_cov(&self, x: &[f64], fx: &[f64], y: &[f64], fy: &[f64]) -> f64 {
        let ff: f64 = fx.iter().zip(fy).map(|(a, b)| a * b).sum();
        self_cov(x, y, 1.0, self.theta, self.basis.phis()) - ff
    }

    pub fn rewhiten(&mut self, g: &[f64], kappa: f64) {
        let r: Vec<f64> = g.iter().zip(&self.mean1).map(|(g, m)| g / kappa - m).collect();
        self.nu = self.factor.solve_lower(&r);
    }

    pub fn len(&self) -> usize {
        self.factor.len()
    }

    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    pub fn set_nu(&mut self, nu: Vec<f64>) {
        debug_assert_eq!(nu.len(), self.len());
        self.nu = nu;
    }

    pub fn feats(&self) -> &[Vec<f64>] {
        &self.feats
    }

    pub fn basis(&self) -> &Arc<LatentBasis> {
        &self.basis
    }

    pub fn jitter1(&self) -> f64 {
        self.jitter1 * self.jitter_scale
    }

    pub fn jitter_scale(&self) -> f64 {
        self.jitter_scale
    }

    pub fn rel_jitter(&self) -> f64 {
        self.jitter1 / self.prior_var1
    }

    pub fn factor(&self) -> &LowerFactor {
        &self.factor
    }

    /// Largest point count this cache has factored.
    pub fn peak(&self) -> usize {
        self.peak
    }

    pub fn note_peak(&mut self, other: usize) {
        self.peak = self.peak.max(other);
    }

    /// Function values implied by the cache: `κ (m1 + L1 ν)`.
    pub fn values(&self, kappa: f64) -> Vec<f64> {
        self.values_for(&self.nu, kappa)
    }

    pub fn values_for(&self, nu: &[f64], kappa: f64) -> Vec<f64> {
        self.factor
            .mul_lower(nu)
            .iter()
            .zip(&self.mean1)
            .map(|(l, m)| kappa * (m + l))
            .collect()
    }

    /// Conditional of `g/κ` at `x` given every cached point.
    pub fn conditional(&self, points: &[Point], x: &[f64]) -> SiteConditional {
        let feat = self.basis.features(x, 1.0, self.theta);
        let mean1 = self.basis.mean_from_features(&feat);
        let c: Vec<f64> = points
            .iter()
            .zip(&self.feats)
            .map(|(p, f)| self.unit_cov(x, &feat, p, f))
            .collect();
        let row = self.factor.solve_lower(&c);
        let ff: f64 = feat.iter().map(|a| a * a).sum();
        let c0 = self.prior_var1 - ff + self.jitter1();
        let rr: f64 = row.iter().map(|a| a * a).sum();
        let sd1 = (c0 - rr).max(self.jitter1()).sqrt();
        let pred1 = mean1 + row.iter().zip(&self.nu).map(|(a, b)| a * b).sum::<f64>();
        SiteConditional {
            feat,
            mean1,
            row,
            sd1,
            pred1,
        }
    }

    /// Appends a point with whitened innovation `z`; its value is
    /// `κ (pred1 + sd1 z)`.
    pub fn push(&mut self, cond: SiteConditional, z: f64) {
        self.factor.append(&cond.row, cond.sd1);
        self.feats.push(cond.feat);
        self.mean1.push(cond.mean1);
        self.nu.push(z);
        self.peak = self.peak.max(self.factor.len());
    }

    /// Appends a point whose value `g` is already known.
    pub fn push_value(&mut self, cond: SiteConditional, g: f64, kappa: f64) {
        let z = (g / kappa - cond.pred1) / cond.sd1;
        self.push(cond, z);
    }

    /// Drops point `k`; `g` holds the values of the remaining points.
    pub fn remove(&mut self, k: usize, g: &[f64], kappa: f64) {
        self.factor.remove(k);
        self.feats.remove(k);
        self.mean1.remove(k);
        self.rewhiten(g, kappa);
    }

    /// Conditional means `m1` under other whitened latent values.
    pub fn mean1_for(&self, whitened: &[f64]) -> Vec<f64> {
        self.feats
            .iter()
            .map(|f| f.iter().zip(whitened).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Swaps in a basis with the same variances and new latent values,
    /// keeping `ν`; the implied function values move with the latent.
    pub fn shift_latent(&mut self, basis: Arc<LatentBasis>) {
        debug_assert_eq!(basis.phis(), self.basis.phis());
        self.basis = basis;
        self.mean1 = self.feats.iter().map(|f| self.basis.mean_from_features(f)).collect();
    }

    /// Swaps in a new latent basis. Features only change when the latent
    /// variances do; otherwise only the conditional means move.
    pub fn set_basis(&mut self, basis: Arc<LatentBasis>, points: &[Point], g: &[f64], kappa: f64, dim: usize) -> Result<()> {
        if basis.phis() == self.basis.phis() && basis.grid() == self.basis.grid() {
            self.basis = basis;
            self.mean1 = self.feats.iter().map(|f| self.basis.mean_from_features(f)).collect();
            self.rewhiten(g, kappa);
            Ok(())
        } else {
            let rel = self.rel_jitter();
            let peak = self.peak;
            *self = PointCache::build(basis, self.theta, rel, points, g, kappa, dim)?;
            self.peak = self.peak.max(peak);
            Ok(())
        }
    }
}
