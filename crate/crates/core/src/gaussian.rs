//! Gaussian kernels and multivariate-normal primitives.
//!
//! Every factorization goes through [`CovMatrix::cholesky`], which adds a
//! relative diagonal jitter and escalates it on failure. No explicit inverse
//! is formed anywhere in this module.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

/// Default jitter, relative to the mean diagonal entry.
pub const DEFAULT_REL_JITTER: f64 = 1e-8;
const JITTER_DOUBLINGS: u32 = 4;
const SYMMETRY_TOL: f64 = 1e-12;

/// Isotropic Gaussian kernel parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussKernelParams {
    variance: f64,
}

impl GaussKernelParams {
    pub fn new(variance: f64) -> Result<Self> {
        check_variance(variance)?;
        Ok(GaussKernelParams { variance })
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn density(&self, x: &[f64], z: &[f64]) -> f64 {
        gauss_density_unchecked(x, z, self.variance)
    }
}

fn check_variance(v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "kernel variance must be positive and finite, got {v}"
        )))
    }
}

/// Isotropic normal density `N(x; z, v I)`.
pub fn gauss_density(x: &[f64], z: &[f64], variance: f64) -> Result<f64> {
    check_variance(variance)?;
    if x.len() != z.len() {
        return Err(Error::Shape(format!(
            "points of dimension {} and {}",
            x.len(),
            z.len()
        )));
    }
    Ok(gauss_density_unchecked(x, z, variance))
}

#[inline]
pub(crate) fn sq_dist(x: &[f64], z: &[f64]) -> f64 {
    x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[inline]
pub(crate) fn gauss_density_unchecked(x: &[f64], z: &[f64], variance: f64) -> f64 {
    let r2 = sq_dist(x, z);
    (2.0 * PI * variance).powf(-0.5 * x.len() as f64) * (-0.5 * r2 / variance).exp()
}

/// Density and its derivative with respect to the variance.
#[inline]
pub(crate) fn gauss_density_dvar(x: &[f64], z: &[f64], variance: f64) -> (f64, f64) {
    let r2 = sq_dist(x, z);
    let dim = x.len() as f64;
    let n = (2.0 * PI * variance).powf(-0.5 * dim) * (-0.5 * r2 / variance).exp();
    let dn = n * (0.5 * r2 / (variance * variance) - 0.5 * dim / variance);
    (n, dn)
}

/// Symmetric covariance matrix with a relative diagonal jitter.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    entries: DMatrix<f64>,
    rel_jitter: f64,
}

impl CovMatrix {
    /// Wraps `entries` with the default jitter of `1e-8 × mean diagonal`.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        Self::with_rel_jitter(entries, DEFAULT_REL_JITTER)
    }

    /// Wraps `entries` with a caller-chosen relative jitter. A zero jitter
    /// factors exactly and only falls back to the default on failure.
    pub fn with_rel_jitter(entries: DMatrix<f64>, rel_jitter: f64) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::Shape(format!(
                "covariance must be square, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if !(rel_jitter >= 0.0 && rel_jitter.is_finite()) {
            return Err(Error::Parameter(format!("jitter must be nonnegative, got {rel_jitter}")));
        }
        let scale = entries.amax();
        let n = entries.nrows();
        for i in 0..n {
            for j in 0..i {
                let (a, b) = (entries[(i, j)], entries[(j, i)]);
                if !a.is_finite() || (a - b).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::Parameter(format!(
                        "covariance not symmetric at ({i},{j}): {a} vs {b}"
                    )));
                }
            }
        }
        Ok(CovMatrix {
            entries,
            rel_jitter,
        })
    }

    /// Builds `k(p_i, p_j)` over a point set.
    pub fn from_kernel<F>(points: &[Vec<f64>], kernel: F) -> Result<Self>
    where
        F: Fn(&[f64], &[f64]) -> f64,
    {
        let n = points.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = kernel(&points[i], &points[j]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Self::new(m)
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn rel_jitter(&self) -> f64 {
        self.rel_jitter
    }

    /// Absolute jitter that the first factorization attempt adds.
    pub fn jitter(&self) -> f64 {
        self.rel_jitter * mean_abs_diag(&self.entries)
    }

    fn is_zero(&self) -> bool {
        self.entries.iter().all(|v| *v == 0.0)
    }

    /// Cholesky factor of `entries + jitter I`, doubling the jitter up to four
    /// times before giving up.
    pub fn cholesky(&self) -> Result<Cholesky<f64, Dyn>> {
        jittered_cholesky(&self.entries, self.rel_jitter).map(|(c, _)| c)
    }
}

fn mean_abs_diag(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    m.diagonal().iter().map(|v| v.abs()).sum::<f64>() / n as f64
}

/// Returns the factor together with the absolute jitter that succeeded.
pub fn jittered_cholesky(a: &DMatrix<f64>, rel_jitter: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = a.nrows();
    if n == 0 {
        let c = Cholesky::new(DMatrix::zeros(0, 0))
            .ok_or_else(|| Error::Numerical("empty factorization".into()))?;
        return Ok((c, 0.0));
    }
    let md = mean_abs_diag(a);
    let mut attempts = Vec::with_capacity(JITTER_DOUBLINGS as usize + 2);
    if rel_jitter == 0.0 {
        attempts.push(0.0);
    }
    let base = if rel_jitter > 0.0 { rel_jitter } else { DEFAULT_REL_JITTER } * md;
    for k in 0..=JITTER_DOUBLINGS {
        attempts.push(base * f64::from(1u32 << k));
    }
    for jitter in attempts {
        let mut m = a.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(m) {
            if c.l_dirty().diagonal().iter().all(|v| v.is_finite() && *v > 0.0) {
                return Ok((c, jitter));
            }
        }
    }
    Err(Error::Numerical(format!(
        "Cholesky failed on a {n}x{n} matrix after jitter escalation"
    )))
}

/// Multivariate normal distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct MvnDist {
    pub mean: DVector<f64>,
    pub cov: CovMatrix,
}

impl MvnDist {
    pub fn new(mean: DVector<f64>, cov: CovMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::Shape(format!(
                "mean of length {} with a {}x{} covariance",
                mean.len(),
                cov.dim(),
                cov.dim()
            )));
        }
        Ok(MvnDist { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Exact Gaussian conditioning on the entries listed in `observed`.
///
/// Returns the distribution over the remaining indices, in increasing order.
pub fn conditional_mvn(joint: &MvnDist, observed: &[usize], values: &[f64]) -> Result<MvnDist> {
    let n = joint.dim();
    if observed.len() != values.len() {
        return Err(Error::Shape(format!(
            "{} observed indices but {} values",
            observed.len(),
            values.len()
        )));
    }
    let mut seen = vec![false; n];
    for &i in observed {
        if i >= n || seen[i] {
            return Err(Error::Parameter(format!(
                "observed index {i} is out of range or repeated"
            )));
        }
        seen[i] = true;
    }
    if observed.is_empty() {
        return Ok(joint.clone());
    }
    let hidden: Vec<usize> = (0..n).filter(|i| !seen[*i]).collect();
    let s = joint.cov.entries();
    let s_oo = s.select_rows(observed).select_columns(observed);
    let s_ho = s.select_rows(&hidden).select_columns(observed);
    let s_hh = s.select_rows(&hidden).select_columns(&hidden);
    let chol = CovMatrix::with_rel_jitter(s_oo, joint.cov.rel_jitter())?.cholesky()?;

    let resid = DVector::from_iterator(
        observed.len(),
        observed.iter().zip(values).map(|(&i, v)| v - joint.mean[i]),
    );
    let alpha = chol.solve(&resid);
    let mu_h = DVector::from_iterator(hidden.len(), hidden.iter().map(|&i| joint.mean[i]))
        + &s_ho * alpha;

    // S_hh - S_ho S_oo^{-1} S_oh = S_hh - V^T V with V = L^{-1} S_oh.
    let v = chol
        .l_dirty()
        .solve_lower_triangular(&s_ho.transpose())
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let mut cov = s_hh - v.transpose() * v;
    symmetrize(&mut cov);
    MvnDist::new(mu_h, CovMatrix::with_rel_jitter(cov, joint.cov.rel_jitter())?)
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Log density via the Cholesky factor.
pub fn mvn_logpdf(x: &DVector<f64>, dist: &MvnDist) -> Result<f64> {
    if x.len() != dist.dim() {
        return Err(Error::Shape(format!(
            "point of length {} for a {}-dimensional normal",
            x.len(),
            dist.dim()
        )));
    }
    let n = x.len();
    if n == 0 {
        return Ok(0.0);
    }
    let chol = dist.cov.cholesky()?;
    let l = chol.l_dirty();
    let log_det: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let z = l
        .solve_lower_triangular(&(x - &dist.mean))
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    Ok(-0.5 * (n as f64 * (2.0 * PI).ln() + log_det + z.norm_squared()))
}

/// Draws `mean + L z`. A zero covariance returns the mean exactly.
pub fn mvn_sample<R: Rng + ?Sized>(dist: &MvnDist, rng: &mut R) -> Result<DVector<f64>> {
    let n = dist.dim();
    if dist.cov.is_zero() {
        return Ok(dist.mean.clone());
    }
    let chol = dist.cov.cholesky()?;
    let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    Ok(&dist.mean + chol.l_dirty().lower_triangle() * z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn density_values() {
        assert_close!(gauss_density(&[0.0], &[0.0], 1.0).unwrap(), 0.398_942_280_401_432_7, 1e-15);
        // exp(-1/2)/sqrt(2 pi)
        assert_close!(gauss_density(&[1.0], &[0.0], 1.0).unwrap(), 0.241_970_724_519_143_37, 1e-15);
        assert_close!(
            gauss_density(&[0.0, 0.0], &[0.0, 0.0], 1.0).unwrap(),
            1.0 / (2.0 * PI),
            1e-15
        );
    }

    #[test]
    fn density_rejects_bad_variance() {
        assert!(matches!(gauss_density(&[0.0], &[0.0], 0.0), Err(Error::Parameter(_))));
        assert!(matches!(gauss_density(&[0.0], &[0.0], -1.0), Err(Error::Parameter(_))));
        assert!(matches!(gauss_density(&[0.0], &[0.0, 1.0], 1.0), Err(Error::Shape(_))));
        assert!(GaussKernelParams::new(0.0).is_err());
    }

    #[test]
    fn density_variance_derivative_matches_finite_difference() {
        let (x, z, v) = ([0.3, -0.2], [0.1, 0.4], 0.37);
        let h = 1e-6;
        let fd = (gauss_density_unchecked(&x, &z, v + h) - gauss_density_unchecked(&x, &z, v - h))
            / (2.0 * h);
        let (_, dn) = gauss_density_dvar(&x, &z, v);
        assert_close!(dn, fd, 1e-7);
    }

    fn example_joint() -> MvnDist {
        let cov = DMatrix::from_row_slice(3, 3, &[2.0, 0.6, 0.3, 0.6, 1.5, -0.4, 0.3, -0.4, 1.0]);
        MvnDist::new(
            DVector::from_vec(vec![0.5, -1.0, 2.0]),
            CovMatrix::with_rel_jitter(cov, 0.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn conditioning_on_nothing_is_identity() {
        let j = example_joint();
        assert_eq!(conditional_mvn(&j, &[], &[]).unwrap(), j);
    }

    #[test]
    fn conditioning_with_zero_cross_covariance_keeps_marginal() {
        let cov = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.3, 0.0, 1.5, 0.0, 0.3, 0.0, 1.0]);
        let j = MvnDist::new(DVector::from_vec(vec![1.0, 2.0, 3.0]), CovMatrix::new(cov).unwrap())
            .unwrap();
        let c = conditional_mvn(&j, &[1], &[7.0]).unwrap();
        assert_close!(c.mean[0], 1.0, 1e-14);
        assert_close!(c.mean[1], 3.0, 1e-14);
        assert_close!(c.cov.entries()[(0, 1)], 0.3, 1e-14);
        assert_close!(c.cov.entries()[(1, 1)], 1.0, 1e-14);
    }

    #[test]
    fn conditioning_matches_explicit_inverse_oracle() {
        let j = example_joint();
        let c = conditional_mvn(&j, &[1], &[0.25]).unwrap();
        // Oracle: scalar observed block, explicit formulas.
        let s = j.cov.entries();
        let inv = 1.0 / s[(1, 1)];
        let resid = 0.25 - j.mean[1];
        let hidden = [0usize, 2];
        for (a, &i) in hidden.iter().enumerate() {
            assert_close!(c.mean[a], j.mean[i] + s[(i, 1)] * inv * resid, 1e-12);
            for (b, &k) in hidden.iter().enumerate() {
                assert_close!(c.cov.entries()[(a, b)], s[(i, k)] - s[(i, 1)] * inv * s[(1, k)], 1e-12);
            }
        }
    }

    #[test]
    fn conditioning_rejects_bad_indices() {
        let j = example_joint();
        assert!(conditional_mvn(&j, &[0, 0], &[1.0, 1.0]).is_err());
        assert!(conditional_mvn(&j, &[3], &[1.0]).is_err());
    }

    #[test]
    fn logpdf_values() {
        let std = MvnDist::new(
            DVector::from_vec(vec![0.0]),
            CovMatrix::with_rel_jitter(DMatrix::identity(1, 1), 0.0).unwrap(),
        )
        .unwrap();
        assert_close!(
            mvn_logpdf(&DVector::from_vec(vec![0.0]), &std).unwrap(),
            -0.918_938_533_204_672_7,
            1e-14
        );

        let j = example_joint();
        let det = j.cov.entries().determinant();
        assert_close!(
            mvn_logpdf(&j.mean, &j).unwrap(),
            -0.5 * ((2.0 * PI).powi(3) * det).ln(),
            1e-12
        );

        // 2x2, unit variances, correlation 0.5, explicit inverse.
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let d = MvnDist::new(DVector::zeros(2), CovMatrix::with_rel_jitter(cov, 0.0).unwrap()).unwrap();
        let det = 1.0 - 0.25;
        let (a, b) = (1.0, 1.0);
        let quad = (a * a - 2.0 * 0.5 * a * b + b * b) / det;
        let oracle = -0.5 * quad - (2.0 * PI).ln() - 0.5 * det.ln();
        assert_close!(mvn_logpdf(&DVector::from_vec(vec![1.0, 1.0]), &d).unwrap(), oracle, 1e-13);
    }

    #[test]
    fn logpdf_integrates_to_one() {
        let d = MvnDist::new(
            DVector::from_vec(vec![0.3]),
            CovMatrix::new(DMatrix::from_element(1, 1, 0.8)).unwrap(),
        )
        .unwrap();
        let (lo, hi, n) = (-10.0, 10.0, 4001);
        let h = (hi - lo) / (n - 1) as f64;
        let total: f64 = (0..n)
            .map(|i| {
                let x = lo + h * i as f64;
                let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                w * h * mvn_logpdf(&DVector::from_vec(vec![x]), &d).unwrap().exp()
            })
            .sum();
        assert_close!(total, 1.0, 1e-4);
    }

    #[test]
    fn sample_with_zero_covariance_is_mean() {
        let d = MvnDist::new(
            DVector::from_vec(vec![1.5, -2.0]),
            CovMatrix::new(DMatrix::zeros(2, 2)).unwrap(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(mvn_sample(&d, &mut rng).unwrap(), d.mean);
    }

    #[test]
    fn sampling_is_deterministic_and_calibrated() {
        let j = example_joint();
        let a = mvn_sample(&j, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = mvn_sample(&j, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);

        let d = MvnDist::new(
            DVector::zeros(1),
            CovMatrix::new(DMatrix::identity(1, 1)).unwrap(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..10_000).map(|_| mvn_sample(&d, &mut rng).unwrap()[0]).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - 1.0).abs() < 0.1, "var {var}");
    }

    #[test]
    fn jitter_escalates_on_singular_matrix() {
        // rank one
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let (_, jitter) = jittered_cholesky(&m, 0.0).unwrap();
        assert!(jitter > 0.0);
        assert!(jittered_cholesky(&DMatrix::from_row_slice(1, 1, &[-1.0]), 1e-8).is_err());
    }

    #[test]
    fn rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.3, 1.0]);
        assert!(CovMatrix::new(m).is_err());
    }

    proptest! {
        #[test]
        fn kernel_gram_factorizes(
            pts in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 2), 1..25),
            var in 0.01f64..2.0,
        ) {
            let cov = CovMatrix::from_kernel(&pts, |a, b| gauss_density_unchecked(a, b, var)).unwrap();
            prop_assert!(cov.cholesky().is_ok());
        }

        #[test]
        fn sequential_conditioning_equals_joint(
            a in -2.0f64..2.0, b in -2.0f64..2.0, seed in 0u64..1000,
        ) {
            // Well-conditioned random 5x5 covariance: W W^T + I.
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = DMatrix::from_fn(5, 5, |_, _| rng.random::<f64>() - 0.5);
            let cov = &w * w.transpose() + DMatrix::identity(5, 5);
            let mut cov = cov; symmetrize(&mut cov);
            let mean = DVector::from_fn(5, |i, _| i as f64 * 0.1);
            let joint = MvnDist::new(mean, CovMatrix::with_rel_jitter(cov, 0.0).unwrap()).unwrap();
            let once = conditional_mvn(&joint, &[1, 3], &[a, b]).unwrap();
            let step = conditional_mvn(&joint, &[1], &[a]).unwrap();
            // index 3 of the joint is index 2 of the remaining {0,2,3,4}
            let twice = conditional_mvn(&step, &[2], &[b]).unwrap();
            prop_assert!((&once.mean - &twice.mean).amax() < 1e-8);
            prop_assert!((once.cov.entries() - twice.cov.entries()).amax() < 1e-8);
        }
    }
}
