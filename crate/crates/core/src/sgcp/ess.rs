use std::f64::consts::PI;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::gaussian::MvnDist;
use crate::{Error, Result};

/// Shrinkage steps after which the bracket is treated as collapsed onto the
/// current point.
const MAX_SHRINKS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct EssOutcome {
    pub state: Vec<f64>,
    pub log_lik: f64,
    pub shrinks: usize,
}

/// One elliptical slice transition for a vector with a standard normal prior.
///
/// `loglik` is evaluated on candidate vectors; `cur_ll` is its value at
/// `current`.
pub fn elliptical_slice<R, F>(current: &[f64], cur_ll: f64, mut loglik: F, rng: &mut R) -> Result<EssOutcome>
where
    R: Rng + ?Sized,
    F: FnMut(&[f64]) -> f64,
{
    if current.is_empty() {
        return Ok(EssOutcome {
            state: Vec::new(),
            log_lik: cur_ll,
            shrinks: 0,
        });
    }
    if cur_ll == f64::NEG_INFINITY || cur_ll.is_nan() {
        return Err(Error::Invariant(format!(
            "elliptical slice started from a state with log-likelihood {cur_ll}"
        )));
    }
    let aux: Vec<f64> = (0..current.len()).map(|_| rng.sample(StandardNormal)).collect();
    let u: f64 = rng.random();
    let threshold = cur_ll + u.ln();
    let mut angle = rng.random::<f64>() * 2.0 * PI;
    let (mut lo, mut hi) = (angle - 2.0 * PI, angle);
    let mut candidate = vec![0.0; current.len()];
    for shrinks in 0..MAX_SHRINKS {
        let (s, c) = angle.sin_cos();
        for ((out, x), a) in candidate.iter_mut().zip(current).zip(&aux) {
            *out = x * c + a * s;
        }
        let ll = loglik(&candidate);
        if ll > threshold {
            return Ok(EssOutcome {
                state: candidate,
                log_lik: ll,
                shrinks,
            });
        }
        if angle < 0.0 {
            lo = angle;
        } else {
            hi = angle;
        }
        angle = lo + rng.random::<f64>() * (hi - lo);
    }
    Ok(EssOutcome {
        state: current.to_vec(),
        log_lik: cur_ll,
        shrinks: MAX_SHRINKS,
    })
}

/// Elliptical slice transition for `x ~ prior` under `loglik`, run in the
/// centered, whitened coordinates of the prior.
pub fn ess_transition<R, F>(x: &DVector<f64>, prior: &MvnDist, mut loglik: F, rng: &mut R) -> Result<DVector<f64>>
where
    R: Rng + ?Sized,
    F: FnMut(&DVector<f64>) -> f64,
{
    if x.len() != prior.dim() {
        return Err(Error::Shape(format!(
            "state of length {} for a prior of dimension {}",
            x.len(),
            prior.dim()
        )));
    }
    if x.is_empty() {
        return Ok(x.clone());
    }
    let chol = prior.cov.cholesky()?;
    let l = chol.l();
    let nu = l
        .solve_lower_triangular(&(x - &prior.mean))
        .ok_or_else(|| Error::Numerical("prior factor is singular".into()))?;
    let map = |v: &[f64]| &prior.mean + &l * DVector::from_column_slice(v);
    let cur_ll = loglik(x);
    let out = elliptical_slice(nu.as_slice(), cur_ll, |v| loglik(&map(v)), rng)?;
    Ok(map(&out.state))
}
