//! Inference for dependent Cox point processes.
//!
//! Each observed process has a sigmoidal Gaussian intensity
//! `λ_d(x) = λ*_d σ(g_d(x))`, and the `g_d` are coupled through a small number
//! of shared latent Gaussian processes blurred by per-process Gaussian
//! convolution kernels. Posterior inference is a parallel MCMC sweep over
//! thinned-point augmentations with multi-level (adaptive) thinning, followed
//! by a joint Gaussian update of the latent functions on a fixed grid.
//!
//! Module map:
//!
//! - [`gaussian`]: kernels and multivariate-normal primitives
//! - [`thinning`]: rate ladders and level-aware acceptance ratios
//! - [`multioutput`]: convolution covariances, the per-process conditional
//!   and the latent posterior
//! - [`sgcp`]: the single-process augmented sampler
//! - [`engine`]: the full chain, summaries and diagnostics
//! - [`genesis`]: ground-truth sampling and exact event generation
//! - [`metrics`]: likelihood scores, L2 error and the KDE baseline
//! - [`shell`]: configuration, file formats and the command workflows

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b, tol): (f64, f64, f64) = ($a, $b, $tol);
        assert!((a - b).abs() <= tol, "{} vs {} (tol {})", a, b, tol);
    }};
}

mod error;
pub(crate) mod linalg;

pub mod engine;
pub mod gaussian;
pub mod genesis;
pub mod metrics;
pub mod multioutput;
pub mod region;
pub mod sgcp;
pub mod shell;
pub mod thinning;

pub use error::{Error, Result};
pub use region::{EventSet, Point, Region};

/// Logistic function.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
