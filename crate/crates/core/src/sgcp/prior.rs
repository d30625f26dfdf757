use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Log-normal prior, parametrized by the mean and standard deviation of the
/// logarithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogNormal {
    pub log_mean: f64,
    pub log_sd: f64,
}

impl LogNormal {
    pub fn new(log_mean: f64, log_sd: f64) -> Result<Self> {
        let p = LogNormal { log_mean, log_sd };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.log_mean.is_finite() || !(self.log_sd > 0.0 && self.log_sd.is_finite()) {
            return Err(Error::Parameter(format!(
                "log-normal prior needs finite mean and positive sd, got ({}, {})",
                self.log_mean, self.log_sd
            )));
        }
        Ok(())
    }

    pub fn median(&self) -> f64 {
        self.log_mean.exp()
    }

    /// Density of `η = ln x` (a normal), which is the density HMC sees when it
    /// works in log space.
    pub fn log_density_of_log(&self, eta: f64) -> f64 {
        let z = (eta - self.log_mean) / self.log_sd;
        -0.5 * z * z - self.log_sd.ln() - LN_SQRT_2PI
    }

    pub fn grad_log_density_of_log(&self, eta: f64) -> f64 {
        -(eta - self.log_mean) / (self.log_sd * self.log_sd)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        (self.log_mean + self.log_sd * z).exp()
    }
}

impl Default for LogNormal {
    fn default() -> Self {
        LogNormal {
            log_mean: 0.0,
            log_sd: 1.0,
        }
    }
}

/// Priors over `λ*` (Gamma, shape/rate) and the kernel hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorConfig {
    pub lambda_alpha: f64,
    pub lambda_beta: f64,
    pub kappa: LogNormal,
    pub theta: LogNormal,
    pub phi: LogNormal,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            lambda_alpha: 1.0,
            lambda_beta: 0.1,
            kappa: LogNormal::default(),
            theta: LogNormal::default(),
            phi: LogNormal::default(),
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_alpha > 0.0 && self.lambda_alpha.is_finite())
            || !(self.lambda_beta > 0.0 && self.lambda_beta.is_finite())
        {
            return Err(Error::Parameter(format!(
                "Gamma prior on lambda* needs positive shape and rate, got ({}, {})",
                self.lambda_alpha, self.lambda_beta
            )));
        }
        self.kappa.validate()?;
        self.theta.validate()?;
        self.phi.validate()
    }

    /// Draws `λ*` from its Gamma prior.
    pub fn sample_lambda_star<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        sample_gamma(self.lambda_alpha, self.lambda_beta, rng)
    }
}

/// Gamma draw in the shape/rate parametrization.
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    let dist = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::Parameter(format!("Gamma({shape}, rate {rate}): {e}")))?;
    Ok(dist.sample(rng))
}
