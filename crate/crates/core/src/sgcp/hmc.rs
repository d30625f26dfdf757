use rand::Rng;
use rand_distr::StandardNormal;

/// Log density and gradient at a position, or `None` where either is not
/// finite.
pub trait HmcTarget {
    fn eval(&mut self, q: &[f64]) -> Option<(f64, Vec<f64>)>;
}

impl<F> HmcTarget for F
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    fn eval(&mut self, q: &[f64]) -> Option<(f64, Vec<f64>)> {
        self(q)
    }
}

/// End point of a leapfrog trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub position: Vec<f64>,
    pub momentum: Vec<f64>,
    pub log_density: f64,
    pub gradient: Vec<f64>,
}

/// `n_steps` leapfrog steps with unit mass; `None` if the target fails along
/// the way.
pub fn leapfrog<T: HmcTarget + ?Sized>(
    q: &[f64],
    p: &[f64],
    grad: &[f64],
    step: f64,
    n_steps: usize,
    target: &mut T,
) -> Option<Trajectory> {
    let mut q = q.to_vec();
    let mut p = p.to_vec();
    let mut grad = grad.to_vec();
    let mut logp = f64::NAN;
    if n_steps == 0 || step == 0.0 {
        let (lp, g) = target.eval(&q)?;
        return Some(Trajectory {
            position: q,
            momentum: p,
            log_density: lp,
            gradient: g,
        });
    }
    for _ in 0..n_steps {
        for (pi, gi) in p.iter_mut().zip(&grad) {
            *pi += 0.5 * step * gi;
        }
        for (qi, pi) in q.iter_mut().zip(&p) {
            *qi += step * pi;
        }
        let (lp, g) = target.eval(&q)?;
        if !lp.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return None;
        }
        logp = lp;
        grad = g;
        for (pi, gi) in p.iter_mut().zip(&grad) {
            *pi += 0.5 * step * gi;
        }
    }
    Some(Trajectory {
        position: q,
        momentum: p,
        log_density: logp,
        gradient: grad,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmcOutcome {
    pub position: Vec<f64>,
    pub accepted: bool,
    /// `min(1, exp(−ΔH))`, zero when the trajectory failed.
    pub accept_prob: f64,
}

/// One HMC transition from `q`. A non-finite target anywhere on the
/// trajectory rejects.
pub fn hmc_step<T, R>(q: &[f64], step: f64, n_steps: usize, target: &mut T, rng: &mut R) -> HmcOutcome
where
    T: HmcTarget + ?Sized,
    R: Rng + ?Sized,
{
    let p0: Vec<f64> = (0..q.len()).map(|_| rng.sample(StandardNormal)).collect();
    let u: f64 = rng.random();
    let reject = |q: &[f64]| HmcOutcome {
        position: q.to_vec(),
        accepted: false,
        accept_prob: 0.0,
    };
    let Some((lp0, g0)) = target.eval(q) else {
        return reject(q);
    };
    if !lp0.is_finite() || g0.iter().any(|v| !v.is_finite()) {
        return reject(q);
    }
    let Some(end) = leapfrog(q, &p0, &g0, step, n_steps, target) else {
        return reject(q);
    };
    let h0 = -lp0 + 0.5 * p0.iter().map(|v| v * v).sum::<f64>();
    let h1 = -end.log_density + 0.5 * end.momentum.iter().map(|v| v * v).sum::<f64>();
    let accept_prob = (h0 - h1).exp().min(1.0);
    if accept_prob.is_nan() {
        return reject(q);
    }
    if u < accept_prob {
        HmcOutcome {
            position: end.position,
            accepted: true,
            accept_prob,
        }
    } else {
        HmcOutcome {
            position: q.to_vec(),
            accepted: false,
            accept_prob,
        }
    }
}

/// Robbins-Monro step-size adaptation in log space toward a target
/// acceptance rate, frozen once burn-in ends.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSizeAdapter {
    log_step: f64,
    target: f64,
    count: usize,
    frozen: bool,
}

impl StepSizeAdapter {
    pub fn new(initial: f64, target: f64) -> Self {
        StepSizeAdapter {
            log_step: initial.ln(),
            target,
            count: 0,
            frozen: false,
        }
    }

    pub fn step(&self) -> f64 {
        self.log_step.exp()
    }

    pub fn target(&self) -> f64 {
        self.target
    }

    pub fn update(&mut self, accept_prob: f64) {
        if self.frozen {
            return;
        }
        self.count += 1;
        let rate = (self.count as f64 + 10.0).powf(-0.6) * 5.0;
        self.log_step = (self.log_step + rate * (accept_prob - self.target)).clamp(-12.0, 1.0);
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }
}
