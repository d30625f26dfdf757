//! Statistical and numerical oracles shared by the integration tests.

#![allow(dead_code)]

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Asymptotic Kolmogorov tail `P(K > t)`.
pub fn kolmogorov_tail(t: f64) -> f64 {
    if t < 0.27 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = 2.0 * (-1f64).powi(k - 1) * (-2.0 * kf * kf * t * t).exp();
        s += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    s.clamp(0.0, 1.0)
}

/// One-sample KS p-value against `cdf`.
pub fn ks_one_sample(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len() as f64;
    let d = v
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let f = cdf(*x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    let sn = n.sqrt();
    kolmogorov_tail((sn + 0.12 + 0.11 / sn) * d)
}

/// Two-sample KS p-value with effective sizes `na`, `nb`.
pub fn ks_two_sample(a: &[f64], b: &[f64], na: f64, nb: f64) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.total_cmp(y));
    b.sort_by(|x, y| x.total_cmp(y));
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    let ne = (na * nb / (na + nb)).sqrt();
    kolmogorov_tail((ne + 0.12 + 0.11 / ne) * d)
}

pub fn chi2_sf(stat: f64, dof: f64) -> f64 {
    1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
}

pub fn normal_cdf(x: f64, mean: f64, sd: f64) -> f64 {
    Normal::new(mean, sd).unwrap().cdf(x)
}

/// Two-sided p-value of a z statistic.
pub fn z_pvalue(z: f64) -> f64 {
    2.0 * (1.0 - normal_cdf(z.abs(), 0.0, 1.0))
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
    cov / (va * vb).sqrt()
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    rec(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, 50)
}
