//! Dense lower-triangular factors that grow and shrink one point at a time.
//!
//! The sampler keeps the Cholesky factor of the covariance over its current
//! point set and edits it in O(N²) when points are inserted, deleted or moved.

/// Row-major lower-triangular factor with spare capacity.
#[derive(Debug, Clone)]
pub(crate) struct LowerFactor {
    data: Vec<f64>,
    stride: usize,
    n: usize,
}

impl LowerFactor {
    pub fn with_capacity(cap: usize) -> Self {
        let stride = cap.max(8);
        LowerFactor {
            data: vec![0.0; stride * stride],
            stride,
            n: 0,
        }
    }

    /// Factors the dense row-major `n × n` matrix `a + jitter I`.
    pub fn factor(a: &[f64], n: usize, jitter: f64) -> Option<Self> {
        let mut f = Self::with_capacity(n + n / 2 + 8);
        f.n = n;
        let s = f.stride;
        for i in 0..n {
            for j in 0..=i {
                let dot: f64 = (0..j).map(|k| f.data[i * s + k] * f.data[j * s + k]).sum();
                let v = a[i * n + j] + if i == j { jitter } else { 0.0 } - dot;
                if i == j {
                    if !(v > 0.0) || !v.is_finite() {
                        return None;
                    }
                    f.data[i * s + i] = v.sqrt();
                } else {
                    f.data[i * s + j] = v / f.data[j * s + j];
                }
            }
        }
        Some(f)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.stride + j]
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.stride..i * self.stride + i + 1]
    }

    /// `L^{-1} b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        debug_assert_eq!(b.len(), self.n);
        let mut y = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let r = self.row(i);
            let dot: f64 = r[..i].iter().zip(&y).map(|(a, b)| a * b).sum();
            y.push((b[i] - dot) / r[i]);
        }
        y
    }

    /// `L^{-T} b`.
    pub fn solve_upper_transposed(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            x[i] /= self.get(i, i);
            let xi = x[i];
            let r = self.row(i);
            for k in 0..i {
                x[k] -= r[k] * xi;
            }
        }
        x
    }

    /// `L v`.
    pub fn mul_lower(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Appends the row `[v, diag]`, i.e. a new last point whose solved
    /// cross-covariance is `v` and whose conditional standard deviation is
    /// `diag`.
    pub fn append(&mut self, v: &[f64], diag: f64) {
        debug_assert_eq!(v.len(), self.n);
        if self.n + 1 > self.stride {
            self.grow();
        }
        let base = self.n * self.stride;
        self.data[base..base + self.n].copy_from_slice(v);
        self.data[base + self.n] = diag;
        self.n += 1;
    }

    fn grow(&mut self) {
        let new_stride = self.stride * 2;
        let mut data = vec![0.0; new_stride * new_stride];
        for i in 0..self.n {
            data[i * new_stride..i * new_stride + i + 1].copy_from_slice(self.row(i));
        }
        self.data = data;
        self.stride = new_stride;
    }

    /// Drops point `k` and restores the factor of the remaining points with a
    /// rank-one update of the trailing block.
    pub fn remove(&mut self, k: usize) {
        let n = self.n;
        assert!(k < n);
        let s = self.stride;
        // Column k below the diagonal becomes the update vector.
        let mut x: Vec<f64> = (k + 1..n).map(|i| self.data[i * s + k]).collect();
        for i in k + 1..n {
            let src = i * s;
            let dst = (i - 1) * s;
            // row i without column k, shifted up one row
            self.data.copy_within(src..src + k, dst);
            self.data.copy_within(src + k + 1..src + i + 1, dst + k);
        }
        self.n = n - 1;
        let m = self.n;
        // L33' L33'^T = L33 L33^T + x x^T on rows/cols k..m
        for p in k..m {
            let lpp = self.data[p * s + p];
            let xp = x[p - k];
            let r = lpp.hypot(xp);
            let c = r / lpp;
            let sn = xp / lpp;
            self.data[p * s + p] = r;
            for i in p + 1..m {
                let lip = (self.data[i * s + p] + sn * x[i - k]) / c;
                self.data[i * s + p] = lip;
                x[i - k] = c * x[i - k] - sn * lip;
            }
        }
    }
}

/// Factors `a + j I`, starting from `j = rel_jitter × mean diagonal` and
/// doubling up to four times. A zero `rel_jitter` first tries the exact matrix
/// and then falls back to the default jitter. Returns the factor and the
/// jitter that succeeded.
pub(crate) fn factor_jittered(a: &[f64], n: usize, rel_jitter: f64) -> Option<(LowerFactor, f64)> {
    if n == 0 {
        return Some((LowerFactor::with_capacity(8), 0.0));
    }
    let mean_diag = (0..n).map(|i| a[i * n + i].abs()).sum::<f64>() / n as f64;
    if rel_jitter == 0.0 {
        if let Some(f) = LowerFactor::factor(a, n, 0.0) {
            return Some((f, 0.0));
        }
    }
    let rel = if rel_jitter > 0.0 { rel_jitter } else { crate::gaussian::DEFAULT_REL_JITTER };
    let base = rel * mean_diag;
    (0..=4).find_map(|k| {
        let j = base * f64::from(1u32 << k);
        LowerFactor::factor(a, n, j).map(|f| (f, j))
    })
}

/// Cholesky factor of `a` together with its directional derivative along
/// `da` (both dense row-major `n × n`). Returns `None` when `a` is not
/// numerically positive definite.
pub(crate) fn cholesky_with_tangent(a: &[f64], da: &[f64], n: usize) -> Option<(LowerFactor, Vec<f64>)> {
    let mut f = LowerFactor::with_capacity(n + 8);
    f.n = n;
    let s = f.stride;
    let mut dl = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut dot = 0.0;
            let mut ddot = 0.0;
            for k in 0..j {
                let (lik, ljk) = (f.data[i * s + k], f.data[j * s + k]);
                dot += lik * ljk;
                ddot += dl[i * n + k] * ljk + lik * dl[j * n + k];
            }
            let v = a[i * n + j] - dot;
            let dv = da[i * n + j] - ddot;
            if i == j {
                if !(v > 0.0) || !v.is_finite() {
                    return None;
                }
                let l = v.sqrt();
                f.data[i * s + i] = l;
                dl[i * n + i] = 0.5 * dv / l;
            } else {
                let ljj = f.data[j * s + j];
                let l = v / ljj;
                f.data[i * s + j] = l;
                dl[i * n + j] = (dv - l * dl[j * n + j]) / ljj;
            }
        }
    }
    Some((f, dl))
}
