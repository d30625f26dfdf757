//! Multi-level thinning.
//!
//! Instead of a single uniformisation rate `λ*`, every thinned point carries a
//! level `l_r ∈ L` with `σ(g(x̃)) ≤ l_r` and is generated at rate `λ* l_r`.
//! Regions where the intensity is low are then thinned at a fraction of the
//! global rate. Level indices are 0-based throughout.

use crate::{sigmoid, Error, Result};

/// Slack used by the default ladders.
pub const DEFAULT_SLACK: f64 = 0.9;

/// Ordered rate levels `l_0 < … < l_{B-1} = 1` and the slack `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateLadder {
    levels: Vec<f64>,
    slack: f64,
}

impl RateLadder {
    pub fn new(levels: Vec<f64>, slack: f64) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Parameter("rate ladder needs at least one level".into()));
        }
        if levels.iter().any(|l| !(*l > 0.0 && *l <= 1.0)) {
            return Err(Error::Parameter(format!("rate levels must lie in (0, 1], got {levels:?}")));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parameter(format!("rate levels must increase strictly, got {levels:?}")));
        }
        if *levels.last().unwrap() != 1.0 {
            return Err(Error::Parameter(format!("last rate level must be exactly 1, got {levels:?}")));
        }
        if !(slack > 0.0 && slack < 1.0) {
            return Err(Error::Parameter(format!("slack must lie in (0, 1), got {slack}")));
        }
        Ok(RateLadder { levels, slack })
    }

    /// The single-rate ladder `{1}`.
    pub fn single() -> Self {
        RateLadder {
            levels: vec![1.0],
            slack: DEFAULT_SLACK,
        }
    }

    /// `{2^-(b-1), …, ½, 1}`.
    pub fn halving(b: usize) -> Result<Self> {
        if b == 0 {
            return Err(Error::Parameter("ladder needs at least one level".into()));
        }
        let levels = (0..b).rev().map(|k| 0.5f64.powi(k as i32)).collect();
        Self::new(levels, DEFAULT_SLACK)
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn level(&self, idx: usize) -> f64 {
        self.levels[idx]
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn top(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn slack(&self) -> f64 {
        self.slack
    }

    pub fn is_single(&self) -> bool {
        self.levels.len() == 1
    }
}

/// Smallest level index `r` with `σ ≤ l_r s`; the top level when none qualifies.
///
/// The result always satisfies `σ ≤ l_r` because the top level is 1.
pub fn assign_rate(sigmoid_value: f64, ladder: &RateLadder) -> usize {
    ladder
        .levels
        .iter()
        .position(|l| sigmoid_value <= l * ladder.slack)
        .unwrap_or(ladder.top())
}

/// `p(x̃ | r) = (l_r − σ) / l_r`, the probability that a point proposed at
/// level `l_r` is thinned.
pub fn thinned_prob(sigmoid_value: f64, level: f64) -> Result<f64> {
    if sigmoid_value > level {
        return Err(Error::Invariant(format!(
            "sigmoid value {sigmoid_value} exceeds its rate level {level}"
        )));
    }
    Ok((level - sigmoid_value) / level)
}

/// `l − σ(g)`, evaluated as `σ(−g)` on the top level to keep precision when
/// `σ(g)` is close to one.
#[inline]
pub fn level_gap(g: f64, level: f64) -> f64 {
    if level == 1.0 {
        sigmoid(-g)
    } else {
        level - sigmoid(g)
    }
}

/// Quantities shared by the insertion and deletion ratios.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BirthDeathContext {
    /// Number of thinned points before the proposal.
    pub num_thinned: usize,
    pub lambda_star: f64,
    pub volume: f64,
    /// Probability of proposing an insertion; constant in `(K, M)`.
    pub birth_prob: f64,
}

/// Insertion ratio for a point whose sigmoid value is `sigmoid_value` at
/// level `level`: `(1−b) μ(T) λ* l p(x̃|r) / ((M+1) b)`.
pub fn adaptive_accept_insert(ctx: &BirthDeathContext, sigmoid_value: f64, level: f64) -> f64 {
    insert_ratio_from_gap(ctx, level - sigmoid_value)
}

/// Insertion ratio given the level gap `l − σ(g)` directly (see [`level_gap`]).
pub fn insert_ratio_from_gap(ctx: &BirthDeathContext, gap: f64) -> f64 {
    let b = ctx.birth_prob;
    (1.0 - b) * ctx.volume * ctx.lambda_star * gap / ((ctx.num_thinned + 1) as f64 * b)
}

/// Deletion ratio `M b / ((1−b) μ(T) λ* l p(x̃|r))` for removing a thinned
/// point. Infinite when the point sits exactly on its level.
pub fn adaptive_accept_delete(ctx: &BirthDeathContext, sigmoid_value: f64, level: f64) -> Result<f64> {
    if ctx.num_thinned == 0 {
        return Err(Error::Precondition("deletion needs at least one thinned point".into()));
    }
    Ok(delete_ratio_from_gap(ctx, level - sigmoid_value))
}

/// Deletion ratio given the level gap `l − σ(g)` directly.
pub fn delete_ratio_from_gap(ctx: &BirthDeathContext, gap: f64) -> f64 {
    let b = ctx.birth_prob;
    ctx.num_thinned as f64 * b / ((1.0 - b) * ctx.volume * ctx.lambda_star * gap)
}

/// Move ratio: the insertion ratio at the new site times the deletion ratio at
/// the old one, i.e. `l_new p_new / (l_old p_old)` under a symmetric proposal.
pub fn adaptive_accept_move(old_sigmoid: f64, old_level: f64, new_sigmoid: f64, new_level: f64) -> f64 {
    move_ratio_from_gaps(old_level - old_sigmoid, new_level - new_sigmoid)
}

/// Move ratio given the level gaps at the old and new sites.
pub fn move_ratio_from_gaps(old_gap: f64, new_gap: f64) -> f64 {
    new_gap / old_gap
}

/// `N̂_tot = Σ_k 1/l_{r̄_k} + Σ_m 1/l_{r_m}`.
pub fn estimate_total(data_levels: &[usize], thinned_levels: &[usize], ladder: &RateLadder) -> f64 {
    data_levels
        .iter()
        .chain(thinned_levels)
        .map(|&r| 1.0 / ladder.level(r))
        .sum()
}

/// Shape of the Gamma conditional for `λ*`.
pub fn posterior_shape(alpha: f64, total: f64) -> f64 {
    alpha + total
}

/// Single-rate ratios written directly in terms of the function value `g`.
/// Used as the reference the multi-level formulas must reduce to.
pub mod single_rate {
    pub fn accept_insert(g: f64, num_thinned: usize, lambda_star: f64, volume: f64, b: f64) -> f64 {
        (1.0 - b) * volume * lambda_star / ((num_thinned + 1) as f64 * b * (1.0 + g.exp()))
    }

    pub fn accept_delete(g: f64, num_thinned: usize, lambda_star: f64, volume: f64, b: f64) -> f64 {
        num_thinned as f64 * b * (1.0 + g.exp()) / ((1.0 - b) * volume * lambda_star)
    }

    pub fn accept_move(g_old: f64, g_new: f64) -> f64 {
        (1.0 + g_old.exp()) / (1.0 + g_new.exp())
    }

    pub fn posterior_shape(alpha: f64, num_data: usize, num_thinned: usize) -> f64 {
        alpha + (num_data + num_thinned) as f64
    }
}
