//! How much of the maximum spanning tree survives plain magnitude pruning.
//!
//! [`overlap_lower_bound`] bounds the expected fraction of the top-`alpha`
//! weights (by magnitude) that belong to the maximum spanning tree, with
//! `alpha = m + n - 1`. [`random_overlap_pmf`] and [`random_overlap_tail`] give
//! the chance baseline: the overlap between two unrelated random subsets of
//! `alpha` weights. [`monte_carlo_overlap`] measures the real quantity on
//! random layers.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::pruning::measure_overlap;
use crate::{Error, LayerWeights, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct BoundQuery {
    pub m: usize,
    pub n: usize,
    /// Fraction of non-zero weights, in `(0, 1]`.
    pub sparsity: f64,
    pub alpha: usize,
}

impl BoundQuery {
    pub fn dense(m: usize, n: usize) -> Self {
        Self { m, n, sparsity: 1.0, alpha: (m + n).saturating_sub(1) }
    }

    pub fn with_sparsity(mut self, sparsity: f64) -> Self {
        self.sparsity = sparsity;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::InvalidQuery(format!("empty layer {}x{}", self.m, self.n)));
        }
        if self.alpha > self.m * self.n {
            return Err(Error::InvalidQuery(format!(
                "alpha {} exceeds the {} weights of the layer",
                self.alpha,
                self.m * self.n
            )));
        }
        Ok(())
    }
}

/// Lower bound on the expected spanning-tree / top-`alpha` overlap of a dense layer.
///
/// Exactly 1 when `min(m, n) = 1`: every weight is then in the tree.
pub fn overlap_lower_bound(q: &BoundQuery) -> Result<f64> {
    overlap_lower_bound_sparse(&BoundQuery { sparsity: 1.0, ..*q })
}

/// Same bound for a layer with only a fraction `sparsity` of non-zero weights,
/// clamped to 1.
pub fn overlap_lower_bound_sparse(q: &BoundQuery) -> Result<f64> {
    q.validate()?;
    if !(q.sparsity > 0.0 && q.sparsity <= 1.0) {
        return Err(Error::InvalidQuery(format!("sparsity {} outside (0, 1]", q.sparsity)));
    }
    let (m, n) = (q.m, q.n);
    let j = m.min(n);
    if j == 1 {
        return Ok(1.0);
    }
    let available = q.sparsity * (m * n) as f64;
    let spanning = m + n - 1;
    if available < spanning as f64 || available < q.alpha as f64 {
        return Err(Error::SparserThanSpanningTree { available, alpha: spanning.max(q.alpha) });
    }
    let sum: f64 = (0..=j)
        .map(|i| ((m - i) * (n - i)) as f64 / (available - i as f64))
        .sum();
    Ok((sum / spanning as f64).min(1.0))
}

fn ln_choose(n: usize, k: usize) -> f64 {
    libm::lgamma(n as f64 + 1.0) - libm::lgamma(k as f64 + 1.0) - libm::lgamma((n - k) as f64 + 1.0)
}

fn check_overlap_args(m: usize, n: usize, alpha: usize, w: usize) -> Result<usize> {
    let total = m
        .checked_mul(n)
        .ok_or_else(|| Error::InvalidQuery("layer too large".into()))?;
    if w > alpha || alpha > total {
        return Err(Error::InvalidQuery(format!(
            "need 0 <= w <= alpha <= m*n, got w = {w}, alpha = {alpha}, m*n = {total}"
        )));
    }
    Ok(total)
}

/// Probability that two random `alpha`-subsets of the `m n` weights share
/// exactly `w` weights, using `C(alpha, w) q^w (1 - q)^(alpha - w)` with
/// `q = alpha / (m n)`. Evaluated in log space.
pub fn random_overlap_pmf(m: usize, n: usize, alpha: usize, w: usize) -> Result<f64> {
    let total = check_overlap_args(m, n, alpha, w)?;
    Ok(pmf_term(total, alpha, w))
}

fn pmf_term(total: usize, alpha: usize, w: usize) -> f64 {
    let q = alpha as f64 / total as f64;
    // 0^0 = 1 at the boundaries.
    let hit = if w == 0 { 0.0 } else if q == 0.0 { f64::NEG_INFINITY } else { w as f64 * libm::log(q) };
    let miss_count = alpha - w;
    let miss = if miss_count == 0 {
        0.0
    } else if q == 1.0 {
        f64::NEG_INFINITY
    } else {
        miss_count as f64 * libm::log1p(-q)
    };
    libm::exp(ln_choose(alpha, w) + hit + miss)
}

/// Probability of at least `w` shared weights: the pmf summed over `w..=alpha`.
pub fn random_overlap_tail(m: usize, n: usize, alpha: usize, w: usize) -> Result<f64> {
    let total = check_overlap_args(m, n, alpha, w)?;
    if w == 0 {
        return Ok(1.0);
    }
    let tail: f64 = (w..=alpha).map(|i| pmf_term(total, alpha, i)).sum();
    Ok(tail.min(1.0))
}

/// Weight count for an overlap percentage: `floor(fraction * alpha)`.
pub fn overlap_count(fraction: f64, alpha: usize) -> usize {
    libm::floor(fraction * alpha as f64).max(0.0) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum WeightDistribution {
    /// `U(0, 1)`.
    #[default]
    Uniform01,
    /// `|N(0, 1)|`.
    GaussianAbs,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct OverlapEstimate {
    pub m: usize,
    pub n: usize,
    pub alpha: usize,
    pub distribution: WeightDistribution,
    pub trials: usize,
    pub seed: u64,
    pub mean_overlap: f64,
    /// Sample standard deviation of the per-trial fractions.
    pub std_dev: f64,
    /// `std_dev / sqrt(trials)`.
    pub std_error: f64,
    pub fractions: Vec<f64>,
}

pub const DEFAULT_TRIALS: usize = 200;

/// Random layer for one Monte Carlo trial. Each trial reads its own ChaCha
/// stream, so results do not depend on the order trials are evaluated in.
pub fn trial_weights(
    m: usize,
    n: usize,
    dist: WeightDistribution,
    seed: u64,
    trial: usize,
) -> Result<LayerWeights> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    let values = (0..m * n)
        .map(|_| match dist {
            WeightDistribution::Uniform01 => rng.random::<f64>(),
            WeightDistribution::GaussianAbs => rng.sample::<f64, _>(StandardNormal).abs(),
        })
        .collect();
    LayerWeights::new(m, n, values)
}

/// Overlap fraction of a single trial.
pub fn overlap_trial(m: usize, n: usize, dist: WeightDistribution, seed: u64, trial: usize) -> Result<f64> {
    let w = trial_weights(m, n, dist, seed, trial)?;
    Ok(measure_overlap(&w)?.fraction)
}

pub fn monte_carlo_overlap(
    m: usize,
    n: usize,
    dist: WeightDistribution,
    trials: usize,
    seed: u64,
) -> Result<OverlapEstimate> {
    if trials == 0 {
        return Err(Error::InvalidQuery("at least one trial is required".into()));
    }
    if m == 0 || n == 0 {
        return Err(Error::EmptyLayer { rows: m, cols: n });
    }
    let fractions = (0..trials)
        .map(|t| overlap_trial(m, n, dist, seed, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(m, n, dist, seed, fractions))
}

/// Builds an estimate from per-trial fractions computed elsewhere (for
/// example in parallel with [`overlap_trial`]).
pub fn summarize(
    m: usize,
    n: usize,
    distribution: WeightDistribution,
    seed: u64,
    fractions: Vec<f64>,
) -> OverlapEstimate {
    let trials = fractions.len();
    let mean = fractions.iter().sum::<f64>() / trials as f64;
    let var = if trials > 1 {
        fractions.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (trials - 1) as f64
    } else {
        0.0
    };
    let std_dev = libm::sqrt(var);
    OverlapEstimate {
        m,
        n,
        alpha: m + n - 1,
        distribution,
        trials,
        seed,
        mean_overlap: mean,
        std_dev,
        std_error: std_dev / libm::sqrt(trials as f64),
        fractions,
    }
}
