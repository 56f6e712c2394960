//! Loss-driven augmentation strength.
//!
//! [`hybrid_normalize`] turns a batch of pre-augmentation losses into one
//! policy value `lambda` per sample in four steps:
//!
//! 1. clip each loss to `mean ± 2·spread` (spread is the population variance
//!    by default, optionally the standard deviation);
//! 2. ratio-normalize: `L'' = L' / (L' + mean(L'))`;
//! 3. min-max scale `L''` onto `[0, 1]`;
//! 4. `lambda = 1 - I_x(alpha, beta)` at `x = L'''`.
//!
//! Higher loss means lower `lambda`, and therefore fewer augmentation
//! operations. [`rank_policy`] is the rank-based baseline that feeds
//! `rank / B` into the same transform.
//!
//! [`counts_from_lambda`] maps `lambda` onto operator counts with
//! `ceil(m·lambda)` per operator (multipliers 4, 4, 2 by default), which
//! yields at most 4 masks and 2 substitutions per sample.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ibf::{regularized_ibf, IbfParams};

/// Per-sample losses of one batch, measured before augmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchLosses(Vec<f64>);

impl BatchLosses {
    pub fn new(losses: Vec<f64>) -> Result<Self> {
        if losses.is_empty() {
            return Err(Error::Invalid("batch must contain at least one loss".into()));
        }
        for (i, &l) in losses.iter().enumerate() {
            if !l.is_finite() {
                return Err(Error::Invalid(format!("loss {i} is not finite: {l}")));
            }
            if l < 0.0 {
                return Err(Error::Invalid(format!("loss {i} is negative: {l}")));
            }
        }
        Ok(BatchLosses(losses))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Which dispersion measure sets the clipping band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipSpread {
    #[default]
    Variance,
    StdDev,
}

/// Every intermediate of [`hybrid_normalize`], kept for auditing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossPipelineTrace {
    pub l_raw: Vec<f64>,
    pub l_clipped: Vec<f64>,
    pub l_meannorm: Vec<f64>,
    pub l_minmax: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Mean of the raw losses.
    pub l_mean: f64,
    /// Population variance of the raw losses.
    pub l_var: f64,
}

pub fn hybrid_normalize(
    batch: &BatchLosses,
    ibf: &IbfParams,
    spread: ClipSpread,
) -> Result<LossPipelineTrace> {
    let raw = batch.as_slice();
    let n = raw.len() as f64;
    let mean = raw.iter().sum::<f64>() / n;
    let var = raw.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n;
    let half_band = 2.0
        * match spread {
            ClipSpread::Variance => var,
            ClipSpread::StdDev => var.sqrt(),
        };
    let (lo, hi) = (mean - half_band, mean + half_band);
    let clipped: Vec<f64> = raw.iter().map(|&l| l.clamp(lo, hi)).collect();

    let clipped_mean = clipped.iter().sum::<f64>() / n;
    let meannorm: Vec<f64> = clipped
        .iter()
        .map(|&l| {
            let denom = l + clipped_mean;
            // all-zero batch: 0/0 collapses to 0 and falls into the flat case below
            if denom == 0.0 {
                0.0
            } else {
                l / denom
            }
        })
        .collect();

    let min = meannorm.iter().copied().fold(f64::INFINITY, f64::min);
    let max = meannorm.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let minmax: Vec<f64> = if max == min {
        vec![0.5; meannorm.len()]
    } else {
        meannorm.iter().map(|&v| ((v - min) / (max - min)).clamp(0.0, 1.0)).collect()
    };

    let lambda = minmax
        .iter()
        .map(|&x| regularized_ibf(x, ibf).map(|p| 1.0 - p))
        .collect::<Result<Vec<_>>>()?;

    Ok(LossPipelineTrace {
        l_raw: raw.to_vec(),
        l_clipped: clipped,
        l_meannorm: meannorm,
        l_minmax: minmax,
        lambda,
        l_mean: mean,
        l_var: var,
    })
}

/// 1-based ascending loss ranks; ties keep input order.
pub fn loss_ranks(losses: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..losses.len()).collect();
    order.sort_by(|&i, &j| losses[i].total_cmp(&losses[j]));
    let mut ranks = vec![0; losses.len()];
    for (r, i) in order.into_iter().enumerate() {
        ranks[i] = r + 1;
    }
    ranks
}

/// Rank-based baseline: `lambda_i = 1 - I_{rank_i / B}(alpha, beta)`.
pub fn rank_policy(batch: &BatchLosses, ibf: &IbfParams) -> Result<Vec<f64>> {
    let b = batch.len() as f64;
    loss_ranks(batch.as_slice())
        .into_iter()
        .map(|r| regularized_ibf(r as f64 / b, ibf).map(|p| 1.0 - p))
        .collect()
}

/// Number of times each operator is applied to one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AugCounts {
    pub n_time_mask: usize,
    pub n_freq_mask: usize,
    pub n_time_sub: usize,
}

impl AugCounts {
    /// Fixed SpecAugment + SpecSub strength.
    pub const FIXED: AugCounts = AugCounts {
        n_time_mask: 2,
        n_freq_mask: 2,
        n_time_sub: 1,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountPath {
    Adaptive,
    Fixed,
}

/// Multipliers `m` in `ceil(m * lambda)` for each operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountMultipliers {
    pub time_mask: f64,
    pub freq_mask: f64,
    pub time_sub: f64,
}

impl Default for CountMultipliers {
    fn default() -> Self {
        CountMultipliers {
            time_mask: 4.0,
            freq_mask: 4.0,
            time_sub: 2.0,
        }
    }
}

impl CountMultipliers {
    pub fn validate(&self) -> Result<()> {
        for (name, m) in [
            ("time_mask", self.time_mask),
            ("freq_mask", self.freq_mask),
            ("time_sub", self.time_sub),
        ] {
            if !(m.is_finite() && (0.0..=1.0e3).contains(&m)) {
                return Err(Error::Invalid(format!(
                    "count multiplier {name} must lie in [0, 1000], got {m}"
                )));
            }
        }
        Ok(())
    }
}

pub fn counts_from_lambda(lambda: f64, path: CountPath, mult: &CountMultipliers) -> Result<AugCounts> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Invalid(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    Ok(match path {
        CountPath::Fixed => AugCounts::FIXED,
        CountPath::Adaptive => AugCounts {
            n_time_mask: (mult.time_mask * lambda).ceil() as usize,
            n_freq_mask: (mult.freq_mask * lambda).ceil() as usize,
            n_time_sub: (mult.time_sub * lambda).ceil() as usize,
        },
    })
}
