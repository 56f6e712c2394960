//! Epoch-driven probabilities of taking the adaptive count path.
//!
//! `epoch_policy = I_{epoch / total}(alpha, beta)`, then each channel maps it
//! affinely onto its own `[p_start, p_end]` interval.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ibf::{regularized_ibf, IbfParams};

/// Probability range swept by one gate channel over training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelRange {
    pub p_start: f64,
    pub p_end: f64,
}

impl Default for ChannelRange {
    fn default() -> Self {
        ChannelRange {
            p_start: 0.0,
            p_end: 1.0,
        }
    }
}

impl ChannelRange {
    pub fn constant(p: f64) -> Self {
        ChannelRange { p_start: p, p_end: p }
    }

    fn at(&self, epoch_policy: f64) -> f64 {
        (self.p_start + (self.p_end - self.p_start) * epoch_policy).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub total_epochs: usize,
    pub ibf: IbfParams,
    pub mask: ChannelRange,
    pub sub: ChannelRange,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            total_epochs: 100,
            ibf: IbfParams::default(),
            mask: ChannelRange::default(),
            sub: ChannelRange::default(),
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total_epochs == 0 {
            return Err(Error::Invalid("schedule total_epochs must be >= 1".into()));
        }
        for (name, ch) in [("mask", self.mask), ("sub", self.sub)] {
            let ok = (0.0..=1.0).contains(&ch.p_start)
                && (0.0..=1.0).contains(&ch.p_end)
                && ch.p_start <= ch.p_end;
            if !ok {
                return Err(Error::Invalid(format!(
                    "schedule channel {name} needs 0 <= p_start <= p_end <= 1, got {} and {}",
                    ch.p_start, ch.p_end
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleState {
    pub epoch: usize,
    pub epoch_policy: f64,
    pub p_mask: f64,
    pub p_sub: f64,
}

/// Gate probabilities at a 0-based `epoch`, which may not exceed `total_epochs`.
pub fn schedule_at(epoch: usize, config: &ScheduleConfig) -> Result<ScheduleState> {
    config.validate()?;
    if epoch > config.total_epochs {
        return Err(Error::Invalid(format!(
            "epoch {epoch} is past the schedule's total of {}",
            config.total_epochs
        )));
    }
    let epoch_policy = regularized_ibf(epoch as f64 / config.total_epochs as f64, &config.ibf)?;
    Ok(ScheduleState {
        epoch,
        epoch_policy,
        p_mask: config.mask.at(epoch_policy),
        p_sub: config.sub.at(epoch_policy),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_midpoint() {
        let cfg = ScheduleConfig::default();
        let s0 = schedule_at(0, &cfg).unwrap();
        assert_eq!((s0.epoch_policy, s0.p_mask, s0.p_sub), (0.0, 0.0, 0.0));
        let s100 = schedule_at(100, &cfg).unwrap();
        assert_eq!((s100.epoch_policy, s100.p_mask, s100.p_sub), (1.0, 1.0, 1.0));
        let s50 = schedule_at(50, &cfg).unwrap();
        assert!((s50.p_mask - 0.5).abs() < 1e-15);
        assert!((s50.p_sub - 0.5).abs() < 1e-15);
    }

    #[test]
    fn channels_follow_their_own_ranges() {
        let cfg = ScheduleConfig {
            total_epochs: 10,
            mask: ChannelRange {
                p_start: 0.2,
                p_end: 0.6,
            },
            sub: ChannelRange::constant(0.9),
            ..Default::default()
        };
        let s = schedule_at(5, &cfg).unwrap();
        assert!((s.p_mask - 0.4).abs() < 1e-15);
        assert_eq!(s.p_sub, 0.9);
    }

    #[test]
    fn epoch_past_total_is_rejected() {
        assert!(schedule_at(101, &ScheduleConfig::default()).is_err());
    }

    #[test]
    fn decreasing_range_is_rejected() {
        let cfg = ScheduleConfig {
            mask: ChannelRange {
                p_start: 0.8,
                p_end: 0.2,
            },
            ..Default::default()
        };
        assert!(schedule_at(0, &cfg).is_err());
        let cfg = ScheduleConfig {
            total_epochs: 0,
            ..Default::default()
        };
        assert!(schedule_at(0, &cfg).is_err());
    }
}
