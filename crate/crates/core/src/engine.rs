//! One training step's augmentation.
//!
//! For a batch of features and their pre-augmentation losses, the engine
//!
//! 1. evaluates the progressive schedule at `epoch + epoch_offset`;
//! 2. computes per-sample `lambda` with the configured policy;
//! 3. flips two gates per sample, one for the mask channel (time and
//!    frequency masks share it) and one for the substitution channel, each
//!    choosing the adaptive or the fixed count row;
//! 4. plans and applies the operator events.
//!
//! In the pretrain stage steps 1-3 are skipped and every sample gets the
//! fixed counts. Each sample's stream is consumed in a fixed order: mask
//! gate variate, sub gate variate, time masks, frequency masks, time
//! substitutions. The two gate variates are drawn on every path, so a
//! sample whose gates both land on the fixed row produces exactly the same
//! events as it would in the pretrain stage.

use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ibf::IbfParams;
use crate::policy::{
    counts_from_lambda, hybrid_normalize, rank_policy, AugCounts, BatchLosses, ClipSpread,
    CountMultipliers, CountPath, LossPipelineTrace,
};
use crate::rng::derive_sample_stream;
use crate::schedule::{schedule_at, ScheduleConfig, ScheduleState};
use crate::spectral::{
    apply_plan, plan_freq_masks, plan_time_masks, plan_time_subs, AugLimits, AugmentationPlan,
    FeatureMatrix, SubSource,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    #[default]
    Hybrid,
    Rank,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Fixed augmentation regardless of losses or schedule.
    Pretrain,
    #[default]
    Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineConfig {
    pub policy: PolicyKind,
    pub stage: Stage,
    pub master_seed: u64,
    /// Added to the caller's epoch before the schedule is evaluated.
    pub epoch_offset: usize,
    /// Shape of the `1 - I_x` transform applied to normalized losses or ranks.
    pub ibf: IbfParams,
    pub clip_spread: ClipSpread,
    pub sub_source: SubSource,
    pub limits: AugLimits,
    pub multipliers: CountMultipliers,
    pub schedule: ScheduleConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            policy: PolicyKind::Hybrid,
            stage: Stage::Adaptive,
            master_seed: 0,
            epoch_offset: 0,
            ibf: IbfParams::default(),
            clip_spread: ClipSpread::Variance,
            sub_source: SubSource::Previous,
            limits: AugLimits::default(),
            multipliers: CountMultipliers::default(),
            schedule: ScheduleConfig::default(),
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        self.limits.validate()?;
        self.multipliers.validate()?;
        self.schedule.validate()
    }

    fn is_adaptive(&self) -> bool {
        self.stage == Stage::Adaptive && self.policy != PolicyKind::Fixed
    }
}

/// Identifies a batch within training; keys the per-sample streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BatchPosition {
    pub epoch: usize,
    pub batch_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleReport {
    pub sample_id: String,
    /// Absent when no policy was evaluated (pretrain stage or fixed policy).
    pub lambda: Option<f64>,
    pub gate_mask: CountPath,
    pub gate_sub: CountPath,
    pub counts: AugCounts,
    pub plan: AugmentationPlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchHeader {
    pub epoch: usize,
    pub batch_index: usize,
    pub stage: Stage,
    pub policy: PolicyKind,
    pub schedule: Option<ScheduleState>,
    /// Present for the hybrid policy only.
    pub trace: Option<LossPipelineTrace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchAugReport {
    pub header: BatchHeader,
    pub samples: Vec<SampleReport>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum ReportLine {
    Batch(BatchHeader),
    Sample(SampleReport),
}

impl BatchAugReport {
    /// Replaces the default index-based sample ids.
    pub fn with_ids<S: AsRef<str>>(mut self, ids: &[S]) -> Result<Self> {
        if ids.len() != self.samples.len() {
            return Err(Error::Invalid(format!(
                "{} ids for {} samples",
                ids.len(),
                self.samples.len()
            )));
        }
        for (s, id) in self.samples.iter_mut().zip(ids) {
            s.sample_id = id.as_ref().to_owned();
        }
        Ok(self)
    }

    pub fn lambdas(&self) -> Vec<Option<f64>> {
        self.samples.iter().map(|s| s.lambda).collect()
    }

    /// Writes one JSON object per line: the batch header, then one line per sample.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        serde_json::to_writer(&mut out, &ReportLine::Batch(self.header.clone()))?;
        out.write_all(b"\n")?;
        for s in &self.samples {
            serde_json::to_writer(&mut out, &ReportLine::Sample(s.clone()))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Writes only the batch header line.
    pub fn write_header_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        serde_json::to_writer(&mut out, &ReportLine::Batch(self.header.clone()))?;
        out.write_all(b"\n")
    }

    /// Reads every batch from a JSON-lines report stream.
    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<BatchAugReport>> {
        let mut reports: Vec<BatchAugReport> = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::Invalid(format!("report line {}: {e}", i + 1)))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: ReportLine = serde_json::from_str(&line)
                .map_err(|e| Error::Invalid(format!("report line {}: {e}", i + 1)))?;
            match parsed {
                ReportLine::Batch(header) => reports.push(BatchAugReport {
                    header,
                    samples: Vec::new(),
                }),
                ReportLine::Sample(s) => reports
                    .last_mut()
                    .ok_or_else(|| {
                        Error::Invalid(format!("report line {}: sample before any batch header", i + 1))
                    })?
                    .samples
                    .push(s),
            }
        }
        Ok(reports)
    }
}

/// Augments one batch. Returns the augmented features in input order.
pub fn augment_batch(
    features: &[FeatureMatrix],
    losses: &BatchLosses,
    position: BatchPosition,
    config: &EngineConfig,
) -> Result<(Vec<FeatureMatrix>, BatchAugReport)> {
    config.validate()?;
    if features.len() != losses.len() {
        return Err(Error::Invalid(format!(
            "{} feature matrices but {} losses",
            features.len(),
            losses.len()
        )));
    }

    let (schedule, lambdas, trace) = if config.is_adaptive() {
        let schedule = schedule_at(position.epoch + config.epoch_offset, &config.schedule)?;
        let (lambdas, trace) = match config.policy {
            PolicyKind::Hybrid => {
                let t = hybrid_normalize(losses, &config.ibf, config.clip_spread)?;
                (t.lambda.clone(), Some(t))
            }
            PolicyKind::Rank => (rank_policy(losses, &config.ibf)?, None),
            PolicyKind::Fixed => unreachable!("fixed policy never takes the adaptive branch"),
        };
        (Some(schedule), Some(lambdas), trace)
    } else {
        (None, None, None)
    };

    let results: Vec<(FeatureMatrix, SampleReport)> = features
        .par_iter()
        .enumerate()
        .map(|(i, matrix)| {
            let lambda = lambdas.as_ref().map(|l| l[i]);
            augment_sample(i, matrix, lambda, schedule.as_ref(), position, config)
        })
        .collect::<Result<_>>()?;

    let (augmented, samples) = results.into_iter().unzip();
    let report = BatchAugReport {
        header: BatchHeader {
            epoch: position.epoch,
            batch_index: position.batch_index,
            stage: config.stage,
            policy: config.policy,
            schedule,
            trace,
        },
        samples,
    };
    Ok((augmented, report))
}

fn augment_sample(
    index: usize,
    matrix: &FeatureMatrix,
    lambda: Option<f64>,
    schedule: Option<&ScheduleState>,
    position: BatchPosition,
    config: &EngineConfig,
) -> Result<(FeatureMatrix, SampleReport)> {
    let mut stream = derive_sample_stream(
        config.master_seed,
        position.epoch as u64,
        position.batch_index as u64,
        index as u64,
    );
    let u_mask = stream.unit();
    let u_sub = stream.unit();

    let (gate_mask, gate_sub) = match schedule {
        Some(s) => (gate(u_mask, s.p_mask), gate(u_sub, s.p_sub)),
        None => (CountPath::Fixed, CountPath::Fixed),
    };
    let mask_counts = counts_for(lambda, gate_mask, &config.multipliers)?;
    let sub_counts = counts_for(lambda, gate_sub, &config.multipliers)?;
    let counts = AugCounts {
        n_time_mask: mask_counts.n_time_mask,
        n_freq_mask: mask_counts.n_freq_mask,
        n_time_sub: sub_counts.n_time_sub,
    };

    let dims = matrix.dims();
    let mut events = plan_time_masks(counts.n_time_mask, dims, &config.limits, &mut stream);
    events.extend(plan_freq_masks(counts.n_freq_mask, dims, &config.limits, &mut stream));
    events.extend(plan_time_subs(
        counts.n_time_sub,
        dims,
        &config.limits,
        config.sub_source,
        &mut stream,
    ));
    let plan = AugmentationPlan::new(events);
    let augmented = apply_plan(matrix, &plan)?;

    Ok((
        augmented,
        SampleReport {
            sample_id: index.to_string(),
            lambda,
            gate_mask,
            gate_sub,
            counts,
            plan,
        },
    ))
}

fn gate(u: f64, p: f64) -> CountPath {
    if u < p {
        CountPath::Adaptive
    } else {
        CountPath::Fixed
    }
}

fn counts_for(lambda: Option<f64>, path: CountPath, mult: &CountMultipliers) -> Result<AugCounts> {
    match (path, lambda) {
        (CountPath::Adaptive, Some(l)) => counts_from_lambda(l, path, mult),
        _ => Ok(AugCounts::FIXED),
    }
}

/// Re-applies the plans recorded in `report` to the original features.
pub fn replay(features: &[FeatureMatrix], report: &BatchAugReport) -> Result<Vec<FeatureMatrix>> {
    if features.len() != report.samples.len() {
        return Err(Error::Invalid(format!(
            "{} feature matrices but {} report entries",
            features.len(),
            report.samples.len()
        )));
    }
    features
        .iter()
        .zip(&report.samples)
        .map(|(m, s)| apply_plan(m, &s.plan))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::ChannelRange;

    fn batch(n: usize) -> Vec<FeatureMatrix> {
        (0..n)
            .map(|k| FeatureMatrix::from_fn(100, 80, |t, f| ((t * 80 + f + k) % 17) as f32 + 0.5).unwrap())
            .collect()
    }

    fn losses(v: &[f64]) -> BatchLosses {
        BatchLosses::new(v.to_vec()).unwrap()
    }

    #[test]
    fn pretrain_uses_fixed_counts() {
        let cfg = EngineConfig {
            stage: Stage::Pretrain,
            ..Default::default()
        };
        let pos = BatchPosition {
            epoch: 70,
            batch_index: 3,
        };
        let (_, report) = augment_batch(&batch(4), &losses(&[1.0, 2.0, 3.0, 4.0]), pos, &cfg).unwrap();
        assert!(report.header.schedule.is_none());
        for s in &report.samples {
            assert_eq!(s.counts, AugCounts::FIXED);
            assert_eq!((s.gate_mask, s.gate_sub), (CountPath::Fixed, CountPath::Fixed));
            assert_eq!(s.plan.events.len(), 5);
            assert_eq!(s.lambda, None);
        }
    }

    #[test]
    fn epoch_zero_matches_pretrain() {
        let feats = batch(4);
        let l = losses(&[1.0, 2.0, 3.0, 4.0]);
        let pos = BatchPosition::default();
        let adaptive = EngineConfig::default();
        let pretrain = EngineConfig {
            stage: Stage::Pretrain,
            ..Default::default()
        };
        let (a, ra) = augment_batch(&feats, &l, pos, &adaptive).unwrap();
        let (b, _) = augment_batch(&feats, &l, pos, &pretrain).unwrap();
        assert_eq!(a, b);
        assert!(ra.samples.iter().all(|s| s.counts == AugCounts::FIXED));
    }

    #[test]
    fn final_epoch_uses_lambda_counts() {
        let cfg = EngineConfig::default();
        let pos = BatchPosition {
            epoch: cfg.schedule.total_epochs,
            batch_index: 0,
        };
        let (_, report) = augment_batch(&batch(4), &losses(&[1.0, 2.0, 3.0, 4.0]), pos, &cfg).unwrap();
        let counts: Vec<_> = report
            .samples
            .iter()
            .map(|s| (s.counts.n_time_mask, s.counts.n_freq_mask, s.counts.n_time_sub))
            .collect();
        assert_eq!(counts, vec![(4, 4, 2), (3, 3, 2), (1, 1, 1), (0, 0, 0)]);
        assert!(report
            .samples
            .iter()
            .all(|s| s.gate_mask == CountPath::Adaptive && s.gate_sub == CountPath::Adaptive));
    }

    #[test]
    fn replay_and_jsonl_roundtrip() {
        let feats = batch(3);
        let cfg = EngineConfig {
            schedule: ScheduleConfig {
                mask: ChannelRange::constant(0.5),
                sub: ChannelRange::constant(0.5),
                ..Default::default()
            },
            master_seed: 99,
            ..Default::default()
        };
        let pos = BatchPosition {
            epoch: 4,
            batch_index: 1,
        };
        let (out, report) = augment_batch(&feats, &losses(&[0.2, 0.9, 3.1]), pos, &cfg).unwrap();
        assert_eq!(replay(&feats, &report).unwrap(), out);

        let report = report.with_ids(&["a", "b", "c"]).unwrap();
        let mut buf = Vec::new();
        report.write_jsonl(&mut buf).unwrap();
        assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), 4);
        let back = BatchAugReport::read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, vec![report]);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let err = augment_batch(&batch(2), &losses(&[1.0]), BatchPosition::default(), &EngineConfig::default());
        assert!(matches!(err, Err(Error::Invalid(_))));
    }

    #[test]
    fn epoch_offset_shifts_schedule() {
        let cfg = EngineConfig {
            epoch_offset: 25,
            ..Default::default()
        };
        let pos = BatchPosition {
            epoch: 25,
            batch_index: 0,
        };
        let (_, r) = augment_batch(&batch(2), &losses(&[1.0, 2.0]), pos, &cfg).unwrap();
        assert_eq!(r.header.schedule.unwrap().epoch, 50);
        let pos = BatchPosition {
            epoch: 80,
            batch_index: 0,
        };
        assert!(augment_batch(&batch(2), &losses(&[1.0, 2.0]), pos, &cfg).is_err());
    }
}
