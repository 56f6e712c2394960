//! Time masking, frequency masking and time substitution on a `T x F` feature grid.
//!
//! Planning and application are split: `plan_*` functions consume a
//! [`SampleStream`] and produce events, [`apply_plan`] executes them. A plan
//! fully describes the randomness, so applying the same plan twice gives the
//! same output.
//!
//! Draw order per event (part of the determinism contract):
//! - time / frequency mask: width, then start;
//! - time substitution: width, then destination, then source.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SampleStream;

/// Row-major (time-major) grid of filterbank features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    frames: usize,
    bins: usize,
    values: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(frames: usize, bins: usize, values: Vec<f32>) -> Result<Self> {
        if frames == 0 || bins == 0 {
            return Err(Error::Invalid(format!(
                "feature matrix must be at least 1x1, got {frames}x{bins}"
            )));
        }
        let expected = frames.checked_mul(bins).ok_or_else(|| {
            Error::Invalid(format!("feature matrix {frames}x{bins} overflows"))
        })?;
        if values.len() != expected {
            return Err(Error::Invalid(format!(
                "{frames}x{bins} matrix needs {expected} values, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!(
                "non-finite feature value at frame {}, bin {}",
                i / bins,
                i % bins
            )));
        }
        Ok(FeatureMatrix {
            frames,
            bins,
            values,
        })
    }

    pub fn filled(frames: usize, bins: usize, value: f32) -> Result<Self> {
        Self::new(frames, bins, vec![value; frames.saturating_mul(bins)])
    }

    pub fn from_fn(
        frames: usize,
        bins: usize,
        mut f: impl FnMut(usize, usize) -> f32,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(frames.saturating_mul(bins));
        for t in 0..frames {
            for b in 0..bins {
                values.push(f(t, b));
            }
        }
        Self::new(frames, bins, values)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn dims(&self) -> MatrixDims {
        MatrixDims {
            frames: self.frames,
            bins: self.bins,
        }
    }

    pub fn get(&self, frame: usize, bin: usize) -> f32 {
        self.values[frame * self.bins + bin]
    }

    pub fn row(&self, frame: usize) -> &[f32] {
        &self.values[frame * self.bins..(frame + 1) * self.bins]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixDims {
    pub frames: usize,
    pub bins: usize,
}

/// Upper bounds on the extent of each operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugLimits {
    pub max_t_width: usize,
    pub max_f_width: usize,
    pub max_sub_width: usize,
}

impl Default for AugLimits {
    fn default() -> Self {
        AugLimits {
            max_t_width: 50,
            max_f_width: 10,
            max_sub_width: 30,
        }
    }
}

impl AugLimits {
    pub fn validate(&self) -> Result<()> {
        if self.max_t_width == 0 || self.max_f_width == 0 || self.max_sub_width == 0 {
            return Err(Error::Invalid(format!(
                "augmentation limits must all be >= 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Where a time substitution may copy from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubSource {
    /// Source chunk starts at or before the destination.
    #[default]
    Previous,
    /// Source chunk may start anywhere it fits.
    Anywhere,
}

/// One stochastic choice of an operator, with inclusive mask bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum AugEvent {
    TimeMask { t1: usize, t2: usize },
    FreqMask { f1: usize, f2: usize },
    TimeSub { dest_t: usize, src_t: usize, width: usize },
}

impl AugEvent {
    fn check(&self, dims: MatrixDims) -> Result<()> {
        let ok = match *self {
            AugEvent::TimeMask { t1, t2 } => t1 <= t2 && t2 < dims.frames,
            AugEvent::FreqMask { f1, f2 } => f1 <= f2 && f2 < dims.bins,
            AugEvent::TimeSub {
                dest_t,
                src_t,
                width,
            } => {
                width >= 1
                    && dest_t.checked_add(width).is_some_and(|e| e <= dims.frames)
                    && src_t.checked_add(width).is_some_and(|e| e <= dims.frames)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!(
                "event {self:?} does not fit a {}x{} matrix",
                dims.frames, dims.bins
            )))
        }
    }
}

/// Ordered list of events for one sample.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AugmentationPlan {
    pub events: Vec<AugEvent>,
}

impl AugmentationPlan {
    pub fn new(events: Vec<AugEvent>) -> Self {
        AugmentationPlan { events }
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn validate(&self, dims: MatrixDims) -> Result<()> {
        self.events.iter().try_for_each(|e| e.check(dims))
    }
}

fn plan_masks(n: usize, extent: usize, max_width: usize, stream: &mut SampleStream) -> Vec<(usize, usize)> {
    let width_cap = max_width.min(extent - 1);
    (0..n)
        .map(|_| {
            let width = stream.uniform_inclusive(0, width_cap);
            let start = stream.uniform_inclusive(0, extent - 1 - width);
            (start, start + width)
        })
        .collect()
}

/// Plans `n` time masks. Widths are uniform in `0..=min(max_t_width, T - 1)`.
pub fn plan_time_masks(
    n: usize,
    dims: MatrixDims,
    limits: &AugLimits,
    stream: &mut SampleStream,
) -> Vec<AugEvent> {
    plan_masks(n, dims.frames, limits.max_t_width, stream)
        .into_iter()
        .map(|(t1, t2)| AugEvent::TimeMask { t1, t2 })
        .collect()
}

/// Plans `n` frequency masks over the bin axis.
pub fn plan_freq_masks(
    n: usize,
    dims: MatrixDims,
    limits: &AugLimits,
    stream: &mut SampleStream,
) -> Vec<AugEvent> {
    plan_masks(n, dims.bins, limits.max_f_width, stream)
        .into_iter()
        .map(|(f1, f2)| AugEvent::FreqMask { f1, f2 })
        .collect()
}

/// Plans `n` time substitutions.
pub fn plan_time_subs(
    n: usize,
    dims: MatrixDims,
    limits: &AugLimits,
    source: SubSource,
    stream: &mut SampleStream,
) -> Vec<AugEvent> {
    let width_cap = limits.max_sub_width.min(dims.frames);
    (0..n)
        .map(|_| {
            let width = stream.uniform_inclusive(1, width_cap);
            let dest_t = stream.uniform_inclusive(0, dims.frames - width);
            let src_hi = match source {
                SubSource::Previous => dest_t,
                SubSource::Anywhere => dims.frames - width,
            };
            let src_t = stream.uniform_inclusive(0, src_hi);
            AugEvent::TimeSub {
                dest_t,
                src_t,
                width,
            }
        })
        .collect()
}

/// Applies `plan` to a copy of `matrix`, event by event.
///
/// Each substitution reads the matrix as left by the events before it.
pub fn apply_plan(matrix: &FeatureMatrix, plan: &AugmentationPlan) -> Result<FeatureMatrix> {
    plan.validate(matrix.dims())?;
    let bins = matrix.bins;
    let mut out = matrix.values.clone();
    for event in &plan.events {
        match *event {
            AugEvent::TimeMask { t1, t2 } => {
                out[t1 * bins..(t2 + 1) * bins].fill(0.0);
            }
            AugEvent::FreqMask { f1, f2 } => {
                for row in out.chunks_exact_mut(bins) {
                    row[f1..=f2].fill(0.0);
                }
            }
            AugEvent::TimeSub {
                dest_t,
                src_t,
                width,
            } => {
                out.copy_within(src_t * bins..(src_t + width) * bins, dest_t * bins);
            }
        }
    }
    Ok(FeatureMatrix {
        frames: matrix.frames,
        bins,
        values: out,
    })
}
