//! Sample-adaptive spectrogram augmentation.
//!
//! Per-sample training losses are turned into augmentation strengths
//! ([`policy`]), an epoch schedule decides how often the adaptive strength
//! is used instead of the fixed one ([`schedule`]), and the [`engine`]
//! plans and applies time masks, frequency masks and time substitutions
//! ([`spectral`]) with per-sample deterministic random streams ([`rng`]).

pub mod engine;
pub mod error;
pub mod ibf;
pub mod io;
pub mod policy;
pub mod rng;
pub mod schedule;
pub mod sim;
pub mod spectral;

pub use engine::{augment_batch, replay, BatchAugReport, BatchPosition, EngineConfig, PolicyKind, Stage};
pub use error::{Error, Result};
pub use ibf::{regularized_ibf, IbfParams};
pub use policy::{
    counts_from_lambda, hybrid_normalize, rank_policy, AugCounts, BatchLosses, ClipSpread, CountPath,
    LossPipelineTrace,
};
pub use schedule::{schedule_at, ScheduleConfig, ScheduleState};
pub use spectral::{apply_plan, AugEvent, AugLimits, AugmentationPlan, FeatureMatrix};

/// Library version; host-language wrappers report the same string.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
