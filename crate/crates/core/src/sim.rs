//! Closed-loop training harness on synthetic spectrogram-like data.
//!
//! A softmax-linear classifier over flattened features is trained with plain
//! mini-batch gradient descent. Each step measures per-sample losses on the
//! clean features, hands them to the engine, and takes the gradient step on
//! the augmented features. The model is deliberately tiny: the harness
//! exercises the loss -> policy -> augmentation loop, not recognition quality.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::engine::{augment_batch, BatchAugReport, BatchPosition, EngineConfig, Stage};
use crate::error::{Error, Result};
use crate::policy::{BatchLosses, CountPath};
use crate::rng::stream_key;
use crate::spectral::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticTask {
    pub num_classes: usize,
    pub samples_per_class: usize,
    pub eval_per_class: usize,
    pub frames: usize,
    pub bins: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticTask {
    fn default() -> Self {
        SyntheticTask {
            num_classes: 4,
            samples_per_class: 200,
            eval_per_class: 50,
            frames: 64,
            bins: 16,
            noise: 0.3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Example {
    pub features: FeatureMatrix,
    pub label: usize,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<Example>,
    pub eval: Vec<Example>,
}

impl SyntheticTask {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 || self.samples_per_class == 0 || self.frames == 0 || self.bins == 0 {
            return Err(Error::Invalid(format!(
                "synthetic task needs >= 2 classes and non-empty dims, got {self:?}"
            )));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::Invalid(format!("noise must be finite and >= 0, got {}", self.noise)));
        }
        Ok(())
    }

    /// Noise-free pattern of class `k`: a frequency band whose energy is
    /// modulated over time at a class-specific rate.
    pub fn template(&self, k: usize) -> FeatureMatrix {
        let k_f = k as f64;
        let band_width = (self.bins as f64 / self.num_classes as f64).max(1.0);
        let center = (k_f + 0.5) * band_width;
        FeatureMatrix::from_fn(self.frames, self.bins, |t, f| {
            let d = (f as f64 - center) / band_width;
            let band = (-0.5 * d * d).exp();
            let phase = std::f64::consts::TAU * (k_f + 1.0) * t as f64 / self.frames as f64;
            (band * (0.5 + 0.5 * phase.cos())) as f32
        })
        .expect("template dims are validated")
    }

    pub fn generate(&self) -> Result<Dataset> {
        self.validate()?;
        let templates: Vec<FeatureMatrix> = (0..self.num_classes).map(|k| self.template(k)).collect();
        let noise = Normal::new(0.0, self.noise).map_err(|e| Error::Invalid(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut draw = |per_class: usize| -> Result<Vec<Example>> {
            let mut out = Vec::with_capacity(per_class * self.num_classes);
            for _ in 0..per_class {
                for (label, tpl) in templates.iter().enumerate() {
                    let values = tpl
                        .values()
                        .iter()
                        .map(|&v| v + noise.sample(&mut rng) as f32)
                        .collect();
                    out.push(Example {
                        features: FeatureMatrix::new(self.frames, self.bins, values)?,
                        label,
                    });
                }
            }
            Ok(out)
        };
        let train = draw(self.samples_per_class)?;
        let eval = draw(self.eval_per_class)?;
        Ok(Dataset { train, eval })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Fixed augmentation for `pretrain_epochs`.
    Fixed,
    /// Adaptive augmentation from scratch for `adaptive_epochs`.
    Adaptive,
    /// `pretrain_epochs` fixed, then `adaptive_epochs` adaptive on the same model.
    TwoStage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub regime: Regime,
    pub pretrain_epochs: usize,
    pub adaptive_epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub engine: EngineConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            regime: Regime::TwoStage,
            pretrain_epochs: 10,
            adaptive_epochs: 20,
            learning_rate: 0.01,
            batch_size: 32,
            engine: EngineConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let needs_pretrain = matches!(self.regime, Regime::Fixed | Regime::TwoStage);
        let needs_adaptive = matches!(self.regime, Regime::Adaptive | Regime::TwoStage);
        if (needs_pretrain && self.pretrain_epochs == 0) || (needs_adaptive && self.adaptive_epochs == 0) {
            return Err(Error::Invalid("every stage of the regime needs >= 1 epoch".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Invalid(format!("batch size must be >= 2, got {}", self.batch_size)));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Invalid(format!("learning rate must be > 0, got {}", self.learning_rate)));
        }
        self.engine.validate()
    }

    /// The stages to run, in order, as (stage, epoch count).
    fn stages(&self) -> Vec<(Stage, usize)> {
        match self.regime {
            Regime::Fixed => vec![(Stage::Pretrain, self.pretrain_epochs)],
            Regime::Adaptive => vec![(Stage::Adaptive, self.adaptive_epochs)],
            Regime::TwoStage => vec![
                (Stage::Pretrain, self.pretrain_epochs),
                (Stage::Adaptive, self.adaptive_epochs),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub stage: Stage,
    /// Mean clean (pre-augmentation) training loss over the epoch.
    pub mean_loss: f64,
    pub eval_accuracy: f64,
    /// Absent when no policy was evaluated during the epoch.
    pub mean_lambda: Option<f64>,
    pub gate_rate_mask: f64,
    pub gate_rate_sub: f64,
    pub mean_n_time_mask: f64,
    pub mean_n_freq_mask: f64,
    pub mean_n_time_sub: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimMetrics {
    pub epochs: Vec<EpochMetrics>,
}

impl SimMetrics {
    pub const CSV_HEADER: &'static str = "epoch,stage,mean_loss,eval_accuracy,mean_lambda,gate_rate_mask,gate_rate_sub,mean_n_time_mask,mean_n_freq_mask,mean_n_time_sub";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for m in &self.epochs {
            let stage = match m.stage {
                Stage::Pretrain => "pretrain",
                Stage::Adaptive => "adaptive",
            };
            let lambda = m.mean_lambda.map(|l| l.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                m.epoch,
                stage,
                m.mean_loss,
                m.eval_accuracy,
                lambda,
                m.gate_rate_mask,
                m.gate_rate_sub,
                m.mean_n_time_mask,
                m.mean_n_freq_mask,
                m.mean_n_time_sub
            )
            .unwrap();
        }
        out
    }
}

/// Softmax-linear classifier.
struct LinearModel {
    classes: usize,
    dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl LinearModel {
    fn new(classes: usize, dim: usize) -> Self {
        LinearModel {
            classes,
            dim,
            weights: vec![0.0; classes * dim],
            bias: vec![0.0; classes],
        }
    }

    fn logits(&self, x: &[f32]) -> Vec<f64> {
        (0..self.classes)
            .map(|k| {
                let w = &self.weights[k * self.dim..(k + 1) * self.dim];
                self.bias[k] + w.iter().zip(x).map(|(&w, &x)| w * x as f64).sum::<f64>()
            })
            .collect()
    }

    fn probs(&self, x: &[f32]) -> Vec<f64> {
        let mut logits = self.logits(x);
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for l in &mut logits {
            *l = (*l - max).exp();
            total += *l;
        }
        logits.iter_mut().for_each(|l| *l /= total);
        logits
    }

    /// Cross-entropy via log-sum-exp; non-finite only if the logits are.
    fn loss(&self, x: &[f32], label: usize) -> f64 {
        let logits = self.logits(x);
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        lse - logits[label]
    }

    fn predict(&self, x: &[f32]) -> usize {
        let p = self.probs(x);
        (0..self.classes).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap()
    }

    fn step(&mut self, batch: &[(&[f32], usize)], lr: f64) {
        let scale = lr / batch.len() as f64;
        let mut grad_w = vec![0.0; self.weights.len()];
        let mut grad_b = vec![0.0; self.classes];
        for &(x, label) in batch {
            let mut p = self.probs(x);
            p[label] -= 1.0;
            for (k, &g) in p.iter().enumerate() {
                grad_b[k] += g;
                let row = &mut grad_w[k * self.dim..(k + 1) * self.dim];
                for (gw, &xv) in row.iter_mut().zip(x) {
                    *gw += g * xv as f64;
                }
            }
        }
        for (w, g) in self.weights.iter_mut().zip(&grad_w) {
            *w -= scale * g;
        }
        for (b, g) in self.bias.iter_mut().zip(&grad_b) {
            *b -= scale * g;
        }
    }
}

/// Runs the configured regime and returns one metrics row per epoch.
pub fn run_simulation(task: &SyntheticTask, config: &SimConfig) -> Result<SimMetrics> {
    run_simulation_with(task, config, |_| {})
}

/// Like [`run_simulation`], calling `observe` with every batch report.
pub fn run_simulation_with(
    task: &SyntheticTask,
    config: &SimConfig,
    mut observe: impl FnMut(&BatchAugReport),
) -> Result<SimMetrics> {
    config.validate()?;
    let data = task.generate()?;
    let mut model = LinearModel::new(task.num_classes, task.frames * task.bins);
    let mut metrics = SimMetrics::default();
    let mut global_epoch = 0;

    for (stage_index, (stage, epochs)) in config.stages().into_iter().enumerate() {
        let mut engine = config.engine.clone();
        engine.stage = stage;
        // each stage is its own run: schedule restarts and reaches p_end on the last epoch
        engine.schedule.total_epochs = engine.epoch_offset + epochs.saturating_sub(1).max(1);
        engine.master_seed = config.engine.master_seed.wrapping_add(stage_index as u64);

        for epoch in 0..epochs {
            let row = run_epoch(&mut model, &data, config, &engine, epoch, global_epoch, task.seed, &mut observe)?;
            metrics.epochs.push(row);
            global_epoch += 1;
        }
    }
    Ok(metrics)
}

#[allow(clippy::too_many_arguments)]
fn run_epoch(
    model: &mut LinearModel,
    data: &Dataset,
    config: &SimConfig,
    engine: &EngineConfig,
    epoch: usize,
    global_epoch: usize,
    shuffle_seed: u64,
    observe: &mut impl FnMut(&BatchAugReport),
) -> Result<EpochMetrics> {
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(stream_key(shuffle_seed, global_epoch as u64, u64::MAX, 0));
    order.shuffle(&mut shuffle_rng);

    let mut loss_sum = 0.0;
    let mut lambda_sum = 0.0;
    let mut lambda_n = 0usize;
    let (mut gate_mask, mut gate_sub) = (0usize, 0usize);
    let (mut n_t, mut n_f, mut n_s) = (0usize, 0usize, 0usize);

    for (batch_index, chunk) in order.chunks(config.batch_size).enumerate() {
        let examples: Vec<&Example> = chunk.iter().map(|&i| &data.train[i]).collect();
        let losses: Vec<f64> = examples
            .iter()
            .map(|e| model.loss(e.features.values(), e.label))
            .collect();
        if let Some(bad) = losses.iter().find(|l| !l.is_finite()) {
            return Err(Error::Diverged {
                epoch: global_epoch,
                batch: batch_index,
                message: format!("non-finite loss {bad}"),
            });
        }
        loss_sum += losses.iter().sum::<f64>();

        let features: Vec<FeatureMatrix> = examples.iter().map(|e| e.features.clone()).collect();
        let position = BatchPosition { epoch, batch_index };
        let (augmented, report) = augment_batch(&features, &BatchLosses::new(losses)?, position, engine)?;
        observe(&report);

        for s in &report.samples {
            if let Some(l) = s.lambda {
                lambda_sum += l;
                lambda_n += 1;
            }
            gate_mask += (s.gate_mask == CountPath::Adaptive) as usize;
            gate_sub += (s.gate_sub == CountPath::Adaptive) as usize;
            n_t += s.counts.n_time_mask;
            n_f += s.counts.n_freq_mask;
            n_s += s.counts.n_time_sub;
        }

        let step_batch: Vec<(&[f32], usize)> = augmented
            .iter()
            .zip(&examples)
            .map(|(m, e)| (m.values(), e.label))
            .collect();
        model.step(&step_batch, config.learning_rate);
    }

    let n = data.train.len() as f64;
    let correct = data
        .eval
        .iter()
        .filter(|e| model.predict(e.features.values()) == e.label)
        .count();
    Ok(EpochMetrics {
        epoch: global_epoch,
        stage: engine.stage,
        mean_loss: loss_sum / n,
        eval_accuracy: if data.eval.is_empty() {
            0.0
        } else {
            correct as f64 / data.eval.len() as f64
        },
        mean_lambda: (lambda_n > 0).then(|| lambda_sum / lambda_n as f64),
        gate_rate_mask: gate_mask as f64 / n,
        gate_rate_sub: gate_sub as f64 / n,
        mean_n_time_mask: n_t as f64 / n,
        mean_n_freq_mask: n_f as f64 / n,
        mean_n_time_sub: n_s as f64 / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_task() -> SyntheticTask {
        SyntheticTask {
            samples_per_class: 40,
            eval_per_class: 10,
            ..Default::default()
        }
    }

    #[test]
    fn dataset_is_reproducible() {
        let t = small_task();
        let a = t.generate().unwrap();
        let b = t.generate().unwrap();
        assert_eq!(a.train.len(), 160);
        for (x, y) in a.train.iter().zip(&b.train) {
            assert_eq!(x.features, y.features);
            assert_eq!(x.label, y.label);
        }
        let other = SyntheticTask { seed: 1, ..t }.generate().unwrap();
        assert_ne!(a.train[0].features, other.train[0].features);
    }

    #[test]
    fn fixed_regime_has_constant_counts() {
        let cfg = SimConfig {
            regime: Regime::Fixed,
            pretrain_epochs: 5,
            ..Default::default()
        };
        let m = run_simulation(&small_task(), &cfg).unwrap();
        assert_eq!(m.epochs.len(), 5);
        for row in &m.epochs {
            assert_eq!(
                (row.mean_n_time_mask, row.mean_n_freq_mask, row.mean_n_time_sub),
                (2.0, 2.0, 1.0)
            );
            assert_eq!(row.gate_rate_mask, 0.0);
            assert_eq!(row.mean_lambda, None);
        }
        assert!(m.epochs[4].mean_loss < m.epochs[0].mean_loss);
    }

    #[test]
    fn csv_shape() {
        let cfg = SimConfig {
            regime: Regime::TwoStage,
            pretrain_epochs: 2,
            adaptive_epochs: 3,
            ..Default::default()
        };
        let csv = run_simulation(&small_task(), &cfg).unwrap().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[0], SimMetrics::CSV_HEADER);
        assert!(lines[1].starts_with("0,pretrain,"));
        assert!(lines[5].starts_with("4,adaptive,"));
    }

    #[test]
    fn rejects_bad_configs() {
        let t = small_task();
        let bad = SimConfig {
            batch_size: 1,
            ..Default::default()
        };
        assert!(run_simulation(&t, &bad).is_err());
        let bad = SimConfig {
            regime: Regime::Adaptive,
            adaptive_epochs: 0,
            ..Default::default()
        };
        assert!(run_simulation(&t, &bad).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let cfg = SimConfig {
            regime: Regime::Fixed,
            pretrain_epochs: 3,
            learning_rate: f64::MAX,
            ..Default::default()
        };
        let err = run_simulation(&small_task(), &cfg).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }), "{err}");
    }
}
