use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Model, PreparedPair, TrainingInstance};
use crate::embeddings::EmbeddingStore;
use crate::error::{Error, Result};
use crate::numerics::{adam_step, AdamConfig, AdamState};

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub wall_ms: u128,
    pub dev_metric: Option<f64>,
}

impl EpochLog {
    /// One line-oriented log record.
    pub fn to_record(&self) -> String {
        let mut line = format!(
            "epoch={} mean_loss={:.6} wall_ms={}",
            self.epoch, self.mean_loss, self.wall_ms
        );
        if let Some(m) = self.dev_metric {
            line.push_str(&format!(" dev_metric={m:.6}"));
        }
        line
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    /// Epoch (1-based) whose parameters were kept when a dev metric was used.
    pub best_epoch: Option<usize>,
    pub best_dev_metric: Option<f64>,
}

impl TrainReport {
    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.mean_loss).collect()
    }
}

struct Optimizer {
    states: Vec<AdamState>,
}

impl Optimizer {
    fn new(model: &Model) -> Self {
        let config = AdamConfig {
            learning_rate: model.config.learning_rate,
            ..AdamConfig::default()
        };
        Optimizer {
            states: model
                .tensors()
                .iter()
                .map(|t| AdamState::new(t.len(), config))
                .collect(),
        }
    }

    fn step(&mut self, model: &mut Model, grads: &super::Gradients) -> Result<()> {
        let grads = grads.tensors();
        for ((param, grad), state) in model.tensors_mut().into_iter().zip(grads).zip(&mut self.states) {
            adam_step(param, grad, state)?;
        }
        Ok(())
    }
}

fn validate(model: &Model, store: &EmbeddingStore, data: &[TrainingInstance]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Empty("training data"));
    }
    model.config.validate()?;
    if store.dim() != model.config.embedding_dim {
        return Err(Error::DimensionMismatch {
            expected: model.config.embedding_dim,
            actual: store.dim(),
        });
    }
    Ok(())
}

/// Trains filters and output layer with Adam over shuffled mini-batches.
///
/// Embeddings are read-only; matching and decomposition are computed once per
/// instance up front.
pub fn train(model: &mut Model, store: &EmbeddingStore, data: &[TrainingInstance]) -> Result<TrainReport> {
    run(model, store, data, None)
}

/// Like [`train`], but scores the model on a dev set after every epoch
/// (higher is better) and keeps the parameters of the best epoch.
pub fn train_with_dev<F>(
    model: &mut Model,
    store: &EmbeddingStore,
    data: &[TrainingInstance],
    mut dev_metric: F,
) -> Result<TrainReport>
where
    F: FnMut(&Model) -> Result<f64>,
{
    run(model, store, data, Some(&mut dev_metric))
}

fn run(
    model: &mut Model,
    store: &EmbeddingStore,
    data: &[TrainingInstance],
    mut dev_metric: Option<&mut dyn FnMut(&Model) -> Result<f64>>,
) -> Result<TrainReport> {
    validate(model, store, data)?;
    let mut report = TrainReport::default();
    if model.config.epochs == 0 {
        return Ok(report);
    }

    let prepared: Vec<PreparedPair> = model.prepare_all(store, data)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(model.config.seed);
    rng.set_stream(1);
    let mut optimizer = Optimizer::new(model);
    let mut best: Option<(f64, Model)> = None;

    for epoch in 1..=model.config.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut total_loss = 0.0;
        for chunk in order.chunks(model.config.batch_size) {
            let batch: Vec<(&PreparedPair, bool)> = chunk.iter().map(|&i| (&prepared[i], data[i].label)).collect();
            let (grads, loss) = model.gradients_prepared(&batch)?;
            optimizer.step(model, &grads)?;
            total_loss += loss;
        }
        let metric = match dev_metric.as_mut() {
            Some(f) => Some(f(model)?),
            None => None,
        };
        let log = EpochLog {
            epoch,
            mean_loss: total_loss / data.len() as f64,
            wall_ms: start.elapsed().as_millis(),
            dev_metric: metric,
        };
        log::info!("{}", log.to_record());
        report.epochs.push(log);
        if let Some(m) = metric {
            if best.as_ref().map_or(true, |(b, _)| m > *b) {
                best = Some((m, model.clone()));
                report.best_epoch = Some(epoch);
                report.best_dev_metric = Some(m);
            }
        }
    }
    if let Some((_, best_model)) = best {
        *model = best_model;
    }
    model.embedding_fingerprint = Some(store.fingerprint().to_string());
    Ok(report)
}
