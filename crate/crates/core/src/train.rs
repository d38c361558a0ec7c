//! Mini-batch SGD on binary cross-entropy.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tremor_tensor::{Sgd, Tape, Tensor, Var};

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::imaging::{augment, AugmentPolicy};
use crate::metrics::auc;
use crate::models::{Model, ModelConfig};
use crate::pipeline::PatchExample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSpec {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f32,
    pub momentum: f32,
    pub augment: AugmentPolicy,
    pub seed: u64,
    /// Stop after this many epochs without a validation AUC improvement
    /// and return the best model.
    pub patience: Option<usize>,
    /// Run extra epochs until at least this many SGD steps were taken.
    pub min_steps: usize,
}

impl Default for TrainSpec {
    fn default() -> Self {
        TrainSpec {
            epochs: 10,
            batch_size: 32,
            lr: 0.01,
            momentum: 0.9,
            augment: AugmentPolicy::default(),
            seed: 0,
            patience: None,
            min_steps: 0,
        }
    }
}

impl TrainSpec {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be at least 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "invalid optimizer settings lr={} momentum={}",
                self.lr, self.momentum
            )));
        }
        if self.patience == Some(0) {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        self.augment.validate()
    }

    /// Epochs actually run for `n` training examples.
    pub fn effective_epochs(&self, n: usize) -> usize {
        let per_epoch = n.div_ceil(self.batch_size).max(1);
        self.epochs.max(self.min_steps.div_ceil(per_epoch))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` when the validation split holds one class only.
    pub val_auc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub history: Vec<EpochRecord>,
    /// Epoch (1-based) whose weights were returned.
    pub best_epoch: usize,
}

fn check_splits(train: &[PatchExample], val: &[PatchExample]) -> Result<()> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::Usage(format!(
            "training needs non-empty splits ({} train, {} validation)",
            train.len(),
            val.len()
        )));
    }
    let train_ids: HashSet<&str> = train.iter().map(|e| e.example_id.as_str()).collect();
    let mut shared: Vec<String> = val
        .iter()
        .filter(|e| train_ids.contains(e.example_id.as_str()))
        .map(|e| e.example_id.clone())
        .collect();
    if !shared.is_empty() {
        shared.sort();
        shared.dedup();
        return Err(Error::Leakage { ids: shared });
    }
    Ok(())
}

/// Forward plus backward for one example; returns the loss and the
/// per-parameter gradients in store order.
pub fn example_gradients(model: &Model, patch: &Tensor<f32>, label: f32) -> Result<(f32, Vec<Tensor<f32>>)> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = tape.params(model.params());
    let x = tape.constant_ref(patch);
    let p = model.forward_with(&mut tape, &vars, x)?;
    let loss = tape.bce(p, label)?;
    let value = tape.value(loss).item().expect("scalar loss");
    let grads = tape.backward(loss)?.param_grads(model.params());
    Ok((value, grads))
}

pub fn predict_scores(model: &Model, examples: &[PatchExample]) -> Result<Vec<f64>> {
    examples.iter().map(|e| Ok(model.predict(&e.patch)? as f64)).collect()
}

pub fn labels_of(examples: &[PatchExample]) -> Vec<bool> {
    examples.iter().map(|e| e.label.is_damaged()).collect()
}

/// AUC of `model` on `examples`, `None` if they hold one class only.
pub fn evaluate_auc(model: &Model, examples: &[PatchExample]) -> Result<Option<f64>> {
    let labels = labels_of(examples);
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Ok(None);
    }
    Ok(Some(auc(&predict_scores(model, examples)?, &labels)?))
}

/// Trains a fresh model of `config` from its seeded initialization.
pub fn train(config: &ModelConfig, spec: &TrainSpec, train: &[PatchExample], val: &[PatchExample]) -> Result<TrainOutcome> {
    continue_training(Model::new(config.clone())?, spec, train, val)
}

/// Minimizes mean BCE by mini-batch SGD starting from `model`.
///
/// Batches are drawn from a per-epoch seeded shuffle; within a batch the
/// gradients are summed in index order and divided by the batch length.
/// Augmentation (training examples only) is seeded per epoch and example.
pub fn continue_training(mut model: Model, spec: &TrainSpec, train: &[PatchExample], val: &[PatchExample]) -> Result<TrainOutcome> {
    spec.validate()?;
    check_splits(train, val)?;
    let mut sgd = Sgd::new(spec.lr, spec.momentum)?;
    let augmenting = spec.augment != AugmentPolicy::identity();
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, Model)> = None;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=spec.effective_epochs(train.len()) {
        let epoch_seed = derive_seed(spec.seed, &format!("epoch/{epoch}"));
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed));
        let mut loss_sum = 0.0f64;
        for batch in order.chunks(spec.batch_size) {
            model.params_mut().zero_grad();
            let scale = 1.0 / batch.len() as f32;
            for &i in batch {
                let ex = &train[i];
                let augmented;
                let patch = if augmenting {
                    augmented = augment(&ex.patch, &spec.augment, derive_seed(epoch_seed, &ex.example_id))?;
                    &augmented
                } else {
                    &*ex.patch
                };
                let (loss, grads) = example_gradients(&model, patch, ex.label.as_f32())?;
                loss_sum += loss as f64;
                model.params_mut().accumulate(&grads, scale)?;
            }
            sgd.step(model.params_mut())?;
        }
        let val_auc = evaluate_auc(&model, val)?;
        log::debug!("epoch {epoch}: loss {:.4} val auc {val_auc:?}", loss_sum / train.len() as f64);
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            val_auc,
        });

        if let Some(patience) = spec.patience {
            let score = val_auc.unwrap_or(f64::NEG_INFINITY);
            match &best {
                Some((b, _, _)) if score <= *b => {}
                _ => best = Some((score, epoch, model.clone())),
            }
            let best_epoch = best.as_ref().map_or(epoch, |b| b.1);
            if epoch - best_epoch >= patience {
                break;
            }
        }
    }

    match best {
        Some((_, best_epoch, best_model)) => Ok(TrainOutcome {
            model: best_model,
            history,
            best_epoch,
        }),
        None => Ok(TrainOutcome {
            model,
            best_epoch: history.len(),
            history,
        }),
    }
}
