use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{adam_step, clip_global_norm, AdamState, Tape, Tensor};
use crate::error::{Error, Result};
use crate::model::batch::{Batch, Example};
use crate::model::network;
use crate::model::seq2seq::Seq2Seq;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 32,
            max_epochs: 30,
            patience: 3,
            seed: 7,
            clip_norm: 5.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.learning_rate > 0.0 && self.clip_norm > 0.0;
        if !positive || self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::InvalidArgument(format!(
                "training settings must be positive with patience >= 1: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_perplexity: f64,
    pub dev_perplexity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_dev_perplexity: f64,
    pub final_dev_perplexity: f64,
}

/// Minimizes mean token NLL with Adam and returns the parameters with the
/// best development perplexity.
pub fn train(mut model: Seq2Seq, train: &[Example], dev: &[Example], cfg: &TrainConfig) -> Result<(Seq2Seq, TrainReport)> {
    cfg.validate()?;
    if train.is_empty() || dev.is_empty() {
        return Err(Error::Empty("training needs non-empty train and dev sets".into()));
    }
    let template = model.params.clone();
    let mut flat: Vec<Tensor> = template.slots().into_iter().cloned().collect();
    let mut adam = AdamState::new(&flat, cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();

    let mut best: Option<(f64, usize, Vec<Tensor>)> = None;
    let mut epochs = Vec::new();
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let (mut nll, mut tokens) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let refs: Vec<&Example> = chunk.iter().map(|&i| &train[i]).collect();
            let batch = Batch::new(&refs, model.vocab.len(), model.vocab.eos(), model.vocab.pad(), &model.attribute)?;
            let mut tape = Tape::new();
            let current = template.rebuild(flat.clone())?;
            let p = current.bind_trainable(&mut tape);
            let total = network::batch_nll(&mut tape, &p, &batch)?;
            let value = tape.value(total).item();
            if !value.is_finite() {
                return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
            }
            let loss = tape.scale(total, 1.0 / batch.tokens as f64);
            let grads = tape.backward(loss)?;
            let mut g: Vec<Tensor> = p.slots().into_iter().map(|&v| grads.get(v)).collect();
            clip_global_norm(&mut g, cfg.clip_norm);
            adam_step(&mut flat, &g, &mut adam)?;
            nll += value;
            tokens += batch.tokens;
        }
        model.params = template.rebuild(flat.clone())?;
        let dev_ppl = model.perplexity(dev)?;
        let stats = EpochStats {
            epoch,
            train_perplexity: (nll / tokens as f64).exp(),
            dev_perplexity: dev_ppl,
        };
        log::info!(
            "epoch {epoch}: train ppl {:.3}, dev ppl {:.3}",
            stats.train_perplexity,
            stats.dev_perplexity
        );
        epochs.push(stats);
        let improved = best.as_ref().is_none_or(|(b, _, _)| dev_ppl < *b);
        if improved {
            best = Some((dev_ppl, epoch, flat.clone()));
        } else if best.as_ref().is_some_and(|(_, e, _)| epoch - e >= cfg.patience) {
            break;
        }
    }
    let final_dev_perplexity = epochs.last().map_or(f64::NAN, |e| e.dev_perplexity);
    let (best_ppl, best_epoch, best_flat) = best.ok_or_else(|| Error::Empty("no epochs ran".into()))?;
    model.params = template.rebuild(best_flat)?;
    model.best_dev_perplexity = Some(best_ppl);
    Ok((
        model,
        TrainReport {
            epochs,
            best_epoch,
            best_dev_perplexity: best_ppl,
            final_dev_perplexity,
        },
    ))
}
