use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{adam_step, clip_global_norm, lstm_cell_on_tape, AdamState, LstmVars, LstmWeights, Tape, Tensor, Var};
use crate::corpus::{
    load_artifact, resolve_frames, save_artifact, AnnotationSidecar, FrameId, FrameInventory, Story, CONTEXT_SENTENCES,
    FRAME_SLOTS,
};
use crate::error::{Error, Result};

const PREDICTOR_KIND: &str = "frame-predictor";

/// Indicator over the frame slots (top frames plus catch-all).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameVector(Vec<u8>);

impl FrameVector {
    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn ids(&self) -> Vec<FrameId> {
        self.0.iter().enumerate().filter(|(_, &b)| b == 1).map(|(i, _)| i).collect()
    }

    fn as_f64(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().map(|&b| f64::from(b))
    }
}

pub fn frame_vector(frames: &BTreeSet<FrameId>) -> FrameVector {
    let mut v = vec![0u8; FRAME_SLOTS];
    for &id in frames {
        match v.get_mut(id) {
            Some(slot) => *slot = 1,
            None => log::warn!("frame id {id} is outside the {FRAME_SLOTS} slots; ignored"),
        }
    }
    FrameVector(v)
}

/// Context frame vectors and the continuation's frame vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameExample {
    pub context: Vec<FrameVector>,
    pub target: FrameVector,
}

/// Frame examples from annotations that record per-sentence context frames.
pub fn frame_examples(stories: &[Story], sidecar: &AnnotationSidecar, inventory: &FrameInventory) -> Result<Vec<FrameExample>> {
    let anns = sidecar.for_stories(stories)?;
    let missing: Vec<String> = anns
        .iter()
        .filter(|a| a.context_frames.as_ref().is_none_or(|c| c.len() != CONTEXT_SENTENCES))
        .map(|a| format!("{} (context frames)", a.id))
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingAnnotations(missing));
    }
    Ok(anns
        .iter()
        .map(|a| FrameExample {
            context: a
                .context_frames
                .iter()
                .flatten()
                .map(|names| frame_vector(&resolve_frames(names, inventory)))
                .collect(),
            target: frame_vector(&resolve_frames(&a.frames, inventory)),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictorConfig {
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            hidden_dim: 32,
            learning_rate: 0.01,
            batch_size: 32,
            max_epochs: 50,
            patience: 5,
            init_scale: 0.1,
            seed: 5,
        }
    }
}

/// LSTM over context frame vectors, mean of hidden states, linear scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePredictor {
    pub config: PredictorConfig,
    pub lstm: LstmWeights,
    pub output: Tensor,
    pub output_bias: Tensor,
    pub best_dev_mse: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorEpoch {
    pub epoch: usize,
    pub train_mse: f64,
    pub dev_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorReport {
    pub epochs: Vec<PredictorEpoch>,
    pub best_epoch: usize,
    pub best_dev_mse: f64,
    pub final_dev_mse: f64,
}

struct Bound {
    lstm: LstmVars,
    output: Var,
    bias: Var,
}

impl FramePredictor {
    pub fn new(config: PredictorConfig) -> Result<Self> {
        if config.hidden_dim == 0 {
            return Err(Error::InvalidArgument("hidden_dim must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let s = config.init_scale;
        Ok(FramePredictor {
            lstm: LstmWeights::uniform(FRAME_SLOTS, config.hidden_dim, s, &mut rng),
            output: Tensor::uniform(&[config.hidden_dim, FRAME_SLOTS], s, &mut rng),
            output_bias: Tensor::zeros(&[FRAME_SLOTS]),
            config,
            best_dev_mse: None,
        })
    }

    fn slots(&self) -> Vec<Tensor> {
        vec![
            self.lstm.w_input.clone(),
            self.lstm.w_hidden.clone(),
            self.lstm.bias.clone(),
            self.output.clone(),
            self.output_bias.clone(),
        ]
    }

    fn set_slots(&mut self, mut s: Vec<Tensor>) {
        self.output_bias = s.pop().unwrap_or_else(|| self.output_bias.clone());
        self.output = s.pop().unwrap_or_else(|| self.output.clone());
        self.lstm.bias = s.pop().unwrap_or_else(|| self.lstm.bias.clone());
        self.lstm.w_hidden = s.pop().unwrap_or_else(|| self.lstm.w_hidden.clone());
        self.lstm.w_input = s.pop().unwrap_or_else(|| self.lstm.w_input.clone());
    }

    fn bind(&self, tape: &mut Tape, trainable: bool) -> Bound {
        let mut put = |t: &Tensor| if trainable { tape.param(t.clone()) } else { tape.constant(t.clone()) };
        Bound {
            lstm: LstmVars {
                w_input: put(&self.lstm.w_input),
                w_hidden: put(&self.lstm.w_hidden),
                bias: put(&self.lstm.bias),
            },
            output: put(&self.output),
            bias: put(&self.output_bias),
        }
    }

    /// Scores `[B, 101]` for contexts that all have the same sentence count.
    fn scores_on_tape(&self, tape: &mut Tape, p: &Bound, contexts: &[&[FrameVector]]) -> Result<Var> {
        let b = contexts.len();
        let steps = contexts.first().map_or(0, |c| c.len());
        if b == 0 || steps == 0 || contexts.iter().any(|c| c.len() != steps) {
            return Err(Error::InvalidArgument("contexts must be non-empty and equally long".into()));
        }
        let d = self.config.hidden_dim;
        let mut h = tape.constant(Tensor::zeros(&[b, d]));
        let mut c = tape.constant(Tensor::zeros(&[b, d]));
        let mut total: Option<Var> = None;
        for t in 0..steps {
            let data: Vec<f64> = contexts.iter().flat_map(|ctx| ctx[t].as_f64()).collect();
            let x = tape.constant(Tensor::matrix(b, FRAME_SLOTS, data)?);
            (h, c) = lstm_cell_on_tape(tape, x, h, c, &p.lstm)?;
            total = Some(match total {
                Some(acc) => tape.add(acc, h)?,
                None => h,
            });
        }
        let mean = tape.scale(total.unwrap_or(h), 1.0 / steps as f64);
        let out = tape.matmul(mean, p.output)?;
        tape.add_row(out, p.bias)
    }

    fn mse_on_tape(&self, tape: &mut Tape, p: &Bound, batch: &[&FrameExample]) -> Result<Var> {
        let contexts: Vec<&[FrameVector]> = batch.iter().map(|e| e.context.as_slice()).collect();
        let scores = self.scores_on_tape(tape, p, &contexts)?;
        let target: Vec<f64> = batch.iter().flat_map(|e| e.target.as_f64()).collect();
        let y = tape.constant(Tensor::matrix(batch.len(), FRAME_SLOTS, target)?);
        let diff = tape.sub(scores, y)?;
        let sq = tape.mul(diff, diff)?;
        let sum = tape.sum(sq);
        Ok(tape.scale(sum, 1.0 / (batch.len() * FRAME_SLOTS) as f64))
    }

    /// Mean squared error over all examples.
    pub fn mse(&self, examples: &[FrameExample]) -> Result<f64> {
        if examples.is_empty() {
            return Err(Error::Empty("no frame examples".into()));
        }
        let mut sum = 0.0;
        for group in group_by_len(examples) {
            for chunk in group.chunks(64) {
                let mut tape = Tape::new();
                let p = self.bind(&mut tape, false);
                let loss = self.mse_on_tape(&mut tape, &p, chunk)?;
                sum += tape.value(loss).item() * chunk.len() as f64;
            }
        }
        Ok(sum / examples.len() as f64)
    }

    /// Scores of all 101 frame slots given the frame vectors of 1 to 4 context sentences.
    pub fn predict(&self, context: &[FrameVector]) -> Result<Vec<f64>> {
        if context.is_empty() || context.len() > CONTEXT_SENTENCES {
            return Err(Error::InvalidArgument(format!(
                "expected 1 to {CONTEXT_SENTENCES} context frame vectors, got {}",
                context.len()
            )));
        }
        if let Some(v) = context.iter().find(|v| v.0.len() != FRAME_SLOTS) {
            return Err(Error::shape("predict", format!("frame vector of length {}", v.0.len())));
        }
        let mut tape = Tape::new();
        let p = self.bind(&mut tape, false);
        let out = self.scores_on_tape(&mut tape, &p, &[context])?;
        let scores = tape.value(out).data().to_vec();
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("frame predictor scores".into()));
        }
        Ok(scores)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_artifact(path, PREDICTOR_KIND, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let p: FramePredictor = load_artifact(path, PREDICTOR_KIND)?;
        let d = p.config.hidden_dim;
        let ok = p.lstm.w_input.shape() == [FRAME_SLOTS, 4 * d]
            && p.lstm.w_hidden.shape() == [d, 4 * d]
            && p.lstm.bias.shape() == [4 * d]
            && p.output.shape() == [d, FRAME_SLOTS]
            && p.output_bias.shape() == [FRAME_SLOTS];
        if !ok {
            return Err(Error::Corrupt(format!("{}: frame predictor shapes disagree", path.display())));
        }
        Ok(p)
    }
}

fn group_by_len(examples: &[FrameExample]) -> Vec<Vec<&FrameExample>> {
    let mut groups: Vec<Vec<&FrameExample>> = Vec::new();
    for e in examples {
        match groups.iter_mut().find(|g| g[0].context.len() == e.context.len()) {
            Some(g) => g.push(e),
            None => groups.push(vec![e]),
        }
    }
    groups
}

/// Minimizes MSE with Adam; returns the parameters with the lowest dev MSE.
pub fn train_frame_predictor(
    train: &[FrameExample],
    dev: &[FrameExample],
    config: PredictorConfig,
) -> Result<(FramePredictor, PredictorReport)> {
    if train.is_empty() || dev.is_empty() {
        return Err(Error::Empty("frame predictor needs non-empty train and dev sets".into()));
    }
    if config.batch_size == 0 || config.max_epochs == 0 || !(config.learning_rate > 0.0) {
        return Err(Error::InvalidArgument("batch_size, max_epochs and learning_rate must be positive".into()));
    }
    let mut model = FramePredictor::new(config.clone())?;
    let mut flat = model.slots();
    let mut adam = AdamState::new(&flat, config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best: Option<(f64, usize, Vec<Tensor>)> = None;
    let mut epochs = Vec::new();
    for epoch in 1..=config.max_epochs {
        let mut groups = group_by_len(train);
        let (mut sum, mut n) = (0.0, 0usize);
        for group in groups.iter_mut() {
            group.shuffle(&mut rng);
            for chunk in group.chunks(config.batch_size) {
                let mut tape = Tape::new();
                let p = model.bind(&mut tape, true);
                let loss = model.mse_on_tape(&mut tape, &p, chunk)?;
                let value = tape.value(loss).item();
                if !value.is_finite() {
                    return Err(Error::NonFinite(format!("frame predictor loss at epoch {epoch}")));
                }
                let grads = tape.backward(loss)?;
                let vars = [p.lstm.w_input, p.lstm.w_hidden, p.lstm.bias, p.output, p.bias];
                let mut g: Vec<Tensor> = vars.iter().map(|&v| grads.get(v)).collect();
                clip_global_norm(&mut g, 5.0);
                adam_step(&mut flat, &g, &mut adam)?;
                model.set_slots(flat.clone());
                sum += value * chunk.len() as f64;
                n += chunk.len();
            }
        }
        let dev_mse = model.mse(dev)?;
        log::info!("frame predictor epoch {epoch}: train mse {:.5}, dev mse {dev_mse:.5}", sum / n as f64);
        epochs.push(PredictorEpoch { epoch, train_mse: sum / n as f64, dev_mse });
        if best.as_ref().is_none_or(|(b, _, _)| dev_mse < *b) {
            best = Some((dev_mse, epoch, flat.clone()));
        } else if best.as_ref().is_some_and(|(_, e, _)| epoch - e >= config.patience) {
            break;
        }
    }
    let (best_dev_mse, best_epoch, best_flat) = best.ok_or_else(|| Error::Empty("no epochs ran".into()))?;
    model.set_slots(best_flat);
    model.best_dev_mse = Some(best_dev_mse);
    let final_dev_mse = epochs.last().map_or(f64::NAN, |e| e.dev_mse);
    Ok((
        model,
        PredictorReport {
            epochs,
            best_epoch,
            best_dev_mse,
            final_dev_mse,
        },
    ))
}

/// The `k` highest-scoring frame ids, descending, ties to the lower id.
pub fn top_k(scores: &[f64], k: usize) -> Result<Vec<FrameId>> {
    if k < 1 || k > scores.len() {
        return Err(Error::InvalidArgument(format!("k = {k} outside 1..={}", scores.len())));
    }
    let mut ids: Vec<FrameId> = (0..scores.len()).collect();
    ids.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    ids.truncate(k);
    Ok(ids)
}

pub fn predict_topk_frames(predictor: &FramePredictor, context: &[FrameVector], k: usize) -> Result<Vec<FrameId>> {
    if k < 1 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    top_k(&predictor.predict(context)?, k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_vector_examples() {
        let e3 = frame_vector(&BTreeSet::from([3]));
        assert_eq!(e3.as_slice().len(), FRAME_SLOTS);
        assert_eq!(e3.ids(), [3]);
        assert!(frame_vector(&BTreeSet::new()).as_slice().iter().all(|&b| b == 0));
        assert_eq!(frame_vector(&BTreeSet::from([0, 100])).ids(), [0, 100]);
    }

    #[test]
    fn top_k_ties_and_permutation() {
        let mut s = vec![0.0; FRAME_SLOTS];
        s[7] = 2.0;
        assert_eq!(top_k(&s, 1).unwrap(), [7]);
        s[3] = 2.0;
        assert_eq!(top_k(&s, 2).unwrap(), [3, 7]);
        let mut all = top_k(&s, FRAME_SLOTS).unwrap();
        all.sort_unstable();
        assert_eq!(all, (0..FRAME_SLOTS).collect::<Vec<_>>());
        assert!(top_k(&s, 0).is_err());
        assert!(top_k(&s, FRAME_SLOTS + 1).is_err());
    }
}
