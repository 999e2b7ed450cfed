use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::corpus::artifact::{load_artifact, save_artifact};
use crate::corpus::vocab::{TokenId, Vocabulary};
use crate::error::{Error, Result};
use crate::model::attribute::{AttributeEmbedder, AttributeValue, ZInput};
use crate::model::batch::{Batch, Example};
use crate::model::network;
use crate::model::params::{ModelConfig, ModelParams, Params};

const CHECKPOINT_KIND: &str = "seq2seq";
const EVAL_BATCH: usize = 64;

/// Attribute-conditioned encoder-decoder with its vocabulary and embedder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seq2Seq {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub attribute: AttributeEmbedder,
    pub params: ModelParams,
    pub best_dev_perplexity: Option<f64>,
}

/// `z = [z_enc; z_dec]` split into its halves.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeEmbedding {
    pub z_enc: Vec<f64>,
    pub z_dec: Vec<f64>,
    pub degenerate: bool,
}

impl AttributeEmbedding {
    pub fn z(&self) -> Vec<f64> {
        self.z_enc.iter().chain(&self.z_dec).copied().collect()
    }
}

/// Recurrent decoder state for a single hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    pub h: Tensor,
    pub c: Tensor,
}

/// Encoder output for one source sequence.
#[derive(Debug, Clone)]
pub struct EncodedSource {
    /// Source states `[|x|, 2H]`, forward half first.
    pub states: Tensor,
    memory: Tensor,
    mask: Tensor,
    dec_z_gates: Option<Tensor>,
    pub initial: DecoderState,
}

/// Output of one attention read.
#[derive(Debug, Clone, PartialEq)]
pub struct Attention {
    pub weights: Vec<f64>,
    pub context: Vec<f64>,
    pub output: Vec<f64>,
}

/// Luong general attention for a single query `h` over `states` (`[T, 2H]`).
pub fn attend(h: &[f64], states: &Tensor, w: &Tensor, w_c: &Tensor) -> Result<Attention> {
    let t = states.rows();
    let mut tape = Tape::new();
    let hv = tape.constant(Tensor::row(h.to_vec()));
    let mem = tape.constant(states.reshape(vec![1, states.len()])?);
    let mask = tape.constant(Tensor::zeros(&[1, t]));
    let wv = tape.constant(w.as_matrix());
    let wc = tape.constant(w_c.as_matrix());
    let att = network::attend(&mut tape, hv, mem, mask, wv, wc)?;
    Ok(Attention {
        weights: tape.value(att.weights).data().to_vec(),
        context: tape.value(att.context).data().to_vec(),
        output: tape.value(att.output).data().to_vec(),
    })
}

#[derive(Serialize, Deserialize)]
struct CheckpointBody {
    vocab_hash: String,
    #[serde(flatten)]
    model: Seq2Seq,
}

impl Seq2Seq {
    pub fn new(config: ModelConfig, vocab: Vocabulary, attribute: AttributeEmbedder) -> Result<Self> {
        let params = ModelParams::init(&config, vocab.len(), attribute.z_dim(), attribute.learned_rows())?;
        Ok(Seq2Seq {
            config,
            vocab,
            attribute,
            params,
            best_dev_perplexity: None,
        })
    }

    fn bind(&self, tape: &mut Tape) -> Params<Var> {
        self.params.bind_constant(tape)
    }

    fn check_ids(&self, ids: &[TokenId]) -> Result<()> {
        match ids.iter().find(|&&t| t >= self.vocab.len()) {
            Some(bad) => Err(Error::InvalidArgument(format!(
                "token id {bad} outside vocabulary of {}",
                self.vocab.len()
            ))),
            None => Ok(()),
        }
    }

    /// `z_enc` and `z_dec` for `value`; both halves carry the full control vector.
    pub fn embed_attribute(&self, value: &AttributeValue) -> Result<AttributeEmbedding> {
        let z = match self.attribute.input(value)? {
            ZInput::None => Vec::new(),
            ZInput::Dense(v) => v,
            ZInput::MultiHot(hot) => {
                let table = self
                    .params
                    .frame_table
                    .as_ref()
                    .ok_or_else(|| Error::Contract("frame model without a frame table".into()))?;
                let mut z = vec![0.0; table.cols()];
                for (r, &on) in hot.iter().enumerate() {
                    if on != 0.0 {
                        z.iter_mut().zip(table.row_slice(r)).for_each(|(a, x)| *a += on * x);
                    }
                }
                z
            }
        };
        Ok(AttributeEmbedding {
            z_enc: z.clone(),
            z_dec: z,
            degenerate: AttributeEmbedder::is_degenerate(value),
        })
    }

    /// Runs the bidirectional encoder over `source` conditioned on `value`.
    pub fn encode(&self, source: &[TokenId], value: &AttributeValue) -> Result<EncodedSource> {
        if source.is_empty() {
            return Err(Error::Empty("cannot encode an empty source".into()));
        }
        self.check_ids(source)?;
        let z = ZInput::stack(&[self.attribute.input(value)?])?;
        let mut tape = Tape::new();
        let p = self.bind(&mut tape);
        let zv = network::control(&mut tape, &p, &z)?;
        let enc = network::encode(&mut tape, &p, source, &[source.len()], source.len(), zv)?;
        let zg = network::decoder_z_gates(&mut tape, &p, zv)?;
        let rows = enc.states.len();
        let states = tape.value(enc.memory).reshape(vec![rows, tape.value(enc.states[0]).cols()])?;
        Ok(EncodedSource {
            states,
            memory: tape.value(enc.memory).clone(),
            mask: tape.value(enc.mask).clone(),
            dec_z_gates: zg.map(|v| tape.value(v).clone()),
            initial: DecoderState {
                h: tape.value(enc.h0).clone(),
                c: tape.value(enc.c0).clone(),
            },
        })
    }

    /// Attention read of the current decoder state.
    pub fn attend(&self, state: &DecoderState, enc: &EncodedSource) -> Result<Attention> {
        let mut tape = Tape::new();
        let h = tape.constant(state.h.clone());
        let mem = tape.constant(enc.memory.clone());
        let mask = tape.constant(enc.mask.clone());
        let w = tape.constant(self.params.attention.clone());
        let wc = tape.constant(self.params.combine.clone());
        let att = network::attend(&mut tape, h, mem, mask, w, wc)?;
        Ok(Attention {
            weights: tape.value(att.weights).data().to_vec(),
            context: tape.value(att.context).data().to_vec(),
            output: tape.value(att.output).data().to_vec(),
        })
    }

    /// Log-probabilities of the next token after `y_prev`, and the advanced state.
    pub fn decode_step(&self, y_prev: TokenId, state: &DecoderState, enc: &EncodedSource) -> Result<(Vec<f64>, DecoderState)> {
        self.check_ids(&[y_prev])?;
        let mut tape = Tape::new();
        let p = self.bind(&mut tape);
        let h = tape.constant(state.h.clone());
        let c = tape.constant(state.c.clone());
        let mem = tape.constant(enc.memory.clone());
        let mask = tape.constant(enc.mask.clone());
        let zg = enc.dec_z_gates.as_ref().map(|t| tape.constant(t.clone()));
        let gates = network::input_gates(&mut tape, &p, &[y_prev])?;
        let (h, c, att) = network::decoder_step(&mut tape, &p, gates, zg, h, c, mem, mask)?;
        let logp = network::log_probs(&mut tape, &p, att.output)?;
        Ok((
            tape.value(logp).data().to_vec(),
            DecoderState {
                h: tape.value(h).clone(),
                c: tape.value(c).clone(),
            },
        ))
    }

    /// `Σ_j log p(y_j | y_<j, x, l)` under teacher forcing; `target` must end with `<eos>`.
    pub fn log_likelihood(&self, source: &[TokenId], value: &AttributeValue, target: &[TokenId]) -> Result<f64> {
        if target.last() != Some(&self.vocab.eos()) {
            return Err(Error::Contract("target must be non-empty and end with <eos>".into()));
        }
        let ex = Example {
            id: String::new(),
            source: source.to_vec(),
            target: target.to_vec(),
            value: value.clone(),
        };
        Ok(-self.total_nll(&[&ex])?.0)
    }

    fn batch(&self, examples: &[&Example]) -> Result<Batch> {
        Batch::new(examples, self.vocab.len(), self.vocab.eos(), self.vocab.pad(), &self.attribute)
    }

    /// Summed NLL and token count over `examples`, evaluated in chunks.
    pub(crate) fn total_nll(&self, examples: &[&Example]) -> Result<(f64, usize)> {
        let mut nll = 0.0;
        let mut tokens = 0;
        for chunk in examples.chunks(EVAL_BATCH) {
            let batch = self.batch(chunk)?;
            let mut tape = Tape::new();
            let p = self.bind(&mut tape);
            let loss = network::batch_nll(&mut tape, &p, &batch)?;
            nll += tape.value(loss).item();
            tokens += batch.tokens;
        }
        Ok((nll, tokens))
    }

    /// Records the summed token NLL of `examples` on `tape` using the given parameter handles.
    pub fn nll_on_tape(&self, tape: &mut Tape, params: &Params<Var>, examples: &[Example]) -> Result<Var> {
        let refs: Vec<&Example> = examples.iter().collect();
        let batch = self.batch(&refs)?;
        network::batch_nll(tape, params, &batch)
    }

    /// `exp` of the mean per-token NLL, counting each `<eos>`.
    pub fn perplexity(&self, examples: &[Example]) -> Result<f64> {
        if examples.is_empty() {
            return Err(Error::Empty("perplexity over an empty dataset".into()));
        }
        let refs: Vec<&Example> = examples.iter().collect();
        let (nll, tokens) = self.total_nll(&refs)?;
        Ok((nll / tokens as f64).exp())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let body = CheckpointBody {
            vocab_hash: self.vocab.hash(),
            model: self.clone(),
        };
        save_artifact(path, CHECKPOINT_KIND, &body)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let body: CheckpointBody = load_artifact(path, CHECKPOINT_KIND)?;
        let model = body.model;
        if model.vocab.hash() != body.vocab_hash {
            return Err(Error::Corrupt(format!("{}: vocabulary hash mismatch", path.display())));
        }
        model.validate().map_err(|e| Error::Corrupt(format!("{}: {e}", path.display())))?;
        Ok(model)
    }

    /// Warning text when `vocab` differs from the vocabulary the model was trained with.
    pub fn vocab_warning(&self, vocab: &Vocabulary) -> Option<String> {
        let (ours, theirs) = (self.vocab.hash(), vocab.hash());
        (ours != theirs).then(|| {
            let msg = format!("vocabulary hash {theirs} differs from the checkpoint's {ours}");
            log::warn!("{msg}");
            msg
        })
    }

    fn validate(&self) -> Result<()> {
        let expected = ModelParams::init(
            &ModelConfig {
                init_scale: 0.0,
                ..self.config.clone()
            },
            self.vocab.len(),
            self.attribute.z_dim(),
            self.attribute.learned_rows(),
        )?;
        let want: Vec<&[usize]> = expected.slots().iter().map(|t| t.shape()).collect();
        let got: Vec<&[usize]> = self.params.slots().iter().map(|t| t.shape()).collect();
        if want != got {
            return Err(Error::Contract("parameter shapes disagree with the configuration".into()));
        }
        if !self.params.is_finite() {
            return Err(Error::NonFinite("checkpoint parameters".into()));
        }
        Ok(())
    }
}
