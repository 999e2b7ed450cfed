use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::vocab::TokenId;
use crate::error::{Error, Result};
use crate::model::{AttributeValue, DecoderState, EncodedSource, Seq2Seq};

pub const DEFAULT_MAX_LEN: usize = 30;

/// A decoded sequence with its cumulative log-probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Generated ids, ending with `<eos>` when finished.
    pub tokens: Vec<TokenId>,
    pub log_prob: f64,
    pub finished: bool,
}

impl Hypothesis {
    /// Length used for normalization: every emitted token including `<eos>`.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// `p̂_i ∝ p_i^{1/τ}`.
pub fn apply_temperature(p: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {tau}")));
    }
    if p.is_empty() || p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidArgument("not a probability distribution".into()));
    }
    let logs: Vec<f64> = p.iter().map(|&x| x.ln() / tau).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::InvalidArgument("distribution has no mass".into()));
    }
    let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / total).collect())
}

fn masked(model: &Seq2Seq, mut logp: Vec<f64>) -> Vec<f64> {
    logp[model.vocab.pad()] = f64::NEG_INFINITY;
    logp
}

fn argmax(logp: &[f64]) -> TokenId {
    let mut best = 0;
    for (i, &v) in logp.iter().enumerate() {
        if v > logp[best] {
            best = i;
        }
    }
    best
}

/// Greedy argmax decoding; ties go to the lower id.
pub fn greedy(model: &Seq2Seq, enc: &EncodedSource, max_len: usize) -> Result<Hypothesis> {
    let eos = model.vocab.eos();
    let mut state = enc.initial.clone();
    let mut prev = eos;
    let mut hyp = Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        finished: false,
    };
    for _ in 0..max_len {
        let (logp, next) = model.decode_step(prev, &state, enc)?;
        let logp = masked(model, logp);
        let tok = argmax(&logp);
        hyp.tokens.push(tok);
        hyp.log_prob += logp[tok];
        state = next;
        prev = tok;
        if tok == eos {
            hyp.finished = true;
            break;
        }
    }
    Ok(hyp)
}

struct Live {
    hyp: Hypothesis,
    state: DecoderState,
}

/// Beam search over cumulative log-probability without length normalization.
///
/// Hypotheses that emit `<eos>` leave the beam; the search stops once the
/// active beam is empty or `max_len` tokens were generated. Returns up to
/// `beam` finished hypotheses (padded with unfinished ones), best first.
pub fn beam_search(model: &Seq2Seq, enc: &EncodedSource, beam: usize, max_len: usize) -> Result<Vec<Hypothesis>> {
    if beam == 0 {
        return Err(Error::InvalidArgument("beam size must be at least 1".into()));
    }
    let eos = model.vocab.eos();
    let mut active = vec![Live {
        hyp: Hypothesis {
            tokens: Vec::new(),
            log_prob: 0.0,
            finished: false,
        },
        state: enc.initial.clone(),
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();
    for _ in 0..max_len {
        if active.is_empty() {
            break;
        }
        let mut candidates: Vec<(f64, usize, TokenId)> = Vec::new();
        let mut next_states = Vec::with_capacity(active.len());
        for (i, live) in active.iter().enumerate() {
            let prev = live.hyp.tokens.last().copied().unwrap_or(eos);
            let (logp, next) = model.decode_step(prev, &live.state, enc)?;
            let logp = masked(model, logp);
            for (tok, &lp) in logp.iter().enumerate() {
                if lp.is_finite() {
                    candidates.push((live.hyp.log_prob + lp, i, tok));
                }
            }
            next_states.push(next);
        }
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let width = beam.saturating_sub(finished.len()).min(candidates.len());
        let mut next_active = Vec::with_capacity(width);
        for &(score, i, tok) in candidates.iter().take(width) {
            let mut tokens = active[i].hyp.tokens.clone();
            tokens.push(tok);
            let hyp = Hypothesis {
                tokens,
                log_prob: score,
                finished: tok == eos,
            };
            if hyp.finished {
                finished.push(hyp);
            } else {
                next_active.push(Live {
                    hyp,
                    state: next_states[i].clone(),
                });
            }
        }
        active = next_active;
    }
    let by_score = |a: &Hypothesis, b: &Hypothesis| b.log_prob.total_cmp(&a.log_prob);
    finished.sort_by(by_score);
    finished.truncate(beam);
    if finished.len() < beam {
        let mut rest: Vec<Hypothesis> = active.into_iter().map(|l| l.hyp).collect();
        rest.sort_by(by_score);
        finished.extend(rest.into_iter().take(beam - finished.len()));
    }
    finished.sort_by(by_score);
    Ok(finished)
}

/// `n` ancestral samples from the temperature-adjusted distribution.
pub fn temperature_sample(
    model: &Seq2Seq,
    enc: &EncodedSource,
    tau: f64,
    n: usize,
    seed: u64,
    max_len: usize,
) -> Result<Vec<Hypothesis>> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {tau}")));
    }
    let eos = model.vocab.eos();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut state = enc.initial.clone();
        let mut prev = eos;
        let mut hyp = Hypothesis {
            tokens: Vec::new(),
            log_prob: 0.0,
            finished: false,
        };
        for _ in 0..max_len {
            let (logp, next) = model.decode_step(prev, &state, enc)?;
            let logp = masked(model, logp);
            let p: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
            let q = apply_temperature(&p, tau)?;
            let dist = WeightedIndex::new(&q).map_err(|e| Error::NonFinite(e.to_string()))?;
            let tok = dist.sample(&mut rng);
            hyp.tokens.push(tok);
            hyp.log_prob += logp[tok];
            state = next;
            prev = tok;
            if tok == eos {
                hyp.finished = true;
                break;
            }
        }
        out.push(hyp);
    }
    Ok(out)
}

/// Encodes `source` under `value` and decodes with `method`.
pub fn decode(
    model: &Seq2Seq,
    source: &[TokenId],
    value: &AttributeValue,
    method: &DecodeMethod,
    max_len: usize,
) -> Result<Vec<Hypothesis>> {
    let enc = model.encode(source, value)?;
    match *method {
        DecodeMethod::Greedy => Ok(vec![greedy(model, &enc, max_len)?]),
        DecodeMethod::Beam { width, keep } => {
            let mut hyps = beam_search(model, &enc, width, max_len)?;
            hyps.truncate(keep);
            Ok(hyps)
        }
        DecodeMethod::Sample { temperature, n, seed } => temperature_sample(model, &enc, temperature, n, seed, max_len),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DecodeMethod {
    Greedy,
    /// Beam of `width`, returning the best `keep`.
    Beam { width: usize, keep: usize },
    Sample { temperature: f64, n: usize, seed: u64 },
}
