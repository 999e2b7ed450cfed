//! The encoder-decoder written once on the tape and shared by training and
//! inference (which binds parameters as constants and uses batch size one).

use crate::autodiff::{lstm_step, Tape, Tensor, Var};
use crate::error::Result;
use crate::model::batch::Batch;
use crate::model::params::Params;

const MASKED: f64 = -1e9;

pub(crate) struct Encoded {
    /// `[B, T·2H]`, row `b` holding every position of example `b`.
    pub memory: Var,
    /// Additive attention mask `[B, T]`.
    pub mask: Var,
    pub h0: Var,
    pub c0: Var,
    /// Per-position top-layer states, each `[B, 2H]`.
    pub states: Vec<Var>,
}

/// `z` as a `[B, Z]` node: fixed inputs are constants, frame sets go through the learned table.
pub(crate) fn control(tape: &mut Tape, p: &Params<Var>, z: &Option<(Tensor, bool)>) -> Result<Option<Var>> {
    let Some((t, multi)) = z else { return Ok(None) };
    let input = tape.constant(t.clone());
    if *multi {
        let table = p
            .frame_table
            .ok_or_else(|| crate::Error::Contract("frame input without a frame table".into()))?;
        Ok(Some(tape.matmul(input, table)?))
    } else {
        Ok(Some(input))
    }
}

pub(crate) fn encode(
    tape: &mut Tape,
    p: &Params<Var>,
    src: &[usize],
    lens: &[usize],
    steps: usize,
    z: Option<Var>,
) -> Result<Encoded> {
    let b = lens.len();
    let h = tape.value(p.decoder.w_hidden).rows();
    let mut layer_input = tape.gather(p.embed, src)?;
    let mut top: Vec<Var> = Vec::new();
    let mut finals: Vec<(Var, Var)> = Vec::new();
    for (layer, pair) in p.encoder.iter().enumerate() {
        let mut outs: [Vec<Option<Var>>; 2] = [vec![None; steps], vec![None; steps]];
        finals.clear();
        for (dir, l) in pair.iter().enumerate() {
            let xin = tape.matmul(layer_input, l.w_input)?;
            let xin = tape.add_row(xin, l.bias)?;
            let zg = match (layer, z, &p.encoder_z) {
                (0, Some(z), Some(wz)) => Some(tape.matmul(z, wz[dir])?),
                _ => None,
            };
            let mut hs = tape.constant(Tensor::zeros(&[b, h]));
            let mut cs = tape.constant(Tensor::zeros(&[b, h]));
            let order: Box<dyn Iterator<Item = usize>> = if dir == 0 {
                Box::new(0..steps)
            } else {
                Box::new((0..steps).rev())
            };
            for t in order {
                let mut g = tape.slice_rows(xin, t * b, b)?;
                if let Some(zg) = zg {
                    g = tape.add(g, zg)?;
                }
                let (mut hn, mut cn) = lstm_step(tape, g, hs, cs, l.w_hidden)?;
                let keep: Vec<bool> = lens.iter().map(|&n| t < n).collect();
                if keep.iter().any(|k| !k) {
                    hn = tape.select_rows(&keep, hn, hs)?;
                    cn = tape.select_rows(&keep, cn, cs)?;
                }
                hs = hn;
                cs = cn;
                outs[dir][t] = Some(hs);
            }
            finals.push((hs, cs));
        }
        let [fwd, bwd] = outs;
        top = fwd
            .into_iter()
            .zip(bwd)
            .map(|(f, r)| tape.concat_cols(&[f.expect("visited"), r.expect("visited")]))
            .collect::<Result<_>>()?;
        layer_input = tape.concat_rows(&top)?;
    }
    let memory = tape.concat_cols(&top)?;
    let mut mask = vec![0.0; b * steps];
    for (r, &n) in lens.iter().enumerate() {
        mask[r * steps + n..(r + 1) * steps].fill(MASKED);
    }
    let mask = tape.constant(Tensor::matrix(b, steps, mask)?);
    let hcat = tape.concat_cols(&[finals[0].0, finals[1].0])?;
    let ccat = tape.concat_cols(&[finals[0].1, finals[1].1])?;
    let h0 = tape.matmul(hcat, p.bridge_h)?;
    let h0 = tape.add_row(h0, p.bridge_h_bias)?;
    let c0 = tape.matmul(ccat, p.bridge_c)?;
    let c0 = tape.add_row(c0, p.bridge_c_bias)?;
    Ok(Encoded {
        memory,
        mask,
        h0,
        c0,
        states: top,
    })
}

pub(crate) struct Attended {
    pub weights: Var,
    pub context: Var,
    pub output: Var,
}

/// Bilinear scores `hᵀ W s_i`, softmax weights, context and `tanh(W_c [context; h])`.
pub(crate) fn attend(
    tape: &mut Tape,
    h: Var,
    memory: Var,
    mask: Var,
    attention: Var,
    combine: Var,
) -> Result<Attended> {
    let q = tape.matmul(h, attention)?;
    let scores = tape.batched_dot(memory, q)?;
    let scores = tape.add(scores, mask)?;
    let weights = tape.softmax_rows(scores);
    let context = tape.batched_weighted_sum(weights, memory)?;
    let cat = tape.concat_cols(&[context, h])?;
    let pre = tape.matmul(cat, combine)?;
    Ok(Attended {
        weights,
        context,
        output: tape.tanh(pre),
    })
}

/// Decoder input gates `emb(y)·W + b` for `ids`, one row each.
pub(crate) fn input_gates(tape: &mut Tape, p: &Params<Var>, ids: &[usize]) -> Result<Var> {
    let e = tape.gather(p.embed, ids)?;
    let g = tape.matmul(e, p.decoder.w_input)?;
    tape.add_row(g, p.decoder.bias)
}

pub(crate) fn decoder_z_gates(tape: &mut Tape, p: &Params<Var>, z: Option<Var>) -> Result<Option<Var>> {
    match (z, p.decoder_z) {
        (Some(z), Some(w)) => Ok(Some(tape.matmul(z, w)?)),
        _ => Ok(None),
    }
}

/// One decoder step; returns the new `(h, c)` and the attentional output.
pub(crate) fn decoder_step(
    tape: &mut Tape,
    p: &Params<Var>,
    gates: Var,
    zg: Option<Var>,
    h: Var,
    c: Var,
    enc_memory: Var,
    enc_mask: Var,
) -> Result<(Var, Var, Attended)> {
    let gates = match zg {
        Some(zg) => tape.add(gates, zg)?,
        None => gates,
    };
    let (h, c) = lstm_step(tape, gates, h, c, p.decoder.w_hidden)?;
    let att = attend(tape, h, enc_memory, enc_mask, p.attention, p.combine)?;
    Ok((h, c, att))
}

pub(crate) fn log_probs(tape: &mut Tape, p: &Params<Var>, outputs: Var) -> Result<Var> {
    let logits = tape.matmul(outputs, p.output)?;
    let logits = tape.add_row(logits, p.output_bias)?;
    Ok(tape.log_softmax_rows(logits))
}

/// Summed token negative log-likelihood of a teacher-forced batch.
pub(crate) fn batch_nll(tape: &mut Tape, p: &Params<Var>, batch: &Batch) -> Result<Var> {
    let z = control(tape, p, &batch.z)?;
    let enc = encode(tape, p, &batch.src, &batch.src_lens, batch.src_steps, z)?;
    let zg = decoder_z_gates(tape, p, z)?;
    let gates = input_gates(tape, p, &batch.tgt_in)?;
    let (mut h, mut c) = (enc.h0, enc.c0);
    let mut outputs = Vec::with_capacity(batch.tgt_steps);
    for t in 0..batch.tgt_steps {
        let g = tape.slice_rows(gates, t * batch.size, batch.size)?;
        let (hn, cn, att) = decoder_step(tape, p, g, zg, h, c, enc.memory, enc.mask)?;
        h = hn;
        c = cn;
        outputs.push(att.output);
    }
    let all = tape.concat_rows(&outputs)?;
    let logp = log_probs(tape, p, all)?;
    tape.pick_nll(logp, &batch.tgt_out, &batch.weights)
}
