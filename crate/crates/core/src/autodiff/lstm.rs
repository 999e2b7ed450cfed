use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::tape::{Tape, Var};
use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

/// Weights of one LSTM cell with input size `a` and state size `d`.
///
/// The four gates are stored side by side in column blocks ordered
/// input, forget, candidate, output: `w_input` is `a × 4d`, `w_hidden` is
/// `d × 4d` and `bias` is `4d`. Gate `k`'s `d × (a + d)` matrix is the
/// transpose of column block `k` of `w_input` stacked over `w_hidden`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmWeights {
    pub w_input: Tensor,
    pub w_hidden: Tensor,
    pub bias: Tensor,
}

impl LstmWeights {
    pub fn zeros(input: usize, state: usize) -> Self {
        LstmWeights {
            w_input: Tensor::zeros(&[input, 4 * state]),
            w_hidden: Tensor::zeros(&[state, 4 * state]),
            bias: Tensor::zeros(&[4 * state]),
        }
    }

    pub fn uniform<R: Rng>(input: usize, state: usize, bound: f64, rng: &mut R) -> Self {
        LstmWeights {
            w_input: Tensor::uniform(&[input, 4 * state], bound, rng),
            w_hidden: Tensor::uniform(&[state, 4 * state], bound, rng),
            bias: Tensor::uniform(&[4 * state], bound, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_input.rows()
    }

    pub fn state_dim(&self) -> usize {
        self.w_hidden.rows()
    }

    fn validate(&self) -> Result<()> {
        let d = self.state_dim();
        let ok = self.w_input.cols() == 4 * d
            && self.w_hidden.cols() == 4 * d
            && self.bias.len() == 4 * d;
        if !ok {
            return Err(Error::Contract(format!(
                "lstm gate blocks disagree: input {:?}, hidden {:?}, bias {:?}",
                self.w_input.shape(),
                self.w_hidden.shape(),
                self.bias.shape()
            )));
        }
        Ok(())
    }
}

/// Tape handles for an [`LstmWeights`] bundle.
#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    pub w_input: Var,
    pub w_hidden: Var,
    pub bias: Var,
}

/// One recurrent step given precomputed input-side gate pre-activations
/// (`x · w_input + bias`, plus any extra conditioning terms).
pub fn lstm_step(
    tape: &mut Tape,
    input_gates: Var,
    h_prev: Var,
    c_prev: Var,
    w_hidden: Var,
) -> Result<(Var, Var)> {
    let rec = tape.matmul(h_prev, w_hidden)?;
    let gates = tape.add(input_gates, rec)?;
    let hc = tape.lstm_pointwise(gates, c_prev)?;
    let d = tape.value(c_prev).cols();
    let h = tape.slice_cols(hc, 0, d)?;
    let c = tape.slice_cols(hc, d, d)?;
    Ok((h, c))
}

/// Full LSTM cell on the tape for row-batched `x: [B, a]`.
pub fn lstm_cell_on_tape(
    tape: &mut Tape,
    x: Var,
    h_prev: Var,
    c_prev: Var,
    w: &LstmVars,
) -> Result<(Var, Var)> {
    let xin = tape.matmul(x, w.w_input)?;
    let xin = tape.add_row(xin, w.bias)?;
    lstm_step(tape, xin, h_prev, c_prev, w.w_hidden)
}

/// Evaluates a single LSTM cell: `i, f, o = σ(·)`, `g = tanh(·)`,
/// `c = f ⊙ c_prev + i ⊙ g`, `h = o ⊙ tanh(c)`.
pub fn lstm_cell(
    x: &Tensor,
    h_prev: &Tensor,
    c_prev: &Tensor,
    w: &LstmWeights,
) -> Result<(Tensor, Tensor)> {
    w.validate()?;
    let (a, d) = (w.input_dim(), w.state_dim());
    if x.len() != a || h_prev.len() != d || c_prev.len() != d {
        return Err(Error::Contract(format!(
            "lstm_cell expects x[{a}], h[{d}], c[{d}]; got x[{}], h[{}], c[{}]",
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    let mut tape = Tape::new();
    let xv = tape.constant(x.as_matrix().reshape(vec![1, a])?);
    let hv = tape.constant(h_prev.reshape(vec![1, d])?);
    let cv = tape.constant(c_prev.reshape(vec![1, d])?);
    let vars = LstmVars {
        w_input: tape.constant(w.w_input.clone()),
        w_hidden: tape.constant(w.w_hidden.clone()),
        bias: tape.constant(w.bias.clone()),
    };
    let (h, c) = lstm_cell_on_tape(&mut tape, xv, hv, cv, &vars)?;
    Ok((
        tape.value(h).reshape(vec![d])?,
        tape.value(c).reshape(vec![d])?,
    ))
}
