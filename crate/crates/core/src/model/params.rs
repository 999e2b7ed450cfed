use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Architecture sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub embed_dim: usize,
    /// Per-direction encoder width; the decoder uses the same width.
    pub hidden_dim: usize,
    pub encoder_layers: usize,
    /// Row width of the learned frame table.
    pub frame_dim: usize,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 32,
            hidden_dim: 64,
            encoder_layers: 2,
            frame_dim: 64,
            init_scale: 0.08,
            seed: 1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.hidden_dim == 0 || self.encoder_layers == 0 || self.frame_dim == 0 {
            return Err(Error::InvalidArgument("model dimensions must be positive".into()));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(Error::InvalidArgument("init scale must be a finite non-negative number".into()));
        }
        Ok(())
    }
}

/// Gate blocks of one LSTM, laid out as in [`crate::autodiff::LstmWeights`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lstm<T> {
    pub w_input: T,
    pub w_hidden: T,
    pub bias: T,
}

/// Every parameter of the encoder-decoder, generic over the slot type so the
/// same layout holds tensors, tape handles or gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params<T> {
    pub embed: T,
    /// One `[forward, backward]` pair per encoder layer.
    pub encoder: Vec<[Lstm<T>; 2]>,
    /// Attribute input weights of the first encoder layer, per direction.
    pub encoder_z: Option<[T; 2]>,
    pub bridge_h: T,
    pub bridge_h_bias: T,
    pub bridge_c: T,
    pub bridge_c_bias: T,
    pub decoder: Lstm<T>,
    pub decoder_z: Option<T>,
    pub attention: T,
    pub combine: T,
    pub output: T,
    pub output_bias: T,
    /// Learned frame embeddings, present only for frame-set conditioning.
    pub frame_table: Option<T>,
}

pub type ModelParams = Params<Tensor>;

impl<T> Params<T> {
    /// Slots in a fixed canonical order.
    pub fn slots(&self) -> Vec<&T> {
        let mut out = vec![&self.embed];
        for pair in &self.encoder {
            for l in pair {
                out.extend([&l.w_input, &l.w_hidden, &l.bias]);
            }
        }
        if let Some(z) = &self.encoder_z {
            out.extend(z.iter());
        }
        out.extend([
            &self.bridge_h,
            &self.bridge_h_bias,
            &self.bridge_c,
            &self.bridge_c_bias,
            &self.decoder.w_input,
            &self.decoder.w_hidden,
            &self.decoder.bias,
        ]);
        out.extend(self.decoder_z.iter());
        out.extend([&self.attention, &self.combine, &self.output, &self.output_bias]);
        out.extend(self.frame_table.iter());
        out
    }

    pub fn slots_mut(&mut self) -> Vec<&mut T> {
        let mut out = vec![&mut self.embed];
        for pair in &mut self.encoder {
            for l in pair {
                out.extend([&mut l.w_input, &mut l.w_hidden, &mut l.bias]);
            }
        }
        if let Some(z) = &mut self.encoder_z {
            out.extend(z.iter_mut());
        }
        out.extend([
            &mut self.bridge_h,
            &mut self.bridge_h_bias,
            &mut self.bridge_c,
            &mut self.bridge_c_bias,
            &mut self.decoder.w_input,
            &mut self.decoder.w_hidden,
            &mut self.decoder.bias,
        ]);
        out.extend(self.decoder_z.iter_mut());
        out.extend([
            &mut self.attention,
            &mut self.combine,
            &mut self.output,
            &mut self.output_bias,
        ]);
        out.extend(self.frame_table.iter_mut());
        out
    }

    /// Same layout with each slot replaced, visiting slots in canonical order.
    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> Params<U> {
        let lstm = |l: &Lstm<T>, f: &mut dyn FnMut(&T) -> U| Lstm {
            w_input: f(&l.w_input),
            w_hidden: f(&l.w_hidden),
            bias: f(&l.bias),
        };
        let embed = f(&self.embed);
        let encoder = self
            .encoder
            .iter()
            .map(|[a, b]| {
                let a = lstm(a, &mut f);
                let b = lstm(b, &mut f);
                [a, b]
            })
            .collect();
        let encoder_z = self.encoder_z.as_ref().map(|[a, b]| {
            let a = f(a);
            [a, f(b)]
        });
        let bridge_h = f(&self.bridge_h);
        let bridge_h_bias = f(&self.bridge_h_bias);
        let bridge_c = f(&self.bridge_c);
        let bridge_c_bias = f(&self.bridge_c_bias);
        let decoder = lstm(&self.decoder, &mut f);
        let decoder_z = self.decoder_z.as_ref().map(&mut f);
        let attention = f(&self.attention);
        let combine = f(&self.combine);
        let output = f(&self.output);
        let output_bias = f(&self.output_bias);
        let frame_table = self.frame_table.as_ref().map(&mut f);
        Params {
            embed,
            encoder,
            encoder_z,
            bridge_h,
            bridge_h_bias,
            bridge_c,
            bridge_c_bias,
            decoder,
            decoder_z,
            attention,
            combine,
            output,
            output_bias,
            frame_table,
        }
    }

    /// Rebuilds this layout from values given in canonical order.
    pub fn rebuild<U>(&self, values: Vec<U>) -> Result<Params<U>> {
        let n = self.slots().len();
        if values.len() != n {
            return Err(Error::shape("params", format!("{n} slots, {} values", values.len())));
        }
        let mut it = values.into_iter();
        Ok(self.map(|_| it.next().expect("length checked")))
    }
}

impl ModelParams {
    /// Uniform initialization in `±init_scale`.
    pub fn init(cfg: &ModelConfig, vocab_size: usize, z_dim: usize, frames: Option<usize>) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let s = cfg.init_scale;
        let (e, h) = (cfg.embed_dim, cfg.hidden_dim);
        let mut u = |shape: &[usize]| Tensor::uniform(shape, s, &mut rng);
        let lstm = |input: usize, u: &mut dyn FnMut(&[usize]) -> Tensor| Lstm {
            w_input: u(&[input, 4 * h]),
            w_hidden: u(&[h, 4 * h]),
            bias: u(&[4 * h]),
        };
        let embed = u(&[vocab_size, e]);
        let mut encoder = Vec::with_capacity(cfg.encoder_layers);
        for layer in 0..cfg.encoder_layers {
            let input = if layer == 0 { e } else { 2 * h };
            let fwd = lstm(input, &mut u);
            let bwd = lstm(input, &mut u);
            encoder.push([fwd, bwd]);
        }
        let encoder_z = (z_dim > 0).then(|| [u(&[z_dim, 4 * h]), u(&[z_dim, 4 * h])]);
        let bridge_h = u(&[2 * h, h]);
        let bridge_h_bias = u(&[h]);
        let bridge_c = u(&[2 * h, h]);
        let bridge_c_bias = u(&[h]);
        let decoder = lstm(e, &mut u);
        let decoder_z = (z_dim > 0).then(|| u(&[z_dim, 4 * h]));
        let attention = u(&[h, 2 * h]);
        let combine = u(&[3 * h, h]);
        let output = u(&[h, vocab_size]);
        let output_bias = u(&[vocab_size]);
        let frame_table = frames.map(|rows| u(&[rows, z_dim]));
        Ok(Params {
            embed,
            encoder,
            encoder_z,
            bridge_h,
            bridge_h_bias,
            bridge_c,
            bridge_c_bias,
            decoder,
            decoder_z,
            attention,
            combine,
            output,
            output_bias,
            frame_table,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.embed.rows()
    }

    pub fn embed_dim(&self) -> usize {
        self.embed.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.decoder.w_hidden.rows()
    }

    pub fn z_dim(&self) -> usize {
        self.decoder_z.as_ref().map_or(0, Tensor::rows)
    }

    pub fn is_finite(&self) -> bool {
        self.slots().iter().all(|t| t.is_finite())
    }

    /// Records every slot as a trainable leaf.
    pub fn bind_trainable(&self, tape: &mut Tape) -> Params<Var> {
        self.map(|t| tape.param(t.clone()))
    }

    /// Records every slot as a constant.
    pub fn bind_constant(&self, tape: &mut Tape) -> Params<Var> {
        self.map(|t| tape.constant(t.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_order_is_shared() {
        let cfg = ModelConfig {
            embed_dim: 3,
            hidden_dim: 2,
            ..ModelConfig::default()
        };
        let p = ModelParams::init(&cfg, 7, 4, Some(5)).unwrap();
        let shapes: Vec<Vec<usize>> = p.slots().iter().map(|t| t.shape().to_vec()).collect();
        let mapped = p.map(|t| t.shape().to_vec());
        let mapped_slots: Vec<Vec<usize>> = mapped.slots().into_iter().cloned().collect();
        assert_eq!(shapes, mapped_slots);
        let rebuilt = p.rebuild(p.slots().into_iter().cloned().collect()).unwrap();
        assert_eq!(rebuilt, p);
        assert_eq!(p.z_dim(), 4);
        assert_eq!(p.frame_table.as_ref().unwrap().shape(), [5, 4]);
    }

    #[test]
    fn initialization_is_bounded_and_seeded() {
        let cfg = ModelConfig::default();
        let a = ModelParams::init(&cfg, 20, 0, None).unwrap();
        let b = ModelParams::init(&cfg, 20, 0, None).unwrap();
        assert_eq!(a, b);
        assert!(a.slots().iter().all(|t| t.data().iter().all(|v| v.abs() <= 0.08)));
        assert!(a.encoder_z.is_none() && a.decoder_z.is_none());
    }
}
