//! Minimal dense neural-network toolkit: autodiff tape, parameters, AdamW
//! and parameter archives.

pub mod checkpoint;
mod optim;
mod params;
mod tape;

pub use optim::{accumulate, scale_grads, AdamW, AdamWConfig};
pub use params::{LayerNorm, Linear, ParamId, ParamStore};
pub use tape::{Segments, SparseMatrix, Tape, Tensor, Var, LAYER_NORM_EPS};

use std::rc::Rc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Per-channel ("neuron") dropout masks, one per dropout site, already
/// scaled by `1 / (1 - rate)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelMasks {
    pub sites: Vec<Rc<Vec<f64>>>,
}

impl ChannelMasks {
    pub fn sample(widths: &[usize], rate: f64, rng: &mut impl Rng) -> Self {
        Self {
            sites: widths.iter().map(|&w| Rc::new(sample_channel_mask(w, rate, rng))).collect(),
        }
    }
}

pub fn sample_channel_mask(width: usize, rate: f64, rng: &mut impl Rng) -> Vec<f64> {
    if rate <= 0.0 {
        return vec![1.0; width];
    }
    let keep = 1.0 / (1.0 - rate);
    (0..width).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }).collect()
}

/// How dropout sites behave during a forward pass.
pub enum Dropout<'a> {
    /// Identity (evaluation).
    Off,
    /// Fresh random masks at every site.
    Sample(&'a mut ChaCha8Rng),
    /// Fixed per-channel masks, indexed by site.
    Frozen(&'a ChannelMasks),
}

impl Dropout<'_> {
    pub fn is_off(&self) -> bool {
        matches!(self, Dropout::Off)
    }

    /// Channel dropout on `x` at `site`.
    pub fn channels(&mut self, tape: &mut Tape, x: Var, site: usize, rate: f64) -> Var {
        match self {
            Dropout::Off => x,
            Dropout::Sample(rng) => {
                if rate <= 0.0 {
                    return x;
                }
                let w = tape.value(x).ncols();
                let mask = sample_channel_mask(w, rate, *rng);
                tape.mask_cols(x, Rc::new(mask))
            }
            Dropout::Frozen(m) => tape.mask_cols(x, m.sites[site].clone()),
        }
    }

    /// Element-wise dropout; frozen masks are not used here.
    pub fn elements(&mut self, tape: &mut Tape, x: Var, rate: f64) -> Var {
        match self {
            Dropout::Sample(rng) if rate > 0.0 => {
                let keep = 1.0 / (1.0 - rate);
                let shape = tape.value(x).raw_dim();
                let mask = Tensor::from_shape_simple_fn(shape, || if rng.random::<f64>() < rate { 0.0 } else { keep });
                tape.mask_elems(x, Rc::new(mask))
            }
            _ => x,
        }
    }
}
