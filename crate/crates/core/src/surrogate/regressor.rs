use std::rc::Rc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::encoder::{GnnConfig, GnnEncoder, GraphBatch};
use crate::kernel::ProgramGraph;
use crate::nn::{AdamW, AdamWConfig, ChannelMasks, Dropout, Linear, ParamStore, Tape, Tensor, Var};

const PREDICT_CHUNK: usize = 128;

/// GNN encoder followed by a two-layer perceptron head.
#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateRegressor {
    pub seed: u64,
    pub store: ParamStore,
    pub encoder: GnnEncoder,
    pub hidden: Linear,
    pub out: Linear,
}

/// Mini-batch training settings for one regressor.
#[derive(Clone, Debug)]
pub struct FitOptions {
    pub epochs: usize,
    pub batch: usize,
    pub optimizer: AdamWConfig,
}

impl SurrogateRegressor {
    pub fn new(config: GnnConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::default();
        let h = config.hidden;
        let encoder = GnnEncoder::new(&mut store, "encoder", config, &mut rng);
        let hidden = Linear::new(&mut store, "head.hidden", h, h, &mut rng);
        let out = Linear::new(&mut store, "head.out", h, 1, &mut rng);
        Self {
            seed,
            store,
            encoder,
            hidden,
            out,
        }
    }

    pub fn config(&self) -> &GnnConfig {
        &self.encoder.config
    }

    /// Encoder sites, then the head's hidden layer.
    pub fn dropout_widths(&self) -> Vec<usize> {
        let mut w = self.encoder.dropout_widths();
        w.push(self.config().hidden);
        w
    }

    pub fn forward(&self, tape: &mut Tape, batch: &GraphBatch, dropout: &mut Dropout<'_>) -> Var {
        let h = self.encoder.forward(tape, &self.store, batch, dropout);
        let z = self.hidden.forward(tape, &self.store, h);
        let z = tape.relu(z);
        let z = dropout.channels(tape, z, self.config().layers, self.config().dropout);
        self.out.forward(tape, &self.store, z)
    }

    /// Predictions without gradient tracking; `masks` freezes dropout.
    pub fn predict(&self, graphs: &[&ProgramGraph], masks: Option<&ChannelMasks>) -> Vec<f64> {
        let mut out = Vec::with_capacity(graphs.len());
        for chunk in graphs.chunks(PREDICT_CHUNK) {
            let batch = GraphBatch::new(chunk);
            let mut tape = Tape::new();
            let mut dropout = match masks {
                Some(m) => Dropout::Frozen(m),
                None => Dropout::Off,
            };
            let y = self.forward(&mut tape, &batch, &mut dropout);
            out.extend(tape.value(y).iter().copied());
        }
        out
    }

    pub fn mse(&self, data: &[(ProgramGraph, f64)]) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let graphs: Vec<&ProgramGraph> = data.iter().map(|(g, _)| g).collect();
        let pred = self.predict(&graphs, None);
        pred.iter().zip(data).map(|(p, (_, y))| (p - y).powi(2)).sum::<f64>() / data.len() as f64
    }

    /// Train with dropout on `train`; keeps the parameters with the best
    /// validation MSE (or the last ones when `val` is empty).
    pub fn fit(&mut self, train: &[(ProgramGraph, f64)], val: &[(ProgramGraph, f64)], opts: &FitOptions, rng: &mut ChaCha8Rng) {
        if train.is_empty() {
            return;
        }
        let mut opt = AdamW::new(opts.optimizer.clone(), &self.store);
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut best = (f64::INFINITY, self.store.clone());
        for _ in 0..opts.epochs {
            order.shuffle(rng);
            for chunk in order.chunks(opts.batch.max(1)) {
                let graphs: Vec<&ProgramGraph> = chunk.iter().map(|&i| &train[i].0).collect();
                let target = Tensor::from_shape_fn((chunk.len(), 1), |(r, _)| train[chunk[r]].1);
                let batch = GraphBatch::new(&graphs);
                let mut tape = Tape::new();
                let y = self.forward(&mut tape, &batch, &mut Dropout::Sample(rng));
                let loss = tape.mse(y, Rc::new(target));
                let grads = tape.backward(loss);
                opt.step(&mut self.store, &grads);
            }
            if !val.is_empty() {
                let v = self.mse(val);
                if v < best.0 {
                    best = (v, self.store.clone());
                }
            }
        }
        if best.0.is_finite() {
            self.store = best.1;
        }
    }
}
