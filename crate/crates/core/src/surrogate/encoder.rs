//! Relational message-passing encoder over [`ProgramGraph`]s.
//!
//! Each node type has its own input projection. A layer computes
//! `relu([h, A_1 h, .., A_R h] W + b)` with one symmetric sum-aggregation
//! matrix `A_r` per edge kind, followed by channel dropout. The graph
//! embedding is the mean of the final node states.

use std::rc::Rc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::kernel::{EdgeKind, NodeKind, PipelineMode, ProgramGraph, STATIC_FEATURES};
use crate::nn::{Dropout, Linear, ParamStore, Segments, SparseMatrix, Tape, Tensor, Var};

/// Static features plus `[log2 p, off, cg, fg, log2 t]`.
pub const NODE_INPUT: usize = STATIC_FEATURES + 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GnnConfig {
    pub hidden: usize,
    pub layers: usize,
    pub dropout: f64,
}

impl Default for GnnConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            layers: 3,
            dropout: 0.1,
        }
    }
}

/// A set of graphs merged into one block-diagonal graph, nodes grouped by kind.
pub struct GraphBatch {
    /// Input features per node kind (`None` when the kind is absent).
    pub features: Vec<Option<Tensor>>,
    pub relations: Vec<Rc<SparseMatrix>>,
    pub segments: Rc<Segments>,
    pub num_graphs: usize,
}

impl GraphBatch {
    pub fn new(graphs: &[&ProgramGraph]) -> Self {
        let mut rows: Vec<Vec<[f64; NODE_INPUT]>> = vec![Vec::new(); NodeKind::ALL.len()];
        let mut local: Vec<Vec<(usize, usize)>> = Vec::with_capacity(graphs.len());
        for g in graphs {
            let mut map = Vec::with_capacity(g.nodes.len());
            for n in &g.nodes {
                let kind = n.kind.index();
                map.push((kind, rows[kind].len()));
                let mut f = [0.0; NODE_INPUT];
                f[..STATIC_FEATURES].copy_from_slice(&n.static_features);
                if n.kind == NodeKind::PragmaSlot {
                    let mode = n.pragma_features[1].round() as usize;
                    f[STATIC_FEATURES] = n.pragma_features[0];
                    f[STATIC_FEATURES + 1 + mode.min(PipelineMode::ALL.len() - 1)] = 1.0;
                    f[STATIC_FEATURES + 4] = n.pragma_features[2];
                }
                rows[kind].push(f);
            }
            local.push(map);
        }
        let mut offsets = vec![0; NodeKind::ALL.len()];
        for k in 1..offsets.len() {
            offsets[k] = offsets[k - 1] + rows[k - 1].len();
        }
        let total: usize = rows.iter().map(Vec::len).sum();
        let mut group_of = vec![0; total];
        let mut relations: Vec<SparseMatrix> = EdgeKind::ALL.iter().map(|_| SparseMatrix::new(total, total)).collect();
        for (gi, (g, map)) in graphs.iter().zip(&local).enumerate() {
            let global = |i: usize| offsets[map[i].0] + map[i].1;
            for i in 0..g.nodes.len() {
                group_of[global(i)] = gi;
            }
            for &(a, b, kind) in &g.edges {
                let (a, b) = (global(a), global(b));
                relations[kind.index()].push(a, b, 1.0);
                relations[kind.index()].push(b, a, 1.0);
            }
        }
        let features = rows
            .into_iter()
            .map(|r| {
                if r.is_empty() {
                    None
                } else {
                    let n = r.len();
                    Some(Tensor::from_shape_vec((n, NODE_INPUT), r.into_iter().flatten().collect()).expect("row width"))
                }
            })
            .collect();
        GraphBatch {
            features,
            relations: relations.into_iter().map(Rc::new).collect(),
            segments: Rc::new(Segments::new(group_of, graphs.len())),
            num_graphs: graphs.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GnnEncoder {
    pub config: GnnConfig,
    pub input: Vec<Linear>,
    pub layers: Vec<Linear>,
}

impl GnnEncoder {
    pub fn new(store: &mut ParamStore, prefix: &str, config: GnnConfig, rng: &mut impl Rng) -> Self {
        let h = config.hidden;
        let input = NodeKind::ALL
            .iter()
            .map(|k| Linear::new(store, &format!("{prefix}.input.{k:?}"), NODE_INPUT, h, rng))
            .collect();
        let fan_in = h * (1 + EdgeKind::ALL.len());
        let layers = (0..config.layers)
            .map(|l| Linear::new(store, &format!("{prefix}.layer{l}"), fan_in, h, rng))
            .collect();
        Self { config, input, layers }
    }

    pub fn width(&self) -> usize {
        self.config.hidden
    }

    /// Widths of the dropout sites, in site order.
    pub fn dropout_widths(&self) -> Vec<usize> {
        vec![self.config.hidden; self.config.layers]
    }

    /// One embedding row per graph in the batch.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, batch: &GraphBatch, dropout: &mut Dropout<'_>) -> Var {
        let mut parts = Vec::new();
        for (lin, feats) in self.input.iter().zip(&batch.features) {
            if let Some(f) = feats {
                let x = tape.input(f.clone());
                parts.push(lin.forward(tape, store, x));
            }
        }
        if parts.is_empty() {
            return tape.input(Tensor::zeros((batch.num_graphs, self.config.hidden)));
        }
        let mut h = tape.concat_rows(&parts);
        for (i, layer) in self.layers.iter().enumerate() {
            let mut msgs = Vec::with_capacity(1 + batch.relations.len());
            msgs.push(h);
            for a in &batch.relations {
                msgs.push(tape.spmm(a.clone(), h));
            }
            let cat = tape.concat_cols(&msgs);
            let z = layer.forward(tape, store, cat);
            h = tape.relu(z);
            h = dropout.channels(tape, h, i, self.config.dropout);
        }
        tape.segment_mean(h, batch.segments.clone())
    }
}
