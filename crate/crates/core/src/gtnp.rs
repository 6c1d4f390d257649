//! Graph-encoded transformer neural process.
//!
//! Every design becomes a token `embed([h(x), y, 0])` (context) or
//! `embed([h(x), 0, 1])` (target), where `h` is the GNN encoder and the last
//! slot is an optional is-target flag. A post-norm transformer without any
//! positional parameters runs under a diagonal mask: context tokens attend to
//! all context tokens, each target attends to the context and itself.

use std::path::Path;
use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{kernel_to_graph, Kernel, PragmaConfig, ProgramGraph};
use crate::nn::{checkpoint, Dropout, LayerNorm, Linear, ParamStore, Tape, Tensor, Var};
use crate::oracle::LabeledDesign;
use crate::surrogate::{GnnConfig, GnnEncoder, GraphBatch};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GtnpConfig {
    pub gnn: GnnConfig,
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff: usize,
    pub dropout: f64,
    pub max_seq_len: usize,
    /// Append an is-target bit to every token.
    pub target_flag: bool,
}

impl Default for GtnpConfig {
    fn default() -> Self {
        Self {
            gnn: GnnConfig::default(),
            d_model: 128,
            layers: 6,
            heads: 8,
            ff: 128,
            dropout: 0.1,
            max_seq_len: 128,
            target_flag: true,
        }
    }
}

/// Designs of one program under one label source: the first `m` points are
/// context, the rest targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub kernel_id: String,
    pub source_function: Option<String>,
    pub graphs: Vec<ProgramGraph>,
    pub ys: Vec<f64>,
    pub m: usize,
}

impl Sequence {
    pub fn from_designs(kernel: &Kernel, designs: &[&LabeledDesign], m: usize) -> Result<Self> {
        let graphs = designs
            .iter()
            .map(|d| kernel_to_graph(kernel, &d.config))
            .collect::<Result<Vec<_>>>()?;
        let seq = Self {
            kernel_id: kernel.id.clone(),
            source_function: designs.first().and_then(|d| d.source_function.clone()),
            graphs,
            ys: designs.iter().map(|d| d.y).collect(),
            m,
        };
        seq.check()?;
        Ok(seq)
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn num_targets(&self) -> usize {
        self.len() - self.m
    }

    pub fn check(&self) -> Result<()> {
        if self.graphs.len() != self.ys.len() {
            return Err(Error::InvalidArgument("sequence graphs and labels differ in length".into()));
        }
        if self.m == 0 || self.m >= self.len() {
            return Err(Error::InvalidArgument(format!(
                "sequence needs 1 <= m < N, got m = {} and N = {}",
                self.m,
                self.len()
            )));
        }
        Ok(())
    }
}

/// Additive mask: `0` where attention is allowed, `-inf` elsewhere.
pub fn attention_mask(n: usize, m: usize) -> Tensor {
    Tensor::from_shape_fn((n, n), |(i, j)| if j < m || i == j { 0.0 } else { f64::NEG_INFINITY })
}

#[derive(Clone, Debug, PartialEq)]
struct Block {
    wq: Linear,
    wk: Linear,
    wv: Linear,
    wo: Linear,
    ln1: LayerNorm,
    ff1: Linear,
    ff2: Linear,
    ln2: LayerNorm,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GtnpModel {
    pub config: GtnpConfig,
    pub seed: u64,
    pub store: ParamStore,
    encoder: GnnEncoder,
    embed1: Linear,
    embed2: Linear,
    blocks: Vec<Block>,
    head1: Linear,
    head2: Linear,
}

/// Where one sequence's rows sit in a batch.
struct Span {
    start: usize,
    n: usize,
    m: usize,
    mask: Rc<Tensor>,
}

/// Prefix of transformer parameter names.
pub const TRANSFORMER_PREFIX: &str = "transformer.";

impl GtnpModel {
    pub fn new(config: GtnpConfig, seed: u64) -> Result<Self> {
        if config.heads == 0 || !config.d_model.is_multiple_of(config.heads) {
            return Err(Error::InvalidArgument(format!(
                "d_model {} is not divisible by {} heads",
                config.d_model, config.heads
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::default();
        let encoder = GnnEncoder::new(&mut store, "encoder", config.gnn.clone(), &mut rng);
        let d = config.d_model;
        let token_in = config.gnn.hidden + 1 + usize::from(config.target_flag);
        let embed1 = Linear::new(&mut store, "embed.0", token_in, d, &mut rng);
        let embed2 = Linear::new(&mut store, "embed.1", d, d, &mut rng);
        let blocks = (0..config.layers)
            .map(|l| {
                let p = format!("{TRANSFORMER_PREFIX}{l}");
                Block {
                    wq: Linear::new(&mut store, &format!("{p}.q"), d, d, &mut rng),
                    wk: Linear::new(&mut store, &format!("{p}.k"), d, d, &mut rng),
                    wv: Linear::new(&mut store, &format!("{p}.v"), d, d, &mut rng),
                    wo: Linear::new(&mut store, &format!("{p}.o"), d, d, &mut rng),
                    ln1: LayerNorm::new(&mut store, &format!("{p}.ln1"), d),
                    ff1: Linear::new(&mut store, &format!("{p}.ff1"), d, config.ff, &mut rng),
                    ff2: Linear::new(&mut store, &format!("{p}.ff2"), config.ff, d, &mut rng),
                    ln2: LayerNorm::new(&mut store, &format!("{p}.ln2"), d),
                }
            })
            .collect();
        let head1 = Linear::new(&mut store, "head.0", d, d, &mut rng);
        let head2 = Linear::new(&mut store, "head.1", d, 1, &mut rng);
        Ok(Self {
            config,
            seed,
            store,
            encoder,
            embed1,
            embed2,
            blocks,
            head1,
            head2,
        })
    }

    pub fn transformer_parameters(&self) -> usize {
        self.store.count_with_prefix(TRANSFORMER_PREFIX)
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n > self.config.max_seq_len {
            return Err(Error::SequenceTooLong {
                len: n,
                max: self.config.max_seq_len,
            });
        }
        Ok(())
    }

    /// Graph embeddings, one row per graph.
    fn encode(&self, tape: &mut Tape, graphs: &[&ProgramGraph], dropout: &mut Dropout<'_>) -> Var {
        let batch = GraphBatch::new(graphs);
        self.encoder.forward(tape, &self.store, &batch, dropout)
    }

    /// Token rows from embeddings `h` and the label slot/flag columns.
    fn embed(&self, tape: &mut Tape, h: Var, ys: &[f64], spans: &[Span], dropout: &mut Dropout<'_>) -> Var {
        let cols = 1 + usize::from(self.config.target_flag);
        let mut extra = Tensor::zeros((ys.len(), cols));
        for s in spans {
            for i in 0..s.n {
                let r = s.start + i;
                if i < s.m {
                    extra[[r, 0]] = ys[r];
                } else if self.config.target_flag {
                    extra[[r, 1]] = 1.0;
                }
            }
        }
        let extra = tape.input(extra);
        let x = tape.concat_cols(&[h, extra]);
        let x = self.embed1.forward(tape, &self.store, x);
        let x = tape.relu(x);
        let x = dropout.elements(tape, x, self.config.dropout);
        self.embed2.forward(tape, &self.store, x)
    }

    fn block(&self, tape: &mut Tape, b: &Block, x: Var, spans: &[Span], dropout: &mut Dropout<'_>) -> Var {
        let s = &self.store;
        let (q, k, v) = (b.wq.forward(tape, s, x), b.wk.forward(tape, s, x), b.wv.forward(tape, s, x));
        let dh = self.config.d_model / self.config.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(spans.len());
        for sp in spans {
            let (qs, ks, vs) = (
                tape.slice_rows(q, sp.start, sp.n),
                tape.slice_rows(k, sp.start, sp.n),
                tape.slice_rows(v, sp.start, sp.n),
            );
            let mut heads = Vec::with_capacity(self.config.heads);
            for h in 0..self.config.heads {
                let qh = tape.slice_cols(qs, h * dh, dh);
                let kh = tape.slice_cols(ks, h * dh, dh);
                let vh = tape.slice_cols(vs, h * dh, dh);
                let scores = tape.matmul_t(qh, kh);
                let scores = tape.scale(scores, scale);
                let scores = tape.add_const(scores, sp.mask.clone());
                let attn = tape.softmax(scores);
                heads.push(tape.matmul(attn, vh));
            }
            outs.push(tape.concat_cols(&heads));
        }
        let att = tape.concat_rows(&outs);
        let att = b.wo.forward(tape, s, att);
        let att = dropout.elements(tape, att, self.config.dropout);
        let x = tape.add(x, att);
        let x = b.ln1.forward(tape, s, x);
        let f = b.ff1.forward(tape, s, x);
        let f = tape.relu(f);
        let f = b.ff2.forward(tape, s, f);
        let f = dropout.elements(tape, f, self.config.dropout);
        let x = tape.add(x, f);
        b.ln2.forward(tape, s, x)
    }

    /// Target predictions (`(N - m) x 1`) for each span, given embeddings.
    fn run(&self, tape: &mut Tape, h: Var, ys: &[f64], spans: &[Span], dropout: &mut Dropout<'_>) -> Vec<Var> {
        let mut x = self.embed(tape, h, ys, spans, dropout);
        for b in &self.blocks {
            x = self.block(tape, b, x, spans, dropout);
        }
        spans
            .iter()
            .map(|sp| {
                let t = tape.slice_rows(x, sp.start + sp.m, sp.n - sp.m);
                let t = self.head1.forward(tape, &self.store, t);
                let t = tape.relu(t);
                self.head2.forward(tape, &self.store, t)
            })
            .collect()
    }

    fn spans(&self, seqs: &[&Sequence]) -> Result<Vec<Span>> {
        let mut start = 0;
        let mut spans = Vec::with_capacity(seqs.len());
        for s in seqs {
            s.check()?;
            self.check_len(s.len())?;
            spans.push(Span {
                start,
                n: s.len(),
                m: s.m,
                mask: Rc::new(attention_mask(s.len(), s.m)),
            });
            start += s.len();
        }
        Ok(spans)
    }

    /// Per-sequence target predictions for a batch of sequences.
    pub fn forward_batch(&self, tape: &mut Tape, seqs: &[&Sequence], dropout: &mut Dropout<'_>) -> Result<Vec<Var>> {
        let spans = self.spans(seqs)?;
        let graphs: Vec<&ProgramGraph> = seqs.iter().flat_map(|s| s.graphs.iter()).collect();
        let ys: Vec<f64> = seqs.iter().flat_map(|s| s.ys.iter().copied()).collect();
        let h = self.encode(tape, &graphs, dropout);
        Ok(self.run(tape, h, &ys, &spans, dropout))
    }

    /// Mean over sequences of the target MSE.
    pub fn batch_loss(&self, tape: &mut Tape, seqs: &[&Sequence], dropout: &mut Dropout<'_>) -> Result<Var> {
        let preds = self.forward_batch(tape, seqs, dropout)?;
        let mut total: Option<Var> = None;
        for (p, s) in preds.into_iter().zip(seqs) {
            let target = Tensor::from_shape_vec((s.num_targets(), 1), s.ys[s.m..].to_vec()).expect("target column");
            let l = tape.mse(p, Rc::new(target));
            total = Some(match total {
                Some(t) => tape.add(t, l),
                None => l,
            });
        }
        let total = total.ok_or_else(|| Error::Empty("empty batch".into()))?;
        Ok(tape.scale(total, 1.0 / seqs.len() as f64))
    }

    /// Token matrix of `seq` (eval mode).
    pub fn tokenize(&self, seq: &Sequence) -> Result<Tensor> {
        let spans = self.spans(&[seq])?;
        let mut tape = Tape::new();
        let graphs: Vec<&ProgramGraph> = seq.graphs.iter().collect();
        let h = self.encode(&mut tape, &graphs, &mut Dropout::Off);
        let x = self.embed(&mut tape, h, &seq.ys, &spans, &mut Dropout::Off);
        Ok(tape.value(x).clone())
    }

    /// Eval-mode predictions for the targets of `seq`.
    pub fn predict(&self, seq: &Sequence) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let p = self.forward_batch(&mut tape, &[seq], &mut Dropout::Off)?;
        Ok(tape.value(p[0]).iter().copied().collect())
    }

    /// Eval-mode target MSE of `seq`.
    pub fn loss(&self, seq: &Sequence) -> Result<f64> {
        let mut tape = Tape::new();
        let l = self.batch_loss(&mut tape, &[seq], &mut Dropout::Off)?;
        Ok(tape.scalar(l))
    }

    /// Predict `queries` conditioned on `context`. Queries are processed in
    /// chunks that fit the maximum sequence length; targets never see each
    /// other, so chunking does not change the result.
    pub fn predict_in_context(&self, kernel: &Kernel, context: &[LabeledDesign], queries: &[PragmaConfig]) -> Result<Vec<f64>> {
        if context.is_empty() {
            return Err(Error::Empty("in-context prediction needs at least one context design".into()));
        }
        let m = context.len();
        self.check_len(m + 1)?;
        if queries.is_empty() {
            return Ok(Vec::new());
        }
        let ctx_graphs = context
            .iter()
            .map(|d| kernel_to_graph(kernel, &d.config))
            .collect::<Result<Vec<_>>>()?;
        let q_graphs = queries.iter().map(|c| kernel_to_graph(kernel, c)).collect::<Result<Vec<_>>>()?;
        let ctx_emb = {
            let mut tape = Tape::new();
            let refs: Vec<&ProgramGraph> = ctx_graphs.iter().collect();
            let h = self.encode(&mut tape, &refs, &mut Dropout::Off);
            tape.value(h).clone()
        };
        let chunk = self.config.max_seq_len - m;
        let mut out = Vec::with_capacity(queries.len());
        for qs in q_graphs.chunks(chunk) {
            let mut tape = Tape::new();
            let refs: Vec<&ProgramGraph> = qs.iter().collect();
            let hq = self.encode(&mut tape, &refs, &mut Dropout::Off);
            let hc = tape.input(ctx_emb.clone());
            let h = tape.concat_rows(&[hc, hq]);
            let n = m + qs.len();
            let mut ys: Vec<f64> = context.iter().map(|d| d.y).collect();
            ys.resize(n, 0.0);
            let spans = [Span {
                start: 0,
                n,
                m,
                mask: Rc::new(attention_mask(n, m)),
            }];
            let p = self.run(&mut tape, h, &ys, &spans, &mut Dropout::Off);
            out.extend(tape.value(p[0]).iter().copied());
        }
        Ok(out)
    }

    pub fn save(&self, dir: &Path, metadata: serde_json::Value) -> Result<()> {
        checkpoint::save(
            dir,
            &self.store,
            serde_json::json!({ "config": self.config, "seed": self.seed, "metadata": metadata }),
        )
    }

    pub fn load(dir: &Path) -> Result<(Self, serde_json::Value)> {
        let manifest = checkpoint::read_manifest(dir)?;
        let config: GtnpConfig = serde_json::from_value(manifest.metadata["config"].clone())?;
        let seed = manifest.metadata["seed"].as_u64().unwrap_or(0);
        let mut model = Self::new(config, seed)?;
        let manifest = checkpoint::load_into(dir, &mut model.store)?;
        Ok((model, manifest.metadata["metadata"].clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::fixtures::nest;
    use crate::kernel::{build_design_space, enumerate_configs, OpCounts};
    use crate::oracle::{Oracle, OracleConstants};

    fn micro(target_flag: bool) -> GtnpConfig {
        GtnpConfig {
            gnn: GnnConfig {
                hidden: 8,
                layers: 1,
                dropout: 0.1,
            },
            d_model: 8,
            layers: 1,
            heads: 2,
            ff: 8,
            dropout: 0.1,
            max_seq_len: 32,
            target_flag,
        }
    }

    fn designs(n: usize) -> (Kernel, Vec<LabeledDesign>) {
        let k = nest(16, 8, OpCounts::new(1, 0, 1, 1), OpCounts::new(2, 3, 2, 1));
        let oracle = Oracle::new(OracleConstants::default());
        let d = enumerate_configs(&build_design_space(&k), Some(n), 5)
            .iter()
            .map(|c| oracle.label(&k, c).unwrap())
            .collect();
        (k, d)
    }

    fn seq(k: &Kernel, d: &[LabeledDesign], m: usize) -> Sequence {
        let refs: Vec<&LabeledDesign> = d.iter().collect();
        Sequence::from_designs(k, &refs, m).unwrap()
    }

    fn max_abs(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn default_transformer_size() {
        let m = GtnpModel::new(GtnpConfig::default(), 0).unwrap();
        let n = m.transformer_parameters();
        assert_eq!(n, 6 * 99_584);
        assert!((n as f64 - 591_000.0).abs() <= 0.15 * 591_000.0);
        for id in m.store.ids() {
            assert!(!m.store.name(id).contains("pos"));
        }
    }

    #[test]
    fn mask_shape() {
        let mask = attention_mask(4, 2);
        let allowed = |i: usize, j: usize| mask[[i, j]] == 0.0;
        assert!(allowed(0, 1) && allowed(1, 0) && !allowed(0, 2) && !allowed(1, 3));
        assert!(allowed(2, 0) && allowed(2, 2) && !allowed(2, 3) && !allowed(3, 2) && allowed(3, 3));
    }

    #[test]
    fn tokenize_examples() {
        let (k, mut d) = designs(6);
        let model = GtnpModel::new(micro(false), 1).unwrap();
        d[5] = d[0].clone();
        d[0].y = 0.0;
        let t = model.tokenize(&seq(&k, &d, 5)).unwrap();
        assert!(max_abs(t.row(0).as_slice().unwrap(), t.row(5).as_slice().unwrap()) < 1e-12);

        let (k, d) = designs(6);
        let base = model.tokenize(&seq(&k, &d, 3)).unwrap();
        let mut d2 = d.clone();
        d2[1].y += 1.5;
        let changed = model.tokenize(&seq(&k, &d2, 3)).unwrap();
        for r in 0..6 {
            let diff = max_abs(base.row(r).as_slice().unwrap(), changed.row(r).as_slice().unwrap());
            assert_eq!(diff > 0.0, r == 1, "row {r}");
        }

        let flagged = GtnpModel::new(micro(true), 1).unwrap();
        let mut d3 = d.clone();
        d3[5] = d3[0].clone();
        d3[0].y = 0.0;
        let t = flagged.tokenize(&seq(&k, &d3, 5)).unwrap();
        assert!(max_abs(t.row(0).as_slice().unwrap(), t.row(5).as_slice().unwrap()) > 0.0);
    }

    #[test]
    fn permutation_properties() {
        let (k, d) = designs(12);
        let model = GtnpModel::new(micro(true), 2).unwrap();
        let base = model.predict(&seq(&k, &d, 7)).unwrap();
        assert_eq!(base.len(), 5);

        let mut ctx_perm = d.clone();
        ctx_perm[..7].reverse();
        ctx_perm.swap(0, 3);
        assert!(max_abs(&base, &model.predict(&seq(&k, &ctx_perm, 7)).unwrap()) < 1e-5);

        let mut tgt_perm = d.clone();
        tgt_perm[7..].reverse();
        let mut p = model.predict(&seq(&k, &tgt_perm, 7)).unwrap();
        p.reverse();
        assert!(max_abs(&base, &p) < 1e-5);

        let mut dropped = d.clone();
        dropped.remove(9);
        let p = model.predict(&seq(&k, &dropped, 7)).unwrap();
        let expect: Vec<f64> = base.iter().enumerate().filter(|&(i, _)| i != 2).map(|(_, v)| *v).collect();
        assert!(max_abs(&expect, &p) < 1e-5);
    }

    #[test]
    fn loss_is_target_mse() {
        let (k, d) = designs(8);
        let model = GtnpModel::new(micro(true), 3).unwrap();
        let s = seq(&k, &d, 5);
        let pred = model.predict(&s).unwrap();
        let expect = pred.iter().zip(&s.ys[5..]).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / 3.0;
        assert!((model.loss(&s).unwrap() - expect).abs() < 1e-12);
        let mut perfect = s.clone();
        perfect.ys[5..].copy_from_slice(&pred);
        assert!(model.loss(&perfect).unwrap() < 1e-20);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (k, d) = designs(7);
        let s = seq(&k, &d, 4);
        let mut model = GtnpModel::new(micro(true), 4).unwrap();
        let eval = |m: &GtnpModel| {
            let mut t = Tape::new();
            let l = m.batch_loss(&mut t, &[&s], &mut Dropout::Off).unwrap();
            (t.scalar(l), t.backward(l))
        };
        let (_, grads) = eval(&model);
        let h = 1e-5;
        let (mut ok, mut total) = (0, 0);
        for (id, g) in &grads {
            for idx in ndarray::indices(model.store.get(*id).raw_dim()) {
                let orig = model.store.get(*id)[idx];
                model.store.get_mut(*id)[idx] = orig + h;
                let up = eval(&model).0;
                model.store.get_mut(*id)[idx] = orig - h;
                let down = eval(&model).0;
                model.store.get_mut(*id)[idx] = orig;
                let num = (up - down) / (2.0 * h);
                let err = (num - g[idx]).abs() / num.abs().max(g[idx].abs()).max(1e-8);
                total += 1;
                if err < 1e-3 || (num - g[idx]).abs() < 1e-9 {
                    ok += 1;
                }
            }
        }
        assert!(ok as f64 >= 0.99 * total as f64, "{ok}/{total}");
    }

    #[test]
    fn in_context_prediction() {
        let (k, d) = designs(60);
        let model = GtnpModel::new(micro(true), 5).unwrap();
        let ctx = &d[..20];
        let queries: Vec<PragmaConfig> = d[20..].iter().map(|x| x.config.clone()).collect();
        let out = model.predict_in_context(&k, ctx, &queries[..10]).unwrap();
        assert_eq!(out.len(), 10);
        assert_eq!(out, model.predict_in_context(&k, ctx, &queries[..10]).unwrap());
        // 40 queries need several chunks with max_seq_len 32; equals one-by-one.
        let all = model.predict_in_context(&k, ctx, &queries).unwrap();
        for (i, q) in queries.iter().enumerate().step_by(7) {
            let one = model.predict_in_context(&k, ctx, std::slice::from_ref(q)).unwrap();
            assert!((one[0] - all[i]).abs() < 1e-9);
        }
        assert!(model.predict_in_context(&k, &[], &queries).is_err());
        assert!(matches!(
            model.predict_in_context(&k, &d[..40], &queries),
            Err(Error::SequenceTooLong { .. })
        ));
    }

    #[test]
    fn too_long_sequence_is_rejected() {
        let (k, d) = designs(40);
        let model = GtnpModel::new(micro(true), 6).unwrap();
        assert!(matches!(
            model.predict(&seq(&k, &d, 10)),
            Err(Error::SequenceTooLong { len: 40, max: 32 })
        ));
        let refs: Vec<&LabeledDesign> = d.iter().take(3).collect();
        assert!(Sequence::from_designs(&k, &refs, 3).is_err());
        assert!(Sequence::from_designs(&k, &refs, 0).is_err());
    }

    #[test]
    fn checkpoint_roundtrip() {
        let model = GtnpModel::new(micro(true), 7).unwrap();
        let dir = tempfile::tempdir().unwrap();
        model.save(dir.path(), serde_json::json!({"dataset": "abc"})).unwrap();
        let (back, meta) = GtnpModel::load(dir.path()).unwrap();
        assert_eq!(back, model);
        assert_eq!(meta["dataset"], "abc");
    }
}
