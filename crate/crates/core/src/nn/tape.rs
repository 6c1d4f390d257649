//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Parameters enter
//! through [`Tape::param`] and [`Tape::backward`] returns their gradients.

use std::collections::HashMap;
use std::rc::Rc;

use ndarray::{concatenate, s, Array2, Axis};

use super::params::{ParamId, ParamStore};

pub type Tensor = Array2<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Sparse `rows x cols` matrix as per-row `(col, weight)` lists.
#[derive(Clone, Debug, Default)]
pub struct SparseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<Vec<(usize, f64)>>,
}

impl SparseMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![Vec::new(); rows],
        }
    }

    pub fn push(&mut self, row: usize, col: usize, w: f64) {
        self.entries[row].push((col, w));
    }

    fn mul(&self, x: &Tensor) -> Tensor {
        let mut out = Tensor::zeros((self.rows, x.ncols()));
        for (i, row) in self.entries.iter().enumerate() {
            let mut o = out.row_mut(i);
            for &(j, w) in row {
                o.scaled_add(w, &x.row(j));
            }
        }
        out
    }

    fn mul_transposed(&self, g: &Tensor) -> Tensor {
        let mut out = Tensor::zeros((self.cols, g.ncols()));
        for (i, row) in self.entries.iter().enumerate() {
            for &(j, w) in row {
                out.row_mut(j).scaled_add(w, &g.row(i));
            }
        }
        out
    }
}

/// Assignment of rows to groups, for per-group mean pooling.
#[derive(Clone, Debug)]
pub struct Segments {
    pub group_of: Vec<usize>,
    pub counts: Vec<usize>,
}

impl Segments {
    pub fn new(group_of: Vec<usize>, groups: usize) -> Self {
        let mut counts = vec![0; groups];
        for &g in &group_of {
            counts[g] += 1;
        }
        Self { group_of, counts }
    }
}

enum Op {
    Input,
    Param,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MaskCols(Var, Rc<Vec<f64>>),
    MaskElems(Var, Rc<Tensor>),
    AddConst(Var),
    Relu(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Tensor,
        inv_std: Vec<f64>,
    },
    Softmax(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize, usize),
    SliceRows(Var, usize, usize),
    SpMM(Var, Rc<SparseMatrix>),
    SegmentMean(Var, Rc<Segments>),
    Mse(Var, Rc<Tensor>),
}

struct Node {
    value: Tensor,
    op: Op,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.get(id).clone(), Op::Param);
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(&self.value(b).t());
        self.push(v, Op::MatMulT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    /// Adds the `1 x n` row `b` to every row of `x`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Var {
        let v = self.value(x) + self.value(b);
        self.push(v, Op::AddRow(x, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let v = self.value(x) * c;
        self.push(v, Op::Scale(x, c))
    }

    /// Multiplies column `j` by `mask[j]`.
    pub fn mask_cols(&mut self, x: Var, mask: Rc<Vec<f64>>) -> Var {
        let mut v = self.value(x).clone();
        for mut row in v.rows_mut() {
            for (e, m) in row.iter_mut().zip(mask.iter()) {
                *e *= m;
            }
        }
        self.push(v, Op::MaskCols(x, mask))
    }

    pub fn mask_elems(&mut self, x: Var, mask: Rc<Tensor>) -> Var {
        let v = self.value(x) * &*mask;
        self.push(v, Op::MaskElems(x, mask))
    }

    /// Adds a constant matrix (e.g. an attention mask of `0` / `-inf`).
    pub fn add_const(&mut self, x: Var, c: Rc<Tensor>) -> Var {
        let v = self.value(x) + &*c;
        self.push(v, Op::AddConst(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(|e| e.max(0.0));
        self.push(v, Op::Relu(x))
    }

    /// Row-wise layer norm with affine `gamma`, `beta` (both `1 x n`).
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = self.value(x);
        let n = xv.ncols() as f64;
        let mut xhat = xv.clone();
        let mut inv_std = Vec::with_capacity(xv.nrows());
        for mut row in xhat.rows_mut() {
            let mean = row.sum() / n;
            let var = row.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            row.mapv_inplace(|e| (e - mean) * is);
            inv_std.push(is);
        }
        let v = &xhat * self.value(gamma) + self.value(beta);
        self.push(
            v,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        )
    }

    /// Row-wise softmax. Entries equal to `-inf` get probability zero; every
    /// row must keep at least one finite entry.
    pub fn softmax(&mut self, x: Var) -> Var {
        let mut v = self.value(x).clone();
        for mut row in v.rows_mut() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|e| if e == f64::NEG_INFINITY { 0.0 } else { (e - max).exp() });
            let sum = row.sum();
            row.mapv_inplace(|e| e / sum);
        }
        self.push(v, Op::Softmax(x))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = concatenate(Axis(1), &views).expect("row counts agree");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = concatenate(Axis(0), &views).expect("column counts agree");
        self.push(v, Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let v = self.value(x).slice(s![.., start..start + len]).to_owned();
        self.push(v, Op::SliceCols(x, start, len))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Var {
        let v = self.value(x).slice(s![start..start + len, ..]).to_owned();
        self.push(v, Op::SliceRows(x, start, len))
    }

    /// `a · x` for a constant sparse `a`.
    pub fn spmm(&mut self, a: Rc<SparseMatrix>, x: Var) -> Var {
        let v = a.mul(self.value(x));
        self.push(v, Op::SpMM(x, a))
    }

    pub fn segment_mean(&mut self, x: Var, seg: Rc<Segments>) -> Var {
        let xv = self.value(x);
        let mut v = Tensor::zeros((seg.counts.len(), xv.ncols()));
        for (i, &g) in seg.group_of.iter().enumerate() {
            v.row_mut(g).scaled_add(1.0 / seg.counts[g] as f64, &xv.row(i));
        }
        self.push(v, Op::SegmentMean(x, seg))
    }

    /// Mean squared error against a constant target of the same shape; `1 x 1`.
    pub fn mse(&mut self, x: Var, target: Rc<Tensor>) -> Var {
        let d = self.value(x) - &*target;
        let n = d.len().max(1) as f64;
        let v = Tensor::from_elem((1, 1), d.iter().map(|e| e * e).sum::<f64>() / n);
        self.push(v, Op::Mse(x, target))
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[[0, 0]]
    }

    /// Gradients of the scalar `loss` with respect to every parameter used.
    pub fn backward(&self, loss: Var) -> Vec<(ParamId, Tensor)> {
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::ones(self.value(loss).raw_dim()));

        fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
            match &mut grads[v.0] {
                Some(e) => *e += &g,
                slot => *slot = Some(g),
            }
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input => {}
                Op::Param => {
                    grads[i] = Some(g);
                }
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::MatMulT(a, b) => {
                    let ga = g.dot(self.value(*b));
                    let gb = g.t().dot(self.value(*a));
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g);
                }
                Op::AddRow(x, b) => {
                    let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut grads, *b, gb);
                    acc(&mut grads, *x, g);
                }
                Op::Mul(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = &g * self.value(*a);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Scale(x, c) => acc(&mut grads, *x, g * *c),
                Op::MaskCols(x, mask) => {
                    let mut gx = g;
                    for mut row in gx.rows_mut() {
                        for (e, m) in row.iter_mut().zip(mask.iter()) {
                            *e *= m;
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::MaskElems(x, mask) => acc(&mut grads, *x, g * &**mask),
                Op::AddConst(x) => acc(&mut grads, *x, g),
                Op::Relu(x) => {
                    let mut gx = g;
                    gx.zip_mut_with(self.value(*x), |gi, &xi| {
                        if xi <= 0.0 {
                            *gi = 0.0
                        }
                    });
                    acc(&mut grads, *x, gx);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let gbeta = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    let ggamma = (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
                    let dxhat = &g * self.value(*gamma);
                    let n = xhat.ncols() as f64;
                    let mut gx = Tensor::zeros(xhat.raw_dim());
                    for r in 0..xhat.nrows() {
                        let dh = dxhat.row(r);
                        let h = xhat.row(r);
                        let sum_dh = dh.sum();
                        let sum_dh_h = dh.iter().zip(h.iter()).map(|(a, b)| a * b).sum::<f64>();
                        let k = inv_std[r] / n;
                        for c in 0..xhat.ncols() {
                            gx[[r, c]] = k * (n * dh[c] - sum_dh - h[c] * sum_dh_h);
                        }
                    }
                    acc(&mut grads, *gamma, ggamma);
                    acc(&mut grads, *beta, gbeta);
                    acc(&mut grads, *x, gx);
                }
                Op::Softmax(x) => {
                    let p = &node.value;
                    let mut gx = Tensor::zeros(p.raw_dim());
                    for r in 0..p.nrows() {
                        let dot = g.row(r).iter().zip(p.row(r).iter()).map(|(a, b)| a * b).sum::<f64>();
                        for c in 0..p.ncols() {
                            gx[[r, c]] = p[[r, c]] * (g[[r, c]] - dot);
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let w = self.value(p).ncols();
                        acc(&mut grads, p, g.slice(s![.., start..start + w]).to_owned());
                        start += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let h = self.value(p).nrows();
                        acc(&mut grads, p, g.slice(s![start..start + h, ..]).to_owned());
                        start += h;
                    }
                }
                Op::SliceCols(x, start, len) => {
                    let mut gx = Tensor::zeros(self.value(*x).raw_dim());
                    gx.slice_mut(s![.., *start..*start + *len]).assign(&g);
                    acc(&mut grads, *x, gx);
                }
                Op::SliceRows(x, start, len) => {
                    let mut gx = Tensor::zeros(self.value(*x).raw_dim());
                    gx.slice_mut(s![*start..*start + *len, ..]).assign(&g);
                    acc(&mut grads, *x, gx);
                }
                Op::SpMM(x, a) => acc(&mut grads, *x, a.mul_transposed(&g)),
                Op::SegmentMean(x, seg) => {
                    let xv = self.value(*x);
                    let mut gx = Tensor::zeros(xv.raw_dim());
                    for (r, &grp) in seg.group_of.iter().enumerate() {
                        gx.row_mut(r).scaled_add(1.0 / seg.counts[grp] as f64, &g.row(grp));
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::Mse(x, target) => {
                    let d = self.value(*x) - &**target;
                    let n = d.len().max(1) as f64;
                    let scale = 2.0 * g[[0, 0]] / n;
                    acc(&mut grads, *x, d * scale);
                }
            }
        }

        let mut out: Vec<(ParamId, Tensor)> = self
            .params
            .iter()
            .filter_map(|(&id, &v)| grads[v.0].take().map(|g| (id, g)))
            .collect();
        out.sort_by_key(|(id, _)| *id);
        out
    }
}
