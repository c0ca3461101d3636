//! Reverse-mode automatic differentiation on an append-only tape.
//!
//! Each forward op records its inputs and enough saved state to play
//! its vector-Jacobian product backwards. The tape is built fresh per
//! forward pass and owned by one thread; gradients come back as one
//! tensor per tape node.

use super::float::Float;
use super::tensor::{matmul, matmul_nt, matmul_tn, transpose, Tensor};

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

const LN_EPS: f64 = 1e-5;
const CE_CLAMP: f64 = 1e-12;

enum Op<F: Float> {
    Leaf,
    MatMul(usize, usize),
    /// A * B^T
    MatMulNt(usize, usize),
    Add(usize, usize),
    /// Broadcast-add a [1 x n] row vector over every row.
    AddRow(usize, usize),
    Scale(usize, F),
    Hadamard(usize, usize),
    /// y = 1 - x
    OneMinus(usize),
    Sigmoid(usize),
    Tanh(usize),
    Gelu(usize),
    SoftmaxRows(usize),
    LayerNormRows {
        x: usize,
        gain: usize,
        bias: usize,
    },
    MeanRows(usize),
    /// Mean over consecutive row blocks of equal length.
    SegmentMeanRows {
        x: usize,
        seg_len: usize,
    },
    GatherRows {
        x: usize,
        idx: Vec<usize>,
    },
    ScatterAddRows {
        x: usize,
        idx: Vec<usize>,
    },
    SliceCols {
        x: usize,
        start: usize,
    },
    ConcatCols(Vec<usize>),
    Dropout {
        x: usize,
        mask: Tensor<F>,
    },
    /// Scalar -ln(max(x[0, index], clamp)).
    NegLogIndex {
        x: usize,
        index: usize,
    },
}

struct Node<F: Float> {
    value: Tensor<F>,
    op: Op<F>,
}

pub struct Tape<F: Float> {
    nodes: Vec<Node<F>>,
}

impl<F: Float> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Float> Tape<F> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, t: Tensor<F>) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = matmul(self.value(a), self.value(b));
        self.push(v, Op::MatMul(a.0, b.0))
    }

    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let v = matmul_nt(self.value(a), self.value(b));
        self.push(v, Op::MatMulNt(a.0, b.0))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "add shape mismatch");
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| x + y)
            .collect();
        let v = Tensor::from_vec(ta.shape(), data);
        self.push(v, Op::Add(a.0, b.0))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (ta, tr) = (self.value(a), self.value(row));
        assert_eq!(tr.rows(), 1, "add_row needs a [1 x n] vector");
        assert_eq!(ta.cols(), tr.cols(), "add_row width mismatch");
        let n = ta.cols();
        let rd = tr.data().to_vec();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x + rd[i % n])
            .collect();
        let v = Tensor::from_vec(ta.shape(), data);
        self.push(v, Op::AddRow(a.0, row.0))
    }

    pub fn scale(&mut self, a: Var, k: F) -> Var {
        let ta = self.value(a);
        let data = ta.data().iter().map(|&x| x * k).collect();
        let v = Tensor::from_vec(ta.shape(), data);
        self.push(v, Op::Scale(a.0, k))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "hadamard shape mismatch");
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| x * y)
            .collect();
        let v = Tensor::from_vec(ta.shape(), data);
        self.push(v, Op::Hadamard(a.0, b.0))
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let data = ta.data().iter().map(|&x| F::ONE - x).collect();
        let v = Tensor::from_vec(ta.shape(), data);
        self.push(v, Op::OneMinus(a.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let data = ta
            .data()
            .iter()
            .map(|&x| F::ONE / (F::ONE + (-x).exp()))
            .collect();
        let v = Tensor::from_vec(ta.shape(), data);
        self.push(v, Op::Sigmoid(a.0))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let data = ta.data().iter().map(|&x| x.tanh()).collect();
        let v = Tensor::from_vec(ta.shape(), data);
        self.push(v, Op::Tanh(a.0))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let data = ta.data().iter().map(|&x| gelu_fwd(x)).collect();
        let v = Tensor::from_vec(ta.shape(), data);
        self.push(v, Op::Gelu(a.0))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let (m, n) = (ta.rows(), ta.cols());
        let mut data = vec![F::ZERO; m * n];
        for i in 0..m {
            let row = ta.row(i);
            let mut mx = row[0];
            for &x in row {
                mx = mx.maximum(x);
            }
            let mut sum = F::ZERO;
            for j in 0..n {
                let e = (row[j] - mx).exp();
                data[i * n + j] = e;
                sum += e;
            }
            for j in 0..n {
                data[i * n + j] = data[i * n + j] / sum;
            }
        }
        let v = Tensor::from_vec(ta.shape(), data);
        self.push(v, Op::SoftmaxRows(a.0))
    }

    pub fn layer_norm_rows(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let (tx, tg, tb) = (self.value(x), self.value(gain), self.value(bias));
        let (m, n) = (tx.rows(), tx.cols());
        assert_eq!(tg.shape(), &[1, n], "layer norm gain must be [1 x {n}]");
        assert_eq!(tb.shape(), &[1, n], "layer norm bias must be [1 x {n}]");
        let eps = F::from_f64(LN_EPS);
        let inv_n = F::ONE / F::from_f64(n as f64);
        let gd = tg.data().to_vec();
        let bd = tb.data().to_vec();
        let mut data = vec![F::ZERO; m * n];
        for i in 0..m {
            let row = tx.row(i);
            let mut mu = F::ZERO;
            for &v in row {
                mu += v;
            }
            mu *= inv_n;
            let mut var = F::ZERO;
            for &v in row {
                let d = v - mu;
                var += d * d;
            }
            var *= inv_n;
            let s = F::ONE / (var + eps).sqrt();
            for j in 0..n {
                data[i * n + j] = gd[j] * (row[j] - mu) * s + bd[j];
            }
        }
        let v = Tensor::from_vec(tx.shape(), data);
        self.push(
            v,
            Op::LayerNormRows {
                x: x.0,
                gain: gain.0,
                bias: bias.0,
            },
        )
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let (m, n) = (ta.rows(), ta.cols());
        let inv = F::ONE / F::from_f64(m as f64);
        let mut data = vec![F::ZERO; n];
        for i in 0..m {
            for (j, &v) in ta.row(i).iter().enumerate() {
                data[j] += v;
            }
        }
        for v in data.iter_mut() {
            *v *= inv;
        }
        let v = Tensor::from_vec(&[1, n], data);
        self.push(v, Op::MeanRows(a.0))
    }

    /// Rows [k*seg_len, (k+1)*seg_len) average into output row k.
    pub fn segment_mean_rows(&mut self, a: Var, seg_len: usize) -> Var {
        let ta = self.value(a);
        let (m, n) = (ta.rows(), ta.cols());
        assert!(
            seg_len > 0 && m % seg_len == 0,
            "{m} rows not tiled by {seg_len}"
        );
        let segs = m / seg_len;
        let inv = F::ONE / F::from_f64(seg_len as f64);
        let mut data = vec![F::ZERO; segs * n];
        for i in 0..m {
            let o = (i / seg_len) * n;
            for (j, &v) in ta.row(i).iter().enumerate() {
                data[o + j] += v;
            }
        }
        for v in data.iter_mut() {
            *v *= inv;
        }
        let v = Tensor::from_vec(&[segs, n], data);
        self.push(v, Op::SegmentMeanRows { x: a.0, seg_len })
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let ta = self.value(a);
        let n = ta.cols();
        let mut data = Vec::with_capacity(idx.len() * n);
        for &i in idx {
            data.extend_from_slice(ta.row(i));
        }
        let v = Tensor::from_vec(&[idx.len(), n], data);
        self.push(
            v,
            Op::GatherRows {
                x: a.0,
                idx: idx.to_vec(),
            },
        )
    }

    /// out has `n_rows` rows; row idx[i] accumulates input row i.
    pub fn scatter_add_rows(&mut self, a: Var, idx: &[usize], n_rows: usize) -> Var {
        let ta = self.value(a);
        assert_eq!(ta.rows(), idx.len(), "one index per input row");
        let n = ta.cols();
        let mut data = vec![F::ZERO; n_rows * n];
        for (i, &dst) in idx.iter().enumerate() {
            assert!(dst < n_rows, "scatter index {dst} out of {n_rows}");
            let row = ta.row(i);
            let o = dst * n;
            for j in 0..n {
                data[o + j] += row[j];
            }
        }
        let v = Tensor::from_vec(&[n_rows, n], data);
        self.push(
            v,
            Op::ScatterAddRows {
                x: a.0,
                idx: idx.to_vec(),
            },
        )
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let ta = self.value(a);
        let (m, n) = (ta.rows(), ta.cols());
        assert!(start + len <= n, "column slice {start}+{len} out of {n}");
        let mut data = Vec::with_capacity(m * len);
        for i in 0..m {
            data.extend_from_slice(&ta.row(i)[start..start + len]);
        }
        let v = Tensor::from_vec(&[m, len], data);
        self.push(v, Op::SliceCols { x: a.0, start })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let m = self.value(parts[0]).rows();
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(m * total);
        for i in 0..m {
            for &p in parts {
                let tp = self.value(p);
                assert_eq!(tp.rows(), m, "concat parts must share row count");
                data.extend_from_slice(tp.row(i));
            }
        }
        let v = Tensor::from_vec(&[m, total], data);
        self.push(v, Op::ConcatCols(parts.iter().map(|p| p.0).collect()))
    }

    /// Inverted dropout with a caller-supplied mask whose entries are
    /// 0 or 1/(1-p).
    pub fn dropout(&mut self, a: Var, mask: Tensor<F>) -> Var {
        let ta = self.value(a);
        assert_eq!(ta.shape(), mask.shape(), "dropout mask shape mismatch");
        let data = ta
            .data()
            .iter()
            .zip(mask.data())
            .map(|(&x, &m)| x * m)
            .collect();
        let v = Tensor::from_vec(ta.shape(), data);
        self.push(v, Op::Dropout { x: a.0, mask })
    }

    /// Cross-entropy pick: -ln(max(x[0, index], 1e-12)) as a scalar.
    pub fn neg_log_index(&mut self, a: Var, index: usize) -> Var {
        let ta = self.value(a);
        assert_eq!(ta.rows(), 1, "neg_log_index expects a probability row");
        assert!(
            index < ta.cols(),
            "class index {index} out of {}",
            ta.cols()
        );
        let p = ta.data()[index].maximum(F::from_f64(CE_CLAMP));
        let v = Tensor::scalar(-p.ln());
        self.push(v, Op::NegLogIndex { x: a.0, index })
    }

    /// Reverse sweep from a scalar output. Returns one gradient slot
    /// per tape node (None where the output does not depend on it).
    pub fn backward(&self, loss: Var) -> Gradients<F> {
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar output");
        let mut grads: Vec<Option<Tensor<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(F::ONE));

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Leaf => {
                    grads[id] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let da = matmul(&g, &transpose(&self.nodes[*b].value));
                    let db = matmul_tn(&self.nodes[*a].value, &g);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::MatMulNt(a, b) => {
                    let da = matmul(&g, &self.nodes[*b].value);
                    let db = matmul_tn(&g, &self.nodes[*a].value);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::AddRow(a, row) => {
                    let n = self.nodes[*row].value.cols();
                    let mut dr = vec![F::ZERO; n];
                    for (i, &v) in g.data().iter().enumerate() {
                        dr[i % n] += v;
                    }
                    accumulate(&mut grads, *row, Tensor::from_vec(&[1, n], dr));
                    accumulate(&mut grads, *a, g);
                }
                Op::Scale(a, k) => {
                    let data = g.data().iter().map(|&v| v * *k).collect();
                    accumulate(&mut grads, *a, Tensor::from_vec(g.shape(), data));
                }
                Op::Hadamard(a, b) => {
                    let ta = &self.nodes[*a].value;
                    let tb = &self.nodes[*b].value;
                    let da = g
                        .data()
                        .iter()
                        .zip(tb.data())
                        .map(|(&v, &y)| v * y)
                        .collect();
                    let db = g
                        .data()
                        .iter()
                        .zip(ta.data())
                        .map(|(&v, &x)| v * x)
                        .collect();
                    accumulate(&mut grads, *a, Tensor::from_vec(g.shape(), da));
                    accumulate(&mut grads, *b, Tensor::from_vec(g.shape(), db));
                }
                Op::OneMinus(a) => {
                    let data = g.data().iter().map(|&v| -v).collect();
                    accumulate(&mut grads, *a, Tensor::from_vec(g.shape(), data));
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    let data = g
                        .data()
                        .iter()
                        .zip(y.data())
                        .map(|(&v, &s)| v * s * (F::ONE - s))
                        .collect();
                    accumulate(&mut grads, *a, Tensor::from_vec(g.shape(), data));
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    let data = g
                        .data()
                        .iter()
                        .zip(y.data())
                        .map(|(&v, &t)| v * (F::ONE - t * t))
                        .collect();
                    accumulate(&mut grads, *a, Tensor::from_vec(g.shape(), data));
                }
                Op::Gelu(a) => {
                    let tx = &self.nodes[*a].value;
                    let data = g
                        .data()
                        .iter()
                        .zip(tx.data())
                        .map(|(&v, &x)| v * gelu_bwd(x))
                        .collect();
                    accumulate(&mut grads, *a, Tensor::from_vec(g.shape(), data));
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let (m, n) = (y.rows(), y.cols());
                    let mut data = vec![F::ZERO; m * n];
                    for i in 0..m {
                        let yr = y.row(i);
                        let gr = &g.data()[i * n..(i + 1) * n];
                        let mut dot = F::ZERO;
                        for j in 0..n {
                            dot += gr[j] * yr[j];
                        }
                        for j in 0..n {
                            data[i * n + j] = yr[j] * (gr[j] - dot);
                        }
                    }
                    accumulate(&mut grads, *a, Tensor::from_vec(y.shape(), data));
                }
                Op::LayerNormRows { x, gain, bias } => {
                    let tx = &self.nodes[*x].value;
                    let tg = &self.nodes[*gain].value;
                    let (m, n) = (tx.rows(), tx.cols());
                    let eps = F::from_f64(LN_EPS);
                    let inv_n = F::ONE / F::from_f64(n as f64);
                    let gd = tg.data();
                    let mut dx = vec![F::ZERO; m * n];
                    let mut dg = vec![F::ZERO; n];
                    let mut db = vec![F::ZERO; n];
                    for i in 0..m {
                        let row = tx.row(i);
                        let gr = &g.data()[i * n..(i + 1) * n];
                        let mut mu = F::ZERO;
                        for &v in row {
                            mu += v;
                        }
                        mu *= inv_n;
                        let mut var = F::ZERO;
                        for &v in row {
                            let d = v - mu;
                            var += d * d;
                        }
                        var *= inv_n;
                        let s = F::ONE / (var + eps).sqrt();
                        let mut mean_dxhat = F::ZERO;
                        let mut mean_dxhat_xhat = F::ZERO;
                        for j in 0..n {
                            let xhat = (row[j] - mu) * s;
                            let dxhat = gr[j] * gd[j];
                            mean_dxhat += dxhat;
                            mean_dxhat_xhat += dxhat * xhat;
                            dg[j] += gr[j] * xhat;
                            db[j] += gr[j];
                        }
                        mean_dxhat *= inv_n;
                        mean_dxhat_xhat *= inv_n;
                        for j in 0..n {
                            let xhat = (row[j] - mu) * s;
                            let dxhat = gr[j] * gd[j];
                            dx[i * n + j] = s * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
                        }
                    }
                    accumulate(&mut grads, *x, Tensor::from_vec(tx.shape(), dx));
                    accumulate(&mut grads, *gain, Tensor::from_vec(&[1, n], dg));
                    accumulate(&mut grads, *bias, Tensor::from_vec(&[1, n], db));
                }
                Op::MeanRows(a) => {
                    let ta = &self.nodes[*a].value;
                    let (m, n) = (ta.rows(), ta.cols());
                    let inv = F::ONE / F::from_f64(m as f64);
                    let mut data = vec![F::ZERO; m * n];
                    for i in 0..m {
                        for j in 0..n {
                            data[i * n + j] = g.data()[j] * inv;
                        }
                    }
                    accumulate(&mut grads, *a, Tensor::from_vec(ta.shape(), data));
                }
                Op::SegmentMeanRows { x, seg_len } => {
                    let ta = &self.nodes[*x].value;
                    let (m, n) = (ta.rows(), ta.cols());
                    let inv = F::ONE / F::from_f64(*seg_len as f64);
                    let mut data = vec![F::ZERO; m * n];
                    for i in 0..m {
                        let o = (i / seg_len) * n;
                        for j in 0..n {
                            data[i * n + j] = g.data()[o + j] * inv;
                        }
                    }
                    accumulate(&mut grads, *x, Tensor::from_vec(ta.shape(), data));
                }
                Op::GatherRows { x, idx } => {
                    let ta = &self.nodes[*x].value;
                    let n = ta.cols();
                    let mut data = vec![F::ZERO; ta.rows() * n];
                    for (i, &src) in idx.iter().enumerate() {
                        let gr = &g.data()[i * n..(i + 1) * n];
                        let o = src * n;
                        for j in 0..n {
                            data[o + j] += gr[j];
                        }
                    }
                    accumulate(&mut grads, *x, Tensor::from_vec(ta.shape(), data));
                }
                Op::ScatterAddRows { x, idx } => {
                    let ta = &self.nodes[*x].value;
                    let n = ta.cols();
                    let mut data = vec![F::ZERO; ta.rows() * n];
                    for (i, &dst) in idx.iter().enumerate() {
                        let gr = &g.data()[dst * n..(dst + 1) * n];
                        let o = i * n;
                        for j in 0..n {
                            data[o + j] = gr[j];
                        }
                    }
                    accumulate(&mut grads, *x, Tensor::from_vec(ta.shape(), data));
                }
                Op::SliceCols { x, start } => {
                    let ta = &self.nodes[*x].value;
                    let (m, n) = (ta.rows(), ta.cols());
                    let len = g.cols();
                    let mut data = vec![F::ZERO; m * n];
                    for i in 0..m {
                        let gr = g.row(i);
                        for j in 0..len {
                            data[i * n + start + j] = gr[j];
                        }
                    }
                    accumulate(&mut grads, *x, Tensor::from_vec(ta.shape(), data));
                }
                Op::ConcatCols(parts) => {
                    let m = g.rows();
                    let mut start = 0;
                    for &p in parts {
                        let tp = &self.nodes[p].value;
                        let len = tp.cols();
                        let mut data = vec![F::ZERO; m * len];
                        for i in 0..m {
                            let gr = g.row(i);
                            data[i * len..(i + 1) * len].copy_from_slice(&gr[start..start + len]);
                        }
                        accumulate(&mut grads, p, Tensor::from_vec(&[m, len], data));
                        start += len;
                    }
                }
                Op::Dropout { x, mask } => {
                    let data = g
                        .data()
                        .iter()
                        .zip(mask.data())
                        .map(|(&v, &m)| v * m)
                        .collect();
                    accumulate(&mut grads, *x, Tensor::from_vec(g.shape(), data));
                }
                Op::NegLogIndex { x, index } => {
                    let tx = &self.nodes[*x].value;
                    let mut data = vec![F::ZERO; tx.len()];
                    let p = tx.data()[*index];
                    if p > F::from_f64(CE_CLAMP) {
                        data[*index] = -g.data()[0] / p;
                    }
                    accumulate(&mut grads, *x, Tensor::from_vec(tx.shape(), data));
                }
            }
        }
        Gradients { slots: grads }
    }
}

fn accumulate<F: Float>(grads: &mut [Option<Tensor<F>>], id: usize, delta: Tensor<F>) {
    match &mut grads[id] {
        Some(t) => t.add_assign(&delta),
        slot @ None => *slot = Some(delta),
    }
}

fn gelu_fwd<F: Float>(x: F) -> F {
    let half = F::from_f64(0.5);
    let inv_sqrt2 = F::from_f64(std::f64::consts::FRAC_1_SQRT_2);
    x * half * (F::ONE + (x * inv_sqrt2).erf())
}

fn gelu_bwd<F: Float>(x: F) -> F {
    let half = F::from_f64(0.5);
    let inv_sqrt2 = F::from_f64(std::f64::consts::FRAC_1_SQRT_2);
    let inv_sqrt_2pi = F::from_f64(1.0 / (2.0 * std::f64::consts::PI).sqrt());
    let phi_cdf = half * (F::ONE + (x * inv_sqrt2).erf());
    let pdf = inv_sqrt_2pi * (-(x * x) * half).exp();
    phi_cdf + x * pdf
}

pub struct Gradients<F: Float> {
    slots: Vec<Option<Tensor<F>>>,
}

impl<F: Float> Gradients<F> {
    pub fn get(&self, v: Var) -> Option<&Tensor<F>> {
        self.slots[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<F>> {
        self.slots[v.0].take()
    }
}
