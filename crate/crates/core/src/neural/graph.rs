//! Tape-based reverse-mode differentiation over dense row-major matrices.
//!
//! Every value is a 2-D `rows x cols` matrix of `f64`. Parameters live in a
//! [`ParamStore`] and are referenced from the tape without copying; calling
//! [`Graph::backward`] returns gradients for every node and parameter.

use crate::error::{Error, Result};
use crate::topk::RelaxedMask;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub value: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, rows: usize, cols: usize, value: Vec<f64>) -> ParamId {
        assert_eq!(value.len(), rows * cols, "parameter size mismatch");
        self.params.push(Param {
            name: name.into(),
            rows,
            cols,
            value,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.iter().all(|v| v.is_finite()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    /// `a * b^T`
    MatMulBT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    ScaleRows(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Softmax { input: Var, causal: bool },
    LayerNorm { input: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    Gather { table: Var, indices: Vec<usize> },
    SliceCols { input: Var, start: usize },
    ConcatCols(Vec<Var>),
    CrossEntropy { logits: Var, targets: Vec<usize>, weights: Vec<f64>, probs: Vec<f64> },
    BceLogits { logits: Var, targets: Vec<f64>, weights: Vec<f64> },
    Sum(Var),
    TopKMask { scores: Var, mask: Box<RelaxedMask> },
}

struct Node {
    rows: usize,
    cols: usize,
    /// Empty for parameters, whose values stay in the store.
    value: Vec<f64>,
    op: Op,
}

pub struct Graph<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
}

/// Matrix product `c = a * b` (`beta = 0`) or `c += a * b` (`beta = 1`) with
/// arbitrary strides, via `matrixmultiply`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if beta == 0.0 {
            c.iter_mut().for_each(|v| *v = 0.0);
        }
        return;
    }
    assert!(c.len() >= m * n);
    // SAFETY: the slices cover the strided extents by construction of the
    // callers: `a` is m x k, `b` is k x n under the given strides, `c` is
    // a dense row-major m x n buffer.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl<'s> Graph<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Graph {
            store,
            nodes: Vec::with_capacity(512),
        }
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op) -> Var {
        debug_assert!(matches!(op, Op::Param(_)) || value.len() == rows * cols);
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        let node = &self.nodes[v.0];
        match node.op {
            Op::Param(id) => &self.store.get(id).value,
            _ => &node.value,
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn input(&mut self, rows: usize, cols: usize, value: Vec<f64>) -> Var {
        assert_eq!(value.len(), rows * cols, "input size mismatch");
        self.push(rows, cols, value, Op::Input)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let p = self.store.get(id);
        let (rows, cols) = (p.rows, p.cols);
        self.push(rows, cols, Vec::new(), Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        assert_eq!(k, k2, "matmul inner dimensions");
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a), (k, 1), self.value(b), (n, 1), 0.0, &mut out);
        self.push(m, n, out, Op::MatMul(a, b))
    }

    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.shape(a);
        let (n, k2) = self.shape(b);
        assert_eq!(k, k2, "matmul_bt inner dimensions");
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a), (k, 1), self.value(b), (1, k), 0.0, &mut out);
        self.push(m, n, out, Op::MatMulBT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add shapes");
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let (r, c) = self.shape(a);
        self.push(r, c, out, Op::Add(a, b))
    }

    /// Adds a `1 x cols` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (r, c) = self.shape(a);
        assert_eq!(self.shape(row), (1, c), "add_row shapes");
        let bias = self.value(row);
        let mut out = self.value(a).to_vec();
        for chunk in out.chunks_mut(c) {
            chunk.iter_mut().zip(bias).for_each(|(o, b)| *o += b);
        }
        self.push(r, c, out, Op::AddRow(a, row))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "mul shapes");
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        let (r, c) = self.shape(a);
        self.push(r, c, out, Op::Mul(a, b))
    }

    /// Multiplies row `i` of `a` by `s[i]`, where `s` is `rows x 1`.
    pub fn scale_rows(&mut self, a: Var, s: Var) -> Var {
        let (r, c) = self.shape(a);
        assert_eq!(self.shape(s), (r, 1), "scale_rows shapes");
        let scales = self.value(s);
        let mut out = self.value(a).to_vec();
        for (chunk, &k) in out.chunks_mut(c).zip(scales) {
            chunk.iter_mut().for_each(|v| *v *= k);
        }
        self.push(r, c, out, Op::ScaleRows(a, s))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).iter().map(|v| v * k).collect();
        let (r, c) = self.shape(a);
        self.push(r, c, out, Op::Scale(a, k))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|&v| v.max(0.0)).collect();
        let (r, c) = self.shape(a);
        self.push(r, c, out, Op::Relu(a))
    }

    /// Row-wise softmax. With `causal`, entry `(i, j)` for `j > i` is masked.
    pub fn softmax(&mut self, a: Var, causal: bool) -> Var {
        let (r, c) = self.shape(a);
        let x = self.value(a);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let width = if causal { (i + 1).min(c) } else { c };
            let row = &x[i * c..i * c + width];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let dst = &mut out[i * c..i * c + width];
            let mut sum = 0.0;
            for (d, &v) in dst.iter_mut().zip(row) {
                *d = (v - max).exp();
                sum += *d;
            }
            dst.iter_mut().for_each(|d| *d /= sum);
        }
        self.push(r, c, out, Op::Softmax { input: a, causal })
    }

    pub fn layer_norm(&mut self, a: Var, gamma: Var, beta: Var, eps: f64) -> Var {
        let (r, c) = self.shape(a);
        assert_eq!(self.shape(gamma), (1, c));
        assert_eq!(self.shape(beta), (1, c));
        let x = self.value(a);
        let (g, b) = (self.value(gamma), self.value(beta));
        let mut xhat = vec![0.0; r * c];
        let mut inv_std = vec![0.0; r];
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &x[i * c..(i + 1) * c];
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std[i] = inv;
            for j in 0..c {
                let h = (row[j] - mean) * inv;
                xhat[i * c + j] = h;
                out[i * c + j] = g[j] * h + b[j];
            }
        }
        self.push(
            r,
            c,
            out,
            Op::LayerNorm {
                input: a,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        )
    }

    /// Rows of `table` selected by `indices`.
    pub fn gather(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let (rows, c) = self.shape(table);
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(Error::Shape(format!("gather index {bad} >= table rows {rows}")));
        }
        let t = self.value(table);
        let mut out = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            out.extend_from_slice(&t[i * c..(i + 1) * c]);
        }
        Ok(self.push(
            indices.len(),
            c,
            out,
            Op::Gather {
                table,
                indices: indices.to_vec(),
            },
        ))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Var {
        let (r, c) = self.shape(a);
        assert!(start + width <= c, "slice_cols out of range");
        let x = self.value(a);
        let mut out = Vec::with_capacity(r * width);
        for i in 0..r {
            out.extend_from_slice(&x[i * c + start..i * c + start + width]);
        }
        self.push(r, width, out, Op::SliceCols { input: a, start })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let r = self.shape(parts[0]).0;
        let widths: Vec<usize> = parts.iter().map(|&p| self.shape(p).1).collect();
        assert!(parts.iter().all(|&p| self.shape(p).0 == r), "concat rows");
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p)[i * w..(i + 1) * w]);
            }
        }
        self.push(r, total, out, Op::ConcatCols(parts.to_vec()))
    }

    /// `sum_i weights[i] * CE(softmax(logits[i]), targets[i])` as a `1 x 1`.
    /// Rows with zero weight contribute nothing, including gradient.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], weights: &[f64]) -> Var {
        let (r, c) = self.shape(logits);
        assert_eq!(targets.len(), r);
        assert_eq!(weights.len(), r);
        let x = self.value(logits);
        let mut probs = vec![0.0; r * c];
        let mut loss = 0.0;
        for i in 0..r {
            if weights[i] == 0.0 {
                continue;
            }
            assert!(targets[i] < c, "cross-entropy target out of range");
            let row = &x[i * c..(i + 1) * c];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let lse = max + sum.ln();
            for j in 0..c {
                probs[i * c + j] = (row[j] - lse).exp();
            }
            loss += weights[i] * (lse - row[targets[i]]);
        }
        self.push(
            1,
            1,
            vec![loss],
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                weights: weights.to_vec(),
                probs,
            },
        )
    }

    /// `sum_i weights[i] * BCE(sigmoid(logits[i]), targets[i])` for a column.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64], weights: &[f64]) -> Var {
        let (r, c) = self.shape(logits);
        assert_eq!(c, 1, "bce expects a column");
        assert_eq!(targets.len(), r);
        assert_eq!(weights.len(), r);
        let x = self.value(logits);
        let loss = (0..r)
            .map(|i| {
                let z = x[i];
                // max(z, 0) - z*y + log(1 + exp(-|z|))
                weights[i] * (z.max(0.0) - z * targets[i] + (-z.abs()).exp().ln_1p())
            })
            .sum();
        self.push(
            1,
            1,
            vec![loss],
            Op::BceLogits {
                logits,
                targets: targets.to_vec(),
                weights: weights.to_vec(),
            },
        )
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        self.push(1, 1, vec![s], Op::Sum(a))
    }

    /// Hard straight-through mask for a `n x 1` score column: the forward
    /// value is `mask.hard`, the backward pass goes through the relaxation.
    pub fn topk_mask(&mut self, scores: Var, mask: RelaxedMask) -> Var {
        let (r, c) = self.shape(scores);
        assert_eq!((c, mask.hard.len()), (1, r), "topk_mask shapes");
        let out = mask.hard_values();
        self.push(
            r,
            1,
            out,
            Op::TopKMask {
                scores,
                mask: Box::new(mask),
            },
        )
    }

    /// Like [`Graph::topk_mask`] but the forward value is the relaxation
    /// itself, which makes the whole chain smooth for finite differences.
    pub fn soft_mask(&mut self, scores: Var, mask: RelaxedMask) -> Var {
        let (r, c) = self.shape(scores);
        assert_eq!((c, mask.soft.len()), (1, r), "soft_mask shapes");
        let out = mask.soft.clone();
        self.push(
            r,
            1,
            out,
            Op::TopKMask {
                scores,
                mask: Box::new(mask),
            },
        )
    }

    /// Reverse pass from a `1 x 1` output.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(self.shape(output), (1, 1), "backward needs a scalar output");
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(vec![1.0]);

        fn acc(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
            grads[v.0].get_or_insert_with(|| vec![0.0; len])
        }

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let (rows, cols) = (node.rows, node.cols);
            match &node.op {
                Op::Input | Op::Param(_) => {}
                &Op::MatMul(a, b) => {
                    let (m, k) = self.shape(a);
                    let n = cols;
                    // dA = dC * B^T, dB = A^T * dC
                    let da = acc(&mut grads, a, m * k);
                    gemm(m, n, k, &g, (n, 1), self.value(b), (1, n), 1.0, da);
                    let db = acc(&mut grads, b, k * n);
                    gemm(k, m, n, self.value(a), (1, k), &g, (n, 1), 1.0, db);
                }
                &Op::MatMulBT(a, b) => {
                    let (m, k) = self.shape(a);
                    let n = cols;
                    // C = A B^T: dA = dC * B, dB = dC^T * A
                    let da = acc(&mut grads, a, m * k);
                    gemm(m, n, k, &g, (n, 1), self.value(b), (k, 1), 1.0, da);
                    let db = acc(&mut grads, b, n * k);
                    gemm(n, m, k, &g, (1, n), self.value(a), (k, 1), 1.0, db);
                }
                &Op::Add(a, b) => {
                    for v in [a, b] {
                        let d = acc(&mut grads, v, g.len());
                        d.iter_mut().zip(&g).for_each(|(x, y)| *x += y);
                    }
                }
                &Op::AddRow(a, row) => {
                    let d = acc(&mut grads, a, g.len());
                    d.iter_mut().zip(&g).for_each(|(x, y)| *x += y);
                    let db = acc(&mut grads, row, cols);
                    for chunk in g.chunks(cols) {
                        db.iter_mut().zip(chunk).for_each(|(x, y)| *x += y);
                    }
                }
                &Op::Mul(a, b) => {
                    let (va, vb) = (self.value(a), self.value(b));
                    let da = acc(&mut grads, a, g.len());
                    for i in 0..g.len() {
                        da[i] += g[i] * vb[i];
                    }
                    let db = acc(&mut grads, b, g.len());
                    for i in 0..g.len() {
                        db[i] += g[i] * va[i];
                    }
                }
                &Op::ScaleRows(a, s) => {
                    let (va, vs) = (self.value(a), self.value(s));
                    let da = acc(&mut grads, a, g.len());
                    for i in 0..rows {
                        for j in 0..cols {
                            da[i * cols + j] += g[i * cols + j] * vs[i];
                        }
                    }
                    let ds = acc(&mut grads, s, rows);
                    for i in 0..rows {
                        let row = i * cols..(i + 1) * cols;
                        ds[i] += g[row.clone()].iter().zip(&va[row]).map(|(x, y)| x * y).sum::<f64>();
                    }
                }
                &Op::Scale(a, k) => {
                    let d = acc(&mut grads, a, g.len());
                    d.iter_mut().zip(&g).for_each(|(x, y)| *x += k * y);
                }
                &Op::Relu(a) => {
                    let va = self.value(a);
                    let d = acc(&mut grads, a, g.len());
                    for i in 0..g.len() {
                        if va[i] > 0.0 {
                            d[i] += g[i];
                        }
                    }
                }
                &Op::Softmax { input, causal } => {
                    let p = &node.value;
                    let d = acc(&mut grads, input, g.len());
                    for i in 0..rows {
                        let width = if causal { (i + 1).min(cols) } else { cols };
                        let base = i * cols;
                        let dot: f64 = (0..width).map(|j| p[base + j] * g[base + j]).sum();
                        for j in 0..width {
                            d[base + j] += p[base + j] * (g[base + j] - dot);
                        }
                    }
                }
                Op::LayerNorm {
                    input,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let gv = self.value(*gamma);
                    let mut dgamma = vec![0.0; cols];
                    let mut dbeta = vec![0.0; cols];
                    let mut dx = vec![0.0; rows * cols];
                    let n = cols as f64;
                    for i in 0..rows {
                        let base = i * cols;
                        let mut sum_dh = 0.0;
                        let mut sum_dh_h = 0.0;
                        for j in 0..cols {
                            let gy = g[base + j];
                            dgamma[j] += gy * xhat[base + j];
                            dbeta[j] += gy;
                            let dh = gy * gv[j];
                            sum_dh += dh;
                            sum_dh_h += dh * xhat[base + j];
                        }
                        for j in 0..cols {
                            let dh = g[base + j] * gv[j];
                            dx[base + j] =
                                inv_std[i] / n * (n * dh - sum_dh - xhat[base + j] * sum_dh_h);
                        }
                    }
                    for (v, d) in [(*input, dx), (*gamma, dgamma), (*beta, dbeta)] {
                        let t = acc(&mut grads, v, d.len());
                        t.iter_mut().zip(&d).for_each(|(x, y)| *x += y);
                    }
                }
                Op::Gather { table, indices } => {
                    let (tr, tc) = self.shape(*table);
                    let d = acc(&mut grads, *table, tr * tc);
                    for (row, &i) in indices.iter().enumerate() {
                        let src = &g[row * tc..(row + 1) * tc];
                        d[i * tc..(i + 1) * tc].iter_mut().zip(src).for_each(|(x, y)| *x += y);
                    }
                }
                &Op::SliceCols { input, start } => {
                    let (r, c) = self.shape(input);
                    let d = acc(&mut grads, input, r * c);
                    for i in 0..r {
                        for j in 0..cols {
                            d[i * c + start + j] += g[i * cols + j];
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let (r, w) = self.shape(p);
                        let d = acc(&mut grads, p, r * w);
                        for i in 0..r {
                            for j in 0..w {
                                d[i * w + j] += g[i * cols + offset + j];
                            }
                        }
                        offset += w;
                    }
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    weights,
                    probs,
                } => {
                    let (r, c) = self.shape(*logits);
                    let d = acc(&mut grads, *logits, r * c);
                    for i in 0..r {
                        let w = weights[i] * g[0];
                        if w == 0.0 {
                            continue;
                        }
                        for j in 0..c {
                            d[i * c + j] += w * probs[i * c + j];
                        }
                        d[i * c + targets[i]] -= w;
                    }
                }
                Op::BceLogits {
                    logits,
                    targets,
                    weights,
                } => {
                    let x = self.value(*logits);
                    let d = acc(&mut grads, *logits, x.len());
                    for i in 0..x.len() {
                        let sig = 1.0 / (1.0 + (-x[i]).exp());
                        d[i] += g[0] * weights[i] * (sig - targets[i]);
                    }
                }
                &Op::Sum(a) => {
                    let (r, c) = self.shape(a);
                    let d = acc(&mut grads, a, r * c);
                    d.iter_mut().for_each(|x| *x += g[0]);
                }
                Op::TopKMask { scores, mask } => {
                    let ds = mask.backward(&g);
                    let d = acc(&mut grads, *scores, ds.len());
                    d.iter_mut().zip(&ds).for_each(|(x, y)| *x += y);
                }
            }
            grads[idx] = Some(g);
        }

        let mut params: Vec<Option<Vec<f64>>> = (0..self.store.len()).map(|_| None).collect();
        for (i, node) in self.nodes.iter().enumerate() {
            if let (Op::Param(id), Some(g)) = (&node.op, &grads[i]) {
                match &mut params[id.0] {
                    Some(p) => p.iter_mut().zip(g).for_each(|(x, y)| *x += y),
                    slot => *slot = Some(g.clone()),
                }
            }
        }
        Gradients {
            nodes: grads,
            params,
        }
    }
}

pub struct Gradients {
    nodes: Vec<Option<Vec<f64>>>,
    params: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient with respect to a node; `None` if the output does not depend on it.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].as_deref()
    }

    pub fn param(&self, id: ParamId) -> Option<&[f64]> {
        self.params[id.0].as_deref()
    }

    pub fn into_params(self) -> Vec<Option<Vec<f64>>> {
        self.params
    }
}
