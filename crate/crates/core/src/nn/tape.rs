//! Reverse-mode automatic differentiation on a flat tape.
//!
//! Values are row-major `(rows, cols)` buffers of `f64`; vectors are `(1, d)`
//! and scalars `(1, 1)`. A training step builds a fresh tape, runs
//! `backward`, and scatters leaf gradients into the [`ParamStore`].
//!
//! `Detach` nodes freeze their captured value: `backward` routes no gradient
//! through them, and [`Tape::replay`] re-emits the captured value instead of
//! recomputing it. Replay therefore evaluates exactly the function that
//! backprop differentiates, which is what finite-difference checks need for
//! stop-gradient and straight-through constructions.

use crate::nn::param::{ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeRef(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(NodeRef, NodeRef),
    Sub(NodeRef, NodeRef),
    Scale(NodeRef, f64),
    Tanh(NodeRef),
    /// y = W x + b with W `(dout, din)`, x `(1, din)`, b `(1, dout)`.
    Linear { w: NodeRef, b: NodeRef, x: NodeRef },
    /// Mean of the selected table rows (rows may repeat).
    RowsMean { table: NodeRef, rows: Vec<usize> },
    /// Stacks the selected table rows into an `(n, d)` matrix.
    GatherRows { table: NodeRef, rows: Vec<usize> },
    Detach,
    Dot(NodeRef, NodeRef),
    SumSq(NodeRef),
    /// Cosine similarity; degenerate norms (< 1e-12) yield 0 with zero grad.
    CosineSim(NodeRef, NodeRef),
    /// Scalar log(sum(exp(x_i))) over scalar inputs.
    LogSumExp(Vec<NodeRef>),
    /// Elementwise sum of same-shape nodes.
    SumList(Vec<NodeRef>),
    MatMul(NodeRef, NodeRef),
    Transpose(NodeRef),
    /// `(m, n)` plus a `(1, n)` row bias.
    AddRowBroadcast(NodeRef, NodeRef),
    SliceCols { x: NodeRef, start: usize, len: usize },
    ConcatCols(Vec<NodeRef>),
    /// Square `(t, t)`; row i is a softmax over columns 0..=i, zero beyond.
    CausalSoftmaxRows(NodeRef),
    /// Mean cross-entropy of row-softmaxes against `targets` (None = unsupervised).
    CrossEntropyRows { logits: NodeRef, targets: Vec<Option<usize>> },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Vec<f64>,
    rows: usize,
    cols: usize,
    param: Option<ParamId>,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-node gradients produced by [`Tape::backward`].
pub struct Gradients {
    per_node: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn of(&self, n: NodeRef) -> &[f64] {
        &self.per_node[n.0]
    }
}

const COSINE_EPS: f64 = 1e-12;

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

    pub fn value(&self, n: NodeRef) -> &[f64] {
        &self.nodes[n.0].value
    }

    pub fn shape(&self, n: NodeRef) -> (usize, usize) {
        (self.nodes[n.0].rows, self.nodes[n.0].cols)
    }

    pub fn scalar(&self, n: NodeRef) -> f64 {
        debug_assert_eq!(self.shape(n), (1, 1), "scalar() on non-scalar node");
        self.nodes[n.0].value[0]
    }

    fn push(&mut self, op: Op, value: Vec<f64>, rows: usize, cols: usize) -> NodeRef {
        debug_assert_eq!(value.len(), rows * cols);
        self.nodes.push(Node { op, value, rows, cols, param: None });
        NodeRef(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, values: Vec<f64>, rows: usize, cols: usize) -> NodeRef {
        self.push(Op::Leaf, values, rows, cols)
    }

    pub fn vector(&mut self, values: Vec<f64>) -> NodeRef {
        let d = values.len();
        self.constant(values, 1, d)
    }

    pub fn scalar_const(&mut self, v: f64) -> NodeRef {
        self.constant(vec![v], 1, 1)
    }

    /// Leaf bound to a parameter; its gradient is scattered by
    /// [`Tape::accumulate_grads`].
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeRef {
        let t = store.get(id);
        let n = self.push(Op::Leaf, t.values.clone(), t.rows, t.cols);
        self.nodes[n.0].param = Some(id);
        n
    }

    pub fn add(&mut self, a: NodeRef, b: NodeRef) -> NodeRef {
        assert_eq!(self.shape(a), self.shape(b), "add shape mismatch");
        let (r, c) = self.shape(a);
        let v = self.binary_values(a, b, |x, y| x + y);
        self.push(Op::Add(a, b), v, r, c)
    }

    pub fn sub(&mut self, a: NodeRef, b: NodeRef) -> NodeRef {
        assert_eq!(self.shape(a), self.shape(b), "sub shape mismatch");
        let (r, c) = self.shape(a);
        let v = self.binary_values(a, b, |x, y| x - y);
        self.push(Op::Sub(a, b), v, r, c)
    }

    fn binary_values(&self, a: NodeRef, b: NodeRef, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.value(a).iter().zip(self.value(b).iter()).map(|(x, y)| f(*x, *y)).collect()
    }

    pub fn scale(&mut self, a: NodeRef, c: f64) -> NodeRef {
        let (r, co) = self.shape(a);
        let v = self.value(a).iter().map(|x| x * c).collect();
        self.push(Op::Scale(a, c), v, r, co)
    }

    pub fn tanh(&mut self, a: NodeRef) -> NodeRef {
        let (r, c) = self.shape(a);
        let v = self.value(a).iter().map(|x| x.tanh()).collect();
        self.push(Op::Tanh(a), v, r, c)
    }

    pub fn linear(&mut self, w: NodeRef, b: NodeRef, x: NodeRef) -> NodeRef {
        let (dout, din) = self.shape(w);
        assert_eq!(self.shape(x), (1, din), "linear input dim mismatch");
        assert_eq!(self.shape(b), (1, dout), "linear bias dim mismatch");
        let mut y = self.value(b).to_vec();
        let wv = self.value(w);
        let xv = self.value(x);
        for j in 0..dout {
            let row = &wv[j * din..(j + 1) * din];
            let mut acc = 0.0;
            for i in 0..din {
                acc += row[i] * xv[i];
            }
            y[j] += acc;
        }
        self.push(Op::Linear { w, b, x }, y, 1, dout)
    }

    pub fn rows_mean(&mut self, table: NodeRef, rows: Vec<usize>) -> NodeRef {
        let (n_rows, d) = self.shape(table);
        assert!(!rows.is_empty(), "rows_mean over empty selection");
        assert!(rows.iter().all(|r| *r < n_rows), "rows_mean row out of range");
        let tv = self.value(table);
        let mut v = vec![0.0; d];
        for r in &rows {
            for (acc, x) in v.iter_mut().zip(&tv[r * d..(r + 1) * d]) {
                *acc += x;
            }
        }
        let inv = 1.0 / rows.len() as f64;
        for x in &mut v {
            *x *= inv;
        }
        self.push(Op::RowsMean { table, rows }, v, 1, d)
    }

    pub fn gather_rows(&mut self, table: NodeRef, rows: Vec<usize>) -> NodeRef {
        let (n_rows, d) = self.shape(table);
        assert!(rows.iter().all(|r| *r < n_rows), "gather_rows row out of range");
        let tv = self.value(table);
        let mut v = Vec::with_capacity(rows.len() * d);
        for r in &rows {
            v.extend_from_slice(&tv[r * d..(r + 1) * d]);
        }
        let n = rows.len();
        self.push(Op::GatherRows { table, rows }, v, n, d)
    }

    pub fn detach(&mut self, a: NodeRef) -> NodeRef {
        let (r, c) = self.shape(a);
        let v = self.value(a).to_vec();
        self.push(Op::Detach, v, r, c)
    }

    pub fn dot(&mut self, a: NodeRef, b: NodeRef) -> NodeRef {
        assert_eq!(self.shape(a), self.shape(b), "dot shape mismatch");
        let v = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).sum();
        self.push(Op::Dot(a, b), vec![v], 1, 1)
    }

    pub fn sum_sq(&mut self, a: NodeRef) -> NodeRef {
        let v = self.value(a).iter().map(|x| x * x).sum();
        self.push(Op::SumSq(a), vec![v], 1, 1)
    }

    pub fn cosine_sim(&mut self, a: NodeRef, b: NodeRef) -> NodeRef {
        assert_eq!(self.shape(a), self.shape(b), "cosine shape mismatch");
        let av = self.value(a);
        let bv = self.value(b);
        let na = norm(av);
        let nb = norm(bv);
        let v = if na < COSINE_EPS || nb < COSINE_EPS {
            0.0
        } else {
            dot(av, bv) / (na * nb)
        };
        self.push(Op::CosineSim(a, b), vec![v], 1, 1)
    }

    pub fn log_sum_exp(&mut self, xs: Vec<NodeRef>) -> NodeRef {
        assert!(!xs.is_empty(), "log_sum_exp over empty list");
        for x in &xs {
            assert_eq!(self.shape(*x), (1, 1), "log_sum_exp expects scalars");
        }
        let vals: Vec<f64> = xs.iter().map(|x| self.scalar(*x)).collect();
        let v = log_sum_exp(&vals);
        self.push(Op::LogSumExp(xs), vec![v], 1, 1)
    }

    pub fn sum_list(&mut self, xs: Vec<NodeRef>) -> NodeRef {
        assert!(!xs.is_empty(), "sum_list over empty list");
        let (r, c) = self.shape(xs[0]);
        for x in &xs {
            assert_eq!(self.shape(*x), (r, c), "sum_list shape mismatch");
        }
        let mut v = vec![0.0; r * c];
        for x in &xs {
            for (acc, y) in v.iter_mut().zip(self.value(*x)) {
                *acc += y;
            }
        }
        self.push(Op::SumList(xs), v, r, c)
    }

    pub fn mean_list(&mut self, xs: Vec<NodeRef>) -> NodeRef {
        let n = xs.len();
        let s = self.sum_list(xs);
        self.scale(s, 1.0 / n as f64)
    }

    pub fn matmul(&mut self, a: NodeRef, b: NodeRef) -> NodeRef {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        assert_eq!(k, k2, "matmul inner dim mismatch");
        let av = self.value(a);
        let bv = self.value(b);
        let mut v = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let x = av[i * k + p];
                if x == 0.0 {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                let vrow = &mut v[i * n..(i + 1) * n];
                for j in 0..n {
                    vrow[j] += x * brow[j];
                }
            }
        }
        self.push(Op::MatMul(a, b), v, m, n)
    }

    pub fn transpose(&mut self, a: NodeRef) -> NodeRef {
        let (m, n) = self.shape(a);
        let av = self.value(a);
        let mut v = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                v[j * m + i] = av[i * n + j];
            }
        }
        self.push(Op::Transpose(a), v, n, m)
    }

    pub fn add_row_broadcast(&mut self, a: NodeRef, b: NodeRef) -> NodeRef {
        let (m, n) = self.shape(a);
        assert_eq!(self.shape(b), (1, n), "broadcast bias shape mismatch");
        let av = self.value(a);
        let bv = self.value(b);
        let mut v = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                v.push(av[i * n + j] + bv[j]);
            }
        }
        self.push(Op::AddRowBroadcast(a, b), v, m, n)
    }

    pub fn slice_cols(&mut self, x: NodeRef, start: usize, len: usize) -> NodeRef {
        let (m, n) = self.shape(x);
        assert!(start + len <= n, "slice_cols out of range");
        let xv = self.value(x);
        let mut v = Vec::with_capacity(m * len);
        for i in 0..m {
            v.extend_from_slice(&xv[i * n + start..i * n + start + len]);
        }
        self.push(Op::SliceCols { x, start, len }, v, m, len)
    }

    pub fn concat_cols(&mut self, parts: Vec<NodeRef>) -> NodeRef {
        assert!(!parts.is_empty());
        let m = self.shape(parts[0]).0;
        let total: usize = parts.iter().map(|p| self.shape(*p).1).sum();
        for p in &parts {
            assert_eq!(self.shape(*p).0, m, "concat_cols row mismatch");
        }
        let mut v = Vec::with_capacity(m * total);
        for i in 0..m {
            for p in &parts {
                let (_, c) = self.shape(*p);
                v.extend_from_slice(&self.value(*p)[i * c..(i + 1) * c]);
            }
        }
        self.push(Op::ConcatCols(parts), v, m, total)
    }

    pub fn causal_softmax_rows(&mut self, a: NodeRef) -> NodeRef {
        let (t, t2) = self.shape(a);
        assert_eq!(t, t2, "causal softmax expects a square matrix");
        let av = self.value(a);
        let mut v = vec![0.0; t * t];
        for i in 0..t {
            let row = &av[i * t..i * t + i + 1];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (j, x) in row.iter().enumerate() {
                let e = (x - m).exp();
                v[i * t + j] = e;
                z += e;
            }
            for j in 0..=i {
                v[i * t + j] /= z;
            }
        }
        self.push(Op::CausalSoftmaxRows(a), v, t, t)
    }

    pub fn cross_entropy_rows(&mut self, logits: NodeRef, targets: Vec<Option<usize>>) -> NodeRef {
        let (t, vocab) = self.shape(logits);
        assert_eq!(targets.len(), t, "targets length mismatch");
        let n_sup = targets.iter().filter(|t| t.is_some()).count();
        assert!(n_sup > 0, "cross_entropy_rows with no supervised positions");
        let lv = self.value(logits);
        let mut total = 0.0;
        for (i, tgt) in targets.iter().enumerate() {
            if let Some(tgt) = tgt {
                assert!(*tgt < vocab, "target out of vocabulary");
                let row = &lv[i * vocab..(i + 1) * vocab];
                total += log_sum_exp(row) - row[*tgt];
            }
        }
        let v = total / n_sup as f64;
        self.push(Op::CrossEntropyRows { logits, targets }, vec![v], 1, 1)
    }

    /// Reverse pass from a scalar loss node.
    pub fn backward(&self, loss: NodeRef) -> Gradients {
        assert_eq!(self.shape(loss), (1, 1), "backward needs a scalar loss");
        let mut grads: Vec<Vec<f64>> = self.nodes.iter().map(|n| vec![0.0; n.value.len()]).collect();
        grads[loss.0][0] = 1.0;
        for idx in (0..self.nodes.len()).rev() {
            let g = std::mem::take(&mut grads[idx]);
            if g.iter().all(|x| *x == 0.0) {
                grads[idx] = g;
                continue;
            }
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf | Op::Detach => {}
                Op::Add(a, b) => {
                    axpy(&mut grads[a.0], 1.0, &g);
                    axpy(&mut grads[b.0], 1.0, &g);
                }
                Op::Sub(a, b) => {
                    axpy(&mut grads[a.0], 1.0, &g);
                    axpy(&mut grads[b.0], -1.0, &g);
                }
                Op::Scale(a, c) => axpy(&mut grads[a.0], *c, &g),
                Op::Tanh(a) => {
                    for (i, y) in node.value.iter().enumerate() {
                        grads[a.0][i] += g[i] * (1.0 - y * y);
                    }
                }
                Op::Linear { w, b, x } => {
                    let (dout, din) = (self.nodes[w.0].rows, self.nodes[w.0].cols);
                    let xv = self.nodes[x.0].value.clone();
                    let wv = self.nodes[w.0].value.clone();
                    {
                        let gw = &mut grads[w.0];
                        for j in 0..dout {
                            for i in 0..din {
                                gw[j * din + i] += g[j] * xv[i];
                            }
                        }
                    }
                    axpy(&mut grads[b.0], 1.0, &g);
                    {
                        let gx = &mut grads[x.0];
                        for j in 0..dout {
                            let row = &wv[j * din..(j + 1) * din];
                            for i in 0..din {
                                gx[i] += g[j] * row[i];
                            }
                        }
                    }
                }
                Op::RowsMean { table, rows } => {
                    let d = node.cols;
                    let inv = 1.0 / rows.len() as f64;
                    let gt = &mut grads[table.0];
                    for r in rows {
                        for i in 0..d {
                            gt[r * d + i] += g[i] * inv;
                        }
                    }
                }
                Op::GatherRows { table, rows } => {
                    let d = node.cols;
                    let gt = &mut grads[table.0];
                    for (k, r) in rows.iter().enumerate() {
                        for i in 0..d {
                            gt[r * d + i] += g[k * d + i];
                        }
                    }
                }
                Op::Dot(a, b) => {
                    let bv = self.nodes[b.0].value.clone();
                    axpy(&mut grads[a.0], g[0], &bv);
                    let av = self.nodes[a.0].value.clone();
                    axpy(&mut grads[b.0], g[0], &av);
                }
                Op::SumSq(a) => {
                    let av = self.nodes[a.0].value.clone();
                    axpy(&mut grads[a.0], 2.0 * g[0], &av);
                }
                Op::CosineSim(a, b) => {
                    let av = self.nodes[a.0].value.clone();
                    let bv = self.nodes[b.0].value.clone();
                    let na = norm(&av);
                    let nb = norm(&bv);
                    if na >= COSINE_EPS && nb >= COSINE_EPS {
                        let cos = node.value[0];
                        let ga = &mut grads[a.0];
                        for i in 0..av.len() {
                            ga[i] += g[0] * (bv[i] / (na * nb) - cos * av[i] / (na * na));
                        }
                        let gb = &mut grads[b.0];
                        for i in 0..bv.len() {
                            gb[i] += g[0] * (av[i] / (na * nb) - cos * bv[i] / (nb * nb));
                        }
                    }
                }
                Op::LogSumExp(xs) => {
                    let y = node.value[0];
                    for x in xs {
                        let w = (self.nodes[x.0].value[0] - y).exp();
                        grads[x.0][0] += g[0] * w;
                    }
                }
                Op::SumList(xs) => {
                    for x in xs {
                        axpy(&mut grads[x.0], 1.0, &g);
                    }
                }
                Op::MatMul(a, b) => {
                    let (m, k) = (self.nodes[a.0].rows, self.nodes[a.0].cols);
                    let n = self.nodes[b.0].cols;
                    let av = self.nodes[a.0].value.clone();
                    let bv = self.nodes[b.0].value.clone();
                    {
                        // dA = g B^T
                        let ga = &mut grads[a.0];
                        for i in 0..m {
                            for p in 0..k {
                                let mut acc = 0.0;
                                for j in 0..n {
                                    acc += g[i * n + j] * bv[p * n + j];
                                }
                                ga[i * k + p] += acc;
                            }
                        }
                    }
                    {
                        // dB = A^T g
                        let gb = &mut grads[b.0];
                        for p in 0..k {
                            for j in 0..n {
                                let mut acc = 0.0;
                                for i in 0..m {
                                    acc += av[i * k + p] * g[i * n + j];
                                }
                                gb[p * n + j] += acc;
                            }
                        }
                    }
                }
                Op::Transpose(a) => {
                    let (n, m) = (node.rows, node.cols); // node is (n, m); a is (m, n)
                    let ga = &mut grads[a.0];
                    for i in 0..n {
                        for j in 0..m {
                            ga[j * n + i] += g[i * m + j];
                        }
                    }
                }
                Op::AddRowBroadcast(a, b) => {
                    axpy(&mut grads[a.0], 1.0, &g);
                    let (m, n) = (node.rows, node.cols);
                    let gb = &mut grads[b.0];
                    for i in 0..m {
                        for j in 0..n {
                            gb[j] += g[i * n + j];
                        }
                    }
                }
                Op::SliceCols { x, start, len } => {
                    let n = self.nodes[x.0].cols;
                    let m = node.rows;
                    let gx = &mut grads[x.0];
                    for i in 0..m {
                        for j in 0..*len {
                            gx[i * n + start + j] += g[i * len + j];
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let m = node.rows;
                    let total = node.cols;
                    let mut offset = 0;
                    for p in parts {
                        let c = self.nodes[p.0].cols;
                        let gp = &mut grads[p.0];
                        for i in 0..m {
                            for j in 0..c {
                                gp[i * c + j] += g[i * total + offset + j];
                            }
                        }
                        offset += c;
                    }
                }
                Op::CausalSoftmaxRows(a) => {
                    let t = node.rows;
                    let ga = &mut grads[a.0];
                    for i in 0..t {
                        let y = &node.value[i * t..i * t + i + 1];
                        let gi = &g[i * t..i * t + i + 1];
                        let inner: f64 = y.iter().zip(gi).map(|(yj, gj)| yj * gj).sum();
                        for j in 0..=i {
                            ga[i * t + j] += y[j] * (gi[j] - inner);
                        }
                    }
                }
                Op::CrossEntropyRows { logits, targets } => {
                    let vocab = self.nodes[logits.0].cols;
                    let lv = self.nodes[logits.0].value.clone();
                    let n_sup = targets.iter().filter(|t| t.is_some()).count() as f64;
                    let gl = &mut grads[logits.0];
                    for (i, tgt) in targets.iter().enumerate() {
                        if let Some(tgt) = tgt {
                            let row = &lv[i * vocab..(i + 1) * vocab];
                            let lse = log_sum_exp(row);
                            for j in 0..vocab {
                                let p = (row[j] - lse).exp();
                                let ind = if j == *tgt { 1.0 } else { 0.0 };
                                gl[i * vocab + j] += g[0] * (p - ind) / n_sup;
                            }
                        }
                    }
                }
            }
            grads[idx] = g;
        }
        Gradients { per_node: grads }
    }

    /// Adds leaf gradients into the store's grad buffers.
    pub fn accumulate_grads(&self, grads: &Gradients, store: &mut ParamStore) {
        for (idx, node) in self.nodes.iter().enumerate() {
            if let Some(pid) = node.param {
                let t = store.get_mut(pid);
                for (dst, src) in t.grad.iter_mut().zip(&grads.per_node[idx]) {
                    *dst += src;
                }
            }
        }
    }

    /// Re-evaluates the tape with coordinate overrides on leaf nodes.
    ///
    /// Detach nodes re-emit their originally captured value, and structural
    /// choices (gather indices, targets) stay fixed, so this computes the
    /// function whose exact gradient `backward` returns.
    pub fn replay(&self, loss: NodeRef, overrides: &[(NodeRef, usize, f64)]) -> f64 {
        let mut vals: Vec<Vec<f64>> = Vec::with_capacity(self.nodes.len());
        for (idx, node) in self.nodes.iter().enumerate() {
            let v = match &node.op {
                Op::Leaf => {
                    let mut v = node.value.clone();
                    for (n, coord, delta) in overrides {
                        if n.0 == idx {
                            v[*coord] += delta;
                        }
                    }
                    v
                }
                Op::Detach => node.value.clone(),
                Op::Add(a, b) => vals[a.0].iter().zip(&vals[b.0]).map(|(x, y)| x + y).collect(),
                Op::Sub(a, b) => vals[a.0].iter().zip(&vals[b.0]).map(|(x, y)| x - y).collect(),
                Op::Scale(a, c) => vals[a.0].iter().map(|x| x * c).collect(),
                Op::Tanh(a) => vals[a.0].iter().map(|x| x.tanh()).collect(),
                Op::Linear { w, b, x } => {
                    let (dout, din) = (self.nodes[w.0].rows, self.nodes[w.0].cols);
                    let mut y = vals[b.0].clone();
                    for j in 0..dout {
                        let row = &vals[w.0][j * din..(j + 1) * din];
                        let mut acc = 0.0;
                        for i in 0..din {
                            acc += row[i] * vals[x.0][i];
                        }
                        y[j] += acc;
                    }
                    y
                }
                Op::RowsMean { table, rows } => {
                    let d = node.cols;
                    let mut v = vec![0.0; d];
                    for r in rows {
                        for (acc, x) in v.iter_mut().zip(&vals[table.0][r * d..(r + 1) * d]) {
                            *acc += x;
                        }
                    }
                    let inv = 1.0 / rows.len() as f64;
                    v.iter_mut().for_each(|x| *x *= inv);
                    v
                }
                Op::GatherRows { table, rows } => {
                    let d = node.cols;
                    let mut v = Vec::with_capacity(rows.len() * d);
                    for r in rows {
                        v.extend_from_slice(&vals[table.0][r * d..(r + 1) * d]);
                    }
                    v
                }
                Op::Dot(a, b) => {
                    vec![dot(&vals[a.0], &vals[b.0])]
                }
                Op::SumSq(a) => vec![vals[a.0].iter().map(|x| x * x).sum()],
                Op::CosineSim(a, b) => {
                    let na = norm(&vals[a.0]);
                    let nb = norm(&vals[b.0]);
                    if na < COSINE_EPS || nb < COSINE_EPS {
                        vec![0.0]
                    } else {
                        vec![dot(&vals[a.0], &vals[b.0]) / (na * nb)]
                    }
                }
                Op::LogSumExp(xs) => {
                    let v: Vec<f64> = xs.iter().map(|x| vals[x.0][0]).collect();
                    vec![log_sum_exp(&v)]
                }
                Op::SumList(xs) => {
                    let mut v = vec![0.0; node.value.len()];
                    for x in xs {
                        for (acc, y) in v.iter_mut().zip(&vals[x.0]) {
                            *acc += y;
                        }
                    }
                    v
                }
                Op::MatMul(a, b) => {
                    let (m, k) = (self.nodes[a.0].rows, self.nodes[a.0].cols);
                    let n = self.nodes[b.0].cols;
                    let mut v = vec![0.0; m * n];
                    for i in 0..m {
                        for p in 0..k {
                            let x = vals[a.0][i * k + p];
                            if x == 0.0 {
                                continue;
                            }
                            for j in 0..n {
                                v[i * n + j] += x * vals[b.0][p * n + j];
                            }
                        }
                    }
                    v
                }
                Op::Transpose(a) => {
                    let (m, n) = (self.nodes[a.0].rows, self.nodes[a.0].cols);
                    let mut v = vec![0.0; m * n];
                    for i in 0..m {
                        for j in 0..n {
                            v[j * m + i] = vals[a.0][i * n + j];
                        }
                    }
                    v
                }
                Op::AddRowBroadcast(a, b) => {
                    let (m, n) = (node.rows, node.cols);
                    let mut v = Vec::with_capacity(m * n);
                    for i in 0..m {
                        for j in 0..n {
                            v.push(vals[a.0][i * n + j] + vals[b.0][j]);
                        }
                    }
                    v
                }
                Op::SliceCols { x, start, len } => {
                    let n = self.nodes[x.0].cols;
                    let m = node.rows;
                    let mut v = Vec::with_capacity(m * len);
                    for i in 0..m {
                        v.extend_from_slice(&vals[x.0][i * n + start..i * n + start + len]);
                    }
                    v
                }
                Op::ConcatCols(parts) => {
                    let m = node.rows;
                    let mut v = Vec::with_capacity(node.value.len());
                    for i in 0..m {
                        for p in parts {
                            let c = self.nodes[p.0].cols;
                            v.extend_from_slice(&vals[p.0][i * c..(i + 1) * c]);
                        }
                    }
                    v
                }
                Op::CausalSoftmaxRows(a) => {
                    let t = node.rows;
                    let mut v = vec![0.0; t * t];
                    for i in 0..t {
                        let row = &vals[a.0][i * t..i * t + i + 1];
                        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let mut z = 0.0;
                        for (j, x) in row.iter().enumerate() {
                            let e = (x - m).exp();
                            v[i * t + j] = e;
                            z += e;
                        }
                        for j in 0..=i {
                            v[i * t + j] /= z;
                        }
                    }
                    v
                }
                Op::CrossEntropyRows { logits, targets } => {
                    let vocab = self.nodes[logits.0].cols;
                    let n_sup = targets.iter().filter(|t| t.is_some()).count() as f64;
                    let mut total = 0.0;
                    for (i, tgt) in targets.iter().enumerate() {
                        if let Some(tgt) = tgt {
                            let row = &vals[logits.0][i * vocab..(i + 1) * vocab];
                            total += log_sum_exp(row) - row[*tgt];
                        }
                    }
                    vec![total / n_sup]
                }
            };
            vals.push(v);
        }
        vals[loss.0][0]
    }

    /// Param ids of all parameter-bound leaves, in tape order.
    pub fn param_leaves(&self) -> Vec<(NodeRef, ParamId)> {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.param.map(|p| (NodeRef(i), p)))
            .collect()
    }
}

fn axpy(dst: &mut [f64], a: f64, src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += a * s;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
