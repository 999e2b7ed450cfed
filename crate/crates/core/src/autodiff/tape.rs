//! Reverse-mode automatic differentiation over dense matrices.
//!
//! Every operation evaluates eagerly and appends a node to the tape, so node
//! ids are already in topological order. [`Tape::backward`] walks the nodes in
//! reverse and accumulates adjoints for every node that depends on a
//! gradient-requiring leaf.

use crate::autodiff::tensor::{gemm_acc, Tensor};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    AddRow(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Sigmoid(usize),
    Tanh(usize),
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    SliceCols(usize, usize),
    SliceRows(usize, usize),
    Gather(usize, Vec<usize>),
    Reshape(usize),
    /// Row `r` comes from the first input when `keep[r]`, else from the second.
    SelectRows(usize, usize, Vec<bool>),
    BatchedDot(usize, usize),
    BatchedWeightedSum(usize, usize),
    SoftmaxRows(usize),
    LogSoftmaxRows(usize),
    /// Weighted negative log-likelihood of one target column per row.
    PickNll(usize, Vec<usize>, Vec<f64>),
    Sum(usize),
    /// Fused LSTM gate nonlinearities: inputs (gates `[B, 4H]`, c_prev `[B, H]`),
    /// output `[B, 2H]` holding `[h | c]`.
    LstmPointwise(usize, usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient for `var`; zeros when the loss does not depend on it.
    pub fn get(&self, var: Var) -> Tensor {
        match &self.grads[var.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[var.0]),
        }
    }

    pub fn has(&self, var: Var) -> bool {
        self.grads[var.0].is_some()
    }
}

/// Single-threaded operation record. Each thread that computes gradients owns
/// its own tape.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape2(t: &Tensor) -> (usize, usize) {
    (t.rows(), t.cols())
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_row(src: &[f64], dst: &mut [f64]) {
    let max = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = (s - max).exp();
        total += *d;
    }
    for d in dst.iter_mut() {
        *d /= total;
    }
}

/// Accumulator for input `i`, created lazily and only when that input needs a gradient.
fn acc<'a>(nodes: &[Node], grads: &'a mut [Option<Vec<f64>>], i: usize) -> Option<&'a mut Vec<f64>> {
    if !nodes[i].needs_grad {
        return None;
    }
    let len = nodes[i].value.len();
    Some(grads[i].get_or_insert_with(|| vec![0.0; len]))
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

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[usize]) -> bool {
        vars.iter().any(|&v| self.nodes[v].needs_grad)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    /// Records a gradient-requiring leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Records a leaf excluded from differentiation.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = shape2(self.value(a));
        let (k2, n) = shape2(self.value(b));
        if k != k2 {
            return Err(Error::shape("matmul", format!("{m}x{k} · {k2}x{n}")));
        }
        let mut out = vec![0.0; m * n];
        gemm_acc(m, k, n, self.value(a).data(), false, self.value(b).data(), false, &mut out);
        let needs = self.needs(&[a.0, b.0]);
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::MatMul(a.0, b.0), needs))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if self.value(a).len() != self.value(b).len()
            || shape2(self.value(a)) != shape2(self.value(b))
        {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let va = self.value(a);
        let vb = self.value(b);
        let out = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let shape = va.shape().to_vec();
        let needs = self.needs(&[a.0, b.0]);
        self.push(Tensor::from_parts(shape, out), op, needs)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        Ok(self.zip_with(a, b, Op::Add(a.0, b.0), |x, y| x + y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        Ok(self.zip_with(a, b, Op::Sub(a.0, b.0), |x, y| x - y))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        Ok(self.zip_with(a, b, Op::Mul(a.0, b.0), |x, y| x * y))
    }

    /// Adds a bias row (`[n]` or `[1, n]`) to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (m, n) = shape2(self.value(a));
        if self.value(bias).len() != n {
            return Err(Error::shape(
                "add_row",
                format!("{m}x{n} + bias of {}", self.value(bias).len()),
            ));
        }
        let b = self.value(bias).data();
        let mut out = self.value(a).data().to_vec();
        for row in out.chunks_mut(n) {
            for (o, &bv) in row.iter_mut().zip(b) {
                *o += bv;
            }
        }
        let needs = self.needs(&[a.0, bias.0]);
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::AddRow(a.0, bias.0), needs))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.value(a).map(|v| v * factor);
        let needs = self.needs(&[a.0]);
        self.push(out, Op::Scale(a.0, factor), needs)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        let needs = self.needs(&[a.0]);
        self.push(out, Op::Sigmoid(a.0), needs)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        let needs = self.needs(&[a.0]);
        self.push(out, Op::Tanh(a.0), needs)
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat_cols", "no inputs"))?;
        let m = self.value(*first).rows();
        let widths: Vec<usize> = parts.iter().map(|p| self.value(*p).cols()).collect();
        if parts.iter().any(|p| self.value(*p).rows() != m) {
            return Err(Error::shape("concat_cols", "row counts differ"));
        }
        let n: usize = widths.iter().sum();
        let mut out = vec![0.0; m * n];
        let mut offset = 0;
        for (p, &w) in parts.iter().zip(&widths) {
            let src = self.value(*p).data();
            for r in 0..m {
                out[r * n + offset..r * n + offset + w].copy_from_slice(&src[r * w..(r + 1) * w]);
            }
            offset += w;
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let needs = self.needs(&ids);
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::ConcatCols(ids), needs))
    }

    /// Vertical stacking of matrices with equal column counts.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat_rows", "no inputs"))?;
        let n = self.value(*first).cols();
        if parts.iter().any(|p| self.value(*p).cols() != n) {
            return Err(Error::shape("concat_rows", "column counts differ"));
        }
        let mut out = Vec::new();
        for p in parts {
            out.extend_from_slice(self.value(*p).data());
        }
        let m = out.len() / n;
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let needs = self.needs(&ids);
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::ConcatRows(ids), needs))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Result<Var> {
        let (m, n) = shape2(self.value(a));
        if width == 0 || start + width > n {
            return Err(Error::shape(
                "slice_cols",
                format!("[{start}, {}) of {n} columns", start + width),
            ));
        }
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(m * width);
        for r in 0..m {
            out.extend_from_slice(&src[r * n + start..r * n + start + width]);
        }
        let needs = self.needs(&[a.0]);
        Ok(self.push(Tensor::from_parts(vec![m, width], out), Op::SliceCols(a.0, start), needs))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, count: usize) -> Result<Var> {
        let (m, n) = shape2(self.value(a));
        if count == 0 || start + count > m {
            return Err(Error::shape(
                "slice_rows",
                format!("[{start}, {}) of {m} rows", start + count),
            ));
        }
        let out = self.value(a).data()[start * n..(start + count) * n].to_vec();
        let needs = self.needs(&[a.0]);
        Ok(self.push(Tensor::from_parts(vec![count, n], out), Op::SliceRows(a.0, start), needs))
    }

    /// Row lookup: output row `i` is `table[ids[i]]`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (v, d) = shape2(self.value(table));
        if ids.is_empty() {
            return Err(Error::shape("gather", "no ids"));
        }
        if let Some(bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::shape("gather", format!("id {bad} out of {v} rows")));
        }
        let src = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            out.extend_from_slice(&src[i * d..(i + 1) * d]);
        }
        let needs = self.needs(&[table.0]);
        Ok(self.push(
            Tensor::from_parts(vec![ids.len(), d], out),
            Op::Gather(table.0, ids.to_vec()),
            needs,
        ))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let out = self.value(a).reshape(vec![rows, cols])?;
        let needs = self.needs(&[a.0]);
        Ok(self.push(out, Op::Reshape(a.0), needs))
    }

    /// Row-wise choice between two equally shaped matrices.
    pub fn select_rows(&mut self, keep: &[bool], a: Var, b: Var) -> Result<Var> {
        self.same_shape("select_rows", a, b)?;
        let (m, n) = shape2(self.value(a));
        if keep.len() != m {
            return Err(Error::shape("select_rows", format!("{} flags for {m} rows", keep.len())));
        }
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(m * n);
        for (r, &k) in keep.iter().enumerate() {
            let src = if k { da } else { db };
            out.extend_from_slice(&src[r * n..(r + 1) * n]);
        }
        let needs = self.needs(&[a.0, b.0]);
        Ok(self.push(
            Tensor::from_parts(vec![m, n], out),
            Op::SelectRows(a.0, b.0, keep.to_vec()),
            needs,
        ))
    }

    /// `out[b, t] = Σ_k mem[b, t·d + k] · q[b, k]` for `mem: [B, T·d]`, `q: [B, d]`.
    pub fn batched_dot(&mut self, mem: Var, q: Var) -> Result<Var> {
        let (bm, td) = shape2(self.value(mem));
        let (bq, d) = shape2(self.value(q));
        if bm != bq || td % d != 0 {
            return Err(Error::shape("batched_dot", format!("{bm}x{td} with {bq}x{d}")));
        }
        let t = td / d;
        let (dm, dq) = (self.value(mem).data(), self.value(q).data());
        let mut out = vec![0.0; bm * t];
        for b in 0..bm {
            let qrow = &dq[b * d..(b + 1) * d];
            for i in 0..t {
                let m = &dm[b * td + i * d..b * td + (i + 1) * d];
                out[b * t + i] = m.iter().zip(qrow).map(|(x, y)| x * y).sum();
            }
        }
        let needs = self.needs(&[mem.0, q.0]);
        Ok(self.push(Tensor::from_parts(vec![bm, t], out), Op::BatchedDot(mem.0, q.0), needs))
    }

    /// `out[b, k] = Σ_t w[b, t] · mem[b, t·d + k]` for `w: [B, T]`, `mem: [B, T·d]`.
    pub fn batched_weighted_sum(&mut self, w: Var, mem: Var) -> Result<Var> {
        let (bw, t) = shape2(self.value(w));
        let (bm, td) = shape2(self.value(mem));
        if bw != bm || td % t != 0 {
            return Err(Error::shape(
                "batched_weighted_sum",
                format!("{bw}x{t} with {bm}x{td}"),
            ));
        }
        let d = td / t;
        let (dw, dm) = (self.value(w).data(), self.value(mem).data());
        let mut out = vec![0.0; bw * d];
        for b in 0..bw {
            let o = &mut out[b * d..(b + 1) * d];
            for i in 0..t {
                let wi = dw[b * t + i];
                let m = &dm[b * td + i * d..b * td + (i + 1) * d];
                for (ov, mv) in o.iter_mut().zip(m) {
                    *ov += wi * mv;
                }
            }
        }
        let needs = self.needs(&[w.0, mem.0]);
        Ok(self.push(
            Tensor::from_parts(vec![bw, d], out),
            Op::BatchedWeightedSum(w.0, mem.0),
            needs,
        ))
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let (m, n) = shape2(self.value(a));
        let src = self.value(a).data();
        let mut out = vec![0.0; m * n];
        for r in 0..m {
            softmax_row(&src[r * n..(r + 1) * n], &mut out[r * n..(r + 1) * n]);
        }
        let needs = self.needs(&[a.0]);
        self.push(Tensor::from_parts(vec![m, n], out), Op::SoftmaxRows(a.0), needs)
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let (m, n) = shape2(self.value(a));
        let src = self.value(a).data();
        let mut out = vec![0.0; m * n];
        for r in 0..m {
            let row = &src[r * n..(r + 1) * n];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            for (o, v) in out[r * n..(r + 1) * n].iter_mut().zip(row) {
                *o = v - lse;
            }
        }
        let needs = self.needs(&[a.0]);
        self.push(Tensor::from_parts(vec![m, n], out), Op::LogSoftmaxRows(a.0), needs)
    }

    /// `Σ_r weights[r] · (−logp[r, targets[r]])` as a scalar.
    pub fn pick_nll(&mut self, logp: Var, targets: &[usize], weights: &[f64]) -> Result<Var> {
        let (m, n) = shape2(self.value(logp));
        if targets.len() != m || weights.len() != m {
            return Err(Error::shape(
                "pick_nll",
                format!("{m} rows, {} targets, {} weights", targets.len(), weights.len()),
            ));
        }
        if let Some(bad) = targets.iter().find(|&&t| t >= n) {
            return Err(Error::shape("pick_nll", format!("target {bad} out of {n} columns")));
        }
        let src = self.value(logp).data();
        let total: f64 = targets
            .iter()
            .zip(weights)
            .enumerate()
            .filter(|(_, (_, &w))| w != 0.0)
            .map(|(r, (&t, &w))| -w * src[r * n + t])
            .sum();
        let needs = self.needs(&[logp.0]);
        Ok(self.push(
            Tensor::scalar(total),
            Op::PickNll(logp.0, targets.to_vec(), weights.to_vec()),
            needs,
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).sum();
        let needs = self.needs(&[a.0]);
        self.push(Tensor::scalar(total), Op::Sum(a.0), needs)
    }

    /// LSTM gate nonlinearities on pre-activations laid out as `[i | f | g | o]`.
    ///
    /// Returns `[h | c]` of shape `[B, 2H]`.
    pub fn lstm_pointwise(&mut self, gates: Var, c_prev: Var) -> Result<Var> {
        let (b, g4) = shape2(self.value(gates));
        let (bc, h) = shape2(self.value(c_prev));
        if b != bc || g4 != 4 * h {
            return Err(Error::shape(
                "lstm_pointwise",
                format!("gates {b}x{g4}, cell {bc}x{h}"),
            ));
        }
        let (dg, dc) = (self.value(gates).data(), self.value(c_prev).data());
        let mut out = vec![0.0; b * 2 * h];
        for r in 0..b {
            let gr = &dg[r * g4..(r + 1) * g4];
            for k in 0..h {
                let i = sigmoid(gr[k]);
                let f = sigmoid(gr[h + k]);
                let g = gr[2 * h + k].tanh();
                let o = sigmoid(gr[3 * h + k]);
                let c = f * dc[r * h + k] + i * g;
                out[r * 2 * h + k] = o * c.tanh();
                out[r * 2 * h + h + k] = c;
            }
        }
        let needs = self.needs(&[gates.0, c_prev.0]);
        Ok(self.push(
            Tensor::from_parts(vec![b, 2 * h], out),
            Op::LstmPointwise(gates.0, c_prev.0),
            needs,
        ))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[loss.0] = Some(vec![1.0]);

        for id in (0..n).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if node.needs_grad {
                self.propagate(id, &g, &mut grads);
            }
            grads[id] = Some(g);
        }

        let shapes = self.nodes.iter().map(|nd| nd.value.shape().to_vec()).collect();
        let mut out: Vec<Option<Tensor>> = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                g.filter(|_| self.nodes[i].needs_grad)
                    .map(|g| Tensor::from_parts(self.nodes[i].value.shape().to_vec(), g))
            })
            .collect();
        out.resize(self.nodes.len(), None);
        Ok(Gradients { grads: out, shapes })
    }

    fn propagate(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        let out = node.value.data();
        let nodes = &self.nodes;

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = shape2(&nodes[*a].value);
                let n = nodes[*b].value.cols();
                if let Some(ga) = acc(nodes, grads, *a) {
                    gemm_acc(m, n, k, g, false, nodes[*b].value.data(), true, ga);
                }
                if let Some(gb) = acc(nodes, grads, *b) {
                    gemm_acc(k, m, n, nodes[*a].value.data(), true, g, false, gb);
                }
            }
            Op::Add(a, b) => {
                for i in [*a, *b] {
                    if let Some(gi) = acc(nodes, grads, i) {
                        gi.iter_mut().zip(g).for_each(|(x, y)| *x += y);
                    }
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = acc(nodes, grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(x, y)| *x += y);
                }
                if let Some(gb) = acc(nodes, grads, *b) {
                    gb.iter_mut().zip(g).for_each(|(x, y)| *x -= y);
                }
            }
            Op::AddRow(a, bias) => {
                if let Some(ga) = acc(nodes, grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(x, y)| *x += y);
                }
                if let Some(gb) = acc(nodes, grads, *bias) {
                    let n = gb.len();
                    for row in g.chunks(n) {
                        gb.iter_mut().zip(row).for_each(|(x, y)| *x += y);
                    }
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (nodes[*a].value.data(), nodes[*b].value.data());
                if let Some(ga) = acc(nodes, grads, *a) {
                    for ((x, gy), bv) in ga.iter_mut().zip(g).zip(vb) {
                        *x += gy * bv;
                    }
                }
                if let Some(gb) = acc(nodes, grads, *b) {
                    for ((x, gy), av) in gb.iter_mut().zip(g).zip(va) {
                        *x += gy * av;
                    }
                }
            }
            Op::Scale(a, f) => {
                if let Some(ga) = acc(nodes, grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(x, y)| *x += f * y);
                }
            }
            Op::Sigmoid(a) => {
                if let Some(ga) = acc(nodes, grads, *a) {
                    for ((x, gy), y) in ga.iter_mut().zip(g).zip(out) {
                        *x += gy * y * (1.0 - y);
                    }
                }
            }
            Op::Tanh(a) => {
                if let Some(ga) = acc(nodes, grads, *a) {
                    for ((x, gy), y) in ga.iter_mut().zip(g).zip(out) {
                        *x += gy * (1.0 - y * y);
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let m = node.value.rows();
                let n = node.value.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = nodes[p].value.cols();
                    if let Some(gp) = acc(nodes, grads, p) {
                        for r in 0..m {
                            let src = &g[r * n + offset..r * n + offset + w];
                            gp[r * w..(r + 1) * w]
                                .iter_mut()
                                .zip(src)
                                .for_each(|(x, y)| *x += y);
                        }
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = nodes[p].value.len();
                    if let Some(gp) = acc(nodes, grads, p) {
                        gp.iter_mut()
                            .zip(&g[offset..offset + len])
                            .for_each(|(x, y)| *x += y);
                    }
                    offset += len;
                }
            }
            Op::SliceCols(a, start) => {
                let n = nodes[*a].value.cols();
                let w = node.value.cols();
                if let Some(ga) = acc(nodes, grads, *a) {
                    for (r, row) in g.chunks(w).enumerate() {
                        ga[r * n + start..r * n + start + w]
                            .iter_mut()
                            .zip(row)
                            .for_each(|(x, y)| *x += y);
                    }
                }
            }
            Op::SliceRows(a, start) => {
                let n = node.value.cols();
                if let Some(ga) = acc(nodes, grads, *a) {
                    ga[start * n..start * n + g.len()]
                        .iter_mut()
                        .zip(g)
                        .for_each(|(x, y)| *x += y);
                }
            }
            Op::Gather(table, ids) => {
                let d = node.value.cols();
                if let Some(gt) = acc(nodes, grads, *table) {
                    for (r, &i) in ids.iter().enumerate() {
                        gt[i * d..(i + 1) * d]
                            .iter_mut()
                            .zip(&g[r * d..(r + 1) * d])
                            .for_each(|(x, y)| *x += y);
                    }
                }
            }
            Op::Reshape(a) => {
                if let Some(ga) = acc(nodes, grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(x, y)| *x += y);
                }
            }
            Op::SelectRows(a, b, keep) => {
                let n = node.value.cols();
                for (input, want) in [(*a, true), (*b, false)] {
                    if let Some(gi) = acc(nodes, grads, input) {
                        for (r, &k) in keep.iter().enumerate() {
                            if k == want {
                                gi[r * n..(r + 1) * n]
                                    .iter_mut()
                                    .zip(&g[r * n..(r + 1) * n])
                                    .for_each(|(x, y)| *x += y);
                            }
                        }
                    }
                }
            }
            Op::BatchedDot(mem, q) => {
                let (bm, td) = shape2(&nodes[*mem].value);
                let d = nodes[*q].value.cols();
                let t = td / d;
                let (dm, dq) = (nodes[*mem].value.data(), nodes[*q].value.data());
                if let Some(gm) = acc(nodes, grads, *mem) {
                    for b in 0..bm {
                        for i in 0..t {
                            let gy = g[b * t + i];
                            let dst = &mut gm[b * td + i * d..b * td + (i + 1) * d];
                            for (x, qv) in dst.iter_mut().zip(&dq[b * d..(b + 1) * d]) {
                                *x += gy * qv;
                            }
                        }
                    }
                }
                if let Some(gq) = acc(nodes, grads, *q) {
                    for b in 0..bm {
                        for i in 0..t {
                            let gy = g[b * t + i];
                            let src = &dm[b * td + i * d..b * td + (i + 1) * d];
                            for (x, mv) in gq[b * d..(b + 1) * d].iter_mut().zip(src) {
                                *x += gy * mv;
                            }
                        }
                    }
                }
            }
            Op::BatchedWeightedSum(w, mem) => {
                let (bw, t) = shape2(&nodes[*w].value);
                let td = nodes[*mem].value.cols();
                let d = td / t;
                let (dw, dm) = (nodes[*w].value.data(), nodes[*mem].value.data());
                if let Some(gw) = acc(nodes, grads, *w) {
                    for b in 0..bw {
                        let gy = &g[b * d..(b + 1) * d];
                        for i in 0..t {
                            let m = &dm[b * td + i * d..b * td + (i + 1) * d];
                            gw[b * t + i] += m.iter().zip(gy).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                }
                if let Some(gm) = acc(nodes, grads, *mem) {
                    for b in 0..bw {
                        let gy = &g[b * d..(b + 1) * d];
                        for i in 0..t {
                            let wi = dw[b * t + i];
                            let dst = &mut gm[b * td + i * d..b * td + (i + 1) * d];
                            for (x, y) in dst.iter_mut().zip(gy) {
                                *x += wi * y;
                            }
                        }
                    }
                }
            }
            Op::SoftmaxRows(a) => {
                let n = node.value.cols();
                if let Some(ga) = acc(nodes, grads, *a) {
                    for ((gr, yr), dst) in g.chunks(n).zip(out.chunks(n)).zip(ga.chunks_mut(n)) {
                        let dot: f64 = gr.iter().zip(yr).map(|(x, y)| x * y).sum();
                        for ((x, gy), y) in dst.iter_mut().zip(gr).zip(yr) {
                            *x += y * (gy - dot);
                        }
                    }
                }
            }
            Op::LogSoftmaxRows(a) => {
                let n = node.value.cols();
                if let Some(ga) = acc(nodes, grads, *a) {
                    for ((gr, yr), dst) in g.chunks(n).zip(out.chunks(n)).zip(ga.chunks_mut(n)) {
                        let total: f64 = gr.iter().sum();
                        for ((x, gy), y) in dst.iter_mut().zip(gr).zip(yr) {
                            *x += gy - y.exp() * total;
                        }
                    }
                }
            }
            Op::PickNll(a, targets, weights) => {
                let n = nodes[*a].value.cols();
                if let Some(ga) = acc(nodes, grads, *a) {
                    for (r, (&t, &w)) in targets.iter().zip(weights).enumerate() {
                        ga[r * n + t] -= w * g[0];
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(ga) = acc(nodes, grads, *a) {
                    ga.iter_mut().for_each(|x| *x += g[0]);
                }
            }
            Op::LstmPointwise(gates, c_prev) => {
                let h = nodes[*c_prev].value.cols();
                let dg = nodes[*gates].value.data();
                let dc = nodes[*c_prev].value.data();
                let b = node.value.rows();
                let mut d_gates = vec![0.0; b * 4 * h];
                let mut d_cprev = vec![0.0; b * h];
                for r in 0..b {
                    let gr = &dg[r * 4 * h..(r + 1) * 4 * h];
                    for k in 0..h {
                        let i = sigmoid(gr[k]);
                        let f = sigmoid(gr[h + k]);
                        let gg = gr[2 * h + k].tanh();
                        let o = sigmoid(gr[3 * h + k]);
                        let c = out[r * 2 * h + h + k];
                        let tc = c.tanh();
                        let gh = g[r * 2 * h + k];
                        let gc = g[r * 2 * h + h + k] + gh * o * (1.0 - tc * tc);
                        let row = &mut d_gates[r * 4 * h..(r + 1) * 4 * h];
                        row[k] = gc * gg * i * (1.0 - i);
                        row[h + k] = gc * dc[r * h + k] * f * (1.0 - f);
                        row[2 * h + k] = gc * i * (1.0 - gg * gg);
                        row[3 * h + k] = gh * tc * o * (1.0 - o);
                        d_cprev[r * h + k] = gc * f;
                    }
                }
                if let Some(ga) = acc(nodes, grads, *gates) {
                    ga.iter_mut().zip(&d_gates).for_each(|(x, y)| *x += y);
                }
                if let Some(gc) = acc(nodes, grads, *c_prev) {
                    gc.iter_mut().zip(&d_cprev).for_each(|(x, y)| *x += y);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck::grad_check;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
        Tensor::uniform(&[rows, cols], 1.0, rng)
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::matrix(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.0, 9.0]).unwrap());
        let loss = tape.sum(x);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).data(), &[1.0; 6]);
    }

    #[test]
    fn quadratic_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::row(vec![1.0, 2.0]));
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.sum(sq);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).data(), &[2.0, 4.0]);
    }

    #[test]
    fn cross_entropy_gradient_is_softmax_minus_onehot() {
        let z = vec![0.3, -1.2, 2.0, 0.7];
        let k = 2;
        let mut tape = Tape::new();
        let x = tape.param(Tensor::row(z.clone()));
        let lp = tape.log_softmax_rows(x);
        let loss = tape.pick_nll(lp, &[k], &[1.0]).unwrap();
        let g = tape.backward(loss).unwrap().get(x);

        // Central-difference oracle on the closed-form loss.
        let ce = |z: &[f64]| {
            let lse = z.iter().map(|v| v.exp()).sum::<f64>().ln();
            lse - z[k]
        };
        let eps = 1e-5;
        for i in 0..z.len() {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[i] += eps;
            zm[i] -= eps;
            let numeric = (ce(&zp) - ce(&zm)) / (2.0 * eps);
            assert!((g.data()[i] - numeric).abs() < 1e-6, "coord {i}");
        }
        let total: f64 = z.iter().map(|v| v.exp()).sum();
        let expected = z[0].exp() / total;
        assert!((g.data()[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::row(vec![1.0, 2.0]));
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn unreachable_leaf_gets_zero() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::row(vec![1.0, 2.0]));
        let y = tape.param(Tensor::row(vec![3.0]));
        let loss = tape.sum(x);
        let g = tape.backward(loss).unwrap();
        assert!(!g.has(y));
        assert_eq!(g.get(y).data(), &[0.0]);
    }

    #[test]
    fn softmax_rows_normalized_and_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut tape = Tape::new();
        let mut t = rand_tensor(&mut rng, 4, 7);
        t.data_mut()[0] = 800.0;
        let x = tape.constant(t);
        let s = tape.softmax_rows(x);
        for r in 0..4 {
            let row = tape.value(s).row_slice(r);
            assert!(row.iter().all(|&v| v > 0.0 || r == 0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    /// Every primitive checked against central differences on random inputs.
    #[test]
    fn primitives_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        type Build = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>;
        let cases: Vec<(&str, Vec<(usize, usize)>, Build)> = vec![
            ("matmul", vec![(3, 4), (4, 2)], Box::new(|t: &mut Tape, v: &[Var]| {
                let y = t.matmul(v[0], v[1])?;
                let y = t.tanh(y);
                Ok(t.sum(y))
            })),
            ("add_sub_mul", vec![(2, 3), (2, 3)], Box::new(|t: &mut Tape, v: &[Var]| {
                let a = t.add(v[0], v[1])?;
                let s = t.sub(v[0], v[1])?;
                let m = t.mul(a, s)?;
                let m = t.mul(m, a)?;
                Ok(t.sum(m))
            })),
            ("add_row_scale_sigmoid", vec![(3, 4), (1, 4)], Box::new(|t: &mut Tape, v: &[Var]| {
                let a = t.add_row(v[0], v[1])?;
                let a = t.scale(a, 1.7);
                let a = t.sigmoid(a);
                let a = t.mul(a, a)?;
                Ok(t.sum(a))
            })),
            ("concat_slice", vec![(2, 3), (2, 2)], Box::new(|t: &mut Tape, v: &[Var]| {
                let c = t.concat_cols(&[v[0], v[1], v[0]])?;
                let s = t.slice_cols(c, 2, 4)?;
                let r = t.concat_rows(&[s, s])?;
                let r = t.slice_rows(r, 1, 2)?;
                let q = t.mul(r, r)?;
                let q = t.tanh(q);
                Ok(t.sum(q))
            })),
            ("gather_reshape", vec![(5, 3)], Box::new(|t: &mut Tape, v: &[Var]| {
                let g = t.gather(v[0], &[4, 1, 4, 0])?;
                let r = t.reshape(g, 2, 6)?;
                let r = t.tanh(r);
                let r = t.mul(r, r)?;
                Ok(t.sum(r))
            })),
            ("select_rows", vec![(3, 2), (3, 2)], Box::new(|t: &mut Tape, v: &[Var]| {
                let s = t.select_rows(&[true, false, true], v[0], v[1])?;
                let s = t.mul(s, v[0])?;
                Ok(t.sum(s))
            })),
            ("attention", vec![(2, 6), (2, 2)], Box::new(|t: &mut Tape, v: &[Var]| {
                let e = t.batched_dot(v[0], v[1])?;
                let w = t.softmax_rows(e);
                let c = t.batched_weighted_sum(w, v[0])?;
                let c = t.tanh(c);
                let c = t.mul(c, c)?;
                Ok(t.sum(c))
            })),
            ("log_softmax_nll", vec![(3, 5)], Box::new(|t: &mut Tape, v: &[Var]| {
                let lp = t.log_softmax_rows(v[0]);
                t.pick_nll(lp, &[0, 4, 2], &[1.0, 0.5, 0.0])
            })),
            ("lstm_pointwise", vec![(2, 8), (2, 2)], Box::new(|t: &mut Tape, v: &[Var]| {
                let hc = t.lstm_pointwise(v[0], v[1])?;
                let y = t.mul(hc, hc)?;
                Ok(t.sum(y))
            })),
        ];
        for (name, shapes, build) in cases {
            let params: Vec<Tensor> = shapes
                .iter()
                .map(|&(r, c)| {
                    let mut t = rand_tensor(&mut rng, r, c);
                    t.data_mut().iter_mut().for_each(|v| *v += rng.gen_range(-0.1..0.1));
                    t
                })
                .collect();
            let err = grad_check(|tape, vars| build(tape, vars), &params, 1e-5).unwrap();
            assert!(err < 1e-4, "{name}: relative error {err}");
        }
    }
}
