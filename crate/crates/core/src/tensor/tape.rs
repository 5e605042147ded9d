use std::rc::Rc;

use super::{gelu_scalar, gemm, normal_cdf, normal_pdf, sigmoid_scalar, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A partition of `0..len` into non-empty groups, used by segment softmax.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segments {
    groups: Vec<Vec<usize>>,
    len: usize,
}

impl Segments {
    pub fn new(groups: Vec<Vec<usize>>) -> Result<Self, TensorError> {
        let len: usize = groups.iter().map(Vec::len).sum();
        let mut seen = vec![false; len];
        for (g, members) in groups.iter().enumerate() {
            if members.is_empty() {
                return Err(TensorError::EmptySegment(g));
            }
            for &i in members {
                if i >= len || std::mem::replace(&mut seen[i], true) {
                    return Err(TensorError::Shape {
                        op: "segments",
                        detail: format!("index {i} out of range or repeated"),
                    });
                }
            }
        }
        Ok(Segments { groups, len })
    }

    /// Groups positions by their id, keeping position order within a group.
    /// Ids that never occur produce no group.
    pub fn from_ids(ids: &[usize]) -> Self {
        let n = ids.iter().max().map_or(0, |m| m + 1);
        let mut groups = vec![Vec::new(); n];
        for (pos, &id) in ids.iter().enumerate() {
            groups[id].push(pos);
        }
        groups.retain(|g| !g.is_empty());
        Segments { groups, len: ids.len() }
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Concat(Vec<Var>),
    Gather(Var, Rc<Vec<usize>>),
    ScatterSum(Var, Rc<Vec<usize>>),
    SliceRows(Var, usize),
    RowDot(Var, Var),
    RowScale(Var, Var),
    SegmentSoftmax(Var, Rc<Segments>),
    LogSoftmax(Var),
    Gelu(Var),
    Sigmoid(Var),
    Ln(Var),
    Clamp(Var, f64, f64),
    OneMinus(Var),
    Sum(Var),
    Mean(Var),
}

/// Records operations in execution order; [`Tape::backward`] replays them
/// in reverse, accumulating gradients additively into shared parents.
#[derive(Default)]
pub struct Tape {
    values: Vec<Tensor>,
    grads: Vec<Option<Vec<f64>>>,
    ops: Vec<Op>,
    needs_grad: Vec<bool>,
}

fn shape_err(op: &'static str, detail: String) -> TensorError {
    TensorError::Shape { op, detail }
}

fn row_shape(like: &Tensor, rows: usize) -> Vec<usize> {
    if like.shape().len() == 2 {
        vec![rows, like.cols()]
    } else {
        vec![rows]
    }
}

fn acc<'a>(
    grads: &'a mut [Option<Vec<f64>>],
    needs: &[bool],
    v: Var,
    len: usize,
) -> Option<&'a mut Vec<f64>> {
    if !needs[v.0] {
        return None;
    }
    Some(grads[v.0].get_or_insert_with(|| vec![0.0; len]))
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, name: &'static str, parents: &[Var]) -> Result<Var, TensorError> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: name });
        }
        let needs = parents.iter().any(|p| self.needs_grad[p.0]);
        self.values.push(value);
        self.grads.push(None);
        self.ops.push(op);
        self.needs_grad.push(needs);
        Ok(Var(self.values.len() - 1))
    }

    /// A trainable leaf; gradients are collected for it.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.leaf(t, true)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.leaf(t, false)
    }

    fn leaf(&mut self, t: Tensor, requires_grad: bool) -> Var {
        self.values.push(t);
        self.grads.push(None);
        self.ops.push(Op::Leaf);
        self.needs_grad.push(requires_grad);
        Var(self.values.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.values[v.0]
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.needs_grad[v.0]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (&self.values[a.0], &self.values[b.0]);
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        if tb.rows() != k {
            return Err(shape_err("matmul", format!("{:?} x {:?}", ta.shape(), tb.shape())));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, ta.data(), false, tb.data(), false, 0.0, &mut out);
        self.push(Tensor { shape: vec![m, n], data: out }, Op::MatMul(a, b), "matmul", &[a, b])
    }

    /// Adds a bias row to every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (&self.values[a.0], &self.values[bias.0]);
        let c = ta.cols();
        if tb.len() != c {
            return Err(shape_err("add_bias", format!("{:?} + {:?}", ta.shape(), tb.shape())));
        }
        let mut out = ta.data().to_vec();
        for row in out.chunks_mut(c.max(1)) {
            for (o, b) in row.iter_mut().zip(tb.data()) {
                *o += b;
            }
        }
        let shape = ta.shape().to_vec();
        self.push(Tensor { shape, data: out }, Op::AddBias(a, bias), "add_bias", &[a, bias])
    }

    fn same_len(&self, op: &'static str, a: Var, b: Var) -> Result<(), TensorError> {
        let (ta, tb) = (&self.values[a.0], &self.values[b.0]);
        if ta.len() != tb.len() {
            return Err(shape_err(op, format!("{:?} vs {:?}", ta.shape(), tb.shape())));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_len("add", a, b)?;
        let (ta, tb) = (&self.values[a.0], &self.values[b.0]);
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let shape = ta.shape().to_vec();
        self.push(Tensor { shape, data }, Op::Add(a, b), "add", &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_len("mul", a, b)?;
        let (ta, tb) = (&self.values[a.0], &self.values[b.0]);
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let shape = ta.shape().to_vec();
        self.push(Tensor { shape, data }, Op::Mul(a, b), "mul", &[a, b])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var, TensorError> {
        let ta = &self.values[a.0];
        let data = ta.data().iter().map(|x| x * s).collect();
        let shape = ta.shape().to_vec();
        self.push(Tensor { shape, data }, Op::Scale(a, s), "scale", &[a])
    }

    pub fn neg(&mut self, a: Var) -> Result<Var, TensorError> {
        self.scale(a, -1.0)
    }

    /// Column-wise concatenation of matrices with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let rows = parts.first().map(|p| self.values[p.0].rows()).unwrap_or(0);
        if parts.iter().any(|p| self.values[p.0].rows() != rows) {
            return Err(shape_err("concat", "row counts differ".into()));
        }
        let cols: usize = parts.iter().map(|p| self.values[p.0].cols()).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                out.extend_from_slice(self.values[p.0].row(r));
            }
        }
        self.push(Tensor { shape: vec![rows, cols], data: out }, Op::Concat(parts.to_vec()), "concat", parts)
    }

    /// Selects rows by index; indices may repeat.
    pub fn gather(&mut self, a: Var, idx: Rc<Vec<usize>>) -> Result<Var, TensorError> {
        let ta = &self.values[a.0];
        let c = ta.cols();
        if let Some(&bad) = idx.iter().find(|&&i| i >= ta.rows()) {
            return Err(shape_err("gather", format!("row {bad} of {}", ta.rows())));
        }
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in idx.iter() {
            out.extend_from_slice(ta.row(i));
        }
        let shape = row_shape(ta, idx.len());
        self.push(Tensor { shape, data: out }, Op::Gather(a, idx), "gather", &[a])
    }

    /// Sums row `e` of `a` into output row `idx[e]`, in increasing `e`.
    pub fn scatter_sum(&mut self, a: Var, idx: Rc<Vec<usize>>, rows: usize) -> Result<Var, TensorError> {
        let ta = &self.values[a.0];
        if idx.len() != ta.rows() {
            return Err(shape_err("scatter_sum", format!("{} indices for {} rows", idx.len(), ta.rows())));
        }
        let c = ta.cols();
        let mut out = vec![0.0; rows * c];
        for (e, &t) in idx.iter().enumerate() {
            if t >= rows {
                return Err(shape_err("scatter_sum", format!("target row {t} of {rows}")));
            }
            for (o, x) in out[t * c..(t + 1) * c].iter_mut().zip(ta.row(e)) {
                *o += x;
            }
        }
        let shape = row_shape(ta, rows);
        self.push(Tensor { shape, data: out }, Op::ScatterSum(a, idx), "scatter_sum", &[a])
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var, TensorError> {
        let ta = &self.values[a.0];
        if start > end || end > ta.rows() {
            return Err(shape_err("slice_rows", format!("{start}..{end} of {}", ta.rows())));
        }
        let c = ta.cols();
        let data = ta.data()[start * c..end * c].to_vec();
        let shape = row_shape(ta, end - start);
        self.push(Tensor { shape, data }, Op::SliceRows(a, start), "slice_rows", &[a])
    }

    /// Per-row inner products of two equally shaped matrices.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (&self.values[a.0], &self.values[b.0]);
        if ta.rows() != tb.rows() || ta.cols() != tb.cols() {
            return Err(shape_err("row_dot", format!("{:?} vs {:?}", ta.shape(), tb.shape())));
        }
        let data = (0..ta.rows())
            .map(|r| ta.row(r).iter().zip(tb.row(r)).map(|(x, y)| x * y).sum())
            .collect();
        self.push(Tensor { shape: vec![ta.rows()], data }, Op::RowDot(a, b), "row_dot", &[a, b])
    }

    /// Scales row `r` of `a` by `w[r]`.
    pub fn row_scale(&mut self, a: Var, w: Var) -> Result<Var, TensorError> {
        let (ta, tw) = (&self.values[a.0], &self.values[w.0]);
        if tw.len() != ta.rows() {
            return Err(shape_err("row_scale", format!("{:?} by {:?}", ta.shape(), tw.shape())));
        }
        let c = ta.cols();
        let mut data = ta.data().to_vec();
        for (row, s) in data.chunks_mut(c.max(1)).zip(tw.data()) {
            row.iter_mut().for_each(|x| *x *= s);
        }
        let shape = ta.shape().to_vec();
        self.push(Tensor { shape, data }, Op::RowScale(a, w), "row_scale", &[a, w])
    }

    /// Softmax within each segment, with max subtraction.
    pub fn segment_softmax(&mut self, a: Var, segs: Rc<Segments>) -> Result<Var, TensorError> {
        let ta = &self.values[a.0];
        if segs.len() != ta.len() {
            return Err(shape_err("segment_softmax", format!("{} positions for {} values", segs.len(), ta.len())));
        }
        let x = ta.data();
        let mut out = vec![0.0; x.len()];
        for (g, members) in segs.groups().iter().enumerate() {
            if members.is_empty() {
                return Err(TensorError::EmptySegment(g));
            }
            let m = members.iter().map(|&i| x[i]).fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for &i in members {
                out[i] = (x[i] - m).exp();
                z += out[i];
            }
            for &i in members {
                out[i] /= z;
            }
        }
        let shape = ta.shape().to_vec();
        self.push(Tensor { shape, data: out }, Op::SegmentSoftmax(a, segs), "segment_softmax", &[a])
    }

    /// Log-softmax over all elements.
    pub fn log_softmax(&mut self, a: Var) -> Result<Var, TensorError> {
        let ta = &self.values[a.0];
        if ta.is_empty() {
            return Err(TensorError::EmptySegment(0));
        }
        let m = ta.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + ta.data().iter().map(|x| (x - m).exp()).sum::<f64>().ln();
        let data = ta.data().iter().map(|x| x - lse).collect();
        let shape = ta.shape().to_vec();
        self.push(Tensor { shape, data }, Op::LogSoftmax(a), "log_softmax", &[a])
    }

    fn map(&mut self, a: Var, op: Op, name: &'static str, f: impl Fn(f64) -> f64) -> Result<Var, TensorError> {
        let ta = &self.values[a.0];
        let data = ta.data().iter().map(|&x| f(x)).collect();
        let shape = ta.shape().to_vec();
        self.push(Tensor { shape, data }, op, name, &[a])
    }

    pub fn gelu(&mut self, a: Var) -> Result<Var, TensorError> {
        self.map(a, Op::Gelu(a), "gelu", gelu_scalar)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, TensorError> {
        self.map(a, Op::Sigmoid(a), "sigmoid", sigmoid_scalar)
    }

    pub fn ln(&mut self, a: Var) -> Result<Var, TensorError> {
        self.map(a, Op::Ln(a), "ln", f64::ln)
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamping is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var, TensorError> {
        self.map(a, Op::Clamp(a, lo, hi), "clamp", |x| x.clamp(lo, hi))
    }

    pub fn one_minus(&mut self, a: Var) -> Result<Var, TensorError> {
        self.map(a, Op::OneMinus(a), "one_minus", |x| 1.0 - x)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, TensorError> {
        let s = self.values[a.0].data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), "sum", &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, TensorError> {
        let t = &self.values[a.0];
        if t.is_empty() {
            return Err(shape_err("mean", "empty tensor".into()));
        }
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(a), "mean", &[a])
    }

    /// Reverse pass from a single-element output.
    pub fn backward(&mut self, out: Var) -> Result<(), TensorError> {
        if self.values[out.0].len() != 1 {
            return Err(shape_err("backward", format!("output shape {:?}", self.values[out.0].shape())));
        }
        for g in self.grads.iter_mut() {
            *g = None;
        }
        self.grads[out.0] = Some(vec![1.0]);
        for i in (0..=out.0).rev() {
            if !self.needs_grad[i] {
                continue;
            }
            let Some(g) = self.grads[i].take() else { continue };
            self.backprop(i, &g);
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn backprop(&mut self, i: usize, g: &[f64]) {
        let values = &self.values;
        let grads = &mut self.grads;
        let needs = &self.needs_grad;
        let out = &values[i];
        match &self.ops[i] {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (&values[a.0], &values[b.0]);
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if let Some(ga) = acc(grads, needs, *a, m * k) {
                    gemm(m, n, k, g, false, tb.data(), true, 1.0, ga);
                }
                if let Some(gb) = acc(grads, needs, *b, k * n) {
                    gemm(k, m, n, ta.data(), true, g, false, 1.0, gb);
                }
            }
            Op::AddBias(a, b) => {
                let c = values[b.0].len();
                if let Some(ga) = acc(grads, needs, *a, g.len()) {
                    ga.iter_mut().zip(g).for_each(|(x, y)| *x += y);
                }
                if let Some(gb) = acc(grads, needs, *b, c) {
                    for row in g.chunks(c.max(1)) {
                        gb.iter_mut().zip(row).for_each(|(x, y)| *x += y);
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if let Some(gv) = acc(grads, needs, *v, g.len()) {
                        gv.iter_mut().zip(g).for_each(|(x, y)| *x += y);
                    }
                }
            }
            Op::Mul(a, b) => {
                let (xa, xb) = (values[a.0].data(), values[b.0].data());
                if let Some(ga) = acc(grads, needs, *a, g.len()) {
                    for j in 0..g.len() {
                        ga[j] += g[j] * xb[j];
                    }
                }
                if let Some(gb) = acc(grads, needs, *b, g.len()) {
                    for j in 0..g.len() {
                        gb[j] += g[j] * xa[j];
                    }
                }
            }
            Op::Scale(a, s) => {
                if let Some(ga) = acc(grads, needs, *a, g.len()) {
                    ga.iter_mut().zip(g).for_each(|(x, y)| *x += y * s);
                }
            }
            Op::Concat(parts) => {
                let total = out.cols();
                let mut offset = 0;
                for p in parts {
                    let c = values[p.0].cols();
                    if let Some(gp) = acc(grads, needs, *p, out.rows() * c) {
                        for r in 0..out.rows() {
                            let src = &g[r * total + offset..r * total + offset + c];
                            gp[r * c..(r + 1) * c].iter_mut().zip(src).for_each(|(x, y)| *x += y);
                        }
                    }
                    offset += c;
                }
            }
            Op::Gather(a, idx) => {
                let ta = &values[a.0];
                let c = ta.cols();
                if let Some(ga) = acc(grads, needs, *a, ta.len()) {
                    for (r, &src) in idx.iter().enumerate() {
                        ga[src * c..(src + 1) * c]
                            .iter_mut()
                            .zip(&g[r * c..(r + 1) * c])
                            .for_each(|(x, y)| *x += y);
                    }
                }
            }
            Op::ScatterSum(a, idx) => {
                let ta = &values[a.0];
                let c = ta.cols();
                if let Some(ga) = acc(grads, needs, *a, ta.len()) {
                    for (e, &t) in idx.iter().enumerate() {
                        ga[e * c..(e + 1) * c]
                            .iter_mut()
                            .zip(&g[t * c..(t + 1) * c])
                            .for_each(|(x, y)| *x += y);
                    }
                }
            }
            Op::SliceRows(a, start) => {
                let ta = &values[a.0];
                let c = ta.cols();
                if let Some(ga) = acc(grads, needs, *a, ta.len()) {
                    ga[start * c..start * c + g.len()].iter_mut().zip(g).for_each(|(x, y)| *x += y);
                }
            }
            Op::RowDot(a, b) => {
                let (ta, tb) = (&values[a.0], &values[b.0]);
                let c = ta.cols();
                for (target, other) in [(a, tb), (b, ta)] {
                    if let Some(gt) = acc(grads, needs, *target, ta.len()) {
                        for (r, gr) in g.iter().enumerate() {
                            gt[r * c..(r + 1) * c]
                                .iter_mut()
                                .zip(other.row(r))
                                .for_each(|(x, y)| *x += gr * y);
                        }
                    }
                }
            }
            Op::RowScale(a, w) => {
                let (ta, tw) = (&values[a.0], &values[w.0]);
                let c = ta.cols();
                if let Some(ga) = acc(grads, needs, *a, ta.len()) {
                    for r in 0..ta.rows() {
                        let s = tw.data()[r];
                        ga[r * c..(r + 1) * c]
                            .iter_mut()
                            .zip(&g[r * c..(r + 1) * c])
                            .for_each(|(x, y)| *x += y * s);
                    }
                }
                if let Some(gw) = acc(grads, needs, *w, tw.len()) {
                    for r in 0..ta.rows() {
                        gw[r] += ta.row(r).iter().zip(&g[r * c..(r + 1) * c]).map(|(x, y)| x * y).sum::<f64>();
                    }
                }
            }
            Op::SegmentSoftmax(a, segs) => {
                let y = out.data();
                if let Some(ga) = acc(grads, needs, *a, y.len()) {
                    for members in segs.groups() {
                        let dot: f64 = members.iter().map(|&j| g[j] * y[j]).sum();
                        for &j in members {
                            ga[j] += y[j] * (g[j] - dot);
                        }
                    }
                }
            }
            Op::LogSoftmax(a) => {
                let y = out.data();
                let total: f64 = g.iter().sum();
                if let Some(ga) = acc(grads, needs, *a, y.len()) {
                    for j in 0..y.len() {
                        ga[j] += g[j] - y[j].exp() * total;
                    }
                }
            }
            Op::Gelu(a) => {
                let x = values[a.0].data();
                if let Some(ga) = acc(grads, needs, *a, x.len()) {
                    for j in 0..x.len() {
                        ga[j] += g[j] * (normal_cdf(x[j]) + x[j] * normal_pdf(x[j]));
                    }
                }
            }
            Op::Sigmoid(a) => {
                let y = out.data();
                if let Some(ga) = acc(grads, needs, *a, y.len()) {
                    for j in 0..y.len() {
                        ga[j] += g[j] * y[j] * (1.0 - y[j]);
                    }
                }
            }
            Op::Ln(a) => {
                let x = values[a.0].data();
                if let Some(ga) = acc(grads, needs, *a, x.len()) {
                    for j in 0..x.len() {
                        ga[j] += g[j] / x[j];
                    }
                }
            }
            Op::Clamp(a, lo, hi) => {
                let x = values[a.0].data();
                if let Some(ga) = acc(grads, needs, *a, x.len()) {
                    for j in 0..x.len() {
                        if x[j] >= *lo && x[j] <= *hi {
                            ga[j] += g[j];
                        }
                    }
                }
            }
            Op::OneMinus(a) => {
                if let Some(ga) = acc(grads, needs, *a, g.len()) {
                    ga.iter_mut().zip(g).for_each(|(x, y)| *x -= y);
                }
            }
            Op::Sum(a) => {
                let n = values[a.0].len();
                if let Some(ga) = acc(grads, needs, *a, n) {
                    ga.iter_mut().for_each(|x| *x += g[0]);
                }
            }
            Op::Mean(a) => {
                let n = values[a.0].len();
                if let Some(ga) = acc(grads, needs, *a, n) {
                    ga.iter_mut().for_each(|x| *x += g[0] / n as f64);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_softmax_fixtures() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::vector(vec![0.7, 0.7, 0.7, 5.0, 1.0, 2.0, 3.0]));
        let segs = Rc::new(Segments::new(vec![vec![0, 1, 2], vec![3], vec![4, 5, 6]]).unwrap());
        let y = t.segment_softmax(x, segs).unwrap();
        let y = t.value(y).data().to_vec();
        for v in &y[..3] {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(y[3], 1.0);
        let z: f64 = [1.0f64, 2.0, 3.0].iter().map(|v| v.exp()).sum();
        for (i, v) in [1.0f64, 2.0, 3.0].iter().enumerate() {
            assert!((y[4 + i] - v.exp() / z).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_segment_rejected() {
        assert_eq!(Segments::new(vec![vec![0], vec![]]), Err(TensorError::EmptySegment(1)));
    }

    #[test]
    fn from_ids_skips_missing() {
        let s = Segments::from_ids(&[2, 0, 2]);
        assert_eq!(s.groups(), &[vec![1], vec![0, 2]]);
    }

    #[test]
    fn shared_parent_accumulates() {
        // f = sum(x * x) -> df/dx = 2x
        let mut t = Tape::new();
        let x = t.param(Tensor::vector(vec![1.0, 2.0]));
        let y = t.mul(x, x).unwrap();
        let s = t.sum(y).unwrap();
        t.backward(s).unwrap();
        assert_eq!(t.grad(x).unwrap(), &[2.0, 4.0]);
    }

    #[test]
    fn non_finite_is_an_error() {
        let mut t = Tape::new();
        let x = t.param(Tensor::vector(vec![0.0]));
        assert_eq!(t.ln(x), Err(TensorError::NonFinite { op: "ln" }));
    }

    #[test]
    fn constants_get_no_grad() {
        let mut t = Tape::new();
        let c = t.constant(Tensor::vector(vec![1.0, 2.0]));
        let p = t.param(Tensor::vector(vec![3.0, 4.0]));
        let y = t.mul(c, p).unwrap();
        let s = t.sum(y).unwrap();
        t.backward(s).unwrap();
        assert!(t.grad(c).is_none());
        assert_eq!(t.grad(p).unwrap(), &[1.0, 2.0]);
    }

    #[test]
    fn log_softmax_stable() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::vector(vec![1000.0, 0.0]));
        let y = t.log_softmax(x).unwrap();
        assert_eq!(t.value(y).data()[0], 0.0);
        assert!((t.value(y).data()[1] + 1000.0).abs() < 1e-9);
    }
}
