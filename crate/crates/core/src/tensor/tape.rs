use std::collections::HashMap;

use rand::Rng;

use super::{ParamId, ParamStore, Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulCol(Var, Var),
    Scale(Var, Real),
    AddScalar(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    LeakyRelu(Var, Real),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    LogSoftmaxRows(Var),
    Dropout(Var, Vec<Real>),
    SumAll(Var),
    MeanAll(Var),
    SumCols(Var),
    GatherRows(Var, Vec<usize>),
    SelectRows(Vec<(Var, usize)>),
    SegmentSoftmax(Var, Vec<usize>),
    SegmentSum(Var, Vec<usize>),
    MaxRows(Var, Vec<usize>),
    Pick(Var, Vec<(usize, usize)>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records one forward pass. Operations append to the tape in execution
/// order, so every node's inputs precede it.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

fn shape_err(op: &'static str, detail: String) -> Error {
    Error::Shape { op, detail }
}

fn check_segments(ids: &[usize], num_segments: usize) -> Result<()> {
    match ids.iter().find(|&&s| s >= num_segments) {
        Some(&id) => Err(Error::InvalidSegment { id, num_segments }),
        None => Ok(()),
    }
}

fn matmul_raw(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; m * n];
    let (ad, bd) = (a.data(), b.data());
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = ad[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &bd[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor::new(m, n, out).expect("sized")
}

/// `a · bᵀ` for `a: m x k`, `b: n x k`.
fn matmul_t_raw(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k, n) = (a.rows(), a.cols(), b.rows());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let ar = a.row_slice(i);
        for j in 0..n {
            let br = b.row_slice(j);
            let mut s = 0.0;
            for p in 0..k {
                s += ar[p] * br[p];
            }
            out[i * n + j] = s;
        }
    }
    Tensor::new(m, n, out).expect("sized")
}

/// `aᵀ · b` for `a: m x k`, `b: m x n`.
fn t_matmul_raw(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let ar = a.row_slice(i);
        let br = b.row_slice(i);
        for p in 0..k {
            let av = ar[p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(br) {
                *o += av * bv;
            }
        }
    }
    Tensor::new(k, n, out).expect("sized")
}

fn map(t: &Tensor, f: impl Fn(Real) -> Real) -> Tensor {
    Tensor::new(t.rows(), t.cols(), t.data().iter().map(|&v| f(v)).collect()).expect("sized")
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(Real, Real) -> Real) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.rows(), a.cols(), data).expect("sized")
}

pub(crate) fn sigmoid(x: Real) -> Real {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// A value that does not receive gradients.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A leaf that receives gradients.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Binds a stored parameter to this tape. Repeated calls return the same var.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.leaf(store.get(id).clone());
        self.params.insert(id, v);
        v
    }

    /// Treats `vars[i]` as the binding of `ParamId(i)`.
    pub(crate) fn adopt_params(&mut self, vars: &[Var]) {
        for (i, &v) in vars.iter().enumerate() {
            self.params.insert(ParamId(i), v);
        }
    }

    /// Parameters bound to this tape, ordered by id.
    pub fn bound_params(&self) -> Vec<(ParamId, Var)> {
        let mut out: Vec<_> = self.params.iter().map(|(&p, &v)| (p, v)).collect();
        out.sort();
        out
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa[1] != sb[0] {
            return Err(shape_err("matmul", format!("{sa:?} x {sb:?}")));
        }
        let v = matmul_raw(self.value(a), self.value(b));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::MatMul(a, b), rg))
    }

    /// `x · wᵀ`: applies a weight stored as `out x in` to row vectors.
    pub fn matmul_t(&mut self, x: Var, w: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(x), self.shape(w));
        if sa[1] != sb[1] {
            return Err(shape_err("matmul_t", format!("{sa:?} x {sb:?}^T")));
        }
        let v = matmul_t_raw(self.value(x), self.value(w));
        let rg = self.rg(x) || self.rg(w);
        Ok(self.push(v, Op::MatMulT(x, w), rg))
    }

    /// `x · wᵀ + b` with `b` a `1 x out` row.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let y = self.matmul_t(x, w)?;
        match b {
            Some(b) => self.add_row(y, b),
            None => Ok(y),
        }
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let v = zip_map(self.value(a), self.value(b), |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let v = zip_map(self.value(a), self.value(b), |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let v = zip_map(self.value(a), self.value(b), |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Mul(a, b), rg))
    }

    /// Adds a `1 x n` row to every row of an `m x n` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (sa, sr) = (self.shape(a), self.shape(row));
        if sr[0] != 1 || sr[1] != sa[1] {
            return Err(shape_err("add_row", format!("{sa:?} + {sr:?}")));
        }
        let r = self.value(row).data().to_vec();
        let mut v = self.value(a).clone();
        let n = sa[1];
        for (i, x) in v.data_mut().iter_mut().enumerate() {
            *x += r[i % n];
        }
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(v, Op::AddRow(a, row), rg))
    }

    /// Scales row `i` of an `m x n` matrix by entry `i` of an `m x 1` column.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (sa, sc) = (self.shape(a), self.shape(col));
        if sc[1] != 1 || sc[0] != sa[0] {
            return Err(shape_err("mul_col", format!("{sa:?} * {sc:?}")));
        }
        let c = self.value(col).data().to_vec();
        let mut v = self.value(a).clone();
        let n = sa[1];
        for (i, x) in v.data_mut().iter_mut().enumerate() {
            *x *= c[i / n.max(1)];
        }
        let rg = self.rg(a) || self.rg(col);
        Ok(self.push(v, Op::MulCol(a, col), rg))
    }

    pub fn scale(&mut self, a: Var, s: Real) -> Var {
        let v = map(self.value(a), |x| x * s);
        let rg = self.rg(a);
        self.push(v, Op::Scale(a, s), rg)
    }

    pub fn add_scalar(&mut self, a: Var, s: Real) -> Var {
        let v = map(self.value(a), |x| x + s);
        let rg = self.rg(a);
        self.push(v, Op::AddScalar(a), rg)
    }

    /// `1 - a`, elementwise.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let n = self.scale(a, -1.0);
        self.add_scalar(n, 1.0)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| shape_err("concat_cols", "no inputs".into()))?;
        let rows = self.shape(first)[0];
        if let Some(&bad) = parts.iter().find(|&&p| self.shape(p)[0] != rows) {
            return Err(shape_err(
                "concat_cols",
                format!("{rows} rows vs {:?}", self.shape(bad)),
            ));
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p)[1]).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        let v = Tensor::new(rows, cols, data)?;
        Ok(self.push(v, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| shape_err("concat_rows", "no inputs".into()))?;
        let cols = self.shape(first)[1];
        if let Some(&bad) = parts.iter().find(|&&p| self.shape(p)[1] != cols) {
            return Err(shape_err(
                "concat_rows",
                format!("{cols} cols vs {:?}", self.shape(bad)),
            ));
        }
        let rows: usize = parts.iter().map(|&p| self.shape(p)[0]).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        let v = Tensor::new(rows, cols, data)?;
        Ok(self.push(v, Op::ConcatRows(parts.to_vec()), rg))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: Real) -> Var {
        let v = map(self.value(a), |x| if x > 0.0 { x } else { slope * x });
        let rg = self.rg(a);
        self.push(v, Op::LeakyRelu(a, slope), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = map(self.value(a), |x| if x > 0.0 { x } else { 0.0 });
        let rg = self.rg(a);
        self.push(v, Op::Relu(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = map(self.value(a), sigmoid);
        let rg = self.rg(a);
        self.push(v, Op::Sigmoid(a), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = map(self.value(a), Real::tanh);
        let rg = self.rg(a);
        self.push(v, Op::Tanh(a), rg)
    }

    /// Row-wise log-softmax.
    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let (m, n) = (x.rows(), x.cols());
        let mut out = Vec::with_capacity(m * n);
        for r in 0..m {
            let row = x.row_slice(r);
            let mx = row.iter().copied().fold(Real::NEG_INFINITY, Real::max);
            let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<Real>().ln();
            out.extend(row.iter().map(|v| v - lse));
        }
        let v = Tensor::new(m, n, out).expect("sized");
        let rg = self.rg(a);
        self.push(v, Op::LogSoftmaxRows(a), rg)
    }

    /// Inverted dropout. Identity when `train` is false; otherwise each entry
    /// is zeroed with probability `rate` and survivors are scaled by `1/(1-rate)`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, rate: Real, train: bool, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !train || rate == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<Real> = (0..self.value(a).len())
            .map(|_| if rng.random::<f64>() < rate as f64 { 0.0 } else { keep })
            .collect();
        let x = self.value(a);
        let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let v = Tensor::new(x.rows(), x.cols(), data)?;
        let rg = self.rg(a);
        Ok(self.push(v, Op::Dropout(a, mask), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::SumAll(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let s = x.data().iter().sum::<Real>() / x.len().max(1) as Real;
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::MeanAll(a), rg)
    }

    /// Row sums as an `m x 1` column.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let col = (0..x.rows()).map(|r| x.row_slice(r).iter().sum()).collect();
        let rg = self.rg(a);
        self.push(Tensor::column(col), Op::SumCols(a), rg)
    }

    /// Rows of `a` at the given indices (repeats allowed).
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let rows = self.shape(a)[0];
        if let Some(&bad) = idx.iter().find(|&&i| i >= rows) {
            return Err(Error::IndexOutOfRange {
                what: "gather_rows",
                index: bad,
                len: rows,
            });
        }
        let v = self.value(a).select_rows(idx);
        let rg = self.rg(a);
        Ok(self.push(v, Op::GatherRows(a, idx.to_vec()), rg))
    }

    /// Stacks single rows drawn from several tensors.
    pub fn select_rows(&mut self, parts: &[(Var, usize)], cols: usize) -> Result<Var> {
        let mut data = Vec::with_capacity(parts.len() * cols);
        for &(v, r) in parts {
            let s = self.shape(v);
            if s[1] != cols {
                return Err(shape_err("select_rows", format!("{s:?} has != {cols} cols")));
            }
            if r >= s[0] {
                return Err(Error::IndexOutOfRange {
                    what: "select_rows",
                    index: r,
                    len: s[0],
                });
            }
            data.extend_from_slice(self.value(v).row_slice(r));
        }
        let rg = parts.iter().any(|&(v, _)| self.rg(v));
        let v = Tensor::new(parts.len(), cols, data)?;
        Ok(self.push(v, Op::SelectRows(parts.to_vec()), rg))
    }

    /// Softmax of an `E x 1` score column within segments.
    ///
    /// Entries sharing a segment id are normalized together after subtracting
    /// the segment maximum. Segments without entries produce nothing.
    pub fn segment_softmax(&mut self, scores: Var, segment_ids: &[usize], num_segments: usize) -> Result<Var> {
        let s = self.shape(scores);
        if s[1] != 1 || s[0] != segment_ids.len() {
            return Err(shape_err(
                "segment_softmax",
                format!("scores {s:?} with {} ids", segment_ids.len()),
            ));
        }
        check_segments(segment_ids, num_segments)?;
        let out = segment_softmax_values(self.value(scores).data(), segment_ids, num_segments);
        let rg = self.rg(scores);
        Ok(self.push(
            Tensor::column(out),
            Op::SegmentSoftmax(scores, segment_ids.to_vec()),
            rg,
        ))
    }

    /// Sums rows of an `E x h` matrix into `num_segments` rows; empty segments are zero.
    pub fn segment_sum(&mut self, values: Var, segment_ids: &[usize], num_segments: usize) -> Result<Var> {
        let s = self.shape(values);
        if s[0] != segment_ids.len() {
            return Err(shape_err(
                "segment_sum",
                format!("values {s:?} with {} ids", segment_ids.len()),
            ));
        }
        check_segments(segment_ids, num_segments)?;
        let h = s[1];
        let mut out = Tensor::zeros(num_segments, h);
        let x = self.value(values);
        for (e, &seg) in segment_ids.iter().enumerate() {
            let src = x.row_slice(e);
            let dst = &mut out.data_mut()[seg * h..(seg + 1) * h];
            for (d, v) in dst.iter_mut().zip(src) {
                *d += v;
            }
        }
        let rg = self.rg(values);
        Ok(self.push(out, Op::SegmentSum(values, segment_ids.to_vec()), rg))
    }

    /// Column-wise maximum over the listed rows, as a `1 x n` row.
    pub fn max_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let s = self.shape(a);
        if rows.is_empty() {
            return Err(Error::EmptyPool("max_rows"));
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= s[0]) {
            return Err(Error::IndexOutOfRange {
                what: "max_rows",
                index: bad,
                len: s[0],
            });
        }
        let x = self.value(a);
        let mut best = vec![rows[0]; s[1]];
        let mut vals = x.row_slice(rows[0]).to_vec();
        for &r in &rows[1..] {
            for (c, v) in x.row_slice(r).iter().enumerate() {
                if *v > vals[c] {
                    vals[c] = *v;
                    best[c] = r;
                }
            }
        }
        let rg = self.rg(a);
        Ok(self.push(Tensor::row(vals), Op::MaxRows(a, best), rg))
    }

    /// Picks single entries `(row, col)` into an `n x 1` column.
    pub fn pick(&mut self, a: Var, at: &[(usize, usize)]) -> Result<Var> {
        let s = self.shape(a);
        if let Some(&(r, c)) = at.iter().find(|&&(r, c)| r >= s[0] || c >= s[1]) {
            return Err(Error::IndexOutOfRange {
                what: "pick",
                index: r.max(c),
                len: if r >= s[0] { s[0] } else { s[1] },
            });
        }
        let x = self.value(a);
        let col = at.iter().map(|&(r, c)| x.get(r, c)).collect();
        let rg = self.rg(a);
        Ok(self.push(Tensor::column(col), Op::Pick(a, at.to_vec()), rg))
    }

    /// Mean negative log-likelihood of `labels` under row-wise log-probabilities.
    pub fn nll_loss(&mut self, log_probs: Var, labels: &[usize]) -> Result<Var> {
        let s = self.shape(log_probs);
        if s[0] != labels.len() {
            return Err(shape_err("nll_loss", format!("{s:?} with {} labels", labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= s[1]) {
            return Err(Error::IndexOutOfRange {
                what: "nll_loss label",
                index: bad,
                len: s[1],
            });
        }
        let at: Vec<_> = labels.iter().enumerate().map(|(i, &l)| (i, l)).collect();
        let picked = self.pick(log_probs, &at)?;
        let m = self.mean(picked);
        Ok(self.scale(m, -1.0))
    }

    /// Mean squared difference between equally shaped tensors.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let d = self.sub(pred, target)?;
        let sq = self.mul(d, d)?;
        Ok(self.mean(sq))
    }

    /// Fails if any recorded value is NaN or infinite.
    pub fn check_finite(&self) -> Result<()> {
        match self.nodes.iter().position(|n| !n.value.all_finite()) {
            Some(i) => Err(Error::NonFinite(format!(
                "tape node {i} ({:?})",
                op_name(&self.nodes[i].op)
            ))),
            None => Ok(()),
        }
    }

    /// Reverse pass from a scalar loss. Consumes the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        let s = self.shape(loss);
        if s != [1, 1] {
            return Err(Error::NonScalarLoss(s[0], s[1]));
        }
        self.check_finite()?;
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if !g.all_finite() {
                    return Err(Error::NonFinite(format!("gradient of tape node {i}")));
                }
            }
        }
        let mut params: Vec<_> = self.params.into_iter().collect();
        params.sort();
        Ok(Gradients { grads, params })
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let mut acc = |v: Var, t: Tensor| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&t),
                slot @ None => *slot = Some(t),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    acc(*a, matmul_t_raw(g, bv));
                }
                if self.rg(*b) {
                    acc(*b, t_matmul_raw(av, g));
                }
            }
            Op::MatMulT(x, w) => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                if self.rg(*x) {
                    acc(*x, matmul_raw(g, wv));
                }
                if self.rg(*w) {
                    acc(*w, t_matmul_raw(g, xv));
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, map(g, |v| -v));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    acc(*a, zip_map(g, bv, |x, y| x * y));
                }
                if self.rg(*b) {
                    acc(*b, zip_map(g, av, |x, y| x * y));
                }
            }
            Op::AddRow(a, row) => {
                acc(*a, g.clone());
                if self.rg(*row) {
                    let n = g.cols();
                    let mut r = vec![0.0; n];
                    for (k, v) in g.data().iter().enumerate() {
                        r[k % n] += v;
                    }
                    acc(*row, Tensor::row(r));
                }
            }
            Op::MulCol(a, col) => {
                let (av, cv) = (self.value(*a), self.value(*col));
                let n = g.cols().max(1);
                if self.rg(*a) {
                    let data = g.data().iter().enumerate().map(|(k, v)| v * cv.data()[k / n]).collect();
                    acc(*a, Tensor::new(g.rows(), g.cols(), data).expect("sized"));
                }
                if self.rg(*col) {
                    let mut c = vec![0.0; g.rows()];
                    for (k, (gv, x)) in g.data().iter().zip(av.data()).enumerate() {
                        c[k / n] += gv * x;
                    }
                    acc(*col, Tensor::column(c));
                }
            }
            Op::Scale(a, s) => acc(*a, map(g, |v| v * s)),
            Op::AddScalar(a) => acc(*a, g.clone()),
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let w = self.shape(p)[1];
                    if self.rg(p) {
                        let mut data = Vec::with_capacity(g.rows() * w);
                        for r in 0..g.rows() {
                            data.extend_from_slice(&g.row_slice(r)[offset..offset + w]);
                        }
                        acc(p, Tensor::new(g.rows(), w, data).expect("sized"));
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let cols = g.cols();
                let mut offset = 0;
                for &p in parts {
                    let h = self.shape(p)[0];
                    if self.rg(p) {
                        let data = g.data()[offset * cols..(offset + h) * cols].to_vec();
                        acc(p, Tensor::new(h, cols, data).expect("sized"));
                    }
                    offset += h;
                }
            }
            Op::LeakyRelu(a, slope) => {
                let x = self.value(*a);
                acc(*a, zip_map(g, x, |gv, xv| if xv > 0.0 { gv } else { gv * slope }));
            }
            Op::Relu(a) => {
                let x = self.value(*a);
                acc(*a, zip_map(g, x, |gv, xv| if xv > 0.0 { gv } else { 0.0 }));
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                acc(*a, zip_map(g, y, |gv, yv| gv * yv * (1.0 - yv)));
            }
            Op::Tanh(a) => {
                let y = &node.value;
                acc(*a, zip_map(g, y, |gv, yv| gv * (1.0 - yv * yv)));
            }
            Op::LogSoftmaxRows(a) => {
                let y = &node.value;
                let (m, n) = (y.rows(), y.cols());
                let mut out = Vec::with_capacity(m * n);
                for r in 0..m {
                    let gr = g.row_slice(r);
                    let yr = y.row_slice(r);
                    let gs: Real = gr.iter().sum();
                    out.extend(gr.iter().zip(yr).map(|(gv, yv)| gv - yv.exp() * gs));
                }
                acc(*a, Tensor::new(m, n, out).expect("sized"));
            }
            Op::Dropout(a, mask) => {
                let data = g.data().iter().zip(mask).map(|(v, m)| v * m).collect();
                acc(*a, Tensor::new(g.rows(), g.cols(), data).expect("sized"));
            }
            Op::SumAll(a) => {
                let s = self.shape(*a);
                acc(*a, Tensor::full(s[0], s[1], g.data()[0]));
            }
            Op::MeanAll(a) => {
                let s = self.shape(*a);
                let n = (s[0] * s[1]).max(1) as Real;
                acc(*a, Tensor::full(s[0], s[1], g.data()[0] / n));
            }
            Op::SumCols(a) => {
                let s = self.shape(*a);
                let data = (0..s[0] * s[1]).map(|k| g.data()[k / s[1]]).collect();
                acc(*a, Tensor::new(s[0], s[1], data).expect("sized"));
            }
            Op::GatherRows(a, idx) => {
                let s = self.shape(*a);
                let mut out = Tensor::zeros(s[0], s[1]);
                let c = s[1];
                for (k, &r) in idx.iter().enumerate() {
                    let src = g.row_slice(k);
                    for (d, v) in out.data_mut()[r * c..(r + 1) * c].iter_mut().zip(src) {
                        *d += v;
                    }
                }
                acc(*a, out);
            }
            Op::SelectRows(parts) => {
                // Group by source so each source receives one accumulated tensor.
                let mut by_src: Vec<(Var, Tensor)> = Vec::new();
                for (k, &(v, r)) in parts.iter().enumerate() {
                    if !self.rg(v) {
                        continue;
                    }
                    let pos = match by_src.iter().position(|(s, _)| *s == v) {
                        Some(p) => p,
                        None => {
                            let s = self.shape(v);
                            by_src.push((v, Tensor::zeros(s[0], s[1])));
                            by_src.len() - 1
                        }
                    };
                    let t = &mut by_src[pos].1;
                    let c = t.cols();
                    for (d, x) in t.data_mut()[r * c..(r + 1) * c].iter_mut().zip(g.row_slice(k)) {
                        *d += x;
                    }
                }
                for (v, t) in by_src {
                    acc(v, t);
                }
            }
            Op::SegmentSoftmax(a, ids) => {
                let y = node.value.data();
                let num = ids.iter().copied().max().map_or(0, |m| m + 1);
                let mut dot = vec![0.0; num];
                for (e, &s) in ids.iter().enumerate() {
                    dot[s] += y[e] * g.data()[e];
                }
                let out = ids
                    .iter()
                    .enumerate()
                    .map(|(e, &s)| y[e] * (g.data()[e] - dot[s]))
                    .collect();
                acc(*a, Tensor::column(out));
            }
            Op::SegmentSum(a, ids) => {
                let out = g.select_rows(ids);
                acc(*a, out);
            }
            Op::MaxRows(a, best) => {
                let s = self.shape(*a);
                let mut out = Tensor::zeros(s[0], s[1]);
                for (c, &r) in best.iter().enumerate() {
                    let v = out.get(r, c) + g.data()[c];
                    out.set(r, c, v);
                }
                acc(*a, out);
            }
            Op::Pick(a, at) => {
                let s = self.shape(*a);
                let mut out = Tensor::zeros(s[0], s[1]);
                for (k, &(r, c)) in at.iter().enumerate() {
                    let v = out.get(r, c) + g.data()[k];
                    out.set(r, c, v);
                }
                acc(*a, out);
            }
        }
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::MatMul(..) => "matmul",
        Op::MatMulT(..) => "matmul_t",
        Op::Add(..) => "add",
        Op::AddRow(..) => "add_row",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::MulCol(..) => "mul_col",
        Op::Scale(..) => "scale",
        Op::AddScalar(..) => "add_scalar",
        Op::ConcatCols(..) => "concat_cols",
        Op::ConcatRows(..) => "concat_rows",
        Op::LeakyRelu(..) => "leaky_relu",
        Op::Relu(..) => "relu",
        Op::Sigmoid(..) => "sigmoid",
        Op::Tanh(..) => "tanh",
        Op::LogSoftmaxRows(..) => "log_softmax",
        Op::Dropout(..) => "dropout",
        Op::SumAll(..) => "sum",
        Op::MeanAll(..) => "mean",
        Op::SumCols(..) => "sum_cols",
        Op::GatherRows(..) => "gather_rows",
        Op::SelectRows(..) => "select_rows",
        Op::SegmentSoftmax(..) => "segment_softmax",
        Op::SegmentSum(..) => "segment_sum",
        Op::MaxRows(..) => "max_rows",
        Op::Pick(..) => "pick",
    }
}

/// Max-stabilized softmax within segments, outside any tape. Segment ids
/// must be below `num_segments`.
pub fn segment_softmax_values(scores: &[Real], ids: &[usize], num_segments: usize) -> Vec<Real> {
    let mut mx = vec![Real::NEG_INFINITY; num_segments];
    for (&s, &id) in scores.iter().zip(ids) {
        if s > mx[id] {
            mx[id] = s;
        }
    }
    let ex: Vec<Real> = scores.iter().zip(ids).map(|(&s, &id)| (s - mx[id]).exp()).collect();
    let mut denom = vec![0.0; num_segments];
    for (&e, &id) in ex.iter().zip(ids) {
        denom[id] += e;
    }
    ex.iter().zip(ids).map(|(&e, &id)| e / denom[id]).collect()
}

/// Result of [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(ParamId, Var)>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, if `v` required gradients
    /// and the loss depends on it.
    pub fn of(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for every parameter of `store`, zero where the parameter was
    /// unused in the forward pass.
    pub fn for_params(&self, store: &ParamStore) -> Vec<Tensor> {
        let mut out: Vec<Tensor> = store
            .iter()
            .map(|p| Tensor::zeros(p.value.rows(), p.value.cols()))
            .collect();
        for &(id, v) in &self.params {
            if let Some(g) = self.of(v) {
                out[id.0] = g.clone();
            }
        }
        out
    }
}
