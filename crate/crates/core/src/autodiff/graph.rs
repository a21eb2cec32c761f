use alloc::vec;
use alloc::vec::Vec;

use super::array::gemm;
use super::{Array, ParamId, ParameterStore};
use crate::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    AddRow(Var, Var),
    AddCol(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    Shift(Var),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Elu(Var),
    Abs(Var),
    Exp(Var),
    Log(Var),
    Softmax(Var),
    LogSoftmax(Var),
    Sum(Var),
    SumCols(Var),
    RowDot(Var, Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SelectCols(Var, Vec<usize>),
    Gather(Var, Vec<usize>),
    Minimum(Var, Var),
    Clamp(Var, f64, f64),
    RowVecMat(Var, Var),
    Reshape(Var),
}

#[derive(Debug, Clone)]
struct Node {
    /// `None` for parameters, whose value lives in the borrowed store.
    value: Option<Array>,
    op: Op,
}

/// Define-by-run computation graph. All tensors are treated as matrices
/// `rows x cols`; the leading dimension is the batch.
pub struct Graph<'p> {
    store: Option<&'p ParameterStore>,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

/// Result of [`Graph::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    nodes: Vec<Option<Array>>,
    params: Vec<(ParamId, Array)>,
}

impl Gradients {
    /// Gradient of the root with respect to `var`, if it influenced the root.
    pub fn get(&self, var: Var) -> Option<&Array> {
        self.nodes.get(var.0).and_then(Option::as_ref)
    }

    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Array)> {
        self.params.iter().map(|(id, g)| (*id, g))
    }

    pub fn param(&self, id: ParamId) -> Option<&Array> {
        self.params.iter().find(|(p, _)| *p == id).map(|(_, g)| g)
    }
}

fn shape_of(a: &Array) -> [usize; 2] {
    let (r, c) = a.dims2();
    [r, c]
}

impl<'p> Graph<'p> {
    pub fn new(store: &'p ParameterStore) -> Self {
        Self {
            store: Some(store),
            nodes: Vec::new(),
            param_vars: vec![None; store.len()],
        }
    }

    /// A graph without parameters, for pure array computations.
    pub fn detached() -> Graph<'static> {
        Graph {
            store: None,
            nodes: Vec::new(),
            param_vars: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Array {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(a), _) => a,
            (None, Op::Param(id)) => self.store.expect("parameter without store").value(*id),
            (None, _) => unreachable!("non-parameter node without value"),
        }
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        self.value(v).dims2()
    }

    fn push(&mut self, value: Array, op: Op) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Array {
        Array::new(vec![rows, cols], data).expect("internal shape")
    }

    /// Constant leaf.
    pub fn input(&mut self, value: Array) -> Var {
        let (r, c) = value.dims2();
        let value = value.reshape(vec![r, c]).expect("same size");
        self.push(value, Op::Input)
    }

    /// Leaf bound to a stored parameter. Repeated calls return the same node,
    /// so a parameter used in several places accumulates a single gradient.
    pub fn param(&mut self, id: ParamId) -> Result<Var> {
        let store = self
            .store
            .ok_or_else(|| Error::Unsupported("graph has no parameter store".into()))?;
        if id.0 >= store.len() {
            return Err(Error::Unsupported("parameter id outside store".into()));
        }
        if let Some(v) = self.param_vars[id.0] {
            return Ok(v);
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        Ok(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        if k != k2 {
            return Err(Error::shape("matmul", &[m, k], &[k2, n]));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a).data(), false, self.value(b).data(), false, &mut out, false);
        Ok(self.push(Self::matrix(m, n, out), Op::MatMul(a, b)))
    }

    /// `x + b` with `b: 1 x cols` broadcast over rows.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let (r, c) = self.dims(x);
        let (br, bc) = self.dims(b);
        if br != 1 || bc != c {
            return Err(Error::shape("add_row", &[r, c], &[br, bc]));
        }
        let bv = self.value(b).data();
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_mut(c) {
            for (o, bb) in row.iter_mut().zip(bv) {
                *o += bb;
            }
        }
        Ok(self.push(Self::matrix(r, c, out), Op::AddRow(x, b)))
    }

    /// `x + c` with `c: rows x 1` broadcast over columns.
    pub fn add_col(&mut self, x: Var, c: Var) -> Result<Var> {
        let (r, cols) = self.dims(x);
        let (cr, cc) = self.dims(c);
        if cr != r || cc != 1 {
            return Err(Error::shape("add_col", &[r, cols], &[cr, cc]));
        }
        let cv = self.value(c).data();
        let mut out = self.value(x).data().to_vec();
        for (row, add) in out.chunks_mut(cols.max(1)).zip(cv) {
            row.iter_mut().for_each(|o| *o += add);
        }
        Ok(self.push(Self::matrix(r, cols, out), Op::AddCol(x, c)))
    }

    fn zip_same(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Array> {
        let sa = shape_of(self.value(a));
        let sb = shape_of(self.value(b));
        if sa != sb {
            return Err(Error::shape(op, &sa, &sb));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok(Self::matrix(sa[0], sa[1], data))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip_same("add", a, b, |x, y| x + y)?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip_same("sub", a, b, |x, y| x - y)?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip_same("mul", a, b, |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip_same("minimum", a, b, f64::min)?;
        Ok(self.push(v, Op::Minimum(a, b)))
    }

    /// `x * c` with `c: rows x 1` scaling each row.
    pub fn mul_col(&mut self, x: Var, c: Var) -> Result<Var> {
        let (r, cols) = self.dims(x);
        let (cr, cc) = self.dims(c);
        if cr != r || cc != 1 {
            return Err(Error::shape("mul_col", &[r, cols], &[cr, cc]));
        }
        let cv = self.value(c).data();
        let mut out = self.value(x).data().to_vec();
        for (row, s) in out.chunks_mut(cols.max(1)).zip(cv) {
            row.iter_mut().for_each(|o| *o *= s);
        }
        Ok(self.push(Self::matrix(r, cols, out), Op::MulCol(x, c)))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let v = self.value(x).map(|a| a * s);
        self.push(v, Op::Scale(x, s))
    }

    /// `x + s` for a constant `s`.
    pub fn shift(&mut self, x: Var, s: f64) -> Var {
        let v = self.value(x).map(|a| a + s);
        self.push(v, Op::Shift(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|a| if a > 0.0 { a } else { 0.0 });
        self.push(v, Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let v = self.value(x).map(libm::tanh);
        self.push(v, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.value(x).map(sigmoid);
        self.push(v, Op::Sigmoid(x))
    }

    pub fn elu(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|a| if a > 0.0 { a } else { libm::expm1(a) });
        self.push(v, Op::Elu(x))
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let v = self.value(x).map(f64::abs);
        self.push(v, Op::Abs(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let v = self.value(x).map(libm::exp);
        self.push(v, Op::Exp(x))
    }

    pub fn log(&mut self, x: Var) -> Var {
        let v = self.value(x).map(libm::log);
        self.push(v, Op::Log(x))
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(x).map(|a| a.clamp(lo, hi));
        self.push(v, Op::Clamp(x, lo, hi))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, x: Var) -> Var {
        let (r, c) = self.dims(x);
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_mut(c.max(1)) {
            softmax_in_place(row);
        }
        self.push(Self::matrix(r, c, out), Op::Softmax(x))
    }

    /// Row-wise log-softmax.
    pub fn log_softmax(&mut self, x: Var) -> Var {
        let (r, c) = self.dims(x);
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_mut(c.max(1)) {
            let lse = log_sum_exp(row);
            row.iter_mut().for_each(|v| *v -= lse);
        }
        self.push(Self::matrix(r, c, out), Op::LogSoftmax(x))
    }

    /// Sum of all entries, as a `1 x 1` node.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Array::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len().max(1);
        let s = self.sum(x);
        self.scale(s, 1.0 / n as f64)
    }

    /// Row sums, `rows x 1`.
    pub fn sum_cols(&mut self, x: Var) -> Var {
        let (r, c) = self.dims(x);
        let out = (0..r)
            .map(|i| self.value(x).data()[i * c..(i + 1) * c].iter().sum())
            .collect();
        self.push(Self::matrix(r, 1, out), Op::SumCols(x))
    }

    /// Row-wise inner product of two `rows x d` matrices, `rows x 1`.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = shape_of(self.value(a));
        let sb = shape_of(self.value(b));
        if sa != sb {
            return Err(Error::shape("row_dot", &sa, &sb));
        }
        let (r, d) = (sa[0], sa[1]);
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let out = (0..r)
            .map(|i| {
                av[i * d..(i + 1) * d]
                    .iter()
                    .zip(&bv[i * d..(i + 1) * d])
                    .map(|(x, y)| x * y)
                    .sum()
            })
            .collect();
        Ok(self.push(Self::matrix(r, 1, out), Op::RowDot(a, b)))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Unsupported("concat of zero parts".into()));
        };
        let r = self.dims(first).0;
        let mut total = 0;
        for &p in parts {
            let (pr, pc) = self.dims(p);
            if pr != r {
                return Err(Error::shape("concat_cols", &[r, total], &[pr, pc]));
            }
            total += pc;
        }
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for &p in parts {
                out.extend_from_slice(self.value(p).row_slice(i));
            }
        }
        Ok(self.push(Self::matrix(r, total, out), Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Unsupported("concat of zero parts".into()));
        };
        let c = self.dims(first).1;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (pr, pc) = self.dims(p);
            if pc != c {
                return Err(Error::shape("concat_rows", &[rows, c], &[pr, pc]));
            }
            rows += pr;
            out.extend_from_slice(self.value(p).data());
        }
        Ok(self.push(Self::matrix(rows, c, out), Op::ConcatRows(parts.to_vec())))
    }

    /// Columns `start..start + len`.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.dims(x);
        if start + len > c {
            return Err(Error::shape("slice_cols", &[r, c], &[start, start + len]));
        }
        let v = self.value(x);
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&v.row_slice(i)[start..start + len]);
        }
        Ok(self.push(Self::matrix(r, len, out), Op::SliceCols(x, start)))
    }

    /// Output column `j` is input column `cols[j]`.
    pub fn select_cols(&mut self, x: Var, cols: &[usize]) -> Result<Var> {
        let (r, c) = self.dims(x);
        if let Some(&bad) = cols.iter().find(|&&j| j >= c) {
            return Err(Error::shape("select_cols", &[r, c], &[bad]));
        }
        let v = self.value(x);
        let mut out = Vec::with_capacity(r * cols.len());
        for i in 0..r {
            let row = v.row_slice(i);
            out.extend(cols.iter().map(|&j| row[j]));
        }
        Ok(self.push(Self::matrix(r, cols.len(), out), Op::SelectCols(x, cols.to_vec())))
    }

    /// Picks column `index[i]` of row `i`, `rows x 1`.
    pub fn gather(&mut self, x: Var, index: &[usize]) -> Result<Var> {
        let (r, c) = self.dims(x);
        if index.len() != r {
            return Err(Error::shape("gather", &[r, c], &[index.len()]));
        }
        if let Some(&bad) = index.iter().find(|&&j| j >= c) {
            return Err(Error::ActionOutOfRange {
                action: bad,
                num_actions: c,
            });
        }
        let v = self.value(x);
        let out = index.iter().enumerate().map(|(i, &j)| v.get(i, j)).collect();
        Ok(self.push(Self::matrix(r, 1, out), Op::Gather(x, index.to_vec())))
    }

    /// Per-row vector-matrix product: `q: rows x k` times the row of `w`
    /// (`rows x k*e`) read as a `k x e` matrix. Used by hypernetwork mixers.
    pub fn row_vec_mat(&mut self, q: Var, w: Var) -> Result<Var> {
        let (r, k) = self.dims(q);
        let (wr, wc) = self.dims(w);
        if wr != r || k == 0 || wc % k != 0 {
            return Err(Error::shape("row_vec_mat", &[r, k], &[wr, wc]));
        }
        let e = wc / k;
        let qv = self.value(q).data();
        let wv = self.value(w).data();
        let mut out = vec![0.0; r * e];
        for i in 0..r {
            let orow = &mut out[i * e..(i + 1) * e];
            for j in 0..k {
                let qij = qv[i * k + j];
                let wrow = &wv[i * wc + j * e..i * wc + (j + 1) * e];
                for (o, w) in orow.iter_mut().zip(wrow) {
                    *o += qij * w;
                }
            }
        }
        Ok(self.push(Self::matrix(r, e, out), Op::RowVecMat(q, w)))
    }

    /// Same data read as `rows x cols` (row-major order is kept).
    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Result<Var> {
        let (r, c) = self.dims(x);
        if r * c != rows * cols {
            return Err(Error::shape("reshape", &[r, c], &[rows, cols]));
        }
        let data = self.value(x).data().to_vec();
        Ok(self.push(Self::matrix(rows, cols, data), Op::Reshape(x)))
    }

    /// Reverse pass from a `1 x 1` root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let root_val = self.value(root);
        if root_val.len() != 1 {
            return Err(Error::NonScalarRoot(root_val.shape().to_vec()));
        }
        let mut grads: Vec<Option<Array>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Self::matrix(1, 1, vec![1.0]));

        for idx in (0..=root.0).rev() {
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &dy, &mut grads);
            grads[idx] = Some(dy);
        }

        let mut params = Vec::new();
        for (i, node) in self.nodes.iter().enumerate().take(root.0 + 1) {
            if let (Op::Param(id), Some(g)) = (&node.op, &grads[i]) {
                let shape = self.value(Var(i)).shape().to_vec();
                let g = g.clone().reshape(shape).expect("gradient shape");
                params.push((*id, g));
            }
        }
        Ok(Gradients {
            nodes: grads,
            params,
        })
    }

    fn propagate(&self, idx: usize, dy: &Array, grads: &mut [Option<Array>]) {
        let y = self.nodes[idx].value.as_ref();
        let gv = dy.data();
        match &self.nodes[idx].op {
            Op::Input | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.dims(*a);
                let n = self.dims(*b).1;
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                accumulate_with(grads, *a, m, k, |buf, acc| gemm(m, n, k, gv, false, bv, true, buf, acc));
                accumulate_with(grads, *b, k, n, |buf, acc| gemm(k, m, n, av, true, gv, false, buf, acc));
            }
            Op::AddRow(x, b) => {
                let (r, c) = self.dims(*x);
                add_grad(grads, *x, r, c, gv.iter().copied());
                let mut db = vec![0.0; c];
                for row in gv.chunks(c.max(1)) {
                    db.iter_mut().zip(row).for_each(|(d, g)| *d += g);
                }
                add_grad(grads, *b, 1, c, db.into_iter());
            }
            Op::AddCol(x, c) => {
                let (r, cols) = self.dims(*x);
                add_grad(grads, *x, r, cols, gv.iter().copied());
                let dc = gv.chunks(cols.max(1)).map(|row| row.iter().sum());
                add_grad(grads, *c, r, 1, dc);
            }
            Op::Add(a, b) => {
                let (r, c) = self.dims(*a);
                add_grad(grads, *a, r, c, gv.iter().copied());
                add_grad(grads, *b, r, c, gv.iter().copied());
            }
            Op::Sub(a, b) => {
                let (r, c) = self.dims(*a);
                add_grad(grads, *a, r, c, gv.iter().copied());
                add_grad(grads, *b, r, c, gv.iter().map(|g| -g));
            }
            Op::Mul(a, b) => {
                let (r, c) = self.dims(*a);
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                add_grad(grads, *a, r, c, gv.iter().zip(bv).map(|(g, y)| g * y));
                add_grad(grads, *b, r, c, gv.iter().zip(av).map(|(g, x)| g * x));
            }
            Op::Minimum(a, b) => {
                let (r, c) = self.dims(*a);
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                let pick_a = |i: usize| av[i] <= bv[i];
                add_grad(grads, *a, r, c, gv.iter().enumerate().map(|(i, g)| if pick_a(i) { *g } else { 0.0 }));
                add_grad(grads, *b, r, c, gv.iter().enumerate().map(|(i, g)| if pick_a(i) { 0.0 } else { *g }));
            }
            Op::MulCol(x, s) => {
                let (r, c) = self.dims(*x);
                let xv = self.value(*x).data();
                let sv = self.value(*s).data();
                add_grad(grads, *x, r, c, gv.iter().enumerate().map(|(i, g)| g * sv[i / c]));
                let ds = (0..r).map(|i| (0..c).map(|j| gv[i * c + j] * xv[i * c + j]).sum());
                add_grad(grads, *s, r, 1, ds);
            }
            Op::Scale(x, s) => {
                let (r, c) = self.dims(*x);
                add_grad(grads, *x, r, c, gv.iter().map(|g| g * s));
            }
            Op::Shift(x) => {
                let (r, c) = self.dims(*x);
                add_grad(grads, *x, r, c, gv.iter().copied());
            }
            Op::Relu(x) => {
                let (r, c) = self.dims(*x);
                let xv = self.value(*x).data();
                add_grad(grads, *x, r, c, gv.iter().zip(xv).map(|(g, x)| if *x > 0.0 { *g } else { 0.0 }));
            }
            Op::Tanh(x) => {
                let (r, c) = self.dims(*x);
                let yv = y.expect("value").data();
                add_grad(grads, *x, r, c, gv.iter().zip(yv).map(|(g, y)| g * (1.0 - y * y)));
            }
            Op::Sigmoid(x) => {
                let (r, c) = self.dims(*x);
                let yv = y.expect("value").data();
                add_grad(grads, *x, r, c, gv.iter().zip(yv).map(|(g, y)| g * y * (1.0 - y)));
            }
            Op::Elu(x) => {
                let (r, c) = self.dims(*x);
                let xv = self.value(*x).data();
                let yv = y.expect("value").data();
                let d = gv.iter().zip(xv).zip(yv).map(|((g, x), y)| if *x > 0.0 { *g } else { g * (y + 1.0) });
                add_grad(grads, *x, r, c, d);
            }
            Op::Abs(x) => {
                let (r, c) = self.dims(*x);
                let xv = self.value(*x).data();
                let d = gv.iter().zip(xv).map(|(g, x)| {
                    if *x > 0.0 {
                        *g
                    } else if *x < 0.0 {
                        -g
                    } else {
                        0.0
                    }
                });
                add_grad(grads, *x, r, c, d);
            }
            Op::Exp(x) => {
                let (r, c) = self.dims(*x);
                let yv = y.expect("value").data();
                add_grad(grads, *x, r, c, gv.iter().zip(yv).map(|(g, y)| g * y));
            }
            Op::Log(x) => {
                let (r, c) = self.dims(*x);
                let xv = self.value(*x).data();
                add_grad(grads, *x, r, c, gv.iter().zip(xv).map(|(g, x)| g / x));
            }
            Op::Clamp(x, lo, hi) => {
                let (r, c) = self.dims(*x);
                let xv = self.value(*x).data();
                let d = gv.iter().zip(xv).map(|(g, x)| if *x >= *lo && *x <= *hi { *g } else { 0.0 });
                add_grad(grads, *x, r, c, d);
            }
            Op::Softmax(x) => {
                let (r, c) = self.dims(*x);
                let yv = y.expect("value").data();
                let mut d = vec![0.0; r * c];
                for i in 0..r {
                    let row = i * c..(i + 1) * c;
                    let dot: f64 = gv[row.clone()].iter().zip(&yv[row.clone()]).map(|(g, y)| g * y).sum();
                    for j in row {
                        d[j] = yv[j] * (gv[j] - dot);
                    }
                }
                add_grad(grads, *x, r, c, d.into_iter());
            }
            Op::LogSoftmax(x) => {
                let (r, c) = self.dims(*x);
                let yv = y.expect("value").data();
                let mut d = vec![0.0; r * c];
                for i in 0..r {
                    let row = i * c..(i + 1) * c;
                    let total: f64 = gv[row.clone()].iter().sum();
                    for j in row {
                        d[j] = gv[j] - libm::exp(yv[j]) * total;
                    }
                }
                add_grad(grads, *x, r, c, d.into_iter());
            }
            Op::Sum(x) => {
                let (r, c) = self.dims(*x);
                let g = gv[0];
                add_grad(grads, *x, r, c, core::iter::repeat_n(g, r * c));
            }
            Op::SumCols(x) => {
                let (r, c) = self.dims(*x);
                add_grad(grads, *x, r, c, (0..r * c).map(|i| gv[i / c]));
            }
            Op::RowDot(a, b) => {
                let (r, d) = self.dims(*a);
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                add_grad(grads, *a, r, d, (0..r * d).map(|i| gv[i / d] * bv[i]));
                add_grad(grads, *b, r, d, (0..r * d).map(|i| gv[i / d] * av[i]));
            }
            Op::ConcatCols(parts) => {
                let total = dy.cols();
                let rows = dy.rows();
                let mut offset = 0;
                for &p in parts {
                    let pc = self.dims(p).1;
                    let d = (0..rows * pc).map(|i| gv[(i / pc) * total + offset + i % pc]);
                    add_grad(grads, p, rows, pc, d);
                    offset += pc;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let (pr, pc) = self.dims(p);
                    add_grad(grads, p, pr, pc, gv[offset..offset + pr * pc].iter().copied());
                    offset += pr * pc;
                }
            }
            Op::SliceCols(x, start) => {
                let (r, c) = self.dims(*x);
                let len = dy.cols();
                let buf = grad_buf(grads, *x, r, c);
                for i in 0..r {
                    for j in 0..len {
                        buf[i * c + start + j] += gv[i * len + j];
                    }
                }
            }
            Op::SelectCols(x, cols) => {
                let (r, c) = self.dims(*x);
                let n = cols.len();
                let buf = grad_buf(grads, *x, r, c);
                for i in 0..r {
                    for (j, &src) in cols.iter().enumerate() {
                        buf[i * c + src] += gv[i * n + j];
                    }
                }
            }
            Op::Gather(x, index) => {
                let (r, c) = self.dims(*x);
                let buf = grad_buf(grads, *x, r, c);
                for (i, &j) in index.iter().enumerate() {
                    buf[i * c + j] += gv[i];
                }
            }
            Op::RowVecMat(q, w) => {
                let (r, k) = self.dims(*q);
                let wc = self.dims(*w).1;
                let e = wc / k;
                let qv = self.value(*q).data();
                let wv = self.value(*w).data();
                let mut dq = vec![0.0; r * k];
                let mut dw = vec![0.0; r * wc];
                for i in 0..r {
                    let go = &gv[i * e..(i + 1) * e];
                    for j in 0..k {
                        let base = i * wc + j * e;
                        let mut s = 0.0;
                        for (t, g) in go.iter().enumerate() {
                            s += g * wv[base + t];
                            dw[base + t] = qv[i * k + j] * g;
                        }
                        dq[i * k + j] = s;
                    }
                }
                add_grad(grads, *q, r, k, dq.into_iter());
                add_grad(grads, *w, r, wc, dw.into_iter());
            }
            Op::Reshape(x) => {
                let (r, c) = self.dims(*x);
                add_grad(grads, *x, r, c, gv.iter().copied());
            }
        }
    }
}

fn grad_buf(grads: &mut [Option<Array>], v: Var, rows: usize, cols: usize) -> &mut [f64] {
    grads[v.0]
        .get_or_insert_with(|| Array::zeros(&[rows, cols]))
        .data_mut()
}

fn add_grad(grads: &mut [Option<Array>], v: Var, rows: usize, cols: usize, values: impl Iterator<Item = f64>) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (e, x) in existing.data_mut().iter_mut().zip(values) {
                *e += x;
            }
        }
        slot @ None => {
            let data: Vec<f64> = values.collect();
            *slot = Some(Array::new(vec![rows, cols], data).expect("gradient shape"));
        }
    }
}

fn accumulate_with(
    grads: &mut [Option<Array>],
    v: Var,
    rows: usize,
    cols: usize,
    f: impl FnOnce(&mut [f64], bool),
) {
    match &mut grads[v.0] {
        Some(existing) => f(existing.data_mut(), true),
        slot @ None => {
            let mut buf = vec![0.0; rows * cols];
            f(&mut buf, false);
            *slot = Some(Array::new(vec![rows, cols], buf).expect("gradient shape"));
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + libm::log(row.iter().map(|v| libm::exp(v - max)).sum::<f64>())
}

/// Max-subtracted softmax over a slice.
pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = libm::exp(*v - max);
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}
