use std::borrow::Cow;

use super::tensor::{gemm_at, gemm_bt};
use super::{NumericsError, Scalar, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var },
    AddBias { x: Var, bias: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Affine { x: Var, scale: f64 },
    Sigmoid { x: Var },
    Tanh { x: Var },
    LogSigmoid { x: Var },
    Softmax { x: Var, outer: usize, len: usize, inner: usize },
    LogSoftmax { x: Var },
    Concat { inputs: Vec<Var>, outer: usize, inner: usize, lens: Vec<usize> },
    SliceCols { x: Var, start: usize },
    GatherRows { table: Var, ids: Vec<usize> },
    Pick { x: Var, idx: Vec<usize> },
    ScaleRows { x: Var, s: Var },
    AddCol { x: Var, c: Var },
    SumAll { x: Var },
    RowL2Norm { x: Var },
}

struct Node<'p, T: Scalar> {
    value: Cow<'p, Tensor<T>>,
    op: Op,
    requires_grad: bool,
}

/// Records forward ops so that [`Tape::backward`] can replay them in reverse.
///
/// Parameters are borrowed for the lifetime `'p`; intermediates are owned.
/// Every forward op checks its output for NaN/Inf and fails with
/// [`NumericsError::NonFinite`].
pub struct Tape<'p, T: Scalar> {
    nodes: Vec<Node<'p, T>>,
}

/// Gradients of a scalar with respect to every leaf that requires them.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn shape_err(op: &'static str, detail: String) -> NumericsError {
    NumericsError::Shape { op, detail }
}

fn split_axis(shape: &[usize], axis: usize, op: &'static str) -> Result<(usize, usize, usize), NumericsError> {
    if axis >= shape.len() {
        return Err(NumericsError::Axis { op, axis, rank: shape.len() });
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

#[inline]
fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
fn log_sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

impl<'p, T: Scalar> Default for Tape<'p, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p, T: Scalar> Tape<'p, T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Borrowed trainable leaf.
    pub fn param(&mut self, t: &'p Tensor<T>) -> Var {
        self.push_node(Cow::Borrowed(t), Op::Leaf, true)
    }

    pub fn leaf(&mut self, t: Tensor<T>, requires_grad: bool) -> Var {
        self.push_node(Cow::Owned(t), Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.leaf(t, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push_node(&mut self, value: Cow<'p, Tensor<T>>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &'static str, value: Tensor<T>, op: Op, inputs: &[Var]) -> Result<Var, NumericsError> {
        if !value.all_finite() {
            return Err(NumericsError::NonFinite { op: name });
        }
        let rg = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push_node(Cow::Owned(value), op, rg))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), NumericsError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(shape_err(op, format!("{:?} vs {:?}", sa, sb)));
        }
        Ok(())
    }

    fn unary(&mut self, name: &'static str, x: Var, f: impl Fn(T) -> T, op: Op) -> Result<Var, NumericsError> {
        let out = self.value(x).map(f);
        self.push(name, out, op, &[x])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let out = self.value(a).matmul(self.value(b))?;
        self.push("matmul", out, Op::MatMul { a, b }, &[a, b])
    }

    /// `x[r, :] + bias` for every row; `bias` is `[1, N]` or `[N]`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var, NumericsError> {
        let xv = self.value(x);
        let bv = self.value(bias);
        let (rows, cols) = xv.dims2("add_bias")?;
        if bv.len() != cols || bv.rows() > 1 && bv.rank() == 2 {
            return Err(shape_err("add_bias", format!("bias {:?} for input {:?}", bv.shape(), xv.shape())));
        }
        let mut out = xv.clone();
        for r in 0..rows {
            for (o, &b) in out.data_mut()[r * cols..(r + 1) * cols].iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        self.push("add_bias", out, Op::AddBias { x, bias }, &[x, bias])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.same_shape("add", a, b)?;
        let mut out = self.value(a).clone();
        for (o, &v) in out.data_mut().iter_mut().zip(self.value(b).data()) {
            *o += v;
        }
        self.push("add", out, Op::Add { a, b }, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.same_shape("sub", a, b)?;
        let mut out = self.value(a).clone();
        for (o, &v) in out.data_mut().iter_mut().zip(self.value(b).data()) {
            *o -= v;
        }
        self.push("sub", out, Op::Sub { a, b }, &[a, b])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.same_shape("mul", a, b)?;
        let mut out = self.value(a).clone();
        for (o, &v) in out.data_mut().iter_mut().zip(self.value(b).data()) {
            *o *= v;
        }
        self.push("mul", out, Op::Mul { a, b }, &[a, b])
    }

    /// `scale * x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Result<Var, NumericsError> {
        let (s, c) = (T::of(scale), T::of(shift));
        self.unary("affine", x, |v| s * v + c, Op::Affine { x, scale })
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var, NumericsError> {
        self.unary("sigmoid", x, sigmoid, Op::Sigmoid { x })
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var, NumericsError> {
        self.unary("tanh", x, |v| v.tanh(), Op::Tanh { x })
    }

    /// `log(sigmoid(x))`, stable for large `|x|`.
    pub fn log_sigmoid(&mut self, x: Var) -> Result<Var, NumericsError> {
        self.unary("log_sigmoid", x, log_sigmoid, Op::LogSigmoid { x })
    }

    /// Softmax along `axis`, computed with max-subtraction.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var, NumericsError> {
        let xv = self.value(x);
        let (outer, len, inner) = split_axis(xv.shape(), axis, "softmax")?;
        let mut out = xv.clone();
        let d = out.data_mut();
        for o in 0..outer {
            for j in 0..inner {
                let at = |i: usize| (o * len + i) * inner + j;
                let mut m = T::neg_infinity();
                for i in 0..len {
                    m = m.max(d[at(i)]);
                }
                let mut z = T::zero();
                for i in 0..len {
                    let e = (d[at(i)] - m).exp();
                    d[at(i)] = e;
                    z += e;
                }
                for i in 0..len {
                    d[at(i)] = d[at(i)] / z;
                }
            }
        }
        self.push("softmax", out, Op::Softmax { x, outer, len, inner }, &[x])
    }

    /// Log-softmax over the last axis of a rank-2 tensor.
    pub fn log_softmax(&mut self, x: Var) -> Result<Var, NumericsError> {
        let xv = self.value(x);
        let (rows, cols) = xv.dims2("log_softmax")?;
        let mut out = xv.clone();
        for r in 0..rows {
            let row = &mut out.data_mut()[r * cols..(r + 1) * cols];
            let m = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
            let z: T = row.iter().map(|&v| (v - m).exp()).sum();
            let lse = m + z.ln();
            for v in row.iter_mut() {
                *v = *v - lse;
            }
        }
        self.push("log_softmax", out, Op::LogSoftmax { x }, &[x])
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, NumericsError> {
        let first = inputs.first().ok_or_else(|| shape_err("concat", "no inputs".into()))?;
        let base = self.value(*first).shape().to_vec();
        let (outer, _, inner) = split_axis(&base, axis, "concat")?;
        let mut lens = Vec::with_capacity(inputs.len());
        for &v in inputs {
            let s = self.value(v).shape();
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(shape_err("concat", format!("{:?} vs {:?} on axis {axis}", s, base)));
            }
            lens.push(s[axis]);
        }
        let total: usize = lens.iter().sum();
        let mut shape = base.clone();
        shape[axis] = total;
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (&v, &l) in inputs.iter().zip(&lens) {
                let d = self.value(v).data();
                data.extend_from_slice(&d[o * l * inner..(o + 1) * l * inner]);
            }
        }
        let out = Tensor::new(shape, data)?;
        self.push("concat", out, Op::Concat { inputs: inputs.to_vec(), outer, inner, lens }, inputs)
    }

    /// Columns `start..start + len` of a rank-2 tensor.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var, NumericsError> {
        let xv = self.value(x);
        let (rows, cols) = xv.dims2("slice_cols")?;
        if start + len > cols {
            return Err(shape_err("slice_cols", format!("{start}..{} of {cols} columns", start + len)));
        }
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&xv.row(r)[start..start + len]);
        }
        let out = Tensor::new(vec![rows, len], data)?;
        self.push("slice_cols", out, Op::SliceCols { x, start }, &[x])
    }

    /// Row lookup (embedding).
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var, NumericsError> {
        let tv = self.value(table);
        let (rows, _) = tv.dims2("gather_rows")?;
        if let Some(&bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(shape_err("gather_rows", format!("row {bad} of {rows}")));
        }
        let out = tv.select_rows(ids);
        self.push("gather_rows", out, Op::GatherRows { table, ids: ids.to_vec() }, &[table])
    }

    /// `out[r, 0] = x[r, idx[r]]`.
    pub fn pick(&mut self, x: Var, idx: &[usize]) -> Result<Var, NumericsError> {
        let xv = self.value(x);
        let (rows, cols) = xv.dims2("pick")?;
        if idx.len() != rows || idx.iter().any(|&i| i >= cols) {
            return Err(shape_err("pick", format!("{} indices into {:?}", idx.len(), xv.shape())));
        }
        let data = idx.iter().enumerate().map(|(r, &c)| xv.get2(r, c)).collect();
        let out = Tensor::new(vec![rows, 1], data)?;
        self.push("pick", out, Op::Pick { x, idx: idx.to_vec() }, &[x])
    }

    /// `x[r, :] * s[r, 0]`.
    pub fn scale_rows(&mut self, x: Var, s: Var) -> Result<Var, NumericsError> {
        let (rows, cols) = self.value(x).dims2("scale_rows")?;
        if self.value(s).shape() != [rows, 1] {
            return Err(shape_err("scale_rows", format!("scale {:?} for {:?}", self.value(s).shape(), [rows, cols])));
        }
        let mut out = self.value(x).clone();
        let sv = self.value(s).data();
        for r in 0..rows {
            for o in &mut out.data_mut()[r * cols..(r + 1) * cols] {
                *o *= sv[r];
            }
        }
        self.push("scale_rows", out, Op::ScaleRows { x, s }, &[x, s])
    }

    /// `x[r, :] + c[r, 0]`.
    pub fn add_col(&mut self, x: Var, c: Var) -> Result<Var, NumericsError> {
        let (rows, cols) = self.value(x).dims2("add_col")?;
        if self.value(c).shape() != [rows, 1] {
            return Err(shape_err("add_col", format!("column {:?} for {:?}", self.value(c).shape(), [rows, cols])));
        }
        let mut out = self.value(x).clone();
        let cv = self.value(c).data();
        for r in 0..rows {
            for o in &mut out.data_mut()[r * cols..(r + 1) * cols] {
                *o += cv[r];
            }
        }
        self.push("add_col", out, Op::AddCol { x, c }, &[x, c])
    }

    /// Sum of all elements as a `[1, 1]` tensor.
    pub fn sum(&mut self, x: Var) -> Result<Var, NumericsError> {
        let s: T = self.value(x).data().iter().copied().sum();
        self.push("sum", Tensor::scalar(s), Op::SumAll { x }, &[x])
    }

    /// `sqrt(sum_j x[r, j]^2 + eps)` per row, as `[rows, 1]`.
    pub fn row_l2_norm(&mut self, x: Var, eps: f64) -> Result<Var, NumericsError> {
        let xv = self.value(x);
        let (rows, _) = xv.dims2("row_l2_norm")?;
        let e = T::of(eps);
        let data = (0..rows).map(|r| (xv.row(r).iter().map(|&v| v * v).sum::<T>() + e).sqrt()).collect();
        let out = Tensor::new(vec![rows, 1], data)?;
        self.push("row_l2_norm", out, Op::RowL2Norm { x }, &[x])
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Gradients<T>, NumericsError> {
        let out = self.value(output);
        if out.len() != 1 {
            return Err(NumericsError::Contract(format!(
                "backward needs a scalar output, got shape {:?}",
                out.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(vec![T::one()]);
        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop(node, &node.value, &g, &mut grads);
        }
        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, n)| g.map(|d| Tensor::new(n.value.shape().to_vec(), d).expect("gradient shape")))
            .collect();
        Ok(Gradients { grads })
    }

    fn acc<'g>(&self, grads: &'g mut [Option<Vec<T>>], v: Var) -> Option<&'g mut Vec<T>> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let n = self.nodes[v.0].value.len();
        Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); n]))
    }

    fn backprop(&self, node: &Node<'p, T>, y: &Tensor<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k) = (av.rows(), av.cols());
                let n = bv.cols();
                if let Some(ga) = self.acc(grads, *a) {
                    gemm_bt(g, bv.data(), ga, m, k, n);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    gemm_at(av.data(), g, gb, m, k, n);
                }
            }
            Op::AddBias { x, bias } => {
                if let Some(gx) = self.acc(grads, *x) {
                    add_into(gx, g);
                }
                let cols = y.cols();
                if let Some(gb) = self.acc(grads, *bias) {
                    for row in g.chunks(cols) {
                        add_into(gb, row);
                    }
                }
            }
            Op::Add { a, b } => {
                if let Some(ga) = self.acc(grads, *a) {
                    add_into(ga, g);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    add_into(gb, g);
                }
            }
            Op::Sub { a, b } => {
                if let Some(ga) = self.acc(grads, *a) {
                    add_into(ga, g);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for (o, &v) in gb.iter_mut().zip(g) {
                        *o -= v;
                    }
                }
            }
            Op::Mul { a, b } => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                if let Some(ga) = self.acc(grads, *a) {
                    for ((o, &gv), &bb) in ga.iter_mut().zip(g).zip(bv) {
                        *o += gv * bb;
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for ((o, &gv), &aa) in gb.iter_mut().zip(g).zip(av) {
                        *o += gv * aa;
                    }
                }
            }
            Op::Affine { x, scale } => {
                let s = T::of(*scale);
                if let Some(gx) = self.acc(grads, *x) {
                    for (o, &gv) in gx.iter_mut().zip(g) {
                        *o += s * gv;
                    }
                }
            }
            Op::Sigmoid { x } => {
                if let Some(gx) = self.acc(grads, *x) {
                    for ((o, &gv), &yv) in gx.iter_mut().zip(g).zip(y.data()) {
                        *o += gv * yv * (T::one() - yv);
                    }
                }
            }
            Op::Tanh { x } => {
                if let Some(gx) = self.acc(grads, *x) {
                    for ((o, &gv), &yv) in gx.iter_mut().zip(g).zip(y.data()) {
                        *o += gv * (T::one() - yv * yv);
                    }
                }
            }
            Op::LogSigmoid { x } => {
                let xv = self.value(*x).data();
                if let Some(gx) = self.acc(grads, *x) {
                    for ((o, &gv), &xx) in gx.iter_mut().zip(g).zip(xv) {
                        *o += gv * sigmoid(-xx);
                    }
                }
            }
            Op::Softmax { x, outer, len, inner } => {
                let (outer, len, inner) = (*outer, *len, *inner);
                let yd = y.data();
                if let Some(gx) = self.acc(grads, *x) {
                    for o in 0..outer {
                        for j in 0..inner {
                            let at = |i: usize| (o * len + i) * inner + j;
                            let dot: T = (0..len).map(|i| g[at(i)] * yd[at(i)]).sum();
                            for i in 0..len {
                                gx[at(i)] += yd[at(i)] * (g[at(i)] - dot);
                            }
                        }
                    }
                }
            }
            Op::LogSoftmax { x } => {
                let cols = y.cols();
                if let Some(gx) = self.acc(grads, *x) {
                    for ((gx_row, g_row), y_row) in gx.chunks_mut(cols).zip(g.chunks(cols)).zip(y.data().chunks(cols)) {
                        let gsum: T = g_row.iter().copied().sum();
                        for ((o, &gv), &yv) in gx_row.iter_mut().zip(g_row).zip(y_row) {
                            *o += gv - yv.exp() * gsum;
                        }
                    }
                }
            }
            Op::Concat { inputs, outer, inner, lens } => {
                let total: usize = lens.iter().sum();
                let mut offset = 0;
                for (&v, &l) in inputs.iter().zip(lens) {
                    if let Some(gv) = self.acc(grads, v) {
                        for o in 0..*outer {
                            let src = &g[(o * total + offset) * inner..(o * total + offset + l) * inner];
                            add_into(&mut gv[o * l * inner..(o + 1) * l * inner], src);
                        }
                    }
                    offset += l;
                }
            }
            Op::SliceCols { x, start } => {
                let cols = self.value(*x).cols();
                let len = y.cols();
                if let Some(gx) = self.acc(grads, *x) {
                    for (r, g_row) in g.chunks(len).enumerate() {
                        add_into(&mut gx[r * cols + start..r * cols + start + len], g_row);
                    }
                }
            }
            Op::GatherRows { table, ids } => {
                let cols = y.cols();
                if let Some(gt) = self.acc(grads, *table) {
                    for (&id, g_row) in ids.iter().zip(g.chunks(cols)) {
                        add_into(&mut gt[id * cols..(id + 1) * cols], g_row);
                    }
                }
            }
            Op::Pick { x, idx } => {
                let cols = self.value(*x).cols();
                if let Some(gx) = self.acc(grads, *x) {
                    for (r, &c) in idx.iter().enumerate() {
                        gx[r * cols + c] += g[r];
                    }
                }
            }
            Op::ScaleRows { x, s } => {
                let xv = self.value(*x);
                let sv = self.value(*s).data();
                let cols = xv.cols();
                if let Some(gx) = self.acc(grads, *x) {
                    for (r, (gx_row, g_row)) in gx.chunks_mut(cols).zip(g.chunks(cols)).enumerate() {
                        for (o, &gv) in gx_row.iter_mut().zip(g_row) {
                            *o += gv * sv[r];
                        }
                    }
                }
                if let Some(gs) = self.acc(grads, *s) {
                    for (r, (g_row, x_row)) in g.chunks(cols).zip(xv.data().chunks(cols)).enumerate() {
                        gs[r] += g_row.iter().zip(x_row).map(|(&a, &b)| a * b).sum::<T>();
                    }
                }
            }
            Op::AddCol { x, c } => {
                let cols = y.cols();
                if let Some(gx) = self.acc(grads, *x) {
                    add_into(gx, g);
                }
                if let Some(gc) = self.acc(grads, *c) {
                    for (r, g_row) in g.chunks(cols).enumerate() {
                        gc[r] += g_row.iter().copied().sum::<T>();
                    }
                }
            }
            Op::SumAll { x } => {
                if let Some(gx) = self.acc(grads, *x) {
                    for o in gx.iter_mut() {
                        *o += g[0];
                    }
                }
            }
            Op::RowL2Norm { x } => {
                let xv = self.value(*x);
                let cols = xv.cols();
                let yd = y.data();
                if let Some(gx) = self.acc(grads, *x) {
                    for (r, (gx_row, x_row)) in gx.chunks_mut(cols).zip(xv.data().chunks(cols)).enumerate() {
                        let k = g[r] / yd[r];
                        for (o, &xx) in gx_row.iter_mut().zip(x_row) {
                            *o += k * xx;
                        }
                    }
                }
            }
        }
    }
}

#[inline]
fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[&[f64]]) -> Tensor<f64> {
        Tensor::from_rows(rows)
    }

    #[test]
    fn sigmoid_of_zero_is_half() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(t(&[&[0.0]]));
        let y = tape.sigmoid(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.5]);
    }

    #[test]
    fn softmax_constant_row_is_uniform() {
        for c in [-250.0, 0.0, 3.5, 700.0] {
            let mut tape = Tape::<f64>::new();
            let x = tape.constant(t(&[&[c, c, c]]));
            let y = tape.softmax(x, 1).unwrap();
            for &p in tape.value(y).data() {
                assert!((p - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn softmax_large_logit_does_not_overflow() {
        let mut tape = Tape::<f32>::new();
        let x = tape.constant(Tensor::from_rows(&[&[1000.0, 0.0]]));
        let y = tape.softmax(x, 1).unwrap();
        assert_eq!(tape.value(y).data()[0], 1.0);
        assert!(tape.value(y).data()[1] < 1e-30);
        let ls = tape.log_softmax(x).unwrap();
        assert_eq!(tape.value(ls).data()[0], 0.0);
    }

    #[test]
    fn softmax_axis_zero_and_out_of_range() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(t(&[&[1.0, 5.0], &[1.0, 2.0]]));
        let y = tape.softmax(x, 0).unwrap();
        let v = tape.value(y);
        assert!((v.get2(0, 0) - 0.5).abs() < 1e-15);
        assert!((v.get2(0, 1) + v.get2(1, 1) - 1.0).abs() < 1e-15);
        assert!(matches!(tape.softmax(x, 2), Err(NumericsError::Axis { axis: 2, rank: 2, .. })));
        assert!(matches!(tape.concat(&[x, x], 3), Err(NumericsError::Axis { .. })));
    }

    #[test]
    fn concat_keeps_other_dims() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(t(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let b = tape.constant(t(&[&[5.0], &[6.0]]));
        let c = tape.concat(&[a, b], 1).unwrap();
        assert_eq!(tape.value(c).shape(), &[2, 3]);
        assert_eq!(tape.value(c).data(), &[1.0, 2.0, 5.0, 3.0, 4.0, 6.0]);
        let d = tape.concat(&[a, a], 0).unwrap();
        assert_eq!(tape.value(d).shape(), &[4, 2]);
        assert!(tape.concat(&[a, b], 0).is_err());
    }

    #[test]
    fn non_finite_is_an_error() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(t(&[&[1e300]]));
        let y = tape.constant(t(&[&[1e300]]));
        assert!(matches!(tape.mul(x, y), Err(NumericsError::NonFinite { op: "mul" })));
    }

    #[test]
    fn backward_requires_scalar() {
        let mut tape = Tape::<f64>::new();
        let w = t(&[&[1.0, 2.0]]);
        let x = tape.param(&w);
        assert!(matches!(tape.backward(x), Err(NumericsError::Contract(_))));
    }

    #[test]
    fn sum_gradient_is_ones() {
        let w = t(&[&[1.0, -2.0], &[0.5, 4.0]]);
        let mut tape = Tape::<f64>::new();
        let x = tape.param(&w);
        let s = tape.sum(x).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[1.0; 4]);
    }

    #[test]
    fn constants_get_no_gradient() {
        let w = t(&[&[1.0]]);
        let mut tape = Tape::<f64>::new();
        let p = tape.param(&w);
        let c = tape.constant(t(&[&[3.0]]));
        let y = tape.mul(p, c).unwrap();
        let s = tape.sum(y).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(p).unwrap().data(), &[3.0]);
        assert!(g.get(c).is_none());
    }

    #[test]
    fn gate_multiplication_never_grows_magnitude() {
        let mut tape = Tape::<f64>::new();
        let m = tape.constant(t(&[&[-3.0, 0.2, 9.0, -1e-3]]));
        let z = tape.constant(t(&[&[-40.0, 0.0, 5.0, 40.0]]));
        let gate = tape.sigmoid(z).unwrap();
        let out = tape.mul(gate, m).unwrap();
        for (o, i) in tape.value(out).data().iter().zip(tape.value(m).data()) {
            assert!(o.abs() <= i.abs());
        }
    }
}
