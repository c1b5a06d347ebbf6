//! Minimal reverse-mode automatic differentiation over dense f64 arrays.
//!
//! A [`Tape`] is an arena of [`Tensor`] nodes built define-by-run. Ops append
//! a node holding the forward value; when any input requires gradients the op
//! record is kept so [`Tape::backward`] can replay it in reverse. Tapes are
//! single-threaded contexts; independent tapes may run on different threads.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(usize);

/// One node of the tape arena: a dense row-major f64 array plus its
/// gradient buffer and the op that produced it.
#[derive(Debug, Clone)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f64>>,
    op: Op,
}

impl Tensor {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Index map for the gather op: output position -> source position on the
/// input, or `None` for positions that read a constant zero.
pub type GatherMap = Arc<[Option<usize>]>;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(TensorId, TensorId),
    Add(TensorId, TensorId),
    Mul(TensorId, TensorId),
    Scale(TensorId, f64),
    Tanh(TensorId),
    Sigmoid(TensorId),
    Concat(Vec<TensorId>),
    SliceRows(TensorId, usize, usize),
    Conv2d(TensorId, TensorId),
    Gather(TensorId, GatherMap),
    Mse(TensorId, TensorId),
}

/// Ordered record of primitive operations, storing forward values and,
/// after [`Tape::backward`], accumulated gradients.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Tensor>,
    consumed: bool,
}

fn row_count(shape: &[usize]) -> usize {
    if shape.is_empty() {
        1
    } else {
        shape[0]
    }
}

fn row_stride(shape: &[usize]) -> usize {
    shape.iter().skip(1).product()
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers an input tensor.
    pub fn leaf(&mut self, shape: Vec<usize>, data: Vec<f64>, requires_grad: bool) -> TensorId {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.push(shape, data, requires_grad, Op::Leaf)
    }

    pub fn scalar(&mut self, value: f64) -> TensorId {
        self.leaf(vec![1], vec![value], false)
    }

    pub fn value(&self, id: TensorId) -> &[f64] {
        &self.nodes[id.0].data
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn tensor(&self, id: TensorId) -> &Tensor {
        &self.nodes[id.0]
    }

    /// Gradient accumulated on a node by `backward`, if any.
    pub fn grad(&self, id: TensorId) -> Option<&[f64]> {
        self.nodes[id.0].grad.as_deref()
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, requires_grad: bool, op: Op) -> TensorId {
        // Value-only nodes do not need their producing op replayed.
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Tensor {
            shape,
            data,
            requires_grad,
            grad: None,
            op,
        });
        TensorId(self.nodes.len() - 1)
    }

    fn needs_grad(&self, ids: &[TensorId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    /// Matrix-matrix product; a vector rhs of shape `[k]` is treated as `[k, 1]`.
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let (m, k) = match sa.as_slice() {
            [m, k] => (*m, *k),
            _ => return Err(shape_err("matmul", &sa, &sb)),
        };
        let (k2, n, vec_rhs) = match sb.as_slice() {
            [k2, n] => (*k2, *n, false),
            [k2] => (*k2, 1, true),
            _ => return Err(shape_err("matmul", &sa, &sb)),
        };
        if k != k2 {
            return Err(shape_err("matmul", &sa, &sb));
        }
        let mut out = vec![0.0; m * n];
        matmul_acc(self.value(a), self.value(b), &mut out, m, k, n);
        let out_shape = if vec_rhs { vec![m] } else { vec![m, n] };
        let rg = self.needs_grad(&[a, b]);
        Ok(self.push(out_shape, out, rg, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.zip("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.zip("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn zip(
        &mut self,
        name: &'static str,
        a: TensorId,
        b: TensorId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<TensorId> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(name, self.shape(a), self.shape(b)));
        }
        let data = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| f(*x, *y))
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.needs_grad(&[a, b]);
        Ok(self.push(shape, data, rg, op))
    }

    pub fn scale(&mut self, a: TensorId, c: f64) -> TensorId {
        let data = self.value(a).iter().map(|x| x * c).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.needs_grad(&[a]);
        self.push(shape, data, rg, Op::Scale(a, c))
    }

    pub fn tanh(&mut self, a: TensorId) -> TensorId {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: TensorId) -> TensorId {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    fn unary(&mut self, a: TensorId, f: impl Fn(f64) -> f64, op: Op) -> TensorId {
        let data = self.value(a).iter().map(|x| f(*x)).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.needs_grad(&[a]);
        self.push(shape, data, rg, op)
    }

    /// Concatenates along the leading axis. All inputs must agree on the
    /// trailing dimensions.
    pub fn concat(&mut self, parts: &[TensorId]) -> Result<TensorId> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidConfig("concat of zero tensors".into()))?;
        let trailing: Vec<usize> = self.shape(*first)[1..].to_vec();
        let stride = row_stride(self.shape(*first));
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            if self.shape(p)[1..] != trailing[..] {
                return Err(shape_err("concat", self.shape(*first), self.shape(p)));
            }
            rows += row_count(self.shape(p));
            data.extend_from_slice(self.value(p));
        }
        let mut shape = vec![rows];
        shape.extend_from_slice(&trailing);
        debug_assert_eq!(data.len(), rows * stride.max(1));
        let rg = self.needs_grad(parts);
        Ok(self.push(shape, data, rg, Op::Concat(parts.to_vec())))
    }

    /// Rows `start..end` along the leading axis.
    pub fn slice_rows(&mut self, a: TensorId, start: usize, end: usize) -> Result<TensorId> {
        let shape = self.shape(a).to_vec();
        if shape.is_empty() || end > shape[0] || start >= end {
            return Err(Error::InvalidConfig(format!(
                "slice_rows {start}..{end} out of range for shape {shape:?}"
            )));
        }
        let stride = row_stride(&shape);
        let data = self.value(a)[start * stride..end * stride].to_vec();
        let mut out_shape = vec![end - start];
        out_shape.extend_from_slice(&shape[1..]);
        let rg = self.needs_grad(&[a]);
        Ok(self.push(out_shape, data, rg, Op::SliceRows(a, start, end)))
    }

    /// 2D cross-correlation with zero padding and stride 1.
    ///
    /// `input` is `[C, H, W]`, `kernel` is `[O, C, KH, KW]` with odd KH/KW;
    /// output is `[O, H, W]`.
    pub fn conv2d(&mut self, input: TensorId, kernel: TensorId) -> Result<TensorId> {
        let si = self.shape(input).to_vec();
        let sk = self.shape(kernel).to_vec();
        let (c, h, w) = match si.as_slice() {
            [c, h, w] => (*c, *h, *w),
            _ => return Err(shape_err("conv2d", &si, &sk)),
        };
        let (o, ck, kh, kw) = match sk.as_slice() {
            [o, ck, kh, kw] => (*o, *ck, *kh, *kw),
            _ => return Err(shape_err("conv2d", &si, &sk)),
        };
        if c != ck || kh % 2 == 0 || kw % 2 == 0 {
            return Err(shape_err("conv2d", &si, &sk));
        }
        let mut out = vec![0.0; o * h * w];
        conv2d_forward(self.value(input), self.value(kernel), &mut out, c, h, w, o, kh, kw);
        let rg = self.needs_grad(&[input, kernel]);
        Ok(self.push(vec![o, h, w], out, rg, Op::Conv2d(input, kernel)))
    }

    /// Structured index select: `out[p] = map[p].map(|s| in[s]).unwrap_or(0.0)`.
    pub fn gather(&mut self, a: TensorId, map: GatherMap, out_shape: Vec<usize>) -> Result<TensorId> {
        let n_out: usize = out_shape.iter().product();
        if map.len() != n_out {
            return Err(Error::InvalidConfig(format!(
                "gather map length {} does not match output shape {out_shape:?}",
                map.len()
            )));
        }
        let src = self.value(a);
        if let Some(bad) = map.iter().flatten().find(|&&s| s >= src.len()) {
            return Err(Error::InvalidConfig(format!(
                "gather source index {bad} out of range for input of {} elements",
                src.len()
            )));
        }
        let data = map
            .iter()
            .map(|s| s.map(|i| src[i]).unwrap_or(0.0))
            .collect();
        let rg = self.needs_grad(&[a]);
        Ok(self.push(out_shape, data, rg, Op::Gather(a, map)))
    }

    /// Mean squared error over all elements; returns a scalar node.
    pub fn mse(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err("mse", self.shape(a), self.shape(b)));
        }
        let n = self.value(a).len() as f64;
        let sum: f64 = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        let rg = self.needs_grad(&[a, b]);
        Ok(self.push(vec![1], vec![sum / n], rg, Op::Mse(a, b)))
    }

    /// Reverse sweep from a scalar loss. Gradients accumulate (sum) into each
    /// reachable `requires_grad` node; the op records are consumed afterwards,
    /// so a tape can be swept exactly once.
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        if self.nodes[loss.0].numel() != 1 {
            return Err(Error::InvalidConfig(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        if self.consumed {
            return Err(Error::InvalidConfig(
                "backward on a cleared tape (each tape records one sweep)".into(),
            ));
        }
        if !self.nodes[loss.0].requires_grad {
            // Constant loss: nothing reachable requires gradients.
            return Ok(());
        }
        self.consumed = true;
        self.seed_grad(loss);
        for i in (0..=loss.0).rev() {
            let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
            if matches!(op, Op::Leaf) || self.nodes[i].grad.is_none() {
                continue;
            }
            self.step_backward(TensorId(i), &op);
        }
        // Drop any remaining records above the loss node.
        for node in &mut self.nodes[loss.0..] {
            node.op = Op::Leaf;
        }
        Ok(())
    }

    fn seed_grad(&mut self, loss: TensorId) {
        let g = self.nodes[loss.0]
            .grad
            .get_or_insert_with(|| vec![0.0; 1]);
        g[0] += 1.0;
    }

    fn grad_buf(&mut self, id: TensorId) -> &mut Vec<f64> {
        let numel = self.nodes[id.0].numel();
        self.nodes[id.0]
            .grad
            .get_or_insert_with(|| vec![0.0; numel])
    }

    fn step_backward(&mut self, out: TensorId, op: &Op) {
        let g = self.nodes[out.0].grad.clone().expect("grad present");
        match *op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.shape(a)[0], self.shape(a)[1]);
                let n = if self.shape(b).len() == 2 { self.shape(b)[1] } else { 1 };
                if self.nodes[a.0].requires_grad {
                    let bv = self.nodes[b.0].data.clone();
                    let da = self.grad_buf(a);
                    // dA[i,l] += sum_j g[i,j] * B[l,j]
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        let darow = &mut da[i * k..(i + 1) * k];
                        for (l, dal) in darow.iter_mut().enumerate() {
                            let brow = &bv[l * n..(l + 1) * n];
                            let mut acc = 0.0;
                            for j in 0..n {
                                acc += grow[j] * brow[j];
                            }
                            *dal += acc;
                        }
                    }
                }
                if self.nodes[b.0].requires_grad {
                    let av = self.nodes[a.0].data.clone();
                    let db = self.grad_buf(b);
                    // dB[l,j] += sum_i A[i,l] * g[i,j]
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        let arow = &av[i * k..(i + 1) * k];
                        for (l, &ail) in arow.iter().enumerate() {
                            let dbrow = &mut db[l * n..(l + 1) * n];
                            for j in 0..n {
                                dbrow[j] += ail * grow[j];
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for id in [a, b] {
                    if self.nodes[id.0].requires_grad {
                        let buf = self.grad_buf(id);
                        for (d, s) in buf.iter_mut().zip(&g) {
                            *d += s;
                        }
                    }
                }
            }
            Op::Mul(a, b) => {
                if self.nodes[a.0].requires_grad {
                    let bv = self.nodes[b.0].data.clone();
                    let da = self.grad_buf(a);
                    for ((d, s), x) in da.iter_mut().zip(&g).zip(&bv) {
                        *d += s * x;
                    }
                }
                if self.nodes[b.0].requires_grad {
                    let av = self.nodes[a.0].data.clone();
                    let db = self.grad_buf(b);
                    for ((d, s), x) in db.iter_mut().zip(&g).zip(&av) {
                        *d += s * x;
                    }
                }
            }
            Op::Scale(a, c) => {
                if self.nodes[a.0].requires_grad {
                    let da = self.grad_buf(a);
                    for (d, s) in da.iter_mut().zip(&g) {
                        *d += s * c;
                    }
                }
            }
            Op::Tanh(a) => {
                if self.nodes[a.0].requires_grad {
                    let y = self.nodes[out.0].data.clone();
                    let da = self.grad_buf(a);
                    for ((d, s), t) in da.iter_mut().zip(&g).zip(&y) {
                        *d += s * (1.0 - t * t);
                    }
                }
            }
            Op::Sigmoid(a) => {
                if self.nodes[a.0].requires_grad {
                    let y = self.nodes[out.0].data.clone();
                    let da = self.grad_buf(a);
                    for ((d, s), t) in da.iter_mut().zip(&g).zip(&y) {
                        *d += s * t * (1.0 - t);
                    }
                }
            }
            Op::Concat(ref parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.nodes[p.0].numel();
                    if self.nodes[p.0].requires_grad {
                        let piece = g[offset..offset + len].to_vec();
                        let dp = self.grad_buf(p);
                        for (d, s) in dp.iter_mut().zip(&piece) {
                            *d += s;
                        }
                    }
                    offset += len;
                }
            }
            Op::SliceRows(a, start, _end) => {
                if self.nodes[a.0].requires_grad {
                    let stride = row_stride(self.shape(a));
                    let da = self.grad_buf(a);
                    for (d, s) in da[start * stride..].iter_mut().zip(&g) {
                        *d += s;
                    }
                }
            }
            Op::Conv2d(input, kernel) => {
                let (c, h, w) = {
                    let s = self.shape(input);
                    (s[0], s[1], s[2])
                };
                let (o, kh, kw) = {
                    let s = self.shape(kernel);
                    (s[0], s[2], s[3])
                };
                if self.nodes[input.0].requires_grad {
                    let kv = self.nodes[kernel.0].data.clone();
                    let di = self.grad_buf(input);
                    conv2d_backward_input(&g, &kv, di, c, h, w, o, kh, kw);
                }
                if self.nodes[kernel.0].requires_grad {
                    let iv = self.nodes[input.0].data.clone();
                    let dk = self.grad_buf(kernel);
                    conv2d_backward_kernel(&g, &iv, dk, c, h, w, o, kh, kw);
                }
            }
            Op::Gather(a, ref map) => {
                if self.nodes[a.0].requires_grad {
                    let map = map.clone();
                    let da = self.grad_buf(a);
                    for (p, s) in map.iter().zip(&g) {
                        if let Some(src) = p {
                            da[*src] += s;
                        }
                    }
                }
            }
            Op::Mse(a, b) => {
                let n = self.nodes[a.0].numel() as f64;
                let scale = 2.0 * g[0] / n;
                let av = self.nodes[a.0].data.clone();
                let bv = self.nodes[b.0].data.clone();
                if self.nodes[a.0].requires_grad {
                    let da = self.grad_buf(a);
                    for ((d, x), y) in da.iter_mut().zip(&av).zip(&bv) {
                        *d += scale * (x - y);
                    }
                }
                if self.nodes[b.0].requires_grad {
                    let db = self.grad_buf(b);
                    for ((d, x), y) in db.iter_mut().zip(&av).zip(&bv) {
                        *d -= scale * (x - y);
                    }
                }
            }
        }
    }
}

fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::ShapeMismatch {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out += a @ b` for row-major `a: m x k`, `b: k x n`.
fn matmul_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (l, &al) in arow.iter().enumerate() {
            let brow = &b[l * n..(l + 1) * n];
            for (oj, bj) in orow.iter_mut().zip(brow) {
                *oj += al * bj;
            }
        }
    }
}

fn conv2d_forward(
    input: &[f64],
    kernel: &[f64],
    out: &mut [f64],
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    kh: usize,
    kw: usize,
) {
    let (ph, pw) = (kh / 2, kw / 2);
    for oc in 0..o {
        for ic in 0..c {
            let plane = &input[ic * h * w..(ic + 1) * h * w];
            let kplane = &kernel[(oc * c + ic) * kh * kw..(oc * c + ic + 1) * kh * kw];
            let oplane = &mut out[oc * h * w..(oc + 1) * h * w];
            for dy in 0..kh {
                for dx in 0..kw {
                    let kval = kplane[dy * kw + dx];
                    if kval == 0.0 {
                        continue;
                    }
                    // out[y, x] += k[dy, dx] * in[y + dy - ph, x + dx - pw]
                    let y0 = ph.saturating_sub(dy);
                    let y1 = (h + ph).saturating_sub(dy).min(h);
                    for y in y0..y1 {
                        let sy = y + dy - ph;
                        let x0 = pw.saturating_sub(dx);
                        let x1 = (w + pw).saturating_sub(dx).min(w);
                        let orow = &mut oplane[y * w + x0..y * w + x1];
                        let irow = &plane[sy * w + (x0 + dx - pw)..sy * w + (x1 + dx - pw)];
                        for (ov, iv) in orow.iter_mut().zip(irow) {
                            *ov += kval * iv;
                        }
                    }
                }
            }
        }
    }
}

/// dInput for conv2d: cross-correlation of the output grad with the
/// spatially flipped kernel, with input/output channel roles swapped.
fn conv2d_backward_input(
    gout: &[f64],
    kernel: &[f64],
    dinput: &mut [f64],
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    kh: usize,
    kw: usize,
) {
    let (ph, pw) = (kh / 2, kw / 2);
    for oc in 0..o {
        let gplane = &gout[oc * h * w..(oc + 1) * h * w];
        for ic in 0..c {
            let kplane = &kernel[(oc * c + ic) * kh * kw..(oc * c + ic + 1) * kh * kw];
            let dplane = &mut dinput[ic * h * w..(ic + 1) * h * w];
            for dy in 0..kh {
                for dx in 0..kw {
                    let kval = kplane[dy * kw + dx];
                    if kval == 0.0 {
                        continue;
                    }
                    // forward read: out[y, x] <- in[y + dy - ph, x + dx - pw]
                    let y0 = ph.saturating_sub(dy);
                    let y1 = (h + ph).saturating_sub(dy).min(h);
                    for y in y0..y1 {
                        let sy = y + dy - ph;
                        let x0 = pw.saturating_sub(dx);
                        let x1 = (w + pw).saturating_sub(dx).min(w);
                        let grow = &gplane[y * w + x0..y * w + x1];
                        let drow = &mut dplane[sy * w + (x0 + dx - pw)..sy * w + (x1 + dx - pw)];
                        for (dv, gv) in drow.iter_mut().zip(grow) {
                            *dv += kval * gv;
                        }
                    }
                }
            }
        }
    }
}

fn conv2d_backward_kernel(
    gout: &[f64],
    input: &[f64],
    dkernel: &mut [f64],
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    kh: usize,
    kw: usize,
) {
    let (ph, pw) = (kh / 2, kw / 2);
    for oc in 0..o {
        let gplane = &gout[oc * h * w..(oc + 1) * h * w];
        for ic in 0..c {
            let plane = &input[ic * h * w..(ic + 1) * h * w];
            let dkplane = &mut dkernel[(oc * c + ic) * kh * kw..(oc * c + ic + 1) * kh * kw];
            for dy in 0..kh {
                for dx in 0..kw {
                    let y0 = ph.saturating_sub(dy);
                    let y1 = (h + ph).saturating_sub(dy).min(h);
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let sy = y + dy - ph;
                        let x0 = pw.saturating_sub(dx);
                        let x1 = (w + pw).saturating_sub(dx).min(w);
                        let grow = &gplane[y * w + x0..y * w + x1];
                        let irow = &plane[sy * w + (x0 + dx - pw)..sy * w + (x1 + dx - pw)];
                        for (gv, iv) in grow.iter().zip(irow) {
                            acc += gv * iv;
                        }
                    }
                    dkplane[dy * kw + dx] += acc;
                }
            }
        }
    }
}

/// Central finite-difference check of the tape gradients.
///
/// `f` must build a scalar loss from the given parameter leaves using only
/// tape ops and be deterministic. Returns the max over all parameters of
/// `|analytic - numeric| / max(1e-8, |numeric|)`.
pub fn finite_difference_check<F>(f: F, params: &[(Vec<usize>, Vec<f64>)]) -> Result<f64>
where
    F: Fn(&mut Tape, &[TensorId]) -> Result<TensorId>,
{
    let eval = |inputs: &[(Vec<usize>, Vec<f64>)]| -> Result<f64> {
        let mut tape = Tape::new();
        let ids: Vec<TensorId> = inputs
            .iter()
            .map(|(s, d)| tape.leaf(s.clone(), d.clone(), false))
            .collect();
        let loss = f(&mut tape, &ids)?;
        Ok(tape.value(loss)[0])
    };

    let mut tape = Tape::new();
    let ids: Vec<TensorId> = params
        .iter()
        .map(|(s, d)| tape.leaf(s.clone(), d.clone(), true))
        .collect();
    let loss = f(&mut tape, &ids)?;
    tape.backward(loss)?;

    let step = 1e-5;
    let mut worst = 0.0_f64;
    let mut probe: Vec<(Vec<usize>, Vec<f64>)> = params.to_vec();
    for (pi, id) in ids.iter().enumerate() {
        let analytic = tape
            .grad(*id)
            .map(|g| g.to_vec())
            .unwrap_or_else(|| vec![0.0; params[pi].1.len()]);
        for j in 0..params[pi].1.len() {
            let orig = probe[pi].1[j];
            probe[pi].1[j] = orig + step;
            let up = eval(&probe)?;
            probe[pi].1[j] = orig - step;
            let down = eval(&probe)?;
            probe[pi].1[j] = orig;
            let numeric = (up - down) / (2.0 * step);
            let rel = (analytic[j] - numeric).abs() / f64::max(1e-8, numeric.abs());
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
