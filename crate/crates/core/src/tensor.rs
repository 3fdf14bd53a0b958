//! Dense rank-1/rank-2 tensors with reverse-mode automatic differentiation.
//!
//! Values live on a [`Tape`]: every operation records its inputs and a local
//! backward rule, and [`Tape::backward`] replays the record in reverse to
//! accumulate gradients into every `requires_grad` leaf that feeds the loss.
//! Everything is 64-bit; shapes are limited to vectors and matrices, which is
//! all the model needs.

use crate::error::{Error, Result};

/// A dense tensor: row-major `f64` data plus a shape of rank 1 or 2.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    /// Builds a tensor, validating the shape/data contract.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.len() > 2 {
            return Err(Error::dim("tensor", format!("rank {} unsupported", shape.len())));
        }
        if shape.contains(&0) {
            return Err(Error::dim("tensor", format!("zero dimension in {shape:?}")));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::dim(
                "tensor",
                format!("shape {shape:?} wants {numel} elements, data has {}", data.len()),
            ));
        }
        Ok(Tensor { shape, data, requires_grad: false, grad: None })
    }

    pub fn vector(data: Vec<f64>) -> Result<Self> {
        let n = data.len();
        Tensor::new(vec![n], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn scalar(v: f64) -> Self {
        Tensor { shape: vec![1], data: vec![v], requires_grad: false, grad: None }
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let numel: usize = shape.iter().product();
        Tensor::new(shape.to_vec(), vec![0.0; numel])
    }

    /// Marks the tensor as a differentiable leaf.
    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Row count (1 for vectors).
    pub fn rows(&self) -> usize {
        if self.rank() == 2 { self.shape[0] } else { 1 }
    }

    /// Column count (the length for vectors).
    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    /// Copies a contiguous range of rows out of a matrix.
    pub fn window_rows(&self, range: std::ops::Range<usize>) -> Result<Tensor> {
        if self.rank() != 2 || range.is_empty() || range.end > self.rows() {
            return Err(Error::dim(
                "window_rows",
                format!("rows {range:?} of shape {:?}", self.shape),
            ));
        }
        let c = self.cols();
        Tensor::matrix(range.len(), c, self.data[range.start * c..range.end * c].to_vec())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TensorId(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul { a: TensorId, b: TensorId },
    Add { a: TensorId, b: TensorId },
    Sub { a: TensorId, b: TensorId },
    Mul { a: TensorId, b: TensorId },
    Scale { a: TensorId, c: f64 },
    Sigmoid { a: TensorId },
    Tanh { a: TensorId },
    Ln { a: TensorId },
    Concat { a: TensorId, b: TensorId },
    Slice { a: TensorId, start: usize },
    SoftmaxRow { a: TensorId },
    Sum { a: TensorId },
    /// Per-slot convex blend `out[i,:] = (1 - z[i]) * m[i,:] + z[i] * o`.
    SlotBlend { m: TensorId, z: TensorId, o: TensorId },
}

struct Node {
    tensor: Tensor,
    op: Op,
}

/// Records operations so that gradients can be replayed in reverse.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Stable (rows, cols) view used by matmul: vectors are promoted to a row on
/// the left and a column on the right; the flat data is unchanged either way.
fn promote(shape: &[usize], left: bool) -> (usize, usize) {
    match shape.len() {
        1 => {
            if left { (1, shape[0]) } else { (shape[0], 1) }
        }
        _ => (shape[0], shape[1]),
    }
}

fn raw_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
}

fn softmax_slice(x: &[f64], out: &mut [f64]) {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(x) {
        let e = (v - max).exp();
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Inserts a tensor as a leaf and returns its handle.
    pub fn leaf(&mut self, t: Tensor) -> TensorId {
        self.push(t, Op::Leaf)
    }

    /// Convenience: a non-differentiable vector leaf.
    pub fn constant(&mut self, data: Vec<f64>) -> Result<TensorId> {
        Ok(self.leaf(Tensor::vector(data)?))
    }

    /// Convenience: a non-differentiable zero vector leaf.
    pub fn zeros(&mut self, n: usize) -> Result<TensorId> {
        Ok(self.leaf(Tensor::zeros(&[n])?))
    }

    fn push(&mut self, tensor: Tensor, op: Op) -> TensorId {
        let id = TensorId(self.nodes.len());
        self.nodes.push(Node { tensor, op });
        id
    }

    pub fn value(&self, id: TensorId) -> &Tensor {
        &self.nodes[id.0].tensor
    }

    pub fn data(&self, id: TensorId) -> &[f64] {
        &self.nodes[id.0].tensor.data
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id.0].tensor.shape
    }

    pub fn grad(&self, id: TensorId) -> Option<&[f64]> {
        self.nodes[id.0].tensor.grad.as_deref()
    }

    /// Matrix product with vector promotion: `[m,n]x[n,p] -> [m,p]`,
    /// `[m,n]x[n] -> [m]`, `[n]x[n,p] -> [p]`, `[n]x[n] -> [1]` (dot).
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let (m, ka) = promote(&sa, true);
        let (kb, n) = promote(&sb, false);
        if ka != kb {
            return Err(Error::dims("matmul", &sa, &sb));
        }
        let mut out = vec![0.0; m * n];
        raw_matmul(self.data(a), self.data(b), m, ka, n, &mut out);
        let shape = match (sa.len(), sb.len()) {
            (2, 2) => vec![m, n],
            (2, 1) => vec![m],
            (1, 2) => vec![n],
            _ => vec![1],
        };
        Ok(self.push(
            Tensor { shape, data: out, requires_grad: false, grad: None },
            Op::MatMul { a, b },
        ))
    }

    fn zip_op(
        &mut self,
        name: &'static str,
        a: TensorId,
        b: TensorId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<TensorId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dims(name, self.shape(a), self.shape(b)));
        }
        let data: Vec<f64> =
            self.data(a).iter().zip(self.data(b)).map(|(&x, &y)| f(x, y)).collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(Tensor { shape, data, requires_grad: false, grad: None }, op))
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.zip_op("add", a, b, |x, y| x + y, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.zip_op("sub", a, b, |x, y| x - y, Op::Sub { a, b })
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.zip_op("mul", a, b, |x, y| x * y, Op::Mul { a, b })
    }

    pub fn scale(&mut self, a: TensorId, c: f64) -> TensorId {
        let data: Vec<f64> = self.data(a).iter().map(|&x| x * c).collect();
        let shape = self.shape(a).to_vec();
        self.push(Tensor { shape, data, requires_grad: false, grad: None }, Op::Scale { a, c })
    }

    fn map_op(&mut self, a: TensorId, f: impl Fn(f64) -> f64, op: Op) -> TensorId {
        let data: Vec<f64> = self.data(a).iter().map(|&x| f(x)).collect();
        let shape = self.shape(a).to_vec();
        self.push(Tensor { shape, data, requires_grad: false, grad: None }, op)
    }

    pub fn sigmoid(&mut self, a: TensorId) -> TensorId {
        self.map_op(a, |x| 1.0 / (1.0 + (-x).exp()), Op::Sigmoid { a })
    }

    pub fn tanh(&mut self, a: TensorId) -> TensorId {
        self.map_op(a, f64::tanh, Op::Tanh { a })
    }

    pub fn ln(&mut self, a: TensorId) -> TensorId {
        self.map_op(a, f64::ln, Op::Ln { a })
    }

    /// Concatenates two vectors.
    pub fn concat(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        if self.shape(a).len() != 1 || self.shape(b).len() != 1 {
            return Err(Error::dims("concat", self.shape(a), self.shape(b)));
        }
        let mut data = self.data(a).to_vec();
        data.extend_from_slice(self.data(b));
        let n = data.len();
        Ok(self.push(
            Tensor { shape: vec![n], data, requires_grad: false, grad: None },
            Op::Concat { a, b },
        ))
    }

    /// Contiguous sub-vector `a[start .. start + len]`.
    pub fn slice(&mut self, a: TensorId, start: usize, len: usize) -> Result<TensorId> {
        let sa = self.shape(a);
        if sa.len() != 1 || len == 0 || start + len > sa[0] {
            return Err(Error::dim(
                "slice",
                format!("range {start}..{} of shape {sa:?}", start + len),
            ));
        }
        let data = self.data(a)[start..start + len].to_vec();
        Ok(self.push(
            Tensor { shape: vec![len], data, requires_grad: false, grad: None },
            Op::Slice { a, start },
        ))
    }

    /// Numerically stable softmax over a vector (max-subtraction).
    pub fn softmax_row(&mut self, a: TensorId) -> Result<TensorId> {
        let sa = self.shape(a);
        if sa.len() != 1 {
            return Err(Error::dim("softmax_row", format!("expected vector, got {sa:?}")));
        }
        let x = self.data(a);
        let mut out = vec![0.0; x.len()];
        softmax_slice(x, &mut out);
        Ok(self.push(
            Tensor { shape: vec![out.len()], data: out, requires_grad: false, grad: None },
            Op::SoftmaxRow { a },
        ))
    }

    /// Sum of all elements, as a length-1 vector.
    pub fn sum(&mut self, a: TensorId) -> TensorId {
        let s: f64 = self.data(a).iter().sum();
        self.push(Tensor::scalar(s), Op::Sum { a })
    }

    /// Per-slot convex blend of a slot matrix toward a write vector:
    /// `out[i,:] = (1 - z[i]) * m[i,:] + z[i] * o`.
    ///
    /// The weights must lie in `[0, 1]`. Each result is clamped to the
    /// interval spanned by the slot entry and the write entry, so rounding
    /// can never move a slot past the write vector and a write vector equal
    /// to the slots is an exact fixed point.
    pub fn slot_blend(&mut self, m: TensorId, z: TensorId, o: TensorId) -> Result<TensorId> {
        let sm = self.shape(m).to_vec();
        if sm.len() != 2 {
            return Err(Error::dim("slot_blend", format!("slots must be a matrix, got {sm:?}")));
        }
        let (l, k) = (sm[0], sm[1]);
        if self.shape(z) != [l] {
            return Err(Error::dims("slot_blend", &sm, self.shape(z)));
        }
        if self.shape(o) != [k] {
            return Err(Error::dims("slot_blend", &sm, self.shape(o)));
        }
        if self.data(z).iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Contract(format!(
                "slot_blend weights must lie in [0, 1], got {:?}",
                self.data(z)
            )));
        }
        let mut out = vec![0.0; l * k];
        {
            let mv = self.data(m);
            let zv = self.data(z);
            let ov = self.data(o);
            for i in 0..l {
                let zi = zv[i];
                for j in 0..k {
                    let (mij, oj) = (mv[i * k + j], ov[j]);
                    let v = (1.0 - zi) * mij + zi * oj;
                    out[i * k + j] = v.clamp(mij.min(oj), mij.max(oj));
                }
            }
        }
        Ok(self.push(
            Tensor { shape: vec![l, k], data: out, requires_grad: false, grad: None },
            Op::SlotBlend { m, z, o },
        ))
    }

    fn op_inputs(op: &Op) -> Vec<TensorId> {
        match *op {
            Op::Leaf => vec![],
            Op::MatMul { a, b }
            | Op::Add { a, b }
            | Op::Sub { a, b }
            | Op::Mul { a, b }
            | Op::Concat { a, b } => vec![a, b],
            Op::Scale { a, .. }
            | Op::Sigmoid { a }
            | Op::Tanh { a }
            | Op::Ln { a }
            | Op::Slice { a, .. }
            | Op::SoftmaxRow { a }
            | Op::Sum { a } => vec![a],
            Op::SlotBlend { m, z, o } => vec![m, z, o],
        }
    }

    fn accumulate(&mut self, id: TensorId, contrib: &[f64]) {
        let t = &mut self.nodes[id.0].tensor;
        let grad = t.grad.get_or_insert_with(|| vec![0.0; t.data.len()]);
        for (g, &c) in grad.iter_mut().zip(contrib) {
            *g += c;
        }
    }

    /// Reverse sweep from a scalar loss. Gradients accumulate additively into
    /// every node on a path from a `requires_grad` leaf to the loss; nodes off
    /// those paths are left untouched.
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        if self.shape(loss) != [1] {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        // A node needs a gradient iff some requires_grad leaf feeds it.
        let mut needs = vec![false; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            needs[i] = match node.op {
                Op::Leaf => node.tensor.requires_grad,
                ref op => Self::op_inputs(op).iter().any(|id| needs[id.0]),
            };
        }
        if !needs[loss.0] {
            return Ok(());
        }
        self.accumulate(loss, &[1.0]);
        for i in (0..=loss.0).rev() {
            if !needs[i] || self.nodes[i].tensor.grad.is_none() {
                continue;
            }
            let grad = self.nodes[i].tensor.grad.clone().unwrap();
            let op = self.nodes[i].op.clone();
            match op {
                Op::Leaf => {}
                Op::MatMul { a, b } => {
                    let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
                    let (m, k) = promote(&sa, true);
                    let n = promote(&sb, false).1;
                    if needs[a.0] {
                        // dA = G . B^T
                        let bdat = self.data(b);
                        let mut bt = vec![0.0; n * k];
                        for p in 0..k {
                            for j in 0..n {
                                bt[j * k + p] = bdat[p * n + j];
                            }
                        }
                        let mut da = vec![0.0; m * k];
                        raw_matmul(&grad, &bt, m, n, k, &mut da);
                        self.accumulate(a, &da);
                    }
                    if needs[b.0] {
                        // dB = A^T . G
                        let adat = self.data(a);
                        let mut at = vec![0.0; k * m];
                        for i2 in 0..m {
                            for p in 0..k {
                                at[p * m + i2] = adat[i2 * k + p];
                            }
                        }
                        let mut db = vec![0.0; k * n];
                        raw_matmul(&at, &grad, k, m, n, &mut db);
                        self.accumulate(b, &db);
                    }
                }
                Op::Add { a, b } => {
                    if needs[a.0] {
                        self.accumulate(a, &grad);
                    }
                    if needs[b.0] {
                        self.accumulate(b, &grad);
                    }
                }
                Op::Sub { a, b } => {
                    if needs[a.0] {
                        self.accumulate(a, &grad);
                    }
                    if needs[b.0] {
                        let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
                        self.accumulate(b, &neg);
                    }
                }
                Op::Mul { a, b } => {
                    if needs[a.0] {
                        let da: Vec<f64> =
                            grad.iter().zip(self.data(b)).map(|(g, &y)| g * y).collect();
                        self.accumulate(a, &da);
                    }
                    if needs[b.0] {
                        let db: Vec<f64> =
                            grad.iter().zip(self.data(a)).map(|(g, &x)| g * x).collect();
                        self.accumulate(b, &db);
                    }
                }
                Op::Scale { a, c } => {
                    if needs[a.0] {
                        let da: Vec<f64> = grad.iter().map(|g| g * c).collect();
                        self.accumulate(a, &da);
                    }
                }
                Op::Sigmoid { a } => {
                    if needs[a.0] {
                        let out = &self.nodes[i].tensor.data;
                        let da: Vec<f64> =
                            grad.iter().zip(out).map(|(g, &s)| g * s * (1.0 - s)).collect();
                        self.accumulate(a, &da);
                    }
                }
                Op::Tanh { a } => {
                    if needs[a.0] {
                        let out = &self.nodes[i].tensor.data;
                        let da: Vec<f64> =
                            grad.iter().zip(out).map(|(g, &t)| g * (1.0 - t * t)).collect();
                        self.accumulate(a, &da);
                    }
                }
                Op::Ln { a } => {
                    if needs[a.0] {
                        let da: Vec<f64> =
                            grad.iter().zip(self.data(a)).map(|(g, &x)| g / x).collect();
                        self.accumulate(a, &da);
                    }
                }
                Op::Concat { a, b } => {
                    let na = self.value(a).len();
                    if needs[a.0] {
                        self.accumulate(a, &grad[..na]);
                    }
                    if needs[b.0] {
                        self.accumulate(b, &grad[na..]);
                    }
                }
                Op::Slice { a, start } => {
                    if needs[a.0] {
                        let mut da = vec![0.0; self.value(a).len()];
                        da[start..start + grad.len()].copy_from_slice(&grad);
                        self.accumulate(a, &da);
                    }
                }
                Op::SoftmaxRow { a } => {
                    if needs[a.0] {
                        let s = &self.nodes[i].tensor.data;
                        let dot: f64 = grad.iter().zip(s).map(|(g, &v)| g * v).sum();
                        let da: Vec<f64> =
                            grad.iter().zip(s).map(|(g, &v)| v * (g - dot)).collect();
                        self.accumulate(a, &da);
                    }
                }
                Op::Sum { a } => {
                    if needs[a.0] {
                        let da = vec![grad[0]; self.value(a).len()];
                        self.accumulate(a, &da);
                    }
                }
                Op::SlotBlend { m, z, o } => {
                    let (l, k) = (self.shape(m)[0], self.shape(m)[1]);
                    if needs[m.0] {
                        let zv = self.data(z);
                        let mut dm = vec![0.0; l * k];
                        for s in 0..l {
                            for j in 0..k {
                                dm[s * k + j] = grad[s * k + j] * (1.0 - zv[s]);
                            }
                        }
                        self.accumulate(m, &dm);
                    }
                    if needs[z.0] {
                        let (mv, ov) = (self.data(m), self.data(o));
                        let mut dz = vec![0.0; l];
                        for s in 0..l {
                            for j in 0..k {
                                dz[s] += grad[s * k + j] * (ov[j] - mv[s * k + j]);
                            }
                        }
                        self.accumulate(z, &dz);
                    }
                    if needs[o.0] {
                        let zv = self.data(z);
                        let mut dov = vec![0.0; k];
                        for s in 0..l {
                            for j in 0..k {
                                dov[j] += grad[s * k + j] * zv[s];
                            }
                        }
                        self.accumulate(o, &dov);
                    }
                }
            }
        }
        Ok(())
    }
}
