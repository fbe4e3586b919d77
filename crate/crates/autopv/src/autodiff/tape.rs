use rand::Rng;

use super::tensor::Tensor;
use super::AutodiffError;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    MatMul(NodeId, NodeId),
    Relu(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Sqrt(NodeId),
    Abs(NodeId),
    MeanAll(NodeId),
    MeanAxis0(NodeId),
    Transpose(NodeId),
    Concat {
        parts: Vec<NodeId>,
        axis: usize,
    },
    Slice {
        x: NodeId,
        axis: usize,
        start: usize,
        len: usize,
    },
    SelectCols {
        x: NodeId,
        cols: Vec<usize>,
    },
    ExpandRow {
        v: NodeId,
        rows: usize,
    },
    ExpandCol {
        v: NodeId,
        cols: usize,
    },
    Reshape(NodeId),
    MovingAverage {
        x: NodeId,
        kernel: usize,
    },
    Conv1d {
        x: NodeId,
        w: NodeId,
        dilation: usize,
        causal: bool,
    },
    Dropout {
        x: NodeId,
        mask: Vec<f64>,
    },
    Rfft(NodeId),
    Irfft {
        x: NodeId,
        out_len: usize,
    },
}

struct Node {
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    op: Op,
}

/// Eagerly-evaluated computation tape with reverse-mode gradients.
///
/// Nodes are appended in topological order by construction; `backward`
/// walks them in reverse. Single-threaded evaluation is bit-deterministic.
pub struct Tape {
    nodes: Vec<Node>,
    train: bool,
}

/// Per-node gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn wrt(&self, id: NodeId) -> Option<&[f64]> {
        self.grads[id.0].as_deref()
    }
}

fn shape_err(expected: impl std::fmt::Debug, actual: impl std::fmt::Debug) -> AutodiffError {
    AutodiffError::ShapeMismatch {
        expected: format!("{:?}", expected),
        actual: format!("{:?}", actual),
    }
}

impl Tape {
    pub fn new(train: bool) -> Self {
        Self {
            nodes: Vec::new(),
            train,
        }
    }

    pub fn is_train(&self) -> bool {
        self.train
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> Tensor {
        Tensor::new(self.nodes[id.0].shape.clone(), self.nodes[id.0].data.clone())
            .expect("node shape consistent")
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn data(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].data
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, requires_grad: bool, op: Op) -> NodeId {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.nodes.push(Node {
            shape,
            data,
            requires_grad,
            op,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    pub fn leaf(&mut self, t: Tensor, requires_grad: bool) -> NodeId {
        let shape = t.shape().to_vec();
        self.push(shape, t.into_data(), requires_grad, Op::Leaf)
    }

    pub fn constant(&mut self, t: Tensor) -> NodeId {
        self.leaf(t, false)
    }

    fn rows_cols(&self, id: NodeId) -> (usize, usize) {
        let s = &self.nodes[id.0].shape;
        match s.len() {
            1 => (s[0], 1),
            2 => (s[0], s[1]),
            _ => panic!("expected rank <= 2, got {:?}", s),
        }
    }

    fn binary_same_shape(
        &mut self,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId, AutodiffError> {
        if self.nodes[a.0].shape != self.nodes[b.0].shape {
            return Err(shape_err(&self.nodes[a.0].shape, &self.nodes[b.0].shape));
        }
        let data: Vec<f64> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(shape, data, rg, op))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        self.binary_same_shape(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        self.binary_same_shape(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        self.binary_same_shape(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        self.binary_same_shape(a, b, |x, y| x / y, Op::Div(a, b))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let data: Vec<f64> = self.nodes[x.0].data.iter().map(|&v| v * c).collect();
        let shape = self.nodes[x.0].shape.clone();
        let rg = self.rg(x);
        self.push(shape, data, rg, Op::Scale(x, c))
    }

    pub fn add_scalar(&mut self, x: NodeId, c: f64) -> NodeId {
        let data: Vec<f64> = self.nodes[x.0].data.iter().map(|&v| v + c).collect();
        let shape = self.nodes[x.0].shape.clone();
        let rg = self.rg(x);
        self.push(shape, data, rg, Op::AddScalar(x))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let sa = self.nodes[a.0].shape.clone();
        let sb = self.nodes[b.0].shape.clone();
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err(&sa, &sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut data = vec![0.0; m * n];
        {
            let da = &self.nodes[a.0].data;
            let db = &self.nodes[b.0].data;
            for i in 0..m {
                for p in 0..k {
                    let av = da[i * k + p];
                    if av == 0.0 {
                        continue;
                    }
                    let brow = &db[p * n..(p + 1) * n];
                    let out = &mut data[i * n..(i + 1) * n];
                    for j in 0..n {
                        out[j] += av * brow[j];
                    }
                }
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(vec![m, n], data, rg, Op::MatMul(a, b)))
    }

    fn unary(&mut self, x: NodeId, f: impl Fn(f64) -> f64, op: Op) -> NodeId {
        let data: Vec<f64> = self.nodes[x.0].data.iter().map(|&v| f(v)).collect();
        let shape = self.nodes[x.0].shape.clone();
        let rg = self.rg(x);
        self.push(shape, data, rg, op)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.unary(x, |v| 1.0 / (1.0 + (-v).exp()), Op::Sigmoid(x))
    }

    pub fn sqrt(&mut self, x: NodeId) -> NodeId {
        self.unary(x, f64::sqrt, Op::Sqrt(x))
    }

    pub fn abs(&mut self, x: NodeId) -> NodeId {
        self.unary(x, f64::abs, Op::Abs(x))
    }

    pub fn mean_all(&mut self, x: NodeId) -> NodeId {
        let n = self.nodes[x.0].data.len() as f64;
        let s: f64 = self.nodes[x.0].data.iter().sum();
        let rg = self.rg(x);
        self.push(vec![1], vec![s / n], rg, Op::MeanAll(x))
    }

    /// Mean over rows: [r, c] -> [1, c].
    pub fn mean_axis0(&mut self, x: NodeId) -> Result<NodeId, AutodiffError> {
        let s = self.nodes[x.0].shape.clone();
        if s.len() != 2 {
            return Err(shape_err("[r, c]", &s));
        }
        let (r, c) = (s[0], s[1]);
        let mut data = vec![0.0; c];
        for i in 0..r {
            for j in 0..c {
                data[j] += self.nodes[x.0].data[i * c + j];
            }
        }
        for v in &mut data {
            *v /= r as f64;
        }
        let rg = self.rg(x);
        Ok(self.push(vec![1, c], data, rg, Op::MeanAxis0(x)))
    }

    pub fn transpose(&mut self, x: NodeId) -> Result<NodeId, AutodiffError> {
        let s = self.nodes[x.0].shape.clone();
        if s.len() != 2 {
            return Err(shape_err("[r, c]", &s));
        }
        let (r, c) = (s[0], s[1]);
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = self.nodes[x.0].data[i * c + j];
            }
        }
        let rg = self.rg(x);
        Ok(self.push(vec![c, r], data, rg, Op::Transpose(x)))
    }

    pub fn concat(&mut self, parts: &[NodeId], axis: usize) -> Result<NodeId, AutodiffError> {
        if parts.is_empty() || axis > 1 {
            return Err(AutodiffError::InvalidArg("concat needs parts and axis in {0,1}".into()));
        }
        let (r0, c0) = self.rows_cols(parts[0]);
        let (mut rows, mut cols) = (r0, c0);
        for &p in &parts[1..] {
            let (r, c) = self.rows_cols(p);
            if axis == 0 {
                if c != c0 {
                    return Err(shape_err((r0, c0), (r, c)));
                }
                rows += r;
            } else {
                if r != r0 {
                    return Err(shape_err((r0, c0), (r, c)));
                }
                cols += c;
            }
        }
        let mut data = vec![0.0; rows * cols];
        if axis == 0 {
            let mut off = 0;
            for &p in parts {
                let d = &self.nodes[p.0].data;
                data[off..off + d.len()].copy_from_slice(d);
                off += d.len();
            }
        } else {
            let mut col_off = 0;
            for &p in parts {
                let (r, c) = self.rows_cols(p);
                let d = &self.nodes[p.0].data;
                for i in 0..r {
                    for j in 0..c {
                        data[i * cols + col_off + j] = d[i * c + j];
                    }
                }
                col_off += c;
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(
            vec![rows, cols],
            data,
            rg,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
        ))
    }

    pub fn slice(
        &mut self,
        x: NodeId,
        axis: usize,
        start: usize,
        len: usize,
    ) -> Result<NodeId, AutodiffError> {
        let (r, c) = self.rows_cols(x);
        let bound = if axis == 0 { r } else { c };
        if axis > 1 || start + len > bound {
            return Err(AutodiffError::InvalidArg(format!(
                "slice [{start}, {}) on axis {axis} of shape [{r}, {c}]",
                start + len
            )));
        }
        let d = &self.nodes[x.0].data;
        let (shape, data) = if axis == 0 {
            (vec![len, c], d[start * c..(start + len) * c].to_vec())
        } else {
            let mut out = Vec::with_capacity(r * len);
            for i in 0..r {
                out.extend_from_slice(&d[i * c + start..i * c + start + len]);
            }
            (vec![r, len], out)
        };
        let rg = self.rg(x);
        Ok(self.push(shape, data, rg, Op::Slice { x, axis, start, len }))
    }

    pub fn select_cols(&mut self, x: NodeId, cols: &[usize]) -> Result<NodeId, AutodiffError> {
        let (r, c) = self.rows_cols(x);
        if cols.iter().any(|&j| j >= c) {
            return Err(AutodiffError::InvalidArg(format!(
                "select_cols {:?} out of range for {} columns",
                cols, c
            )));
        }
        let d = &self.nodes[x.0].data;
        let mut data = Vec::with_capacity(r * cols.len());
        for i in 0..r {
            for &j in cols {
                data.push(d[i * c + j]);
            }
        }
        let rg = self.rg(x);
        Ok(self.push(
            vec![r, cols.len()],
            data,
            rg,
            Op::SelectCols {
                x,
                cols: cols.to_vec(),
            },
        ))
    }

    /// Broadcast a row vector [c] or [1, c] to [rows, c].
    pub fn expand_row(&mut self, v: NodeId, rows: usize) -> Result<NodeId, AutodiffError> {
        let s = self.nodes[v.0].shape.clone();
        if !(s.len() == 1 || (s.len() == 2 && s[0] == 1)) {
            return Err(shape_err("[c] or [1, c]", &s));
        }
        let c = self.nodes[v.0].data.len();
        let mut data = Vec::with_capacity(rows * c);
        for _ in 0..rows {
            data.extend_from_slice(&self.nodes[v.0].data);
        }
        let rg = self.rg(v);
        Ok(self.push(vec![rows, c], data, rg, Op::ExpandRow { v, rows }))
    }

    /// Broadcast a column vector [r] or [r, 1] to [r, cols].
    pub fn expand_col(&mut self, v: NodeId, cols: usize) -> Result<NodeId, AutodiffError> {
        let s = self.nodes[v.0].shape.clone();
        if !(s.len() == 1 || (s.len() == 2 && s[1] == 1)) {
            return Err(shape_err("[r] or [r, 1]", &s));
        }
        let r = self.nodes[v.0].data.len();
        let mut data = Vec::with_capacity(r * cols);
        for i in 0..r {
            let val = self.nodes[v.0].data[i];
            data.extend(std::iter::repeat(val).take(cols));
        }
        let rg = self.rg(v);
        Ok(self.push(vec![r, cols], data, rg, Op::ExpandCol { v, cols }))
    }

    pub fn reshape(&mut self, x: NodeId, shape: Vec<usize>) -> Result<NodeId, AutodiffError> {
        if shape.iter().product::<usize>() != self.nodes[x.0].data.len() {
            return Err(shape_err(&shape, &self.nodes[x.0].shape));
        }
        let data = self.nodes[x.0].data.clone();
        let rg = self.rg(x);
        Ok(self.push(shape, data, rg, Op::Reshape(x)))
    }

    /// Centered moving average along axis 0 with replicate padding.
    ///
    /// The window mean is computed as `x[t] + mean(window deviations)` so a
    /// constant series comes back exactly.
    pub fn moving_average(&mut self, x: NodeId, kernel: usize) -> Result<NodeId, AutodiffError> {
        if kernel == 0 || kernel % 2 == 0 {
            return Err(AutodiffError::InvalidArg(format!(
                "moving_average kernel must be odd and positive, got {kernel}"
            )));
        }
        let (r, c) = self.rows_cols(x);
        let h = (kernel - 1) / 2;
        let d = &self.nodes[x.0].data;
        let mut data = vec![0.0; r * c];
        for j in 0..c {
            for t in 0..r {
                let base = d[t * c + j];
                let mut acc = 0.0;
                for w in 0..kernel {
                    let idx = (t + w).saturating_sub(h).min(r - 1);
                    acc += d[idx * c + j] - base;
                }
                data[t * c + j] = base + acc / kernel as f64;
            }
        }
        let shape = self.nodes[x.0].shape.clone();
        let rg = self.rg(x);
        Ok(self.push(shape, data, rg, Op::MovingAverage { x, kernel }))
    }

    /// 1-D convolution over axis 0: x [t, c_in], w [k, c_in, c_out] -> [t, c_out].
    ///
    /// `causal` pads only on the left so output t never reads inputs after t;
    /// otherwise same-padding is applied on both sides (k odd required).
    pub fn conv1d(
        &mut self,
        x: NodeId,
        w: NodeId,
        dilation: usize,
        causal: bool,
    ) -> Result<NodeId, AutodiffError> {
        let sx = self.nodes[x.0].shape.clone();
        let sw = self.nodes[w.0].shape.clone();
        if sx.len() != 2 || sw.len() != 3 || sx[1] != sw[1] {
            return Err(shape_err(&sx, &sw));
        }
        let (t_len, c_in) = (sx[0], sx[1]);
        let (k, c_out) = (sw[0], sw[2]);
        if !causal && k % 2 == 0 {
            return Err(AutodiffError::InvalidArg(
                "same-padded conv1d requires odd kernel".into(),
            ));
        }
        if dilation == 0 {
            return Err(AutodiffError::InvalidArg("dilation must be >= 1".into()));
        }
        let mut data = vec![0.0; t_len * c_out];
        {
            let dx = &self.nodes[x.0].data;
            let dw = &self.nodes[w.0].data;
            for t in 0..t_len {
                for j in 0..k {
                    let src = conv_src_index(t, j, k, dilation, causal);
                    let Some(src) = src else { continue };
                    if src >= t_len {
                        continue;
                    }
                    for ci in 0..c_in {
                        let xv = dx[src * c_in + ci];
                        if xv == 0.0 {
                            continue;
                        }
                        let wrow = &dw[(j * c_in + ci) * c_out..(j * c_in + ci + 1) * c_out];
                        let out = &mut data[t * c_out..(t + 1) * c_out];
                        for co in 0..c_out {
                            out[co] += xv * wrow[co];
                        }
                    }
                }
            }
        }
        let rg = self.rg(x) || self.rg(w);
        Ok(self.push(
            vec![t_len, c_out],
            data,
            rg,
            Op::Conv1d {
                x,
                w,
                dilation,
                causal,
            },
        ))
    }

    /// Inverted dropout. Identity in eval mode.
    pub fn dropout<R: Rng>(&mut self, x: NodeId, rate: f64, rng: &mut R) -> NodeId {
        if !self.train || rate <= 0.0 {
            return x;
        }
        let keep = 1.0 - rate;
        let mask: Vec<f64> = self.nodes[x.0]
            .data
            .iter()
            .map(|_| {
                if rng.gen::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        let data: Vec<f64> = self.nodes[x.0]
            .data
            .iter()
            .zip(&mask)
            .map(|(&v, &m)| v * m)
            .collect();
        let shape = self.nodes[x.0].shape.clone();
        let rg = self.rg(x);
        self.push(shape, data, rg, Op::Dropout { x, mask })
    }

    /// Real FFT along axis 0 (unnormalized). x [t, d] -> [2 * (t/2 + 1), d]:
    /// rows 0..F hold the real parts, rows F..2F the imaginary parts.
    pub fn rfft(&mut self, x: NodeId) -> Result<NodeId, AutodiffError> {
        let (n, c) = self.rows_cols(x);
        if n == 0 {
            return Err(AutodiffError::InvalidArg("rfft of empty axis".into()));
        }
        let f = n / 2 + 1;
        let d = &self.nodes[x.0].data;
        let mut data = vec![0.0; 2 * f * c];
        for k in 0..f {
            for t in 0..n {
                let theta = 2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
                let (s, co) = theta.sin_cos();
                for j in 0..c {
                    let v = d[t * c + j];
                    data[k * c + j] += v * co;
                    data[(f + k) * c + j] -= v * s;
                }
            }
        }
        let rg = self.rg(x);
        Ok(self.push(vec![2 * f, c], data, rg, Op::Rfft(x)))
    }

    /// Inverse of [`Tape::rfft`] (1/N normalization); `out_len` is the original axis length.
    pub fn irfft(&mut self, x: NodeId, out_len: usize) -> Result<NodeId, AutodiffError> {
        let (rows, c) = self.rows_cols(x);
        let f = out_len / 2 + 1;
        if rows != 2 * f {
            return Err(shape_err(vec![2 * f, c], &self.nodes[x.0].shape));
        }
        let d = &self.nodes[x.0].data;
        let mut data = vec![0.0; out_len * c];
        for t in 0..out_len {
            for k in 0..f {
                let theta = 2.0 * std::f64::consts::PI * (k * t) as f64 / out_len as f64;
                let (s, co) = theta.sin_cos();
                let w = spectrum_weight(k, out_len) / out_len as f64;
                for j in 0..c {
                    let re = d[k * c + j];
                    let im = d[(f + k) * c + j];
                    data[t * c + j] += w * (re * co - im * s);
                }
            }
        }
        let rg = self.rg(x);
        Ok(self.push(vec![out_len, c], data, rg, Op::Irfft { x, out_len }))
    }

    /// Reverse accumulation from a scalar loss node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients, AutodiffError> {
        if self.nodes[loss.0].data.len() != 1 {
            return Err(AutodiffError::NotScalarLoss {
                shape: format!("{:?}", self.nodes[loss.0].shape),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if grads[i].is_none() || !self.nodes[i].requires_grad {
                continue;
            }
            let g = grads[i].take().unwrap();
            self.accumulate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn add_grad(&self, grads: &mut [Option<Vec<f64>>], id: NodeId, contrib: impl Fn(&mut [f64])) {
        if !self.nodes[id.0].requires_grad {
            return;
        }
        let slot = &mut grads[id.0];
        if slot.is_none() {
            *slot = Some(vec![0.0; self.nodes[id.0].data.len()]);
        }
        contrib(slot.as_mut().unwrap());
    }

    fn accumulate(&self, i: usize, g: &[f64], grads: &mut Vec<Option<Vec<f64>>>) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.add_grad(grads, *a, |ga| {
                    for (gv, &gg) in ga.iter_mut().zip(g) {
                        *gv += gg;
                    }
                });
                self.add_grad(grads, *b, |gb| {
                    for (gv, &gg) in gb.iter_mut().zip(g) {
                        *gv += gg;
                    }
                });
            }
            Op::Sub(a, b) => {
                self.add_grad(grads, *a, |ga| {
                    for (gv, &gg) in ga.iter_mut().zip(g) {
                        *gv += gg;
                    }
                });
                self.add_grad(grads, *b, |gb| {
                    for (gv, &gg) in gb.iter_mut().zip(g) {
                        *gv -= gg;
                    }
                });
            }
            Op::Mul(a, b) => {
                let da = &self.nodes[a.0].data;
                let db = &self.nodes[b.0].data;
                self.add_grad(grads, *a, |ga| {
                    for ((gv, &gg), &bv) in ga.iter_mut().zip(g).zip(db) {
                        *gv += gg * bv;
                    }
                });
                self.add_grad(grads, *b, |gb| {
                    for ((gv, &gg), &av) in gb.iter_mut().zip(g).zip(da) {
                        *gv += gg * av;
                    }
                });
            }
            Op::Div(a, b) => {
                let da = &self.nodes[a.0].data;
                let db = &self.nodes[b.0].data;
                self.add_grad(grads, *a, |ga| {
                    for ((gv, &gg), &bv) in ga.iter_mut().zip(g).zip(db) {
                        *gv += gg / bv;
                    }
                });
                self.add_grad(grads, *b, |gb| {
                    for (j, (gv, &gg)) in gb.iter_mut().zip(g).enumerate() {
                        *gv -= gg * da[j] / (db[j] * db[j]);
                    }
                });
            }
            Op::Scale(x, c) => {
                let c = *c;
                self.add_grad(grads, *x, |gx| {
                    for (gv, &gg) in gx.iter_mut().zip(g) {
                        *gv += gg * c;
                    }
                });
            }
            Op::AddScalar(x) => {
                self.add_grad(grads, *x, |gx| {
                    for (gv, &gg) in gx.iter_mut().zip(g) {
                        *gv += gg;
                    }
                });
            }
            Op::MatMul(a, b) => {
                let sa = &self.nodes[a.0].shape;
                let sb = &self.nodes[b.0].shape;
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                let da = &self.nodes[a.0].data;
                let db = &self.nodes[b.0].data;
                // dA = g . B^T
                self.add_grad(grads, *a, |ga| {
                    for i2 in 0..m {
                        for p in 0..k {
                            let mut acc = 0.0;
                            for j in 0..n {
                                acc += g[i2 * n + j] * db[p * n + j];
                            }
                            ga[i2 * k + p] += acc;
                        }
                    }
                });
                // dB = A^T . g
                self.add_grad(grads, *b, |gb| {
                    for p in 0..k {
                        for i2 in 0..m {
                            let av = da[i2 * k + p];
                            if av == 0.0 {
                                continue;
                            }
                            for j in 0..n {
                                gb[p * n + j] += av * g[i2 * n + j];
                            }
                        }
                    }
                });
            }
            Op::Relu(x) => {
                let dx = &self.nodes[x.0].data;
                self.add_grad(grads, *x, |gx| {
                    for (j, (gv, &gg)) in gx.iter_mut().zip(g).enumerate() {
                        if dx[j] > 0.0 {
                            *gv += gg;
                        }
                    }
                });
            }
            Op::Tanh(x) => {
                let y = &node.data;
                self.add_grad(grads, *x, |gx| {
                    for (j, (gv, &gg)) in gx.iter_mut().zip(g).enumerate() {
                        *gv += gg * (1.0 - y[j] * y[j]);
                    }
                });
            }
            Op::Sigmoid(x) => {
                let y = &node.data;
                self.add_grad(grads, *x, |gx| {
                    for (j, (gv, &gg)) in gx.iter_mut().zip(g).enumerate() {
                        *gv += gg * y[j] * (1.0 - y[j]);
                    }
                });
            }
            Op::Sqrt(x) => {
                let y = &node.data;
                self.add_grad(grads, *x, |gx| {
                    for (j, (gv, &gg)) in gx.iter_mut().zip(g).enumerate() {
                        *gv += gg * 0.5 / y[j];
                    }
                });
            }
            Op::Abs(x) => {
                let dx = &self.nodes[x.0].data;
                self.add_grad(grads, *x, |gx| {
                    for (j, (gv, &gg)) in gx.iter_mut().zip(g).enumerate() {
                        *gv += gg * dx[j].signum() * if dx[j] == 0.0 { 0.0 } else { 1.0 };
                    }
                });
            }
            Op::MeanAll(x) => {
                let n = self.nodes[x.0].data.len() as f64;
                let gg = g[0] / n;
                self.add_grad(grads, *x, |gx| {
                    for gv in gx.iter_mut() {
                        *gv += gg;
                    }
                });
            }
            Op::MeanAxis0(x) => {
                let s = &self.nodes[x.0].shape;
                let (r, c) = (s[0], s[1]);
                self.add_grad(grads, *x, |gx| {
                    for i2 in 0..r {
                        for j in 0..c {
                            gx[i2 * c + j] += g[j] / r as f64;
                        }
                    }
                });
            }
            Op::Transpose(x) => {
                let s = &self.nodes[x.0].shape;
                let (r, c) = (s[0], s[1]);
                self.add_grad(grads, *x, |gx| {
                    for i2 in 0..r {
                        for j in 0..c {
                            gx[i2 * c + j] += g[j * r + i2];
                        }
                    }
                });
            }
            Op::Concat { parts, axis } => {
                let total_cols = node.shape[1];
                if *axis == 0 {
                    let mut off = 0;
                    for &p in parts {
                        let len = self.nodes[p.0].data.len();
                        self.add_grad(grads, p, |gp| {
                            for (gv, &gg) in gp.iter_mut().zip(&g[off..off + len]) {
                                *gv += gg;
                            }
                        });
                        off += len;
                    }
                } else {
                    let mut col_off = 0;
                    for &p in parts {
                        let (r, c) = self.rows_cols(p);
                        self.add_grad(grads, p, |gp| {
                            for i2 in 0..r {
                                for j in 0..c {
                                    gp[i2 * c + j] += g[i2 * total_cols + col_off + j];
                                }
                            }
                        });
                        col_off += c;
                    }
                }
            }
            Op::Slice {
                x,
                axis,
                start,
                len,
            } => {
                let (_, c) = self.rows_cols(*x);
                if *axis == 0 {
                    self.add_grad(grads, *x, |gx| {
                        for (gv, &gg) in gx[start * c..(start + len) * c].iter_mut().zip(g) {
                            *gv += gg;
                        }
                    });
                } else {
                    let r_out = node.shape[0];
                    self.add_grad(grads, *x, |gx| {
                        for i2 in 0..r_out {
                            for j in 0..*len {
                                gx[i2 * c + start + j] += g[i2 * len + j];
                            }
                        }
                    });
                }
            }
            Op::SelectCols { x, cols } => {
                let (r, c) = self.rows_cols(*x);
                self.add_grad(grads, *x, |gx| {
                    for i2 in 0..r {
                        for (jj, &j) in cols.iter().enumerate() {
                            gx[i2 * c + j] += g[i2 * cols.len() + jj];
                        }
                    }
                });
            }
            Op::ExpandRow { v, rows } => {
                let c = self.nodes[v.0].data.len();
                self.add_grad(grads, *v, |gv| {
                    for i2 in 0..*rows {
                        for j in 0..c {
                            gv[j] += g[i2 * c + j];
                        }
                    }
                });
            }
            Op::ExpandCol { v, cols } => {
                let r = self.nodes[v.0].data.len();
                self.add_grad(grads, *v, |gv| {
                    for i2 in 0..r {
                        for j in 0..*cols {
                            gv[i2] += g[i2 * cols + j];
                        }
                    }
                });
            }
            Op::Reshape(x) => {
                self.add_grad(grads, *x, |gx| {
                    for (gv, &gg) in gx.iter_mut().zip(g) {
                        *gv += gg;
                    }
                });
            }
            Op::MovingAverage { x, kernel } => {
                let (r, c) = self.rows_cols(*x);
                let h = (kernel - 1) / 2;
                let inv_k = 1.0 / *kernel as f64;
                self.add_grad(grads, *x, |gx| {
                    for j in 0..c {
                        for t in 0..r {
                            let gg = g[t * c + j] * inv_k;
                            for w in 0..*kernel {
                                let idx = (t + w).saturating_sub(h).min(r - 1);
                                gx[idx * c + j] += gg;
                            }
                        }
                    }
                });
            }
            Op::Conv1d {
                x,
                w,
                dilation,
                causal,
            } => {
                let sx = &self.nodes[x.0].shape;
                let sw = &self.nodes[w.0].shape;
                let (t_len, c_in) = (sx[0], sx[1]);
                let (k, c_out) = (sw[0], sw[2]);
                let dx = &self.nodes[x.0].data;
                let dw = &self.nodes[w.0].data;
                self.add_grad(grads, *x, |gx| {
                    for t in 0..t_len {
                        for j in 0..k {
                            let Some(src) = conv_src_index(t, j, k, *dilation, *causal) else {
                                continue;
                            };
                            if src >= t_len {
                                continue;
                            }
                            for ci in 0..c_in {
                                let mut acc = 0.0;
                                for co in 0..c_out {
                                    acc += g[t * c_out + co] * dw[(j * c_in + ci) * c_out + co];
                                }
                                gx[src * c_in + ci] += acc;
                            }
                        }
                    }
                });
                self.add_grad(grads, *w, |gw| {
                    for t in 0..t_len {
                        for j in 0..k {
                            let Some(src) = conv_src_index(t, j, k, *dilation, *causal) else {
                                continue;
                            };
                            if src >= t_len {
                                continue;
                            }
                            for ci in 0..c_in {
                                let xv = dx[src * c_in + ci];
                                if xv == 0.0 {
                                    continue;
                                }
                                for co in 0..c_out {
                                    gw[(j * c_in + ci) * c_out + co] += xv * g[t * c_out + co];
                                }
                            }
                        }
                    }
                });
            }
            Op::Dropout { x, mask } => {
                self.add_grad(grads, *x, |gx| {
                    for ((gv, &gg), &m) in gx.iter_mut().zip(g).zip(mask) {
                        *gv += gg * m;
                    }
                });
            }
            Op::Rfft(x) => {
                let (n, c) = self.rows_cols(*x);
                let f = n / 2 + 1;
                self.add_grad(grads, *x, |gx| {
                    for t in 0..n {
                        for k in 0..f {
                            let theta = 2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
                            let (s, co) = theta.sin_cos();
                            for j in 0..c {
                                gx[t * c + j] += g[k * c + j] * co - g[(f + k) * c + j] * s;
                            }
                        }
                    }
                });
            }
            Op::Irfft { x, out_len } => {
                let n = *out_len;
                let f = n / 2 + 1;
                let c = node.shape[1];
                self.add_grad(grads, *x, |gx| {
                    for k in 0..f {
                        let w = spectrum_weight(k, n) / n as f64;
                        for t in 0..n {
                            let theta = 2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
                            let (s, co) = theta.sin_cos();
                            for j in 0..c {
                                let gg = g[t * c + j];
                                gx[k * c + j] += w * gg * co;
                                gx[(f + k) * c + j] -= w * gg * s;
                            }
                        }
                    }
                });
            }
        }
    }
}

/// Weight of half-spectrum bin k when reconstructing a length-n real series.
fn spectrum_weight(k: usize, n: usize) -> f64 {
    if k == 0 || (n % 2 == 0 && k == n / 2) {
        1.0
    } else {
        2.0
    }
}

/// Input row read by output position t, tap j. None when the tap falls in the pad.
fn conv_src_index(t: usize, j: usize, k: usize, dilation: usize, causal: bool) -> Option<usize> {
    if causal {
        let back = (k - 1 - j) * dilation;
        t.checked_sub(back)
    } else {
        let h = (k - 1) / 2;
        (t + j * dilation).checked_sub(h * dilation)
    }
}
