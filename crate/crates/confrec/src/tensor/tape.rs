//! Recorded-operation computation graph.
//!
//! Operations execute eagerly when recorded (define-by-run); the tape keeps
//! the operation kind, input ids and the resulting value for every node.
//! `backward` walks the tape in reverse, accumulating gradients in `f64`.
//! `shadow_eval` recomputes every node in `f64` with selected leaf values
//! overridden, which is what finite-difference oracles evaluate against.

use super::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Concat(Vec<NodeId>),
    ConcatCols(NodeId, NodeId),
    ConcatRows(NodeId, NodeId),
    StackRows(Vec<NodeId>),
    Scale(NodeId, NodeId),
    ScaleConst(NodeId, f32),
    ScaleRows(NodeId, NodeId),
    Sum(NodeId),
    RowSums(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Softmax {
        input: NodeId,
        tau: f32,
    },
    SegmentSoftmax {
        input: NodeId,
        segments: Vec<usize>,
        tau: f32,
    },
    SegmentWeightedSum {
        weights: NodeId,
        values: NodeId,
        segments: Vec<usize>,
    },
    Gather {
        table: NodeId,
        indices: Vec<usize>,
    },
    Conv1d {
        input: NodeId,
        kernel: NodeId,
        bias: NodeId,
    },
    MaxOverTime(NodeId),
    Reshape(NodeId),
    Bce {
        probs: NodeId,
        labels: Vec<f32>,
    },
}

struct Node {
    op: Op,
    value: Tensor,
}

/// Recorded computation graph over [`Tensor`] values.
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-node gradients produced by [`Tape::backward`], stored in `f64`.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. node `id`, or `None` if the loss does not
    /// depend on it.
    pub fn get(&self, id: NodeId) -> Option<&[f64]> {
        self.grads[id.0].as_deref()
    }

    /// Gradient as an owned vector, zeros when the node is unreachable.
    pub fn wrt(&self, id: NodeId, numel: usize) -> Vec<f64> {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => vec![0.0; numel],
        }
    }
}

// Float abstraction so the forward kernels run in f32 during recording and in
// f64 during shadow evaluation.
trait Real:
    Copy
    + PartialOrd
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f32(x: f32) -> Self;
    fn from_f64(x: f64) -> Self;
    fn exp(self) -> Self;
    fn tanh(self) -> Self;
    fn ln(self) -> Self;
}

impl Real for f32 {
    const ZERO: f32 = 0.0;
    const ONE: f32 = 1.0;
    fn from_f32(x: f32) -> f32 {
        x
    }
    fn from_f64(x: f64) -> f32 {
        x as f32
    }
    fn exp(self) -> f32 {
        f32::exp(self)
    }
    fn tanh(self) -> f32 {
        f32::tanh(self)
    }
    fn ln(self) -> f32 {
        f32::ln(self)
    }
}

impl Real for f64 {
    const ZERO: f64 = 0.0;
    const ONE: f64 = 1.0;
    fn from_f32(x: f32) -> f64 {
        x as f64
    }
    fn from_f64(x: f64) -> f64 {
        x
    }
    fn exp(self) -> f64 {
        f64::exp(self)
    }
    fn tanh(self) -> f64 {
        f64::tanh(self)
    }
    fn ln(self) -> f64 {
        f64::ln(self)
    }
}

trait ValSource<T> {
    fn val(&self, id: NodeId) -> (&[T], &[usize]);
}

struct TapeVals<'a>(&'a [Node]);

impl ValSource<f32> for TapeVals<'_> {
    fn val(&self, id: NodeId) -> (&[f32], &[usize]) {
        let n = &self.0[id.0];
        (n.value.data(), n.value.shape())
    }
}

struct ShadowVals<'a> {
    values: &'a [Vec<f64>],
    shapes: &'a [Node],
}

impl ValSource<f64> for ShadowVals<'_> {
    fn val(&self, id: NodeId) -> (&[f64], &[usize]) {
        (&self.values[id.0], self.shapes[id.0].value.shape())
    }
}

fn validate_segments(segments: &[usize], len: usize) {
    assert!(
        segments.len() >= 2 && segments[0] == 0 && *segments.last().unwrap() == len,
        "segments {:?} do not cover length {}",
        segments,
        len
    );
    assert!(
        segments.windows(2).all(|w| w[0] <= w[1]),
        "segments must be non-decreasing: {:?}",
        segments
    );
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

    /// Forward value of a node.
    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op, value });
        id
    }

    fn record(&mut self, op: Op) -> NodeId {
        let shape = self.infer_shape(&op);
        let data = eval_op::<f32>(&op, &shape, &TapeVals(&self.nodes));
        self.push(op, Tensor::new(shape, data))
    }

    /// Insert a leaf (input or parameter) node.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, value)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.record(Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.record(Op::Add(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.record(Op::Mul(a, b))
    }

    /// Concatenate 1-D tensors end to end.
    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        self.record(Op::Concat(parts.to_vec()))
    }

    /// Concatenate two 2-D tensors along the column axis.
    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.record(Op::ConcatCols(a, b))
    }

    /// Concatenate two 2-D tensors along the row axis.
    pub fn concat_rows(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.record(Op::ConcatRows(a, b))
    }

    /// Stack 1-D tensors of equal length into a matrix, one per row.
    pub fn stack_rows(&mut self, rows: &[NodeId]) -> NodeId {
        self.record(Op::StackRows(rows.to_vec()))
    }

    /// Multiply a tensor by a scalar node (shape `[1]`).
    pub fn scale(&mut self, tensor: NodeId, scalar: NodeId) -> NodeId {
        self.record(Op::Scale(tensor, scalar))
    }

    pub fn scale_const(&mut self, tensor: NodeId, c: f32) -> NodeId {
        self.record(Op::ScaleConst(tensor, c))
    }

    /// Scale row `i` of a matrix by `weights[i]`.
    pub fn scale_rows(&mut self, matrix: NodeId, weights: NodeId) -> NodeId {
        self.record(Op::ScaleRows(matrix, weights))
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        self.record(Op::Sum(a))
    }

    /// Per-row sums of a matrix, shape `[rows]`.
    pub fn row_sums(&mut self, a: NodeId) -> NodeId {
        self.record(Op::RowSums(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.record(Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.record(Op::Sigmoid(a))
    }

    /// Softmax over a 1-D tensor with temperature `tau`:
    /// `out_i = exp(x_i / tau) / sum_l exp(x_l / tau)`.
    pub fn softmax_with_temperature(&mut self, input: NodeId, tau: f32) -> NodeId {
        assert!(tau > 0.0, "softmax temperature must be positive, got {tau}");
        self.record(Op::Softmax { input, tau })
    }

    /// Independent softmax within each segment of a 1-D tensor. `segments`
    /// holds offsets (`segments[s]..segments[s+1]` is segment `s`). Empty
    /// segments are allowed and contribute nothing.
    pub fn segment_softmax(&mut self, input: NodeId, segments: Vec<usize>, tau: f32) -> NodeId {
        assert!(tau > 0.0, "softmax temperature must be positive, got {tau}");
        self.record(Op::SegmentSoftmax {
            input,
            segments,
            tau,
        })
    }

    /// Per segment `s`: `out[s, :] = sum_{e in segment} weights[e] * values[e, :]`.
    /// Empty segments yield zero rows.
    pub fn segment_weighted_sum(
        &mut self,
        weights: NodeId,
        values: NodeId,
        segments: Vec<usize>,
    ) -> NodeId {
        self.record(Op::SegmentWeightedSum {
            weights,
            values,
            segments,
        })
    }

    /// Row lookup: gathers `indices` rows of a 2-D tensor into a new matrix.
    /// Serves both embedding-table lookups and row selection from
    /// intermediate results; gradients scatter-add back into the source.
    pub fn gather(&mut self, table: NodeId, indices: Vec<usize>) -> NodeId {
        self.record(Op::Gather { table, indices })
    }

    /// 1-D convolution over the time axis with zero padding that preserves
    /// sequence length. Input `[time, ch]` or `[batch, time, ch]`, kernel
    /// `[window, ch, out]` (window odd), bias `[out]`.
    pub fn conv1d(&mut self, input: NodeId, kernel: NodeId, bias: NodeId) -> NodeId {
        self.record(Op::Conv1d {
            input,
            kernel,
            bias,
        })
    }

    /// Max over the time axis: `[time, ch] -> [ch]` or `[batch, time, ch] -> [batch, ch]`.
    pub fn max_over_time_pool(&mut self, input: NodeId) -> NodeId {
        self.record(Op::MaxOverTime(input))
    }

    pub fn reshape(&mut self, input: NodeId, shape: Vec<usize>) -> NodeId {
        let numel: usize = shape.iter().product();
        assert_eq!(
            numel,
            self.nodes[input.0].value.numel(),
            "reshape to {:?} changes element count of {:?}",
            shape,
            self.nodes[input.0].value.shape()
        );
        let data = self.nodes[input.0].value.data().to_vec();
        self.push(Op::Reshape(input), Tensor::new(shape, data))
    }

    /// Mean binary cross-entropy over predicted probabilities, with
    /// predictions clamped to `[1e-7, 1 - 1e-7]` before the logarithms.
    pub fn binary_cross_entropy_mean(&mut self, probs: NodeId, labels: Vec<f32>) -> NodeId {
        self.record(Op::Bce { probs, labels })
    }

    fn infer_shape(&self, op: &Op) -> Vec<usize> {
        let s = |id: &NodeId| self.nodes[id.0].value.shape();
        match op {
            Op::Leaf | Op::Reshape(_) => unreachable!("shape set at push time"),
            Op::MatMul(a, b) => {
                let (sa, sb) = (s(a), s(b));
                match (sa.len(), sb.len()) {
                    (2, 2) => {
                        assert_eq!(sa[1], sb[0], "matmul shape mismatch: {:?} x {:?}", sa, sb);
                        vec![sa[0], sb[1]]
                    }
                    (1, 2) => {
                        assert_eq!(sa[0], sb[0], "matmul shape mismatch: {:?} x {:?}", sa, sb);
                        vec![sb[1]]
                    }
                    (2, 1) => {
                        assert_eq!(sa[1], sb[0], "matmul shape mismatch: {:?} x {:?}", sa, sb);
                        vec![sa[0]]
                    }
                    (1, 1) => {
                        assert_eq!(sa[0], sb[0], "matmul shape mismatch: {:?} x {:?}", sa, sb);
                        vec![1]
                    }
                    _ => panic!("matmul expects 1-D or 2-D operands: {:?} x {:?}", sa, sb),
                }
            }
            Op::Add(a, b) => {
                let (sa, sb) = (s(a), s(b));
                if sa == sb {
                    sa.to_vec()
                } else if sa.len() == 2 && sb.len() == 1 && sa[1] == sb[0] {
                    sa.to_vec()
                } else {
                    panic!("add shape mismatch: {:?} + {:?}", sa, sb)
                }
            }
            Op::Mul(a, b) => {
                let (sa, sb) = (s(a), s(b));
                assert_eq!(sa, sb, "mul shape mismatch: {:?} * {:?}", sa, sb);
                sa.to_vec()
            }
            Op::Concat(parts) => {
                assert!(!parts.is_empty(), "concat of zero tensors");
                let mut total = 0;
                for p in parts {
                    let sp = s(p);
                    assert_eq!(sp.len(), 1, "concat expects 1-D parts, got {:?}", sp);
                    total += sp[0];
                }
                vec![total]
            }
            Op::ConcatCols(a, b) => {
                let (sa, sb) = (s(a), s(b));
                assert!(
                    sa.len() == 2 && sb.len() == 2 && sa[0] == sb[0],
                    "concat_cols shape mismatch: {:?} | {:?}",
                    sa,
                    sb
                );
                vec![sa[0], sa[1] + sb[1]]
            }
            Op::ConcatRows(a, b) => {
                let (sa, sb) = (s(a), s(b));
                assert!(
                    sa.len() == 2 && sb.len() == 2 && sa[1] == sb[1],
                    "concat_rows shape mismatch: {:?} / {:?}",
                    sa,
                    sb
                );
                vec![sa[0] + sb[0], sa[1]]
            }
            Op::StackRows(rows) => {
                assert!(!rows.is_empty(), "stack_rows of zero tensors");
                let c = s(&rows[0])[0];
                for r in rows {
                    let sr = s(r);
                    assert!(
                        sr.len() == 1 && sr[0] == c,
                        "stack_rows expects 1-D tensors of length {}, got {:?}",
                        c,
                        sr
                    );
                }
                vec![rows.len(), c]
            }
            Op::Scale(t, scalar) => {
                assert_eq!(
                    s(scalar),
                    &[1],
                    "scale expects a [1] scalar node, got {:?}",
                    s(scalar)
                );
                s(t).to_vec()
            }
            Op::ScaleConst(t, _) => s(t).to_vec(),
            Op::ScaleRows(m, w) => {
                let (sm, sw) = (s(m), s(w));
                assert!(
                    sm.len() == 2 && sw.len() == 1 && sm[0] == sw[0],
                    "scale_rows shape mismatch: {:?} rows vs weights {:?}",
                    sm,
                    sw
                );
                sm.to_vec()
            }
            Op::Sum(_) => vec![1],
            Op::RowSums(m) => {
                let sm = s(m);
                assert_eq!(sm.len(), 2, "row_sums expects 2-D, got {:?}", sm);
                vec![sm[0]]
            }
            Op::Tanh(a) | Op::Sigmoid(a) => s(a).to_vec(),
            Op::Softmax { input, .. } => {
                let si = s(input);
                assert!(
                    si.len() == 1 && si[0] >= 1,
                    "softmax expects nonempty 1-D input, got {:?}",
                    si
                );
                si.to_vec()
            }
            Op::SegmentSoftmax {
                input, segments, ..
            } => {
                let si = s(input);
                assert_eq!(si.len(), 1, "segment_softmax expects 1-D, got {:?}", si);
                validate_segments(segments, si[0]);
                si.to_vec()
            }
            Op::SegmentWeightedSum {
                weights,
                values,
                segments,
            } => {
                let (sw, sv) = (s(weights), s(values));
                assert!(
                    sw.len() == 1 && sv.len() == 2 && sw[0] == sv[0],
                    "segment_weighted_sum shape mismatch: weights {:?}, values {:?}",
                    sw,
                    sv
                );
                validate_segments(segments, sw[0]);
                vec![segments.len() - 1, sv[1]]
            }
            Op::Gather { table, indices } => {
                let st = s(table);
                assert_eq!(st.len(), 2, "gather expects 2-D table, got {:?}", st);
                for &i in indices {
                    assert!(i < st[0], "gather index {} out of {} rows", i, st[0]);
                }
                vec![indices.len(), st[1]]
            }
            Op::Conv1d {
                input,
                kernel,
                bias,
            } => {
                let (si, sk, sb) = (s(input), s(kernel), s(bias));
                assert!(
                    sk.len() == 3 && sk[0] % 2 == 1,
                    "conv1d kernel must be [window, ch, out] with odd window, got {:?}",
                    sk
                );
                assert!(
                    sb.len() == 1 && sb[0] == sk[2],
                    "conv1d bias {:?} does not match kernel out {:?}",
                    sb,
                    sk
                );
                match si.len() {
                    2 => {
                        assert_eq!(si[1], sk[1], "conv1d channels: input {:?} kernel {:?}", si, sk);
                        vec![si[0], sk[2]]
                    }
                    3 => {
                        assert_eq!(si[2], sk[1], "conv1d channels: input {:?} kernel {:?}", si, sk);
                        vec![si[0], si[1], sk[2]]
                    }
                    _ => panic!("conv1d expects [time, ch] or [batch, time, ch], got {:?}", si),
                }
            }
            Op::MaxOverTime(input) => {
                let si = s(input);
                match si.len() {
                    2 => vec![si[1]],
                    3 => vec![si[0], si[2]],
                    _ => panic!(
                        "max_over_time_pool expects [time, ch] or [batch, time, ch], got {:?}",
                        si
                    ),
                }
            }
            Op::Bce { probs, labels } => {
                let sp = s(probs);
                assert!(
                    sp.len() == 1 && sp[0] == labels.len() && !labels.is_empty(),
                    "bce expects 1-D probs matching {} labels, got {:?}",
                    labels.len(),
                    sp
                );
                vec![1]
            }
        }
    }

    /// Reverse-mode gradients of a scalar `loss` node with respect to every
    /// node it depends on. Accumulation runs in `f64`.
    pub fn backward(&self, loss: NodeId) -> Gradients {
        assert_eq!(
            self.nodes[loss.0].value.numel(),
            1,
            "backward requires a scalar loss, got shape {:?}",
            self.nodes[loss.0].value.shape()
        );
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let gout = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            self.backward_node(i, &gout, &mut grads);
            grads[i] = Some(gout);
        }
        Gradients { grads }
    }

    fn backward_node(&self, i: usize, gout: &[f64], grads: &mut [Option<Vec<f64>>]) {
        fn acc(grads: &mut [Option<Vec<f64>>], id: NodeId, n: usize) -> &mut Vec<f64> {
            grads[id.0].get_or_insert_with(|| vec![0.0; n])
        }
        let val = |id: NodeId| self.nodes[id.0].value.data();
        let shp = |id: NodeId| self.nodes[id.0].value.shape();
        let numel = |id: NodeId| self.nodes[id.0].value.numel();

        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (sa, sb) = (shp(*a), shp(*b));
                // Normalize to (m, k) x (k, n).
                let (m, k, n) = match (sa.len(), sb.len()) {
                    (2, 2) => (sa[0], sa[1], sb[1]),
                    (1, 2) => (1, sa[0], sb[1]),
                    (2, 1) => (sa[0], sa[1], 1),
                    (1, 1) => (1, sa[0], 1),
                    _ => unreachable!(),
                };
                let (av, bv) = (val(*a), val(*b));
                {
                    let ga = acc(grads, *a, m * k);
                    for r in 0..m {
                        for c in 0..n {
                            let g = gout[r * n + c];
                            if g == 0.0 {
                                continue;
                            }
                            for t in 0..k {
                                ga[r * k + t] += g * bv[t * n + c] as f64;
                            }
                        }
                    }
                }
                {
                    let gb = acc(grads, *b, k * n);
                    for r in 0..m {
                        for t in 0..k {
                            let a_rt = av[r * k + t] as f64;
                            if a_rt == 0.0 {
                                continue;
                            }
                            for c in 0..n {
                                gb[t * n + c] += a_rt * gout[r * n + c];
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                let (sa, sb) = (shp(*a).to_vec(), shp(*b).to_vec());
                {
                    let ga = acc(grads, *a, numel(*a));
                    for (g, go) in ga.iter_mut().zip(gout) {
                        *g += *go;
                    }
                }
                if sa == sb {
                    let gb = acc(grads, *b, numel(*b));
                    for (g, go) in gb.iter_mut().zip(gout) {
                        *g += *go;
                    }
                } else {
                    // [r, c] + [c]: column-wise reduction into b.
                    let (r, c) = (sa[0], sa[1]);
                    let gb = acc(grads, *b, c);
                    for row in 0..r {
                        for col in 0..c {
                            gb[col] += gout[row * c + col];
                        }
                    }
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                {
                    let ga = acc(grads, *a, numel(*a));
                    for j in 0..ga.len() {
                        ga[j] += gout[j] * bv[j] as f64;
                    }
                }
                let gb = acc(grads, *b, numel(*b));
                for j in 0..gb.len() {
                    gb[j] += gout[j] * av[j] as f64;
                }
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let n = numel(*p);
                    let gp = acc(grads, *p, n);
                    for j in 0..n {
                        gp[j] += gout[off + j];
                    }
                    off += n;
                }
            }
            Op::ConcatCols(a, b) => {
                let (sa, sb) = (shp(*a).to_vec(), shp(*b).to_vec());
                let (r, ca, cb) = (sa[0], sa[1], sb[1]);
                let c = ca + cb;
                {
                    let ga = acc(grads, *a, r * ca);
                    for row in 0..r {
                        for col in 0..ca {
                            ga[row * ca + col] += gout[row * c + col];
                        }
                    }
                }
                let gb = acc(grads, *b, r * cb);
                for row in 0..r {
                    for col in 0..cb {
                        gb[row * cb + col] += gout[row * c + ca + col];
                    }
                }
            }
            Op::ConcatRows(a, b) => {
                let na = numel(*a);
                {
                    let ga = acc(grads, *a, na);
                    for j in 0..na {
                        ga[j] += gout[j];
                    }
                }
                let nb = numel(*b);
                let gb = acc(grads, *b, nb);
                for j in 0..nb {
                    gb[j] += gout[na + j];
                }
            }
            Op::StackRows(rows) => {
                let c = numel(rows[0]);
                for (r, id) in rows.iter().enumerate() {
                    let g = acc(grads, *id, c);
                    for j in 0..c {
                        g[j] += gout[r * c + j];
                    }
                }
            }
            Op::Scale(t, scalar) => {
                let sval = val(*scalar)[0] as f64;
                let tv = val(*t);
                {
                    let gt = acc(grads, *t, numel(*t));
                    for j in 0..gt.len() {
                        gt[j] += gout[j] * sval;
                    }
                }
                let gs = acc(grads, *scalar, 1);
                gs[0] += gout
                    .iter()
                    .zip(tv)
                    .map(|(g, v)| g * *v as f64)
                    .sum::<f64>();
            }
            Op::ScaleConst(t, cst) => {
                let c = *cst as f64;
                let gt = acc(grads, *t, numel(*t));
                for j in 0..gt.len() {
                    gt[j] += gout[j] * c;
                }
            }
            Op::ScaleRows(m, w) => {
                let sm = shp(*m).to_vec();
                let (r, c) = (sm[0], sm[1]);
                let (mv, wv) = (val(*m), val(*w));
                {
                    let gm = acc(grads, *m, r * c);
                    for row in 0..r {
                        let wr = wv[row] as f64;
                        for col in 0..c {
                            gm[row * c + col] += gout[row * c + col] * wr;
                        }
                    }
                }
                let gw = acc(grads, *w, r);
                for row in 0..r {
                    let mut dot = 0.0;
                    for col in 0..c {
                        dot += gout[row * c + col] * mv[row * c + col] as f64;
                    }
                    gw[row] += dot;
                }
            }
            Op::Sum(a) => {
                let ga = acc(grads, *a, numel(*a));
                for g in ga.iter_mut() {
                    *g += gout[0];
                }
            }
            Op::RowSums(m) => {
                let sm = shp(*m).to_vec();
                let (r, c) = (sm[0], sm[1]);
                let gm = acc(grads, *m, r * c);
                for row in 0..r {
                    for col in 0..c {
                        gm[row * c + col] += gout[row];
                    }
                }
            }
            Op::Tanh(a) => {
                let yv = self.nodes[i].value.data();
                let ga = acc(grads, *a, numel(*a));
                for j in 0..ga.len() {
                    let y = yv[j] as f64;
                    ga[j] += gout[j] * (1.0 - y * y);
                }
            }
            Op::Sigmoid(a) => {
                let yv = self.nodes[i].value.data();
                let ga = acc(grads, *a, numel(*a));
                for j in 0..ga.len() {
                    let y = yv[j] as f64;
                    ga[j] += gout[j] * y * (1.0 - y);
                }
            }
            Op::Softmax { input, tau } => {
                let yv = self.nodes[i].value.data();
                softmax_backward(gout, yv, 0, yv.len(), *tau as f64, {
                    acc(grads, *input, yv.len())
                });
            }
            Op::SegmentSoftmax {
                input,
                segments,
                tau,
            } => {
                let yv = self.nodes[i].value.data();
                let gi = acc(grads, *input, yv.len());
                for s in segments.windows(2) {
                    softmax_backward(gout, yv, s[0], s[1], *tau as f64, gi);
                }
            }
            Op::SegmentWeightedSum {
                weights,
                values,
                segments,
            } => {
                let c = shp(*values)[1];
                let (wv, vv) = (val(*weights), val(*values));
                {
                    let gw = acc(grads, *weights, numel(*weights));
                    for (s, seg) in segments.windows(2).enumerate() {
                        for e in seg[0]..seg[1] {
                            let mut dot = 0.0;
                            for col in 0..c {
                                dot += gout[s * c + col] * vv[e * c + col] as f64;
                            }
                            gw[e] += dot;
                        }
                    }
                }
                let gv = acc(grads, *values, numel(*values));
                for (s, seg) in segments.windows(2).enumerate() {
                    for e in seg[0]..seg[1] {
                        let we = wv[e] as f64;
                        for col in 0..c {
                            gv[e * c + col] += gout[s * c + col] * we;
                        }
                    }
                }
            }
            Op::Gather { table, indices } => {
                let c = shp(*table)[1];
                let gt = acc(grads, *table, numel(*table));
                for (g, &row) in indices.iter().enumerate() {
                    for col in 0..c {
                        gt[row * c + col] += gout[g * c + col];
                    }
                }
            }
            Op::Conv1d {
                input,
                kernel,
                bias,
            } => {
                let si = shp(*input).to_vec();
                let sk = shp(*kernel).to_vec();
                let (batch, time) = if si.len() == 3 { (si[0], si[1]) } else { (1, si[0]) };
                let (w, ch, out) = (sk[0], sk[1], sk[2]);
                let half = w / 2;
                let (iv, kv) = (val(*input), val(*kernel));
                {
                    let gi = acc(grads, *input, numel(*input));
                    for b in 0..batch {
                        for t in 0..time {
                            for o in 0..out {
                                let g = gout[(b * time + t) * out + o];
                                if g == 0.0 {
                                    continue;
                                }
                                for dw in 0..w {
                                    let ti = t as isize + dw as isize - half as isize;
                                    if ti < 0 || ti >= time as isize {
                                        continue;
                                    }
                                    let ti = ti as usize;
                                    for cc in 0..ch {
                                        gi[(b * time + ti) * ch + cc] +=
                                            g * kv[(dw * ch + cc) * out + o] as f64;
                                    }
                                }
                            }
                        }
                    }
                }
                {
                    let gk = acc(grads, *kernel, numel(*kernel));
                    for b in 0..batch {
                        for t in 0..time {
                            for dw in 0..w {
                                let ti = t as isize + dw as isize - half as isize;
                                if ti < 0 || ti >= time as isize {
                                    continue;
                                }
                                let ti = ti as usize;
                                for cc in 0..ch {
                                    let x = iv[(b * time + ti) * ch + cc] as f64;
                                    if x == 0.0 {
                                        continue;
                                    }
                                    for o in 0..out {
                                        gk[(dw * ch + cc) * out + o] +=
                                            x * gout[(b * time + t) * out + o];
                                    }
                                }
                            }
                        }
                    }
                }
                let gb = acc(grads, *bias, out);
                for b in 0..batch {
                    for t in 0..time {
                        for o in 0..out {
                            gb[o] += gout[(b * time + t) * out + o];
                        }
                    }
                }
            }
            Op::MaxOverTime(input) => {
                let si = shp(*input).to_vec();
                let (batch, time, ch) = if si.len() == 3 {
                    (si[0], si[1], si[2])
                } else {
                    (1, si[0], si[1])
                };
                let iv = val(*input);
                let gi = acc(grads, *input, numel(*input));
                for b in 0..batch {
                    for c in 0..ch {
                        let mut best_t = 0;
                        let mut best = f32::NEG_INFINITY;
                        for t in 0..time {
                            let v = iv[(b * time + t) * ch + c];
                            if v > best {
                                best = v;
                                best_t = t;
                            }
                        }
                        gi[(b * time + best_t) * ch + c] += gout[b * ch + c];
                    }
                }
            }
            Op::Reshape(a) => {
                let ga = acc(grads, *a, numel(*a));
                for j in 0..ga.len() {
                    ga[j] += gout[j];
                }
            }
            Op::Bce { probs, labels } => {
                let pv = val(*probs);
                let n = labels.len() as f64;
                let gp = acc(grads, *probs, pv.len());
                let (lo, hi) = (1e-7f64, 1.0 - 1e-7f64);
                for j in 0..gp.len() {
                    let p = pv[j] as f64;
                    if p < lo || p > hi {
                        continue; // clamped: flat region
                    }
                    let y = labels[j] as f64;
                    gp[j] += gout[0] * (p - y) / (p * (1.0 - p)) / n;
                }
            }
        }
    }

    /// Re-evaluate every node in `f64`, optionally overriding leaf values.
    /// Returns the value buffer of each node in tape order. Non-leaf
    /// overrides are rejected.
    pub fn shadow_eval(&self, overrides: &[(NodeId, Vec<f64>)]) -> Vec<Vec<f64>> {
        let mut values: Vec<Vec<f64>> = Vec::with_capacity(self.nodes.len());
        for (i, node) in self.nodes.iter().enumerate() {
            let v = if let Some((_, ov)) = overrides.iter().find(|(id, _)| id.0 == i) {
                assert!(
                    matches!(node.op, Op::Leaf),
                    "shadow_eval override on non-leaf node {}",
                    i
                );
                assert_eq!(ov.len(), node.value.numel());
                ov.clone()
            } else {
                match &node.op {
                    Op::Leaf => node.value.data().iter().map(|&x| x as f64).collect(),
                    op => eval_op::<f64>(
                        op,
                        node.value.shape(),
                        &ShadowVals {
                            values: &values,
                            shapes: &self.nodes,
                        },
                    ),
                }
            };
            values.push(v);
        }
        values
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn softmax_backward(gout: &[f64], y: &[f32], lo: usize, hi: usize, tau: f64, gi: &mut [f64]) {
    let mut dot = 0.0;
    for j in lo..hi {
        dot += gout[j] * y[j] as f64;
    }
    for j in lo..hi {
        gi[j] += y[j] as f64 * (gout[j] - dot) / tau;
    }
}

fn eval_op<T: Real>(op: &Op, out_shape: &[usize], src: &dyn ValSource<T>) -> Vec<T> {
    match op {
        Op::Leaf => unreachable!(),
        Op::Reshape(a) => src.val(*a).0.to_vec(),
        Op::MatMul(a, b) => {
            let (av, sa) = src.val(*a);
            let (bv, sb) = src.val(*b);
            let (m, k, n) = match (sa.len(), sb.len()) {
                (2, 2) => (sa[0], sa[1], sb[1]),
                (1, 2) => (1, sa[0], sb[1]),
                (2, 1) => (sa[0], sa[1], 1),
                (1, 1) => (1, sa[0], 1),
                _ => unreachable!(),
            };
            let mut out = vec![T::ZERO; m * n];
            for r in 0..m {
                for t in 0..k {
                    let a_rt = av[r * k + t];
                    if a_rt != T::ZERO {
                        let brow = &bv[t * n..(t + 1) * n];
                        let orow = &mut out[r * n..(r + 1) * n];
                        for c in 0..n {
                            orow[c] = orow[c] + a_rt * brow[c];
                        }
                    }
                }
            }
            out
        }
        Op::Add(a, b) => {
            let (av, sa) = src.val(*a);
            let (bv, sb) = src.val(*b);
            if sa == sb {
                av.iter().zip(bv).map(|(&x, &y)| x + y).collect()
            } else {
                let (r, c) = (sa[0], sa[1]);
                let mut out = Vec::with_capacity(r * c);
                for row in 0..r {
                    for col in 0..c {
                        out.push(av[row * c + col] + bv[col]);
                    }
                }
                out
            }
        }
        Op::Mul(a, b) => {
            let (av, _) = src.val(*a);
            let (bv, _) = src.val(*b);
            av.iter().zip(bv).map(|(&x, &y)| x * y).collect()
        }
        Op::Concat(parts) => {
            let mut out = Vec::with_capacity(out_shape[0]);
            for p in parts {
                out.extend_from_slice(src.val(*p).0);
            }
            out
        }
        Op::ConcatCols(a, b) => {
            let (av, sa) = src.val(*a);
            let (bv, sb) = src.val(*b);
            let (r, ca, cb) = (sa[0], sa[1], sb[1]);
            let mut out = Vec::with_capacity(r * (ca + cb));
            for row in 0..r {
                out.extend_from_slice(&av[row * ca..(row + 1) * ca]);
                out.extend_from_slice(&bv[row * cb..(row + 1) * cb]);
            }
            out
        }
        Op::ConcatRows(a, b) => {
            let mut out = src.val(*a).0.to_vec();
            out.extend_from_slice(src.val(*b).0);
            out
        }
        Op::StackRows(rows) => {
            let mut out = Vec::with_capacity(out_shape.iter().product());
            for r in rows {
                out.extend_from_slice(src.val(*r).0);
            }
            out
        }
        Op::Scale(t, scalar) => {
            let s = src.val(*scalar).0[0];
            src.val(*t).0.iter().map(|&x| x * s).collect()
        }
        Op::ScaleConst(t, c) => {
            let c = T::from_f32(*c);
            src.val(*t).0.iter().map(|&x| x * c).collect()
        }
        Op::ScaleRows(m, w) => {
            let (mv, sm) = src.val(*m);
            let (wv, _) = src.val(*w);
            let (r, c) = (sm[0], sm[1]);
            let mut out = Vec::with_capacity(r * c);
            for row in 0..r {
                for col in 0..c {
                    out.push(mv[row * c + col] * wv[row]);
                }
            }
            out
        }
        Op::Sum(a) => {
            let (av, _) = src.val(*a);
            let mut s = T::ZERO;
            for &x in av {
                s = s + x;
            }
            vec![s]
        }
        Op::RowSums(m) => {
            let (mv, sm) = src.val(*m);
            let (r, c) = (sm[0], sm[1]);
            (0..r)
                .map(|row| {
                    let mut s = T::ZERO;
                    for col in 0..c {
                        s = s + mv[row * c + col];
                    }
                    s
                })
                .collect()
        }
        Op::Tanh(a) => src.val(*a).0.iter().map(|&x| x.tanh()).collect(),
        Op::Sigmoid(a) => src
            .val(*a)
            .0
            .iter()
            .map(|&x| T::ONE / (T::ONE + (-x).exp()))
            .collect(),
        Op::Softmax { input, tau } => {
            let (xv, _) = src.val(*input);
            let mut out = vec![T::ZERO; xv.len()];
            softmax_forward(xv, 0, xv.len(), T::from_f32(*tau), &mut out);
            out
        }
        Op::SegmentSoftmax {
            input,
            segments,
            tau,
        } => {
            let (xv, _) = src.val(*input);
            let mut out = vec![T::ZERO; xv.len()];
            for s in segments.windows(2) {
                softmax_forward(xv, s[0], s[1], T::from_f32(*tau), &mut out);
            }
            out
        }
        Op::SegmentWeightedSum {
            weights,
            values,
            segments,
        } => {
            let (wv, _) = src.val(*weights);
            let (vv, sv) = src.val(*values);
            let c = sv[1];
            let mut out = vec![T::ZERO; (segments.len() - 1) * c];
            for (s, seg) in segments.windows(2).enumerate() {
                for e in seg[0]..seg[1] {
                    let we = wv[e];
                    for col in 0..c {
                        out[s * c + col] = out[s * c + col] + we * vv[e * c + col];
                    }
                }
            }
            out
        }
        Op::Gather { table, indices } => {
            let (tv, st) = src.val(*table);
            let c = st[1];
            let mut out = Vec::with_capacity(indices.len() * c);
            for &row in indices {
                out.extend_from_slice(&tv[row * c..(row + 1) * c]);
            }
            out
        }
        Op::Conv1d {
            input,
            kernel,
            bias,
        } => {
            let (iv, si) = src.val(*input);
            let (kv, sk) = src.val(*kernel);
            let (bv, _) = src.val(*bias);
            let (batch, time) = if si.len() == 3 { (si[0], si[1]) } else { (1, si[0]) };
            let (w, ch, out_ch) = (sk[0], sk[1], sk[2]);
            let half = w / 2;
            let mut out = vec![T::ZERO; batch * time * out_ch];
            for b in 0..batch {
                for t in 0..time {
                    let orow = &mut out[(b * time + t) * out_ch..(b * time + t + 1) * out_ch];
                    orow.copy_from_slice(&bv[..out_ch]);
                    for dw in 0..w {
                        let ti = t as isize + dw as isize - half as isize;
                        if ti < 0 || ti >= time as isize {
                            continue;
                        }
                        let ti = ti as usize;
                        for cc in 0..ch {
                            let x = iv[(b * time + ti) * ch + cc];
                            if x != T::ZERO {
                                let krow = &kv[(dw * ch + cc) * out_ch..(dw * ch + cc + 1) * out_ch];
                                for o in 0..out_ch {
                                    orow[o] = orow[o] + x * krow[o];
                                }
                            }
                        }
                    }
                }
            }
            out
        }
        Op::MaxOverTime(input) => {
            let (iv, si) = src.val(*input);
            let (batch, time, ch) = if si.len() == 3 {
                (si[0], si[1], si[2])
            } else {
                (1, si[0], si[1])
            };
            let mut out = Vec::with_capacity(batch * ch);
            for b in 0..batch {
                for c in 0..ch {
                    let mut best = iv[(b * time) * ch + c];
                    for t in 1..time {
                        let v = iv[(b * time + t) * ch + c];
                        if v > best {
                            best = v;
                        }
                    }
                    out.push(best);
                }
            }
            out
        }
        Op::Bce { probs, labels } => {
            let (pv, _) = src.val(*probs);
            let lo = T::from_f64(1e-7);
            let hi = T::ONE - lo;
            let mut total = T::ZERO;
            for (j, &p) in pv.iter().enumerate() {
                let p = if p < lo {
                    lo
                } else if p > hi {
                    hi
                } else {
                    p
                };
                let y = T::from_f32(labels[j]);
                total = total - (y * p.ln() + (T::ONE - y) * (T::ONE - p).ln());
            }
            vec![total / T::from_f64(labels.len() as f64)]
        }
    }
}

fn softmax_forward<T: Real>(x: &[T], lo: usize, hi: usize, tau: T, out: &mut [T]) {
    if lo == hi {
        return;
    }
    let mut mx = x[lo];
    for j in lo + 1..hi {
        if x[j] > mx {
            mx = x[j];
        }
    }
    let mut denom = T::ZERO;
    for j in lo..hi {
        let e = ((x[j] - mx) / tau).exp();
        out[j] = e;
        denom = denom + e;
    }
    for j in lo..hi {
        out[j] = out[j] / denom;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn softmax_of_constant_vector_is_uniform() {
        for tau in [0.5, 1.0, 7.0] {
            let mut tape = Tape::new();
            let x = tape.leaf(Tensor::from_vec(vec![2.5, 2.5, 2.5]));
            let y = tape.softmax_with_temperature(x, tau);
            for &v in tape.value(y).data() {
                assert!((v - 1.0 / 3.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn softmax_sums_to_one_and_is_permutation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let vals = Tensor::uniform(vec![5], 3.0, &mut rng);
            let perm = [3usize, 0, 4, 1, 2];
            let permuted: Vec<f32> = perm.iter().map(|&i| vals.data()[i]).collect();

            let mut tape = Tape::new();
            let a = tape.leaf(vals.clone());
            let b = tape.leaf(Tensor::from_vec(permuted));
            let sa = tape.softmax_with_temperature(a, 1.0);
            let sb = tape.softmax_with_temperature(b, 1.0);

            let sum: f32 = tape.value(sa).data().iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
            for (j, &i) in perm.iter().enumerate() {
                assert!((tape.value(sa).data()[i] - tape.value(sb).data()[j]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn softmax_high_temperature_limit_is_uniform() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(vec![-2.0, 0.5, 3.0, 1.0]));
        let y = tape.softmax_with_temperature(x, 1e6);
        for &v in tape.value(y).data() {
            assert!((v - 0.25).abs() < 1e-3);
        }
    }

    #[test]
    fn tanh_and_sigmoid_at_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(vec![0.0]));
        let t = tape.tanh(x);
        let s = tape.sigmoid(x);
        assert_eq!(tape.value(t).data()[0], 0.0);
        assert_eq!(tape.value(s).data()[0], 0.5);
    }

    #[test]
    fn conv1d_single_position_all_ones_kernel() {
        // Length-1 sequence, window 3 zero-padded: only the center tap lands.
        let mut tape = Tape::new();
        let input = tape.leaf(Tensor::new(vec![1, 1], vec![2.0]));
        let kernel = tape.leaf(Tensor::new(vec![3, 1, 1], vec![1.0, 1.0, 1.0]));
        let bias = tape.leaf(Tensor::from_vec(vec![0.0]));
        let out = tape.conv1d(input, kernel, bias);
        assert_eq!(tape.value(out).shape(), &[1, 1]);
        assert_eq!(tape.value(out).data(), &[2.0]);
    }

    #[test]
    fn conv1d_hand_case_length_three() {
        // input [1, 2, 3] single channel, kernel [1, 1, 1]:
        // out[0] = 0+1+2, out[1] = 1+2+3, out[2] = 2+3+0.
        let mut tape = Tape::new();
        let input = tape.leaf(Tensor::new(vec![3, 1], vec![1.0, 2.0, 3.0]));
        let kernel = tape.leaf(Tensor::new(vec![3, 1, 1], vec![1.0, 1.0, 1.0]));
        let bias = tape.leaf(Tensor::from_vec(vec![0.0]));
        let out = tape.conv1d(input, kernel, bias);
        assert_eq!(tape.value(out).data(), &[3.0, 6.0, 5.0]);
    }

    #[test]
    fn backward_of_sum_is_all_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![2, 3], vec![1.0, -2.0, 0.5, 3.0, 4.0, -1.0]));
        let loss = tape.sum(x);
        let grads = tape.backward(loss);
        assert_eq!(grads.get(x).unwrap(), &[1.0; 6]);
    }

    #[test]
    fn backward_of_sigmoid_dot_at_zero_weights() {
        // loss = sigmoid(w . x) at w = 0: d/dw = sigmoid'(0) * x = 0.25 * x.
        let xv = [1.5f32, -2.0, 0.5];
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::from_vec(vec![0.0; 3]));
        let x = tape.leaf(Tensor::from_vec(xv.to_vec()));
        let dot = tape.matmul(w, x);
        let loss = tape.sigmoid(dot);
        let grads = tape.backward(loss);
        let gw = grads.get(w).unwrap();
        for (g, xi) in gw.iter().zip(xv) {
            assert!((g - 0.25 * xi as f64).abs() < 1e-7);
        }
    }

    #[test]
    #[should_panic(expected = "scalar loss")]
    fn backward_rejects_non_scalar_loss() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(vec![1.0, 2.0]));
        let y = tape.tanh(x);
        tape.backward(y);
    }

    #[test]
    #[should_panic(expected = "matmul shape mismatch")]
    fn matmul_shape_mismatch_panics_with_shapes() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(vec![2, 3]));
        let b = tape.leaf(Tensor::zeros(vec![4, 2]));
        tape.matmul(a, b);
    }

    #[test]
    fn forward_values_are_deterministic() {
        let build = || {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let mut tape = Tape::new();
            let a = tape.leaf(Tensor::uniform(vec![4, 4], 1.0, &mut rng));
            let b = tape.leaf(Tensor::uniform(vec![4, 4], 1.0, &mut rng));
            let c = tape.matmul(a, b);
            let d = tape.tanh(c);
            let e = tape.sum(d);
            tape.value(e).data().to_vec()
        };
        assert_eq!(build(), build());
    }

    #[test]
    fn empty_segment_softmax_and_weighted_sum() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(vec![1.0, 2.0]));
        let sm = tape.segment_softmax(x, vec![0, 2, 2], 1.0);
        let vals = tape.leaf(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]));
        let pooled = tape.segment_weighted_sum(sm, vals, vec![0, 2, 2]);
        assert_eq!(tape.value(pooled).shape(), &[2, 2]);
        // Second segment is empty: zero row.
        assert_eq!(&tape.value(pooled).data()[2..], &[0.0, 0.0]);
    }

    #[test]
    fn shadow_eval_matches_f32_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::uniform(vec![3, 2], 1.0, &mut rng));
        let b = tape.leaf(Tensor::uniform(vec![2, 3], 1.0, &mut rng));
        let c = tape.matmul(a, b);
        let d = tape.tanh(c);
        let e = tape.sum(d);
        let shadow = tape.shadow_eval(&[]);
        assert!((shadow[e.index()][0] - tape.value(e).item() as f64).abs() < 1e-6);
    }

    // Compact finite-difference sanity check on a three-layer graph. The
    // exhaustive per-op sweep lives in tests/gradcheck.rs.
    #[test]
    fn finite_difference_agreement_three_layer_graph() {
        for seed in 0..3u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut tape = Tape::new();
            let x = tape.leaf(Tensor::uniform(vec![3], 1.0, &mut rng));
            let w1 = tape.leaf(Tensor::uniform(vec![3, 4], 1.0, &mut rng));
            let w2 = tape.leaf(Tensor::uniform(vec![4, 2], 1.0, &mut rng));
            let h1 = tape.matmul(x, w1);
            let a1 = tape.tanh(h1);
            let h2 = tape.matmul(a1, w2);
            let a2 = tape.sigmoid(h2);
            let loss = tape.sum(a2);

            let grads = tape.backward(loss);
            let eps = 1e-4;
            for leaf in [x, w1, w2] {
                let base: Vec<f64> = tape.value(leaf).data().iter().map(|&v| v as f64).collect();
                let g = grads.get(leaf).unwrap();
                for j in 0..base.len() {
                    let mut plus = base.clone();
                    plus[j] += eps;
                    let mut minus = base.clone();
                    minus[j] -= eps;
                    let fp = tape.shadow_eval(&[(leaf, plus)])[loss.index()][0];
                    let fm = tape.shadow_eval(&[(leaf, minus)])[loss.index()][0];
                    let fd = (fp - fm) / (2.0 * eps);
                    let rel = (fd - g[j]).abs() / f64::max(1e-6, fd.abs() + g[j].abs());
                    assert!(rel < 1e-4, "seed {seed} entry {j}: fd={fd} analytic={}", g[j]);
                }
            }
        }
    }
}
