//! Reverse-mode automatic differentiation over dense f64 matrices.
//!
//! A forward pass records ops on a tape; `backward` walks the tape in
//! reverse, accumulating gradients. Parameters live outside the tape in a
//! [`ParamStore`] so per-sample passes never copy them.

use crate::error::{GammaError, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |v| v.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c);
            data.extend(row);
        }
        Mat { rows: r, cols: c, data }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// C = A * B. Two output rows at a time share the B loads, and the k
    /// loop is unrolled by two, so the inner updates carry independent fma
    /// streams instead of one latency chain.
    pub fn matmul(&self, b: &Mat) -> Mat {
        assert_eq!(self.cols, b.rows);
        let mut out = Mat::zeros(self.rows, b.cols);
        let cols = b.cols;
        let kdim = self.cols;
        let mut i = 0;
        while i + 2 <= self.rows {
            let (top, bottom) = out.data.split_at_mut((i + 1) * cols);
            let orow0 = &mut top[i * cols..];
            let orow1 = &mut bottom[..cols];
            let arow0 = &self.data[i * kdim..(i + 1) * kdim];
            let arow1 = &self.data[(i + 1) * kdim..(i + 2) * kdim];
            let mut k = 0;
            while k + 2 <= kdim {
                let (a00, a01) = (arow0[k], arow0[k + 1]);
                let (a10, a11) = (arow1[k], arow1[k + 1]);
                let b0 = &b.data[k * cols..(k + 1) * cols];
                let b1 = &b.data[(k + 1) * cols..(k + 2) * cols];
                for j in 0..cols {
                    let bv0 = b0[j];
                    let bv1 = b1[j];
                    orow0[j] = a01.mul_add(bv1, a00.mul_add(bv0, orow0[j]));
                    orow1[j] = a11.mul_add(bv1, a10.mul_add(bv0, orow1[j]));
                }
                k += 2;
            }
            while k < kdim {
                let a0 = arow0[k];
                let a1 = arow1[k];
                let brow = &b.data[k * cols..(k + 1) * cols];
                for j in 0..cols {
                    orow0[j] = a0.mul_add(brow[j], orow0[j]);
                    orow1[j] = a1.mul_add(brow[j], orow1[j]);
                }
                k += 1;
            }
            i += 2;
        }
        if i < self.rows {
            let arow = self.row(i);
            let orow = &mut out.data[i * cols..(i + 1) * cols];
            for (k, &aik) in arow.iter().enumerate() {
                let brow = &b.data[k * cols..(k + 1) * cols];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o = aik.mul_add(bv, *o);
                }
            }
        }
        out
    }

    /// C = A * B^T.
    pub fn matmul_nt(&self, b: &Mat) -> Mat {
        assert_eq!(self.cols, b.cols);
        let mut out = Mat::zeros(self.rows, b.rows);
        for i in 0..self.rows {
            let arow = self.row(i);
            let orow = out.row_mut(i);
            for (j, o) in orow.iter_mut().enumerate() {
                let brow = b.row(j);
                let mut acc = 0.0;
                for (&av, &bv) in arow.iter().zip(brow) {
                    acc = av.mul_add(bv, acc);
                }
                *o = acc;
            }
        }
        out
    }

    /// C = A^T * B.
    pub fn matmul_tn(&self, b: &Mat) -> Mat {
        assert_eq!(self.rows, b.rows);
        let mut out = Mat::zeros(self.cols, b.cols);
        for i in 0..self.rows {
            let arow = self.row(i);
            let brow = b.row(i);
            for (k, &av) in arow.iter().enumerate() {
                if av == 0.0 {
                    continue;
                }
                let orow = out.row_mut(k);
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o = av.mul_add(bv, *o);
                }
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Mat) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale_assign(&mut self, s: f64) {
        for a in &mut self.data {
            *a *= s;
        }
    }
}

/// Parameter matrices in a fixed layout order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    pub mats: Vec<Mat>,
}

impl ParamStore {
    pub fn zeros_like(&self) -> ParamStore {
        ParamStore {
            mats: self
                .mats
                .iter()
                .map(|m| Mat::zeros(m.rows, m.cols))
                .collect(),
        }
    }

    pub fn total_len(&self) -> usize {
        self.mats.iter().map(|m| m.data.len()).sum()
    }
}

type NodeId = usize;

enum Op {
    /// Parameter slot in the external store.
    Param(usize),
    /// Owned constant input.
    Constant,
    MatMul(NodeId, NodeId),
    /// Adds a 1 x C bias row to every row.
    AddBias(NodeId, NodeId),
    Tanh(NodeId),
    ConcatCols(Vec<NodeId>),
    GatherRows(NodeId, Vec<usize>),
    /// Tiles a 1 x C row into n rows.
    TileRow(NodeId),
    /// Softmax of an E x 1 score column within segments.
    SegmentSoftmax(NodeId, Vec<usize>, usize),
    /// out[s] = sum over e with seg[e] == s of alpha[e] * values[e].
    SegmentWeightedSum {
        values: NodeId,
        alpha: NodeId,
        seg: Vec<usize>,
    },
    /// Log-softmax of an m x 1 logit column with a legality mask.
    MaskedLogSoftmax(NodeId, Vec<bool>),
    PickRow(NodeId, usize),
    Add(NodeId, NodeId),
    Scale(NodeId, f64),
    /// (x - target)^2 on a 1 x 1 matrix.
    SquaredDiff(NodeId, f64),
}

struct TapeNode {
    op: Op,
    /// None for Param nodes, whose values live in the store.
    value: Option<Mat>,
    rows: usize,
    cols: usize,
}

/// Records a forward computation for reverse-mode differentiation.
pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<TapeNode>,
    /// Tape node per param slot, created on first use.
    param_nodes: Vec<Option<NodeId>>,
}

const MASKED_LOGPROB: f64 = -1e30;

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape {
            params,
            nodes: Vec::with_capacity(256),
            param_nodes: vec![None; params.mats.len()],
        }
    }

    fn push(&mut self, op: Op, value: Mat) -> NodeId {
        let (rows, cols) = (value.rows, value.cols);
        self.nodes.push(TapeNode {
            op,
            value: Some(value),
            rows,
            cols,
        });
        self.nodes.len() - 1
    }

    pub fn value(&self, id: NodeId) -> &Mat {
        match &self.nodes[id].op {
            Op::Param(slot) => &self.params.mats[*slot],
            _ => self.nodes[id].value.as_ref().expect("owned value"),
        }
    }

    pub fn param(&mut self, slot: usize) -> NodeId {
        if let Some(id) = self.param_nodes[slot] {
            return id;
        }
        let m = &self.params.mats[slot];
        let (rows, cols) = (m.rows, m.cols);
        self.nodes.push(TapeNode {
            op: Op::Param(slot),
            value: None,
            rows,
            cols,
        });
        let id = self.nodes.len() - 1;
        self.param_nodes[slot] = Some(id);
        id
    }

    pub fn constant(&mut self, m: Mat) -> NodeId {
        self.push(Op::Constant, m)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul(self.value(b));
        self.push(Op::MatMul(a, b), v)
    }

    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> NodeId {
        let av = self.value(a);
        let bv = self.value(bias);
        assert_eq!(bv.rows, 1);
        assert_eq!(av.cols, bv.cols);
        let mut out = av.clone();
        for i in 0..out.rows {
            let row = out.row_mut(i);
            for (o, &b) in row.iter_mut().zip(&bv.data) {
                *o += b;
            }
        }
        self.push(Op::AddBias(a, bias), out)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let mut out = self.value(a).clone();
        for v in &mut out.data {
            *v = v.tanh();
        }
        self.push(Op::Tanh(a), out)
    }

    pub fn concat_cols(&mut self, parts: Vec<NodeId>) -> NodeId {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut out = Mat::zeros(rows, cols);
        let mut off = 0;
        for &p in &parts {
            let pv = self.value(p);
            assert_eq!(pv.rows, rows);
            for i in 0..rows {
                out.row_mut(i)[off..off + pv.cols].copy_from_slice(pv.row(i));
            }
            off += pv.cols;
        }
        self.push(Op::ConcatCols(parts), out)
    }

    pub fn gather_rows(&mut self, a: NodeId, indices: Vec<usize>) -> NodeId {
        let av = self.value(a);
        let mut out = Mat::zeros(indices.len(), av.cols);
        for (i, &idx) in indices.iter().enumerate() {
            out.row_mut(i).copy_from_slice(av.row(idx));
        }
        self.push(Op::GatherRows(a, indices), out)
    }

    pub fn tile_row(&mut self, a: NodeId, n: usize) -> NodeId {
        let av = self.value(a);
        assert_eq!(av.rows, 1);
        let mut out = Mat::zeros(n, av.cols);
        for i in 0..n {
            out.row_mut(i).copy_from_slice(&av.data);
        }
        self.push(Op::TileRow(a), out)
    }

    /// Softmax within segments of an E x 1 score column. Empty segments
    /// contribute nothing; their members keep weight zero.
    pub fn segment_softmax(&mut self, scores: NodeId, seg: Vec<usize>, segments: usize) -> NodeId {
        let sv = self.value(scores);
        assert_eq!(sv.cols, 1);
        let mut maxes = vec![f64::NEG_INFINITY; segments];
        for (e, &s) in seg.iter().enumerate() {
            maxes[s] = maxes[s].max(sv.data[e]);
        }
        let mut sums = vec![0.0; segments];
        let mut out = Mat::zeros(sv.rows, 1);
        for (e, &s) in seg.iter().enumerate() {
            let z = (sv.data[e] - maxes[s]).exp();
            out.data[e] = z;
            sums[s] += z;
        }
        for (e, &s) in seg.iter().enumerate() {
            if sums[s] > 0.0 {
                out.data[e] /= sums[s];
            }
        }
        self.push(Op::SegmentSoftmax(scores, seg, segments), out)
    }

    pub fn segment_weighted_sum(
        &mut self,
        values: NodeId,
        alpha: NodeId,
        seg: Vec<usize>,
        segments: usize,
    ) -> NodeId {
        let vv = self.value(values);
        let av = self.value(alpha);
        assert_eq!(av.cols, 1);
        assert_eq!(vv.rows, av.rows);
        let mut out = Mat::zeros(segments, vv.cols);
        for (e, &s) in seg.iter().enumerate() {
            let a = av.data[e];
            if a == 0.0 {
                continue;
            }
            let vrow = vv.row(e);
            let orow = out.row_mut(s);
            for (o, &v) in orow.iter_mut().zip(vrow) {
                *o += a * v;
            }
        }
        self.push(Op::SegmentWeightedSum { values, alpha, seg }, out)
    }

    pub fn masked_log_softmax(&mut self, logits: NodeId, mask: Vec<bool>) -> NodeId {
        let lv = self.value(logits);
        assert_eq!(lv.cols, 1);
        assert_eq!(lv.rows, mask.len());
        let mut hi = f64::NEG_INFINITY;
        for (i, &legal) in mask.iter().enumerate() {
            if legal {
                hi = hi.max(lv.data[i]);
            }
        }
        let mut sum = 0.0;
        for (i, &legal) in mask.iter().enumerate() {
            if legal {
                sum += (lv.data[i] - hi).exp();
            }
        }
        let lse = hi + sum.ln();
        let mut out = Mat::zeros(lv.rows, 1);
        for (i, &legal) in mask.iter().enumerate() {
            out.data[i] = if legal { lv.data[i] - lse } else { MASKED_LOGPROB };
        }
        self.push(Op::MaskedLogSoftmax(logits, mask), out)
    }

    pub fn pick_row(&mut self, a: NodeId, row: usize) -> NodeId {
        let av = self.value(a);
        let mut out = Mat::zeros(1, av.cols);
        out.data.copy_from_slice(av.row(row));
        self.push(Op::PickRow(a, row), out)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.push(Op::Add(a, b), out)
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let mut out = self.value(a).clone();
        out.scale_assign(s);
        self.push(Op::Scale(a, s), out)
    }

    pub fn squared_diff(&mut self, a: NodeId, target: f64) -> NodeId {
        let av = self.value(a);
        assert_eq!((av.rows, av.cols), (1, 1));
        let d = av.data[0] - target;
        self.push(Op::SquaredDiff(a, target), Mat::from_rows(vec![vec![d * d]]))
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        let v = self.value(id);
        assert_eq!((v.rows, v.cols), (1, 1));
        v.data[0]
    }

    /// Reverse pass from a 1 x 1 loss node; accumulates parameter gradients
    /// into `grads` (same layout as the store).
    pub fn backward(&self, loss: NodeId, grads: &mut ParamStore) -> Result<()> {
        let lv = self.value(loss);
        if lv.rows != 1 || lv.cols != 1 {
            return Err(GammaError::ShapeMismatch {
                role: "loss".into(),
                expected: "1x1".into(),
                actual: format!("{}x{}", lv.rows, lv.cols),
            });
        }
        let mut adjoint: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        adjoint[loss] = Some(Mat::from_rows(vec![vec![1.0]]));

        for id in (0..=loss).rev() {
            let Some(d_out) = adjoint[id].take() else {
                continue;
            };
            match &self.nodes[id].op {
                Op::Param(slot) => {
                    grads.mats[*slot].add_assign(&d_out);
                }
                Op::Constant => {}
                Op::MatMul(a, b) => {
                    let da = d_out.matmul_nt(self.value(*b));
                    let db = self.value(*a).matmul_tn(&d_out);
                    accumulate(&mut adjoint, *a, da);
                    accumulate(&mut adjoint, *b, db);
                }
                Op::AddBias(a, bias) => {
                    let bv = self.value(*bias);
                    let mut db = Mat::zeros(1, bv.cols);
                    for i in 0..d_out.rows {
                        for (o, &d) in db.data.iter_mut().zip(d_out.row(i)) {
                            *o += d;
                        }
                    }
                    accumulate(&mut adjoint, *bias, db);
                    accumulate(&mut adjoint, *a, d_out);
                }
                Op::Tanh(a) => {
                    let y = self.nodes[id].value.as_ref().expect("owned");
                    let mut da = d_out;
                    for (d, &yv) in da.data.iter_mut().zip(&y.data) {
                        *d *= 1.0 - yv * yv;
                    }
                    accumulate(&mut adjoint, *a, da);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let pv_cols = self.node_cols(p);
                        let mut dp = Mat::zeros(d_out.rows, pv_cols);
                        for i in 0..d_out.rows {
                            dp.row_mut(i)
                                .copy_from_slice(&d_out.row(i)[off..off + pv_cols]);
                        }
                        accumulate(&mut adjoint, p, dp);
                        off += pv_cols;
                    }
                }
                Op::GatherRows(a, indices) => {
                    let mut da = Mat::zeros(self.node_rows(*a), self.node_cols(*a));
                    for (i, &idx) in indices.iter().enumerate() {
                        let drow = d_out.row(i);
                        let arow = da.row_mut(idx);
                        for (o, &d) in arow.iter_mut().zip(drow) {
                            *o += d;
                        }
                    }
                    accumulate(&mut adjoint, *a, da);
                }
                Op::TileRow(a) => {
                    let mut da = Mat::zeros(1, self.node_cols(*a));
                    for i in 0..d_out.rows {
                        for (o, &d) in da.data.iter_mut().zip(d_out.row(i)) {
                            *o += d;
                        }
                    }
                    accumulate(&mut adjoint, *a, da);
                }
                Op::SegmentSoftmax(scores, seg, segments) => {
                    let alpha = self.nodes[id].value.as_ref().expect("owned");
                    // per segment: dscore = alpha * (dalpha - sum(dalpha * alpha))
                    let mut dots = vec![0.0; *segments];
                    for (e, &s) in seg.iter().enumerate() {
                        dots[s] += d_out.data[e] * alpha.data[e];
                    }
                    let mut ds = Mat::zeros(alpha.rows, 1);
                    for (e, &s) in seg.iter().enumerate() {
                        ds.data[e] = alpha.data[e] * (d_out.data[e] - dots[s]);
                    }
                    accumulate(&mut adjoint, *scores, ds);
                }
                Op::SegmentWeightedSum { values, alpha, seg } => {
                    let vv = self.value(*values);
                    let av = self.value(*alpha);
                    let mut dv = Mat::zeros(vv.rows, vv.cols);
                    let mut da = Mat::zeros(av.rows, 1);
                    for (e, &s) in seg.iter().enumerate() {
                        let drow = d_out.row(s);
                        let a = av.data[e];
                        let dvrow = dv.row_mut(e);
                        let vrow = vv.row(e);
                        let mut dot = 0.0;
                        for ((o, &d), &v) in dvrow.iter_mut().zip(drow).zip(vrow) {
                            *o += a * d;
                            dot += v * d;
                        }
                        da.data[e] = dot;
                    }
                    accumulate(&mut adjoint, *values, dv);
                    accumulate(&mut adjoint, *alpha, da);
                }
                Op::MaskedLogSoftmax(logits, mask) => {
                    let logp = self.nodes[id].value.as_ref().expect("owned");
                    let mut dsum = 0.0;
                    for (i, &legal) in mask.iter().enumerate() {
                        if legal {
                            dsum += d_out.data[i];
                        }
                    }
                    let mut dl = Mat::zeros(logp.rows, 1);
                    for (i, &legal) in mask.iter().enumerate() {
                        if legal {
                            dl.data[i] = d_out.data[i] - logp.data[i].exp() * dsum;
                        }
                    }
                    accumulate(&mut adjoint, *logits, dl);
                }
                Op::PickRow(a, row) => {
                    let mut da = Mat::zeros(self.node_rows(*a), self.node_cols(*a));
                    da.row_mut(*row).copy_from_slice(&d_out.data);
                    accumulate(&mut adjoint, *a, da);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adjoint, *a, d_out.clone());
                    accumulate(&mut adjoint, *b, d_out);
                }
                Op::Scale(a, s) => {
                    let mut da = d_out;
                    da.scale_assign(*s);
                    accumulate(&mut adjoint, *a, da);
                }
                Op::SquaredDiff(a, target) => {
                    let av = self.value(*a);
                    let d = 2.0 * (av.data[0] - target) * d_out.data[0];
                    accumulate(&mut adjoint, *a, Mat::from_rows(vec![vec![d]]));
                }
            }
        }
        Ok(())
    }

    fn node_rows(&self, id: NodeId) -> usize {
        self.nodes[id].rows
    }

    fn node_cols(&self, id: NodeId) -> usize {
        self.nodes[id].cols
    }
}

fn accumulate(adjoint: &mut [Option<Mat>], id: NodeId, d: Mat) {
    match &mut adjoint[id] {
        Some(existing) => existing.add_assign(&d),
        slot @ None => *slot = Some(d),
    }
}
