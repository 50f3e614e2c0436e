use std::rc::Rc;

use rand::Rng;

use crate::activation::Activation;
use crate::error::{arg_err, shape_err, Result, TensorError};
use crate::linalg::gemm;
use crate::tape::{BinaryOp, Broadcast, ConvDims, Op, Var};
use crate::tensor::Tensor;

fn same_tape(op: &'static str, a: &Var<'_>, b: &Var<'_>) -> Result<()> {
    if std::ptr::eq(a.tape, b.tape) {
        Ok(())
    } else {
        arg_err(op, "operands recorded on different tapes")
    }
}

fn broadcast_kind(op: &'static str, a: &[usize], b: &[usize]) -> Result<Broadcast> {
    if a == b {
        return Ok(Broadcast::Same);
    }
    let b_numel: usize = b.iter().product();
    if b_numel == 1 {
        return Ok(Broadcast::Scalar);
    }
    if b.len() <= a.len() && a[a.len() - b.len()..] == *b {
        let reps = a[..a.len() - b.len()].iter().product();
        return Ok(Broadcast::Leading { reps });
    }
    shape_err(op, format!("cannot broadcast {b:?} onto {a:?}"))
}

impl<'t> Var<'t> {
    fn unary_map(
        &self,
        name: &'static str,
        value: Tensor,
        op: Op,
    ) -> Result<Var<'t>> {
        self.tape.push(name, value, op, &[self.id])
    }

    /// Matrix product of `[m×k]` and `[k×n]`.
    pub fn matmul(&self, other: &Var<'t>) -> Result<Var<'t>> {
        same_tape("matmul", self, other)?;
        let a = self.value();
        let b = other.value();
        if a.ndim() != 2 || b.ndim() != 2 || a.shape()[1] != b.shape()[0] {
            return shape_err(
                "matmul",
                format!("{:?} x {:?}", a.shape(), b.shape()),
            );
        }
        let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, a.data(), false, b.data(), false, &mut out, 0.0);
        let value = Tensor::new(vec![m, n], out)?;
        self.tape
            .push("matmul", value, Op::MatMul(self.id, other.id), &[self.id, other.id])
    }

    /// Transpose of a 2-D tensor.
    pub fn t(&self) -> Result<Var<'t>> {
        let a = self.value();
        if a.ndim() != 2 {
            return shape_err("transpose", format!("expected 2-D, got {:?}", a.shape()));
        }
        let (r, c) = (a.shape()[0], a.shape()[1]);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = a.data()[i * c + j];
            }
        }
        self.unary_map("transpose", Tensor::new(vec![c, r], out)?, Op::Transpose(self.id))
    }

    fn binary(&self, other: &Var<'t>, kind: BinaryOp) -> Result<Var<'t>> {
        let name = match kind {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
            BinaryOp::Div => "div",
        };
        same_tape(name, self, other)?;
        let a = self.value();
        let b = other.value();
        let bc = broadcast_kind(name, a.shape(), b.shape())?;
        let bd = b.data();
        if kind == BinaryOp::Div && bd.contains(&0.0) {
            return Err(TensorError::Numeric {
                op: "div",
                detail: "division by zero".into(),
            });
        }
        let bn = bd.len();
        let f = |x: f64, y: f64| match kind {
            BinaryOp::Add => x + y,
            BinaryOp::Sub => x - y,
            BinaryOp::Mul => x * y,
            BinaryOp::Div => x / y,
        };
        let out: Vec<f64> = a
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let y = match bc {
                    Broadcast::Same => bd[i],
                    Broadcast::Scalar => bd[0],
                    Broadcast::Leading { .. } => bd[i % bn],
                };
                f(x, y)
            })
            .collect();
        let value = Tensor::new(a.shape().to_vec(), out)?;
        self.tape.push(
            name,
            value,
            Op::Binary(kind, self.id, other.id, bc),
            &[self.id, other.id],
        )
    }

    /// Elementwise sum; `other` may broadcast along leading dimensions or be a scalar.
    pub fn add(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.binary(other, BinaryOp::Add)
    }

    pub fn sub(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.binary(other, BinaryOp::Sub)
    }

    pub fn mul(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.binary(other, BinaryOp::Mul)
    }

    pub fn div(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.binary(other, BinaryOp::Div)
    }

    /// Multiplies by a constant.
    pub fn scale(&self, c: f64) -> Result<Var<'t>> {
        let value = self.value().map(|x| x * c);
        self.unary_map("scale", value, Op::Scale(self.id, c))
    }

    /// Adds a constant.
    pub fn add_scalar(&self, c: f64) -> Result<Var<'t>> {
        let value = self.value().map(|x| x + c);
        self.unary_map("add_scalar", value, Op::AddScalar(self.id))
    }

    pub fn activation(&self, act: Activation) -> Result<Var<'t>> {
        let value = self.value().map(|x| act.apply(x));
        self.unary_map(act.name(), value, Op::Unary(act, self.id))
    }

    pub fn rrelu(&self) -> Result<Var<'t>> {
        self.activation(Activation::RReluEval)
    }

    pub fn relu(&self) -> Result<Var<'t>> {
        self.activation(Activation::Relu)
    }

    pub fn tanh(&self) -> Result<Var<'t>> {
        self.activation(Activation::Tanh)
    }

    pub fn sigmoid(&self) -> Result<Var<'t>> {
        self.activation(Activation::Sigmoid)
    }

    pub fn gelu(&self) -> Result<Var<'t>> {
        self.activation(Activation::Gelu)
    }

    pub fn cos(&self) -> Result<Var<'t>> {
        self.activation(Activation::Cos)
    }

    /// Softmax along `axis`, computed with max subtraction.
    pub fn softmax(&self, axis: usize) -> Result<Var<'t>> {
        let x = self.value();
        let shape = x.shape();
        if axis >= shape.len() {
            return arg_err("softmax", format!("axis {axis} out of range for {shape:?}"));
        }
        let len = shape[axis];
        if len == 0 {
            return arg_err("softmax", "empty axis");
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let xd = x.data();
        let mut out = vec![0.0; xd.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| o * len * inner + j * inner + i;
                let max = (0..len).map(|j| xd[at(j)]).fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for j in 0..len {
                    let e = (xd[at(j)] - max).exp();
                    out[at(j)] = e;
                    total += e;
                }
                for j in 0..len {
                    out[at(j)] /= total;
                }
            }
        }
        let value = Tensor::new(shape.to_vec(), out)?;
        self.unary_map(
            "softmax",
            value,
            Op::Softmax {
                x: self.id,
                outer,
                len,
                inner,
            },
        )
    }

    /// Softmax of a 1-D tensor computed independently within each segment.
    ///
    /// `segments[i]` names the group of element `i`; groups need not be contiguous.
    pub fn segment_softmax(&self, segments: Rc<[usize]>, count: usize) -> Result<Var<'t>> {
        let x = self.value();
        if x.ndim() != 1 || x.numel() != segments.len() {
            return shape_err(
                "segment_softmax",
                format!("values {:?} vs {} segment ids", x.shape(), segments.len()),
            );
        }
        if let Some(&bad) = segments.iter().find(|&&s| s >= count) {
            return arg_err("segment_softmax", format!("segment {bad} >= {count}"));
        }
        let xd = x.data();
        let mut max = vec![f64::NEG_INFINITY; count];
        for (&v, &s) in xd.iter().zip(segments.iter()) {
            max[s] = max[s].max(v);
        }
        let mut total = vec![0.0; count];
        let mut out: Vec<f64> = xd
            .iter()
            .zip(segments.iter())
            .map(|(&v, &s)| {
                let e = (v - max[s]).exp();
                total[s] += e;
                e
            })
            .collect();
        for (o, &s) in out.iter_mut().zip(segments.iter()) {
            *o /= total[s];
        }
        let value = Tensor::new(x.shape().to_vec(), out)?;
        self.unary_map(
            "segment_softmax",
            value,
            Op::SegmentSoftmax {
                x: self.id,
                segments,
                count,
            },
        )
    }

    /// Layer normalization over the last axis followed by an affine map.
    pub fn layer_norm(&self, gain: &Var<'t>, bias: &Var<'t>, eps: f64) -> Result<Var<'t>> {
        same_tape("layer_norm", self, gain)?;
        same_tape("layer_norm", self, bias)?;
        if eps <= 0.0 {
            return arg_err("layer_norm", "eps must be positive");
        }
        let x = self.value();
        if x.ndim() < 1 || x.cols() == 0 {
            return shape_err("layer_norm", "need at least one feature dimension");
        }
        let n = x.cols();
        let (g, b) = (gain.value(), bias.value());
        if g.shape() != [n] || b.shape() != [n] {
            return shape_err(
                "layer_norm",
                format!("gain {:?} / bias {:?} for width {n}", g.shape(), b.shape()),
            );
        }
        let rows = x.rows();
        let mut normalized = vec![0.0; x.numel()];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; x.numel()];
        for r in 0..rows {
            let row = x.row(r);
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for j in 0..n {
                let xh = (row[j] - mean) * is;
                normalized[r * n + j] = xh;
                out[r * n + j] = xh * g.data()[j] + b.data()[j];
            }
        }
        let value = Tensor::new(x.shape().to_vec(), out)?;
        self.tape.push(
            "layer_norm",
            value,
            Op::LayerNorm {
                x: self.id,
                gain: gain.id,
                bias: bias.id,
                normalized: normalized.into(),
                inv_std: inv_std.into(),
            },
            &[self.id, gain.id, bias.id],
        )
    }

    /// Gated linear unit with GELU gate: `(x·W_a) ⊙ gelu(x·W_b)`.
    pub fn geglu(&self, w_a: &Var<'t>, w_b: &Var<'t>) -> Result<Var<'t>> {
        let value = self.matmul(w_a)?;
        let gate = self.matmul(w_b)?.gelu()?;
        value.mul(&gate)
    }

    /// One-dimensional cross-correlation with zero padding.
    ///
    /// `self` is `[channels×width]` or `[batch×channels×width]`, `kernel` is
    /// `[out×channels×k]` and `bias`, when given, is `[out]`. The kernel width
    /// must be odd and `padding = (k-1)/2` so the width is preserved.
    pub fn conv1d(&self, kernel: &Var<'t>, bias: Option<&Var<'t>>, padding: usize) -> Result<Var<'t>> {
        same_tape("conv1d", self, kernel)?;
        let x = self.value();
        let w = kernel.value();
        let (batch, in_channels, width, batched) = match *x.shape() {
            [c, wd] => (1, c, wd, false),
            [b, c, wd] => (b, c, wd, true),
            ref s => return shape_err("conv1d", format!("input must be 2-D or 3-D, got {s:?}")),
        };
        let [out_channels, kc, k] = *w.shape() else {
            return shape_err("conv1d", format!("kernel must be 3-D, got {:?}", w.shape()));
        };
        if kc != in_channels {
            return shape_err("conv1d", format!("kernel expects {kc} channels, input has {in_channels}"));
        }
        if k % 2 == 0 {
            return arg_err("conv1d", format!("kernel width {k} must be odd"));
        }
        if padding != (k - 1) / 2 {
            return arg_err("conv1d", format!("padding {padding} does not preserve width for k={k}"));
        }
        let bias_value = match bias {
            Some(b) => {
                same_tape("conv1d", self, b)?;
                let bv = b.value();
                if bv.shape() != [out_channels] {
                    return shape_err("conv1d", format!("bias {:?} for {out_channels} kernels", bv.shape()));
                }
                Some(bv)
            }
            None => None,
        };
        let dims = ConvDims {
            batch,
            in_channels,
            out_channels,
            width,
            kernel: k,
            padding,
        };
        let (xd, wd) = (x.data(), w.data());
        let mut out = vec![0.0; batch * out_channels * width];
        for bi in 0..batch {
            for co in 0..out_channels {
                let base = (bi * out_channels + co) * width;
                let b0 = bias_value.as_ref().map_or(0.0, |b| b.data()[co]);
                out[base..base + width].iter_mut().for_each(|v| *v = b0);
                for ci in 0..in_channels {
                    let xrow = &xd[(bi * in_channels + ci) * width..][..width];
                    let wrow = &wd[(co * in_channels + ci) * k..][..k];
                    for (j, &wv) in wrow.iter().enumerate() {
                        // output position p reads input p + j - padding
                        let lo = padding.saturating_sub(j);
                        let hi = (width + padding).saturating_sub(j).min(width);
                        for p in lo..hi {
                            out[base + p] += wv * xrow[p + j - padding];
                        }
                    }
                }
            }
        }
        let shape = if batched {
            vec![batch, out_channels, width]
        } else {
            vec![out_channels, width]
        };
        let value = Tensor::new(shape, out)?;
        let mut parents = vec![self.id, kernel.id];
        if let Some(b) = bias {
            parents.push(b.id);
        }
        self.tape.push(
            "conv1d",
            value,
            Op::Conv1d {
                input: self.id,
                kernel: kernel.id,
                bias: bias.map(|b| b.id),
                dims,
            },
            &parents,
        )
    }

    /// Inverted dropout. Identity when `training` is false or `rate` is 0.
    pub fn dropout<R: Rng + ?Sized>(&self, rate: f64, training: bool, rng: &mut R) -> Result<Var<'t>> {
        if !(0.0..1.0).contains(&rate) {
            return arg_err("dropout", format!("rate {rate} outside [0, 1)"));
        }
        if !training || rate == 0.0 {
            return Ok(*self);
        }
        let x = self.value();
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..x.numel())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let out = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let value = Tensor::new(x.shape().to_vec(), out)?;
        self.unary_map(
            "dropout",
            value,
            Op::Dropout {
                x: self.id,
                mask: mask.into(),
            },
        )
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax of `[batch×classes]` logits.
    pub fn cross_entropy(&self, targets: &[usize]) -> Result<Var<'t>> {
        let x = self.value();
        if x.ndim() != 2 {
            return shape_err("cross_entropy", format!("logits must be 2-D, got {:?}", x.shape()));
        }
        let (batch, classes) = (x.shape()[0], x.shape()[1]);
        if targets.len() != batch {
            return shape_err("cross_entropy", format!("{} targets for batch {batch}", targets.len()));
        }
        if batch == 0 || classes == 0 {
            return arg_err("cross_entropy", "empty logits");
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= classes) {
            return arg_err("cross_entropy", format!("target {bad} out of range for {classes} classes"));
        }
        let mut probs = vec![0.0; batch * classes];
        let mut loss = 0.0;
        for (b, &target) in targets.iter().enumerate() {
            let row = x.row(b);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let total: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let log_z = max + total.ln();
            loss += log_z - row[target];
            for j in 0..classes {
                probs[b * classes + j] = (row[j] - log_z).exp();
            }
        }
        let value = Tensor::scalar(loss / batch as f64);
        self.unary_map(
            "cross_entropy",
            value,
            Op::CrossEntropy {
                logits: self.id,
                targets: targets.into(),
                probs: probs.into(),
            },
        )
    }

    /// Gathers rows of a 2-D tensor.
    pub fn index_select(&self, index: Rc<[usize]>) -> Result<Var<'t>> {
        let x = self.value();
        if x.ndim() != 2 {
            return shape_err("index_select", format!("expected 2-D, got {:?}", x.shape()));
        }
        let (rows, cols) = (x.shape()[0], x.shape()[1]);
        let mut out = Vec::with_capacity(index.len() * cols);
        for &i in index.iter() {
            if i >= rows {
                return arg_err("index_select", format!("row {i} out of range for {rows}"));
            }
            out.extend_from_slice(x.row(i));
        }
        let value = Tensor::new(vec![index.len(), cols], out)?;
        self.unary_map("index_select", value, Op::IndexSelect { x: self.id, index })
    }

    /// Sums row `i` of `self` into row `index[i]` of a fresh `[rows×cols]` tensor.
    pub fn index_add(&self, index: Rc<[usize]>, rows: usize) -> Result<Var<'t>> {
        let x = self.value();
        if x.ndim() != 2 || x.shape()[0] != index.len() {
            return shape_err(
                "index_add",
                format!("source {:?} vs {} indices", x.shape(), index.len()),
            );
        }
        let cols = x.shape()[1];
        let mut out = vec![0.0; rows * cols];
        for (src, &dst) in index.iter().enumerate() {
            if dst >= rows {
                return arg_err("index_add", format!("row {dst} out of range for {rows}"));
            }
            for (o, v) in out[dst * cols..(dst + 1) * cols].iter_mut().zip(x.row(src)) {
                *o += v;
            }
        }
        let value = Tensor::new(vec![rows, cols], out)?;
        self.unary_map("index_add", value, Op::IndexAdd { x: self.id, index })
    }

    /// Multiplies row `i` of a 2-D tensor by `scale[i]`.
    pub fn scale_rows(&self, scale: &Var<'t>) -> Result<Var<'t>> {
        same_tape("scale_rows", self, scale)?;
        let x = self.value();
        let s = scale.value();
        if x.ndim() != 2 || s.numel() != x.shape()[0] {
            return shape_err("scale_rows", format!("{:?} by {:?}", x.shape(), s.shape()));
        }
        let cols = x.shape()[1];
        let out = x
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v * s.data()[i / cols.max(1)])
            .collect();
        let value = Tensor::new(x.shape().to_vec(), out)?;
        self.tape.push(
            "scale_rows",
            value,
            Op::ScaleRows {
                x: self.id,
                scale: scale.id,
            },
            &[self.id, scale.id],
        )
    }

    /// Concatenates along the last axis; all parts must agree on the leading shape.
    pub fn concat_cols(parts: &[Var<'t>]) -> Result<Var<'t>> {
        let Some(first) = parts.first() else {
            return arg_err("concat_cols", "no inputs");
        };
        let values: Vec<Rc<Tensor>> = parts.iter().map(Var::value).collect();
        let lead = &values[0].shape()[..values[0].ndim().saturating_sub(1)];
        for (p, v) in parts.iter().zip(&values) {
            same_tape("concat_cols", first, p)?;
            if v.ndim() == 0 || &v.shape()[..v.ndim() - 1] != lead {
                return shape_err("concat_cols", format!("{:?} vs leading {lead:?}", v.shape()));
            }
        }
        let rows = values[0].rows();
        let total: usize = values.iter().map(|v| v.cols()).sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for v in &values {
                out.extend_from_slice(v.row(r));
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        let value = Tensor::new(shape, out)?;
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        first.tape.push("concat_cols", value, Op::ConcatCols(ids.clone()), &ids)
    }

    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Var<'t>> {
        let value = self.value().reshape(shape)?;
        self.unary_map("reshape", value, Op::Reshape(self.id))
    }

    pub fn sum(&self) -> Result<Var<'t>> {
        let value = Tensor::scalar(self.value().sum());
        self.unary_map("sum", value, Op::Sum(self.id))
    }

    pub fn mean(&self) -> Result<Var<'t>> {
        let x = self.value();
        if x.numel() == 0 {
            return arg_err("mean", "empty tensor");
        }
        let value = Tensor::scalar(x.sum() / x.numel() as f64);
        self.unary_map("mean", value, Op::Mean(self.id))
    }

    /// Divides each row by `sqrt(‖row‖² + eps)`.
    pub fn l2_normalize_rows(&self, eps: f64) -> Result<Var<'t>> {
        let x = self.value();
        let cols = x.cols();
        let rows = x.rows();
        let mut norms = Vec::with_capacity(rows);
        let mut out = vec![0.0; x.numel()];
        for r in 0..rows {
            let row = x.row(r);
            let n = (row.iter().map(|v| v * v).sum::<f64>() + eps).sqrt();
            norms.push(n);
            for j in 0..cols {
                out[r * cols + j] = row[j] / n;
            }
        }
        let value = Tensor::new(x.shape().to_vec(), out)?;
        self.unary_map(
            "l2_normalize_rows",
            value,
            Op::L2NormalizeRows {
                x: self.id,
                norms: norms.into(),
            },
        )
    }

    /// Clamps to `[lo, hi]`; the gradient is zero outside the interval.
    pub fn clamp(&self, lo: f64, hi: f64) -> Result<Var<'t>> {
        if lo > hi {
            return arg_err("clamp", format!("lo {lo} > hi {hi}"));
        }
        let value = self.value().map(|x| x.clamp(lo, hi));
        self.unary_map("clamp", value, Op::Clamp { x: self.id, lo, hi })
    }
}
