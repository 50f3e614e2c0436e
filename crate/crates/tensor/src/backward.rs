//! Vector-Jacobian products for every recorded op.

use crate::linalg::gemm;
use crate::tape::{BinaryOp, Broadcast, Node, Op};
use crate::tensor::Tensor;

fn accumulate(nodes: &[Node], grads: &mut [Option<Tensor>], id: usize, contribution: Tensor) {
    if !nodes[id].requires_grad {
        return;
    }
    match &mut grads[id] {
        Some(existing) => existing.add_assign(&contribution),
        slot @ None => *slot = Some(contribution),
    }
}

fn needs(nodes: &[Node], id: usize) -> bool {
    nodes[id].requires_grad
}

fn like(nodes: &[Node], id: usize, data: Vec<f64>) -> Tensor {
    Tensor::new(nodes[id].value.shape().to_vec(), data).expect("gradient shape matches value")
}

pub(crate) fn propagate(nodes: &[Node], node: &Node, grad: &Tensor, grads: &mut [Option<Tensor>]) {
    let g = grad.data();
    match &node.op {
        Op::Leaf | Op::Param => {}
        &Op::MatMul(a, b) => {
            let av = &nodes[a].value;
            let bv = &nodes[b].value;
            let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
            if needs(nodes, a) {
                // dA = dC · Bᵀ
                let mut da = vec![0.0; m * k];
                gemm(m, n, k, g, false, bv.data(), true, &mut da, 0.0);
                accumulate(nodes, grads, a, like(nodes, a, da));
            }
            if needs(nodes, b) {
                // dB = Aᵀ · dC
                let mut db = vec![0.0; k * n];
                gemm(k, m, n, av.data(), true, g, false, &mut db, 0.0);
                accumulate(nodes, grads, b, like(nodes, b, db));
            }
        }
        &Op::Transpose(a) => {
            let (r, c) = (nodes[a].value.shape()[0], nodes[a].value.shape()[1]);
            let mut da = vec![0.0; r * c];
            for i in 0..r {
                for j in 0..c {
                    da[i * c + j] = g[j * r + i];
                }
            }
            accumulate(nodes, grads, a, like(nodes, a, da));
        }
        &Op::Binary(kind, a, b, bc) => {
            let av = nodes[a].value.data();
            let bv = nodes[b].value.data();
            let bn = bv.len();
            let b_at = |i: usize| match bc {
                Broadcast::Same => i,
                Broadcast::Scalar => 0,
                Broadcast::Leading { .. } => i % bn,
            };
            if needs(nodes, a) {
                let da = g
                    .iter()
                    .enumerate()
                    .map(|(i, &gi)| match kind {
                        BinaryOp::Add | BinaryOp::Sub => gi,
                        BinaryOp::Mul => gi * bv[b_at(i)],
                        BinaryOp::Div => gi / bv[b_at(i)],
                    })
                    .collect();
                accumulate(nodes, grads, a, like(nodes, a, da));
            }
            if needs(nodes, b) {
                let mut db = vec![0.0; bn];
                for (i, &gi) in g.iter().enumerate() {
                    let j = b_at(i);
                    db[j] += match kind {
                        BinaryOp::Add => gi,
                        BinaryOp::Sub => -gi,
                        BinaryOp::Mul => gi * av[i],
                        BinaryOp::Div => -gi * av[i] / (bv[j] * bv[j]),
                    };
                }
                accumulate(nodes, grads, b, like(nodes, b, db));
            }
        }
        &Op::Scale(a, c) => {
            accumulate(nodes, grads, a, like(nodes, a, g.iter().map(|v| v * c).collect()));
        }
        &Op::AddScalar(a) | &Op::Reshape(a) => {
            accumulate(nodes, grads, a, like(nodes, a, g.to_vec()));
        }
        &Op::Unary(act, a) => {
            let x = nodes[a].value.data();
            let y = node.value.data();
            let da = (0..g.len()).map(|i| g[i] * act.derivative(x[i], y[i])).collect();
            accumulate(nodes, grads, a, like(nodes, a, da));
        }
        &Op::Softmax { x, outer, len, inner } => {
            let y = node.value.data();
            let mut dx = vec![0.0; y.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let at = |j: usize| o * len * inner + j * inner + i;
                    let dot: f64 = (0..len).map(|j| g[at(j)] * y[at(j)]).sum();
                    for j in 0..len {
                        dx[at(j)] = y[at(j)] * (g[at(j)] - dot);
                    }
                }
            }
            accumulate(nodes, grads, x, like(nodes, x, dx));
        }
        Op::SegmentSoftmax { x, segments, count } => {
            let y = node.value.data();
            let mut dot = vec![0.0; *count];
            for (i, &s) in segments.iter().enumerate() {
                dot[s] += g[i] * y[i];
            }
            let dx = segments
                .iter()
                .enumerate()
                .map(|(i, &s)| y[i] * (g[i] - dot[s]))
                .collect();
            accumulate(nodes, grads, *x, like(nodes, *x, dx));
        }
        Op::LayerNorm {
            x,
            gain,
            bias,
            normalized,
            inv_std,
        } => {
            let n = nodes[*gain].value.numel();
            let gv = nodes[*gain].value.data();
            let rows = inv_std.len();
            if needs(nodes, *gain) || needs(nodes, *bias) {
                let mut dg = vec![0.0; n];
                let mut db = vec![0.0; n];
                for r in 0..rows {
                    for j in 0..n {
                        dg[j] += g[r * n + j] * normalized[r * n + j];
                        db[j] += g[r * n + j];
                    }
                }
                accumulate(nodes, grads, *gain, like(nodes, *gain, dg));
                accumulate(nodes, grads, *bias, like(nodes, *bias, db));
            }
            if needs(nodes, *x) {
                let mut dx = vec![0.0; rows * n];
                for r in 0..rows {
                    let mut sum_d = 0.0;
                    let mut sum_dx = 0.0;
                    for j in 0..n {
                        let d = g[r * n + j] * gv[j];
                        sum_d += d;
                        sum_dx += d * normalized[r * n + j];
                    }
                    for j in 0..n {
                        let d = g[r * n + j] * gv[j];
                        dx[r * n + j] = inv_std[r] / n as f64
                            * (n as f64 * d - sum_d - normalized[r * n + j] * sum_dx);
                    }
                }
                accumulate(nodes, grads, *x, like(nodes, *x, dx));
            }
        }
        &Op::Conv1d {
            input,
            kernel,
            bias,
            dims,
        } => {
            let xd = nodes[input].value.data();
            let wd = nodes[kernel].value.data();
            let (width, k, pad) = (dims.width, dims.kernel, dims.padding);
            let mut dx = vec![0.0; xd.len()];
            let mut dw = vec![0.0; wd.len()];
            let mut dbias = vec![0.0; dims.out_channels];
            for bi in 0..dims.batch {
                for co in 0..dims.out_channels {
                    let grow = &g[(bi * dims.out_channels + co) * width..][..width];
                    dbias[co] += grow.iter().sum::<f64>();
                    for ci in 0..dims.in_channels {
                        let xoff = (bi * dims.in_channels + ci) * width;
                        let woff = (co * dims.in_channels + ci) * k;
                        for j in 0..k {
                            let lo = pad.saturating_sub(j);
                            let hi = (width + pad).saturating_sub(j).min(width);
                            let wv = wd[woff + j];
                            let mut acc = 0.0;
                            for (p, &gp) in grow.iter().enumerate().take(hi).skip(lo) {
                                let q = xoff + p + j - pad;
                                acc += gp * xd[q];
                                dx[q] += gp * wv;
                            }
                            dw[woff + j] += acc;
                        }
                    }
                }
            }
            accumulate(nodes, grads, input, like(nodes, input, dx));
            accumulate(nodes, grads, kernel, like(nodes, kernel, dw));
            if let Some(b) = bias {
                accumulate(nodes, grads, b, like(nodes, b, dbias));
            }
        }
        Op::Dropout { x, mask } => {
            let dx = g.iter().zip(mask.iter()).map(|(a, m)| a * m).collect();
            accumulate(nodes, grads, *x, like(nodes, *x, dx));
        }
        Op::CrossEntropy {
            logits,
            targets,
            probs,
        } => {
            let batch = targets.len();
            let classes = probs.len() / batch;
            let scale = g[0] / batch as f64;
            let mut dx: Vec<f64> = probs.iter().map(|p| p * scale).collect();
            for (b, &t) in targets.iter().enumerate() {
                dx[b * classes + t] -= scale;
            }
            accumulate(nodes, grads, *logits, like(nodes, *logits, dx));
        }
        Op::IndexSelect { x, index } => {
            let cols = nodes[*x].value.shape()[1];
            let mut dx = vec![0.0; nodes[*x].value.numel()];
            for (src, &row) in index.iter().enumerate() {
                for j in 0..cols {
                    dx[row * cols + j] += g[src * cols + j];
                }
            }
            accumulate(nodes, grads, *x, like(nodes, *x, dx));
        }
        Op::IndexAdd { x, index } => {
            let cols = nodes[*x].value.shape()[1];
            let mut dx = Vec::with_capacity(index.len() * cols);
            for &row in index.iter() {
                dx.extend_from_slice(&g[row * cols..(row + 1) * cols]);
            }
            accumulate(nodes, grads, *x, like(nodes, *x, dx));
        }
        &Op::ScaleRows { x, scale } => {
            let xv = nodes[x].value.data();
            let sv = nodes[scale].value.data();
            let cols = nodes[x].value.shape()[1].max(1);
            if needs(nodes, x) {
                let dx = g.iter().enumerate().map(|(i, v)| v * sv[i / cols]).collect();
                accumulate(nodes, grads, x, like(nodes, x, dx));
            }
            if needs(nodes, scale) {
                let mut ds = vec![0.0; sv.len()];
                for (i, v) in g.iter().enumerate() {
                    ds[i / cols] += v * xv[i];
                }
                accumulate(nodes, grads, scale, like(nodes, scale, ds));
            }
        }
        Op::ConcatCols(parts) => {
            let rows = node.value.rows();
            let total = node.value.cols();
            let mut offset = 0;
            for &p in parts {
                let c = nodes[p].value.cols();
                if needs(nodes, p) {
                    let mut dp = Vec::with_capacity(rows * c);
                    for r in 0..rows {
                        dp.extend_from_slice(&g[r * total + offset..r * total + offset + c]);
                    }
                    accumulate(nodes, grads, p, like(nodes, p, dp));
                }
                offset += c;
            }
        }
        &Op::Sum(a) => {
            let n = nodes[a].value.numel();
            accumulate(nodes, grads, a, like(nodes, a, vec![g[0]; n]));
        }
        &Op::Mean(a) => {
            let n = nodes[a].value.numel();
            accumulate(nodes, grads, a, like(nodes, a, vec![g[0] / n as f64; n]));
        }
        Op::L2NormalizeRows { x, norms } => {
            let y = node.value.data();
            let cols = node.value.cols();
            let mut dx = vec![0.0; y.len()];
            for (r, &n) in norms.iter().enumerate() {
                let row = r * cols..(r + 1) * cols;
                let dot: f64 = g[row.clone()].iter().zip(&y[row.clone()]).map(|(a, b)| a * b).sum();
                for i in row {
                    dx[i] = (g[i] - y[i] * dot) / n;
                }
            }
            accumulate(nodes, grads, *x, like(nodes, *x, dx));
        }
        &Op::Clamp { x, lo, hi } => {
            let xv = nodes[x].value.data();
            let dx = g
                .iter()
                .zip(xv)
                .map(|(&gi, &v)| if v >= lo && v <= hi { gi } else { 0.0 })
                .collect();
            accumulate(nodes, grads, x, like(nodes, x, dx));
        }
    }
}
