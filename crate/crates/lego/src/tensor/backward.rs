//! Reverse pass: topological sort over the recorded graph, one
//! vector-Jacobian product per op, additive accumulation into leaf grads.

use std::collections::{HashMap, HashSet};

use super::{kernels, Op, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

impl<F: Scalar> Tensor<F> {
    /// Populate `grad` on every reachable non-frozen leaf with d self / d leaf.
    /// Gradients accumulate additively across calls; `zero_grad` between steps.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward on non-scalar tensor of shape {:?}",
                self.shape()
            )));
        }
        if !self.tracks_grad() {
            return Ok(());
        }

        let order = topo_order(self);
        let mut grads: HashMap<u64, Vec<F>> = HashMap::new();
        grads.insert(self.id(), vec![F::ONE]);

        for node in order.iter().rev() {
            let Some(g) = grads.remove(&node.id()) else {
                continue;
            };
            match node.op() {
                None => node.accumulate_grad(&g),
                Some(op) => apply_vjp(node, op, &g, &mut grads),
            }
        }
        Ok(())
    }
}

/// Post-order DFS over grad-tracking nodes; result has parents before
/// children, so the reverse order is a valid backward schedule.
fn topo_order<F: Scalar>(root: &Tensor<F>) -> Vec<Tensor<F>> {
    let mut order = Vec::new();
    let mut visited = HashSet::new();
    let mut stack: Vec<(Tensor<F>, bool)> = vec![(root.clone(), false)];
    while let Some((node, expanded)) = stack.pop() {
        if expanded {
            order.push(node);
            continue;
        }
        if !visited.insert(node.id()) {
            continue;
        }
        stack.push((node.clone(), true));
        if let Some(op) = node.op() {
            for parent in op.parents() {
                if parent.tracks_grad() && !visited.contains(&parent.id()) {
                    stack.push((parent, false));
                }
            }
        }
    }
    order
}

fn accumulate<F: Scalar>(
    grads: &mut HashMap<u64, Vec<F>>,
    parent: &Tensor<F>,
    contribution: impl FnOnce() -> Vec<F>,
) {
    if !parent.tracks_grad() {
        return;
    }
    let entry = grads
        .entry(parent.id())
        .or_insert_with(|| vec![F::ZERO; parent.numel()]);
    for (e, c) in entry.iter_mut().zip(contribution()) {
        *e += c;
    }
}

fn apply_vjp<F: Scalar>(node: &Tensor<F>, op: &Op<F>, g: &[F], grads: &mut HashMap<u64, Vec<F>>) {
    match op {
        Op::Add(a, b) => {
            accumulate(grads, a, || g.to_vec());
            accumulate(grads, b, || g.to_vec());
        }
        Op::AddBias(a, bias) => {
            accumulate(grads, a, || g.to_vec());
            accumulate(grads, bias, || {
                let d = bias.numel();
                let mut out = vec![F::ZERO; d];
                for row in g.chunks(d) {
                    for (o, &v) in out.iter_mut().zip(row.iter()) {
                        *o += v;
                    }
                }
                out
            });
        }
        Op::AddConst(a) => accumulate(grads, a, || g.to_vec()),
        Op::Sub(a, b) => {
            accumulate(grads, a, || g.to_vec());
            accumulate(grads, b, || g.iter().map(|&v| -v).collect());
        }
        Op::Mul(a, b) => {
            accumulate(grads, a, || {
                b.read()
                    .iter()
                    .zip(g.iter())
                    .map(|(&bv, &gv)| bv * gv)
                    .collect()
            });
            accumulate(grads, b, || {
                a.read()
                    .iter()
                    .zip(g.iter())
                    .map(|(&av, &gv)| av * gv)
                    .collect()
            });
        }
        Op::MulConst(a, c) => {
            accumulate(grads, a, || g.iter().map(|&v| v * *c).collect());
        }
        Op::Matmul(a, b) => {
            let (m, k) = (a.shape()[0], a.shape()[1]);
            let n = b.shape()[1];
            accumulate(grads, a, || kernels::mm_nt(g, &b.read(), m, n, k));
            accumulate(grads, b, || kernels::mm_tn(&a.read(), g, m, k, n));
        }
        Op::Bmm(a, b) => {
            let (bt, m, k) = (a.shape()[0], a.shape()[1], a.shape()[2]);
            let n = b.shape()[2];
            accumulate(grads, a, || {
                let bd = b.read();
                let mut out = vec![F::ZERO; bt * m * k];
                for bi in 0..bt {
                    let da = kernels::mm_nt(
                        &g[bi * m * n..(bi + 1) * m * n],
                        &bd[bi * k * n..(bi + 1) * k * n],
                        m,
                        n,
                        k,
                    );
                    out[bi * m * k..(bi + 1) * m * k].copy_from_slice(&da);
                }
                out
            });
            accumulate(grads, b, || {
                let ad = a.read();
                let mut out = vec![F::ZERO; bt * k * n];
                for bi in 0..bt {
                    let db = kernels::mm_tn(
                        &ad[bi * m * k..(bi + 1) * m * k],
                        &g[bi * m * n..(bi + 1) * m * n],
                        m,
                        k,
                        n,
                    );
                    out[bi * k * n..(bi + 1) * k * n].copy_from_slice(&db);
                }
                out
            });
        }
        Op::Transpose(a, a0, a1) => {
            accumulate(grads, a, || kernels::transpose(g, node.shape(), *a0, *a1));
        }
        Op::Reshape(a) => accumulate(grads, a, || g.to_vec()),
        Op::Concat(parts, axis) => {
            let axis = *axis;
            let out_shape = node.shape();
            let outer: usize = out_shape[..axis].iter().product();
            let tail: usize = out_shape[axis + 1..].iter().product();
            let total_block: usize = out_shape[axis] * tail;
            let mut offset = 0usize;
            for p in parts {
                let block = p.shape()[axis] * tail;
                let start = offset;
                accumulate(grads, p, || {
                    let mut out = Vec::with_capacity(outer * block);
                    for o in 0..outer {
                        let base = o * total_block + start;
                        out.extend_from_slice(&g[base..base + block]);
                    }
                    out
                });
                offset += block;
            }
        }
        Op::Slice {
            input,
            axis,
            start,
            len,
        } => {
            let axis = *axis;
            let in_shape = input.shape();
            let outer: usize = in_shape[..axis].iter().product();
            let tail: usize = in_shape[axis + 1..].iter().product();
            let full = in_shape[axis] * tail;
            accumulate(grads, input, || {
                let mut out = vec![F::ZERO; input.numel()];
                for o in 0..outer {
                    let dst = o * full + start * tail;
                    let src = o * len * tail;
                    out[dst..dst + len * tail].copy_from_slice(&g[src..src + len * tail]);
                }
                out
            });
        }
        Op::GatherRows(table, indices) => {
            let row_len: usize = table.shape()[1..].iter().product();
            accumulate(grads, table, || {
                let mut out = vec![F::ZERO; table.numel()];
                for (pos, &idx) in indices.iter().enumerate() {
                    let dst = &mut out[idx as usize * row_len..(idx as usize + 1) * row_len];
                    let src = &g[pos * row_len..(pos + 1) * row_len];
                    for (d, &s) in dst.iter_mut().zip(src.iter()) {
                        *d += s;
                    }
                }
                out
            });
        }
        Op::Softmax(a) | Op::MaskedSoftmax(a) => {
            // dx = s * (g - <g, s>) per row; masked entries have s = 0
            let cols = *node.shape().last().unwrap();
            accumulate(grads, a, || {
                let s = node.read();
                let mut out = vec![F::ZERO; s.len()];
                for ((orow, srow), grow) in
                    out.chunks_mut(cols).zip(s.chunks(cols)).zip(g.chunks(cols))
                {
                    let mut dot = F::ZERO;
                    for (&sv, &gv) in srow.iter().zip(grow.iter()) {
                        dot += sv * gv;
                    }
                    for ((o, &sv), &gv) in orow.iter_mut().zip(srow.iter()).zip(grow.iter()) {
                        *o = sv * (gv - dot);
                    }
                }
                out
            });
        }
        Op::LogSoftmax(a) => {
            let cols = *node.shape().last().unwrap();
            accumulate(grads, a, || {
                let lsm = node.read();
                let mut out = vec![F::ZERO; lsm.len()];
                for ((orow, lrow), grow) in out
                    .chunks_mut(cols)
                    .zip(lsm.chunks(cols))
                    .zip(g.chunks(cols))
                {
                    let mut gsum = F::ZERO;
                    for &gv in grow.iter() {
                        gsum += gv;
                    }
                    for ((o, &lv), &gv) in orow.iter_mut().zip(lrow.iter()).zip(grow.iter()) {
                        *o = gv - lv.exp() * gsum;
                    }
                }
                out
            });
        }
        Op::MaskedMean(a, mask) => {
            let b = a.shape()[0];
            let l = a.shape()[1];
            let d: usize = a.shape()[2..].iter().product::<usize>().max(1);
            accumulate(grads, a, || {
                let m = mask.read();
                let mut out = vec![F::ZERO; a.numel()];
                for bi in 0..b {
                    let mut count = F::ZERO;
                    for li in 0..l {
                        if m[bi * l + li] > F::ZERO {
                            count += F::ONE;
                        }
                    }
                    if count <= F::ZERO {
                        continue;
                    }
                    let inv = F::ONE / count;
                    for li in 0..l {
                        if m[bi * l + li] > F::ZERO {
                            let dst = &mut out[(bi * l + li) * d..(bi * l + li + 1) * d];
                            let src = &g[bi * d..(bi + 1) * d];
                            for (o, &v) in dst.iter_mut().zip(src.iter()) {
                                *o += v * inv;
                            }
                        }
                    }
                }
                out
            });
        }
        Op::SumAll(a) => {
            accumulate(grads, a, || vec![g[0]; a.numel()]);
        }
        Op::SumAxis(a, axis) => {
            let axis = *axis;
            let outer: usize = a.shape()[..axis].iter().product();
            let ax = a.shape()[axis];
            let tail: usize = a.shape()[axis + 1..].iter().product();
            accumulate(grads, a, || {
                let mut out = vec![F::ZERO; a.numel()];
                for o in 0..outer {
                    let src = &g[o * tail..(o + 1) * tail];
                    for ai in 0..ax {
                        let dst = &mut out[(o * ax + ai) * tail..(o * ax + ai + 1) * tail];
                        dst.copy_from_slice(src);
                    }
                }
                out
            });
        }
        Op::Sigmoid(a) => {
            accumulate(grads, a, || {
                node.read()
                    .iter()
                    .zip(g.iter())
                    .map(|(&y, &gv)| gv * y * (F::ONE - y))
                    .collect()
            });
        }
        Op::Tanh(a) => {
            accumulate(grads, a, || {
                node.read()
                    .iter()
                    .zip(g.iter())
                    .map(|(&y, &gv)| gv * (F::ONE - y * y))
                    .collect()
            });
        }
        Op::Relu(a) => {
            accumulate(grads, a, || {
                a.read()
                    .iter()
                    .zip(g.iter())
                    .map(|(&x, &gv)| if x > F::ZERO { gv } else { F::ZERO })
                    .collect()
            });
        }
        Op::Exp(a) => {
            accumulate(grads, a, || {
                node.read()
                    .iter()
                    .zip(g.iter())
                    .map(|(&y, &gv)| gv * y)
                    .collect()
            });
        }
        Op::Log(a) => {
            accumulate(grads, a, || {
                a.read()
                    .iter()
                    .zip(g.iter())
                    .map(|(&x, &gv)| gv / x)
                    .collect()
            });
        }
        Op::LayerNorm {
            x,
            gamma,
            beta,
            eps,
        } => {
            let d = *node.shape().last().unwrap();
            let n = F::from_usize(d);
            accumulate(grads, x, || {
                let xd = x.read();
                let gm = gamma.read();
                let mut out = vec![F::ZERO; xd.len()];
                for ((orow, xrow), grow) in out.chunks_mut(d).zip(xd.chunks(d)).zip(g.chunks(d)) {
                    let (mu, inv) = kernels::row_moments(xrow, *eps);
                    let mut mean_h = F::ZERO;
                    let mut mean_hx = F::ZERO;
                    for ((&gv, &gmv), &xv) in grow.iter().zip(gm.iter()).zip(xrow.iter()) {
                        let h = gv * gmv;
                        let xhat = (xv - mu) * inv;
                        mean_h += h;
                        mean_hx += h * xhat;
                    }
                    mean_h /= n;
                    mean_hx /= n;
                    for ((o, (&gv, &gmv)), &xv) in orow
                        .iter_mut()
                        .zip(grow.iter().zip(gm.iter()))
                        .zip(xrow.iter())
                    {
                        let h = gv * gmv;
                        let xhat = (xv - mu) * inv;
                        *o = inv * (h - mean_h - xhat * mean_hx);
                    }
                }
                out
            });
            accumulate(grads, gamma, || {
                let xd = x.read();
                let mut out = vec![F::ZERO; d];
                for (xrow, grow) in xd.chunks(d).zip(g.chunks(d)) {
                    let (mu, inv) = kernels::row_moments(xrow, *eps);
                    for ((o, &xv), &gv) in out.iter_mut().zip(xrow.iter()).zip(grow.iter()) {
                        *o += gv * (xv - mu) * inv;
                    }
                }
                out
            });
            accumulate(grads, beta, || {
                let mut out = vec![F::ZERO; d];
                for grow in g.chunks(d) {
                    for (o, &gv) in out.iter_mut().zip(grow.iter()) {
                        *o += gv;
                    }
                }
                out
            });
        }
    }
}
