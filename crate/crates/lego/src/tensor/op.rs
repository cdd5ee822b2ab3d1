//! Forward primitives. Each op validates shapes, computes its result, and
//! records a graph node when any input tracks gradients (and grad recording
//! is not suppressed).

use std::sync::Arc;

use super::{grad_suppressed, kernels, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub(crate) enum Op<F: Scalar> {
    Add(Tensor<F>, Tensor<F>),
    /// `[..., d] + [d]`, the one permitted row broadcast.
    AddBias(Tensor<F>, Tensor<F>),
    AddConst(Tensor<F>),
    Sub(Tensor<F>, Tensor<F>),
    Mul(Tensor<F>, Tensor<F>),
    MulConst(Tensor<F>, F),
    Matmul(Tensor<F>, Tensor<F>),
    Bmm(Tensor<F>, Tensor<F>),
    Transpose(Tensor<F>, usize, usize),
    Reshape(Tensor<F>),
    Concat(Vec<Tensor<F>>, usize),
    Slice {
        input: Tensor<F>,
        axis: usize,
        start: usize,
        len: usize,
    },
    GatherRows(Tensor<F>, Arc<Vec<u32>>),
    Softmax(Tensor<F>),
    LogSoftmax(Tensor<F>),
    /// The mask is consumed at forward time and treated as a constant; the
    /// VJP only needs the output weights.
    MaskedSoftmax(Tensor<F>),
    MaskedMean(Tensor<F>, Tensor<F>),
    SumAll(Tensor<F>),
    SumAxis(Tensor<F>, usize),
    Sigmoid(Tensor<F>),
    Tanh(Tensor<F>),
    Relu(Tensor<F>),
    Exp(Tensor<F>),
    Log(Tensor<F>),
    LayerNorm {
        x: Tensor<F>,
        gamma: Tensor<F>,
        beta: Tensor<F>,
        eps: F,
    },
}

impl<F: Scalar> Op<F> {
    pub(crate) fn parents(&self) -> Vec<Tensor<F>> {
        match self {
            Op::Add(a, b) | Op::AddBias(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                vec![a.clone(), b.clone()]
            }
            Op::Matmul(a, b) | Op::Bmm(a, b) => vec![a.clone(), b.clone()],
            Op::AddConst(a)
            | Op::MulConst(a, _)
            | Op::Transpose(a, _, _)
            | Op::Reshape(a)
            | Op::Slice { input: a, .. }
            | Op::GatherRows(a, _)
            | Op::Softmax(a)
            | Op::LogSoftmax(a)
            | Op::MaskedSoftmax(a)
            | Op::MaskedMean(a, _)
            | Op::SumAll(a)
            | Op::SumAxis(a, _)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Relu(a)
            | Op::Exp(a)
            | Op::Log(a) => vec![a.clone()],
            Op::Concat(parts, _) => parts.clone(),
            Op::LayerNorm { x, gamma, beta, .. } => {
                vec![x.clone(), gamma.clone(), beta.clone()]
            }
        }
    }
}

fn result<F: Scalar>(
    shape: Vec<usize>,
    data: Vec<F>,
    tracks: bool,
    op: impl FnOnce() -> Op<F>,
) -> Tensor<F> {
    if tracks && !grad_suppressed() {
        Tensor::new_node(shape, data, Some(op()))
    } else {
        Tensor::new_node(shape, data, None)
    }
}

fn same_shape<F: Scalar>(op: &'static str, a: &Tensor<F>, b: &Tensor<F>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dim(
            op,
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

impl<F: Scalar> Tensor<F> {
    pub fn add(&self, other: &Tensor<F>) -> Result<Tensor<F>> {
        same_shape("add", self, other)?;
        let a = self.read();
        let b = other.read();
        let data = a.iter().zip(b.iter()).map(|(&x, &y)| x + y).collect();
        drop(a);
        drop(b);
        let tracks = self.tracks_grad() || other.tracks_grad();
        Ok(result(self.shape().to_vec(), data, tracks, || {
            Op::Add(self.clone(), other.clone())
        }))
    }

    /// Add a `[d]` bias row to every row of a `[..., d]` tensor.
    pub fn add_bias(&self, bias: &Tensor<F>) -> Result<Tensor<F>> {
        let d = *self.shape().last().unwrap_or(&0);
        if self.rank() < 2 || bias.shape() != [d] {
            return Err(Error::dim(
                "add_bias",
                format!("{:?} + bias {:?}", self.shape(), bias.shape()),
            ));
        }
        let a = self.read();
        let b = bias.read();
        let mut data = a.clone();
        drop(a);
        for row in data.chunks_mut(d) {
            for (v, &bv) in row.iter_mut().zip(b.iter()) {
                *v += bv;
            }
        }
        drop(b);
        let tracks = self.tracks_grad() || bias.tracks_grad();
        Ok(result(self.shape().to_vec(), data, tracks, || {
            Op::AddBias(self.clone(), bias.clone())
        }))
    }

    pub fn add_scalar(&self, c: F) -> Tensor<F> {
        let data = self.read().iter().map(|&x| x + c).collect();
        result(self.shape().to_vec(), data, self.tracks_grad(), || {
            Op::AddConst(self.clone())
        })
    }

    pub fn sub(&self, other: &Tensor<F>) -> Result<Tensor<F>> {
        same_shape("sub", self, other)?;
        let a = self.read();
        let b = other.read();
        let data = a.iter().zip(b.iter()).map(|(&x, &y)| x - y).collect();
        drop(a);
        drop(b);
        let tracks = self.tracks_grad() || other.tracks_grad();
        Ok(result(self.shape().to_vec(), data, tracks, || {
            Op::Sub(self.clone(), other.clone())
        }))
    }

    pub fn mul(&self, other: &Tensor<F>) -> Result<Tensor<F>> {
        same_shape("mul", self, other)?;
        let a = self.read();
        let b = other.read();
        let data = a.iter().zip(b.iter()).map(|(&x, &y)| x * y).collect();
        drop(a);
        drop(b);
        let tracks = self.tracks_grad() || other.tracks_grad();
        Ok(result(self.shape().to_vec(), data, tracks, || {
            Op::Mul(self.clone(), other.clone())
        }))
    }

    pub fn mul_scalar(&self, c: F) -> Tensor<F> {
        let data = self.read().iter().map(|&x| x * c).collect();
        result(self.shape().to_vec(), data, self.tracks_grad(), || {
            Op::MulConst(self.clone(), c)
        })
    }

    /// 2-D matrix product `[m,k] · [k,n]`.
    pub fn matmul(&self, other: &Tensor<F>) -> Result<Tensor<F>> {
        if self.rank() != 2 || other.rank() != 2 || self.shape()[1] != other.shape()[0] {
            return Err(Error::dim(
                "matmul",
                format!("{:?} x {:?}", self.shape(), other.shape()),
            ));
        }
        let (m, k) = (self.shape()[0], self.shape()[1]);
        let n = other.shape()[1];
        let data = kernels::mm(&self.read(), &other.read(), m, k, n);
        let tracks = self.tracks_grad() || other.tracks_grad();
        Ok(result(vec![m, n], data, tracks, || {
            Op::Matmul(self.clone(), other.clone())
        }))
    }

    /// Batched matrix product `[b,m,k] · [b,k,n]`.
    pub fn bmm(&self, other: &Tensor<F>) -> Result<Tensor<F>> {
        if self.rank() != 3
            || other.rank() != 3
            || self.shape()[0] != other.shape()[0]
            || self.shape()[2] != other.shape()[1]
        {
            return Err(Error::dim(
                "bmm",
                format!("{:?} x {:?}", self.shape(), other.shape()),
            ));
        }
        let (bt, m, k) = (self.shape()[0], self.shape()[1], self.shape()[2]);
        let n = other.shape()[2];
        let data = kernels::bmm(&self.read(), &other.read(), bt, m, k, n);
        let tracks = self.tracks_grad() || other.tracks_grad();
        Ok(result(vec![bt, m, n], data, tracks, || {
            Op::Bmm(self.clone(), other.clone())
        }))
    }

    pub fn transpose(&self, a0: usize, a1: usize) -> Result<Tensor<F>> {
        if a0 >= self.rank() || a1 >= self.rank() || a0 == a1 {
            return Err(Error::dim(
                "transpose",
                format!("axes ({a0},{a1}) on shape {:?}", self.shape()),
            ));
        }
        let data = kernels::transpose(&self.read(), self.shape(), a0, a1);
        let mut shape = self.shape().to_vec();
        shape.swap(a0, a1);
        Ok(result(shape, data, self.tracks_grad(), || {
            Op::Transpose(self.clone(), a0, a1)
        }))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<F>> {
        let numel: usize = shape.iter().product();
        if numel != self.numel() {
            return Err(Error::dim(
                "reshape",
                format!("{:?} -> {:?}", self.shape(), shape),
            ));
        }
        let data = self.to_vec();
        Ok(result(shape.to_vec(), data, self.tracks_grad(), || {
            Op::Reshape(self.clone())
        }))
    }

    pub fn concat(parts: &[Tensor<F>], axis: usize) -> Result<Tensor<F>> {
        if parts.is_empty() {
            return Err(Error::dim("concat", "no inputs"));
        }
        let rank = parts[0].rank();
        if axis >= rank {
            return Err(Error::dim("concat", format!("axis {axis} for rank {rank}")));
        }
        let mut out_shape = parts[0].shape().to_vec();
        for p in &parts[1..] {
            if p.rank() != rank {
                return Err(Error::dim("concat", "rank mismatch"));
            }
            for ax in 0..rank {
                if ax != axis && p.shape()[ax] != out_shape[ax] {
                    return Err(Error::dim(
                        "concat",
                        format!("{:?} vs {:?} at axis {ax}", p.shape(), out_shape),
                    ));
                }
            }
            out_shape[axis] += p.shape()[axis];
        }
        // outer = product of dims before axis; per-part inner block length
        let outer: usize = out_shape[..axis].iter().product();
        let tail: usize = out_shape[axis + 1..].iter().product();
        let numel: usize = out_shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        let guards: Vec<_> = parts.iter().map(|p| p.read()).collect();
        for o in 0..outer {
            for (p, g) in parts.iter().zip(guards.iter()) {
                let block = p.shape()[axis] * tail;
                data.extend_from_slice(&g[o * block..(o + 1) * block]);
            }
        }
        drop(guards);
        let tracks = parts.iter().any(|p| p.tracks_grad());
        let parts_owned: Vec<_> = parts.to_vec();
        Ok(result(out_shape, data, tracks, || {
            Op::Concat(parts_owned, axis)
        }))
    }

    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Tensor<F>> {
        if axis >= self.rank() || start + len > self.shape()[axis] {
            return Err(Error::dim(
                "slice",
                format!(
                    "axis {axis} range {start}..{} on shape {:?}",
                    start + len,
                    self.shape()
                ),
            ));
        }
        let outer: usize = self.shape()[..axis].iter().product();
        let tail: usize = self.shape()[axis + 1..].iter().product();
        let full = self.shape()[axis] * tail;
        let mut data = Vec::with_capacity(outer * len * tail);
        let g = self.read();
        for o in 0..outer {
            let base = o * full + start * tail;
            data.extend_from_slice(&g[base..base + len * tail]);
        }
        drop(g);
        let mut shape = self.shape().to_vec();
        shape[axis] = len;
        Ok(result(shape, data, self.tracks_grad(), || Op::Slice {
            input: self.clone(),
            axis,
            start,
            len,
        }))
    }

    /// Gather rows along axis 0; the embedding-lookup primitive. Backward
    /// scatter-adds, so repeated indices accumulate.
    pub fn gather_rows(&self, indices: &[u32]) -> Result<Tensor<F>> {
        if self.rank() < 1 {
            return Err(Error::dim("gather", "rank 0 input"));
        }
        let rows = self.shape()[0];
        let row_len: usize = self.shape()[1..].iter().product();
        let g = self.read();
        let mut data = Vec::with_capacity(indices.len() * row_len);
        for &idx in indices.iter() {
            let idx = idx as usize;
            if idx >= rows {
                return Err(Error::Index {
                    op: "gather",
                    index: idx,
                    bound: rows,
                });
            }
            data.extend_from_slice(&g[idx * row_len..(idx + 1) * row_len]);
        }
        drop(g);
        let mut shape = self.shape().to_vec();
        shape[0] = indices.len();
        let idx_arc = Arc::new(indices.to_vec());
        Ok(result(shape, data, self.tracks_grad(), || {
            Op::GatherRows(self.clone(), idx_arc)
        }))
    }

    pub fn softmax_last(&self) -> Result<Tensor<F>> {
        let cols = self.last_dim("softmax")?;
        let mut data = self.to_vec();
        kernels::softmax_rows(&mut data, cols);
        Ok(result(
            self.shape().to_vec(),
            data,
            self.tracks_grad(),
            || Op::Softmax(self.clone()),
        ))
    }

    pub fn log_softmax_last(&self) -> Result<Tensor<F>> {
        let cols = self.last_dim("log_softmax")?;
        let mut data = self.to_vec();
        kernels::log_softmax_rows(&mut data, cols);
        Ok(result(
            self.shape().to_vec(),
            data,
            self.tracks_grad(),
            || Op::LogSoftmax(self.clone()),
        ))
    }

    /// Softmax over the last axis restricted to positions where `mask > 0`.
    /// Fully masked rows yield all-zero weights.
    pub fn masked_softmax_last(&self, mask: &Tensor<F>) -> Result<Tensor<F>> {
        same_shape("masked_softmax", self, mask)?;
        let cols = self.last_dim("masked_softmax")?;
        let mut data = self.to_vec();
        kernels::masked_softmax_rows(&mut data, &mask.read(), cols);
        Ok(result(
            self.shape().to_vec(),
            data,
            self.tracks_grad(),
            || Op::MaskedSoftmax(self.clone()),
        ))
    }

    /// Mean over axis 1 of the positions where `mask > 0`.
    /// `[b,l]` with mask `[b,l]` gives `[b]`; `[b,l,d]` gives `[b,d]`.
    /// Rows with an empty mask produce zeros.
    pub fn masked_mean_axis1(&self, mask: &Tensor<F>) -> Result<Tensor<F>> {
        let ok = match self.rank() {
            2 => mask.shape() == self.shape(),
            3 => mask.shape() == &self.shape()[..2],
            _ => false,
        };
        if !ok {
            return Err(Error::dim(
                "masked_mean",
                format!("input {:?} mask {:?}", self.shape(), mask.shape()),
            ));
        }
        let b = self.shape()[0];
        let l = self.shape()[1];
        let d: usize = self.shape()[2..].iter().product::<usize>().max(1);
        let x = self.read();
        let m = mask.read();
        let mut data = vec![F::ZERO; b * d];
        for bi in 0..b {
            let mut count = F::ZERO;
            for li in 0..l {
                if m[bi * l + li] > F::ZERO {
                    count += F::ONE;
                    let src = &x[(bi * l + li) * d..(bi * l + li + 1) * d];
                    let dst = &mut data[bi * d..(bi + 1) * d];
                    for (o, &v) in dst.iter_mut().zip(src.iter()) {
                        *o += v;
                    }
                }
            }
            if count > F::ZERO {
                for o in data[bi * d..(bi + 1) * d].iter_mut() {
                    *o /= count;
                }
            }
        }
        drop(x);
        drop(m);
        let shape = if self.rank() == 2 {
            vec![b]
        } else {
            vec![b, d]
        };
        Ok(result(shape, data, self.tracks_grad(), || {
            Op::MaskedMean(self.clone(), mask.clone())
        }))
    }

    /// Sum of all elements; the result is a scalar (shape `[]`).
    pub fn sum_all(&self) -> Tensor<F> {
        let mut acc = F::ZERO;
        for &v in self.read().iter() {
            acc += v;
        }
        result(vec![], vec![acc], self.tracks_grad(), || {
            Op::SumAll(self.clone())
        })
    }

    pub fn mean_all(&self) -> Tensor<F> {
        let n = F::from_usize(self.numel());
        self.sum_all().mul_scalar(F::ONE / n)
    }

    /// Sum over one axis; that axis is dropped from the shape.
    pub fn sum_axis(&self, axis: usize) -> Result<Tensor<F>> {
        if axis >= self.rank() {
            return Err(Error::dim(
                "sum_axis",
                format!("axis {axis} on shape {:?}", self.shape()),
            ));
        }
        let outer: usize = self.shape()[..axis].iter().product();
        let ax = self.shape()[axis];
        let tail: usize = self.shape()[axis + 1..].iter().product();
        let x = self.read();
        let mut data = vec![F::ZERO; outer * tail];
        for o in 0..outer {
            for a in 0..ax {
                let src = &x[(o * ax + a) * tail..(o * ax + a + 1) * tail];
                let dst = &mut data[o * tail..(o + 1) * tail];
                for (d, &v) in dst.iter_mut().zip(src.iter()) {
                    *d += v;
                }
            }
        }
        drop(x);
        let mut shape = self.shape().to_vec();
        shape.remove(axis);
        Ok(result(shape, data, self.tracks_grad(), || {
            Op::SumAxis(self.clone(), axis)
        }))
    }

    pub fn sigmoid(&self) -> Tensor<F> {
        let data = self.read().iter().map(|&x| x.sigmoid()).collect();
        result(self.shape().to_vec(), data, self.tracks_grad(), || {
            Op::Sigmoid(self.clone())
        })
    }

    pub fn tanh(&self) -> Tensor<F> {
        let data = self.read().iter().map(|&x| x.tanh()).collect();
        result(self.shape().to_vec(), data, self.tracks_grad(), || {
            Op::Tanh(self.clone())
        })
    }

    pub fn relu(&self) -> Tensor<F> {
        let data = self
            .read()
            .iter()
            .map(|&x| if x > F::ZERO { x } else { F::ZERO })
            .collect();
        result(self.shape().to_vec(), data, self.tracks_grad(), || {
            Op::Relu(self.clone())
        })
    }

    pub fn exp(&self) -> Tensor<F> {
        let data = self.read().iter().map(|&x| x.exp()).collect();
        result(self.shape().to_vec(), data, self.tracks_grad(), || {
            Op::Exp(self.clone())
        })
    }

    pub fn log(&self) -> Tensor<F> {
        let data = self.read().iter().map(|&x| x.ln()).collect();
        result(self.shape().to_vec(), data, self.tracks_grad(), || {
            Op::Log(self.clone())
        })
    }

    /// Layer normalization over the last axis with affine parameters.
    pub fn layer_norm(&self, gamma: &Tensor<F>, beta: &Tensor<F>, eps: F) -> Result<Tensor<F>> {
        let d = self.last_dim("layer_norm")?;
        if gamma.shape() != [d] || beta.shape() != [d] {
            return Err(Error::dim(
                "layer_norm",
                format!(
                    "input {:?}, gamma {:?}, beta {:?}",
                    self.shape(),
                    gamma.shape(),
                    beta.shape()
                ),
            ));
        }
        let data = kernels::layer_norm_rows(&self.read(), &gamma.read(), &beta.read(), d, eps);
        let tracks = self.tracks_grad() || gamma.tracks_grad() || beta.tracks_grad();
        Ok(result(self.shape().to_vec(), data, tracks, || {
            Op::LayerNorm {
                x: self.clone(),
                gamma: gamma.clone(),
                beta: beta.clone(),
                eps,
            }
        }))
    }

    fn last_dim(&self, op: &'static str) -> Result<usize> {
        match self.shape().last() {
            Some(&d) if d > 0 => Ok(d),
            _ => Err(Error::dim(op, format!("shape {:?}", self.shape()))),
        }
    }
}
