//! Raw slice kernels behind the tensor ops.
//!
//! Every kernel computes each output row independently, so row-parallel
//! execution is byte-identical to sequential execution.

use crate::par;
use crate::scalar::Scalar;

/// Minimum multiply-accumulate work per parallel task; below this, task
/// dispatch costs more than the arithmetic.
const MIN_TASK_WORK: usize = 1 << 16;

fn block_rows(rows: usize, work_per_row: usize) -> usize {
    let by_tasks = rows.div_ceil(16);
    let by_work = MIN_TASK_WORK.div_ceil(work_per_row.max(1));
    by_tasks.max(by_work).max(1)
}

/// C[m,n] = A[m,k] · B[k,n]
pub fn mm<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    let mut out = vec![F::ZERO; m * n];
    par::for_each_row_block(&mut out, n, block_rows(m, k * n), |row0, block| {
        for (r, crow) in block.chunks_mut(n).enumerate() {
            let i = row0 + r;
            let arow = &a[i * k..(i + 1) * k];
            for (kk, &aik) in arow.iter().enumerate() {
                let brow = &b[kk * n..(kk + 1) * n];
                for (c, &bv) in crow.iter_mut().zip(brow.iter()) {
                    *c += aik * bv;
                }
            }
        }
    });
    out
}

/// C[m,p] = A[m,d] · B[p,d]ᵀ  (dot products of rows)
pub fn mm_nt<F: Scalar>(a: &[F], b: &[F], m: usize, d: usize, p: usize) -> Vec<F> {
    let mut out = vec![F::ZERO; m * p];
    par::for_each_row_block(&mut out, p, block_rows(m, d * p), |row0, block| {
        for (r, crow) in block.chunks_mut(p).enumerate() {
            let i = row0 + r;
            let arow = &a[i * d..(i + 1) * d];
            for (j, c) in crow.iter_mut().enumerate() {
                let brow = &b[j * d..(j + 1) * d];
                let mut acc = F::ZERO;
                for (&av, &bv) in arow.iter().zip(brow.iter()) {
                    acc += av * bv;
                }
                *c = acc;
            }
        }
    });
    out
}

/// C[k,n] = A[m,k]ᵀ · G[m,n]
pub fn mm_tn<F: Scalar>(a: &[F], g: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    let mut out = vec![F::ZERO; k * n];
    par::for_each_row_block(&mut out, n, block_rows(k, m * n), |row0, block| {
        for (r, crow) in block.chunks_mut(n).enumerate() {
            let kk = row0 + r;
            for i in 0..m {
                let aik = a[i * k + kk];
                let grow = &g[i * n..(i + 1) * n];
                for (c, &gv) in crow.iter_mut().zip(grow.iter()) {
                    *c += aik * gv;
                }
            }
        }
    });
    out
}

/// Batched matmul: C[b] = A[b] · B[b] for b in 0..bt.
pub fn bmm<F: Scalar>(a: &[F], b: &[F], bt: usize, m: usize, k: usize, n: usize) -> Vec<F> {
    let mut out = vec![F::ZERO; bt * m * n];
    par::for_each_row_block(&mut out, m * n, block_rows(bt, m * k * n), |b0, block| {
        for (r, cmat) in block.chunks_mut(m * n).enumerate() {
            let bi = b0 + r;
            let amat = &a[bi * m * k..(bi + 1) * m * k];
            let bmat = &b[bi * k * n..(bi + 1) * k * n];
            for i in 0..m {
                let arow = &amat[i * k..(i + 1) * k];
                let crow = &mut cmat[i * n..(i + 1) * n];
                for (kk, &aik) in arow.iter().enumerate() {
                    let brow = &bmat[kk * n..(kk + 1) * n];
                    for (c, &bv) in crow.iter_mut().zip(brow.iter()) {
                        *c += aik * bv;
                    }
                }
            }
        }
    });
    out
}

/// Row-wise softmax in place, with max subtraction.
pub fn softmax_rows<F: Scalar>(x: &mut [F], cols: usize) {
    for row in x.chunks_mut(cols) {
        let mut mx = row[0];
        for &v in row.iter() {
            mx = mx.maximum(v);
        }
        let mut sum = F::ZERO;
        for v in row.iter_mut() {
            *v = (*v - mx).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// Row-wise log-softmax in place.
pub fn log_softmax_rows<F: Scalar>(x: &mut [F], cols: usize) {
    for row in x.chunks_mut(cols) {
        let mut mx = row[0];
        for &v in row.iter() {
            mx = mx.maximum(v);
        }
        let mut sum = F::ZERO;
        for &v in row.iter() {
            sum += (v - mx).exp();
        }
        let lse = mx + sum.ln();
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
}

/// Row-wise masked softmax. Masked entries get weight zero; rows with no
/// unmasked entry become all-zero rather than non-finite.
pub fn masked_softmax_rows<F: Scalar>(x: &mut [F], mask: &[F], cols: usize) {
    for (row, mrow) in x.chunks_mut(cols).zip(mask.chunks(cols)) {
        let mut mx = None::<F>;
        for (&v, &m) in row.iter().zip(mrow.iter()) {
            if m > F::ZERO {
                mx = Some(match mx {
                    Some(cur) => cur.maximum(v),
                    None => v,
                });
            }
        }
        let Some(mx) = mx else {
            for v in row.iter_mut() {
                *v = F::ZERO;
            }
            continue;
        };
        let mut sum = F::ZERO;
        for (v, &m) in row.iter_mut().zip(mrow.iter()) {
            if m > F::ZERO {
                *v = (*v - mx).exp();
                sum += *v;
            } else {
                *v = F::ZERO;
            }
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// Row-wise layer normalization with affine transform.
pub fn layer_norm_rows<F: Scalar>(x: &[F], gamma: &[F], beta: &[F], cols: usize, eps: F) -> Vec<F> {
    let mut out = vec![F::ZERO; x.len()];
    for (orow, xrow) in out.chunks_mut(cols).zip(x.chunks(cols)) {
        let (mu, inv) = row_moments(xrow, eps);
        for ((o, &v), (&g, &b)) in orow
            .iter_mut()
            .zip(xrow.iter())
            .zip(gamma.iter().zip(beta.iter()))
        {
            *o = (v - mu) * inv * g + b;
        }
    }
    out
}

/// Mean and inverse stddev of one row (biased variance).
pub fn row_moments<F: Scalar>(row: &[F], eps: F) -> (F, F) {
    let n = F::from_usize(row.len());
    let mut mu = F::ZERO;
    for &v in row {
        mu += v;
    }
    mu /= n;
    let mut var = F::ZERO;
    for &v in row {
        let d = v - mu;
        var += d * d;
    }
    var /= n;
    (mu, F::ONE / (var + eps).sqrt())
}

/// Copy with two axes swapped.
pub fn transpose<F: Scalar>(x: &[F], shape: &[usize], a0: usize, a1: usize) -> Vec<F> {
    let rank = shape.len();
    let mut out_shape = shape.to_vec();
    out_shape.swap(a0, a1);

    let mut in_strides = vec![1usize; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * shape[i + 1];
    }
    // stride of each output axis in the input buffer
    let mut perm_strides = in_strides.clone();
    perm_strides.swap(a0, a1);

    let numel: usize = shape.iter().product();
    let mut out = vec![F::ZERO; numel];
    let inner = out_shape[rank - 1];
    let inner_stride = perm_strides[rank - 1];
    par::for_each_row_block(
        &mut out,
        inner,
        block_rows(numel / inner.max(1), inner),
        |row0, block| {
            for (r, orow) in block.chunks_mut(inner).enumerate() {
                // decompose the leading coordinates of output row (row0 + r)
                let mut rem = row0 + r;
                let mut base = 0usize;
                for ax in (0..rank - 1).rev() {
                    let c = rem % out_shape[ax];
                    rem /= out_shape[ax];
                    base += c * perm_strides[ax];
                }
                for (j, o) in orow.iter_mut().enumerate() {
                    *o = x[base + j * inner_stride];
                }
            }
        },
    );
    out
}
