//! Building blocks shared by content and behavior operators: linear maps,
//! additive attention, multi-head self-attention, GRU, layer norm, dropout.
//!
//! Every block registers its weights as named `Parameter`s; initialization is
//! a pure function of the caller's seeded rng.

use rand::rngs::StdRng;
use rand::RngExt;

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::{Parameter, Tensor};

/// Uniform(-bound, bound) tensor.
pub fn uniform_init<F: Scalar>(rng: &mut StdRng, shape: &[usize], bound: f64) -> Tensor<F> {
    let numel: usize = shape.iter().product();
    let data = (0..numel)
        .map(|_| F::from_f64(rng.random_range(-bound..bound)))
        .collect();
    Tensor::new_leaf_unchecked(shape.to_vec(), data)
}

/// Xavier-uniform for projections.
pub fn xavier_init<F: Scalar>(rng: &mut StdRng, fan_in: usize, fan_out: usize) -> Tensor<F> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform_init(rng, &[fan_in, fan_out], bound)
}

/// Embedding-table init: uniform(-1/sqrt(d), 1/sqrt(d)).
pub fn table_init<F: Scalar>(rng: &mut StdRng, rows: usize, dim: usize) -> Tensor<F> {
    uniform_init(rng, &[rows, dim], 1.0 / (dim as f64).sqrt())
}

/// Expand a `[b, l]` mask into the `[b*heads, l, l]` key mask consumed by
/// batched attention. Constant; no gradient flows through masks.
pub fn expand_key_mask<F: Scalar>(mask: &Tensor<F>, heads: usize) -> Tensor<F> {
    let (b, l) = (mask.shape()[0], mask.shape()[1]);
    let m = mask.read_data();
    let mut out = Vec::with_capacity(b * heads * l * l);
    for bi in 0..b {
        let row = &m[bi * l..(bi + 1) * l];
        for _ in 0..heads * l {
            out.extend_from_slice(row);
        }
    }
    Tensor::from_vec(&[b * heads, l, l], out).unwrap()
}

/// Broadcast a `[b, d]` tensor to `[b, l, d]` through a constant-ones bmm so
/// gradients still reach the source.
pub fn expand_rows<F: Scalar>(x: &Tensor<F>, l: usize) -> Result<Tensor<F>> {
    let (b, d) = (x.shape()[0], x.shape()[1]);
    let ones = Tensor::full(&[b, l, 1], F::ONE);
    ones.bmm(&x.reshape(&[b, 1, d])?)
}

/// Inverted dropout: scales kept activations by 1/(1-p). Training-mode only;
/// the mask comes from the caller's seeded rng.
pub fn dropout<F: Scalar>(x: &Tensor<F>, p: f64, rng: &mut StdRng) -> Result<Tensor<F>> {
    if p <= 0.0 {
        return Ok(x.clone());
    }
    let keep = 1.0 - p;
    let scale = F::from_f64(1.0 / keep);
    let data: Vec<F> = (0..x.numel())
        .map(|_| {
            if rng.random_range(0.0..1.0) < keep {
                scale
            } else {
                F::ZERO
            }
        })
        .collect();
    let mask = Tensor::from_vec(x.shape(), data).unwrap();
    x.mul(&mask)
}

pub struct Linear<F: Scalar> {
    pub weight: Parameter<F>,
    pub bias: Option<Parameter<F>>,
    in_dim: usize,
    out_dim: usize,
}

impl<F: Scalar> Linear<F> {
    pub fn new(name: &str, in_dim: usize, out_dim: usize, bias: bool, rng: &mut StdRng) -> Self {
        let weight = Parameter::new(format!("{name}.weight"), xavier_init(rng, in_dim, out_dim));
        let bias = bias.then(|| {
            Parameter::new(
                format!("{name}.bias"),
                Tensor::new_leaf_unchecked(vec![out_dim], vec![F::ZERO; out_dim]),
            )
        });
        Linear {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    /// Apply to the last axis of a rank >= 2 tensor.
    pub fn forward(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let lead: usize = x.shape()[..x.rank() - 1].iter().product();
        let flat = x.reshape(&[lead, self.in_dim])?;
        let mut y = flat.matmul(self.weight.tensor())?;
        if let Some(b) = &self.bias {
            y = y.add_bias(b.tensor())?;
        }
        let mut shape = x.shape().to_vec();
        *shape.last_mut().unwrap() = self.out_dim;
        y.reshape(&shape)
    }

    pub fn params(&self) -> Vec<Parameter<F>> {
        let mut out = vec![self.weight.clone()];
        out.extend(self.bias.clone());
        out
    }
}

/// Additive attention pooling: softmax(tanh(xW + b) . q) over unmasked
/// positions, then a weighted sum. The NAML/NRMS sequence-to-vector head.
pub struct AdditiveAttention<F: Scalar> {
    proj: Linear<F>,
    query: Parameter<F>,
    attn_dim: usize,
}

impl<F: Scalar> AdditiveAttention<F> {
    pub fn new(name: &str, dim: usize, attn_dim: usize, rng: &mut StdRng) -> Self {
        let proj = Linear::new(&format!("{name}.proj"), dim, attn_dim, true, rng);
        let query = Parameter::new(
            format!("{name}.query"),
            uniform_init(rng, &[attn_dim], 1.0 / (attn_dim as f64).sqrt()),
        );
        AdditiveAttention {
            proj,
            query,
            attn_dim,
        }
    }

    /// Attention weights `[b, l]`; they sum to 1 over unmasked positions
    /// (all-zero rows when the mask is empty).
    pub fn weights(&self, x: &Tensor<F>, mask: &Tensor<F>) -> Result<Tensor<F>> {
        let (b, l) = (x.shape()[0], x.shape()[1]);
        let hidden = self.proj.forward(x)?.tanh();
        let scores = hidden
            .reshape(&[b * l, self.attn_dim])?
            .matmul(&self.query.tensor().reshape(&[self.attn_dim, 1])?)?
            .reshape(&[b, l])?;
        scores.masked_softmax_last(mask)
    }

    /// Pool `[b, l, d]` into `[b, d]`.
    pub fn pool(&self, x: &Tensor<F>, mask: &Tensor<F>) -> Result<Tensor<F>> {
        let (b, l, d) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let w = self.weights(x, mask)?;
        w.reshape(&[b, 1, l])?.bmm(x)?.reshape(&[b, d])
    }

    pub fn params(&self) -> Vec<Parameter<F>> {
        let mut out = self.proj.params();
        out.push(self.query.clone());
        out
    }
}

/// Multi-head scaled dot-product self-attention over a masked sequence.
pub struct MultiHeadSelfAttention<F: Scalar> {
    wq: Linear<F>,
    wk: Linear<F>,
    wv: Linear<F>,
    wo: Linear<F>,
    dim: usize,
    heads: usize,
}

impl<F: Scalar> MultiHeadSelfAttention<F> {
    pub fn new(name: &str, dim: usize, heads: usize, rng: &mut StdRng) -> Self {
        assert!(
            dim.is_multiple_of(heads),
            "dim {dim} not divisible by heads {heads}"
        );
        MultiHeadSelfAttention {
            wq: Linear::new(&format!("{name}.wq"), dim, dim, false, rng),
            wk: Linear::new(&format!("{name}.wk"), dim, dim, false, rng),
            wv: Linear::new(&format!("{name}.wv"), dim, dim, false, rng),
            wo: Linear::new(&format!("{name}.wo"), dim, dim, true, rng),
            dim,
            heads,
        }
    }

    fn split_heads(&self, x: &Tensor<F>, b: usize, l: usize) -> Result<Tensor<F>> {
        let dh = self.dim / self.heads;
        x.reshape(&[b, l, self.heads, dh])?
            .transpose(1, 2)?
            .reshape(&[b * self.heads, l, dh])
    }

    pub fn forward(&self, x: &Tensor<F>, mask: &Tensor<F>) -> Result<Tensor<F>> {
        let (b, l) = (x.shape()[0], x.shape()[1]);
        let dh = self.dim / self.heads;
        let q = self.split_heads(&self.wq.forward(x)?, b, l)?;
        let k = self.split_heads(&self.wk.forward(x)?, b, l)?;
        let v = self.split_heads(&self.wv.forward(x)?, b, l)?;

        let scale = F::from_f64(1.0 / (dh as f64).sqrt());
        let scores = q.bmm(&k.transpose(1, 2)?)?.mul_scalar(scale);
        let attn = scores.masked_softmax_last(&expand_key_mask(mask, self.heads))?;
        let ctx = attn
            .bmm(&v)?
            .reshape(&[b, self.heads, l, dh])?
            .transpose(1, 2)?
            .reshape(&[b, l, self.dim])?;
        self.wo.forward(&ctx)
    }

    pub fn params(&self) -> Vec<Parameter<F>> {
        [&self.wq, &self.wk, &self.wv, &self.wo]
            .iter()
            .flat_map(|l| l.params())
            .collect()
    }
}

pub struct LayerNorm<F: Scalar> {
    pub gamma: Parameter<F>,
    pub beta: Parameter<F>,
    eps: F,
}

impl<F: Scalar> LayerNorm<F> {
    pub fn new(name: &str, dim: usize) -> Self {
        LayerNorm {
            gamma: Parameter::new(
                format!("{name}.gamma"),
                Tensor::new_leaf_unchecked(vec![dim], vec![F::ONE; dim]),
            ),
            beta: Parameter::new(
                format!("{name}.beta"),
                Tensor::new_leaf_unchecked(vec![dim], vec![F::ZERO; dim]),
            ),
            eps: F::from_f64(1e-5),
        }
    }

    pub fn forward(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        x.layer_norm(self.gamma.tensor(), self.beta.tensor(), self.eps)
    }

    pub fn params(&self) -> Vec<Parameter<F>> {
        vec![self.gamma.clone(), self.beta.clone()]
    }
}

pub struct FeedForward<F: Scalar> {
    l1: Linear<F>,
    l2: Linear<F>,
}

impl<F: Scalar> FeedForward<F> {
    pub fn new(name: &str, dim: usize, hidden: usize, rng: &mut StdRng) -> Self {
        FeedForward {
            l1: Linear::new(&format!("{name}.l1"), dim, hidden, true, rng),
            l2: Linear::new(&format!("{name}.l2"), hidden, dim, true, rng),
        }
    }

    pub fn forward(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        self.l2.forward(&self.l1.forward(x)?.relu())
    }

    pub fn params(&self) -> Vec<Parameter<F>> {
        let mut out = self.l1.params();
        out.extend(self.l2.params());
        out
    }
}

/// GRU over a left-padded masked sequence; masked steps keep the previous
/// hidden state, so the final state reflects only unmasked positions.
pub struct Gru<F: Scalar> {
    wz: Linear<F>,
    uz: Linear<F>,
    wr: Linear<F>,
    ur: Linear<F>,
    wn: Linear<F>,
    un: Linear<F>,
    dim: usize,
}

impl<F: Scalar> Gru<F> {
    pub fn new(name: &str, dim: usize, rng: &mut StdRng) -> Self {
        Gru {
            wz: Linear::new(&format!("{name}.wz"), dim, dim, true, rng),
            uz: Linear::new(&format!("{name}.uz"), dim, dim, false, rng),
            wr: Linear::new(&format!("{name}.wr"), dim, dim, true, rng),
            ur: Linear::new(&format!("{name}.ur"), dim, dim, false, rng),
            wn: Linear::new(&format!("{name}.wn"), dim, dim, true, rng),
            un: Linear::new(&format!("{name}.un"), dim, dim, false, rng),
            dim,
        }
    }

    /// One cell update: h' = (1-z) * n + z * h.
    pub fn cell(&self, x: &Tensor<F>, h: &Tensor<F>) -> Result<Tensor<F>> {
        let z = self.wz.forward(x)?.add(&self.uz.forward(h)?)?.sigmoid();
        let r = self.wr.forward(x)?.add(&self.ur.forward(h)?)?.sigmoid();
        let n = self
            .wn
            .forward(x)?
            .add(&self.un.forward(&r.mul(h)?)?)?
            .tanh();
        let one_minus_z = z.mul_scalar(-F::ONE).add_scalar(F::ONE);
        one_minus_z.mul(&n)?.add(&z.mul(h)?)
    }

    /// Scan `[b, l, d]` left to right from a zero state; returns `[b, d]`.
    pub fn forward(&self, x: &Tensor<F>, mask: &Tensor<F>) -> Result<Tensor<F>> {
        let (b, l, d) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        debug_assert_eq!(d, self.dim);
        let mask_data = mask.read_data();
        let mut h = Tensor::zeros(&[b, d]);
        for t in 0..l {
            let xt = x.slice(1, t, 1)?.reshape(&[b, d])?;
            let hn = self.cell(&xt, &h)?;
            // per-row step mask broadcast to [b, d]
            let mut mcol = Vec::with_capacity(b * d);
            for bi in 0..b {
                let mv = mask_data[bi * l + t];
                mcol.extend(std::iter::repeat_n(mv, d));
            }
            let mt = Tensor::from_vec(&[b, d], mcol)?;
            let keep = mt.mul_scalar(-F::ONE).add_scalar(F::ONE);
            h = mt.mul(&hn)?.add(&keep.mul(&h)?)?;
        }
        Ok(h)
    }

    pub fn params(&self) -> Vec<Parameter<F>> {
        [&self.wz, &self.uz, &self.wr, &self.ur, &self.wn, &self.un]
            .iter()
            .flat_map(|l| l.params())
            .collect()
    }
}
