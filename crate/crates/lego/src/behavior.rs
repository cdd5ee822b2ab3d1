//! Behavior operators: fuse the sequence of encoded history-item embeddings
//! into a user representation, or pass the sequence through for predictors
//! that consume raw history.

use rand::rngs::StdRng;

use crate::error::{Error, Result};
use crate::nn::{AdditiveAttention, Gru, Linear, MultiHeadSelfAttention};
use crate::scalar::Scalar;
use crate::tensor::{Parameter, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BehaviorKind {
    Pooling,
    AdditiveAttention,
    Gru,
    SelfAttention,
    PolyAttention,
    /// Fastformer-style fuse over the history sequence.
    FastformerLite,
    /// Identity passthrough of the encoded sequence plus mask.
    Null,
}

impl BehaviorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BehaviorKind::Pooling => "pooling",
            BehaviorKind::AdditiveAttention => "additive_attention",
            BehaviorKind::Gru => "gru",
            BehaviorKind::SelfAttention => "self_attention",
            BehaviorKind::PolyAttention => "poly_attention",
            BehaviorKind::FastformerLite => "fastformer_lite",
            BehaviorKind::Null => "null",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "pooling" => BehaviorKind::Pooling,
            "additive_attention" => BehaviorKind::AdditiveAttention,
            "gru" => BehaviorKind::Gru,
            "self_attention" => BehaviorKind::SelfAttention,
            "poly_attention" => BehaviorKind::PolyAttention,
            "fastformer_lite" => BehaviorKind::FastformerLite,
            "null" => BehaviorKind::Null,
            other => return Err(Error::Config(format!("unknown behavior kind {other}"))),
        })
    }

    pub fn all() -> &'static [BehaviorKind] {
        &[
            BehaviorKind::Pooling,
            BehaviorKind::AdditiveAttention,
            BehaviorKind::Gru,
            BehaviorKind::SelfAttention,
            BehaviorKind::PolyAttention,
            BehaviorKind::FastformerLite,
            BehaviorKind::Null,
        ]
    }

    /// The representation kind is determined solely by the operator kind.
    pub fn repr_kind(&self) -> UserReprKind {
        match self {
            BehaviorKind::PolyAttention => UserReprKind::Multi,
            BehaviorKind::Null => UserReprKind::Sequence,
            _ => UserReprKind::Vector,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UserReprKind {
    Vector,
    Multi,
    Sequence,
}

impl UserReprKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            UserReprKind::Vector => "vector",
            UserReprKind::Multi => "multi",
            UserReprKind::Sequence => "sequence",
        }
    }
}

/// Fused user representation.
#[derive(Debug, Clone)]
pub enum UserRepr<F: Scalar> {
    /// `[b, d]`
    Vector(Tensor<F>),
    /// `[b, k_interests, d]`
    Multi(Tensor<F>),
    /// Raw encoded history `[b, l, d]` plus its `[b, l]` mask.
    Sequence { emb: Tensor<F>, mask: Tensor<F> },
}

impl<F: Scalar> UserRepr<F> {
    pub fn kind(&self) -> UserReprKind {
        match self {
            UserRepr::Vector(_) => UserReprKind::Vector,
            UserRepr::Multi(_) => UserReprKind::Multi,
            UserRepr::Sequence { .. } => UserReprKind::Sequence,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BehaviorOperatorSpec {
    pub kind: BehaviorKind,
    pub dim: usize,
    pub hidden_dim: usize,
    pub n_heads: usize,
    pub n_interests: usize,
}

impl BehaviorOperatorSpec {
    pub fn new(kind: BehaviorKind, dim: usize, hidden_dim: usize) -> Self {
        BehaviorOperatorSpec {
            kind,
            dim,
            hidden_dim,
            n_heads: 4,
            n_interests: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("behavior dim must be > 0".into()));
        }
        if self.n_interests == 0 {
            return Err(Error::Config("n_interests must be >= 1".into()));
        }
        let attn = matches!(
            self.kind,
            BehaviorKind::SelfAttention | BehaviorKind::FastformerLite
        );
        if attn && (self.n_heads == 0 || !self.dim.is_multiple_of(self.n_heads)) {
            return Err(Error::Config(format!(
                "dim {} must be divisible by n_heads {}",
                self.dim, self.n_heads
            )));
        }
        Ok(())
    }
}

enum Fuser<F: Scalar> {
    Pooling,
    Additive(AdditiveAttention<F>),
    Gru(Gru<F>),
    SelfAttention {
        mhsa: MultiHeadSelfAttention<F>,
        pool: AdditiveAttention<F>,
    },
    Poly {
        proj: Linear<F>,
        codes: Parameter<F>,
    },
    Fastformer {
        wq: Linear<F>,
        wk: Linear<F>,
        wv: Linear<F>,
        wr: Linear<F>,
        pool_q: AdditiveAttention<F>,
        pool_k: AdditiveAttention<F>,
        pool_out: AdditiveAttention<F>,
    },
    Null,
}

pub struct BehaviorOperator<F: Scalar> {
    pub spec: BehaviorOperatorSpec,
    fuser: Fuser<F>,
}

impl<F: Scalar> BehaviorOperator<F> {
    pub fn new(spec: BehaviorOperatorSpec, rng: &mut StdRng) -> Result<Self> {
        spec.validate()?;
        let d = spec.dim;
        let a = spec.hidden_dim;
        let fuser = match spec.kind {
            BehaviorKind::Pooling => Fuser::Pooling,
            BehaviorKind::AdditiveAttention => {
                Fuser::Additive(AdditiveAttention::new("behavior.pool", d, a, rng))
            }
            BehaviorKind::Gru => Fuser::Gru(Gru::new("behavior.gru", d, rng)),
            BehaviorKind::SelfAttention => Fuser::SelfAttention {
                mhsa: MultiHeadSelfAttention::new("behavior.mhsa", d, spec.n_heads, rng),
                pool: AdditiveAttention::new("behavior.pool", d, a, rng),
            },
            BehaviorKind::PolyAttention => Fuser::Poly {
                proj: Linear::new("behavior.poly.proj", d, a, true, rng),
                codes: Parameter::new(
                    "behavior.poly.codes",
                    crate::nn::uniform_init(rng, &[spec.n_interests, a], 1.0 / (a as f64).sqrt()),
                ),
            },
            BehaviorKind::FastformerLite => Fuser::Fastformer {
                wq: Linear::new("behavior.ff.wq", d, d, false, rng),
                wk: Linear::new("behavior.ff.wk", d, d, false, rng),
                wv: Linear::new("behavior.ff.wv", d, d, false, rng),
                wr: Linear::new("behavior.ff.wr", d, d, true, rng),
                pool_q: AdditiveAttention::new("behavior.ff.pool_q", d, a, rng),
                pool_k: AdditiveAttention::new("behavior.ff.pool_k", d, a, rng),
                pool_out: AdditiveAttention::new("behavior.ff.pool_out", d, a, rng),
            },
            BehaviorKind::Null => Fuser::Null,
        };
        Ok(BehaviorOperator { spec, fuser })
    }

    /// Fuse `[b, l, d]` history embeddings under a `[b, l]` mask. All-masked
    /// rows yield zero vectors for vector kinds, so cold users still flow
    /// through scoring.
    pub fn fuse(&self, history_emb: &Tensor<F>, history_mask: &Tensor<F>) -> Result<UserRepr<F>> {
        let (b, l, d) = (
            history_emb.shape()[0],
            history_emb.shape()[1],
            history_emb.shape()[2],
        );
        match &self.fuser {
            Fuser::Pooling => Ok(UserRepr::Vector(
                history_emb.masked_mean_axis1(history_mask)?,
            )),
            Fuser::Additive(pool) => Ok(UserRepr::Vector(pool.pool(history_emb, history_mask)?)),
            Fuser::Gru(gru) => Ok(UserRepr::Vector(gru.forward(history_emb, history_mask)?)),
            Fuser::SelfAttention { mhsa, pool } => {
                let ctx = mhsa.forward(history_emb, history_mask)?;
                Ok(UserRepr::Vector(pool.pool(&ctx, history_mask)?))
            }
            Fuser::Poly { proj, codes } => {
                let k = self.spec.n_interests;
                let a = self.spec.hidden_dim;
                let hidden = proj.forward(history_emb)?.tanh();
                let scores = hidden
                    .reshape(&[b * l, a])?
                    .matmul(&codes.tensor().transpose(0, 1)?)?
                    .reshape(&[b, l, k])?
                    .transpose(1, 2)?; // [b, k, l]
                let mask_k = expand_mask_per_code(history_mask, k);
                let attn = scores.masked_softmax_last(&mask_k)?;
                Ok(UserRepr::Multi(attn.bmm(history_emb)?))
            }
            Fuser::Fastformer {
                wq,
                wk,
                wv,
                wr,
                pool_q,
                pool_k,
                pool_out,
            } => {
                let q = wq.forward(history_emb)?;
                let k = wk.forward(history_emb)?;
                let v = wv.forward(history_emb)?;
                let q_global = pool_q.pool(&q, history_mask)?;
                let p = crate::nn::expand_rows(&q_global, l)?.mul(&k)?;
                let k_global = pool_k.pool(&p, history_mask)?;
                let u = crate::nn::expand_rows(&k_global, l)?.mul(&v)?;
                let r = wr.forward(&u)?.add(&q)?;
                Ok(UserRepr::Vector(pool_out.pool(&r, history_mask)?))
            }
            Fuser::Null => {
                debug_assert_eq!(d, self.spec.dim);
                Ok(UserRepr::Sequence {
                    emb: history_emb.clone(),
                    mask: history_mask.clone(),
                })
            }
        }
    }

    pub fn params(&self) -> Vec<Parameter<F>> {
        match &self.fuser {
            Fuser::Pooling | Fuser::Null => Vec::new(),
            Fuser::Additive(pool) => pool.params(),
            Fuser::Gru(gru) => gru.params(),
            Fuser::SelfAttention { mhsa, pool } => {
                let mut out = mhsa.params();
                out.extend(pool.params());
                out
            }
            Fuser::Poly { proj, codes } => {
                let mut out = proj.params();
                out.push(codes.clone());
                out
            }
            Fuser::Fastformer {
                wq,
                wk,
                wv,
                wr,
                pool_q,
                pool_k,
                pool_out,
            } => {
                let mut out = Vec::new();
                for lin in [wq, wk, wv, wr] {
                    out.extend(lin.params());
                }
                for p in [pool_q, pool_k, pool_out] {
                    out.extend(p.params());
                }
                out
            }
        }
    }
}

/// `[b, l]` mask repeated per interest code into `[b, k, l]`.
fn expand_mask_per_code<F: Scalar>(mask: &Tensor<F>, k: usize) -> Tensor<F> {
    let (b, l) = (mask.shape()[0], mask.shape()[1]);
    let m = mask.read_data();
    let mut out = Vec::with_capacity(b * k * l);
    for bi in 0..b {
        let row = &m[bi * l..(bi + 1) * l];
        for _ in 0..k {
            out.extend_from_slice(row);
        }
    }
    Tensor::from_vec(&[b, k, l], out).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> StdRng {
        StdRng::seed_from_u64(5)
    }

    fn op(kind: BehaviorKind) -> BehaviorOperator<f64> {
        BehaviorOperator::new(BehaviorOperatorSpec::new(kind, 4, 6), &mut rng()).unwrap()
    }

    fn seq(data: Vec<f64>, b: usize, l: usize) -> Tensor<f64> {
        Tensor::from_vec(&[b, l, 4], data).unwrap()
    }

    #[test]
    fn pooling_is_masked_mean() {
        let x = seq(vec![1.0, 1.0, 1.0, 1.0, 3.0, 3.0, 3.0, 3.0], 1, 2);
        let mask = Tensor::from_vec(&[1, 2], vec![1.0, 1.0]).unwrap();
        match op(BehaviorKind::Pooling).fuse(&x, &mask).unwrap() {
            UserRepr::Vector(v) => assert_eq!(v.to_vec(), vec![2.0; 4]),
            _ => panic!(),
        }
    }

    #[test]
    fn additive_attention_singleton_passthrough() {
        let x = seq(vec![0.1, -0.4, 0.9, 2.0], 1, 1);
        let mask = Tensor::from_vec(&[1, 1], vec![1.0]).unwrap();
        match op(BehaviorKind::AdditiveAttention).fuse(&x, &mask).unwrap() {
            UserRepr::Vector(v) => assert_eq!(v.to_vec(), vec![0.1, -0.4, 0.9, 2.0]),
            _ => panic!(),
        }
    }

    #[test]
    fn gru_single_item_matches_cell() {
        let o = op(BehaviorKind::Gru);
        let x = seq(vec![0.3, -0.5, 0.9, 0.2], 1, 1);
        let mask = Tensor::from_vec(&[1, 1], vec![1.0]).unwrap();
        let UserRepr::Vector(v) = o.fuse(&x, &mask).unwrap() else {
            panic!()
        };
        // hand-rolled cell from the same weights
        let Fuser::Gru(gru) = &o.fuser else { panic!() };
        let x0 = Tensor::from_vec(&[1, 4], vec![0.3, -0.5, 0.9, 0.2]).unwrap();
        let expect = gru.cell(&x0, &Tensor::zeros(&[1, 4])).unwrap().to_vec();
        assert_eq!(v.to_vec(), expect);
    }

    #[test]
    fn vector_kinds_ignore_masked_positions() {
        for kind in [
            BehaviorKind::Pooling,
            BehaviorKind::AdditiveAttention,
            BehaviorKind::Gru,
            BehaviorKind::SelfAttention,
            BehaviorKind::FastformerLite,
        ] {
            let o = op(kind);
            let mask = Tensor::from_vec(&[1, 2], vec![0.0, 1.0]).unwrap();
            let a = seq(vec![9.0, 9.0, 9.0, 9.0, 0.5, 0.2, -0.1, 0.7], 1, 2);
            let b = seq(vec![-3.0, 1.0, 2.0, 8.0, 0.5, 0.2, -0.1, 0.7], 1, 2);
            let UserRepr::Vector(va) = o.fuse(&a, &mask).unwrap() else {
                panic!()
            };
            let UserRepr::Vector(vb) = o.fuse(&b, &mask).unwrap() else {
                panic!()
            };
            for (x, y) in va.to_vec().iter().zip(vb.to_vec().iter()) {
                assert!((x - y).abs() < 1e-9, "{kind:?} leaked masked values");
            }
        }
    }

    #[test]
    fn all_masked_rows_are_zero_vectors() {
        for kind in [
            BehaviorKind::Pooling,
            BehaviorKind::AdditiveAttention,
            BehaviorKind::Gru,
            BehaviorKind::SelfAttention,
            BehaviorKind::FastformerLite,
        ] {
            let o = op(kind);
            let mask = Tensor::from_vec(&[1, 2], vec![0.0, 0.0]).unwrap();
            let x = seq(vec![9.0, 2.0, -4.0, 1.0, 0.5, 0.2, -0.1, 0.7], 1, 2);
            let UserRepr::Vector(v) = o.fuse(&x, &mask).unwrap() else {
                panic!()
            };
            assert!(
                v.to_vec().iter().all(|&x| x == 0.0),
                "{kind:?} all-masked row not zero"
            );
            assert!(v.to_vec().iter().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn gru_order_sensitive_on_history() {
        let o = op(BehaviorKind::Gru);
        let fwd: Vec<f64> = (0..12).map(|v| (v as f64 * 0.7).sin()).collect();
        let rev: Vec<f64> = fwd.chunks(4).rev().flatten().copied().collect();
        let mask = Tensor::from_vec(&[1, 3], vec![1.0; 3]).unwrap();
        let UserRepr::Vector(a) = o.fuse(&seq(fwd, 1, 3), &mask).unwrap() else {
            panic!()
        };
        let UserRepr::Vector(b) = o.fuse(&seq(rev, 1, 3), &mask).unwrap() else {
            panic!()
        };
        assert!(a
            .to_vec()
            .iter()
            .zip(b.to_vec().iter())
            .any(|(x, y)| (x - y).abs() > 1e-9));
    }

    #[test]
    fn poly_attention_shape_is_multi() {
        let o = op(BehaviorKind::PolyAttention);
        let x = seq((0..24).map(|v| (v as f64).cos()).collect(), 2, 3);
        let mask = Tensor::from_vec(&[2, 3], vec![1.0, 1.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        match o.fuse(&x, &mask).unwrap() {
            UserRepr::Multi(m) => assert_eq!(m.shape(), &[2, 4, 4]),
            _ => panic!(),
        }
    }

    #[test]
    fn null_passes_sequence_through() {
        let o = op(BehaviorKind::Null);
        let x = seq((0..8).map(|v| v as f64).collect(), 1, 2);
        let mask = Tensor::from_vec(&[1, 2], vec![0.0, 1.0]).unwrap();
        match o.fuse(&x, &mask).unwrap() {
            UserRepr::Sequence { emb, mask: m } => {
                assert_eq!(emb.to_vec(), x.to_vec());
                assert_eq!(m.to_vec(), mask.to_vec());
            }
            _ => panic!(),
        }
    }
}
