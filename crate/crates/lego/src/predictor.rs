//! Click predictors: score a user representation against candidate item
//! embeddings. Each predictor kind accepts specific user-representation
//! kinds; `check_composition` is the single source of that compatibility
//! matrix:
//!
//! | predictor        | vector | multi | sequence |
//! |------------------|--------|-------|----------|
//! | dot              | yes    | no    | no       |
//! | mlp              | yes    | no    | no       |
//! | dcn              | yes    | no    | no       |
//! | din              | no     | no    | yes      |
//! | target_attention | no     | yes   | no       |

use rand::rngs::StdRng;

use crate::behavior::{BehaviorKind, UserRepr, UserReprKind};
use crate::content::ContentKind;
use crate::error::{Error, Result};
use crate::nn::{expand_rows, Linear};
use crate::scalar::Scalar;
use crate::tensor::{Parameter, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PredictorKind {
    Dot,
    Mlp,
    Dcn,
    Din,
    TargetAttention,
}

impl PredictorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PredictorKind::Dot => "dot",
            PredictorKind::Mlp => "mlp",
            PredictorKind::Dcn => "dcn",
            PredictorKind::Din => "din",
            PredictorKind::TargetAttention => "target_attention",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "dot" => PredictorKind::Dot,
            "mlp" => PredictorKind::Mlp,
            "dcn" => PredictorKind::Dcn,
            "din" => PredictorKind::Din,
            "target_attention" => PredictorKind::TargetAttention,
            other => return Err(Error::Config(format!("unknown predictor kind {other}"))),
        })
    }

    pub fn all() -> &'static [PredictorKind] {
        &[
            PredictorKind::Dot,
            PredictorKind::Mlp,
            PredictorKind::Dcn,
            PredictorKind::Din,
            PredictorKind::TargetAttention,
        ]
    }

    /// The documented compatibility matrix.
    pub fn accepts(&self, repr: UserReprKind) -> bool {
        match self {
            PredictorKind::Dot | PredictorKind::Mlp | PredictorKind::Dcn => {
                repr == UserReprKind::Vector
            }
            PredictorKind::Din => repr == UserReprKind::Sequence,
            PredictorKind::TargetAttention => repr == UserReprKind::Multi,
        }
    }
}

/// Composition contract, checked at model-build time. Accepts iff the
/// predictor supports the user-representation kind implied by the behavior
/// operator. Content kinds impose no additional constraints; dimension
/// agreement is enforced by the specs themselves.
pub fn check_composition(
    content: ContentKind,
    behavior: BehaviorKind,
    predictor: PredictorKind,
) -> Result<()> {
    let repr = behavior.repr_kind();
    if !predictor.accepts(repr) {
        return Err(Error::Composition(format!(
            "predictor {} cannot consume {} user representations (content {}, behavior {})",
            predictor.as_str(),
            repr.as_str(),
            content.as_str(),
            behavior.as_str()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct PredictorSpec {
    pub kind: PredictorKind,
    pub dim: usize,
    pub mlp_hidden: Vec<usize>,
    pub n_cross_layers: usize,
    pub din_hidden: Vec<usize>,
}

impl PredictorSpec {
    pub fn new(kind: PredictorKind, dim: usize, hidden: usize) -> Self {
        PredictorSpec {
            kind,
            dim,
            mlp_hidden: vec![hidden],
            n_cross_layers: 2,
            din_hidden: vec![hidden],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("predictor dim must be > 0".into()));
        }
        if self.mlp_hidden.contains(&0) || self.din_hidden.contains(&0) {
            return Err(Error::Config("hidden sizes must be > 0".into()));
        }
        Ok(())
    }
}

struct Mlp<F: Scalar> {
    layers: Vec<Linear<F>>,
    head: Linear<F>,
}

impl<F: Scalar> Mlp<F> {
    fn new(name: &str, in_dim: usize, hidden: &[usize], rng: &mut StdRng) -> Self {
        let mut layers = Vec::new();
        let mut d = in_dim;
        for (i, &h) in hidden.iter().enumerate() {
            layers.push(Linear::new(&format!("{name}.l{i}"), d, h, true, rng));
            d = h;
        }
        Mlp {
            layers,
            head: Linear::new(&format!("{name}.head"), d, 1, true, rng),
        }
    }

    fn forward(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let mut h = x.clone();
        for l in &self.layers {
            h = l.forward(&h)?.relu();
        }
        self.head.forward(&h)
    }

    fn params(&self) -> Vec<Parameter<F>> {
        let mut out: Vec<_> = self.layers.iter().flat_map(|l| l.params()).collect();
        out.extend(self.head.params());
        out
    }
}

enum Scorer<F: Scalar> {
    Dot,
    Mlp(Mlp<F>),
    Dcn {
        cross_w: Vec<Parameter<F>>,
        cross_b: Vec<Parameter<F>>,
        deep: Vec<Linear<F>>,
        cross_head: Linear<F>,
        deep_head: Linear<F>,
    },
    Din {
        attention: Mlp<F>,
        output: Mlp<F>,
    },
    TargetAttention,
}

/// Computes raw logits; the objective applies softmax or sigmoid.
pub struct Predictor<F: Scalar> {
    pub spec: PredictorSpec,
    scorer: Scorer<F>,
}

impl<F: Scalar> Predictor<F> {
    pub fn new(spec: PredictorSpec, rng: &mut StdRng) -> Result<Self> {
        spec.validate()?;
        let d = spec.dim;
        let scorer = match spec.kind {
            PredictorKind::Dot => Scorer::Dot,
            PredictorKind::Mlp => Scorer::Mlp(Mlp::new("pred.mlp", 3 * d, &spec.mlp_hidden, rng)),
            PredictorKind::Dcn => {
                let x0_dim = 2 * d;
                let cross_w = (0..spec.n_cross_layers)
                    .map(|i| {
                        Parameter::new(
                            format!("pred.dcn.cross{i}.w"),
                            crate::nn::xavier_init(rng, x0_dim, 1),
                        )
                    })
                    .collect();
                let cross_b = (0..spec.n_cross_layers)
                    .map(|i| {
                        Parameter::new(
                            format!("pred.dcn.cross{i}.b"),
                            Tensor::leaf(&[x0_dim], vec![F::ZERO; x0_dim]).unwrap(),
                        )
                    })
                    .collect();
                let mut deep = Vec::new();
                let mut dd = x0_dim;
                for (i, &h) in spec.mlp_hidden.iter().enumerate() {
                    deep.push(Linear::new(&format!("pred.dcn.deep{i}"), dd, h, true, rng));
                    dd = h;
                }
                Scorer::Dcn {
                    cross_w,
                    cross_b,
                    deep,
                    cross_head: Linear::new("pred.dcn.cross_head", x0_dim, 1, true, rng),
                    deep_head: Linear::new("pred.dcn.deep_head", dd, 1, true, rng),
                }
            }
            PredictorKind::Din => Scorer::Din {
                attention: Mlp::new("pred.din.att", 4 * d, &spec.din_hidden, rng),
                output: Mlp::new("pred.din.out", 2 * d, &spec.din_hidden, rng),
            },
            PredictorKind::TargetAttention => Scorer::TargetAttention,
        };
        Ok(Predictor { spec, scorer })
    }

    /// Score `[b, c, d]` candidates against the user representation,
    /// returning `[b, c]` raw logits.
    pub fn predict(&self, user: &UserRepr<F>, item_emb: &Tensor<F>) -> Result<Tensor<F>> {
        if item_emb.rank() != 3 || item_emb.shape()[2] != self.spec.dim {
            return Err(Error::dim(
                "predict",
                format!(
                    "candidates {:?} for dim {}",
                    item_emb.shape(),
                    self.spec.dim
                ),
            ));
        }
        let (b, c, d) = (
            item_emb.shape()[0],
            item_emb.shape()[1],
            item_emb.shape()[2],
        );
        if !self.spec.kind.accepts(user.kind()) {
            return Err(Error::Composition(format!(
                "predictor {} cannot consume {} user representations",
                self.spec.kind.as_str(),
                user.kind().as_str()
            )));
        }

        match (&self.scorer, user) {
            (Scorer::Dot, UserRepr::Vector(u)) => {
                item_emb.bmm(&u.reshape(&[b, d, 1])?)?.reshape(&[b, c])
            }
            (Scorer::Mlp(mlp), UserRepr::Vector(u)) => {
                let u_rep = u.gather_rows(&repeat_index(b, c))?;
                let i_flat = item_emb.reshape(&[b * c, d])?;
                let feats =
                    Tensor::concat(&[u_rep.clone(), i_flat.clone(), u_rep.mul(&i_flat)?], 1)?;
                mlp.forward(&feats)?.reshape(&[b, c])
            }
            (
                Scorer::Dcn {
                    cross_w,
                    cross_b,
                    deep,
                    cross_head,
                    deep_head,
                },
                UserRepr::Vector(u),
            ) => {
                let r = b * c;
                let u_rep = u.gather_rows(&repeat_index(b, c))?;
                let i_flat = item_emb.reshape(&[r, d])?;
                let x0 = Tensor::concat(&[u_rep, i_flat], 1)?;
                let x0_dim = 2 * d;
                let mut x = x0.clone();
                for (w, bias) in cross_w.iter().zip(cross_b.iter()) {
                    // x_{l+1} = x0 * (w^T x_l) + b_l + x_l
                    let s = x.matmul(w.tensor())?; // [r, 1]
                    let prod = x0
                        .reshape(&[r, x0_dim, 1])?
                        .bmm(&s.reshape(&[r, 1, 1])?)?
                        .reshape(&[r, x0_dim])?;
                    x = prod.add_bias(bias.tensor())?.add(&x)?;
                }
                let mut h = x0;
                for l in deep {
                    h = l.forward(&h)?.relu();
                }
                let logits = cross_head.forward(&x)?.add(&deep_head.forward(&h)?)?;
                logits.reshape(&[b, c])
            }
            (Scorer::Din { attention, output }, UserRepr::Sequence { emb, mask }) => {
                let l = emb.shape()[1];
                let r = b * c;
                let h_rep = emb.gather_rows(&repeat_index(b, c))?;
                let i_flat = item_emb.reshape(&[r, d])?;
                let i_exp = expand_rows(&i_flat, l)?;
                let feats = Tensor::concat(
                    &[
                        h_rep.clone(),
                        i_exp.clone(),
                        h_rep.mul(&i_exp)?,
                        h_rep.sub(&i_exp)?,
                    ],
                    2,
                )?;
                let scores = attention
                    .forward(&feats.reshape(&[r * l, 4 * d])?)?
                    .reshape(&[r, l])?;
                let mask_rep = repeat_mask(mask, c);
                let w = scores.masked_softmax_last(&mask_rep)?;
                let fused = w.reshape(&[r, 1, l])?.bmm(&h_rep)?.reshape(&[r, d])?;
                let out = output.forward(&Tensor::concat(&[fused, i_flat], 1)?)?;
                out.reshape(&[b, c])
            }
            (Scorer::TargetAttention, UserRepr::Multi(u)) => {
                let w = item_emb.bmm(&u.transpose(1, 2)?)?.softmax_last()?; // [b, c, k]
                let fused = w.bmm(u)?; // [b, c, d]
                fused.mul(item_emb)?.sum_axis(2)
            }
            _ => unreachable!("accepts() already validated the pairing"),
        }
    }

    pub fn params(&self) -> Vec<Parameter<F>> {
        match &self.scorer {
            Scorer::Dot | Scorer::TargetAttention => Vec::new(),
            Scorer::Mlp(mlp) => mlp.params(),
            Scorer::Dcn {
                cross_w,
                cross_b,
                deep,
                cross_head,
                deep_head,
            } => {
                let mut out = Vec::new();
                out.extend(cross_w.iter().cloned());
                out.extend(cross_b.iter().cloned());
                out.extend(deep.iter().flat_map(|l| l.params()));
                out.extend(cross_head.params());
                out.extend(deep_head.params());
                out
            }
            Scorer::Din { attention, output } => {
                let mut out = attention.params();
                out.extend(output.params());
                out
            }
        }
    }
}

/// b-major candidate repetition: `[0 x c, 1 x c, ...]`.
fn repeat_index(b: usize, c: usize) -> Vec<u32> {
    let mut idx = Vec::with_capacity(b * c);
    for bi in 0..b {
        for _ in 0..c {
            idx.push(bi as u32);
        }
    }
    idx
}

fn repeat_mask<F: Scalar>(mask: &Tensor<F>, c: usize) -> Tensor<F> {
    let (b, l) = (mask.shape()[0], mask.shape()[1]);
    let m = mask.read_data();
    let mut out = Vec::with_capacity(b * c * l);
    for bi in 0..b {
        let row = &m[bi * l..(bi + 1) * l];
        for _ in 0..c {
            out.extend_from_slice(row);
        }
    }
    Tensor::from_vec(&[b * c, l], out).unwrap()
}
