//! Content operators: encode an item's token sequences (or its bare id) into
//! a single item embedding. Registry-driven so any content operator composes
//! with any behavior operator and click predictor.

use std::path::Path;

use rand::rngs::StdRng;

use crate::data::{EmbeddingTable, ItemTable};
use crate::error::{Error, Result};
use crate::nn::{
    dropout, table_init, AdditiveAttention, FeedForward, LayerNorm, Linear, MultiHeadSelfAttention,
};
use crate::scalar::Scalar;
use crate::tensor::{Parameter, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ContentKind {
    /// Randomly initialized item-id embedding table; ignores tokens.
    NullId,
    Pooling,
    Cnn,
    SelfAttention,
    /// Single simplified Fastformer block: global-query additive attention,
    /// elementwise query-key interaction, value transform, additive pooling.
    FastformerLite,
    /// Stacked self-attention + feed-forward layers with residuals and layer
    /// norm; the freezable stand-in for layered language-model encoders.
    MiniTransformer,
    /// Embedding table from a pretrained source; never trainable.
    FrozenTable,
}

impl ContentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ContentKind::NullId => "null_id",
            ContentKind::Pooling => "pooling",
            ContentKind::Cnn => "cnn",
            ContentKind::SelfAttention => "self_attention",
            ContentKind::FastformerLite => "fastformer_lite",
            ContentKind::MiniTransformer => "mini_transformer",
            ContentKind::FrozenTable => "frozen_table",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "null_id" => ContentKind::NullId,
            "pooling" => ContentKind::Pooling,
            "cnn" => ContentKind::Cnn,
            "self_attention" => ContentKind::SelfAttention,
            "fastformer_lite" => ContentKind::FastformerLite,
            "mini_transformer" => ContentKind::MiniTransformer,
            "frozen_table" => ContentKind::FrozenTable,
            other => return Err(Error::Config(format!("unknown content kind {other}"))),
        })
    }

    pub fn all() -> &'static [ContentKind] {
        &[
            ContentKind::NullId,
            ContentKind::Pooling,
            ContentKind::Cnn,
            ContentKind::SelfAttention,
            ContentKind::FastformerLite,
            ContentKind::MiniTransformer,
            ContentKind::FrozenTable,
        ]
    }

    /// Kinds that read token content (as opposed to bare item ids).
    pub fn uses_content(&self) -> bool {
        !matches!(self, ContentKind::NullId | ContentKind::FrozenTable)
    }
}

#[derive(Debug, Clone)]
pub struct ContentOperatorSpec {
    pub kind: ContentKind,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub kernel_size: usize,
    pub dropout: f64,
    pub freeze_below_layer: Option<usize>,
    pub pretrained_path: Option<std::path::PathBuf>,
}

impl ContentOperatorSpec {
    pub fn new(kind: ContentKind, embed_dim: usize, hidden_dim: usize) -> Self {
        ContentOperatorSpec {
            kind,
            embed_dim,
            hidden_dim,
            n_heads: 4,
            n_layers: 2,
            kernel_size: 3,
            dropout: 0.0,
            freeze_below_layer: None,
            pretrained_path: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Config("embed_dim and hidden_dim must be > 0".into()));
        }
        let attn = matches!(
            self.kind,
            ContentKind::SelfAttention | ContentKind::FastformerLite | ContentKind::MiniTransformer
        );
        if attn && (self.n_heads == 0 || !self.embed_dim.is_multiple_of(self.n_heads)) {
            return Err(Error::Config(format!(
                "embed_dim {} must be divisible by n_heads {}",
                self.embed_dim, self.n_heads
            )));
        }
        if self.kind == ContentKind::Cnn && self.kernel_size.is_multiple_of(2) {
            return Err(Error::Config("kernel_size must be odd".into()));
        }
        if self.freeze_below_layer.is_some() && self.kind != ContentKind::MiniTransformer {
            return Err(Error::Config(
                "freeze_below_layer is only valid for mini_transformer".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Fixed-width token grid for one attribute of a list of items.
#[derive(Debug, Clone)]
pub struct TokenGrid {
    pub tokens: Vec<u32>,
    pub mask: Vec<u8>,
    pub n: usize,
    pub t: usize,
}

/// Token grids for every selected attribute of `item_ids`.
pub fn featurize(table: &ItemTable, item_ids: &[u32]) -> Result<Vec<TokenGrid>> {
    table
        .selected_attributes
        .iter()
        .map(|attr| {
            let (tokens, mask, t) = table.token_grid(attr, item_ids)?;
            Ok(TokenGrid {
                tokens,
                mask,
                n: item_ids.len(),
                t,
            })
        })
        .collect()
}

pub struct TransformerLayer<F: Scalar> {
    mhsa: MultiHeadSelfAttention<F>,
    ln1: LayerNorm<F>,
    ff: FeedForward<F>,
    ln2: LayerNorm<F>,
}

impl<F: Scalar> TransformerLayer<F> {
    fn new(name: &str, dim: usize, hidden: usize, heads: usize, rng: &mut StdRng) -> Self {
        TransformerLayer {
            mhsa: MultiHeadSelfAttention::new(&format!("{name}.mhsa"), dim, heads, rng),
            ln1: LayerNorm::new(&format!("{name}.ln1"), dim),
            ff: FeedForward::new(&format!("{name}.ff"), dim, hidden, rng),
            ln2: LayerNorm::new(&format!("{name}.ln2"), dim),
        }
    }

    fn forward(&self, x: &Tensor<F>, mask: &Tensor<F>) -> Result<Tensor<F>> {
        let h = self.ln1.forward(&x.add(&self.mhsa.forward(x, mask)?)?)?;
        self.ln2.forward(&h.add(&self.ff.forward(&h)?)?)
    }

    pub fn params(&self) -> Vec<Parameter<F>> {
        let mut out = self.mhsa.params();
        out.extend(self.ln1.params());
        out.extend(self.ff.params());
        out.extend(self.ln2.params());
        out
    }
}

enum Encoder<F: Scalar> {
    None,
    Cnn {
        conv: Linear<F>,
        pool: AdditiveAttention<F>,
    },
    SelfAttention {
        mhsa: MultiHeadSelfAttention<F>,
        pool: AdditiveAttention<F>,
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
    Transformer {
        layers: Vec<TransformerLayer<F>>,
        pool: AdditiveAttention<F>,
    },
}

/// Maps `[n, t]` token grids (or `[n]` item ids) to `[n, d]` item embeddings.
pub struct ContentOperator<F: Scalar> {
    pub spec: ContentOperatorSpec,
    /// One embedding table per selected attribute (content kinds).
    token_tables: Vec<Parameter<F>>,
    /// Item-id table (null_id / frozen_table kinds).
    id_table: Option<Parameter<F>>,
    encoder: Encoder<F>,
}

impl<F: Scalar> ContentOperator<F> {
    /// `attr_vocab_lens` must align with the dataset's selected attributes.
    pub fn new(
        spec: ContentOperatorSpec,
        attr_vocab_lens: &[usize],
        n_items: usize,
        rng: &mut StdRng,
    ) -> Result<Self> {
        spec.validate()?;
        let d = spec.embed_dim;
        let mut token_tables = Vec::new();
        let mut id_table = None;

        match spec.kind {
            ContentKind::NullId => {
                id_table = Some(Parameter::new(
                    "content.id_table",
                    table_init(rng, n_items, d),
                ));
            }
            ContentKind::FrozenTable => {
                return Err(Error::Config(
                    "frozen_table operators are built with with_frozen_table".into(),
                ));
            }
            _ => {
                if attr_vocab_lens.is_empty() {
                    return Err(Error::Config("no selected attributes".into()));
                }
                for (i, &v) in attr_vocab_lens.iter().enumerate() {
                    token_tables.push(Parameter::new(
                        format!("content.token_table.{i}"),
                        table_init(rng, v, d),
                    ));
                }
            }
        }

        let encoder = match spec.kind {
            ContentKind::NullId | ContentKind::FrozenTable | ContentKind::Pooling => Encoder::None,
            ContentKind::Cnn => Encoder::Cnn {
                conv: Linear::new("content.conv", spec.kernel_size * d, d, true, rng),
                pool: AdditiveAttention::new("content.pool", d, spec.hidden_dim, rng),
            },
            ContentKind::SelfAttention => Encoder::SelfAttention {
                mhsa: MultiHeadSelfAttention::new("content.mhsa", d, spec.n_heads, rng),
                pool: AdditiveAttention::new("content.pool", d, spec.hidden_dim, rng),
            },
            ContentKind::FastformerLite => Encoder::Fastformer {
                wq: Linear::new("content.ff.wq", d, d, false, rng),
                wk: Linear::new("content.ff.wk", d, d, false, rng),
                wv: Linear::new("content.ff.wv", d, d, false, rng),
                wr: Linear::new("content.ff.wr", d, d, true, rng),
                pool_q: AdditiveAttention::new("content.ff.pool_q", d, spec.hidden_dim, rng),
                pool_k: AdditiveAttention::new("content.ff.pool_k", d, spec.hidden_dim, rng),
                pool_out: AdditiveAttention::new("content.ff.pool_out", d, spec.hidden_dim, rng),
            },
            ContentKind::MiniTransformer => Encoder::Transformer {
                layers: (0..spec.n_layers)
                    .map(|i| {
                        TransformerLayer::new(
                            &format!("content.layer{i}"),
                            d,
                            spec.hidden_dim,
                            spec.n_heads,
                            rng,
                        )
                    })
                    .collect(),
                pool: AdditiveAttention::new("content.pool", d, spec.hidden_dim, rng),
            },
        };

        let op = ContentOperator {
            spec,
            token_tables,
            id_table,
            encoder,
        };
        if let Some(layer_n) = op.spec.freeze_below_layer {
            op.apply_freeze_split(layer_n)?;
        }
        Ok(op)
    }

    /// Decoupled design: attach a pretrained table as a frozen id table.
    pub fn with_frozen_table(spec: ContentOperatorSpec, table: Tensor<F>) -> Result<Self> {
        if spec.kind != ContentKind::FrozenTable {
            return Err(Error::Config(
                "with_frozen_table requires kind frozen_table".into(),
            ));
        }
        spec.validate()?;
        if table.rank() != 2 || table.shape()[1] != spec.embed_dim {
            return Err(Error::Load(format!(
                "frozen table dim {:?} does not match embed_dim {}",
                table.shape(),
                spec.embed_dim
            )));
        }
        let param = Parameter::new("content.frozen_table", table);
        param.set_frozen(true);
        Ok(ContentOperator {
            spec,
            token_tables: Vec::new(),
            id_table: Some(param),
            encoder: Encoder::None,
        })
    }

    /// Encode a list of items. Content kinds consume `grids` (one per
    /// selected attribute, encoded independently and averaged); id kinds
    /// gather rows for `item_ids`. Rows whose mask is entirely zero are
    /// treated as a single padding token.
    pub fn encode_items(
        &self,
        item_ids: &[u32],
        grids: &[TokenGrid],
        mut train_rng: Option<&mut StdRng>,
    ) -> Result<Tensor<F>> {
        match self.spec.kind {
            ContentKind::NullId | ContentKind::FrozenTable => self
                .id_table
                .as_ref()
                .unwrap()
                .tensor()
                .gather_rows(item_ids),
            _ => {
                if grids.len() != self.token_tables.len() {
                    return Err(Error::Contract(format!(
                        "{} token grids for {} attribute tables",
                        grids.len(),
                        self.token_tables.len()
                    )));
                }
                let mut encoded = Vec::with_capacity(grids.len());
                for (grid, table) in grids.iter().zip(self.token_tables.iter()) {
                    encoded.push(self.encode_grid(grid, table, train_rng.as_deref_mut())?);
                }
                if encoded.len() == 1 {
                    return Ok(encoded.pop().unwrap());
                }
                let mut acc = encoded[0].clone();
                for e in &encoded[1..] {
                    acc = acc.add(e)?;
                }
                Ok(acc.mul_scalar(F::ONE / F::from_usize(encoded.len())))
            }
        }
    }

    fn encode_grid(
        &self,
        grid: &TokenGrid,
        table: &Parameter<F>,
        mut train_rng: Option<&mut StdRng>,
    ) -> Result<Tensor<F>> {
        let (n, t, d) = (grid.n, grid.t, self.spec.embed_dim);
        // all-masked rows act as a single padding token
        let mut mask_data: Vec<F> = grid
            .mask
            .iter()
            .map(|&m| F::from_usize(m as usize))
            .collect();
        for row in mask_data.chunks_mut(t) {
            if row.iter().all(|m| *m <= F::ZERO) {
                row[0] = F::ONE;
            }
        }
        let mask = Tensor::from_vec(&[n, t], mask_data)?;
        let mut emb = table
            .tensor()
            .gather_rows(&grid.tokens)?
            .reshape(&[n, t, d])?;
        if let Some(rng) = train_rng.as_deref_mut() {
            emb = dropout(&emb, self.spec.dropout, rng)?;
        }

        match &self.encoder {
            Encoder::None => emb.masked_mean_axis1(&mask),
            Encoder::Cnn { conv, pool } => {
                let k = self.spec.kernel_size;
                let pad = (k - 1) / 2;
                let zeros = Tensor::zeros(&[n, pad, d]);
                let padded = Tensor::concat(&[zeros.clone(), emb, zeros], 1)?;
                let windows: Vec<Tensor<F>> = (0..k)
                    .map(|o| padded.slice(1, o, t))
                    .collect::<Result<_>>()?;
                let stacked = Tensor::concat(&windows, 2)?;
                let convolved = conv.forward(&stacked)?.relu();
                self.finish(convolved, &mask, pool, train_rng)
            }
            Encoder::SelfAttention { mhsa, pool } => {
                let ctx = mhsa.forward(&emb, &mask)?;
                self.finish(ctx, &mask, pool, train_rng)
            }
            Encoder::Fastformer {
                wq,
                wk,
                wv,
                wr,
                pool_q,
                pool_k,
                pool_out,
            } => {
                let q = wq.forward(&emb)?;
                let k = wk.forward(&emb)?;
                let v = wv.forward(&emb)?;
                let q_global = pool_q.pool(&q, &mask)?;
                let p = crate::nn::expand_rows(&q_global, t)?.mul(&k)?;
                let k_global = pool_k.pool(&p, &mask)?;
                let u = crate::nn::expand_rows(&k_global, t)?.mul(&v)?;
                let r = wr.forward(&u)?.add(&q)?;
                self.finish(r, &mask, pool_out, train_rng)
            }
            Encoder::Transformer { layers, pool } => {
                let mut h = emb;
                for layer in layers {
                    h = layer.forward(&h, &mask)?;
                }
                self.finish(h, &mask, pool, train_rng)
            }
        }
    }

    fn finish(
        &self,
        seq: Tensor<F>,
        mask: &Tensor<F>,
        pool: &AdditiveAttention<F>,
        train_rng: Option<&mut StdRng>,
    ) -> Result<Tensor<F>> {
        let seq = if let Some(rng) = train_rng {
            dropout(&seq, self.spec.dropout, rng)?
        } else {
            seq
        };
        pool.pool(&seq, mask)
    }

    /// Freeze the token tables and every transformer layer below `layer_n`;
    /// layers at or above it and the pooling head stay trainable.
    /// `layer_n = 0` freezes nothing.
    pub fn apply_freeze_split(&self, layer_n: usize) -> Result<()> {
        let Encoder::Transformer { layers, .. } = &self.encoder else {
            return Err(Error::Config(format!(
                "--mode split requires a mini_transformer content operator, got {}",
                self.spec.kind.as_str()
            )));
        };
        if layer_n > layers.len() {
            return Err(Error::Config(format!(
                "--layer {layer_n} exceeds n_layers {}",
                layers.len()
            )));
        }
        if layer_n == 0 {
            return Ok(());
        }
        for table in &self.token_tables {
            table.set_frozen(true);
        }
        for layer in &layers[..layer_n] {
            for p in layer.params() {
                p.set_frozen(true);
            }
        }
        Ok(())
    }

    pub fn params(&self) -> Vec<Parameter<F>> {
        let mut out = Vec::new();
        out.extend(self.token_tables.iter().cloned());
        out.extend(self.id_table.iter().cloned());
        match &self.encoder {
            Encoder::None => {}
            Encoder::Cnn { conv, pool } => {
                out.extend(conv.params());
                out.extend(pool.params());
            }
            Encoder::SelfAttention { mhsa, pool } => {
                out.extend(mhsa.params());
                out.extend(pool.params());
            }
            Encoder::Fastformer {
                wq,
                wk,
                wv,
                wr,
                pool_q,
                pool_k,
                pool_out,
            } => {
                for l in [wq, wk, wv, wr] {
                    out.extend(l.params());
                }
                for p in [pool_q, pool_k, pool_out] {
                    out.extend(p.params());
                }
            }
            Encoder::Transformer { layers, pool } => {
                for l in layers {
                    out.extend(l.params());
                }
                out.extend(pool.params());
            }
        }
        out
    }

    pub fn trainable_params(&self) -> Vec<Parameter<F>> {
        self.params().into_iter().filter(|p| !p.frozen()).collect()
    }

    /// Parameters of one transformer layer, for freeze assertions.
    pub fn layer_params(&self, idx: usize) -> Vec<Parameter<F>> {
        match &self.encoder {
            Encoder::Transformer { layers, .. } => layers[idx].params(),
            _ => Vec::new(),
        }
    }

    pub fn token_table_params(&self) -> &[Parameter<F>] {
        &self.token_tables
    }
}

/// Read a pretrained embedding table and align its rows with the item vocab.
pub fn load_pretrained_table<F: Scalar>(path: &Path, items: &ItemTable) -> Result<Tensor<F>> {
    let table = crate::data::load_embedding_table(path)?;
    table_to_tensor(&table, items)
}

/// Align `table` rows to item-vocab order; every item id must have a row.
pub fn table_to_tensor<F: Scalar>(table: &EmbeddingTable, items: &ItemTable) -> Result<Tensor<F>> {
    let n = items.n_items();
    if table.rows != n {
        return Err(Error::Load(format!(
            "embedding table has {} rows, item vocab has {n}",
            table.rows
        )));
    }
    let mut data = vec![F::ZERO; n * table.dim];
    let mut covered = vec![false; n];
    for (row, id_tok) in table.ids.iter().enumerate() {
        let Some(item_id) = items.item_ids.get(id_tok) else {
            return Err(Error::Load(format!(
                "embedding table row {row} names unknown item {id_tok}"
            )));
        };
        let dst = item_id as usize;
        if covered[dst] {
            return Err(Error::Load(format!("duplicate embedding row for {id_tok}")));
        }
        covered[dst] = true;
        for j in 0..table.dim {
            data[dst * table.dim + j] = F::from_f64(table.data[row * table.dim + j] as f64);
        }
    }
    if let Some(missing) = covered.iter().position(|&c| !c) {
        return Err(Error::Load(format!(
            "embedding table missing row for item {}",
            items.item_ids.token(missing as u32)
        )));
    }
    Tensor::leaf(&[n, table.dim], data)
}
