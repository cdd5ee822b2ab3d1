//! Model assembly: content operator x behavior operator x click predictor,
//! the matching and ranking objectives, and the content/behavior cachers
//! that switch the forward pass between live encoding (training) and
//! cache lookups plus a live predictor (inference).

use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Mutex, RwLock};

use rand::rngs::StdRng;
use rand::SeedableRng;

use crate::behavior::{BehaviorOperator, UserRepr, UserReprKind};
use crate::content::{featurize, ContentOperator};
use crate::data::{Batch, ItemTable, Task, UserTable};
use crate::error::{Error, Result};
use crate::predictor::{check_composition, Predictor};
use crate::scalar::Scalar;
use crate::tensor::{no_grad, Parameter, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub use_item_content: bool,
    pub use_neg_sampling: bool,
    pub neg_count: usize,
    pub max_history: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.use_neg_sampling && self.neg_count != 0 {
            return Err(Error::Config(
                "use_neg_sampling: false requires neg_count: 0".into(),
            ));
        }
        if self.use_neg_sampling && self.neg_count == 0 {
            return Err(Error::Config(
                "use_neg_sampling: true requires neg_count >= 1".into(),
            ));
        }
        if self.embed_dim == 0 || self.max_history == 0 {
            return Err(Error::Config(
                "embed_dim and max_history must be > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn task(&self) -> Task {
        if self.use_neg_sampling {
            Task::Matching {
                neg_count: self.neg_count,
            }
        } else {
            Task::Ranking
        }
    }
}

/// Precomputed item embeddings, one row per item id.
pub struct ContentCache<F: Scalar> {
    pub table: Tensor<F>,
    pub generation: u64,
}

pub enum CachedRepr<F: Scalar> {
    Vector(Tensor<F>),
    Multi(Tensor<F>),
    Sequence { emb: Tensor<F>, mask: Tensor<F> },
}

/// Precomputed user representations, one entry per user id.
pub struct BehaviorCache<F: Scalar> {
    pub repr: CachedRepr<F>,
    pub generation: u64,
}

pub enum ForwardOutput<F: Scalar> {
    Loss(Tensor<F>),
    Scores(Tensor<F>),
}

/// A composed recommendation model.
pub struct Recommender<F: Scalar> {
    pub content_op: ContentOperator<F>,
    pub behavior_op: BehaviorOperator<F>,
    pub predictor: Predictor<F>,
    pub config: ModelConfig,
    training: AtomicBool,
    /// Optimizer-step generation counter; caches must match it.
    step: AtomicU64,
    content_cache: RwLock<Option<ContentCache<F>>>,
    behavior_cache: RwLock<Option<BehaviorCache<F>>>,
    train_rng: Mutex<StdRng>,
}

impl<F: Scalar> Recommender<F> {
    pub fn new(
        content_op: ContentOperator<F>,
        behavior_op: BehaviorOperator<F>,
        predictor: Predictor<F>,
        config: ModelConfig,
    ) -> Result<Self> {
        config.validate()?;
        check_composition(
            content_op.spec.kind,
            behavior_op.spec.kind,
            predictor.spec.kind,
        )?;
        if content_op.spec.embed_dim != behavior_op.spec.dim
            || behavior_op.spec.dim != predictor.spec.dim
        {
            return Err(Error::Composition(format!(
                "dimension mismatch: content {} behavior {} predictor {}",
                content_op.spec.embed_dim, behavior_op.spec.dim, predictor.spec.dim
            )));
        }
        if config.use_item_content && !content_op.spec.kind.uses_content() {
            return Err(Error::Config(format!(
                "use_item_content: true is incompatible with content kind {}",
                content_op.spec.kind.as_str()
            )));
        }
        if !config.use_item_content && content_op.spec.kind.uses_content() {
            return Err(Error::Config(format!(
                "use_item_content: false requires content kind null_id or frozen_table, got {}",
                content_op.spec.kind.as_str()
            )));
        }
        Ok(Recommender {
            content_op,
            behavior_op,
            predictor,
            config,
            training: AtomicBool::new(true),
            step: AtomicU64::new(0),
            content_cache: RwLock::new(None),
            behavior_cache: RwLock::new(None),
            train_rng: Mutex::new(StdRng::seed_from_u64(0)),
        })
    }

    pub fn set_training(&self, training: bool) {
        self.training.store(training, Ordering::Relaxed);
    }

    pub fn is_training(&self) -> bool {
        self.training.load(Ordering::Relaxed)
    }

    pub fn generation(&self) -> u64 {
        self.step.load(Ordering::Relaxed)
    }

    /// Called by the optimizer after each step; invalidates caches.
    pub fn bump_generation(&self) {
        self.step.fetch_add(1, Ordering::Relaxed);
    }

    pub fn seed_dropout_rng(&self, seed: u64) {
        *self.train_rng.lock().unwrap() = StdRng::seed_from_u64(seed);
    }

    pub fn params(&self) -> Vec<Parameter<F>> {
        let mut out = self.content_op.params();
        out.extend(self.behavior_op.params());
        out.extend(self.predictor.params());
        out
    }

    pub fn trainable_params(&self) -> Vec<Parameter<F>> {
        self.params().into_iter().filter(|p| !p.frozen()).collect()
    }

    pub fn zero_grads(&self) {
        for p in self.params() {
            p.zero_grad();
        }
    }

    /// Encode a list of item ids with the live content operator.
    pub fn encode_item_ids(
        &self,
        items: &ItemTable,
        ids: &[u32],
        train_rng: Option<&mut StdRng>,
    ) -> Result<Tensor<F>> {
        let grids = if self.content_op.spec.kind.uses_content() {
            featurize(items, ids)?
        } else {
            Vec::new()
        };
        self.content_op.encode_items(ids, &grids, train_rng)
    }

    fn mask_tensor(mask: &[u8], b: usize, l: usize) -> Tensor<F> {
        let data = mask.iter().map(|&m| F::from_usize(m as usize)).collect();
        Tensor::from_vec(&[b, l], data).unwrap()
    }

    /// Training/inference switch. Training encodes live (except for content
    /// operators with no trainable parameters, which may read a fresh content
    /// cache) and returns the objective loss; inference requires fresh caches
    /// and runs only the predictor live.
    pub fn forward(&self, items: &ItemTable, batch: &Batch) -> Result<ForwardOutput<F>> {
        if self.is_training() {
            let loss = self.training_loss(items, batch)?;
            Ok(ForwardOutput::Loss(loss))
        } else {
            Ok(ForwardOutput::Scores(self.infer_scores(batch)?))
        }
    }

    fn training_loss(&self, items: &ItemTable, batch: &Batch) -> Result<Tensor<F>> {
        let logits = self.live_logits(items, batch, true)?;
        match self.config.task() {
            Task::Matching { .. } => matching_loss(&logits, &batch.labels),
            Task::Ranking => ranking_loss(&logits, &batch.labels),
        }
    }

    /// Live forward pass building logits from the current parameters. When
    /// the content operator exposes no trainable parameters and a fresh
    /// content cache exists, item embeddings come from the cache even in
    /// training mode.
    pub fn live_logits(&self, items: &ItemTable, batch: &Batch, train: bool) -> Result<Tensor<F>> {
        let (b, c, l) = (batch.size, batch.candidates, batch.history_len);
        let d = self.config.embed_dim;

        let frozen_content = self.content_op.trainable_params().is_empty();
        let cache_guard = self.content_cache.read().unwrap();
        let cached_table = match cache_guard.as_ref() {
            Some(cache) if frozen_content && cache.generation == self.generation() => {
                Some(cache.table.clone())
            }
            _ => None,
        };
        drop(cache_guard);

        let dropout_p = self.content_op.spec.dropout;
        let mut rng_guard = if train && dropout_p > 0.0 {
            Some(self.train_rng.lock().unwrap())
        } else {
            None
        };

        let encode = |ids: &[u32], rng: Option<&mut StdRng>| -> Result<Tensor<F>> {
            match &cached_table {
                Some(table) => table.gather_rows(ids),
                None => self.encode_item_ids(items, ids, rng),
            }
        };

        let hist_emb =
            encode(&batch.history_items, rng_guard.as_deref_mut())?.reshape(&[b, l, d])?;
        let hist_mask = Self::mask_tensor(&batch.history_mask, b, l);
        let user = self.behavior_op.fuse(&hist_emb, &hist_mask)?;
        let cand_emb =
            encode(&batch.candidate_items, rng_guard.as_deref_mut())?.reshape(&[b, c, d])?;
        self.predictor.predict(&user, &cand_emb)
    }

    /// Graph-free recompute of scores without caches; the oracle the cached
    /// path is checked against.
    pub fn score_uncached(&self, items: &ItemTable, batch: &Batch) -> Result<Tensor<F>> {
        no_grad(|| self.live_logits(items, batch, false))
    }

    fn infer_scores(&self, batch: &Batch) -> Result<Tensor<F>> {
        let (b, c, l) = (batch.size, batch.candidates, batch.history_len);
        let d = self.config.embed_dim;
        let generation = self.generation();

        let content = self.content_cache.read().unwrap();
        let Some(content) = content.as_ref() else {
            return Err(Error::CacheInvalid(
                "inference requires a content cache; build_content_cache first".into(),
            ));
        };
        if content.generation != generation {
            return Err(Error::CacheInvalid(format!(
                "content cache generation {} != model generation {generation}; rebuild",
                content.generation
            )));
        }
        let behavior = self.behavior_cache.read().unwrap();
        let Some(behavior) = behavior.as_ref() else {
            return Err(Error::CacheInvalid(
                "inference requires a behavior cache; build_behavior_cache first".into(),
            ));
        };
        if behavior.generation != generation {
            return Err(Error::CacheInvalid(format!(
                "behavior cache generation {} != model generation {generation}; rebuild",
                behavior.generation
            )));
        }

        no_grad(|| {
            let cand_emb = content
                .table
                .gather_rows(&batch.candidate_items)?
                .reshape(&[b, c, d])?;
            let user = match &behavior.repr {
                CachedRepr::Vector(t) => UserRepr::Vector(t.gather_rows(&batch.user_ids)?),
                CachedRepr::Multi(t) => UserRepr::Multi(t.gather_rows(&batch.user_ids)?),
                CachedRepr::Sequence { emb, mask } => UserRepr::Sequence {
                    emb: emb.gather_rows(&batch.user_ids)?,
                    mask: mask.gather_rows(&batch.user_ids)?,
                },
            };
            debug_assert_eq!(batch.history_len, l);
            self.predictor.predict(&user, &cand_emb)
        })
    }

    /// Precompute embeddings for every item id, stamped with the current
    /// generation. Chunks are independent, so the computation parallelizes
    /// without changing bytes.
    pub fn build_content_cache(&self, items: &ItemTable, batch_size: usize) -> Result<u64> {
        let n = items.n_items();
        let d = self.config.embed_dim;
        let batch_size = batch_size.max(1);
        let n_chunks = n.div_ceil(batch_size).max(1);
        let chunks: Vec<Result<Vec<F>>> = crate::par::map_range(n_chunks, |ci| {
            let start = ci * batch_size;
            let end = (start + batch_size).min(n);
            if start >= end {
                return Ok(Vec::new());
            }
            let ids: Vec<u32> = (start as u32..end as u32).collect();
            no_grad(|| Ok(self.encode_item_ids(items, &ids, None)?.to_vec()))
        });
        let mut data = Vec::with_capacity(n * d);
        for chunk in chunks {
            data.extend(chunk?);
        }
        let generation = self.generation();
        *self.content_cache.write().unwrap() = Some(ContentCache {
            table: Tensor::from_vec(&[n, d], data)?,
            generation,
        });
        Ok(generation)
    }

    /// Fuse every user's cached item embeddings into the behavior cache.
    /// Requires a content cache from the same generation.
    pub fn build_behavior_cache(&self, users: &UserTable, batch_size: usize) -> Result<u64> {
        let generation = self.generation();
        let table = {
            let guard = self.content_cache.read().unwrap();
            match guard.as_ref() {
                None => {
                    return Err(Error::CacheInvalid(
                        "build_behavior_cache requires a content cache".into(),
                    ))
                }
                Some(content) if content.generation != generation => {
                    return Err(Error::CacheInvalid(format!(
                        "content cache generation {} != model generation {generation}; rebuild",
                        content.generation
                    )))
                }
                Some(content) => content.table.clone(),
            }
        };

        let n = users.n_users();
        let l = self.config.max_history;
        let d = self.config.embed_dim;
        let batch_size = batch_size.max(1);
        let n_chunks = n.div_ceil(batch_size).max(1);
        let repr_kind = self.behavior_op.spec.kind.repr_kind();
        let k = self.behavior_op.spec.n_interests;

        struct ChunkOut<F> {
            repr: Vec<F>,
            mask: Vec<F>,
        }
        let chunks: Vec<Result<ChunkOut<F>>> = crate::par::map_range(n_chunks, |ci| {
            let start = ci * batch_size;
            let end = (start + batch_size).min(n);
            if start >= end {
                return Ok(ChunkOut {
                    repr: Vec::new(),
                    mask: Vec::new(),
                });
            }
            let b = end - start;
            let mut ids = Vec::with_capacity(b * l);
            let mut mask = Vec::with_capacity(b * l);
            for u in start..end {
                let hist = &users.history[u];
                let keep = hist.len().min(l);
                for _ in 0..l - keep {
                    ids.push(0);
                    mask.push(0u8);
                }
                for &it in &hist[hist.len() - keep..] {
                    ids.push(it);
                    mask.push(1);
                }
            }
            no_grad(|| {
                let emb = table.gather_rows(&ids)?.reshape(&[b, l, d])?;
                let mask_t = Self::mask_tensor(&mask, b, l);
                let repr = self.behavior_op.fuse(&emb, &mask_t)?;
                let (repr, mask_out) = match repr {
                    UserRepr::Vector(t) => (t.to_vec(), Vec::new()),
                    UserRepr::Multi(t) => (t.to_vec(), Vec::new()),
                    UserRepr::Sequence { emb, mask } => (emb.to_vec(), mask.to_vec()),
                };
                Ok(ChunkOut {
                    repr,
                    mask: mask_out,
                })
            })
        });

        let mut repr_data = Vec::new();
        let mut mask_data = Vec::new();
        for chunk in chunks {
            let chunk = chunk?;
            repr_data.extend(chunk.repr);
            mask_data.extend(chunk.mask);
        }
        let repr = match repr_kind {
            UserReprKind::Vector => CachedRepr::Vector(Tensor::from_vec(&[n, d], repr_data)?),
            UserReprKind::Multi => CachedRepr::Multi(Tensor::from_vec(&[n, k, d], repr_data)?),
            UserReprKind::Sequence => CachedRepr::Sequence {
                emb: Tensor::from_vec(&[n, l, d], repr_data)?,
                mask: Tensor::from_vec(&[n, l], mask_data)?,
            },
        };
        *self.behavior_cache.write().unwrap() = Some(BehaviorCache { repr, generation });
        Ok(generation)
    }

    pub fn build_caches(
        &self,
        items: &ItemTable,
        users: &UserTable,
        batch_size: usize,
    ) -> Result<u64> {
        self.build_content_cache(items, batch_size)?;
        self.build_behavior_cache(users, batch_size)
    }

    pub fn clear_caches(&self) {
        *self.content_cache.write().unwrap() = None;
        *self.behavior_cache.write().unwrap() = None;
    }

    pub fn content_cache_table(&self) -> Option<Tensor<F>> {
        self.content_cache
            .read()
            .unwrap()
            .as_ref()
            .map(|c| c.table.clone())
    }

    /// Persist the content cache in the embedding-table binary framing with
    /// the generation stamp in the header.
    pub fn save_content_cache(&self, path: &Path, items: &ItemTable) -> Result<()> {
        let guard = self.content_cache.read().unwrap();
        let Some(cache) = guard.as_ref() else {
            return Err(Error::CacheInvalid("no content cache to save".into()));
        };
        let data = cache.table.to_vec();
        let (n, d) = (cache.table.shape()[0], cache.table.shape()[1]);
        let mut f = fs::File::create(path)?;
        f.write_all(b"LGCC")?;
        f.write_all(&1u32.to_le_bytes())?;
        f.write_all(&cache.generation.to_le_bytes())?;
        f.write_all(&(n as u32).to_le_bytes())?;
        f.write_all(&(d as u32).to_le_bytes())?;
        let mut buf = Vec::with_capacity(data.len() * 4);
        for v in &data {
            buf.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
        }
        f.write_all(&buf)?;
        let ids: Vec<String> = (0..n as u32)
            .map(|i| items.item_ids.token(i).to_string())
            .collect();
        fs::write(format!("{}.ids", path.display()), ids.join("\n") + "\n")?;
        Ok(())
    }

    /// Persist the behavior cache: one record per user id, with the
    /// representation kind and generation stamp in the header.
    pub fn save_behavior_cache(&self, path: &Path) -> Result<()> {
        let guard = self.behavior_cache.read().unwrap();
        let Some(cache) = guard.as_ref() else {
            return Err(Error::CacheInvalid("no behavior cache to save".into()));
        };
        let (kind, tensors): (u8, Vec<&Tensor<F>>) = match &cache.repr {
            CachedRepr::Vector(t) => (0, vec![t]),
            CachedRepr::Multi(t) => (1, vec![t]),
            CachedRepr::Sequence { emb, mask } => (2, vec![emb, mask]),
        };
        let shape = tensors[0].shape();
        let (n, mid, d) = match shape.len() {
            2 => (shape[0], 1, shape[1]),
            3 => (shape[0], shape[1], shape[2]),
            _ => return Err(Error::Contract("unexpected cache rank".into())),
        };
        let mut f = fs::File::create(path)?;
        f.write_all(b"LGBC")?;
        f.write_all(&1u32.to_le_bytes())?;
        f.write_all(&cache.generation.to_le_bytes())?;
        f.write_all(&[kind])?;
        f.write_all(&(n as u32).to_le_bytes())?;
        f.write_all(&(mid as u32).to_le_bytes())?;
        f.write_all(&(d as u32).to_le_bytes())?;
        for t in tensors {
            let data = t.to_vec();
            let mut buf = Vec::with_capacity(data.len() * 4);
            for v in &data {
                buf.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
            }
            f.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn load_behavior_cache(&self, path: &Path) -> Result<u64> {
        let mut f =
            fs::File::open(path).map_err(|e| Error::Load(format!("{}: {e}", path.display())))?;
        let mut head = [0u8; 29];
        f.read_exact(&mut head)
            .map_err(|_| Error::Load(format!("{}: truncated header", path.display())))?;
        if &head[0..4] != b"LGBC" {
            return Err(Error::Load("bad behavior cache magic".into()));
        }
        let generation = u64::from_le_bytes(head[8..16].try_into().unwrap());
        let kind = head[16];
        let n = u32::from_le_bytes(head[17..21].try_into().unwrap()) as usize;
        let mid = u32::from_le_bytes(head[21..25].try_into().unwrap()) as usize;
        let d = u32::from_le_bytes(head[25..29].try_into().unwrap()) as usize;
        let mut rest = Vec::new();
        f.read_to_end(&mut rest)?;
        let floats: Vec<F> = rest
            .chunks_exact(4)
            .map(|c| F::from_f64(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
            .collect();
        let repr = match kind {
            0 => {
                expect_len(&floats, n * d, path)?;
                CachedRepr::Vector(Tensor::from_vec(&[n, d], floats)?)
            }
            1 => {
                expect_len(&floats, n * mid * d, path)?;
                CachedRepr::Multi(Tensor::from_vec(&[n, mid, d], floats)?)
            }
            2 => {
                expect_len(&floats, n * mid * d + n * mid, path)?;
                let emb = floats[..n * mid * d].to_vec();
                let mask = floats[n * mid * d..].to_vec();
                CachedRepr::Sequence {
                    emb: Tensor::from_vec(&[n, mid, d], emb)?,
                    mask: Tensor::from_vec(&[n, mid], mask)?,
                }
            }
            other => return Err(Error::Load(format!("bad cache kind tag {other}"))),
        };
        *self.behavior_cache.write().unwrap() = Some(BehaviorCache { repr, generation });
        Ok(generation)
    }

    pub fn load_content_cache(&self, path: &Path) -> Result<u64> {
        let mut f =
            fs::File::open(path).map_err(|e| Error::Load(format!("{}: {e}", path.display())))?;
        let mut head = [0u8; 24];
        f.read_exact(&mut head)
            .map_err(|_| Error::Load(format!("{}: truncated header", path.display())))?;
        if &head[0..4] != b"LGCC" {
            return Err(Error::Load("bad content cache magic".into()));
        }
        let generation = u64::from_le_bytes(head[8..16].try_into().unwrap());
        let n = u32::from_le_bytes(head[16..20].try_into().unwrap()) as usize;
        let d = u32::from_le_bytes(head[20..24].try_into().unwrap()) as usize;
        if d != self.config.embed_dim {
            return Err(Error::Load(format!(
                "cache dim {d} != model embed_dim {}",
                self.config.embed_dim
            )));
        }
        let mut rest = Vec::new();
        f.read_to_end(&mut rest)?;
        if rest.len() != n * d * 4 {
            return Err(Error::Load("content cache payload size mismatch".into()));
        }
        let data: Vec<F> = rest
            .chunks_exact(4)
            .map(|c| F::from_f64(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
            .collect();
        *self.content_cache.write().unwrap() = Some(ContentCache {
            table: Tensor::from_vec(&[n, d], data)?,
            generation,
        });
        Ok(generation)
    }
}

fn expect_len<F>(data: &[F], want: usize, path: &Path) -> Result<()> {
    if data.len() != want {
        return Err(Error::Load(format!(
            "{}: expected {want} values, found {}",
            path.display(),
            data.len()
        )));
    }
    Ok(())
}

/// Mean over the batch of -log softmax(logits)[positive]; softmax computed
/// with max-subtraction stabilization.
pub fn matching_loss<F: Scalar>(logits: &Tensor<F>, positives: &[u32]) -> Result<Tensor<F>> {
    if logits.rank() != 2 || logits.shape()[0] != positives.len() {
        return Err(Error::Contract(format!(
            "matching_loss: logits {:?} vs {} labels",
            logits.shape(),
            positives.len()
        )));
    }
    let (b, c) = (logits.shape()[0], logits.shape()[1]);
    let mut one_hot = vec![F::ZERO; b * c];
    for (bi, &p) in positives.iter().enumerate() {
        if p as usize >= c {
            return Err(Error::Contract(format!(
                "positive index {p} out of range for {c} candidates"
            )));
        }
        one_hot[bi * c + p as usize] = F::ONE;
    }
    let one_hot = Tensor::from_vec(&[b, c], one_hot)?;
    let lsm = logits.log_softmax_last()?;
    Ok(lsm
        .mul(&one_hot)?
        .sum_all()
        .mul_scalar(-F::ONE / F::from_usize(b)))
}

/// Mean squared error between sigmoid(logit) and the binary label.
pub fn ranking_loss<F: Scalar>(logits: &Tensor<F>, labels: &[u32]) -> Result<Tensor<F>> {
    let b = labels.len();
    if logits.numel() != b {
        return Err(Error::Contract(format!(
            "ranking_loss: logits {:?} vs {b} labels",
            logits.shape()
        )));
    }
    let y: Vec<F> = labels.iter().map(|&l| F::from_usize(l as usize)).collect();
    let y = Tensor::from_vec(&[b], y)?;
    let r = logits.reshape(&[b])?.sigmoid();
    let diff = r.sub(&y)?;
    Ok(diff.mul(&diff)?.mean_all())
}

/// Assemble a model from component specs. `frozen_table` must be provided
/// for (and only for) the frozen_table content kind.
pub fn build_recommender<F: Scalar>(
    content_spec: crate::content::ContentOperatorSpec,
    behavior_spec: crate::behavior::BehaviorOperatorSpec,
    predictor_spec: crate::predictor::PredictorSpec,
    config: ModelConfig,
    attr_vocab_lens: &[usize],
    n_items: usize,
    frozen_table: Option<Tensor<F>>,
    rng: &mut StdRng,
) -> Result<Recommender<F>> {
    check_composition(content_spec.kind, behavior_spec.kind, predictor_spec.kind)?;
    let content_op = match frozen_table {
        Some(table) => ContentOperator::with_frozen_table(content_spec, table)?,
        None => ContentOperator::new(content_spec, attr_vocab_lens, n_items, rng)?,
    };
    let behavior_op = BehaviorOperator::new(behavior_spec, rng)?;
    let predictor = Predictor::new(predictor_spec, rng)?;
    Recommender::new(content_op, behavior_op, predictor, config)
}
