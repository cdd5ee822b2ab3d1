//! Configuration-driven experiment orchestration: nested key-value config
//! files with later-file and command-line overrides, a registry of named
//! model presets, and deterministic config digests for artifact naming.

use std::path::{Path, PathBuf};

use rand::rngs::StdRng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::behavior::{BehaviorKind, BehaviorOperatorSpec};
use crate::content::{ContentKind, ContentOperatorSpec};
use crate::data::{Dataset, NegativeStrategy};
use crate::error::{Error, Result};
use crate::model::{build_recommender, ModelConfig, Recommender};
use crate::predictor::{PredictorKind, PredictorSpec};
use crate::scalar::Scalar;
use crate::train::TrainConfig;

fn default_embed_dim() -> usize {
    64
}
fn default_hidden_dim() -> usize {
    64
}
fn default_heads() -> usize {
    4
}
fn default_layers() -> usize {
    2
}
fn default_kernel() -> usize {
    3
}
fn default_interests() -> usize {
    4
}
fn default_cross_layers() -> usize {
    2
}
fn default_true() -> bool {
    true
}
fn default_neg_count() -> usize {
    4
}
fn default_max_history() -> usize {
    20
}
fn default_eval_batch() -> usize {
    256
}
fn default_repeats() -> usize {
    3
}
fn default_output_dir() -> String {
    "runs".into()
}
fn default_split() -> String {
    "test".into()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSection {
    pub n_topics: usize,
    pub n_items: usize,
    pub n_users: usize,
    pub vocab_per_topic: usize,
    pub title_len: usize,
    pub history_len_min: usize,
    pub history_len_max: usize,
    pub n_impressions: usize,
    pub candidates_per_impression: usize,
    #[serde(default)]
    pub cold_item_fraction: f64,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticSection {
    pub fn to_gen_config(&self) -> crate::data::GenConfig {
        crate::data::GenConfig {
            n_topics: self.n_topics,
            n_items: self.n_items,
            n_users: self.n_users,
            vocab_per_topic: self.vocab_per_topic,
            title_len: self.title_len,
            history_len_range: (self.history_len_min, self.history_len_max),
            n_impressions: self.n_impressions,
            candidates_per_impression: self.candidates_per_impression,
            cold_item_fraction: self.cold_item_fraction,
            noise: self.noise,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MindSection {
    pub news_path: String,
    pub train_behaviors: String,
    #[serde(default)]
    pub dev_behaviors: Option<String>,
    #[serde(default)]
    pub test_behaviors: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum SourceSection {
    Synthetic(SyntheticSection),
    Mind(MindSection),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub name: String,
    /// Directory holding (or receiving) the prepared tri-tables.
    pub path: String,
    #[serde(default)]
    pub source: Option<SourceSection>,
    /// Item attribute columns fed to content operators.
    #[serde(default)]
    pub selected_attributes: Option<Vec<String>>,
    #[serde(default = "default_max_history")]
    pub max_history: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Registry preset name; component kinds may override it.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub content: Option<String>,
    #[serde(default)]
    pub behavior: Option<String>,
    #[serde(default)]
    pub predictor: Option<String>,
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
    #[serde(default = "default_hidden_dim")]
    pub hidden_dim: usize,
    #[serde(default = "default_heads")]
    pub n_heads: usize,
    #[serde(default = "default_layers")]
    pub n_layers: usize,
    #[serde(default = "default_kernel")]
    pub kernel_size: usize,
    #[serde(default)]
    pub dropout: f64,
    #[serde(default = "default_interests")]
    pub n_interests: usize,
    #[serde(default = "default_cross_layers")]
    pub n_cross_layers: usize,
    #[serde(default = "default_true")]
    pub use_item_content: bool,
    #[serde(default = "default_true")]
    pub use_neg_sampling: bool,
    #[serde(default = "default_neg_count")]
    pub neg_count: usize,
    #[serde(default)]
    pub pretrained_path: Option<String>,
}

impl Default for ModelSection {
    fn default() -> Self {
        serde_yaml::from_str("{}").unwrap()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "TrainSection::default_lr")]
    pub lr: f64,
    #[serde(default = "TrainSection::default_beta1")]
    pub beta1: f64,
    #[serde(default = "TrainSection::default_beta2")]
    pub beta2: f64,
    #[serde(default = "TrainSection::default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "TrainSection::default_clip")]
    pub grad_clip_norm: f64,
    #[serde(default = "TrainSection::default_batch")]
    pub batch_size: usize,
    #[serde(default = "TrainSection::default_epochs")]
    pub max_epochs: usize,
    #[serde(default = "TrainSection::default_patience")]
    pub patience: usize,
    #[serde(default = "TrainSection::default_seed")]
    pub seed: u64,
    #[serde(default = "TrainSection::default_eval_interval")]
    pub eval_interval: usize,
    #[serde(default = "TrainSection::default_strategy")]
    pub negative_strategy: String,
}

impl TrainSection {
    fn default_lr() -> f64 {
        1e-3
    }
    fn default_beta1() -> f64 {
        0.9
    }
    fn default_beta2() -> f64 {
        0.999
    }
    fn default_eps() -> f64 {
        1e-8
    }
    fn default_clip() -> f64 {
        5.0
    }
    fn default_batch() -> usize {
        64
    }
    fn default_epochs() -> usize {
        5
    }
    fn default_patience() -> usize {
        2
    }
    fn default_seed() -> u64 {
        42
    }
    fn default_eval_interval() -> usize {
        1
    }
    fn default_strategy() -> String {
        "in_impression".into()
    }

    pub fn to_train_config(&self) -> Result<TrainConfig> {
        let negative_strategy = match self.negative_strategy.as_str() {
            "in_impression" => NegativeStrategy::InImpression,
            "global_uniform" => NegativeStrategy::GlobalUniform,
            other => {
                return Err(Error::Config(format!(
                    "unknown negative_strategy {other} (in_impression | global_uniform)"
                )))
            }
        };
        let cfg = TrainConfig {
            lr: self.lr,
            betas: (self.beta1, self.beta2),
            eps: self.eps,
            weight_decay: self.weight_decay,
            grad_clip_norm: self.grad_clip_norm,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed: self.seed,
            eval_interval: self.eval_interval,
            negative_strategy,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        serde_yaml::from_str("{}").unwrap()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    #[serde(default = "default_eval_batch")]
    pub batch_size: usize,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_split")]
    pub split: String,
    #[serde(default)]
    pub checkpoint: Option<String>,
}

impl Default for EvalSection {
    fn default() -> Self {
        serde_yaml::from_str("{}").unwrap()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct ModeSection {
    /// `--mode split --layer <n>`: freeze transformer layers below `n`.
    #[serde(default)]
    pub split_layer: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub mode: ModeSection,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
}

/// Component triple behind a registry preset.
#[derive(Debug, Clone, Copy)]
pub struct Preset {
    pub content: ContentKind,
    pub behavior: BehaviorKind,
    pub predictor: PredictorKind,
    pub use_item_content: bool,
}

/// Named presets. Every entry passes `check_composition`.
pub fn registry() -> Vec<(&'static str, Preset)> {
    use BehaviorKind as B;
    use ContentKind as C;
    use PredictorKind as P;
    vec![
        (
            "NAML_ID",
            Preset {
                content: C::NullId,
                behavior: B::AdditiveAttention,
                predictor: P::Dot,
                use_item_content: false,
            },
        ),
        (
            "DCN",
            Preset {
                content: C::NullId,
                behavior: B::Pooling,
                predictor: P::Dcn,
                use_item_content: false,
            },
        ),
        (
            "DIN",
            Preset {
                content: C::NullId,
                behavior: B::Null,
                predictor: P::Din,
                use_item_content: false,
            },
        ),
        (
            "DCN_text",
            Preset {
                content: C::Pooling,
                behavior: B::Pooling,
                predictor: P::Dcn,
                use_item_content: true,
            },
        ),
        (
            "DIN_text",
            Preset {
                content: C::Pooling,
                behavior: B::Null,
                predictor: P::Din,
                use_item_content: true,
            },
        ),
        (
            "NAML",
            Preset {
                content: C::Cnn,
                behavior: B::AdditiveAttention,
                predictor: P::Dot,
                use_item_content: true,
            },
        ),
        (
            "NRMS",
            Preset {
                content: C::SelfAttention,
                behavior: B::SelfAttention,
                predictor: P::Dot,
                use_item_content: true,
            },
        ),
        (
            "FASTFORMER",
            Preset {
                content: C::FastformerLite,
                behavior: B::FastformerLite,
                predictor: P::Dot,
                use_item_content: true,
            },
        ),
        (
            "MINER_lite",
            Preset {
                content: C::MiniTransformer,
                behavior: B::PolyAttention,
                predictor: P::TargetAttention,
                use_item_content: true,
            },
        ),
        (
            "PLMNR_lite",
            Preset {
                content: C::MiniTransformer,
                behavior: B::SelfAttention,
                predictor: P::Dot,
                use_item_content: true,
            },
        ),
        (
            "DIRE_frozen",
            Preset {
                content: C::FrozenTable,
                behavior: B::SelfAttention,
                predictor: P::Dot,
                use_item_content: false,
            },
        ),
    ]
}

pub fn lookup_preset(name: &str) -> Result<Preset> {
    registry()
        .into_iter()
        .find(|(n, _)| *n == name)
        .map(|(_, p)| p)
        .ok_or_else(|| {
            let names: Vec<&str> = registry().iter().map(|(n, _)| *n).collect();
            Error::Config(format!(
                "unknown model preset {name}; known presets: {}",
                names.join(", ")
            ))
        })
}

/// The resolved component triple of a config (preset, then explicit kinds).
pub fn resolve_components(
    model: &ModelSection,
) -> Result<(ContentKind, BehaviorKind, PredictorKind, bool)> {
    let preset = match &model.name {
        Some(name) => Some(lookup_preset(name)?),
        None => None,
    };
    let content = match &model.content {
        Some(s) => ContentKind::parse(s)?,
        None => {
            preset
                .ok_or_else(|| {
                    Error::Config("model needs a preset name or explicit components".into())
                })?
                .content
        }
    };
    let behavior = match &model.behavior {
        Some(s) => BehaviorKind::parse(s)?,
        None => {
            preset
                .ok_or_else(|| Error::Config("model.behavior missing".into()))?
                .behavior
        }
    };
    let predictor = match &model.predictor {
        Some(s) => PredictorKind::parse(s)?,
        None => {
            preset
                .ok_or_else(|| Error::Config("model.predictor missing".into()))?
                .predictor
        }
    };
    let use_item_content = match preset {
        Some(p) if model.content.is_none() => p.use_item_content,
        _ => model.use_item_content,
    };
    Ok((content, behavior, predictor, use_item_content))
}

fn merge_values(base: &mut serde_yaml::Value, over: serde_yaml::Value) {
    match (base, over) {
        (serde_yaml::Value::Mapping(b), serde_yaml::Value::Mapping(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge_values(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn set_dotted(root: &mut serde_yaml::Value, path: &str, raw: &str) -> Result<()> {
    let value: serde_yaml::Value = serde_yaml::from_str(raw)
        .map_err(|e| Error::Config(format!("override {path}={raw}: {e}")))?;
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let key = serde_yaml::Value::String(part.to_string());
        if !cur.is_mapping() {
            *cur = serde_yaml::Value::Mapping(Default::default());
        }
        let map = cur.as_mapping_mut().unwrap();
        if i == parts.len() - 1 {
            map.insert(key, value);
            return Ok(());
        }
        cur = map
            .entry(key)
            .or_insert_with(|| serde_yaml::Value::Mapping(Default::default()));
    }
    Ok(())
}

/// Load and merge config files in order (later files shadow earlier ones by
/// key path), apply `key=value` overrides, validate cross-field invariants.
pub fn parse_config(files: &[PathBuf], overrides: &[String]) -> Result<ExperimentConfig> {
    if files.is_empty() {
        return Err(Error::Config(
            "at least one --config file is required".into(),
        ));
    }
    let mut merged = serde_yaml::Value::Mapping(Default::default());
    for path in files {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let value: serde_yaml::Value = serde_yaml::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: e.location().map(|l| l.line()).unwrap_or(0),
            detail: e.to_string(),
        })?;
        merge_values(&mut merged, value);
    }
    for ov in overrides {
        let (path, raw) = ov.split_once('=').ok_or_else(|| {
            Error::Config(format!("override {ov:?} must look like section.key=value"))
        })?;
        set_dotted(&mut merged, path.trim(), raw.trim())?;
    }
    let config: ExperimentConfig =
        serde_yaml::from_value(merged).map_err(|e| Error::Config(e.to_string()))?;
    validate_config(&config)?;
    Ok(config)
}

fn validate_config(config: &ExperimentConfig) -> Result<()> {
    let (content, behavior, predictor, use_item_content) = resolve_components(&config.model)?;
    crate::predictor::check_composition(content, behavior, predictor)?;
    if !use_item_content && content.uses_content() {
        return Err(Error::Config(format!(
            "use_item_content: false conflicts with content kind {}",
            content.as_str()
        )));
    }
    if use_item_content && !content.uses_content() {
        return Err(Error::Config(format!(
            "use_item_content: true conflicts with content kind {}",
            content.as_str()
        )));
    }
    if !config.model.use_neg_sampling && config.model.neg_count != 0 {
        return Err(Error::Config(
            "use_neg_sampling: false requires neg_count: 0".into(),
        ));
    }
    if config.model.use_neg_sampling && config.model.neg_count == 0 {
        return Err(Error::Config(
            "use_neg_sampling: true requires neg_count >= 1".into(),
        ));
    }
    if content == ContentKind::FrozenTable && config.model.pretrained_path.is_none() {
        return Err(Error::Config(
            "frozen_table content requires model.pretrained_path".into(),
        ));
    }
    config.train.to_train_config()?;
    if let Some(layer) = config.mode.split_layer {
        if content != ContentKind::MiniTransformer {
            return Err(Error::Config(format!(
                "--mode split --layer {layer} requires a mini_transformer content operator"
            )));
        }
    }
    crate::data::Split::parse(&config.eval.split)?;
    Ok(())
}

/// FNV-1a digest of the canonical serialized config; used in artifact paths.
pub fn config_digest(config: &ExperimentConfig) -> String {
    fnv(&serde_yaml::to_string(config).unwrap_or_default())
}

/// Digest of the model-identity part of the config (model section plus the
/// dataset name). Stamped into checkpoints so a checkpoint can only be
/// restored into the architecture that produced it.
pub fn model_digest(config: &ExperimentConfig) -> String {
    let canon = format!(
        "{}{}",
        serde_yaml::to_string(&config.model).unwrap_or_default(),
        config.dataset.name
    );
    fnv(&canon)
}

fn fnv(canon: &str) -> String {
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in canon.bytes() {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    format!("{hash:016x}")
}

/// Build the configured model against a prepared dataset.
pub fn build_model<F: Scalar>(
    config: &ExperimentConfig,
    dataset: &Dataset,
) -> Result<Recommender<F>> {
    let (content_kind, behavior_kind, predictor_kind, use_item_content) =
        resolve_components(&config.model)?;
    let m = &config.model;
    let d = m.embed_dim;

    let mut content_spec = ContentOperatorSpec::new(content_kind, d, m.hidden_dim);
    content_spec.n_heads = m.n_heads;
    content_spec.n_layers = m.n_layers;
    content_spec.kernel_size = m.kernel_size;
    content_spec.dropout = m.dropout;
    content_spec.freeze_below_layer = config.mode.split_layer;
    content_spec.pretrained_path = m.pretrained_path.as_ref().map(PathBuf::from);

    let mut behavior_spec = BehaviorOperatorSpec::new(behavior_kind, d, m.hidden_dim);
    behavior_spec.n_heads = m.n_heads;
    behavior_spec.n_interests = m.n_interests;

    let mut predictor_spec = PredictorSpec::new(predictor_kind, d, m.hidden_dim);
    predictor_spec.n_cross_layers = m.n_cross_layers;

    let model_config = ModelConfig {
        use_item_content,
        use_neg_sampling: m.use_neg_sampling,
        neg_count: m.neg_count,
        max_history: dataset.users.max_history,
        embed_dim: d,
        hidden_dim: m.hidden_dim,
    };

    let frozen_table = match content_kind {
        ContentKind::FrozenTable => {
            let path = content_spec.pretrained_path.clone().ok_or_else(|| {
                Error::Config("frozen_table content requires model.pretrained_path".into())
            })?;
            Some(crate::content::load_pretrained_table::<F>(
                &path,
                &dataset.items,
            )?)
        }
        _ => None,
    };

    let attr_vocab_lens: Vec<usize> = dataset
        .items
        .selected_attributes
        .iter()
        .map(|a| {
            dataset
                .items
                .column(a)
                .map(|c| c.vocab().len())
                .ok_or_else(|| Error::Config(format!("unknown selected attribute {a}")))
        })
        .collect::<Result<_>>()?;

    let mut rng = StdRng::seed_from_u64(config.train.seed);
    build_recommender(
        content_spec,
        behavior_spec,
        predictor_spec,
        model_config,
        &attr_vocab_lens,
        dataset.items.n_items(),
        frozen_table,
        &mut rng,
    )
}

/// Materialize the configured dataset source into tri-tables on disk.
pub fn prepare_dataset(config: &ExperimentConfig) -> Result<Dataset> {
    let Some(source) = &config.dataset.source else {
        return Err(Error::Config(
            "prepare requires a dataset.source section".into(),
        ));
    };
    let mut dataset = match source {
        SourceSection::Synthetic(s) => crate::data::generate_synthetic(&s.to_gen_config())?,
        SourceSection::Mind(m) => {
            let mut behaviors =
                vec![(PathBuf::from(&m.train_behaviors), crate::data::Split::Train)];
            if let Some(p) = &m.dev_behaviors {
                behaviors.push((PathBuf::from(p), crate::data::Split::Dev));
            }
            if let Some(p) = &m.test_behaviors {
                behaviors.push((PathBuf::from(p), crate::data::Split::Test));
            }
            crate::data::load_mind_dataset(Path::new(&m.news_path), &behaviors)?
        }
    };
    if let Some(attrs) = &config.dataset.selected_attributes {
        for a in attrs {
            if dataset.items.column(a).is_none() {
                return Err(Error::Config(format!("unknown selected attribute {a}")));
            }
        }
        dataset.items.selected_attributes = attrs.clone();
    }
    dataset.users.max_history = config.dataset.max_history;
    crate::data::save_dataset(Path::new(&config.dataset.path), &dataset)?;
    Ok(dataset)
}

/// Load the prepared dataset named by the config, applying attribute
/// selection and history-length settings.
pub fn load_configured_dataset(config: &ExperimentConfig) -> Result<Dataset> {
    let mut dataset = crate::data::load_dataset(Path::new(&config.dataset.path))?;
    if let Some(attrs) = &config.dataset.selected_attributes {
        for a in attrs {
            if dataset.items.column(a).is_none() {
                return Err(Error::Config(format!("unknown selected attribute {a}")));
            }
        }
        dataset.items.selected_attributes = attrs.clone();
    }
    dataset.users.max_history = config.dataset.max_history;
    Ok(dataset)
}
