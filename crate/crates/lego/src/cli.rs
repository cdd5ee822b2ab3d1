//! Command implementations behind the `lego` binary: prepare, train,
//! evaluate, benchmark, grid. Every command writes its artifacts under
//! `<output_dir>/<command>-<dataset>-<digest>/`.

use std::fs;
use std::path::PathBuf;

use rand::rngs::StdRng;
use rand::SeedableRng;

use crate::behavior::{BehaviorKind, BehaviorOperatorSpec};
use crate::config::{
    build_model, config_digest, load_configured_dataset, model_digest, parse_config,
    prepare_dataset, ExperimentConfig,
};
use crate::content::{ContentKind, ContentOperatorSpec};
use crate::data::{generate_synthetic, make_batches, GenConfig, Split};
use crate::error::{Error, Result};
use crate::metrics::{benchmark_speedup, evaluate};
use crate::model::{build_recommender, ForwardOutput, ModelConfig};
use crate::nn::table_init;
use crate::predictor::{check_composition, PredictorKind, PredictorSpec};
use crate::scalar::Scalar;
use crate::train::{load_checkpoint, train};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Prepare,
    Train,
    Evaluate,
    Benchmark,
    Grid,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Prepare => "prepare",
            Command::Train => "train",
            Command::Evaluate => "evaluate",
            Command::Benchmark => "benchmark",
            Command::Grid => "grid",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub config_files: Vec<PathBuf>,
    pub overrides: Vec<String>,
    /// `--mode split --layer <n>`
    pub mode: Option<String>,
    pub layer: Option<usize>,
    pub no_cache: bool,
    pub seed: Option<u64>,
    pub checkpoint: Option<PathBuf>,
    pub global_auc: bool,
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub out_dir: PathBuf,
    /// Human-readable summary printed to stdout.
    pub summary: String,
}

pub fn run(command: Command, opts: &RunOptions) -> Result<RunArtifacts> {
    let mut overrides = opts.overrides.clone();
    if let Some(seed) = opts.seed {
        overrides.push(format!("train.seed={seed}"));
    }
    match (&opts.mode, opts.layer) {
        (None, None) => {}
        (Some(mode), Some(layer)) if mode == "split" => {
            overrides.push(format!("mode.split_layer={layer}"));
        }
        (Some(mode), _) if mode != "split" => {
            return Err(Error::Config(format!(
                "unknown --mode {mode} (expected split)"
            )));
        }
        _ => {
            return Err(Error::Config(
                "--mode split and --layer must be given together".into(),
            ));
        }
    }
    let config = parse_config(&opts.config_files, &overrides)?;

    let digest = config_digest(&config);
    let out_dir = PathBuf::from(&config.output_dir).join(format!(
        "{}-{}-{}",
        command.as_str(),
        config.dataset.name,
        &digest[..8]
    ));
    fs::create_dir_all(&out_dir)?;

    let summary = match command {
        Command::Prepare => cmd_prepare(&config, &out_dir)?,
        Command::Train => cmd_train(&config, &out_dir)?,
        Command::Evaluate => cmd_evaluate(&config, &out_dir, opts)?,
        Command::Benchmark => cmd_benchmark(&config, &out_dir, opts)?,
        Command::Grid => cmd_grid(&config, &out_dir)?,
    };
    Ok(RunArtifacts { out_dir, summary })
}

fn cmd_prepare(config: &ExperimentConfig, out_dir: &std::path::Path) -> Result<String> {
    let dataset = prepare_dataset(config)?;
    let splits = [Split::Train, Split::Dev, Split::Test];
    let mut summary = format!(
        "prepared dataset {} at {}\nitems: {}\nusers: {}\ninteractions: {}\n",
        config.dataset.name,
        config.dataset.path,
        dataset.items.n_items(),
        dataset.users.n_users(),
        dataset.interactions.rows.len()
    );
    for s in splits {
        summary.push_str(&format!(
            "rows.{}: {}\n",
            s.as_str(),
            dataset.interactions.split_rows(s).len()
        ));
    }
    fs::write(out_dir.join("prepare.txt"), &summary)?;
    Ok(summary)
}

fn cmd_train(config: &ExperimentConfig, out_dir: &std::path::Path) -> Result<String> {
    let dataset = load_configured_dataset(config)?;
    let model = build_model::<f32>(config, &dataset)?;
    let train_config = config.train.to_train_config()?;
    let ckpt = out_dir.join("model.lgcp");
    let digest = model_digest(config);
    let report = train(&model, &dataset, &train_config, Some((&ckpt, digest.as_str())))?;
    let rendered = report.render();
    fs::write(out_dir.join("train_report.txt"), &rendered)?;
    Ok(rendered)
}

fn cmd_evaluate(
    config: &ExperimentConfig,
    out_dir: &std::path::Path,
    opts: &RunOptions,
) -> Result<String> {
    let dataset = load_configured_dataset(config)?;
    let model = build_model::<f32>(config, &dataset)?;
    restore_checkpoint(config, opts, &model)?;
    let split = Split::parse(&config.eval.split)?;
    let report = evaluate(
        &model,
        &dataset,
        split,
        !opts.no_cache,
        config.eval.batch_size,
    )?;
    let rendered = report.render();
    fs::write(out_dir.join("metrics.txt"), &rendered)?;
    let headline = if opts.global_auc {
        format!("global_auc: {:.6}\n", report.global_auc)
    } else {
        format!("group_auc: {:.6}\n", report.group_auc)
    };
    Ok(headline + &rendered)
}

fn cmd_benchmark(
    config: &ExperimentConfig,
    out_dir: &std::path::Path,
    opts: &RunOptions,
) -> Result<String> {
    let dataset = load_configured_dataset(config)?;
    let model = build_model::<f32>(config, &dataset)?;
    restore_checkpoint(config, opts, &model)?;
    let report = benchmark_speedup(
        &model,
        &dataset,
        config.eval.repeats,
        config.eval.batch_size,
    )?;
    let rendered = report.render();
    fs::write(out_dir.join("speedup.txt"), &rendered)?;
    Ok(rendered)
}

fn restore_checkpoint(
    config: &ExperimentConfig,
    opts: &RunOptions,
    model: &crate::model::Recommender<f32>,
) -> Result<()> {
    let path = opts
        .checkpoint
        .clone()
        .or_else(|| config.eval.checkpoint.as_ref().map(PathBuf::from));
    if let Some(path) = path {
        load_checkpoint(&path, &model_digest(config), &model.params())?;
        model.bump_generation();
    }
    Ok(())
}

/// One grid cell: a component triple plus its outcome.
#[derive(Debug, Clone)]
pub struct GridCell {
    pub content: ContentKind,
    pub behavior: BehaviorKind,
    pub predictor: PredictorKind,
    pub status: GridStatus,
}

#[derive(Debug, Clone)]
pub enum GridStatus {
    Pass { loss: f64 },
    Rejected { reason: String },
    Failed { error: String },
}

/// Enumerate every registered component triple, run a forward+backward smoke
/// batch for those passing `check_composition`, and report a pass/fail
/// matrix.
pub fn run_grid(seed: u64) -> Result<Vec<GridCell>> {
    let dataset = generate_synthetic(&GenConfig {
        n_topics: 4,
        n_items: 60,
        n_users: 24,
        vocab_per_topic: 10,
        title_len: 6,
        history_len_range: (1, 6),
        n_impressions: 60,
        candidates_per_impression: 4,
        cold_item_fraction: 0.0,
        noise: 0.1,
        seed,
    })?;
    let d = 16usize;
    let mut batch_rng = StdRng::seed_from_u64(seed ^ 0x5eed);
    let batches = make_batches(
        &dataset,
        Split::Train,
        crate::data::Task::Matching { neg_count: 3 },
        16,
        crate::data::NegativeStrategy::InImpression,
        &mut batch_rng,
    )?;
    let batch = batches[0].clone();

    let mut triples = Vec::new();
    for &c in ContentKind::all() {
        for &b in BehaviorKind::all() {
            for &p in PredictorKind::all() {
                triples.push((c, b, p));
            }
        }
    }

    let cells: Vec<GridCell> = crate::par::map_range(triples.len(), |i| {
        let (c, b, p) = triples[i];
        let status = match check_composition(c, b, p) {
            Err(e) => GridStatus::Rejected {
                reason: e.to_string(),
            },
            Ok(()) => match grid_smoke(&dataset, &batch, c, b, p, d, seed + i as u64) {
                Ok(loss) if loss.is_finite() => GridStatus::Pass { loss },
                Ok(loss) => GridStatus::Failed {
                    error: format!("non-finite loss {loss}"),
                },
                Err(e) => GridStatus::Failed {
                    error: e.to_string(),
                },
            },
        };
        GridCell {
            content: c,
            behavior: b,
            predictor: p,
            status,
        }
    });
    Ok(cells)
}

fn grid_smoke(
    dataset: &crate::data::Dataset,
    batch: &crate::data::Batch,
    c: ContentKind,
    b: BehaviorKind,
    p: PredictorKind,
    d: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = StdRng::seed_from_u64(seed);
    let attr_vocab_lens: Vec<usize> = dataset
        .items
        .selected_attributes
        .iter()
        .map(|a| dataset.items.column(a).unwrap().vocab().len())
        .collect();
    let frozen_table = (c == ContentKind::FrozenTable)
        .then(|| table_init::<f32>(&mut rng, dataset.items.n_items(), d));
    let model = build_recommender(
        ContentOperatorSpec::new(c, d, d),
        BehaviorOperatorSpec::new(b, d, d),
        PredictorSpec::new(p, d, d),
        ModelConfig {
            use_item_content: c.uses_content(),
            use_neg_sampling: true,
            neg_count: 3,
            max_history: dataset.users.max_history,
            embed_dim: d,
            hidden_dim: d,
        },
        &attr_vocab_lens,
        dataset.items.n_items(),
        frozen_table,
        &mut rng,
    )?;
    let ForwardOutput::Loss(loss) = model.forward(&dataset.items, batch)? else {
        unreachable!()
    };
    loss.backward()?;
    Ok(Scalar::to_f64(loss.item()?))
}

fn cmd_grid(config: &ExperimentConfig, out_dir: &std::path::Path) -> Result<String> {
    let cells = run_grid(config.train.seed)?;
    let mut lines = String::new();
    let mut pass = 0usize;
    let mut rejected = 0usize;
    let mut failed = 0usize;
    for cell in &cells {
        let (status, detail) = match &cell.status {
            GridStatus::Pass { loss } => {
                pass += 1;
                ("pass".to_string(), format!("{loss:.6}"))
            }
            GridStatus::Rejected { reason } => {
                rejected += 1;
                ("rejected".to_string(), reason.clone())
            }
            GridStatus::Failed { error } => {
                failed += 1;
                ("failed".to_string(), error.clone())
            }
        };
        lines.push_str(&format!(
            "{},{},{},{status},{detail}\n",
            cell.content.as_str(),
            cell.behavior.as_str(),
            cell.predictor.as_str()
        ));
    }
    let summary = format!(
        "triples: {}\nvalid: {}\nrejected: {}\nfailed: {}\n",
        cells.len(),
        pass,
        rejected,
        failed
    );
    fs::write(out_dir.join("grid.txt"), format!("{lines}{summary}"))?;
    if failed > 0 {
        return Err(Error::Train(format!(
            "{failed} grid compositions failed the smoke batch"
        )));
    }
    Ok(summary)
}
