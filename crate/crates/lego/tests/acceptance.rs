//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured value (run with `--nocapture` to see them). The criteria
//! cover gradient correctness, objective anchors, cache equivalence, the
//! inference speedup, learnability, cold-start behavior, joint-training
//! reach, split-mode freezing, metric oracles, composition scale, and
//! determinism.
//!
//! Tests share a lock so timing-sensitive measurements never co-run.

use std::sync::Mutex;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};

use lego::behavior::{BehaviorKind, BehaviorOperatorSpec};
use lego::config::{registry, Preset};
use lego::content::{ContentKind, ContentOperatorSpec};
use lego::data::{
    generate_synthetic, make_batches, make_eval_batches, Dataset, GenConfig, NegativeStrategy,
    Split, Task,
};
use lego::metrics::{auc, benchmark_speedup, evaluate, mrr, ndcg_at_k};
use lego::model::{
    build_recommender, matching_loss, ranking_loss, ForwardOutput, ModelConfig, Recommender,
};
use lego::nn::table_init;
use lego::predictor::{PredictorKind, PredictorSpec};
use lego::tensor::{grad_check, grad_check_params, Tensor};
use lego::train::{train, Adam, TrainConfig};

static GATE: Mutex<()> = Mutex::new(());

fn gate() -> std::sync::MutexGuard<'static, ()> {
    GATE.lock().unwrap_or_else(|e| e.into_inner())
}

fn pass(criterion: usize, detail: &str) {
    println!("PASS criterion {criterion}: {detail}");
}

// ---------------------------------------------------------------- helpers

fn toy_dataset(seed: u64) -> Dataset {
    generate_synthetic(&GenConfig {
        n_topics: 3,
        n_items: 30,
        n_users: 12,
        vocab_per_topic: 6,
        title_len: 4,
        history_len_range: (1, 4),
        n_impressions: 40,
        candidates_per_impression: 3,
        cold_item_fraction: 0.0,
        noise: 0.2,
        seed,
    })
    .unwrap()
}

fn build_triple<F: lego::scalar::Scalar>(
    dataset: &Dataset,
    content: ContentKind,
    behavior: BehaviorKind,
    predictor: PredictorKind,
    use_item_content: bool,
    neg_count: usize,
    dim: usize,
    heads: usize,
    seed: u64,
) -> Recommender<F> {
    let mut rng = StdRng::seed_from_u64(seed);
    let attr_vocab_lens: Vec<usize> = dataset
        .items
        .selected_attributes
        .iter()
        .map(|a| dataset.items.column(a).unwrap().vocab().len())
        .collect();
    let frozen = (content == ContentKind::FrozenTable)
        .then(|| table_init::<F>(&mut rng, dataset.items.n_items(), dim));
    let mut cs = ContentOperatorSpec::new(content, dim, dim);
    cs.n_heads = heads;
    let mut bs = BehaviorOperatorSpec::new(behavior, dim, dim);
    bs.n_heads = heads;
    let ps = PredictorSpec::new(predictor, dim, dim);
    build_recommender(
        cs,
        bs,
        ps,
        ModelConfig {
            use_item_content,
            use_neg_sampling: neg_count > 0,
            neg_count,
            max_history: dataset.users.max_history,
            embed_dim: dim,
            hidden_dim: dim,
        },
        &attr_vocab_lens,
        dataset.items.n_items(),
        frozen,
        &mut rng,
    )
    .unwrap()
}

fn build_preset<F: lego::scalar::Scalar>(
    dataset: &Dataset,
    preset: Preset,
    neg_count: usize,
    dim: usize,
    seed: u64,
) -> Recommender<F> {
    build_triple(
        dataset,
        preset.content,
        preset.behavior,
        preset.predictor,
        preset.use_item_content,
        neg_count,
        dim,
        4,
        seed,
    )
}

// ------------------------------------------------- criterion 1: gradients

#[test]
fn criterion_01_gradient_correctness() {
    let _g = gate();
    let t0 = Instant::now();
    let tol = 1e-4;
    let eps = 1e-5;
    let points = 10;

    type Case = (
        &'static str,
        Vec<usize>,
        fn(&mut StdRng, usize) -> f64,
        fn(&Tensor<f64>) -> lego::Result<Tensor<f64>>,
    );
    fn sym(rng: &mut StdRng, _i: usize) -> f64 {
        rng.random_range(-1.5..1.5)
    }
    fn positive(rng: &mut StdRng, _i: usize) -> f64 {
        rng.random_range(0.5..2.0)
    }
    fn off_kink(rng: &mut StdRng, _i: usize) -> f64 {
        let v: f64 = rng.random_range(0.05..1.5);
        if rng.random_range(0..2) == 0 {
            v
        } else {
            -v
        }
    }

    let cases: Vec<Case> = vec![
        ("matmul", vec![3, 4], sym, |x| {
            let w = Tensor::from_vec(&[4, 2], (0..8).map(|i| (i as f64 * 0.37).sin()).collect())?;
            Ok(x.matmul(&w)?.mul(&x.matmul(&w)?)?.sum_all())
        }),
        ("bmm", vec![2, 3, 2], sym, |x| {
            let w = Tensor::from_vec(
                &[2, 2, 2],
                (0..8).map(|i| (i as f64 * 0.21).cos()).collect(),
            )?;
            Ok(x.bmm(&w)?.mul(&x.bmm(&w)?)?.sum_all())
        }),
        ("add", vec![2, 3], sym, |x| {
            let y = Tensor::from_vec(&[2, 3], (0..6).map(|i| i as f64 * 0.1).collect())?;
            Ok(x.add(&y)?.mul(&x.add(&y)?)?.sum_all())
        }),
        ("add_bias", vec![3], sym, |b| {
            let x = Tensor::from_vec(&[2, 3], (0..6).map(|i| (i as f64).sin()).collect())?;
            Ok(x.add_bias(b)?.mul(&x.add_bias(b)?)?.sum_all())
        }),
        ("add_scalar", vec![4], sym, |x| {
            Ok(x.add_scalar(0.7).mul(&x.add_scalar(0.7))?.sum_all())
        }),
        ("sub", vec![2, 2], sym, |x| {
            let y = Tensor::from_vec(&[2, 2], vec![0.3, -0.8, 1.1, 0.2])?;
            Ok(x.sub(&y)?.mul(&x.sub(&y)?)?.sum_all())
        }),
        ("mul", vec![2, 3], sym, |x| {
            let y = Tensor::from_vec(&[2, 3], (0..6).map(|i| 0.5 + i as f64 * 0.2).collect())?;
            Ok(x.mul(&y)?.mul(&x.mul(&y)?)?.sum_all())
        }),
        ("mul_scalar", vec![5], sym, |x| {
            Ok(x.mul_scalar(1.3).mul(&x.mul_scalar(1.3))?.sum_all())
        }),
        ("concat", vec![2, 2], sym, |x| {
            let y = Tensor::from_vec(&[2, 3], (0..6).map(|i| (i as f64 * 0.77).sin()).collect())?;
            let c = Tensor::concat(&[x.clone(), y], 1)?;
            Ok(c.mul(&c)?.sum_all())
        }),
        ("gather", vec![4, 3], sym, |x| {
            let g = x.gather_rows(&[1, 3, 1])?;
            Ok(g.mul(&g)?.sum_all())
        }),
        ("masked_mean", vec![2, 3, 2], sym, |x| {
            let m = Tensor::from_vec(&[2, 3], vec![1.0, 1.0, 0.0, 0.0, 1.0, 1.0])?;
            let o = x.masked_mean_axis1(&m)?;
            Ok(o.mul(&o)?.sum_all())
        }),
        ("softmax", vec![2, 4], sym, |x| {
            let w = Tensor::from_vec(&[2, 4], (0..8).map(|i| (i as f64 * 0.53).cos()).collect())?;
            Ok(x.softmax_last()?.mul(&w)?.sum_all())
        }),
        ("log_softmax", vec![2, 4], sym, |x| {
            let w = Tensor::from_vec(&[2, 4], (0..8).map(|i| (i as f64 * 0.11).sin()).collect())?;
            Ok(x.log_softmax_last()?.mul(&w)?.sum_all())
        }),
        ("masked_softmax", vec![2, 4], sym, |x| {
            let m = Tensor::from_vec(&[2, 4], vec![1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0])?;
            let w = Tensor::from_vec(&[2, 4], (0..8).map(|i| (i as f64 * 0.29).cos()).collect())?;
            Ok(x.masked_softmax_last(&m)?.mul(&w)?.sum_all())
        }),
        ("sigmoid", vec![4], sym, |x| {
            Ok(x.sigmoid().mul(&x.sigmoid())?.sum_all())
        }),
        ("tanh", vec![4], sym, |x| {
            Ok(x.tanh().mul(&x.tanh())?.sum_all())
        }),
        ("relu", vec![5], off_kink, |x| {
            Ok(x.relu().mul(&x.relu())?.sum_all())
        }),
        ("exp", vec![4], sym, |x| {
            Ok(x.exp().mul(&x.exp())?.sum_all())
        }),
        ("log", vec![4], positive, |x| {
            Ok(x.log().mul(&x.log())?.sum_all())
        }),
        ("sum_all", vec![2, 3], sym, |x| {
            Ok(x.sum_all().mul(&x.sum_all())?.sum_all())
        }),
        ("sum_axis", vec![2, 3, 2], sym, |x| {
            let s = x.sum_axis(1)?;
            Ok(s.mul(&s)?.sum_all())
        }),
        ("transpose", vec![2, 3, 2], sym, |x| {
            let w = Tensor::from_vec(
                &[2, 2, 3],
                (0..12).map(|i| (i as f64 * 0.41).sin()).collect(),
            )?;
            Ok(x.transpose(1, 2)?.mul(&w)?.sum_all())
        }),
        ("reshape", vec![2, 6], sym, |x| {
            let w = Tensor::from_vec(&[3, 4], (0..12).map(|i| (i as f64 * 0.13).cos()).collect())?;
            Ok(x.reshape(&[3, 4])?.mul(&w)?.sum_all())
        }),
        ("slice", vec![2, 5], sym, |x| {
            let s = x.slice(1, 1, 3)?;
            Ok(s.mul(&s)?.sum_all())
        }),
        ("layer_norm", vec![3, 4], sym, |x| {
            let gamma = Tensor::from_vec(&[4], vec![1.1, 0.9, 1.3, 0.7])?;
            let beta = Tensor::from_vec(&[4], vec![0.1, -0.2, 0.0, 0.3])?;
            let o = x.layer_norm(&gamma, &beta, 1e-5)?;
            Ok(o.mul(&o)?.sum_all())
        }),
    ];

    let mut worst = 0.0f64;
    for (name, shape, sampler, f) in &cases {
        let numel: usize = shape.iter().product();
        for point_idx in 0..points {
            let mut rng = StdRng::seed_from_u64(1000 + point_idx as u64);
            let point: Vec<f64> = (0..numel).map(|i| sampler(&mut rng, i)).collect();
            let report = grad_check(f, shape, &point, eps).unwrap();
            assert!(
                report.passed(tol),
                "primitive {name} point {point_idx}: {report:?}"
            );
            worst = worst.max(report.max_rel_err);
        }
    }

    // three full composed models at 10 random initializations each
    let ds = toy_dataset(3);
    let mut rng = StdRng::seed_from_u64(99);
    let batches = make_batches(
        &ds,
        Split::Train,
        Task::Matching { neg_count: 2 },
        2,
        NegativeStrategy::InImpression,
        &mut rng,
    )
    .unwrap();
    let batch = batches[0].clone();
    let models: [(&str, ContentKind, BehaviorKind, PredictorKind); 3] = [
        (
            "NRMS-lite",
            ContentKind::SelfAttention,
            BehaviorKind::SelfAttention,
            PredictorKind::Dot,
        ),
        (
            "DCN_text",
            ContentKind::Pooling,
            BehaviorKind::Pooling,
            PredictorKind::Dcn,
        ),
        (
            "DIN_text",
            ContentKind::Pooling,
            BehaviorKind::Null,
            PredictorKind::Din,
        ),
    ];
    for (name, c, b, p) in models {
        for point_idx in 0..points {
            let model: Recommender<f64> =
                build_triple(&ds, c, b, p, true, 2, 8, 2, 5000 + point_idx as u64);
            let params = model.params();
            let report = grad_check_params(
                || match model.forward(&ds.items, &batch)? {
                    ForwardOutput::Loss(l) => Ok(l),
                    ForwardOutput::Scores(_) => unreachable!(),
                },
                &params,
                eps,
            )
            .unwrap();
            assert!(report.passed(tol), "{name} point {point_idx}: {report:?}");
            worst = worst.max(report.max_rel_err);
        }
    }

    let elapsed = t0.elapsed().as_secs_f64();
    assert!(
        elapsed < 120.0,
        "gradient suite took {elapsed:.1}s (budget 120s)"
    );
    pass(
        1,
        &format!("gradient correctness, max rel err {worst:.2e} <= 1e-4, {elapsed:.1}s < 120s"),
    );
}

// ------------------------------------------- criterion 2: objective anchors

#[test]
fn criterion_02_objective_anchors() {
    let _g = gate();
    for k in [1usize, 4, 9] {
        let c = k + 1;
        let logits = Tensor::<f64>::from_vec(&[2, c], vec![0.0; 2 * c]).unwrap();
        let loss = matching_loss(&logits, &[0, k as u32])
            .unwrap()
            .item()
            .unwrap();
        assert!(
            (loss - (c as f64).ln()).abs() <= 1e-6,
            "K={k}: loss {loss} vs ln({c})"
        );
    }
    let logits = Tensor::<f64>::from_vec(&[1, 1], vec![0.0]).unwrap();
    let loss = ranking_loss(&logits, &[1]).unwrap().item().unwrap();
    assert!((loss - 0.25).abs() <= 1e-9, "{loss}");
    pass(2, "matching_loss(uniform) = ln(K+1) +/- 1e-6 for K in {1,4,9}; ranking_loss(0, 1) = 0.25 +/- 1e-9");
}

// -------------------------------------------- criterion 3: cache equivalence

#[test]
fn criterion_03_cache_equivalence_all_presets() {
    let _g = gate();
    // 1280 impressions x 4 candidates -> 512 test interactions
    let ds = generate_synthetic(&GenConfig {
        n_topics: 6,
        n_items: 120,
        n_users: 60,
        vocab_per_topic: 12,
        title_len: 6,
        history_len_range: (0, 8),
        n_impressions: 1280,
        candidates_per_impression: 4,
        cold_item_fraction: 0.0,
        noise: 0.2,
        seed: 31,
    })
    .unwrap();
    let probe_rows = ds.interactions.split_rows(Split::Test).len();
    assert_eq!(probe_rows, 512);

    for (name, preset) in registry() {
        let model: Recommender<f32> = build_preset(&ds, preset, 3, 32, 77);
        model.build_caches(&ds.items, &ds.users, 64).unwrap();
        model.set_training(false);

        let batches = make_eval_batches(&ds, Split::Test, 128).unwrap();
        let mut cached_scores = Vec::new();
        let mut uncached_scores = Vec::new();
        for batch in &batches {
            let ForwardOutput::Scores(c) = model.forward(&ds.items, batch).unwrap() else {
                panic!()
            };
            cached_scores.extend(c.to_vec());
            uncached_scores.extend(model.score_uncached(&ds.items, batch).unwrap().to_vec());
        }
        let mut max_diff = 0.0f32;
        for (c, u) in cached_scores.iter().zip(uncached_scores.iter()) {
            max_diff = max_diff.max((c - u).abs());
        }
        assert!(max_diff <= 1e-6, "{name}: max logit diff {max_diff}");

        // identical per-impression ranking order
        let rows = ds.interactions.split_rows(Split::Test);
        let mut by_imp: std::collections::BTreeMap<u32, Vec<usize>> = Default::default();
        for (i, r) in rows.iter().enumerate() {
            by_imp.entry(r.impression_id).or_default().push(i);
        }
        for (imp, idxs) in &by_imp {
            let order = |scores: &[f32]| {
                let mut o: Vec<usize> = idxs.clone();
                o.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
                o
            };
            assert_eq!(
                order(&cached_scores),
                order(&uncached_scores),
                "{name}: ranking differs in impression {imp}"
            );
        }

        // metric reports identical (timing excluded)
        let cached = evaluate(&model, &ds, Split::Test, true, 128).unwrap();
        let uncached = evaluate(&model, &ds, Split::Test, false, 128).unwrap();
        let strip = |s: String| {
            s.replace("used_cache: true", "")
                .replace("used_cache: false", "")
        };
        assert_eq!(
            strip(cached.render_stable()),
            strip(uncached.render_stable()),
            "{name}: metric reports differ"
        );
    }
    pass(3, "cached == uncached (logits <= 1e-6, rankings and metric reports identical) for all 11 presets on a 512-interaction probe");
}

// ------------------------------------------------- criterion 4: speedup

#[test]
fn criterion_04_inference_speedup() {
    let _g = gate();
    let t0 = Instant::now();
    let base = GenConfig {
        n_topics: 16,
        n_items: 2000,
        n_users: 1000,
        vocab_per_topic: 40,
        title_len: 8,
        history_len_range: (5, 20),
        n_impressions: 40_000, // -> 20k test interactions, 20 per user
        candidates_per_impression: 5,
        cold_item_fraction: 0.0,
        noise: 0.1,
        seed: 11,
    };
    let ds = generate_synthetic(&base).unwrap();
    assert_eq!(ds.interactions.split_rows(Split::Test).len(), 20_000);

    let preset = registry()
        .into_iter()
        .find(|(n, _)| *n == "PLMNR_lite")
        .unwrap()
        .1;
    let model: Recommender<f32> = build_preset(&ds, preset, 4, 64, 2024);
    let report = benchmark_speedup(&model, &ds, 3, 256).unwrap();
    assert!(
        report.speedup >= 5.0,
        "speedup {:.1}x below 5x\n{}",
        report.speedup,
        report.render()
    );

    // doubling interactions per user must not decrease the speedup
    let doubled = GenConfig {
        n_impressions: 80_000,
        ..base
    };
    let ds2 = generate_synthetic(&doubled).unwrap();
    let model2: Recommender<f32> = build_preset(&ds2, preset, 4, 64, 2024);
    let report2 = benchmark_speedup(&model2, &ds2, 1, 256).unwrap();
    assert!(
        report2.speedup >= report.speedup,
        "doubling density decreased speedup: {:.1}x -> {:.1}x",
        report.speedup,
        report2.speedup
    );

    let elapsed = t0.elapsed().as_secs_f64();
    assert!(
        elapsed < 600.0,
        "speedup benchmark took {elapsed:.0}s (budget 600s)"
    );
    pass(
        4,
        &format!(
            "speedup {:.1}x >= 5x (median of 3); doubled density {:.1}x >= base; {elapsed:.0}s < 600s",
            report.speedup, report2.speedup
        ),
    );
}

// ----------------------------------------------- criterion 5: learnability

#[test]
fn criterion_05_learnability_nrms_matching() {
    let _g = gate();
    let t0 = Instant::now();
    let ds = generate_synthetic(&GenConfig {
        n_topics: 12,
        n_items: 800,
        n_users: 400,
        vocab_per_topic: 40,
        title_len: 10,
        history_len_range: (3, 15),
        n_impressions: 4000,
        candidates_per_impression: 5,
        cold_item_fraction: 0.0,
        noise: 0.1,
        seed: 42,
    })
    .unwrap();
    let preset = registry()
        .into_iter()
        .find(|(n, _)| *n == "NRMS")
        .unwrap()
        .1;
    let model: Recommender<f32> = build_preset(&ds, preset, 4, 64, 42);
    let config = TrainConfig {
        max_epochs: 5,
        patience: 5,
        batch_size: 64,
        seed: 42,
        ..TrainConfig::default()
    };
    let report = train(&model, &ds, &config, None).unwrap();
    let best = report.best_dev_auc;
    assert!(
        best >= 0.80,
        "dev group-AUC {best:.4} below 0.80 within 5 epochs\n{}",
        report.render()
    );
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(
        elapsed < 600.0,
        "learnability run took {elapsed:.0}s (budget 600s)"
    );
    pass(
        5,
        &format!("NRMS matching (K=4) reaches dev group-AUC {best:.3} >= 0.80 within 5 epochs, {elapsed:.0}s < 600s"),
    );
}

// ------------------------------------------------- criterion 6: cold start

#[test]
fn criterion_06_cold_start_id_vs_content() {
    let _g = gate();
    let ds = generate_synthetic(&GenConfig {
        n_topics: 12,
        n_items: 800,
        n_users: 400,
        vocab_per_topic: 40,
        title_len: 10,
        history_len_range: (3, 15),
        n_impressions: 4000,
        candidates_per_impression: 5,
        cold_item_fraction: 0.25, // test candidates are all cold
        noise: 0.05,
        seed: 1234,
    })
    .unwrap();
    // identical training budgets
    let config = TrainConfig {
        max_epochs: 3,
        patience: 3,
        batch_size: 64,
        seed: 9,
        ..TrainConfig::default()
    };

    let presets = registry();
    let naml_id = presets.iter().find(|(n, _)| *n == "NAML_ID").unwrap().1;
    let naml = presets.iter().find(|(n, _)| *n == "NAML").unwrap().1;

    let id_model: Recommender<f32> = build_preset(&ds, naml_id, 4, 64, 9);
    train(&id_model, &ds, &config, None).unwrap();
    let id_metrics = evaluate(&id_model, &ds, Split::Test, true, 256).unwrap();

    let content_model: Recommender<f32> = build_preset(&ds, naml, 4, 64, 9);
    train(&content_model, &ds, &config, None).unwrap();
    let content_metrics = evaluate(&content_model, &ds, Split::Test, true, 256).unwrap();

    assert!(
        (0.45..=0.55).contains(&id_metrics.group_auc),
        "ID-only cold AUC {:.4} outside [0.45, 0.55]",
        id_metrics.group_auc
    );
    assert!(
        content_metrics.group_auc >= 0.70,
        "content cold AUC {:.4} below 0.70",
        content_metrics.group_auc
    );
    pass(
        6,
        &format!(
            "cold items: NAML_ID group-AUC {:.3} in [0.45, 0.55]; NAML group-AUC {:.3} >= 0.70",
            id_metrics.group_auc, content_metrics.group_auc
        ),
    );
}

// ------------------------------------------ criterion 7: joint-training reach

#[test]
fn criterion_07_joint_training_reaches_content_operator() {
    let _g = gate();
    let ds = toy_dataset(7);
    let mut rng = StdRng::seed_from_u64(70);
    let batches = make_batches(
        &ds,
        Split::Train,
        Task::Matching { neg_count: 2 },
        8,
        NegativeStrategy::InImpression,
        &mut rng,
    )
    .unwrap();
    let batch = &batches[0];
    let config = TrainConfig::default();

    // NAML: the CNN content operator must receive gradient and move
    let naml = registry()
        .into_iter()
        .find(|(n, _)| *n == "NAML")
        .unwrap()
        .1;
    let model: Recommender<f32> = build_preset(&ds, naml, 2, 16, 70);
    let content_before: Vec<Vec<f32>> = model
        .content_op
        .params()
        .iter()
        .map(|p| p.tensor().to_vec())
        .collect();
    let params = model.params();
    let mut adam = Adam::new(&config, &params);
    model.zero_grads();
    let ForwardOutput::Loss(loss) = model.forward(&ds.items, batch).unwrap() else {
        panic!()
    };
    loss.backward().unwrap();
    let grad_norm: f64 = model
        .content_op
        .params()
        .iter()
        .filter_map(|p| p.grad())
        .flat_map(|g| g.into_iter().map(|v| (v as f64) * (v as f64)))
        .sum::<f64>()
        .sqrt();
    assert!(grad_norm > 0.0, "content-operator gradient norm is zero");
    adam.step(&params).unwrap();
    model.bump_generation();
    let changed = model
        .content_op
        .params()
        .iter()
        .zip(content_before.iter())
        .any(|(p, before)| &p.tensor().to_vec() != before);
    assert!(changed, "content-operator parameters did not change");

    // decoupled frozen_table: the table must not move
    let dire = registry()
        .into_iter()
        .find(|(n, _)| *n == "DIRE_frozen")
        .unwrap()
        .1;
    let frozen_model: Recommender<f32> = build_preset(&ds, dire, 2, 16, 71);
    let table_before: Vec<Vec<f32>> = frozen_model
        .content_op
        .params()
        .iter()
        .map(|p| p.tensor().to_vec())
        .collect();
    let fparams = frozen_model.params();
    let mut fadam = Adam::new(&config, &fparams);
    frozen_model.zero_grads();
    let ForwardOutput::Loss(loss) = frozen_model.forward(&ds.items, batch).unwrap() else {
        panic!()
    };
    loss.backward().unwrap();
    fadam.step(&fparams).unwrap();
    for (p, before) in frozen_model
        .content_op
        .params()
        .iter()
        .zip(table_before.iter())
    {
        assert_eq!(&p.tensor().to_vec(), before, "frozen table moved");
    }
    pass(
        7,
        &format!("NAML content gradient norm {grad_norm:.2e} > 0 and parameters moved; frozen table bytes unchanged"),
    );
}

// -------------------------------------------- criterion 8: split-mode freeze

#[test]
fn criterion_08_split_mode_freezing_and_wall_clock() {
    let _g = gate();
    let ds = generate_synthetic(&GenConfig {
        n_topics: 8,
        n_items: 400,
        n_users: 200,
        vocab_per_topic: 30,
        title_len: 8,
        history_len_range: (3, 12),
        n_impressions: 2000,
        candidates_per_impression: 5,
        cold_item_fraction: 0.0,
        noise: 0.1,
        seed: 88,
    })
    .unwrap();
    let preset = registry()
        .into_iter()
        .find(|(n, _)| *n == "PLMNR_lite")
        .unwrap()
        .1;
    let config = TrainConfig::default();
    let steps = 10usize;
    let mut rng = StdRng::seed_from_u64(880);
    let batches = make_batches(
        &ds,
        Split::Train,
        Task::Matching { neg_count: 4 },
        64,
        NegativeStrategy::InImpression,
        &mut rng,
    )
    .unwrap();
    let stream: Vec<_> = batches.into_iter().cycle().take(steps).collect();

    let run_steps = |layer_n: usize, n: usize| -> (Recommender<f32>, f64) {
        let model: Recommender<f32> = build_preset(&ds, preset, 4, 64, 880);
        model.content_op.apply_freeze_split(layer_n).unwrap();
        let params = model.params();
        let mut adam = Adam::new(&config, &params);
        let t0 = Instant::now();
        for batch in stream.iter().take(n) {
            model.zero_grads();
            let ForwardOutput::Loss(loss) = model.forward(&ds.items, batch).unwrap() else {
                panic!()
            };
            loss.backward().unwrap();
            adam.step(&params).unwrap();
            model.bump_generation();
        }
        (model, t0.elapsed().as_secs_f64())
    };

    // freezing semantics over 10 steps with --layer 1
    let fresh: Recommender<f32> = build_preset(&ds, preset, 4, 64, 880);
    let token_before: Vec<Vec<f32>> = fresh
        .content_op
        .token_table_params()
        .iter()
        .map(|p| p.tensor().to_vec())
        .collect();
    let layer0_before: Vec<Vec<f32>> = fresh
        .content_op
        .layer_params(0)
        .iter()
        .map(|p| p.tensor().to_vec())
        .collect();
    let (split_model, _) = run_steps(1, steps);
    for (p, before) in split_model
        .content_op
        .token_table_params()
        .iter()
        .zip(token_before.iter())
    {
        assert_eq!(
            &p.tensor().to_vec(),
            before,
            "token table moved under split"
        );
    }
    for (p, before) in split_model
        .content_op
        .layer_params(0)
        .iter()
        .zip(layer0_before.iter())
    {
        assert_eq!(&p.tensor().to_vec(), before, "layer 0 moved under split");
    }
    let fresh_layer1: Vec<Vec<f32>> = fresh
        .content_op
        .layer_params(1)
        .iter()
        .map(|p| p.tensor().to_vec())
        .collect();
    let layer1_changed = split_model
        .content_op
        .layer_params(1)
        .iter()
        .zip(fresh_layer1.iter())
        .any(|(p, before)| &p.tensor().to_vec() != before);
    assert!(layer1_changed, "layer 1 did not train under split");

    // wall-clock: full freeze (layer 2) strictly faster than no freeze
    let wall_steps = 30usize.min(stream.len() * 3);
    let stream3: Vec<_> = stream.iter().cloned().cycle().take(wall_steps).collect();
    let run_wall = |layer_n: usize| -> f64 {
        let model: Recommender<f32> = build_preset(&ds, preset, 4, 64, 880);
        model.content_op.apply_freeze_split(layer_n).unwrap();
        let params = model.params();
        let mut adam = Adam::new(&config, &params);
        let t0 = Instant::now();
        for batch in &stream3 {
            model.zero_grads();
            let ForwardOutput::Loss(loss) = model.forward(&ds.items, batch).unwrap() else {
                panic!()
            };
            loss.backward().unwrap();
            adam.step(&params).unwrap();
            model.bump_generation();
        }
        t0.elapsed().as_secs_f64()
    };
    let _warm = run_wall(0);
    let full = run_wall(0);
    let frozen = run_wall(2);
    assert!(
        frozen < full,
        "per-step wall-clock with layer 2 frozen ({frozen:.2}s) not below unfrozen ({full:.2}s)"
    );
    pass(
        8,
        &format!(
            "split --layer 1 froze layer 0 + token table over {steps} steps (layer 1 moved); layer-2 steps {frozen:.2}s < layer-0 steps {full:.2}s"
        ),
    );
}

// --------------------------------------------- criterion 9: metric oracles

#[test]
fn criterion_09_metric_oracles() {
    let _g = gate();
    // brute-force pairwise AUC oracle on 200 random instances, exact equality
    let mut rng = StdRng::seed_from_u64(909);
    let mut checked = 0;
    for _ in 0..200 {
        let n = rng.random_range(2..200);
        let scores: Vec<f64> = (0..n)
            .map(|_| (rng.random_range(0..10) as f64) / 5.0)
            .collect();
        let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2) as u8).collect();
        let fast = auc(&scores, &labels);
        let slow = {
            let pos: Vec<f64> = scores
                .iter()
                .zip(&labels)
                .filter(|(_, &l)| l == 1)
                .map(|(&s, _)| s)
                .collect();
            let neg: Vec<f64> = scores
                .iter()
                .zip(&labels)
                .filter(|(_, &l)| l == 0)
                .map(|(&s, _)| s)
                .collect();
            if pos.is_empty() || neg.is_empty() {
                None
            } else {
                let mut wins = 0.0;
                for &p in &pos {
                    for &q in &neg {
                        wins += if p > q {
                            1.0
                        } else if p == q {
                            0.5
                        } else {
                            0.0
                        };
                    }
                }
                Some(wins / (pos.len() * neg.len()) as f64)
            }
        };
        match (fast, slow) {
            (None, None) => {}
            (Some(f), Some(s)) => {
                assert!((f - s).abs() < 1e-12, "auc {f} != oracle {s}");
                checked += 1;
            }
            other => panic!("{other:?}"),
        }
    }
    assert!(checked > 150);

    // hand-derived values
    assert_eq!(
        mrr(&[0.9, 0.8, 0.7, 0.6, 0.5], &[0, 0, 1, 0, 0]),
        Some(1.0 / 3.0)
    );
    assert_eq!(mrr(&[0.9, 0.8, 0.7, 0.6], &[1, 0, 0, 1]), Some(0.625));
    let n2 = ndcg_at_k(&[0.9, 0.8], &[0, 1], 5).unwrap();
    assert!((n2 - 1.0 / 3.0f64.log2()).abs() < 1e-12);
    assert_eq!(
        ndcg_at_k(&[0.9, 0.8, 0.7, 0.6, 0.5, 0.4], &[0, 0, 0, 0, 0, 1], 5),
        Some(0.0)
    );

    // invariance under strictly monotone transforms
    for trial in 0..50 {
        let mut rng = StdRng::seed_from_u64(4242 + trial);
        let n = rng.random_range(3..40);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2) as u8).collect();
        let transformed: Vec<f64> = scores.iter().map(|s| (s * 0.3).exp() * 2.0 + 1.0).collect();
        assert_eq!(auc(&scores, &labels), auc(&transformed, &labels));
        assert_eq!(mrr(&scores, &labels), mrr(&transformed, &labels));
        assert_eq!(
            ndcg_at_k(&scores, &labels, 5),
            ndcg_at_k(&transformed, &labels, 5)
        );
    }
    pass(9, &format!("auc == pairwise oracle on {checked} two-class instances; mrr/ndcg hand values; monotone invariance"));
}

// ------------------------------------------ criterion 10: composition scale

#[test]
fn criterion_10_composition_grid() {
    let _g = gate();
    let cells = lego::cli::run_grid(10).unwrap();
    let total = cells.len();
    let mut valid = 0;
    let mut rejected = 0;
    for cell in &cells {
        // rejections must match the documented compatibility matrix exactly
        let expected_ok = cell.predictor.accepts(cell.behavior.repr_kind());
        match &cell.status {
            lego::cli::GridStatus::Pass { loss } => {
                assert!(expected_ok, "matrix says reject: {cell:?}");
                assert!(loss.is_finite(), "non-finite loss: {cell:?}");
                valid += 1;
            }
            lego::cli::GridStatus::Rejected { .. } => {
                assert!(!expected_ok, "matrix says accept: {cell:?}");
                rejected += 1;
            }
            lego::cli::GridStatus::Failed { error } => {
                panic!("composition failed smoke batch: {cell:?}: {error}");
            }
        }
    }
    assert_eq!(valid + rejected, total);
    assert!(
        valid >= 100,
        "only {valid} valid compositions (need >= 100)"
    );
    pass(
        10,
        &format!("grid: {valid} valid compositions (>= 100) all finite, {rejected} rejections match the matrix, {total} total"),
    );
}

// ---------------------------------------------- criterion 11: determinism

#[test]
fn criterion_11_cli_determinism() {
    let _g = gate();
    use lego::cli::{run, Command, RunOptions};
    let dir = tempfile::tempdir().unwrap();
    let data_dir = dir.path().join("data");
    let cfg_path = dir.path().join("exp.yaml");
    std::fs::write(
        &cfg_path,
        format!(
            r#"
dataset:
  name: det
  path: {}
  max_history: 8
  source:
    kind: synthetic
    n_topics: 4
    n_items: 80
    n_users: 40
    vocab_per_topic: 10
    title_len: 6
    history_len_min: 1
    history_len_max: 8
    n_impressions: 300
    candidates_per_impression: 4
    noise: 0.1
    seed: 5
model:
  name: NRMS
  embed_dim: 16
  hidden_dim: 16
  n_heads: 2
train:
  batch_size: 32
  max_epochs: 1
  seed: 5
eval:
  batch_size: 64
  split: dev
output_dir: {}
"#,
            data_dir.display(),
            dir.path().join("runs").display()
        ),
    )
    .unwrap();
    let opts = RunOptions {
        config_files: vec![cfg_path.clone()],
        ..RunOptions::default()
    };

    let strip_timing = |text: &str| -> String {
        text.lines()
            .filter(|l| !l.trim_start().starts_with("timing."))
            .collect::<Vec<_>>()
            .join("\n")
    };

    // prepare twice: dataset directories byte-identical
    run(Command::Prepare, &opts).unwrap();
    let snapshot: Vec<(String, Vec<u8>)> = {
        let mut files: Vec<_> = std::fs::read_dir(&data_dir)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        files.sort();
        files
            .iter()
            .map(|f| (f.clone(), std::fs::read(data_dir.join(f)).unwrap()))
            .collect()
    };
    run(Command::Prepare, &opts).unwrap();
    for (name, bytes) in &snapshot {
        let again = std::fs::read(data_dir.join(name)).unwrap();
        assert_eq!(&again, bytes, "prepare not deterministic: {name}");
    }

    // train twice: identical reports modulo timing
    let a = run(Command::Train, &opts).unwrap();
    let report_a = std::fs::read_to_string(a.out_dir.join("train_report.txt")).unwrap();
    let b = run(Command::Train, &opts).unwrap();
    let report_b = std::fs::read_to_string(b.out_dir.join("train_report.txt")).unwrap();
    assert_eq!(strip_timing(&report_a), strip_timing(&report_b));

    // evaluate twice (cached and uncached): identical metrics modulo timing
    for no_cache in [false, true] {
        let mut o = opts.clone();
        o.no_cache = no_cache;
        let a = run(Command::Evaluate, &o).unwrap();
        let m1 = std::fs::read_to_string(a.out_dir.join("metrics.txt")).unwrap();
        let b = run(Command::Evaluate, &o).unwrap();
        let m2 = std::fs::read_to_string(b.out_dir.join("metrics.txt")).unwrap();
        assert_eq!(strip_timing(&m1), strip_timing(&m2));
    }

    // grid twice: identical matrices including losses
    let a = run(Command::Grid, &opts).unwrap();
    let g1 = std::fs::read_to_string(a.out_dir.join("grid.txt")).unwrap();
    let b = run(Command::Grid, &opts).unwrap();
    let g2 = std::fs::read_to_string(b.out_dir.join("grid.txt")).unwrap();
    assert_eq!(g1, g2);

    pass(
        11,
        "prepare/train/evaluate/grid byte-identical across reruns (timing lines excluded)",
    );
}
