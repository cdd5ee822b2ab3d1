//! Grouped ranking metrics (AUC, MRR, NDCG@K per impression) and the
//! cached-vs-uncached inference benchmark.
//!
//! Per-impression metrics are embarrassingly parallel; aggregation collects
//! per-group values in impression order and sums sequentially, so reports are
//! byte-identical regardless of thread count.

use std::time::Instant;

use crate::data::{make_eval_batches, Dataset, Split};
use crate::error::{Error, Result};
use crate::model::{ForwardOutput, Recommender};
use crate::par;
use crate::scalar::Scalar;

/// AUC with ties counted 1/2, via average-rank statistics.
/// Returns None for single-class inputs (the caller counts skips).
pub fn auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    // ascending by score; average ranks over tie runs
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based; the tie run [i, j] shares the average rank
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

/// Mean over positives of 1/rank under descending scores; ties keep input
/// order (stable sort).
pub fn mrr(scores: &[f64], labels: &[u8]) -> Option<f64> {
    if !labels.contains(&1) {
        return None;
    }
    let order = descending_stable(scores);
    let mut sum = 0.0;
    let mut n_pos = 0usize;
    for (rank0, &idx) in order.iter().enumerate() {
        if labels[idx] == 1 {
            sum += 1.0 / (rank0 + 1) as f64;
            n_pos += 1;
        }
    }
    Some(sum / n_pos as f64)
}

/// NDCG@k with binary relevance; stable descending order.
pub fn ndcg_at_k(scores: &[f64], labels: &[u8], k: usize) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    if n_pos == 0 {
        return None;
    }
    let order = descending_stable(scores);
    let mut dcg = 0.0;
    for (rank0, &idx) in order.iter().take(k).enumerate() {
        if labels[idx] == 1 {
            dcg += 1.0 / ((rank0 + 2) as f64).log2();
        }
    }
    let mut idcg = 0.0;
    for rank0 in 0..n_pos.min(k) {
        idcg += 1.0 / ((rank0 + 2) as f64).log2();
    }
    Some(dcg / idcg)
}

fn descending_stable(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    order
}

/// Grouped metrics plus timing for one evaluation run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub group_auc: f64,
    pub global_auc: f64,
    pub mrr: f64,
    pub ndcg_at_5: f64,
    pub ndcg_at_10: f64,
    pub n_impressions: usize,
    pub skipped_groups: usize,
    pub used_cache: bool,
    pub wall_s: f64,
    pub cache_build_s: Option<f64>,
}

impl MetricsReport {
    /// Flat `key: value` lines; timing keys carry a `timing.` prefix so they
    /// can be excluded when diffing runs.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("group_auc: {:.6}\n", self.group_auc));
        out.push_str(&format!("global_auc: {:.6}\n", self.global_auc));
        out.push_str(&format!("mrr: {:.6}\n", self.mrr));
        out.push_str(&format!("ndcg_at_5: {:.6}\n", self.ndcg_at_5));
        out.push_str(&format!("ndcg_at_10: {:.6}\n", self.ndcg_at_10));
        out.push_str(&format!("n_impressions: {}\n", self.n_impressions));
        out.push_str(&format!("skipped_groups: {}\n", self.skipped_groups));
        out.push_str(&format!("used_cache: {}\n", self.used_cache));
        out.push_str(&format!("timing.wall_s: {:.3}\n", self.wall_s));
        if let Some(b) = self.cache_build_s {
            out.push_str(&format!("timing.cache_build_s: {b:.3}\n"));
        }
        out
    }

    /// The deterministic part of the report (drops `timing.` lines).
    pub fn render_stable(&self) -> String {
        self.render()
            .lines()
            .filter(|l| !l.starts_with("timing."))
            .collect::<Vec<_>>()
            .join("\n")
            + "\n"
    }
}

/// Score every interaction of `split` and compute per-impression metrics.
/// With `use_cache` the caches are built (timed separately) and scoring runs
/// through the content/behavior cachers; otherwise every row re-encodes live.
pub fn evaluate<F: Scalar>(
    model: &Recommender<F>,
    dataset: &Dataset,
    split: Split,
    use_cache: bool,
    batch_size: usize,
) -> Result<MetricsReport> {
    let batches = make_eval_batches(dataset, split, batch_size)?;

    let cache_build_s = if use_cache {
        let t0 = Instant::now();
        model.build_caches(&dataset.items, &dataset.users, batch_size)?;
        Some(t0.elapsed().as_secs_f64())
    } else {
        None
    };

    let was_training = model.is_training();
    model.set_training(false);
    let t0 = Instant::now();
    let results: Vec<Result<Vec<f64>>> = par::map_range(batches.len(), |bi| {
        let batch = &batches[bi];
        let scores = if use_cache {
            match model.forward(&dataset.items, batch)? {
                ForwardOutput::Scores(s) => s,
                ForwardOutput::Loss(_) => unreachable!(),
            }
        } else {
            model.score_uncached(&dataset.items, batch)?
        };
        Ok(scores.to_vec().iter().map(|v| v.to_f64()).collect())
    });
    let wall_s = t0.elapsed().as_secs_f64();
    model.set_training(was_training);

    // flatten in batch order; rows align with split_rows order
    let mut scores = Vec::new();
    for r in results {
        scores.extend(r?);
    }
    let rows = dataset.interactions.split_rows(split);
    debug_assert_eq!(scores.len(), rows.len());

    let report = grouped_metrics(&scores, &rows)?;
    Ok(MetricsReport {
        used_cache: use_cache,
        wall_s,
        cache_build_s,
        ..report
    })
}

/// Group by impression id, compute each metric per group, average over
/// non-skipped groups.
pub fn grouped_metrics(scores: &[f64], rows: &[crate::data::Interaction]) -> Result<MetricsReport> {
    if rows.is_empty() {
        return Err(Error::Config("no interactions to evaluate".into()));
    }
    // stable grouping: impression ids in first-seen order, rows in input order
    let mut group_order: Vec<u32> = Vec::new();
    let mut groups: std::collections::HashMap<u32, (Vec<f64>, Vec<u8>)> =
        std::collections::HashMap::new();
    for (s, r) in scores.iter().zip(rows.iter()) {
        let entry = groups.entry(r.impression_id).or_insert_with(|| {
            group_order.push(r.impression_id);
            (Vec::new(), Vec::new())
        });
        entry.0.push(*s);
        entry.1.push(r.label);
    }

    let per_group: Vec<Option<(f64, f64, f64, f64)>> = par::map_range(group_order.len(), |gi| {
        let (s, l) = &groups[&group_order[gi]];
        let auc = auc(s, l)?;
        let mrr = mrr(s, l)?;
        let n5 = ndcg_at_k(s, l, 5)?;
        let n10 = ndcg_at_k(s, l, 10)?;
        Some((auc, mrr, n5, n10))
    });

    let mut sums = (0.0, 0.0, 0.0, 0.0);
    let mut n_used = 0usize;
    let mut skipped = 0usize;
    for g in per_group {
        match g {
            Some((a, m, n5, n10)) => {
                sums.0 += a;
                sums.1 += m;
                sums.2 += n5;
                sums.3 += n10;
                n_used += 1;
            }
            None => skipped += 1,
        }
    }
    if n_used == 0 {
        return Err(Error::Data(
            "every impression was single-class; no metrics computable".into(),
        ));
    }
    let n = n_used as f64;

    let labels: Vec<u8> = rows.iter().map(|r| r.label).collect();
    let global_auc = auc(scores, &labels).unwrap_or(0.5);

    Ok(MetricsReport {
        group_auc: sums.0 / n,
        global_auc,
        mrr: sums.1 / n,
        ndcg_at_5: sums.2 / n,
        ndcg_at_10: sums.3 / n,
        n_impressions: n_used,
        skipped_groups: skipped,
        used_cache: false,
        wall_s: 0.0,
        cache_build_s: None,
    })
}

/// Speedup benchmark result.
#[derive(Debug, Clone)]
pub struct SpeedupReport {
    pub uncached_s: Vec<f64>,
    pub cache_build_s: Vec<f64>,
    pub cached_eval_s: Vec<f64>,
    pub speedup: f64,
}

impl SpeedupReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, v) in self.uncached_s.iter().enumerate() {
            out.push_str(&format!("timing.uncached.{i}.wall_s: {v:.3}\n"));
        }
        for (i, (b, e)) in self
            .cache_build_s
            .iter()
            .zip(self.cached_eval_s.iter())
            .enumerate()
        {
            out.push_str(&format!("timing.cached.{i}.build_s: {b:.3}\n"));
            out.push_str(&format!("timing.cached.{i}.eval_s: {e:.3}\n"));
        }
        out.push_str(&format!("timing.speedup: {:.2}\n", self.speedup));
        out
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Median uncached evaluation wall-clock divided by median of (cache build +
/// cached evaluation) over `repeats` runs on the test split.
pub fn benchmark_speedup<F: Scalar>(
    model: &Recommender<F>,
    dataset: &Dataset,
    repeats: usize,
    batch_size: usize,
) -> Result<SpeedupReport> {
    let repeats = repeats.max(1);
    let mut uncached_s = Vec::with_capacity(repeats);
    let mut cache_build_s = Vec::with_capacity(repeats);
    let mut cached_eval_s = Vec::with_capacity(repeats);
    let mut metric_check: Option<String> = None;

    for _ in 0..repeats {
        let uncached = evaluate(model, dataset, Split::Test, false, batch_size)?;
        uncached_s.push(uncached.wall_s);
        let cached = evaluate(model, dataset, Split::Test, true, batch_size)?;
        cache_build_s.push(cached.cache_build_s.unwrap_or(0.0));
        cached_eval_s.push(cached.wall_s);

        // the two pipelines must agree on every metric
        let u = uncached.render_stable().replace("used_cache: false", "");
        let c = cached.render_stable().replace("used_cache: true", "");
        if u != c {
            return Err(Error::Contract(format!(
                "cached and uncached metrics diverged:\n{u}\nvs\n{c}"
            )));
        }
        metric_check.get_or_insert(u);
    }

    let cached_total: Vec<f64> = cache_build_s
        .iter()
        .zip(cached_eval_s.iter())
        .map(|(b, e)| b + e)
        .collect();
    let speedup = median(&uncached_s) / median(&cached_total).max(1e-12);
    Ok(SpeedupReport {
        uncached_s,
        cache_build_s,
        cached_eval_s,
        speedup,
    })
}
