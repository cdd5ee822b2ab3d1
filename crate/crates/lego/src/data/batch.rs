//! Negative sampling and batch assembly.

use std::collections::HashMap;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::RngExt;

use super::{Dataset, Interaction, Split, PAD_ID};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    /// K+1-way classification over one positive and K sampled negatives.
    Matching { neg_count: usize },
    /// Pointwise click prediction on single candidates.
    Ranking,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NegativeStrategy {
    /// Draw negatives from the same impression (MIND convention).
    InImpression,
    /// Draw uniformly from all real items excluding the positive.
    GlobalUniform,
}

/// One matching example: a slate of K+1 item ids with the positive at
/// `pos_index`.
#[derive(Debug, Clone)]
pub struct MatchingExample {
    pub user_id: u32,
    pub impression_id: u32,
    pub slate: Vec<u32>,
    pub pos_index: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SkipReport {
    /// Positives skipped because their impression had no negatives.
    pub skipped: usize,
}

/// Expand labeled interactions into matching examples with K negatives per
/// positive. The positive position within each slate is randomized.
pub fn sample_negatives(
    rows: &[Interaction],
    k: usize,
    strategy: NegativeStrategy,
    n_items: usize,
    rng: &mut StdRng,
) -> Result<(Vec<MatchingExample>, SkipReport)> {
    if k < 1 {
        return Err(Error::Config("neg_count must be >= 1 for matching".into()));
    }
    // group metadata per impression, preserving first-seen order
    let mut order: Vec<u32> = Vec::new();
    let mut groups: HashMap<u32, (Vec<u32>, Vec<(u32, u32)>)> = HashMap::new(); // (negs, positives(user,item))
    for r in rows {
        let entry = groups.entry(r.impression_id).or_insert_with(|| {
            order.push(r.impression_id);
            (Vec::new(), Vec::new())
        });
        if r.label == 1 {
            entry.1.push((r.user_id, r.item_id));
        } else {
            entry.0.push(r.item_id);
        }
    }

    let real_items: Vec<u32> = (2..n_items as u32).collect();
    let mut out = Vec::new();
    let mut report = SkipReport::default();
    for imp in order {
        let (negs, positives) = &groups[&imp];
        for &(user_id, pos_item) in positives {
            let sampled: Vec<u32> = match strategy {
                NegativeStrategy::InImpression => {
                    if negs.is_empty() {
                        report.skipped += 1;
                        continue;
                    }
                    if negs.len() >= k {
                        // without replacement
                        let mut pool = negs.clone();
                        pool.shuffle(rng);
                        pool.truncate(k);
                        pool
                    } else {
                        // with-replacement fallback
                        (0..k)
                            .map(|_| negs[rng.random_range(0..negs.len())])
                            .collect()
                    }
                }
                NegativeStrategy::GlobalUniform => (0..k)
                    .map(|_| loop {
                        let cand = real_items[rng.random_range(0..real_items.len())];
                        if cand != pos_item {
                            return cand;
                        }
                    })
                    .collect(),
            };
            let pos_index = rng.random_range(0..=k);
            let mut slate = sampled;
            slate.insert(pos_index, pos_item);
            out.push(MatchingExample {
                user_id,
                impression_id: imp,
                slate,
                pos_index,
            });
        }
    }
    Ok((out, report))
}

/// One assembled batch. Histories are left-padded (most recent item last) so
/// recency-sensitive operators see the newest item at the final position.
/// Token grids are derived from item ids through `ItemTable::token_grid`.
#[derive(Debug, Clone)]
pub struct Batch {
    pub size: usize,
    pub candidates: usize,
    pub history_len: usize,
    /// `[size * history_len]` item ids, PAD_ID where masked.
    pub history_items: Vec<u32>,
    /// `[size * history_len]` 0/1.
    pub history_mask: Vec<u8>,
    /// `[size * candidates]` item ids.
    pub candidate_items: Vec<u32>,
    /// Matching: positive index per row. Ranking: 0/1 label per row.
    pub labels: Vec<u32>,
    pub user_ids: Vec<u32>,
    pub impression_ids: Vec<u32>,
}

impl Batch {
    pub fn validate_matching(&self) -> Result<()> {
        for (&lbl, _) in self.labels.iter().zip(0..self.size) {
            if lbl as usize >= self.candidates {
                return Err(Error::Contract(format!(
                    "positive index {lbl} out of range for {} candidates",
                    self.candidates
                )));
            }
        }
        Ok(())
    }
}

fn pad_history(history: &[u32], max_history: usize) -> (Vec<u32>, Vec<u8>) {
    let keep = history.len().min(max_history);
    let mut items = vec![PAD_ID; max_history];
    let mut mask = vec![0u8; max_history];
    let tail = &history[history.len() - keep..];
    for (j, &it) in tail.iter().enumerate() {
        let pos = max_history - keep + j;
        items[pos] = it;
        mask[pos] = 1;
    }
    (items, mask)
}

/// Assemble training/eval batches for one split. Matching batches get a
/// `[b, k+1]` candidate axis, ranking batches `[b, 1]`. Train batches are
/// shuffled with the caller's rng; dev/test preserve interaction order so
/// impression grouping survives for grouped metrics.
pub fn make_batches(
    dataset: &Dataset,
    split: Split,
    task: Task,
    batch_size: usize,
    strategy: NegativeStrategy,
    rng: &mut StdRng,
) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let rows = dataset.interactions.split_rows(split);
    let max_history = dataset.users.max_history;
    let mut batches = Vec::new();

    match task {
        Task::Matching { neg_count } => {
            let (mut examples, _report) =
                sample_negatives(&rows, neg_count, strategy, dataset.items.n_items(), rng)?;
            if split == Split::Train {
                examples.shuffle(rng);
            }
            for chunk in examples.chunks(batch_size) {
                let b = chunk.len();
                let c = neg_count + 1;
                let mut batch = Batch {
                    size: b,
                    candidates: c,
                    history_len: max_history,
                    history_items: Vec::with_capacity(b * max_history),
                    history_mask: Vec::with_capacity(b * max_history),
                    candidate_items: Vec::with_capacity(b * c),
                    labels: Vec::with_capacity(b),
                    user_ids: Vec::with_capacity(b),
                    impression_ids: Vec::with_capacity(b),
                };
                for ex in chunk {
                    let (items, mask) =
                        pad_history(&dataset.users.history[ex.user_id as usize], max_history);
                    batch.history_items.extend(items);
                    batch.history_mask.extend(mask);
                    batch.candidate_items.extend(&ex.slate);
                    batch.labels.push(ex.pos_index as u32);
                    batch.user_ids.push(ex.user_id);
                    batch.impression_ids.push(ex.impression_id);
                }
                batch.validate_matching()?;
                batches.push(batch);
            }
        }
        Task::Ranking => {
            let mut rows = rows;
            if split == Split::Train {
                rows.shuffle(rng);
            }
            for chunk in rows.chunks(batch_size) {
                let b = chunk.len();
                let mut batch = Batch {
                    size: b,
                    candidates: 1,
                    history_len: max_history,
                    history_items: Vec::with_capacity(b * max_history),
                    history_mask: Vec::with_capacity(b * max_history),
                    candidate_items: Vec::with_capacity(b),
                    labels: Vec::with_capacity(b),
                    user_ids: Vec::with_capacity(b),
                    impression_ids: Vec::with_capacity(b),
                };
                for r in chunk {
                    let (items, mask) =
                        pad_history(&dataset.users.history[r.user_id as usize], max_history);
                    batch.history_items.extend(items);
                    batch.history_mask.extend(mask);
                    batch.candidate_items.push(r.item_id);
                    batch.labels.push(r.label as u32);
                    batch.user_ids.push(r.user_id);
                    batch.impression_ids.push(r.impression_id);
                }
                batches.push(batch);
            }
        }
    }
    Ok(batches)
}

/// Evaluation batches: every interaction of the split as a single-candidate
/// row, in stable order, labels carried through for metric grouping.
pub fn make_eval_batches(dataset: &Dataset, split: Split, batch_size: usize) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let rows = dataset.interactions.split_rows(split);
    if rows.is_empty() {
        return Err(Error::Config(format!("split {} is empty", split.as_str())));
    }
    let max_history = dataset.users.max_history;
    let mut batches = Vec::new();
    for chunk in rows.chunks(batch_size) {
        let b = chunk.len();
        let mut batch = Batch {
            size: b,
            candidates: 1,
            history_len: max_history,
            history_items: Vec::with_capacity(b * max_history),
            history_mask: Vec::with_capacity(b * max_history),
            candidate_items: Vec::with_capacity(b),
            labels: Vec::with_capacity(b),
            user_ids: Vec::with_capacity(b),
            impression_ids: Vec::with_capacity(b),
        };
        for r in chunk {
            let (items, mask) =
                pad_history(&dataset.users.history[r.user_id as usize], max_history);
            batch.history_items.extend(items);
            batch.history_mask.extend(mask);
            batch.candidate_items.push(r.item_id);
            batch.labels.push(r.label as u32);
            batch.user_ids.push(r.user_id);
            batch.impression_ids.push(r.impression_id);
        }
        batches.push(batch);
    }
    Ok(batches)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, GenConfig};
    use rand::SeedableRng;

    fn rng() -> StdRng {
        StdRng::seed_from_u64(3)
    }

    fn imp_rows(negs: usize) -> Vec<Interaction> {
        let mut rows = vec![Interaction {
            user_id: 2,
            item_id: 10,
            label: 1,
            impression_id: 1,
            split: Split::Train,
        }];
        for i in 0..negs {
            rows.push(Interaction {
                user_id: 2,
                item_id: 20 + i as u32,
                label: 0,
                impression_id: 1,
                split: Split::Train,
            });
        }
        rows
    }

    #[test]
    fn exact_pool_becomes_permutation() {
        let rows = imp_rows(4);
        let (examples, report) =
            sample_negatives(&rows, 4, NegativeStrategy::InImpression, 100, &mut rng()).unwrap();
        assert_eq!(report.skipped, 0);
        assert_eq!(examples.len(), 1);
        let mut slate = examples[0].slate.clone();
        slate.sort_unstable();
        assert_eq!(slate, vec![10, 20, 21, 22, 23]);
        assert_eq!(examples[0].slate[examples[0].pos_index], 10);
    }

    #[test]
    fn too_few_negatives_fall_back_with_replacement() {
        let rows = imp_rows(1);
        let (examples, _) =
            sample_negatives(&rows, 2, NegativeStrategy::InImpression, 100, &mut rng()).unwrap();
        let ex = &examples[0];
        assert_eq!(ex.slate.len(), 3);
        assert_eq!(ex.slate.iter().filter(|&&i| i == 20).count(), 2);
    }

    #[test]
    fn impression_without_negatives_is_skipped_and_counted() {
        let rows = imp_rows(0);
        let (examples, report) =
            sample_negatives(&rows, 2, NegativeStrategy::InImpression, 100, &mut rng()).unwrap();
        assert!(examples.is_empty());
        assert_eq!(report.skipped, 1);
    }

    #[test]
    fn global_uniform_is_unbiased_within_3_sigma() {
        // 10 real items (vocab 12 with pad/unk); positive excluded
        let rows = imp_rows(1);
        let mut r = rng();
        let mut counts = [0usize; 12];
        let draws = 10_000;
        for _ in 0..draws {
            let (examples, _) =
                sample_negatives(&rows, 1, NegativeStrategy::GlobalUniform, 12, &mut r).unwrap();
            for &it in &examples[0].slate {
                if it != 10 {
                    counts[it as usize] += 1;
                }
            }
        }
        let p = 1.0 / 9.0;
        let expected = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for id in (2..12).filter(|&i| i != 10) {
            let diff = (counts[id] as f64 - expected).abs();
            assert!(
                diff <= 3.0 * sigma,
                "item {id}: {} vs {expected}",
                counts[id]
            );
        }
        assert_eq!(counts[10], 0);
    }

    #[test]
    fn histories_left_pad_with_mask() {
        let (items, mask) = pad_history(&[7], 4);
        assert_eq!(items, vec![0, 0, 0, 7]);
        assert_eq!(mask, vec![0, 0, 0, 1]);
        let (items, mask) = pad_history(&[1, 2, 3, 4, 5, 6], 4);
        assert_eq!(items, vec![3, 4, 5, 6]);
        assert_eq!(mask, vec![1, 1, 1, 1]);
    }

    #[test]
    fn batch_layouts_match_task() {
        let ds = generate_synthetic(&GenConfig::default()).unwrap();
        let mut r = rng();
        let matching = make_batches(
            &ds,
            Split::Train,
            Task::Matching { neg_count: 4 },
            32,
            NegativeStrategy::InImpression,
            &mut r,
        )
        .unwrap();
        assert_eq!(matching[0].candidates, 5);
        assert!(matching[0].labels.iter().all(|&l| l < 5));

        let ranking = make_batches(
            &ds,
            Split::Train,
            Task::Ranking,
            32,
            NegativeStrategy::InImpression,
            &mut r,
        )
        .unwrap();
        assert_eq!(ranking[0].candidates, 1);
        assert!(ranking[0].labels.iter().all(|&l| l <= 1));
    }

    #[test]
    fn matching_batch_candidates_are_valid_items() {
        let ds = generate_synthetic(&GenConfig::default()).unwrap();
        let mut r = rng();
        let batches = make_batches(
            &ds,
            Split::Dev,
            Task::Matching { neg_count: 4 },
            16,
            NegativeStrategy::InImpression,
            &mut r,
        )
        .unwrap();
        let n = ds.items.n_items() as u32;
        for b in &batches {
            assert!(b.candidate_items.iter().all(|&i| i >= 2 && i < n));
        }
    }
}
