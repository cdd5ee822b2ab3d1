//! Synthetic dataset generator with planted preference structure.
//!
//! Every item belongs to a latent topic and draws its title from that topic's
//! private vocabulary; every user prefers a small set of topics. Positives
//! come from preferred topics and negatives from non-preferred ones (up to
//! `noise`), so a content model can recover the structure from tokens alone.
//! A configurable fraction of items is held out of training entirely and
//! used as the candidate pool of the test split: the cold-item split.

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};

use super::{Column, Dataset, Interaction, InteractionTable, ItemTable, Split, UserTable, Vocab};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub n_topics: usize,
    pub n_items: usize,
    pub n_users: usize,
    pub vocab_per_topic: usize,
    pub title_len: usize,
    pub history_len_range: (usize, usize),
    pub n_impressions: usize,
    pub candidates_per_impression: usize,
    pub cold_item_fraction: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_topics: 16,
            n_items: 500,
            n_users: 200,
            vocab_per_topic: 40,
            title_len: 10,
            history_len_range: (3, 12),
            n_impressions: 2000,
            candidates_per_impression: 5,
            cold_item_fraction: 0.0,
            noise: 0.0,
            seed: 42,
        }
    }
}

impl GenConfig {
    fn validate(&self) -> Result<()> {
        if self.n_topics == 0
            || self.n_items == 0
            || self.n_users == 0
            || self.vocab_per_topic == 0
            || self.title_len == 0
            || self.n_impressions == 0
            || self.candidates_per_impression < 2
        {
            return Err(Error::Config(
                "synthetic generator: all counts must be positive (and >= 2 candidates)".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.cold_item_fraction) {
            return Err(Error::Config("cold_item_fraction must be in [0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::Config("noise must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Item ids are vocab ids (>= 2); topic of real item i is positional.
fn topic_of(cfg: &GenConfig, item_index: usize) -> usize {
    item_index % cfg.n_topics
}

/// Generation is a pure function of the seed: same config, same bytes.
pub fn generate_synthetic(cfg: &GenConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = StdRng::seed_from_u64(cfg.seed);

    let n_cold = (cfg.cold_item_fraction * cfg.n_items as f64).floor() as usize;
    let n_warm = cfg.n_items - n_cold;
    if n_warm == 0 {
        return Err(Error::Config("cold items exceed available items".into()));
    }

    // items: the last n_cold indices are cold
    let mut item_ids = Vocab::new("item_id");
    let mut title_vocab = Vocab::new("title");
    let mut topic_vocab = Vocab::new("topic");
    let mut title_rows: Vec<Vec<u32>> = vec![Vec::new(), Vec::new()];
    let mut topic_rows: Vec<u32> = vec![0, 0];

    // pre-register topic vocabularies so token ids don't depend on draw order
    let mut topic_tokens: Vec<Vec<u32>> = Vec::with_capacity(cfg.n_topics);
    for t in 0..cfg.n_topics {
        let toks = (0..cfg.vocab_per_topic)
            .map(|j| title_vocab.get_or_insert(&format!("t{t:02}w{j:03}")))
            .collect();
        topic_tokens.push(toks);
        topic_vocab.get_or_insert(&format!("topic{t:02}"));
    }

    for i in 0..cfg.n_items {
        let topic = topic_of(cfg, i);
        item_ids.get_or_insert(&format!("i{i:06}"));
        let title: Vec<u32> = (0..cfg.title_len)
            .map(|_| topic_tokens[topic][rng.random_range(0..cfg.vocab_per_topic)])
            .collect();
        title_rows.push(title);
        topic_rows.push(topic_vocab.lookup(&format!("topic{topic:02}")));
    }

    let items = ItemTable {
        item_ids,
        columns: vec![
            (
                "title".to_string(),
                Column::Tokens {
                    vocab: title_vocab,
                    max_len: cfg.title_len,
                    rows: title_rows,
                },
            ),
            (
                "topic".to_string(),
                Column::Categorical {
                    vocab: topic_vocab,
                    rows: topic_rows,
                },
            ),
        ],
        selected_attributes: vec!["title".to_string()],
    };

    // per-topic pools of item vocab ids (warm vs cold)
    let to_vocab_id = |index: usize| (index + 2) as u32;
    let mut warm_by_topic: Vec<Vec<u32>> = vec![Vec::new(); cfg.n_topics];
    let mut cold_by_topic: Vec<Vec<u32>> = vec![Vec::new(); cfg.n_topics];
    for i in 0..cfg.n_items {
        let pool = if i < n_warm {
            &mut warm_by_topic
        } else {
            &mut cold_by_topic
        };
        pool[topic_of(cfg, i)].push(to_vocab_id(i));
    }
    if warm_by_topic.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(
            "infeasible config: a topic has no warm items".into(),
        ));
    }
    if n_cold > 0 && cold_by_topic.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(
            "infeasible config: a topic has no cold items; raise cold_item_fraction or n_items"
                .into(),
        ));
    }
    let warm_all: Vec<u32> = (0..n_warm).map(to_vocab_id).collect();
    let cold_all: Vec<u32> = (n_warm..cfg.n_items).map(to_vocab_id).collect();

    // users: 1-2 preferred topics, histories drawn from preferred warm items
    let mut user_ids = Vocab::new("user_id");
    let mut history: Vec<Vec<u32>> = vec![Vec::new(), Vec::new()];
    let mut prefs: Vec<Vec<usize>> = vec![Vec::new(), Vec::new()];
    let (hmin, hmax) = cfg.history_len_range;
    for u in 0..cfg.n_users {
        user_ids.get_or_insert(&format!("u{u:06}"));
        let hlen = if hmax > hmin {
            rng.random_range(hmin..=hmax)
        } else {
            hmin
        };
        let wants_two = cfg.n_topics > 1 && rng.random_range(0.0..1.0) < 0.5;
        // the history must cover every preferred topic
        let n_pref = if wants_two { 2 } else { 1 }.min(hlen.max(1));
        let mut pref = Vec::with_capacity(n_pref);
        while pref.len() < n_pref {
            let t = rng.random_range(0..cfg.n_topics);
            if !pref.contains(&t) {
                pref.push(t);
            }
        }
        let mut hist: Vec<u32> = (0..hlen)
            .map(|i| {
                let t = if i < n_pref {
                    pref[i]
                } else {
                    pref[rng.random_range(0..pref.len())]
                };
                warm_by_topic[t][rng.random_range(0..warm_by_topic[t].len())]
            })
            .collect();
        hist.shuffle(&mut rng);
        history.push(hist);
        prefs.push(pref);
    }

    let users = UserTable {
        user_ids,
        history,
        max_history: hmax.max(1),
    };

    // impressions: 80/10/10 split by index; test candidates come from the
    // cold pool when one exists
    let n_train = (cfg.n_impressions * 8) / 10;
    let n_dev = cfg.n_impressions / 10;
    let mut rows = Vec::with_capacity(cfg.n_impressions * cfg.candidates_per_impression);
    for imp in 0..cfg.n_impressions {
        let split = if imp < n_train {
            Split::Train
        } else if imp < n_train + n_dev {
            Split::Dev
        } else {
            Split::Test
        };
        let cold_pool = split == Split::Test && n_cold > 0;
        let (by_topic, all) = if cold_pool {
            (&cold_by_topic, &cold_all)
        } else {
            (&warm_by_topic, &warm_all)
        };

        let user_index = rng.random_range(0..cfg.n_users);
        let user_id = (user_index + 2) as u32;
        let pref = &prefs[user_id as usize];

        let pick_preferred = |rng: &mut StdRng| {
            let t = pref[rng.random_range(0..pref.len())];
            by_topic[t][rng.random_range(0..by_topic[t].len())]
        };
        let pick_uniform = |rng: &mut StdRng| all[rng.random_range(0..all.len())];
        let pick_non_preferred = |rng: &mut StdRng| loop {
            let t = rng.random_range(0..cfg.n_topics);
            if !pref.contains(&t) || cfg.n_topics == pref.len() {
                return by_topic[t][rng.random_range(0..by_topic[t].len())];
            }
        };

        let positive = if rng.random_range(0.0..1.0) < cfg.noise {
            pick_uniform(&mut rng)
        } else {
            pick_preferred(&mut rng)
        };
        let mut slate = vec![(positive, 1u8)];
        for _ in 1..cfg.candidates_per_impression {
            let neg = if cfg.n_topics == pref.len() || rng.random_range(0.0..1.0) < cfg.noise {
                pick_uniform(&mut rng)
            } else {
                pick_non_preferred(&mut rng)
            };
            slate.push((neg, 0));
        }
        // stable positive-first layout; batching shuffles slates later
        let impression_id = (imp + 1) as u32;
        for (item_id, label) in slate {
            rows.push(Interaction {
                user_id,
                item_id,
                label,
                impression_id,
                split,
            });
        }
    }

    let interactions = InteractionTable { rows };
    let dataset = Dataset {
        items,
        users,
        interactions,
    };
    dataset
        .interactions
        .validate(&dataset.items, &dataset.users)?;
    Ok(dataset)
}

/// Item ids that never appear in any training interaction or user history.
pub fn absent_from_train(dataset: &Dataset) -> Vec<u32> {
    let mut seen = vec![false; dataset.items.n_items()];
    for row in &dataset.interactions.rows {
        if row.split == Split::Train {
            seen[row.item_id as usize] = true;
        }
    }
    for hist in &dataset.users.history {
        for &it in hist {
            seen[it as usize] = true;
        }
    }
    (2..dataset.items.n_items() as u32)
        .filter(|&id| !seen[id as usize])
        .collect()
}
