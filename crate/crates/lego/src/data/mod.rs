//! The normalized tri-table data model: an item content table, a user
//! behavior table, and an interaction table. Item content carries no user or
//! interaction information (second normal form), which is what makes
//! attribute columns swappable without touching the other tables.

mod batch;
mod mind;
mod store;
mod synthetic;

pub use batch::{
    make_batches, make_eval_batches, sample_negatives, Batch, MatchingExample, NegativeStrategy,
    SkipReport, Task,
};
pub use mind::{load_mind_dataset, load_mind_tsv};
pub use store::{
    load_dataset, load_embedding_table, save_dataset, save_embedding_table, EmbeddingTable,
};
pub use synthetic::{absent_from_train, generate_synthetic, GenConfig};

use std::collections::HashMap;

use crate::error::{Error, Result};

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;

/// Bijective token <-> id mapping. Id 0 is padding, id 1 is unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    name: String,
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
}

impl Vocab {
    pub fn new(name: impl Into<String>) -> Self {
        let mut v = Vocab {
            name: name.into(),
            token_to_id: HashMap::new(),
            id_to_token: Vec::new(),
        };
        v.get_or_insert("<pad>");
        v.get_or_insert("<unk>");
        v
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn get_or_insert(&mut self, token: &str) -> u32 {
        if let Some(&id) = self.token_to_id.get(token) {
            return id;
        }
        let id = self.id_to_token.len() as u32;
        self.id_to_token.push(token.to_string());
        self.token_to_id.insert(token.to_string(), id);
        id
    }

    /// Lookup without inserting; unseen tokens map to `UNK_ID`.
    pub fn lookup(&self, token: &str) -> u32 {
        self.token_to_id.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.id_to_token[id as usize]
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }
}

/// Lowercase, split on whitespace and punctuation. No subwords.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(|s| s.to_string())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    /// Tokenized text, truncated to `max_len`, never padded in storage.
    Tokens {
        vocab: Vocab,
        max_len: usize,
        rows: Vec<Vec<u32>>,
    },
    /// One categorical id per item.
    Categorical { vocab: Vocab, rows: Vec<u32> },
}

impl Column {
    pub fn vocab(&self) -> &Vocab {
        match self {
            Column::Tokens { vocab, .. } => vocab,
            Column::Categorical { vocab, .. } => vocab,
        }
    }

    pub fn n_rows(&self) -> usize {
        match self {
            Column::Tokens { rows, .. } => rows.len(),
            Column::Categorical { rows, .. } => rows.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttrKind {
    Text { max_len: usize },
    Categorical,
}

#[derive(Debug, Clone)]
pub struct AttributeConfig {
    pub name: String,
    pub kind: AttrKind,
}

/// One raw item row: an id plus attribute values aligned with the
/// `AttributeConfig` list handed to `build_item_table`.
#[derive(Debug, Clone)]
pub struct RawItem {
    pub id: String,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemTable {
    pub item_ids: Vocab,
    /// Attribute name -> column, in `attribute_order`.
    pub columns: Vec<(String, Column)>,
    pub selected_attributes: Vec<String>,
}

impl ItemTable {
    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, c)| c)
    }

    /// Replace one attribute column (the augmented-content swap). The new
    /// column must cover every item id.
    pub fn swap_column(&mut self, name: &str, column: Column) -> Result<()> {
        if column.n_rows() != self.n_items() {
            return Err(Error::Data(format!(
                "column {name}: {} rows for {} items",
                column.n_rows(),
                self.n_items()
            )));
        }
        match self.columns.iter_mut().find(|(n, _)| n == name) {
            Some((_, c)) => {
                *c = column;
                Ok(())
            }
            None => Err(Error::Data(format!("unknown attribute {name}"))),
        }
    }

    /// Fixed-width `[n, t]` token grid plus 0/1 mask for a list of item ids,
    /// padded with token id 0 to the attribute's max length.
    pub fn token_grid(&self, attr: &str, item_ids: &[u32]) -> Result<(Vec<u32>, Vec<u8>, usize)> {
        match self.column(attr) {
            Some(Column::Tokens { rows, max_len, .. }) => {
                let t = *max_len;
                let mut tokens = vec![PAD_ID; item_ids.len() * t];
                let mut mask = vec![0u8; item_ids.len() * t];
                for (i, &id) in item_ids.iter().enumerate() {
                    let row = &rows[id as usize];
                    for (j, &tok) in row.iter().take(t).enumerate() {
                        tokens[i * t + j] = tok;
                        mask[i * t + j] = 1;
                    }
                }
                Ok((tokens, mask, t))
            }
            Some(Column::Categorical { rows, .. }) => {
                let tokens: Vec<u32> = item_ids.iter().map(|&id| rows[id as usize]).collect();
                let mask = vec![1u8; item_ids.len()];
                Ok((tokens, mask, 1))
            }
            None => Err(Error::Config(format!("unknown attribute {attr}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserTable {
    pub user_ids: Vocab,
    /// Per-user item ids, most recent last, indexed by user id.
    pub history: Vec<Vec<u32>>,
    pub max_history: usize,
}

impl UserTable {
    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Split> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interaction {
    pub user_id: u32,
    pub item_id: u32,
    pub label: u8,
    pub impression_id: u32,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct InteractionTable {
    pub rows: Vec<Interaction>,
}

impl InteractionTable {
    pub fn split_rows(&self, split: Split) -> Vec<Interaction> {
        self.rows
            .iter()
            .copied()
            .filter(|r| r.split == split)
            .collect()
    }

    /// Each impression id must map to exactly one user and one split.
    pub fn validate(&self, items: &ItemTable, users: &UserTable) -> Result<()> {
        let mut seen: HashMap<u32, (u32, Split)> = HashMap::new();
        for r in &self.rows {
            if r.user_id as usize >= users.n_users() {
                return Err(Error::Data(format!("unknown user id {}", r.user_id)));
            }
            if r.item_id as usize >= items.n_items() {
                return Err(Error::Data(format!("unknown item id {}", r.item_id)));
            }
            match seen.get(&r.impression_id) {
                None => {
                    seen.insert(r.impression_id, (r.user_id, r.split));
                }
                Some(&(u, s)) => {
                    if u != r.user_id || s != r.split {
                        return Err(Error::Data(format!(
                            "impression {} spans multiple users or splits",
                            r.impression_id
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// The three tables of one prepared dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub items: ItemTable,
    pub users: UserTable,
    pub interactions: InteractionTable,
}

/// Build the item content table. Vocab ids are assigned in first-seen order;
/// sequences are truncated to the per-attribute max length and never padded
/// in storage.
pub fn build_item_table(
    raw_rows: &[RawItem],
    attribute_config: &[AttributeConfig],
) -> Result<ItemTable> {
    if attribute_config.is_empty() {
        return Err(Error::Config("empty attribute config".into()));
    }
    let mut item_ids = Vocab::new("item_id");
    let mut columns: Vec<(String, Column)> = attribute_config
        .iter()
        .map(|ac| {
            let col = match ac.kind {
                AttrKind::Text { max_len } => Column::Tokens {
                    vocab: Vocab::new(&ac.name),
                    max_len,
                    // pad and unk pseudo-items hold empty sequences
                    rows: vec![Vec::new(), Vec::new()],
                },
                AttrKind::Categorical => Column::Categorical {
                    vocab: Vocab::new(&ac.name),
                    rows: vec![PAD_ID, PAD_ID],
                },
            };
            (ac.name.clone(), col)
        })
        .collect();

    for raw in raw_rows {
        if item_ids.get(&raw.id).is_some() {
            return Err(Error::Data(format!("duplicate item id {}", raw.id)));
        }
        if raw.values.len() != attribute_config.len() {
            return Err(Error::Data(format!(
                "item {}: {} attribute values for {} attributes",
                raw.id,
                raw.values.len(),
                attribute_config.len()
            )));
        }
        item_ids.get_or_insert(&raw.id);
        for ((_, col), value) in columns.iter_mut().zip(raw.values.iter()) {
            match col {
                Column::Tokens {
                    vocab,
                    max_len,
                    rows,
                } => {
                    let toks: Vec<u32> = tokenize(value)
                        .iter()
                        .take(*max_len)
                        .map(|t| vocab.get_or_insert(t))
                        .collect();
                    rows.push(toks);
                }
                Column::Categorical { vocab, rows } => {
                    rows.push(vocab.get_or_insert(value));
                }
            }
        }
    }

    let selected = attribute_config.iter().map(|a| a.name.clone()).collect();
    Ok(ItemTable {
        item_ids,
        columns,
        selected_attributes: selected,
    })
}
