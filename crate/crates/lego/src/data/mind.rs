//! MIND-format TSV loader.
//!
//! News file: tab-separated `id, category, subcategory, title, abstract, ...`.
//! Behaviors file: tab-separated `impression id, user id, time, history
//! (space-separated item ids), impressions ("itemid-label" space-separated)`.

use std::fs;
use std::path::Path;

use super::{
    build_item_table, AttrKind, AttributeConfig, Dataset, Interaction, InteractionTable, ItemTable,
    RawItem, Split, UserTable, Vocab,
};
use crate::error::{Error, Result};

const TITLE_MAX_LEN: usize = 30;
const ABSTRACT_MAX_LEN: usize = 50;
const DEFAULT_MAX_HISTORY: usize = 50;

fn mind_attributes() -> Vec<AttributeConfig> {
    vec![
        AttributeConfig {
            name: "title".into(),
            kind: AttrKind::Text {
                max_len: TITLE_MAX_LEN,
            },
        },
        AttributeConfig {
            name: "abstract".into(),
            kind: AttrKind::Text {
                max_len: ABSTRACT_MAX_LEN,
            },
        },
        AttributeConfig {
            name: "category".into(),
            kind: AttrKind::Categorical,
        },
        AttributeConfig {
            name: "subcategory".into(),
            kind: AttrKind::Categorical,
        },
    ]
}

fn parse_news(path: &Path) -> Result<ItemTable> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 5 {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                detail: format!("expected >= 5 tab-separated columns, got {}", cols.len()),
            });
        }
        rows.push(RawItem {
            id: cols[0].to_string(),
            values: vec![
                cols[3].to_string(),
                cols[4].to_string(),
                cols[1].to_string(),
                cols[2].to_string(),
            ],
        });
    }
    let mut table = build_item_table(&rows, &mind_attributes())?;
    table.selected_attributes = vec!["title".into()];
    Ok(table)
}

struct BehaviorAccum {
    users: Vocab,
    history: Vec<Vec<u32>>,
    rows: Vec<Interaction>,
}

fn parse_behaviors(
    path: &Path,
    split: Split,
    id_offset: u32,
    items: &ItemTable,
    acc: &mut BehaviorAccum,
) -> Result<()> {
    let text = fs::read_to_string(path)?;
    let parse_err = |lineno: usize, detail: String| Error::Parse {
        path: path.display().to_string(),
        line: lineno + 1,
        detail,
    };
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 5 {
            return Err(parse_err(
                lineno,
                format!("expected 5 tab-separated columns, got {}", cols.len()),
            ));
        }
        let impression_id: u32 = cols[0]
            .parse::<u32>()
            .map_err(|_| parse_err(lineno, format!("bad impression id {:?}", cols[0])))?
            + id_offset;
        let user_token = cols[1];
        let history_field = cols[3].trim();
        let impressions_field = cols[4].trim();

        let resolve = |tok: &str| -> Result<u32> {
            items
                .item_ids
                .get(tok)
                .ok_or_else(|| Error::Data(format!("unknown item id {tok}")))
        };

        let user_id = match acc.users.get(user_token) {
            Some(id) => id,
            None => {
                let id = acc.users.get_or_insert(user_token);
                let hist: Vec<u32> = if history_field.is_empty() {
                    Vec::new()
                } else {
                    history_field
                        .split_whitespace()
                        .map(resolve)
                        .collect::<Result<_>>()?
                };
                debug_assert_eq!(acc.history.len(), id as usize);
                acc.history.push(hist);
                id
            }
        };

        if impressions_field.is_empty() {
            return Err(parse_err(lineno, "empty impressions field".into()));
        }
        for entry in impressions_field.split_whitespace() {
            let (item_tok, label) = entry
                .rsplit_once('-')
                .ok_or_else(|| parse_err(lineno, format!("bad impression entry {entry:?}")))?;
            let label: u8 = match label {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(parse_err(
                        lineno,
                        format!("bad label {other:?} in {entry:?}"),
                    ))
                }
            };
            acc.rows.push(Interaction {
                user_id,
                item_id: resolve(item_tok)?,
                label,
                impression_id,
                split,
            });
        }
    }
    Ok(())
}

/// Load one news file plus one behaviors file tagged with `split_tag`.
pub fn load_mind_tsv(
    news_path: &Path,
    behaviors_path: &Path,
    split_tag: Split,
) -> Result<(ItemTable, UserTable, InteractionTable)> {
    let dataset = load_mind_dataset(news_path, &[(behaviors_path.to_path_buf(), split_tag)])?;
    Ok((dataset.items, dataset.users, dataset.interactions))
}

/// Load a news file and any number of behaviors files into one dataset with a
/// shared vocabulary. Users repeated across files keep their first-seen
/// history.
pub fn load_mind_dataset(
    news_path: &Path,
    behaviors: &[(std::path::PathBuf, Split)],
) -> Result<Dataset> {
    let items = parse_news(news_path)?;
    let mut acc = BehaviorAccum {
        users: Vocab::new("user_id"),
        history: vec![Vec::new(), Vec::new()],
        rows: Vec::new(),
    };
    // reserved pad/unk pseudo-users
    debug_assert_eq!(acc.users.len(), 2);
    // MIND numbers each behaviors file from 1; offset every file after the
    // first so impression ids stay unique across splits
    let mut id_offset = 0u32;
    for (path, split) in behaviors {
        parse_behaviors(path, *split, id_offset, &items, &mut acc)?;
        id_offset = acc
            .rows
            .iter()
            .map(|r| r.impression_id)
            .max()
            .unwrap_or(id_offset);
    }
    let users = UserTable {
        user_ids: acc.users,
        history: acc.history,
        max_history: DEFAULT_MAX_HISTORY,
    };
    let interactions = InteractionTable { rows: acc.rows };
    interactions.validate(&items, &users)?;
    Ok(Dataset {
        items,
        users,
        interactions,
    })
}
