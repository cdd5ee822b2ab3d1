//! On-disk formats.
//!
//! Tri-table layout: one directory per dataset with a structured-text header
//! per table, vocab files (one token per line), and integer sequence data as
//! little-endian u32 arrays with a row-offset index.
//!
//! Embedding tables: magic "LGEM", version u32 = 1, rows u32, dim u32, then
//! rows x dim little-endian f32, plus an adjacent `<path>.ids` text file
//! mapping row index to item id token.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{Column, Dataset, Interaction, InteractionTable, ItemTable, Split, UserTable, Vocab};
use crate::error::{Error, Result};

fn write_u32s(path: &Path, values: &[u32]) -> Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 4);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}

fn read_u32s(path: &Path) -> Result<Vec<u32>> {
    let bytes = fs::read(path)?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Load(format!(
            "{}: length {} not a multiple of 4",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn write_vocab(path: &Path, vocab: &Vocab) -> Result<()> {
    let mut out = String::new();
    for tok in vocab.tokens() {
        out.push_str(tok);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

fn read_vocab(path: &Path, name: &str) -> Result<Vocab> {
    let text = fs::read_to_string(path)?;
    let mut vocab = Vocab::new(name);
    for (i, line) in text.lines().enumerate() {
        match i {
            0 | 1 => {} // "<pad>" / "<unk>" already present
            _ => {
                vocab.get_or_insert(line);
            }
        }
    }
    Ok(vocab)
}

/// Ragged rows as a flat sequence file plus a row-offset index
/// (`n_rows + 1` offsets).
fn write_rows(dir: &Path, stem: &str, rows: &[Vec<u32>]) -> Result<()> {
    let mut flat = Vec::new();
    let mut offsets = Vec::with_capacity(rows.len() + 1);
    offsets.push(0u32);
    for row in rows {
        flat.extend_from_slice(row);
        offsets.push(flat.len() as u32);
    }
    write_u32s(&dir.join(format!("{stem}.seq")), &flat)?;
    write_u32s(&dir.join(format!("{stem}.idx")), &offsets)?;
    Ok(())
}

fn read_rows(dir: &Path, stem: &str) -> Result<Vec<Vec<u32>>> {
    let flat = read_u32s(&dir.join(format!("{stem}.seq")))?;
    let offsets = read_u32s(&dir.join(format!("{stem}.idx")))?;
    let mut rows = Vec::with_capacity(offsets.len().saturating_sub(1));
    for w in offsets.windows(2) {
        rows.push(flat[w[0] as usize..w[1] as usize].to_vec());
    }
    Ok(rows)
}

fn write_header(path: &Path, entries: &[(String, String)]) -> Result<()> {
    let mut out = String::new();
    for (k, v) in entries {
        out.push_str(&format!("{k}: {v}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

fn read_header(path: &Path) -> Result<HashMap<String, String>> {
    let text = fs::read_to_string(path)?;
    let mut map = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line.split_once(": ").ok_or_else(|| Error::Parse {
            path: path.display().to_string(),
            line: lineno + 1,
            detail: "expected `key: value`".into(),
        })?;
        map.insert(k.to_string(), v.to_string());
    }
    Ok(map)
}

fn header_get<'a>(map: &'a HashMap<String, String>, key: &str, path: &Path) -> Result<&'a str> {
    map.get(key)
        .map(|s| s.as_str())
        .ok_or_else(|| Error::Load(format!("{}: missing header key {key}", path.display())))
}

pub fn save_dataset(dir: &Path, dataset: &Dataset) -> Result<()> {
    fs::create_dir_all(dir)?;

    // items
    let items = &dataset.items;
    let mut header = vec![
        ("table".to_string(), "items".to_string()),
        ("n_items".to_string(), items.n_items().to_string()),
        (
            "attributes".to_string(),
            items
                .columns
                .iter()
                .map(|(n, _)| n.as_str())
                .collect::<Vec<_>>()
                .join(","),
        ),
        ("selected".to_string(), items.selected_attributes.join(",")),
    ];
    for (name, col) in &items.columns {
        match col {
            Column::Tokens { vocab, max_len, .. } => {
                header.push((format!("attr.{name}.kind"), "tokens".into()));
                header.push((format!("attr.{name}.max_len"), max_len.to_string()));
                header.push((format!("attr.{name}.vocab_len"), vocab.len().to_string()));
            }
            Column::Categorical { vocab, .. } => {
                header.push((format!("attr.{name}.kind"), "categorical".into()));
                header.push((format!("attr.{name}.vocab_len"), vocab.len().to_string()));
            }
        }
    }
    write_header(&dir.join("items.header"), &header)?;
    write_vocab(&dir.join("items.ids.vocab"), &items.item_ids)?;
    for (name, col) in &items.columns {
        write_vocab(&dir.join(format!("items.{name}.vocab")), col.vocab())?;
        match col {
            Column::Tokens { rows, .. } => write_rows(dir, &format!("items.{name}"), rows)?,
            Column::Categorical { rows, .. } => {
                write_u32s(&dir.join(format!("items.{name}.cat")), rows)?
            }
        }
    }

    // users
    let users = &dataset.users;
    write_header(
        &dir.join("users.header"),
        &[
            ("table".to_string(), "users".to_string()),
            ("n_users".to_string(), users.n_users().to_string()),
            ("max_history".to_string(), users.max_history.to_string()),
        ],
    )?;
    write_vocab(&dir.join("users.ids.vocab"), &users.user_ids)?;
    write_rows(dir, "users.history", &users.history)?;

    // interactions
    let inter = &dataset.interactions;
    write_header(
        &dir.join("interactions.header"),
        &[
            ("table".to_string(), "interactions".to_string()),
            ("n_rows".to_string(), inter.rows.len().to_string()),
        ],
    )?;
    let mut flat = Vec::with_capacity(inter.rows.len() * 5);
    for r in &inter.rows {
        flat.push(r.user_id);
        flat.push(r.item_id);
        flat.push(r.label as u32);
        flat.push(r.impression_id);
        flat.push(match r.split {
            Split::Train => 0,
            Split::Dev => 1,
            Split::Test => 2,
        });
    }
    write_u32s(&dir.join("interactions.bin"), &flat)?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let items_header_path = dir.join("items.header");
    if !items_header_path.exists() {
        return Err(Error::Data(format!(
            "dataset not found at {}",
            dir.display()
        )));
    }
    let h = read_header(&items_header_path)?;
    let item_ids = read_vocab(&dir.join("items.ids.vocab"), "item_id")?;
    let attr_names: Vec<String> = header_get(&h, "attributes", &items_header_path)?
        .split(',')
        .filter(|s| !s.is_empty())
        .map(|s| s.to_string())
        .collect();
    let selected: Vec<String> = header_get(&h, "selected", &items_header_path)?
        .split(',')
        .filter(|s| !s.is_empty())
        .map(|s| s.to_string())
        .collect();
    let mut columns = Vec::new();
    for name in &attr_names {
        let kind = header_get(&h, &format!("attr.{name}.kind"), &items_header_path)?;
        let vocab = read_vocab(&dir.join(format!("items.{name}.vocab")), name)?;
        let col = match kind {
            "tokens" => {
                let max_len: usize =
                    header_get(&h, &format!("attr.{name}.max_len"), &items_header_path)?
                        .parse()
                        .map_err(|_| Error::Load(format!("bad max_len for {name}")))?;
                Column::Tokens {
                    vocab,
                    max_len,
                    rows: read_rows(dir, &format!("items.{name}"))?,
                }
            }
            "categorical" => Column::Categorical {
                vocab,
                rows: read_u32s(&dir.join(format!("items.{name}.cat")))?,
            },
            other => return Err(Error::Load(format!("unknown column kind {other}"))),
        };
        columns.push((name.clone(), col));
    }
    let items = ItemTable {
        item_ids,
        columns,
        selected_attributes: selected,
    };

    let uh_path = dir.join("users.header");
    let uh = read_header(&uh_path)?;
    let users = UserTable {
        user_ids: read_vocab(&dir.join("users.ids.vocab"), "user_id")?,
        history: read_rows(dir, "users.history")?,
        max_history: header_get(&uh, "max_history", &uh_path)?
            .parse()
            .map_err(|_| Error::Load("bad max_history".into()))?,
    };

    let flat = read_u32s(&dir.join("interactions.bin"))?;
    if flat.len() % 5 != 0 {
        return Err(Error::Load("interactions.bin: truncated rows".into()));
    }
    let rows = flat
        .chunks_exact(5)
        .map(|c| {
            Ok(Interaction {
                user_id: c[0],
                item_id: c[1],
                label: c[2] as u8,
                impression_id: c[3],
                split: match c[4] {
                    0 => Split::Train,
                    1 => Split::Dev,
                    2 => Split::Test,
                    other => return Err(Error::Load(format!("bad split tag {other}"))),
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let dataset = Dataset {
        items,
        users,
        interactions: InteractionTable { rows },
    };
    dataset
        .interactions
        .validate(&dataset.items, &dataset.users)?;
    Ok(dataset)
}

const LGEM_MAGIC: &[u8; 4] = b"LGEM";
const LGEM_VERSION: u32 = 1;

/// In-memory form of a pretrained / persisted embedding table.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<f32>,
    /// Item id token per row.
    pub ids: Vec<String>,
}

pub fn save_embedding_table(path: &Path, table: &EmbeddingTable) -> Result<()> {
    if table.data.len() != table.rows * table.dim || table.ids.len() != table.rows {
        return Err(Error::Contract("embedding table shape mismatch".into()));
    }
    let mut f = fs::File::create(path)?;
    f.write_all(LGEM_MAGIC)?;
    f.write_all(&LGEM_VERSION.to_le_bytes())?;
    f.write_all(&(table.rows as u32).to_le_bytes())?;
    f.write_all(&(table.dim as u32).to_le_bytes())?;
    let mut buf = Vec::with_capacity(table.data.len() * 4);
    for v in &table.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    f.write_all(&buf)?;

    let ids_path = ids_path_for(path);
    fs::write(ids_path, table.ids.join("\n") + "\n")?;
    Ok(())
}

fn ids_path_for(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".ids");
    std::path::PathBuf::from(os)
}

pub fn load_embedding_table(path: &Path) -> Result<EmbeddingTable> {
    let mut f =
        fs::File::open(path).map_err(|e| Error::Load(format!("{}: {e}", path.display())))?;
    let mut head = [0u8; 16];
    f.read_exact(&mut head)
        .map_err(|_| Error::Load(format!("{}: truncated header", path.display())))?;
    if &head[0..4] != LGEM_MAGIC {
        return Err(Error::Load(format!(
            "{}: bad magic (expected LGEM)",
            path.display()
        )));
    }
    let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
    if version != LGEM_VERSION {
        return Err(Error::Load(format!(
            "{}: unsupported version {version}",
            path.display()
        )));
    }
    let rows = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(head[12..16].try_into().unwrap()) as usize;
    let mut rest = Vec::new();
    f.read_to_end(&mut rest)?;
    if rest.len() != rows * dim * 4 {
        return Err(Error::Load(format!(
            "{}: expected {} payload bytes, found {}",
            path.display(),
            rows * dim * 4,
            rest.len()
        )));
    }
    let data: Vec<f32> = rest
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();

    let ids_path = ids_path_for(path);
    let ids_text = fs::read_to_string(&ids_path)
        .map_err(|e| Error::Load(format!("{}: {e}", ids_path.display())))?;
    let ids: Vec<String> = ids_text.lines().map(|s| s.to_string()).collect();
    if ids.len() != rows {
        return Err(Error::Load(format!(
            "{}: {} ids for {} rows",
            ids_path.display(),
            ids.len(),
            rows
        )));
    }
    Ok(EmbeddingTable {
        rows,
        dim,
        data,
        ids,
    })
}
