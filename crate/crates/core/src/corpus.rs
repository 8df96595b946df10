//! File and directory IO for dialogues, kbs, models and assignments.
//!
//! A collection is either a single JSON file (one object, an array of objects,
//! or an object keyed by dialogue id) or a directory of `<dialogue_id>.json`
//! files. Files whose name starts with `_` are run metadata, not records.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::domain::KnowledgeBase;
use crate::error::{Error, Result};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let text = serde_json::to_string_pretty(value).expect("value serializes") + "\n";
    fs::write(path, text).map_err(io_err(path))
}

fn json_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .filter(|p| !p.file_name().is_some_and(|n| n.to_string_lossy().starts_with('_')))
        .collect();
    files.sort();
    Ok(files)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Loads a list of records from a file (object or array) or a directory.
pub fn load_many<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    if path.is_dir() {
        return json_files(path)?.iter().map(|p| read_json(p)).collect();
    }
    let value: serde_json::Value = read_json(path)?;
    let parse = |v: serde_json::Value| {
        serde_json::from_value(v).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    };
    match value {
        serde_json::Value::Array(items) => items.into_iter().map(parse).collect(),
        other => Ok(vec![parse(other)?]),
    }
}

/// Loads records keyed by dialogue id: a directory of `<id>.json` files or a
/// single file holding an object `{id: record}`.
pub fn load_keyed<T: DeserializeOwned>(path: &Path) -> Result<BTreeMap<String, T>> {
    if path.is_dir() {
        return json_files(path)?.iter().map(|p| Ok((stem(p), read_json(p)?))).collect();
    }
    read_json(path)
}

/// Writes one `<id>.json` per record into `dir`.
pub fn write_keyed<'a, T: Serialize + 'a>(dir: &Path, items: impl IntoIterator<Item = (&'a str, &'a T)>) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (id, item) in items {
        if id.is_empty() || id.contains(['/', '\\']) || id.starts_with(['.', '_']) {
            return Err(Error::validation(format!("dialogue id {id:?} cannot be used as a file name")));
        }
        write_json(&dir.join(format!("{id}.json")), item)?;
    }
    Ok(())
}

/// Either one kb shared by every dialogue or one kb per dialogue.
#[derive(Clone, Debug)]
pub enum KbSource {
    Shared(KnowledgeBase),
    PerDialogue(BTreeMap<String, KnowledgeBase>),
}

impl KbSource {
    /// A directory is read as per-dialogue kbs; a file holding a single kb
    /// (an object with `instances`) is shared; any other file is read as an
    /// object keyed by dialogue id.
    pub fn load(path: &Path) -> Result<Self> {
        if path.is_dir() {
            return Ok(KbSource::PerDialogue(load_keyed(path)?));
        }
        let value: serde_json::Value = read_json(path)?;
        let to_err = |source| Error::Json {
            path: path.to_path_buf(),
            source,
        };
        if value.get("instances").is_some() {
            Ok(KbSource::Shared(serde_json::from_value(value).map_err(to_err)?))
        } else {
            Ok(KbSource::PerDialogue(serde_json::from_value(value).map_err(to_err)?))
        }
    }

    pub fn get(&self, dialogue_id: &str) -> Result<&KnowledgeBase> {
        match self {
            KbSource::Shared(kb) => Ok(kb),
            KbSource::PerDialogue(map) => map
                .get(dialogue_id)
                .ok_or_else(|| Error::validation(format!("no kb for dialogue {dialogue_id:?}"))),
        }
    }
}
