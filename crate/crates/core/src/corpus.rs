//! Corpus input: UTF-8 plain-text files or JSON-lines `{doc_id, text}` files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            doc_id: doc_id.into(),
            text: text.into(),
        }
    }
}

fn is_jsonl(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("jsonl") | Some("ndjson")
    )
}

/// Load a corpus from a file or directory.
///
/// Directories are walked recursively in sorted path order; hidden entries
/// are skipped. `.jsonl`/`.ndjson` files contribute one document per
/// non-empty line, and any other file is a single plain-text document whose
/// id is its path relative to `path`.
pub fn load_corpus(path: &Path) -> Result<Vec<Document>> {
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "input path does not exist"),
        ));
    }
    let mut files = Vec::new();
    collect_files(path, &mut files)?;
    let mut docs = Vec::new();
    for file in files {
        let id = file
            .strip_prefix(path)
            .ok()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or_else(|| Path::new(file.file_name().unwrap_or_default()))
            .to_string_lossy()
            .into_owned();
        let raw = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        if is_jsonl(&file) {
            docs.extend(parse_jsonl(&raw, &file)?);
        } else {
            docs.push(Document::new(id, raw));
        }
    }
    Ok(docs)
}

fn collect_files(path: &Path, out: &mut Vec<std::path::PathBuf>) -> Result<()> {
    if path.is_file() {
        out.push(path.to_path_buf());
        return Ok(());
    }
    let mut entries: Vec<_> = fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            !p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with('.'))
        })
        .collect();
    entries.sort();
    for entry in entries {
        collect_files(&entry, out)?;
    }
    Ok(())
}

fn parse_jsonl(raw: &str, file: &Path) -> Result<Vec<Document>> {
    raw.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(n, line)| {
            serde_json::from_str::<Document>(line).map_err(|e| {
                Error::InvalidInput(format!("{}:{}: {e}", file.display(), n + 1))
            })
        })
        .collect()
}
