//! Versioned on-disk index format.
//!
//! An index is one JSON object:
//!
//! ```text
//! { "format_version": 1,
//!   "checksum": "<hex sha-256 of the compact, key-sorted JSON of body>",
//!   "body": { "config", "config_fingerprint", "provenance", "usage",
//!             "layers", "nodes" } }
//! ```
//!
//! Nodes are sorted by id and embeddings are written with shortest
//! round-trip float formatting, so a load reproduces every bit. Paths ending
//! in `.gz` are gzip-compressed. Writes go to a temporary file in the target
//! directory and are renamed into place.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::providers::Usage;
use crate::tree::{BuildConfig, Node, Tree};
use crate::NodeId;

pub const FORMAT_VERSION: u64 = 1;
pub const INDEX_EXTENSION: &str = ".raptor.json";

#[derive(Debug, Serialize, Deserialize)]
struct IndexBody {
    config: BuildConfig,
    config_fingerprint: String,
    provenance: BTreeSet<String>,
    usage: Usage,
    layers: Vec<Vec<NodeId>>,
    nodes: Vec<Node>,
}

#[derive(Serialize)]
struct IndexFileRef<'a> {
    format_version: u64,
    checksum: &'a str,
    body: &'a IndexBody,
}

fn is_gzip(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

/// Over the canonical form: compact JSON with object keys sorted.
fn body_checksum(body: &serde_json::Value) -> Result<String> {
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(body)?)))
}

/// Serialize `tree` in canonical form.
pub fn to_bytes(tree: &Tree) -> Result<Vec<u8>> {
    let mut nodes = tree.nodes.clone();
    nodes.sort_by_key(|n| n.id);
    let body = IndexBody {
        config: tree.config.clone(),
        config_fingerprint: tree.config_fingerprint.clone(),
        provenance: tree.provenance.clone(),
        usage: tree.usage,
        layers: tree.layers.clone(),
        nodes,
    };
    let checksum = body_checksum(&serde_json::to_value(&body)?)?;
    Ok(serde_json::to_vec(&IndexFileRef {
        format_version: FORMAT_VERSION,
        checksum: &checksum,
        body: &body,
    })?)
}

/// Parse and validate an index: version, then checksum, then tree invariants.
pub fn from_bytes(bytes: &[u8]) -> Result<Tree> {
    let mut value: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| Error::CorruptIndex(format!("not JSON: {e}")))?;
    let version = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::CorruptIndex("missing format_version".into()))?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let expected = value
        .get("checksum")
        .and_then(serde_json::Value::as_str)
        .ok_or_else(|| Error::CorruptIndex("missing checksum".into()))?
        .to_string();
    let body = value
        .get_mut("body")
        .map(serde_json::Value::take)
        .ok_or_else(|| Error::CorruptIndex("missing body".into()))?;
    let actual = body_checksum(&body)?;
    if actual != expected {
        return Err(Error::ChecksumMismatch { expected, actual });
    }
    let body: IndexBody =
        serde_json::from_value(body).map_err(|e| Error::CorruptIndex(format!("malformed body: {e}")))?;
    if body.config.fingerprint() != body.config_fingerprint {
        return Err(Error::CorruptIndex("config fingerprint does not match config".into()));
    }
    let tree = Tree {
        nodes: body.nodes,
        layers: body.layers,
        config: body.config,
        config_fingerprint: body.config_fingerprint,
        provenance: body.provenance,
        usage: body.usage,
    };
    tree.validate()?;
    Ok(tree)
}

pub fn save_tree(tree: &Tree, path: &Path) -> Result<()> {
    let bytes = to_bytes(tree)?;
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        if is_gzip(path) {
            let mut gz = GzEncoder::new(&mut w, Compression::default());
            gz.write_all(&bytes).map_err(|e| Error::io(path, e))?;
            gz.finish().map_err(|e| Error::io(path, e))?;
        } else {
            w.write_all(&bytes).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn load_tree(path: &Path) -> Result<Tree> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    let mut reader = BufReader::new(file);
    if is_gzip(path) {
        GzDecoder::new(reader)
            .read_to_end(&mut bytes)
            .map_err(|e| Error::CorruptIndex(format!("{}: bad gzip stream: {e}", path.display())))?;
    } else {
        reader.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    }
    from_bytes(&bytes)
}
