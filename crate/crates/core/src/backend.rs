//! Persistence for store contents: an in-memory map and an append-only
//! line file, behind one interface.
//!
//! File lines:
//!
//! ```text
//! <key-b64> <label-text> <ct-b64>        entry
//! ck: <category> <pub-b64> <p=wrap-b64>* <sig-b64>
//! del: entry|ck <key-b64>                tombstone
//! ```
//!
//! For the `entry` namespace the stored value is `<label-text> <ct-b64>`;
//! for `ck` the key is the category text and the value the whole record
//! after `ck: `.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;

use crate::calculus::encode_ground;
use crate::store::{RealStore, WireError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Namespace {
    Entry,
    Ck,
}

impl Namespace {
    pub fn as_str(self) -> &'static str {
        match self {
            Namespace::Entry => "entry",
            Namespace::Ck => "ck",
        }
    }

    fn parse(s: &str) -> Option<Namespace> {
        match s {
            "entry" => Some(Namespace::Entry),
            "ck" => Some(Namespace::Ck),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub namespace: Namespace,
    pub key: Vec<u8>,
    pub value: Vec<u8>,
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}:{line}: {msg}", path.display())]
    Format { path: PathBuf, line: usize, msg: String },
    #[error("invalid record: {0}")]
    Invalid(String),
    #[error(transparent)]
    Wire(#[from] WireError),
}

pub trait Backend: Send + Sync {
    fn get(&self, ns: Namespace, key: &[u8]) -> Result<Option<Vec<u8>>, BackendError>;
    fn put(&self, ns: Namespace, key: &[u8], value: &[u8]) -> Result<(), BackendError>;
    fn delete(&self, ns: Namespace, key: &[u8]) -> Result<(), BackendError>;
    /// All live records, ordered by namespace then key.
    fn snapshot(&self) -> Result<Vec<Record>, BackendError>;
}

type Map = BTreeMap<(Namespace, Vec<u8>), Vec<u8>>;

fn to_records(map: &Map) -> Vec<Record> {
    map.iter()
        .map(|((ns, k), v)| Record {
            namespace: *ns,
            key: k.clone(),
            value: v.clone(),
        })
        .collect()
}

#[derive(Debug, Default)]
pub struct MemoryBackend {
    map: Mutex<Map>,
}

impl MemoryBackend {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Backend for MemoryBackend {
    fn get(&self, ns: Namespace, key: &[u8]) -> Result<Option<Vec<u8>>, BackendError> {
        Ok(self.map.lock().unwrap().get(&(ns, key.to_vec())).cloned())
    }

    fn put(&self, ns: Namespace, key: &[u8], value: &[u8]) -> Result<(), BackendError> {
        self.map.lock().unwrap().insert((ns, key.to_vec()), value.to_vec());
        Ok(())
    }

    fn delete(&self, ns: Namespace, key: &[u8]) -> Result<(), BackendError> {
        self.map.lock().unwrap().remove(&(ns, key.to_vec()));
        Ok(())
    }

    fn snapshot(&self) -> Result<Vec<Record>, BackendError> {
        Ok(to_records(&self.map.lock().unwrap()))
    }
}

struct FileInner {
    map: Map,
    out: BufWriter<File>,
    lines: usize,
}

/// Append-only line file; replayed on open and compacted when dead lines
/// outnumber live ones.
pub struct FileBackend {
    path: PathBuf,
    inner: Mutex<FileInner>,
}

fn record_line(ns: Namespace, key: &[u8], value: &[u8]) -> Result<String, BackendError> {
    let value = std::str::from_utf8(value).map_err(|_| BackendError::Invalid("value is not UTF-8".into()))?;
    if value.contains('\n') || value.contains('\r') {
        return Err(BackendError::Invalid("value contains a line break".into()));
    }
    match ns {
        Namespace::Entry => Ok(format!("{} {value}", B64.encode(key))),
        Namespace::Ck => {
            let key = std::str::from_utf8(key).map_err(|_| BackendError::Invalid("category is not UTF-8".into()))?;
            if value.split(' ').next() != Some(key) {
                return Err(BackendError::Invalid("ck record must start with its category".into()));
            }
            Ok(format!("ck: {value}"))
        }
    }
}

/// Namespace, key, and value (`None` for a delete).
type Line = (Namespace, Vec<u8>, Option<Vec<u8>>);

fn parse_line(line: &str) -> Result<Line, String> {
    if let Some(rest) = line.strip_prefix("del: ") {
        let (ns, key) = rest.split_once(' ').ok_or("truncated tombstone")?;
        let ns = Namespace::parse(ns).ok_or("unknown namespace")?;
        let key = B64.decode(key).map_err(|_| "bad base64 key")?;
        return Ok((ns, key, None));
    }
    if let Some(rest) = line.strip_prefix("ck: ") {
        let cat = rest.split(' ').next().unwrap_or_default();
        if cat.is_empty() {
            return Err("truncated category key record".into());
        }
        return Ok((Namespace::Ck, cat.as_bytes().to_vec(), Some(rest.as_bytes().to_vec())));
    }
    let (key, value) = line.split_once(' ').ok_or("truncated entry record")?;
    let key = B64.decode(key).map_err(|_| "bad base64 key")?;
    Ok((Namespace::Entry, key, Some(value.as_bytes().to_vec())))
}

impl FileBackend {
    /// Open (creating if needed) and replay the file at `path`.
    pub fn open(path: impl AsRef<Path>) -> Result<FileBackend, BackendError> {
        let path = path.as_ref().to_path_buf();
        let io_err = |source| BackendError::Io {
            path: path.clone(),
            source,
        };
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(io_err(e)),
        };
        let mut map = Map::new();
        let mut lines = 0;
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            lines += 1;
            let (ns, key, value) = parse_line(line).map_err(|msg| BackendError::Format {
                path: path.clone(),
                line: i + 1,
                msg,
            })?;
            match value {
                Some(v) => map.insert((ns, key), v),
                None => map.remove(&(ns, key)),
            };
        }
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(io_err)?;
        let backend = FileBackend {
            path: path.clone(),
            inner: Mutex::new(FileInner {
                map,
                out: BufWriter::new(file),
                lines,
            }),
        };
        {
            let mut inner = backend.inner.lock().unwrap();
            if inner.lines > 2 * inner.map.len() + 16 {
                backend.compact_locked(&mut inner)?;
            }
        }
        Ok(backend)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Rewrite the file with live records only.
    pub fn compact(&self) -> Result<(), BackendError> {
        let mut inner = self.inner.lock().unwrap();
        self.compact_locked(&mut inner)
    }

    fn io_err(&self, source: io::Error) -> BackendError {
        BackendError::Io {
            path: self.path.clone(),
            source,
        }
    }

    fn compact_locked(&self, inner: &mut FileInner) -> Result<(), BackendError> {
        inner.out.flush().map_err(|e| self.io_err(e))?;
        let mut text = String::new();
        for ((ns, k), v) in &inner.map {
            text.push_str(&record_line(*ns, k, v)?);
            text.push('\n');
        }
        let tmp = self.path.with_extension("compact.tmp");
        fs::write(&tmp, &text).map_err(|e| self.io_err(e))?;
        fs::rename(&tmp, &self.path).map_err(|e| self.io_err(e))?;
        let file = OpenOptions::new().append(true).open(&self.path).map_err(|e| self.io_err(e))?;
        inner.out = BufWriter::new(file);
        inner.lines = inner.map.len();
        Ok(())
    }

    fn append(&self, inner: &mut FileInner, line: &str) -> Result<(), BackendError> {
        writeln!(inner.out, "{line}").map_err(|e| self.io_err(e))?;
        inner.out.flush().map_err(|e| self.io_err(e))?;
        inner.lines += 1;
        Ok(())
    }
}

impl Backend for FileBackend {
    fn get(&self, ns: Namespace, key: &[u8]) -> Result<Option<Vec<u8>>, BackendError> {
        Ok(self.inner.lock().unwrap().map.get(&(ns, key.to_vec())).cloned())
    }

    fn put(&self, ns: Namespace, key: &[u8], value: &[u8]) -> Result<(), BackendError> {
        let line = record_line(ns, key, value)?;
        let mut inner = self.inner.lock().unwrap();
        self.append(&mut inner, &line)?;
        inner.map.insert((ns, key.to_vec()), value.to_vec());
        Ok(())
    }

    fn delete(&self, ns: Namespace, key: &[u8]) -> Result<(), BackendError> {
        let mut inner = self.inner.lock().unwrap();
        if inner.map.remove(&(ns, key.to_vec())).is_some() {
            let line = format!("del: {} {}", ns.as_str(), B64.encode(key));
            self.append(&mut inner, &line)?;
        }
        Ok(())
    }

    fn snapshot(&self) -> Result<Vec<Record>, BackendError> {
        Ok(to_records(&self.inner.lock().unwrap().map))
    }
}

/// Write every entry and category key of `store`, deleting records that
/// are no longer present.
pub fn save_store(backend: &dyn Backend, store: &RealStore) -> Result<(), BackendError> {
    let mut live = BTreeMap::new();
    for (k, e) in store.entries() {
        let value = format!("{} {}", e.label, B64.encode(&e.bytes));
        live.insert((Namespace::Entry, encode_ground(k)), value.into_bytes());
    }
    for (c, ck) in store.category_keys() {
        let line = ck.to_wire();
        let value = line.strip_prefix("ck: ").expect("ck wire prefix").as_bytes().to_vec();
        live.insert((Namespace::Ck, c.as_text().as_bytes().to_vec()), value);
    }
    for r in backend.snapshot()? {
        if !live.contains_key(&(r.namespace, r.key.clone())) {
            backend.delete(r.namespace, &r.key)?;
        }
    }
    for ((ns, k), v) in &live {
        if backend.get(*ns, k)?.as_deref() != Some(v.as_slice()) {
            backend.put(*ns, k, v)?;
        }
    }
    Ok(())
}

pub fn load_store(backend: &dyn Backend) -> Result<RealStore, BackendError> {
    let mut text = String::new();
    for r in backend.snapshot()? {
        let line = record_line(r.namespace, &r.key, &r.value)?;
        text.push_str(&line);
        text.push('\n');
    }
    Ok(RealStore::from_wire(&text)?)
}
