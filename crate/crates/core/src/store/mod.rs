//! The cryptographic store: keystores, category keys, label-directed
//! serialization with replay protection, and the real low-step semantics.

mod catkey;
mod keystore;
mod real;
mod serial;
mod strategy;

use std::collections::BTreeMap;
use std::fmt;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;

use crate::calculus::{decode_ground, encode_ground, GroundValue};
use crate::label::{parse_label, Category, Label, Principal};

pub use catkey::{create_ck, fetch_ck, initialize_ck, CategoryKey, CkFetchError, CkMaterial};
pub use keystore::Keystore;
pub use real::{step_meta, FetchRecord, FetchRule, RealError, RealRuntime, VersionMap, STRATEGY_OUTPUT_CAP};
pub use serial::{
    decrypt_for_formula, deserialize, deserialize_any, encode_payload, encrypt_for_formula, serialize, sign_for_formula,
    DeserializeError, Deserialized,
};
pub use strategy::{CrossKeyStrategy, FnStrategy, RollbackStrategy, SkipStrategy, StaleReinsertStrategy, Strategy};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StoreError {
    #[error("cannot create a key for category {0}: no member's private key is held")]
    CannotCreate(Category),
    #[error("unverifiable category key for {0}")]
    Unverifiable(Category),
    #[error("no signing authority for category {0}")]
    CannotSign(Category),
    #[error("principal {0} has no public key in the keystore")]
    UnknownPrincipal(Principal),
    #[error("cannot serialize with {0} set to False")]
    FalseComponent(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {msg}")]
pub struct WireError {
    pub line: usize,
    pub msg: String,
}

impl WireError {
    pub fn new(line: usize, msg: &str) -> Self {
        WireError {
            line,
            msg: msg.to_string(),
        }
    }

    pub fn at(mut self, line: usize) -> Self {
        self.line = line;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RealInteraction {
    Skip,
    StoreCk(Category, CategoryKey),
    StoreVal { key: GroundValue, label: Label, bytes: Vec<u8> },
}

impl fmt::Display for RealInteraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RealInteraction::Skip => f.write_str("skip"),
            RealInteraction::StoreCk(c, ck) => write!(f, "store-ck {c} {}", crate::crypto::hex8(&ck.public)),
            RealInteraction::StoreVal { key, label, bytes } => write!(
                f,
                "store {} ⟨{label}⟩ {} ({} bytes)",
                crate::calculus::Term::from_ground(key),
                crate::crypto::hex8(bytes),
                bytes.len()
            ),
        }
    }
}

/// A labeled ciphertext as kept in the store.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredEntry {
    pub label: Label,
    pub bytes: Vec<u8>,
}

/// Store contents; obtained by replaying interactions from the empty store.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RealStore {
    entries: BTreeMap<GroundValue, StoredEntry>,
    cks: BTreeMap<Category, CategoryKey>,
}

impl RealStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn replay<'a, I>(interactions: I) -> Self
    where
        I: IntoIterator<Item = &'a RealInteraction>,
    {
        let mut s = RealStore::new();
        for i in interactions {
            s.apply(i);
        }
        s
    }

    pub fn apply(&mut self, i: &RealInteraction) {
        match i {
            RealInteraction::Skip => {}
            RealInteraction::StoreCk(c, ck) => {
                self.cks.insert(c.clone(), ck.clone());
            }
            RealInteraction::StoreVal { key, label, bytes } => {
                self.entries.insert(
                    key.clone(),
                    StoredEntry {
                        label: label.clone(),
                        bytes: bytes.clone(),
                    },
                );
            }
        }
    }

    pub fn entry(&self, key: &GroundValue) -> Option<&StoredEntry> {
        self.entries.get(key)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&GroundValue, &StoredEntry)> {
        self.entries.iter()
    }

    pub fn category_key(&self, c: &Category) -> Option<&CategoryKey> {
        self.cks.get(c)
    }

    pub fn category_keys(&self) -> impl Iterator<Item = (&Category, &CategoryKey)> {
        self.cks.iter()
    }

    /// Entry lines followed by category-key lines.
    pub fn to_wire(&self) -> String {
        let mut out = String::new();
        for (k, e) in &self.entries {
            out.push_str(&entry_to_wire(k, &e.label, &e.bytes));
            out.push('\n');
        }
        for ck in self.cks.values() {
            out.push_str(&ck.to_wire());
            out.push('\n');
        }
        out
    }

    pub fn from_wire(text: &str) -> Result<RealStore, WireError> {
        let mut s = RealStore::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            if line.starts_with("ck: ") {
                let ck = CategoryKey::from_wire(line).map_err(|e| e.at(i + 1))?;
                s.cks.insert(ck.category.clone(), ck);
            } else {
                let (k, label, bytes) = entry_from_wire(line).map_err(|e| e.at(i + 1))?;
                s.entries.insert(k, StoredEntry { label, bytes });
            }
        }
        Ok(s)
    }
}

/// `key-b64 label-text ct-b64`. The label text contains spaces; the key is
/// the first token and the ciphertext the last.
pub fn entry_to_wire(key: &GroundValue, label: &Label, bytes: &[u8]) -> String {
    format!("{} {label} {}", B64.encode(encode_ground(key)), B64.encode(bytes))
}

pub fn entry_from_wire(line: &str) -> Result<(GroundValue, Label, Vec<u8>), WireError> {
    let bad = |msg: &str| WireError::new(0, msg);
    let (key, rest) = line.split_once(' ').ok_or_else(|| bad("truncated entry record"))?;
    let (label, ct) = rest.rsplit_once(' ').ok_or_else(|| bad("truncated entry record"))?;
    let key = B64.decode(key).map_err(|_| bad("bad base64 key"))?;
    let key = decode_ground(&key).map_err(|_| bad("key is not a canonical ground value"))?;
    let label = parse_label(label).map_err(|e| bad(&e.to_string()))?;
    let bytes = B64.decode(ct).map_err(|_| bad("bad base64 ciphertext"))?;
    Ok((key, label, bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entry_line_roundtrip() {
        let label = parse_label("A∨B ∧ C | C | S").unwrap();
        let key = GroundValue::text("taxpayer_info");
        let line = entry_to_wire(&key, &label, b"\x00\x01xyz");
        assert_eq!(line.split(' ').count(), 2 + label.to_string().split(' ').count());
        assert_eq!(entry_from_wire(&line).unwrap(), (key, label, b"\x00\x01xyz".to_vec()));
        assert!(entry_from_wire("abc").is_err());
    }

    #[test]
    fn replay_is_last_write_wins() {
        let k = GroundValue::Int(1);
        let l = Label::public();
        let a = RealInteraction::StoreVal {
            key: k.clone(),
            label: l.clone(),
            bytes: vec![1],
        };
        let b = RealInteraction::StoreVal {
            key: k.clone(),
            label: l,
            bytes: vec![2],
        };
        let s = RealStore::replay([&a, &RealInteraction::Skip, &b]);
        assert_eq!(s.entry(&k).unwrap().bytes, vec![2]);
        assert_eq!(RealStore::from_wire(&s.to_wire()).unwrap(), s);
    }
}
