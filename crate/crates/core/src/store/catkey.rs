//! Per-category key pairs. The private half is wrapped for every member and
//! the record is signed by one member.

use std::collections::BTreeMap;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand::RngCore;

use crate::crypto::CryptoProvider;
use crate::label::{Category, Principal};

use super::keystore::Keystore;
use super::{RealInteraction, RealStore, StoreError, WireError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryKey {
    pub category: Category,
    pub public: Vec<u8>,
    pub wrapped: BTreeMap<Principal, Vec<u8>>,
    pub signature: Vec<u8>,
}

fn put_len(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u64).to_be_bytes());
    out.extend_from_slice(bytes);
}

impl CategoryKey {
    /// The bytes covered by the member signature.
    pub fn signed_bytes(category: &Category, public: &[u8], wrapped: &BTreeMap<Principal, Vec<u8>>) -> Vec<u8> {
        let mut out = b"clio-ck-v1".to_vec();
        put_len(&mut out, category.as_text().as_bytes());
        put_len(&mut out, public);
        out.extend_from_slice(&(wrapped.len() as u64).to_be_bytes());
        for (p, w) in wrapped {
            put_len(&mut out, p.as_str().as_bytes());
            put_len(&mut out, w);
        }
        out
    }

    /// Does the record belong to `category` and carry a valid signature from
    /// one of its members?
    pub fn verify(&self, category: &Category, ks: &Keystore, provider: &dyn CryptoProvider) -> bool {
        if &self.category != category {
            return false;
        }
        if !self.wrapped.keys().eq(category.members().iter()) {
            return false;
        }
        let msg = Self::signed_bytes(&self.category, &self.public, &self.wrapped);
        category
            .members()
            .iter()
            .filter_map(|p| ks.public_key(p))
            .any(|pk| provider.verify(pk, &msg, &self.signature))
    }

    /// `ck: <category> <pub-b64> <p=wrap-b64>... <sig-b64>`
    pub fn to_wire(&self) -> String {
        let mut out = format!("ck: {} {}", self.category, B64.encode(&self.public));
        for (p, w) in &self.wrapped {
            out.push_str(&format!(" {p}={}", B64.encode(w)));
        }
        out.push(' ');
        out.push_str(&B64.encode(&self.signature));
        out
    }

    pub fn from_wire(line: &str) -> Result<CategoryKey, WireError> {
        let bad = |msg: &str| WireError::new(0, msg);
        let rest = line.strip_prefix("ck: ").ok_or_else(|| bad("missing `ck:` prefix"))?;
        let fields: Vec<&str> = rest.split(' ').collect();
        if fields.len() < 3 {
            return Err(bad("truncated category key record"));
        }
        let category: Category = fields[0].parse().map_err(|e: crate::label::LabelError| bad(&e.to_string()))?;
        if category.as_text() != fields[0] {
            return Err(bad("category text is not canonical"));
        }
        let public = B64.decode(fields[1]).map_err(|_| bad("bad base64 public key"))?;
        let signature = B64.decode(fields[fields.len() - 1]).map_err(|_| bad("bad base64 signature"))?;
        let mut wrapped = BTreeMap::new();
        for f in &fields[2..fields.len() - 1] {
            let (p, w) = f.split_once('=').ok_or_else(|| bad("expected principal=wrapped-key"))?;
            let p = Principal::new(p).map_err(|e| bad(&e.to_string()))?;
            let w = B64.decode(w).map_err(|_| bad("bad base64 wrapped key"))?;
            wrapped.insert(p, w);
        }
        Ok(CategoryKey {
            category,
            public,
            wrapped,
            signature,
        })
    }
}

/// A verified category key: the public half, and the private half when the
/// keystore holds some member's private key.
#[derive(Debug, Clone)]
pub struct CkMaterial {
    pub public: Vec<u8>,
    pub private: Option<Vec<u8>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CkFetchError {
    Absent,
    Unverifiable,
}

pub fn fetch_ck(
    store: &RealStore,
    category: &Category,
    ks: &Keystore,
    provider: &dyn CryptoProvider,
) -> Result<CkMaterial, CkFetchError> {
    let ck = store.category_key(category).ok_or(CkFetchError::Absent)?;
    if !ck.verify(category, ks, provider) {
        return Err(CkFetchError::Unverifiable);
    }
    let private = category.members().iter().find_map(|p| {
        let sk = ks.private_key(p)?;
        provider.decrypt(sk, ck.wrapped.get(p)?).ok()
    });
    Ok(CkMaterial {
        public: ck.public.clone(),
        private,
    })
}

/// Fresh category key, wrapped for every member and signed by the first
/// member (in canonical order) whose private key is held.
pub fn create_ck(
    category: &Category,
    ks: &Keystore,
    provider: &dyn CryptoProvider,
    rng: &mut dyn RngCore,
) -> Result<(CategoryKey, Vec<u8>), StoreError> {
    let signer = category
        .members()
        .iter()
        .find(|p| ks.owns(p))
        .ok_or_else(|| StoreError::CannotCreate(category.clone()))?;
    let kp = provider.generate(rng);
    let sk = kp.private.expect("generated keys carry a private half");
    let mut wrapped = BTreeMap::new();
    for p in category.members() {
        let pk = ks.public_key(p).ok_or_else(|| StoreError::UnknownPrincipal(p.clone()))?;
        wrapped.insert(p.clone(), provider.encrypt(pk, &sk, rng));
    }
    let msg = CategoryKey::signed_bytes(category, &kp.public, &wrapped);
    let signature = provider.sign(ks.private_key(signer).unwrap(), &msg, rng);
    Ok((
        CategoryKey {
            category: category.clone(),
            public: kp.public,
            wrapped,
            signature,
        },
        sk,
    ))
}

/// Fetch the category key, creating it if it is absent or unverifiable and
/// the keystore holds a member's private key. Returns the interaction that
/// stores a newly created key.
pub fn initialize_ck(
    store: &RealStore,
    category: &Category,
    ks: &Keystore,
    provider: &dyn CryptoProvider,
    rng: &mut dyn RngCore,
) -> Result<(CkMaterial, RealInteraction), StoreError> {
    match fetch_ck(store, category, ks, provider) {
        Ok(m) => Ok((m, RealInteraction::Skip)),
        Err(why) => {
            if !category.members().iter().any(|p| ks.owns(p)) {
                return Err(match why {
                    CkFetchError::Absent => StoreError::CannotCreate(category.clone()),
                    CkFetchError::Unverifiable => StoreError::Unverifiable(category.clone()),
                });
            }
            let (ck, sk) = create_ck(category, ks, provider, rng)?;
            let material = CkMaterial {
                public: ck.public.clone(),
                private: Some(sk),
            };
            Ok((material, RealInteraction::StoreCk(category.clone(), ck)))
        }
    }
}
