//! Labeled value serialization.
//!
//! ```text
//! payload   = ground(v) ‖ ground(key) ‖ version:u64be
//! message   = len(label) ‖ label-text ‖ payload          (what is signed)
//! plaintext = len(payload) ‖ payload ‖ (len(sig) ‖ sig)*  (one sig per integrity category)
//! ct        = Enc(pk_Cn, ... Enc(pk_C1, plaintext))      (C1 innermost)
//! ```
//!
//! Lengths are u64 big-endian.

use std::collections::BTreeMap;

use rand::RngCore;

use crate::calculus::{decode_prefix, encode_ground, GroundValue, Type};
use crate::crypto::CryptoProvider;
use crate::label::{Category, Formula, Label};

use super::catkey::{fetch_ck, initialize_ck, CkMaterial};
use super::keystore::Keystore;
use super::{RealInteraction, RealStore, StoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("deserialization failed")]
pub struct DeserializeError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Deserialized {
    pub value: GroundValue,
    pub key: GroundValue,
    pub version: u64,
}

fn put_len(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u64).to_be_bytes());
    out.extend_from_slice(bytes);
}

fn take_len(bytes: &[u8]) -> Option<(&[u8], &[u8])> {
    if bytes.len() < 8 {
        return None;
    }
    let n = u64::from_be_bytes(bytes[..8].try_into().unwrap());
    let rest = &bytes[8..];
    if n > rest.len() as u64 {
        return None;
    }
    Some(rest.split_at(n as usize))
}

pub fn encode_payload(value: &GroundValue, key: &GroundValue, version: u64) -> Vec<u8> {
    let mut out = encode_ground(value);
    out.extend_from_slice(&encode_ground(key));
    out.extend_from_slice(&version.to_be_bytes());
    out
}

fn decode_payload(bytes: &[u8]) -> Option<Deserialized> {
    let (value, rest) = decode_prefix(bytes).ok()?;
    let (key, rest) = decode_prefix(rest).ok()?;
    let version = u64::from_be_bytes(rest.try_into().ok()?);
    Some(Deserialized { value, key, version })
}

fn signed_message(label: &Label, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    put_len(&mut out, label.to_string().as_bytes());
    out.extend_from_slice(payload);
    out
}

/// Category keys fetched or created during one serialization.
struct CkSession<'a> {
    store: &'a RealStore,
    ks: &'a Keystore,
    provider: &'a dyn CryptoProvider,
    created: BTreeMap<Category, CkMaterial>,
    interactions: Vec<RealInteraction>,
}

impl<'a> CkSession<'a> {
    fn new(store: &'a RealStore, ks: &'a Keystore, provider: &'a dyn CryptoProvider) -> Self {
        CkSession {
            store,
            ks,
            provider,
            created: BTreeMap::new(),
            interactions: Vec::new(),
        }
    }

    fn get(&mut self, c: &Category, rng: &mut dyn RngCore) -> Result<CkMaterial, StoreError> {
        if let Some(m) = self.created.get(c) {
            return Ok(m.clone());
        }
        let (m, i) = initialize_ck(self.store, c, self.ks, self.provider, rng)?;
        if i != RealInteraction::Skip {
            self.created.insert(c.clone(), m.clone());
            self.interactions.push(i);
        }
        Ok(m)
    }
}

fn sign_with(
    session: &mut CkSession<'_>,
    integ: &Formula,
    message: &[u8],
    rng: &mut dyn RngCore,
) -> Result<Vec<Vec<u8>>, StoreError> {
    if integ.is_false() {
        return Err(StoreError::FalseComponent("integrity"));
    }
    let mut sigs = Vec::new();
    for c in integ.clauses() {
        let m = session.get(c, rng)?;
        let sk = m.private.ok_or_else(|| StoreError::CannotSign(c.clone()))?;
        sigs.push(session.provider.sign(&sk, message, rng));
    }
    Ok(sigs)
}

fn encrypt_with(
    session: &mut CkSession<'_>,
    conf: &Formula,
    plaintext: &[u8],
    rng: &mut dyn RngCore,
) -> Result<Vec<u8>, StoreError> {
    if conf.is_false() {
        return Err(StoreError::FalseComponent("confidentiality"));
    }
    let mut v = plaintext.to_vec();
    for c in conf.clauses() {
        let m = session.get(c, rng)?;
        v = session.provider.encrypt(&m.public, &v, rng);
    }
    Ok(v)
}

/// One signature per integrity category, in canonical order, plus the
/// category-key interactions needed to produce them.
pub fn sign_for_formula(
    store: &RealStore,
    integ: &Formula,
    message: &[u8],
    ks: &Keystore,
    provider: &dyn CryptoProvider,
    rng: &mut dyn RngCore,
) -> Result<(Vec<RealInteraction>, Vec<Vec<u8>>), StoreError> {
    let mut s = CkSession::new(store, ks, provider);
    let sigs = sign_with(&mut s, integ, message, rng)?;
    Ok((s.interactions, sigs))
}

/// Onion encryption: the first category in canonical order is the
/// innermost layer.
pub fn encrypt_for_formula(
    store: &RealStore,
    conf: &Formula,
    plaintext: &[u8],
    ks: &Keystore,
    provider: &dyn CryptoProvider,
    rng: &mut dyn RngCore,
) -> Result<(Vec<RealInteraction>, Vec<u8>), StoreError> {
    let mut s = CkSession::new(store, ks, provider);
    let ct = encrypt_with(&mut s, conf, plaintext, rng)?;
    Ok((s.interactions, ct))
}

/// Peel the layers of [`encrypt_for_formula`], outermost first.
pub fn decrypt_for_formula(
    store: &RealStore,
    conf: &Formula,
    ciphertext: &[u8],
    ks: &Keystore,
    provider: &dyn CryptoProvider,
) -> Result<Vec<u8>, DeserializeError> {
    if conf.is_false() {
        return Err(DeserializeError);
    }
    let mut v = ciphertext.to_vec();
    for c in conf.clauses().iter().rev() {
        let m = fetch_ck(store, c, ks, provider).map_err(|_| DeserializeError)?;
        let sk = m.private.ok_or(DeserializeError)?;
        v = provider.decrypt(&sk, &v).map_err(|_| DeserializeError)?;
    }
    Ok(v)
}

/// Serialize `⟨label⟩(value, key, version)`. Returns the category-key
/// interactions in creation order (signing keys first) and the ciphertext.
#[allow(clippy::too_many_arguments)]
pub fn serialize(
    store: &RealStore,
    label: &Label,
    value: &GroundValue,
    key: &GroundValue,
    version: u64,
    ks: &Keystore,
    provider: &dyn CryptoProvider,
    rng: &mut dyn RngCore,
) -> Result<(Vec<RealInteraction>, Vec<u8>), StoreError> {
    let payload = encode_payload(value, key, version);
    let mut s = CkSession::new(store, ks, provider);
    let sigs = sign_with(&mut s, &label.integ, &signed_message(label, &payload), rng)?;
    let mut plaintext = Vec::new();
    put_len(&mut plaintext, &payload);
    for sig in &sigs {
        put_len(&mut plaintext, sig);
    }
    let ct = encrypt_with(&mut s, &label.conf, &plaintext, rng)?;
    Ok((s.interactions, ct))
}

/// Decrypt, verify every integrity signature and decode, without a type
/// check.
pub fn deserialize_any(
    store: &RealStore,
    label: &Label,
    bytes: &[u8],
    ks: &Keystore,
    provider: &dyn CryptoProvider,
) -> Result<Deserialized, DeserializeError> {
    if label.integ.is_false() {
        return Err(DeserializeError);
    }
    let plaintext = decrypt_for_formula(store, &label.conf, bytes, ks, provider)?;
    let (payload, mut rest) = take_len(&plaintext).ok_or(DeserializeError)?;
    let message = signed_message(label, payload);
    for c in label.integ.clauses() {
        let (sig, tail) = take_len(rest).ok_or(DeserializeError)?;
        rest = tail;
        let m = fetch_ck(store, c, ks, provider).map_err(|_| DeserializeError)?;
        if !provider.verify(&m.public, &message, sig) {
            return Err(DeserializeError);
        }
    }
    if !rest.is_empty() {
        return Err(DeserializeError);
    }
    decode_payload(payload).ok_or(DeserializeError)
}

pub fn deserialize(
    store: &RealStore,
    label: &Label,
    bytes: &[u8],
    ty: &Type,
    ks: &Keystore,
    provider: &dyn CryptoProvider,
) -> Result<Deserialized, DeserializeError> {
    let d = deserialize_any(store, label, bytes, ks, provider)?;
    if d.value.type_of() == *ty {
        Ok(d)
    } else {
        Err(DeserializeError)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{IdentityProvider, RealProvider};
    use crate::label::{parse_label, Principal};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn ks(rng: &mut ChaCha20Rng) -> Keystore {
        let ps: Vec<Principal> = ["A", "B", "C"].iter().map(|n| Principal::new(*n).unwrap()).collect();
        Keystore::generate(&ps, &RealProvider, rng)
    }

    fn roundtrip(label: &str) -> (Vec<RealInteraction>, Vec<u8>, RealStore, Keystore) {
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let ks = ks(&mut rng);
        let label = parse_label(label).unwrap();
        let v = GroundValue::pair(GroundValue::text("x"), GroundValue::Int(4));
        let k = GroundValue::text("k");
        let (ri, ct) = serialize(&RealStore::new(), &label, &v, &k, 3, &ks, &RealProvider, &mut rng).unwrap();
        let store = RealStore::replay(&ri);
        let d = deserialize(&store, &label, &ct, &v.type_of(), &ks, &RealProvider).unwrap();
        assert_eq!(d, Deserialized { value: v, key: k, version: 3 });
        (ri, ct, store, ks)
    }

    #[test]
    fn public_label_is_plaintext_with_no_signatures() {
        let (ri, ct, _, _) = roundtrip("True | True | True");
        assert!(ri.is_empty());
        let payload = encode_payload(
            &GroundValue::pair(GroundValue::text("x"), GroundValue::Int(4)),
            &GroundValue::text("k"),
            3,
        );
        let mut expected = (payload.len() as u64).to_be_bytes().to_vec();
        expected.extend_from_slice(&payload);
        assert_eq!(ct, expected);
    }

    #[test]
    fn interactions_follow_creation_order() {
        let (ri, _, _, _) = roundtrip("A ∧ B∨C | C ∧ A | True");
        let cats: Vec<String> = ri
            .iter()
            .map(|i| match i {
                RealInteraction::StoreCk(c, _) => c.to_string(),
                other => panic!("{other:?}"),
            })
            .collect();
        // Signing keys (A, C) first, then the encryption key not yet made (B∨C).
        assert_eq!(cats, vec!["A", "C", "B∨C"]);
    }

    #[test]
    fn onion_layers_peel_in_reverse() {
        let mut rng = ChaCha20Rng::seed_from_u64(22);
        let ks = ks(&mut rng);
        let conf = parse_label("A ∧ B | True | True").unwrap().conf;
        let (ri, ct) = encrypt_for_formula(&RealStore::new(), &conf, b"m", &ks, &RealProvider, &mut rng).unwrap();
        let store = RealStore::replay(&ri);
        assert_eq!(ct.len(), 1 + 2 * 48);
        // The outer layer belongs to B.
        let b = fetch_ck(&store, &"B".parse().unwrap(), &ks, &RealProvider).unwrap();
        let inner = RealProvider.decrypt(b.private.as_ref().unwrap(), &ct).unwrap();
        let a = fetch_ck(&store, &"A".parse().unwrap(), &ks, &RealProvider).unwrap();
        assert_eq!(RealProvider.decrypt(a.private.as_ref().unwrap(), &inner).unwrap(), b"m");
        assert_eq!(decrypt_for_formula(&store, &conf, &ct, &ks, &RealProvider).unwrap(), b"m");
    }

    #[test]
    fn failures_are_uniform() {
        let (_, ct, store, ks) = roundtrip("A | B | True");
        let label = parse_label("A | B | True").unwrap();
        assert!(deserialize(&store, &label, &ct, &Type::Int, &ks, &RealProvider).is_err());
        let mut flipped = ct.clone();
        let last = flipped.len() - 1;
        flipped[last] ^= 0x80;
        assert!(deserialize_any(&store, &label, &flipped, &ks, &RealProvider).is_err());
        // Relabeling breaks the signature.
        let relabeled = parse_label("A | B | B").unwrap();
        assert!(deserialize_any(&store, &relabeled, &ct, &ks, &RealProvider).is_err());
        // No authority over A.
        let outsider = ks.without_authority_of(&Principal::new("A").unwrap());
        assert!(deserialize_any(&store, &label, &ct, &outsider, &RealProvider).is_err());
    }

    #[test]
    fn signing_needs_authority() {
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        let ks = ks(&mut rng).without_authority_of(&Principal::new("B").unwrap());
        let label = parse_label("True | B | True").unwrap();
        let r = serialize(&RealStore::new(), &label, &GroundValue::Unit, &GroundValue::Unit, 1, &ks, &RealProvider, &mut rng);
        assert!(matches!(r, Err(StoreError::CannotCreate(_))));
        let bottom = Label::bottom();
        let r = serialize(&RealStore::new(), &bottom, &GroundValue::Unit, &GroundValue::Unit, 1, &ks, &RealProvider, &mut rng);
        assert!(matches!(r, Err(StoreError::FalseComponent(_))));
    }

    #[test]
    fn identity_provider_shows_payload() {
        let mut rng = ChaCha20Rng::seed_from_u64(24);
        let ks = ks(&mut rng);
        let label = parse_label("A | True | True").unwrap();
        let (_, ct) = serialize(&RealStore::new(), &label, &GroundValue::text("SECRET"), &GroundValue::Unit, 1, &ks, &IdentityProvider, &mut rng).unwrap();
        assert!(ct.windows(6).any(|w| w == b"SECRET"));
    }
}
