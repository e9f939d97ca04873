use std::collections::BTreeMap;
use std::fmt::Write as _;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand::RngCore;

use crate::crypto::{CryptoProvider, KeyPair};
use crate::label::{Formula, Label, Principal};

use super::WireError;

/// Principal key pairs. A missing private key means the principal's
/// identity is known but its authority is not held.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Keystore {
    keys: BTreeMap<Principal, KeyPair>,
}

impl Keystore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fresh key pairs for each principal.
    pub fn generate<'a, I>(principals: I, provider: &dyn CryptoProvider, rng: &mut dyn RngCore) -> Self
    where
        I: IntoIterator<Item = &'a Principal>,
    {
        let mut ks = Keystore::new();
        for p in principals {
            let kp = provider.generate(rng);
            ks.insert(p.clone(), kp);
        }
        ks
    }

    pub fn insert(&mut self, p: Principal, kp: KeyPair) {
        self.keys.insert(p, kp);
    }

    pub fn get(&self, p: &Principal) -> Option<&KeyPair> {
        self.keys.get(p)
    }

    pub fn public_key(&self, p: &Principal) -> Option<&[u8]> {
        self.keys.get(p).map(|kp| kp.public.as_slice())
    }

    pub fn private_key(&self, p: &Principal) -> Option<&[u8]> {
        self.keys.get(p).and_then(|kp| kp.private.as_deref())
    }

    pub fn owns(&self, p: &Principal) -> bool {
        self.private_key(p).is_some()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Principal, &KeyPair)> {
        self.keys.iter()
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn owned(&self) -> impl Iterator<Item = &Principal> {
        self.keys.iter().filter(|(_, kp)| kp.private.is_some()).map(|(p, _)| p)
    }

    /// Union; entries of `other` win.
    pub fn merged(&self, other: &Keystore) -> Keystore {
        let mut ks = self.clone();
        for (p, kp) in &other.keys {
            ks.keys.insert(p.clone(), kp.clone());
        }
        ks
    }

    /// The same principals with all private keys dropped.
    pub fn public_only(&self) -> Keystore {
        Keystore {
            keys: self.keys.iter().map(|(p, kp)| (p.clone(), kp.public_only())).collect(),
        }
    }

    /// Drop the private key of `p`, keeping its public key.
    pub fn without_authority_of(&self, p: &Principal) -> Keystore {
        let mut ks = self.clone();
        if let Some(kp) = ks.keys.get_mut(p) {
            kp.private = None;
        }
        ks
    }

    fn owned_conjunction(&self) -> Formula {
        Formula::conjunction_of(self.owned())
    }

    pub fn authority(&self) -> Label {
        let f = self.owned_conjunction();
        Label::new(f.clone(), f.clone(), f)
    }

    pub fn start_label(&self) -> Label {
        let f = self.owned_conjunction();
        Label::new(Formula::truth(), f.clone(), f)
    }

    pub fn clearance(&self) -> Label {
        Label::new(self.owned_conjunction(), Formula::truth(), Formula::truth())
    }

    /// One line per principal: `name pub-b64 priv-b64` or `name pub-b64 -`.
    pub fn to_wire(&self) -> String {
        let mut out = String::new();
        for (p, kp) in &self.keys {
            let private = kp.private.as_ref().map(|k| B64.encode(k)).unwrap_or_else(|| "-".into());
            writeln!(out, "{p} {} {private}", B64.encode(&kp.public)).unwrap();
        }
        out
    }

    pub fn from_wire(text: &str) -> Result<Keystore, WireError> {
        let mut ks = Keystore::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: &str| WireError::new(i + 1, msg);
            let fields: Vec<&str> = line.split(' ').collect();
            if fields.len() != 3 {
                return Err(bad("expected `principal public-key private-key|-`"));
            }
            let p = Principal::new(fields[0]).map_err(|e| bad(&e.to_string()))?;
            let public = B64.decode(fields[1]).map_err(|_| bad("bad base64 public key"))?;
            let private = match fields[2] {
                "-" => None,
                s => Some(B64.decode(s).map_err(|_| bad("bad base64 private key"))?),
            };
            if ks.keys.insert(p.clone(), KeyPair { public, private }).is_some() {
                return Err(bad(&format!("duplicate principal {p}")));
            }
        }
        Ok(ks)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::RealProvider;
    use crate::label::parse_label;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn ps(names: &[&str]) -> Vec<Principal> {
        names.iter().map(|n| Principal::new(*n).unwrap()).collect()
    }

    #[test]
    fn authority_labels() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let ks = Keystore::generate(&ps(&["A", "B", "C"]), &RealProvider, &mut rng);
        assert_eq!(ks.len(), 3);
        assert_eq!(ks.authority(), parse_label("A ∧ B ∧ C | A ∧ B ∧ C | A ∧ B ∧ C").unwrap());
        assert!(ks.start_label().can_flow_to(&ks.clearance()));
        let empty = Keystore::new();
        assert_eq!(empty.start_label(), Label::public());
        assert_eq!(empty.clearance(), Label::public());
    }

    #[test]
    fn merge_unions_authority() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let a = Keystore::generate(&ps(&["A"]), &RealProvider, &mut rng);
        let b = Keystore::generate(&ps(&["B"]), &RealProvider, &mut rng);
        assert_eq!(a.merged(&b).start_label().integ, parse_label("True | A ∧ B | True").unwrap().integ);
        let pubs = a.merged(&b).without_authority_of(&ps(&["B"])[0]);
        assert_eq!(pubs.start_label().integ, Formula::principal(ps(&["A"])[0].clone()));
    }

    #[test]
    fn wire_roundtrip() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let ks = Keystore::generate(&ps(&["A", "IRS"]), &RealProvider, &mut rng).without_authority_of(&ps(&["A"])[0]);
        let text = ks.to_wire();
        assert_eq!(Keystore::from_wire(&text).unwrap(), ks);
        assert!(text.lines().next().unwrap().ends_with(" -"));
        assert!(Keystore::from_wire("A abc").is_err());
    }
}
