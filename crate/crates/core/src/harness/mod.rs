//! Desk-scale security games and the ideal/real equivalence oracle.
//!
//! None of this proves anything. The games estimate distinguishing
//! advantage and count forgeries over a few hundred seeded trials, which
//! makes them a regression tripwire for the store encoding rather than a
//! cryptographic argument.

mod cta;
mod forgery;
mod instances;
mod oracle;

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::calculus::GroundValue;
use crate::crypto::CryptoProvider;
use crate::label::Label;
use crate::store::{deserialize_any, Keystore, RealInteraction, RealStore};

pub use cta::{
    builtin_distinguishers, estimate_advantage, run_cta, run_cta_trial, ByteFrequency, CiphertextLengths, CtaError,
    CtaInstance, CtaReport, Distinguisher, DistinguisherResult, HistoryLength, LabelSequence, PlaintextMatch,
    References, DEFAULT_THRESHOLD, DEFAULT_TRIALS,
};
pub use forgery::{
    run_forgery, ForgeryAdversary, ForgeryError, ForgeryInstance, ForgeryReport, ForgeryTrial, PhaseTwoOutcome,
};
pub use instances::{load_cta_instances, load_forgery_instances, parse_strategy, InstanceError};
pub use oracle::{ideal_real_oracle, ideal_real_oracle_from, Divergence, OracleError, OracleReport, OracleStores, ScriptAction};

/// Machine-readable summary of one game run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub game: String,
    pub trials: usize,
    pub advantage: f64,
    pub stderr: f64,
    pub pass: bool,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: advantage {:.4} ± {:.4} over {} trials",
            if self.pass { "PASS" } else { "FAIL" },
            self.game,
            self.advantage,
            self.stderr,
            self.trials
        )
    }
}

/// Independent per-trial seeds from a base seed, a role tag and an index.
pub fn derive_seed(base: u64, tag: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(b"clio-seed");
    h.update(base.to_be_bytes());
    h.update((tag.len() as u64).to_be_bytes());
    h.update(tag.as_bytes());
    h.update(index.to_be_bytes());
    u64::from_be_bytes(h.finalize()[..8].try_into().unwrap())
}

/// A valid labeled bitstring found in a history.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ValueEntry {
    pub label: Label,
    pub bytes: Vec<u8>,
    pub key: GroundValue,
}

/// StoreVal entries that deserialize under `ks` against the store as it
/// stood right after each was written.
pub fn values_of(history: &[RealInteraction], ks: &Keystore, provider: &dyn CryptoProvider) -> Vec<ValueEntry> {
    let mut store = RealStore::new();
    let mut out = Vec::new();
    for i in history {
        store.apply(i);
        if let RealInteraction::StoreVal { key, label, bytes } = i {
            if deserialize_any(&store, label, bytes, ks, provider).is_ok() {
                out.push(ValueEntry {
                    label: label.clone(),
                    bytes: bytes.clone(),
                    key: key.clone(),
                });
            }
        }
    }
    out
}

/// The `(label, ciphertext)` pairs of [`values_of`]. The key is dropped:
/// the same bitstring written under another key is not a new value.
pub fn value_set(history: &[RealInteraction], ks: &Keystore, provider: &dyn CryptoProvider) -> BTreeSet<(Label, Vec<u8>)> {
    values_of(history, ks, provider)
        .into_iter()
        .map(|v| (v.label, v.bytes))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::RealProvider;
    use crate::label::{parse_label, Principal};
    use crate::store::serialize;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn seeds_are_distinct_and_stable() {
        assert_eq!(derive_seed(1, "a", 0), derive_seed(1, "a", 0));
        assert_ne!(derive_seed(1, "a", 0), derive_seed(1, "a", 1));
        assert_ne!(derive_seed(1, "a", 0), derive_seed(1, "b", 0));
        assert_ne!(derive_seed(1, "a", 0), derive_seed(2, "a", 0));
    }

    #[test]
    fn values_of_honest_and_corrupted() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let ks = Keystore::generate(&[Principal::new("A").unwrap()], &RealProvider, &mut rng);
        assert!(values_of(&[], &ks, &RealProvider).is_empty());
        let label = parse_label("A | A | True").unwrap();
        let k = GroundValue::text("k");
        let (mut h, ct) =
            serialize(&RealStore::new(), &label, &GroundValue::Int(1), &k, 1, &ks, &RealProvider, &mut rng).unwrap();
        h.push(RealInteraction::StoreVal {
            key: k.clone(),
            label: label.clone(),
            bytes: ct.clone(),
        });
        assert_eq!(values_of(&h, &ks, &RealProvider).len(), 1);
        let mut bad = ct.clone();
        bad[10] ^= 1;
        h.push(RealInteraction::StoreVal {
            key: k.clone(),
            label: label.clone(),
            bytes: bad,
        });
        // Same bitstring under another key is the same value.
        h.push(RealInteraction::StoreVal {
            key: GroundValue::text("other"),
            label: label.clone(),
            bytes: ct,
        });
        assert_eq!(values_of(&h, &ks, &RealProvider).len(), 2);
        assert_eq!(value_set(&h, &ks, &RealProvider).len(), 1);
    }

    #[test]
    fn report_json_fields() {
        let r = Report {
            game: "cta".into(),
            trials: 200,
            advantage: 0.01,
            stderr: 0.02,
            pass: true,
        };
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        for field in ["game", "trials", "advantage", "stderr", "pass"] {
            assert!(v.get(field).is_some(), "{field}");
        }
    }
}
