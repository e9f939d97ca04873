//! Low-step semantics over the encrypted store, with per-key version
//! counters for replay detection.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::calculus::{GroundValue, Labeled, Type};
use crate::crypto::CryptoProvider;
use crate::label::Label;
use crate::runtime::{
    is_low_config, run_low_step, BridgeError, Config, FetchAnswer, LowStep, RuntimeError, StoreBridge,
    DEFAULT_HIGH_BUDGET,
};

use super::keystore::Keystore;
use super::serial::{deserialize, serialize};
use super::strategy::Strategy;
use super::{RealInteraction, RealStore, StoreError};

/// Upper bound on the interactions a strategy may emit before one low step.
pub const STRATEGY_OUTPUT_CAP: usize = 4096;

/// Highest version seen (written or accepted) per key. Absent means 0.
pub type VersionMap = BTreeMap<GroundValue, u64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FetchRule {
    /// Decoded, the key matches and the version is current.
    Exists,
    /// No entry, or it failed to decrypt, verify, decode or typecheck.
    Missing,
    /// A well-formed entry recorded under another key or with a stale
    /// version.
    Replay,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchRecord {
    pub key: GroundValue,
    pub rule: FetchRule,
    /// The version carried by the entry, when it decoded.
    pub version: Option<u64>,
}

#[derive(Debug, thiserror::Error)]
pub enum RealError {
    #[error("low step requested from a configuration above the store level")]
    NotLow,
    #[error("strategy emitted {produced} interactions (cap {cap})")]
    StrategyCap { produced: usize, cap: usize },
    #[error("only {taken} of {requested} low steps could be taken")]
    Shortfall { requested: usize, taken: usize },
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
}

impl RealError {
    pub fn store_error(&self) -> Option<&StoreError> {
        match self {
            RealError::Runtime(RuntimeError::Store(e)) => e.downcast_ref::<StoreError>(),
            _ => None,
        }
    }
}

struct Backend {
    store: RealStore,
    history: Vec<RealInteraction>,
    versions: VersionMap,
    keystore: Keystore,
    provider: &'static dyn CryptoProvider,
    rng: ChaCha20Rng,
    fetch_log: Vec<FetchRecord>,
}

impl Backend {
    fn record(&mut self, i: RealInteraction) {
        self.store.apply(&i);
        self.history.push(i);
    }
}

impl StoreBridge for Backend {
    fn on_store(&mut self, key: &GroundValue, value: &Labeled) -> Result<(), BridgeError> {
        let version = self.versions.get(key).copied().unwrap_or(0) + 1;
        let (cks, bytes) = serialize(
            &self.store,
            &value.label,
            &value.value,
            key,
            version,
            &self.keystore,
            self.provider,
            &mut self.rng,
        )?;
        for i in cks {
            self.record(i);
        }
        self.record(RealInteraction::StoreVal {
            key: key.clone(),
            label: value.label.clone(),
            bytes,
        });
        self.versions.insert(key.clone(), version);
        Ok(())
    }

    fn on_fetch(&mut self, key: &GroundValue, _default: &Labeled, ty: &Type) -> Result<FetchAnswer, BridgeError> {
        let decoded = self.store.entry(key).and_then(|e| {
            deserialize(&self.store, &e.label, &e.bytes, ty, &self.keystore, self.provider)
                .ok()
                .map(|d| (e.label.clone(), d))
        });
        let (rule, version, answer) = match decoded {
            None => (FetchRule::Missing, None, FetchAnswer::Missing),
            Some((label, d)) => {
                let seen = self.versions.get(key).copied().unwrap_or(0);
                if &d.key != key || d.version < seen {
                    (FetchRule::Replay, Some(d.version), FetchAnswer::Missing)
                } else {
                    self.versions.insert(key.clone(), d.version);
                    (FetchRule::Exists, Some(d.version), FetchAnswer::Found(Labeled::new(label, d.value)))
                }
            }
        };
        self.fetch_log.push(FetchRecord {
            key: key.clone(),
            rule,
            version,
        });
        Ok(answer)
    }
}

/// A program running against the encrypted store, one low step at a time.
pub struct RealRuntime {
    pub config: Config,
    pub store_level: Label,
    pub high_budget: usize,
    backend: Backend,
    strategy_rng: ChaCha20Rng,
}

impl RealRuntime {
    /// `seed` drives both key generation for category keys and encryption
    /// randomness; the strategy gets an independent stream from the same
    /// seed.
    pub fn new(
        config: Config,
        store_level: Label,
        keystore: Keystore,
        provider: &'static dyn CryptoProvider,
        seed: u64,
    ) -> Self {
        let mut strategy_rng = ChaCha20Rng::seed_from_u64(seed);
        strategy_rng.set_stream(1);
        RealRuntime {
            config,
            store_level,
            high_budget: DEFAULT_HIGH_BUDGET,
            backend: Backend {
                store: RealStore::new(),
                history: Vec::new(),
                versions: VersionMap::new(),
                keystore,
                provider,
                rng: ChaCha20Rng::seed_from_u64(seed),
                fetch_log: Vec::new(),
            },
            strategy_rng,
        }
    }

    /// Start from existing store contents instead of the empty store.
    pub fn with_store(mut self, base: RealStore) -> Self {
        self.backend.store = base;
        self
    }

    pub fn with_versions(mut self, versions: VersionMap) -> Self {
        self.backend.versions = versions;
        self
    }

    pub fn history(&self) -> &[RealInteraction] {
        &self.backend.history
    }

    pub fn store(&self) -> &RealStore {
        &self.backend.store
    }

    pub fn versions(&self) -> &VersionMap {
        &self.backend.versions
    }

    pub fn fetch_log(&self) -> &[FetchRecord] {
        &self.backend.fetch_log
    }

    pub fn keystore(&self) -> &Keystore {
        &self.backend.keystore
    }

    pub fn provider(&self) -> &'static dyn CryptoProvider {
        self.backend.provider
    }

    pub fn can_step(&self) -> bool {
        !self.config.is_terminal() && is_low_config(&self.config, &self.store_level)
    }

    /// Apply adversary interactions, then take one low step.
    pub fn low_step_with(&mut self, adv: &[RealInteraction]) -> Result<LowStep, RealError> {
        if !is_low_config(&self.config, &self.store_level) {
            return Err(RealError::NotLow);
        }
        if adv.len() > STRATEGY_OUTPUT_CAP {
            return Err(RealError::StrategyCap {
                produced: adv.len(),
                cap: STRATEGY_OUTPUT_CAP,
            });
        }
        for i in adv {
            if *i != RealInteraction::Skip {
                self.backend.record(i.clone());
            }
        }
        let ls = run_low_step(&self.config, &mut self.backend, &self.store_level, self.high_budget)?;
        self.config = ls.config.clone();
        Ok(ls)
    }

    pub fn low_step(&mut self, strategy: &dyn Strategy) -> Result<LowStep, RealError> {
        if !is_low_config(&self.config, &self.store_level) {
            return Err(RealError::NotLow);
        }
        let adv = strategy.next(&self.backend.history, &mut self.strategy_rng);
        self.low_step_with(&adv)
    }

    /// Low steps until the program terminates or leaves the low region.
    pub fn run(&mut self, strategy: &dyn Strategy, max_low_steps: usize) -> Result<Vec<LowStep>, RealError> {
        let mut out = Vec::new();
        while self.can_step() {
            if out.len() >= max_low_steps {
                return Err(RuntimeError::Budget(out.len()).into());
            }
            out.push(self.low_step(strategy)?);
        }
        Ok(out)
    }
}

/// Exactly `j` low steps under `strategy`.
pub fn step_meta(rt: &mut RealRuntime, strategy: &dyn Strategy, j: usize) -> Result<Vec<LowStep>, RealError> {
    let mut out = Vec::with_capacity(j);
    for _ in 0..j {
        if !rt.can_step() {
            return Err(RealError::Shortfall {
                requested: j,
                taken: out.len(),
            });
        }
        out.push(rt.low_step(strategy)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::parse_term;
    use crate::crypto::RealProvider;
    use crate::label::{parse_label, Principal};
    use crate::runtime::StoreEvent;
    use crate::store::strategy::{RollbackStrategy, SkipStrategy, StaleReinsertStrategy};

    fn runtime(src: &str, seed: u64) -> RealRuntime {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let ks = Keystore::generate(&[Principal::new("A").unwrap()], &RealProvider, &mut rng);
        let config = Config::new(ks.start_label(), ks.clearance(), parse_term(src).unwrap());
        RealRuntime::new(config, parse_label("True | True | True").unwrap(), ks, &RealProvider, seed)
    }

    const WRITE_TWICE_READ: &str = r#"do {
        a <- label ⟨A | A | True⟩ 1;
        store "k" a;
        b <- label ⟨A | A | True⟩ 2;
        store "k" b;
        x <- fetch [Int] "k" a;
        unlabel x
    }"#;

    fn result(rt: &RealRuntime) -> String {
        rt.config.result().unwrap().to_string()
    }

    #[test]
    fn honest_run_reads_latest() {
        let mut rt = runtime(WRITE_TWICE_READ, 1);
        rt.run(&SkipStrategy, 100).unwrap();
        assert_eq!(result(&rt), "2");
        assert_eq!(rt.versions().get(&GroundValue::text("k")), Some(&2));
        assert_eq!(rt.fetch_log()[0].rule, FetchRule::Exists);
        // One category key shared by both components, plus two stores.
        assert_eq!(rt.history().len(), 3);
    }

    #[test]
    fn rollback_is_detected() {
        let mut rt = runtime(WRITE_TWICE_READ, 2);
        rt.run(&RollbackStrategy, 100).unwrap();
        assert_eq!(result(&rt), "1");
        assert_eq!(rt.fetch_log()[0].rule, FetchRule::Replay);
        assert_eq!(rt.fetch_log()[0].version, Some(1));
        assert_eq!(rt.versions().get(&GroundValue::text("k")), Some(&2));
        let mut rt = runtime(WRITE_TWICE_READ, 3);
        rt.run(&StaleReinsertStrategy, 100).unwrap();
        assert_eq!(rt.fetch_log()[0].rule, FetchRule::Replay);
    }

    #[test]
    fn cross_key_is_a_replay() {
        let src = r#"do {
            a <- label ⟨A | A | True⟩ 7;
            store "k" a;
            d <- label ⟨A | A | True⟩ 0;
            x <- fetch [Int] "j" d;
            unlabel x
        }"#;
        let copy = crate::store::CrossKeyStrategy {
            from: GroundValue::text("k"),
            to: GroundValue::text("j"),
        };
        let mut rt = runtime(src, 4);
        rt.run(&copy, 100).unwrap();
        assert_eq!(result(&rt), "0");
        assert_eq!(rt.fetch_log()[0].rule, FetchRule::Replay);
    }

    #[test]
    fn events_and_step_meta() {
        let mut rt = runtime(WRITE_TWICE_READ, 5);
        let steps = step_meta(&mut rt, &SkipStrategy, 2).unwrap();
        assert_eq!(steps.len(), 2);
        let rest = rt.run(&SkipStrategy, 100).unwrap();
        let stores = steps
            .iter()
            .chain(&rest)
            .flat_map(|s| &s.events)
            .filter(|e| matches!(e, StoreEvent::Store { .. }))
            .count();
        assert_eq!(stores, 2);
        assert!(matches!(
            step_meta(&mut rt, &SkipStrategy, 1000),
            Err(RealError::Shortfall { .. })
        ));
        let adv = vec![RealInteraction::Skip; STRATEGY_OUTPUT_CAP + 1];
        let mut rt = runtime(WRITE_TWICE_READ, 6);
        assert!(matches!(rt.low_step_with(&adv), Err(RealError::StrategyCap { .. })));
    }

    #[test]
    fn store_errors_surface() {
        let src = r#"do { a <- label ⟨B | True | True⟩ 1; store "k" a }"#;
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let ks = Keystore::generate(&[Principal::new("A").unwrap()], &RealProvider, &mut rng);
        let config = Config::new(Label::public(), Label::top(), parse_term(src).unwrap());
        let mut rt = RealRuntime::new(config, Label::public(), ks, &RealProvider, 7);
        let err = rt.run(&SkipStrategy, 10).unwrap_err();
        assert!(matches!(err.store_error(), Some(StoreError::UnknownPrincipal(_) | StoreError::CannotCreate(_))));
    }
}
