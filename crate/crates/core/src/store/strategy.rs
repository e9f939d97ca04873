//! Adversary strategies against the real store. A strategy sees the full
//! interaction history and answers with interactions to apply before the
//! program's next low step.

use std::collections::BTreeMap;
use std::fmt;

use rand::RngCore;

use crate::calculus::GroundValue;
use crate::label::Label;

use super::RealInteraction;

pub trait Strategy: Send + Sync {
    fn name(&self) -> &str;
    fn next(&self, history: &[RealInteraction], rng: &mut dyn RngCore) -> Vec<RealInteraction>;
}

/// Per key: every distinct (label, ciphertext) written so far in
/// first-appearance order, and the current one.
#[derive(Default)]
struct KeyHistory {
    distinct: Vec<(Label, Vec<u8>)>,
    current: Option<(Label, Vec<u8>)>,
}

fn per_key(history: &[RealInteraction]) -> BTreeMap<GroundValue, KeyHistory> {
    let mut out: BTreeMap<GroundValue, KeyHistory> = BTreeMap::new();
    for i in history {
        if let RealInteraction::StoreVal { key, label, bytes } = i {
            let h = out.entry(key.clone()).or_default();
            let v = (label.clone(), bytes.clone());
            if !h.distinct.contains(&v) {
                h.distinct.push(v.clone());
            }
            h.current = Some(v);
        }
    }
    out
}

fn write(key: &GroundValue, (label, bytes): &(Label, Vec<u8>)) -> RealInteraction {
    RealInteraction::StoreVal {
        key: key.clone(),
        label: label.clone(),
        bytes: bytes.clone(),
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SkipStrategy;

impl Strategy for SkipStrategy {
    fn name(&self) -> &str {
        "skip"
    }

    fn next(&self, _: &[RealInteraction], _: &mut dyn RngCore) -> Vec<RealInteraction> {
        Vec::new()
    }
}

/// Put every key back to the first value ever written to it.
#[derive(Debug, Default, Clone, Copy)]
pub struct RollbackStrategy;

impl Strategy for RollbackStrategy {
    fn name(&self) -> &str {
        "rollback"
    }

    fn next(&self, history: &[RealInteraction], _: &mut dyn RngCore) -> Vec<RealInteraction> {
        per_key(history)
            .iter()
            .filter(|(_, h)| h.current.as_ref() != h.distinct.first())
            .map(|(k, h)| write(k, &h.distinct[0]))
            .collect()
    }
}

/// Copy the entry under `from` to `to` whenever they differ.
#[derive(Debug, Clone)]
pub struct CrossKeyStrategy {
    pub from: GroundValue,
    pub to: GroundValue,
}

impl Strategy for CrossKeyStrategy {
    fn name(&self) -> &str {
        "cross-key"
    }

    fn next(&self, history: &[RealInteraction], _: &mut dyn RngCore) -> Vec<RealInteraction> {
        let keys = per_key(history);
        let Some(src) = keys.get(&self.from).and_then(|h| h.current.as_ref()) else {
            return Vec::new();
        };
        if keys.get(&self.to).and_then(|h| h.current.as_ref()) == Some(src) {
            return Vec::new();
        }
        vec![write(&self.to, src)]
    }
}

/// As soon as a key receives a new value, restore the one before it.
#[derive(Debug, Default, Clone, Copy)]
pub struct StaleReinsertStrategy;

impl Strategy for StaleReinsertStrategy {
    fn name(&self) -> &str {
        "stale-reinsert"
    }

    fn next(&self, history: &[RealInteraction], _: &mut dyn RngCore) -> Vec<RealInteraction> {
        per_key(history)
            .iter()
            .filter(|(_, h)| h.distinct.len() >= 2 && h.current.as_ref() == h.distinct.last())
            .map(|(k, h)| write(k, &h.distinct[h.distinct.len() - 2]))
            .collect()
    }
}

type StrategyFn = dyn Fn(&[RealInteraction], &mut dyn RngCore) -> Vec<RealInteraction> + Send + Sync;

pub struct FnStrategy {
    name: String,
    f: Box<StrategyFn>,
}

impl FnStrategy {
    pub fn new<F>(name: &str, f: F) -> Self
    where
        F: Fn(&[RealInteraction], &mut dyn RngCore) -> Vec<RealInteraction> + Send + Sync + 'static,
    {
        FnStrategy {
            name: name.to_string(),
            f: Box::new(f),
        }
    }
}

impl fmt::Debug for FnStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnStrategy").field("name", &self.name).finish_non_exhaustive()
    }
}

impl Strategy for FnStrategy {
    fn name(&self) -> &str {
        &self.name
    }

    fn next(&self, history: &[RealInteraction], rng: &mut dyn RngCore) -> Vec<RealInteraction> {
        (self.f)(history, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn sv(k: i64, b: u8) -> RealInteraction {
        RealInteraction::StoreVal {
            key: GroundValue::Int(k),
            label: Label::public(),
            bytes: vec![b],
        }
    }

    fn run(s: &dyn Strategy, h: &[RealInteraction]) -> Vec<RealInteraction> {
        s.next(h, &mut ChaCha20Rng::seed_from_u64(0))
    }

    #[test]
    fn rollback_targets_first_value() {
        assert!(run(&RollbackStrategy, &[sv(1, 1)]).is_empty());
        assert_eq!(run(&RollbackStrategy, &[sv(1, 1), sv(1, 2), sv(2, 9)]), vec![sv(1, 1)]);
        // Once rolled back it stays quiet.
        assert!(run(&RollbackStrategy, &[sv(1, 1), sv(1, 2), sv(1, 1)]).is_empty());
    }

    #[test]
    fn stale_reinsert_fires_once_per_fresh_value() {
        let h = [sv(1, 1), sv(1, 2)];
        assert_eq!(run(&StaleReinsertStrategy, &h), vec![sv(1, 1)]);
        let h = [sv(1, 1), sv(1, 2), sv(1, 1)];
        assert!(run(&StaleReinsertStrategy, &h).is_empty());
        let h = [sv(1, 1), sv(1, 2), sv(1, 1), sv(1, 3)];
        assert_eq!(run(&StaleReinsertStrategy, &h), vec![sv(1, 2)]);
    }

    #[test]
    fn cross_key_copies_one_way() {
        let s = CrossKeyStrategy {
            from: GroundValue::Int(1),
            to: GroundValue::Int(2),
        };
        assert!(run(&s, &[sv(2, 5)]).is_empty());
        assert_eq!(run(&s, &[sv(1, 5)]), vec![sv(2, 5)]);
        assert!(run(&s, &[sv(1, 5), sv(2, 5)]).is_empty());
        assert!(run(&SkipStrategy, &[sv(1, 5)]).is_empty());
        let f = FnStrategy::new("dup", |h, _| h.to_vec());
        assert_eq!(run(&f, &[sv(1, 5)]), vec![sv(1, 5)]);
    }
}
