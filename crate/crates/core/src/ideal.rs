//! Reference store semantics: labeled ground values kept in the clear,
//! adversary interactions restricted only by the store level, and
//! confidentiality low equivalence.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;

use crate::calculus::{encode_ground, GroundValue, Labeled, Lit, Term, Type};
use crate::label::{component_flow, Component, Label};
use crate::runtime::{
    is_low_config, run_low_step, BridgeError, Config, FetchAnswer, LowStep, RuntimeError, StoreBridge, StoreEvent,
    DEFAULT_HIGH_BUDGET,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IdealEntry {
    Value(Labeled),
    Corrupted,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdealStore {
    entries: BTreeMap<GroundValue, IdealEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum IdealError {
    #[error("adversary store at {label} violates the store integrity bound {store_level}")]
    Integrity { label: Box<Label>, store_level: Box<Label> },
    #[error("low step requested from a configuration above the store level")]
    NotLow,
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IdealInteraction {
    Skip,
    Store { key: GroundValue, value: Labeled },
    Corrupt(Vec<GroundValue>),
}

impl IdealInteraction {
    /// An adversary store, checked against the store level's integrity.
    pub fn store(key: GroundValue, value: Labeled, store_level: &Label) -> Result<Self, IdealError> {
        check_integrity(&value.label, store_level)?;
        Ok(IdealInteraction::Store { key, value })
    }
}

fn check_integrity(label: &Label, store_level: &Label) -> Result<(), IdealError> {
    if component_flow(Component::Integ, &store_level.integ, &label.integ) {
        Ok(())
    } else {
        Err(IdealError::Integrity {
            label: Box::new(label.clone()),
            store_level: Box::new(store_level.clone()),
        })
    }
}

impl IdealStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &GroundValue) -> Option<&IdealEntry> {
        self.entries.get(key)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&GroundValue, &IdealEntry)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, key: GroundValue, value: Labeled) {
        self.entries.insert(key, IdealEntry::Value(value));
    }

    pub fn apply(&mut self, i: &IdealInteraction, store_level: &Label) -> Result<(), IdealError> {
        match i {
            IdealInteraction::Skip => {}
            IdealInteraction::Store { key, value } => {
                check_integrity(&value.label, store_level)?;
                self.insert(key.clone(), value.clone());
            }
            IdealInteraction::Corrupt(keys) => {
                for k in keys {
                    self.entries.insert(k.clone(), IdealEntry::Corrupted);
                }
            }
        }
        Ok(())
    }

    /// One line per key: `<key-b64> <label> <value-b64>` or
    /// `<key-b64> - CORRUPT`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (k, e) in &self.entries {
            let key = B64.encode(encode_ground(k));
            match e {
                IdealEntry::Value(lv) => {
                    writeln!(out, "{key} {} {}", lv.label, B64.encode(encode_ground(&lv.value))).unwrap()
                }
                IdealEntry::Corrupted => writeln!(out, "{key} - CORRUPT").unwrap(),
            }
        }
        out
    }
}

impl StoreBridge for IdealStore {
    fn on_store(&mut self, key: &GroundValue, value: &Labeled) -> Result<(), BridgeError> {
        self.insert(key.clone(), value.clone());
        Ok(())
    }

    fn on_fetch(&mut self, key: &GroundValue, _: &Labeled, _: &Type) -> Result<FetchAnswer, BridgeError> {
        Ok(match self.entries.get(key) {
            Some(IdealEntry::Value(lv)) => FetchAnswer::Found(lv.clone()),
            Some(IdealEntry::Corrupted) | None => FetchAnswer::Missing,
        })
    }
}

/// A configuration paired with an ideal store, advanced one low step at a
/// time.
#[derive(Debug, Clone)]
pub struct IdealLowStepper {
    pub config: Config,
    pub store: IdealStore,
    pub store_level: Label,
    pub high_budget: usize,
}

impl IdealLowStepper {
    pub fn new(config: Config, store_level: Label) -> Self {
        IdealLowStepper {
            config,
            store: IdealStore::new(),
            store_level,
            high_budget: DEFAULT_HIGH_BUDGET,
        }
    }

    pub fn can_step(&self) -> bool {
        !self.config.is_terminal() && is_low_config(&self.config, &self.store_level)
    }

    /// Apply the adversary's interactions, then take one low step.
    pub fn low_step(&mut self, adv: &[IdealInteraction]) -> Result<LowStep, IdealError> {
        if !is_low_config(&self.config, &self.store_level) {
            return Err(IdealError::NotLow);
        }
        for i in adv {
            self.store.apply(i, &self.store_level)?;
        }
        let ls = run_low_step(&self.config, &mut self.store, &self.store_level, self.high_budget)?;
        self.config = ls.config.clone();
        Ok(ls)
    }
}

/// Is a label's confidentiality readable at `level`?
pub fn conf_readable(l: &Label, level: &Label) -> bool {
    component_flow(Component::Conf, &l.conf, &level.conf)
}

pub fn labeled_low_equiv(a: &Labeled, b: &Labeled, level: &Label) -> bool {
    a.label == b.label
        && if conf_readable(&a.label, level) {
            a.value == b.value
        } else {
            a.value.type_of() == b.value.type_of()
        }
}

/// Confidentiality low equivalence of terms: structural equality except
/// that unreadable labeled payloads only need matching types.
pub fn terms_low_equiv(a: &Term, b: &Term, level: &Label) -> bool {
    let eq = |x: &Term, y: &Term| terms_low_equiv(x, y, level);
    match (a, b) {
        (Term::Labeled(x), Term::Labeled(y)) => labeled_low_equiv(x, y, level),
        // A pending label over a ground payload is a labeled value one step early.
        (Term::Label(l1, v1), Term::Label(l2, v2))
            if matches!((&**l1, &**l2), (Term::Lit(Lit::Label(a)), Term::Lit(Lit::Label(b))) if a == b && !conf_readable(a, level))
                && v1.is_ground()
                && v2.is_ground() =>
        {
            v1.as_ground().map(|g| g.type_of()) == v2.as_ground().map(|g| g.type_of())
        }
        (Term::Var(x), Term::Var(y)) => x == y,
        (Term::Lit(x), Term::Lit(y)) => x == y,
        (Term::GetLabel, Term::GetLabel) | (Term::GetClearance, Term::GetClearance) => true,
        (
            Term::Lam { var: v1, ty: t1, body: b1 },
            Term::Lam { var: v2, ty: t2, body: b2 },
        ) => v1 == v2 && t1 == t2 && eq(b1, b2),
        (Term::Fix(x), Term::Fix(y))
        | (Term::Fst(x), Term::Fst(y))
        | (Term::Snd(x), Term::Snd(y))
        | (Term::Return(x), Term::Return(y))
        | (Term::Unlabel(x), Term::Unlabel(y))
        | (Term::Lio(x), Term::Lio(y)) => eq(x, y),
        (Term::App(a1, a2), Term::App(b1, b2))
        | (Term::Pair(a1, a2), Term::Pair(b1, b2))
        | (Term::Bind(a1, a2), Term::Bind(b1, b2))
        | (Term::Label(a1, a2), Term::Label(b1, b2))
        | (Term::ToLabeled(a1, a2), Term::ToLabeled(b1, b2))
        | (Term::Store(a1, a2), Term::Store(b1, b2)) => eq(a1, b1) && eq(a2, b2),
        (Term::Prim(o1, a1, a2), Term::Prim(o2, b1, b2)) => o1 == o2 && eq(a1, b1) && eq(a2, b2),
        (Term::Fetch(t1, a1, a2), Term::Fetch(t2, b1, b2)) => t1 == t2 && eq(a1, b1) && eq(a2, b2),
        (Term::If(a1, a2, a3), Term::If(b1, b2, b3)) => eq(a1, b1) && eq(a2, b2) && eq(a3, b3),
        (
            Term::Reset {
                saved_label: s1,
                saved_clearance: c1,
                target: t1,
                body: x,
            },
            Term::Reset {
                saved_label: s2,
                saved_clearance: c2,
                target: t2,
                body: y,
            },
        ) => s1 == s2 && c1 == c2 && t1 == t2 && eq(x, y),
        _ => false,
    }
}

pub fn low_equiv(c1: &Config, c2: &Config, level: &Label) -> bool {
    let all_secret = [&c1.lcur, &c2.lcur, &c1.ccur, &c2.ccur]
        .iter()
        .all(|l| !conf_readable(l, level));
    all_secret || (c1.lcur == c2.lcur && c1.ccur == c2.ccur && terms_low_equiv(&c1.term, &c2.term, level))
}

pub fn stores_low_equiv(a: &IdealStore, b: &IdealStore, level: &Label) -> bool {
    a.entries.len() == b.entries.len()
        && a.entries.iter().zip(b.entries.iter()).all(|((k1, e1), (k2, e2))| {
            k1 == k2
                && match (e1, e2) {
                    (IdealEntry::Value(x), IdealEntry::Value(y)) => labeled_low_equiv(x, y, level),
                    (IdealEntry::Corrupted, IdealEntry::Corrupted) => true,
                    _ => false,
                }
        })
}

/// What an observer at `level` learns from a store event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PublicPayload {
    Value(GroundValue),
    Hidden(Type),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicStore {
    pub key: GroundValue,
    pub label: Label,
    pub payload: PublicPayload,
}

/// The store events of a trace as seen at `level`: unreadable payloads are
/// reduced to their types.
pub fn public_view(events: &[StoreEvent], level: &Label) -> Vec<PublicStore> {
    events
        .iter()
        .filter_map(|e| match e {
            StoreEvent::Store { key, value } => Some(PublicStore {
                key: key.clone(),
                label: value.label.clone(),
                payload: if conf_readable(&value.label, level) {
                    PublicPayload::Value(value.value.clone())
                } else {
                    PublicPayload::Hidden(value.value.type_of())
                },
            }),
            _ => None,
        })
        .collect()
}
