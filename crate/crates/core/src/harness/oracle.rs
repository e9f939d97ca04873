//! Runs the ideal and the real semantics side by side and reports the
//! first low step where they disagree.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::calculus::{GroundValue, Labeled};
use crate::crypto::CryptoProvider;
use crate::ideal::{IdealEntry, IdealError, IdealInteraction, IdealLowStepper, IdealStore};
use crate::label::Label;
use crate::runtime::{Config, LowStep};
use crate::store::{deserialize_any, serialize, Keystore, RealInteraction, RealRuntime, RealStore, StoreError};

use super::derive_seed;

/// An adversary move with a meaning in both semantics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptAction {
    /// Write a well-formed value, as an adversary holding the keys would.
    Store { key: GroundValue, value: Labeled },
    /// Damage whatever is stored under the key.
    Corrupt(GroundValue),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Divergence {
    /// 1-based low step.
    pub step: usize,
    pub what: String,
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "low step {}: {}", self.step, self.what)
    }
}

/// Store contents on both sides, at the start or the end of a run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OracleStores {
    pub ideal: IdealStore,
    pub real: RealStore,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleReport {
    /// Low steps compared.
    pub steps: usize,
    pub divergence: Option<Divergence>,
    /// Both sides stopped with the same monitor failure.
    pub stopped: Option<String>,
    /// Where the two stores ended up; feed into the next stage of a
    /// multi-principal pipeline.
    pub stores: OracleStores,
}

impl OracleReport {
    pub fn equivalent(&self) -> bool {
        self.divergence.is_none()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("script step {step}: {source}")]
    Script {
        step: usize,
        #[source]
        source: IdealError,
    },
    #[error("script step {step}: cannot serialize adversary value: {source}")]
    Serialize {
        step: usize,
        #[source]
        source: StoreError,
    },
}

fn outcome_name(r: &Result<LowStep, String>) -> String {
    match r {
        Ok(_) => "a low step".into(),
        Err(e) => e.clone(),
    }
}

/// Lockstep run of `config` for up to `j` low steps from empty stores.
/// `script[i]` is applied before low step `i + 1` (missing entries mean no
/// interaction). `ks` is the runtime's keystore; the real-side adversary
/// uses it too.
#[allow(clippy::too_many_arguments)]
pub fn ideal_real_oracle(
    config: &Config,
    script: &[Vec<ScriptAction>],
    j: usize,
    ks: &Keystore,
    store_level: &Label,
    provider: &'static dyn CryptoProvider,
    seed: u64,
) -> Result<OracleReport, OracleError> {
    ideal_real_oracle_from(&OracleStores::default(), config, script, j, ks, store_level, provider, seed)
}

/// [`ideal_real_oracle`] starting from existing store contents. Versions
/// start empty, as for a fresh process.
#[allow(clippy::too_many_arguments)]
pub fn ideal_real_oracle_from(
    start: &OracleStores,
    config: &Config,
    script: &[Vec<ScriptAction>],
    j: usize,
    ks: &Keystore,
    store_level: &Label,
    provider: &'static dyn CryptoProvider,
    seed: u64,
) -> Result<OracleReport, OracleError> {
    let mut ideal = IdealLowStepper::new(config.clone(), store_level.clone());
    ideal.store = start.ideal.clone();
    let mut real =
        RealRuntime::new(config.clone(), store_level.clone(), ks.clone(), provider, seed).with_store(start.real.clone());
    let (steps, divergence, stopped) = lockstep(&mut ideal, &mut real, script, j, ks, store_level, provider, seed)?;
    Ok(OracleReport {
        steps,
        divergence,
        stopped,
        stores: OracleStores {
            ideal: ideal.store,
            real: real.store().clone(),
        },
    })
}

type Outcome = (usize, Option<Divergence>, Option<String>);

#[allow(clippy::too_many_arguments)]
fn lockstep(
    ideal: &mut IdealLowStepper,
    real: &mut RealRuntime,
    script: &[Vec<ScriptAction>],
    j: usize,
    ks: &Keystore,
    store_level: &Label,
    provider: &'static dyn CryptoProvider,
    seed: u64,
) -> Result<Outcome, OracleError> {
    let mut adv_rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, "oracle-adversary", 0));
    let diverge = |step, what: String| (step, Some(Divergence { step, what }), None);

    for step in 1..=j {
        if ideal.can_step() != real.can_step() {
            return Ok(diverge(step, "only one side can take another low step".into()));
        }
        if !ideal.can_step() {
            return Ok((step - 1, None, None));
        }
        let actions = script.get(step - 1).map(Vec::as_slice).unwrap_or(&[]);
        let mut ideal_adv = Vec::new();
        let mut real_adv = Vec::new();
        for a in actions {
            match a {
                ScriptAction::Store { key, value } => {
                    let i = IdealInteraction::store(key.clone(), value.clone(), store_level)
                        .map_err(|source| OracleError::Script { step, source })?;
                    ideal_adv.push(i);
                    let version = real.versions().get(key).copied().unwrap_or(0) + 1;
                    // Interactions queued earlier in this step are not yet in
                    // the real store; serialize against a preview.
                    let mut preview = real.store().clone();
                    for i in &real_adv {
                        preview.apply(i);
                    }
                    let (cks, bytes) = serialize(
                        &preview,
                        &value.label,
                        &value.value,
                        key,
                        version,
                        ks,
                        provider,
                        &mut adv_rng,
                    )
                    .map_err(|source| OracleError::Serialize { step, source })?;
                    real_adv.extend(cks);
                    real_adv.push(RealInteraction::StoreVal {
                        key: key.clone(),
                        label: value.label.clone(),
                        bytes,
                    });
                }
                ScriptAction::Corrupt(key) => {
                    ideal_adv.push(IdealInteraction::Corrupt(vec![key.clone()]));
                    let mut preview = real.store().clone();
                    for i in &real_adv {
                        preview.apply(i);
                    }
                    // Dropping the last byte always breaks decoding: the
                    // innermost plaintext ends in a length-prefixed field.
                    // A bit flip would not do for unsigned public entries.
                    let (label, bytes) = match preview.entry(key) {
                        Some(e) => (e.label.clone(), e.bytes[..e.bytes.len().saturating_sub(1)].to_vec()),
                        None => (Label::public(), Vec::new()),
                    };
                    real_adv.push(RealInteraction::StoreVal {
                        key: key.clone(),
                        label,
                        bytes,
                    });
                }
            }
        }

        // Errors compare by their text, which for monitor failures names
        // the premise and both labels.
        let i_res = ideal.low_step(&ideal_adv).map_err(|e| e.to_string());
        let r_res = real.low_step_with(&real_adv).map_err(|e| e.to_string());
        match (&i_res, &r_res) {
            (Ok(a), Ok(b)) => {
                if a.config != b.config {
                    return Ok(diverge(step, format!("configurations differ: ideal {} / real {}", a.config, b.config)));
                }
                if a.events != b.events {
                    return Ok(diverge(
                        step,
                        format!("events differ: ideal {:?} / real {:?}", a.events, b.events),
                    ));
                }
            }
            (Err(a), Err(b)) if a == b => {
                return Ok((step, None, Some(a.clone())));
            }
            _ => {
                return Ok(diverge(
                    step,
                    format!("ideal: {} / real: {}", outcome_name(&i_res), outcome_name(&r_res)),
                ))
            }
        }
        if let Some(what) = compare_stores(ideal, real, ks, provider) {
            return Ok(diverge(step, what));
        }
    }
    Ok((j, None, None))
}

fn compare_stores(
    ideal: &IdealLowStepper,
    real: &RealRuntime,
    ks: &Keystore,
    provider: &dyn CryptoProvider,
) -> Option<String> {
    let rs = real.store();
    for (k, e) in ideal.store.entries() {
        let decoded = rs
            .entry(k)
            .and_then(|re| deserialize_any(rs, &re.label, &re.bytes, ks, provider).ok().map(|d| (re.label.clone(), d)));
        match (e, decoded) {
            (IdealEntry::Value(lv), Some((label, d))) => {
                if label != lv.label || d.value != lv.value || &d.key != k {
                    return Some(format!(
                        "entry {}: ideal {lv} / real ⟨{label}⟩ {}",
                        crate::calculus::Term::from_ground(k),
                        crate::calculus::Term::from_ground(&d.value)
                    ));
                }
            }
            (IdealEntry::Value(lv), None) => {
                return Some(format!(
                    "entry {}: ideal {lv} / real entry missing or invalid",
                    crate::calculus::Term::from_ground(k)
                ))
            }
            (IdealEntry::Corrupted, None) => {}
            (IdealEntry::Corrupted, Some(_)) => {
                return Some(format!(
                    "entry {}: corrupted in the ideal store but valid in the real one",
                    crate::calculus::Term::from_ground(k)
                ))
            }
        }
    }
    for (k, _) in rs.entries() {
        if ideal.store.get(k).is_none() {
            return Some(format!("entry {} exists only in the real store", crate::calculus::Term::from_ground(k)));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::parse_term;
    use crate::crypto::RealProvider;
    use crate::label::{parse_label, Principal};

    fn setup(src: &str) -> (Config, Keystore) {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let ks = Keystore::generate(&[Principal::new("A").unwrap(), Principal::new("B").unwrap()], &RealProvider, &mut rng);
        (Config::new(ks.start_label(), ks.clearance(), parse_term(src).unwrap()), ks)
    }

    const PROG: &str = r#"do {
        a <- label ⟨A | A | True⟩ 5;
        store "k" a;
        d <- label ⟨A | A | True⟩ 0;
        x <- fetch [Int] "k" d;
        return x
    }"#;

    fn steps_to_fetch(config: &Config, level: &Label) -> usize {
        // Find the low step that runs the fetch by counting a clean run.
        let mut st = IdealLowStepper::new(config.clone(), level.clone());
        let mut n = 0;
        while st.can_step() {
            n += 1;
            let ls = st.low_step(&[]).unwrap();
            if ls.events.iter().any(|e| matches!(e, crate::runtime::StoreEvent::Fetch { .. })) {
                return n;
            }
        }
        panic!("no fetch");
    }

    #[test]
    fn agrees_without_adversary() {
        let (c, ks) = setup(PROG);
        let r = ideal_real_oracle(&c, &[], 100, &ks, &ks.authority(), &RealProvider, 1).unwrap();
        assert!(r.equivalent(), "{r:?}");
        assert!(r.steps > 3);
    }

    #[test]
    fn corrupt_then_fetch_defaults_on_both_sides() {
        let (c, ks) = setup(PROG);
        let n = steps_to_fetch(&c, &ks.authority());
        let mut script = vec![Vec::new(); n];
        script[n - 1] = vec![ScriptAction::Corrupt(GroundValue::text("k"))];
        let r = ideal_real_oracle(&c, &script, 100, &ks, &ks.authority(), &RealProvider, 2).unwrap();
        assert!(r.equivalent(), "{r:?}");
    }

    #[test]
    fn benign_restore_is_seen_by_both() {
        let (c, ks) = setup(PROG);
        let n = steps_to_fetch(&c, &ks.authority());
        let mut script = vec![Vec::new(); n];
        script[n - 1] = vec![ScriptAction::Store {
            key: GroundValue::text("k"),
            value: Labeled::new(parse_label("A | A | True").unwrap(), GroundValue::Int(9)),
        }];
        let r = ideal_real_oracle(&c, &script, 100, &ks, &ks.authority(), &RealProvider, 3).unwrap();
        assert!(r.equivalent(), "{r:?}");
    }

    #[test]
    fn detects_a_real_only_failure() {
        // The keystore has no key for C, so only the real store fails.
        let (c, ks) = setup(r#"do { a <- label ⟨A ∨ C | True | True⟩ 1; store "k" a }"#);
        let r = ideal_real_oracle(&c, &[], 100, &ks, &ks.authority(), &RealProvider, 4).unwrap();
        let d = r.divergence.expect("divergence");
        assert!(d.what.contains("real"), "{d}");
    }

    #[test]
    fn stages_chain_through_stores() {
        let (c1, ks) = setup(r#"do { a <- label ⟨A | A | True⟩ 5; store "k" a }"#);
        let level = ks.authority();
        let r1 = ideal_real_oracle(&c1, &[], 100, &ks, &level, &RealProvider, 5).unwrap();
        assert!(r1.equivalent(), "{r1:?}");
        let (c2, _) = setup(r#"do { d <- label ⟨A | A | True⟩ 0; x <- fetch [Int] "k" d; unlabel x }"#);
        let r2 = ideal_real_oracle_from(&r1.stores, &c2, &[], 100, &ks, &level, &RealProvider, 6).unwrap();
        assert!(r2.equivalent(), "{r2:?}");
        let last = r2.stores.ideal.get(&GroundValue::text("k")).cloned();
        assert_eq!(
            last,
            Some(IdealEntry::Value(Labeled::new(parse_label("A | A | True").unwrap(), GroundValue::Int(5))))
        );
    }
}
