//! Leveraged forgery: can a low-integrity run, helped by everything a
//! high-integrity run wrote, produce a new valid value vouched for by `p`?

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::calculus::{type_of, GroundValue, Term, Type};
use crate::crypto::CryptoProvider;
use crate::label::{component_flow, Component, Formula, Label, Principal};
use crate::runtime::Config;
use crate::store::{
    FnStrategy, Keystore, RealError, RealInteraction, RealRuntime, Strategy, STRATEGY_OUTPUT_CAP,
};

use super::{derive_seed, value_set, Report};

/// Canned phase-2 adversaries. Each is built from the phase-1 history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ForgeryAdversary {
    /// Replays every phase-1 interaction before the first step.
    Verbatim,
    /// Writes phase-1 ciphertexts under other keys and under altered labels.
    Splice,
    /// Cycles every key through its phase-1 versions.
    Roller,
    /// Writes phase-1 ciphertexts with one random byte flipped.
    Flip,
}

impl ForgeryAdversary {
    pub const ALL: [ForgeryAdversary; 4] = [
        ForgeryAdversary::Verbatim,
        ForgeryAdversary::Splice,
        ForgeryAdversary::Roller,
        ForgeryAdversary::Flip,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ForgeryAdversary::Verbatim => "verbatim",
            ForgeryAdversary::Splice => "splice",
            ForgeryAdversary::Roller => "roller",
            ForgeryAdversary::Flip => "flip",
        }
    }

    pub fn strategy(self, phase1: &[RealInteraction], target: &Principal) -> Arc<dyn Strategy> {
        let cks: Vec<RealInteraction> = phase1
            .iter()
            .filter(|i| matches!(i, RealInteraction::StoreCk(..)))
            .cloned()
            .collect();
        let vals: Vec<(GroundValue, Label, Vec<u8>)> = phase1
            .iter()
            .filter_map(|i| match i {
                RealInteraction::StoreVal { key, label, bytes } => Some((key.clone(), label.clone(), bytes.clone())),
                _ => None,
            })
            .collect();
        let cap = |mut v: Vec<RealInteraction>| {
            v.truncate(STRATEGY_OUTPUT_CAP);
            v
        };
        let sv = |key: GroundValue, label: Label, bytes: Vec<u8>| RealInteraction::StoreVal { key, label, bytes };
        match self {
            ForgeryAdversary::Verbatim => {
                let all: Vec<RealInteraction> = phase1.iter().filter(|i| **i != RealInteraction::Skip).cloned().collect();
                Arc::new(FnStrategy::new(self.name(), move |h, _| {
                    if h.is_empty() {
                        cap(all.clone())
                    } else {
                        Vec::new()
                    }
                }))
            }
            ForgeryAdversary::Splice => {
                let p = Formula::principal(target.clone());
                let mut out = cks.clone();
                for (k, l, ct) in &vals {
                    out.push(sv(GroundValue::pair(k.clone(), GroundValue::text("splice")), l.clone(), ct.clone()));
                    let mut relabeled = Label::new(l.conf.clone(), l.integ.and(&p), Formula::truth());
                    if relabeled == *l {
                        relabeled.avail = p.clone();
                    }
                    out.push(sv(k.clone(), relabeled, ct.clone()));
                }
                for w in vals.windows(2) {
                    out.push(sv(w[1].0.clone(), w[0].1.clone(), w[0].2.clone()));
                }
                Arc::new(FnStrategy::new(self.name(), move |h, _| {
                    if h.is_empty() {
                        cap(out.clone())
                    } else {
                        Vec::new()
                    }
                }))
            }
            ForgeryAdversary::Roller => {
                let mut per_key: BTreeMap<GroundValue, Vec<(Label, Vec<u8>)>> = BTreeMap::new();
                for (k, l, ct) in &vals {
                    per_key.entry(k.clone()).or_default().push((l.clone(), ct.clone()));
                }
                Arc::new(FnStrategy::new(self.name(), move |h, _| {
                    let mut out = if h.is_empty() { cks.clone() } else { Vec::new() };
                    for (k, versions) in &per_key {
                        let (l, ct) = &versions[h.len() % versions.len()];
                        out.push(sv(k.clone(), l.clone(), ct.clone()));
                    }
                    cap(out)
                }))
            }
            ForgeryAdversary::Flip => Arc::new(FnStrategy::new(self.name(), move |h, rng: &mut dyn RngCore| {
                let mut out = if h.is_empty() { cks.clone() } else { Vec::new() };
                for (k, l, ct) in &vals {
                    if ct.is_empty() {
                        continue;
                    }
                    let mut bad = ct.clone();
                    let i = rng.gen_range(0..bad.len());
                    bad[i] ^= 1 << rng.gen_range(0..8);
                    out.push(sv(k.clone(), l.clone(), bad));
                }
                cap(out)
            })),
        }
    }
}

impl fmt::Display for ForgeryAdversary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ForgeryAdversary {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ForgeryAdversary::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown forgery adversary `{s}` (expected verbatim, splice, roller or flip)"))
    }
}

#[derive(Clone)]
pub struct ForgeryInstance {
    pub name: String,
    /// The principal whose signatures are at stake.
    pub target: Principal,
    /// P0: the adversary's keys, present in both phases.
    pub base: Keystore,
    pub phase1: Term,
    pub phase1_strategy: Arc<dyn Strategy>,
    pub phase2: Term,
    pub adversaries: Vec<ForgeryAdversary>,
    /// A label whose integrity requires `p`; values at such labels are what
    /// phase 2 must not mint.
    pub target_label: Label,
    pub j: usize,
    pub j2: usize,
    pub trials: usize,
    pub seed_base: u64,
    pub provider: &'static dyn CryptoProvider,
}

impl fmt::Debug for ForgeryInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ForgeryInstance")
            .field("name", &self.name)
            .field("target", &self.target)
            .field("adversaries", &self.adversaries)
            .field("j", &self.j)
            .field("j2", &self.j2)
            .field("trials", &self.trials)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ForgeryError {
    #[error("invalid instance {instance}:\n  {}", problems.join("\n  "))]
    Invalid { instance: String, problems: Vec<String> },
    #[error("{instance}: phase 1 of trial {index} failed: {source}")]
    PhaseOne {
        instance: String,
        index: usize,
        #[source]
        source: RealError,
    },
}

/// How the phase-2 run ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PhaseTwoOutcome {
    /// Took all `j2` low steps, or finished early.
    Completed(usize),
    /// Stopped by an error after the given number of low steps.
    Stopped(usize, String),
}

#[derive(Debug, Clone)]
pub struct ForgeryTrial {
    pub adversary: ForgeryAdversary,
    pub index: usize,
    /// New valid values vouched for by the target.
    pub forged: usize,
    pub floor_violations: usize,
    pub outcome: PhaseTwoOutcome,
}

#[derive(Debug, Clone)]
pub struct ForgeryReport {
    pub instance: String,
    pub trials: Vec<ForgeryTrial>,
}

impl ForgeryReport {
    pub fn successes(&self) -> usize {
        self.trials.iter().filter(|t| t.forged > 0).count()
    }

    pub fn floor_violations(&self) -> usize {
        self.trials.iter().map(|t| t.floor_violations).sum()
    }

    pub fn pass(&self) -> bool {
        self.successes() == 0 && self.floor_violations() == 0
    }

    /// One summary per adversary; the advantage field is the success rate.
    pub fn reports(&self) -> Vec<Report> {
        let mut by: BTreeMap<ForgeryAdversary, (usize, usize, usize)> = BTreeMap::new();
        for t in &self.trials {
            let e = by.entry(t.adversary).or_default();
            e.0 += 1;
            e.1 += usize::from(t.forged > 0);
            e.2 += t.floor_violations;
        }
        by.into_iter()
            .map(|(a, (n, s, v))| {
                let rate = s as f64 / n as f64;
                Report {
                    game: format!("forgery/{}/{a}", self.instance),
                    trials: n,
                    advantage: rate,
                    stderr: (rate * (1.0 - rate) / n as f64).sqrt(),
                    pass: s == 0 && v == 0,
                }
            })
            .collect()
    }
}

fn p_formula(p: &Principal) -> Formula {
    Formula::principal(p.clone())
}

impl ForgeryInstance {
    pub fn store_level(&self) -> Label {
        self.base.authority()
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.base.get(&self.target).is_some() {
            out.push(format!("target {} must not be in the base keystore", self.target));
        }
        if !component_flow(Component::Integ, &self.target_label.integ, &p_formula(&self.target)) {
            out.push(format!(
                "target label {} does not require {}'s integrity",
                self.target_label, self.target
            ));
        }
        if self.adversaries.is_empty() {
            out.push("no phase-2 adversaries".into());
        }
        for (name, t) in [("phase 1", &self.phase1), ("phase 2", &self.phase2)] {
            match type_of(t) {
                Ok(Type::Clio(_)) => {}
                Ok(other) => out.push(format!("{name}: program has type {other}, expected a computation")),
                Err(e) => out.push(format!("{name}: {e}")),
            }
        }
        out
    }

    fn trial(&self, adversary: ForgeryAdversary, index: usize) -> Result<ForgeryTrial, ForgeryError> {
        let seed = derive_seed(self.seed_base, adversary.name(), index as u64);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let target_keys = Keystore::generate([&self.target], self.provider, &mut rng);
        let full = self.base.merged(&target_keys);
        let level = self.store_level();

        let config = Config::new(full.start_label(), full.clearance(), self.phase1.clone());
        let mut rt = RealRuntime::new(config, level.clone(), full.clone(), self.provider, derive_seed(seed, "phase1", 0));
        let mut steps = 0;
        while steps < self.j && rt.can_step() {
            rt.low_step(self.phase1_strategy.as_ref())
                .map_err(|source| ForgeryError::PhaseOne {
                    instance: self.name.clone(),
                    index,
                    source,
                })?;
            steps += 1;
        }
        let phase1 = rt.history().to_vec();

        // Phase 2 knows the target's public key only.
        let low = self.base.merged(&target_keys.public_only());
        let floor = low.start_label();
        let strategy = adversary.strategy(&phase1, &self.target);
        let config = Config::new(floor.clone(), low.clearance(), self.phase2.clone());
        let mut rt2 = RealRuntime::new(config, level, low, self.provider, derive_seed(seed, "phase2", 0));
        let mut floor_violations = 0;
        let mut steps = 0;
        let mut outcome = PhaseTwoOutcome::Completed(0);
        while steps < self.j2 && rt2.can_step() {
            match rt2.low_step(strategy.as_ref()) {
                Ok(_) => steps += 1,
                Err(e) => {
                    outcome = PhaseTwoOutcome::Stopped(steps, e.to_string());
                    break;
                }
            }
            // The current label never becomes more trustworthy than the
            // starting label.
            if !component_flow(Component::Integ, &floor.integ, &rt2.config.lcur.integ) {
                floor_violations += 1;
            }
        }
        if let PhaseTwoOutcome::Completed(_) = outcome {
            outcome = PhaseTwoOutcome::Completed(steps);
        }

        let before = value_set(&phase1, &full, self.provider);
        let after = value_set(rt2.history(), &full, self.provider);
        let p = p_formula(&self.target);
        let forged = after
            .difference(&before)
            .filter(|(l, _)| component_flow(Component::Integ, &l.integ, &p))
            .count();
        Ok(ForgeryTrial {
            adversary,
            index,
            forged,
            floor_violations,
            outcome,
        })
    }
}

pub fn run_forgery(inst: &ForgeryInstance) -> Result<ForgeryReport, ForgeryError> {
    use rayon::prelude::*;
    let problems = inst.problems();
    if !problems.is_empty() {
        return Err(ForgeryError::Invalid {
            instance: inst.name.clone(),
            problems,
        });
    }
    let jobs: Vec<(ForgeryAdversary, usize)> = inst
        .adversaries
        .iter()
        .flat_map(|a| (0..inst.trials).map(move |i| (*a, i)))
        .collect();
    let trials = jobs
        .par_iter()
        .map(|&(a, i)| inst.trial(a, i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ForgeryReport {
        instance: inst.name.clone(),
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::parse_term;
    use crate::crypto::RealProvider;
    use crate::label::parse_label;
    use crate::store::SkipStrategy;

    fn instance(phase2: &str) -> ForgeryInstance {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        ForgeryInstance {
            name: "t".into(),
            target: Principal::new("P").unwrap(),
            base: Keystore::generate(&[Principal::new("A").unwrap()], &RealProvider, &mut rng),
            phase1: parse_term(
                r#"do { a <- label ⟨True | P | True⟩ 1; store "k" a; b <- label ⟨True | P | True⟩ 2; store "k" b }"#,
            )
            .unwrap(),
            phase1_strategy: Arc::new(SkipStrategy),
            phase2: parse_term(phase2).unwrap(),
            adversaries: ForgeryAdversary::ALL.to_vec(),
            target_label: parse_label("True | P | True").unwrap(),
            j: 6,
            j2: 20,
            trials: 3,
            seed_base: 1,
            provider: &RealProvider,
        }
    }

    #[test]
    fn canned_adversaries_forge_nothing() {
        let inst = instance(r#"do { d <- label ⟨True | A | True⟩ 0; x <- fetch [Int] "k" d; store "j" x }"#);
        let r = run_forgery(&inst).unwrap();
        assert_eq!(r.trials.len(), 12);
        assert_eq!(r.successes(), 0);
        assert_eq!(r.floor_violations(), 0);
        assert!(r.pass());
    }

    #[test]
    fn minting_at_the_target_is_blocked_by_the_monitor() {
        let inst = instance(r#"do { a <- label ⟨True | P | True⟩ 7; store "k" a }"#);
        let r = run_forgery(&inst).unwrap();
        assert!(r
            .trials
            .iter()
            .all(|t| matches!(&t.outcome, PhaseTwoOutcome::Stopped(_, m) if m.contains("monitor"))));
        assert_eq!(r.successes(), 0);
    }

    #[test]
    fn a_keyed_phase_two_would_count() {
        // Sanity check of the success criterion: hand phase 2 the target's
        // key and it does mint a new value.
        let mut inst = instance(r#"do { a <- label ⟨True | P | True⟩ 7; store "k" a }"#);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let p = Keystore::generate([&inst.target], &RealProvider, &mut rng);
        let full = inst.base.merged(&p);
        let config = Config::new(full.start_label(), full.clearance(), inst.phase2.clone());
        let mut rt = RealRuntime::new(config, inst.store_level(), full.clone(), &RealProvider, 1);
        rt.run(&SkipStrategy, 100).unwrap();
        let after = value_set(rt.history(), &full, &RealProvider);
        assert_eq!(after.len(), 1);
        inst.adversaries.clear();
        assert!(!inst.problems().is_empty());
    }
}
