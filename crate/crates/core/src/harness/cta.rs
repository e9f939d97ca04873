//! Indistinguishability under chosen-term attack, estimated by sampling.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::calculus::{type_of, Term, Type};
use crate::crypto::{CryptoProvider, IdentityProvider};
use crate::ideal::{terms_low_equiv, IdealLowStepper};
use crate::label::{Label, Principal};
use crate::runtime::Config;
use crate::store::{step_meta, Keystore, RealError, RealInteraction, RealRuntime, Strategy};

use super::{derive_seed, Report};

pub const DEFAULT_TRIALS: usize = 200;
pub const DEFAULT_THRESHOLD: f64 = 0.15;
const MIN_TRIALS: usize = 30;
const PRECHECK_MAX_LOW_STEPS: usize = 10_000;

#[derive(Clone)]
pub struct CtaInstance {
    pub name: String,
    /// The adversary's own keys (P0). The store level is their authority.
    pub adversary: Keystore,
    /// Principals that get fresh keys in every trial.
    pub protected: Vec<Principal>,
    /// A function from the input to a computation.
    pub term: Term,
    pub inputs: [Term; 2],
    pub strategy: Arc<dyn Strategy>,
    pub j: usize,
    pub trials: usize,
    pub seed_base: u64,
    pub provider: &'static dyn CryptoProvider,
    pub threshold: f64,
}

impl fmt::Debug for CtaInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CtaInstance")
            .field("name", &self.name)
            .field("protected", &self.protected)
            .field("strategy", &self.strategy.name())
            .field("j", &self.j)
            .field("trials", &self.trials)
            .field("provider", &self.provider.name())
            .finish_non_exhaustive()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CtaError {
    #[error("invalid instance {instance}:\n  {}", problems.join("\n  "))]
    Invalid { instance: String, problems: Vec<String> },
    #[error("{instance}: trial {index} of branch {branch} failed: {source}")]
    Trial {
        instance: String,
        branch: usize,
        index: usize,
        #[source]
        source: RealError,
    },
}

impl CtaInstance {
    pub fn store_level(&self) -> Label {
        self.adversary.authority()
    }

    fn program(&self, b: usize) -> Term {
        Term::app(self.term.clone(), self.inputs[b].clone())
    }

    /// Labels of a trial keystore. Keys do not matter for the ideal
    /// pre-run, only which principals are owned.
    fn label_keystore(&self) -> Keystore {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let p = Keystore::generate(&self.protected, &IdentityProvider, &mut rng);
        self.adversary.merged(&p)
    }

    /// Every reason the instance is unusable; empty when it is fine.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.trials < MIN_TRIALS {
            out.push(format!("trials must be at least {MIN_TRIALS}, got {}", self.trials));
        }
        for p in &self.protected {
            if self.adversary.get(p).is_some() {
                out.push(format!("protected principal {p} is also in the adversary keystore"));
            }
        }
        let level = self.store_level();
        if !terms_low_equiv(&self.inputs[0], &self.inputs[1], &level) {
            out.push(format!(
                "inputs `{}` and `{}` are not low equivalent at {level}",
                self.inputs[0], self.inputs[1]
            ));
        }
        let ks = self.label_keystore();
        let mut counts = Vec::new();
        for b in 0..2 {
            let prog = self.program(b);
            match type_of(&prog) {
                Ok(Type::Clio(_)) => {}
                Ok(other) => {
                    out.push(format!("branch {b}: program has type {other}, expected a computation"));
                    continue;
                }
                Err(e) => {
                    out.push(format!("branch {b}: {e}"));
                    continue;
                }
            }
            let mut ideal = IdealLowStepper::new(Config::new(ks.start_label(), ks.clearance(), prog), level.clone());
            let mut n = 0;
            while ideal.can_step() && n < PRECHECK_MAX_LOW_STEPS {
                if let Err(e) = ideal.low_step(&[]) {
                    if n < self.j {
                        out.push(format!("branch {b}: low step {} fails: {e}", n + 1));
                    }
                    break;
                }
                n += 1;
            }
            if n < self.j {
                out.push(format!("branch {b}: only {n} low steps, need {}", self.j));
            }
            counts.push(n);
        }
        if counts.len() == 2 && counts[0] != counts[1] {
            out.push(format!(
                "low-step counts differ between branches ({} vs {})",
                counts[0], counts[1]
            ));
        }
        out
    }

    pub fn validate(&self) -> Result<(), CtaError> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CtaError::Invalid {
                instance: self.name.clone(),
                problems,
            })
        }
    }
}

/// Run `t v_b` for exactly `j` low steps with fresh protected keys and
/// return the full interaction history.
pub fn run_cta_trial(inst: &CtaInstance, b: usize, seed: u64) -> Result<Vec<RealInteraction>, RealError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let fresh = Keystore::generate(&inst.protected, inst.provider, &mut rng);
    let ks = inst.adversary.merged(&fresh);
    let config = Config::new(ks.start_label(), ks.clearance(), inst.program(b));
    let mut rt = RealRuntime::new(config, inst.store_level(), ks, inst.provider, derive_seed(seed, "runtime", 0));
    step_meta(&mut rt, inst.strategy.as_ref(), inst.j)?;
    Ok(rt.history().to_vec())
}

/// One history per branch from seeds outside the trial range. The
/// adversary can produce these itself: it chose the term, the inputs and
/// the strategy, and generates its own stand-in protected keys.
#[derive(Debug, Clone)]
pub struct References {
    pub branch: [Vec<RealInteraction>; 2],
}

pub trait Distinguisher: Send + Sync {
    fn name(&self) -> &str;
    /// `true` guesses branch 1.
    fn guess(&self, history: &[RealInteraction], refs: &References) -> bool;
}

/// Guess 1 iff the feature equals branch 1's reference and not branch 0's.
fn exact<F: PartialEq>(f: impl Fn(&[RealInteraction]) -> F, history: &[RealInteraction], refs: &References) -> bool {
    let x = f(history);
    x == f(&refs.branch[1]) && x != f(&refs.branch[0])
}

/// Guess 1 iff strictly closer to branch 1's reference.
fn nearest<F>(f: impl Fn(&[RealInteraction]) -> F, dist: impl Fn(&F, &F) -> f64, h: &[RealInteraction], refs: &References) -> bool {
    let x = f(h);
    dist(&x, &f(&refs.branch[1])) < dist(&x, &f(&refs.branch[0]))
}

fn store_vals(h: &[RealInteraction]) -> impl Iterator<Item = (&crate::calculus::GroundValue, &Label, &Vec<u8>)> {
    h.iter().filter_map(|i| match i {
        RealInteraction::StoreVal { key, label, bytes } => Some((key, label, bytes)),
        _ => None,
    })
}

#[derive(Debug, Default, Clone, Copy)]
pub struct HistoryLength;

impl Distinguisher for HistoryLength {
    fn name(&self) -> &str {
        "history-length"
    }

    fn guess(&self, h: &[RealInteraction], refs: &References) -> bool {
        nearest(|h| h.len() as f64, |a, b| (a - b).abs(), h, refs)
    }
}

/// Byte length of every interaction in order.
#[derive(Debug, Default, Clone, Copy)]
pub struct CiphertextLengths;

impl Distinguisher for CiphertextLengths {
    fn name(&self) -> &str {
        "ciphertext-lengths"
    }

    fn guess(&self, h: &[RealInteraction], refs: &References) -> bool {
        let lengths = |h: &[RealInteraction]| -> Vec<usize> {
            h.iter()
                .map(|i| match i {
                    RealInteraction::Skip => 0,
                    RealInteraction::StoreCk(_, ck) => {
                        ck.public.len() + ck.signature.len() + ck.wrapped.values().map(Vec::len).sum::<usize>()
                    }
                    RealInteraction::StoreVal { bytes, .. } => bytes.len(),
                })
                .collect()
        };
        exact(lengths, h, refs)
    }
}

/// L1 distance between byte histograms of all stored ciphertexts.
#[derive(Debug, Default, Clone, Copy)]
pub struct ByteFrequency;

impl Distinguisher for ByteFrequency {
    fn name(&self) -> &str {
        "byte-frequency"
    }

    fn guess(&self, h: &[RealInteraction], refs: &References) -> bool {
        let hist = |h: &[RealInteraction]| {
            let mut c = [0u32; 256];
            for (_, _, bytes) in store_vals(h) {
                for &b in bytes {
                    c[b as usize] += 1;
                }
            }
            c
        };
        let l1 = |a: &[u32; 256], b: &[u32; 256]| a.iter().zip(b).map(|(x, y)| x.abs_diff(*y) as f64).sum();
        nearest(hist, l1, h, refs)
    }
}

/// Stored bitstrings compared verbatim: anything readable or
/// deterministic in a ciphertext shows up here.
#[derive(Debug, Default, Clone, Copy)]
pub struct PlaintextMatch;

impl Distinguisher for PlaintextMatch {
    fn name(&self) -> &str {
        "plaintext"
    }

    fn guess(&self, h: &[RealInteraction], refs: &References) -> bool {
        let cts = |h: &[RealInteraction]| -> BTreeSet<Vec<u8>> { store_vals(h).map(|(_, _, b)| b.clone()).collect() };
        let x = cts(h);
        let only0 = &cts(&refs.branch[0]) - &cts(&refs.branch[1]);
        let only1 = &cts(&refs.branch[1]) - &cts(&refs.branch[0]);
        x.intersection(&only1).count() > x.intersection(&only0).count()
    }
}

/// The sequence of keys and labels written.
#[derive(Debug, Default, Clone, Copy)]
pub struct LabelSequence;

impl Distinguisher for LabelSequence {
    fn name(&self) -> &str {
        "label-sequence"
    }

    fn guess(&self, h: &[RealInteraction], refs: &References) -> bool {
        let seq = |h: &[RealInteraction]| -> Vec<(crate::calculus::GroundValue, Label)> {
            store_vals(h).map(|(k, l, _)| (k.clone(), l.clone())).collect()
        };
        exact(seq, h, refs)
    }
}

pub fn builtin_distinguishers() -> Vec<Box<dyn Distinguisher>> {
    vec![
        Box::new(HistoryLength),
        Box::new(CiphertextLengths),
        Box::new(ByteFrequency),
        Box::new(PlaintextMatch),
        Box::new(LabelSequence),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistinguisherResult {
    pub name: String,
    /// Fraction of branch-0 trials guessed as 1.
    pub p0: f64,
    pub p1: f64,
    pub advantage: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone)]
pub struct CtaReport {
    pub instance: String,
    pub provider: &'static str,
    pub trials: usize,
    pub threshold: f64,
    pub results: Vec<DistinguisherResult>,
}

impl CtaReport {
    pub fn pass(&self) -> bool {
        self.results.iter().all(|r| r.advantage < self.threshold)
    }

    pub fn reports(&self) -> Vec<Report> {
        self.results
            .iter()
            .map(|r| Report {
                game: format!("cta/{}/{}", self.instance, r.name),
                trials: self.trials,
                advantage: r.advantage,
                stderr: r.stderr,
                pass: r.advantage < self.threshold,
            })
            .collect()
    }

    pub fn result(&self, distinguisher: &str) -> Option<&DistinguisherResult> {
        self.results.iter().find(|r| r.name == distinguisher)
    }
}

/// Validate, then run `trials` trials per branch and score every
/// distinguisher on the same histories.
pub fn run_cta(inst: &CtaInstance, distinguishers: &[Box<dyn Distinguisher>]) -> Result<CtaReport, CtaError> {
    inst.validate()?;
    let trial_err = |branch, index, source| CtaError::Trial {
        instance: inst.name.clone(),
        branch,
        index,
        source,
    };
    let calibrate = |b: usize| {
        run_cta_trial(inst, b, derive_seed(inst.seed_base, "calibrate", b as u64)).map_err(|e| trial_err(b, usize::MAX, e))
    };
    let refs = References {
        branch: [calibrate(0)?, calibrate(1)?],
    };
    let jobs: Vec<(usize, usize)> = (0..2).flat_map(|b| (0..inst.trials).map(move |i| (b, i))).collect();
    let histories: Vec<(usize, Vec<RealInteraction>)> = jobs
        .par_iter()
        .map(|&(b, i)| {
            let seed = derive_seed(inst.seed_base, if b == 0 { "trial-0" } else { "trial-1" }, i as u64);
            run_cta_trial(inst, b, seed).map(|h| (b, h)).map_err(|e| trial_err(b, i, e))
        })
        .collect::<Result<_, _>>()?;
    let n = inst.trials as f64;
    let results = distinguishers
        .iter()
        .map(|d| {
            let mut ones = [0usize; 2];
            for (b, h) in &histories {
                if d.guess(h, &refs) {
                    ones[*b] += 1;
                }
            }
            let p0 = ones[0] as f64 / n;
            let p1 = ones[1] as f64 / n;
            DistinguisherResult {
                name: d.name().to_string(),
                p0,
                p1,
                advantage: (p0 - p1).abs(),
                stderr: (p0 * (1.0 - p0) / n + p1 * (1.0 - p1) / n).sqrt(),
            }
        })
        .collect();
    Ok(CtaReport {
        instance: inst.name.clone(),
        provider: inst.provider.name(),
        trials: inst.trials,
        threshold: inst.threshold,
        results,
    })
}

/// Advantage and its standard error for a single distinguisher.
pub fn estimate_advantage(inst: &CtaInstance, d: Box<dyn Distinguisher>) -> Result<(f64, f64), CtaError> {
    let r = run_cta(inst, &[d])?;
    Ok((r.results[0].advantage, r.results[0].stderr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{parse_input, parse_term};
    use crate::crypto::RealProvider;
    use crate::store::SkipStrategy;

    fn instance(src: &str, inputs: [&str; 2], provider: &'static dyn CryptoProvider, j: usize) -> CtaInstance {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        CtaInstance {
            name: "t".into(),
            adversary: Keystore::generate(&[Principal::new("A").unwrap()], provider, &mut rng),
            protected: vec![Principal::new("S").unwrap()],
            term: parse_term(src).unwrap(),
            inputs: inputs.map(|s| parse_input(s).unwrap()),
            strategy: Arc::new(SkipStrategy),
            j,
            trials: 40,
            seed_base: 5,
            provider,
            threshold: DEFAULT_THRESHOLD,
        }
    }

    const STORE_SECRET: &str = r#"\x. store "k" x"#;
    const SECRETS: [&str; 2] = ["⟨S | S | True⟩ 0", "⟨S | S | True⟩ 1"];

    #[test]
    fn identity_provider_leaks() {
        let inst = instance(STORE_SECRET, SECRETS, &IdentityProvider, 2);
        let r = run_cta(&inst, &builtin_distinguishers()).unwrap();
        assert_eq!(r.result("plaintext").unwrap().advantage, 1.0);
        assert_eq!(r.result("label-sequence").unwrap().advantage, 0.0);
        assert!(!r.pass());
    }

    #[test]
    fn real_provider_hides_the_secret() {
        let inst = instance(STORE_SECRET, SECRETS, &RealProvider, 2);
        let r = run_cta(&inst, &builtin_distinguishers()).unwrap();
        for d in ["plaintext", "label-sequence", "ciphertext-lengths", "history-length"] {
            assert_eq!(r.result(d).unwrap().advantage, 0.0, "{d}");
        }
    }

    #[test]
    fn trivial_cases() {
        let inst = instance(r"\x. return ()", SECRETS, &RealProvider, 1);
        let h0 = run_cta_trial(&inst, 0, 1).unwrap();
        assert_eq!(h0, run_cta_trial(&inst, 1, 2).unwrap());
        let inst = instance(STORE_SECRET, SECRETS, &RealProvider, 0);
        assert!(run_cta_trial(&inst, 0, 3).unwrap().is_empty());
        // Deterministic per seed.
        let inst = instance(STORE_SECRET, SECRETS, &RealProvider, 2);
        assert_eq!(run_cta_trial(&inst, 1, 4).unwrap(), run_cta_trial(&inst, 1, 4).unwrap());
    }

    #[test]
    fn precheck_rejects_bad_instances() {
        let readable = ["⟨True | S | True⟩ 0", "⟨True | S | True⟩ 1"];
        let inst = instance(STORE_SECRET, readable, &RealProvider, 2);
        assert!(matches!(inst.validate(), Err(CtaError::Invalid { .. })));
        let inst = instance(STORE_SECRET, SECRETS, &RealProvider, 5);
        let problems = inst.problems();
        assert!(problems.iter().any(|p| p.contains("only")), "{problems:?}");
        let mut inst = instance(STORE_SECRET, SECRETS, &RealProvider, 2);
        inst.trials = 3;
        assert!(inst.validate().is_err());
    }
}
