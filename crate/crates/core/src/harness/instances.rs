//! Game instance files.
//!
//! ```toml
//! [[instance]]
//! name = "store-secret"
//! program = "../programs/cta/store_secret.clio"   # relative to this file
//! adversary = ["A"]
//! protected = ["S"]
//! inputs = ["⟨S | S | True⟩ 0", "⟨S | S | True⟩ 1"]
//! strategy = "skip"
//! j = 2
//! ```
//!
//! Forgery instances use `target`, `base`, `phase1`, `phase2`,
//! `phase1_strategy`, `adversaries`, `target_label`, `j` and `j2`.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Deserialize;

use crate::calculus::{parse_ground, parse_input, parse_term, Term};
use crate::crypto::CryptoProvider;
use crate::label::{parse_label, Principal};
use crate::store::{CrossKeyStrategy, Keystore, RollbackStrategy, SkipStrategy, StaleReinsertStrategy, Strategy};

use super::cta::{CtaInstance, DEFAULT_THRESHOLD, DEFAULT_TRIALS};
use super::derive_seed;
use super::forgery::{ForgeryAdversary, ForgeryInstance};

const DEFAULT_FORGERY_TRIALS: usize = 100;

#[derive(Debug, thiserror::Error)]
pub enum InstanceError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
    #[error("{}: instance {instance}: {msg}", path.display())]
    Instance { path: PathBuf, instance: String, msg: String },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CtaFile {
    instance: Vec<CtaSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CtaSpec {
    name: String,
    program: String,
    adversary: Vec<String>,
    protected: Vec<String>,
    inputs: [String; 2],
    #[serde(default = "skip")]
    strategy: String,
    j: usize,
    trials: Option<usize>,
    threshold: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ForgeryFile {
    instance: Vec<ForgerySpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ForgerySpec {
    name: String,
    target: String,
    base: Vec<String>,
    phase1: String,
    #[serde(default = "skip")]
    phase1_strategy: String,
    phase2: String,
    adversaries: Option<Vec<String>>,
    target_label: String,
    j: usize,
    j2: usize,
    trials: Option<usize>,
}

fn skip() -> String {
    "skip".into()
}

/// `skip`, `rollback`, `stale-reinsert`, or `cross-key <from> -> <to>` with
/// ground-value keys.
pub fn parse_strategy(s: &str) -> Result<Arc<dyn Strategy>, String> {
    match s.trim() {
        "skip" => Ok(Arc::new(SkipStrategy)),
        "rollback" => Ok(Arc::new(RollbackStrategy)),
        "stale-reinsert" => Ok(Arc::new(StaleReinsertStrategy)),
        other => {
            let rest = other
                .strip_prefix("cross-key")
                .ok_or_else(|| format!("unknown strategy `{other}`"))?;
            let (from, to) = rest
                .split_once("->")
                .ok_or("cross-key expects `cross-key <from> -> <to>`")?;
            let key = |t: &str| parse_ground(t.trim()).map_err(|e| format!("cross-key: {e}"));
            Ok(Arc::new(CrossKeyStrategy {
                from: key(from)?,
                to: key(to)?,
            }))
        }
    }
}

fn read(path: &Path) -> Result<String, InstanceError> {
    fs::read_to_string(path).map_err(|source| InstanceError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn principals(names: &[String]) -> Result<Vec<Principal>, String> {
    names
        .iter()
        .map(|n| Principal::new(n.as_str()).map_err(|e| e.to_string()))
        .collect()
}

fn load_program(base: &Path, rel: &str) -> Result<Term, String> {
    let path = base.join(rel);
    let src = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_term(&src).map_err(|e| format!("{}:{e}", path.display()))
}

fn adversary_keys(
    names: &[Principal],
    provider: &dyn CryptoProvider,
    seed: u64,
    instance: &str,
) -> Keystore {
    let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, &format!("keys:{instance}"), 0));
    Keystore::generate(names, provider, &mut rng)
}

fn dir_of(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Load every CTA instance in `path`. `trials` overrides the per-instance
/// count when given.
pub fn load_cta_instances(
    path: &Path,
    provider: &'static dyn CryptoProvider,
    seed: u64,
    trials: Option<usize>,
) -> Result<Vec<CtaInstance>, InstanceError> {
    let file: CtaFile = toml::from_str(&read(path)?).map_err(|e| InstanceError::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let dir = dir_of(path);
    file.instance
        .into_iter()
        .map(|s| {
            let err = |msg: String| InstanceError::Instance {
                path: path.to_path_buf(),
                instance: s.name.clone(),
                msg,
            };
            let adversary = principals(&s.adversary).map_err(err)?;
            let protected = principals(&s.protected).map_err(err)?;
            let term = load_program(&dir, &s.program).map_err(err)?;
            let input = |i: usize| parse_input(&s.inputs[i]).map_err(|e| err(format!("input {i}: {e}")));
            let inputs = [input(0)?, input(1)?];
            Ok(CtaInstance {
                adversary: adversary_keys(&adversary, provider, seed, &s.name),
                protected,
                term,
                inputs,
                strategy: parse_strategy(&s.strategy).map_err(err)?,
                j: s.j,
                trials: trials.or(s.trials).unwrap_or(DEFAULT_TRIALS),
                seed_base: derive_seed(seed, &s.name, 0),
                provider,
                threshold: s.threshold.unwrap_or(DEFAULT_THRESHOLD),
                name: s.name,
            })
        })
        .collect()
}

pub fn load_forgery_instances(
    path: &Path,
    provider: &'static dyn CryptoProvider,
    seed: u64,
    trials: Option<usize>,
) -> Result<Vec<ForgeryInstance>, InstanceError> {
    let file: ForgeryFile = toml::from_str(&read(path)?).map_err(|e| InstanceError::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let dir = dir_of(path);
    file.instance
        .into_iter()
        .map(|s| {
            let err = |msg: String| InstanceError::Instance {
                path: path.to_path_buf(),
                instance: s.name.clone(),
                msg,
            };
            let target = Principal::new(s.target.as_str()).map_err(|e| err(e.to_string()))?;
            let base = principals(&s.base).map_err(err)?;
            let adversaries = match &s.adversaries {
                None => ForgeryAdversary::ALL.to_vec(),
                Some(names) => names
                    .iter()
                    .map(|n| n.parse())
                    .collect::<Result<_, String>>()
                    .map_err(err)?,
            };
            Ok(ForgeryInstance {
                target,
                base: adversary_keys(&base, provider, seed, &s.name),
                phase1: load_program(&dir, &s.phase1).map_err(err)?,
                phase1_strategy: parse_strategy(&s.phase1_strategy).map_err(err)?,
                phase2: load_program(&dir, &s.phase2).map_err(err)?,
                adversaries,
                target_label: parse_label(&s.target_label).map_err(|e| err(e.to_string()))?,
                j: s.j,
                j2: s.j2,
                trials: trials.or(s.trials).unwrap_or(DEFAULT_FORGERY_TRIALS),
                seed_base: derive_seed(seed, &s.name, 0),
                provider,
                name: s.name,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::RealProvider;

    #[test]
    fn strategies_by_name() {
        for s in ["skip", "rollback", "stale-reinsert", r#"cross-key "k" -> "j""#] {
            assert!(parse_strategy(s).is_ok(), "{s}");
        }
        assert!(parse_strategy("cross-key 1").is_err());
        assert!(parse_strategy("swap").is_err());
    }

    #[test]
    fn loads_relative_programs() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("p")).unwrap();
        fs::write(dir.path().join("p/t.clio"), r#"\x. store "k" x"#).unwrap();
        let toml = r#"
[[instance]]
name = "one"
program = "p/t.clio"
adversary = ["A"]
protected = ["S"]
inputs = ["⟨S | S | True⟩ 0", "⟨S | S | True⟩ 1"]
j = 2
"#;
        let path = dir.path().join("cta.toml");
        fs::write(&path, toml).unwrap();
        let v = load_cta_instances(&path, &RealProvider, 1, Some(50)).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].trials, 50);
        assert!(v[0].problems().is_empty(), "{:?}", v[0].problems());
        fs::write(&path, toml.replace("j = 2", "j = 2\nbogus = 1")).unwrap();
        assert!(matches!(
            load_cta_instances(&path, &RealProvider, 1, None),
            Err(InstanceError::Format { .. })
        ));
    }
}
