use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn clio(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clio")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn program(rel: &str) -> String {
    repo().join("programs").join(rel).to_string_lossy().into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn keygen(dir: &Path, names: &[&str], seed: &str) -> PathBuf {
    let out = dir.join("keys.txt");
    let mut args = vec!["keygen", "--seed", seed, "-o", s(&out)];
    args.extend_from_slice(names);
    let o = clio(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

#[test]
fn keygen_writes_one_record_per_principal() {
    let dir = tempfile::tempdir().unwrap();
    let first = fs::read_to_string(keygen(dir.path(), &["C", "P", "IRS"], "1")).unwrap();
    assert_eq!(first.lines().filter(|l| !l.trim().is_empty()).count(), 3);
    let second = fs::read_to_string(keygen(dir.path(), &["C", "P", "IRS"], "2")).unwrap();
    assert_ne!(first, second);
    let again = fs::read_to_string(keygen(dir.path(), &["C", "P", "IRS"], "1")).unwrap();
    assert_eq!(first, again);
}

#[test]
fn keygen_without_seed_reports_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("k.txt");
    let o = clio(&["keygen", "-o", s(&out), "A"]);
    assert!(o.status.success());
    assert!(stderr(&o).contains("seed: "), "{}", stderr(&o));
}

#[test]
fn keygen_needs_principals() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("k.txt");
    assert_eq!(clio(&["keygen", "-o", s(&out)]).status.code(), Some(2));
}

#[test]
fn case_study_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let keys = keygen(dir.path(), &["C", "P", "IRS"], "11");
    let store = dir.path().join("store.clio");
    let stages = [("customer", "C", "21"), ("preparer", "P", "22"), ("irs", "IRS", "23")];
    let mut last = String::new();
    for (stage, me, seed) in stages {
        let o = clio(&[
            "run",
            &program(&format!("case/{stage}.clio")),
            "--keystore",
            s(&keys),
            "--as",
            me,
            "--store",
            s(&store),
            "--store-level",
            "True | True | S",
            "--label",
            &format!("True | {me} | False"),
            "--seed",
            seed,
        ]);
        assert!(o.status.success(), "{stage}: {}{}", stdout(&o), stderr(&o));
        last = stdout(&o);
    }
    assert!(last.lines().any(|l| l == "result: true"), "{last}");

    let raw = fs::read(&store).unwrap();
    assert!(!raw.windows(11).any(|w| w == b"123-45-6789"));

    let dump = clio(&["dump", "--store", s(&store), "--keystore", s(&keys), "--as", "IRS"]);
    assert!(dump.status.success(), "{}", stderr(&dump));
    let text = stdout(&dump);
    assert!(text.contains(r#"("Alice Smith", (85000, 17000))"#), "{text}");
    assert!(text.contains("taxpayer_info"), "{text}");

    let blind = clio(&["dump", "--store", s(&store)]);
    assert!(blind.status.success());
    assert!(!stdout(&blind).contains("Alice"), "{}", stdout(&blind));
}

#[test]
fn customer_cannot_read_the_return() {
    let dir = tempfile::tempdir().unwrap();
    let keys = keygen(dir.path(), &["C", "P", "IRS"], "31");
    let store = dir.path().join("store.clio");
    // No customer stage: the preparer stores a return built from its default.
    let o = clio(&[
        "run",
        &program("case/preparer.clio"),
        "--keystore",
        s(&keys),
        "--as",
        "P",
        "--store",
        s(&store),
        "--store-level",
        "True | True | S",
        "--label",
        "True | P | False",
        "--seed",
        "32",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let dump = stdout(&clio(&["dump", "--store", s(&store), "--keystore", s(&keys), "--as", "C"]));
    assert!(dump.contains("unreadable"), "{dump}");
}

#[test]
fn missing_authority_is_a_monitor_failure() {
    let dir = tempfile::tempdir().unwrap();
    let keys = keygen(dir.path(), &["C", "P", "IRS"], "41");
    // Acting as P, labeling customer data with integrity C is above the current label.
    let o = clio(&[
        "run",
        &program("case/customer.clio"),
        "--keystore",
        s(&keys),
        "--as",
        "P",
        "--store-level",
        "True | True | S",
        "--label",
        "True | P | False",
        "--seed",
        "42",
    ]);
    assert_eq!(o.status.code(), Some(5), "{}{}", stdout(&o), stderr(&o));
    assert!(stderr(&o).contains("label"), "{}", stderr(&o));
}

#[test]
fn dry_type_reports_the_type() {
    let o = clio(&["run", "--dry-type", &program("case/irs.clio")]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("Bool"), "{}", stdout(&o));
}

#[test]
fn parse_and_type_errors_have_their_own_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.clio");
    fs::write(&bad, "do { x <- ; }").unwrap();
    assert_eq!(clio(&["run", "--dry-type", s(&bad)]).status.code(), Some(3));
    fs::write(&bad, "return (1 + true)").unwrap();
    assert_eq!(clio(&["run", "--dry-type", s(&bad)]).status.code(), Some(4));
    assert_eq!(clio(&["run", s(&dir.path().join("nope.clio"))]).status.code(), Some(8));
}

#[test]
fn clearance_must_dominate_label() {
    let o = clio(&["run", &program("case/irs.clio"), "--label", "A | True | True", "--clearance", "True | True | True"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn empty_store_dumps_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("empty.clio");
    fs::write(&store, "").unwrap();
    let o = clio(&["dump", "--store", s(&store)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "");
    assert_eq!(clio(&["dump", "--store", s(&dir.path().join("missing"))]).status.code(), Some(8));
}

fn reduced_cta(dir: &Path) -> PathBuf {
    let path = dir.join("cta.toml");
    fs::write(
        &path,
        format!(
            r#"
[[instance]]
name = "store-secret"
program = "{}"
adversary = ["A"]
protected = ["S"]
inputs = ["⟨S | S | True⟩ 0", "⟨S | S | True⟩ 1"]
j = 2
"#,
            program("cta/store_secret.clio")
        ),
    )
    .unwrap();
    path
}

#[test]
fn cta_passes_with_real_and_fails_with_identity() {
    let dir = tempfile::tempdir().unwrap();
    let inst = reduced_cta(dir.path());
    let real = clio(&["game", "cta", s(&inst), "--trials", "30", "--seed", "5"]);
    assert!(real.status.success(), "{}{}", stdout(&real), stderr(&real));
    assert!(stdout(&real).contains("PASS"));
    let ident = clio(&["game", "cta", s(&inst), "--trials", "30", "--seed", "5", "--provider", "identity"]);
    assert_eq!(ident.status.code(), Some(1), "{}", stdout(&ident));
    assert!(stdout(&ident).contains("FAIL"));
}

#[test]
fn cta_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let inst = reduced_cta(dir.path());
    let o = clio(&["game", "cta", s(&inst), "--trials", "30", "--seed", "5", "--json"]);
    assert!(o.status.success());
    for line in stdout(&o).lines() {
        assert!(line.starts_with('{') && line.contains("\"advantage\""), "{line}");
    }
}

#[test]
fn cta_rejects_short_runs() {
    let dir = tempfile::tempdir().unwrap();
    let inst = reduced_cta(dir.path());
    fs::write(&inst, fs::read_to_string(&inst).unwrap().replace("j = 2", "j = 50")).unwrap();
    let o = clio(&["game", "cta", s(&inst), "--trials", "30", "--seed", "5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("low steps"), "{}", stderr(&o));
}

#[test]
fn forgery_suite_passes() {
    let inst = repo().join("instances/forgery.toml");
    let o = clio(&["game", "forgery", s(&inst), "--trials", "10", "--seed", "3"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    assert!(!stdout(&o).contains("FAIL"));
}
