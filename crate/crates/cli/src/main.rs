use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::io::{self, Write};
use std::process::ExitCode;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use clap::{Args, Parser, Subcommand};
use rand::RngCore;

use clio_core::backend::{load_store, save_store, Backend, FileBackend, MemoryBackend};
use clio_core::calculus::{parse_term, print_term, type_of, Term, Type};
use clio_core::crypto::{hex8, CryptoProvider, ProviderKind};
use clio_core::harness::{
    builtin_distinguishers, load_cta_instances, load_forgery_instances, parse_strategy, run_cta, run_forgery, Report,
};
use clio_core::label::{parse_label, Label, Principal};
use clio_core::runtime::{normalize_ground, Config, RuntimeError};
use clio_core::store::{deserialize_any, Keystore, RealError, RealInteraction, RealRuntime, RealStore};

/// `println!` that exits quietly when stdout is a closed pipe.
macro_rules! say {
    ($($arg:tt)*) => {
        if let Err(e) = writeln!(io::stdout(), $($arg)*) {
            if e.kind() == io::ErrorKind::BrokenPipe {
                std::process::exit(0);
            }
            panic!("writing to stdout: {e}");
        }
    };
}

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  game failed
  2  usage error or invalid instance
  3  parse error (program, label, keystore, store file)
  4  type error
  5  monitor failure
  6  step budget exhausted
  7  store or crypto failure
  8  I/O error";

const NORMALIZE_FUEL: usize = 1_000_000;

mod code {
    pub const GAME: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const PARSE: u8 = 3;
    pub const TYPE: u8 = 4;
    pub const MONITOR: u8 = 5;
    pub const BUDGET: u8 = 6;
    pub const STORE: u8 = 7;
    pub const IO: u8 = 8;
}

#[derive(Parser)]
#[command(name = "clio", version, about = "Run Clio programs against a cryptographically protected store")]
#[command(after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate key pairs for principals and write a keystore file.
    Keygen(KeygenArgs),
    /// Run a program under the cryptographic store semantics.
    Run(RunArgs),
    /// List store contents, decrypting what the keystore allows.
    Dump(DumpArgs),
    /// Run a security game over an instance file.
    #[command(subcommand)]
    Game(GameCmd),
}

#[derive(Args)]
struct Common {
    /// Seed for every random choice; drawn from the OS and printed when absent.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "real", value_parser = parse_provider)]
    provider: ProviderKind,
}

#[derive(Args)]
struct KeygenArgs {
    #[arg(required = true)]
    principals: Vec<String>,
    /// Keystore file to write.
    #[arg(short, long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct KeystoreArgs {
    #[arg(long)]
    keystore: Option<PathBuf>,
    /// Use private keys of these principals only; other entries act as
    /// public keys. Repeatable.
    #[arg(long = "as", value_name = "PRINCIPAL")]
    act_as: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    program: PathBuf,
    #[command(flatten)]
    keys: KeystoreArgs,
    /// Store file; an in-memory store is used when absent.
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long, default_value = "True | True | True")]
    store_level: String,
    /// Initial current label; defaults to the keystore's start label.
    #[arg(long)]
    label: Option<String>,
    /// Initial clearance; defaults to the keystore's clearance.
    #[arg(long)]
    clearance: Option<String>,
    /// Maximum number of low steps.
    #[arg(long, default_value_t = 100_000)]
    j: usize,
    /// Adversary strategy applied before each low step.
    #[arg(long, default_value = "skip")]
    strategy: String,
    /// Print full base64 ciphertexts instead of digests.
    #[arg(long)]
    raw: bool,
    /// Only parse and typecheck.
    #[arg(long)]
    dry_type: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct DumpArgs {
    #[arg(long)]
    store: PathBuf,
    #[command(flatten)]
    keys: KeystoreArgs,
    #[arg(long, default_value = "real", value_parser = parse_provider)]
    provider: ProviderKind,
    #[arg(long)]
    raw: bool,
}

#[derive(Subcommand)]
enum GameCmd {
    /// Chosen-term indistinguishability game.
    Cta(GameArgs),
    /// Leveraged-forgery game.
    Forgery(GameArgs),
}

#[derive(Args)]
struct GameArgs {
    instances: PathBuf,
    /// Trials per branch (cta) or per adversary (forgery), overriding the file.
    #[arg(long)]
    trials: Option<usize>,
    /// Print one JSON record per report instead of text.
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    common: Common,
}

fn parse_provider(s: &str) -> Result<ProviderKind, String> {
    s.parse()
}

struct Failure {
    code: u8,
    msg: String,
}

fn fail(code: u8, msg: impl Display) -> Failure {
    Failure {
        code,
        msg: msg.to_string(),
    }
}

type Res<T> = Result<T, Failure>;

fn seed_of(common: &Common) -> u64 {
    common.seed.unwrap_or_else(|| {
        let s = rand::rngs::OsRng.next_u64();
        eprintln!("seed: {s}");
        s
    })
}

fn read(path: &Path) -> Res<String> {
    fs::read_to_string(path).map_err(|e| fail(code::IO, format!("{}: {e}", path.display())))
}

fn label_arg(what: &str, text: &str) -> Res<Label> {
    parse_label(text).map_err(|e| fail(code::PARSE, format!("{what}: {e}")))
}

fn load_keystore(args: &KeystoreArgs) -> Res<Option<Keystore>> {
    let Some(path) = &args.keystore else {
        if !args.act_as.is_empty() {
            return Err(fail(code::USAGE, "--as needs --keystore"));
        }
        return Ok(None);
    };
    let mut ks = Keystore::from_wire(&read(path)?).map_err(|e| fail(code::PARSE, format!("{}: {e}", path.display())))?;
    if !args.act_as.is_empty() {
        let keep = args
            .act_as
            .iter()
            .map(|n| Principal::new(n.as_str()).map_err(|e| fail(code::USAGE, e)))
            .collect::<Res<Vec<_>>>()?;
        for p in &keep {
            if !ks.owns(p) {
                return Err(fail(code::USAGE, format!("keystore holds no private key for {p}")));
            }
        }
        let drop: Vec<Principal> = ks.owned().filter(|p| !keep.contains(p)).cloned().collect();
        for p in &drop {
            ks = ks.without_authority_of(p);
        }
    }
    Ok(Some(ks))
}

fn open_backend(path: Option<&Path>) -> Res<Box<dyn Backend>> {
    match path {
        Some(p) => Ok(Box::new(FileBackend::open(p).map_err(|e| fail(code::IO, e))?)),
        None => Ok(Box::new(MemoryBackend::new())),
    }
}

fn bytes_text(bytes: &[u8], raw: bool) -> String {
    if raw {
        B64.encode(bytes)
    } else {
        hex8(bytes)
    }
}

fn interaction_line(i: &RealInteraction, raw: bool) -> String {
    match i {
        RealInteraction::StoreVal { key, label, bytes } => format!(
            "store {} ⟨{label}⟩ {} ({} bytes)",
            Term::from_ground(key),
            bytes_text(bytes, raw),
            bytes.len()
        ),
        RealInteraction::StoreCk(c, ck) => format!("store-ck {c} {}", bytes_text(&ck.public, raw)),
        RealInteraction::Skip => "skip".into(),
    }
}

fn keygen(args: KeygenArgs) -> Res<()> {
    let principals = args
        .principals
        .iter()
        .map(|n| Principal::new(n.as_str()).map_err(|e| fail(code::USAGE, e)))
        .collect::<Res<Vec<_>>>()?;
    let seed = seed_of(&args.common);
    let mut rng = <rand_chacha::ChaCha20Rng as rand::SeedableRng>::seed_from_u64(seed);
    let ks = Keystore::generate(&principals, args.common.provider.provider(), &mut rng);
    fs::write(&args.out, ks.to_wire()).map_err(|e| fail(code::IO, format!("{}: {e}", args.out.display())))?;
    say!("{}", ks.authority());
    Ok(())
}

fn real_error(e: RealError) -> Failure {
    let c = match &e {
        RealError::Runtime(RuntimeError::Monitor(_)) | RealError::Runtime(RuntimeError::Stuck(_)) => code::MONITOR,
        RealError::Runtime(RuntimeError::Budget(_)) | RealError::Shortfall { .. } | RealError::NotLow => code::BUDGET,
        RealError::Runtime(RuntimeError::Terminated) => code::MONITOR,
        RealError::Runtime(RuntimeError::Store(_)) | RealError::StrategyCap { .. } => code::STORE,
    };
    fail(c, e)
}

fn run(args: RunArgs) -> Res<()> {
    let src = read(&args.program)?;
    let term = parse_term(&src).map_err(|e| fail(code::PARSE, format!("{}:{e}", args.program.display())))?;
    let ty = type_of(&term).map_err(|e| fail(code::TYPE, format!("{}: {e}", args.program.display())))?;
    if !matches!(ty, Type::Clio(_)) {
        return Err(fail(code::TYPE, format!("program has type {ty}, expected a computation")));
    }
    if args.dry_type {
        say!("{ty}");
        return Ok(());
    }
    let strategy = parse_strategy(&args.strategy).map_err(|e| fail(code::USAGE, e))?;
    let ks = load_keystore(&args.keys)?.unwrap_or_default();
    let store_level = label_arg("--store-level", &args.store_level)?;
    let lcur = match &args.label {
        Some(t) => label_arg("--label", t)?,
        None => ks.start_label(),
    };
    let ccur = match &args.clearance {
        Some(t) => label_arg("--clearance", t)?,
        None => ks.clearance(),
    };
    if !lcur.can_flow_to(&ccur) {
        return Err(fail(
            code::USAGE,
            format!("initial label {lcur} does not flow to clearance {ccur}"),
        ));
    }
    let backend = open_backend(args.store.as_deref())?;
    let base = load_store(backend.as_ref()).map_err(|e| fail(code::PARSE, e))?;
    let seed = seed_of(&args.common);
    let mut rt = RealRuntime::new(Config::new(lcur, ccur, term), store_level, ks, args.common.provider.provider(), seed)
        .with_store(base);
    let outcome = rt.run(strategy.as_ref(), args.j);
    // Writes already made are kept even when the run fails.
    save_store(backend.as_ref(), rt.store()).map_err(|e| fail(code::IO, e))?;
    let steps = outcome.map_err(|e| {
        print_history(&rt, args.raw);
        real_error(e)
    })?;
    let last = steps.last().map(|s| &s.config);
    match last.and_then(Config::result) {
        // Call-by-name leaves the result as a thunk; show its value.
        Some(t) => match normalize_ground(t, NORMALIZE_FUEL) {
            Ok(v) => say!("result: {}", Term::from_ground(&v)),
            Err(_) => say!("result: {}", print_term(t)),
        },
        None => say!("result: (stopped above the store level)"),
    }
    if let Some(c) = last {
        say!("lcur: {}", c.lcur);
        say!("ccur: {}", c.ccur);
    }
    say!("low steps: {}", steps.len());
    print_history(&rt, args.raw);
    Ok(())
}

fn print_history(rt: &RealRuntime, raw: bool) {
    say!("history:");
    for i in rt.history() {
        say!("  {}", interaction_line(i, raw));
    }
}

fn dump(args: DumpArgs) -> Res<()> {
    if !args.store.exists() {
        return Err(fail(code::IO, format!("{}: no such store file", args.store.display())));
    }
    let backend = open_backend(Some(&args.store))?;
    let store: RealStore = load_store(backend.as_ref()).map_err(|e| fail(code::PARSE, e))?;
    let ks = load_keystore(&args.keys)?;
    let provider: &dyn CryptoProvider = args.provider.provider();
    for (c, ck) in store.category_keys() {
        say!("ck {c} {}", bytes_text(&ck.public, args.raw));
    }
    for (k, e) in store.entries() {
        say!(
            "{} ⟨{}⟩ {} ({} bytes)",
            Term::from_ground(k),
            e.label,
            bytes_text(&e.bytes, args.raw),
            e.bytes.len()
        );
        if let Some(ks) = &ks {
            match deserialize_any(&store, &e.label, &e.bytes, ks, provider) {
                Ok(d) if &d.key == k => say!("  = {} (version {})", Term::from_ground(&d.value), d.version),
                Ok(d) => say!(
                    "  = {} (version {}, recorded under key {})",
                    Term::from_ground(&d.value),
                    d.version,
                    Term::from_ground(&d.key)
                ),
                Err(_) => say!("  = (unreadable with this keystore)"),
            }
        }
    }
    Ok(())
}

fn print_reports(reports: &[Report], json: bool) {
    for r in reports {
        if json {
            say!("{}", r.to_json());
        } else {
            say!("{r}");
        }
    }
}

fn instance_error(e: clio_core::harness::InstanceError) -> Failure {
    use clio_core::harness::InstanceError as E;
    let c = match &e {
        E::Io { .. } => code::IO,
        E::Format { .. } => code::PARSE,
        E::Instance { .. } => code::USAGE,
    };
    fail(c, e)
}

fn game_cta(args: GameArgs) -> Res<bool> {
    let seed = seed_of(&args.common);
    let provider = args.common.provider.provider();
    let instances = load_cta_instances(&args.instances, provider, seed, args.trials).map_err(instance_error)?;
    let problems: Vec<String> = instances
        .iter()
        .flat_map(|i| i.problems().into_iter().map(move |p| format!("{}: {p}", i.name)))
        .collect();
    if !problems.is_empty() {
        return Err(fail(code::USAGE, format!("invalid instances:\n  {}", problems.join("\n  "))));
    }
    let mut ok = true;
    for inst in &instances {
        let report = run_cta(inst, &builtin_distinguishers()).map_err(|e| fail(code::STORE, e))?;
        print_reports(&report.reports(), args.json);
        ok &= report.pass();
    }
    Ok(ok)
}

fn game_forgery(args: GameArgs) -> Res<bool> {
    let seed = seed_of(&args.common);
    let provider = args.common.provider.provider();
    let instances = load_forgery_instances(&args.instances, provider, seed, args.trials).map_err(instance_error)?;
    let problems: Vec<String> = instances
        .iter()
        .flat_map(|i| i.problems().into_iter().map(move |p| format!("{}: {p}", i.name)))
        .collect();
    if !problems.is_empty() {
        return Err(fail(code::USAGE, format!("invalid instances:\n  {}", problems.join("\n  "))));
    }
    let mut ok = true;
    for inst in &instances {
        let report = run_forgery(inst).map_err(|e| fail(code::STORE, e))?;
        print_reports(&report.reports(), args.json);
        if !args.json && report.floor_violations() > 0 {
            say!("  {} floor violations in {}", report.floor_violations(), inst.name);
        }
        ok &= report.pass();
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Keygen(a) => keygen(a).map(|_| true),
        Cmd::Run(a) => run(a).map(|_| true),
        Cmd::Dump(a) => dump(a).map(|_| true),
        Cmd::Game(GameCmd::Cta(a)) => game_cta(a),
        Cmd::Game(GameCmd::Forgery(a)) => game_forgery(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(code::GAME),
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
