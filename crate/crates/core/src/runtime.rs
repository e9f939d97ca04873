//! Small-step monitor over configurations `⟨lcur, ccur, t⟩`.
//!
//! Evaluation is call-by-name. Pure redexes (application, `fix`, `if`,
//! projections, arithmetic) are reduced at the head of the term; monadic
//! forms step the configuration and may emit one store event per step.

use std::fmt;

use crate::calculus::{BinOp, GroundValue, Labeled, Lit, Term, Type};
use crate::label::{component_flow, Component, Label};

/// Steps allowed inside one high section before giving up.
pub const DEFAULT_HIGH_BUDGET: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Config {
    pub lcur: Label,
    pub ccur: Label,
    pub term: Term,
}

impl Config {
    pub fn new(lcur: Label, ccur: Label, term: Term) -> Self {
        Config { lcur, ccur, term }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self.term, Term::Lio(_))
    }

    /// The result of a finished computation.
    pub fn result(&self) -> Option<&Term> {
        match &self.term {
            Term::Lio(t) => Some(t),
            _ => None,
        }
    }
}

impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "⟨{}; {}; {}⟩", self.lcur, self.ccur, self.term)
    }
}

pub fn is_low_config(c: &Config, store_level: &Label) -> bool {
    c.lcur.can_flow_to(store_level)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StoreEvent {
    Skip,
    Store { key: GroundValue, value: Labeled },
    Fetch { key: GroundValue, value: Labeled },
    Missing { key: GroundValue },
}

impl StoreEvent {
    pub fn is_skip(&self) -> bool {
        matches!(self, StoreEvent::Skip)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FetchAnswer {
    Found(Labeled),
    Missing,
}

pub type BridgeError = Box<dyn std::error::Error + Send + Sync>;

/// The store side of store and fetch steps.
pub trait StoreBridge {
    fn on_store(&mut self, key: &GroundValue, value: &Labeled) -> Result<(), BridgeError>;
    fn on_fetch(&mut self, key: &GroundValue, default: &Labeled, ty: &Type) -> Result<FetchAnswer, BridgeError>;
}

/// Discards stores and answers every fetch with `Missing`.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullBridge;

impl StoreBridge for NullBridge {
    fn on_store(&mut self, _: &GroundValue, _: &Labeled) -> Result<(), BridgeError> {
        Ok(())
    }

    fn on_fetch(&mut self, _: &GroundValue, _: &Labeled, _: &Type) -> Result<FetchAnswer, BridgeError> {
        Ok(FetchAnswer::Missing)
    }
}

/// The label-check premises enforced by the monitor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Premise {
    /// `label l v`: lcur ⊑ l
    LabelAboveCurrent,
    /// `label l v`: l ⊑ ccur
    LabelBelowClearance,
    /// `unlabel ⟨l⟩v`: lcur ⊔ l ⊑ ccur
    UnlabelBelowClearance,
    /// `toLabeled l t`: lcur ⊑ l
    ToLabeledAboveCurrent,
    /// `toLabeled l t`: l ⊑ ccur
    ToLabeledBelowClearance,
    /// closing a compartment: lcur ⊑ target
    ResetWithinTarget,
    /// `store k ⟨l⟩v`: lcur ⊑ ℓ
    StoreBelowStoreLevel,
    /// `store k ⟨l⟩v`: lcur ⊑ l
    StoreLabelAboveCurrent,
    /// `fetch k ⟨ld⟩vd`: ℓ.avail ⇒ ld.avail
    FetchAvailability,
}

impl Premise {
    pub fn rule(self) -> &'static str {
        match self {
            Premise::LabelAboveCurrent | Premise::LabelBelowClearance => "label",
            Premise::UnlabelBelowClearance => "unlabel",
            Premise::ToLabeledAboveCurrent | Premise::ToLabeledBelowClearance => "toLabeled",
            Premise::ResetWithinTarget => "reset",
            Premise::StoreBelowStoreLevel | Premise::StoreLabelAboveCurrent => "store",
            Premise::FetchAvailability => "fetch",
        }
    }

    pub fn formula(self) -> &'static str {
        match self {
            Premise::LabelAboveCurrent | Premise::ToLabeledAboveCurrent | Premise::StoreLabelAboveCurrent => {
                "lcur ⊑ l"
            }
            Premise::LabelBelowClearance | Premise::ToLabeledBelowClearance => "l ⊑ ccur",
            Premise::UnlabelBelowClearance => "lcur ⊔ l ⊑ ccur",
            Premise::ResetWithinTarget => "lcur ⊑ target",
            Premise::StoreBelowStoreLevel => "lcur ⊑ ℓ",
            Premise::FetchAvailability => "ℓ.avail ⇒ ld.avail",
        }
    }
}

impl fmt::Display for Premise {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.rule(), self.formula())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("monitor failure ({premise}) with {left} against {right}")]
pub struct MonitorFailure {
    pub premise: Premise,
    pub left: Label,
    pub right: Label,
}

#[derive(Debug, thiserror::Error)]
pub enum RuntimeError {
    #[error(transparent)]
    Monitor(Box<MonitorFailure>),
    #[error("stuck: {0}")]
    Stuck(String),
    #[error("store error: {0}")]
    Store(BridgeError),
    #[error("step budget exhausted after {0} steps")]
    Budget(usize),
    #[error("configuration already terminated")]
    Terminated,
}

impl RuntimeError {
    pub fn monitor(&self) -> Option<&MonitorFailure> {
        match self {
            RuntimeError::Monitor(m) => Some(m),
            _ => None,
        }
    }
}

fn require(ok: bool, premise: Premise, left: &Label, right: &Label) -> Result<(), RuntimeError> {
    if ok {
        Ok(())
    } else {
        Err(RuntimeError::Monitor(Box::new(MonitorFailure {
            premise,
            left: left.clone(),
            right: right.clone(),
        })))
    }
}

fn stuck<T>(t: &Term, what: &str) -> Result<T, RuntimeError> {
    let mut s = t.to_string();
    if s.chars().count() > 80 {
        s = s.chars().take(77).collect::<String>() + "...";
    }
    Err(RuntimeError::Stuck(format!("{what}: {s}")))
}

/// Is `t` a redex (or contains one at its head) for the pure fragment?
fn is_pure_redex(t: &Term) -> bool {
    matches!(
        t,
        Term::Var(_) | Term::App(..) | Term::Fix(_) | Term::If(..) | Term::Fst(_) | Term::Snd(_) | Term::Prim(..)
    )
}

/// One call-by-name reduction at the head of a pure term.
pub fn pure_step(t: &Term) -> Result<Term, RuntimeError> {
    match t {
        Term::App(f, a) => match &**f {
            Term::Lam { var, body, .. } => Ok(body.subst(var, a)),
            f if is_pure_redex(f) => Ok(Term::App(Box::new(pure_step(f)?), a.clone())),
            _ => stuck(t, "application of a non-function"),
        },
        Term::Fix(f) => match &**f {
            Term::Lam { var, body, .. } => Ok(body.subst(var, t)),
            f if is_pure_redex(f) => Ok(Term::Fix(Box::new(pure_step(f)?))),
            _ => stuck(t, "fix of a non-function"),
        },
        Term::If(c, a, b) => match &**c {
            Term::Lit(Lit::Bool(true)) => Ok((**a).clone()),
            Term::Lit(Lit::Bool(false)) => Ok((**b).clone()),
            c if is_pure_redex(c) => Ok(Term::If(Box::new(pure_step(c)?), a.clone(), b.clone())),
            _ => stuck(t, "non-boolean condition"),
        },
        Term::Fst(p) | Term::Snd(p) => match &**p {
            Term::Pair(a, b) => Ok(if matches!(t, Term::Fst(_)) { (**a).clone() } else { (**b).clone() }),
            p if is_pure_redex(p) => {
                let p = Box::new(pure_step(p)?);
                Ok(if matches!(t, Term::Fst(_)) { Term::Fst(p) } else { Term::Snd(p) })
            }
            _ => stuck(t, "projection from a non-pair"),
        },
        Term::Prim(op, a, b) => match (&**a, &**b) {
            (Term::Lit(Lit::Int(x)), Term::Lit(Lit::Int(y))) => Ok(prim(*op, *x, *y)),
            (Term::Lit(Lit::Int(_)), b) if is_pure_redex(b) => Ok(Term::Prim(*op, a.clone(), Box::new(pure_step(b)?))),
            (a, _) if is_pure_redex(a) => Ok(Term::Prim(*op, Box::new(pure_step(a)?), b.clone())),
            _ => stuck(t, "arithmetic on non-integers"),
        },
        Term::Var(x) => stuck(t, &format!("free variable `{x}`")),
        _ => stuck(t, "no pure reduction"),
    }
}

fn prim(op: BinOp, x: i64, y: i64) -> Term {
    match op {
        BinOp::Add => Term::int(x.wrapping_add(y)),
        BinOp::Sub => Term::int(x.wrapping_sub(y)),
        BinOp::Mul => Term::int(x.wrapping_mul(y)),
        BinOp::Div => Term::int(if y == 0 { 0 } else { x.wrapping_div(y) }),
        BinOp::Eq => Term::bool(x == y),
        BinOp::Lt => Term::bool(x < y),
        BinOp::Le => Term::bool(x <= y),
    }
}

/// One step towards a fully evaluated ground value; pairs are evaluated
/// left to right. Returns `None` once `t` is ground.
fn ground_step(t: &Term) -> Result<Option<Term>, RuntimeError> {
    match t {
        Term::Lit(_) => Ok(None),
        Term::Pair(a, b) => {
            if let Some(a2) = ground_step(a)? {
                return Ok(Some(Term::Pair(Box::new(a2), b.clone())));
            }
            if let Some(b2) = ground_step(b)? {
                return Ok(Some(Term::Pair(a.clone(), Box::new(b2))));
            }
            Ok(None)
        }
        t if is_pure_redex(t) => Ok(Some(pure_step(t)?)),
        _ => stuck(t, "expected a ground value"),
    }
}

/// Reduce a pure term to a ground value, for display and oracles.
pub fn normalize_ground(t: &Term, fuel: usize) -> Result<GroundValue, RuntimeError> {
    let mut t = t.clone();
    for _ in 0..fuel {
        match ground_step(&t)? {
            Some(next) => t = next,
            None => return Ok(t.as_ground().expect("ground_step stops at ground values")),
        }
    }
    Err(RuntimeError::Budget(fuel))
}

/// Reduce a pure term to weak head normal form.
pub fn normalize_whnf(t: &Term, fuel: usize) -> Result<Term, RuntimeError> {
    let mut t = t.clone();
    for _ in 0..fuel {
        if !is_pure_redex(&t) {
            return Ok(t);
        }
        t = pure_step(&t)?;
    }
    Err(RuntimeError::Budget(fuel))
}

enum Operand<T> {
    Ready(T),
    Stepped(Term),
}

fn label_operand(t: &Term) -> Result<Operand<Label>, RuntimeError> {
    match t {
        Term::Lit(Lit::Label(l)) => Ok(Operand::Ready(l.clone())),
        t if is_pure_redex(t) => Ok(Operand::Stepped(pure_step(t)?)),
        _ => stuck(t, "expected a label"),
    }
}

fn labeled_operand(t: &Term) -> Result<Operand<Labeled>, RuntimeError> {
    match t {
        Term::Labeled(lv) => Ok(Operand::Ready(lv.clone())),
        t if is_pure_redex(t) => Ok(Operand::Stepped(pure_step(t)?)),
        _ => stuck(t, "expected a labeled value"),
    }
}

fn ground_operand(t: &Term) -> Result<Operand<GroundValue>, RuntimeError> {
    match ground_step(t)? {
        None => Ok(Operand::Ready(t.as_ground().expect("ground"))),
        Some(next) => Ok(Operand::Stepped(next)),
    }
}

/// Take one step of `c`.
pub fn step(c: &Config, bridge: &mut dyn StoreBridge, store_level: &Label) -> Result<(Config, StoreEvent), RuntimeError> {
    let mut lcur = c.lcur.clone();
    let mut ccur = c.ccur.clone();
    let (term, ev) = step_term(&c.term, &mut lcur, &mut ccur, bridge, store_level)?;
    Ok((Config { lcur, ccur, term }, ev))
}

fn step_term(
    t: &Term,
    lcur: &mut Label,
    ccur: &mut Label,
    bridge: &mut dyn StoreBridge,
    store_level: &Label,
) -> Result<(Term, StoreEvent), RuntimeError> {
    use Operand::*;
    let skip = |t: Term| Ok((t, StoreEvent::Skip));
    match t {
        t if is_pure_redex(t) => skip(pure_step(t)?),
        Term::Lio(_) => Err(RuntimeError::Terminated),
        Term::Return(a) => skip(Term::Lio(a.clone())),
        Term::Bind(m, k) => match &**m {
            Term::Lio(v) => skip(Term::App(k.clone(), v.clone())),
            _ => {
                let (m2, ev) = step_term(m, lcur, ccur, bridge, store_level)?;
                Ok((Term::Bind(Box::new(m2), k.clone()), ev))
            }
        },
        Term::Label(l, v) => {
            let l = match label_operand(l)? {
                Stepped(l2) => return skip(Term::Label(Box::new(l2), v.clone())),
                Ready(l) => l,
            };
            let v = match ground_operand(v)? {
                Stepped(v2) => return skip(Term::label(Term::label_lit(l), v2)),
                Ready(v) => v,
            };
            require(lcur.can_flow_to(&l), Premise::LabelAboveCurrent, lcur, &l)?;
            require(l.can_flow_to(ccur), Premise::LabelBelowClearance, &l, ccur)?;
            skip(Term::Lio(Box::new(Term::labeled(l, v))))
        }
        Term::Unlabel(lv) => {
            let lv = match labeled_operand(lv)? {
                Stepped(t2) => return skip(Term::unlabel(t2)),
                Ready(lv) => lv,
            };
            let raised = lcur.join(&lv.label);
            require(raised.can_flow_to(ccur), Premise::UnlabelBelowClearance, &raised, ccur)?;
            *lcur = raised;
            skip(Term::Lio(Box::new(Term::from_ground(&lv.value))))
        }
        Term::GetLabel => skip(Term::Lio(Box::new(Term::label_lit(lcur.clone())))),
        Term::GetClearance => skip(Term::Lio(Box::new(Term::label_lit(ccur.clone())))),
        Term::ToLabeled(l, body) => {
            let l = match label_operand(l)? {
                Stepped(l2) => return skip(Term::ToLabeled(Box::new(l2), body.clone())),
                Ready(l) => l,
            };
            require(lcur.can_flow_to(&l), Premise::ToLabeledAboveCurrent, lcur, &l)?;
            require(l.can_flow_to(ccur), Premise::ToLabeledBelowClearance, &l, ccur)?;
            skip(Term::Reset {
                saved_label: lcur.clone(),
                saved_clearance: ccur.clone(),
                target: l,
                body: body.clone(),
            })
        }
        Term::Reset {
            saved_label,
            saved_clearance,
            target,
            body,
        } => match &**body {
            Term::Lio(v) => {
                // Force the result while lcur is still raised, so no thunk
                // over unlabeled data leaves the compartment.
                if let Stepped(v2) = ground_operand(v)? {
                    return skip(Term::Reset {
                        saved_label: saved_label.clone(),
                        saved_clearance: saved_clearance.clone(),
                        target: target.clone(),
                        body: Box::new(Term::Lio(Box::new(v2))),
                    });
                }
                require(lcur.can_flow_to(target), Premise::ResetWithinTarget, lcur, target)?;
                *lcur = saved_label.clone();
                *ccur = saved_clearance.clone();
                skip(Term::label(Term::label_lit(target.clone()), (**v).clone()))
            }
            _ => {
                let (b2, ev) = step_term(body, lcur, ccur, bridge, store_level)?;
                Ok((
                    Term::Reset {
                        saved_label: saved_label.clone(),
                        saved_clearance: saved_clearance.clone(),
                        target: target.clone(),
                        body: Box::new(b2),
                    },
                    ev,
                ))
            }
        },
        Term::Store(k, v) => {
            let key = match ground_operand(k)? {
                Stepped(k2) => return skip(Term::store(k2, (**v).clone())),
                Ready(key) => key,
            };
            let lv = match labeled_operand(v)? {
                Stepped(v2) => return skip(Term::store(Term::from_ground(&key), v2)),
                Ready(lv) => lv,
            };
            require(lcur.can_flow_to(store_level), Premise::StoreBelowStoreLevel, lcur, store_level)?;
            require(lcur.can_flow_to(&lv.label), Premise::StoreLabelAboveCurrent, lcur, &lv.label)?;
            bridge.on_store(&key, &lv).map_err(RuntimeError::Store)?;
            Ok((Term::Lio(Box::new(Term::unit())), StoreEvent::Store { key, value: lv }))
        }
        Term::Fetch(ty, k, d) => {
            let key = match ground_operand(k)? {
                Stepped(k2) => return skip(Term::fetch(ty.clone(), k2, (**d).clone())),
                Ready(key) => key,
            };
            let default = match labeled_operand(d)? {
                Stepped(d2) => return skip(Term::fetch(ty.clone(), Term::from_ground(&key), d2)),
                Ready(lv) => lv,
            };
            require(
                component_flow(Component::Avail, &store_level.avail, &default.label.avail),
                Premise::FetchAvailability,
                store_level,
                &default.label,
            )?;
            match bridge.on_fetch(&key, &default, ty).map_err(RuntimeError::Store)? {
                FetchAnswer::Found(lv) => {
                    let accepted = lv.label.can_flow_to(&default.label) && lv.value.type_of() == *ty;
                    let result = if accepted { lv.clone() } else { default };
                    Ok((
                        Term::Lio(Box::new(Term::Labeled(result))),
                        StoreEvent::Fetch { key, value: lv },
                    ))
                }
                FetchAnswer::Missing => Ok((Term::Lio(Box::new(Term::Labeled(default))), StoreEvent::Missing { key })),
            }
        }
        _ => stuck(t, "not a computation"),
    }
}

/// Run to termination or until `max_steps` steps have been taken.
pub fn run(
    c: &Config,
    bridge: &mut dyn StoreBridge,
    store_level: &Label,
    max_steps: usize,
) -> Result<(Config, Vec<StoreEvent>), RuntimeError> {
    let mut c = c.clone();
    let mut trace = Vec::new();
    let mut steps = 0;
    while !c.is_terminal() {
        if steps >= max_steps {
            return Err(RuntimeError::Budget(steps));
        }
        let (next, ev) = step(&c, bridge, store_level)?;
        trace.push(ev);
        c = next;
        steps += 1;
    }
    Ok((c, trace))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LowStepEnd {
    /// Reached a low configuration (possibly terminal).
    Low,
    /// Terminated while the current label was above the store level.
    TerminatedHigh,
}

#[derive(Debug, Clone)]
pub struct LowStep {
    pub config: Config,
    pub events: Vec<StoreEvent>,
    pub steps: usize,
    pub end: LowStepEnd,
}

/// One low step: a single step from a low configuration, followed by the
/// maximal run of high steps back to a low (or terminal) configuration.
pub fn run_low_step(
    c: &Config,
    bridge: &mut dyn StoreBridge,
    store_level: &Label,
    high_budget: usize,
) -> Result<LowStep, RuntimeError> {
    if c.is_terminal() {
        return Err(RuntimeError::Terminated);
    }
    let (mut c, ev) = step(c, bridge, store_level)?;
    let mut events = vec![ev];
    let mut steps = 1;
    while !is_low_config(&c, store_level) {
        if c.is_terminal() {
            return Ok(LowStep {
                config: c,
                events,
                steps,
                end: LowStepEnd::TerminatedHigh,
            });
        }
        if steps > high_budget {
            return Err(RuntimeError::Budget(steps));
        }
        let (next, ev) = step(&c, bridge, store_level)?;
        events.push(ev);
        c = next;
        steps += 1;
    }
    Ok(LowStep {
        config: c,
        events,
        steps,
        end: LowStepEnd::Low,
    })
}

/// Number of low steps until termination.
pub fn count_low_steps(
    c: &Config,
    bridge: &mut dyn StoreBridge,
    store_level: &Label,
    max_low_steps: usize,
) -> Result<usize, RuntimeError> {
    let mut c = c.clone();
    let mut n = 0;
    while !c.is_terminal() && is_low_config(&c, store_level) {
        if n >= max_low_steps {
            return Err(RuntimeError::Budget(n));
        }
        let ls = run_low_step(&c, bridge, store_level, DEFAULT_HIGH_BUDGET)?;
        c = ls.config;
        n += 1;
    }
    Ok(n)
}
