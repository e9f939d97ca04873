use std::fmt;

use crate::label::Label;

/// Types of the term language.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Type {
    Unit,
    Bool,
    Int,
    Text,
    Label,
    Pair(Box<Type>, Box<Type>),
    Fun(Box<Type>, Box<Type>),
    /// Labeled values only ever carry ground payloads.
    Labeled(Box<Type>),
    Clio(Box<Type>),
}

impl Type {
    pub fn pair(a: Type, b: Type) -> Type {
        Type::Pair(Box::new(a), Box::new(b))
    }

    pub fn fun(a: Type, b: Type) -> Type {
        Type::Fun(Box::new(a), Box::new(b))
    }

    pub fn labeled(a: Type) -> Type {
        Type::Labeled(Box::new(a))
    }

    pub fn clio(a: Type) -> Type {
        Type::Clio(Box::new(a))
    }

    /// Types inhabited only by ground values.
    pub fn is_ground(&self) -> bool {
        match self {
            Type::Unit | Type::Bool | Type::Int | Type::Text | Type::Label => true,
            Type::Pair(a, b) => a.is_ground() && b.is_ground(),
            Type::Fun(..) | Type::Labeled(_) | Type::Clio(_) => false,
        }
    }
}

/// Serializable values: everything except functions, computations and
/// labeled values.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GroundValue {
    Unit,
    Bool(bool),
    Int(i64),
    Text(String),
    Label(Label),
    Pair(Box<GroundValue>, Box<GroundValue>),
}

impl GroundValue {
    pub fn text(s: impl Into<String>) -> Self {
        GroundValue::Text(s.into())
    }

    pub fn pair(a: GroundValue, b: GroundValue) -> Self {
        GroundValue::Pair(Box::new(a), Box::new(b))
    }

    pub fn type_of(&self) -> Type {
        match self {
            GroundValue::Unit => Type::Unit,
            GroundValue::Bool(_) => Type::Bool,
            GroundValue::Int(_) => Type::Int,
            GroundValue::Text(_) => Type::Text,
            GroundValue::Label(_) => Type::Label,
            GroundValue::Pair(a, b) => Type::pair(a.type_of(), b.type_of()),
        }
    }
}

pub fn type_of_ground(v: &GroundValue) -> Type {
    v.type_of()
}

/// A labeled ground value `⟨l⟩v`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Labeled {
    pub label: Label,
    pub value: GroundValue,
}

impl Labeled {
    pub fn new(label: Label, value: GroundValue) -> Self {
        Labeled { label, value }
    }
}

impl fmt::Display for Labeled {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "⟨{}⟩ {}", self.label, Term::from_ground(&self.value))
    }
}

/// Literal leaves. Pairs are always built with [`Term::Pair`], so a ground
/// value has exactly one term representation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Lit {
    Unit,
    Bool(bool),
    Int(i64),
    Text(String),
    Label(Label),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    /// Integer division; division by zero yields zero.
    Div,
    Eq,
    Lt,
    Le,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Eq => "==",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Var(String),
    Lam {
        var: String,
        ty: Option<Type>,
        body: Box<Term>,
    },
    App(Box<Term>, Box<Term>),
    Fix(Box<Term>),
    If(Box<Term>, Box<Term>, Box<Term>),
    Pair(Box<Term>, Box<Term>),
    Fst(Box<Term>),
    Snd(Box<Term>),
    Lit(Lit),
    Prim(BinOp, Box<Term>, Box<Term>),
    /// `⟨l⟩v`; produced by evaluation, never by the parser.
    Labeled(Labeled),
    Return(Box<Term>),
    Bind(Box<Term>, Box<Term>),
    Label(Box<Term>, Box<Term>),
    Unlabel(Box<Term>),
    GetLabel,
    GetClearance,
    ToLabeled(Box<Term>, Box<Term>),
    Store(Box<Term>, Box<Term>),
    Fetch(Type, Box<Term>, Box<Term>),
    /// A finished computation; internal.
    Lio(Box<Term>),
    /// `toLabeled` compartment remembering the label and clearance to
    /// restore and the target label; internal.
    Reset {
        saved_label: Label,
        saved_clearance: Label,
        target: Label,
        body: Box<Term>,
    },
}

impl Term {
    pub fn var(name: impl Into<String>) -> Term {
        Term::Var(name.into())
    }

    pub fn lam(var: impl Into<String>, ty: Option<Type>, body: Term) -> Term {
        Term::Lam {
            var: var.into(),
            ty,
            body: Box::new(body),
        }
    }

    pub fn app(f: Term, a: Term) -> Term {
        Term::App(Box::new(f), Box::new(a))
    }

    pub fn int(n: i64) -> Term {
        Term::Lit(Lit::Int(n))
    }

    pub fn text(s: impl Into<String>) -> Term {
        Term::Lit(Lit::Text(s.into()))
    }

    pub fn bool(b: bool) -> Term {
        Term::Lit(Lit::Bool(b))
    }

    pub fn unit() -> Term {
        Term::Lit(Lit::Unit)
    }

    pub fn label_lit(l: Label) -> Term {
        Term::Lit(Lit::Label(l))
    }

    pub fn pair(a: Term, b: Term) -> Term {
        Term::Pair(Box::new(a), Box::new(b))
    }

    pub fn ret(t: Term) -> Term {
        Term::Return(Box::new(t))
    }

    pub fn bind(t: Term, k: Term) -> Term {
        Term::Bind(Box::new(t), Box::new(k))
    }

    pub fn label(l: Term, v: Term) -> Term {
        Term::Label(Box::new(l), Box::new(v))
    }

    pub fn unlabel(t: Term) -> Term {
        Term::Unlabel(Box::new(t))
    }

    pub fn to_labeled(l: Term, t: Term) -> Term {
        Term::ToLabeled(Box::new(l), Box::new(t))
    }

    pub fn store(k: Term, v: Term) -> Term {
        Term::Store(Box::new(k), Box::new(v))
    }

    pub fn fetch(ty: Type, k: Term, d: Term) -> Term {
        Term::Fetch(ty, Box::new(k), Box::new(d))
    }

    pub fn labeled(label: Label, value: GroundValue) -> Term {
        Term::Labeled(Labeled::new(label, value))
    }

    pub fn prim(op: BinOp, a: Term, b: Term) -> Term {
        Term::Prim(op, Box::new(a), Box::new(b))
    }

    pub fn from_ground(v: &GroundValue) -> Term {
        match v {
            GroundValue::Unit => Term::Lit(Lit::Unit),
            GroundValue::Bool(b) => Term::Lit(Lit::Bool(*b)),
            GroundValue::Int(n) => Term::Lit(Lit::Int(*n)),
            GroundValue::Text(s) => Term::Lit(Lit::Text(s.clone())),
            GroundValue::Label(l) => Term::Lit(Lit::Label(l.clone())),
            GroundValue::Pair(a, b) => Term::pair(Term::from_ground(a), Term::from_ground(b)),
        }
    }

    /// The ground value this term denotes, if it is already one.
    pub fn as_ground(&self) -> Option<GroundValue> {
        match self {
            Term::Lit(Lit::Unit) => Some(GroundValue::Unit),
            Term::Lit(Lit::Bool(b)) => Some(GroundValue::Bool(*b)),
            Term::Lit(Lit::Int(n)) => Some(GroundValue::Int(*n)),
            Term::Lit(Lit::Text(s)) => Some(GroundValue::Text(s.clone())),
            Term::Lit(Lit::Label(l)) => Some(GroundValue::Label(l.clone())),
            Term::Pair(a, b) => Some(GroundValue::pair(a.as_ground()?, b.as_ground()?)),
            _ => None,
        }
    }

    /// True for fully evaluated ground values.
    pub fn is_ground(&self) -> bool {
        match self {
            Term::Lit(_) => true,
            Term::Pair(a, b) => a.is_ground() && b.is_ground(),
            _ => false,
        }
    }

    /// True when the term contains a constructor that only evaluation
    /// may produce.
    pub fn has_internal_forms(&self) -> bool {
        let mut found = false;
        self.visit(&mut |t| {
            if matches!(t, Term::Labeled(_) | Term::Lio(_) | Term::Reset { .. }) {
                found = true;
            }
        });
        found
    }

    /// Pre-order traversal.
    pub fn visit(&self, f: &mut impl FnMut(&Term)) {
        f(self);
        match self {
            Term::Var(_)
            | Term::Lit(_)
            | Term::Labeled(_)
            | Term::GetLabel
            | Term::GetClearance => {}
            Term::Lam { body, .. } => body.visit(f),
            Term::Fix(a)
            | Term::Fst(a)
            | Term::Snd(a)
            | Term::Return(a)
            | Term::Unlabel(a)
            | Term::Lio(a) => a.visit(f),
            Term::Reset { body, .. } => body.visit(f),
            Term::App(a, b)
            | Term::Pair(a, b)
            | Term::Prim(_, a, b)
            | Term::Bind(a, b)
            | Term::Label(a, b)
            | Term::ToLabeled(a, b)
            | Term::Store(a, b)
            | Term::Fetch(_, a, b) => {
                a.visit(f);
                b.visit(f);
            }
            Term::If(a, b, c) => {
                a.visit(f);
                b.visit(f);
                c.visit(f);
            }
        }
    }

    /// Every label literal mentioned by the term, including labels inside
    /// labeled values and compartments.
    pub fn label_literals(&self) -> Vec<Label> {
        let mut out = Vec::new();
        self.visit(&mut |t| match t {
            Term::Lit(Lit::Label(l)) => out.push(l.clone()),
            Term::Labeled(lv) => out.push(lv.label.clone()),
            Term::Reset {
                saved_label,
                saved_clearance,
                target,
                ..
            } => {
                out.push(saved_label.clone());
                out.push(saved_clearance.clone());
                out.push(target.clone());
            }
            _ => {}
        });
        out
    }

    /// Capture-free substitution of a closed term for `name`.
    pub fn subst(&self, name: &str, with: &Term) -> Term {
        let go = |t: &Term| Box::new(t.subst(name, with));
        match self {
            Term::Var(x) if x == name => with.clone(),
            Term::Var(_)
            | Term::Lit(_)
            | Term::Labeled(_)
            | Term::GetLabel
            | Term::GetClearance => self.clone(),
            Term::Lam { var, .. } if var == name => self.clone(),
            Term::Lam { var, ty, body } => Term::Lam {
                var: var.clone(),
                ty: ty.clone(),
                body: go(body),
            },
            Term::App(a, b) => Term::App(go(a), go(b)),
            Term::Fix(a) => Term::Fix(go(a)),
            Term::If(a, b, c) => Term::If(go(a), go(b), go(c)),
            Term::Pair(a, b) => Term::Pair(go(a), go(b)),
            Term::Fst(a) => Term::Fst(go(a)),
            Term::Snd(a) => Term::Snd(go(a)),
            Term::Prim(op, a, b) => Term::Prim(*op, go(a), go(b)),
            Term::Return(a) => Term::Return(go(a)),
            Term::Bind(a, b) => Term::Bind(go(a), go(b)),
            Term::Label(a, b) => Term::Label(go(a), go(b)),
            Term::Unlabel(a) => Term::Unlabel(go(a)),
            Term::ToLabeled(a, b) => Term::ToLabeled(go(a), go(b)),
            Term::Store(a, b) => Term::Store(go(a), go(b)),
            Term::Fetch(ty, a, b) => Term::Fetch(ty.clone(), go(a), go(b)),
            Term::Lio(a) => Term::Lio(go(a)),
            Term::Reset {
                saved_label,
                saved_clearance,
                target,
                body,
            } => Term::Reset {
                saved_label: saved_label.clone(),
                saved_clearance: saved_clearance.clone(),
                target: target.clone(),
                body: go(body),
            },
        }
    }
}
