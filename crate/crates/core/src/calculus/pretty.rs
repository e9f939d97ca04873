//! Printing terms back to surface syntax. For terms without internal forms,
//! `parse_term(&print_term(t)) == t`.

use std::fmt::{self, Write};

use super::ast::{BinOp, Lit, Term, Type};

const TERM: u8 = 0;
const CMP: u8 = 1;
const ADD: u8 = 2;
const MUL: u8 = 3;
const APP: u8 = 4;
const ATOM: u8 = 5;

pub fn print_term(t: &Term) -> String {
    let mut s = String::new();
    write_term(&mut s, t, TERM).unwrap();
    s
}

pub fn print_type(t: &Type) -> String {
    let mut s = String::new();
    write_type(&mut s, t, false).unwrap();
    s
}

fn write_type(out: &mut String, t: &Type, atom: bool) -> fmt::Result {
    match t {
        Type::Unit => out.write_str("Unit"),
        Type::Bool => out.write_str("Bool"),
        Type::Int => out.write_str("Int"),
        Type::Text => out.write_str("Text"),
        Type::Label => out.write_str("Label"),
        Type::Pair(a, b) => {
            out.write_char('(')?;
            write_type(out, a, false)?;
            out.write_str(", ")?;
            write_type(out, b, false)?;
            out.write_char(')')
        }
        Type::Labeled(a) | Type::Clio(a) => {
            if atom {
                out.write_char('(')?;
            }
            out.write_str(if matches!(t, Type::Labeled(_)) { "Labeled " } else { "CLIO " })?;
            write_type(out, a, true)?;
            if atom {
                out.write_char(')')?;
            }
            Ok(())
        }
        Type::Fun(a, b) => {
            if atom {
                out.write_char('(')?;
            }
            write_type(out, a, true)?;
            out.write_str(" -> ")?;
            write_type(out, b, false)?;
            if atom {
                out.write_char(')')?;
            }
            Ok(())
        }
    }
}

fn write_text(out: &mut String, s: &str) -> fmt::Result {
    out.write_char('"')?;
    for c in s.chars() {
        match c {
            '"' => out.write_str("\\\"")?,
            '\\' => out.write_str("\\\\")?,
            '\n' => out.write_str("\\n")?,
            '\t' => out.write_str("\\t")?,
            c => out.write_char(c)?,
        }
    }
    out.write_char('"')
}

fn prec(t: &Term) -> u8 {
    match t {
        Term::Lam { .. } | Term::If(..) => TERM,
        Term::Prim(op, ..) => match op {
            BinOp::Eq | BinOp::Lt | BinOp::Le => CMP,
            BinOp::Add | BinOp::Sub => ADD,
            BinOp::Mul | BinOp::Div => MUL,
        },
        Term::App(..)
        | Term::Fix(_)
        | Term::Fst(_)
        | Term::Snd(_)
        | Term::Return(_)
        | Term::Bind(..)
        | Term::Label(..)
        | Term::Unlabel(_)
        | Term::ToLabeled(..)
        | Term::Store(..)
        | Term::Fetch(..)
        | Term::Lio(_)
        | Term::Labeled(_)
        | Term::Reset { .. } => APP,
        Term::Var(_) | Term::Lit(_) | Term::Pair(..) | Term::GetLabel | Term::GetClearance => ATOM,
    }
}

fn write_term(out: &mut String, t: &Term, ctx: u8) -> fmt::Result {
    let paren = prec(t) < ctx;
    if paren {
        out.write_char('(')?;
    }
    match t {
        Term::Var(x) => out.write_str(x)?,
        Term::Lit(Lit::Unit) => out.write_str("()")?,
        Term::Lit(Lit::Bool(b)) => write!(out, "{b}")?,
        Term::Lit(Lit::Int(n)) => write!(out, "{n}")?,
        Term::Lit(Lit::Text(s)) => write_text(out, s)?,
        Term::Lit(Lit::Label(l)) => write!(out, "⟨{l}⟩")?,
        Term::GetLabel => out.write_str("getLabel")?,
        Term::GetClearance => out.write_str("getClearance")?,
        Term::Pair(a, b) => {
            out.write_char('(')?;
            write_term(out, a, TERM)?;
            out.write_str(", ")?;
            write_term(out, b, TERM)?;
            out.write_char(')')?;
        }
        Term::Lam { var, ty, body } => {
            write!(out, "λ{var}")?;
            if let Some(ty) = ty {
                out.write_str(":")?;
                write_type(out, ty, false)?;
            }
            out.write_str(". ")?;
            write_term(out, body, TERM)?;
        }
        Term::If(c, a, b) => {
            out.write_str("if ")?;
            write_term(out, c, TERM)?;
            out.write_str(" then ")?;
            write_term(out, a, TERM)?;
            out.write_str(" else ")?;
            write_term(out, b, TERM)?;
        }
        Term::Prim(op, a, b) => {
            let p = prec(t);
            let (l, r) = if p == CMP { (ADD, ADD) } else { (p, p + 1) };
            write_term(out, a, l)?;
            write!(out, " {} ", op.symbol())?;
            write_term(out, b, r)?;
        }
        Term::App(f, a) => {
            write_term(out, f, APP)?;
            out.write_char(' ')?;
            write_term(out, a, ATOM)?;
        }
        Term::Fix(a) => keyword(out, "fix", &[a])?,
        Term::Fst(a) => keyword(out, "fst", &[a])?,
        Term::Snd(a) => keyword(out, "snd", &[a])?,
        Term::Return(a) => keyword(out, "return", &[a])?,
        Term::Unlabel(a) => keyword(out, "unlabel", &[a])?,
        Term::Bind(a, b) => keyword(out, "bind", &[a, b])?,
        Term::Label(a, b) => keyword(out, "label", &[a, b])?,
        Term::ToLabeled(a, b) => keyword(out, "toLabeled", &[a, b])?,
        Term::Store(a, b) => keyword(out, "store", &[a, b])?,
        Term::Fetch(ty, a, b) => {
            out.write_str("fetch [")?;
            write_type(out, ty, false)?;
            out.write_str("]")?;
            for x in [a, b] {
                out.write_char(' ')?;
                write_term(out, x, ATOM)?;
            }
        }
        // Internal forms; not parseable.
        Term::Labeled(lv) => write!(out, "{lv}")?,
        Term::Lio(a) => keyword(out, "LIO", &[a])?,
        Term::Reset {
            saved_label,
            saved_clearance,
            target,
            body,
        } => {
            write!(out, "reset[{saved_label}; {saved_clearance}; {target}] ")?;
            write_term(out, body, ATOM)?;
        }
    }
    if paren {
        out.write_char(')')?;
    }
    Ok(())
}

fn keyword(out: &mut String, kw: &str, args: &[&Term]) -> fmt::Result {
    out.write_str(kw)?;
    for a in args {
        out.write_char(' ')?;
        write_term(out, a, ATOM)?;
    }
    Ok(())
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_term(self))
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_type(self))
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse::{parse_term, parse_type};
    use super::*;

    #[test]
    fn roundtrips_samples() {
        for src in [
            "λx:Int. x + 1",
            "do { x <- fetch [Int] \"k\" 0; y <- unlabel x; return (y, -3) }",
            "if 1 < 2 then (λx. x) 3 else fix (λf:Int -> Int. f)",
            "1 - (2 - 3)",
            "(1 - 2) - 3",
            "f (g x) -4",
            "toLabeled ⟨A ∨ B | True | True⟩ (store \"k\" (label ⟨A | B | C⟩ \"v\\n\"))",
            "(λx. x) (λy. y)",
        ] {
            let t = parse_term(src).unwrap();
            let printed = print_term(&t);
            assert_eq!(parse_term(&printed).unwrap(), t, "{src} printed as {printed}");
        }
    }

    #[test]
    fn types_roundtrip() {
        for src in ["Int -> Int -> Int", "(Int -> Int) -> Int", "CLIO (Labeled (Int, Text))", "Labeled (CLIO Int)"] {
            let ty = parse_type(src).unwrap();
            assert_eq!(parse_type(&print_type(&ty)).unwrap(), ty);
        }
    }
}
