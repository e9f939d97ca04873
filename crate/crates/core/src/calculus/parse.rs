//! Surface syntax.
//!
//! ```text
//! term  ::= λx[:type]. term | \x[:type]. term
//!         | if term then term else term
//!         | let x = term in term
//!         | do { stmt; ...; term }
//!         | cmp
//! stmt  ::= x <- term | let x = term | term
//! cmp   ::= add [(== | < | <=) add]
//! add   ::= mul ((+ | -) mul)*
//! mul   ::= app ((* | /) app)*
//! app   ::= head atom*
//! head  ::= return atom | bind atom atom | label atom atom | unlabel atom
//!         | toLabeled atom atom | store atom atom | fetch [type] atom atom
//!         | fst atom | snd atom | fix atom | atom
//! atom  ::= x | n | -n | "text" | () | true | false | getLabel | getClearance
//!         | ⟨label⟩ | <<label>> | (term) | (term, term)
//! type  ::= tatom [-> type]
//! tatom ::= Unit | Bool | Int | Text | Label | Labeled tatom | CLIO tatom
//!         | (type) | (type, type)
//! ```
//!
//! `-n` is a negative literal only when the minus touches the digits.
//! `--` starts a line comment.

use std::fmt;

use crate::label::{parse_label, Label};

use super::ast::{BinOp, GroundValue, Labeled, Term, Type};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.msg)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(u64),
    Str(String),
    LabelLit(String),
    Sym(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
    /// Byte offsets in the source.
    start: usize,
    end: usize,
}

const SYMBOLS: &[&str] = &[
    "<-", "->", "==", "<=", "λ", "\\", ".", ":", "(", ")", ",", "{", "}", "[", "]", ";", "=", "<", "+",
    "-", "*", "/",
];

const KEYWORDS: &[&str] = &[
    "return",
    "bind",
    "label",
    "unlabel",
    "toLabeled",
    "getLabel",
    "getClearance",
    "store",
    "fetch",
    "if",
    "then",
    "else",
    "fst",
    "snd",
    "fix",
    "let",
    "in",
    "do",
    "true",
    "false",
];

/// Names of constructors that only evaluation may produce.
const INTERNAL: &[&str] = &["LIO", "Lio", "reset", "Reset"];

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let mut line = 1;
    let mut col = 1;
    let mut i = 0;
    let bytes = src.as_bytes();
    let err = |line, col, msg: String| ParseError { line, col, msg };
    while i < src.len() {
        let rest = &src[i..];
        let c = rest.chars().next().unwrap();
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += c.len_utf8();
            col += 1;
            continue;
        }
        if rest.starts_with("--") {
            while i < src.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let (tl, tc, start) = (line, col, i);
        let tok;
        if c.is_ascii_alphabetic() || c == '_' {
            let n = rest
                .find(|ch: char| !(ch.is_ascii_alphanumeric() || ch == '_' || ch == '\''))
                .unwrap_or(rest.len());
            tok = Tok::Ident(rest[..n].to_string());
            i += n;
            col += n;
        } else if c.is_ascii_digit() {
            let n = rest.find(|ch: char| !ch.is_ascii_digit()).unwrap_or(rest.len());
            let v: u64 = rest[..n]
                .parse()
                .map_err(|_| err(tl, tc, "integer literal out of range".into()))?;
            tok = Tok::Int(v);
            i += n;
            col += n;
        } else if c == '"' {
            let mut s = String::new();
            let mut chars = rest.char_indices().skip(1);
            let mut closed = None;
            while let Some((j, ch)) = chars.next() {
                match ch {
                    '"' => {
                        closed = Some(j + 1);
                        break;
                    }
                    '\\' => match chars.next() {
                        Some((_, 'n')) => s.push('\n'),
                        Some((_, 't')) => s.push('\t'),
                        Some((_, '\\')) => s.push('\\'),
                        Some((_, '"')) => s.push('"'),
                        _ => return Err(err(tl, tc, "bad escape in string literal".into())),
                    },
                    '\n' => return Err(err(tl, tc, "newline in string literal".into())),
                    ch => s.push(ch),
                }
            }
            let n = closed.ok_or_else(|| err(tl, tc, "unterminated string literal".into()))?;
            tok = Tok::Str(s);
            col += rest[..n].chars().count();
            i += n;
        } else if c == '⟨' || rest.starts_with("<<") {
            let (open, close) = if c == '⟨' { ("⟨", "⟩") } else { ("<<", ">>") };
            let body = &rest[open.len()..];
            let end = body
                .find(close)
                .ok_or_else(|| err(tl, tc, format!("unterminated label literal, expected {close}")))?;
            if body[..end].contains('\n') {
                return Err(err(tl, tc, "newline in label literal".into()));
            }
            tok = Tok::LabelLit(body[..end].to_string());
            let n = open.len() + end + close.len();
            col += rest[..n].chars().count();
            i += n;
        } else if let Some(sym) = SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            tok = Tok::Sym(sym);
            i += sym.len();
            col += sym.chars().count();
        } else {
            return Err(err(tl, tc, format!("unexpected character {c:?}")));
        }
        out.push(Token {
            tok,
            line: tl,
            col: tc,
            start,
            end: i,
        });
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
        start: src.len(),
        end: src.len(),
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn here(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        let t = self.here();
        Err(ParseError {
            line: t.line,
            col: t.col,
            msg: msg.into(),
        })
    }

    fn describe(&self) -> String {
        match self.peek() {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(n) => format!("`{n}`"),
            Tok::Str(_) => "string literal".into(),
            Tok::LabelLit(_) => "label literal".into(),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::Eof => "end of input".into(),
        }
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == s)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), ParseError> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.err(format!("expected `{s}`, found {}", self.describe()))
        }
    }

    fn expect_kw(&mut self, s: &str) -> Result<(), ParseError> {
        if self.is_kw(s) {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected `{s}`, found {}", self.describe()))
        }
    }

    fn binder(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(name) if !KEYWORDS.contains(&name.as_str()) && !INTERNAL.contains(&name.as_str()) => {
                self.bump();
                Ok(name)
            }
            _ => self.err(format!("expected variable name, found {}", self.describe())),
        }
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        if self.is_sym("λ") || self.is_sym("\\") {
            self.bump();
            let var = self.binder()?;
            let ty = if self.eat_sym(":") { Some(self.ty()?) } else { None };
            self.expect_sym(".")?;
            let body = self.term()?;
            return Ok(Term::lam(var, ty, body));
        }
        if self.is_kw("if") {
            self.bump();
            let c = self.term()?;
            self.expect_kw("then")?;
            let a = self.term()?;
            self.expect_kw("else")?;
            let b = self.term()?;
            return Ok(Term::If(Box::new(c), Box::new(a), Box::new(b)));
        }
        if self.is_kw("let") {
            self.bump();
            let var = self.binder()?;
            self.expect_sym("=")?;
            let bound = self.term()?;
            self.expect_kw("in")?;
            let body = self.term()?;
            return Ok(Term::app(Term::lam(var, None, body), bound));
        }
        if self.is_kw("do") {
            self.bump();
            return self.do_block();
        }
        self.cmp()
    }

    fn do_block(&mut self) -> Result<Term, ParseError> {
        enum Stmt {
            Bind(String, Term),
            Seq(Term),
            Let(String, Term),
        }
        self.expect_sym("{")?;
        let mut stmts = Vec::new();
        loop {
            let stmt = if self.is_kw("let") {
                self.bump();
                let var = self.binder()?;
                self.expect_sym("=")?;
                Stmt::Let(var, self.term()?)
            } else if matches!(self.peek(), Tok::Ident(_)) && matches!(self.peek_at(1), Tok::Sym("<-")) {
                let var = self.binder()?;
                self.bump();
                Stmt::Bind(var, self.term()?)
            } else {
                Stmt::Seq(self.term()?)
            };
            stmts.push(stmt);
            if self.eat_sym(";") {
                if self.is_sym("}") {
                    break;
                }
                continue;
            }
            break;
        }
        self.expect_sym("}")?;
        let mut acc = match stmts.pop() {
            Some(Stmt::Seq(t)) => t,
            _ => return self.err("do block must end with an expression"),
        };
        while let Some(s) = stmts.pop() {
            acc = match s {
                Stmt::Bind(x, t) => Term::bind(t, Term::lam(x, None, acc)),
                Stmt::Seq(t) => Term::bind(t, Term::lam("_", None, acc)),
                Stmt::Let(x, t) => Term::app(Term::lam(x, None, acc), t),
            };
        }
        Ok(acc)
    }

    fn cmp(&mut self) -> Result<Term, ParseError> {
        let a = self.add()?;
        let op = if self.is_sym("==") {
            BinOp::Eq
        } else if self.is_sym("<=") {
            BinOp::Le
        } else if self.is_sym("<") {
            BinOp::Lt
        } else {
            return Ok(a);
        };
        self.bump();
        let b = self.add()?;
        Ok(Term::prim(op, a, b))
    }

    fn add(&mut self) -> Result<Term, ParseError> {
        let mut acc = self.mul()?;
        loop {
            let op = if self.is_sym("+") {
                BinOp::Add
            } else if self.is_sym("-") {
                BinOp::Sub
            } else {
                return Ok(acc);
            };
            self.bump();
            let b = self.mul()?;
            acc = Term::prim(op, acc, b);
        }
    }

    fn mul(&mut self) -> Result<Term, ParseError> {
        let mut acc = self.app()?;
        loop {
            let op = if self.is_sym("*") {
                BinOp::Mul
            } else if self.is_sym("/") {
                BinOp::Div
            } else {
                return Ok(acc);
            };
            self.bump();
            let b = self.app()?;
            acc = Term::prim(op, acc, b);
        }
    }

    fn app(&mut self) -> Result<Term, ParseError> {
        let mut acc = self.head()?;
        while self.starts_atom() {
            let a = self.atom()?;
            acc = Term::app(acc, a);
        }
        Ok(acc)
    }

    fn head(&mut self) -> Result<Term, ParseError> {
        let kw = match self.peek() {
            Tok::Ident(s) => s.clone(),
            _ => return self.atom(),
        };
        let one = |p: &mut Self, f: fn(Box<Term>) -> Term| -> Result<Term, ParseError> {
            p.bump();
            Ok(f(Box::new(p.atom()?)))
        };
        let two = |p: &mut Self, f: fn(Box<Term>, Box<Term>) -> Term| -> Result<Term, ParseError> {
            p.bump();
            let a = p.atom()?;
            let b = p.atom()?;
            Ok(f(Box::new(a), Box::new(b)))
        };
        match kw.as_str() {
            "return" => one(self, Term::Return),
            "unlabel" => one(self, Term::Unlabel),
            "fst" => one(self, Term::Fst),
            "snd" => one(self, Term::Snd),
            "fix" => one(self, Term::Fix),
            "bind" => two(self, Term::Bind),
            "label" => two(self, Term::Label),
            "toLabeled" => two(self, Term::ToLabeled),
            "store" => two(self, Term::Store),
            "fetch" => {
                self.bump();
                self.expect_sym("[")?;
                let ty = self.ty()?;
                self.expect_sym("]")?;
                let k = self.atom()?;
                let d = self.atom()?;
                Ok(Term::fetch(ty, k, d))
            }
            _ => self.atom(),
        }
    }

    fn starts_atom(&self) -> bool {
        match self.peek() {
            Tok::Ident(s) => {
                !KEYWORDS.contains(&s.as_str()) || matches!(s.as_str(), "true" | "false" | "getLabel" | "getClearance")
            }
            Tok::Int(_) | Tok::Str(_) | Tok::LabelLit(_) => true,
            Tok::Sym("(") => true,
            Tok::Sym("-") => self.negative_literal_ahead(),
            _ => false,
        }
    }

    fn negative_literal_ahead(&self) -> bool {
        let minus = &self.toks[self.pos];
        let next = &self.toks[(self.pos + 1).min(self.toks.len() - 1)];
        matches!(next.tok, Tok::Int(_)) && minus.end == next.start
    }

    fn atom(&mut self) -> Result<Term, ParseError> {
        let tok = self.peek().clone();
        match tok {
            Tok::Ident(name) => {
                if INTERNAL.contains(&name.as_str()) {
                    return self.err(format!("`{name}` is an internal form and cannot be written in source"));
                }
                let t = match name.as_str() {
                    "true" => Term::bool(true),
                    "false" => Term::bool(false),
                    "getLabel" => Term::GetLabel,
                    "getClearance" => Term::GetClearance,
                    kw if KEYWORDS.contains(&kw) => {
                        return self.err(format!("unexpected keyword `{kw}`"));
                    }
                    _ => Term::Var(name),
                };
                self.bump();
                Ok(t)
            }
            Tok::Int(n) => {
                if n > i64::MAX as u64 {
                    return self.err("integer literal out of range");
                }
                self.bump();
                Ok(Term::int(n as i64))
            }
            Tok::Sym("-") if self.negative_literal_ahead() => {
                self.bump();
                let Tok::Int(n) = self.peek().clone() else { unreachable!() };
                if n > i64::MAX as u64 + 1 {
                    return self.err("integer literal out of range");
                }
                self.bump();
                Ok(Term::int((n as i128).wrapping_neg() as i64))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Term::text(s))
            }
            Tok::LabelLit(text) => {
                let l = self.label_text(&text)?;
                self.bump();
                Ok(Term::label_lit(l))
            }
            Tok::Sym("(") => {
                self.bump();
                if self.eat_sym(")") {
                    return Ok(Term::unit());
                }
                let a = self.term()?;
                if self.eat_sym(",") {
                    let b = self.term()?;
                    self.expect_sym(")")?;
                    return Ok(Term::pair(a, b));
                }
                self.expect_sym(")")?;
                Ok(a)
            }
            _ => self.err(format!("expected expression, found {}", self.describe())),
        }
    }

    fn label_text(&self, text: &str) -> Result<Label, ParseError> {
        parse_label(text).map_err(|e| {
            let t = self.here();
            ParseError {
                line: t.line,
                col: t.col,
                msg: format!("bad label literal: {e}"),
            }
        })
    }

    fn ty(&mut self) -> Result<Type, ParseError> {
        let a = self.ty_atom()?;
        if self.eat_sym("->") {
            let b = self.ty()?;
            return Ok(Type::fun(a, b));
        }
        Ok(a)
    }

    fn ty_atom(&mut self) -> Result<Type, ParseError> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                self.bump();
                match name.as_str() {
                    "Unit" => Ok(Type::Unit),
                    "Bool" => Ok(Type::Bool),
                    "Int" => Ok(Type::Int),
                    "Text" => Ok(Type::Text),
                    "Label" => Ok(Type::Label),
                    "Labeled" => Ok(Type::labeled(self.ty_atom()?)),
                    "CLIO" => Ok(Type::clio(self.ty_atom()?)),
                    _ => {
                        self.pos -= 1;
                        self.err(format!("unknown type `{name}`"))
                    }
                }
            }
            Tok::Sym("(") => {
                self.bump();
                if self.eat_sym(")") {
                    return Ok(Type::Unit);
                }
                let a = self.ty()?;
                if self.eat_sym(",") {
                    let b = self.ty()?;
                    self.expect_sym(")")?;
                    return Ok(Type::pair(a, b));
                }
                self.expect_sym(")")?;
                Ok(a)
            }
            _ => self.err(format!("expected type, found {}", self.describe())),
        }
    }

    fn ground(&mut self) -> Result<GroundValue, ParseError> {
        let here = self.pos;
        let t = self.atom()?;
        match t.as_ground() {
            Some(v) => Ok(v),
            None => {
                self.pos = here;
                self.err("expected a ground value")
            }
        }
    }

    fn expect_eof(&self) -> Result<(), ParseError> {
        if matches!(self.peek(), Tok::Eof) {
            Ok(())
        } else {
            self.err(format!("unexpected {} after end of term", self.describe()))
        }
    }
}

fn parser(src: &str) -> Result<Parser, ParseError> {
    Ok(Parser { toks: lex(src)?, pos: 0 })
}

/// Parse a source program.
pub fn parse_term(src: &str) -> Result<Term, ParseError> {
    let mut p = parser(src)?;
    let t = p.term()?;
    p.expect_eof()?;
    Ok(t)
}

pub fn parse_type(src: &str) -> Result<Type, ParseError> {
    let mut p = parser(src)?;
    let t = p.ty()?;
    p.expect_eof()?;
    Ok(t)
}

/// Parse a closed ground value such as `("alice", (1, true))`.
pub fn parse_ground(src: &str) -> Result<GroundValue, ParseError> {
    let mut p = parser(src)?;
    let v = p.ground()?;
    p.expect_eof()?;
    Ok(v)
}

/// Parse a game input: either a ground value or a labeled value
/// `⟨l⟩ v`.
pub fn parse_input(src: &str) -> Result<Term, ParseError> {
    let mut p = parser(src)?;
    let t = if let Tok::LabelLit(text) = p.peek().clone() {
        if matches!(p.peek_at(1), Tok::Eof) {
            p.atom()?
        } else {
            let l = p.label_text(&text)?;
            p.bump();
            Term::Labeled(Labeled::new(l, p.ground()?))
        }
    } else {
        p.term()?
    };
    p.expect_eof()?;
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::Lit;

    #[test]
    fn do_block_desugars_to_bind() {
        let t = parse_term("do { x <- return 1; return x }").unwrap();
        assert_eq!(
            t,
            Term::bind(Term::ret(Term::int(1)), Term::lam("x", None, Term::ret(Term::var("x"))))
        );
    }

    #[test]
    fn do_sequencing_and_let() {
        let t = parse_term("do { let y = 2; store 1 y; return () }").unwrap();
        let expected = Term::app(
            Term::lam(
                "y",
                None,
                Term::bind(
                    Term::store(Term::int(1), Term::var("y")),
                    Term::lam("_", None, Term::ret(Term::unit())),
                ),
            ),
            Term::int(2),
        );
        assert_eq!(t, expected);
    }

    #[test]
    fn arithmetic_precedence() {
        let t = parse_term("1 + 2 * 3 == 7").unwrap();
        let expected = Term::prim(
            BinOp::Eq,
            Term::prim(BinOp::Add, Term::int(1), Term::prim(BinOp::Mul, Term::int(2), Term::int(3))),
            Term::int(7),
        );
        assert_eq!(t, expected);
    }

    #[test]
    fn negative_literals_need_adjacent_minus() {
        assert_eq!(parse_term("f -1").unwrap(), Term::app(Term::var("f"), Term::int(-1)));
        assert_eq!(
            parse_term("f - 1").unwrap(),
            Term::prim(BinOp::Sub, Term::var("f"), Term::int(1))
        );
        assert_eq!(parse_term("-9223372036854775808").unwrap(), Term::int(i64::MIN));
    }

    #[test]
    fn label_literals_both_spellings() {
        let a = parse_term("⟨Alice | True | True⟩").unwrap();
        let b = parse_term("<<Alice | True | True>>").unwrap();
        assert_eq!(a, b);
        assert!(parse_term("1 < 2").is_ok());
    }

    #[test]
    fn fetch_takes_type() {
        let t = parse_term("fetch [(Int, Text)] \"k\" (0, \"\")").unwrap();
        assert!(matches!(t, Term::Fetch(Type::Pair(..), _, _)));
    }

    #[test]
    fn annotated_lambda_and_types() {
        let t = parse_term("λx:Labeled Int -> CLIO Int. unlabel x").unwrap();
        match t {
            Term::Lam { ty: Some(ty), .. } => {
                assert_eq!(ty, Type::fun(Type::labeled(Type::Int), Type::clio(Type::Int)))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn errors_have_line_and_column() {
        let e = parse_term("do {\n  x <- return 1;\n  return )\n}").unwrap_err();
        assert_eq!((e.line, e.col), (3, 10));
        let e = parse_term("LIO 3").unwrap_err();
        assert_eq!((e.line, e.col), (1, 1));
        assert!(parse_term("⟨Alice⟩").is_err());
    }

    #[test]
    fn input_accepts_labeled_values() {
        let t = parse_input("⟨Alice | True | True⟩ (1, \"x\")").unwrap();
        match t {
            Term::Labeled(lv) => assert_eq!(lv.value, GroundValue::pair(GroundValue::Int(1), GroundValue::text("x"))),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_input("⟨A | True | True⟩").unwrap(), Term::Lit(Lit::Label(_))));
        assert!(parse_term("⟨A | True | True⟩ 1").is_ok());
    }
}
