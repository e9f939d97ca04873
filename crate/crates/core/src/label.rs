//! DC labels: principals, categories, monotone CNF formulas and the
//! confidentiality/integrity/availability product lattice.
//!
//! All values are kept in canonical form: categories hold their members
//! sorted and deduplicated, formulas hold a subsumption-free clause list
//! sorted by category text. Syntactic equality of canonical values is the
//! equality used for hashing labels in stores; use [`Formula::equivalent`]
//! for semantic equality.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Errors raised while building or parsing labels.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LabelError {
    #[error("invalid principal name {0:?}")]
    InvalidPrincipal(String),
    #[error("empty category")]
    EmptyCategory,
    #[error("label syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
}

/// A principal, identified by its well-known name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Principal(String);

impl Principal {
    pub fn new(name: impl Into<String>) -> Result<Self, LabelError> {
        let name = name.into();
        if is_valid_principal(&name) {
            Ok(Principal(name))
        } else {
            Err(LabelError::InvalidPrincipal(name))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

fn is_principal_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '-' | '.' | '@' | '\'')
}

fn is_valid_principal(name: &str) -> bool {
    !name.is_empty() && name != "True" && name != "False" && name.chars().all(is_principal_char)
}

impl fmt::Display for Principal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for Principal {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Principal::new(s)
    }
}

/// A disjunction of principals `p1 ∨ ... ∨ pn`.
///
/// Ordered by its canonical text, which is also the order clauses take
/// inside a [`Formula`] and the order of onion layers.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Category {
    members: Vec<Principal>,
    text: String,
}

impl Category {
    pub fn new<I>(members: I) -> Result<Self, LabelError>
    where
        I: IntoIterator<Item = Principal>,
    {
        let set: BTreeSet<Principal> = members.into_iter().collect();
        if set.is_empty() {
            return Err(LabelError::EmptyCategory);
        }
        Ok(Self::from_sorted(set.into_iter().collect()))
    }

    /// Single-principal category.
    pub fn single(p: Principal) -> Self {
        Self::from_sorted(vec![p])
    }

    fn from_sorted(members: Vec<Principal>) -> Self {
        let text = members
            .iter()
            .map(Principal::as_str)
            .collect::<Vec<_>>()
            .join("∨");
        Category { members, text }
    }

    pub fn members(&self) -> &[Principal] {
        &self.members
    }

    pub fn contains(&self, p: &Principal) -> bool {
        self.members.binary_search(p).is_ok()
    }

    pub fn is_subset(&self, other: &Category) -> bool {
        self.members.iter().all(|p| other.contains(p))
    }

    pub fn union(&self, other: &Category) -> Category {
        let set: BTreeSet<Principal> = self
            .members
            .iter()
            .chain(other.members.iter())
            .cloned()
            .collect();
        Self::from_sorted(set.into_iter().collect())
    }

    pub fn as_text(&self) -> &str {
        &self.text
    }
}

impl Ord for Category {
    fn cmp(&self, other: &Self) -> Ordering {
        self.text.cmp(&other.text)
    }
}

impl PartialOrd for Category {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl FromStr for Category {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut p = Parser::new(s);
        p.skip_ws();
        let cat = p.category()?;
        p.skip_ws();
        p.expect_end()?;
        Ok(cat)
    }
}

/// A monotone CNF formula: the constant `False`, or a conjunction of
/// categories (the empty conjunction is `True`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Formula {
    False,
    Clauses(Vec<Category>),
}

impl Formula {
    pub fn truth() -> Self {
        Formula::Clauses(Vec::new())
    }

    pub fn falsity() -> Self {
        Formula::False
    }

    pub fn is_true(&self) -> bool {
        matches!(self, Formula::Clauses(c) if c.is_empty())
    }

    pub fn is_false(&self) -> bool {
        matches!(self, Formula::False)
    }

    /// Builds a canonical formula from arbitrary clauses.
    pub fn from_clauses<I>(clauses: I) -> Self
    where
        I: IntoIterator<Item = Category>,
    {
        Formula::Clauses(clauses.into_iter().collect()).canonicalize()
    }

    /// Conjunction of singleton categories, one per principal. Empty input
    /// yields `True`.
    pub fn conjunction_of<'a, I>(principals: I) -> Self
    where
        I: IntoIterator<Item = &'a Principal>,
    {
        Self::from_clauses(principals.into_iter().cloned().map(Category::single))
    }

    pub fn principal(p: Principal) -> Self {
        Formula::Clauses(vec![Category::single(p)])
    }

    /// Clauses in canonical order; empty for both `True` and `False`.
    pub fn clauses(&self) -> &[Category] {
        match self {
            Formula::False => &[],
            Formula::Clauses(c) => c,
        }
    }

    /// Removes subsumed clauses and sorts. Idempotent and
    /// semantics-preserving.
    pub fn canonicalize(self) -> Self {
        let clauses = match self {
            Formula::False => return Formula::False,
            Formula::Clauses(c) => c,
        };
        let mut uniq: Vec<Category> = clauses
            .into_iter()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        // Smaller clauses first so a subsuming clause is kept before the
        // clauses it subsumes.
        uniq.sort_by(|a, b| {
            a.members
                .len()
                .cmp(&b.members.len())
                .then_with(|| a.cmp(b))
        });
        let mut kept: Vec<Category> = Vec::with_capacity(uniq.len());
        for c in uniq {
            if !kept.iter().any(|k| k.is_subset(&c)) {
                kept.push(c);
            }
        }
        kept.sort();
        Formula::Clauses(kept)
    }

    /// Logical implication `self ⇒ other` over monotone CNF.
    pub fn entails(&self, other: &Formula) -> bool {
        match (self, other) {
            (Formula::False, _) => true,
            (Formula::Clauses(_), Formula::False) => false,
            (Formula::Clauses(mine), Formula::Clauses(theirs)) => theirs
                .iter()
                .all(|d| mine.iter().any(|c| c.is_subset(d))),
        }
    }

    /// Mutual entailment.
    pub fn equivalent(&self, other: &Formula) -> bool {
        self.entails(other) && other.entails(self)
    }

    /// `self ∧ other`.
    pub fn and(&self, other: &Formula) -> Formula {
        match (self, other) {
            (Formula::False, _) | (_, Formula::False) => Formula::False,
            (Formula::Clauses(a), Formula::Clauses(b)) => {
                Formula::from_clauses(a.iter().chain(b.iter()).cloned())
            }
        }
    }

    /// `self ∨ other`, distributed back into CNF.
    pub fn or(&self, other: &Formula) -> Formula {
        match (self, other) {
            (Formula::False, x) | (x, Formula::False) => x.clone(),
            (Formula::Clauses(a), Formula::Clauses(b)) => {
                let mut out = Vec::with_capacity(a.len() * b.len());
                for c in a {
                    for d in b {
                        out.push(c.union(d));
                    }
                }
                Formula::from_clauses(out)
            }
        }
    }

    /// Every principal mentioned by the formula.
    pub fn principals(&self) -> BTreeSet<Principal> {
        self.clauses()
            .iter()
            .flat_map(|c| c.members.iter().cloned())
            .collect()
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::False => f.write_str("False"),
            Formula::Clauses(c) if c.is_empty() => f.write_str("True"),
            Formula::Clauses(c) => {
                for (i, cat) in c.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ∧ ")?;
                    }
                    f.write_str(cat.as_text())?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for Formula {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut p = Parser::new(s);
        let f = p.formula()?;
        p.skip_ws();
        p.expect_end()?;
        Ok(f)
    }
}

/// Which component of a label an ordering talks about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    Conf,
    Integ,
    Avail,
}

/// Component-wise flow: `conf` flows when `g ⇒ f`, integrity and
/// availability flow when `f ⇒ g`.
pub fn component_flow(kind: Component, f: &Formula, g: &Formula) -> bool {
    match kind {
        Component::Conf => g.entails(f),
        Component::Integ | Component::Avail => f.entails(g),
    }
}

/// A DC label `⟨conf | integ | avail⟩`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label {
    pub conf: Formula,
    pub integ: Formula,
    pub avail: Formula,
}

impl Label {
    pub fn new(conf: Formula, integ: Formula, avail: Formula) -> Self {
        Label {
            conf: conf.canonicalize(),
            integ: integ.canonicalize(),
            avail: avail.canonicalize(),
        }
    }

    /// Most public, most trusted, most available: `⟨True | False | False⟩`.
    pub fn bottom() -> Self {
        Label::new(Formula::truth(), Formula::False, Formula::False)
    }

    /// `⟨False | True | True⟩`.
    pub fn top() -> Self {
        Label::new(Formula::False, Formula::truth(), Formula::truth())
    }

    /// `⟨True | True | True⟩`, the label of an empty authority.
    pub fn public() -> Self {
        Label::new(Formula::truth(), Formula::truth(), Formula::truth())
    }

    pub fn component(&self, kind: Component) -> &Formula {
        match kind {
            Component::Conf => &self.conf,
            Component::Integ => &self.integ,
            Component::Avail => &self.avail,
        }
    }

    pub fn can_flow_to(&self, other: &Label) -> bool {
        component_flow(Component::Conf, &self.conf, &other.conf)
            && component_flow(Component::Integ, &self.integ, &other.integ)
            && component_flow(Component::Avail, &self.avail, &other.avail)
    }

    pub fn join(&self, other: &Label) -> Label {
        Label {
            conf: self.conf.and(&other.conf),
            integ: self.integ.or(&other.integ),
            avail: self.avail.or(&other.avail),
        }
    }

    pub fn meet(&self, other: &Label) -> Label {
        Label {
            conf: self.conf.or(&other.conf),
            integ: self.integ.and(&other.integ),
            avail: self.avail.and(&other.avail),
        }
    }

    /// Component-wise mutual entailment.
    pub fn equivalent(&self, other: &Label) -> bool {
        self.can_flow_to(other) && other.can_flow_to(self)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} | {} | {}", self.conf, self.integ, self.avail)
    }
}

impl FromStr for Label {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_label(s)
    }
}

pub fn parse_label(text: &str) -> Result<Label, LabelError> {
    let mut p = Parser::new(text);
    let label = p.label()?;
    p.skip_ws();
    p.expect_end()?;
    Ok(label)
}

pub fn format_label(label: &Label) -> String {
    label.to_string()
}

/// Recursive-descent parser for the label text grammar.
struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser { src, pos: 0 }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, LabelError> {
        Err(LabelError::Syntax {
            pos: self.pos,
            msg: msg.into(),
        })
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn eat(&mut self, tok: &str) -> bool {
        if self.rest().starts_with(tok) {
            self.pos += tok.len();
            true
        } else {
            false
        }
    }

    fn eat_or(&mut self) -> bool {
        self.eat("∨") || self.eat("\\/")
    }

    fn eat_and(&mut self) -> bool {
        self.eat("∧") || self.eat("/\\")
    }

    fn expect_end(&self) -> Result<(), LabelError> {
        if self.pos == self.src.len() {
            Ok(())
        } else {
            self.err("unexpected trailing input")
        }
    }

    fn ident(&mut self) -> Option<&'a str> {
        let rest = self.rest();
        let len: usize = rest
            .chars()
            .take_while(|&c| is_principal_char(c))
            .map(char::len_utf8)
            .sum();
        if len == 0 {
            None
        } else {
            self.pos += len;
            Some(&rest[..len])
        }
    }

    fn principal(&mut self) -> Result<Principal, LabelError> {
        let start = self.pos;
        match self.ident() {
            Some(name) => Principal::new(name).map_err(|_| LabelError::Syntax {
                pos: start,
                msg: format!("{name:?} is not a principal name"),
            }),
            None => self.err("expected principal"),
        }
    }

    fn category(&mut self) -> Result<Category, LabelError> {
        let paren = self.eat("(");
        self.skip_ws();
        let mut members = vec![self.principal()?];
        loop {
            let save = self.pos;
            self.skip_ws();
            if self.eat_or() {
                self.skip_ws();
                members.push(self.principal()?);
            } else {
                self.pos = save;
                break;
            }
        }
        if paren {
            self.skip_ws();
            if !self.eat(")") {
                return self.err("expected ')'");
            }
        }
        Category::new(members)
    }

    fn formula(&mut self) -> Result<Formula, LabelError> {
        self.skip_ws();
        let save = self.pos;
        if let Some(word) = self.ident() {
            match word {
                "True" => return Ok(Formula::truth()),
                "False" => return Ok(Formula::False),
                _ => self.pos = save,
            }
        }
        let mut clauses = vec![self.category()?];
        loop {
            let save = self.pos;
            self.skip_ws();
            if self.eat_and() {
                self.skip_ws();
                clauses.push(self.category()?);
            } else {
                self.pos = save;
                break;
            }
        }
        Ok(Formula::from_clauses(clauses))
    }

    fn label(&mut self) -> Result<Label, LabelError> {
        let conf = self.formula()?;
        self.skip_ws();
        if !self.eat("|") {
            return self.err("expected '|'");
        }
        let integ = self.formula()?;
        self.skip_ws();
        if !self.eat("|") {
            return self.err("expected '|'");
        }
        let avail = self.formula()?;
        Ok(Label::new(conf, integ, avail))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(s: &str) -> Formula {
        s.parse().unwrap()
    }

    fn l(s: &str) -> Label {
        s.parse().unwrap()
    }

    #[test]
    fn entails_examples() {
        assert!(f("A").entails(&f("A ∨ B")));
        assert!(!f("A ∨ B").entails(&f("A")));
        assert!(f("A ∧ B").entails(&f("A")));
        assert!(f("False").entails(&f("A")));
        assert!(f("A").entails(&f("True")));
        assert!(!f("True").entails(&f("A")));
        assert!(!f("A").entails(&f("False")));
    }

    #[test]
    fn flow_examples() {
        assert!(l("C∨P∨IRS | C | S").can_flow_to(&l("P∨IRS | P∨C | S")));
        assert!(l("A | A∧B | True").can_flow_to(&l("A | A | True")));
        assert!(!l("A | A | True").can_flow_to(&l("A | A∧B | True")));
        assert!(component_flow(Component::Conf, &f("A∨B"), &f("A")));
        assert!(component_flow(Component::Integ, &f("A"), &f("A")));
        assert!(component_flow(Component::Avail, &f("S"), &f("True")));
    }

    #[test]
    fn join_meet_examples() {
        let j = l("A|A|A").join(&l("B|B|B"));
        assert_eq!(j, l("A ∧ B | A∨B | A∨B"));
        let x = l("A∨B ∧ C | C | S");
        assert_eq!(Label::bottom().join(&x), x);
        assert_eq!(x.meet(&x), x);
        assert_eq!(Label::top().meet(&x), x);
    }

    #[test]
    fn canonicalize_examples() {
        let sub = Formula::Clauses(vec![
            "A∨B".parse().unwrap(),
            "A".parse().unwrap(),
        ])
        .canonicalize();
        assert_eq!(sub, f("A"));
        assert_eq!(Formula::Clauses(vec![]).canonicalize(), Formula::truth());
        let sorted = Formula::Clauses(vec![Category::new([
            Principal::new("B").unwrap(),
            Principal::new("A").unwrap(),
        ])
        .unwrap()]);
        assert_eq!(sorted.to_string(), "A∨B");
    }

    #[test]
    fn parse_and_format() {
        let x = l("A∨B ∧ C | C | S");
        assert_eq!(x.conf.clauses().len(), 2);
        assert_eq!(x.to_string(), "A∨B ∧ C | C | S");
        assert_eq!(l("True | False | False"), Label::bottom());
        assert_eq!(format_label(&l("B∨A | A | A")), "A∨B | A | A");
        assert_eq!(l("(A \\/ B) /\\ C | True | True"), l("A∨B ∧ C | True | True"));
    }

    #[test]
    fn parse_errors_carry_position() {
        match parse_label("A | B") {
            Err(LabelError::Syntax { pos, .. }) => assert_eq!(pos, 5),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_label("A ∨ | B | C").is_err());
        assert!(parse_label("A | B | C extra").is_err());
        assert!(Principal::new("A B").is_err());
        assert!(Principal::new("").is_err());
        assert!(Principal::new("True").is_err());
        assert!(Principal::new("a∨b").is_err());
    }

    #[test]
    fn category_order_is_textual() {
        let a: Category = "A∨B".parse().unwrap();
        let b: Category = "AB".parse().unwrap();
        assert!(b < a);
        let fm = Formula::from_clauses([a.clone(), b.clone()]);
        assert_eq!(fm.clauses(), &[b, a]);
    }
}
