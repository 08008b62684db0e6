//! Miniature Gallina fragment used by the synthetic backend.
//!
//! Grammar, loosest first:
//!
//! ```text
//! term  := forall binders , term | imp
//! imp   := or [-> imp]            (right assoc)
//! or    := and [\/ or]            (right assoc)
//! and   := eq [/\ and]            (right assoc)
//! eq    := add [= add]
//! add   := mul {+ mul}            (left assoc)
//! mul   := app {* app}            (left assoc)
//! app   := atom {atom}
//! atom  := ident | numeral | ( term )
//! ```
//!
//! `O` parses as the numeral 0 and `S` applied to a numeral folds into one.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    Imp,
    Or,
    And,
    Eq,
    Add,
    Mul,
}

impl Op {
    fn symbol(self) -> &'static str {
        match self {
            Op::Imp => "->",
            Op::Or => "\\/",
            Op::And => "/\\",
            Op::Eq => "=",
            Op::Add => "+",
            Op::Mul => "*",
        }
    }

    fn level(self) -> u32 {
        match self {
            Op::Imp => 99,
            Op::Or => 85,
            Op::And => 80,
            Op::Eq => 70,
            Op::Add => 50,
            Op::Mul => 40,
        }
    }

    /// (left child level, right child level)
    fn child_levels(self) -> (u32, u32) {
        let l = self.level();
        match self {
            Op::Imp | Op::Or | Op::And => (l - 1, l),
            Op::Eq => (l - 1, l - 1),
            Op::Add | Op::Mul => (l, l - 1),
        }
    }

    fn internal_head(self) -> &'static str {
        match self {
            Op::Imp => "->",
            Op::Or => "Coq.Init.Logic.or",
            Op::And => "Coq.Init.Logic.and",
            Op::Eq => "Coq.Init.Logic.eq",
            Op::Add => "Coq.Init.Nat.add",
            Op::Mul => "Coq.Init.Nat.mul",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Var(String),
    Num(u64),
    App(String, Vec<Term>),
    Bin(Op, Box<Term>, Box<Term>),
    Forall(String, Box<Term>, Box<Term>),
}

pub fn bin(op: Op, a: Term, b: Term) -> Term {
    Term::Bin(op, Box::new(a), Box::new(b))
}

pub fn succ(t: Term) -> Term {
    match t {
        Term::Num(k) => Term::Num(k + 1),
        other => Term::App("S".into(), vec![other]),
    }
}

pub fn var(name: &str) -> Term {
    Term::Var(name.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError(pub String);

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Num(u64),
    Sym(&'static str),
}

const SYMBOLS: [&str; 10] = ["->", "\\/", "/\\", "(", ")", ",", ":", "=", "+", "*"];

fn lex(src: &str) -> Result<Vec<Tok>, ParseError> {
    let mut toks = Vec::new();
    let mut rest = src;
    'outer: while let Some(c) = rest.chars().next() {
        if c.is_whitespace() {
            rest = &rest[c.len_utf8()..];
            continue;
        }
        for sym in SYMBOLS {
            if let Some(r) = rest.strip_prefix(sym) {
                toks.push(Tok::Sym(sym));
                rest = r;
                continue 'outer;
            }
        }
        if c.is_ascii_digit() {
            let end = rest.find(|c: char| !c.is_ascii_digit()).unwrap_or(rest.len());
            let n = rest[..end].parse().map_err(|_| ParseError(format!("numeral too large: {}", &rest[..end])))?;
            toks.push(Tok::Num(n));
            rest = &rest[end..];
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let end =
                rest.find(|c: char| !(c.is_alphanumeric() || c == '_' || c == '\'' || c == '.')).unwrap_or(rest.len());
            let word = rest[..end].trim_end_matches('.');
            toks.push(Tok::Ident(word.to_string()));
            rest = &rest[word.len()..];
            continue;
        }
        return Err(ParseError(format!("Syntax error: unexpected character '{c}'.")));
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn eat(&mut self, sym: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Sym(s)) if *s == sym) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, sym: &str) -> Result<(), ParseError> {
        if self.eat(sym) {
            Ok(())
        } else {
            Err(self.error(&format!("'{sym}' expected")))
        }
    }

    fn error(&self, what: &str) -> ParseError {
        match self.peek() {
            Some(t) => ParseError(format!("Syntax error: {what} (found {t:?}).")),
            None => ParseError(format!("Syntax error: {what} (found end of input).")),
        }
    }

    fn ident(&mut self) -> Option<String> {
        match self.peek() {
            Some(Tok::Ident(s)) if s != "forall" => {
                let s = s.clone();
                self.pos += 1;
                Some(s)
            }
            _ => None,
        }
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        if matches!(self.peek(), Some(Tok::Ident(s)) if s == "forall") {
            self.pos += 1;
            let mut binders: Vec<(String, Term)> = Vec::new();
            if matches!(self.peek(), Some(Tok::Sym("("))) {
                while self.eat("(") {
                    let names = self.names()?;
                    self.expect(":")?;
                    let ty = self.term()?;
                    self.expect(")")?;
                    binders.extend(names.into_iter().map(|n| (n, ty.clone())));
                }
            } else {
                let names = self.names()?;
                self.expect(":")?;
                let ty = self.imp()?;
                binders.extend(names.into_iter().map(|n| (n, ty.clone())));
            }
            self.expect(",")?;
            let body = self.term()?;
            return Ok(binders
                .into_iter()
                .rev()
                .fold(body, |acc, (n, ty)| Term::Forall(n, Box::new(ty), Box::new(acc))));
        }
        self.imp()
    }

    fn names(&mut self) -> Result<Vec<String>, ParseError> {
        let mut names = Vec::new();
        while let Some(n) = self.ident() {
            names.push(n);
        }
        if names.is_empty() {
            return Err(self.error("binder name expected"));
        }
        Ok(names)
    }

    fn right_assoc(&mut self, op: Op, next: fn(&mut Self) -> Result<Term, ParseError>) -> Result<Term, ParseError> {
        let lhs = next(self)?;
        if self.eat(op.symbol()) {
            let rhs = if op == Op::Imp { self.imp_or_forall()? } else { self.right_assoc(op, next)? };
            return Ok(bin(op, lhs, rhs));
        }
        Ok(lhs)
    }

    fn imp_or_forall(&mut self) -> Result<Term, ParseError> {
        if matches!(self.peek(), Some(Tok::Ident(s)) if s == "forall") {
            self.term()
        } else {
            self.imp()
        }
    }

    fn imp(&mut self) -> Result<Term, ParseError> {
        self.right_assoc(Op::Imp, Self::or)
    }

    fn or(&mut self) -> Result<Term, ParseError> {
        self.right_assoc(Op::Or, Self::and)
    }

    fn and(&mut self) -> Result<Term, ParseError> {
        self.right_assoc(Op::And, Self::eq)
    }

    fn eq(&mut self) -> Result<Term, ParseError> {
        let lhs = self.add()?;
        if self.eat("=") {
            let rhs = self.add()?;
            return Ok(bin(Op::Eq, lhs, rhs));
        }
        Ok(lhs)
    }

    fn add(&mut self) -> Result<Term, ParseError> {
        let mut acc = self.mul()?;
        while self.eat("+") {
            acc = bin(Op::Add, acc, self.mul()?);
        }
        Ok(acc)
    }

    fn mul(&mut self) -> Result<Term, ParseError> {
        let mut acc = self.app()?;
        while self.eat("*") {
            acc = bin(Op::Mul, acc, self.app()?);
        }
        Ok(acc)
    }

    fn app(&mut self) -> Result<Term, ParseError> {
        let head = self.atom()?;
        let mut args = Vec::new();
        while matches!(self.peek(), Some(Tok::Ident(s)) if s != "forall")
            || matches!(self.peek(), Some(Tok::Num(_)) | Some(Tok::Sym("(")))
        {
            args.push(self.atom()?);
        }
        if args.is_empty() {
            return Ok(head);
        }
        match head {
            Term::Var(name) if name == "S" && args.len() == 1 => Ok(succ(args.pop().expect("one arg"))),
            Term::Var(name) => Ok(Term::App(name, args)),
            _ => Err(self.error("only identifiers can be applied")),
        }
    }

    fn atom(&mut self) -> Result<Term, ParseError> {
        match self.peek().cloned() {
            Some(Tok::Num(n)) => {
                self.pos += 1;
                Ok(Term::Num(n))
            }
            Some(Tok::Ident(s)) if s != "forall" => {
                self.pos += 1;
                Ok(if s == "O" { Term::Num(0) } else { Term::Var(s) })
            }
            Some(Tok::Sym("(")) => {
                self.pos += 1;
                let t = self.term()?;
                self.expect(")")?;
                Ok(t)
            }
            _ => Err(self.error("term expected")),
        }
    }
}

pub fn parse_term(src: &str) -> Result<Term, ParseError> {
    let mut p = Parser { toks: lex(src)?, pos: 0 };
    let t = p.term()?;
    if p.pos != p.toks.len() {
        return Err(p.error("end of term expected"));
    }
    Ok(t)
}

impl Term {
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
        match self {
            Term::Var(x) => {
                if !bound.contains(x) {
                    out.insert(x.clone());
                }
            }
            Term::Num(_) => {}
            Term::App(f, args) => {
                if !bound.contains(f) {
                    out.insert(f.clone());
                }
                args.iter().for_each(|a| a.collect_free(bound, out));
            }
            Term::Bin(_, a, b) => {
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            Term::Forall(x, ty, body) => {
                ty.collect_free(bound, out);
                bound.push(x.clone());
                body.collect_free(bound, out);
                bound.pop();
            }
        }
    }

    pub fn mentions(&self, name: &str) -> bool {
        self.free_vars().contains(name)
    }

    /// Capture-avoiding substitution of `x` by `with`.
    pub fn subst(&self, x: &str, with: &Term) -> Term {
        let mut map = BTreeMap::new();
        map.insert(x.to_string(), with.clone());
        self.subst_all(&map)
    }

    pub fn subst_all(&self, map: &BTreeMap<String, Term>) -> Term {
        if map.is_empty() {
            return self.clone();
        }
        match self {
            Term::Var(y) => map.get(y).cloned().unwrap_or_else(|| self.clone()),
            Term::Num(_) => self.clone(),
            Term::App(f, args) => {
                let args: Vec<Term> = args.iter().map(|a| a.subst_all(map)).collect();
                match map.get(f) {
                    Some(Term::Var(g)) => Term::App(g.clone(), args),
                    _ => Term::App(f.clone(), args),
                }
            }
            Term::Bin(op, a, b) => bin(*op, a.subst_all(map), b.subst_all(map)),
            Term::Forall(y, ty, body) => {
                let ty = ty.subst_all(map);
                let mut inner = map.clone();
                inner.remove(y);
                let captured: BTreeSet<String> = inner.values().flat_map(|t| t.free_vars()).collect();
                if captured.contains(y) {
                    let mut avoid = captured;
                    avoid.extend(body.free_vars());
                    let fresh = fresh_name(y, &avoid);
                    inner.insert(y.clone(), Term::Var(fresh.clone()));
                    Term::Forall(fresh, Box::new(ty), Box::new(body.subst_all(&inner)))
                } else {
                    Term::Forall(y.clone(), Box::new(ty), Box::new(body.subst_all(&inner)))
                }
            }
        }
    }

    /// Structural equality up to renaming of bound variables.
    pub fn alpha_eq(&self, other: &Term) -> bool {
        match (self, other) {
            (Term::Forall(x, tx, bx), Term::Forall(y, ty, by)) => {
                tx.alpha_eq(ty) && (x == y && bx.alpha_eq(by) || bx.alpha_eq(&by.subst(y, &Term::Var(x.clone()))))
            }
            (Term::Bin(o1, a1, b1), Term::Bin(o2, a2, b2)) => o1 == o2 && a1.alpha_eq(a2) && b1.alpha_eq(b2),
            (Term::App(f, xs), Term::App(g, ys)) => {
                f == g && xs.len() == ys.len() && xs.iter().zip(ys).all(|(a, b)| a.alpha_eq(b))
            }
            _ => self == other,
        }
    }

    /// Pre-order list of subterms (binder types included, binder bodies too).
    pub fn subterms(&self) -> Vec<&Term> {
        let mut out = vec![self];
        match self {
            Term::App(_, args) => args.iter().for_each(|a| out.extend(a.subterms())),
            Term::Bin(_, a, b) => {
                out.extend(a.subterms());
                out.extend(b.subterms());
            }
            Term::Forall(_, ty, body) => {
                out.extend(ty.subterms());
                out.extend(body.subterms());
            }
            _ => {}
        }
        out
    }

    /// Replace every occurrence of `from` (alpha-equal) by `to`.
    pub fn replace(&self, from: &Term, to: &Term) -> Term {
        if self.alpha_eq(from) {
            return to.clone();
        }
        match self {
            Term::App(f, args) => Term::App(f.clone(), args.iter().map(|a| a.replace(from, to)).collect()),
            Term::Bin(op, a, b) => bin(*op, a.replace(from, to), b.replace(from, to)),
            Term::Forall(x, ty, body) => {
                let body = if from.mentions(x) || to.mentions(x) { (**body).clone() } else { body.replace(from, to) };
                Term::Forall(x.clone(), Box::new(ty.replace(from, to)), Box::new(body))
            }
            _ => self.clone(),
        }
    }

    fn surface_level(&self) -> u32 {
        match self {
            Term::Var(_) | Term::Num(_) => 0,
            Term::App(..) => 10,
            Term::Bin(op, ..) => op.level(),
            Term::Forall(..) => 200,
        }
    }
}

/// First-order matching of `pattern` against `term`; names in `metas` are
/// pattern variables. Extends `subst` on success.
pub fn match_term(pattern: &Term, term: &Term, metas: &BTreeSet<String>, subst: &mut BTreeMap<String, Term>) -> bool {
    match (pattern, term) {
        (Term::Var(x), _) if metas.contains(x) => match subst.get(x) {
            Some(bound) => bound.alpha_eq(term),
            None => {
                subst.insert(x.clone(), term.clone());
                true
            }
        },
        (Term::App(f, xs), Term::App(g, ys)) => {
            f == g && xs.len() == ys.len() && xs.iter().zip(ys).all(|(p, t)| match_term(p, t, metas, subst))
        }
        (Term::App(f, xs), Term::Num(k)) if f == "S" && xs.len() == 1 && *k > 0 => {
            match_term(&xs[0], &Term::Num(k - 1), metas, subst)
        }
        (Term::Bin(o1, a1, b1), Term::Bin(o2, a2, b2)) => {
            o1 == o2 && match_term(a1, a2, metas, subst) && match_term(b1, b2, metas, subst)
        }
        (Term::Forall(x, tx, bx), Term::Forall(y, ty, by)) => {
            if metas.contains(y) {
                return false;
            }
            let renamed = bx.subst(x, &Term::Var(y.clone()));
            let mut inner = metas.clone();
            inner.remove(x);
            match_term(tx, ty, metas, subst) && match_term(&renamed, by, &inner, subst)
        }
        _ => pattern == term,
    }
}

pub fn fresh_name(base: &str, avoid: &BTreeSet<String>) -> String {
    if !avoid.contains(base) {
        return base.to_string();
    }
    (0..).map(|i| format!("{base}{i}")).find(|n| !avoid.contains(n)).expect("unbounded")
}

/// Surface notation, with Coq's binder grouping. Globals print by short name.
pub fn print_surface(t: &Term) -> String {
    surface(t, 200)
}

fn paren(s: String, wrap: bool) -> String {
    if wrap {
        format!("({s})")
    } else {
        s
    }
}

fn surface(t: &Term, max: u32) -> String {
    let s = match t {
        Term::Var(x) => crate::model::short_name(x).to_string(),
        Term::Num(k) => k.to_string(),
        Term::App(f, args) => {
            let mut out = crate::model::short_name(f).to_string();
            for a in args {
                out.push(' ');
                out.push_str(&surface(a, 0));
            }
            out
        }
        Term::Bin(op, a, b) => {
            let (l, r) = op.child_levels();
            format!("{} {} {}", surface(a, l), op.symbol(), surface(b, r))
        }
        Term::Forall(..) => {
            let mut binders = Vec::new();
            let mut body = t;
            while let Term::Forall(x, ty, b) = body {
                binders.push((x.as_str(), surface(ty, 199)));
                body = b;
            }
            let same = binders.iter().all(|(_, ty)| *ty == binders[0].1);
            let head = if same {
                let names: Vec<&str> = binders.iter().map(|(x, _)| *x).collect();
                format!("{} : {}", names.join(" "), binders[0].1)
            } else {
                binders.iter().map(|(x, ty)| format!("({x} : {ty})")).collect::<Vec<_>>().join(" ")
            };
            format!("forall {head}, {}", surface(body, 200))
        }
    };
    paren(s, t.surface_level() > max)
}

/// Kernel-style prefix notation with qualified constants.
///
/// `qualify` maps a global name to its canonical path; `types` gives the
/// types of local variables in scope, used for the `eq` type argument.
pub fn print_internal(t: &Term, qualify: &dyn Fn(&str) -> String, types: &BTreeMap<String, Term>) -> String {
    let mut scope: Vec<(String, Term)> = types.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    internal(t, qualify, &mut scope, false)
}

fn infer_type(t: &Term, scope: &[(String, Term)]) -> Option<Term> {
    match t {
        Term::Num(_) | Term::Bin(Op::Add, ..) | Term::Bin(Op::Mul, ..) => Some(var("nat")),
        Term::App(f, _) if f == "S" => Some(var("nat")),
        Term::Var(x) => scope.iter().rev().find(|(n, _)| n == x).map(|(_, ty)| ty.clone()),
        _ => None,
    }
}

fn internal(t: &Term, qualify: &dyn Fn(&str) -> String, scope: &mut Vec<(String, Term)>, arg: bool) -> String {
    let is_local = |x: &str, scope: &[(String, Term)]| scope.iter().any(|(n, _)| n == x);
    let s = match t {
        Term::Var(x) => return if is_local(x, scope) { x.clone() } else { qualify(x) },
        Term::Num(k) => return k.to_string(),
        Term::App(f, args) => {
            let head = if is_local(f, scope) { f.clone() } else { qualify(f) };
            let rendered: Vec<String> = args.iter().map(|a| internal(a, qualify, scope, true)).collect();
            format!("{head} {}", rendered.join(" "))
        }
        Term::Bin(Op::Imp, a, b) => {
            format!("{} -> {}", internal(a, qualify, scope, true), internal(b, qualify, scope, false))
        }
        Term::Bin(Op::Eq, a, b) => {
            let ty = infer_type(a, scope)
                .or_else(|| infer_type(b, scope))
                .map(|ty| internal(&ty, qualify, scope, true))
                .unwrap_or_else(|| "_".into());
            format!(
                "{} {ty} {} {}",
                Op::Eq.internal_head(),
                internal(a, qualify, scope, true),
                internal(b, qualify, scope, true)
            )
        }
        Term::Bin(op, a, b) => format!(
            "{} {} {}",
            op.internal_head(),
            internal(a, qualify, scope, true),
            internal(b, qualify, scope, true)
        ),
        Term::Forall(x, ty, body) => {
            let ty_s = internal(ty, qualify, scope, false);
            scope.push((x.clone(), (**ty).clone()));
            let body_s = internal(body, qualify, scope, false);
            scope.pop();
            format!("forall ({x}:{ty_s}), {body_s}")
        }
    };
    paren(s, arg)
}
