//! Process syntax: names, transmittable expressions, processes, free names
//! and capture-avoiding substitution.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::hash::{Hash, Hasher};

use thiserror::Error;

use crate::regex::{Regex, Trace};
use crate::term::{Atom, Label, SignatureError, Term};
use crate::tss::TssRef;

/// A channel name. Source names carry `id == 0` and are compared by stem;
/// generated names (`id > 0`) are compared by id alone, the stem is kept
/// only for printing.
#[derive(Clone)]
pub struct Name {
    stem: Atom,
    id: u32,
}

impl Name {
    pub fn new(stem: &str) -> Self {
        Name {
            stem: Atom::new(stem),
            id: 0,
        }
    }

    pub fn generated(stem: &Atom, id: u32) -> Self {
        assert!(id > 0, "generated names have positive ids");
        Name {
            stem: stem.clone(),
            id,
        }
    }

    pub fn stem(&self) -> &Atom {
        &self.stem
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn is_generated(&self) -> bool {
        self.id > 0
    }

    fn key(&self) -> (u32, &str) {
        if self.id == 0 {
            (0, self.stem.as_str())
        } else {
            (self.id, "")
        }
    }
}

impl PartialEq for Name {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Name {}

impl PartialOrd for Name {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Name {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

impl Hash for Name {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.key().hash(state)
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.id == 0 {
            write!(f, "{}", self.stem)
        } else {
            write!(f, "{}#{}", self.stem, self.id)
        }
    }
}

impl fmt::Debug for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// Source of generated name ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fresh(u32);

impl Fresh {
    pub fn starting_at(next: u32) -> Self {
        Fresh(next.max(1))
    }

    /// A supply that cannot collide with any name in `p`.
    pub fn above(p: &Process) -> Self {
        Fresh(max_name_id(p) + 1)
    }

    pub fn next_id(&self) -> u32 {
        self.0
    }

    pub fn rename(&mut self, name: &Name) -> Name {
        let n = Name::generated(name.stem(), self.0);
        self.0 += 1;
        n
    }
}

/// Transmittable expressions: names, language builders, regular expressions
/// (possibly containing names awaiting substitution) and terms.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Expr {
    Name(Name),
    Tss(TssRef),
    Union(Box<Expr>, Box<Expr>),
    Label(Label),
    Epsilon,
    Concat(Box<Expr>, Box<Expr>),
    Alt(Box<Expr>, Box<Expr>),
    Star(Box<Expr>),
    Term(Term),
}

/// Why an expression cannot be used at a position.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SortError {
    #[error("expected a regular expression, found {found} `{expr}`")]
    NotARegex { found: &'static str, expr: String },
    #[error("expected a language, found {found} `{expr}`")]
    NotALanguage { found: &'static str, expr: String },
    #[error("expected a ground term, found {found} `{expr}`")]
    NotATerm { found: &'static str, expr: String },
    #[error("expected a channel name, found {found} `{expr}`")]
    NotAChannel { found: &'static str, expr: String },
    #[error("union of languages is undefined: {0}")]
    UnionUndefined(#[from] SignatureError),
}

impl Expr {
    pub fn name(s: &str) -> Expr {
        Expr::Name(Name::new(s))
    }

    pub fn label(s: &str) -> Expr {
        Expr::Label(Label::new(s))
    }

    pub fn union(a: Expr, b: Expr) -> Expr {
        Expr::Union(Box::new(a), Box::new(b))
    }

    pub fn concat(a: Expr, b: Expr) -> Expr {
        Expr::Concat(Box::new(a), Box::new(b))
    }

    pub fn alt(a: Expr, b: Expr) -> Expr {
        Expr::Alt(Box::new(a), Box::new(b))
    }

    pub fn star(a: Expr) -> Expr {
        Expr::Star(Box::new(a))
    }

    pub fn from_regex(e: &Regex) -> Expr {
        match e {
            Regex::Atom(l) => Expr::Label(l.clone()),
            Regex::Epsilon => Expr::Epsilon,
            Regex::Concat(a, b) => Expr::concat(Expr::from_regex(a), Expr::from_regex(b)),
            Regex::Alt(a, b) => Expr::alt(Expr::from_regex(a), Expr::from_regex(b)),
            Regex::Star(a) => Expr::star(Expr::from_regex(a)),
        }
    }

    pub fn from_trace(tr: &Trace) -> Expr {
        Expr::from_regex(&tr.to_regex())
    }

    /// A short description of what kind of value this is.
    pub fn sort(&self) -> &'static str {
        match self {
            Expr::Name(_) => "name",
            Expr::Tss(_) => "language",
            Expr::Union(..) => "language builder",
            Expr::Label(_) | Expr::Epsilon | Expr::Concat(..) | Expr::Alt(..) | Expr::Star(_) => {
                "regular expression"
            }
            Expr::Term(_) => "term",
        }
    }

    /// The regular expression denoted, provided no names or other sorts occur inside.
    pub fn to_regex(&self) -> Result<Regex, SortError> {
        let fail = |e: &Expr| SortError::NotARegex {
            found: e.sort(),
            expr: e.to_string(),
        };
        Ok(match self {
            Expr::Label(l) => Regex::Atom(l.clone()),
            Expr::Epsilon => Regex::Epsilon,
            Expr::Concat(a, b) => Regex::concat(a.to_regex()?, b.to_regex()?),
            Expr::Alt(a, b) => Regex::alt(a.to_regex()?, b.to_regex()?),
            Expr::Star(a) => Regex::star(a.to_regex()?),
            other => return Err(fail(other)),
        })
    }

    pub fn as_channel(&self) -> Result<&Name, SortError> {
        match self {
            Expr::Name(n) => Ok(n),
            other => Err(SortError::NotAChannel {
                found: other.sort(),
                expr: other.to_string(),
            }),
        }
    }

    pub fn as_program(&self) -> Result<&Term, SortError> {
        match self {
            Expr::Term(t) if t.is_ground() => Ok(t),
            other => Err(SortError::NotATerm {
                found: other.sort(),
                expr: other.to_string(),
            }),
        }
    }

    pub fn free_names(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        self.collect_names(&mut out);
        out
    }

    fn collect_names(&self, out: &mut BTreeSet<Name>) {
        match self {
            Expr::Name(n) => {
                out.insert(n.clone());
            }
            Expr::Union(a, b) | Expr::Concat(a, b) | Expr::Alt(a, b) => {
                a.collect_names(out);
                b.collect_names(out);
            }
            Expr::Star(a) => a.collect_names(out),
            Expr::Tss(_) | Expr::Label(_) | Expr::Epsilon | Expr::Term(_) => {}
        }
    }

    pub fn mentions(&self, x: &Name) -> bool {
        match self {
            Expr::Name(n) => n == x,
            Expr::Union(a, b) | Expr::Concat(a, b) | Expr::Alt(a, b) => {
                a.mentions(x) || b.mentions(x)
            }
            Expr::Star(a) => a.mentions(x),
            Expr::Tss(_) | Expr::Label(_) | Expr::Epsilon | Expr::Term(_) => false,
        }
    }

    /// Replaces every occurrence of `x` by `e`; expressions have no binders.
    pub fn substitute(&self, e: &Expr, x: &Name) -> Expr {
        match self {
            Expr::Name(n) if n == x => e.clone(),
            Expr::Union(a, b) => Expr::union(a.substitute(e, x), b.substitute(e, x)),
            Expr::Concat(a, b) => Expr::concat(a.substitute(e, x), b.substitute(e, x)),
            Expr::Alt(a, b) => Expr::alt(a.substitute(e, x), b.substitute(e, x)),
            Expr::Star(a) => Expr::star(a.substitute(e, x)),
            _ => self.clone(),
        }
    }

    pub(crate) fn rename_with(&self, f: &impl Fn(&Name) -> Option<Name>) -> Expr {
        match self {
            Expr::Name(n) => Expr::Name(f(n).unwrap_or_else(|| n.clone())),
            Expr::Union(a, b) => Expr::union(a.rename_with(f), b.rename_with(f)),
            Expr::Concat(a, b) => Expr::concat(a.rename_with(f), b.rename_with(f)),
            Expr::Alt(a, b) => Expr::alt(a.rename_with(f), b.rename_with(f)),
            Expr::Star(a) => Expr::star(a.rename_with(f)),
            _ => self.clone(),
        }
    }

    fn max_id(&self) -> u32 {
        let mut m = 0;
        for n in self.free_names() {
            m = m.max(n.id());
        }
        m
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Union(..) => 0,
            Expr::Alt(..) => 1,
            Expr::Concat(..) => 2,
            Expr::Star(_) => 3,
            _ => 4,
        }
    }

    fn fmt_at(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        if self.precedence() < min {
            f.write_str("(")?;
            self.fmt_at(f, 0)?;
            return f.write_str(")");
        }
        match self {
            Expr::Name(n) => write!(f, "{n}"),
            Expr::Tss(t) => match t.name() {
                Some(name) if !name.contains(' ') => f.write_str(name),
                Some(name) => write!(f, "({name})"),
                None => f.write_str("<tss>"),
            },
            Expr::Union(a, b) => {
                a.fmt_at(f, 0)?;
                f.write_str(" union ")?;
                b.fmt_at(f, 1)
            }
            Expr::Label(l) => write!(f, "{l}"),
            Expr::Epsilon => f.write_str("%e"),
            Expr::Concat(a, b) => {
                a.fmt_at(f, 2)?;
                f.write_str(".")?;
                b.fmt_at(f, 3)
            }
            Expr::Alt(a, b) => {
                a.fmt_at(f, 1)?;
                f.write_str("|")?;
                b.fmt_at(f, 2)
            }
            Expr::Star(a) => {
                a.fmt_at(f, 3)?;
                f.write_str("*")
            }
            Expr::Term(t) => write!(f, "{t}"),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_at(f, 0)
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// `expr => handler`: run `handler` when the trace violates `expr`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monitor {
    pub expr: Expr,
    pub handler: Process,
}

/// A program execution with its accumulated trace and online monitors.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Exec {
    pub lang: Expr,
    pub chan: Expr,
    pub program: Expr,
    pub trace: Trace,
    pub monitors: Vec<Monitor>,
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Process {
    Nil,
    Input {
        chan: Expr,
        bind: Name,
        body: Box<Process>,
    },
    Output {
        chan: Expr,
        payload: Expr,
        body: Box<Process>,
    },
    Par(Vec<Process>),
    Sum(Vec<Process>),
    Restrict(Name, Box<Process>),
    Bang(Box<Process>),
    Exec(Box<Exec>),
    /// Offline check `L(subject) ⊆ L(spec)`.
    Verify {
        subject: Expr,
        spec: Expr,
        then: Box<Process>,
        otherwise: Box<Process>,
    },
    /// Language label check against an allowed list.
    Labels {
        allowed: Vec<Label>,
        lang: Expr,
        then: Box<Process>,
        otherwise: Box<Process>,
    },
}

impl Process {
    pub fn input(chan: &str, bind: &str, body: Process) -> Process {
        Process::Input {
            chan: Expr::name(chan),
            bind: Name::new(bind),
            body: Box::new(body),
        }
    }

    pub fn output(chan: &str, payload: Expr, body: Process) -> Process {
        Process::Output {
            chan: Expr::name(chan),
            payload,
            body: Box::new(body),
        }
    }

    pub fn input_on(chan: Expr, bind: Name, body: Process) -> Process {
        Process::Input {
            chan,
            bind,
            body: Box::new(body),
        }
    }

    pub fn output_on(chan: Expr, payload: Expr, body: Process) -> Process {
        Process::Output {
            chan,
            payload,
            body: Box::new(body),
        }
    }

    pub fn par(a: Process, b: Process) -> Process {
        Process::Par(vec![a, b])
    }

    pub fn sum(a: Process, b: Process) -> Process {
        Process::Sum(vec![a, b])
    }

    pub fn restrict(x: &str, body: Process) -> Process {
        Process::Restrict(Name::new(x), Box::new(body))
    }

    pub fn bang(body: Process) -> Process {
        Process::Bang(Box::new(body))
    }

    /// A fresh execution with an empty trace.
    pub fn exec(lang: Expr, chan: Expr, program: Expr, monitors: Vec<Monitor>) -> Process {
        Process::Exec(Box::new(Exec {
            lang,
            chan,
            program,
            trace: Trace::empty(),
            monitors,
        }))
    }

    pub fn verify(subject: Expr, spec: Expr, then: Process, otherwise: Process) -> Process {
        Process::Verify {
            subject,
            spec,
            then: Box::new(then),
            otherwise: Box::new(otherwise),
        }
    }

    pub fn labels(allowed: Vec<Label>, lang: Expr, then: Process, otherwise: Process) -> Process {
        Process::Labels {
            allowed,
            lang,
            then: Box::new(then),
            otherwise: Box::new(otherwise),
        }
    }

    pub fn free_names(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut out);
        out
    }

    fn collect_free(&self, out: &mut BTreeSet<Name>) {
        match self {
            Process::Nil => {}
            Process::Input { chan, bind, body } => {
                chan.collect_names(out);
                let mut inner = body.free_names();
                inner.remove(bind);
                out.extend(inner);
            }
            Process::Output {
                chan,
                payload,
                body,
            } => {
                chan.collect_names(out);
                payload.collect_names(out);
                body.collect_free(out);
            }
            Process::Par(ps) | Process::Sum(ps) => ps.iter().for_each(|p| p.collect_free(out)),
            Process::Restrict(x, body) => {
                let mut inner = body.free_names();
                inner.remove(x);
                out.extend(inner);
            }
            Process::Bang(body) => body.collect_free(out),
            Process::Exec(ex) => {
                ex.lang.collect_names(out);
                ex.chan.collect_names(out);
                ex.program.collect_names(out);
                for m in &ex.monitors {
                    m.expr.collect_names(out);
                    m.handler.collect_free(out);
                }
            }
            Process::Verify {
                subject,
                spec,
                then,
                otherwise,
            } => {
                subject.collect_names(out);
                spec.collect_names(out);
                then.collect_free(out);
                otherwise.collect_free(out);
            }
            Process::Labels {
                lang,
                then,
                otherwise,
                ..
            } => {
                lang.collect_names(out);
                then.collect_free(out);
                otherwise.collect_free(out);
            }
        }
    }

    pub fn is_free(&self, x: &Name) -> bool {
        self.free_names().contains(x)
    }

    /// `self{e/x}`, renaming binders that would capture free names of `e`.
    pub fn substitute(&self, e: &Expr, x: &Name, fresh: &mut Fresh) -> Process {
        let capture = e.free_names();
        self.subst(e, x, &capture, fresh)
    }

    fn subst(&self, e: &Expr, x: &Name, capture: &BTreeSet<Name>, fresh: &mut Fresh) -> Process {
        let sub = |ex: &Expr| ex.substitute(e, x);
        match self {
            Process::Nil => Process::Nil,
            Process::Input { chan, bind, body } => {
                let chan = sub(chan);
                if bind == x {
                    return Process::Input {
                        chan,
                        bind: bind.clone(),
                        body: body.clone(),
                    };
                }
                let (bind, body) = self.avoid(bind, body, x, capture, fresh);
                Process::Input {
                    chan,
                    bind,
                    body: Box::new(body.subst(e, x, capture, fresh)),
                }
            }
            Process::Output {
                chan,
                payload,
                body,
            } => Process::Output {
                chan: sub(chan),
                payload: sub(payload),
                body: Box::new(body.subst(e, x, capture, fresh)),
            },
            Process::Par(ps) => {
                Process::Par(ps.iter().map(|p| p.subst(e, x, capture, fresh)).collect())
            }
            Process::Sum(ps) => {
                Process::Sum(ps.iter().map(|p| p.subst(e, x, capture, fresh)).collect())
            }
            Process::Restrict(y, body) => {
                if y == x {
                    return self.clone();
                }
                let (y, body) = self.avoid(y, body, x, capture, fresh);
                Process::Restrict(y, Box::new(body.subst(e, x, capture, fresh)))
            }
            Process::Bang(body) => Process::Bang(Box::new(body.subst(e, x, capture, fresh))),
            Process::Exec(ex) => Process::Exec(Box::new(Exec {
                lang: sub(&ex.lang),
                chan: sub(&ex.chan),
                program: sub(&ex.program),
                trace: ex.trace.clone(),
                monitors: ex
                    .monitors
                    .iter()
                    .map(|m| Monitor {
                        expr: sub(&m.expr),
                        handler: m.handler.subst(e, x, capture, fresh),
                    })
                    .collect(),
            })),
            Process::Verify {
                subject,
                spec,
                then,
                otherwise,
            } => Process::Verify {
                subject: sub(subject),
                spec: sub(spec),
                then: Box::new(then.subst(e, x, capture, fresh)),
                otherwise: Box::new(otherwise.subst(e, x, capture, fresh)),
            },
            Process::Labels {
                allowed,
                lang,
                then,
                otherwise,
            } => Process::Labels {
                allowed: allowed.clone(),
                lang: sub(lang),
                then: Box::new(then.subst(e, x, capture, fresh)),
                otherwise: Box::new(otherwise.subst(e, x, capture, fresh)),
            },
        }
    }

    /// Alpha-renames binder `y` of `body` when it would capture a name of
    /// the substituted expression.
    fn avoid(
        &self,
        y: &Name,
        body: &Process,
        x: &Name,
        capture: &BTreeSet<Name>,
        fresh: &mut Fresh,
    ) -> (Name, Process) {
        if capture.contains(y) && body.is_free(x) {
            let y2 = fresh.rename(y);
            let renamed = body.rename_free(y, &y2);
            (y2, renamed)
        } else {
            (y.clone(), body.clone())
        }
    }

    /// Renames free occurrences of `from` to `to`, which must be fresh.
    pub fn rename_free(&self, from: &Name, to: &Name) -> Process {
        let mut fresh = Fresh::starting_at(u32::MAX / 2);
        self.substitute(&Expr::Name(to.clone()), from, &mut fresh)
    }

    pub fn max_id(&self) -> u32 {
        max_name_id(self)
    }
}

fn max_name_id(p: &Process) -> u32 {
    let own = |e: &Expr| e.max_id();
    match p {
        Process::Nil => 0,
        Process::Input { chan, bind, body } => own(chan).max(bind.id()).max(max_name_id(body)),
        Process::Output {
            chan,
            payload,
            body,
        } => own(chan).max(own(payload)).max(max_name_id(body)),
        Process::Par(ps) | Process::Sum(ps) => ps.iter().map(max_name_id).max().unwrap_or(0),
        Process::Restrict(x, body) => x.id().max(max_name_id(body)),
        Process::Bang(body) => max_name_id(body),
        Process::Exec(ex) => ex
            .monitors
            .iter()
            .map(|m| own(&m.expr).max(max_name_id(&m.handler)))
            .fold(
                own(&ex.lang).max(own(&ex.chan)).max(own(&ex.program)),
                u32::max,
            ),
        Process::Verify {
            subject,
            spec,
            then,
            otherwise,
        } => own(subject)
            .max(own(spec))
            .max(max_name_id(then))
            .max(max_name_id(otherwise)),
        Process::Labels {
            lang,
            then,
            otherwise,
            ..
        } => own(lang).max(max_name_id(then)).max(max_name_id(otherwise)),
    }
}

/// See [`Process::substitute`].
pub fn substitute(p: &Process, e: &Expr, x: &Name, fresh: &mut Fresh) -> Process {
    p.substitute(e, x, fresh)
}

/// See [`Process::free_names`].
pub fn free_names(p: &Process) -> BTreeSet<Name> {
    p.free_names()
}

impl Process {
    fn is_atomic(&self) -> bool {
        !matches!(self, Process::Par(_) | Process::Sum(_))
    }

    fn fmt_operand(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_atomic() {
            write!(f, "{self}")
        } else {
            write!(f, "({self})")
        }
    }
}

impl fmt::Display for Process {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Process::Nil => f.write_str("0"),
            Process::Input { chan, bind, body } => {
                write!(f, "{}({bind}).", ChanFmt(chan))?;
                body.fmt_operand(f)
            }
            Process::Output {
                chan,
                payload,
                body,
            } => {
                write!(f, "{}<{payload}>.", ChanFmt(chan))?;
                body.fmt_operand(f)
            }
            Process::Par(ps) | Process::Sum(ps) if ps.is_empty() => f.write_str("0"),
            Process::Par(ps) | Process::Sum(ps) => {
                let sep = if matches!(self, Process::Par(_)) {
                    " | "
                } else {
                    " + "
                };
                for (i, p) in ps.iter().enumerate() {
                    if i > 0 {
                        f.write_str(sep)?;
                    }
                    p.fmt_operand(f)?;
                }
                Ok(())
            }
            Process::Restrict(x, body) => {
                write!(f, "new {x}.")?;
                body.fmt_operand(f)
            }
            Process::Bang(body) => {
                f.write_str("!")?;
                body.fmt_operand(f)
            }
            Process::Exec(ex) => {
                write!(f, "exec({}, {}, {}", ex.lang, ex.chan, ex.program)?;
                if !ex.trace.is_empty() {
                    write!(f, ", {}", ex.trace)?;
                }
                f.write_str(")")?;
                if !ex.monitors.is_empty() {
                    f.write_str(" { ")?;
                    for m in &ex.monitors {
                        write!(f, "{} => ", m.expr)?;
                        m.handler.fmt_operand(f)?;
                        f.write_str("; ")?;
                    }
                    f.write_str("}")?;
                }
                Ok(())
            }
            Process::Verify {
                subject,
                spec,
                then,
                otherwise,
            } => {
                write!(f, "verify({subject}, {spec}) ? ")?;
                then.fmt_operand(f)?;
                f.write_str(" : ")?;
                otherwise.fmt_operand(f)
            }
            Process::Labels {
                allowed,
                lang,
                then,
                otherwise,
            } => {
                f.write_str("labels(")?;
                for (i, l) in allowed.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{l}")?;
                }
                write!(f, "; {lang}) ? ")?;
                then.fmt_operand(f)?;
                f.write_str(" : ")?;
                otherwise.fmt_operand(f)
            }
        }
    }
}

struct ChanFmt<'a>(&'a Expr);

impl fmt::Display for ChanFmt<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Expr::Name(n) => write!(f, "{n}"),
            other => write!(f, "[{other}]"),
        }
    }
}

impl fmt::Debug for Process {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// Which language-evaluation rule fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LanRule {
    Union,
    UnionCtx1,
    UnionCtx2,
}

impl LanRule {
    pub fn as_str(self) -> &'static str {
        match self {
            LanRule::Union => "union",
            LanRule::UnionCtx1 => "union-ctx1",
            LanRule::UnionCtx2 => "union-ctx2",
        }
    }
}

/// One step of language-builder evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LanStep {
    /// Already a TSS.
    Value(TssRef),
    Reduced(Expr, LanRule),
}

/// Performs one left-innermost `union` step on a language builder.
pub fn lan_step(e: &Expr) -> Result<LanStep, SortError> {
    match e {
        Expr::Tss(t) => Ok(LanStep::Value(t.clone())),
        Expr::Union(a, b) => match (a.as_ref(), b.as_ref()) {
            (Expr::Tss(t1), Expr::Tss(t2)) => {
                let joined = t1.union(t2)?;
                Ok(LanStep::Reduced(
                    Expr::Tss(std::sync::Arc::new(joined)),
                    LanRule::Union,
                ))
            }
            (Expr::Tss(_), _) => match lan_step(b)? {
                LanStep::Reduced(b2, _) => Ok(LanStep::Reduced(
                    Expr::Union(a.clone(), Box::new(b2)),
                    LanRule::UnionCtx2,
                )),
                LanStep::Value(_) => unreachable!("a value is a TSS literal"),
            },
            _ => match lan_step(a)? {
                LanStep::Reduced(a2, _) => Ok(LanStep::Reduced(
                    Expr::Union(Box::new(a2), b.clone()),
                    LanRule::UnionCtx1,
                )),
                LanStep::Value(_) => unreachable!("a value is a TSS literal"),
            },
        },
        other => Err(SortError::NotALanguage {
            found: other.sort(),
            expr: other.to_string(),
        }),
    }
}

/// Evaluates a language builder to the TSS it denotes.
pub fn eval_lang(e: &Expr) -> Result<TssRef, SortError> {
    let mut cur = e.clone();
    loop {
        match lan_step(&cur)? {
            LanStep::Value(t) => return Ok(t),
            LanStep::Reduced(next, _) => cur = next,
        }
    }
}
