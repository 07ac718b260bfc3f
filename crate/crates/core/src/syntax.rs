//! The `.lns` system file format: lexer, parser with name resolution,
//! validation and a printer whose output parses back to equal definitions.
//!
//! ```text
//! tss partialCCS {
//!   labels a, co_a, tau;
//!   ops nil/0, a/1, co_a/1, par/2;
//!   vars p, q, p1, q1;
//!   rule act forall x in a, co_a: x(p) -x-> p;
//!   rule sync forall x in a, co_a: p -x-> p1, q -~x-> q1 ==> par(p, q) -tau-> par(p1, q1);
//! }
//! regex fileProtocol = open.(read|write)*.close;
//! proc main = exec(partialCCS, out, par(a(nil), co_a(nil))) | out(tr).0;
//! entry main;
//! ```

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::calculus::{Expr, Monitor, Name, Process};
use crate::canon::{Configuration, MonitorMode};
use crate::regex::{Regex, Trace};
use crate::term::{Atom, Label, Signature, Term};
use crate::tss::{Formula, Rule, Transition, Tss, TssError, TssRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagnosticKind {
    Parse,
    Validation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub pos: Pos,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            DiagnosticKind::Parse => "parse error",
            DiagnosticKind::Validation => "validation error",
        };
        write!(f, "{}: {kind}: {}", self.pos, self.message)
    }
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{}", format_diagnostics(.0))]
    Invalid(Vec<Diagnostic>),
}

impl LoadError {
    pub fn diagnostics(&self) -> &[Diagnostic] {
        match self {
            LoadError::Io { .. } => &[],
            LoadError::Invalid(d) => d,
        }
    }
}

fn format_diagnostics(ds: &[Diagnostic]) -> String {
    ds.iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

/// A label in a rule declaration, possibly the complement of a schema parameter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RawLabel {
    Plain(String),
    Complement(String),
}

impl fmt::Display for RawLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RawLabel::Plain(s) => f.write_str(s),
            RawLabel::Complement(s) => write!(f, "~{s}"),
        }
    }
}

/// `source -label-> target`, or `source -label-/>` when `target` is `None`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawFormula {
    pub source: Term,
    pub label: RawLabel,
    pub target: Option<Term>,
}

impl fmt::Display for RawFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.target {
            Some(t) => write!(f, "{} -{}-> {}", self.source, self.label, t),
            None => write!(f, "{} -{}-/>", self.source, self.label),
        }
    }
}

/// `forall param in values`: the rule is instantiated once per value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    pub param: String,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleDecl {
    pub name: Option<String>,
    pub schema: Option<Schema>,
    pub premises: Vec<RawFormula>,
    pub conclusion: RawFormula,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TssBlock {
    pub labels: Vec<String>,
    pub ops: Vec<(String, usize)>,
    pub vars: Vec<String>,
    pub rules: Vec<RuleDecl>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TssSource {
    Block(TssBlock),
    /// `tss C = A union B union ...;`, folded left to right at load time.
    Union(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TssDef {
    pub name: String,
    pub source: TssSource,
    pub tss: TssRef,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Definition {
    Tss(TssDef),
    Regex { name: String, regex: Regex },
    Term { name: String, term: Term },
    Labels { name: String, labels: Vec<Label> },
    Proc { name: String, process: Process },
}

impl Definition {
    pub fn name(&self) -> &str {
        match self {
            Definition::Tss(d) => &d.name,
            Definition::Regex { name, .. }
            | Definition::Term { name, .. }
            | Definition::Labels { name, .. }
            | Definition::Proc { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Options {
    pub mode: Option<MonitorMode>,
    pub seed: Option<u64>,
    pub max_steps: Option<usize>,
    pub depth: Option<usize>,
    pub max_nodes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemFile {
    pub defs: Vec<Definition>,
    pub entry: String,
    pub options: Options,
}

impl SystemFile {
    pub fn parse(src: &str) -> Result<SystemFile, LoadError> {
        let tokens = lex(src).map_err(|d| LoadError::Invalid(vec![d]))?;
        let mut p = Parser::new(tokens);
        let out = p.file();
        match out {
            Ok(file) if p.errors.is_empty() => Ok(file),
            Ok(_) => Err(LoadError::Invalid(p.errors)),
            Err(d) => {
                p.errors.push(d);
                Err(LoadError::Invalid(p.errors))
            }
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<SystemFile, LoadError> {
        let path = path.as_ref();
        let src = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
            path: path.display().to_string(),
            source,
        })?;
        SystemFile::parse(&src)
    }

    pub fn def(&self, name: &str) -> Option<&Definition> {
        self.defs.iter().find(|d| d.name() == name)
    }

    pub fn tss(&self, name: &str) -> Option<&TssRef> {
        self.defs.iter().find_map(|d| match d {
            Definition::Tss(t) if t.name == name => Some(&t.tss),
            _ => None,
        })
    }

    pub fn tss_defs(&self) -> impl Iterator<Item = &TssDef> {
        self.defs.iter().filter_map(|d| match d {
            Definition::Tss(t) => Some(t),
            _ => None,
        })
    }

    pub fn regex(&self, name: &str) -> Option<&Regex> {
        self.defs.iter().find_map(|d| match d {
            Definition::Regex { name: n, regex } if n == name => Some(regex),
            _ => None,
        })
    }

    pub fn term(&self, name: &str) -> Option<&Term> {
        self.defs.iter().find_map(|d| match d {
            Definition::Term { name: n, term } if n == name => Some(term),
            _ => None,
        })
    }

    pub fn process(&self, name: &str) -> Option<&Process> {
        self.defs.iter().find_map(|d| match d {
            Definition::Proc { name: n, process } if n == name => Some(process),
            _ => None,
        })
    }

    pub fn entry_process(&self) -> &Process {
        self.process(&self.entry).expect("entry validated at load")
    }

    /// The entry process as a configuration, in `mode` or the file's own mode.
    pub fn configuration(&self, mode: Option<MonitorMode>) -> Configuration {
        let mode = mode.or(self.options.mode).unwrap_or_default();
        Configuration::new(self.entry_process().clone(), mode)
    }

    /// Source text that parses back to an equal `SystemFile`.
    pub fn to_source(&self) -> String {
        let mut s = String::new();
        for d in &self.defs {
            match d {
                Definition::Tss(t) => match &t.source {
                    TssSource::Union(parts) => {
                        let _ = writeln!(s, "tss {} = {};", t.name, parts.join(" union "));
                    }
                    TssSource::Block(b) => {
                        let _ = writeln!(s, "tss {} {{", t.name);
                        if !b.labels.is_empty() {
                            let _ = writeln!(s, "  labels {};", b.labels.join(", "));
                        }
                        if !b.ops.is_empty() {
                            let ops: Vec<String> =
                                b.ops.iter().map(|(f, n)| format!("{f}/{n}")).collect();
                            let _ = writeln!(s, "  ops {};", ops.join(", "));
                        }
                        if !b.vars.is_empty() {
                            let _ = writeln!(s, "  vars {};", b.vars.join(", "));
                        }
                        for r in &b.rules {
                            s += "  rule";
                            if let Some(n) = &r.name {
                                let _ = write!(s, " {n}");
                            }
                            if let Some(sc) = &r.schema {
                                let _ =
                                    write!(s, " forall {} in {}", sc.param, sc.values.join(", "));
                            }
                            s += ": ";
                            if !r.premises.is_empty() {
                                let ps: Vec<String> =
                                    r.premises.iter().map(|p| p.to_string()).collect();
                                let _ = write!(s, "{} ==> ", ps.join(", "));
                            }
                            let _ = writeln!(s, "{};", r.conclusion);
                        }
                        s += "}\n";
                    }
                },
                Definition::Regex { name, regex } => {
                    let _ = writeln!(s, "regex {name} = {regex};");
                }
                Definition::Term { name, term } => {
                    let _ = writeln!(s, "term {name} = {term};");
                }
                Definition::Labels { name, labels } => {
                    let ls: Vec<String> = labels.iter().map(|l| l.to_string()).collect();
                    let _ = writeln!(s, "labels {name} = {};", ls.join(", "));
                }
                Definition::Proc { name, process } => {
                    let _ = writeln!(s, "proc {name} = {process};");
                }
            }
        }
        let o = &self.options;
        if let Some(m) = o.mode {
            let _ = writeln!(s, "option mode = {m};");
        }
        if let Some(v) = o.seed {
            let _ = writeln!(s, "option seed = {v};");
        }
        if let Some(v) = o.max_steps {
            let _ = writeln!(s, "option max_steps = {v};");
        }
        if let Some(v) = o.depth {
            let _ = writeln!(s, "option depth = {v};");
        }
        if let Some(v) = o.max_nodes {
            let _ = writeln!(s, "option max_nodes = {v};");
        }
        let _ = writeln!(s, "entry {};", self.entry);
        s
    }
}

/// Parses a standalone regular expression such as `open.(read|write)*.close`.
pub fn parse_regex(src: &str) -> Result<Regex, LoadError> {
    parse_regex_with(src, &HashMap::new())
}

fn parse_regex_with(src: &str, defs: &HashMap<String, Regex>) -> Result<Regex, LoadError> {
    let tokens = lex(src).map_err(|d| LoadError::Invalid(vec![d]))?;
    let mut p = Parser::new(tokens);
    p.env.regex = defs.clone();
    let result = p.expr(Hint::Regex).and_then(|e| {
        p.expect_eof()?;
        let pos = Pos { line: 1, col: 1 };
        e.to_regex()
            .map_err(|err| p.validation(pos, err.to_string()))
    });
    result.map_err(|d| LoadError::Invalid(vec![d]))
}

/// Parses a ground term such as `par(a(nil), co_a(nil))`.
pub fn parse_term(src: &str) -> Result<Term, LoadError> {
    parse_term_with(src, &HashMap::new())
}

fn parse_term_with(src: &str, defs: &HashMap<String, Term>) -> Result<Term, LoadError> {
    let tokens = lex(src).map_err(|d| LoadError::Invalid(vec![d]))?;
    let mut p = Parser::new(tokens);
    p.env.terms = defs.clone();
    let result = p.term(&HashSet::new()).and_then(|t| {
        p.expect_eof()?;
        Ok(t)
    });
    result.map_err(|d| LoadError::Invalid(vec![d]))
}

impl SystemFile {
    /// Parses a regular expression that may mention this file's regex definitions.
    pub fn parse_regex(&self, src: &str) -> Result<Regex, LoadError> {
        let defs = self
            .defs
            .iter()
            .filter_map(|d| match d {
                Definition::Regex { name, regex } => Some((name.clone(), regex.clone())),
                _ => None,
            })
            .collect();
        parse_regex_with(src, &defs)
    }

    /// Parses a ground term that may mention this file's term definitions.
    pub fn parse_term(&self, src: &str) -> Result<Term, LoadError> {
        let defs = self
            .defs
            .iter()
            .filter_map(|d| match d {
                Definition::Term { name, term } => Some((name.clone(), term.clone())),
                _ => None,
            })
            .collect();
        parse_term_with(src, &defs)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Semi,
    Comma,
    Colon,
    Dot,
    Pipe,
    Plus,
    Star,
    Bang,
    Lt,
    Gt,
    Eq,
    Question,
    Tilde,
    Slash,
    Eps,
    Minus,
    Arrow,
    NegArrow,
    Implies,
    FatArrow,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tok::Ident(s) => return write!(f, "`{s}`"),
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::Semi => ";",
            Tok::Comma => ",",
            Tok::Colon => ":",
            Tok::Dot => ".",
            Tok::Pipe => "|",
            Tok::Plus => "+",
            Tok::Star => "*",
            Tok::Bang => "!",
            Tok::Lt => "<",
            Tok::Gt => ">",
            Tok::Eq => "=",
            Tok::Question => "?",
            Tok::Tilde => "~",
            Tok::Slash => "/",
            Tok::Eps => "%e",
            Tok::Minus => "-",
            Tok::Arrow => "->",
            Tok::NegArrow => "-/>",
            Tok::Implies => "==>",
            Tok::FatArrow => "=>",
            Tok::Eof => return f.write_str("end of input"),
        };
        write!(f, "`{s}`")
    }
}

fn lex(src: &str) -> Result<Vec<(Tok, Pos)>, Diagnostic> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        let starts = |s: &str| {
            s.chars()
                .enumerate()
                .all(|(k, ch)| chars.get(i + k) == Some(&ch))
        };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if starts("//") {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c.is_ascii_alphanumeric() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            col += i - start;
            out.push((Tok::Ident(word), pos));
            continue;
        }
        let (tok, len) = if starts("==>") {
            (Tok::Implies, 3)
        } else if starts("-/>") {
            (Tok::NegArrow, 3)
        } else if starts("=>") {
            (Tok::FatArrow, 2)
        } else if starts("->") {
            (Tok::Arrow, 2)
        } else if starts("%e") {
            (Tok::Eps, 2)
        } else {
            let t = match c {
                '{' => Tok::LBrace,
                '}' => Tok::RBrace,
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ';' => Tok::Semi,
                ',' => Tok::Comma,
                ':' => Tok::Colon,
                '.' => Tok::Dot,
                '|' => Tok::Pipe,
                '+' => Tok::Plus,
                '*' => Tok::Star,
                '!' => Tok::Bang,
                '<' => Tok::Lt,
                '>' => Tok::Gt,
                '=' => Tok::Eq,
                '?' => Tok::Question,
                '~' => Tok::Tilde,
                '/' => Tok::Slash,
                '-' => Tok::Minus,
                other => {
                    return Err(Diagnostic {
                        kind: DiagnosticKind::Parse,
                        pos,
                        message: format!("unexpected character `{other}`"),
                    })
                }
            };
            (t, 1)
        };
        i += len;
        col += len;
        out.push((tok, pos));
    }
    out.push((Tok::Eof, Pos { line, col }));
    Ok(out)
}

/// What an expression position expects, used to resolve bare identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Hint {
    Any,
    Lang,
    Term,
    Regex,
}

#[derive(Default)]
struct Env {
    tss: HashMap<String, TssRef>,
    regex: HashMap<String, Regex>,
    terms: HashMap<String, Term>,
    labelsets: HashMap<String, Vec<Label>>,
    procs: HashMap<String, Process>,
    /// Labels declared by TSSs or mentioned in regex definitions.
    labels: HashSet<String>,
    /// Constants of declared signatures.
    constants: HashSet<String>,
}

impl Env {
    fn defined(&self, name: &str) -> bool {
        self.tss.contains_key(name)
            || self.regex.contains_key(name)
            || self.terms.contains_key(name)
            || self.labelsets.contains_key(name)
            || self.procs.contains_key(name)
    }
}

struct Parser {
    tokens: Vec<(Tok, Pos)>,
    idx: usize,
    env: Env,
    /// Names bound by enclosing inputs and restrictions.
    scope: Vec<String>,
    errors: Vec<Diagnostic>,
}

type PResult<T> = Result<T, Diagnostic>;

impl Parser {
    fn new(tokens: Vec<(Tok, Pos)>) -> Self {
        Parser {
            tokens,
            idx: 0,
            env: Env::default(),
            scope: Vec::new(),
            errors: Vec::new(),
        }
    }

    fn peek(&self) -> &Tok {
        &self.tokens[self.idx].0
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.idx + k).min(self.tokens.len() - 1);
        &self.tokens[i].0
    }

    fn pos(&self) -> Pos {
        self.tokens[self.idx].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.tokens[self.idx].0.clone();
        if self.idx + 1 < self.tokens.len() {
            self.idx += 1;
        }
        t
    }

    fn error(&self, message: impl Into<String>) -> Diagnostic {
        Diagnostic {
            kind: DiagnosticKind::Parse,
            pos: self.pos(),
            message: message.into(),
        }
    }

    fn validation(&self, pos: Pos, message: impl Into<String>) -> Diagnostic {
        Diagnostic {
            kind: DiagnosticKind::Validation,
            pos,
            message: message.into(),
        }
    }

    fn report(&mut self, pos: Pos, message: impl Into<String>) {
        let d = self.validation(pos, message);
        self.errors.push(d);
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: &Tok) -> PResult<()> {
        if self.eat(t) {
            Ok(())
        } else {
            Err(self.error(format!("expected {t}, found {}", self.peek())))
        }
    }

    fn expect_eof(&mut self) -> PResult<()> {
        self.expect(&Tok::Eof)
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            other => Err(self.error(format!("expected an identifier, found {other}"))),
        }
    }

    fn number(&mut self) -> PResult<u64> {
        let pos = self.pos();
        let s = self.ident()?;
        s.parse()
            .map_err(|_| self.validation(pos, format!("expected a number, found `{s}`")))
    }

    fn comma_list<T>(&mut self, mut item: impl FnMut(&mut Self) -> PResult<T>) -> PResult<Vec<T>> {
        let mut out = vec![item(self)?];
        while self.eat(&Tok::Comma) {
            out.push(item(self)?);
        }
        Ok(out)
    }

    fn file(&mut self) -> PResult<SystemFile> {
        let mut defs = Vec::new();
        let mut entry: Option<(String, Pos)> = None;
        let mut options = Options::default();
        while self.peek() != &Tok::Eof {
            let pos = self.pos();
            let kw = self.ident()?;
            match kw.as_str() {
                "tss" | "regex" | "term" | "labels" | "proc" => {
                    let name_pos = self.pos();
                    let name = self.ident()?;
                    if self.env.defined(&name) {
                        self.report(name_pos, format!("`{name}` is already defined"));
                    }
                    let def = match kw.as_str() {
                        "tss" => Definition::Tss(self.tss_def(name)?),
                        "regex" => self.regex_def(name)?,
                        "term" => self.term_def(name)?,
                        "labels" => self.labels_def(name)?,
                        _ => self.proc_def(name)?,
                    };
                    defs.push(def);
                }
                "entry" => {
                    let p = self.pos();
                    let name = self.ident()?;
                    self.expect(&Tok::Semi)?;
                    if entry.is_some() {
                        self.report(p, "more than one entry");
                    }
                    entry = Some((name, p));
                }
                "option" => self.option(&mut options)?,
                other => {
                    return Err(Diagnostic {
                        kind: DiagnosticKind::Parse,
                        pos,
                        message: format!(
                        "expected tss, regex, term, labels, proc, option or entry, found `{other}`"
                    ),
                    })
                }
            }
        }
        let entry = match entry {
            None => {
                self.report(self.pos(), "no entry: add `entry <process>;`");
                String::new()
            }
            Some((name, p)) => {
                if !self.env.procs.contains_key(&name) {
                    self.report(p, format!("entry `{name}` is not a defined process"));
                }
                name
            }
        };
        Ok(SystemFile {
            defs,
            entry,
            options,
        })
    }

    fn option(&mut self, options: &mut Options) -> PResult<()> {
        let pos = self.pos();
        let key = self.ident()?;
        self.expect(&Tok::Eq)?;
        match key.as_str() {
            "mode" => {
                let vpos = self.pos();
                let v = self.ident()?;
                match v.parse() {
                    Ok(m) => options.mode = Some(m),
                    Err(e) => self.report(vpos, e),
                }
            }
            "seed" => options.seed = Some(self.number()?),
            "max_steps" => options.max_steps = Some(self.number()? as usize),
            "depth" => options.depth = Some(self.number()? as usize),
            "max_nodes" => options.max_nodes = Some(self.number()? as usize),
            other => {
                self.report(pos, format!("unknown option `{other}`"));
                self.bump();
            }
        }
        self.expect(&Tok::Semi)
    }

    fn tss_def(&mut self, name: String) -> PResult<TssDef> {
        let pos = self.pos();
        if self.eat(&Tok::Eq) {
            let parts = self.union_parts()?;
            self.expect(&Tok::Semi)?;
            let mut acc: Option<Tss> = None;
            for (part, ppos) in &parts {
                let Some(t) = self.env.tss.get(part).cloned() else {
                    self.report(*ppos, format!("`{part}` is not a defined TSS"));
                    continue;
                };
                acc = Some(match acc {
                    None => (*t).clone(),
                    Some(a) => match a.union(&t) {
                        Ok(u) => u,
                        Err(e) => {
                            self.report(*ppos, format!("union is undefined: {e}"));
                            a
                        }
                    },
                });
            }
            let tss = Arc::new(acc.unwrap_or_else(Tss::empty).named(&name));
            self.register_tss(&name, &tss);
            return Ok(TssDef {
                name,
                source: TssSource::Union(parts.into_iter().map(|(p, _)| p).collect()),
                tss,
            });
        }
        self.expect(&Tok::LBrace)?;
        let mut block = TssBlock::default();
        let mut rule_pos = Vec::new();
        while !self.eat(&Tok::RBrace) {
            let kpos = self.pos();
            let kw = self.ident()?;
            match kw.as_str() {
                "labels" => {
                    let ls = self.comma_list(Self::ident)?;
                    block.labels.extend(ls);
                }
                "ops" => {
                    let ops = self.comma_list(|p| {
                        let f = p.ident()?;
                        p.expect(&Tok::Slash)?;
                        let n = p.number()? as usize;
                        Ok((f, n))
                    })?;
                    block.ops.extend(ops);
                }
                "vars" => {
                    let vs = self.comma_list(Self::ident)?;
                    block.vars.extend(vs);
                }
                "rule" => {
                    rule_pos.push(self.pos());
                    let vars: HashSet<String> = block.vars.iter().cloned().collect();
                    block.rules.push(self.rule_decl(&vars)?);
                    continue;
                }
                other => {
                    return Err(Diagnostic {
                        kind: DiagnosticKind::Parse,
                        pos: kpos,
                        message: format!("expected labels, ops, vars or rule, found `{other}`"),
                    })
                }
            }
            self.expect(&Tok::Semi)?;
        }
        let tss = Arc::new(self.build_tss(&name, &block, pos, &rule_pos));
        self.register_tss(&name, &tss);
        Ok(TssDef {
            name,
            source: TssSource::Block(block),
            tss,
        })
    }

    fn union_parts(&mut self) -> PResult<Vec<(String, Pos)>> {
        let mut parts = vec![(self.pos(), self.ident()?)];
        while self.is_keyword("union") {
            self.bump();
            parts.push((self.pos(), self.ident()?));
        }
        Ok(parts.into_iter().map(|(p, s)| (s, p)).collect())
    }

    fn register_tss(&mut self, name: &str, tss: &TssRef) {
        for l in tss.labels() {
            self.env.labels.insert(l.to_string());
        }
        for (f, n) in tss.signature().iter() {
            if n == 0 {
                self.env.constants.insert(f.to_string());
            }
        }
        self.env.tss.insert(name.to_string(), tss.clone());
    }

    fn rule_decl(&mut self, vars: &HashSet<String>) -> PResult<RuleDecl> {
        let mut name = None;
        if let Tok::Ident(s) = self.peek().clone() {
            if s != "forall" {
                self.bump();
                name = Some(s);
            }
        }
        let mut schema = None;
        if self.is_keyword("forall") {
            self.bump();
            let param = self.ident()?;
            if !self.is_keyword("in") {
                return Err(self.error(format!("expected `in`, found {}", self.peek())));
            }
            self.bump();
            let values = self.comma_list(Self::ident)?;
            schema = Some(Schema { param, values });
        }
        self.expect(&Tok::Colon)?;
        let mut formulas = Vec::new();
        if self.peek() != &Tok::Implies {
            formulas = self.comma_list(|p| p.formula(vars))?;
        }
        let (premises, conclusion) = if self.eat(&Tok::Implies) {
            let c = self.formula(vars)?;
            (formulas, c)
        } else if formulas.len() == 1 {
            (Vec::new(), formulas.pop().unwrap())
        } else {
            return Err(self.error("expected `==>` before the conclusion"));
        };
        self.expect(&Tok::Semi)?;
        if conclusion.target.is_none() {
            return Err(self.error("the conclusion of a rule must be a positive transition"));
        }
        Ok(RuleDecl {
            name,
            schema,
            premises,
            conclusion,
        })
    }

    fn formula(&mut self, vars: &HashSet<String>) -> PResult<RawFormula> {
        let source = self.term(vars)?;
        self.expect(&Tok::Minus)?;
        let label = if self.eat(&Tok::Tilde) {
            RawLabel::Complement(self.ident()?)
        } else {
            RawLabel::Plain(self.ident()?)
        };
        let target = match self.bump() {
            Tok::Arrow => Some(self.term(vars)?),
            Tok::NegArrow => None,
            other => return Err(self.error(format!("expected `->` or `-/>`, found {other}"))),
        };
        Ok(RawFormula {
            source,
            label,
            target,
        })
    }

    /// A term; identifiers in `vars` are variables, term definitions are inlined.
    fn term(&mut self, vars: &HashSet<String>) -> PResult<Term> {
        let f = self.ident()?;
        if self.eat(&Tok::LParen) {
            let args = if self.peek() == &Tok::RParen {
                Vec::new()
            } else {
                self.comma_list(|p| p.term(vars))?
            };
            self.expect(&Tok::RParen)?;
            return Ok(Term::app(&f, args));
        }
        if vars.contains(&f) {
            return Ok(Term::var(&f));
        }
        if let Some(t) = self.env.terms.get(&f) {
            return Ok(t.clone());
        }
        Ok(Term::constant(&f))
    }

    fn build_tss(&mut self, name: &str, block: &TssBlock, pos: Pos, rule_pos: &[Pos]) -> Tss {
        let mut sig = Signature::empty();
        for (f, n) in &block.ops {
            if let Err(e) = sig.insert(Atom::new(f), *n) {
                self.report(pos, format!("in `{name}`: {e}"));
            }
        }
        let labels: BTreeSet<Label> = block.labels.iter().map(|l| Label::new(l)).collect();
        let mut rules = Vec::new();
        let mut origin: HashMap<String, Pos> = HashMap::new();
        for (decl, rpos) in block.rules.iter().zip(rule_pos) {
            for rule in instantiate(decl) {
                origin.insert(rule.display_name(), *rpos);
                rules.push(rule);
            }
        }
        let tss = Tss::new(sig, labels, rules).named(name);
        if let Err(errs) = tss.validate() {
            for e in errs {
                let rule = match &e {
                    TssError::UndeclaredLabel { rule, .. }
                    | TssError::IllFormedTerm { rule, .. }
                    | TssError::NonlinearSource { rule, .. }
                    | TssError::VariableShadowsSymbol { rule, .. } => rule.clone(),
                };
                let at = origin.get(&rule).copied().unwrap_or(pos);
                self.report(at, format!("in `{name}`: {e}"));
            }
        }
        tss
    }

    fn regex_def(&mut self, name: String) -> PResult<Definition> {
        self.expect(&Tok::Eq)?;
        let pos = self.pos();
        let e = self.expr(Hint::Regex)?;
        self.expect(&Tok::Semi)?;
        let regex = match e.to_regex() {
            Ok(r) => r,
            Err(err) => {
                self.report(pos, err.to_string());
                Regex::Epsilon
            }
        };
        for l in regex.labels() {
            self.env.labels.insert(l.to_string());
        }
        self.env.regex.insert(name.clone(), regex.clone());
        Ok(Definition::Regex { name, regex })
    }

    fn term_def(&mut self, name: String) -> PResult<Definition> {
        self.expect(&Tok::Eq)?;
        let term = self.term(&HashSet::new())?;
        self.expect(&Tok::Semi)?;
        self.env.terms.insert(name.clone(), term.clone());
        Ok(Definition::Term { name, term })
    }

    fn labels_def(&mut self, name: String) -> PResult<Definition> {
        self.expect(&Tok::Eq)?;
        let labels = self.label_list()?;
        self.expect(&Tok::Semi)?;
        for l in &labels {
            self.env.labels.insert(l.to_string());
        }
        self.env.labelsets.insert(name.clone(), labels.clone());
        Ok(Definition::Labels { name, labels })
    }

    /// Labels separated by commas; names of label definitions expand in place.
    fn label_list(&mut self) -> PResult<Vec<Label>> {
        let items = self.comma_list(Self::ident)?;
        let mut out = Vec::new();
        for it in items {
            match self.env.labelsets.get(&it) {
                Some(ls) => out.extend(ls.iter().cloned()),
                None => out.push(Label::new(&it)),
            }
        }
        Ok(out)
    }

    fn proc_def(&mut self, name: String) -> PResult<Definition> {
        self.expect(&Tok::Eq)?;
        let process = self.process()?;
        self.expect(&Tok::Semi)?;
        self.env.procs.insert(name.clone(), process.clone());
        Ok(Definition::Proc { name, process })
    }

    fn process(&mut self) -> PResult<Process> {
        let mut parts = vec![self.sum()?];
        while self.eat(&Tok::Pipe) {
            parts.push(self.sum()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            Process::Par(parts)
        })
    }

    fn sum(&mut self) -> PResult<Process> {
        let mut parts = vec![self.prefixed()?];
        while self.eat(&Tok::Plus) {
            parts.push(self.prefixed()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            Process::Sum(parts)
        })
    }

    fn with_scope<T>(
        &mut self,
        names: &[String],
        f: impl FnOnce(&mut Self) -> PResult<T>,
    ) -> PResult<T> {
        let n = self.scope.len();
        self.scope.extend(names.iter().cloned());
        let out = f(self);
        self.scope.truncate(n);
        out
    }

    fn continuation(&mut self) -> PResult<Process> {
        if self.eat(&Tok::Dot) {
            self.prefixed()
        } else {
            Ok(Process::Nil)
        }
    }

    fn prefixed(&mut self) -> PResult<Process> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::LParen => {
                self.bump();
                let p = self.process()?;
                self.expect(&Tok::RParen)?;
                Ok(p)
            }
            Tok::Bang => {
                self.bump();
                Ok(Process::Bang(Box::new(self.prefixed()?)))
            }
            Tok::Ident(s) => match s.as_str() {
                "0" => {
                    self.bump();
                    Ok(Process::Nil)
                }
                "new" if matches!(self.peek_at(1), Tok::Ident(_)) => {
                    self.bump();
                    let names = self.comma_list(Self::ident)?;
                    self.expect(&Tok::Dot)?;
                    let body = self.with_scope(&names, Self::prefixed)?;
                    Ok(names
                        .iter()
                        .rev()
                        .fold(body, |p, x| Process::Restrict(Name::new(x), Box::new(p))))
                }
                "exec" if self.peek_at(1) == &Tok::LParen => self.exec(),
                "verify" if self.peek_at(1) == &Tok::LParen => {
                    self.bump();
                    self.bump();
                    let subject = self.expr(Hint::Regex)?;
                    self.expect(&Tok::Comma)?;
                    let spec = self.expr(Hint::Regex)?;
                    self.expect(&Tok::RParen)?;
                    let (then, otherwise) = self.branches()?;
                    Ok(Process::verify(subject, spec, then, otherwise))
                }
                "labels" if self.peek_at(1) == &Tok::LParen => {
                    self.bump();
                    self.bump();
                    let allowed = self.label_list()?;
                    self.expect(&Tok::Semi)?;
                    let lang = self.expr(Hint::Lang)?;
                    self.expect(&Tok::RParen)?;
                    let (then, otherwise) = self.branches()?;
                    Ok(Process::labels(allowed, lang, then, otherwise))
                }
                _ => {
                    self.bump();
                    match self.peek() {
                        Tok::LParen => {
                            let chan = self.channel(&s, pos);
                            self.bump();
                            let binders = self.comma_list(Self::ident)?;
                            self.expect(&Tok::RParen)?;
                            let body = self.with_scope(&binders, Self::continuation)?;
                            if binders.len() == 1 {
                                return Ok(Process::input_on(chan, Name::new(&binders[0]), body));
                            }
                            // x(a, b).P is x(c).c(a).c(b).P for a fresh c.
                            let mut avoid = body.free_names();
                            avoid.extend(binders.iter().map(|b| Name::new(b)));
                            avoid.extend(chan.free_names());
                            let c = private_channel(&avoid);
                            let inner = binders.iter().rev().fold(body, |p, y| {
                                Process::input_on(Expr::Name(c.clone()), Name::new(y), p)
                            });
                            Ok(Process::input_on(chan, c, inner))
                        }
                        Tok::Lt => {
                            let chan = self.channel(&s, pos);
                            self.bump();
                            let payloads = if self.peek() == &Tok::Gt {
                                vec![Expr::Epsilon]
                            } else {
                                self.comma_list(|p| p.expr(Hint::Any))?
                            };
                            self.expect(&Tok::Gt)?;
                            let body = self.continuation()?;
                            if payloads.len() == 1 {
                                let e = payloads.into_iter().next().unwrap();
                                return Ok(Process::output_on(chan, e, body));
                            }
                            // x<e1, e2>.P is new c.x<c>.c<e1>.c<e2>.P for a fresh c.
                            let mut avoid = body.free_names();
                            avoid.extend(chan.free_names());
                            for e in &payloads {
                                avoid.extend(e.free_names());
                            }
                            let c = private_channel(&avoid);
                            let inner = payloads
                                .into_iter()
                                .rev()
                                .fold(body, |p, e| Process::output_on(Expr::Name(c.clone()), e, p));
                            let send = Process::output_on(chan, Expr::Name(c.clone()), inner);
                            Ok(Process::Restrict(c, Box::new(send)))
                        }
                        _ => match self.env.procs.get(&s) {
                            Some(p) => Ok(p.clone()),
                            None => {
                                self.report(pos, format!("`{s}` is not a defined process"));
                                Ok(Process::Nil)
                            }
                        },
                    }
                }
            },
            other => Err(self.error(format!("expected a process, found {other}"))),
        }
    }

    fn channel(&mut self, s: &str, pos: Pos) -> Expr {
        if !self.scope.iter().any(|b| b == s) && self.env.defined(s) {
            self.report(pos, format!("`{s}` is a definition, not a channel"));
        }
        Expr::Name(Name::new(s))
    }

    fn branches(&mut self) -> PResult<(Process, Process)> {
        self.expect(&Tok::Question)?;
        let then = self.prefixed()?;
        self.expect(&Tok::Colon)?;
        let otherwise = self.prefixed()?;
        Ok((then, otherwise))
    }

    fn exec(&mut self) -> PResult<Process> {
        self.bump();
        self.bump();
        let lang = self.expr(Hint::Lang)?;
        self.expect(&Tok::Comma)?;
        let cpos = self.pos();
        let chan = self.expr(Hint::Any)?;
        if !matches!(chan, Expr::Name(_)) {
            self.report(
                cpos,
                format!("the result channel must be a name, found `{chan}`"),
            );
        }
        self.expect(&Tok::Comma)?;
        let program = self.expr(Hint::Term)?;
        let mut trace = Trace::empty();
        if self.eat(&Tok::Comma) {
            let tpos = self.pos();
            let e = self.expr(Hint::Regex)?;
            match e.to_regex().ok().and_then(|r| Trace::from_regex(&r)) {
                Some(t) => trace = t,
                None => self.report(tpos, format!("`{e}` is not a trace")),
            }
        }
        self.expect(&Tok::RParen)?;
        let mut monitors = Vec::new();
        if self.eat(&Tok::LBrace) {
            while !self.eat(&Tok::RBrace) {
                let expr = self.expr(Hint::Regex)?;
                self.expect(&Tok::FatArrow)?;
                let handler = self.process()?;
                self.expect(&Tok::Semi)?;
                monitors.push(Monitor { expr, handler });
            }
        }
        let mut p = Process::exec(lang, chan, program, monitors);
        if let Process::Exec(ex) = &mut p {
            ex.trace = trace;
        }
        Ok(p)
    }

    fn expr(&mut self, hint: Hint) -> PResult<Expr> {
        let mut e = self.alt(hint)?;
        while self.is_keyword("union") {
            self.bump();
            if hint == Hint::Any || hint == Hint::Lang {
                e = Expr::union(e, self.alt(Hint::Lang)?);
            } else {
                return Err(self.error("`union` is not allowed here"));
            }
        }
        Ok(e)
    }

    fn alt(&mut self, hint: Hint) -> PResult<Expr> {
        let first = self.cat(hint)?;
        if self.peek() != &Tok::Pipe {
            return Ok(first);
        }
        let mut e = self.regex_operand(first)?;
        while self.eat(&Tok::Pipe) {
            let next = self.cat(Hint::Regex)?;
            e = Expr::alt(e, next);
        }
        Ok(e)
    }

    fn cat(&mut self, hint: Hint) -> PResult<Expr> {
        let first = self.postfix(hint)?;
        if self.peek() != &Tok::Dot {
            return Ok(first);
        }
        let mut e = self.regex_operand(first)?;
        while self.eat(&Tok::Dot) {
            let next = self.postfix(Hint::Regex)?;
            e = Expr::concat(e, next);
        }
        Ok(e)
    }

    fn postfix(&mut self, hint: Hint) -> PResult<Expr> {
        let mut e = self.atom(hint)?;
        if self.peek() == &Tok::Star {
            e = self.regex_operand(e)?;
        }
        while self.eat(&Tok::Star) {
            e = Expr::star(e);
        }
        Ok(e)
    }

    /// Re-reads an operand that turned out to be part of a regular expression.
    fn regex_operand(&mut self, e: Expr) -> PResult<Expr> {
        Ok(match e {
            // A constant read in term position is a label inside a regex.
            Expr::Term(Term::App(f, args)) if args.is_empty() => {
                Expr::Label(Label::new(f.as_str()))
            }
            other => other,
        })
    }

    fn atom(&mut self, hint: Hint) -> PResult<Expr> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Eps => {
                self.bump();
                Ok(Expr::Epsilon)
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr(hint)?;
                self.expect(&Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(s) => {
                if self.peek_at(1) == &Tok::LParen && s != "union" {
                    let t = self.term(&HashSet::new())?;
                    return Ok(Expr::Term(t));
                }
                self.bump();
                Ok(self.resolve(&s, hint, pos))
            }
            other => Err(self.error(format!("expected an expression, found {other}"))),
        }
    }

    fn resolve(&mut self, s: &str, hint: Hint, pos: Pos) -> Expr {
        if self.scope.iter().any(|b| b == s) {
            return Expr::Name(Name::new(s));
        }
        if let Some(t) = self.env.tss.get(s) {
            return Expr::Tss(t.clone());
        }
        if let Some(r) = self.env.regex.get(s) {
            return Expr::from_regex(r);
        }
        if let Some(t) = self.env.terms.get(s) {
            return Expr::Term(t.clone());
        }
        if self.env.labelsets.contains_key(s) || self.env.procs.contains_key(s) {
            self.report(pos, format!("`{s}` cannot be used as an expression"));
            return Expr::Name(Name::new(s));
        }
        match hint {
            Hint::Regex => Expr::Label(Label::new(s)),
            Hint::Term => Expr::Term(Term::constant(s)),
            Hint::Lang => {
                self.report(pos, format!("`{s}` is not a defined TSS or bound name"));
                Expr::Name(Name::new(s))
            }
            Hint::Any => {
                let is_label = self.env.labels.contains(s);
                let is_const = self.env.constants.contains(s);
                match (is_label, is_const) {
                    (true, true) => {
                        self.report(pos, format!("`{s}` is both a label and a constant"));
                        Expr::Label(Label::new(s))
                    }
                    (true, false) => Expr::Label(Label::new(s)),
                    (false, true) => Expr::Term(Term::constant(s)),
                    (false, false) => Expr::Name(Name::new(s)),
                }
            }
        }
    }
}

/// A source name for the private channel of a polyadic prefix, not in `avoid`.
fn private_channel(avoid: &BTreeSet<Name>) -> Name {
    (0..)
        .map(|i| {
            if i == 0 {
                Name::new("ch")
            } else {
                Name::new(&format!("ch{i}"))
            }
        })
        .find(|n| !avoid.contains(n))
        .unwrap()
}

/// The rules a declaration stands for, one per schema value.
fn instantiate(decl: &RuleDecl) -> Vec<Rule> {
    let Some(schema) = &decl.schema else {
        return vec![to_rule(decl, decl.name.clone(), None)];
    };
    schema
        .values
        .iter()
        .map(|v| {
            let name = decl.name.as_ref().map(|n| format!("{n}[{v}]"));
            to_rule(decl, name, Some((&schema.param, v)))
        })
        .collect()
}

fn to_rule(decl: &RuleDecl, name: Option<String>, bind: Option<(&String, &String)>) -> Rule {
    let label = |l: &RawLabel| -> String {
        match (l, bind) {
            (RawLabel::Plain(s), Some((p, v))) if s == p => v.clone(),
            (RawLabel::Complement(s), Some((p, v))) if s == p => {
                Label::new(v).complement().to_string()
            }
            (RawLabel::Complement(s), _) => Label::new(s).complement().to_string(),
            (RawLabel::Plain(s), _) => s.clone(),
        }
    };
    let term = |t: &Term| subst_symbol(t, bind);
    let formula = |f: &RawFormula| match &f.target {
        Some(t) => Formula::positive(term(&f.source), &label(&f.label), term(t)),
        None => Formula::negative(term(&f.source), &label(&f.label)),
    };
    let conclusion = Transition {
        source: term(&decl.conclusion.source),
        label: Label::new(&label(&decl.conclusion.label)),
        target: term(
            decl.conclusion
                .target
                .as_ref()
                .expect("positive conclusion"),
        ),
    };
    Rule::new(
        name.as_deref(),
        decl.premises.iter().map(formula).collect(),
        conclusion,
    )
}

fn subst_symbol(t: &Term, bind: Option<(&String, &String)>) -> Term {
    match t {
        Term::Var(_) => t.clone(),
        Term::App(f, args) => {
            let f = match bind {
                Some((p, v)) if f.as_str() == p => v.as_str(),
                _ => f.as_str(),
            };
            Term::app(f, args.iter().map(|a| subst_symbol(a, bind)).collect())
        }
    }
}
