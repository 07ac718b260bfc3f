//! Signatures, first-order terms and labels.

use std::borrow::Borrow;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// An immutable, cheaply clonable identifier.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom(Arc<str>);

impl Atom {
    pub fn new(s: &str) -> Self {
        Atom(Arc::from(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for Atom {
    fn from(s: &str) -> Self {
        Atom::new(s)
    }
}

impl From<String> for Atom {
    fn from(s: String) -> Self {
        Atom(Arc::from(s))
    }
}

impl Borrow<str> for Atom {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A transition label.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label(Atom);

impl Label {
    /// Panics on an empty name; labels are always non-empty.
    pub fn new(name: &str) -> Self {
        assert!(!name.is_empty(), "label names are non-empty");
        Label(Atom::new(name))
    }

    pub fn as_str(&self) -> &str {
        self.0.as_str()
    }

    /// The complement under the `co_` naming convention: `a` <-> `co_a`.
    pub fn complement(&self) -> Label {
        match self.as_str().strip_prefix("co_") {
            Some(base) if !base.is_empty() => Label::new(base),
            _ => Label::new(&format!("co_{}", self.as_str())),
        }
    }
}

impl fmt::Debug for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SignatureError {
    #[error("function symbol `{symbol}` has arity {left} on one side and {right} on the other")]
    ArityClash {
        symbol: Atom,
        left: usize,
        right: usize,
    },
}

/// Function symbols with their arities.
#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Signature {
    functions: BTreeMap<Atom, usize>,
}

impl Signature {
    /// The empty signature.
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a signature, rejecting a symbol listed twice with different arities.
    pub fn from_symbols<'a>(
        symbols: impl IntoIterator<Item = (&'a str, usize)>,
    ) -> Result<Self, SignatureError> {
        let mut sig = Signature::empty();
        for (name, arity) in symbols {
            sig.insert(Atom::new(name), arity)?;
        }
        Ok(sig)
    }

    pub fn insert(&mut self, symbol: Atom, arity: usize) -> Result<(), SignatureError> {
        match self.functions.get(&symbol) {
            Some(&existing) if existing != arity => Err(SignatureError::ArityClash {
                symbol,
                left: existing,
                right: arity,
            }),
            _ => {
                self.functions.insert(symbol, arity);
                Ok(())
            }
        }
    }

    pub fn arity(&self, symbol: &str) -> Option<usize> {
        self.functions.get(symbol).copied()
    }

    pub fn contains(&self, symbol: &str) -> bool {
        self.functions.contains_key(symbol)
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Atom, usize)> {
        self.functions.iter().map(|(k, v)| (k, *v))
    }

    /// Componentwise union; defined only when shared symbols agree on arity.
    pub fn union(&self, other: &Signature) -> Result<Signature, SignatureError> {
        let mut functions = self.functions.clone();
        for (symbol, &arity) in &other.functions {
            match functions.get(symbol) {
                Some(&existing) if existing != arity => {
                    return Err(SignatureError::ArityClash {
                        symbol: symbol.clone(),
                        left: existing,
                        right: arity,
                    })
                }
                Some(_) => {}
                None => {
                    functions.insert(symbol.clone(), arity);
                }
            }
        }
        Ok(Signature { functions })
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map()
            .entries(self.functions.iter().map(|(k, v)| (k.as_str(), v)))
            .finish()
    }
}

/// See [`Signature::union`].
pub fn union_signatures(s1: &Signature, s2: &Signature) -> Result<Signature, SignatureError> {
    s1.union(s2)
}

/// A first-order term: a rule variable or a function application.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Var(Atom),
    App(Atom, Vec<Term>),
}

pub type Binding = BTreeMap<Atom, Term>;

impl Term {
    pub fn var(name: &str) -> Term {
        Term::Var(Atom::new(name))
    }

    pub fn constant(symbol: &str) -> Term {
        Term::App(Atom::new(symbol), Vec::new())
    }

    pub fn app(symbol: &str, args: Vec<Term>) -> Term {
        Term::App(Atom::new(symbol), args)
    }

    /// True iff every application node matches its arity in `sig`.
    pub fn well_formed(&self, sig: &Signature) -> bool {
        match self {
            Term::Var(_) => true,
            Term::App(f, args) => {
                sig.arity(f.as_str()) == Some(args.len()) && args.iter().all(|a| a.well_formed(sig))
            }
        }
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Term::Var(_) => false,
            Term::App(_, args) => args.iter().all(Term::is_ground),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Term::Var(_) => 0,
            Term::App(_, args) => args.iter().map(|a| a.depth() + 1).max().unwrap_or(0),
        }
    }

    pub fn vars(&self) -> BTreeSet<Atom> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Atom>) {
        match self {
            Term::Var(v) => {
                out.insert(v.clone());
            }
            Term::App(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
        }
    }

    /// Every variable occurs at most once.
    pub fn is_linear(&self) -> bool {
        fn walk<'a>(t: &'a Term, seen: &mut BTreeSet<&'a Atom>) -> bool {
            match t {
                Term::Var(v) => seen.insert(v),
                Term::App(_, args) => args.iter().all(|a| walk(a, seen)),
            }
        }
        walk(self, &mut BTreeSet::new())
    }

    /// Simultaneous substitution; unbound variables are left in place.
    pub fn substitute(&self, binding: &Binding) -> Term {
        match self {
            Term::Var(v) => binding.get(v).cloned().unwrap_or_else(|| self.clone()),
            Term::App(f, args) => Term::App(
                f.clone(),
                args.iter().map(|a| a.substitute(binding)).collect(),
            ),
        }
    }

    /// One-way matching of a pattern against a ground term, extending `binding`.
    /// A variable already bound must match an equal subterm, so nonlinear
    /// patterns behave as equality constraints.
    pub fn match_into(&self, ground: &Term, binding: &mut Binding) -> bool {
        match (self, ground) {
            (Term::Var(v), _) => match binding.get(v) {
                Some(bound) => bound == ground,
                None => {
                    binding.insert(v.clone(), ground.clone());
                    true
                }
            },
            (Term::App(f, ps), Term::App(g, gs)) => {
                f == g
                    && ps.len() == gs.len()
                    && ps.iter().zip(gs).all(|(p, g)| p.match_into(g, binding))
            }
            (Term::App(..), Term::Var(_)) => false,
        }
    }
}

/// See [`Term::well_formed`].
pub fn well_formed(term: &Term, sig: &Signature) -> bool {
    term.well_formed(sig)
}

/// See [`Term::substitute`].
pub fn substitute_term(term: &Term, binding: &Binding) -> Term {
    term.substitute(binding)
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "{v}"),
            Term::App(sym, args) if args.is_empty() => write!(f, "{sym}"),
            Term::App(sym, args) => {
                write!(f, "{sym}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}
