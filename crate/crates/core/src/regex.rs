//! Regular expressions over labels, traces, and the automata that decide
//! membership, inclusion and prefix feasibility.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::term::Label;

pub const DEFAULT_STATE_CAP: usize = 100_000;

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Regex {
    Atom(Label),
    Epsilon,
    Concat(Box<Regex>, Box<Regex>),
    Alt(Box<Regex>, Box<Regex>),
    Star(Box<Regex>),
}

impl Regex {
    pub fn atom(label: &str) -> Regex {
        Regex::Atom(Label::new(label))
    }

    pub fn concat(a: Regex, b: Regex) -> Regex {
        Regex::Concat(Box::new(a), Box::new(b))
    }

    pub fn alt(a: Regex, b: Regex) -> Regex {
        Regex::Alt(Box::new(a), Box::new(b))
    }

    pub fn star(a: Regex) -> Regex {
        Regex::Star(Box::new(a))
    }

    /// Left-nested concatenation of the parts, `Epsilon` when empty.
    pub fn seq(parts: impl IntoIterator<Item = Regex>) -> Regex {
        parts
            .into_iter()
            .reduce(Regex::concat)
            .unwrap_or(Regex::Epsilon)
    }

    /// Left-nested alternation; panics on an empty iterator.
    pub fn any_of(parts: impl IntoIterator<Item = Regex>) -> Regex {
        parts
            .into_iter()
            .reduce(Regex::alt)
            .expect("alternation needs at least one branch")
    }

    pub fn labels(&self) -> BTreeSet<Label> {
        let mut out = BTreeSet::new();
        self.collect_labels(&mut out);
        out
    }

    fn collect_labels(&self, out: &mut BTreeSet<Label>) {
        match self {
            Regex::Atom(l) => {
                out.insert(l.clone());
            }
            Regex::Epsilon => {}
            Regex::Concat(a, b) | Regex::Alt(a, b) => {
                a.collect_labels(out);
                b.collect_labels(out);
            }
            Regex::Star(a) => a.collect_labels(out),
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Regex::Atom(_) | Regex::Epsilon => 1,
            Regex::Concat(a, b) | Regex::Alt(a, b) => 1 + a.size() + b.size(),
            Regex::Star(a) => 1 + a.size(),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Regex::Alt(..) => 0,
            Regex::Concat(..) => 1,
            Regex::Star(_) => 2,
            Regex::Atom(_) | Regex::Epsilon => 3,
        }
    }

    fn fmt_at(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        if self.precedence() < min {
            f.write_str("(")?;
            self.fmt_at(f, 0)?;
            return f.write_str(")");
        }
        match self {
            Regex::Atom(l) => write!(f, "{l}"),
            Regex::Epsilon => f.write_str("%e"),
            Regex::Concat(a, b) => {
                a.fmt_at(f, 1)?;
                f.write_str(".")?;
                b.fmt_at(f, 2)
            }
            Regex::Alt(a, b) => {
                a.fmt_at(f, 0)?;
                f.write_str("|")?;
                b.fmt_at(f, 1)
            }
            Regex::Star(a) => {
                a.fmt_at(f, 2)?;
                f.write_str("*")
            }
        }
    }
}

/// `.` binds tighter than `|`; both associate to the left.
impl fmt::Display for Regex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_at(f, 0)
    }
}

impl fmt::Debug for Regex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// A finite label sequence; as a regex it denotes a single string.
#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Trace(Vec<Label>);

impl Trace {
    pub fn empty() -> Self {
        Trace(Vec::new())
    }

    pub fn from_labels(labels: impl IntoIterator<Item = Label>) -> Self {
        Trace(labels.into_iter().collect())
    }

    pub fn parse_dotted(s: &str) -> Self {
        Trace(
            s.split('.')
                .map(str::trim)
                .filter(|p| !p.is_empty() && *p != "%e")
                .map(Label::new)
                .collect(),
        )
    }

    pub fn labels(&self) -> &[Label] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn append(&self, label: Label) -> Trace {
        let mut labels = self.0.clone();
        labels.push(label);
        Trace(labels)
    }

    pub fn to_regex(&self) -> Regex {
        Regex::seq(self.0.iter().cloned().map(Regex::Atom))
    }

    /// Inverse of [`Trace::to_regex`]: accepts only concatenations of atoms and epsilons.
    pub fn from_regex(e: &Regex) -> Option<Trace> {
        fn walk(e: &Regex, out: &mut Vec<Label>) -> bool {
            match e {
                Regex::Atom(l) => {
                    out.push(l.clone());
                    true
                }
                Regex::Epsilon => true,
                Regex::Concat(a, b) => walk(a, out) && walk(b, out),
                Regex::Alt(..) | Regex::Star(_) => false,
            }
        }
        let mut labels = Vec::new();
        walk(e, &mut labels).then_some(Trace(labels))
    }
}

impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("%e");
        }
        for (i, l) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// See [`Trace::append`].
pub fn append(tr: &Trace, label: Label) -> Trace {
    tr.append(label)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("determinization exceeded {cap} states")]
pub struct AutomatonTooLarge {
    pub cap: usize,
}

/// Thompson automaton with epsilon moves and a single accepting state.
#[derive(Debug, Clone)]
pub struct Nfa {
    edges: Vec<Vec<(Option<Label>, usize)>>,
    start: usize,
    accept: usize,
    alphabet: BTreeSet<Label>,
}

/// Builds the Thompson automaton of `e`.
pub fn compile(e: &Regex) -> Nfa {
    let mut nfa = Nfa {
        edges: Vec::new(),
        start: 0,
        accept: 0,
        alphabet: e.labels(),
    };
    let (s, a) = nfa.build(e);
    nfa.start = s;
    nfa.accept = a;
    nfa
}

pub type StateSet = BTreeSet<usize>;

impl Nfa {
    fn state(&mut self) -> usize {
        self.edges.push(Vec::new());
        self.edges.len() - 1
    }

    fn build(&mut self, e: &Regex) -> (usize, usize) {
        match e {
            Regex::Atom(l) => {
                let (s, a) = (self.state(), self.state());
                self.edges[s].push((Some(l.clone()), a));
                (s, a)
            }
            Regex::Epsilon => {
                let (s, a) = (self.state(), self.state());
                self.edges[s].push((None, a));
                (s, a)
            }
            Regex::Concat(x, y) => {
                let (s1, a1) = self.build(x);
                let (s2, a2) = self.build(y);
                self.edges[a1].push((None, s2));
                (s1, a2)
            }
            Regex::Alt(x, y) => {
                let (s, a) = (self.state(), self.state());
                let (s1, a1) = self.build(x);
                let (s2, a2) = self.build(y);
                self.edges[s].push((None, s1));
                self.edges[s].push((None, s2));
                self.edges[a1].push((None, a));
                self.edges[a2].push((None, a));
                (s, a)
            }
            Regex::Star(x) => {
                let (s, a) = (self.state(), self.state());
                let (s1, a1) = self.build(x);
                self.edges[s].push((None, s1));
                self.edges[s].push((None, a));
                self.edges[a1].push((None, s1));
                self.edges[a1].push((None, a));
                (s, a)
            }
        }
    }

    pub fn num_states(&self) -> usize {
        self.edges.len()
    }

    pub fn alphabet(&self) -> &BTreeSet<Label> {
        &self.alphabet
    }

    pub fn start_set(&self) -> StateSet {
        self.closure([self.start])
    }

    pub fn closure(&self, states: impl IntoIterator<Item = usize>) -> StateSet {
        let mut set: StateSet = states.into_iter().collect();
        let mut stack: Vec<usize> = set.iter().copied().collect();
        while let Some(s) = stack.pop() {
            for (sym, t) in &self.edges[s] {
                if sym.is_none() && set.insert(*t) {
                    stack.push(*t);
                }
            }
        }
        set
    }

    pub fn step(&self, states: &StateSet, label: &Label) -> StateSet {
        let moved = states.iter().flat_map(|&s| {
            self.edges[s]
                .iter()
                .filter(move |(sym, _)| sym.as_ref() == Some(label))
                .map(|(_, t)| *t)
        });
        self.closure(moved.collect::<Vec<_>>())
    }

    pub fn run(&self, word: &[Label]) -> StateSet {
        word.iter()
            .fold(self.start_set(), |set, label| self.step(&set, label))
    }

    pub fn is_accepting(&self, states: &StateSet) -> bool {
        states.contains(&self.accept)
    }

    pub fn accepts(&self, word: &[Label]) -> bool {
        self.is_accepting(&self.run(word))
    }

    /// States from which the accepting state is reachable.
    pub fn live_states(&self) -> Vec<bool> {
        let mut rev: Vec<Vec<usize>> = vec![Vec::new(); self.edges.len()];
        for (s, out) in self.edges.iter().enumerate() {
            for (_, t) in out {
                rev[*t].push(s);
            }
        }
        let mut live = vec![false; self.edges.len()];
        live[self.accept] = true;
        let mut stack = vec![self.accept];
        while let Some(s) = stack.pop() {
            for &p in &rev[s] {
                if !live[p] {
                    live[p] = true;
                    stack.push(p);
                }
            }
        }
        live
    }

    /// Subset construction over `alphabet`, totalised with a sink.
    pub fn determinize(&self, alphabet: &[Label], cap: usize) -> Result<Dfa, AutomatonTooLarge> {
        let mut index: HashMap<StateSet, usize> = HashMap::new();
        let mut sets: Vec<StateSet> = Vec::new();
        let mut delta: Vec<Vec<usize>> = Vec::new();
        let start = self.start_set();
        index.insert(start.clone(), 0);
        sets.push(start);
        let mut next = 0;
        while next < sets.len() {
            let current = sets[next].clone();
            let mut row = Vec::with_capacity(alphabet.len());
            for label in alphabet {
                let target = self.step(&current, label);
                let id = match index.get(&target) {
                    Some(&id) => id,
                    None => {
                        if sets.len() >= cap {
                            return Err(AutomatonTooLarge { cap });
                        }
                        index.insert(target.clone(), sets.len());
                        sets.push(target);
                        sets.len() - 1
                    }
                };
                row.push(id);
            }
            delta.push(row);
            next += 1;
        }
        Ok(Dfa {
            alphabet: alphabet.to_vec(),
            accepting: sets.iter().map(|s| self.is_accepting(s)).collect(),
            delta,
            start: 0,
        })
    }
}

/// Complete deterministic automaton.
#[derive(Debug, Clone)]
pub struct Dfa {
    alphabet: Vec<Label>,
    delta: Vec<Vec<usize>>,
    start: usize,
    accepting: Vec<bool>,
}

impl Dfa {
    pub fn num_states(&self) -> usize {
        self.delta.len()
    }

    pub fn alphabet(&self) -> &[Label] {
        &self.alphabet
    }

    /// `None` when a letter lies outside the alphabet.
    pub fn run(&self, word: &[Label]) -> Option<usize> {
        word.iter().try_fold(self.start, |s, l| {
            let i = self.alphabet.iter().position(|a| a == l)?;
            Some(self.delta[s][i])
        })
    }

    pub fn accepts(&self, word: &[Label]) -> bool {
        self.run(word).is_some_and(|s| self.accepting[s])
    }

    pub fn complement(&self) -> Dfa {
        Dfa {
            accepting: self.accepting.iter().map(|a| !a).collect(),
            ..self.clone()
        }
    }
}

/// Membership of the single string of `tr` in the language of `e`.
pub fn member(tr: &Trace, e: &Regex) -> bool {
    compile(e).accepts(tr.labels())
}

/// Some extension of `tr` belongs to the language of `e`.
pub fn prefix_feasible(tr: &Trace, e: &Regex) -> bool {
    let nfa = compile(e);
    let live = nfa.live_states();
    nfa.run(tr.labels()).iter().any(|&s| live[s])
}

/// Language inclusion `L(e1) ⊆ L(e2)`.
pub fn include(e1: &Regex, e2: &Regex) -> Result<bool, AutomatonTooLarge> {
    Ok(inclusion_witness(e1, e2, &BTreeSet::new(), DEFAULT_STATE_CAP)?.is_none())
}

/// A product state: (left NFA state, right DFA state).
type Node = (usize, usize);

/// How each product state was first reached, with the letter taken.
type Parents = HashMap<Node, Option<(Node, Option<usize>)>>;

/// A witness string in `L(e1) \ L(e2)`, or `None` when `L(e1) ⊆ L(e2)`.
///
/// `e2` is determinized over the labels of both expressions plus `extra`,
/// complemented, and explored in product with the automaton of `e1`.
pub fn inclusion_witness(
    e1: &Regex,
    e2: &Regex,
    extra: &BTreeSet<Label>,
    cap: usize,
) -> Result<Option<Vec<Label>>, AutomatonTooLarge> {
    let mut alphabet: BTreeSet<Label> = e1.labels();
    alphabet.extend(e2.labels());
    alphabet.extend(extra.iter().cloned());
    let alphabet: Vec<Label> = alphabet.into_iter().collect();

    let left = compile(e1);
    let right = compile(e2).determinize(&alphabet, cap)?.complement();

    // Product over (left NFA state, right DFA state); left epsilon moves
    // leave the right component in place.
    let start: Node = (left.start, right.start);
    let mut parent: Parents = HashMap::new();
    parent.insert(start, None);
    let mut queue = VecDeque::from([start]);
    while let Some(node @ (l, r)) = queue.pop_front() {
        if l == left.accept && right.accepting[r] {
            return Ok(Some(rebuild(&parent, node, &alphabet)));
        }
        for (sym, lt) in &left.edges[l] {
            let (next, letter) = match sym {
                None => ((*lt, r), None),
                Some(label) => {
                    let i = alphabet.binary_search(label).expect("label in alphabet");
                    ((*lt, right.delta[r][i]), Some(i))
                }
            };
            if let std::collections::hash_map::Entry::Vacant(v) = parent.entry(next) {
                v.insert(Some((node, letter)));
                // epsilon moves first keeps the witness short
                if letter.is_none() {
                    queue.push_front(next);
                } else {
                    queue.push_back(next);
                }
            }
        }
    }
    Ok(None)
}

fn rebuild(parent: &Parents, mut node: Node, alphabet: &[Label]) -> Vec<Label> {
    let mut word = Vec::new();
    while let Some(Some((prev, letter))) = parent.get(&node) {
        if let Some(i) = letter {
            word.push(alphabet[*i].clone());
        }
        node = *prev;
    }
    word.reverse();
    word
}
