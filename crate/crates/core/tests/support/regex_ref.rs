//! Reference regular-expression semantics via Brzozowski derivatives, kept
//! deliberately separate from the automaton construction under test.

use std::collections::{BTreeSet, HashSet, VecDeque};

use lns::regex::Regex;
use rand::Rng;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum R {
    Empty,
    Eps,
    Sym(char),
    Cat(Box<R>, Box<R>),
    Alt(BTreeSet<R>),
    Star(Box<R>),
}

fn cat(a: R, b: R) -> R {
    match (a, b) {
        (R::Empty, _) | (_, R::Empty) => R::Empty,
        (R::Eps, x) | (x, R::Eps) => x,
        // Right-associate so equal languages meet equal shapes more often.
        (R::Cat(x, y), z) => cat(*x, cat(*y, z)),
        (x, y) => R::Cat(Box::new(x), Box::new(y)),
    }
}

fn alt(a: R, b: R) -> R {
    let mut set = BTreeSet::new();
    for x in [a, b] {
        match x {
            R::Empty => {}
            R::Alt(xs) => set.extend(xs),
            x => {
                set.insert(x);
            }
        }
    }
    match set.len() {
        0 => R::Empty,
        1 => set.into_iter().next().unwrap(),
        _ => R::Alt(set),
    }
}

fn star(a: R) -> R {
    match a {
        R::Empty | R::Eps => R::Eps,
        R::Star(x) => R::Star(x),
        x => R::Star(Box::new(x)),
    }
}

impl R {
    pub fn from_regex(e: &Regex) -> R {
        match e {
            Regex::Atom(l) => {
                let mut cs = l.as_str().chars();
                let c = cs.next().expect("non-empty label");
                assert!(
                    cs.next().is_none(),
                    "reference handles one-letter labels only"
                );
                R::Sym(c)
            }
            Regex::Epsilon => R::Eps,
            Regex::Concat(a, b) => cat(R::from_regex(a), R::from_regex(b)),
            Regex::Alt(a, b) => alt(R::from_regex(a), R::from_regex(b)),
            Regex::Star(a) => star(R::from_regex(a)),
        }
    }

    pub fn nullable(&self) -> bool {
        match self {
            R::Empty | R::Sym(_) => false,
            R::Eps | R::Star(_) => true,
            R::Cat(a, b) => a.nullable() && b.nullable(),
            R::Alt(xs) => xs.iter().any(R::nullable),
        }
    }

    pub fn deriv(&self, c: char) -> R {
        match self {
            R::Empty | R::Eps => R::Empty,
            R::Sym(d) => {
                if *d == c {
                    R::Eps
                } else {
                    R::Empty
                }
            }
            R::Cat(a, b) => {
                let left = cat(a.deriv(c), (**b).clone());
                if a.nullable() {
                    alt(left, b.deriv(c))
                } else {
                    left
                }
            }
            R::Alt(xs) => xs.iter().fold(R::Empty, |acc, x| alt(acc, x.deriv(c))),
            R::Star(a) => cat(a.deriv(c), self.clone()),
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            R::Empty => true,
            R::Eps | R::Sym(_) | R::Star(_) => false,
            R::Cat(a, b) => a.is_empty() || b.is_empty(),
            R::Alt(xs) => xs.iter().all(R::is_empty),
        }
    }

    /// No extension of `word` is in the language.
    pub fn is_dead_after(&self, word: &str) -> bool {
        word.chars()
            .fold(self.clone(), |r, c| r.deriv(c))
            .is_empty()
    }

    pub fn matches(&self, word: &str) -> bool {
        word.chars()
            .fold(self.clone(), |r, c| r.deriv(c))
            .nullable()
    }

    fn symbols(&self, out: &mut BTreeSet<char>) {
        match self {
            R::Sym(c) => {
                out.insert(*c);
            }
            R::Cat(a, b) => {
                a.symbols(out);
                b.symbols(out);
            }
            R::Alt(xs) => xs.iter().for_each(|x| x.symbols(out)),
            R::Star(a) => a.symbols(out),
            R::Empty | R::Eps => {}
        }
    }
}

/// Shortest word in `L(a) \ L(b)`, by exploring pairs of derivatives.
pub fn difference_witness(a: &R, b: &R) -> Option<String> {
    let mut sigma = BTreeSet::new();
    a.symbols(&mut sigma);
    b.symbols(&mut sigma);
    let mut seen = HashSet::new();
    let mut queue = VecDeque::from([(a.clone(), b.clone(), String::new())]);
    seen.insert((a.clone(), b.clone()));
    while let Some((x, y, w)) = queue.pop_front() {
        if x.nullable() && !y.nullable() {
            return Some(w);
        }
        if x == R::Empty {
            continue;
        }
        for &c in &sigma {
            let (dx, dy) = (x.deriv(c), y.deriv(c));
            assert!(seen.len() < 200_000, "derivative space exploded");
            if seen.insert((dx.clone(), dy.clone())) {
                queue.push_back((dx, dy, format!("{w}{c}")));
            }
        }
    }
    None
}

pub fn includes(a: &R, b: &R) -> bool {
    difference_witness(a, b).is_none()
}

/// Every word over `sigma` of length at most `n`.
pub fn words(sigma: &[char], n: usize) -> Vec<String> {
    let mut out = vec![String::new()];
    let mut layer = vec![String::new()];
    for _ in 0..n {
        layer = layer
            .iter()
            .flat_map(|w| sigma.iter().map(move |c| format!("{w}{c}")))
            .collect();
        out.extend(layer.iter().cloned());
    }
    out
}

/// A random expression with between 1 and `max` nodes over `sigma`.
pub fn random_regex(rng: &mut impl Rng, sigma: &[char], max: usize) -> Regex {
    let size = rng.gen_range(1..=max);
    of_size(rng, sigma, size)
}

fn of_size(rng: &mut impl Rng, sigma: &[char], size: usize) -> Regex {
    if size <= 1 {
        return if rng.gen_bool(0.15) {
            Regex::Epsilon
        } else {
            Regex::atom(&sigma[rng.gen_range(0..sigma.len())].to_string())
        };
    }
    let pick = if size < 3 { 0 } else { rng.gen_range(0..3) };
    match pick {
        0 => Regex::star(of_size(rng, sigma, size - 1)),
        k => {
            let left = rng.gen_range(1..size - 1);
            let a = of_size(rng, sigma, left);
            let b = of_size(rng, sigma, size - 1 - left);
            if k == 1 {
                Regex::concat(a, b)
            } else {
                Regex::alt(a, b)
            }
        }
    }
}

pub fn word_of(labels: &[lns::term::Label]) -> String {
    labels.iter().map(|l| l.as_str()).collect()
}
