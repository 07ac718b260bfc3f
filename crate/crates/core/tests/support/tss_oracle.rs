//! Brute-force reference semantics for stratified TSSs: per-stratum least
//! fixed points over a finite, subterm-closed universe of ground terms.

use std::collections::{BTreeMap, BTreeSet};

use lns::term::{Atom, Label, Term};
use lns::tss::{Formula, Tss};

pub type Rel = BTreeMap<Term, BTreeSet<(Label, Term)>>;

/// Ground terms of height at most `height` (constants have height 1).
pub fn universe(ops: &[(&str, usize)], height: usize) -> Vec<Term> {
    let mut terms: BTreeSet<Term> = BTreeSet::new();
    for _ in 0..height {
        let prev: Vec<Term> = terms.iter().cloned().collect();
        for &(f, arity) in ops {
            for args in tuples(&prev, arity) {
                terms.insert(Term::app(f, args));
            }
        }
    }
    terms.into_iter().collect()
}

fn tuples(items: &[Term], n: usize) -> Vec<Vec<Term>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|t| {
                items.iter().map(move |x| {
                    let mut t = t.clone();
                    t.push(x.clone());
                    t
                })
            })
            .collect();
    }
    out
}

/// Label strata: a positive premise may share its conclusion's stratum, a
/// negative one must sit strictly below. `None` when no such assignment exists.
pub fn strata(tss: &Tss) -> Option<BTreeMap<Label, usize>> {
    let mut s: BTreeMap<Label, usize> = tss.labels().iter().map(|l| (l.clone(), 0)).collect();
    let bound = s.len() + 1;
    loop {
        let mut changed = false;
        for rule in tss.rules() {
            let c = &rule.conclusion.label;
            for prem in &rule.premises {
                let need = match prem {
                    Formula::Positive(t) => s[&t.label],
                    Formula::Negative { label, .. } => s[label] + 1,
                };
                if s[c] < need {
                    s.insert(c.clone(), need);
                    changed = true;
                }
            }
        }
        if !changed {
            return Some(s);
        }
        if s.values().any(|&v| v > bound) {
            return None;
        }
    }
}

type Env = BTreeMap<Atom, Term>;

fn bind(pat: &Term, t: &Term, env: &mut Env) -> bool {
    match (pat, t) {
        (Term::Var(v), _) => match env.get(v) {
            Some(old) => old == t,
            None => {
                env.insert(v.clone(), t.clone());
                true
            }
        },
        (Term::App(f, ps), Term::App(g, ts)) => {
            f == g && ps.len() == ts.len() && ps.iter().zip(ts).all(|(p, t)| bind(p, t, env))
        }
        _ => false,
    }
}

fn inst(pat: &Term, env: &Env) -> Term {
    match pat {
        Term::Var(v) => env
            .get(v)
            .cloned()
            .expect("premise source bound before use"),
        Term::App(f, args) => Term::App(f.clone(), args.iter().map(|a| inst(a, env)).collect()),
    }
}

fn solve(prems: &[Formula], env: Env, rel: &Rel, out: &mut Vec<Env>) {
    let Some((first, rest)) = prems.split_first() else {
        out.push(env);
        return;
    };
    let src = inst(first.source(), &env);
    let moves = rel.get(&src).cloned().unwrap_or_default();
    match first {
        Formula::Positive(t) => {
            for (_, tgt) in moves.iter().filter(|(l, _)| *l == t.label) {
                let mut e = env.clone();
                if bind(&t.target, tgt, &mut e) {
                    solve(rest, e, rel, out);
                }
            }
        }
        Formula::Negative { label, .. } => {
            if !moves.iter().any(|(l, _)| l == label) {
                solve(rest, env, rel, out);
            }
        }
    }
}

/// The transitions of every term in `universe`, which must be closed under
/// subterms and under the targets the rules produce.
pub fn transitions(tss: &Tss, universe: &[Term]) -> Rel {
    let strata = strata(tss).expect("stratifiable");
    let top = strata.values().copied().max().unwrap_or(0);
    let mut rel: Rel = universe
        .iter()
        .map(|t| (t.clone(), BTreeSet::new()))
        .collect();
    for k in 0..=top {
        loop {
            let mut added = false;
            for rule in tss
                .rules()
                .iter()
                .filter(|r| strata[&r.conclusion.label] == k)
            {
                for u in universe {
                    let mut env = Env::new();
                    if !bind(&rule.conclusion.source, u, &mut env) {
                        continue;
                    }
                    let mut sols = Vec::new();
                    solve(&rule.premises, env, &rel, &mut sols);
                    for env in sols {
                        let tgt = inst(&rule.conclusion.target, &env);
                        added |= rel
                            .get_mut(u)
                            .unwrap()
                            .insert((rule.conclusion.label.clone(), tgt));
                    }
                }
            }
            if !added {
                break;
            }
        }
    }
    rel
}

pub fn has_label(rel: &Rel, t: &Term, label: &str) -> bool {
    rel.get(t)
        .is_some_and(|m| m.iter().any(|(l, _)| l.as_str() == label))
}
