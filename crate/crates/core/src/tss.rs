//! Transition system specifications: deduction rules with negative premises,
//! componentwise union, and label-level stratification.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::{Arc, OnceLock};

use thiserror::Error;

use crate::term::{Atom, Label, Signature, SignatureError, Term};

/// A positive formula `source -label-> target`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Transition {
    pub source: Term,
    pub label: Label,
    pub target: Term,
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -{}-> {}", self.source, self.label, self.target)
    }
}

impl fmt::Debug for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Formula {
    Positive(Transition),
    /// `source -label-/>`: no `label` transition from `source`.
    Negative {
        source: Term,
        label: Label,
    },
}

impl Formula {
    pub fn positive(source: Term, label: &str, target: Term) -> Self {
        Formula::Positive(Transition {
            source,
            label: Label::new(label),
            target,
        })
    }

    pub fn negative(source: Term, label: &str) -> Self {
        Formula::Negative {
            source,
            label: Label::new(label),
        }
    }

    pub fn label(&self) -> &Label {
        match self {
            Formula::Positive(t) => &t.label,
            Formula::Negative { label, .. } => label,
        }
    }

    pub fn source(&self) -> &Term {
        match self {
            Formula::Positive(t) => &t.source,
            Formula::Negative { source, .. } => source,
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Positive(t) => write!(f, "{t}"),
            Formula::Negative { source, label } => write!(f, "{source} -{label}-/>"),
        }
    }
}

impl fmt::Debug for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// A deduction rule `premises / conclusion`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rule {
    pub name: Option<Atom>,
    pub premises: Vec<Formula>,
    pub conclusion: Transition,
}

impl Rule {
    pub fn new(name: Option<&str>, premises: Vec<Formula>, conclusion: Transition) -> Self {
        Rule {
            name: name.map(Atom::new),
            premises,
            conclusion,
        }
    }

    pub fn axiom(name: Option<&str>, conclusion: Transition) -> Self {
        Rule::new(name, Vec::new(), conclusion)
    }

    pub fn display_name(&self) -> String {
        self.name
            .as_ref()
            .map(|n| n.to_string())
            .unwrap_or_else(|| format!("{}", self.conclusion))
    }

    pub fn has_negative_premise(&self) -> bool {
        self.premises
            .iter()
            .any(|p| matches!(p, Formula::Negative { .. }))
    }

    fn terms(&self) -> impl Iterator<Item = &Term> {
        self.premises
            .iter()
            .flat_map(|p| match p {
                Formula::Positive(t) => vec![&t.source, &t.target],
                Formula::Negative { source, .. } => vec![source],
            })
            .chain([&self.conclusion.source, &self.conclusion.target])
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(name) = &self.name {
            write!(f, "[{name}] ")?;
        }
        for (i, p) in self.premises.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{p}")?;
        }
        if !self.premises.is_empty() {
            f.write_str(" ")?;
        }
        write!(f, "==> {}", self.conclusion)
    }
}

impl fmt::Debug for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// Problems that make a TSS unusable for derivation.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TssError {
    #[error("rule `{rule}` uses label `{label}` which is not in the label set")]
    UndeclaredLabel { rule: String, label: Label },
    #[error("rule `{rule}` contains a term `{term}` that is not well formed under the signature")]
    IllFormedTerm { rule: String, term: Term },
    #[error("rule `{rule}` has a nonlinear conclusion source `{pattern}`")]
    NonlinearSource { rule: String, pattern: Term },
    #[error("rule `{rule}` uses `{name}` both as a variable and as a function symbol")]
    VariableShadowsSymbol { rule: String, name: Atom },
}

/// A transition system specification `(signature, labels, rules)`.
///
/// Equality, ordering and hashing ignore the display name.
#[derive(Clone)]
pub struct Tss {
    name: Option<Atom>,
    signature: Signature,
    labels: BTreeSet<Label>,
    rules: BTreeSet<Rule>,
    strata: OnceLock<Result<Stratification, NotStratifiable>>,
    /// Hash of the contents, so configurations holding a TSS hash cheaply.
    fingerprint: u64,
}

impl Tss {
    pub fn new(
        signature: Signature,
        labels: impl IntoIterator<Item = Label>,
        rules: impl IntoIterator<Item = Rule>,
    ) -> Self {
        let labels: BTreeSet<Label> = labels.into_iter().collect();
        let rules: BTreeSet<Rule> = rules.into_iter().collect();
        let mut h = std::hash::DefaultHasher::new();
        (&signature, &labels, &rules).hash(&mut h);
        Tss {
            name: None,
            signature,
            labels,
            rules,
            strata: OnceLock::new(),
            fingerprint: h.finish(),
        }
    }

    /// `(empty signature, {}, {})`.
    pub fn empty() -> Self {
        Tss::new(Signature::empty(), [], [])
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = Some(Atom::new(name));
        self
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_ref().map(Atom::as_str)
    }

    pub fn signature(&self) -> &Signature {
        &self.signature
    }

    pub fn labels(&self) -> &BTreeSet<Label> {
        &self.labels
    }

    pub fn rules(&self) -> &BTreeSet<Rule> {
        &self.rules
    }

    pub fn rule_named(&self, name: &str) -> Option<&Rule> {
        self.rules
            .iter()
            .find(|r| r.name.as_ref().is_some_and(|n| n.as_str() == name))
    }

    /// Componentwise union; fails when the signatures clash.
    pub fn union(&self, other: &Tss) -> Result<Tss, SignatureError> {
        let signature = self.signature.union(&other.signature)?;
        let mut union = Tss::new(
            signature,
            self.labels.union(&other.labels).cloned(),
            self.rules.union(&other.rules).cloned(),
        );
        union.name = match (&self.name, &other.name) {
            (Some(a), Some(b)) => Some(Atom::from(format!("{a} union {b}"))),
            _ => None,
        };
        Ok(union)
    }

    /// Checks the structural invariants: declared labels, well-formed rule
    /// terms, linear conclusion sources, variables disjoint from symbols.
    pub fn validate(&self) -> Result<(), Vec<TssError>> {
        let mut errors = Vec::new();
        for rule in &self.rules {
            let name = rule.display_name();
            let labels = rule
                .premises
                .iter()
                .map(Formula::label)
                .chain([&rule.conclusion.label]);
            for label in labels {
                if !self.labels.contains(label) {
                    errors.push(TssError::UndeclaredLabel {
                        rule: name.clone(),
                        label: label.clone(),
                    });
                }
            }
            for term in rule.terms() {
                if !term.well_formed(&self.signature) {
                    errors.push(TssError::IllFormedTerm {
                        rule: name.clone(),
                        term: term.clone(),
                    });
                }
                for v in term.vars() {
                    if self.signature.contains(v.as_str()) {
                        errors.push(TssError::VariableShadowsSymbol {
                            rule: name.clone(),
                            name: v,
                        });
                    }
                }
            }
            if !rule.conclusion.source.is_linear() {
                errors.push(TssError::NonlinearSource {
                    rule: name.clone(),
                    pattern: rule.conclusion.source.clone(),
                });
            }
        }
        errors.dedup();
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }

    /// The label-level stratification, computed once per value.
    pub fn stratification(&self) -> Result<&Stratification, &NotStratifiable> {
        self.strata.get_or_init(|| stratify(self)).as_ref()
    }

    fn key(&self) -> (&Signature, &BTreeSet<Label>, &BTreeSet<Rule>) {
        (&self.signature, &self.labels, &self.rules)
    }
}

impl PartialEq for Tss {
    fn eq(&self, other: &Self) -> bool {
        self.fingerprint == other.fingerprint && self.key() == other.key()
    }
}

impl Eq for Tss {}

impl PartialOrd for Tss {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Tss {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

impl Hash for Tss {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.fingerprint.hash(state)
    }
}

impl fmt::Debug for Tss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tss")
            .field("name", &self.name)
            .field("signature", &self.signature)
            .field("labels", &self.labels)
            .field("rules", &self.rules)
            .finish()
    }
}

/// See [`Tss::union`].
pub fn union_tss(t1: &Tss, t2: &Tss) -> Result<Tss, SignatureError> {
    t1.union(t2)
}

/// Shared handle used wherever TSS values travel inside processes.
pub type TssRef = Arc<Tss>;

/// Stratum per label. Labels not mentioned by any rule sit at stratum 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stratification {
    stratum: BTreeMap<Label, usize>,
}

impl Stratification {
    pub fn stratum(&self, label: &Label) -> usize {
        self.stratum.get(label).copied().unwrap_or(0)
    }

    pub fn depth(&self) -> usize {
        self.stratum.values().copied().max().map_or(1, |m| m + 1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Label, usize)> {
        self.stratum.iter().map(|(l, s)| (l, *s))
    }
}

/// No stratification exists; `cycle` is a dependency cycle through a negative premise,
/// listed as labels where each depends on the next and the last depends on the first.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("not stratifiable: negative dependency cycle {}", fmt_cycle(.cycle))]
pub struct NotStratifiable {
    pub cycle: Vec<Label>,
}

fn fmt_cycle(cycle: &[Label]) -> String {
    let mut s = cycle
        .iter()
        .map(Label::as_str)
        .collect::<Vec<_>>()
        .join(" -> ");
    if let Some(first) = cycle.first() {
        s.push_str(" -> ");
        s.push_str(first.as_str());
    }
    s
}

/// Assigns each label the least stratum such that positive premises never sit
/// above their conclusion and negative premises sit strictly below it.
pub fn stratify(tss: &Tss) -> Result<Stratification, NotStratifiable> {
    let mut labels: BTreeSet<Label> = tss.labels.clone();
    // (conclusion, premise, strict)
    let mut deps: Vec<(Label, Label, bool)> = Vec::new();
    for rule in &tss.rules {
        labels.insert(rule.conclusion.label.clone());
        for p in &rule.premises {
            labels.insert(p.label().clone());
            let strict = matches!(p, Formula::Negative { .. });
            deps.push((rule.conclusion.label.clone(), p.label().clone(), strict));
        }
    }
    let index: BTreeMap<&Label, usize> = labels.iter().enumerate().map(|(i, l)| (l, i)).collect();
    let all: Vec<&Label> = labels.iter().collect();
    let n = all.len();
    let mut succ: Vec<Vec<(usize, bool)>> = vec![Vec::new(); n];
    for (c, p, strict) in &deps {
        succ[index[c]].push((index[p], *strict));
    }

    let comps = strongly_connected(&succ);
    let mut comp_of = vec![0; n];
    for (ci, comp) in comps.iter().enumerate() {
        for &v in comp {
            comp_of[v] = ci;
        }
    }
    for (c, p, strict) in &deps {
        let (ci, pi) = (index[c], index[p]);
        if *strict && comp_of[ci] == comp_of[pi] {
            let mut cycle = vec![all[ci].clone()];
            if ci != pi {
                let path = path_within(&succ, &comp_of, pi, ci);
                cycle.extend(path[..path.len() - 1].iter().map(|&v| all[v].clone()));
            }
            return Err(NotStratifiable { cycle });
        }
    }

    // Tarjan emits components in reverse topological order of `succ`
    // (dependencies first), so one pass settles every stratum.
    let mut level = vec![0usize; comps.len()];
    for (ci, comp) in comps.iter().enumerate() {
        let mut lvl = 0;
        for &v in comp {
            for &(w, strict) in &succ[v] {
                if comp_of[w] != ci {
                    lvl = lvl.max(level[comp_of[w]] + usize::from(strict));
                }
            }
        }
        level[ci] = lvl;
    }
    Ok(Stratification {
        stratum: all
            .iter()
            .enumerate()
            .map(|(i, l)| ((*l).clone(), level[comp_of[i]]))
            .collect(),
    })
}

fn strongly_connected(succ: &[Vec<(usize, bool)>]) -> Vec<Vec<usize>> {
    struct State<'a> {
        succ: &'a [Vec<(usize, bool)>],
        index: Vec<Option<usize>>,
        low: Vec<usize>,
        on_stack: Vec<bool>,
        stack: Vec<usize>,
        next: usize,
        out: Vec<Vec<usize>>,
    }
    fn visit(s: &mut State<'_>, v: usize) {
        s.index[v] = Some(s.next);
        s.low[v] = s.next;
        s.next += 1;
        s.stack.push(v);
        s.on_stack[v] = true;
        for i in 0..s.succ[v].len() {
            let w = s.succ[v][i].0;
            match s.index[w] {
                None => {
                    visit(s, w);
                    s.low[v] = s.low[v].min(s.low[w]);
                }
                Some(iw) if s.on_stack[w] => s.low[v] = s.low[v].min(iw),
                Some(_) => {}
            }
        }
        if Some(s.low[v]) == s.index[v] {
            let mut comp = Vec::new();
            while let Some(w) = s.stack.pop() {
                s.on_stack[w] = false;
                comp.push(w);
                if w == v {
                    break;
                }
            }
            s.out.push(comp);
        }
    }
    let n = succ.len();
    let mut s = State {
        succ,
        index: vec![None; n],
        low: vec![0; n],
        on_stack: vec![false; n],
        stack: Vec::new(),
        next: 0,
        out: Vec::new(),
    };
    for v in 0..n {
        if s.index[v].is_none() {
            visit(&mut s, v);
        }
    }
    s.out
}

/// BFS path `from ..= to` staying inside `from`'s component.
fn path_within(
    succ: &[Vec<(usize, bool)>],
    comp_of: &[usize],
    from: usize,
    to: usize,
) -> Vec<usize> {
    let mut parent = vec![usize::MAX; succ.len()];
    let mut queue = std::collections::VecDeque::from([from]);
    parent[from] = from;
    while let Some(v) = queue.pop_front() {
        if v == to {
            break;
        }
        for &(w, _) in &succ[v] {
            if parent[w] == usize::MAX && comp_of[w] == comp_of[from] {
                parent[w] = v;
                queue.push_back(w);
            }
        }
    }
    let mut path = vec![to];
    let mut cur = to;
    while cur != from {
        cur = parent[cur];
        path.push(cur);
    }
    path.reverse();
    path
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn union_identity_and_clash() {
        let ccs = partial_ccs(&["a"]);
        assert_eq!(ccs.union(&Tss::empty()).unwrap(), ccs);
        assert_eq!(Tss::empty().union(&ccs).unwrap(), ccs);

        let f1 = Tss::new(Signature::from_symbols([("f", 1)]).unwrap(), [], []);
        let f2 = Tss::new(Signature::from_symbols([("f", 2)]).unwrap(), [], []);
        assert!(matches!(
            f1.union(&f2),
            Err(SignatureError::ArityClash { .. })
        ));
    }

    #[test]
    fn union_adds_par_max() {
        let tss = almost_tpa(&["a"]).union(&parallel_max_progress()).unwrap();
        assert!(tss.rule_named("par-max").is_some());
        assert!(tss.rule_named("par-idle").is_none());
        assert!(tss.labels().contains(&Label::new("sigma")));
        assert!(tss.validate().is_ok());
    }

    #[test]
    fn strata() {
        let ccs = partial_ccs(&["a"]);
        let s = stratify(&ccs).unwrap();
        assert!(ccs.labels().iter().all(|l| s.stratum(l) == 0));

        let tss = almost_tpa(&["a"]).union(&parallel_max_progress()).unwrap();
        let s = stratify(&tss).unwrap();
        assert_eq!(s.stratum(&Label::new("tau")), 0);
        assert_eq!(s.stratum(&Label::new("a")), 0);
        assert_eq!(s.stratum(&Label::new("sigma")), 1);
    }

    #[test]
    fn self_negation_is_rejected() {
        let rule = Rule::new(
            Some("bad"),
            vec![Formula::negative(p(), "a")],
            Transition {
                source: p(),
                label: Label::new("a"),
                target: p(),
            },
        );
        let tss = Tss::new(Signature::empty(), [Label::new("a")], [rule]);
        let err = stratify(&tss).unwrap_err();
        assert_eq!(err.cycle, vec![Label::new("a")]);
    }

    #[test]
    fn negative_cycle_witness() {
        // a depends positively on b, b negatively on a
        let r1 = Rule::new(
            None,
            vec![Formula::positive(p(), "b", p1())],
            Transition {
                source: pre("f", p()),
                label: Label::new("a"),
                target: p1(),
            },
        );
        let r2 = Rule::new(
            None,
            vec![Formula::negative(p(), "a")],
            Transition {
                source: pre("g", p()),
                label: Label::new("b"),
                target: p(),
            },
        );
        let tss = Tss::new(
            Signature::from_symbols([("f", 1), ("g", 1)]).unwrap(),
            [Label::new("a"), Label::new("b")],
            [r1, r2],
        );
        let err = stratify(&tss).unwrap_err();
        assert_eq!(err.cycle.len(), 2);
        assert!(err.cycle.contains(&Label::new("a")));
        assert!(err.cycle.contains(&Label::new("b")));
    }

    #[test]
    fn validation_errors() {
        let rule = Rule::axiom(
            Some("r"),
            Transition {
                source: par(p(), p()),
                label: Label::new("zz"),
                target: Term::app("par", vec![p()]),
            },
        );
        let tss = Tss::new(Signature::from_symbols([("par", 2)]).unwrap(), [], [rule]);
        let errors = tss.validate().unwrap_err();
        assert!(errors
            .iter()
            .any(|e| matches!(e, TssError::UndeclaredLabel { .. })));
        assert!(errors
            .iter()
            .any(|e| matches!(e, TssError::IllFormedTerm { .. })));
        assert!(errors
            .iter()
            .any(|e| matches!(e, TssError::NonlinearSource { .. })));
    }

    #[test]
    fn equality_ignores_name() {
        assert_eq!(
            partial_ccs(&["a"]).named("x"),
            partial_ccs(&["a"]).named("y")
        );
    }
}
