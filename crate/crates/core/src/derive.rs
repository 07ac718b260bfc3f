//! The derivability relation of a stratified TSS.
//!
//! Transitions are computed goal-directed, one stratum at a time. Within a
//! stratum a query table is iterated to its least fixed point; negative
//! premises only consult lower strata, which are complete by then.

use std::collections::{BTreeSet, HashMap, HashSet};

use thiserror::Error;

use crate::term::{Binding, Label, Term};
use crate::tss::{Formula, NotStratifiable, Rule, Stratification, Tss};

pub const DEFAULT_MAX_DEPTH: usize = 512;

pub type Transitions = BTreeSet<(Label, Term)>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DeriveError {
    #[error(transparent)]
    NotStratifiable(#[from] NotStratifiable),
    #[error("source term `{0}` is not ground")]
    NonGroundSource(Term),
    #[error("rule `{rule}` concludes a non-ground target `{target}`")]
    NonGroundConclusion { rule: String, target: Term },
    #[error("rule `{rule}` has a premise source `{pattern}` with unbound variables")]
    UnboundPremiseSource { rule: String, pattern: Term },
    #[error("derivation depth exceeded {limit}")]
    DerivationDepthExceeded { limit: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeriveOptions {
    pub max_depth: usize,
}

impl Default for DeriveOptions {
    fn default() -> Self {
        DeriveOptions {
            max_depth: DEFAULT_MAX_DEPTH,
        }
    }
}

/// Every `(label, target)` with `tss |- source -label-> target`.
pub fn derive_all(tss: &Tss, source: &Term) -> Result<Transitions, DeriveError> {
    Deriver::new(tss, DeriveOptions::default())?.transitions(source)
}

pub fn derive_all_with(
    tss: &Tss,
    source: &Term,
    options: DeriveOptions,
) -> Result<Transitions, DeriveError> {
    Deriver::new(tss, options)?.transitions(source)
}

/// Negation of the `program-end` premise.
pub fn has_any_transition(tss: &Tss, source: &Term) -> Result<bool, DeriveError> {
    Ok(!derive_all(tss, source)?.is_empty())
}

#[derive(Default)]
struct StratumTable {
    entries: HashMap<Term, Transitions>,
    depth: HashMap<Term, usize>,
    done: HashSet<Term>,
    pending: Vec<Term>,
    solving: bool,
}

/// Memoizing evaluator for a single TSS. The memo lives as long as the value.
pub struct Deriver<'a> {
    strata: &'a Stratification,
    rules: Vec<Vec<&'a Rule>>,
    tables: Vec<StratumTable>,
    options: DeriveOptions,
}

impl<'a> Deriver<'a> {
    pub fn new(tss: &'a Tss, options: DeriveOptions) -> Result<Self, DeriveError> {
        let strata = tss.stratification().map_err(|e| e.clone())?;
        let levels = strata.depth();
        let mut rules = vec![Vec::new(); levels];
        for rule in tss.rules() {
            rules[strata.stratum(&rule.conclusion.label)].push(rule);
        }
        Ok(Deriver {
            strata,
            rules,
            tables: (0..levels).map(|_| StratumTable::default()).collect(),
            options,
        })
    }

    pub fn transitions(&mut self, source: &Term) -> Result<Transitions, DeriveError> {
        if !source.is_ground() {
            return Err(DeriveError::NonGroundSource(source.clone()));
        }
        let mut all = Transitions::new();
        for level in 0..self.tables.len() {
            all.extend(self.query(source, level, 0)?);
        }
        Ok(all)
    }

    fn level_of(&self, label: &Label) -> usize {
        self.strata.stratum(label)
    }

    /// Transitions of `term` whose labels sit at `level`.
    fn query(
        &mut self,
        term: &Term,
        level: usize,
        depth: usize,
    ) -> Result<Transitions, DeriveError> {
        if depth > self.options.max_depth {
            return Err(DeriveError::DerivationDepthExceeded {
                limit: self.options.max_depth,
            });
        }
        if level >= self.tables.len() || self.rules[level].is_empty() {
            return Ok(Transitions::new());
        }
        let table = &mut self.tables[level];
        if table.done.contains(term) {
            return Ok(table.entries[term].clone());
        }
        if table.solving {
            if !table.entries.contains_key(term) {
                table.entries.insert(term.clone(), Transitions::new());
                table.depth.insert(term.clone(), depth);
                table.pending.push(term.clone());
            }
            return Ok(table.entries[term].clone());
        }

        table.solving = true;
        table.entries.insert(term.clone(), Transitions::new());
        table.depth.insert(term.clone(), depth);
        table.pending.push(term.clone());
        let result = self.saturate(level);
        let table = &mut self.tables[level];
        table.solving = false;
        match result {
            Ok(()) => {
                for t in table.pending.drain(..) {
                    table.done.insert(t);
                }
                Ok(table.entries[term].clone())
            }
            Err(e) => {
                for t in table.pending.drain(..) {
                    table.entries.remove(&t);
                    table.depth.remove(&t);
                }
                Err(e)
            }
        }
    }

    fn saturate(&mut self, level: usize) -> Result<(), DeriveError> {
        loop {
            let mut changed = false;
            let mut i = 0;
            while i < self.tables[level].pending.len() {
                let term = self.tables[level].pending[i].clone();
                let depth = self.tables[level].depth[&term];
                let fresh = self.evaluate(&term, level, depth)?;
                let entry = self.tables[level]
                    .entries
                    .get_mut(&term)
                    .expect("pending entry");
                if *entry != fresh {
                    *entry = fresh;
                    changed = true;
                }
                i += 1;
            }
            if !changed {
                return Ok(());
            }
        }
    }

    fn evaluate(
        &mut self,
        term: &Term,
        level: usize,
        depth: usize,
    ) -> Result<Transitions, DeriveError> {
        let mut out = Transitions::new();
        let rules = self.rules[level].clone();
        for rule in rules {
            let mut binding = Binding::new();
            if !rule.conclusion.source.match_into(term, &mut binding) {
                continue;
            }
            self.premises(rule, 0, binding, depth, &mut out)?;
        }
        Ok(out)
    }

    /// Solves positive premises left to right, then checks negatives.
    fn premises(
        &mut self,
        rule: &Rule,
        from: usize,
        binding: Binding,
        depth: usize,
        out: &mut Transitions,
    ) -> Result<(), DeriveError> {
        let next = rule.premises[from..]
            .iter()
            .position(|p| matches!(p, Formula::Positive(_)))
            .map(|i| i + from);
        if let Some(i) = next {
            let Formula::Positive(premise) = &rule.premises[i] else {
                unreachable!()
            };
            let source = self.ground(rule, &premise.source, &binding)?;
            let level = self.level_of(&premise.label);
            for (label, target) in self.query(&source, level, depth + 1)? {
                if label != premise.label {
                    continue;
                }
                let mut extended = binding.clone();
                if premise.target.match_into(&target, &mut extended) {
                    self.premises(rule, i + 1, extended, depth, out)?;
                }
            }
            return Ok(());
        }

        for premise in &rule.premises {
            if let Formula::Negative { source, label } = premise {
                let source = self.ground(rule, source, &binding)?;
                let level = self.level_of(label);
                let found = self.query(&source, level, depth + 1)?;
                if found.iter().any(|(l, _)| l == label) {
                    return Ok(());
                }
            }
        }

        let target = rule.conclusion.target.substitute(&binding);
        if !target.is_ground() {
            return Err(DeriveError::NonGroundConclusion {
                rule: rule.display_name(),
                target,
            });
        }
        out.insert((rule.conclusion.label.clone(), target));
        Ok(())
    }

    fn ground(&self, rule: &Rule, pattern: &Term, binding: &Binding) -> Result<Term, DeriveError> {
        let t = pattern.substitute(binding);
        if t.is_ground() {
            Ok(t)
        } else {
            Err(DeriveError::UnboundPremiseSource {
                rule: rule.display_name(),
                pattern: pattern.clone(),
            })
        }
    }
}
