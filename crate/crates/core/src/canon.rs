//! Canonical forms of processes modulo structural congruence, and
//! configurations (the unit of reduction).
//!
//! Normalisation runs in two passes. The first flattens `|` and `+`, drops
//! `0` units, hoists restrictions to the top of each parallel block (renaming
//! them apart) and folds `P | !P` back into `!P`. The second orders the
//! binders of every block and renumbers bound names by binding depth, so that
//! alpha-equivalent processes print and compare identically.

use std::collections::BTreeSet;
use std::fmt;

use crate::calculus::{Exec, Expr, Fresh, Monitor, Name, Process};

/// How online monitors judge an intermediate trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum MonitorMode {
    /// The trace must belong to the monitor language.
    #[default]
    Exact,
    /// The trace must be extendable to a word of the monitor language.
    Prefix,
}

impl MonitorMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MonitorMode::Exact => "exact",
            MonitorMode::Prefix => "prefix",
        }
    }
}

impl std::str::FromStr for MonitorMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(MonitorMode::Exact),
            "prefix" | "prefix-closed" => Ok(MonitorMode::Prefix),
            other => Err(format!(
                "unknown monitor mode `{other}` (expected exact or prefix)"
            )),
        }
    }
}

impl fmt::Display for MonitorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Configuration {
    pub root: Process,
    /// Strictly greater than the id of every generated name in `root`.
    pub fresh: u32,
    pub mode: MonitorMode,
}

impl Configuration {
    /// The canonical configuration of `root`.
    pub fn new(root: Process, mode: MonitorMode) -> Self {
        canonicalize(&Configuration {
            fresh: root.max_id() + 1,
            root,
            mode,
        })
    }

    pub fn fresh_supply(&self) -> Fresh {
        Fresh::starting_at(self.fresh)
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.root)
    }
}

impl fmt::Debug for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.mode, self.root)
    }
}

pub fn canonicalize(c: &Configuration) -> Configuration {
    let root = canonical_process(&c.root);
    Configuration {
        fresh: root.max_id() + 1,
        root,
        mode: c.mode,
    }
}

/// The canonical representative of `p`'s congruence class.
pub fn canonical_process(p: &Process) -> Process {
    let mut norm = Normalizer {
        fresh: Fresh::above(p),
    };
    let normal = norm.process(p);
    // Bound ids start above every free generated name so renumbering cannot capture.
    let base = normal.free_names().iter().map(Name::id).max().unwrap_or(0);
    Finalizer { env: Vec::new() }.process(&normal, base)
}

/// A parallel block: `new binders. (comps...)`, with no `0`, `|` or
/// restriction at the top of any component.
#[derive(Default)]
struct Block {
    binders: Vec<Name>,
    comps: Vec<Process>,
}

impl Block {
    fn single(p: Process) -> Block {
        Block {
            binders: Vec::new(),
            comps: vec![p],
        }
    }

    fn is_empty(&self) -> bool {
        self.comps.is_empty()
    }

    fn into_process(self) -> Process {
        let mut p = match self.comps.len() {
            0 => Process::Nil,
            1 => self.comps.into_iter().next().unwrap(),
            _ => Process::Par(self.comps),
        };
        for y in self.binders.into_iter().rev() {
            p = Process::Restrict(y, Box::new(p));
        }
        p
    }
}

/// Splits a normalised process into its restriction prefix and components.
fn split_block(p: &Process) -> (Vec<Name>, Vec<&Process>) {
    let mut binders = Vec::new();
    let mut cur = p;
    while let Process::Restrict(y, body) = cur {
        binders.push(y.clone());
        cur = body;
    }
    let comps = match cur {
        Process::Nil => Vec::new(),
        Process::Par(ps) => ps.iter().collect(),
        other => vec![other],
    };
    (binders, comps)
}

struct Normalizer {
    fresh: Fresh,
}

impl Normalizer {
    fn process(&mut self, p: &Process) -> Process {
        self.block(p).into_process()
    }

    fn block(&mut self, p: &Process) -> Block {
        match p {
            Process::Nil => Block::default(),
            Process::Par(ps) => {
                let mut out = Block::default();
                for q in ps {
                    let b = self.block(q);
                    out.binders.extend(b.binders);
                    out.comps.extend(b.comps);
                }
                self.absorb_copies(&mut out);
                out
            }
            Process::Restrict(x, body) => {
                let mut b = self.block(body);
                if b.comps.iter().any(|c| c.is_free(x)) {
                    let x2 = self.fresh.rename(x);
                    for c in &mut b.comps {
                        *c = c.rename_free(x, &x2);
                    }
                    b.binders.insert(0, x2);
                }
                b
            }
            Process::Sum(ps) => {
                let mut summands: Vec<Block> = Vec::new();
                self.summands(ps, &mut summands);
                match summands.len() {
                    0 => Block::default(),
                    1 => summands.pop().unwrap(),
                    _ => Block::single(Process::Sum(
                        summands.into_iter().map(Block::into_process).collect(),
                    )),
                }
            }
            Process::Bang(body) => Block::single(Process::Bang(Box::new(self.process(body)))),
            Process::Input { chan, bind, body } => Block::single(Process::Input {
                chan: chan.clone(),
                bind: bind.clone(),
                body: Box::new(self.process(body)),
            }),
            Process::Output {
                chan,
                payload,
                body,
            } => Block::single(Process::Output {
                chan: chan.clone(),
                payload: payload.clone(),
                body: Box::new(self.process(body)),
            }),
            Process::Exec(ex) => Block::single(Process::Exec(Box::new(Exec {
                lang: ex.lang.clone(),
                chan: ex.chan.clone(),
                program: ex.program.clone(),
                trace: ex.trace.clone(),
                monitors: ex
                    .monitors
                    .iter()
                    .map(|m| Monitor {
                        expr: m.expr.clone(),
                        handler: self.process(&m.handler),
                    })
                    .collect(),
            }))),
            Process::Verify {
                subject,
                spec,
                then,
                otherwise,
            } => Block::single(Process::Verify {
                subject: subject.clone(),
                spec: spec.clone(),
                then: Box::new(self.process(then)),
                otherwise: Box::new(self.process(otherwise)),
            }),
            Process::Labels {
                allowed,
                lang,
                then,
                otherwise,
            } => Block::single(Process::Labels {
                allowed: allowed.clone(),
                lang: lang.clone(),
                then: Box::new(self.process(then)),
                otherwise: Box::new(self.process(otherwise)),
            }),
        }
    }

    /// Flattens nested sums and drops `0` summands.
    fn summands(&mut self, ps: &[Process], out: &mut Vec<Block>) {
        for q in ps {
            let b = self.block(q);
            if b.is_empty() {
                continue;
            }
            if b.binders.is_empty() && b.comps.len() == 1 {
                if let Process::Sum(inner) = &b.comps[0] {
                    for s in inner {
                        out.push(self.block(s));
                    }
                    continue;
                }
            }
            out.push(b);
        }
    }

    /// Rewrites `Q | !Q` to `!Q` wherever a group of components (with the
    /// restrictions private to them) forms a copy of a replicated body.
    fn absorb_copies(&mut self, b: &mut Block) {
        const COMBINATION_CAP: usize = 2_000;
        'restart: loop {
            for bi in 0..b.comps.len() {
                let Process::Bang(inner) = &b.comps[bi] else {
                    continue;
                };
                // The body is already normalized, so its components have the
                // skeletons of the canonical ones.
                let (_, body_comps) = split_block(inner);
                let k = body_comps.len();
                if k == 0 {
                    continue;
                }
                let heads: Vec<u8> = body_comps.iter().map(|c| head(c)).collect();
                let plausible: Vec<usize> = (0..b.comps.len())
                    .filter(|&i| i != bi && heads.contains(&head(&b.comps[i])))
                    .collect();
                if plausible.len() < k {
                    continue;
                }
                let mut wanted: Vec<String> = body_comps.iter().map(|c| skeleton(c)).collect();
                wanted.sort();
                let candidates: Vec<usize> = plausible
                    .into_iter()
                    .filter(|&i| wanted.contains(&skeleton(&b.comps[i])))
                    .collect();
                if candidates.len() < k {
                    continue;
                }
                let target = canonical_process(inner);
                let mut tried = 0;
                let mut found = None;
                for_each_combination(candidates.len(), k, &mut |pick| {
                    tried += 1;
                    if found.is_some() || tried > COMBINATION_CAP {
                        return false;
                    }
                    let chosen: Vec<usize> = pick.iter().map(|&j| candidates[j]).collect();
                    let mut sk: Vec<String> =
                        chosen.iter().map(|&i| skeleton(&b.comps[i])).collect();
                    sk.sort();
                    if sk != wanted {
                        return true;
                    }
                    let private: Vec<Name> = b
                        .binders
                        .iter()
                        .filter(|y| {
                            let used_inside = chosen.iter().any(|&i| b.comps[i].is_free(y));
                            let used_outside = (0..b.comps.len())
                                .filter(|i| !chosen.contains(i))
                                .any(|i| b.comps[i].is_free(y));
                            used_inside && !used_outside
                        })
                        .cloned()
                        .collect();
                    let copy = Block {
                        binders: private.clone(),
                        comps: chosen.iter().map(|&i| b.comps[i].clone()).collect(),
                    }
                    .into_process();
                    if canonical_process(&copy) == target {
                        found = Some((chosen, private));
                        return false;
                    }
                    true
                });
                if let Some((chosen, private)) = found {
                    let mut idx = 0;
                    b.comps.retain(|_| {
                        let keep = !chosen.contains(&idx);
                        idx += 1;
                        keep
                    });
                    b.binders.retain(|y| !private.contains(y));
                    continue 'restart;
                }
            }
            return;
        }
    }
}

/// Calls `f` on every `k`-subset of `0..n` in lexicographic order until it returns false.
fn for_each_combination(n: usize, k: usize, f: &mut impl FnMut(&[usize]) -> bool) {
    fn go(
        start: usize,
        n: usize,
        k: usize,
        cur: &mut Vec<usize>,
        f: &mut impl FnMut(&[usize]) -> bool,
    ) -> bool {
        if cur.len() == k {
            return f(cur);
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            let more = go(i + 1, n, k, cur, f);
            cur.pop();
            if !more {
                return false;
            }
        }
        true
    }
    go(0, n, k, &mut Vec::new(), f);
}

/// The outermost constructor (and number of summands), a cheaper filter than
/// [`skeleton`].
fn head(p: &Process) -> u8 {
    match p {
        Process::Nil => 0,
        Process::Input { .. } => 1,
        Process::Output { .. } => 2,
        Process::Par(_) => 3,
        Process::Sum(ps) => 4 + (ps.len().min(8) as u8) * 16,
        Process::Restrict(..) => 5,
        Process::Bang(_) => 6,
        Process::Exec(_) => 7,
        Process::Verify { .. } => 8,
        Process::Labels { .. } => 9,
    }
}

/// The process with every name erased; a cheap necessary condition for congruence.
fn skeleton(p: &Process) -> String {
    let mut s = Shaper {
        stack: Vec::new(),
        erase: true,
    };
    s.process(p)
}

/// Serialises a process with bound names replaced by position-independent
/// tokens and parallel components sorted. Equal shapes are a strong hint of
/// congruence; they are only used to guide the choice of binder order.
struct Shaper {
    stack: Vec<(Name, String)>,
    erase: bool,
}

impl Shaper {
    fn expr(&self, e: &Expr) -> String {
        let mapped = e.rename_with(&|n: &Name| {
            if self.erase {
                return Some(Name::new("_"));
            }
            self.stack
                .iter()
                .rev()
                .find(|(m, _)| m == n)
                .map(|(_, tok)| Name::new(tok))
        });
        mapped.to_string()
    }

    fn process(&mut self, p: &Process) -> String {
        match p {
            Process::Nil => "0".into(),
            Process::Input { chan, bind, body } => {
                let c = self.expr(chan);
                self.stack
                    .push((bind.clone(), format!("^{}", self.stack.len())));
                let b = self.process(body);
                self.stack.pop();
                format!("{c}(^).{b}")
            }
            Process::Output {
                chan,
                payload,
                body,
            } => {
                format!(
                    "{}<{}>.{}",
                    self.expr(chan),
                    self.expr(payload),
                    self.process(body)
                )
            }
            Process::Par(_) | Process::Restrict(..) => {
                let (binders, comps) = split_block(p);
                for y in &binders {
                    self.stack.push((y.clone(), "~".into()));
                }
                let mut parts: Vec<String> = comps.iter().map(|c| self.process(c)).collect();
                self.stack.truncate(self.stack.len() - binders.len());
                parts.sort();
                format!("new{}({})", binders.len(), parts.join("|"))
            }
            Process::Sum(ps) => {
                let mut parts: Vec<String> = ps.iter().map(|c| self.process(c)).collect();
                parts.sort();
                format!("({})", parts.join("+"))
            }
            Process::Bang(body) => format!("!{}", self.process(body)),
            Process::Exec(ex) => {
                let mut s = format!(
                    "exec({},{},{},{}){{",
                    self.expr(&ex.lang),
                    self.expr(&ex.chan),
                    self.expr(&ex.program),
                    ex.trace
                );
                for m in &ex.monitors {
                    s += &format!("{}=>{};", self.expr(&m.expr), self.process(&m.handler));
                }
                s + "}"
            }
            Process::Verify {
                subject,
                spec,
                then,
                otherwise,
            } => format!(
                "verify({},{})?{}:{}",
                self.expr(subject),
                self.expr(spec),
                self.process(then),
                self.process(otherwise)
            ),
            Process::Labels {
                allowed,
                lang,
                then,
                otherwise,
            } => {
                let mut labels: Vec<String> = allowed.iter().map(|l| l.to_string()).collect();
                labels.sort();
                labels.dedup();
                format!(
                    "labels({};{})?{}:{}",
                    labels.join(","),
                    self.expr(lang),
                    self.process(then),
                    self.process(otherwise)
                )
            }
        }
    }
}

/// Assigns canonical binder orders and renumbers bound names by depth.
struct Finalizer {
    /// Original name to canonical name, innermost last.
    env: Vec<(Name, Name)>,
}

impl Finalizer {
    const PERMUTATION_CAP: usize = 720;

    fn lookup(&self, n: &Name) -> Option<Name> {
        self.env
            .iter()
            .rev()
            .find(|(m, _)| m == n)
            .map(|(_, c)| c.clone())
    }

    fn expr(&self, e: &Expr) -> Expr {
        e.rename_with(&|n: &Name| self.lookup(n))
    }

    fn process(&mut self, p: &Process, level: u32) -> Process {
        match p {
            Process::Nil => Process::Nil,
            Process::Par(_) | Process::Restrict(..) => self.block(p, level),
            Process::Input { chan, bind, body } => {
                let chan = self.expr(chan);
                let canon = Name::generated(bind.stem(), level + 1);
                self.env.push((bind.clone(), canon.clone()));
                let body = self.process(body, level + 1);
                self.env.pop();
                Process::Input {
                    chan,
                    bind: canon,
                    body: Box::new(body),
                }
            }
            Process::Output {
                chan,
                payload,
                body,
            } => Process::Output {
                chan: self.expr(chan),
                payload: self.expr(payload),
                body: Box::new(self.process(body, level)),
            },
            Process::Sum(ps) => {
                let mut out: Vec<Process> = ps.iter().map(|q| self.process(q, level)).collect();
                out.sort();
                Process::Sum(out)
            }
            Process::Bang(body) => Process::Bang(Box::new(self.process(body, level))),
            Process::Exec(ex) => Process::Exec(Box::new(Exec {
                lang: self.expr(&ex.lang),
                chan: self.expr(&ex.chan),
                program: self.expr(&ex.program),
                trace: ex.trace.clone(),
                monitors: ex
                    .monitors
                    .iter()
                    .map(|m| Monitor {
                        expr: self.expr(&m.expr),
                        handler: self.process(&m.handler, level),
                    })
                    .collect(),
            })),
            Process::Verify {
                subject,
                spec,
                then,
                otherwise,
            } => Process::Verify {
                subject: self.expr(subject),
                spec: self.expr(spec),
                then: Box::new(self.process(then, level)),
                otherwise: Box::new(self.process(otherwise, level)),
            },
            Process::Labels {
                allowed,
                lang,
                then,
                otherwise,
            } => {
                let allowed: BTreeSet<_> = allowed.iter().cloned().collect();
                Process::Labels {
                    allowed: allowed.into_iter().collect(),
                    lang: self.expr(lang),
                    then: Box::new(self.process(then, level)),
                    otherwise: Box::new(self.process(otherwise, level)),
                }
            }
        }
    }

    fn block(&mut self, p: &Process, level: u32) -> Process {
        let (binders, comps) = split_block(p);
        let orders = self.candidate_orders(&binders, &comps);
        let mut best: Option<(Vec<Name>, Vec<Process>)> = None;
        for order in orders {
            let named: Vec<Name> = order
                .iter()
                .enumerate()
                .map(|(i, &b)| Name::generated(binders[b].stem(), level + i as u32 + 1))
                .collect();
            for (&b, n) in order.iter().zip(&named) {
                self.env.push((binders[b].clone(), n.clone()));
            }
            let inner = level + binders.len() as u32;
            let mut out: Vec<Process> = comps.iter().map(|c| self.process(c, inner)).collect();
            self.env.truncate(self.env.len() - binders.len());
            out.sort();
            if best.as_ref().is_none_or(|(_, b)| out < *b) {
                best = Some((named, out));
            }
        }
        let (names, comps) = best.expect("at least one binder order");
        Block {
            binders: names,
            comps,
        }
        .into_process()
    }

    /// Binder orders worth comparing: refine binders by how they are used,
    /// then try every order within classes of indistinguishable binders.
    fn candidate_orders(&self, binders: &[Name], comps: &[&Process]) -> Vec<Vec<usize>> {
        let n = binders.len();
        if n <= 1 {
            return vec![(0..n).collect()];
        }
        let mut colors = vec![0usize; n];
        let mut classes = 1;
        loop {
            let sigs: Vec<String> = (0..n)
                .map(|i| {
                    let mut parts: Vec<String> = comps
                        .iter()
                        .filter(|c| c.is_free(&binders[i]))
                        .map(|c| self.shape_with(c, binders, &colors, Some(i)))
                        .collect();
                    parts.sort();
                    format!("{}:{}", colors[i], parts.join(";"))
                })
                .collect();
            let mut distinct: Vec<&String> = sigs.iter().collect();
            distinct.sort();
            distinct.dedup();
            let next: Vec<usize> = sigs
                .iter()
                .map(|s| distinct.binary_search(&s).unwrap())
                .collect();
            if distinct.len() == classes {
                break;
            }
            classes = distinct.len();
            colors = next;
        }
        let mut by_color: Vec<Vec<usize>> = vec![Vec::new(); classes];
        for (i, &c) in colors.iter().enumerate() {
            by_color[c].push(i);
        }
        let total = by_color
            .iter()
            .map(|g| factorial(g.len()))
            .try_fold(1usize, |acc, f| acc.checked_mul(f))
            .unwrap_or(usize::MAX);
        if total > Self::PERMUTATION_CAP {
            return vec![by_color.concat()];
        }
        let mut orders = vec![Vec::new()];
        for group in &by_color {
            let perms = permutations(group);
            orders = orders
                .into_iter()
                .flat_map(|prefix: Vec<usize>| {
                    perms.iter().map(move |p| {
                        let mut o = prefix.clone();
                        o.extend(p);
                        o
                    })
                })
                .collect();
        }
        orders
    }

    fn shape_with(
        &self,
        p: &Process,
        binders: &[Name],
        colors: &[usize],
        mark: Option<usize>,
    ) -> String {
        let mut stack: Vec<(Name, String)> = self
            .env
            .iter()
            .map(|(old, new)| (old.clone(), new.to_string()))
            .collect();
        for (i, y) in binders.iter().enumerate() {
            let tok = if mark == Some(i) {
                "*".to_string()
            } else {
                format!("@{}", colors[i])
            };
            stack.push((y.clone(), tok));
        }
        Shaper {
            stack,
            erase: false,
        }
        .process(p)
    }
}

fn factorial(k: usize) -> usize {
    (1..=k)
        .try_fold(1usize, |a, b| a.checked_mul(b))
        .unwrap_or(usize::MAX)
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}
