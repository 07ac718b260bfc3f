//! The reduction relation: redex enumeration over canonical configurations,
//! program execution with online monitors, a seeded scheduler and a bounded
//! breadth-first explorer.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::calculus::{lan_step, Exec, Expr, Fresh, LanStep, Monitor, Name, Process, SortError};
use crate::canon::{Configuration, MonitorMode};
use crate::derive::{derive_all, DeriveError};
use crate::regex::{self, inclusion_witness, Regex, Trace};
use crate::term::Term;
use crate::tss::TssRef;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleTag {
    Comm,
    ExecStep,
    MonitorFail,
    ProgramEnd,
    VerifySuccess,
    VerifyFail,
    LabelsSuccess,
    LabelsFail,
    UnionEval,
}

impl RuleTag {
    pub fn as_str(self) -> &'static str {
        match self {
            RuleTag::Comm => "comm",
            RuleTag::ExecStep => "exec-step",
            RuleTag::MonitorFail => "monitor-fail",
            RuleTag::ProgramEnd => "program-end",
            RuleTag::VerifySuccess => "verify-success",
            RuleTag::VerifyFail => "verify-fail",
            RuleTag::LabelsSuccess => "labels-success",
            RuleTag::LabelsFail => "labels-fail",
            RuleTag::UnionEval => "union-eval",
        }
    }
}

impl fmt::Display for RuleTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A fired rule with its payload as ordered `key=value` fields.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ReductionEvent {
    pub rule: RuleTag,
    pub fields: Vec<(String, String)>,
}

impl ReductionEvent {
    fn new(rule: RuleTag) -> Self {
        ReductionEvent {
            rule,
            fields: Vec::new(),
        }
    }

    fn with(mut self, key: &str, value: impl fmt::Display) -> Self {
        self.fields.push((key.to_string(), value.to_string()));
        self
    }

    pub fn field(&self, key: &str) -> Option<&str> {
        self.fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn detail(&self) -> String {
        self.fields
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl fmt::Display for ReductionEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.rule, self.detail())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StuckKind {
    /// A value of the wrong sort sits where a channel, language, term or regex is expected.
    TypeError,
    ArityClash,
    NotStratifiable,
    DerivationError,
    AutomatonTooLarge,
}

impl StuckKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StuckKind::TypeError => "type-error",
            StuckKind::ArityClash => "arity-clash",
            StuckKind::NotStratifiable => "not-stratifiable",
            StuckKind::DerivationError => "derivation-error",
            StuckKind::AutomatonTooLarge => "automaton-too-large",
        }
    }
}

/// Why some subprocess can never reduce.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct StuckDiagnosis {
    pub kind: StuckKind,
    pub process: String,
    pub message: String,
}

impl fmt::Display for StuckDiagnosis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} in `{}`",
            self.kind.as_str(),
            self.message,
            self.process
        )
    }
}

fn sort_diagnosis(err: SortError, at: &Process) -> StuckDiagnosis {
    let kind = match err {
        SortError::UnionUndefined(_) => StuckKind::ArityClash,
        _ => StuckKind::TypeError,
    };
    StuckDiagnosis {
        kind,
        process: at.to_string(),
        message: err.to_string(),
    }
}

fn derive_diagnosis(err: DeriveError, at: &Process) -> StuckDiagnosis {
    let kind = match err {
        DeriveError::NotStratifiable(_) => StuckKind::NotStratifiable,
        _ => StuckKind::DerivationError,
    };
    StuckDiagnosis {
        kind,
        process: at.to_string(),
        message: err.to_string(),
    }
}

/// Which failing monitors become successors of a program step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MonitorChoice {
    /// Every failing monitor yields its own branch.
    #[default]
    All,
    /// Only the failing monitor with the lowest index.
    Lowest,
}

/// One successor of a program execution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecOutcome {
    pub event: ReductionEvent,
    pub process: Process,
}

/// The `exe` steps of `exec(tss, chan, program, trace){monitors}`.
///
/// Monitor expressions must already be regular expressions.
pub fn step_exec(
    tss: &TssRef,
    chan: &Name,
    program: &Term,
    trace: &Trace,
    monitors: &[Monitor],
    mode: MonitorMode,
) -> Result<Vec<ExecOutcome>, StuckDiagnosis> {
    step_exec_with(
        tss,
        chan,
        program,
        trace,
        monitors,
        mode,
        MonitorChoice::All,
    )
}

fn step_exec_with(
    tss: &TssRef,
    chan: &Name,
    program: &Term,
    trace: &Trace,
    monitors: &[Monitor],
    mode: MonitorMode,
    choice: MonitorChoice,
) -> Result<Vec<ExecOutcome>, StuckDiagnosis> {
    let here = || {
        Process::Exec(Box::new(Exec {
            lang: Expr::Tss(tss.clone()),
            chan: Expr::Name(chan.clone()),
            program: Expr::Term(program.clone()),
            trace: trace.clone(),
            monitors: monitors.to_vec(),
        }))
    };
    let mut compiled = Vec::with_capacity(monitors.len());
    for m in monitors {
        let e = m.expr.to_regex().map_err(|e| sort_diagnosis(e, &here()))?;
        compiled.push((regex::compile(&e), e));
    }
    let steps = derive_all(tss, program).map_err(|e| derive_diagnosis(e, &here()))?;
    if steps.is_empty() {
        let out = Process::Bang(Box::new(Process::Output {
            chan: Expr::Name(chan.clone()),
            payload: Expr::from_trace(trace),
            body: Box::new(Process::Nil),
        }));
        let event = ReductionEvent::new(RuleTag::ProgramEnd)
            .with("chan", chan)
            .with("trace", trace);
        return Ok(vec![ExecOutcome {
            event,
            process: out,
        }]);
    }
    let mut out = Vec::new();
    for (label, next) in steps {
        let tr = trace.append(label.clone());
        let failing: Vec<usize> = compiled
            .iter()
            .enumerate()
            .filter(|(_, (nfa, _))| !monitor_accepts(nfa, &tr, mode))
            .map(|(i, _)| i)
            .collect();
        if failing.is_empty() {
            let event = ReductionEvent::new(RuleTag::ExecStep)
                .with("chan", chan)
                .with("label", &label)
                .with("trace", &tr);
            out.push(ExecOutcome {
                event,
                process: Process::Exec(Box::new(Exec {
                    lang: Expr::Tss(tss.clone()),
                    chan: Expr::Name(chan.clone()),
                    program: Expr::Term(next),
                    trace: tr,
                    monitors: monitors.to_vec(),
                })),
            });
            continue;
        }
        let chosen = match choice {
            MonitorChoice::All => &failing[..],
            MonitorChoice::Lowest => &failing[..1],
        };
        for &i in chosen {
            let event = ReductionEvent::new(RuleTag::MonitorFail)
                .with("chan", chan)
                .with("monitor", i + 1)
                .with("label", &label)
                .with("trace", &tr)
                .with("expr", &compiled[i].1);
            out.push(ExecOutcome {
                event,
                process: monitors[i].handler.clone(),
            });
        }
    }
    Ok(out)
}

fn monitor_accepts(nfa: &regex::Nfa, tr: &Trace, mode: MonitorMode) -> bool {
    let states = nfa.run(tr.labels());
    match mode {
        MonitorMode::Exact => nfa.is_accepting(&states),
        MonitorMode::Prefix => {
            let live = nfa.live_states();
            states.iter().any(|&s| live[s])
        }
    }
}

/// The one-step successors of a configuration and the stuck subprocesses found on the way.
#[derive(Debug, Clone, Default)]
pub struct Successors {
    pub steps: Vec<(ReductionEvent, Configuration)>,
    pub stuck: Vec<StuckDiagnosis>,
}

/// All one-step successors of `c`.
pub fn enabled(c: &Configuration) -> Vec<(ReductionEvent, Configuration)> {
    successors(c).steps
}

pub fn successors(c: &Configuration) -> Successors {
    successors_with(c, MonitorChoice::All)
}

pub fn successors_with(c: &Configuration, choice: MonitorChoice) -> Successors {
    let mut cx = Cx {
        fresh: c.fresh_supply(),
        mode: c.mode,
        choice,
        stuck: BTreeSet::new(),
    };
    let (binders, comps) = owned_block(&c.root);
    let raw = cx.block_steps(&comps);
    // TSS values cache their stratification in a OnceLock that Hash and Ord ignore.
    #[allow(clippy::mutable_key_type)]
    let mut seen = BTreeSet::new();
    let mut steps = Vec::new();
    for s in raw {
        let mut all = binders.clone();
        all.extend(s.binders);
        let root = rebuild(all, s.procs);
        let next = Configuration::new(root, c.mode);
        if seen.insert((s.event.clone(), next.clone())) {
            steps.push((s.event, next));
        }
    }
    Successors {
        steps,
        stuck: cx.stuck.into_iter().collect(),
    }
}

fn owned_block(p: &Process) -> (Vec<Name>, Vec<Process>) {
    let mut binders = Vec::new();
    let mut cur = p;
    while let Process::Restrict(y, body) = cur {
        binders.push(y.clone());
        cur = body;
    }
    let comps = match cur {
        Process::Nil => Vec::new(),
        Process::Par(ps) => ps.clone(),
        other => vec![other.clone()],
    };
    (binders, comps)
}

fn rebuild(binders: Vec<Name>, procs: Vec<Process>) -> Process {
    let mut p = Process::Par(procs);
    for y in binders.into_iter().rev() {
        p = Process::Restrict(y, Box::new(p));
    }
    p
}

/// A step of a block: the event, restrictions to extrude, and the processes
/// that replace the block's components.
struct Step {
    event: ReductionEvent,
    binders: Vec<Name>,
    procs: Vec<Process>,
}

enum Action {
    In { bind: Name, body: Process },
    Out { payload: Expr, body: Process },
}

/// A communication capability of a component.
struct Cap {
    chan: Name,
    action: Action,
    binders: Vec<Name>,
    /// What remains of the component besides the continuation.
    rest: Vec<Process>,
    replicated: bool,
}

struct Cx {
    fresh: Fresh,
    mode: MonitorMode,
    choice: MonitorChoice,
    stuck: BTreeSet<StuckDiagnosis>,
}

impl Cx {
    /// A copy of a nested block with its restrictions renamed apart.
    fn open_block(&mut self, p: &Process) -> (Vec<Name>, Vec<Process>) {
        let (binders, mut comps) = owned_block(p);
        let mut fresh_binders = Vec::with_capacity(binders.len());
        for y in binders {
            let y2 = self.fresh.rename(&y);
            for c in &mut comps {
                *c = c.rename_free(&y, &y2);
            }
            fresh_binders.push(y2);
        }
        (fresh_binders, comps)
    }

    fn block_steps(&mut self, comps: &[Process]) -> Vec<Step> {
        let mut out = Vec::new();
        for (i, comp) in comps.iter().enumerate() {
            for s in self.internal(comp) {
                let mut procs = without(comps, &[i]);
                procs.extend(s.procs);
                out.push(Step {
                    event: s.event,
                    binders: s.binders,
                    procs,
                });
            }
        }
        let caps: Vec<Vec<Cap>> = comps.iter().map(|c| self.caps(c)).collect();
        for (i, ci) in caps.iter().enumerate() {
            for (j, cj) in caps.iter().enumerate() {
                if i == j {
                    continue;
                }
                for a in ci {
                    for b in cj {
                        if let Some(mut s) = self.communicate(a, b) {
                            let mut procs = without(comps, &[i, j]);
                            procs.append(&mut s.procs);
                            s.procs = procs;
                            out.push(s);
                        }
                    }
                }
            }
        }
        out
    }

    /// Input capability `a` receiving from output capability `b`.
    fn communicate(&mut self, a: &Cap, b: &Cap) -> Option<Step> {
        let (
            Action::In { bind, body },
            Action::Out {
                payload,
                body: cont,
            },
        ) = (&a.action, &b.action)
        else {
            return None;
        };
        if a.chan != b.chan {
            return None;
        }
        let received = body.substitute(payload, bind, &mut self.fresh);
        let mut event = ReductionEvent::new(RuleTag::Comm)
            .with("chan", &a.chan)
            .with("payload", payload);
        if a.replicated || b.replicated {
            let side = match (a.replicated, b.replicated) {
                (true, true) => "both",
                (true, false) => "input",
                _ => "output",
            };
            event = event.with("replicated", side);
        }
        let mut binders = a.binders.clone();
        binders.extend(b.binders.iter().cloned());
        let mut procs = a.rest.clone();
        procs.extend(b.rest.iter().cloned());
        procs.push(received);
        procs.push(cont.clone());
        Some(Step {
            event,
            binders,
            procs,
        })
    }

    fn caps(&mut self, comp: &Process) -> Vec<Cap> {
        match comp {
            Process::Input { chan, bind, body } => match chan.as_channel() {
                Ok(x) => vec![Cap {
                    chan: x.clone(),
                    action: Action::In {
                        bind: bind.clone(),
                        body: (**body).clone(),
                    },
                    binders: Vec::new(),
                    rest: Vec::new(),
                    replicated: false,
                }],
                Err(e) => {
                    self.stuck.insert(sort_diagnosis(e, comp));
                    Vec::new()
                }
            },
            Process::Output {
                chan,
                payload,
                body,
            } => match chan.as_channel() {
                Ok(x) => vec![Cap {
                    chan: x.clone(),
                    action: Action::Out {
                        payload: payload.clone(),
                        body: (**body).clone(),
                    },
                    binders: Vec::new(),
                    rest: Vec::new(),
                    replicated: false,
                }],
                Err(e) => {
                    self.stuck.insert(sort_diagnosis(e, comp));
                    Vec::new()
                }
            },
            Process::Sum(ps) => {
                let mut out = Vec::new();
                for s in ps {
                    let (binders, comps) = self.open_block(s);
                    out.extend(self.block_caps(binders, &comps, Vec::new(), false));
                }
                out
            }
            Process::Bang(body) => {
                let (binders, comps) = self.open_block(body);
                self.block_caps(binders, &comps, vec![comp.clone()], true)
            }
            _ => Vec::new(),
        }
    }

    fn block_caps(
        &mut self,
        binders: Vec<Name>,
        comps: &[Process],
        keep: Vec<Process>,
        replicated: bool,
    ) -> Vec<Cap> {
        let mut out = Vec::new();
        for (k, c) in comps.iter().enumerate() {
            for mut cap in self.caps(c) {
                let mut b = binders.clone();
                b.append(&mut cap.binders);
                cap.binders = b;
                let mut rest = keep.clone();
                rest.extend(without(comps, &[k]));
                rest.append(&mut cap.rest);
                cap.rest = rest;
                cap.replicated |= replicated;
                out.push(cap);
            }
        }
        out
    }

    /// Steps that involve a single component.
    fn internal(&mut self, comp: &Process) -> Vec<Step> {
        match comp {
            Process::Sum(ps) => {
                let mut out = Vec::new();
                for s in ps {
                    let (binders, comps) = self.open_block(s);
                    for mut st in self.block_steps(&comps) {
                        let mut b = binders.clone();
                        b.append(&mut st.binders);
                        st.binders = b;
                        out.push(st);
                    }
                }
                out
            }
            Process::Bang(body) => {
                let mut out = Vec::new();
                let (binders, comps) = self.open_block(body);
                for mut st in self.block_steps(&comps) {
                    let mut b = binders.clone();
                    b.append(&mut st.binders);
                    st.binders = b;
                    st.procs.insert(0, comp.clone());
                    st.event = st.event.with("replicated", "copy");
                    out.push(st);
                }
                // Two copies talking to each other.
                let first = self.block_caps(binders, &comps, Vec::new(), true);
                let (binders2, comps2) = self.open_block(body);
                let second = self.block_caps(binders2, &comps2, Vec::new(), true);
                for a in &first {
                    for b in &second {
                        if let Some(mut st) = self.communicate(a, b) {
                            st.procs.insert(0, comp.clone());
                            out.push(st);
                        }
                    }
                }
                out
            }
            Process::Exec(ex) => self.exec(comp, ex),
            Process::Verify {
                subject,
                spec,
                then,
                otherwise,
            } => {
                let (e1, e2) = match (subject.to_regex(), spec.to_regex()) {
                    (Ok(a), Ok(b)) => (a, b),
                    (Err(e), _) | (_, Err(e)) => {
                        self.stuck.insert(sort_diagnosis(e, comp));
                        return Vec::new();
                    }
                };
                match inclusion_witness(&e1, &e2, &BTreeSet::new(), regex::DEFAULT_STATE_CAP) {
                    Ok(None) => vec![single(
                        ReductionEvent::new(RuleTag::VerifySuccess)
                            .with("subject", &e1)
                            .with("spec", &e2),
                        (**then).clone(),
                    )],
                    Ok(Some(w)) => vec![single(
                        ReductionEvent::new(RuleTag::VerifyFail)
                            .with("subject", &e1)
                            .with("spec", &e2)
                            .with("witness", Trace::from_labels(w)),
                        (**otherwise).clone(),
                    )],
                    Err(e) => {
                        self.stuck.insert(StuckDiagnosis {
                            kind: StuckKind::AutomatonTooLarge,
                            process: comp.to_string(),
                            message: e.to_string(),
                        });
                        Vec::new()
                    }
                }
            }
            Process::Labels {
                allowed,
                lang,
                then,
                otherwise,
            } => match lan_step(lang) {
                Err(e) => {
                    self.stuck.insert(sort_diagnosis(e, comp));
                    Vec::new()
                }
                Ok(LanStep::Reduced(next, rule)) => vec![single(
                    ReductionEvent::new(RuleTag::UnionEval)
                        .with("ctx", "labels")
                        .with("rule", rule.as_str()),
                    Process::Labels {
                        allowed: allowed.clone(),
                        lang: next,
                        then: then.clone(),
                        otherwise: otherwise.clone(),
                    },
                )],
                Ok(LanStep::Value(tss)) => {
                    let allowed_set: BTreeSet<_> = allowed.iter().collect();
                    let outside: Vec<String> = tss
                        .labels()
                        .iter()
                        .filter(|l| !allowed_set.contains(l))
                        .map(|l| l.to_string())
                        .collect();
                    let listing = tss
                        .labels()
                        .iter()
                        .map(|l| l.to_string())
                        .collect::<Vec<_>>()
                        .join(",");
                    if outside.is_empty() {
                        vec![single(
                            ReductionEvent::new(RuleTag::LabelsSuccess).with("labels", listing),
                            (**then).clone(),
                        )]
                    } else {
                        vec![single(
                            ReductionEvent::new(RuleTag::LabelsFail)
                                .with("labels", listing)
                                .with("outside", outside.join(",")),
                            (**otherwise).clone(),
                        )]
                    }
                }
            },
            _ => Vec::new(),
        }
    }

    fn exec(&mut self, comp: &Process, ex: &Exec) -> Vec<Step> {
        let tss = match lan_step(&ex.lang) {
            Err(e) => {
                self.stuck.insert(sort_diagnosis(e, comp));
                return Vec::new();
            }
            Ok(LanStep::Reduced(next, rule)) => {
                let event = ReductionEvent::new(RuleTag::UnionEval)
                    .with("ctx", "exec")
                    .with("rule", rule.as_str());
                let p = Process::Exec(Box::new(Exec {
                    lang: next,
                    ..ex.clone()
                }));
                return vec![single(event, p)];
            }
            Ok(LanStep::Value(t)) => t,
        };
        let checked = ex
            .chan
            .as_channel()
            .and_then(|x| ex.program.as_program().map(|t| (x, t)));
        let (chan, program) = match checked {
            Ok(v) => v,
            Err(e) => {
                self.stuck.insert(sort_diagnosis(e, comp));
                return Vec::new();
            }
        };
        match step_exec_with(
            &tss,
            chan,
            program,
            &ex.trace,
            &ex.monitors,
            self.mode,
            self.choice,
        ) {
            Ok(outcomes) => outcomes
                .into_iter()
                .map(|o| single(o.event, o.process))
                .collect(),
            Err(d) => {
                self.stuck.insert(d);
                Vec::new()
            }
        }
    }
}

fn single(event: ReductionEvent, p: Process) -> Step {
    Step {
        event,
        binders: Vec::new(),
        procs: vec![p],
    }
}

fn without(comps: &[Process], skip: &[usize]) -> Vec<Process> {
    comps
        .iter()
        .enumerate()
        .filter(|(i, _)| !skip.contains(i))
        .map(|(_, c)| c.clone())
        .collect()
}

/// The membership check a monitor applies in `mode`.
pub fn monitor_check(tr: &Trace, e: &Regex, mode: MonitorMode) -> bool {
    match mode {
        MonitorMode::Exact => regex::member(tr, e),
        MonitorMode::Prefix => regex::prefix_feasible(tr, e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub seed: u64,
    pub max_steps: usize,
    pub monitor_choice: MonitorChoice,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            seed: 0,
            max_steps: 1_000,
            monitor_choice: MonitorChoice::Lowest,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LogEntry {
    pub step: usize,
    pub event: ReductionEvent,
}

impl fmt::Display for LogEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "step={} rule={} detail={}",
            self.step,
            self.event.rule,
            self.event.detail()
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    /// No step is enabled and nothing is stuck.
    Quiescent,
    StepLimit,
    /// No step is enabled and some subprocess is stuck.
    Stuck,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub final_config: Configuration,
    pub log: Vec<LogEntry>,
    pub stop: StopReason,
    /// Stuck subprocesses of the final configuration.
    pub stuck: Vec<StuckDiagnosis>,
}

impl RunResult {
    pub fn rules(&self) -> impl Iterator<Item = RuleTag> + '_ {
        self.log.iter().map(|e| e.event.rule)
    }

    pub fn contains(&self, rule: RuleTag) -> bool {
        self.rules().any(|r| r == rule)
    }

    /// Communication events on `chan`.
    pub fn comms_on<'a>(&'a self, chan: &'a str) -> impl Iterator<Item = &'a ReductionEvent> + 'a {
        self.log
            .iter()
            .map(|e| &e.event)
            .filter(move |e| e.rule == RuleTag::Comm && e.field("chan") == Some(chan))
    }
}

/// Runs `c` by picking uniformly among enabled steps with a seeded generator.
pub fn run(c: &Configuration, options: RunOptions) -> RunResult {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut cur = c.clone();
    let mut log = Vec::new();
    loop {
        let succ = successors_with(&cur, options.monitor_choice);
        if succ.steps.is_empty() {
            let stop = if succ.stuck.is_empty() {
                StopReason::Quiescent
            } else {
                StopReason::Stuck
            };
            return RunResult {
                final_config: cur,
                log,
                stop,
                stuck: succ.stuck,
            };
        }
        if log.len() >= options.max_steps {
            return RunResult {
                final_config: cur,
                log,
                stop: StopReason::StepLimit,
                stuck: succ.stuck,
            };
        }
        let pick = rng.gen_range(0..succ.steps.len());
        let (event, next) = succ.steps.into_iter().nth(pick).unwrap();
        log.push(LogEntry {
            step: log.len() + 1,
            event,
        });
        cur = next;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExploreOptions {
    pub max_depth: usize,
    pub max_nodes: usize,
}

impl Default for ExploreOptions {
    fn default() -> Self {
        ExploreOptions {
            max_depth: 30,
            max_nodes: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Truncation {
    Depth,
    NodeCap,
    DerivationError,
}

impl Truncation {
    pub fn as_str(self) -> &'static str {
        match self {
            Truncation::Depth => "depth",
            Truncation::NodeCap => "node-cap",
            Truncation::DerivationError => "derivation-error",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExplorationGraph {
    pub nodes: Vec<Configuration>,
    /// BFS depth of each node.
    pub depth: Vec<usize>,
    pub edges: Vec<(usize, ReductionEvent, usize)>,
    pub stuck: BTreeMap<usize, Vec<StuckDiagnosis>>,
    pub truncated: Option<Truncation>,
}

impl ExplorationGraph {
    pub fn index_of(&self, c: &Configuration) -> Option<usize> {
        self.nodes.iter().position(|n| n == c)
    }

    pub fn out_edges(&self, node: usize) -> impl Iterator<Item = &(usize, ReductionEvent, usize)> {
        self.edges.iter().filter(move |(s, _, _)| *s == node)
    }

    /// Nodes with no outgoing edge.
    pub fn terminal_nodes(&self) -> Vec<usize> {
        let sources: BTreeSet<usize> = self.edges.iter().map(|(s, _, _)| *s).collect();
        (0..self.nodes.len())
            .filter(|n| !sources.contains(n))
            .collect()
    }

    /// One line per edge: `src -> dst rule detail`.
    pub fn edge_list(&self) -> String {
        let mut s = String::new();
        for (a, e, b) in &self.edges {
            s += &format!("{a} -> {b} {e}\n");
        }
        s
    }

    pub fn to_dot(&self) -> String {
        let esc = |s: &str| s.replace('\\', "\\\\").replace('"', "\\\"");
        let mut s = String::from("digraph lns {\n  node [shape=box, fontname=monospace];\n");
        for (i, n) in self.nodes.iter().enumerate() {
            let extra = if self.stuck.contains_key(&i) {
                ", color=red"
            } else {
                ""
            };
            s += &format!("  n{i} [label=\"{}\"{extra}];\n", esc(&n.root.to_string()));
        }
        for (a, e, b) in &self.edges {
            s += &format!("  n{a} -> n{b} [label=\"{}\"];\n", esc(&e.to_string()));
        }
        s + "}\n"
    }
}

/// Breadth-first exploration of the reachable configurations of `c`.
pub fn explore(c: &Configuration, options: ExploreOptions) -> ExplorationGraph {
    let mut g = ExplorationGraph {
        nodes: vec![c.clone()],
        depth: vec![0],
        edges: Vec::new(),
        stuck: BTreeMap::new(),
        truncated: None,
    };
    #[allow(clippy::mutable_key_type)]
    let mut index: HashMap<Configuration, usize> = HashMap::from([(c.clone(), 0)]);
    let mut queue = VecDeque::from([0usize]);
    let truncate = |g: &mut ExplorationGraph, why: Truncation| {
        if g.truncated.is_none() {
            g.truncated = Some(why);
        }
    };
    while let Some(node) = queue.pop_front() {
        let succ = successors(&g.nodes[node]);
        if !succ.stuck.is_empty() {
            if succ
                .stuck
                .iter()
                .any(|d| d.kind == StuckKind::DerivationError)
            {
                truncate(&mut g, Truncation::DerivationError);
            }
            g.stuck.insert(node, succ.stuck);
        }
        if succ.steps.is_empty() {
            continue;
        }
        if g.depth[node] >= options.max_depth {
            truncate(&mut g, Truncation::Depth);
            continue;
        }
        for (event, next) in succ.steps {
            let target = match index.get(&next) {
                Some(&t) => t,
                None => {
                    if g.nodes.len() >= options.max_nodes {
                        truncate(&mut g, Truncation::NodeCap);
                        continue;
                    }
                    let t = g.nodes.len();
                    index.insert(next.clone(), t);
                    g.nodes.push(next);
                    g.depth.push(g.depth[node] + 1);
                    queue.push_back(t);
                    t
                }
            };
            g.edges.push((node, event, target));
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::Term;
    use crate::tss::fixtures::partial_ccs;
    use std::sync::Arc;

    fn config(p: Process) -> Configuration {
        Configuration::new(p, MonitorMode::Exact)
    }

    #[test]
    fn comm_substitutes() {
        let p = Process::par(
            Process::input(
                "x",
                "y",
                Process::output("y", Expr::name("k"), Process::Nil),
            ),
            Process::output("x", Expr::name("z"), Process::Nil),
        );
        let steps = enabled(&config(p));
        assert_eq!(steps.len(), 1);
        assert_eq!(steps[0].0.rule, RuleTag::Comm);
        assert_eq!(
            steps[0].1,
            config(Process::output("z", Expr::name("k"), Process::Nil))
        );
    }

    #[test]
    fn nil_has_no_steps() {
        assert!(enabled(&config(Process::Nil)).is_empty());
    }

    #[test]
    fn program_end_on_nil() {
        let t = Arc::new(partial_ccs(&["a"]));
        let p = Process::exec(
            Expr::Tss(t),
            Expr::name("x"),
            Expr::Term(Term::constant("nil")),
            vec![],
        );
        let steps = enabled(&config(p));
        assert_eq!(steps.len(), 1);
        assert_eq!(steps[0].0.rule, RuleTag::ProgramEnd);
        let want = Process::bang(Process::output("x", Expr::Epsilon, Process::Nil));
        assert_eq!(steps[0].1, config(want));
    }

    #[test]
    fn replicated_input_serves_many() {
        let server = Process::bang(Process::input(
            "x",
            "y",
            Process::output("y", Expr::Epsilon, Process::Nil),
        ));
        let p = Process::par(
            server.clone(),
            Process::par(
                Process::output("x", Expr::name("a"), Process::Nil),
                Process::output("x", Expr::name("b"), Process::Nil),
            ),
        );
        let g = explore(&config(p), ExploreOptions::default());
        assert!(g.truncated.is_none());
        // two orders of serving a and b, joined again at the end
        assert_eq!(g.nodes.len(), 4);
        assert!(g
            .edges
            .iter()
            .all(|(_, e, _)| e.field("replicated") == Some("input")));
    }

    #[test]
    fn restriction_extrudes_through_comm() {
        // new k. x<k>.0 | x(y). y<>.0  reduces to  new k. k<%e>.0
        let p = Process::par(
            Process::restrict("k", Process::output("x", Expr::name("k"), Process::Nil)),
            Process::input("x", "y", Process::output("y", Expr::Epsilon, Process::Nil)),
        );
        let steps = enabled(&config(p));
        assert_eq!(steps.len(), 1);
        let want = Process::restrict("k", Process::output("k", Expr::Epsilon, Process::Nil));
        assert_eq!(steps[0].1, config(want));
    }

    #[test]
    fn sum_discards_other_branch() {
        let p = Process::par(
            Process::sum(
                Process::output("a", Expr::Epsilon, Process::Nil),
                Process::output("b", Expr::Epsilon, Process::Nil),
            ),
            Process::input("a", "y", Process::Nil),
        );
        let steps = enabled(&config(p));
        assert_eq!(steps.len(), 1);
        assert_eq!(steps[0].1, config(Process::Nil));
    }

    #[test]
    fn run_is_deterministic() {
        let p = Process::par(
            Process::bang(Process::output("a", Expr::name("u"), Process::Nil)),
            Process::bang(Process::input("a", "y", Process::Nil)),
        );
        let opts = RunOptions {
            seed: 7,
            max_steps: 5,
            ..RunOptions::default()
        };
        let r1 = run(&config(p.clone()), opts);
        let r2 = run(&config(p), opts);
        assert_eq!(r1.log, r2.log);
        assert_eq!(r1.stop, StopReason::StepLimit);
    }
}
