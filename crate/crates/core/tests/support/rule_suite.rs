//! One check per reduction rule and per group of congruence laws. Every
//! check compares the complete set of one-step successors against
//! hand-written configurations.

use lns::calculus::{Exec, Expr, Monitor, Process};
use lns::canon::{Configuration, MonitorMode};
use lns::reducer::{run, successors, RuleTag, RunOptions, StopReason};
use lns::regex::Trace;
use lns::syntax::SystemFile;
use lns::term::Term;
use lns::tss::TssRef;

pub const DEFS: &str = "
tss pccs {
  labels a, co_a, tau;
  ops nil/0, a/1, co_a/1, par/2;
  vars p, q, p1, q1;
  rule act forall x in a, co_a: x(p) -x-> p;
  rule sync: p -a-> p1, q -co_a-> q1 ==> par(p, q) -tau-> par(p1, q1);
}
tss idle { labels sigma; ops nil/0; rule nil_idle: nil -sigma-> nil; }
tss idle2 { labels sigma; ops nil/0, a/1; vars p; rule a_idle: a(p) -sigma-> a(p); }
tss both = pccs union idle;
tss all3 = both union idle2;
";

pub type Check = fn() -> Result<(), String>;

pub const RULES: &[(&str, Check)] = &[
    ("comm", comm),
    ("exec", exec),
    ("exec-ctx", exec_ctx),
    ("verify-success", verify_success),
    ("verify-fail", verify_fail),
    ("labels-success", labels_success),
    ("labels-fail", labels_fail),
    ("labels-ctx", labels_ctx),
    ("union", union),
    ("union-ctx1", union_ctx1),
    ("union-ctx2", union_ctx2),
    ("program-step", program_step),
    ("monitor-fail", monitor_fail),
    ("program-end", program_end),
    ("congruence-par", congruence_par),
    ("congruence-sum", congruence_sum),
    ("congruence-restriction-replication", congruence_restriction),
];

fn file(body: &str) -> SystemFile {
    super::system(DEFS, body)
}

fn p(body: &str) -> Process {
    file(body).entry_process().clone()
}

fn tss(name: &str) -> TssRef {
    file("0").tss(name).unwrap().clone()
}

fn cfg(p: Process) -> Configuration {
    Configuration::new(p, MonitorMode::Exact)
}

fn running(lang: &str, program: Term, trace: &str, monitors: Vec<Monitor>) -> Process {
    Process::Exec(Box::new(Exec {
        lang: Expr::Tss(tss(lang)),
        chan: Expr::name("x"),
        program: Expr::Term(program),
        trace: Trace::parse_dotted(trace),
        monitors,
    }))
}

fn nil() -> Term {
    Term::constant("nil")
}

/// The successors of `start` are exactly `expected`.
fn steps_are(start: Process, expected: Vec<(RuleTag, Process)>) -> Result<(), String> {
    let mut got: Vec<(RuleTag, Configuration)> = successors(&cfg(start.clone()))
        .steps
        .into_iter()
        .map(|(e, c)| (e.rule, c))
        .collect();
    let mut want: Vec<(RuleTag, Configuration)> =
        expected.into_iter().map(|(r, q)| (r, cfg(q))).collect();
    got.sort();
    want.sort();
    if got == want {
        Ok(())
    } else {
        Err(format!("from {start}\n  got  {got:?}\n  want {want:?}"))
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// `P` and `Q` have the same canonical form and the same successors.
fn congruent(a: Process, b: Process) -> Result<(), String> {
    let (ca, cb) = (cfg(a.clone()), cfg(b.clone()));
    ensure(ca == cb, || format!("{a}  !=  {b}\n  {ca:?}\n  {cb:?}"))?;
    let mut sa = successors(&ca).steps;
    let mut sb = successors(&cb).steps;
    sa.sort();
    sb.sort();
    ensure(sa == sb, || format!("successors differ for {a} and {b}"))
}

fn comm() -> Result<(), String> {
    steps_are(
        p("x<u>.y<u>.0 | x(z).z<v>.0"),
        vec![(RuleTag::Comm, p("y<u>.0 | u<v>.0"))],
    )?;
    // A restricted name sent out carries its scope along.
    steps_are(
        p("new r.x<r>.r(k).0 | x(z).z<v>.0"),
        vec![(RuleTag::Comm, p("new r.(r(k).0 | r<v>.0)"))],
    )?;
    // The receiver's binder is renamed apart from the payload.
    steps_are(
        p("x<k>.0 | x(z).new k.(z<k>.0)"),
        vec![(RuleTag::Comm, p("new m.(k<m>.0)"))],
    )
}

fn exec() -> Result<(), String> {
    steps_are(
        p("exec(pccs, x, a(nil))"),
        vec![(RuleTag::ExecStep, running("pccs", nil(), "a", vec![]))],
    )?;
    let succ = successors(&cfg(p("exec(pccs, x, a(nil))"))).steps;
    let ev = &succ[0].0;
    ensure(
        ev.field("label") == Some("a") && ev.field("trace") == Some("a"),
        || ev.to_string(),
    )
}

fn exec_ctx() -> Result<(), String> {
    let program = Term::app("par", vec![nil(), nil()]);
    steps_are(
        p("new x.(exec(pccs, x, par(a(nil), co_a(nil))) | y(t).0)"),
        vec![(
            RuleTag::ExecStep,
            Process::restrict(
                "x",
                Process::par(running("pccs", program, "tau", vec![]), p("y(t).0")),
            ),
        )],
    )
}

fn verify_success() -> Result<(), String> {
    steps_are(
        p("verify(a.co_a, (a|co_a)*) ? yes<> : no<>"),
        vec![(RuleTag::VerifySuccess, p("yes<>"))],
    )
}

fn verify_fail() -> Result<(), String> {
    let start = p("verify(a.a|co_a, a*) ? yes<> : no<>");
    steps_are(start.clone(), vec![(RuleTag::VerifyFail, p("no<>"))])?;
    let succ = successors(&cfg(start)).steps;
    let ev = &succ[0].0;
    ensure(ev.field("witness") == Some("co_a"), || ev.to_string())
}

fn labels_success() -> Result<(), String> {
    steps_are(
        p("labels(a, co_a, tau, sigma; pccs) ? yes<> : no<>"),
        vec![(RuleTag::LabelsSuccess, p("yes<>"))],
    )
}

fn labels_fail() -> Result<(), String> {
    let start = p("labels(a, co_a; pccs) ? yes<> : no<>");
    steps_are(start.clone(), vec![(RuleTag::LabelsFail, p("no<>"))])?;
    let succ = successors(&cfg(start)).steps;
    let ev = &succ[0].0;
    ensure(ev.field("outside") == Some("tau"), || ev.to_string())
}

fn union_event(start: &Process) -> Result<(String, String), String> {
    let succ = successors(&cfg(start.clone())).steps;
    let ev = &succ.first().ok_or("no step")?.0;
    Ok((
        ev.field("ctx").unwrap_or_default().to_string(),
        ev.field("rule").unwrap_or_default().to_string(),
    ))
}

fn labels_ctx() -> Result<(), String> {
    let start = p("labels(a, co_a, tau, sigma; pccs union idle) ? yes<> : no<>");
    steps_are(
        start.clone(),
        vec![(
            RuleTag::UnionEval,
            p("labels(a, co_a, tau, sigma; both) ? yes<> : no<>"),
        )],
    )?;
    let ev = union_event(&start)?;
    ensure(ev == ("labels".into(), "union".into()), || {
        format!("{ev:?}")
    })
}

fn union() -> Result<(), String> {
    let start = p("exec(pccs union idle, x, nil)");
    steps_are(
        start.clone(),
        vec![(RuleTag::UnionEval, p("exec(both, x, nil)"))],
    )?;
    let ev = union_event(&start)?;
    ensure(ev == ("exec".into(), "union".into()), || format!("{ev:?}"))?;
    // Clashing arities leave the exec stuck.
    let clash = "tss clash { labels a; ops nil/1; }";
    let f = super::system(&format!("{DEFS}{clash}"), "exec(pccs union clash, x, nil)");
    let s = successors(&cfg(f.entry_process().clone()));
    ensure(s.steps.is_empty() && s.stuck.len() == 1, || {
        format!("{:?}", s.stuck)
    })
}

fn union_ctx1() -> Result<(), String> {
    let start = p("exec((pccs union idle) union idle2, x, nil)");
    steps_are(
        start.clone(),
        vec![(RuleTag::UnionEval, p("exec(both union idle2, x, nil)"))],
    )?;
    let ev = union_event(&start)?;
    ensure(ev.1 == "union-ctx1", || format!("{ev:?}"))
}

fn union_ctx2() -> Result<(), String> {
    let start = p("exec(idle2 union (pccs union idle), x, nil)");
    steps_are(
        start.clone(),
        vec![(RuleTag::UnionEval, p("exec(idle2 union both, x, nil)"))],
    )?;
    let ev = union_event(&start)?;
    ensure(ev.1 == "union-ctx2", || format!("{ev:?}"))
}

fn monitors(f: &SystemFile, specs: &[(&str, &str)]) -> Vec<Monitor> {
    specs
        .iter()
        .map(|(e, h)| Monitor {
            expr: Expr::from_regex(&f.parse_regex(e).unwrap()),
            handler: super::system(DEFS, h).entry_process().clone(),
        })
        .collect()
}

fn program_step() -> Result<(), String> {
    let f = file("0");
    let ms = monitors(&f, &[("a.co_a*", "h<>"), ("(a|co_a)*", "g<>")]);
    steps_are(
        p("exec(pccs, x, a(co_a(nil))) { a.co_a* => h<>; (a|co_a)* => g<>; }"),
        vec![(
            RuleTag::ExecStep,
            running("pccs", Term::app("co_a", vec![nil()]), "a", ms),
        )],
    )
}

fn monitor_fail() -> Result<(), String> {
    // Only the failing monitor fires.
    steps_are(
        p("exec(pccs, x, a(nil)) { co_a* => h<>; a => g<>; }"),
        vec![(RuleTag::MonitorFail, p("h<>"))],
    )?;
    // Each failing monitor is a separate branch.
    steps_are(
        p("exec(pccs, x, a(nil)) { co_a => h<>; co_a.a => g<>; }"),
        vec![
            (RuleTag::MonitorFail, p("h<>")),
            (RuleTag::MonitorFail, p("g<>")),
        ],
    )
}

fn program_end() -> Result<(), String> {
    let trace = Trace::parse_dotted("a.co_a");
    let published = || Process::bang(Process::output("x", Expr::from_trace(&trace), Process::Nil));
    steps_are(
        running("pccs", nil(), "a.co_a", vec![]),
        vec![(RuleTag::ProgramEnd, published())],
    )?;
    // The trace stays available to every reader.
    let start = Process::Par(vec![
        running("pccs", nil(), "a.co_a", vec![]),
        p("x(t).r1<t>.0"),
        p("x(t).r2<t>.0"),
    ]);
    let want = cfg(Process::Par(vec![
        published(),
        Process::output("r1", Expr::from_trace(&trace), Process::Nil),
        Process::output("r2", Expr::from_trace(&trace), Process::Nil),
    ]));
    for seed in 0..4 {
        let r = run(
            &cfg(start.clone()),
            RunOptions {
                seed,
                ..RunOptions::default()
            },
        );
        ensure(
            r.stop == StopReason::Quiescent && r.final_config == want,
            || format!("seed {seed}: {:?}", r.final_config),
        )?;
    }
    Ok(())
}

fn congruence_par() -> Result<(), String> {
    congruent(p("x<u>.0 | 0"), p("x<u>.0"))?;
    congruent(p("x<u>.0 | x(z).z<v>.0"), p("x(z).z<v>.0 | x<u>.0"))?;
    congruent(
        p("(x<u>.0 | y<u>.0) | x(z).0"),
        p("x<u>.0 | (y<u>.0 | x(z).0)"),
    )
}

fn congruence_sum() -> Result<(), String> {
    congruent(p("x<u>.0 + 0"), p("x<u>.0"))?;
    congruent(p("x<u>.0 + y<u>.0"), p("y<u>.0 + x<u>.0"))?;
    congruent(
        p("(x<u>.0 + y<u>.0) + z<u>.0"),
        p("x<u>.0 + (y<u>.0 + z<u>.0)"),
    )?;
    // Choosing one summand discards the rest.
    steps_are(
        p("(x<u>.k<u>.0 + y<u>.0) | x(z).0"),
        vec![(RuleTag::Comm, p("k<u>.0"))],
    )
}

fn congruence_restriction() -> Result<(), String> {
    congruent(p("x<u>.0 | new r.0"), p("x<u>.0"))?;
    congruent(p("new r.new s.r<s>.0"), p("new s.new r.r<s>.0"))?;
    congruent(p("new r.(r<u>.0 | y<u>.0)"), p("new r.r<u>.0 | y<u>.0"))?;
    congruent(p("new r.r<u>.0"), p("new s.s<u>.0"))?;
    congruent(p("!x(z).z<v>.0"), p("x(z).z<v>.0 | !x(z).z<v>.0"))?;
    steps_are(
        p("!x(z).z<v>.0 | x<u>.0"),
        vec![(RuleTag::Comm, p("!x(z).z<v>.0 | u<v>.0"))],
    )?;
    // Two copies of a replicated process may talk to each other.
    steps_are(
        p("!(x<u>.0 | x(z).z<v>.0)"),
        vec![
            (RuleTag::Comm, p("!(x<u>.0 | x(z).z<v>.0) | u<v>.0")),
            (
                RuleTag::Comm,
                p("!(x<u>.0 | x(z).z<v>.0) | x(z).z<v>.0 | x<u>.0 | u<v>.0"),
            ),
        ],
    )
}

pub fn all() -> Vec<(&'static str, Result<(), String>)> {
    RULES.iter().map(|(n, f)| (*n, f())).collect()
}
