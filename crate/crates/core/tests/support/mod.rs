//! Helpers shared by the integration tests.
#![allow(dead_code)]

pub mod gen;
pub mod regex_ref;
pub mod rule_suite;
pub mod tss_oracle;

use std::path::PathBuf;

use lns::calculus::{Exec, Expr, Process};
use lns::syntax::SystemFile;

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

pub fn corpus(file: &str) -> SystemFile {
    let path = corpus_dir().join(file);
    SystemFile::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Parses a file made of `defs` plus `proc main = <body>; entry main;`.
pub fn system(defs: &str, body: &str) -> SystemFile {
    let src = format!("{defs}\nproc main = {body};\nentry main;\n");
    SystemFile::parse(&src).unwrap_or_else(|e| panic!("{e}\n{src}"))
}

/// Every `exec` reachable in `p` without crossing a prefix.
pub fn active_execs(p: &Process) -> Vec<&Exec> {
    let mut out = Vec::new();
    collect_execs(p, &mut out);
    out
}

fn collect_execs<'a>(p: &'a Process, out: &mut Vec<&'a Exec>) {
    match p {
        Process::Exec(ex) => out.push(ex),
        Process::Par(ps) => ps.iter().for_each(|q| collect_execs(q, out)),
        Process::Restrict(_, body) => collect_execs(body, out),
        _ => {}
    }
}

/// The TSS of an exec whose language is already evaluated.
pub fn exec_tss(ex: &Exec) -> Option<&lns::tss::Tss> {
    match &ex.lang {
        Expr::Tss(t) => Some(t),
        _ => None,
    }
}
