//! Random processes and random applications of the congruence axioms.

use lns::calculus::{Expr, Name, Process};
use lns::regex::Regex;
use rand::seq::SliceRandom;
use rand::Rng;

const FREE: [&str; 2] = ["a", "b"];

pub struct Gen {
    next: u32,
    bangs: usize,
}

impl Default for Gen {
    fn default() -> Self {
        Gen { next: 0, bangs: 1 }
    }
}

impl Gen {
    fn fresh(&mut self, stem: &str) -> String {
        self.next += 1;
        format!("{stem}{}", self.next)
    }

    fn pick_name(&self, rng: &mut impl Rng, scope: &[String]) -> String {
        let k = rng.gen_range(0..FREE.len() + scope.len());
        if k < FREE.len() {
            FREE[k].to_string()
        } else {
            scope[k - FREE.len()].clone()
        }
    }

    fn payload(&self, rng: &mut impl Rng, scope: &[String]) -> Expr {
        match rng.gen_range(0..6) {
            0 => Expr::from_regex(&Regex::star(Regex::atom("x"))),
            1 => Expr::label("x"),
            _ => Expr::name(&self.pick_name(rng, scope)),
        }
    }

    /// A random process with roughly `size` constructors.
    pub fn process(&mut self, rng: &mut impl Rng, size: usize, scope: &mut Vec<String>) -> Process {
        if size <= 1 {
            return if rng.gen_bool(0.3) {
                Process::Nil
            } else {
                let ch = self.pick_name(rng, scope);
                Process::output(&ch, self.payload(rng, scope), Process::Nil)
            };
        }
        match rng.gen_range(0..10) {
            // A sender and a receiver on the same channel, so that something happens.
            8 | 9 if size >= 3 => self.pair(rng, size, scope),
            0 | 1 => {
                let ch = self.pick_name(rng, scope);
                let y = self.fresh("y");
                scope.push(y.clone());
                let body = self.process(rng, size - 1, scope);
                scope.pop();
                Process::input(&ch, &y, body)
            }
            2 => {
                let ch = self.pick_name(rng, scope);
                let payload = self.payload(rng, scope);
                Process::output(&ch, payload, self.process(rng, size - 1, scope))
            }
            3 | 4 => {
                let k = rng.gen_range(1..size);
                let a = self.process(rng, k, scope);
                let b = self.process(rng, size - k, scope);
                Process::par(a, b)
            }
            5 => {
                let k = rng.gen_range(1..size);
                let a = self.guarded(rng, k, scope);
                let b = self.guarded(rng, size - k, scope);
                Process::sum(a, b)
            }
            6 => {
                let z = self.fresh("z");
                scope.push(z.clone());
                let body = self.process(rng, size - 1, scope);
                scope.pop();
                Process::restrict(&z, body)
            }
            _ if self.bangs > 0 => {
                self.bangs -= 1;
                Process::bang(self.guarded(rng, size - 1, scope))
            }
            _ => {
                let subject = Expr::from_regex(&Regex::atom("x"));
                let spec = Expr::from_regex(&Regex::star(Regex::atom("x")));
                let k = (size / 2).max(1);
                let then = self.process(rng, k, scope);
                let otherwise = self.process(rng, k, scope);
                Process::verify(subject, spec, then, otherwise)
            }
        }
    }

    /// Several components in parallel, most of them sender/receiver pairs.
    pub fn system(&mut self, rng: &mut impl Rng, size: usize) -> Process {
        let n = rng.gen_range(2..=3);
        let mut comps = Vec::new();
        for _ in 0..n {
            let k = (size / n).max(3);
            let c = if rng.gen_bool(0.7) {
                self.pair(rng, k, &mut Vec::new())
            } else {
                self.process(rng, k, &mut Vec::new())
            };
            comps.push(c);
        }
        Process::Par(comps)
    }

    fn pair(&mut self, rng: &mut impl Rng, size: usize, scope: &mut Vec<String>) -> Process {
        let ch = self.pick_name(rng, scope);
        let k = rng.gen_range(1..size - 1);
        let payload = self.payload(rng, scope);
        let sender = Process::output(&ch, payload, self.process(rng, k, scope));
        let y = self.fresh("y");
        scope.push(y.clone());
        let receiver = Process::input(&ch, &y, self.process(rng, size - 1 - k, scope));
        scope.pop();
        Process::par(sender, receiver)
    }

    /// A prefix-guarded process.
    fn guarded(&mut self, rng: &mut impl Rng, size: usize, scope: &mut Vec<String>) -> Process {
        let ch = self.pick_name(rng, scope);
        if rng.gen_bool(0.5) {
            let y = self.fresh("y");
            scope.push(y.clone());
            let body = self.process(rng, size.saturating_sub(1).max(1), scope);
            scope.pop();
            Process::input(&ch, &y, body)
        } else {
            let payload = self.payload(rng, scope);
            Process::output(
                &ch,
                payload,
                self.process(rng, size.saturating_sub(1).max(1), scope),
            )
        }
    }
}

/// Applies one congruence axiom at a random position of `p`.
pub fn perturb(p: &Process, rng: &mut impl Rng, fresh: &mut u32) -> Process {
    let kids = children(p);
    if kids == 0 || rng.gen_bool(0.35) {
        return rewrite_here(p, rng, fresh);
    }
    let k = rng.gen_range(0..kids);
    map_child(p, k, |c| perturb(c, rng, fresh))
}

fn children(p: &Process) -> usize {
    match p {
        Process::Nil | Process::Exec(_) | Process::Labels { .. } => 0,
        Process::Input { .. }
        | Process::Output { .. }
        | Process::Restrict(..)
        | Process::Bang(_) => 1,
        Process::Par(ps) | Process::Sum(ps) => ps.len(),
        Process::Verify { .. } => 2,
    }
}

fn map_child(p: &Process, k: usize, f: impl FnOnce(&Process) -> Process) -> Process {
    match p {
        Process::Input { chan, bind, body } => Process::Input {
            chan: chan.clone(),
            bind: bind.clone(),
            body: Box::new(f(body)),
        },
        Process::Output {
            chan,
            payload,
            body,
        } => Process::Output {
            chan: chan.clone(),
            payload: payload.clone(),
            body: Box::new(f(body)),
        },
        Process::Restrict(x, body) => Process::Restrict(x.clone(), Box::new(f(body))),
        Process::Bang(body) => Process::Bang(Box::new(f(body))),
        Process::Par(ps) | Process::Sum(ps) => {
            let mut ps = ps.clone();
            ps[k] = f(&ps[k]);
            if matches!(p, Process::Par(_)) {
                Process::Par(ps)
            } else {
                Process::Sum(ps)
            }
        }
        Process::Verify {
            subject,
            spec,
            then,
            otherwise,
        } => {
            let (then, otherwise) = if k == 0 {
                (f(then), (**otherwise).clone())
            } else {
                ((**then).clone(), f(otherwise))
            };
            Process::verify(subject.clone(), spec.clone(), then, otherwise)
        }
        other => other.clone(),
    }
}

fn fresh_name(fresh: &mut u32) -> Name {
    *fresh += 1;
    Name::new(&format!("w{fresh}"))
}

fn regroup(ps: &[Process], rng: &mut impl Rng, build: fn(Vec<Process>) -> Process) -> Process {
    let mut ps = ps.to_vec();
    ps.shuffle(rng);
    if ps.len() >= 3 && rng.gen_bool(0.5) {
        let k = rng.gen_range(1..ps.len());
        let right = ps.split_off(k);
        return build(vec![build(ps), build(right)]);
    }
    build(ps)
}

type Rewrite<'a> = Box<dyn Fn(&mut u32) -> Process + 'a>;

fn rewrite_here(p: &Process, rng: &mut impl Rng, fresh: &mut u32) -> Process {
    let mut options: Vec<Rewrite<'_>> = vec![
        Box::new(|_| Process::Par(vec![p.clone(), Process::Nil])),
        Box::new(|_| Process::Par(vec![Process::Nil, p.clone()])),
        Box::new(|_| Process::Sum(vec![p.clone(), Process::Nil])),
        Box::new(|fr| Process::Restrict(fresh_name(fr), Box::new(p.clone()))),
        Box::new(|fr| {
            Process::Par(vec![
                p.clone(),
                Process::Restrict(fresh_name(fr), Box::new(Process::Nil)),
            ])
        }),
    ];
    match p {
        Process::Par(ps) if ps.len() >= 2 => {
            options.push(Box::new(|_| {
                Process::Par(ps.iter().rev().cloned().collect())
            }));
            if ps.len() >= 3 {
                options.push(Box::new(|_| {
                    Process::Par(vec![
                        Process::Par(ps[..2].to_vec()),
                        Process::Par(ps[2..].to_vec()),
                    ])
                }));
            }
            // Pull a restriction out over its siblings.
            for (i, c) in ps.iter().enumerate() {
                if let Process::Restrict(x, body) = c {
                    options.push(Box::new(move |fr| {
                        let y = fresh_name(fr);
                        let mut comps = ps.clone();
                        comps[i] = body.rename_free(x, &y);
                        Process::Restrict(y, Box::new(Process::Par(comps)))
                    }));
                }
            }
        }
        Process::Sum(ps) if ps.len() >= 2 => {
            options.push(Box::new(|_| {
                Process::Sum(ps.iter().rev().cloned().collect())
            }));
            if ps.len() >= 3 {
                options.push(Box::new(|_| {
                    Process::Sum(vec![
                        Process::Sum(ps[..2].to_vec()),
                        Process::Sum(ps[2..].to_vec()),
                    ])
                }));
            }
        }
        Process::Bang(body) => {
            options.push(Box::new(|_| {
                Process::Par(vec![(**body).clone(), p.clone()])
            }));
        }
        Process::Restrict(x, body) => {
            options.push(Box::new(|fr| {
                let y = fresh_name(fr);
                Process::Restrict(y.clone(), Box::new(body.rename_free(x, &y)))
            }));
            if let Process::Restrict(y, inner) = &**body {
                options.push(Box::new(|_| {
                    Process::Restrict(
                        y.clone(),
                        Box::new(Process::Restrict(x.clone(), inner.clone())),
                    )
                }));
            }
            // Push the restriction into the components that use it.
            if let Process::Par(ps) = &**body {
                let (uses, others): (Vec<_>, Vec<_>) =
                    ps.iter().cloned().partition(|c| c.is_free(x));
                if !others.is_empty() {
                    options.push(Box::new(move |_| {
                        let mut comps = others.clone();
                        comps.push(Process::Restrict(
                            x.clone(),
                            Box::new(Process::Par(uses.clone())),
                        ));
                        Process::Par(comps)
                    }));
                }
            }
        }
        Process::Input { chan, bind, body } => {
            options.push(Box::new(|fr| {
                let y = fresh_name(fr);
                Process::Input {
                    chan: chan.clone(),
                    bind: y.clone(),
                    body: Box::new(body.rename_free(bind, &y)),
                }
            }));
        }
        _ => {}
    }
    let k = rng.gen_range(0..options.len());
    let out = options[k](fresh);
    if let Process::Par(ps) = &out {
        if ps.len() >= 2 && rng.gen_bool(0.3) {
            return regroup(ps, rng, Process::Par);
        }
    }
    out
}
