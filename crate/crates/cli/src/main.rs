use std::collections::{BTreeSet, VecDeque};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use lns::canon::{Configuration, MonitorMode};
use lns::derive::Deriver;
use lns::reducer::{self, ExploreOptions, MonitorChoice, RunOptions, StopReason};
use lns::regex::{self, Trace, DEFAULT_STATE_CAP};
use lns::syntax::SystemFile;
use lns::term::Term;

const EXIT_ERROR: u8 = 1;
const EXIT_STEP_LIMIT: u8 = 2;
const EXIT_STUCK: u8 = 3;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(
    name = "lns",
    version,
    about = "Run, explore and check systems that send languages and monitors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Exact,
    Prefix,
}

impl From<Mode> for MonitorMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Exact => MonitorMode::Exact,
            Mode::Prefix => MonitorMode::Prefix,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Choice {
    /// The failing monitor with the lowest index.
    Lowest,
    /// A failing monitor picked by the seeded generator.
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum RegexCheck {
    /// Membership of a trace.
    Check,
    /// Language inclusion, with a witness when it fails.
    Include,
    /// Whether a trace can still be extended to a member.
    Prefix,
}

#[derive(Subcommand)]
enum Command {
    /// Run the entry process with a seeded scheduler.
    Run {
        file: PathBuf,
        /// Process definition to start from instead of the entry.
        #[arg(long)]
        entry: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_steps: Option<usize>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long, value_enum, default_value = "lowest")]
        monitor_choice: Choice,
        /// Print the log as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Explore every reachable configuration breadth first.
    Explore {
        file: PathBuf,
        #[arg(long)]
        entry: Option<String>,
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long)]
        max_nodes: Option<usize>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Write the graph in DOT format to this file, or `-` for standard output.
        #[arg(long)]
        dot: Option<PathBuf>,
        /// Print one line per edge.
        #[arg(long)]
        edges: bool,
        #[arg(long)]
        json: bool,
    },
    /// List the transitions a TSS derives for a term.
    Derive {
        file: PathBuf,
        /// Optional when the file defines a single TSS.
        #[arg(long)]
        tss: Option<String>,
        #[arg(long)]
        term: String,
        /// Also list transitions of terms reachable in fewer than this many steps.
        #[arg(long, default_value_t = 1)]
        steps: usize,
        #[arg(long)]
        json: bool,
    },
    /// Membership, inclusion and prefix checks on regular expressions.
    Regex {
        check: RegexCheck,
        left: String,
        right: String,
        /// Resolve names against the regex definitions of this file.
        #[arg(long)]
        file: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("{msg}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn load(path: &Path) -> Result<SystemFile, String> {
    SystemFile::load(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn configuration(
    sys: &SystemFile,
    entry: Option<&str>,
    mode: Option<Mode>,
) -> Result<Configuration, String> {
    let mode = mode
        .map(MonitorMode::from)
        .or(sys.options.mode)
        .unwrap_or_default();
    let root = match entry {
        None => sys.entry_process().clone(),
        Some(name) => sys
            .process(name)
            .cloned()
            .ok_or_else(|| format!("no process named `{name}`"))?,
    };
    Ok(Configuration::new(root, mode))
}

fn execute(cmd: Command) -> Result<u8, String> {
    match cmd {
        Command::Run {
            file,
            entry,
            seed,
            max_steps,
            mode,
            monitor_choice,
            json,
        } => {
            let sys = load(&file)?;
            let c = configuration(&sys, entry.as_deref(), mode)?;
            let defaults = RunOptions::default();
            let options = RunOptions {
                seed: seed.or(sys.options.seed).unwrap_or(defaults.seed),
                max_steps: max_steps
                    .or(sys.options.max_steps)
                    .unwrap_or(defaults.max_steps),
                monitor_choice: match monitor_choice {
                    Choice::Lowest => MonitorChoice::Lowest,
                    Choice::Random => MonitorChoice::All,
                },
            };
            let result = reducer::run(&c, options);
            if json {
                let log: Vec<_> = result
                    .log
                    .iter()
                    .map(|e| {
                        let fields: serde_json::Map<String, serde_json::Value> = e
                            .event
                            .fields
                            .iter()
                            .map(|(k, v)| (k.clone(), json!(v)))
                            .collect();
                        json!({"step": e.step, "rule": e.event.rule.as_str(), "fields": fields})
                    })
                    .collect();
                let out = json!({
                    "log": log,
                    "stop": result.stop,
                    "final": result.final_config.root.to_string(),
                    "stuck": result.stuck,
                });
                println!("{}", serde_json::to_string_pretty(&out).expect("json"));
            } else {
                for e in &result.log {
                    println!("{e}");
                }
                for d in &result.stuck {
                    println!("stuck {d}");
                }
                println!("final {}", result.final_config.root);
                let stop = match result.stop {
                    StopReason::Quiescent => "quiescent",
                    StopReason::StepLimit => "step-limit",
                    StopReason::Stuck => "stuck",
                };
                println!("stop {stop} after {} steps", result.log.len());
            }
            Ok(match result.stop {
                StopReason::Quiescent => 0,
                StopReason::StepLimit => EXIT_STEP_LIMIT,
                StopReason::Stuck => EXIT_STUCK,
            })
        }
        Command::Explore {
            file,
            entry,
            depth,
            max_nodes,
            mode,
            dot,
            edges,
            json,
        } => {
            let sys = load(&file)?;
            let c = configuration(&sys, entry.as_deref(), mode)?;
            let defaults = ExploreOptions::default();
            let options = ExploreOptions {
                max_depth: depth.or(sys.options.depth).unwrap_or(defaults.max_depth),
                max_nodes: max_nodes
                    .or(sys.options.max_nodes)
                    .unwrap_or(defaults.max_nodes),
            };
            let g = reducer::explore(&c, options);
            if let Some(path) = dot {
                if path.as_os_str() == "-" {
                    print!("{}", g.to_dot());
                } else {
                    std::fs::write(&path, g.to_dot())
                        .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
                }
            }
            let truncated = g.truncated.map(|t| t.as_str()).unwrap_or("no");
            if json {
                let nodes: Vec<String> = g.nodes.iter().map(|n| n.root.to_string()).collect();
                let es: Vec<_> = g
                    .edges
                    .iter()
                    .map(|(a, e, b)| json!({"from": a, "to": b, "rule": e.rule.as_str(), "detail": e.detail()}))
                    .collect();
                let stuck: Vec<_> = g
                    .stuck
                    .iter()
                    .map(|(n, ds)| json!({"node": n, "diagnoses": ds}))
                    .collect();
                let out =
                    json!({"nodes": nodes, "edges": es, "stuck": stuck, "truncated": g.truncated});
                println!("{}", serde_json::to_string_pretty(&out).expect("json"));
            } else {
                if edges {
                    print!("{}", g.edge_list());
                }
                for (n, ds) in &g.stuck {
                    for d in ds {
                        println!("stuck node={n} {d}");
                    }
                }
                println!(
                    "nodes={} edges={} terminal={} stuck={} truncated={truncated}",
                    g.nodes.len(),
                    g.edges.len(),
                    g.terminal_nodes().len(),
                    g.stuck.len()
                );
            }
            Ok(0)
        }
        Command::Derive {
            file,
            tss,
            term,
            steps,
            json,
        } => {
            let sys = load(&file)?;
            let t = match tss {
                Some(name) => sys
                    .tss(&name)
                    .ok_or_else(|| format!("no TSS named `{name}`"))?,
                None => {
                    let defs: Vec<_> = sys.tss_defs().collect();
                    match defs[..] {
                        [only] => &only.tss,
                        _ => {
                            return Err(format!(
                                "{} defines {} TSSs; pick one with --tss",
                                file.display(),
                                defs.len()
                            ))
                        }
                    }
                }
            };
            let source = sys.parse_term(&term).map_err(|e| e.to_string())?;
            let mut deriver = Deriver::new(t, Default::default()).map_err(|e| e.to_string())?;
            let mut rows: Vec<(Term, String, Term)> = Vec::new();
            let mut seen = BTreeSet::from([source.clone()]);
            let mut queue = VecDeque::from([(source, 0usize)]);
            while let Some((s, d)) = queue.pop_front() {
                let ts = deriver.transitions(&s).map_err(|e| e.to_string())?;
                for (l, target) in ts {
                    if d + 1 < steps && seen.insert(target.clone()) {
                        queue.push_back((target.clone(), d + 1));
                    }
                    rows.push((s.clone(), l.to_string(), target));
                }
            }
            if json {
                let out: Vec<_> = rows
                    .iter()
                    .map(|(s, l, t)| json!({"source": s.to_string(), "label": l, "target": t.to_string()}))
                    .collect();
                println!("{}", serde_json::to_string_pretty(&out).expect("json"));
            } else {
                for (s, l, t) in &rows {
                    println!("{s} -{l}-> {t}");
                }
                println!("{} transitions", rows.len());
            }
            Ok(0)
        }
        Command::Regex {
            check,
            left,
            right,
            file,
            json,
        } => {
            let sys = file.as_deref().map(load).transpose()?;
            let parse = |s: &str| match &sys {
                Some(f) => f.parse_regex(s),
                None => lns::syntax::parse_regex(s),
            };
            let l = parse(&left).map_err(|e| e.to_string())?;
            let r = parse(&right).map_err(|e| e.to_string())?;
            let as_trace =
                || Trace::from_regex(&l).ok_or_else(|| format!("`{left}` is not a trace"));
            let (holds, witness) = match check {
                RegexCheck::Check => (regex::member(&as_trace()?, &r), None),
                RegexCheck::Prefix => (regex::prefix_feasible(&as_trace()?, &r), None),
                RegexCheck::Include => {
                    let w = regex::inclusion_witness(&l, &r, &BTreeSet::new(), DEFAULT_STATE_CAP)
                        .map_err(|e| e.to_string())?;
                    (w.is_none(), w.map(Trace::from_labels))
                }
            };
            if json {
                let out = json!({"result": holds, "witness": witness.map(|w| w.to_string())});
                println!("{out}");
            } else {
                match witness {
                    Some(w) => println!("{holds} witness={w}"),
                    None => println!("{holds}"),
                }
            }
            Ok(0)
        }
    }
}
