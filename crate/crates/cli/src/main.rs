//! `viewdet` command-line front end.
//!
//! Exit codes: 0 DETERMINED/success, 1 NOT_DETERMINED, 2 UNKNOWN,
//! 3 usage/parse error, 4 UNSUPPORTED_CLASS.

use viewdet_cli::ast::{problem_to_file, Compiled, MachineDecl};
use viewdet_cli::{parser, printer};
use clap::{Args, Parser as ClapParser, Subcommand};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use viewdet::chase::{chase, ChaseConfig, ChaseStatus};
use viewdet::corpus::{gen_cellular, gen_tiling, gen_tm, simulate, MachineSpec, TilingMode};
use viewdet::decomp::TreeDecomposition;
use viewdet::error::Error;
use viewdet::mondet::{
    brute_force_mondet, decide_full, decide_linear_cq, search_counterexample, BruteForceOutcome,
    ProblemQuery, SearchBudgets, Verdict, VerdictKind,
};
use viewdet::rewrite::{backward_rewrite_ucq, view_image_rewriting, ViewImageRewriting};
use viewdet::tgd::classify_rules;
use viewdet::treecode::{approx_automaton, backward_map, decode, encode, TreeCode};

#[derive(ClapParser)]
#[command(name = "viewdet", about = "Monotonic determinacy toolkit", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Emit machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Classify the constraints (and query/view shapes) of a problem file.
    Classify { file: PathBuf },
    /// Chase the file's facts with its TGDs.
    Chase {
        file: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        steps: usize,
    },
    /// Evaluate the query on the file's facts.
    Eval { file: PathBuf },
    /// Rewrite the query: backward under the TGDs, or through the view image.
    Rewrite {
        file: PathBuf,
        #[arg(long, default_value = "backward")]
        method: String,
        /// Disjunct cap for backward rewriting.
        #[arg(long, default_value_t = 256)]
        cap: usize,
        #[arg(long, default_value_t = 10_000)]
        steps: usize,
    },
    /// Decide monotonic determinacy exactly (dispatches on the rule class).
    Decide { file: PathBuf },
    /// Budgeted counterexample search.
    Search {
        file: PathBuf,
        #[arg(long, default_value_t = 3)]
        unfold_depth: usize,
        #[arg(long, default_value_t = 50)]
        chase_steps: usize,
        #[arg(long, default_value_t = 4096)]
        backv_limit: usize,
    },
    /// Exhaustive counterexample search over tiny domains.
    Brute {
        file: PathBuf,
        #[arg(long, default_value_t = 2)]
        max_domain: usize,
    },
    /// Compile a machine spec into a problem file.
    Gen {
        #[command(subcommand)]
        kind: GenKind,
    },
    /// Simulate a machine spec directly (the ground-truth oracle).
    Sim {
        spec: PathBuf,
        #[arg(long, default_value_t = 10)]
        bound: usize,
    },
    /// Tree-code operations.
    Treecode {
        #[command(subcommand)]
        op: TreecodeOp,
    },
}

#[derive(Args)]
struct GenArgs {
    spec: PathBuf,
    /// Output problem file (stdout if omitted).
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum GenKind {
    Tm(GenArgs),
    Ca(GenArgs),
    Tiling {
        #[command(flatten)]
        args: GenArgs,
        #[arg(long, default_value = "cq")]
        mode: String,
    },
}

#[derive(Subcommand)]
enum TreecodeOp {
    /// Encode the file's facts (with a trivial decomposition) as a tree code.
    Encode {
        file: PathBuf,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        arity: Option<usize>,
    },
    /// Decode a tree-code JSON file against a problem file's schema.
    Decode { code: PathBuf, schema: PathBuf },
    /// Backward-map the query program's approximation automaton to Datalog.
    Backmap { file: PathBuf },
}

enum Failure {
    Parse(String),
    Core(Error),
    Io(String),
}

impl Failure {
    fn exit(&self) -> u8 {
        match self {
            Failure::Core(Error::UnsupportedClass(_)) => 4,
            _ => 3,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Parse(m) | Failure::Io(m) => m.clone(),
            Failure::Core(e) => format!("error: {e}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        Failure::Core(e)
    }
}

struct Report {
    text: String,
    json: Value,
    exit: u8,
}

fn load(path: &Path) -> Result<Compiled, Failure> {
    let src = std::fs::read_to_string(path)
        .map_err(|e| Failure::Io(format!("cannot read {}: {e}", path.display())))?;
    let file = parser::parse(&src).map_err(|e| Failure::Parse(e.to_string()))?;
    file.compile().map_err(Failure::from)
}

fn load_machine(path: &Path) -> Result<MachineDecl, Failure> {
    let src = std::fs::read_to_string(path)
        .map_err(|e| Failure::Io(format!("cannot read {}: {e}", path.display())))?;
    let file = parser::parse(&src).map_err(|e| Failure::Parse(e.to_string()))?;
    file.machines
        .into_iter()
        .next()
        .ok_or_else(|| Failure::Io(format!("{} contains no machine block", path.display())))
}

fn verdict_report(v: &Verdict) -> Report {
    let (word, exit) = match &v.kind {
        VerdictKind::Determined => ("DETERMINED".to_string(), 0),
        VerdictKind::NotDetermined(c) => {
            (format!("NOT_DETERMINED {:?}", c.certification).to_uppercase(), 1)
        }
        VerdictKind::Unknown { .. } => ("UNKNOWN".to_string(), 2),
    };
    let mut text = format!("{word} (method {})", v.method);
    if let VerdictKind::Unknown { report } = &v.kind {
        text.push_str(&format!("\n{report}"));
    }
    Report {
        text,
        json: json!({ "verdict": serde_json::to_value(v).unwrap_or(Value::Null) }),
        exit,
    }
}

fn facts_of(i: &viewdet::ast::Instance) -> Vec<String> {
    i.sorted_facts().iter().map(|a| a.to_string()).collect()
}

fn run(cmd: &Cmd) -> Result<Report, Failure> {
    match cmd {
        Cmd::Classify { file } => {
            let c = load(file)?;
            let cls = classify_rules(&c.sigma);
            let query_kind = match &c.query {
                Some(ProblemQuery::Ucq(u)) if u.disjuncts.len() == 1 => "cq",
                Some(ProblemQuery::Ucq(_)) => "ucq",
                Some(ProblemQuery::Datalog(_)) => "datalog",
                None => "none",
            };
            let text = format!(
                "rules: linear={} full={} frontier_guarded={} frontier_one={} uid={}\nquery: {query_kind}; views: {} ({})",
                cls.linear,
                cls.full,
                cls.frontier_guarded,
                cls.frontier_one,
                cls.uid,
                c.views.views.len(),
                if c.views.all_cq() { "all CQ" } else { "UCQ/Datalog" },
            );
            Ok(Report {
                text,
                json: json!({
                    "rules": serde_json::to_value(&cls).unwrap_or(Value::Null),
                    "query": query_kind,
                    "views": c.views.views.len(),
                }),
                exit: 0,
            })
        }
        Cmd::Chase { file, steps } => {
            let c = load(file)?;
            let res = chase(&c.instance, &c.sigma, ChaseConfig::with_steps(*steps))?;
            let status = match res.status {
                ChaseStatus::Saturated => "saturated",
                ChaseStatus::BudgetExhausted => "budget-exhausted",
            };
            let facts = facts_of(&res.instance);
            Ok(Report {
                text: format!("{status} after {} steps\n{}", res.step_log.len(), facts.join("\n")),
                json: json!({ "status": status, "steps": res.step_log.len(), "facts": facts }),
                exit: 0,
            })
        }
        Cmd::Eval { file } => {
            let c = load(file)?;
            let p = c.problem()?;
            let answers = p.answers(&c.instance)?;
            let rows: Vec<String> = answers
                .iter()
                .map(|t| {
                    let cells: Vec<String> = t.iter().map(|x| x.to_string()).collect();
                    format!("({})", cells.join(","))
                })
                .collect();
            Ok(Report {
                text: if rows.is_empty() {
                    "no answers".to_string()
                } else {
                    rows.join("\n")
                },
                json: json!({ "answers": rows }),
                exit: 0,
            })
        }
        Cmd::Rewrite {
            file,
            method,
            cap,
            steps,
        } => {
            let c = load(file)?;
            let q = match &c.query {
                Some(ProblemQuery::Ucq(u)) => u.clone(),
                _ => {
                    return Err(Failure::Core(Error::UnsupportedClass(
                        "rewrite needs a UCQ query".into(),
                    )))
                }
            };
            let rewritten = match method.as_str() {
                "backward" => backward_rewrite_ucq(&q, &c.sigma, *cap)?,
                "view-image" => {
                    match view_image_rewriting(&q, &c.views, &c.sigma, ChaseConfig::with_steps(*steps))? {
                        ViewImageRewriting::Rewriting { query, .. } => query,
                        ViewImageRewriting::Unknown => {
                            return Ok(Report {
                                text: "UNKNOWN: chase did not saturate within budget".into(),
                                json: json!({ "result": "unknown" }),
                                exit: 2,
                            })
                        }
                    }
                }
                other => {
                    return Err(Failure::Io(format!(
                        "unknown rewrite method `{other}` (use backward or view-image)"
                    )))
                }
            };
            let lines: Vec<String> = rewritten
                .disjuncts
                .iter()
                .map(|d| {
                    let body: Vec<String> = d.body.iter().map(|a| a.to_string()).collect();
                    format!("({}) :- {}", d.head.join(","), body.join(", "))
                })
                .collect();
            Ok(Report {
                text: lines.join("\n"),
                json: json!({ "disjuncts": lines }),
                exit: 0,
            })
        }
        Cmd::Decide { file } => {
            let c = load(file)?;
            let p = c.problem()?;
            let cls = classify_rules(&p.sigma);
            let verdict = if cls.linear && p.views.all_cq() {
                decide_linear_cq(&p)?
            } else if cls.full {
                decide_full(&p)?
            } else {
                return Err(Failure::Core(Error::UnsupportedClass(
                    "decide needs linear Σ with CQ views, or full Σ".into(),
                )));
            };
            Ok(verdict_report(&verdict))
        }
        Cmd::Search {
            file,
            unfold_depth,
            chase_steps,
            backv_limit,
        } => {
            let c = load(file)?;
            let p = c.problem()?;
            let budgets = SearchBudgets {
                unfold_depth: *unfold_depth,
                chase_cfg: ChaseConfig::with_steps(*chase_steps),
                back_v_limit: *backv_limit,
            };
            Ok(verdict_report(&search_counterexample(&p, &budgets)?))
        }
        Cmd::Brute { file, max_domain } => {
            let c = load(file)?;
            let p = c.problem()?;
            match brute_force_mondet(&p, *max_domain)? {
                BruteForceOutcome::NotDetermined(cx) => Ok(Report {
                    text: format!(
                        "NOT_DETERMINED: counterexample over {} / {} facts",
                        cx.i1.len(),
                        cx.i2.len()
                    ),
                    json: json!({
                        "result": "not_determined",
                        "i1": facts_of(&cx.i1),
                        "i2": facts_of(&cx.i2),
                    }),
                    exit: 1,
                }),
                BruteForceOutcome::NoSmallCounterexample => Ok(Report {
                    text: format!("no counterexample over domains of size <= {max_domain}"),
                    json: json!({ "result": "no_small_counterexample" }),
                    exit: 0,
                }),
            }
        }
        Cmd::Gen { kind } => {
            let (args, problem) = match kind {
                GenKind::Tm(a) => {
                    let MachineDecl::Tm(spec) = load_machine(&a.spec)? else {
                        return Err(Failure::Io("expected a `machine tm` block".into()));
                    };
                    (a, gen_tm(&spec)?)
                }
                GenKind::Ca(a) => {
                    let MachineDecl::Ca(spec) = load_machine(&a.spec)? else {
                        return Err(Failure::Io("expected a `machine ca` block".into()));
                    };
                    (a, gen_cellular(&spec)?)
                }
                GenKind::Tiling { args, mode } => {
                    let MachineDecl::Tiling(spec) = load_machine(&args.spec)? else {
                        return Err(Failure::Io("expected a `machine tiling` block".into()));
                    };
                    let mode = match mode.as_str() {
                        "cq" => TilingMode::Cq,
                        "ucq" => TilingMode::Ucq,
                        other => {
                            return Err(Failure::Io(format!(
                                "unknown tiling mode `{other}` (use cq or ucq)"
                            )))
                        }
                    };
                    (args, gen_tiling(&spec, mode)?)
                }
            };
            let text = printer::print(&problem_to_file(&problem));
            if let Some(out) = &args.out {
                std::fs::write(out, &text)
                    .map_err(|e| Failure::Io(format!("cannot write {}: {e}", out.display())))?;
                Ok(Report {
                    text: format!("wrote {}", out.display()),
                    json: json!({ "wrote": out.display().to_string() }),
                    exit: 0,
                })
            } else {
                Ok(Report {
                    json: json!({ "problem": text }),
                    text,
                    exit: 0,
                })
            }
        }
        Cmd::Sim { spec, bound } => {
            let machine = match load_machine(spec)? {
                MachineDecl::Ca(s) => MachineSpec::Ca(s),
                MachineDecl::Tm(s) => MachineSpec::Tm(s),
                MachineDecl::Tiling(s) => MachineSpec::Tiling(s),
            };
            let report = simulate(&machine, *bound)?;
            let v = serde_json::to_value(&report).unwrap_or(Value::Null);
            Ok(Report {
                text: format!("{report:?}"),
                json: json!({ "bound": bound, "report": v }),
                exit: 0,
            })
        }
        Cmd::Treecode { op } => run_treecode(op),
    }
}

fn run_treecode(op: &TreecodeOp) -> Result<Report, Failure> {
    match op {
        TreecodeOp::Encode { file, width, arity } => {
            let c = load(file)?;
            let td = TreeDecomposition::trivial(&c.instance);
            let k = width.unwrap_or_else(|| c.instance.adom().len().max(1));
            let r = arity.unwrap_or_else(|| {
                c.schema
                    .preds()
                    .map(|(_, a, _)| a)
                    .max()
                    .unwrap_or(2)
                    .max(2)
            });
            let code = encode(&c.instance, &td, k, r)?;
            let js = serde_json::to_value(&code).unwrap_or(Value::Null);
            Ok(Report {
                text: serde_json::to_string_pretty(&js).unwrap_or_default(),
                json: js,
                exit: 0,
            })
        }
        TreecodeOp::Decode { code, schema } => {
            let c = load(schema)?;
            let src = std::fs::read_to_string(code)
                .map_err(|e| Failure::Io(format!("cannot read {}: {e}", code.display())))?;
            let t: TreeCode = serde_json::from_str(&src)
                .map_err(|e| Failure::Io(format!("invalid tree-code JSON: {e}")))?;
            let decoded = decode(&t, &c.schema)?;
            let facts = facts_of(&decoded);
            Ok(Report {
                text: facts.join("\n"),
                json: json!({ "facts": facts }),
                exit: 0,
            })
        }
        TreecodeOp::Backmap { file } => {
            let c = load(file)?;
            let prog = c.program()?;
            let automaton = approx_automaton(prog)?;
            let mapped = backward_map(&automaton)?;
            let rules: Vec<String> = mapped
                .rules
                .iter()
                .map(|r| {
                    let body: Vec<String> = r.body.iter().map(|a| a.to_string()).collect();
                    if body.is_empty() {
                        format!("{}.", r.head)
                    } else {
                        format!("{} :- {}.", r.head, body.join(", "))
                    }
                })
                .collect();
            Ok(Report {
                text: rules.join("\n"),
                json: json!({ "rules": rules, "goal": mapped.goal }),
                exit: 0,
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // Help/version requests are successes; everything else is usage.
            let benign = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return ExitCode::from(if benign { 0 } else { 3 });
        }
    };
    match run(&cli.cmd) {
        Ok(report) => {
            if cli.json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&report.json).unwrap_or_default()
                );
            } else {
                println!("{}", report.text);
            }
            ExitCode::from(report.exit)
        }
        Err(f) => {
            eprintln!("{}", f.message());
            ExitCode::from(f.exit())
        }
    }
}
