//! Surface syntax of `.mdp` problem files and machine spec blocks, plus
//! compilation into the core types.

use std::sync::Arc;
use viewdet::ast::{Atom, Instance, PredTag, Schema, Term};
use viewdet::corpus::{CASpec, TMSpec, TilingSpec};
use viewdet::datalog::{DatalogProgram, DatalogRule};
use viewdet::error::{Error, Result};
use viewdet::mondet::{MonDetProblem, ProblemQuery};
use viewdet::query::{ConjunctiveQuery, UnionQuery};
use viewdet::tgd::Tgd;
use viewdet::views::{View, ViewDef, ViewSet};

/// Source position (1-based) for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

#[derive(Debug, Clone)]
pub struct RawAtom {
    pub pred: String,
    pub args: Vec<Term>,
    pub pos: Pos,
}

impl RawAtom {
    pub fn atom(&self) -> Atom {
        Atom::new(self.pred.clone(), self.args.clone())
    }
}

#[derive(Debug, Clone)]
pub struct PredDecl {
    pub name: String,
    pub arity: usize,
    pub pos: Pos,
}

#[derive(Debug, Clone)]
pub struct TgdDecl {
    pub body: Vec<RawAtom>,
    pub head: Vec<RawAtom>,
    pub pos: Pos,
}

#[derive(Debug, Clone)]
pub struct ProgramDecl {
    pub name: String,
    pub rules: Vec<(RawAtom, Vec<RawAtom>)>,
    pub goal: String,
    pub pos: Pos,
}

#[derive(Debug, Clone)]
pub enum ViewBody {
    Ucq(Vec<Vec<RawAtom>>),
    Datalog(ProgramDecl),
}

#[derive(Debug, Clone)]
pub struct ViewDecl {
    pub name: String,
    pub head: Vec<String>,
    pub body: ViewBody,
    pub pos: Pos,
}

#[derive(Debug, Clone)]
pub struct QueryDecl {
    pub name: String,
    pub head: Vec<String>,
    pub disjuncts: Vec<Vec<RawAtom>>,
    pub pos: Pos,
}

#[derive(Debug, Clone)]
pub enum MachineDecl {
    Ca(CASpec),
    Tm(TMSpec),
    Tiling(TilingSpec),
}

#[derive(Debug, Clone, Default)]
pub struct ProblemFile {
    pub preds: Vec<PredDecl>,
    pub tgds: Vec<TgdDecl>,
    pub views: Vec<ViewDecl>,
    pub queries: Vec<QueryDecl>,
    pub programs: Vec<ProgramDecl>,
    pub facts: Vec<RawAtom>,
    pub machines: Vec<MachineDecl>,
}

/// Everything a command might need, built once from the parsed file.
pub struct Compiled {
    pub schema: Arc<Schema>,
    pub instance: Instance,
    pub sigma: Vec<Tgd>,
    pub views: ViewSet,
    pub query: Option<ProblemQuery>,
}

impl Compiled {
    pub fn problem(&self) -> Result<MonDetProblem> {
        let q = self
            .query
            .clone()
            .ok_or_else(|| Error::Other("the file declares no query or program".into()))?;
        Ok(MonDetProblem {
            q,
            views: self.views.clone(),
            sigma: self.sigma.clone(),
        })
    }

    /// The query's Datalog program, when it has one.
    pub fn program(&self) -> Result<&DatalogProgram> {
        match &self.query {
            Some(ProblemQuery::Datalog(p)) => Ok(p),
            _ => Err(Error::Other("the file declares no Datalog program".into())),
        }
    }
}

fn at(e: Error, pos: Pos) -> Error {
    Error::Other(format!("{e} (at {}:{})", pos.line, pos.col))
}

fn program_rules(schema: &Arc<Schema>, decl: &ProgramDecl) -> Result<DatalogProgram> {
    let rules: Vec<DatalogRule> = decl
        .rules
        .iter()
        .map(|(h, b)| DatalogRule {
            head: h.atom(),
            body: b.iter().map(RawAtom::atom).collect(),
        })
        .collect();
    DatalogProgram::new(schema.clone(), rules, decl.goal.clone()).map_err(|e| at(e, decl.pos))
}

impl ProblemFile {
    /// Combined schema: `pred` declarations are base relations, view names
    /// are view relations (arity from the head), and every program rule head
    /// is an IDB relation.
    pub fn schema(&self) -> Result<Arc<Schema>> {
        let mut s = Schema::new();
        let declare = |s: &mut Schema, name: &str, arity: usize, tag: PredTag, pos: Pos| -> Result<()> {
            if let Some(prev) = s.arity(name) {
                if prev != arity {
                    return Err(Error::Other(format!(
                        "{} (at {}:{})",
                        Error::ArityMismatch {
                            pred: name.to_string(),
                            got: arity,
                            declared: prev,
                        },
                        pos.line, pos.col
                    )));
                }
                return Ok(());
            }
            s.declare(name, arity, tag);
            Ok(())
        };
        for p in &self.preds {
            declare(&mut s, &p.name, p.arity, PredTag::Base, p.pos)?;
        }
        for v in &self.views {
            declare(&mut s, &v.name, v.head.len(), PredTag::View, v.pos)?;
        }
        let idb = |s: &mut Schema, decl: &ProgramDecl| -> Result<()> {
            for (h, _) in &decl.rules {
                declare(s, &h.pred, h.args.len(), PredTag::Idb, h.pos)?;
            }
            Ok(())
        };
        for p in &self.programs {
            idb(&mut s, p)?;
        }
        for v in &self.views {
            if let ViewBody::Datalog(p) = &v.body {
                idb(&mut s, p)?;
            }
        }
        Ok(Arc::new(s))
    }

    pub fn compile(&self) -> Result<Compiled> {
        let schema = self.schema()?;
        let mut instance = Instance::new(schema.clone());
        for f in &self.facts {
            let a = f.atom();
            if !a.is_ground() {
                return Err(Error::Other(format!(
                    "fact {} at {}:{} contains variables",
                    f.pred, f.pos.line, f.pos.col
                )));
            }
            instance.insert(a)?;
        }
        let sigma: Result<Vec<Tgd>> = self
            .tgds
            .iter()
            .map(|t| {
                Tgd::new(
                    schema.clone(),
                    t.body.iter().map(RawAtom::atom).collect(),
                    t.head.iter().map(RawAtom::atom).collect(),
                )
                .map_err(|e| at(e, t.pos))
            })
            .collect();
        let mut views = Vec::new();
        for v in &self.views {
            let def = match &v.body {
                ViewBody::Ucq(disjuncts) => {
                    let cqs: Result<Vec<ConjunctiveQuery>> = disjuncts
                        .iter()
                        .map(|d| {
                            ConjunctiveQuery::new(
                                schema.clone(),
                                v.head.clone(),
                                d.iter().map(RawAtom::atom).collect(),
                            )
                        })
                        .collect();
                    ViewDef::Ucq(UnionQuery::new(cqs?)?)
                }
                ViewBody::Datalog(p) => ViewDef::Datalog(program_rules(&schema, p)?),
            };
            views.push(View {
                name: v.name.clone(),
                def,
            });
        }
        let views = ViewSet::new(schema.clone(), views)?;
        let query = if let Some(q) = self.queries.first() {
            let cqs: Result<Vec<ConjunctiveQuery>> = q
                .disjuncts
                .iter()
                .map(|d| {
                    ConjunctiveQuery::new(
                        schema.clone(),
                        q.head.clone(),
                        d.iter().map(RawAtom::atom).collect(),
                    )
                    .map_err(|e| at(e, q.pos))
                })
                .collect();
            Some(ProblemQuery::Ucq(UnionQuery::new(cqs?)?))
        } else if let Some(p) = self.programs.first() {
            Some(ProblemQuery::Datalog(program_rules(&schema, p)?))
        } else {
            None
        };
        Ok(Compiled {
            schema,
            instance,
            sigma: sigma?,
            views,
            query,
        })
    }
}

/// Converts a generated problem back into surface syntax for printing.
pub fn problem_to_file(p: &MonDetProblem) -> ProblemFile {
    let pos = Pos { line: 0, col: 0 };
    let raw = |a: &Atom| RawAtom {
        pred: a.pred.clone(),
        args: a.args.clone(),
        pos,
    };
    let mut file = ProblemFile::default();
    let schema = p.views.schema.clone();
    for (name, arity, tag) in schema.preds() {
        if tag == PredTag::Base {
            file.preds.push(PredDecl {
                name: name.to_string(),
                arity,
                pos,
            });
        }
    }
    for t in &p.sigma {
        file.tgds.push(TgdDecl {
            body: t.body.iter().map(raw).collect(),
            head: t.head.iter().map(raw).collect(),
            pos,
        });
    }
    let program_decl = |name: &str, prog: &DatalogProgram| ProgramDecl {
        name: name.to_string(),
        rules: prog
            .rules
            .iter()
            .map(|r| (raw(&r.head), r.body.iter().map(raw).collect()))
            .collect(),
        goal: prog.goal.clone(),
        pos,
    };
    for v in &p.views.views {
        let body = match &v.def {
            ViewDef::Ucq(u) => ViewBody::Ucq(
                u.disjuncts
                    .iter()
                    .map(|d| d.body.iter().map(raw).collect())
                    .collect(),
            ),
            ViewDef::Datalog(prog) => ViewBody::Datalog(program_decl(&v.name, prog)),
        };
        let head = match &v.def {
            ViewDef::Ucq(u) => u.disjuncts[0].head.clone(),
            ViewDef::Datalog(prog) => (0..prog.goal_arity()).map(|i| format!("X{i}")).collect(),
        };
        file.views.push(ViewDecl {
            name: v.name.clone(),
            head,
            body,
            pos,
        });
    }
    match &p.q {
        ProblemQuery::Ucq(u) => file.queries.push(QueryDecl {
            name: "Q".to_string(),
            head: u.disjuncts[0].head.clone(),
            disjuncts: u
                .disjuncts
                .iter()
                .map(|d| d.body.iter().map(raw).collect())
                .collect(),
            pos,
        }),
        ProblemQuery::Datalog(prog) => file.programs.push(program_decl("Q", prog)),
    }
    file
}
