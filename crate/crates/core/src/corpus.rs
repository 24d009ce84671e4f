//! Machine-to-problem compilers: cellular automata, quarter-plane tilings,
//! and Turing machines become monotonic-determinacy instances, with direct
//! simulators supplying independent ground truth at small scale.
//!
//! The generators only ever claim what the constructions guarantee; verdict
//! claims beyond simulator-certified bounds are out of scope by design (the
//! underlying machine problems are undecidable).

use crate::ast::{Atom, PredTag, Schema, Term};
use crate::datalog::{DatalogProgram, DatalogRule};
use crate::error::{Error, Result};
use crate::mondet::MonDetProblem;
use crate::query::{ConjunctiveQuery, UnionQuery};
use crate::tgd::Tgd;
use crate::views::{View, ViewDef, ViewSet};
use indexmap::{IndexMap, IndexSet};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

fn var(n: impl Into<String>) -> Term {
    Term::var(n)
}

// ---------------------------------------------------------------------------
// Cellular automata
// ---------------------------------------------------------------------------

/// A deterministic one-dimensional cellular automaton with states T_0..T_{n-1}
/// (T_0 blank), transitions over pairs (left tape edge) and triples, and a
/// target state whose reachability is the encoded question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CASpec {
    pub states: usize,
    /// Edge transitions T_j T_k -> T_l as ((j, k), l).
    pub rules2: Vec<((usize, usize), usize)>,
    /// Interior transitions T_i T_j T_k -> T_l as ((i, j, k), l).
    pub rules3: Vec<((usize, usize, usize), usize)>,
    pub target: usize,
}

impl CASpec {
    pub fn validate(&self) -> Result<()> {
        if self.states == 0 || self.target >= self.states {
            return Err(Error::Other(format!(
                "target state {} outside 0..{}",
                self.target, self.states
            )));
        }
        let mut seen2 = IndexMap::new();
        for ((j, k), l) in &self.rules2 {
            if [j, k, l].iter().any(|&&s| s >= self.states) {
                return Err(Error::Other("transition uses an undeclared state".into()));
            }
            if let Some(prev) = seen2.insert((*j, *k), *l) {
                if prev != *l {
                    return Err(Error::NondeterministicSpec(format!(
                        "T{j} T{k} maps to both T{prev} and T{l}"
                    )));
                }
            }
        }
        let mut seen3 = IndexMap::new();
        for ((i, j, k), l) in &self.rules3 {
            if [i, j, k, l].iter().any(|&&s| s >= self.states) {
                return Err(Error::Other("transition uses an undeclared state".into()));
            }
            if let Some(prev) = seen3.insert((*i, *j, *k), *l) {
                if prev != *l {
                    return Err(Error::NondeterministicSpec(format!(
                        "T{i} T{j} T{k} maps to both T{prev} and T{l}"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn ca_schema(spec: &CASpec) -> Arc<Schema> {
    let mut s = Schema::new();
    for p in ["Xzero", "Yzero", "A"] {
        s.declare(p, 1, PredTag::Base);
    }
    for p in ["XSucc", "YSucc", "XProj", "YProj"] {
        s.declare(p, 2, PredTag::Base);
    }
    s.declare("G", 3, PredTag::Base);
    s.declare("Gp", 3, PredTag::Base);
    for i in 0..spec.states {
        s.declare(format!("T{i}"), 1, PredTag::Base);
    }
    s.declare("S", 2, PredTag::View);
    s.declare("V_Xzero", 1, PredTag::View);
    s.declare("V_Yzero", 1, PredTag::View);
    s.declare("V_XSucc", 2, PredTag::View);
    s.declare("V_YSucc", 2, PredTag::View);
    Arc::new(s)
}

/// RightOf(a, b) as body atoms: same row, b one column further. Fresh variable
/// names are prefixed so several copies coexist in one rule body.
fn right_of(a: &str, b: &str, fresh: &str) -> Vec<Atom> {
    vec![
        Atom::new("YProj", vec![var(format!("{fresh}W")), var(a)]),
        Atom::new("YProj", vec![var(format!("{fresh}W")), var(b)]),
        Atom::new("XProj", vec![var(format!("{fresh}U1")), var(a)]),
        Atom::new("XProj", vec![var(format!("{fresh}U2")), var(b)]),
        Atom::new("XSucc", vec![var(format!("{fresh}U1")), var(format!("{fresh}U2"))]),
    ]
}

/// DownTo(a, b): same column, a one row above b (the chase walks generations
/// up the YSucc chain).
fn down_to(a: &str, b: &str, fresh: &str) -> Vec<Atom> {
    vec![
        Atom::new("XProj", vec![var(format!("{fresh}C")), var(a)]),
        Atom::new("XProj", vec![var(format!("{fresh}C")), var(b)]),
        Atom::new("YProj", vec![var(format!("{fresh}R1")), var(b)]),
        Atom::new("YProj", vec![var(format!("{fresh}R2")), var(a)]),
        Atom::new("YSucc", vec![var(format!("{fresh}R1")), var(format!("{fresh}R2"))]),
    ]
}

fn ca_query_body() -> Vec<Atom> {
    vec![
        Atom::new("G", vec![var("Z0"), var("X0"), var("X1")]),
        Atom::new("Xzero", vec![var("X0")]),
        Atom::new("Gp", vec![var("Z0"), var("Y0"), var("Y1")]),
        Atom::new("Yzero", vec![var("Y0")]),
    ]
}

/// Compiles a cellular automaton into a determinacy instance: linear rules
/// build the grid axes, full frontier-one rules run the automaton upward row
/// by row, and a linear acceptance rule re-creates the query pattern from any
/// target-state cell. Target reachable iff the query is monotonically
/// determined.
///
/// The blank seeding labels the whole bottom row (`BottomEdge(x) -> A(x)`):
/// seeding only the origin cell would leave the rest of row zero unlabeled
/// and no transition could ever fire.
pub fn gen_cellular(spec: &CASpec) -> Result<MonDetProblem> {
    spec.validate()?;
    let schema = ca_schema(spec);
    let mut sigma = Vec::new();
    let mut tgd = |body: Vec<Atom>, head: Vec<Atom>| -> Result<()> {
        sigma.push(Tgd::new(schema.clone(), body, head)?);
        Ok(())
    };

    // (I) linear grid builders.
    tgd(
        vec![Atom::new("G", vec![var("Z0"), var("X"), var("Xp")])],
        vec![Atom::new("G", vec![var("Z0"), var("Xp"), var("Xpp")])],
    )?;
    tgd(
        vec![Atom::new("G", vec![var("Z0"), var("X"), var("Xp")])],
        vec![
            Atom::new("XProj", vec![var("X"), var("Z0")]),
            Atom::new("XSucc", vec![var("X"), var("Xp")]),
        ],
    )?;
    tgd(
        vec![Atom::new("Gp", vec![var("Z0"), var("Y"), var("Yp")])],
        vec![Atom::new("Gp", vec![var("Z0"), var("Yp"), var("Ypp")])],
    )?;
    tgd(
        vec![Atom::new("Gp", vec![var("Z0"), var("Y"), var("Yp")])],
        vec![
            Atom::new("YProj", vec![var("Y"), var("Z0")]),
            Atom::new("YSucc", vec![var("Y"), var("Yp")]),
        ],
    )?;

    // (II) full frontier-one transition rules.
    tgd(
        vec![
            Atom::new("YProj", vec![var("Y"), var("X")]),
            Atom::new("Yzero", vec![var("Y")]),
        ],
        vec![Atom::new("A", vec![var("X")])],
    )?;
    tgd(
        vec![Atom::new("A", vec![var("X")])],
        vec![Atom::new("T0", vec![var("X")])],
    )?;
    for ((j, k), l) in &spec.rules2 {
        let mut body = vec![
            Atom::new("XProj", vec![var("U0"), var("Y")]),
            Atom::new("Xzero", vec![var("U0")]),
            Atom::new(format!("T{j}"), vec![var("Y")]),
        ];
        body.extend(right_of("Y", "Z", "R"));
        body.push(Atom::new(format!("T{k}"), vec![var("Z")]));
        body.extend(down_to("Yp", "Y", "D"));
        tgd(body, vec![Atom::new(format!("T{l}"), vec![var("Yp")])])?;
    }
    for ((i, j, k), l) in &spec.rules3 {
        let mut body = vec![Atom::new(format!("T{i}"), vec![var("X")])];
        body.extend(right_of("X", "Y", "R1"));
        body.push(Atom::new(format!("T{j}"), vec![var("Y")]));
        body.extend(right_of("Y", "Z", "R2"));
        body.push(Atom::new(format!("T{k}"), vec![var("Z")]));
        body.extend(down_to("Yp", "Y", "D"));
        tgd(body, vec![Atom::new(format!("T{l}"), vec![var("Yp")])])?;
    }

    // (III) linear acceptance: a target cell re-creates the query pattern.
    tgd(
        vec![Atom::new(format!("T{}", spec.target), vec![var("V")])],
        ca_query_body(),
    )?;

    for r in &sigma {
        if !(r.is_linear() || (r.is_full() && r.is_frontier_one())) {
            return Err(Error::Other(format!(
                "generated rule outside linear + full frontier-one: {r}"
            )));
        }
    }

    let q = UnionQuery::new(vec![ConjunctiveQuery::new(
        schema.clone(),
        vec![],
        ca_query_body(),
    )?])?;
    let cqv = |name: &str, head: Vec<&str>, body: Vec<Atom>| -> Result<View> {
        let q = ConjunctiveQuery::new(
            schema.clone(),
            head.into_iter().map(String::from).collect(),
            body,
        )?;
        Ok(View {
            name: name.to_string(),
            def: ViewDef::Ucq(UnionQuery::new(vec![q])?),
        })
    };
    let views = ViewSet::new(
        schema.clone(),
        vec![
            cqv(
                "S",
                vec!["X", "Y"],
                vec![
                    Atom::new("XProj", vec![var("X"), var("Z")]),
                    Atom::new("YProj", vec![var("Y"), var("Z")]),
                ],
            )?,
            cqv("V_Xzero", vec!["X"], vec![Atom::new("Xzero", vec![var("X")])])?,
            cqv("V_Yzero", vec!["Y"], vec![Atom::new("Yzero", vec![var("Y")])])?,
            cqv(
                "V_XSucc",
                vec!["X", "Y"],
                vec![Atom::new("XSucc", vec![var("X"), var("Y")])],
            )?,
            cqv(
                "V_YSucc",
                vec!["X", "Y"],
                vec![Atom::new("YSucc", vec![var("X"), var("Y")])],
            )?,
        ],
    )?;
    Ok(MonDetProblem::ucq(q, views, sigma))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CaReport {
    /// States seen in any simulated generation (generation 0 is all-blank).
    pub reachable: IndexSet<usize>,
    /// First generation containing the target, if within bound.
    pub target_generation: Option<usize>,
    pub generations: usize,
    /// A needed transition was undefined; evolution stopped early.
    pub stuck_at: Option<usize>,
}

/// Direct evolution from the all-blank tape. A window wide enough for the
/// requested horizon stands in for the infinite tape; it shrinks by one cell
/// per generation since the rightmost cell's right neighbour is unknown.
pub fn simulate_ca(spec: &CASpec, generations: usize) -> Result<CaReport> {
    spec.validate()?;
    let d2: IndexMap<(usize, usize), usize> = spec.rules2.iter().cloned().collect();
    let d3: IndexMap<(usize, usize, usize), usize> = spec.rules3.iter().cloned().collect();
    let mut tape = vec![0usize; generations + 2];
    let mut reachable: IndexSet<usize> = [0].into_iter().collect();
    let mut report = CaReport {
        reachable: IndexSet::new(),
        target_generation: if spec.target == 0 { Some(0) } else { None },
        generations,
        stuck_at: None,
    };
    'outer: for g in 1..=generations {
        if tape.len() < 2 {
            break;
        }
        let mut next = Vec::with_capacity(tape.len() - 1);
        match d2.get(&(tape[0], tape[1])) {
            Some(&l) => next.push(l),
            None => {
                report.stuck_at = Some(g);
                break 'outer;
            }
        }
        for i in 1..tape.len() - 1 {
            match d3.get(&(tape[i - 1], tape[i], tape[i + 1])) {
                Some(&l) => next.push(l),
                None => {
                    report.stuck_at = Some(g);
                    break 'outer;
                }
            }
        }
        for &s in &next {
            reachable.insert(s);
            if s == spec.target && report.target_generation.is_none() {
                report.target_generation = Some(g);
            }
        }
        tape = next;
    }
    report.reachable = reachable;
    Ok(report)
}

// ---------------------------------------------------------------------------
// Tilings
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    Horizontal,
    Vertical,
}

/// A quarter-plane tiling problem: tiles 0..tiles-1, forbidden adjacent
/// pairs, and (for the UCQ variant only) a required tile at the origin.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilingSpec {
    pub tiles: usize,
    pub forbidden: Vec<(usize, usize, Orientation)>,
    pub initial: Option<usize>,
}

impl TilingSpec {
    pub fn validate(&self) -> Result<()> {
        if self.tiles == 0 {
            return Err(Error::EmptyTileset);
        }
        for (i, j, _) in &self.forbidden {
            if *i >= self.tiles || *j >= self.tiles {
                return Err(Error::Other("forbidden pair uses an undeclared tile".into()));
            }
        }
        if let Some(t) = self.initial {
            if t >= self.tiles {
                return Err(Error::Other("initial tile is undeclared".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TilingMode {
    Cq,
    Ucq,
}

/// Net-clique body over the given variables: both directions of every pair,
/// no self loops.
fn net_clique(vars: &[String]) -> Vec<Atom> {
    let mut atoms = Vec::new();
    for a in vars {
        for b in vars {
            if a != b {
                atoms.push(Atom::new("Net", vec![var(a.clone()), var(b.clone())]));
            }
        }
    }
    atoms
}

/// All single-variable atoms except the Net self loop.
fn slot(x: &str, tiles: usize) -> Vec<Atom> {
    let mut atoms = vec![Atom::new("GridSource", vec![var(x)])];
    for i in 0..tiles {
        atoms.push(Atom::new(format!("T{i}"), vec![var(x)]));
    }
    atoms.push(Atom::new("AxisX", vec![var(x), var(x)]));
    atoms.push(Atom::new("AxisY", vec![var(x), var(x)]));
    atoms.push(Atom::new("GridX", vec![var(x), var(x), var(x)]));
    atoms.push(Atom::new("GridY", vec![var(x), var(x), var(x)]));
    atoms
}

fn q_bad(idx: usize, p: &(usize, usize, Orientation)) -> Vec<Atom> {
    let (i, j, o) = p;
    let vp = format!("VP{idx}");
    let vq = format!("VQ{idx}");
    let w = |n: &str| format!("{n}{idx}");
    let mut atoms = vec![
        Atom::new(format!("T{i}"), vec![var(vp.clone())]),
        Atom::new(format!("T{j}"), vec![var(vq.clone())]),
    ];
    match o {
        Orientation::Vertical => {
            // Same column, rows one apart.
            atoms.push(Atom::new("GridX", vec![var(vp.clone()), var(w("XA")), var(w("XB"))]));
            atoms.push(Atom::new("GridX", vec![var(vq.clone()), var(w("XA")), var(w("XB"))]));
            atoms.push(Atom::new("GridY", vec![var(vp), var(w("YA")), var(w("YB"))]));
            atoms.push(Atom::new("GridY", vec![var(vq), var(w("YB")), var(w("YC"))]));
        }
        Orientation::Horizontal => {
            atoms.push(Atom::new("GridX", vec![var(vp.clone()), var(w("XA")), var(w("XB"))]));
            atoms.push(Atom::new("GridX", vec![var(vq.clone()), var(w("XB")), var(w("XC"))]));
            atoms.push(Atom::new("GridY", vec![var(vp), var(w("YA")), var(w("YB"))]));
            atoms.push(Atom::new("GridY", vec![var(vq), var(w("YA")), var(w("YB"))]));
        }
    }
    atoms
}

fn tiling_cq_schema(spec: &TilingSpec) -> Arc<Schema> {
    let mut s = Schema::new();
    s.declare("GridSource", 1, PredTag::Base);
    for i in 0..spec.tiles {
        s.declare(format!("T{i}"), 1, PredTag::Base);
    }
    s.declare("Net", 2, PredTag::Base);
    s.declare("AxisX", 2, PredTag::Base);
    s.declare("AxisY", 2, PredTag::Base);
    s.declare("GridX", 3, PredTag::Base);
    s.declare("GridY", 3, PredTag::Base);
    s.declare("V", 4 + spec.forbidden.len(), PredTag::View);
    Arc::new(s)
}

/// The Q_free body: start pattern, Net clique, and one bad-pair pattern per
/// forbidden pair. Variables V0, X0, X1, Y0, Y1, VP0.. mirror the element
/// names v*_0, x*_n, y*_m of the construction.
fn q_free_body(spec: &TilingSpec) -> Vec<Atom> {
    let mut body = vec![
        Atom::new("AxisX", vec![var("X0"), var("X1")]),
        Atom::new("AxisY", vec![var("Y0"), var("Y1")]),
        Atom::new("GridSource", vec![var("V0")]),
    ];
    let mut net_vars = vec!["V0".to_string()];
    for idx in 0..spec.forbidden.len() {
        net_vars.push(format!("VP{idx}"));
    }
    body.extend(net_clique(&net_vars));
    for (idx, p) in spec.forbidden.iter().enumerate() {
        body.extend(q_bad(idx, p));
    }
    body
}

fn gen_tiling_cq(spec: &TilingSpec) -> Result<MonDetProblem> {
    let schema = tiling_cq_schema(spec);
    let sigma = vec![
        Tgd::new(
            schema.clone(),
            vec![Atom::new("AxisX", vec![var("X"), var("Xp")])],
            vec![Atom::new("AxisX", vec![var("Xp"), var("Xpp")])],
        )?,
        Tgd::new(
            schema.clone(),
            vec![Atom::new("AxisY", vec![var("Y"), var("Yp")])],
            vec![Atom::new("AxisY", vec![var("Yp"), var("Ypp")])],
        )?,
    ];
    if sigma.iter().any(|r| !r.is_uid()) {
        return Err(Error::Other("axis rules are expected to be UIDs".into()));
    }

    let q = UnionQuery::new(vec![ConjunctiveQuery::new(
        schema.clone(),
        vec![],
        q_free_body(spec),
    )?])?;

    let mut head: Vec<String> = ["X0", "X1", "Y0", "Y1"].map(String::from).to_vec();
    for idx in 0..spec.forbidden.len() {
        head.push(format!("VP{idx}"));
    }
    // Disjunct 1: Q_free itself (v0 stays existential).
    let mut disjuncts = vec![ConjunctiveQuery::new(
        schema.clone(),
        head.clone(),
        q_free_body(spec),
    )?];
    // Unfaithful disjuncts: one per tile choice for the fresh grid point v0.
    for t in 0..spec.tiles {
        let mut body = vec![
            Atom::new(format!("T{t}"), vec![var("V0")]),
            Atom::new("GridX", vec![var("V0"), var("X0"), var("X1")]),
            Atom::new("GridY", vec![var("V0"), var("Y0"), var("Y1")]),
        ];
        let mut net_vars = vec!["V0".to_string()];
        for idx in 0..spec.forbidden.len() {
            net_vars.push(format!("VP{idx}"));
        }
        body.extend(net_clique(&net_vars));
        for idx in 0..spec.forbidden.len() {
            body.extend(slot(&format!("VP{idx}"), spec.tiles));
        }
        disjuncts.push(ConjunctiveQuery::new(schema.clone(), head.clone(), body)?);
    }
    let views = ViewSet::new(
        schema.clone(),
        vec![View {
            name: "V".to_string(),
            def: ViewDef::Ucq(UnionQuery::new(disjuncts)?),
        }],
    )?;
    Ok(MonDetProblem::ucq(q, views, sigma))
}

fn tiling_ucq_schema(spec: &TilingSpec) -> Arc<Schema> {
    let mut s = Schema::new();
    for p in ["Init", "A1", "A2", "Origin"] {
        s.declare(p, 1, PredTag::Base);
    }
    for p in ["XSucc", "YSucc", "XProj", "YProj"] {
        s.declare(p, 2, PredTag::Base);
    }
    for i in 0..spec.tiles {
        s.declare(format!("T{i}"), 1, PredTag::Base);
    }
    s.declare("S", 2, PredTag::View);
    s.declare("V_XSucc", 2, PredTag::View);
    s.declare("V_YSucc", 2, PredTag::View);
    s.declare("V_Origin", 1, PredTag::View);
    for i in 0..spec.tiles {
        s.declare(format!("V_T{i}"), 1, PredTag::View);
    }
    s.declare("V_HA", 5, PredTag::View);
    s.declare("V_VA", 5, PredTag::View);
    Arc::new(s)
}

fn gen_tiling_ucq(spec: &TilingSpec) -> Result<MonDetProblem> {
    let Some(initial) = spec.initial else {
        return Err(Error::Other("UCQ tiling mode needs an initial tile".into()));
    };
    let schema = tiling_ucq_schema(spec);
    let mut sigma = Vec::new();
    let mut uid = |body: Atom, head: Atom| -> Result<()> {
        let r = Tgd::new(schema.clone(), vec![body], vec![head])?;
        if !r.is_uid() {
            return Err(Error::Other(format!("generated rule is not a UID: {r}")));
        }
        sigma.push(r);
        Ok(())
    };
    uid(Atom::new("Init", vec![var("X")]), Atom::new("A1", vec![var("X")]))?;
    uid(Atom::new("Init", vec![var("X")]), Atom::new("A2", vec![var("X")]))?;
    uid(
        Atom::new("A1", vec![var("X")]),
        Atom::new("XSucc", vec![var("X"), var("Y")]),
    )?;
    uid(
        Atom::new("XSucc", vec![var("X"), var("Y")]),
        Atom::new("A1", vec![var("Y")]),
    )?;
    uid(
        Atom::new("A2", vec![var("X")]),
        Atom::new("YSucc", vec![var("X"), var("Y")]),
    )?;
    uid(
        Atom::new("YSucc", vec![var("X"), var("Y")]),
        Atom::new("A2", vec![var("Y")]),
    )?;
    uid(Atom::new("A1", vec![var("X")]), Atom::new("Origin", vec![var("Y")]))?;
    uid(Atom::new("A2", vec![var("X")]), Atom::new("Origin", vec![var("Y")]))?;
    uid(
        Atom::new("Origin", vec![var("X")]),
        Atom::new("Init", vec![var("X")]),
    )?;

    // Q = start disjunct or one of the violation disjuncts.
    let mut disjuncts = vec![ConjunctiveQuery::new(
        schema.clone(),
        vec![],
        vec![
            Atom::new("Init", vec![var("X")]),
            Atom::new("Origin", vec![var("X")]),
        ],
    )?];
    for (i, j, o) in &spec.forbidden {
        let body = match o {
            Orientation::Horizontal => vec![
                Atom::new("XProj", vec![var("X"), var("Z")]),
                Atom::new("YProj", vec![var("Y"), var("Z")]),
                Atom::new("XProj", vec![var("Xp"), var("Zp")]),
                Atom::new("YProj", vec![var("Y"), var("Zp")]),
                Atom::new("XSucc", vec![var("X"), var("Xp")]),
                Atom::new(format!("T{i}"), vec![var("Z")]),
                Atom::new(format!("T{j}"), vec![var("Zp")]),
            ],
            Orientation::Vertical => vec![
                Atom::new("XProj", vec![var("X"), var("Z")]),
                Atom::new("YProj", vec![var("Y"), var("Z")]),
                Atom::new("XProj", vec![var("X"), var("Zp")]),
                Atom::new("YProj", vec![var("Yp"), var("Zp")]),
                Atom::new("YSucc", vec![var("Y"), var("Yp")]),
                Atom::new(format!("T{i}"), vec![var("Z")]),
                Atom::new(format!("T{j}"), vec![var("Zp")]),
            ],
        };
        disjuncts.push(ConjunctiveQuery::new(schema.clone(), vec![], body)?);
    }
    for t in 0..spec.tiles {
        if t != initial {
            disjuncts.push(ConjunctiveQuery::new(
                schema.clone(),
                vec![],
                vec![
                    Atom::new("Origin", vec![var("X")]),
                    Atom::new(format!("T{t}"), vec![var("X")]),
                ],
            )?);
        }
    }
    let q = UnionQuery::new(disjuncts)?;

    let cq = |head: Vec<&str>, body: Vec<Atom>| -> Result<ConjunctiveQuery> {
        ConjunctiveQuery::new(
            schema.clone(),
            head.into_iter().map(String::from).collect(),
            body,
        )
    };
    let mut views = Vec::new();
    // Grid-generating view: the faithful disjunct plus one per tile.
    let mut s_disjuncts = vec![cq(
        vec!["X", "Y"],
        vec![
            Atom::new("A1", vec![var("X")]),
            Atom::new("A2", vec![var("Y")]),
        ],
    )?];
    for t in 0..spec.tiles {
        s_disjuncts.push(cq(
            vec!["X", "Y"],
            vec![
                Atom::new("XProj", vec![var("X"), var("Z")]),
                Atom::new(format!("T{t}"), vec![var("Z")]),
                Atom::new("YProj", vec![var("Y"), var("Z")]),
            ],
        )?);
    }
    views.push(View {
        name: "S".to_string(),
        def: ViewDef::Ucq(UnionQuery::new(s_disjuncts)?),
    });
    let atomic = |name: &str, head: Vec<&str>, body: Atom| -> Result<View> {
        Ok(View {
            name: name.to_string(),
            def: ViewDef::Ucq(UnionQuery::new(vec![cq(head, vec![body])?])?),
        })
    };
    views.push(atomic(
        "V_XSucc",
        vec!["X", "Y"],
        Atom::new("XSucc", vec![var("X"), var("Y")]),
    )?);
    views.push(atomic(
        "V_YSucc",
        vec!["X", "Y"],
        Atom::new("YSucc", vec![var("X"), var("Y")]),
    )?);
    views.push(atomic(
        "V_Origin",
        vec!["X"],
        Atom::new("Origin", vec![var("X")]),
    )?);
    for t in 0..spec.tiles {
        views.push(atomic(
            &format!("V_T{t}"),
            vec!["X"],
            Atom::new(format!("T{t}"), vec![var("X")]),
        )?);
    }
    // Special views: horizontal/vertical adjacency with the witnessing axis
    // elements exposed in the head.
    views.push(View {
        name: "V_HA".to_string(),
        def: ViewDef::Ucq(UnionQuery::new(vec![cq(
            vec!["Z1", "Z2", "Y", "X1", "X2"],
            vec![
                Atom::new("XProj", vec![var("X1"), var("Z1")]),
                Atom::new("YProj", vec![var("Y"), var("Z1")]),
                Atom::new("XProj", vec![var("X2"), var("Z2")]),
                Atom::new("YProj", vec![var("Y"), var("Z2")]),
                Atom::new("XSucc", vec![var("X1"), var("X2")]),
            ],
        )?])?),
    });
    views.push(View {
        name: "V_VA".to_string(),
        def: ViewDef::Ucq(UnionQuery::new(vec![cq(
            vec!["Z1", "Z2", "Y1", "Y2", "X"],
            vec![
                Atom::new("XProj", vec![var("X"), var("Z1")]),
                Atom::new("YProj", vec![var("Y1"), var("Z1")]),
                Atom::new("XProj", vec![var("X"), var("Z2")]),
                Atom::new("YProj", vec![var("Y2"), var("Z2")]),
                Atom::new("YSucc", vec![var("Y1"), var("Y2")]),
            ],
        )?])?),
    });
    let views = ViewSet::new(schema.clone(), views)?;
    Ok(MonDetProblem::ucq(q, views, sigma))
}

/// Compiles a tiling problem. CQ mode is the single-CQ-query reduction over
/// the two axis UIDs and one UCQ view (valid tiling iff monotonic determinacy
/// fails); UCQ mode is the UCQ-query variant whose five rule schemas are
/// split into UIDs. CQ mode ignores the initial tile.
pub fn gen_tiling(spec: &TilingSpec, mode: TilingMode) -> Result<MonDetProblem> {
    spec.validate()?;
    match mode {
        TilingMode::Cq => gen_tiling_cq(spec),
        TilingMode::Ucq => gen_tiling_ucq(spec),
    }
}

/// Exhaustive n×n search; honors the initial-tile requirement when present.
/// Returns a witness grid in row-major order.
pub fn valid_tiling(spec: &TilingSpec, n: usize) -> Result<Option<Vec<Vec<usize>>>> {
    spec.validate()?;
    let hbad: IndexSet<(usize, usize)> = spec
        .forbidden
        .iter()
        .filter(|(_, _, o)| *o == Orientation::Horizontal)
        .map(|(i, j, _)| (*i, *j))
        .collect();
    let vbad: IndexSet<(usize, usize)> = spec
        .forbidden
        .iter()
        .filter(|(_, _, o)| *o == Orientation::Vertical)
        .map(|(i, j, _)| (*i, *j))
        .collect();
    let mut grid = vec![vec![0usize; n]; n];
    fn place(
        grid: &mut Vec<Vec<usize>>,
        pos: usize,
        n: usize,
        tiles: usize,
        initial: Option<usize>,
        hbad: &IndexSet<(usize, usize)>,
        vbad: &IndexSet<(usize, usize)>,
    ) -> bool {
        if pos == n * n {
            return true;
        }
        let (row, col) = (pos / n, pos % n);
        for t in 0..tiles {
            if row == 0 && col == 0 {
                if let Some(init) = initial {
                    if t != init {
                        continue;
                    }
                }
            }
            if col > 0 && hbad.contains(&(grid[row][col - 1], t)) {
                continue;
            }
            if row > 0 && vbad.contains(&(grid[row - 1][col], t)) {
                continue;
            }
            grid[row][col] = t;
            if place(grid, pos + 1, n, tiles, initial, hbad, vbad) {
                return true;
            }
        }
        false
    }
    if n == 0 {
        return Ok(Some(vec![]));
    }
    let found = place(
        &mut grid,
        0,
        n,
        spec.tiles,
        spec.initial,
        &hbad,
        &vbad,
    );
    Ok(if found { Some(grid) } else { None })
}

// ---------------------------------------------------------------------------
// Turing machines
// ---------------------------------------------------------------------------

/// A tape-cell content: a plain symbol, or a symbol with the head over it in
/// some state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cell {
    Sym(String),
    Head(String, String),
}

impl Cell {
    pub fn sym(s: &str) -> Cell {
        Cell::Sym(s.to_string())
    }
    pub fn head(state: &str, s: &str) -> Cell {
        Cell::Head(state.to_string(), s.to_string())
    }
    fn symbol(&self) -> &str {
        match self {
            Cell::Sym(s) => s,
            Cell::Head(_, s) => s,
        }
    }
    fn state(&self) -> Option<&str> {
        match self {
            Cell::Sym(_) => None,
            Cell::Head(q, _) => Some(q),
        }
    }
    /// Predicate name in the relational encoding.
    pub fn pred(&self) -> String {
        match self {
            Cell::Sym(s) => s.clone(),
            Cell::Head(q, s) => format!("{q}_{s}"),
        }
    }
}

/// A deterministic finite-tape Turing machine given directly by its cell
/// update tables: new contents of the left edge, interior, and right edge
/// cells as functions of the neighbourhood at the previous time step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TMSpec {
    /// Must contain Blank, Left, and Right.
    pub alphabet: Vec<String>,
    /// Must contain s_start and s_end; s_end halts.
    pub states: Vec<String>,
    pub delta_left: Vec<((Cell, Cell), Cell)>,
    pub delta_mid: Vec<((Cell, Cell, Cell), Cell)>,
    pub delta_right: Vec<((Cell, Cell), Cell)>,
}

impl TMSpec {
    pub fn validate(&self) -> Result<()> {
        for s in ["Blank", "Left", "Right"] {
            if !self.alphabet.iter().any(|a| a == s) {
                return Err(Error::Other(format!("alphabet lacks {s}")));
            }
        }
        for s in ["s_start", "s_end"] {
            if !self.states.iter().any(|a| a == s) {
                return Err(Error::Other(format!("state set lacks {s}")));
            }
        }
        let ok_cell = |c: &Cell| -> Result<()> {
            if !self.alphabet.iter().any(|a| a == c.symbol()) {
                return Err(Error::Other(format!("undeclared symbol in {c:?}")));
            }
            if let Some(q) = c.state() {
                if !self.states.iter().any(|s| s == q) {
                    return Err(Error::Other(format!("undeclared state in {c:?}")));
                }
            }
            Ok(())
        };
        let halted = |c: &Cell| c.state() == Some("s_end");
        let is = |c: &Cell, s: &str| c.symbol() == s;
        let mut seen_l: IndexMap<(Cell, Cell), Cell> = IndexMap::new();
        for ((a, b), out) in &self.delta_left {
            for c in [a, b, out] {
                ok_cell(c)?;
            }
            if halted(a) || halted(b) {
                return Err(Error::Other("transition from the halting state".into()));
            }
            if !is(a, "Left") || !is(out, "Left") || is(b, "Left") {
                return Err(Error::Other("delta_left must preserve the Left mark".into()));
            }
            if let Some(prev) = seen_l.insert((a.clone(), b.clone()), out.clone()) {
                if prev != *out {
                    return Err(Error::NondeterministicSpec(format!(
                        "delta_left conflicts on ({a:?}, {b:?})"
                    )));
                }
            }
        }
        let mut seen_m: IndexMap<(Cell, Cell, Cell), Cell> = IndexMap::new();
        for ((a, b, c), out) in &self.delta_mid {
            for x in [a, b, c, out] {
                ok_cell(x)?;
            }
            if halted(a) || halted(b) || halted(c) {
                return Err(Error::Other("transition from the halting state".into()));
            }
            if is(b, "Left") || is(b, "Right") || is(out, "Left") || is(out, "Right") {
                return Err(Error::Other(
                    "delta_mid cannot read or write edge marks in the middle".into(),
                ));
            }
            if is(a, "Right") || is(c, "Left") {
                return Err(Error::Other("edge marks on the wrong side".into()));
            }
            if let Some(prev) = seen_m.insert((a.clone(), b.clone(), c.clone()), out.clone()) {
                if prev != *out {
                    return Err(Error::NondeterministicSpec(format!(
                        "delta_mid conflicts on ({a:?}, {b:?}, {c:?})"
                    )));
                }
            }
        }
        let mut seen_r: IndexMap<(Cell, Cell), Cell> = IndexMap::new();
        for ((a, b), out) in &self.delta_right {
            for c in [a, b, out] {
                ok_cell(c)?;
            }
            if halted(a) || halted(b) {
                return Err(Error::Other("transition from the halting state".into()));
            }
            if !is(b, "Right") || !is(out, "Right") || is(a, "Right") {
                return Err(Error::Other(
                    "delta_right must preserve the Right mark".into(),
                ));
            }
            if let Some(prev) = seen_r.insert((a.clone(), b.clone()), out.clone()) {
                if prev != *out {
                    return Err(Error::NondeterministicSpec(format!(
                        "delta_right conflicts on ({a:?}, {b:?})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// All cell contents of the relational encoding: plain symbols plus every
    /// (state, symbol) pair.
    pub fn all_cells(&self) -> Vec<Cell> {
        let mut out: Vec<Cell> = self.alphabet.iter().map(|s| Cell::sym(s)).collect();
        for q in &self.states {
            for s in &self.alphabet {
                out.push(Cell::head(q, s));
            }
        }
        out
    }
}

fn tm_schema(spec: &TMSpec) -> Arc<Schema> {
    let mut s = Schema::new();
    s.declare("First", 1, PredTag::Base);
    s.declare("Last", 1, PredTag::Base);
    s.declare("Succ", 2, PredTag::Base);
    s.declare("SuccP", 2, PredTag::Base);
    for c in spec.all_cells() {
        s.declare(c.pred(), 2, PredTag::Base);
    }
    s.declare("V_First", 1, PredTag::View);
    s.declare("V_Last", 1, PredTag::View);
    s.declare("Reached", 1, PredTag::Idb);
    s.declare("Goal", 0, PredTag::Idb);
    Arc::new(s)
}

/// Compiles a machine into a determinacy instance: MDL query "some
/// First-to-Last Succ path", the two unary views, and full TGDs that lay out
/// the initial tape on the path, run the update tables, and flag a
/// still-running head at the final time step. The machine halts at some
/// initial tape length iff monotonic determinacy fails.
pub fn gen_tm(spec: &TMSpec) -> Result<MonDetProblem> {
    spec.validate()?;
    let schema = tm_schema(spec);
    let mut sigma = Vec::new();
    let mut tgd = |body: Vec<Atom>, head: Vec<Atom>| -> Result<()> {
        let r = Tgd::new(schema.clone(), body, head)?;
        if !r.is_full() {
            return Err(Error::Other(format!("generated rule is not full: {r}")));
        }
        sigma.push(r);
        Ok(())
    };

    // Transitive closure of Succ.
    tgd(
        vec![Atom::new("Succ", vec![var("X"), var("Y")])],
        vec![Atom::new("SuccP", vec![var("X"), var("Y")])],
    )?;
    tgd(
        vec![
            Atom::new("SuccP", vec![var("X"), var("Y")]),
            Atom::new("Succ", vec![var("Y"), var("Z")]),
        ],
        vec![Atom::new("SuccP", vec![var("X"), var("Z")])],
    )?;

    // Initial tape at time one.
    tgd(
        vec![
            Atom::new("First", vec![var("S")]),
            Atom::new("First", vec![var("T")]),
            Atom::new("Succ", vec![var("T"), var("Tp")]),
        ],
        vec![Atom::new(Cell::head("s_start", "Left").pred(), vec![var("S"), var("T")])],
    )?;
    tgd(
        vec![
            Atom::new("Last", vec![var("S")]),
            Atom::new("First", vec![var("T")]),
            Atom::new("Succ", vec![var("T"), var("Tp")]),
        ],
        vec![Atom::new("Right", vec![var("S"), var("T")])],
    )?;
    tgd(
        vec![
            Atom::new("First", vec![var("S")]),
            Atom::new("SuccP", vec![var("S"), var("Sp")]),
            Atom::new("SuccP", vec![var("Sp"), var("Spp")]),
            Atom::new("Last", vec![var("Spp")]),
            Atom::new("First", vec![var("T")]),
        ],
        vec![Atom::new("Blank", vec![var("Sp"), var("T")])],
    )?;

    // Update tables.
    for ((a, b), out) in &spec.delta_left {
        tgd(
            vec![
                Atom::new("First", vec![var("S")]),
                Atom::new("Succ", vec![var("S"), var("Sp")]),
                Atom::new(a.pred(), vec![var("S"), var("T")]),
                Atom::new(b.pred(), vec![var("Sp"), var("T")]),
                Atom::new("Succ", vec![var("T"), var("Tp")]),
            ],
            vec![Atom::new(out.pred(), vec![var("S"), var("Tp")])],
        )?;
    }
    for ((a, b, c), out) in &spec.delta_mid {
        tgd(
            vec![
                Atom::new("Succ", vec![var("S"), var("Sp")]),
                Atom::new("Succ", vec![var("Sp"), var("Spp")]),
                Atom::new(a.pred(), vec![var("S"), var("T")]),
                Atom::new(b.pred(), vec![var("Sp"), var("T")]),
                Atom::new(c.pred(), vec![var("Spp"), var("T")]),
                Atom::new("Succ", vec![var("T"), var("Tp")]),
            ],
            vec![Atom::new(out.pred(), vec![var("Sp"), var("Tp")])],
        )?;
    }
    for ((a, b), out) in &spec.delta_right {
        tgd(
            vec![
                Atom::new("Succ", vec![var("S"), var("Sp")]),
                Atom::new("Last", vec![var("Sp")]),
                Atom::new(a.pred(), vec![var("S"), var("T")]),
                Atom::new(b.pred(), vec![var("Sp"), var("T")]),
                Atom::new("Succ", vec![var("T"), var("Tp")]),
            ],
            vec![Atom::new(out.pred(), vec![var("Sp"), var("Tp")])],
        )?;
    }

    // A head still running at the final time step flags the instance.
    for q in &spec.states {
        if q == "s_end" {
            continue;
        }
        for s in &spec.alphabet {
            tgd(
                vec![
                    Atom::new(Cell::head(q, s).pred(), vec![var("C"), var("T")]),
                    Atom::new("Last", vec![var("T")]),
                ],
                vec![Atom::new("First", vec![var("T")])],
            )?;
        }
    }

    let program = DatalogProgram::new(
        schema.clone(),
        vec![
            DatalogRule {
                head: Atom::new("Goal", vec![]),
                body: vec![
                    Atom::new("Reached", vec![var("X")]),
                    Atom::new("Last", vec![var("X")]),
                ],
            },
            DatalogRule {
                head: Atom::new("Reached", vec![var("X")]),
                body: vec![Atom::new("First", vec![var("X")])],
            },
            DatalogRule {
                head: Atom::new("Reached", vec![var("Y")]),
                body: vec![
                    Atom::new("Reached", vec![var("X")]),
                    Atom::new("Succ", vec![var("X"), var("Y")]),
                ],
            },
        ],
        "Goal".to_string(),
    )?;
    let atomic = |name: &str, pred: &str| -> Result<View> {
        let q = ConjunctiveQuery::new(
            schema.clone(),
            vec!["X".to_string()],
            vec![Atom::new(pred, vec![var("X")])],
        )?;
        Ok(View {
            name: name.to_string(),
            def: ViewDef::Ucq(UnionQuery::new(vec![q])?),
        })
    };
    let views = ViewSet::new(
        schema.clone(),
        vec![atomic("V_First", "First")?, atomic("V_Last", "Last")?],
    )?;
    Ok(MonDetProblem {
        q: crate::mondet::ProblemQuery::Datalog(program),
        views,
        sigma,
    })
}

/// Tape history on an initial tape of the given length: row t-1 holds the
/// cell contents at time t, each cell None once its update is undefined.
/// Mirrors the per-cell table application the chase performs, so halted or
/// stuck regions simply stop evolving.
pub fn tm_history(spec: &TMSpec, len: usize, steps: usize) -> Result<Vec<Vec<Option<Cell>>>> {
    spec.validate()?;
    if len < 2 {
        return Ok(vec![]);
    }
    let dl: IndexMap<(Cell, Cell), Cell> = spec.delta_left.iter().cloned().collect();
    let dm: IndexMap<(Cell, Cell, Cell), Cell> = spec.delta_mid.iter().cloned().collect();
    let dr: IndexMap<(Cell, Cell), Cell> = spec.delta_right.iter().cloned().collect();
    let mut row: Vec<Option<Cell>> = Vec::with_capacity(len);
    row.push(Some(Cell::head("s_start", "Left")));
    for _ in 1..len - 1 {
        row.push(Some(Cell::sym("Blank")));
    }
    row.push(Some(Cell::sym("Right")));
    let mut history = vec![row];
    for _ in 1..steps {
        let prev = history.last().unwrap();
        let mut next: Vec<Option<Cell>> = vec![None; len];
        for i in 0..len {
            let get = |j: usize| prev[j].clone();
            next[i] = if i == 0 {
                match (get(0), get(1)) {
                    (Some(a), Some(b)) => dl.get(&(a, b)).cloned(),
                    _ => None,
                }
            } else if i == len - 1 {
                match (get(i - 1), get(i)) {
                    (Some(a), Some(b)) => dr.get(&(a, b)).cloned(),
                    _ => None,
                }
            } else {
                match (get(i - 1), get(i), get(i + 1)) {
                    (Some(a), Some(b), Some(c)) => dm.get(&(a, b, c)).cloned(),
                    _ => None,
                }
            };
        }
        if next.iter().all(Option::is_none) {
            break;
        }
        history.push(next);
    }
    Ok(history)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TmReport {
    /// First (tape length, transition count) reaching the halting state.
    pub halts: Option<(usize, usize)>,
    pub max_len: usize,
    pub max_steps: usize,
}

/// Runs the machine on every initial tape length up to the bound.
pub fn simulate_tm(spec: &TMSpec, max_len: usize, max_steps: usize) -> Result<TmReport> {
    let mut report = TmReport {
        halts: None,
        max_len,
        max_steps,
    };
    for len in 2..=max_len {
        let history = tm_history(spec, len, max_steps)?;
        for (t, row) in history.iter().enumerate() {
            let halted = row
                .iter()
                .flatten()
                .any(|c| c.state() == Some("s_end"));
            if halted {
                report.halts = Some((len, t));
                return Ok(report);
            }
        }
    }
    Ok(report)
}

/// A machine whose very first transition moves the head onto a Blank cell in
/// the halting state: it halts on the length-3 initial tape after one step
/// (and loops on the degenerate length-2 tape).
pub fn tm_immediate_halt() -> TMSpec {
    let b = Cell::sym("Blank");
    let r = Cell::sym("Right");
    let l = Cell::sym("Left");
    let hl = Cell::head("s_start", "Left");
    let hr = Cell::head("s_start", "Right");
    TMSpec {
        alphabet: ["Blank", "Left", "Right"].map(String::from).to_vec(),
        states: ["s_start", "s_end"].map(String::from).to_vec(),
        delta_left: vec![
            ((hl.clone(), b.clone()), l.clone()),
            ((hl.clone(), r.clone()), l.clone()),
            ((l.clone(), hr.clone()), hl.clone()),
        ],
        delta_mid: vec![
            ((hl.clone(), b.clone(), b.clone()), Cell::head("s_end", "Blank")),
            ((hl.clone(), b.clone(), r.clone()), Cell::head("s_end", "Blank")),
        ],
        delta_right: vec![
            ((hl, r.clone()), hr.clone()),
            ((l, hr), r),
        ],
    }
}

/// A machine that bounces the head between the first two cells in s_start
/// forever: it never halts at any tape length.
pub fn tm_bouncer() -> TMSpec {
    let b = Cell::sym("Blank");
    let r = Cell::sym("Right");
    let l = Cell::sym("Left");
    let hl = Cell::head("s_start", "Left");
    let hb = Cell::head("s_start", "Blank");
    let hr = Cell::head("s_start", "Right");
    TMSpec {
        alphabet: ["Blank", "Left", "Right"].map(String::from).to_vec(),
        states: ["s_start", "s_end"].map(String::from).to_vec(),
        delta_left: vec![
            ((hl.clone(), b.clone()), l.clone()),
            ((hl.clone(), r.clone()), l.clone()),
            ((l.clone(), hb.clone()), hl.clone()),
            ((l.clone(), hr.clone()), hl.clone()),
        ],
        delta_mid: vec![
            ((hl.clone(), b.clone(), b.clone()), hb.clone()),
            ((hl.clone(), b.clone(), r.clone()), hb.clone()),
            ((l.clone(), hb.clone(), b.clone()), b.clone()),
            ((l.clone(), hb.clone(), r.clone()), b.clone()),
            ((hb.clone(), b.clone(), b.clone()), b.clone()),
            ((hb.clone(), b.clone(), r.clone()), b.clone()),
            ((b.clone(), b.clone(), b.clone()), b.clone()),
            ((b.clone(), b.clone(), r.clone()), b.clone()),
        ],
        delta_right: vec![
            ((hl, r.clone()), hr.clone()),
            ((l, hr), r.clone()),
            ((b.clone(), r.clone()), r.clone()),
            ((hb, r.clone()), r),
        ],
    }
}

// ---------------------------------------------------------------------------
// Unified simulation entry point
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum MachineSpec {
    Ca(CASpec),
    Tm(TMSpec),
    Tiling(TilingSpec),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum SimReport {
    Ca(CaReport),
    Tm(TmReport),
    /// Per grid size n, whether a valid n×n tiling exists.
    Tiling(Vec<(usize, bool)>),
}

/// Ground truth at the given bound: CA generations, TM tape lengths and step
/// counts, or tiling grid sizes.
pub fn simulate(spec: &MachineSpec, bound: usize) -> Result<SimReport> {
    match spec {
        MachineSpec::Ca(c) => Ok(SimReport::Ca(simulate_ca(c, bound)?)),
        MachineSpec::Tm(t) => Ok(SimReport::Tm(simulate_tm(t, bound, bound * bound + 2)?)),
        MachineSpec::Tiling(t) => {
            let mut out = Vec::new();
            for n in 1..=bound {
                out.push((n, valid_tiling(t, n)?.is_some()));
            }
            Ok(SimReport::Tiling(out))
        }
    }
}
