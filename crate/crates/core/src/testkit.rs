//! Construction shorthands and seeded random generators shared by the test
//! suites and benchmarks. Uppercase-initial names are variables, anything
//! else a constant — the same convention as the CLI surface syntax.

use crate::ast::{Atom, Instance, PredTag, Schema, Substitution, Term};
use crate::datalog::{DatalogProgram, DatalogRule};
use crate::hom::{find_homomorphisms, has_homomorphism};
use crate::query::{ConjunctiveQuery, UnionQuery};
use crate::tgd::Tgd;
use crate::treecode::{CodeNode, Letter, TreeAutomaton, TreeCode};
use crate::views::{View, ViewDef, ViewSet};
use indexmap::{IndexMap, IndexSet};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

pub fn term(s: &str) -> Term {
    if s.chars().next().is_some_and(|c| c.is_ascii_uppercase()) {
        Term::var(s)
    } else {
        Term::cst(s)
    }
}

pub fn atom(pred: &str, args: &[&str]) -> Atom {
    Atom::new(pred, args.iter().map(|a| term(a)).collect())
}

pub fn cq(schema: &Arc<Schema>, head: &[&str], body: &[Atom]) -> ConjunctiveQuery {
    ConjunctiveQuery::new(
        schema.clone(),
        head.iter().map(|s| s.to_string()).collect(),
        body.to_vec(),
    )
    .expect("test CQ is well-formed")
}

pub fn ucq(disjuncts: Vec<ConjunctiveQuery>) -> UnionQuery {
    UnionQuery::new(disjuncts).expect("test UCQ is well-formed")
}

pub fn tgd(schema: &Arc<Schema>, body: &[Atom], head: &[Atom]) -> Tgd {
    Tgd::new(schema.clone(), body.to_vec(), head.to_vec()).expect("test TGD is well-formed")
}

pub fn rule(head: Atom, body: &[Atom]) -> DatalogRule {
    DatalogRule {
        head,
        body: body.to_vec(),
    }
}

pub fn instance(schema: &Arc<Schema>, facts: &[Atom]) -> Instance {
    Instance::from_facts(schema.clone(), facts.iter().cloned())
        .expect("test instance is schema-valid")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random instance over the Base predicates of `schema`, with elements
/// drawn from `e0..e{domain}`.
pub fn rand_instance(
    schema: &Arc<Schema>,
    rng: &mut ChaCha8Rng,
    domain: usize,
    max_facts: usize,
) -> Instance {
    let preds: Vec<(String, usize)> = schema
        .preds_tagged(PredTag::Base)
        .map(|(n, a)| (n.to_string(), a))
        .collect();
    let mut inst = Instance::new(schema.clone());
    if preds.is_empty() {
        return inst;
    }
    let n_facts = rng.gen_range(0..=max_facts);
    for _ in 0..n_facts {
        let (pred, arity) = preds[rng.gen_range(0..preds.len())].clone();
        let args = (0..arity)
            .map(|_| Term::cst(format!("e{}", rng.gen_range(0..domain.max(1)))))
            .collect();
        inst.insert(Atom::new(pred, args)).unwrap();
    }
    inst
}

/// Example fixture: base R,S; UCQ view V(x,y) := R(x,y) | S(x,y);
/// Σ = {S(x,x) → R(x,x)}; Q = ∃x R(x,x).
pub struct ExConstraints {
    pub schema: Arc<Schema>,
    pub q: UnionQuery,
    pub sigma: Vec<Tgd>,
    pub views: ViewSet,
}

pub fn ex_constraints() -> ExConstraints {
    let schema = Arc::new(
        Schema::new()
            .with("R", 2, PredTag::Base)
            .with("S", 2, PredTag::Base)
            .with("V", 2, PredTag::View),
    );
    let q = ucq(vec![cq(&schema, &[], &[atom("R", &["X", "X"])])]);
    let sigma = vec![tgd(
        &schema,
        &[atom("S", &["X", "X"])],
        &[atom("R", &["X", "X"])],
    )];
    let def = ucq(vec![
        cq(&schema, &["X", "Y"], &[atom("R", &["X", "Y"])]),
        cq(&schema, &["X", "Y"], &[atom("S", &["X", "Y"])]),
    ]);
    let views = ViewSet::new(
        schema.clone(),
        vec![View {
            name: "V".to_string(),
            def: ViewDef::Ucq(def),
        }],
    )
    .expect("view arities match");
    ExConstraints {
        schema,
        q,
        sigma,
        views,
    }
}

/// Example fixture: base R; Boolean view V() := ∃x,y R(x,y);
/// Σ = {R(x,y) → ∃z R(y,z)}; Q = "there is an R-cycle" as a Datalog program.
pub struct ExFc {
    pub schema: Arc<Schema>,
    pub program: DatalogProgram,
    pub q_diag: UnionQuery,
    pub sigma: Vec<Tgd>,
    pub views: ViewSet,
}

pub fn ex_fc() -> ExFc {
    let schema = Arc::new(
        Schema::new()
            .with("R", 2, PredTag::Base)
            .with("V", 0, PredTag::View)
            .with("I", 2, PredTag::Idb)
            .with("Goal", 0, PredTag::Idb),
    );
    let program = DatalogProgram::new(
        schema.clone(),
        vec![
            rule(atom("I", &["X", "Y"]), &[atom("R", &["X", "Y"])]),
            rule(
                atom("I", &["X", "Y"]),
                &[atom("R", &["X", "Z"]), atom("I", &["Z", "Y"])],
            ),
            rule(atom("Goal", &[]), &[atom("I", &["X", "X"])]),
        ],
        "Goal".to_string(),
    )
    .expect("cycle program is well-formed");
    let q_diag = ucq(vec![cq(&schema, &[], &[atom("R", &["X", "X"])])]);
    let sigma = vec![tgd(
        &schema,
        &[atom("R", &["X", "Y"])],
        &[atom("R", &["Y", "Z"])],
    )];
    let def = ucq(vec![cq(&schema, &[], &[atom("R", &["X", "Y"])])]);
    let views = ViewSet::new(
        schema.clone(),
        vec![View {
            name: "V".to_string(),
            def: ViewDef::Ucq(def),
        }],
    )
    .expect("view arities match");
    ExFc {
        schema,
        program,
        q_diag,
        sigma,
        views,
    }
}

/// Turns an instance into a body pattern with one variable per term.
fn fact_pattern(i: &Instance) -> Vec<Atom> {
    let terms: Vec<Term> = i.adom();
    let var_of = |t: &Term| {
        Term::var(format!(
            "H{}",
            terms.iter().position(|x| x == t).expect("term in adom")
        ))
    };
    i.facts()
        .map(|f| Atom::new(f.pred.clone(), f.args.iter().map(var_of).collect()))
        .collect()
}

/// Whether `a` maps homomorphically into `b` (all terms of `a` treated as
/// malleable).
pub fn maps_into(a: &Instance, b: &Instance) -> bool {
    has_homomorphism(&fact_pattern(a), b, &Substitution::new()).expect("pattern is well-formed")
}

/// Isomorphism of fact structures: equal active-domain sizes, equal per-
/// predicate fact counts, and an injective homomorphism from `a` to `b`.
pub fn isomorphic(a: &Instance, b: &Instance) -> bool {
    if a.adom().len() != b.adom().len() || a.len() != b.len() {
        return false;
    }
    let count = |i: &Instance| {
        let mut m: IndexMap<String, usize> = IndexMap::new();
        for f in i.facts() {
            *m.entry(f.pred.clone()).or_default() += 1;
        }
        m.sort_keys();
        m
    };
    if count(a) != count(b) {
        return false;
    }
    let pattern = fact_pattern(a);
    let homs =
        find_homomorphisms(&pattern, b, &Substitution::new(), None).expect("pattern well-formed");
    let n_terms = a.adom().len();
    homs.iter().any(|h| {
        let imgs: IndexSet<&Term> = (0..n_terms)
            .filter_map(|i| h.get(&format!("H{i}")))
            .collect();
        imgs.len() == n_terms
    })
}

/// The distinct letters appearing in an automaton's transitions.
pub fn automaton_letters(a: &TreeAutomaton) -> Vec<Letter> {
    let mut out: IndexSet<Letter> = IndexSet::new();
    for (l, _) in &a.leaf_transitions {
        out.insert(l.clone());
    }
    for (_, l, _) in &a.internal_transitions {
        out.insert(l.clone());
    }
    out.into_iter().collect()
}

/// Every code over `letters` with branching `r` and at most `levels` levels
/// of nodes (1 = a single leaf). Internal nodes take exactly `r` children.
pub fn enumerate_codes(letters: &[Letter], k: usize, r: usize, levels: usize) -> Vec<TreeCode> {
    // A fragment is a node list rooted at 0.
    let mut pool: Vec<Vec<CodeNode>> = letters
        .iter()
        .map(|l| {
            vec![CodeNode {
                labels: l.labels(),
                children: vec![],
            }]
        })
        .collect();
    for _ in 1..levels {
        let mut next = pool.clone();
        let mut combos: Vec<Vec<usize>> = vec![Vec::new()];
        for _ in 0..r {
            let mut grown = Vec::new();
            for c in &combos {
                for i in 0..pool.len() {
                    let mut c = c.clone();
                    c.push(i);
                    grown.push(c);
                }
            }
            combos = grown;
        }
        for l in letters {
            for combo in &combos {
                let mut nodes = vec![CodeNode {
                    labels: l.labels(),
                    children: vec![],
                }];
                for &fi in combo {
                    let base = nodes.len();
                    nodes[0].children.push(base);
                    for n in &pool[fi] {
                        nodes.push(CodeNode {
                            labels: n.labels.clone(),
                            children: n.children.iter().map(|c| c + base).collect(),
                        });
                    }
                }
                next.push(nodes);
            }
        }
        pool = next;
    }
    pool.into_iter()
        .map(|nodes| TreeCode {
            nodes,
            root: 0,
            k,
            r,
        })
        .collect()
}

/// Reachability oracle for the backward-mapping contract: whether some
/// finite coherent code accepted by `a` decodes into a structure mapping
/// homomorphically into `m`. Works over configurations (state, map,
/// name-to-element assignment) rather than generated Datalog rules.
pub fn automaton_hits(a: &TreeAutomaton, m: &Instance) -> bool {
    let adom: Vec<Term> = m.adom().into_iter().collect();
    if adom.is_empty() {
        return false;
    }
    let mut assignments: Vec<Vec<Term>> = vec![Vec::new()];
    for _ in 0..a.k {
        let mut next = Vec::new();
        for h in &assignments {
            for e in &adom {
                let mut h = h.clone();
                h.push(e.clone());
                next.push(h);
            }
        }
        assignments = next;
    }
    let consistent = |l: &Letter, h: &[Term]| {
        l.eqs.iter().all(|&(x, y)| h[x - 1] == h[y - 1])
            && l.facts.iter().all(|(p, ns)| {
                m.contains(&Atom::new(
                    p.clone(),
                    ns.iter().map(|&n| h[n - 1].clone()).collect(),
                ))
            })
    };

    let mut configs: IndexSet<(usize, Vec<(usize, usize)>, Vec<Term>)> = IndexSet::new();
    for (l, q) in &a.leaf_transitions {
        for h in &assignments {
            if consistent(l, h) {
                configs.insert((*q, l.g.clone(), h.clone()));
            }
        }
    }
    loop {
        let mut added = Vec::new();
        for (qs, l, q) in &a.internal_transitions {
            for h in &assignments {
                if !consistent(l, h) {
                    continue;
                }
                let key = (*q, l.g.clone(), h.clone());
                if configs.contains(&key) || added.contains(&key) {
                    continue;
                }
                let ok = qs.iter().all(|qj| {
                    configs.iter().any(|(cq, cg, ch)| {
                        cq == qj && cg.iter().all(|&(pl, cl)| h[pl - 1] == ch[cl - 1])
                    })
                });
                if ok {
                    added.push(key);
                }
            }
        }
        if added.is_empty() {
            break;
        }
        for c in added {
            configs.insert(c);
        }
    }
    configs.iter().any(|(q, _, _)| a.accepting.contains(q))
}

/// A seeded random automaton over σ = {R/2, S/1} with k = 2, r = 2, at most
/// three states and three transition letters.
pub fn rand_automaton(rng: &mut ChaCha8Rng) -> TreeAutomaton {
    let sigma = Arc::new(
        Schema::new()
            .with("R", 2, PredTag::Base)
            .with("S", 1, PredTag::Base),
    );
    let k = 2;
    let all_gs: Vec<Vec<(usize, usize)>> = vec![
        vec![],
        vec![(1, 1)],
        vec![(1, 2)],
        vec![(2, 1)],
        vec![(2, 2)],
        vec![(1, 1), (2, 2)],
        vec![(1, 2), (2, 1)],
    ];
    let base_facts: Vec<(String, Vec<usize>)> = vec![
        ("R".into(), vec![1, 2]),
        ("R".into(), vec![2, 1]),
        ("R".into(), vec![1, 1]),
        ("S".into(), vec![1]),
        ("S".into(), vec![2]),
    ];
    let mut letters: IndexSet<Letter> = IndexSet::new();
    let n_letters = rng.gen_range(1..=3);
    while letters.len() < n_letters {
        let eqs: Vec<(usize, usize)> = if rng.gen_bool(0.3) {
            vec![(1, 2)]
        } else {
            vec![]
        };
        let mut facts = Vec::new();
        for f in &base_facts {
            if rng.gen_bool(0.3) {
                facts.push(f.clone());
            }
        }
        let g = all_gs[rng.gen_range(0..all_gs.len())].clone();
        letters.insert(Letter::new(k, &eqs, &facts, &g));
    }
    let letters: Vec<Letter> = letters.into_iter().collect();

    let n_states = rng.gen_range(1..=3);
    let states: Vec<String> = (0..n_states).map(|i| format!("q{i}")).collect();
    let accepting: Vec<usize> = (0..n_states).filter(|_| rng.gen_bool(0.5)).collect();
    let mut leaf_transitions = Vec::new();
    for l in &letters {
        for q in 0..n_states {
            if rng.gen_bool(0.4) {
                leaf_transitions.push((l.clone(), q));
            }
        }
    }
    let mut internal_transitions = Vec::new();
    let n_internal = rng.gen_range(0..=5);
    for _ in 0..n_internal {
        let qs = vec![rng.gen_range(0..n_states), rng.gen_range(0..n_states)];
        let l = letters[rng.gen_range(0..letters.len())].clone();
        let q = rng.gen_range(0..n_states);
        let t = (qs, l, q);
        if !internal_transitions.contains(&t) {
            internal_transitions.push(t);
        }
    }
    TreeAutomaton {
        sigma,
        k,
        r: 2,
        states,
        accepting,
        leaf_transitions,
        internal_transitions,
    }
}
