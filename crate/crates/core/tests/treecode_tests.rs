//! Tree codes: coherence, decode/encode round trips, automaton runs, the
//! backward mapping to Datalog, and the approximation automaton.

use std::sync::Arc;
use viewdet::ast::{Instance, PredTag, Schema, Term};
use viewdet::chase::{chase, emit_decomposition, ChaseConfig};
use viewdet::datalog::{goal_holds, unfold_approximations, DatalogProgram};
use viewdet::decomp::{TdNode, TreeDecomposition};
use viewdet::query::canondb;
use viewdet::testkit::*;
use viewdet::treecode::{
    approx_automaton, backward_map, check_coherence, decode, encode, run_automaton, CodeLabel,
    CodeNode, Letter, TreeAutomaton, TreeCode,
};
use viewdet::{Atom, Error};

fn rs_schema() -> Arc<Schema> {
    Arc::new(
        Schema::new()
            .with("R", 2, PredTag::Base)
            .with("S", 2, PredTag::Base),
    )
}

fn node(letter: &Letter, children: &[usize]) -> CodeNode {
    CodeNode {
        labels: letter.labels(),
        children: children.to_vec(),
    }
}

// ---------------------------------------------------------------------------
// decode
// ---------------------------------------------------------------------------

#[test]
fn single_node_decodes_to_one_fact() {
    let schema = rs_schema();
    let l = Letter::new(2, &[], &[("R".into(), vec![1, 2])], &[]);
    let t = TreeCode {
        nodes: vec![node(&l, &[])],
        root: 0,
        k: 2,
        r: 2,
    };
    let d = decode(&t, &schema).unwrap();
    assert_eq!(d.len(), 1);
    assert!(d.contains(&Atom::new("R", vec![Term::cst("t0_1"), Term::cst("t0_2")])));
}

#[test]
fn chain_shares_the_mapped_element() {
    let schema = rs_schema();
    let parent = Letter::new(2, &[], &[("R".into(), vec![1, 2])], &[]);
    // Child's name 1 is the parent's name 1; child's name 2 is fresh.
    let child = Letter::new(2, &[], &[("S".into(), vec![1, 2])], &[(1, 1)]);
    let t = TreeCode {
        nodes: vec![node(&parent, &[1]), node(&child, &[])],
        root: 0,
        k: 2,
        r: 1,
    };
    let d = decode(&t, &schema).unwrap();
    assert_eq!(d.adom().len(), 3);
    assert!(d.contains(&Atom::new("R", vec![Term::cst("t0_1"), Term::cst("t0_2")])));
    assert!(d.contains(&Atom::new("S", vec![Term::cst("t0_1"), Term::cst("t1_2")])));
}

#[test]
fn equalized_names_force_a_self_loop() {
    let schema = rs_schema();
    let l = Letter::new(2, &[(1, 2)], &[("R".into(), vec![1, 2])], &[]);
    let t = TreeCode {
        nodes: vec![node(&l, &[])],
        root: 0,
        k: 2,
        r: 2,
    };
    let d = decode(&t, &schema).unwrap();
    assert_eq!(d.len(), 1);
    assert_eq!(d.adom().len(), 1);
    assert!(d.contains(&Atom::new("R", vec![Term::cst("t0_1"), Term::cst("t0_1")])));
}

// ---------------------------------------------------------------------------
// Coherence conditions, one violation each
// ---------------------------------------------------------------------------

fn raw_code(nodes: Vec<CodeNode>, root: usize, k: usize, r: usize) -> TreeCode {
    TreeCode { nodes, root, k, r }
}

#[test]
fn condition_1_missing_reflexivity() {
    let t = raw_code(
        vec![CodeNode {
            labels: vec![CodeLabel::Eq(1, 1), CodeLabel::Map(vec![])],
            children: vec![],
        }],
        0,
        2,
        2,
    );
    assert!(matches!(check_coherence(&t), Err(Error::Incoherent(1))));
}

#[test]
fn condition_2_fact_not_closed_under_equality() {
    let eqs = [
        CodeLabel::Eq(1, 1),
        CodeLabel::Eq(2, 2),
        CodeLabel::Eq(1, 2),
        CodeLabel::Eq(2, 1),
    ];
    let mut labels = eqs.to_vec();
    labels.push(CodeLabel::Fact("R".into(), vec![1, 2]));
    labels.push(CodeLabel::Map(vec![]));
    let t = raw_code(
        vec![CodeNode {
            labels,
            children: vec![],
        }],
        0,
        2,
        2,
    );
    assert!(matches!(check_coherence(&t), Err(Error::Incoherent(2))));
}

#[test]
fn condition_3_map_domain_ignores_parent_equality() {
    let parent = CodeNode {
        labels: vec![
            CodeLabel::Eq(1, 1),
            CodeLabel::Eq(2, 2),
            CodeLabel::Eq(1, 2),
            CodeLabel::Eq(2, 1),
            CodeLabel::Map(vec![]),
        ],
        children: vec![1],
    };
    let child = CodeNode {
        labels: vec![
            CodeLabel::Eq(1, 1),
            CodeLabel::Eq(2, 2),
            CodeLabel::Map(vec![(1, 1)]), // 1 in dom, its equal 2 is not
        ],
        children: vec![],
    };
    let t = raw_code(vec![parent, child], 0, 2, 1);
    assert!(matches!(check_coherence(&t), Err(Error::Incoherent(3))));
}

#[test]
fn condition_3_mapped_equality_missing_at_child() {
    let parent = CodeNode {
        labels: vec![
            CodeLabel::Eq(1, 1),
            CodeLabel::Eq(2, 2),
            CodeLabel::Eq(1, 2),
            CodeLabel::Eq(2, 1),
            CodeLabel::Map(vec![]),
        ],
        children: vec![1],
    };
    let child = CodeNode {
        labels: vec![
            CodeLabel::Eq(1, 1),
            CodeLabel::Eq(2, 2),
            CodeLabel::Map(vec![(1, 1), (2, 2)]), // child lacks T^=_{1,2}
        ],
        children: vec![],
    };
    let t = raw_code(vec![parent, child], 0, 2, 1);
    assert!(matches!(check_coherence(&t), Err(Error::Incoherent(3))));
}

#[test]
fn condition_4_nullary_fact_not_uniform() {
    let refl = [CodeLabel::Eq(1, 1), CodeLabel::Eq(2, 2)];
    let mut parent_labels = refl.to_vec();
    parent_labels.push(CodeLabel::Fact("P".into(), vec![]));
    parent_labels.push(CodeLabel::Map(vec![]));
    let mut child_labels = refl.to_vec();
    child_labels.push(CodeLabel::Map(vec![(1, 1)]));
    let t = raw_code(
        vec![
            CodeNode {
                labels: parent_labels,
                children: vec![1],
            },
            CodeNode {
                labels: child_labels,
                children: vec![],
            },
        ],
        0,
        2,
        1,
    );
    assert!(matches!(check_coherence(&t), Err(Error::Incoherent(4))));
}

#[test]
fn condition_5_map_count_must_be_one() {
    let refl = vec![CodeLabel::Eq(1, 1), CodeLabel::Eq(2, 2)];
    let none = raw_code(
        vec![CodeNode {
            labels: refl.clone(),
            children: vec![],
        }],
        0,
        2,
        2,
    );
    assert!(matches!(check_coherence(&none), Err(Error::Incoherent(5))));
    let mut two = refl;
    two.push(CodeLabel::Map(vec![]));
    two.push(CodeLabel::Map(vec![(1, 1)]));
    let t = raw_code(
        vec![CodeNode {
            labels: two,
            children: vec![],
        }],
        0,
        2,
        2,
    );
    assert!(matches!(check_coherence(&t), Err(Error::Incoherent(5))));
}

// ---------------------------------------------------------------------------
// encode
// ---------------------------------------------------------------------------

#[test]
fn single_fact_single_bag_round_trip() {
    let schema = rs_schema();
    let i = instance(&schema, &[atom("R", &["a", "b"])]);
    let td = TreeDecomposition::single_bag(vec![Term::cst("a"), Term::cst("b")]);
    let code = encode(&i, &td, 2, 2).unwrap();
    assert_eq!(code.nodes.len(), 1);
    let expected = Letter::new(2, &[], &[("R".into(), vec![1, 2])], &[]);
    assert_eq!(code.nodes[0].labels, expected.labels());
    assert!(isomorphic(&decode(&code, &schema).unwrap(), &i));
}

#[test]
fn empty_instance_encodes_and_decodes_empty() {
    let schema = rs_schema();
    let i = Instance::new(schema.clone());
    let td = TreeDecomposition::trivial(&i);
    let code = encode(&i, &td, 2, 2).unwrap();
    assert!(decode(&code, &schema).unwrap().is_empty());
}

#[test]
fn encode_rejects_wide_bags_and_bad_decompositions() {
    let schema = rs_schema();
    let i = instance(&schema, &[atom("R", &["a", "b"])]);
    let wide = TreeDecomposition::single_bag(vec![
        Term::cst("a"),
        Term::cst("b"),
        Term::cst("c"),
    ]);
    assert!(matches!(
        encode(&i, &wide, 2, 2),
        Err(Error::WidthExceeded { got: 3, max: 2 })
    ));
    let uncovering = TreeDecomposition::single_bag(vec![Term::cst("a")]);
    assert!(matches!(
        encode(&i, &uncovering, 2, 2),
        Err(Error::InvalidDecomposition(_))
    ));
    let ok = TreeDecomposition::single_bag(vec![Term::cst("a"), Term::cst("b")]);
    assert!(encode(&i, &ok, 2, 1).is_err());
}

#[test]
fn chase_decomposition_round_trip() {
    let schema = rs_schema();
    let rules = vec![tgd(
        &schema,
        &[atom("R", &["X", "Y"])],
        &[atom("R", &["Y", "Z"])],
    )];
    let input = instance(&schema, &[atom("R", &["a", "b"])]);
    let res = chase(&input, &rules, ChaseConfig::with_steps(3)).unwrap();
    let seed = TreeDecomposition::trivial(&input);
    let td = emit_decomposition(&res, &seed).unwrap();
    let code = encode(&res.instance, &td, td.width(), 2).unwrap();
    assert!(isomorphic(&decode(&code, &schema).unwrap(), &res.instance));
}

/// A random decomposition whose child bags inherit from the parent, plus an
/// instance of facts drawn inside the bags.
fn rand_td_instance(seed: u64) -> (Arc<Schema>, Instance, TreeDecomposition) {
    use rand::Rng;
    let schema = rs_schema();
    let mut r = rng(seed);
    let mut counter = 0usize;
    let mut fresh = |r: &mut rand_chacha::ChaCha8Rng, n: usize| -> Vec<Term> {
        (0..n)
            .map(|_| {
                counter += 1;
                let _ = r;
                Term::cst(format!("e{counter}"))
            })
            .collect()
    };
    let root_size = r.gen_range(1..=3);
    let root_bag = fresh(&mut r, root_size);
    let mut nodes = vec![TdNode {
        bag: root_bag,
        children: vec![],
    }];
    let mut queue = vec![0usize];
    while let Some(v) = queue.pop() {
        if nodes.len() >= 6 {
            break;
        }
        let n_children = r.gen_range(0..=2);
        for _ in 0..n_children {
            let parent_bag = nodes[v].bag.clone();
            let inherited: Vec<Term> = parent_bag
                .iter()
                .filter(|_| r.gen_bool(0.6))
                .cloned()
                .collect();
            let mut bag = inherited;
            let extra = r.gen_range(0..=3usize.saturating_sub(bag.len()));
            bag.extend(fresh(&mut r, extra));
            if bag.is_empty() {
                bag = fresh(&mut r, 1);
            }
            let c = nodes.len();
            nodes.push(TdNode {
                bag,
                children: vec![],
            });
            nodes[v].children.push(c);
            queue.push(c);
        }
    }
    let td = TreeDecomposition { nodes, root: 0 };
    let mut i = Instance::new(schema.clone());
    for n in &td.nodes {
        for _ in 0..r.gen_range(0..=2) {
            let pred = if r.gen_bool(0.5) { "R" } else { "S" };
            let a = n.bag[r.gen_range(0..n.bag.len())].clone();
            let b = n.bag[r.gen_range(0..n.bag.len())].clone();
            i.insert(Atom::new(pred, vec![a, b])).unwrap();
        }
    }
    td.validate(&i).expect("generated decomposition is valid");
    (schema, i, td)
}

#[test]
fn hundred_random_round_trips() {
    for seed in 0..100 {
        let (schema, i, td) = rand_td_instance(seed);
        let code = encode(&i, &td, 3, 3).unwrap();
        let back = decode(&code, &schema).unwrap();
        assert!(isomorphic(&back, &i), "round trip failed for seed {seed}");
    }
}

#[test]
fn codes_survive_json_round_trips() {
    let l = Letter::new(2, &[(1, 2)], &[("R".into(), vec![1, 2])], &[(1, 1)]);
    let t = TreeCode {
        nodes: vec![node(&l, &[])],
        root: 0,
        k: 2,
        r: 2,
    };
    let json = serde_json::to_string(&t).unwrap();
    let back: TreeCode = serde_json::from_str(&json).unwrap();
    assert_eq!(back, t);
}

// ---------------------------------------------------------------------------
// runAutomaton
// ---------------------------------------------------------------------------

fn chain_letters() -> (Letter, Letter, Letter) {
    let link = Letter::new(2, &[], &[("R".into(), vec![1, 2])], &[(2, 1)]);
    let root = Letter::new(2, &[], &[("R".into(), vec![1, 2])], &[]);
    let pad = Letter::new(2, &[], &[], &[]);
    (link, root, pad)
}

/// Accepts exactly the codes spelling out an R-chain: the root letter holds
/// an R edge, each link child continues from the parent's second name, and
/// second children are padding.
fn chain_automaton() -> TreeAutomaton {
    let (link, root, pad) = chain_letters();
    TreeAutomaton {
        sigma: rs_schema(),
        k: 2,
        r: 2,
        states: vec!["chain".into(), "pad".into(), "acc".into()],
        accepting: vec![2],
        leaf_transitions: vec![(link.clone(), 0), (pad.clone(), 1), (root.clone(), 2)],
        internal_transitions: vec![
            (vec![0, 1], link, 0),
            (vec![0, 1], root, 2),
        ],
    }
}

#[test]
fn accept_all_automaton_accepts_every_coherent_code() {
    let (link, root, pad) = chain_letters();
    let letters = vec![link, root, pad];
    let mut leaf = Vec::new();
    let mut internal = Vec::new();
    for l in &letters {
        leaf.push((l.clone(), 0));
        internal.push((vec![0, 0], l.clone(), 0));
    }
    let a = TreeAutomaton {
        sigma: rs_schema(),
        k: 2,
        r: 2,
        states: vec!["q".into()],
        accepting: vec![0],
        leaf_transitions: leaf,
        internal_transitions: internal,
    };
    let mut seen = 0;
    for code in enumerate_codes(&letters, 2, 2, 2) {
        if check_coherence(&code).is_ok() {
            assert!(run_automaton(&a, &code).unwrap().accepted);
            seen += 1;
        }
    }
    assert!(seen > 0);
}

#[test]
fn chain_automaton_accepts_exactly_chains() {
    let a = chain_automaton();
    let letters = automaton_letters(&a);
    let schema = rs_schema();
    let mut accepted: Vec<TreeCode> = Vec::new();
    for code in enumerate_codes(&letters, 2, 2, 3) {
        if check_coherence(&code).is_err() {
            continue;
        }
        let run = run_automaton(&a, &code).unwrap();
        if run.accepted {
            let d = decode(&code, &schema).unwrap();
            // A chain of n edges has n + 1 distinct elements and no branching.
            assert_eq!(d.adom().len(), d.len() + 1);
            let run_states = run.states.unwrap();
            assert_eq!(run_states[code.root], 2);
            if !accepted.contains(&code) {
                accepted.push(code);
            }
        }
    }
    // Chains of length 1, 2, and 3 fit within three levels.
    assert_eq!(accepted.len(), 3);
}

#[test]
fn rejects_branching_and_mismatched_alphabets() {
    let a = chain_automaton();
    let (link, root, _) = chain_letters();
    let branching = TreeCode {
        nodes: vec![
            node(&root, &[1, 2]),
            node(&link, &[]),
            node(&link, &[]),
        ],
        root: 0,
        k: 2,
        r: 2,
    };
    assert!(!run_automaton(&a, &branching).unwrap().accepted);
    let wrong_k = TreeCode {
        nodes: vec![node(&Letter::new(3, &[], &[], &[]), &[])],
        root: 0,
        k: 3,
        r: 2,
    };
    assert!(matches!(
        run_automaton(&a, &wrong_k),
        Err(Error::AlphabetMismatch(_))
    ));
}

#[test]
fn no_accepting_state_rejects_everything() {
    let mut a = chain_automaton();
    a.accepting.clear();
    let letters = automaton_letters(&a);
    for code in enumerate_codes(&letters, 2, 2, 2) {
        if check_coherence(&code).is_ok() {
            assert!(!run_automaton(&a, &code).unwrap().accepted);
        }
    }
}

// ---------------------------------------------------------------------------
// backwardMap
// ---------------------------------------------------------------------------

#[test]
fn single_leaf_automaton_detects_an_r_fact() {
    let sigma = Arc::new(
        Schema::new()
            .with("R", 2, PredTag::Base)
            .with("S", 1, PredTag::Base),
    );
    let a = TreeAutomaton {
        sigma: sigma.clone(),
        k: 2,
        r: 2,
        states: vec!["q".into()],
        accepting: vec![0],
        leaf_transitions: vec![(Letter::new(2, &[], &[("R".into(), vec![1, 2])], &[]), 0)],
        internal_transitions: vec![],
    };
    let ea = backward_map(&a).unwrap();
    let with_r = instance(&sigma, &[atom("R", &["a", "b"])]);
    let only_s = instance(&sigma, &[atom("S", &["a"])]);
    assert!(goal_holds(&ea, &with_r).unwrap());
    assert!(!goal_holds(&ea, &only_s).unwrap());
}

#[test]
fn empty_accepting_set_compiles_to_a_goalless_program() {
    let mut a = chain_automaton();
    a.accepting.clear();
    let ea = backward_map(&a).unwrap();
    assert!(ea.rules.iter().all(|r| r.head.pred != "Goal"));
    let m = instance(&rs_schema(), &[atom("R", &["a", "b"])]);
    assert!(!goal_holds(&ea, &m).unwrap());
}

#[test]
fn chain_automaton_backward_map_finds_long_paths() {
    let a = chain_automaton();
    let ea = backward_map(&a).unwrap();
    let schema = rs_schema();
    let path = instance(
        &schema,
        &[
            atom("R", &["a", "b"]),
            atom("R", &["b", "c"]),
            atom("R", &["c", "d"]),
        ],
    );
    let empty = Instance::new(schema.clone());
    assert!(goal_holds(&ea, &path).unwrap());
    assert!(!goal_holds(&ea, &empty).unwrap());
    assert_eq!(goal_holds(&ea, &path).unwrap(), automaton_hits(&a, &path));
}

/// Backward-mapping contract on a fuzz corpus: the program agrees with a
/// configuration-reachability oracle, every exhaustively enumerated accepted
/// code (depth bounded by the state count) certifies the program, and the
/// program is preserved under homomorphisms.
#[test]
fn fuzzed_automata_agree_with_the_code_oracle() {
    let top = {
        let sigma = Arc::new(
            Schema::new()
                .with("R", 2, PredTag::Base)
                .with("S", 1, PredTag::Base),
        );
        instance(&sigma, &[atom("R", &["c", "c"]), atom("S", &["c"])])
    };
    let mut nonempty_checked = 0;
    for seed in 0..110 {
        let mut r = rng(seed);
        let a = rand_automaton(&mut r);
        let ea = backward_map(&a).unwrap();
        let letters = automaton_letters(&a);
        let levels = a.states.len().min(3);
        let mut accepted_decodes: Vec<Instance> = Vec::new();
        if !letters.is_empty() {
            for code in enumerate_codes(&letters, a.k, a.r, levels) {
                if check_coherence(&code).is_err() {
                    continue;
                }
                if run_automaton(&a, &code).unwrap().accepted {
                    let d = decode(&code, &a.sigma).unwrap();
                    if !accepted_decodes
                        .iter()
                        .any(|x| x.sorted_facts() == d.sorted_facts())
                    {
                        accepted_decodes.push(d);
                    }
                }
            }
        }
        let ea_top = goal_holds(&ea, &top).unwrap();
        for iseed in 0..3 {
            let mut ir = rng(seed * 1000 + iseed);
            let m = rand_instance(&a.sigma, &mut ir, 4, 6);
            let holds = goal_holds(&ea, &m).unwrap();
            // Exact agreement with the configuration-reachability oracle.
            assert_eq!(
                holds,
                automaton_hits(&a, &m),
                "oracle mismatch for seed {seed}/{iseed}"
            );
            // Any enumerated accepted code that maps into m certifies E_A.
            let enum_found = !m.is_empty()
                && accepted_decodes.iter().any(|d| maps_into(d, &m));
            if enum_found {
                assert!(holds, "code witness without E_A for seed {seed}/{iseed}");
            }
            // Homomorphism closure: everything maps into the top instance.
            if holds && !m.is_empty() {
                assert!(ea_top, "hom-closure violated for seed {seed}");
            }
            if !m.is_empty() {
                nonempty_checked += 1;
            }
        }
    }
    assert!(nonempty_checked >= 100);
}

// ---------------------------------------------------------------------------
// approxAutomaton
// ---------------------------------------------------------------------------

/// Transitive-closure style program: Goal holds when an R-path exists.
fn path_program() -> DatalogProgram {
    let schema = Arc::new(
        Schema::new()
            .with("R", 2, PredTag::Base)
            .with("P", 2, PredTag::Idb)
            .with("Goal", 0, PredTag::Idb),
    );
    DatalogProgram::new(
        schema.clone(),
        vec![
            rule(atom("P", &["X", "Y"]), &[atom("R", &["X", "Y"])]),
            rule(
                atom("P", &["X", "Y"]),
                &[atom("R", &["X", "Z"]), atom("P", &["Z", "Y"])],
            ),
            rule(atom("Goal", &[]), &[atom("P", &["X", "Y"])]),
        ],
        "Goal".to_string(),
    )
    .unwrap()
}

#[test]
fn canonical_codes_of_sampled_approximations_are_accepted() {
    let p = path_program();
    let a = approx_automaton(&p).unwrap();
    let unfolded = unfold_approximations(&p, 21, 25).unwrap();
    let mut checked = 0;
    for approx in unfolded.approximations.iter().take(20) {
        let db = canondb(&approx.cq);
        let code = encode(&db, &approx.decomposition, a.k, a.r).unwrap();
        let run = run_automaton(&a, &code).unwrap();
        assert!(
            run.accepted,
            "canonical code rejected for approximation {:?}",
            approx.cq
        );
        checked += 1;
    }
    assert!(checked >= 20, "only {checked} approximations sampled");
}

#[test]
fn mutated_leaf_predicate_is_rejected() {
    let p = path_program();
    let a = approx_automaton(&p).unwrap();
    let unfolded = unfold_approximations(&p, 3, 10).unwrap();
    let approx = &unfolded.approximations[1]; // a two-edge chain
    let db = canondb(&approx.cq);
    let mut code = encode(&db, &approx.decomposition, a.k, a.r).unwrap();
    assert!(run_automaton(&a, &code).unwrap().accepted);
    let mut mutated = false;
    for n in &mut code.nodes {
        if n.children.is_empty() {
            for l in &mut n.labels {
                if let CodeLabel::Fact(pred, _) = l {
                    if pred == "R" {
                        *pred = "Rx".to_string();
                        mutated = true;
                    }
                }
            }
            if mutated {
                break;
            }
        }
    }
    assert!(mutated);
    assert!(!run_automaton(&a, &code).unwrap().accepted);
}

#[test]
fn nonrecursive_single_rule_accepts_exactly_one_code() {
    let schema = Arc::new(
        Schema::new()
            .with("E", 2, PredTag::Base)
            .with("Goal", 0, PredTag::Idb),
    );
    let p = DatalogProgram::new(
        schema.clone(),
        vec![rule(atom("Goal", &[]), &[atom("E", &["X", "Y"])])],
        "Goal".to_string(),
    )
    .unwrap();
    let a = approx_automaton(&p).unwrap();
    let letters = automaton_letters(&a);
    let mut accepted = Vec::new();
    for code in enumerate_codes(&letters, a.k, a.r, 2) {
        if check_coherence(&code).is_err() {
            continue;
        }
        if run_automaton(&a, &code).unwrap().accepted {
            accepted.push(code);
        }
    }
    assert_eq!(accepted.len(), 1);
    let d = decode(&accepted[0], &a.sigma).unwrap();
    let expected = instance(&a.sigma, &[atom("E", &["u", "v"])]);
    assert!(isomorphic(&d, &expected));
}
