//! Datalog programs: semi-naive evaluation, MDL/FGDL/EC classification,
//! Head-Unconstrained normalization, CQ approximations with canonical tree
//! decompositions, and the rules-into-TGDs transformation.

use crate::ast::{Atom, Instance, PredTag, Schema, Substitution, Term};
use crate::decomp::{TdNode, TreeDecomposition};
use crate::error::{Error, Result};
use crate::hom::{find_homomorphisms, find_homomorphisms_multi};
use crate::query::{canondb_with_sub, normalize_cq, ConjunctiveQuery, UnionQuery};
use crate::tgd::Tgd;
use indexmap::{IndexMap, IndexSet};
use serde::Serialize;
use std::fmt;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DatalogRule {
    pub head: Atom,
    pub body: Vec<Atom>,
}

impl fmt::Display for DatalogRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} :- ", self.head)?;
        for (i, a) in self.body.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

/// (Π, Goal): positive rules over an IDB/EDB-partitioned schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DatalogProgram {
    pub rules: Vec<DatalogRule>,
    pub goal: String,
    #[serde(skip)]
    pub schema: Arc<Schema>,
}

impl DatalogProgram {
    pub fn new(schema: Arc<Schema>, rules: Vec<DatalogRule>, goal: String) -> Result<DatalogProgram> {
        if schema.tag(&goal) != Some(PredTag::Idb) {
            return Err(Error::Other(format!("goal {goal} is not a declared IDB")));
        }
        for r in &rules {
            schema.check_atom(&r.head)?;
            for a in &r.body {
                schema.check_atom(a)?;
            }
            if schema.tag(&r.head.pred) != Some(PredTag::Idb) {
                return Err(Error::Other(format!(
                    "rule head {} is not an IDB predicate",
                    r.head.pred
                )));
            }
            let body_vars: IndexSet<&str> = r.body.iter().flat_map(|a| a.vars()).collect();
            for v in r.head.vars() {
                if !body_vars.contains(v) {
                    return Err(Error::UnsafeRule { var: v.to_string() });
                }
            }
        }
        Ok(DatalogProgram {
            rules,
            goal,
            schema,
        })
    }

    pub fn is_idb(&self, pred: &str) -> bool {
        self.schema.tag(pred) == Some(PredTag::Idb)
    }

    pub fn goal_arity(&self) -> usize {
        self.schema.arity(&self.goal).unwrap_or(0)
    }

    pub fn rules_for<'a>(&'a self, pred: &'a str) -> impl Iterator<Item = (usize, &'a DatalogRule)> + 'a {
        self.rules
            .iter()
            .enumerate()
            .filter(move |(_, r)| r.head.pred == pred)
    }
}

/// Least-fixpoint semantics via semi-naive iteration: the input plus all
/// derived IDB facts.
pub fn eval_datalog(p: &DatalogProgram, input: &Instance) -> Result<Instance> {
    let schema = Arc::new(input.schema.merged(&p.schema)?);
    let mut full = Instance::new(schema.clone());
    for f in input.facts() {
        full.insert(f.clone())?;
    }

    // Round 0: naive pass so rules with EDB-only bodies fire once.
    let mut derived: Vec<Atom> = Vec::new();
    for r in &p.rules {
        for h in find_homomorphisms(&r.body, &full, &Substitution::new(), None)? {
            derived.push(r.head.apply(&h));
        }
    }
    let mut delta = Instance::new(schema.clone());
    for f in derived {
        if full.insert(f.clone())? {
            delta.insert(f)?;
        }
    }

    while !delta.is_empty() {
        let mut round: Vec<Atom> = Vec::new();
        for r in &p.rules {
            for (j, b) in r.body.iter().enumerate() {
                if !p.is_idb(&b.pred) {
                    continue;
                }
                let targets: Vec<&Instance> = r
                    .body
                    .iter()
                    .enumerate()
                    .map(|(i, _)| if i == j { &delta } else { &full })
                    .collect();
                for h in find_homomorphisms_multi(&r.body, &targets, &Substitution::new(), None)? {
                    round.push(r.head.apply(&h));
                }
            }
        }
        let mut next = Instance::new(schema.clone());
        for f in round {
            if full.insert(f.clone())? {
                next.insert(f)?;
            }
        }
        delta = next;
    }
    Ok(full)
}

/// Goal relation of the least fixpoint.
pub fn eval_goal(p: &DatalogProgram, input: &Instance) -> Result<Vec<Vec<Term>>> {
    let fix = eval_datalog(p, input)?;
    Ok(fix.facts_of(&p.goal).map(|f| f.args.clone()).collect())
}

pub fn goal_holds(p: &DatalogProgram, input: &Instance) -> Result<bool> {
    Ok(!eval_goal(p, input)?.is_empty())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DatalogClasses {
    /// All IDB predicates unary (arity ≤ 1).
    pub mdl: bool,
    /// Every rule has an EDB body atom containing all head variables;
    /// MDL programs are reported FGDL by the paper's convention.
    pub fgdl: bool,
    /// Head variables connected in each rule's extensional Gaifman graph.
    pub ec: bool,
    /// (flag, rule index) pairs naming a violating rule per negative flag.
    pub violations: Vec<(String, usize)>,
}

pub fn classify_datalog(p: &DatalogProgram) -> DatalogClasses {
    let mut violations = Vec::new();

    let mdl = p
        .schema
        .preds_tagged(PredTag::Idb)
        .all(|(_, arity)| arity <= 1);

    let fgdl_syntactic = match p.rules.iter().position(|r| {
        let head_vars: IndexSet<&str> = r.head.vars().collect();
        !r.body.iter().any(|a| {
            !p.is_idb(&a.pred) && {
                let vs: IndexSet<&str> = a.vars().collect();
                head_vars.iter().all(|v| vs.contains(v))
            }
        }) && !head_vars.is_empty()
    }) {
        Some(i) => {
            violations.push(("fgdl".into(), i));
            false
        }
        None => true,
    };
    let fgdl = fgdl_syntactic || mdl;

    let ec = match p.rules.iter().position(|r| !rule_is_ec(p, r)) {
        Some(i) => {
            violations.push(("ec".into(), i));
            false
        }
        None => true,
    };

    if !mdl {
        violations.push(("mdl".into(), usize::MAX));
    }

    DatalogClasses {
        mdl,
        fgdl,
        ec,
        violations,
    }
}

fn rule_is_ec(p: &DatalogProgram, r: &DatalogRule) -> bool {
    let head_vars: Vec<&str> = {
        let s: IndexSet<&str> = r.head.vars().collect();
        s.into_iter().collect()
    };
    if head_vars.len() <= 1 {
        return true;
    }
    // Union-find over body variables with edges from EDB atoms.
    let vars: Vec<&str> = {
        let s: IndexSet<&str> = r.body.iter().flat_map(|a| a.vars()).collect();
        s.into_iter().collect()
    };
    let idx = |v: &str| vars.iter().position(|w| *w == v).unwrap();
    let mut parent: Vec<usize> = (0..vars.len()).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        if parent[x] != x {
            let r = find(parent, parent[x]);
            parent[x] = r;
        }
        parent[x]
    }
    for a in &r.body {
        if p.is_idb(&a.pred) {
            continue;
        }
        let avs: Vec<&str> = a.vars().collect();
        for w in avs.windows(2) {
            let (x, y) = (find(&mut parent, idx(w[0])), find(&mut parent, idx(w[1])));
            parent[x] = y;
        }
    }
    let root0 = find(&mut parent, idx(head_vars[0]));
    head_vars
        .iter()
        .all(|v| find(&mut parent, idx(v)) == root0)
}

/// Rewrites `p` into Head-Unconstrained form: no repeated variables in
/// non-goal rule heads. Each IDB P gets variants P per equality pattern of
/// positions; body atoms fan out over the variants of their predicate.
pub fn hu_normalize(p: &DatalogProgram) -> Result<DatalogProgram> {
    let has_const = |a: &Atom| a.args.iter().any(|t| !matches!(t, Term::Var(_)));
    if p.rules
        .iter()
        .any(|r| has_const(&r.head) || r.body.iter().any(&has_const))
    {
        return Err(Error::Other(
            "HU normalization requires constant-free rules".into(),
        ));
    }

    // Pattern of an atom: position → class id by first occurrence of the var.
    let pattern_of = |a: &Atom| -> Vec<usize> {
        let mut classes: Vec<&str> = Vec::new();
        a.args
            .iter()
            .map(|t| {
                let v = t.as_var().unwrap();
                match classes.iter().position(|c| *c == v) {
                    Some(i) => i,
                    None => {
                        classes.push(v);
                        classes.len() - 1
                    }
                }
            })
            .collect()
    };
    let identity = |n: usize| (0..n).collect::<Vec<usize>>();
    let is_identity = |pat: &[usize]| pat.iter().enumerate().all(|(i, c)| i == *c);
    let variant_name = |pred: &str, pat: &[usize]| -> String {
        if is_identity(pat) {
            pred.to_string()
        } else {
            let digits: String = pat.iter().map(|c| c.to_string()).collect();
            format!("{pred}_hu{digits}")
        }
    };

    // Collect the variants needed per IDB predicate.
    let mut variants: IndexMap<String, IndexSet<Vec<usize>>> = IndexMap::new();
    for (name, arity) in p.schema.preds_tagged(PredTag::Idb) {
        variants
            .entry(name.to_string())
            .or_default()
            .insert(identity(arity));
    }
    for r in &p.rules {
        if r.head.pred != p.goal {
            variants
                .entry(r.head.pred.clone())
                .or_default()
                .insert(pattern_of(&r.head));
        }
    }

    let mut schema = Schema::new();
    for (name, arity, tag) in p.schema.preds() {
        if tag != PredTag::Idb {
            schema.declare(name, arity, tag);
        }
    }
    for (pred, pats) in &variants {
        for pat in pats {
            let classes = pat.iter().max().map_or(0, |m| m + 1);
            schema.declare(variant_name(pred, pat), classes, PredTag::Idb);
        }
    }
    let schema = Arc::new(schema);

    // Representative args of an atom under a pattern; None if the atom's
    // terms cannot realize the pattern without unification (callers unify).
    let reps = |a: &Atom, pat: &[usize]| -> Vec<Term> {
        let classes = pat.iter().max().map_or(0, |m| m + 1);
        (0..classes)
            .map(|c| a.args[pat.iter().position(|x| *x == c).unwrap()].clone())
            .collect()
    };

    let mut rules: Vec<DatalogRule> = Vec::new();
    for r in &p.rules {
        // New head: the rule's own pattern variant with distinct vars.
        let head = if r.head.pred == p.goal {
            r.head.clone()
        } else {
            let pat = pattern_of(&r.head);
            Atom::new(variant_name(&r.head.pred, &pat), reps(&r.head, &pat))
        };
        // Fan body IDB atoms out over variants; realizing a variant with
        // merged classes unifies the corresponding variables rule-wide.
        let mut partial: Vec<(Vec<Atom>, Substitution)> =
            vec![(Vec::new(), Substitution::new())];
        for b in &r.body {
            let mut next = Vec::new();
            if !p.is_idb(&b.pred) {
                for (atoms, s) in &partial {
                    let mut atoms = atoms.clone();
                    atoms.push(b.clone());
                    next.push((atoms, s.clone()));
                }
            } else {
                for pat in &variants[&b.pred] {
                    for (atoms, s) in &partial {
                        let mut s = s.clone();
                        let mut ok = true;
                        // Unify positions that share a class under pat.
                        let classes = pat.iter().max().map_or(0, |m| m + 1);
                        for c in 0..classes {
                            let pos: Vec<usize> = (0..pat.len())
                                .filter(|i| pat[*i] == c)
                                .collect();
                            let rep = resolve(&s, &b.args[pos[0]]);
                            for &i in &pos[1..] {
                                let t = resolve(&s, &b.args[i]);
                                if t == rep {
                                    continue;
                                }
                                match t {
                                    Term::Var(v) => {
                                        s.bind(v, rep.clone());
                                    }
                                    _ => match &rep {
                                        Term::Var(v) => {
                                            let v = v.clone();
                                            s.bind(v, t.clone());
                                        }
                                        _ => {
                                            ok = false;
                                            break;
                                        }
                                    },
                                }
                            }
                            if !ok {
                                break;
                            }
                        }
                        if !ok {
                            continue;
                        }
                        let mut atoms = atoms.clone();
                        atoms.push(Atom::new(variant_name(&b.pred, pat), reps(b, pat)));
                        next.push((atoms, s));
                    }
                }
            }
            partial = next;
        }
        for (body, s) in partial {
            let s = deep_resolve(&s);
            rules.push(DatalogRule {
                head: head.apply(&s),
                body: body.iter().map(|a| a.apply(&s)).collect(),
            });
        }
    }
    DatalogProgram::new(schema, rules, p.goal.clone())
}

fn resolve(s: &Substitution, t: &Term) -> Term {
    let mut cur = t.clone();
    let mut fuel = 64;
    while let Term::Var(v) = &cur {
        match s.get(v) {
            Some(next) if next != &cur && fuel > 0 => {
                cur = next.clone();
                fuel -= 1;
            }
            _ => break,
        }
    }
    cur
}

/// Closes a chain-shaped unifier so single application suffices.
fn deep_resolve(s: &Substitution) -> Substitution {
    let mut out = Substitution::new();
    for (v, _) in s.iter() {
        out.bind(v.to_string(), resolve(s, &Term::var(v)));
    }
    out
}

/// A node of a CQ approximation tree: internal nodes carry IDB atoms and the
/// rule applied there; leaves carry EDB atoms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ApproxNode {
    pub label: Atom,
    pub rule: Option<usize>,
    pub children: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ApproximationTree {
    pub nodes: Vec<ApproxNode>,
    pub root: usize,
}

impl ApproximationTree {
    pub fn leaves(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].children.is_empty() && self.nodes[i].rule.is_none())
            .collect()
    }

    /// Height counted in rule applications along a root-to-leaf path.
    pub fn height(&self) -> usize {
        fn go(t: &ApproximationTree, v: usize) -> usize {
            let n = &t.nodes[v];
            if n.rule.is_none() {
                return 0;
            }
            1 + n.children.iter().map(|&c| go(t, c)).max().unwrap_or(0)
        }
        go(self, self.root)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Approximation {
    pub cq: ConjunctiveQuery,
    pub tree: ApproximationTree,
    pub decomposition: TreeDecomposition,
}

#[derive(Debug, Clone, Serialize)]
pub struct UnfoldResult {
    /// The HU-normalized program the trees refer to.
    pub program: DatalogProgram,
    pub approximations: Vec<Approximation>,
}

/// Enumerates CQ approximations up to `max_depth` IDB rule applications
/// beneath the goal rule (the goal application itself is free, so the n-th
/// member of a linear recursion shows up at depth n) and
/// `max_leaves` leaf atoms, in increasing-depth order, deduplicated by
/// `normalize_cq` equality. Each comes with its approximation tree and the
/// canonical decomposition (one bag per node: the rule instance's variables,
/// frozen to the canonical database's constants).
pub fn unfold_approximations(
    p: &DatalogProgram,
    max_depth: usize,
    max_leaves: usize,
) -> Result<UnfoldResult> {
    let p = hu_normalize(p)?;
    let mut trees: Vec<ApproximationTree> = Vec::new();
    for (ridx, _) in p.rules_for(&p.goal) {
        let mut counter = 0usize;
        grow_goal_trees(&p, ridx, max_depth, max_leaves, &mut counter, &mut trees)?;
    }
    trees.sort_by_key(ApproximationTree::height);

    let mut seen: Vec<ConjunctiveQuery> = Vec::new();
    let mut out: Vec<Approximation> = Vec::new();
    for tree in trees {
        let cq = tree_cq(&p, &tree)?;
        let norm = normalize_cq(&cq);
        if seen.contains(&norm) {
            continue;
        }
        seen.push(norm);
        let decomposition = canonical_decomposition(&tree, &cq);
        out.push(Approximation {
            cq,
            tree,
            decomposition,
        });
    }
    Ok(UnfoldResult {
        program: p,
        approximations: out,
    })
}

/// All trees rooted at goal rule `ridx`.
fn grow_goal_trees(
    p: &DatalogProgram,
    ridx: usize,
    max_depth: usize,
    max_leaves: usize,
    counter: &mut usize,
    out: &mut Vec<ApproximationTree>,
) -> Result<()> {
    if max_depth == 0 {
        return Ok(());
    }
    let rule = &p.rules[ridx];
    let mut s = Substitution::new();
    let vars: IndexSet<&str> = rule
        .head
        .vars()
        .chain(rule.body.iter().flat_map(|a| a.vars()))
        .collect();
    for v in vars {
        s.bind(v.to_string(), Term::var(format!("u{counter}")));
        *counter += 1;
    }
    let head = rule.head.apply(&s);
    let body: Vec<Atom> = rule.body.iter().map(|a| a.apply(&s)).collect();
    for combo in expand_body(p, &body, max_depth, max_leaves, counter)? {
        let mut nodes = vec![ApproxNode {
            label: head.clone(),
            rule: Some(ridx),
            children: vec![],
        }];
        let mut children = Vec::new();
        for frag in combo {
            let base = nodes.len();
            children.push(base + frag.root);
            for n in frag.nodes {
                nodes.push(ApproxNode {
                    label: n.label,
                    rule: n.rule,
                    children: n.children.iter().map(|c| c + base).collect(),
                });
            }
        }
        nodes[0].children = children;
        let tree = ApproximationTree { nodes, root: 0 };
        if tree.leaves().len() <= max_leaves {
            out.push(tree);
        }
    }
    Ok(())
}

/// All ways to expand a body's atoms into subtree fragments (EDB atoms are
/// single leaves; IDB atoms unfold through some rule within the budget).
fn expand_body(
    p: &DatalogProgram,
    body: &[Atom],
    depth: usize,
    max_leaves: usize,
    counter: &mut usize,
) -> Result<Vec<Vec<ApproximationTree>>> {
    let mut combos: Vec<Vec<ApproximationTree>> = vec![Vec::new()];
    for b in body {
        let options: Vec<ApproximationTree> = if p.is_idb(&b.pred) {
            expand_idb_atom(p, b, depth, max_leaves, counter)?
        } else {
            vec![ApproximationTree {
                nodes: vec![ApproxNode {
                    label: b.clone(),
                    rule: None,
                    children: vec![],
                }],
                root: 0,
            }]
        };
        let mut next = Vec::new();
        for combo in &combos {
            for opt in &options {
                let mut c = combo.clone();
                c.push(opt.clone());
                let leaves: usize = c.iter().map(|t| t.leaves().len()).sum();
                if leaves <= max_leaves {
                    next.push(c);
                }
            }
        }
        combos = next;
    }
    Ok(combos)
}

fn expand_idb_atom(
    p: &DatalogProgram,
    atom: &Atom,
    depth: usize,
    max_leaves: usize,
    counter: &mut usize,
) -> Result<Vec<ApproximationTree>> {
    let mut out = Vec::new();
    if depth == 0 {
        return Ok(out);
    }
    let rule_ids: Vec<usize> = p.rules_for(&atom.pred).map(|(i, _)| i).collect();
    for ridx in rule_ids {
        let rule = &p.rules[ridx];
        // HU form: rule head vars are distinct, so unification is a plain
        // head-var → argument substitution; other rule vars go fresh.
        let mut s = Substitution::new();
        for (hv, arg) in rule.head.args.iter().zip(&atom.args) {
            s.bind(hv.as_var().expect("HU heads are variable-only").to_string(), arg.clone());
        }
        for a in &rule.body {
            for v in a.vars() {
                if s.get(v).is_none() {
                    s.bind(v.to_string(), Term::var(format!("u{counter}")));
                    *counter += 1;
                }
            }
        }
        let body: Vec<Atom> = rule.body.iter().map(|a| a.apply(&s)).collect();
        for combo in expand_body(p, &body, depth - 1, max_leaves, counter)? {
            let mut nodes = vec![ApproxNode {
                label: atom.clone(),
                rule: Some(ridx),
                children: vec![],
            }];
            let mut children = Vec::new();
            for frag in combo {
                let base = nodes.len();
                children.push(base + frag.root);
                for n in frag.nodes {
                    nodes.push(ApproxNode {
                        label: n.label,
                        rule: n.rule,
                        children: n.children.iter().map(|c| c + base).collect(),
                    });
                }
            }
            nodes[0].children = children;
            out.push(ApproximationTree { nodes, root: 0 });
        }
    }
    Ok(out)
}

/// The CQ of a tree: leaves conjoined, head = root label's variable tuple.
fn tree_cq(p: &DatalogProgram, t: &ApproximationTree) -> Result<ConjunctiveQuery> {
    let head: Vec<String> = t.nodes[t.root]
        .label
        .args
        .iter()
        .map(|a| a.as_var().expect("approximation labels are variable-only").to_string())
        .collect();
    let body: Vec<Atom> = t
        .leaves()
        .into_iter()
        .map(|i| t.nodes[i].label.clone())
        .collect();
    ConjunctiveQuery::new(p.schema.clone(), head, body)
}

/// One bag per tree node: the node's rule-instance variables (its label plus
/// its children's labels), frozen to canonical-database constants.
fn canonical_decomposition(t: &ApproximationTree, cq: &ConjunctiveQuery) -> TreeDecomposition {
    let (_, _, sub) = canondb_with_sub(cq);
    let freeze = |v: &str| {
        sub.get(v)
            .cloned()
            // Variables that never reach a leaf cannot occur; keep a frozen
            // stand-in for robustness.
            .unwrap_or_else(|| Term::cst(format!("c_{v}")))
    };
    let mut nodes = Vec::with_capacity(t.nodes.len());
    for n in &t.nodes {
        let mut bag: Vec<Term> = Vec::new();
        let mut push = |a: &Atom| {
            for v in a.vars() {
                let f = freeze(v);
                if !bag.contains(&f) {
                    bag.push(f);
                }
            }
        };
        push(&n.label);
        for &c in &n.children {
            push(&t.nodes[c].label);
        }
        nodes.push(TdNode {
            bag,
            children: n.children.clone(),
        });
    }
    TreeDecomposition {
        nodes,
        root: t.root,
    }
}

/// Reads each rule as a full TGD; together with the atomic goal query this
/// reduces Datalog entailment to chase-based certain answers.
pub fn datalog_to_tgds(p: &DatalogProgram) -> Result<(Vec<Tgd>, UnionQuery)> {
    let mut tgds = Vec::new();
    for r in &p.rules {
        tgds.push(Tgd::new(
            p.schema.clone(),
            r.body.clone(),
            vec![r.head.clone()],
        )?);
    }
    let arity = p.goal_arity();
    let head: Vec<String> = (0..arity).map(|i| format!("x{i}")).collect();
    let goal_atom = Atom::new(
        p.goal.clone(),
        head.iter().map(|v| Term::var(v.clone())).collect(),
    );
    let q = ConjunctiveQuery::new(p.schema.clone(), head, vec![goal_atom])?;
    Ok((tgds, UnionQuery::single(q)))
}
