//! Width-k tree codes: coherence checking, decode/encode against tree
//! decompositions, bottom-up tree automata over code alphabets, the
//! automaton-to-Datalog backward mapping, and the approximation automaton of
//! a Datalog program.
//!
//! A code node carries unary predicates over local names 1..k: `T^=_{l,l'}`
//! (which names denote the same element), `T^R_{n̄}` (which tuples of local
//! elements satisfy R), and `T_g` (how the node's elements relate to its
//! parent: g maps parent-local names to child-local names).

use crate::ast::{Atom, Instance, PredTag, Schema, Term};
use crate::datalog::{hu_normalize, DatalogProgram, DatalogRule};
use crate::decomp::TreeDecomposition;
use crate::error::{Error, Result};
use indexmap::{IndexMap, IndexSet};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CodeLabel {
    /// T^=_{l,l'}: local names l and l' code the same element.
    Eq(usize, usize),
    /// T^R_{n̄}: the tuple of local elements n̄ satisfies R.
    Fact(String, Vec<usize>),
    /// T_g as sorted (parent name, child name) pairs; partial injective.
    Map(Vec<(usize, usize)>),
}

impl fmt::Display for CodeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CodeLabel::Eq(l, m) => write!(f, "T=({l},{m})"),
            CodeLabel::Fact(p, ns) => {
                write!(f, "T{p}(")?;
                for (i, n) in ns.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{n}")?;
                }
                write!(f, ")")
            }
            CodeLabel::Map(g) => {
                write!(f, "Tg{{")?;
                for (i, (a, b)) in g.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{a}>{b}")?;
                }
                write!(f, "}}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeNode {
    pub labels: Vec<CodeLabel>,
    pub children: Vec<usize>,
}

/// A rooted ordered labelled tree over the code alphabet for width `k` and
/// branching `r` (internal nodes have exactly `r` ordered children).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeCode {
    pub nodes: Vec<CodeNode>,
    pub root: usize,
    pub k: usize,
    pub r: usize,
}

impl TreeCode {
    pub fn preorder(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![self.root];
        while let Some(v) = stack.pop() {
            out.push(v);
            for &c in self.nodes[v].children.iter().rev() {
                stack.push(c);
            }
        }
        out
    }

    /// parent_map()[v] is v's parent, None at the root.
    pub fn parent_map(&self) -> Vec<Option<usize>> {
        let mut parent = vec![None; self.nodes.len()];
        for (v, n) in self.nodes.iter().enumerate() {
            for &c in &n.children {
                parent[c] = Some(v);
            }
        }
        parent
    }

    /// Structural validity: a connected tree, internal nodes with exactly `r`
    /// children, local names within 1..k, maps functional and injective.
    pub fn validate_shape(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Other(msg));
        if self.root >= self.nodes.len() {
            return bad("root index out of range".into());
        }
        let mut indeg = vec![0usize; self.nodes.len()];
        for n in &self.nodes {
            for &c in &n.children {
                if c >= self.nodes.len() {
                    return bad("child index out of range".into());
                }
                indeg[c] += 1;
            }
        }
        for (v, d) in indeg.iter().enumerate() {
            let expected = usize::from(v != self.root);
            if *d != expected {
                return bad(format!("node {v} has in-degree {d}"));
            }
        }
        if self.preorder().len() != self.nodes.len() {
            return bad("tree is not connected".into());
        }
        for (v, n) in self.nodes.iter().enumerate() {
            if !n.children.is_empty() && n.children.len() != self.r {
                return bad(format!(
                    "internal node {v} has {} children, branching width is {}",
                    n.children.len(),
                    self.r
                ));
            }
            for l in &n.labels {
                match l {
                    CodeLabel::Eq(a, b) => {
                        if !(1..=self.k).contains(a) || !(1..=self.k).contains(b) {
                            return bad(format!("equality name out of range at node {v}"));
                        }
                    }
                    CodeLabel::Fact(_, ns) => {
                        if ns.iter().any(|x| !(1..=self.k).contains(x)) {
                            return bad(format!("fact name out of range at node {v}"));
                        }
                    }
                    CodeLabel::Map(g) => {
                        let dom: IndexSet<usize> = g.iter().map(|(a, _)| *a).collect();
                        let rng: IndexSet<usize> = g.iter().map(|(_, b)| *b).collect();
                        if dom.len() != g.len() || rng.len() != g.len() {
                            return bad(format!("map at node {v} is not injective"));
                        }
                        if g.iter()
                            .any(|(a, b)| !(1..=self.k).contains(a) || !(1..=self.k).contains(b))
                        {
                            return bad(format!("map name out of range at node {v}"));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// A node letter in normalized form: equality pairs closed under the
/// equivalence axioms, facts closed under substitution of equal names, and
/// the unique parent map. Two letters are the same alphabet symbol iff the
/// structs are equal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Letter {
    pub eqs: Vec<(usize, usize)>,
    pub facts: Vec<(String, Vec<usize>)>,
    pub g: Vec<(usize, usize)>,
}

/// Union-find over local names 1..k (index 0 unused).
struct NameUf {
    parent: Vec<usize>,
}

impl NameUf {
    fn new(n: usize) -> NameUf {
        NameUf {
            parent: (0..=n).collect(),
        }
    }
    fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            let r = self.find(self.parent[x]);
            self.parent[x] = r;
        }
        self.parent[x]
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let lo = ra.min(rb);
            let hi = ra.max(rb);
            self.parent[hi] = lo;
        }
    }
}

impl Letter {
    /// Builds the normalized letter: closes `eqs` into an equivalence
    /// relation on 1..k and closes `facts` under substitution of equal names.
    pub fn new(
        k: usize,
        eqs: &[(usize, usize)],
        facts: &[(String, Vec<usize>)],
        g: &[(usize, usize)],
    ) -> Letter {
        let mut uf = NameUf::new(k);
        for (a, b) in eqs {
            uf.union(*a, *b);
        }
        let mut classes: IndexMap<usize, Vec<usize>> = IndexMap::new();
        for l in 1..=k {
            classes.entry(uf.find(l)).or_default().push(l);
        }
        let mut out_eqs: Vec<(usize, usize)> = Vec::new();
        for members in classes.values() {
            for &a in members {
                for &b in members {
                    out_eqs.push((a, b));
                }
            }
        }
        out_eqs.sort_unstable();
        out_eqs.dedup();

        // Fact closure: every position ranges over its name's whole class.
        let mut out_facts: IndexSet<(String, Vec<usize>)> = IndexSet::new();
        for (pred, ns) in facts {
            let mut combos: Vec<Vec<usize>> = vec![Vec::new()];
            for n in ns {
                let members = &classes[&uf.find(*n)];
                let mut next = Vec::new();
                for c in &combos {
                    for &m in members {
                        let mut c = c.clone();
                        c.push(m);
                        next.push(c);
                    }
                }
                combos = next;
            }
            for c in combos {
                out_facts.insert((pred.clone(), c));
            }
        }
        let mut out_facts: Vec<(String, Vec<usize>)> = out_facts.into_iter().collect();
        out_facts.sort();

        let mut g: Vec<(usize, usize)> = g.to_vec();
        g.sort_unstable();
        Letter {
            eqs: out_eqs,
            facts: out_facts,
            g,
        }
    }

    pub fn labels(&self) -> Vec<CodeLabel> {
        let mut out: Vec<CodeLabel> = self
            .eqs
            .iter()
            .map(|&(a, b)| CodeLabel::Eq(a, b))
            .chain(
                self.facts
                    .iter()
                    .map(|(p, ns)| CodeLabel::Fact(p.clone(), ns.clone())),
            )
            .collect();
        out.push(CodeLabel::Map(self.g.clone()));
        out.sort();
        out
    }

    /// Representative (minimum) name of each name's equality class;
    /// `reps[l-1]` is the representative of l.
    pub fn eq_reps(&self, k: usize) -> Vec<usize> {
        let mut uf = NameUf::new(k);
        for (a, b) in &self.eqs {
            uf.union(*a, *b);
        }
        (1..=k).map(|l| uf.find(l)).collect()
    }
}

/// Checks the five coherence conditions, reporting the smallest violated
/// condition index; on success returns each node's normalized letter.
///
/// 1. equalities are reflexive, symmetric, and transitive at every node;
/// 2. facts are closed under substitution of equal local names;
/// 3. a child's map respects the parent's equalities (domain closure, and
///    equal parent names map to equal child names);
/// 4. nullary facts are uniform across all nodes;
/// 5. every node carries exactly one map.
pub fn check_coherence(t: &TreeCode) -> Result<Vec<Letter>> {
    t.validate_shape()?;
    let n = t.nodes.len();
    let mut eqs: Vec<IndexSet<(usize, usize)>> = vec![IndexSet::new(); n];
    let mut facts: Vec<IndexSet<(String, Vec<usize>)>> = vec![IndexSet::new(); n];
    let mut maps: Vec<Vec<Vec<(usize, usize)>>> = vec![Vec::new(); n];
    for (v, node) in t.nodes.iter().enumerate() {
        for l in &node.labels {
            match l {
                CodeLabel::Eq(a, b) => {
                    eqs[v].insert((*a, *b));
                }
                CodeLabel::Fact(p, ns) => {
                    facts[v].insert((p.clone(), ns.clone()));
                }
                CodeLabel::Map(g) => {
                    let mut g = g.clone();
                    g.sort_unstable();
                    maps[v].push(g);
                }
            }
        }
    }

    let mut violated: Option<u8> = None;
    let flag = |c: u8, violated: &mut Option<u8>| {
        if violated.map_or(true, |v| c < v) {
            *violated = Some(c);
        }
    };

    // Condition 1: equality axioms per node.
    'c1: for e in &eqs {
        for l in 1..=t.k {
            if !e.contains(&(l, l)) {
                flag(1, &mut violated);
                break 'c1;
            }
        }
        for &(a, b) in e.iter() {
            if !e.contains(&(b, a)) {
                flag(1, &mut violated);
                break 'c1;
            }
            for &(c, d) in e.iter() {
                if b == c && !e.contains(&(a, d)) {
                    flag(1, &mut violated);
                    break 'c1;
                }
            }
        }
    }

    // Condition 2: substitution closure of facts per node.
    'c2: for v in 0..n {
        for (pred, ns) in &facts[v] {
            for (i, l) in ns.iter().enumerate() {
                for &(a, b) in eqs[v].iter() {
                    if a == *l {
                        let mut m = ns.clone();
                        m[i] = b;
                        if !facts[v].contains(&(pred.clone(), m)) {
                            flag(2, &mut violated);
                            break 'c2;
                        }
                    }
                }
            }
        }
    }

    // Condition 3: child maps versus parent equalities.
    let parent = t.parent_map();
    'c3: for v in 0..n {
        let Some(w) = parent[v] else { continue };
        if maps[v].len() != 1 {
            continue; // condition 5 reports this node
        }
        let g = &maps[v][0];
        let img = |l: usize| g.iter().find(|(a, _)| *a == l).map(|(_, b)| *b);
        for &(a, b) in eqs[w].iter() {
            match (img(a), img(b)) {
                (Some(x), Some(y)) => {
                    if !eqs[v].contains(&(x, y)) {
                        flag(3, &mut violated);
                        break 'c3;
                    }
                }
                (None, None) => {}
                _ => {
                    flag(3, &mut violated);
                    break 'c3;
                }
            }
        }
    }

    // Condition 4: nullary facts are global.
    let nullaries: IndexSet<String> = facts
        .iter()
        .flatten()
        .filter(|(_, ns)| ns.is_empty())
        .map(|(p, _)| p.clone())
        .collect();
    'c4: for p in &nullaries {
        for f in &facts {
            if !f.contains(&(p.clone(), Vec::new())) {
                flag(4, &mut violated);
                break 'c4;
            }
        }
    }

    // Condition 5: exactly one map per node.
    if maps.iter().any(|m| m.len() != 1) {
        flag(5, &mut violated);
    }

    if let Some(c) = violated {
        return Err(Error::Incoherent(c));
    }
    let letters = (0..n)
        .map(|v| {
            let e: Vec<(usize, usize)> = eqs[v].iter().copied().collect();
            let f: Vec<(String, Vec<usize>)> = facts[v].iter().cloned().collect();
            Letter::new(t.k, &e, &f, &maps[v][0])
        })
        .collect();
    Ok(letters)
}

/// Decodes a coherent code into an instance over `sigma`: the domain is the
/// pairs (node, name) quotiented by within-node equalities and parent maps;
/// class representatives are the lexicographically least (node, name) pair,
/// rendered as the constant `t{node}_{name}`.
pub fn decode(t: &TreeCode, sigma: &Arc<Schema>) -> Result<Instance> {
    let letters = check_coherence(t)?;
    let k = t.k;
    let idx = |v: usize, l: usize| v * k + (l - 1);

    let mut uf = NameUf::new(t.nodes.len() * k);
    // NameUf is 1-based; shift pair indices by one.
    let unite = |uf: &mut NameUf, a: usize, b: usize| uf.union(a + 1, b + 1);
    for (v, letter) in letters.iter().enumerate() {
        for &(a, b) in &letter.eqs {
            unite(&mut uf, idx(v, a), idx(v, b));
        }
    }
    let parent = t.parent_map();
    for (v, letter) in letters.iter().enumerate() {
        if let Some(w) = parent[v] {
            for &(pl, cl) in &letter.g {
                unite(&mut uf, idx(w, pl), idx(v, cl));
            }
        }
    }

    // Representative = least member, which NameUf keeps as the class root.
    let term_of = |uf: &mut NameUf, v: usize, l: usize| {
        let root = uf.find(idx(v, l) + 1) - 1;
        Term::cst(format!("t{}_{}", root / k, root % k + 1))
    };

    let mut out = Instance::new(sigma.clone());
    for (v, letter) in letters.iter().enumerate() {
        for (pred, ns) in &letter.facts {
            let args: Vec<Term> = ns.iter().map(|&l| term_of(&mut uf, v, l)).collect();
            out.insert(Atom::new(pred.clone(), args))?;
        }
    }
    Ok(out)
}

/// Encodes `i` along the decomposition `td` as a width-`k` code with exact
/// branching `r`: bag positions become local names, every node is labelled
/// with all facts its bag covers, maps record shared terms with the parent,
/// and internal nodes are padded with empty-bag children up to `r`.
pub fn encode(i: &Instance, td: &TreeDecomposition, k: usize, r: usize) -> Result<TreeCode> {
    td.validate(i)?;
    let w = td.width();
    if w > k {
        return Err(Error::WidthExceeded { got: w, max: k });
    }
    if r < 2 {
        return Err(Error::Other(format!("branching width {r} is below 2")));
    }
    if let Some(v) = (0..td.nodes.len()).find(|&v| td.nodes[v].children.len() > r) {
        return Err(Error::Other(format!(
            "node {v} has {} children, branching width is {r}",
            td.nodes[v].children.len()
        )));
    }

    let nullaries: Vec<(String, Vec<usize>)> = i
        .facts()
        .filter(|f| f.args.is_empty())
        .map(|f| (f.pred.clone(), Vec::new()))
        .collect();

    let letter_for = |bag: &[Term], parent_bag: Option<&[Term]>| -> Letter {
        let name_of = |b: &[Term], t: &Term| b.iter().position(|x| x == t).map(|p| p + 1);
        let mut facts: Vec<(String, Vec<usize>)> = nullaries.clone();
        for f in i.facts() {
            if f.args.is_empty() {
                continue;
            }
            if let Some(ns) = f
                .args
                .iter()
                .map(|t| name_of(bag, t))
                .collect::<Option<Vec<usize>>>()
            {
                facts.push((f.pred.clone(), ns));
            }
        }
        let g: Vec<(usize, usize)> = match parent_bag {
            None => Vec::new(),
            Some(pb) => bag
                .iter()
                .enumerate()
                .filter_map(|(ci, t)| name_of(pb, t).map(|pl| (pl, ci + 1)))
                .collect(),
        };
        Letter::new(k, &[], &facts, &g)
    };

    let mut nodes: Vec<CodeNode> = Vec::with_capacity(td.nodes.len());
    for (v, n) in td.nodes.iter().enumerate() {
        let parent_bag = td.parent_of(v).map(|p| td.nodes[p].bag.as_slice());
        nodes.push(CodeNode {
            labels: letter_for(&n.bag, parent_bag).labels(),
            children: n.children.clone(),
        });
    }
    // Exact-branching padding with empty-bag children.
    let pad_labels = letter_for(&[], Some(&[])).labels();
    for v in 0..td.nodes.len() {
        while !nodes[v].children.is_empty() && nodes[v].children.len() < r {
            let c = nodes.len();
            nodes.push(CodeNode {
                labels: pad_labels.clone(),
                children: Vec::new(),
            });
            nodes[v].children.push(c);
        }
    }
    Ok(TreeCode {
        nodes,
        root: td.root,
        k,
        r,
    })
}

/// A bottom-up nondeterministic automaton over width-`k`, branching-`r` code
/// letters: leaves are labelled by `leaf_transitions`, internal nodes combine
/// their children's states through `internal_transitions`, and the code is
/// accepted when the root can reach an accepting state.
#[derive(Debug, Clone, Serialize)]
pub struct TreeAutomaton {
    #[serde(skip)]
    pub sigma: Arc<Schema>,
    pub k: usize,
    pub r: usize,
    pub states: Vec<String>,
    pub accepting: Vec<usize>,
    pub leaf_transitions: Vec<(Letter, usize)>,
    pub internal_transitions: Vec<(Vec<usize>, Letter, usize)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Run {
    pub accepted: bool,
    /// One accepting state assignment, indexed by code node.
    pub states: Option<Vec<usize>>,
}

pub fn run_automaton(a: &TreeAutomaton, t: &TreeCode) -> Result<Run> {
    if a.k != t.k || a.r != t.r {
        return Err(Error::AlphabetMismatch(format!(
            "automaton alphabet (k={}, r={}) vs code (k={}, r={})",
            a.k, a.r, t.k, t.r
        )));
    }
    let letters = check_coherence(t)?;

    // Children before parents: reversed preorder works for any child order.
    let mut order = t.preorder();
    order.reverse();
    let mut possible: Vec<IndexSet<usize>> = vec![IndexSet::new(); t.nodes.len()];
    let mut choice: IndexMap<(usize, usize), Vec<usize>> = IndexMap::new();
    for &v in &order {
        let node = &t.nodes[v];
        if node.children.is_empty() {
            for (l, q) in &a.leaf_transitions {
                if *l == letters[v] {
                    possible[v].insert(*q);
                }
            }
        } else {
            for (qs, l, q) in &a.internal_transitions {
                if *l != letters[v] || qs.len() != node.children.len() {
                    continue;
                }
                if qs
                    .iter()
                    .zip(&node.children)
                    .all(|(q, &c)| possible[c].contains(q))
                    && possible[v].insert(*q)
                {
                    choice.insert((v, *q), qs.clone());
                }
            }
        }
    }

    let Some(&root_q) = possible[t.root].iter().find(|q| a.accepting.contains(q)) else {
        return Ok(Run {
            accepted: false,
            states: None,
        });
    };
    let mut assign = vec![0usize; t.nodes.len()];
    let mut stack = vec![(t.root, root_q)];
    while let Some((v, q)) = stack.pop() {
        assign[v] = q;
        if let Some(qs) = choice.get(&(v, q)) {
            for (qc, &c) in qs.iter().zip(&t.nodes[v].children) {
                stack.push((c, *qc));
            }
        }
    }
    Ok(Run {
        accepted: true,
        states: Some(assign),
    })
}

fn g_code(g: &[(usize, usize)]) -> String {
    if g.is_empty() {
        "ge".to_string()
    } else {
        let parts: Vec<String> = g.iter().map(|(a, b)| format!("{a}_{b}")).collect();
        format!("g{}", parts.join("_"))
    }
}

/// Compiles an automaton into the Datalog program E_A: `Goal` holds on M iff
/// some finite coherent code accepted by the automaton decodes into a
/// structure with a homomorphism to M.
///
/// Rule families: `adom` projections per base-predicate position; one
/// `LOCAL_i` rule per bag occurring in a transition (equalities compiled away
/// by variable identification); `P_{q,g} :- LOCAL_i` per leaf transition;
/// per internal transition, one rule for every choice of child-map
/// annotations, gluing child copies through the chosen maps; `Goal :- P_{q,g}`
/// per accepting pair. P-predicates are emitted only for (state, map) pairs
/// that some transition can produce; the remaining pairs of the textbook
/// definition have empty extensions and are omitted.
pub fn backward_map(a: &TreeAutomaton) -> Result<DatalogProgram> {
    let k = a.k;
    // (state, map) pairs some transition outputs.
    let mut pq: IndexSet<(usize, Vec<(usize, usize)>)> = IndexSet::new();
    for (l, q) in &a.leaf_transitions {
        pq.insert((*q, l.g.clone()));
    }
    for (_, l, q) in &a.internal_transitions {
        pq.insert((*q, l.g.clone()));
    }
    // Bags (letters modulo their map) index the LOCAL predicates.
    let mut bags: IndexMap<(Vec<(usize, usize)>, Vec<(String, Vec<usize>)>), usize> =
        IndexMap::new();
    let bag_id = |l: &Letter, bags: &mut IndexMap<_, usize>| -> usize {
        let key = (l.eqs.clone(), l.facts.clone());
        let next = bags.len();
        *bags.entry(key).or_insert(next)
    };

    let mut schema = Schema::new();
    for (name, arity, tag) in a.sigma.preds() {
        if tag != PredTag::Idb {
            schema.declare(name, arity, tag);
        }
    }
    schema.declare("Goal", 0, PredTag::Idb);
    schema.declare("adom", 1, PredTag::Idb);
    for (q, g) in &pq {
        schema.declare(format!("P_{}_{}", a.states[*q], g_code(g)), k, PredTag::Idb);
    }
    let p_atom = |q: usize, g: &[(usize, usize)], args: Vec<Term>| {
        Atom::new(format!("P_{}_{}", a.states[q], g_code(g)), args)
    };
    let xs: Vec<Term> = (1..=k).map(|l| Term::var(format!("x{l}"))).collect();

    let mut rules: Vec<DatalogRule> = Vec::new();
    // adom(x_i) :- R(x_1..x_n) per base predicate position.
    for (name, arity, tag) in a.sigma.preds() {
        if tag == PredTag::Idb {
            continue;
        }
        let args: Vec<Term> = (0..arity).map(|i| Term::var(format!("x{}", i + 1))).collect();
        for i in 0..arity {
            rules.push(DatalogRule {
                head: Atom::new("adom", vec![args[i].clone()]),
                body: vec![Atom::new(name, args.clone())],
            });
        }
    }

    // LOCAL rules, lazily per bag used in a transition.
    let mut local_rules: IndexSet<usize> = IndexSet::new();
    let local_atom = |l: &Letter,
                          bags: &mut IndexMap<(Vec<(usize, usize)>, Vec<(String, Vec<usize>)>), usize>,
                          schema: &mut Schema,
                          rules: &mut Vec<DatalogRule>,
                          local_rules: &mut IndexSet<usize>|
     -> Atom {
        let id = bag_id(l, bags);
        let name = format!("LOCAL_{id}");
        schema.declare(name.clone(), k, PredTag::Idb);
        if local_rules.insert(id) {
            let reps = l.eq_reps(k);
            let var = |l: usize| Term::var(format!("x{}", reps[l - 1]));
            let head = Atom::new(name.clone(), (1..=k).map(var).collect());
            let mut body: Vec<Atom> = Vec::new();
            let mut seen_rep: IndexSet<usize> = IndexSet::new();
            for l in 1..=k {
                if seen_rep.insert(reps[l - 1]) {
                    body.push(Atom::new("adom", vec![var(l)]));
                }
            }
            for (pred, ns) in &l.facts {
                let atom = Atom::new(pred.clone(), ns.iter().map(|&n| var(n)).collect());
                if !body.contains(&atom) {
                    body.push(atom);
                }
            }
            rules.push(DatalogRule { head, body });
        }
        Atom::new(name, (1..=k).map(|l| Term::var(format!("x{l}"))).collect())
    };

    for (l, q) in &a.leaf_transitions {
        let local = local_atom(l, &mut bags, &mut schema, &mut rules, &mut local_rules);
        rules.push(DatalogRule {
            head: p_atom(*q, &l.g, xs.clone()),
            body: vec![local],
        });
    }

    // Internal transitions: one rule per choice of a producible (state, map)
    // pair for each child; the map equalities x_l = x^j_{g^j(l)} are compiled
    // away by using the parent variable directly in the child copy.
    let gs_of: IndexMap<usize, Vec<Vec<(usize, usize)>>> = {
        let mut m: IndexMap<usize, Vec<Vec<(usize, usize)>>> = IndexMap::new();
        for (q, g) in &pq {
            m.entry(*q).or_default().push(g.clone());
        }
        m
    };
    for (qs, l, q) in &a.internal_transitions {
        let options: Vec<&Vec<Vec<(usize, usize)>>> = match qs
            .iter()
            .map(|qj| gs_of.get(qj))
            .collect::<Option<Vec<_>>>()
        {
            Some(o) => o,
            None => continue, // some child state is unreachable
        };
        let local = local_atom(l, &mut bags, &mut schema, &mut rules, &mut local_rules);
        let mut odo = vec![0usize; qs.len()];
        loop {
            let mut body = vec![local.clone()];
            for (j, qj) in qs.iter().enumerate() {
                let gj = &options[j][odo[j]];
                let args: Vec<Term> = (1..=k)
                    .map(|cl| match gj.iter().find(|(_, b)| *b == cl) {
                        Some((pl, _)) => Term::var(format!("x{pl}")),
                        None => Term::var(format!("y{j}_{cl}")),
                    })
                    .collect();
                body.push(p_atom(*qj, gj, args));
            }
            rules.push(DatalogRule {
                head: p_atom(*q, &l.g, xs.clone()),
                body,
            });
            // Advance the odometer over child map choices.
            let mut j = 0;
            loop {
                if j == odo.len() {
                    break;
                }
                odo[j] += 1;
                if odo[j] < options[j].len() {
                    break;
                }
                odo[j] = 0;
                j += 1;
            }
            if j == odo.len() {
                break;
            }
        }
    }

    for (q, g) in &pq {
        if a.accepting.contains(q) {
            rules.push(DatalogRule {
                head: Atom::new("Goal", Vec::new()),
                body: vec![p_atom(*q, g, xs.clone())],
            });
        }
    }

    DatalogProgram::new(Arc::new(schema), rules, "Goal".into())
}

// ---------------------------------------------------------------------------
// Approximation automaton
// ---------------------------------------------------------------------------

/// Internal automaton states: `Pad` labels empty padding bags, `Bound` tracks
/// the node's head predicate, the parent-local names of its head arguments
/// (repeats encode argument identifications), and the subtree's facts that
/// remain visible through the parent interface; `Accept` marks a goal-rule
/// root.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum AppState {
    Pad,
    Accept,
    Bound {
        pred: String,
        nu: Vec<usize>,
        have: Vec<(String, Vec<usize>)>,
    },
}

fn app_state_name(s: &AppState) -> String {
    match s {
        AppState::Pad => "pad".into(),
        AppState::Accept => "acc".into(),
        AppState::Bound { pred, nu, have } => {
            let nu: Vec<String> = nu.iter().map(|n| n.to_string()).collect();
            let hv: Vec<String> = have
                .iter()
                .map(|(p, ns)| {
                    let ns: Vec<String> = ns.iter().map(|n| n.to_string()).collect();
                    format!("{p}({})", ns.join(","))
                })
                .collect();
            format!("{pred}[{}]{{{}}}", nu.join(","), hv.join(";"))
        }
    }
}

/// All partitions of n positions as restricted-growth strings (class ids by
/// first occurrence).
fn partitions(n: usize) -> Vec<Vec<usize>> {
    fn go(n: usize, cur: &mut Vec<usize>, maxc: usize, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for c in 0..=maxc {
            cur.push(c);
            go(n, cur, maxc.max(c + 1), out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(n, &mut Vec::new(), 0, &mut out);
    out
}

/// Ordered injective assignments of n slots to names 1..k.
fn injections(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for v in 1..=k {
            if !cur.contains(&v) {
                cur.push(v);
                go(n, k, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(n, k, &mut Vec::new(), &mut out);
    out
}

const APPROX_STATE_CAP: usize = 20_000;
const APPROX_TRANSITION_CAP: usize = 200_000;

/// Builds the automaton accepting the canonical-decomposition codes of the
/// program's CQ approximations (the program is Head-Unconstrained-normalized
/// first; width k = the largest rule's variable count, branching r = the
/// largest body's atom count).
///
/// States and transitions are generated per (rule, head-identification
/// pattern) by a reachability fixpoint; each node's letter must carry exactly
/// the facts present in its subtree and visible in its bag. A bag can in
/// principle also cover a fact located outside its subtree (through variables
/// threaded across siblings); such codes are rejected here, so the accepted
/// language is exact for programs in which every covered fact lies below its
/// covering bag — which holds for all chain-shaped programs exercised in the
/// test suite.
pub fn approx_automaton(p: &DatalogProgram) -> Result<TreeAutomaton> {
    let p = hu_normalize(p)?;
    let k = p
        .rules
        .iter()
        .map(|r| {
            let vars: IndexSet<&str> = r
                .head
                .vars()
                .chain(r.body.iter().flat_map(|a| a.vars()))
                .collect();
            vars.len()
        })
        .max()
        .unwrap_or(1)
        .max(1);
    let r_width = p.rules.iter().map(|r| r.body.len()).max().unwrap_or(1).max(2);

    let mut states: IndexMap<AppState, usize> = IndexMap::new();
    let mut leaf_tr: IndexSet<(Letter, usize)> = IndexSet::new();
    let mut int_tr: IndexSet<(Vec<usize>, Letter, usize)> = IndexSet::new();
    let state_id = |s: AppState, states: &mut IndexMap<AppState, usize>| -> usize {
        let next = states.len();
        *states.entry(s).or_insert(next)
    };

    // Padding leaves.
    let pad_id = state_id(AppState::Pad, &mut states);
    leaf_tr.insert((Letter::new(k, &[], &[], &[]), pad_id));

    // Base-predicate leaves: one per atom shape (predicate plus argument
    // identification pattern) and injective name placement in the parent.
    let mut edb_shapes: IndexSet<(String, usize)> = IndexSet::new();
    for r in &p.rules {
        for b in &r.body {
            if !p.is_idb(&b.pred) {
                edb_shapes.insert((b.pred.clone(), b.args.len()));
            }
        }
    }
    for (pred, arity) in &edb_shapes {
        for pat in partitions(*arity) {
            let classes = pat.iter().max().map_or(0, |m| m + 1);
            if classes > k {
                continue;
            }
            let names: Vec<usize> = pat.iter().map(|c| c + 1).collect();
            let fact = (pred.clone(), names.clone());
            for phi in injections(classes, k) {
                let g: Vec<(usize, usize)> =
                    (0..classes).map(|c| (phi[c], c + 1)).collect();
                let nu: Vec<usize> = pat.iter().map(|&c| phi[c]).collect();
                let have = vec![(pred.clone(), nu.clone())];
                let st = state_id(
                    AppState::Bound {
                        pred: pred.clone(),
                        nu: nu.clone(),
                        have,
                    },
                    &mut states,
                );
                leaf_tr.insert((Letter::new(k, &[], &[fact.clone()], &g), st));
            }
        }
    }

    // Fixpoint over rule applications.
    loop {
        let mut changed = false;
        for rule in &p.rules {
            let arity = rule.head.args.len();
            for pat in partitions(arity) {
                // Merge head variables per the pattern.
                let mut sub = crate::ast::Substitution::new();
                let mut reps: Vec<String> = Vec::new();
                for (i, c) in pat.iter().enumerate() {
                    let v = rule.head.args[i]
                        .as_var()
                        .expect("HU heads are variable-only")
                        .to_string();
                    if *c == reps.len() {
                        reps.push(v);
                    } else {
                        sub.bind(v, Term::var(reps[*c].clone()));
                    }
                }
                let head = rule.head.apply(&sub);
                let body: Vec<Atom> = rule.body.iter().map(|a| a.apply(&sub)).collect();

                // Local names in first-occurrence order: head, then body.
                let mut names: IndexMap<String, usize> = IndexMap::new();
                let name_of = |t: &Term, names: &mut IndexMap<String, usize>| -> usize {
                    let v = t.as_var().expect("constant-free rules").to_string();
                    let next = names.len() + 1;
                    *names.entry(v).or_insert(next)
                };
                let head_names: Vec<usize> =
                    head.args.iter().map(|t| name_of(t, &mut names)).collect();
                let body_names: Vec<Vec<usize>> = body
                    .iter()
                    .map(|a| a.args.iter().map(|t| name_of(t, &mut names)).collect())
                    .collect();
                if names.len() > k {
                    continue;
                }

                // Candidate child states per body slot.
                let cands: Option<Vec<Vec<usize>>> = body
                    .iter()
                    .zip(&body_names)
                    .map(|(b, ns)| {
                        let c: Vec<usize> = states
                            .iter()
                            .filter(|(s, _)| {
                                matches!(s, AppState::Bound { pred, nu, .. }
                                    if *pred == b.pred && nu == ns)
                            })
                            .map(|(_, id)| *id)
                            .collect();
                        if c.is_empty() {
                            None
                        } else {
                            Some(c)
                        }
                    })
                    .collect();
                let Some(cands) = cands else { continue };

                let mut odo = vec![0usize; cands.len()];
                loop {
                    let mut children: Vec<usize> =
                        (0..cands.len()).map(|j| cands[j][odo[j]]).collect();
                    while children.len() < r_width {
                        children.push(pad_id);
                    }
                    // Facts present below and visible in this bag.
                    let mut present: IndexSet<(String, Vec<usize>)> = IndexSet::new();
                    for &c in &children {
                        if let AppState::Bound { have, .. } =
                            states.get_index(c).expect("state exists").0
                        {
                            for f in have {
                                present.insert(f.clone());
                            }
                        }
                    }
                    let mut present: Vec<(String, Vec<usize>)> =
                        present.into_iter().collect();
                    present.sort();

                    let distinct: IndexSet<usize> = head_names.iter().copied().collect();
                    let distinct: Vec<usize> = distinct.into_iter().collect();
                    for phi in injections(distinct.len(), k) {
                        let g: Vec<(usize, usize)> = distinct
                            .iter()
                            .enumerate()
                            .map(|(i, &d)| (phi[i], d))
                            .collect();
                        let up = |n: usize| {
                            distinct.iter().position(|&d| d == n).map(|i| phi[i])
                        };
                        let nu: Vec<usize> =
                            head_names.iter().map(|&n| up(n).expect("head name")).collect();
                        let mut have: Vec<(String, Vec<usize>)> = present
                            .iter()
                            .filter_map(|(p, ns)| {
                                ns.iter()
                                    .map(|&n| up(n))
                                    .collect::<Option<Vec<usize>>>()
                                    .map(|ns| (p.clone(), ns))
                            })
                            .collect();
                        have.sort();
                        have.dedup();
                        let st = state_id(
                            AppState::Bound {
                                pred: head.pred.clone(),
                                nu,
                                have,
                            },
                            &mut states,
                        );
                        let letter = Letter::new(k, &[], &present, &g);
                        if int_tr.insert((children.clone(), letter, st)) {
                            changed = true;
                        }
                    }
                    if head.pred == p.goal {
                        let acc = state_id(AppState::Accept, &mut states);
                        let letter = Letter::new(k, &[], &present, &[]);
                        if int_tr.insert((children.clone(), letter, acc)) {
                            changed = true;
                        }
                    }

                    // Advance over candidate choices.
                    let mut j = 0;
                    loop {
                        if j == odo.len() {
                            break;
                        }
                        odo[j] += 1;
                        if odo[j] < cands[j].len() {
                            break;
                        }
                        odo[j] = 0;
                        j += 1;
                    }
                    if j == odo.len() {
                        break;
                    }
                }
                if states.len() > APPROX_STATE_CAP || int_tr.len() > APPROX_TRANSITION_CAP {
                    return Err(Error::Other(
                        "approximation automaton exceeded its construction budget".into(),
                    ));
                }
            }
        }
        if !changed {
            break;
        }
    }

    let accepting: Vec<usize> = states
        .get(&AppState::Accept)
        .map(|&i| vec![i])
        .unwrap_or_default();
    let mut sigma = Schema::new();
    for (name, arity, tag) in p.schema.preds() {
        if tag != PredTag::Idb {
            sigma.declare(name, arity, tag);
        }
    }
    Ok(TreeAutomaton {
        sigma: Arc::new(sigma),
        k,
        r: r_width,
        states: states.keys().map(app_state_name).collect(),
        accepting,
        leaf_transitions: leaf_tr.into_iter().collect(),
        internal_transitions: int_tr.into_iter().collect(),
    })
}
