//! Conjunctive queries, unions of CQs, canonical databases, evaluation, and
//! classic containment.

use crate::ast::{Atom, Instance, PredTag, Schema, Substitution, Term};
use crate::error::{Error, Result};
use crate::hom::find_homomorphisms;
use indexmap::IndexSet;
use serde::Serialize;
use std::fmt;
use std::sync::Arc;

/// Q(x⃗) = ∃y⃗ φ. Head variables may repeat; every head variable must occur
/// in the body (safety). A Boolean query has an empty head.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConjunctiveQuery {
    pub head: Vec<String>,
    pub body: Vec<Atom>,
    #[serde(skip)]
    pub schema: Arc<Schema>,
}

impl ConjunctiveQuery {
    pub fn new(schema: Arc<Schema>, head: Vec<String>, body: Vec<Atom>) -> Result<ConjunctiveQuery> {
        for a in &body {
            schema.check_atom(a)?;
        }
        let q = ConjunctiveQuery { head, body, schema };
        for v in &q.head {
            if !q.body.iter().any(|a| a.vars().any(|w| w == v)) {
                return Err(Error::UnsafeRule { var: v.clone() });
            }
        }
        Ok(q)
    }

    pub fn is_boolean(&self) -> bool {
        self.head.is_empty()
    }

    /// All variables in first-occurrence order (head first, then body).
    pub fn vars(&self) -> Vec<String> {
        let mut seen = IndexSet::new();
        for v in &self.head {
            seen.insert(v.clone());
        }
        for a in &self.body {
            for v in a.vars() {
                seen.insert(v.to_string());
            }
        }
        seen.into_iter().collect()
    }

    /// Existential (non-head) variables in first-occurrence order.
    pub fn existential_vars(&self) -> Vec<String> {
        self.vars()
            .into_iter()
            .filter(|v| !self.head.contains(v))
            .collect()
    }

    pub fn apply(&self, s: &Substitution) -> ConjunctiveQuery {
        let head = self
            .head
            .iter()
            .map(|v| match s.get(v) {
                Some(Term::Var(w)) => w.clone(),
                Some(_) => v.clone(), // heads stay variables; callers keep head vars unbound
                None => v.clone(),
            })
            .collect();
        ConjunctiveQuery {
            head,
            body: self.body.iter().map(|a| a.apply(s)).collect(),
            schema: self.schema.clone(),
        }
    }

    /// α-renames every variable by appending `suffix`, keeping structure.
    pub fn freshened(&self, suffix: &str) -> ConjunctiveQuery {
        let mut s = Substitution::new();
        for v in self.vars() {
            s.bind(v.clone(), Term::var(format!("{v}{suffix}")));
        }
        self.apply(&s)
    }
}

impl fmt::Display for ConjunctiveQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.head.join(","))?;
        write!(f, " :- ")?;
        for (i, a) in self.body.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

/// A nonempty disjunction of CQs with equal head arity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UnionQuery {
    pub disjuncts: Vec<ConjunctiveQuery>,
}

impl UnionQuery {
    pub fn new(disjuncts: Vec<ConjunctiveQuery>) -> Result<UnionQuery> {
        let Some(first) = disjuncts.first() else {
            return Err(Error::Other("UnionQuery needs at least one disjunct".into()));
        };
        let arity = first.head.len();
        if disjuncts.iter().any(|d| d.head.len() != arity) {
            return Err(Error::Other("UCQ disjuncts disagree on head arity".into()));
        }
        Ok(UnionQuery { disjuncts })
    }

    pub fn single(q: ConjunctiveQuery) -> UnionQuery {
        UnionQuery { disjuncts: vec![q] }
    }

    pub fn arity(&self) -> usize {
        self.disjuncts[0].head.len()
    }

    pub fn is_boolean(&self) -> bool {
        self.arity() == 0
    }
}

impl fmt::Display for UnionQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.disjuncts.iter().enumerate() {
            if i > 0 {
                write!(f, " | ")?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

/// The canonical database: body atoms read as facts, each variable frozen to
/// a fresh constant named "c_" + variable (collision-checked against body
/// constants). Also returns the frozen image of the head.
pub fn canondb_with_head(q: &ConjunctiveQuery) -> (Instance, Vec<Term>) {
    let (db, head, _) = canondb_with_sub(q);
    (db, head)
}

/// As `canondb_with_head`, also exposing the freezing substitution so callers
/// can translate other variable-based structures into the same constants.
pub fn canondb_with_sub(q: &ConjunctiveQuery) -> (Instance, Vec<Term>, Substitution) {
    let body_consts: IndexSet<String> = q
        .body
        .iter()
        .flat_map(|a| a.args.iter())
        .filter_map(|t| match t {
            Term::Const(c) => Some(c.clone()),
            _ => None,
        })
        .collect();
    let mut taken = body_consts.clone();
    let mut sub = Substitution::new();
    for v in q.vars() {
        let mut name = format!("c_{v}");
        while taken.contains(&name) {
            name.push('_');
        }
        taken.insert(name.clone());
        sub.bind(v, Term::cst(name));
    }
    let mut inst = Instance::new(q.schema.clone());
    for a in &q.body {
        inst.insert(a.apply(&sub))
            .expect("canondb facts are schema-valid by CQ construction");
    }
    let head = q
        .head
        .iter()
        .map(|v| sub.get(v).cloned().expect("head vars are safe"))
        .collect();
    (inst, head, sub)
}

pub fn canondb(q: &ConjunctiveQuery) -> Instance {
    canondb_with_head(q).0
}

/// Exact CQ semantics: the set of head images of homomorphisms into `target`.
pub fn eval_cq(q: &ConjunctiveQuery, target: &Instance) -> Result<Vec<Vec<Term>>> {
    let homs = find_homomorphisms(&q.body, target, &Substitution::new(), None)?;
    let mut out: IndexSet<Vec<Term>> = IndexSet::new();
    for h in homs {
        out.insert(
            q.head
                .iter()
                .map(|v| h.get(v).cloned().expect("homomorphism is total on body vars"))
                .collect(),
        );
    }
    Ok(out.into_iter().collect())
}

/// Exact UCQ semantics: union over disjuncts. Boolean queries return a set
/// that is nonempty iff the query holds.
pub fn eval_ucq(q: &UnionQuery, target: &Instance) -> Result<Vec<Vec<Term>>> {
    let mut out: IndexSet<Vec<Term>> = IndexSet::new();
    for d in &q.disjuncts {
        for t in eval_cq(d, target)? {
            out.insert(t);
        }
    }
    Ok(out.into_iter().collect())
}

pub fn holds(q: &UnionQuery, target: &Instance) -> Result<bool> {
    for d in &q.disjuncts {
        let homs = find_homomorphisms(&d.body, target, &Substitution::new(), Some(1))?;
        if !homs.is_empty() {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Classic UCQ containment: q1 ⊆ q2 iff every disjunct d of q1 admits a
/// homomorphism from some disjunct of q2 into canondb(d) mapping head to head.
pub fn contains_ucq(q1: &UnionQuery, q2: &UnionQuery) -> Result<bool> {
    if q1.arity() != q2.arity() {
        return Err(Error::Other("containment needs equal head arities".into()));
    }
    for d in &q1.disjuncts {
        if !cq_contained_in_some(d, &q2.disjuncts)? {
            return Ok(false);
        }
    }
    Ok(true)
}

pub fn cq_contained_in_some(d: &ConjunctiveQuery, cands: &[ConjunctiveQuery]) -> Result<bool> {
    let (db, head) = canondb_with_head(d);
    for c in cands {
        let mut seed = Substitution::new();
        let mut consistent = true;
        for (v, t) in c.head.iter().zip(&head) {
            match seed.get(v) {
                Some(prev) if prev != t => {
                    consistent = false;
                    break;
                }
                Some(_) => {}
                None => seed.bind(v.clone(), t.clone()),
            }
        }
        if !consistent {
            continue;
        }
        if !find_homomorphisms(&c.body, &db, &seed, Some(1))?.is_empty() {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Homomorphic equivalence of two CQs (containment both ways).
pub fn hom_equivalent(a: &ConjunctiveQuery, b: &ConjunctiveQuery) -> Result<bool> {
    if a.head.len() != b.head.len() {
        return Ok(false);
    }
    Ok(cq_contained_in_some(a, std::slice::from_ref(b))?
        && cq_contained_in_some(b, std::slice::from_ref(a))?)
}

/// Canonical variable renaming by first-occurrence order plus duplicate-atom
/// removal. Idempotent; equal outputs for α-equivalent inputs.
pub fn normalize_cq(q: &ConjunctiveQuery) -> ConjunctiveQuery {
    let mut sub = Substitution::new();
    let mut n = 0usize;
    for v in q.vars() {
        sub.bind(v, Term::var(format!("v{n}")));
        n += 1;
    }
    let head = q
        .head
        .iter()
        .map(|v| match sub.get(v) {
            Some(Term::Var(w)) => w.clone(),
            _ => unreachable!("head vars are renamed"),
        })
        .collect();
    let mut body: Vec<Atom> = Vec::new();
    for a in &q.body {
        let a = a.apply(&sub);
        if !body.contains(&a) {
            body.push(a);
        }
    }
    ConjunctiveQuery {
        head,
        body,
        schema: q.schema.clone(),
    }
}

/// Schema helper: true if every body predicate of `q` carries `tag`.
pub fn cq_over_tag(q: &ConjunctiveQuery, tag: PredTag) -> bool {
    q.body.iter().all(|a| q.schema.tag(&a.pred) == Some(tag))
}
