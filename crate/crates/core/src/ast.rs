//! Terms, atoms, schemas, instances, and substitutions — the substrate every
//! other module builds on.

use crate::error::{Error, Result};
use indexmap::{IndexMap, IndexSet};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// A first-order term. Nulls are produced only by chase sessions and backV;
/// their ids are unique within a session and never reused.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Term {
    /// Constants compare by name; a null never equals a constant.
    Const(String),
    Var(String),
    Null(u64),
}

impl Term {
    pub fn cst(name: impl Into<String>) -> Term {
        Term::Const(name.into())
    }
    pub fn var(name: impl Into<String>) -> Term {
        Term::Var(name.into())
    }
    pub fn is_ground(&self) -> bool {
        !matches!(self, Term::Var(_))
    }
    pub fn as_var(&self) -> Option<&str> {
        match self {
            Term::Var(v) => Some(v),
            _ => None,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Const(c) => write!(f, "{c}"),
            Term::Var(v) => write!(f, "{v}"),
            Term::Null(n) => write!(f, "n{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Atom {
    pub pred: String,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(pred: impl Into<String>, args: Vec<Term>) -> Atom {
        Atom {
            pred: pred.into(),
            args,
        }
    }
    pub fn is_ground(&self) -> bool {
        self.args.iter().all(Term::is_ground)
    }
    pub fn vars(&self) -> impl Iterator<Item = &str> {
        self.args.iter().filter_map(Term::as_var)
    }
    pub fn apply(&self, s: &Substitution) -> Atom {
        Atom {
            pred: self.pred.clone(),
            args: self.args.iter().map(|t| s.apply(t)).collect(),
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.pred)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

/// Which part of the signature a predicate belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PredTag {
    Base,
    View,
    Idb,
}

/// Predicate declarations. Insertion order is preserved so generated output
/// is stable.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    preds: IndexMap<String, (usize, PredTag)>,
}

impl Schema {
    pub fn new() -> Schema {
        Schema::default()
    }

    pub fn declare(&mut self, name: impl Into<String>, arity: usize, tag: PredTag) {
        self.preds.insert(name.into(), (arity, tag));
    }

    pub fn with(mut self, name: impl Into<String>, arity: usize, tag: PredTag) -> Schema {
        self.declare(name, arity, tag);
        self
    }

    pub fn arity(&self, name: &str) -> Option<usize> {
        self.preds.get(name).map(|(a, _)| *a)
    }

    pub fn tag(&self, name: &str) -> Option<PredTag> {
        self.preds.get(name).map(|(_, t)| *t)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.preds.contains_key(name)
    }

    pub fn preds(&self) -> impl Iterator<Item = (&str, usize, PredTag)> {
        self.preds.iter().map(|(n, (a, t))| (n.as_str(), *a, *t))
    }

    pub fn preds_tagged(&self, tag: PredTag) -> impl Iterator<Item = (&str, usize)> {
        self.preds
            .iter()
            .filter(move |(_, (_, t))| *t == tag)
            .map(|(n, (a, _))| (n.as_str(), *a))
    }

    /// Union of two schemas; arities must agree on shared names.
    pub fn merged(&self, other: &Schema) -> Result<Schema> {
        let mut out = self.clone();
        for (n, (a, t)) in &other.preds {
            match out.preds.get(n) {
                Some((a0, _)) if a0 != a => {
                    return Err(Error::ArityMismatch {
                        pred: n.clone(),
                        got: *a,
                        declared: *a0,
                    })
                }
                Some(_) => {}
                None => {
                    out.preds.insert(n.clone(), (*a, *t));
                }
            }
        }
        Ok(out)
    }

    pub fn check_atom(&self, atom: &Atom) -> Result<()> {
        match self.arity(&atom.pred) {
            None => Err(Error::UndeclaredPredicate(atom.pred.clone())),
            Some(a) if a != atom.args.len() => Err(Error::ArityMismatch {
                pred: atom.pred.clone(),
                got: atom.args.len(),
                declared: a,
            }),
            Some(_) => Ok(()),
        }
    }
}

/// A finite set of ground facts. Fact insertion order is preserved: the
/// homomorphism enumerator visits candidates in that order, which keeps all
/// downstream output deterministic.
#[derive(Debug, Clone, Serialize)]
pub struct Instance {
    pub schema: Arc<Schema>,
    facts: IndexSet<Atom>,
    #[serde(skip)]
    by_pred: IndexMap<String, Vec<usize>>,
}

impl PartialEq for Instance {
    fn eq(&self, other: &Instance) -> bool {
        self.facts.len() == other.facts.len()
            && self.facts.iter().all(|f| other.facts.contains(f))
    }
}
impl Eq for Instance {}

impl Instance {
    pub fn new(schema: Arc<Schema>) -> Instance {
        Instance {
            schema,
            facts: IndexSet::new(),
            by_pred: IndexMap::new(),
        }
    }

    pub fn from_facts(schema: Arc<Schema>, facts: impl IntoIterator<Item = Atom>) -> Result<Instance> {
        let mut inst = Instance::new(schema);
        for f in facts {
            inst.insert(f)?;
        }
        Ok(inst)
    }

    /// Adds a fact; returns true if it was new.
    pub fn insert(&mut self, fact: Atom) -> Result<bool> {
        self.schema.check_atom(&fact)?;
        debug_assert!(fact.is_ground(), "instances hold ground facts only");
        let (idx, new) = self.facts.insert_full(fact);
        if new {
            let pred = self.facts[idx].pred.clone();
            self.by_pred.entry(pred).or_default().push(idx);
        }
        Ok(new)
    }

    pub fn contains(&self, fact: &Atom) -> bool {
        self.facts.contains(fact)
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn facts(&self) -> impl Iterator<Item = &Atom> {
        self.facts.iter()
    }

    pub fn facts_of(&self, pred: &str) -> impl Iterator<Item = &Atom> {
        self.by_pred
            .get(pred)
            .into_iter()
            .flat_map(|ixs| ixs.iter().map(|&i| &self.facts[i]))
    }

    /// Active domain in first-occurrence order.
    pub fn adom(&self) -> Vec<Term> {
        let mut seen = IndexSet::new();
        for f in &self.facts {
            for t in &f.args {
                seen.insert(t.clone());
            }
        }
        seen.into_iter().collect()
    }

    /// True if every fact of `self` is a fact of `other`.
    pub fn subset_of(&self, other: &Instance) -> bool {
        self.facts.iter().all(|f| other.contains(f))
    }

    /// Facts sorted for display and stable JSON output.
    pub fn sorted_facts(&self) -> Vec<Atom> {
        let mut v: Vec<Atom> = self.facts.iter().cloned().collect();
        v.sort();
        v
    }
}

impl fmt::Display for Instance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, a) in self.sorted_facts().iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, "}}")
    }
}

/// A variable assignment. Total on the source pattern's variables when
/// returned as a homomorphism.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Substitution {
    map: IndexMap<String, Term>,
}

impl Substitution {
    pub fn new() -> Substitution {
        Substitution::default()
    }

    pub fn bind(&mut self, var: impl Into<String>, t: Term) {
        self.map.insert(var.into(), t);
    }

    pub fn get(&self, var: &str) -> Option<&Term> {
        self.map.get(var)
    }

    pub fn remove(&mut self, var: &str) {
        self.map.shift_remove(var);
    }

    pub fn apply(&self, t: &Term) -> Term {
        match t {
            Term::Var(v) => self.map.get(v).cloned().unwrap_or_else(|| t.clone()),
            _ => t.clone(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Term)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Stable form for comparisons: sorted (var, term) pairs.
    pub fn sorted_pairs(&self) -> Vec<(String, Term)> {
        let mut v: Vec<(String, Term)> = self
            .map
            .iter()
            .map(|(k, t)| (k.clone(), t.clone()))
            .collect();
        v.sort();
        v
    }
}

impl fmt::Display for Substitution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (v, t)) in self.sorted_pairs().iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}↦{t}")?;
        }
        write!(f, "}}")
    }
}
