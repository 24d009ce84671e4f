//! Existential rules (TGDs) and their syntactic classification.

use crate::ast::{Atom, Schema, Substitution, Term};
use crate::error::Result;
use indexmap::IndexSet;
use serde::Serialize;
use std::fmt;
use std::sync::Arc;

/// λ(x⃗) → ∃y⃗ ρ(x⃗,y⃗). Head variables absent from the body are implicitly
/// existentially quantified. An empty body is permitted only for head-only
/// seed rules (corpus use); an empty frontier is a legal degenerate case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Tgd {
    pub body: Vec<Atom>,
    pub head: Vec<Atom>,
    #[serde(skip)]
    pub schema: Arc<Schema>,
}

impl Tgd {
    pub fn new(schema: Arc<Schema>, body: Vec<Atom>, head: Vec<Atom>) -> Result<Tgd> {
        for a in body.iter().chain(&head) {
            schema.check_atom(a)?;
        }
        Ok(Tgd { body, head, schema })
    }

    pub fn body_vars(&self) -> IndexSet<String> {
        self.body
            .iter()
            .flat_map(|a| a.vars().map(str::to_string))
            .collect()
    }

    pub fn head_vars(&self) -> IndexSet<String> {
        self.head
            .iter()
            .flat_map(|a| a.vars().map(str::to_string))
            .collect()
    }

    /// Variables shared between body and head, in body-occurrence order.
    pub fn frontier(&self) -> Vec<String> {
        let hv = self.head_vars();
        self.body_vars()
            .into_iter()
            .filter(|v| hv.contains(v))
            .collect()
    }

    /// Head-only variables, in head-occurrence order.
    pub fn existentials(&self) -> Vec<String> {
        let bv = self.body_vars();
        self.head_vars()
            .into_iter()
            .filter(|v| !bv.contains(v))
            .collect()
    }

    pub fn is_full(&self) -> bool {
        self.existentials().is_empty()
    }

    pub fn is_linear(&self) -> bool {
        self.body.len() == 1
    }

    pub fn is_frontier_one(&self) -> bool {
        self.frontier().len() <= 1
    }

    /// Some body atom contains every frontier variable.
    pub fn is_frontier_guarded(&self) -> bool {
        let fr = self.frontier();
        if fr.is_empty() {
            return true;
        }
        self.body.iter().any(|a| {
            let vs: IndexSet<&str> = a.vars().collect();
            fr.iter().all(|v| vs.contains(v.as_str()))
        })
    }

    /// The first body atom containing the whole frontier, if any.
    pub fn guard_index(&self) -> Option<usize> {
        let fr = self.frontier();
        self.body.iter().position(|a| {
            let vs: IndexSet<&str> = a.vars().collect();
            fr.iter().all(|v| vs.contains(v.as_str()))
        })
    }

    fn has_constants(&self) -> bool {
        self.body
            .iter()
            .chain(&self.head)
            .any(|a| a.args.iter().any(|t| matches!(t, Term::Const(_))))
    }

    fn has_repeated_vars_in_an_atom(&self) -> bool {
        self.body.iter().chain(&self.head).any(|a| {
            let mut seen = IndexSet::new();
            a.vars().any(|v| !seen.insert(v))
        })
    }

    /// Unary inclusion dependency: linear, single-atom head, at most one
    /// frontier variable, no constants or repeated variables.
    pub fn is_uid(&self) -> bool {
        self.is_linear()
            && self.head.len() == 1
            && self.is_frontier_one()
            && !self.has_constants()
            && !self.has_repeated_vars_in_an_atom()
    }

    pub fn apply(&self, s: &Substitution) -> Tgd {
        Tgd {
            body: self.body.iter().map(|a| a.apply(s)).collect(),
            head: self.head.iter().map(|a| a.apply(s)).collect(),
            schema: self.schema.clone(),
        }
    }
}

impl fmt::Display for Tgd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, a) in self.body.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, " -> ")?;
        for (i, a) in self.head.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

/// Set-level classification flags. Negative flags carry the index of a
/// violating rule for diagnostics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RuleClassification {
    pub linear: bool,
    pub full: bool,
    pub frontier_guarded: bool,
    pub frontier_one: bool,
    pub uid: bool,
    pub source_to_target: bool,
    pub datalog_shaped: bool,
    pub violations: Vec<(String, usize)>,
}

pub fn classify_rules(rules: &[Tgd]) -> RuleClassification {
    let mut violations = Vec::new();
    let mut flag = |name: &str, pred: &dyn Fn(&Tgd) -> bool| -> bool {
        match rules.iter().position(|r| !pred(r)) {
            Some(i) => {
                violations.push((name.to_string(), i));
                false
            }
            None => true,
        }
    };
    let linear = flag("linear", &Tgd::is_linear);
    let full = flag("full", &Tgd::is_full);
    let frontier_guarded = flag("frontierGuarded", &Tgd::is_frontier_guarded);
    let frontier_one = flag("frontierOne", &Tgd::is_frontier_one);
    let uid = flag("uid", &Tgd::is_uid);
    let datalog_shaped = flag("datalogShaped", &|r: &Tgd| r.is_full() && r.head.len() == 1);

    // Head predicates of any rule must not occur in any body.
    let head_preds: IndexSet<&str> = rules
        .iter()
        .flat_map(|r| r.head.iter().map(|a| a.pred.as_str()))
        .collect();
    let source_to_target = match rules
        .iter()
        .position(|r| r.body.iter().any(|a| head_preds.contains(a.pred.as_str())))
    {
        Some(i) => {
            violations.push(("sourceToTarget".to_string(), i));
            false
        }
        None => true,
    };

    RuleClassification {
        linear,
        full,
        frontier_guarded,
        frontier_one,
        uid,
        source_to_target,
        datalog_shaped,
        violations,
    }
}
