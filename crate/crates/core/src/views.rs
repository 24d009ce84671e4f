//! Named views with CQ/UCQ/Datalog definitions: forward semantics (view
//! image), expansion of view-schema queries, and backward witness
//! materialization (BackV).

use crate::ast::{Atom, Instance, PredTag, Substitution, Term};
use crate::datalog::{eval_goal, DatalogProgram};
use crate::error::{Error, Result};
use crate::query::{ConjunctiveQuery, UnionQuery};
use crate::unify::Unifier;
use serde::Serialize;
use std::sync::Arc;

#[derive(Debug, Clone, Serialize)]
pub enum ViewDef {
    /// CQ views are the single-disjunct case.
    Ucq(UnionQuery),
    Datalog(DatalogProgram),
}

#[derive(Debug, Clone, Serialize)]
pub struct View {
    pub name: String,
    pub def: ViewDef,
}

impl View {
    pub fn is_cq(&self) -> bool {
        matches!(&self.def, ViewDef::Ucq(u) if u.disjuncts.len() == 1)
    }

    pub fn ucq_def(&self) -> Result<&UnionQuery> {
        match &self.def {
            ViewDef::Ucq(u) => Ok(u),
            ViewDef::Datalog(_) => Err(Error::DatalogViewUnexpandable(self.name.clone())),
        }
    }
}

/// A set of views over a combined schema (base predicates plus one View-tagged
/// predicate per view).
#[derive(Debug, Clone, Serialize)]
pub struct ViewSet {
    pub views: Vec<View>,
    #[serde(skip)]
    pub schema: Arc<crate::ast::Schema>,
}

impl ViewSet {
    pub fn new(schema: Arc<crate::ast::Schema>, views: Vec<View>) -> Result<ViewSet> {
        for v in &views {
            let Some(arity) = schema.arity(&v.name) else {
                return Err(Error::UndeclaredPredicate(v.name.clone()));
            };
            let def_arity = match &v.def {
                ViewDef::Ucq(u) => u.arity(),
                ViewDef::Datalog(p) => p.goal_arity(),
            };
            if arity != def_arity {
                return Err(Error::ArityMismatch {
                    pred: v.name.clone(),
                    got: def_arity,
                    declared: arity,
                });
            }
        }
        Ok(ViewSet { views, schema })
    }

    pub fn get(&self, name: &str) -> Option<&View> {
        self.views.iter().find(|v| v.name == name)
    }

    pub fn all_cq(&self) -> bool {
        self.views.iter().all(View::is_cq)
    }

    pub fn all_ucq(&self) -> bool {
        self.views
            .iter()
            .all(|v| matches!(v.def, ViewDef::Ucq(_)))
    }
}

/// The view image V(I): one fact per answer tuple of each definition.
pub fn view_image(i: &Instance, vs: &ViewSet) -> Result<Instance> {
    let schema = Arc::new(i.schema.merged(&vs.schema)?);
    let mut out = Instance::new(schema);
    for v in &vs.views {
        let tuples = match &v.def {
            ViewDef::Ucq(u) => crate::query::eval_ucq(u, i)?,
            ViewDef::Datalog(p) => eval_goal(p, i)?,
        };
        for t in tuples {
            out.insert(Atom::new(v.name.clone(), t))?;
        }
    }
    Ok(out)
}

/// Substitutes each view atom of `r` by its definition with fresh quantified
/// variables, distributing UCQ definitions over disjuncts:
/// expandViews(r)(I) = r(V(I)) for every I.
pub fn expand_views(r: &UnionQuery, vs: &ViewSet) -> Result<UnionQuery> {
    let mut out: Vec<ConjunctiveQuery> = Vec::new();
    for d in &r.disjuncts {
        expand_disjunct(d, vs, &mut out)?;
    }
    UnionQuery::new(out)
}

fn expand_disjunct(
    d: &ConjunctiveQuery,
    vs: &ViewSet,
    out: &mut Vec<ConjunctiveQuery>,
) -> Result<()> {
    // Per-atom options: lists of (definition body instantiated on the atom's
    // arguments, equations forced by repeated definition-head variables).
    let mut options_per_atom: Vec<Vec<(Vec<Atom>, Vec<(Term, Term)>)>> = Vec::new();
    for (ai, a) in d.body.iter().enumerate() {
        let view = vs
            .get(&a.pred)
            .ok_or_else(|| Error::UndeclaredPredicate(a.pred.clone()))?;
        let def = view.ucq_def()?;
        let mut opts = Vec::new();
        for (di, dd) in def.disjuncts.iter().enumerate() {
            let dd = dd.freshened(&format!("_e{ai}_{di}"));
            let mut sub = Substitution::new();
            let mut eqs: Vec<(Term, Term)> = Vec::new();
            for (hv, arg) in dd.head.iter().zip(&a.args) {
                match sub.get(hv) {
                    None => sub.bind(hv.clone(), arg.clone()),
                    Some(prev) => eqs.push((prev.clone(), arg.clone())),
                }
            }
            let body: Vec<Atom> = dd.body.iter().map(|b| b.apply(&sub)).collect();
            opts.push((body, eqs));
        }
        options_per_atom.push(opts);
    }

    let mut stack: Vec<(usize, Vec<Atom>, Vec<(Term, Term)>)> = vec![(0, Vec::new(), Vec::new())];
    while let Some((ix, body, eqs)) = stack.pop() {
        if ix == d.body.len() {
            // Solve the accumulated equations; drop unsatisfiable choices.
            let mut u = Unifier::new();
            let mut ok = true;
            for (a, b) in &eqs {
                if u.union(a, b).is_err() {
                    ok = false;
                    break;
                }
            }
            if !ok {
                continue;
            }
            let s = u.substitution();
            let body: Vec<Atom> = body.iter().map(|a| a.apply(&s)).collect();
            let head: Vec<String> = d
                .head
                .iter()
                .map(|v| match s.get(v) {
                    Some(Term::Var(w)) => w.clone(),
                    _ => v.clone(),
                })
                .collect();
            out.push(ConjunctiveQuery::new(d.schema.clone(), head, body)?);
            continue;
        }
        // Depth-first in reverse option order keeps overall emission order
        // aligned with definition order.
        for (b, e) in options_per_atom[ix].iter().rev() {
            let mut body2 = body.clone();
            body2.extend(b.iter().cloned());
            let mut eqs2 = eqs.clone();
            eqs2.extend(e.iter().cloned());
            stack.push((ix + 1, body2, eqs2));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct BackVChoices {
    pub instances: Vec<Instance>,
    /// Total number of per-fact disjunct combinations (before the cap).
    pub total: usize,
    pub truncated: bool,
}

/// Materializes witnesses for each view fact of `J`: per fact, the chosen
/// definition disjunct's body with head variables bound to the fact's
/// arguments and existentials bound to fresh nulls. CQ views admit a single
/// choice; UCQ views fan out in mixed-radix order over per-fact choices.
pub fn back_v(j: &Instance, vs: &ViewSet, limit: usize) -> Result<BackVChoices> {
    let facts: Vec<Atom> = j
        .facts()
        .filter(|f| j.schema.tag(&f.pred) == Some(PredTag::View))
        .cloned()
        .collect();
    let mut radix: Vec<usize> = Vec::new();
    for f in &facts {
        let view = vs
            .get(&f.pred)
            .ok_or_else(|| Error::UndeclaredPredicate(f.pred.clone()))?;
        match &view.def {
            ViewDef::Ucq(u) => radix.push(u.disjuncts.len()),
            ViewDef::Datalog(_) => return Err(Error::DatalogViewHere(f.pred.clone())),
        }
    }
    let total = radix.iter().product::<usize>().max(usize::from(radix.is_empty()));
    let null_start = j
        .adom()
        .iter()
        .filter_map(|t| match t {
            Term::Null(n) => Some(*n + 1),
            _ => None,
        })
        .max()
        .unwrap_or(1);

    let mut instances = Vec::new();
    let mut digits = vec![0usize; facts.len()];
    loop {
        if instances.len() >= limit {
            return Ok(BackVChoices {
                instances,
                total,
                truncated: true,
            });
        }
        if let Some(inst) = materialize(j, vs, &facts, &digits, null_start)? {
            instances.push(inst);
        }
        // Odometer: last fact's digit moves fastest.
        let mut pos = facts.len();
        loop {
            if pos == 0 {
                return Ok(BackVChoices {
                    instances,
                    total,
                    truncated: false,
                });
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < radix[pos] {
                break;
            }
            digits[pos] = 0;
        }
    }
}

fn materialize(
    j: &Instance,
    vs: &ViewSet,
    facts: &[Atom],
    digits: &[usize],
    null_start: u64,
) -> Result<Option<Instance>> {
    let mut out = Instance::new(j.schema.clone());
    let mut null = null_start;
    for (f, &choice) in facts.iter().zip(digits) {
        let def = vs.get(&f.pred).unwrap().ucq_def()?;
        let d = &def.disjuncts[choice];
        let mut sub = Substitution::new();
        let mut consistent = true;
        for (hv, arg) in d.head.iter().zip(&f.args) {
            match sub.get(hv) {
                None => sub.bind(hv.clone(), arg.clone()),
                Some(prev) if prev == arg => {}
                Some(_) => {
                    consistent = false;
                    break;
                }
            }
        }
        if !consistent {
            // A repeated-head-variable disjunct cannot witness this fact;
            // the whole combination is not a valid BackV member.
            return Ok(None);
        }
        for v in d.existential_vars() {
            sub.bind(v, Term::Null(null));
            null += 1;
        }
        for a in &d.body {
            out.insert(a.apply(&sub))?;
        }
    }
    Ok(Some(out))
}
