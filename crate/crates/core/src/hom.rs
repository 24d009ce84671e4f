//! Homomorphism enumeration: the engine behind query evaluation, containment,
//! chase triggers, Datalog joins, and counterexample checking.

use crate::ast::{Atom, Instance, Substitution, Term};
use crate::error::Result;

/// Enumerates the extensions of `seed` that map every pattern atom to a fact
/// of `target`. Backtracks over atoms in pattern order; candidate facts are
/// visited in insertion order, so enumeration order is deterministic.
/// Stops after `limit` results if given.
pub fn find_homomorphisms(
    pattern: &[Atom],
    target: &Instance,
    seed: &Substitution,
    limit: Option<usize>,
) -> Result<Vec<Substitution>> {
    let targets: Vec<&Instance> = pattern.iter().map(|_| target).collect();
    find_homomorphisms_multi(pattern, &targets, seed, limit)
}

/// As `find_homomorphisms`, but each pattern atom matches against its own
/// target instance (used by semi-naive evaluation to pin one atom to the
/// delta relation).
pub fn find_homomorphisms_multi(
    pattern: &[Atom],
    targets: &[&Instance],
    seed: &Substitution,
    limit: Option<usize>,
) -> Result<Vec<Substitution>> {
    assert_eq!(pattern.len(), targets.len());
    for (a, t) in pattern.iter().zip(targets) {
        t.schema.check_atom(a)?;
    }
    let mut out = Vec::new();
    if limit == Some(0) {
        return Ok(out);
    }
    let mut current = seed.clone();
    search(pattern, targets, &mut current, 0, limit, &mut out);
    Ok(out)
}

/// True iff at least one extension of `seed` exists.
pub fn has_homomorphism(pattern: &[Atom], target: &Instance, seed: &Substitution) -> Result<bool> {
    Ok(!find_homomorphisms(pattern, target, seed, Some(1))?.is_empty())
}

fn search(
    pattern: &[Atom],
    targets: &[&Instance],
    current: &mut Substitution,
    idx: usize,
    limit: Option<usize>,
    out: &mut Vec<Substitution>,
) -> bool {
    if idx == pattern.len() {
        out.push(current.clone());
        return limit.is_some_and(|l| out.len() >= l);
    }
    let atom = &pattern[idx];
    for fact in targets[idx].facts_of(&atom.pred) {
        let mut bound: Vec<String> = Vec::new();
        let mut ok = true;
        for (pat_t, fact_t) in atom.args.iter().zip(&fact.args) {
            match pat_t {
                Term::Var(v) => match current.get(v) {
                    Some(t) if t == fact_t => {}
                    Some(_) => {
                        ok = false;
                        break;
                    }
                    None => {
                        current.bind(v.clone(), fact_t.clone());
                        bound.push(v.clone());
                    }
                },
                t if t == fact_t => {}
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok && search(pattern, targets, current, idx + 1, limit, out) {
            return true;
        }
        for v in bound {
            current.remove(&v);
        }
    }
    false
}
