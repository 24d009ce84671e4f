//! Term unification via union-find, exposing the merged classes so callers
//! can enforce side conditions (piece rewriting restricts what existential
//! variables may be identified with).

use crate::ast::{Substitution, Term};
use indexmap::IndexMap;

#[derive(Debug, Clone, Default)]
pub struct Unifier {
    parent: IndexMap<Term, Term>,
}

impl Unifier {
    pub fn new() -> Unifier {
        Unifier::default()
    }

    fn find(&mut self, t: &Term) -> Term {
        let p = match self.parent.get(t) {
            Some(p) => p.clone(),
            None => {
                self.parent.insert(t.clone(), t.clone());
                return t.clone();
            }
        };
        if &p == t {
            return p;
        }
        let root = self.find(&p);
        self.parent.insert(t.clone(), root.clone());
        root
    }

    /// Merges the classes of `a` and `b`. Fails if that would identify two
    /// distinct constants. Constants win representative elections so the
    /// final substitution grounds variables where possible.
    pub fn union(&mut self, a: &Term, b: &Term) -> Result<(), ()> {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra == rb {
            return Ok(());
        }
        match (&ra, &rb) {
            (Term::Var(_), _) => {
                self.parent.insert(ra, rb);
            }
            (_, Term::Var(_)) => {
                self.parent.insert(rb, ra);
            }
            _ => return Err(()), // two distinct non-variables
        }
        Ok(())
    }

    /// The merged classes, in first-touch order; singletons included.
    pub fn classes(&mut self) -> Vec<Vec<Term>> {
        let keys: Vec<Term> = self.parent.keys().cloned().collect();
        let mut by_root: IndexMap<Term, Vec<Term>> = IndexMap::new();
        for k in keys {
            let r = self.find(&k);
            by_root.entry(r).or_default().push(k);
        }
        by_root.into_values().collect()
    }

    /// Maps every touched variable to its class representative.
    pub fn substitution(&mut self) -> Substitution {
        let keys: Vec<Term> = self.parent.keys().cloned().collect();
        let mut s = Substitution::new();
        for k in keys {
            if let Term::Var(v) = &k {
                let r = self.find(&k);
                if r != k {
                    s.bind(v.clone(), r);
                }
            }
        }
        s
    }
}

/// Most general unifier of the given term pairs, if any.
pub fn mgu(pairs: &[(Term, Term)]) -> Option<Substitution> {
    let mut u = Unifier::new();
    for (a, b) in pairs {
        u.union(a, b).ok()?;
    }
    Some(u.substitution())
}
