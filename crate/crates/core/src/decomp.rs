//! Rooted ordered tree decompositions with mechanical invariant checking.

use crate::ast::{Instance, Term};
use crate::error::{Error, Result};
use indexmap::IndexSet;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TdNode {
    /// Distinct terms; order is the local-name order used by tree codes.
    pub bag: Vec<Term>,
    pub children: Vec<usize>,
}

/// A rooted ordered tree of bags. `width` is the adjusted width: the maximum
/// bag size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TreeDecomposition {
    pub nodes: Vec<TdNode>,
    pub root: usize,
}

impl TreeDecomposition {
    pub fn single_bag(bag: Vec<Term>) -> TreeDecomposition {
        TreeDecomposition {
            nodes: vec![TdNode {
                bag,
                children: vec![],
            }],
            root: 0,
        }
    }

    /// A one-bag decomposition holding the whole active domain of `I`.
    pub fn trivial(i: &Instance) -> TreeDecomposition {
        TreeDecomposition::single_bag(i.adom())
    }

    pub fn width(&self) -> usize {
        self.nodes.iter().map(|n| n.bag.len()).max().unwrap_or(0)
    }

    pub fn parent_of(&self, v: usize) -> Option<usize> {
        self.nodes
            .iter()
            .position(|n| n.children.contains(&v))
    }

    /// Nodes in preorder (root first, children in order).
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

    /// Checks the two decomposition invariants against `I`:
    /// every fact's terms lie within some bag, and for each term the nodes
    /// whose bags contain it induce a connected subtree.
    pub fn validate(&self, i: &Instance) -> Result<()> {
        for (ix, n) in self.nodes.iter().enumerate() {
            let distinct: IndexSet<&Term> = n.bag.iter().collect();
            if distinct.len() != n.bag.len() {
                return Err(Error::InvalidDecomposition(format!(
                    "bag {ix} repeats a term"
                )));
            }
        }
        // Tree shape: every node except the root has exactly one parent.
        let mut indeg = vec![0usize; self.nodes.len()];
        for n in &self.nodes {
            for &c in &n.children {
                indeg[c] += 1;
            }
        }
        for (v, d) in indeg.iter().enumerate() {
            let expected = usize::from(v != self.root);
            if *d != expected {
                return Err(Error::InvalidDecomposition(format!(
                    "node {v} has in-degree {d}"
                )));
            }
        }
        if self.preorder().len() != self.nodes.len() {
            return Err(Error::InvalidDecomposition("tree is not connected".into()));
        }

        for f in i.facts() {
            let covered = self.nodes.iter().any(|n| {
                f.args.iter().all(|t| n.bag.contains(t))
            });
            if !covered {
                return Err(Error::InvalidDecomposition(format!(
                    "fact {f} covered by no bag"
                )));
            }
        }

        let mut terms: IndexSet<Term> = IndexSet::new();
        for n in &self.nodes {
            for t in &n.bag {
                terms.insert(t.clone());
            }
        }
        for t in &terms {
            let holding: IndexSet<usize> = self
                .nodes
                .iter()
                .enumerate()
                .filter(|(_, n)| n.bag.contains(t))
                .map(|(ix, _)| ix)
                .collect();
            // Connected iff exactly one holding node has its parent outside
            // the holding set (the subtree's top).
            let tops = holding
                .iter()
                .filter(|&&v| match self.parent_of(v) {
                    Some(p) => !holding.contains(&p),
                    None => true,
                })
                .count();
            if tops != 1 {
                return Err(Error::InvalidDecomposition(format!(
                    "occurrences of term {t} are not connected"
                )));
            }
        }
        Ok(())
    }
}
