//! The restricted chase with FIFO trigger scheduling, budgets, chase-based
//! certain-answer checking, and canonical tree decompositions of chase runs.

use crate::ast::{Atom, Instance, Substitution, Term};
use crate::decomp::{TdNode, TreeDecomposition};
use crate::error::{Error, Result};
use crate::hom::{find_homomorphisms, find_homomorphisms_multi, has_homomorphism};
use crate::query::UnionQuery;
use crate::tgd::{classify_rules, Tgd};
use indexmap::IndexSet;
use serde::Serialize;
use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ChaseConfig {
    /// Counts fired triggers.
    pub max_steps: usize,
    /// Counts created nulls; whichever budget trips first stops the run.
    pub max_new_nulls: usize,
    pub null_counter_start: u64,
}

impl Default for ChaseConfig {
    fn default() -> ChaseConfig {
        ChaseConfig {
            max_steps: 10_000,
            max_new_nulls: 10_000,
            null_counter_start: 1,
        }
    }
}

impl ChaseConfig {
    pub fn with_steps(max_steps: usize) -> ChaseConfig {
        ChaseConfig {
            max_steps,
            ..ChaseConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ChaseStatus {
    Saturated,
    BudgetExhausted,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChaseResult {
    pub input: Instance,
    pub instance: Instance,
    pub status: ChaseStatus,
    /// Fired triggers: (rule index, substitution including the fresh nulls
    /// chosen for existentials). Replaying reproduces `instance` exactly.
    pub step_log: Vec<(usize, Substitution)>,
    pub rules: Vec<Tgd>,
    pub cfg: ChaseConfig,
}

/// Single-threaded chase session owning its null counter.
struct Session {
    instance: Instance,
    rules: Vec<Tgd>,
    cfg: ChaseConfig,
    queue: VecDeque<(usize, Substitution)>,
    seen: IndexSet<(usize, Vec<(String, Term)>)>,
    null_counter: u64,
    fired: usize,
    nulls_created: usize,
    step_log: Vec<(usize, Substitution)>,
}

enum StepOutcome {
    Fired,
    Saturated,
    Budget,
}

impl Session {
    fn new(input: &Instance, rules: &[Tgd], cfg: ChaseConfig) -> Result<Session> {
        // Fresh nulls must not collide with nulls already in the input
        // (backV-materialized instances carry nulls).
        let floor = input
            .adom()
            .iter()
            .filter_map(|t| match t {
                Term::Null(n) => Some(*n + 1),
                _ => None,
            })
            .max()
            .unwrap_or(0);
        let mut s = Session {
            instance: input.clone(),
            rules: rules.to_vec(),
            cfg,
            queue: VecDeque::new(),
            seen: IndexSet::new(),
            null_counter: cfg.null_counter_start.max(floor),
            fired: 0,
            nulls_created: 0,
            step_log: Vec::new(),
        };
        s.discover()?;
        Ok(s)
    }

    /// Scans for body matches and enqueues unseen triggers in rule order,
    /// matches in enumeration order (FIFO discovery).
    fn discover(&mut self) -> Result<()> {
        for (idx, rule) in self.rules.iter().enumerate() {
            let homs = find_homomorphisms(&rule.body, &self.instance, &Substitution::new(), None)?;
            for h in homs {
                let key = (idx, h.sorted_pairs());
                if !self.seen.contains(&key) {
                    self.seen.insert(key);
                    self.queue.push_back((idx, h));
                }
            }
        }
        Ok(())
    }

    /// Semi-naive discovery: only matches using at least one just-added fact
    /// can be new, so pin each body atom in turn to the delta.
    fn discover_delta(&mut self, added: &[Atom]) -> Result<()> {
        if added.is_empty() {
            return Ok(());
        }
        let mut delta = Instance::new(self.instance.schema.clone());
        for f in added {
            delta.insert(f.clone())?;
        }
        for idx in 0..self.rules.len() {
            let body = self.rules[idx].body.clone();
            for pin in 0..body.len() {
                if !delta.facts_of(&body[pin].pred).next().is_some() {
                    continue;
                }
                let targets: Vec<&Instance> = (0..body.len())
                    .map(|i| if i == pin { &delta } else { &self.instance })
                    .collect();
                let homs =
                    find_homomorphisms_multi(&body, &targets, &Substitution::new(), None)?;
                for h in homs {
                    let key = (idx, h.sorted_pairs());
                    if !self.seen.contains(&key) {
                        self.seen.insert(key);
                        self.queue.push_back((idx, h));
                    }
                }
            }
        }
        Ok(())
    }

    /// A trigger is active iff the head has no extension homomorphism into
    /// the current instance (restricted-chase policy).
    fn is_active(&self, idx: usize, h: &Substitution) -> Result<bool> {
        let rule = &self.rules[idx];
        let mut seed = Substitution::new();
        for v in rule.frontier() {
            if let Some(t) = h.get(&v) {
                seed.bind(v, t.clone());
            }
        }
        Ok(!has_homomorphism(&rule.head, &self.instance, &seed)?)
    }

    fn step(&mut self) -> Result<StepOutcome> {
        loop {
            let Some((idx, h)) = self.queue.pop_front() else {
                return Ok(StepOutcome::Saturated);
            };
            if !self.is_active(idx, &h)? {
                continue;
            }
            let rule = self.rules[idx].clone();
            let exists = rule.existentials();
            if self.fired >= self.cfg.max_steps
                || self.nulls_created + exists.len() > self.cfg.max_new_nulls
            {
                self.queue.push_front((idx, h));
                return Ok(StepOutcome::Budget);
            }
            let mut full = h.clone();
            for v in exists {
                full.bind(v, Term::Null(self.null_counter));
                self.null_counter += 1;
                self.nulls_created += 1;
            }
            let mut added = Vec::new();
            for a in &rule.head {
                let fact = a.apply(&full);
                if self.instance.insert(fact.clone())? {
                    added.push(fact);
                }
            }
            self.fired += 1;
            self.step_log.push((idx, full));
            self.discover_delta(&added)?;
            return Ok(StepOutcome::Fired);
        }
    }

    fn finish(self, status: ChaseStatus) -> ChaseResult {
        ChaseResult {
            input: self.instance.clone(), // replaced below
            instance: self.instance,
            status,
            step_log: self.step_log,
            rules: self.rules,
            cfg: self.cfg,
        }
    }
}

/// Runs the restricted chase of `input` under `rules` within `cfg` budgets.
pub fn chase(input: &Instance, rules: &[Tgd], cfg: ChaseConfig) -> Result<ChaseResult> {
    let mut s = Session::new(input, rules, cfg)?;
    let status = loop {
        match s.step()? {
            StepOutcome::Fired => {}
            StepOutcome::Saturated => break ChaseStatus::Saturated,
            StepOutcome::Budget => break ChaseStatus::BudgetExhausted,
        }
    };
    let mut res = s.finish(status);
    res.input = input.clone();
    Ok(res)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum CertainAnswer {
    /// Sound: the query matched a chase prefix.
    Entailed {
        witness: Substitution,
        steps: usize,
    },
    /// Sound by universality of the chase: only reported after saturation.
    NotEntailedCertified,
    /// Budget exhausted without a match.
    Unknown,
}

/// Whether `db` and `rules` entail the Boolean query `q`, within budget.
pub fn certain_answer(
    db: &Instance,
    rules: &[Tgd],
    q: &UnionQuery,
    cfg: ChaseConfig,
) -> Result<CertainAnswer> {
    if !q.is_boolean() {
        return Err(Error::NonBooleanQuery);
    }
    let mut s = Session::new(db, rules, cfg)?;
    let mut steps = 0usize;
    loop {
        if let Some(w) = match_witness(q, &s.instance)? {
            return Ok(CertainAnswer::Entailed { witness: w, steps });
        }
        match s.step()? {
            StepOutcome::Fired => steps += 1,
            StepOutcome::Saturated => return Ok(CertainAnswer::NotEntailedCertified),
            StepOutcome::Budget => return Ok(CertainAnswer::Unknown),
        }
    }
}

fn match_witness(q: &UnionQuery, i: &Instance) -> Result<Option<Substitution>> {
    for d in &q.disjuncts {
        let mut homs = find_homomorphisms(&d.body, i, &Substitution::new(), Some(1))?;
        if let Some(h) = homs.pop() {
            return Ok(Some(h));
        }
    }
    Ok(None)
}

/// Convenience wrapper evaluating entailment as a plain bool where budget
/// exhaustion is unacceptable.
pub fn entails(db: &Instance, rules: &[Tgd], q: &UnionQuery, cfg: ChaseConfig) -> Result<bool> {
    match certain_answer(db, rules, q, cfg)? {
        CertainAnswer::Entailed { .. } => Ok(true),
        CertainAnswer::NotEntailedCertified => Ok(false),
        CertainAnswer::Unknown => Err(Error::Other(
            "chase budget exhausted where a certified answer was required".into(),
        )),
    }
}

/// Replays a result's step log against its input; used to validate that the
/// log reproduces the instance bit-for-bit.
pub fn replay_step_log(res: &ChaseResult) -> Result<Instance> {
    let mut inst = res.input.clone();
    for (idx, sub) in &res.step_log {
        for a in &res.rules[*idx].head {
            inst.insert(a.apply(sub))?;
        }
    }
    Ok(inst)
}

/// Extends `seed` (a decomposition of the input) with one child bag per
/// non-full chase step: the bag holds the instantiated head's terms and hangs
/// under the first node covering the frontier image.
pub fn emit_decomposition(res: &ChaseResult, seed: &TreeDecomposition) -> Result<TreeDecomposition> {
    if !classify_rules(&res.rules).frontier_guarded {
        return Err(Error::NotFrontierGuarded);
    }
    seed.validate(&res.input)?;
    let mut td = seed.clone();
    for (idx, sub) in &res.step_log {
        let rule = &res.rules[*idx];
        if rule.is_full() {
            // Full steps add facts over existing terms; the guard's bag
            // already covers them.
            continue;
        }
        let mut bag: Vec<Term> = Vec::new();
        for a in &rule.head {
            for t in &a.apply(sub).args {
                if !bag.contains(t) {
                    bag.push(t.clone());
                }
            }
        }
        let frontier_img: Vec<Term> = rule
            .frontier()
            .iter()
            .filter_map(|v| sub.get(v).cloned())
            .collect();
        let parent = (0..td.nodes.len())
            .find(|&v| frontier_img.iter().all(|t| td.nodes[v].bag.contains(t)))
            .ok_or_else(|| {
                Error::InvalidDecomposition("no bag covers a frontier image".into())
            })?;
        let child = td.nodes.len();
        td.nodes.push(TdNode {
            bag,
            children: vec![],
        });
        td.nodes[parent].children.push(child);
    }
    Ok(td)
}

/// Lists the atoms a decomposition fails to cover; empty means valid for `i`.
pub fn uncovered_facts(td: &TreeDecomposition, i: &Instance) -> Vec<Atom> {
    i.facts()
        .filter(|f| {
            !td.nodes
                .iter()
                .any(|n| f.args.iter().all(|t| n.bag.contains(t)))
        })
        .cloned()
        .collect()
}
