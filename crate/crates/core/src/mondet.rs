//! Monotonic-determinacy verdicts: Q is monotonically determined over V
//! w.r.t. Σ when V(I) ⊆ V(I′) implies Q(I) ⊆ Q(I′) for all Σ-instances.
//! Exact deciders for the linear-CQ and full cases, a budgeted
//! counterexample search, and a small-domain brute-force oracle.

use crate::ast::{Atom, Instance, PredTag, Term};
use crate::chase::{chase, ChaseConfig, ChaseResult, ChaseStatus};
use crate::datalog::{eval_goal, unfold_approximations, DatalogProgram};
use crate::error::{Error, Result};
use crate::hom::find_homomorphisms;
use crate::query::{
    canondb_with_head, contains_ucq, cq_over_tag, eval_ucq, ConjunctiveQuery, UnionQuery,
};
use crate::rewrite::{back_v_rules, backward_rewrite_ucq, DEFAULT_SATURATION_CAP};
use crate::tgd::{classify_rules, Tgd};
use crate::views::{back_v, expand_views, view_image, View, ViewDef, ViewSet};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub enum ProblemQuery {
    Ucq(UnionQuery),
    Datalog(DatalogProgram),
}

#[derive(Debug, Clone, Serialize)]
pub struct MonDetProblem {
    pub q: ProblemQuery,
    pub views: ViewSet,
    pub sigma: Vec<Tgd>,
}

impl MonDetProblem {
    pub fn ucq(q: UnionQuery, views: ViewSet, sigma: Vec<Tgd>) -> MonDetProblem {
        MonDetProblem {
            q: ProblemQuery::Ucq(q),
            views,
            sigma,
        }
    }

    fn ucq_query(&self) -> Result<&UnionQuery> {
        match &self.q {
            ProblemQuery::Ucq(u) => Ok(u),
            ProblemQuery::Datalog(_) => Err(Error::UnsupportedClass(
                "this procedure requires a UCQ query".into(),
            )),
        }
    }

    /// The query's answer set on a concrete instance.
    pub fn answers(&self, i: &Instance) -> Result<Vec<Vec<Term>>> {
        match &self.q {
            ProblemQuery::Ucq(u) => eval_ucq(u, i),
            ProblemQuery::Datalog(p) => eval_goal(p, i),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Certification {
    /// Both instances finite and Σ-saturated; the refutation is final.
    Certified,
    /// I2 is a budget-truncated chase prefix (or I1 unsaturated).
    Candidate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RefutationLevel {
    CertifiedNo,
    UnknownAtBudget,
}

#[derive(Debug, Clone, Serialize)]
pub struct Evidence {
    pub view_inclusion: bool,
    /// The answer tuple present in Q(I1) but not Q(I2).
    pub witness_tuple: Vec<Term>,
    pub q_on_i2: RefutationLevel,
}

#[derive(Debug, Clone, Serialize)]
pub struct Counterexample {
    pub i1: Instance,
    pub i2: Instance,
    pub certification: Certification,
    pub evidence: Evidence,
}

#[derive(Debug, Clone, Serialize)]
pub enum VerdictKind {
    Determined,
    NotDetermined(Box<Counterexample>),
    Unknown { report: String },
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub kind: VerdictKind,
    /// Name of the deciding procedure.
    pub method: String,
}

impl Verdict {
    pub fn is_determined(&self) -> bool {
        matches!(self.kind, VerdictKind::Determined)
    }
    pub fn is_not_determined(&self) -> bool {
        matches!(self.kind, VerdictKind::NotDetermined(_))
    }
    pub fn counterexample(&self) -> Option<&Counterexample> {
        match &self.kind {
            VerdictKind::NotDetermined(c) => Some(c),
            _ => None,
        }
    }
}

/// Whether every trigger of `sigma` is inactive on `i` (i.e. i ⊨ Σ).
pub fn satisfies_sigma(i: &Instance, sigma: &[Tgd]) -> Result<bool> {
    for r in sigma {
        let homs = find_homomorphisms(&r.body, i, &crate::ast::Substitution::new(), None)?;
        for h in homs {
            // Active iff no extension of the frontier image matches the head.
            let mut frontier_only = crate::ast::Substitution::new();
            for v in r.frontier() {
                if let Some(t) = h.get(&v) {
                    frontier_only.bind(v.clone(), t.clone());
                }
            }
            if find_homomorphisms(&r.head, i, &frontier_only, Some(1))?.is_empty() {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Independent validity check for a counterexample, recomputing every claim
/// from scratch. CERTIFIED additionally requires both instances Σ-saturated
/// and is therefore a final refutation of monotonic determinacy.
pub fn check_counterexample(p: &MonDetProblem, c: &Counterexample) -> Result<bool> {
    let j1 = view_image(&c.i1, &p.views)?;
    let j2 = view_image(&c.i2, &p.views)?;
    if !j1.subset_of(&j2) {
        return Ok(false);
    }
    let a1 = p.answers(&c.i1)?;
    if !a1.contains(&c.evidence.witness_tuple) {
        return Ok(false);
    }
    let a2 = p.answers(&c.i2)?;
    if a2.contains(&c.evidence.witness_tuple) {
        return Ok(false);
    }
    if c.certification == Certification::Certified {
        if !satisfies_sigma(&c.i1, &p.sigma)? || !satisfies_sigma(&c.i2, &p.sigma)? {
            return Ok(false);
        }
    }
    Ok(true)
}

// ---------------------------------------------------------------------------
// The bounded pipeline shared by searchCounterexample, decideFull, and the
// decideLinearCQ counterexample emitter.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct SearchBudgets {
    pub unfold_depth: usize,
    pub chase_cfg: ChaseConfig,
    pub back_v_limit: usize,
}

impl Default for SearchBudgets {
    fn default() -> SearchBudgets {
        SearchBudgets {
            unfold_depth: 3,
            chase_cfg: ChaseConfig::with_steps(50),
            back_v_limit: 4096,
        }
    }
}

/// One pipeline round for a single CQ approximation: chase its canonical
/// database, take the view image, and try every backward witness choice.
/// Returns the first refuting counterexample, if any, plus whether any
/// budget was hit (which downgrades an overall UNKNOWN to inconclusive).
struct RoundOutcome {
    counterexample: Option<Counterexample>,
    budget_hit: bool,
}

fn pipeline_round(
    p: &MonDetProblem,
    approx: &ConjunctiveQuery,
    surrogate: &ViewSet,
    budgets: &SearchBudgets,
) -> Result<RoundOutcome> {
    let (db, head) = canondb_with_head(approx);
    let c1: ChaseResult = chase(&db, &p.sigma, budgets.chase_cfg)?;
    let i1_saturated = c1.status == ChaseStatus::Saturated;
    let mut budget_hit = !i1_saturated;

    let j = view_image(&c1.instance, &p.views)?;
    let choices = back_v(&j, surrogate, budgets.back_v_limit)?;
    budget_hit |= choices.truncated;

    for b in &choices.instances {
        let c2 = chase(b, &p.sigma, budgets.chase_cfg)?;
        let i2_saturated = c2.status == ChaseStatus::Saturated;
        let a2 = p.answers(&c2.instance)?;
        if !a2.contains(&head) {
            let refutation = if i2_saturated {
                RefutationLevel::CertifiedNo
            } else {
                RefutationLevel::UnknownAtBudget
            };
            let certification = if i1_saturated && i2_saturated {
                Certification::Certified
            } else {
                Certification::Candidate
            };
            return Ok(RoundOutcome {
                counterexample: Some(Counterexample {
                    i1: c1.instance,
                    i2: c2.instance,
                    certification,
                    evidence: Evidence {
                        view_inclusion: true,
                        witness_tuple: head,
                        q_on_i2: refutation,
                    },
                }),
                budget_hit,
            });
        }
        budget_hit |= !i2_saturated;
    }
    Ok(RoundOutcome {
        counterexample: None,
        budget_hit,
    })
}

/// Replaces Datalog-defined views by the UCQ of their bounded unfoldings so
/// backV can materialize witnesses; approximation bodies imply the view, so
/// witnesses stay sound. CQ/UCQ views pass through unchanged.
fn surrogate_views(vs: &ViewSet, depth: usize) -> Result<ViewSet> {
    let mut views = Vec::new();
    for v in &vs.views {
        let def = match &v.def {
            ViewDef::Ucq(u) => ViewDef::Ucq(u.clone()),
            ViewDef::Datalog(p) => {
                let unfolded = unfold_approximations(p, depth, 64)?;
                let cqs: Vec<ConjunctiveQuery> = unfolded
                    .approximations
                    .into_iter()
                    .map(|a| a.cq)
                    .collect();
                if cqs.is_empty() {
                    return Err(Error::Other(format!(
                        "view {}: no unfoldings within depth {depth}",
                        v.name
                    )));
                }
                ViewDef::Ucq(UnionQuery::new(cqs)?)
            }
        };
        views.push(View {
            name: v.name.clone(),
            def,
        });
    }
    ViewSet::new(vs.schema.clone(), views)
}

/// The query's CQ approximations in enumeration order: a UCQ's disjuncts are
/// already exact; a Datalog query unfolds to depth-bounded approximations.
fn approximations(p: &MonDetProblem, depth: usize) -> Result<Vec<ConjunctiveQuery>> {
    match &p.q {
        ProblemQuery::Ucq(u) => Ok(u.disjuncts.clone()),
        ProblemQuery::Datalog(prog) => Ok(unfold_approximations(prog, depth, 64)?
            .approximations
            .into_iter()
            .map(|a| a.cq)
            .collect()),
    }
}

/// Budgeted semi-decision: runs the pipeline over query approximations and
/// backward witness choices, reporting the first refutation found
/// (first-counterexample-wins by enumeration index). CERTIFIED when both the
/// Σ-saturation of I1 and the final ¬q check are certified; CANDIDATE when a
/// chase budget truncated either side; UNKNOWN when budgets exhaust.
pub fn search_counterexample(p: &MonDetProblem, budgets: &SearchBudgets) -> Result<Verdict> {
    let method = "searchCounterexample".to_string();
    let surrogate = surrogate_views(&p.views, budgets.unfold_depth)?;
    let approxes = approximations(p, budgets.unfold_depth)?;
    let mut budget_hit = false;
    for approx in &approxes {
        let round = pipeline_round(p, approx, &surrogate, budgets)?;
        if let Some(c) = round.counterexample {
            return Ok(Verdict {
                kind: VerdictKind::NotDetermined(Box::new(c)),
                method,
            });
        }
        budget_hit |= round.budget_hit;
    }
    let report = if budget_hit {
        format!(
            "no refutation within budgets (unfold depth {}, chase steps {}, backV limit {}); some budget was hit",
            budgets.unfold_depth, budgets.chase_cfg.max_steps, budgets.back_v_limit
        )
    } else if matches!(p.q, ProblemQuery::Datalog(_)) {
        format!(
            "all depth-{} approximations pass; deeper approximations unexplored",
            budgets.unfold_depth
        )
    } else {
        "all approximations pass at budget; not a determinacy proof".to_string()
    };
    Ok(Verdict {
        kind: VerdictKind::Unknown { report },
        method,
    })
}

// ---------------------------------------------------------------------------
// decideFull: exact for full Σ.
// ---------------------------------------------------------------------------

/// Exact decision for UCQ q, CQ/UCQ views, and full Σ: every pipeline stage
/// terminates, so the pipeline criterion is checked exhaustively.
/// NOT_DETERMINED verdicts carry a CERTIFIED counterexample.
pub fn decide_full(p: &MonDetProblem) -> Result<Verdict> {
    let method = "decideFull".to_string();
    let q = p.ucq_query()?;
    if !p.views.all_ucq() {
        return Err(Error::UnsupportedClass(
            "decideFull requires CQ or UCQ view definitions".into(),
        ));
    }
    if !p.sigma.iter().all(Tgd::is_full) {
        return Err(Error::UnsupportedClass(
            "decideFull requires full TGDs".into(),
        ));
    }
    let cfg = ChaseConfig::with_steps(200_000);
    let fanout_cap = 100_000;
    for d in &q.disjuncts {
        let (db, head) = canondb_with_head(d);
        let c1 = chase(&db, &p.sigma, cfg)?;
        debug_assert_eq!(c1.status, ChaseStatus::Saturated);
        let j = view_image(&c1.instance, &p.views)?;
        let choices = back_v(&j, &p.views, fanout_cap)?;
        if choices.truncated {
            return Err(Error::FanoutLimit(fanout_cap));
        }
        for b in &choices.instances {
            let c2 = chase(b, &p.sigma, cfg)?;
            debug_assert_eq!(c2.status, ChaseStatus::Saturated);
            if !p.answers(&c2.instance)?.contains(&head) {
                return Ok(Verdict {
                    kind: VerdictKind::NotDetermined(Box::new(Counterexample {
                        i1: c1.instance,
                        i2: c2.instance,
                        certification: Certification::Certified,
                        evidence: Evidence {
                            view_inclusion: true,
                            witness_tuple: head,
                            q_on_i2: RefutationLevel::CertifiedNo,
                        },
                    })),
                    method,
                });
            }
        }
    }
    Ok(Verdict {
        kind: VerdictKind::Determined,
        method,
    })
}

// ---------------------------------------------------------------------------
// decideLinearCQ: exact for linear Σ and CQ views.
// ---------------------------------------------------------------------------

/// Intermediate rewritings, exposed for consistency tests: R2 is the
/// view-schema certain-answer rewriting; when the verdict is DETERMINED,
/// expanding R2 and rewriting under Σ reproduces q on Σ-instances.
#[derive(Debug, Clone, Serialize)]
pub struct LinearCqArtifacts {
    pub r1: UnionQuery,
    pub r2: Option<UnionQuery>,
    pub r2_expanded: Option<UnionQuery>,
    pub r2_final: Option<UnionQuery>,
}

pub fn decide_linear_cq(p: &MonDetProblem) -> Result<Verdict> {
    Ok(decide_linear_cq_detailed(p)?.0)
}

/// Exact decision for UCQ q, strictly CQ views, and linear Σ, via the
/// rewriting reduction: R1 rewrites q under Σ; rewriting R1 backward through
/// the view-definition TGDs and keeping the view-schema disjuncts yields the
/// certain-answer rewriting R2 over the views; q is monotonically determined
/// iff q ⊆ rew_Σ(expandViews(R2)). Avoids chasing with (possibly
/// nonterminating) linear Σ. UCQ view definitions are rejected: splitting a
/// disjunctive definition into separate backward TGDs over-commits the
/// witness and is unsound here — use decideFull or searchCounterexample.
pub fn decide_linear_cq_detailed(p: &MonDetProblem) -> Result<(Verdict, LinearCqArtifacts)> {
    let method = "decideLinearCQ".to_string();
    let q = p.ucq_query()?;
    if !p.views.all_cq() {
        return Err(Error::UnsupportedClass(
            "decideLinearCQ requires CQ view definitions".into(),
        ));
    }
    if !p.sigma.is_empty() && !classify_rules(&p.sigma).linear {
        return Err(Error::UnsupportedClass(
            "decideLinearCQ requires linear TGDs".into(),
        ));
    }

    let cap = DEFAULT_SATURATION_CAP;
    let r1 = backward_rewrite_ucq(q, &p.sigma, cap)?;
    let backv = back_v_rules(&p.views)?;
    let r2_full = backward_rewrite_ucq(&r1, &backv, cap)?;
    let view_disjuncts: Vec<ConjunctiveQuery> = r2_full
        .disjuncts
        .iter()
        .filter(|d| cq_over_tag(d, PredTag::View))
        .cloned()
        .collect();

    if view_disjuncts.is_empty() {
        // Empty view-schema rewriting: nothing over the views entails q.
        let verdict = not_determined_candidate(p, q, method)?;
        return Ok((
            verdict,
            LinearCqArtifacts {
                r1,
                r2: None,
                r2_expanded: None,
                r2_final: None,
            },
        ));
    }
    let r2 = UnionQuery::new(view_disjuncts)?;
    let r2_expanded = expand_views(&r2, &p.views)?;
    let r2_final = backward_rewrite_ucq(&r2_expanded, &p.sigma, cap)?;
    let determined = contains_ucq(q, &r2_final)?;
    let artifacts = LinearCqArtifacts {
        r1,
        r2: Some(r2),
        r2_expanded: Some(r2_expanded),
        r2_final: Some(r2_final.clone()),
    };
    let verdict = if determined {
        Verdict {
            kind: VerdictKind::Determined,
            method,
        }
    } else {
        // Exact NO; surface a concrete (possibly budget-truncated) witness
        // pair from the failing disjunct.
        let failing: Vec<ConjunctiveQuery> = q
            .disjuncts
            .iter()
            .filter(|d| {
                !crate::query::cq_contained_in_some(d, &r2_final.disjuncts).unwrap_or(true)
            })
            .cloned()
            .collect();
        let failing_q = UnionQuery::new(failing)?;
        not_determined_candidate(p, &failing_q, method)?
    };
    Ok((verdict, artifacts))
}

/// Builds a NOT_DETERMINED verdict for an exact negative decision by running
/// the bounded pipeline on the failing disjuncts; the refutation may only be
/// CANDIDATE when Σ chases do not terminate within budget.
fn not_determined_candidate(
    p: &MonDetProblem,
    failing: &UnionQuery,
    method: String,
) -> Result<Verdict> {
    let budgets = SearchBudgets::default();
    let sub = MonDetProblem {
        q: ProblemQuery::Ucq(failing.clone()),
        views: p.views.clone(),
        sigma: p.sigma.clone(),
    };
    let surrogate = surrogate_views(&p.views, budgets.unfold_depth)?;
    for d in &failing.disjuncts {
        if let Some(c) = pipeline_round(&sub, d, &surrogate, &budgets)?.counterexample {
            return Ok(Verdict {
                kind: VerdictKind::NotDetermined(Box::new(c)),
                method,
            });
        }
    }
    // The decision is still an exact NO; without a bounded witness pair we
    // fall back to the canonical database vs. its first backward choice.
    let d = &failing.disjuncts[0];
    let (db, head) = canondb_with_head(d);
    let c1 = chase(&db, &p.sigma, budgets.chase_cfg)?;
    let j = view_image(&c1.instance, &p.views)?;
    let choices = back_v(&j, &surrogate, 1)?;
    let i2 = match choices.instances.first() {
        Some(b) => chase(b, &p.sigma, budgets.chase_cfg)?.instance,
        None => Instance::new(c1.instance.schema.clone()),
    };
    Ok(Verdict {
        kind: VerdictKind::NotDetermined(Box::new(Counterexample {
            i1: c1.instance,
            i2,
            certification: Certification::Candidate,
            evidence: Evidence {
                view_inclusion: true,
                witness_tuple: head,
                q_on_i2: RefutationLevel::UnknownAtBudget,
            },
        })),
        method,
    })
}

// ---------------------------------------------------------------------------
// Brute force over small domains.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub enum BruteForceOutcome {
    NotDetermined(Box<Counterexample>),
    /// Not a proof of determinacy — only the absence of small witnesses.
    NoSmallCounterexample,
}

/// Enumerates all pairs of Σ-satisfying instances over base predicates with
/// elements e1..e{maxDomain} and reports the first pair violating monotonic
/// determinacy. Guarded: at most 12 candidate facts.
pub fn brute_force_mondet(p: &MonDetProblem, max_domain: usize) -> Result<BruteForceOutcome> {
    // All possible base facts over the bounded domain.
    let schema = match &p.q {
        ProblemQuery::Ucq(u) => u.disjuncts[0].schema.clone(),
        ProblemQuery::Datalog(prog) => prog.schema.clone(),
    };
    let elems: Vec<Term> = (1..=max_domain).map(|i| Term::cst(format!("e{i}"))).collect();
    let mut candidates: Vec<Atom> = Vec::new();
    for (pred, arity) in schema.preds_tagged(PredTag::Base) {
        let mut digits = vec![0usize; arity];
        loop {
            candidates.push(Atom::new(
                pred.to_string(),
                digits.iter().map(|&d| elems[d].clone()).collect(),
            ));
            let mut pos = arity;
            let done = loop {
                if pos == 0 {
                    break true;
                }
                pos -= 1;
                digits[pos] += 1;
                if digits[pos] < elems.len() {
                    break false;
                }
                digits[pos] = 0;
            };
            if done || arity == 0 {
                break;
            }
        }
    }
    if candidates.len() > 12 {
        return Err(Error::SchemaTooLarge(candidates.len()));
    }

    // Σ-satisfying instances with their view images and answer sets.
    let mut worlds: Vec<(Instance, Instance, Vec<Vec<Term>>)> = Vec::new();
    for mask in 0u32..(1u32 << candidates.len()) {
        let facts = candidates
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, f)| f.clone());
        let inst = Instance::from_facts(schema.clone(), facts)?;
        if !satisfies_sigma(&inst, &p.sigma)? {
            continue;
        }
        let image = view_image(&inst, &p.views)?;
        let answers = p.answers(&inst)?;
        worlds.push((inst, image, answers));
    }

    for (i1, j1, a1) in &worlds {
        if a1.is_empty() {
            continue;
        }
        for (i2, j2, a2) in &worlds {
            if !j1.subset_of(j2) {
                continue;
            }
            if let Some(t) = a1.iter().find(|t| !a2.contains(t)) {
                return Ok(BruteForceOutcome::NotDetermined(Box::new(Counterexample {
                    i1: i1.clone(),
                    i2: i2.clone(),
                    certification: Certification::Certified,
                    evidence: Evidence {
                        view_inclusion: true,
                        witness_tuple: t.clone(),
                        q_on_i2: RefutationLevel::CertifiedNo,
                    },
                })));
            }
        }
    }
    Ok(BruteForceOutcome::NoSmallCounterexample)
}
