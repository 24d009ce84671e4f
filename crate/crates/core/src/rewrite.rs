//! Certain-answer rewriting engines: backward (piece) UCQ rewriting for
//! linear and source-to-target TGDs, inverse-rules Datalog rewriting over
//! full TGDs, and view-image rewriting extraction.

use crate::ast::{Atom, PredTag, Schema, Substitution, Term};
use crate::chase::{chase, ChaseConfig, ChaseStatus};
use crate::datalog::{DatalogProgram, DatalogRule};
use crate::error::{Error, Result};
use crate::query::{canondb_with_head, hom_equivalent, normalize_cq, ConjunctiveQuery, UnionQuery};
use crate::tgd::{classify_rules, Tgd};
use crate::unify::Unifier;
use crate::views::{view_image, ViewSet};
use indexmap::{IndexMap, IndexSet};
use serde::Serialize;
use std::sync::Arc;

/// Default cap on the number of disjuncts a saturation may accumulate.
pub const DEFAULT_SATURATION_CAP: usize = 512;

#[derive(Debug, Clone, Serialize)]
pub struct RewriteStep {
    pub disjunct: usize,
    pub rule: usize,
    /// Body atom indices of the rewritten piece.
    pub piece: Vec<usize>,
    pub unifier: Substitution,
}

#[derive(Debug, Clone, Serialize)]
pub struct RewriteTrace {
    pub steps: Vec<RewriteStep>,
    pub final_query: UnionQuery,
}

/// Saturating backward rewriting: the output R satisfies D ⊨ R iff D ∧ Σ ⊨ q
/// for every instance D. Requires Σ linear or source-to-target.
///
/// Queries whose answer variables would have to unify with constants are not
/// supported (such unifiers are skipped); constant-free queries and Boolean
/// queries get complete rewritings.
pub fn backward_rewrite_ucq(q: &UnionQuery, sigma: &[Tgd], cap: usize) -> Result<UnionQuery> {
    Ok(backward_rewrite_traced(q, sigma, cap)?.final_query)
}

pub fn backward_rewrite_traced(
    q: &UnionQuery,
    sigma: &[Tgd],
    cap: usize,
) -> Result<RewriteTrace> {
    if !sigma.is_empty() {
        let cls = classify_rules(sigma);
        if !cls.linear && !cls.source_to_target {
            return Err(Error::UnsupportedClass(
                "backward rewriting needs linear or source-to-target rules".into(),
            ));
        }
    }
    let mut result: Vec<ConjunctiveQuery> = q.disjuncts.clone();
    let mut steps: Vec<RewriteStep> = Vec::new();
    let mut cursor = 0usize;
    while cursor < result.len() {
        let d = result[cursor].clone();
        for (ri, rule) in sigma.iter().enumerate() {
            for (candidate, piece, unifier) in rewrite_candidates(&d, rule, ri)? {
                if result.len() >= cap {
                    return Err(Error::SaturationBudget(cap));
                }
                let mut known = false;
                for existing in &result {
                    if hom_equivalent(existing, &candidate)? {
                        known = true;
                        break;
                    }
                }
                if !known {
                    steps.push(RewriteStep {
                        disjunct: cursor,
                        rule: ri,
                        piece,
                        unifier,
                    });
                    result.push(candidate);
                }
            }
        }
        cursor += 1;
    }
    let final_query = UnionQuery::new(result)?;
    Ok(RewriteTrace { steps, final_query })
}

/// Replays a trace's steps from the input query; the result must equal the
/// trace's final query (auditable rewritings).
pub fn replay_trace(q: &UnionQuery, sigma: &[Tgd], trace: &RewriteTrace) -> Result<UnionQuery> {
    let mut result: Vec<ConjunctiveQuery> = q.disjuncts.clone();
    for step in &trace.steps {
        let d = &result[step.disjunct];
        let rule = freshen_rule(&sigma[step.rule], step.rule);
        let mut body: Vec<Atom> = d
            .body
            .iter()
            .enumerate()
            .filter(|(i, _)| !step.piece.contains(i))
            .map(|(_, a)| a.apply(&step.unifier))
            .collect();
        for a in &rule.body {
            let a = a.apply(&step.unifier);
            if !body.contains(&a) {
                body.push(a);
            }
        }
        let head: Vec<String> = d
            .head
            .iter()
            .map(|v| match step.unifier.get(v) {
                Some(Term::Var(w)) => w.clone(),
                _ => v.clone(),
            })
            .collect();
        result.push(normalize_cq(&ConjunctiveQuery::new(
            d.schema.clone(),
            head,
            body,
        )?));
    }
    UnionQuery::new(result)
}

fn freshen_rule(rule: &Tgd, ri: usize) -> Tgd {
    let mut fr = Substitution::new();
    for a in rule.body.iter().chain(&rule.head) {
        for v in a.vars() {
            if fr.get(v).is_none() {
                fr.bind(v.to_string(), Term::var(format!("{v}_r{ri}")));
            }
        }
    }
    rule.apply(&fr)
}

/// All sound one-step piece rewritings of `d` with `rule`.
fn rewrite_candidates(
    d: &ConjunctiveQuery,
    rule: &Tgd,
    ri: usize,
) -> Result<Vec<(ConjunctiveQuery, Vec<usize>, Substitution)>> {
    // Freshen the rule so its variables cannot clash with the query's.
    let rule = freshen_rule(rule, ri);
    let head_preds: IndexSet<&str> = rule.head.iter().map(|a| a.pred.as_str()).collect();
    let rule_vars: IndexSet<String> = rule
        .body_vars()
        .into_iter()
        .chain(rule.head_vars())
        .collect();
    let existentials: IndexSet<String> = rule.existentials().into_iter().collect();
    let answer_vars: IndexSet<&str> = d.head.iter().map(String::as_str).collect();

    // Candidate piece positions: query atoms whose predicate occurs in the head.
    let positions: Vec<usize> = (0..d.body.len())
        .filter(|&i| head_preds.contains(d.body[i].pred.as_str()))
        .collect();

    let mut out = Vec::new();
    // Nonempty subsets of candidate positions.
    for mask in 1u64..(1u64 << positions.len().min(16)) {
        let piece: Vec<usize> = positions
            .iter()
            .enumerate()
            .filter(|(b, _)| mask & (1 << b) != 0)
            .map(|(_, &i)| i)
            .collect();
        // Assignments of piece atoms to same-predicate head atoms.
        let choices: Vec<Vec<usize>> = piece
            .iter()
            .map(|&i| {
                (0..rule.head.len())
                    .filter(|&h| rule.head[h].pred == d.body[i].pred)
                    .collect()
            })
            .collect();
        let mut assignment = vec![0usize; piece.len()];
        'assign: loop {
            if let Some((cand, sub)) = try_unify(
                d,
                &rule,
                &piece,
                &assignment
                    .iter()
                    .enumerate()
                    .map(|(k, &c)| choices[k][c])
                    .collect::<Vec<usize>>(),
                &rule_vars,
                &existentials,
                &answer_vars,
            )? {
                out.push((cand, piece.clone(), sub));
            }
            // Odometer over head-atom choices.
            let mut pos = piece.len();
            loop {
                if pos == 0 {
                    break 'assign;
                }
                pos -= 1;
                assignment[pos] += 1;
                if assignment[pos] < choices[pos].len() {
                    break;
                }
                assignment[pos] = 0;
            }
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn try_unify(
    d: &ConjunctiveQuery,
    rule: &Tgd,
    piece: &[usize],
    head_choice: &[usize],
    rule_vars: &IndexSet<String>,
    existentials: &IndexSet<String>,
    answer_vars: &IndexSet<&str>,
) -> Result<Option<(ConjunctiveQuery, Substitution)>> {
    let mut u = Unifier::new();
    for (&qi, &hi) in piece.iter().zip(head_choice) {
        let qa = &d.body[qi];
        let ha = &rule.head[hi];
        if qa.args.len() != ha.args.len() {
            return Ok(None);
        }
        for (a, b) in qa.args.iter().zip(&ha.args) {
            if u.union(a, b).is_err() {
                return Ok(None);
            }
        }
    }
    // Side conditions that make the step sound w.r.t. chase nulls: a class
    // holding an existential variable may only hold query variables that are
    // not answer variables and occur nowhere outside the piece.
    for class in u.classes() {
        let mut exist_count = 0usize;
        let mut frontier_count = 0usize;
        let mut const_count = 0usize;
        let mut bad_query_var = false;
        for t in &class {
            match t {
                Term::Const(_) | Term::Null(_) => const_count += 1,
                Term::Var(v) => {
                    if existentials.contains(v) {
                        exist_count += 1;
                    } else if rule_vars.contains(v) {
                        frontier_count += 1;
                    } else {
                        // Query variable.
                        if answer_vars.contains(v.as_str())
                            || occurs_outside_piece(d, piece, v)
                        {
                            bad_query_var = true;
                        }
                    }
                }
            }
        }
        if exist_count > 0 && (exist_count > 1 || frontier_count > 0 || const_count > 0 || bad_query_var)
        {
            return Ok(None);
        }
        // Keep answer positions variable-valued (see function docs).
        if const_count > 0
            && class.iter().any(|t| matches!(t, Term::Var(v) if answer_vars.contains(v.as_str())))
        {
            return Ok(None);
        }
    }
    let sub = {
        let mut u = u;
        u.substitution()
    };
    let mut body: Vec<Atom> = d
        .body
        .iter()
        .enumerate()
        .filter(|(i, _)| !piece.contains(i))
        .map(|(_, a)| a.apply(&sub))
        .collect();
    for a in &rule.body {
        let a = a.apply(&sub);
        if !body.contains(&a) {
            body.push(a);
        }
    }
    let head: Vec<String> = d
        .head
        .iter()
        .map(|v| match sub.get(v) {
            Some(Term::Var(w)) => w.clone(),
            Some(_) => unreachable!("answer-var/constant unifiers are rejected"),
            None => v.clone(),
        })
        .collect();
    let cand = normalize_cq(&ConjunctiveQuery::new(d.schema.clone(), head, body)?);
    Ok(Some((cand, sub)))
}

fn occurs_outside_piece(d: &ConjunctiveQuery, piece: &[usize], var: &str) -> bool {
    d.body
        .iter()
        .enumerate()
        .any(|(i, a)| !piece.contains(&i) && a.vars().any(|v| v == var))
}

/// The backward view rules BackV: one source-to-target TGD V(x⃗) → ∃y⃗ φ_V
/// per definition disjunct.
pub fn back_v_rules(vs: &ViewSet) -> Result<Vec<Tgd>> {
    let mut out = Vec::new();
    for v in &vs.views {
        let def = v.ucq_def()?;
        for d in &def.disjuncts {
            let body = vec![Atom::new(
                v.name.clone(),
                d.head.iter().map(|h| Term::var(h.clone())).collect(),
            )];
            out.push(Tgd::new(vs.schema.clone(), body, d.body.clone())?);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Inverse rules (Datalog certain-answer rewriting over full TGDs)
// ---------------------------------------------------------------------------

/// A term position's shape in the annotated (Skolem-flattened) encoding:
/// either a plain domain element or the Skolem function for one view
/// existential, whose flattened representation is the view's head tuple.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
enum Shape {
    Plain,
    Skolem { view: String, ex: String, width: usize },
}

impl Shape {
    fn width(&self) -> usize {
        match self {
            Shape::Plain => 1,
            Shape::Skolem { width, .. } => *width,
        }
    }
    fn code(&self) -> String {
        match self {
            Shape::Plain => "p".into(),
            Shape::Skolem { view, ex, .. } => format!("f_{view}_{ex}"),
        }
    }
}

fn annotated_name(pred: &str, shapes: &[Shape]) -> String {
    if shapes.iter().all(|s| matches!(s, Shape::Plain)) {
        pred.to_string()
    } else {
        let codes: Vec<String> = shapes.iter().map(Shape::code).collect();
        format!("{pred}_sh_{}", codes.join("_"))
    }
}

/// Builds the inverse-rules certain-answer rewriting: a Datalog program over
/// the view schema such that its goal relation on any view instance J equals
/// the certain answers of `p` under `sigma` and the backward view rules.
/// Skolem terms (depth ≤ 1 here) are flattened into annotated predicates.
pub fn inverse_rules(p: &DatalogProgram, vs: &ViewSet, sigma: &[Tgd]) -> Result<DatalogProgram> {
    for v in &vs.views {
        if !v.is_cq() {
            return Err(Error::NonCqView(v.name.clone()));
        }
    }
    if !sigma.iter().all(Tgd::is_full) {
        return Err(Error::NonFullSigma);
    }

    // Shape universe: Plain plus one Skolem per view existential.
    let mut shapes: Vec<Shape> = vec![Shape::Plain];
    for v in &vs.views {
        let def = &v.ucq_def()?.disjuncts[0];
        for ex in def.existential_vars() {
            shapes.push(Shape::Skolem {
                view: v.name.clone(),
                ex,
                width: def.head.len(),
            });
        }
    }

    let mut schema = Schema::new();
    for v in &vs.views {
        schema.declare(
            v.name.clone(),
            vs.schema.arity(&v.name).unwrap(),
            PredTag::View,
        );
    }
    let declare = |schema: &mut Schema, pred: &str, sh: &[Shape]| -> String {
        let name = annotated_name(pred, sh);
        if !schema.contains(&name) {
            let arity = sh.iter().map(Shape::width).sum();
            schema.declare(name.clone(), arity, PredTag::Idb);
        }
        name
    };

    let mut rules: Vec<DatalogRule> = Vec::new();

    // Backward rules: each view definition atom becomes derivable from the
    // view fact, with existentials flattened to the view's head tuple.
    for v in &vs.views {
        let def = &v.ucq_def()?.disjuncts[0];
        let head_vars: Vec<Term> = def.head.iter().map(|h| Term::var(h.clone())).collect();
        let existentials: IndexSet<String> = def.existential_vars().into_iter().collect();
        let body_atom = Atom::new(v.name.clone(), head_vars.clone());
        for a in &def.body {
            let mut sh: Vec<Shape> = Vec::new();
            let mut args: Vec<Term> = Vec::new();
            for t in &a.args {
                match t {
                    Term::Var(x) if existentials.contains(x) => {
                        sh.push(Shape::Skolem {
                            view: v.name.clone(),
                            ex: x.clone(),
                            width: def.head.len(),
                        });
                        args.extend(head_vars.iter().cloned());
                    }
                    other => {
                        sh.push(Shape::Plain);
                        args.push(other.clone());
                    }
                }
            }
            let name = declare(&mut schema, &a.pred, &sh);
            rules.push(DatalogRule {
                head: Atom::new(name, args),
                body: vec![body_atom.clone()],
            });
        }
    }

    // Σ and program rules, annotated under every shape assignment of their
    // variables. Σ heads may have several atoms; each yields one rule.
    let mut plain_rules: Vec<(Vec<Atom>, Atom)> = Vec::new();
    for r in sigma {
        for h in &r.head {
            plain_rules.push((r.body.clone(), h.clone()));
        }
    }
    for r in &p.rules {
        plain_rules.push((r.body.clone(), r.head.clone()));
    }

    for (body, head) in &plain_rules {
        let vars: Vec<String> = {
            let mut s: IndexSet<String> = IndexSet::new();
            for a in body.iter().chain(std::iter::once(head)) {
                for v in a.vars() {
                    s.insert(v.to_string());
                }
            }
            s.into_iter().collect()
        };
        let mut digits = vec![0usize; vars.len()];
        loop {
            let assign: IndexMap<&str, &Shape> = vars
                .iter()
                .map(String::as_str)
                .zip(digits.iter().map(|&d| &shapes[d]))
                .collect();
            let annotate = |schema: &mut Schema, a: &Atom| -> Atom {
                let mut sh = Vec::new();
                let mut args = Vec::new();
                for t in &a.args {
                    match t {
                        Term::Var(v) => {
                            let s = assign[v.as_str()];
                            sh.push((*s).clone());
                            match s {
                                Shape::Plain => args.push(Term::var(v.clone())),
                                Shape::Skolem { width, .. } => {
                                    for k in 0..*width {
                                        args.push(Term::var(format!("{v}__c{k}")));
                                    }
                                }
                            }
                        }
                        other => {
                            sh.push(Shape::Plain);
                            args.push(other.clone());
                        }
                    }
                }
                let name = declare(schema, &a.pred, &sh);
                Atom::new(name, args)
            };
            let new_body: Vec<Atom> = body.iter().map(|a| annotate(&mut schema, a)).collect();
            let new_head = annotate(&mut schema, head);
            rules.push(DatalogRule {
                head: new_head,
                body: new_body,
            });

            let mut pos = vars.len();
            let done = loop {
                if pos == 0 {
                    break true;
                }
                pos -= 1;
                digits[pos] += 1;
                if digits[pos] < shapes.len() {
                    break false;
                }
                digits[pos] = 0;
            };
            if done {
                break;
            }
        }
    }

    // The answers over real view elements are the all-plain goal facts.
    let goal_arity = p.goal_arity();
    let goal = annotated_name(&p.goal, &vec![Shape::Plain; goal_arity]);
    if !schema.contains(&goal) {
        schema.declare(goal.clone(), goal_arity, PredTag::Idb);
    }
    DatalogProgram::new(Arc::new(schema), rules, goal)
}

// ---------------------------------------------------------------------------
// View-image rewriting
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub enum ViewImageRewriting {
    Rewriting {
        query: UnionQuery,
        /// Disjunct indices whose view image was empty (constant-true CQs).
        degenerate: Vec<usize>,
    },
    /// Some disjunct's chase failed to saturate within budget.
    Unknown,
}

/// Per disjunct: chase the canonical database under Σ, take the view image,
/// and read it back as a CQ over the view schema (head constants stay free,
/// everything else is quantified). If q is monotonically determined over the
/// views w.r.t. Σ the result is a rewriting; otherwise only a sound lower
/// bound.
pub fn view_image_rewriting(
    q: &UnionQuery,
    vs: &ViewSet,
    sigma: &[Tgd],
    cfg: ChaseConfig,
) -> Result<ViewImageRewriting> {
    let mut disjuncts = Vec::new();
    let mut degenerate = Vec::new();
    for (di, d) in q.disjuncts.iter().enumerate() {
        let (db, head_consts) = canondb_with_head(d);
        let res = chase(&db, sigma, cfg)?;
        if res.status != ChaseStatus::Saturated {
            return Ok(ViewImageRewriting::Unknown);
        }
        let j = view_image(&res.instance, vs)?;
        if j.is_empty() {
            degenerate.push(di);
        }

        // Name head positions first so equal head constants share a variable;
        // remaining image elements are quantified in sorted-fact order.
        let mut names: IndexMap<Term, String> = IndexMap::new();
        let mut head: Vec<String> = Vec::new();
        for (i, c) in head_consts.iter().enumerate() {
            let name = names.entry(c.clone()).or_insert_with(|| format!("h{i}"));
            head.push(name.clone());
        }
        let mut counter = 0usize;
        let mut body: Vec<Atom> = Vec::new();
        for f in j.sorted_facts() {
            let args: Vec<Term> = f
                .args
                .iter()
                .map(|t| {
                    let name = names.entry(t.clone()).or_insert_with(|| {
                        counter += 1;
                        format!("w{counter}")
                    });
                    Term::var(name.clone())
                })
                .collect();
            body.push(Atom::new(f.pred.clone(), args));
        }
        let used: IndexSet<&str> = body.iter().flat_map(|a| a.vars()).collect();
        if head.iter().any(|h| !used.contains(h.as_str())) {
            return Err(Error::Other(format!(
                "disjunct {di}: a head constant does not occur in the view image; \
                 no safe view-schema CQ exists"
            )));
        }
        disjuncts.push(ConjunctiveQuery::new(vs.schema.clone(), head, body)?);
    }
    Ok(ViewImageRewriting::Rewriting {
        query: UnionQuery::new(disjuncts)?,
        degenerate,
    })
}
