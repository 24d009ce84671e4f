//! Pretty-printer for problem files; `parse ∘ print` is the identity on the
//! printed form (round-trip fixpoint).

use crate::ast::*;
use std::fmt::Write;
use viewdet::ast::Term;
use viewdet::corpus::Cell;

fn term(t: &Term) -> String {
    match t {
        Term::Var(v) => v.clone(),
        Term::Const(c) => c.clone(),
        Term::Null(n) => format!("n{n}"),
    }
}

fn atom(a: &RawAtom) -> String {
    let args: Vec<String> = a.args.iter().map(term).collect();
    format!("{}({})", a.pred, args.join(","))
}

fn atoms(list: &[RawAtom]) -> String {
    list.iter().map(atom).collect::<Vec<_>>().join(", ")
}

fn cell(c: &Cell) -> String {
    match c {
        Cell::Sym(s) => s.clone(),
        Cell::Head(q, s) => format!("{q}:{s}"),
    }
}

fn program(out: &mut String, p: &ProgramDecl, indent: &str) {
    for (h, b) in &p.rules {
        if b.is_empty() {
            let _ = writeln!(out, "{indent}  {}.", atom(h));
        } else {
            let _ = writeln!(out, "{indent}  {} :- {}.", atom(h), atoms(b));
        }
    }
    let _ = writeln!(out, "{indent}  goal {}.", p.goal);
}

pub fn print(f: &ProblemFile) -> String {
    let mut out = String::new();
    for p in &f.preds {
        let _ = writeln!(out, "pred {}/{}.", p.name, p.arity);
    }
    if !f.preds.is_empty() {
        out.push('\n');
    }
    for t in &f.tgds {
        let _ = writeln!(out, "tgd {} -> {}.", atoms(&t.body), atoms(&t.head));
    }
    if !f.tgds.is_empty() {
        out.push('\n');
    }
    for v in &f.views {
        match &v.body {
            ViewBody::Ucq(disjuncts) => {
                let ds: Vec<String> = disjuncts.iter().map(|d| atoms(d)).collect();
                let _ = writeln!(
                    out,
                    "view {}({}) := {}.",
                    v.name,
                    v.head.join(","),
                    ds.join(" | ")
                );
            }
            ViewBody::Datalog(p) => {
                let _ = writeln!(out, "view {}({}) {{", v.name, v.head.join(","));
                program(&mut out, p, "");
                let _ = writeln!(out, "}}");
            }
        }
    }
    if !f.views.is_empty() {
        out.push('\n');
    }
    for q in &f.queries {
        let ds: Vec<String> = q.disjuncts.iter().map(|d| atoms(d)).collect();
        let _ = writeln!(
            out,
            "query {}({}) := {}.",
            q.name,
            q.head.join(","),
            ds.join(" | ")
        );
    }
    for p in &f.programs {
        let _ = writeln!(out, "program {} {{", p.name);
        program(&mut out, p, "");
        let _ = writeln!(out, "}}");
    }
    for fa in &f.facts {
        let _ = writeln!(out, "fact {}.", atom(fa));
    }
    for m in &f.machines {
        match m {
            MachineDecl::Ca(spec) => {
                let _ = writeln!(out, "machine ca {{");
                let _ = writeln!(out, "  states {}.", spec.states);
                let _ = writeln!(out, "  target {}.", spec.target);
                for ((j, k), l) in &spec.rules2 {
                    let _ = writeln!(out, "  edge ({j},{k}) -> {l}.");
                }
                for ((i, j, k), l) in &spec.rules3 {
                    let _ = writeln!(out, "  step ({i},{j},{k}) -> {l}.");
                }
                let _ = writeln!(out, "}}");
            }
            MachineDecl::Tiling(spec) => {
                let _ = writeln!(out, "machine tiling {{");
                let _ = writeln!(out, "  tiles {}.", spec.tiles);
                if let Some(t) = spec.initial {
                    let _ = writeln!(out, "  initial {t}.");
                }
                for (i, j, o) in &spec.forbidden {
                    let name = match o {
                        viewdet::corpus::Orientation::Horizontal => "horizontal",
                        viewdet::corpus::Orientation::Vertical => "vertical",
                    };
                    let _ = writeln!(out, "  forbid {name} ({i},{j}).");
                }
                let _ = writeln!(out, "}}");
            }
            MachineDecl::Tm(spec) => {
                let _ = writeln!(out, "machine tm {{");
                let _ = writeln!(out, "  alphabet {}.", spec.alphabet.join(" "));
                let _ = writeln!(out, "  states {}.", spec.states.join(" "));
                for ((a, b), o) in &spec.delta_left {
                    let _ = writeln!(out, "  left ({},{}) -> {}.", cell(a), cell(b), cell(o));
                }
                for ((a, b, c), o) in &spec.delta_mid {
                    let _ = writeln!(
                        out,
                        "  mid ({},{},{}) -> {}.",
                        cell(a),
                        cell(b),
                        cell(c),
                        cell(o)
                    );
                }
                for ((a, b), o) in &spec.delta_right {
                    let _ = writeln!(out, "  right ({},{}) -> {}.", cell(a), cell(b), cell(o));
                }
                let _ = writeln!(out, "}}");
            }
        }
    }
    out
}
