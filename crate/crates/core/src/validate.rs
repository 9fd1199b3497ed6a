//! Whole-program well-formedness checks.
//!
//! Each rule and constraint yields at most one diagnostic: the first clause it
//! violates, in the order the checks are listed in [`check_rule`].

use std::collections::HashSet;
use std::fmt;

use crate::dist::Registry;
use crate::model::{Atom, Constraint, ConstraintHead, GenerativeRule, HeadArg, Program};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Location {
    Program,
    Rule(usize),
    Constraint(usize),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Program => f.write_str("program"),
            Location::Rule(i) => write!(f, "rule {}", i + 1),
            Location::Constraint(i) => write!(f, "constraint {}", i + 1),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub location: Location,
    pub reason: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.reason)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub diagnostics: Vec<Diagnostic>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.diagnostics.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return f.write_str("ok");
        }
        for d in &self.diagnostics {
            writeln!(f, "{d}")?;
        }
        Ok(())
    }
}

pub fn validate_program(program: &Program, registry: &Registry) -> ValidationReport {
    let mut diagnostics = Vec::new();

    let mut overlap: Vec<_> = program
        .edb_schema
        .keys()
        .filter(|r| program.idb_schema.contains_key(*r))
        .collect();
    overlap.sort();
    for r in overlap {
        diagnostics.push(Diagnostic {
            location: Location::Program,
            reason: format!("relation {r} declared both edb and idb"),
        });
    }
    for r in program.edb_schema.keys().chain(program.idb_schema.keys()) {
        if r.contains("__") {
            diagnostics.push(Diagnostic {
                location: Location::Program,
                reason: format!("relation {r}: double underscore is reserved"),
            });
        }
    }

    for (i, rule) in program.rules.iter().enumerate() {
        if let Err(reason) = check_rule(program, registry, rule) {
            diagnostics.push(Diagnostic {
                location: Location::Rule(i),
                reason,
            });
        }
    }
    for (i, c) in program.constraints.iter().enumerate() {
        if let Err(reason) = check_constraint(program, c) {
            diagnostics.push(Diagnostic {
                location: Location::Constraint(i),
                reason,
            });
        }
    }
    ValidationReport { diagnostics }
}

fn check_atom(program: &Program, atom: &Atom) -> Result<(), String> {
    match program.arity(&atom.relation) {
        None => Err(format!("undeclared relation {}", atom.relation)),
        Some(n) if n != atom.args.len() => Err(format!(
            "arity mismatch for {}: declared {n}, used with {}",
            atom.relation,
            atom.args.len()
        )),
        Some(_) => Ok(()),
    }
}

/// Checks, in order: nonempty body, body atoms declared with the right arity,
/// head relation declared IDB with the right arity, at most one Δ-term, the
/// Δ-term's distribution and parameter count, head safety.
fn check_rule(program: &Program, registry: &Registry, rule: &GenerativeRule) -> Result<(), String> {
    if rule.body.is_empty() {
        return Err("empty rule body".into());
    }
    for atom in &rule.body {
        check_atom(program, atom)?;
    }
    let head = &rule.head;
    if !program.is_idb(&head.relation) {
        return Err(if program.is_edb(&head.relation) {
            format!("head relation {} is not an idb relation", head.relation)
        } else {
            format!("undeclared relation {}", head.relation)
        });
    }
    let arity = program.idb_schema[&head.relation];
    if arity != head.args.len() {
        return Err(format!(
            "arity mismatch for {}: declared {arity}, used with {}",
            head.relation,
            head.args.len()
        ));
    }
    if head.delta_positions().len() > 1 {
        return Err("more than one Δ-term in head".into());
    }
    for arg in &head.args {
        if let HeadArg::Delta(d) = arg {
            let Some(dist) = registry.get(&d.dist) else {
                return Err(format!("unknown distribution {}", d.dist));
            };
            if dist.pardim() != d.params.len() {
                return Err(format!(
                    "distribution {} takes {} parameter(s), got {}",
                    d.dist,
                    dist.pardim(),
                    d.params.len()
                ));
            }
        }
    }
    let bound: HashSet<_> = rule.body.iter().flat_map(Atom::variables).collect();
    if let Some(v) = head.variables().into_iter().find(|v| !bound.contains(v)) {
        return Err(format!("unsafe head variable {v}"));
    }
    Ok(())
}

fn check_constraint(program: &Program, c: &Constraint) -> Result<(), String> {
    if c.body.is_empty() {
        return Err("empty constraint body".into());
    }
    for atom in &c.body {
        check_atom(program, atom)?;
    }
    if let ConstraintHead::Atom(head) = &c.head {
        check_atom(program, head)?;
        let bound: HashSet<_> = c.body.iter().flat_map(Atom::variables).collect();
        if let Some(v) = head.variables().find(|v| !bound.contains(v)) {
            return Err(format!("unsafe head variable {v}"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_program;

    fn report(src: &str) -> ValidationReport {
        let reg = Registry::standard();
        let p = parse_program(src, &reg).unwrap();
        validate_program(&p, &reg)
    }

    #[test]
    fn two_delta_terms_rejected() {
        let r = report("edb S/2. idb R/2. R(Flip[p], Flip[q]) :- S(p, q).");
        assert_eq!(r.diagnostics.len(), 1);
        assert_eq!(r.diagnostics[0].location, Location::Rule(0));
        assert!(r.diagnostics[0].reason.contains("more than one Δ-term"));
    }

    #[test]
    fn unsafe_head_variable() {
        let r = report("edb S/1. idb R/2. R(x, y) :- S(x).");
        assert_eq!(r.diagnostics[0].reason, "unsafe head variable y");
    }

    #[test]
    fn unsafe_delta_parameter() {
        let r = report("edb S/1. idb R/2. R(x, Flip[p]) :- S(x).");
        assert_eq!(r.diagnostics[0].reason, "unsafe head variable p");
    }

    #[test]
    fn edb_head_rejected() {
        let r = report("edb S/1. edb T/1. T(x) :- S(x).");
        assert!(r.diagnostics[0].reason.contains("not an idb relation"));
    }

    #[test]
    fn constraint_safety() {
        let r = report("edb S/1. idb T/1. S(x) => T(y).");
        assert_eq!(r.diagnostics[0].location, Location::Constraint(0));
    }

    #[test]
    fn disjoint_schemas() {
        let reg = Registry::standard();
        let mut p = Program::default();
        p.edb_schema.insert("R".into(), 1);
        p.idb_schema.insert("R".into(), 1);
        let r = validate_program(&p, &reg);
        assert_eq!(r.diagnostics[0].location, Location::Program);
    }

    #[test]
    fn empty_body_rejected() {
        let reg = Registry::standard();
        let mut p = Program::default();
        p.idb_schema.insert("R".into(), 1);
        p.rules.push(GenerativeRule {
            head: Atom::new("R", vec![crate::model::Term::Const(1.0.into())]).into(),
            body: vec![],
        });
        let r = validate_program(&p, &reg);
        assert_eq!(r.diagnostics[0].reason, "empty rule body");
    }
}
