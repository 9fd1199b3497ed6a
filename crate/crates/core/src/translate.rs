//! Translation of a generative program into existential Datalog.
//!
//! A rule `R(t, δ[p], t') :- body` becomes `exists y: R__δ__i(t, y, t', p) :-
//! body`, where `i` is the 1-based position of the Δ-term. Each distinct
//! distributional relation also gets a projection rule
//! `R(x1..xn) :- R__δ__i(x1..xn, p1..pk)`. Δ-free rules are copied.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use crate::dist::Registry;
use crate::error::{Error, Result};
use crate::model::{Atom, GenerativeRule, HeadArg, Name, Program, Schema, Term};
use crate::validate::validate_program;

/// Auxiliary relation `base__dist__position` holding the base tuple followed
/// by the distribution parameters.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DistRelation {
    pub name: Name,
    pub base: Name,
    /// 1-based attribute of the sampled value.
    pub position: usize,
    pub dist: Name,
    pub base_arity: usize,
    pub pardim: usize,
}

impl DistRelation {
    pub fn new(base: &str, position: usize, dist: &str, base_arity: usize, pardim: usize) -> Self {
        DistRelation {
            name: Arc::from(format!("{base}__{dist}__{position}").as_str()),
            base: Arc::from(base),
            position,
            dist: Arc::from(dist),
            base_arity,
            pardim,
        }
    }

    pub fn arity(&self) -> usize {
        self.base_arity + self.pardim
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RuleKind {
    Copied,
    Existential,
    Projection,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ExistentialHead {
    Ordinary(Atom),
    /// `atom.args[position]` is the existential variable `var`.
    Existential {
        atom: Atom,
        var: Name,
        position: usize,
        dist_relation: usize,
    },
}

impl ExistentialHead {
    pub fn atom(&self) -> &Atom {
        match self {
            ExistentialHead::Ordinary(a) => a,
            ExistentialHead::Existential { atom, .. } => atom,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ExistentialRule {
    pub head: ExistentialHead,
    pub body: Vec<Atom>,
    pub kind: RuleKind,
}

impl fmt::Display for ExistentialRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.head {
            ExistentialHead::Ordinary(a) => write!(f, "{a} :- ")?,
            ExistentialHead::Existential { atom, var, .. } => write!(f, "exists {var}: {atom} :- ")?,
        }
        for (i, a) in self.body.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(".")
    }
}

/// `relation: determinant -> dependent`, attributes 1-based.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FunctionalDependency {
    pub relation: Name,
    pub determinant: Vec<usize>,
    pub dependent: usize,
}

impl fmt::Display for FunctionalDependency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lhs: Vec<String> = self.determinant.iter().map(usize::to_string).collect();
        write!(f, "{}: {} -> {}", self.relation, lhs.join(","), self.dependent)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExistentialProgram {
    pub edb_schema: Schema,
    /// Ordinary IDB relations.
    pub idb_schema: Schema,
    pub dist_relations: Vec<DistRelation>,
    pub rules: Vec<ExistentialRule>,
    pub fds: Vec<FunctionalDependency>,
}

impl ExistentialProgram {
    /// The full IDB schema of the translated program, ordinary and
    /// distributional relations together.
    pub fn extended_idb_schema(&self) -> Schema {
        let mut s = self.idb_schema.clone();
        for d in &self.dist_relations {
            s.insert(d.name.clone(), d.arity());
        }
        s
    }

    pub fn dist_relation(&self, name: &str) -> Option<&DistRelation> {
        self.dist_relations.iter().find(|d| &*d.name == name)
    }
}

impl fmt::Display for ExistentialProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, arity) in &self.edb_schema {
            writeln!(f, "edb {name}/{arity}.")?;
        }
        for (name, arity) in &self.extended_idb_schema() {
            writeln!(f, "idb {name}/{arity}.")?;
        }
        for rule in &self.rules {
            writeln!(f, "{rule}")?;
        }
        for fd in &self.fds {
            writeln!(f, "// fd {fd}")?;
        }
        Ok(())
    }
}

/// The distributional relation a rule's Δ-head populates, if any. The rule is
/// assumed valid.
pub fn dist_relation_for(
    program: &Program,
    registry: &Registry,
    rule: &GenerativeRule,
) -> Option<DistRelation> {
    let (pos, delta) = rule.head.delta()?;
    let pardim = registry
        .get(&delta.dist)
        .map_or(delta.params.len(), |d| d.pardim());
    let base_arity = program
        .idb_schema
        .get(&rule.head.relation)
        .copied()
        .unwrap_or(rule.head.args.len());
    Some(DistRelation::new(
        &rule.head.relation,
        pos + 1,
        &delta.dist,
        base_arity,
        pardim,
    ))
}

fn fresh_variable(rule: &GenerativeRule) -> Name {
    let used: HashSet<&str> = rule
        .body
        .iter()
        .flat_map(Atom::variables)
        .chain(rule.head.variables())
        .map(|v| &**v)
        .collect();
    let mut candidate = "y".to_string();
    let mut n = 1;
    while used.contains(candidate.as_str()) {
        candidate = format!("y{n}");
        n += 1;
    }
    Arc::from(candidate.as_str())
}

pub fn to_existential(program: &Program, registry: &Registry) -> Result<ExistentialProgram> {
    let report = validate_program(program, registry);
    if !report.is_ok() {
        return Err(Error::Invalid(report));
    }

    let mut dist_relations: Vec<DistRelation> = Vec::new();
    let mut rules: Vec<ExistentialRule> = Vec::new();
    let mut seen: HashSet<ExistentialRule> = HashSet::new();

    for rule in &program.rules {
        let translated = match dist_relation_for(program, registry, rule) {
            None => ExistentialRule {
                head: ExistentialHead::Ordinary(rule.head.as_atom().expect("Δ-free head")),
                body: rule.body.clone(),
                kind: RuleKind::Copied,
            },
            Some(dr) => {
                let idx = match dist_relations.iter().position(|d| *d == dr) {
                    Some(i) => i,
                    None => {
                        dist_relations.push(dr.clone());
                        dist_relations.len() - 1
                    }
                };
                let var = fresh_variable(rule);
                let mut args = Vec::with_capacity(dr.arity());
                let mut params = Vec::new();
                for arg in &rule.head.args {
                    match arg {
                        HeadArg::Term(t) => args.push(t.clone()),
                        HeadArg::Delta(d) => {
                            args.push(Term::Var(var.clone()));
                            params = d.params.clone();
                        }
                    }
                }
                args.extend(params);
                ExistentialRule {
                    head: ExistentialHead::Existential {
                        atom: Atom {
                            relation: dr.name.clone(),
                            args,
                        },
                        var,
                        position: dr.position - 1,
                        dist_relation: idx,
                    },
                    body: rule.body.clone(),
                    kind: RuleKind::Existential,
                }
            }
        };
        if seen.insert(translated.clone()) {
            rules.push(translated);
        }
    }

    let mut fds = Vec::new();
    for dr in &dist_relations {
        let xs: Vec<Term> = (1..=dr.base_arity)
            .map(|i| Term::var(&format!("x{i}")))
            .collect();
        let ps: Vec<Term> = (1..=dr.pardim).map(|i| Term::var(&format!("p{i}"))).collect();
        let mut body_args = xs.clone();
        body_args.extend(ps);
        rules.push(ExistentialRule {
            head: ExistentialHead::Ordinary(Atom {
                relation: dr.base.clone(),
                args: xs,
            }),
            body: vec![Atom {
                relation: dr.name.clone(),
                args: body_args,
            }],
            kind: RuleKind::Projection,
        });
        fds.push(FunctionalDependency {
            relation: dr.name.clone(),
            determinant: (1..=dr.arity()).filter(|&a| a != dr.position).collect(),
            dependent: dr.position,
        });
    }

    Ok(ExistentialProgram {
        edb_schema: program.edb_schema.clone(),
        idb_schema: program.idb_schema.clone(),
        dist_relations,
        rules,
        fds,
    })
}
