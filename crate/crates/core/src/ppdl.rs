//! Constraints and posterior inference.

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::chase::{run_chase, CompiledProgram, Schedule, Termination};
use crate::dist::RngStream;
use crate::enumerate::{enumerate_outcomes, Entry, EnumerationPolicy, OutcomeDistribution};
use crate::error::{Error, Result};
use crate::model::{Atom, Constant, Constraint, ConstraintHead, Fact, Instance, Name, Term};

/// Retained mass below this counts as zero.
pub const LEGALITY_THRESHOLD: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    /// 0-based constraint index.
    pub constraint: usize,
    /// Body variables in first-occurrence order.
    pub binding: Vec<(Name, Constant)>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b: Vec<String> = self.binding.iter().map(|(v, c)| format!("{v}={c}")).collect();
        write!(f, "constraint {} violated with [{}]", self.constraint + 1, b.join(", "))
    }
}

fn body_variables(body: &[Atom]) -> Vec<Name> {
    let mut vars: Vec<Name> = Vec::new();
    for v in body.iter().flat_map(Atom::variables) {
        if !vars.contains(v) {
            vars.push(v.clone());
        }
    }
    vars
}

fn matches(
    facts: &Instance,
    body: &[Atom],
    vars: &[Name],
    binding: &mut Vec<Option<Constant>>,
    out: &mut Vec<Vec<Constant>>,
) {
    let Some((atom, rest)) = body.split_first() else {
        out.push(binding.iter().map(|c| c.clone().expect("bound")).collect());
        return;
    };
    for tuple in facts.tuples(&atom.relation) {
        if tuple.len() != atom.args.len() {
            continue;
        }
        let mut newly = Vec::new();
        let mut ok = true;
        for (t, c) in atom.args.iter().zip(tuple) {
            match t {
                Term::Const(k) => ok = k == c,
                Term::Var(v) => {
                    let i = vars.iter().position(|w| w == v).expect("body variable");
                    match &binding[i] {
                        Some(b) => ok = b == c,
                        None => {
                            binding[i] = Some(c.clone());
                            newly.push(i);
                        }
                    }
                }
            }
            if !ok {
                break;
            }
        }
        if ok {
            matches(facts, rest, vars, binding, out);
        }
        for i in newly {
            binding[i] = None;
        }
    }
}

fn head_holds(facts: &Instance, head: &ConstraintHead, vars: &[Name], binding: &[Constant]) -> bool {
    match head {
        ConstraintHead::Falsum => false,
        ConstraintHead::Atom(a) => {
            let args: Vec<Constant> = a
                .args
                .iter()
                .map(|t| match t {
                    Term::Const(c) => c.clone(),
                    Term::Var(v) => {
                        let i = vars.iter().position(|w| w == v).expect("safe constraint head");
                        binding[i].clone()
                    }
                })
                .collect();
            facts.contains_tuple(&a.relation, &args)
        }
    }
}

/// Every body match whose head fails, constraint by constraint.
pub fn check_constraints(facts: &Instance, constraints: &[Constraint]) -> Vec<Violation> {
    let mut out = Vec::new();
    for (ci, c) in constraints.iter().enumerate() {
        let vars = body_variables(&c.body);
        let mut found = Vec::new();
        matches(facts, &c.body, &vars, &mut vec![None; vars.len()], &mut found);
        for b in found {
            if !head_holds(facts, &c.head, &vars, &b) {
                out.push(Violation {
                    constraint: ci,
                    binding: vars.iter().cloned().zip(b).collect(),
                });
            }
        }
    }
    out
}

pub fn satisfies(facts: &Instance, constraints: &[Constraint]) -> bool {
    constraints.iter().all(|c| {
        let vars = body_variables(&c.body);
        let mut found = Vec::new();
        matches(facts, &c.body, &vars, &mut vec![None; vars.len()], &mut found);
        found.iter().all(|b| head_holds(facts, &c.head, &vars, b))
    })
}

/// Conditions a prior on `constraints`.
///
/// The normaliser is the retained mass plus the prior's residual, so the
/// posterior keeps `explored + residual = 1`. With a complete prior this is
/// plain renormalisation by the retained mass.
pub fn condition(prior: &OutcomeDistribution, constraints: &[Constraint]) -> Result<OutcomeDistribution> {
    if constraints.is_empty() {
        return Ok(prior.clone());
    }
    let kept: Vec<&Entry> = prior
        .entries
        .iter()
        .filter(|e| satisfies(&e.facts, constraints))
        .collect();
    let retained = kept.iter().fold(0.0, |acc, e| acc + e.probability);
    if retained < LEGALITY_THRESHOLD {
        return Err(if prior.residual_mass < LEGALITY_THRESHOLD {
            Error::IllegalInput
        } else {
            Error::UndeterminedLegality {
                residual_mass: prior.residual_mass,
            }
        });
    }
    if kept.len() == prior.entries.len() {
        return Ok(prior.clone());
    }
    let z = retained + prior.residual_mass;
    let entries = kept
        .into_iter()
        .map(|e| Entry {
            facts: e.facts.clone(),
            probability: e.probability / z,
        })
        .collect();
    Ok(OutcomeDistribution::from_entries(
        entries,
        prior.residual_mass / z,
        prior.expanded_nodes,
    ))
}

/// Enumerates the prior and conditions it on the program's constraints.
pub fn exact_posterior(
    prog: &CompiledProgram,
    input: &Instance,
    policy: &EnumerationPolicy,
) -> Result<OutcomeDistribution> {
    let prior = enumerate_outcomes(prog, input, policy)?;
    condition(&prior, &prog.program().constraints)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PosteriorEstimate {
    pub query: String,
    /// `None` when no sample was accepted.
    pub point: Option<f64>,
    pub std_error: Option<f64>,
    pub samples_total: u64,
    pub samples_accepted: u64,
    pub samples_budget_exhausted: u64,
    pub seed: u64,
}

impl PosteriorEstimate {
    pub fn is_defined(&self) -> bool {
        self.point.is_some()
    }
}

#[derive(Clone, Copy)]
enum Sample {
    Exhausted,
    Rejected,
    Accepted(bool),
}

/// Rejection-sampling estimate of P(query | constraints). Sample `i` uses
/// stream `i` of `seed`, so the result does not depend on thread count.
pub fn estimate_posterior(
    prog: &CompiledProgram,
    input: &Instance,
    query: &Fact,
    samples: u64,
    seed: u64,
    step_budget: u64,
) -> Result<PosteriorEstimate> {
    let constraints = &prog.program().constraints;
    let results: Vec<Result<Sample>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::new(seed, i);
            let out = run_chase(prog, input, &mut rng, step_budget, Schedule::Fifo)?;
            Ok(match out.terminated {
                Termination::BudgetExhausted => Sample::Exhausted,
                Termination::Leaf if !satisfies(&out.facts, constraints) => Sample::Rejected,
                Termination::Leaf => Sample::Accepted(out.facts.contains(query)),
            })
        })
        .collect();
    let (mut accepted, mut hits, mut exhausted) = (0u64, 0u64, 0u64);
    for r in results {
        match r? {
            Sample::Exhausted => exhausted += 1,
            Sample::Rejected => {}
            Sample::Accepted(hit) => {
                accepted += 1;
                hits += u64::from(hit);
            }
        }
    }
    let point = (accepted > 0).then(|| hits as f64 / accepted as f64);
    Ok(PosteriorEstimate {
        query: query.to_string(),
        point,
        std_error: point.map(|p| (p * (1.0 - p) / accepted as f64).sqrt()),
        samples_total: samples,
        samples_accepted: accepted,
        samples_budget_exhausted: exhausted,
        seed,
    })
}
