//! Best-first exploration of the chase tree.
//!
//! Deterministic steps are taken in place; only distributional firings
//! branch. Open nodes are expanded in order of decreasing path mass, ties by
//! creation order.

use std::cmp::Ordering;
use std::collections::hash_map::DefaultHasher;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::hash::{Hash, Hasher};

use crate::chase::{ChaseState, Choice, CompiledProgram, Firing, Schedule, DEFAULT_STEP_BUDGET};
use crate::dist::{enumerate_support, SupportKind};
use crate::error::{ChaseError, Error, Result};
use crate::model::{Fact, Instance};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnumerationPolicy {
    /// Each distributional node keeps the smallest prefix of its support
    /// covering at least `1 - mass_epsilon`.
    pub mass_epsilon: f64,
    /// Maximum number of branching nodes expanded.
    pub node_budget: usize,
    /// Per-node coverage for infinite supports.
    pub support_mass_target: f64,
    pub schedule: Schedule,
    /// Per-path cap on chase steps.
    pub step_budget: u64,
}

impl Default for EnumerationPolicy {
    fn default() -> Self {
        EnumerationPolicy {
            mass_epsilon: 0.0,
            node_budget: 1_000_000,
            support_mass_target: 1.0 - 1e-6,
            schedule: Schedule::Fifo,
            step_budget: DEFAULT_STEP_BUDGET,
        }
    }
}

impl EnumerationPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.mass_epsilon) {
            return Err(Error::Policy(format!(
                "mass_epsilon {} outside [0, 1)",
                self.mass_epsilon
            )));
        }
        if !(self.support_mass_target > 0.0 && self.support_mass_target <= 1.0) {
            return Err(Error::Policy(format!(
                "support_mass_target {} outside (0, 1]",
                self.support_mass_target
            )));
        }
        if self.node_budget == 0 {
            return Err(Error::Policy("node_budget must be at least 1".into()));
        }
        if self.step_budget == 0 {
            return Err(Error::Policy("step_budget must be at least 1".into()));
        }
        Ok(())
    }

    fn target(&self, kind: SupportKind) -> f64 {
        let keep = 1.0 - self.mass_epsilon;
        match kind {
            SupportKind::Finite => keep,
            SupportKind::CountablyInfinite => keep.min(self.support_mass_target),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub facts: Instance,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeDistribution {
    /// Sorted by decreasing probability, ties by fact set.
    #[serde(rename = "outcomes")]
    pub entries: Vec<Entry>,
    pub explored_mass: f64,
    pub residual_mass: f64,
    pub expanded_nodes: usize,
}

impl OutcomeDistribution {
    pub fn probability_of(&self, facts: &Instance) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| &e.facts == facts)
            .map(|e| e.probability)
    }

    pub fn to_map(&self) -> HashMap<Instance, f64> {
        self.entries
            .iter()
            .map(|e| (e.facts.clone(), e.probability))
            .collect()
    }

    pub(crate) fn from_entries(mut entries: Vec<Entry>, residual_mass: f64, expanded_nodes: usize) -> Self {
        entries.sort_by(|a, b| {
            b.probability
                .total_cmp(&a.probability)
                .then_with(|| a.facts.cmp(&b.facts))
        });
        let explored_mass = entries.iter().fold(0.0, |acc, e| acc + e.probability);
        OutcomeDistribution {
            entries,
            explored_mass,
            residual_mass,
            expanded_nodes,
        }
    }
}

/// Bounds on the probability of a fact; `lower` counts enumerated outcomes,
/// `upper` adds the residual mass.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Marginal {
    pub lower: f64,
    pub upper: f64,
}

pub fn marginal(dist: &OutcomeDistribution, query: &Fact) -> Marginal {
    let lower: f64 = dist
        .entries
        .iter()
        .filter(|e| e.facts.contains(query))
        .map(|e| e.probability)
        .sum();
    Marginal {
        lower,
        upper: (lower + dist.residual_mass).min(1.0),
    }
}

struct Node {
    log_mass: f64,
    seq: u64,
    state: ChaseState,
    firing: Firing,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        self.log_mass
            .total_cmp(&other.log_mass)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

enum Advance {
    Leaf,
    Branch(Firing),
    Cut,
}

/// Runs deterministic steps until the chase ends or must branch.
fn advance(prog: &CompiledProgram, state: &mut ChaseState, step_budget: u64) -> Result<Advance, ChaseError> {
    loop {
        let Some(firing) = state.pop_applicable(prog) else {
            return Ok(Advance::Leaf);
        };
        if state.steps() >= step_budget {
            return Ok(Advance::Cut);
        }
        if prog.is_distributional(firing.rule) {
            return Ok(Advance::Branch(firing));
        }
        state.chase_step(prog, &firing, Choice::None)?;
    }
}

struct Explorer<'a> {
    prog: &'a CompiledProgram,
    policy: EnumerationPolicy,
    heap: BinaryHeap<Node>,
    seq: u64,
    leaves: Vec<Entry>,
    seen: HashSet<u64>,
    lossy: bool,
}

impl Explorer<'_> {
    fn settle(&mut self, mut state: ChaseState, log_mass: f64) -> Result<()> {
        match advance(self.prog, &mut state, self.policy.step_budget)? {
            Advance::Leaf => {
                let facts = state.instance(self.prog);
                let mut h = DefaultHasher::new();
                facts.hash(&mut h);
                let fresh = self.seen.insert(h.finish());
                debug_assert!(fresh, "two leaves share a fact set");
                self.leaves.push(Entry {
                    facts,
                    probability: log_mass.exp(),
                });
            }
            Advance::Branch(firing) => {
                self.seq += 1;
                self.heap.push(Node {
                    log_mass,
                    seq: self.seq,
                    state,
                    firing,
                });
            }
            Advance::Cut => self.lossy = true,
        }
        Ok(())
    }

    fn expand(&mut self, node: Node) -> Result<()> {
        let (dist, params) = self
            .prog
            .firing_distribution(&node.firing)?
            .expect("branching firing is distributional");
        let target = self.policy.target(dist.support_kind());
        let support = enumerate_support(dist.as_ref(), &params, target)
            .map_err(|e| self.prog.domain_error(&node.firing, e))?;
        self.lossy |= match dist.support_kind() {
            SupportKind::CountablyInfinite => true,
            SupportKind::Finite => {
                let full = dist
                    .support(&params)
                    .filter(|&v| dist.mass(v, &params) > 0.0)
                    .count();
                support.len() < full
            }
        };
        let last = support.len().saturating_sub(1);
        let mut parent = Some(node.state);
        for (i, (value, mass)) in support.into_iter().enumerate() {
            let mut child = if i == last {
                parent.take().expect("parent state")
            } else {
                parent.as_ref().expect("parent state").clone()
            };
            child.chase_step(self.prog, &node.firing, Choice::Value(value))?;
            self.settle(child, node.log_mass + mass.ln())?;
        }
        Ok(())
    }
}

pub fn enumerate_outcomes(
    prog: &CompiledProgram,
    input: &Instance,
    policy: &EnumerationPolicy,
) -> Result<OutcomeDistribution> {
    policy.validate()?;
    let mut ex = Explorer {
        prog,
        policy: *policy,
        heap: BinaryHeap::new(),
        seq: 0,
        leaves: Vec::new(),
        seen: HashSet::new(),
        lossy: false,
    };
    ex.settle(ChaseState::new(prog, input, policy.schedule)?, 0.0)?;
    let mut expanded = 0;
    while expanded < policy.node_budget {
        let Some(node) = ex.heap.pop() else { break };
        expanded += 1;
        ex.expand(node)?;
    }
    log::debug!(
        "enumeration: {} leaves, {} expanded, {} open",
        ex.leaves.len(),
        expanded,
        ex.heap.len()
    );
    let residual = if ex.lossy || !ex.heap.is_empty() {
        let explored = ex.leaves.iter().fold(0.0, |acc, e| acc + e.probability);
        (1.0 - explored).max(0.0)
    } else {
        0.0
    };
    Ok(OutcomeDistribution::from_entries(ex.leaves, residual, expanded))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::Registry;
    use crate::model::Constant;
    use crate::parser::{parse_facts, parse_program};

    fn compile(src: &str) -> CompiledProgram {
        let reg = Registry::with_test_distributions();
        let p = parse_program(src, &reg).unwrap();
        CompiledProgram::new(&p, &reg).unwrap()
    }

    fn facts(prog: &CompiledProgram, src: &str) -> Instance {
        let mut schema = prog.program().edb_schema.clone();
        schema.extend(prog.program().idb_schema.clone());
        parse_facts(src, &schema).unwrap()
    }

    fn n(x: f64) -> Constant {
        Constant::num(x)
    }

    const PDB: &str = "edb R/2. idb S/2. idb T/1. S(x, Flip[p]) :- R(x, p). T(x) :- S(x, 1).";

    #[test]
    fn tuple_independent_pdb() {
        let prog = compile(PDB);
        let input = facts(&prog, "R(\"a\", 0.3). R(\"b\", 0.6).");
        let d = enumerate_outcomes(&prog, &input, &EnumerationPolicy::default()).unwrap();
        let mut ps: Vec<f64> = d.entries.iter().map(|e| e.probability).collect();
        ps.sort_by(f64::total_cmp);
        let expected = [0.12, 0.18, 0.28, 0.42];
        for (p, e) in ps.iter().zip(expected) {
            assert!((p - e).abs() < 1e-12, "{p} vs {e}");
        }
        assert!((d.explored_mass - 1.0).abs() < 1e-12);
        assert_eq!(d.residual_mass, 0.0);
        let m = marginal(&d, &Fact::new("T", vec!["a".into()]));
        assert!((m.lower - 0.3).abs() < 1e-12 && m.upper == m.lower);
        assert_eq!(marginal(&d, &Fact::new("T", vec!["z".into()])).lower, 0.0);
    }

    #[test]
    fn flip_escape() {
        let prog = compile("idb Q/1. idb R/2. R(0, Flip[0.5]) :- Q(x). R(y, Dbl[y]) :- R(x, y).");
        let input = facts(&prog, "Q(0).");
        let policy = EnumerationPolicy {
            node_budget: 1000,
            ..Default::default()
        };
        let d = enumerate_outcomes(&prog, &input, &policy).unwrap();
        assert_eq!(d.entries.len(), 1);
        assert!((d.entries[0].probability - 0.5).abs() < 1e-12);
        assert!((d.residual_mass - 0.5).abs() < 1e-12);
        let leaf = &d.entries[0].facts;
        assert_eq!(leaf.len(), 4);
        assert!(leaf.contains(&Fact::new("R__Dbl__2", vec![n(0.0), n(0.0), n(0.0)])));
    }

    #[test]
    fn branching_program_has_no_leaves() {
        let prog = compile("idb R/2. R(y, DblOrNext[y]) :- R(x, y).");
        let input = facts(&prog, "R(0, 1).");
        let policy = EnumerationPolicy {
            node_budget: 500,
            ..Default::default()
        };
        let d = enumerate_outcomes(&prog, &input, &policy).unwrap();
        assert!(d.entries.is_empty());
        assert_eq!(d.explored_mass, 0.0);
        assert_eq!(d.expanded_nodes, 500);
    }

    #[test]
    fn infinite_support_residual() {
        let prog = compile("edb C/1. idb V/2. V(c, Poisson[2]) :- C(c).");
        let input = facts(&prog, "C(1).");
        let policy = EnumerationPolicy {
            support_mass_target: 0.99,
            ..Default::default()
        };
        let d = enumerate_outcomes(&prog, &input, &policy).unwrap();
        assert!(d.explored_mass >= 0.99 && d.explored_mass < 1.0);
        assert!((d.explored_mass + d.residual_mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn epsilon_prunes_finite_support() {
        let prog = compile(PDB);
        let input = facts(&prog, "R(\"a\", 0.05).");
        let policy = EnumerationPolicy {
            mass_epsilon: 0.1,
            ..Default::default()
        };
        let d = enumerate_outcomes(&prog, &input, &policy).unwrap();
        assert_eq!(d.entries.len(), 1);
        assert!((d.residual_mass - 0.05).abs() < 1e-12);
    }

    #[test]
    fn bad_policy() {
        let prog = compile(PDB);
        let policy = EnumerationPolicy {
            node_budget: 0,
            ..Default::default()
        };
        assert!(matches!(
            enumerate_outcomes(&prog, &Instance::new(), &policy),
            Err(Error::Policy(_))
        ));
    }
}
