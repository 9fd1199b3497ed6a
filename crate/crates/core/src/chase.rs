//! Probabilistic chase over the translated program.
//!
//! Firings are discovered incrementally: once by the initial scan, or at the
//! step that inserts the last body fact they need. Discovered firings enter a
//! FIFO frontier and are re-checked for applicability when popped, so every
//! maximal run is fair.

use std::cmp::Reverse;
use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{self, DistRef, Registry, RngStream};
use crate::error::{ChaseError, DomainError, Result};
use crate::model::{Binding, Constant, Fact, Instance, Name, Program};
use crate::translate::{to_existential, ExistentialHead, ExistentialProgram};

pub const DEFAULT_STEP_BUDGET: u64 = 1_000_000;

type Row = Arc<[Constant]>;

#[derive(Clone, Debug, PartialEq, Eq)]
enum Slot {
    Var(usize),
    Const(Constant),
    Sampled,
}

#[derive(Clone, Debug)]
struct CompiledAtom {
    rel: usize,
    args: Vec<Slot>,
}

#[derive(Clone, Debug)]
struct DistInfo {
    dist: DistRef,
    /// 0-based.
    position: usize,
    base_arity: usize,
}

#[derive(Clone, Debug)]
struct CompiledRule {
    body: Vec<CompiledAtom>,
    vars: Vec<Name>,
    head: CompiledAtom,
    distributional: bool,
}

/// A translated program with relations and variables resolved to indices.
#[derive(Clone, Debug)]
pub struct CompiledProgram {
    program: Program,
    ghat: ExistentialProgram,
    names: Vec<Name>,
    arities: Vec<usize>,
    ids: HashMap<Name, usize>,
    dist_info: Vec<Option<DistInfo>>,
    rules: Vec<CompiledRule>,
    /// relation -> (rule, body atom) occurrences
    occurrences: Vec<Vec<(usize, usize)>>,
}

impl CompiledProgram {
    pub fn new(program: &Program, registry: &Registry) -> Result<Self> {
        let ghat = to_existential(program, registry)?;
        let mut names = Vec::new();
        let mut arities = Vec::new();
        for (n, &a) in &ghat.edb_schema {
            names.push(n.clone());
            arities.push(a);
        }
        for (n, &a) in &ghat.extended_idb_schema() {
            names.push(n.clone());
            arities.push(a);
        }
        let ids: HashMap<Name, usize> = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();

        let mut dist_info = vec![None; names.len()];
        for dr in &ghat.dist_relations {
            let dist = registry
                .get(&dr.dist)
                .cloned()
                .expect("validated program uses registered distributions");
            dist_info[ids[&dr.name]] = Some(DistInfo {
                dist,
                position: dr.position - 1,
                base_arity: dr.base_arity,
            });
        }

        let mut rules = Vec::new();
        let mut occurrences = vec![Vec::new(); names.len()];
        for (ri, rule) in ghat.rules.iter().enumerate() {
            let mut vars: Vec<Name> = Vec::new();
            let slot = |t: &crate::model::Term, vars: &mut Vec<Name>| match t {
                crate::model::Term::Const(c) => Slot::Const(c.clone()),
                crate::model::Term::Var(v) => match vars.iter().position(|w| w == v) {
                    Some(i) => Slot::Var(i),
                    None => {
                        vars.push(v.clone());
                        Slot::Var(vars.len() - 1)
                    }
                },
            };
            let body: Vec<CompiledAtom> = rule
                .body
                .iter()
                .enumerate()
                .map(|(ai, a)| {
                    occurrences[ids[&a.relation]].push((ri, ai));
                    CompiledAtom {
                        rel: ids[&a.relation],
                        args: a.args.iter().map(|t| slot(t, &mut vars)).collect(),
                    }
                })
                .collect();
            let (head, distributional) = match &rule.head {
                ExistentialHead::Ordinary(a) => (
                    CompiledAtom {
                        rel: ids[&a.relation],
                        args: a.args.iter().map(|t| slot(t, &mut vars)).collect(),
                    },
                    false,
                ),
                ExistentialHead::Existential { atom, position, .. } => {
                    let args = atom
                        .args
                        .iter()
                        .enumerate()
                        .map(|(i, t)| {
                            if i == *position {
                                Slot::Sampled
                            } else {
                                slot(t, &mut vars)
                            }
                        })
                        .collect();
                    (
                        CompiledAtom {
                            rel: ids[&atom.relation],
                            args,
                        },
                        true,
                    )
                }
            };
            rules.push(CompiledRule {
                body,
                vars,
                head,
                distributional,
            });
        }

        Ok(CompiledProgram {
            program: program.clone(),
            ghat,
            names,
            arities,
            ids,
            dist_info,
            rules,
            occurrences,
        })
    }

    pub fn program(&self) -> &Program {
        &self.program
    }

    pub fn existential(&self) -> &ExistentialProgram {
        &self.ghat
    }

    pub fn rule_count(&self) -> usize {
        self.rules.len()
    }

    pub fn is_distributional(&self, rule: usize) -> bool {
        self.rules[rule].distributional
    }

    /// Body variables of a rule in first-occurrence order, the order used by
    /// [`Firing::binding`].
    pub fn rule_variables(&self, rule: usize) -> &[Name] {
        &self.rules[rule].vars
    }

    pub fn binding_map(&self, firing: &Firing) -> Binding {
        self.rules[firing.rule]
            .vars
            .iter()
            .cloned()
            .zip(firing.binding.iter().cloned())
            .collect()
    }

    fn describe_binding(&self, firing: &Firing) -> String {
        self.rules[firing.rule]
            .vars
            .iter()
            .zip(&firing.binding)
            .map(|(v, c)| format!("{v}={c}"))
            .collect::<Vec<_>>()
            .join(", ")
    }

    fn describe_rule(&self, rule: usize) -> String {
        format!("{} `{}`", rule + 1, self.ghat.rules[rule])
    }

    fn fact(&self, rel: usize, row: &[Constant]) -> Fact {
        Fact {
            relation: self.names[rel].clone(),
            args: row.to_vec(),
        }
    }

    fn ground(&self, atom: &CompiledAtom, binding: &[Constant]) -> Vec<Constant> {
        atom.args
            .iter()
            .filter_map(|s| match s {
                Slot::Var(i) => Some(binding[*i].clone()),
                Slot::Const(c) => Some(c.clone()),
                Slot::Sampled => None,
            })
            .collect()
    }

    /// Distribution and numeric parameters of a distributional firing.
    pub fn firing_distribution(
        &self,
        firing: &Firing,
    ) -> Result<Option<(DistRef, Vec<f64>)>, ChaseError> {
        let rule = &self.rules[firing.rule];
        if !rule.distributional {
            return Ok(None);
        }
        let info = self.dist_info[rule.head.rel]
            .as_ref()
            .expect("distributional head targets a distributional relation");
        let key = self.ground(&rule.head, &firing.binding);
        let mut params = Vec::new();
        for c in &key[info.base_arity - 1..] {
            match c.as_num() {
                Some(v) => params.push(v),
                None => {
                    return Err(ChaseError::NonNumericParameter {
                        rule: self.describe_rule(firing.rule),
                        binding: self.describe_binding(firing),
                        param: c.to_string(),
                    })
                }
            }
        }
        Ok(Some((info.dist.clone(), params)))
    }

    pub(crate) fn domain_error(&self, firing: &Firing, source: DomainError) -> ChaseError {
        ChaseError::Domain {
            rule: self.describe_rule(firing.rule),
            binding: self.describe_binding(firing),
            source,
        }
    }

    /// The head a firing must satisfy, with `_` for a sampled attribute.
    fn describe_head(&self, firing: &Firing) -> String {
        let rule = &self.rules[firing.rule];
        let args: Vec<String> = rule
            .head
            .args
            .iter()
            .map(|s| match s {
                Slot::Var(i) => firing.binding[*i].to_string(),
                Slot::Const(c) => c.to_string(),
                Slot::Sampled => "_".into(),
            })
            .collect();
        format!("{}({})", self.names[rule.head.rel], args.join(", "))
    }

    /// The fact a firing would add if the sampled value were `value`.
    fn head_fact(&self, firing: &Firing, value: Option<f64>) -> Fact {
        let rule = &self.rules[firing.rule];
        let args: Vec<Constant> = rule
            .head
            .args
            .iter()
            .map(|s| match s {
                Slot::Var(i) => firing.binding[*i].clone(),
                Slot::Const(c) => c.clone(),
                Slot::Sampled => Constant::num(value.unwrap_or(f64::NAN)),
            })
            .collect();
        self.fact(rule.head.rel, &args)
    }
}

/// One instantiation of a rule body; `binding` follows
/// [`CompiledProgram::rule_variables`].
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Firing {
    pub rule: usize,
    pub binding: Vec<Constant>,
}

/// Order in which simultaneously discovered firings join the frontier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Schedule {
    #[default]
    Fifo,
    ReversedRules,
    Shuffled(u64),
}

/// Value source for a distributional step.
pub enum Choice<'a> {
    None,
    Value(f64),
    Rng(&'a mut RngStream),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub fact: Fact,
    pub weight: f64,
}

#[derive(Clone, Debug, Default)]
struct Relation {
    rows: Vec<Row>,
    set: HashSet<Row>,
}

#[derive(Clone, Debug)]
pub struct ChaseState {
    relations: Vec<Relation>,
    /// Per distributional relation: tuple without the sampled attribute ->
    /// sampled value.
    fd: Vec<HashMap<Vec<Constant>, Constant>>,
    frontier: VecDeque<Firing>,
    log_weight: f64,
    steps: u64,
    len: usize,
    schedule: Schedule,
    shuffle: Option<ChaCha8Rng>,
}

impl ChaseState {
    pub fn new(prog: &CompiledProgram, input: &Instance, schedule: Schedule) -> Result<Self, ChaseError> {
        let n = prog.names.len();
        let mut state = ChaseState {
            relations: vec![Relation::default(); n],
            fd: vec![HashMap::new(); n],
            frontier: VecDeque::new(),
            log_weight: 0.0,
            steps: 0,
            len: 0,
            schedule,
            shuffle: match schedule {
                Schedule::Shuffled(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
                _ => None,
            },
        };
        for fact in input.iter() {
            let Some(&rel) = prog.ids.get(&fact.relation) else {
                return Err(ChaseError::BadInput {
                    fact: fact.to_string(),
                    reason: "unknown relation".into(),
                });
            };
            if prog.dist_info[rel].is_some() {
                return Err(ChaseError::BadInput {
                    fact: fact.to_string(),
                    reason: "distributional relations cannot be given as input".into(),
                });
            }
            if prog.arities[rel] != fact.args.len() {
                return Err(ChaseError::BadInput {
                    fact: fact.to_string(),
                    reason: format!("expected arity {}", prog.arities[rel]),
                });
            }
            state.store(rel, fact.args.into());
        }
        let initial = state.scan(prog);
        state.enqueue(initial);
        Ok(state)
    }

    pub fn log_weight(&self) -> f64 {
        self.log_weight
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn frontier_len(&self) -> usize {
        self.frontier.len()
    }

    pub fn contains(&self, prog: &CompiledProgram, fact: &Fact) -> bool {
        prog.ids
            .get(&fact.relation)
            .is_some_and(|&r| self.relations[r].set.contains(fact.args.as_slice()))
    }

    pub fn instance(&self, prog: &CompiledProgram) -> Instance {
        let mut out = Instance::new();
        for (rel, r) in self.relations.iter().enumerate() {
            for row in &r.rows {
                out.insert_tuple(&prog.names[rel], row.to_vec());
            }
        }
        out
    }

    fn store(&mut self, rel: usize, row: Row) -> bool {
        let r = &mut self.relations[rel];
        if !r.set.insert(row.clone()) {
            return false;
        }
        r.rows.push(row);
        self.len += 1;
        true
    }

    fn is_satisfied(&self, prog: &CompiledProgram, firing: &Firing) -> bool {
        let rule = &prog.rules[firing.rule];
        let tuple = prog.ground(&rule.head, &firing.binding);
        if rule.distributional {
            self.fd[rule.head.rel].contains_key(&tuple)
        } else {
            self.relations[rule.head.rel].set.contains(tuple.as_slice())
        }
    }

    fn body_holds(&self, prog: &CompiledProgram, firing: &Firing) -> bool {
        let rule = &prog.rules[firing.rule];
        firing.binding.len() == rule.vars.len()
            && rule.body.iter().all(|a| {
                self.relations[a.rel]
                    .set
                    .contains(prog.ground(a, &firing.binding).as_slice())
            })
    }

    pub fn is_applicable(&self, prog: &CompiledProgram, firing: &Firing) -> bool {
        firing.rule < prog.rules.len()
            && self.body_holds(prog, firing)
            && !self.is_satisfied(prog, firing)
    }

    fn join(
        &self,
        atoms: &[CompiledAtom],
        skip: Option<usize>,
        i: usize,
        binding: &mut Vec<Option<Constant>>,
        out: &mut Vec<Vec<Constant>>,
    ) {
        if i == atoms.len() {
            out.push(binding.iter().map(|c| c.clone().expect("bound")).collect());
            return;
        }
        if Some(i) == skip {
            return self.join(atoms, skip, i + 1, binding, out);
        }
        let atom = &atoms[i];
        for row in &self.relations[atom.rel].rows {
            let mut newly = Vec::new();
            if unify(atom, row, binding, &mut newly) {
                self.join(atoms, skip, i + 1, binding, out);
            }
            for v in newly {
                binding[v] = None;
            }
        }
    }

    /// Every body match, applicable or not.
    fn scan(&self, prog: &CompiledProgram) -> Vec<Firing> {
        let mut out = Vec::new();
        for (ri, rule) in prog.rules.iter().enumerate() {
            let mut bindings = Vec::new();
            let mut b = vec![None; rule.vars.len()];
            self.join(&rule.body, None, 0, &mut b, &mut bindings);
            out.extend(bindings.into_iter().map(|binding| Firing { rule: ri, binding }));
        }
        out
    }

    /// All currently applicable firings ordered by rule index, then binding.
    pub fn applicable_firings(&self, prog: &CompiledProgram) -> Vec<Firing> {
        let mut out: Vec<Firing> = self
            .scan(prog)
            .into_iter()
            .filter(|f| !self.is_satisfied(prog, f))
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// Body matches that use the freshly inserted `row` of `rel`.
    fn discover(&self, prog: &CompiledProgram, rel: usize, row: &Row) -> Vec<Firing> {
        let mut found = HashSet::new();
        for &(ri, ai) in &prog.occurrences[rel] {
            let rule = &prog.rules[ri];
            let mut b = vec![None; rule.vars.len()];
            let mut newly = Vec::new();
            if !unify(&rule.body[ai], row, &mut b, &mut newly) {
                continue;
            }
            let mut bindings = Vec::new();
            self.join(&rule.body, Some(ai), 0, &mut b, &mut bindings);
            found.extend(bindings.into_iter().map(|binding| Firing { rule: ri, binding }));
        }
        found.into_iter().collect()
    }

    fn enqueue(&mut self, mut batch: Vec<Firing>) {
        match self.schedule {
            Schedule::Fifo => batch.sort(),
            Schedule::ReversedRules => {
                batch.sort_by(|a, b| (Reverse(a.rule), &a.binding).cmp(&(Reverse(b.rule), &b.binding)))
            }
            Schedule::Shuffled(_) => {
                batch.sort();
                batch.shuffle(self.shuffle.as_mut().expect("shuffled schedule has an rng"));
            }
        }
        self.frontier.extend(batch);
    }

    /// Pops frontier entries until one is applicable.
    pub fn pop_applicable(&mut self, prog: &CompiledProgram) -> Option<Firing> {
        while let Some(f) = self.frontier.pop_front() {
            if !self.is_satisfied(prog, &f) {
                return Some(f);
            }
        }
        None
    }

    /// Puts a firing back at the head of the frontier.
    pub fn push_front(&mut self, firing: Firing) {
        self.frontier.push_front(firing);
    }

    pub fn chase_step(
        &mut self,
        prog: &CompiledProgram,
        firing: &Firing,
        choice: Choice<'_>,
    ) -> Result<Step, ChaseError> {
        if !self.is_applicable(prog, firing) {
            return Err(ChaseError::Inapplicable {
                rule: firing.rule + 1,
            });
        }
        let rule = &prog.rules[firing.rule];
        let (row, weight): (Vec<Constant>, f64) = match prog.firing_distribution(firing)? {
            None => (prog.ground(&rule.head, &firing.binding), 1.0),
            Some((dist, params)) => {
                let value = match choice {
                    Choice::None => return Err(ChaseError::ChoiceMismatch),
                    Choice::Value(v) => v,
                    Choice::Rng(rng) => dist::sample(dist.as_ref(), &params, rng)
                        .map_err(|e| prog.domain_error(firing, e))?,
                };
                if !value.is_finite() {
                    return Err(ChaseError::NonFinite {
                        rule: prog.describe_rule(firing.rule),
                        binding: prog.describe_binding(firing),
                        value,
                    });
                }
                let mass = dist::pmf(dist.as_ref(), value, &params)
                    .map_err(|e| prog.domain_error(firing, e))?;
                if mass <= 0.0 {
                    return Err(ChaseError::OutsideSupport {
                        dist: format!("{}{:?}", dist.name(), params),
                        value,
                    });
                }
                let key = prog.ground(&rule.head, &firing.binding);
                let position = prog.dist_info[rule.head.rel]
                    .as_ref()
                    .expect("distributional relation")
                    .position;
                let value = Constant::num(value);
                let previous = self.fd[rule.head.rel].insert(key.clone(), value.clone());
                debug_assert!(previous.is_none(), "functional dependency violated");
                let mut row = key;
                row.insert(position, value);
                self.log_weight += mass.ln();
                (row, mass)
            }
        };
        let rel = rule.head.rel;
        let row: Row = row.into();
        let before = self.len;
        let added = self.store(rel, row.clone());
        debug_assert!(added && self.len == before + 1, "instance must strictly grow");
        self.steps += 1;
        let batch: Vec<Firing> = self
            .discover(prog, rel, &row)
            .into_iter()
            .filter(|f| !self.is_satisfied(prog, f))
            .collect();
        self.enqueue(batch);
        Ok(Step {
            fact: prog.fact(rel, &row),
            weight,
        })
    }

    /// Re-derives the log weight from the distributional facts present.
    pub fn recompute_log_weight(&self, prog: &CompiledProgram) -> f64 {
        let mut total = 0.0;
        for (rel, info) in prog.dist_info.iter().enumerate() {
            let Some(info) = info else { continue };
            for row in &self.relations[rel].rows {
                let params: Vec<f64> = row[info.base_arity..]
                    .iter()
                    .map(|c| c.as_num().unwrap_or(f64::NAN))
                    .collect();
                let value = row[info.position].as_num().unwrap_or(f64::NAN);
                total += info.dist.mass(value, &params).ln();
            }
        }
        total
    }

    /// Whether every distributional relation satisfies its functional
    /// dependency, checked from scratch.
    pub fn check_fds(&self, prog: &CompiledProgram) -> bool {
        for (rel, info) in prog.dist_info.iter().enumerate() {
            let Some(info) = info else { continue };
            let mut seen: HashMap<Vec<Constant>, &Constant> = HashMap::new();
            for row in &self.relations[rel].rows {
                let mut key = row.to_vec();
                key.remove(info.position);
                if let Some(prev) = seen.insert(key, &row[info.position]) {
                    if prev != &row[info.position] {
                        return false;
                    }
                }
            }
        }
        true
    }
}

fn unify(
    atom: &CompiledAtom,
    row: &[Constant],
    binding: &mut [Option<Constant>],
    newly: &mut Vec<usize>,
) -> bool {
    for (slot, c) in atom.args.iter().zip(row) {
        match slot {
            Slot::Const(k) => {
                if k != c {
                    return false;
                }
            }
            Slot::Var(v) => match &binding[*v] {
                Some(b) => {
                    if b != c {
                        return false;
                    }
                }
                None => {
                    binding[*v] = Some(c.clone());
                    newly.push(*v);
                }
            },
            Slot::Sampled => unreachable!("body atoms carry no sampled slot"),
        }
    }
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Leaf,
    BudgetExhausted,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::Leaf => "leaf",
            Termination::BudgetExhausted => "budget-exhausted",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub facts: Instance,
    pub log_probability: f64,
    pub terminated: Termination,
    pub steps: u64,
}

impl Outcome {
    pub fn probability(&self) -> f64 {
        self.log_probability.exp()
    }
}

/// Runs one random chase path with value draws from `rng`.
pub fn run_chase(
    prog: &CompiledProgram,
    input: &Instance,
    rng: &mut RngStream,
    step_budget: u64,
    schedule: Schedule,
) -> Result<Outcome, ChaseError> {
    let mut state = ChaseState::new(prog, input, schedule)?;
    let terminated = loop {
        let Some(firing) = state.pop_applicable(prog) else {
            break Termination::Leaf;
        };
        if state.steps >= step_budget {
            state.push_front(firing);
            break Termination::BudgetExhausted;
        }
        state.chase_step(prog, &firing, Choice::Rng(rng))?;
    };
    Ok(Outcome {
        facts: state.instance(prog),
        log_probability: state.log_weight,
        terminated,
        steps: state.steps,
    })
}

/// One outcome sampled from stream 0 of `seed` under the FIFO schedule.
pub fn sample_outcome(
    prog: &CompiledProgram,
    input: &Instance,
    seed: u64,
    step_budget: u64,
) -> Result<Outcome, ChaseError> {
    let mut rng = RngStream::new(seed, 0);
    run_chase(prog, input, &mut rng, step_budget, Schedule::Fifo)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Rejection {
    BadInput(String),
    MissingInput(Fact),
    MissingForcedFact(String),
    ExtraneousFact(Fact),
    FdViolation(Fact, Fact),
    ZeroWeight(String),
    NotDerivationSet(String),
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::BadInput(x) => write!(f, "bad input: {x}"),
            Rejection::MissingInput(x) => write!(f, "missing input fact {x}"),
            Rejection::MissingForcedFact(x) => write!(f, "missing forced fact {x}"),
            Rejection::ExtraneousFact(x) => write!(f, "extraneous fact {x}"),
            Rejection::FdViolation(a, b) => write!(f, "FD violation between {a} and {b}"),
            Rejection::ZeroWeight(x) => write!(f, "zero-weight choice: {x}"),
            Rejection::NotDerivationSet(x) => write!(f, "not a derivation set: {x} is not derivable"),
        }
    }
}

impl std::error::Error for Rejection {}

/// Forced sampled values, keyed by relation and the tuple without the sampled
/// attribute.
type Forced = HashMap<(usize, Vec<Constant>), f64>;

fn forced_values(prog: &CompiledProgram, target: &Instance) -> Result<Forced, Rejection> {
    let mut forced: Forced = HashMap::new();
    let mut witness: HashMap<(usize, Vec<Constant>), Fact> = HashMap::new();
    for fact in target.iter() {
        let Some(&rel) = prog.ids.get(&fact.relation) else {
            return Err(Rejection::ExtraneousFact(fact));
        };
        if prog.arities[rel] != fact.args.len() {
            return Err(Rejection::ExtraneousFact(fact));
        }
        let Some(info) = &prog.dist_info[rel] else { continue };
        let mut key = fact.args.clone();
        let value = key.remove(info.position);
        let Some(v) = value.as_num() else {
            return Err(Rejection::ZeroWeight(fact.to_string()));
        };
        if let Some(prev) = witness.get(&(rel, key.clone())) {
            return Err(Rejection::FdViolation(prev.clone(), fact));
        }
        witness.insert((rel, key.clone()), fact);
        forced.insert((rel, key), v);
    }
    Ok(forced)
}

/// The step a firing must take to stay inside `target`, if any.
fn guided_choice(
    prog: &CompiledProgram,
    firing: &Firing,
    target: &Instance,
    forced: &Forced,
) -> Result<Option<Option<f64>>, Rejection> {
    let rule = &prog.rules[firing.rule];
    if !rule.distributional {
        let fact = prog.head_fact(firing, None);
        return Ok(target.contains(&fact).then_some(None));
    }
    let key = prog.ground(&rule.head, &firing.binding);
    let Some(&value) = forced.get(&(rule.head.rel, key)) else {
        return Ok(None);
    };
    let (dist, params) = prog
        .firing_distribution(firing)
        .map_err(|e| Rejection::ZeroWeight(e.to_string()))?
        .expect("distributional rule");
    let mass = dist::pmf(dist.as_ref(), value, &params)
        .map_err(|e| Rejection::ZeroWeight(e.to_string()))?;
    if mass <= 0.0 {
        return Err(Rejection::ZeroWeight(prog.head_fact(firing, Some(value)).to_string()));
    }
    Ok(Some(Some(value)))
}

fn guided_step(
    state: &mut ChaseState,
    prog: &CompiledProgram,
    firing: &Firing,
    value: Option<f64>,
) -> Result<(), Rejection> {
    let choice = value.map_or(Choice::None, Choice::Value);
    state
        .chase_step(prog, firing, choice)
        .map(|_| ())
        .map_err(|e| Rejection::ZeroWeight(e.to_string()))
}

fn first_missing(state: &ChaseState, prog: &CompiledProgram, target: &Instance) -> Option<Fact> {
    target.iter().find(|f| !state.contains(prog, f))
}

/// Probability of `candidate` as a possible outcome of `input`, found by a
/// deterministic chase that takes at every distributional firing the value
/// forced by `candidate`.
pub fn replay_weight(
    prog: &CompiledProgram,
    input: &Instance,
    candidate: &Instance,
) -> Result<f64, Rejection> {
    if let Some(f) = input.iter().find(|f| !candidate.contains(f)) {
        return Err(Rejection::MissingInput(f));
    }
    let forced = forced_values(prog, candidate)?;
    let mut state = ChaseState::new(prog, input, Schedule::Fifo)
        .map_err(|e| Rejection::BadInput(e.to_string()))?;
    while let Some(firing) = state.pop_applicable(prog) {
        match guided_choice(prog, &firing, candidate, &forced)? {
            Some(value) => guided_step(&mut state, prog, &firing, value)?,
            None => return Err(Rejection::MissingForcedFact(prog.describe_head(&firing))),
        }
    }
    match first_missing(&state, prog, candidate) {
        Some(f) => Err(Rejection::ExtraneousFact(f)),
        None => Ok(state.log_weight.exp()),
    }
}

/// P(F) for a derivation set F: some chase prefix from `input` produces
/// exactly `input ∪ F`. Open obligations at the end of the prefix are allowed.
pub fn cylinder_mass(
    prog: &CompiledProgram,
    input: &Instance,
    derivation_set: &Instance,
) -> Result<f64, Rejection> {
    let mut target = input.clone();
    target.extend(derivation_set);
    let forced = forced_values(prog, &target)?;
    let mut state = ChaseState::new(prog, input, Schedule::Fifo)
        .map_err(|e| Rejection::BadInput(e.to_string()))?;
    'grow: loop {
        for firing in state.applicable_firings(prog) {
            if let Some(value) = guided_choice(prog, &firing, &target, &forced)? {
                guided_step(&mut state, prog, &firing, value)?;
                continue 'grow;
            }
        }
        break;
    }
    match first_missing(&state, prog, &target) {
        Some(f) => Err(Rejection::NotDerivationSet(f.to_string())),
        None => Ok(state.log_weight.exp()),
    }
}
