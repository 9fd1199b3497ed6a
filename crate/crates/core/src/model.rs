//! Domain types shared by every stage: constants, terms, atoms, rules,
//! constraints, programs, facts and instances.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use crate::error::GroundError;

/// Relation symbols and symbolic constants share this representation.
pub type Name = Arc<str>;

/// A database value: a 64-bit real or an opaque symbolic token.
///
/// Ordering is total: numerics sort before symbols, numerics by value,
/// symbols lexicographically. `-0.0` is normalised to `0.0` on construction so
/// that equality stays bitwise.
#[derive(Clone)]
pub enum Constant {
    Num(f64),
    Sym(Name),
}

impl Constant {
    pub fn num(value: f64) -> Self {
        Constant::Num(if value == 0.0 { 0.0 } else { value })
    }

    pub fn sym(value: &str) -> Self {
        Constant::Sym(Arc::from(value))
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            Constant::Num(v) => Some(*v),
            Constant::Sym(_) => None,
        }
    }

    pub fn as_sym(&self) -> Option<&str> {
        match self {
            Constant::Num(_) => None,
            Constant::Sym(s) => Some(s),
        }
    }
}

impl From<f64> for Constant {
    fn from(v: f64) -> Self {
        Constant::num(v)
    }
}

impl From<&str> for Constant {
    fn from(v: &str) -> Self {
        Constant::sym(v)
    }
}

impl PartialEq for Constant {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Constant::Num(a), Constant::Num(b)) => a.to_bits() == b.to_bits(),
            (Constant::Sym(a), Constant::Sym(b)) => Arc::ptr_eq(a, b) || a == b,
            _ => false,
        }
    }
}

impl Eq for Constant {}

impl Hash for Constant {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            Constant::Num(v) => {
                0u8.hash(state);
                v.to_bits().hash(state);
            }
            Constant::Sym(s) => {
                1u8.hash(state);
                s.hash(state);
            }
        }
    }
}

impl Ord for Constant {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Constant::Num(a), Constant::Num(b)) => a.total_cmp(b),
            (Constant::Num(_), Constant::Sym(_)) => Ordering::Less,
            (Constant::Sym(_), Constant::Num(_)) => Ordering::Greater,
            (Constant::Sym(a), Constant::Sym(b)) => a.cmp(b),
        }
    }
}

impl PartialOrd for Constant {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Constant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Constant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constant::Num(v) => write!(f, "{}", format_number(*v)),
            Constant::Sym(s) => write_quoted(f, s),
        }
    }
}

/// Integral values print without a decimal point; everything else uses the
/// shortest representation that round-trips.
pub fn format_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

fn write_quoted(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    f.write_str("\"")?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            '\t' => f.write_str("\\t")?,
            c => write!(f, "{c}")?,
        }
    }
    f.write_str("\"")
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Const(Constant),
    Var(Name),
}

impl Term {
    pub fn var(name: &str) -> Self {
        Term::Var(Arc::from(name))
    }

    pub fn as_var(&self) -> Option<&Name> {
        match self {
            Term::Var(v) => Some(v),
            Term::Const(_) => None,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Const(c) => write!(f, "{c}"),
            Term::Var(v) => f.write_str(v),
        }
    }
}

/// `R(t1, ..., tn)` over constants and variables.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub relation: Name,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(relation: &str, args: Vec<Term>) -> Self {
        Atom {
            relation: Arc::from(relation),
            args,
        }
    }

    pub fn variables(&self) -> impl Iterator<Item = &Name> {
        self.args.iter().filter_map(Term::as_var)
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.relation)?;
        write_list(f, &self.args)?;
        f.write_str(")")
    }
}

fn write_list<T: fmt::Display>(f: &mut fmt::Formatter<'_>, items: &[T]) -> fmt::Result {
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{item}")?;
    }
    Ok(())
}

/// A draw `dist[p1, ..., pk]` from a registered distribution.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DeltaTerm {
    pub dist: Name,
    pub params: Vec<Term>,
}

impl fmt::Display for DeltaTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[", self.dist)?;
        write_list(f, &self.params)?;
        f.write_str("]")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HeadArg {
    Term(Term),
    Delta(DeltaTerm),
}

impl fmt::Display for HeadArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HeadArg::Term(t) => write!(f, "{t}"),
            HeadArg::Delta(d) => write!(f, "{d}"),
        }
    }
}

/// Rule head. Well-formed heads carry at most one Δ-term; the type admits more
/// so that validation can report the violation.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HeadAtom {
    pub relation: Name,
    pub args: Vec<HeadArg>,
}

impl HeadAtom {
    /// 0-based positions holding Δ-terms.
    pub fn delta_positions(&self) -> Vec<usize> {
        self.args
            .iter()
            .enumerate()
            .filter(|(_, a)| matches!(a, HeadArg::Delta(_)))
            .map(|(i, _)| i)
            .collect()
    }

    /// The single Δ-term and its 0-based position, if exactly one exists.
    pub fn delta(&self) -> Option<(usize, &DeltaTerm)> {
        let mut found = None;
        for (i, arg) in self.args.iter().enumerate() {
            if let HeadArg::Delta(d) = arg {
                if found.is_some() {
                    return None;
                }
                found = Some((i, d));
            }
        }
        found
    }

    /// Every variable in the head, including those inside Δ-term parameters.
    pub fn variables(&self) -> Vec<&Name> {
        let mut out = Vec::new();
        for arg in &self.args {
            match arg {
                HeadArg::Term(Term::Var(v)) => out.push(v),
                HeadArg::Term(Term::Const(_)) => {}
                HeadArg::Delta(d) => out.extend(d.params.iter().filter_map(Term::as_var)),
            }
        }
        out
    }

    /// The head as a plain atom, if it has no Δ-term.
    pub fn as_atom(&self) -> Option<Atom> {
        let args = self
            .args
            .iter()
            .map(|a| match a {
                HeadArg::Term(t) => Some(t.clone()),
                HeadArg::Delta(_) => None,
            })
            .collect::<Option<Vec<_>>>()?;
        Some(Atom {
            relation: self.relation.clone(),
            args,
        })
    }
}

impl From<Atom> for HeadAtom {
    fn from(atom: Atom) -> Self {
        HeadAtom {
            relation: atom.relation,
            args: atom.args.into_iter().map(HeadArg::Term).collect(),
        }
    }
}

impl fmt::Display for HeadAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.relation)?;
        write_list(f, &self.args)?;
        f.write_str(")")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GenerativeRule {
    pub head: HeadAtom,
    pub body: Vec<Atom>,
}

impl fmt::Display for GenerativeRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} :- ", self.head)?;
        write_list(f, &self.body)?;
        f.write_str(".")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ConstraintHead {
    Atom(Atom),
    Falsum,
}

/// `body => head` where the head is an atom or `false` (denial).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Constraint {
    pub body: Vec<Atom>,
    pub head: ConstraintHead,
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_list(f, &self.body)?;
        match &self.head {
            ConstraintHead::Atom(a) => write!(f, " => {a}."),
            ConstraintHead::Falsum => f.write_str(" => false."),
        }
    }
}

pub type Schema = BTreeMap<Name, usize>;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Program {
    pub edb_schema: Schema,
    pub idb_schema: Schema,
    pub rules: Vec<GenerativeRule>,
    pub constraints: Vec<Constraint>,
}

impl Program {
    pub fn arity(&self, relation: &str) -> Option<usize> {
        self.edb_schema
            .get(relation)
            .or_else(|| self.idb_schema.get(relation))
            .copied()
    }

    pub fn is_edb(&self, relation: &str) -> bool {
        self.edb_schema.contains_key(relation)
    }

    pub fn is_idb(&self, relation: &str) -> bool {
        self.idb_schema.contains_key(relation)
    }

    /// Same program with the constraint set replaced.
    pub fn with_constraints(&self, constraints: Vec<Constraint>) -> Program {
        Program {
            constraints,
            ..self.clone()
        }
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, arity) in &self.edb_schema {
            writeln!(f, "edb {name}/{arity}.")?;
        }
        for (name, arity) in &self.idb_schema {
            writeln!(f, "idb {name}/{arity}.")?;
        }
        for rule in &self.rules {
            writeln!(f, "{rule}")?;
        }
        for constraint in &self.constraints {
            writeln!(f, "{constraint}")?;
        }
        Ok(())
    }
}

/// A ground atom.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fact {
    pub relation: Name,
    pub args: Vec<Constant>,
}

impl Fact {
    pub fn new(relation: &str, args: Vec<Constant>) -> Self {
        Fact {
            relation: Arc::from(relation),
            args,
        }
    }
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.relation)?;
        write_list(f, &self.args)?;
        f.write_str(")")
    }
}

/// Finite set of facts, grouped by relation and kept in canonical order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Instance {
    relations: BTreeMap<Name, BTreeSet<Vec<Constant>>>,
}

impl Instance {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns `false` if the fact was already present.
    pub fn insert(&mut self, fact: Fact) -> bool {
        self.relations
            .entry(fact.relation)
            .or_default()
            .insert(fact.args)
    }

    pub fn insert_tuple(&mut self, relation: &Name, args: Vec<Constant>) -> bool {
        if let Some(tuples) = self.relations.get_mut(relation) {
            return tuples.insert(args);
        }
        self.relations
            .entry(relation.clone())
            .or_default()
            .insert(args)
    }

    pub fn contains(&self, fact: &Fact) -> bool {
        self.contains_tuple(&fact.relation, &fact.args)
    }

    pub fn contains_tuple(&self, relation: &str, args: &[Constant]) -> bool {
        self.relations
            .get(relation)
            .is_some_and(|tuples| tuples.contains(args))
    }

    pub fn remove(&mut self, fact: &Fact) -> bool {
        let Some(tuples) = self.relations.get_mut(&fact.relation) else {
            return false;
        };
        let removed = tuples.remove(&fact.args);
        if tuples.is_empty() {
            self.relations.remove(&fact.relation);
        }
        removed
    }

    pub fn len(&self) -> usize {
        self.relations.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.values().all(BTreeSet::is_empty)
    }

    pub fn tuples(&self, relation: &str) -> impl Iterator<Item = &Vec<Constant>> {
        self.relations.get(relation).into_iter().flatten()
    }

    pub fn relation_names(&self) -> impl Iterator<Item = &Name> {
        self.relations.keys()
    }

    /// Facts in canonical order (relation name, then tuple).
    pub fn iter(&self) -> impl Iterator<Item = Fact> + '_ {
        self.relations.iter().flat_map(|(rel, tuples)| {
            tuples.iter().map(move |args| Fact {
                relation: rel.clone(),
                args: args.clone(),
            })
        })
    }

    pub fn is_subset(&self, other: &Instance) -> bool {
        self.relations.iter().all(|(rel, tuples)| {
            other
                .relations
                .get(rel)
                .is_some_and(|theirs| tuples.is_subset(theirs))
        })
    }

    /// Facts of `self` not in `other`.
    pub fn difference(&self, other: &Instance) -> Instance {
        let mut out = Instance::new();
        for fact in self.iter() {
            if !other.contains(&fact) {
                out.insert(fact);
            }
        }
        out
    }

    pub fn extend(&mut self, other: &Instance) {
        for fact in other.iter() {
            self.insert(fact);
        }
    }
}

impl FromIterator<Fact> for Instance {
    fn from_iter<I: IntoIterator<Item = Fact>>(iter: I) -> Self {
        let mut out = Instance::new();
        for fact in iter {
            out.insert(fact);
        }
        out
    }
}

/// Facts, one `Rel(c1, ..., cn).` statement per line.
impl fmt::Display for Instance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for fact in self.iter() {
            writeln!(f, "{fact}.")?;
        }
        Ok(())
    }
}

pub type Binding = HashMap<Name, Constant>;

/// Substitute `binding` into `atom`.
pub fn ground_atom(atom: &Atom, binding: &Binding) -> Result<Fact, GroundError> {
    let args = atom
        .args
        .iter()
        .map(|t| match t {
            Term::Const(c) => Ok(c.clone()),
            Term::Var(v) => binding
                .get(v)
                .cloned()
                .ok_or_else(|| GroundError::Unbound(v.to_string())),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Fact {
        relation: atom.relation.clone(),
        args,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binding(pairs: &[(&str, Constant)]) -> Binding {
        pairs
            .iter()
            .map(|(k, v)| (Arc::from(*k), v.clone()))
            .collect()
    }

    #[test]
    fn ground_unit_row() {
        let atom = Atom::new("Unit", vec![Term::var("x"), Term::var("c")]);
        let b = binding(&[("x", "NP1".into()), ("c", "Napa".into())]);
        let fact = ground_atom(&atom, &b).unwrap();
        assert_eq!(fact, Fact::new("Unit", vec!["NP1".into(), "Napa".into()]));
    }

    #[test]
    fn ground_passes_constants_through() {
        let atom = Atom::new(
            "City",
            vec![Term::Const("Napa".into()), Term::Const(0.03.into())],
        );
        let fact = ground_atom(&atom, &Binding::new()).unwrap();
        assert_eq!(fact.to_string(), "City(\"Napa\", 0.03)");
    }

    #[test]
    fn ground_reports_unbound_variable() {
        let atom = Atom::new("Trig", vec![Term::var("x"), Term::Const(1.0.into())]);
        let b = binding(&[("c", "Napa".into())]);
        let err = ground_atom(&atom, &b).unwrap_err();
        assert_eq!(err.to_string(), "x unbound");
    }

    #[test]
    fn constant_order_is_numbers_then_symbols() {
        let mut v = vec![
            Constant::sym("b"),
            Constant::num(2.0),
            Constant::sym("a"),
            Constant::num(-1.0),
        ];
        v.sort();
        assert_eq!(v, vec![
            Constant::num(-1.0),
            Constant::num(2.0),
            Constant::sym("a"),
            Constant::sym("b"),
        ]);
        assert_eq!(Constant::num(-0.0), Constant::num(0.0));
    }

    #[test]
    fn instance_has_set_semantics() {
        let mut inst = Instance::new();
        let f = Fact::new("R", vec![1.0.into()]);
        assert!(inst.insert(f.clone()));
        assert!(!inst.insert(f.clone()));
        assert_eq!(inst.len(), 1);
    }

    #[test]
    fn integral_numbers_print_without_point() {
        assert_eq!(format_number(1.0), "1");
        assert_eq!(format_number(0.5), "0.5");
        assert_eq!(format_number(-3.0), "-3");
    }
}
