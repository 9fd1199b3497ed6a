//! Dependency graph over IDB positions and the weak-acyclicity test.
//!
//! Normal edges follow variables from body positions to head positions.
//! Special edges run from every body position of an exported variable into the
//! Δ-term's head position. Variables that occur only inside Δ-term parameters
//! count as exported. A program is weakly acyclic iff no special edge lies on
//! a cycle, i.e. no special edge has both endpoints in one strongly connected
//! component.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fmt;
use std::sync::Arc;

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};

use crate::model::{HeadArg, Name, Program, Term};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Position {
    pub relation: Name,
    /// 1-based.
    pub attribute: usize,
}

impl Position {
    pub fn new(relation: &str, attribute: usize) -> Self {
        Position {
            relation: Arc::from(relation),
            attribute,
        }
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.relation, self.attribute)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeKind {
    Normal,
    Special,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub from: Position,
    pub to: Position,
    pub kind: EdgeKind,
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let arrow = match self.kind {
            EdgeKind::Normal => "->",
            EdgeKind::Special => "->*",
        };
        write!(f, "{} {arrow} {}", self.from, self.to)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DependencyGraph {
    pub nodes: BTreeSet<Position>,
    pub normal_edges: BTreeSet<(Position, Position)>,
    pub special_edges: BTreeSet<(Position, Position)>,
}

impl DependencyGraph {
    pub fn has_edge(&self, edge: &Edge) -> bool {
        let key = (edge.from.clone(), edge.to.clone());
        match edge.kind {
            EdgeKind::Normal => self.normal_edges.contains(&key),
            EdgeKind::Special => self.special_edges.contains(&key),
        }
    }

    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        let normal = self.normal_edges.iter().map(|(a, b)| Edge {
            from: a.clone(),
            to: b.clone(),
            kind: EdgeKind::Normal,
        });
        let special = self.special_edges.iter().map(|(a, b)| Edge {
            from: a.clone(),
            to: b.clone(),
            kind: EdgeKind::Special,
        });
        normal.chain(special)
    }

    /// Graphviz rendering; special edges are dashed and red.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph dependencies {\n");
        for n in &self.nodes {
            out.push_str(&format!("  \"{n}\";\n"));
        }
        for e in self.edges() {
            let style = match e.kind {
                EdgeKind::Normal => "",
                EdgeKind::Special => " [style=dashed, color=red, label=\"*\"]",
            };
            out.push_str(&format!("  \"{}\" -> \"{}\"{style};\n", e.from, e.to));
        }
        out.push_str("}\n");
        out
    }
}

pub fn build_dependency_graph(program: &Program) -> DependencyGraph {
    let mut graph = DependencyGraph::default();
    for (rel, &arity) in &program.idb_schema {
        for a in 1..=arity {
            graph.nodes.insert(Position {
                relation: rel.clone(),
                attribute: a,
            });
        }
    }

    for rule in &program.rules {
        let head = &rule.head;
        let mut head_positions: BTreeMap<&Name, Vec<usize>> = BTreeMap::new();
        let mut exported: HashSet<&Name> = HashSet::new();
        let mut delta_position = None;
        for (i, arg) in head.args.iter().enumerate() {
            match arg {
                HeadArg::Term(Term::Var(v)) => {
                    head_positions.entry(v).or_default().push(i + 1);
                    exported.insert(v);
                }
                HeadArg::Term(Term::Const(_)) => {}
                HeadArg::Delta(d) => {
                    delta_position = Some(i + 1);
                    exported.extend(d.params.iter().filter_map(Term::as_var));
                }
            }
        }
        for atom in &rule.body {
            if !program.is_idb(&atom.relation) {
                continue;
            }
            for (i, term) in atom.args.iter().enumerate() {
                let Term::Var(v) = term else { continue };
                let from = Position {
                    relation: atom.relation.clone(),
                    attribute: i + 1,
                };
                for &j in head_positions.get(v).into_iter().flatten() {
                    graph.normal_edges.insert((
                        from.clone(),
                        Position {
                            relation: head.relation.clone(),
                            attribute: j,
                        },
                    ));
                }
                if let Some(j) = delta_position {
                    if exported.contains(v) {
                        graph.special_edges.insert((
                            from.clone(),
                            Position {
                                relation: head.relation.clone(),
                                attribute: j,
                            },
                        ));
                    }
                }
            }
        }
    }
    graph
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Acyclicity {
    WeaklyAcyclic,
    /// A closed walk through at least one special edge.
    Cyclic { witness: Vec<Edge> },
}

impl Acyclicity {
    pub fn is_weakly_acyclic(&self) -> bool {
        matches!(self, Acyclicity::WeaklyAcyclic)
    }
}

pub fn is_weakly_acyclic(program: &Program) -> Acyclicity {
    check_graph(&build_dependency_graph(program))
}

pub fn check_graph(graph: &DependencyGraph) -> Acyclicity {
    let mut g: DiGraph<Position, EdgeKind> = DiGraph::new();
    let mut index: BTreeMap<&Position, NodeIndex> = BTreeMap::new();
    for n in &graph.nodes {
        index.insert(n, g.add_node(n.clone()));
    }
    for e in graph.edges() {
        g.add_edge(index[&e.from], index[&e.to], e.kind);
    }
    let mut component = vec![usize::MAX; g.node_count()];
    for (c, scc) in tarjan_scc(&g).into_iter().enumerate() {
        for n in scc {
            component[n.index()] = c;
        }
    }

    // Deterministic: special edges in sorted order, BFS over sorted successors.
    for (from, to) in &graph.special_edges {
        let (a, b) = (index[from], index[to]);
        if component[a.index()] != component[b.index()] {
            continue;
        }
        let mut witness = vec![Edge {
            from: from.clone(),
            to: to.clone(),
            kind: EdgeKind::Special,
        }];
        if a != b {
            witness.extend(shortest_path(graph, to, from, |p| {
                component[index[p].index()] == component[a.index()]
            }));
        }
        return Acyclicity::Cyclic { witness };
    }
    Acyclicity::WeaklyAcyclic
}

fn shortest_path(
    graph: &DependencyGraph,
    start: &Position,
    goal: &Position,
    allowed: impl Fn(&Position) -> bool,
) -> Vec<Edge> {
    let mut successors: BTreeMap<&Position, Vec<Edge>> = BTreeMap::new();
    for e in graph.edges() {
        if allowed(&e.from) && allowed(&e.to) {
            successors
                .entry(graph.nodes.get(&e.from).expect("edge endpoint is a node"))
                .or_default()
                .push(e);
        }
    }
    let mut parent: BTreeMap<Position, Edge> = BTreeMap::new();
    let mut queue = VecDeque::from([start.clone()]);
    let mut visited: BTreeSet<Position> = BTreeSet::from([start.clone()]);
    while let Some(p) = queue.pop_front() {
        if &p == goal {
            break;
        }
        for e in successors.get(&p).into_iter().flatten() {
            if visited.insert(e.to.clone()) {
                parent.insert(e.to.clone(), e.clone());
                queue.push_back(e.to.clone());
            }
        }
    }
    let mut path = Vec::new();
    let mut cur = goal.clone();
    while &cur != start {
        let e = parent[&cur].clone();
        cur = e.from.clone();
        path.push(e);
    }
    path.reverse();
    path
}

/// Checks that `witness` is a closed walk of existing edges with a special
/// edge on it.
pub fn verify_witness(graph: &DependencyGraph, witness: &[Edge]) -> bool {
    if witness.is_empty() || !witness.iter().any(|e| e.kind == EdgeKind::Special) {
        return false;
    }
    if !witness.iter().all(|e| graph.has_edge(e)) {
        return false;
    }
    let chained = witness.windows(2).all(|w| w[0].to == w[1].from);
    chained && witness.last().unwrap().to == witness[0].from
}
