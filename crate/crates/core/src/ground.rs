//! Grounding over a constant domain, dependency graph and acyclicity check.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use crate::syntax::{Clause, ClauseId, Label, Program, Term};

pub type AtomId = usize;

/// A variable-free atom. Ordering is lexicographic by predicate, then arguments.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroundAtom {
    pub predicate: String,
    pub args: Vec<String>,
}

impl GroundAtom {
    pub fn new(predicate: impl Into<String>, args: &[&str]) -> Self {
        GroundAtom {
            predicate: predicate.into(),
            args: args.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl fmt::Display for GroundAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.predicate)?;
        if !self.args.is_empty() {
            write!(f, "({})", self.args.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroundLit {
    pub atom: AtomId,
    pub negated: bool,
}

impl GroundLit {
    /// Truth of the literal under a total assignment.
    #[inline]
    pub fn holds(&self, value: bool) -> bool {
        value != self.negated
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundClause {
    pub head: AtomId,
    /// Sorted and duplicate-free.
    pub body: Vec<GroundLit>,
    pub label: Label,
    pub source: ClauseId,
    /// Constants bound to the source clause's variables, in first-appearance order.
    pub bindings: Vec<String>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GroundError {
    #[error("cyclic dependency graph: {}", .cycle.join(" -> "))]
    Cycle { cycle: Vec<String> },
    #[error("empty constant domain, but clause {clause} contains variables")]
    EmptyDomain { clause: ClauseId },
}

#[derive(Debug, Clone)]
pub struct GroundProgram {
    pub program: Program,
    pub constants: Vec<String>,
    pub atoms: Vec<GroundAtom>,
    pub clauses: Vec<GroundClause>,
    /// Deduplicated subgoal -> head edges, sorted.
    pub edges: Vec<(AtomId, AtomId)>,
    /// Every edge goes from an earlier to a later position.
    pub topo_order: Vec<AtomId>,
    index: HashMap<GroundAtom, AtomId>,
}

type RawInstance = (GroundAtom, Vec<(GroundAtom, bool)>, Vec<String>);

fn substitute(args: &[Term], vars: &[String], values: &[&str]) -> Vec<String> {
    args.iter()
        .map(|t| match t {
            Term::Const(c) => c.clone(),
            Term::Var(v) => {
                let i = vars.iter().position(|x| x == v).expect("variable collected");
                values[i].to_string()
            }
        })
        .collect()
}

/// All `n^v` instances of one clause, before deduplication.
pub fn clause_instances(clause: &Clause, constants: &[String]) -> Vec<RawInstance> {
    let vars = clause.variables();
    if !vars.is_empty() && constants.is_empty() {
        return Vec::new();
    }
    let n = constants.len();
    let v = vars.len();
    let total = n.pow(v as u32);
    let mut out = Vec::with_capacity(total);
    let mut digits = vec![0usize; v];
    for _ in 0..total {
        let values: Vec<&str> = digits.iter().map(|&d| constants[d].as_str()).collect();
        let head = GroundAtom {
            predicate: clause.head.predicate.clone(),
            args: substitute(&clause.head.args, &vars, &values),
        };
        let body = clause
            .body
            .iter()
            .map(|l| {
                (
                    GroundAtom {
                        predicate: l.atom.predicate.clone(),
                        args: substitute(&l.atom.args, &vars, &values),
                    },
                    l.negated,
                )
            })
            .collect();
        out.push((head, body, values.iter().map(|s| s.to_string()).collect()));
        // odometer, last variable fastest
        for d in digits.iter_mut().rev() {
            *d += 1;
            if *d < n {
                break;
            }
            *d = 0;
        }
    }
    out
}

/// Grounds `program` over its own constants plus `extra_constants`.
pub fn ground(program: &Program, extra_constants: &[String]) -> Result<GroundProgram, GroundError> {
    let constants: Vec<String> = program
        .constants
        .iter()
        .cloned()
        .chain(extra_constants.iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let mut raw = Vec::new();
    for (id, clause) in program.clauses.iter().enumerate() {
        if constants.is_empty() && !clause.variables().is_empty() {
            return Err(GroundError::EmptyDomain { clause: id });
        }
        for inst in clause_instances(clause, &constants) {
            raw.push((id, inst));
        }
    }

    let mut atom_set = BTreeSet::new();
    for (_, (head, body, _)) in &raw {
        atom_set.insert(head.clone());
        for (a, _) in body {
            atom_set.insert(a.clone());
        }
    }
    let atoms: Vec<GroundAtom> = atom_set.into_iter().collect();
    let index: HashMap<&GroundAtom, AtomId> = atoms.iter().enumerate().map(|(i, a)| (a, i)).collect();

    let mut seen = HashSet::new();
    let mut clauses = Vec::new();
    for (source, (head, body, bindings)) in raw {
        let head = index[&head];
        let mut body: Vec<GroundLit> = body
            .into_iter()
            .map(|(a, negated)| GroundLit {
                atom: index[&a],
                negated,
            })
            .collect();
        body.sort();
        body.dedup();
        if seen.insert((head, body.clone(), source)) {
            clauses.push(GroundClause {
                head,
                body,
                label: program.clauses[source].label,
                source,
                bindings,
            });
        }
    }

    GroundProgram::assemble(program.clone(), constants, atoms, clauses)
}

/// Kahn's algorithm with smallest-index-first tie breaking. On failure returns
/// one cycle as a closed path `[a, b, ..., a]` following edge direction.
pub fn topological_order(n: usize, edges: &[(AtomId, AtomId)]) -> Result<Vec<AtomId>, Vec<AtomId>> {
    let mut succ = vec![Vec::new(); n];
    let mut indeg = vec![0usize; n];
    for &(from, to) in edges {
        succ[from].push(to);
        indeg[to] += 1;
    }
    let mut ready: BTreeSet<AtomId> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(a) = ready.pop_first() {
        order.push(a);
        for &b in &succ[a] {
            indeg[b] -= 1;
            if indeg[b] == 0 {
                ready.insert(b);
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }

    // Every remaining node has a remaining predecessor, so walking backwards must revisit a node.
    let remaining: Vec<bool> = (0..n).map(|i| indeg[i] > 0).collect();
    let mut pred = vec![None; n];
    for &(from, to) in edges {
        if remaining[from] && remaining[to] && pred[to].is_none() {
            pred[to] = Some(from);
        }
    }
    let start = (0..n).find(|&i| remaining[i]).expect("cycle exists");
    let mut visited = vec![false; n];
    let mut cur = start;
    while !visited[cur] {
        visited[cur] = true;
        cur = pred[cur].expect("remaining node has a remaining predecessor");
    }
    let anchor = cur;
    let mut back = vec![anchor];
    let mut node = pred[anchor].unwrap();
    while node != anchor {
        back.push(node);
        node = pred[node].unwrap();
    }
    back.push(anchor);
    back.reverse();
    Err(back)
}

impl GroundProgram {
    /// Builds the dependency graph and index for already-grounded clauses.
    /// Fails when the graph is cyclic.
    pub fn assemble(
        program: Program,
        constants: Vec<String>,
        atoms: Vec<GroundAtom>,
        clauses: Vec<GroundClause>,
    ) -> Result<GroundProgram, GroundError> {
        let edges: Vec<(AtomId, AtomId)> = clauses
            .iter()
            .flat_map(|c| c.body.iter().map(move |l| (l.atom, c.head)))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let topo_order = topological_order(atoms.len(), &edges).map_err(|cycle| GroundError::Cycle {
            cycle: cycle.iter().map(|&a| atoms[a].to_string()).collect(),
        })?;
        let index = atoms.iter().enumerate().map(|(i, a)| (a.clone(), i)).collect();
        Ok(GroundProgram {
            program,
            constants,
            atoms,
            clauses,
            edges,
            topo_order,
            index,
        })
    }

    pub fn num_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn num_params(&self) -> usize {
        self.program.num_params()
    }

    pub fn atom_id(&self, atom: &GroundAtom) -> Option<AtomId> {
        self.index.get(atom).copied()
    }

    /// Ground clauses grouped by head atom.
    pub fn clauses_by_head(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.atoms.len()];
        for (i, c) in self.clauses.iter().enumerate() {
            out[c.head].push(i);
        }
        out
    }

    /// Position of each atom in `topo_order`.
    pub fn topo_rank(&self) -> Vec<usize> {
        let mut rank = vec![0; self.atoms.len()];
        for (r, &a) in self.topo_order.iter().enumerate() {
            rank[a] = r;
        }
        rank
    }
}
