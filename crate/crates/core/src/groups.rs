//! Head groups: schema clauses sharing a head predicate, the unit of estimation.

use crate::ground::{AtomId, GroundProgram};
use crate::syntax::{ClauseId, Label, ParamId};

#[derive(Debug, Clone, PartialEq)]
pub struct GroundHead {
    pub atom: AtomId,
    /// `instances[i]` lists the ground clause indices of schema clause `i` with this head.
    pub instances: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadGroup {
    pub predicate: String,
    /// Program order.
    pub schema_clauses: Vec<ClauseId>,
    pub labels: Vec<Label>,
    /// Every ground atom of the predicate, in atom order.
    pub ground_heads: Vec<GroundHead>,
}

impl HeadGroup {
    pub fn num_clauses(&self) -> usize {
        self.schema_clauses.len()
    }

    /// Learnable parameters of this group, sorted by id.
    pub fn params(&self) -> Vec<ParamId> {
        let mut ps: Vec<ParamId> = self.labels.iter().filter_map(Label::param).collect();
        ps.sort_unstable();
        ps
    }

    pub fn has_learnable(&self) -> bool {
        self.labels.iter().any(|l| l.param().is_some())
    }
}

/// One group per head predicate, ordered by the predicate's first defining clause.
pub fn head_groups(gp: &GroundProgram) -> Vec<HeadGroup> {
    let program = &gp.program;
    let mut groups: Vec<HeadGroup> = Vec::new();
    let mut clause_slot = vec![(0usize, 0usize); program.clauses.len()];
    for (id, clause) in program.clauses.iter().enumerate() {
        let pred = &clause.head.predicate;
        let g = match groups.iter().position(|g| &g.predicate == pred) {
            Some(g) => g,
            None => {
                groups.push(HeadGroup {
                    predicate: pred.clone(),
                    schema_clauses: Vec::new(),
                    labels: Vec::new(),
                    ground_heads: Vec::new(),
                });
                groups.len() - 1
            }
        };
        clause_slot[id] = (g, groups[g].schema_clauses.len());
        groups[g].schema_clauses.push(id);
        groups[g].labels.push(clause.label);
    }

    let mut head_slot = vec![None; gp.atoms.len()];
    for (gi, group) in groups.iter_mut().enumerate() {
        for (atom, ga) in gp.atoms.iter().enumerate() {
            if ga.predicate == group.predicate {
                head_slot[atom] = Some((gi, group.ground_heads.len()));
                group.ground_heads.push(GroundHead {
                    atom,
                    instances: vec![Vec::new(); group.schema_clauses.len()],
                });
            }
        }
    }

    for (ci, gc) in gp.clauses.iter().enumerate() {
        let (g, slot) = clause_slot[gc.source];
        let (hg, h) = head_slot[gc.head].expect("clause head belongs to its group");
        debug_assert_eq!(g, hg);
        groups[g].ground_heads[h].instances[slot].push(ci);
    }
    groups
}
