//! Reduction of complete data to per-group configuration counts.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::AddAssign;

use crate::data::{InterpretationSet, Record};
use crate::exec::Exec;
use crate::ground::GroundProgram;
use crate::groups::{GroundHead, HeadGroup};
use crate::syntax::Label;

/// Per schema clause of a group: number of satisfied ground bodies for one ground head in one record.
pub type Configuration = Vec<u32>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub n_true: u64,
    pub n_false: u64,
}

impl Counts {
    pub fn total(&self) -> u64 {
        self.n_true + self.n_false
    }
}

impl AddAssign for Counts {
    fn add_assign(&mut self, rhs: Counts) {
        self.n_true += rhs.n_true;
        self.n_false += rhs.n_false;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupStats {
    pub predicate: String,
    pub labels: Vec<Label>,
    pub num_ground_heads: usize,
    /// Ordered lexicographically by multiplicity vector.
    pub table: BTreeMap<Configuration, Counts>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Impossibility {
    /// Head observed true, but no active clause can fire.
    TrueWithoutCause,
    /// Head observed false, but an active clause fires with certainty.
    FalseDespiteCertainCause,
}

impl fmt::Display for Impossibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Impossibility::TrueWithoutCause => f.write_str("head true but no clause can fire"),
            Impossibility::FalseDespiteCertainCause => {
                f.write_str("head false but a certain clause is active")
            }
        }
    }
}

/// Whether a configuration with the given outcome has zero probability for
/// every parameter vector. Depends only on the labels.
pub fn impossibility(labels: &[Label], config: &[u32], head: bool) -> Option<Impossibility> {
    let active = labels.iter().zip(config).filter(|(_, &m)| m > 0).map(|(l, _)| l);
    if head {
        let can_fire = active
            .clone()
            .any(|l| matches!(l, Label::Learnable { .. }) || l.probability(&[]) > 0.0);
        (!can_fire).then_some(Impossibility::TrueWithoutCause)
    } else {
        let certain = active.into_iter().any(|l| match *l {
            Label::Deterministic => true,
            Label::Fixed(p) => p >= 1.0,
            Label::Learnable { .. } => false,
        });
        certain.then_some(Impossibility::FalseDespiteCertainCause)
    }
}

impl GroupStats {
    pub fn total(&self) -> u64 {
        self.table.values().map(Counts::total).sum()
    }

    /// Configurations with an observed outcome that no parameter vector can explain.
    pub fn impossible(&self) -> Vec<(Configuration, Impossibility)> {
        let mut out = Vec::new();
        for (config, counts) in &self.table {
            for (head, n) in [(true, counts.n_true), (false, counts.n_false)] {
                if n > 0 {
                    if let Some(why) = impossibility(&self.labels, config, head) {
                        out.push((config.clone(), why));
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    pub groups: Vec<GroupStats>,
    pub num_params: usize,
    pub total_weight: u64,
}

impl SufficientStats {
    pub fn empty(groups: &[HeadGroup], num_params: usize) -> Self {
        SufficientStats {
            groups: groups
                .iter()
                .map(|g| GroupStats {
                    predicate: g.predicate.clone(),
                    labels: g.labels.clone(),
                    num_ground_heads: g.ground_heads.len(),
                    table: BTreeMap::new(),
                })
                .collect(),
            num_params,
            total_weight: 0,
        }
    }

    /// Entrywise sum. Both operands must come from the same groups.
    pub fn merge(&mut self, other: &SufficientStats) {
        assert_eq!(self.groups.len(), other.groups.len());
        for (a, b) in self.groups.iter_mut().zip(&other.groups) {
            for (config, counts) in &b.table {
                *a.table.entry(config.clone()).or_default() += *counts;
            }
        }
        self.total_weight += other.total_weight;
    }

    pub fn scaled(&self, factor: u64) -> SufficientStats {
        let mut out = self.clone();
        for g in &mut out.groups {
            for c in g.table.values_mut() {
                c.n_true *= factor;
                c.n_false *= factor;
            }
        }
        out.total_weight *= factor;
        out
    }
}

/// Multiplicity vector of one ground head under one record.
pub fn configuration(head: &GroundHead, gp: &GroundProgram, record: &Record) -> Configuration {
    head.instances
        .iter()
        .map(|insts| {
            insts
                .iter()
                .filter(|&&ci| gp.clauses[ci].body.iter().all(|l| l.holds(record[l.atom])))
                .count() as u32
        })
        .collect()
}

fn accumulate(stats: &mut SufficientStats, groups: &[HeadGroup], gp: &GroundProgram, record: &Record, weight: u64) {
    for (g, gs) in groups.iter().zip(stats.groups.iter_mut()) {
        for head in &g.ground_heads {
            let config = configuration(head, gp, record);
            let entry = gs.table.entry(config).or_default();
            if record[head.atom] {
                entry.n_true += weight;
            } else {
                entry.n_false += weight;
            }
        }
    }
    stats.total_weight += weight;
}

/// Counts configurations per group. Groundings of one schema clause pool into one column.
pub fn sufficient_stats(
    data: &InterpretationSet,
    groups: &[HeadGroup],
    gp: &GroundProgram,
    exec: Exec,
) -> SufficientStats {
    let entries = data.entries();
    let partials = exec.map_chunks(&entries, |_, chunk| {
        let mut s = SufficientStats::empty(groups, gp.num_params());
        for &(record, weight) in chunk {
            accumulate(&mut s, groups, gp, record, weight);
        }
        s
    });
    let mut stats = SufficientStats::empty(groups, gp.num_params());
    for p in &partials {
        stats.merge(p);
    }
    stats
}

/// Whether any ground head of the record is in an impossible configuration.
pub fn record_is_consistent(record: &Record, groups: &[HeadGroup], gp: &GroundProgram) -> bool {
    groups.iter().all(|g| {
        g.ground_heads.iter().all(|h| {
            let config = configuration(h, gp, record);
            impossibility(&g.labels, &config, record[h.atom]).is_none()
        })
    })
}

/// Removes records that no parameter vector can explain; returns the dropped weight.
pub fn drop_inconsistent(data: &mut InterpretationSet, groups: &[HeadGroup], gp: &GroundProgram) -> u64 {
    let before = data.total_weight();
    data.retain(|r| record_is_consistent(r, groups, gp));
    before - data.total_weight()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{atom_lookup, forward_sample, parse_blocks, parse_csv};
    use crate::ground::ground;
    use crate::groups::head_groups;
    use crate::parser::parse_program;
    use crate::programs;
    use proptest::prelude::*;

    fn two_clause_csv(n00: usize, n01: usize, n10: usize, n11: usize) -> String {
        let mut s = String::from("h,b\n");
        for (row, n) in [("0,0", n00), ("0,1", n01), ("1,0", n10), ("1,1", n11)] {
            for _ in 0..n {
                s.push_str(row);
                s.push('\n');
            }
        }
        s
    }

    #[test]
    fn two_clause_table() {
        let gp = ground(&parse_program(programs::TWO_CLAUSE).unwrap(), &[]).unwrap();
        let groups = head_groups(&gp);
        let data = parse_csv(&two_clause_csv(6, 2, 2, 2), &gp).unwrap();
        let stats = sufficient_stats(&data, &groups, &gp, Exec::Sequential);
        let table = &stats.groups[0].table;
        assert_eq!(table.len(), 2);
        assert_eq!(table[&vec![1, 0]], Counts { n_true: 2, n_false: 6 });
        assert_eq!(table[&vec![1, 1]], Counts { n_true: 2, n_false: 2 });
    }

    #[test]
    fn empty_data_gives_empty_tables() {
        let gp = ground(&parse_program(programs::ALARM).unwrap(), &["a".into()]).unwrap();
        let groups = head_groups(&gp);
        let stats = sufficient_stats(&InterpretationSet::new(gp.num_atoms()), &groups, &gp, Exec::Parallel);
        assert!(stats.groups.iter().all(|g| g.table.is_empty()));
    }

    #[test]
    fn alarm_fire_only_record() {
        let gp = ground(&parse_program(programs::ALARM).unwrap(), &["a".into()]).unwrap();
        let groups = head_groups(&gp);
        let text = "fire(a).\n\\+burglary(a).\nalarm(a).\n\\+neighbor(a,a).\n\\+calls(a,a).\n";
        let data = parse_blocks(text, &gp).unwrap();
        let stats = sufficient_stats(&data, &groups, &gp, Exec::Sequential);
        let alarm = stats.groups.iter().find(|g| g.predicate == "alarm").unwrap();
        assert_eq!(alarm.table.len(), 1);
        assert_eq!(alarm.table[&vec![1, 0]], Counts { n_true: 1, n_false: 0 });
    }

    #[test]
    fn impossible_configurations() {
        let labels = [Label::Learnable { init: 0.5, param: 0 }, Label::Deterministic, Label::Fixed(0.0)];
        assert_eq!(impossibility(&labels, &[0, 0, 0], true), Some(Impossibility::TrueWithoutCause));
        assert_eq!(impossibility(&labels, &[0, 0, 2], true), Some(Impossibility::TrueWithoutCause));
        assert_eq!(impossibility(&labels, &[1, 0, 0], true), None);
        assert_eq!(impossibility(&labels, &[1, 1, 0], false), Some(Impossibility::FalseDespiteCertainCause));
        assert_eq!(impossibility(&labels, &[1, 0, 0], false), None);
    }

    #[test]
    fn dropping_inconsistent_records() {
        let gp = ground(&parse_program("t(_)::h :- b.").unwrap(), &[]).unwrap();
        let groups = head_groups(&gp);
        let mut data = parse_csv("h,b\n1,0\n1,1\n0,1\n1,0\n", &gp).unwrap();
        let dropped = drop_inconsistent(&mut data, &groups, &gp);
        assert_eq!(dropped, 2);
        assert_eq!(data.total_weight(), 2);
        let ids = atom_lookup(&gp);
        assert!(data.iter().all(|(r, _)| r[ids["b"]]));
    }

    fn alarm_sample(n: usize, seed: u64) -> (GroundProgram, Vec<HeadGroup>, InterpretationSet) {
        let gp = ground(&parse_program(programs::ALARM).unwrap(), &["a".into(), "b".into()]).unwrap();
        let groups = head_groups(&gp);
        let data = forward_sample(&gp, &gp.program.initial_theta(), n, seed, Exec::Sequential).unwrap();
        (gp, groups, data)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn count_conservation(n in 0usize..300, seed in any::<u64>()) {
            let (gp, groups, data) = alarm_sample(n, seed);
            let stats = sufficient_stats(&data, &groups, &gp, Exec::Parallel);
            for g in &stats.groups {
                prop_assert_eq!(g.total(), g.num_ground_heads as u64 * data.total_weight());
                for config in g.table.keys() {
                    prop_assert_eq!(config.len(), g.labels.len());
                }
            }
        }

        #[test]
        fn merge_is_split_invariant(n in 1usize..300, seed in any::<u64>(), cut in 0usize..300) {
            let (gp, groups, data) = alarm_sample(n, seed);
            let cut = cut % (data.distinct() + 1);
            let mut left = InterpretationSet::new(gp.num_atoms());
            let mut right = InterpretationSet::new(gp.num_atoms());
            for (i, (r, w)) in data.iter().enumerate() {
                if i < cut { left.push_weighted(r.clone(), w) } else { right.push_weighted(r.clone(), w) }
            }
            let whole = sufficient_stats(&data, &groups, &gp, Exec::Sequential);
            let mut parts = sufficient_stats(&left, &groups, &gp, Exec::Sequential);
            parts.merge(&sufficient_stats(&right, &groups, &gp, Exec::Parallel));
            prop_assert_eq!(whole, parts);
        }
    }

    #[test]
    fn empirical_rates_match_noisy_or() {
        let (gp, groups, data) = alarm_sample(20000, 77);
        let theta = gp.program.initial_theta();
        let stats = sufficient_stats(&data, &groups, &gp, Exec::Parallel);
        for g in &stats.groups {
            for (config, counts) in &g.table {
                let n = counts.total() as f64;
                if n < 200.0 {
                    continue;
                }
                let fail: f64 = g
                    .labels
                    .iter()
                    .zip(config)
                    .map(|(l, &m)| (1.0 - l.probability(&theta)).powi(m as i32))
                    .product();
                let p = 1.0 - fail;
                let freq = counts.n_true as f64 / n;
                let sigma = (p * (1.0 - p) / n).sqrt();
                assert!((freq - p).abs() <= 3.0 * sigma + 1e-12, "{} {:?}: {freq} vs {p}", g.predicate, config);
            }
        }
    }
}
