//! Bundled benchmark programs.

/// Relational alarm program with six learnable clauses.
pub const ALARM: &str = include_str!("../programs/alarm.pl");

/// `t(_)::h.` and `t(_)::h :- b.`
pub const TWO_CLAUSE: &str = include_str!("../programs/two_clause.pl");

/// Propositional power-plant surrogate: 16 propositions, 7 probabilistic facts, 17 probabilistic rules.
pub const SHIP: &str = include_str!("../programs/ship.pl");
