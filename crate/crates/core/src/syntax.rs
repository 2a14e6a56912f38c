//! Non-ground program representation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// A term is either a constant symbol or a logical variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Const(String),
    Var(String),
}

impl Term {
    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Const(c) => f.write_str(c),
            Term::Var(v) => f.write_str(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Atom {
    pub predicate: String,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(predicate: impl Into<String>, args: Vec<Term>) -> Self {
        Atom {
            predicate: predicate.into(),
            args,
        }
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(|t| !t.is_var())
    }

    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.args.iter().filter_map(|t| match t {
            Term::Var(v) => Some(v.as_str()),
            Term::Const(_) => None,
        })
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.predicate)?;
        if !self.args.is_empty() {
            f.write_str("(")?;
            for (i, t) in self.args.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{t}")?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Literal {
    pub atom: Atom,
    pub negated: bool,
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negated {
            f.write_str("\\+")?;
        }
        write!(f, "{}", self.atom)
    }
}

pub type ParamId = usize;
pub type ClauseId = usize;

/// Probability annotation of a clause.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Label {
    Deterministic,
    Fixed(f64),
    Learnable { init: f64, param: ParamId },
}

impl Label {
    pub fn is_probabilistic(&self) -> bool {
        !matches!(self, Label::Deterministic)
    }

    pub fn param(&self) -> Option<ParamId> {
        match self {
            Label::Learnable { param, .. } => Some(*param),
            _ => None,
        }
    }

    /// Firing probability under `theta`; deterministic clauses always fire.
    pub fn probability(&self, theta: &[f64]) -> f64 {
        match *self {
            Label::Deterministic => 1.0,
            Label::Fixed(p) => p,
            Label::Learnable { param, .. } => theta[param],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clause {
    pub head: Atom,
    pub body: Vec<Literal>,
    pub label: Label,
}

impl Clause {
    pub fn is_fact(&self) -> bool {
        self.body.is_empty()
    }

    /// Distinct variables in order of first appearance (head first, then body).
    pub fn variables(&self) -> Vec<String> {
        let mut seen = Vec::<String>::new();
        let atoms = std::iter::once(&self.head).chain(self.body.iter().map(|l| &l.atom));
        for atom in atoms {
            for v in atom.variables() {
                if !seen.iter().any(|s| s == v) {
                    seen.push(v.to_string());
                }
            }
        }
        seen
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.label {
            Label::Deterministic => {}
            Label::Fixed(p) => write!(f, "{p}::")?,
            Label::Learnable { init, .. } => write!(f, "t({init})::")?,
        }
        write!(f, "{}", self.head)?;
        if !self.body.is_empty() {
            f.write_str(" :- ")?;
            for (i, l) in self.body.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{l}")?;
            }
        }
        f.write_str(".")
    }
}

/// A parsed program. Learnable parameters are numbered densely in clause order.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub clauses: Vec<Clause>,
    /// `(param_id, init)` in param_id order.
    pub params: Vec<(ParamId, f64)>,
    pub constants: BTreeSet<String>,
}

impl Program {
    pub fn from_clauses(clauses: Vec<Clause>) -> Self {
        let params = clauses
            .iter()
            .filter_map(|c| match c.label {
                Label::Learnable { init, param } => Some((param, init)),
                _ => None,
            })
            .collect();
        let constants = clauses
            .iter()
            .flat_map(|c| std::iter::once(&c.head).chain(c.body.iter().map(|l| &l.atom)))
            .flat_map(|a| a.args.iter())
            .filter_map(|t| match t {
                Term::Const(c) => Some(c.clone()),
                Term::Var(_) => None,
            })
            .collect();
        Program {
            clauses,
            params,
            constants,
        }
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn initial_theta(&self) -> Vec<f64> {
        self.params.iter().map(|&(_, init)| init).collect()
    }

    pub fn has_variables(&self) -> bool {
        self.clauses.iter().any(|c| !c.variables().is_empty())
    }

    /// Clause owning each parameter, indexed by param_id.
    pub fn param_clauses(&self) -> Vec<ClauseId> {
        let mut out = vec![0; self.params.len()];
        for (id, c) in self.clauses.iter().enumerate() {
            if let Some(p) = c.label.param() {
                out[p] = id;
            }
        }
        out
    }

    pub fn predicates(&self) -> BTreeMap<&str, usize> {
        let mut out = BTreeMap::new();
        for c in &self.clauses {
            for a in std::iter::once(&c.head).chain(c.body.iter().map(|l| &l.atom)) {
                out.insert(a.predicate.as_str(), a.arity());
            }
        }
        out
    }

    /// Same program with learnable labels replaced by fixed estimates rounded to six decimals.
    pub fn render_fitted(&self, theta: &[f64]) -> String {
        let mut out = String::new();
        for c in &self.clauses {
            match c.label {
                Label::Learnable { param, .. } => {
                    let mut fixed = c.clone();
                    fixed.label = Label::Deterministic;
                    out.push_str(&format!("{:.6}::{}\n", theta[param], fixed));
                }
                _ => out.push_str(&format!("{c}\n")),
            }
        }
        out
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.clauses {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}
