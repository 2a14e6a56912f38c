//! EM baseline: every probabilistic rule becomes a latent auxiliary fact plus a
//! deterministic rule, and the auxiliary facts are re-estimated by EM even
//! though the observed atoms are complete.
//!
//! The latent layer factorizes per ground head (each auxiliary atom feeds one
//! rule), so the E-step posterior is exact: given the observed head and the
//! set `S` of clauses whose observed bodies hold,
//!
//! ```text
//! head false: E[x_i] = 0                          for i in S
//! head true:  E[x_i] = p_i / (1 - prod_{j in S} (1 - p_j))
//! otherwise:  E[x_i] = p_i                        (body false, decoupled)
//! ```

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::time::Instant;

use crate::data::{InterpretationSet, Record};
use crate::exec::Exec;
use crate::ground::{AtomId, GroundAtom, GroundClause, GroundLit, GroundProgram};
use crate::groups::head_groups;
use crate::mle::{log_likelihood, FitError, FitResult, GroupFit, Method, CLAMP_HI, CLAMP_LO};
use crate::stats::{sufficient_stats, Impossibility};
use crate::syntax::{Atom, Clause, ClauseId, Label, Literal, Program, Term};

#[derive(Debug, Clone, PartialEq)]
pub struct AuxFact {
    pub atom: AtomId,
    pub label: Label,
    /// Head of the rule this auxiliary switches on.
    pub head: AtomId,
    /// Schema clause of the original program.
    pub source: ClauseId,
    /// Index of the deterministic rule in `base.clauses`.
    pub rule: usize,
}

#[derive(Debug, Clone)]
pub struct DesugaredProgram {
    /// Original atoms first, auxiliary atoms appended.
    pub base: GroundProgram,
    pub aux: Vec<AuxFact>,
    pub original: GroundProgram,
}

impl DesugaredProgram {
    pub fn num_original_atoms(&self) -> usize {
        self.original.num_atoms()
    }
}

fn fresh_name(stem: String, taken: &BTreeSet<String>) -> String {
    let mut name = stem;
    while taken.contains(&name) {
        name.push('_');
    }
    name
}

/// Replaces every probabilistic rule `p::h :- body.` by `p::x.` and `h :- body, x.`
/// with a fresh auxiliary `x` per ground instance. Facts are kept as they are.
pub fn desugar(gp: &GroundProgram) -> DesugaredProgram {
    let program = &gp.program;
    let mut taken: BTreeSet<String> = program.predicates().keys().map(|s| s.to_string()).collect();

    // schema level
    let mut clauses = Vec::new();
    // original clause id -> (aux fact clause, rule clause, aux predicate)
    let mut schema: Vec<(Option<ClauseId>, ClauseId, Option<String>)> = Vec::new();
    for (id, c) in program.clauses.iter().enumerate() {
        if c.label.is_probabilistic() && !c.is_fact() {
            let pred = fresh_name(format!("x{id}"), &taken);
            taken.insert(pred.clone());
            let aux_atom = Atom::new(pred.clone(), c.variables().into_iter().map(Term::Var).collect());
            clauses.push(Clause {
                head: aux_atom.clone(),
                body: Vec::new(),
                label: c.label,
            });
            let mut body = c.body.clone();
            body.push(Literal {
                atom: aux_atom,
                negated: false,
            });
            clauses.push(Clause {
                head: c.head.clone(),
                body,
                label: Label::Deterministic,
            });
            schema.push((Some(clauses.len() - 2), clauses.len() - 1, Some(pred)));
        } else {
            clauses.push(c.clone());
            schema.push((None, clauses.len() - 1, None));
        }
    }
    let desugared = Program {
        clauses,
        params: program.params.clone(),
        constants: program.constants.clone(),
    };

    // ground level
    let mut atoms = gp.atoms.clone();
    let mut ground = Vec::new();
    let mut aux = Vec::new();
    for gc in &gp.clauses {
        let (fact_clause, rule_clause, pred) = &schema[gc.source];
        match (fact_clause, pred) {
            (Some(fact_clause), Some(pred)) => {
                let atom = atoms.len();
                atoms.push(GroundAtom {
                    predicate: pred.clone(),
                    args: gc.bindings.clone(),
                });
                ground.push(GroundClause {
                    head: atom,
                    body: Vec::new(),
                    label: gc.label,
                    source: *fact_clause,
                    bindings: gc.bindings.clone(),
                });
                let mut body = gc.body.clone();
                body.push(GroundLit { atom, negated: false });
                body.sort();
                ground.push(GroundClause {
                    head: gc.head,
                    body,
                    label: Label::Deterministic,
                    source: *rule_clause,
                    bindings: gc.bindings.clone(),
                });
                aux.push(AuxFact {
                    atom,
                    label: gc.label,
                    head: gc.head,
                    source: gc.source,
                    rule: ground.len() - 1,
                });
            }
            _ => {
                let mut c = gc.clone();
                c.source = *rule_clause;
                ground.push(c);
            }
        }
    }
    let base = GroundProgram::assemble(desugared, gp.constants.clone(), atoms, ground)
        .expect("auxiliary atoms are parentless, so desugaring preserves acyclicity");
    DesugaredProgram {
        base,
        aux,
        original: gp.clone(),
    }
}

/// One possible cause of a ground head, with the observed part of its body.
#[derive(Debug, Clone)]
struct Cause {
    label: Label,
    body: Vec<GroundLit>,
}

#[derive(Debug, Clone)]
struct HeadCauses {
    head: AtomId,
    causes: Vec<Cause>,
}

fn head_causes(dp: &DesugaredProgram) -> Vec<HeadCauses> {
    let n = dp.num_original_atoms();
    let mut by_head: Vec<Vec<Cause>> = vec![Vec::new(); n];
    let aux_of_rule: std::collections::HashMap<usize, &AuxFact> = dp.aux.iter().map(|a| (a.rule, a)).collect();
    let aux_atoms: BTreeSet<AtomId> = dp.aux.iter().map(|a| a.atom).collect();
    for (ci, c) in dp.base.clauses.iter().enumerate() {
        if aux_atoms.contains(&c.head) {
            continue;
        }
        let cause = match aux_of_rule.get(&ci) {
            Some(a) => Cause {
                label: a.label,
                body: c.body.iter().copied().filter(|l| l.atom != a.atom).collect(),
            },
            None => Cause {
                label: c.label,
                body: c.body.clone(),
            },
        };
        by_head[c.head].push(cause);
    }
    by_head
        .into_iter()
        .enumerate()
        .filter(|(_, cs)| cs.iter().any(|c| c.label.param().is_some()))
        .map(|(head, causes)| HeadCauses { head, causes })
        .collect()
}

/// Expected auxiliary successes and instance counts per learnable parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedCounts {
    pub successes: Vec<f64>,
    pub instances: Vec<f64>,
}

impl ExpectedCounts {
    fn zeros(n: usize) -> Self {
        ExpectedCounts {
            successes: vec![0.0; n],
            instances: vec![0.0; n],
        }
    }

    fn add(&mut self, other: &ExpectedCounts) {
        for (a, b) in self.successes.iter_mut().zip(&other.successes) {
            *a += b;
        }
        for (a, b) in self.instances.iter_mut().zip(&other.instances) {
            *a += b;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Count auxiliaries with false bodies (posterior = prior) in the M-step.
    pub include_inactive: bool,
    pub exec: Exec,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            tol: 1e-6,
            max_iter: 1000,
            include_inactive: true,
            exec: Exec::default(),
        }
    }
}

fn e_step_record(
    heads: &[HeadCauses],
    dp: &DesugaredProgram,
    record: &Record,
    weight: f64,
    theta: &[f64],
    include_inactive: bool,
    acc: &mut ExpectedCounts,
) -> Result<(), FitError> {
    let mut active = Vec::new();
    for hc in heads {
        active.clear();
        active.extend(hc.causes.iter().map(|c| c.body.iter().all(|l| l.holds(record[l.atom]))));
        let fail: f64 = hc
            .causes
            .iter()
            .zip(&active)
            .filter(|(_, &on)| on)
            .map(|(c, _)| 1.0 - c.label.probability(theta))
            .product();
        let head = record[hc.head];
        if head && fail >= 1.0 || !head && fail <= 0.0 {
            let why = if head {
                Impossibility::TrueWithoutCause
            } else {
                Impossibility::FalseDespiteCertainCause
            };
            return Err(FitError::Inconsistent {
                predicate: dp.original.atoms[hc.head].to_string(),
                config: active.iter().map(|&on| on as u32).collect(),
                why,
            });
        }
        for (c, &on) in hc.causes.iter().zip(&active) {
            let Some(p) = c.label.param() else { continue };
            let prior = theta[p];
            if on {
                let post = if head { prior / (1.0 - fail) } else { 0.0 };
                acc.successes[p] += weight * post;
                acc.instances[p] += weight;
            } else if include_inactive {
                acc.successes[p] += weight * prior;
                acc.instances[p] += weight;
            }
        }
    }
    Ok(())
}

/// Exact expected sufficient statistics of the auxiliary facts.
pub fn e_step(
    dp: &DesugaredProgram,
    data: &InterpretationSet,
    theta: &[f64],
    opts: &EmOptions,
) -> Result<ExpectedCounts, FitError> {
    let heads = head_causes(dp);
    e_step_with(&heads, dp, data, theta, opts)
}

fn e_step_with(
    heads: &[HeadCauses],
    dp: &DesugaredProgram,
    data: &InterpretationSet,
    theta: &[f64],
    opts: &EmOptions,
) -> Result<ExpectedCounts, FitError> {
    if theta.len() != dp.original.num_params() {
        return Err(FitError::ThetaLength {
            expected: dp.original.num_params(),
            found: theta.len(),
        });
    }
    let entries = data.entries();
    let partials = opts.exec.map_chunks(&entries, |_, chunk| {
        let mut acc = ExpectedCounts::zeros(theta.len());
        for &(record, weight) in chunk {
            e_step_record(heads, dp, record, weight as f64, theta, opts.include_inactive, &mut acc)?;
        }
        Ok(acc)
    });
    let mut total = ExpectedCounts::zeros(theta.len());
    for p in partials {
        total.add(&p?);
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmStep {
    pub iteration: usize,
    pub loglik: f64,
    /// `None` for the initial point.
    pub delta: Option<f64>,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmTrace {
    pub steps: Vec<EmStep>,
    pub converged: bool,
    pub fit: FitResult,
}

impl EmTrace {
    pub fn iterations(&self) -> usize {
        self.steps.len().saturating_sub(1)
    }

    /// Columns: iteration, loglik, delta, then one per parameter.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,loglik,delta");
        for p in 0..self.fit.theta.len() {
            let _ = write!(out, ",theta{p}");
        }
        out.push('\n');
        for s in &self.steps {
            let _ = write!(out, "{},{}", s.iteration, s.loglik);
            match s.delta {
                Some(d) => {
                    let _ = write!(out, ",{d}");
                }
                None => out.push(','),
            }
            for t in &s.theta {
                let _ = write!(out, ",{t}");
            }
            out.push('\n');
        }
        out
    }
}

/// Runs EM from `init` until the observed-data log-likelihood changes by less
/// than `opts.tol` or `opts.max_iter` updates have been made.
pub fn fit_em(
    dp: &DesugaredProgram,
    data: &InterpretationSet,
    init: &[f64],
    opts: &EmOptions,
) -> Result<EmTrace, FitError> {
    let start = Instant::now();
    let gp = &dp.original;
    if init.len() != gp.num_params() {
        return Err(FitError::ThetaLength {
            expected: gp.num_params(),
            found: init.len(),
        });
    }
    let groups = head_groups(gp);
    let stats = sufficient_stats(data, &groups, gp, opts.exec);
    let heads = head_causes(dp);

    let mut theta: Vec<f64> = init.iter().map(|t| t.clamp(CLAMP_LO, CLAMP_HI)).collect();
    let first = log_likelihood(&stats, &theta)?;
    if let Some((predicate, config, why)) = first.impossible.into_iter().next() {
        return Err(FitError::Inconsistent { predicate, config, why });
    }
    let mut ll = first.value;
    let mut steps = vec![EmStep {
        iteration: 0,
        loglik: ll,
        delta: None,
        theta: theta.clone(),
    }];
    let mut converged = false;
    for iteration in 1..=opts.max_iter {
        let counts = e_step_with(&heads, dp, data, &theta, opts)?;
        for (p, t) in theta.iter_mut().enumerate() {
            if counts.instances[p] > 0.0 {
                *t = (counts.successes[p] / counts.instances[p]).clamp(CLAMP_LO, CLAMP_HI);
            }
        }
        let next = log_likelihood(&stats, &theta)?.value;
        let delta = next - ll;
        ll = next;
        steps.push(EmStep {
            iteration,
            loglik: ll,
            delta: Some(delta),
            theta: theta.clone(),
        });
        if delta.abs() < opts.tol {
            converged = true;
            break;
        }
    }

    let iterations = steps.len() - 1;
    let fit = FitResult {
        groups: groups
            .iter()
            .filter(|g| g.has_learnable())
            .map(|g| GroupFit {
                predicate: g.predicate.clone(),
                params: g.params(),
                method: Method::Em,
                identifiable: true,
                iterations,
            })
            .collect(),
        theta,
        loglik: ll,
        iterations,
        wall_time: start.elapsed().as_secs_f64(),
        dropped_records: 0,
    };
    Ok(EmTrace { steps, converged, fit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{forward_sample, parse_csv};
    use crate::ground::ground;
    use crate::parser::parse_program;
    use crate::programs;

    fn gp_of(text: &str, consts: &[&str]) -> GroundProgram {
        let cs: Vec<String> = consts.iter().map(|s| s.to_string()).collect();
        ground(&parse_program(text).unwrap(), &cs).unwrap()
    }

    #[test]
    fn alarm_auxiliaries() {
        let gp = gp_of(programs::ALARM, &["a", "b"]);
        let dp = desugar(&gp);
        assert_eq!(dp.aux.len(), 8);
        let count = |src: ClauseId| dp.aux.iter().filter(|a| a.source == src).count();
        assert_eq!([count(3), count(4), count(5)], [2, 2, 4]);
        // auxiliary atoms have no parents and appear in exactly one rule body
        for a in &dp.aux {
            assert!(dp.base.edges.iter().all(|&(_, to)| to != a.atom));
            let uses = dp.base.clauses.iter().filter(|c| c.body.iter().any(|l| l.atom == a.atom)).count();
            assert_eq!(uses, 1);
        }
    }

    #[test]
    fn facts_only_unchanged() {
        let gp = gp_of("t(_)::a.\n0.3::b(X).", &["c"]);
        let dp = desugar(&gp);
        assert!(dp.aux.is_empty());
        assert_eq!(dp.base.clauses, gp.clauses);
    }

    #[test]
    fn single_rule_desugaring() {
        let gp = gp_of("t(_)::h :- b.", &[]);
        let dp = desugar(&gp);
        assert_eq!(dp.base.program.to_string(), "t(0.5)::x0.\nh :- b, x0.\n");
        assert_eq!(dp.aux.len(), 1);
        assert_eq!(dp.base.clauses.len(), 2);
    }

    #[test]
    fn auxiliary_names_avoid_collisions() {
        let gp = gp_of("x0.\nt(_)::h :- x0.", &[]);
        let dp = desugar(&gp);
        assert_eq!(dp.base.atoms[dp.aux[0].atom].predicate, "x1");
        let gp = gp_of("t(_)::h :- x0.\nx0 :- y.", &[]);
        assert_eq!(desugar(&gp).base.atoms.last().unwrap().predicate, "x0_");
    }

    fn two_clause_data(n00: usize, n01: usize, n10: usize, n11: usize) -> (GroundProgram, InterpretationSet) {
        let gp = gp_of(programs::TWO_CLAUSE, &[]);
        let mut csv = String::from("h,b\n");
        for (row, n) in [("0,0", n00), ("0,1", n01), ("1,0", n10), ("1,1", n11)] {
            csv.push_str(&format!("{row}\n").repeat(n));
        }
        let data = parse_csv(&csv, &gp).unwrap();
        (gp, data)
    }

    #[test]
    fn posterior_with_two_active_causes() {
        let (gp, _) = two_clause_data(0, 0, 0, 1);
        let dp = desugar(&gp);
        let data = parse_csv("h,b\n1,1\n", &gp).unwrap();
        let theta = [0.25, 1.0 / 3.0];
        let c = e_step(&dp, &data, &theta, &EmOptions::default()).unwrap();
        // 1 - 0.75 * 2/3 = 0.5
        assert!((c.successes[0] - 0.5).abs() < 1e-15);
        assert!((c.successes[1] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(c.instances, vec![1.0, 1.0]);
    }

    #[test]
    fn posterior_when_head_false() {
        let (gp, _) = two_clause_data(0, 0, 0, 0);
        let dp = desugar(&gp);
        let data = parse_csv("h,b\n0,1\n", &gp).unwrap();
        let c = e_step(&dp, &data, &[0.4, 0.7], &EmOptions::default()).unwrap();
        assert_eq!(c.successes, vec![0.0, 0.0]);
    }

    #[test]
    fn inactive_auxiliary_keeps_prior() {
        let (gp, _) = two_clause_data(0, 0, 0, 0);
        let dp = desugar(&gp);
        let data = parse_csv("h,b\n1,0\n", &gp).unwrap();
        let c = e_step(&dp, &data, &[0.4, 0.7], &EmOptions::default()).unwrap();
        assert!((c.successes[0] - 1.0).abs() < 1e-15);
        assert_eq!(c.successes[1], 0.7);
        let opts = EmOptions {
            include_inactive: false,
            ..EmOptions::default()
        };
        let c = e_step(&dp, &data, &[0.4, 0.7], &opts).unwrap();
        assert_eq!((c.successes[1], c.instances[1]), (0.0, 0.0));
    }

    #[test]
    fn worked_example_fixed_point() {
        let (gp, data) = two_clause_data(6, 2, 2, 2);
        let dp = desugar(&gp);
        let trace = fit_em(&dp, &data, &[0.5, 0.5], &EmOptions::default()).unwrap();
        assert!(trace.converged);
        // stopping on a 1e-6 likelihood change leaves theta within ~1e-3
        assert!((trace.fit.theta[0] - 0.25).abs() < 2e-3);
        assert!((trace.fit.theta[1] - 1.0 / 3.0).abs() < 2e-3);
        let optimum = 6.0 * 0.75f64.ln() + 4.0 * 0.5f64.ln() + 2.0 * 0.25f64.ln();
        assert!((trace.fit.loglik - optimum).abs() < 1e-4);
        assert!(trace.steps.windows(2).all(|w| w[1].loglik >= w[0].loglik - 1e-9));
    }

    #[test]
    fn facts_reach_frequencies_after_one_update() {
        let gp = gp_of("t(_)::a.\nt(0.9)::b.", &[]);
        let dp = desugar(&gp);
        let data = parse_csv("a,b\n1,0\n0,0\n1,1\n1,0\n", &gp).unwrap();
        let trace = fit_em(&dp, &data, &[0.5, 0.9], &EmOptions::default()).unwrap();
        assert!(trace.converged);
        let first = &trace.steps[1].theta;
        assert!((first[0] - 0.75).abs() < 1e-15 && (first[1] - 0.25).abs() < 1e-15);
        assert!(trace.steps.last().unwrap().delta.unwrap().abs() < 1e-12);
        assert_eq!(trace.iterations(), 2);
    }

    #[test]
    fn inconsistent_data_rejected() {
        let gp = gp_of("t(_)::h :- b.", &[]);
        let dp = desugar(&gp);
        let data = parse_csv("h,b\n1,0\n", &gp).unwrap();
        assert!(matches!(
            fit_em(&dp, &data, &[0.5], &EmOptions::default()),
            Err(FitError::Inconsistent { .. })
        ));
        assert!(matches!(
            e_step(&dp, &data, &[0.5], &EmOptions::default()),
            Err(FitError::Inconsistent { .. })
        ));
    }

    #[test]
    fn trace_csv_layout() {
        let (gp, data) = two_clause_data(6, 2, 2, 2);
        let trace = fit_em(&desugar(&gp), &data, &[0.5, 0.5], &EmOptions::default()).unwrap();
        let csv = trace.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("iteration,loglik,delta,theta0,theta1"));
        assert_eq!(lines.next().unwrap().split(',').count(), 5);
        assert_eq!(csv.lines().count(), trace.steps.len() + 1);
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let gp = gp_of(programs::ALARM, &["a", "b", "c"]);
        let data = forward_sample(&gp, &gp.program.initial_theta(), 400, 5, Exec::Parallel).unwrap();
        let dp = desugar(&gp);
        let run = |exec| {
            let opts = EmOptions { exec, ..EmOptions::default() };
            fit_em(&dp, &data, &[0.5; 6], &opts).unwrap().fit.theta
        };
        let (a, b) = (run(Exec::Sequential), run(Exec::Parallel));
        assert_eq!(
            a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }
}
