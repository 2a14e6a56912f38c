//! Direct maximization of the complete-data log-likelihood, one head group at a time.
//!
//! With failure probabilities `q_i = 1 - theta_i`, a configuration with
//! multiplicities `m` contributes
//!
//! ```text
//! n_false * sum_i m_i ln q_i  +  n_true * ln(1 - prod_i q_i^m_i)
//! ```
//!
//! Deterministic clauses count as `Fixed(1)`. A group whose observed
//! configurations give a square, invertible multiplicity matrix is solved
//! exactly in log-failure space; every other group goes through projected
//! gradient ascent.

use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

use num_traits::ToPrimitive;

use crate::exec::Exec;
use crate::rational;
use crate::stats::{Configuration, Counts, GroupStats, Impossibility, SufficientStats};
use crate::syntax::{Label, ParamId, Program};

pub const CLAMP_LO: f64 = 1e-6;
pub const CLAMP_HI: f64 = 1.0 - 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("expected {expected} parameters, got {found}")]
    ThetaLength { expected: usize, found: usize },
    #[error("parameter {param} = {value} is not interior to (0,1)")]
    BoundaryTheta { param: ParamId, value: f64 },
    #[error("inconsistent data for `{predicate}`: configuration {config:?}: {why}")]
    Inconsistent {
        predicate: String,
        config: Configuration,
        why: Impossibility,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ClosedForm,
    Gradient,
    Degenerate,
    /// Fitted by the EM baseline.
    Em,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::ClosedForm => "closed-form",
            Method::Gradient => "gradient",
            Method::Degenerate => "degenerate",
            Method::Em => "em",
        })
    }
}

#[derive(Debug, Clone)]
struct Row {
    /// `(column, multiplicity)` for active learnable clauses.
    learn: Vec<(usize, u32)>,
    /// `sum m_i ln q_i` over active fixed and deterministic clauses.
    fixed_log: f64,
    n_true: f64,
    n_false: f64,
    config: Configuration,
}

impl Row {
    fn log_fail(&self, x: &[f64]) -> f64 {
        self.fixed_log
            + self
                .learn
                .iter()
                .map(|&(j, m)| m as f64 * (-x[j]).ln_1p())
                .sum::<f64>()
    }

    fn loglik(&self, x: &[f64]) -> f64 {
        let s = self.log_fail(x);
        let mut out = 0.0;
        if self.n_false > 0.0 {
            out += self.n_false * s;
        }
        if self.n_true > 0.0 {
            out += self.n_true * (-s.exp_m1()).ln();
        }
        out
    }

    /// `L(y) - L(x)` for this row without cancellation between large totals.
    fn delta(&self, x: &[f64], y: &[f64]) -> f64 {
        let ds: f64 = self
            .learn
            .iter()
            .map(|&(j, m)| m as f64 * ((x[j] - y[j]) / (1.0 - x[j])).ln_1p())
            .sum();
        let mut out = 0.0;
        if self.n_false > 0.0 {
            out += self.n_false * ds;
        }
        if self.n_true > 0.0 {
            let s = self.log_fail(x);
            // ln((1 - e^{s+ds}) / (1 - e^s))
            out += self.n_true * (s.exp() * -ds.exp_m1() / -s.exp_m1()).ln_1p();
        }
        out
    }
}

/// Likelihood of one head group as a function of its learnable parameters.
#[derive(Debug, Clone)]
pub struct GroupModel {
    pub predicate: String,
    pub labels: Vec<Label>,
    pub table: BTreeMap<Configuration, Counts>,
    /// Learnable parameters, sorted; position = local column.
    pub params: Vec<ParamId>,
    rows: Vec<Row>,
}

impl GroupModel {
    pub fn new(predicate: &str, labels: &[Label], table: &BTreeMap<Configuration, Counts>) -> Self {
        let mut params: Vec<ParamId> = labels.iter().filter_map(Label::param).collect();
        params.sort_unstable();
        let column = |l: &Label| l.param().map(|p| params.binary_search(&p).unwrap());
        let rows = table
            .iter()
            .filter(|(_, c)| c.total() > 0)
            .map(|(config, counts)| {
                let mut learn = Vec::new();
                let mut fixed_log = 0.0;
                for (label, &m) in labels.iter().zip(config) {
                    if m == 0 {
                        continue;
                    }
                    match column(label) {
                        Some(j) => learn.push((j, m)),
                        None => fixed_log += m as f64 * (-label.probability(&[])).ln_1p(),
                    }
                }
                Row {
                    learn,
                    fixed_log,
                    n_true: counts.n_true as f64,
                    n_false: counts.n_false as f64,
                    config: config.clone(),
                }
            })
            .collect();
        GroupModel {
            predicate: predicate.to_string(),
            labels: labels.to_vec(),
            table: table.clone(),
            params,
            rows,
        }
    }

    pub fn from_stats(gs: &GroupStats) -> Self {
        GroupModel::new(&gs.predicate, &gs.labels, &gs.table)
    }

    /// Number of schema clauses.
    pub fn k(&self) -> usize {
        self.labels.len()
    }

    pub fn local(&self, theta: &[f64]) -> Vec<f64> {
        self.params.iter().map(|&p| theta[p]).collect()
    }

    pub fn impossible(&self) -> Option<FitError> {
        self.rows.iter().find_map(|r| {
            [(true, r.n_true), (false, r.n_false)]
                .into_iter()
                .filter(|&(_, n)| n > 0.0)
                .find_map(|(head, _)| crate::stats::impossibility(&self.labels, &r.config, head))
                .map(|why| FitError::Inconsistent {
                    predicate: self.predicate.clone(),
                    config: r.config.clone(),
                    why,
                })
        })
    }

    /// Group log-likelihood at local parameters `x`; `-inf` for impossible data.
    pub fn loglik(&self, x: &[f64]) -> f64 {
        self.rows.iter().map(|r| r.loglik(x)).sum()
    }

    /// `loglik(y) - loglik(x)`, accurate when the two are close.
    pub fn loglik_delta(&self, x: &[f64], y: &[f64]) -> f64 {
        self.rows
            .iter()
            .filter(|r| !r.learn.is_empty())
            .map(|r| r.delta(x, y))
            .sum()
    }

    /// Analytic gradient with respect to the local parameters. `x` must be interior.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.params.len()];
        for r in &self.rows {
            if r.learn.is_empty() {
                continue;
            }
            let s = r.log_fail(x);
            // d/ds of the row term, then ds/dx_j = -m_j / q_j
            let mut w = -r.n_false;
            if r.n_true > 0.0 {
                w += r.n_true / (-s).exp_m1();
            }
            for &(j, m) in &r.learn {
                g[j] += w * m as f64 / (1.0 - x[j]);
            }
        }
        g
    }

    /// Per parameter, the multiplicity-weighted number of observations it is
    /// active in (at least 1).
    fn param_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.params.len()];
        for r in self.informative() {
            for &(j, m) in &r.learn {
                w[j] += (r.n_true + r.n_false) * m as f64;
            }
        }
        w.into_iter().map(|v: f64| v.max(1.0)).collect()
    }

    /// Rows that carry information about the learnable parameters: observed,
    /// at least one learnable clause active, and no certain clause active.
    fn informative(&self) -> impl Iterator<Item = &Row> {
        self.rows
            .iter()
            .filter(|r| !r.learn.is_empty() && r.fixed_log > f64::NEG_INFINITY)
    }

    fn design_row(&self, r: &Row) -> Vec<u32> {
        let mut row = vec![0; self.params.len()];
        for &(j, m) in &r.learn {
            row[j] = m;
        }
        row
    }

    pub fn has_observations(&self) -> bool {
        self.informative().next().is_some()
    }

    /// Whether the observed configurations pin down the parameters.
    pub fn identifiable(&self) -> bool {
        let m: Vec<Vec<u32>> = self.informative().map(|r| self.design_row(r)).collect();
        rational::rank(&m) == self.params.len()
    }
}

/// Exact maximizer when the informative multiplicity matrix is square and
/// invertible and every empirical failure rate is strictly inside (0,1).
/// Returns local parameters in `group.params` order.
pub fn closed_form(group: &GroupModel) -> Option<Vec<f64>> {
    let rows: Vec<&Row> = group.informative().collect();
    if rows.is_empty() || rows.len() != group.params.len() {
        return None;
    }
    let mut log_g = Vec::with_capacity(rows.len());
    for r in &rows {
        let f = r.n_false / (r.n_true + r.n_false);
        if !(f > 0.0 && f < 1.0) {
            return None;
        }
        let lg = f.ln() - r.fixed_log;
        if lg > 0.0 {
            return None;
        }
        log_g.push(lg);
    }
    let m: Vec<Vec<u32>> = rows.iter().map(|r| group.design_row(r)).collect();
    let inv = rational::inverse(&m)?;
    let mut theta = Vec::with_capacity(inv.len());
    for row in &inv {
        let log_q: f64 = row
            .iter()
            .zip(&log_g)
            .map(|(a, lg)| a.to_f64().expect("finite rational") * lg)
            .sum();
        let mut t = -log_q.exp_m1();
        // exact zero estimates come back with rounding noise
        if t < 0.0 && t > -1e-12 {
            t = 0.0;
        }
        if !(0.0..=1.0).contains(&t) {
            return None;
        }
        theta.push(t);
    }
    Some(theta)
}

pub const ARMIJO_C: f64 = 1e-4;
pub const BACKTRACK: f64 = 0.5;
pub const INITIAL_STEP: f64 = 1.0;
pub const PG_TOL: f64 = 1e-8;
pub const MAX_ITERS: usize = 500;
const MIN_STEP: f64 = 1e-30;

fn clamp(x: f64) -> f64 {
    x.clamp(CLAMP_LO, CLAMP_HI)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientFit {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Log-likelihood at the start and after every accepted step.
    pub trace: Vec<f64>,
}

/// Projected gradient ascent with Armijo backtracking inside the clamp box.
///
/// The ascent direction is the gradient scaled per parameter by
/// `x (1 - x) / w`, where `w` is the observation weight the parameter
/// appears in; the stopping test uses the unscaled projected gradient.
pub fn gradient_fit(group: &GroupModel, init: &[f64]) -> Result<GradientFit, FitError> {
    if let Some(err) = group.impossible() {
        return Err(err);
    }
    if init.len() != group.params.len() {
        return Err(FitError::ThetaLength {
            expected: group.params.len(),
            found: init.len(),
        });
    }
    let mut x: Vec<f64> = init.iter().map(|&v| clamp(v)).collect();
    let weight = group.param_weights();
    let mut trace = vec![group.loglik(&x)];
    let mut iterations = 0;
    let mut y = x.clone();
    while iterations < MAX_ITERS {
        let g = group.gradient(&x);
        let pg = x
            .iter()
            .zip(&g)
            .map(|(xi, gi)| (clamp(xi + gi) - xi).abs())
            .fold(0.0, f64::max);
        if pg < PG_TOL {
            break;
        }
        let d: Vec<f64> = x
            .iter()
            .zip(&g)
            .zip(&weight)
            .map(|((xi, gi), wi)| gi * xi * (1.0 - xi) / wi)
            .collect();
        let mut step = INITIAL_STEP;
        let accepted = loop {
            for ((yi, xi), di) in y.iter_mut().zip(&x).zip(&d) {
                *yi = clamp(xi + step * di);
            }
            let ascent: f64 = g.iter().zip(y.iter().zip(&x)).map(|(gi, (yi, xi))| gi * (yi - xi)).sum();
            if ascent > 0.0 && group.loglik_delta(&x, &y) >= ARMIJO_C * ascent {
                break true;
            }
            step *= BACKTRACK;
            if step < MIN_STEP {
                break false;
            }
        };
        if !accepted {
            // no representable ascent left
            break;
        }
        std::mem::swap(&mut x, &mut y);
        trace.push(group.loglik(&x));
        iterations += 1;
    }
    Ok(GradientFit { x, iterations, trace })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogLikelihood {
    pub value: f64,
    /// Groups and configurations that make the value `-inf`.
    pub impossible: Vec<(String, Configuration, Impossibility)>,
}

impl LogLikelihood {
    pub fn is_consistent(&self) -> bool {
        self.impossible.is_empty()
    }
}

fn check_len(stats: &SufficientStats, theta: &[f64]) -> Result<(), FitError> {
    if theta.len() != stats.num_params {
        return Err(FitError::ThetaLength {
            expected: stats.num_params,
            found: theta.len(),
        });
    }
    Ok(())
}

pub fn log_likelihood(stats: &SufficientStats, theta: &[f64]) -> Result<LogLikelihood, FitError> {
    check_len(stats, theta)?;
    let mut value = 0.0;
    let mut impossible = Vec::new();
    for gs in &stats.groups {
        let model = GroupModel::from_stats(gs);
        value += model.loglik(&model.local(theta));
        impossible.extend(gs.impossible().into_iter().map(|(c, why)| (gs.predicate.clone(), c, why)));
    }
    if !impossible.is_empty() {
        value = f64::NEG_INFINITY;
    }
    Ok(LogLikelihood { value, impossible })
}

/// Gradient of [`log_likelihood`] over all learnable parameters.
pub fn gradient(stats: &SufficientStats, theta: &[f64]) -> Result<Vec<f64>, FitError> {
    check_len(stats, theta)?;
    let mut out = vec![0.0; theta.len()];
    for gs in &stats.groups {
        let model = GroupModel::from_stats(gs);
        if let Some(err) = model.impossible() {
            return Err(err);
        }
        let x = model.local(theta);
        if let Some((j, &value)) = x.iter().enumerate().find(|(_, &v)| !(v > 0.0 && v < 1.0)) {
            return Err(FitError::BoundaryTheta {
                param: model.params[j],
                value,
            });
        }
        for (&p, g) in model.params.iter().zip(model.gradient(&x)) {
            out[p] += g;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupFit {
    pub predicate: String,
    pub params: Vec<ParamId>,
    pub method: Method,
    pub identifiable: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Indexed by param_id.
    pub theta: Vec<f64>,
    pub loglik: f64,
    /// Groups with at least one learnable parameter, in group order.
    pub groups: Vec<GroupFit>,
    /// Gradient iterations summed over groups, or EM updates.
    pub iterations: usize,
    pub wall_time: f64,
    pub dropped_records: u64,
}

impl FitResult {
    pub fn method_of(&self, predicate: &str) -> Option<Method> {
        self.groups.iter().find(|g| g.predicate == predicate).map(|g| g.method)
    }

    /// `key=value` summary block.
    pub fn to_kv(&self) -> String {
        let theta: Vec<String> = self.theta.iter().map(|t| format!("{t:.6}")).collect();
        let mut out = format!(
            "loglik={:.6}\nwall_time_s={:.6}\niterations={}\ndropped_records={}\ntheta={}\n",
            self.loglik,
            self.wall_time,
            self.iterations,
            self.dropped_records,
            theta.join(",")
        );
        for g in &self.groups {
            out.push_str(&format!(
                "group.{}.method={}\ngroup.{}.identifiable={}\ngroup.{}.iterations={}\n",
                g.predicate, g.method, g.predicate, g.identifiable, g.predicate, g.iterations
            ));
        }
        out
    }

    /// One row per parameter.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("param,group,method,identifiable,iterations,estimate\n");
        for g in &self.groups {
            for &p in &g.params {
                out.push_str(&format!(
                    "{p},{},{},{},{},{}\n",
                    g.predicate, g.method, g.identifiable, g.iterations, self.theta[p]
                ));
            }
        }
        out
    }
}

/// Fits every group from the program's declared initial values.
pub fn fit_direct(stats: &SufficientStats, program: &Program) -> Result<FitResult, FitError> {
    fit_direct_from(stats, &program.initial_theta(), Exec::default())
}

/// Fits every group independently; groups run in parallel under `Exec::Parallel`
/// and are assembled in group order.
pub fn fit_direct_from(stats: &SufficientStats, init: &[f64], exec: Exec) -> Result<FitResult, FitError> {
    let start = Instant::now();
    check_len(stats, init)?;
    let fitted = exec.map_range(stats.groups.len(), |gi| -> Result<Option<(GroupFit, Vec<f64>)>, FitError> {
        let gs = &stats.groups[gi];
        let model = GroupModel::from_stats(gs);
        if let Some(err) = model.impossible() {
            return Err(err);
        }
        if model.params.is_empty() {
            return Ok(None);
        }
        let x0 = model.local(init);
        let (method, x, iterations, identifiable) = if !model.has_observations() {
            (Method::Degenerate, x0, 0, false)
        } else if let Some(x) = closed_form(&model) {
            (Method::ClosedForm, x, 0, true)
        } else {
            let fit = gradient_fit(&model, &x0)?;
            (Method::Gradient, fit.x, fit.iterations, model.identifiable())
        };
        Ok(Some((
            GroupFit {
                predicate: gs.predicate.clone(),
                params: model.params.clone(),
                method,
                identifiable,
                iterations,
            },
            x,
        )))
    });

    let mut theta = init.to_vec();
    let mut groups = Vec::new();
    for result in fitted {
        if let Some((gf, x)) = result? {
            for (&p, v) in gf.params.iter().zip(x) {
                theta[p] = v;
            }
            groups.push(gf);
        }
    }
    let loglik = log_likelihood(stats, &theta)?.value;
    Ok(FitResult {
        theta,
        loglik,
        iterations: groups.iter().map(|g| g.iterations).sum(),
        groups,
        wall_time: start.elapsed().as_secs_f64(),
        dropped_records: 0,
    })
}
