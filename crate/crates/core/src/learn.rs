//! End-to-end learning calls shared by the CLI and the benchmark harness.

use std::str::FromStr;
use std::time::Instant;

use crate::data::InterpretationSet;
use crate::em::{desugar, fit_em, EmOptions, EmTrace};
use crate::exec::Exec;
use crate::ground::GroundProgram;
use crate::groups::head_groups;
use crate::mle::{fit_direct_from, FitResult};
use crate::stats::{drop_inconsistent, sufficient_stats};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OnInconsistent {
    #[default]
    Error,
    Drop,
}

impl FromStr for OnInconsistent {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "error" => Ok(OnInconsistent::Error),
            "drop" => Ok(OnInconsistent::Drop),
            other => Err(format!("expected `error` or `drop`, found `{other}`")),
        }
    }
}

/// Interprets a constants argument: a bare count `N` yields `c1..cN`,
/// anything else is a comma-separated list of names.
pub fn parse_constants(spec: &str) -> Vec<String> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Vec::new();
    }
    if let Ok(n) = spec.parse::<usize>() {
        return numbered_constants(n);
    }
    spec.split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

pub fn numbered_constants(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("c{i}")).collect()
}

/// Applies the inconsistency policy. Returns the dropped record weight.
pub fn apply_policy(gp: &GroundProgram, data: &mut InterpretationSet, policy: OnInconsistent) -> u64 {
    match policy {
        OnInconsistent::Error => 0,
        OnInconsistent::Drop => drop_inconsistent(data, &head_groups(gp), gp),
    }
}

/// Direct learner: head groups, counting and per-group fits, timed together.
pub fn learn_direct(
    gp: &GroundProgram,
    data: &InterpretationSet,
    init: &[f64],
    exec: Exec,
) -> Result<FitResult, Error> {
    let start = Instant::now();
    let groups = head_groups(gp);
    let stats = sufficient_stats(data, &groups, gp, exec);
    let mut fit = fit_direct_from(&stats, init, exec)?;
    fit.wall_time = start.elapsed().as_secs_f64();
    Ok(fit)
}

/// EM baseline: desugaring and EM, timed together.
pub fn learn_em(
    gp: &GroundProgram,
    data: &InterpretationSet,
    init: &[f64],
    opts: &EmOptions,
) -> Result<EmTrace, Error> {
    let start = Instant::now();
    let dp = desugar(gp);
    let mut trace = fit_em(&dp, data, init, opts)?;
    trace.fit.wall_time = start.elapsed().as_secs_f64();
    Ok(trace)
}
