//! Size sweeps comparing the direct learner with the EM baseline.
//!
//! Propositional mode: size = number of sampled observations.
//! Relational mode: size = number of constants; each size samples a fixed
//! number of records over the grounded program.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::data::forward_sample;
use crate::em::EmOptions;
use crate::exec::Exec;
use crate::ground::ground;
use crate::learn::{learn_direct, learn_em, numbered_constants};
use crate::mle::Method;
use crate::syntax::Program;
use crate::Error;

pub const CSV_HEADER: &str = "method,size,wall_time_s,loglik,iterations";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Propositional,
    Relational,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "propositional" => Ok(Mode::Propositional),
            "relational" => Ok(Mode::Relational),
            other => Err(format!("expected `propositional` or `relational`, found `{other}`")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub program: Program,
    pub mode: Mode,
    pub sizes: Vec<usize>,
    pub seed: u64,
    /// Records per size in relational mode.
    pub records: usize,
    /// Generating parameters; defaults to the program's declared values.
    pub truth: Option<Vec<f64>>,
    /// Starting point for both learners.
    pub init: f64,
    pub em: EmOptions,
    /// Learner-internal execution strategy.
    pub exec: Exec,
    /// Run sweep sizes concurrently (each row still timed on its own).
    pub parallel_rows: bool,
}

impl BenchConfig {
    pub fn new(program: Program, mode: Mode, sizes: Vec<usize>, seed: u64) -> Self {
        BenchConfig {
            program,
            mode,
            sizes,
            seed,
            records: 100,
            truth: None,
            init: 0.5,
            em: EmOptions::default(),
            exec: Exec::default(),
            parallel_rows: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub method: &'static str,
    pub size: usize,
    pub wall_time: f64,
    pub loglik: f64,
    pub iterations: usize,
    pub group_methods: Vec<(String, Method)>,
    /// Set when the learner failed on this row.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            match &r.error {
                None => {
                    let _ = writeln!(
                        out,
                        "{},{},{:.6},{:.6},{}",
                        r.method, r.size, r.wall_time, r.loglik, r.iterations
                    );
                }
                Some(_) => {
                    let _ = writeln!(out, "{},{},,failed,", r.method, r.size);
                }
            }
        }
        out
    }

    /// Two columns, `size wall_time_s`, for one method.
    pub fn gnuplot(&self, method: &str) -> String {
        let mut out = format!("# {method}: size wall_time_s\n");
        for r in self.rows.iter().filter(|r| r.method == method && r.error.is_none()) {
            let _ = writeln!(out, "{} {:.6}", r.size, r.wall_time);
        }
        out
    }

    /// Per-group method tags: `method,size,group,tag`.
    pub fn tags_csv(&self) -> String {
        let mut out = String::from("method,size,group,tag\n");
        for r in &self.rows {
            for (g, m) in &r.group_methods {
                let _ = writeln!(out, "{},{},{g},{m}", r.method, r.size);
            }
        }
        out
    }

    pub fn row(&self, method: &str, size: usize) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.method == method && r.size == size)
    }
}

fn failed(method: &'static str, size: usize, err: &Error) -> BenchRow {
    BenchRow {
        method,
        size,
        wall_time: f64::NAN,
        loglik: f64::NAN,
        iterations: 0,
        group_methods: Vec::new(),
        error: Some(err.to_string()),
    }
}

fn run_size(cfg: &BenchConfig, size: usize) -> [BenchRow; 2] {
    let prepared = (|| -> Result<_, Error> {
        let (constants, n) = match cfg.mode {
            Mode::Relational => (numbered_constants(size), cfg.records),
            Mode::Propositional => (Vec::new(), size),
        };
        let gp = ground(&cfg.program, &constants)?;
        let truth = cfg.truth.clone().unwrap_or_else(|| cfg.program.initial_theta());
        let data = forward_sample(&gp, &truth, n, cfg.seed, cfg.exec)?;
        Ok((gp, data))
    })();
    let (gp, data) = match prepared {
        Ok(p) => p,
        Err(e) => return [failed("direct", size, &e), failed("em", size, &e)],
    };
    let init = vec![cfg.init; gp.num_params()];

    let direct = match learn_direct(&gp, &data, &init, cfg.exec) {
        Ok(fit) => BenchRow {
            method: "direct",
            size,
            wall_time: fit.wall_time,
            loglik: fit.loglik,
            iterations: fit.iterations,
            group_methods: fit.groups.iter().map(|g| (g.predicate.clone(), g.method)).collect(),
            error: None,
        },
        Err(e) => failed("direct", size, &e),
    };
    let em_opts = EmOptions {
        exec: cfg.exec,
        ..cfg.em
    };
    let em = match learn_em(&gp, &data, &init, &em_opts) {
        Ok(trace) => BenchRow {
            method: "em",
            size,
            wall_time: trace.fit.wall_time,
            loglik: trace.fit.loglik,
            iterations: trace.fit.iterations,
            group_methods: trace.fit.groups.iter().map(|g| (g.predicate.clone(), g.method)).collect(),
            error: None,
        },
        Err(e) => failed("em", size, &e),
    };
    [direct, em]
}

/// Runs the sweep; rows come out in size order, direct before em.
pub fn run_bench(cfg: &BenchConfig) -> BenchReport {
    let per_size: Vec<[BenchRow; 2]> = if cfg.parallel_rows {
        Exec::Parallel.map_range(cfg.sizes.len(), |i| run_size(cfg, cfg.sizes[i]))
    } else {
        cfg.sizes.iter().map(|&s| run_size(cfg, s)).collect()
    };
    BenchReport {
        rows: per_size.into_iter().flatten().collect(),
    }
}

/// Strips the wall-time column, for comparing reports across runs.
pub fn without_timings(csv: &str) -> String {
    csv.lines()
        .map(|l| {
            let mut cols: Vec<&str> = l.split(',').collect();
            if cols.len() > 2 {
                cols.remove(2);
            }
            cols.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}
