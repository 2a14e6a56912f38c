use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use plp_core::bench::{run_bench, BenchConfig, Mode};
use plp_core::data::{parse_interpretations, sample_header, write_blocks, InterpretationSet};
use plp_core::learn::{apply_policy, learn_direct, learn_em, parse_constants, OnInconsistent};
use plp_core::{forward_sample, ground, parse_program, EmOptions, Exec, FitResult, GroundProgram, Program};

/// Parameter learning for probabilistic logic programs from complete data.
#[derive(Parser, Debug)]
#[command(name = "plp", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the learnable labels of a program to a dataset
    Learn(LearnArgs),
    /// Draw a seeded dataset from a program by forward sampling
    Sample(SampleArgs),
    /// Time the direct learner against EM over a size sweep
    Bench(BenchArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum LearnMethod {
    Direct,
    Em,
    Both,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Policy {
    Error,
    Drop,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Init {
    /// Starting values written in the program (`t(p)::`)
    Declared,
    /// Every learnable parameter starts at 0.5
    Uniform,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum BenchMode {
    Propositional,
    Relational,
}

#[derive(Args, Debug)]
struct Source {
    /// Program file
    #[arg(long)]
    program: PathBuf,

    /// Constants to add to the domain: a count N (c1..cN) or a comma-separated list
    #[arg(long, default_value = "")]
    constants: String,
}

impl Source {
    fn load(&self) -> Result<(Program, GroundProgram)> {
        let text = fs::read_to_string(&self.program)
            .with_context(|| format!("reading {}", self.program.display()))?;
        let program = parse_program(&text)
            .map_err(plp_core::Error::from)
            .with_context(|| format!("parsing {}", self.program.display()))?;
        let gp = ground(&program, &parse_constants(&self.constants)).map_err(plp_core::Error::from)?;
        Ok((program, gp))
    }
}

#[derive(Args, Debug)]
struct LearnArgs {
    #[command(flatten)]
    source: Source,

    /// Dataset file (block or CSV format)
    #[arg(long, conflicts_with = "sample_n", required_unless_present = "sample_n")]
    data: Option<PathBuf>,

    /// Sample this many records from the program instead of reading a dataset
    #[arg(long)]
    sample_n: Option<usize>,

    /// Seed for --sample-n
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Generating parameters for --sample-n (default: the declared values)
    #[arg(long, value_delimiter = ',')]
    theta: Option<Vec<f64>>,

    #[arg(long, value_enum, default_value_t = LearnMethod::Direct)]
    method: LearnMethod,

    /// What to do with records the program cannot explain
    #[arg(long, value_enum, default_value_t = Policy::Error)]
    on_inconsistent: Policy,

    #[arg(long, value_enum, default_value_t = Init::Declared)]
    init: Init,

    /// EM stopping tolerance on the log-likelihood change
    #[arg(long, default_value_t = 1e-6)]
    em_tol: f64,

    /// EM iteration limit
    #[arg(long, default_value_t = 1000)]
    em_max_iter: usize,

    /// Leave auxiliaries with false bodies out of the EM update
    #[arg(long)]
    exclude_inactive: bool,

    /// Write the fitted program here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,

    /// Write per-parameter estimates as CSV
    #[arg(long)]
    fit_csv: Option<PathBuf>,

    /// Write the EM log-likelihood trace as CSV
    #[arg(long)]
    trace: Option<PathBuf>,

    /// Run learners on one thread
    #[arg(long)]
    sequential: bool,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[command(flatten)]
    source: Source,

    /// Number of records
    #[arg(long)]
    n: usize,

    #[arg(long)]
    seed: u64,

    /// Generating parameters (default: the declared values)
    #[arg(long, value_delimiter = ',')]
    theta: Option<Vec<f64>>,

    /// Output file (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Program file
    #[arg(long)]
    program: PathBuf,

    /// Sweep kind (default: relational when the program has variables)
    #[arg(long, value_enum)]
    mode: Option<BenchMode>,

    /// Observation counts (propositional) or constant counts (relational)
    #[arg(long, value_delimiter = ',', required = true)]
    sizes: Vec<usize>,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Records sampled per size in relational mode
    #[arg(long, default_value_t = 100)]
    records: usize,

    /// Generating parameters (default: the declared values)
    #[arg(long, value_delimiter = ',')]
    theta: Option<Vec<f64>>,

    /// CSV output; `.dat` plot files and a tags file are written next to it
    #[arg(long)]
    out: Option<PathBuf>,

    /// Run sweep sizes concurrently
    #[arg(long)]
    parallel_rows: bool,

    /// Run learners on one thread
    #[arg(long)]
    sequential: bool,
}

fn exec(sequential: bool) -> Exec {
    if sequential {
        Exec::Sequential
    } else {
        Exec::Parallel
    }
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn summary(tag: &str, fit: &FitResult) -> String {
    fit.to_kv().lines().map(|l| format!("% {tag}.{l}\n")).collect()
}

fn learn(args: &LearnArgs) -> Result<()> {
    let (program, gp) = args.source.load()?;
    let exec = exec(args.sequential);
    let mut data: InterpretationSet = match (&args.data, args.sample_n) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            parse_interpretations(&text, &gp)
                .map_err(plp_core::Error::from)
                .with_context(|| format!("parsing {}", path.display()))?
        }
        (None, Some(n)) => {
            let theta = args.theta.clone().unwrap_or_else(|| program.initial_theta());
            forward_sample(&gp, &theta, n, args.seed, exec).map_err(plp_core::Error::from)?
        }
        (None, None) => bail!("one of --data or --sample-n is required"),
    };

    let policy = match args.on_inconsistent {
        Policy::Error => OnInconsistent::Error,
        Policy::Drop => OnInconsistent::Drop,
    };
    let dropped = apply_policy(&gp, &mut data, policy);
    if dropped > 0 {
        eprintln!("warning: dropped {dropped} inconsistent record(s)");
    }

    let init = match args.init {
        Init::Declared => program.initial_theta(),
        Init::Uniform => vec![0.5; program.num_params()],
    };
    let mut report = String::new();
    if program.num_params() == 0 {
        report.push_str("% nothing to learn\n");
    }
    let mut fitted = None;
    if matches!(args.method, LearnMethod::Direct | LearnMethod::Both) || program.num_params() == 0 {
        let mut fit = learn_direct(&gp, &data, &init, exec)?;
        fit.dropped_records = dropped;
        report.push_str(&summary("direct", &fit));
        fitted = Some(fit);
    }
    if matches!(args.method, LearnMethod::Em | LearnMethod::Both) && program.num_params() > 0 {
        let opts = EmOptions {
            tol: args.em_tol,
            max_iter: args.em_max_iter,
            include_inactive: !args.exclude_inactive,
            exec,
        };
        let mut trace = learn_em(&gp, &data, &init, &opts)?;
        trace.fit.dropped_records = dropped;
        report.push_str(&summary("em", &trace.fit));
        report.push_str(&format!("% em.converged={}\n", trace.converged));
        if let Some(path) = &args.trace {
            fs::write(path, trace.to_csv()).with_context(|| format!("writing {}", path.display()))?;
        }
        if let Some(direct) = &fitted {
            let gap = (direct.loglik - trace.fit.loglik).abs();
            report.push_str(&format!("% loglik_difference={gap:.3e}\n"));
        } else {
            fitted = Some(trace.fit);
        }
    }
    let fit = fitted.expect("at least one learner ran");

    if let Some(path) = &args.fit_csv {
        fs::write(path, fit.to_csv()).with_context(|| format!("writing {}", path.display()))?;
    }
    write_or_print(args.out.as_deref(), &program.render_fitted(&fit.theta))?;
    print!("{report}");
    Ok(())
}

fn sample(args: &SampleArgs) -> Result<()> {
    let (program, gp) = args.source.load()?;
    let theta = args.theta.clone().unwrap_or_else(|| program.initial_theta());
    let data = forward_sample(&gp, &theta, args.n, args.seed, Exec::default()).map_err(plp_core::Error::from)?;
    write_or_print(args.out.as_deref(), &write_blocks(&data, &gp, Some(&sample_header(args.seed))))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("bench");
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn bench(args: &BenchArgs) -> Result<()> {
    let text =
        fs::read_to_string(&args.program).with_context(|| format!("reading {}", args.program.display()))?;
    let program = parse_program(&text)
        .map_err(plp_core::Error::from)
        .with_context(|| format!("parsing {}", args.program.display()))?;
    let mode = match args.mode {
        Some(BenchMode::Propositional) => Mode::Propositional,
        Some(BenchMode::Relational) => Mode::Relational,
        None if program.has_variables() => Mode::Relational,
        None => Mode::Propositional,
    };
    let cfg = BenchConfig {
        records: args.records,
        truth: args.theta.clone(),
        exec: exec(args.sequential),
        parallel_rows: args.parallel_rows,
        ..BenchConfig::new(program, mode, args.sizes.clone(), args.seed)
    };
    let report = run_bench(&cfg);
    for r in &report.rows {
        if let Some(e) = &r.error {
            eprintln!("warning: {} at size {} failed: {e}", r.method, r.size);
        }
    }
    match &args.out {
        Some(out) => {
            fs::write(out, report.to_csv()).with_context(|| format!("writing {}", out.display()))?;
            for method in ["direct", "em"] {
                fs::write(sibling(out, &format!("{method}.dat")), report.gnuplot(method))?;
            }
            fs::write(sibling(out, "tags.csv"), report.tags_csv())?;
        }
        None => print!("{}", report.to_csv()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // exit code 2 is reserved for inconsistent data
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Learn(a) => learn(a),
        Command::Sample(a) => sample(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let inconsistent = err
                .downcast_ref::<plp_core::Error>()
                .is_some_and(plp_core::Error::is_inconsistency);
            ExitCode::from(if inconsistent { 2 } else { 1 })
        }
    }
}
