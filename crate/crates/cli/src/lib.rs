//! Batch front end: load a JSON spec with CSV relations and run
//! `join`, `sample`, `cover`, or `validate`.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use bitjoin::constraints::{
    check_compatible, compatible_order, dependency_graph, validate, CheckOutcome, ConstraintSet,
};
use bitjoin::enumerate::{resolve_order, wcj, wcj_binarised, EnumerationStats, JoinError};
use bitjoin::lp::{
    card_program, checked_cover, degree_program, solve_cover_card, solve_cover_degree, LpError,
};
use bitjoin::oracle::nested_loop_join;
use bitjoin::sampler::{BinarySampler, SampleError, SamplerStats};
use bitjoin::{Code, ExactCover, IndexedQuery, JoinQuery, Rational, Tuple, VarId, VarSet};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

pub mod spec;

use spec::{load_file, parse_order, Instance};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Constraint(String),
    #[error("answer set empty")]
    Empty,
    #[error("work budget exhausted after {0} trials")]
    Budget(u64),
    #[error("{0}")]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Parse(_) => 2,
            CliError::Constraint(_) => 3,
            CliError::Empty => 4,
            CliError::Budget(_) => 5,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "bitjoin",
    version,
    about = "Worst-case optimal joins and uniform join sampling"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EstimatorKind {
    Agm,
    Pm,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Enumerate all answers.
    Join {
        spec: PathBuf,
        /// Comma-separated variable order.
        #[arg(long)]
        order: Option<String>,
        /// Branch on whole values instead of bits.
        #[arg(long)]
        no_binarise: bool,
        #[arg(long)]
        stats_out: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Draw answers uniformly at random, with replacement.
    Sample {
        spec: PathBuf,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, env = "SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = EstimatorKind::Agm)]
        estimator: EstimatorKind,
        /// Maximum number of trials.
        #[arg(long)]
        max_work: Option<u64>,
        #[arg(long)]
        stats_out: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print an optimal fractional cover and the log2 of its bound.
    Cover { spec: PathBuf },
    /// Check every constraint against the data.
    Validate { spec: PathBuf },
    /// Brute-force answers, for debugging.
    #[command(hide = true)]
    Oracle { spec: PathBuf },
}

fn sink<'a>(
    path: Option<&Path>,
    stdout: &'a mut dyn Write,
) -> Result<Box<dyn Write + 'a>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(stdout),
    })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value).map_err(io::Error::from)?;
    writeln!(out)?;
    Ok(())
}

fn csv_error(e: csv::Error) -> CliError {
    CliError::Io(io::Error::other(e))
}

/// Writes `rows` (codes indexed by `VarId`) as CSV with columns in `order`.
fn write_answers<'a>(
    q: &JoinQuery,
    order: &[VarId],
    rows: impl IntoIterator<Item = &'a [Code]>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(order.iter().map(|&v| q.var_name(v)))
        .map_err(csv_error)?;
    for row in rows {
        let codes: Vec<Code> = order.iter().map(|v| row[v.index()]).collect();
        w.write_record(q.decode(&codes)).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn join_error(e: JoinError) -> CliError {
    CliError::Constraint(e.to_string())
}

/// Order for a run: `--order`, else the spec's order, checked against the
/// constraints when there are any; otherwise a compatible order.
fn run_order(inst: &Instance, flag: Option<&str>) -> Result<Vec<VarId>, CliError> {
    let q = &inst.query;
    let explicit = match flag {
        Some(s) => Some(parse_order(q, s)?),
        None if inst.explicit_order => Some(q.order()),
        None => None,
    };
    if let (Some(cs), Some(order)) = (&inst.constraints, &explicit) {
        compatible_order(cs).map_err(|e| CliError::Constraint(e.to_string()))?;
        let mut position = vec![0; q.num_vars()];
        for (i, v) in order.iter().enumerate() {
            position[v.index()] = i;
        }
        if let Some(&(u, v)) = dependency_graph(cs)
            .edges()
            .iter()
            .find(|(u, v)| position[v.index()] < position[u.index()])
        {
            return Err(CliError::Constraint(format!(
                "order places `{}` before `{}`, but a degree constraint bounds `{}` given `{}`",
                q.var_name(v),
                q.var_name(u),
                q.var_name(v),
                q.var_name(u)
            )));
        }
    }
    resolve_order(q, inst.constraints.as_ref(), explicit.as_deref()).map_err(join_error)
}

#[derive(Serialize)]
struct JoinReport<'a> {
    binarised: bool,
    order: Vec<&'a str>,
    #[serde(flatten)]
    stats: EnumerationStats,
    wall_time_ms: f64,
}

fn cmd_join(
    path: &Path,
    order: Option<&str>,
    no_binarise: bool,
    stats_out: Option<&Path>,
    output: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let inst = load_file(path)?;
    let q = &inst.query;
    let order = run_order(&inst, order)?;
    let start = Instant::now();
    let mut answers: Vec<Code> = Vec::new();
    let stats = if no_binarise {
        let index = IndexedQuery::new(q, &order).map_err(|e| CliError::Parse(e.to_string()))?;
        wcj(&index, |a| answers.extend_from_slice(a))
    } else {
        wcj_binarised(q, None, Some(&order), |a| answers.extend_from_slice(a))
            .map_err(join_error)?
    };
    let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    let mut out = sink(output, stdout)?;
    write_answers(q, &order, answers.chunks_exact(q.num_vars()), &mut out)?;
    if let Some(p) = stats_out {
        let report = JoinReport {
            binarised: !no_binarise,
            order: order.iter().map(|&v| q.var_name(v)).collect(),
            stats,
            wall_time_ms,
        };
        write_json(p, &report)?;
    }
    Ok(())
}

fn lp_error(q: &JoinQuery, e: LpError) -> CliError {
    match e {
        LpError::Uncovered(v) | LpError::Undercovered(v) => CliError::Constraint(format!(
            "infeasible cover: variable `{}` {}",
            q.var_name(v),
            if matches!(e, LpError::Uncovered(_)) {
                "is not covered by any term"
            } else {
                "is covered less than once by the given weights"
            }
        )),
        LpError::WrongLength { expected, got } => {
            CliError::Parse(format!("spec has {got} weights, expected {expected}"))
        }
        other => CliError::Constraint(other.to_string()),
    }
}

/// `N_e` per relation: a cardinality constraint on its edge if the spec
/// has one, else `|R_e|`.
fn relation_sizes(inst: &Instance) -> Vec<u64> {
    inst.query
        .relations()
        .iter()
        .map(|r| {
            let e = r.var_set();
            inst.constraints
                .iter()
                .flat_map(ConstraintSet::constraints)
                .find(|c| c.is_cardinality() && c.rhs() == &e)
                .map_or(r.len() as u64, |c| c.bound())
        })
        .collect()
}

fn agm_cover(inst: &Instance) -> Result<ExactCover, CliError> {
    let q = &inst.query;
    let edges: Vec<VarSet> = q.relations().iter().map(|r| r.var_set()).collect();
    let sizes = relation_sizes(inst);
    match &inst.weights {
        Some(w) => {
            let lp = card_program(q.num_vars(), &edges, &sizes).map_err(|e| lp_error(q, e))?;
            checked_cover(&lp, w.clone()).map_err(|e| lp_error(q, e))
        }
        None => solve_cover_card(q.num_vars(), &edges, &sizes).map_err(|e| lp_error(q, e)),
    }
}

fn pm_cover(inst: &Instance, cs: &ConstraintSet) -> Result<ExactCover, CliError> {
    let q = &inst.query;
    match &inst.weights {
        Some(w) => {
            let lp = degree_program(cs).map_err(|e| lp_error(q, e))?;
            checked_cover(&lp, w.clone()).map_err(|e| lp_error(q, e))
        }
        None => solve_cover_degree(cs).map_err(|e| lp_error(q, e)),
    }
}

#[derive(Serialize)]
struct SampleReport<'a> {
    estimator: &'static str,
    seed: u64,
    requested: usize,
    order: Vec<&'a str>,
    weights: Vec<String>,
    #[serde(flatten)]
    stats: SamplerStats,
    mean_trials_per_success: Option<f64>,
}

#[allow(clippy::too_many_arguments)]
fn cmd_sample(
    path: &Path,
    count: usize,
    seed: u64,
    estimator: EstimatorKind,
    max_work: Option<u64>,
    stats_out: Option<&Path>,
    output: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let inst = load_file(path)?;
    let q = &inst.query;
    let (sampler, order, cover) = match estimator {
        EstimatorKind::Agm => {
            let cover = agm_cover(&inst)?;
            let order = q.order();
            let s = BinarySampler::agm(q, &order, &cover.weights)
                .map_err(|e| CliError::Constraint(e.to_string()))?;
            (s, order, cover)
        }
        EstimatorKind::Pm => {
            let cs = inst
                .constraints
                .as_ref()
                .filter(|cs| !cs.is_empty())
                .ok_or_else(|| {
                    CliError::Parse("--estimator pm needs degree constraints in the spec".into())
                })?;
            let cover = pm_cover(&inst, cs)?;
            let order = run_order(&inst, None)?;
            let s = BinarySampler::polymatroid(q, cs, &order, &cover.weights)
                .map_err(|e| CliError::Constraint(e.to_string()))?;
            (s, order, cover)
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (result, stats) = sampler.sample(count, &mut rng, max_work);
    if let Some(p) = stats_out {
        let report = SampleReport {
            estimator: match estimator {
                EstimatorKind::Agm => "agm",
                EstimatorKind::Pm => "pm",
            },
            seed,
            requested: count,
            order: order.iter().map(|&v| q.var_name(v)).collect(),
            weights: cover.weights.iter().map(Rational::to_string).collect(),
            mean_trials_per_success: Some(stats.mean_trials_per_success())
                .filter(|m| m.is_finite()),
            stats,
        };
        write_json(p, &report)?;
    }
    match result {
        Ok(answers) => {
            let mut out = sink(output, stdout)?;
            write_answers(q, &order, answers.iter().map(Vec::as_slice), &mut out)
        }
        Err(SampleError::Empty(_)) => Err(CliError::Empty),
        Err(SampleError::BudgetExhausted(s)) => Err(CliError::Budget(s.trials)),
    }
}

fn cmd_cover(path: &Path, stdout: &mut dyn Write) -> Result<(), CliError> {
    let inst = load_file(path)?;
    let cover: ExactCover = match &inst.constraints {
        Some(cs) if !cs.is_empty() => {
            solve_cover_degree(cs).map_err(|e| lp_error(&inst.query, e))?
        }
        _ => {
            let q = &inst.query;
            let edges: Vec<VarSet> = q.relations().iter().map(|r| r.var_set()).collect();
            solve_cover_card(q.num_vars(), &edges, &relation_sizes(&inst))
                .map_err(|e| lp_error(q, e))?
        }
    };
    writeln!(stdout, "{}", cover.format_weights())?;
    writeln!(stdout, "log2_bound={}", cover.log2_bound())?;
    Ok(())
}

fn names(q: &JoinQuery, vars: &VarSet) -> String {
    format!(
        "{{{}}}",
        vars.iter()
            .map(|&v| q.var_name(v))
            .collect::<Vec<_>>()
            .join(",")
    )
}

fn show_tuple(q: &JoinQuery, t: &Tuple) -> String {
    t.pairs()
        .iter()
        .map(|&(v, c)| {
            format!(
                "{}={}",
                q.var_name(v),
                q.dictionary().value(c).unwrap_or("?")
            )
        })
        .collect::<Vec<_>>()
        .join(",")
}

fn cmd_validate(path: &Path, stdout: &mut dyn Write) -> Result<(), CliError> {
    let inst = load_file(path)?;
    let q = &inst.query;
    let Some(cs) = inst.constraints.as_ref().filter(|cs| !cs.is_empty()) else {
        writeln!(stdout, "no constraints")?;
        return Ok(());
    };
    writeln!(stdout, "#\tA\tB\tN\tguard\tmax_degree\tresult\twitness")?;
    for (check, c) in validate(q, cs).checks.iter().zip(cs.constraints()) {
        let head = format!(
            "{}\t{}\t{}\t{}\t{}",
            check.index,
            names(q, c.lhs()),
            names(q, c.rhs()),
            c.bound(),
            names(q, c.guard())
        );
        match &check.outcome {
            CheckOutcome::Pass { max_degree, at } => writeln!(
                stdout,
                "{head}\t{max_degree}\tpass\t{}",
                at.as_ref().map_or(String::new(), |t| show_tuple(q, t))
            )?,
            CheckOutcome::Fail {
                max_degree,
                witness,
            } => writeln!(
                stdout,
                "{head}\t{max_degree}\tFAIL\t{}",
                show_tuple(q, witness)
            )?,
            CheckOutcome::NoGuardRelation => {
                writeln!(stdout, "{head}\t-\tFAIL\tno guard relation")?
            }
        }
    }
    match compatible_order(cs) {
        Ok(order) => {
            writeln!(stdout, "acyclic: yes")?;
            let names: Vec<&str> = order.iter().map(|&v| q.var_name(v)).collect();
            writeln!(stdout, "compatible order: {}", names.join(","))?;
            if inst.explicit_order && !check_compatible(cs, &q.order()) {
                writeln!(stdout, "declared order is not compatible")?;
            }
        }
        Err(e) => writeln!(stdout, "acyclic: no ({e})")?,
    }
    Ok(())
}

fn cmd_oracle(path: &Path, stdout: &mut dyn Write) -> Result<(), CliError> {
    let inst = load_file(path)?;
    let q = &inst.query;
    let answers = nested_loop_join(q).map_err(|e| CliError::Constraint(e.to_string()))?;
    write_answers(q, &q.order(), answers.iter().map(Vec::as_slice), stdout)
}

/// Runs one command, writing default output to `stdout`.
pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Join {
            spec,
            order,
            no_binarise,
            stats_out,
            output,
        } => cmd_join(
            spec,
            order.as_deref(),
            *no_binarise,
            stats_out.as_deref(),
            output.as_deref(),
            stdout,
        ),
        Command::Sample {
            spec,
            count,
            seed,
            estimator,
            max_work,
            stats_out,
            output,
        } => cmd_sample(
            spec,
            *count,
            *seed,
            *estimator,
            *max_work,
            stats_out.as_deref(),
            output.as_deref(),
            stdout,
        ),
        Command::Cover { spec } => cmd_cover(spec, stdout),
        Command::Validate { spec } => cmd_validate(spec, stdout),
        Command::Oracle { spec } => cmd_oracle(spec, stdout),
    }
}
