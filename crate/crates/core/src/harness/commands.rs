//! Command entry points shared by the CLI and the tests.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::error::Result;

use super::config::ProblemSetup;
use super::experiments::{
    certify, gradcheck, solve, sweep, weight_minimum_check, CertifyOutcome, GradcheckOutcome,
    SolveOutcome, WeightMinimumCheck,
};
use super::report::{emit_report, HistorySeries, MaskSummary, Report, ReportFiles, SCHEMA_VERSION};

/// Gradient check tolerances: FD directional derivative and adjoint duality.
pub const GRADIENT_TOLERANCE: f64 = 1e-6;
pub const ADJOINT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Solve,
    Certify,
    Gradcheck,
    Sweep(Vec<f64>),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Certify => "certify",
            Command::Gradcheck => "gradcheck",
            Command::Sweep(_) => "sweep",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CommandOutput {
    pub files: ReportFiles,
    /// Converged, passed or within tolerance, depending on the command.
    pub success: bool,
    pub summary: String,
}

#[derive(Serialize)]
struct CertifyResult<'a> {
    #[serde(flatten)]
    outcome: &'a CertifyOutcome,
    weight_minimum: Vec<WeightMinimumCheck>,
}

#[derive(Serialize)]
struct GradcheckResult<'a> {
    #[serde(flatten)]
    outcome: &'a GradcheckOutcome,
    gradient_tolerance: f64,
    adjoint_tolerance: f64,
    passed: bool,
}

#[derive(Serialize)]
struct SweepResult<'a> {
    lambdas: &'a [f64],
    runs: &'a [SolveOutcome],
}

fn report<'a, T: Serialize>(
    setup: &'a ProblemSetup,
    command: &'a str,
    result: &'a T,
    clock: Instant,
) -> Report<'a, T> {
    Report {
        schema_version: SCHEMA_VERSION,
        command,
        problem: setup.name(),
        config: &setup.config,
        mask: MaskSummary::of(setup),
        result,
        wall_time: clock.elapsed().as_secs_f64(),
    }
}

fn solve_summary(o: &SolveOutcome) -> String {
    let mut s = format!("lambda = {}: J = {:.6e}", o.lambda, o.final_value);
    if let Some(r) = &o.run {
        s += &format!(
            ", {} iterations, {:?}, q_hat = {}",
            r.iterations,
            r.termination,
            r.q_hat.map_or("n/a".into(), |q| format!("{q:.4}"))
        );
    }
    if let Some(e) = o.errors.as_ref().and_then(|e| e.last()).and_then(|e| e.l2) {
        s += &format!(", relative L2 error on G_c+2eps = {e:.3e}");
    }
    s
}

pub fn run_command(
    command: &Command,
    setup: &ProblemSetup,
    out_dir: &Path,
) -> Result<CommandOutput> {
    let clock = Instant::now();
    let name = command.name();
    match command {
        Command::Solve => {
            let o = solve(setup, setup.lambda())?;
            let history: Vec<HistorySeries> = o
                .run
                .iter()
                .map(|r| HistorySeries {
                    run: 0,
                    lambda: o.lambda,
                    records: &r.history,
                })
                .collect();
            let files = emit_report(
                out_dir,
                &report(setup, name, &o, clock),
                &history,
                Some((setup, &o.field)),
            )?;
            Ok(CommandOutput {
                files,
                success: o.converged(),
                summary: solve_summary(&o),
            })
        }
        Command::Certify => {
            let o = certify(setup)?;
            let weight_minimum = setup
                .config
                .certificate
                .lambdas
                .iter()
                .map(|&l| weight_minimum_check(setup, l))
                .collect::<Result<_>>()?;
            let result = CertifyResult {
                outcome: &o,
                weight_minimum,
            };
            let history: Vec<HistorySeries> = o
                .multi_start
                .iter()
                .flat_map(|m| {
                    m.report
                        .runs
                        .iter()
                        .enumerate()
                        .map(|(i, r)| HistorySeries {
                            run: i,
                            lambda: m.lambda,
                            records: &r.history,
                        })
                })
                .collect();
            let files = emit_report(
                out_dir,
                &report(setup, name, &result, clock),
                &history,
                None,
            )?;
            let table: Vec<String> = o
                .table
                .iter()
                .map(|r| format!("{}:{}", r.lambda, r.failures))
                .collect();
            Ok(CommandOutput {
                files,
                success: o.passed(),
                summary: format!(
                    "failures per lambda [{}], first passing lambda {}",
                    table.join(", "),
                    o.first_passing_lambda
                        .map_or("none".into(), |l| l.to_string())
                ),
            })
        }
        Command::Gradcheck => {
            let o = gradcheck(setup, setup.lambda())?;
            let passed = o.max_gradient_error < GRADIENT_TOLERANCE
                && o.max_adjoint_error < ADJOINT_TOLERANCE;
            let result = GradcheckResult {
                outcome: &o,
                gradient_tolerance: GRADIENT_TOLERANCE,
                adjoint_tolerance: ADJOINT_TOLERANCE,
                passed,
            };
            let files = emit_report(out_dir, &report(setup, name, &result, clock), &[], None)?;
            Ok(CommandOutput {
                files,
                success: passed,
                summary: format!(
                    "max gradient error {:.3e}, max adjoint error {:.3e}",
                    o.max_gradient_error, o.max_adjoint_error
                ),
            })
        }
        Command::Sweep(lambdas) => {
            let runs = sweep(setup, lambdas)?;
            let history: Vec<HistorySeries> = runs
                .iter()
                .enumerate()
                .filter_map(|(i, o)| {
                    o.run.as_ref().map(|r| HistorySeries {
                        run: i,
                        lambda: o.lambda,
                        records: &r.history,
                    })
                })
                .collect();
            let result = SweepResult {
                lambdas,
                runs: &runs,
            };
            let files = emit_report(
                out_dir,
                &report(setup, name, &result, clock),
                &history,
                None,
            )?;
            Ok(CommandOutput {
                files,
                success: runs.iter().all(|o| o.converged()),
                summary: runs
                    .iter()
                    .map(solve_summary)
                    .collect::<Vec<_>>()
                    .join("\n"),
            })
        }
    }
}
