//! Problem files, manufactured solutions, experiments and reports.

pub mod cases;
pub mod commands;
pub mod config;
pub mod data;
pub mod experiments;
pub mod expr;
pub mod report;

pub use cases::{manufactured_cases, ManufacturedCase};
pub use commands::{run_command, Command, CommandOutput};
pub use config::{load_problem, parse_config, parse_problem, ProblemConfig, ProblemSetup};
pub use data::{add_noise, manufactured_solution, CauchyTrace, TraceGeometry};
pub use report::{emit_report, Report};
