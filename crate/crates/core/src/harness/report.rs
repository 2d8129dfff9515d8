//! report.json, history.csv and field.csv.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::mask::LabelCounts;
use crate::optimizer::IterRecord;

use super::config::{ProblemConfig, ProblemSetup};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct MaskSummary {
    pub counts: LabelCounts,
    pub free_nodes: usize,
    pub constrained_nodes: usize,
    pub theta: f64,
    pub epsilon: f64,
    pub masked_volume: f64,
}

impl MaskSummary {
    pub fn of(setup: &ProblemSetup) -> Self {
        let mask = &setup.mask;
        Self {
            counts: mask.counts(),
            free_nodes: setup.space.free_nodes().len(),
            constrained_nodes: mask.layer0().len() + mask.layer1().len(),
            theta: mask.theta(),
            epsilon: mask.epsilon(),
            masked_volume: mask.masked_volume(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report<'a, T: Serialize> {
    pub schema_version: u32,
    pub command: &'a str,
    pub problem: String,
    /// Effective configuration, defaults included.
    pub config: &'a ProblemConfig,
    pub mask: MaskSummary,
    pub result: &'a T,
    pub wall_time: f64,
}

/// One optimizer run's history, tagged with its position in the report.
pub struct HistorySeries<'a> {
    pub run: usize,
    pub lambda: f64,
    pub records: &'a [IterRecord],
}

#[derive(Debug, Clone)]
pub struct ReportFiles {
    pub report: PathBuf,
    pub history: Option<PathBuf>,
    pub field: Option<PathBuf>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Writes the report files into `out_dir`, creating it if needed.
pub fn emit_report<T: Serialize>(
    out_dir: &Path,
    report: &Report<'_, T>,
    history: &[HistorySeries<'_>],
    field: Option<(&ProblemSetup, &Field)>,
) -> Result<ReportFiles> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let report_path = out_dir.join("report.json");
    let mut w = create(&report_path)?;
    serde_json::to_writer_pretty(&mut w, report)
        .map_err(|e| Error::io(&report_path, std::io::Error::other(e)))?;
    writeln!(w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&report_path, e))?;

    let history_path = if history.is_empty() {
        None
    } else {
        let path = out_dir.join("history.csv");
        write_history(&path, history)?;
        Some(path)
    };
    let field_path = match field {
        Some((setup, u)) => {
            let path = out_dir.join("field.csv");
            write_field(&path, setup, u)?;
            Some(path)
        }
        None => None,
    };
    Ok(ReportFiles {
        report: report_path,
        history: history_path,
        field: field_path,
    })
}

fn write_history(path: &Path, series: &[HistorySeries<'_>]) -> Result<()> {
    let io = |e: std::io::Error| Error::io(path, e);
    let mut w = create(path)?;
    writeln!(w, "run,lambda,iter,J,grad_norm,step,norm").map_err(io)?;
    for s in series {
        for r in s.records {
            writeln!(
                w,
                "{},{:e},{},{:e},{:e},{:e},{:e}",
                s.run, s.lambda, r.iter, r.value, r.grad_norm, r.step, r.norm
            )
            .map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// One row per masked node: coordinates, label, u, u*, |u − u*|.
fn write_field(path: &Path, setup: &ProblemSetup, u: &Field) -> Result<()> {
    let io = |e: std::io::Error| Error::io(path, e);
    let grid = setup.mask.grid();
    let d = grid.dim();
    let mut w = create(path)?;
    let coords: Vec<String> = (0..d).map(|a| format!("x{a}")).collect();
    writeln!(w, "{},label,u,u_star,abs_error", coords.join(",")).map_err(io)?;
    let mut p = vec![0.0; d];
    for n in setup.mask.masked_nodes() {
        grid.fill_point(n, &mut p);
        for x in &p {
            write!(w, "{x:e},").map_err(io)?;
        }
        let v = u.values()[n];
        let label = format!("{:?}", setup.mask.label(n));
        match &setup.exact {
            Some(e) => {
                let s = e.values()[n];
                writeln!(w, "{label},{v:e},{s:e},{:e}", (v - s).abs()).map_err(io)?;
            }
            None => writeln!(w, "{label},{v:e},,").map_err(io)?,
        }
    }
    w.flush().map_err(io)
}
