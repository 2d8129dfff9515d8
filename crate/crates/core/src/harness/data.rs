//! Cauchy traces: face values g0 on the Cauchy boundary and the inward
//! normal derivative g1, stored as a one-sided difference so that the first
//! inner layer is recovered exactly as g0(face) + h·g1.

use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::functional::CauchyData;
use crate::grid::{Grid, Side};
use crate::level::LevelFamily;
use crate::mask::DomainMask;
use crate::operator::OperatorFamily;

use super::cases::ManufacturedCase;

#[derive(Debug, Clone, PartialEq)]
pub struct CauchyTrace {
    /// One value per `layer0` node.
    pub g0: Vec<f64>,
    /// One value per `layer1` node.
    pub g1: Vec<f64>,
}

/// For each `layer1` node: its face node in `layer0` order, the face axis
/// and the spacing along it.
#[derive(Debug, Clone)]
pub struct TraceGeometry {
    parent: Vec<usize>,
    axis: Vec<usize>,
    spacing: Vec<f64>,
}

impl TraceGeometry {
    pub fn new(mask: &DomainMask) -> Result<Self> {
        let grid = mask.grid();
        let slot: std::collections::HashMap<usize, usize> = mask
            .layer0()
            .iter()
            .enumerate()
            .map(|(i, &n)| (n, i))
            .collect();
        let mut parent = Vec::with_capacity(mask.layer1().len());
        let mut axis = Vec::with_capacity(mask.layer1().len());
        for &q in mask.layer1() {
            let found = mask.cauchy_faces().iter().find_map(|&(a, side)| {
                let outward = if side == Side::Low { -1 } else { 1 };
                grid.shift(q, a, outward)
                    .filter(|&p| grid.on_face(p, a, side))
                    .and_then(|p| slot.get(&p).map(|&i| (i, a)))
            });
            let (i, a) = found.ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "first-layer node {q} has no face node in the Cauchy layer"
                ))
            })?;
            parent.push(i);
            axis.push(a);
        }
        let spacing = axis.iter().map(|&a| grid.spacing()[a]).collect();
        Ok(Self {
            parent,
            axis,
            spacing,
        })
    }

    pub fn parent(&self) -> &[usize] {
        &self.parent
    }

    pub fn axis(&self) -> &[usize] {
        &self.axis
    }
}

impl CauchyTrace {
    pub fn from_field(mask: &DomainMask, geom: &TraceGeometry, u: &Field) -> Result<Self> {
        u.ensure_grid(mask.grid())?;
        let v = u.values();
        let g0: Vec<f64> = mask.layer0().iter().map(|&n| v[n]).collect();
        let g1 = mask
            .layer1()
            .iter()
            .enumerate()
            .map(|(j, &q)| (v[q] - g0[geom.parent[j]]) / geom.spacing[j])
            .collect();
        Ok(Self { g0, g1 })
    }

    /// Constrained values on both layers.
    pub fn to_cauchy_data(&self, mask: &DomainMask, geom: &TraceGeometry) -> Result<CauchyData> {
        if self.g1.len() != geom.parent.len() {
            return Err(Error::InvalidArgument(format!(
                "trace has {} derivative values for {} first-layer nodes",
                self.g1.len(),
                geom.parent.len()
            )));
        }
        let layer1: Vec<f64> = self
            .g1
            .iter()
            .enumerate()
            .map(|(j, &d)| self.g0[geom.parent[j]] + geom.spacing[j] * d)
            .collect();
        CauchyData::from_layers(mask, &self.g0, &layer1)
    }
}

fn rms(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

/// Adds independent Gaussian noise to each trace component with standard
/// deviation `level · rms(component)`.
pub fn add_noise(trace: &CauchyTrace, level: f64, seed: u64) -> Result<CauchyTrace> {
    if !(level >= 0.0 && level.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise level {level} must be nonnegative"
        )));
    }
    if level == 0.0 {
        return Ok(trace.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perturb = |v: &[f64]| -> Vec<f64> {
        let sd = level * rms(v);
        if sd == 0.0 {
            return v.to_vec();
        }
        let normal = Normal::new(0.0, sd).expect("positive finite sd");
        v.iter().map(|&x| x + normal.sample(&mut rng)).collect()
    };
    let g0 = perturb(&trace.g0);
    let g1 = perturb(&trace.g1);
    Ok(CauchyTrace { g0, g1 })
}

fn family_matches(case: OperatorFamily, mask: LevelFamily) -> bool {
    matches!(
        (case, mask),
        (OperatorFamily::Elliptic, LevelFamily::Elliptic)
            | (OperatorFamily::Parabolic, LevelFamily::Parabolic)
            | (OperatorFamily::Hyperbolic, LevelFamily::Hyperbolic)
            | (OperatorFamily::Elliptic, LevelFamily::Generic)
    )
}

/// Samples u* and its Cauchy trace.
pub fn manufactured_solution(
    case: &dyn ManufacturedCase,
    grid: &Arc<Grid>,
    mask: &DomainMask,
) -> Result<(Field, CauchyTrace)> {
    if !family_matches(case.family(), mask.family()) {
        return Err(Error::InvalidArgument(format!(
            "case {} is {:?} but the mask is built from a {:?} level function",
            case.id(),
            case.family(),
            mask.family()
        )));
    }
    if !Arc::ptr_eq(grid, mask.grid()) && **grid != **mask.grid() {
        return Err(Error::GridMismatch);
    }
    let u = Field::from_fn(mask.grid().clone(), |p| case.exact(p));
    let geom = TraceGeometry::new(mask)?;
    let trace = CauchyTrace::from_field(mask, &geom, &u)?;
    Ok((u, trace))
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceRow {
    kind: String,
    axis: Option<usize>,
    coords: String,
    value: f64,
}

/// Writes a trace as CSV with columns `kind,axis,coords,value`: `kind` is
/// `g0` or `g1`, `coords` the face node coordinates joined by `;` and
/// `axis` the face normal (for `g1` rows).
pub fn write_trace_csv(
    path: &Path,
    mask: &DomainMask,
    geom: &TraceGeometry,
    trace: &CauchyTrace,
) -> Result<()> {
    let grid = mask.grid();
    let join = |n: usize| {
        grid.point(n)
            .iter()
            .map(|x| format!("{x:?}"))
            .collect::<Vec<_>>()
            .join(";")
    };
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for (i, &n) in mask.layer0().iter().enumerate() {
        w.serialize(TraceRow {
            kind: "g0".into(),
            axis: None,
            coords: join(n),
            value: trace.g0[i],
        })
        .map_err(|e| csv_error(path, e))?;
    }
    for (j, d) in trace.g1.iter().enumerate() {
        w.serialize(TraceRow {
            kind: "g1".into(),
            axis: Some(geom.axis[j]),
            coords: join(mask.layer0()[geom.parent[j]]),
            value: *d,
        })
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::Parse(format!("{}: {e}", path.display()))
    }
}

/// Reads a trace written by [`write_trace_csv`]. Coordinates are matched to
/// grid nodes within a quarter cell; every Cauchy node needs exactly one row.
pub fn read_trace_csv(path: &Path, mask: &DomainMask, geom: &TraceGeometry) -> Result<CauchyTrace> {
    let grid = mask.grid();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut g0 = vec![None; mask.layer0().len()];
    let mut g1 = vec![None; mask.layer1().len()];
    let slot0: std::collections::HashMap<usize, usize> = mask
        .layer0()
        .iter()
        .enumerate()
        .map(|(i, &n)| (n, i))
        .collect();
    for (line, row) in r.deserialize::<TraceRow>().enumerate() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let at = |msg: String| Error::Parse(format!("{} row {}: {msg}", path.display(), line + 2));
        let coords: Vec<f64> = row
            .coords
            .split(';')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| at(format!("coordinate `{s}`: {e}")))
            })
            .collect::<Result<_>>()?;
        if coords.len() != grid.dim() {
            return Err(at(format!(
                "{} coordinates for a {}-D grid",
                coords.len(),
                grid.dim()
            )));
        }
        let node =
            nearest_node(grid, &coords).ok_or_else(|| at("point is not a grid node".into()))?;
        let i = *slot0
            .get(&node)
            .ok_or_else(|| at(format!("node at {coords:?} is not on the Cauchy boundary")))?;
        let (target, idx) = match row.kind.as_str() {
            "g0" => (&mut g0, i),
            "g1" => {
                let axis = row.axis.ok_or_else(|| at("g1 row needs an axis".into()))?;
                let j = (0..geom.parent.len())
                    .find(|&j| geom.parent[j] == i && geom.axis[j] == axis)
                    .ok_or_else(|| at(format!("no first-layer node along axis {axis}")))?;
                (&mut g1, j)
            }
            other => return Err(at(format!("kind `{other}` is neither g0 nor g1"))),
        };
        if target[idx].replace(row.value).is_some() {
            return Err(at("duplicate entry".into()));
        }
    }
    let collect = |v: Vec<Option<f64>>, kind: &str| -> Result<Vec<f64>> {
        let missing = v.iter().filter(|x| x.is_none()).count();
        if missing > 0 {
            return Err(Error::Parse(format!(
                "{}: {missing} {kind} values missing",
                path.display()
            )));
        }
        Ok(v.into_iter().flatten().collect())
    };
    Ok(CauchyTrace {
        g0: collect(g0, "g0")?,
        g1: collect(g1, "g1")?,
    })
}

fn nearest_node(grid: &Grid, p: &[f64]) -> Option<usize> {
    let mut idx = Vec::with_capacity(grid.dim());
    for (a, x) in p.iter().enumerate() {
        let s = (x - grid.origin()[a]) / grid.spacing()[a];
        let i = s.round();
        if (s - i).abs() > 0.25 || i < 0.0 || i as usize >= grid.shape()[a] {
            return None;
        }
        idx.push(i as usize);
    }
    Some(grid.node(&idx))
}
