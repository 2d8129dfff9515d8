//! TOML problem files.
//!
//! Every knob has a section; anything left out is filled from the
//! manufactured case (grid, level) or from the defaults below, and the
//! filled-in config is echoed verbatim into each report.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::info;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::functional::{CauchyData, Functional};
use crate::grid::{build_grid, Grid};
use crate::level::{generic_levels, GenericLevelArgs, LevelFamily, LevelSpec};
use crate::mask::{classify_nodes, DomainMask};
use crate::operator::lower::{lower_order_terms, LowerOrderArgs};
use crate::operator::{
    DiscreteOperator, MatrixCoeff, OperatorFamily, QuasilinearOperator, ScalarCoeff,
};
use crate::optimizer::OptimizerConfig;
use crate::riesz::{riesz_solvers, RieszOptions};
use crate::sobolev::{sobolev_order, Region, SobolevSpace};
use crate::weights::WeightSpec;

use super::cases::{manufactured_cases, ManufacturedCase};
use super::data::{add_noise, manufactured_solution, read_trace_csv, CauchyTrace, TraceGeometry};
use super::expr::Expression;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub problem: ProblemSection,
    pub grid: GridSection,
    pub level: LevelSection,
    pub operator: OperatorSection,
    pub data: DataSection,
    pub functional: FunctionalSection,
    pub solve: SolveSection,
    pub optimizer: OptimizerConfig,
    pub certificate: CertificateSection,
    pub carleman: CarlemanSection,
    pub gradcheck: GradcheckSection,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSection {
    pub name: Option<String>,
    pub family: Option<OperatorFamily>,
    /// Manufactured case id; fixes the operator and supplies u*.
    pub case: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub bounds: Option<Vec<[f64; 2]>>,
    pub resolution: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LevelSection {
    pub family: Option<LevelFamily>,
    pub a: Option<f64>,
    pub c: Option<f64>,
    pub nu: Option<f64>,
    pub x_scale: Option<f64>,
    pub t_scale: Option<f64>,
    pub eta: Option<f64>,
    pub x0: Option<Vec<f64>>,
    /// Omitted: 0.1 (max ℓ − θ) over the box.
    pub epsilon: Option<f64>,
    /// Generic family: catalog name of ξ.
    pub function: Option<String>,
    pub offset: Option<f64>,
    pub curvature: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorSection {
    pub lower: Option<String>,
    /// Source q(x) added to the lower-order term.
    pub source: Option<String>,
    pub coefficient: Option<f64>,
    /// Row-major principal coefficients a_ij as expressions.
    pub matrix: Option<Vec<Vec<String>>>,
    /// Hyperbolic family: a(x) in a u_tt − Δu.
    pub wave_speed: Option<String>,
    /// Declared ellipticity bounds checked at every node.
    pub bounds: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Manufactured,
    File,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub source: Option<DataSource>,
    /// CSV trace, relative to the config file.
    pub path: Option<PathBuf>,
    /// Reference solution for error norms when the data come from a file.
    pub exact: Option<String>,
    pub noise: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FunctionalSection {
    pub lambda: f64,
    pub beta: f64,
    /// Sobolev order; omitted means the smallest embedding order.
    pub order: Option<usize>,
    pub riesz: String,
    pub riesz_options: RieszOptions,
}

impl Default for FunctionalSection {
    fn default() -> Self {
        Self {
            lambda: 2.0,
            beta: 1e-3,
            order: None,
            riesz: "cholesky".into(),
            riesz_options: RieszOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    #[default]
    Gradient,
    /// Direct sparse solve; only for operators affine in u.
    NormalEquations,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveSection {
    pub method: SolveMethod,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertificateSection {
    pub lambdas: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    /// Omitted: the optimizer radius.
    pub radius: Option<f64>,
    /// Random starts run at the first passing λ (0 disables).
    pub multi_start: usize,
    pub multi_start_seed: u64,
}

impl Default for CertificateSection {
    fn default() -> Self {
        Self {
            lambdas: vec![1.0, 2.0, 4.0, 8.0],
            samples: 50,
            seed: 1,
            radius: None,
            multi_start: 0,
            multi_start_seed: 2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarlemanSection {
    /// Empty disables the ratio check.
    pub lambdas: Vec<f64>,
    pub bumps: usize,
    pub seed: u64,
    /// Bump radius in grid cells.
    pub radius_cells: f64,
}

impl Default for CarlemanSection {
    fn default() -> Self {
        Self {
            lambdas: Vec::new(),
            bumps: 20,
            seed: 3,
            radius_cells: 4.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckSection {
    pub directions: usize,
    pub pairs: usize,
    pub seed: u64,
    /// Central-difference step as a fraction of max |u| over max |h|.
    pub delta: f64,
}

impl Default for GradcheckSection {
    fn default() -> Self {
        Self {
            directions: 10,
            pairs: 20,
            seed: 4,
            delta: 1e-2,
        }
    }
}

/// A parsed, validated problem with its discrete objects built.
pub struct ProblemSetup {
    /// Effective configuration with every default filled in.
    pub config: ProblemConfig,
    pub family: OperatorFamily,
    pub case: Option<Arc<dyn ManufacturedCase>>,
    pub grid: Arc<Grid>,
    pub level: LevelSpec,
    pub mask: Arc<DomainMask>,
    pub discrete: Arc<DiscreteOperator>,
    pub space: Arc<SobolevSpace>,
    pub exact: Option<Field>,
    pub geometry: TraceGeometry,
    pub clean_trace: Option<CauchyTrace>,
    pub trace: CauchyTrace,
    pub data: CauchyData,
}

impl std::fmt::Debug for ProblemSetup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSetup")
            .field("config", &self.config)
            .field("family", &self.family)
            .finish_non_exhaustive()
    }
}

pub fn load_problem(path: &Path) -> Result<ProblemSetup> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_problem(&text, base)
}

/// Parses TOML text. Relative paths inside resolve against `base_dir`.
pub fn parse_problem(text: &str, base_dir: &Path) -> Result<ProblemSetup> {
    let config = parse_config(text)?;
    ProblemSetup::from_config(config, base_dir)
}

pub fn parse_config(text: &str) -> Result<ProblemConfig> {
    // syntax first so that errors carry line and column
    text.parse::<toml::Table>()
        .map_err(|e| Error::Parse(e.to_string().trim_end().into()))?;
    serde_path_to_error::deserialize(toml::Deserializer::new(text)).map_err(|e| {
        let path = e.path().to_string();
        let message = e.inner().message().to_string();
        Error::schema(path, message)
    })
}

fn need<T: Clone>(value: &Option<T>, path: &str) -> Result<T> {
    value
        .clone()
        .ok_or_else(|| Error::schema(path, "required field is missing"))
}

fn positive(value: f64, path: &str) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::schema(path, format!("{value} must be positive")))
    }
}

impl ProblemSetup {
    pub fn from_config(mut cfg: ProblemConfig, base_dir: &Path) -> Result<Self> {
        let case = match &cfg.problem.case {
            Some(id) => Some((manufactured_cases().get(id)?)()),
            None => None,
        };
        let family = match (&case, cfg.problem.family) {
            (Some(c), Some(f)) if c.family() != f => {
                return Err(Error::schema(
                    "problem.family",
                    format!(
                        "{f:?} contradicts case {} which is {:?}",
                        c.id(),
                        c.family()
                    ),
                ))
            }
            (Some(c), _) => c.family(),
            (None, Some(f)) => f,
            (None, None) => {
                return Err(Error::schema(
                    "problem.family",
                    "required without problem.case",
                ))
            }
        };
        cfg.problem.family = Some(family);

        // grid
        if let Some(c) = &case {
            let (b, r) = c.default_grid();
            cfg.grid
                .bounds
                .get_or_insert(b.iter().map(|&(lo, hi)| [lo, hi]).collect());
            cfg.grid.resolution.get_or_insert(r);
        }
        let bounds: Vec<(f64, f64)> = need(&cfg.grid.bounds, "grid.bounds")?
            .iter()
            .map(|b| (b[0], b[1]))
            .collect();
        let resolution = need(&cfg.grid.resolution, "grid.resolution")?;
        if bounds.len() != resolution.len() {
            return Err(Error::schema(
                "grid.resolution",
                format!("{} axes for {} bounds", resolution.len(), bounds.len()),
            ));
        }
        let grid = Arc::new(
            build_grid(&bounds, &resolution).map_err(|e| Error::schema("grid", e.to_string()))?,
        );
        let dim = grid.dim();
        let time = family != OperatorFamily::Elliptic;
        if time && dim < 2 {
            return Err(Error::schema(
                "grid.bounds",
                "time-dependent families need a space axis and a time axis",
            ));
        }

        let level = resolve_level(&mut cfg.level, case.as_deref(), family, dim)?;
        let mask = Arc::new(classify_nodes(grid.clone(), &level)?);
        cfg.level.epsilon = Some(mask.epsilon());
        let counts = mask.counts();
        info!(
            "mask: {} interior, {} inner, {} Cauchy, {} level-surface nodes (epsilon = {:.4e})",
            counts.interior,
            counts.inner,
            counts.cauchy_boundary,
            counts.xi_boundary,
            mask.epsilon()
        );

        let operator = match &case {
            Some(c) => {
                if has_operator_fields(&cfg.operator) {
                    return Err(Error::schema(
                        "operator",
                        format!(
                            "case {} fixes the operator; remove the [operator] section",
                            c.id()
                        ),
                    ));
                }
                c.operator()
            }
            None => build_operator(&mut cfg.operator, family, dim)?,
        };
        let x0 = (family == OperatorFamily::Hyperbolic).then_some(&level.x0[..]);
        operator.validate(&mask, x0)?;
        let discrete = Arc::new(DiscreteOperator::new(operator, mask.clone())?);

        let order = match cfg.functional.order {
            Some(k) => k,
            None => sobolev_order(dim)?,
        };
        if order < 1 {
            return Err(Error::schema(
                "functional.order",
                "the regularizer needs order at least 1",
            ));
        }
        cfg.functional.order = Some(order);
        let space = Arc::new(SobolevSpace::new(mask.clone(), order, Region::Full)?);
        riesz_solvers().get(&cfg.functional.riesz)?;
        positive(cfg.functional.lambda, "functional.lambda")?;
        positive(cfg.functional.beta, "functional.beta")?;
        cfg.optimizer
            .validate()
            .map_err(|e| Error::schema("optimizer", e.to_string()))?;

        let geometry = TraceGeometry::new(&mask)?;
        let source = cfg.data.source.unwrap_or(
            if case.is_some() || (cfg.data.exact.is_some() && cfg.data.path.is_none()) {
                DataSource::Manufactured
            } else {
                DataSource::File
            },
        );
        cfg.data.source = Some(source);
        let (exact, clean_trace) = match source {
            DataSource::Manufactured => match (&case, &cfg.data.exact) {
                (Some(c), _) => {
                    let (u, t) = manufactured_solution(c.as_ref(), &grid, &mask)?;
                    (Some(u), t)
                }
                // Traces of an expression; it need not solve the equation.
                (None, Some(e)) => {
                    let expr = Expression::parse("data.exact", e, dim, time)?;
                    let u = Field::from_fn(grid.clone(), |p| expr.eval(p));
                    let t = CauchyTrace::from_field(&mask, &geometry, &u)?;
                    (Some(u), t)
                }
                (None, None) => {
                    return Err(Error::schema(
                        "data.source",
                        "manufactured data need problem.case or data.exact",
                    ))
                }
            },
            DataSource::File => {
                let rel = need(&cfg.data.path, "data.path")?;
                let path = if rel.is_absolute() {
                    rel
                } else {
                    base_dir.join(rel)
                };
                let trace = read_trace_csv(&path, &mask, &geometry)?;
                let exact = match (&cfg.data.exact, &case) {
                    (Some(e), _) => {
                        let expr = Expression::parse("data.exact", e, dim, time)?;
                        Some(Field::from_fn(grid.clone(), |p| expr.eval(p)))
                    }
                    (None, Some(c)) => Some(Field::from_fn(grid.clone(), |p| c.exact(p))),
                    (None, None) => None,
                };
                (exact, trace)
            }
        };
        if exact.as_ref().is_some_and(|u| !u.is_finite()) {
            return Err(Error::schema(
                "data.exact",
                "reference solution is not finite on the grid",
            ));
        }
        let trace = add_noise(&clean_trace, cfg.data.noise, cfg.data.seed)
            .map_err(|e| Error::schema("data.noise", e.to_string()))?;
        let data = trace.to_cauchy_data(&mask, &geometry)?;
        Ok(Self {
            config: cfg,
            family,
            case,
            grid,
            level,
            mask,
            discrete,
            space,
            exact,
            geometry,
            clean_trace: Some(clean_trace),
            trace,
            data,
        })
    }

    pub fn weight(&self, lambda: f64) -> Result<WeightSpec> {
        WeightSpec::for_mask(self.level.clone(), lambda, &self.mask)
    }

    /// J at the given λ with the configured β (clamped if out of range).
    pub fn functional(&self, lambda: f64) -> Result<Functional> {
        let f = &self.config.functional;
        Functional::new(
            self.discrete.clone(),
            self.weight(lambda)?,
            self.space.clone(),
            f.beta,
            self.data.clone(),
        )?
        .with_riesz(&f.riesz, f.riesz_options)
    }

    pub fn lambda(&self) -> f64 {
        self.config.functional.lambda
    }

    pub fn name(&self) -> String {
        self.config
            .problem
            .name
            .clone()
            .or_else(|| self.config.problem.case.clone())
            .unwrap_or_else(|| "problem".into())
    }
}

fn has_operator_fields(op: &OperatorSection) -> bool {
    op.lower.is_some()
        || op.source.is_some()
        || op.coefficient.is_some()
        || op.matrix.is_some()
        || op.wave_speed.is_some()
        || op.bounds.is_some()
}

fn resolve_level(
    sec: &mut LevelSection,
    case: Option<&dyn ManufacturedCase>,
    family: OperatorFamily,
    dim: usize,
) -> Result<LevelSpec> {
    let dflt = case.map(|c| c.default_level());
    let natural = match family {
        OperatorFamily::Elliptic => LevelFamily::Elliptic,
        OperatorFamily::Parabolic => LevelFamily::Parabolic,
        OperatorFamily::Hyperbolic => LevelFamily::Hyperbolic,
    };
    let lf = *sec.family.get_or_insert(natural);
    if lf != natural && lf != LevelFamily::Generic {
        return Err(Error::schema(
            "level.family",
            format!("{lf:?} level function with a {family:?} operator"),
        ));
    }
    // case default only when the config keeps the case's level family
    let from_case = dflt.filter(|d| d.family == lf);
    let pick = |v: &mut Option<f64>,
                path: &str,
                case_v: Option<f64>,
                fallback: Option<f64>|
     -> Result<f64> {
        if v.is_none() {
            *v = case_v.or(fallback);
        }
        need(v, path)
    };
    let spec = match lf {
        LevelFamily::Elliptic | LevelFamily::Parabolic => {
            let d = from_case.as_ref();
            let a = pick(&mut sec.a, "level.a", d.map(|d| d.a), None)?;
            let c = pick(&mut sec.c, "level.c", d.map(|d| d.c), None)?;
            let nu = pick(&mut sec.nu, "level.nu", d.map(|d| d.nu), Some(2.0))?;
            let xs = pick(
                &mut sec.x_scale,
                "level.x_scale",
                d.map(|d| d.x_scale),
                Some(1.0),
            )?;
            if lf == LevelFamily::Elliptic {
                LevelSpec::elliptic(a, c, nu, xs)
            } else {
                let ts = pick(
                    &mut sec.t_scale,
                    "level.t_scale",
                    d.map(|d| d.t_scale),
                    Some(1.0),
                )?;
                LevelSpec::parabolic(a, c, nu, xs, ts)
            }
        }
        LevelFamily::Hyperbolic => {
            let d = from_case.as_ref();
            if sec.x0.is_none() {
                sec.x0 = d.map(|d| d.x0.clone());
            }
            let x0 = need(&sec.x0, "level.x0")?;
            if x0.len() + 1 != dim {
                return Err(Error::schema(
                    "level.x0",
                    format!("{} components for {} space axes", x0.len(), dim - 1),
                ));
            }
            let eta = pick(&mut sec.eta, "level.eta", d.map(|d| d.eta), None)?;
            let c = pick(&mut sec.c, "level.c", d.map(|d| d.c), None)?;
            let ts = pick(
                &mut sec.t_scale,
                "level.t_scale",
                d.map(|d| d.t_scale),
                Some(1.0),
            )?;
            LevelSpec::hyperbolic(x0, eta, c, ts)
        }
        LevelFamily::Generic => {
            let name = sec
                .function
                .get_or_insert_with(|| "paraboloid".into())
                .clone();
            let factory = generic_levels().get(&name)?;
            let args = GenericLevelArgs {
                offset: *sec.offset.get_or_insert(1.0),
                curvature: *sec.curvature.get_or_insert(0.0),
            };
            let c = need(&sec.c, "level.c")?;
            let mut spec = LevelSpec::generic(factory(&args), c);
            spec.generic_time_axis = family != OperatorFamily::Elliptic;
            spec
        }
    };
    let spec = match sec.epsilon {
        Some(e) => spec.with_epsilon(e),
        None => spec,
    };
    spec.validate()
        .map_err(|e| Error::schema("level", e.to_string()))?;
    Ok(spec)
}

fn build_operator(
    sec: &mut OperatorSection,
    family: OperatorFamily,
    dim: usize,
) -> Result<QuasilinearOperator> {
    let time = family != OperatorFamily::Elliptic;
    let lower_name = sec.lower.get_or_insert_with(|| "zero".into()).clone();
    let factory = lower_order_terms().get(&lower_name)?;
    let mut args = LowerOrderArgs {
        source: None,
        coefficient: *sec.coefficient.get_or_insert(1.0),
    };
    if let Some(src) = &sec.source {
        args.source = Some(Expression::parse("operator.source", src, dim, time)?.to_fn());
    }
    let lower = factory(&args);
    let spatial = if time { dim - 1 } else { dim };
    let op = match family {
        OperatorFamily::Elliptic | OperatorFamily::Parabolic => {
            let coeffs = match &sec.matrix {
                None => MatrixCoeff::Identity,
                Some(rows) => {
                    if rows.len() != spatial || rows.iter().any(|r| r.len() != spatial) {
                        return Err(Error::schema(
                            "operator.matrix",
                            format!("expected {spatial}×{spatial} entries"),
                        ));
                    }
                    let exprs: Vec<Expression> = rows
                        .iter()
                        .enumerate()
                        .flat_map(|(i, r)| r.iter().enumerate().map(move |(j, s)| (i, j, s)))
                        .map(|(i, j, s)| {
                            Expression::parse(&format!("operator.matrix[{i}][{j}]"), s, dim, time)
                        })
                        .collect::<Result<_>>()?;
                    MatrixCoeff::Variable(Arc::new(move |p: &[f64], out: &mut [f64]| {
                        for (o, e) in out.iter_mut().zip(&exprs) {
                            *o = e.eval(p);
                        }
                    }))
                }
            };
            if family == OperatorFamily::Elliptic {
                QuasilinearOperator::elliptic(coeffs, lower)
            } else {
                QuasilinearOperator::parabolic(coeffs, lower)
            }
        }
        OperatorFamily::Hyperbolic => {
            if sec.matrix.is_some() {
                return Err(Error::schema(
                    "operator.matrix",
                    "hyperbolic operators take wave_speed instead",
                ));
            }
            let a = match &sec.wave_speed {
                None => ScalarCoeff::Constant(1.0),
                Some(s) => ScalarCoeff::Variable(
                    Expression::parse("operator.wave_speed", s, dim, time)?.to_fn(),
                ),
            };
            QuasilinearOperator::hyperbolic(a, lower)
        }
    };
    Ok(match sec.bounds {
        Some([lo, hi]) => op.with_bounds(lo, hi),
        None => op,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(text: &str) -> Result<ProblemSetup> {
        parse_problem(text, Path::new("."))
    }

    #[test]
    fn minimal_elliptic_config_fills_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let grid = "[grid]\nbounds = [[0.0, 0.3], [-0.6, 0.6]]\nresolution = [17, 17]\n";
        let level = "[level]\na = 0.1\nc = 0.4\n";
        // trace on the same mask, produced from the harmonic case
        let donor = setup(&format!(
            "[problem]\ncase = \"ELL2D-HARMONIC\"\n{grid}{level}nu = 2.0\n"
        ))
        .unwrap();
        super::super::data::write_trace_csv(
            &dir.path().join("g.csv"),
            &donor.mask,
            &donor.geometry,
            &donor.trace,
        )
        .unwrap();
        let text =
            format!("[problem]\nfamily = \"elliptic\"\n{grid}{level}[data]\npath = \"g.csv\"\n");
        let s = parse_problem(&text, dir.path()).unwrap();
        assert_eq!(s.config.level.nu, Some(2.0));
        assert_eq!(s.config.level.epsilon, Some(donor.mask.epsilon()));
        assert_eq!(s.config.functional.order, Some(3));
        assert_eq!(s.config.data.source, Some(DataSource::File));
        assert_eq!(s.trace, donor.trace);
        assert!(s.exact.is_none());
        let err = parse_problem(&text, &dir.path().join("elsewhere")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }), "{err}");
    }

    #[test]
    fn beta_out_of_range_is_clamped() {
        let s =
            setup("[problem]\ncase = \"ELL1D-CUBIC\"\n[functional]\nbeta = 2.0\nlambda = 1.0\n")
                .unwrap();
        let f = s.functional(1.0).unwrap();
        let clamp = f.beta_clamp().expect("clamp recorded");
        assert_eq!(clamp.requested, 2.0);
        assert!(f.beta() < 1.0 && f.beta() > (-s.mask.epsilon()).exp());
    }

    #[test]
    fn unknown_ids_are_named() {
        let err = setup("[problem]\ncase = \"ELL9D\"\n").unwrap_err();
        assert!(err.to_string().contains("ELL9D"), "{err}");
        let err = setup(
            "[problem]\nfamily = \"elliptic\"\n[grid]\nbounds=[[0.0,0.3]]\nresolution=[33]\n[level]\na=0.1\nc=0.4\n[operator]\nlower = \"quartic\"\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("quartic"), "{err}");
    }

    #[test]
    fn schema_errors_carry_paths() {
        let err = setup("[problem]\ncase = \"ELL1D-CUBIC\"\n[level]\nnu = \"two\"\n").unwrap_err();
        assert!(
            matches!(err, Error::Schema { ref path, .. } if path == "level.nu"),
            "{err}"
        );
        let err =
            setup("[problem]\ncase = \"ELL1D-CUBIC\"\n[optimizer]\nmax_iter = 5\n").unwrap_err();
        assert!(
            matches!(err, Error::Schema { ref path, .. } if path.starts_with("optimizer")),
            "{err}"
        );
        let err = setup("[problem\ncase = 1").unwrap_err();
        assert!(
            matches!(err, Error::Parse(ref m) if m.contains("line 1")),
            "{err}"
        );
    }

    #[test]
    fn inconsistent_family_rejected() {
        let err = setup("[problem]\ncase = \"HYP1D-QUAD\"\nfamily = \"elliptic\"\n").unwrap_err();
        assert!(
            matches!(err, Error::Schema { ref path, .. } if path == "problem.family"),
            "{err}"
        );
        let err = setup("[problem]\ncase = \"ELL1D-CUBIC\"\n[level]\nfamily = \"hyperbolic\"\n")
            .unwrap_err();
        assert!(
            matches!(err, Error::Schema { ref path, .. } if path == "level.family"),
            "{err}"
        );
    }

    #[test]
    fn expression_operator_matches_catalog_case() {
        let text = r#"
[problem]
family = "elliptic"
[grid]
bounds = [[0.0, 0.16]]
resolution = [65]
[level]
a = 0.3
c = 0.45
[operator]
lower = "cubic"
source = "(x0^2 + 1.0)^3 - 2.0"
"#;
        let cfg = parse_config(text).unwrap();
        let mut with_case = cfg.clone();
        with_case.operator = OperatorSection::default();
        with_case.problem.case = Some("ELL1D-CUBIC".into());
        let s = ProblemSetup::from_config(with_case, Path::new(".")).unwrap();
        let u = s.exact.clone().unwrap();
        let r = crate::operator::apply_operator(&s.discrete, &u).unwrap();
        assert!(r.max_abs() < 1e-9);
        let op = build_operator(&mut cfg.operator.clone(), OperatorFamily::Elliptic, 1).unwrap();
        let disc = DiscreteOperator::new(op, s.mask.clone()).unwrap();
        let r2 = crate::operator::apply_operator(&disc, &u).unwrap();
        assert!(r2.max_abs() < 1e-9, "{}", r2.max_abs());
    }

    #[test]
    fn noise_is_applied_and_seeded() {
        let text = "[problem]\ncase = \"ELL2D-HARMONIC\"\n[data]\nnoise = 0.01\nseed = 7\n";
        let a = setup(text).unwrap();
        let b = setup(text).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_ne!(Some(&a.trace), a.clean_trace.as_ref());
        assert!(setup("[problem]\ncase = \"ELL2D-HARMONIC\"\n[data]\nnoise = -1.0\n").is_err());
    }

    #[test]
    fn expression_data_without_case() {
        let text = "[problem]\nfamily = \"elliptic\"\n[grid]\nbounds = [[0.0, 0.2], [-0.45, 0.45]]\n\
                    resolution = [17, 17]\n[level]\na = 0.2\nc = 0.4\n[data]\nexact = \"1.0 + x0 * x1\"\n";
        let s = setup(text).unwrap();
        assert_eq!(s.config.data.source, Some(DataSource::Manufactured));
        let u = s.exact.clone().unwrap();
        assert_eq!(s.data.max_violation(&u), 0.0);
        let missing =
            "[problem]\nfamily = \"elliptic\"\n[grid]\nbounds = [[0.0, 0.2]]\nresolution = [17]\n\
                       [level]\na = 0.2\nc = 0.4\n[data]\nsource = \"manufactured\"\n";
        assert!(
            matches!(setup(missing), Err(Error::Schema { ref path, .. }) if path == "data.source")
        );
    }
}
