//! solve / certify / gradcheck / sweep drivers on a [`ProblemSetup`].

use std::time::Instant;

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::functional::{carleman_ratio, deep_nodes, BetaClamp, Functional};
use crate::mask::Label;
use crate::optimizer::{
    convexity_certificate, multi_start, normal_equations_solve, run, BallSampler, CauchyExtension,
    CertificateReport, MultiStartReport, RunReport,
};
use crate::sobolev::{Region, SobolevSpace};
use crate::weights::{weight_extrema, WeightExtrema};

use super::config::{ProblemSetup, SolveMethod};

fn job_rng(seed: u64, job: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(job as u64);
    rng
}

/// Relative errors ‖u − u*‖ / ‖u*‖ in one region; `None` where the region
/// admits no stencil of that order.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorNorms {
    pub region: &'static str,
    pub l2: Option<f64>,
    pub h1: Option<f64>,
    pub hk: Option<f64>,
}

pub fn error_norms(setup: &ProblemSetup, u: &Field) -> Result<Option<Vec<ErrorNorms>>> {
    let Some(exact) = &setup.exact else {
        return Ok(None);
    };
    let diff = u.sub(exact);
    let k = setup.space.order();
    let mut out = Vec::new();
    for (region, name) in [(Region::Full, "G_c"), (Region::Inner, "G_c+2eps")] {
        let rel = |order: usize| -> Result<Option<f64>> {
            match SobolevSpace::new(setup.mask.clone(), order, region) {
                Ok(s) => {
                    let den = s.norm_sq_values(exact.values()).sqrt();
                    Ok((den > 0.0).then(|| s.norm_sq_values(diff.values()).sqrt() / den))
                }
                Err(Error::EmptyDomain { .. } | Error::EmptyInner { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        };
        out.push(ErrorNorms {
            region: name,
            l2: rel(0)?,
            h1: rel(1)?,
            hk: rel(k)?,
        });
    }
    Ok(Some(out))
}

/// Minimum of λℓ over the mask against λθ on the level surface.
#[derive(Debug, Clone, Serialize)]
pub struct WeightMinimumCheck {
    pub lambda: f64,
    pub extrema: WeightExtrema,
    pub expected: f64,
    /// λ times the largest change of ℓ across one cell at the level surface.
    pub tolerance: f64,
    pub on_level_surface: bool,
    pub passed: bool,
}

pub fn weight_minimum_check(setup: &ProblemSetup, lambda: f64) -> Result<WeightMinimumCheck> {
    let weight = setup.weight(lambda)?;
    let extrema = weight_extrema(&weight, &setup.mask)?;
    let mask = &setup.mask;
    let grid = mask.grid();
    let level = mask.level();
    let mut cell: f64 = 0.0;
    for n in 0..grid.len() {
        if mask.label(n) != Label::XiBoundary {
            continue;
        }
        for a in 0..grid.dim() {
            for s in [-1, 1] {
                if let Some(q) = grid.shift(n, a, s) {
                    if level[q].is_finite() {
                        cell = cell.max((level[q] - level[n]).abs());
                    }
                }
            }
        }
    }
    let expected = lambda * mask.theta();
    let tolerance = lambda * cell;
    let on_level_surface = extrema.argmin_label == Label::XiBoundary;
    let passed = on_level_surface && (extrema.min - expected).abs() <= tolerance;
    Ok(WeightMinimumCheck {
        lambda,
        extrema,
        expected,
        tolerance,
        on_level_surface,
        passed,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveOutcome {
    pub lambda: f64,
    pub beta: f64,
    pub beta_clamp: Option<BetaClamp>,
    pub method: SolveMethod,
    pub final_value: f64,
    pub constraint_violation: f64,
    pub weight: WeightExtrema,
    pub run: Option<RunReport>,
    pub errors: Option<Vec<ErrorNorms>>,
    #[serde(skip)]
    pub field: Field,
}

impl SolveOutcome {
    pub fn converged(&self) -> bool {
        self.run.as_ref().is_none_or(|r| r.converged)
    }
}

/// Start of every run: the Cauchy data extended into the domain.
pub fn initial_guess(setup: &ProblemSetup) -> Field {
    CauchyExtension::build(&setup.mask, &setup.data)
}

pub fn solve(setup: &ProblemSetup, lambda: f64) -> Result<SolveOutcome> {
    let f = setup.functional(lambda)?;
    solve_with(setup, &f)
}

pub fn solve_with(setup: &ProblemSetup, f: &Functional) -> Result<SolveOutcome> {
    let start = initial_guess(setup);
    let method = setup.config.solve.method;
    let (field, run) = match method {
        SolveMethod::Gradient => {
            let r = run(f, &start, &setup.config.optimizer)?;
            (r.final_field.clone(), Some(r))
        }
        SolveMethod::NormalEquations => (normal_equations_solve(f, &start)?, None),
    };
    let errors = error_norms(setup, &field)?;
    Ok(SolveOutcome {
        lambda: f.weight().lambda(),
        beta: f.beta(),
        beta_clamp: f.beta_clamp(),
        method,
        final_value: f.evaluate(&field)?,
        constraint_violation: f.cauchy_data().max_violation(&field),
        weight: weight_extrema(f.weight(), &setup.mask)?,
        run,
        errors,
        field,
    })
}

/// Independent solves over a λ grid.
pub fn sweep(setup: &ProblemSetup, lambdas: &[f64]) -> Result<Vec<SolveOutcome>> {
    if lambdas.is_empty() {
        return Err(Error::InvalidArgument(
            "sweep needs at least one lambda".into(),
        ));
    }
    lambdas.par_iter().map(|&l| solve(setup, l)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateRow {
    pub lambda: f64,
    pub beta: f64,
    pub failures: usize,
    pub samples: usize,
    pub min_margin: f64,
    pub min_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MultiStartOutcome {
    pub lambda: f64,
    pub radius: f64,
    pub report: MultiStartReport,
    /// Largest pairwise final distance divided by R.
    pub relative_spread: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CarlemanRow {
    pub lambda: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CarlemanOutcome {
    pub bumps: usize,
    pub rows: Vec<CarlemanRow>,
    pub floor: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CertifyOutcome {
    pub table: Vec<CertificateRow>,
    pub failures_non_increasing: bool,
    pub first_passing_lambda: Option<f64>,
    pub certificates: Vec<CertificateReport>,
    pub multi_start: Option<MultiStartOutcome>,
    pub carleman: Option<CarlemanOutcome>,
}

impl CertifyOutcome {
    pub fn passed(&self) -> bool {
        self.first_passing_lambda.is_some()
            && self
                .multi_start
                .as_ref()
                .is_none_or(|m| m.report.all_converged)
    }
}

pub fn sampler_for(setup: &ProblemSetup, radius: f64) -> Result<BallSampler> {
    BallSampler::new(setup.space.clone(), initial_guess(setup), radius)
}

pub fn certify(setup: &ProblemSetup) -> Result<CertifyOutcome> {
    let cert = &setup.config.certificate;
    certify_lambdas(setup, &cert.lambdas)
}

pub fn certify_lambdas(setup: &ProblemSetup, lambdas: &[f64]) -> Result<CertifyOutcome> {
    let cert = &setup.config.certificate;
    if lambdas.is_empty() {
        return Err(Error::InvalidArgument(
            "certificate sweep needs at least one lambda".into(),
        ));
    }
    let radius = cert.radius.unwrap_or(setup.config.optimizer.radius);
    let sampler = sampler_for(setup, radius)?;
    let mut certificates = Vec::new();
    let mut first = None;
    for &lambda in lambdas {
        let clock = Instant::now();
        let f = setup.functional(lambda)?;
        let report = convexity_certificate(&f, &sampler, cert.samples, cert.seed)?;
        info!(
            "certificate lambda = {lambda}: {}/{} failures, min margin {:.3e} ({:.1}s)",
            report.failures,
            report.samples,
            report.min_margin,
            clock.elapsed().as_secs_f64()
        );
        if report.passed() && first.is_none() {
            first = Some((lambda, f));
        }
        certificates.push(report);
    }
    let table: Vec<CertificateRow> = certificates
        .iter()
        .map(|c| CertificateRow {
            lambda: c.lambda,
            beta: c.beta,
            failures: c.failures,
            samples: c.samples,
            min_margin: c.min_margin,
            min_ratio: c.min_ratio,
        })
        .collect();
    let failures_non_increasing = table.windows(2).all(|w| w[1].failures <= w[0].failures);
    let first_passing_lambda = first.as_ref().map(|(l, _)| *l);
    let multi = match (&first, cert.multi_start) {
        (Some((lambda, f)), n) if n > 0 => {
            let report = multi_start(
                f,
                &sampler,
                n,
                cert.multi_start_seed,
                &setup.config.optimizer,
            )?;
            Some(MultiStartOutcome {
                lambda: *lambda,
                radius,
                relative_spread: report.max_pairwise_distance / radius,
                report,
            })
        }
        (None, n) if n > 0 => {
            warn!("no lambda passed the certificate; multi-start skipped");
            None
        }
        _ => None,
    };
    let carleman = if setup.config.carleman.lambdas.is_empty() {
        None
    } else {
        Some(carleman_sweep(setup)?)
    };
    Ok(CertifyOutcome {
        table,
        failures_non_increasing,
        first_passing_lambda,
        certificates,
        multi_start: multi,
        carleman,
    })
}

/// Smooth bumps (1 − |x − c|²/r²)³₊ with random centers at deep nodes.
pub fn random_bumps(
    setup: &ProblemSetup,
    count: usize,
    seed: u64,
    radius_cells: f64,
) -> Result<Vec<Field>> {
    let mask = &setup.mask;
    let grid = mask.grid();
    let deep = deep_nodes(mask);
    let h = grid.spacing().iter().fold(f64::INFINITY, |m, &s| m.min(s));
    let r = radius_cells * h;
    let reach: Vec<isize> = grid
        .spacing()
        .iter()
        .map(|&s| (r / s).ceil() as isize)
        .collect();
    let centers: Vec<usize> = (0..grid.len())
        .filter(|&n| deep[n] && support_is_deep(grid, &deep, n, &reach))
        .collect();
    if centers.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no deep node admits a bump of radius {radius_cells} cells"
        )));
    }
    Ok((0..count)
        .map(|i| {
            let mut rng = job_rng(seed, i);
            let jitter: f64 = rng.gen_range(0.6..1.0);
            let c = grid.point(centers[rng.gen_range(0..centers.len())]);
            let rr = jitter * r;
            Field::from_fn(grid.clone(), |p| {
                let d2: f64 = p.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
                (1.0 - d2 / (rr * rr)).max(0.0).powi(3)
            })
        })
        .collect())
}

/// Every node within `reach` cells of `n` along each axis is deep.
fn support_is_deep(grid: &crate::grid::Grid, deep: &[bool], n: usize, reach: &[isize]) -> bool {
    let d = grid.dim();
    let mut delta: Vec<isize> = reach.iter().map(|&r| -r).collect();
    loop {
        match grid.offset(n, &delta) {
            Some(q) if deep[q] => {}
            _ => return false,
        }
        let mut a = 0;
        loop {
            if a == d {
                return true;
            }
            delta[a] += 1;
            if delta[a] <= reach[a] {
                break;
            }
            delta[a] = -reach[a];
            a += 1;
        }
    }
}

pub fn carleman_sweep(setup: &ProblemSetup) -> Result<CarlemanOutcome> {
    let cfg = &setup.config.carleman;
    let bumps = random_bumps(setup, cfg.bumps, cfg.seed, cfg.radius_cells)?;
    let mut rows = Vec::new();
    for &lambda in &cfg.lambdas {
        let weight = setup.weight(lambda)?;
        let ratios: Vec<f64> = bumps
            .par_iter()
            .map(|b| carleman_ratio(&setup.discrete, &weight, b))
            .collect::<Result<_>>()?;
        rows.push(CarlemanRow {
            lambda,
            min_ratio: ratios.iter().copied().fold(f64::INFINITY, f64::min),
            max_ratio: ratios.iter().copied().fold(0.0, f64::max),
        });
    }
    let floor = rows
        .iter()
        .map(|r| r.min_ratio)
        .fold(f64::INFINITY, f64::min);
    Ok(CarlemanOutcome {
        bumps: cfg.bumps,
        rows,
        floor,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DirectionCheck {
    pub finite_difference: f64,
    pub analytic: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckOutcome {
    pub lambda: f64,
    pub delta: f64,
    pub directions: Vec<DirectionCheck>,
    pub max_gradient_error: f64,
    /// |⟨Lv, w⟩ − ⟨v, Lᵀw⟩| / (‖Lv‖ ‖w‖) per random pair.
    pub adjoint_errors: Vec<f64>,
    pub max_adjoint_error: f64,
}

/// Central differences of J along random zero-trace directions at a random
/// admissible point, and the duality of the linearization there.
pub fn gradcheck(setup: &ProblemSetup, lambda: f64) -> Result<GradcheckOutcome> {
    let cfg = &setup.config.gradcheck;
    let f = setup.functional(lambda)?;
    let base = initial_guess(setup);
    let radius = 2.0 * setup.space.norm(&base)? + 1.0;
    let sampler = BallSampler::new(setup.space.clone(), base, radius)?;
    let mut rng = job_rng(cfg.seed, 0);
    let u = sampler.sample(&mut rng);
    let grad = f.euclidean_gradient(&u)?;
    let delta = cfg.delta;
    let directions: Vec<DirectionCheck> = (0..cfg.directions)
        .map(|_| {
            let h = sampler.perturbation(&mut rng);
            let central = |d: f64| -> Result<f64> {
                let mut up = u.clone();
                up.axpy(d, &h);
                let mut um = u.clone();
                um.axpy(-d, &h);
                Ok((f.evaluate_difference(&u, &up)? - f.evaluate_difference(&u, &um)?) / (2.0 * d))
            };
            // step moves values by a fixed fraction of |u|; Richardson
            // extrapolation cancels the δ² term
            let step = delta * u.max_abs().max(1.0) / h.max_abs();
            let fd = (4.0 * central(0.5 * step)? - central(step)?) / 3.0;
            let analytic = grad.dot(&h);
            Ok(DirectionCheck {
                finite_difference: fd,
                analytic,
                relative_error: (fd - analytic).abs() / analytic.abs().max(f64::MIN_POSITIVE),
            })
        })
        .collect::<Result<_>>()?;

    let lin = setup.discrete.linearize(&u)?;
    let mask = &setup.mask;
    let nrows = setup.discrete.nrows();
    let adjoint_errors: Vec<f64> = (0..cfg.pairs)
        .map(|i| {
            let mut rng = job_rng(cfg.seed, i + 1);
            let mut v = vec![0.0; mask.grid().len()];
            for n in mask.masked_nodes() {
                v[n] = rng.sample(StandardNormal);
            }
            let w: Vec<f64> = (0..nrows).map(|_| rng.sample(StandardNormal)).collect();
            let lv = lin.forward_rows(&v);
            let ltw = lin.adjoint_rows(&w);
            let lhs: f64 = lv.iter().zip(&w).map(|(a, b)| a * b).sum();
            let rhs: f64 = v.iter().zip(&ltw).map(|(a, b)| a * b).sum();
            let scale = lv.iter().map(|x| x * x).sum::<f64>().sqrt()
                * w.iter().map(|x| x * x).sum::<f64>().sqrt();
            (lhs - rhs).abs() / scale.max(f64::MIN_POSITIVE)
        })
        .collect();
    Ok(GradcheckOutcome {
        lambda,
        delta,
        max_gradient_error: directions
            .iter()
            .map(|d| d.relative_error)
            .fold(0.0, f64::max),
        directions,
        max_adjoint_error: adjoint_errors.iter().copied().fold(0.0, f64::max),
        adjoint_errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::parse_problem;
    use std::path::Path;

    fn setup(text: &str) -> ProblemSetup {
        parse_problem(text, Path::new(".")).unwrap()
    }

    #[test]
    fn gradcheck_on_small_cubic() {
        let s = setup("[problem]\ncase = \"ELL1D-CUBIC\"\n[grid]\nresolution = [33]\n");
        let g = gradcheck(&s, 1.0).unwrap();
        assert!(g.max_gradient_error < 1e-6, "{g:?}");
        assert!(g.max_adjoint_error < 1e-12, "{}", g.max_adjoint_error);
    }

    #[test]
    fn exact_field_has_zero_error() {
        let s = setup("[problem]\ncase = \"ELL2D-HARMONIC\"\n[grid]\nresolution = [17, 17]\n");
        let e = error_norms(&s, s.exact.as_ref().unwrap()).unwrap().unwrap();
        assert_eq!(e.len(), 2);
        for r in e {
            assert_eq!(r.l2, Some(0.0));
        }
    }

    #[test]
    fn bumps_are_compact_and_deep() {
        let s = setup("[problem]\ncase = \"ELL2D-HARMONIC\"\n");
        let deep = deep_nodes(&s.mask);
        let bumps = random_bumps(&s, 5, 1, 3.0).unwrap();
        for b in &bumps {
            assert!(b.max_abs() > 0.0);
            for (n, v) in b.values().iter().enumerate() {
                assert!(*v == 0.0 || deep[n]);
            }
        }
        assert_ne!(bumps[0].values(), bumps[1].values());
    }
}
