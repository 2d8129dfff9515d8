//! Gradient iteration u_{n+1} = u_n − γ J'(u_n) on the Cauchy-constrained set.

pub mod certificate;
pub mod direct;
pub mod sampling;
pub mod step;

use std::time::Instant;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::functional::{Functional, GradientMode};
use crate::sobolev::SobolevSpace;

pub use certificate::{convexity_certificate, multi_start, CertificateReport, MultiStartReport};
pub use direct::normal_equations_solve;
pub use sampling::{BallSampler, CauchyExtension};
pub use step::{step_rules, StepMode, StepRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusPolicy {
    Monitor,
    RejectStep,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    /// Stop when the H^k norm of the gradient drops below this.
    pub grad_tol: f64,
    pub step: StepMode,
    pub mode: GradientMode,
    pub radius: f64,
    pub radius_policy: RadiusPolicy,
    /// Most iterate snapshots kept for the contraction fit.
    pub snapshot_limit: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            grad_tol: 1e-8,
            step: StepMode::default(),
            mode: GradientMode::Sobolev,
            radius: 5.0,
            radius_policy: RadiusPolicy::Monitor,
            snapshot_limit: 512,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        self.step.validate()?;
        if !(self.grad_tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "grad_tol = {} must be positive",
                self.grad_tol
            )));
        }
        if !(self.radius > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "radius = {} must be positive",
                self.radius
            )));
        }
        if self.snapshot_limit < 16 {
            return Err(Error::InvalidArgument(
                "snapshot_limit must be at least 16".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradTol,
    MaxIters,
    Stalled,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct IterRecord {
    pub iter: usize,
    pub value: f64,
    pub grad_norm: f64,
    pub step: f64,
    pub norm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub history: Vec<IterRecord>,
    #[serde(skip)]
    pub final_field: Field,
    #[serde(skip)]
    pub snapshots: Vec<(usize, Field)>,
    pub termination: Termination,
    pub converged: bool,
    pub iterations: usize,
    pub q_hat: Option<f64>,
    pub monotone: bool,
    pub max_norm: f64,
    pub radius_exceeded: bool,
    pub wall_time: f64,
}

impl RunReport {
    pub fn final_value(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.value)
    }
}

/// Keeps at most `limit` snapshots by doubling the sampling stride.
struct Snapshots {
    stride: usize,
    limit: usize,
    items: Vec<(usize, Field)>,
}

impl Snapshots {
    fn new(limit: usize) -> Self {
        Self {
            stride: 1,
            limit,
            items: Vec::new(),
        }
    }

    fn offer(&mut self, iter: usize, u: &Field) {
        if !iter.is_multiple_of(self.stride) {
            return;
        }
        self.items.push((iter, u.clone()));
        if self.items.len() >= self.limit {
            self.stride *= 2;
            let stride = self.stride;
            self.items.retain(|(i, _)| i % stride == 0);
        }
    }

    fn finish(mut self, iter: usize, u: &Field) -> Vec<(usize, Field)> {
        if self.items.last().map(|(i, _)| *i) != Some(iter) {
            self.items.push((iter, u.clone()));
        }
        self.items
    }
}

/// Descent direction and its slope ⟨∇J, d⟩ with the H^k gradient norm.
fn direction(f: &Functional, u: &Field, mode: GradientMode) -> Result<(Field, f64, f64)> {
    match mode {
        GradientMode::Euclidean => {
            let g = f.euclidean_gradient(u)?;
            let slope = g.dot(&g);
            let norm = f.space().norm_sq_values(g.values()).sqrt();
            Ok((g, slope, norm))
        }
        GradientMode::Sobolev => {
            let (g, e, _) = f.sobolev_gradient(u)?;
            let slope = e.dot(&g);
            let norm = f.space().norm_sq_values(g.values()).sqrt();
            Ok((g, slope, norm))
        }
    }
}

pub fn run(f: &Functional, start: &Field, config: &OptimizerConfig) -> Result<RunReport> {
    config.validate()?;
    f.check_constraints(start)?;
    let clock = Instant::now();
    let mut rule = config.step.build()?;
    let space = f.space();
    let mut u = start.clone();
    let mut value = f.evaluate(&u)?;
    let mut history = Vec::new();
    let mut snaps = Snapshots::new(config.snapshot_limit);
    let mut monotone = true;
    let mut max_norm: f64 = 0.0;
    let mut radius_exceeded = false;
    let mut termination = Termination::MaxIters;
    let mut iter = 0;
    loop {
        let norm = space.norm_sq_values(u.values()).sqrt();
        max_norm = max_norm.max(norm);
        if norm > config.radius {
            if config.radius_policy == RadiusPolicy::RejectStep {
                return Err(Error::RadiusExit {
                    iteration: iter,
                    norm,
                    radius: config.radius,
                });
            }
            if !radius_exceeded {
                warn!(
                    "iterate {iter} left B(R): norm {norm:.4e} > {}",
                    config.radius
                );
            }
            radius_exceeded = true;
        }
        snaps.offer(iter, &u);
        let (d, slope, grad_norm) = direction(f, &u, config.mode)?;
        let mut record = IterRecord {
            iter,
            value,
            grad_norm,
            step: 0.0,
            norm,
        };
        if grad_norm < config.grad_tol {
            history.push(record);
            termination = Termination::GradTol;
            break;
        }
        if iter >= config.max_iters {
            history.push(record);
            break;
        }
        let ctx = step::StepContext {
            functional: f,
            iteration: iter,
            u: &u,
            value,
            direction: &d,
            slope,
        };
        match rule.step(&ctx)? {
            Ok(out) => {
                record.step = out.gamma;
                history.push(record);
                if out.change > 0.0 {
                    monotone = false;
                }
                u = out.next;
                value = f.evaluate(&u)?;
                debug!(
                    "iter {iter}: J = {value:.6e}, |g| = {grad_norm:.3e}, gamma = {:.3e}",
                    out.gamma
                );
            }
            Err(step::Stalled) => {
                history.push(record);
                termination = Termination::Stalled;
                break;
            }
        }
        iter += 1;
    }
    let snapshots = snaps.finish(iter, &u);
    let q_hat = if termination == Termination::GradTol {
        convergence_ratio_from(&snapshots, &u, space, true).ok()
    } else {
        None
    };
    let converged = termination == Termination::GradTol && q_hat.map_or(iter <= 1, |q| q < 1.0);
    Ok(RunReport {
        history,
        final_field: u,
        snapshots,
        termination,
        converged,
        iterations: iter,
        q_hat,
        monotone,
        max_norm,
        radius_exceeded,
        wall_time: clock.elapsed().as_secs_f64(),
    })
}

/// Least-squares contraction factor of a decaying error sequence.
///
/// Values below a rounding floor are dropped, and so is the final 20% when
/// the errors are measured against the last iterate. The fit uses the later
/// half of what remains.
pub fn fit_contraction(iters: &[usize], errors: &[f64], reference_is_final: bool) -> Result<f64> {
    let top = errors.iter().fold(0.0f64, |m, &e| m.max(e));
    let floor = 1e-11 * top;
    let mut pts: Vec<(f64, f64)> = iters
        .iter()
        .zip(errors)
        .filter(|(_, &e)| e > floor && e.is_finite())
        .map(|(&i, &e)| (i as f64, e.ln()))
        .collect();
    if reference_is_final {
        if let Some(last) = iters.last() {
            let cut = 0.8 * *last as f64;
            pts.retain(|p| p.0 <= cut);
        }
    }
    let tail = pts.split_off(pts.len() / 2);
    if tail.len() < 5 {
        return Err(Error::ShortTail {
            found: tail.len(),
            required: 5,
        });
    }
    let n = tail.len() as f64;
    let mx = tail.iter().map(|p| p.0).sum::<f64>() / n;
    let my = tail.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = tail.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = tail.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Ok((sxy / sxx).exp())
}

fn convergence_ratio_from(
    snapshots: &[(usize, Field)],
    reference: &Field,
    space: &SobolevSpace,
    reference_is_final: bool,
) -> Result<f64> {
    let (iters, errors): (Vec<usize>, Vec<f64>) = snapshots
        .iter()
        .map(|(i, u)| (*i, space.norm_sq_values(u.sub(reference).values()).sqrt()))
        .unzip();
    fit_contraction(&iters, &errors, reference_is_final)
}

/// q̂ against an external reference (e.g. an oracle minimizer).
pub fn convergence_ratio(
    report: &RunReport,
    reference: &Field,
    space: &SobolevSpace,
) -> Result<f64> {
    let is_final = reference.values() == report.final_field.values();
    convergence_ratio_from(&report.snapshots, reference, space, is_final)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_sequence_rate() {
        let iters: Vec<usize> = (0..40).collect();
        let errs: Vec<f64> = iters.iter().map(|&n| 3.0 * 0.5f64.powi(n as i32)).collect();
        let q = fit_contraction(&iters, &errs, false).unwrap();
        assert!((q - 0.5).abs() < 1e-6);
    }

    #[test]
    fn stalled_sequence_rate_is_one() {
        let iters: Vec<usize> = (0..40).collect();
        let errs = vec![0.1; 40];
        assert!((fit_contraction(&iters, &errs, false).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn short_tail_rejected() {
        let iters: Vec<usize> = (0..6).collect();
        let errs: Vec<f64> = iters.iter().map(|&n| 0.5f64.powi(n as i32)).collect();
        assert!(matches!(
            fit_contraction(&iters, &errs, false),
            Err(Error::ShortTail { .. })
        ));
    }

    #[test]
    fn snapshot_thinning_keeps_endpoints() {
        let grid = std::sync::Arc::new(crate::grid::build_grid(&[(0.0, 1.0)], &[3]).unwrap());
        let f = Field::zeros(grid);
        let mut s = Snapshots::new(16);
        for i in 0..100 {
            s.offer(i, &f);
        }
        let items = s.finish(100, &f);
        assert!(items.len() <= 17);
        assert_eq!(items.first().unwrap().0, 0);
        assert_eq!(items.last().unwrap().0, 100);
        let strides: Vec<usize> = items.windows(2).map(|w| w[1].0 - w[0].0).collect();
        assert!(strides[..strides.len() - 1]
            .iter()
            .all(|&s| s == strides[0]));
    }
}
