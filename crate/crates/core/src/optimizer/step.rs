//! Step-size rules for u ← u − γ d.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::functional::Functional;
use crate::registry::Registry;

pub struct StepContext<'a> {
    pub functional: &'a Functional,
    pub iteration: usize,
    pub u: &'a Field,
    pub value: f64,
    pub direction: &'a Field,
    /// ⟨∇J, d⟩ > 0
    pub slope: f64,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub next: Field,
    /// J(next) − J(u)
    pub change: f64,
    pub gamma: f64,
    pub reductions: usize,
}

/// Outcome when no acceptable step exists because the predicted decrease
/// is below the rounding level of J.
#[derive(Debug, Clone, Copy)]
pub struct Stalled;

pub trait StepRule: Send {
    fn name(&self) -> &str;
    fn step(&mut self, ctx: &StepContext) -> Result<std::result::Result<StepOutcome, Stalled>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StepMode {
    Fixed {
        gamma: f64,
    },
    Backtracking {
        #[serde(default = "default_armijo")]
        armijo_c: f64,
        #[serde(default = "default_shrink")]
        shrink: f64,
        #[serde(default = "default_initial")]
        initial: f64,
        #[serde(default = "default_reductions")]
        max_reductions: usize,
    },
}

fn default_armijo() -> f64 {
    1e-4
}

fn default_shrink() -> f64 {
    0.5
}

fn default_initial() -> f64 {
    1.0
}

fn default_reductions() -> usize {
    60
}

impl Default for StepMode {
    fn default() -> Self {
        StepMode::Backtracking {
            armijo_c: default_armijo(),
            shrink: default_shrink(),
            initial: default_initial(),
            max_reductions: default_reductions(),
        }
    }
}

impl StepMode {
    pub fn name(&self) -> &'static str {
        match self {
            StepMode::Fixed { .. } => "fixed",
            StepMode::Backtracking { .. } => "backtracking",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            StepMode::Fixed { gamma } if !(gamma > 0.0 && gamma < 1.0) => Err(Error::InvalidArgument(
                format!("fixed step gamma = {gamma} must lie in (0, 1)"),
            )),
            StepMode::Backtracking {
                armijo_c,
                shrink,
                initial,
                ..
            } if !(armijo_c > 0.0 && armijo_c < 1.0 && shrink > 0.0 && shrink < 1.0 && initial > 0.0) => {
                Err(Error::InvalidArgument(format!(
                    "backtracking needs armijo_c, shrink in (0, 1) and initial > 0; got {armijo_c}, {shrink}, {initial}"
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn build(&self) -> Result<Box<dyn StepRule>> {
        self.validate()?;
        let factory = step_rules().get(self.name())?;
        Ok(factory(self))
    }
}

pub type StepFactory = fn(&StepMode) -> Box<dyn StepRule>;

pub fn step_rules() -> &'static Registry<StepFactory> {
    static REG: OnceLock<Registry<StepFactory>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut reg: Registry<StepFactory> = Registry::new("step rule");
        reg.register("fixed", |m| match *m {
            StepMode::Fixed { gamma } => Box::new(FixedStep { gamma }),
            _ => unreachable!("registry keyed by mode name"),
        });
        reg.register("backtracking", |m| match *m {
            StepMode::Backtracking {
                armijo_c,
                shrink,
                initial,
                max_reductions,
            } => Box::new(Backtracking {
                armijo_c,
                shrink,
                max_reductions,
                last: initial,
                cap: initial,
            }),
            _ => unreachable!("registry keyed by mode name"),
        });
        reg
    })
}

fn trial(ctx: &StepContext, gamma: f64) -> Result<(Field, f64)> {
    let mut next = ctx.u.clone();
    next.axpy(-gamma, ctx.direction);
    let change = ctx.functional.evaluate_difference(ctx.u, &next)?;
    Ok((next, change))
}

/// Rounding level of a change in J.
fn noise_floor(value: f64) -> f64 {
    64.0 * f64::EPSILON * value.abs()
}

pub struct FixedStep {
    gamma: f64,
}

impl StepRule for FixedStep {
    fn name(&self) -> &str {
        "fixed"
    }

    fn step(&mut self, ctx: &StepContext) -> Result<std::result::Result<StepOutcome, Stalled>> {
        let (next, change) = trial(ctx, self.gamma)?;
        if change > noise_floor(ctx.value) {
            return Err(Error::Divergence {
                iteration: ctx.iteration,
                previous: ctx.value,
                current: ctx.value + change,
            });
        }
        Ok(Ok(StepOutcome {
            next,
            change,
            gamma: self.gamma,
            reductions: 0,
        }))
    }
}

/// Armijo backtracking. Each search starts from twice the previously
/// accepted step, capped at the configured initial step.
pub struct Backtracking {
    armijo_c: f64,
    shrink: f64,
    max_reductions: usize,
    last: f64,
    cap: f64,
}

impl StepRule for Backtracking {
    fn name(&self) -> &str {
        "backtracking"
    }

    fn step(&mut self, ctx: &StepContext) -> Result<std::result::Result<StepOutcome, Stalled>> {
        let mut gamma = (2.0 * self.last).min(self.cap);
        for reductions in 0..=self.max_reductions {
            let (next, change) = trial(ctx, gamma)?;
            if change <= -self.armijo_c * gamma * ctx.slope {
                self.last = gamma;
                return Ok(Ok(StepOutcome {
                    next,
                    change,
                    gamma,
                    reductions,
                }));
            }
            if gamma * ctx.slope < noise_floor(ctx.value) {
                return Ok(Err(Stalled));
            }
            gamma *= self.shrink;
        }
        Err(Error::LineSearchFailed {
            iteration: ctx.iteration,
            halvings: self.max_reductions,
        })
    }
}
