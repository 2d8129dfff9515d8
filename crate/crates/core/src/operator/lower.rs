//! Lower-order nonlinearity A₁(p, ∇u, u) with analytic first partials.

use std::fmt;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::registry::Registry;

pub type SourceFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A₁ and its partial derivatives. `grad` is the spatial gradient of u.
pub trait LowerOrderTerm: Send + Sync {
    fn name(&self) -> &str;
    fn value(&self, p: &[f64], grad: &[f64], u: f64) -> f64;
    fn partial_u(&self, p: &[f64], grad: &[f64], u: f64) -> f64;
    fn partial_grad(&self, p: &[f64], grad: &[f64], u: f64, out: &mut [f64]);

    /// True when A₁ vanishes identically, making the operator linear.
    fn is_zero(&self) -> bool {
        false
    }

    /// True when A₁ does not depend on u or ∇u.
    fn is_affine(&self) -> bool {
        self.is_zero()
    }
}

impl fmt::Debug for dyn LowerOrderTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LowerOrderTerm({})", self.name())
    }
}

#[derive(Clone, Default)]
pub struct LowerOrderArgs {
    pub source: Option<SourceFn>,
    pub coefficient: f64,
}

impl LowerOrderArgs {
    pub fn with_source(source: SourceFn) -> Self {
        Self {
            source: Some(source),
            coefficient: 1.0,
        }
    }
}

pub type LowerFactory = fn(&LowerOrderArgs) -> Arc<dyn LowerOrderTerm>;

fn eval_source(source: &Option<SourceFn>, p: &[f64]) -> f64 {
    source.as_ref().map_or(0.0, |q| q(p))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Zero;

impl LowerOrderTerm for Zero {
    fn name(&self) -> &str {
        "zero"
    }
    fn value(&self, _: &[f64], _: &[f64], _: f64) -> f64 {
        0.0
    }
    fn partial_u(&self, _: &[f64], _: &[f64], _: f64) -> f64 {
        0.0
    }
    fn partial_grad(&self, _: &[f64], _: &[f64], _: f64, out: &mut [f64]) {
        out.fill(0.0);
    }
    fn is_zero(&self) -> bool {
        true
    }
}

/// Source-only term A₁ = q(p); linear operator with a forcing.
#[derive(Clone)]
pub struct Forcing {
    pub source: Option<SourceFn>,
}

impl LowerOrderTerm for Forcing {
    fn name(&self) -> &str {
        "forcing"
    }
    fn value(&self, p: &[f64], _: &[f64], _: f64) -> f64 {
        eval_source(&self.source, p)
    }
    fn partial_u(&self, _: &[f64], _: &[f64], _: f64) -> f64 {
        0.0
    }
    fn partial_grad(&self, _: &[f64], _: &[f64], _: f64, out: &mut [f64]) {
        out.fill(0.0);
    }
    fn is_affine(&self) -> bool {
        true
    }
}

/// A₁ = −u³ + q(p)
#[derive(Clone)]
pub struct Cubic {
    pub source: Option<SourceFn>,
}

impl LowerOrderTerm for Cubic {
    fn name(&self) -> &str {
        "cubic"
    }
    fn value(&self, p: &[f64], _: &[f64], u: f64) -> f64 {
        -u * u * u + eval_source(&self.source, p)
    }
    fn partial_u(&self, _: &[f64], _: &[f64], u: f64) -> f64 {
        -3.0 * u * u
    }
    fn partial_grad(&self, _: &[f64], _: &[f64], _: f64, out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// A₁ = sin(u) + q(p)
#[derive(Clone)]
pub struct Sine {
    pub source: Option<SourceFn>,
}

impl LowerOrderTerm for Sine {
    fn name(&self) -> &str {
        "sine"
    }
    fn value(&self, p: &[f64], _: &[f64], u: f64) -> f64 {
        u.sin() + eval_source(&self.source, p)
    }
    fn partial_u(&self, _: &[f64], _: &[f64], u: f64) -> f64 {
        u.cos()
    }
    fn partial_grad(&self, _: &[f64], _: &[f64], _: f64, out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// A₁ = b·|∇u|² / (1 + |∇u|²) + q(p), bounded in the gradient.
#[derive(Clone)]
pub struct SaturatingGradient {
    pub b: f64,
    pub source: Option<SourceFn>,
}

impl LowerOrderTerm for SaturatingGradient {
    fn name(&self) -> &str {
        "saturating-gradient"
    }
    fn value(&self, p: &[f64], grad: &[f64], _: f64) -> f64 {
        let s: f64 = grad.iter().map(|g| g * g).sum();
        self.b * s / (1.0 + s) + eval_source(&self.source, p)
    }
    fn partial_u(&self, _: &[f64], _: &[f64], _: f64) -> f64 {
        0.0
    }
    fn partial_grad(&self, _: &[f64], grad: &[f64], _: f64, out: &mut [f64]) {
        let s: f64 = grad.iter().map(|g| g * g).sum();
        let scale = 2.0 * self.b / ((1.0 + s) * (1.0 + s));
        for (o, g) in out.iter_mut().zip(grad) {
            *o = scale * g;
        }
    }
}

pub fn lower_order_terms() -> &'static Registry<LowerFactory> {
    static REG: OnceLock<Registry<LowerFactory>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut reg: Registry<LowerFactory> = Registry::new("lower-order term");
        reg.register("zero", |_| Arc::new(Zero));
        reg.register("forcing", |a| {
            Arc::new(Forcing {
                source: a.source.clone(),
            })
        });
        reg.register("cubic", |a| {
            Arc::new(Cubic {
                source: a.source.clone(),
            })
        });
        reg.register("sine", |a| {
            Arc::new(Sine {
                source: a.source.clone(),
            })
        });
        reg.register("saturating-gradient", |a| {
            Arc::new(SaturatingGradient {
                b: a.coefficient,
                source: a.source.clone(),
            })
        });
        reg
    })
}

/// Compares the analytic partials of `term` with central differences at the
/// given sample states `(p, grad, u)`.
pub fn check_partials(
    term: &dyn LowerOrderTerm,
    samples: &[(Vec<f64>, Vec<f64>, f64)],
    tol: f64,
) -> Result<()> {
    let delta = 1e-6;
    for (p, grad, u) in samples {
        let scale = |v: f64| v.abs().max(1.0);
        let fd_u =
            (term.value(p, grad, u + delta) - term.value(p, grad, u - delta)) / (2.0 * delta);
        let an_u = term.partial_u(p, grad, *u);
        if (fd_u - an_u).abs() > tol * scale(an_u) {
            return Err(Error::OperatorCheck(format!(
                "{}: ∂A₁/∂u = {an_u} but finite differences give {fd_u} at u = {u}",
                term.name()
            )));
        }
        let mut an_g = vec![0.0; grad.len()];
        term.partial_grad(p, grad, *u, &mut an_g);
        for i in 0..grad.len() {
            let mut gp = grad.clone();
            let mut gm = grad.clone();
            gp[i] += delta;
            gm[i] -= delta;
            let fd = (term.value(p, &gp, *u) - term.value(p, &gm, *u)) / (2.0 * delta);
            if (fd - an_g[i]).abs() > tol * scale(an_g[i]) {
                return Err(Error::OperatorCheck(format!(
                    "{}: ∂A₁/∂u_x{} = {} but finite differences give {fd}",
                    term.name(),
                    i + 1,
                    an_g[i]
                )));
            }
        }
        if !term.value(p, grad, *u).is_finite() {
            return Err(Error::NonFinite(format!("{} value", term.name())));
        }
    }
    Ok(())
}
