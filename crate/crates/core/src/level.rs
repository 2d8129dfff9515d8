//! Level functions ℓ whose super-level sets carve the subdomains G_c out of
//! the computational box, and whose exponentials are the Carleman weights.

use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry::Registry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LevelFamily {
    Generic,
    Elliptic,
    Parabolic,
    Hyperbolic,
}

impl LevelFamily {
    pub fn is_time_dependent(self) -> bool {
        matches!(self, LevelFamily::Parabolic | LevelFamily::Hyperbolic)
    }
}

/// User- or catalog-supplied level function ξ for the generic family.
pub trait LevelFunction: Send + Sync {
    fn name(&self) -> &str;
    fn value(&self, point: &[f64]) -> f64;
}

impl fmt::Debug for dyn LevelFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LevelFunction({})", self.name())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GenericLevelArgs {
    pub offset: f64,
    pub curvature: f64,
}

impl Default for GenericLevelArgs {
    fn default() -> Self {
        Self {
            offset: 1.0,
            curvature: 0.0,
        }
    }
}

pub type LevelFactory = fn(&GenericLevelArgs) -> Arc<dyn LevelFunction>;

/// ξ(x) = offset − x₁ − curvature·|x̄|²: decreasing away from the face x₁ = 0.
#[derive(Debug, Clone)]
pub struct Paraboloid {
    pub offset: f64,
    pub curvature: f64,
}

impl LevelFunction for Paraboloid {
    fn name(&self) -> &str {
        if self.curvature == 0.0 {
            "plane"
        } else {
            "paraboloid"
        }
    }

    fn value(&self, p: &[f64]) -> f64 {
        let tail: f64 = p[1..].iter().map(|x| x * x).sum();
        self.offset - p[0] - self.curvature * tail
    }
}

pub fn generic_levels() -> &'static Registry<LevelFactory> {
    static REG: OnceLock<Registry<LevelFactory>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut reg: Registry<LevelFactory> = Registry::new("generic level function");
        reg.register("plane", |a| {
            Arc::new(Paraboloid {
                offset: a.offset,
                curvature: 0.0,
            })
        });
        reg.register("paraboloid", |a| {
            Arc::new(Paraboloid {
                offset: a.offset,
                curvature: a.curvature,
            })
        });
        reg
    })
}

/// Parameters of the level function ℓ and its threshold θ.
///
/// Elliptic: ℓ = ψ^(−ν) with ψ = x₁ + |x̄|²/X² + a, θ = c^(−ν).
/// Parabolic: as elliptic with ψ += t²/T².
/// Hyperbolic: ℓ = |x − x₀|² − η t², θ = c.
/// Generic: ℓ = ξ(p), θ = c.
#[derive(Clone)]
pub struct LevelSpec {
    pub family: LevelFamily,
    pub a: f64,
    pub c: f64,
    pub nu: f64,
    pub x_scale: f64,
    pub t_scale: f64,
    pub eta: f64,
    pub x0: Vec<f64>,
    pub epsilon: Option<f64>,
    pub generic: Option<Arc<dyn LevelFunction>>,
    /// Generic family only: whether the last grid axis is time.
    pub generic_time_axis: bool,
}

impl fmt::Debug for LevelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LevelSpec")
            .field("family", &self.family)
            .field("a", &self.a)
            .field("c", &self.c)
            .field("nu", &self.nu)
            .field("x_scale", &self.x_scale)
            .field("t_scale", &self.t_scale)
            .field("eta", &self.eta)
            .field("x0", &self.x0)
            .field("epsilon", &self.epsilon)
            .field(
                "generic",
                &self.generic.as_ref().map(|g| g.name().to_string()),
            )
            .finish()
    }
}

impl LevelSpec {
    pub fn elliptic(a: f64, c: f64, nu: f64, x_scale: f64) -> Self {
        Self {
            family: LevelFamily::Elliptic,
            a,
            c,
            nu,
            x_scale,
            t_scale: 1.0,
            eta: 0.0,
            x0: Vec::new(),
            epsilon: None,
            generic: None,
            generic_time_axis: false,
        }
    }

    pub fn parabolic(a: f64, c: f64, nu: f64, x_scale: f64, t_scale: f64) -> Self {
        Self {
            family: LevelFamily::Parabolic,
            t_scale,
            ..Self::elliptic(a, c, nu, x_scale)
        }
    }

    pub fn hyperbolic(x0: Vec<f64>, eta: f64, c: f64, t_scale: f64) -> Self {
        Self {
            family: LevelFamily::Hyperbolic,
            a: 0.0,
            c,
            nu: 1.0,
            x_scale: 1.0,
            t_scale,
            eta,
            x0,
            epsilon: None,
            generic: None,
            generic_time_axis: false,
        }
    }

    pub fn generic(func: Arc<dyn LevelFunction>, c: f64) -> Self {
        Self {
            family: LevelFamily::Generic,
            a: 0.0,
            c,
            nu: 1.0,
            x_scale: 1.0,
            t_scale: 1.0,
            eta: 0.0,
            x0: Vec::new(),
            epsilon: None,
            generic: Some(func),
            generic_time_axis: false,
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = Some(epsilon);
        self
    }

    pub fn time_dependent(&self) -> bool {
        match self.family {
            LevelFamily::Generic => self.generic_time_axis,
            f => f.is_time_dependent(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidLevel(m));
        if let Some(eps) = self.epsilon {
            if !(eps.is_finite() && eps > 0.0) {
                return bad(format!("epsilon = {eps} must be positive"));
            }
        }
        match self.family {
            LevelFamily::Elliptic | LevelFamily::Parabolic => {
                let open_half = |v: f64| v > 0.0 && v < 0.5;
                if !open_half(self.a) || !open_half(self.c) {
                    return bad(format!(
                        "a = {} and c = {} must lie in (0, 1/2)",
                        self.a, self.c
                    ));
                }
                if self.a >= self.c {
                    return bad(format!("a = {} must be below c = {}", self.a, self.c));
                }
                if !(self.nu >= 1.0) {
                    return bad(format!("nu = {} must be at least 1", self.nu));
                }
                if !(self.x_scale > 0.0) {
                    return bad(format!("X = {} must be positive", self.x_scale));
                }
                if self.family == LevelFamily::Parabolic && !(self.t_scale > 0.0) {
                    return bad(format!("T = {} must be positive", self.t_scale));
                }
            }
            LevelFamily::Hyperbolic => {
                if !(self.c > 0.0) {
                    return bad(format!("c = {} must be positive", self.c));
                }
                if !(self.eta > 0.0 && self.eta <= 1.0) {
                    return bad(format!("eta = {} must lie in (0, 1]", self.eta));
                }
                if self.x0.is_empty() {
                    return bad("hyperbolic focal point x0 is missing".into());
                }
                if !(self.t_scale > 0.0) {
                    return bad(format!("T = {} must be positive", self.t_scale));
                }
            }
            LevelFamily::Generic => {
                if self.generic.is_none() {
                    return bad("generic family needs a level function".into());
                }
                if !(self.c >= 0.0) {
                    return bad(format!("c = {} must be nonnegative", self.c));
                }
            }
        }
        Ok(())
    }

    /// Threshold θ: ℓ > θ defines G_c.
    pub fn threshold(&self) -> f64 {
        match self.family {
            LevelFamily::Elliptic | LevelFamily::Parabolic => self.c.powf(-self.nu),
            LevelFamily::Hyperbolic | LevelFamily::Generic => self.c,
        }
    }

    /// ψ for the elliptic/parabolic families.
    fn base(&self, p: &[f64]) -> f64 {
        let (spatial, t) = if self.family == LevelFamily::Parabolic {
            (&p[..p.len() - 1], Some(p[p.len() - 1]))
        } else {
            (p, None)
        };
        let tail: f64 = spatial[1..].iter().map(|x| x * x).sum();
        let mut psi = spatial[0] + tail / (self.x_scale * self.x_scale) + self.a;
        if let Some(t) = t {
            psi += t * t / (self.t_scale * self.t_scale);
        }
        psi
    }
}

/// Evaluates ℓ(p) for the given spec.
pub fn level_value(spec: &LevelSpec, point: &[f64]) -> Result<f64> {
    match spec.family {
        LevelFamily::Elliptic | LevelFamily::Parabolic => {
            let min_dim = if spec.family == LevelFamily::Parabolic {
                2
            } else {
                1
            };
            if point.len() < min_dim {
                return Err(Error::InvalidArgument(format!(
                    "{:?} level needs at least {min_dim} coordinates, got {}",
                    spec.family,
                    point.len()
                )));
            }
            let psi = spec.base(point);
            if !(psi > 0.0) {
                return Err(Error::NonpositiveBase {
                    base: psi,
                    point: point.to_vec(),
                });
            }
            Ok(psi.powf(-spec.nu))
        }
        LevelFamily::Hyperbolic => {
            let n = spec.x0.len();
            if point.len() != n + 1 {
                return Err(Error::InvalidArgument(format!(
                    "hyperbolic level needs {} coordinates, got {}",
                    n + 1,
                    point.len()
                )));
            }
            let r2: f64 = point[..n]
                .iter()
                .zip(&spec.x0)
                .map(|(x, x0)| (x - x0) * (x - x0))
                .sum();
            let t = point[n];
            Ok(r2 - spec.eta * t * t)
        }
        LevelFamily::Generic => {
            let f = spec.generic.as_ref().ok_or_else(|| {
                Error::InvalidLevel("generic family needs a level function".into())
            })?;
            Ok(f.value(point))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn elliptic_value_at_origin() {
        let spec = LevelSpec::elliptic(0.2, 0.4, 2.0, 1.0);
        let v = level_value(&spec, &[0.0, 0.0]).unwrap();
        assert!((v - 25.0).abs() < 1e-12);
        assert!((spec.threshold() - 6.25).abs() < 1e-12);
    }

    #[test]
    fn hyperbolic_value() {
        let spec = LevelSpec::hyperbolic(vec![0.5], 0.25, 0.05, 1.0);
        let v = level_value(&spec, &[0.9, 0.4]).unwrap();
        assert!((v - 0.12).abs() < 1e-12);
        assert_eq!(spec.threshold(), 0.05);
    }

    #[test]
    fn parabolic_includes_time() {
        let spec = LevelSpec::parabolic(0.2, 0.4, 1.0, 1.0, 2.0);
        // psi = 0.1 + 1/4 + 0.2
        let v = level_value(&spec, &[0.1, 1.0]).unwrap();
        assert!((v - 1.0 / 0.55).abs() < 1e-12);
    }

    #[test]
    fn nonpositive_base_guarded() {
        let spec = LevelSpec::elliptic(0.2, 0.4, 2.0, 1.0);
        assert!(matches!(
            level_value(&spec, &[-1.0, 0.0]),
            Err(Error::NonpositiveBase { .. })
        ));
    }

    #[test]
    fn validation_rules() {
        assert!(LevelSpec::elliptic(0.2, 0.4, 2.0, 1.0).validate().is_ok());
        assert!(LevelSpec::elliptic(0.4, 0.2, 2.0, 1.0).validate().is_err());
        assert!(LevelSpec::elliptic(0.2, 0.6, 2.0, 1.0).validate().is_err());
        assert!(LevelSpec::elliptic(0.2, 0.4, 0.5, 1.0).validate().is_err());
        assert!(LevelSpec::hyperbolic(vec![0.5], 1.5, 0.1, 1.0)
            .validate()
            .is_err());
        assert!(LevelSpec::hyperbolic(vec![], 0.5, 0.1, 1.0)
            .validate()
            .is_err());
        assert!(LevelSpec::elliptic(0.2, 0.4, 2.0, 1.0)
            .with_epsilon(-1.0)
            .validate()
            .is_err());
    }

    #[test]
    fn generic_registry_builds_paraboloid() {
        let f = (generic_levels().get("paraboloid").unwrap())(&GenericLevelArgs {
            offset: 1.0,
            curvature: 0.5,
        });
        assert!((f.value(&[0.25, 0.5]) - 0.625).abs() < 1e-15);
        assert!(generic_levels().get("sphere").is_err());
    }
}
