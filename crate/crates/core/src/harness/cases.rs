//! Manufactured solutions: closed-form u* with the source chosen so that
//! A(u*) = 0.

use std::sync::{Arc, OnceLock};

use crate::level::LevelSpec;
use crate::operator::lower::{Cubic, Sine, Zero};
use crate::operator::{MatrixCoeff, OperatorFamily, QuasilinearOperator, ScalarCoeff, SourceFn};
use crate::registry::Registry;

pub trait ManufacturedCase: Send + Sync {
    fn id(&self) -> &'static str;
    fn family(&self) -> OperatorFamily;
    fn exact(&self, p: &[f64]) -> f64;
    fn operator(&self) -> QuasilinearOperator;
    /// Box bounds and node counts per axis.
    fn default_grid(&self) -> (Vec<(f64, f64)>, Vec<usize>);
    fn default_level(&self) -> LevelSpec;
}

impl std::fmt::Debug for dyn ManufacturedCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ManufacturedCase({})", self.id())
    }
}

pub type CaseFactory = fn() -> Arc<dyn ManufacturedCase>;

pub fn manufactured_cases() -> &'static Registry<CaseFactory> {
    static REG: OnceLock<Registry<CaseFactory>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut reg: Registry<CaseFactory> = Registry::new("manufactured case");
        reg.register("ELL1D-CUBIC", || Arc::new(Ell1dCubic));
        reg.register("ELL2D-HARMONIC", || Arc::new(Ell2dHarmonic));
        reg.register("ELL2D-CUBIC", || Arc::new(Ell2dCubic));
        reg.register("PAR1D-CUBIC", || Arc::new(Par1dCubic));
        reg.register("HYP1D-QUAD", || Arc::new(Hyp1dQuad));
        reg.register("HYP1D-SINE", || Arc::new(Hyp1dSine));
        reg
    })
}

/// u'' − u³ + q on x ∈ (0, 0.16), u* = x² + 1.
pub struct Ell1dCubic;

impl ManufacturedCase for Ell1dCubic {
    fn id(&self) -> &'static str {
        "ELL1D-CUBIC"
    }
    fn family(&self) -> OperatorFamily {
        OperatorFamily::Elliptic
    }
    fn exact(&self, p: &[f64]) -> f64 {
        p[0] * p[0] + 1.0
    }
    fn operator(&self) -> QuasilinearOperator {
        let q: SourceFn = Arc::new(|p: &[f64]| (p[0] * p[0] + 1.0).powi(3) - 2.0);
        QuasilinearOperator::elliptic(MatrixCoeff::Identity, Arc::new(Cubic { source: Some(q) }))
            .with_bounds(1.0, 1.0)
    }
    fn default_grid(&self) -> (Vec<(f64, f64)>, Vec<usize>) {
        (vec![(0.0, 0.16)], vec![65])
    }
    fn default_level(&self) -> LevelSpec {
        LevelSpec::elliptic(0.3, 0.45, 2.0, 1.0)
    }
}

/// Δu = 0, u* = e^{x₁} cos x₂.
pub struct Ell2dHarmonic;

impl ManufacturedCase for Ell2dHarmonic {
    fn id(&self) -> &'static str {
        "ELL2D-HARMONIC"
    }
    fn family(&self) -> OperatorFamily {
        OperatorFamily::Elliptic
    }
    fn exact(&self, p: &[f64]) -> f64 {
        p[0].exp() * p[1].cos()
    }
    fn operator(&self) -> QuasilinearOperator {
        QuasilinearOperator::elliptic(MatrixCoeff::Identity, Arc::new(Zero)).with_bounds(1.0, 1.0)
    }
    fn default_grid(&self) -> (Vec<(f64, f64)>, Vec<usize>) {
        (vec![(0.0, 0.3), (-0.6, 0.6)], vec![33, 33])
    }
    fn default_level(&self) -> LevelSpec {
        LevelSpec::elliptic(0.1, 0.4, 1.0, 1.0)
    }
}

fn ell2d_cubic_exact(p: &[f64]) -> f64 {
    1.0 + p[0] * p[0] + 0.5 * p[1] * p[1]
}

/// Δu − u³ + q, u* = 1 + x₁² + x₂²/2.
pub struct Ell2dCubic;

impl ManufacturedCase for Ell2dCubic {
    fn id(&self) -> &'static str {
        "ELL2D-CUBIC"
    }
    fn family(&self) -> OperatorFamily {
        OperatorFamily::Elliptic
    }
    fn exact(&self, p: &[f64]) -> f64 {
        ell2d_cubic_exact(p)
    }
    fn operator(&self) -> QuasilinearOperator {
        let q: SourceFn = Arc::new(|p: &[f64]| ell2d_cubic_exact(p).powi(3) - 3.0);
        QuasilinearOperator::elliptic(MatrixCoeff::Identity, Arc::new(Cubic { source: Some(q) }))
            .with_bounds(1.0, 1.0)
    }
    fn default_grid(&self) -> (Vec<(f64, f64)>, Vec<usize>) {
        (vec![(0.0, 0.2), (-0.45, 0.45)], vec![33, 33])
    }
    fn default_level(&self) -> LevelSpec {
        LevelSpec::elliptic(0.2, 0.4, 2.0, 1.0)
    }
}

fn par_exact(p: &[f64]) -> f64 {
    1.0 + p[0] * p[0] + p[1] * p[1]
}

/// u_t − u_xx − (−u³ + q), u* = 1 + x² + t².
pub struct Par1dCubic;

impl ManufacturedCase for Par1dCubic {
    fn id(&self) -> &'static str {
        "PAR1D-CUBIC"
    }
    fn family(&self) -> OperatorFamily {
        OperatorFamily::Parabolic
    }
    fn exact(&self, p: &[f64]) -> f64 {
        par_exact(p)
    }
    fn operator(&self) -> QuasilinearOperator {
        let q: SourceFn = Arc::new(|p: &[f64]| par_exact(p).powi(3) + 2.0 * p[1] - 2.0);
        QuasilinearOperator::parabolic(MatrixCoeff::Identity, Arc::new(Cubic { source: Some(q) }))
            .with_bounds(1.0, 1.0)
    }
    fn default_grid(&self) -> (Vec<(f64, f64)>, Vec<usize>) {
        (vec![(0.0, 0.3), (-1.0, 1.0)], vec![33, 33])
    }
    fn default_level(&self) -> LevelSpec {
        LevelSpec::parabolic(0.1, 0.4, 1.0, 1.0, 1.0)
    }
}

fn hyp_exact(p: &[f64]) -> f64 {
    p[0] * p[0] + p[1] * p[1]
}

/// u_tt − u_xx = 0, u* = x² + t².
pub struct Hyp1dQuad;

impl ManufacturedCase for Hyp1dQuad {
    fn id(&self) -> &'static str {
        "HYP1D-QUAD"
    }
    fn family(&self) -> OperatorFamily {
        OperatorFamily::Hyperbolic
    }
    fn exact(&self, p: &[f64]) -> f64 {
        hyp_exact(p)
    }
    fn operator(&self) -> QuasilinearOperator {
        QuasilinearOperator::hyperbolic(ScalarCoeff::Constant(1.0), Arc::new(Zero))
            .with_bounds(1.0, 1.0)
    }
    fn default_grid(&self) -> (Vec<(f64, f64)>, Vec<usize>) {
        (vec![(0.0, 1.0), (-1.0, 1.0)], vec![33, 33])
    }
    fn default_level(&self) -> LevelSpec {
        LevelSpec::hyperbolic(vec![0.5], 0.25, 0.1, 1.0)
    }
}

/// u_tt − u_xx − (sin u + q), u* = x² + t².
pub struct Hyp1dSine;

impl ManufacturedCase for Hyp1dSine {
    fn id(&self) -> &'static str {
        "HYP1D-SINE"
    }
    fn family(&self) -> OperatorFamily {
        OperatorFamily::Hyperbolic
    }
    fn exact(&self, p: &[f64]) -> f64 {
        hyp_exact(p)
    }
    fn operator(&self) -> QuasilinearOperator {
        let q: SourceFn = Arc::new(|p: &[f64]| -hyp_exact(p).sin());
        QuasilinearOperator::hyperbolic(
            ScalarCoeff::Constant(1.0),
            Arc::new(Sine { source: Some(q) }),
        )
        .with_bounds(1.0, 1.0)
    }
    fn default_grid(&self) -> (Vec<(f64, f64)>, Vec<usize>) {
        Hyp1dQuad.default_grid()
    }
    fn default_level(&self) -> LevelSpec {
        Hyp1dQuad.default_level()
    }
}
