//! Weighted Tikhonov functional
//!
//! J(u) = Σ_rows A(u)² · W · q + β ‖u‖²_{H^k}
//!
//! with W = exp(2λ(ℓ − θ − ε)) and q the trapezoid weight, minimized over
//! fields matching the Cauchy data on the two constrained layers.

use std::sync::{Arc, OnceLock};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{chunked_sum, Field};
use crate::mask::DomainMask;
use crate::operator::DiscreteOperator;
use crate::riesz::{riesz_solvers, RieszOptions, RieszSolver, SolveStats};
use crate::sobolev::{Region, SobolevSpace};
use crate::weights::WeightSpec;

/// Values of u on the face layer and the first interior layer.
#[derive(Debug, Clone)]
pub struct CauchyData {
    nodes: Vec<usize>,
    values: Vec<f64>,
}

impl CauchyData {
    /// Reads the constrained values off a reference field.
    pub fn from_field(mask: &DomainMask, field: &Field) -> Result<Self> {
        field.ensure_grid(mask.grid())?;
        let nodes: Vec<usize> = mask.layer0().iter().chain(mask.layer1()).copied().collect();
        let values = nodes.iter().map(|&n| field.values()[n]).collect();
        Self::new(nodes, values)
    }

    /// Face values `g0` (in `layer0` order) and first-layer values `g1` (in
    /// `layer1` order).
    pub fn from_layers(mask: &DomainMask, g0: &[f64], g1: &[f64]) -> Result<Self> {
        if g0.len() != mask.layer0().len() || g1.len() != mask.layer1().len() {
            return Err(Error::InvalidArgument(format!(
                "Cauchy data has {} + {} values for layers of {} + {} nodes",
                g0.len(),
                g1.len(),
                mask.layer0().len(),
                mask.layer1().len()
            )));
        }
        let nodes = mask.layer0().iter().chain(mask.layer1()).copied().collect();
        Self::new(nodes, g0.iter().chain(g1).copied().collect())
    }

    fn new(nodes: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Cauchy data".into()));
        }
        Ok(Self { nodes, values })
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_violation(&self, u: &Field) -> f64 {
        self.nodes
            .iter()
            .zip(&self.values)
            .fold(0.0, |m, (&n, &g)| m.max((u.values()[n] - g).abs()))
    }

    pub fn impose(&self, u: &mut Field) {
        for (&n, &g) in self.nodes.iter().zip(&self.values) {
            u.values_mut()[n] = g;
        }
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.nodes.len() {
            return Err(Error::InvalidArgument("Cauchy data length mismatch".into()));
        }
        Self::new(self.nodes.clone(), values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientMode {
    Euclidean,
    Sobolev,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BetaClamp {
    pub requested: f64,
    pub used: f64,
    pub lower: f64,
}

/// β must lie in (e^(−λε), 1). Out-of-range requests are moved 1% of the
/// interval width inside it.
pub fn clamp_beta(beta: f64, lambda: f64, epsilon: f64) -> Result<(f64, Option<BetaClamp>)> {
    if !beta.is_finite() || beta <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "beta = {beta} must be positive"
        )));
    }
    let lo = (-lambda * epsilon).exp();
    let width = 1.0 - lo;
    let used = if beta <= lo {
        lo + 0.01 * width
    } else if beta >= 1.0 {
        1.0 - 0.01 * width
    } else {
        return Ok((beta, None));
    };
    warn!("beta = {beta} outside ({lo:.3e}, 1) for lambda = {lambda}; using {used:.6e}");
    Ok((
        used,
        Some(BetaClamp {
            requested: beta,
            used,
            lower: lo,
        }),
    ))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BregmanGap {
    pub gap: f64,
    /// ‖u₂ − u₁‖² in H¹ over ℓ > θ + 2ε
    pub h1_inner: f64,
    /// ‖u₂ − u₁‖² in H^k over the whole mask
    pub hk_full: f64,
    pub margin: f64,
}

impl BregmanGap {
    pub fn passes(&self) -> bool {
        self.margin >= 0.0
    }
}

pub struct Functional {
    disc: Arc<DiscreteOperator>,
    weight: WeightSpec,
    space: Arc<SobolevSpace>,
    row_weight: Vec<f64>,
    beta: f64,
    clamp: Option<BetaClamp>,
    data: CauchyData,
    constraint_tol: f64,
    riesz_name: String,
    riesz_opts: RieszOptions,
    riesz: OnceLock<Box<dyn RieszSolver>>,
    h1_inner: OnceLock<SobolevSpace>,
}

impl std::fmt::Debug for Functional {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Functional")
            .field("lambda", &self.weight.lambda())
            .field("beta", &self.beta)
            .field("riesz", &self.riesz_name)
            .finish()
    }
}

impl Functional {
    pub fn new(
        disc: Arc<DiscreteOperator>,
        weight: WeightSpec,
        space: Arc<SobolevSpace>,
        beta: f64,
        data: CauchyData,
    ) -> Result<Self> {
        let mask = disc.mask().clone();
        if !Arc::ptr_eq(&mask, space.mask()) && mask.grid() != space.mask().grid() {
            return Err(Error::GridMismatch);
        }
        let (beta, clamp) = clamp_beta(beta, weight.lambda(), weight.epsilon())?;
        let w = weight.on_mask(&mask)?;
        let row_weight = disc
            .rows()
            .iter()
            .map(|&n| w[n] * mask.quad_weight()[n])
            .collect();
        let constraint_tol = 1e-9 * data.max_abs().max(1.0);
        Ok(Self {
            disc,
            weight,
            space,
            row_weight,
            beta,
            clamp,
            data,
            constraint_tol,
            riesz_name: "cholesky".into(),
            riesz_opts: RieszOptions::default(),
            riesz: OnceLock::new(),
            h1_inner: OnceLock::new(),
        })
    }

    pub fn with_riesz(mut self, name: &str, opts: RieszOptions) -> Result<Self> {
        riesz_solvers().get(name)?;
        self.riesz_name = name.to_string();
        self.riesz_opts = opts;
        self.riesz = OnceLock::new();
        Ok(self)
    }

    pub fn discrete(&self) -> &Arc<DiscreteOperator> {
        &self.disc
    }

    pub fn mask(&self) -> &Arc<DomainMask> {
        self.disc.mask()
    }

    pub fn space(&self) -> &Arc<SobolevSpace> {
        &self.space
    }

    pub fn weight(&self) -> &WeightSpec {
        &self.weight
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn beta_clamp(&self) -> Option<BetaClamp> {
        self.clamp
    }

    pub fn cauchy_data(&self) -> &CauchyData {
        &self.data
    }

    /// W · q per residual row.
    pub fn row_weights(&self) -> &[f64] {
        &self.row_weight
    }

    pub fn riesz_solver(&self) -> Result<&dyn RieszSolver> {
        if self.riesz.get().is_none() {
            let factory = riesz_solvers().get(&self.riesz_name)?;
            let solver = factory(self.space.clone(), self.riesz_opts)?;
            let _ = self.riesz.set(solver);
        }
        Ok(self.riesz.get().expect("initialized above").as_ref())
    }

    pub fn check_constraints(&self, u: &Field) -> Result<()> {
        u.ensure_grid(self.mask().grid())?;
        let v = self.data.max_violation(u);
        if v > self.constraint_tol || v.is_nan() {
            return Err(Error::ConstraintViolation { max_violation: v });
        }
        Ok(())
    }

    fn weighted(&self, f: impl Fn(usize) -> f64 + Sync) -> f64 {
        chunked_sum(self.row_weight.len(), |r| self.row_weight[r] * f(r))
    }

    /// Σ_rows A(u)² · W · q
    pub fn data_term(&self, u: &Field) -> Result<f64> {
        let r = self.disc.residual_rows(u.values())?;
        self.finite(self.weighted(|i| r[i] * r[i]), "data term")
    }

    /// Σ_rows (A₀h)² · W · q
    pub fn principal_data_term(&self, h: &Field) -> f64 {
        let r = self.disc.principal_rows(h.values());
        self.weighted(|i| r[i] * r[i])
    }

    fn finite(&self, v: f64, what: &str) -> Result<f64> {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite(what.into()))
        }
    }

    pub fn evaluate(&self, u: &Field) -> Result<f64> {
        self.check_constraints(u)?;
        let reg = self.space.norm_sq_values(u.values());
        let j = self.data_term(u)? + self.beta * reg;
        self.finite(j, "functional value")
    }

    /// J(v) − J(u) without forming either value.
    pub fn evaluate_difference(&self, u: &Field, v: &Field) -> Result<f64> {
        self.check_constraints(u)?;
        self.check_constraints(v)?;
        let ru = self.disc.residual_rows(u.values())?;
        let dr = self.disc.residual_difference_rows(u.values(), v.values())?;
        let data = self.weighted(|i| dr[i] * (2.0 * ru[i] + dr[i]));
        let d = v.sub(u);
        let s = v.add(u);
        let reg = self.space.inner_product_values(d.values(), s.values());
        self.finite(data + self.beta * reg, "functional difference")
    }

    /// Euclidean gradient, restricted to the free nodes.
    pub fn euclidean_gradient(&self, u: &Field) -> Result<Field> {
        self.check_constraints(u)?;
        let r = self.disc.residual_rows(u.values())?;
        let w: Vec<f64> = r
            .iter()
            .zip(&self.row_weight)
            .map(|(ri, q)| 2.0 * q * ri)
            .collect();
        let lin = self.disc.linearize(u)?;
        let mut g = lin.adjoint_rows(&w);
        let gram_u = self.space.gram_apply_values(u.values());
        for (gi, gu) in g.iter_mut().zip(gram_u) {
            *gi += 2.0 * self.beta * gu;
        }
        let field = Field::from_values_unchecked(u.grid().clone(), g);
        if !field.is_finite() {
            return Err(Error::NonFinite("gradient".into()));
        }
        Ok(self.space.free_project(&field))
    }

    /// Riesz representative of the derivative in the H^k inner product,
    /// along with the Euclidean gradient it was computed from.
    pub fn sobolev_gradient(&self, u: &Field) -> Result<(Field, Field, SolveStats)> {
        let e = self.euclidean_gradient(u)?;
        let solver = self.riesz_solver()?;
        let b = self.space.gather_free(e.values());
        let (x, stats) = solver.solve(&b, None)?;
        let g = Field::from_values_unchecked(u.grid().clone(), self.space.scatter_free(&x));
        Ok((g, e, stats))
    }

    pub fn gradient(&self, u: &Field, mode: GradientMode) -> Result<Field> {
        match mode {
            GradientMode::Euclidean => self.euclidean_gradient(u),
            GradientMode::Sobolev => self.sobolev_gradient(u).map(|(g, _, _)| g),
        }
    }

    pub fn h1_inner_space(&self) -> Result<&SobolevSpace> {
        if self.h1_inner.get().is_none() {
            let s = SobolevSpace::new(self.mask().clone(), 1, Region::Inner)?;
            let _ = self.h1_inner.set(s);
        }
        Ok(self.h1_inner.get().expect("initialized above"))
    }

    /// J(u₂) − J(u₁) − J'(u₁)(u₂ − u₁), assembled pointwise as
    /// W q [(r₂ − r₁)² + 2 r₁ F] with F the linearization remainder, plus β‖h‖².
    pub fn bregman_gap(&self, u1: &Field, u2: &Field) -> Result<BregmanGap> {
        self.check_constraints(u1)?;
        self.check_constraints(u2)?;
        let h = u2.sub(u1);
        let r1 = self.disc.residual_rows(u1.values())?;
        let dr = self
            .disc
            .residual_difference_rows(u1.values(), u2.values())?;
        let lin = self.disc.linearize(u1)?;
        let rem = lin.remainder_rows(h.values())?;
        let data = self.weighted(|i| dr[i] * dr[i] + 2.0 * r1[i] * rem[i]);
        let hk_full = self.space.norm_sq_values(h.values());
        let h1_inner = self.h1_inner_space()?.norm_sq_values(h.values());
        let gap = self.finite(data + self.beta * hk_full, "Bregman gap")?;
        Ok(BregmanGap {
            gap,
            h1_inner,
            hk_full,
            margin: gap - 0.5 * self.beta * hk_full,
        })
    }
}

/// Axes entering |∇h|² in the Carleman ratio: all axes except time for the
/// parabolic family.
fn ratio_axes(disc: &DiscreteOperator) -> Vec<usize> {
    use crate::operator::OperatorFamily;
    let d = disc.mask().grid().dim();
    match disc.operator().family {
        OperatorFamily::Parabolic => (0..d - 1).collect(),
        _ => (0..d).collect(),
    }
}

/// Nodes where a compactly supported field may be nonzero: residual nodes
/// whose whole 3^d neighborhood consists of residual nodes.
pub fn deep_nodes(mask: &DomainMask) -> Vec<bool> {
    let grid = mask.grid();
    let offsets = grid.box_offsets();
    (0..grid.len())
        .map(|n| {
            mask.label(n).has_residual()
                && offsets.iter().all(|o| {
                    grid.offset(n, o)
                        .is_some_and(|nb| mask.label(nb).has_residual())
                })
        })
        .collect()
}

/// Σ (A₀h)² W q / Σ (λ|∇h|² + λ³h²) W q over the residual nodes.
pub fn carleman_ratio(disc: &DiscreteOperator, weight: &WeightSpec, h: &Field) -> Result<f64> {
    let mask = disc.mask();
    let grid = mask.grid();
    h.ensure_grid(grid)?;
    if h.max_abs() == 0.0 {
        return Err(Error::InvalidArgument(
            "Carleman ratio of the zero field".into(),
        ));
    }
    let deep = deep_nodes(mask);
    if let Some(n) = (0..grid.len()).find(|&n| h.values()[n] != 0.0 && !deep[n]) {
        return Err(Error::InvalidArgument(format!(
            "test field is not compactly supported: nonzero at node {n} ({:?})",
            mask.label(n)
        )));
    }
    let w = weight.on_mask(mask)?;
    let a0 = disc.principal_rows(h.values());
    let axes = ratio_axes(disc);
    let lambda = weight.lambda();
    let hv = h.values();
    let rows = disc.rows();
    let num = chunked_sum(rows.len(), |r| {
        let n = rows[r];
        a0[r] * a0[r] * w[n] * mask.quad_weight()[n]
    });
    let den = chunked_sum(rows.len(), |r| {
        let n = rows[r];
        let mut g2 = 0.0;
        for &a in &axes {
            let (p, m) = (grid.shift(n, a, 1), grid.shift(n, a, -1));
            if let (Some(p), Some(m)) = (p, m) {
                let d = (hv[p] - hv[m]) / (2.0 * grid.spacing()[a]);
                g2 += d * d;
            }
        }
        (lambda * g2 + lambda.powi(3) * hv[n] * hv[n]) * w[n] * mask.quad_weight()[n]
    });
    if !(num.is_finite() && den.is_finite()) || den <= 0.0 {
        return Err(Error::NonFinite("Carleman ratio".into()));
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::level::LevelSpec;
    use crate::mask::classify_nodes;
    use crate::operator::lower::{Cubic, Zero};
    use crate::operator::{MatrixCoeff, QuasilinearOperator, SourceFn};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(cubic: bool, lambda: f64, beta: f64) -> (Functional, Field) {
        setup_n(13, cubic, lambda, beta)
    }

    fn setup_n(n: usize, cubic: bool, lambda: f64, beta: f64) -> (Functional, Field) {
        let grid = Arc::new(build_grid(&[(0.0, 1.0), (-1.0, 1.0)], &[n, n]).unwrap());
        let level = LevelSpec::elliptic(0.05, 0.45, 1.0, 1.0).with_epsilon(0.1);
        let mask = Arc::new(classify_nodes(grid.clone(), &level).unwrap());
        let exact = |p: &[f64]| 1.0 + p[0] * p[0] + 0.5 * p[1] * p[1];
        let op = if cubic {
            let q: SourceFn = Arc::new(move |p: &[f64]| {
                let u = exact(p);
                u * u * u - 3.0
            });
            QuasilinearOperator::elliptic(
                MatrixCoeff::Identity,
                Arc::new(Cubic { source: Some(q) }),
            )
        } else {
            QuasilinearOperator::elliptic(MatrixCoeff::Identity, Arc::new(Zero))
        };
        let disc = Arc::new(DiscreteOperator::new(op, mask.clone()).unwrap());
        let weight = WeightSpec::for_mask(level, lambda, &mask).unwrap();
        let space = Arc::new(SobolevSpace::standard(mask.clone()).unwrap());
        let ustar = Field::from_fn(grid, exact);
        let data = CauchyData::from_field(&mask, &ustar).unwrap();
        (
            Functional::new(disc, weight, space, beta, data).unwrap(),
            ustar,
        )
    }

    fn perturb(f: &Functional, u: &Field, seed: u64, scale: f64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = u.grid().clone();
        let noise: Vec<f64> = (0..grid.len())
            .map(|_| scale * rng.gen_range(-1.0..1.0))
            .collect();
        let h = f
            .space()
            .free_project(&Field::from_values(grid, noise).unwrap());
        u.add(&h)
    }

    #[test]
    fn beta_clamping() {
        assert_eq!(clamp_beta(0.5, 2.0, 1.0).unwrap(), (0.5, None));
        let (b, c) = clamp_beta(1e-6, 2.0, 1.0).unwrap();
        let lo = (-2.0f64).exp();
        assert!((b - (lo + 0.01 * (1.0 - lo))).abs() < 1e-15);
        assert!(c.is_some());
        let (b, _) = clamp_beta(3.0, 2.0, 1.0).unwrap();
        assert!(b < 1.0 && b > lo);
        assert!(clamp_beta(-1.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn exact_solution_leaves_only_regularization() {
        let (f, ustar) = setup(true, 2.0, 0.5);
        let j = f.evaluate(&ustar).unwrap();
        let reg = f.beta() * f.space().norm(&ustar).unwrap().powi(2);
        assert!((j - reg).abs() < 1e-9 * reg, "{j} vs {reg}");
    }

    #[test]
    fn constraint_violation_reported() {
        let (f, ustar) = setup(true, 2.0, 0.5);
        let mut bad = ustar.clone();
        bad.values_mut()[f.mask().layer0()[0]] += 1e-3;
        match f.evaluate(&bad) {
            Err(Error::ConstraintViolation { max_violation }) => {
                assert!((max_violation - 1e-3).abs() < 1e-12)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        for cubic in [false, true] {
            let (f, ustar) = setup(cubic, 2.0, 0.3);
            let u = perturb(&f, &ustar, 1, 0.2);
            let g = f.euclidean_gradient(&u).unwrap();
            for seed in 0..10 {
                let h = f.space().free_project(&perturb(
                    &f,
                    &Field::zeros(u.grid().clone()),
                    100 + seed,
                    1.0,
                ));
                let delta = 1e-5;
                let up = u.add(&h.scaled(delta));
                let um = u.sub(&h.scaled(delta));
                let fd = f.evaluate_difference(&um, &up).unwrap() / (2.0 * delta);
                let an = g.dot(&h);
                assert!(
                    (fd - an).abs() / an.abs().max(1.0) < 1e-6,
                    "{cubic}: {fd} vs {an}"
                );
            }
        }
    }

    #[test]
    fn difference_matches_direct_values() {
        let (f, ustar) = setup(true, 2.0, 0.3);
        let u = perturb(&f, &ustar, 4, 0.3);
        let v = perturb(&f, &ustar, 5, 0.3);
        let direct = f.evaluate(&v).unwrap() - f.evaluate(&u).unwrap();
        let diff = f.evaluate_difference(&u, &v).unwrap();
        assert!((direct - diff).abs() < 1e-9 * direct.abs().max(1.0));
    }

    #[test]
    fn stationary_residual_has_zero_data_gradient() {
        let (f, ustar) = setup(true, 2.0, 0.3);
        // β only enters through the regularization; isolate the data part
        let g = f.euclidean_gradient(&ustar).unwrap();
        let gram = f.space().free_project(&Field::from_values_unchecked(
            ustar.grid().clone(),
            f.space().gram_apply_values(ustar.values()),
        ));
        let data_part = g.sub(&gram.scaled(2.0 * f.beta()));
        // the residual vanishes up to rounding; bound its weighted back-projection
        let r = f.discrete().residual_rows(ustar.values()).unwrap();
        let worst = r
            .iter()
            .zip(f.row_weights())
            .fold(0.0f64, |m, (ri, w)| m.max((ri * w).abs()));
        let h = ustar.grid().spacing()[0];
        assert!(worst < 1e-10 * f.row_weights().iter().fold(0.0f64, |m, &w| m.max(w)));
        assert!(data_part.max_abs() <= 2.0 * 9.0 * 8.0 / (h * h) * worst + 1e-300);
    }

    #[test]
    fn quadratic_gap_identity() {
        let (f, ustar) = setup(false, 2.0, 0.3);
        let u1 = perturb(&f, &ustar, 7, 0.5);
        let u2 = perturb(&f, &ustar, 8, 0.5);
        let gap = f.bregman_gap(&u1, &u2).unwrap();
        let h = u2.sub(&u1);
        let want = f.principal_data_term(&h) + f.beta() * f.space().norm(&h).unwrap().powi(2);
        assert!((gap.gap - want).abs() <= 1e-10 * want);
        assert!(gap.passes());
        let zero = f.bregman_gap(&u1, &u1).unwrap();
        assert_eq!((zero.gap, zero.hk_full, zero.h1_inner), (0.0, 0.0, 0.0));
    }

    #[test]
    fn gap_agrees_with_value_differences() {
        let (f, ustar) = setup(true, 2.0, 0.3);
        let u1 = perturb(&f, &ustar, 9, 0.1);
        let u2 = perturb(&f, &ustar, 10, 0.1);
        let gap = f.bregman_gap(&u1, &u2).unwrap();
        let dj = f.evaluate_difference(&u1, &u2).unwrap();
        let lin = f.euclidean_gradient(&u1).unwrap().dot(&u2.sub(&u1));
        assert!((gap.gap - (dj - lin)).abs() < 1e-8 * dj.abs().max(gap.gap.abs()).max(1e-3));
    }

    #[test]
    fn sobolev_gradient_represents_derivative() {
        let (f, ustar) = setup(true, 2.0, 0.3);
        let u = perturb(&f, &ustar, 2, 0.2);
        let (g, e, _) = f.sobolev_gradient(&u).unwrap();
        for seed in 0..5 {
            let h = f.space().free_project(&perturb(
                &f,
                &Field::zeros(u.grid().clone()),
                30 + seed,
                1.0,
            ));
            let lhs = f.space().inner_product(&g, &h).unwrap();
            let rhs = e.dot(&h);
            assert!(
                (lhs - rhs).abs()
                    < 1e-8 * f.space().norm(&g).unwrap() * f.space().norm(&h).unwrap()
            );
        }
    }

    #[test]
    fn carleman_ratio_rejects_bad_fields_and_is_homogeneous() {
        let (f, ustar) = setup_n(25, false, 2.0, 0.3);
        let disc = f.discrete();
        let zero = Field::zeros(ustar.grid().clone());
        assert!(carleman_ratio(disc, f.weight(), &zero).is_err());
        assert!(carleman_ratio(disc, f.weight(), &ustar).is_err());
        let deep = deep_nodes(f.mask());
        let node = deep.iter().position(|&d| d).expect("deep node");
        let mut bump = zero.clone();
        bump.values_mut()[node] = 1.0;
        let a = carleman_ratio(disc, f.weight(), &bump).unwrap();
        let b = carleman_ratio(disc, f.weight(), &bump.scaled(2.0)).unwrap();
        assert!(a > 0.0);
        assert!((a - b).abs() < 1e-12 * a);
    }
}
