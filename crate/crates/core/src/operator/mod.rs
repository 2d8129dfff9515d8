//! Discrete quasilinear operator: residual, principal part, linearization and
//! its exact adjoint.
//!
//! Residual conventions per family:
//!
//! * elliptic: `Σ a_ij u_ij + A₁`
//! * parabolic: `u_t − Σ a_ij u_ij − A₁`
//! * hyperbolic: `a u_tt − Δu − A₁`
//!
//! All derivatives use centered second-order differences. Rows are the
//! residual nodes of the mask, whose full 3^d neighborhood is masked.

pub mod lower;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::mask::{DomainMask, Label};
use crate::sparse::RowMatrix;

pub use lower::{
    check_partials, lower_order_terms, LowerFactory, LowerOrderArgs, LowerOrderTerm, SourceFn,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorFamily {
    Elliptic,
    Parabolic,
    Hyperbolic,
}

impl OperatorFamily {
    pub fn is_time_dependent(self) -> bool {
        !matches!(self, OperatorFamily::Elliptic)
    }

    /// Factor multiplying A₁ in the residual.
    pub fn lower_sign(self) -> f64 {
        match self {
            OperatorFamily::Elliptic => 1.0,
            OperatorFamily::Parabolic | OperatorFamily::Hyperbolic => -1.0,
        }
    }
}

pub type MatrixFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Spatial coefficient matrix a_ij of the principal part, stored row-major.
#[derive(Clone)]
pub enum MatrixCoeff {
    Identity,
    Constant(Vec<f64>),
    /// Fills an `n × n` matrix for the point `p` (time included when present).
    Variable(MatrixFn),
}

impl MatrixCoeff {
    pub fn eval(&self, p: &[f64], n: usize, out: &mut [f64]) {
        match self {
            MatrixCoeff::Identity => {
                out.fill(0.0);
                for i in 0..n {
                    out[i * n + i] = 1.0;
                }
            }
            MatrixCoeff::Constant(m) => out.copy_from_slice(&m[..n * n]),
            MatrixCoeff::Variable(f) => f(p, out),
        }
    }
}

#[derive(Clone)]
pub enum ScalarCoeff {
    Constant(f64),
    Variable(ScalarFn),
}

impl ScalarCoeff {
    pub fn eval(&self, p: &[f64]) -> f64 {
        match self {
            ScalarCoeff::Constant(a) => *a,
            ScalarCoeff::Variable(f) => f(p),
        }
    }
}

#[derive(Clone)]
pub enum Principal {
    Matrix(MatrixCoeff),
    /// Coefficient a(x) of u_tt; the spatial part is −Δ.
    Wave(ScalarCoeff),
}

#[derive(Clone)]
pub struct QuasilinearOperator {
    pub family: OperatorFamily,
    pub principal: Principal,
    pub lower: Arc<dyn LowerOrderTerm>,
    /// Ellipticity bounds (μ₁, μ₂), or (a_l, a_u) for the wave coefficient.
    pub bounds: Option<(f64, f64)>,
}

impl std::fmt::Debug for QuasilinearOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("QuasilinearOperator")
            .field("family", &self.family)
            .field("lower", &self.lower.name())
            .field("bounds", &self.bounds)
            .finish()
    }
}

impl QuasilinearOperator {
    pub fn elliptic(coeffs: MatrixCoeff, lower: Arc<dyn LowerOrderTerm>) -> Self {
        Self {
            family: OperatorFamily::Elliptic,
            principal: Principal::Matrix(coeffs),
            lower,
            bounds: None,
        }
    }

    pub fn parabolic(coeffs: MatrixCoeff, lower: Arc<dyn LowerOrderTerm>) -> Self {
        Self {
            family: OperatorFamily::Parabolic,
            principal: Principal::Matrix(coeffs),
            lower,
            bounds: None,
        }
    }

    pub fn hyperbolic(a: ScalarCoeff, lower: Arc<dyn LowerOrderTerm>) -> Self {
        Self {
            family: OperatorFamily::Hyperbolic,
            principal: Principal::Wave(a),
            lower,
            bounds: None,
        }
    }

    pub fn with_bounds(mut self, lo: f64, hi: f64) -> Self {
        self.bounds = Some((lo, hi));
        self
    }

    /// Checks symmetry, ellipticity (or the wave-coefficient conditions) at
    /// every masked node. `x0` is the observation centre of the hyperbolic
    /// level function. Returns the observed coefficient range.
    pub fn validate(&self, mask: &DomainMask, x0: Option<&[f64]>) -> Result<CoefficientRange> {
        let grid = mask.grid();
        if self.family.is_time_dependent() != mask.time_axis().is_some() {
            return Err(Error::InvalidArgument(format!(
                "{:?} operator on a mask {} a time axis",
                self.family,
                if mask.time_axis().is_some() {
                    "with"
                } else {
                    "without"
                }
            )));
        }
        let ns = mask.spatial_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut p = vec![0.0; grid.dim()];
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        match &self.principal {
            Principal::Matrix(coeffs) => {
                let mut m = vec![0.0; ns * ns];
                let mut eta = vec![0.0; ns];
                for node in mask.masked_nodes() {
                    grid.fill_point(node, &mut p);
                    coeffs.eval(&p, ns, &mut m);
                    for i in 0..ns {
                        for j in 0..i {
                            let (a, b) = (m[i * ns + j], m[j * ns + i]);
                            if (a - b).abs() > 1e-12 * (a.abs() + b.abs()).max(1.0) {
                                return Err(Error::OperatorCheck(format!(
                                    "coefficient matrix not symmetric at node {node}: a[{i}][{j}] = {a}, a[{j}][{i}] = {b}"
                                )));
                            }
                        }
                    }
                    for trial in 0..4 {
                        if trial < ns {
                            eta.fill(0.0);
                            eta[trial] = 1.0;
                        } else {
                            for e in eta.iter_mut() {
                                *e = rng.gen_range(-1.0..1.0);
                            }
                        }
                        let norm2: f64 = eta.iter().map(|e| e * e).sum();
                        if norm2 == 0.0 {
                            continue;
                        }
                        let mut q = 0.0;
                        for i in 0..ns {
                            for j in 0..ns {
                                q += m[i * ns + j] * eta[i] * eta[j];
                            }
                        }
                        let r = q / norm2;
                        if !r.is_finite() {
                            return Err(Error::NonFinite(format!(
                                "principal coefficients at node {node}"
                            )));
                        }
                        lo = lo.min(r);
                        hi = hi.max(r);
                    }
                }
                if lo <= 0.0 {
                    return Err(Error::OperatorCheck(format!(
                        "principal part is not elliptic: Rayleigh quotient {lo} ≤ 0"
                    )));
                }
            }
            Principal::Wave(a) => {
                for node in mask.masked_nodes() {
                    grid.fill_point(node, &mut p);
                    let v = a.eval(&p);
                    if !v.is_finite() || v <= 0.0 {
                        return Err(Error::OperatorCheck(format!(
                            "wave coefficient a = {v} at node {node} must be positive"
                        )));
                    }
                    lo = lo.min(v);
                    hi = hi.max(v);
                    if let Some(x0) = x0 {
                        // (∇a, x − x₀) by centered differences
                        let mut dot = 0.0;
                        for i in 0..ns {
                            let step = 1e-6 * grid.spacing()[i];
                            let mut pp = p.clone();
                            let mut pm = p.clone();
                            pp[i] += step;
                            pm[i] -= step;
                            let da = (a.eval(&pp) - a.eval(&pm)) / (2.0 * step);
                            dot += da * (p[i] - x0[i]);
                        }
                        if dot < -1e-8 {
                            return Err(Error::OperatorCheck(format!(
                                "(∇a, x − x₀) = {dot} < 0 at node {node}"
                            )));
                        }
                    }
                }
            }
        }
        if let Some((b_lo, b_hi)) = self.bounds {
            let tol = 1e-12 * b_hi.abs().max(1.0);
            if lo < b_lo - tol || hi > b_hi + tol {
                return Err(Error::OperatorCheck(format!(
                    "coefficients range over [{lo}, {hi}], outside the declared bounds [{b_lo}, {b_hi}]"
                )));
            }
        }
        Ok(CoefficientRange { min: lo, max: hi })
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CoefficientRange {
    pub min: f64,
    pub max: f64,
}

/// Operator bound to a mask, with assembled stencils.
pub struct DiscreteOperator {
    op: QuasilinearOperator,
    mask: Arc<DomainMask>,
    rows: Vec<usize>,
    principal: RowMatrix,
    /// Centered first differences along each spatial axis.
    gradient: Vec<RowMatrix>,
    points: Vec<f64>,
}

impl std::fmt::Debug for DiscreteOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiscreteOperator")
            .field("op", &self.op)
            .field("rows", &self.rows.len())
            .field("nnz", &self.principal.nnz())
            .finish()
    }
}

impl DiscreteOperator {
    pub fn new(op: QuasilinearOperator, mask: Arc<DomainMask>) -> Result<Self> {
        let grid = mask.grid().clone();
        let d = grid.dim();
        let ns = mask.spatial_dim();
        if op.family.is_time_dependent() != mask.time_axis().is_some() {
            return Err(Error::InvalidArgument(format!(
                "{:?} operator needs a mask {} a time axis",
                op.family,
                if op.family.is_time_dependent() {
                    "with"
                } else {
                    "without"
                }
            )));
        }
        let rows = mask.residual_nodes();
        let n = grid.len();
        let mut principal = RowMatrix::new(n);
        let mut gradient: Vec<RowMatrix> = (0..ns).map(|_| RowMatrix::new(n)).collect();
        let mut points = Vec::with_capacity(rows.len() * d);
        let mut p = vec![0.0; d];
        let mut m = vec![0.0; ns * ns];
        let mut entries = Vec::new();
        let h = grid.spacing();

        let neighbor = |node: usize, delta: &[isize]| -> Result<usize> {
            match grid.offset(node, delta) {
                Some(nb) if mask.label(nb).is_masked() => Ok(nb),
                Some(nb) => Err(Error::StencilGeometry {
                    node,
                    neighbor: nb,
                    label: mask.label(nb),
                }),
                None => Err(Error::StencilGeometry {
                    node,
                    neighbor: usize::MAX,
                    label: Label::Outside,
                }),
            }
        };
        let unit = |axis: usize, s: isize| -> Vec<isize> {
            let mut v = vec![0isize; d];
            v[axis] = s;
            v
        };
        let pair = |i: usize, si: isize, j: usize, sj: isize| -> Vec<isize> {
            let mut v = vec![0isize; d];
            v[i] = si;
            v[j] = sj;
            v
        };

        for &node in &rows {
            grid.fill_point(node, &mut p);
            points.extend_from_slice(&p);

            // second difference along `axis` with weight `c`
            let second = |axis: usize, c: f64, entries: &mut Vec<(usize, f64)>| -> Result<()> {
                let s = c / (h[axis] * h[axis]);
                entries.push((neighbor(node, &unit(axis, 1))?, s));
                entries.push((neighbor(node, &unit(axis, -1))?, s));
                entries.push((node, -2.0 * s));
                Ok(())
            };

            match &op.principal {
                Principal::Matrix(coeffs) => {
                    coeffs.eval(&p, ns, &mut m);
                    let sign = if op.family == OperatorFamily::Parabolic {
                        -1.0
                    } else {
                        1.0
                    };
                    for i in 0..ns {
                        second(i, sign * m[i * ns + i], &mut entries)?;
                        for j in (i + 1)..ns {
                            let a = sign * (m[i * ns + j] + m[j * ns + i]);
                            if a == 0.0 {
                                continue;
                            }
                            let s = a / (4.0 * h[i] * h[j]);
                            entries.push((neighbor(node, &pair(i, 1, j, 1))?, s));
                            entries.push((neighbor(node, &pair(i, 1, j, -1))?, -s));
                            entries.push((neighbor(node, &pair(i, -1, j, 1))?, -s));
                            entries.push((neighbor(node, &pair(i, -1, j, -1))?, s));
                        }
                    }
                    if op.family == OperatorFamily::Parabolic {
                        let t = d - 1;
                        let s = 1.0 / (2.0 * h[t]);
                        entries.push((neighbor(node, &unit(t, 1))?, s));
                        entries.push((neighbor(node, &unit(t, -1))?, -s));
                    }
                }
                Principal::Wave(a) => {
                    let t = d - 1;
                    second(t, a.eval(&p), &mut entries)?;
                    for i in 0..ns {
                        second(i, -1.0, &mut entries)?;
                    }
                }
            }
            principal.push_row(&mut entries);

            for (axis, g) in gradient.iter_mut().enumerate() {
                let s = 1.0 / (2.0 * h[axis]);
                entries.push((neighbor(node, &unit(axis, 1))?, s));
                entries.push((neighbor(node, &unit(axis, -1))?, -s));
                g.push_row(&mut entries);
            }
        }
        if principal.nnz() == 0 && !rows.is_empty() {
            return Err(Error::OperatorCheck("principal part vanishes".into()));
        }
        Ok(Self {
            op,
            mask,
            rows,
            principal,
            gradient,
            points,
        })
    }

    pub fn operator(&self) -> &QuasilinearOperator {
        &self.op
    }

    pub fn mask(&self) -> &Arc<DomainMask> {
        &self.mask
    }

    /// Residual nodes, in row order.
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn principal_matrix(&self) -> &RowMatrix {
        &self.principal
    }

    pub fn gradient_matrices(&self) -> &[RowMatrix] {
        &self.gradient
    }

    pub fn is_linear(&self) -> bool {
        self.op.lower.is_zero()
    }

    /// A(u) = A₀u + source, so that J is quadratic.
    pub fn is_affine(&self) -> bool {
        self.op.lower.is_affine()
    }

    fn point(&self, row: usize) -> &[f64] {
        let d = self.mask.grid().dim();
        &self.points[row * d..(row + 1) * d]
    }

    fn grad_at(&self, row: usize, u: &[f64], out: &mut [f64]) {
        for (o, g) in out.iter_mut().zip(&self.gradient) {
            *o = g.row_dot(row, u);
        }
    }

    /// A₀u at every row.
    pub fn principal_rows(&self, u: &[f64]) -> Vec<f64> {
        (0..self.nrows())
            .into_par_iter()
            .map(|r| self.principal.row_dot(r, u))
            .collect()
    }

    /// A₁(p, ∇u, u) at every row.
    pub fn lower_rows(&self, u: &[f64]) -> Result<Vec<f64>> {
        let ns = self.gradient.len();
        let vals: Vec<f64> = (0..self.nrows())
            .into_par_iter()
            .map_init(
                || vec![0.0; ns],
                |g, r| {
                    self.grad_at(r, u, g);
                    self.op.lower.value(self.point(r), g, u[self.rows[r]])
                },
            )
            .collect();
        if let Some(r) = vals.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "lower-order term at node {}",
                self.rows[r]
            )));
        }
        Ok(vals)
    }

    /// Full residual A(u) at every row.
    pub fn residual_rows(&self, u: &[f64]) -> Result<Vec<f64>> {
        let mut r = self.principal_rows(u);
        if !self.is_linear() {
            let s = self.op.family.lower_sign();
            for (ri, l) in r.iter_mut().zip(self.lower_rows(u)?) {
                *ri += s * l;
            }
        }
        Ok(r)
    }

    /// Difference A(u₂) − A(u₁) evaluated as A₀h + s(A₁(u₂) − A₁(u₁)).
    pub fn residual_difference_rows(&self, u1: &[f64], u2: &[f64]) -> Result<Vec<f64>> {
        let h: Vec<f64> = u2.iter().zip(u1).map(|(a, b)| a - b).collect();
        let mut r = self.principal_rows(&h);
        if !self.is_linear() {
            let s = self.op.family.lower_sign();
            let l2 = self.lower_rows(u2)?;
            let l1 = self.lower_rows(u1)?;
            for ((ri, a), b) in r.iter_mut().zip(l2).zip(l1) {
                *ri += s * (a - b);
            }
        }
        Ok(r)
    }

    /// Places row values on their nodes; zero elsewhere.
    pub fn scatter(&self, rows: &[f64]) -> Field {
        let grid = self.mask.grid().clone();
        let mut values = vec![0.0; grid.len()];
        for (&node, &v) in self.rows.iter().zip(rows) {
            values[node] = v;
        }
        Field::from_values_unchecked(grid, values)
    }

    pub fn gather(&self, field: &Field) -> Vec<f64> {
        self.rows.iter().map(|&n| field.values()[n]).collect()
    }

    pub fn linearize(self: &Arc<Self>, u1: &Field) -> Result<LinearizedOperator> {
        u1.ensure_grid(self.mask.grid())?;
        if !u1.is_finite() {
            return Err(Error::NonFinite("linearization point".into()));
        }
        let ns = self.gradient.len();
        let u = u1.values();
        let (du, dgrad): (Vec<f64>, Vec<Vec<f64>>) = (0..self.nrows())
            .into_par_iter()
            .map(|r| {
                let mut g = vec![0.0; ns];
                self.grad_at(r, u, &mut g);
                let p = self.point(r);
                let ui = u[self.rows[r]];
                let mut dg = vec![0.0; ns];
                self.op.lower.partial_grad(p, &g, ui, &mut dg);
                (self.op.lower.partial_u(p, &g, ui), dg)
            })
            .unzip();
        let dgrad: Vec<f64> = dgrad.into_iter().flatten().collect();
        if du.iter().chain(&dgrad).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("lower-order partials".into()));
        }
        Ok(LinearizedOperator {
            disc: self.clone(),
            base: u1.clone(),
            du,
            dgrad,
        })
    }
}

/// L_{u₁}h = A₀h + s(Σ ∂A₁/∂u_{x_i} h_{x_i} + ∂A₁/∂u h) with frozen coefficients.
#[derive(Debug, Clone)]
pub struct LinearizedOperator {
    disc: Arc<DiscreteOperator>,
    base: Field,
    du: Vec<f64>,
    dgrad: Vec<f64>,
}

impl LinearizedOperator {
    pub fn base(&self) -> &Field {
        &self.base
    }

    pub fn discrete(&self) -> &Arc<DiscreteOperator> {
        &self.disc
    }

    /// ∂A₁/∂u per row.
    pub fn zeroth_order(&self) -> &[f64] {
        &self.du
    }

    /// ∂A₁/∂u_{x_i} per row, row-major over (row, axis).
    pub fn first_order(&self) -> &[f64] {
        &self.dgrad
    }

    pub fn forward_rows(&self, v: &[f64]) -> Vec<f64> {
        let d = &self.disc;
        let ns = d.gradient.len();
        let s = d.op.family.lower_sign();
        (0..d.nrows())
            .into_par_iter()
            .map(|r| {
                let mut acc = d.principal.row_dot(r, v);
                let mut low = self.du[r] * v[d.rows[r]];
                for (i, g) in d.gradient.iter().enumerate() {
                    let c = self.dgrad[r * ns + i];
                    if c != 0.0 {
                        low += c * g.row_dot(r, v);
                    }
                }
                acc += s * low;
                acc
            })
            .collect()
    }

    /// Exact transpose of `forward_rows`: row values in, node values out.
    pub fn adjoint_rows(&self, w: &[f64]) -> Vec<f64> {
        let d = &self.disc;
        let ns = d.gradient.len();
        let s = d.op.family.lower_sign();
        let mut out = vec![0.0; d.mask.grid().len()];
        d.principal.apply_transpose_add(w, &mut out);
        for (r, (&node, &wr)) in d.rows.iter().zip(w).enumerate() {
            out[node] += s * self.du[r] * wr;
        }
        let mut scaled = vec![0.0; w.len()];
        for (i, g) in d.gradient.iter().enumerate() {
            for (r, sc) in scaled.iter_mut().enumerate() {
                *sc = s * self.dgrad[r * ns + i] * w[r];
            }
            g.apply_transpose_add(&scaled, &mut out);
        }
        out
    }

    /// Remainder A(u₁+h) − A(u₁) − L_{u₁}h per row, from A₁ differences
    /// only (the principal part cancels exactly).
    pub fn remainder_rows(&self, h: &[f64]) -> Result<Vec<f64>> {
        let d = &self.disc;
        if d.is_linear() {
            return Ok(vec![0.0; d.nrows()]);
        }
        let ns = d.gradient.len();
        let s = d.op.family.lower_sign();
        let u1 = self.base.values();
        let u2: Vec<f64> = u1.iter().zip(h).map(|(a, b)| a + b).collect();
        let l2 = d.lower_rows(&u2)?;
        let l1 = d.lower_rows(u1)?;
        Ok((0..d.nrows())
            .map(|r| {
                let mut lin = self.du[r] * h[d.rows[r]];
                for (i, g) in d.gradient.iter().enumerate() {
                    lin += self.dgrad[r * ns + i] * g.row_dot(r, h);
                }
                s * ((l2[r] - l1[r]) - lin)
            })
            .collect())
    }
}

pub fn apply_operator(disc: &DiscreteOperator, u: &Field) -> Result<Field> {
    u.ensure_grid(disc.mask.grid())?;
    Ok(disc.scatter(&disc.residual_rows(u.values())?))
}

pub fn apply_principal(disc: &DiscreteOperator, u: &Field) -> Result<Field> {
    u.ensure_grid(disc.mask.grid())?;
    Ok(disc.scatter(&disc.principal_rows(u.values())))
}

pub fn linearize(disc: &Arc<DiscreteOperator>, u1: &Field) -> Result<LinearizedOperator> {
    disc.linearize(u1)
}

/// Forward: L v on residual nodes, zero elsewhere. Adjoint: Lᵀ applied to
/// the residual-node values of `v`.
pub fn apply_linearized(lin: &LinearizedOperator, v: &Field, adjoint: bool) -> Result<Field> {
    let grid = lin.disc.mask.grid();
    v.ensure_grid(grid)?;
    if !v.is_finite() {
        return Err(Error::NonFinite("linearized operator input".into()));
    }
    if adjoint {
        let w = lin.disc.gather(v);
        Ok(Field::from_values_unchecked(
            grid.clone(),
            lin.adjoint_rows(&w),
        ))
    } else {
        Ok(lin.disc.scatter(&lin.forward_rows(v.values())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::level::LevelSpec;
    use crate::mask::classify_nodes;
    use lower::{Cubic, Zero};

    fn ell2d(n: usize) -> Arc<DomainMask> {
        let grid = Arc::new(build_grid(&[(0.0, 1.0), (-1.0, 1.0)], &[n, 2 * n - 1]).unwrap());
        Arc::new(classify_nodes(grid, &LevelSpec::elliptic(0.2, 0.4, 2.0, 1.0)).unwrap())
    }

    fn box1d(n: usize) -> Arc<DomainMask> {
        let grid = Arc::new(build_grid(&[(0.0, 1.0)], &[n]).unwrap());
        Arc::new(classify_nodes(grid, &LevelSpec::elliptic(0.1, 0.45, 1.0, 1.0)).unwrap())
    }

    fn hyp() -> Arc<DomainMask> {
        let grid = Arc::new(build_grid(&[(0.0, 1.0), (-1.0, 1.0)], &[33, 33]).unwrap());
        let level = LevelSpec::hyperbolic(vec![0.5], 0.25, 0.1, 1.0);
        Arc::new(classify_nodes(grid, &level).unwrap())
    }

    fn random_field(mask: &DomainMask, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vals = (0..mask.grid().len())
            .map(|n| {
                if mask.label(n).is_masked() {
                    rng.gen_range(-1.0..1.0)
                } else {
                    0.0
                }
            })
            .collect();
        Field::from_values(mask.grid().clone(), vals).unwrap()
    }

    #[test]
    fn manufactured_1d_cubic_is_exact() {
        let mask = box1d(41);
        let q: SourceFn = Arc::new(|p: &[f64]| (p[0] * p[0] + 1.0).powi(3) - 2.0);
        let op = QuasilinearOperator::elliptic(
            MatrixCoeff::Identity,
            Arc::new(Cubic { source: Some(q) }),
        );
        let disc = DiscreteOperator::new(op, mask.clone()).unwrap();
        let u = Field::from_fn(mask.grid().clone(), |p| p[0] * p[0] + 1.0);
        let r = apply_operator(&disc, &u).unwrap();
        assert!(disc.nrows() > 0);
        assert!(r.max_abs() < 1e-10, "{}", r.max_abs());
    }

    #[test]
    fn harmonic_quadratic_is_exact() {
        let mask = ell2d(21);
        let op = QuasilinearOperator::elliptic(MatrixCoeff::Identity, Arc::new(Zero));
        let disc = DiscreteOperator::new(op, mask.clone()).unwrap();
        let u = Field::from_fn(mask.grid().clone(), |p| p[0] * p[0] - p[1] * p[1]);
        assert!(apply_operator(&disc, &u).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn wave_identity() {
        let mask = hyp();
        let op = QuasilinearOperator::hyperbolic(ScalarCoeff::Constant(1.0), Arc::new(Zero));
        let disc = DiscreteOperator::new(op, mask.clone()).unwrap();
        assert!(disc.nrows() > 0);
        let u = Field::from_fn(mask.grid().clone(), |p| p[0] * p[0] + p[1] * p[1]);
        assert!(apply_operator(&disc, &u).unwrap().max_abs() < 1e-9);
    }

    #[test]
    fn operator_minus_principal_is_lower_term() {
        let mask = ell2d(17);
        let op =
            QuasilinearOperator::elliptic(MatrixCoeff::Identity, Arc::new(Cubic { source: None }));
        let disc = DiscreteOperator::new(op, mask.clone()).unwrap();
        let u = random_field(&mask, 3);
        let full = apply_operator(&disc, &u).unwrap();
        let princ = apply_principal(&disc, &u).unwrap();
        for &n in disc.rows() {
            let v = u.values()[n];
            let diff = full.values()[n] - princ.values()[n];
            assert!((diff + v * v * v).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_has_zero_principal_part() {
        let mask = ell2d(17);
        let c = MatrixCoeff::Constant(vec![2.0, 0.3, 0.3, 1.0]);
        let op = QuasilinearOperator::elliptic(c, Arc::new(Zero));
        let disc = DiscreteOperator::new(op, mask.clone()).unwrap();
        let u = Field::constant(mask.grid().clone(), 4.2);
        assert!(apply_principal(&disc, &u).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn principal_matches_dense_stencil_matrix() {
        let grid = Arc::new(build_grid(&[(0.0, 1.0), (-1.0, 1.0)], &[9, 9]).unwrap());
        let mask = Arc::new(
            classify_nodes(
                grid.clone(),
                &LevelSpec::elliptic(0.05, 0.45, 1.0, 1.0).with_epsilon(0.1),
            )
            .unwrap(),
        );
        let coeffs: MatrixFn = Arc::new(|p: &[f64], m: &mut [f64]| {
            m[0] = 1.0 + p[0];
            m[1] = 0.2;
            m[2] = 0.2;
            m[3] = 1.5;
        });
        let op = QuasilinearOperator::elliptic(MatrixCoeff::Variable(coeffs), Arc::new(Zero));
        let disc = DiscreteOperator::new(op, mask.clone()).unwrap();
        assert!(disc.nrows() > 0);
        // dense oracle built independently from the difference formulas
        let n = grid.len();
        let (hx, hy) = (grid.spacing()[0], grid.spacing()[1]);
        let mut dense = vec![vec![0.0; n]; disc.nrows()];
        for (r, &node) in disc.rows().iter().enumerate() {
            let x = grid.coord(node, 0);
            let idx = |dx: isize, dy: isize| grid.offset(node, &[dx, dy]).unwrap();
            let a11 = 1.0 + x;
            dense[r][idx(1, 0)] += a11 / (hx * hx);
            dense[r][idx(-1, 0)] += a11 / (hx * hx);
            dense[r][node] -= 2.0 * a11 / (hx * hx) + 3.0 / (hy * hy);
            dense[r][idx(0, 1)] += 1.5 / (hy * hy);
            dense[r][idx(0, -1)] += 1.5 / (hy * hy);
            let m = 0.4 / (4.0 * hx * hy);
            dense[r][idx(1, 1)] += m;
            dense[r][idx(-1, -1)] += m;
            dense[r][idx(1, -1)] -= m;
            dense[r][idx(-1, 1)] -= m;
        }
        let u = random_field(&mask, 9);
        let got = disc.principal_rows(u.values());
        for (r, row) in dense.iter().enumerate() {
            let want: f64 = row.iter().zip(u.values()).map(|(a, b)| a * b).sum();
            assert!((got[r] - want).abs() < 1e-9 * want.abs().max(1.0));
        }
    }

    #[test]
    fn zeroth_order_coefficient_of_cubic() {
        let mask = ell2d(17);
        let op =
            QuasilinearOperator::elliptic(MatrixCoeff::Identity, Arc::new(Cubic { source: None }));
        let disc = Arc::new(DiscreteOperator::new(op, mask.clone()).unwrap());
        let lin = disc
            .linearize(&Field::constant(mask.grid().clone(), 1.0))
            .unwrap();
        assert!(lin.zeroth_order().iter().all(|&c| c == -3.0));
    }

    #[test]
    fn linear_case_ignores_base_point() {
        let mask = ell2d(17);
        let op = QuasilinearOperator::elliptic(MatrixCoeff::Identity, Arc::new(Zero));
        let disc = Arc::new(DiscreteOperator::new(op, mask.clone()).unwrap());
        let v = random_field(&mask, 1);
        let a = disc
            .linearize(&random_field(&mask, 2))
            .unwrap()
            .forward_rows(v.values());
        let b = disc
            .linearize(&random_field(&mask, 5))
            .unwrap()
            .forward_rows(v.values());
        assert_eq!(a, b);
        assert_eq!(a, disc.principal_rows(v.values()));
    }

    fn saturating() -> Arc<dyn LowerOrderTerm> {
        let q: SourceFn = Arc::new(|p: &[f64]| p[0]);
        Arc::new(lower::SaturatingGradient {
            b: 0.7,
            source: Some(q),
        })
    }

    #[test]
    fn duality_identity() {
        let cases: Vec<(Arc<DomainMask>, QuasilinearOperator)> = vec![
            (
                ell2d(17),
                QuasilinearOperator::elliptic(
                    MatrixCoeff::Constant(vec![1.0, 0.3, 0.3, 2.0]),
                    saturating(),
                ),
            ),
            (
                hyp(),
                QuasilinearOperator::hyperbolic(
                    ScalarCoeff::Constant(1.2),
                    Arc::new(Cubic { source: None }),
                ),
            ),
        ];
        for (mask, op) in cases {
            let disc = Arc::new(DiscreteOperator::new(op, mask.clone()).unwrap());
            let lin = disc.linearize(&random_field(&mask, 11)).unwrap();
            for k in 0..20 {
                let v = random_field(&mask, 100 + k);
                let w = random_field(&mask, 200 + k);
                let lv = apply_linearized(&lin, &v, false).unwrap();
                let ltw = apply_linearized(&lin, &w, true).unwrap();
                let a = lv.dot(&w);
                let b = v.dot(&ltw);
                assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn laplacian_adjoint_matches_forward_away_from_boundary() {
        let mask = ell2d(17);
        let op = QuasilinearOperator::elliptic(MatrixCoeff::Identity, Arc::new(Zero));
        let disc = Arc::new(DiscreteOperator::new(op, mask.clone()).unwrap());
        let lin = disc.linearize(&Field::zeros(mask.grid().clone())).unwrap();
        let v = random_field(&mask, 4);
        let fwd = apply_linearized(&lin, &v, false).unwrap();
        let adj = apply_linearized(&lin, &v, true).unwrap();
        let grid = mask.grid();
        for &node in disc.rows() {
            let deep = grid.box_offsets().iter().all(|o| {
                grid.offset(node, o)
                    .is_some_and(|nb| mask.label(nb).has_residual())
            });
            if deep {
                assert!((fwd.values()[node] - adj.values()[node]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn remainder_is_quadratic() {
        let mask = ell2d(33);
        let q: SourceFn = Arc::new(|p: &[f64]| p[0] * p[1]);
        let op = QuasilinearOperator::elliptic(
            MatrixCoeff::Identity,
            Arc::new(lower::Sine { source: Some(q) }),
        );
        let disc = Arc::new(DiscreteOperator::new(op, mask.clone()).unwrap());
        let u1 = Field::from_fn(mask.grid().clone(), |p| 1.0 + p[0] - p[1] * p[1]);
        let lin = disc.linearize(&u1).unwrap();
        let h0 = Field::from_fn(mask.grid().clone(), |p| (2.0 * p[0]).cos() * (p[1] + 0.3));
        let mut prev: Option<f64> = None;
        for k in 0..4 {
            let h = h0.scaled(0.5f64.powi(k));
            let rem: f64 = lin
                .remainder_rows(h.values())
                .unwrap()
                .iter()
                .fold(0.0, |m, v| m.max(v.abs()));
            // independent path: full residual differences
            let u2 = u1.add(&h);
            let full = disc.residual_rows(u2.values()).unwrap();
            let base = disc.residual_rows(u1.values()).unwrap();
            let lh = lin.forward_rows(h.values());
            let direct = full
                .iter()
                .zip(&base)
                .zip(&lh)
                .fold(0.0f64, |m, ((a, b), c)| m.max((a - b - c).abs()));
            assert!((rem - direct).abs() < 1e-8);
            if let Some(p) = prev {
                assert!(p / rem >= 3.5, "ratio {}", p / rem);
            }
            prev = Some(rem);
        }
    }

    #[test]
    fn validation_flags_bad_coefficients() {
        let mask = ell2d(17);
        let asym = QuasilinearOperator::elliptic(
            MatrixCoeff::Constant(vec![1.0, 0.5, 0.0, 1.0]),
            Arc::new(Zero),
        );
        assert!(asym.validate(&mask, None).is_err());
        let indef = QuasilinearOperator::elliptic(
            MatrixCoeff::Constant(vec![1.0, 0.0, 0.0, -1.0]),
            Arc::new(Zero),
        );
        assert!(indef.validate(&mask, None).is_err());
        let ok = QuasilinearOperator::elliptic(
            MatrixCoeff::Constant(vec![2.0, 0.0, 0.0, 1.0]),
            Arc::new(Zero),
        )
        .with_bounds(1.0, 2.0);
        let range = ok.validate(&mask, None).unwrap();
        assert!(range.min >= 1.0 - 1e-12 && range.max <= 2.0 + 1e-12);
        let tight = ok.clone().with_bounds(1.5, 2.0);
        assert!(tight.validate(&mask, None).is_err());
    }

    #[test]
    fn wave_coefficient_monotonicity_checked() {
        let mask = hyp();
        let inward: ScalarFn = Arc::new(|p: &[f64]| 2.0 - (p[0] - 0.5) * (p[0] - 0.5));
        let outward: ScalarFn = Arc::new(|p: &[f64]| 1.0 + (p[0] - 0.5) * (p[0] - 0.5));
        let bad = QuasilinearOperator::hyperbolic(ScalarCoeff::Variable(inward), Arc::new(Zero));
        assert!(bad.validate(&mask, Some(&[0.5])).is_err());
        let good = QuasilinearOperator::hyperbolic(ScalarCoeff::Variable(outward), Arc::new(Zero));
        good.validate(&mask, Some(&[0.5])).unwrap();
    }
}
