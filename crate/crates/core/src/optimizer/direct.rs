//! Direct minimization of J when the operator is affine in u.

use nalgebra::DVector;
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::functional::Functional;

/// Hessian H_ff = 2(A₀ᵀ W A₀ + β G) on the free nodes.
pub fn assemble_hessian(f: &Functional) -> Result<CscMatrix<f64>> {
    let disc = f.discrete();
    if !disc.is_affine() {
        return Err(Error::InvalidArgument(
            "normal equations need an operator affine in u".into(),
        ));
    }
    let space = f.space();
    let nf = space.free_nodes().len();
    let mut coo = CooMatrix::new(nf, nf);
    let p = disc.principal_matrix();
    for (r, &w) in f.row_weights().iter().enumerate() {
        let row: Vec<(usize, f64)> = p
            .row(r)
            .filter_map(|(c, v)| space.free_index(c).map(|i| (i, v)))
            .collect();
        for &(i, vi) in &row {
            for &(j, vj) in &row {
                coo.push(i, j, 2.0 * w * vi * vj);
            }
        }
    }
    let (offsets, cols, vals) = space.free_gram().csr_data();
    let b2 = 2.0 * f.beta();
    for i in 0..nf {
        for k in offsets[i]..offsets[i + 1] {
            coo.push(i, cols[k], b2 * vals[k]);
        }
    }
    Ok(CscMatrix::from(&coo))
}

/// Exact minimizer of the quadratic J over fields with the given Cauchy
/// data, from the normal equations H δ = −∇J(start).
pub fn normal_equations_solve(f: &Functional, start: &Field) -> Result<Field> {
    let space = f.space();
    let h = assemble_hessian(f)?;
    let chol = CscCholesky::factor(&h).map_err(|_| Error::IndefiniteGram {
        curvature: f64::NAN,
    })?;
    let mut u = start.clone();
    // one refinement pass absorbs the rounding of the first solve
    for _ in 0..2 {
        let g = f.euclidean_gradient(&u)?;
        let b = DVector::from_vec(space.gather_free(g.values()));
        let x = chol.solve(&b);
        let delta = space.scatter_free(x.as_slice());
        for (ui, di) in u.values_mut().iter_mut().zip(delta) {
            *ui -= di;
        }
    }
    if !u.is_finite() {
        return Err(Error::NonFinite("normal equations solution".into()));
    }
    Ok(u)
}
