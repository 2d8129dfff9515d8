//! Riesz representatives: solve G_ff g = rhs on the free subspace.

use std::sync::{Arc, OnceLock};

use nalgebra::DVector;
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::CscMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{dot, Field};
use crate::registry::Registry;
use crate::sobolev::SobolevSpace;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RieszOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for RieszOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 20_000,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<f64>,
}

pub trait RieszSolver: Send + Sync {
    fn name(&self) -> &str;

    /// Solves on free-node vectors. `warm` is an initial guess if the solver
    /// can use one.
    fn solve(&self, rhs: &[f64], warm: Option<&[f64]>) -> Result<(Vec<f64>, SolveStats)>;
}

pub type RieszFactory = fn(Arc<SobolevSpace>, RieszOptions) -> Result<Box<dyn RieszSolver>>;

pub fn riesz_solvers() -> &'static Registry<RieszFactory> {
    static REG: OnceLock<Registry<RieszFactory>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut reg: Registry<RieszFactory> = Registry::new("Riesz solver");
        reg.register("cg", |space, opts| {
            Ok(Box::new(ConjugateGradient::new(space, opts)))
        });
        reg.register("cholesky", |space, _| {
            Ok(Box::new(SparseCholesky::new(space)?))
        });
        reg
    })
}

/// Jacobi-preconditioned conjugate gradients on the free Gram map.
pub struct ConjugateGradient {
    space: Arc<SobolevSpace>,
    opts: RieszOptions,
    inv_diag: Vec<f64>,
}

impl ConjugateGradient {
    pub fn new(space: Arc<SobolevSpace>, opts: RieszOptions) -> Self {
        let g = space.free_gram();
        let inv_diag = (0..g.nrows())
            .map(|i| {
                let d = g.get_entry(i, i).map_or(0.0, |e| e.into_value());
                if d > 0.0 {
                    1.0 / d
                } else {
                    1.0
                }
            })
            .collect();
        Self {
            space,
            opts,
            inv_diag,
        }
    }
}

impl RieszSolver for ConjugateGradient {
    fn name(&self) -> &str {
        "cg"
    }

    fn solve(&self, rhs: &[f64], warm: Option<&[f64]>) -> Result<(Vec<f64>, SolveStats)> {
        let n = rhs.len();
        let bnorm = dot(rhs, rhs).sqrt();
        if bnorm == 0.0 {
            return Ok((
                vec![0.0; n],
                SolveStats {
                    iterations: 0,
                    residual: 0.0,
                    history: Vec::new(),
                },
            ));
        }
        let mut x = warm.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
        let mut ax = vec![0.0; n];
        self.space.apply_free_gram(&x, &mut ax);
        let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let mut z: Vec<f64> = r.iter().zip(&self.inv_diag).map(|(a, d)| a * d).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut ap = vec![0.0; n];
        let mut history = Vec::new();
        let mut rel = dot(&r, &r).sqrt() / bnorm;
        history.push(rel);
        let mut it = 0;
        while rel > self.opts.tol {
            if it >= self.opts.max_iter {
                return Err(Error::CgNotConverged {
                    iterations: it,
                    residual: rel,
                    history,
                });
            }
            self.space.apply_free_gram(&p, &mut ap);
            let curv = dot(&p, &ap);
            if curv <= 0.0 {
                return Err(Error::IndefiniteGram { curvature: curv });
            }
            let alpha = rz / curv;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            for i in 0..n {
                z[i] = r[i] * self.inv_diag[i];
            }
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
            rel = dot(&r, &r).sqrt() / bnorm;
            history.push(rel);
            it += 1;
        }
        Ok((
            x,
            SolveStats {
                iterations: it,
                residual: rel,
                history,
            },
        ))
    }
}

/// Sparse Cholesky factorization of the free Gram map.
pub struct SparseCholesky {
    space: Arc<SobolevSpace>,
    factor: CscCholesky<f64>,
}

impl SparseCholesky {
    pub fn new(space: Arc<SobolevSpace>) -> Result<Self> {
        let csc = CscMatrix::from(&nalgebra_sparse::CooMatrix::from(space.free_gram()));
        let factor = CscCholesky::factor(&csc).map_err(|_| Error::IndefiniteGram {
            curvature: f64::NAN,
        })?;
        Ok(Self { space, factor })
    }
}

impl RieszSolver for SparseCholesky {
    fn name(&self) -> &str {
        "cholesky"
    }

    fn solve(&self, rhs: &[f64], _warm: Option<&[f64]>) -> Result<(Vec<f64>, SolveStats)> {
        let b = DVector::from_column_slice(rhs);
        let x = self.factor.solve(&b);
        let x: Vec<f64> = x.column(0).iter().copied().collect();
        // one step of iterative refinement
        let mut ax = vec![0.0; x.len()];
        self.space.apply_free_gram(&x, &mut ax);
        let r = DVector::from_iterator(rhs.len(), rhs.iter().zip(&ax).map(|(b, a)| b - a));
        let dx = self.factor.solve(&r);
        let x: Vec<f64> = x
            .iter()
            .zip(dx.column(0).iter())
            .map(|(a, b)| a + b)
            .collect();
        self.space.apply_free_gram(&x, &mut ax);
        let bnorm = dot(rhs, rhs).sqrt();
        let rnorm = rhs
            .iter()
            .zip(&ax)
            .map(|(b, a)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Cholesky solve".into()));
        }
        Ok((
            x,
            SolveStats {
                iterations: 1,
                residual: if bnorm > 0.0 { rnorm / bnorm } else { 0.0 },
                history: Vec::new(),
            },
        ))
    }
}

/// Riesz representative of the functional h ↦ ⟨rhs, h⟩ on zero-trace fields.
pub fn riesz_solve(
    solver: &dyn RieszSolver,
    space: &SobolevSpace,
    rhs: &Field,
) -> Result<(Field, SolveStats)> {
    rhs.ensure_grid(space.mask().grid())?;
    let b = space.gather_free(rhs.values());
    let (x, stats) = solver.solve(&b, None)?;
    Ok((
        Field::from_values_unchecked(rhs.grid().clone(), space.scatter_free(&x)),
        stats,
    ))
}
