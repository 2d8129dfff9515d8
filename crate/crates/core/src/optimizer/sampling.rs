//! Random fields in B(R) that satisfy the Cauchy data.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::functional::CauchyData;
use crate::grid::Side;
use crate::mask::DomainMask;
use crate::sobolev::SobolevSpace;

/// Extends the Cauchy data into the mask linearly along the normal of the
/// nearest Cauchy face: u = g₀ + j (g₁ − g₀) at index distance j.
pub struct CauchyExtension;

impl CauchyExtension {
    pub fn build(mask: &DomainMask, data: &CauchyData) -> Field {
        let grid = mask.grid();
        let mut known = vec![f64::NAN; grid.len()];
        for (&n, &v) in data.nodes().iter().zip(data.values()) {
            known[n] = v;
        }
        let g0_mean = {
            let vals: Vec<f64> = mask
                .layer0()
                .iter()
                .map(|&n| known[n])
                .filter(|v| v.is_finite())
                .collect();
            if vals.is_empty() {
                0.0
            } else {
                vals.iter().sum::<f64>() / vals.len() as f64
            }
        };
        let mut values = vec![0.0; grid.len()];
        for node in mask.masked_nodes() {
            let mut idx = grid.multi_index(node);
            let mut best: Option<(usize, usize, Side)> = None;
            for &(axis, side) in mask.cauchy_faces() {
                let i = idx[axis];
                let j = match side {
                    Side::Low => i,
                    Side::High => grid.shape()[axis] - 1 - i,
                };
                if best.is_none_or(|b| j < b.0) {
                    best = Some((j, axis, side));
                }
            }
            let value = best.and_then(|(j, axis, side)| {
                let (face, inward) = match side {
                    Side::Low => (0, 1),
                    Side::High => (grid.shape()[axis] - 1, grid.shape()[axis] - 2),
                };
                idx[axis] = face;
                let g0 = known[grid.node(&idx)];
                idx[axis] = inward;
                let g1 = known[grid.node(&idx)];
                (g0.is_finite() && g1.is_finite()).then_some(g0 + j as f64 * (g1 - g0))
            });
            values[node] = value.unwrap_or(g0_mean);
        }
        let mut f = Field::from_values_unchecked(grid.clone(), values);
        data.impose(&mut f);
        f
    }
}

/// Draws b + s p with p a smooth zero-trace perturbation of unit H^k norm
/// and s chosen so that the norm is uniform in (‖b‖, R).
pub struct BallSampler {
    space: Arc<SobolevSpace>,
    base: Field,
    base_norm: f64,
    radius: f64,
    modes: usize,
}

impl BallSampler {
    pub fn new(space: Arc<SobolevSpace>, base: Field, radius: f64) -> Result<Self> {
        let base_norm = space.norm(&base)?;
        if !(base_norm < radius) {
            return Err(Error::InvalidArgument(format!(
                "base field has norm {base_norm:.4e}, not inside B(R) with R = {radius}"
            )));
        }
        Ok(Self {
            space,
            base,
            base_norm,
            radius,
            modes: 6,
        })
    }

    pub fn base(&self) -> &Field {
        &self.base
    }

    pub fn base_norm(&self) -> f64 {
        self.base_norm
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Unit-norm perturbation vanishing to third order at the Cauchy faces.
    pub fn perturbation<R: Rng>(&self, rng: &mut R) -> Field {
        let mask = self.space.mask();
        let grid = mask.grid();
        let d = grid.dim();
        let terms: Vec<(f64, Vec<(f64, f64)>)> = (0..self.modes)
            .map(|_| {
                let waves: Vec<(f64, f64)> = (0..d)
                    .map(|_| (rng.gen_range(0..4) as f64, rng.gen_range(0.0..2.0 * PI)))
                    .collect();
                let k2: f64 = waves.iter().map(|w| w.0 * w.0).sum();
                let amp: f64 = rng.sample::<f64, _>(StandardNormal) / (1.0 + k2);
                (amp, waves)
            })
            .collect();
        let mut values = vec![0.0; grid.len()];
        let mut p = vec![0.0; d];
        for node in mask.masked_nodes() {
            if !mask.is_free(node) {
                continue;
            }
            grid.fill_point(node, &mut p);
            let mut ramp = 1.0;
            for &(axis, side) in mask.cauchy_faces() {
                let dist = match side {
                    Side::Low => p[axis] - grid.origin()[axis],
                    Side::High => grid.upper(axis) - p[axis],
                };
                ramp *= (dist - grid.spacing()[axis]).max(0.0).powi(3);
            }
            if ramp == 0.0 {
                continue;
            }
            let mut s = 0.0;
            for (amp, waves) in &terms {
                let mut t = *amp;
                for (a, &(k, phase)) in waves.iter().enumerate() {
                    let x = (p[a] - grid.origin()[a]) / (grid.upper(a) - grid.origin()[a]);
                    t *= (k * PI * x + phase).cos();
                }
                s += t;
            }
            values[node] = ramp * s;
        }
        let f = Field::from_values_unchecked(grid.clone(), values);
        let n = self.space.norm_sq_values(f.values()).sqrt();
        if n > 0.0 {
            f.scaled(1.0 / n)
        } else {
            f
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Field {
        loop {
            let p = self.perturbation(rng);
            if p.max_abs() == 0.0 {
                continue;
            }
            let rho = self.base_norm + rng.gen_range(0.0..1.0) * (self.radius - self.base_norm);
            let bp = self
                .space
                .inner_product_values(self.base.values(), p.values());
            // ‖b + s p‖² = ρ² with ‖p‖ = 1
            let s = -bp + (bp * bp - self.base_norm * self.base_norm + rho * rho).sqrt();
            let mut u = self.base.clone();
            u.axpy(s, &p);
            return u;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::level::LevelSpec;
    use crate::mask::classify_nodes;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (Arc<SobolevSpace>, CauchyData, Field) {
        let grid = Arc::new(build_grid(&[(0.0, 1.0), (-1.0, 1.0)], &[17, 17]).unwrap());
        let level = LevelSpec::elliptic(0.05, 0.45, 1.0, 1.0).with_epsilon(0.1);
        let mask = Arc::new(classify_nodes(grid.clone(), &level).unwrap());
        let exact = Field::from_fn(grid, |p| 1.0 + 0.3 * p[0] + 0.2 * p[1] * p[1]);
        let data = CauchyData::from_field(&mask, &exact).unwrap();
        (Arc::new(SobolevSpace::standard(mask).unwrap()), data, exact)
    }

    #[test]
    fn extension_matches_data_and_is_linear_in_normal() {
        let (space, data, exact) = setup();
        let base = CauchyExtension::build(space.mask(), &data);
        assert_eq!(data.max_violation(&base), 0.0);
        // exact field is linear in x₁, so the extension reproduces it
        let mask = space.mask();
        for n in mask.masked_nodes() {
            assert!((base.values()[n] - exact.values()[n]).abs() < 1e-12);
        }
    }

    #[test]
    fn samples_lie_in_ball_and_keep_data() {
        let (space, data, _) = setup();
        let base = CauchyExtension::build(space.mask(), &data);
        let r = 2.0 * space.norm(&base).unwrap() + 1.0;
        let sampler = BallSampler::new(space.clone(), base.clone(), r).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let u = sampler.sample(&mut rng);
            let n = space.norm(&u).unwrap();
            assert!(n <= r * (1.0 + 1e-12) && n >= sampler.base_norm() * (1.0 - 1e-12));
            assert!(data.max_violation(&u) < 1e-14);
            assert!(u.sub(&base).max_abs() > 0.0);
        }
        let again = BallSampler::new(space.clone(), base, r).unwrap();
        let a = sampler.sample(&mut ChaCha8Rng::seed_from_u64(9));
        let b = again.sample(&mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn base_outside_ball_rejected() {
        let (space, data, _) = setup();
        let base = CauchyExtension::build(space.mask(), &data);
        let n = space.norm(&base).unwrap();
        assert!(BallSampler::new(space, base, 0.5 * n).is_err());
    }
}
