//! Sampled convexity certificate and multi-start agreement.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::functional::{BetaClamp, BregmanGap, Functional, GradientMode};

use super::sampling::BallSampler;
use super::{run, OptimizerConfig, RunReport};

fn job_rng(seed: u64, job: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(job as u64);
    rng
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateReport {
    pub lambda: f64,
    pub beta: f64,
    pub beta_clamp: Option<BetaClamp>,
    pub radius: f64,
    pub samples: usize,
    pub failures: usize,
    /// min of gap − (β/2)‖h‖²_{H^k}
    pub min_margin: f64,
    /// min of gap / ((β/2)‖h‖²_{H^k})
    pub min_ratio: f64,
    pub h1_inner_min: f64,
    pub h1_inner_max: f64,
    pub pairs: Vec<BregmanGap>,
}

impl CertificateReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

pub fn convexity_certificate(
    f: &Functional,
    sampler: &BallSampler,
    samples: usize,
    seed: u64,
) -> Result<CertificateReport> {
    if samples == 0 {
        return Err(Error::InvalidArgument(
            "certificate needs at least one sample pair".into(),
        ));
    }
    f.h1_inner_space()?;
    let pairs: Vec<BregmanGap> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = job_rng(seed, i);
            let u1 = sampler.sample(&mut rng);
            let u2 = sampler.sample(&mut rng);
            f.bregman_gap(&u1, &u2)
        })
        .collect::<Result<_>>()?;
    let half_beta = 0.5 * f.beta();
    let failures = pairs.iter().filter(|p| !p.passes()).count();
    let min_margin = pairs.iter().map(|p| p.margin).fold(f64::INFINITY, f64::min);
    let min_ratio = pairs
        .iter()
        .filter(|p| p.hk_full > 0.0)
        .map(|p| p.gap / (half_beta * p.hk_full))
        .fold(f64::INFINITY, f64::min);
    let h1_inner_min = pairs
        .iter()
        .map(|p| p.h1_inner)
        .fold(f64::INFINITY, f64::min);
    let h1_inner_max = pairs.iter().map(|p| p.h1_inner).fold(0.0, f64::max);
    Ok(CertificateReport {
        lambda: f.weight().lambda(),
        beta: f.beta(),
        beta_clamp: f.beta_clamp(),
        radius: sampler.radius(),
        samples,
        failures,
        min_margin,
        min_ratio,
        h1_inner_min,
        h1_inner_max,
        pairs,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MultiStartReport {
    pub runs: Vec<RunReport>,
    #[serde(skip)]
    pub starts: Vec<Field>,
    pub max_pairwise_distance: f64,
    pub all_converged: bool,
    pub all_monotone: bool,
    pub max_q_hat: Option<f64>,
}

/// Runs the optimizer from `starts` random points of the ball.
pub fn multi_start(
    f: &Functional,
    sampler: &BallSampler,
    starts: usize,
    seed: u64,
    config: &OptimizerConfig,
) -> Result<MultiStartReport> {
    if starts == 0 {
        return Err(Error::InvalidArgument(
            "multi-start needs at least one start".into(),
        ));
    }
    if config.mode == GradientMode::Sobolev {
        f.riesz_solver()?;
    }
    let points: Vec<Field> = (0..starts)
        .map(|i| sampler.sample(&mut job_rng(seed, i)))
        .collect();
    let runs: Vec<RunReport> = points
        .par_iter()
        .map(|u0| run(f, u0, config))
        .collect::<Result<_>>()?;
    let space = f.space();
    let mut max_d: f64 = 0.0;
    for i in 0..runs.len() {
        for j in (i + 1)..runs.len() {
            let d = runs[i].final_field.sub(&runs[j].final_field);
            max_d = max_d.max(space.norm_sq_values(d.values()).sqrt());
        }
    }
    let max_q_hat = runs
        .iter()
        .map(|r| r.q_hat)
        .try_fold(0.0f64, |m, q| q.map(|q| m.max(q)));
    Ok(MultiStartReport {
        all_converged: runs.iter().all(|r| r.converged),
        all_monotone: runs.iter().all(|r| r.monotone),
        runs,
        starts: points,
        max_pairwise_distance: max_d,
        max_q_hat,
    })
}
