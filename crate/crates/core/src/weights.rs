//! Carleman weight φ_λ = exp(λℓ) in shifted form.
//!
//! The functional multiplies φ_λ² by e^(−2λ(θ+ε)). Both factors are fused
//! into exp(2λ(ℓ − θ − ε)) before exponentiation so that neither the weight
//! nor the prefactor is ever formed on its own.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::level::{level_value, LevelSpec};
use crate::mask::{DomainMask, Label};

/// Largest exponent whose exponential is finite in f64.
pub const MAX_EXPONENT: f64 = 709.0;

#[derive(Debug, Clone)]
pub struct WeightSpec {
    level: LevelSpec,
    lambda: f64,
    epsilon: f64,
}

impl WeightSpec {
    pub fn new(level: LevelSpec, lambda: f64, epsilon: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "lambda = {lambda} must be at least 1"
            )));
        }
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "epsilon = {epsilon} must be positive"
            )));
        }
        Ok(Self {
            level,
            lambda,
            epsilon,
        })
    }

    /// Uses the ε resolved during classification.
    pub fn for_mask(level: LevelSpec, lambda: f64, mask: &DomainMask) -> Result<Self> {
        let w = Self::new(level, lambda, mask.epsilon())?;
        w.check_overflow(mask)?;
        Ok(w)
    }

    pub fn level(&self) -> &LevelSpec {
        &self.level
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.level.clone(), lambda, self.epsilon)
    }

    fn exponent_of(&self, level: f64) -> f64 {
        2.0 * self.lambda * (level - self.level.threshold() - self.epsilon)
    }

    fn weight_of(&self, level: f64) -> Result<f64> {
        let e = self.exponent_of(level);
        if e > MAX_EXPONENT || e.is_nan() {
            return Err(Error::WeightOverflow {
                lambda: self.lambda,
                max_level: level,
                exponent: e,
            });
        }
        Ok(e.exp())
    }

    pub fn check_overflow(&self, mask: &DomainMask) -> Result<()> {
        let max_level = mask
            .masked_nodes()
            .map(|n| mask.level()[n])
            .fold(f64::NEG_INFINITY, f64::max);
        self.weight_of(max_level).map(|_| ())
    }

    /// Shifted squared weight at every masked node, zero elsewhere.
    pub fn on_mask(&self, mask: &DomainMask) -> Result<Vec<f64>> {
        mask.labels()
            .iter()
            .zip(mask.level())
            .map(|(label, &l)| {
                if label.is_masked() {
                    self.weight_of(l)
                } else {
                    Ok(0.0)
                }
            })
            .collect()
    }
}

/// e^(−2λ(θ+ε)) φ_λ²(p) = exp(2λ(ℓ(p) − θ − ε)).
pub fn shifted_weight_sq(spec: &WeightSpec, point: &[f64]) -> Result<f64> {
    let l = level_value(&spec.level, point)?;
    spec.weight_of(l)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WeightExtrema {
    /// min of λℓ over the masked nodes
    pub min: f64,
    pub max: f64,
    pub argmin_label: Label,
    pub argmin_node: usize,
    pub argmax_node: usize,
}

/// Extremes of the unshifted log-weight λℓ over the masked nodes.
pub fn weight_extrema(spec: &WeightSpec, mask: &DomainMask) -> Result<WeightExtrema> {
    let mut best: Option<WeightExtrema> = None;
    for node in mask.masked_nodes() {
        let v = spec.lambda * mask.level()[node];
        let e = best.get_or_insert(WeightExtrema {
            min: v,
            max: v,
            argmin_label: mask.label(node),
            argmin_node: node,
            argmax_node: node,
        });
        if v < e.min {
            e.min = v;
            e.argmin_label = mask.label(node);
            e.argmin_node = node;
        }
        if v > e.max {
            e.max = v;
            e.argmax_node = node;
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("weight extrema of an empty mask".into()))
}
