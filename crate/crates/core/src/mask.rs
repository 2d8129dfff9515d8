//! Node classification into the level-set subdomains G_c ⊃ G_(c+2ε), the
//! level surface ξ_c and the Cauchy boundary Γ_c, with trapezoid weights.

use std::collections::BTreeSet;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Side};
use crate::level::{level_value, LevelFamily, LevelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Outside,
    /// In G_c with a full 3^d neighborhood inside the closure of G_c.
    Interior,
    /// In G_c next to the level surface (or a non-Cauchy box face).
    XiBoundary,
    /// On the Cauchy face with ℓ > θ.
    CauchyBoundary,
    /// Interior node of G_(c+2ε).
    Inner,
}

impl Label {
    pub fn is_masked(self) -> bool {
        self != Label::Outside
    }

    /// Nodes where the PDE residual is assembled.
    pub fn has_residual(self) -> bool {
        matches!(self, Label::Interior | Label::Inner)
    }

    /// Nodes of G_c proper (the Cauchy face excluded).
    pub fn in_domain(self) -> bool {
        matches!(self, Label::Interior | Label::Inner | Label::XiBoundary)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub outside: usize,
    pub interior: usize,
    pub xi_boundary: usize,
    pub cauchy_boundary: usize,
    pub inner: usize,
}

impl LabelCounts {
    pub fn masked(&self) -> usize {
        self.interior + self.xi_boundary + self.cauchy_boundary + self.inner
    }
}

#[derive(Debug, Clone)]
pub struct DomainMask {
    grid: Arc<Grid>,
    family: LevelFamily,
    labels: Vec<Label>,
    quad_weight: Vec<f64>,
    level: Vec<f64>,
    theta: f64,
    epsilon: f64,
    normal_axis: usize,
    cauchy_faces: Vec<(usize, Side)>,
    time_axis: Option<usize>,
    layer0: Vec<usize>,
    layer1: Vec<usize>,
    constrained: Vec<bool>,
    counts: LabelCounts,
}

impl DomainMask {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn family(&self) -> LevelFamily {
        self.family
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn label(&self, node: usize) -> Label {
        self.labels[node]
    }

    pub fn quad_weight(&self) -> &[f64] {
        &self.quad_weight
    }

    /// ℓ evaluated at every grid node.
    pub fn level(&self) -> &[f64] {
        &self.level
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Effective ε (resolved default when the level spec left it unset).
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn normal_axis(&self) -> usize {
        self.normal_axis
    }

    pub fn cauchy_faces(&self) -> &[(usize, Side)] {
        &self.cauchy_faces
    }

    pub fn time_axis(&self) -> Option<usize> {
        self.time_axis
    }

    /// Number of spatial axes (all axes except time).
    pub fn spatial_dim(&self) -> usize {
        self.grid.dim() - usize::from(self.time_axis.is_some())
    }

    /// Cauchy face nodes (carrier of u|Γ).
    pub fn layer0(&self) -> &[usize] {
        &self.layer0
    }

    /// First inner layer along the face normal (carrier of ∂ₙu|Γ).
    pub fn layer1(&self) -> &[usize] {
        &self.layer1
    }

    pub fn is_constrained(&self, node: usize) -> bool {
        self.constrained[node]
    }

    /// Masked nodes that are not fixed by the Cauchy data.
    pub fn is_free(&self, node: usize) -> bool {
        self.labels[node].is_masked() && !self.constrained[node]
    }

    pub fn counts(&self) -> LabelCounts {
        self.counts
    }

    pub fn masked_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.labels.len()).filter(|&n| self.labels[n].is_masked())
    }

    pub fn residual_nodes(&self) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&n| self.labels[n].has_residual())
            .collect()
    }

    pub fn masked_volume(&self) -> f64 {
        self.quad_weight.iter().sum()
    }
}

fn cauchy_faces_for(spec: &LevelSpec, grid: &Grid) -> Vec<(usize, Side)> {
    match spec.family {
        LevelFamily::Hyperbolic => {
            let spatial = grid.dim() - 1;
            (0..spatial)
                .flat_map(|a| [(a, Side::Low), (a, Side::High)])
                .collect()
        }
        _ => vec![(0, Side::Low)],
    }
}

/// Classifies each grid node against the level spec.
pub fn classify_nodes(grid: Arc<Grid>, spec: &LevelSpec) -> Result<DomainMask> {
    spec.validate()?;
    let d = grid.dim();
    let time_dependent = spec.time_dependent();
    if time_dependent && d < 2 {
        return Err(Error::InvalidGrid(
            "time-dependent family needs at least one space and one time axis".into(),
        ));
    }
    let time_axis = time_dependent.then_some(d - 1);
    if spec.family == LevelFamily::Hyperbolic {
        if spec.x0.len() + 1 != d {
            return Err(Error::InvalidLevel(format!(
                "x0 has {} coordinates but the grid has {} spatial axes",
                spec.x0.len(),
                d - 1
            )));
        }
        for (axis, &x) in spec.x0.iter().enumerate() {
            if !(x > grid.origin()[axis] && x < grid.upper(axis)) {
                return Err(Error::InvalidLevel(format!(
                    "x0[{axis}] = {x} lies outside the spatial box"
                )));
            }
        }
    }

    let n = grid.len();
    let level: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|node| level_value(spec, &grid.point(node)))
        .collect::<Result<_>>()?;
    let theta = spec.threshold();
    let max_level = level.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max_level > theta) {
        return Err(Error::EmptyDomain { threshold: theta });
    }
    let epsilon = spec.epsilon.unwrap_or(0.1 * (max_level - theta));
    let inner_threshold = theta + 2.0 * epsilon;
    let above: Vec<bool> = level.iter().map(|&l| l > theta).collect();

    let faces = cauchy_faces_for(spec, &grid);
    let offsets = grid.box_offsets();

    let mut labels = vec![Label::Outside; n];
    for node in 0..n {
        if !above[node] {
            continue;
        }
        if let Some(t) = time_axis {
            if grid.on_face(node, t, Side::Low) || grid.on_face(node, t, Side::High) {
                return Err(Error::TimeBoundary {
                    node,
                    time: grid.coord(node, t),
                });
            }
        }
        if faces.iter().any(|&(a, s)| grid.on_face(node, a, s)) {
            labels[node] = Label::CauchyBoundary;
            continue;
        }
        let full_neighborhood = !grid.on_any_face(node)
            && offsets
                .iter()
                .all(|o| grid.offset(node, o).is_some_and(|q| above[q]));
        labels[node] = if !full_neighborhood {
            Label::XiBoundary
        } else if level[node] > inner_threshold {
            Label::Inner
        } else {
            Label::Interior
        };
    }

    let mut counts = LabelCounts::default();
    for l in &labels {
        match l {
            Label::Outside => counts.outside += 1,
            Label::Interior => counts.interior += 1,
            Label::XiBoundary => counts.xi_boundary += 1,
            Label::CauchyBoundary => counts.cauchy_boundary += 1,
            Label::Inner => counts.inner += 1,
        }
    }
    if counts.interior + counts.inner == 0 {
        return Err(Error::EmptyDomain { threshold: theta });
    }
    if counts.inner == 0 {
        return Err(Error::EmptyInner {
            threshold: inner_threshold,
            epsilon,
        });
    }
    if counts.cauchy_boundary == 0 {
        return Err(Error::EmptyCauchyBoundary);
    }

    let cell = grid.cell_volume();
    let quad_weight: Vec<f64> = (0..n)
        .map(|node| {
            if !labels[node].is_masked() {
                return 0.0;
            }
            let mut w = cell;
            for axis in 0..d {
                let open = |delta| {
                    grid.shift(node, axis, delta)
                        .is_some_and(|q| labels[q].is_masked())
                };
                if !(open(-1) && open(1)) {
                    w *= 0.5;
                }
            }
            w
        })
        .collect();

    let mut layer0 = Vec::new();
    let mut layer1 = BTreeSet::new();
    for node in 0..n {
        if labels[node] != Label::CauchyBoundary {
            continue;
        }
        layer0.push(node);
        for &(axis, side) in &faces {
            if !grid.on_face(node, axis, side) {
                continue;
            }
            let inward = if side == Side::Low { 1 } else { -1 };
            if let Some(q) = grid.shift(node, axis, inward) {
                if labels[q].is_masked() && labels[q] != Label::CauchyBoundary {
                    layer1.insert(q);
                }
            }
        }
    }
    let layer1: Vec<usize> = layer1.into_iter().collect();
    let mut constrained = vec![false; n];
    for &q in layer0.iter().chain(&layer1) {
        constrained[q] = true;
    }

    Ok(DomainMask {
        grid,
        family: spec.family,
        labels,
        quad_weight,
        level,
        theta,
        epsilon,
        normal_axis: faces[0].0,
        cauchy_faces: faces,
        time_axis,
        layer0,
        layer1,
        constrained,
        counts,
    })
}
