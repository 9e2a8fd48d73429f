use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::gaussian::{logit, quat_to_rotmat, GaussianSet};

/// Split children shrink by this factor.
pub const SPLIT_SCALE_DIVISOR: f64 = 1.6;
pub const SPLIT_CHILDREN: usize = 2;
/// Gaussians up to this fraction of the scene extent are cloned, larger
/// ones split.
pub const CLONE_EXTENT_FRACTION: f64 = 0.01;
/// World-space size (fraction of the extent) above which a Gaussian is pruned.
pub const PRUNE_EXTENT_FRACTION: f64 = 0.1;
/// Screen radius (px) above which a Gaussian is pruned.
pub const PRUNE_SCREEN_RADIUS: f64 = 20.0;

/// Where an output row of a densify step came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowOrigin {
    Kept(usize),
    Cloned(usize),
    Split(usize),
}

impl RowOrigin {
    /// Optimizer row to inherit: kept and cloned rows copy their source,
    /// split children start from zero.
    pub fn state_source(&self) -> Option<usize> {
        match *self {
            RowOrigin::Kept(i) | RowOrigin::Cloned(i) => Some(i),
            RowOrigin::Split(_) => None,
        }
    }
}

/// Per-Gaussian screen-space statistics gathered between densify steps.
#[derive(Debug, Clone, PartialEq)]
pub struct DensifyStats {
    pub grad_accum: Vec<f64>,
    pub visible_count: Vec<u32>,
    pub max_radius: Vec<f64>,
}

impl DensifyStats {
    pub fn new(n: usize) -> Self {
        Self {
            grad_accum: vec![0.0; n],
            visible_count: vec![0; n],
            max_radius: vec![0.0; n],
        }
    }

    pub fn record(&mut self, visible: &[bool], radii: &[f64], screen_grad_norm: &[f64]) {
        for i in 0..self.grad_accum.len() {
            if visible[i] {
                self.grad_accum[i] += screen_grad_norm[i];
                self.visible_count[i] += 1;
                self.max_radius[i] = self.max_radius[i].max(radii[i]);
            }
        }
    }

    pub fn mean_grad(&self, i: usize) -> f64 {
        match self.visible_count[i] {
            0 => 0.0,
            c => self.grad_accum[i] / c as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensifyParams {
    pub grad_threshold: f64,
    pub prune_opacity: f64,
    pub extent: f64,
    /// Also prune by screen and world size (after the first opacity reset).
    pub prune_large: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensifyOutcome {
    pub gaussians: GaussianSet,
    pub origins: Vec<RowOrigin>,
    pub cloned: usize,
    pub split: usize,
    pub pruned: usize,
}

impl DensifyOutcome {
    pub fn state_rows(&self) -> Vec<Option<usize>> {
        self.origins.iter().map(RowOrigin::state_source).collect()
    }
}

/// Clones small and splits large Gaussians whose mean screen gradient
/// reaches the threshold, then prunes transparent (and optionally oversized)
/// ones. Output order: surviving originals, clones, split children. At least
/// one Gaussian is kept whenever the input is non-empty.
pub fn densify_and_prune<R: Rng>(
    g: &GaussianSet,
    stats: &DensifyStats,
    p: &DensifyParams,
    rng: &mut R,
) -> DensifyOutcome {
    let n = g.len();
    let max_scale = |set: &GaussianSet, i: usize| set.scale(i).max();
    let clone_limit = CLONE_EXTENT_FRACTION * p.extent;
    let hot: Vec<bool> = (0..n).map(|i| stats.mean_grad(i) >= p.grad_threshold).collect();

    let mut out = GaussianSet::empty(g.sh_degree);
    let mut origins = Vec::new();
    let mut radii = Vec::new();
    for i in 0..n {
        if !(hot[i] && max_scale(g, i) > clone_limit) {
            g.push_row_from(i, &mut out);
            origins.push(RowOrigin::Kept(i));
            radii.push(stats.max_radius[i]);
        }
    }
    let mut cloned = 0;
    for i in 0..n {
        if hot[i] && max_scale(g, i) <= clone_limit {
            g.push_row_from(i, &mut out);
            origins.push(RowOrigin::Cloned(i));
            radii.push(0.0);
            cloned += 1;
        }
    }
    let mut split = 0;
    for i in 0..n {
        if hot[i] && max_scale(g, i) > clone_limit {
            let s = g.scale(i);
            let r = quat_to_rotmat(&g.rotations[i]);
            let child_scale = g.log_scales[i].map(|v| v - SPLIT_SCALE_DIVISOR.ln());
            for _ in 0..SPLIT_CHILDREN {
                let z = Vector3::new(
                    rng.sample::<f64, _>(StandardNormal) * s.x,
                    rng.sample::<f64, _>(StandardNormal) * s.y,
                    rng.sample::<f64, _>(StandardNormal) * s.z,
                );
                let c = g.center(i) + r * z;
                out.push(
                    [c.x, c.y, c.z],
                    child_scale,
                    g.rotations[i],
                    g.opacity_logits[i],
                    g.sh_coeffs(i),
                );
                origins.push(RowOrigin::Split(i));
                radii.push(0.0);
            }
            split += 1;
        }
    }

    let world_limit = PRUNE_EXTENT_FRACTION * p.extent;
    let mut keep: Vec<usize> = (0..out.len())
        .filter(|&j| {
            let transparent = out.opacity(j) < p.prune_opacity;
            let large = p.prune_large && (radii[j] > PRUNE_SCREEN_RADIUS || max_scale(&out, j) > world_limit);
            !(transparent || large)
        })
        .collect();
    if keep.is_empty() && !out.is_empty() {
        let best = (0..out.len())
            .max_by(|&a, &b| {
                out.opacity_logits[a]
                    .total_cmp(&out.opacity_logits[b])
                    .then(b.cmp(&a))
            })
            .unwrap();
        log::warn!("densify would remove every Gaussian; keeping the most opaque one");
        keep.push(best);
    }
    let pruned = out.len() - keep.len();
    DensifyOutcome {
        gaussians: out.select(&keep),
        origins: keep.iter().map(|&j| origins[j]).collect(),
        cloned,
        split,
        pruned,
    }
}

/// Lowers every opacity to at most `ceiling`.
pub fn reset_opacity(g: &mut GaussianSet, ceiling: f64) {
    let cap = logit(ceiling);
    for o in &mut g.opacity_logits {
        *o = o.min(cap);
    }
}
