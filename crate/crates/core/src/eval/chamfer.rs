use rayon::prelude::*;

use super::EvalError;
use crate::cloud::PointCloud;
use crate::spatial::KdTree;

/// Nearest-neighbor distances from one cloud to another.
#[derive(Debug, Clone, PartialEq)]
pub struct ChamferReport {
    pub mean: f64,
    /// Population standard deviation of `per_point`.
    pub std: f64,
    pub per_point: Vec<f64>,
}

impl ChamferReport {
    pub fn from_distances(per_point: Vec<f64>) -> Self {
        let n = per_point.len() as f64;
        let mean = per_point.iter().sum::<f64>() / n;
        let var = per_point.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
            per_point,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChamferResult {
    /// pred → ref.
    pub forward: ChamferReport,
    /// ref → pred, only in symmetric mode.
    pub backward: Option<ChamferReport>,
}

impl ChamferResult {
    /// Average of both directional means, or the forward mean.
    pub fn mean(&self) -> f64 {
        match &self.backward {
            Some(b) => 0.5 * (self.forward.mean + b.mean),
            None => self.forward.mean,
        }
    }

    pub fn std(&self) -> f64 {
        match &self.backward {
            Some(b) => 0.5 * (self.forward.std + b.std),
            None => self.forward.std,
        }
    }
}

fn directional(from: &PointCloud, to: &PointCloud) -> ChamferReport {
    let tree = KdTree::build(&to.positions);
    let d: Vec<f64> = from
        .positions
        .par_iter()
        .map(|p| tree.nearest(p).expect("non-empty tree").distance())
        .collect();
    ChamferReport::from_distances(d)
}

pub fn chamfer(
    pred: &PointCloud,
    reference: &PointCloud,
    symmetric: bool,
) -> Result<ChamferResult, EvalError> {
    if pred.is_empty() {
        return Err(EvalError::EmptyCloud("predicted"));
    }
    if reference.is_empty() {
        return Err(EvalError::EmptyCloud("reference"));
    }
    Ok(ChamferResult {
        forward: directional(pred, reference),
        backward: symmetric.then(|| directional(reference, pred)),
    })
}

const VIRIDIS: [[f64; 3]; 9] = [
    [0.267004, 0.004874, 0.329415],
    [0.278826, 0.175490, 0.483397],
    [0.229739, 0.322361, 0.545706],
    [0.172719, 0.448791, 0.557885],
    [0.127568, 0.566949, 0.550556],
    [0.157851, 0.683765, 0.501686],
    [0.369214, 0.788888, 0.382914],
    [0.678489, 0.863742, 0.189503],
    [0.993248, 0.906157, 0.143936],
];

/// Piecewise-linear viridis; `t` is clamped to [0, 1].
pub fn viridis(t: f64) -> [f64; 3] {
    let t = if t.is_nan() { 0.0 } else { t.clamp(0.0, 1.0) };
    let x = t * (VIRIDIS.len() - 1) as f64;
    let i = (x.floor() as usize).min(VIRIDIS.len() - 2);
    let f = x - i as f64;
    let (a, b) = (VIRIDIS[i], VIRIDIS[i + 1]);
    [0, 1, 2].map(|c| a[c] + f * (b[c] - a[c]))
}

/// Colors `pred` by its per-point distances.
pub fn distance_colored_cloud(
    report: &ChamferReport,
    pred: &PointCloud,
    cmap_max: f64,
) -> Result<PointCloud, EvalError> {
    if report.per_point.len() != pred.len() {
        return Err(EvalError::Parameter(format!(
            "{} distances for {} points",
            report.per_point.len(),
            pred.len()
        )));
    }
    if !(cmap_max > 0.0) {
        return Err(EvalError::Parameter(format!(
            "cmap_max must be positive, got {cmap_max}"
        )));
    }
    let colors = report.per_point.iter().map(|d| viridis(d / cmap_max)).collect();
    Ok(PointCloud {
        positions: pred.positions.clone(),
        colors: Some(colors),
    })
}
