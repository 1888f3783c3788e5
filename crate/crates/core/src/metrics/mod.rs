//! Evaluation metrics for multi-patch reconstructions.
//!
//! - `m_ae`: mean angle between each predicted normal and the normal of its
//!   nearest target point, ignoring orientation.
//! - `m_col`: number of patches whose area falls below `c_A` times the mean
//!   patch area.
//! - `m_olap(t)`: for each target point, the number of patches with a point
//!   within `t`, averaged over the target.
//! - `m_H`, `m_K`: mean absolute mean and Gaussian curvature.

mod distortion;
mod quadric;
mod report;

pub use distortion::{distortion_map, DistortionMap, PatchDistortion};
pub use quadric::{quadric_curvature, QuadricEstimate, MIN_QUADRIC_NEIGHBORS};
pub use report::{evaluate_model, EvalConfig, MetricsReport};

use crate::data::PointCloud;
use crate::geometry::SurfacePoint;
use crate::neighbors::KdIndex;
use crate::surface::SurfaceError;
use crate::vec3::{self, Vec3};

/// Default collapse threshold `c_A`.
pub const COLLAPSE_FRACTION: f64 = 1e-3;

/// Overlap radii reported by default.
pub const DEFAULT_OLAP_THRESHOLDS: [f64; 3] = [0.01, 0.05, 0.1];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("{0} cloud has no normals")]
    MissingNormals(&'static str),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("every evaluated point is degenerate")]
    AllDegenerate,
    #[error("threshold must be positive, got {0}")]
    InvalidThreshold(f64),
    #[error("only {found} neighbours within the radius, at least {needed} required")]
    InsufficientNeighbors { found: usize, needed: usize },
    #[error("grid resolution must be at least 2, got {0}")]
    InvalidResolution(usize),
    #[error(transparent)]
    Surface(#[from] SurfaceError),
}

/// Mean unoriented angle in degrees between predicted normals and the
/// normals of their nearest target points.
pub fn angular_error(pred: &PointCloud, gt: &PointCloud) -> Result<f64, MetricsError> {
    let pn = pred
        .normals()
        .ok_or(MetricsError::MissingNormals("predicted"))?;
    let gn = gt.normals().ok_or(MetricsError::MissingNormals("target"))?;
    if pred.is_empty() || gt.is_empty() {
        return Err(MetricsError::Empty("point cloud"));
    }
    let index = KdIndex::build(gt.points()).map_err(|_| MetricsError::Empty("target cloud"))?;
    Ok(angular_error_indexed(pred.points(), pn, gn, &index))
}

/// [`angular_error`] against a prebuilt target index.
pub fn angular_error_indexed(
    points: &[Vec3],
    normals: &[Vec3],
    gt_normals: &[Vec3],
    gt_index: &KdIndex,
) -> f64 {
    let mut total = 0.0;
    for (p, n) in points.iter().zip(normals) {
        let (j, _) = gt_index.nearest(*p);
        total += vec3::dot(*n, gt_normals[j]).abs().clamp(-1.0, 1.0).acos();
    }
    (total / points.len() as f64).to_degrees()
}

/// Result of [`collapse_count`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CollapseCount {
    pub collapsed: usize,
    /// Every area is zero; all patches are reported as collapsed.
    pub degenerate: bool,
}

/// Patches with `A⁽ᵏ⁾ < c_A · mean(A)`.
pub fn collapse_count(areas: &[f64], c_a: f64) -> CollapseCount {
    let mean = areas.iter().sum::<f64>() / areas.len() as f64;
    if !(mean > 0.0) {
        return CollapseCount {
            collapsed: areas.len(),
            degenerate: true,
        };
    }
    let threshold = c_a * mean;
    CollapseCount {
        collapsed: areas.iter().filter(|&&a| a < threshold).count(),
        degenerate: false,
    }
}

/// `m_olap` at each radius in `thresholds`: for every ground-truth point,
/// the number of patches with at least one point within the radius,
/// averaged over the ground truth.
pub fn overlap_counts(
    patches: &[Vec<Vec3>],
    gt: &[Vec3],
    thresholds: &[f64],
) -> Result<Vec<f64>, MetricsError> {
    if let Some(&t) = thresholds.iter().find(|&&t| !(t > 0.0)) {
        return Err(MetricsError::InvalidThreshold(t));
    }
    if gt.is_empty() {
        return Err(MetricsError::Empty("target cloud"));
    }
    let indices = patches
        .iter()
        .filter(|p| !p.is_empty())
        .map(|p| KdIndex::build(p).expect("non-empty"))
        .collect::<Vec<_>>();
    Ok(thresholds
        .iter()
        .map(|&t| {
            let hits: usize = gt
                .iter()
                .map(|&q| {
                    indices
                        .iter()
                        .filter(|idx| idx.nearest(q).1 <= t * t)
                        .count()
                })
                .sum();
            hits as f64 / gt.len() as f64
        })
        .collect())
}

/// `m_olap` at a single radius.
pub fn overlap_count(patches: &[Vec<Vec3>], gt: &[Vec3], t: f64) -> Result<f64, MetricsError> {
    Ok(overlap_counts(patches, gt, &[t])?[0])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureStats {
    pub m_h: f64,
    pub m_k: f64,
    /// Degenerate points left out of the means.
    pub excluded: usize,
}

pub fn curvature_stats(points: &[SurfacePoint]) -> Result<CurvatureStats, MetricsError> {
    let (mut h, mut k, mut n) = (0.0, 0.0, 0usize);
    for p in points {
        if let (Some(cm), Some(cg)) = (p.c_mean, p.c_gauss) {
            h += cm.abs();
            k += cg.abs();
            n += 1;
        }
    }
    if n == 0 {
        return Err(MetricsError::AllDegenerate);
    }
    Ok(CurvatureStats {
        m_h: h / n as f64,
        m_k: k / n as f64,
        excluded: points.len() - n,
    })
}
