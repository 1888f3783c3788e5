//! Point clouds, synthetic targets and file formats.

mod io;
mod synthetic;

pub use io::{
    load_obj, load_ply, read_area_sidecar, save_obj, save_ply, write_area_sidecar,
    write_ply_columns, LoadReport, PlyColumn, PlyValues,
};
pub use synthetic::{
    generate, triangulated_area, wavy_cloth_area, SurfaceKind, SyntheticShape,
    SyntheticSurfaceSpec, AREA_QUADRATURE_RESOLUTION,
};

use crate::vec3::{self, Vec3};

/// Normals farther than this from unit length are renormalized on input.
const UNIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("triangle {triangle} references vertex {index}, but only {count} exist")]
    IndexOutOfRange {
        triangle: usize,
        index: usize,
        count: usize,
    },
}

/// Ordered 3D points with optional unit normals and patch labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Vec3>,
    normals: Option<Vec<Vec3>>,
    patch_ids: Option<Vec<u32>>,
    bbox: Option<(Vec3, Vec3)>,
}

fn bounding_box(points: &[Vec3]) -> Option<(Vec3, Vec3)> {
    let first = *points.first()?;
    Some(points.iter().fold((first, first), |(lo, hi), p| {
        (
            std::array::from_fn(|a| lo[a].min(p[a])),
            std::array::from_fn(|a| hi[a].max(p[a])),
        )
    }))
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        let bbox = bounding_box(&points);
        Self {
            points,
            normals: None,
            patch_ids: None,
            bbox,
        }
    }

    /// Attaches normals. Normals off unit length by more than 1e-9 are
    /// rescaled; zero-length or non-finite normals are rejected.
    pub fn with_normals(mut self, mut normals: Vec<Vec3>) -> Result<Self, DataError> {
        if normals.len() != self.points.len() {
            return Err(DataError::Invalid(format!(
                "{} normals for {} points",
                normals.len(),
                self.points.len()
            )));
        }
        for (i, n) in normals.iter_mut().enumerate() {
            let len = vec3::norm(*n);
            if !(len > 0.0 && len.is_finite()) {
                return Err(DataError::Invalid(format!(
                    "normal {i} has zero or non-finite length"
                )));
            }
            if (len - 1.0).abs() > UNIT_TOLERANCE {
                *n = vec3::scale(*n, 1.0 / len);
            }
        }
        self.normals = Some(normals);
        Ok(self)
    }

    pub fn with_patch_ids(mut self, ids: Vec<u32>) -> Result<Self, DataError> {
        if ids.len() != self.points.len() {
            return Err(DataError::Invalid(format!(
                "{} patch ids for {} points",
                ids.len(),
                self.points.len()
            )));
        }
        self.patch_ids = Some(ids);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[Vec3]> {
        self.normals.as_deref()
    }

    pub fn patch_ids(&self) -> Option<&[u32]> {
        self.patch_ids.as_deref()
    }

    /// Axis-aligned bounds, `None` for an empty cloud.
    pub fn bounding_box(&self) -> Option<(Vec3, Vec3)> {
        self.bbox
    }
}
