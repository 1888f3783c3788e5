//! Curvature estimated from a point cloud by local quadric fitting.

use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen, Vector3};

use super::MetricsError;
use crate::neighbors::KdIndex;
use crate::vec3::{self, Vec3};

/// A quadric has six coefficients.
pub const MIN_QUADRIC_NEIGHBORS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadricEstimate {
    pub c_mean: f64,
    pub c_gauss: f64,
    pub neighbors: usize,
}

/// Fits `z = a x² + b xy + c y² + d x + e y + f` to the neighbours of
/// `query` within `radius`, in the tangent frame from their covariance,
/// and returns the curvatures of that height field at the query point.
/// Signs follow the frame's arbitrary normal orientation.
pub fn quadric_curvature(
    points: &[Vec3],
    index: &KdIndex,
    query: Vec3,
    radius: f64,
) -> Result<QuadricEstimate, MetricsError> {
    if !(radius > 0.0) {
        return Err(MetricsError::InvalidThreshold(radius));
    }
    let nbrs = index.within_radius(query, radius);
    if nbrs.len() < MIN_QUADRIC_NEIGHBORS {
        return Err(MetricsError::InsufficientNeighbors {
            found: nbrs.len(),
            needed: MIN_QUADRIC_NEIGHBORS,
        });
    }
    let n = nbrs.len() as f64;
    let centroid = vec3::scale(
        nbrs.iter()
            .fold([0.0; 3], |acc, &i| vec3::add(acc, points[i])),
        1.0 / n,
    );
    let mut cov = Matrix3::zeros();
    for &i in &nbrs {
        let d = Vector3::from(vec3::sub(points[i], centroid));
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let axis = |k: usize| -> Vec3 { eig.eigenvectors.column(order[k]).into_owned().into() };
    let (normal, t1, t2) = (axis(0), axis(2), axis(1));

    // coordinates scaled by the radius keep the system well conditioned
    let mut a = DMatrix::zeros(nbrs.len(), 6);
    let mut z = DVector::zeros(nbrs.len());
    for (row, &i) in nbrs.iter().enumerate() {
        let d = vec3::sub(points[i], query);
        let (x, y) = (vec3::dot(d, t1) / radius, vec3::dot(d, t2) / radius);
        for (col, v) in [x * x, x * y, y * y, x, y, 1.0].into_iter().enumerate() {
            a[(row, col)] = v;
        }
        z[row] = vec3::dot(d, normal) / radius;
    }
    let coef =
        a.svd(true, true)
            .solve(&z, 1e-12)
            .map_err(|_| MetricsError::InsufficientNeighbors {
                found: nbrs.len(),
                needed: MIN_QUADRIC_NEIGHBORS,
            })?;
    let (fxx, fxy, fyy) = (
        2.0 * coef[0] / radius,
        coef[1] / radius,
        2.0 * coef[2] / radius,
    );
    let (fx, fy) = (coef[3], coef[4]);
    let w = 1.0 + fx * fx + fy * fy;
    let c_gauss = (fxx * fyy - fxy * fxy) / (w * w);
    let c_mean =
        ((1.0 + fx * fx) * fyy - 2.0 * fx * fy * fxy + (1.0 + fy * fy) * fxx) / (2.0 * w.powf(1.5));
    Ok(QuadricEstimate {
        c_mean,
        c_gauss,
        neighbors: nbrs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, SurfaceKind, SyntheticSurfaceSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn plane_has_zero_curvature() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<Vec3> = (0..2000)
            .map(|_| [rng.random(), rng.random(), 0.25])
            .collect();
        let index = KdIndex::build(&pts).unwrap();
        let q = quadric_curvature(&pts, &index, [0.5, 0.5, 0.25], 0.1).unwrap();
        assert!(q.c_mean.abs() < 1e-6 && q.c_gauss.abs() < 1e-6);
    }

    #[test]
    fn unit_sphere_gauss_curvature() {
        let kind = SurfaceKind::SphereCap {
            radius: 1.0,
            max_polar: std::f64::consts::PI,
        };
        let s = generate(&SyntheticSurfaceSpec::new(kind, 10_000, 2)).unwrap();
        let pts = s.cloud.points();
        let index = KdIndex::build(pts).unwrap();
        for &p in pts.iter().step_by(500) {
            let q = quadric_curvature(pts, &index, p, 0.1).unwrap();
            assert!((q.c_gauss - 1.0).abs() < 0.02, "{q:?}");
            assert!((q.c_mean.abs() - 1.0).abs() < 0.02, "{q:?}");
        }
    }

    #[test]
    fn too_few_neighbors() {
        let pts = vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let index = KdIndex::build(&pts).unwrap();
        assert!(matches!(
            quadric_curvature(&pts, &index, [0.0; 3], 2.0),
            Err(MetricsError::InsufficientNeighbors { found: 3, .. })
        ));
    }
}
