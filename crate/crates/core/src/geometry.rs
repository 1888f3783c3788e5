//! Differential surface properties computed from exact UV derivatives.
//!
//! With `J = [f_u f_v]` the normal is `f_u × f_v / |f_u × f_v|`, the metric
//! tensor is `JᵀJ = [[E, F], [F, G]]`, and the curvatures are
//!
//! ```text
//! c_mean  = −1/(2 det g) · nᵀ (f_uu G − 2 f_uv F + f_vv E)
//! c_gauss = ((f_uu·n)(f_vv·n) − (f_uv·n)²) / (EG − F²)
//! ```
//!
//! The area element is `√(EG − F²)`; averaging it over uniform samples of
//! the unit parameter square estimates the patch area.

use crate::jets::Jet2;
use crate::surface::{Codeword, SurfaceError, SurfaceMapping, UvPoint};
use crate::vec3::{self, Vec3};

/// Below this value of `EG − F²` the Jacobian is treated as degenerate.
pub const DEGENERACY_EPS: f64 = 1e-12;

/// First fundamental form.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricTensor {
    pub e: f64,
    pub f: f64,
    pub g: f64,
}

impl MetricTensor {
    pub fn from_jacobian(fu: Vec3, fv: Vec3) -> Self {
        Self {
            e: vec3::dot(fu, fu),
            f: vec3::dot(fu, fv),
            g: vec3::dot(fv, fv),
        }
    }

    pub fn det(&self) -> f64 {
        self.e * self.g - self.f * self.f
    }

    /// `√(EG − F²)`, clamped at zero against rounding.
    pub fn area_element(&self) -> f64 {
        self.det().max(0.0).sqrt()
    }
}

/// A decoded point with its differential properties. Normal and
/// curvatures are `None` when the Jacobian is degenerate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub position: Vec3,
    pub fu: Vec3,
    pub fv: Vec3,
    pub metric: MetricTensor,
    pub normal: Option<Vec3>,
    pub c_mean: Option<f64>,
    pub c_gauss: Option<f64>,
    pub area_element: f64,
}

impl SurfacePoint {
    pub fn is_degenerate(&self) -> bool {
        self.normal.is_none()
    }
}

fn column(j: &[Jet2; 3], f: impl Fn(&Jet2) -> f64) -> Vec3 {
    [f(&j[0]), f(&j[1]), f(&j[2])]
}

/// Normal from the first derivatives alone.
pub fn normal_from_jacobian(fu: Vec3, fv: Vec3) -> Option<Vec3> {
    let metric = MetricTensor::from_jacobian(fu, fv);
    if metric.det() <= DEGENERACY_EPS {
        return None;
    }
    let c = vec3::cross(fu, fv);
    Some(vec3::scale(c, 1.0 / vec3::norm(c)))
}

/// All properties at one point from its three coordinate jets.
pub fn surface_point(jets: &[Jet2; 3]) -> SurfacePoint {
    let position = column(jets, |j| j.val);
    let fu = column(jets, |j| j.du);
    let fv = column(jets, |j| j.dv);
    let metric = MetricTensor::from_jacobian(fu, fv);
    let area_element = metric.area_element();
    let det = metric.det();
    let normal = normal_from_jacobian(fu, fv);
    let (c_mean, c_gauss) = match normal {
        Some(n) => {
            let fuu = column(jets, |j| j.duu);
            let fuv = column(jets, |j| j.duv);
            let fvv = column(jets, |j| j.dvv);
            let (l, m, nn) = (vec3::dot(fuu, n), vec3::dot(fuv, n), vec3::dot(fvv, n));
            let mean = -(l * metric.g - 2.0 * m * metric.f + nn * metric.e) / (2.0 * det);
            let gauss = (l * nn - m * m) / det;
            (Some(mean), Some(gauss))
        }
        None => (None, None),
    };
    SurfacePoint {
        position,
        fu,
        fv,
        metric,
        normal,
        c_mean,
        c_gauss,
        area_element,
    }
}

/// Evaluates `mapping` at every sample and returns the surface points.
pub fn surface_points<M: SurfaceMapping>(
    mapping: &M,
    code: &Codeword,
    samples: &[UvPoint],
) -> Result<Vec<SurfacePoint>, SurfaceError> {
    samples
        .iter()
        .map(|&uv| mapping.evaluate(code, uv).map(|j| surface_point(&j)))
        .collect()
}

/// Monte-Carlo (or quadrature, for a lattice) estimate of the patch area:
/// the domain area times the mean area element.
pub fn patch_area<M: SurfaceMapping>(
    mapping: &M,
    code: &Codeword,
    samples: &[UvPoint],
) -> Result<f64, SurfaceError> {
    if samples.is_empty() {
        return Err(SurfaceError::EmptySample);
    }
    let mut total = 0.0;
    for &uv in samples {
        let j = mapping.evaluate(code, uv)?;
        total +=
            MetricTensor::from_jacobian(column(&j, |x| x.du), column(&j, |x| x.dv)).area_element();
    }
    let domain = (crate::surface::UV_MAX - crate::surface::UV_MIN).powi(2);
    Ok(domain * total / samples.len() as f64)
}

/// Unit normals at every sample; `None` where the Jacobian is degenerate.
pub fn normals_batch<M: SurfaceMapping>(
    mapping: &M,
    code: &Codeword,
    samples: &[UvPoint],
) -> Result<Vec<Option<Vec3>>, SurfaceError> {
    samples
        .iter()
        .map(|&uv| {
            let j = mapping.evaluate(code, uv)?;
            Ok(normal_from_jacobian(
                column(&j, |x| x.du),
                column(&j, |x| x.dv),
            ))
        })
        .collect()
}
