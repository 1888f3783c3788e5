//! Closed-form ground-truth surfaces sampled into point clouds.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{DataError, PointCloud};
use crate::geometry::{surface_point, MetricTensor};
use crate::surface::{AnalyticSurface, UvPoint};
use crate::vec3::{self, Vec3};

/// Midpoint-rule resolution per side for areas without a closed form.
pub const AREA_QUADRATURE_RESOLUTION: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SurfaceKind {
    /// Unit square in the `z = 0` plane.
    Plane,
    /// Polar cap of a sphere around `+z`, up to `max_polar` from the pole.
    SphereCap { radius: f64, max_polar: f64 },
    /// Cylinder strip, see [`AnalyticSurface::Cylinder`].
    Cylinder {
        radius: f64,
        angle_span: f64,
        height: f64,
    },
    /// `(u, v, a sin(2πfu) sin(2πfv))`
    WavyCloth { amplitude: f64, frequency: f64 },
}

impl SurfaceKind {
    pub const NAMES: &'static [&'static str] = &["plane", "sphere-cap", "cylinder", "wavy-cloth"];

    pub fn sphere_cap() -> Self {
        SurfaceKind::SphereCap {
            radius: 1.0,
            max_polar: PI / 4.0,
        }
    }

    pub fn cylinder() -> Self {
        SurfaceKind::Cylinder {
            radius: 0.5,
            angle_span: PI,
            height: 1.0,
        }
    }

    pub fn wavy_cloth() -> Self {
        SurfaceKind::WavyCloth {
            amplitude: 0.1,
            frequency: 1.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SurfaceKind::Plane => "plane",
            SurfaceKind::SphereCap { .. } => "sphere-cap",
            SurfaceKind::Cylinder { .. } => "cylinder",
            SurfaceKind::WavyCloth { .. } => "wavy-cloth",
        }
    }

    /// The analytic mapping that generates this surface. For the sphere cap
    /// the parameters are (longitude, latitude) rather than the unit square.
    pub fn mapping(&self) -> AnalyticSurface {
        match *self {
            SurfaceKind::Plane => AnalyticSurface::Plane,
            SurfaceKind::SphereCap { radius, .. } => AnalyticSurface::Sphere { radius },
            SurfaceKind::Cylinder {
                radius,
                angle_span,
                height,
            } => AnalyticSurface::Cylinder {
                radius,
                angle_span,
                height,
            },
            SurfaceKind::WavyCloth {
                amplitude,
                frequency,
            } => AnalyticSurface::WavyCloth {
                amplitude,
                frequency,
            },
        }
    }

    fn validate(&self) -> Result<(), DataError> {
        let ok = match *self {
            SurfaceKind::Plane => true,
            SurfaceKind::SphereCap { radius, max_polar } => {
                radius > 0.0 && max_polar > 0.0 && max_polar <= PI
            }
            SurfaceKind::Cylinder {
                radius,
                angle_span,
                height,
            } => radius > 0.0 && angle_span > 0.0 && height > 0.0,
            SurfaceKind::WavyCloth {
                amplitude,
                frequency,
            } => amplitude >= 0.0 && frequency.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(DataError::Invalid(format!(
                "invalid surface parameters {self:?}"
            )))
        }
    }

    /// Exact area, or midpoint quadrature for the wavy cloth.
    pub fn area(&self) -> f64 {
        match *self {
            SurfaceKind::Plane => 1.0,
            SurfaceKind::SphereCap { radius, max_polar } => {
                2.0 * PI * radius * radius * (1.0 - max_polar.cos())
            }
            SurfaceKind::Cylinder {
                radius,
                angle_span,
                height,
            } => radius * angle_span * height,
            SurfaceKind::WavyCloth {
                amplitude,
                frequency,
            } => wavy_cloth_area(amplitude, frequency, AREA_QUADRATURE_RESOLUTION),
        }
    }
}

impl FromStr for SurfaceKind {
    type Err = DataError;

    /// Parses a kind name with its default parameters.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plane" => Ok(SurfaceKind::Plane),
            "sphere-cap" => Ok(SurfaceKind::sphere_cap()),
            "cylinder" => Ok(SurfaceKind::cylinder()),
            "wavy-cloth" => Ok(SurfaceKind::wavy_cloth()),
            other => Err(DataError::Invalid(format!(
                "unknown surface kind `{other}` (expected one of {})",
                SurfaceKind::NAMES.join(", ")
            ))),
        }
    }
}

/// Area of the wavy cloth by the midpoint rule on a `res × res` grid.
pub fn wavy_cloth_area(amplitude: f64, frequency: f64, res: usize) -> f64 {
    let s = AnalyticSurface::WavyCloth {
        amplitude,
        frequency,
    };
    let h = 1.0 / res as f64;
    let mut total = 0.0;
    for i in 0..res {
        let u = (i as f64 + 0.5) * h;
        let mut row = 0.0;
        for j in 0..res {
            let jets = s.eval_jets(UvPoint::new(u, (j as f64 + 0.5) * h));
            let fu = jets.map(|x| x.du);
            let fv = jets.map(|x| x.dv);
            row += MetricTensor::from_jacobian(fu, fv).area_element();
        }
        total += row;
    }
    total * h * h
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSurfaceSpec {
    pub kind: SurfaceKind,
    pub samples: usize,
    pub noise: f64,
    pub seed: u64,
}

impl SyntheticSurfaceSpec {
    pub fn new(kind: SurfaceKind, samples: usize, seed: u64) -> Self {
        Self {
            kind,
            samples,
            noise: 0.0,
            seed,
        }
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise = sigma;
        self
    }
}

/// A generated target. Normals and curvatures are those of the clean
/// surface at each sample's generating parameter, before noise.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticShape {
    pub cloud: PointCloud,
    pub params: Vec<UvPoint>,
    pub mean_curvature: Vec<f64>,
    pub gauss_curvature: Vec<f64>,
    pub area: f64,
}

pub fn generate(spec: &SyntheticSurfaceSpec) -> Result<SyntheticShape, DataError> {
    spec.kind.validate()?;
    if spec.samples == 0 {
        return Err(DataError::Invalid(
            "sample count must be at least one".into(),
        ));
    }
    if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return Err(DataError::Invalid(format!(
            "noise must be non-negative, got {}",
            spec.noise
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mapping = spec.kind.mapping();
    let n = spec.samples;
    let (mut points, mut normals) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let (mut mean, mut gauss, mut params) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for _ in 0..n {
        let uv = match spec.kind {
            SurfaceKind::SphereCap { max_polar, .. } => {
                // uniform in z gives uniform area on a sphere
                let z: f64 = rng.random_range(max_polar.cos()..=1.0);
                UvPoint::new(rng.random_range(0.0..2.0 * PI), z.clamp(-1.0, 1.0).asin())
            }
            _ => UvPoint::new(rng.random(), rng.random()),
        };
        let (p, nrm, h, k) = match spec.kind {
            SurfaceKind::SphereCap { radius, .. } => {
                // closed form avoids the parametrization's pole singularity
                let p = mapping.position(uv);
                (
                    p,
                    vec3::scale(p, 1.0 / vec3::norm(p)),
                    1.0 / radius,
                    1.0 / (radius * radius),
                )
            }
            _ => {
                let sp = surface_point(&mapping.eval_jets(uv));
                let nrm = sp
                    .normal
                    .ok_or_else(|| DataError::Invalid("degenerate generating mapping".into()))?;
                (
                    sp.position,
                    nrm,
                    sp.c_mean.unwrap_or(0.0),
                    sp.c_gauss.unwrap_or(0.0),
                )
            }
        };
        points.push(p);
        normals.push(nrm);
        mean.push(h);
        gauss.push(k);
        params.push(uv);
    }
    if spec.noise > 0.0 {
        let dist = Normal::new(0.0, spec.noise).map_err(|e| DataError::Invalid(e.to_string()))?;
        for p in &mut points {
            *p = std::array::from_fn::<f64, 3, _>(|a| p[a] + dist.sample(&mut rng));
        }
    }
    let cloud = PointCloud::new(points).with_normals(normals)?;
    Ok(SyntheticShape {
        cloud,
        params,
        mean_curvature: mean,
        gauss_curvature: gauss,
        area: spec.kind.area(),
    })
}

/// Sum of triangle areas of an indexed mesh.
pub fn triangulated_area(vertices: &[Vec3], triangles: &[[usize; 3]]) -> Result<f64, DataError> {
    let mut total = 0.0;
    for (t, tri) in triangles.iter().enumerate() {
        if let Some(&index) = tri.iter().find(|&&i| i >= vertices.len()) {
            return Err(DataError::IndexOutOfRange {
                triangle: t,
                index,
                count: vertices.len(),
            });
        }
        let [a, b, c] = tri.map(|i| vertices[i]);
        total += 0.5 * vec3::norm(vec3::cross(vec3::sub(b, a), vec3::sub(c, a)));
    }
    Ok(total)
}
