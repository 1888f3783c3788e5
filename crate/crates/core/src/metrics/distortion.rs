//! Per-point conformal distortion on a UV grid.
//!
//! The maps hold the unaveraged summands of the conformal penalties, so
//! the mean of each map over all patches approximates the matching loss
//! term.

use super::MetricsError;
use crate::geometry::{MetricTensor, DEGENERACY_EPS};
use crate::surface::{Codeword, SurfaceMapping, UvPoint};

#[derive(Debug, Clone, PartialEq)]
pub struct PatchDistortion {
    /// Area estimate from the grid.
    pub area: f64,
    /// Row-major `resolution × resolution` grids indexed `[iu * res + iv]`.
    pub d_e: Vec<f64>,
    pub d_g: Vec<f64>,
    pub d_sk: Vec<f64>,
    pub d_str: Vec<f64>,
    /// Cells whose Jacobian is degenerate (every cell of a zero-area patch).
    pub degenerate: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistortionMap {
    pub resolution: usize,
    pub patches: Vec<PatchDistortion>,
}

impl DistortionMap {
    /// Mean of each map over every cell of every patch, in the order
    /// `[D_E, D_G, D_sk, D_str]`.
    pub fn means(&self) -> [f64; 4] {
        let n = (self.patches.len() * self.resolution * self.resolution) as f64;
        let mut out = [0.0; 4];
        for p in &self.patches {
            for (o, m) in out.iter_mut().zip([&p.d_e, &p.d_g, &p.d_sk, &p.d_str]) {
                *o += m.iter().sum::<f64>();
            }
        }
        out.map(|s| s / n)
    }
}

/// Evaluates every patch at the centres of a `resolution²` grid of cells.
pub fn distortion_map<M: SurfaceMapping>(
    patches: &[M],
    code: &Codeword,
    resolution: usize,
) -> Result<DistortionMap, MetricsError> {
    if resolution < 2 {
        return Err(MetricsError::InvalidResolution(resolution));
    }
    if patches.is_empty() {
        return Err(MetricsError::Empty("patch list"));
    }
    let h = 1.0 / resolution as f64;
    let cells: Vec<UvPoint> = (0..resolution)
        .flat_map(|i| {
            (0..resolution).map(move |j| UvPoint::new((i as f64 + 0.5) * h, (j as f64 + 0.5) * h))
        })
        .collect();
    let metrics = patches
        .iter()
        .map(|m| {
            cells
                .iter()
                .map(|&uv| {
                    let j = m.evaluate(code, uv)?;
                    Ok(MetricTensor::from_jacobian(
                        j.map(|x| x.du),
                        j.map(|x| x.dv),
                    ))
                })
                .collect::<Result<Vec<_>, MetricsError>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    let n = (patches.len() * cells.len()) as f64;
    let mu_e = metrics.iter().flatten().map(|m| m.e).sum::<f64>() / n;
    let mu_g = metrics.iter().flatten().map(|m| m.g).sum::<f64>() / n;
    let patches = metrics
        .into_iter()
        .map(|ms| {
            let area = ms.iter().map(MetricTensor::area_element).sum::<f64>() / ms.len() as f64;
            let degenerate: Vec<bool> = ms
                .iter()
                .map(|m| !(area > DEGENERACY_EPS) || m.det() <= DEGENERACY_EPS)
                .collect();
            let map = |f: &dyn Fn(&MetricTensor) -> f64| -> Vec<f64> {
                if area > DEGENERACY_EPS {
                    ms.iter().map(|m| (f(m) / area).powi(2)).collect()
                } else {
                    vec![0.0; ms.len()]
                }
            };
            PatchDistortion {
                area,
                d_e: map(&|m| m.e - mu_e),
                d_g: map(&|m| m.g - mu_g),
                d_sk: map(&|m| m.f),
                d_str: map(&|m| m.e - m.g),
                degenerate,
            }
        })
        .collect();
    Ok(DistortionMap {
        resolution,
        patches,
    })
}
