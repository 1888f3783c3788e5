//! Closed-form parametric surfaces evaluated with exact jets.
//!
//! They implement the same [`SurfaceMapping`] interface as the learned
//! decoders and serve as references for the geometry and data modules.

use std::f64::consts::PI;

use super::{Codeword, SurfaceError, SurfaceMapping, UvPoint};
use crate::jets::Jet2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnalyticSurface {
    /// `(u, v, 0)`
    Plane,
    /// `R (cos u cos v, sin u cos v, sin v)`
    Sphere { radius: f64 },
    /// `(u, v, u² − v²)`
    Saddle,
    /// `(u, v, a sin(2πfu) sin(2πfv))`
    WavyCloth { amplitude: f64, frequency: f64 },
    /// `u·a + v·b` for fixed 3-vectors `a`, `b`.
    Linear { a: [f64; 3], b: [f64; 3] },
    /// Half-open cylinder strip: `(r cos(φ), r sin(φ), h v)` with `φ = span·(u − ½)`.
    Cylinder {
        radius: f64,
        angle_span: f64,
        height: f64,
    },
    /// Constant point; every derivative vanishes.
    Point { at: [f64; 3] },
}

pub fn analytic_plane() -> AnalyticSurface {
    AnalyticSurface::Plane
}

pub fn analytic_sphere(radius: f64) -> Result<AnalyticSurface, SurfaceError> {
    if radius > 0.0 && radius.is_finite() {
        Ok(AnalyticSurface::Sphere { radius })
    } else {
        Err(SurfaceError::InvalidParameter(format!(
            "sphere radius must be positive, got {radius}"
        )))
    }
}

pub fn analytic_saddle() -> AnalyticSurface {
    AnalyticSurface::Saddle
}

impl AnalyticSurface {
    pub fn eval_jets(&self, uv: UvPoint) -> [Jet2; 3] {
        let u = Jet2::seed_u(uv.u);
        let v = Jet2::seed_v(uv.v);
        match *self {
            AnalyticSurface::Plane => [u, v, Jet2::ZERO],
            AnalyticSurface::Sphere { radius } => {
                let cv = v.cos();
                [
                    (u.cos() * cv).scale(radius),
                    (u.sin() * cv).scale(radius),
                    v.sin().scale(radius),
                ]
            }
            AnalyticSurface::Saddle => [u, v, u.square() - v.square()],
            AnalyticSurface::WavyCloth {
                amplitude,
                frequency,
            } => {
                let w = 2.0 * PI * frequency;
                let z = (u.scale(w).sin() * v.scale(w).sin()).scale(amplitude);
                [u, v, z]
            }
            AnalyticSurface::Linear { a, b } => {
                let c = |i: usize| u.scale(a[i]) + v.scale(b[i]);
                [c(0), c(1), c(2)]
            }
            AnalyticSurface::Cylinder {
                radius,
                angle_span,
                height,
            } => {
                let phi = (u + (-0.5)).scale(angle_span);
                [
                    phi.cos().scale(radius),
                    phi.sin().scale(radius),
                    v.scale(height),
                ]
            }
            AnalyticSurface::Point { at } => at.map(Jet2::constant),
        }
    }

    /// Position only.
    pub fn position(&self, uv: UvPoint) -> [f64; 3] {
        self.eval_jets(uv).map(|j| j.val)
    }
}

impl SurfaceMapping for AnalyticSurface {
    fn code_dim(&self) -> Option<usize> {
        None
    }

    fn evaluate(&self, _code: &Codeword, uv: UvPoint) -> Result<[Jet2; 3], SurfaceError> {
        Ok(self.eval_jets(uv))
    }
}
