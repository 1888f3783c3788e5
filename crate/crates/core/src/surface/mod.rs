//! Surface mappings from the unit parameter square to 3D.
//!
//! Learned surfaces are unions of `K` independent [`PatchDecoder`]s, all
//! driven by a shared per-shape [`Codeword`]. [`AnalyticSurface`] provides
//! closed-form mappings behind the same [`SurfaceMapping`] interface.

mod analytic;
pub mod checkpoint;
mod decoder;
mod model;
mod uv;

pub use analytic::{analytic_plane, analytic_saddle, analytic_sphere, AnalyticSurface};
pub use decoder::{
    init_decoder, Architecture, DecoderGrad, DecoderTrace, Dense, JetBatch, JetOrder, PatchDecoder,
    DU, DUU, DUV, DV, DVV, VAL,
};
pub use model::{AtlasModel, ModelGrad};
pub use uv::{sample_uv, sample_uv_with, uv_lattice, SampleMode, UvPoint, UV_MAX, UV_MIN};

use crate::jets::Jet2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SurfaceError {
    #[error("codeword has length {found}, decoder expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("uv point ({u}, {v}) lies outside the parameter domain")]
    OutOfDomain { u: f64, v: f64 },
    #[error("sample count must be at least one")]
    EmptySample,
    #[error("codeword contains a non-finite entry")]
    NonFiniteCode,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Latent shape descriptor fed to every patch decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Codeword(Vec<f64>);

impl Codeword {
    pub fn new(values: Vec<f64>) -> Result<Self, SurfaceError> {
        if values.iter().all(|v| v.is_finite()) {
            Ok(Self(values))
        } else {
            Err(SurfaceError::NonFiniteCode)
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    /// The zero-length code used with analytic mappings.
    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Anything that maps `(codeword, uv)` to a 3D point with exact UV jets.
pub trait SurfaceMapping {
    /// Required codeword length, `None` if the code is ignored.
    fn code_dim(&self) -> Option<usize>;

    fn evaluate(&self, code: &Codeword, uv: UvPoint) -> Result<[Jet2; 3], SurfaceError>;
}

impl<T: SurfaceMapping + ?Sized> SurfaceMapping for &T {
    fn code_dim(&self) -> Option<usize> {
        (**self).code_dim()
    }

    fn evaluate(&self, code: &Codeword, uv: UvPoint) -> Result<[Jet2; 3], SurfaceError> {
        (**self).evaluate(code, uv)
    }
}
