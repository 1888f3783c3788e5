use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{init_decoder, Architecture, Codeword, DecoderGrad, PatchDecoder, SurfaceError};

/// `K` patch decoders plus one free codeword per training shape.
#[derive(Debug, Clone, PartialEq)]
pub struct AtlasModel {
    arch: Architecture,
    decoders: Vec<PatchDecoder>,
    codewords: Vec<Codeword>,
}

/// Gradient with the same layout as [`AtlasModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrad {
    pub decoders: Vec<DecoderGrad>,
    pub codewords: Vec<Vec<f64>>,
}

/// Codewords start uniform in this symmetric range.
const CODE_INIT_SCALE: f64 = 0.1;

impl AtlasModel {
    pub fn init(
        seed: u64,
        patches: usize,
        arch: Architecture,
        shapes: usize,
    ) -> Result<Self, SurfaceError> {
        if patches == 0 {
            return Err(SurfaceError::InvalidParameter(
                "a model needs at least one patch".into(),
            ));
        }
        let decoders = (0..patches).map(|k| init_decoder(seed, arch, k)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX);
        let codewords = (0..shapes)
            .map(|_| {
                Codeword(
                    (0..arch.code_dim)
                        .map(|_| rng.random_range(-CODE_INIT_SCALE..CODE_INIT_SCALE))
                        .collect(),
                )
            })
            .collect();
        Ok(Self {
            arch,
            decoders,
            codewords,
        })
    }

    pub fn from_parts(
        arch: Architecture,
        decoders: Vec<PatchDecoder>,
        codewords: Vec<Codeword>,
    ) -> Result<Self, SurfaceError> {
        if decoders.is_empty() {
            return Err(SurfaceError::InvalidParameter(
                "a model needs at least one patch".into(),
            ));
        }
        if let Some(d) = decoders.iter().find(|d| d.architecture() != arch) {
            return Err(SurfaceError::InvalidParameter(format!(
                "decoder {} has a different architecture",
                d.index()
            )));
        }
        if let Some(c) = codewords.iter().find(|c| c.len() != arch.code_dim) {
            return Err(SurfaceError::DimensionMismatch {
                expected: arch.code_dim,
                found: c.len(),
            });
        }
        Ok(Self {
            arch,
            decoders,
            codewords,
        })
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn num_patches(&self) -> usize {
        self.decoders.len()
    }

    pub fn num_shapes(&self) -> usize {
        self.codewords.len()
    }

    pub fn decoders(&self) -> &[PatchDecoder] {
        &self.decoders
    }

    pub fn decoder(&self, k: usize) -> &PatchDecoder {
        &self.decoders[k]
    }

    pub fn codewords(&self) -> &[Codeword] {
        &self.codewords
    }

    pub fn codeword(&self, shape: usize) -> &Codeword {
        &self.codewords[shape]
    }

    pub fn num_params(&self) -> usize {
        self.decoders.len() * self.arch.weight_count() + self.codewords.len() * self.arch.code_dim
    }

    /// Parameter slices in a fixed order: decoders (per layer weights, bias),
    /// then codewords.
    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self
            .decoders
            .iter()
            .flat_map(|d| d.param_slices())
            .collect();
        out.extend(self.codewords.iter().map(|c| c.as_slice()));
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self
            .decoders
            .iter_mut()
            .flat_map(|d| d.param_slices_mut())
            .collect();
        out.extend(self.codewords.iter_mut().map(|c| c.as_mut_slice()));
        out
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.param_slices().concat()
    }

    /// Mutable access to one parameter by its flat index.
    pub fn param_mut(&mut self, mut index: usize) -> Option<&mut f64> {
        for s in self.param_slices_mut() {
            if index < s.len() {
                return Some(&mut s[index]);
            }
            index -= s.len();
        }
        None
    }
}

impl ModelGrad {
    pub fn zeros(model: &AtlasModel) -> Self {
        Self {
            decoders: (0..model.num_patches())
                .map(|_| DecoderGrad::zeros(&model.arch))
                .collect(),
            codewords: vec![vec![0.0; model.arch.code_dim]; model.num_shapes()],
        }
    }

    /// Flattened in the order of [`AtlasModel::param_slices`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .decoders
            .iter()
            .flat_map(|d| d.slices())
            .flatten()
            .copied()
            .collect();
        for c in &self.codewords {
            out.extend_from_slice(c);
        }
        out
    }
}
