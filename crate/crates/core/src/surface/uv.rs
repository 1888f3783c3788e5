use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SurfaceError;

/// Lower and upper bound of the square parameter domain.
pub const UV_MIN: f64 = 0.0;
pub const UV_MAX: f64 = 1.0;

/// A point `r = (u, v)` of the parameter domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UvPoint {
    pub u: f64,
    pub v: f64,
}

impl UvPoint {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    /// Builds a point, rejecting coordinates outside the domain.
    pub fn checked(u: f64, v: f64) -> Result<Self, SurfaceError> {
        let p = Self { u, v };
        if p.in_domain() {
            Ok(p)
        } else {
            Err(SurfaceError::OutOfDomain { u, v })
        }
    }

    pub fn in_domain(&self) -> bool {
        (UV_MIN..=UV_MAX).contains(&self.u) && (UV_MIN..=UV_MAX).contains(&self.v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    /// Corners-inclusive lattice with `ceil(sqrt(n))` points per side.
    Grid,
    /// Independent uniform samples from a seeded generator.
    Random { seed: u64 },
}

pub fn sample_uv(n: usize, mode: SampleMode) -> Result<Vec<UvPoint>, SurfaceError> {
    if n == 0 {
        return Err(SurfaceError::EmptySample);
    }
    Ok(match mode {
        SampleMode::Grid => {
            let side = (n as f64).sqrt().ceil() as usize;
            // guard against float rounding in the ceil
            let side = if (side - 1) * (side - 1) >= n {
                side - 1
            } else {
                side
            };
            let side = side.max(1);
            if side == 1 {
                vec![UvPoint::new(
                    0.5 * (UV_MIN + UV_MAX),
                    0.5 * (UV_MIN + UV_MAX),
                )]
            } else {
                uv_lattice(side - 1)
            }
        }
        SampleMode::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            sample_uv_with(&mut rng, n)
        }
    })
}

/// Draws `n` uniform samples from the domain using `rng`.
pub fn sample_uv_with<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<UvPoint> {
    (0..n)
        .map(|_| {
            let u = rng.random_range(UV_MIN..UV_MAX);
            let v = rng.random_range(UV_MIN..UV_MAX);
            UvPoint::new(u, v)
        })
        .collect()
}

/// Lattice with `intervals + 1` points per side, ordered u-major.
///
/// Lattices nest: every point of `uv_lattice(n)` is a point of
/// `uv_lattice(m * n)`.
pub fn uv_lattice(intervals: usize) -> Vec<UvPoint> {
    let intervals = intervals.max(1);
    // i / n is correctly rounded, so refined lattices reproduce coarse coordinates exactly
    let coord = |i: usize| UV_MIN + (UV_MAX - UV_MIN) * (i as f64 / intervals as f64);
    let mut out = Vec::with_capacity((intervals + 1) * (intervals + 1));
    for i in 0..=intervals {
        for j in 0..=intervals {
            out.push(UvPoint::new(coord(i), coord(j)));
        }
    }
    out
}
