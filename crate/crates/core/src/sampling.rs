//! Seeded point sets used by the numeric checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::Vector;

pub const DEFAULT_SEED: u64 = 0x5eed;

/// Shape and size of a sampled point set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleRegion {
    /// Uniform in the Euclidean ball of the given radius.
    Ball { radius: f64 },
    /// Uniform in the cube `[-half_width, half_width]^n`.
    Cube { half_width: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    pub count: usize,
    pub region: SampleRegion,
    pub seed: u64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            count: 50,
            region: SampleRegion::Ball { radius: 1.0 },
            seed: DEFAULT_SEED,
        }
    }
}

impl SampleConfig {
    pub fn ball(count: usize, radius: f64, seed: u64) -> Self {
        Self {
            count,
            region: SampleRegion::Ball { radius },
            seed,
        }
    }

    pub fn cube(count: usize, half_width: f64, seed: u64) -> Self {
        Self {
            count,
            region: SampleRegion::Cube { half_width },
            seed,
        }
    }

    pub fn points(&self, dim: usize) -> Vec<Vector> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.count)
            .map(|_| match self.region {
                SampleRegion::Ball { radius } => uniform_in_ball(&mut rng, dim, radius),
                SampleRegion::Cube { half_width } => {
                    Vector::from_fn(dim, |_, _| rng.random_range(-half_width..=half_width))
                }
            })
            .collect()
    }
}

fn uniform_in_ball<R: Rng>(rng: &mut R, dim: usize, radius: f64) -> Vector {
    if dim == 0 {
        return Vector::zeros(0);
    }
    loop {
        let dir = Vector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = dir.norm();
        if norm > 1e-12 {
            let r: f64 = rng.random::<f64>().powf(1.0 / dim as f64) * radius;
            return dir * (r / norm);
        }
    }
}

/// `count` mutually orthogonal directions in `R^dim` (Gram–Schmidt on
/// Gaussian draws), with norms drawn uniformly from `[min_norm, max_norm]`.
pub fn orthogonal_directions(
    dim: usize,
    count: usize,
    min_norm: f64,
    max_norm: f64,
    seed: u64,
) -> Vec<Vector> {
    assert!(count <= dim, "cannot draw {count} orthogonal directions in R^{dim}");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut basis: Vec<Vector> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v = Vector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        // two passes of modified Gram–Schmidt
        for _ in 0..2 {
            for b in &basis {
                let proj = v.dot(b);
                v -= b * proj;
            }
        }
        let n = v.norm();
        if n > 1e-6 {
            basis.push(v / n);
        }
    }
    basis
        .into_iter()
        .map(|b| b * rng.random_range(min_norm..=max_norm))
        .collect()
}
