//! Cylindrical Wiener noise truncated to the first `dim_h` basis vectors of `H`.
//!
//! Every path owns a ChaCha8 stream selected by `(seed, stream_id)`, so a path is
//! reproducible no matter which thread simulates it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, HjmmError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseSettings {
    pub dim_h: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct NoiseModel {
    dim_h: usize,
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl NoiseModel {
    pub fn new(dim_h: usize, seed: u64, stream_id: u64) -> Result<Self> {
        if dim_h == 0 {
            return Err(invalid("dim_h must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Ok(Self {
            dim_h,
            seed,
            stream_id,
            rng,
        })
    }

    pub fn from_settings(settings: NoiseSettings, stream_id: u64) -> Result<Self> {
        Self::new(settings.dim_h, settings.seed, stream_id)
    }

    pub fn dim_h(&self) -> usize {
        self.dim_h
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// `W(t+dt) − W(t)` in coordinates: `dim_h` independent `N(0, dt)` draws.
    pub fn sample_increment(&mut self, dt: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim_h];
        self.sample_increment_into(dt, &mut out)?;
        Ok(out)
    }

    pub fn sample_increment_into(&mut self, dt: f64, out: &mut [f64]) -> Result<()> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(invalid(format!("time step must be positive, got {dt}")));
        }
        if out.len() != self.dim_h {
            return Err(HjmmError::DimensionMismatch {
                expected: self.dim_h,
                got: out.len(),
            });
        }
        let sd = dt.sqrt();
        for o in out.iter_mut() {
            let z: f64 = self.rng.sample(StandardNormal);
            *o = sd * z;
        }
        Ok(())
    }

    /// Pre-samples `steps` consecutive increments of length `dt`.
    pub fn sample_path(&mut self, dt: f64, steps: usize) -> Result<NoisePath> {
        let mut increments = vec![0.0; steps * self.dim_h];
        for chunk in increments.chunks_mut(self.dim_h) {
            self.sample_increment_into(dt, chunk)?;
        }
        Ok(NoisePath {
            dim_h: self.dim_h,
            dt,
            increments,
        })
    }
}

/// A frozen sequence of noise increments on a uniform time lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    dim_h: usize,
    dt: f64,
    increments: Vec<f64>,
}

impl NoisePath {
    pub fn dim_h(&self) -> usize {
        self.dim_h
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.increments.len() / self.dim_h
    }

    pub fn increment(&self, k: usize) -> &[f64] {
        &self.increments[k * self.dim_h..(k + 1) * self.dim_h]
    }

    /// Sums blocks of `factor` consecutive increments, giving the same Brownian path on a
    /// lattice `factor` times coarser.
    pub fn coarsen(&self, factor: usize) -> Result<NoisePath> {
        if factor == 0 || !self.steps().is_multiple_of(factor) {
            return Err(invalid(format!(
                "cannot coarsen {} steps by factor {factor}",
                self.steps()
            )));
        }
        let d = self.dim_h;
        let coarse_steps = self.steps() / factor;
        let mut increments = vec![0.0; coarse_steps * d];
        for k in 0..coarse_steps {
            for j in 0..factor {
                let fine = self.increment(k * factor + j);
                for (c, f) in increments[k * d..(k + 1) * d].iter_mut().zip(fine) {
                    *c += f;
                }
            }
        }
        Ok(NoisePath {
            dim_h: d,
            dt: self.dt * factor as f64,
            increments,
        })
    }

    /// Sub-path covering steps `[start, start + len)`.
    pub fn window(&self, start: usize, len: usize) -> NoisePath {
        let d = self.dim_h;
        NoisePath {
            dim_h: d,
            dt: self.dt,
            increments: self.increments[start * d..(start + len) * d].to_vec(),
        }
    }
}
