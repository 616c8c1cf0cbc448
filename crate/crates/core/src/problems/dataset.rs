use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::labeled_stream;

pub const DEFAULT_SAMPLES: usize = 50_000;
pub const DEFAULT_COORD_STD: f64 = 2.0;

/// Row-major `N × n` matrix of i.i.d. Gaussian samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub samples: Vec<f64>,
    pub n_samples: usize,
    pub dim: usize,
    pub seed: u64,
    pub coord_std: f64,
}

/// `N` draws from `N(0, 4I)` in `n` dimensions.
pub fn generate_dataset(n_samples: usize, dim: usize, seed: u64) -> Result<Dataset> {
    Dataset::generate(n_samples, dim, seed, DEFAULT_COORD_STD)
}

impl Dataset {
    pub fn generate(n_samples: usize, dim: usize, seed: u64, coord_std: f64) -> Result<Self> {
        if n_samples == 0 || dim == 0 {
            return Err(Error::InvalidDimension(format!("dataset {n_samples} x {dim}")));
        }
        if !(coord_std.is_finite() && coord_std >= 0.0) {
            return Err(Error::InvalidConfig(format!("coord_std = {coord_std}")));
        }
        let mut rng = labeled_stream(seed, "dataset", 0);
        let samples = (0..n_samples * dim)
            .map(|_| coord_std * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Ok(Dataset {
            samples,
            n_samples,
            dim,
            seed,
            coord_std,
        })
    }

    /// Wraps explicit rows (used for hand-built test sets).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || dim == 0 || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidDimension(
                "rows must be non-empty and equal length".into(),
            ));
        }
        Ok(Dataset {
            samples: rows.concat(),
            n_samples: rows.len(),
            dim,
            seed: 0,
            coord_std: f64::NAN,
        })
    }

    #[inline]
    pub fn row(&self, j: usize) -> &[f64] {
        &self.samples[j * self.dim..(j + 1) * self.dim]
    }

    /// Header of four little-endian 64-bit words (N, n, seed, coord_std)
    /// followed by the samples row-major as little-endian f64.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.n_samples as u64).to_le_bytes())?;
        w.write_all(&(self.dim as u64).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&self.coord_std.to_le_bytes())?;
        for x in &self.samples {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut word = [0u8; 8];
        let mut next = |r: &mut R| -> Result<[u8; 8]> {
            r.read_exact(&mut word)
                .map_err(|e| Error::Format(format!("truncated: {e}")))?;
            Ok(word)
        };
        let n_samples = u64::from_le_bytes(next(&mut r)?) as usize;
        let dim = u64::from_le_bytes(next(&mut r)?) as usize;
        let seed = u64::from_le_bytes(next(&mut r)?);
        let coord_std = f64::from_le_bytes(next(&mut r)?);
        let total = n_samples
            .checked_mul(dim)
            .filter(|&t| t > 0)
            .ok_or_else(|| Error::Format(format!("bad shape {n_samples} x {dim}")))?;
        let mut samples = Vec::with_capacity(total);
        for _ in 0..total {
            samples.push(f64::from_le_bytes(next(&mut r)?));
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes", rest.len())));
        }
        Ok(Dataset {
            samples,
            n_samples,
            dim,
            seed,
            coord_std,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(32 + 8 * self.samples.len());
        self.write_binary(&mut buf)?;
        crate::output::write_atomic(path, &buf)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_binary(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}
