//! Product quantization of IVF residuals.
//!
//! A `d`-dimensional residual is cut into `m` contiguous sub-vectors of
//! `d / m` dimensions; each is replaced by the id of its nearest centroid in
//! that sub-space's codebook (`2^nbits` centroids, one byte per code).
//! Queries are never quantized: scoring is asymmetric, using a per-query
//! lookup table of sub-vector inner products.

use crate::error::{Error, Result};
use crate::index::kmeans::{kmeans_train, training_sample, KMeansConfig};
use crate::scoring::dot;

#[derive(Debug, Clone, PartialEq)]
pub struct PqCodebook {
    pub(crate) dim: usize,
    pub(crate) m: usize,
    pub(crate) nbits: u8,
    /// `m x 2^nbits x (dim / m)`, row-major.
    pub(crate) centroids: Vec<f32>,
}

pub(crate) fn validate_params(dim: usize, m: usize, nbits: u8) -> Result<()> {
    if m == 0 || !dim.is_multiple_of(m) {
        return Err(Error::Config(format!(
            "m = {m} must be at least 1 and divide dim = {dim}"
        )));
    }
    if !(1..=8).contains(&nbits) {
        return Err(Error::Config(format!(
            "nbits must be in 1..=8, got {nbits}"
        )));
    }
    Ok(())
}

impl PqCodebook {
    pub fn from_parts(dim: usize, m: usize, nbits: u8, centroids: Vec<f32>) -> Result<Self> {
        validate_params(dim, m, nbits)?;
        let expected = (1usize << nbits) * dim;
        if centroids.len() != expected {
            return Err(Error::Config(format!(
                "codebook needs {expected} values, got {}",
                centroids.len()
            )));
        }
        Ok(Self {
            dim,
            m,
            nbits,
            centroids,
        })
    }

    /// Trains one sub-codebook per sub-space on `residuals` (row-major).
    pub fn train(
        residuals: &[f32],
        dim: usize,
        m: usize,
        nbits: u8,
        kmeans: &KMeansConfig,
    ) -> Result<Self> {
        validate_params(dim, m, nbits)?;
        let ksub = 1usize << nbits;
        let sub = dim / m;
        let sample = training_sample(
            residuals,
            dim,
            kmeans.max_points_per_centroid * ksub,
            kmeans.seed,
        );
        let n = sample.len() / dim;
        if n < ksub {
            return Err(Error::NotEnoughTrainingData {
                needed: ksub,
                available: n,
            });
        }
        let mut centroids = Vec::with_capacity(m * ksub * sub);
        let mut slice = Vec::with_capacity(n * sub);
        for s in 0..m {
            slice.clear();
            for v in sample.chunks_exact(dim) {
                slice.extend_from_slice(&v[s * sub..(s + 1) * sub]);
            }
            let cfg = KMeansConfig {
                seed: kmeans.seed.wrapping_add(1 + s as u64),
                ..kmeans.clone()
            };
            centroids.extend(kmeans_train(&slice, sub, ksub, &cfg)?);
        }
        Ok(Self {
            dim,
            m,
            nbits,
            centroids,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn nbits(&self) -> u8 {
        self.nbits
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ksub(&self) -> usize {
        1 << self.nbits
    }

    pub fn sub_dim(&self) -> usize {
        self.dim / self.m
    }

    pub fn centroid(&self, subspace: usize, code: u8) -> &[f32] {
        let sub = self.sub_dim();
        let at = (subspace * self.ksub() + code as usize) * sub;
        &self.centroids[at..at + sub]
    }

    /// Nearest sub-centroid per sub-space, by L2 (ties to the lowest code).
    pub fn encode(&self, vector: &[f32], code: &mut [u8]) {
        let sub = self.sub_dim();
        for (s, out) in code.iter_mut().enumerate().take(self.m) {
            let x = &vector[s * sub..(s + 1) * sub];
            let mut best = (0u8, f32::INFINITY);
            for c in 0..self.ksub() {
                let cent = self.centroid(s, c as u8);
                let d: f32 = x.iter().zip(cent).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best.1 {
                    best = (c as u8, d);
                }
            }
            *out = best.0;
        }
    }

    pub fn decode(&self, code: &[u8], out: &mut [f32]) {
        let sub = self.sub_dim();
        for (s, &c) in code.iter().enumerate().take(self.m) {
            out[s * sub..(s + 1) * sub].copy_from_slice(self.centroid(s, c));
        }
    }

    /// `m x ksub` table of `query_s · codebook[s][c]`.
    pub fn lookup_table(&self, query_row: &[f32]) -> Vec<f32> {
        let sub = self.sub_dim();
        let mut table = Vec::with_capacity(self.m * self.ksub());
        for s in 0..self.m {
            let q = &query_row[s * sub..(s + 1) * sub];
            table.extend((0..self.ksub()).map(|c| dot(q, self.centroid(s, c as u8))));
        }
        table
    }

    /// Mean squared reconstruction error over `vectors`.
    pub fn reconstruction_mse(&self, vectors: &[f32]) -> f64 {
        let mut code = vec![0u8; self.m];
        let mut rec = vec![0f32; self.dim];
        let mut total = 0f64;
        let n = vectors.len() / self.dim;
        for v in vectors.chunks_exact(self.dim) {
            self.encode(v, &mut code);
            self.decode(&code, &mut rec);
            total += v
                .iter()
                .zip(&rec)
                .map(|(a, b)| ((a - b) as f64).powi(2))
                .sum::<f64>();
        }
        total / n.max(1) as f64
    }
}

/// Approximate inner product of a raw query row with a PQ-coded vector:
/// `query · centroid + Σ_s query_s · codebook[s][code[s]]`, summed in that
/// order (the same order the search path uses with its lookup table).
pub fn adc_score(
    query_row: &[f32],
    code: &[u8],
    codebook: &PqCodebook,
    centroid: &[f32],
) -> Result<f32> {
    if code.len() != codebook.m {
        return Err(Error::Config(format!(
            "code has {} bytes, codebook m = {}",
            code.len(),
            codebook.m
        )));
    }
    if query_row.len() != codebook.dim {
        return Err(Error::DimMismatch {
            expected: codebook.dim,
            found: query_row.len(),
        });
    }
    if centroid.len() != codebook.dim {
        return Err(Error::DimMismatch {
            expected: codebook.dim,
            found: centroid.len(),
        });
    }
    let sub = codebook.sub_dim();
    let mut score = dot(query_row, centroid);
    for (s, &c) in code.iter().enumerate() {
        score += dot(&query_row[s * sub..(s + 1) * sub], codebook.centroid(s, c));
    }
    Ok(score)
}
