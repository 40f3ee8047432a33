//! Lloyd's k-means with k-means++ seeding, used for the coarse quantizer
//! and for the product-quantizer sub-codebooks.
//!
//! Training is L2 on the raw vectors. Runs are deterministic for a fixed
//! seed regardless of how many threads the assignment step uses.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::dot_lanes;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansConfig {
    pub iters: usize,
    pub seed: u64,
    /// Independent runs; the one with the lowest inertia wins.
    pub restarts: usize,
    /// Training sample cap is `max_points_per_centroid * k`.
    pub max_points_per_centroid: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            iters: 10,
            seed: 0,
            restarts: 1,
            max_points_per_centroid: 256,
        }
    }
}

/// Sample used to train `k` centroids: every vector when there are at most
/// `cap` of them, otherwise `cap` distinct vectors drawn with `seed`.
pub(crate) fn training_sample(vectors: &[f32], dim: usize, cap: usize, seed: u64) -> Vec<f32> {
    let n = vectors.len() / dim;
    if n <= cap {
        return vectors.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, n, cap).into_vec();
    picked.sort_unstable();
    let mut out = Vec::with_capacity(cap * dim);
    for i in picked {
        out.extend_from_slice(&vectors[i * dim..(i + 1) * dim]);
    }
    out
}

/// Trains `k` centroids on `vectors` (row-major, `dim` columns). Returns a
/// row-major `k x dim` matrix.
pub fn kmeans_train(
    vectors: &[f32],
    dim: usize,
    k: usize,
    config: &KMeansConfig,
) -> Result<Vec<f32>> {
    if dim == 0 || !vectors.len().is_multiple_of(dim) {
        return Err(Error::Config(format!(
            "training data of length {} is not a multiple of dim {dim}",
            vectors.len()
        )));
    }
    let n = vectors.len() / dim;
    if k == 0 {
        return Err(Error::Config("k-means needs at least one centroid".into()));
    }
    if k > n {
        return Err(Error::NotEnoughTrainingData {
            needed: k,
            available: n,
        });
    }
    let norms: Vec<f32> = vectors.chunks_exact(dim).map(|v| dot_lanes(v, v)).collect();
    let mut best: Option<(f64, Vec<f32>)> = None;
    for restart in 0..config.restarts.max(1) {
        let seed = config
            .seed
            .wrapping_add((restart as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let (inertia, centroids) = lloyd(vectors, &norms, dim, k, config.iters, seed);
        if best.as_ref().is_none_or(|(b, _)| inertia < *b) {
            best = Some((inertia, centroids));
        }
    }
    Ok(best.expect("at least one restart").1)
}

fn lloyd(
    vectors: &[f32],
    norms: &[f32],
    dim: usize,
    k: usize,
    iters: usize,
    seed: u64,
) -> (f64, Vec<f32>) {
    let n = norms.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_pp(vectors, norms, dim, k, &mut rng);
    let mut assign = vec![0u32; n];
    let mut dist = vec![0f32; n];
    for _ in 0..iters {
        assign_nearest(vectors, norms, &centroids, dim, &mut assign, &mut dist);
        let mut counts = vec![0usize; k];
        for &a in &assign {
            counts[a as usize] += 1;
        }
        reseed_empty(&mut assign, &mut dist, &mut counts);
        let mut sums = vec![0f64; k * dim];
        for (v, &a) in vectors.chunks_exact(dim).zip(&assign) {
            let s = &mut sums[a as usize * dim..(a as usize + 1) * dim];
            for (acc, x) in s.iter_mut().zip(v) {
                *acc += *x as f64;
            }
        }
        for c in 0..k {
            let inv = 1.0 / counts[c] as f64;
            for j in 0..dim {
                centroids[c * dim + j] = (sums[c * dim + j] * inv) as f32;
            }
        }
    }
    assign_nearest(vectors, norms, &centroids, dim, &mut assign, &mut dist);
    let inertia = dist.iter().map(|&d| d.max(0.0) as f64).sum();
    (inertia, centroids)
}

/// Moves the farthest member of the largest cluster into each empty one.
fn reseed_empty(assign: &mut [u32], dist: &mut [f32], counts: &mut [usize]) {
    for empty in 0..counts.len() {
        if counts[empty] != 0 {
            continue;
        }
        let largest = (0..counts.len())
            .max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)))
            .unwrap();
        if counts[largest] < 2 {
            continue;
        }
        let mut far = None;
        for (i, (&a, &d)) in assign.iter().zip(dist.iter()).enumerate() {
            if a as usize == largest && far.is_none_or(|(_, fd)| d > fd) {
                far = Some((i, d));
            }
        }
        let (i, _) = far.unwrap();
        assign[i] = empty as u32;
        dist[i] = 0.0;
        counts[largest] -= 1;
        counts[empty] = 1;
    }
}

fn kmeans_pp(
    vectors: &[f32],
    norms: &[f32],
    dim: usize,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<f32> {
    let n = norms.len();
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.gen_range(0..n);
    centroids.extend_from_slice(&vectors[first * dim..(first + 1) * dim]);
    let mut min_d: Vec<f32> = vec![f32::INFINITY; n];
    for c in 1..=k {
        let latest = &centroids[(c - 1) * dim..c * dim];
        let latest_norm = dot_lanes(latest, latest);
        for (i, v) in vectors.chunks_exact(dim).enumerate() {
            let d = (norms[i] - 2.0 * dot_lanes(v, latest) + latest_norm).max(0.0);
            if d < min_d[i] {
                min_d[i] = d;
            }
        }
        if c == k {
            break;
        }
        let total: f64 = min_d.iter().map(|&d| d as f64).sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in min_d.iter().enumerate() {
                target -= d as f64;
                if target < 0.0 && d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // every point coincides with a centroid already
            rng.gen_range(0..n)
        };
        centroids.extend_from_slice(&vectors[pick * dim..(pick + 1) * dim]);
    }
    centroids
}

/// Nearest centroid by L2 (ties to the lowest id), with squared distances.
fn assign_nearest(
    vectors: &[f32],
    norms: &[f32],
    centroids: &[f32],
    dim: usize,
    assign: &mut [u32],
    dist: &mut [f32],
) {
    let cnorms: Vec<f32> = centroids
        .chunks_exact(dim)
        .map(|c| dot_lanes(c, c))
        .collect();
    let work = |start: usize, assign: &mut [u32], dist: &mut [f32]| {
        for (off, (a, d)) in assign.iter_mut().zip(dist.iter_mut()).enumerate() {
            let i = start + off;
            let v = &vectors[i * dim..(i + 1) * dim];
            let mut best = (0u32, f32::INFINITY);
            for (c, cent) in centroids.chunks_exact(dim).enumerate() {
                let score = cnorms[c] - 2.0 * dot_lanes(v, cent);
                if score < best.1 {
                    best = (c as u32, score);
                }
            }
            *a = best.0;
            *d = best.1 + norms[i];
        }
    };
    let threads = std::thread::available_parallelism().map_or(1, |t| t.get());
    let n = assign.len();
    if threads <= 1 || n < 4096 {
        work(0, assign, dist);
        return;
    }
    let chunk = n.div_ceil(threads);
    std::thread::scope(|s| {
        for (t, (a, d)) in assign
            .chunks_mut(chunk)
            .zip(dist.chunks_mut(chunk))
            .enumerate()
        {
            let work = &work;
            s.spawn(move || work(t * chunk, a, d));
        }
    });
}
