//! Exact-scan latency benchmark on random unit vectors.

use std::time::Instant;

use biasret_core::index::RetrievalIndex;
use biasret_core::rng;
use rand::RngCore as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// One line of the bench report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub n: usize,
    pub d: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub threads: usize,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub mean_ms: f64,
    pub qps: f64,
}

/// Uniform value in [-1, 1) from 24 random bits.
fn unit_draw(bits: u32) -> f32 {
    (bits >> 8) as f32 * (2.0 / (1u32 << 24) as f32) - 1.0
}

/// `n` random rows of dimension `d` with ids `0..n`, generated straight into
/// one buffer and normalized in place.
pub fn random_index(n: usize, d: usize, seed: u64) -> Result<RetrievalIndex> {
    let len = n.checked_mul(d).ok_or_else(|| CliError::config("bench matrix too large"))?;
    let mut r = rng::stream(seed, "bench-matrix");
    let mut data = Vec::with_capacity(len);
    data.extend((0..len).map(|_| unit_draw(r.next_u32())));
    Ok(RetrievalIndex::from_matrix((0..n as u64).collect(), d, data)?)
}

pub fn random_queries(count: usize, d: usize, seed: u64) -> Vec<Vec<f32>> {
    let mut r = rng::stream(seed, "bench-queries");
    (0..count).map(|_| (0..d).map(|_| unit_draw(r.next_u32())).collect()).collect()
}

/// Nearest-rank percentile of sorted values.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Time every query. With one thread the queries run back to back on the
/// calling thread; otherwise they are spread over a pool of `threads`.
pub fn time_queries(index: &RetrievalIndex, queries: &[Vec<f32>], k: usize, threads: usize) -> Result<BenchRecord> {
    if queries.is_empty() || threads == 0 {
        return Err(CliError::config("need at least one query and one thread"));
    }
    let one = |q: &Vec<f32>| -> Result<f64> {
        let t = Instant::now();
        let hits = index.query(q, k)?;
        std::hint::black_box(hits);
        Ok(t.elapsed().as_secs_f64() * 1e3)
    };
    let wall = Instant::now();
    let mut lat: Vec<f64> = if threads == 1 {
        queries.iter().map(one).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| CliError::config(e.to_string()))?;
        pool.install(|| queries.par_iter().map(one).collect::<Result<_>>())?
    };
    let wall = wall.elapsed().as_secs_f64();
    lat.sort_by(f64::total_cmp);
    Ok(BenchRecord {
        n: index.len(),
        d: index.dim(),
        k,
        threads,
        p50_ms: percentile(&lat, 50.0),
        p95_ms: percentile(&lat, 95.0),
        mean_ms: lat.iter().sum::<f64>() / lat.len() as f64,
        qps: queries.len() as f64 / wall,
    })
}
