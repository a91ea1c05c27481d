//! Seeded Gaussian-mixture fixtures.
//!
//! Cluster `c` has unit covariance and mean `6 (c + 1) / sqrt(d)` in every
//! coordinate, so neighboring means lie six standard deviations apart and no
//! cluster sits on the origin (the local predictors have no intercept, so a
//! cluster centered there gives them nothing consistent to fit). Points are
//! assigned to clusters in contiguous, balanced blocks and are named
//! `c{cluster}_{index:04}`.

use lcrank::{DataSet, QueryIndicator};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

/// Distance between neighboring cluster means, in standard deviations.
pub const SEPARATION: f64 = 6.0;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("need n >= clusters >= 1 and d >= 1, got n = {n}, clusters = {clusters}, d = {d}")]
    Counts { n: usize, d: usize, clusters: usize },
    #[error(transparent)]
    Data(#[from] lcrank::Error),
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub data: DataSet<f64>,
    /// A single query drawn from cluster 0.
    pub queries: QueryIndicator,
    pub labels: Vec<usize>,
}

pub fn generate(n: usize, d: usize, clusters: usize, seed: u64) -> Result<Fixture, GenError> {
    if clusters == 0 || n < clusters || d == 0 {
        return Err(GenError::Counts { n, d, clusters });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..n).map(|i| i * clusters / n).collect();
    let offset = SEPARATION / (d as f64).sqrt();
    let mut points = DMatrix::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            points[(i, j)] = z + offset * (labels[i] + 1) as f64;
        }
    }
    let first_cluster = labels.iter().take_while(|&&c| c == 0).count();
    let query = rng.random_range(0..first_cluster);
    let ids = labels
        .iter()
        .enumerate()
        .map(|(i, c)| format!("c{c}_{i:04}"))
        .collect();
    Ok(Fixture {
        data: DataSet::new(points, ids)?,
        queries: QueryIndicator::from_indices(n, &[query])?,
        labels,
    })
}

/// Cluster label encoded in a generated id.
pub fn cluster_of(id: &str) -> Option<usize> {
    id.strip_prefix('c')?.split_once('_')?.0.parse().ok()
}
