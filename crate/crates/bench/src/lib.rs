//! Seeded inputs shared by the benchmarks.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rorpcap::store::{Emb1Matrix, EmbeddingStore, QueryEmbedding};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect()
}

/// `count` random rows, ids `0..count`, ten rows per image id.
pub fn random_store(count: usize, dim: usize, seed: u64) -> (EmbeddingStore, QueryEmbedding) {
    let mut r = rng(seed);
    let data: Vec<f32> = (0..count).flat_map(|_| random_vec(&mut r, dim)).collect();
    let matrix = Emb1Matrix::new(count, dim, data).expect("shape");
    let ids = (0..count as i64).collect();
    let image_ids = (0..count as i64).map(|i| Some(i / 10)).collect();
    let store = EmbeddingStore::from_parts(matrix, ids, image_ids).expect("valid store");
    let query = QueryEmbedding::new(random_vec(&mut r, dim)).expect("nonzero query");
    (store, query)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f32> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0f32..1.0))
}
