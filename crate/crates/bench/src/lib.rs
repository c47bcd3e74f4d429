//! Deterministic inputs for the benchmarks.

use deepconn_core::ingest::ReviewRecord;
use deepconn_core::model::{DeepConn, HeadKind, Preset, TowerKind};
use deepconn_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// An embedded document of `len` tokens with entries in [-0.5, 0.5).
pub fn random_document(len: usize, dim: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..len * dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
    Tensor::new(&[len, dim], data).expect("shape matches data")
}

/// A comparison-preset model with the given tower.
pub fn comparison_model(kind: TowerKind, dim: usize, head: HeadKind, doc_len: usize) -> DeepConn {
    let mut config = Preset::Comparison.model(kind, dim, head);
    config.doc_len = doc_len;
    DeepConn::new(config).expect("preset config is valid")
}

/// `n_users` users each rating `per_user` distinct items out of `n_items`.
pub fn random_ratings(
    n_users: usize,
    n_items: usize,
    per_user: usize,
    seed: u64,
) -> Vec<ReviewRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_users * per_user);
    for u in 0..n_users {
        let items = rand::seq::index::sample(&mut rng, n_items, per_user.min(n_items));
        for i in items {
            out.push(ReviewRecord {
                user_id: format!("u{u}"),
                item_id: format!("i{i}"),
                text: String::new(),
                rating: rng.gen_range(1..=5) as f64,
            });
        }
    }
    out
}
