//! Planted-structure micro-dataset for capacity and cost checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::ingest::{ReviewRecord, MAX_RATING, MIN_RATING};
use crate::model::{HeadKind, ModelConfig, Preset, TowerKind};
use crate::text::{EmbeddingTable, OovPolicy};

pub const MICRO_USERS: usize = 20;
pub const MICRO_ITEMS: usize = 10;
pub const MICRO_DIM: usize = 8;
pub const MICRO_LATENT: usize = 2;
pub const MICRO_NOISE: f64 = 0.1;

#[derive(Clone, Debug)]
pub struct MicroDataset {
    /// Every (user, item) pair, rated `3 + a_u·b_i + ε`, clipped to [1,5].
    pub records: Vec<ReviewRecord>,
    pub table: EmbeddingTable,
    /// Longest user or item document in tokens.
    pub doc_len: usize,
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Each review reads `user<u> item<i>`, so a document identifies its owner
/// through a dedicated token.
pub fn micro_dataset(seed: u64) -> Result<MicroDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut latent = |n: usize| -> Vec<[f64; MICRO_LATENT]> {
        (0..n)
            .map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)))
            .collect()
    };
    let a = latent(MICRO_USERS);
    let b = latent(MICRO_ITEMS);
    let mut records = Vec::with_capacity(MICRO_USERS * MICRO_ITEMS);
    for (u, au) in a.iter().enumerate() {
        for (i, bi) in b.iter().enumerate() {
            let dot: f64 = au.iter().zip(bi).map(|(x, y)| x * y).sum();
            let r = (3.0 + dot + MICRO_NOISE * gaussian(&mut rng)).clamp(MIN_RATING, MAX_RATING);
            records.push(ReviewRecord::new(
                format!("user{u}"),
                format!("item{i}"),
                r,
                format!("user{u} item{i}"),
            ));
        }
    }
    let tokens = (0..MICRO_USERS)
        .map(|u| format!("user{u}"))
        .chain((0..MICRO_ITEMS).map(|i| format!("item{i}")));
    let entries: Vec<(String, Vec<f64>)> = tokens
        .map(|t| (t, (0..MICRO_DIM).map(|_| gaussian(&mut rng)).collect()))
        .collect();
    let table = EmbeddingTable::from_entries(MICRO_DIM, entries, OovPolicy::Zero)?;
    Ok(MicroDataset {
        records,
        table,
        doc_len: 2 * MICRO_USERS,
    })
}

/// Comparison-preset model sized for the micro-dataset.
pub fn micro_config(kind: TowerKind, head: HeadKind, dropout: f64) -> ModelConfig {
    let mut c = Preset::Comparison.model(kind, MICRO_DIM, head);
    c.doc_len = 2 * MICRO_USERS;
    c.tower.dropout_rate = dropout;
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_range() {
        let d = micro_dataset(1).unwrap();
        assert_eq!(d.records.len(), MICRO_USERS * MICRO_ITEMS);
        assert!(d.records.iter().all(|r| (1.0..=5.0).contains(&r.rating)));
        assert_eq!(d.table.len(), MICRO_USERS + MICRO_ITEMS);
        assert_eq!(micro_dataset(1).unwrap().records, d.records);
    }
}
