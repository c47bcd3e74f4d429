use deepconn_core::baseline::{item_similarity, predict_cf, RatingMatrix};
use deepconn_core::kernel::{Parameter, Tensor};
use deepconn_core::model::FmHead;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fm_double_loop(beta0: f64, w: &[f64], v: &[Vec<f64>], z: &[f64]) -> f64 {
    let mut y = beta0;
    for i in 0..z.len() {
        y += w[i] * z[i];
    }
    for i in 0..z.len() {
        for j in (i + 1)..z.len() {
            let vij: f64 = v[i].iter().zip(&v[j]).map(|(a, b)| a * b).sum();
            y += vij * z[i] * z[j];
        }
    }
    y
}

fn fm_head(beta0: f64, w: &[f64], v: &[Vec<f64>]) -> FmHead {
    let k = v[0].len();
    let flat: Vec<f64> = v.iter().flatten().copied().collect();
    let factors = Parameter::new("v", Tensor::new(&[w.len(), k], flat).unwrap());
    FmHead::from_parts(beta0, w.to_vec(), factors).unwrap()
}

proptest! {
    #[test]
    fn fm_low_rank_matches_double_loop(
        (n, k) in (1usize..=10, 1usize..=4),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut r = |m: usize| (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect::<Vec<f64>>();
        let z = r(n);
        let w = r(n);
        let beta0 = r(1)[0];
        let v: Vec<Vec<f64>> = (0..n).map(|_| r(k)).collect();
        let fast = fm_head(beta0, &w, &v).predict(&z).unwrap();
        let slow = fm_double_loop(beta0, &w, &v, &z);
        prop_assert!((fast - slow).abs() < 1e-10, "{fast} vs {slow}");
    }
}

/// Direct restatement of the cosine and weighted-average rules over a dense
/// 5×5 grid where 0 means unrated.
fn brute_force(grid: &[[u8; 5]; 5], user: usize, target: usize) -> f64 {
    let sim = |a: usize, b: usize| -> f64 {
        let co: Vec<(f64, f64)> = (0..5)
            .filter(|&u| grid[u][a] > 0 && grid[u][b] > 0)
            .map(|u| (grid[u][a] as f64, grid[u][b] as f64))
            .collect();
        if co.is_empty() {
            return 0.0;
        }
        let dot: f64 = co.iter().map(|(x, y)| x * y).sum();
        let na: f64 = co.iter().map(|(x, _)| x * x).sum::<f64>().sqrt();
        let nb: f64 = co.iter().map(|(_, y)| y * y).sum::<f64>().sqrt();
        dot / (na * nb)
    };
    let (mut num, mut den) = (0.0, 0.0);
    for j in 0..5 {
        if j != target && grid[user][j] > 0 {
            let s = sim(target, j);
            if s > 0.0 {
                num += s * grid[user][j] as f64;
                den += s;
            }
        }
    }
    if den > 0.0 {
        return num / den;
    }
    let rated: Vec<f64> = (0..5)
        .filter(|&j| grid[user][j] > 0)
        .map(|j| grid[user][j] as f64)
        .collect();
    rated.iter().sum::<f64>() / rated.len() as f64
}

#[test]
fn cf_matches_brute_force_on_random_grids() {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut compared = 0;
    for _ in 0..100 {
        let mut grid = [[0u8; 5]; 5];
        for row in grid.iter_mut() {
            for cell in row.iter_mut() {
                if rng.gen_bool(0.7) {
                    *cell = rng.gen_range(1..=5);
                }
            }
            // every user rates something
            if row.iter().all(|&c| c == 0) {
                row[rng.gen_range(0..5)] = rng.gen_range(1..=5);
            }
        }
        let mut m = RatingMatrix::new();
        for (u, row) in grid.iter().enumerate() {
            for (i, &c) in row.iter().enumerate() {
                if c > 0 {
                    m.insert(&format!("u{u}"), &format!("i{i}"), c as f64)
                        .unwrap();
                }
            }
        }
        let sims = item_similarity(&m);
        for u in 0..5 {
            for t in 0..5 {
                if m.item_column(&format!("i{t}")).is_none() {
                    continue;
                }
                let got = predict_cf(&m, &sims, &format!("u{u}"), &format!("i{t}"), None)
                    .unwrap()
                    .value;
                let want = brute_force(&grid, u, t);
                assert!((got - want).abs() < 1e-12, "{got} vs {want}");
                compared += 1;
            }
        }
    }
    assert!(compared > 2000);
}
