//! Item-item collaborative filtering with plain cosine similarity over
//! co-raters.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ReviewRecord, MAX_RATING, MIN_RATING};
use crate::model::mse;

/// Sparse user × item ratings. Repeated (user, item) pairs keep the last
/// rating and are counted in [`RatingMatrix::overwrites`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RatingMatrix {
    users: Vec<String>,
    items: Vec<String>,
    user_index: BTreeMap<String, usize>,
    item_index: BTreeMap<String, usize>,
    by_user: Vec<BTreeMap<usize, f64>>,
    by_item: Vec<BTreeMap<usize, f64>>,
    overwrites: usize,
}

impl RatingMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: &[ReviewRecord]) -> Result<Self> {
        let mut m = Self::new();
        for r in records {
            m.insert(&r.user_id, &r.item_id, r.rating)?;
        }
        Ok(m)
    }

    pub fn insert(&mut self, user: &str, item: &str, rating: f64) -> Result<()> {
        if !(rating.is_finite() && (MIN_RATING..=MAX_RATING).contains(&rating)) {
            return Err(Error::InvalidInput(format!(
                "rating {rating} for ({user}, {item}) outside [1,5]"
            )));
        }
        let u = *self.user_index.entry(user.to_string()).or_insert_with(|| {
            self.users.push(user.to_string());
            self.by_user.push(BTreeMap::new());
            self.users.len() - 1
        });
        let i = *self.item_index.entry(item.to_string()).or_insert_with(|| {
            self.items.push(item.to_string());
            self.by_item.push(BTreeMap::new());
            self.items.len() - 1
        });
        if self.by_user[u].insert(i, rating).is_some() {
            self.overwrites += 1;
        }
        self.by_item[i].insert(u, rating);
        Ok(())
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn n_ratings(&self) -> usize {
        self.by_user.iter().map(|r| r.len()).sum()
    }

    pub fn overwrites(&self) -> usize {
        self.overwrites
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn user_row(&self, user: &str) -> Option<usize> {
        self.user_index.get(user).copied()
    }

    pub fn item_column(&self, item: &str) -> Option<usize> {
        self.item_index.get(item).copied()
    }

    pub fn rating(&self, user: &str, item: &str) -> Option<f64> {
        let u = self.user_row(user)?;
        let i = self.item_column(item)?;
        self.by_user[u].get(&i).copied()
    }

    pub fn user_mean(&self, user: &str) -> Option<f64> {
        let row = &self.by_user[self.user_row(user)?];
        (!row.is_empty()).then(|| row.values().sum::<f64>() / row.len() as f64)
    }

    pub fn global_mean(&self) -> Option<f64> {
        let n = self.n_ratings();
        (n > 0).then(|| self.by_user.iter().flat_map(|r| r.values()).sum::<f64>() / n as f64)
    }

    fn cosine(&self, a: usize, b: usize) -> f64 {
        let (ra, rb) = (&self.by_item[a], &self.by_item[b]);
        let (small, large) = if ra.len() <= rb.len() {
            (ra, rb)
        } else {
            (rb, ra)
        };
        let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
        for (u, &x) in small {
            if let Some(&y) = large.get(u) {
                dot += x * y;
                na += x * x;
                nb += y * y;
            }
        }
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na.sqrt() * nb.sqrt())
        }
    }
}

/// Dense symmetric item × item similarities.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    /// Row-major `n × n`; must be symmetric.
    pub fn from_dense(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::shape(format!(
                "similarity matrix of {} entries is not {n}×{n}",
                values.len()
            )));
        }
        for i in 0..n {
            for j in 0..i {
                if values[i * n + j] != values[j * n + i] {
                    return Err(Error::InvalidInput(format!(
                        "similarity matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(SimilarityMatrix { n, values })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    /// Tab-separated table with item ids as row and column labels.
    pub fn write_table<W: Write>(&self, mut w: W, items: &[String]) -> Result<()> {
        if items.len() != self.n {
            return Err(Error::shape("item labels do not match matrix size"));
        }
        writeln!(w, "item\t{}", items.join("\t"))?;
        for (i, id) in items.iter().enumerate() {
            let row: Vec<String> = (0..self.n).map(|j| self.get(i, j).to_string()).collect();
            writeln!(w, "{id}\t{}", row.join("\t"))?;
        }
        Ok(())
    }
}

/// sim(i, j) = m_i·m_j / (‖m_i‖‖m_j‖) with m restricted to users who rated
/// both; 0 without co-raters; 1 on the diagonal of rated items.
pub fn item_similarity(matrix: &RatingMatrix) -> SimilarityMatrix {
    let n = matrix.n_items();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| ((i + 1)..n).map(|j| matrix.cosine(i, j)).collect())
        .collect();
    let mut values = vec![0.0; n * n];
    for (i, row) in upper.iter().enumerate() {
        values[i * n + i] = if matrix.by_item[i].is_empty() {
            0.0
        } else {
            1.0
        };
        for (off, &s) in row.iter().enumerate() {
            let j = i + 1 + off;
            values[i * n + j] = s;
            values[j * n + i] = s;
        }
    }
    SimilarityMatrix { n, values }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CfSource {
    Neighbors,
    UserMean,
    GlobalMean,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CfPrediction {
    pub value: f64,
    pub source: CfSource,
    pub neighbors: usize,
}

/// Similarity-weighted mean of the user's ratings over the `k` most similar
/// rated items with positive similarity (all of them when `k` is `None`).
/// Falls back to the user's mean rating, then the global mean.
pub fn predict_cf(
    matrix: &RatingMatrix,
    sims: &SimilarityMatrix,
    user: &str,
    item: &str,
    k: Option<usize>,
) -> Result<CfPrediction> {
    if k == Some(0) {
        return Err(Error::InvalidConfig("neighborhood size must be ≥ 1".into()));
    }
    if sims.len() != matrix.n_items() {
        return Err(Error::shape(format!(
            "similarity matrix covers {} items, rating matrix has {}",
            sims.len(),
            matrix.n_items()
        )));
    }
    let u = matrix.user_row(user).ok_or_else(|| Error::UnknownEntity {
        kind: "user",
        id: user.to_string(),
    })?;
    let mut neigh: Vec<(f64, usize, f64)> = match matrix.item_column(item) {
        Some(t) => matrix.by_user[u]
            .iter()
            .filter(|(&j, _)| j != t)
            .map(|(&j, &r)| (sims.get(t, j), j, r))
            .filter(|(s, _, _)| *s > 0.0)
            .collect(),
        None => Vec::new(),
    };
    neigh.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    if let Some(k) = k {
        neigh.truncate(k);
    }
    if !neigh.is_empty() {
        let (num, den) = neigh
            .iter()
            .fold((0.0, 0.0), |(n, d), &(s, _, r)| (n + s * r, d + s));
        return Ok(CfPrediction {
            value: num / den,
            source: CfSource::Neighbors,
            neighbors: neigh.len(),
        });
    }
    if let Some(m) = matrix.user_mean(user) {
        return Ok(CfPrediction {
            value: m,
            source: CfSource::UserMean,
            neighbors: 0,
        });
    }
    let g = matrix
        .global_mean()
        .ok_or_else(|| Error::InvalidInput("rating matrix is empty".into()))?;
    Ok(CfPrediction {
        value: g,
        source: CfSource::GlobalMean,
        neighbors: 0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CfEvaluation {
    pub mse: f64,
    pub n_pairs: usize,
    pub neighbors: usize,
    pub user_mean: usize,
    pub global_mean: usize,
    /// Test pairs whose user has no training rating.
    pub unknown_users: usize,
    #[serde(skip)]
    pub predictions: Vec<f64>,
}

/// Fit on `train`, score `test`. Users absent from training get the global
/// mean.
pub fn evaluate_cf(
    train: &[ReviewRecord],
    test: &[ReviewRecord],
    k: Option<usize>,
) -> Result<CfEvaluation> {
    let matrix = RatingMatrix::from_records(train)?;
    let sims = item_similarity(&matrix);
    let global = matrix
        .global_mean()
        .ok_or_else(|| Error::InvalidInput("training set is empty".into()))?;
    let mut ev = CfEvaluation {
        mse: 0.0,
        n_pairs: test.len(),
        neighbors: 0,
        user_mean: 0,
        global_mean: 0,
        unknown_users: 0,
        predictions: Vec::with_capacity(test.len()),
    };
    for r in test {
        let p = match predict_cf(&matrix, &sims, &r.user_id, &r.item_id, k) {
            Ok(p) => p,
            Err(Error::UnknownEntity { .. }) => {
                ev.unknown_users += 1;
                CfPrediction {
                    value: global,
                    source: CfSource::GlobalMean,
                    neighbors: 0,
                }
            }
            Err(e) => return Err(e),
        };
        match p.source {
            CfSource::Neighbors => ev.neighbors += 1,
            CfSource::UserMean => ev.user_mean += 1,
            CfSource::GlobalMean => ev.global_mean += 1,
        }
        ev.predictions.push(p.value);
    }
    let targets: Vec<f64> = test.iter().map(|r| r.rating).collect();
    ev.mse = mse(&ev.predictions, &targets)?;
    Ok(ev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hand() -> RatingMatrix {
        let mut m = RatingMatrix::new();
        for (u, i, r) in [
            ("u1", "m1", 4.0),
            ("u1", "m3", 2.0),
            ("u2", "m1", 3.0),
            ("u2", "m2", 4.0),
            ("u2", "m3", 5.0),
            ("u3", "m1", 4.0),
            ("u3", "m2", 3.0),
            ("u3", "m3", 1.0),
        ] {
            m.insert(u, i, r).unwrap();
        }
        m
    }

    #[test]
    fn hand_cosines() {
        let m = hand();
        let s = item_similarity(&m);
        let (m1, m2, m3) = (0, 2, 1);
        assert_eq!(m.items(), &["m1", "m3", "m2"]);
        assert!((s.get(m1, m2) - 0.96).abs() < 1e-12);
        assert!((s.get(m2, m3) - 23.0 / (5.0 * 26f64.sqrt())).abs() < 1e-12);
        for i in 0..3 {
            assert_eq!(s.get(i, i), 1.0);
        }
    }

    #[test]
    fn identical_co_ratings_are_one() {
        let mut m = RatingMatrix::new();
        for (u, r) in [("a", 4.0), ("b", 5.0)] {
            m.insert(u, "x", r).unwrap();
            m.insert(u, "y", r).unwrap();
        }
        assert!((item_similarity(&m).get(0, 1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn no_co_raters_is_zero() {
        let mut m = RatingMatrix::new();
        m.insert("a", "x", 4.0).unwrap();
        m.insert("b", "y", 2.0).unwrap();
        let s = item_similarity(&m);
        assert_eq!(s.get(0, 1), 0.0);
        let p = predict_cf(&m, &s, "a", "y", None).unwrap();
        assert_eq!(p.source, CfSource::UserMean);
        assert_eq!(p.value, 4.0);
    }

    #[test]
    fn weighted_average_with_set_similarities() {
        // m1 = 0, m3 = 1, m2 = 2
        let m = hand();
        let sims =
            SimilarityMatrix::from_dense(3, vec![1.0, 0.5, 0.8, 0.5, 1.0, 0.2, 0.8, 0.2, 1.0])
                .unwrap();
        let p = predict_cf(&m, &sims, "u1", "m2", None).unwrap();
        assert!((p.value - 3.6).abs() < 1e-12);
        assert_eq!(p.neighbors, 2);
        let p = predict_cf(&m, &sims, "u1", "m2", Some(1)).unwrap();
        assert_eq!(p.value, 4.0);
    }

    #[test]
    fn perfect_twin() {
        let mut m = RatingMatrix::new();
        m.insert("a", "x", 5.0).unwrap();
        m.insert("b", "x", 3.0).unwrap();
        m.insert("b", "y", 3.0).unwrap();
        m.insert("c", "x", 4.0).unwrap();
        m.insert("c", "y", 4.0).unwrap();
        let s = item_similarity(&m);
        let p = predict_cf(&m, &s, "a", "y", None).unwrap();
        assert!((p.value - 5.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_user_and_bad_k() {
        let m = hand();
        let s = item_similarity(&m);
        assert!(matches!(
            predict_cf(&m, &s, "zz", "m1", None),
            Err(Error::UnknownEntity { kind: "user", .. })
        ));
        assert!(predict_cf(&m, &s, "u1", "m1", Some(0)).is_err());
    }

    #[test]
    fn last_write_wins() {
        let mut m = RatingMatrix::new();
        m.insert("a", "x", 2.0).unwrap();
        m.insert("a", "x", 5.0).unwrap();
        assert_eq!(m.rating("a", "x"), Some(5.0));
        assert_eq!(m.overwrites(), 1);
        assert!(m.insert("a", "x", 6.0).is_err());
    }

    #[test]
    fn asymmetric_dense_rejected() {
        assert!(SimilarityMatrix::from_dense(2, vec![1.0, 0.1, 0.2, 1.0]).is_err());
    }

    #[test]
    fn table_export() {
        let m = hand();
        let mut buf = Vec::new();
        item_similarity(&m)
            .write_table(&mut buf, m.items())
            .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("item\tm1\tm3\tm2\nm1\t1\t"));
    }

    fn matrix_strategy() -> impl Strategy<Value = Vec<Option<u8>>> {
        proptest::collection::vec(proptest::option::weighted(0.7, 1u8..=5), 25)
    }

    proptest! {
        #[test]
        fn similarity_symmetric_and_bounded(cells in matrix_strategy()) {
            let mut m = RatingMatrix::new();
            for (k, c) in cells.iter().enumerate() {
                if let Some(r) = c {
                    m.insert(&format!("u{}", k / 5), &format!("i{}", k % 5), *r as f64).unwrap();
                }
            }
            let s = item_similarity(&m);
            for i in 0..s.len() {
                prop_assert_eq!(s.get(i, i), 1.0);
                for j in 0..s.len() {
                    prop_assert_eq!(s.get(i, j), s.get(j, i));
                    prop_assert!((0.0..=1.0 + 1e-12).contains(&s.get(i, j)));
                }
            }
        }

        #[test]
        fn prediction_is_convex(cells in matrix_strategy()) {
            let mut m = RatingMatrix::new();
            for (k, c) in cells.iter().enumerate() {
                if let Some(r) = c {
                    m.insert(&format!("u{}", k / 5), &format!("i{}", k % 5), *r as f64).unwrap();
                }
            }
            let s = item_similarity(&m);
            for u in 0..5 {
                let user = format!("u{u}");
                if m.user_row(&user).is_none() {
                    continue;
                }
                let rated: Vec<f64> = (0..5).filter_map(|i| m.rating(&user, &format!("i{i}"))).collect();
                let lo = rated.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = rated.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                for i in 0..5 {
                    let p = predict_cf(&m, &s, &user, &format!("i{i}"), None).unwrap();
                    prop_assert!(p.value >= lo - 1e-12 && p.value <= hi + 1e-12);
                }
            }
        }
    }
}
