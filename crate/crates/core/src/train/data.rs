use std::collections::BTreeMap;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{group_reviews, ReviewRecord, Split};
use crate::kernel::Tensor;
use crate::text::{build_document, embed, EmbeddingTable, EncodedDocument};

/// Which reviews feed the user and item documents.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocumentSource {
    /// Training reviews only; held-out reviews never enter a document.
    #[default]
    TrainOnly,
    /// Every review in the dataset, including the pair being predicted.
    AllReviews,
}

impl FromStr for DocumentSource {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train-only" | "train_only" => Ok(DocumentSource::TrainOnly),
            "all-reviews" | "all_reviews" => Ok(DocumentSource::AllReviews),
            other => Err(format!(
                "unknown document source `{other}` (train-only|all-reviews)"
            )),
        }
    }
}

/// What to predict for a user or item without a document.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColdStartPolicy {
    #[default]
    GlobalMean,
    /// Run the model on an all-padding document.
    EmptyDocument,
}

impl FromStr for ColdStartPolicy {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "global-mean" | "global_mean" => Ok(ColdStartPolicy::GlobalMean),
            "empty-document" | "empty_document" => Ok(ColdStartPolicy::EmptyDocument),
            other => Err(format!(
                "unknown cold-start policy `{other}` (global-mean|empty-document)"
            )),
        }
    }
}

/// Encoded per-user and per-item documents over a frozen embedding table.
#[derive(Clone, Debug)]
pub struct DocumentBank {
    table: EmbeddingTable,
    doc_len: usize,
    users: BTreeMap<String, EncodedDocument>,
    items: BTreeMap<String, EncodedDocument>,
}

impl DocumentBank {
    pub fn build(records: &[ReviewRecord], table: EmbeddingTable, doc_len: usize) -> Result<Self> {
        if doc_len == 0 {
            return Err(Error::InvalidConfig("document length must be ≥ 1".into()));
        }
        let groups = group_reviews(records);
        let encode = |map: &BTreeMap<String, Vec<(String, String)>>| {
            map.par_iter()
                .map(|(id, texts)| {
                    build_document(
                        texts.iter().map(|(_, t)| t.as_str()),
                        doc_len,
                        &table,
                        id.clone(),
                    )
                    .map(|d| (id.clone(), d))
                })
                .collect::<Result<BTreeMap<_, _>>>()
        };
        let users = encode(&groups.by_user)?;
        let items = encode(&groups.by_item)?;
        Ok(DocumentBank {
            table,
            doc_len,
            users,
            items,
        })
    }

    pub fn from_split(
        split: &Split,
        source: DocumentSource,
        table: EmbeddingTable,
        doc_len: usize,
    ) -> Result<Self> {
        match source {
            DocumentSource::TrainOnly => Self::build(&split.train, table, doc_len),
            DocumentSource::AllReviews => {
                let all: Vec<ReviewRecord> = split
                    .train
                    .iter()
                    .chain(&split.validation)
                    .chain(&split.test)
                    .cloned()
                    .collect();
                Self::build(&all, table, doc_len)
            }
        }
    }

    pub fn table(&self) -> &EmbeddingTable {
        &self.table
    }

    pub fn doc_len(&self) -> usize {
        self.doc_len
    }

    pub fn user(&self, id: &str) -> Option<&EncodedDocument> {
        self.users.get(id)
    }

    pub fn item(&self, id: &str) -> Option<&EncodedDocument> {
        self.items.get(id)
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn user_documents(&self) -> impl Iterator<Item = &EncodedDocument> {
        self.users.values()
    }

    pub fn item_documents(&self) -> impl Iterator<Item = &EncodedDocument> {
        self.items.values()
    }

    pub fn embed(&self, doc: &EncodedDocument) -> Result<Tensor> {
        embed(doc, &self.table)
    }

    pub fn empty_embedding(&self) -> Tensor {
        Tensor::zeros(&[self.doc_len, self.table.dim()])
    }

    /// Embedded (user, item) documents for a training pair; both must exist.
    pub(crate) fn pair(&self, rec: &ReviewRecord) -> Result<(Tensor, Tensor)> {
        let u = self
            .users
            .get(&rec.user_id)
            .ok_or_else(|| Error::UnknownEntity {
                kind: "user",
                id: rec.user_id.clone(),
            })?;
        let i = self
            .items
            .get(&rec.item_id)
            .ok_or_else(|| Error::UnknownEntity {
                kind: "item",
                id: rec.item_id.clone(),
            })?;
        Ok((self.embed(u)?, self.embed(i)?))
    }
}

pub fn mean_rating(records: &[ReviewRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::InvalidInput("mean over zero ratings".into()));
    }
    Ok(records.iter().map(|r| r.rating).sum::<f64>() / records.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{split_dataset, SplitMode};
    use crate::text::{OovPolicy, PAD_ID};

    fn table() -> EmbeddingTable {
        EmbeddingTable::from_entries(
            2,
            [
                ("good".to_string(), vec![1.0, 0.0]),
                ("bad".to_string(), vec![-1.0, 0.0]),
            ],
            OovPolicy::Zero,
        )
        .unwrap()
    }

    fn records() -> Vec<ReviewRecord> {
        (0..20)
            .map(|k| {
                ReviewRecord::new(
                    format!("u{}", k % 5),
                    format!("i{}", k % 4),
                    1.0 + (k % 5) as f64,
                    if k % 2 == 0 { "good" } else { "bad" },
                )
            })
            .collect()
    }

    #[test]
    fn train_only_excludes_held_out_reviews() {
        let recs: Vec<ReviewRecord> = vec![
            ReviewRecord::new("u", "a", 5.0, "good"),
            ReviewRecord::new("u", "b", 1.0, "bad"),
        ];
        let split = Split {
            train: vec![recs[0].clone()],
            validation: vec![],
            test: vec![recs[1].clone()],
            mode: SplitMode::ByReview,
            seed: 0,
        };
        let bank = DocumentBank::from_split(&split, DocumentSource::TrainOnly, table(), 4).unwrap();
        assert_eq!(bank.user("u").unwrap().n_real_tokens, 1);
        assert!(bank.item("b").is_none());
        let bank =
            DocumentBank::from_split(&split, DocumentSource::AllReviews, table(), 4).unwrap();
        assert_eq!(bank.user("u").unwrap().n_real_tokens, 2);
        assert!(bank.item("b").is_some());
    }

    #[test]
    fn documents_have_fixed_length() {
        let split = split_dataset(&records(), 0.8, 0.0, 3, SplitMode::ByReview).unwrap();
        let bank = DocumentBank::from_split(&split, DocumentSource::TrainOnly, table(), 3).unwrap();
        for d in bank.user_documents().chain(bank.item_documents()) {
            assert_eq!(d.len(), 3);
            assert!(d.ids[d.n_real_tokens..].iter().all(|&id| id == PAD_ID));
        }
        let (u, i) = bank.pair(&split.train[0]).unwrap();
        assert_eq!(u.shape(), &[3, 2]);
        assert_eq!(i.shape(), &[3, 2]);
    }

    #[test]
    fn mean_of_empty_is_error() {
        assert!(mean_rating(&[]).is_err());
        assert_eq!(mean_rating(&records()[..2]).unwrap(), 1.5);
    }
}
