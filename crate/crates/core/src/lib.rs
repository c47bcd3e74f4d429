//! DeepCoNN-style rating prediction from review text.
//!
//! Two towers encode a user's reviews and an item's reviews into latent
//! vectors; a coupling head (dot product or factorization machine) maps the
//! pair to a rating. Everything needed to run that end to end lives here:
//!
//! * [`ingest`]: JSON-lines review parsing, grouping, splits
//! * [`text`]: tokenization, frozen pre-trained embeddings, fixed-length documents
//! * [`kernel`]: 64-bit tensors, layers with hand-written backward passes, gradient checking
//! * [`model`]: towers, heads, the assembled network and MSE
//! * [`train`]: Adam/RMSprop, the mini-batch loop, evaluation, checkpoints, reports
//! * [`baseline`]: item-item cosine collaborative filtering
//! * [`synthetic`]: a planted-structure micro-dataset
//! * [`verify`]: finite-difference checks of every backward pass

pub mod baseline;
pub mod error;
pub mod ingest;
pub mod kernel;
pub mod model;
pub mod synthetic;
pub mod text;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
pub use ingest::{DatasetStats, ReviewGroups, ReviewRecord, Split, SplitMode};
pub use kernel::{Parameter, Tensor};
pub use model::{DeepConn, HeadKind, ModelConfig, Preset, TowerConfig, TowerKind};
pub use text::{EmbeddingTable, EncodedDocument, OovPolicy};
pub use train::{OptimizerConfig, TrainReport};
