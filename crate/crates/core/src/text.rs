//! Tokenization, frozen pre-trained embeddings and fixed-length documents.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::Tensor;

pub const PAD_ID: u32 = 0;
/// Out-of-vocabulary tokens under [`OovPolicy::Zero`].
pub const UNK_ID: u32 = 1;
const FIRST_TOKEN_ID: u32 = 2;

/// Lowercase; every character outside `[a-z0-9]` separates tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    for ch in text.chars().flat_map(char::to_lowercase) {
        if ch.is_ascii_lowercase() || ch.is_ascii_digit() {
            cur.push(ch);
        } else if !cur.is_empty() {
            tokens.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    tokens
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OovPolicy {
    /// Unknown tokens embed as the zero vector.
    #[default]
    Zero,
    /// Unknown tokens hash into one of `buckets` fixed random vectors.
    HashBucket { buckets: u32 },
}

/// Frozen token → vector table. Id 0 is padding, id 1 the zero-policy
/// unknown token; both map to the zero vector.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    index: HashMap<String, u32>,
    /// row-major `[rows × dim]`
    vectors: Vec<f64>,
    n_tokens: usize,
    oov: OovPolicy,
    duplicates: Vec<(usize, String)>,
}

/// 64-bit FNV-1a; stable across platforms and releases.
fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

impl EmbeddingTable {
    /// Build from in-memory entries. Later duplicates win.
    pub fn from_entries<I>(dim: usize, entries: I, oov: OovPolicy) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Vec<f64>)>,
    {
        let mut table = EmbeddingTable::empty(dim);
        for (k, (token, vec)) in entries.into_iter().enumerate() {
            if vec.len() != dim || !vec.iter().all(|v| v.is_finite()) {
                return Err(Error::Format {
                    line: k + 1,
                    message: format!("entry `{token}` is not {dim} finite values"),
                });
            }
            table.insert(token, &vec, k + 1);
        }
        table.finish(oov);
        Ok(table)
    }

    fn empty(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            index: HashMap::new(),
            vectors: vec![0.0; FIRST_TOKEN_ID as usize * dim],
            n_tokens: 0,
            oov: OovPolicy::Zero,
            duplicates: Vec::new(),
        }
    }

    fn insert(&mut self, token: String, vec: &[f64], line: usize) {
        if let Some(&id) = self.index.get(&token) {
            let start = id as usize * self.dim;
            self.vectors[start..start + self.dim].copy_from_slice(vec);
            self.duplicates.push((line, token));
        } else {
            let id = FIRST_TOKEN_ID + self.n_tokens as u32;
            self.index.insert(token, id);
            self.vectors.extend_from_slice(vec);
            self.n_tokens += 1;
        }
    }

    fn finish(&mut self, oov: OovPolicy) {
        self.oov = oov;
        if let OovPolicy::HashBucket { buckets } = oov {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 ^ buckets as u64);
            for _ in 0..buckets as usize * self.dim {
                self.vectors.push(rng.gen_range(-0.1..0.1));
            }
        }
    }

    pub fn from_reader<R: BufRead>(reader: R, dim: usize, oov: OovPolicy) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("embedding dim must be ≥ 1".into()));
        }
        if let OovPolicy::HashBucket { buckets: 0 } = oov {
            return Err(Error::InvalidConfig(
                "hash-bucket policy needs ≥ 1 bucket".into(),
            ));
        }
        let mut table = EmbeddingTable::empty(dim);
        let mut vec = Vec::with_capacity(dim);
        for (k, line) in reader.lines().enumerate() {
            let line = line?;
            let line_no = k + 1;
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(' ');
            let token = parts.next().unwrap_or_default().to_string();
            vec.clear();
            for p in parts {
                let v: f64 = p.parse().map_err(|_| Error::Format {
                    line: line_no,
                    message: format!("`{p}` is not a number"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Format {
                        line: line_no,
                        message: format!("non-finite value `{p}`"),
                    });
                }
                vec.push(v);
            }
            if vec.len() != dim {
                return Err(Error::Format {
                    line: line_no,
                    message: format!("expected token + {dim} values, found {} values", vec.len()),
                });
            }
            table.insert(token, &vec, line_no);
        }
        table.finish(oov);
        Ok(table)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Tokens loaded from the source (reserved rows excluded).
    pub fn len(&self) -> usize {
        self.n_tokens
    }

    pub fn is_empty(&self) -> bool {
        self.n_tokens == 0
    }

    /// Number of addressable ids, reserved and bucket rows included.
    pub fn rows(&self) -> usize {
        self.vectors.len() / self.dim
    }

    pub fn oov_policy(&self) -> OovPolicy {
        self.oov
    }

    /// (line, token) for every duplicate entry that overwrote an earlier one.
    pub fn duplicates(&self) -> &[(usize, String)] {
        &self.duplicates
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn id(&self, token: &str) -> u32 {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        match self.oov {
            OovPolicy::Zero => UNK_ID,
            OovPolicy::HashBucket { buckets } => {
                FIRST_TOKEN_ID + self.n_tokens as u32 + (fnv1a(token) % buckets as u64) as u32
            }
        }
    }

    pub fn vector(&self, id: u32) -> Option<&[f64]> {
        let start = id as usize * self.dim;
        self.vectors.get(start..start + self.dim)
    }

    pub fn vector_of(&self, token: &str) -> &[f64] {
        self.vector(self.id(token))
            .expect("ids from `id` are in range")
    }
}

pub fn load_embeddings(path: impl AsRef<Path>, dim: usize) -> Result<EmbeddingTable> {
    load_embeddings_with(path, dim, OovPolicy::Zero)
}

pub fn load_embeddings_with(
    path: impl AsRef<Path>,
    dim: usize,
    oov: OovPolicy,
) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    EmbeddingTable::from_reader(BufReader::new(file), dim, oov)
}

/// A user's or item's reviews as exactly `ids.len()` token ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedDocument {
    pub ids: Vec<u32>,
    pub n_real_tokens: usize,
    pub owner: String,
}

impl EncodedDocument {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn all_padding(owner: impl Into<String>, len: usize) -> Self {
        EncodedDocument {
            ids: vec![PAD_ID; len],
            n_real_tokens: 0,
            owner: owner.into(),
        }
    }
}

/// Concatenate the token streams of `texts` in order, map to ids, keep the
/// first `len` and post-pad with [`PAD_ID`].
pub fn build_document<'a, I>(
    texts: I,
    len: usize,
    table: &EmbeddingTable,
    owner: impl Into<String>,
) -> Result<EncodedDocument>
where
    I: IntoIterator<Item = &'a str>,
{
    if len == 0 {
        return Err(Error::InvalidConfig("document length must be ≥ 1".into()));
    }
    let mut ids = Vec::with_capacity(len);
    'outer: for text in texts {
        for tok in tokenize(text) {
            if ids.len() == len {
                break 'outer;
            }
            ids.push(table.id(&tok));
        }
    }
    let n_real_tokens = ids.len();
    ids.resize(len, PAD_ID);
    Ok(EncodedDocument {
        ids,
        n_real_tokens,
        owner: owner.into(),
    })
}

/// `[T × dim]` matrix whose row t is the vector of `doc.ids[t]`.
pub fn embed(doc: &EncodedDocument, table: &EmbeddingTable) -> Result<Tensor> {
    let dim = table.dim();
    let mut data = Vec::with_capacity(doc.len() * dim);
    for &id in &doc.ids {
        let v = table.vector(id).ok_or_else(|| {
            Error::Internal(format!(
                "document `{}` has id {id} beyond table of {} rows",
                doc.owner,
                table.rows()
            ))
        })?;
        data.extend_from_slice(v);
    }
    Tensor::new(&[doc.len(), dim], data)
}

/// Persist encoded documents: `u32 T`, `u32 count`, then `count × T` ids,
/// all little-endian.
pub fn write_document_cache<W: Write>(mut w: W, docs: &[EncodedDocument]) -> Result<()> {
    let t = docs.first().map_or(0, |d| d.len());
    if docs.iter().any(|d| d.len() != t) {
        return Err(Error::shape("documents in one cache must share a length"));
    }
    let as_u32 = |n: usize, what: &str| {
        u32::try_from(n).map_err(|_| Error::InvalidInput(format!("{what} {n} exceeds u32")))
    };
    w.write_all(&as_u32(t, "document length")?.to_le_bytes())?;
    w.write_all(&as_u32(docs.len(), "document count")?.to_le_bytes())?;
    for d in docs {
        for id in &d.ids {
            w.write_all(&id.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Read back the id rows written by [`write_document_cache`].
pub fn read_document_cache<R: Read>(mut r: R) -> Result<Vec<Vec<u32>>> {
    let mut word = [0u8; 4];
    let mut next = |r: &mut R| -> Result<u32> {
        r.read_exact(&mut word).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => {
                Error::InvalidInput("document cache truncated".into())
            }
            _ => Error::Stream(e),
        })?;
        Ok(u32::from_le_bytes(word))
    };
    let t = next(&mut r)? as usize;
    let count = next(&mut r)? as usize;
    let mut rows = Vec::with_capacity(count);
    for _ in 0..count {
        let mut row = Vec::with_capacity(t);
        for _ in 0..t {
            row.push(next(&mut r)?);
        }
        rows.push(row);
    }
    Ok(rows)
}
