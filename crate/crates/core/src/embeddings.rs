//! XEMB binary embedding store.
//!
//! Layout (little-endian): magic `XEMB`, u32 version = 1, u32 dim, u64 doc_count,
//! then per document: u32 id_len, id bytes, u32 n_tokens, and
//! `(n_tokens + 1) * dim` f32 values. Vector 0 is the document context vector.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::corpus::Corpus;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"XEMB";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
struct DocVectors {
    n_tokens: usize,
    // (n_tokens + 1) * dim, context first
    data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    docs: BTreeMap<String, DocVectors>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Self {
        EmbeddingStore {
            dim,
            docs: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.docs.contains_key(doc_id)
    }

    /// Insert a document: `context` plus one vector per token.
    pub fn insert(&mut self, doc_id: impl Into<String>, context: &[f32], tokens: &[Vec<f32>]) -> Result<()> {
        let doc_id = doc_id.into();
        if context.len() != self.dim {
            return Err(Error::dim(self.dim, context.len(), format!("context vector of {doc_id}")));
        }
        let mut data = Vec::with_capacity((tokens.len() + 1) * self.dim);
        data.extend_from_slice(context);
        for (i, t) in tokens.iter().enumerate() {
            if t.len() != self.dim {
                return Err(Error::dim(self.dim, t.len(), format!("token {i} of {doc_id}")));
            }
            data.extend_from_slice(t);
        }
        self.docs.insert(
            doc_id,
            DocVectors {
                n_tokens: tokens.len(),
                data,
            },
        );
        Ok(())
    }

    pub fn context(&self, doc_id: &str) -> Result<&[f32]> {
        let d = self.get(doc_id)?;
        Ok(&d.data[..self.dim])
    }

    pub fn token(&self, doc_id: &str, idx: usize) -> Result<&[f32]> {
        let d = self.get(doc_id)?;
        if idx >= d.n_tokens {
            return Err(Error::dim(d.n_tokens, idx + 1, format!("token index in {doc_id}")));
        }
        let s = (idx + 1) * self.dim;
        Ok(&d.data[s..s + self.dim])
    }

    pub fn n_tokens(&self, doc_id: &str) -> Result<usize> {
        Ok(self.get(doc_id)?.n_tokens)
    }

    fn get(&self, doc_id: &str) -> Result<&DocVectors> {
        self.docs
            .get(doc_id)
            .ok_or_else(|| Error::MissingDocument(doc_id.to_string()))
    }

    /// Every corpus document covered with a matching token count.
    pub fn validate_against(&self, corpus: &Corpus) -> Result<()> {
        for doc in &corpus.documents {
            let n = self.n_tokens(&doc.doc_id)?;
            if n != doc.tokens.len() {
                return Err(Error::dim(
                    doc.tokens.len(),
                    n,
                    format!("token vectors for {}", doc.doc_id),
                ));
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.docs.len() as u64).to_le_bytes());
        for (id, d) in &self.docs {
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            out.extend_from_slice(&(d.n_tokens as u32).to_le_bytes());
            for v in &d.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::BadEmbeddingFile("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::BadEmbeddingFile(format!("unsupported version {version}")));
        }
        let dim = r.u32()? as usize;
        if dim == 0 {
            return Err(Error::BadEmbeddingFile("dim is zero".into()));
        }
        let count = r.u64()?;
        let mut store = EmbeddingStore::new(dim);
        for _ in 0..count {
            let id_len = r.u32()? as usize;
            let id = std::str::from_utf8(r.take(id_len)?)
                .map_err(|e| Error::BadEmbeddingFile(format!("document id not utf-8: {e}")))?
                .to_string();
            let n_tokens = r.u32()? as usize;
            let n_vals = (n_tokens + 1)
                .checked_mul(dim)
                .ok_or_else(|| Error::BadEmbeddingFile("size overflow".into()))?;
            let raw = r.take(n_vals * 4)?;
            let data: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("component {bad} of document {id}")));
            }
            store.docs.insert(id, DocVectors { n_tokens, data });
        }
        Ok(store)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::TruncatedFile(format!(
                "needed {n} bytes at offset {}, {} left",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(u64::from_le_bytes(a))
    }
}

/// Load an XEMB file and check it against the corpus (and the expected
/// dimension, when a model config pins one).
pub fn load_embeddings(
    path: impl AsRef<Path>,
    corpus: &Corpus,
    expected_dim: Option<usize>,
) -> Result<EmbeddingStore> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let store = EmbeddingStore::from_bytes(&bytes)?;
    if let Some(d) = expected_dim {
        if d != store.dim {
            return Err(Error::dim(d, store.dim, "embedding file dim vs config d_tok"));
        }
    }
    store.validate_against(corpus)?;
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_corpus, MentionKind};
    use rand::{Rng, SeedableRng};

    fn three_token_corpus() -> Corpus {
        parse_corpus(
            r#"{"doc_id":"d1","tokens":["a","b","c"],"mentions":[]}"#,
            MentionKind::Entity,
        )
        .unwrap()
    }

    fn store_for(dim: usize) -> EmbeddingStore {
        let mut s = EmbeddingStore::new(dim);
        let tok: Vec<Vec<f32>> = (0..3).map(|i| vec![i as f32; dim]).collect();
        s.insert("d1", &vec![9.0; dim], &tok).unwrap();
        s
    }

    #[test]
    fn three_token_doc_has_context_plus_three() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.xemb");
        store_for(4).write(&p).unwrap();
        let s = load_embeddings(&p, &three_token_corpus(), Some(4)).unwrap();
        assert_eq!(s.n_tokens("d1").unwrap(), 3);
        assert_eq!(s.context("d1").unwrap(), &[9.0; 4]);
        assert_eq!(s.token("d1", 2).unwrap(), &[2.0; 4]);
        // 4 + 4 + 4 + 8 header, 4 + 2 id, 4 count, 4 vectors * 4 dims * 4 bytes
        assert_eq!(std::fs::read(&p).unwrap().len(), 20 + 6 + 4 + 64);
    }

    #[test]
    fn dim_mismatch_against_config() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.xemb");
        store_for(768).write(&p).unwrap();
        let err = load_embeddings(&p, &three_token_corpus(), Some(512)).unwrap_err();
        assert!(matches!(err, Error::DimMismatch { expected: 512, got: 768, .. }));
    }

    #[test]
    fn missing_document() {
        let s = EmbeddingStore::new(2);
        assert!(matches!(
            s.validate_against(&three_token_corpus()),
            Err(Error::MissingDocument(_))
        ));
    }

    #[test]
    fn truncated_file() {
        let bytes = store_for(4).to_bytes();
        for cut in [3, 10, 25, bytes.len() - 1] {
            let err = EmbeddingStore::from_bytes(&bytes[..cut]).unwrap_err();
            assert!(matches!(err, Error::TruncatedFile(_)), "cut {cut}: {err}");
        }
    }

    #[test]
    fn non_finite_rejected() {
        let mut s = EmbeddingStore::new(1);
        s.insert("d", &[f32::NAN], &[]).unwrap();
        assert!(matches!(
            EmbeddingStore::from_bytes(&s.to_bytes()),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn random_store_round_trips_bit_exactly() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut s = EmbeddingStore::new(5);
        for d in 0..4 {
            let n = rng.random_range(0..6);
            let toks: Vec<Vec<f32>> = (0..n)
                .map(|_| (0..5).map(|_| rng.random::<f32>() * 100.0 - 50.0).collect())
                .collect();
            let ctx: Vec<f32> = (0..5).map(|_| rng.random()).collect();
            s.insert(format!("doc{d}"), &ctx, &toks).unwrap();
        }
        let bytes = s.to_bytes();
        let back = EmbeddingStore::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back, s);
    }
}
