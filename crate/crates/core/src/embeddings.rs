//! Pre-trained word vectors and sentence matrices.
//!
//! Two on-disk formats are accepted:
//!
//! * text: a `V D` header line followed by `V` lines of `token x1 .. xD`;
//! * binary: the magic bytes `EMB1`, the same `V D\n` header, then `V` records
//!   of `token`, a single space and `D` little-endian `f32` values. A newline
//!   between records is tolerated.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numerics::{norm_unchecked, Matrix};

const BINARY_MAGIC: &[u8; 4] = b"EMB1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OovPolicy {
    Zero,
    #[default]
    HashRandom,
}

impl fmt::Display for OovPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OovPolicy::Zero => "zero",
            OovPolicy::HashRandom => "hash-random",
        })
    }
}

impl FromStr for OovPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(OovPolicy::Zero),
            "hash-random" | "hash_random" => Ok(OovPolicy::HashRandom),
            other => Err(Error::Config(format!("unknown oov policy `{other}`"))),
        }
    }
}

/// Read-only vocabulary of word vectors.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    vocab: HashMap<String, usize>,
    tokens: Vec<String>,
    vectors: Matrix,
    oov_policy: OovPolicy,
    lowercase: bool,
    duplicates: usize,
    fingerprint: String,
}

impl EmbeddingStore {
    /// Builds a store from in-memory `(token, vector)` pairs. Later duplicates are dropped.
    pub fn from_pairs<S, V>(pairs: impl IntoIterator<Item = (S, V)>, oov_policy: OovPolicy) -> Result<Self>
    where
        S: Into<String>,
        V: AsRef<[f64]>,
    {
        let mut vocab = HashMap::new();
        let mut tokens = Vec::new();
        let mut data = Vec::new();
        let mut dim = None;
        let mut duplicates = 0;
        let mut hasher = Sha256::new();
        for (tok, vec) in pairs {
            let tok = tok.into();
            let vec = vec.as_ref();
            let d = *dim.get_or_insert(vec.len());
            if vec.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: vec.len(),
                });
            }
            hasher.update(tok.as_bytes());
            for x in vec {
                hasher.update(x.to_le_bytes());
            }
            if vocab.contains_key(&tok) {
                duplicates += 1;
                continue;
            }
            vocab.insert(tok.clone(), tokens.len());
            tokens.push(tok);
            data.extend_from_slice(vec);
        }
        let dim = dim.ok_or(Error::Empty("embedding vocabulary"))?;
        if dim == 0 {
            return Err(Error::Empty("embedding dimension"));
        }
        let vectors = Matrix::from_vec(tokens.len(), dim, data)?;
        Ok(EmbeddingStore {
            vocab,
            tokens,
            vectors,
            oov_policy,
            lowercase: true,
            duplicates,
            fingerprint: hex(&hasher.finalize()),
        })
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn oov_policy(&self) -> OovPolicy {
        self.oov_policy
    }

    pub fn set_oov_policy(&mut self, policy: OovPolicy) {
        self.oov_policy = policy;
    }

    pub fn lowercase(&self) -> bool {
        self.lowercase
    }

    /// When on (the default), a token missing from the vocabulary is retried lowercased.
    pub fn set_lowercase(&mut self, on: bool) {
        self.lowercase = on;
    }

    /// Number of duplicate tokens skipped at load time.
    pub fn duplicate_count(&self) -> usize {
        self.duplicates
    }

    /// SHA-256 of the source file (or of the in-memory pairs).
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        if let Some(&i) = self.vocab.get(token) {
            return Some(i);
        }
        if self.lowercase {
            let lower = token.to_lowercase();
            if lower != token {
                return self.vocab.get(&lower).copied();
            }
        }
        None
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index_of(token).is_some()
    }

    /// Total lookup: OOV tokens follow the store's policy.
    pub fn lookup(&self, token: &str) -> Vec<f64> {
        match self.index_of(token) {
            Some(i) => self.vectors.row(i).to_vec(),
            None => match self.oov_policy {
                OovPolicy::Zero => vec![0.0; self.dim()],
                OovPolicy::HashRandom => hash_random_vector(token, self.dim(), self.lowercase),
            },
        }
    }
}

/// Deterministic unit vector derived from the token bytes.
fn hash_random_vector(token: &str, dim: usize, lowercase: bool) -> Vec<f64> {
    let key = if lowercase {
        token.to_lowercase()
    } else {
        token.to_string()
    };
    let digest = Sha256::digest(key.as_bytes());
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    let mut rng = ChaCha8Rng::from_seed(seed);
    loop {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = norm_unchecked(&v);
        if n > 1e-6 {
            v.iter_mut().for_each(|x| *x /= n);
            return v;
        }
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceMatrix {
    pub tokens: Vec<String>,
    pub vectors: Matrix,
}

impl SentenceMatrix {
    pub fn len(&self) -> usize {
        self.vectors.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }
}

pub fn embed_sentence<S: AsRef<str>>(store: &EmbeddingStore, tokens: &[S]) -> Result<SentenceMatrix> {
    if tokens.is_empty() {
        return Err(Error::Empty("sentence tokens"));
    }
    let d = store.dim();
    let mut data = Vec::with_capacity(tokens.len() * d);
    for t in tokens {
        data.extend(store.lookup(t.as_ref()));
    }
    Ok(SentenceMatrix {
        tokens: tokens.iter().map(|t| t.as_ref().to_string()).collect(),
        vectors: Matrix::from_vec(tokens.len(), d, data)?,
    })
}

/// Splits on whitespace.
pub fn tokenize(sentence: &str) -> Vec<String> {
    sentence.split_whitespace().map(str::to_string).collect()
}

pub fn load_embeddings(path: impl AsRef<Path>, oov_policy: OovPolicy) -> Result<EmbeddingStore> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.is_empty() {
        return Err(Error::parse(path, 1, "empty embedding file"));
    }
    let mut store = if bytes.starts_with(BINARY_MAGIC) {
        parse_binary(path, &bytes[BINARY_MAGIC.len()..], oov_policy)?
    } else {
        let text = std::str::from_utf8(&bytes)
            .map_err(|e| Error::parse(path, 1, format!("invalid utf-8: {e}")))?;
        parse_text(path, text, oov_policy)?
    };
    store.fingerprint = hex(&Sha256::digest(&bytes));
    if store.duplicates > 0 {
        log::warn!(
            "{}: {} duplicate token(s) ignored",
            path.display(),
            store.duplicates
        );
    }
    Ok(store)
}

fn parse_header(path: &Path, line: &str) -> Result<(usize, usize)> {
    let mut it = line.split_whitespace();
    let (Some(v), Some(d), None) = (it.next(), it.next(), it.next()) else {
        return Err(Error::parse(path, 1, format!("malformed header `{line}`")));
    };
    let v = v
        .parse::<usize>()
        .map_err(|_| Error::parse(path, 1, format!("bad vocabulary size `{v}`")))?;
    let d = d
        .parse::<usize>()
        .map_err(|_| Error::parse(path, 1, format!("bad dimension `{d}`")))?;
    if v == 0 || d == 0 {
        return Err(Error::parse(path, 1, "vocabulary size and dimension must be positive"));
    }
    Ok((v, d))
}

fn parse_text(path: &Path, text: &str, oov_policy: OovPolicy) -> Result<EmbeddingStore> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty embedding file"))?;
    let (vocab_size, dim) = parse_header(path, header)?;

    let mut pairs = Vec::with_capacity(vocab_size);
    for (idx, line) in lines {
        let lineno = idx + 1;
        let mut fields = line.split_whitespace();
        let token = fields.next().unwrap_or_default();
        let vec = fields
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::parse(path, lineno, format!("bad number `{f}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if vec.len() != dim {
            return Err(Error::parse(
                path,
                lineno,
                format!("row width {} does not match dimension {dim}", vec.len()),
            ));
        }
        pairs.push((token.to_string(), vec));
    }
    if pairs.len() != vocab_size {
        return Err(Error::parse(
            path,
            text.lines().count(),
            format!("header declares {vocab_size} rows, found {}", pairs.len()),
        ));
    }
    EmbeddingStore::from_pairs(pairs, oov_policy)
}

fn parse_binary(path: &Path, body: &[u8], oov_policy: OovPolicy) -> Result<EmbeddingStore> {
    let nl = body
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::parse(path, 1, "missing header line"))?;
    let header = std::str::from_utf8(&body[..nl])
        .map_err(|_| Error::parse(path, 1, "header is not utf-8"))?;
    let (vocab_size, dim) = parse_header(path, header)?;

    let mut pos = nl + 1;
    let mut pairs = Vec::with_capacity(vocab_size);
    for rec in 0..vocab_size {
        // records are numbered like text lines, header = line 1
        let lineno = rec + 2;
        while pos < body.len() && body[pos] == b'\n' {
            pos += 1;
        }
        let sp = body[pos..]
            .iter()
            .position(|&b| b == b' ')
            .ok_or_else(|| Error::parse(path, lineno, "unterminated token"))?;
        let token = std::str::from_utf8(&body[pos..pos + sp])
            .map_err(|_| Error::parse(path, lineno, "token is not utf-8"))?
            .to_string();
        pos += sp + 1;
        let end = pos + 4 * dim;
        if end > body.len() {
            return Err(Error::parse(path, lineno, "truncated vector"));
        }
        let vec: Vec<f64> = body[pos..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        if vec.iter().any(|x| !x.is_finite()) {
            return Err(Error::parse(path, lineno, "non-finite value"));
        }
        pos = end;
        pairs.push((token, vec));
    }
    EmbeddingStore::from_pairs(pairs, oov_policy)
}

/// Writes a store in the text format.
pub fn write_text_embeddings(store: &EmbeddingStore, path: impl AsRef<Path>) -> Result<()> {
    use std::fmt::Write as _;
    let mut out = format!("{} {}\n", store.len(), store.dim());
    for (i, tok) in store.tokens.iter().enumerate() {
        out.push_str(tok);
        for x in store.vectors.row(i) {
            let _ = write!(out, " {x}");
        }
        out.push('\n');
    }
    let path = path.as_ref();
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
