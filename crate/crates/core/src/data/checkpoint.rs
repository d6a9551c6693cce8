//! Binary checkpoint format.
//!
//! ```text
//! "LXDC"                      magic
//! u32 LE                      format version
//! u32 LE + UTF-8 bytes        `key = value` config text (+ embedding_fingerprint)
//! for each tensor in TENSOR_NAMES order:
//!     u64 LE element count, then that many f64 LE values
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{parse_kv, Model, ModelConfig, TENSOR_NAMES};

pub const MAGIC: &[u8; 4] = b"LXDC";
pub const FORMAT_VERSION: u32 = 1;

const FINGERPRINT_KEY: &str = "embedding_fingerprint";

pub fn checkpoint_bytes(model: &Model) -> Vec<u8> {
    let mut text = model.config.to_kv_text();
    if let Some(fp) = &model.embedding_fingerprint {
        text.push_str(&format!("{FINGERPRINT_KEY} = {fp}\n"));
    }
    let tensors = model.tensors();
    let n_values: usize = tensors.iter().map(|t| t.len()).sum();
    let mut out = Vec::with_capacity(12 + text.len() + 8 * (n_values + tensors.len()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.len() as u64).to_le_bytes());
        for x in t {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::TruncatedCheckpoint(format!("while reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let text_len = r.u32("config length")? as usize;
    let text = std::str::from_utf8(r.take(text_len, "config")?)
        .map_err(|_| Error::Checkpoint("config block is not UTF-8".into()))?;

    let mut kv = parse_kv(text)?;
    let fingerprint = kv.remove(FINGERPRINT_KEY);
    let mut config = ModelConfig::default();
    config.apply(&kv)?;
    config.validate()?;

    let mut model = Model::new(config)?;
    model.embedding_fingerprint = fingerprint;
    for (name, tensor) in TENSOR_NAMES.iter().zip(model.tensors_mut()) {
        let count = r.u64(name)? as usize;
        if count != tensor.len() {
            return Err(Error::shape(*name, tensor.len(), count));
        }
        let raw = r.take(count * 8, name)?;
        for (x, chunk) in tensor.iter_mut().zip(raw.chunks_exact(8)) {
            *x = f64::from_le_bytes(chunk.try_into().unwrap());
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after last tensor",
            bytes.len() - r.pos
        )));
    }
    if !model.is_finite() {
        return Err(Error::NonFinite("checkpoint parameters"));
    }
    Ok(model)
}

pub fn save_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, checkpoint_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::composer::{win_groups, ChannelWeights};

    fn small(dim: usize) -> Model {
        let mut m = Model::new(ModelConfig {
            embedding_dim: dim,
            filters: win_groups(3, 2),
            ..ModelConfig::default()
        })
        .unwrap();
        for (i, w) in m.output_weights.iter_mut().enumerate() {
            *w = (i as f64 * 0.37).sin() / 3.0;
        }
        m.output_bias = -0.125;
        m.embedding_fingerprint = Some("abc123".into());
        m
    }

    #[test]
    fn round_trip_is_bitwise() {
        let m = small(4);
        let back = checkpoint_from_bytes(&checkpoint_bytes(&m)).unwrap();
        assert_eq!(back.config, m.config);
        assert_eq!(back.embedding_fingerprint, m.embedding_fingerprint);
        for (a, b) in m.tensors().iter().zip(back.tensors().iter()) {
            let bits = |t: &[f64]| t.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }

        let mut sep = small(3);
        sep.config.channels = ChannelWeights::Separate;
        let sep = Model::new(sep.config).unwrap();
        assert_eq!(checkpoint_from_bytes(&checkpoint_bytes(&sep)).unwrap(), sep);
    }

    #[test]
    fn default_model_round_trip() {
        let m = Model::new(ModelConfig {
            filters: win_groups(3, 5),
            ..ModelConfig::default()
        })
        .unwrap();
        assert_eq!(checkpoint_from_bytes(&checkpoint_bytes(&m)).unwrap(), m);
    }

    #[test]
    fn truncation_detected() {
        let bytes = checkpoint_bytes(&small(4));
        for cut in [1, 7, 8, 9, bytes.len() - 20] {
            match checkpoint_from_bytes(&bytes[..bytes.len() - cut]) {
                Err(e @ Error::TruncatedCheckpoint(_)) => {
                    assert!(e.to_string().starts_with("truncated checkpoint"));
                }
                other => panic!("cut {cut}: {other:?}"),
            }
        }
    }

    #[test]
    fn version_and_magic() {
        let mut bytes = checkpoint_bytes(&small(4));
        bytes[4] = 9;
        assert!(matches!(checkpoint_from_bytes(&bytes), Err(Error::Checkpoint(m)) if m.contains("version")));
        bytes[0] = b'X';
        assert!(matches!(checkpoint_from_bytes(&bytes), Err(Error::Checkpoint(m)) if m.contains("magic")));
        let mut extra = checkpoint_bytes(&small(4));
        extra.push(0);
        assert!(checkpoint_from_bytes(&extra).is_err());
    }

    #[test]
    fn dim_mismatch_names_tensor() {
        // a d=4 checkpoint whose config claims d=8
        let bytes = checkpoint_bytes(&small(4));
        let text_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let text = std::str::from_utf8(&bytes[12..12 + text_len]).unwrap();
        let edited = text.replace("embedding_dim = 4", "embedding_dim = 8");
        let mut forged = bytes[..8].to_vec();
        forged.extend_from_slice(&(edited.len() as u32).to_le_bytes());
        forged.extend_from_slice(edited.as_bytes());
        forged.extend_from_slice(&bytes[12 + text_len..]);
        match checkpoint_from_bytes(&forged) {
            Err(Error::ShapeMismatch { tensor, .. }) => assert_eq!(tensor, "filter_weights"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn file_io() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let m = small(4);
        save_checkpoint(&m, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), m);
        assert!(matches!(load_checkpoint(dir.path().join("missing")), Err(Error::Io { .. })));
    }
}
