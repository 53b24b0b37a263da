//! Versioned binary model format, all integers and floats little-endian:
//!
//! ```text
//! magic "MCFT" | version u32
//! config: dim u32 | lr f64 | word_ngrams u32 | epochs u32 | buckets u64 | min_count u32 | seed u64
//! vocab: count u32, then per word (by row index): len u32 | utf-8 bytes
//! word rows: count * dim f32
//! bucket rows: count u64, then per row (ascending bucket): bucket u64 | dim f32
//! output rows: 2 * dim f32 (negative, positive)
//! sha-256 of everything above (32 bytes)
//! ```

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{ClassifierConfig, ClassifierError, ClassifierModel};

pub const MAGIC: &[u8; 4] = b"MCFT";
pub const FORMAT_VERSION: u32 = 1;

impl ClassifierModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(c.dim as u32).to_le_bytes());
        out.extend_from_slice(&c.lr.to_le_bytes());
        out.extend_from_slice(&(c.word_ngrams as u32).to_le_bytes());
        out.extend_from_slice(&c.epochs.to_le_bytes());
        out.extend_from_slice(&c.buckets.to_le_bytes());
        out.extend_from_slice(&c.min_count.to_le_bytes());
        out.extend_from_slice(&c.seed.to_le_bytes());

        let mut words: Vec<(&String, &u32)> = self.vocab.iter().collect();
        words.sort_unstable_by_key(|(_, &i)| i);
        out.extend_from_slice(&(words.len() as u32).to_le_bytes());
        for (w, _) in words {
            out.extend_from_slice(&(w.len() as u32).to_le_bytes());
            out.extend_from_slice(w.as_bytes());
        }
        for v in &self.word_rows {
            out.extend_from_slice(&v.to_le_bytes());
        }

        let mut buckets: Vec<(&u64, &Vec<f32>)> = self.bucket_rows.iter().collect();
        buckets.sort_unstable_by_key(|(&b, _)| b);
        out.extend_from_slice(&(buckets.len() as u64).to_le_bytes());
        for (b, row) in buckets {
            out.extend_from_slice(&b.to_le_bytes());
            for v in row {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        for v in &self.output {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, String> {
        if bytes.len() < MAGIC.len() + 4 + 32 {
            return Err("file is truncated".into());
        }
        if &bytes[..4] != MAGIC {
            return Err("bad magic bytes".into());
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            ));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err("checksum mismatch (corrupted or truncated file)".into());
        }

        let mut cur = Cursor { buf: body, pos: 8 };
        let dim = cur.u32()? as usize;
        let config = ClassifierConfig {
            dim,
            lr: cur.f64()?,
            word_ngrams: cur.u32()? as usize,
            epochs: cur.u32()?,
            buckets: cur.u64()?,
            min_count: cur.u32()?,
            seed: cur.u64()?,
        };
        config.validate().map_err(|e| e.to_string())?;

        let nwords = cur.u32()? as usize;
        let mut vocab = HashMap::with_capacity(nwords);
        for i in 0..nwords {
            let len = cur.u32()? as usize;
            let word = std::str::from_utf8(cur.take(len)?).map_err(|_| "vocabulary entry is not UTF-8".to_string())?;
            vocab.insert(word.to_string(), i as u32);
        }
        let word_rows = cur.f32s(nwords * dim)?;
        let nbuckets = cur.u64()?;
        let mut bucket_rows = HashMap::new();
        for _ in 0..nbuckets {
            let b = cur.u64()?;
            if b >= config.buckets {
                return Err(format!("bucket index {b} out of range"));
            }
            bucket_rows.insert(b, cur.f32s(dim)?);
        }
        let output = cur.f32s(2 * dim)?;
        if cur.pos != body.len() {
            return Err("trailing bytes after model body".into());
        }
        Ok(ClassifierModel {
            config,
            vocab,
            word_rows,
            bucket_rows,
            output,
        })
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| "unexpected end of model body".to_string())?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, String> {
        let bytes = self.take(n.checked_mul(4).ok_or("size overflow")?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect())
    }
}

pub fn save_model(model: &ClassifierModel, path: impl AsRef<Path>) -> Result<(), ClassifierError> {
    let path = path.as_ref();
    let io_err = |source| ClassifierError::Io {
        path: path.display().to_string(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(&model.to_bytes()).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ClassifierModel, ClassifierError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| ClassifierError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ClassifierModel::from_bytes(&bytes).map_err(|reason| ClassifierError::Format {
        path: path.display().to_string(),
        reason,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::train;
    use crate::corpus::{Document, Source};

    fn model() -> ClassifierModel {
        let docs = |texts: &[&str]| -> Vec<Document> {
            texts.iter().map(|t| Document::new(Source::Web, *t).unwrap()).collect()
        };
        let config = ClassifierConfig {
            buckets: 5_000,
            seed: 3,
            ..Default::default()
        };
        train(
            docs(&["integral of a function", "derivative of x squared"]),
            docs(&["tomato soup recipe", "news about football"]),
            &config,
        )
        .unwrap()
    }

    #[test]
    fn bytes_round_trip() {
        let m = model();
        let back = ClassifierModel::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn corrupted_and_truncated_files_fail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        save_model(&model(), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();

        let flipped = dir.path().join("flipped.bin");
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        std::fs::write(&flipped, &bytes).unwrap();
        assert!(matches!(load_model(&flipped), Err(ClassifierError::Format { .. })));

        bytes[mid] ^= 0x40;
        let truncated = dir.path().join("truncated.bin");
        std::fs::write(&truncated, &bytes[..bytes.len() - 10]).unwrap();
        assert!(matches!(load_model(&truncated), Err(ClassifierError::Format { .. })));

        let mut wrong_version = bytes.clone();
        wrong_version[4] = 9;
        let body_len = wrong_version.len() - 32;
        let digest = Sha256::digest(&wrong_version[..body_len]);
        wrong_version[body_len..].copy_from_slice(&digest);
        let versioned = dir.path().join("v9.bin");
        std::fs::write(&versioned, &wrong_version).unwrap();
        let err = load_model(&versioned).unwrap_err().to_string();
        assert!(err.contains("version"), "{err}");
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let r = save_model(&model(), "/nonexistent-dir/model.bin");
        assert!(matches!(r, Err(ClassifierError::Io { .. })));
    }
}
