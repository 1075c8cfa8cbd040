//! Binary model container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "HMERNET\0"
//! version  u32      1
//! n_meta   u32      then n_meta × (key: str, value: str)
//! n_tensor u32      then n_tensor × tensor
//! str      u32 length + UTF-8 bytes
//! tensor   name: str, trainable: u8, ndim: u32, dims: ndim × u32,
//!          data: product(dims) × f64
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::graph::ParamSet;
use super::tensor::Tensor;
use super::NnError;

pub const MAGIC: &[u8; 8] = b"HMERNET\0";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelFile {
    pub metadata: BTreeMap<String, String>,
    pub params: ParamSet,
}

impl ModelFile {
    pub fn new(params: ParamSet) -> Self {
        ModelFile {
            metadata: BTreeMap::new(),
            params,
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<String>) -> Self {
        self.metadata.insert(key.to_string(), value.into());
        self
    }

    pub fn meta(&self, key: &str) -> Result<&str, NnError> {
        self.metadata
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| NnError::Format(format!("missing metadata '{key}'")))
    }

    /// A network file: `kind` tag plus JSON-encoded architecture config.
    pub fn pack<C: Serialize>(kind: &str, config: &C, params: ParamSet) -> Self {
        let json = serde_json::to_string(config).expect("configs serialize");
        ModelFile::new(params)
            .with_meta("kind", kind)
            .with_meta("config", json)
    }

    /// Inverse of [`ModelFile::pack`]; checks the kind tag.
    pub fn unpack<C: DeserializeOwned>(&self, kind: &str) -> Result<C, NnError> {
        let found = self.meta("kind")?;
        if found != kind {
            return Err(NnError::Format(format!(
                "expected a {kind} model, found {found}"
            )));
        }
        serde_json::from_str(self.meta("config")?)
            .map_err(|e| NnError::Format(format!("{kind} config: {e}")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        put_u32(&mut out, self.metadata.len());
        for (k, v) in &self.metadata {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        put_u32(&mut out, self.params.len());
        for (name, t, trainable) in self.params.iter() {
            put_str(&mut out, name);
            out.push(trainable as u8);
            put_u32(&mut out, t.shape().len());
            for &d in t.shape() {
                put_u32(&mut out, d);
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnError> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(NnError::Format("bad magic bytes".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(NnError::Format(format!("unsupported version {version}")));
        }
        let mut metadata = BTreeMap::new();
        for _ in 0..r.u32()? {
            let k = r.string()?;
            let v = r.string()?;
            metadata.insert(k, v);
        }
        let mut params = ParamSet::new();
        for _ in 0..r.u32()? {
            let name = r.string()?;
            let trainable = match r.take(1)?[0] {
                0 => false,
                1 => true,
                b => {
                    return Err(NnError::Format(format!(
                        "bad trainable flag {b} for '{name}'"
                    )))
                }
            };
            let ndim = r.u32()? as usize;
            let mut shape = Vec::with_capacity(ndim.min(8));
            for _ in 0..ndim {
                shape.push(r.u32()? as usize);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .filter(|&n| n.checked_mul(8).is_some_and(|b| b <= r.remaining()))
                .ok_or_else(|| NnError::Format(format!("truncated tensor '{name}'")))?;
            let data = r
                .take(n * 8)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            params.insert(name, Tensor::new(shape, data), trainable);
        }
        if r.remaining() != 0 {
            return Err(NnError::Format(format!("{} trailing bytes", r.remaining())));
        }
        Ok(ModelFile { metadata, params })
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("fits in u32").to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        if n > self.remaining() {
            return Err(NnError::Format(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, NnError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| NnError::Format("invalid UTF-8 string".into()))
    }
}

pub fn save_model(path: &Path, model: &ModelFile) -> Result<(), NnError> {
    std::fs::write(path, model.to_bytes())?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelFile, NnError> {
    ModelFile::from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ModelFile {
        let mut p = ParamSet::new();
        p.insert(
            "a.w",
            Tensor::matrix(2, 2, vec![1.5, -0.0, f64::MIN_POSITIVE, 1e300]),
            true,
        );
        p.insert("a.rm", Tensor::new(vec![3], vec![0.1, 0.2, 0.3]), false);
        ModelFile::new(p)
            .with_meta("kind", "test")
            .with_meta("config", "{}")
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = sample();
        let back = ModelFile::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back.metadata, m.metadata);
        for ((n1, t1, f1), (n2, t2, f2)) in m.params.iter().zip(back.params.iter()) {
            assert_eq!((n1, f1, t1.shape()), (n2, f2, t2.shape()));
            let b1: Vec<u64> = t1.data().iter().map(|v| v.to_bits()).collect();
            let b2: Vec<u64> = t2.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(b1, b2);
        }
    }

    #[test]
    fn corrupted_magic_and_truncation() {
        let mut bytes = sample().to_bytes();
        let full = bytes.clone();
        bytes[0] = b'X';
        assert!(ModelFile::from_bytes(&bytes)
            .unwrap_err()
            .to_string()
            .contains("magic"));
        for cut in [4, 12, 20, full.len() - 1] {
            assert!(ModelFile::from_bytes(&full[..cut]).is_err());
        }
        let mut v2 = full.clone();
        v2[8] = 2;
        assert!(ModelFile::from_bytes(&v2)
            .unwrap_err()
            .to_string()
            .contains("version"));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        save_model(&path, &sample()).unwrap();
        assert_eq!(load_model(&path).unwrap().metadata, sample().metadata);
    }
}
