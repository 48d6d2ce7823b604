//! Versioned binary container for named `f64` tensors.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "FSAGETNS"
//! version      u32      CONTAINER_VERSION
//! kind         u32 len + UTF-8
//! metadata     u32 len + UTF-8 JSON object
//! tensor count u32
//! shape table  per tensor: u32 len + UTF-8 name, u64 rows, u64 cols
//! payload      per tensor, in table order: rows*cols f64 (row-major)
//! ```

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde_json::Value;

use super::matrix::DenseMatrix;
use crate::error::{Error, Result};

pub const CONTAINER_MAGIC: &[u8; 8] = b"FSAGETNS";
pub const CONTAINER_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorContainer {
    pub kind: String,
    pub metadata: BTreeMap<String, Value>,
    pub tensors: Vec<(String, DenseMatrix)>,
}

impl TensorContainer {
    pub fn new(kind: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            metadata: BTreeMap::new(),
            tensors: Vec::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.metadata.insert(key.to_string(), value.into());
        self
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: DenseMatrix) {
        self.tensors.push((name.into(), tensor));
    }

    pub fn push_vec(&mut self, name: impl Into<String>, values: Vec<f64>) {
        let n = values.len();
        self.tensors.push((name.into(), DenseMatrix::from_vec(1, n, values).expect("row vector shape")));
    }

    pub fn tensor(&self, name: &str) -> Result<&DenseMatrix> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::InvalidInput(format!("container `{}` has no tensor `{name}`", self.kind)))
    }

    pub fn meta_str(&self, key: &str) -> Result<&str> {
        self.metadata
            .get(key)
            .and_then(Value::as_str)
            .ok_or_else(|| Error::InvalidInput(format!("container `{}` missing metadata `{key}`", self.kind)))
    }

    pub fn meta_u64(&self, key: &str) -> Result<u64> {
        self.metadata
            .get(key)
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::InvalidInput(format!("container `{}` missing metadata `{key}`", self.kind)))
    }

    pub fn meta_f64(&self, key: &str) -> Result<f64> {
        self.metadata
            .get(key)
            .and_then(Value::as_f64)
            .ok_or_else(|| Error::InvalidInput(format!("container `{}` missing metadata `{key}`", self.kind)))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CONTAINER_MAGIC);
        out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
        write_str(&mut out, &self.kind);
        let meta = serde_json::to_string(&self.metadata).expect("metadata serialises");
        write_str(&mut out, &meta);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            write_str(&mut out, name);
            out.extend_from_slice(&(t.rows() as u64).to_le_bytes());
            out.extend_from_slice(&(t.cols() as u64).to_le_bytes());
        }
        for (_, t) in &self.tensors {
            for v in t.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0, origin };
        if r.take(8)? != CONTAINER_MAGIC {
            return Err(Error::format(origin, "bad magic"));
        }
        let version = r.u32()?;
        if version != CONTAINER_VERSION {
            return Err(Error::format(
                origin,
                format!("unsupported container version {version} (expected {CONTAINER_VERSION})"),
            ));
        }
        let kind = r.string()?;
        let metadata: BTreeMap<String, Value> =
            serde_json::from_str(&r.string()?).map_err(|e| Error::format(origin, format!("metadata: {e}")))?;
        let count = r.u32()? as usize;
        let mut shapes = Vec::with_capacity(count);
        for _ in 0..count {
            let name = r.string()?;
            let rows = r.u64()? as usize;
            let cols = r.u64()? as usize;
            shapes.push((name, rows, cols));
        }
        let mut tensors = Vec::with_capacity(count);
        for (name, rows, cols) in shapes {
            let n = rows
                .checked_mul(cols)
                .ok_or_else(|| Error::format(origin, "tensor size overflow"))?;
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                data.push(f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes")));
            }
            let m = DenseMatrix::from_vec(rows, cols, data).map_err(|e| Error::format(origin, format!("{name}: {e}")))?;
            tensors.push((name, m));
        }
        if r.pos != bytes.len() {
            return Err(Error::format(origin, "trailing bytes"));
        }
        Ok(Self {
            kind,
            metadata,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Loads a container and checks that it holds the expected `kind`.
    pub fn load(path: &Path, expected_kind: &str) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let c = Self::from_bytes(&bytes, path)?;
        if c.kind != expected_kind {
            return Err(Error::format(
                path,
                format!("expected a `{expected_kind}` container, found `{}`", c.kind),
            ));
        }
        Ok(c)
    }
}

fn write_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

pub(crate) struct ByteReader<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
    pub origin: &'a Path,
}

impl<'a> ByteReader<'a> {
    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format(self.origin, "unexpected end of file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::format(self.origin, "invalid UTF-8"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TensorContainer {
        let mut c = TensorContainer::new("test").with_meta("seed", 7u64);
        c.push("w", DenseMatrix::from_rows(&[vec![1.0, -2.5], vec![0.125, 3.0]]).unwrap());
        c.push_vec("b", vec![0.5]);
        c
    }

    #[test]
    fn bytes_round_trip() {
        let c = sample();
        let back = TensorContainer::from_bytes(&c.to_bytes(), Path::new("mem")).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.meta_u64("seed").unwrap(), 7);
    }

    #[test]
    fn version_mismatch_fails_loudly() {
        let mut bytes = sample().to_bytes();
        bytes[8..12].copy_from_slice(&99u32.to_le_bytes());
        let err = TensorContainer::from_bytes(&bytes, Path::new("mem")).unwrap_err();
        assert!(err.to_string().contains("version 99"), "{err}");
    }

    #[test]
    fn truncated_input_is_rejected() {
        let bytes = sample().to_bytes();
        assert!(TensorContainer::from_bytes(&bytes[..bytes.len() - 3], Path::new("mem")).is_err());
    }

    proptest::proptest! {
        #[test]
        fn arbitrary_tensors_round_trip(
            shapes in proptest::collection::vec((1usize..5, 1usize..5), 0..4),
            seed in proptest::prelude::any::<u64>(),
            values in proptest::collection::vec(-1e300f64..1e300, 16),
        ) {
            let mut c = TensorContainer::new("prop").with_meta("seed", seed);
            for (i, &(r, k)) in shapes.iter().enumerate() {
                let data = (0..r * k).map(|j| values[(i + j) % values.len()]).collect();
                c.push(format!("t{i}"), DenseMatrix::from_vec(r, k, data).unwrap());
            }
            let back = TensorContainer::from_bytes(&c.to_bytes(), Path::new("mem")).unwrap();
            proptest::prop_assert_eq!(back.meta_u64("seed").unwrap(), seed);
            proptest::prop_assert_eq!(back, c);
        }
    }
}
