//! On-disk container shared by datasets, embeddings, ground-truth maps and
//! checkpoints.
//!
//! Each artifact is a text header of `key=value` lines plus raw little-endian
//! blobs: `f32` values in row-major order, `u32` labels.

use std::fs;
use std::path::Path;

use zsgan_numeric::Matrix;

use crate::error::{Error, Result};

pub const FORMAT_VERSION: &str = "1";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Meta {
    entries: Vec<(String, String)>,
}

impl Meta {
    pub fn new(kind: &str) -> Self {
        let mut m = Self::default();
        m.entries.push(("version".into(), FORMAT_VERSION.into()));
        m.entries.push(("kind".into(), kind.into()));
        m
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) -> Result<()> {
        let key = key.into();
        let value = value.to_string();
        if key.contains(['=', '\n']) || value.contains('\n') {
            return Err(Error::Data(format!(
                "header entry `{key}` cannot hold newlines or `=` in the key"
            )));
        }
        self.entries.push((key, value));
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn require(&self, key: &str, path: &Path) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::format(path, 0, format!("missing header key `{key}`")))
    }

    pub fn require_parse<V: std::str::FromStr>(&self, key: &str, path: &Path) -> Result<V> {
        let raw = self.require(key, path)?;
        raw.parse()
            .map_err(|_| Error::format(path, 0, format!("header key `{key}` has invalid value `{raw}`")))
    }

    pub fn expect_kind(&self, kind: &str, path: &Path) -> Result<()> {
        let version = self.require("version", path)?;
        if version != FORMAT_VERSION {
            return Err(Error::format(path, 0, format!("unsupported version `{version}`")));
        }
        let found = self.require("kind", path)?;
        if found != kind {
            return Err(Error::format(path, 0, format!("expected kind `{kind}`, found `{found}`")));
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = String::new();
        for (k, v) in &self.entries {
            text.push_str(k);
            text.push('=');
            text.push_str(v);
            text.push('\n');
        }
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        let mut offset = 0u64;
        for line in text.split_inclusive('\n') {
            let body = line.trim_end_matches(['\n', '\r']);
            if !body.is_empty() {
                let (k, v) = body
                    .split_once('=')
                    .ok_or_else(|| Error::format(path, offset, format!("expected key=value, got `{body}`")))?;
                entries.push((k.to_string(), v.to_string()));
            }
            offset += line.len() as u64;
        }
        Ok(Self { entries })
    }
}

pub fn write_f32(path: &Path, data: &[f32]) -> Result<()> {
    let mut bytes = Vec::with_capacity(data.len() * 4);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_u32(path: &Path, data: &[u32]) -> Result<()> {
    let mut bytes = Vec::with_capacity(data.len() * 4);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_exact_len(path: &Path, count: usize) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = count * 4;
    if bytes.len() != expected {
        let offset = bytes.len().min(expected) as u64;
        return Err(Error::format(
            path,
            offset,
            format!("expected {expected} bytes ({count} values), found {} bytes", bytes.len()),
        ));
    }
    Ok(bytes)
}

/// Reads exactly `count` finite little-endian `f32` values.
pub fn read_f32(path: &Path, count: usize) -> Result<Vec<f32>> {
    let bytes = read_exact_len(path, count)?;
    let mut out = Vec::with_capacity(count);
    for (i, chunk) in bytes.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
        if !v.is_finite() {
            return Err(Error::format(path, (i * 4) as u64, format!("non-finite value {v}")));
        }
        out.push(v);
    }
    Ok(out)
}

pub fn read_u32(path: &Path, count: usize) -> Result<Vec<u32>> {
    let bytes = read_exact_len(path, count)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4-byte chunk")))
        .collect())
}

/// Writes named matrices as `<stem>.meta` + `<stem>.f32`.
///
/// `meta` must not already contain `tensor.*` keys.
pub fn write_tensors(dir: &Path, stem: &str, mut meta: Meta, tensors: &[(String, &Matrix<f32>)]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    meta.push("tensors", tensors.len())?;
    let mut blob = Vec::new();
    for (i, (name, m)) in tensors.iter().enumerate() {
        if name.contains(char::is_whitespace) {
            return Err(Error::Data(format!("tensor name `{name}` contains whitespace")));
        }
        meta.push(format!("tensor.{i}"), format!("{name} {} {}", m.rows(), m.cols()))?;
        blob.extend_from_slice(m.data());
    }
    meta.write(&dir.join(format!("{stem}.meta")))?;
    write_f32(&dir.join(format!("{stem}.f32")), &blob)
}

pub fn read_tensors(dir: &Path, stem: &str) -> Result<(Meta, Vec<(String, Matrix<f32>)>)> {
    let meta_path = dir.join(format!("{stem}.meta"));
    let meta = Meta::read(&meta_path)?;
    let count: usize = meta.require_parse("tensors", &meta_path)?;
    let mut shapes = Vec::with_capacity(count);
    for i in 0..count {
        let raw = meta.require(&format!("tensor.{i}"), &meta_path)?;
        let parts: Vec<&str> = raw.split_whitespace().collect();
        let parsed = match parts.as_slice() {
            [name, r, c] => r
                .parse::<usize>()
                .ok()
                .zip(c.parse::<usize>().ok())
                .map(|(r, c)| (name.to_string(), r, c)),
            _ => None,
        };
        let shape = parsed
            .ok_or_else(|| Error::format(&meta_path, 0, format!("malformed tensor entry `{raw}`")))?;
        shapes.push(shape);
    }
    let total: usize = shapes.iter().map(|(_, r, c)| r * c).sum();
    let blob = read_f32(&dir.join(format!("{stem}.f32")), total)?;
    let mut out = Vec::with_capacity(count);
    let mut at = 0;
    for (name, r, c) in shapes {
        let m = Matrix::from_vec(r, c, blob[at..at + r * c].to_vec())?;
        at += r * c;
        out.push((name, m));
    }
    Ok((meta, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn meta_round_trip_keeps_order_and_equals_signs() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.meta");
        let mut m = Meta::new("dataset");
        m.push("name", "a=b c").unwrap();
        m.write(&p).unwrap();
        let back = Meta::read(&p).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.get("name"), Some("a=b c"));
    }

    #[test]
    fn malformed_line_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.meta");
        fs::write(&p, "version=1\nbroken\n").unwrap();
        match Meta::read(&p) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 10),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_finite_value_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.f32");
        write_f32(&p, &[1.0, 2.0, f32::NAN]).unwrap();
        match read_f32(&p, 3) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 8),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn tensors_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let a = Matrix::from_rows(&[[1.0f32, 2.0], [3.0, 4.0]]).unwrap();
        let b = Matrix::from_rows(&[[5.0f32, 6.0, 7.0]]).unwrap();
        write_tensors(dir.path(), "t", Meta::new("tensors"), &[("a".into(), &a), ("b".into(), &b)]).unwrap();
        let (_, back) = read_tensors(dir.path(), "t").unwrap();
        assert_eq!(back, vec![("a".to_string(), a), ("b".to_string(), b)]);
    }
}
