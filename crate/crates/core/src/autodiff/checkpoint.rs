//! Flat parameter container: a little-endian binary blob of named arrays with
//! shape headers, plus a plain-text manifest listing names and shapes.
//!
//! Binary layout: `b"NCGNCKPT"`, `u32` array count, then per array a `u32`
//! name length, UTF-8 name, `u32` rows, `u32` cols and `rows * cols` f64 values.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"NCGNCKPT";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    /// Free-form `key value` metadata stored in the manifest.
    pub meta: Vec<(String, String)>,
    pub arrays: Vec<(String, Array2<f64>)>,
}

impl Checkpoint {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn array(&self, name: &str) -> Option<&Array2<f64>> {
        self.arrays.iter().find(|(n, _)| n == name).map(|(_, a)| a)
    }
}

pub fn manifest_path(bin: &Path) -> PathBuf {
    bin.with_extension("manifest")
}

pub fn save(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    put(MAGIC)?;
    put(&(ckpt.arrays.len() as u32).to_le_bytes())?;
    for (name, a) in &ckpt.arrays {
        put(&(name.len() as u32).to_le_bytes())?;
        put(name.as_bytes())?;
        put(&(a.nrows() as u32).to_le_bytes())?;
        put(&(a.ncols() as u32).to_le_bytes())?;
        for v in a.iter() {
            put(&v.to_le_bytes())?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;

    let mut manifest = String::new();
    for (k, v) in &ckpt.meta {
        manifest.push_str(&format!("# {k} {v}\n"));
    }
    for (name, a) in &ckpt.arrays {
        manifest.push_str(&format!("{name} {} {}\n", a.nrows(), a.ncols()));
    }
    let mpath = manifest_path(path);
    fs::write(&mpath, manifest).map_err(|e| Error::io(&mpath, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::Parse { path: path.to_path_buf(), line: 0, msg: msg.to_string() };
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(8).ok_or_else(|| bad("truncated header"))? != MAGIC {
        return Err(bad("bad magic"));
    }
    let count = cur.u32().ok_or_else(|| bad("truncated count"))? as usize;
    let mut arrays = Vec::with_capacity(count);
    for _ in 0..count {
        let len = cur.u32().ok_or_else(|| bad("truncated name length"))? as usize;
        let name = std::str::from_utf8(cur.take(len).ok_or_else(|| bad("truncated name"))?)
            .map_err(|_| bad("name is not UTF-8"))?
            .to_string();
        let rows = cur.u32().ok_or_else(|| bad("truncated shape"))? as usize;
        let cols = cur.u32().ok_or_else(|| bad("truncated shape"))? as usize;
        let mut values = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            let b = cur.take(8).ok_or_else(|| bad("truncated values"))?;
            values.push(f64::from_le_bytes(b.try_into().expect("8 bytes")));
        }
        let a = Array2::from_shape_vec((rows, cols), values).map_err(|e| bad(&e.to_string()))?;
        arrays.push((name, a));
    }

    let mpath = manifest_path(path);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let mut meta = Vec::new();
    let mut listed = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let perr = |msg: String| Error::Parse { path: mpath.clone(), line: lineno + 1, msg };
        if let Some(rest) = line.strip_prefix("# ") {
            let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
            meta.push((k.to_string(), v.to_string()));
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.is_empty() {
            continue;
        }
        if parts.len() != 3 {
            return Err(perr(format!("expected `name rows cols`, got {line:?}")));
        }
        let r: usize = parts[1].parse().map_err(|_| perr("bad rows".into()))?;
        let c: usize = parts[2].parse().map_err(|_| perr("bad cols".into()))?;
        listed.push((parts[0].to_string(), r, c));
    }
    if listed.len() != arrays.len() || listed.iter().zip(&arrays).any(|((n, r, c), (an, a))| n != an || (*r, *c) != a.dim()) {
        return Err(Error::Parse { path: mpath, line: 0, msg: "manifest disagrees with binary".into() });
    }
    Ok(Checkpoint { meta, arrays })
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let out = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let ckpt = Checkpoint {
            meta: vec![("hdim".into(), "8".into())],
            arrays: vec![("w".into(), array![[1.0, -0.1], [f64::MIN_POSITIVE, 3e300]]), ("b".into(), array![[0.5]])],
        };
        save(&path, &ckpt).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(back, ckpt);
        let manifest = fs::read_to_string(manifest_path(&path)).unwrap();
        assert!(manifest.contains("w 2 2"));
        assert!(manifest.contains("# hdim 8"));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let ckpt = Checkpoint { meta: vec![], arrays: vec![("w".into(), array![[1.0, 2.0]])] };
        save(&path, &ckpt).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(load(&path).is_err());
    }
}
