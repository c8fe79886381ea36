//! Named-array container shared by checkpoints and feature stores.
//!
//! ```text
//! MILASC01
//! config <n bytes>
//! <n bytes of config text>
//! arrays <count>
//! <name>\t<d0,d1,...>\t<byte offset>      one line per array
//! data <n bytes>
//! <little-endian f64 blob>
//! ```

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use milscene_core::Tensor;

use crate::error::{format_err, Error, Result};

pub const MAGIC: &str = "MILASC01";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ArrayFile {
    /// Free-form text stored alongside the arrays (a resolved config).
    pub config: String,
    pub arrays: Vec<(String, Tensor)>,
}

impl ArrayFile {
    pub fn new(config: impl Into<String>) -> Self {
        Self { config: config.into(), arrays: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.arrays.push((name.into(), tensor));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.arrays.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        writeln!(out, "{MAGIC}").expect("write to vec");
        writeln!(out, "config {}", self.config.len()).expect("write to vec");
        out.extend_from_slice(self.config.as_bytes());
        writeln!(out, "arrays {}", self.arrays.len()).expect("write to vec");
        let mut offset = 0usize;
        for (name, t) in &self.arrays {
            if name.is_empty() || name.contains(['\t', '\n', '\r']) {
                return Err(format_err!("array name {name:?} must be non-empty without tabs or newlines"));
            }
            let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
            writeln!(out, "{name}\t{}\t{offset}", dims.join(",")).expect("write to vec");
            offset += t.len() * 8;
        }
        writeln!(out, "data {offset}").expect("write to vec");
        for (_, t) in &self.arrays {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = BufReader::new(bytes);
        let magic = read_line(&mut r, "magic")?;
        if magic != MAGIC {
            return Err(format_err!("bad magic {magic:?}, expected {MAGIC}"));
        }
        let config_len = header_count(&read_line(&mut r, "config header")?, "config")?;
        let mut config = vec![0; config_len];
        r.read_exact(&mut config).map_err(|_| format_err!("truncated config text"))?;
        let config = String::from_utf8(config).map_err(|_| format_err!("config text is not UTF-8"))?;
        let count = header_count(&read_line(&mut r, "arrays header")?, "arrays")?;
        let mut manifest = Vec::with_capacity(count.min(1 << 20));
        for i in 0..count {
            let line = read_line(&mut r, "manifest entry")?;
            let fields: Vec<&str> = line.split('\t').collect();
            let [name, dims, offset] = fields[..] else {
                return Err(format_err!("manifest entry {i} has {} fields, expected 3", fields.len()));
            };
            let shape = dims
                .split(',')
                .map(|d| d.parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| format_err!("manifest entry {name:?}: bad shape {dims:?}"))?;
            let offset: usize = offset.parse().map_err(|_| format_err!("manifest entry {name:?}: bad offset"))?;
            manifest.push((name.to_string(), shape, offset));
        }
        let data_len = header_count(&read_line(&mut r, "data header")?, "data")?;
        let mut blob = Vec::new();
        r.read_to_end(&mut blob).map_err(|e| format_err!("reading data: {e}"))?;
        if blob.len() != data_len {
            return Err(format_err!("data section has {} bytes, header says {data_len}", blob.len()));
        }
        let mut arrays = Vec::with_capacity(manifest.len());
        for (name, shape, offset) in manifest {
            let bytes = shape.iter().product::<usize>() * 8;
            let end = offset.checked_add(bytes).filter(|&e| e <= blob.len());
            let Some(end) = end else {
                return Err(format_err!("array {name:?} runs past the end of the data section"));
            };
            let data = blob[offset..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            let t = Tensor::new(shape, data).map_err(|e| format_err!("array {name:?}: {e}"))?;
            arrays.push((name, t));
        }
        Ok(Self { config, arrays })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes()?;
        // write-then-rename so an interrupted run never leaves a torn file
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| format_err!("{}: {e}", path.display()))
    }
}

fn read_line(r: &mut impl BufRead, what: &str) -> Result<String> {
    let mut line = String::new();
    let n = r.read_line(&mut line).map_err(|_| format_err!("{what} is not UTF-8"))?;
    if n == 0 || !line.ends_with('\n') {
        return Err(format_err!("unexpected end of file reading {what}"));
    }
    line.pop();
    Ok(line)
}

fn header_count(line: &str, key: &str) -> Result<usize> {
    line.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix(' '))
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| format_err!("expected `{key} <count>`, got {line:?}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut f = ArrayFile::new("head = md\n");
        f.push("a.weight", Tensor::new(vec![2, 2], vec![0.1, -0.0, f64::MIN_POSITIVE, 1e300]).unwrap());
        f.push("b", Tensor::scalar(3.5));
        let back = ArrayFile::from_bytes(&f.to_bytes().unwrap()).unwrap();
        assert_eq!(back.config, f.config);
        for ((n1, t1), (n2, t2)) in f.arrays.iter().zip(&back.arrays) {
            assert_eq!(n1, n2);
            assert_eq!(t1.shape(), t2.shape());
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(t1), bits(t2));
        }
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let bytes = ArrayFile::new("").to_bytes().unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(ArrayFile::from_bytes(&bad).is_err());

        let mut f = ArrayFile::new("");
        f.push("x", Tensor::zeros(&[4]));
        let bytes = f.to_bytes().unwrap();
        assert!(ArrayFile::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    }

    #[test]
    fn names_with_tabs_are_rejected() {
        let mut f = ArrayFile::new("");
        f.push("a\tb", Tensor::zeros(&[1]));
        assert!(f.to_bytes().is_err());
    }
}
