//! `PAEB` binary container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! 0   magic        b"PAEB"
//! 4   version      u32
//! 8   count        u32
//! 12  table        count × { name_len u16, name [u8; name_len] (UTF-8),
//!                            offset u64, length u64, crc32 u32 }
//! ..  payloads     each: ndim u32, dims u64 × ndim, data f64 × Π dims
//! ```
//!
//! Offsets are absolute byte positions; payloads are written back to back in table order.
//! Readers ignore sections they do not know.

use std::io::Write;
use std::path::Path;

use super::StorageError;

pub const MAGIC: &[u8; 4] = b"PAEB";
pub const FORMAT_VERSION: u32 = 1;

/// One named array of `f64` values with its shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Section {
    pub fn scalar(&self) -> Result<f64, StorageError> {
        self.data.first().copied().ok_or_else(|| StorageError::Malformed(format!(
            "section '{}' is empty",
            self.name
        )))
    }

    fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 8 * self.shape.len() + 8 * self.data.len());
        out.extend_from_slice(&(self.shape.len() as u32).to_le_bytes());
        for &d in &self.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    fn decode(name: String, bytes: &[u8]) -> Result<Self, StorageError> {
        let mut cur = Cursor::new(bytes, &name);
        let ndim = cur.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(cur.u64()? as usize);
        }
        let count = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| StorageError::Malformed(format!("section '{name}' shape overflows")))?;
        let remaining = cur.remaining();
        if remaining != count * 8 {
            return Err(StorageError::Malformed(format!(
                "section '{name}' declares {count} values but carries {remaining} bytes"
            )));
        }
        let data = (0..count).map(|_| cur.f64()).collect::<Result<Vec<_>, _>>()?;
        Ok(Self { name, shape, data })
    }
}

/// Ordered collection of sections.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Container {
    sections: Vec<Section>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    context: &'a str,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8], context: &'a str) -> Self {
        Self { bytes, pos: 0, context }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], StorageError> {
        if self.pos + n > self.bytes.len() {
            return Err(StorageError::Truncated {
                context: self.context.to_string(),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn u16(&mut self) -> Result<u16, StorageError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, StorageError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, StorageError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, StorageError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn sections(&self) -> &[Section] {
        &self.sections
    }

    /// Appends or replaces a section.
    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) {
        let name = name.into();
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        let section = Section { name, shape, data };
        match self.sections.iter_mut().find(|s| s.name == section.name) {
            Some(slot) => *slot = section,
            None => self.sections.push(section),
        }
    }

    pub fn insert_vec(&mut self, name: impl Into<String>, data: Vec<f64>) {
        let len = data.len();
        self.insert(name, vec![len], data);
    }

    pub fn insert_scalar(&mut self, name: impl Into<String>, value: f64) {
        self.insert(name, vec![1], vec![value]);
    }

    pub fn get(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&Section, StorageError> {
        self.get(name).ok_or_else(|| StorageError::MissingSection(name.to_string()))
    }

    pub fn scalar(&self, name: &str) -> Result<f64, StorageError> {
        self.require(name)?.scalar()
    }

    /// Non-negative integer stored as a scalar.
    pub fn count(&self, name: &str) -> Result<usize, StorageError> {
        let v = self.scalar(name)?;
        if v < 0.0 || v.fract() != 0.0 || !v.is_finite() {
            return Err(StorageError::Malformed(format!("section '{name}' is not a count: {v}")));
        }
        Ok(v as usize)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let payloads: Vec<Vec<u8>> = self.sections.iter().map(Section::encode).collect();
        let table_len: usize = self.sections.iter().map(|s| 2 + s.name.len() + 8 + 8 + 4).sum();
        let mut offset = (12 + table_len) as u64;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.sections.len() as u32).to_le_bytes());
        for (section, payload) in self.sections.iter().zip(&payloads) {
            out.extend_from_slice(&(section.name.len() as u16).to_le_bytes());
            out.extend_from_slice(section.name.as_bytes());
            out.extend_from_slice(&offset.to_le_bytes());
            out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
            out.extend_from_slice(&crc32fast::hash(payload).to_le_bytes());
            offset += payload.len() as u64;
        }
        for payload in payloads {
            out.extend_from_slice(&payload);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, StorageError> {
        let mut cur = Cursor::new(bytes, "header");
        let magic = cur.take(4)?;
        if magic != MAGIC {
            return Err(StorageError::BadMagic {
                found: magic.try_into().unwrap(),
            });
        }
        let version = cur.u32()?;
        if version != FORMAT_VERSION {
            return Err(StorageError::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let count = cur.u32()? as usize;
        let mut entries = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name_len = cur.u16()? as usize;
            let name = String::from_utf8(cur.take(name_len)?.to_vec())
                .map_err(|_| StorageError::Malformed("section name is not UTF-8".into()))?;
            let offset = cur.u64()? as usize;
            let length = cur.u64()? as usize;
            let crc = cur.u32()?;
            entries.push((name, offset, length, crc));
        }
        let header_end = cur.pos;
        let mut spans: Vec<(usize, usize)> = Vec::with_capacity(entries.len());
        let mut sections = Vec::with_capacity(entries.len());
        for (name, offset, length, crc) in entries {
            let end = offset.checked_add(length).ok_or_else(|| StorageError::Malformed(format!(
                "section '{name}' span overflows"
            )))?;
            if offset < header_end {
                return Err(StorageError::Malformed(format!("section '{name}' overlaps the header")));
            }
            if end > bytes.len() {
                return Err(StorageError::Truncated { context: name });
            }
            if spans.iter().any(|&(a, b)| offset < b && a < end) {
                return Err(StorageError::Malformed(format!("section '{name}' overlaps another section")));
            }
            spans.push((offset, end));
            let payload = &bytes[offset..end];
            if crc32fast::hash(payload) != crc {
                return Err(StorageError::Checksum { section: name });
            }
            sections.push(Section::decode(name, payload)?);
        }
        Ok(Self { sections })
    }

    /// Writes via a temporary file in the target directory and an atomic rename.
    pub fn write_atomic(&self, path: &Path) -> Result<(), StorageError> {
        write_bytes_atomic(path, &self.to_bytes())
    }

    pub fn read(path: &Path) -> Result<Self, StorageError> {
        let bytes = std::fs::read(path).map_err(|source| StorageError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

pub(crate) fn write_bytes_atomic(path: &Path, bytes: &[u8]) -> Result<(), StorageError> {
    let io = |source| StorageError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}
