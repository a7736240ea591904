//! `RADB` layout: magic, u32 version, u32 dim, u64 count, then per entry
//! u16 id length, UTF-8 id, u8 domain tag, `dim` f32 key, `dim` f32 value,
//! all little-endian, followed by a CRC32 of everything before it.

use std::path::Path;

use super::{Database, DatabaseEntry};
use crate::molgraph::DomainTag;
use crate::{Error, Result};

pub const RADB_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"RADB";
const KIND: &str = "retrieval database";

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or(Error::Truncated(KIND))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        Ok(self
            .take(n.checked_mul(4).ok_or(Error::Truncated(KIND))?)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

impl Database {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(20 + self.len() * (8 * self.dim + 32));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&RADB_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for e in self.entries() {
            let id = e.id.as_bytes();
            let len = u16::try_from(id.len()).map_err(|_| Error::InvalidArgument(format!("id too long: {}", e.id)))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(id);
            out.push(e.domain_tag.code());
            for x in e.key.iter().chain(&e.value) {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::BadMagic(KIND));
        }
        let mut r = Reader { buf: bytes, pos: 4 };
        let version = r.u32()?;
        if version != RADB_VERSION {
            return Err(Error::VersionMismatch {
                kind: KIND,
                found: version,
                expected: RADB_VERSION,
            });
        }
        let dim = r.u32()? as usize;
        let count = r.u64()?;
        let mut entries = Vec::new();
        for _ in 0..count {
            let n = r.u16()? as usize;
            let id = String::from_utf8_lossy(r.take(n)?).into_owned();
            let tag = r.u8()?;
            let key = r.f32s(dim)?;
            let value = r.f32s(dim)?;
            let domain_tag = DomainTag::from_code(tag).ok_or_else(|| Error::InvalidArgument(format!("unknown domain tag code {tag}")))?;
            entries.push(DatabaseEntry {
                id,
                key,
                value,
                domain_tag,
            });
        }
        let body_end = r.pos;
        let stored = r.u32()?;
        let computed = crc32fast::hash(&bytes[..body_end]);
        if stored != computed || r.pos != bytes.len() {
            return Err(Error::Checksum { stored, computed });
        }
        Database::from_entries(dim, entries)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
