//! Parameter archive: magic `RCKP`, u32 format version, u64 manifest length,
//! JSON manifest, tensor payload as little-endian f32 in manifest order, and a
//! trailing CRC32 over everything before it.

use std::collections::BTreeMap;
use std::path::Path;

use ragbind_autograd::Mat;
use serde::{Deserialize, Serialize};

use super::ParamStore;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"RCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Section {
    pub config: serde_json::Value,
    pub params: ParamStore,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub sections: BTreeMap<String, Section>,
}

#[derive(Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct SectionMeta {
    name: String,
    config: serde_json::Value,
    tensors: Vec<TensorMeta>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    sections: Vec<SectionMeta>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, config: serde_json::Value, params: ParamStore) {
        self.sections.insert(name.to_string(), Section { config, params });
    }

    pub fn section(&self, name: &str) -> Result<&Section> {
        self.sections
            .get(name)
            .ok_or_else(|| Error::MissingTensor(format!("section {name}")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let manifest = Manifest {
            format_version: CHECKPOINT_VERSION,
            sections: self
                .sections
                .iter()
                .map(|(name, s)| SectionMeta {
                    name: name.clone(),
                    config: s.config.clone(),
                    tensors: s
                        .params
                        .iter()
                        .map(|(n, m)| TensorMeta {
                            name: n.to_string(),
                            rows: m.rows(),
                            cols: m.cols(),
                        })
                        .collect(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&manifest)?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for s in self.sections.values() {
            for (_, m) in s.params.iter() {
                for &x in m.data() {
                    out.extend_from_slice(&(x as f32).to_le_bytes());
                }
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        const KIND: &str = "checkpoint";
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::BadMagic(KIND));
        }
        if bytes.len() < 20 {
            return Err(Error::Truncated(KIND));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch {
                kind: KIND,
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let body = &bytes[..bytes.len() - 4];
        let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
        let json_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let Some(json) = body.get(16..16usize.saturating_add(json_len)) else {
            return Err(Error::Truncated(KIND));
        };
        let manifest: Manifest = match serde_json::from_slice(json) {
            Ok(m) => m,
            Err(e) => {
                let computed = crc32fast::hash(body);
                if computed != stored {
                    return Err(Error::Checksum { stored, computed });
                }
                return Err(e.into());
            }
        };
        let expected_len: usize = manifest
            .sections
            .iter()
            .flat_map(|s| &s.tensors)
            .map(|t| t.rows * t.cols * 4)
            .sum::<usize>()
            + 16
            + json_len;
        if body.len() < expected_len {
            return Err(Error::Truncated(KIND));
        }
        let computed = crc32fast::hash(body);
        if computed != stored {
            return Err(Error::Checksum { stored, computed });
        }
        let mut pos = 16 + json_len;
        let mut sections = BTreeMap::new();
        for s in manifest.sections {
            let mut params = ParamStore::new();
            for t in s.tensors {
                let n = t.rows * t.cols;
                let data = body[pos..pos + 4 * n]
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                    .collect();
                pos += 4 * n;
                params.add(t.name, Mat::from_vec(t.rows, t.cols, data));
            }
            sections.insert(
                s.name,
                Section {
                    config: s.config,
                    params,
                },
            );
        }
        Ok(Self { sections })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
