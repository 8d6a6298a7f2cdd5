//! Binary tensor container shared by model, feature and soft-target files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "HDNNTSR\0"
//! version    u32
//! meta_len   u32, then meta_len bytes of "key=value\n" lines (UTF-8)
//! count      u32
//! count x    name_len u16, name, dtype u8 (4 = f32, 8 = f64), rows u64, cols u64, data
//! checksum   u64, first 8 bytes of SHA-256 over everything before it
//! ```
//!
//! A tensor is stored as f32 when every value survives the round trip
//! through f32, otherwise as f64, so reading always gives back the exact
//! in-memory values.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::network::{Architecture, Network, NetworkConfig, Parameters, TensorId};
use crate::numerics::Matrix;

pub const MAGIC: &[u8; 8] = b"HDNNTSR\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub value: Matrix,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TensorFile {
    pub metadata: BTreeMap<String, String>,
    pub tensors: Vec<NamedTensor>,
}

impl TensorFile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.metadata.insert(key.to_string(), value.to_string());
        self
    }

    pub fn push(&mut self, name: impl Into<String>, value: Matrix) {
        self.tensors.push(NamedTensor {
            name: name.into(),
            value,
        });
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.tensors.iter().find(|t| t.name == name).map(|t| &t.value)
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.get(key).map(String::as_str)
    }

    fn meta_parse<T: std::str::FromStr>(&self, path: &Path, key: &str) -> Result<T> {
        self.meta(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::format(path, format!("missing or bad metadata key {key:?}")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let mut meta = String::new();
        for (k, v) in &self.metadata {
            if k.contains(['=', '\n']) || v.contains('\n') {
                return Err(Error::invalid(format!("metadata entry {k:?} cannot be encoded")));
            }
            meta.push_str(&format!("{k}={v}\n"));
        }
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            let name = t.name.as_bytes();
            let name_len = u16::try_from(name.len())
                .map_err(|_| Error::invalid(format!("tensor name too long: {}", t.name)))?;
            out.extend_from_slice(&name_len.to_le_bytes());
            out.extend_from_slice(name);
            let data = t.value.as_slice();
            let narrow = data.iter().all(|v| (*v as f32) as f64 == *v || v.is_nan());
            out.push(if narrow { 4 } else { 8 });
            out.extend_from_slice(&(t.value.rows() as u64).to_le_bytes());
            out.extend_from_slice(&(t.value.cols() as u64).to_le_bytes());
            if narrow {
                for v in data {
                    out.extend_from_slice(&(*v as f32).to_le_bytes());
                }
            } else {
                for v in data {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        let sum = checksum(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        Ok(out)
    }

    /// `path` is only used in error messages.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 + 8 {
            return Err(Error::Checksum { path: path.into() });
        }
        if &bytes[..8] != MAGIC {
            return Err(Error::format(path, "not a tensor file (bad magic)"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
        if checksum(body) != stored {
            return Err(Error::Checksum { path: path.into() });
        }
        let mut r = Reader {
            buf: body,
            pos: 8,
            path,
        };
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Version {
                found: version,
                expected: VERSION,
            });
        }
        let meta_len = r.u32()? as usize;
        let meta = std::str::from_utf8(r.take(meta_len)?)
            .map_err(|_| Error::format(path, "metadata is not UTF-8"))?;
        let mut metadata = BTreeMap::new();
        for line in meta.lines() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(path, format!("bad metadata line {line:?}")))?;
            metadata.insert(k.to_string(), v.to_string());
        }
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::format(path, "tensor name is not UTF-8"))?
                .to_string();
            let dtype = r.take(1)?[0];
            let rows = r.u64()? as usize;
            let cols = r.u64()? as usize;
            let n = rows
                .checked_mul(cols)
                .ok_or_else(|| Error::format(path, "tensor too large"))?;
            let data: Vec<f64> = match dtype {
                4 => r
                    .take(n.checked_mul(4).ok_or_else(|| Error::format(path, "tensor too large"))?)?
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                    .collect(),
                8 => r
                    .take(n.checked_mul(8).ok_or_else(|| Error::format(path, "tensor too large"))?)?
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect(),
                other => return Err(Error::format(path, format!("unknown dtype {other}"))),
            };
            tensors.push(NamedTensor {
                name,
                value: Matrix::from_vec(rows, cols, data)?,
            });
        }
        if r.pos != body.len() {
            return Err(Error::format(path, "trailing bytes after last tensor"));
        }
        Ok(Self { metadata, tensors })
    }

    /// Writes to a sibling temporary file and renames it into place.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes()?;
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

fn checksum(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.buf.len())
            .ok_or_else(|| Error::format(self.path, "unexpected end of data"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn model_to_file(net: &Network, extra: &[(&str, String)]) -> TensorFile {
    let c = net.config();
    let mut file = TensorFile::new()
        .with_meta("kind", "network")
        .with_meta("architecture", c.architecture)
        .with_meta("input_dim", c.input_dim)
        .with_meta("hidden_dim", c.hidden_dim)
        .with_meta("num_hidden_layers", c.num_hidden_layers)
        .with_meta("output_dim", c.output_dim);
    for (k, v) in extra {
        file.metadata.insert((*k).to_string(), v.clone());
    }
    for t in net.params().tensors() {
        let value = Matrix::from_vec(t.rows, t.cols, t.data.to_vec()).expect("consistent tensor");
        file.push(t.id.name(), value);
    }
    file
}

pub fn model_from_file(file: &TensorFile, path: &Path) -> Result<Network> {
    if file.meta("kind") != Some("network") {
        return Err(Error::format(path, "not a network file"));
    }
    let architecture: Architecture = file
        .meta("architecture")
        .ok_or_else(|| Error::format(path, "missing architecture"))?
        .parse()
        .map_err(|_| Error::format(path, "bad architecture"))?;
    let config = NetworkConfig {
        input_dim: file.meta_parse(path, "input_dim")?,
        hidden_dim: file.meta_parse(path, "hidden_dim")?,
        num_hidden_layers: file.meta_parse(path, "num_hidden_layers")?,
        output_dim: file.meta_parse(path, "output_dim")?,
        architecture,
    };
    config
        .validate()
        .map_err(|e| Error::format(path, e.to_string()))?;
    let mut params = Parameters::zeros(&config);
    let expected: Vec<(TensorId, usize, usize)> =
        params.tensors().iter().map(|t| (t.id, t.rows, t.cols)).collect();
    if file.tensors.len() != expected.len() {
        return Err(Error::format(
            path,
            format!("expected {} tensors, found {}", expected.len(), file.tensors.len()),
        ));
    }
    for (id, rows, cols) in expected {
        let name = id.name();
        let t = file
            .get(&name)
            .ok_or_else(|| Error::format(path, format!("missing tensor {name}")))?;
        if t.shape() != (rows, cols) {
            return Err(Error::format(path, format!("tensor {name} has wrong shape")));
        }
        params
            .tensor_mut(id)
            .expect("tensor exists for config")
            .copy_from_slice(t.as_slice());
    }
    Network::from_parameters(config, params)
}

pub fn save_model(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    model_to_file(net, &[]).save(path)
}

/// Extra metadata (for instance the splicing context) travels with the model.
pub fn save_model_with_metadata(
    net: &Network,
    metadata: &[(&str, String)],
    path: impl AsRef<Path>,
) -> Result<()> {
    model_to_file(net, metadata).save(path)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Network> {
    load_model_with_metadata(path).map(|(net, _)| net)
}

pub fn load_model_with_metadata(
    path: impl AsRef<Path>,
) -> Result<(Network, BTreeMap<String, String>)> {
    let path = path.as_ref();
    let file = TensorFile::load(path)?;
    let net = model_from_file(&file, path)?;
    Ok((net, file.metadata))
}
