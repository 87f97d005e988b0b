//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "SEMGANCK"
//! version    u32
//! header_len u64
//! header     JSON (dtype, networks with tensor names/shapes/counts, metadata)
//! payload    tensor values in header order, little-endian
//! digest     32 bytes SHA-256 of the payload
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::models::{Discriminator, Generator, ModelParams, NetworkSpec, GENERATOR_INPUT_ORDER};
use crate::nn::{ParamStore, Scalar};

pub const MAGIC: &[u8; 8] = b"SEMGANCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    trainable: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct NetworkRecord {
    name: String,
    spec: NetworkSpec,
    tensors: Vec<TensorRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    dtype: String,
    generator_input_order: String,
    networks: Vec<NetworkRecord>,
    #[serde(default)]
    meta: serde_json::Value,
}

/// Named networks plus free-form metadata, as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub networks: Vec<(String, ModelParams<T>)>,
    pub meta: serde_json::Value,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn get(&self, name: &str) -> Option<&ModelParams<T>> {
        self.networks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, p)| p)
    }

    fn take(&mut self, name: &str) -> Result<ModelParams<T>> {
        let i = self
            .networks
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::Corrupt(format!("checkpoint has no network named {name:?}")))?;
        Ok(self.networks.remove(i).1)
    }
}

pub fn save_checkpoint<T: Scalar>(
    path: &Path,
    networks: &[(&str, &ModelParams<T>)],
    meta: serde_json::Value,
) -> Result<()> {
    let header = Header {
        dtype: T::DTYPE.to_string(),
        generator_input_order: GENERATOR_INPUT_ORDER.to_string(),
        networks: networks
            .iter()
            .map(|(name, p)| NetworkRecord {
                name: name.to_string(),
                spec: p.spec,
                tensors: p
                    .store
                    .entries()
                    .iter()
                    .map(|e| TensorRecord {
                        name: e.name.clone(),
                        shape: e.shape.clone(),
                        trainable: e.trainable,
                    })
                    .collect(),
            })
            .collect(),
        meta,
    };
    let header = serde_json::to_vec(&header).map_err(|e| Error::Corrupt(e.to_string()))?;
    let mut payload = Vec::new();
    for (_, p) in networks {
        for e in p.store.entries() {
            for &v in &e.data {
                v.write_le(&mut payload);
            }
        }
    }
    let mut out = Vec::with_capacity(20 + header.len() + payload.len() + 32);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&payload);
    out.extend_from_slice(&Sha256::digest(&payload));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn take<'a>(bytes: &mut &'a [u8], n: usize, what: &str) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Corrupt(format!(
            "file truncated while reading {what}"
        )));
    }
    let (head, tail) = bytes.split_at(n);
    *bytes = tail;
    Ok(head)
}

/// Read a checkpoint, converting stored values to `T` if the dtypes differ.
pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut rest = bytes.as_slice();
    if take(&mut rest, 8, "magic")? != MAGIC {
        return Err(Error::Corrupt("not a checkpoint file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(take(&mut rest, 4, "version")?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let hlen = u64::from_le_bytes(take(&mut rest, 8, "header length")?.try_into().unwrap());
    let header_bytes = take(
        &mut rest,
        usize::try_from(hlen).unwrap_or(usize::MAX),
        "header",
    )?;
    let header: Header = serde_json::from_slice(header_bytes)
        .map_err(|e| Error::Corrupt(format!("unreadable header: {e}")))?;
    if header.generator_input_order != GENERATOR_INPUT_ORDER {
        return Err(Error::Corrupt(format!(
            "generator input order {:?} is not supported",
            header.generator_input_order
        )));
    }
    let elem = match header.dtype.as_str() {
        "f32" => 4,
        "f64" => 8,
        other => return Err(Error::Corrupt(format!("unknown dtype {other:?}"))),
    };
    let total: usize = header
        .networks
        .iter()
        .flat_map(|n| &n.tensors)
        .map(|t| t.shape.iter().product::<usize>())
        .sum();
    let payload = take(&mut rest, total * elem, "tensor payload")?;
    let digest = take(&mut rest, 32, "digest")?;
    if !rest.is_empty() {
        return Err(Error::Corrupt("trailing bytes after digest".into()));
    }
    if Sha256::digest(payload).as_slice() != digest {
        return Err(Error::Corrupt("payload digest mismatch".into()));
    }
    let mut cursor = payload;
    let read_value = |cursor: &mut &[u8]| -> T {
        let (head, tail) = cursor.split_at(elem);
        *cursor = tail;
        if elem == 4 {
            T::lit(f32::read_le(head) as f64)
        } else {
            T::lit(f64::read_le(head))
        }
    };
    let mut networks = Vec::new();
    for net in header.networks {
        let mut store = ParamStore::new();
        for t in net.tensors {
            let count = t.shape.iter().product();
            let data = (0..count).map(|_| read_value(&mut cursor)).collect();
            if store.find(&t.name).is_some() {
                return Err(Error::Corrupt(format!("duplicate tensor {:?}", t.name)));
            }
            store.push(t.name, t.shape, data, t.trainable);
        }
        networks.push((
            net.name,
            ModelParams {
                spec: net.spec,
                store,
            },
        ));
    }
    Ok(Checkpoint {
        networks,
        meta: header.meta,
    })
}

/// Save a single network.
pub fn save_params<T: Scalar>(params: &ModelParams<T>, path: &Path) -> Result<()> {
    let name = match params.spec {
        NetworkSpec::Generator(_) => "generator",
        NetworkSpec::Discriminator(_) => "discriminator",
    };
    save_checkpoint(path, &[(name, params)], serde_json::Value::Null)
}

/// Load the first network of a checkpoint.
pub fn load_params<T: Scalar>(path: &Path) -> Result<ModelParams<T>> {
    let mut ck = load_checkpoint::<T>(path)?;
    if ck.networks.is_empty() {
        return Err(Error::Corrupt("checkpoint holds no networks".into()));
    }
    Ok(ck.networks.remove(0).1)
}

/// Both networks of a trained model plus training metadata.
#[derive(Debug, Clone)]
pub struct GanCheckpoint<T = f32> {
    pub generator: Generator<T>,
    pub discriminator: Discriminator<T>,
    pub meta: serde_json::Value,
}

pub fn save_gan<T: Scalar>(
    path: &Path,
    g: &Generator<T>,
    d: &Discriminator<T>,
    meta: serde_json::Value,
) -> Result<()> {
    save_checkpoint(
        path,
        &[("generator", &g.params()), ("discriminator", &d.params())],
        meta,
    )
}

pub fn load_gan<T: Scalar>(path: &Path) -> Result<GanCheckpoint<T>> {
    let mut ck = load_checkpoint::<T>(path)?;
    let generator = Generator::from_params(ck.take("generator")?)?;
    let discriminator = Discriminator::from_params(ck.take("discriminator")?)?;
    Ok(GanCheckpoint {
        generator,
        discriminator,
        meta: ck.meta,
    })
}

/// Load only the generator of a checkpoint.
pub fn load_generator<T: Scalar>(path: &Path) -> Result<Generator<T>> {
    let mut ck = load_checkpoint::<T>(path)?;
    Generator::from_params(ck.take("generator")?)
}
